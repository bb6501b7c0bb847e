"""Behavioural model of one browser app, loaded from the profile corpus."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from ..ebi import select_ebi
from ..manifest import ManifestDoc, load_manifest

USER_BAR = "user_bar"
EXTERNAL_INTENT = "external_intent"
RENDERING_POINTS = (USER_BAR, EXTERNAL_INTENT)

RENDERABLE_EXTENSIONS = frozenset({"html", "htm", "txt"})


@dataclass(frozen=True)
class CustomEngine:
    allow_file_to_file: bool = False
    allow_file_to_http: bool = False
    symlink_flaw_present: bool = False


SYSTEM_DEFAULT = "system_default"
Engine = Union[str, CustomEngine]


@dataclass(frozen=True)
class RenderPoints:
    user_bar: bool = True
    external_intent: bool = True

    def enabled(self, point: str) -> bool:
        if point not in RENDERING_POINTS:
            raise ValueError(f"unknown rendering point {point!r}")
        return getattr(self, point)


@dataclass(frozen=True)
class PatchModes:
    disable_private_unrenderable: bool = False
    block_external_file_urls: bool = False
    disable_js_in_file: frozenset[str] = frozenset()

    def __post_init__(self):
        unknown = set(self.disable_js_in_file) - set(RENDERING_POINTS)
        if unknown:
            raise ValueError(f"unknown rendering points {sorted(unknown)}")

    def __bool__(self):
        return (self.disable_private_unrenderable or self.block_external_file_urls
                or bool(self.disable_js_in_file))


@dataclass(frozen=True)
class BrowserProfile:
    package: str
    manifest: ManifestDoc
    compiled_sdk: str = "4.3"
    engine: Engine = SYSTEM_DEFAULT
    handles_external_file_intents: bool = True
    file_scheme_supported: bool = True
    private_zone_file_access: bool = True
    js_in_file: RenderPoints = RenderPoints()
    uses_legacy_file_access_api: bool = False
    symlink_mitigated: bool = False
    auto_download_unrenderable: bool = False
    patch_modes: PatchModes = PatchModes()
    # component that really renders browsing requests; None means the top EBI
    browsing_interface: Optional[str] = None
    category: Optional[str] = None
    installs: Optional[str] = None
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.package != self.manifest.package_name:
            raise ValueError(f"profile package {self.package!r} does not match manifest "
                             f"{self.manifest.package_name!r}")

    @property
    def renderer(self) -> Optional[str]:
        if self.browsing_interface is not None:
            return self.browsing_interface
        sel = select_ebi(self.manifest)
        if sel.component_name is None:
            return None
        return self.manifest.component(sel.component_name).renders_as

    def scripts_enabled(self, point: str) -> bool:
        return self.js_in_file.enabled(point) and point not in self.patch_modes.disable_js_in_file


def _patch_modes(raw: list) -> PatchModes:
    kw: dict[str, Any] = {}
    for item in raw:
        if isinstance(item, str):
            if item == "disable_js_in_file":
                kw["disable_js_in_file"] = frozenset(RENDERING_POINTS)
            elif item in ("disable_private_unrenderable", "block_external_file_urls"):
                kw[item] = True
            else:
                raise ValueError(f"unknown patch mode {item!r}")
        elif isinstance(item, dict) and set(item) == {"disable_js_in_file"}:
            kw["disable_js_in_file"] = frozenset(item["disable_js_in_file"])
        else:
            raise ValueError(f"unknown patch mode {item!r}")
    return PatchModes(**kw)


def _patch_modes_json(p: PatchModes) -> list:
    out: list = []
    if p.disable_private_unrenderable:
        out.append("disable_private_unrenderable")
    if p.block_external_file_urls:
        out.append("block_external_file_urls")
    if p.disable_js_in_file:
        out.append({"disable_js_in_file": sorted(p.disable_js_in_file)})
    return out


_BOOL_FIELDS = ("handles_external_file_intents", "file_scheme_supported",
                "private_zone_file_access", "uses_legacy_file_access_api",
                "symlink_mitigated", "auto_download_unrenderable")
_KNOWN_KEYS = {"package", "manifest", "native_libs", "dex_strings", "compiled_sdk", "engine",
               "js_in_file", "patch_modes", "browsing_interface", "category", "installs",
               *_BOOL_FIELDS}


def profile_from_dict(data: dict, manifest: ManifestDoc) -> BrowserProfile:
    engine_raw = data.get("engine", SYSTEM_DEFAULT)
    if engine_raw == SYSTEM_DEFAULT:
        engine: Engine = SYSTEM_DEFAULT
    elif isinstance(engine_raw, dict) and set(engine_raw) == {"custom"}:
        engine = CustomEngine(**engine_raw["custom"])
    else:
        raise ValueError(f"bad engine entry {engine_raw!r}")
    js = data.get("js_in_file", {})
    if isinstance(js, bool):
        js = {USER_BAR: js, EXTERNAL_INTENT: js}
    kwargs = {k: bool(data[k]) for k in _BOOL_FIELDS if k in data}
    return BrowserProfile(
        package=data["package"],
        manifest=manifest,
        compiled_sdk=str(data.get("compiled_sdk", "4.3")),
        engine=engine,
        js_in_file=RenderPoints(**js),
        patch_modes=_patch_modes(data.get("patch_modes", [])),
        browsing_interface=data.get("browsing_interface"),
        category=data.get("category"),
        installs=data.get("installs"),
        extra={k: v for k, v in data.items() if k not in _KNOWN_KEYS},
        **kwargs,
    )


def load_profile(path: str | Path) -> BrowserProfile:
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    manifest = load_manifest(path.parent / data["manifest"],
                             native_libs=data.get("native_libs", ()),
                             dex_strings=data.get("dex_strings", ()))
    return profile_from_dict(data, manifest)


def load_corpus(corpus_dir: str | Path) -> list[BrowserProfile]:
    """Every ``*.json`` profile directly under ``corpus_dir``, sorted by package."""
    profiles = [load_profile(p) for p in sorted(Path(corpus_dir).glob("*.json"))]
    return sorted(profiles, key=lambda p: p.package)


def profile_to_dict(profile: BrowserProfile, manifest_path: str) -> dict:
    if isinstance(profile.engine, CustomEngine):
        engine: Any = {"custom": {
            "allow_file_to_file": profile.engine.allow_file_to_file,
            "allow_file_to_http": profile.engine.allow_file_to_http,
            "symlink_flaw_present": profile.engine.symlink_flaw_present}}
    else:
        engine = SYSTEM_DEFAULT
    out: dict[str, Any] = {
        "package": profile.package,
        "manifest": manifest_path,
        "native_libs": list(profile.manifest.native_libs),
        "dex_strings": list(profile.manifest.dex_strings),
        "compiled_sdk": profile.compiled_sdk,
        "engine": engine,
        "js_in_file": {USER_BAR: profile.js_in_file.user_bar,
                       EXTERNAL_INTENT: profile.js_in_file.external_intent},
        "patch_modes": _patch_modes_json(profile.patch_modes),
        "browsing_interface": profile.browsing_interface,
        "category": profile.category,
        "installs": profile.installs,
    }
    for k in _BOOL_FIELDS:
        out[k] = getattr(profile, k)
    out.update(profile.extra)
    return out
