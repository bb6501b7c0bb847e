"""Decoded AndroidManifest.xml ingestion.

Only the browsing-relevant subset is modelled: activities, activity aliases
and their intent filters. Everything else in the document is ignored.
"""

from __future__ import annotations

import enum
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import quoteattr

ANDROID_NS = "http://schemas.android.com/apk/res/android"

ACTION_VIEW = "android.intent.action.VIEW"
ACTION_MAIN = "android.intent.action.MAIN"
CATEGORY_BROWSABLE = "android.intent.category.BROWSABLE"
CATEGORY_LAUNCHER = "android.intent.category.LAUNCHER"
CATEGORY_DEFAULT = "android.intent.category.DEFAULT"

NATIVE_LOADURL = re.compile(r"native.*loadUrl")


class ManifestError(ValueError):
    """Raised for manifests that cannot be turned into a model."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ComponentKind(str, enum.Enum):
    ACTIVITY = "activity"
    ACTIVITY_ALIAS = "activity-alias"


class ExposureClass(str, enum.Enum):
    INTENTIONAL = "intentional"
    UNINTENTIONAL = "unintentional"
    NOT_EXPOSED = "not_exposed"


@dataclass(frozen=True)
class IntentFilter:
    actions: frozenset[str] = frozenset()
    categories: frozenset[str] = frozenset()
    schemes: frozenset[str] = frozenset()

    @classmethod
    def of(cls, actions: Iterable[str] = (), categories: Iterable[str] = (),
           schemes: Iterable[str] = ()) -> IntentFilter:
        return cls(frozenset(actions), frozenset(categories), frozenset(schemes))

    @property
    def view_browsable(self) -> bool:
        return ACTION_VIEW in self.actions and CATEGORY_BROWSABLE in self.categories

    @property
    def main_launcher(self) -> bool:
        return ACTION_MAIN in self.actions and CATEGORY_LAUNCHER in self.categories


@dataclass(frozen=True)
class ManifestComponent:
    name: str
    kind: ComponentKind = ComponentKind.ACTIVITY
    exported: Optional[bool] = None
    filters: tuple[IntentFilter, ...] = ()
    target: Optional[str] = None  # resolved targetActivity, aliases only

    @property
    def renders_as(self) -> str:
        """The activity that actually handles intents sent to this component."""
        return self.target or self.name


@dataclass(frozen=True)
class ManifestDoc:
    package_name: str
    components: tuple[ManifestComponent, ...] = ()
    native_libs: tuple[str, ...] = ()
    dex_strings: tuple[str, ...] = ()

    def component(self, name: str) -> Optional[ManifestComponent]:
        for c in self.components:
            if c.name == name:
                return c
        return None


@dataclass(frozen=True)
class EngineGuess:
    custom: bool
    evidence: Optional[str] = None

    def __str__(self):
        return f"custom({self.evidence})" if self.custom else "default"


def resolve_class_name(package: str, name: str) -> str:
    if name.startswith("."):
        return package + name
    if "." not in name:
        return f"{package}.{name}"
    return name


def _attr(elem: ET.Element, local: str) -> Optional[str]:
    value = elem.get(f"{{{ANDROID_NS}}}{local}")
    if value is None:
        value = elem.get(local)
    return value


def _tristate(value: Optional[str], line: Optional[int] = None) -> Optional[bool]:
    if value is None:
        return None
    lowered = value.strip().lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    raise ManifestError(f"android:exported must be true or false, got {value!r}", line)


_MANIFEST_OPEN = re.compile(r"<manifest\b")


def _ensure_android_ns(text: str) -> str:
    # decoded manifests frequently drop the xmlns declaration; inserting it
    # here keeps line numbers unchanged
    if "xmlns:android" in text:
        return text
    return _MANIFEST_OPEN.sub(f'<manifest xmlns:android="{ANDROID_NS}"', text, count=1)


def _parse_filter(elem: ET.Element) -> IntentFilter:
    actions, categories, schemes = set(), set(), set()
    for child in elem:
        if child.tag == "action":
            name = _attr(child, "name")
            if name:
                actions.add(name)
        elif child.tag == "category":
            name = _attr(child, "name")
            if name:
                categories.add(name)
        elif child.tag == "data":
            scheme = _attr(child, "scheme")
            if scheme:
                schemes.add(scheme)
    return IntentFilter.of(actions, categories, schemes)


def parse_manifest(text: str, native_libs: Sequence[str] = (),
                   dex_strings: Sequence[str] = ()) -> ManifestDoc:
    try:
        root = ET.fromstring(_ensure_android_ns(text))
    except ET.ParseError as exc:
        line = exc.position[0] if exc.position else None
        raise ManifestError(f"malformed XML: {exc.msg if hasattr(exc, 'msg') else exc}",
                            line) from None
    if root.tag != "manifest":
        raise ManifestError(f"root element must be <manifest>, got <{root.tag}>")
    package = root.get("package")
    if not package:
        raise ManifestError("missing package attribute on <manifest>")

    components = []
    seen = set()
    for app in root.iter("application"):
        for elem in app:
            if elem.tag == "activity":
                kind = ComponentKind.ACTIVITY
            elif elem.tag == "activity-alias":
                kind = ComponentKind.ACTIVITY_ALIAS
            else:
                continue
            raw_name = _attr(elem, "name")
            if not raw_name:
                raise ManifestError(f"<{elem.tag}> without android:name")
            name = resolve_class_name(package, raw_name)
            if name in seen:
                raise ManifestError(f"duplicate component {name}")
            seen.add(name)
            target = None
            if kind is ComponentKind.ACTIVITY_ALIAS:
                raw_target = _attr(elem, "targetActivity")
                if not raw_target:
                    raise ManifestError(f"activity-alias {name} lacks android:targetActivity")
                target = resolve_class_name(package, raw_target)
            filters = tuple(_parse_filter(f) for f in elem if f.tag == "intent-filter")
            components.append(ManifestComponent(
                name=name, kind=kind, exported=_tristate(_attr(elem, "exported")),
                filters=filters, target=target))

    return ManifestDoc(package_name=package, components=tuple(components),
                       native_libs=tuple(native_libs), dex_strings=tuple(dex_strings))


def load_manifest(path: str | Path, **kwargs) -> ManifestDoc:
    return parse_manifest(Path(path).read_text(encoding="utf-8"), **kwargs)


def to_xml(doc: ManifestDoc) -> str:
    """Serialize back to the manifest grammar. Set members are emitted sorted."""
    out = [f'<manifest xmlns:android="{ANDROID_NS}" package={quoteattr(doc.package_name)}>',
           "  <application>"]
    for comp in doc.components:
        attrs = [f"android:name={quoteattr(comp.name)}"]
        if comp.kind is ComponentKind.ACTIVITY_ALIAS:
            attrs.append(f"android:targetActivity={quoteattr(comp.target or '')}")
        if comp.exported is not None:
            attrs.append(f'android:exported="{str(comp.exported).lower()}"')
        out.append(f"    <{comp.kind.value} {' '.join(attrs)}>")
        for flt in comp.filters:
            out.append("      <intent-filter>")
            out.extend(f"        <action android:name={quoteattr(a)} />" for a in sorted(flt.actions))
            out.extend(f"        <category android:name={quoteattr(c)} />"
                       for c in sorted(flt.categories))
            out.extend(f"        <data android:scheme={quoteattr(s)} />" for s in sorted(flt.schemes))
            out.append("      </intent-filter>")
        out.append(f"    </{comp.kind.value}>")
    out.append("  </application>")
    out.append("</manifest>")
    return "\n".join(out) + "\n"


def load_engine_names(path: str | Path | None = None) -> tuple[str, ...]:
    """Read a known-engine list: one library file name per line, # comments."""
    if path is None:
        text = resources.files("filecross").joinpath("data/engines.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    names = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            names.append(line)
    return tuple(names)


def infer_custom_engine(doc: ManifestDoc,
                        engine_names: Optional[Iterable[str]] = None) -> EngineGuess:
    for s in doc.dex_strings:
        if NATIVE_LOADURL.search(s):
            return EngineGuess(True, s)
    known = set(load_engine_names() if engine_names is None else engine_names)
    for lib in doc.native_libs:
        if Path(lib).name in known:
            return EngineGuess(True, lib)
    return EngineGuess(False)


def classify_exposure(component: ManifestComponent) -> ExposureClass:
    # explicit exported="false" keeps the component private whatever its filters say
    if component.exported is False:
        return ExposureClass.NOT_EXPOSED
    if any(f.view_browsable for f in component.filters):
        return ExposureClass.INTENTIONAL
    if component.exported is True or any(f.main_launcher for f in component.filters):
        return ExposureClass.UNINTENTIONAL
    return ExposureClass.NOT_EXPOSED
