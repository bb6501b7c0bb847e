"""In-memory device filesystem with an optional on-disk mirror.

Reads are always served from memory, so the sandbox never touches host
paths outside its state directory. The mirror exists for inspection and is
laid out as ``<state_dir>/<pkg>/{private,sdcard}/``.
"""

from __future__ import annotations

import os
import posixpath
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

from ..wire import PRIVATE_ROOT, SDCARD_ROOT

PRIVATE = "private"
SDCARD = "sdcard"


class ZoneEscape(PermissionError):
    pass


@dataclass(frozen=True)
class Zone:
    kind: str
    pkg: str

    def __post_init__(self):
        if self.kind not in (PRIVATE, SDCARD):
            raise ValueError(f"unknown zone kind {self.kind!r}")
        if not self.pkg or "/" in self.pkg or self.pkg in (".", ".."):
            raise ValueError(f"bad package name {self.pkg!r}")

    @classmethod
    def private(cls, pkg: str) -> Zone:
        return cls(PRIVATE, pkg)

    @classmethod
    def sdcard(cls, pkg: str) -> Zone:
        # sdcard is partitioned per tested package so browser runs stay independent
        return cls(SDCARD, pkg)

    def device_path(self, rel: str) -> str:
        root = f"{PRIVATE_ROOT}{self.pkg}/" if self.kind == PRIVATE else SDCARD_ROOT
        return root + rel


@dataclass
class File:
    data: bytes
    plan: Any = None  # structured payload the sandbox interprets


@dataclass(frozen=True)
class Link:
    target: str  # device path


Node = Union[File, Link]


def normalize(rel: str) -> str:
    norm = posixpath.normpath(rel.lstrip("/")) if rel else ""
    if norm in ("", "."):
        return ""
    if norm == ".." or norm.startswith("../"):
        raise ZoneEscape(f"path escapes its zone: {rel!r}")
    return norm


def split_device_path(device_path: str, context_pkg: str) -> tuple[Zone, str]:
    """Map ``/data/data/<pkg>/...`` or ``/sdcard/...`` onto a zone and relative path."""
    norm = posixpath.normpath(device_path)
    if norm.startswith(PRIVATE_ROOT):
        pkg, _, rest = norm[len(PRIVATE_ROOT):].partition("/")
        return Zone.private(pkg), normalize(rest)
    if norm.startswith(SDCARD_ROOT) or norm == SDCARD_ROOT.rstrip("/"):
        return Zone.sdcard(context_pkg), normalize(norm[len(SDCARD_ROOT):])
    raise ZoneEscape(f"path outside the device zones: {device_path!r}")


class VirtualFS:
    def __init__(self, state_dir: str | Path | None = None):
        self._zones: dict[Zone, dict[str, Node]] = {}
        self.state_dir = Path(state_dir) if state_dir is not None else None

    def _host(self, zone: Zone, rel: str) -> Path:
        assert self.state_dir is not None
        return self.state_dir / zone.pkg / zone.kind / rel

    def _mirror_remove(self, zone: Zone, rel: str) -> None:
        if self.state_dir is None:
            return
        host = self._host(zone, rel)
        if host.is_symlink() or host.is_file():
            host.unlink()
        elif host.is_dir():
            shutil.rmtree(host)

    def write(self, zone: Zone, rel: str, data: bytes, plan: Any = None) -> None:
        rel = normalize(rel)
        self._zones.setdefault(zone, {})[rel] = File(bytes(data), plan)
        if self.state_dir is not None:
            host = self._host(zone, rel)
            host.parent.mkdir(parents=True, exist_ok=True)
            self._mirror_remove(zone, rel)
            host.write_bytes(data)

    def symlink(self, zone: Zone, rel: str, target: str) -> None:
        rel = normalize(rel)
        nodes = self._zones.setdefault(zone, {})
        if rel in nodes:
            raise FileExistsError(zone.device_path(rel))
        nodes[rel] = Link(target)
        if self.state_dir is not None:
            host = self._host(zone, rel)
            host.parent.mkdir(parents=True, exist_ok=True)
            try:
                tz, trel = split_device_path(target, zone.pkg)
                os.symlink(os.path.relpath(self._host(tz, trel), host.parent), host)
            except (ZoneEscape, ValueError):
                # unreachable target: record the raw device path, never followed on host
                host.with_name(host.name + ".symlink").write_text(target)

    def delete(self, zone: Zone, rel: str) -> None:
        rel = normalize(rel)
        if self._zones.get(zone, {}).pop(rel, None) is None:
            raise FileNotFoundError(zone.device_path(rel))
        self._mirror_remove(zone, rel)

    def lookup(self, zone: Zone, rel: str) -> Optional[Node]:
        return self._zones.get(zone, {}).get(normalize(rel))

    def listdir(self, zone: Zone, prefix: str = "") -> list[str]:
        prefix = normalize(prefix)
        return sorted(rel for rel in self._zones.get(zone, {})
                      if not prefix or rel == prefix or rel.startswith(prefix + "/"))

    def zone_empty(self, zone: Zone) -> bool:
        return not self._zones.get(zone)
