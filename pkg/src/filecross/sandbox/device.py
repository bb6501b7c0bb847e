"""Device backends: the abstract interface and the deterministic sandbox."""

from __future__ import annotations

import abc
import enum
import hashlib
import heapq
import itertools
import logging
import posixpath
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence
from urllib.parse import urlsplit

from ..forge import Context, DeleteAndSymlink, FetchAndSend, FetchKind, ImageBeacon, Payload
from ..manifest import ACTION_VIEW, ExposureClass, classify_exposure
from .policy import SopPolicy, effective_policy
from .profile import EXTERNAL_INTENT, RENDERABLE_EXTENSIONS, USER_BAR, BrowserProfile
from .vfs import File, Link, VirtualFS, Zone, ZoneEscape, split_device_path

log = logging.getLogger(__name__)

DOWNLOAD_DIR = "Download"

BeaconSink = Callable[[str], None]


def http_beacon_sink(url: str, timeout: float = 5.0) -> None:
    """Deliver a beacon as a real HTTP GET, the way an <img> load would."""
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            resp.read()
    except OSError as exc:
        # a dead receiver loses the beacon, exactly like on a phone
        log.warning("beacon to %s failed: %s", url.split("?")[0], exc)


class DeliveryError(LookupError):
    """The intent names a package or component that does not exist."""


class Delivery(str, enum.Enum):
    LOADED = "loaded"
    VISITED = "visited"  # http(s) browsing request
    IGNORED = "ignored"  # exposed component that does not render browsing requests
    REJECTED_NOT_EXPOSED = "rejected:not_exposed"
    REJECTED_FILE_BLOCKED = "rejected:file_blocked"
    REJECTED_UNSUPPORTED_SCHEME = "rejected:unsupported_scheme"

    @property
    def rejected(self) -> bool:
        return self.value.startswith("rejected")


@dataclass
class ExecutionTrace:
    url: str
    point: str
    events: list[tuple[int, str, str]] = field(default_factory=list)
    beacons: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    downloaded: Optional[str] = None

    def note(self, at: int, kind: str, detail: str = "") -> None:
        self.events.append((at, kind, detail))
        if kind == "error":
            self.errors.append(detail)


@dataclass
class DeliveryResult:
    status: Delivery
    trace: Optional[ExecutionTrace] = None


class DeviceBackend(abc.ABC):
    """What the commander needs from a phone, real or simulated."""

    device_version: str

    @abc.abstractmethod
    def install(self, profile: BrowserProfile) -> None: ...

    @abc.abstractmethod
    def send_intent(self, pkg: str, component: str, action: str, data_url: str) -> DeliveryResult: ...

    @abc.abstractmethod
    def write_file(self, zone: Zone, path: str, data: bytes) -> None: ...

    @abc.abstractmethod
    def read_file(self, zone: Zone, path: str) -> bytes: ...

    @abc.abstractmethod
    def read_dir(self, zone: Zone, prefix: str = "") -> list[str]: ...

    @abc.abstractmethod
    def delete_file(self, zone: Zone, path: str) -> None: ...

    @abc.abstractmethod
    def create_symlink(self, zone: Zone, link_path: str, target_path: str) -> None: ...

    @abc.abstractmethod
    def advance_time(self, ms: int) -> None: ...

    def list_downloads(self, pkg: str) -> list[str]:
        return self.read_dir(Zone.sdcard(pkg), DOWNLOAD_DIR)

    def stage_payload(self, pkg: str, payload: Payload) -> None:
        if payload.staging is None:
            return
        zone = Zone(payload.staging.zone, pkg)
        self.write_file(zone, payload.staging.path, payload.html_text.encode("utf-8"))

    def register_remote(self, url: str, body: bytes) -> None:
        """Make ``url`` answer with ``body``; only meaningful for simulated backends."""


class AdbBackend(DeviceBackend):
    """Placeholder for a rooted phone driven over ADB; not available in this build."""

    def __init__(self, serial: str, device_version: str):
        self.serial = serial
        self.device_version = device_version

    def _unsupported(self, *args, **kwargs):
        raise NotImplementedError("real-device backend is not supported in this build")

    install = send_intent = write_file = read_file = read_dir = _unsupported
    delete_file = create_symlink = advance_time = _unsupported


def _cookie_line(pkg: str, host: str) -> str:
    sid = hashlib.sha256(f"{pkg}|{host}".encode()).hexdigest()[:16]
    return f"{host}\tTRUE\t/\tFALSE\tSID={sid}\n"


class SandboxDevice(DeviceBackend):
    """Single-threaded simulated phone with a virtual clock.

    Scripted payload actions are queued as timed events; nothing runs until
    :meth:`advance_time` moves the clock past them.
    """

    def __init__(self, device_version: str, state_dir: str | Path | None = None,
                 beacon_sink: BeaconSink = http_beacon_sink):
        self.device_version = device_version
        self.fs = VirtualFS(state_dir)
        self.beacon_sink = beacon_sink
        self.now = 0
        self._queue: list = []
        self._seq = itertools.count()
        self._profiles: dict[str, BrowserProfile] = {}
        self._visits: dict[str, dict[str, None]] = {}
        self._remote: dict[str, bytes] = {}

    # -- installation and harness access (rooted-phone model) --

    def install(self, profile: BrowserProfile) -> None:
        self._profiles[profile.package] = profile
        self._visits.setdefault(profile.package, {})

    def profile(self, pkg: str) -> BrowserProfile:
        try:
            return self._profiles[pkg]
        except KeyError:
            raise DeliveryError(f"package {pkg} is not installed") from None

    def policy(self, pkg: str) -> SopPolicy:
        return effective_policy(self.profile(pkg), self.device_version)

    def register_remote(self, url: str, body: bytes) -> None:
        self._remote[url] = bytes(body)

    def write_file(self, zone: Zone, path: str, data: bytes) -> None:
        self.fs.write(zone, path, data)

    def stage_payload(self, pkg: str, payload: Payload) -> None:
        if payload.staging is None:
            return
        self.fs.write(Zone(payload.staging.zone, pkg), payload.staging.path,
                      payload.html_text.encode("utf-8"), plan=payload)

    def read_file(self, zone: Zone, path: str) -> bytes:
        node = self.fs.lookup(zone, path)
        if not isinstance(node, File):
            raise FileNotFoundError(zone.device_path(path))
        return node.data

    def read_dir(self, zone: Zone, prefix: str = "") -> list[str]:
        return self.fs.listdir(zone, prefix)

    def delete_file(self, zone: Zone, path: str) -> None:
        self.fs.delete(zone, path)

    def create_symlink(self, zone: Zone, link_path: str, target_path: str) -> None:
        self.fs.symlink(zone, link_path, target_path)

    def apply_followup(self, pkg: str, followup: DeleteAndSymlink) -> None:
        zone, rel = split_device_path(followup.doc_path, pkg)
        self.delete_file(zone, rel)
        self.create_symlink(zone, rel, followup.link_target)

    # -- virtual clock --

    def _schedule(self, at: int, fn: Callable[[], None]) -> None:
        heapq.heappush(self._queue, (at, next(self._seq), fn))

    def advance_time(self, ms: int) -> None:
        if ms < 0:
            raise ValueError("time only moves forward")
        until = self.now + ms
        while self._queue and self._queue[0][0] <= until:
            at, _, fn = heapq.heappop(self._queue)
            self.now = at
            fn()
        self.now = until

    # -- browser behaviour --

    def send_intent(self, pkg: str, component: str, action: str, data_url: str) -> DeliveryResult:
        profile = self.profile(pkg)
        comp = profile.manifest.component(component)
        if comp is None:
            raise DeliveryError(f"{pkg} has no component {component}")
        if classify_exposure(comp) is ExposureClass.NOT_EXPOSED:
            return DeliveryResult(Delivery.REJECTED_NOT_EXPOSED)
        scheme = urlsplit(data_url).scheme.lower()
        if scheme == "file":
            if (not profile.handles_external_file_intents
                    or profile.patch_modes.block_external_file_urls):
                return DeliveryResult(Delivery.REJECTED_FILE_BLOCKED)
            if not profile.file_scheme_supported:
                return DeliveryResult(Delivery.REJECTED_UNSUPPORTED_SCHEME)
        elif scheme not in ("http", "https"):
            return DeliveryResult(Delivery.REJECTED_UNSUPPORTED_SCHEME)
        if action != ACTION_VIEW or comp.renders_as != profile.renderer:
            return DeliveryResult(Delivery.IGNORED)
        if scheme == "file":
            return DeliveryResult(Delivery.LOADED, self.load_document(pkg, data_url, EXTERNAL_INTENT))
        self._visit(pkg, data_url)
        return DeliveryResult(Delivery.VISITED)

    def user_bar_load(self, pkg: str, url: str) -> ExecutionTrace:
        """A URL typed into the browser's address bar."""
        return self.load_document(pkg, url, USER_BAR)

    def _visit(self, pkg: str, url: str) -> None:
        visits = self._visits[pkg]
        visits[url] = None
        hosts = list(dict.fromkeys(urlsplit(u).hostname or u for u in visits))
        zone = Zone.private(pkg)
        self.fs.write(zone, "app_data/Cookies", "".join(_cookie_line(pkg, h) for h in hosts).encode())
        self.fs.write(zone, "databases/history.db", "".join(f"{u}\n" for u in visits).encode())
        self.fs.write(zone, "files/bookmarks.db",
                      "".join(f"bookmark\t{u}\n" for u in visits).encode())

    def _resolve(self, pkg: str, device_path: str, policy: SopPolicy,
                 follow: bool) -> tuple[Zone, str, object]:
        zone, rel = split_device_path(device_path, pkg)
        node = self.fs.lookup(zone, rel)
        seen = 0
        while isinstance(node, Link) and follow and policy.symlink_flaw_present:
            seen += 1
            if seen > 8:
                raise ZoneEscape(f"symlink loop at {device_path}")
            zone, rel = split_device_path(node.target, pkg)
            node = self.fs.lookup(zone, rel)
        return zone, rel, node

    def _readable(self, pkg: str, zone: Zone) -> bool:
        # the browser's own private zone needs the file-access capability;
        # other apps' zones are never readable
        if zone.kind != "private":
            return True
        return zone.pkg == pkg and self.profile(pkg).private_zone_file_access

    def load_document(self, pkg: str, url: str, point: str = EXTERNAL_INTENT) -> ExecutionTrace:
        profile = self.profile(pkg)
        policy = self.policy(pkg)
        trace = ExecutionTrace(url, point)
        parts = urlsplit(url)
        if parts.scheme != "file":
            trace.note(self.now, "error", f"not a file URL: {url}")
            return trace
        try:
            zone, rel, node = self._resolve(pkg, parts.path, policy, follow=True)
        except ZoneEscape as exc:
            trace.note(self.now, "error", str(exc))
            return trace
        if not self._readable(pkg, zone):
            trace.note(self.now, "denied", "private zone")
            return trace
        if isinstance(node, Link):
            trace.note(self.now, "error", f"symlink not followed: {parts.path}")
            return trace
        if node is None:
            trace.note(self.now, "error", f"not found: {parts.path}")
            return trace

        ext = posixpath.splitext(rel)[1].lstrip(".").lower()
        if zone.kind == "private" and ext not in RENDERABLE_EXTENSIONS:
            if profile.patch_modes.disable_private_unrenderable:
                trace.note(self.now, "blocked", "unrenderable private file")
            elif profile.auto_download_unrenderable:
                dest = f"{DOWNLOAD_DIR}/{posixpath.basename(rel)}"
                self.fs.write(Zone.sdcard(pkg), dest, node.data)
                trace.downloaded = dest
                trace.note(self.now, "download", dest)
            else:
                trace.note(self.now, "rendered", "displayed as text")
            return trace

        trace.note(self.now, "rendered", rel)
        payload = node.plan
        if payload is None:
            return trace
        scripts = profile.scripts_enabled(point)
        trace.note(self.now, "scripts", "on" if scripts else "off")
        for step in payload.plan:
            if isinstance(step, ImageBeacon):
                if (step.context is Context.HTML
                        or (step.context is Context.SCRIPT and scripts)
                        or (step.context is Context.NOSCRIPT and not scripts)):
                    self._emit(trace, step.target.url(step.con))
            elif isinstance(step, FetchAndSend) and scripts:
                self._schedule(self.now + step.delay_ms,
                               lambda s=step: self._run_fetch(pkg, zone, rel, s, trace))
        return trace

    def _run_fetch(self, pkg: str, doc_zone: Zone, doc_rel: str, step: FetchAndSend,
                   trace: ExecutionTrace) -> None:
        policy = self.policy(pkg)
        if step.kind is FetchKind.CROSS_PROTOCOL:
            if not policy.allow_file_to_http:
                trace.note(self.now, "sop", f"blocked file->http read of {step.url}")
                return
            body = self._remote.get(step.url)
            if body is None:
                trace.note(self.now, "error", f"no remote fixture for {step.url}")
                return
            self._emit(trace, step.target.url(body))
            return

        if step.kind is FetchKind.SELF_DOCUMENT:
            device_path = doc_zone.device_path(doc_rel)
        else:
            if not policy.allow_file_to_file:
                trace.note(self.now, "sop", f"blocked file->file read of {step.url}")
                return
            device_path = urlsplit(step.url).path
        try:
            zone, rel, node = self._resolve(pkg, device_path, policy, follow=True)
        except ZoneEscape as exc:
            trace.note(self.now, "error", str(exc))
            return
        if isinstance(node, Link):
            trace.note(self.now, "error", f"symlink not followed: {device_path}")
            return
        if node is None:
            trace.note(self.now, "error", f"not found: {device_path}")
            return
        if not self._readable(pkg, zone):
            trace.note(self.now, "denied", f"private zone read of {device_path}")
            return
        self._emit(trace, step.target.url(node.data))

    def _emit(self, trace: ExecutionTrace, url: str) -> None:
        trace.beacons.append(url)
        trace.note(self.now, "beacon", url.split("&con=")[0])
        self.beacon_sink(url)


DEFAULT_KEYWORDS = ("cookie", "password", "bookmark")
DEFAULT_EXTENSIONS = (".sqlite", ".db")


def find_targets(backend: DeviceBackend, pkg: str,
                 keywords: Sequence[str] = DEFAULT_KEYWORDS,
                 extensions: Sequence[str] = DEFAULT_EXTENSIONS) -> list[str]:
    """Sensitive-looking files in the private zone, best candidates first."""
    ranked = []
    for path in backend.read_dir(Zone.private(pkg)):
        base = posixpath.basename(path).lower()
        rank = next((i for i, k in enumerate(keywords) if k.lower() in base), None)
        if rank is None and any(base.endswith(e.lower()) for e in extensions):
            rank = len(keywords)
        if rank is not None:
            ranked.append((rank, path))
    return [p for _, p in sorted(ranked)]


def warm_up(backend: DeviceBackend, pkg: str, component: str, sites: Iterable[str]) -> list[str]:
    """Browse ``sites`` through ``component``; returns the private files it produced."""
    for site in sites:
        backend.send_intent(pkg, component, ACTION_VIEW, site)
    return backend.read_dir(Zone.private(pkg))
