"""Web receiver: collects beacons over HTTP and turns them into verdicts."""

from __future__ import annotations

import enum
import hashlib
import logging
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Iterable, Optional, Sequence
from urllib.parse import parse_qs, urlsplit

from .forge import SCRIPTED_ATTACKS, AttackId
from .wire import BEACON_PARAMS, BEACON_PATH, REQFLAG, MAX_CON_BYTES, con_bytes, decode, encode

log = logging.getLogger(__name__)

MAX_QUERY_BYTES = 16 * 1024
QUARANTINE = "quarantine"


class BeaconFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Beacon:
    pkg: str
    atk: int
    con: str
    ver: str
    kid: str
    received_at: float = 0.0
    source: str = ""
    truncated: bool = False

    def to_line(self) -> str:
        fields = (encode(self.pkg), str(self.atk), encode(self.con), encode(self.ver),
                  encode(self.kid), repr(self.received_at), encode(self.source),
                  "1" if self.truncated else "0")
        return "\t".join(fields)

    @classmethod
    def from_line(cls, line: str) -> Beacon:
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 8:
            raise BeaconFormatError(f"expected 8 tab-separated fields, got {len(parts)}")
        pkg, atk, con, ver, kid, at, source, trunc = parts
        return cls(decode(pkg), int(atk), decode(con), decode(ver), decode(kid),
                   float(at), decode(source), trunc == "1")

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.pkg, self.ver, self.atk)


def parse_beacon_query(query: str, *, received_at: float = 0.0, source: str = "") -> Beacon:
    try:
        params = parse_qs(query, keep_blank_values=True, strict_parsing=True,
                          encoding="utf-8", errors="surrogateescape")
    except ValueError as exc:
        raise BeaconFormatError(f"malformed query: {exc}") from None
    missing = [p for p in BEACON_PARAMS if p not in params]
    if missing:
        raise BeaconFormatError(f"missing parameters: {', '.join(missing)}")
    for p in BEACON_PARAMS:
        if len(params[p]) != 1:
            raise BeaconFormatError(f"parameter {p} given {len(params[p])} times")
    try:
        atk = int(params["atk"][0])
    except ValueError:
        raise BeaconFormatError(f"atk is not an integer: {params['atk'][0]!r}") from None
    if atk not in range(1, 8):
        raise BeaconFormatError(f"atk out of range: {atk}")
    pkg, con, ver, kid = (params[p][0] for p in ("pkg", "con", "ver", "kid"))
    if not pkg or not kid:
        raise BeaconFormatError("pkg and kid must be non-empty")
    return Beacon(pkg, atk, con, ver, kid, received_at, source,
                  params.get("trunc", ["0"])[0] == "1")


def digest(content: bytes) -> str:
    return hashlib.sha256(content).hexdigest()


@dataclass(frozen=True)
class ExpectedTarget:
    pkg: str
    ver: str
    attack: int
    digest: Optional[str] = None
    truncated_digest: Optional[str] = None

    @classmethod
    def for_content(cls, pkg: str, ver: str, attack: int,
                    content: Optional[bytes]) -> ExpectedTarget:
        if content is None:
            return cls(pkg, ver, attack)
        return cls(pkg, ver, attack, digest(content), digest(content[:MAX_CON_BYTES]))

    def matches(self, beacon: Beacon) -> bool:
        if self.digest is None:
            return True
        got = digest(con_bytes(beacon.con))
        return got == (self.truncated_digest if beacon.truncated else self.digest)


class ExperimentRegistry:
    """kid -> expected (pkg, version, attack) targets. Safe for concurrent use."""

    def __init__(self, kids: Iterable[str] = ()):
        self._lock = threading.Lock()
        self._expected: dict[str, dict[tuple[str, str, int], ExpectedTarget]] = {
            k: {} for k in kids}

    def activate(self, kid: str) -> None:
        with self._lock:
            self._expected.setdefault(kid, {})

    def is_active(self, kid: str) -> bool:
        with self._lock:
            return kid in self._expected

    def expect(self, kid: str, target: ExpectedTarget) -> None:
        with self._lock:
            self._expected.setdefault(kid, {})[(target.pkg, target.ver, target.attack)] = target

    def expected(self, kid: str) -> list[ExpectedTarget]:
        with self._lock:
            return list(self._expected.get(kid, {}).values())


class BeaconStore:
    """Append-only beacon log; one ``beacons-<kid>.log`` file per key id."""

    def __init__(self, log_dir: str | Path | None = None):
        self._lock = threading.Lock()
        self._beacons: list[Beacon] = []
        self._quarantine: list[Beacon] = []
        self.log_dir = Path(log_dir) if log_dir is not None else None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)

    def _append_file(self, name: str, beacon: Beacon) -> None:
        if self.log_dir is None:
            return
        with open(self.log_dir / f"beacons-{name}.log", "a", encoding="ascii") as fh:
            fh.write(beacon.to_line() + "\n")

    def add(self, beacon: Beacon, quarantined: bool = False) -> None:
        with self._lock:
            if quarantined:
                self._quarantine.append(beacon)
                self._append_file(QUARANTINE, beacon)
            else:
                self._beacons.append(beacon)
                self._append_file(beacon.kid, beacon)

    def __len__(self) -> int:
        with self._lock:
            return len(self._beacons)

    def snapshot(self, kid: Optional[str] = None, start: int = 0) -> tuple[Beacon, ...]:
        with self._lock:
            items = self._beacons[start:]
        if kid is not None:
            items = [b for b in items if b.kid == kid]
        return tuple(items)

    @property
    def quarantine(self) -> tuple[Beacon, ...]:
        with self._lock:
            return tuple(self._quarantine)


def load_beacon_log(path: str | Path) -> list[Beacon]:
    with open(path, encoding="ascii") as fh:
        return [Beacon.from_line(line) for line in fh if line.strip()]


class Receiver:
    """Request handling independent of the HTTP transport."""

    def __init__(self, registry: ExperimentRegistry, store: Optional[BeaconStore] = None):
        self.registry = registry
        self.store = store if store is not None else BeaconStore()

    def handle(self, target: str, source: str = "") -> tuple[int, bytes]:
        if len(target.encode("utf-8", "surrogateescape")) > MAX_QUERY_BYTES:
            return 414, b"uri too long"
        parts = urlsplit(target)
        if parts.path != BEACON_PATH:
            return 404, b"not found"
        try:
            beacon = parse_beacon_query(parts.query, received_at=time.time(), source=source)
        except BeaconFormatError as exc:
            log.debug("rejected beacon %r: %s", target, exc)
            return 400, b"bad request"
        # unknown kids still get 200 so the client cannot tell
        self.store.add(beacon, quarantined=not self.registry.is_active(beacon.kid))
        return 200, b"ok"

    def sink(self, url: str) -> None:
        """In-process beacon delivery, bypassing the socket."""
        parts = urlsplit(url)
        self.handle(f"{parts.path}?{parts.query}", "in-process")


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "ReceiverServer"

    def do_GET(self):
        status, body = self.server.receiver.handle(self.path, self.client_address[0])
        self.send_response(status)
        self.send_header("Content-Type", "text/plain")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, format, *args):
        log.debug("%s - %s", self.address_string(), format % args)


class ReceiverServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, bind: tuple[str, int], receiver: Receiver):
        super().__init__(bind, _Handler)
        self.receiver = receiver
        self._thread: Optional[threading.Thread] = None

    @property
    def base_url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def store(self) -> BeaconStore:
        return self.receiver.store

    def start(self) -> ReceiverServer:
        self._thread = threading.Thread(target=self.serve_forever, name="receiver", daemon=True)
        self._thread.start()
        return self

    def close(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parse_bind(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return (host or "127.0.0.1", int(port))


def serve(bind_address: str | tuple[str, int], registry: ExperimentRegistry,
          log_dir: str | Path | None = None) -> ReceiverServer:
    if isinstance(bind_address, str):
        bind_address = parse_bind(bind_address)
    server = ReceiverServer(bind_address, Receiver(registry, BeaconStore(log_dir)))
    return server.start()


# --- adjudication ---------------------------------------------------------


class Outcome(str, enum.Enum):
    NO_RESPONSE = "no_response"
    NOT_EXPOSED = "not_exposed"
    NOT_VULNERABLE = "not_vulnerable"
    VULNERABLE = "vulnerable"

    @property
    def rank(self) -> int:
        return _RANK[self]


_RANK = {Outcome.NO_RESPONSE: 0, Outcome.NOT_EXPOSED: 1, Outcome.NOT_VULNERABLE: 2,
         Outcome.VULNERABLE: 3}


@dataclass(frozen=True)
class AttackVerdict:
    pkg: str
    attack: int
    ver: str
    outcome: Outcome
    evidence: Optional[Beacon] = None
    download: Optional[str] = None  # A1 evidence: path under Download/
    note: str = ""

    def __post_init__(self):
        if self.outcome is Outcome.VULNERABLE and self.evidence is None and self.download is None:
            raise ValueError("a vulnerable verdict needs evidence")

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.pkg, self.ver, self.attack)


@dataclass(frozen=True)
class Capabilities:
    """Facts learned from the characterization probes for one (pkg, version)."""

    file_support_sd: bool = False
    file_support_private: bool = False
    js_in_file: Optional[bool] = None  # None: the probe never answered


@dataclass
class Adjudication:
    verdicts: list[AttackVerdict] = field(default_factory=list)
    capabilities: dict[tuple[str, str], Capabilities] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def probe_capabilities(beacons: Iterable[Beacon]) -> dict[tuple[str, str], Capabilities]:
    found: dict[tuple[str, str], dict[str, Optional[bool]]] = {}
    for b in beacons:
        facts = found.setdefault((b.pkg, b.ver), {})
        if b.atk == AttackId.PROBE_FILE_SD and b.con == REQFLAG:
            facts["file_support_sd"] = True
        elif b.atk == AttackId.PROBE_FILE_PRIVATE and b.con == REQFLAG:
            facts["file_support_private"] = True
        elif b.atk == AttackId.PROBE_JS:
            # a reqflag from the script branch beats the noscript fallback
            facts["js_in_file"] = facts.get("js_in_file") or b.con == REQFLAG
    return {k: Capabilities(**v) for k, v in found.items()}


def adjudicate(beacons: Sequence[Beacon], registry: ExperimentRegistry, kid: str,
               *, receipt_only: bool = False, deadline: Optional[float] = None) -> Adjudication:
    """Judge the scripted attacks registered under ``kid``.

    A missing attack beacon counts as ``not_vulnerable`` only when the JS
    probe proved scripts run for that browser and version; otherwise the
    script may simply never have executed and the cell stays ``no_response``.
    """
    mine = [b for b in beacons if b.kid == kid
            and (deadline is None or b.received_at <= deadline)]
    result = Adjudication(capabilities=probe_capabilities(mine))
    by_key: dict[tuple[str, str, int], list[Beacon]] = {}
    for b in mine:
        by_key.setdefault(b.key, []).append(b)

    for exp in sorted(registry.expected(kid), key=lambda e: (e.pkg, e.ver, e.attack)):
        if exp.attack not in SCRIPTED_ATTACKS:
            continue
        hits = by_key.get((exp.pkg, exp.ver, exp.attack), [])
        caps = result.capabilities.get((exp.pkg, exp.ver), Capabilities())
        good = [b for b in hits if b.con and (receipt_only or exp.matches(b))]
        if good:
            if len({b.con for b in hits}) > 1:
                result.warnings.append(
                    f"inconsistent beacons for {exp.pkg} A{exp.attack} on {exp.ver}")
            verdict = AttackVerdict(exp.pkg, exp.attack, exp.ver, Outcome.VULNERABLE, good[0])
        elif hits:
            verdict = AttackVerdict(exp.pkg, exp.attack, exp.ver, Outcome.NOT_VULNERABLE, hits[0],
                                    note="content mismatch" if any(b.con for b in hits) else "")
        elif caps.js_in_file:
            verdict = AttackVerdict(exp.pkg, exp.attack, exp.ver, Outcome.NOT_VULNERABLE,
                                    note="scripts run but no beacon")
        else:
            verdict = AttackVerdict(exp.pkg, exp.attack, exp.ver, Outcome.NO_RESPONSE)
        result.verdicts.append(verdict)
    return result
