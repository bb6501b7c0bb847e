"""Test orchestration: one worker per device version, repeated runs, union of runs."""

from __future__ import annotations

import hashlib
import json
import logging
import posixpath
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .ebi import FIRST_DECLARED, TieBreak, select_ebi
from .forge import ATTACKS, PROBES, AttackId, AttackSpec, Payload, forge
from .manifest import ACTION_VIEW, ExposureClass, classify_exposure, infer_custom_engine
from .receiver import (
    AttackVerdict,
    Beacon,
    BeaconStore,
    ExpectedTarget,
    ExperimentRegistry,
    Outcome,
    Receiver,
    adjudicate,
    serve,
)
from .sandbox import (
    DEFAULT_EXTENSIONS,
    DEFAULT_KEYWORDS,
    BrowserProfile,
    Delivery,
    DeviceBackend,
    SandboxDevice,
    Zone,
    find_targets,
    http_beacon_sink,
    load_corpus,
    warm_up,
)

log = logging.getLogger(__name__)

DEFAULT_VERSIONS = ("4.0", "4.3", "4.4")
DEFAULT_SITES = ("http://www.google.com/", "https://www.facebook.com/", "http://www.youtube.com/")
DEFAULT_REMOTE = "https://mail.google.com/mail/"
DEFAULT_REMOTE_BODY = b"<html><title>Inbox (3)</title><body>private mailbox contents</body></html>"


class MergeError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    corpus_dir: Optional[Path] = None
    device_versions: tuple[str, ...] = DEFAULT_VERSIONS
    timeout_ms: int = 12000
    runs: int = 3
    key_id: str = "keyid"
    receiver_base: str = "http://ourserver.com"
    bind: str = "127.0.0.1:0"
    tie_break: TieBreak = FIRST_DECLARED
    keywords: tuple[str, ...] = DEFAULT_KEYWORDS
    extensions: tuple[str, ...] = DEFAULT_EXTENSIONS
    warmup_sites: tuple[str, ...] = DEFAULT_SITES
    remote_origin: str = DEFAULT_REMOTE
    remote_body: bytes = DEFAULT_REMOTE_BODY
    receipt_only: bool = False
    parallel: bool = True
    retries: int = 1
    state_dir: Optional[Path] = None
    out_dir: Optional[Path] = None

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.device_versions:
            raise ValueError("at least one device version is required")
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")

    @property
    def config_id(self) -> str:
        ident = json.dumps([self.key_id, list(self.device_versions), self.timeout_ms,
                            repr(self.tie_break), list(self.keywords), list(self.extensions),
                            list(self.warmup_sites), self.remote_origin, self.receipt_only])
        return hashlib.sha256(ident.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class CapabilityFacts:
    ebi: Optional[str]
    ebi_score: int
    exposure_class: str
    engine_guess: str
    file_support_sd: bool = False
    file_support_private: bool = False
    js_in_file: Optional[bool] = None


@dataclass
class RunRecord:
    config_id: str
    versions: tuple[str, ...]
    run_index: Optional[int]  # None for a union
    kid: str = ""
    verdicts: dict[tuple[str, str, int], AttackVerdict] = field(default_factory=dict)
    capabilities: dict[tuple[str, str], CapabilityFacts] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def outcomes(self) -> dict[tuple[str, str, int], Outcome]:
        return {k: v.outcome for k, v in self.verdicts.items()}

    def summary(self) -> dict:
        """Comparable view that ignores wall-clock beacon metadata."""
        return {
            "verdicts": {k: (v.outcome, v.evidence.con if v.evidence else None, v.download)
                         for k, v in sorted(self.verdicts.items())},
            "capabilities": dict(sorted(self.capabilities.items())),
            "errors": dict(sorted(self.errors.items())),
        }

    @property
    def packages(self) -> list[str]:
        return sorted({k[0] for k in self.verdicts} | {k[0] for k in self.capabilities})


# --- per-profile pipeline --------------------------------------------------


@dataclass
class _ProfileResult:
    facts: CapabilityFacts
    own_verdicts: list[AttackVerdict] = field(default_factory=list)  # A1, not_exposed, skipped
    expected: list[ExpectedTarget] = field(default_factory=list)


def _spec(cfg: RunConfig, base: str, atk: AttackId, pkg: str, ver: str,
          target: Optional[str]) -> AttackSpec:
    return AttackSpec(atk, pkg, ver, cfg.key_id, base, target_file=target,
                      remote_origin=cfg.remote_origin)


def attack_profile(device: DeviceBackend, profile: BrowserProfile, cfg: RunConfig,
                   receiver_base: str) -> _ProfileResult:
    pkg, ver = profile.package, device.device_version
    doc = profile.manifest
    sel = select_ebi(doc, cfg.tie_break)
    engine = str(infer_custom_engine(doc))

    if sel.component_name is None:
        facts = CapabilityFacts(None, 0, ExposureClass.NOT_EXPOSED.value, engine)
        return _ProfileResult(facts, [AttackVerdict(pkg, int(a), ver, Outcome.NOT_EXPOSED,
                                                    note="no EBI") for a in ATTACKS])

    exposure = classify_exposure(doc.component(sel.component_name)).value
    facts = CapabilityFacts(sel.component_name, sel.score.value, exposure, engine)
    result = _ProfileResult(facts)
    comp = sel.component_name

    device.install(profile)
    warm_up(device, pkg, comp, cfg.warmup_sites)
    targets = find_targets(device, pkg, cfg.keywords, cfg.extensions)
    target = targets[0] if targets else None
    target_bytes = device.read_file(Zone.private(pkg), target) if target else None
    device.register_remote(cfg.remote_origin, cfg.remote_body)

    def deliver(payload: Payload) -> None:
        device.stage_payload(pkg, payload)
        res = device.send_intent(pkg, comp, ACTION_VIEW, payload.load_url)
        if res.status is not Delivery.LOADED:
            log.debug("%s %s on %s: %s", pkg, payload.attack.label, ver, res.status.value)

    for atk in ATTACKS:
        if atk is not AttackId.A3 and target is None:
            result.own_verdicts.append(AttackVerdict(pkg, int(atk), ver, Outcome.NO_RESPONSE,
                                                     note="no target file found"))
            continue
        payload = forge(_spec(cfg, receiver_base, atk, pkg, ver, target))
        if atk is AttackId.A1:
            deliver(payload)
            device.advance_time(cfg.timeout_ms)
            hits = [d for d in device.list_downloads(pkg)
                    if payload.expect_download.lower() in posixpath.basename(d).lower()]
            outcome = Outcome.VULNERABLE if hits else Outcome.NOT_VULNERABLE
            result.own_verdicts.append(AttackVerdict(pkg, int(atk), ver, outcome,
                                                     download=hits[0] if hits else None))
            continue
        content = cfg.remote_body if atk is AttackId.A3 else target_bytes
        result.expected.append(ExpectedTarget.for_content(pkg, ver, int(atk), content))
        deliver(payload)
        if payload.followup is not None:
            fu = payload.followup
            device.advance_time(fu.delay_ms)
            zone = Zone("sdcard", pkg)
            rel = payload.staging.path
            device.delete_file(zone, rel)
            device.create_symlink(zone, rel, fu.link_target)
            device.advance_time(cfg.timeout_ms - fu.delay_ms)
        else:
            device.advance_time(cfg.timeout_ms)

    for probe in PROBES:
        deliver(forge(_spec(cfg, receiver_base, probe, pkg, ver, None)))
        device.advance_time(cfg.timeout_ms)
    return result


# --- suite ----------------------------------------------------------------


DeviceFactory = Callable[[str, Optional[Path]], DeviceBackend]


class Commander:
    def __init__(self, cfg: RunConfig, receiver: Receiver, receiver_base: str,
                 device_factory: DeviceFactory):
        self.cfg = cfg
        self.receiver = receiver
        self.receiver_base = receiver_base
        self.device_factory = device_factory
        receiver.registry.activate(cfg.key_id)

    def _worker(self, ver: str, profiles: Sequence[BrowserProfile], run_index: int):
        state = None
        if self.cfg.state_dir is not None:
            state = Path(self.cfg.state_dir) / f"run{run_index}" / ver
        device = self.device_factory(ver, state)
        results, errors = {}, {}
        for profile in profiles:
            for attempt in range(self.cfg.retries + 1):
                try:
                    results[profile.package] = attack_profile(device, profile, self.cfg,
                                                              self.receiver_base)
                    errors.pop(profile.package, None)
                    break
                except Exception as exc:  # failure control: isolate one browser
                    log.warning("%s on %s failed (attempt %d): %s", profile.package, ver,
                                attempt + 1, exc)
                    errors[profile.package] = f"{type(exc).__name__}: {exc}"
                    device = self.device_factory(ver, state)
        return ver, results, errors

    def run_once(self, profiles: Sequence[BrowserProfile], run_index: int) -> RunRecord:
        cfg = self.cfg
        start = len(self.receiver.store)
        versions = list(cfg.device_versions)
        if cfg.parallel and len(versions) > 1:
            with ThreadPoolExecutor(max_workers=len(versions)) as pool:
                outputs = list(pool.map(lambda v: self._worker(v, profiles, run_index), versions))
        else:
            outputs = [self._worker(v, profiles, run_index) for v in versions]

        record = RunRecord(cfg.config_id, tuple(versions), run_index, cfg.key_id)
        expected = ExperimentRegistry([cfg.key_id])
        for ver, results, errors in outputs:
            for pkg, msg in errors.items():
                record.errors[pkg] = f"{ver}: {msg}"
            for pkg, res in results.items():
                record.capabilities[(pkg, ver)] = res.facts
                for v in res.own_verdicts:
                    record.verdicts[v.key] = v
                for exp in res.expected:
                    expected.expect(cfg.key_id, exp)

        beacons = self.receiver.store.snapshot(cfg.key_id, start)
        judged = adjudicate(beacons, expected, cfg.key_id, receipt_only=cfg.receipt_only)
        record.warnings.extend(judged.warnings)
        for v in judged.verdicts:
            record.verdicts[v.key] = v
        for key, caps in judged.capabilities.items():
            if key in record.capabilities:
                record.capabilities[key] = replace(
                    record.capabilities[key], file_support_sd=caps.file_support_sd,
                    file_support_private=caps.file_support_private, js_in_file=caps.js_in_file)
        return record

    def run(self, profiles: Sequence[BrowserProfile]) -> list[RunRecord]:
        records = [self.run_once(profiles, i) for i in range(self.cfg.runs)]
        if self.cfg.out_dir is not None:
            out = Path(self.cfg.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            for r in records:
                write_record(r, out / f"results-{self.cfg.key_id}-run{r.run_index}.log")
            write_record(union_runs(records), out / f"results-{self.cfg.key_id}-union.log")
        return records


def run_suite(cfg: RunConfig, profiles: Optional[Sequence[BrowserProfile]] = None, *,
              in_process: bool = False, receiver: Optional[Receiver] = None) -> list[RunRecord]:
    """Run every profile on every configured version ``cfg.runs`` times.

    By default a loopback HTTP receiver is started for the duration of the
    suite and the sandbox delivers beacons over real sockets. ``in_process``
    hands beacons straight to the receiver instead.
    """
    if profiles is None:
        if cfg.corpus_dir is None:
            raise ValueError("either profiles or corpus_dir is required")
        profiles = load_corpus(cfg.corpus_dir)
    log_dir = cfg.out_dir
    if in_process or receiver is not None:
        if receiver is None:
            receiver = Receiver(ExperimentRegistry([cfg.key_id]), BeaconStore(log_dir))
        sink = receiver.sink
        factory = lambda ver, state: SandboxDevice(ver, state, sink)
        return Commander(cfg, receiver, cfg.receiver_base, factory).run(profiles)
    server = serve(cfg.bind, ExperimentRegistry([cfg.key_id]), log_dir)
    try:
        factory = lambda ver, state: SandboxDevice(ver, state, http_beacon_sink)
        return Commander(cfg, server.receiver, server.base_url, factory).run(profiles)
    finally:
        server.close()


# --- union of runs ---------------------------------------------------------


def merge_outcomes(outcomes: Iterable[Outcome]) -> Outcome:
    """Vulnerable absorbs everything; otherwise the most informative outcome wins."""
    return max(outcomes, key=lambda o: o.rank, default=Outcome.NO_RESPONSE)


def _merge_js(values: list[Optional[bool]]) -> Optional[bool]:
    if any(v is True for v in values):
        return True
    if any(v is False for v in values):
        return False
    return None


def union_runs(records: Sequence[RunRecord]) -> RunRecord:
    if not records:
        raise MergeError("nothing to merge")
    first = records[0]
    for r in records[1:]:
        if r.config_id != first.config_id or r.versions != first.versions:
            raise MergeError(f"records come from different configurations: "
                             f"{first.config_id} vs {r.config_id}")
    merged = RunRecord(first.config_id, first.versions, None, first.kid)
    keys = sorted({k for r in records for k in r.verdicts})
    for key in keys:
        cands = [r.verdicts[key] for r in records if key in r.verdicts]
        best = merge_outcomes(v.outcome for v in cands)
        seen = {v.outcome for v in cands}
        if Outcome.VULNERABLE in seen and Outcome.NOT_VULNERABLE in seen:
            merged.warnings.append(f"inconsistent runs for {key[0]} A{key[2]} on {key[1]}")
        merged.verdicts[key] = next(v for v in cands if v.outcome is best)
    for key in sorted({k for r in records for k in r.capabilities}):
        facts = [r.capabilities[key] for r in records if key in r.capabilities]
        merged.capabilities[key] = replace(
            facts[0],
            file_support_sd=any(f.file_support_sd for f in facts),
            file_support_private=any(f.file_support_private for f in facts),
            js_in_file=_merge_js([f.js_in_file for f in facts]))
    # a browser only stays errored if no run got through
    for pkg in sorted({p for r in records for p in r.errors}):
        if all(pkg in r.errors for r in records):
            merged.errors[pkg] = records[-1].errors[pkg]
    for r in records:
        merged.warnings.extend(w for w in r.warnings if w not in merged.warnings)
    return merged


# --- persistence -----------------------------------------------------------


def _verdict_json(v: AttackVerdict) -> dict:
    return {"type": "verdict", "pkg": v.pkg, "ver": v.ver, "attack": v.attack,
            "outcome": v.outcome.value, "evidence": v.evidence.to_line() if v.evidence else None,
            "download": v.download, "note": v.note}


def write_record(record: RunRecord, path: str | Path) -> None:
    lines = [{"type": "header", "config_id": record.config_id, "run_index": record.run_index,
              "versions": list(record.versions), "kid": record.kid}]
    lines += [_verdict_json(v) for _, v in sorted(record.verdicts.items())]
    for (pkg, ver), facts in sorted(record.capabilities.items()):
        lines.append({"type": "capability", "pkg": pkg, "ver": ver, **asdict(facts)})
    lines += [{"type": "error", "pkg": p, "message": m} for p, m in sorted(record.errors.items())]
    lines += [{"type": "warning", "message": w} for w in record.warnings]
    Path(path).write_text("".join(json.dumps(line, sort_keys=True) + "\n" for line in lines),
                          encoding="utf-8")


def read_record(path: str | Path) -> RunRecord:
    record = None
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        item = json.loads(raw)
        kind = item.pop("type")
        if kind == "header":
            record = RunRecord(item["config_id"], tuple(item["versions"]), item["run_index"],
                               item.get("kid", ""))
            continue
        if record is None:
            raise MergeError(f"{path}: record lacks a header line")
        if kind == "verdict":
            ev = Beacon.from_line(item["evidence"]) if item["evidence"] else None
            v = AttackVerdict(item["pkg"], item["attack"], item["ver"], Outcome(item["outcome"]),
                              ev, item["download"], item["note"])
            record.verdicts[v.key] = v
        elif kind == "capability":
            pkg, ver = item.pop("pkg"), item.pop("ver")
            record.capabilities[(pkg, ver)] = CapabilityFacts(**item)
        elif kind == "error":
            record.errors[item["pkg"]] = item["message"]
        elif kind == "warning":
            record.warnings.append(item["message"])
    if record is None:
        raise MergeError(f"{path}: empty results log")
    return record


# --- patch validation ------------------------------------------------------


BLOCKED = "blocked"
STILL_VULNERABLE = "still_vulnerable"
REGRESSED = "regressed"


@dataclass(frozen=True)
class Transition:
    ver: str
    attack: int
    kind: str
    evidence: Optional[Beacon] = None
    download: Optional[str] = None


@dataclass
class PatchReport:
    pkg: str
    transitions: list[Transition] = field(default_factory=list)  # blocked / regressed
    still_vulnerable: list[Transition] = field(default_factory=list)

    def of_kind(self, kind: str) -> set[tuple[str, int]]:
        items = self.still_vulnerable if kind == STILL_VULNERABLE else self.transitions
        return {(t.ver, t.attack) for t in items if t.kind == kind}


def validate_patch(before: BrowserProfile, after: BrowserProfile, cfg: RunConfig,
                   **suite_kwargs) -> PatchReport:
    if before.package != after.package:
        raise ValueError(f"patch validation needs one package, got {before.package} "
                         f"and {after.package}")
    old = union_runs(run_suite(cfg, [before], **suite_kwargs))
    new = union_runs(run_suite(cfg, [after], **suite_kwargs))
    report = PatchReport(before.package)
    for key in sorted(set(old.verdicts) | set(new.verdicts)):
        pkg, ver, atk = key
        was = old.verdicts.get(key)
        now = new.verdicts.get(key)
        was_vuln = was is not None and was.outcome is Outcome.VULNERABLE
        now_vuln = now is not None and now.outcome is Outcome.VULNERABLE
        if was_vuln and now_vuln:
            report.still_vulnerable.append(
                Transition(ver, atk, STILL_VULNERABLE, now.evidence, now.download))
        elif was_vuln:
            report.transitions.append(Transition(ver, atk, BLOCKED))
        elif now_vuln:
            report.transitions.append(Transition(ver, atk, REGRESSED, now.evidence, now.download))
    return report
