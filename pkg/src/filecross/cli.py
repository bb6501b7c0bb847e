"""Command-line entry point: ``filecross <subcommand>``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from . import commander, report
from .ebi import parse_tie_break, score_component
from .forge import AttackId, AttackSpec, SpecError, forge
from .manifest import ManifestError, classify_exposure, infer_custom_engine, load_manifest
from .receiver import ExperimentRegistry, serve
from .sandbox import load_profile

STATE_ENV = "FILECROSS_STATE_DIR"


def state_root() -> Path:
    return Path(os.environ.get(STATE_ENV, "state"))


def cmd_score(args) -> int:
    doc = load_manifest(args.manifest)
    rows = [("component", "score", "bits", "exposure")]
    for c in doc.components:
        s = score_component(c)
        rows.append((c.name, str(s.value), s.describe(), classify_exposure(c).value))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    for r in rows:
        print("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
    print(f"engine: {infer_custom_engine(doc)}")
    return 0


def cmd_serve(args) -> int:
    log_dir = Path(args.log_dir) if args.log_dir else state_root() / "beacons"
    server = serve(args.bind, ExperimentRegistry(args.kid), log_dir)
    print(f"receiver listening on {server.base_url}/req (logs in {log_dir})", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


def _config(args, **extra) -> commander.RunConfig:
    return commander.RunConfig(
        corpus_dir=Path(args.corpus) if getattr(args, "corpus", None) else None,
        device_versions=tuple(v.strip() for v in args.versions.split(",") if v.strip()),
        timeout_ms=args.timeout,
        runs=args.runs,
        key_id=args.kid,
        bind=args.bind,
        tie_break=parse_tie_break(args.tie_break),
        receipt_only=args.receipt_only,
        state_dir=state_root() / args.kid,
        **extra,
    )


def cmd_run(args) -> int:
    out = Path(args.out)
    cfg = _config(args, out_dir=out)
    records = commander.run_suite(cfg)
    merged = commander.union_runs(records)
    for err in sorted(merged.errors.items()):
        print(f"error: {err[0]}: {err[1]}", file=sys.stderr)
    matrix = report.build_matrix(merged)
    print(report.aggregate(matrix).headline())
    print(f"results written to {out}/results-{cfg.key_id}-union.log")
    return 0


def cmd_merge(args) -> int:
    records = [commander.read_record(p) for p in args.logs]
    merged = commander.union_runs(records)
    out = Path(args.output) if args.output else Path(args.logs[0]).with_name(
        f"results-{merged.kid or 'merged'}-union.log")
    commander.write_record(merged, out)
    for w in merged.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(out)
    return 0


def cmd_report(args) -> int:
    merged = commander.read_record(args.results)
    matrix = report.build_matrix(merged)
    fmt = "csv" if args.format == "csv" else "text_table"
    sys.stdout.write(report.emit(matrix, report.aggregate(matrix), fmt).decode("utf-8"))
    return 0


def cmd_validate_patch(args) -> int:
    before, after = load_profile(args.before), load_profile(args.after)
    cfg = _config(args)
    rep = commander.validate_patch(before, after, cfg)
    print(f"patch validation for {rep.pkg}")
    for t in sorted(rep.transitions + rep.still_vulnerable, key=lambda t: (t.attack, t.ver)):
        line = f"  A{t.attack} on {t.ver}: {t.kind}"
        if t.evidence is not None:
            line += f" (beacon con={t.evidence.con[:40]!r})"
        elif t.download:
            line += f" (downloaded {t.download})"
        print(line)
    if not rep.transitions and not rep.still_vulnerable:
        print("  no vulnerable cells before or after")
    return 1 if rep.still_vulnerable or any(t.kind == commander.REGRESSED
                                            for t in rep.transitions) else 0


def cmd_forge(args) -> int:
    spec = AttackSpec(AttackId(args.attack), args.pkg, args.ver, args.kid, args.receiver,
                      target_file=args.target, remote_origin=args.remote)
    payload = forge(spec)
    if args.write:
        if payload.staging is None:
            print("A1 has no HTML document; delivering", payload.load_url)
            return 0
        dest = state_root() / payload.staging.path
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_text(payload.html_text, encoding="utf-8")
        print(dest)
        return 0
    print(f"# load: {payload.load_url}")
    if payload.followup is not None:
        fu = payload.followup
        print(f"# at {fu.delay_ms} ms: replace {fu.doc_path} with symlink to {fu.link_target}")
    sys.stdout.write(payload.html_text)
    if payload.html_text and not payload.html_text.endswith("\n"):
        sys.stdout.write("\n")
    return 0


def _suite_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--versions", default=",".join(commander.DEFAULT_VERSIONS))
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--timeout", type=int, default=12000, help="per-request timeout, virtual ms")
    p.add_argument("--kid", default="keyid")
    p.add_argument("--bind", default="127.0.0.1:0", help="receiver bind address")
    p.add_argument("--tie-break", default="first_declared",
                   help="first_declared or seeded_random:<seed>")
    p.add_argument("--receipt-only", action="store_true",
                   help="count any non-empty beacon as success, skipping the digest check")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="filecross",
                                     description="file:// attack testing for Android browsers")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score the components of a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("serve", help="run the beacon receiver")
    p.add_argument("--bind", default="127.0.0.1:8080")
    p.add_argument("--kid", action="append", required=True)
    p.add_argument("--log-dir")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("run", help="run the attack suite over a profile corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", default="results")
    _suite_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("merge", help="union several run logs")
    p.add_argument("logs", nargs="+")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("report", help="print the vulnerability matrix")
    p.add_argument("results", help="results log, usually the union")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate-patch", help="compare a browser before and after a patch")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    _suite_args(p)
    p.set_defaults(func=cmd_validate_patch)

    p = sub.add_parser("forge", help="dump an attack or probe payload")
    p.add_argument("--attack", type=int, required=True, choices=[int(a) for a in AttackId])
    p.add_argument("--pkg", required=True)
    p.add_argument("--target", help="private-zone file for A1, A2 and A4")
    p.add_argument("--remote", default=commander.DEFAULT_REMOTE, help="remote origin for A3")
    p.add_argument("--ver", default="4.3")
    p.add_argument("--kid", default="keyid")
    p.add_argument("--receiver", default="http://ourserver.com")
    p.add_argument("--write", action="store_true", help="write under the state directory")
    p.set_defaults(func=cmd_forge)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ManifestError, SpecError, commander.MergeError, ValueError, OSError) as exc:
        print(f"filecross: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
