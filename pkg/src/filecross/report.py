"""Vulnerability matrix and aggregate counts from merged run records."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

from .commander import RunRecord, merge_outcomes
from .forge import AttackId
from .receiver import Outcome

Y, N, BLANK = "y", "n", ""

_CELL = {Outcome.VULNERABLE: Y, Outcome.NOT_VULNERABLE: N, Outcome.NOT_EXPOSED: N,
         Outcome.NO_RESPONSE: BLANK}

PER_VERSION = (AttackId.A2, AttackId.A3)


def cell(outcome: Optional[Outcome]) -> str:
    return BLANK if outcome is None else _CELL[outcome]


@dataclass
class MatrixRow:
    package: str
    a1: str = BLANK
    per_version: dict[tuple[int, str], str] = field(default_factory=dict)
    a4: str = BLANK
    exposure: str = ""
    engine: str = ""
    category: Optional[str] = None
    installs: Optional[str] = None
    file_support_sd: bool = False
    file_support_private: bool = False
    js_in_file: bool = False

    def cells(self) -> list[str]:
        return [self.a1, *self.per_version.values(), self.a4]

    @property
    def vulnerable(self) -> bool:
        return Y in self.cells()


@dataclass
class VulnMatrix:
    versions: tuple[str, ...]
    rows: list[MatrixRow] = field(default_factory=list)

    def columns(self) -> list[str]:
        cols = ["package", "A1"]
        cols += [f"{a.name}_{v}" for a in PER_VERSION for v in self.versions]
        return cols + ["A4", "exposure", "engine"]

    def row(self, package: str) -> MatrixRow:
        return next(r for r in self.rows if r.package == package)


@dataclass(frozen=True)
class AggregateStats:
    total: int
    vulnerable: int
    issues: int
    per_attack: dict[str, int]
    ebi_breakdown: dict[str, int]
    file_support_sd: int
    file_support_private: int
    js_in_file: int
    private_zone_access: int

    @property
    def vulnerable_pct(self) -> float:
        return 100.0 * self.vulnerable / self.total if self.total else 0.0

    def headline(self) -> str:
        return f"{self.vulnerable} of {self.total} browsers vulnerable ({self.vulnerable_pct:.1f}%)"


def build_matrix(merged: RunRecord, profiles_meta: Optional[dict[str, dict]] = None) -> VulnMatrix:
    versions = tuple(merged.versions)
    matrix = VulnMatrix(versions)
    meta = profiles_meta or {}
    for pkg in merged.packages:
        got = lambda atk, ver: merged.verdicts.get((pkg, ver, int(atk)))
        outcomes = lambda atk: [v.outcome for ver in versions if (v := got(atk, ver))]
        row = MatrixRow(pkg)
        row.a1 = cell(merge_outcomes(outcomes(AttackId.A1))) if outcomes(AttackId.A1) else BLANK
        row.a4 = cell(merge_outcomes(outcomes(AttackId.A4))) if outcomes(AttackId.A4) else BLANK
        for atk in PER_VERSION:
            for ver in versions:
                v = got(atk, ver)
                row.per_version[(int(atk), ver)] = cell(v.outcome if v else None)
        facts = [merged.capabilities[(pkg, v)] for v in versions if (pkg, v) in merged.capabilities]
        if facts:
            row.exposure = "none" if facts[0].ebi is None else facts[0].exposure_class
            row.engine = facts[0].engine_guess.split("(")[0]
            row.file_support_sd = any(f.file_support_sd for f in facts)
            row.file_support_private = any(f.file_support_private for f in facts)
            row.js_in_file = any(f.js_in_file for f in facts)
        elif pkg in merged.errors:
            row.exposure = "error"
        row.category = meta.get(pkg, {}).get("category")
        row.installs = meta.get(pkg, {}).get("installs")
        matrix.rows.append(row)
    return matrix


def aggregate(matrix: VulnMatrix) -> AggregateStats:
    per_attack: dict[str, int] = {"A1": 0, "A4": 0}
    for atk in PER_VERSION:
        for ver in matrix.versions:
            per_attack[f"{atk.name}_{ver}"] = 0
    breakdown = {"intentional": 0, "unintentional": 0, "none": 0}
    for r in matrix.rows:
        per_attack["A1"] += r.a1 == Y
        per_attack["A4"] += r.a4 == Y
        for (atk, ver), c in r.per_version.items():
            per_attack[f"{AttackId(atk).name}_{ver}"] += c == Y
        if r.exposure in breakdown:
            breakdown[r.exposure] += 1
        elif r.exposure == "not_exposed":
            breakdown["none"] += 1
    return AggregateStats(
        total=len(matrix.rows),
        vulnerable=sum(r.vulnerable for r in matrix.rows),
        issues=sum(c == Y for r in matrix.rows for c in r.cells()),
        per_attack=per_attack,
        ebi_breakdown=breakdown,
        file_support_sd=sum(r.file_support_sd for r in matrix.rows),
        file_support_private=sum(r.file_support_private for r in matrix.rows),
        js_in_file=sum(r.js_in_file for r in matrix.rows),
        private_zone_access=sum(r.file_support_private for r in matrix.rows),
    )


def _csv_fields(matrix: VulnMatrix, r: MatrixRow) -> list[str]:
    per = [r.per_version.get((int(a), v), BLANK) for a in PER_VERSION for v in matrix.versions]
    return [r.package, r.a1, *per, r.a4, r.exposure, r.engine]


def emit(matrix: VulnMatrix, stats: Optional[AggregateStats] = None,
         fmt: str = "text_table") -> bytes:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(matrix.columns())
        for r in matrix.rows:
            writer.writerow(_csv_fields(matrix, r))
        return buf.getvalue().encode("utf-8")
    if fmt != "text_table":
        raise ValueError(f"unknown report format {fmt!r}")

    header = matrix.columns()
    body = [_csv_fields(matrix, r) for r in matrix.rows]
    widths = [max([len(h)] + [len(row[i]) for row in body]) for i, h in enumerate(header)]
    fmt_row = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt_row(header), fmt_row(["-" * w for w in widths])]
    lines += [fmt_row(row) for row in body]
    stats = stats or aggregate(matrix)
    lines.append("")
    lines.append(stats.headline())
    lines.append(f"issues: {stats.issues}")
    lines.append("per attack: " + ", ".join(f"{k}={v}" for k, v in stats.per_attack.items()))
    lines.append("EBI: " + ", ".join(f"{k}={v}" for k, v in stats.ebi_breakdown.items()))
    lines.append(f"file:// support: sdcard={stats.file_support_sd} "
                 f"private={stats.file_support_private}; js in file://={stats.js_in_file}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_csv(data: bytes) -> VulnMatrix:
    rows = list(csv.reader(io.StringIO(data.decode("utf-8"))))
    if not rows:
        return VulnMatrix(())
    header, body = rows[0], rows[1:]
    if header[:2] != ["package", "A1"] or header[-3:] != ["A4", "exposure", "engine"]:
        raise ValueError("not a vulnerability matrix CSV")
    middle = header[2:-3]
    versions = tuple(dict.fromkeys(col.split("_", 1)[1] for col in middle))
    matrix = VulnMatrix(versions)
    for rec in body:
        if len(rec) != len(header):
            raise ValueError(f"row has {len(rec)} fields, expected {len(header)}")
        row = MatrixRow(rec[0], a1=rec[1], a4=rec[-3], exposure=rec[-2], engine=rec[-1])
        for col, value in zip(middle, rec[2:-3]):
            name, ver = col.split("_", 1)
            row.per_version[(int(AttackId[name]), ver)] = value
        matrix.rows.append(row)
    return matrix
