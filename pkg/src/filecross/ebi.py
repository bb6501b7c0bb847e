"""Six-bit scoring of exposed browsing interface (EBI) patterns.

Bits are aggregated over all filters of a component (union semantics):

    32  VIEW+BROWSABLE filter and a MAIN+LAUNCHER filter on the same component
    16  a VIEW+BROWSABLE filter declares https
     8  a VIEW+BROWSABLE filter declares http
     4  a VIEW+BROWSABLE filter that is not file-only (reference pattern)
     2  a VIEW+BROWSABLE filter whose only scheme is file
     1  MAIN+LAUNCHER with no VIEW+BROWSABLE filter anywhere
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Optional, Union

from .manifest import ManifestComponent, ManifestDoc


class EbiBit(enum.IntFlag):
    LAUNCHER_ONLY = 1
    FILE_ONLY_BROWSABLE = 2
    REFERENCE = 4
    HTTP = 8
    HTTPS = 16
    LAUNCHER_WITH_BROWSABLE = 32


@dataclass(frozen=True)
class EbiScore:
    value: int

    def __post_init__(self):
        if not 0 <= self.value <= 63:
            raise ValueError(f"EBI score out of range: {self.value}")

    @property
    def bits(self) -> frozenset[EbiBit]:
        return frozenset(b for b in EbiBit if self.value & b)

    def describe(self) -> str:
        return ",".join(b.name.lower() for b in sorted(self.bits)) or "-"

    @classmethod
    def from_bits(cls, bits) -> EbiScore:
        return cls(sum(int(b) for b in set(bits)))


def score_component(component: ManifestComponent) -> EbiScore:
    browsable = [f for f in component.filters if f.view_browsable]
    launcher = any(f.main_launcher for f in component.filters)
    value = 0
    if browsable and launcher:
        value |= EbiBit.LAUNCHER_WITH_BROWSABLE
    elif launcher:
        value |= EbiBit.LAUNCHER_ONLY
    for f in browsable:
        if "https" in f.schemes:
            value |= EbiBit.HTTPS
        if "http" in f.schemes:
            value |= EbiBit.HTTP
        if f.schemes == {"file"}:
            value |= EbiBit.FILE_ONLY_BROWSABLE
        elif not f.schemes or f.schemes - {"file"}:
            value |= EbiBit.REFERENCE
    return EbiScore(int(value))


@dataclass(frozen=True)
class FirstDeclared:
    pass


@dataclass(frozen=True)
class SeededRandom:
    seed: int


TieBreak = Union[FirstDeclared, SeededRandom]
FIRST_DECLARED = FirstDeclared()


@dataclass(frozen=True)
class EbiSelection:
    component_name: Optional[str]
    score: EbiScore
    ties: tuple[str, ...] = ()


def select_ebi(doc: ManifestDoc, tie_break: TieBreak = FIRST_DECLARED) -> EbiSelection:
    scored = [(c.name, score_component(c)) for c in doc.components]
    best = max((s.value for _, s in scored), default=0)
    if best == 0:
        return EbiSelection(None, EbiScore(0), ())
    ties = tuple(name for name, s in scored if s.value == best)
    if isinstance(tie_break, SeededRandom):
        chosen = random.Random(tie_break.seed).choice(ties)
    else:
        chosen = ties[0]
    return EbiSelection(chosen, EbiScore(best), ties)


def parse_tie_break(text: str) -> TieBreak:
    """``first_declared`` or ``seeded_random:<seed>``."""
    if text == "first_declared":
        return FIRST_DECLARED
    if text.startswith("seeded_random"):
        _, _, seed = text.partition(":")
        return SeededRandom(int(seed or 0))
    raise ValueError(f"unknown tie-break {text!r}")
