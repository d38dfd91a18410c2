"""Self-financing wealth and admissibility checks over a scenario ensemble.

Wealth is V = v + H.X with H_0 = 0; the money account has zero rate, so
whatever is not held in risky assets sits in cash. Right jumps of X (entry,
exit, merger, split) leave V unchanged.

Admissibility is a statement about every scenario, which a finite sample
cannot prove. Reports can refute a claimed credit line; otherwise they only
say the sample is consistent with it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .integration import GainsPath, integrate
from .paths import PiecewisePath
from .strategies import as_holdings

__all__ = [
    "WealthProcess",
    "Verdict",
    "AdmissibilityReport",
    "wealth_process",
    "admissibility_report",
    "admissibility_from_gains",
    "in_nonnegative_class",
]


@dataclass(frozen=True, eq=False)
class WealthProcess:
    v: float
    gains: GainsPath

    @property
    def values(self) -> np.ndarray:
        return self.v + self.gains.values

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))

    @property
    def terminal(self) -> float:
        return float(self.values[-1])


def wealth_process(v: float, h, paths: Sequence[PiecewisePath]) -> list[WealthProcess]:
    """V = v + H.X on every path; H must start from a zero position."""
    out = []
    for path in paths:
        hold = as_holdings(h, path)
        if np.any(hold.initial != 0):
            raise ValueError("wealth processes need a zero initial position (H_0 = 0)")
        out.append(WealthProcess(float(v), integrate(hold, path)))
    return out


def in_nonnegative_class(wealth: Iterable[WealthProcess]) -> bool:
    """Whether every sampled wealth path stays nonnegative."""
    return all(w.v >= 0 and w.nonnegative for w in wealth)


class Verdict(str, enum.Enum):
    EMPIRICALLY_ADMISSIBLE = "EMPIRICALLY_ADMISSIBLE"
    VIOLATES = "VIOLATES"


@dataclass(frozen=True)
class AdmissibilityReport:
    pathwise_inf: float
    certified_bound: float
    c_claimed: float
    verdict: Verdict
    n_paths: int

    @property
    def note(self) -> str:
        if self.verdict is Verdict.VIOLATES:
            return f"gains fall below -{self.c_claimed:g} on a sampled path; the claim is refuted"
        return (f"all {self.n_paths} sampled paths keep gains >= -{self.certified_bound:g}; "
                "this is not a proof of admissibility")

    def to_dict(self) -> dict:
        return {
            "pathwise_inf": self.pathwise_inf,
            "certified_bound": self.certified_bound,
            "c_claimed": self.c_claimed,
            "verdict": self.verdict.value,
            "n_paths": self.n_paths,
            "note": self.note,
        }


def admissibility_from_gains(gains: Iterable[GainsPath], c_claimed: float) -> AdmissibilityReport:
    inf, n = np.inf, 0
    for g in gains:
        inf = min(inf, float(np.min(g.values)))
        n += 1
    bound = max(0.0, -inf) if np.isfinite(inf) else np.inf
    verdict = Verdict.VIOLATES if inf < -c_claimed else Verdict.EMPIRICALLY_ADMISSIBLE
    return AdmissibilityReport(float(inf), float(bound), float(c_claimed), verdict, n)


def admissibility_report(h, paths: Sequence[PiecewisePath], c_claimed: float) -> AdmissibilityReport:
    return admissibility_from_gains((integrate(h, p) for p in paths), c_claimed)
