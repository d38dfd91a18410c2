"""Pasted deflators and Monte-Carlo (super)martingale tests.

On piece k a market of independent Brownian-driven assets with drift mu_i and
volatility sigma_i has the deflator

    Z^k_t = exp(-theta . (W_t - W_{tau_{k-1}}) - |theta|^2 (t - tau_{k-1}) / 2),

theta_i = mu_i / sigma_i, equal to 1 before the piece starts and frozen after
it ends. The candidate deflator for the whole market is Z = prod_k Z^k.

The tests compare means at checkpoint times. A martingale keeps its mean; a
supermartingale's mean does not increase. Each consecutive pair of
checkpoints is judged by the paired difference against z standard errors.
This only tests a necessary condition, and only for the processes supplied.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .market import BMModel, GBMModel, InvBes3Model, MarketSpec, SimulatedScenario, simulate_scenarios
from .paths import TimeGrid

__all__ = [
    "NoDeflatorError",
    "DeflatorProcess",
    "market_price_of_risk",
    "deflator_for_scenario",
    "build_piecewise_deflator",
    "Mode",
    "MartingaleTestReport",
    "CheckpointAccumulator",
    "martingale_test",
    "deflate_and_test",
    "values_at",
]


class NoDeflatorError(ValueError):
    """A piece has drift without volatility: no deflator exists (NA1 fails)."""


@dataclass(frozen=True, eq=False)
class DeflatorProcess:
    grid: TimeGrid
    values: np.ndarray
    factors: np.ndarray

    @property
    def terminal(self) -> float:
        return float(self.values[-1])


def market_price_of_risk(models: Sequence) -> np.ndarray:
    theta = np.zeros(len(models))
    for i, m in enumerate(models):
        if isinstance(m, InvBes3Model):
            continue
        if not isinstance(m, (GBMModel, BMModel)):
            raise TypeError(f"no deflator kernel for {m!r}")
        if m.sigma == 0:
            if m.mu != 0:
                raise NoDeflatorError(
                    f"asset {i} has drift {m.mu} and no volatility; no deflator exists"
                )
            continue
        theta[i] = m.mu / m.sigma
    return theta


def deflator_for_scenario(sim: SimulatedScenario) -> DeflatorProcess:
    path = sim.path
    times = path.grid.times
    m = path.grid.last
    factors = np.ones((len(path.pieces), m + 1))
    for k, (p, models, drv) in enumerate(zip(path.pieces, sim.piece_models, sim.drivers)):
        theta = market_price_of_risk(models)
        if not theta.any():
            continue
        elapsed = times[p.start + 1 : p.end + 1] - times[p.start]
        log_z = -drv @ theta - 0.5 * float(theta @ theta) * elapsed
        factors[k, p.start + 1 : p.end + 1] = np.exp(log_z)
        factors[k, p.end + 1 :] = factors[k, p.end]
    values = np.prod(factors, axis=0)
    factors.setflags(write=False)
    values.setflags(write=False)
    return DeflatorProcess(path.grid, values, factors)


def build_piecewise_deflator(
    spec: MarketSpec, scenarios: Sequence[SimulatedScenario] | None = None
) -> list[DeflatorProcess]:
    """One deflator per scenario of ``spec`` (simulated unless supplied)."""
    if scenarios is None:
        scenarios = simulate_scenarios(spec)
    return [deflator_for_scenario(s) for s in scenarios]


# -- tests --------------------------------------------------------------------


class Mode(str, enum.Enum):
    MARTINGALE = "MARTINGALE"
    SUPERMARTINGALE = "SUPERMARTINGALE"


def values_at(series: Iterable, checkpoints: Sequence[float]) -> np.ndarray:
    """Rows of process values at ``checkpoints``, one row per path.

    Each item needs ``grid`` and ``values`` (gains, deflators) or ``gains``
    and ``values`` (wealth).
    """
    rows = []
    for s in series:
        grid = s.grid if hasattr(s, "grid") else s.gains.grid
        vals = s.values
        rows.append([vals[grid.index_of(t)] for t in checkpoints])
    return np.array(rows, dtype=float).reshape(-1, len(checkpoints))


class CheckpointAccumulator:
    """Collects samples at checkpoints in chunks.

    Sums are exactly rounded (``math.fsum``), so the statistics do not depend
    on how scenarios were split into chunks or in which order they arrived.
    """

    def __init__(self, n_checkpoints: int):
        self.n_checkpoints = n_checkpoints
        self._chunks: list[np.ndarray] = []

    def update(self, samples) -> None:
        a = np.asarray(samples, dtype=float).reshape(-1, self.n_checkpoints)
        self._chunks.append(a)

    def merge(self, other: "CheckpointAccumulator") -> "CheckpointAccumulator":
        out = CheckpointAccumulator(self.n_checkpoints)
        out._chunks = self._chunks + other._chunks
        return out

    @property
    def n(self) -> int:
        return sum(c.shape[0] for c in self._chunks)

    def samples(self) -> np.ndarray:
        if not self._chunks:
            return np.empty((0, self.n_checkpoints))
        return np.vstack(self._chunks)

    def report(self, checkpoints, mode: Mode | str = Mode.MARTINGALE, z: float = 3.0,
               name: str = "process") -> "MartingaleTestReport":
        return martingale_test(self.samples(), checkpoints, mode, z, name)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    # exactly rounded sums: the result does not depend on the order of x
    n = x.size
    vals = x.tolist()
    mean = math.fsum(vals) / n
    var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass(frozen=True)
class MartingaleTestReport:
    name: str
    mode: Mode
    z: float
    checkpoints: tuple
    n_samples: int
    means: tuple
    ses: tuple
    diff_means: tuple
    diff_ses: tuple
    interval_pass: tuple
    notes: tuple = field(default=())

    @property
    def passed(self) -> bool:
        return all(self.interval_pass)

    def confidence_interval(self, j: int) -> tuple[float, float]:
        return (self.means[j] - self.z * self.ses[j], self.means[j] + self.z * self.ses[j])

    def recomputed_verdicts(self) -> tuple:
        return tuple(_judge(d, s, self.mode, self.z) for d, s in zip(self.diff_means, self.diff_ses))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode.value,
            "z": self.z,
            "checkpoints": list(self.checkpoints),
            "n_samples": self.n_samples,
            "means": list(self.means),
            "standard_errors": list(self.ses),
            "confidence_intervals": [list(self.confidence_interval(j)) for j in range(len(self.means))],
            "difference_means": list(self.diff_means),
            "difference_standard_errors": list(self.diff_ses),
            "interval_pass": list(self.interval_pass),
            "passed": self.passed,
            "notes": list(self.notes),
        }

    def to_text(self) -> str:
        head = f"{self.name}: {self.mode.value} test, z={self.z:g}, n={self.n_samples}"
        lines = [head, f"  {'t':>10}  {'mean':>14}  {'se':>12}"]
        for t, mu, se in zip(self.checkpoints, self.means, self.ses):
            lines.append(f"  {t:>10.6g}  {mu:>14.6g}  {se:>12.4g}")
        lines.append(f"  {'interval':>21}  {'diff':>14}  {'se':>12}  verdict")
        for j, (d, s, ok) in enumerate(zip(self.diff_means, self.diff_ses, self.interval_pass)):
            span = f"{self.checkpoints[j]:g} -> {self.checkpoints[j + 1]:g}"
            lines.append(f"  {span:>21}  {d:>14.6g}  {s:>12.4g}  {'pass' if ok else 'FAIL'}")
        lines.append(f"  overall: {'PASS' if self.passed else 'FAIL'}")
        lines.extend(f"  note: {n}" for n in self.notes)
        return "\n".join(lines)


def _judge(diff: float, se: float, mode: Mode, z: float) -> bool:
    if mode is Mode.MARTINGALE:
        return abs(diff) <= z * se
    return diff <= z * se


def martingale_test(samples, checkpoints: Sequence[float], mode: Mode | str = Mode.MARTINGALE,
                    z: float = 3.0, name: str = "process", notes: Sequence[str] = ()) -> MartingaleTestReport:
    """Mean-constancy (MARTINGALE) or mean-nonincrease (SUPERMARTINGALE) test.

    ``samples`` has one row per path and one column per checkpoint.
    """
    mode = Mode(mode)
    x = np.asarray(samples, dtype=float)
    cps = tuple(float(t) for t in checkpoints)
    if x.ndim != 2 or x.shape[1] != len(cps):
        raise ValueError("samples need one column per checkpoint")
    if len(cps) < 2:
        raise ValueError("at least two checkpoints are needed")
    if x.shape[0] < 100:
        raise ValueError(f"at least 100 samples are needed, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    stats = [_mean_se(x[:, j]) for j in range(len(cps))]
    diffs = [_mean_se(x[:, j + 1] - x[:, j]) for j in range(len(cps) - 1)]
    verdicts = tuple(_judge(d, s, mode, z) for d, s in diffs)
    return MartingaleTestReport(
        name, mode, float(z), cps, x.shape[0],
        tuple(m for m, _ in stats), tuple(s for _, s in stats),
        tuple(d for d, _ in diffs), tuple(s for _, s in diffs),
        verdicts, tuple(notes),
    )


def deflate_and_test(deflators: Sequence[DeflatorProcess], wealth: Sequence, z: float = 3.0,
                     checkpoints: Sequence[float] | None = None,
                     name: str = "deflated wealth") -> MartingaleTestReport:
    """Supermartingale test of Z.V over paired deflators and wealth paths."""
    if len(deflators) != len(wealth):
        raise ValueError("one deflator per wealth path is required")
    if checkpoints is None:
        checkpoints = [0.0, deflators[0].grid.horizon]
    zv = values_at(deflators, checkpoints) * values_at(wealth, checkpoints)
    nonneg = all(np.all(np.asarray(w.values) >= 0) for w in wealth)
    notes = [
        f"tested family: the {len(wealth)} supplied wealth paths; "
        "no claim is made for other nonnegative wealth processes",
    ]
    if not nonneg:
        notes.append("some supplied wealth paths go negative, so they are outside the nonnegative class")
    return martingale_test(zv, checkpoints, Mode.SUPERMARTINGALE, z, name, notes)
