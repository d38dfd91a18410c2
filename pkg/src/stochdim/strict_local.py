"""A bounded piecewise local martingale built from a strict local martingale.

Y = 1/R - 1 with R a Bessel(3) process from 1 (the norm of a 3-d Brownian
motion started at (1, 0, 0)), so Y_0 = 0 and Y is a continuous strict local
martingale. Pieces end when Y has moved by 1 in absolute value since the
last reset, and on each piece X = Y - Y_{tau_{k-1}}. Hence |X| <= 1 up to
the discretization overshoot, while S.X = S.Y for S = 1.

Hitting times are detected on the grid. With ``refine_tol`` set, the grid
interval in which a crossing is first seen is bisected with exact Brownian
bridge draws until the overshoot at the new grid point is at most
``refine_tol``; the added points become grid points of that path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .market import PieceCapError
from .paths import PiecewisePath, TimeGrid
from .rng import MAX_SEED, _transient_generator

__all__ = [
    "StrictLocalMartSpec",
    "ExampleScenario",
    "example_scenario",
    "iter_strict_local_mart",
    "simulate_strict_local_mart",
    "overshoot",
    "expected_inverse_bessel",
    "base_values",
]

log = logging.getLogger(__name__)

_FLOOR = 1e-12


class StrictLocalMartSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)
    r0: float = Field(default=1.0)
    T: float = Field(default=1.0, gt=0)
    step: float = Field(default=1e-3, gt=0)
    threshold: float = Field(default=1.0, gt=0)
    refine_tol: float | None = Field(default=0.01, gt=0)
    max_bisections: int = Field(default=80, ge=0)
    max_pieces: int = Field(default=20_000, ge=1)
    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    n_scenarios: int = Field(default=1, ge=1)

    def model_post_init(self, __context):
        if self.r0 != 1.0:
            raise ValueError("the Example starts the Bessel process at r0 = 1")

    def time_grid(self) -> TimeGrid:
        return TimeGrid.uniform(self.T, self.step)


@dataclass(frozen=True, eq=False)
class ExampleScenario:
    scenario_id: int
    path: PiecewisePath
    y: np.ndarray
    overshoot: float
    redrawn: int


def expected_inverse_bessel(t: float, r: float = 1.0) -> float:
    """E[1/R_t] for Bessel(3) from r: (2 Phi(r / sqrt t) - 1) / r."""
    from scipy.special import erf

    return float(erf(r / np.sqrt(2.0 * t)) / r)


def overshoot(path: PiecewisePath, threshold: float = 1.0) -> float:
    """max(0, sup_t |X_t|_1 - threshold)."""
    worst = float(np.abs(path.initial_value).sum())
    for p in path.pieces:
        worst = max(worst, float(np.abs(p.samples).sum(axis=1).max()), float(np.abs(p.start_right_limit).sum()))
    return max(0.0, worst - threshold)


def _walk(rng, sqdt: np.ndarray) -> tuple[np.ndarray, int]:
    steps = sqdt[:, None] * rng.standard_normal((sqdt.size, 3))
    w = np.cumsum(steps, axis=0)
    w[:, 0] += 1.0
    redrawn = 0
    bad = np.flatnonzero(np.linalg.norm(w, axis=1) < _FLOOR)
    while bad.size:
        j = int(bad[0])
        log.warning("Bessel path reached numerical zero at step %d; redrawing the increment", j)
        steps[j] = sqdt[j] * rng.standard_normal(3)
        redrawn += 1
        w = np.cumsum(steps, axis=0)
        w[:, 0] += 1.0
        bad = np.flatnonzero(np.linalg.norm(w, axis=1) < _FLOOR)
    return np.vstack([[1.0, 0.0, 0.0], w]), redrawn


class _Normals:
    """Standard normals drawn from ``rng`` in blocks and handed out in order."""

    def __init__(self, rng, block: int = 3 * 1024):
        self._rng = rng
        self._block = block
        self._buf: list[float] = []
        self._pos = 0

    def three(self) -> tuple[float, float, float]:
        if self._pos + 3 > len(self._buf):
            self._buf = self._rng.standard_normal(self._block).tolist()
            self._pos = 0
        p = self._pos
        self._pos = p + 3
        b = self._buf
        return b[p], b[p + 1], b[p + 2]


def _bisect(normals: _Normals, a, b, ref, spec) -> tuple[list, int]:
    """Locate the first crossing inside the bracket (a, b].

    ``a`` and ``b`` are (t, w, y) points with ``w`` a 3-tuple; Y has not
    crossed at ``a`` and has crossed at ``b``. Midpoints are drawn from the
    Brownian bridge between the bracket ends. Returns the added points in
    time order and the position of the located crossing among
    ``added + [b]``.
    """
    thr, tol = spec.threshold, spec.refine_tol
    added = []
    for _ in range(spec.max_bisections):
        if abs(b[2] - ref) - thr <= tol:
            break
        ta, tb = a[0], b[0]
        tm = 0.5 * (ta + tb)
        if not ta < tm < tb:
            break
        sd = math.sqrt(0.25 * (tb - ta))
        z0, z1, z2 = normals.three()
        (a0, a1, a2), (b0, b1, b2) = a[1], b[1]
        wm = (0.5 * (a0 + b0) + sd * z0, 0.5 * (a1 + b1) + sd * z1, 0.5 * (a2 + b2) + sd * z2)
        rm = math.sqrt(wm[0] * wm[0] + wm[1] * wm[1] + wm[2] * wm[2])
        if rm < _FLOOR:
            continue
        mid = (tm, wm, 1.0 / rm - 1.0)
        added.append(mid)
        if abs(mid[2] - ref) >= thr:
            b = mid
        else:
            a = mid
    added.sort(key=lambda p: p[0])
    hit = next((i for i, p in enumerate(added) if p is b), len(added))
    return added, hit


def _base_point(t, w, y, i):
    return (float(t[i]), tuple(w[i].tolist()), float(y[i]))


def _base(spec: StrictLocalMartSpec, rng):
    bt = spec.time_grid().times
    bw, redrawn = _walk(rng, np.sqrt(np.diff(bt)))
    return bt, bw, 1.0 / np.linalg.norm(bw, axis=1) - 1.0, redrawn


def base_values(spec: StrictLocalMartSpec, scenario_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Base-grid times and Y for one scenario, without building pieces.

    These are the values :func:`example_scenario` has at base grid times
    (refinement only adds points), so they stay available for scenarios
    whose piece count exceeds the cap.
    """
    bt, _, by, _ = _base(spec, _transient_generator(spec.seed, scenario_id))
    return bt, by


def example_scenario(spec: StrictLocalMartSpec, scenario_id: int) -> ExampleScenario:
    """One Example path; raises PieceCapError once it needs more than ``max_pieces`` pieces."""
    grid = spec.time_grid()
    rng = _transient_generator(spec.seed, scenario_id)
    bt, bw, by, redrawn = _base(spec, rng)
    normals = _Normals(rng)
    m = grid.last
    horizon = float(bt[m])
    thr = spec.threshold
    refine = spec.refine_tol is not None

    # output chunks: numpy slices of the base grid or lists of single points
    out_t: list = [bt[:1]]
    out_y: list = [by[:1]]
    pt_t: list[float] = []
    pt_y: list[float] = []
    count = 1
    resets = [0]
    ref = 0.0
    prev = _base_point(bt, bw, by, 0)
    cursor = 1
    pending: list = []

    def flush():
        if pt_t:
            out_t.append(np.array(pt_t))
            out_y.append(np.array(pt_y))
            pt_t.clear()
            pt_y.clear()

    while True:
        if pending:
            q = pending.pop(0)
        else:
            c, idx = cursor, None
            while c <= m:
                hit = np.flatnonzero(np.abs(by[c : c + 512] - ref) >= thr)
                if hit.size:
                    idx = c + int(hit[0])
                    break
                c += 512
            stop = m + 1 if idx is None else idx
            if stop > cursor:
                flush()
                out_t.append(bt[cursor:stop])
                out_y.append(by[cursor:stop])
                count += stop - cursor
                prev = _base_point(bt, bw, by, stop - 1)
            if idx is None:
                break
            q = _base_point(bt, bw, by, idx)
            cursor = idx + 1
        if abs(q[2] - ref) < thr:
            pt_t.append(q[0])
            pt_y.append(q[2])
            count += 1
            prev = q
            if q[0] == horizon:
                break
            continue
        added, h = _bisect(normals, prev, q, ref, spec) if refine else ([], 0)
        pts = added + [q]
        for p in pts[: h + 1]:
            pt_t.append(p[0])
            pt_y.append(p[2])
        count += h + 1
        hp = pts[h]
        if hp[0] == horizon:
            break
        resets.append(count - 1)
        if len(resets) > spec.max_pieces:
            raise PieceCapError(f"scenario {scenario_id} needs more than {spec.max_pieces} pieces")
        ref = hp[2]
        prev = hp
        pending = pts[h + 1 :] + pending
    flush()

    times = np.concatenate(out_t)
    y = np.concatenate(out_y)
    g = TimeGrid(times)
    bounds = np.array(resets + [g.last])
    lengths = np.diff(bounds)
    x = y[1:] - np.repeat(y[bounds[:-1]], lengths)
    splits = np.split(x[:, None], np.cumsum(lengths)[:-1])
    zero = np.zeros(1)
    path = PiecewisePath.from_arrays(g, zero, resets, [zero] * len(resets), splits)
    over = max(0.0, float(np.abs(x).max()) - thr)
    return ExampleScenario(scenario_id, path, y, over, redrawn)


def iter_strict_local_mart(
    spec: StrictLocalMartSpec, ids: Sequence[int] | None = None
) -> Iterator[ExampleScenario]:
    ids = range(spec.n_scenarios) if ids is None else ids
    for i in ids:
        yield example_scenario(spec, i)


def simulate_strict_local_mart(spec: StrictLocalMartSpec) -> list[PiecewisePath]:
    return [s.path for s in iter_strict_local_mart(spec)]
