"""Dissection of a path and a strategy along a reset sequence.

For reset times tau_0 = 0 < tau_1 < ... the piece X^{k,n} is zero up to
tau_{k-1}, equals X - X^+_{tau_{k-1}} on (tau_{k-1}, tau_k] and is frozen
afterwards; n is the dimension of X^+_{tau_{k-1}}. Pieces are materialized
on the full grid so that the integral is a plain sum over k.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .integration import GainsPath
from .paths import GridError, PathPiece, PiecewisePath, minimal_reset_sequence
from .strategies import as_holdings

__all__ = [
    "ResetSequenceError",
    "ScenarioCell",
    "DissectedPiece",
    "check_resets",
    "dissect_path",
    "dissect_strategy",
    "refine_resets",
    "repiece",
    "scenario_cells",
    "reassemble",
    "integrate_dissected",
]


class ResetSequenceError(ValueError):
    """A proposed reset sequence is not valid for the path."""


@dataclass(frozen=True)
class ScenarioCell:
    scenario_id: int
    k: int
    n: int


@dataclass(frozen=True, eq=False)
class DissectedPiece:
    k: int
    n: int
    values: np.ndarray
    strategy_values: np.ndarray | None = None
    start: int = 0
    end: int = 0


def check_resets(path: PiecewisePath, resets: Sequence[float]) -> list[int]:
    """Grid indices of ``resets`` after checking they form a reset sequence."""
    g = path.grid
    idx = [g.index_of(t) for t in resets]
    if not idx or idx[0] != 0:
        raise ResetSequenceError("a reset sequence starts at 0")
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ResetSequenceError("reset times must be strictly increasing")
    if idx[-1] >= g.last:
        raise ResetSequenceError("reset times must lie before the horizon")
    have = set(idx)
    missing = [t for t in minimal_reset_sequence(path) if g.index_of(t) not in have]
    if missing:
        raise ResetSequenceError(f"reset sequence misses the discontinuities at {missing}")
    return idx


def _segments(path: PiecewisePath, idx: list[int]):
    """(k, a, b, X^+_a, X on (a, b]) for each piece of the reset sequence."""
    bounds = idx + [path.grid.last]
    for k, (a, b) in enumerate(zip(bounds[:-1], bounds[1:]), start=1):
        p = path.piece_at_index(a + 1)
        if b > p.end:
            raise ResetSequenceError(f"segment ({a}, {b}] crosses a path reset")
        rl = p.start_right_limit if a == p.start else p.samples[a - p.start - 1]
        yield k, a, b, np.asarray(rl), np.asarray(p.samples)[a - p.start : b - p.start]


def dissect_path(path: PiecewisePath, resets: Sequence[float] | None = None) -> list[DissectedPiece]:
    idx = check_resets(path, path.reset_times if resets is None else resets)
    m = path.grid.last
    out = []
    for k, a, b, rl, seg in _segments(path, idx):
        vals = np.zeros((m + 1, rl.size))
        vals[a + 1 : b + 1] = seg - rl
        vals[b + 1 :] = vals[b]
        vals.setflags(write=False)
        out.append(DissectedPiece(k, rl.size, vals, None, a, b))
    return out


def dissect_strategy(h, path: PiecewisePath, resets: Sequence[float] | None = None) -> list[DissectedPiece]:
    """Dissect ``path`` and the holdings of ``h`` together.

    Row i of ``strategy_values`` is the position over (t_{i-1}, t_i]; it is
    zero outside (tau_{k-1}, tau_k].
    """
    hold = as_holdings(h, path)
    pieces = dissect_path(path, resets)
    m = path.grid.last
    out = []
    for d in pieces:
        hv = np.zeros((m + 1, d.n))
        for i in range(d.start + 1, d.end + 1):
            hv[i] = hold.row(i)
        hv.setflags(write=False)
        out.append(DissectedPiece(d.k, d.n, d.values, hv, d.start, d.end))
    return out


def refine_resets(resets: Sequence[float], extra_times: Iterable[float], path: PiecewisePath) -> list[float]:
    """Sorted union of ``resets`` and ``extra_times`` (grid times before T)."""
    g = path.grid
    idx = {g.index_of(t) for t in resets}
    for t in extra_times:
        i = g.index_of(t)
        if i >= g.last:
            raise GridError("a reset time must lie before the horizon")
        idx.add(i)
    return [float(g.times[i]) for i in sorted(idx)]


def repiece(path: PiecewisePath, resets: Sequence[float]) -> PiecewisePath:
    """The same path stored with pieces cut at ``resets``."""
    idx = check_resets(path, resets)
    rls, blocks = [], []
    for _, _, _, rl, seg in _segments(path, idx):
        rls.append(rl)
        blocks.append(seg)
    return PiecewisePath.from_arrays(path.grid, path.initial_value, idx, rls, blocks)


def scenario_cells(paths: Sequence[PiecewisePath], resets: Sequence[Sequence[float]] | None = None) -> list[ScenarioCell]:
    """The (k, n) cell of every scenario for each k whose piece starts before T."""
    cells = []
    for sid, path in enumerate(paths):
        r = path.reset_times if resets is None else resets[sid]
        for k, _, _, rl, _ in _segments(path, check_resets(path, r)):
            cells.append(ScenarioCell(sid, k, rl.size))
    return cells


def reassemble(grid, initial_value, pieces: Sequence[DissectedPiece], right_limits: Sequence) -> PiecewisePath:
    """Inverse of dissection: X = X^{k,n} + X^+_{tau_{k-1}} on each piece."""
    out = []
    for d, rl in zip(pieces, right_limits):
        rl = np.asarray(rl, dtype=float)
        out.append(PathPiece(d.k, d.start, d.end, rl, d.values[d.start + 1 : d.end + 1] + rl))
    return PiecewisePath(grid, initial_value, out)


def integrate_dissected(h, path: PiecewisePath, resets: Sequence[float] | None = None) -> GainsPath:
    """H_0'X_0 + sum_k (H^{k,n} . X^{k,n}), each term summed over the full grid."""
    hold = as_holdings(h, path)
    seed = float(np.dot(hold.initial, path.initial_value))
    total = np.zeros(len(path.grid))
    for d in dissect_strategy(hold, path, resets):
        dx = np.diff(d.values, axis=0)
        inc = np.einsum("ij,ij->i", d.strategy_values[1:], dx)
        total[1:] += np.cumsum(inc)
    values = seed + total
    return GainsPath(path.grid, values)
