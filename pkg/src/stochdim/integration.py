"""Pasted stochastic integral H.X on the grid.

Within a piece the integral is the forward sum of H'(X_u - X_s). At a reset
the next piece starts from the stored right limit, so the right jump of X
never enters the gains.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .paths import GridError, PathPiece, PiecewisePath, TimeGrid
from .strategies import Holdings, as_holdings

__all__ = ["GainsPath", "integrate", "piece_increments", "stop", "stop_path", "jump_exposure"]


@dataclass(frozen=True, eq=False)
class GainsPath:
    """H.X at every grid time.

    ``piece_start_levels[k]`` is the level piece k+1 starts from; it equals
    the value at the piece's left end, which is what conservation across
    resets means.
    """

    grid: TimeGrid
    values: np.ndarray
    reset_indices: tuple = ()
    piece_start_levels: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    def at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])

    def __add__(self, c: float) -> "GainsPath":
        return GainsPath(self.grid, self.values + c, self.reset_indices,
                         tuple(x + c for x in self.piece_start_levels))


def piece_increments(piece: PathPiece, block: np.ndarray) -> np.ndarray:
    """H'(X_u - X_s) for each grid interval of ``piece``, starting from X^+."""
    return np.einsum("ij,ij->i", block, piece.increments)


def integrate(h, path: PiecewisePath) -> GainsPath:
    """H.X on the grid, seeded with H_0'X_0.

    ``h`` is a :class:`~stochdim.strategies.Strategy` or holdings already
    materialized on ``path``.
    """
    hold = as_holdings(h, path)
    values = np.empty(len(path.grid))
    values[0] = float(np.dot(hold.initial, path.initial_value))
    for p, block in zip(path.pieces, hold.blocks):
        values[p.start + 1 : p.end + 1] = piece_increments(p, block)
    # pieces tile (0, T], so one running sum carries each piece's end level
    # into the next piece: the right jump at a reset adds nothing
    values.cumsum(out=values)
    starts = [p.start for p in path.pieces]
    return GainsPath(path.grid, values, tuple(starts), tuple(values[starts].tolist()))


def stop(y, alpha: float):
    """Freeze ``y`` (gains or a path) at grid time ``alpha``."""
    if isinstance(y, PiecewisePath):
        return stop_path(y, alpha)
    a = y.grid.index_of(alpha)
    v = np.array(y.values)
    v[a + 1 :] = v[a]
    keep = [i for i, r in enumerate(y.reset_indices) if r <= a]
    return GainsPath(
        y.grid,
        v,
        tuple(y.reset_indices[i] for i in keep),
        tuple(y.piece_start_levels[i] for i in keep),
    )


def stop_path(path: PiecewisePath, alpha: float) -> PiecewisePath:
    """X^alpha. The piece holding alpha is extended flat to the horizon."""
    g = path.grid
    a = g.index_of(alpha)
    if a == g.last:
        return path
    if a == 0:
        x0 = path.initial_value
        return PiecewisePath.from_arrays(g, x0, [0], [x0], [np.tile(x0, (g.last, 1))])
    pieces = []
    for p in path.pieces:
        if p.start >= a:
            break
        if p.end < a:
            pieces.append(p)
            continue
        kept = np.asarray(p.samples)[: a - p.start]
        flat = np.tile(kept[-1], (g.last - a, 1))
        pieces.append(PathPiece(p.index, p.start, g.last, p.start_right_limit, np.vstack([kept, flat])))
        break
    else:
        raise GridError("alpha lies beyond the path")
    # when alpha is a reset time the stopped path has no jump there
    return PiecewisePath(g, path.initial_value, pieces)


def jump_exposure(h, path: PiecewisePath, jump_times: Iterable[float]) -> float:
    """Smallest H'dX over the marked left-jump times; +inf when none are marked."""
    hold = as_holdings(h, path)
    worst = np.inf
    for t in jump_times:
        i = path.grid.index_of(t)
        if i == 0:
            raise GridError("a left jump cannot occur at time 0")
        p = path.piece_at_index(i)
        j = i - p.start - 1
        prev = p.start_right_limit if j == 0 else p.samples[j - 1]
        worst = min(worst, float(np.dot(hold.blocks[p.index - 1][j], p.samples[j] - prev)))
    return worst
