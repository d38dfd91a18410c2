"""Paths of stochastic dimension on a discrete time grid.

A path lives in the union of all R^n. It is stored as an initial value plus
an ordered list of pieces; piece k covers the grid times in (tau_{k-1}, tau_k]
and has a fixed dimension. The value just after tau_{k-1} (the right limit)
is stored with the piece, so a path may jump and change dimension from the
right at every piece boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GridError",
    "TimeGrid",
    "DimensionedVector",
    "PathPiece",
    "PiecewisePath",
    "RawPathRecord",
    "Violation",
    "validate_path",
    "value_at",
    "right_limit_at",
    "local_norm",
    "minimal_reset_sequence",
    "DEFAULT_MAX_PIECES",
]

DEFAULT_MAX_PIECES = 64


class GridError(ValueError):
    """A time that should lie on the grid does not."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class _cached:
    """Compute once per instance, then read from the instance dict.

    Like ``functools.cached_property`` minus its per-access lock, which shows
    up in tight simulation loops on Python 3.10.
    """

    def __init__(self, fn):
        self.fn = fn
        self.name = fn.__name__
        self.__doc__ = fn.__doc__

    def __get__(self, obj, cls=None):
        if obj is None:
            return self
        value = obj.__dict__[self.name] = self.fn(obj)
        return value


def _owned(a) -> np.ndarray:
    """A read-only float array; read-only float input is shared, not copied."""
    if isinstance(a, np.ndarray) and a.dtype == np.float64 and not a.flags.writeable:
        return a
    return _frozen(np.array(a, dtype=float))


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise GridError("a grid needs at least two times")
        if t[0] != 0.0:
            raise GridError(f"grid must start at 0, got {t[0]!r}")
        if not np.all(np.diff(t) > 0):
            raise GridError("grid times must be strictly increasing")
        if not np.all(np.isfinite(t)):
            raise GridError("grid times must be finite")
        object.__setattr__(self, "times", _frozen(t))

    @classmethod
    def uniform(cls, horizon: float, step: float) -> "TimeGrid":
        n = int(round(horizon / step))
        if n < 1 or not math.isclose(n * step, horizon, rel_tol=1e-9):
            raise GridError(f"step {step!r} does not divide horizon {horizon!r}")
        return cls(np.linspace(0.0, horizon, n + 1))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @_cached
    def steps(self) -> tuple:
        """Step lengths and their square roots."""
        dt = np.diff(self.times)
        return _frozen(dt), _frozen(np.sqrt(dt))

    @property
    def last(self) -> int:
        """Index of the horizon."""
        return self.times.size - 1

    def __len__(self) -> int:
        return self.times.size

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; raises GridError when ``t`` is off the grid."""
        times = self.times
        i = int(np.searchsorted(times, t))
        tol = 1e-12 * max(1.0, abs(times[-1]))
        for j in (i - 1, i):
            if 0 <= j < times.size and abs(times[j] - t) <= tol:
                return j
        raise GridError(f"time {t!r} is not on the grid")

    def snap_up(self, t: float) -> int:
        """Index of the first grid time >= t (within rounding)."""
        tol = 1e-12 * max(1.0, abs(self.times[-1]))
        return int(np.searchsorted(self.times, t - tol, side="left"))

    def snap_up_many(self, ts: np.ndarray) -> np.ndarray:
        tol = 1e-12 * max(1.0, abs(self.times[-1]))
        return np.searchsorted(self.times, ts - tol, side="left")


class DimensionedVector:
    """A point of R^n tagged with its dimension n >= 1."""

    __slots__ = ("_c",)

    def __init__(self, components: Iterable[float]):
        c = np.array(components, dtype=float).reshape(-1)
        if c.size < 1:
            raise ValueError("a dimensioned vector has dimension >= 1")
        self._c = _frozen(c)

    @property
    def components(self) -> np.ndarray:
        return self._c

    @property
    def dim(self) -> int:
        return self._c.size

    def __len__(self) -> int:
        return self._c.size

    def __iter__(self):
        return iter(self._c.tolist())

    def __getitem__(self, i):
        return self._c[i]

    def __array__(self, dtype=None, copy=None):
        return self._c if dtype is None else self._c.astype(dtype)

    def __eq__(self, other) -> bool:
        if isinstance(other, DimensionedVector):
            other = other._c
        other = np.asarray(other, dtype=float).reshape(-1)
        return other.shape == self._c.shape and bool(np.all(other == self._c))

    def __hash__(self):
        return hash(self._c.tobytes())

    def __repr__(self) -> str:
        return f"DimensionedVector({self._c.tolist()})"


@dataclass(frozen=True, eq=False)
class PathPiece:
    """Piece k of a path: the grid times with indices in (start, end].

    ``samples[j]`` is the value at grid index ``start + 1 + j``. Samples are a
    2-D array when every row has the piece dimension; ragged input (which only
    arises from untrusted data) is kept as a tuple of rows so that
    :func:`validate_path` can report it.
    """

    index: int
    start: int
    end: int
    start_right_limit: np.ndarray
    samples: np.ndarray | tuple

    def __post_init__(self):
        srl = _frozen(np.array(self.start_right_limit, dtype=float).reshape(-1))
        object.__setattr__(self, "start_right_limit", srl)
        rows = self.samples
        if isinstance(rows, np.ndarray) and rows.ndim == 2:
            s = _owned(rows)
        else:
            rows = [np.array(r, dtype=float).reshape(-1) for r in rows]
            if rows and len({r.size for r in rows}) == 1:
                s = np.vstack(rows)
            elif not rows:
                s = np.empty((0, srl.size))
            else:
                s = tuple(_frozen(r) for r in rows)
        if isinstance(s, np.ndarray):
            _frozen(s)
        object.__setattr__(self, "samples", s)

    @property
    def dim(self) -> int:
        return self.start_right_limit.size

    @property
    def ragged(self) -> bool:
        return not isinstance(self.samples, np.ndarray)

    def sample_dims(self) -> list[int]:
        if self.ragged:
            return [r.size for r in self.samples]
        return [self.samples.shape[1]] * self.samples.shape[0]

    def previous_values(self) -> np.ndarray:
        """Right limits at the left end of each grid interval of the piece."""
        s = self.samples
        return np.vstack([self.start_right_limit[None, :], s[:-1]])

    @_cached
    def increments(self) -> np.ndarray:
        """X_t - X_s over each grid interval (s, t] of the piece, from X^+."""
        s = self.samples
        d = np.empty_like(s)
        d[0] = s[0] - self.start_right_limit
        np.subtract(s[1:], s[:-1], out=d[1:])
        return _frozen(d)


@dataclass(frozen=True, eq=False)
class PiecewisePath:
    grid: TimeGrid
    initial_value: np.ndarray
    pieces: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "initial_value", _frozen(np.array(self.initial_value, dtype=float).reshape(-1))
        )
        object.__setattr__(self, "pieces", tuple(self.pieces))
        ends = np.array([p.end for p in self.pieces], dtype=int)
        object.__setattr__(self, "_ends", _frozen(ends))

    @classmethod
    def from_arrays(
        cls,
        grid: TimeGrid,
        initial_value,
        boundaries: Sequence[int],
        right_limits: Sequence,
        blocks: Sequence,
    ) -> "PiecewisePath":
        """Build from piece boundaries given as grid indices.

        ``boundaries`` are the reset indices 0 = b_0 < b_1 < ...; piece k spans
        (b_{k-1}, b_k] with the final piece ending at the horizon.
        """
        bounds = list(boundaries) + [grid.last]
        pieces = [
            PathPiece(k + 1, bounds[k], bounds[k + 1], right_limits[k], blocks[k])
            for k in range(len(bounds) - 1)
        ]
        return cls(grid, initial_value, pieces)

    # -- structure -----------------------------------------------------
    @property
    def horizon(self) -> float:
        return self.grid.horizon

    @property
    def reset_indices(self) -> list[int]:
        return [p.start for p in self.pieces]

    @property
    def reset_times(self) -> list[float]:
        return [float(self.grid.times[i]) for i in self.reset_indices]

    def piece_at_index(self, i: int) -> PathPiece:
        """The piece owning grid index ``i`` >= 1 (pieces own their right end)."""
        if i < 1 or i > self.grid.last:
            raise GridError(f"grid index {i} has no owning piece")
        k = int(np.searchsorted(self._ends, i, side="left"))
        if k >= len(self.pieces) or not (self.pieces[k].start < i <= self.pieces[k].end):
            raise GridError(f"grid index {i} is not covered by any piece")
        return self.pieces[k]

    def value_at_index(self, i: int) -> np.ndarray:
        if i == 0:
            return self.initial_value
        p = self.piece_at_index(i)
        return p.samples[i - p.start - 1]

    def right_limit_at_index(self, i: int) -> np.ndarray:
        if i >= self.grid.last:
            raise GridError("no right limit is stored at the horizon")
        for p in self.pieces:
            if p.start == i:
                return p.start_right_limit
        return self.value_at_index(i)

    def dim_at_index(self, i: int) -> int:
        return self.value_at_index(i).size

    def __eq__(self, other) -> bool:
        if not isinstance(other, PiecewisePath):
            return NotImplemented
        if self.grid != other.grid or not np.array_equal(self.initial_value, other.initial_value):
            return False
        if len(self.pieces) != len(other.pieces):
            return False
        for a, b in zip(self.pieces, other.pieces):
            if (a.index, a.start, a.end) != (b.index, b.start, b.end):
                return False
            if not np.array_equal(a.start_right_limit, b.start_right_limit):
                return False
            if a.ragged or b.ragged:
                if len(a.samples) != len(b.samples) or not all(
                    np.array_equal(x, y) for x, y in zip(a.samples, b.samples)
                ):
                    return False
            elif not np.array_equal(a.samples, b.samples):
                return False
        return True

    __hash__ = None


@dataclass(frozen=True)
class Violation:
    piece: int | None
    message: str

    def __str__(self) -> str:
        where = "path" if self.piece is None else f"piece {self.piece}"
        return f"{where}: {self.message}"


def validate_path(path: PiecewisePath, max_pieces: int | None = None) -> list[Violation]:
    """Every broken invariant of ``path``; an empty list means the path is legal."""
    out: list[Violation] = []
    last = path.grid.last
    if path.initial_value.size < 1:
        out.append(Violation(None, "initial value has dimension 0"))
    if not path.pieces:
        return out + [Violation(None, "path has no pieces")]
    if max_pieces is not None and len(path.pieces) > max_pieces:
        out.append(Violation(None, f"{len(path.pieces)} pieces exceed the cap of {max_pieces}"))
    expected_start = 0
    for pos, p in enumerate(path.pieces):
        k = p.index
        if k != pos + 1:
            out.append(Violation(k, f"piece index {k} found at position {pos + 1}"))
        if p.start != expected_start:
            kind = "gap" if p.start > expected_start else "overlap"
            t0 = path.grid.times[min(expected_start, last)]
            t1 = path.grid.times[min(p.start, last)]
            out.append(Violation(k, f"tiling {kind} between t={float(t0)!r} and t={float(t1)!r}"))
        if not (0 <= p.start < p.end <= last):
            out.append(Violation(k, f"interval ({p.start}, {p.end}] is empty or leaves the grid"))
        if p.dim < 1:
            out.append(Violation(k, "right limit at piece start has dimension 0"))
        n_rows = len(p.samples)
        if n_rows != p.end - p.start:
            out.append(
                Violation(k, f"{n_rows} samples but the piece spans {p.end - p.start} grid times")
            )
        for j, d in enumerate(p.sample_dims()):
            if d != p.dim:
                t = path.grid.times[min(p.start + 1 + j, last)]
                out.append(Violation(k, f"sample at t={float(t)!r} has dimension {d}, piece has {p.dim}"))
        finite = np.all(np.isfinite(p.start_right_limit)) and all(
            np.all(np.isfinite(r)) for r in (p.samples if p.ragged else [p.samples])
        )
        if not finite:
            out.append(Violation(k, "non-finite value"))
        expected_start = p.end
    if expected_start != last:
        t = path.grid.times[min(expected_start, last)]
        out.append(Violation(path.pieces[-1].index, f"pieces stop at t={float(t)!r} before the horizon"))
    if not np.all(np.isfinite(path.initial_value)):
        out.append(Violation(None, "non-finite initial value"))
    return out


def value_at(path: PiecewisePath, t: float) -> DimensionedVector:
    return DimensionedVector(path.value_at_index(path.grid.index_of(t)))


def right_limit_at(path: PiecewisePath, t: float) -> DimensionedVector:
    return DimensionedVector(path.right_limit_at_index(path.grid.index_of(t)))


def local_norm(v, p: float = 2) -> float:
    """The l_p norm of ``v`` taken in whichever R^n it lives in."""
    if not p >= 1:
        raise ValueError(f"local norms need p >= 1, got {p!r}")
    a = np.abs(np.asarray(v, dtype=float).reshape(-1))
    if a.size == 0:
        return 0.0
    top = float(a.max())
    if math.isinf(p) or top == 0.0 or math.isinf(top):
        return top
    if p == 1:
        return float(a.sum())
    if p == 2:
        return math.hypot(*a.tolist())
    # scaled so that tiny or huge components neither underflow nor overflow
    return top * float(np.sum((a / top) ** p) ** (1.0 / p))


@dataclass(frozen=True, eq=False)
class RawPathRecord:
    """Dense record: the value and the right limit at every grid time.

    ``right_limits`` has one entry per grid time before the horizon.
    """

    grid: TimeGrid
    values: tuple
    right_limits: tuple = field(default=())

    def __post_init__(self):
        vals = tuple(_frozen(np.array(v, dtype=float).reshape(-1)) for v in self.values)
        rls = tuple(_frozen(np.array(v, dtype=float).reshape(-1)) for v in self.right_limits)
        if len(vals) != len(self.grid):
            raise ValueError("one value per grid time is required")
        if len(rls) != len(self.grid) - 1:
            raise ValueError("one right limit per grid time before the horizon is required")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "right_limits", rls)

    @classmethod
    def from_path(cls, path: PiecewisePath) -> "RawPathRecord":
        g = path.grid
        vals = [path.value_at_index(i) for i in range(len(g))]
        rls = [path.right_limit_at_index(i) for i in range(g.last)]
        return cls(g, tuple(vals), tuple(rls))

    def jumps_from_right(self, tolerance: float = 0.0) -> list[bool]:
        """Whether X^+ != X at each grid time before the horizon."""
        out = []
        for v, r in zip(self.values, self.right_limits):
            if v.size != r.size:
                out.append(True)
            elif tolerance == 0.0:
                out.append(bool(np.any(v != r)))
            else:
                out.append(bool(np.any(np.abs(v - r) > tolerance)))
        return out

    def to_path(self, resets: Sequence[float] | None = None) -> PiecewisePath:
        """Cut the record into pieces at ``resets`` (default: the minimal ones)."""
        if resets is None:
            resets = minimal_reset_sequence(self)
        idx = [self.grid.index_of(t) for t in resets]
        bounds = idx + [self.grid.last]
        rls, blocks = [], []
        for a, b in zip(bounds[:-1], bounds[1:]):
            rls.append(self.right_limits[a])
            blocks.append(list(self.values[a + 1 : b + 1]))
        return PiecewisePath.from_arrays(self.grid, self.values[0], idx, rls, blocks)


def minimal_reset_sequence(raw: RawPathRecord | PiecewisePath, tolerance: float = 0.0) -> list[float]:
    """0 followed by every grid time t < T with X^+_t != X_t.

    A change of dimension always counts as a jump. Values are compared exactly
    unless ``tolerance`` is positive.
    """
    if isinstance(raw, PiecewisePath):
        raw = RawPathRecord.from_path(raw)
    times = raw.grid.times
    flags = raw.jumps_from_right(tolerance)
    return [0.0] + [float(times[i]) for i, f in enumerate(flags) if f and i > 0]
