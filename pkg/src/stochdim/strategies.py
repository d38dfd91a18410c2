"""Trading strategies and their grid materialization.

Holdings for the grid interval (t_{i-1}, t_i] are fixed using information up
to t_{i-1} only. A strategy is either an explicit step table or a rule that
is called once per grid interval with a read-only view of the history.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .paths import GridError, PiecewisePath, _frozen, _owned

__all__ = [
    "DimensionMismatchError",
    "LookaheadError",
    "Holdings",
    "History",
    "Strategy",
    "StepStrategy",
    "RuleStrategy",
    "Rule",
    "BuyHold",
    "ConstantShare",
    "ShortOne",
    "EqualWeight",
    "ZeroStrategy",
    "named_rule",
    "RULE_NAMES",
    "as_holdings",
]


class DimensionMismatchError(ValueError):
    """Holdings whose dimension differs from the price dimension."""

    def __init__(self, time: float, expected: int, got: int):
        super().__init__(f"holdings at t={time!r} have dimension {got}, prices have {expected}")
        self.time = time
        self.expected = expected
        self.got = got


class LookaheadError(RuntimeError):
    """A rule asked for information beyond the current time."""


@dataclass(frozen=True, eq=False)
class Holdings:
    """A strategy evaluated on one path.

    ``blocks[k]`` holds one row per grid index in (start_k, end_k] of path
    piece k: row j is the position held over the interval ending at grid
    index start_k + 1 + j.
    """

    path: PiecewisePath
    initial: np.ndarray
    blocks: tuple

    def __post_init__(self):
        init = np.array(self.initial, dtype=float).reshape(-1)
        init.setflags(write=False)
        object.__setattr__(self, "initial", init)
        blocks = []
        for p, b in zip(self.path.pieces, self.blocks):
            b = _owned(b).reshape(p.end - p.start, -1)
            blocks.append(b)
        object.__setattr__(self, "blocks", tuple(blocks))
        self.check_dims()

    def check_dims(self):
        times = self.path.grid.times
        if self.initial.size != self.path.initial_value.size:
            raise DimensionMismatchError(0.0, self.path.initial_value.size, self.initial.size)
        for p, b in zip(self.path.pieces, self.blocks):
            if b.shape[1] != p.dim:
                raise DimensionMismatchError(float(times[p.start + 1]), p.dim, b.shape[1])

    def row(self, i: int) -> np.ndarray:
        p = self.path.piece_at_index(i)
        return self.blocks[p.index - 1][i - p.start - 1]

    def _combine(self, other: "Holdings", a: float, b: float) -> "Holdings":
        if other.path is not self.path and other.path != self.path:
            raise ValueError("holdings live on different paths")
        return Holdings(
            self.path,
            a * self.initial + b * other.initial,
            [a * x + b * y for x, y in zip(self.blocks, other.blocks)],
        )

    def __add__(self, other: "Holdings") -> "Holdings":
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other: "Holdings") -> "Holdings":
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, c: float) -> "Holdings":
        return Holdings(self.path, c * self.initial, [c * x for x in self.blocks])

    __rmul__ = __mul__

    def restricted(self, alpha_index: int) -> "Holdings":
        """1_{[0, alpha]} H + 0^(N): flat after grid index ``alpha_index``."""
        blocks = []
        for p, b in zip(self.path.pieces, self.blocks):
            idx = np.arange(p.start + 1, p.end + 1)
            blocks.append(np.where((idx <= alpha_index)[:, None], b, 0.0))
        return Holdings(self.path, self.initial, blocks)

    def without_initial(self) -> "Holdings":
        return Holdings(self.path, np.zeros_like(self.initial), self.blocks)


class History:
    """What a rule may see when choosing holdings for (t_i, t_{i+1}].

    ``right_limit`` is X^+ at t_i; at a reset it already has the dimension of
    the new piece. ``gains`` is H.X at t_i.
    """

    __slots__ = ("_path", "index", "time", "right_limit", "gains", "previous")

    def __init__(self, path, index, right_limit, gains, previous):
        self._path = path
        self.index = index
        self.time = float(path.grid.times[index])
        self.right_limit = right_limit
        self.gains = gains
        self.previous = previous

    @property
    def dim(self) -> int:
        return self.right_limit.size

    def _check(self, j: int):
        if j > self.index or j < 0:
            raise LookaheadError(f"grid index {j} is not in the history up to {self.index}")

    def value(self, j: int) -> np.ndarray:
        self._check(j)
        return self._path.value_at_index(j)

    def right_limit_at(self, j: int) -> np.ndarray:
        self._check(j)
        return self._path.right_limit_at_index(j)

    def time_at(self, j: int) -> float:
        self._check(j)
        return float(self._path.grid.times[j])


class Strategy:
    """Base class; subclasses produce :class:`Holdings` on a given path."""

    def materialize(self, path: PiecewisePath) -> Holdings:
        raise NotImplementedError


def as_holdings(h, path: PiecewisePath) -> Holdings:
    if isinstance(h, Holdings):
        if h.path is not path and h.path != path:
            raise ValueError("holdings were materialized on a different path")
        return h
    return h.materialize(path)


class StepStrategy(Strategy):
    """Holdings H_i constant on (alpha_i, alpha_{i+1}], zero after ``end``.

    ``rebalances`` is a sequence of (alpha_i, H_i); the last position runs to
    the horizon unless ``end`` is given. Before alpha_1 the position is zero.
    """

    def __init__(self, rebalances: Sequence[tuple[float, Sequence[float]]], initial=None, end=None):
        items = sorted(((float(a), np.asarray(h, dtype=float).reshape(-1)) for a, h in rebalances),
                       key=lambda x: x[0])
        alphas = [a for a, _ in items]
        if len(set(alphas)) != len(alphas):
            raise ValueError("rebalance times must be distinct")
        self.alphas = np.array(alphas, dtype=float)
        self.positions = [h for _, h in items]
        self.initial = None if initial is None else np.asarray(initial, dtype=float).reshape(-1)
        self.end = None if end is None else float(end)

    def materialize(self, path: PiecewisePath) -> Holdings:
        g = path.grid
        for a in self.alphas:
            g.index_of(a)
        end_idx = g.last if self.end is None else g.index_of(self.end)
        init = np.zeros(path.initial_value.size) if self.initial is None else self.initial
        blocks = []
        for p in path.pieces:
            t = g.times[p.start + 1 : p.end + 1]
            which = np.searchsorted(self.alphas, t, side="left") - 1
            block = np.zeros((t.size, p.dim))
            for j in np.unique(which):
                if j < 0:
                    continue
                rows = (which == j) & (np.arange(p.start + 1, p.end + 1) <= end_idx)
                if not rows.any():
                    continue
                h = self.positions[j]
                if h.size != p.dim:
                    first = int(np.flatnonzero(rows)[0])
                    raise DimensionMismatchError(float(t[first]), p.dim, h.size)
                block[rows] = h
            blocks.append(block)
        return Holdings(path, init, blocks)


class Rule:
    """A holdings rule: ``rule(history) -> position`` for the next interval.

    Subclasses may also define ``piece_block(start_value, samples, gains)``, a
    vectorized equivalent over a whole piece; it must agree with ``__call__``.
    """

    name = "rule"

    def __call__(self, history: History) -> np.ndarray:
        raise NotImplementedError

    piece_block = None
    # rules that never read ``history.gains`` may set this to skip tracking it
    needs_gains = True


class RuleStrategy(Strategy):
    def __init__(self, rule: Callable[[History], Sequence[float]], initial=None, fast: bool = True):
        self.rule = rule
        self.initial = None if initial is None else np.asarray(initial, dtype=float).reshape(-1)
        self.fast = fast

    def materialize(self, path: PiecewisePath) -> Holdings:
        init = np.zeros(path.initial_value.size) if self.initial is None else self.initial
        if init.size != path.initial_value.size:
            raise DimensionMismatchError(0.0, path.initial_value.size, init.size)
        gains = float(np.dot(init, path.initial_value))
        block_fn = getattr(self.rule, "piece_block", None) if self.fast else None
        times = path.grid.times
        blocks = []
        previous = None
        for p in path.pieces:
            block = None
            if block_fn is not None and not p.ragged:
                block = block_fn(p.start_right_limit, p.samples, gains)
            if block is None:
                block = np.empty((p.end - p.start, p.dim))
                x_prev = p.start_right_limit
                for j in range(p.end - p.start):
                    i = p.start + j
                    h = np.asarray(self.rule(History(path, i, x_prev, gains, previous)), dtype=float)
                    if h.shape != (p.dim,):
                        raise DimensionMismatchError(float(times[i + 1]), p.dim, h.size)
                    block[j] = h
                    x_next = p.samples[j]
                    gains = gains + float(np.dot(h, x_next - x_prev))
                    previous, x_prev = h, x_next
                blocks.append(block)
                continue
            block = _frozen(np.asarray(block, dtype=float))
            if block.shape != (p.end - p.start, p.dim):
                raise DimensionMismatchError(float(times[p.start + 1]), p.dim, block.shape[-1])
            blocks.append(block)
            previous = block[-1]
            if getattr(self.rule, "needs_gains", True):
                # same summation order as integrate: running total first
                inc = np.einsum("ij,ij->i", block, p.increments)
                inc[0] += gains
                gains = float(inc.cumsum()[-1])
        return Holdings(path, init, blocks)


class ZeroStrategy(Strategy):
    def materialize(self, path: PiecewisePath) -> Holdings:
        return Holdings(
            path,
            np.zeros(path.initial_value.size),
            [np.zeros((p.end - p.start, p.dim)) for p in path.pieces],
        )


class BuyHold(Rule):
    """A fixed number of shares of every listed asset."""

    name = "buy-hold"
    needs_gains = False

    def __init__(self, shares: float = 1.0):
        self.shares = float(shares)

    def __call__(self, history):
        return np.full(history.dim, self.shares)

    def piece_block(self, start_value, samples, gains):
        return np.full((len(samples), start_value.size), self.shares)


class ConstantShare(Rule):
    """``shares`` of the asset at position ``asset``, when it exists."""

    name = "constant-share"
    needs_gains = False

    def __init__(self, asset: int = 0, shares: float = 1.0):
        self.asset = int(asset)
        self.shares = float(shares)

    def __call__(self, history):
        h = np.zeros(history.dim)
        if self.asset < history.dim:
            h[self.asset] = self.shares
        return h

    def piece_block(self, start_value, samples, gains):
        block = np.zeros((len(samples), start_value.size))
        if self.asset < start_value.size:
            block[:, self.asset] = self.shares
        return block


class ShortOne(ConstantShare):
    name = "short-one"

    def __init__(self, asset: int = 0):
        super().__init__(asset, -1.0)


class EqualWeight(Rule):
    """Equal dollar weights over assets with positive price.

    Wealth is ``notional + gains``; nothing is held once it is nonpositive.
    """

    name = "equal-weight"

    def __init__(self, notional: float = 1.0):
        self.notional = float(notional)

    def __call__(self, history):
        x = history.right_limit
        wealth = self.notional + history.gains
        h = np.zeros(x.size)
        alive = x > 0
        if wealth > 0 and alive.any():
            h[alive] = wealth / (alive.sum() * x[alive])
        return h

    def piece_block(self, start_value, samples, gains):
        prev = np.empty_like(samples)
        prev[0] = start_value
        prev[1:] = samples[:-1]
        w0 = self.notional + gains
        if w0 <= 0 or np.minimum.reduce(prev, axis=None) <= 0:
            return None
        n = start_value.size
        growth = np.add.reduce(samples / prev, axis=1) / n
        wealth = np.empty(len(samples))
        wealth[0] = 1.0
        np.multiply.accumulate(growth[:-1], out=wealth[1:])
        wealth *= w0
        if np.minimum.reduce(wealth) <= 0:
            return None
        prev *= n
        return wealth[:, None] / prev


RULE_NAMES = ("buy-hold", "equal-weight", "constant-share", "short-one")


def named_rule(name: str, **params) -> Rule:
    table = {
        "buy-hold": BuyHold,
        "equal-weight": EqualWeight,
        "constant-share": ConstantShare,
        "short-one": ShortOne,
    }
    try:
        cls = table[name]
    except KeyError:
        raise ValueError(f"unknown rule {name!r}; choose one of {', '.join(RULE_NAMES)}") from None
    return cls(**params)
