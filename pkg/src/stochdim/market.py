"""Market scenarios with a changing number of assets.

Assets follow Brownian (BM), geometric Brownian (GBM) or inverse Bessel(3)
(INVBES3) dynamics between corporate-action events. Every applied event
produces a reset at a grid time: the asset list is rebuilt and the next piece
starts from the new right limit. Bankruptcy is a jump of the price to 0 at
the event time (seen by portfolios) followed by removal of the asset.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Annotated, Iterator, Literal, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .paths import DEFAULT_MAX_PIECES, PathPiece, PiecewisePath, TimeGrid, validate_path
from .rng import MAX_SEED, _transient_generator

__all__ = [
    "GridSpec",
    "BMModel",
    "GBMModel",
    "InvBes3Model",
    "PoissonTrigger",
    "TimeTrigger",
    "HittingTrigger",
    "EntryAction",
    "ExitAction",
    "MergeAction",
    "SplitAction",
    "BankruptcyAction",
    "EventRule",
    "MarketSpec",
    "SimulationError",
    "PieceCapError",
    "EventRecord",
    "SimulatedScenario",
    "simulate_scenario",
    "iter_scenarios",
    "simulate_scenarios",
    "simulate",
    "worker_count",
]

log = logging.getLogger(__name__)

_STRICT = ConfigDict(extra="forbid", frozen=True)
_BESSEL_FLOOR = 1e-12


class SimulationError(RuntimeError):
    pass


class PieceCapError(SimulationError):
    pass


class GridSpec(BaseModel):
    model_config = _STRICT
    T: float = Field(gt=0)
    step: float = Field(gt=0)

    def time_grid(self) -> TimeGrid:
        return _uniform_grid(self.T, self.step)


@lru_cache(maxsize=32)
def _uniform_grid(T: float, step: float) -> TimeGrid:
    return TimeGrid.uniform(T, step)


class BMModel(BaseModel):
    model_config = _STRICT
    model: Literal["BM"] = "BM"
    x0: float
    mu: float = 0.0
    sigma: float = Field(ge=0)


class GBMModel(BaseModel):
    model_config = _STRICT
    model: Literal["GBM"] = "GBM"
    x0: float = Field(gt=0)
    mu: float = 0.0
    sigma: float = Field(ge=0)


class InvBes3Model(BaseModel):
    """X = 1/R with R a Bessel(3) process started at r0."""

    model_config = _STRICT
    model: Literal["INVBES3"] = "INVBES3"
    r0: float = Field(default=1.0, gt=0)


AssetModel = Annotated[Union[BMModel, GBMModel, InvBes3Model], Field(discriminator="model")]


class PoissonTrigger(BaseModel):
    model_config = _STRICT
    type: Literal["poisson"] = "poisson"
    rate: float = Field(ge=0)


class TimeTrigger(BaseModel):
    model_config = _STRICT
    type: Literal["time"] = "time"
    t: float = Field(gt=0)


class HittingTrigger(BaseModel):
    """Fires once, at the first grid time the asset's price reaches ``level``."""

    model_config = _STRICT
    type: Literal["hitting"] = "hitting"
    asset: int = Field(ge=0)
    level: float
    direction: Literal["down", "up"] = "down"


Trigger = Annotated[Union[PoissonTrigger, TimeTrigger, HittingTrigger], Field(discriminator="type")]


class EntryAction(BaseModel):
    model_config = _STRICT
    type: Literal["ENTRY"] = "ENTRY"
    asset: AssetModel


class ExitAction(BaseModel):
    model_config = _STRICT
    type: Literal["EXIT"] = "EXIT"
    index: Union[int, Literal["random"]] = "random"


class MergeAction(BaseModel):
    """Assets i and j become one asset worth w_i X_i^+ + w_j X_j^+."""

    model_config = _STRICT
    type: Literal["MERGE"] = "MERGE"
    i: int = Field(default=0, ge=0)
    j: int = Field(default=1, ge=0)
    weights: tuple[float, float] = (1.0, 1.0)

    @model_validator(mode="after")
    def _check(self):
        if self.i == self.j:
            raise ValueError("MERGE needs two distinct assets")
        if min(self.weights) <= 0:
            raise ValueError("MERGE weights must be positive")
        return self


class SplitAction(BaseModel):
    """Asset i becomes two assets worth f X_i^+ and (1 - f) X_i^+."""

    model_config = _STRICT
    type: Literal["SPLIT"] = "SPLIT"
    i: int = Field(default=0, ge=0)
    fraction: float = Field(default=0.5, gt=0, lt=1)


class BankruptcyAction(BaseModel):
    model_config = _STRICT
    type: Literal["BANKRUPTCY"] = "BANKRUPTCY"
    i: Union[int, Literal["random"]] = "random"


Action = Annotated[
    Union[EntryAction, ExitAction, MergeAction, SplitAction, BankruptcyAction],
    Field(discriminator="type"),
]


class EventRule(BaseModel):
    model_config = _STRICT
    trigger: Trigger
    action: Action


class MarketSpec(BaseModel):
    model_config = _STRICT
    grid: GridSpec
    assets: list[AssetModel] = Field(min_length=1)
    events: list[EventRule] = []
    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    n_scenarios: int = Field(default=1, ge=1)
    max_pieces: int = Field(default=DEFAULT_MAX_PIECES, ge=1)

    @model_validator(mode="after")
    def _grid_divides(self):
        self.grid.time_grid()
        return self

    def time_grid(self) -> TimeGrid:
        return self.grid.time_grid()


# -- asset state --------------------------------------------------------------


class _Asset:
    __slots__ = ("model", "value", "w", "params")

    def __init__(self, model, value: float, w=None):
        self.model = model
        self.value = float(value)
        self.w = w
        if isinstance(model, InvBes3Model):
            self.params = None
        else:
            geo = isinstance(model, GBMModel)
            drift = model.mu - 0.5 * model.sigma**2 if geo else model.mu
            self.params = (drift, model.sigma, geo)

    @classmethod
    def new(cls, model) -> "_Asset":
        if isinstance(model, InvBes3Model):
            return cls(model, 1.0 / model.r0, np.array([model.r0, 0.0, 0.0]))
        return cls(model, model.x0)

    def reconfigured(self, value: float) -> "_Asset":
        """Same dynamics, restarted from ``value``."""
        if isinstance(self.model, GBMModel) and not value > 0:
            raise SimulationError(f"GBM asset cannot restart from nonpositive price {value!r}")
        if isinstance(self.model, InvBes3Model):
            if not value > 0:
                raise SimulationError("inverse Bessel asset needs a positive price")
            return _Asset(self.model, value, np.array([1.0 / value, 0.0, 0.0]))
        return _Asset(self.model, value)


def _brownian_params(assets: list) -> tuple:
    """(log-)drift, volatility and GBM flag arrays for Brownian-driven assets."""
    return _param_arrays(tuple(a.params for a in assets))


@lru_cache(maxsize=256)
def _param_arrays(params: tuple) -> tuple:
    p = np.array(params, dtype=float)
    geo = p[:, 2] != 0
    for a in (p, geo):
        a.setflags(write=False)
    return p[:, 0], p[:, 1], geo, bool(geo.all())


def _advance_all(assets: list, dts: np.ndarray, sqdt: np.ndarray, rng):
    """Advance every asset over ``dts``; Brownian drivers come from one draw.

    Returns prices and driving BMs (rows: grid times, columns: assets) and
    the 3-d walks of inverse Bessel assets (None for the others).
    """
    n, L = len(assets), len(dts)
    walks = [None] * n
    bro = [i for i, a in enumerate(assets) if a.params is not None]
    if len(bro) == n:
        drift, sig, geo, all_geo = _brownian_params(assets)
        dw = rng.standard_normal((L, n))
        dw *= sqdt[:, None]
        run = dts[:, None] * drift + dw * sig
        run.cumsum(axis=0, out=run)
        x = np.array([a.value for a in assets])
        if all_geo:
            vals = x * np.exp(run)
        else:
            vals = np.where(geo, x * np.exp(run), x + run)
        bm = dw.cumsum(axis=0)
    else:
        vals = np.empty((L, n))
        bm = np.zeros((L, n))
        if bro:
            drift, sig, geo, _ = _brownian_params([assets[i] for i in bro])
            dw = sqdt[:, None] * rng.standard_normal((L, len(bro)))
            x = np.array([assets[i].value for i in bro])
            bm[:, bro] = np.cumsum(dw, axis=0)
            run = np.cumsum(dts[:, None] * drift + dw * sig, axis=0)
            vals[:, bro] = np.where(geo, x * np.exp(run), x + run)
        for i, a in enumerate(assets):
            if isinstance(a.model, InvBes3Model):
                w = _bessel_walk(a.w, sqdt, rng)
                walks[i] = w
                vals[:, i] = 1.0 / np.linalg.norm(w, axis=1)
    last = vals[-1].tolist()
    for i, a in enumerate(assets):
        a.value = last[i]
        if walks[i] is not None:
            a.w = walks[i][-1]
    return vals, bm, walks


def _bessel_walk(w0: np.ndarray, sqdt: np.ndarray, rng) -> np.ndarray:
    """3-d Brownian positions after each step; increments landing on 0 are redrawn."""
    steps = sqdt[:, None] * rng.standard_normal((len(sqdt), 3))
    w = w0 + np.cumsum(steps, axis=0)
    bad = np.flatnonzero(np.linalg.norm(w, axis=1) < _BESSEL_FLOOR)
    while bad.size:
        j = int(bad[0])
        log.warning("Bessel path reached numerical zero; redrawing one increment")
        steps[j] = sqdt[j] * rng.standard_normal(3)
        w = w0 + np.cumsum(steps, axis=0)
        bad = np.flatnonzero(np.linalg.norm(w, axis=1) < _BESSEL_FLOOR)
    return w


# -- simulation ---------------------------------------------------------------


@dataclass(frozen=True)
class EventRecord:
    time: float
    action: str
    applied: bool
    detail: str = ""


@dataclass(frozen=True, eq=False)
class SimulatedScenario:
    """One scenario with the data the deflator needs.

    ``drivers[k]`` holds, per grid time of piece k+1 and per asset, the
    driving Brownian motion accumulated since the piece started.
    """

    scenario_id: int
    path: PiecewisePath
    piece_models: tuple
    drivers: tuple
    left_jumps: tuple
    events: tuple


def _schedule(spec: MarketSpec, grid: TimeGrid, rng) -> dict[int, list[tuple[int, int]]]:
    """grid index -> [(rule position, draw number)] for timed and Poisson events."""
    out: dict[int, list[tuple[int, int]]] = {}
    T = grid.horizon
    for pos, rule in enumerate(spec.events):
        trig = rule.trigger
        if isinstance(trig, PoissonTrigger):
            n = int(rng.poisson(trig.rate * T))
            if n == 0:
                continue
            times = np.sort(rng.uniform(0.0, T, size=n))
        elif isinstance(trig, TimeTrigger):
            times = [trig.t]
        else:
            continue
        idx = np.maximum(1, grid.snap_up_many(np.asarray(times, dtype=float))).tolist()
        for d, i in enumerate(idx):
            if i < grid.last:
                out.setdefault(i, []).append((pos, d))
    return out


def _hit(trig: HittingTrigger, vals: np.ndarray) -> np.ndarray:
    return vals <= trig.level if trig.direction == "down" else vals >= trig.level


def _pick(index, n: int, rng) -> int | None:
    if index == "random":
        return int(rng.integers(n))
    return index if index < n else None


def _apply(action, assets: list, origin: list, seg: np.ndarray, rng) -> tuple[bool, str]:
    """Apply one action in place; False when it does not fit the current market."""
    n = len(assets)
    if isinstance(action, EntryAction):
        assets.append(_Asset.new(action.asset))
        origin.append(None)
        return True, f"asset {n} enters"
    if isinstance(action, (ExitAction, BankruptcyAction)):
        if n < 2:
            return False, "cannot remove the only asset"
        i = _pick(action.index if isinstance(action, ExitAction) else action.i, n, rng)
        if i is None:
            return False, "no such asset"
        if isinstance(action, BankruptcyAction):
            if origin[i] is None:
                return False, "asset was created at this time"
            seg[-1, origin[i]] = 0.0
        del assets[i], origin[i]
        return True, f"asset {i} leaves"
    if isinstance(action, MergeAction):
        if max(action.i, action.j) >= n:
            return False, "no such asset"
        a, b = assets[action.i], assets[action.j]
        merged = a.reconfigured(action.weights[0] * a.value + action.weights[1] * b.value)
        lo, hi = sorted((action.i, action.j))
        del assets[hi], origin[hi]
        assets[lo], origin[lo] = merged, None
        return True, f"assets {action.i} and {action.j} merge"
    if isinstance(action, SplitAction):
        if action.i >= n:
            return False, "no such asset"
        a = assets[action.i]
        f = action.fraction
        assets[action.i : action.i + 1] = [a.reconfigured(f * a.value), a.reconfigured((1 - f) * a.value)]
        origin[action.i : action.i + 1] = [None, None]
        return True, f"asset {action.i} splits"
    raise TypeError(f"unknown action {action!r}")


def _stack(parts: list) -> np.ndarray:
    out = parts[0] if len(parts) == 1 else np.vstack(parts)
    out.setflags(write=False)
    return out


def simulate_scenario(spec: MarketSpec, scenario_id: int) -> SimulatedScenario:
    grid = spec.time_grid()
    m = grid.last
    dts_all, sq_all = grid.steps
    rng = _transient_generator(spec.seed, scenario_id)
    schedule = _schedule(spec, grid, rng)
    event_idx = sorted(schedule)
    armed = {pos for pos, r in enumerate(spec.events) if isinstance(r.trigger, HittingTrigger)}

    assets = [_Asset.new(a) for a in spec.assets]
    x0 = np.array([a.value for a in assets])
    pieces, piece_models, drivers = [], [], []
    left_jumps, records = [], []
    piece_start, piece_rl = 0, x0.copy()
    seg_vals, seg_drv = [], []
    drv_offset = np.zeros(len(assets))
    cur = 0

    while True:
        nxt = next((i for i in event_idx if i > cur), m)
        vals, drv, walks = _advance_all(assets, dts_all[cur:nxt], sq_all[cur:nxt], rng)
        drv += drv_offset

        fired: list[int] = []
        hit_at = None
        for pos in sorted(armed):
            trig = spec.events[pos].trigger
            if trig.asset < len(assets):
                h = np.flatnonzero(_hit(trig, vals[:, trig.asset]))
                h = h[cur + 1 + h < m]
                if h.size and (hit_at is None or h[0] < hit_at):
                    hit_at = int(h[0])
        if hit_at is not None and cur + 1 + hit_at < nxt:
            vals, drv = vals[: hit_at + 1], drv[: hit_at + 1]
            nxt = cur + 1 + hit_at
            for i, a in enumerate(assets):
                a.value = float(vals[-1, i])
                if walks[i] is not None:
                    a.w = walks[i][hit_at]
        if hit_at is not None:
            for pos in sorted(armed):
                trig = spec.events[pos].trigger
                if trig.asset < len(assets) and _hit(trig, vals[-1:, trig.asset])[0]:
                    fired.append(pos)
        seg_vals.append(vals)
        seg_drv.append(drv)
        drv_offset = drv[-1].copy()
        cur = nxt
        if cur >= m:
            break

        todo = sorted(schedule.get(cur, []) + [(pos, -1) for pos in fired])
        armed.difference_update(fired)
        models_before = tuple(a.model for a in assets)
        origin: list = list(range(len(assets)))
        applied_any = False
        for pos, _ in todo:
            action = spec.events[pos].action
            ok, detail = _apply(action, assets, origin, seg_vals[-1], rng)
            if ok and isinstance(action, BankruptcyAction):
                left_jumps.append(float(grid.times[cur]))
            records.append(EventRecord(float(grid.times[cur]), action.type, ok, detail))
            applied_any = applied_any or ok
        if not applied_any:
            continue

        pieces.append(PathPiece(len(pieces) + 1, piece_start, cur, piece_rl, _stack(seg_vals)))
        piece_models.append(models_before)
        drivers.append(_stack(seg_drv))
        if len(pieces) >= spec.max_pieces:
            raise PieceCapError(f"scenario {scenario_id} exceeds {spec.max_pieces} pieces")
        piece_start, piece_rl = cur, np.array([a.value for a in assets])
        seg_vals, seg_drv = [], []
        drv_offset = np.zeros(len(assets))

    pieces.append(PathPiece(len(pieces) + 1, piece_start, m, piece_rl, _stack(seg_vals)))
    piece_models.append(tuple(a.model for a in assets))
    drivers.append(_stack(seg_drv))
    path = PiecewisePath(grid, x0, pieces)
    return SimulatedScenario(scenario_id, path, tuple(piece_models), tuple(drivers),
                             tuple(left_jumps), tuple(records))


def worker_count() -> int:
    """Worker processes for ensemble runs, from ``STOCHDIM_WORKERS`` (default 1)."""
    raw = os.environ.get("STOCHDIM_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"STOCHDIM_WORKERS must be an integer, got {raw!r}") from None
    return max(1, n)


def _chunk(spec: MarketSpec, ids: Sequence[int]) -> list[SimulatedScenario]:
    return [simulate_scenario(spec, i) for i in ids]


def iter_scenarios(spec: MarketSpec, ids: Sequence[int] | None = None) -> Iterator[SimulatedScenario]:
    ids = range(spec.n_scenarios) if ids is None else ids
    for i in ids:
        yield simulate_scenario(spec, i)


def simulate_scenarios(
    spec: MarketSpec, ids: Sequence[int] | None = None, workers: int | None = None
) -> list[SimulatedScenario]:
    """Scenarios in id order; the result does not depend on ``workers``."""
    ids = list(range(spec.n_scenarios) if ids is None else ids)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(ids) < 2:
        return _chunk(spec, ids)
    size = math.ceil(len(ids) / workers)
    chunks = [ids[i : i + size] for i in range(0, len(ids), size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_chunk, [spec] * len(chunks), chunks))
    return [s for part in parts for s in part]


def simulate(spec: MarketSpec, workers: int | None = None) -> list[PiecewisePath]:
    """``spec.n_scenarios`` validated paths, scenario ids 0, 1, ..."""
    out = []
    for s in simulate_scenarios(spec, workers=workers):
        bad = validate_path(s.path, spec.max_pieces)
        if bad:
            raise SimulationError(f"scenario {s.scenario_id} produced an invalid path: {bad[0]}")
        out.append(s.path)
    return out
