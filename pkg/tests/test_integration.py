import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochdim.dissection import integrate_dissected, refine_resets
from stochdim.integration import integrate, jump_exposure, stop, stop_path
from stochdim.paths import GridError, PiecewisePath, TimeGrid
from stochdim.strategies import Holdings, StepStrategy, ZeroStrategy

from conftest import continuous_path


def test_worked_gains(w_path, w_strategy):
    g = integrate(w_strategy, w_path)
    np.testing.assert_array_equal(g.values, [0, 0, 3, 5])
    assert g.piece_start_levels == (0.0, 3.0)


def test_buy_hold_single_asset_telescopes():
    path = continuous_path([[1.0, 5.0], [2.0, 4.0], [0.5, 7.0]])
    g = integrate(StepStrategy([(0.0, [1.0, 0.0])]), path)
    assert g.terminal == 0.5 - 1.0


def test_zero_strategy_gives_zero(w_path):
    assert not integrate(ZeroStrategy(), w_path).values.any()


def test_seed_term(w_path):
    h = StepStrategy([(0.0, [1.0, 1.0]), (2.0, [1.0, 1.0, 2.0])], initial=[1.0, 0.0])
    np.testing.assert_array_equal(integrate(h, w_path).values, [10, 10, 13, 15])


def test_stop_examples(w_path, w_strategy):
    g = integrate(w_strategy, w_path)
    np.testing.assert_array_equal(stop(g, 2).values, [0, 0, 3, 3])
    np.testing.assert_array_equal(stop(g, 3).values, g.values)
    np.testing.assert_array_equal(stop(g, 0).values, [0, 0, 0, 0])
    with pytest.raises(GridError):
        stop(g, 2.5)


def test_stopped_path_drops_later_pieces(w_path):
    s = stop_path(w_path, 2)
    assert len(s.pieces) == 1
    np.testing.assert_array_equal(s.value_at_index(3), [12, 21])
    assert stop_path(w_path, 3) is w_path


def test_stopping_commutes_on_worked_path(w_path, w_strategy):
    hold = w_strategy.materialize(w_path)
    lhs = stop(integrate(hold, w_path), 1).values
    mid = integrate(hold.restricted(1), w_path).values
    sp = stop_path(w_path, 1)
    rhs = integrate(Holdings(sp, hold.initial, [hold.blocks[0][:1].tolist() + [[0, 0]] * 2]), sp).values
    np.testing.assert_array_equal(lhs, mid)
    np.testing.assert_array_equal(lhs, rhs)


def test_jump_exposure():
    path = continuous_path([[10.0], [10.0], [0.0]])
    assert jump_exposure(StepStrategy([(0.0, [1.0])]), path, []) == np.inf
    assert jump_exposure(StepStrategy([(0.0, [1.0])]), path, [2.0]) == -10.0
    assert jump_exposure(ZeroStrategy(), path, [2.0]) == 0.0


def test_ucp_surrogate():
    rng = np.random.default_rng(3)
    path = continuous_path(np.cumsum(rng.normal(size=(50, 2)), axis=0))
    target = integrate(StepStrategy([(0.0, [1.0, -0.5]), (20.0, [0.3, 2.0])]), path).values
    errs = []
    for eps in [1.0, 0.1, 0.01, 0.001]:
        h = StepStrategy([(0.0, [1.0 + eps, -0.5]), (20.0, [0.3, 2.0 - eps])])
        errs.append(np.max(np.abs(integrate(h, path).values - target)))
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-2 * errs[0]


@st.composite
def paths_and_holdings(draw):
    """A random piecewise path with holdings blocks matching its pieces."""
    m = draw(st.integers(3, 12))
    grid = TimeGrid(np.arange(m + 1, dtype=float))
    k = draw(st.integers(0, min(3, m - 1)))
    cuts = sorted(draw(st.sets(st.integers(1, m - 1), min_size=k, max_size=k)))
    bounds = [0] + cuts
    seeds = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seeds)
    dims = rng.integers(1, 4, size=len(bounds))
    x0 = rng.normal(size=dims[0])
    ends = bounds[1:] + [m]
    rls, blocks = [], []
    for j, (a, b) in enumerate(zip(bounds, ends)):
        rls.append(x0 if j == 0 else rng.normal(size=dims[j]))
        blocks.append(rng.normal(size=(b - a, dims[j])))
    path = PiecewisePath.from_arrays(grid, x0, bounds, rls, blocks)

    def holdings():
        return Holdings(path, rng.normal(size=dims[0]), [rng.normal(size=(b - a, dims[j]))
                                                         for j, (a, b) in enumerate(zip(bounds, ends))])

    return path, holdings(), holdings(), rng


def _rel(a, b):
    scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) / scale


@settings(max_examples=80, deadline=None)
@given(paths_and_holdings(), st.floats(-5, 5), st.floats(-5, 5))
def test_linearity(data, a, b):
    path, h, g, _ = data
    lhs = integrate(h * a + g * b, path).values
    rhs = a * integrate(h, path).values + b * integrate(g, path).values
    assert _rel(lhs, rhs) < 1e-12


@settings(max_examples=80, deadline=None)
@given(paths_and_holdings(), st.data())
def test_stopping_commutation(data, choice):
    path, h, _, _ = data
    a = choice.draw(st.integers(0, path.grid.last))
    alpha = float(path.grid.times[a])
    lhs = stop(integrate(h, path), alpha).values
    assert _rel(lhs, integrate(h.restricted(a), path).values) < 1e-12


@settings(max_examples=80, deadline=None)
@given(paths_and_holdings(), st.data())
def test_reset_invariance(data, choice):
    path, h, _, _ = data
    extra = choice.draw(st.sets(st.integers(1, path.grid.last - 1)))
    resets = refine_resets(path.reset_times, [float(path.grid.times[i]) for i in extra], path)
    direct = integrate(h, path).values
    assert np.max(np.abs(integrate_dissected(h, path, resets).values - direct)) < 1e-9
    assert np.max(np.abs(integrate_dissected(h, path).values - direct)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(paths_and_holdings())
def test_gains_continuous_across_resets(data):
    path, h, _, _ = data
    g = integrate(h, path)
    for p, level in zip(path.pieces, g.piece_start_levels):
        assert g.values[p.start] == level
