import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import norm

from stochdim.integration import integrate
from stochdim.paths import validate_path
from stochdim.strategies import BuyHold, RuleStrategy
from stochdim.strict_local import (
    StrictLocalMartSpec,
    example_scenario,
    expected_inverse_bessel,
    iter_strict_local_mart,
    overshoot,
)


def test_closed_form_oracle():
    # E[Y_1] = E[1/R_1] - 1 = 2 Phi(1) - 2
    assert expected_inverse_bessel(1.0) - 1.0 == pytest.approx(2 * norm.cdf(1.0) - 2, abs=1e-15)
    assert expected_inverse_bessel(1.0) - 1.0 == pytest.approx(-0.31731050786291404, abs=1e-15)
    assert expected_inverse_bessel(0.25) == pytest.approx(2 * norm.cdf(2.0) - 1, abs=1e-15)


def test_only_r0_one():
    with pytest.raises(ValidationError):
        StrictLocalMartSpec(r0=2.0)


def test_paths_are_valid_and_bounded():
    spec = StrictLocalMartSpec(n_scenarios=200, seed=3)
    for sc in iter_strict_local_mart(spec):
        assert not validate_path(sc.path, spec.max_pieces)
        assert sc.overshoot == overshoot(sc.path)
        assert sc.overshoot <= spec.refine_tol + 1e-12
        for p in sc.path.pieces:
            assert p.dim == 1 and p.start_right_limit[0] == 0.0
        assert sc.path.horizon == 1.0


def test_base_grid_is_kept():
    spec = StrictLocalMartSpec(n_scenarios=20)
    base = spec.time_grid().times
    for sc in iter_strict_local_mart(spec):
        assert np.isin(base, sc.path.grid.times).all()


def test_buy_hold_gains_equal_y():
    spec = StrictLocalMartSpec(n_scenarios=30, seed=1)
    for sc in iter_strict_local_mart(spec):
        g = integrate(RuleStrategy(BuyHold()), sc.path)
        np.testing.assert_allclose(g.values, sc.y, rtol=0, atol=1e-12)


def test_resets_at_threshold_crossings():
    sc = example_scenario(StrictLocalMartSpec(seed=2), 0)
    r = sc.path.reset_indices
    for a, b in zip(r[:-1], r[1:]):
        assert abs(sc.y[b] - sc.y[a]) >= 1.0
        assert (np.abs(sc.y[a + 1 : b] - sc.y[a]) < 1.0).all()


def test_strict_grid_mode_overshoots_more():
    coarse = StrictLocalMartSpec(refine_tol=None, step=0.01, n_scenarios=50)
    fine = StrictLocalMartSpec(step=0.01, n_scenarios=50)
    a = max(s.overshoot for s in iter_strict_local_mart(coarse))
    b = max(s.overshoot for s in iter_strict_local_mart(fine))
    assert b <= 0.01 + 1e-12 < a


def test_determinism():
    spec = StrictLocalMartSpec(seed=9)
    assert example_scenario(spec, 4).path == example_scenario(spec, 4).path


def test_base_values_match_paths():
    from stochdim.strict_local import base_values
    spec = StrictLocalMartSpec(n_scenarios=10, seed=4)
    for sc in iter_strict_local_mart(spec):
        t, y = base_values(spec, sc.scenario_id)
        idx = np.searchsorted(sc.path.grid.times, t)
        np.testing.assert_array_equal(sc.path.grid.times[idx], t)
        np.testing.assert_array_equal(sc.y[idx], y)


def test_piece_cap_raises_early():
    from stochdim.market import PieceCapError
    spec = StrictLocalMartSpec(step=0.01, max_pieces=1, seed=2, n_scenarios=50)
    with pytest.raises(PieceCapError):
        for _ in iter_strict_local_mart(spec):
            pass
