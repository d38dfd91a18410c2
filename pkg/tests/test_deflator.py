import numpy as np
import pytest

from stochdim.deflator import (
    CheckpointAccumulator,
    Mode,
    NoDeflatorError,
    build_piecewise_deflator,
    deflate_and_test,
    deflator_for_scenario,
    market_price_of_risk,
    martingale_test,
    values_at,
)
from stochdim.market import BMModel, GBMModel, InvBes3Model, MarketSpec, simulate_scenarios
from stochdim.portfolio import wealth_process
from stochdim.strategies import BuyHold, RuleStrategy


def gbm_spec(mu, sigma, n, step=0.25, events=()):
    return MarketSpec.model_validate({
        "grid": {"T": 1.0, "step": step},
        "assets": [{"model": "GBM", "x0": 1.0, "mu": mu, "sigma": sigma}],
        "events": list(events), "n_scenarios": n, "seed": 17,
    })


def test_price_of_risk():
    theta = market_price_of_risk([GBMModel(x0=1, mu=0.3, sigma=0.2), BMModel(x0=0, sigma=0), InvBes3Model()])
    np.testing.assert_allclose(theta, [1.5, 0.0, 0.0])
    with pytest.raises(NoDeflatorError):
        market_price_of_risk([BMModel(x0=0, mu=0.1, sigma=0)])


def test_driftless_deflator_is_one():
    for z in build_piecewise_deflator(gbm_spec(0.0, 0.2, 5)):
        assert (z.values == 1.0).all()


def test_pasting_is_exact_and_positive():
    events = [{"trigger": {"type": "time", "t": 0.25}, "action": {"type": "SPLIT", "i": 0}},
              {"trigger": {"type": "time", "t": 0.5}, "action": {"type": "MERGE", "i": 0, "j": 1}}]
    for sc in simulate_scenarios(gbm_spec(0.1, 0.3, 20, events=events)):
        z = deflator_for_scenario(sc)
        assert z.factors.shape[0] == 3
        assert (z.values > 0).all() and z.values[0] == 1.0
        np.testing.assert_array_equal(z.values, np.prod(z.factors, axis=0))
        # factor k is 1 before its piece and frozen after it
        for k, p in enumerate(sc.path.pieces):
            assert (z.factors[k, : p.start + 1] == 1.0).all()
            assert (z.factors[k, p.end :] == z.factors[k, p.end]).all()


def test_deflator_mean_and_deflated_price():
    scen = simulate_scenarios(gbm_spec(0.05, 0.2, 20000, step=0.5))
    z = np.array([deflator_for_scenario(s).terminal for s in scen])
    x = np.array([s.path.value_at_index(2)[0] for s in scen])
    for sample, target in [(z, 1.0), (z * x, 1.0)]:
        assert abs(sample.mean() - target) < 3 * sample.std(ddof=1) / np.sqrt(sample.size)


def test_constant_process_passes_both_modes():
    x = np.full((200, 3), 2.5)
    for mode in Mode:
        rep = martingale_test(x, [0, 0.5, 1], mode)
        assert rep.passed and rep.ses == (0.0, 0.0, 0.0)


def test_zero_variance_drift_detected_exactly():
    x = np.tile([1.0, 1.5], (200, 1))
    assert not martingale_test(x, [0, 1], Mode.MARTINGALE).passed
    assert not martingale_test(x, [0, 1], Mode.SUPERMARTINGALE).passed
    assert martingale_test(x[:, ::-1], [0, 1], Mode.SUPERMARTINGALE).passed


def test_input_checks():
    with pytest.raises(ValueError):
        martingale_test(np.zeros((50, 2)), [0, 1])
    with pytest.raises(ValueError):
        martingale_test(np.zeros((200, 1)), [0])
    with pytest.raises(ValueError):
        martingale_test(np.zeros((200, 2)), [0, 0.5, 1])


def test_accumulator_order_independent():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1000, 2)) * [1, 1e8] + [0, 1e8]
    a = CheckpointAccumulator(2)
    for chunk in np.array_split(x, 7):
        a.update(chunk)
    b = CheckpointAccumulator(2)
    for chunk in np.array_split(x[::-1], 3):
        b.update(chunk)
    ra, rb = a.report([0, 1]), b.report([0, 1])
    assert ra.means == rb.means and ra.ses == rb.ses and ra.diff_means == rb.diff_means
    assert a.merge(b).n == 2000


def test_report_rendering():
    rng = np.random.default_rng(1)
    rep = martingale_test(rng.normal(size=(500, 2)), [0, 1], Mode.MARTINGALE, 3.0, "noise")
    d = rep.to_dict()
    assert d["mode"] == "MARTINGALE" and d["n_samples"] == 500 and len(d["confidence_intervals"]) == 2
    assert rep.recomputed_verdicts() == rep.interval_pass
    assert "noise: MARTINGALE test" in rep.to_text()


def test_deflate_and_test_constant_wealth_reduces_to_deflator():
    scen = simulate_scenarios(gbm_spec(0.3, 0.2, 400))
    zs = [deflator_for_scenario(s) for s in scen]
    v = wealth_process(3.0, RuleStrategy(BuyHold()) , [s.path for s in scen])
    rep = deflate_and_test(zs, v)
    assert "tested family" in rep.notes[0]
    zt = values_at(zs, [0, 1])
    from stochdim.portfolio import WealthProcess
    from stochdim.integration import GainsPath
    flat = [WealthProcess(3.0, GainsPath(s.path.grid, np.zeros(len(s.path.grid)))) for s in scen]
    r2 = deflate_and_test(zs, flat)
    np.testing.assert_allclose(r2.means, 3.0 * zt.mean(axis=0), rtol=1e-12)
