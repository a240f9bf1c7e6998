import math
import warnings

import numpy as np
import pytest
from scipy import stats

from stochsys.demos import first_passage_system, ou_system, poisson_system
from stochsys.process import (
    CountingProcess,
    InputFunction,
    OUProcess,
    SystemSpec,
    SystemValidationError,
)
from stochsys.rng import Streams
from stochsys.simulate import (
    BudgetExceeded,
    HittingDistribution,
    SimConfig,
    estimate_hitting_distribution,
    sample_states,
    simulate_ensemble,
    simulate_path,
)


def dkw(n, alpha=1e-3):
    """Dvoretzky-Kiefer-Wolfowitz band half-width."""
    return math.sqrt(math.log(2 / alpha) / (2 * n))


# --- random streams ------------------------------------------------------------


def test_streams_are_counter_based():
    a = Streams(3, np.arange(10)).uniform(7, np.arange(5))
    b = Streams(3, np.arange(4, 10)).uniform(7, np.arange(5))
    np.testing.assert_array_equal(a[:, 4:], b)
    assert not np.array_equal(a, Streams(4, np.arange(10)).uniform(7, np.arange(5)))


def test_stream_uniforms_look_uniform():
    u = Streams(0, np.arange(20000)).uniform(1, np.arange(1)).ravel()
    assert (u > 0).all() and (u < 1).all()
    assert stats.kstest(u, "uniform").pvalue > 1e-3
    z = Streams(0, np.arange(20000)).normal(2, np.arange(1)).ravel()
    assert stats.kstest(z, "norm").pvalue > 1e-3


# --- configuration -----------------------------------------------------------------


def test_step_must_divide_horizon():
    with pytest.raises(ValueError, match="divide"):
        simulate_ensemble(ou_system(horizon=1.0), SimConfig(step=0.3, replications=2))


def test_budget(monkeypatch):
    with pytest.raises(BudgetExceeded):
        simulate_ensemble(ou_system(), SimConfig(replications=1000, budget=100))
    monkeypatch.setenv("STOCHSYS_MAX_STEPS", "10")
    with pytest.raises(BudgetExceeded):
        simulate_ensemble(ou_system(), SimConfig(replications=10))


def test_invalid_system_is_rejected():
    with pytest.raises(SystemValidationError):
        simulate_ensemble(SystemSpec("s", (OUProcess("X", -1.0),)), SimConfig(replications=2))


# --- determinism --------------------------------------------------------------------


def test_zero_noise_replicates_identical():
    s = simulate_ensemble(ou_system(sigma=0.0, horizon=2.0), SimConfig(replications=50))
    assert np.all(s.variance["X"] == 0.0)


def test_same_seed_same_output_and_workers_invariant():
    spec, cfg = ou_system(horizon=2.0), SimConfig(replications=9000, seed=5, record_grid=10)
    a = simulate_ensemble(spec, cfg)
    b = simulate_ensemble(spec, cfg, workers=2)
    np.testing.assert_array_equal(a.mean["X"], b.mean["X"])
    np.testing.assert_array_equal(a.variance["X"], b.variance["X"])


def test_path_matches_sampled_states():
    spec, cfg = first_passage_system(horizon=4.0), SimConfig(replications=30, seed=2)
    snap = sample_states(spec, cfg, [1.0, 4.0])
    for r in (0, 17, 29):
        path = simulate_path(spec, cfg, r)
        assert path.values["A"][100] == snap["A"][r, 0]
        assert path.values["A"][-1] == snap["A"][r, 1]


def test_single_replicate_summary():
    s = simulate_ensemble(ou_system(horizon=1.0), SimConfig(replications=1))
    assert s.n == 1
    assert np.all(s.variance["X"] == 0.0)
    assert math.isfinite(s.mean["X"][-1])


# --- ODE limit and convergence ---------------------------------------------------------


def _euler_error(h):
    # deterministic decay dx = -x dt from x(0) = 1; exact solution e^{-t}
    spec = ou_system(theta=1.0, mu=0.0, sigma=0.0, x0=1.0, horizon=2.0)
    s = simulate_ensemble(spec, SimConfig(step=h, replications=1))
    return abs(s.mean["X"][-1] - math.exp(-2.0))


def test_deterministic_flow_and_first_order_convergence():
    e1, e2 = _euler_error(0.02), _euler_error(0.01)
    assert e2 < 0.01
    assert 1.8 < e1 / e2 < 2.2


def test_ou_moments_against_closed_form():
    theta, mu, sigma, t = 1.0, 1.0, 0.5, 3.0
    s = simulate_ensemble(ou_system(theta, mu, sigma, 0.0, t), SimConfig(replications=20000, seed=1))
    mean = mu * (1 - math.exp(-theta * t))
    var = sigma**2 / (2 * theta) * (1 - math.exp(-2 * theta * t))
    assert abs(s.mean["X"][-1] - mean) < 4 * math.sqrt(var / 20000) + 0.01
    assert s.variance["X"][-1] == pytest.approx(var, rel=0.05)


# --- counting processes ----------------------------------------------------------------


def test_poisson_mean():
    s = simulate_ensemble(poisson_system(rate=1.0, horizon=10.0), SimConfig(replications=4000, seed=3))
    se = math.sqrt(10.0 / 4000)
    assert abs(s.mean["N"][-1] - 10.0) < 4 * se
    assert s.variance["N"][-1] == pytest.approx(10.0, rel=0.1)


def test_counts_nondecreasing_on_every_path():
    spec = poisson_system(rate=2.0, horizon=3.0)
    for r in range(5):
        v = simulate_path(spec, SimConfig(replications=5, seed=9), r).values["N"]
        assert np.all(np.diff(v) >= 0)


def test_exponential_survival_within_band():
    lam = 0.3
    spec = poisson_system(rate=lam, horizon=5.0, at_risk=1)
    n = 5000
    s = simulate_ensemble(spec, SimConfig(replications=n, seed=4))
    band = dkw(n)
    assert np.max(np.abs(s.survival["N"] - np.exp(-lam * s.grid))) < band
    # Nelson-Aalen slope recovers the rate
    slope = s.cumulative_hazard["N"][-1] / 5.0
    assert slope == pytest.approx(lam, rel=0.08)


def test_at_risk_one_never_exceeds_one():
    s = simulate_ensemble(poisson_system(rate=5.0, horizon=2.0, at_risk=1), SimConfig(replications=500))
    assert s.mean["N"][-1] <= 1.0


def test_time_varying_rate_uses_thinning():
    # rate 0 on [0,1), 2 on [1,2): mean count 2
    spec = SystemSpec(
        "step_rate",
        (CountingProcess("N", baseline=InputFunction("b", (0.0, 1.0), (0.0, 2.0)), at_risk=None),),
        horizon=2.0,
    )
    s = simulate_ensemble(spec, SimConfig(step=0.05, replications=8000, seed=6))
    assert s.mean["N"][19] == 0.0
    assert abs(s.mean["N"][-1] - 2.0) < 4 * math.sqrt(2.0 / 8000)


def test_thinning_warning_for_coarse_steps():
    spec = poisson_system(rate=50.0, horizon=1.0)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        s = simulate_ensemble(spec, SimConfig(step=0.1, replications=10))
    assert s.diagnostics["thinning_rate_warnings"] > 0
    assert any(issubclass(w.category, RuntimeWarning) for w in rec)


# --- hitting times ---------------------------------------------------------------------


def test_deterministic_hitting_time():
    spec = first_passage_system(drift=0.5, sigma=0.0, eta=1.0, horizon=4.0)
    h = 0.01
    hd = estimate_hitting_distribution(spec, SimConfig(step=h, replications=3), "E")
    assert not hd.censored.any()
    assert np.all(np.abs(hd.times - 2.0) <= h + 1e-12)


def test_barrier_below_start_hits_at_zero():
    spec = first_passage_system(drift=0.5, sigma=1.0, eta=-1.0, x0=0.0, horizon=1.0)
    hd = estimate_hitting_distribution(spec, SimConfig(replications=20), "E")
    assert np.all(hd.times == 0.0)


def test_absorbing_event_freezes_replicate():
    spec = first_passage_system(drift=1.0, sigma=0.0, eta=1.0, horizon=3.0)
    path = simulate_path(spec, SimConfig(step=0.01, replications=1))
    after = path.grid > 1.01
    assert np.all(path.values["A"][after] == path.values["A"][after][0])
    assert np.all(path.values["E"][after] == 1.0)


def test_hitting_distribution_ks_with_censoring():
    hd = HittingDistribution.from_event_times(np.array([0.5, 1.5, np.nan, np.nan]), 2.0)
    assert hd.n == 4
    exact = lambda t: np.searchsorted([0.5, 1.5], np.asarray(t), side="right") / 4
    assert hd.ks_distance(exact) == pytest.approx(0.25)  # sup over left limits at jumps
    assert hd.cdf(2.0) == 0.5


def test_unknown_event_name():
    with pytest.raises(KeyError):
        estimate_hitting_distribution(first_passage_system(), SimConfig(replications=2), "A")
