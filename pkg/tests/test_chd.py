import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from stochsys.chd import (
    PHYSIOLOGY,
    CHDConfig,
    ConfigError,
    IGParams,
    PhysiologyParams,
    atheroma_contrast,
    beta_t,
    build_chd_system,
    chd_demo,
    chd_hazard,
    config_from_dict,
    equilibrium_ig_params,
    ig_pdf,
    ig_survival,
    ig_total_mass,
)
from stochsys.process import InputFunction
from stochsys.simulate import SimConfig, sample_states


def first_passage_cdf(eta, lam, t):
    """Independent closed form for the first passage of lam*t + B_t over eta."""
    t = np.asarray(t, dtype=float)
    rt = np.sqrt(t)
    return stats.norm.cdf((lam * t - eta) / rt) + np.exp(2 * lam * eta) * stats.norm.cdf(
        (-lam * t - eta) / rt
    )


# --- coefficients ---------------------------------------------------------------


def test_beta_t_values():
    assert beta_t(1.0, math.log(2), 1.0) == pytest.approx(0.5)
    assert beta_t(2.0, 1.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        beta_t(1.0, 0.0, 1.0)


@given(beta=st.floats(-5, 5), theta=st.floats(0.01, 5), t=st.floats(0, 50), dt=st.floats(0, 5))
def test_beta_t_bounded_and_monotone(beta, theta, t, dt):
    b = beta_t(beta, theta, t)
    assert abs(b) <= abs(beta) + 1e-15
    assert abs(beta_t(beta, theta, t + dt)) >= abs(b) - 1e-15


def _single_pathway(beta_ldl=4.0, theta=math.log(2)):
    phys = {p: PhysiologyParams(beta_smoking=0.0) for p in PHYSIOLOGY}
    phys["LDL"] = PhysiologyParams(theta=theta, beta_smoking=1.0)
    beta = {p: 0.0 for p in PHYSIOLOGY}
    beta["LDL"] = beta_ldl
    return CHDConfig(physiology=phys, beta=beta)


def test_atheroma_contrast_value_and_scaling():
    cfg = _single_pathway()
    # 4 * (1 - 1/2) * 1 * (1 - 0)
    assert atheroma_contrast(cfg, 1.0, 0.0, 1.0) == pytest.approx(2.0)
    assert atheroma_contrast(cfg, 2.0, 0.0, 1.0) == pytest.approx(4.0)
    assert atheroma_contrast(cfg, 1.0, 1.0, 1.0) == 0.0
    assert atheroma_contrast(cfg, 1.0, 0.0, 0.0) == 0.0


def test_atheroma_contrast_needs_constant_lifestyle():
    s = InputFunction("smoking", (0.0, 5.0), (10.0, 0.0))
    with pytest.raises(ValueError, match="constant"):
        atheroma_contrast(CHDConfig(), s, 0.0, 3.0)


def test_atheroma_contrast_matches_simulation():
    cfg, alt = CHDConfig(horizon=4.0), CHDConfig(horizon=4.0, smoking=InputFunction.constant("smoking", 0.0))
    sim = SimConfig(step=0.01, replications=4000, seed=2)
    a = sample_states(build_chd_system(cfg), sim, [3.0])
    b = sample_states(build_chd_system(alt), sim, [3.0])
    drift = lambda s: sum(cfg.beta[p] * s[p][:, 0] for p in PHYSIOLOGY)  # noqa: E731
    diff = drift(a) - drift(b)
    expected = atheroma_contrast(cfg, 10.0, 0.0, 3.0)
    # shared streams make the difference almost deterministic
    assert diff.mean() == pytest.approx(expected, rel=0.02)


# --- inverse Gaussian oracle ------------------------------------------------------


def test_ig_pdf_values():
    assert ig_pdf(IGParams(1.0, 1.0), 1.0) == pytest.approx(0.398942, abs=1e-6)
    assert ig_pdf(IGParams(1.0, 0.0), 1.0) == pytest.approx(0.241971, abs=1e-6)
    with pytest.raises(ValueError):
        IGParams(0.0, 1.0)


@pytest.mark.parametrize("eta, lam", [(1.0, 0.5), (1.0, 1.0), (2.0, 0.3), (0.5, 3.0)])
def test_ig_mass_and_survival(eta, lam):
    p = IGParams(eta, lam)
    assert ig_total_mass(p) == pytest.approx(1.0, abs=1e-8)
    t = np.array([0.05, 0.5, 1.0, 2.0, 5.0, 20.0])
    np.testing.assert_allclose(ig_survival(p, t), 1 - first_passage_cdf(eta, lam, t), atol=1e-9)


def test_defective_law_without_positive_drift():
    p = IGParams(1.0, -0.5)
    # P(ever hit) = exp(2 lam eta) for negative drift
    assert ig_total_mass(p) == pytest.approx(math.exp(-1.0), abs=1e-7)


def test_hazard_positive_and_consistent():
    p = IGParams(1.0, 0.5)
    t = np.linspace(0.1, 10, 50)
    h = chd_hazard(p, t)
    assert np.all(h > 0)
    np.testing.assert_allclose(h, ig_pdf(p, t) / ig_survival(p, t))
    # scipy parametrisation: mean eta/lam, shape eta^2
    ref = stats.invgauss(mu=1.0 / (p.eta * p.lam), scale=p.eta**2)
    tt = np.array([1.0, 10.0, 40.0])
    np.testing.assert_allclose(chd_hazard(p, tt), ref.pdf(tt) / ref.sf(tt), rtol=1e-6)
    # approaches lam^2 / 2 from above
    assert 0.125 < chd_hazard(p, 200.0) < 0.125 * (1 + 3.5 / (p.lam**2 * 200))


def test_equilibrium_params():
    cfg = CHDConfig()
    p = equilibrium_ig_params(cfg)
    drift = cfg.lambda0 + sum(
        cfg.beta[q] * (cfg.physiology[q].mu0 + cfg.physiology[q].beta_smoking * 10.0
                       + cfg.physiology[q].beta_activity * 2.0 + cfg.physiology[q].beta_diet * 2.5)
        for q in PHYSIOLOGY
    )
    assert p.lam == pytest.approx(drift / cfg.sigma_A)
    assert p.eta == pytest.approx(cfg.eta / cfg.sigma_A)


# --- system construction and demo ----------------------------------------------------


def test_invalid_config():
    phys = dict(CHDConfig().physiology)
    phys["LDL"] = PhysiologyParams(theta=0.0)
    with pytest.raises(ConfigError):
        build_chd_system(CHDConfig(physiology=phys))
    with pytest.raises(ConfigError, match="'smokin'"):
        config_from_dict({"smokin": 1})
    with pytest.raises(ConfigError, match="physiology.LDL.thet"):
        config_from_dict({"physiology": {"LDL": {"thet": 1}}})


def test_config_from_dict_overrides():
    cfg = config_from_dict({"smoking": 0, "beta": {"LDL": 0.1}, "horizon": 10,
                            "diet": {"breakpoints": [0, 5], "values": [2, 1]}})
    assert cfg.smoking.values == (0.0,)
    assert cfg.beta["LDL"] == 0.1 and cfg.beta["BMI"] == 0.05
    assert cfg.horizon == 10.0
    assert not cfg.diet.is_constant


def test_equilibrium_system_has_no_physiological_noise():
    spec = build_chd_system(CHDConfig(equilibrium=True))
    assert [p.name for p in spec.processes] == ["Ath", "CHD"]
    assert {i.name for i in spec.inputs} == set(PHYSIOLOGY)


def test_demo_identical_lifestyles_zero_contrast():
    cfg = CHDConfig(horizon=10.0)
    rep = chd_demo(cfg, cfg, SimConfig(step=0.05, replications=300, record_grid=20))
    assert np.all(rep.contrast == 0.0)


def test_demo_smoking_dominates_and_matches_oracle(tmp_path):
    cfg = CHDConfig(horizon=20.0, equilibrium=True)
    alt = replace(cfg, smoking=InputFunction.constant("smoking", 0.0))
    rep = chd_demo(cfg, alt, SimConfig(step=0.01, replications=3000, seed=4, record_grid=10))
    assert np.all(rep.p_mc >= rep.p_mc_alt)
    band = math.sqrt(math.log(2 / 1e-3) / (2 * 3000))
    assert rep.ks < band and rep.ks_alt < band
    rep.write(tmp_path / "r.json", tmp_path / "r.csv")
    head = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert head == "t,P_MC,P_IG,contrast,stderr,P_MC_alt,P_IG_alt"


def test_demo_rejects_non_lifestyle_differences():
    with pytest.raises(ConfigError):
        chd_demo(CHDConfig(), CHDConfig(eta=3.0), SimConfig(replications=2))
