"""Coronary heart disease lifecourse model.

Lifestyle inputs (smoking, physical activity, diet) set the targets of four
mean-reverting physiological processes (BMI, LDL, CRP, SBP); these drive the
drift of an accumulating atheromatous process ``Ath``; CHD occurs when ``Ath``
first exceeds the threshold ``eta``.

When lifestyles are constant and the physiology is taken at equilibrium, ``Ath``
is a Brownian motion with constant drift and the CHD time follows an inverse
Gaussian law, available here in closed form (density) and by quadrature
(survival, hazard).

Default parameter values are illustrative placeholders, not estimates.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy import integrate

from .process import (
    DriftDiffusion,
    InputFunction,
    LinearForm,
    OUProcess,
    SystemSpec,
    ThresholdEvent,
    validate_system,
)
from .simulate import HittingDistribution, SimConfig, simulate_ensemble

__all__ = [
    "PHYSIOLOGY",
    "LIFESTYLES",
    "PhysiologyParams",
    "CHDConfig",
    "IGParams",
    "ConfigError",
    "build_chd_system",
    "beta_t",
    "atheroma_contrast",
    "equilibrium_ig_params",
    "ig_pdf",
    "ig_survival",
    "ig_total_mass",
    "chd_hazard",
    "chd_demo",
    "CHDDemoReport",
    "config_from_dict",
]

logger = logging.getLogger(__name__)

PHYSIOLOGY = ("BMI", "LDL", "CRP", "SBP")
LIFESTYLES = ("smoking", "activity", "diet")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PhysiologyParams:
    theta: float = 0.5
    sigma: float = 0.1
    mu0: float = 0.0
    beta_smoking: float = 0.03
    beta_activity: float = -0.1
    beta_diet: float = 0.1
    initial_value: float = 0.0


def _default_physiology() -> dict:
    return {
        "BMI": PhysiologyParams(theta=0.3, beta_smoking=0.01, beta_activity=-0.15, beta_diet=0.2),
        "LDL": PhysiologyParams(theta=0.5, beta_smoking=0.03, beta_activity=-0.1, beta_diet=0.15),
        "CRP": PhysiologyParams(theta=1.0, beta_smoking=0.05, beta_activity=-0.05, beta_diet=0.05),
        "SBP": PhysiologyParams(theta=0.4, beta_smoking=0.02, beta_activity=-0.1, beta_diet=0.1),
    }


@dataclass(frozen=True)
class CHDConfig:
    """Parameters of the CHD system (illustrative defaults; time in years)."""

    physiology: dict = field(default_factory=_default_physiology)
    lambda0: float = 0.02
    beta: dict = field(default_factory=lambda: {"BMI": 0.05, "LDL": 0.08, "CRP": 0.04, "SBP": 0.06})
    sigma_A: float = 0.2
    initial_atheroma: float = 0.0
    eta: float = 2.0
    smoking: InputFunction = field(default_factory=lambda: InputFunction.constant("smoking", 10.0))
    activity: InputFunction = field(default_factory=lambda: InputFunction.constant("activity", 2.0))
    diet: InputFunction = field(default_factory=lambda: InputFunction.constant("diet", 2.5))
    horizon: float = 40.0
    equilibrium: bool = False

    def lifestyle(self, name: str) -> InputFunction:
        return getattr(self, name).renamed(name)

    def target_form(self, p: str) -> LinearForm:
        pp = self.physiology[p]
        terms = [("smoking", pp.beta_smoking), ("activity", pp.beta_activity), ("diet", pp.beta_diet)]
        return LinearForm(pp.mu0, _nonzero(terms, p))


def _nonzero(terms, owner):
    kept = []
    for n, c in terms:
        if c == 0.0:
            logger.warning("%s: zero coefficient on %s, edge removed", owner, n)
        else:
            kept.append((n, c))
    return tuple(kept)


@dataclass(frozen=True)
class IGParams:
    """First passage of ``drift * t + B_t`` (unit diffusion) over ``eta``."""

    eta: float
    lam: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"barrier must be positive, got {self.eta}")


def _check_config(cfg: CHDConfig) -> None:
    problems = []
    if set(cfg.physiology) != set(PHYSIOLOGY):
        problems.append(f"physiology must define exactly {PHYSIOLOGY}")
    if set(cfg.beta) != set(PHYSIOLOGY):
        problems.append(f"beta must define exactly {PHYSIOLOGY}")
    for p, pp in cfg.physiology.items():
        if not pp.theta > 0:
            problems.append(f"{p}: nonpositive reversion rate theta={pp.theta}")
    if not cfg.eta > cfg.initial_atheroma:
        problems.append("threshold eta must exceed the initial atheroma value")
    if problems:
        raise ConfigError("; ".join(problems))


def _equilibrium_input(cfg: CHDConfig, p: str) -> InputFunction:
    """Physiological target as a deterministic input (piecewise constant)."""
    form = cfg.target_form(p)
    ins = [cfg.lifestyle(n) for n in LIFESTYLES]
    bps = sorted(set(b for i in ins for b in i.breakpoints))
    env = lambda t: {i.name: i(t) for i in ins}  # noqa: E731
    return InputFunction(p, tuple(bps), tuple(float(form(env(b))) for b in bps))


def build_chd_system(cfg: CHDConfig | None = None) -> SystemSpec:
    """SystemSpec of the CHD pathway lifestyle -> physiology -> Ath -> CHD.

    Zero coefficients are dropped (with a logged warning) so they create no edge.
    With ``cfg.equilibrium`` the physiological processes are replaced by their
    targets, i.e. deterministic inputs driven by the lifestyles.
    """
    cfg = cfg or CHDConfig()
    _check_config(cfg)
    ath_form = LinearForm(cfg.lambda0, _nonzero([(p, cfg.beta[p]) for p in PHYSIOLOGY], "Ath"))
    processes = []
    if cfg.equilibrium:
        inputs = [_equilibrium_input(cfg, p) for p in PHYSIOLOGY]
    else:
        inputs = [cfg.lifestyle(n) for n in LIFESTYLES]
        for p in PHYSIOLOGY:
            pp = cfg.physiology[p]
            processes.append(
                OUProcess(p, theta=pp.theta, target=cfg.target_form(p), sigma=pp.sigma,
                          initial_value=pp.initial_value)
            )
    processes.append(
        DriftDiffusion("Ath", drift=ath_form, sigma=cfg.sigma_A, initial_value=cfg.initial_atheroma)
    )
    processes.append(ThresholdEvent("CHD", monitored="Ath", eta=cfg.eta, absorbing=True))
    spec = SystemSpec("chd", tuple(processes), tuple(inputs), (), cfg.horizon)
    report = validate_system(spec)
    report.raise_for_errors()
    return spec


def beta_t(beta: float, theta: float, t: float) -> float:
    """Effective coefficient ``beta * (1 - exp(-theta t))`` after time ``t``."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    return beta * -math.expm1(-theta * t)


def _constant_level(s) -> float:
    if isinstance(s, InputFunction):
        if not s.is_constant:
            raise ValueError(
                "closed form needs a constant lifestyle; use chd_demo or marginal_effect_mc"
            )
        return s.values[0]
    return float(s)


def atheroma_contrast(cfg: CHDConfig, s, s_alt, t: float) -> float:
    """Expected difference of the atheroma drift at ``t`` between two constant
    smoking levels (total effect through the four physiological processes)."""
    diff = _constant_level(s) - _constant_level(s_alt)
    coef = sum(
        beta_t(cfg.beta[p], cfg.physiology[p].theta, t) * cfg.physiology[p].beta_smoking
        for p in PHYSIOLOGY
    )
    return coef * diff


def equilibrium_ig_params(cfg: CHDConfig) -> IGParams:
    """Inverse Gaussian parameters for constant lifestyles at equilibrium.

    The atheroma drift becomes ``lambda0 + sum beta_p mu_p``; dividing barrier
    distance and drift by ``sigma_A`` brings the problem to unit diffusion.
    """
    if not cfg.sigma_A > 0:
        raise ValueError("sigma_A must be positive for the inverse Gaussian oracle")
    levels = {n: _constant_level(cfg.lifestyle(n)) for n in LIFESTYLES}
    drift = cfg.lambda0 + sum(cfg.beta[p] * cfg.target_form(p)(levels) for p in PHYSIOLOGY)
    return IGParams(eta=(cfg.eta - cfg.initial_atheroma) / cfg.sigma_A, lam=drift / cfg.sigma_A)


def ig_pdf(p: IGParams, t):
    """``eta / sqrt(2 pi t^3) * exp(-(eta - lam t)^2 / (2 t))``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("ig_pdf needs t > 0")
    out = p.eta / np.sqrt(2 * np.pi * t_arr**3) * np.exp(-((p.eta - p.lam * t_arr) ** 2) / (2 * t_arr))
    return float(out) if out.ndim == 0 else out


def _pdf_scalar(p: IGParams):
    def f(t):
        if t <= 0:
            return 0.0
        return p.eta / math.sqrt(2 * math.pi * t**3) * math.exp(-((p.eta - p.lam * t) ** 2) / (2 * t))

    return f


def _mode_scale(p: IGParams) -> float:
    # rough location of the density mass, used to split quadrature ranges
    if p.lam > 0:
        return p.eta / p.lam
    return p.eta**2


def ig_total_mass(p: IGParams) -> float:
    """``int_0^inf ig_pdf`` by adaptive quadrature (1 for positive drift)."""
    f = _pdf_scalar(p)
    m = _mode_scale(p)
    a, _ = integrate.quad(f, 0.0, m, epsabs=1e-13, epsrel=1e-12, limit=200)
    b, _ = integrate.quad(f, m, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return a + b


def _survival_scalar(p: IGParams, t: float) -> float:
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 1.0
    f = _pdf_scalar(p)
    m = _mode_scale(p)
    if p.lam > 0 and t > m:
        # upper tail directly, keeps relative accuracy for the hazard
        val, _ = integrate.quad(f, t, np.inf, epsabs=1e-15, epsrel=1e-12, limit=200)
        return val
    pts = [x for x in (0.25 * m, m) if 0 < x < t]
    val, _ = integrate.quad(f, 0.0, t, points=pts or None, epsabs=1e-14, epsrel=1e-12, limit=200)
    return 1.0 - val


def ig_survival(p: IGParams, t):
    """``1 - int_0^t ig_pdf``; defective (positive limit) when ``lam <= 0``."""
    if np.ndim(t) == 0:
        return _survival_scalar(p, float(t))
    return np.array([_survival_scalar(p, float(x)) for x in np.asarray(t, dtype=float)])


def chd_hazard(p: IGParams, t):
    """``ig_pdf / ig_survival``; raises where the survival underflows to 0."""
    s = np.asarray(ig_survival(p, t), dtype=float)
    if np.any(s <= 0):
        raise ValueError("survival is numerically zero; hazard undefined")
    out = np.asarray(ig_pdf(p, t)) / s
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# demo


@dataclass
class CHDDemoReport:
    grid: np.ndarray
    p_mc: np.ndarray
    p_mc_alt: np.ndarray
    contrast: np.ndarray
    stderr: np.ndarray
    p_ig: np.ndarray | None
    p_ig_alt: np.ndarray | None
    ig_params: IGParams | None
    ig_params_alt: IGParams | None
    ks: float | None
    ks_alt: float | None
    atheroma_contrast: float | None
    replications: int
    seed: int

    def to_dict(self) -> dict:
        def arr(x):
            return None if x is None else [float(v) for v in x]

        return {
            "replications": self.replications,
            "seed": self.seed,
            "grid": arr(self.grid),
            "p_mc": arr(self.p_mc),
            "p_mc_alt": arr(self.p_mc_alt),
            "contrast": arr(self.contrast),
            "stderr": arr(self.stderr),
            "p_ig": arr(self.p_ig),
            "p_ig_alt": arr(self.p_ig_alt),
            "ig_params": None if self.ig_params is None else asdict(self.ig_params),
            "ig_params_alt": None if self.ig_params_alt is None else asdict(self.ig_params_alt),
            "ks": self.ks,
            "ks_alt": self.ks_alt,
            "atheroma_contrast_at_horizon": self.atheroma_contrast,
        }

    def write(self, json_path, csv_path) -> None:
        with open(json_path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        nan = np.full(len(self.grid), np.nan)
        cols = [self.grid, self.p_mc, self.p_ig if self.p_ig is not None else nan,
                self.contrast, self.stderr, self.p_mc_alt,
                self.p_ig_alt if self.p_ig_alt is not None else nan]
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "P_MC", "P_IG", "contrast", "stderr", "P_MC_alt", "P_IG_alt"])
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])


def _differs_only_in_lifestyle(a: CHDConfig, b: CHDConfig) -> bool:
    return all(
        getattr(a, f.name) == getattr(b, f.name) for f in fields(CHDConfig) if f.name not in LIFESTYLES
    )


def _all_constant(cfg: CHDConfig) -> bool:
    return all(cfg.lifestyle(n).is_constant for n in LIFESTYLES)


def chd_demo(cfg: CHDConfig, cfg_alt: CHDConfig, sim: SimConfig, workers: int = 1) -> CHDDemoReport:
    """Simulate CHD incidence under two lifestyles and compare with the IG oracle.

    Both runs share random streams. IG curves (equilibrium simplification) are
    included when both lifestyles are constant.
    """
    if not _differs_only_in_lifestyle(cfg, cfg_alt):
        raise ConfigError("the two configurations must differ only in lifestyle inputs")
    sa = simulate_ensemble(build_chd_system(cfg), sim, workers=workers)
    sb = simulate_ensemble(build_chd_system(cfg_alt), sim, workers=workers)
    p_a = 1.0 - sa.survival["CHD"]
    p_b = 1.0 - sb.survival["CHD"]
    se = np.sqrt(sa.survival_stderr("CHD") ** 2 + sb.survival_stderr("CHD") ** 2)
    p_ig = p_ig_alt = ig_a = ig_b = ks_a = ks_b = ath = None
    if _all_constant(cfg) and _all_constant(cfg_alt) and cfg.sigma_A > 0:
        ig_a, ig_b = equilibrium_ig_params(cfg), equilibrium_ig_params(cfg_alt)
        p_ig = 1.0 - ig_survival(ig_a, sa.grid)
        p_ig_alt = 1.0 - ig_survival(ig_b, sb.grid)
        ks_a = _ks(sa, cfg.horizon, ig_a)
        ks_b = _ks(sb, cfg.horizon, ig_b)
        ath = atheroma_contrast(cfg, cfg.smoking, cfg_alt.smoking, cfg.horizon)
    return CHDDemoReport(
        grid=sa.grid, p_mc=p_a, p_mc_alt=p_b, contrast=p_a - p_b, stderr=se,
        p_ig=p_ig, p_ig_alt=p_ig_alt, ig_params=ig_a, ig_params_alt=ig_b,
        ks=ks_a, ks_alt=ks_b, atheroma_contrast=ath,
        replications=sim.replications, seed=sim.seed,
    )


def _ks(summary, horizon: float, ig: IGParams) -> float:
    hd = HittingDistribution.from_event_times(summary.first_event_times["CHD"], horizon)
    return hd.ks_distance(lambda t: 1.0 - ig_survival(ig, np.asarray(t)))


# ---------------------------------------------------------------------------
# configuration documents


def _input_from(name, obj) -> InputFunction:
    if isinstance(obj, (int, float)):
        return InputFunction.constant(name, float(obj))
    if isinstance(obj, dict) and set(obj) <= {"breakpoints", "values"}:
        return InputFunction(name, tuple(obj.get("breakpoints", [0.0])), tuple(obj["values"]))
    raise ConfigError(f"{name}: lifestyle must be a number or {{breakpoints, values}}")


def config_from_dict(obj: dict, base: CHDConfig | None = None) -> CHDConfig:
    """Override ``base`` (defaults) with a JSON-style document.

    Unknown keys raise :class:`ConfigError` naming the key.
    """
    base = base or CHDConfig()
    if not isinstance(obj, dict):
        raise ConfigError("configuration must be an object")
    allowed = {f.name for f in fields(CHDConfig)}
    changes = {}
    for key, val in obj.items():
        if key not in allowed:
            raise ConfigError(f"unknown configuration key {key!r}")
        if key == "physiology":
            phys = dict(base.physiology)
            for p, sub in val.items():
                if p not in PHYSIOLOGY:
                    raise ConfigError(f"unknown configuration key 'physiology.{p}'")
                pf = {f.name for f in fields(PhysiologyParams)}
                bad = set(sub) - pf
                if bad:
                    raise ConfigError(f"unknown configuration key 'physiology.{p}.{sorted(bad)[0]}'")
                phys[p] = replace(phys[p], **{k: float(v) for k, v in sub.items()})
            changes[key] = phys
        elif key == "beta":
            bad = set(val) - set(PHYSIOLOGY)
            if bad:
                raise ConfigError(f"unknown configuration key 'beta.{sorted(bad)[0]}'")
            changes[key] = {**base.beta, **{k: float(v) for k, v in val.items()}}
        elif key in LIFESTYLES:
            changes[key] = _input_from(key, val)
        elif key == "equilibrium":
            changes[key] = bool(val)
        else:
            changes[key] = float(val)
    return replace(base, **changes)
