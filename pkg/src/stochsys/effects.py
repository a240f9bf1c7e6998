"""Instantaneous, cumulative and marginal causal effects.

Conditional effects contrast the drift/intensity of a target process under two
trajectories of a factor while every other history is held fixed. Marginal
effects contrast the law of the target in two intervention systems, either in
closed form (discrete confounder mixture) or by Monte Carlo.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np

from .graph import Intervention, apply_do
from .process import (
    CountingProcess,
    DriftDiffusion,
    InputFunction,
    SystemSpec,
    Trajectory,
    drift_value,
    intensity_value,
    state_at,
)
from .simulate import SimConfig, simulate_ensemble

__all__ = [
    "Contrast",
    "ADDITIVE",
    "MULTIPLICATIVE",
    "EffectReport",
    "DiscreteGFormula",
    "instantaneous_effect",
    "cumulative_effect",
    "compensator",
    "marginal_effect_discrete",
    "observational_survival_discrete",
    "marginal_effect_mc",
    "g_formula_discrete",
]

FactorPath = Union[float, InputFunction, Callable[[float], float]]


@dataclass(frozen=True)
class Contrast:
    """Contrast function: ``x - y`` (additive) or ``x / y`` (multiplicative)."""

    kind: str = "additive"

    def __post_init__(self):
        if self.kind not in ("additive", "multiplicative"):
            raise ValueError(f"unknown contrast {self.kind!r}")

    def __call__(self, x: float, y: float) -> float:
        if self.kind == "additive":
            return x - y
        if not (x > 0 and y > 0):
            raise ValueError(f"multiplicative contrast needs positive arguments, got {x}, {y}")
        return x / y

    def curve(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Elementwise contrast; undefined multiplicative points are NaN."""
        x, y = np.asarray(x, float), np.asarray(y, float)
        if self.kind == "additive":
            return x - y
        ok = (x > 0) & (y > 0)
        out = np.full(np.broadcast(x, y).shape, np.nan)
        np.divide(x, y, out=out, where=ok)
        return out

    def stderr(self, x, y, se_x, se_y) -> np.ndarray:
        """Delta-method standard error treating the two estimates as independent."""
        x, y = np.asarray(x, float), np.asarray(y, float)
        se_x, se_y = np.asarray(se_x, float), np.asarray(se_y, float)
        if self.kind == "additive":
            return np.sqrt(se_x**2 + se_y**2)
        ratio = self.curve(x, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.sqrt((se_x / x) ** 2 + (se_y / y) ** 2)
        return np.abs(ratio) * rel


ADDITIVE = Contrast("additive")
MULTIPLICATIVE = Contrast("multiplicative")


def _json_safe(x):
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, np.ndarray):
        return _json_safe(x.tolist())
    if isinstance(x, (float, np.floating)):
        return None if not math.isfinite(x) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


@dataclass
class EffectReport:
    """Effect values, optionally on a time grid, with Monte Carlo errors.

    ``mc_stderr`` is set exactly when the values come from simulation.
    """

    kind: str
    values: np.ndarray
    contrast: Contrast
    times: np.ndarray | None = None
    value_f: np.ndarray | None = None
    value_f_alt: np.ndarray | None = None
    mc_stderr: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _json_safe({
            "kind": self.kind,
            "contrast": self.contrast.kind,
            "times": self.times,
            "values": self.values,
            "value_f": self.value_f,
            "value_f_alt": self.value_f_alt,
            "mc_stderr": self.mc_stderr,
            "metadata": self.metadata,
        })

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def to_csv(self, path) -> None:
        """Columns ``t, value_f, value_f_alt, contrast, stderr``; NaN written as ``nan``."""
        n = len(self.values)
        cols = [
            self.times if self.times is not None else np.arange(n),
            self.value_f if self.value_f is not None else np.full(n, np.nan),
            self.value_f_alt if self.value_f_alt is not None else np.full(n, np.nan),
            self.values,
            self.mc_stderr if self.mc_stderr is not None else np.full(n, np.nan),
        ]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "value_f", "value_f_alt", "contrast", "stderr"])
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# conditional effects


def _left_value(f: FactorPath, t: float) -> float:
    """``f(t-)``."""
    if isinstance(f, InputFunction):
        idx = int(np.searchsorted(f.breakpoints, t, side="left")) - 1
        return f.values[max(idx, 0)]
    if callable(f):
        return float(f(t))
    return float(f)


def _right_value(f: FactorPath, t: float) -> float:
    if isinstance(f, InputFunction):
        return f(t)
    if callable(f):
        return float(f(t))
    return float(f)


def _target_env(spec: SystemSpec, target, t: float, history) -> dict:
    if history is None:
        history = {}
    env = state_at(spec, t, history)
    if isinstance(target, CountingProcess):
        if target.at_risk == 1:
            env[target.name] = 0.0
        elif target.name not in env:
            raise ValueError(
                f"{target.name} can jump more than once; supply its count in the history"
            )
    elif target.name in target.parents and target.name not in env:
        raise ValueError(f"history lacks the current value of {target.name}")
    return env


def _rate(spec: SystemSpec, target, t: float, env: Mapping) -> float:
    if isinstance(target, CountingProcess):
        return float(intensity_value(target, t, env)[0])
    return float(drift_value(target, env))


def _resolve_target(spec: SystemSpec, target: str):
    p = spec.process(target)
    if not isinstance(p, (CountingProcess, DriftDiffusion)):
        raise TypeError(f"effects are defined for counting or drift-diffusion targets, not {p.kind}")
    return p


def instantaneous_effect(
    spec: SystemSpec,
    target: str,
    factor: str,
    f: FactorPath,
    f_alt: FactorPath,
    t: float,
    history=None,
    contrast: Contrast = ADDITIVE,
) -> float:
    """Contrast of the target's rate at ``t`` under factor paths ``f`` and ``f_alt``.

    Parameters
    ----------
    spec : SystemSpec
    target : str
        Counting or drift-diffusion process whose rate is contrasted.
    factor : str
        Parent of ``target`` whose trajectory is varied.
    f, f_alt : float, InputFunction or callable
        The two factor trajectories; only their values at ``t-`` matter.
    history : Trajectory or mapping, optional
        Values of the other parents at ``t-``. For a 0-1 counting target its own
        count is fixed at 0.
    contrast : Contrast
    """
    p = _resolve_target(spec, target)
    env = _target_env(spec, p, t, history)
    env_a = dict(env, **{factor: _left_value(f, t)})
    env_b = dict(env, **{factor: _left_value(f_alt, t)})
    return contrast(_rate(spec, p, t, env_a), _rate(spec, p, t, env_b))


def _breakpoints(obj) -> list[float]:
    if isinstance(obj, InputFunction):
        return list(obj.breakpoints)
    return []


def compensator(
    spec: SystemSpec,
    target: str,
    factor: str,
    f: FactorPath,
    t: float,
    history=None,
    n_grid: int = 1000,
) -> float:
    """Cumulative rate ``int_0^t rate(u) du`` with the factor following ``f``.

    Left-endpoint rectangle rule on the history grid (for a :class:`Trajectory`)
    or on a uniform grid of ``n_grid`` cells refined at every breakpoint of the
    inputs, baseline and factor paths; exact for piecewise-constant integrands.
    """
    p = _resolve_target(spec, target)
    if t <= 0:
        return 0.0
    if isinstance(history, Trajectory):
        pts = [u for u in history.grid if u < t]
    else:
        pts = list(np.linspace(0.0, t, n_grid + 1)[:-1])
    extra = _breakpoints(f)
    for inp in spec.inputs:
        extra += _breakpoints(inp)
    if isinstance(p, CountingProcess):
        extra += _breakpoints(p.baseline)
    pts = np.unique(np.array([0.0] + pts + [b for b in extra if 0 <= b < t]))
    widths = np.diff(np.append(pts, t))
    total = 0.0
    for u, w in zip(pts, widths):
        # value on [u, u + w): read the history at u, the factor right-continuously
        env = _target_env(spec, p, u, history)
        env[factor] = _right_value(f, u)
        total += w * _rate(spec, p, u, env)
    return total


def cumulative_effect(
    spec: SystemSpec,
    target: str,
    factor: str,
    f: FactorPath,
    f_alt: FactorPath,
    t: float,
    history=None,
    contrast: Contrast = ADDITIVE,
    n_grid: int = 1000,
) -> float:
    """Contrast of compensators at ``t`` under the two factor paths.

    For additive models this equals the time integral of
    :func:`instantaneous_effect`; at ``t = 0`` the additive effect is 0.
    """
    lam_a = compensator(spec, target, factor, f, t, history, n_grid)
    lam_b = compensator(spec, target, factor, f_alt, t, history, n_grid)
    return contrast(lam_a, lam_b)


# ---------------------------------------------------------------------------
# marginal effects


def _check_prob(*xs: float) -> None:
    for x in xs:
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"probability out of [0, 1]: {x}")


def marginal_effect_discrete(p_g1: float, s_f_g1: float, s_f_g0: float) -> float:
    """Interventional survival ``P(G=1) S(t|f,G=1) + P(G=0) S(t|f,G=0)``."""
    _check_prob(p_g1, s_f_g1, s_f_g0)
    return p_g1 * s_f_g1 + (1.0 - p_g1) * s_f_g0


def observational_survival_discrete(p_g1_given_f: float, s_f_g1: float, s_f_g0: float) -> float:
    """Observational survival given ``F=f``: same mixture weighted by ``P(G|F=f)``."""
    _check_prob(p_g1_given_f, s_f_g1, s_f_g0)
    return p_g1_given_f * s_f_g1 + (1.0 - p_g1_given_f) * s_f_g0


def marginal_effect_mc(
    spec: SystemSpec,
    iv: Intervention,
    iv_alt: Intervention,
    cfg: SimConfig,
    target: str,
    contrast: Contrast = ADDITIVE,
    workers: int = 1,
) -> EffectReport:
    """Monte Carlo contrast of the target's law under two interventions.

    For counting/threshold targets the compared curves are survival functions
    with binomial standard errors; for continuous targets they are means. Both
    systems share the random streams of ``cfg``, so identical interventions give
    an exactly zero additive contrast.
    """
    if iv.target != iv_alt.target:
        raise ValueError(f"interventions target different processes: {iv.target} vs {iv_alt.target}")
    if target == iv.target:
        raise ValueError("the outcome cannot be the intervened process")
    sa = simulate_ensemble(apply_do(spec, iv), cfg, workers=workers)
    sb = simulate_ensemble(apply_do(spec, iv_alt), cfg, workers=workers)
    if target in sa.survival:
        va, vb = sa.survival[target], sb.survival[target]
        se_a, se_b = sa.survival_stderr(target), sb.survival_stderr(target)
        measure = "survival"
    elif target in sa.mean:
        va, vb = sa.mean[target], sb.mean[target]
        se_a, se_b = sa.mean_stderr(target), sb.mean_stderr(target)
        measure = "mean"
    else:
        raise KeyError(f"unknown target {target!r}")
    return EffectReport(
        kind="marginal",
        values=contrast.curve(va, vb),
        contrast=contrast,
        times=sa.grid,
        value_f=va,
        value_f_alt=vb,
        mc_stderr=contrast.stderr(va, vb, se_a, se_b),
        metadata={
            "target": target,
            "factor": iv.target,
            "measure": measure,
            "control": list(iv.control.values),
            "control_alt": list(iv_alt.control.values),
            "replications": cfg.replications,
            "seed": cfg.seed,
        },
    )


@dataclass
class DiscreteGFormula:
    """Observational estimates for a time-constant factor and confounder."""

    interventional: float
    interventional_stderr: float
    observational: float
    observational_stderr: float
    confounder_probabilities: dict
    conditional_survival: dict


def g_formula_discrete(
    factor: np.ndarray,
    confounder: np.ndarray,
    survived: np.ndarray,
    f: float,
) -> DiscreteGFormula:
    """Reconstruct ``S_I(t|f)`` from observational per-subject data.

    ``factor``/``confounder`` are the subjects' time-constant values and
    ``survived`` flags ``D_t = 0``. The interventional survival is the mixture of
    ``S(t|f, G=g)`` weighted by the marginal ``P(G=g)``; the observational one
    simply conditions on ``F=f``.
    """
    factor, confounder = np.asarray(factor), np.asarray(confounder)
    survived = np.asarray(survived, dtype=bool)
    n = len(survived)
    at_f = factor == f
    if not at_f.any():
        raise ValueError(f"no subject with factor value {f}")
    probs, surv = {}, {}
    est, var = 0.0, 0.0
    for g in np.unique(confounder):
        in_g = confounder == g
        cell = at_f & in_g
        if not cell.any():
            raise ValueError(f"no subject with factor {f} and confounder {g}")
        pg = in_g.mean()
        sg = survived[cell].mean()
        probs[float(g)] = float(pg)
        surv[float(g)] = float(sg)
        est += pg * sg
        var += pg**2 * sg * (1 - sg) / cell.sum()
    # variability of the estimated confounder weights
    gs = np.array(sorted(surv))
    s_vec = np.array([surv[g] for g in gs])
    p_vec = np.array([probs[g] for g in gs])
    cov = (np.diag(p_vec) - np.outer(p_vec, p_vec)) / n
    var += float(s_vec @ cov @ s_vec)
    so = survived[at_f].mean()
    return DiscreteGFormula(
        interventional=float(est),
        interventional_stderr=math.sqrt(var),
        observational=float(so),
        observational_stderr=math.sqrt(so * (1 - so) / at_f.sum()),
        confounder_probabilities=probs,
        conditional_survival=surv,
    )
