"""Small reference systems with known answers.

``confounded_survival_system`` is the three-process observation system where a
binary confounder ``G`` influences both a binary factor ``F`` and a disease
``D``; its parameters are solved so that the conditional survivals
``S(t_eval | F=1, G=g)`` take prescribed values.
"""
from __future__ import annotations

import math

from .process import (
    CountingProcess,
    DriftDiffusion,
    InputFunction,
    LinearForm,
    OUProcess,
    SystemSpec,
    ThresholdEvent,
)

__all__ = [
    "confounded_survival_system",
    "poisson_system",
    "ou_system",
    "first_passage_system",
    "chain_system",
]


def _binary(name: str, prob: LinearForm) -> CountingProcess:
    # count fixed at its Bernoulli initial draw: zero intensity, one jump max
    return CountingProcess(name, at_risk=1, initial_probability=prob)


def confounded_survival_system(
    p_g1: float = 0.5,
    p_f1_given_g: tuple[float, float] = (0.1, 0.9),
    s_g1: float = 0.8,
    s_g0: float = 0.6,
    t_eval: float = 5.0,
    beta_f: float = 0.02,
    horizon: float = 5.0,
) -> SystemSpec:
    """G -> F, G -> D, F -> D with time-constant binary F and G.

    ``D`` has the additive intensity ``alpha0 + beta_f F + beta_g G`` with
    ``alpha0`` and ``beta_g`` chosen so that ``S(t_eval | F=1, G=g)`` equals
    ``s_g1`` / ``s_g0`` (exponential survival).
    """
    lam1 = -math.log(s_g1) / t_eval
    lam0 = -math.log(s_g0) / t_eval
    alpha0 = lam0 - beta_f
    beta_g = lam1 - lam0
    p0, p1 = p_f1_given_g
    return SystemSpec(
        name="confounded_survival",
        processes=(
            _binary("G", LinearForm(p_g1)),
            _binary("F", LinearForm(p0, (("G", p1 - p0),))),
            CountingProcess(
                "D",
                intensity=LinearForm(0.0, (("F", beta_f), ("G", beta_g))),
                baseline=InputFunction("baseline", (0.0,), (alpha0,)),
                at_risk=1,
            ),
        ),
        horizon=horizon,
    )


def poisson_system(rate: float = 1.0, horizon: float = 10.0, at_risk: int | None = None) -> SystemSpec:
    return SystemSpec(
        name="poisson",
        processes=(
            CountingProcess(
                "N", baseline=InputFunction("baseline", (0.0,), (rate,)), at_risk=at_risk
            ),
        ),
        horizon=horizon,
    )


def ou_system(theta=0.5, mu=2.0, sigma=1.0, x0=0.0, horizon=20.0) -> SystemSpec:
    return SystemSpec(
        name="ou",
        processes=(OUProcess("X", theta=theta, target=LinearForm(mu), sigma=sigma, initial_value=x0),),
        horizon=horizon,
    )


def first_passage_system(drift=0.5, sigma=1.0, eta=1.0, x0=0.0, horizon=20.0) -> SystemSpec:
    """Drifted Brownian motion absorbed at the barrier ``eta``."""
    return SystemSpec(
        name="first_passage",
        processes=(
            DriftDiffusion("A", drift=LinearForm(drift), sigma=sigma, initial_value=x0),
            ThresholdEvent("E", monitored="A", eta=eta, absorbing=True),
        ),
        horizon=horizon,
    )


def chain_system(horizon: float = 1.0) -> SystemSpec:
    """A -> B -> C chain of OU processes."""
    return SystemSpec(
        name="chain",
        processes=(
            OUProcess("A", theta=1.0),
            OUProcess("B", theta=1.0, target=LinearForm(0.0, (("A", 1.0),))),
            OUProcess("C", theta=1.0, target=LinearForm(0.0, (("B", 1.0),))),
        ),
        horizon=horizon,
    )
