"""Domain types for stochastic systems and pointwise drift/intensity evaluation.

A system is a collection of named components:

* processes (:class:`OUProcess`, :class:`DriftDiffusion`, :class:`CountingProcess`,
  :class:`ThresholdEvent`) whose dynamics depend on the current values of their
  structural parents,
* deterministic inputs (:class:`InputFunction`), e.g. lifestyle factors,
* time-constant attributes (:class:`Attribute`).

Every drift and intensity is a :class:`LinearForm` over parent values read at
``t-`` (the state of the history just before ``t``). The same evaluation code is
used pointwise here and, vectorised over replicates, by the simulator.

Sign convention for OU processes: ``dX = -theta (X - mu_t) dt + sigma dB`` with
``theta > 0`` (mean reverting).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Attribute",
    "InputFunction",
    "LinearForm",
    "OUProcess",
    "DriftDiffusion",
    "CountingProcess",
    "ThresholdEvent",
    "ProcessSpec",
    "SystemSpec",
    "Trajectory",
    "ValidationReport",
    "SystemValidationError",
    "validate_system",
    "eval_drift",
    "eval_intensity",
    "state_at",
]

Number = Union[float, np.ndarray]


class SystemValidationError(ValueError):
    """Raised when a system fails validation; carries the report."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(report.errors) or "invalid system")


@dataclass(frozen=True)
class Attribute:
    """Time-constant characteristic of the system (gender, genotype...)."""

    name: str
    value: Union[float, int, str]

    @property
    def numeric(self) -> bool:
        return isinstance(self.value, (int, float)) and not isinstance(self.value, bool)


@dataclass(frozen=True)
class InputFunction:
    """Deterministic, right-continuous piecewise-constant function of time.

    ``values[i]`` holds on ``[breakpoints[i], breakpoints[i+1])``; the last value
    extends to the end of the horizon. ``breakpoints[0]`` must be 0.
    """

    name: str
    breakpoints: tuple[float, ...] = (0.0,)
    values: tuple[float, ...] = (0.0,)
    kind: str = "piecewise-constant"

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @classmethod
    def constant(cls, name: str, value: float) -> "InputFunction":
        return cls(name, (0.0,), (float(value),), kind="constant")

    @property
    def is_constant(self) -> bool:
        return len(set(self.values)) <= 1

    def __call__(self, t: Number) -> Number:
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        vals = np.asarray(self.values)
        out = vals[np.clip(idx, 0, len(vals) - 1)]
        return float(out) if np.ndim(out) == 0 else out

    def renamed(self, name: str) -> "InputFunction":
        return InputFunction(name, self.breakpoints, self.values, self.kind)


@dataclass(frozen=True)
class LinearForm:
    """``intercept + sum(coef * value[parent])``."""

    intercept: float = 0.0
    terms: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(
            self, "terms", tuple((str(n), float(c)) for n, c in self.terms)
        )

    @property
    def parents(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.terms)

    def coefficient(self, name: str) -> float:
        for n, c in self.terms:
            if n == name:
                return c
        return 0.0

    def __call__(self, values: Mapping[str, Number]) -> Number:
        out = self.intercept
        for name, coef in self.terms:
            out = out + coef * values[name]
        return out


@dataclass(frozen=True)
class OUProcess:
    """Mean-reverting diffusion pulled towards a target linear in its parents."""

    name: str
    theta: float
    target: LinearForm = field(default_factory=LinearForm)
    sigma: float = 1.0
    initial_value: float = 0.0
    kind = "OU"

    @property
    def parents(self) -> tuple[str, ...]:
        return self.target.parents

    @property
    def forms(self) -> tuple[LinearForm, ...]:
        return (self.target,)


@dataclass(frozen=True)
class DriftDiffusion:
    """Brownian motion with drift linear in its parents."""

    name: str
    drift: LinearForm = field(default_factory=LinearForm)
    sigma: float = 1.0
    initial_value: float = 0.0
    kind = "DriftDiffusion"

    @property
    def parents(self) -> tuple[str, ...]:
        return self.drift.parents

    @property
    def forms(self) -> tuple[LinearForm, ...]:
        return (self.drift,)


@dataclass(frozen=True)
class CountingProcess:
    """Counting process with additive or multiplicative intensity.

    additive:        ``1{N < at_risk} * (baseline(t) + intensity(parents))``
    multiplicative:  ``1{N < at_risk} * baseline(t) * exp(intensity(parents))``

    ``at_risk=None`` means no bound on the number of jumps. ``initial_probability``
    optionally makes the count at time 0 a Bernoulli draw with success probability
    ``clip(initial_probability(parents), 0, 1)``; together with a zero intensity this
    represents a time-constant binary random factor.
    """

    name: str
    intensity: LinearForm = field(default_factory=LinearForm)
    baseline: InputFunction = field(
        default_factory=lambda: InputFunction("baseline", (0.0,), (0.0,))
    )
    intensity_form: str = "additive"
    at_risk: int | None = 1
    initial_probability: LinearForm | None = None
    kind = "Counting"

    @property
    def initial_value(self) -> float:
        return 0.0

    @property
    def parents(self) -> tuple[str, ...]:
        names = list(self.intensity.parents)
        if self.initial_probability is not None:
            names += [n for n in self.initial_probability.parents if n not in names]
        return tuple(names)

    @property
    def forms(self) -> tuple[LinearForm, ...]:
        if self.initial_probability is None:
            return (self.intensity,)
        return (self.intensity, self.initial_probability)


@dataclass(frozen=True)
class ThresholdEvent:
    """0-1 event that fires the first time ``monitored`` exceeds ``eta``.

    With ``absorbing=True`` the whole replicate stops evolving once it fires.
    """

    name: str
    monitored: str
    eta: float
    absorbing: bool = False
    kind = "ThresholdEvent"

    @property
    def initial_value(self) -> float:
        return 0.0

    @property
    def parents(self) -> tuple[str, ...]:
        return (self.monitored,)

    @property
    def forms(self) -> tuple[LinearForm, ...]:
        return ()


ProcessSpec = Union[OUProcess, DriftDiffusion, CountingProcess, ThresholdEvent]
CONTINUOUS_KINDS = ("OU", "DriftDiffusion")
EVENT_KINDS = ("Counting", "ThresholdEvent")


@dataclass(frozen=True)
class SystemSpec:
    name: str
    processes: tuple[ProcessSpec, ...]
    inputs: tuple[InputFunction, ...] = ()
    attributes: tuple[Attribute, ...] = ()
    horizon: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "processes", tuple(self.processes))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def names(self) -> list[str]:
        return (
            [p.name for p in self.processes]
            + [i.name for i in self.inputs]
            + [a.name for a in self.attributes]
        )

    def process(self, name: str) -> ProcessSpec:
        for p in self.processes:
            if p.name == name:
                return p
        raise KeyError(f"no process named {name!r}")

    def input(self, name: str) -> InputFunction:
        for i in self.inputs:
            if i.name == name:
                return i
        raise KeyError(f"no input named {name!r}")

    def node_kind(self, name: str) -> str:
        for p in self.processes:
            if p.name == name:
                return p.kind
        if any(i.name == name for i in self.inputs):
            return "input"
        if any(a.name == name for a in self.attributes):
            return "attribute"
        raise KeyError(f"unknown name {name!r}")

    def deterministic_values(self, t: float) -> dict[str, float]:
        """Input values at ``t`` and attribute values."""
        env = {i.name: i(t) for i in self.inputs}
        env.update({a.name: a.value for a in self.attributes})
        return env


@dataclass
class Trajectory:
    """One realization on a time grid.

    ``values`` maps every continuous or threshold process to its value at each grid
    point; counting processes are stored as cumulative counts at grid points in
    ``values`` as well, with exact jump times in ``jumps``.
    """

    grid: np.ndarray
    values: dict[str, np.ndarray]
    jumps: dict[str, np.ndarray] = field(default_factory=dict)
    seed: int | None = None
    replicate: int | None = None

    def state_before(self, t: float) -> dict[str, float]:
        """Process states at ``t-``.

        Continuous values are read at the last grid point ``<= t``; counts are the
        number of jumps strictly before ``t``.
        """
        grid = self.grid
        if t < grid[0] - 1e-12 or t > grid[-1] + 1e-9 * max(1.0, abs(grid[-1])):
            raise ValueError(f"history covers [{grid[0]}, {grid[-1]}], shorter than t={t}")
        k = int(np.searchsorted(grid, t + 1e-12, side="right")) - 1
        k = max(k, 0)
        state = {name: float(v[k]) for name, v in self.values.items()}
        # grid counts include jumps in (t_{k-1}, t_k]; recount from exact jump times
        for name, times in self.jumps.items():
            n_initial = float(self.values[name][0]) if name in self.values else 0.0
            state[name] = n_initial + float(np.count_nonzero(np.asarray(times) < t))
        return state


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def raise_for_errors(self) -> None:
        if self.errors:
            raise SystemValidationError(self)

    def __str__(self) -> str:
        lines = [f"error: {e}" for e in self.errors]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines) if lines else "ok"


def _ancestors(parents: Mapping[str, Sequence[str]], node: str) -> set[str]:
    seen: set[str] = set()
    stack = list(parents.get(node, ()))
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        stack.extend(parents.get(n, ()))
    return seen


def initial_order(spec: SystemSpec) -> list[str]:
    """Order in which random initial counts must be drawn (dependency order).

    Raises ``ValueError`` on a cycle among initial laws.
    """
    deps = {
        p.name: [
            n
            for n in p.initial_probability.parents
            if any(q.name == n and isinstance(q, CountingProcess) for q in spec.processes)
        ]
        for p in spec.processes
        if isinstance(p, CountingProcess) and p.initial_probability is not None
    }
    order: list[str] = []
    state: dict[str, int] = {}

    def visit(n: str) -> None:
        if state.get(n) == 2:
            return
        if state.get(n) == 1:
            raise ValueError(f"cycle among initial laws through {n!r}")
        state[n] = 1
        for d in deps.get(n, ()):
            visit(d)
        state[n] = 2
        if n in deps:
            order.append(n)

    for n in deps:
        visit(n)
    return order


def validate_system(spec: SystemSpec) -> ValidationReport:
    """Check every structural invariant of ``spec``.

    Errors make the spec unusable; warnings flag explicit zero coefficients and
    inputs that nothing references.
    """
    report = ValidationReport()
    err, warn = report.errors.append, report.warnings.append

    if not spec.processes:
        err("system has no process")
    if not (spec.horizon > 0 and math.isfinite(spec.horizon)):
        err(f"horizon must be positive and finite, got {spec.horizon}")

    seen: set[str] = set()
    for name in spec.names:
        if name in seen:
            err(f"duplicate name {name!r}")
        seen.add(name)
    known = set(spec.names)
    numeric_attrs = {a.name for a in spec.attributes if a.numeric}
    process_names = {p.name for p in spec.processes}

    for inp in spec.inputs:
        bp = inp.breakpoints
        if len(bp) == 0 or len(bp) != len(inp.values):
            err(f"input {inp.name!r}: breakpoints and values must have equal nonzero length")
            continue
        if bp[0] != 0.0:
            err(f"input {inp.name!r}: first breakpoint must be 0 so the horizon is covered")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            err(f"input {inp.name!r}: breakpoints not strictly increasing")
        if not all(math.isfinite(v) for v in inp.values):
            err(f"input {inp.name!r}: non-finite value")

    for p in spec.processes:
        for form in p.forms:
            names = form.parents
            if len(set(names)) != len(names):
                err(f"{p.name}: parent listed twice in a linear form")
            for n, c in form.terms:
                if n not in known:
                    err(f"{p.name}: unresolved parent {n!r}")
                elif n in {a.name for a in spec.attributes} and n not in numeric_attrs:
                    err(f"{p.name}: categorical attribute {n!r} used in a linear form")
                if c == 0.0:
                    warn(f"{p.name}: zero coefficient on {n!r} keeps a structural edge")
                if not math.isfinite(c):
                    err(f"{p.name}: non-finite coefficient on {n!r}")
        if isinstance(p, OUProcess):
            if not p.theta > 0:
                err(f"{p.name}: nonpositive reversion rate theta={p.theta}")
        if isinstance(p, (OUProcess, DriftDiffusion)):
            if p.sigma < 0:
                err(f"{p.name}: negative sigma={p.sigma}")
            if not math.isfinite(p.initial_value):
                err(f"{p.name}: non-finite initial value")
        if isinstance(p, CountingProcess):
            if p.intensity_form not in ("additive", "multiplicative"):
                err(f"{p.name}: unknown intensity form {p.intensity_form!r}")
            if p.at_risk is not None and p.at_risk < 1:
                err(f"{p.name}: at_risk must be >= 1")
            b = p.baseline
            if len(b.breakpoints) == 0 or len(b.breakpoints) != len(b.values) or b.breakpoints[0] != 0.0:
                err(f"{p.name}: baseline must start at 0 with one value per breakpoint")
            elif any(b2 <= b1 for b1, b2 in zip(b.breakpoints, b.breakpoints[1:])):
                err(f"{p.name}: baseline breakpoints not strictly increasing")
            elif p.intensity_form == "multiplicative" and min(b.values) < 0:
                err(f"{p.name}: multiplicative baseline must be nonnegative")
        if isinstance(p, ThresholdEvent):
            if p.monitored not in process_names:
                err(f"{p.name}: unresolved parent {p.monitored!r}")
            elif spec.node_kind(p.monitored) not in CONTINUOUS_KINDS:
                err(f"{p.name}: monitored process {p.monitored!r} is not continuous")
            if not math.isfinite(p.eta):
                err(f"{p.name}: non-finite threshold")

    if not report.errors:
        parents = {p.name: p.parents for p in spec.processes}
        for p in spec.processes:
            if isinstance(p, ThresholdEvent) and p.name in _ancestors(parents, p.monitored):
                err(f"{p.name}: threshold event is an ancestor of its monitored process")
        try:
            initial_order(spec)
        except ValueError as exc:
            err(str(exc))

    referenced = {n for p in spec.processes for n in p.parents}
    for inp in spec.inputs:
        if inp.name not in referenced:
            warn(f"input {inp.name!r} is not referenced by any process")
    return report


def state_at(spec: SystemSpec, t: float, history) -> dict[str, float]:
    """Values of every named entity at ``t-`` given a history.

    ``history`` is a :class:`Trajectory` (prefix read at ``t-``) or a mapping of
    process values at ``t-``; inputs and attributes are filled in from ``spec``.
    """
    if isinstance(history, Trajectory):
        env = history.state_before(t)
    else:
        env = dict(history)
    for k, v in spec.deterministic_values(t).items():
        env.setdefault(k, v)
    return env


def drift_value(p: ProcessSpec, env: Mapping[str, Number]) -> Number:
    if isinstance(p, OUProcess):
        return -p.theta * (env[p.name] - p.target(env))
    if isinstance(p, DriftDiffusion):
        return p.drift(env)
    raise TypeError(f"{p.name}: drift undefined for kind {p.kind}")


def intensity_value(p: CountingProcess, t: Number, env: Mapping[str, Number]) -> tuple[Number, Number]:
    """Return ``(intensity, raw)``; ``raw`` is the unclamped additive value."""
    count = env.get(p.name, 0.0)
    base = p.baseline(t)
    if p.intensity_form == "multiplicative":
        raw = base * np.exp(p.intensity(env))
    else:
        raw = base + p.intensity(env)
    lam = np.maximum(raw, 0.0)
    if p.at_risk is not None:
        lam = np.where(np.asarray(count) >= p.at_risk, 0.0, lam)
    if np.ndim(lam) == 0:
        lam = float(lam)
    return lam, raw


def eval_drift(spec: ProcessSpec, t: float, history, system: SystemSpec | None = None) -> float:
    """Drift of a continuous process at ``t`` given the history up to ``t-``.

    Parameters
    ----------
    spec : OUProcess or DriftDiffusion
    t : float
    history : Trajectory or mapping
        Either a trajectory covering ``[0, t)`` or a mapping holding the ``t-``
        values of the process and its parents.
    system : SystemSpec, optional
        Supplies input functions and attributes referenced by the process.
    """
    if system is not None:
        env = state_at(system, t, history)
    elif isinstance(history, Trajectory):
        env = history.state_before(t)
    else:
        env = history
    return float(drift_value(spec, env))


def eval_intensity(spec: ProcessSpec, t: float, history, system: SystemSpec | None = None) -> float:
    """Intensity of a counting process at ``t``; never negative.

    Additive intensities are clamped at zero; the intensity is exactly zero once
    the jump count reaches ``at_risk``.
    """
    if not isinstance(spec, CountingProcess):
        raise TypeError(f"{spec.name}: intensity only defined for counting processes")
    if system is not None:
        env = state_at(system, t, history)
    elif isinstance(history, Trajectory):
        env = history.state_before(t)
    else:
        env = dict(history)
        env.setdefault(spec.name, 0.0)
    return float(intensity_value(spec, t, env)[0])
