"""Hybrid Euler-Maruyama / thinning simulator for stochastic systems.

Continuous processes advance as ``X + drift*h + sigma*sqrt(h)*Z``. Counting
processes get at most one jump per step: a candidate is drawn with probability
``min(1, lam*h)`` (``lam`` evaluated at the step start), placed uniformly in the
step and accepted with probability ``lam(t*)/lam``. Threshold events fire at the
first grid time their monitored process exceeds the barrier.

All processes update simultaneously from the step-start state. Replicates are
simulated in fixed-size blocks, vectorised over the block; random numbers come
from :mod:`stochsys.rng`, keyed by (seed, replicate, process, step), so results do
not depend on the number of workers.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .process import (
    CountingProcess,
    DriftDiffusion,
    OUProcess,
    SystemSpec,
    ThresholdEvent,
    Trajectory,
    drift_value,
    initial_order,
    intensity_value,
    validate_system,
)
from .rng import Streams, stream_id

__all__ = [
    "SimConfig",
    "EnsembleSummary",
    "HittingDistribution",
    "SimulationError",
    "BudgetExceeded",
    "simulate_path",
    "simulate_ensemble",
    "sample_states",
    "estimate_hitting_distribution",
    "BLOCK_SIZE",
    "BUDGET_ENV",
]

BLOCK_SIZE = 4096
BUDGET_ENV = "STOCHSYS_MAX_STEPS"
DEFAULT_BUDGET = 10**10
_CHUNK = 64  # steps of noise generated per vectorised call


class SimulationError(RuntimeError):
    pass


class BudgetExceeded(SimulationError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Numerical settings of a simulation run.

    Parameters
    ----------
    step : float
        Euler step ``h``; must divide the horizon.
    replications : int
        Number of independent replicates ``N``.
    seed : int
        Master seed; replicate ``r`` uses streams derived from ``(seed, r)``.
    record_grid : int
        Keep every ``record_grid``-th grid point in outputs (the last point is
        always kept).
    budget : int, optional
        Maximum ``N * n_steps``; defaults to ``$STOCHSYS_MAX_STEPS`` or 1e10.
    """

    step: float = 0.01
    replications: int = 1000
    seed: int = 0
    record_grid: int = 1
    budget: int | None = None

    def n_steps(self, horizon: float) -> int:
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        n = int(round(horizon / self.step))
        if n < 1 or abs(n * self.step - horizon) > 1e-9 * max(1.0, horizon):
            raise ValueError(f"step {self.step} does not divide horizon {horizon}")
        return n

    def check(self, horizon: float) -> int:
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.record_grid < 1:
            raise ValueError("record_grid must be >= 1")
        n = self.n_steps(horizon)
        budget = self.budget
        if budget is None:
            budget = int(float(os.environ.get(BUDGET_ENV, DEFAULT_BUDGET)))
        if self.replications * n > budget:
            raise BudgetExceeded(
                f"{self.replications} replications x {n} steps exceeds budget {budget}"
            )
        return n

    def record_steps(self, n_steps: int) -> np.ndarray:
        steps = np.arange(0, n_steps + 1, self.record_grid)
        if steps[-1] != n_steps:
            steps = np.append(steps, n_steps)
        return steps


@dataclass
class EnsembleSummary:
    """Empirical law of an ensemble on the recorded grid.

    ``variance`` uses the population (ddof=0) convention, so a single replicate
    has zero variance. ``survival[name]`` is ``P(N_t = 0)`` for counting and
    threshold processes; ``cumulative_hazard`` is the Nelson-Aalen estimate built
    from first-event times; ``first_event_times[name]`` holds one entry per
    replicate (NaN when no event before the horizon).
    """

    grid: np.ndarray
    n: int
    mean: dict[str, np.ndarray]
    variance: dict[str, np.ndarray]
    survival: dict[str, np.ndarray]
    cumulative_hazard: dict[str, np.ndarray]
    first_event_times: dict[str, np.ndarray]
    seed: int
    diagnostics: dict[str, int] = field(default_factory=dict)

    def survival_stderr(self, name: str) -> np.ndarray:
        s = self.survival[name]
        return np.sqrt(s * (1.0 - s) / self.n)

    def mean_stderr(self, name: str) -> np.ndarray:
        return np.sqrt(self.variance[name] / self.n)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "grid": self.grid.tolist(),
            "mean": {k: v.tolist() for k, v in self.mean.items()},
            "variance": {k: v.tolist() for k, v in self.variance.items()},
            "final_mean": {k: float(v[-1]) for k, v in self.mean.items()},
            "survival": {k: v.tolist() for k, v in self.survival.items()},
            "cumulative_hazard": {k: v.tolist() for k, v in self.cumulative_hazard.items()},
            "events_observed": {
                k: int(np.count_nonzero(~np.isnan(v))) for k, v in self.first_event_times.items()
            },
            "diagnostics": dict(self.diagnostics),
        }


@dataclass
class HittingDistribution:
    """Sorted hitting times; censored replicates are reported at the horizon."""

    times: np.ndarray
    censored: np.ndarray
    horizon: float

    @classmethod
    def from_event_times(cls, first: np.ndarray, horizon: float) -> "HittingDistribution":
        """From per-replicate event times (NaN = no event before ``horizon``)."""
        censored = np.isnan(first)
        hit = np.sort(first[~censored])
        n_cens = int(censored.sum())
        return cls(
            times=np.concatenate([hit, np.full(n_cens, float(horizon))]),
            censored=np.concatenate([np.zeros(len(hit), bool), np.ones(n_cens, bool)]),
            horizon=float(horizon),
        )

    @property
    def n(self) -> int:
        return len(self.times)

    def cdf(self, t) -> np.ndarray:
        hit = self.times[~self.censored]
        return np.searchsorted(hit, np.asarray(t, dtype=float), side="right") / self.n

    def ks_distance(self, cdf) -> float:
        """Sup distance to ``cdf`` on ``[0, horizon]`` (censoring-aware)."""
        hit = self.times[~self.censored]
        i = np.arange(1, len(hit) + 1)
        f = np.asarray(cdf(hit), dtype=float) if len(hit) else np.array([])
        d = 0.0
        if len(hit):
            d = max(np.max(np.abs(i / self.n - f)), np.max(np.abs((i - 1) / self.n - f)))
        d_end = abs(len(hit) / self.n - float(cdf(np.array([self.horizon]))[0]))
        return float(max(d, d_end))


# ---------------------------------------------------------------------------
# block engine


@dataclass
class _Block:
    n: int
    mean: dict[str, np.ndarray]
    m2: dict[str, np.ndarray]
    zeros: dict[str, np.ndarray]
    first: dict[str, np.ndarray]
    diagnostics: dict[str, int]
    paths: dict[str, np.ndarray] | None = None
    jumps: dict[str, list[list[float]]] | None = None
    snapshots: dict[str, np.ndarray] | None = None


def _merge(n_a, mean_a, m2_a, n_b, mean_b, m2_b):
    n = n_a + n_b
    if n_a == 0:
        return n_b, mean_b, m2_b
    if n_b == 0:
        return n_a, mean_a, m2_a
    delta = mean_b - mean_a
    mean = mean_a + delta * (n_b / n)
    m2 = m2_a + m2_b + delta * delta * (n_a * n_b / n)
    return n, mean, m2


def _moments(x: np.ndarray):
    if len(x) == 0:
        return 0, 0.0, 0.0
    # shifted data: constant columns give exactly zero spread
    d = x - x[0]
    dm = d.mean()
    d = d - dm
    return len(x), x[0] + dm, float(np.dot(d, d))


class _Engine:
    def __init__(self, spec: SystemSpec, cfg: SimConfig):
        self.spec = spec
        self.cfg = cfg
        self.h = cfg.step
        self.n_steps = cfg.n_steps(spec.horizon)
        self.rec_steps = cfg.record_steps(self.n_steps)
        self.procs = list(spec.processes)
        self.cont = [p for p in self.procs if isinstance(p, (OUProcess, DriftDiffusion))]
        self.count = [p for p in self.procs if isinstance(p, CountingProcess)]
        self.thresh = [p for p in self.procs if isinstance(p, ThresholdEvent)]
        self.events = self.count + self.thresh
        self.names = [p.name for p in self.procs]
        self.init_order = initial_order(spec)
        self.attrs = {a.name: float(a.value) for a in spec.attributes if a.numeric}
        self.noisy = [p for p in self.cont if p.sigma > 0]
        self.sid = {p.name: stream_id(p.name, "dB") for p in self.noisy}
        self.cid = {
            p.name: tuple(stream_id(p.name, s) for s in ("cand", "time", "accept"))
            for p in self.count
        }

    def env_at(self, t, state) -> dict:
        env = dict(state)
        for inp in self.spec.inputs:
            env[inp.name] = inp(t)
        env.update(self.attrs)
        return env

    def run(self, replicates: np.ndarray, keep_paths=False, snapshot_steps=()) -> _Block:
        spec, h, n_steps = self.spec, self.h, self.n_steps
        B = len(replicates)
        streams = Streams(self.cfg.seed, replicates)
        sqrt_h = math.sqrt(h)
        diag = {"clamped_intensity_evaluations": 0, "thinning_rate_warnings": 0,
                "rejected_candidates": 0}

        # initial state
        state: dict[str, np.ndarray] = {}
        for p in self.cont:
            state[p.name] = np.full(B, float(p.initial_value))
        for p in self.count:
            state[p.name] = np.zeros(B)
        for p in self.thresh:
            state[p.name] = np.zeros(B)
        if self.init_order:
            env0 = self.env_at(0.0, state)
            for name in self.init_order:
                p = spec.process(name)
                prob = np.clip(np.broadcast_to(p.initial_probability(env0), (B,)), 0.0, 1.0)
                u = streams.uniform(stream_id(name, "init"), np.array([0]))[0]
                state[name] = (u < prob).astype(float)
                env0[name] = state[name]
        first = {p.name: np.full(B, np.nan) for p in self.events}
        for p in self.count:
            first[p.name][state[p.name] > 0] = 0.0
        for p in self.thresh:
            fired = state[p.monitored] > p.eta
            state[p.name] = fired.astype(float)
            first[p.name][fired] = 0.0

        absorbing = [p for p in self.thresh if p.absorbing]
        # active replicates: positions (into the block) of replicates still evolving
        act = np.arange(B)
        live = np.ones(B, dtype=bool)
        n_dead_in_act = 0
        frozen = {name: (0, 0.0, 0.0) for name in self.names}
        frozen_zero = {p.name: 0 for p in self.events}
        full = {name: state[name].copy() for name in self.names}
        jump_log = {p.name: [[] for _ in range(B)] for p in self.count} if keep_paths else None

        n_rec = len(self.rec_steps)
        rec_pos = {int(k): i for i, k in enumerate(self.rec_steps)}
        out_mean = {n: np.zeros(n_rec) for n in self.names}
        out_m2 = {n: np.zeros(n_rec) for n in self.names}
        out_zero = {p.name: np.zeros(n_rec, dtype=np.int64) for p in self.events}
        paths = {n: np.zeros((n_rec, B)) for n in self.names} if keep_paths else None
        snap_pos = {int(k): i for i, k in enumerate(snapshot_steps)}
        snaps = {n: np.zeros((len(snap_pos), B)) for n in self.names} if snap_pos else None

        def gather(name):
            x = full[name].copy()
            x[act] = state[name]
            return x

        def record(k):
            i = rec_pos.get(k)
            if i is not None:
                for name in self.names:
                    x = state[name]
                    n, m, m2 = _merge(*frozen[name], *_moments(x))
                    out_mean[name][i] = m
                    out_m2[name][i] = m2
                for p in self.events:
                    out_zero[p.name][i] = frozen_zero[p.name] + np.count_nonzero(state[p.name] == 0)
                if paths is not None:
                    for name in self.names:
                        paths[name][i] = gather(name)
            j = snap_pos.get(k)
            if j is not None:
                for name in self.names:
                    snaps[name][j] = gather(name)

        def check_finite(k):
            for p in self.cont:
                if not np.all(np.isfinite(state[p.name])):
                    raise SimulationError(
                        f"non-finite value in process {p.name!r} at t={k * h:g}"
                    )

        def compact():
            nonlocal act, live, streams, n_dead_in_act, noise, cnoise
            dead = ~live
            for name in self.names:
                x = state[name][dead]
                full[name][act[dead]] = x
                frozen[name] = _merge(*frozen[name], *_moments(x))
            for p in self.events:
                frozen_zero[p.name] += int(np.count_nonzero(state[p.name][dead] == 0))
            keep = live
            act = act[keep]
            for name in self.names:
                state[name] = state[name][keep]
            streams = streams.select(keep)
            noise = {k2: v[:, keep] for k2, v in noise.items()}
            cnoise = {k2: tuple(v[:, keep] for v in vs) for k2, vs in cnoise.items()}
            live = np.ones(len(act), dtype=bool)
            n_dead_in_act = 0

        def kill(newly):
            nonlocal n_dead_in_act
            live[newly] = False
            n_dead_in_act += int(np.count_nonzero(newly))

        if absorbing:
            dead0 = np.zeros(B, dtype=bool)
            for p in absorbing:
                dead0 |= state[p.name] > 0
            if dead0.any():
                kill(dead0)

        record(0)
        noise: dict = {}
        cnoise: dict = {}
        chunk_start = 0
        k = 0
        while k < n_steps:
            if n_dead_in_act and (n_dead_in_act * 8 >= len(act) or n_dead_in_act == len(act)):
                compact()
            if len(act) == 0:
                # every replicate absorbed: the remaining records are frozen values
                for kk in range(k + 1, n_steps + 1):
                    record(kk)
                break
            if k == chunk_start + _CHUNK or k == 0:
                chunk_start = k
                steps = np.arange(k, min(k + _CHUNK, n_steps))
                noise = {p.name: streams.normal(self.sid[p.name], steps) for p in self.noisy}
                cnoise = {
                    p.name: tuple(streams.uniform(s, steps) for s in self.cid[p.name])
                    for p in self.count
                }
            row = k - chunk_start
            t = k * h
            env = self.env_at(t, state)
            new = {}
            for p in self.cont:
                x = state[p.name]
                dx = drift_value(p, env) * h
                if p.sigma > 0:
                    dx = dx + (p.sigma * sqrt_h) * noise[p.name][row]
                new[p.name] = x + dx
            for p in self.count:
                lam, raw = intensity_value(p, t, env)
                lam = np.broadcast_to(lam, state[p.name].shape)
                counts = state[p.name]
                if p.intensity_form == "additive":
                    at_risk = counts < p.at_risk if p.at_risk is not None else True
                    diag["clamped_intensity_evaluations"] += int(
                        np.count_nonzero((np.broadcast_to(raw, counts.shape) < 0) & at_risk & live)
                    )
                if not lam.any():
                    continue
                u_c, u_t, u_a = (v[row] for v in cnoise[p.name])
                lh = lam * h
                diag["thinning_rate_warnings"] += int(np.count_nonzero((lh >= 0.5) & live))
                cand = (u_c < np.minimum(1.0, lh)) & live
                if not cand.any():
                    continue
                idx = np.nonzero(cand)[0]
                t_star = t + u_t[idx] * h
                env_c = {
                    nm: (v[idx] if isinstance(v, np.ndarray) and v.shape == counts.shape else v)
                    for nm, v in env.items()
                }
                for inp in spec.inputs:
                    env_c[inp.name] = inp(t_star)
                lam_star, _ = intensity_value(p, t_star, env_c)
                lam_star = np.broadcast_to(lam_star, idx.shape)
                accept = u_a[idx] * lam[idx] < lam_star
                diag["rejected_candidates"] += int(np.count_nonzero(~accept))
                idx = idx[accept]
                if len(idx):
                    c = counts.copy()
                    c[idx] += 1.0
                    new[p.name] = c
                    f = first[p.name]
                    pos = act[idx]
                    fresh = np.isnan(f[pos])
                    f[pos[fresh]] = t_star[accept][fresh]
                    if jump_log is not None:
                        for pp, ts in zip(pos, t_star[accept]):
                            jump_log[p.name][pp].append(float(ts))
            if n_dead_in_act:
                for name, v in new.items():
                    new[name] = np.where(live, v, state[name])
            state.update(new)
            k += 1
            for p in self.thresh:
                prev = state[p.name]
                fired = (state[p.monitored] > p.eta) | (prev > 0)
                newly = fired & (prev == 0) & live
                if newly.any():
                    first[p.name][act[newly]] = k * h
                    state[p.name] = np.where(newly, 1.0, prev)
                    if p.absorbing:
                        kill(newly)
            if k in rec_pos:
                check_finite(k)
            record(k)

        return _Block(
            n=B,
            mean=out_mean,
            m2=out_m2,
            zeros=out_zero,
            first=first,
            diagnostics=diag,
            paths=paths,
            jumps=jump_log,
            snapshots=snaps,
        )


def _run_block(args):
    spec, cfg, lo, hi, snapshot_steps = args
    return _Engine(spec, cfg).run(np.arange(lo, hi), snapshot_steps=snapshot_steps)


def _prepare(spec: SystemSpec, cfg: SimConfig) -> int:
    validate_system(spec).raise_for_errors()
    return cfg.check(spec.horizon)


def _blocks(cfg: SimConfig, spec: SystemSpec, workers: int, snapshot_steps=()):
    n = cfg.replications
    jobs = [(spec, cfg, lo, min(lo + BLOCK_SIZE, n), tuple(snapshot_steps))
            for lo in range(0, n, BLOCK_SIZE)]
    if workers is None or workers <= 0:
        workers = os.cpu_count() or 1
    if workers == 1 or len(jobs) == 1:
        return [_run_block(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(_run_block, jobs))


def _nelson_aalen(first: np.ndarray, grid: np.ndarray) -> np.ndarray:
    times = np.sort(first[~np.isnan(first)])
    n = len(first)
    if len(times) == 0:
        return np.zeros(len(grid))
    uniq, cnt = np.unique(times, return_counts=True)
    at_risk = n - np.concatenate(([0], np.cumsum(cnt)[:-1]))
    incr = np.cumsum(cnt / at_risk)
    pos = np.searchsorted(uniq, grid, side="right")
    return np.where(pos > 0, incr[np.maximum(pos - 1, 0)], 0.0)


def simulate_ensemble(spec: SystemSpec, cfg: SimConfig, workers: int = 1) -> EnsembleSummary:
    """Simulate ``cfg.replications`` independent paths and summarise them.

    ``workers`` > 1 runs blocks in separate processes (``workers <= 0`` means one
    per CPU); the result is bit-identical to the serial run.
    """
    n_steps = _prepare(spec, cfg)
    blocks = _blocks(cfg, spec, workers)
    return _summarise(spec, cfg, n_steps, blocks)


def _summarise(spec, cfg, n_steps, blocks) -> EnsembleSummary:
    grid = cfg.record_steps(n_steps) * cfg.step
    grid[-1] = spec.horizon
    names = [p.name for p in spec.processes]
    mean, var = {}, {}
    for name in names:
        acc = (0, 0.0, 0.0)
        for b in blocks:
            acc = _merge(*acc, b.n, b.mean[name], b.m2[name])
        n, m, m2 = acc
        mean[name] = np.asarray(m, dtype=float) * np.ones(len(grid))
        var[name] = np.maximum(np.asarray(m2, dtype=float) / n, 0.0) * np.ones(len(grid))
    n_total = sum(b.n for b in blocks)
    events = [p.name for p in spec.processes if isinstance(p, (CountingProcess, ThresholdEvent))]
    survival = {e: sum(b.zeros[e] for b in blocks) / n_total for e in events}
    first = {e: np.concatenate([b.first[e] for b in blocks]) for e in events}
    cumhaz = {e: _nelson_aalen(first[e], grid) for e in events}
    diag: dict[str, int] = {}
    for b in blocks:
        for key, v in b.diagnostics.items():
            diag[key] = diag.get(key, 0) + v
    if diag.get("thinning_rate_warnings"):
        warnings.warn(
            f"intensity*step >= 0.5 in {diag['thinning_rate_warnings']} evaluations; "
            "reduce the step",
            RuntimeWarning,
            stacklevel=3,
        )
    return EnsembleSummary(
        grid=grid, n=n_total, mean=mean, variance=var, survival=survival,
        cumulative_hazard=cumhaz, first_event_times=first, seed=cfg.seed, diagnostics=diag,
    )


def simulate_path(spec: SystemSpec, cfg: SimConfig, replicate_index: int = 0) -> Trajectory:
    """Single realization ``replicate_index`` of the ensemble defined by ``cfg``."""
    validate_system(spec).raise_for_errors()
    n_steps = cfg.n_steps(spec.horizon)
    eng = _Engine(spec, cfg)
    b = eng.run(np.array([replicate_index]), keep_paths=True)
    grid = cfg.record_steps(n_steps) * cfg.step
    grid[-1] = spec.horizon
    values = {name: b.paths[name][:, 0].copy() for name in eng.names}
    jumps = {name: np.asarray(b.jumps[name][0]) for name in b.jumps}
    return Trajectory(grid=grid, values=values, jumps=jumps, seed=cfg.seed,
                      replicate=replicate_index)


def sample_states(spec: SystemSpec, cfg: SimConfig, times, workers: int = 1) -> dict[str, np.ndarray]:
    """Per-replicate process values at the grid points nearest to ``times``.

    Returns ``{name: array of shape (N, len(times))}`` in replicate order.
    """
    n_steps = _prepare(spec, cfg)
    steps = [min(n_steps, max(0, int(round(t / cfg.step)))) for t in np.atleast_1d(times)]
    uniq = sorted(set(steps))
    blocks = _blocks(cfg, spec, workers, snapshot_steps=uniq)
    col = [uniq.index(s) for s in steps]
    return {
        name: np.concatenate([b.snapshots[name] for b in blocks], axis=1).T[:, col]
        for name in (p.name for p in spec.processes)
    }


def estimate_hitting_distribution(
    spec: SystemSpec, cfg: SimConfig, event: str, workers: int = 1
) -> HittingDistribution:
    """Empirical first-passage law of threshold event ``event``."""
    p = next((q for q in spec.processes if q.name == event), None)
    if not isinstance(p, ThresholdEvent):
        raise KeyError(f"no threshold event named {event!r}")
    summary = simulate_ensemble(spec, cfg, workers=workers)
    return HittingDistribution.from_event_times(summary.first_event_times[event], spec.horizon)
