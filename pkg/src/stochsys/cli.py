"""Command-line interface.

Exit codes: 0 success, 1 domain validation failure, 2 usage or parse failure,
3 resource budget exceeded.

Every run writes a manifest (JSON): to ``--manifest`` if given, else to
``OUT/manifest.json`` for commands with ``--out``, else as one line on stderr.
``stochsys replay manifest.json`` re-runs the recorded command.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .chd import CHDConfig, ConfigError, chd_demo, config_from_dict
from .effects import Contrast, marginal_effect_mc
from .graph import Intervention, apply_do, build_graph, to_dot
from .process import InputFunction, SystemValidationError, validate_system
from .serialize import SpecFormatError, load_input, load_system
from .simulate import (
    BUDGET_ENV,
    BudgetExceeded,
    SimConfig,
    SimulationError,
    simulate_ensemble,
    simulate_path,
)

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _intervention(text: str) -> Intervention:
    """``TARGET=VALUE`` (constant control) or ``TARGET=control.json``."""
    if "=" not in text:
        raise UsageError(f"intervention must look like TARGET=VALUE or TARGET=FILE: {text!r}")
    target, rhs = text.split("=", 1)
    try:
        return Intervention(target, InputFunction.constant(target, float(rhs)))
    except ValueError:
        return Intervention(target, load_input(rhs, name=target))


def _sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--step", type=_positive_float, default=0.01)
    p.add_argument("--reps", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record-every", type=_positive_int, default=1,
                   help="keep every k-th grid point in outputs")
    p.add_argument("--workers", type=int, default=1, help="worker processes (0 = one per CPU)")


def _sim_config(args) -> SimConfig:
    return SimConfig(step=args.step, replications=args.reps, seed=args.seed,
                     record_grid=args.record_every)


def _fmt(x) -> str:
    return repr(float(x))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n")


def _load_valid(path):
    spec = load_system(path)
    validate_system(spec).raise_for_errors()
    return spec


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args, out: dict) -> int:
    spec = load_system(args.system)
    report = validate_system(spec)
    print(report)
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_graph(args, out: dict) -> int:
    spec = _load_valid(args.system)
    for text in args.do or []:
        iv = _intervention(text)
        if iv.target not in spec.names:
            raise UsageError(f"unknown do target {iv.target!r}")
        spec = apply_do(spec, iv)
    dot = to_dot(build_graph(spec), spec.name)
    if args.out:
        Path(args.out).write_text(dot)
        out["outputs"].append(str(args.out))
    else:
        sys.stdout.write(dot)
    return EXIT_OK


def _write_paths(path: Path, spec, cfg: SimConfig, n_paths: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate", "time", "process", "value"])
        for r in range(n_paths):
            traj = simulate_path(spec, cfg, r)
            for i, t in enumerate(traj.grid):
                for p in spec.processes:
                    w.writerow([r, _fmt(t), p.name, _fmt(traj.values[p.name][i])])


def _write_events(path: Path, summary) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate", "process", "first_event_time"])
        for name, times in summary.first_event_times.items():
            for r, t in enumerate(times):
                w.writerow([r, name, "" if np.isnan(t) else _fmt(t)])


def cmd_simulate(args, out: dict) -> int:
    spec = _load_valid(args.system)
    cfg = _sim_config(args)
    out["sim_config"] = asdict(cfg)
    summary = simulate_ensemble(spec, cfg, workers=args.workers)
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    n_paths = min(args.dump_reps, cfg.replications)
    _write_paths(d / "paths.csv", spec, cfg, n_paths)
    _write_json(d / "summary.json", summary.to_dict())
    files = [d / "paths.csv", d / "summary.json"]
    if summary.first_event_times:
        _write_events(d / "events.csv", summary)
        files.append(d / "events.csv")
    out["outputs"] += [str(f) for f in files]
    print(json.dumps(summary.to_dict()["final_mean"]))
    return EXIT_OK


def cmd_effect(args, out: dict) -> int:
    spec = _load_valid(args.system)
    iv_a, iv_b = _intervention(args.do_a), _intervention(args.do_b)
    if iv_a.target != iv_b.target:
        raise UsageError(f"interventions target different processes: {iv_a.target} vs {iv_b.target}")
    for iv in (iv_a, iv_b):
        if iv.target not in spec.names:
            raise UsageError(f"unknown do target {iv.target!r}")
    if args.target not in {p.name for p in spec.processes}:
        raise UsageError(f"unknown target {args.target!r}")
    cfg = _sim_config(args)
    out["sim_config"] = asdict(cfg)
    report = marginal_effect_mc(spec, iv_a, iv_b, cfg, args.target, Contrast(args.contrast),
                                workers=args.workers)
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    report.to_json(d / "effect.json")
    report.to_csv(d / "effect_curves.csv")
    out["outputs"] += [str(d / "effect.json"), str(d / "effect_curves.csv")]
    last = report.values[-1]
    print(f"{args.contrast} contrast at t={report.times[-1]:g}: {last!r} "
          f"(stderr {report.mc_stderr[-1]!r})")
    return EXIT_OK


def _read_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecFormatError(f"cannot read configuration {path}: {exc}") from None


def cmd_chd_demo(args, out: dict) -> int:
    try:
        cfg = config_from_dict(_read_config(args.config)) if args.config else CHDConfig()
        if args.alt_config:
            alt = config_from_dict(_read_config(args.alt_config), base=cfg)
        else:
            alt = replace(cfg, smoking=InputFunction.constant("smoking", 0.0))
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    if args.equilibrium:
        cfg, alt = replace(cfg, equilibrium=True), replace(alt, equilibrium=True)
    horizon = args.horizon or cfg.horizon
    cfg, alt = replace(cfg, horizon=horizon), replace(alt, horizon=horizon)
    sim = _sim_config(args)
    out["sim_config"] = asdict(sim)
    try:
        report = chd_demo(cfg, alt, sim, workers=args.workers)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    report.write(d / "chd_report.json", d / "chd_curves.csv")
    out["outputs"] += [str(d / "chd_report.json"), str(d / "chd_curves.csv")]
    print(f"P(CHD by {horizon:g}) = {report.p_mc[-1]:.4f} vs {report.p_mc_alt[-1]:.4f}"
          + ("" if report.p_ig is None else
             f"; inverse Gaussian {report.p_ig[-1]:.4f} vs {report.p_ig_alt[-1]:.4f}"))
    return EXIT_OK


def cmd_replay(args, out: dict) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        argv = manifest["command"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot read manifest {args.manifest}: {exc}") from None
    out["replayed"] = str(args.manifest)
    return main(argv)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochsys",
        description="Simulate causal stochastic systems and compute intervention effects.",
        epilog=f"Environment: {BUDGET_ENV} caps replications x steps per run.",
    )
    parser.add_argument("--version", action="version", version=f"stochsys {__version__}")
    parser.add_argument("--manifest", help="where to write the run manifest")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a system.json")
    p.add_argument("system")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("graph", help="influence graph as DOT")
    p.add_argument("system")
    p.add_argument("--do", action="append", metavar="TARGET=CONTROL",
                   help="intervene before drawing (repeatable)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("simulate", help="simulate an ensemble")
    p.add_argument("system")
    _sim_flags(p)
    p.add_argument("--dump-reps", type=int, default=20,
                   help="number of replicates written to paths.csv")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("effect", help="marginal effect of an intervention by Monte Carlo")
    p.add_argument("system")
    p.add_argument("--target", required=True)
    p.add_argument("--do-a", required=True, metavar="TARGET=CONTROL")
    p.add_argument("--do-b", required=True, metavar="TARGET=CONTROL")
    p.add_argument("--contrast", choices=["additive", "multiplicative"], default="additive")
    _sim_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_effect)

    p = sub.add_parser("chd-demo", help="coronary heart disease demonstration")
    p.add_argument("--config", help="JSON overrides of the default configuration")
    p.add_argument("--alt-config", help="JSON overrides for the comparison lifestyle "
                   "(default: no smoking)")
    p.add_argument("--equilibrium", action="store_true",
                   help="replace physiological processes by their targets")
    p.add_argument("--horizon", type=_positive_float)
    _sim_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_chd_demo)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def _emit_manifest(args, record: dict) -> None:
    text = json.dumps(record, indent=2) + "\n"
    if args.manifest:
        Path(args.manifest).write_text(text)
    elif getattr(args, "out", None) and Path(args.out).is_dir():
        (Path(args.out) / "manifest.json").write_text(text)
    else:
        sys.stderr.write("manifest: " + json.dumps(record) + "\n")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    record = {
        "command": argv,
        "tool_version": __version__,
        "inputs": [x for x in (getattr(args, "system", None), getattr(args, "config", None),
                               getattr(args, "alt_config", None)) if x],
        "sim_config": None,
        "outputs": [],
    }
    start = time.perf_counter()
    try:
        code = args.func(args, record)
    except (SpecFormatError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_BUDGET
    except SystemValidationError as exc:
        print(exc.report, file=sys.stderr)
        code = EXIT_INVALID
    except (SimulationError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INVALID
    record["wall_clock_seconds"] = round(time.perf_counter() - start, 3)
    record["exit_code"] = code
    if args.command != "replay":
        _emit_manifest(args, record)
    return code


if __name__ == "__main__":
    sys.exit(main())
