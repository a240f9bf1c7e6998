"""JSON (de)serialization of systems, inputs and trajectories.

``system.json`` layout::

    {
      "name": "observed",
      "horizon": 10.0,
      "processes": [
        {"name": "D", "kind": "Counting",
         "parameters": {"intensity_form": "additive",
                        "intensity": {"intercept": 0.0, "terms": [["F", 0.2]]},
                        "baseline": {"breakpoints": [0.0], "values": [0.05]},
                        "at_risk": 1}},
        {"name": "X", "kind": "OU",
         "parameters": {"theta": 0.5, "sigma": 1.0, "initial_value": 0.0,
                        "target": {"intercept": 2.0, "terms": []}}}
      ],
      "inputs": [{"name": "S", "kind": "constant", "breakpoints": [0.0], "values": [10.0]}],
      "attributes": [{"name": "sex", "value": 1}]
    }

Kinds are ``OU``, ``DriftDiffusion``, ``Counting`` and ``ThresholdEvent``.
Parameter names follow the dataclass fields in :mod:`stochsys.process`.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .process import (
    Attribute,
    CountingProcess,
    DriftDiffusion,
    InputFunction,
    LinearForm,
    OUProcess,
    SystemSpec,
    ThresholdEvent,
)

__all__ = [
    "SpecFormatError",
    "system_from_dict",
    "system_to_dict",
    "load_system",
    "dump_system",
    "input_from_dict",
    "input_to_dict",
    "load_input",
]


class SpecFormatError(ValueError):
    """The document is not a well-formed system description."""


_PARAMS = {
    "OU": {"theta", "sigma", "target", "initial_value"},
    "DriftDiffusion": {"drift", "sigma", "initial_value"},
    "Counting": {"intensity", "baseline", "intensity_form", "at_risk", "initial_probability"},
    "ThresholdEvent": {"monitored", "eta", "absorbing"},
}


def _form_from(obj: Any, where: str) -> LinearForm:
    if obj is None:
        return LinearForm()
    if not isinstance(obj, dict):
        raise SpecFormatError(f"{where}: linear form must be an object")
    unknown = set(obj) - {"intercept", "terms"}
    if unknown:
        raise SpecFormatError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        terms = tuple((str(n), float(c)) for n, c in obj.get("terms", []))
        return LinearForm(float(obj.get("intercept", 0.0)), terms)
    except (TypeError, ValueError) as exc:
        raise SpecFormatError(f"{where}: bad linear form ({exc})") from None


def _form_to(form: LinearForm) -> dict:
    return {"intercept": form.intercept, "terms": [[n, c] for n, c in form.terms]}


def input_from_dict(obj: Any, name: str | None = None) -> InputFunction:
    if not isinstance(obj, dict):
        raise SpecFormatError("input must be an object")
    unknown = set(obj) - {"name", "kind", "breakpoints", "values", "value"}
    if unknown:
        raise SpecFormatError(f"input: unknown keys {sorted(unknown)}")
    nm = name or obj.get("name")
    if not nm:
        raise SpecFormatError("input without a name")
    try:
        if "value" in obj:
            return InputFunction.constant(nm, float(obj["value"]))
        kind = obj.get("kind", "piecewise-constant")
        if kind not in ("constant", "piecewise-constant"):
            raise SpecFormatError(f"input {nm!r}: unknown kind {kind!r}")
        return InputFunction(
            nm,
            tuple(float(b) for b in obj.get("breakpoints", [0.0])),
            tuple(float(v) for v in obj["values"]),
            kind,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SpecFormatError):
            raise
        raise SpecFormatError(f"input {nm!r}: {exc}") from None


def input_to_dict(inp: InputFunction) -> dict:
    return {
        "name": inp.name,
        "kind": inp.kind,
        "breakpoints": list(inp.breakpoints),
        "values": list(inp.values),
    }


def _process_from(obj: Any):
    if not isinstance(obj, dict) or "name" not in obj or "kind" not in obj:
        raise SpecFormatError("each process needs 'name' and 'kind'")
    name, kind = str(obj["name"]), obj["kind"]
    if kind not in _PARAMS:
        raise SpecFormatError(f"process {name!r}: unknown kind {kind!r}")
    params = obj.get("parameters", {})
    if not isinstance(params, dict):
        raise SpecFormatError(f"process {name!r}: parameters must be an object")
    unknown = set(params) - _PARAMS[kind]
    if unknown:
        raise SpecFormatError(f"process {name!r}: unknown parameters {sorted(unknown)}")
    where = f"process {name!r}"
    try:
        if kind == "OU":
            return OUProcess(
                name,
                theta=float(params["theta"]),
                target=_form_from(params.get("target"), where),
                sigma=float(params.get("sigma", 1.0)),
                initial_value=float(params.get("initial_value", 0.0)),
            )
        if kind == "DriftDiffusion":
            return DriftDiffusion(
                name,
                drift=_form_from(params.get("drift"), where),
                sigma=float(params.get("sigma", 1.0)),
                initial_value=float(params.get("initial_value", 0.0)),
            )
        if kind == "Counting":
            base = params.get("baseline", {"breakpoints": [0.0], "values": [0.0]})
            if isinstance(base, (int, float)):
                base = {"value": base}
            init = params.get("initial_probability")
            at_risk = params.get("at_risk", 1)
            return CountingProcess(
                name,
                intensity=_form_from(params.get("intensity"), where),
                baseline=input_from_dict(base, name="baseline"),
                intensity_form=str(params.get("intensity_form", "additive")),
                at_risk=None if at_risk is None else int(at_risk),
                initial_probability=None if init is None else _form_from(init, where),
            )
        return ThresholdEvent(
            name,
            monitored=str(params["monitored"]),
            eta=float(params["eta"]),
            absorbing=bool(params.get("absorbing", False)),
        )
    except KeyError as exc:
        raise SpecFormatError(f"{where}: missing parameter {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SpecFormatError):
            raise
        raise SpecFormatError(f"{where}: {exc}") from None


def _process_to(p) -> dict:
    if isinstance(p, OUProcess):
        params = {"theta": p.theta, "sigma": p.sigma, "initial_value": p.initial_value,
                  "target": _form_to(p.target)}
    elif isinstance(p, DriftDiffusion):
        params = {"drift": _form_to(p.drift), "sigma": p.sigma, "initial_value": p.initial_value}
    elif isinstance(p, CountingProcess):
        params = {
            "intensity_form": p.intensity_form,
            "intensity": _form_to(p.intensity),
            "baseline": {"breakpoints": list(p.baseline.breakpoints),
                         "values": list(p.baseline.values)},
            "at_risk": p.at_risk,
        }
        if p.initial_probability is not None:
            params["initial_probability"] = _form_to(p.initial_probability)
    else:
        params = {"monitored": p.monitored, "eta": p.eta, "absorbing": p.absorbing}
    return {"name": p.name, "kind": p.kind, "parameters": params}


def system_from_dict(obj: Any) -> SystemSpec:
    if not isinstance(obj, dict):
        raise SpecFormatError("system document must be a JSON object")
    unknown = set(obj) - {"name", "horizon", "processes", "inputs", "attributes"}
    if unknown:
        raise SpecFormatError(f"unknown top-level keys {sorted(unknown)}")
    if "horizon" not in obj:
        raise SpecFormatError("missing 'horizon'")
    attrs = []
    for a in obj.get("attributes", []):
        if not isinstance(a, dict) or "name" not in a or "value" not in a:
            raise SpecFormatError("each attribute needs 'name' and 'value'")
        attrs.append(Attribute(str(a["name"]), a["value"]))
    try:
        horizon = float(obj["horizon"])
    except (TypeError, ValueError):
        raise SpecFormatError("horizon must be a number") from None
    return SystemSpec(
        name=str(obj.get("name", "system")),
        processes=tuple(_process_from(p) for p in obj.get("processes", [])),
        inputs=tuple(input_from_dict(i) for i in obj.get("inputs", [])),
        attributes=tuple(attrs),
        horizon=horizon,
    )


def system_to_dict(spec: SystemSpec) -> dict:
    return {
        "name": spec.name,
        "horizon": spec.horizon,
        "processes": [_process_to(p) for p in spec.processes],
        "inputs": [input_to_dict(i) for i in spec.inputs],
        "attributes": [{"name": a.name, "value": a.value} for a in spec.attributes],
    }


def _read_json(path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecFormatError(f"cannot read {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecFormatError(f"{path}: malformed JSON ({exc})") from None


def load_system(path) -> SystemSpec:
    return system_from_dict(_read_json(path))


def dump_system(spec: SystemSpec, path) -> None:
    Path(path).write_text(json.dumps(system_to_dict(spec), indent=2) + "\n")


def load_input(path, name: str | None = None) -> InputFunction:
    return input_from_dict(_read_json(path), name=name)
