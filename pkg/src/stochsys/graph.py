"""Direct-influence graphs, WCLI queries and do-interventions.

Influence is structural: ``j -> k`` whenever ``j`` appears as a parent in the
drift, target, intensity or initial law of ``k``. A component is WCLI from
another exactly when no such edge exists. Cycles are allowed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import networkx as nx

from .process import InputFunction, SystemSpec

__all__ = [
    "InfluenceGraph",
    "Intervention",
    "build_graph",
    "is_wcli",
    "apply_do",
    "find_confounders",
    "to_dot",
]


@dataclass(frozen=True)
class InfluenceGraph:
    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]
    kinds: tuple[tuple[str, str], ...] = ()

    def kind(self, name: str) -> str:
        return dict(self.kinds)[name]

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        for n, k in self.kinds or ((n, "") for n in self.nodes):
            g.add_node(n, kind=k)
        g.add_edges_from(self.edges)
        return g

    def parents(self, name: str) -> set[str]:
        return {j for j, k in self.edges if k == name}

    def children(self, name: str) -> set[str]:
        return {k for j, k in self.edges if j == name}


@dataclass(frozen=True)
class Intervention:
    """Replace process ``target`` by the deterministic ``control`` trajectory."""

    target: str
    control: InputFunction

    @classmethod
    def constant(cls, target: str, value: float) -> "Intervention":
        return cls(target, InputFunction.constant(target, value))


def build_graph(spec: SystemSpec) -> InfluenceGraph:
    """One node per named entity; one edge per structural parent relation."""
    edges = frozenset((parent, p.name) for p in spec.processes for parent in p.parents)
    kinds = tuple((n, spec.node_kind(n)) for n in spec.names)
    return InfluenceGraph(nodes=tuple(spec.names), edges=edges, kinds=kinds)


def _require(spec: SystemSpec, *names: str) -> None:
    known = set(spec.names)
    for n in names:
        if n not in known:
            raise KeyError(f"unknown name {n!r}")


def is_wcli(spec: SystemSpec, k: str, j: str) -> bool:
    """True when ``k`` is WCLI from ``j``, i.e. ``j`` does not directly influence ``k``."""
    _require(spec, k, j)
    return (j, k) not in build_graph(spec).edges


def apply_do(spec: SystemSpec, iv: Intervention) -> SystemSpec:
    """Intervention system: ``iv.target`` becomes the input ``iv.control``.

    Every other process keeps its exact specification, so their drifts and
    intensities are unchanged; edges into the target disappear while edges out of
    it are preserved.
    """
    kind = spec.node_kind(iv.target) if iv.target in spec.names else None
    if kind is None:
        raise KeyError(f"do target {iv.target!r} is not in the system")
    if kind == "attribute":
        raise ValueError(f"cannot intervene on attribute {iv.target!r}")
    control = iv.control.renamed(iv.target)
    processes = tuple(p for p in spec.processes if p.name != iv.target)
    inputs = tuple(i for i in spec.inputs if i.name != iv.target) + (control,)
    if not processes:
        raise ValueError("intervention would leave the system without processes")
    return replace(spec, processes=processes, inputs=inputs)


def _ancestors(g: nx.DiGraph, n: str) -> set[str]:
    return set(nx.ancestors(g, n))


def find_confounders(spec: SystemSpec, f: str, d: str) -> set[str]:
    """Common ancestors of ``f`` and ``d`` (excluding both)."""
    _require(spec, f, d)
    g = build_graph(spec).to_networkx()
    return (_ancestors(g, f) & _ancestors(g, d)) - {f, d}


_SHAPES = {
    "OU": "ellipse",
    "DriftDiffusion": "ellipse",
    "Counting": "box",
    "ThresholdEvent": "doubleoctagon",
    "input": "diamond",
    "attribute": "plaintext",
}


def to_dot(graph: InfluenceGraph, name: str = "system") -> str:
    """Graphviz DOT text; node order and edge order are deterministic."""
    safe = "".join(c if c.isalnum() or c == "_" else "_" for c in name) or "system"
    lines = [f"digraph {safe} {{"]
    kinds = dict(graph.kinds)
    for n in graph.nodes:
        shape = _SHAPES.get(kinds.get(n, ""), "ellipse")
        lines.append(f'  "{n}" [shape={shape}, kind="{kinds.get(n, "")}"];')
    for j, k in sorted(graph.edges):
        lines.append(f'  "{j}" -> "{k}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
