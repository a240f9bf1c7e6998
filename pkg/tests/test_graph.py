import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochsys.chd import CHDConfig, PhysiologyParams, build_chd_system
from stochsys.demos import chain_system
from stochsys.graph import (
    Intervention,
    apply_do,
    build_graph,
    find_confounders,
    is_wcli,
    to_dot,
)
from stochsys.process import (
    eval_drift,
    eval_intensity,
    validate_system,
)

OBSERVATION_EDGES = {("G", "F"), ("G", "D"), ("F", "D")}
INTERVENTION_EDGES = {("G", "D"), ("F", "D")}
LIFESTYLE = ("smoking", "activity", "diet")
PHYSIO = ("BMI", "LDL", "CRP", "SBP")
PATHWAY_EDGES = (
    {(l, p) for l in LIFESTYLE for p in PHYSIO}
    | {(p, "Ath") for p in PHYSIO}
    | {("Ath", "CHD")}
)


def test_observation_edges(observed):
    assert build_graph(observed).edges == OBSERVATION_EDGES


def test_isolated_process(single_ou):
    assert build_graph(single_ou).edges == frozenset()


def test_chd_pathway_edges(chd_spec):
    assert build_graph(chd_spec).edges == PATHWAY_EDGES


def test_wcli_queries(observed):
    assert is_wcli(observed, "D", "F") is False
    assert is_wcli(observed, "G", "F") is True
    assert is_wcli(observed, "D", "D") is True  # D is not its own parent
    with pytest.raises(KeyError):
        is_wcli(observed, "D", "nope")


def test_wcli_consistent_with_edges(chd_spec):
    g = build_graph(chd_spec)
    for k in g.nodes:
        for j in g.nodes:
            assert is_wcli(chd_spec, k, j) == ((j, k) not in g.edges)


def test_do_gives_intervention_graph(observed):
    iv = Intervention.constant("F", 1.0)
    post = apply_do(observed, iv)
    assert validate_system(post).ok
    assert build_graph(post).edges == INTERVENTION_EDGES
    assert build_graph(post).kind("F") == "input"


def test_do_without_parents_changes_only_node_kind(observed):
    post = apply_do(observed, Intervention.constant("G", 1.0))
    assert build_graph(post).edges == build_graph(observed).edges
    assert build_graph(post).kind("G") == "input"


def test_do_is_idempotent_on_graph(observed, chd_spec):
    for spec, target in ((observed, "F"), (chd_spec, "LDL")):
        iv = Intervention.constant(target, 0.0)
        once = apply_do(spec, iv)
        assert build_graph(apply_do(once, iv)).edges == build_graph(once).edges


def test_do_rejects_attributes_and_unknown(observed):
    from stochsys.process import Attribute, SystemSpec

    spec = SystemSpec(observed.name, observed.processes, attributes=(Attribute("age", 40.0),), horizon=1)
    with pytest.raises(ValueError):
        apply_do(spec, Intervention.constant("age", 1.0))
    with pytest.raises(KeyError):
        apply_do(observed, Intervention.constant("Q", 1.0))


def test_do_leaves_other_processes_untouched(observed):
    post = apply_do(observed, Intervention.constant("F", 1.0))
    assert post.process("D") is observed.process("D")
    hist = {"D": 0.0, "F": 1.0, "G": 1.0}
    assert eval_intensity(post.process("D"), 2.0, hist, post) == eval_intensity(
        observed.process("D"), 2.0, hist, observed
    )


def test_confounders(observed):
    assert find_confounders(observed, "F", "D") == {"G"}
    post = apply_do(observed, Intervention.constant("F", 1.0))
    assert find_confounders(post, "F", "D") == set()


def test_confounders_chain():
    # A -> B -> C: A is an ancestor of both B and C
    assert find_confounders(chain_system(), "B", "C") == {"A"}


@given(st.sampled_from(["BMI", "LDL", "CRP", "SBP", "Ath", "CHD"]))
def test_no_confounders_without_ancestors(target):
    spec = apply_do(build_chd_system(), Intervention.constant(target, 0.5))
    for d in ("Ath", "CHD", "LDL"):
        if d != target:
            assert find_confounders(spec, target, d) == set()


@settings(max_examples=50, deadline=None)
@given(
    target=st.sampled_from(["BMI", "LDL", "CRP", "SBP"]),
    level=st.floats(-3, 3),
    t=st.floats(0, 40),
    values=st.lists(st.floats(-5, 5), min_size=6, max_size=6),
)
def test_do_invariance_property(target, level, t, values):
    spec = build_chd_system()
    post = apply_do(spec, Intervention.constant(target, level))
    hist = dict(zip(["BMI", "LDL", "CRP", "SBP", "Ath", "CHD"], values))
    hist[target] = level  # history consistent with the intervention
    for p in post.processes:
        if p.kind in ("OU", "DriftDiffusion"):
            assert eval_drift(p, t, hist, post) == eval_drift(spec.process(p.name), t, hist, spec)


def test_dot_export(observed):
    dot = to_dot(build_graph(observed), observed.name)
    assert dot.startswith("digraph confounded_survival {")
    assert dot.count("->") == 3
    assert '"G" -> "F";' in dot


def test_zero_betas_remove_edges():
    cfg = CHDConfig(
        physiology={p: PhysiologyParams(beta_smoking=0, beta_activity=0, beta_diet=0) for p in PHYSIO},
        beta={p: 0.0 for p in PHYSIO},
    )
    assert build_graph(build_chd_system(cfg)).edges == {("Ath", "CHD")}
