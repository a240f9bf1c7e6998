"""Simulation and causal-effect analysis for multivariate stochastic systems."""
from .process import (
    Attribute,
    CountingProcess,
    DriftDiffusion,
    InputFunction,
    LinearForm,
    OUProcess,
    SystemSpec,
    ThresholdEvent,
    Trajectory,
    ValidationReport,
    eval_drift,
    eval_intensity,
    validate_system,
)
from .graph import Intervention, apply_do, build_graph, find_confounders, is_wcli
from .simulate import (
    EnsembleSummary,
    SimConfig,
    estimate_hitting_distribution,
    sample_states,
    simulate_ensemble,
    simulate_path,
)

__version__ = "0.1.0"
