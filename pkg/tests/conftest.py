import pytest

from stochsys.chd import CHDConfig, build_chd_system
from stochsys.demos import confounded_survival_system
from stochsys.process import (
    CountingProcess,
    InputFunction,
    LinearForm,
    OUProcess,
    SystemSpec,
)


@pytest.fixture
def observed():
    """Observation system G -> F, G -> D, F -> D."""
    return confounded_survival_system()


@pytest.fixture
def chd_spec():
    return build_chd_system(CHDConfig())


@pytest.fixture
def additive_fgd():
    """Time-constant F, G as inputs; D additive in both."""
    return SystemSpec(
        "additive",
        processes=(
            CountingProcess(
                "D",
                intensity=LinearForm(0.0, (("F", 0.2), ("G", 0.1))),
                baseline=InputFunction("baseline", (0.0,), (0.05,)),
                at_risk=1,
            ),
        ),
        inputs=(InputFunction.constant("F", 1.0), InputFunction.constant("G", 0.0)),
        horizon=10.0,
    )


@pytest.fixture
def single_ou():
    return SystemSpec("one", (OUProcess("X", theta=1.0),), horizon=1.0)
