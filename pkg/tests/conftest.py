import pytest

from snow.llm import set_network_allowed
from snow.synth import GeneratorConfig, generate


@pytest.fixture(autouse=True)
def _no_network():
    set_network_allowed(False)
    yield
    set_network_allowed(False)


@pytest.fixture(scope="session")
def cohort():
    """The default 147-patient synthetic cohort (seed 0)."""
    return generate(GeneratorConfig(seed=0))


@pytest.fixture(scope="session")
def small_cohort():
    return generate(GeneratorConfig(n_patients=30, seed=3, bf_prevalence=0.2))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
