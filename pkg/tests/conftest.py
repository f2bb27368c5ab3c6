import numpy as np
import pytest

from mtdc.bench import benchmark_config
from mtdc.plant import Config, assemble
from mtdc.scenario import build

# Independently computed (numpy eigvalsh on a hand-built Laplacian) and frozen.
BENCH_LR_EIGS = np.array([0.0, 14.4735757, 32.9229619, 55.1746236, 69.6606324, 82.6944363])
BENCH_P_M = np.array([-0.2, 0.0, 0.0, 0.0, 0.0, 0.0])


def bench_scenario(config=Config.DROOP_ONLY, **overrides):
    return build(benchmark_config(config, **overrides))


def post_fault(scn):
    """Plant parameters with the disturbance in force after all events."""
    return scn.params.with_disturbance(scn.p_m_final)


def bench_system(config=Config.DROOP_ONLY, **gain_overrides):
    scn = bench_scenario(config)
    gains = scn.gains.replace(**gain_overrides) if gain_overrides else scn.gains
    return assemble(post_fault(scn), gains, scn.dc, scn.comm, scn.config)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def droop_scn():
    return bench_scenario(Config.DROOP_ONLY)


@pytest.fixture(scope="session")
def dist_scn():
    return bench_scenario(Config.SECONDARY_DISTRIBUTED)


# Acceptance tests append (label, passed, detail) here; printed as a summary table.
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
