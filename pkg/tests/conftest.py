import numpy as np
import pytest

from resilient_microgrid import diagnostics as dg
from resilient_microgrid.engine import run
from resilient_microgrid.netgraph import build_graph
from resilient_microgrid.scenario import golden_path, override, parse_scenario

RING = [[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]]
PIN = [[1, 0, 0, 0], [0, 0, 1, 0]]


@pytest.fixture(scope="session")
def ring_graph():
    return build_graph(RING, PIN)


@pytest.fixture(scope="session")
def golden_cfg():
    return parse_scenario(golden_path("paper"))


@pytest.fixture(scope="session")
def golden_conventional_cfg():
    return parse_scenario(golden_path("paper-conventional"))


@pytest.fixture(scope="session")
def resilient_run(golden_cfg):
    return run(golden_cfg)


@pytest.fixture(scope="session")
def conventional_run(golden_conventional_cfg):
    return run(golden_conventional_cfg)


@pytest.fixture(scope="session")
def quiet_cfg(golden_cfg):
    """Golden network with no attack, short horizon."""
    from resilient_microgrid.attack import AttackProfile
    return golden_cfg.with_(attack=AttackProfile(4), t_end=5.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion."""
    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
