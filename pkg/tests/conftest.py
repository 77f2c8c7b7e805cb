import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mfgqmi.envs import make_ring_road, make_sioux_falls  # noqa: E402

REPO = Path(__file__).resolve().parents[1]
_acceptance_lines: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ring():
    return make_ring_road()


@pytest.fixture(scope="session")
def sioux():
    return make_sioux_falls()


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one summary line per acceptance criterion; printed at the end of the run."""
    return _acceptance_lines


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ring_reference(ring):
    """Reference equilibrium at the final temperature of the ring-road schedule, with its wall time."""
    import time

    from mfgqmi.core import PolicyOperator
    from mfgqmi.fpi import ground_truth_mfne

    start = time.perf_counter()
    q, m = ground_truth_mfne(ring, PolicyOperator("softmax", 50.0, "linear"), tol=1e-10, k=50)
    return {"q": q, "m": m, "seconds": time.perf_counter() - start}
