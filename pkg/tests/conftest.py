import numpy as np
import pytest

from dynir.relevance_model import RelevanceBelief, ScoreEnsemble, build_belief

ACCEPTANCE_LINES = []


def random_psd(rng, n, scale=0.05):
    a = rng.standard_normal((n, n + 2))
    cov = a @ a.T / (n + 2) * scale
    return 0.5 * (cov + cov.T)


def random_belief(rng, n, scale=0.05):
    ids = tuple(f"d{i}" for i in range(n))
    return RelevanceBelief(ids, rng.uniform(0.05, 0.95, n), random_psd(rng, n, scale))


def ensemble_belief(rng, n, methods=5):
    scores = rng.random((n, methods)) + rng.random(n)[:, None]
    return build_belief(ScoreEnsemble(tuple(f"d{i}" for i in range(n)), scores))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_report():
    def record(number, passed, detail):
        line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
