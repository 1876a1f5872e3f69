import math

import numpy as np
import pytest

from conftest import ensemble_belief
from dynir.errors import CapacityError, InvalidInputError
from dynir.oracle import exhaustive_bellman, exhaustive_esl
from dynir.planner import PlanConfig, dir_mps_exact
from dynir.relevance_model import RelevanceBelief

LN2_SQ = math.log(2) ** 2


def gain(m, v):
    return 2 ** m - 1 + 2 ** (m - 1) * LN2_SQ * v


def test_two_docs_by_hand():
    b = RelevanceBelief(("a", "b"), [0.3, 0.8], np.diag([0.01, 0.02]))
    value, (page1, policy) = exhaustive_bellman(b, PlanConfig(2, 1, 1.0, 1.0))
    assert value == pytest.approx(gain(0.3, 0.01) + gain(0.8, 0.02), abs=1e-12)
    assert page1 == ("b",)
    assert set(policy.values()) == {("a",)}


def test_single_page():
    b = RelevanceBelief(("a",), [0.6], [[0.03]])
    value, (page1, policy) = exhaustive_bellman(b, PlanConfig(1, 1, 0.5, 1.0))
    assert value == pytest.approx(gain(0.6, 0.03))
    assert page1 == ("a",) and policy == {}


def test_lambda_zero_is_static_optimum():
    b = ensemble_belief(np.random.default_rng(1), 5)
    value, (page1, _) = exhaustive_bellman(b, PlanConfig(2, 2, 0.0, 1.0))
    g = sorted(gain(m, v) for m, v in zip(b.mean, b.var))[::-1]
    assert value == pytest.approx(g[0] + g[1] / math.log2(3))


def test_guards():
    b = ensemble_belief(np.random.default_rng(0), 7)
    with pytest.raises(CapacityError):
        exhaustive_bellman(b, PlanConfig(2, 2, 0.5, 1.0))
    with pytest.raises(InvalidInputError):
        exhaustive_bellman(b.subset(b.doc_ids[:4]), PlanConfig(2, 2, 0.5, 0.95))


@pytest.mark.parametrize("n,m", [(3, 1), (3, 2), (4, 1), (4, 2), (5, 1), (5, 2), (6, 2)])
def test_agrees_with_exact_planner(n, m):
    rng = np.random.default_rng(n * 10 + m)
    for _ in range(5):
        b = ensemble_belief(rng, n)
        cfg = PlanConfig(2, m, float(rng.random()), 1.0, "exact")
        assert abs(dir_mps_exact(b, cfg).expected_utility - exhaustive_bellman(b, cfg)[0]) < 1e-9


def test_esl_reference_and_edge_cases():
    joint = {(1, 1, 0): 2 / 3, (0, 0, 1): 1 / 3}
    assert exhaustive_esl(joint, (0, 1, 2)) == pytest.approx(2 / 3, abs=1e-12)
    assert exhaustive_esl(joint, (0, 2, 1)) == pytest.approx(1 / 3, abs=1e-12)
    assert exhaustive_esl({(1, 1, 1): 1.0}, (2, 0, 1)) == 0.0
    with pytest.raises(InvalidInputError):
        exhaustive_esl({(1, 0): 0.4}, (0, 1))
