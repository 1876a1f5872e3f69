"""Self-checks run by ``dynir verify``: worked numbers and oracle cross-checks."""
from __future__ import annotations

import time
from fractions import Fraction
from typing import List, NamedTuple

import numpy as np

from .metrics import expected_dcg, expected_search_length
from .oracle import exhaustive_bellman, exhaustive_esl
from .planner import PlanConfig, dir_mps, dir_mps_exact
from .relevance_model import RelevanceBelief, ScoreEnsemble, build_belief, condition_on_observation
from .simulator import make_rng


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.seconds:.3f}s)"


def random_belief(rng: np.random.Generator, n_docs: int, n_methods: int = 5) -> RelevanceBelief:
    """Belief built from a random score matrix, so documents co-vary."""
    scores = rng.random((n_docs, n_methods)) + rng.random(n_docs)[:, None]
    return build_belief(ScoreEnsemble(tuple(f"d{i}" for i in range(n_docs)), scores))


# two classes of users: 2/3 want subtopics 1 and 2, 1/3 want only subtopic 3
SEARCH_LENGTH_MARGINALS = (2 / 3, 2 / 3, 1 / 3)
SEARCH_LENGTH_JOINT = {(1, 1, 0): 2 / 3, (0, 0, 1): 1 / 3}


def _reorder(joint, order):
    return {tuple(bits[i] for i in order): p for bits, p in joint.items()}


def check_search_length() -> str:
    r = SEARCH_LENGTH_MARGINALS
    cases = [
        ("independent, ranked 1 2 3", expected_search_length(r), Fraction(8, 27)),
        ("independent, ranked 1 3 2",
         expected_search_length([r[0], r[2], r[1]]), Fraction(11, 27)),
        ("joint, ranked 1 2 3", expected_search_length(joint=SEARCH_LENGTH_JOINT), Fraction(2, 3)),
        ("joint, ranked 1 3 2",
         expected_search_length(joint=_reorder(SEARCH_LENGTH_JOINT, (0, 2, 1))), Fraction(1, 3)),
    ]
    for order, want in (((0, 1, 2), Fraction(2, 3)), ((0, 2, 1), Fraction(1, 3))):
        cases.append((f"brute force, ranked {' '.join(str(i + 1) for i in order)}",
                      exhaustive_esl(SEARCH_LENGTH_JOINT, order), want))
    worst = max(abs(got - float(want)) for _, got, want in cases)
    if worst > 1e-12:
        bad = [f"{name}={got!r} want {want}" for name, got, want in cases
               if abs(got - float(want)) > 1e-12]
        raise AssertionError("; ".join(bad))
    return f"8/27, 11/27, 2/3, 1/3 reproduced, max error {worst:.1e}"


def exact_vs_oracle(n_instances: int = 50, seed: int = 7) -> float:
    """Largest |exact planner - brute force| over random small instances."""
    rng = make_rng(seed)
    worst = 0.0
    shapes = [(n, m) for n in (3, 4, 5) for m in (1, 2)]
    for k in range(n_instances):
        n, m = shapes[k % len(shapes)]
        belief = random_belief(rng, n)
        cfg = PlanConfig(pages=2, page_size=m, lam=float(rng.random()), obs_mass=1.0, mode="exact")
        got = dir_mps_exact(belief, cfg).expected_utility
        want, _ = exhaustive_bellman(belief, cfg)
        worst = max(worst, abs(got - want))
    return worst


def check_exact_vs_oracle() -> str:
    worst = exact_vs_oracle()
    if worst >= 1e-9:
        raise AssertionError(f"max deviation {worst:.3e}")
    return f"50 instances, max deviation {worst:.1e}"


def check_sequential_bound(n_instances: int = 30, seed: int = 11) -> str:
    rng = make_rng(seed)
    ratios = []
    for k in range(n_instances):
        n = 4 + k % 3
        belief = random_belief(rng, n)
        cfg = PlanConfig(2, 2, float(rng.random()), 1.0, "sequential")
        seq = dir_mps(belief, cfg).expected_utility
        exact = dir_mps_exact(belief, cfg).expected_utility
        if seq > exact + 1e-12:
            raise AssertionError(f"sequential {seq} exceeds exact {exact}")
        ratios.append(seq / exact)
    return f"sequential <= exact on {n_instances} instances, mean ratio {np.mean(ratios):.4f}"


def check_conditioning() -> str:
    belief = RelevanceBelief(("a", "b"), np.array([0.5, 0.5]),
                             np.array([[0.04, 0.02], [0.02, 0.04]]))
    post = condition_on_observation(belief, ("b",), (1,))
    if abs(post.mean[0] - 0.75) > 1e-12 or abs(post.cov[0, 0] - 0.03) > 1e-12:
        raise AssertionError(f"mean {post.mean[0]!r}, variance {post.cov[0, 0]!r}")
    return "posterior mean 0.75, variance 0.03"


def check_expected_dcg() -> str:
    belief = RelevanceBelief(("a",), np.array([0.5]), np.array([[0.04]]))
    got = expected_dcg(("a",), belief)
    want = 2 ** 0.5 - 1 + 2 ** -0.5 * np.log(2) ** 2 * 0.04
    if abs(got - want) > 1e-12 or abs(got - 0.42780) > 5e-6:
        raise AssertionError(f"{got!r}")
    return f"r=0.5, var=0.04 gives {got:.5f}"


CHECKS: List[tuple] = [
    ("expected search length", check_search_length),
    ("gaussian conditioning", check_conditioning),
    ("expected dcg", check_expected_dcg),
    ("exact planner vs brute force", check_exact_vs_oracle),
    ("sequential planner bound", check_sequential_bound),
]


def run_checks(checks=None) -> List[CheckResult]:
    results = []
    for name, fn in (checks or CHECKS):
        start = time.perf_counter()
        try:
            detail, passed = fn(), True
        except Exception as exc:  # a failing check is reported, not raised
            detail, passed = f"{type(exc).__name__}: {exc}", False
        results.append(CheckResult(name, passed, detail, time.perf_counter() - start))
    return results
