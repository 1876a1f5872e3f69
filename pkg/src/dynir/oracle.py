"""Brute-force reference computations for small instances.

Nothing here reuses the planner's search or value code: the Bellman
recursion is written out literally, with its own click probabilities,
conditioning and gain arithmetic, so it can serve as an independent check.
"""
from __future__ import annotations

import itertools
import math
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from .errors import CapacityError, InvalidInputError

MAX_DOCS = 6
MAX_PAGE = 2
MAX_PAGES = 2


def _gain(mean: float, var: float) -> float:
    return 2.0 ** mean - 1.0 + 2.0 ** (mean - 1.0) * math.log(2.0) ** 2 * var


def _page_utility(page, mean, var) -> float:
    return sum(_gain(mean[d], var[d]) / math.log2(i + 2) for i, d in enumerate(page))


def _best_page(docs, mean, var, size):
    best, best_u = None, -math.inf
    for page in itertools.permutations(docs, size):
        u = _page_utility(page, mean, var)
        if u > best_u:
            best, best_u = page, u
    return best, best_u


def exhaustive_bellman(belief, config, bias=None):
    """Exact dynamic utility by enumerating every page, click vector and follow-up page.

    Returns ``(best_utility, (page1, {click_vector: page2}))`` with pages as
    tuples of document ids.
    """
    n, m, t_max = len(belief.doc_ids), config.page_size, config.pages
    if n > MAX_DOCS or m > MAX_PAGE or t_max > MAX_PAGES:
        raise CapacityError(
            f"oracle handles N<={MAX_DOCS}, M<={MAX_PAGE}, T<={MAX_PAGES}; got {n}, {m}, {t_max}")
    if config.obs_mass != 1.0:
        raise InvalidInputError("the oracle enumerates the full observation space (obs_mass=1)")
    if m > n or (t_max - 1) * m >= n:
        raise CapacityError("not enough documents for the requested pages")
    b = [1.0 / math.log2(i + 2) for i in range(m)] if bias is None else \
        [float(x) for x in bias.biases[:m]]
    ids = list(belief.doc_ids)
    mean = {d: float(belief.mean[i]) for i, d in enumerate(ids)}
    var = {d: float(belief.cov[i, i]) for i, d in enumerate(ids)}
    cov = np.array(belief.cov, dtype=float)
    pos = {d: i for i, d in enumerate(ids)}
    docs = sorted(ids)

    best_total, best_plan = -math.inf, None
    for page1 in itertools.permutations(docs, m):
        total = _page_utility(page1, mean, var)
        policy: Dict[Tuple[int, ...], Tuple[str, ...]] = {}
        if t_max == 2:
            rest = [d for d in docs if d not in page1]
            a = [pos[d] for d in page1]
            u = [pos[d] for d in rest]
            s_aa_inv = np.linalg.inv(cov[np.ix_(a, a)])
            s_ua = cov[np.ix_(u, a)]
            post_cov = cov[np.ix_(u, u)] - s_ua @ s_aa_inv @ s_ua.T
            expected = 0.0
            for obs in itertools.product((0, 1), repeat=m):
                p = 1.0
                for k, d in enumerate(page1):
                    click = b[k] * mean[d]
                    p *= click if obs[k] else 1.0 - click
                innovation = np.array(obs, dtype=float) - np.array([mean[d] for d in page1])
                shifted = np.array([mean[d] for d in rest]) + s_ua @ s_aa_inv @ innovation
                post_mean = {d: min(1.0, max(0.0, float(x))) for d, x in zip(rest, shifted)}
                post_var = {d: max(0.0, float(post_cov[j, j])) for j, d in enumerate(rest)}
                page2, u2 = _best_page(rest, post_mean, post_var, min(m, len(rest)))
                policy[obs] = page2
                expected += p * u2
            total += config.lam * expected
        if total > best_total:
            best_total, best_plan = total, (page1, policy)
    return best_total, best_plan


def exhaustive_esl(joint_relevance_table: Mapping[Tuple[int, ...], float],
                   ranking: Sequence[int]) -> float:
    """Expected search length by summing over every relevance bit-vector.

    ``joint_relevance_table`` maps bit-vectors indexed by document to their
    probabilities; ``ranking`` lists document indices in rank order.
    """
    total = 0.0
    mass = 0.0
    for bits, p in joint_relevance_table.items():
        if any(b not in (0, 1) for b in bits) or p < 0:
            raise InvalidInputError("joint table must map binary vectors to probabilities")
        mass += p
        for rank, doc in enumerate(ranking):
            if bits[doc]:
                total += rank * p
                break
    if abs(mass - 1.0) > 1e-9:
        raise InvalidInputError(f"joint relevance table sums to {mass}, not 1")
    return total
