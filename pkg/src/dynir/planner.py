"""Ranking policies for multi-page search.

Every policy ranks ``T`` pages of ``M`` documents from a Gaussian relevance
belief. The dynamic planner maximizes the recursive utility

    V(belief, t) = max_page [ U(page, belief)
                              + lam * sum_o P(o | page, belief) * V(update(belief, page, o), t + 1) ]

where ``U`` is the expected DCG of a page, ``P`` the examination click
model restricted to the most probable click vectors, and ``update`` the
Gaussian conditioning that also removes the shown documents. The last page
is ranked by expected gain over the conditioned belief, which maximizes
``U`` for a single page.

Ties between candidate pages are broken by document id, ascending, so runs
are reproducible.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .click_model import Observation, RankBias, truncated_observations
from .errors import CapacityError, InvalidInputError
from .metrics import Judgments, expected_gain, rank_discounts
from .relevance_model import (RelevanceBelief, condition_on_observation, condition_on_observations,
                              regression_terms)

RankingAction = Tuple[str, ...]

MODES = ("sequential", "exact")
EXACT_LIMIT = 10 ** 6


@dataclass(frozen=True)
class PlanConfig:
    pages: int = 2
    page_size: int = 10
    lam: float = 0.5
    obs_mass: float = 0.95
    mode: str = "sequential"

    def __post_init__(self):
        if self.pages < 1 or self.page_size < 1:
            raise InvalidInputError("pages and page_size must be at least 1")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidInputError(f"lam must lie in [0, 1], got {self.lam}")
        if not 0.0 < self.obs_mass <= 1.0:
            raise InvalidInputError(f"obs_mass must lie in (0, 1], got {self.obs_mass}")
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def depth(self) -> int:
        return self.pages * self.page_size

    def check_pool(self, n_docs: int):
        """Every page but the last must be full; the last keeps whatever remains."""
        need = max(self.page_size, (self.pages - 1) * self.page_size + 1)
        if need > n_docs:
            raise CapacityError(
                f"{self.pages} pages of {self.page_size} need at least {need} documents, "
                f"pool has {n_docs}")


@dataclass
class PlanResult:
    """First page, the next page for each anticipated click vector, and the plan's value.

    ``contingency`` holds the second page for every click vector kept by
    the observation truncation; ``obs_probs`` their click-model
    probabilities. Pages for click vectors outside the table are computed
    on demand by ``next_page``.
    """

    page1: RankingAction
    contingency: Dict[Observation, RankingAction]
    expected_utility: float
    obs_probs: Dict[Observation, float] = field(default_factory=dict)
    prior: Optional[RelevanceBelief] = field(default=None, repr=False)
    config: Optional[PlanConfig] = None
    bias: Optional[RankBias] = field(default=None, repr=False)
    policy: str = "dir"

    def next_page(self, obs: Sequence[int]) -> RankingAction:
        key = tuple(int(o) for o in obs)
        if key in self.contingency:
            return self.contingency[key]
        posterior = condition_on_observation(self.prior, self.page1, key)
        return _Planner(self.config, self.bias).stage(posterior, 2, self.policy)[1]

    def realize(self, clicks: Callable[[RankingAction], Sequence[int]]) -> List[RankingAction]:
        """Pages shown to a user whose clicks on each page are given by ``clicks``."""
        pages = [self.page1]
        if self.config.pages == 1:
            return pages
        obs = tuple(int(o) for o in clicks(self.page1))
        pages.append(self.next_page(obs))
        belief = condition_on_observation(self.prior, self.page1, obs)
        planner = _Planner(self.config, self.bias)
        for t in range(3, self.config.pages + 1):
            obs = tuple(int(o) for o in clicks(pages[-1]))
            belief = condition_on_observation(belief, pages[-1], obs)
            pages.append(planner.stage(belief, t, self.policy)[1])
        return pages

    def paths(self) -> List[Tuple[float, List[RankingAction]]]:
        """Every anticipated page sequence with its click-model weight.

        Weights are products of the truncated (un-renormalized) click vector
        probabilities, so they sum to slightly less than one.
        """
        if self.config.pages == 1:
            return [(1.0, [self.page1])]
        if self.config.pages == 2:
            return [(p, [self.page1, self.contingency[obs]]) for obs, p in self.obs_probs.items()]
        planner = _Planner(self.config, self.bias)
        out: List[Tuple[float, List[RankingAction]]] = []

        def extend(belief, pages, weight, t):
            if t == self.config.pages:
                out.append((weight, pages))
                return
            clicks, probs = planner.observations(belief, belief.index(pages[-1]))
            for posterior, p in zip(condition_on_observations(belief, pages[-1], clicks), probs):
                page = planner.stage(posterior, t + 1, self.policy)[1]
                extend(posterior, pages + [page], weight * float(p), t + 1)

        for obs, p in self.obs_probs.items():
            posterior = condition_on_observation(self.prior, self.page1, obs)
            extend(posterior, [self.page1, self.contingency[obs]], p, 2)
        return out


def _check_action(action: Sequence[str]) -> RankingAction:
    action = tuple(action)
    if len(set(action)) != len(action):
        raise InvalidInputError("ranking contains duplicate documents")
    return action


def prp_rank(belief: RelevanceBelief, k: int) -> RankingAction:
    """Top ``k`` documents by mean relevance."""
    if k > len(belief):
        raise CapacityError(f"cannot rank {k} documents from a pool of {len(belief)}")
    order = sorted(range(len(belief)), key=lambda i: (-belief.mean[i], belief.doc_ids[i]))
    return tuple(belief.doc_ids[i] for i in order[:k])


def gain_rank(belief: RelevanceBelief, k: int) -> RankingAction:
    """Top ``k`` documents by expected gain, the single-page expected-DCG optimum."""
    k = min(k, len(belief))
    g = expected_gain(belief.mean, belief.var)
    order = sorted(range(len(belief)), key=lambda i: (-g[i], belief.doc_ids[i]))
    return tuple(belief.doc_ids[i] for i in order[:k])


def split_pages(ranking: Sequence[str], page_size: int) -> List[RankingAction]:
    ranking = tuple(ranking)
    return [ranking[i:i + page_size] for i in range(0, len(ranking), page_size)]


class _Planner:
    """Value recursion shared by the dynamic, static and interactive policies.

    Policies:
      ``dir``    search every non-final page against feedback-aware lookahead
      ``static`` same search with no feedback: later pages see the prior
      ``iir``    no lookahead; every page after the first is the gain sort
                 of the conditioned belief
    """

    def __init__(self, config: PlanConfig, bias: Optional[RankBias] = None):
        self.config = config
        self.bias = bias if bias is not None else RankBias.dcg(config.page_size)
        self.discounts = rank_discounts(config.page_size)

    # -- values ----------------------------------------------------------

    def static(self, belief: RelevanceBelief, idx: np.ndarray) -> float:
        g = expected_gain(belief.mean[idx], belief.var[idx])
        return float(g @ self.discounts[:len(idx)])

    def final_values(self, means: np.ndarray, var: np.ndarray) -> np.ndarray:
        """Best single-page utility for each row of posterior means."""
        g = expected_gain(means, var)
        top = -np.sort(-g, axis=1)[:, :self.config.page_size]
        return top @ self.discounts[:top.shape[1]]

    def observations(self, belief: RelevanceBelief, idx: np.ndarray):
        q = self.bias.head(len(idx)) * belief.mean[idx]
        return truncated_observations(q, self.config.obs_mass)

    def page_value(self, belief: RelevanceBelief, page: RankingAction, t: int,
                   policy: str) -> float:
        cfg = self.config
        idx = belief.index(page)
        value = self.static(belief, idx)
        if t == cfg.pages or cfg.lam == 0.0:
            return value
        shown = set(page)
        rest = np.array([i for i, d in enumerate(belief.doc_ids) if d not in shown], dtype=int)
        if policy == "static":
            if t + 1 == cfg.pages:
                future = self.final_values(belief.mean[rest][None, :], belief.var[rest])[0]
            else:
                future = self.stage(belief.subset([belief.doc_ids[i] for i in rest]),
                                    t + 1, policy)[0]
            return value + cfg.lam * float(future)
        clicks, probs = self.observations(belief, idx)
        if t + 1 == cfg.pages:
            gain, post_cov = regression_terms(belief.cov, idx, rest)
            means = np.clip(belief.mean[rest] + (clicks - belief.mean[idx]) @ gain.T, 0.0, 1.0)
            future = float(probs @ self.final_values(means, np.diag(post_cov)))
        else:
            future = 0.0
            for posterior, p in zip(condition_on_observations(belief, page, clicks), probs):
                future += p * self.stage(posterior, t + 1, policy)[0]
        return value + cfg.lam * future

    # -- page choice -----------------------------------------------------

    def stage(self, belief: RelevanceBelief, t: int, policy: str) -> Tuple[float, RankingAction]:
        """Value and page of stage ``t`` under ``policy``."""
        if t == self.config.pages or policy == "iir":
            page = gain_rank(belief, self.config.page_size)
            return self.page_value(belief, page, t, policy), page
        if self.config.mode == "exact":
            return self._exhaustive(belief, t, policy)
        return self._sequential(belief, t, policy)

    def _sequential(self, belief, t, policy):
        candidates = sorted(belief.doc_ids)
        prefix: RankingAction = ()
        best_value = -math.inf
        for _ in range(self.config.page_size):
            best_value, best_page = -math.inf, None
            taken = set(prefix)
            for doc in candidates:
                if doc in taken:
                    continue
                page = prefix + (doc,)
                value = self.page_value(belief, page, t, policy)
                if value > best_value:
                    best_value, best_page = value, page
            prefix = best_page
        return best_value, prefix

    def _exhaustive(self, belief, t, policy):
        best_value, best_page = -math.inf, None
        for page in itertools.permutations(sorted(belief.doc_ids), self.config.page_size):
            value = self.page_value(belief, page, t, policy)
            if value > best_value:
                best_value, best_page = value, page
        return best_value, best_page

    def contingency(self, belief: RelevanceBelief, page: RankingAction, policy: str):
        clicks, probs = self.observations(belief, belief.index(page))
        table, weights = {}, {}
        for row, p, posterior in zip(clicks, probs, condition_on_observations(belief, page, clicks)):
            obs = tuple(int(o) for o in row)
            table[obs] = self.stage(posterior, 2, policy)[1]
            weights[obs] = float(p)
        return table, weights

    def plan(self, belief: RelevanceBelief, page1: RankingAction, value: float,
             policy: str) -> PlanResult:
        table, weights = ({}, {}) if self.config.pages == 1 else \
            self.contingency(belief, page1, policy)
        return PlanResult(page1, table, float(value), weights, belief, self.config,
                          self.bias, policy)


def dir_mps(belief: RelevanceBelief, config: PlanConfig,
            bias: Optional[RankBias] = None) -> PlanResult:
    """Dynamic multi-page ranking.

    In ``sequential`` mode each non-final page is grown one document at a
    time, every candidate scored with full lookahead over the click
    vectors. In ``exact`` mode every ordered page is scored.
    """
    if config.mode == "exact":
        return dir_mps_exact(belief, config, bias)
    config.check_pool(len(belief))
    planner = _Planner(config, bias)
    value, page1 = planner.stage(belief, 1, "dir")
    return planner.plan(belief, page1, value, "dir")


def dir_mps_exact(belief: RelevanceBelief, config: PlanConfig,
                  bias: Optional[RankBias] = None) -> PlanResult:
    config.check_pool(len(belief))
    count = math.perm(len(belief), min(config.depth, len(belief)))
    if count > EXACT_LIMIT:
        raise CapacityError(
            f"exact planning over {count} ordered selections exceeds the limit of {EXACT_LIMIT}")
    if config.mode != "exact":
        config = PlanConfig(config.pages, config.page_size, config.lam, config.obs_mass, "exact")
    planner = _Planner(config, bias)
    value, page1 = planner.stage(belief, 1, "dir")
    return planner.plan(belief, page1, value, "dir")


def cost_benefit(utility: float, relevance: float, miss: float, lam: float) -> float:
    """Prefix utility minus ``lam / relevance`` times the chance nothing above was relevant."""
    if lam == 0.0:
        return utility
    if relevance == 0.0:
        return -math.inf
    return utility - lam / relevance * miss


def iir_prp_mps(belief: RelevanceBelief, config: PlanConfig) -> List[RankingAction]:
    """Greedy global ranking by the interactive cost/benefit score, split into pages.

    Each step appends the document maximizing
    ``U(prefix + doc) - lam / r_doc * prod_{j in prefix} (1 - r_j)``.
    The belief is never updated. A document with zero mean relevance scores
    minus infinity whenever ``lam > 0``.
    """
    config.check_pool(len(belief))
    gains = expected_gain(belief.mean, belief.var)
    discounts = rank_discounts(config.depth)
    order = sorted(range(len(belief)), key=lambda i: belief.doc_ids[i])
    chosen: List[int] = []
    prefix_utility = 0.0
    miss = 1.0
    for pos in range(config.depth):
        best, best_rho = None, -math.inf
        taken = set(chosen)
        for i in order:
            if i in taken:
                continue
            rho = cost_benefit(prefix_utility + discounts[pos] * gains[i], belief.mean[i], miss,
                               config.lam)
            if best is None or rho > best_rho:
                best, best_rho = i, rho
        chosen.append(best)
        prefix_utility += discounts[pos] * gains[best]
        miss *= 1.0 - belief.mean[best]
    return split_pages([belief.doc_ids[i] for i in chosen], config.page_size)


def s_mps(belief: RelevanceBelief, config: PlanConfig) -> List[RankingAction]:
    """Pages maximizing the feedback-free objective ``sum_t lam^(t-1) U(page_t, prior)``."""
    config.check_pool(len(belief))
    planner = _Planner(config)
    pages = []
    current = belief
    for t in range(1, config.pages + 1):
        page = planner.stage(current, t, "static")[1]
        pages.append(page)
        shown = set(page)
        current = current.subset([d for d in current.doc_ids if d not in shown])
    return pages


def iir_mps(belief: RelevanceBelief, config: PlanConfig, bias: Optional[RankBias] = None,
            clicks: Optional[Sequence[int]] = None) -> PlanResult:
    """PRP first page; each later page is the gain sort of the click-conditioned belief.

    With ``clicks`` the result holds only the page for that click vector.
    """
    config.check_pool(len(belief))
    planner = _Planner(config, bias)
    page1 = prp_rank(belief, config.page_size)
    value = planner.page_value(belief, page1, 1, "iir")
    if clicks is None:
        return planner.plan(belief, page1, value, "iir")
    result = PlanResult(page1, {}, value, {}, belief, config, planner.bias, "iir")
    obs = tuple(int(o) for o in clicks)
    result.contingency[obs] = result.next_page(obs)
    return result


def perfect_clicks(page: Sequence[str], judgments: Judgments, topic: str) -> Observation:
    return tuple(1 if judgments.grade(topic, d) >= 1 else 0 for d in page)


def perfect_click_variant(plan: PlanResult, judgments: Judgments,
                          topic: str) -> List[RankingAction]:
    """Pages realized when the hidden judgments are replayed as clicks."""
    return plan.realize(lambda page: perfect_clicks(page, judgments, topic))


def evaluate_pages(belief: RelevanceBelief, pages: Sequence[Sequence[str]], config: PlanConfig,
                   bias: Optional[RankBias] = None) -> float:
    """Dynamic-objective value of a fixed (non-adaptive) sequence of pages.

    Later pages are scored under the belief conditioned on each anticipated
    click vector, so static and adaptive plans are compared on one scale.
    """
    planner = _Planner(config, bias)

    def value(current: RelevanceBelief, t: int) -> float:
        page = _check_action(pages[t - 1])
        idx = current.index(page)
        total = planner.static(current, idx)
        if t == len(pages) or config.lam == 0.0:
            return total
        clicks, probs = planner.observations(current, idx)
        if t + 1 == len(pages):
            # the last page is fixed, so its value is linear in the posterior rows
            nxt = _check_action(pages[t])
            shown = set(page)
            rest_ids = [d for d in current.doc_ids if d not in shown]
            pos = {d: j for j, d in enumerate(rest_ids)}
            cols = np.array([pos[d] for d in nxt], dtype=int)
            gain, post_cov = regression_terms(current.cov, idx, current.index(rest_ids))
            means = np.clip(current.mean[current.index(rest_ids)]
                            + (clicks - current.mean[idx]) @ gain.T, 0.0, 1.0)
            g = expected_gain(means[:, cols], np.diag(post_cov)[cols])
            future = float(probs @ (g @ rank_discounts(len(nxt))))
        else:
            future = 0.0
            for posterior, p in zip(condition_on_observations(current, page, clicks), probs):
                future += p * value(posterior, t + 1)
        return total + config.lam * future

    return value(belief, 1)
