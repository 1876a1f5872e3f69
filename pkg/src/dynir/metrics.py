"""Ranking utilities and evaluation metrics.

Two families live here:

* belief-based utilities used by the planners (``expected_gain``,
  ``expected_dcg``) and the expected search length;
* judgment-based evaluation metrics (DCG, NDCG, AP, ERR, session DCG and the
  subtopic diversity metrics).

Judgment-based metrics take the ranking as a sequence of document ids and a
``qrel`` mapping of document id to graded relevance for a single topic.
Unjudged documents count as grade 0.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import InvalidInputError, UnsupportedMetricError
from .relevance_model import RelevanceBelief

LN2_SQ = math.log(2.0) ** 2


@dataclass
class Judgments:
    """Graded relevance per (topic, doc) and binary subtopic relevance per (topic, subtopic, doc)."""

    grades: Dict[Tuple[str, str], int] = field(default_factory=dict)
    subtopics: Dict[Tuple[str, str, str], int] = field(default_factory=dict)

    def __post_init__(self):
        for key, g in self.grades.items():
            if g < 0:
                raise InvalidInputError(f"negative grade for {key}")
        for key, g in self.subtopics.items():
            if g not in (0, 1):
                raise InvalidInputError(f"subtopic label for {key} must be binary")

    @property
    def max_grade(self) -> int:
        return max(self.grades.values(), default=0)

    @property
    def topics(self) -> list:
        seen = {t for t, _ in self.grades} | {t for t, _, _ in self.subtopics}
        return sorted(seen, key=_topic_key)

    def for_topic(self, topic: str) -> Dict[str, int]:
        return {d: g for (t, d), g in self.grades.items() if t == topic}

    def has_subtopics(self, topic: str) -> bool:
        return any(t == topic for t, _, _ in self.subtopics)

    def subtopics_for(self, topic: str) -> Dict[str, Set[str]]:
        """Subtopic id -> set of documents relevant to it."""
        out: Dict[str, Set[str]] = {}
        for (t, s, d), g in self.subtopics.items():
            if t == topic:
                docs = out.setdefault(s, set())
                if g:
                    docs.add(d)
        return out

    def grade(self, topic: str, doc: str) -> int:
        return self.grades.get((topic, doc), 0)

    def merge(self, other: "Judgments") -> "Judgments":
        return Judgments({**self.grades, **other.grades}, {**self.subtopics, **other.subtopics})


def _topic_key(topic: str):
    return (0, int(topic), "") if topic.isdigit() else (1, 0, topic)


def rank_discounts(length: int, start: int = 1) -> np.ndarray:
    ranks = np.arange(start, start + length)
    return 1.0 / np.log2(ranks + 1.0)


# ---------------------------------------------------------------------------
# belief-based utilities


def expected_gain(mean, var):
    """Second-order approximation of E[2^R - 1] for R ~ N(mean, var)."""
    mean = np.asarray(mean, dtype=float)
    return np.exp2(mean) - 1.0 + np.exp2(mean - 1.0) * LN2_SQ * np.asarray(var, dtype=float)


def expected_dcg(action: Sequence[str], belief: RelevanceBelief) -> float:
    """DCG of ``action`` in expectation over the belief, with the variance correction.

    The correction comes from expanding E[2^R] to second order around the
    mean. For R ~ N(mu, s2) the exact value is 2^mu * exp(s2 ln^2 2 / 2),
    so the truncation error per document is
    2^mu * (exp(x) - 1 - x) with x = s2 ln^2 2 / 2, which is below
    2^mu * x^2 e^x / 2 (about 1.5e-4 for mu <= 1 and s2 <= 0.05).
    """
    idx = belief.index(action)
    gains = expected_gain(belief.mean[idx], belief.var[idx])
    return float(gains @ rank_discounts(len(action)))


def expected_search_length(relevance_probs: Optional[Sequence[float]] = None,
                           joint: Optional[Mapping[Tuple[int, ...], float]] = None) -> float:
    """Expected number of non-relevant items read before the first relevant one.

    Either give per-rank probabilities of relevance (assumed independent),
    or a ``joint`` table mapping relevance bit-vectors, in rank order, to
    their probabilities.
    """
    if joint is not None:
        total = math.fsum(joint.values())
        if abs(total - 1.0) > 1e-9:
            raise InvalidInputError(f"joint relevance table sums to {total}, not 1")
        first = defaultdict(list)
        for bits, p in joint.items():
            if p < 0:
                raise InvalidInputError("joint relevance table has a negative probability")
            for i, b in enumerate(bits):
                if b:
                    first[i].append(p)
                    break
        return math.fsum(i * math.fsum(ps) for i, ps in first.items())
    if relevance_probs is None:
        raise InvalidInputError("need relevance probabilities or a joint table")
    probs = [float(p) for p in relevance_probs]
    if any(p < 0.0 or p > 1.0 for p in probs):
        raise InvalidInputError("relevance probabilities must lie in [0, 1]")
    terms = []
    miss = 1.0
    for i, p in enumerate(probs):
        terms.append(i * miss * p)
        miss *= 1.0 - p
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# judgment-based metrics


def _grades(ranking: Sequence[str], qrel: Mapping[str, float]) -> np.ndarray:
    return np.array([qrel.get(d, 0) for d in ranking], dtype=float)


def dcg(ranking: Sequence[str], qrel: Mapping[str, float]) -> float:
    """DCG with exponential gain ``2^g - 1`` and discount ``1/log2(i + 1)``."""
    g = _grades(ranking, qrel)
    return float((np.exp2(g) - 1.0) @ rank_discounts(len(g)))


def ideal_dcg(qrel: Mapping[str, float], length: int) -> float:
    best = sorted(qrel.values(), reverse=True)[:length]
    g = np.array(best, dtype=float)
    return float((np.exp2(g) - 1.0) @ rank_discounts(len(g)))


def ndcg(ranking: Sequence[str], qrel: Mapping[str, float]) -> float:
    ideal = ideal_dcg(qrel, len(ranking))
    return dcg(ranking, qrel) / ideal if ideal > 0 else 0.0


def average_precision(ranking: Sequence[str], qrel: Mapping[str, float]) -> float:
    """AP with grade >= 1 as relevant, normalized by all relevant documents in ``qrel``."""
    n_rel = sum(1 for g in qrel.values() if g >= 1)
    if n_rel == 0:
        return 0.0
    hits = 0
    total = 0.0
    for i, d in enumerate(ranking, start=1):
        if qrel.get(d, 0) >= 1:
            hits += 1
            total += hits / i
    return total / n_rel


def err(ranking: Sequence[str], qrel: Mapping[str, float],
        max_grade: Optional[float] = None) -> float:
    """Expected reciprocal rank with stopping probability ``(2^g - 1) / 2^max_grade``.

    ``max_grade`` should be the collection-wide maximum grade; it defaults
    to the maximum grade in ``qrel``.
    """
    if max_grade is None:
        max_grade = max(qrel.values(), default=0)
    if max_grade <= 0:
        return 0.0
    scale = 2.0 ** max_grade
    value = 0.0
    keep_going = 1.0
    for i, d in enumerate(ranking, start=1):
        stop = (2.0 ** min(qrel.get(d, 0), max_grade) - 1.0) / scale
        value += keep_going * stop / i
        keep_going *= 1.0 - stop
    return value


def session_discount(t: int) -> float:
    """Page discount ``1 / log_{2t}(t + 1)``; equals 1 on the first page."""
    return math.log(2.0 * t) / math.log(t + 1.0)


def sdcg(pages: Sequence[Sequence[str]], qrel: Mapping[str, float]) -> float:
    if not pages:
        raise InvalidInputError("session DCG needs at least one page")
    return sum(session_discount(t) * dcg(page, qrel) for t, page in enumerate(pages, start=1))


def _require(subtopics: Mapping[str, Set[str]]):
    if not subtopics:
        raise UnsupportedMetricError("no subtopic judgments available for this topic")


def _alpha_dcg(ranking: Iterable[str], subtopics: Mapping[str, Set[str]], alpha: float) -> float:
    seen = defaultdict(int)
    total = 0.0
    for i, d in enumerate(ranking, start=1):
        gain = 0.0
        for s, docs in subtopics.items():
            if d in docs:
                gain += (1.0 - alpha) ** seen[s]
                seen[s] += 1
        total += gain / math.log2(i + 1)
    return total


def _greedy_ideal(subtopics: Mapping[str, Set[str]], alpha: float, length: int) -> list:
    candidates = sorted(set().union(*subtopics.values()))
    seen = defaultdict(int)
    chosen = []
    for _ in range(min(length, len(candidates))):
        best, best_gain = None, -1.0
        for d in candidates:
            gain = sum((1.0 - alpha) ** seen[s] for s, docs in subtopics.items() if d in docs)
            if gain > best_gain:
                best, best_gain = d, gain
        chosen.append(best)
        candidates.remove(best)
        for s, docs in subtopics.items():
            if best in docs:
                seen[s] += 1
    return chosen


def alpha_ndcg(ranking: Sequence[str], subtopics: Mapping[str, Set[str]],
               alpha: float = 0.5) -> float:
    """alpha-nDCG at the ranking's length.

    The ideal ranking is built greedily, the standard approximation since
    the exact ideal is NP-hard to compute. When a ranking beats the greedy
    ideal the score is capped at 1.
    """
    _require(subtopics)
    if not 0.0 <= alpha < 1.0:
        raise InvalidInputError("alpha must lie in [0, 1)")
    ideal = _alpha_dcg(_greedy_ideal(subtopics, alpha, len(ranking)), subtopics, alpha)
    if ideal <= 0:
        return 0.0
    return min(1.0, _alpha_dcg(ranking, subtopics, alpha) / ideal)


def _intent_weights(subtopics: Mapping[str, Set[str]],
                    weights: Optional[Mapping[str, float]]) -> Dict[str, float]:
    if weights is None:
        return {s: 1.0 / len(subtopics) for s in subtopics}
    if abs(math.fsum(weights.values()) - 1.0) > 1e-9:
        raise InvalidInputError("intent weights must sum to 1")
    return dict(weights)


def err_ia(ranking: Sequence[str], subtopics: Mapping[str, Set[str]],
           intent_weights: Optional[Mapping[str, float]] = None) -> float:
    """Intent-aware ERR: weighted mean of per-subtopic ERR with binary grades."""
    _require(subtopics)
    weights = _intent_weights(subtopics, intent_weights)
    return sum(w * err(ranking, {d: 1 for d in subtopics.get(s, ())}, max_grade=1)
               for s, w in weights.items())


def ia_precision(ranking: Sequence[str], subtopics: Mapping[str, Set[str]],
                 intent_weights: Optional[Mapping[str, float]] = None,
                 cutoff: Optional[int] = None) -> float:
    _require(subtopics)
    weights = _intent_weights(subtopics, intent_weights)
    k = len(ranking) if cutoff is None else cutoff
    if k <= 0:
        raise InvalidInputError("cutoff must be positive")
    top = ranking[:k]
    return sum(w * sum(1 for d in top if d in subtopics.get(s, ())) / k
               for s, w in weights.items())

