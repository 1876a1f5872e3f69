"""Examination-hypothesis click likelihood and observation-space enumeration.

A click on rank ``i`` happens with probability ``b_i * r_i``: the rank bias
times the document's mean relevance, independently across ranks.

Click vectors are ordered by decreasing probability. Equal probabilities
are ordered by the vector read as a binary number with rank 1 as the most
significant bit, ascending.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import CapacityError, InvalidInputError
from .relevance_model import RelevanceBelief

MAX_ENUM_LENGTH = 20

Observation = Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class RankBias:
    """Per-rank examination probabilities ``b_1 >= b_2 >= ...``, each in (0, 1]."""

    biases: np.ndarray

    def __post_init__(self):
        b = np.array(self.biases, dtype=float).reshape(-1)
        if np.any(b <= 0.0) or np.any(b > 1.0):
            raise InvalidInputError("rank biases must lie in (0, 1]")
        if np.any(np.diff(b) > 0.0):
            raise InvalidInputError("rank biases must be non-increasing")
        b.setflags(write=False)
        object.__setattr__(self, "biases", b)

    @classmethod
    def dcg(cls, length: int) -> "RankBias":
        """``b_i = 1 / log2(i + 1)``, the DCG position discount."""
        return cls(1.0 / np.log2(np.arange(2, length + 2)))

    def __len__(self):
        return len(self.biases)

    def head(self, length: int) -> np.ndarray:
        if length > len(self.biases):
            raise InvalidInputError(
                f"ranking of length {length} exceeds the {len(self.biases)} configured rank biases")
        return self.biases[:length]


def click_probabilities(action: Sequence[str], belief: RelevanceBelief,
                        bias: RankBias) -> np.ndarray:
    return bias.head(len(action)) * belief.mean[belief.index(action)]


def observation_probability(obs: Sequence[int], q: Sequence[float]) -> float:
    p = 1.0
    for o, qk in zip(obs, q):
        p *= qk if o else 1.0 - qk
    return p


def click_likelihood(obs: Sequence[int], action: Sequence[str], belief: RelevanceBelief,
                     bias: RankBias) -> float:
    """Probability of the click vector ``obs`` on ranking ``action``."""
    if len(obs) != len(action):
        raise InvalidInputError(
            f"observation has {len(obs)} entries for a ranking of {len(action)}")
    if any(o not in (0, 1) for o in obs):
        raise InvalidInputError("observations must be binary")
    return observation_probability(obs, click_probabilities(action, belief, bias))


def _as_int(obs: Sequence[int]) -> int:
    value = 0
    for o in obs:
        value = (value << 1) | int(o)
    return value


def all_observations(q: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Every click vector with its probability, sorted by the canonical order."""
    m = len(q)
    if m > MAX_ENUM_LENGTH:
        raise CapacityError(f"cannot enumerate 2^{m} observations (limit 2^{MAX_ENUM_LENGTH})")
    codes = np.arange(2 ** m)
    shifts = np.arange(m - 1, -1, -1)
    clicks = ((codes[:, None] >> shifts) & 1).astype(np.int8)
    probs = np.ones(len(codes))
    for k in range(m):
        probs *= np.where(clicks[:, k] == 1, q[k], 1.0 - q[k])
    order = np.lexsort((codes, -probs))
    return clicks[order], probs[order]


def _cut(probs: Sequence[float], mass: float) -> int:
    total = 0.0
    for n, p in enumerate(probs, start=1):
        total += p
        if total >= mass:
            return n
    return len(probs)


def _best_first(q: Sequence[float], mass: float):
    m = len(q)
    q = [float(x) for x in q]
    mode = [1 if qk > 0.5 else 0 for qk in q]
    hi = [max(qk, 1.0 - qk) for qk in q]
    ratio = [(1.0 - h) / h for h in hi]
    # Flippable ranks ordered by how little a flip costs.
    order = sorted(range(m), key=lambda k: (-ratio[k], k))

    def expand(flips):
        o = list(mode)
        for j in flips:
            o[order[j]] ^= 1
        o = tuple(o)
        return (-observation_probability(o, q), _as_int(o), flips, o)

    heap = [expand(())]
    popped = []
    total = 0.0

    def pop():
        item = heapq.heappop(heap)
        popped.append(item)
        flips = item[2]
        last = flips[-1] if flips else -1
        if last + 1 < m:
            heapq.heappush(heap, expand(flips + (last + 1,)))
            if flips:
                heapq.heappush(heap, expand(flips[:-1] + (last + 1,)))
        return -item[0]

    while heap and total < mass:
        total += pop()
    # Rounding can leave a vector a few ulps above its parent, so also pull in
    # everything within a relative 1e-12 of the cut; the final sort then
    # matches sorting the full space exactly, ties included.
    if popped:
        floor = -popped[-1][0] * (1.0 - 1e-12)
        while heap and -heap[0][0] >= floor:
            pop()
    popped.sort(key=lambda item: (item[0], item[1]))
    kept = popped[:_cut([-item[0] for item in popped], mass)]
    return [item[3] for item in kept], [-item[0] for item in kept]


def truncated_observations(q: Sequence[float], mass: float) -> Tuple[np.ndarray, np.ndarray]:
    """Most probable click vectors for click probabilities ``q`` covering ``mass``.

    Returns the shortest prefix of the canonical order whose cumulative
    probability reaches ``mass``, as ``(clicks, probs)`` arrays. The
    probabilities are the raw likelihoods and are not renormalized.
    """
    if not 0.0 < mass <= 1.0:
        raise InvalidInputError(f"observation mass must lie in (0, 1], got {mass}")
    m = len(q)
    if m > MAX_ENUM_LENGTH:
        raise CapacityError(f"cannot enumerate 2^{m} observations (limit 2^{MAX_ENUM_LENGTH})")
    if mass >= 1.0:
        return all_observations(q)
    clicks, probs = _best_first(q, mass)
    return np.array(clicks, dtype=np.int8).reshape(len(clicks), m), np.array(probs)


def enumerate_truncated(action: Sequence[str], belief: RelevanceBelief, bias: RankBias,
                        mass: float = 0.95) -> List[Tuple[Observation, float]]:
    clicks, probs = truncated_observations(click_probabilities(action, belief, bias), mass)
    return [(tuple(int(o) for o in row), float(p)) for row, p in zip(clicks, probs)]


def kept_fraction(q: Sequence[float], mass: float = 0.95) -> float:
    """Share of the 2^M click vectors needed to reach ``mass``."""
    clicks, _ = truncated_observations(q, mass)
    return len(clicks) / math.pow(2, len(q))
