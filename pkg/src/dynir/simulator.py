"""Simulated users and synthetic score ensembles.

All randomness comes from numpy's PCG64 generator seeded through
``numpy.random.SeedSequence``, so a seed reproduces the same stream on
every platform numpy supports.
"""
from __future__ import annotations

from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .click_model import Observation, RankBias
from .errors import InvalidInputError
from .metrics import Judgments
from .relevance_model import ScoreEnsemble

USER_KINDS = ("examination", "perfect")


def make_rng(*seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(seed))))


class UserModel:
    """A simulated searcher that clicks on result pages.

    ``examination`` users click rank ``i`` with probability
    ``b_i * min(grade / max_grade, 1)``; ``perfect`` users click exactly the
    documents judged relevant. Each instance owns its generator, so it must
    not be shared between threads.
    """

    def __init__(self, kind: str = "perfect", seed: int = 0, bias: Optional[RankBias] = None):
        if kind not in USER_KINDS:
            raise InvalidInputError(f"user kind must be one of {USER_KINDS}, got {kind!r}")
        self.kind = kind
        self.seed = seed
        self.bias = bias
        self.rng = make_rng(seed)

    def reset(self):
        self.rng = make_rng(self.seed)

    def __repr__(self):
        return f"UserModel(kind={self.kind!r}, seed={self.seed})"


def simulate_clicks(user: UserModel, action: Sequence[str], judgments: Judgments,
                    topic: str, max_grade: Optional[int] = None) -> Observation:
    """Click vector for one page; ``max_grade`` defaults to the judgments' maximum."""
    grades = np.array([judgments.grade(topic, d) for d in action], dtype=float)
    if user.kind == "perfect":
        return tuple(int(g >= 1) for g in grades)
    bias = user.bias if user.bias is not None else RankBias.dcg(len(action))
    g_max = judgments.max_grade if max_grade is None else max_grade
    rel = np.minimum(grades / g_max, 1.0) if g_max > 0 else np.zeros_like(grades)
    draws = user.rng.random(len(action))
    return tuple(int(u < p) for u, p in zip(draws, bias.head(len(action)) * rel))


def synth_ensemble(n_docs: int, n_methods: int, seed: int, noise_level: float,
                   topic: str = "1", relevant_rate: float = 0.3,
                   n_subtopics: int = 0) -> Tuple[ScoreEnsemble, Judgments]:
    """Score matrix and judgments for one synthetic topic.

    Each document is relevant with probability ``relevant_rate``; every
    method scores it as its latent relevance (0 or 1) plus Gaussian noise.
    With ``n_subtopics`` each relevant document covers one subtopic, and
    every method also shifts each subtopic's documents by a method-specific
    offset. That shared offset is what makes documents of one subtopic
    co-vary across methods.
    """
    if n_docs < 1 or n_methods < 2:
        raise InvalidInputError("need at least 1 document and 2 methods")
    if noise_level < 0:
        raise InvalidInputError("noise_level must be non-negative")
    rng = make_rng(seed)
    latent = (rng.random(n_docs) < relevant_rate).astype(float)
    scores = latent[:, None] + noise_level * rng.standard_normal((n_docs, n_methods))
    doc_ids = tuple(f"T{topic}-D{i:03d}" for i in range(n_docs))
    grades = {(topic, d): int(z) for d, z in zip(doc_ids, latent)}
    subtopics: Dict[Tuple[str, str, str], int] = {}
    if n_subtopics > 0:
        label = rng.integers(0, n_subtopics, size=n_docs)
        offsets = noise_level * rng.standard_normal((n_subtopics, n_methods))
        scores = scores + latent[:, None] * offsets[label]
        for d, z, s in zip(doc_ids, latent, label):
            for k in range(n_subtopics):
                subtopics[(topic, str(k + 1), d)] = int(bool(z) and k == s)
    return ScoreEnsemble(doc_ids, scores), Judgments(grades, subtopics)


def synth_collection(n_topics: int, n_docs: int, n_methods: int, seed: int,
                     noise_level: float, relevant_rate: float = 0.3,
                     n_subtopics: int = 0) -> Tuple[Dict[str, ScoreEnsemble], Judgments]:
    """``synth_ensemble`` for topics ``1..n_topics``, each with its own derived seed."""
    ensembles = {}
    judgments = Judgments()
    for k in range(1, n_topics + 1):
        topic = str(k)
        sub_seed = int(make_rng(seed, k).integers(0, 2 ** 63 - 1))
        ensembles[topic], topic_judgments = synth_ensemble(
            n_docs, n_methods, sub_seed, noise_level, topic, relevant_rate, n_subtopics)
        judgments = judgments.merge(topic_judgments)
    return ensembles, judgments
