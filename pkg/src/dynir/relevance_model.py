"""Gaussian beliefs over document relevance.

A belief is the pair (mean vector, covariance matrix) over an ordered list
of document ids. Beliefs are built from the scores several retrieval
methods assign to the same documents, and are conditioned on click
observations with the usual partitioned-Gaussian identities.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .errors import InsufficientSamplesError, InvalidInputError

RIDGE = 1e-8
PSD_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ScoreEnsemble:
    """Raw scores, one row per document and one column per retrieval method."""

    doc_ids: tuple
    scores: np.ndarray

    def __post_init__(self):
        scores = np.array(self.scores, dtype=float)
        if scores.ndim != 2:
            raise InvalidInputError("scores must be a 2-d matrix (documents x methods)")
        if scores.shape[0] < 1 or scores.shape[1] < 1:
            raise InvalidInputError("ensemble needs at least one document and one method")
        if len(self.doc_ids) != scores.shape[0]:
            raise InvalidInputError(
                f"{len(self.doc_ids)} doc ids for {scores.shape[0]} score rows")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise InvalidInputError("duplicate document ids in ensemble")
        if not np.all(np.isfinite(scores)):
            raise InvalidInputError("ensemble contains non-finite scores")
        scores.setflags(write=False)
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))
        object.__setattr__(self, "scores", scores)

    @property
    def n_docs(self) -> int:
        return self.scores.shape[0]

    @property
    def n_methods(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True, eq=False)
class RelevanceBelief:
    """Multivariate Gaussian belief N(mean, cov) over document relevance."""

    doc_ids: tuple
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        n = len(self.doc_ids)
        if mean.shape != (n,) or cov.shape != (n, n):
            raise InvalidInputError(
                f"belief dimensions disagree: {n} ids, mean {mean.shape}, cov {cov.shape}")
        if len(set(self.doc_ids)) != n:
            raise InvalidInputError("duplicate document ids in belief")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidInputError("belief contains non-finite values")
        if np.any(mean < 0.0) or np.any(mean > 1.0):
            raise InvalidInputError("belief means must lie in [0, 1]")
        if n:
            if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
                raise InvalidInputError("covariance is not symmetric")
            if np.any(np.diag(cov) < 0.0):
                raise InvalidInputError("covariance has a negative diagonal entry")
            if np.linalg.eigvalsh(cov)[0] < -PSD_TOL:
                raise InvalidInputError("covariance is not positive semi-definite")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def __len__(self):
        return len(self.doc_ids)

    @property
    def var(self) -> np.ndarray:
        return np.diag(self.cov)

    def index(self, docs: Sequence[str]) -> np.ndarray:
        lookup = {d: i for i, d in enumerate(self.doc_ids)}
        try:
            return np.array([lookup[d] for d in docs], dtype=int)
        except KeyError as exc:
            raise InvalidInputError(f"document {exc.args[0]!r} not in belief") from None

    def subset(self, docs: Sequence[str]) -> "RelevanceBelief":
        idx = self.index(docs)
        return RelevanceBelief(tuple(docs), self.mean[idx], self.cov[np.ix_(idx, idx)])

    def with_diagonal_cov(self) -> "RelevanceBelief":
        return RelevanceBelief(self.doc_ids, self.mean, np.diag(self.var))


def nearest_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetrize and clip negative eigenvalues (Frobenius-nearest PSD matrix)."""
    sym = 0.5 * (matrix + matrix.T)
    if sym.size == 0:
        return sym
    vals, vecs = np.linalg.eigh(sym)
    if vals[0] >= 0.0:
        return sym
    fixed = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    return 0.5 * (fixed + fixed.T)


def min_max_normalize(ensemble: ScoreEnsemble) -> ScoreEnsemble:
    """Map every method's scores linearly onto [0, 1].

    A column whose scores are all equal carries no ranking information and
    is mapped to 0.5 rather than 0.
    """
    s = ensemble.scores
    lo = s.min(axis=0)
    hi = s.max(axis=0)
    span = hi - lo
    out = np.full_like(s, 0.5)
    live = span > 0
    out[:, live] = (s[:, live] - lo[live]) / span[live]
    return ScoreEnsemble(ensemble.doc_ids, out)


def build_belief(ensemble: ScoreEnsemble, cross_doc_covariance: bool = True) -> RelevanceBelief:
    """Belief whose mean and covariance are the per-document sample moments.

    Each document's methods are treated as samples of its relevance. With
    ``cross_doc_covariance`` the off-diagonal entries are the sample
    covariances between documents across methods (methods that score two
    documents alike make them positively correlated); otherwise only the
    variances are kept. Variances use the unbiased (n - 1) divisor.
    """
    if ensemble.n_methods < 2:
        raise InsufficientSamplesError(
            f"need at least 2 retrieval methods to estimate variance, got {ensemble.n_methods}")
    s = ensemble.scores
    mean = np.clip(s.mean(axis=1), 0.0, 1.0)
    centered = s - s.mean(axis=1, keepdims=True)
    if cross_doc_covariance:
        cov = centered @ centered.T / (ensemble.n_methods - 1)
        cov = nearest_psd(cov)
    else:
        cov = np.diag((centered ** 2).sum(axis=1) / (ensemble.n_methods - 1))
    return RelevanceBelief(ensemble.doc_ids, mean, cov)


def regression_terms(cov: np.ndarray, ranked: np.ndarray, rest: np.ndarray):
    """Gain matrix and residual covariance for conditioning ``rest`` on ``ranked``.

    Returns ``(K, post_cov)`` with ``K = S_ra S_aa^-1`` and
    ``post_cov = S_rr - K S_ar``; the posterior mean for an observation
    ``o`` is then ``mean_r + K (o - mean_a)``. A numerically singular
    ``S_aa`` (smallest eigenvalue below the ridge) gets the ridge added to
    its diagonal.
    """
    s_aa = cov[np.ix_(ranked, ranked)]
    s_ra = cov[np.ix_(rest, ranked)]
    s_rr = cov[np.ix_(rest, rest)]
    if len(ranked) == 0 or len(rest) == 0:
        return np.zeros((len(rest), len(ranked))), s_rr.copy()
    if np.linalg.eigvalsh(s_aa)[0] < RIDGE:
        s_aa = s_aa + RIDGE * np.eye(len(ranked))
    gain = np.linalg.solve(s_aa, s_ra.T).T
    post = nearest_psd(s_rr - gain @ s_ra.T)
    np.fill_diagonal(post, np.clip(np.diag(post), 0.0, None))
    return gain, post


def condition_on_observation(belief: RelevanceBelief, action: Sequence[str],
                             obs: Sequence[int]) -> RelevanceBelief:
    """Posterior belief over the documents not shown in ``action``.

    The shown documents are consumed: they do not appear in the result.
    Posterior means are clamped to [0, 1] after the full update.
    """
    action = tuple(action)
    obs = np.asarray(obs, dtype=float).reshape(-1)
    if len(action) != len(obs):
        raise InvalidInputError(
            f"observation has {len(obs)} entries for a ranking of {len(action)}")
    if len(set(action)) != len(action):
        raise InvalidInputError("ranking contains duplicate documents")
    ranked = belief.index(action)
    shown = set(action)
    rest_ids = tuple(d for d in belief.doc_ids if d not in shown)
    rest = belief.index(rest_ids)
    gain, post_cov = regression_terms(belief.cov, ranked, rest)
    post_mean = belief.mean[rest] + gain @ (obs - belief.mean[ranked])
    return RelevanceBelief(rest_ids, np.clip(post_mean, 0.0, 1.0), post_cov)


def condition_on_observations(belief: RelevanceBelief, action: Sequence[str],
                              observations) -> List[RelevanceBelief]:
    """``condition_on_observation`` for many click vectors on the same ranking.

    The residual covariance does not depend on the observation, so it is
    computed and validated once and shared by every posterior.
    """
    obs = np.asarray(observations, dtype=float)
    if obs.ndim != 2 or obs.shape[0] == 0:
        raise InvalidInputError("observations must be a non-empty 2-d array")
    first = condition_on_observation(belief, action, obs[0])
    ranked = belief.index(tuple(action))
    rest = belief.index(first.doc_ids)
    gain, _ = regression_terms(belief.cov, ranked, rest)
    out = [first]
    for o in obs[1:]:
        row = np.clip(belief.mean[rest] + gain @ (o - belief.mean[ranked]), 0.0, 1.0)
        row.setflags(write=False)
        post = object.__new__(RelevanceBelief)
        object.__setattr__(post, "doc_ids", first.doc_ids)
        object.__setattr__(post, "mean", row)
        object.__setattr__(post, "cov", first.cov)
        out.append(post)
    return out
