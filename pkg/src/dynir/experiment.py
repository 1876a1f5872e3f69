"""End-to-end multi-page ranking experiments.

``run_experiment`` ranks every topic with each requested algorithm and
discount, scores the pages against the judgments, and writes long-format
tables (one row per topic, algorithm, lambda, page and metric) that can be
plotted directly.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from . import metrics as M
from .click_model import RankBias
from .data_ingest import assemble_pool, ensemble_to_runs, parse_diversity_qrels, parse_qrels, parse_run
from .errors import ConfigError
from .metrics import Judgments
from .planner import (PlanConfig, PlanResult, dir_mps, evaluate_pages, iir_mps, iir_prp_mps,
                      prp_rank, s_mps, split_pages)
from .relevance_model import ScoreEnsemble, build_belief
from .simulator import UserModel, make_rng, simulate_clicks, synth_collection

log = logging.getLogger(__name__)

ALGORITHMS = ("PRP", "IIR-PRP-MPS", "S-MPS", "IIR-MPS", "IIR-MPS-C", "DIR-MPS", "DIR-MPS-C")
PAGE_METRICS = ("ndcg", "map", "err")
DIVERSITY_METRICS = ("alpha_ndcg", "ia_precision", "err_ia")
SESSION_METRICS = ("sdcg", "expected_utility")
ALL_METRICS = PAGE_METRICS + SESSION_METRICS + DIVERSITY_METRICS
UNAVAILABLE_METRICS = ("sap",)
BASELINES = ("PRP", "IIR-PRP-MPS")


@dataclass
class ExperimentConfig:
    """Everything one experiment run depends on.

    Either ``runs`` + ``qrels`` (file input) or ``synthetic`` (generator
    parameters: topics, docs, methods, noise, relevant_rate, subtopics) must
    be given, not both.
    """

    runs: List[str] = field(default_factory=list)
    qrels: Optional[str] = None
    diversity_qrels: Optional[str] = None
    synthetic: Optional[Dict[str, float]] = None
    algorithms: List[str] = field(default_factory=lambda: list(ALGORITHMS))
    lambdas: List[float] = field(default_factory=lambda: [0.0, 0.5, 0.8, 1.0])
    metrics: List[str] = field(default_factory=lambda: list(ALL_METRICS))
    pages: int = 2
    page_size: int = 10
    obs_mass: float = 0.95
    mode: str = "sequential"
    cross_doc_covariance: bool = True
    pool_depth: int = 100
    keep_top: int = 30
    click_user: str = "perfect"
    page2_weighting: str = "probability"
    alpha: float = 0.5
    seed: int = 0
    workers: int = 1
    output_dir: Optional[str] = None

    def validate(self):
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ConfigError(f"unknown algorithms: {sorted(unknown)}")
        if not self.lambdas:
            raise ConfigError("at least one lambda is required")
        if any(not 0.0 <= lam <= 1.0 for lam in self.lambdas):
            raise ConfigError("lambdas must lie in [0, 1]")
        bad = set(self.metrics) - set(ALL_METRICS) - set(UNAVAILABLE_METRICS)
        if bad:
            raise ConfigError(f"unknown metrics: {sorted(bad)}")
        if self.synthetic is not None and (self.runs or self.qrels or self.diversity_qrels):
            raise ConfigError("synthetic input and file input are mutually exclusive")
        if self.synthetic is not None:
            extra = set(self.synthetic) - set(SYNTH_DEFAULTS)
            if extra:
                raise ConfigError(f"unknown synthetic parameters: {sorted(extra)}")
            params = {**SYNTH_DEFAULTS, **self.synthetic}
            if params["topics"] < 1 or params["docs"] < 1 or params["methods"] < 2:
                raise ConfigError("synthetic data needs at least 1 topic, 1 document and 2 methods")
        else:
            if len(self.runs) < 2:
                raise ConfigError("file input needs at least two run files")
            if not self.qrels:
                raise ConfigError("file input needs a qrels file")
        if self.click_user not in ("perfect", "examination"):
            raise ConfigError("click_user must be 'perfect' or 'examination'")
        if self.page2_weighting not in ("probability", "uniform"):
            raise ConfigError("page2_weighting must be 'probability' or 'uniform'")
        if self.pages * self.page_size > self.keep_top:
            raise ConfigError(
                f"{self.pages} pages of {self.page_size} need more than keep_top={self.keep_top}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        try:
            PlanConfig(self.pages, self.page_size, 0.0, self.obs_mass, self.mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)


SYNTH_DEFAULTS = {"topics": 100, "docs": 30, "methods": 5, "noise": 0.3,
                  "relevant_rate": 0.3, "subtopics": 3}


@dataclass
class TopicInput:
    index: int
    topic: str
    ensemble: ScoreEnsemble
    qrel: Dict[str, int]
    subtopics: Dict[str, set]
    max_grade: int


@dataclass
class ExperimentResult:
    rows: List[tuple]
    means: List[tuple]
    significance: List[tuple]
    summary: dict

    def tables(self) -> Dict[str, str]:
        return {
            "results.tsv": _tsv(("topic", "algorithm", "lambda", "page", "metric", "value"),
                                self.rows),
            "means.tsv": _tsv(("algorithm", "lambda", "page", "metric", "mean", "n_topics"),
                              self.means),
            "significance.tsv": _tsv(("algorithm", "baseline", "lambda", "page", "metric",
                                      "mean_diff", "p_value", "significantly_better"),
                                     self.significance),
            "summary.json": json.dumps(self.summary, indent=2, sort_keys=True) + "\n",
        }

    def write(self, output_dir):
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in self.tables().items():
            (out / name).write_text(text, encoding="utf-8")


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else format(value, ".12g")
    return str(value)


def _tsv(header, rows) -> str:
    lines = ["\t".join(header)]
    lines.extend("\t".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def load_inputs(config: ExperimentConfig) -> List[TopicInput]:
    if config.synthetic is not None:
        params = {**SYNTH_DEFAULTS, **config.synthetic}
        ensembles, judgments = synth_collection(
            int(params["topics"]), int(params["docs"]), int(params["methods"]), config.seed,
            float(params["noise"]), float(params["relevant_rate"]), int(params["subtopics"]))
        runs = ensemble_to_runs(ensembles)
        topics = list(ensembles)
    else:
        runs = [parse_run(p) for p in config.runs]
        judgments = parse_qrels(config.qrels)
        if config.diversity_qrels:
            judgments = judgments.merge(parse_diversity_qrels(config.diversity_qrels))
        in_runs = set().union(*(run.topics for run in runs))
        topics = [t for t in judgments.topics if t in in_runs]
    g_max = judgments.max_grade
    inputs = []
    for k, topic in enumerate(topics):
        ens = assemble_pool(runs, topic, config.pool_depth, config.keep_top)
        pool = set(ens.doc_ids)
        qrel = {d: judgments.grade(topic, d) for d in ens.doc_ids}
        subs = {s: docs & pool for s, docs in judgments.subtopics_for(topic).items()}
        inputs.append(TopicInput(k, topic, ens, qrel, subs, g_max))
    return inputs


def _page_scores(page, item: TopicInput, config: ExperimentConfig) -> Dict[str, float]:
    out = {}
    if "ndcg" in config.metrics:
        out["ndcg"] = M.ndcg(page, item.qrel)
    if "map" in config.metrics:
        out["map"] = M.average_precision(page, item.qrel)
    if "err" in config.metrics:
        out["err"] = M.err(page, item.qrel, item.max_grade)
    if item.subtopics and any(s for s in item.subtopics.values()):
        if "alpha_ndcg" in config.metrics:
            out["alpha_ndcg"] = M.alpha_ndcg(page, item.subtopics, config.alpha)
        if "ia_precision" in config.metrics:
            out["ia_precision"] = M.ia_precision(page, item.subtopics)
        if "err_ia" in config.metrics:
            out["err_ia"] = M.err_ia(page, item.subtopics)
    return out


def _adaptive_paths(plan: PlanResult, weighting: str) -> List[Tuple[float, list]]:
    paths = plan.paths()
    if weighting == "uniform":
        return [(1.0 / len(paths), pages) for _, pages in paths]
    total = math.fsum(w for w, _ in paths)
    return [(w / total, pages) for w, pages in paths]


def _realizations(alg, item, belief, cfg, bias, config, plans, lam_index):
    """(weight, pages) outcomes of one algorithm, and its dynamic-objective value."""
    if alg == "PRP":
        pages = split_pages(prp_rank(belief, cfg.depth), cfg.page_size)
    elif alg == "IIR-PRP-MPS":
        pages = iir_prp_mps(belief, cfg)
    elif alg == "S-MPS":
        pages = s_mps(belief, cfg)
    else:
        key = "DIR" if alg.startswith("DIR") else "IIR"
        if key not in plans:
            plans[key] = dir_mps(belief, cfg, bias) if key == "DIR" else iir_mps(belief, cfg, bias)
        plan = plans[key]
        if not alg.endswith("-C"):
            return _adaptive_paths(plan, config.page2_weighting), plan.expected_utility
        user = UserModel(config.click_user,
                         int(make_rng(config.seed, item.index, lam_index,
                                      ALGORITHMS.index(alg)).integers(0, 2 ** 63 - 1)))
        judgments = Judgments({(item.topic, d): g for d, g in item.qrel.items()})
        pages = plan.realize(
            lambda page: simulate_clicks(user, page, judgments, item.topic, item.max_grade))
        return [(1.0, pages)], plan.expected_utility
    return [(1.0, pages)], evaluate_pages(belief, pages, cfg, bias)


def run_topic(item: TopicInput, config: ExperimentConfig) -> List[tuple]:
    belief = build_belief(item.ensemble, config.cross_doc_covariance)
    bias = RankBias.dcg(config.page_size)
    rows = []
    scored: Dict[tuple, Dict[str, float]] = {}
    sessions: Dict[tuple, float] = {}
    for lam_index, lam in enumerate(config.lambdas):
        cfg = PlanConfig(config.pages, config.page_size, float(lam), config.obs_mass, config.mode)
        plans: Dict[str, PlanResult] = {}
        for alg in config.algorithms:
            outcomes, utility = _realizations(alg, item, belief, cfg, bias, config, plans,
                                              lam_index)
            per_page: Dict[Tuple[int, str], float] = {}
            session = 0.0
            for weight, pages in outcomes:
                for t, page in enumerate(pages, start=1):
                    if page not in scored:
                        scored[page] = _page_scores(page, item, config)
                    for name, value in scored[page].items():
                        per_page[(t, name)] = per_page.get((t, name), 0.0) + weight * value
                key = tuple(pages)
                if key not in sessions:
                    sessions[key] = M.sdcg(pages, item.qrel)
                session += weight * sessions[key]
            for (t, name), value in sorted(per_page.items(), key=lambda kv: (kv[0][0], _metric_order(kv[0][1]))):
                rows.append((item.topic, alg, float(lam), str(t), name, value))
            if "sdcg" in config.metrics:
                rows.append((item.topic, alg, float(lam), "all", "sdcg", session))
            if "expected_utility" in config.metrics:
                rows.append((item.topic, alg, float(lam), "all", "expected_utility", utility))
    return rows


def _metric_order(name: str) -> int:
    return ALL_METRICS.index(name)


def _run_topic_star(args):
    return run_topic(*args)


def _wilcoxon(diffs: np.ndarray) -> float:
    if len(diffs) == 0 or np.all(diffs == 0):
        return 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            return float(stats.wilcoxon(diffs).pvalue)
        except ValueError:
            return 1.0


def aggregate(rows: Sequence[tuple], config: ExperimentConfig):
    by_key: Dict[tuple, Dict[str, float]] = {}
    topics = []
    for topic, alg, lam, page, metric, value in rows:
        by_key.setdefault((alg, lam, page, metric), {})[topic] = value
        if topic not in topics:
            topics.append(topic)
    order = {a: i for i, a in enumerate(config.algorithms)}
    keys = sorted(by_key, key=lambda k: (order[k[0]], k[1], k[2], _metric_order(k[3])))
    means = [(alg, lam, page, metric, math.fsum(by_key[(alg, lam, page, metric)].values())
              / len(by_key[(alg, lam, page, metric)]), len(by_key[(alg, lam, page, metric)]))
             for alg, lam, page, metric in keys]
    significance = []
    for alg, lam, page, metric in keys:
        for base in BASELINES:
            if base == alg or (base, lam, page, metric) not in by_key:
                continue
            mine, theirs = by_key[(alg, lam, page, metric)], by_key[(base, lam, page, metric)]
            shared = [t for t in topics if t in mine and t in theirs]
            diffs = np.array([mine[t] - theirs[t] for t in shared])
            p = _wilcoxon(diffs)
            mean_diff = float(diffs.mean()) if len(diffs) else 0.0
            significance.append((alg, base, lam, page, metric, mean_diff, p,
                                 int(p < 0.05 and mean_diff > 0)))
    return means, significance


def _utility_summary(means) -> dict:
    out = {}
    for alg, lam, page, metric, value, _ in means:
        if metric == "expected_utility":
            out.setdefault(format(lam, "g"), {})[alg] = value
    return out


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    config.validate()
    for name in UNAVAILABLE_METRICS:
        if name in config.metrics:
            log.warning("metric %r has no published definition to implement; reported as unavailable", name)
    inputs = load_inputs(config)
    jobs = [(item, config) for item in inputs]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_run_topic_star, jobs))
    else:
        chunks = [_run_topic_star(job) for job in jobs]
    rows = [row for chunk in chunks for row in chunk]
    means, significance = aggregate(rows, config)
    cfg = asdict(config)
    cfg.pop("output_dir")
    cfg.pop("workers")
    summary = {
        "config": cfg,
        "n_topics": len(inputs),
        "unavailable_metrics": [m for m in UNAVAILABLE_METRICS],
        "mean_expected_utility": _utility_summary(means),
        "means": [dict(zip(("algorithm", "lambda", "page", "metric", "mean", "n_topics"), m))
                  for m in means],
    }
    result = ExperimentResult(rows, means, significance, summary)
    if config.output_dir:
        result.write(config.output_dir)
    return result
