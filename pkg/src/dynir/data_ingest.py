"""Readers and writers for run files and relevance judgments, and per-topic pooling.

Formats (whitespace separated, UTF-8, LF or CRLF line endings):

    run file          topic Q0 doc_id rank score tag
    qrels             topic iteration doc_id grade
    diversity qrels   topic subtopic doc_id grade
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from .errors import EmptyPoolError, InvalidInputError, ParseError
from .metrics import Judgments
from .relevance_model import ScoreEnsemble, min_max_normalize

PathLike = Union[str, Path]


class RunRecord(NamedTuple):
    topic: str
    doc_id: str
    rank: int
    score: float
    tag: str


@dataclass
class RunFile:
    records: List[RunRecord] = field(default_factory=list)
    name: str = ""

    def topic_records(self, topic: str) -> List[RunRecord]:
        return [r for r in self.records if r.topic == topic]

    @property
    def topics(self) -> List[str]:
        return sorted({r.topic for r in self.records})


def _lines(path: PathLike) -> Iterable[Tuple[int, List[str]]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(path, 0, f"cannot read file: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if fields:
            yield lineno, fields


def parse_run(path: PathLike) -> RunFile:
    run = RunFile(name=Path(path).stem)
    seen = set()
    for lineno, f in _lines(path):
        if len(f) != 6:
            raise ParseError(path, lineno, f"expected 6 fields, found {len(f)}")
        topic, _, doc, rank, score, tag = f
        try:
            rank_value, score_value = int(rank), float(score)
        except ValueError:
            raise ParseError(path, lineno, "rank must be an integer and score a number") from None
        if not math.isfinite(score_value):
            raise ParseError(path, lineno, f"non-finite score {score!r}")
        if (topic, doc) in seen:
            raise ParseError(path, lineno, f"document {doc} listed twice for topic {topic}")
        seen.add((topic, doc))
        run.records.append(RunRecord(topic, doc, rank_value, score_value, tag))
    return run


def write_run(run: RunFile, path: PathLike):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in run.records:
            fh.write(f"{r.topic} Q0 {r.doc_id} {r.rank} {r.score!r} {r.tag}\n")


def _parse_grades(path: PathLike):
    out = {}
    for lineno, f in _lines(path):
        if len(f) != 4:
            raise ParseError(path, lineno, f"expected 4 fields, found {len(f)}")
        try:
            grade = int(f[3])
        except ValueError:
            raise ParseError(path, lineno, f"grade {f[3]!r} is not an integer") from None
        key = (f[0], f[1], f[2])
        if key in out:
            warnings.warn(f"{path}:{lineno}: duplicate judgment for {key}; keeping the last",
                          stacklevel=3)
        out[key] = max(grade, 0)
    return out


def parse_qrels(path: PathLike) -> Judgments:
    grades: Dict[Tuple[str, str], int] = {}
    for (topic, _, doc), grade in _parse_grades(path).items():
        if (topic, doc) in grades:
            warnings.warn(f"{path}: duplicate judgment for ({topic}, {doc}); keeping the last",
                          stacklevel=2)
        grades[(topic, doc)] = grade
    return Judgments(grades=grades)


def parse_diversity_qrels(path: PathLike) -> Judgments:
    raw = _parse_grades(path)
    return Judgments(subtopics={key: int(g > 0) for key, g in raw.items()})


def write_qrels(judgments: Judgments, path: PathLike):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (topic, doc), g in judgments.grades.items():
            fh.write(f"{topic} 0 {doc} {g}\n")


def write_diversity_qrels(judgments: Judgments, path: PathLike):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (topic, sub, doc), g in judgments.subtopics.items():
            fh.write(f"{topic} {sub} {doc} {g}\n")


def assemble_pool(runs: Sequence[RunFile], topic: str, pool_depth: int = 100,
                  keep_top: int = 30) -> ScoreEnsemble:
    """Normalized score ensemble for the ``keep_top`` best documents of a topic.

    The pool is the union of each run's ``pool_depth`` best-ranked documents.
    A pooled document absent from a run gets that run's lowest score for
    the topic. Scores are min-max normalized per run over the whole pool,
    then documents are ranked by mean normalized score (ties by id) and the
    top ``keep_top`` are kept, listed in id order.
    """
    if len(runs) < 2:
        raise InvalidInputError("pooling needs at least two runs")
    per_run = [sorted(run.topic_records(topic), key=lambda r: (r.rank, r.doc_id)) for run in runs]
    if not any(per_run):
        raise EmptyPoolError(f"topic {topic} appears in none of the runs")
    pool = sorted({r.doc_id for records in per_run for r in records[:pool_depth]})
    columns = []
    for records in per_run:
        scores = {r.doc_id: r.score for r in records}
        floor = min(scores.values()) if scores else 0.0
        columns.append([scores.get(d, floor) for d in pool])
    normalized = min_max_normalize(ScoreEnsemble(tuple(pool), np.array(columns).T))
    means = normalized.scores.mean(axis=1)
    ranked = sorted(range(len(pool)), key=lambda i: (-means[i], pool[i]))[:keep_top]
    kept = sorted(ranked, key=lambda i: pool[i])
    return ScoreEnsemble(tuple(pool[i] for i in kept), normalized.scores[kept])


def ensemble_to_runs(ensembles: Dict[str, ScoreEnsemble], prefix: str = "method") -> List[RunFile]:
    """One run per score column, each ranking every topic's documents by that column."""
    n_methods = {e.n_methods for e in ensembles.values()}
    if len(n_methods) != 1:
        raise InvalidInputError("all topics must have the same number of methods")
    runs = []
    for j in range(n_methods.pop()):
        tag = f"{prefix}{j + 1}"
        run = RunFile(name=tag)
        for topic, ens in ensembles.items():
            col = ens.scores[:, j]
            order = sorted(range(ens.n_docs), key=lambda i: (-col[i], ens.doc_ids[i]))
            for rank, i in enumerate(order, start=1):
                run.records.append(RunRecord(topic, ens.doc_ids[i], rank, float(col[i]), tag))
        runs.append(run)
    return runs
