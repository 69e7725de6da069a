"""Utterance-level ranking score and correlation statistics."""
from dataclasses import dataclass

import numpy as np

from .registry import RANKING_SCORE, MetricVector


def average_ranks(values):
    """1-based ranks, ascending, ties sharing their average rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    _, first, counts = np.unique(v[order], return_index=True, return_counts=True)
    ranks = np.empty(len(v))
    ranks[order] = np.repeat(first + (counts + 1) / 2.0, counts)
    return ranks


@dataclass
class RankGroup:
    source_id: str
    rows: dict  # utterance id -> MetricVector

    def __post_init__(self):
        if not self.rows:
            raise ValueError(f"rank group {self.source_id!r} is empty")


def rankable_metrics(group, registry):
    """Weighted metrics present for every row of the group."""
    out = []
    for spec in registry:
        if spec.name == RANKING_SCORE or spec.weight <= 0:
            continue
        if all(spec.name in vec for vec in group.rows.values()):
            out.append(spec)
    return out


def rank_score(group, registry):
    """Weighted mean rank per utterance divided by group size; lower is better.

    A metric missing for any row is dropped for the whole group so that all
    rows are ranked on the same metrics.
    """
    specs = rankable_metrics(group, registry)
    if not specs:
        raise ValueError(f"no rankable metric for group {group.source_id!r}")
    ids = list(group.rows)
    m = len(ids)
    total = np.zeros(m)
    wsum = 0.0
    for spec in specs:
        vals = np.array([group.rows[u][spec.name] for u in ids])
        # rank 1 is best
        total += spec.weight * average_ranks(vals if spec.alpha > 0 else -vals)
        wsum += spec.weight
    scores = total / (wsum * m)
    return {u: float(s) for u, s in zip(ids, scores)}


def rank_groups(vectors, source_of, registry):
    """Rank scores for many utterances grouped by source id."""
    groups = {}
    for utt, vec in vectors.items():
        groups.setdefault(source_of[utt], {})[utt] = vec
    out = {}
    for src in sorted(groups):
        out.update(rank_score(RankGroup(src, groups[src]), registry))
    return out


def with_rank_scores(vectors, source_of, registry):
    """Copies of ``vectors`` with the RankingScore entry filled in."""
    scores = rank_groups(vectors, source_of, registry)
    return {u: MetricVector(registry, {**v.values, RANKING_SCORE: scores[u]}) for u, v in vectors.items()}


def _check(xs, ys):
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-D and equally long")
    if len(x) < 2:
        raise ValueError("need at least two points")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("correlation of a constant vector is undefined")
    return x, y


def pearson(xs, ys):
    x, y = _check(xs, ys)
    x = x - x.mean()
    y = y - y.mean()
    return float(np.clip((x @ y) / np.sqrt((x @ x) * (y @ y)), -1.0, 1.0))


def spearman(xs, ys):
    x, y = _check(xs, ys)
    return pearson(average_ranks(x), average_ranks(y))
