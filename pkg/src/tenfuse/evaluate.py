"""Retrieval and verification metrics over fused features.

Ranking always uses Euclidean distance with ties broken by ascending
gallery index, so results are deterministic.  Verification scores are
negative distances (larger means more similar).  All functions are pure
and independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvalError


@dataclass(frozen=True)
class EvalReport:
    """Retrieval/verification summary for one query/gallery split."""

    cmc: np.ndarray
    map: float
    roc: list[tuple[float, float]]
    genuine_hist: tuple[np.ndarray, np.ndarray]
    imposter_hist: tuple[np.ndarray, np.ndarray]


def _check_retrieval_inputs(query_labels, gallery_labels):
    q = np.asarray(query_labels)
    g = np.asarray(gallery_labels)
    if q.size == 0 or g.size == 0:
        raise EvalError("query and gallery must be nonempty")
    missing = sorted(set(q.tolist()) - set(g.tolist()))
    if missing:
        raise EvalError(f"query labels absent from gallery: {missing}")
    return q, g


def _distance_matrix(query_features, gallery_features) -> np.ndarray:
    qf = np.asarray(query_features, dtype=np.float64)
    gf = np.asarray(gallery_features, dtype=np.float64)
    diff = qf[:, None, :] - gf[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def _rankings(query_features, gallery_features) -> np.ndarray:
    dist = _distance_matrix(query_features, gallery_features)
    # stable sort on distances == tie-break by ascending gallery index
    return np.argsort(dist, axis=1, kind="stable")


def cmc(
    query_features,
    query_labels,
    gallery_features,
    gallery_labels,
    max_rank: int,
) -> np.ndarray:
    """Rank-k retrieval accuracy for k = 1..max_rank."""
    q, g = _check_retrieval_inputs(query_labels, gallery_labels)
    if max_rank < 1:
        raise EvalError(f"max_rank must be >= 1, got {max_rank}")
    order = _rankings(query_features, gallery_features)
    max_rank = min(max_rank, order.shape[1])
    hits = np.zeros(max_rank)
    for qi in range(q.shape[0]):
        ranked_labels = g[order[qi]]
        first = int(np.flatnonzero(ranked_labels == q[qi])[0])
        if first < max_rank:
            hits[first:] += 1.0
    return hits / q.shape[0]


def mean_average_precision(
    query_features, query_labels, gallery_features, gallery_labels
) -> float:
    """Mean over queries of average precision along the full ranking."""
    q, g = _check_retrieval_inputs(query_labels, gallery_labels)
    order = _rankings(query_features, gallery_features)
    aps = []
    for qi in range(q.shape[0]):
        rel = (g[order[qi]] == q[qi]).astype(np.float64)
        hits = np.cumsum(rel)
        precision = hits / np.arange(1, rel.shape[0] + 1)
        aps.append(float(np.sum(precision * rel) / rel.sum()))
    return float(np.mean(aps))


def roc(genuine_scores, imposter_scores) -> list[tuple[float, float]]:
    """Stepwise ROC over every distinct score threshold.

    A pair is accepted when its score is >= the threshold; thresholds sweep
    from above the maximum (0, 0) down to the minimum (1, 1).
    """
    gen = np.asarray(genuine_scores, dtype=np.float64)
    imp = np.asarray(imposter_scores, dtype=np.float64)
    if gen.size == 0 or imp.size == 0:
        raise EvalError("both score lists must be nonempty")
    thresholds = np.unique(np.concatenate([gen, imp]))[::-1]
    points = [(0.0, 0.0)]
    for t in thresholds:
        fpr = float(np.sum(imp >= t)) / imp.size
        tpr = float(np.sum(gen >= t)) / gen.size
        points.append((fpr, tpr))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return points


def score_histogram(scores, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Counts over uniform bins spanning [min, max]; last bin right-closed."""
    scores = np.asarray(scores, dtype=np.float64)
    if bins < 1:
        raise EvalError(f"bins must be >= 1, got {bins}")
    if scores.size == 0:
        raise EvalError("scores must be nonempty")
    lo, hi = float(scores.min()), float(scores.max())
    edges = np.linspace(lo, hi, bins + 1)
    if lo == hi:
        counts = np.zeros(bins, dtype=np.int64)
        counts[0] = scores.size
        return counts, edges
    pos = np.floor((scores - lo) / (hi - lo) * bins).astype(np.int64)
    pos = np.clip(pos, 0, bins - 1)
    counts = np.bincount(pos, minlength=bins).astype(np.int64)
    return counts, edges


def verification_scores(
    query_features, query_labels, gallery_features, gallery_labels
) -> tuple[np.ndarray, np.ndarray]:
    """Negative distances of every query/gallery pair, split by label match."""
    q, g = _check_retrieval_inputs(query_labels, gallery_labels)
    dist = _distance_matrix(query_features, gallery_features)
    scores = -dist
    same = q[:, None] == g[None, :]
    return scores[same].ravel(), scores[~same].ravel()


def ranked_lists(
    query_features, query_labels, gallery_features, gallery_labels, top_k: int = 10
) -> list[list[tuple[int, int]]]:
    """Per query, the top-k gallery entries as (gallery index, label)."""
    q, g = _check_retrieval_inputs(query_labels, gallery_labels)
    order = _rankings(query_features, gallery_features)
    top_k = min(top_k, order.shape[1])
    return [
        [(int(gi), int(g[gi])) for gi in order[qi, :top_k]]
        for qi in range(q.shape[0])
    ]


def evaluate_split(
    query_features,
    query_labels,
    gallery_features,
    gallery_labels,
    max_rank: int = 20,
    hist_bins: int = 50,
) -> EvalReport:
    """Full retrieval + verification report for one split."""
    cmc_curve = cmc(query_features, query_labels, gallery_features, gallery_labels, max_rank)
    mapv = mean_average_precision(
        query_features, query_labels, gallery_features, gallery_labels
    )
    gen, imp = verification_scores(
        query_features, query_labels, gallery_features, gallery_labels
    )
    return EvalReport(
        cmc=cmc_curve,
        map=mapv,
        roc=roc(gen, imp),
        genuine_hist=score_histogram(gen, hist_bins),
        imposter_hist=score_histogram(imp, hist_bins),
    )
