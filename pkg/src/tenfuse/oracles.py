"""Brute-force reference implementations for test verification.

Everything here is written with plain index loops and shares no code with
the production modules, so agreement between the two is meaningful.  The
oracles only accept small instances (tensor extents <= 8, galleries <= 10
items) and are deliberately slow.
"""

from __future__ import annotations

import math

import numpy as np

_MAX_EXTENT = 8
_MAX_GALLERY = 10


def _check_small(*dims):
    for d in dims:
        if d > _MAX_EXTENT:
            raise AssertionError(f"oracle limited to extents <= {_MAX_EXTENT}, got {d}")


def oracle_mode_product(t, m, k: int) -> np.ndarray:
    """Entrywise mode-k contraction: nested loops, no layout tricks."""
    t = np.asarray(t, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    d1, d2, d3 = t.shape
    _check_small(d1, d2, d3, m.shape[0])
    rows = m.shape[0]
    dims = [d1, d2, d3]
    dims[k - 1] = rows
    out = np.zeros(dims)
    for i1 in range(dims[0]):
        for i2 in range(dims[1]):
            for i3 in range(dims[2]):
                idx = [i1, i2, i3]
                acc = 0.0
                for ik in range(t.shape[k - 1]):
                    src = list(idx)
                    src[k - 1] = ik
                    acc += t[src[0], src[1], src[2]] * m[idx[k - 1], ik]
                out[i1, i2, i3] = acc
    return out


def oracle_tucker_reconstruct(g, a1, a2, a3) -> np.ndarray:
    """Entrywise multilinear product of the core with all three factors."""
    g = np.asarray(g, dtype=np.float64)
    step1 = oracle_mode_product(g, np.asarray(a1, dtype=np.float64), 1)
    step2 = oracle_mode_product(step1, np.asarray(a2, dtype=np.float64), 2)
    return oracle_mode_product(step2, np.asarray(a3, dtype=np.float64), 3)


def oracle_kronecker(a, b) -> np.ndarray:
    """Blockwise Kronecker product straight from the definition."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, n = a.shape
    p, q = b.shape
    out = np.zeros((m * p, n * q))
    for i in range(m):
        for j in range(n):
            for k in range(p):
                for l in range(q):
                    out[i * p + k, j * q + l] = a[i, j] * b[k, l]
    return out


def oracle_symmetric_eigenvalues(a) -> list[float]:
    """Eigenvalues of a symmetric matrix (n <= 4) via the characteristic
    polynomial, assembled with the Faddeev-LeVerrier recurrence."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    assert n <= 4 and a.shape == (n, n), "oracle limited to matrices <= 4x4"
    # coefficients of lambda^n + c[1] lambda^(n-1) + ... + c[n]
    coeffs = [1.0]
    mk = np.zeros_like(a)
    for k in range(1, n + 1):
        mk = a @ mk + coeffs[-1] * np.eye(n)
        prod = a @ mk
        coeffs.append(-np.trace(prod) / k)
    roots = np.roots(coeffs)
    return sorted((float(r.real) for r in roots), reverse=True)


def oracle_finite_diff(loss_fn, params: dict[str, np.ndarray], h: float = 1e-5):
    """Central finite differences of ``loss_fn(params)`` per parameter entry."""
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr, dtype=np.float64)
        flat = g.reshape(-1)
        base = arr.astype(np.float64).copy()
        for i in range(base.size):
            bumped = {k: v for k, v in params.items()}
            plus = base.copy().reshape(-1)
            plus[i] += h
            bumped[name] = plus.reshape(arr.shape)
            up = loss_fn(bumped)
            minus = base.copy().reshape(-1)
            minus[i] -= h
            bumped[name] = minus.reshape(arr.shape)
            down = loss_fn(bumped)
            flat[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def oracle_retrieval(query_features, gallery_features) -> list[list[int]]:
    """Exhaustive per-query ranking by Euclidean distance.

    Ties keep ascending gallery order (stable insertion sort on index).
    """
    queries = [np.asarray(qf, dtype=np.float64) for qf in query_features]
    gallery = [np.asarray(gf, dtype=np.float64) for gf in gallery_features]
    assert len(gallery) <= _MAX_GALLERY, f"oracle limited to <= {_MAX_GALLERY} gallery items"
    rankings = []
    for qf in queries:
        dists = []
        for gi, gf in enumerate(gallery):
            acc = 0.0
            for a, b in zip(qf, gf):
                acc += (a - b) ** 2
            dists.append((math.sqrt(acc), gi))
        order = [gi for _, gi in sorted(dists, key=lambda t: (t[0], t[1]))]
        rankings.append(order)
    return rankings


def oracle_cmc(rankings, query_labels, gallery_labels, max_rank: int) -> list[float]:
    """Rank-k accuracy from exhaustive rankings."""
    hits = [0] * max_rank
    for order, ql in zip(rankings, query_labels):
        first = None
        for pos, gi in enumerate(order):
            if gallery_labels[gi] == ql:
                first = pos
                break
        for k in range(max_rank):
            if first is not None and first <= k:
                hits[k] += 1
    return [h / len(rankings) for h in hits]


def oracle_map(rankings, query_labels, gallery_labels) -> float:
    """Mean average precision from exhaustive rankings."""
    aps = []
    for order, ql in zip(rankings, query_labels):
        found = 0
        precisions = []
        for pos, gi in enumerate(order, start=1):
            if gallery_labels[gi] == ql:
                found += 1
                precisions.append(found / pos)
        aps.append(sum(precisions) / found)
    return sum(aps) / len(aps)


def oracle_roc(genuine_scores, imposter_scores) -> list[tuple[float, float]]:
    """Threshold sweep over every distinct score, counted with loops."""
    thresholds = sorted(set(list(genuine_scores) + list(imposter_scores)), reverse=True)
    points = [(0.0, 0.0)]
    for t in thresholds:
        fp = sum(1 for s in imposter_scores if s >= t)
        tp = sum(1 for s in genuine_scores if s >= t)
        points.append((fp / len(imposter_scores), tp / len(genuine_scores)))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return points
