"""Thin SVD via one-sided Jacobi rotations.

Cyclic sweeps orthogonalize the columns of the working matrix; rotations
accumulate into the right factor.  A pair is rotated while the off-diagonal
Gram entry exceeds ``1e-14`` relative to the product of the column norms,
so the criterion is invariant to rescaling the input.  Results are made
sign-deterministic by forcing the first non-negligible entry of each left
singular vector to be positive.

Pure functions over immutable inputs; safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, NumericError

_REL_TOL = 1e-14
_MAX_SWEEPS = 60


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``input = u @ diag(s) @ v.T`` with r = min(rows, cols).

    ``u`` is rows x r, ``v`` is cols x r, both with orthonormal columns;
    ``s`` is descending and nonnegative.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def _orthonormal_fill(basis: np.ndarray, col: int) -> np.ndarray:
    """Deterministic unit vector orthogonal to the other columns of basis."""
    m = basis.shape[0]
    for i in range(m):
        cand = np.zeros(m)
        cand[i] = 1.0
        for j in range(basis.shape[1]):
            if j == col:
                continue
            cand -= (basis[:, j] @ cand) * basis[:, j]
        norm = np.linalg.norm(cand)
        if norm > 0.5:
            return cand / norm
    raise NumericError("could not complete orthonormal basis")


def _jacobi(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-sided Jacobi on a matrix with rows >= cols.

    Returns (u, s, v), s unsorted, columns of zero norm left as zeros in u.
    """
    work = a.copy()
    n = work.shape[1]
    v = np.eye(n)

    for _ in range(_MAX_SWEEPS):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ci = work[:, i]
                cj = work[:, j]
                gii = ci @ ci
                gjj = cj @ cj
                gij = ci @ cj
                if abs(gij) <= _REL_TOL * np.sqrt(gii * gjj):
                    continue
                rotated = True
                zeta = (gjj - gii) / (2.0 * gij)
                t = np.sign(zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                if zeta == 0.0:
                    t = 1.0
                cs = 1.0 / np.hypot(1.0, t)
                sn = cs * t
                work[:, i], work[:, j] = cs * ci - sn * cj, sn * ci + cs * cj
                v[:, i], v[:, j] = cs * v[:, i] - sn * v[:, j], sn * v[:, i] + cs * v[:, j]
        if not rotated:
            break
    else:
        norms = np.linalg.norm(work, axis=0)
        gram = work.T @ work
        denom = np.outer(norms, norms)
        denom[denom == 0] = 1.0
        off = np.abs(gram / denom)
        np.fill_diagonal(off, 0.0)
        raise ConvergenceError(
            f"Jacobi SVD did not converge in {_MAX_SWEEPS} sweeps",
            off_diagonal=float(off.max()),
        )

    s = np.linalg.norm(work, axis=0)
    u = np.zeros_like(work)
    nz = s > 0
    u[:, nz] = work[:, nz] / s[nz]
    return u, s, v


def thin_svd(m) -> SvdResult:
    """Sign-deterministic thin SVD of a real matrix.

    Raises ``NumericError`` on non-finite input and ``ConvergenceError``
    (carrying the achieved relative off-diagonal) if the sweep budget runs
    out.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"thin_svd expects a matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise NumericError("thin_svd input contains NaN or Inf")

    transposed = m.shape[0] < m.shape[1]
    u, s, v = _jacobi(m.T if transposed else m)

    # stable descending sort keeps the sweep's order between equal values
    order = np.argsort(-s, kind="stable")
    u, s, v = u[:, order], s[order], v[:, order]

    # complete exactly-zero columns of u to an orthonormal basis
    for col in np.flatnonzero(s == 0.0):
        u[:, col] = _orthonormal_fill(u, col)

    if transposed:
        u, v = v, u

    # sign rule: first entry of each u column that is not rounding noise
    # must be positive; v flips with u so the product is unchanged
    for col in range(u.shape[1]):
        column = u[:, col]
        floor = 1e-12 * np.max(np.abs(column))
        idx = np.flatnonzero(np.abs(column) > floor)
        if idx.size and column[idx[0]] < 0:
            u[:, col] = -column
            v[:, col] = -v[:, col]

    return SvdResult(u=u, s=s, v=v)


def leading_left_singular_vectors(m, r: int) -> np.ndarray:
    """First ``r`` left singular vectors of ``m`` as an orthonormal block."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got ndim={m.ndim}")
    if r < 1:
        raise DimensionError(f"rank must be positive, got {r}")
    if r > min(m.shape):
        raise DimensionError(
            f"rank {r} exceeds min(rows, cols) = {min(m.shape)} "
            f"for a {m.shape[0]}x{m.shape[1]} matrix"
        )
    return thin_svd(m).u[:, :r].copy()
