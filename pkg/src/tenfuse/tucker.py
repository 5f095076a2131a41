"""Tucker decomposition of order-3 tensors: truncated HOSVD and HOOI.

Factor matrices are stored full-dim x rank, so a tensor is rebuilt as
``g x1 a1 x2 a2 x3 a3`` and the core is obtained by projecting with the
transposes.  HOOI refines the HOSVD starting point by alternating sweeps:
each factor is refit from the leading left singular vectors of the tensor
projected onto the other two factors, which never increases the
reconstruction error.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError
from .linalg import leading_left_singular_vectors
from .tensor import as_tensor3, frobenius_norm, mode_product, unfold

DEFAULT_TOL = 1e-9
DEFAULT_MAX_SWEEPS = 50


@dataclass(frozen=True)
class TuckerFactors:
    """Core tensor plus one factor matrix per mode.

    ``g`` has shape ``ranks``; ``a1``, ``a2``, ``a3`` have shapes
    ``(dims[k], ranks[k])``.  Instances are immutable and safe to share.
    """

    g: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray

    @property
    def ranks(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.g.shape)

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.a1.shape[0], self.a2.shape[0], self.a3.shape[0])

    def factor(self, k: int) -> np.ndarray:
        return (self.a1, self.a2, self.a3)[k - 1]


def _check_ranks(dims, ranks) -> tuple[int, int, int]:
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != 3:
        raise DimensionError(f"expected 3 ranks, got {len(ranks)}")
    for k, (r, d) in enumerate(zip(ranks, dims), start=1):
        if r < 1:
            raise DimensionError(f"rank for mode {k} must be >= 1, got {r}")
        if r > d:
            raise DimensionError(
                f"rank {r} exceeds tensor extent {d} along mode {k}"
            )
    return ranks


def _core(w: np.ndarray, a1, a2, a3) -> np.ndarray:
    g = mode_product(w, a1.T, 1)
    g = mode_product(g, a2.T, 2)
    return mode_product(g, a3.T, 3)


def hosvd(w, ranks) -> TuckerFactors:
    """Truncated higher-order SVD.

    Each factor holds the leading left singular vectors of the matching
    unfolding; the core is the projection of ``w`` onto those bases.
    """
    w = as_tensor3(w)
    ranks = _check_ranks(w.shape, ranks)
    factors = []
    for k in (1, 2, 3):
        wk = unfold(w, k)
        if ranks[k - 1] > min(wk.shape):
            raise DimensionError(
                f"rank {ranks[k - 1]} exceeds the column space of the mode-{k} "
                f"unfolding ({wk.shape[0]}x{wk.shape[1]})"
            )
        factors.append(leading_left_singular_vectors(wk, ranks[k - 1]))
    a1, a2, a3 = factors
    return TuckerFactors(g=_core(w, a1, a2, a3), a1=a1, a2=a2, a3=a3)


def hooi_trace(
    w,
    ranks,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    tol: float = DEFAULT_TOL,
) -> tuple[TuckerFactors, list[float]]:
    """HOOI refinement returning the per-sweep absolute error sequence.

    ``errors[0]`` is the HOSVD starting error, ``errors[i]`` the error after
    sweep ``i``.  Iteration stops once the relative error decrease over a
    sweep falls below ``tol`` or after ``max_sweeps``.
    """
    w = as_tensor3(w)
    ranks = _check_ranks(w.shape, ranks)
    if max_sweeps < 1:
        raise DimensionError(f"max_sweeps must be >= 1, got {max_sweeps}")
    if tol <= 0:
        raise DimensionError(f"tol must be > 0, got {tol}")

    f = hosvd(w, ranks)
    a = [f.a1, f.a2, f.a3]
    errors = [reconstruction_error(w, f)]

    for _ in range(max_sweeps):
        for k in (1, 2, 3):
            y = w
            for j in (1, 2, 3):
                if j != k:
                    y = mode_product(y, a[j - 1].T, j)
            a[k - 1] = leading_left_singular_vectors(unfold(y, k), ranks[k - 1])
        f = TuckerFactors(g=_core(w, *a), a1=a[0], a2=a[1], a3=a[2])
        errors.append(reconstruction_error(w, f))
        prev, cur = errors[-2], errors[-1]
        if (prev - cur) <= tol * max(prev, np.finfo(float).tiny):
            break
    return f, errors


def hooi(
    w,
    ranks,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    tol: float = DEFAULT_TOL,
) -> TuckerFactors:
    """HOSVD-initialized higher-order orthogonal iteration."""
    return hooi_trace(w, ranks, max_sweeps=max_sweeps, tol=tol)[0]


def reconstruct(f: TuckerFactors) -> np.ndarray:
    """Multiply the core back through all three factors."""
    for k in (1, 2, 3):
        if f.factor(k).shape[1] != f.g.shape[k - 1]:
            raise DimensionError(
                f"factor {k} has {f.factor(k).shape[1]} columns but core "
                f"extent is {f.g.shape[k - 1]}"
            )
    w = mode_product(f.g, f.a1, 1)
    w = mode_product(w, f.a2, 2)
    return mode_product(w, f.a3, 3)


def reconstruction_error(w, f: TuckerFactors) -> float:
    w = as_tensor3(w)
    if tuple(w.shape) != f.dims:
        raise DimensionError(
            f"tensor dims {tuple(w.shape)} do not match factors {f.dims}"
        )
    return frobenius_norm(w - reconstruct(f))


def parameter_count(dims, ranks) -> int:
    """Entries stored by the factored form: core plus one block per mode."""
    d1, d2, d3 = (int(x) for x in dims)
    r1, r2, r3 = _check_ranks((d1, d2, d3), ranks)
    return r1 * r2 * r3 + r1 * d1 + r2 * d2 + r3 * d3


def full_parameter_count(dims) -> int:
    d1, d2, d3 = (int(x) for x in dims)
    return d1 * d2 * d3


# ---------------------------------------------------------------------------
# factor section format, reused inside model checkpoints: for each of
# g, a1, a2, a3 a dims header (u64 LE per axis) precedes the f64 LE payload;
# tensors are laid out first-index-fastest, matrices row-major.
# ---------------------------------------------------------------------------


def _pack_array(arr: np.ndarray) -> bytes:
    header = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    order = "F" if arr.ndim == 3 else "C"
    return header + np.ascontiguousarray(arr, dtype=np.float64).ravel(
        order=order
    ).astype("<f8").tobytes()


def _unpack_array(blob: bytes, offset: int, ndim: int) -> tuple[np.ndarray, int]:
    need = 8 * ndim
    if len(blob) < offset + need:
        raise FormatError(
            f"truncated dims header: expected {need} bytes, got "
            f"{len(blob) - offset}",
            offset,
        )
    shape = struct.unpack_from(f"<{ndim}Q", blob, offset)
    offset += need
    n = 1
    for d in shape:
        n *= int(d)
    if len(blob) < offset + 8 * n:
        raise FormatError(
            f"truncated payload: expected {8 * n} bytes, got {len(blob) - offset}",
            offset,
        )
    flat = np.frombuffer(blob, dtype="<f8", count=n, offset=offset)
    order = "F" if ndim == 3 else "C"
    return np.reshape(flat, shape, order=order).copy(), offset + 8 * n


def pack_factors(f: TuckerFactors) -> bytes:
    return b"".join(_pack_array(x) for x in (f.g, f.a1, f.a2, f.a3))


def unpack_factors(blob: bytes, offset: int = 0) -> tuple[TuckerFactors, int]:
    g, offset = _unpack_array(blob, offset, 3)
    a1, offset = _unpack_array(blob, offset, 2)
    a2, offset = _unpack_array(blob, offset, 2)
    a3, offset = _unpack_array(blob, offset, 2)
    f = TuckerFactors(g=g, a1=a1, a2=a2, a3=a3)
    for k in (1, 2, 3):
        if f.factor(k).shape[1] != g.shape[k - 1]:
            raise FormatError(
                f"factor {k} columns {f.factor(k).shape[1]} do not match core "
                f"extent {g.shape[k - 1]}",
                offset,
            )
    return f, offset


def save_factors(f: TuckerFactors, path) -> None:
    with open(path, "wb") as fh:
        fh.write(pack_factors(f))


def load_factors(path) -> TuckerFactors:
    with open(path, "rb") as fh:
        blob = fh.read()
    f, offset = unpack_factors(blob)
    if offset != len(blob):
        raise FormatError(
            f"trailing bytes after factors: expected {offset} bytes, got {len(blob)}",
            offset,
        )
    return f
