"""Dense order-3 tensor primitives.

Tensors are plain ``numpy`` float64 arrays of shape ``(d1, d2, d3)``;
matrices are 2-D float64 arrays.  Modes are numbered 1..3.  The unfolding
convention is fixed once here and used everywhere: ``unfold(t, k)`` places
the mode-k fibers as columns, with the remaining modes ordered so that the
LOWER mode index varies fastest along the columns.  Under this convention

    unfold(g x1 A1 x2 A2 x3 A3, k) == A_k @ unfold(g, k) @ kron(A_j, A_i).T

where ``(i, j)`` are the two remaining modes with ``i < j``.

All functions are pure: inputs are never mutated, so values can be shared
freely across threads.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DimensionError, FormatError

MODES = (1, 2, 3)

#: slice-family name per mode: mode 1 slices t[i,:,:] are viewed from the
#: top, mode 2 slices t[:,q,:] from the side, mode 3 slices t[:,:,s] from
#: the front.
MODE_NAMES = {1: "top", 2: "side", 3: "front"}


def _check_mode(k: int) -> None:
    if k not in MODES:
        raise DimensionError(f"mode must be 1, 2 or 3, got {k!r}")


def as_tensor3(t) -> np.ndarray:
    """Coerce to a float64 order-3 array, validating the order."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionError(f"expected an order-3 tensor, got ndim={arr.ndim}")
    return arr


def as_matrix(m) -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a matrix, got ndim={arr.ndim}")
    return arr


def unfold(t, k: int) -> np.ndarray:
    """Mode-k unfolding: ``t.shape[k-1]`` rows, remaining dims as columns.

    Column order follows the module convention (lower remaining mode
    varies fastest).
    """
    t = as_tensor3(t)
    _check_mode(k)
    return np.reshape(
        np.moveaxis(t, k - 1, 0), (t.shape[k - 1], -1), order="F"
    )


def fold(m, k: int, dims) -> np.ndarray:
    """Inverse of :func:`unfold` for a target shape ``dims``."""
    m = as_matrix(m)
    _check_mode(k)
    d1, d2, d3 = (int(d) for d in dims)
    rest = [d for i, d in enumerate((d1, d2, d3)) if i != k - 1]
    if m.shape[0] != (d1, d2, d3)[k - 1]:
        raise DimensionError(
            f"fold mode {k}: matrix has {m.shape[0]} rows, dims want "
            f"{(d1, d2, d3)[k - 1]}"
        )
    if m.shape[1] != rest[0] * rest[1]:
        raise DimensionError(
            f"fold mode {k}: matrix has {m.shape[1]} columns, dims want "
            f"{rest[0] * rest[1]}"
        )
    stacked = np.reshape(m, (m.shape[0], rest[0], rest[1]), order="F")
    return np.moveaxis(stacked, 0, k - 1)


def mode_product(t, m, k: int) -> np.ndarray:
    """Contract the mode-k fibers of ``t`` against the rows of ``m``.

    ``m`` must have as many columns as ``t`` has entries along mode ``k``;
    the result replaces that mode's extent with ``m.shape[0]``.
    """
    t = as_tensor3(t)
    m = as_matrix(m)
    _check_mode(k)
    if m.shape[1] != t.shape[k - 1]:
        raise DimensionError(
            f"mode {k} product: matrix has {m.shape[1]} columns but tensor "
            f"mode {k} has extent {t.shape[k - 1]}"
        )
    new_dims = list(t.shape)
    new_dims[k - 1] = m.shape[0]
    return fold(m @ unfold(t, k), k, tuple(new_dims))


def kronecker(a, b) -> np.ndarray:
    """Kronecker product: block matrix with block (i, j) equal to a[i,j]*b."""
    return np.kron(as_matrix(a), as_matrix(b))


def frobenius_norm(t) -> float:
    """Square root of the sum of squared entries."""
    return float(np.linalg.norm(np.asarray(t, dtype=np.float64).ravel()))


def mode_slice_norms(t, k: int) -> np.ndarray:
    """Frobenius norm of each slice along mode ``k`` (length t.shape[k-1])."""
    t = as_tensor3(t)
    _check_mode(k)
    axes = tuple(i for i in range(3) if i != k - 1)
    return np.sqrt(np.sum(t * t, axis=axes))


# ---------------------------------------------------------------------------
# binary tensor format: magic "TNS3", version u32 LE, d1,d2,d3 u64 LE,
# then d1*d2*d3 IEEE-754 f64 LE values with the first index varying fastest.
# ---------------------------------------------------------------------------

_TNS3_MAGIC = b"TNS3"
_TNS3_VERSION = 1


def save_tensor(t, path) -> None:
    t = as_tensor3(t)
    with open(path, "wb") as fh:
        fh.write(_TNS3_MAGIC)
        fh.write(struct.pack("<I", _TNS3_VERSION))
        fh.write(struct.pack("<3Q", *t.shape))
        fh.write(t.ravel(order="F").astype("<f8").tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _TNS3_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {_TNS3_MAGIC!r}", 0)
    if len(blob) < 8:
        raise FormatError(f"truncated header: expected 8 bytes, got {len(blob)}", 4)
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _TNS3_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if len(blob) < 32:
        raise FormatError(f"truncated dims: expected 32 bytes, got {len(blob)}", 8)
    dims = struct.unpack_from("<3Q", blob, 8)
    n = int(dims[0] * dims[1] * dims[2])
    expected = 32 + 8 * n
    if len(blob) != expected:
        raise FormatError(
            f"payload length mismatch: expected {expected} bytes, got {len(blob)}",
            32,
        )
    data = np.frombuffer(blob, dtype="<f8", count=n, offset=32)
    return np.reshape(data, dims, order="F").copy()
