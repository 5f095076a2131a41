"""Dataset container, synthetic planted-structure generator and file I/O.

Samples carry a raw input vector ``x``, an identity label ``y`` and binary
attribute labels ``l``.  The generator plants one Gaussian prototype and
one attribute pattern per class, so both the identity and every attribute
are linear functions of the input up to noise.  Inputs are stored in
float32 (matching the on-disk format); training upcasts to float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError

_ATRD_MAGIC = b"ATRD"
_ATRD_VERSION = 1


@dataclass(frozen=True)
class Dataset:
    """Column-wise sample store: x is (N, P) float32, y (N,), l (N, s)."""

    x: np.ndarray
    y: np.ndarray
    l: np.ndarray
    c: int

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.ndim != 1 or self.l.ndim != 2:
            raise ConfigError("dataset arrays have wrong ranks")
        if not (self.x.shape[0] == self.y.shape[0] == self.l.shape[0]):
            raise ConfigError("dataset arrays disagree on sample count")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.c):
            raise ConfigError(f"labels must lie in [0, {self.c})")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def s(self) -> int:
        return self.l.shape[1]


def generate_synthetic(
    classes: int,
    input_dim: int,
    attrs: int,
    samples_per_class: int,
    noise_sigma: float,
    seed: int,
) -> Dataset:
    """Planted linear structure: per class a prototype and attribute pattern.

    Every sample is its class prototype plus isotropic Gaussian noise, so a
    linear probe recovers both the class and each attribute when the noise
    is small relative to the prototype separation.
    """
    if classes < 1 or input_dim < 1 or attrs < 1 or samples_per_class < 1:
        raise ConfigError(
            "classes, input_dim, attrs and samples_per_class must be positive"
        )
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    prototypes = rng.normal(size=(classes, input_dim))
    patterns = rng.integers(0, 2, size=(classes, attrs), dtype=np.uint8)

    n = classes * samples_per_class
    y = np.repeat(np.arange(classes), samples_per_class)
    x = prototypes[y] + noise_sigma * rng.normal(size=(n, input_dim))
    return Dataset(
        x=x.astype(np.float32),
        y=y.astype(np.int64),
        l=patterns[y].copy(),
        c=classes,
    )


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_ATRD_MAGIC)
        fh.write(struct.pack("<I", _ATRD_VERSION))
        fh.write(struct.pack("<4Q", ds.n, ds.p, ds.s, ds.c))
        for j in range(ds.n):
            fh.write(struct.pack("<I", int(ds.y[j])))
            fh.write(ds.l[j].astype(np.uint8).tobytes())
            fh.write(ds.x[j].astype("<f4").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _ATRD_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {_ATRD_MAGIC!r}", 0)
    if len(blob) < 8:
        raise FormatError(f"truncated header: expected 8 bytes, got {len(blob)}", 4)
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _ATRD_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if len(blob) < 40:
        raise FormatError(f"truncated header: expected 40 bytes, got {len(blob)}", 8)
    n, p, s, c = (int(v) for v in struct.unpack_from("<4Q", blob, 8))
    record = 4 + s + 4 * p
    expected = 40 + n * record
    if len(blob) != expected:
        raise FormatError(
            f"payload length mismatch: expected {expected} bytes, got {len(blob)}",
            40,
        )
    x = np.empty((n, p), dtype=np.float32)
    y = np.empty(n, dtype=np.int64)
    l = np.empty((n, s), dtype=np.uint8)
    offset = 40
    for j in range(n):
        (yj,) = struct.unpack_from("<I", blob, offset)
        if yj >= c:
            raise FormatError(f"label {yj} out of range for {c} classes", offset)
        y[j] = yj
        offset += 4
        lj = np.frombuffer(blob, dtype=np.uint8, count=s, offset=offset)
        if np.any(lj > 1):
            raise FormatError("attribute bytes must be 0 or 1", offset)
        l[j] = lj
        offset += s
        x[j] = np.frombuffer(blob, dtype="<f4", count=p, offset=offset)
        offset += 4 * p
    return Dataset(x=x, y=y, l=l, c=c)


def gallery_query_split(ds: Dataset, gallery_fraction: float = 0.8):
    """Per class, the first share of samples (dataset order) forms the
    gallery and the rest the queries; classes too small to split contribute
    gallery items only."""
    gallery_idx: list[int] = []
    query_idx: list[int] = []
    for c in range(ds.c):
        members = np.flatnonzero(ds.y == c)
        if members.size == 0:
            continue
        cut = max(1, int(gallery_fraction * members.size))
        gallery_idx.extend(int(i) for i in members[:cut])
        query_idx.extend(int(i) for i in members[cut:])
    return np.asarray(gallery_idx, dtype=np.int64), np.asarray(query_idx, dtype=np.int64)
