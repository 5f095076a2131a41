"""Bilinear identity/attribute fusion classifier.

Two linear encoders map a raw input to an identity feature ``f`` (length D)
and an attribute feature ``g`` (length A).  Class logits come from a
trilinear form in (f, class, g) carried either by a full D x C x A weight
tensor or by its Tucker factors, in which case the contraction runs through
the factored route

    logits = a2 @ unfold(core, 2) @ kron(a3.T @ g, a1.T @ f)

which is algebraically identical to contracting the rebuilt full tensor.
Per-attribute heads turn ``g`` into presence probabilities.

Forward passes are pure; trained parameters are produced by the pipeline
module and treated as immutable here.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError
from .tensor import as_tensor3, unfold
from .tucker import TuckerFactors, _pack_array, _unpack_array

# fixed Kronecker order for fused features: attribute projection first,
# identity projection second (identity index varies fastest)
_SIGMOID_CLIP = 500.0


@dataclass(frozen=True)
class Encoders:
    """Linear feature encoders plus per-attribute logit heads.

    ``w_i`` is D x P, ``w_a`` is A x P, ``attr_heads`` is s x A and
    ``attr_bias`` has length s.
    """

    w_i: np.ndarray
    w_a: np.ndarray
    attr_heads: np.ndarray
    attr_bias: np.ndarray

    def __post_init__(self):
        if self.w_i.ndim != 2 or self.w_a.ndim != 2 or self.attr_heads.ndim != 2:
            raise DimensionError("encoder weights must be matrices")
        if self.w_i.shape[1] != self.w_a.shape[1]:
            raise DimensionError(
                f"encoders disagree on input dim: {self.w_i.shape[1]} vs "
                f"{self.w_a.shape[1]}"
            )
        if self.attr_heads.shape[1] != self.w_a.shape[0]:
            raise DimensionError(
                f"attribute heads expect feature dim {self.attr_heads.shape[1]} "
                f"but encoder produces {self.w_a.shape[0]}"
            )
        if self.attr_bias.shape != (self.attr_heads.shape[0],):
            raise DimensionError(
                f"bias length {self.attr_bias.shape} does not match "
                f"{self.attr_heads.shape[0]} attribute heads"
            )


@dataclass(frozen=True)
class FeaturePair:
    """Identity feature ``f`` (length D) and attribute feature ``g`` (length A)."""

    f: np.ndarray
    g: np.ndarray


@dataclass(frozen=True)
class ModelParams:
    """Encoders plus fusion weights, either full tensor or Tucker factors."""

    encoders: Encoders
    weights: np.ndarray | TuckerFactors

    def __post_init__(self):
        d, _, a = self.dims
        if self.encoders.w_i.shape[0] != d:
            raise DimensionError(
                f"identity encoder produces {self.encoders.w_i.shape[0]} dims, "
                f"fusion weights expect {d}"
            )
        if self.encoders.w_a.shape[0] != a:
            raise DimensionError(
                f"attribute encoder produces {self.encoders.w_a.shape[0]} dims, "
                f"fusion weights expect {a}"
            )

    @property
    def is_factored(self) -> bool:
        return isinstance(self.weights, TuckerFactors)

    @property
    def dims(self) -> tuple[int, int, int]:
        if self.is_factored:
            return self.weights.dims
        return tuple(int(d) for d in self.weights.shape)


def encode(x, e: Encoders) -> FeaturePair:
    """Apply both encoders to one raw input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (e.w_i.shape[1],):
        raise DimensionError(
            f"input length {x.shape} does not match encoder width "
            f"{e.w_i.shape[1]}"
        )
    return FeaturePair(f=e.w_i @ x, g=e.w_a @ x)


def encode_batch(xs, e: Encoders) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise encoding of an (n, P) batch; returns (n, D) and (n, A)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != e.w_i.shape[1]:
        raise DimensionError(
            f"batch shape {xs.shape} does not match encoder width "
            f"{e.w_i.shape[1]}"
        )
    return xs @ e.w_i.T, xs @ e.w_a.T


def forward_full(w, p: FeaturePair) -> np.ndarray:
    """Class logits from the full tensor: logit[c] = sum w[d,c,a] f[d] g[a]."""
    w = as_tensor3(w)
    if p.f.shape != (w.shape[0],) or p.g.shape != (w.shape[2],):
        raise DimensionError(
            f"feature lengths ({p.f.shape[0]}, {p.g.shape[0]}) do not match "
            f"tensor dims {tuple(w.shape)}"
        )
    return np.einsum("dca,d,a->c", w, p.f, p.g)


def fused_feature(a1, a3, p: FeaturePair) -> np.ndarray:
    """Kronecker fusion of the two projected features.

    Order is fixed: attribute projection tensored with identity
    projection, so the identity index varies fastest.
    """
    a1 = np.asarray(a1, dtype=np.float64)
    a3 = np.asarray(a3, dtype=np.float64)
    if a1.shape[0] != p.f.shape[0]:
        raise DimensionError(
            f"identity factor rows {a1.shape[0]} != feature length {p.f.shape[0]}"
        )
    if a3.shape[0] != p.g.shape[0]:
        raise DimensionError(
            f"attribute factor rows {a3.shape[0]} != feature length {p.g.shape[0]}"
        )
    return np.kron(a3.T @ p.g, a1.T @ p.f)


def forward_decomposed(tf: TuckerFactors, p: FeaturePair) -> np.ndarray:
    """Class logits through the factored route; matches the full route."""
    h = fused_feature(tf.a1, tf.a3, p)
    return tf.a2 @ (unfold(tf.g, 2) @ h)


def forward(params: ModelParams, p: FeaturePair) -> np.ndarray:
    if params.is_factored:
        return forward_decomposed(params.weights, p)
    return forward_full(params.weights, p)


def logits_batch(params: ModelParams, feats_f, feats_g) -> np.ndarray:
    """Vectorized forward over (n, D) and (n, A) feature batches."""
    if params.is_factored:
        tf = params.weights
        u1 = feats_f @ tf.a1
        u3 = feats_g @ tf.a3
        h = np.einsum("js,jp->jsp", u3, u1).reshape(u1.shape[0], -1)
        return h @ unfold(tf.g, 2).T @ tf.a2.T
    return np.einsum("dca,jd,ja->jc", params.weights, feats_f, feats_g)


def fused_batch(params: ModelParams, feats_f, feats_g) -> np.ndarray:
    """Fused feature per row.

    Factored models fuse the rank-space projections; the full tensor fuses
    the raw features directly (the same formula with identity factors).
    """
    if params.is_factored:
        tf = params.weights
        u1 = feats_f @ tf.a1
        u3 = feats_g @ tf.a3
    else:
        u1, u3 = feats_f, feats_g
    return np.einsum("js,jp->jsp", u3, u1).reshape(u1.shape[0], -1)


def fused_features(params: ModelParams, xs) -> np.ndarray:
    """Fused features for raw inputs, used as the retrieval embedding."""
    feats_f, feats_g = encode_batch(xs, params.encoders)
    return fused_batch(params, feats_f, feats_g)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -_SIGMOID_CLIP, _SIGMOID_CLIP)))


def predict_attributes(p: FeaturePair, e: Encoders) -> np.ndarray:
    """Per-attribute presence probabilities from the attribute feature."""
    if p.g.shape != (e.attr_heads.shape[1],):
        raise DimensionError(
            f"attribute feature length {p.g.shape} does not match heads "
            f"width {e.attr_heads.shape[1]}"
        )
    return _sigmoid(e.attr_heads @ p.g + e.attr_bias)


def attribute_probs_batch(feats_g, e: Encoders) -> np.ndarray:
    return _sigmoid(feats_g @ e.attr_heads.T + e.attr_bias)


# ---------------------------------------------------------------------------
# checkpoint format: magic "TFCK", version u32 LE, flags u32 (bit0 set for
# the factored parameterization), D,C,A,P,s as u64 LE, three u64 ranks
# (zero for full), then sections with per-array dims headers: w_i, w_a,
# attr_heads, attr_bias, followed by the full tensor or the factor set.
# ---------------------------------------------------------------------------

_TFCK_MAGIC = b"TFCK"
_TFCK_VERSION = 1


def save_model(params: ModelParams, path) -> None:
    e = params.encoders
    d, c, a = params.dims
    p = e.w_i.shape[1]
    s = e.attr_heads.shape[0]
    ranks = params.weights.ranks if params.is_factored else (0, 0, 0)

    parts = [
        _TFCK_MAGIC,
        struct.pack("<I", _TFCK_VERSION),
        struct.pack("<I", 1 if params.is_factored else 0),
        struct.pack("<5Q", d, c, a, p, s),
        struct.pack("<3Q", *ranks),
        _pack_array(e.w_i),
        _pack_array(e.w_a),
        _pack_array(e.attr_heads),
        _pack_array(e.attr_bias),
    ]
    if params.is_factored:
        w = params.weights
        parts += [_pack_array(x) for x in (w.g, w.a1, w.a2, w.a3)]
    else:
        parts.append(_pack_array(params.weights))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def _unpack_vector(blob: bytes, offset: int) -> tuple[np.ndarray, int]:
    if len(blob) < offset + 8:
        raise FormatError(
            f"truncated dims header: expected 8 bytes, got {len(blob) - offset}",
            offset,
        )
    (n,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    n = int(n)
    if len(blob) < offset + 8 * n:
        raise FormatError(
            f"truncated payload: expected {8 * n} bytes, got {len(blob) - offset}",
            offset,
        )
    return np.frombuffer(blob, dtype="<f8", count=n, offset=offset).copy(), offset + 8 * n


def load_model(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _TFCK_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {_TFCK_MAGIC!r}", 0)
    if len(blob) < 12:
        raise FormatError(f"truncated header: expected 12 bytes, got {len(blob)}", 4)
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _TFCK_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    (flags,) = struct.unpack_from("<I", blob, 8)
    factored = bool(flags & 1)
    if len(blob) < 76:
        raise FormatError(f"truncated header: expected 76 bytes, got {len(blob)}", 12)
    d, c, a, p, s = (int(x) for x in struct.unpack_from("<5Q", blob, 12))
    ranks = tuple(int(x) for x in struct.unpack_from("<3Q", blob, 52))
    offset = 76

    w_i, offset = _unpack_array(blob, offset, 2)
    w_a, offset = _unpack_array(blob, offset, 2)
    heads, offset = _unpack_array(blob, offset, 2)
    bias, offset = _unpack_vector(blob, offset)
    for name, arr, want in (
        ("w_i", w_i, (d, p)),
        ("w_a", w_a, (a, p)),
        ("attr_heads", heads, (s, a)),
        ("attr_bias", bias, (s,)),
    ):
        if tuple(arr.shape) != want:
            raise FormatError(
                f"{name} shape {tuple(arr.shape)} does not match header {want}",
                offset,
            )
    encoders = Encoders(w_i=w_i, w_a=w_a, attr_heads=heads, attr_bias=bias)

    if factored:
        from .tucker import unpack_factors

        factors, offset = unpack_factors(blob, offset)
        if factors.dims != (d, c, a) or factors.ranks != ranks:
            raise FormatError(
                f"factor shapes {factors.dims}/{factors.ranks} do not match "
                f"header {(d, c, a)}/{ranks}",
                offset,
            )
        weights = factors
    else:
        w, offset = _unpack_array(blob, offset, 3)
        if tuple(w.shape) != (d, c, a):
            raise FormatError(
                f"tensor shape {tuple(w.shape)} does not match header {(d, c, a)}",
                offset,
            )
        weights = w
    if offset != len(blob):
        raise FormatError(
            f"trailing bytes: expected {offset} bytes, got {len(blob)}", offset
        )
    return ModelParams(encoders=encoders, weights=weights)
