"""Training loop, slice-sparsity reporting and model compaction.

Per batch the trainer computes the analytic gradients with per-term
parameter targeting, applies one Adam step per parameter group, and (when
structural sparsity is enabled) follows with the group-lasso proximal step
on the weight tensor so redundant slices reach exact zero.  Everything is
driven by a single seeded generator: initialization, epoch shuffles and
pair sampling all draw from it in a fixed order, so a given (dataset,
config) is bit-reproducible.

One writer owns the parameter arrays while training runs; snapshots
returned to the caller are fresh arrays and safe to share.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .errors import ConfigError, DegenerateModelError, UnsupportedError
from .model import Encoders, ModelParams, encode_batch, fused_batch, logits_batch
from .objective import (
    Batch,
    LossBreakdown,
    LossWeights,
    gradients,
    prox_group_lasso,
    total_loss,
)
from .tensor import mode_slice_norms
from .tucker import TuckerFactors, full_parameter_count, parameter_count

EARLY_STOP_PATIENCE = 10


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; defaults match the shipped desk-scale setup."""

    ranks: tuple[int, int, int] = (12, 12, 8)
    use_td: bool = True
    use_ssl: bool = True
    weights: LossWeights = field(default_factory=LossWeights)
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 60
    pairs_per_batch: int | None = None
    seed: int = 0
    feat_d: int = 24
    feat_a: int = 12

    @property
    def effective_pairs(self) -> int:
        return self.batch_size if self.pairs_per_batch is None else self.pairs_per_batch


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: LossBreakdown
    train_rank1: float
    zero_pct: tuple[float, float, float]


@dataclass(frozen=True)
class SparsityReport:
    """Zero-slice statistics of the core plus compaction/speed accounting."""

    zero_pct: tuple[float, float, float]
    zero_indices: tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]
    params_before: int
    params_after: int
    time_ratio: float


@dataclass(frozen=True)
class BenchReport:
    flops_before: int
    flops_after: int
    flop_ratio: float
    params_before: int
    params_after: int
    param_ratio: float
    median_time_before: float
    median_time_after: float
    time_ratio: float


def sample_pairs(labels, rng: np.random.Generator, n_pairs: int) -> list[tuple[int, int, bool]]:
    """Draw index pairs targeting an even genuine/imposter mix.

    Sampling is without replacement from the distinct unordered pairs; when
    one pool is too small the other fills the remainder.  Falls back to
    all-imposter pairs (with a warning) if the batch has no genuine pair.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if n < 2:
        raise ConfigError(f"pair sampling needs a batch of >= 2, got {n}")
    iu, ju = np.triu_indices(n, k=1)
    genuine_mask = labels[iu] == labels[ju]
    genuine = list(zip(iu[genuine_mask], ju[genuine_mask]))
    imposter = list(zip(iu[~genuine_mask], ju[~genuine_mask]))
    if not genuine:
        warnings.warn("batch contains no genuine pair; sampling imposters only")

    want_genuine = min(n_pairs // 2, len(genuine))
    want_imposter = min(n_pairs - want_genuine, len(imposter))
    want_genuine = min(n_pairs - want_imposter, len(genuine))

    picked: list[tuple[int, int, bool]] = []
    for pool, count, flag in ((genuine, want_genuine, True), (imposter, want_imposter, False)):
        if count:
            idx = rng.choice(len(pool), size=count, replace=False)
            picked.extend((int(pool[k][0]), int(pool[k][1]), flag) for k in idx)
    return picked


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: dict[str, dict[str, np.ndarray]],
    t: int,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], dict[str, dict[str, np.ndarray]]]:
    """One bias-corrected Adam update, in place, group by group."""
    for name in sorted(grads):
        g = grads[name]
        st = state.setdefault(
            name, {"m": np.zeros_like(params[name]), "v": np.zeros_like(params[name])}
        )
        st["m"] = cfg.beta1 * st["m"] + (1.0 - cfg.beta1) * g
        st["v"] = cfg.beta2 * st["v"] + (1.0 - cfg.beta2) * g * g
        m_hat = st["m"] / (1.0 - cfg.beta1**t)
        v_hat = st["v"] / (1.0 - cfg.beta2**t)
        params[name] = params[name] - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return params, state


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(
    dims_p: int, dims_s: int, c: int, cfg: TrainConfig, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    """Seeded uniform initialization scaled by 1/sqrt(fan-in), fixed order."""
    d, a = cfg.feat_d, cfg.feat_a
    params = {
        "w_i": _uniform(rng, (d, dims_p), dims_p),
        "w_a": _uniform(rng, (a, dims_p), dims_p),
        "attr_heads": _uniform(rng, (dims_s, a), a),
        "attr_bias": np.zeros(dims_s),
    }
    if cfg.use_td:
        r_d, r_c, r_a = cfg.ranks
        params["a1"] = _uniform(rng, (d, r_d), d)
        params["a2"] = _uniform(rng, (c, r_c), r_c)
        params["a3"] = _uniform(rng, (a, r_a), a)
        params["core"] = _uniform(rng, (r_d, r_c, r_a), r_d * r_a)
    else:
        params["full"] = _uniform(rng, (d, c, a), d * a)
    return params


def _assemble(params: dict[str, np.ndarray]) -> ModelParams:
    encoders = Encoders(
        w_i=params["w_i"],
        w_a=params["w_a"],
        attr_heads=params["attr_heads"],
        attr_bias=params["attr_bias"],
    )
    if "core" in params:
        weights = TuckerFactors(
            g=params["core"], a1=params["a1"], a2=params["a2"], a3=params["a3"]
        )
    else:
        weights = params["full"]
    return ModelParams(encoders=encoders, weights=weights)


def _zero_pct(tensor: np.ndarray) -> tuple[float, float, float]:
    out = []
    for k in (1, 2, 3):
        norms = mode_slice_norms(tensor, k)
        out.append(100.0 * float(np.mean(norms == 0.0)))
    return tuple(out)


def _train_rank1(model: ModelParams, xs: np.ndarray, ys: np.ndarray) -> float:
    feats_f, feats_g = encode_batch(xs, model.encoders)
    logits = logits_batch(model, feats_f, feats_g)
    return float(np.mean(np.argmax(logits, axis=1) == ys))


def train(dataset: Dataset, cfg: TrainConfig) -> tuple[ModelParams, list[EpochRecord]]:
    """Run the multi-task training loop; returns the model and epoch history.

    Stops at ``cfg.epochs`` or earlier once training top-1 identification
    accuracy has not improved for ``EARLY_STOP_PATIENCE`` epochs.
    """
    if dataset.n == 0:
        raise ConfigError("dataset is empty")
    if cfg.learning_rate <= 0:
        raise ConfigError(f"learning_rate must be positive, got {cfg.learning_rate}")
    if cfg.batch_size < 1 or cfg.epochs < 0:
        raise ConfigError("batch_size must be >= 1 and epochs >= 0")
    if cfg.weights.lambda1 > 0 and cfg.batch_size < 2:
        raise ConfigError("contrastive term needs batch_size >= 2")
    if cfg.use_td:
        r_d, r_c, r_a = cfg.ranks
        if not (1 <= r_d <= cfg.feat_d and 1 <= r_c <= dataset.c and 1 <= r_a <= cfg.feat_a):
            raise ConfigError(
                f"ranks {cfg.ranks} incompatible with dims "
                f"({cfg.feat_d}, {dataset.c}, {cfg.feat_a})"
            )

    rng = np.random.default_rng(cfg.seed)
    params = init_params(dataset.p, dataset.s, dataset.c, cfg, rng)
    state: dict[str, dict[str, np.ndarray]] = {}
    step = 0

    xs = dataset.x.astype(np.float64)
    ys = dataset.y.astype(np.int64)
    ls = dataset.l.astype(np.float64)

    eff_weights = cfg.weights
    if not cfg.use_ssl:
        eff_weights = replace(eff_weights, lambda2=0.0)

    history: list[EpochRecord] = []
    best_rank1 = -1.0
    stale = 0
    tensor_key = "core" if cfg.use_td else "full"

    for epoch in range(cfg.epochs):
        perm = rng.permutation(dataset.n)
        sums = np.zeros(5)
        n_batches = 0
        for start in range(0, dataset.n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            if idx.size < 2 and cfg.weights.lambda1 > 0:
                continue
            pairs = (
                sample_pairs(ys[idx], rng, cfg.effective_pairs) if idx.size >= 2 else []
            )
            batch = Batch(x=xs[idx], y=ys[idx], l=ls[idx], pairs=pairs)
            model = _assemble(params)
            bd = total_loss(model, batch, eff_weights)
            grads = gradients(model, batch, eff_weights)
            step += 1
            adam_step(params, grads, state, step, cfg)
            if cfg.use_ssl:
                params[tensor_key] = prox_group_lasso(
                    params[tensor_key], cfg.learning_rate, cfg.weights.lambda2
                )
            sums += (bd.classification, bd.contrastive, bd.ssl, bd.attribute, bd.total)
            n_batches += 1

        model = _assemble(params)
        rank1 = _train_rank1(model, xs, ys)
        means = sums / max(n_batches, 1)
        history.append(
            EpochRecord(
                epoch=epoch,
                loss=LossBreakdown(*means),
                train_rank1=rank1,
                zero_pct=_zero_pct(params[tensor_key]),
            )
        )
        if rank1 > best_rank1:
            best_rank1 = rank1
            stale = 0
        else:
            stale += 1
            if stale >= EARLY_STOP_PATIENCE:
                break

    final = _assemble({k: v.copy() for k, v in params.items()})
    return final, history


def write_metrics(history: list[EpochRecord], path) -> None:
    """Line-delimited CSV of the epoch records, 17 significant digits."""
    cols = [
        "epoch",
        "classification",
        "contrastive",
        "ssl",
        "attribute",
        "total",
        "train_rank1",
        "zero_pct_top",
        "zero_pct_side",
        "zero_pct_front",
    ]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for rec in history:
            vals = [
                str(rec.epoch),
                *(
                    f"{v:.17g}"
                    for v in (
                        rec.loss.classification,
                        rec.loss.contrastive,
                        rec.loss.ssl,
                        rec.loss.attribute,
                        rec.loss.total,
                        rec.train_rank1,
                        *rec.zero_pct,
                    )
                ),
            ]
            fh.write(",".join(vals) + "\n")


def compact(model: ModelParams) -> tuple[ModelParams, tuple[tuple[int, ...], ...]]:
    """Drop exactly-zero core slices and the matching factor columns.

    Forward outputs are unchanged because removed slices contribute nothing;
    returns the reduced model plus the kept indices per mode.
    """
    if not model.is_factored:
        raise UnsupportedError("compaction applies to factored models only")
    tf = model.weights
    kept = []
    for k in (1, 2, 3):
        norms = mode_slice_norms(tf.g, k)
        keep = tuple(int(i) for i in np.flatnonzero(norms > 0.0))
        if not keep:
            raise DegenerateModelError(
                f"every mode-{k} slice of the core is zero; nothing to keep"
            )
        kept.append(keep)
    k1, k2, k3 = kept
    new = TuckerFactors(
        g=tf.g[np.ix_(k1, k2, k3)].copy(),
        a1=tf.a1[:, k1].copy(),
        a2=tf.a2[:, k2].copy(),
        a3=tf.a3[:, k3].copy(),
    )
    return ModelParams(encoders=model.encoders, weights=new), (k1, k2, k3)


def sparsity_report(model: ModelParams, zero_tol: float = 0.0) -> SparsityReport:
    """Zero-slice shares per mode plus compaction sizes and a timing ratio."""
    if not model.is_factored:
        raise UnsupportedError("sparsity reporting applies to factored models only")
    tf = model.weights
    zero_idx = []
    pct = []
    for k in (1, 2, 3):
        norms = mode_slice_norms(tf.g, k)
        zeros = tuple(int(i) for i in np.flatnonzero(norms <= zero_tol))
        zero_idx.append(zeros)
        pct.append(100.0 * len(zeros) / norms.shape[0])
    params_before = parameter_count(tf.dims, tf.ranks)
    try:
        bench = bench_forward(model, n_inputs=2048, repeats=5)
        params_after = bench.params_after
        time_ratio = bench.time_ratio
    except DegenerateModelError:
        params_after = params_before
        time_ratio = float("nan")
    return SparsityReport(
        zero_pct=tuple(pct),
        zero_indices=tuple(zero_idx),
        params_before=params_before,
        params_after=params_after,
        time_ratio=time_ratio,
    )


def flop_counts(dims: tuple[int, int, int], ranks: tuple[int, int, int]) -> dict[str, int]:
    """Multiply/add counts of one decomposed forward pass, by stage."""
    d, c, a = dims
    r_d, r_c, r_a = ranks
    counts = {
        "project_identity": 2 * d * r_d,
        "project_attribute": 2 * a * r_a,
        "fuse": r_d * r_a,
        "core": 2 * r_c * r_d * r_a,
        "classify": 2 * c * r_c,
    }
    counts["total"] = sum(counts.values())
    return counts


def _time_forward(model: ModelParams, feats_f, feats_g, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        logits_batch(model, feats_f, feats_g)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_forward(model: ModelParams, n_inputs: int = 4096, repeats: int = 7) -> BenchReport:
    """Compare decomposed forward cost before and after compaction.

    FLOPs come from the closed-form model; the wall-clock ratio is the
    median batched-forward time of the original over the compacted model.
    """
    if not model.is_factored:
        raise UnsupportedError("benchmarking applies to factored models only")
    compacted, _ = compact(model)
    tf, tc = model.weights, compacted.weights

    rng = np.random.default_rng(12345)
    p = model.encoders.w_i.shape[1]
    xs = rng.normal(size=(n_inputs, p))
    feats_f, feats_g = encode_batch(xs, model.encoders)

    _time_forward(model, feats_f, feats_g, 1)  # warm up
    t_before = _time_forward(model, feats_f, feats_g, repeats)
    t_after = _time_forward(compacted, feats_f, feats_g, repeats)

    flops_before = flop_counts(tf.dims, tf.ranks)["total"]
    flops_after = flop_counts(tc.dims, tc.ranks)["total"]
    params_before = parameter_count(tf.dims, tf.ranks)
    params_after = parameter_count(tc.dims, tc.ranks)
    return BenchReport(
        flops_before=flops_before,
        flops_after=flops_after,
        flop_ratio=flops_before / flops_after,
        params_before=params_before,
        params_after=params_after,
        param_ratio=params_before / params_after,
        median_time_before=t_before,
        median_time_after=t_after,
        time_ratio=t_before / t_after,
    )
