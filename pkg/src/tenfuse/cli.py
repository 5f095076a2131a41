"""Command line front end.

Subcommands: gen-data, train, decompose, eval, bench.  Exit codes: 0 on
success, 2 for configuration problems, 3 for malformed files, 4 for
numeric/convergence failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import evaluate, pipeline
from .data import gallery_query_split, generate_synthetic, load_dataset, save_dataset
from .errors import ConvergenceError, FormatError, NumericError, TenfuseError
from .model import fused_features, load_model, save_model
from .objective import LossWeights
from .tensor import load_tensor
from .tucker import hooi, hosvd, save_factors


def _parse_ranks(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("ranks must be rd,rc,ra")
    return tuple(int(p) for p in parts)


def _cmd_gen_data(args) -> int:
    ds = generate_synthetic(
        classes=args.classes,
        input_dim=args.input_dim,
        attrs=args.attrs,
        samples_per_class=args.per_class,
        noise_sigma=args.noise,
        seed=args.seed,
    )
    save_dataset(ds, args.output)
    print(f"wrote {ds.n} samples ({ds.c} classes, P={ds.p}, s={ds.s}) to {args.output}")
    return 0


def _cmd_train(args) -> int:
    ds = load_dataset(args.data)
    cfg = pipeline.TrainConfig(
        ranks=args.ranks,
        use_td=not args.no_td,
        use_ssl=not args.no_ssl,
        weights=LossWeights(
            lambda1=args.lambda1,
            lambda2=args.lambda2,
            lambda3=args.lambda3,
            margin=args.margin,
        ),
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        pairs_per_batch=args.pairs_per_batch,
        seed=args.seed,
        feat_d=args.feat_d,
        feat_a=args.feat_a,
    )
    model, history = pipeline.train(ds, cfg)
    save_model(model, args.output)
    if args.metrics:
        pipeline.write_metrics(history, args.metrics)
    last = history[-1] if history else None
    if last is not None:
        print(
            f"trained {len(history)} epochs; final total loss "
            f"{last.loss.total:.6g}, train rank-1 {last.train_rank1:.4f}"
        )
    print(f"checkpoint written to {args.output}")
    return 0


def _cmd_decompose(args) -> int:
    w = load_tensor(args.tensor_in)
    if args.method == "hosvd":
        factors = hosvd(w, args.ranks)
    else:
        factors = hooi(w, args.ranks, max_sweeps=args.max_sweeps, tol=args.tol)
    save_factors(factors, args.output)
    from .tucker import reconstruction_error

    err = reconstruction_error(w, factors)
    print(f"{args.method} ranks {args.ranks}: reconstruction error {err:.6g}")
    print(f"factors written to {args.output}")
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.data)
    gal_idx, qry_idx = gallery_query_split(ds)
    if qry_idx.size == 0:
        raise TenfuseError("split produced no queries; need more samples per class")
    feats = fused_features(model, ds.x.astype(np.float64))
    report = evaluate.evaluate_split(
        feats[qry_idx],
        ds.y[qry_idx],
        feats[gal_idx],
        ds.y[gal_idx],
        max_rank=args.max_rank,
        hist_bins=args.bins,
    )
    outdir = Path(args.report_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    with open(outdir / "cmc.csv", "w") as fh:
        fh.write("rank,accuracy\n")
        for k, acc in enumerate(report.cmc, start=1):
            fh.write(f"{k},{acc:.17g}\n")
    with open(outdir / "map.txt", "w") as fh:
        fh.write(f"{report.map:.17g}\n")
    with open(outdir / "roc.csv", "w") as fh:
        fh.write("fpr,tpr\n")
        for fpr, tpr in report.roc:
            fh.write(f"{fpr:.17g},{tpr:.17g}\n")
    for name, hist in (
        ("hist_genuine.csv", report.genuine_hist),
        ("hist_imposter.csv", report.imposter_hist),
    ):
        counts, edges = hist
        with open(outdir / name, "w") as fh:
            fh.write("bin_lo,bin_hi,count\n")
            for b, count in enumerate(counts):
                fh.write(f"{edges[b]:.17g},{edges[b + 1]:.17g},{count}\n")
    lists = evaluate.ranked_lists(
        feats[qry_idx], ds.y[qry_idx], feats[gal_idx], ds.y[gal_idx], top_k=args.top_k
    )
    with open(outdir / "ranked_lists.txt", "w") as fh:
        for qpos, ranking in enumerate(lists):
            ql = int(ds.y[qry_idx[qpos]])
            entries = "  ".join(
                f"{rank}:{int(gal_idx[gi])}(label {label})"
                for rank, (gi, label) in enumerate(ranking, start=1)
            )
            fh.write(f"query {int(qry_idx[qpos])} (label {ql}): {entries}\n")
    print(
        f"rank-1 {report.cmc[0]:.4f}, mAP {report.map:.4f}; reports in {outdir}"
    )
    return 0


def _cmd_bench(args) -> int:
    model = load_model(args.model)
    report = pipeline.bench_forward(model, n_inputs=args.inputs, repeats=args.repeats)
    sparsity = pipeline.sparsity_report(model)
    print("metric,value")
    for name, value in (
        ("zero_pct_top", sparsity.zero_pct[0]),
        ("zero_pct_side", sparsity.zero_pct[1]),
        ("zero_pct_front", sparsity.zero_pct[2]),
        ("params_before", report.params_before),
        ("params_after", report.params_after),
        ("param_ratio", report.param_ratio),
        ("flops_before", report.flops_before),
        ("flops_after", report.flops_after),
        ("flop_ratio", report.flop_ratio),
        ("median_time_before_s", report.median_time_before),
        ("median_time_after_s", report.median_time_after),
        ("time_ratio", report.time_ratio),
    ):
        print(f"{name},{value:.17g}" if isinstance(value, float) else f"{name},{value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tenfuse",
        description="Sparse tensor fusion of identity and attribute features",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic planted-structure dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--input-dim", type=int, required=True)
    p.add_argument("--attrs", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train the fusion model")
    p.add_argument("--data", required=True)
    p.add_argument("--ranks", type=_parse_ranks, default=(12, 12, 8))
    p.add_argument("--lambda1", type=float, default=0.01)
    p.add_argument("--lambda2", type=float, default=LossWeights().lambda2)
    p.add_argument("--lambda3", type=float, default=1.0)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--epochs", type=int, default=pipeline.TrainConfig().epochs)
    p.add_argument("--pairs-per-batch", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feat-d", type=int, default=24)
    p.add_argument("--feat-a", type=int, default=12)
    p.add_argument("--no-ssl", action="store_true")
    p.add_argument("--no-td", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--metrics", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("decompose", help="Tucker-decompose a tensor file")
    p.add_argument("--tensor-in", required=True)
    p.add_argument("--ranks", type=_parse_ranks, required=True)
    p.add_argument("--method", choices=("hosvd", "hooi"), default="hooi")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-sweeps", type=int, default=50)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("eval", help="retrieval/verification evaluation")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report-dir", required=True)
    p.add_argument("--max-rank", type=int, default=20)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--top-k", type=int, default=10)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="sparsity and speedup report")
    p.add_argument("--model", required=True)
    p.add_argument("--inputs", type=int, default=4096)
    p.add_argument("--repeats", type=int, default=7)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, ConvergenceError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except (TenfuseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
