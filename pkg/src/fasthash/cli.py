"""Command line surface: train, encode, eval, infer-bench, synth.

Exit codes: 0 success, 2 usage, 3 data error, 4 numeric failure. Failures
print one machine-parsable line to stderr: ``fasthash-error: <Class>: <msg>``.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import dataio, datasets, evalkit, trainer
from .errors import DataError, FastHashError, UsageError
from .inference import (
    BlockCover,
    BqpInstance,
    PairStates,
    build_blocks,
    loss_objective,
    optimize_bqp,
    spectral_bit,
)
from .loss import LossKind

log = logging.getLogger(__name__)


def _load_training_inputs(args):
    features = dataio.read_features(args.features)
    config = dataio.read_config(args.config) if args.config else trainer.TrainConfig()
    labels = dataio.read_labels(args.labels, config.label_mode)
    if len(labels) != features.n_examples:
        raise DataError(
            f"feature rows ({features.n_examples}) and labels ({len(labels)}) disagree"
        )
    return features, labels, config


def cmd_train(args) -> int:
    features, labels, config = _load_training_inputs(args)
    sim = datasets.build_similarity(
        labels, config.label_mode, config.max_neighbors, config.seed
    )
    started = time.perf_counter()
    result = trainer.train(features, sim, config, debug=args.debug)
    elapsed = time.perf_counter() - started
    trainer.save(result.model, args.model_out)
    print(
        f"trained {config.bits} bits on {features.n_examples} examples "
        f"({sim.pair_count} pairs) in {elapsed:.1f}s -> {args.model_out}"
    )
    if args.diagnostics_out:
        trainer.write_diagnostics_csv(args.diagnostics_out, result.diagnostics)
        print(f"diagnostics -> {args.diagnostics_out}")
    return 0


def cmd_encode(args) -> int:
    model = trainer.load(args.model)
    features = dataio.read_features(args.features)
    codes = trainer.encode(model, features)
    dataio.write_codes(args.codes_out, codes)
    print(
        f"encoded {codes.n_examples} examples at {codes.bit_count} bits "
        f"-> {args.codes_out}"
    )
    return 0


def cmd_eval(args) -> int:
    db_labels_path = args.db_labels or args.labels
    query_labels_path = args.query_labels or args.labels
    if not db_labels_path or not query_labels_path:
        raise UsageError("need --labels or both --db-labels and --query-labels")
    db = dataio.read_codes(args.db_codes)
    queries = dataio.read_codes(args.query_codes)
    db_labels = dataio.read_labels(db_labels_path, args.label_mode)
    query_labels = dataio.read_labels(query_labels_path, args.label_mode)
    if len(db_labels) != db.n_examples or len(query_labels) != queries.n_examples:
        raise DataError("label counts do not match the code matrices")
    if args.label_mode == "multiclass":
        oracle = evalkit.RelevanceOracle.multiclass(query_labels, db_labels)
    else:
        oracle = evalkit.RelevanceOracle.multilabel(query_labels, db_labels)
    metrics = evalkit.retrieval_metrics(queries, db, oracle, args.precision_k)
    rows = [
        (f"precision_at_{args.precision_k}", metrics["precision_at_k"]),
        ("map", metrics["map"]),
        ("pr_auc", metrics["pr_auc"]),
    ]
    if args.knn:
        acc = evalkit.knn_accuracy(queries, db, db_labels, query_labels, args.knn)
        rows.append((f"knn_accuracy_{args.knn}", acc))
    tagged = [
        (name, value, db.bit_count, args.method, args.seed) for name, value in rows
    ]
    print(evalkit.format_metrics_table(tagged), end="")
    if args.csv_out:
        evalkit.write_metrics_csv(args.csv_out, tagged)
        print(f"metrics -> {args.csv_out}")
    return 0


def cmd_infer_bench(args) -> int:
    labels = dataio.read_labels(args.labels, args.label_mode)
    if args.features:
        features = dataio.read_features(args.features)
        if features.n_examples != len(labels):
            raise DataError("feature rows and labels disagree")
    kind = LossKind.from_string(args.loss)
    n = len(labels)
    rows = []
    for seed in range(args.seeds):
        sim = datasets.build_similarity(
            labels, args.label_mode, args.max_neighbors, seed
        )
        states = PairStates.initial(sim)
        bqp = BqpInstance.from_loss(kind, states)
        rng = np.random.default_rng(seed)
        init = rng.choice(np.array([-1, 1], dtype=np.int8), size=n)
        covers = {
            "blockgc": lambda: build_blocks(sim, np.random.default_rng(seed)),
            "icm": lambda: BlockCover.singletons(n),
        }
        for method in ("blockgc", "icm"):
            started = time.perf_counter()
            cover = covers[method]()
            codes = optimize_bqp(
                bqp, cover, init, args.sweeps, np.random.default_rng(seed)
            )
            elapsed = time.perf_counter() - started
            rows.append(
                (
                    method,
                    seed,
                    bqp.objective(codes),
                    loss_objective(kind, states, codes),
                    elapsed,
                )
            )
        started = time.perf_counter()
        result = spectral_bit(bqp, seed=seed)
        elapsed = time.perf_counter() - started
        rows.append(
            (
                "spectral",
                seed,
                result.objective,
                loss_objective(kind, states, result.codes),
                elapsed,
            )
        )
    header = f"{'method':<10} {'seed':>4} {'objective':>14} {'loss/pair':>10} {'seconds':>8}"
    print(header)
    for method, seed, obj, norm, secs in rows:
        print(f"{method:<10} {seed:>4} {obj:>14.6g} {norm:>10.6g} {secs:>8.3f}")
    if args.csv_out:
        with open(args.csv_out, "w", encoding="utf-8") as fh:
            fh.write("method,seed,objective,loss_per_pair,seconds\n")
            for method, seed, obj, norm, secs in rows:
                fh.write(f"{method},{seed},{obj!r},{norm!r},{secs!r}\n")
        print(f"bench -> {args.csv_out}")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "clusters":
        data = datasets.gaussian_clusters(
            args.n_db,
            args.n_query,
            n_dims=args.dims,
            n_clusters=args.clusters,
            noise=args.noise,
            seed=args.seed,
        )
    else:
        data = datasets.xor_clusters(
            args.n_db, args.n_query, n_dims=args.dims, noise=args.noise, seed=args.seed
        )
    for split, (feats, labels) in (("db", data.db()), ("query", data.query())):
        dataio.write_features(out / f"{split}_features.fhfm", feats)
        dataio.write_labels(out / f"{split}_labels.txt", labels)
    print(f"wrote {args.kind} dataset ({args.n_db} db + {args.n_query} query) -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fasthash",
        description="Supervised hashing: graph-cut code inference + boosted trees",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a hashing model")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--config", help="key=value config file (defaults when omitted)")
    p.add_argument("--model-out", required=True)
    p.add_argument("--diagnostics-out", help="per-bit CSV trace")
    p.add_argument("--debug", action="store_true", help="enable invariant checks")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="encode features with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--codes-out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("eval", help="Hamming-ranking retrieval metrics")
    p.add_argument("--db-codes", required=True)
    p.add_argument("--query-codes", required=True)
    p.add_argument("--labels", help="shared label file for db and queries")
    p.add_argument("--db-labels")
    p.add_argument("--query-labels")
    p.add_argument("--label-mode", choices=("multiclass", "multilabel"), default="multiclass")
    p.add_argument("--precision-k", type=int, default=evalkit.DEFAULT_PRECISION_K)
    p.add_argument("--knn", type=int, help="also report K-NN classification accuracy")
    p.add_argument("--csv-out")
    p.add_argument("--method", default="", help="method tag for the CSV")
    p.add_argument("--seed", default="", help="seed tag for the CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "infer-bench", help="compare blockgc/icm/spectral on one bit"
    )
    p.add_argument("--labels", required=True)
    p.add_argument("--features", help="optional, only checked for row count")
    p.add_argument("--label-mode", choices=("multiclass", "multilabel"), default="multiclass")
    p.add_argument("--loss", default="ksh")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--sweeps", type=int, default=2)
    p.add_argument("--max-neighbors", type=int, default=100)
    p.add_argument("--csv-out")
    p.set_defaults(func=cmd_infer_bench)

    p = sub.add_parser("synth", help="write a synthetic benchmark dataset")
    p.add_argument("--kind", choices=("clusters", "xor"), default="clusters")
    p.add_argument("--n-db", type=int, default=2000)
    p.add_argument("--n-query", type=int, default=500)
    p.add_argument("--dims", type=int, default=100)
    p.add_argument("--clusters", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.35)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except FastHashError as exc:
        print(f"fasthash-error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"fasthash-error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # keep failures one-line and machine-parsable
        print(f"fasthash-error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
