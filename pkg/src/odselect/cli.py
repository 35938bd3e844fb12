"""Command-line surface: testbed generation, matrix building, training,
single-shot selection, and cross-validated evaluation with figures."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import figures
from .datasets import FoldAssignment, TestbedConfig, load_csv, make_poc_testbed, save_csv
from .errors import InvalidConfigError, OdselectError
from .evaluation import EvalConfig, loocv_folds, run_cv
from .metalearner import TrainConfig, load, save, select_model, train_offline
from .metrics import average_precision
from .pmatrix import build_performance_matrix, load_matrix_csv, save_matrix_csv
from .rankmf import OptimizerConfig


def _default_threads() -> int:
    env = os.environ.get("METAOD_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--threads", type=int, default=_default_threads(),
                        help="worker pool size (default: METAOD_THREADS or 1)")
    parser.add_argument("--verbose", action="store_true")


def _print_config(args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    print("resolved config: " + json.dumps(resolved, sort_keys=True, default=str))


def _load_corpus(corpus_dir: str, label_col: str):
    paths = sorted(Path(corpus_dir).glob("*.csv"))
    if not paths:
        raise InvalidConfigError(f"no CSV files in {corpus_dir}")
    return [load_csv(p, label_column=label_col) for p in paths]


def _align_to_matrix(datasets, matrix):
    by_name = {ds.name: ds for ds in datasets}
    missing = [n for n in matrix.dataset_names if n not in by_name]
    if missing:
        raise InvalidConfigError(f"corpus lacks datasets named in matrix: {missing[:5]}")
    return [by_name[n] for n in matrix.dataset_names]


def cmd_gen_testbed(args) -> int:
    cfg = TestbedConfig(
        n_mothersets=args.mothersets,
        siblings_per_motherset=args.siblings,
        samples_per_childset=args.samples,
        dims=args.dims,
        outlier_frequency=args.freq,
        clusteredness=args.clusteredness,
        irrelevant_feature_fraction=args.irrelevant,
        seed=args.seed,
    )
    datasets, folds = make_poc_testbed(cfg, args.folds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for ds in datasets:
        save_csv(ds, out / f"{ds.name}.csv")
    manifest = {
        "n_folds": folds.n_folds,
        "folds": {datasets[i].name: f for i, f in folds.fold_of_dataset.items()},
        "mothersets": {datasets[i].name: m for i, m in folds.motherset_of.items()},
        "config": {
            "n_mothersets": cfg.n_mothersets,
            "siblings_per_motherset": cfg.siblings_per_motherset,
            "samples_per_childset": cfg.samples_per_childset,
            "dims": cfg.dims,
            "outlier_frequency": cfg.outlier_frequency,
            "clusteredness": cfg.clusteredness,
            "irrelevant_feature_fraction": cfg.irrelevant_feature_fraction,
            "seed": cfg.seed,
        },
    }
    with open(out / "folds.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(f"wrote {len(datasets)} datasets and folds.json to {out}")
    return 0


def cmd_build_p(args) -> int:
    corpus = _load_corpus(args.corpus, args.label_col)
    from .detectors import enumerate_model_set
    specs = enumerate_model_set()
    journal = args.out + ".journal.jsonl"
    progress = None
    if args.verbose:
        def progress(done, total):
            print(f"\r{done}/{total} cells", end="", flush=True)
    t0 = time.perf_counter()
    matrix = build_performance_matrix(
        corpus, specs, n_trials=args.trials, base_seed=args.seed,
        n_workers=args.threads, journal_path=journal, progress=progress,
    )
    if args.verbose:
        print()
    save_matrix_csv(matrix, args.out)
    print(f"wrote {matrix.n_datasets}x{matrix.n_models} matrix to {args.out} "
          f"in {time.perf_counter() - t0:.1f}s (journal: {journal})")
    return 0


def cmd_train(args) -> int:
    if not os.path.exists(args.p):
        raise InvalidConfigError(f"performance matrix not found: {args.p}")
    corpus = _load_corpus(args.corpus, args.label_col)
    matrix = load_matrix_csv(args.p)
    corpus = _align_to_matrix(corpus, matrix)
    cfg = TrainConfig(
        k=args.k, n_trials=args.trials, seed=args.seed, threads=args.threads,
        rank=OptimizerConfig(max_epochs=args.epochs),
    )
    learner, _, report = train_offline(corpus, cfg, performance=matrix)
    save(learner, args.out)
    report_path = args.out + ".report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    figures.plot_loss_curve(report["loss_curve"], args.out + ".loss.png")
    print(f"wrote learner to {args.out} (k={report['k']}, "
          f"training top-1 regret {report['training_top1_regret']:.4f}); "
          f"report: {report_path}")
    return 0


def cmd_select(args) -> int:
    learner = load(args.learner)
    data = load_csv(args.data, label_column=args.label_col)
    chosen, predicted = select_model(learner, data, seed=args.seed)
    order = np.argsort(-predicted, kind="stable")[: args.top]
    for rank, j in enumerate(order, start=1):
        spec = learner.model_list[j]
        print(f"{rank}\t{spec}\tpredicted={predicted[j]:.6f}")
    if args.top == 1:
        assert learner.model_list[order[0]] == chosen
    return 0


def cmd_evaluate(args) -> int:
    if not os.path.exists(args.p):
        raise InvalidConfigError(f"performance matrix not found: {args.p}")
    corpus = _load_corpus(args.corpus, args.label_col)
    matrix = load_matrix_csv(args.p)
    corpus = _align_to_matrix(corpus, matrix)
    n = len(corpus)
    if args.mode == "poc":
        if not args.folds or not os.path.exists(args.folds):
            raise InvalidConfigError("--folds manifest required in poc mode")
        with open(args.folds, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        name_to_idx = {ds.name: i for i, ds in enumerate(corpus)}
        fold_of = {name_to_idx[name]: f for name, f in manifest["folds"].items()}
        mother_of = {name_to_idx[name]: m for name, m in manifest.get("mothersets", {}).items()}
        folds = FoldAssignment(fold_of, manifest["n_folds"], mother_of)
    else:
        folds = loocv_folds(n)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    cfg = EvalConfig(
        methods=methods, n_trials=args.trials, seed=args.seed,
        train=TrainConfig(k=args.k, n_trials=args.trials, seed=args.seed, threads=args.threads),
        compute_timing=not args.no_timing,
    )
    report = run_cv(corpus, matrix, folds, methods, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    text = report.render_text()
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(text)
    figures.plot_rank_map(report, out / "rank_map.png")
    if report.timing:
        figures.plot_selection_latency(report, out / "selection_latency.png")
    print(text)
    print(f"report written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odselect",
        description="Meta-learned single-shot model selection for outlier detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-testbed", help="generate a synthetic sibling-structured testbed")
    p.add_argument("--mothersets", type=int, default=10)
    p.add_argument("--siblings", type=int, default=5)
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--dims", type=int, default=10)
    p.add_argument("--freq", type=float, default=0.1)
    p.add_argument("--clusteredness", type=float, default=1.0)
    p.add_argument("--irrelevant", type=float, default=0.0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_gen_testbed)

    p = sub.add_parser("build-p", help="evaluate the model grid over a corpus (resumable)")
    p.add_argument("--corpus", required=True, help="directory of labeled CSVs")
    p.add_argument("--out", required=True, help="output matrix CSV")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--label-col", default="is_outlier")
    _common(p)
    p.set_defaults(func=cmd_build_p)

    p = sub.add_parser("train", help="train the meta-learner from a corpus and its matrix")
    p.add_argument("--corpus", required=True)
    p.add_argument("--p", required=True, help="performance matrix CSV from build-p")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--label-col", default="is_outlier")
    p.add_argument("--out", required=True, help="learner JSON path")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select", help="pick a model for a new dataset (labels ignored)")
    p.add_argument("--learner", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default=None)
    p.add_argument("--top", type=int, default=1)
    _common(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="cross-validated method comparison with figures")
    p.add_argument("--corpus", required=True)
    p.add_argument("--p", required=True)
    p.add_argument("--folds", default=None, help="folds.json from gen-testbed (poc mode)")
    p.add_argument("--methods", default="metaod,gb,rs")
    p.add_argument("--mode", choices=("poc", "loocv"), default="poc")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--no-timing", action="store_true")
    p.add_argument("--label-col", default="is_outlier")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _print_config(args)
    try:
        return args.func(args)
    except InvalidConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except OdselectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
