"""Cross-validated comparison of selection methods over a labeled testbed.

Each fold trains every training-phase method on the train datasets only,
selects one model per held-out dataset, and reports that model's true
average precision read from the precomputed performance matrix.  Per-method
aggregates are mean AP, average rank (lower is better), and pairwise
signed-rank p-values.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from . import baselines, metalearner, regressor
from .datasets import Dataset, FoldAssignment
from .detectors import ModelSpec, enumerate_model_set
from .errors import InvalidConfigError, TooFewPairsError
from .metrics import average_precision, wilcoxon_signed_rank
from .pmatrix import PerformanceMatrix

KNOWN_METHODS = (
    "metaod", "metaod_c", "metaod_f", "gb", "isac", "as", "ss", "alors",
    "me", "rs", "eub", "lof", "iforest",
)

_USES_META_FEATURES = {"metaod", "metaod_f", "metaod_c", "isac", "as", "ss", "alors"}

_FIXED_SHORTCUTS = {
    "lof": ("LOF", {"n_neighbors": 20, "distance": "euclidean"}),
    "iforest": ("IFOREST", {"n_estimators": 100, "max_features": 0.9}),
}


@dataclass(frozen=True)
class EvalConfig:
    methods: tuple = ("metaod", "gb", "rs")
    n_trials: int = 5
    seed: int = 0
    train: metalearner.TrainConfig = field(default_factory=metalearner.TrainConfig)
    compute_timing: bool = False


@dataclass
class EvalReport:
    methods: list[str]
    dataset_names: list[str]
    ap: dict                      # method -> list of per-dataset AP
    map: dict                     # method -> mean AP
    avg_rank: dict                # method -> mean rank across datasets
    wilcoxon: dict                # "m1|m2" -> two-sided p (None if too few pairs)
    fold_of: dict                 # dataset name -> fold
    seed: int
    chosen: dict = field(default_factory=dict)    # method -> list of model index or None
    timing: dict = field(default_factory=dict)    # method -> timing lists

    def to_dict(self) -> dict:
        return {
            "methods": self.methods,
            "dataset_names": self.dataset_names,
            "ap": self.ap,
            "map": self.map,
            "avg_rank": self.avg_rank,
            "wilcoxon": self.wilcoxon,
            "fold_of": self.fold_of,
            "seed": self.seed,
            "chosen": self.chosen,
            "timing": self.timing,
        }

    def render_text(self) -> str:
        lines = []
        order = sorted(self.methods, key=lambda m: self.avg_rank[m])
        lines.append(f"{'method':<12}{'MAP':>10}{'avg rank':>12}{'med sel (s)':>14}")
        for m in order:
            sel = ""
            if m in self.timing and self.timing[m].get("selection_s"):
                sel = f"{float(np.median(self.timing[m]['selection_s'])):.4f}"
            lines.append(f"{m:<12}{self.map[m]:>10.4f}{self.avg_rank[m]:>12.2f}{sel:>14}")
        lines.append("")
        lines.append("pairwise Wilcoxon signed-rank p-values (two-sided):")
        for pair, p in sorted(self.wilcoxon.items()):
            shown = "n/a" if p is None else f"{p:.4f}"
            lines.append(f"  {pair:<28}{shown}")
        if self.timing:
            lines.append("")
            lines.append("selection overhead vs. selected-model fit time:")
            for m in order:
                t = self.timing.get(m, {})
                if t.get("pct_of_fit"):
                    lines.append(
                        f"  {m:<12}median selection {np.median(t['selection_s']):.4f} s, "
                        f"median overhead {np.median(t['pct_of_fit']):.1f}% of fit"
                    )
        return "\n".join(lines) + "\n"


def _fixed_index(method: str, specs: list[ModelSpec]) -> int:
    family, params = _FIXED_SHORTCUTS[method]
    for s in specs:
        if s.family == family and s.params == params:
            return s.index
    raise InvalidConfigError(f"fixed model for {method} not in the grid")


def _derived(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def run_cv(
    datasets: list[Dataset],
    performance: PerformanceMatrix,
    folds: FoldAssignment,
    methods: tuple | list,
    cfg: EvalConfig = EvalConfig(),
    meta_features: np.ndarray | None = None,
) -> EvalReport:
    """Evaluate selection methods with the given fold layout."""
    methods = [m.lower() for m in methods]
    for m in methods:
        if m not in KNOWN_METHODS:
            raise InvalidConfigError(f"unknown method {m!r}; known: {', '.join(KNOWN_METHODS)}")
    n = len(datasets)
    P = performance.values
    specs = enumerate_model_set()
    if P.shape != (n, len(specs)):
        raise InvalidConfigError(f"performance matrix is {P.shape}, expected ({n}, {len(specs)})")

    needs_mf = bool(_USES_META_FEATURES.intersection(methods))
    extract_seconds = np.zeros(n)
    # meta-features are unsupervised, so one pass over all datasets is leak-free
    M = meta_features
    if needs_mf and M is None:
        from . import metafeatures as _mf
        rows = []
        for i, ds in enumerate(datasets):
            t0 = time.perf_counter()
            rows.append(_mf.extract(ds, metalearner.meta_feature_seed(cfg.seed, i)))
            extract_seconds[i] = time.perf_counter() - t0
        M = np.vstack(rows)

    ap: dict = {m: [None] * n for m in methods}
    chosen: dict = {m: [None] * n for m in methods}
    select_seconds: dict = {m: np.zeros(n) for m in methods}

    me_cache: dict[int, float] = {}

    for fold in range(folds.n_folds):
        train_idx = folds.train_indices(fold)
        test_idx = folds.test_indices(fold)
        P_train = P[train_idx]
        M_train = M[train_idx] if M is not None else None

        learners: dict[str, metalearner.MetaLearner] = {}
        for m in ("metaod", "metaod_f"):
            if m in methods:
                rank = replace(cfg.train.rank, update_u=(m == "metaod"))
                tcfg = replace(cfg.train, seed=_derived(cfg.seed, 19, fold), rank=rank)
                sub = PerformanceMatrix(
                    P_train,
                    [performance.dataset_names[i] for i in train_idx],
                    performance.model_names,
                )
                corpus = [datasets[i] for i in train_idx]
                learners[m], _, _ = metalearner.train_offline(
                    corpus, tcfg, performance=sub, meta_features=M_train
                )

        for m in methods:
            for i in test_idx:
                t0 = time.perf_counter()
                idx = None
                if m in ("metaod", "metaod_f"):
                    learner = learners[m]
                    z = regressor.embed(learner.phi, M[i])
                    u = regressor.predict_latent(learner.forest, z)
                    idx = int(np.argmax(learner.V @ u))
                elif m == "gb":
                    idx = baselines.gb_select(P_train)
                elif m == "isac":
                    idx = baselines.isac_select(M_train, P_train, M[i], seed=_derived(cfg.seed, 23, fold))
                elif m == "as":
                    idx = baselines.as_select(M_train, P_train, M[i])
                elif m == "ss":
                    idx = baselines.ss_select(M_train, P_train, M[i], seed=_derived(cfg.seed, 29, fold))
                elif m == "alors":
                    idx = baselines.alors_select(
                        M_train, P_train, M[i], k=cfg.train.k, seed=_derived(cfg.seed, 31, fold)
                    )
                elif m == "metaod_c":
                    idx = baselines.metaod_c_select(
                        M_train, P_train, M[i], k=cfg.train.k, seed=_derived(cfg.seed, 37, fold)
                    )
                elif m == "rs":
                    idx = baselines.rs_select(len(specs), seed=_derived(cfg.seed, 41, i))
                elif m in ("lof", "iforest"):
                    idx = _fixed_index(m, specs)
                elif m == "me":
                    if i not in me_cache:
                        me_cache[i] = _me_average_precision(datasets[i], specs, cfg.n_trials, _derived(cfg.seed, 43, i))
                    ap[m][i] = me_cache[i]
                elif m == "eub":
                    sibs = folds.siblings_of(i)
                    ap[m][i] = baselines.eub_value(P, i, sibs)
                elapsed = time.perf_counter() - t0
                if m in _USES_META_FEATURES:
                    elapsed += extract_seconds[i]
                select_seconds[m][i] = elapsed
                if idx is not None:
                    chosen[m][i] = idx
                    ap[m][i] = float(P[i, idx])

    report_ap = {m: [float(v) for v in ap[m]] for m in methods}
    maps = {m: float(np.mean(report_ap[m])) for m in methods}
    ranks = np.vstack([
        rankdata(-np.array([report_ap[m][i] for m in methods]), method="average")
        for i in range(n)
    ])
    avg_rank = {m: float(ranks[:, j].mean()) for j, m in enumerate(methods)}

    wilcoxon: dict = {}
    for a in range(len(methods)):
        for b_ in range(a + 1, len(methods)):
            ma, mb = methods[a], methods[b_]
            try:
                p = wilcoxon_signed_rank(report_ap[ma], report_ap[mb])
            except TooFewPairsError:
                p = None
            wilcoxon[f"{ma}|{mb}"] = p

    timing: dict = {}
    if cfg.compute_timing:
        from .detectors import fit_score as _fit_score
        for m in methods:
            entry = {"selection_s": [float(v) for v in select_seconds[m]]}
            if any(c is not None for c in chosen[m]):
                fit_s, pct = [], []
                for i in range(n):
                    if chosen[m][i] is None:
                        continue
                    spec = specs[chosen[m][i]]
                    t0 = time.perf_counter()
                    _fit_score(spec, datasets[i], _derived(cfg.seed, 47, i))
                    ft = time.perf_counter() - t0
                    fit_s.append(ft)
                    pct.append(100.0 * select_seconds[m][i] / ft if ft > 0 else float("inf"))
                entry["fit_s"] = fit_s
                entry["pct_of_fit"] = pct
            timing[m] = entry

    return EvalReport(
        methods=methods,
        dataset_names=[ds.name for ds in datasets],
        ap=report_ap,
        map=maps,
        avg_rank=avg_rank,
        wilcoxon=wilcoxon,
        fold_of={datasets[i].name: folds.fold_of_dataset[i] for i in range(n)},
        seed=cfg.seed,
        chosen=chosen,
        timing=timing,
    )


def _me_average_precision(data: Dataset, specs, n_trials: int, base_seed: int) -> float:
    total = 0.0
    for t in range(n_trials):
        scores = baselines.me_score(specs, data, base_seed + t)
        total += average_precision(scores, data.labels)
    return total / n_trials


def loocv_folds(n: int, motherset_of: dict | None = None) -> FoldAssignment:
    """Leave-one-out layout: each dataset is its own test fold."""
    return FoldAssignment({i: i for i in range(n)}, n, motherset_of or {})
