"""The discrete model space and the scorers behind it.

Every model maps a dataset to one outlier score per row, oriented so that a
larger score means more outlying.  Neighbor-based families share one exact
(brute-force) neighbor query per metric; tree and projection ensembles are
seeded and reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import _kernels
from .datasets import Dataset
from .errors import DegenerateDatasetError, InvalidHyperparameterError
from .metrics import average_precision

EPS = 1e-12

FAMILIES = ("LOF", "KNN", "COF", "ABOD", "IFOREST", "HBOS", "LODA", "PCA_RECON")
DETERMINISTIC_FAMILIES = frozenset({"LOF", "KNN", "COF", "ABOD", "HBOS", "PCA_RECON"})

NEIGHBOR_GRID_LARGE = (1, 5, 10, 15, 20, 25, 50, 60, 70, 80, 90, 100)
NEIGHBOR_GRID_SMALL = (3, 5, 10, 15, 20, 25, 50)
LOF_DISTANCES = ("manhattan", "euclidean", "minkowski")
KNN_METHODS = ("largest", "mean", "median")
IFOREST_ESTIMATORS = (10, 20, 30, 40, 50, 75, 100, 150, 200)
IFOREST_MAX_FEATURES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
HBOS_HISTOGRAMS = (5, 10, 20, 30, 40, 50, 75, 100)
HBOS_TOLERANCES = (0.1, 0.2, 0.3, 0.4, 0.5)
LODA_BINS = (10, 20, 30, 40, 50, 75, 100, 150, 200)
LODA_CUTS = (5, 10, 15, 20, 25, 30)

IFOREST_SUBSAMPLE = 256
MINKOWSKI_EXPONENT = 3.0

_METRIC_CDIST = {
    "manhattan": ("cityblock", {}),
    "euclidean": ("euclidean", {}),
    "minkowski": ("minkowski", {"p": MINKOWSKI_EXPONENT}),
}


@dataclass(frozen=True)
class ModelSpec:
    """One point of the model space: a detector family plus fixed hyperparameters."""

    family: str
    params: dict = field(default_factory=dict)
    index: int = -1

    def __str__(self) -> str:
        inner = ",".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.family}[{inner}]"


def enumerate_model_set() -> list[ModelSpec]:
    """The canonical 261-model enumeration, stable across runs.

    Families appear in FAMILIES order (PCA_RECON carries no grid and is used
    only as a landmarker); within a family the first hyperparameter is the
    outer loop.
    """
    specs: list[ModelSpec] = []

    def add(family, params):
        specs.append(ModelSpec(family, params, index=len(specs)))

    for k in NEIGHBOR_GRID_LARGE:
        for dist in LOF_DISTANCES:
            add("LOF", {"n_neighbors": k, "distance": dist})
    for k in NEIGHBOR_GRID_LARGE:
        for method in KNN_METHODS:
            add("KNN", {"n_neighbors": k, "method": method})
    for k in NEIGHBOR_GRID_SMALL:
        add("COF", {"n_neighbors": k})
    for k in NEIGHBOR_GRID_SMALL:
        add("ABOD", {"n_neighbors": k})
    for t in IFOREST_ESTIMATORS:
        for mf in IFOREST_MAX_FEATURES:
            add("IFOREST", {"n_estimators": t, "max_features": mf})
    for b in HBOS_HISTOGRAMS:
        for tol in HBOS_TOLERANCES:
            add("HBOS", {"n_histograms": b, "tolerance": tol})
    for b in LODA_BINS:
        for c in LODA_CUTS:
            add("LODA", {"n_bins": b, "n_random_cuts": c})
    return specs


def spec_name(spec: ModelSpec) -> str:
    return str(spec)


def spec_from_name(name: str) -> ModelSpec:
    """Parse the `FAMILY[key=value,...]` form emitted by str(spec)."""
    family, _, rest = name.partition("[")
    family = family.strip().upper()
    if family not in FAMILIES:
        raise InvalidHyperparameterError(f"unknown family {family!r}")
    params: dict = {}
    rest = rest.rstrip("]").strip()
    if rest:
        for item in rest.split(","):
            key, _, value = item.partition("=")
            key = key.strip()
            value = value.strip()
            try:
                params[key] = int(value)
            except ValueError:
                try:
                    params[key] = float(value)
                except ValueError:
                    params[key] = value
    return ModelSpec(family, params)


# ---------------------------------------------------------------------------
# Neighbor machinery (shared by LOF / KNN / COF / ABOD)
# ---------------------------------------------------------------------------

def _neighbor_query(X: np.ndarray, k: int, metric: str) -> tuple[np.ndarray, np.ndarray]:
    """Distances and indices of each row's k nearest other rows.

    Exact brute-force search; ties are broken by the smaller row index (stable
    sort), so slicing a larger query reproduces a smaller one bitwise.
    """
    n = X.shape[0]
    if k >= n:
        raise InvalidHyperparameterError(f"n_neighbors={k} needs more than {k} rows, got {n}")
    name, kwargs = _METRIC_CDIST[metric]
    dist = np.empty((n, k))
    idx = np.empty((n, k), dtype=np.int64)
    block = max(1, 4_000_000 // n)
    for start in range(0, n, block):
        stop = min(start + block, n)
        D = cdist(X[start:stop], X, name, **kwargs)
        D[np.arange(stop - start), np.arange(start, stop)] = np.inf
        order = np.argsort(D, axis=1, kind="stable")[:, :k]
        idx[start:stop] = order
        dist[start:stop] = np.take_along_axis(D, order, axis=1)
    return dist, idx


def _knn_scores(dist: np.ndarray, method: str) -> np.ndarray:
    if method == "largest":
        return dist[:, -1].copy()
    if method == "mean":
        return dist.mean(axis=1)
    if method == "median":
        return np.median(dist, axis=1)
    raise InvalidHyperparameterError(f"unknown KNN method {method!r}")


def _lof_scores(dist: np.ndarray, idx: np.ndarray) -> np.ndarray:
    k_dist = dist[:, -1]
    reach = np.maximum(k_dist[idx], dist)
    lrd = 1.0 / np.maximum(reach.mean(axis=1), EPS)
    return lrd[idx].mean(axis=1) / lrd


def _cof_scores(X: np.ndarray, idx: np.ndarray) -> np.ndarray:
    k = idx.shape[1]
    ac = _kernels.chaining_distances(X, idx)
    neighbor_sum = ac[idx].sum(axis=1)
    return ac * k / np.maximum(neighbor_sum, EPS)


def _abod_scores(X: np.ndarray, dist: np.ndarray, idx: np.ndarray) -> np.ndarray:
    n, k = idx.shape
    iu, ju = np.triu_indices(k, 1)
    scores = np.empty(n)
    block = max(1, 2_000_000 // (k * k))
    for start in range(0, n, block):
        stop = min(start + block, n)
        D = X[idx[start:stop]] - X[start:stop, None, :]
        gram = np.einsum("bkp,blp->bkl", D, D)
        norms = np.maximum(np.einsum("bkk->bk", gram), EPS)
        weighted = gram / (norms[:, :, None] * norms[:, None, :])
        pairs = weighted[:, iu, ju]
        scores[start:stop] = -pairs.var(axis=1)
    return scores


# ---------------------------------------------------------------------------
# Isolation forest
# ---------------------------------------------------------------------------

@dataclass
class IsolationForestModel:
    node_feat: np.ndarray     # (trees, nodes) split feature, -1 for leaves
    node_thresh: np.ndarray   # (trees, nodes)
    node_size: np.ndarray     # (trees, nodes) resident points after growth
    height_limit: int
    subsample: int

    @property
    def n_trees(self) -> int:
        return self.node_feat.shape[0]

    def score(self, X: np.ndarray) -> np.ndarray:
        depths = np.zeros(X.shape[0])
        _kernels.accumulate_forest_depths(
            np.ascontiguousarray(X), self.node_feat, self.node_thresh,
            self.node_size, self.height_limit, depths,
        )
        mean_depth = depths / self.n_trees
        c = _kernels.average_path_length(self.subsample)
        return np.power(2.0, -mean_depth / c)

    def _leaf_mask(self) -> np.ndarray:
        return (self.node_size > 0) & (self.node_feat < 0)

    def tree_depths(self) -> np.ndarray:
        """Maximum leaf depth per tree."""
        depth_of_node = np.floor(np.log2(np.arange(self.node_feat.shape[1]) + 1)).astype(int)
        leaves = self._leaf_mask()
        return np.array([
            depth_of_node[leaves[t]].max() if leaves[t].any() else 0
            for t in range(self.n_trees)
        ], dtype=float)

    def leaf_counts(self) -> np.ndarray:
        return self._leaf_mask().sum(axis=1).astype(float)

    def feature_importances(self, p: int) -> np.ndarray:
        """Per-tree split counts per feature, normalized within each tree."""
        out = np.zeros((self.n_trees, p))
        for t in range(self.n_trees):
            feats = self.node_feat[t]
            feats = feats[feats >= 0]
            if feats.size:
                out[t] = np.bincount(feats, minlength=p) / feats.size
        return out


def iforest_fit(
    X: np.ndarray,
    n_estimators: int,
    max_features: float,
    rng: np.random.Generator,
    subsample: int = IFOREST_SUBSAMPLE,
) -> IsolationForestModel:
    n, p = X.shape
    sub = min(subsample, n)
    height_limit = max(1, math.ceil(math.log2(sub)))
    n_nodes = 2 ** (height_limit + 1) - 1
    n_feat = max(1, math.ceil(max_features * p))
    node_feat = np.empty((n_estimators, n_nodes), dtype=np.int64)
    node_thresh = np.empty((n_estimators, n_nodes))
    node_size = np.empty((n_estimators, n_nodes), dtype=np.int64)
    X = np.ascontiguousarray(X)
    all_rows = sub == n
    all_feats = n_feat == p
    feat_range = np.arange(p)
    for t in range(n_estimators):
        Xs = X if all_rows else np.ascontiguousarray(X[rng.choice(n, sub, replace=False)])
        pool = feat_range if all_feats else np.sort(rng.choice(p, n_feat, replace=False))
        uniforms = rng.random(2 * n_nodes + 2)
        _kernels.build_isolation_tree(
            Xs, pool, height_limit, uniforms,
            node_feat[t], node_thresh[t], node_size[t],
        )
    return IsolationForestModel(node_feat, node_thresh, node_size, height_limit, sub)


# ---------------------------------------------------------------------------
# Histogram models
# ---------------------------------------------------------------------------

@dataclass
class HbosModel:
    lows: np.ndarray        # (p,)
    widths: np.ndarray      # (p,) bin width, 0 for constant features
    densities: np.ndarray   # (p, bins) floored densities; constant rows hold 1

    def score(self, X: np.ndarray) -> np.ndarray:
        n, p = X.shape
        bins = self.densities.shape[1]
        total = np.zeros(n)
        for j in range(p):
            if self.widths[j] == 0.0:
                continue  # density 1 everywhere contributes -log(1) = 0
            pos = np.clip(((X[:, j] - self.lows[j]) / self.widths[j]).astype(np.int64), 0, bins - 1)
            total -= np.log(self.densities[j, pos] + EPS)
        return total


def hbos_fit(X: np.ndarray, n_histograms: int, tolerance: float) -> HbosModel:
    """Equal-width histograms per feature with sparse-bin density flooring.

    Bins with count <= tolerance * (n / n_histograms) are raised to that
    threshold count before converting to densities, so near-empty bins do not
    dominate the log scores.
    """
    n, p = X.shape
    lows = X.min(axis=0)
    highs = X.max(axis=0)
    widths = (highs - lows) / n_histograms
    densities = np.ones((p, n_histograms))
    floor = tolerance * n / n_histograms
    for j in range(p):
        if widths[j] == 0.0:
            continue
        pos = np.clip(((X[:, j] - lows[j]) / widths[j]).astype(np.int64), 0, n_histograms - 1)
        counts = np.bincount(pos, minlength=n_histograms).astype(float)
        counts = np.where(counts <= floor, floor, counts)
        densities[j] = counts / (n * widths[j])
    return HbosModel(lows, widths, densities)


@dataclass
class LodaModel:
    weights: np.ndarray     # (cuts, p) sparse random projections
    lows: np.ndarray        # (cuts,)
    widths: np.ndarray      # (cuts,)
    densities: np.ndarray   # (cuts, bins)

    def score(self, X: np.ndarray) -> np.ndarray:
        proj = X @ self.weights.T
        cuts, bins = self.densities.shape
        logs = np.zeros((X.shape[0], cuts))
        for c in range(cuts):
            if self.widths[c] == 0.0:
                continue
            pos = np.clip(((proj[:, c] - self.lows[c]) / self.widths[c]).astype(np.int64), 0, bins - 1)
            logs[:, c] = np.log(self.densities[c, pos] + EPS)
        return -logs.mean(axis=1)


def loda_fit(X: np.ndarray, n_bins: int, n_random_cuts: int, rng: np.random.Generator) -> LodaModel:
    n, p = X.shape
    nnz = max(1, math.ceil(math.sqrt(p)))
    weights = np.zeros((n_random_cuts, p))
    for c in range(n_random_cuts):
        pos = rng.choice(p, nnz, replace=False)
        weights[c, pos] = rng.standard_normal(nnz)
    proj = X @ weights.T
    lows = proj.min(axis=0)
    widths = (proj.max(axis=0) - lows) / n_bins
    densities = np.ones((n_random_cuts, n_bins))
    for c in range(n_random_cuts):
        if widths[c] == 0.0:
            continue
        pos = np.clip(((proj[:, c] - lows[c]) / widths[c]).astype(np.int64), 0, n_bins - 1)
        counts = np.bincount(pos, minlength=n_bins).astype(float)
        densities[c] = counts / (n * widths[c])
    return LodaModel(weights, lows, widths, densities)


# ---------------------------------------------------------------------------
# PCA reconstruction
# ---------------------------------------------------------------------------

@dataclass
class PcaReconModel:
    means: np.ndarray
    stds: np.ndarray
    components: np.ndarray          # (p, q) top components covering >= 90% variance
    explained_variance_ratio: np.ndarray
    singular_values: np.ndarray

    def score(self, X: np.ndarray) -> np.ndarray:
        Z = (X - self.means) / self.stds
        recon = (Z @ self.components) @ self.components.T
        return ((Z - recon) ** 2).sum(axis=1)


def pca_recon_fit(X: np.ndarray) -> PcaReconModel:
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    if not np.any(stds > 0):
        raise DegenerateDatasetError("all features are constant; PCA reconstruction undefined")
    stds = np.where(stds > 0, stds, 1.0)
    Z = (X - means) / stds
    _, s, vt = np.linalg.svd(Z, full_matrices=False)
    var = s ** 2
    evr = var / var.sum()
    q = int(np.searchsorted(np.cumsum(evr), 0.9) + 1)
    q = min(q, len(s))
    return PcaReconModel(means, stds, vt[:q].T, evr, s)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def _validate_neighbors(k: int, n: int) -> None:
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidHyperparameterError(f"n_neighbors must be a positive int, got {k!r}")
    if k >= n:
        raise InvalidHyperparameterError(f"n_neighbors={k} requires more than {k} rows, got {n}")


def fit_score(spec: ModelSpec, data: Dataset, seed: int = 0) -> np.ndarray:
    """Fit one model on a dataset and return its outlier scores (larger = more outlying)."""
    X = data.X
    n = data.n
    family = spec.family
    params = spec.params
    if family == "KNN":
        k = params["n_neighbors"]
        _validate_neighbors(k, n)
        dist, _ = _neighbor_query(X, k, "euclidean")
        return _knn_scores(dist, params["method"])
    if family == "LOF":
        k = params["n_neighbors"]
        _validate_neighbors(k, n)
        dist, idx = _neighbor_query(X, k, params["distance"])
        return _lof_scores(dist, idx)
    if family == "COF":
        k = params["n_neighbors"]
        _validate_neighbors(k, n)
        _, idx = _neighbor_query(X, k, "euclidean")
        return _cof_scores(X, idx)
    if family == "ABOD":
        k = params["n_neighbors"]
        _validate_neighbors(k, n)
        if k < 2:
            raise InvalidHyperparameterError("ABOD needs n_neighbors >= 2")
        dist, idx = _neighbor_query(X, k, "euclidean")
        return _abod_scores(X, dist, idx)
    if family == "IFOREST":
        rng = np.random.default_rng(seed)
        model = iforest_fit(X, params["n_estimators"], params["max_features"], rng)
        return model.score(X)
    if family == "HBOS":
        model = hbos_fit(X, params["n_histograms"], params["tolerance"])
        return model.score(X)
    if family == "LODA":
        rng = np.random.default_rng(seed)
        model = loda_fit(X, params["n_bins"], params["n_random_cuts"], rng)
        return model.score(X)
    if family == "PCA_RECON":
        return pca_recon_fit(X).score(X)
    raise InvalidHyperparameterError(f"unknown family {family!r}")


def score_to_ap_trials(spec: ModelSpec, data: Dataset, n_trials: int, base_seed: int) -> float:
    """Average precision of a model, averaged over seeded trials.

    Deterministic families short-circuit to a single trial.
    """
    if data.labels is None:
        raise DegenerateDatasetError(f"{data.name}: labels required to evaluate performance")
    trials = 1 if spec.family in DETERMINISTIC_FAMILIES else n_trials
    total = 0.0
    for t in range(trials):
        scores = fit_score(spec, data, base_seed + t)
        total += average_precision(scores, data.labels)
    return total / trials


def score_models(
    specs: list[ModelSpec],
    data: Dataset,
    n_trials: int,
    base_seed: int,
) -> np.ndarray:
    """Evaluate many models on one dataset, sharing neighbor queries per family.

    Returns the per-spec trial-averaged average precision, bitwise identical
    to calling score_to_ap_trials spec by spec.
    """
    if data.labels is None:
        raise DegenerateDatasetError(f"{data.name}: labels required to evaluate performance")
    X, y = data.X, data.labels
    aps = np.empty(len(specs))

    def ap_of(scores):
        return average_precision(scores, y)

    by_family: dict[str, list[tuple[int, ModelSpec]]] = {}
    for pos, spec in enumerate(specs):
        by_family.setdefault(spec.family, []).append((pos, spec))

    for family, members in by_family.items():
        if family == "KNN":
            kmax = max(s.params["n_neighbors"] for _, s in members)
            _validate_neighbors(kmax, data.n)
            dist, _ = _neighbor_query(X, kmax, "euclidean")
            for pos, s in members:
                k = s.params["n_neighbors"]
                aps[pos] = ap_of(_knn_scores(dist[:, :k], s.params["method"]))
        elif family == "LOF":
            by_metric: dict[str, list[tuple[int, ModelSpec]]] = {}
            for pos, s in members:
                by_metric.setdefault(s.params["distance"], []).append((pos, s))
            for metric, group in by_metric.items():
                kmax = max(s.params["n_neighbors"] for _, s in group)
                _validate_neighbors(kmax, data.n)
                dist, idx = _neighbor_query(X, kmax, metric)
                for pos, s in group:
                    k = s.params["n_neighbors"]
                    aps[pos] = ap_of(_lof_scores(dist[:, :k], idx[:, :k]))
        elif family == "COF":
            kmax = max(s.params["n_neighbors"] for _, s in members)
            _validate_neighbors(kmax, data.n)
            _, idx = _neighbor_query(X, kmax, "euclidean")
            for pos, s in members:
                k = s.params["n_neighbors"]
                aps[pos] = ap_of(_cof_scores(X, idx[:, :k]))
        elif family == "ABOD":
            kmax = max(s.params["n_neighbors"] for _, s in members)
            _validate_neighbors(kmax, data.n)
            dist, idx = _neighbor_query(X, kmax, "euclidean")
            for pos, s in members:
                k = s.params["n_neighbors"]
                aps[pos] = ap_of(_abod_scores(X, dist[:, :k], idx[:, :k]))
        else:
            for pos, s in members:
                aps[pos] = score_to_ap_trials(s, data, n_trials, base_seed)
    return aps
