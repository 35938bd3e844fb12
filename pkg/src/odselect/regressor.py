"""Inductive chain from meta-features to latent factors.

The embedding standardizes meta-feature columns (imputing non-finite slots
with the column mean) and projects onto the top principal components with a
deterministic sign convention.  The regressor is a bagged ensemble of
axis-aligned regression trees with mean leaves, one independent ensemble per
output dimension, so predictions take near-constant time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, LengthMismatchError


@dataclass
class EmbeddingModel:
    means: np.ndarray       # (d,) column means of finite entries (0 if none)
    stds: np.ndarray        # (d,) population stds; 1 for zero-variance slots
    components: np.ndarray  # (d, k) orthonormal columns
    k: int

    @property
    def d(self) -> int:
        return self.means.shape[0]


def _impute_columns(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    finite = np.isfinite(M)
    filled = M.copy()
    means = np.zeros(M.shape[1])
    for j in range(M.shape[1]):
        col_finite = finite[:, j]
        if col_finite.any():
            means[j] = M[col_finite, j].mean()
        filled[~col_finite, j] = means[j]
    return filled, means


def fit_embedding(M, k: int) -> EmbeddingModel:
    """Standardize columns and keep the top-k principal directions.

    Non-finite slots are replaced by the column mean of the finite entries
    (all-non-finite columns become 0 and contribute nothing).  If fewer than
    k nonzero singular values exist, k shrinks with a warning.
    """
    M = np.asarray(M, dtype=np.float64)
    n, d = M.shape
    if k < 1:
        raise InvalidConfigError("k must be >= 1")
    if n <= k:
        raise InvalidConfigError(f"need more than k={k} rows, got {n}")
    filled, means = _impute_columns(M)
    stds = filled.std(axis=0)
    stds = np.where(stds > 0.0, stds, 1.0)
    Z = (filled - means) / stds
    _, s, vt = np.linalg.svd(Z, full_matrices=False)
    nonzero = int((s > s[0] * 1e-10).sum()) if s.size and s[0] > 0 else 0
    if nonzero < k:
        warnings.warn(
            f"rank deficient meta-feature matrix: shrinking k from {k} to {max(nonzero, 1)}",
            stacklevel=2,
        )
        k = max(nonzero, 1)
    components = vt[:k].T.copy()
    # sign convention: the largest-magnitude loading of each component is positive
    for c in range(k):
        ref = np.argmax(np.abs(components[:, c]))
        if components[ref, c] < 0:
            components[:, c] = -components[:, c]
    return EmbeddingModel(means, stds, components, k)


def embed(model: EmbeddingModel, m_vec) -> np.ndarray:
    """Standardize-then-project one meta-feature vector."""
    v = np.asarray(m_vec, dtype=np.float64)
    if v.shape != (model.d,):
        raise LengthMismatchError(f"expected length {model.d}, got {v.shape}")
    v = np.where(np.isfinite(v), v, model.means)
    return ((v - model.means) / model.stds) @ model.components


def embed_matrix(model: EmbeddingModel, M) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    return np.vstack([embed(model, row) for row in M])


# ---------------------------------------------------------------------------
# Regression trees
# ---------------------------------------------------------------------------

@dataclass
class RegressionTree:
    """Flat node-table tree: feature < 0 marks a leaf holding `value`."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict_one(self, z: np.ndarray) -> float:
        node = 0
        while self.feature[node] >= 0:
            if z[self.feature[node]] < self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return float(self.value[node])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RegressionTree":
        return cls(
            np.asarray(payload["feature"], dtype=np.int64),
            np.asarray(payload["threshold"], dtype=np.float64),
            np.asarray(payload["left"], dtype=np.int64),
            np.asarray(payload["right"], dtype=np.int64),
            np.asarray(payload["value"], dtype=np.float64),
        )


def _best_split(Z: np.ndarray, y: np.ndarray, features: np.ndarray):
    """Lowest-SSE axis-aligned split among the candidate features."""
    n = y.shape[0]
    best = None  # (sse, feature, threshold)
    total_sum = y.sum()
    total_sq = (y * y).sum()
    for f in features:
        order = np.argsort(Z[:, f], kind="stable")
        zs = Z[order, f]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        # candidate boundaries between distinct consecutive values
        boundary = np.flatnonzero(zs[1:] > zs[:-1])
        if boundary.size == 0:
            continue
        nl = boundary + 1
        nr = n - nl
        sl, ql = csum[boundary], csq[boundary]
        sr, qr = total_sum - sl, total_sq - ql
        sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
        pick = int(np.argmin(sse))
        if best is None or sse[pick] < best[0]:
            threshold = 0.5 * (zs[boundary[pick]] + zs[boundary[pick] + 1])
            best = (float(sse[pick]), int(f), threshold)
    return best


def _grow_tree(Z, y, max_depth, n_split_features, rng) -> RegressionTree:
    feature, threshold, left, right, value = [], [], [], [], []

    def add_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def build(rows: np.ndarray, depth: int) -> int:
        node = add_node()
        ys = y[rows]
        value[node] = float(ys.mean())
        if depth >= max_depth or rows.size < 2 or np.ptp(ys) == 0.0:
            return node
        candidates = rng.choice(Z.shape[1], size=min(n_split_features, Z.shape[1]), replace=False)
        split = _best_split(Z[rows], ys, np.sort(candidates))
        if split is None:
            return node
        _, f, t = split
        mask = Z[rows, f] < t
        feature[node] = f
        threshold[node] = t
        left[node] = build(rows[mask], depth + 1)
        right[node] = build(rows[~mask], depth + 1)
        return node

    build(np.arange(Z.shape[0]), 0)
    return RegressionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
    )


@dataclass
class TreeEnsembleRegressor:
    """One bagged tree ensemble per output dimension; prediction is the tree mean."""

    ensembles: list            # list (per output) of lists of RegressionTree
    tree_count: int
    max_depth: int
    seed: int
    n_features: int

    @property
    def n_outputs(self) -> int:
        return len(self.ensembles)

    def to_dict(self) -> dict:
        return {
            "tree_count": self.tree_count,
            "max_depth": self.max_depth,
            "seed": self.seed,
            "n_features": self.n_features,
            "outputs": [[t.to_dict() for t in trees] for trees in self.ensembles],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TreeEnsembleRegressor":
        return cls(
            [[RegressionTree.from_dict(t) for t in trees] for trees in payload["outputs"]],
            payload["tree_count"],
            payload["max_depth"],
            payload["seed"],
            payload["n_features"],
        )


def fit_regressor(
    Z,
    targets,
    n_trees: int = 100,
    max_depth: int = 8,
    seed: int = 0,
) -> TreeEnsembleRegressor:
    """Fit independent single-output ensembles mapping embeddings to factors.

    Each tree trains on a bootstrap sample with ceil(sqrt(n_features))
    candidate features per split.
    """
    Z = np.asarray(Z, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]
    if Z.shape[0] != targets.shape[0]:
        raise InvalidConfigError("inputs and targets disagree on row count")
    n, d = Z.shape
    n_split_features = max(1, int(np.ceil(np.sqrt(d))))
    rng = np.random.default_rng(seed)
    ensembles = []
    for out in range(targets.shape[1]):
        trees = []
        for _ in range(n_trees):
            rows = rng.integers(0, n, size=n)
            trees.append(_grow_tree(Z[rows], targets[rows, out], max_depth, n_split_features, rng))
        ensembles.append(trees)
    return TreeEnsembleRegressor(ensembles, n_trees, max_depth, seed, d)


def predict_latent(model: TreeEnsembleRegressor, z) -> np.ndarray:
    """Mean tree prediction per output dimension."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (model.n_features,):
        raise LengthMismatchError(f"expected length {model.n_features}, got {z.shape}")
    out = np.empty(model.n_outputs)
    for i, trees in enumerate(model.ensembles):
        out[i] = sum(t.predict_one(z) for t in trees) / len(trees)
    return out


def predict_latent_matrix(model: TreeEnsembleRegressor, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    return np.vstack([predict_latent(model, row) for row in Z])
