"""Comparison selectors sharing the pick-a-model-index interface.

Simple meta-learners (global best, clustering, nearest neighbor), regression
and factorization baselines, the all-models score ensemble, random selection,
and the sibling-informed empirical upper bound.
"""

from __future__ import annotations

import numpy as np

from . import regressor
from .datasets import Dataset
from .detectors import ModelSpec, fit_score
from .errors import InvalidConfigError

_EPS = 1e-12


def _impute_and_standardize(M_train: np.ndarray, m_test: np.ndarray):
    """Column-standardize on train statistics; non-finite slots take the train mean."""
    M = np.asarray(M_train, dtype=np.float64).copy()
    t = np.asarray(m_test, dtype=np.float64).copy()
    means = np.zeros(M.shape[1])
    for j in range(M.shape[1]):
        finite = np.isfinite(M[:, j])
        if finite.any():
            means[j] = M[finite, j].mean()
        M[~finite, j] = means[j]
    t = np.where(np.isfinite(t), t, means)
    stds = M.std(axis=0)
    stds = np.where(stds > 0.0, stds, 1.0)
    return (M - means) / stds, (t - means) / stds


def gb_select(P_train) -> int:
    """The model with the largest mean performance across train datasets."""
    P = np.asarray(P_train, dtype=np.float64)
    if P.size == 0:
        raise InvalidConfigError("empty performance matrix")
    return int(P.mean(axis=0).argmax())


def _kmeans(Z: np.ndarray, k: int, seed: int, restarts: int = 10, max_iter: int = 100):
    """Seeded Lloyd's algorithm with ++ initialization; keeps the best of the restarts."""
    rng = np.random.default_rng(seed)
    n = Z.shape[0]
    best = None
    for _ in range(restarts):
        centers = np.empty((k, Z.shape[1]))
        centers[0] = Z[rng.integers(n)]
        d2 = ((Z - centers[0]) ** 2).sum(axis=1)
        for c in range(1, k):
            total = d2.sum()
            probs = d2 / total if total > 0 else np.full(n, 1.0 / n)
            centers[c] = Z[rng.choice(n, p=probs)]
            d2 = np.minimum(d2, ((Z - centers[c]) ** 2).sum(axis=1))
        assign = np.zeros(n, dtype=np.int64)
        for _ in range(max_iter):
            dists = ((Z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_assign = dists.argmin(axis=1)
            for c in range(k):
                members = new_assign == c
                if members.any():
                    centers[c] = Z[members].mean(axis=0)
            if np.array_equal(new_assign, assign):
                break
            assign = new_assign
        inertia = float(((Z - centers[assign]) ** 2).sum())
        if best is None or inertia < best[0]:
            best = (inertia, centers.copy(), assign.copy())
    return best[1], best[2]


def isac_select(M_train, P_train, m_test, n_clusters: int | None = None, seed: int = 0) -> int:
    """Cluster train datasets in meta-feature space; argmax of the nearest cluster's means."""
    P = np.asarray(P_train, dtype=np.float64)
    Z, z_test = _impute_and_standardize(M_train, m_test)
    n = Z.shape[0]
    if n_clusters is None:
        n_clusters = max(1, int(np.ceil(np.sqrt(n))))
    n_clusters = min(n_clusters, n)
    centers, assign = _kmeans(Z, n_clusters, seed)
    nearest = int(((centers - z_test) ** 2).sum(axis=1).argmin())
    members = assign == nearest
    return int(P[members].mean(axis=0).argmax())


def as_select(M_train, P_train, m_test) -> int:
    """Argmax of the single nearest train dataset's performance row."""
    P = np.asarray(P_train, dtype=np.float64)
    Z, z_test = _impute_and_standardize(M_train, m_test)
    nearest = int(((Z - z_test) ** 2).sum(axis=1).argmin())
    return int(P[nearest].argmax())


def ss_select(M_train, P_train, m_test, seed: int = 0, n_trees: int = 25) -> int:
    """Regress meta-features directly onto each model's performance column."""
    P = np.asarray(P_train, dtype=np.float64)
    Z, z_test = _impute_and_standardize(M_train, m_test)
    model = regressor.fit_regressor(Z, P, n_trees=n_trees, max_depth=8, seed=seed)
    predicted = regressor.predict_latent(model, z_test)
    return int(predicted.argmax())


def als_factorize(P, k: int, seed: int = 0, reg: float = 1e-6, max_iter: int = 200):
    """Squared-error alternating least squares factorization P ~ U V^T."""
    P = np.asarray(P, dtype=np.float64)
    n, m = P.shape
    k = min(k, n, m)
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n, k)) * 0.1
    V = rng.standard_normal((m, k)) * 0.1
    eye = np.eye(k)
    prev = np.inf
    for _ in range(max_iter):
        U = np.linalg.solve(V.T @ V + reg * eye, V.T @ P.T).T
        V = np.linalg.solve(U.T @ U + reg * eye, U.T @ P).T
        rmse = float(np.sqrt(((P - U @ V.T) ** 2).mean()))
        if prev - rmse < 1e-12:
            break
        prev = rmse
    return U, V


def alors_select(M_train, P_train, m_test, k: int = 10, seed: int = 0) -> int:
    """Squared-loss factorization plus a meta-feature to latent-factor regressor."""
    P = np.asarray(P_train, dtype=np.float64)
    Z, z_test = _impute_and_standardize(M_train, m_test)
    U, V = als_factorize(P, k, seed)
    model = regressor.fit_regressor(Z, U, n_trees=100, max_depth=8, seed=seed + 1)
    u_test = regressor.predict_latent(model, z_test)
    return int((V @ u_test).argmax())


def metaod_c_select(M_train, P_train, m_test, k: int = 10, seed: int = 0) -> int:
    """Factorize the column-standardized [P, M] concatenation and reconstruct.

    The test row is the zero-padded standardized meta-feature vector projected
    onto the item factors; the argmax is taken over the performance block.
    """
    P = np.asarray(P_train, dtype=np.float64)
    m = P.shape[1]
    Z, z_test = _impute_and_standardize(M_train, m_test)
    C = np.hstack([P, Z])
    means = C.mean(axis=0)
    stds = C.std(axis=0)
    stds = np.where(stds > 0.0, stds, 1.0)
    C_std = (C - means) / stds
    _, s, vt = np.linalg.svd(C_std, full_matrices=False)
    k = min(k, int((s > 0).sum()))
    V = vt[:k].T
    c_test = np.concatenate([np.zeros(m), z_test])
    c_test = (c_test - means) / stds
    c_test[:m] = 0.0  # the performance block is unknown at test time
    recon = (c_test @ V) @ V.T
    return int(recon[:m].argmax())


def me_score(model_set: list[ModelSpec], data: Dataset, seed: int = 0) -> np.ndarray:
    """Mega-ensemble scores: z-normalize every model's scores and average."""
    if not model_set:
        raise InvalidConfigError("empty model set")
    total = np.zeros(data.n)
    for spec in model_set:
        s = fit_score(spec, data, seed)
        std = s.std()
        total += (s - s.mean()) / std if std > 0 else np.zeros_like(s)
    return total / len(model_set)


def rs_select(m: int, seed: int = 0) -> int:
    """Uniform random model index."""
    if m < 1:
        raise InvalidConfigError("need at least one model")
    return int(np.random.default_rng(seed).integers(m))


def eub_value(P, index: int, siblings: list[int]) -> float:
    """Performance of the model that is best on the dataset's siblings.

    The sibling rows (excluding the dataset itself) are averaged per model;
    the argmax model's performance on the dataset is returned.
    """
    P = np.asarray(P, dtype=np.float64)
    siblings = [s for s in siblings if s != index]
    if not siblings:
        raise InvalidConfigError(f"dataset {index} has no siblings")
    best = int(P[siblings].mean(axis=0).argmax())
    return float(P[index, best])
