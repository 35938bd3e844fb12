"""Fixed-length meta-feature extraction for arbitrary numeric datasets.

Two blocks, concatenated in manifest order: a statistical block over the raw
feature table, and a landmarker block built from the structure and outlier
scores of four cheap detectors (isolation forest, histogram, random-cut
histogram, PCA reconstruction).  Labels are never read.

Slots that a dataset cannot support (kurtosis of a constant column, third
principal component of 2-D data, ...) are marked NaN and imputed downstream
by the embedding.  Skewness is the Fisher-Pearson moment ratio and kurtosis
is the excess form throughout.
"""

from __future__ import annotations

import hashlib
import warnings

import numpy as np
from scipy import stats

from .datasets import Dataset
from .detectors import hbos_fit, iforest_fit, loda_fit, pca_recon_fit

_SIX = ("min", "max", "mean", "std", "skew", "kurt")

_POOLED_NAMES = (
    "mean", "median", "variance", "min", "max", "std",
    "p01", "p25", "p75", "p99", "iqr",
    "normalized_mean", "normalized_median", "range", "gini",
    "median_abs_dev", "avg_abs_dev", "quantile_coeff_dispersion",
    "coeff_of_variance", "frac_outside_p01_p99", "frac_beyond_3std",
)

_PER_FEATURE_GROUPS = (
    "skewness", "kurtosis", "correlation", "covariance",
    "sparsity", "anova_pvalue", "norm_entropy",
)

_SCORE_LANDMARKERS = ("iforest", "hbos", "loda", "pca")

# partner choice for the ANOVA redundancy slots; fixed so extraction is a
# pure function of the data
_ANOVA_SEED = 12345


def _six_names(prefix: str) -> list[str]:
    return [f"{prefix}_{s}" for s in _SIX]


def _build_manifest() -> tuple[str, ...]:
    names: list[str] = [
        "n_samples", "n_features", "feature_sample_ratio",
        "log_n_samples", "log_n_features", "log_sample_feature_ratio",
    ]
    names += [f"pooled_{nm}" for nm in _POOLED_NAMES]
    for group in _PER_FEATURE_GROUPS:
        names += _six_names(f"feature_{group}")
    names += [f"pooled_central_moment_{r}" for r in range(5, 11)]
    names += ["frac_features_nonnormal"]

    names += _six_names("iforest_tree_depth")
    names += _six_names("iforest_leaf_count")
    names += _six_names("iforest_importance_mean")
    names += _six_names("iforest_importance_max")
    names += _six_names("hbos_density_mean")
    names += _six_names("hbos_density_max")
    names += _six_names("loda_weight_abs_mean")
    names += _six_names("loda_weight_abs_max")
    names += _six_names("loda_density_mean")
    names += _six_names("loda_density_max")
    names += [f"pca_explained_variance_ratio_{i}" for i in (1, 2, 3)]
    names += [f"pca_singular_value_{i}" for i in (1, 2, 3)]
    for lm in _SCORE_LANDMARKERS:
        names += _six_names(f"{lm}_score")
        names += [f"{lm}_score_dispersion", f"{lm}_score_max_gap"]
    return tuple(names)


MANIFEST: tuple[str, ...] = _build_manifest()
N_STATISTICAL = 6 + len(_POOLED_NAMES) + 6 * len(_PER_FEATURE_GROUPS) + 6 + 1
N_LANDMARKER = len(MANIFEST) - N_STATISTICAL


def manifest() -> tuple[str, ...]:
    """Slot names, one per meta-feature, in extraction order."""
    return MANIFEST


def manifest_hash() -> str:
    return hashlib.sha256("\n".join(MANIFEST).encode("utf-8")).hexdigest()


def write_manifest(path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, name in enumerate(MANIFEST):
            fh.write(f"{i}\t{name}\n")


def six_stats(values) -> list[float]:
    """min/max/mean/std/skew/kurt of the finite entries; NaN where undefined."""
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return [np.nan] * 6
    mean = float(v.mean())
    var = float(v.var())
    out = [float(v.min()), float(v.max()), mean, float(np.sqrt(var))]
    if var <= 0.0:
        out += [np.nan, np.nan]
    else:
        centered = v - mean
        m3 = float((centered ** 3).mean())
        m4 = float((centered ** 4).mean())
        out += [m3 / var ** 1.5, m4 / var ** 2 - 3.0]
    return out


def _gini(pooled: np.ndarray) -> float:
    total = pooled.sum()
    if total == 0.0:
        return np.nan
    srt = np.sort(pooled)
    n = srt.size
    ranks = np.arange(1, n + 1)
    return float(((2 * ranks - n - 1) * srt).sum() / (n * total))


def _anova_pvalues(X: np.ndarray) -> np.ndarray:
    """One-way ANOVA of each feature against a median split of a partner feature."""
    n, p = X.shape
    if p < 2:
        return np.full(max(p, 1), np.nan)
    rng = np.random.default_rng(_ANOVA_SEED)
    partners = (np.arange(p) + rng.integers(1, p, size=p)) % p
    pvals = np.full(p, np.nan)
    for f in range(p):
        g = partners[f]
        split = X[:, g] <= np.median(X[:, g])
        a, b_ = X[split, f], X[~split, f]
        if a.size < 2 or b_.size < 2:
            continue
        na, nb = a.size, b_.size
        grand = X[:, f].mean()
        ss_between = na * (a.mean() - grand) ** 2 + nb * (b_.mean() - grand) ** 2
        ss_within = ((a - a.mean()) ** 2).sum() + ((b_ - b_.mean()) ** 2).sum()
        if ss_within <= 0.0:
            continue
        F = ss_between / (ss_within / (n - 2))
        pvals[f] = float(stats.f.sf(F, 1, n - 2))
    return pvals


def _norm_entropy(X: np.ndarray) -> np.ndarray:
    n, p = X.shape
    bins = max(2, int(np.ceil(np.sqrt(n))))
    out = np.empty(p)
    norm = np.log2(n)
    for f in range(p):
        counts, _ = np.histogram(X[:, f], bins=bins)
        probs = counts[counts > 0] / n
        out[f] = float(-(probs * np.log2(probs)).sum() / norm)
    return out


def extract_statistical(data: Dataset) -> np.ndarray:
    """The statistical meta-feature block; ignores labels entirely."""
    X = data.X
    n, p = X.shape
    pooled = X.ravel()
    values: list[float] = [
        float(n), float(p), p / n,
        np.log(n), np.log(p), np.log(n / p),
    ]

    mean = float(pooled.mean())
    median = float(np.median(pooled))
    std = float(pooled.std())
    mn, mx = float(pooled.min()), float(pooled.max())
    q01, q25, q75, q99 = np.percentile(pooled, [1, 25, 75, 99])
    values += [
        mean, median, std ** 2, mn, mx, std,
        float(q01), float(q25), float(q75), float(q99), float(q75 - q25),
        mean / mx if mx != 0.0 else np.nan,
        median / mx if mx != 0.0 else np.nan,
        mx - mn,
        _gini(pooled),
        float(np.median(np.abs(pooled - median))),
        float(np.mean(np.abs(pooled - median))),
        float((q75 - q25) / (q75 + q25)) if (q75 + q25) != 0.0 else np.nan,
        std / mean if mean != 0.0 else np.nan,
        float(np.mean((pooled < q01) | (pooled > q99))),
        float(np.mean(np.abs(pooled - mean) > 3 * std)) if std > 0.0 else np.nan,
    ]

    col_var = X.var(axis=0)
    centered = X - X.mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        skews = (centered ** 3).mean(axis=0) / col_var ** 1.5
        kurts = (centered ** 4).mean(axis=0) / col_var ** 2 - 3.0
    values += six_stats(skews)
    values += six_stats(kurts)

    if p >= 2:
        iu = np.triu_indices(p, 1)
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = np.corrcoef(X.T)[iu]
        cov = np.cov(X.T, ddof=0)[iu]
        values += six_stats(corr)
        values += six_stats(cov)
    else:
        values += [np.nan] * 12

    uniques = np.array([np.unique(X[:, f]).size / n for f in range(p)])
    values += six_stats(uniques)
    values += six_stats(_anova_pvalues(X))
    values += six_stats(_norm_entropy(X))

    pooled_centered = pooled - mean
    values += [float((pooled_centered ** r).mean()) for r in range(5, 11)]

    if n >= 8:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with np.errstate(invalid="ignore", divide="ignore"):
                _, pvals = stats.normaltest(X, axis=0)
        pvals = np.asarray(pvals)
        ok = np.isfinite(pvals)
        values.append(float((pvals[ok] < 0.05).mean()) if ok.any() else np.nan)
    else:
        values.append(np.nan)

    out = np.asarray(values, dtype=np.float64)
    assert out.shape == (N_STATISTICAL,)
    return out


def _standardized(scores: np.ndarray) -> np.ndarray:
    std = scores.std()
    if std == 0.0:
        return np.zeros_like(scores)
    return (scores - scores.mean()) / std


def _score_block(scores: np.ndarray) -> list[float]:
    z = _standardized(scores)
    block = six_stats(z)
    q75, q25 = np.percentile(z, [75, 25])
    iqr = q75 - q25
    block.append(float(z.std() / iqr) if iqr > 0.0 else np.nan)
    block.append(float(np.diff(np.sort(z)).max()))
    return block


def extract_landmarker(data: Dataset, seed: int = 0) -> np.ndarray:
    """The landmarker block: structure and score summaries of four detectors."""
    X = data.X
    p = data.p
    if_rng, loda_rng = [
        np.random.default_rng(s) for s in np.random.SeedSequence([seed, 3]).spawn(2)
    ]
    forest = iforest_fit(X, 100, 1.0, if_rng)
    hbos = hbos_fit(X, 10, 0.5)
    loda = loda_fit(X, 100, 100, loda_rng)
    pca = pca_recon_fit(X)

    values: list[float] = []
    importances = forest.feature_importances(p)
    values += six_stats(forest.tree_depths())
    values += six_stats(forest.leaf_counts())
    values += six_stats(importances.mean(axis=1))
    values += six_stats(importances.max(axis=1))

    values += six_stats(hbos.densities.mean(axis=1))
    values += six_stats(hbos.densities.max(axis=1))

    abs_w = np.abs(loda.weights)
    values += six_stats(abs_w.mean(axis=1))
    values += six_stats(abs_w.max(axis=1))
    values += six_stats(loda.densities.mean(axis=1))
    values += six_stats(loda.densities.max(axis=1))

    evr = pca.explained_variance_ratio
    sv = pca.singular_values
    values += [float(evr[i]) if i < evr.size else np.nan for i in range(3)]
    values += [float(sv[i]) if i < sv.size else np.nan for i in range(3)]

    for model in (forest, hbos, loda, pca):
        values += _score_block(model.score(X))

    out = np.asarray(values, dtype=np.float64)
    assert out.shape == (N_LANDMARKER,)
    return out


def extract(data: Dataset, seed: int = 0) -> np.ndarray:
    """Full meta-feature vector; length is fixed by the manifest."""
    vec = np.concatenate([extract_statistical(data), extract_landmarker(data, seed)])
    assert vec.shape == (len(MANIFEST),)
    return vec
