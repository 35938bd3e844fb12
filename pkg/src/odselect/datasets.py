"""Dataset container, CSV ingestion, and synthetic benchmark generation.

The synthetic generator produces "mothersets" (large labeled datasets drawn
from a per-id Gaussian mixture with planted outliers) from which smaller
"childsets" are sampled.  Childsets sampled from the same motherset are
siblings and share outlying characteristics, which is what a meta-learner
is expected to exploit.
"""

from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDatasetError,
    InsufficientSamplesError,
    InvalidConfigError,
    ParseError,
)


@dataclass(frozen=True)
class Dataset:
    """An immutable numeric feature table with optional binary outlier labels."""

    name: str
    X: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise DegenerateDatasetError(f"{self.name}: X must be 2-D")
        if X.shape[0] < 3:
            raise DegenerateDatasetError(f"{self.name}: need at least 3 rows, got {X.shape[0]}")
        if X.shape[1] < 1:
            raise DegenerateDatasetError(f"{self.name}: need at least 1 feature")
        if not np.all(np.isfinite(X)):
            raise DegenerateDatasetError(f"{self.name}: X contains non-finite values")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int8)
            if y.shape != (X.shape[0],):
                raise DegenerateDatasetError(f"{self.name}: labels must be length-n")
            if not np.all((y == 0) | (y == 1)):
                raise DegenerateDatasetError(f"{self.name}: labels must be 0/1")
            if y.min() == y.max():
                raise DegenerateDatasetError(f"{self.name}: labels are all {int(y[0])}")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def outlier_fraction(self) -> float | None:
        if self.labels is None:
            return None
        return float(self.labels.mean())

    def without_labels(self) -> "Dataset":
        return Dataset(self.name, self.X, None)


@dataclass(frozen=True)
class TestbedConfig:
    """Knobs for the synthetic motherset/childset generator."""

    n_mothersets: int = 10
    siblings_per_motherset: int = 5
    samples_per_childset: int = 500
    dims: int = 10
    outlier_frequency: float = 0.1
    clusteredness: float = 0.0
    irrelevant_feature_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_mothersets < 1 or self.siblings_per_motherset < 1:
            raise InvalidConfigError("counts must be >= 1")
        if self.samples_per_childset < 3 or self.dims < 1:
            raise InvalidConfigError("childsets need >= 3 samples and >= 1 dim")
        if not 0.0 < self.outlier_frequency < 0.5:
            raise InvalidConfigError("outlier_frequency must lie in (0, 0.5)")
        if self.outlier_frequency * self.samples_per_childset < 1:
            raise InvalidConfigError("outlier_frequency * samples_per_childset must be >= 1")
        if self.clusteredness < 0:
            raise InvalidConfigError("clusteredness must be >= 0")
        if not 0.0 <= self.irrelevant_feature_fraction < 1.0:
            raise InvalidConfigError("irrelevant_feature_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class FoldAssignment:
    """Maps dataset index to test-fold index; carries sibling structure."""

    fold_of_dataset: dict[int, int]
    n_folds: int
    motherset_of: dict[int, int] = field(default_factory=dict)

    def test_indices(self, fold: int) -> list[int]:
        return sorted(i for i, f in self.fold_of_dataset.items() if f == fold)

    def train_indices(self, fold: int) -> list[int]:
        return sorted(i for i, f in self.fold_of_dataset.items() if f != fold)

    def siblings_of(self, index: int) -> list[int]:
        mid = self.motherset_of.get(index)
        if mid is None:
            return []
        return sorted(
            i for i, m in self.motherset_of.items() if m == mid and i != index
        )


def load_csv(path, label_column: str | None = None) -> Dataset:
    """Load a dataset from a headered CSV of decimal reals.

    Every non-label column must parse as a finite real.  The label column,
    when named, must contain only 0/1.  Any non-finite cell is a hard error
    naming the offending row; imputation belongs upstream.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(0, "", "empty file") from None
        header = [h.strip() for h in header]
        label_idx = None
        if label_column is not None:
            if label_column not in header:
                raise ParseError(0, label_column, "label column not in header")
            label_idx = header.index(label_column)
        rows: list[list[float]] = []
        labels: list[int] = []
        for r, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise ParseError(r, "", f"expected {len(header)} fields, got {len(record)}")
            row = []
            for c, cell in enumerate(record):
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(r, header[c], f"not a number: {cell!r}") from None
                if not math.isfinite(value):
                    raise ParseError(r, header[c], f"non-finite value: {cell!r}")
                if c == label_idx:
                    if value not in (0.0, 1.0):
                        raise ParseError(r, header[c], f"label must be 0/1, got {cell!r}")
                    labels.append(int(value))
                else:
                    row.append(value)
            rows.append(row)
    name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    X = np.asarray(rows, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int8) if label_idx is not None else None
    return Dataset(name, X, y)


def save_csv(data: Dataset, path, label_column: str = "is_outlier") -> None:
    """Write a dataset as CSV with `f0..f{p-1}` headers and an optional label column."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"f{j}" for j in range(data.p)]
        if data.labels is not None:
            header.append(label_column)
        writer.writerow(header)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.X[i]]
            if data.labels is not None:
                row.append(str(int(data.labels[i])))
            writer.writerow(row)


def _random_covariance(rng: np.random.Generator, p: int) -> np.ndarray:
    # random rotation with eigenvalues in [0.5, 2] keeps mixtures well conditioned
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    eigs = rng.uniform(0.5, 2.0, size=p)
    return (q * eigs) @ q.T


def generate_motherset(cfg: TestbedConfig, motherset_id: int) -> Dataset:
    """Generate one labeled motherset, deterministic in (cfg.seed, motherset_id).

    Normal points come from a 3-component Gaussian mixture with random means
    and covariances.  Outliers are uniform in an expanded bounding box when
    clusteredness is 0, otherwise they form small Gaussian clusters placed
    outside the mixture's bulk, tighter for larger clusteredness.  The last
    round(irrelevant_feature_fraction * dims) columns are replaced by noise
    that is identically distributed for both classes.
    """
    if motherset_id < 0:
        raise InvalidConfigError("motherset_id must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1, motherset_id]))
    n_total = 10 * cfg.samples_per_childset
    n_out = max(1, round(cfg.outlier_frequency * n_total))
    n_norm = n_total - n_out
    p = cfg.dims
    n_noise = round(cfg.irrelevant_feature_fraction * p)
    p_inf = p - n_noise

    weights = rng.dirichlet(np.ones(3) * 5.0)
    means = rng.normal(0.0, 3.0, size=(3, p_inf))
    covs = [_random_covariance(rng, p_inf) for _ in range(3)]
    counts = rng.multinomial(n_norm, weights)
    normals = np.vstack([
        rng.multivariate_normal(means[c], covs[c], size=counts[c], method="cholesky")
        for c in range(3)
    ])

    center = normals.mean(axis=0)
    radius = float(np.quantile(np.linalg.norm(normals - center, axis=1), 0.95))
    if cfg.clusteredness == 0:
        # a modestly expanded box overlaps the bulk, so scattered outliers
        # range from trivial to genuinely ambiguous
        lo = normals.min(axis=0)
        hi = normals.max(axis=0)
        span = hi - lo
        outliers = rng.uniform(lo - 0.1 * span, hi + 0.1 * span, size=(n_out, p_inf))
    else:
        # cluster centers straddle the bulk's 95% radius, so planted points
        # mingle with the normal tail; larger clusteredness tightens clusters
        n_clusters = int(rng.integers(1, 4))
        sizes = rng.multinomial(n_out, np.ones(n_clusters) / n_clusters)
        scale = radius / 2.5 / (1.0 + cfg.clusteredness)
        chunks = []
        for c in range(n_clusters):
            direction = rng.standard_normal(p_inf)
            direction /= np.linalg.norm(direction)
            centre = center + direction * radius * (0.85 + 0.4 * rng.uniform())
            chunks.append(rng.normal(centre, scale, size=(sizes[c], p_inf)))
        outliers = np.vstack(chunks)

    X_inf = np.vstack([normals, outliers])
    y = np.concatenate([np.zeros(n_norm, np.int8), np.ones(n_out, np.int8)])
    order = rng.permutation(n_total)
    X_inf, y = X_inf[order], y[order]

    X = np.empty((n_total, p))
    X[:, :p_inf] = X_inf
    if n_noise:
        X[:, p_inf:] = rng.standard_normal((n_total, n_noise))
    return Dataset(f"m{motherset_id:02d}", X, y)


def sample_childset(mother: Dataset, cfg: TestbedConfig, sibling_id: int) -> Dataset:
    """Sample a childset without replacement, preserving the outlier frequency.

    Deterministic in (cfg.seed, mother.name, sibling_id); labels ride along
    unchanged with their rows.
    """
    if mother.labels is None:
        raise InvalidConfigError("motherset must carry labels")
    name_tag = zlib.crc32(mother.name.encode("utf-8"))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2, name_tag, sibling_id]))
    n = cfg.samples_per_childset
    n_out = round(cfg.outlier_frequency * n)
    n_norm = n - n_out
    out_idx = np.flatnonzero(mother.labels == 1)
    norm_idx = np.flatnonzero(mother.labels == 0)
    if n > mother.n or n_out > out_idx.size or n_norm > norm_idx.size:
        raise InsufficientSamplesError(
            f"{mother.name}: requested {n} rows ({n_out} outliers), "
            f"have {mother.n} ({out_idx.size} outliers)"
        )
    pick = np.concatenate([
        rng.choice(out_idx, size=n_out, replace=False),
        rng.choice(norm_idx, size=n_norm, replace=False),
    ])
    pick = pick[rng.permutation(n)]
    return Dataset(f"{mother.name}_s{sibling_id}", mother.X[pick], mother.labels[pick])


def make_poc_testbed(cfg: TestbedConfig, n_folds: int) -> tuple[list[Dataset], FoldAssignment]:
    """Build the sibling-structured testbed plus its cross-validation folds.

    With n_folds == siblings_per_motherset (the canonical setting) every test
    fold holds exactly one sibling per motherset, so each test dataset has all
    of its siblings on the training side.  n_folds may also divide
    siblings_per_motherset evenly, in which case fold f tests the f-th
    contiguous sibling group.
    """
    sibs = cfg.siblings_per_motherset
    if n_folds < 1 or (sibs % n_folds != 0):
        raise InvalidConfigError(
            f"n_folds ({n_folds}) must evenly divide siblings_per_motherset ({sibs})"
        )
    group = sibs // n_folds
    datasets: list[Dataset] = []
    fold_of: dict[int, int] = {}
    mother_of: dict[int, int] = {}
    for mid in range(cfg.n_mothersets):
        mother = generate_motherset(cfg, mid)
        for sid in range(sibs):
            idx = len(datasets)
            datasets.append(sample_childset(mother, cfg, sid))
            fold_of[idx] = sid // group
            mother_of[idx] = mid
    return datasets, FoldAssignment(fold_of, n_folds, mother_of)
