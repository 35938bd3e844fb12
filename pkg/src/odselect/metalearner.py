"""Offline training, single-shot online selection, and learner serialization.

The trained bundle holds the embedding, the latent-factor regressor, the
model matrix V, and the canonical model list.  Selection never touches
labels: meta-features of the new dataset are embedded, regressed to a latent
vector, and dotted against V; the argmax model wins.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import metafeatures, rankmf, regressor
from .datasets import Dataset
from .detectors import ModelSpec, enumerate_model_set
from .errors import CorpusTooSmallError, CorruptFileError, DegenerateDatasetError, VersionMismatchError
from .pmatrix import PerformanceMatrix, build_performance_matrix

FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    k: int = 10
    n_trials: int = 5
    n_trees: int = 100
    max_depth: int = 8
    seed: int = 0
    threads: int = 1
    rank: rankmf.OptimizerConfig = field(default_factory=rankmf.OptimizerConfig)


@dataclass
class MetaLearner:
    phi: regressor.EmbeddingModel
    forest: regressor.TreeEnsembleRegressor
    V: np.ndarray
    model_list: list[ModelSpec]
    k: int
    manifest_hash: str
    metadata: dict

    def __post_init__(self):
        if self.V.shape != (len(self.model_list), self.k):
            raise ValueError("V shape disagrees with model list / k")
        if self.phi.k != self.k or self.forest.n_outputs != self.k:
            raise ValueError("embedding, regressor, and V disagree on k")


def _derived_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def meta_feature_seed(base_seed: int, dataset_index: int) -> int:
    return _derived_seed(base_seed, 7, dataset_index)


def extract_corpus_features(corpus: list[Dataset], base_seed: int) -> np.ndarray:
    return np.vstack([
        metafeatures.extract(ds, meta_feature_seed(base_seed, i))
        for i, ds in enumerate(corpus)
    ])


def train_offline(
    corpus: list[Dataset],
    cfg: TrainConfig = TrainConfig(),
    performance: PerformanceMatrix | None = None,
    meta_features: np.ndarray | None = None,
) -> tuple[MetaLearner, PerformanceMatrix, dict]:
    """Run the full offline phase over a labeled corpus.

    Builds (or accepts) the performance matrix, extracts meta-features,
    factorizes with the rank objective starting from the embedded features,
    and trains the latent regressor.  Returns the learner, the matrix, and a
    training report with the loss curve and top-1 regret diagnostics.
    """
    n = len(corpus)
    k = min(cfg.k, n - 2)
    if k < 1:
        raise CorpusTooSmallError(f"need at least 3 datasets, got {n}")

    specs = enumerate_model_set()
    if performance is None:
        # labels are consulted only to measure model performance
        for ds in corpus:
            if ds.labels is None:
                raise DegenerateDatasetError(f"{ds.name}: offline training needs labels")
        performance = build_performance_matrix(
            corpus, specs, n_trials=cfg.n_trials,
            base_seed=_derived_seed(cfg.seed, 4), n_workers=cfg.threads,
        )
    if performance.values.shape != (n, len(specs)):
        raise DegenerateDatasetError(
            f"performance matrix is {performance.values.shape}, expected ({n}, {len(specs)})"
        )
    if meta_features is None:
        meta_features = extract_corpus_features(corpus, cfg.seed)

    phi = regressor.fit_embedding(meta_features, k)
    k = phi.k  # may have shrunk on rank-deficient corpora
    Z = regressor.embed_matrix(phi, meta_features)
    rank_cfg = replace(cfg.rank, seed=_derived_seed(cfg.seed, 11))
    factors = rankmf.fit(performance.values, Z, rank_cfg)
    forest = regressor.fit_regressor(
        Z, factors.U, n_trees=cfg.n_trees, max_depth=cfg.max_depth,
        seed=_derived_seed(cfg.seed, 13),
    )

    P = performance.values
    best = P.max(axis=1)
    chosen_by_u = (factors.U @ factors.V.T).argmax(axis=1)
    regret = float((best - P[np.arange(n), chosen_by_u]).mean())
    gb_col = int(P.mean(axis=0).argmax())
    gb_regret = float((best - P[:, gb_col]).mean())
    chain = regressor.predict_latent_matrix(forest, Z) @ factors.V.T
    chain_chosen = chain.argmax(axis=1)
    chain_regret = float((best - P[np.arange(n), chain_chosen]).mean())
    report = {
        "loss_curve": factors.loss_curve,
        "training_top1_regret": regret,
        "global_best_top1_regret": gb_regret,
        "chain_top1_regret": chain_regret,
        "top1_agreement_with_factors": float((chain_chosen == chosen_by_u).mean()),
        "k": k,
        "corpus_size": n,
    }

    learner = MetaLearner(
        phi=phi,
        forest=forest,
        V=factors.V,
        model_list=specs,
        k=k,
        manifest_hash=metafeatures.manifest_hash(),
        metadata={
            "corpus_size": n,
            "dataset_names": list(performance.dataset_names),
            "n_trials": cfg.n_trials,
            "seed": cfg.seed,
            "rank_config": {
                "b": rank_cfg.b, "alpha": rank_cfg.alpha,
                "lr_base": rank_cfg.lr_base, "lr_max": rank_cfg.lr_max,
                "cycle_len": rank_cfg.cycle_len, "max_epochs": rank_cfg.max_epochs,
                "tol": rank_cfg.tol, "v_gradient": rank_cfg.v_gradient,
            },
        },
    )
    return learner, performance, report


def select_model(learner: MetaLearner, data: Dataset, seed: int = 0) -> tuple[ModelSpec, np.ndarray]:
    """Pick one model for an unlabeled dataset; never reads labels.

    Returns the chosen spec and the predicted per-model performance vector;
    ties resolve to the smaller model index.
    """
    vec = metafeatures.extract(data, seed)
    z = regressor.embed(learner.phi, vec)
    u = regressor.predict_latent(learner.forest, z)
    predicted = learner.V @ u
    chosen = int(np.argmax(predicted))
    return learner.model_list[chosen], predicted


def _payload(learner: MetaLearner) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "k": learner.k,
        "manifest_hash": learner.manifest_hash,
        "phi": {
            "means": learner.phi.means.tolist(),
            "stds": learner.phi.stds.tolist(),
            "components": learner.phi.components.tolist(),
            "k": learner.phi.k,
        },
        "forest": learner.forest.to_dict(),
        "V": learner.V.tolist(),
        "model_list": [
            {"family": s.family, "params": s.params} for s in learner.model_list
        ],
        "metadata": learner.metadata,
    }


def _checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save(learner: MetaLearner, path) -> None:
    """Write the learner as versioned, checksummed JSON (full-precision reals)."""
    if not np.all(np.isfinite(learner.V)):
        raise ValueError("refusing to serialize non-finite V")
    payload = _payload(learner)
    payload["checksum"] = _checksum({k: v for k, v in payload.items() if k != "checksum"})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load(path) -> MetaLearner:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"{path}: not valid JSON ({exc})") from None
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format_version {version}, expected {FORMAT_VERSION}")
    stored = payload.pop("checksum", None)
    if stored is None or stored != _checksum(payload):
        raise CorruptFileError(f"{path}: checksum mismatch")
    phi = regressor.EmbeddingModel(
        np.asarray(payload["phi"]["means"], dtype=np.float64),
        np.asarray(payload["phi"]["stds"], dtype=np.float64),
        np.asarray(payload["phi"]["components"], dtype=np.float64),
        int(payload["phi"]["k"]),
    )
    forest = regressor.TreeEnsembleRegressor.from_dict(payload["forest"])
    model_list = [
        ModelSpec(entry["family"], entry["params"], index=i)
        for i, entry in enumerate(payload["model_list"])
    ]
    return MetaLearner(
        phi=phi,
        forest=forest,
        V=np.asarray(payload["V"], dtype=np.float64),
        model_list=model_list,
        k=int(payload["k"]),
        manifest_hash=payload["manifest_hash"],
        metadata=payload["metadata"],
    )
