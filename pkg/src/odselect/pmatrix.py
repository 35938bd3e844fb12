"""Building and persisting the datasets x models performance matrix.

This is the only long-running job in the pipeline, so cells are journaled to
a JSONL sidecar as they complete; a rerun pointed at the same journal skips
finished work and reproduces the identical matrix.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .datasets import Dataset
from .detectors import ModelSpec, score_models, spec_from_name, spec_name
from .errors import DegenerateDatasetError, ParseError


@dataclass
class PerformanceMatrix:
    values: np.ndarray            # (n_datasets, n_models), average precision
    dataset_names: list[str]
    model_names: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n, m = self.values.shape
        if n != len(self.dataset_names) or m != len(self.model_names):
            raise ValueError("matrix shape disagrees with its labels")

    @property
    def n_datasets(self) -> int:
        return self.values.shape[0]

    @property
    def n_models(self) -> int:
        return self.values.shape[1]

    def row_of(self, dataset_name: str) -> np.ndarray:
        return self.values[self.dataset_names.index(dataset_name)]


def dataset_seed(base_seed: int, dataset_index: int) -> int:
    """Stable per-dataset base seed, independent of worker scheduling."""
    return int(np.random.SeedSequence([base_seed, 4, dataset_index]).generate_state(1)[0])


def _evaluate_group(args):
    dataset, positions, specs, n_trials, seed = args
    aps = score_models(specs, dataset, n_trials, seed)
    return [(pos, float(ap)) for pos, ap in zip(positions, aps)]


def build_performance_matrix(
    datasets: list[Dataset],
    specs: list[ModelSpec],
    n_trials: int = 5,
    base_seed: int = 0,
    n_workers: int = 1,
    journal_path=None,
    progress=None,
) -> PerformanceMatrix:
    """Evaluate every model on every labeled dataset.

    Work is grouped by (dataset, family) so neighbor queries are shared; the
    optional journal records one line per finished cell and makes the build
    resumable at that granularity.
    """
    for ds in datasets:
        if ds.labels is None:
            raise DegenerateDatasetError(f"{ds.name}: unlabeled dataset in corpus")
    names = [ds.name for ds in datasets]
    if len(set(names)) != len(names):
        raise DegenerateDatasetError("duplicate dataset names in corpus")

    n, m = len(datasets), len(specs)
    values = np.full((n, m), np.nan)

    done: dict[tuple[str, int], float] = {}
    journal_fh = None
    if journal_path is not None:
        if os.path.exists(journal_path):
            with open(journal_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                        done[(rec["dataset"], int(rec["model"]))] = float(rec["ap"])
                    except (json.JSONDecodeError, KeyError, ValueError):
                        continue  # torn tail line from an interrupted run
        journal_fh = open(journal_path, "a", encoding="utf-8")
    for (name, j), ap in done.items():
        if name in names and 0 <= j < m:
            values[names.index(name), j] = ap

    tasks = []
    for i, ds in enumerate(datasets):
        by_family: dict[str, tuple[list[int], list[ModelSpec]]] = {}
        for pos, spec in enumerate(specs):
            if np.isfinite(values[i, pos]):
                continue
            slot = by_family.setdefault(spec.family, ([], []))
            slot[0].append(pos)
            slot[1].append(spec)
        seed = dataset_seed(base_seed, i)
        for family, (positions, group) in sorted(by_family.items()):
            tasks.append((i, (datasets[i], positions, group, n_trials, seed)))

    def record(i, results):
        for pos, ap in results:
            values[i, pos] = ap
            if journal_fh is not None:
                journal_fh.write(json.dumps(
                    {"dataset": names[i], "model": pos, "ap": ap}, sort_keys=True
                ) + "\n")
        if journal_fh is not None:
            journal_fh.flush()
        if progress is not None:
            progress(int(np.isfinite(values).sum()), n * m)

    try:
        if n_workers > 1 and tasks:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                futures = [(i, pool.submit(_evaluate_group, args)) for i, args in tasks]
                for i, fut in futures:
                    record(i, fut.result())
        else:
            for i, args in tasks:
                record(i, _evaluate_group(args))
    finally:
        if journal_fh is not None:
            journal_fh.close()

    assert np.all(np.isfinite(values))
    return PerformanceMatrix(values, names, [spec_name(s) for s in specs])


def save_matrix_csv(matrix: PerformanceMatrix, path) -> None:
    # model names contain commas, so fields are csv-quoted
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset"] + matrix.model_names)
        for name, row in zip(matrix.dataset_names, matrix.values):
            writer.writerow([name] + [repr(float(v)) for v in row])


def load_matrix_csv(path) -> PerformanceMatrix:
    import csv

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(0, "dataset", "empty file") from None
        if not header or header[0] != "dataset":
            raise ParseError(0, "dataset", "not a performance matrix file")
        model_names = header[1:]
        names: list[str] = []
        rows: list[list[float]] = []
        for r, parts in enumerate(reader, start=1):
            if not parts:
                continue
            if len(parts) != len(model_names) + 1:
                raise ParseError(r, "", f"expected {len(model_names) + 1} fields")
            names.append(parts[0])
            try:
                rows.append([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise ParseError(r, "", str(exc)) from None
    return PerformanceMatrix(np.asarray(rows), names, model_names)


def matrix_specs(matrix: PerformanceMatrix) -> list[ModelSpec]:
    """Reconstruct the model specs encoded in the matrix column names."""
    specs = []
    for idx, name in enumerate(matrix.model_names):
        spec = spec_from_name(name)
        specs.append(ModelSpec(spec.family, spec.params, index=idx))
    return specs
