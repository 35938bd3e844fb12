import numpy as np
import pytest

from conftest import make_labeled
from odselect.detectors import enumerate_model_set
from odselect.errors import DegenerateDatasetError
from odselect.pmatrix import (
    build_performance_matrix,
    dataset_seed,
    load_matrix_csv,
    matrix_specs,
    save_matrix_csv,
)


@pytest.fixture(scope="module")
def tiny_corpus():
    rng = np.random.default_rng(31)
    return [make_labeled(rng, n=110, p=3, n_out=8, name=f"p{i}") for i in range(3)]


@pytest.fixture(scope="module")
def tiny_matrix(tiny_corpus):
    return build_performance_matrix(tiny_corpus, enumerate_model_set(),
                                    n_trials=2, base_seed=5)


class TestBuild:
    def test_shape_and_range(self, tiny_matrix):
        assert tiny_matrix.values.shape == (3, 261)
        assert np.all((tiny_matrix.values >= 0) & (tiny_matrix.values <= 1))

    def test_deterministic(self, tiny_corpus, tiny_matrix):
        again = build_performance_matrix(tiny_corpus, enumerate_model_set(),
                                         n_trials=2, base_seed=5)
        np.testing.assert_array_equal(tiny_matrix.values, again.values)

    def test_parallel_matches_serial(self, tiny_corpus, tiny_matrix):
        par = build_performance_matrix(tiny_corpus, enumerate_model_set(),
                                       n_trials=2, base_seed=5, n_workers=2)
        np.testing.assert_array_equal(tiny_matrix.values, par.values)

    def test_unlabeled_dataset_rejected(self, tiny_corpus):
        broken = tiny_corpus[:2] + [tiny_corpus[2].without_labels()]
        with pytest.raises(DegenerateDatasetError, match="p2"):
            build_performance_matrix(broken, enumerate_model_set(), n_trials=1)

    def test_dataset_seed_stable(self):
        assert dataset_seed(5, 0) == dataset_seed(5, 0)
        assert dataset_seed(5, 0) != dataset_seed(5, 1)


class TestJournal:
    def test_resume_reproduces_matrix(self, tiny_corpus, tiny_matrix, tmp_path):
        journal = tmp_path / "cells.jsonl"
        full = build_performance_matrix(tiny_corpus, enumerate_model_set(),
                                        n_trials=2, base_seed=5, journal_path=journal)
        lines = journal.read_text().strip().splitlines()
        assert len(lines) == 3 * 261
        # simulate an interrupted run: drop 40% of the journal plus a torn line
        kept = lines[: int(len(lines) * 0.6)]
        journal.write_text("\n".join(kept) + "\n" + '{"dataset": "p1", "mo')
        resumed = build_performance_matrix(tiny_corpus, enumerate_model_set(),
                                           n_trials=2, base_seed=5, journal_path=journal)
        np.testing.assert_array_equal(resumed.values, full.values)

    def test_complete_journal_skips_work(self, tiny_corpus, tiny_matrix, tmp_path):
        journal = tmp_path / "cells.jsonl"
        build_performance_matrix(tiny_corpus, enumerate_model_set(),
                                 n_trials=2, base_seed=5, journal_path=journal)
        calls = []
        resumed = build_performance_matrix(
            tiny_corpus, enumerate_model_set(), n_trials=2, base_seed=5,
            journal_path=journal, progress=lambda done, total: calls.append(done),
        )
        np.testing.assert_array_equal(resumed.values, tiny_matrix.values)
        assert calls == []  # nothing left to compute


class TestCsv:
    def test_roundtrip_exact(self, tiny_matrix, tmp_path):
        path = tmp_path / "p.csv"
        save_matrix_csv(tiny_matrix, path)
        back = load_matrix_csv(path)
        np.testing.assert_array_equal(back.values, tiny_matrix.values)
        assert back.dataset_names == tiny_matrix.dataset_names
        assert back.model_names == tiny_matrix.model_names

    def test_specs_recoverable_from_header(self, tiny_matrix):
        specs = matrix_specs(tiny_matrix)
        canonical = enumerate_model_set()
        assert [(s.family, s.params) for s in specs] == \
            [(s.family, s.params) for s in canonical]
        assert [s.index for s in specs] == list(range(261))
