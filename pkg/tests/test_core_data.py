from __future__ import annotations

import numpy as np
import pytest

from pcsinfer.core_data import (
    DataMatrix,
    SeedSpec,
    read_csv,
    split,
    standardize,
    swap_halves,
    write_csv,
)
from pcsinfer.errors import (
    BadConfig,
    BadFraction,
    ConstantColumn,
    DataError,
    DimensionMismatch,
    MalformedCsv,
)


def _matrix(n: int = 10, p: int = 3, seed: int = 0) -> DataMatrix:
    rng = np.random.default_rng(seed)
    return DataMatrix(rng.standard_normal((n, p)), rng.standard_normal(n), tuple(f"c{j}" for j in range(p)))


class TestDataMatrix:
    def test_rejects_single_row(self):
        with pytest.raises(DataError):
            DataMatrix(np.ones((1, 2)), np.ones(1), ("a", "b"))

    def test_rejects_name_count_mismatch(self):
        with pytest.raises(DimensionMismatch):
            DataMatrix(np.ones((3, 2)), np.ones(3), ("a",))

    def test_rejects_non_finite(self):
        x = np.ones((3, 2))
        x[1, 1] = np.nan
        with pytest.raises(DataError):
            DataMatrix(x, np.ones(3), ("a", "b"))

    def test_arrays_are_read_only_copies(self):
        x = np.zeros((3, 1))
        data = DataMatrix(x, np.arange(3.0), ("a",))
        x[0, 0] = 5.0
        assert data.x[0, 0] == 0.0
        with pytest.raises(ValueError):
            data.x[0, 0] = 1.0

    def test_subset_keeps_rows_paired(self):
        data = _matrix()
        sub = data.subset([3, 3, 7])
        np.testing.assert_array_equal(sub.x[0], data.x[3])
        assert sub.y[1] == data.y[3]
        assert sub.y[2] == data.y[7]
        assert not sub.standardized

    def test_drop_columns(self):
        data = _matrix(p=4)
        reduced = data.drop_columns([1, 3])
        assert reduced.feature_names == ("c0", "c2")
        np.testing.assert_array_equal(reduced.x[:, 1], data.x[:, 2])


class TestStandardize:
    def test_moments(self):
        out = standardize(_matrix(n=50, p=4))
        np.testing.assert_allclose(out.x.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.x.std(axis=0, ddof=1), 1.0, atol=1e-12)
        assert out.standardized

    def test_constant_column_is_named(self):
        x = np.column_stack([np.arange(5.0), np.full(5, 2.0)])
        with pytest.raises(ConstantColumn) as exc:
            standardize(DataMatrix(x, np.zeros(5), ("a", "flat")))
        assert exc.value.column == 1
        assert "flat" in str(exc.value)

    def test_response_untouched(self):
        data = _matrix()
        np.testing.assert_array_equal(standardize(data).y, data.y)

    def test_idempotent(self):
        raw = _matrix(n=40, p=5, seed=3)
        once = standardize(DataMatrix(raw.x * 7.5 - 2.0, raw.y, raw.feature_names))
        twice = standardize(once)
        np.testing.assert_allclose(twice.x, once.x, rtol=0, atol=1e-10)


class TestSplit:
    @pytest.mark.parametrize(
        "n, fraction, n_test",
        [(10, 0.5, 5), (5, 0.5, 3), (7, 0.3, 2), (100, 0.25, 25), (7809, 0.5, 3905)],
    )
    def test_test_size_rounds_half_up(self, n, fraction, n_test):
        part = split(_matrix(n=n), fraction, SeedSpec(1))
        assert len(part.test_indices) == n_test
        assert sorted(part.train_indices + part.test_indices) == list(range(n))
        assert not set(part.train_indices) & set(part.test_indices)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.2, 1.5])
    def test_fraction_out_of_range(self, fraction):
        with pytest.raises(BadFraction):
            split(_matrix(), fraction, SeedSpec(1))

    def test_fraction_leaving_empty_side(self):
        with pytest.raises(BadFraction):
            split(_matrix(n=2), 0.1, SeedSpec(1))

    def test_deterministic_in_seed(self):
        data = _matrix(n=30)
        assert split(data, 0.5, SeedSpec(9)) == split(data, 0.5, SeedSpec(9))
        assert split(data, 0.5, SeedSpec(9)) != split(data, 0.5, SeedSpec(10))

    def test_swap_halves(self):
        data = _matrix(n=12)
        part = split(data, 0.5, SeedSpec(3))
        (a_train, a_test), (b_train, b_test) = swap_halves(data, part)
        np.testing.assert_array_equal(a_train.x, b_test.x)
        np.testing.assert_array_equal(a_test.y, b_train.y)


class TestSeedSpec:
    def test_child_streams_are_stable_and_distinct(self):
        root = SeedSpec(20240101)
        assert root.child("bootstrap", 1).derived_seed == SeedSpec(20240101).child("bootstrap", 1).derived_seed
        assert root.child("bootstrap", 1).derived_seed != root.child("bootstrap", 2).derived_seed
        assert root.child("a").child("b").derived_seed != root.child("b").child("a").derived_seed

    def test_rng_reproduces(self):
        seed = SeedSpec(4).child("x", 2)
        np.testing.assert_array_equal(seed.rng().random(5), seed.rng().random(5))

    @pytest.mark.parametrize("bad", [-1, 2**64])
    def test_out_of_range_seed(self, bad):
        with pytest.raises(BadConfig):
            SeedSpec(bad)


class TestCsv:
    def test_write_then_read(self, tmp_path):
        data = _matrix(n=6, p=2)
        path = write_csv(data, tmp_path / "d.csv", header="config_digest=abc master_seed=1")
        assert path.read_text(encoding="utf-8").startswith("# config_digest=abc master_seed=1\n")
        back = read_csv(path, "y")
        np.testing.assert_array_equal(back.x, data.x)
        np.testing.assert_array_equal(back.y, data.y)
        assert back.feature_names == data.feature_names

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,y\n1,2,3\n4,5\n", encoding="utf-8")
        with pytest.raises(MalformedCsv):
            read_csv(path, "y")

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,y\n1,2\nhello,3\n", encoding="utf-8")
        with pytest.raises(MalformedCsv):
            read_csv(path, "y")

    def test_missing_response_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n3,4\n", encoding="utf-8")
        with pytest.raises(MalformedCsv):
            read_csv(path, "y")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_csv(tmp_path / "nope.csv", "y")
