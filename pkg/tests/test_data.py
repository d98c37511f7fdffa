import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsesgd import data
from sparsesgd.data import (
    DataError,
    ParseError,
    SparseDataset,
    dumps_libsvm,
    estimate_conflict_degree,
    load_cache,
    parse_libsvm,
    partition_contiguous,
    row_norms,
    save_cache,
    write_libsvm,
)

from conftest import densify, random_dataset


class TestParseLibsvm:
    def test_basic(self):
        ds = parse_libsvm("+1 1:0.5 3:1.0\n-1 2:2.0")
        assert ds.n == 2
        assert ds.d == 3
        idx0, val0 = ds.row(0)
        assert idx0.tolist() == [0, 2]
        assert val0.tolist() == [0.5, 1.0]
        idx1, val1 = ds.row(1)
        assert idx1.tolist() == [1]
        assert val1.tolist() == [2.0]
        assert ds.labels.tolist() == [1, -1]

    def test_zero_label_maps_to_negative(self):
        ds = parse_libsvm("0 1:1.0")
        assert ds.labels.tolist() == [-1]

    def test_non_increasing_index_rejected(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_libsvm("+1 3:1 1:1")

    def test_duplicate_index_rejected(self):
        with pytest.raises(ParseError, match="non-increasing"):
            parse_libsvm("+1 2:1 2:1")

    def test_non_numeric_token(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_libsvm("+1 1:1\n-1 1:abc")

    def test_bad_label(self):
        with pytest.raises(ParseError, match="label"):
            parse_libsvm("2 1:1.0")

    def test_zero_feature_index(self):
        with pytest.raises(ParseError, match="1-based"):
            parse_libsvm("+1 0:1.0")

    def test_empty_dataset(self):
        with pytest.raises(DataError, match="empty"):
            parse_libsvm("\n\n")

    def test_empty_row(self):
        with pytest.raises(ParseError, match="zero features"):
            parse_libsvm("+1 1:1\n-1")

    def test_dimension_override(self):
        ds = parse_libsvm("+1 1:1.0", d=10)
        assert ds.d == 10
        with pytest.raises(DataError, match="override"):
            parse_libsvm("+1 5:1.0", d=3)

    def test_bytes_and_file_inputs(self, tmp_path):
        text = "+1 1:0.25 2:-1.5\n0 3:4.0\n"
        from_str = parse_libsvm(text)
        from_bytes = parse_libsvm(text.encode())
        path = tmp_path / "toy.svm"
        path.write_text(text)
        from_path = parse_libsvm(path)
        for other in (from_bytes, from_path):
            assert np.array_equal(from_str.values, other.values)
            assert np.array_equal(from_str.labels, other.labels)


class TestRoundTrip:
    def test_small_example(self):
        ds = parse_libsvm("+1 1:0.5 3:1.0\n-1 2:2.0")
        again = parse_libsvm(dumps_libsvm(ds))
        assert np.array_equal(ds.indptr, again.indptr)
        assert np.array_equal(ds.indices, again.indices)
        assert np.array_equal(ds.values, again.values)
        assert np.array_equal(ds.labels, again.labels)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_random_roundtrip(self, seed):
        ds = random_dataset(n=12, d=30, max_nnz=5, seed=seed)
        again = parse_libsvm(dumps_libsvm(ds), d=ds.d)
        assert np.array_equal(ds.indptr, again.indptr)
        assert np.array_equal(ds.indices, again.indices)
        assert np.array_equal(ds.values, again.values)
        assert np.array_equal(ds.labels, again.labels)

    def test_file_roundtrip(self, tmp_path, small_random_dataset):
        path = tmp_path / "ds.svm"
        write_libsvm(small_random_dataset, path)
        again = data.load_libsvm(path, d=small_random_dataset.d)
        assert np.array_equal(small_random_dataset.values, again.values)
        assert np.array_equal(small_random_dataset.indices, again.indices)


class TestBinaryCache:
    def test_roundtrip(self, tmp_path, small_random_dataset):
        path = tmp_path / "ds.cache"
        save_cache(small_random_dataset, path)
        again = load_cache(path)
        assert again.n == small_random_dataset.n
        assert again.d == small_random_dataset.d
        assert np.array_equal(small_random_dataset.indptr, again.indptr)
        assert np.array_equal(small_random_dataset.indices, again.indices)
        assert np.array_equal(small_random_dataset.values, again.values)
        assert np.array_equal(small_random_dataset.labels, again.labels)

    def test_version_bump_invalidates(self, tmp_path, small_random_dataset):
        path = tmp_path / "ds.cache"
        save_cache(small_random_dataset, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 99  # version field
        path.write_bytes(bytes(raw))
        with pytest.raises(DataError, match="version"):
            load_cache(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "junk.cache"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(DataError, match="not a dataset cache"):
            load_cache(path)

    def test_load_dataset_through_cache(self, tmp_path, small_random_dataset):
        svm = tmp_path / "ds.svm"
        write_libsvm(small_random_dataset, svm)
        first = data.load_dataset(svm, d=small_random_dataset.d, cache=True)
        assert (tmp_path / "ds.svm.cache").exists()
        second = data.load_dataset(svm, d=small_random_dataset.d, cache=True)
        assert np.array_equal(first.values, second.values)


class TestRowNorms:
    def test_three_four_five(self):
        ds = SparseDataset.from_rows([[(0, 3.0), (1, 4.0)]], [1])
        assert row_norms(ds).tolist() == [5.0]

    def test_unit_vector(self):
        ds = SparseDataset.from_rows([[(7, 1.0)]], [1], d=8)
        assert row_norms(ds).tolist() == [1.0]

    def test_matches_dense_expansion(self):
        ds = random_dataset(n=10, d=20, max_nnz=6, seed=7)
        dense = np.linalg.norm(densify(ds), axis=1)
        assert np.allclose(row_norms(ds), dense, rtol=1e-12, atol=0)


def exact_average_degree(ds):
    """O(n^2) oracle: build the conflict graph from python sets."""
    supports = [set(ds.row(i)[0].tolist()) for i in range(ds.n)]
    degree = [
        sum(1 for j in range(ds.n) if j != i and supports[i] & supports[j])
        for i in range(ds.n)
    ]
    return sum(degree) / ds.n


class TestConflictDegree:
    def test_complete_conflict_graph(self):
        rows = [[(0, 1.0), (i + 1, 1.0)] for i in range(8)]
        ds = SparseDataset.from_rows(rows, [1] * 8)
        for num_pairs in (1, 5, 1000):
            assert estimate_conflict_degree(ds, num_pairs, seed=0) == ds.n - 1

    def test_disjoint_supports(self):
        rows = [[(2 * i, 1.0), (2 * i + 1, 1.0)] for i in range(6)]
        ds = SparseDataset.from_rows(rows, [1] * 6)
        assert estimate_conflict_degree(ds, 500, seed=1) == 0.0

    @pytest.mark.parametrize("seed", range(4))
    def test_exhaustive_equals_exact_graph(self, seed):
        ds = random_dataset(n=30, d=15, max_nnz=4, seed=seed)
        est = estimate_conflict_degree(ds, ds.n * (ds.n - 1), seed=0)
        assert est == pytest.approx(exact_average_degree(ds), abs=1e-12)

    def test_deterministic_for_seed(self, small_random_dataset):
        a = estimate_conflict_degree(small_random_dataset, 100, seed=5)
        b = estimate_conflict_degree(small_random_dataset, 100, seed=5)
        assert a == b

    def test_requires_two_samples(self):
        ds = SparseDataset.from_rows([[(0, 1.0)]], [1])
        with pytest.raises(DataError):
            estimate_conflict_degree(ds, 10, seed=0)

    def test_requires_positive_pairs(self, small_random_dataset):
        with pytest.raises(ValueError):
            estimate_conflict_degree(small_random_dataset, 0, seed=0)


class TestPartition:
    def test_four_over_two(self):
        parts = partition_contiguous(np.arange(4), 2)
        assert [(p.lo, p.hi) for p in parts] == [(0, 2), (2, 4)]

    def test_five_over_two(self):
        parts = partition_contiguous(np.arange(5), 2)
        assert [(p.lo, p.hi) for p in parts] == [(0, 2), (2, 5)]

    def test_seven_over_three(self):
        parts = partition_contiguous(np.arange(7), 3)
        assert [(p.lo, p.hi) for p in parts] == [(0, 2), (2, 4), (4, 7)]

    def test_too_many_workers(self):
        with pytest.raises(DataError):
            partition_contiguous(np.arange(3), 4)

    @settings(max_examples=100, deadline=None)
    @given(n=st.integers(1, 300), num_t=st.integers(1, 300))
    def test_exact_disjoint_cover(self, n, num_t):
        if num_t > n:
            num_t = n
        parts = partition_contiguous(np.arange(n), num_t)
        assert parts[0].lo == 0
        assert parts[-1].hi == n
        for a, b in zip(parts, parts[1:]):
            assert a.hi == b.lo
        assert all(p.size >= 1 for p in parts)
        assert sum(p.size for p in parts) == n
