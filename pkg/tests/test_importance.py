import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsesgd.data import partition_contiguous
from sparsesgd.importance import (
    AliasSampler,
    ImportanceProfile,
    build_alias_sampler,
    generate_sequence,
    importance_balance,
    load_profile,
    optimal_distribution_oracle,
    partition_importance_sums,
    psi,
    rho,
    sampling_distribution,
    save_profile,
)
from sparsesgd.objectives import SQUARED_HINGE_L2, Objective, grad

from conftest import random_dataset

positive_weights = st.lists(
    st.floats(min_value=1e-3, max_value=1e3), min_size=1, max_size=60
)


class TestSamplingDistribution:
    def test_one_to_four(self):
        assert np.allclose(
            sampling_distribution([1, 2, 3, 4]), [0.1, 0.2, 0.3, 0.4], atol=0
        )

    def test_uniform_reduction(self):
        p = sampling_distribution([3.7] * 11)
        assert np.allclose(p, 1.0 / 11, atol=1e-15)

    def test_two_node_split(self):
        assert np.allclose(sampling_distribution([1, 2]), [1 / 3, 2 / 3], atol=1e-15)

    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = sampling_distribution(rng.random(50) + 1e-6)
            assert abs(p.sum() - 1.0) <= 1e-12

    @pytest.mark.parametrize("bad", [[1.0, 0.0], [1.0, -2.0], [1.0, np.inf], [np.nan]])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(ValueError):
            sampling_distribution(bad)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            sampling_distribution([])


class TestDiagnostics:
    def test_psi_equal_weights(self):
        assert psi([2.5] * 7) == pytest.approx(7.0, rel=1e-15)

    def test_rho_equal_weights(self):
        assert rho([2.5] * 7) == 0.0

    def test_psi_hand_arithmetic(self):
        # (1+2+3+4)^2 / (1+4+9+16)
        assert psi([1, 2, 3, 4]) == pytest.approx(100.0 / 30.0, rel=1e-15)

    def test_rho_hand_arithmetic(self):
        # mean 2.5 -> [0.4, 0.8, 1.2, 1.6]; mean squared deviation = 0.2
        assert rho([1, 2, 3, 4]) == pytest.approx(0.2, rel=1e-14)

    def test_rho_scale_invariant(self):
        L = np.array([1.0, 5.0, 2.0, 9.0])
        assert rho(L) == pytest.approx(rho(1000.0 * L), rel=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(weights=positive_weights)
    def test_psi_cauchy_schwarz(self, weights):
        value = psi(weights)
        n = len(weights)
        assert 1.0 - 1e-9 <= value <= n * (1.0 + 1e-9)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            psi([])
        with pytest.raises(ValueError):
            rho([])


class TestImportanceBalance:
    def test_one_to_four(self):
        assert importance_balance([1, 2, 3, 4]).tolist() == [0, 3, 1, 2]

    def test_singleton(self):
        assert importance_balance([7.0]).tolist() == [0]

    def test_odd_hand_trace(self):
        # sorted by L: [x2, x3, x1]; interleave head/tail, middle last
        assert importance_balance([5, 1, 3]).tolist() == [1, 0, 2]

    def test_stable_ties(self):
        assert importance_balance([2, 2, 2, 2]).tolist() == [0, 3, 1, 2]

    def test_is_permutation(self):
        rng = np.random.default_rng(1)
        for n in (1, 2, 3, 10, 101):
            order = importance_balance(rng.random(n) + 0.1)
            assert np.array_equal(np.sort(order), np.arange(n))

    @settings(max_examples=100, deadline=None)
    @given(weights=positive_weights)
    def test_head_tail_pair_sums_within_one_gap(self, weights):
        """The mechanism behind the heuristic: after sorting, the head-tail
        pair sums L_(i) + L_(n-1-i) all lie within max(L) - min(L) of each
        other.  (The two-partition totals themselves can differ by more,
        since each half accumulates n/4 pair deviations; see the worked
        counterexample below.)"""
        if len(weights) % 2:
            weights = weights + [weights[0]]
        L = np.sort(np.asarray(weights))
        n = L.size
        pair_sums = L[: n // 2] + L[n - 1 : n // 2 - 1 : -1]
        assert pair_sums.max() - pair_sums.min() <= (L.max() - L.min()) + 1e-9

    def test_two_way_split_can_exceed_one_gap(self):
        # the per-pair bound does not transfer to the partition totals
        L = np.array([1.0, 1.0, 2.0, 2.0, 2.0, 2.0])
        order = importance_balance(L)
        parts = partition_contiguous(order, 2)
        phi = partition_importance_sums(L, parts, order).phi
        assert abs(phi[0] - phi[1]) == 2.0  # > max(L) - min(L) == 1


class TestPartitionImportance:
    def test_balanced_fig(self):
        L = np.array([1.0, 2.0, 3.0, 4.0])
        order = importance_balance(L)
        parts = partition_contiguous(order, 2)
        phi = partition_importance_sums(L, parts, order).phi
        assert phi.tolist() == [5.0, 5.0]

    def test_unshuffled_split(self):
        L = np.array([1.0, 2.0, 3.0, 4.0])
        order = np.arange(4)
        parts = partition_contiguous(order, 2)
        phi = partition_importance_sums(L, parts, order).phi
        assert phi.tolist() == [3.0, 7.0]

    def test_single_partition(self):
        L = np.array([2.0, 8.0, 1.0])
        order = np.array([2, 0, 1])
        phi = partition_importance_sums(L, partition_contiguous(order, 1), order).phi
        assert phi.tolist() == [11.0]

    def test_phi_sums_to_total(self):
        rng = np.random.default_rng(3)
        L = rng.random(57) + 0.5
        order = importance_balance(L)
        parts = partition_contiguous(order, 5)
        phi = partition_importance_sums(L, parts, order).phi
        assert phi.sum() == pytest.approx(L.sum(), abs=1e-9)

    def test_rejects_non_permutation(self):
        L = np.ones(4)
        parts = partition_contiguous(np.arange(4), 2)
        with pytest.raises(ValueError, match="permutation"):
            partition_importance_sums(L, parts, np.array([0, 1, 1, 2]))


class TestAliasSampler:
    def test_implied_distribution_exact(self):
        rng = np.random.default_rng(4)
        for n in (1, 2, 7, 100, 1000):
            p = sampling_distribution(rng.random(n) + 1e-3)
            sampler = build_alias_sampler(p)
            assert np.all(np.abs(sampler.implied_distribution() - p) <= 1e-12)

    def test_degenerate_single(self):
        seq = generate_sequence(build_alias_sampler([1.0]), 50, seed=0)
        assert np.all(seq == 0)

    def test_fair_coin_concentration(self):
        seq = generate_sequence(build_alias_sampler([0.5, 0.5]), 10**6, seed=1)
        freq = np.mean(seq == 0)
        assert 0.497 <= freq <= 0.503  # 3 sigma, sigma ~ 5e-4

    def test_weighted_concentration(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        seq = generate_sequence(build_alias_sampler(p), 10**6, seed=2)
        counts = np.bincount(seq, minlength=4) / seq.size
        sigma = np.sqrt(p * (1 - p) / seq.size)
        assert np.all(np.abs(counts - p) <= 3 * sigma)

    def test_reproducible(self):
        p = sampling_distribution(np.arange(1.0, 21.0))
        sampler = build_alias_sampler(p)
        a = generate_sequence(sampler, 1000, seed=9)
        b = generate_sequence(sampler, 1000, seed=9)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, generate_sequence(sampler, 1000, seed=10))

    def test_invalid_distribution_rejected(self):
        with pytest.raises(ValueError):
            build_alias_sampler([0.5, 0.4])  # does not sum to 1
        with pytest.raises(ValueError):
            build_alias_sampler([1.5, -0.5])
        with pytest.raises(ValueError):
            generate_sequence(build_alias_sampler([1.0]), 0, seed=0)


def densify_grad(ds, obj, i, w):
    out = np.zeros(ds.d)
    idx, vals = grad(obj, ds, i, w)
    out[idx] = vals
    return out


def exact_is_variance(ds, obj, w, p):
    """Enumerated variance of the reweighted estimator (n p_i)^-1 grad_i
    under sampling distribution p; 0/0 terms (p_i = 0 with zero gradient)
    contribute nothing."""
    n = ds.n
    grads = np.stack([densify_grad(ds, obj, i, w) for i in range(n)])
    mean = grads.mean(axis=0)
    var = 0.0
    for i in range(n):
        if p[i] == 0.0:
            continue
        dev = grads[i] / (n * p[i]) - mean
        var += p[i] * float(np.dot(dev, dev))
    return var


class TestOptimalDistributionOracle:
    def test_uniform_when_gradients_equal_norm(self):
        rows = [[(i, 2.0)] for i in range(6)]
        from sparsesgd.data import SparseDataset

        ds = SparseDataset.from_rows(rows, [1, -1, 1, -1, 1, -1])
        obj = Objective(SQUARED_HINGE_L2, eta=1.0)
        p = optimal_distribution_oracle(ds, obj, np.zeros(ds.d))
        assert np.allclose(p, 1.0 / 6.0, atol=1e-15)

    def test_zero_gradients_rejected(self):
        from sparsesgd.data import SparseDataset

        ds = SparseDataset.from_rows([[(0, 1.0)], [(1, 1.0)]], [1, 1])
        obj = Objective("logistic_l1", eta=0.0)
        # at a huge-margin point both sigmoids underflow to zero gradient
        w = np.array([1e4, 1e4])
        with pytest.raises(ValueError, match="zero"):
            optimal_distribution_oracle(ds, obj, w)

    @pytest.mark.parametrize("seed", range(3))
    def test_variance_optimality(self, seed):
        ds = random_dataset(n=20, d=12, max_nnz=5, seed=seed)
        obj = Objective(SQUARED_HINGE_L2, eta=0.5)
        rng = np.random.default_rng(100 + seed)
        w = rng.normal(size=ds.d)
        p_star = optimal_distribution_oracle(ds, obj, w)
        v_star = exact_is_variance(ds, obj, w, p_star)
        assert v_star <= exact_is_variance(ds, obj, w, np.full(ds.n, 1.0 / ds.n)) + 1e-12
        for _ in range(250):
            p = rng.random(ds.n) + 1e-9
            p /= p.sum()
            assert v_star <= exact_is_variance(ds, obj, w, p) + 1e-12


class TestUnbiasedness:
    def test_exact_reweighted_mean(self):
        """sum_i p_i (n p_i)^-1 grad_i == mean gradient, per coordinate."""
        ds = random_dataset(n=15, d=10, max_nnz=4, seed=5)
        obj = Objective(SQUARED_HINGE_L2, eta=0.3)
        rng = np.random.default_rng(6)
        for _ in range(10):
            w = rng.normal(size=ds.d)
            p = rng.random(ds.n) + 0.05
            p /= p.sum()
            grads = np.stack([densify_grad(ds, obj, i, w) for i in range(ds.n)])
            reweighted = sum(
                p[i] * grads[i] / (ds.n * p[i]) for i in range(ds.n)
            )
            assert np.all(np.abs(reweighted - grads.mean(axis=0)) <= 1e-10)


class TestProfileArtifacts:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        L = rng.random(40) * 10 + 0.1
        profile = ImportanceProfile.from_weights(L)
        order = importance_balance(L)
        save_profile(tmp_path, profile, order, balanced=True)
        loaded, loaded_order, balanced = load_profile(tmp_path)
        assert np.array_equal(loaded.L, profile.L)
        assert np.array_equal(loaded_order, order)
        assert balanced is True
        assert loaded.psi == profile.psi
        assert loaded.rho == profile.rho

    def test_profile_invariants(self, small_random_dataset):
        obj = Objective(SQUARED_HINGE_L2, eta=0.2)
        profile = ImportanceProfile.from_objective(small_random_dataset, obj)
        assert np.all(profile.L > 0)
        assert abs(profile.P.sum() - 1.0) <= 1e-12
        assert np.all(profile.P > 0)
        assert 1.0 <= profile.psi <= profile.n
        assert profile.rho >= 0.0
