import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group

from frem.eipm import (
    EmptyBinError,
    InsufficientPositivesError,
    eipm_binning,
    eipm_eo,
    eipm_gradient,
    eipm_nw_plugin,
    eipm_proposed,
    mmd_between_weighted_empiricals,
    quantile_bins,
)
from frem.gaussian_oracle import GaussianModelMulti, sample_synthetic_multi, true_eipm_monte_carlo
from frem.gradcheck import central_difference, relative_error
from frem.kernels import MmdKernelSpec, SmoothingKernelSpec

RBF = SmoothingKernelSpec("rbf", 0.5)
KAPPA = MmdKernelSpec(1.0)


def scalar_eipm(Z, S, gamma, sigma=1.0, Y=None):
    """Plain-loop evaluation of the closed form, used as an independent oracle."""
    n = len(S)
    Y = [1] * n if Y is None else list(Y)
    pos = [i for i in range(n) if Y[i] == 1]
    n1 = len(pos)

    def k_s(a, b):
        return math.exp(-0.5 * ((a - b) / gamma) ** 2)

    def k_z(a, b):
        return math.exp(-sum((x - y) ** 2 for x, y in zip(a, b)) / (2 * sigma**2))

    total = 0.0
    for i in pos:
        den = sum(k_s(S[i], S[j]) for j in pos if j != i)
        a = [((k_s(S[i], S[j]) / den - 1.0 / (n1 - 1)) if (j != i and Y[j] == 1) else 0.0) for j in range(n)]
        q = sum(a[j] * a[k] * k_z(Z[j], Z[k]) for j in range(n) for k in range(n))
        total += math.sqrt(max(q, 0.0))
    return total / n1


class TestWeightedMmd:
    def test_identical_weights(self):
        Z = np.random.default_rng(0).standard_normal((5, 2))
        p = np.full(5, 0.2)
        assert mmd_between_weighted_empiricals(KAPPA, p, p, Z) == 0.0

    def test_two_points(self):
        v = mmd_between_weighted_empiricals(KAPPA, [1, 0], [0, 1], [[0.0], [1.0]])
        assert v == pytest.approx(math.sqrt(2 - 2 * math.exp(-0.5)), abs=1e-15)
        assert v == pytest.approx(0.88710, abs=1e-5)

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_double_sum(self, seed):
        rng = np.random.default_rng(seed)
        Z = rng.standard_normal((6, 3))
        p, q = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6))
        brute = 0.0
        for j in range(6):
            for k in range(6):
                d2 = sum((Z[j, c] - Z[k, c]) ** 2 for c in range(3))
                brute += (p[j] - q[j]) * (p[k] - q[k]) * math.exp(-d2 / 2)
        got = mmd_between_weighted_empiricals(KAPPA, p, q, Z)
        assert got == pytest.approx(math.sqrt(brute), abs=1e-10)
        assert got == pytest.approx(mmd_between_weighted_empiricals(KAPPA, q, p, Z), abs=1e-15)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            mmd_between_weighted_empiricals(KAPPA, [0.5, 0.4], [0.5, 0.5], [[0.0], [1.0]])


class TestProposed:
    def test_constant_z_is_zero(self):
        S = np.random.default_rng(0).standard_normal(30)
        assert eipm_proposed(np.ones((30, 4)), S, RBF, KAPPA).value == 0.0

    def test_three_point_scalar_oracle(self):
        # 30-digit mpmath evaluation of the closed form
        est = eipm_proposed([[0.0], [0.0], [1.0]], [0.0, 0.5, 1.0], SmoothingKernelSpec("rbf", 1.0), KAPPA)
        assert est.value == pytest.approx(0.027401379036599567, abs=1e-15)
        assert est.n == 3 and est.method == "proposed"

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        Z, S = rng.standard_normal((7, 2)), rng.uniform(size=7)
        got = eipm_proposed(Z, S, SmoothingKernelSpec("rbf", 0.3), MmdKernelSpec(0.8)).value
        assert got == pytest.approx(scalar_eipm(Z.tolist(), S.tolist(), 0.3, 0.8), abs=1e-12)

    @pytest.mark.parametrize("n", [2, 3, 5, 8])
    def test_equals_per_anchor_mmd(self, n):
        rng = np.random.default_rng(n)
        Z, S = rng.standard_normal((n, 3)), rng.uniform(size=n)
        spec = SmoothingKernelSpec("rbf", 0.4)
        total = 0.0
        for i in range(n):
            k = np.array([math.exp(-0.5 * ((S[i] - S[j]) / 0.4) ** 2) if j != i else 0.0 for j in range(n)])
            w = k / k.sum()
            u = np.full(n, 1.0 / (n - 1))
            u[i] = 0.0
            total += mmd_between_weighted_empiricals(KAPPA, w, u, Z)
        assert eipm_proposed(Z, S, spec, KAPPA).value == pytest.approx(total / n, abs=1e-10)

    def test_rejects_single_sample(self):
        with pytest.raises(ValueError):
            eipm_proposed([[1.0]], [0.0], RBF, KAPPA)

    def test_rejects_row_mismatch(self):
        with pytest.raises(ValueError):
            eipm_proposed(np.zeros((4, 2)), np.zeros(3), RBF, KAPPA)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 25), st.integers(1, 4), st.integers(0, 2**32 - 1), st.floats(0.05, 2.0))
    def test_nonnegative_and_bounded(self, n, m, seed, gamma):
        rng = np.random.default_rng(seed)
        v = eipm_proposed(rng.standard_normal((n, m)) * 3, rng.uniform(size=n),
                          SmoothingKernelSpec("rbf", gamma), KAPPA).value
        assert 0.0 <= v <= 2.0

    @pytest.mark.parametrize("seed", range(3))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        Z, S = rng.standard_normal((40, 3)), rng.uniform(size=40)
        perm = rng.permutation(40)
        assert eipm_proposed(Z[perm], S[perm], RBF, KAPPA).value == pytest.approx(
            eipm_proposed(Z, S, RBF, KAPPA).value, abs=1e-13
        )

    @pytest.mark.parametrize("seed", range(3))
    def test_rotation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        Z, S = rng.standard_normal((40, 5)), rng.uniform(size=40)
        R = ortho_group.rvs(5, random_state=seed)
        assert eipm_proposed(Z @ R, S, RBF, KAPPA).value == pytest.approx(
            eipm_proposed(Z, S, RBF, KAPPA).value, abs=1e-10
        )

    def test_independent_z_is_small(self):
        rng = np.random.default_rng(5)
        dep = rng.standard_normal(400)
        S_dep = dep + 0.2 * rng.standard_normal(400)
        independent = eipm_proposed(rng.standard_normal(400), rng.standard_normal(400), RBF, KAPPA).value
        dependent = eipm_proposed(dep, S_dep, RBF, KAPPA).value
        assert independent < dependent


class TestBinning:
    def test_constant_z(self):
        S = np.random.default_rng(0).standard_normal(20)
        assert eipm_binning(np.zeros((20, 2)), S, 3, KAPPA).value == 0.0

    def test_one_bin_rejected(self):
        with pytest.raises(ValueError):
            eipm_binning(np.zeros((4, 1)), [0, 1, 2, 3], 1, KAPPA)

    def test_empty_bin_named(self):
        with pytest.raises(EmptyBinError, match="bin 1"):
            quantile_bins([0, 0, 0, 0, 1, 1], 3)

    def test_quantile_assignment(self):
        np.testing.assert_array_equal(quantile_bins([5, 1, 3, 2, 4, 6], 2), [1, 0, 0, 0, 1, 1])
        np.testing.assert_array_equal(quantile_bins(np.arange(9.0), 3), [0, 0, 0, 1, 1, 1, 2, 2, 2])

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(9)
        Z, S = rng.standard_normal((12, 2)), rng.standard_normal(12)
        labels = quantile_bins(S, 3)
        expected = 0.0
        for b in range(3):
            members = labels == b
            p = members / members.sum()
            expected += members.mean() * mmd_between_weighted_empiricals(KAPPA, p, np.full(12, 1 / 12), Z)
        assert eipm_binning(Z, S, 3, KAPPA).value == pytest.approx(expected, abs=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 4))
    def test_nonnegative_bounded(self, seed, bins):
        rng = np.random.default_rng(seed)
        v = eipm_binning(rng.standard_normal((30, 2)), rng.standard_normal(30), bins, KAPPA).value
        assert 0.0 <= v <= 2.0


class TestEo:
    def test_all_positive_equals_dp(self):
        rng = np.random.default_rng(1)
        Z, S = rng.standard_normal((15, 2)), rng.uniform(size=15)
        assert eipm_eo(Z, S, np.ones(15), RBF, KAPPA).value == pytest.approx(
            eipm_proposed(Z, S, RBF, KAPPA).value, abs=1e-15
        )

    def test_constant_z(self):
        rng = np.random.default_rng(1)
        Y = np.array([1, 0, 1, 1, 0, 1, 0, 1.0])
        assert eipm_eo(np.full((8, 3), 0.4), rng.uniform(size=8), Y, RBF, KAPPA).value == 0.0

    def test_scalar_oracle(self):
        rng = np.random.default_rng(6)
        Z, S = rng.standard_normal((6, 2)), rng.uniform(size=6)
        Y = [1, 0, 1, 1, 0, 1]
        got = eipm_eo(Z, S, Y, SmoothingKernelSpec("rbf", 0.3), KAPPA).value
        assert got == pytest.approx(scalar_eipm(Z.tolist(), S.tolist(), 0.3, Y=Y), abs=1e-12)

    def test_insufficient_positives(self):
        with pytest.raises(InsufficientPositivesError):
            eipm_eo(np.zeros((4, 1)), [0, 1, 2, 3], [0, 0, 1, 0], RBF, KAPPA)


class TestNwPlugin:
    def test_constant_z(self):
        S = np.random.default_rng(0).standard_normal(40)
        est = eipm_nw_plugin(np.full((40, 2), 0.1), S, RBF, KAPPA, R=200, seed=3)
        assert est.value <= 1e-6

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        Z, S = rng.standard_normal((30, 2)), rng.standard_normal(30)
        a = eipm_nw_plugin(Z, S, RBF, KAPPA, R=100, seed=11).value
        assert a == eipm_nw_plugin(Z, S, RBF, KAPPA, R=100, seed=11).value
        assert a != eipm_nw_plugin(Z, S, RBF, KAPPA, R=100, seed=12).value

    def test_rejects_bad_R(self):
        with pytest.raises(ValueError):
            eipm_nw_plugin(np.zeros((3, 1)), [0, 1, 2], RBF, KAPPA, R=0)

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        est = eipm_nw_plugin(rng.standard_normal((25, 3)), rng.standard_normal(25), RBF, KAPPA, R=50)
        assert est.value >= 0.0


class TestGradient:
    def test_constant_z(self):
        S = np.random.default_rng(0).uniform(size=10)
        np.testing.assert_array_equal(eipm_gradient(np.ones((10, 3)), S, RBF, KAPPA), 0.0)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("kind", ["DP", "EO"])
    def test_finite_differences(self, seed, kind):
        rng = np.random.default_rng(seed)
        Z, S = rng.standard_normal((8, 3)), rng.uniform(size=8)
        Y = np.array([1, 1, 0, 1, 1, 0, 1, 1.0])
        spec_Z = MmdKernelSpec(1.3)
        f = eipm_eo if kind == "EO" else (lambda Z, S, Y, a, b: eipm_proposed(Z, S, a, b))
        grad = eipm_gradient(Z, S, RBF, spec_Z, kind, Y)
        numeric = central_difference(lambda: f(Z, S, Y, RBF, spec_Z).value, Z)
        assert relative_error(grad, numeric) < 1e-4

    def test_eo_all_positive_equals_dp(self):
        rng = np.random.default_rng(4)
        Z, S = rng.standard_normal((9, 2)), rng.uniform(size=9)
        np.testing.assert_allclose(
            eipm_gradient(Z, S, RBF, KAPPA, "EO", np.ones(9)), eipm_gradient(Z, S, RBF, KAPPA), atol=1e-15
        )

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            eipm_gradient(np.zeros((3, 1)), [0, 1, 2], RBF, KAPPA, "XX")


@pytest.mark.slow
def test_error_decreases_with_n_multi_design():
    model = GaussianModelMulti(3, 1 / (3 * math.sqrt(3)))
    truth = true_eipm_monte_carlo(model, 100_000, 0)
    spec = SmoothingKernelSpec("rbf", 0.5)
    rmses = []
    for n in (100, 180, 300):
        errs = []
        for r in range(100):
            batch = sample_synthetic_multi(model, n, 1000 + r)
            errs.append(eipm_proposed(batch.X, batch.S, spec, KAPPA).value - truth)
        rmses.append(float(np.sqrt(np.mean(np.square(errs)))))
    assert rmses[0] > rmses[1] > rmses[2], rmses
