"""Kernel closed forms, composite assembly, gradients, and properties."""

import math

import numpy as np
import pytest

from radiomap.kernels import (
    JITTER_REL,
    KernelKind,
    KernelSpec,
    base_eval,
    composite_eval,
    covariance_gradients,
    covariance_matrix,
)

ALL_KINDS = (KernelKind.RBF, KernelKind.MATERN15, KernelKind.RQ)


def random_spec(rng, kind=None, noise=True):
    kind = kind or ALL_KINDS[rng.integers(0, 3)]
    return KernelSpec(
        kind=kind,
        signal_variance=float(np.exp(rng.uniform(-1.0, 1.5))),
        length_scale=float(np.exp(rng.uniform(-1.0, 1.0))),
        noise_variance=float(rng.uniform(0.01, 1.0)) if noise else 0.0,
        alpha=float(np.exp(rng.uniform(-0.7, 1.0))),
    )


def fd_gradients(spec, points, h=1e-6):
    """Central finite differences of the covariance in log-parameter space."""
    theta = spec.log_params()
    out = {}
    for i, name in enumerate(spec.free_parameter_names()):
        plus = theta.copy()
        plus[i] += h
        minus = theta.copy()
        minus[i] -= h
        k_plus = covariance_matrix(spec.with_log_params(plus), points)
        k_minus = covariance_matrix(spec.with_log_params(minus), points)
        out[name] = (k_plus - k_minus) / (2.0 * h)
    return out


class TestBaseEval:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_identity_at_zero(self, kind):
        assert base_eval(kind, 1.3, 0.7, 0.0) == 1.0

    def test_rbf_closed_form(self):
        assert base_eval(KernelKind.RBF, 1.0, 1.0, 1.0) == pytest.approx(math.exp(-0.5), rel=1e-12)

    def test_rq_closed_form(self):
        assert base_eval(KernelKind.RQ, 1.0, 1.0, 1.0) == pytest.approx(2.0 / 3.0, rel=1e-12)

    def test_matern15_closed_form(self):
        expected = (1.0 + math.sqrt(3.0)) * math.exp(-math.sqrt(3.0))
        assert base_eval(KernelKind.MATERN15, 1.0, 1.0, 1.0) == pytest.approx(expected, rel=1e-12)
        assert base_eval(KernelKind.MATERN15, 1.0, 1.0, 1.0) == pytest.approx(0.48336, abs=1e-5)

    def test_vectorized(self):
        r = np.array([0.0, 0.5, 1.0, 2.0])
        values = base_eval(KernelKind.RBF, 1.0, 1.0, r)
        assert values.shape == r.shape
        assert values[0] == 1.0

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_rejects_bad_arguments(self, kind):
        with pytest.raises(ValueError):
            base_eval(kind, 0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            base_eval(kind, 1.0, 1.0, -1.0)
        with pytest.raises(ValueError):
            base_eval(kind, 1.0, 1.0, math.nan)
        if kind is KernelKind.RQ:
            with pytest.raises(ValueError):
                base_eval(kind, 1.0, 0.0, 1.0)


class TestCompositeEval:
    def test_identical_point_activates_noise(self):
        spec = KernelSpec(KernelKind.RBF, signal_variance=4.0, length_scale=1.0, noise_variance=1.0)
        assert composite_eval(spec, (0.5, 2.0), (0.5, 2.0)) == 5.0

    def test_distinct_far_points_decay_to_zero(self):
        spec = KernelSpec(KernelKind.RBF, signal_variance=4.0, length_scale=1.0, noise_variance=1.0)
        assert composite_eval(spec, (0.0, 0.0), (100.0, 0.0)) < 1e-12

    def test_scalar_evaluation(self):
        spec = KernelSpec(KernelKind.RBF, signal_variance=2.0, length_scale=1.0, noise_variance=0.0)
        expected = 2.0 * math.exp(-0.5)
        assert composite_eval(spec, (0.0, 0.0), (1.0, 0.0)) == pytest.approx(expected, rel=1e-12)
        assert composite_eval(spec, (0.0, 0.0), (1.0, 0.0)) == pytest.approx(1.21306, abs=1e-5)


class TestCovarianceMatrix:
    def test_single_point_with_noise(self):
        spec = KernelSpec(KernelKind.MATERN15, signal_variance=3.0, length_scale=1.0, noise_variance=9.0)
        K = covariance_matrix(spec, [[1.0, 2.0]], per_point_noise=[2.0])
        assert K.shape == (1, 1)
        assert K[0, 0] == pytest.approx(5.0 + JITTER_REL * 3.0, rel=1e-15)

    def test_symmetric_under_point_swap(self):
        rng = np.random.default_rng(7)
        pts = rng.uniform(0.0, 5.0, size=(6, 2))
        spec = random_spec(rng)
        K = covariance_matrix(spec, pts)
        perm = np.arange(6)[::-1]
        K_swapped = covariance_matrix(spec, pts[perm])
        assert np.array_equal(K_swapped, K[np.ix_(perm, perm)])
        assert np.array_equal(K, K.T)

    def test_matches_pairwise_composite_eval(self):
        rng = np.random.default_rng(11)
        pts = rng.uniform(0.0, 3.0, size=(3, 2))
        spec = random_spec(rng)
        K = covariance_matrix(spec, pts)
        for i in range(3):
            for j in range(3):
                expected = composite_eval(spec, pts[i], pts[j])
                if i == j:
                    expected += JITTER_REL * spec.signal_variance
                assert K[i, j] == pytest.approx(expected, rel=1e-12)

    def test_dimension_mismatch(self):
        spec = KernelSpec(KernelKind.RBF, 1.0, 1.0)
        with pytest.raises(ValueError):
            covariance_matrix(spec, [[0.0, 0.0], [1.0, 1.0]], per_point_noise=[1.0])
        with pytest.raises(ValueError):
            covariance_matrix(spec, [[0.0, 0.0, 0.0]])


class TestGradients:
    def test_signal_gradient_is_signal_part(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0.0, 4.0, size=(5, 2))
        spec = random_spec(rng)
        grads = covariance_gradients(spec, pts)
        noise_free = covariance_matrix(spec, pts, per_point_noise=np.zeros(5))
        noise_free[np.diag_indices(5)] -= JITTER_REL * spec.signal_variance
        # jitter scales with the signal variance, so its derivative rides along
        np.testing.assert_allclose(grads["signal_variance"], noise_free, rtol=1e-7)

    def test_noise_gradient_is_diagonal(self):
        rng = np.random.default_rng(4)
        pts = rng.uniform(0.0, 4.0, size=(4, 2))
        spec = random_spec(rng)
        grads = covariance_gradients(spec, pts)
        np.testing.assert_array_equal(grads["noise_variance"], spec.noise_variance * np.eye(4))

    def test_rbf_two_points_vs_finite_differences(self):
        spec = KernelSpec(KernelKind.RBF, signal_variance=2.0, length_scale=0.8, noise_variance=0.3)
        pts = np.array([[0.0, 0.0], [1.0, 0.5]])
        analytic = covariance_gradients(spec, pts)
        numeric = fd_gradients(spec, pts)
        for name in analytic:
            assert np.max(np.abs(analytic[name] - numeric[name])) < 1e-5

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_random_instances_vs_finite_differences(self, kind):
        rng = np.random.default_rng(42)
        for _ in range(20):
            n = int(rng.integers(2, 8))
            pts = rng.uniform(0.0, 5.0, size=(n, 2))
            spec = random_spec(rng, kind=kind)
            analytic = covariance_gradients(spec, pts)
            numeric = fd_gradients(spec, pts)
            for name in analytic:
                assert np.max(np.abs(analytic[name] - numeric[name])) < 1e-5


class TestKernelProperties:
    def test_stationarity_exact(self):
        # dyadic coordinates and integer shifts keep the arithmetic exact
        rng = np.random.default_rng(5)
        base_pts = rng.integers(0, 40, size=(10, 2)) * 0.25
        shift = np.array([3.0, -7.0])
        for kind in ALL_KINDS:
            for i in range(len(base_pts)):
                for j in range(len(base_pts)):
                    r0 = np.hypot(*(base_pts[i] - base_pts[j]))
                    r1 = np.hypot(*((base_pts[i] + shift) - (base_pts[j] + shift)))
                    assert base_eval(kind, 0.9, 1.1, r0) == base_eval(kind, 0.9, 1.1, r1)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_monotone_decay_and_bounds(self, kind):
        r = np.linspace(0.0, 20.0, 400)
        values = base_eval(kind, 1.0, 0.9, r)
        assert np.all(np.diff(values) < 0.0)
        assert np.all(values > 0.0)
        assert np.all(values <= 1.0)
        assert values[0] == 1.0

    def test_rq_approaches_rbf_for_large_alpha(self):
        r = np.linspace(0.0, 10.0, 500)
        rq = base_eval(KernelKind.RQ, 1.0, 1e6, r)
        rbf = base_eval(KernelKind.RBF, 1.0, 1.0, r)
        assert np.max(np.abs(rq - rbf)) < 1e-4

    def test_psd_on_random_instances(self):
        rng = np.random.default_rng(123)
        for _ in range(100):
            n = int(rng.integers(2, 51))
            pts = rng.uniform(0.0, 20.0, size=(n, 2))
            spec = random_spec(rng, noise=bool(rng.integers(0, 2)))
            K = covariance_matrix(spec, pts)
            np.linalg.cholesky(K)  # raises LinAlgError if not PSD


class TestKernelSpecSerialization:
    def test_json_round_trip(self):
        spec = KernelSpec(KernelKind.RQ, signal_variance=2.5, length_scale=1.25,
                          noise_variance=0.5, alpha=3.0)
        again = KernelSpec.from_json(spec.to_json())
        assert again == spec

    def test_json_keys(self):
        spec = KernelSpec(KernelKind.MATERN15, 1.0, 1.0)
        data = spec.as_dict()
        assert set(data) == {"kind", "signal_variance", "length_scale", "alpha", "noise_variance"}
        assert data["kind"] == "matern15"

    def test_log_param_round_trip(self):
        spec = KernelSpec(KernelKind.RQ, 2.0, 0.5, noise_variance=0.1, alpha=4.0)
        again = spec.with_log_params(spec.log_params())
        assert again.signal_variance == pytest.approx(spec.signal_variance, rel=1e-15)
        assert again.alpha == pytest.approx(spec.alpha, rel=1e-15)

    def test_validation(self):
        with pytest.raises(ValueError):
            KernelSpec(KernelKind.RBF, signal_variance=0.0, length_scale=1.0)
        with pytest.raises(ValueError):
            KernelSpec(KernelKind.RBF, signal_variance=1.0, length_scale=-1.0)
        with pytest.raises(ValueError):
            KernelSpec(KernelKind.RBF, signal_variance=1.0, length_scale=1.0, noise_variance=-0.1)
        with pytest.raises(ValueError):
            KernelSpec(KernelKind.RQ, signal_variance=1.0, length_scale=1.0, alpha=0.0)
