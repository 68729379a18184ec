"""Spherical distributions: normalizers, densities, exact sampling."""

import math

import numpy as np
import pytest
import scipy.special
import scipy.stats

from driftsphere.exceptions import (
    DegenerateError,
    DomainError,
    ShapeError,
    SingularityError,
)
from driftsphere.numerics import log_sphere_area, make_rng, sample_uniform_sphere
from driftsphere.sphere import (
    ThpParams,
    VmfParams,
    mean_direction,
    sample_tangent,
    tangent_normal_compose,
    thp_log_normalizer,
    thp_log_pdf,
    thp_sample,
    vmf_log_normalizer,
    vmf_log_pdf,
)


def e_(d, i=0):
    v = np.zeros(d)
    v[i] = 1.0
    return v


def mc_sphere_integral(batch_log_pdf, d, n_samples, seed):
    """Plain Monte-Carlo integral of exp(log_pdf) over S^{d-1}.

    Uniform sphere samples; the estimator is the sample mean times the
    sphere area.  ``batch_log_pdf`` maps an (n, d) matrix of unit rows to
    n log-density values (may contain -inf at masked poles).
    """
    rng = make_rng(seed)
    x = sample_uniform_sphere(d, rng, size=n_samples)
    area = math.exp(log_sphere_area(d))
    return area * float(np.mean(np.exp(batch_log_pdf(x))))


def thp_batch_log_pdf(params, x):
    """Vectorized T-style log-density with poles masked to -inf."""
    t = x @ params.mu
    kappa = params.kappa if params.kappa > 0 else 1.0
    out = np.full(x.shape[0], -np.inf)
    ok = t < 1.0 - 1e-12
    out[ok] = (
        math.log(2.0)
        - math.log(kappa)
        - np.log1p(-t[ok])
        - thp_log_normalizer(kappa, params.dim)
    )
    return out


def thp_normalizer_quadrature(kappa, d):
    """Exact Gauss-Jacobi evaluation of the T-style kernel's integral.

    The kernel restricted to the dot product t is
    (2/kappa) (1-t)^{(d-5)/2} (1+t)^{(d-3)/2}, a pure Jacobi weight, so a
    handful of nodes integrates it exactly; multiplying by the tangent
    sphere area gives the full surface integral.
    """
    a = 0.5 * (d - 5)
    b = 0.5 * (d - 3)
    _, weights = scipy.special.roots_jacobi(8, a, b)
    marginal = (2.0 / kappa) * float(np.sum(weights))
    return math.log(marginal) + log_sphere_area(d - 1)


class TestTangentNormalCompose:
    def test_endpoints_and_pure_tangent(self):
        rng = make_rng(0)
        mu = sample_uniform_sphere(6, rng)
        v = sample_tangent(mu, rng)
        np.testing.assert_allclose(tangent_normal_compose(mu, 1.0, v), mu, atol=1e-12)
        np.testing.assert_allclose(tangent_normal_compose(mu, -1.0, v), -mu, atol=1e-12)
        np.testing.assert_allclose(tangent_normal_compose(mu, 0.0, v), v, atol=1e-12)

    def test_dot_product_equals_t(self):
        rng = make_rng(1)
        for _ in range(50):
            mu = sample_uniform_sphere(9, rng)
            v = sample_tangent(mu, rng)
            t = rng.uniform(-1.0, 1.0)
            x = tangent_normal_compose(mu, t, v)
            assert abs(float(x @ mu) - t) < 1e-12
            assert abs(np.linalg.norm(x) - 1.0) < 1e-12

    def test_non_tangent_rejected(self):
        d = 5
        with pytest.raises(DomainError):
            tangent_normal_compose(e_(d), 0.3, e_(d))  # v parallel to mu


class TestSampleTangent:
    def test_orthogonal_unit(self):
        rng = make_rng(2)
        for d in (2, 3, 8, 17):
            mu = sample_uniform_sphere(d, rng)
            for _ in range(20):
                v = sample_tangent(mu, rng)
                assert abs(float(v @ mu)) < 1e-9
                assert abs(np.linalg.norm(v) - 1.0) < 1e-9

    def test_uniform_angle_in_tangent_plane(self):
        """d=3: the in-plane angle of v is uniform on [-pi, pi)."""
        rng = make_rng(3)
        mu = np.array([0.0, 0.0, 1.0])
        draws = np.array([sample_tangent(mu, rng) for _ in range(20_000)])
        angles = np.arctan2(draws[:, 1], draws[:, 0])
        p = scipy.stats.kstest(angles, scipy.stats.uniform(-np.pi, 2 * np.pi).cdf).pvalue
        assert p > 0.01


class TestThpNormalizer:
    def test_matches_exact_quadrature(self):
        for d in (4, 5, 8, 16, 64):
            for kappa in (0.5, 1.0, 2.0, 16.0, 300.0):
                assert thp_log_normalizer(kappa, d) == pytest.approx(
                    thp_normalizer_quadrature(kappa, d), abs=1e-12
                )

    def test_d4_value(self):
        # Quadrature (and Monte-Carlo, see below) fix Z(1, 4) = 8 pi^2.
        assert thp_log_normalizer(1.0, 4) == pytest.approx(
            math.log(8 * math.pi**2), abs=1e-12
        )
        assert thp_log_normalizer(2.0, 4) == pytest.approx(
            math.log(4 * math.pi**2), abs=1e-12
        )

    def test_kappa_scaling(self):
        """Z(kappa, d) = Z(1, d) / kappa: kappa enters only as 1/kappa."""
        for d in (4, 7, 32):
            base = thp_log_normalizer(1.0, d)
            for kappa in (0.25, 3.0, 64.0, 1e6):
                assert thp_log_normalizer(kappa, d) == pytest.approx(
                    base - math.log(kappa), abs=1e-12
                )

    def test_domain(self):
        with pytest.raises(DomainError):
            thp_log_normalizer(1.0, 3)  # marginal not integrable
        with pytest.raises(DomainError):
            thp_log_normalizer(0.0, 4)
        with pytest.raises(DomainError):
            thp_log_normalizer(-1.0, 8)


class TestThpLogPdf:
    def test_value_at_equator_and_antipode(self):
        params = ThpParams(mu=e_(4), kappa=1.0)
        # pdf(t) = 2/(kappa (1-t)) / Z with Z = 8 pi^2 at d=4.
        assert thp_log_pdf(params, e_(4, 1)) == pytest.approx(
            math.log(2.0 / (8 * math.pi**2)), abs=1e-12
        )
        assert thp_log_pdf(params, -e_(4)) == pytest.approx(
            math.log(1.0 / (8 * math.pi**2)), abs=1e-12
        )

    def test_depends_only_on_dot_product(self):
        rng = make_rng(4)
        params = ThpParams(mu=sample_uniform_sphere(8, rng), kappa=3.0)
        t = 0.37
        for _ in range(10):
            v = sample_tangent(params.mu, rng)
            x = tangent_normal_compose(params.mu, t, v)
            assert thp_log_pdf(params, x) == pytest.approx(
                math.log(2.0 / (3.0 * (1 - t))) - thp_log_normalizer(3.0, 8), abs=1e-12
            )

    def test_kappa_independent_after_normalization(self):
        rng = make_rng(5)
        mu = sample_uniform_sphere(6, rng)
        x = sample_uniform_sphere(6, rng)
        vals = {k: thp_log_pdf(ThpParams(mu=mu, kappa=k), x) for k in (0.5, 1.0, 100.0)}
        ref = vals[1.0]
        for v in vals.values():
            assert v == pytest.approx(ref, abs=1e-12)

    def test_singularity_raises(self):
        params = ThpParams(mu=e_(4), kappa=1.0)
        with pytest.raises(SingularityError):
            thp_log_pdf(params, e_(4))

    def test_rotation_equivariance(self):
        rng = make_rng(6)
        d = 8
        mu = sample_uniform_sphere(d, rng)
        x = sample_uniform_sphere(d, rng)
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        lhs = thp_log_pdf(ThpParams(mu=q @ mu, kappa=2.0), q @ x / np.linalg.norm(q @ x))
        rhs = thp_log_pdf(ThpParams(mu=mu, kappa=2.0), x)
        assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_normalizes_by_monte_carlo(self):
        """Smoke-scale check that exp(log_pdf) integrates to 1."""
        for d, tol in ((8, 0.02), (16, 0.02)):
            params = ThpParams(mu=e_(d), kappa=16.0)
            integral = mc_sphere_integral(
                lambda x: thp_batch_log_pdf(params, x), d, 200_000, seed=10 + d
            )
            assert integral == pytest.approx(1.0, abs=tol)

    def test_dimension_mismatch(self):
        params = ThpParams(mu=e_(4), kappa=1.0)
        with pytest.raises(ShapeError):
            thp_log_pdf(params, e_(5))


class TestThpSample:
    def test_marginal_is_beta(self):
        """(t+1)/2 ~ Beta((d-1)/2, (d-3)/2)."""
        rng = make_rng(7)
        for d in (4, 8, 32):
            params = ThpParams(mu=e_(d), kappa=1.0)
            x = thp_sample(params, rng, size=50_000)
            z = 0.5 * (x @ params.mu + 1.0)
            dist = scipy.stats.beta(0.5 * (d - 1), 0.5 * (d - 3))
            assert scipy.stats.kstest(z, dist.cdf).pvalue > 0.01

    def test_mean_dot_product(self):
        rng = make_rng(8)
        for d, expect in ((4, 0.5), (8, 1.0 / 6.0)):
            params = ThpParams(mu=e_(d), kappa=1.0)
            x = thp_sample(params, rng, size=100_000)
            assert abs(float(np.mean(x @ params.mu)) - expect) < 0.01

    def test_kappa_does_not_change_law(self):
        rng = make_rng(9)
        d = 8
        t1 = thp_sample(ThpParams(mu=e_(d), kappa=1.0), rng, size=20_000) @ e_(d)
        t2 = thp_sample(ThpParams(mu=e_(d), kappa=100.0), rng, size=20_000) @ e_(d)
        assert scipy.stats.ks_2samp(t1, t2).pvalue > 0.01

    def test_unit_norm_and_single_draw(self):
        rng = make_rng(10)
        params = ThpParams(mu=sample_uniform_sphere(5, rng), kappa=2.0)
        batch = thp_sample(params, rng, size=1000)
        np.testing.assert_allclose(np.linalg.norm(batch, axis=1), 1.0, atol=1e-9)
        single = thp_sample(params, rng)
        assert single.shape == (5,)
        assert abs(np.linalg.norm(single) - 1.0) < 1e-9

    def test_low_dim_rejected(self):
        with pytest.raises(DomainError):
            ThpParams(mu=np.array([1.0, 0.0, 0.0]), kappa=1.0)


class TestVmfNormalizer:
    def test_d3_closed_form(self):
        """C(kappa, 3) = 4 pi sinh(kappa) / kappa via the half-order Bessel."""
        for kappa in (0.1, 1.0, 2.0, 10.0):
            expected = math.log(4 * math.pi * math.sinh(kappa) / kappa)
            assert vmf_log_normalizer(kappa, 3) == pytest.approx(expected, rel=1e-10)

    def test_uniform_limit(self):
        for d in range(2, 17):
            assert vmf_log_normalizer(0.0, d) == log_sphere_area(d)
            assert vmf_log_normalizer(1e-8, d) == pytest.approx(
                log_sphere_area(d), abs=1e-8
            )

    def test_domain(self):
        with pytest.raises(DomainError):
            vmf_log_normalizer(-1.0, 3)
        with pytest.raises(DomainError):
            vmf_log_normalizer(1.0, 1)


class TestVmfLogPdf:
    def test_uniform_at_zero_kappa(self):
        rng = make_rng(11)
        d = 6
        params = VmfParams(mu=e_(d), kappa=0.0)
        for _ in range(5):
            x = sample_uniform_sphere(d, rng)
            assert vmf_log_pdf(params, x) == pytest.approx(-log_sphere_area(d), abs=1e-12)

    def test_pole_to_antipode_gap_is_two_kappa(self):
        for kappa in (0.5, 3.0, 40.0):
            params = VmfParams(mu=e_(5), kappa=kappa)
            gap = vmf_log_pdf(params, e_(5)) - vmf_log_pdf(params, -e_(5))
            assert gap == pytest.approx(2.0 * kappa, abs=1e-9)

    def test_equator_value_d3(self):
        params = VmfParams(mu=np.array([0.0, 0.0, 1.0]), kappa=1.0)
        x = np.array([1.0, 0.0, 0.0])
        assert vmf_log_pdf(params, x) == pytest.approx(
            -math.log(4 * math.pi * math.sinh(1.0)), rel=1e-10
        )

    def test_normalizes_by_monte_carlo(self):
        for d in (4, 8):
            params = VmfParams(mu=e_(d), kappa=16.0)
            norm = vmf_log_normalizer(params.kappa, d)
            integral = mc_sphere_integral(
                lambda x: params.kappa * (x @ params.mu) - norm,
                d,
                1_000_000,
                seed=20 + d,
            )
            assert integral == pytest.approx(1.0, abs=0.02)


class TestMeanDirection:
    def test_single_vector(self):
        v = e_(4)
        center, length = mean_direction([v])
        np.testing.assert_allclose(center, v, atol=1e-12)
        assert length == pytest.approx(1.0, abs=1e-12)

    def test_cancellation_raises(self):
        v = e_(4)
        with pytest.raises(DegenerateError):
            mean_direction([v, -v])

    def test_concentrated_samples_recover_center(self):
        # The T-style law is heavy-tailed (resultant ~ 1/(d-2)), so the
        # center estimate needs ~1e5 draws to land within 2 degrees.
        rng = make_rng(12)
        d = 8
        mu = sample_uniform_sphere(d, rng)
        x = thp_sample(ThpParams(mu=mu, kappa=1.0), rng, size=100_000)
        center, length = mean_direction(x)
        angle = math.degrees(math.acos(np.clip(center @ mu, -1, 1)))
        assert angle < 2.0
        assert 0.0 < length <= 1.0

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            mean_direction(np.zeros((0, 4)))
