import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subflow.numerics import (
    DivergenceError,
    PoleError,
    QuadratureError,
    QuadratureKind,
    QuadratureSpec,
    SingularSystemError,
    beta_fn,
    gamma_fn,
    gauss_jacobi_rule,
    gauss_legendre_rule,
    hyp2f1,
    integrate_jacobi,
    integrate_weighted,
    minimize_derivative_free,
    reciprocal_gamma,
    solve_tridiagonal,
)


class TestGamma:
    def test_known_values(self):
        assert gamma_fn(1.0) == pytest.approx(1.0, rel=1e-14)
        assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-13)
        assert gamma_fn(4.0) == pytest.approx(6.0, rel=1e-13)

    @pytest.mark.parametrize("x", [0.0, -1.0, -7.0])
    def test_poles(self, x):
        with pytest.raises(PoleError):
            gamma_fn(x)

    def test_against_math_gamma(self):
        xs = np.linspace(-19.95, 50.0, 3001)
        xs = xs[np.abs(xs - np.round(xs)) > 1e-3]
        rel = max(abs(gamma_fn(x) / math.gamma(x) - 1.0) for x in xs)
        assert rel < 1e-12

    @settings(max_examples=1000, deadline=None)
    @given(st.floats(0.1, 20.0))
    def test_recurrence(self, x):
        assert gamma_fn(x + 1.0) == pytest.approx(x * gamma_fn(x), rel=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(-15.0, 30.0).filter(lambda x: abs(x - round(x)) > 1e-6))
    def test_reciprocal_inverts(self, x):
        assert reciprocal_gamma(x) * gamma_fn(x) == pytest.approx(1.0, rel=1e-12)

    def test_reciprocal_zeros(self):
        assert reciprocal_gamma(0.0) == 0.0
        assert reciprocal_gamma(-1.0) == 0.0
        assert reciprocal_gamma(1.0) == pytest.approx(1.0)

    def test_reciprocal_continuous_through_pole(self):
        # 1/Gamma(x) ~ (-1)^n n! (x + n) near x = -n
        for n in range(4):
            h = 1e-9
            assert reciprocal_gamma(-n + h) == pytest.approx((-1) ** n * math.factorial(n) * h, rel=1e-6)


class TestQuadrature:
    def test_spec_validation(self):
        with pytest.raises(ValueError):
            QuadratureSpec(order=1)
        with pytest.raises(ValueError):
            QuadratureSpec(rel_tol=0.0)
        assert QuadratureSpec.adaptive(1e-10).kind is QuadratureKind.ADAPTIVE

    def test_rule_mass(self):
        x, w = gauss_jacobi_rule(32, 0.3, 0.7)
        assert np.all((x > 0) & (x < 1)) and np.all(w > 0)
        assert w.sum() == pytest.approx(beta_fn(1.3, 0.7), rel=1e-13)
        with pytest.raises(ValueError):
            x[0] = 0.5

    def test_rule_exact_on_polynomials(self):
        x, w = gauss_jacobi_rule(8, 1.5, 0.4)
        for k in range(16):
            assert np.dot(w, x**k) == pytest.approx(beta_fn(2.5 + k, 0.4), rel=1e-12)

    def test_examples(self):
        one = lambda z: np.ones_like(z)
        assert integrate_jacobi(one, 0.0, 0.5) == pytest.approx(2.0, rel=1e-13)
        assert integrate_jacobi(one, 1.0, 0.1) == pytest.approx(math.gamma(2) * math.gamma(0.1) / math.gamma(2.1), rel=1e-12)
        ref = float(mpmath.beta(2, 0.3))
        assert integrate_jacobi(lambda z: z, 0.0, 0.3) == pytest.approx(ref, rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-0.9, 3.0), st.floats(0.05, 2.0))
    def test_beta_mass_both_kinds(self, b, g):
        exact = gamma_fn(b + 1) * gamma_fn(g) / gamma_fn(b + g + 1)
        one = lambda z: np.ones_like(np.asarray(z, dtype=float))
        assert integrate_jacobi(one, b, g) == pytest.approx(exact, rel=1e-9)
        assert integrate_jacobi(one, b, g, QuadratureSpec.adaptive(1e-11)) == pytest.approx(exact, rel=1e-9)

    def test_adaptive_subinterval(self):
        # weight (1-z)^(g-1) z^b on [0.3, 1] for f = 1, against mpmath
        b, g = 0.5, 0.2
        # w = (1-z)^g removes the endpoint singularity for the oracle
        with mpmath.workdps(30):
            ref = float(mpmath.quad(lambda w: (1 - w ** (1 / g)) ** b / g, [0, mpmath.mpf(0.7) ** g]))
        assert integrate_weighted(lambda z: 1.0, b, g, 0.3, 1.0) == pytest.approx(ref, rel=1e-10)

    def test_tolerance_error_reports_estimate(self):
        wild = lambda z: math.sin(1.0 / (z + 1e-9)) * 1e3
        with pytest.raises(QuadratureError) as info:
            integrate_weighted(wild, 0.0, 1.0, rel_tol=1e-15)
        assert math.isfinite(info.value.estimate)

    def test_legendre(self):
        x, w = gauss_legendre_rule(10)
        assert w.sum() == pytest.approx(1.0)
        assert np.dot(w, x**5) == pytest.approx(1 / 6)


class TestHyp2F1:
    def test_examples(self):
        assert hyp2f1(0.3, 0.7, 1.1, 0.0) == 1.0
        assert hyp2f1(1, 1, 2, 0.5) == pytest.approx(-math.log(0.5) / 0.5, rel=1e-13)

    def test_moisture_argument_against_integral(self):
        m, z = 2.0, 0.1
        a, b, c = 1 + 1 / m, -1 / m, 2 + 1 / m
        # Euler integral: B(a, c-a) F = int_0^1 t^(a-1) (1-t)^(c-a-1) (1-zt)^(-b) dt
        ref = float(mpmath.quad(lambda t: t ** (a - 1) * (1 - z * t) ** (-b), [0, 1])) * (c - 1)
        assert hyp2f1(a, b, c, z) == pytest.approx(ref, rel=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-0.9, 0.9))
    def test_log_identity(self, z):
        expected = 1.0 if abs(z) < 1e-12 else -math.log1p(-z) / z
        assert hyp2f1(1, 1, 2, z) == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("z", [-4.0, -1.0185, -0.7, 0.3, 0.95])
    def test_against_mpmath(self, z):
        args = (1.5, -0.5, 2.5)
        assert hyp2f1(*args, z) == pytest.approx(float(mpmath.hyp2f1(*args, z)), rel=1e-12)

    def test_divergence(self):
        with pytest.raises(DivergenceError):
            hyp2f1(1, 1, 2, 1.0)
        with pytest.raises(PoleError):
            hyp2f1(1, 1, -2.0, 0.1)


class TestTridiagonal:
    def test_identity(self):
        r = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(solve_tridiagonal([0, 0], [1, 1, 1], [0, 0], r), r)

    def test_two_by_two(self):
        np.testing.assert_allclose(solve_tridiagonal([-1], [2, 2], [-1], [1, 1]), [1, 1], rtol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 40))
    def test_matches_dense(self, seed, n):
        rng = np.random.default_rng(seed)
        lo, up = rng.uniform(-1, 1, n - 1), rng.uniform(-1, 1, n - 1)
        d = 2.5 + rng.uniform(0, 1, n)
        rhs = rng.normal(size=n)
        A = np.diag(d) + np.diag(lo, -1) + np.diag(up, 1)
        np.testing.assert_allclose(solve_tridiagonal(lo, d, up, rhs), np.linalg.solve(A, rhs), rtol=1e-12, atol=1e-12)

    def test_singular(self):
        with pytest.raises(SingularSystemError):
            solve_tridiagonal([0.0], [0.0, 1.0], [0.0], [1.0, 1.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            solve_tridiagonal([1.0, 1.0], [1.0, 1.0], [1.0], [1.0, 1.0])


class TestNelderMead:
    def test_bowl(self):
        res = minimize_derivative_free(lambda p: (p[0] - 1) ** 2 + (p[1] - 2) ** 2, [0.0, 0.0], tol=1e-10)
        assert res.converged
        np.testing.assert_allclose(res.x, [1, 2], atol=1e-8)

    def test_rosenbrock(self):
        rosen = lambda p: 100 * (p[1] - p[0] ** 2) ** 2 + (1 - p[0]) ** 2
        x, fx = minimize_derivative_free(rosen, [-1.2, 1.0], tol=1e-10)
        np.testing.assert_allclose(x, [1, 1], atol=1e-4)
        assert fx < 1e-8

    def test_abs(self):
        res = minimize_derivative_free(lambda p: abs(p[0]), [3.0], tol=1e-10)
        assert abs(res.x[0]) < 1e-8

    def test_iteration_cap_is_soft(self):
        res = minimize_derivative_free(lambda p: (p[0] - 5) ** 2 + p[1] ** 2, [0.0, 0.0], max_iter=3)
        assert not res.converged and res.iterations == 3 and res.reason
