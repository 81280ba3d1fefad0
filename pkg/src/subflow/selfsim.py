"""Approximate self-similar solutions of the time-fractional porous medium equation.

The nondimensional problem ``D_t^alpha u = (u^m u_x)_x`` on ``x > 0`` with zero
initial data admits solutions ``u = t^a U(x / t^b)``.  Replacing the
Erdélyi-Kober operator in the profile equation by its first series term gives

    (U^m U')' = A U - B eta U',

and the substitution ``U = (m eta*^2 y(z))^(1/m)``, ``z = 1 - eta/eta*`` turns
the free-boundary problem into the initial value problem

    y'^2/m + y y'' = A y + (B/m)(1 - z) y',   y(0) = 0,  y'(0) = B,

which is solved here by its Taylor series at ``z = 0``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .numerics import gamma_fn, hyp2f1, integrate_jacobi, reciprocal_gamma

MAX_TERMS = 24


class BoundaryCondition(str, enum.Enum):
    """``CONCENTRATION``: u(0, t) = 1.  ``FLUX``: -u^m u_x (0, t) = 1."""

    CONCENTRATION = "concentration"
    FLUX = "flux"


class NonPositiveProfileError(ValueError):
    """The truncated series ``y`` is not positive on (0, 1]."""


class NonMonotoneProfileError(NonPositiveProfileError):
    """The truncated series has ``y' <= 0`` somewhere, so ``U`` is not decreasing."""


class DegeneratePerturbationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SimilarityProblem:
    alpha: float
    m: float
    bc: BoundaryCondition = BoundaryCondition.CONCENTRATION

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if not self.m > 0.0:
            raise ValueError(f"m must be positive, got {self.m!r}")
        object.__setattr__(self, "bc", BoundaryCondition(self.bc))


@dataclass(frozen=True)
class SimilarityExponents:
    """Amplitude exponent ``a`` and similarity exponent ``b``: ``u = t^a U(x/t^b)``."""

    a: float
    b: float


@dataclass(frozen=True)
class ReducedODECoefficients:
    A: float
    B: float


def similarity_exponents(p: SimilarityProblem) -> SimilarityExponents:
    if p.bc is BoundaryCondition.CONCENTRATION:
        return SimilarityExponents(0.0, p.alpha / 2.0)
    return SimilarityExponents(p.alpha / (p.m + 2.0), p.alpha * (p.m + 1.0) / (p.m + 2.0))


def ode_coefficients(p: SimilarityProblem) -> ReducedODECoefficients:
    """Coefficients ``A``, ``B`` of the one-term (lambda_0) reduced equation.

    With ``lambda_0 = Gamma(a+1)/Gamma(a+2-alpha)`` these are
    ``A = (1+a-alpha) lambda_0`` and ``B = b lambda_0``; the closed forms below
    use the reciprocal Gamma so that ``A`` vanishes continuously at ``alpha = 1``.
    """
    al, m = p.alpha, p.m
    if p.bc is BoundaryCondition.CONCENTRATION:
        return ReducedODECoefficients(reciprocal_gamma(1.0 - al), al / 2.0 * reciprocal_gamma(2.0 - al))
    s = al / (2.0 + m)
    g = gamma_fn(1.0 + s)
    A = g * reciprocal_gamma(1.0 - al + s)
    B = al * (m + 1.0) / (m + 2.0) * g * reciprocal_gamma(2.0 - al + s)
    return ReducedODECoefficients(A, B)


def taylor_coefficients(abc: ReducedODECoefficients, m: float, N: int) -> np.ndarray:
    """Taylor coefficients ``a_0 .. a_N`` of ``y`` at ``z = 0``.

    Matching the ``z^n`` coefficient of the reduced equation and isolating
    ``a_{n+1}`` gives, for ``n >= 1``,

        B (n+1)(n + 1/m) a_{n+1} = (A - B n/m) a_n
            - (1/m) sum_{i=1}^{n-1} (i+1)(n-i+1) a_{i+1} a_{n-i+1}
            - sum_{i=2}^{n} (n-i+2)(n-i+1) a_i a_{n-i+2}
    """
    A, B = abc.A, abc.B
    if B == 0.0:
        raise ZeroDivisionError("B = 0: the recurrence is undefined")
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N!r}")
    a = np.zeros(N + 1)
    a[1] = B
    for n in range(1, N):
        acc = (A - B * n / m) * a[n]
        for i in range(1, n):
            acc -= (i + 1) * (n - i + 1) * a[i + 1] * a[n - i + 1] / m
        for i in range(2, n + 1):
            acc -= (n - i + 2) * (n - i + 1) * a[i] * a[n - i + 2]
        a[n + 1] = acc / (B * (n + 1) * (n + 1.0 / m))
    return a


def _horner(c: np.ndarray, z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    for ck in c[::-1]:
        out = out * z + ck
    return out


def wetting_front(coeffs: np.ndarray, problem: SimilarityProblem) -> float:
    """Front position ``eta*`` from ``y(1) = sum a_k`` (and ``y'(1)`` for flux)."""
    m = problem.m
    y1 = float(np.sum(coeffs))
    if y1 <= 0.0:
        raise NonPositiveProfileError(f"y(1) = {y1!r} must be positive")
    if problem.bc is BoundaryCondition.CONCENTRATION:
        return 1.0 / math.sqrt(m * y1)
    dy1 = float(np.sum(np.arange(len(coeffs)) * coeffs))
    if dy1 <= 0.0:
        raise NonPositiveProfileError(f"y'(1) = {dy1!r} must be positive")
    return (m ** (1.0 / m) * y1 ** (1.0 / m) * dy1) ** (-m / (m + 2.0))


@dataclass(frozen=True)
class SeriesSolution:
    coeffs: np.ndarray
    eta_star: float
    problem: SimilarityProblem
    exponents: SimilarityExponents
    abc: ReducedODECoefficients

    @property
    def n_terms(self) -> int:
        return len(self.coeffs) - 1

    def y(self, z):
        return _horner(self.coeffs, z)

    def dy(self, z):
        k = np.arange(1, len(self.coeffs))
        return _horner(k * self.coeffs[1:], z)

    def truncated(self, n_terms: int) -> "SeriesSolution":
        """The same problem keeping only ``a_0 .. a_n`` (front recomputed)."""
        return _build(self.problem, self.abc, self.coeffs[: n_terms + 1].copy())

    def __call__(self, eta):
        return profile(self, eta)


def _build(problem, abc, coeffs) -> SeriesSolution:
    coeffs.setflags(write=False)
    z = np.linspace(0.0, 1.0, 513)[1:]
    if np.any(_horner(coeffs, z) <= 0.0):
        raise NonPositiveProfileError(
            f"truncated series is not positive on (0, 1] for alpha={problem.alpha}, m={problem.m}, N={len(coeffs) - 1}"
        )
    zz = np.linspace(0.0, 1.0, 513)
    if np.any(_horner(np.arange(1, len(coeffs)) * coeffs[1:], zz) <= 0.0):
        raise NonMonotoneProfileError(
            f"truncated series gives a non-monotone profile for alpha={problem.alpha}, m={problem.m}, N={len(coeffs) - 1}"
        )
    eta_star = wetting_front(coeffs, problem)
    return SeriesSolution(coeffs, eta_star, problem, similarity_exponents(problem), abc)


def solve_similarity(problem: SimilarityProblem, n_terms: int = 3) -> SeriesSolution:
    """Series solution keeping ``n_terms`` Taylor terms (``U_3`` by default)."""
    if not 1 <= n_terms <= MAX_TERMS:
        raise ValueError(f"n_terms must lie in [1, {MAX_TERMS}], got {n_terms!r}")
    abc = ode_coefficients(problem)
    return _build(problem, abc, taylor_coefficients(abc, problem.m, n_terms))


def eval_y(sol: SeriesSolution, z):
    return sol.y(z)


def ode_residual(coeffs: np.ndarray, abc: ReducedODECoefficients, m: float, z):
    """Residual ``y'^2/m + y y'' - A y - (B/m)(1-z) y'`` of a truncated series."""
    c = np.asarray(coeffs, dtype=float)
    k = np.arange(len(c))
    d1 = (k * c)[1:]
    d2 = (k * (k - 1) * c)[2:]
    y, yp, ypp = _horner(c, z), _horner(d1, z), _horner(d2, z)
    return yp**2 / m + y * ypp - abc.A * y - abc.B / m * (1.0 - np.asarray(z)) * yp


def perturbation_y(abc: ReducedODECoefficients, m: float, z):
    """Large-``m`` approximation ``y_0 + y_1/m`` of the reduced solution.

    ``y_0 = A z^2/2 + B z``; ``y_1`` is the closed-form first correction.  It
    contains ``1/A``, so with ``A = 0`` only ``y_0`` is returned (with a warning).
    """
    A, B = abc.A, abc.B
    z = np.asarray(z, dtype=float)
    y0 = A * z**2 / 2.0 + B * z
    if A == 0.0:
        warnings.warn("A = 0: first-order correction undefined, returning y0", DegeneratePerturbationWarning, stacklevel=2)
        return y0
    r = 2.0 * B / A
    y1 = -2.0 * (A + B) * (z**2 / 2.0 - (B / A) * ((z + r) * (np.log1p(z / r) - 1.0) + r))
    return y0 + y1 / m


def profile(sol: SeriesSolution, eta):
    """``U(eta) = (m eta*^2 y(1 - eta/eta*))^(1/m)`` inside the support, 0 outside."""
    eta = np.asarray(eta, dtype=float)
    m, es = sol.problem.m, sol.eta_star
    z = np.clip(1.0 - eta / es, 0.0, 1.0)
    inner = np.clip(m * es**2 * sol.y(z), 0.0, None)
    out = np.where(eta < es, inner ** (1.0 / m), 0.0)
    return out if out.ndim else float(out)


def profile_derivative(sol: SeriesSolution, eta):
    """``U'(eta)`` inside the support (left limit at the front), 0 beyond."""
    eta = np.asarray(eta, dtype=float)
    m, es = sol.problem.m, sol.eta_star
    z = np.clip(1.0 - eta / es, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        val = -(es ** (2.0 / m - 1.0)) * m ** (1.0 / m - 1.0) * sol.y(z) ** (1.0 / m - 1.0) * sol.dy(z)
    out = np.where(eta <= es, val, 0.0)
    return out if out.ndim else float(out)


def profile_derivative_at_zero(sol: SeriesSolution) -> float:
    """``U'(0) = -eta*^(2/m-1) (m sum a_k)^(1/m-1) sum k a_k``."""
    m, es = sol.problem.m, sol.eta_star
    s = float(np.sum(sol.coeffs))
    ks = float(np.sum(np.arange(len(sol.coeffs)) * sol.coeffs))
    return -(es ** (2.0 / m - 1.0)) * (m * s) ** (1.0 / m - 1.0) * ks


def cumulative_moisture(sol: SeriesSolution, t, n_terms: Optional[int] = None):
    """Total moisture ``I(t) = t^(a+b) * integral of U``.

    ``n_terms=1`` and ``n_terms=2`` give the closed forms for ``U_1`` and ``U_2``
    (each with its own front position); ``None`` integrates the full series of
    ``sol`` with a Gauss-Jacobi rule whose weight ``y^(1/m)`` carries the
    endpoint behaviour of the integrand.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    m = sol.problem.m
    tf = t ** (sol.exponents.a + sol.exponents.b)
    if n_terms in (1, 2):
        s = sol.truncated(n_terms) if sol.n_terms != n_terms else sol
        es, a1 = s.eta_star, s.coeffs[1]
        base = m * es / (1.0 + m) * (m * es**2 * a1) ** (1.0 / m)
        if n_terms == 2:
            base *= hyp2f1(1.0 + 1.0 / m, -1.0 / m, 2.0 + 1.0 / m, -s.coeffs[2] / a1)
        return tf * base
    if n_terms is not None:
        raise ValueError(f"n_terms must be 1, 2 or None, got {n_terms!r}")
    es = sol.eta_star
    # sum_{k>=1} a_k y^k = y * q(y) with q > 0 smooth on [0, 1]
    q = sol.coeffs[1:]
    integral = integrate_jacobi(lambda y: _horner(q, y) ** (1.0 / m), 1.0 / m, 1.0)
    return tf * es * (m * es**2) ** (1.0 / m) * integral


@dataclass(frozen=True)
class Scaling:
    """Dimensional scales: length ``L``, diffusivity constant ``D0`` in
    ``D(u) = D0 u^m`` (units length^2/time^alpha), and the boundary amplitude
    (concentration ``C`` or flux ``Q``)."""

    D0: float
    amplitude: float = 1.0
    L: float = 1.0

    def __post_init__(self):
        for name in ("D0", "amplitude", "L"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")


def dimensional_scales(sol: SeriesSolution, scaling: Scaling) -> tuple[float, float]:
    """Return ``(u_scale, T)`` mapping nondimensional to dimensional quantities.

    Concentration: ``u_scale = C``.  Flux: ``u_scale = (L Q / D0)^(1/(m+1))`` so
    that ``-D0 u^m u_x = Q`` at ``x = 0``.  In both cases
    ``T = (L^2 / (D0 u_scale^m))^(1/alpha)``.
    """
    p = sol.problem
    if p.bc is BoundaryCondition.CONCENTRATION:
        u_scale = scaling.amplitude
    else:
        u_scale = (scaling.L * scaling.amplitude / scaling.D0) ** (1.0 / (p.m + 1.0))
    T = (scaling.L**2 / (scaling.D0 * u_scale**p.m)) ** (1.0 / p.alpha)
    return u_scale, T


def dimensionalize(sol: SeriesSolution, scaling: Scaling) -> Callable:
    """Dimensional field ``u(x, t)`` built from a nondimensional profile."""
    u_scale, T = dimensional_scales(sol, scaling)
    a, b = sol.exponents.a, sol.exponents.b
    L = scaling.L

    def u(x, t):
        x = np.asarray(x, dtype=float)
        ts = np.asarray(t, dtype=float) / T
        return u_scale * ts**a * profile(sol, (x / L) / ts**b)

    return u
