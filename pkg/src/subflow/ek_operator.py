r"""Erdélyi-Kober fractional integral and its derivative-series approximation.

The operator is

.. math::

    I^{\beta,\gamma}_\delta U(\eta) = \frac{1}{\Gamma(\gamma)}
        \int_0^1 (1-z)^{\gamma-1} z^\beta U(\eta z^{1/\delta})\,dz,

and for smooth ``U`` it expands as
:math:`\sum_k \lambda_k U^{(k)}(\eta)\,\eta^k/k!`.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import mpmath
import numpy as np

from .numerics import (
    DEFAULT_QUADRATURE,
    PoleError,
    QuadratureSpec,
    gamma_fn,
    integrate_jacobi,
    integrate_weighted,
    reciprocal_gamma,
)

_EPS = np.finfo(float).eps


class MissingSupportError(ValueError):
    """A negative-``delta`` operator was applied to a profile without compact support."""


class DerivativeUnavailableError(ValueError):
    """The series approximation needs derivatives the profile does not provide."""


@dataclass(frozen=True)
class EKParams:
    """Parameters ``(beta, gamma, delta)`` of the operator."""

    beta: float
    gamma: float
    delta: float

    def __post_init__(self):
        if not self.beta > -1.0:
            raise ValueError(f"beta must exceed -1, got {self.beta!r}")
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")
        if self.delta == 0.0 or not math.isfinite(self.delta):
            raise ValueError(f"delta must be finite and nonzero, got {self.delta!r}")


@dataclass(frozen=True)
class ProfileFunction:
    """A profile ``U(eta)`` together with optional derivatives and support end.

    ``eval`` must accept numpy arrays.  ``deriv(eta, k)`` returns the k-th
    derivative; at ``support_end`` it returns the left limit.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    deriv: Optional[Callable[[float, int], float]] = None
    support_end: Optional[float] = None

    def __call__(self, eta):
        return self.eval(eta)


def exp_decay() -> ProfileFunction:
    """``U(eta) = exp(-eta)``; every derivative is bounded by 1 on ``eta >= 0``."""
    return ProfileFunction(
        eval=lambda eta: np.exp(-np.asarray(eta, dtype=float)),
        deriv=lambda eta, k: (-1.0) ** k * math.exp(-eta),
    )


def power_profile(power: float, eta_star: float = 1.0) -> ProfileFunction:
    """``U(eta) = (1 - eta/eta_star)^power`` on ``[0, eta_star)``, zero beyond."""

    def ev(eta):
        eta = np.asarray(eta, dtype=float)
        s = np.clip(1.0 - eta / eta_star, 0.0, None)
        return np.where(eta < eta_star, s**power, 0.0)

    def deriv(eta, k):
        if eta > eta_star:
            return 0.0
        # falling factorial power (power - 1) ... (power - k + 1)
        coef = 1.0
        for i in range(k):
            coef *= power - i
        if coef == 0.0:
            return 0.0
        s = 1.0 - eta / eta_star
        if s == 0.0:
            return coef * (-1.0 / eta_star) ** k * (0.0 if power - k > 0 else math.inf)
        return coef * (-1.0 / eta_star) ** k * s ** (power - k)

    return ProfileFunction(eval=ev, deriv=deriv, support_end=float(eta_star))


def sqrt_support() -> ProfileFunction:
    """``U(eta) = sqrt(1 - eta)`` with support ``[0, 1]``."""
    return power_profile(0.5, 1.0)


# ---------------------------------------------------------------------------
# lambda_k
# ---------------------------------------------------------------------------


def _near_pole(x: float) -> bool:
    return x <= 0.0 and abs(x - round(x)) <= 1e-12 * max(1.0, abs(x))


def _lambda_mp(k: int, beta: float, gamma: float, delta: float, dps: int) -> float:
    with mpmath.workdps(dps):
        b, g, d = mpmath.mpf(beta), mpmath.mpf(gamma), mpmath.mpf(delta)
        total = mpmath.mpf(0)
        for j in range(k + 1):
            x = b + j / d + 1
            total += mpmath.binomial(k, j) * (-1) ** (k - j) * mpmath.gamma(x) * mpmath.rgamma(x + g)
        return float(total)


@functools.lru_cache(maxsize=4096)
def _lambda_cached(k: int, beta: float, gamma: float, delta: float) -> float:
    for j in range(k + 1):
        x = beta + j / delta + 1.0
        if _near_pole(x):
            raise PoleError(f"lambda_{k}: Gamma({x!r}) in term j={j} is a pole")

    if k <= 40:
        terms = []
        for j in range(k + 1):
            x = beta + j / delta + 1.0
            terms.append(math.comb(k, j) * (-1.0) ** (k - j) * gamma_fn(x) * reciprocal_gamma(x + gamma))
        total = math.fsum(terms)
        scale = math.fsum(abs(t) for t in terms)
        if math.isfinite(scale) and scale * 64 * _EPS <= 1e-13 * abs(total):
            return total
    else:
        scale = float(2**k)
        total = 0.0
    # the alternating sum cancels catastrophically; redo it with enough digits
    lost = math.log10(max(scale, 1.0)) + k * math.log10(2.0)
    return _lambda_mp(k, beta, gamma, delta, dps=int(30 + lost))


def lambda_coeff(k: int, p: EKParams) -> float:
    r"""Coefficient :math:`\lambda_k` by the finite Gamma-ratio sum.

    .. math::

        \lambda_k = \sum_{j=0}^k \binom{k}{j} (-1)^{k-j}
            \frac{\Gamma(\beta + j/\delta + 1)}{\Gamma(\beta + \gamma + j/\delta + 1)}

    Negative ``delta`` is handled through the analytic continuation of Gamma.
    The sum is evaluated in double precision when its cancellation is mild and
    with ``mpmath`` at raised precision otherwise.

    Raises
    ------
    PoleError
        If a numerator Gamma argument is a non-positive integer.
    """
    if k < 0 or int(k) != k:
        raise ValueError(f"k must be a non-negative integer, got {k!r}")
    return _lambda_cached(int(k), float(p.beta), float(p.gamma), float(p.delta))


def lambda_coeff_integral(k: int, p: EKParams, spec: QuadratureSpec | None = None) -> float:
    r""":math:`\lambda_k` from its integral form (``delta > 0`` only).

    .. math::

        \lambda_k = \frac{(-1)^k}{\Gamma(\gamma)} \int_0^1 (1-s)^{\gamma-1} s^\beta
            (1 - s^{1/\delta})^k\,ds
    """
    if not p.delta > 0:
        raise ValueError("the integral form of lambda_k needs delta > 0")
    if spec is None:
        spec = QuadratureSpec.adaptive(1e-13)
    inv = 1.0 / p.delta
    val = integrate_jacobi(lambda z: (1.0 - z**inv) ** k, p.beta, p.gamma, spec)
    return (-1.0) ** k * reciprocal_gamma(p.gamma) * val


def lambda_asymptotic(k: int, p: EKParams) -> float:
    r"""Large-``k`` form :math:`(-1)^k \delta\,\Gamma(\delta(\beta+1)) / (\Gamma(\gamma) k^{\delta(\beta+1)})`."""
    if k < 1:
        raise ValueError(f"asymptotic form needs k >= 1, got {k!r}")
    e = p.delta * (p.beta + 1.0)
    return (-1.0) ** k * gamma_fn(e) * p.delta * reciprocal_gamma(p.gamma) / k**e


@dataclass(frozen=True)
class GammaLimitReport:
    gamma: float
    lambda0_error: float
    max_higher: float
    passed: bool


def lambda_gamma_limit_check(
    p: EKParams, k_max: int, eps: float, tol0: float = 1e-4, tolk: float = 1e-3
) -> GammaLimitReport:
    """Evaluate ``lambda_k`` at ``gamma = eps``: expect ``lambda_0 -> 1`` and the rest ``-> 0``."""
    if not p.delta > 0:
        raise ValueError("the small-gamma limit is stated for delta > 0")
    q = EKParams(p.beta, eps, p.delta)
    err0 = abs(lambda_coeff(0, q) - 1.0)
    higher = max((abs(lambda_coeff(k, q)) for k in range(1, k_max + 1)), default=0.0)
    return GammaLimitReport(eps, err0, higher, err0 < tol0 and higher < tolk)


# ---------------------------------------------------------------------------
# applying the operator
# ---------------------------------------------------------------------------


def ek_apply_direct(U: ProfileFunction, eta: float, p: EKParams, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Evaluate the operator by quadrature.

    For ``delta < 0`` the argument ``eta z^(1/delta)`` grows as ``z -> 0``, so
    the profile must have compact support; the integral then starts at
    ``z0 = (eta/eta_star)^(-delta)`` and is done adaptively.  Truncated ranges
    always use the adaptive rule, whatever ``spec`` says.
    """
    eta = float(eta)
    if eta == 0.0:
        return lambda_coeff(0, p) * float(U.eval(0.0))
    inv = 1.0 / p.delta

    def f(z):
        return U.eval(eta * z**inv)

    s = U.support_end
    if p.delta < 0:
        if s is None:
            raise MissingSupportError("delta < 0 requires a profile with support_end set")
        if eta >= s:
            return 0.0
        z0 = (eta / s) ** (-p.delta)
        return reciprocal_gamma(p.gamma) * integrate_weighted(f, p.beta, p.gamma, z0, 1.0, spec.rel_tol)

    if s is not None and eta > s:
        z1 = (s / eta) ** p.delta
        return reciprocal_gamma(p.gamma) * integrate_weighted(f, p.beta, p.gamma, 0.0, z1, spec.rel_tol)
    return reciprocal_gamma(p.gamma) * integrate_jacobi(f, p.beta, p.gamma, spec)


def ek_apply_series(U: ProfileFunction, eta: float, p: EKParams, n_terms: int) -> float:
    """Truncated series ``sum_{k<n_terms} lambda_k U^(k)(eta) eta^k / k!``."""
    if n_terms < 1:
        raise ValueError(f"n_terms must be positive, got {n_terms!r}")
    if n_terms > 1 and U.deriv is None:
        raise DerivativeUnavailableError("profile provides no derivatives")
    total = lambda_coeff(0, p) * float(U.eval(eta))
    for k in range(1, n_terms):
        total += lambda_coeff(k, p) * U.deriv(eta, k) * eta**k / math.factorial(k)
    return total


def ek_series_error_bound(U_norm: float, eta: float, p: EKParams, N: int) -> float:
    """Bound ``||U^(N)|| |lambda_N| |eta|^N / N!`` on the N-term truncation error."""
    if not p.delta > 0:
        raise ValueError("the series error bound is stated for delta > 0")
    return U_norm * abs(lambda_coeff(N, p)) * abs(eta) ** N / math.factorial(N)


def ek_one_term_error_bound(U: ProfileFunction, eta: float, p: EKParams, samples: int = 1024) -> float:
    """``lambda_0 * sup_z |U(eta z^(1/delta)) - U(eta)|`` with the sup taken on a grid."""
    eta = float(eta)
    if eta == 0.0:
        return 0.0
    z = np.linspace(0.0, 1.0, samples + 1)
    with np.errstate(divide="ignore"):
        arg = eta * z ** (1.0 / p.delta)
    if p.delta < 0:
        # z = 0 maps to infinity, where a compactly supported profile vanishes
        arg[0] = np.inf
    vals = np.asarray(U.eval(arg), dtype=float)
    if p.delta < 0 and U.support_end is None:
        vals = vals[1:]
    dev = np.max(np.abs(vals - float(U.eval(eta))))
    return lambda_coeff(0, p) * float(dev)
