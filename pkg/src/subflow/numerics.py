"""Special functions and small numerical kernels shared by the other modules.

Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.linalg import lapack


class PoleError(ValueError):
    """Raised when the Gamma function is evaluated at one of its poles."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(f"{message} (estimate={estimate!r}, abs. error={error!r})")
        self.estimate = estimate
        self.error = error


class DivergenceError(ValueError):
    """Raised when a power series is evaluated outside its disc of convergence."""


class SingularSystemError(np.linalg.LinAlgError):
    """Raised when a tridiagonal solve meets a zero pivot."""


# ---------------------------------------------------------------------------
# Gamma function
# ---------------------------------------------------------------------------

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _is_pole(x: float) -> bool:
    return x <= 0.0 and x == math.floor(x)


def _sinpi(x: float) -> float:
    # sin(pi*x) without the argument-reduction error of math.sin(math.pi*x)
    n = round(x)
    s = math.sin(math.pi * (x - n))
    return -s if n % 2 else s


def _gamma_lanczos(x: float) -> float:
    # valid for x >= 0.5
    x -= 1.0
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    # split the power so that t**(x+0.5) does not overflow before exp(-t) damps it
    half = t ** (0.5 * (x + 0.5))
    return _SQRT_2PI * half * (half * math.exp(-t)) * acc


def gamma_fn(x: float) -> float:
    """Gamma function of a real argument.

    Lanczos approximation (g=7, nine terms) on ``x >= 0.5`` and the reflection
    formula below that.  Relative accuracy is about 1e-15 on moderate arguments.

    Raises
    ------
    PoleError
        If ``x`` is zero or a negative integer.
    """
    x = float(x)
    if _is_pole(x):
        raise PoleError(f"Gamma has a pole at x={x!r}")
    if x < 0.5:
        return math.pi / (_sinpi(x) * _gamma_lanczos(1.0 - x))
    if x > 171.7:
        return math.inf
    return _gamma_lanczos(x)


def reciprocal_gamma(x: float) -> float:
    """``1/Gamma(x)``, extended to the entire function (zero at the poles)."""
    x = float(x)
    if _is_pole(x):
        return 0.0
    if x < 0.5:
        return _sinpi(x) * _gamma_lanczos(1.0 - x) / math.pi
    if x > 171.7:
        return 0.0
    return 1.0 / _gamma_lanczos(x)


def beta_fn(a: float, b: float) -> float:
    """Euler Beta function ``B(a, b) = Gamma(a) Gamma(b) / Gamma(a + b)``."""
    return gamma_fn(a) * gamma_fn(b) * reciprocal_gamma(a + b)


# ---------------------------------------------------------------------------
# Quadrature with the weight (1 - z)^(gamma - 1) z^beta on [0, 1]
# ---------------------------------------------------------------------------


class QuadratureKind(enum.Enum):
    JACOBI = "jacobi-weighted"
    ADAPTIVE = "plain-adaptive"


@dataclass(frozen=True)
class QuadratureSpec:
    """How to evaluate a Jacobi-weighted integral.

    ``order`` is the number of Gauss-Jacobi nodes, ``rel_tol`` the target of the
    adaptive kind.
    """

    order: int = 64
    kind: QuadratureKind = QuadratureKind.JACOBI
    rel_tol: float = 1e-12

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 2:
            raise ValueError(f"quadrature order must be an integer >= 2, got {self.order!r}")
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol!r}")
        if not isinstance(self.kind, QuadratureKind):
            object.__setattr__(self, "kind", QuadratureKind(self.kind))

    @classmethod
    def adaptive(cls, rel_tol: float = 1e-12) -> "QuadratureSpec":
        return cls(kind=QuadratureKind.ADAPTIVE, rel_tol=rel_tol)


DEFAULT_QUADRATURE = QuadratureSpec()


@functools.lru_cache(maxsize=256)
def gauss_jacobi_rule(order: int, beta: float, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    r"""Nodes and weights for :math:`\int_0^1 (1-z)^{\gamma-1} z^\beta f(z)\,dz`.

    Golub-Welsch: the nodes are the eigenvalues of the symmetric Jacobi matrix
    of the monic Jacobi polynomials :math:`P^{(\gamma-1,\beta)}` on [-1, 1]; the
    weights come from the first components of the eigenvectors.  The rule is
    mapped to [0, 1] with total mass ``B(beta + 1, gamma)``.
    """
    if beta <= -1.0 or gamma <= 0.0:
        raise ValueError(f"need beta > -1 and gamma > 0, got beta={beta!r}, gamma={gamma!r}")
    a, b = gamma - 1.0, beta
    n = np.arange(1, order, dtype=float)
    s = 2.0 * n + a + b

    diag = np.empty(order)
    diag[0] = (b - a) / (a + b + 2.0)
    diag[1:] = (b * b - a * a) / (s * (s + 2.0))

    off2 = 4.0 * n * (n + a) * (n + b) * (n + a + b) / (s * s * (s + 1.0) * (s - 1.0))
    # n = 1 separately: the general expression is 0/0 when a + b = -1
    off2[0] = 4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + a + b) ** 2 * (3.0 + a + b))

    x, vecs = np.linalg.eigh(np.diag(diag) + np.diag(np.sqrt(off2), 1) + np.diag(np.sqrt(off2), -1))
    mass = beta_fn(beta + 1.0, gamma)
    weights = mass * vecs[0, :] ** 2
    nodes = 0.5 * (1.0 + x)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _quad(fun: Callable[[float], float], lo: float, hi: float, rel_tol: float) -> tuple[float, float]:
    if hi <= lo:
        return 0.0, 0.0
    # full_output silences QUADPACK warnings; the returned error estimate is
    # what gets checked (a roundoff flag alone is not a failure)
    # QUADPACK refuses epsrel below 50 eps; the caller still checks rel_tol itself
    eps_rel = max(rel_tol, 50.0 * np.finfo(float).eps)
    value, err, *_ = integrate.quad(fun, lo, hi, epsabs=0.0, epsrel=eps_rel, limit=400, full_output=1)
    return value, err


def integrate_weighted(
    f: Callable[[float], float],
    beta: float,
    gamma: float,
    lo: float = 0.0,
    hi: float = 1.0,
    rel_tol: float = 1e-12,
) -> float:
    r"""Adaptive evaluation of :math:`\int_{lo}^{hi} (1-z)^{\gamma-1} z^\beta f(z)\,dz`.

    The interval is split at its midpoint.  Near ``z = 0`` the substitution
    ``u = z^(beta+1)`` absorbs the power weight and near ``z = 1`` the
    substitution ``w = (1-z)^gamma`` absorbs the endpoint singularity, so the
    adaptive Gauss-Kronrod rule only ever sees bounded integrands.

    Raises
    ------
    QuadratureError
        If the achieved error estimate exceeds ``rel_tol`` relative to the result.
    """
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError(f"integration range [{lo}, {hi}] not inside [0, 1]")
    if hi == lo:
        return 0.0
    c = 0.5 * (lo + hi)
    bp1 = beta + 1.0

    if lo == 0.0:
        def left(u):
            z = u ** (1.0 / bp1)
            return (1.0 - z) ** (gamma - 1.0) * float(f(z)) / bp1

        v1, e1 = _quad(left, 0.0, c**bp1, rel_tol)
    else:
        def left(z):
            return (1.0 - z) ** (gamma - 1.0) * z**beta * float(f(z))

        v1, e1 = _quad(left, lo, c, rel_tol)

    if hi == 1.0:
        def right(w):
            z = 1.0 - w ** (1.0 / gamma)
            return z**beta * float(f(z)) / gamma

        v2, e2 = _quad(right, 0.0, (1.0 - c) ** gamma, rel_tol)
    else:
        def right(z):
            return (1.0 - z) ** (gamma - 1.0) * z**beta * float(f(z))

        v2, e2 = _quad(right, c, hi, rel_tol)

    value, err = v1 + v2, e1 + e2
    # a floor keeps integrals that vanish identically from failing
    if err > max(10.0 * rel_tol * abs(value), 1e-300) and err > 1e-14 * (abs(v1) + abs(v2)):
        raise QuadratureError("adaptive Jacobi-weighted quadrature did not converge", value, err)
    return value


def integrate_jacobi(
    f: Callable,
    beta: float,
    gamma: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    r"""Weighted integral :math:`\int_0^1 (1-z)^{\gamma-1} z^\beta f(z)\,dz`.

    With the Jacobi kind ``f`` is called once on the array of Gauss-Jacobi nodes
    and must be vectorised; the adaptive kind calls it on scalars.
    """
    if beta <= -1.0:
        raise ValueError(f"beta must exceed -1, got {beta!r}")
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    if spec.kind is QuadratureKind.JACOBI:
        nodes, weights = gauss_jacobi_rule(int(spec.order), float(beta), float(gamma))
        values = np.broadcast_to(np.asarray(f(nodes), dtype=float), nodes.shape)
        return float(weights @ values)
    return integrate_weighted(f, beta, gamma, rel_tol=spec.rel_tol)


@functools.lru_cache(maxsize=64)
def gauss_legendre_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


# ---------------------------------------------------------------------------
# Gauss hypergeometric function
# ---------------------------------------------------------------------------


def _hyp2f1_series(a, b, c, z, rel_tol, max_terms):
    term = 1.0
    total = 1.0
    for n in range(max_terms):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        total += term
        if abs(term) <= rel_tol * abs(total):
            return total
    raise DivergenceError(f"2F1 series did not converge in {max_terms} terms at z={z!r}")


def hyp2f1(a: float, b: float, c: float, z: float, rel_tol: float = 1e-14, max_terms: int = 100_000) -> float:
    """Gauss hypergeometric function for real ``z < 1``.

    Power series on ``-0.5 <= z < 1``; for ``z < -0.5`` the Pfaff transformation
    ``F(a,b;c;z) = (1-z)^(-b) F(c-a, b; c; z/(z-1))`` maps the argument into
    ``(1/3, 1)`` where the series converges.
    """
    if _is_pole(c):
        raise PoleError(f"2F1 undefined for c={c!r}")
    if z >= 1.0:
        raise DivergenceError(f"2F1 series diverges for z={z!r} >= 1")
    if z < -0.5:
        return (1.0 - z) ** (-b) * _hyp2f1_series(c - a, b, c, z / (z - 1.0), rel_tol, max_terms)
    return _hyp2f1_series(a, b, c, z, rel_tol, max_terms)


# ---------------------------------------------------------------------------
# Linear algebra and optimisation
# ---------------------------------------------------------------------------


def solve_tridiagonal(lower: Sequence[float], diag: Sequence[float], upper: Sequence[float], rhs: Sequence[float]) -> np.ndarray:
    """Solve a tridiagonal system (LAPACK ``gtsv``, partial pivoting).

    ``lower`` and ``upper`` hold the sub- and super-diagonal (length ``n - 1``).
    """
    d = np.array(diag, dtype=float)
    dl = np.array(lower, dtype=float)
    du = np.array(upper, dtype=float)
    b = np.array(rhs, dtype=float)
    n = d.shape[0]
    if dl.shape != (n - 1,) or du.shape != (n - 1,) or b.shape != (n,):
        raise ValueError(
            f"inconsistent tridiagonal shapes: lower {dl.shape}, diag {d.shape}, upper {du.shape}, rhs {b.shape}"
        )
    if n == 1:
        if d[0] == 0.0:
            raise SingularSystemError("zero pivot at row 0")
        return b / d
    *_, x, info = lapack.dgtsv(dl, d, du, b)
    if info > 0:
        raise SingularSystemError(f"zero pivot at row {info - 1}")
    if info < 0:
        raise ValueError(f"illegal argument {-info} to dgtsv")
    return x


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    reason: str

    def __iter__(self):
        # allows ``x, fun = minimize_derivative_free(...)``
        return iter((self.x, self.fun))


def minimize_derivative_free(
    objective: Callable[[np.ndarray], float],
    start: Sequence[float],
    tol: float = 1e-8,
    max_iter: int = 5000,
    initial_step: Sequence[float] | float | None = None,
) -> MinimizeResult:
    """Nelder-Mead simplex minimisation.

    Stops once the simplex diameter (largest vertex distance from the best
    vertex) drops below ``tol``.  Hitting ``max_iter`` is not an error: the best
    vertex is returned with ``converged=False``.
    """
    x0 = np.atleast_1d(np.asarray(start, dtype=float))
    n = x0.size
    if initial_step is None:
        step = np.where(x0 != 0.0, 0.05 * x0, 0.00025)
    else:
        step = np.broadcast_to(np.asarray(initial_step, dtype=float), x0.shape)

    simplex = np.tile(x0, (n + 1, 1))
    for i in range(n):
        simplex[i + 1, i] += step[i]
    values = np.array([objective(v) for v in simplex])
    if not np.isfinite(values[0]):
        raise ValueError("objective is not finite at the starting point")

    it = 0
    while True:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        diameter = np.max(np.linalg.norm(simplex[1:] - simplex[0], axis=1))
        if diameter < tol:
            return MinimizeResult(simplex[0].copy(), float(values[0]), it, True, "simplex diameter below tol")
        if it >= max_iter:
            return MinimizeResult(simplex[0].copy(), float(values[0]), it, False, "max_iter reached")
        it += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + (centroid - worst)
        fr = objective(xr)
        if fr < values[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = objective(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
        elif fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
        else:
            if fr < values[-1]:
                xc = centroid + 0.5 * (xr - centroid)
            else:
                xc = centroid + 0.5 * (worst - centroid)
            fc = objective(xc)
            if fc < min(fr, values[-1]):
                simplex[-1], values[-1] = xc, fc
            else:
                simplex[1:] = simplex[0] + 0.5 * (simplex[1:] - simplex[0])
                values[1:] = [objective(v) for v in simplex[1:]]
