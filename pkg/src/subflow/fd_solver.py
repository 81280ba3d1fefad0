"""Finite-difference reference solver for ``D_t^alpha u = (u^m u_x)_x``.

Caputo derivative by the L1 scheme with the full history, conservative second
difference with face diffusivities frozen at the previous level, theta-weighted
in time.  Each step is a single tridiagonal solve.

Nodes sit at ``x_i = i dx``, ``i = 0 .. nx-1``.  The far node is held at zero
and the run stops if the wetted region reaches it.  With the flux condition
node 0 owns the half cell ``[0, dx/2]`` into which the unit flux enters, so the
trapezoid-rule mass changes exactly by the injected amount.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .numerics import gamma_fn, solve_tridiagonal
from .selfsim import BoundaryCondition, SeriesSolution, SimilarityExponents, profile

log = logging.getLogger(__name__)


class DomainOverflowError(RuntimeError):
    """The solution reached the far boundary: the domain is too short."""


class ClampingError(RuntimeError):
    """Too much negative undershoot had to be clamped away."""


@dataclass(frozen=True)
class FDConfig:
    nx: int
    dx: float
    dt: float
    t_end: float
    alpha: float
    m: float
    bc: BoundaryCondition = BoundaryCondition.FLUX
    theta: float = 1.0
    # relative level (to max u) above which the far boundary counts as reached
    overflow_tol: float = 1e-6
    max_clamped_fraction: float = 1e-6

    def __post_init__(self):
        if int(self.nx) != self.nx or self.nx < 16:
            raise ValueError(f"nx must be an integer >= 16, got {self.nx!r}")
        for name in ("dx", "dt", "t_end"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if not self.m >= 0.0:
            raise ValueError(f"m must be non-negative, got {self.m!r}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta!r}")
        object.__setattr__(self, "bc", BoundaryCondition(self.bc))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def length(self) -> float:
        return (self.nx - 1) * self.dx

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx


@dataclass
class FDField:
    """Solution history: ``history[n]`` is the profile at ``times[n]``."""

    x: np.ndarray
    history: np.ndarray
    times: np.ndarray
    clamp_count: int = 0
    clamped_mass: float = 0.0
    monotonicity_violations: int = 0

    def __len__(self) -> int:
        return len(self.times)

    def level_index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if len(self.times) > 1:
            dt = self.times[1] - self.times[0]
            if abs(self.times[i] - t) > 1e-6 * dt:
                raise ValueError(f"time {t!r} is not a stored level")
        return i

    def at(self, t: float) -> np.ndarray:
        return self.history[self.level_index(t)]


def l1_weights(alpha: float, n: int) -> np.ndarray:
    """L1 memory weights ``b_j = (j+1)^(1-alpha) - j^(1-alpha)``, ``j < n``."""
    j = np.arange(n, dtype=float)
    b = (j + 1.0) ** (1.0 - alpha) - j ** (1.0 - alpha)
    if n:
        b[0] = 1.0  # 0**0 would zero it when alpha = 1
    return b


def face_diffusivity(u: np.ndarray, m: float) -> np.ndarray:
    """``D_{i+1/2}`` as the arithmetic mean of nodal ``u^m`` (length ``nx - 1``)."""
    um = np.power(np.clip(u, 0.0, None), m)
    return 0.5 * (um[:-1] + um[1:])


def _apply_diffusion(u: np.ndarray, D: np.ndarray, dx: float, bc: BoundaryCondition) -> np.ndarray:
    """Discrete ``(D u_x)_x`` at the nodes, with the boundary rows of the scheme."""
    flux = D * np.diff(u) / dx  # D (u_{i+1} - u_i)/dx at faces
    out = np.zeros_like(u)
    out[1:-1] = (flux[1:] - flux[:-1]) / dx
    if bc is BoundaryCondition.FLUX:
        out[0] = 2.0 * flux[0] / dx
    return out


def apply_boundary(cfg: FDConfig, lower, diag, upper, rhs, c0: float, D: np.ndarray, u_old: np.ndarray, mem0: float):
    """Fill row 0 and the far row of the step system in place.

    Concentration: ``u_0 = 1``.  Flux: half-cell balance
    ``(dx/2) D_t u_0 = 1 + D_{1/2} (u_1 - u_0)/dx``, i.e. a mirrored ghost node
    carrying the unit inflow.  Far node: ``u = 0``.
    """
    th = cfg.theta
    if cfg.bc is BoundaryCondition.CONCENTRATION:
        diag[0], upper[0], rhs[0] = 1.0, 0.0, 1.0
    else:
        k = 2.0 * D[0] / cfg.dx**2
        diag[0] = c0 + th * k
        upper[0] = -th * k
        rhs[0] = c0 * (u_old[0] - mem0) + 2.0 / cfg.dx + (1.0 - th) * k * (u_old[1] - u_old[0])
    diag[-1], lower[-1], rhs[-1] = 1.0, 0.0, 0.0


class FDSolver:
    """Owns one simulation and its full history (single writer)."""

    def __init__(self, cfg: FDConfig):
        self.cfg = cfg
        n_levels = cfg.n_steps + 1
        self._u = np.zeros((n_levels, cfg.nx))
        self._t = np.arange(n_levels) * cfg.dt
        self._n = 0  # index of the latest level
        self._b = l1_weights(cfg.alpha, n_levels)
        self._c0 = cfg.dt ** (-cfg.alpha) / gamma_fn(2.0 - cfg.alpha)
        self._active = 2  # columns that have ever been nonzero, plus margin
        self.clamp_count = 0
        self.clamped_mass = 0.0
        self.monotonicity_violations = 0

    @property
    def field(self) -> FDField:
        n = self._n + 1
        return FDField(
            self.cfg.x,
            self._u[:n],
            self._t[:n],
            self.clamp_count,
            self.clamped_mass,
            self.monotonicity_violations,
        )

    def _memory(self) -> np.ndarray:
        # sum_{j=1}^{n} b_j (u^{n+1-j} - u^{n-j}) rewritten as one weighted sum of levels
        n = self._n
        mem = np.zeros(self.cfg.nx)
        if n == 0 or self.cfg.alpha == 1.0:
            return mem
        b = self._b
        w = np.zeros(n + 1)
        w[1:] += b[n:0:-1]  # level l >= 1 gets +b_{n+1-l}
        w[:n] -= b[n:0:-1]  # level l <= n-1 gets -b_{n-l}
        cols = min(self._active, self.cfg.nx)
        mem[:cols] = w @ self._u[: n + 1, :cols]
        return mem

    def advance(self) -> np.ndarray:
        """Compute and store the next level; returns it."""
        cfg = self.cfg
        if self._n >= cfg.n_steps:
            raise RuntimeError("t_end reached")
        u_old = self._u[self._n]
        c0, th, dx2 = self._c0, cfg.theta, cfg.dx**2
        D = face_diffusivity(u_old, cfg.m)
        mem = self._memory()

        nx = cfg.nx
        diag = np.empty(nx)
        lower = np.zeros(nx - 1)
        upper = np.zeros(nx - 1)
        Dm, Dp = D[:-1], D[1:]  # faces i-1/2 and i+1/2 for interior i
        diag[1:-1] = c0 + th * (Dm + Dp) / dx2
        lower[:-1] = -th * Dm / dx2
        upper[1:] = -th * Dp / dx2
        rhs = c0 * (u_old - mem)
        if th < 1.0:
            rhs += (1.0 - th) * _apply_diffusion(u_old, D, cfg.dx, BoundaryCondition.CONCENTRATION)
        apply_boundary(cfg, lower, diag, upper, rhs, c0, D, u_old, mem[0])

        u_new = solve_tridiagonal(lower, diag, upper, rhs)
        if cfg.bc is BoundaryCondition.CONCENTRATION:
            u_new[0] = 1.0  # pivoting leaves it off by rounding

        neg = u_new < 0.0
        if np.any(neg):
            self.clamp_count += int(np.count_nonzero(neg))
            self.clamped_mass += float(-np.sum(u_new[neg]) * cfg.dx)
            u_new[neg] = 0.0
            total = float(np.trapezoid(u_new, dx=cfg.dx))
            if self.clamped_mass > cfg.max_clamped_fraction * max(total, 1e-300):
                raise ClampingError(
                    f"clamped mass {self.clamped_mass:.3e} exceeds {cfg.max_clamped_fraction:g} of total {total:.3e}"
                )
        if cfg.bc is BoundaryCondition.CONCENTRATION and np.any(np.diff(u_new) > 1e-12):
            self.monotonicity_violations += 1
            log.warning("non-monotone profile at t=%g", self._t[self._n + 1])

        umax = float(np.max(u_new))
        if umax > 0 and u_new[-2] > cfg.overflow_tol * umax:
            raise DomainOverflowError(
                f"solution reached the far boundary at t={self._t[self._n + 1]:g} (u={u_new[-2]:.3e}); enlarge nx*dx"
            )

        self._n += 1
        self._u[self._n] = u_new
        nz = np.flatnonzero(u_new > 0.0)
        if nz.size:
            self._active = max(self._active, int(nz[-1]) + 2)
        return u_new

    def run(self) -> FDField:
        while self._n < self.cfg.n_steps:
            self.advance()
        if self.clamp_count:
            log.info("clamped %d negative values (mass %.3e)", self.clamp_count, self.clamped_mass)
        return self.field


def advance(cfg: FDConfig, solver: FDSolver) -> FDField:
    """Advance ``solver`` by one level and return the updated field."""
    solver.advance()
    return solver.field


def simulate(cfg: FDConfig) -> FDField:
    return FDSolver(cfg).run()


# ---------------------------------------------------------------------------
# post-processing
# ---------------------------------------------------------------------------


def rescale(field: FDField, exps: SimilarityExponents, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Profile at time ``t`` in similarity variables ``(x t^-b, u t^-a)``."""
    u = field.at(t)
    return field.x * t ** (-exps.b), u * t ** (-exps.a)


def collapse_diagnostic(field: FDField, exps: SimilarityExponents, times: Sequence[float]) -> float:
    """Largest pairwise sup-distance between rescaled profiles.

    Profiles are compared on their common eta-range with linear interpolation;
    the sup of a difference of piecewise-linear functions is attained at a node
    of one of them, so the union of nodes is used as the evaluation grid.
    """
    times = list(times)
    if len(times) < 2:
        raise ValueError("need at least two times")
    if any(t <= 0 for t in times):
        raise ValueError("times must be positive")
    curves = [rescale(field, exps, t) for t in times]
    eta_max = min(c[0][-1] for c in curves)
    grid = np.unique(np.concatenate([c[0][c[0] <= eta_max] for c in curves]))
    vals = [np.interp(grid, eta, U) for eta, U in curves]
    worst = 0.0
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            worst = max(worst, float(np.max(np.abs(vals[i] - vals[j]))))
    return worst


def approximant_distance(field: FDField, sol: SeriesSolution, times: Sequence[float], frac: float = 0.9) -> float:
    """Largest sup-distance between rescaled profiles and ``sol`` on ``[0, frac * eta*]``."""
    worst = 0.0
    for t in times:
        eta, U = rescale(field, sol.exponents, t)
        hi = frac * sol.eta_star
        if eta[-1] < hi:
            raise ValueError(f"domain too short to compare up to eta={hi:g}")
        grid = np.union1d(eta[eta <= hi], np.linspace(0.0, hi, 801))
        worst = max(worst, float(np.max(np.abs(np.interp(grid, eta, U) - profile(sol, grid)))))
    return worst


def wetting_front_numeric(field: FDField, threshold: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """Front position per level: last crossing of ``threshold`` (default 1e-3 max u)."""
    x = field.x
    fronts = np.zeros(len(field.times))
    for n, u in enumerate(field.history):
        umax = float(np.max(u))
        if umax <= 0.0:
            continue
        thr = 1e-3 * umax if threshold is None else threshold
        above = np.flatnonzero(u > thr)
        if above.size == 0:
            continue
        i = int(above[-1])
        if i + 1 >= len(u):
            fronts[n] = x[i]
            continue
        # linear interpolation between node i (above) and i+1 (at or below)
        fronts[n] = x[i] + (u[i] - thr) / (u[i] - u[i + 1]) * (x[i + 1] - x[i])
    return field.times.copy(), fronts


def cumulative_moisture_numeric(field: FDField) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid-rule integral of every stored profile."""
    dx = field.x[1] - field.x[0]
    return field.times.copy(), np.trapezoid(field.history, dx=dx, axis=1)


def boundary_flux(field: FDField, m: float) -> np.ndarray:
    """Inflow ``-(u^m u_x)(0)`` per level from a second-order one-sided difference."""
    dx = field.x[1] - field.x[0]
    u = field.history
    ux = (-3.0 * u[:, 0] + 4.0 * u[:, 1] - u[:, 2]) / (2.0 * dx)
    return -np.power(u[:, 0], m) * ux


def log_slope(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares fit ``log y = slope log t + c``; returns ``(slope, exp(c))``."""
    slope, c = np.polyfit(np.log(t), np.log(y), 1)
    return float(slope), float(math.exp(c))
