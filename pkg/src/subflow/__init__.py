"""Anomalous (time-fractional) moisture infiltration in porous media.

Submodules: ``numerics`` (special functions, quadrature, linear algebra,
minimisation), ``ek_operator`` (Erdelyi-Kober integral and its series),
``selfsim`` (self-similar series solutions), ``fd_solver`` (reference finite
differences), ``fitting`` (parameter estimation) and ``cli``.
"""

from .selfsim import (
    BoundaryCondition,
    Scaling,
    SimilarityProblem,
    cumulative_moisture,
    dimensionalize,
    profile,
    solve_similarity,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryCondition",
    "Scaling",
    "SimilarityProblem",
    "cumulative_moisture",
    "dimensionalize",
    "profile",
    "solve_similarity",
]
