"""Residual, Jacobian, and reaction term of the nonlocal logistic equation.

The equation solved along branches is

    (L u)(x) = u(x) (lambda - Phi_u(x)),
    Phi_u(x) = integral of Q(x, y) |u(y)|^p dy,

whose discrete residual is A u + Phi_u * u - lambda u.  Phi is
p-homogeneous in the amplitude of u, bounded by ||Q||_inf ||u||_inf^p |O|,
and nonnegative whenever Q is.  With gamma = 1 / lambda the equation is
equivalent to the fixed-point form u = gamma A u + G(gamma, u) with

    G(gamma, u) = gamma^2 Phi_u (A u) / (1 - gamma Phi_u),

defined on the admissible set gamma ||Phi_u||_inf < 1.  All functions are
pure; they recompute the weight matrix on each call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import QuadratureGrid
from .model import WeightSpec, weight_matrix
from .operator import DiscreteOperator

__all__ = [
    "PhiField",
    "ReactionError",
    "g_map",
    "in_admissible_set",
    "jacobian",
    "phi",
    "residual",
]


class ReactionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PhiField:
    """Sampled reaction field Phi_u with its sup norm and exponent."""

    values: np.ndarray
    sup_norm: float
    p: float


def phi(weight: WeightSpec, grid: QuadratureGrid, u: np.ndarray) -> PhiField:
    u = np.asarray(u, dtype=float)
    q = weight_matrix(weight, grid)
    values = (q * grid.weights[None, :]) @ np.abs(u) ** weight.p
    return PhiField(values=values, sup_norm=float(values.max()), p=weight.p)


def residual(
    op: DiscreteOperator, weight: WeightSpec, lam: float, u: np.ndarray
) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    field = phi(weight, op.grid, u)
    return op.a @ u + field.values * u - lam * u


def jacobian(
    op: DiscreteOperator, weight: WeightSpec, lam: float, u: np.ndarray
) -> np.ndarray:
    """Derivative of the residual in u.

    The reaction contributes diag(Phi_u) plus the rank-structure term
    D_ij = u_i p Q_ij |u_j|^(p-1) sgn(u_j) w_j.  For p < 1 that factor is
    singular at zero, so states must stay bounded away from zero there.
    """
    u = np.asarray(u, dtype=float)
    p = weight.p
    if p < 1 and np.abs(u).min() <= 1e-10:
        raise ReactionError(
            "jacobian with p < 1 needs min |u| > 1e-10; "
            "stay on the positive branch"
        )
    grid = op.grid
    q = weight_matrix(weight, grid)
    field = (q * grid.weights[None, :]) @ np.abs(u) ** p
    if p == 1:
        deriv = np.sign(u)
    else:
        deriv = p * np.abs(u) ** (p - 1) * np.sign(u)
    d = u[:, None] * (q * (deriv * grid.weights)[None, :])
    n = grid.n
    return op.a + np.diag(field) - lam * np.eye(n) + d


def in_admissible_set(gamma: float, field: PhiField) -> bool:
    """gamma ||Phi_u||_inf < 1 — where the fixed-point form is defined."""
    return gamma * field.sup_norm < 1.0


def g_map(
    op: DiscreteOperator, weight: WeightSpec, gamma: float, u: np.ndarray
) -> np.ndarray:
    """G(gamma, u) = gamma^2 Phi_u (A u) / (1 - gamma Phi_u)."""
    u = np.asarray(u, dtype=float)
    field = phi(weight, op.grid, u)
    if not in_admissible_set(gamma, field):
        raise ReactionError(
            f"state outside the admissible set: gamma * sup Phi = "
            f"{gamma * field.sup_norm} >= 1"
        )
    return gamma**2 * field.values * (op.a @ u) / (1.0 - gamma * field.values)
