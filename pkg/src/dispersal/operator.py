"""Dense discretization of the dispersal operator and its principal pair.

The operator (Lu)(x) = integral of K(x, y) u(y) dy becomes the matrix
A = K * diag(w) acting on node values.  A is similar to the symmetric
matrix S = diag(sqrt w) K diag(sqrt w), so its spectrum is real and the
largest eigenvalue is the maximum of the weighted Rayleigh quotient.
For a symmetric kernel that is positive near the diagonal the principal
eigenvalue is simple and its eigenfunction can be taken strictly
positive; `principal_eigenpair` enforces exactly that and refuses to
return anything violating it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import QuadratureGrid
from .model import KernelSpec, kernel_matrix

__all__ = [
    "DiscreteOperator",
    "OperatorError",
    "PrincipalEigenpair",
    "assemble",
    "collatz_wielandt_sup",
    "principal_eigenpair",
    "rayleigh",
]

_DENSE_LIMIT = 2048


class OperatorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Action matrix ``a``, symmetrized form ``s``, and the grid they live on."""

    a: np.ndarray
    s: np.ndarray
    grid: QuadratureGrid
    kernel: KernelSpec

    @property
    def n(self) -> int:
        return self.grid.n

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.a @ np.asarray(u, dtype=float)


def assemble(kernel: KernelSpec, grid: QuadratureGrid) -> DiscreteOperator:
    k = kernel_matrix(kernel, grid)
    sqrt_w = np.sqrt(grid.weights)
    a = k * grid.weights[None, :]
    s = sqrt_w[:, None] * k * sqrt_w[None, :]
    a.setflags(write=False)
    s.setflags(write=False)
    return DiscreteOperator(a=a, s=s, grid=grid, kernel=kernel)


@dataclass(frozen=True, eq=False)
class PrincipalEigenpair:
    """Largest eigenvalue of the operator with its positive eigenfunction.

    ``phi1`` is sup-normalized and strictly positive; ``gap`` is the
    distance to the second eigenvalue and certifies simplicity;
    ``residual`` is the sup norm of A phi1 - lambda1 phi1.
    """

    lambda1: float
    phi1: np.ndarray
    gap: float
    residual: float


def _top_two_dense(s: np.ndarray):
    evals, evecs = np.linalg.eigh(s)
    return evals[-1], evals[-2], evecs[:, -1]


def _top_two_power(s: np.ndarray, tol: float = 1e-14, max_iters: int = 20000):
    """Power iteration fallback for matrices too large for dense eigh."""
    rng = np.random.default_rng(0)

    def top(mat):
        v = rng.standard_normal(mat.shape[0])
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iters):
            sv = mat @ v
            lam_new = float(v @ sv)
            nrm = np.linalg.norm(sv)
            if nrm == 0:
                return 0.0, v
            v = sv / nrm
            if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
                return lam_new, v
            lam = lam_new
        return lam, v

    lam1, v1 = top(s)
    deflated = s - lam1 * np.outer(v1, v1)
    lam2, _ = top(deflated)
    return lam1, lam2, v1


def principal_eigenpair(op: DiscreteOperator) -> PrincipalEigenpair:
    if op.n <= _DENSE_LIMIT:
        lam1, lam2, z = _top_two_dense(op.s)
    else:
        lam1, lam2, z = _top_two_power(np.asarray(op.s))
    if lam1 <= 0:
        raise OperatorError(
            f"principal eigenvalue must be positive, got {lam1}"
        )
    phi = z / np.sqrt(op.grid.weights)
    if op.grid.inner(phi, np.ones(op.n)) < 0:
        phi = -phi
    if phi.min() <= 1e-12 * phi.max():
        raise OperatorError(
            "principal eigenfunction is not strictly positive "
            "(positivity of the principal pair fails; the kernel likely "
            "violates symmetry or near-diagonal positivity)"
        )
    phi = phi / np.abs(phi).max()
    residual = float(np.abs(op.a @ phi - lam1 * phi).max())
    if residual > 1e-10 * lam1:
        raise OperatorError(
            f"eigen residual {residual} exceeds tolerance for lambda1={lam1}"
        )
    return PrincipalEigenpair(
        lambda1=float(lam1), phi1=phi, gap=float(lam1 - lam2), residual=residual
    )


def rayleigh(op: DiscreteOperator, u: np.ndarray) -> float:
    """Weighted Rayleigh quotient <A u, u>_w / <u, u>_w."""
    u = np.asarray(u, dtype=float)
    denom = op.grid.inner(u, u)
    if denom <= 0:
        raise OperatorError("rayleigh quotient needs a nonzero state")
    return op.grid.inner(op.a @ u, u) / denom


def collatz_wielandt_sup(op: DiscreteOperator, u: np.ndarray) -> float:
    """sup of (A u) / u for strictly positive u.

    For any positive u this is an upper Collatz-Wielandt value, so it is
    always >= lambda1; equality holds at the principal eigenfunction.
    """
    u = np.asarray(u, dtype=float)
    if u.min() <= 0:
        raise OperatorError("collatz_wielandt_sup needs strictly positive u")
    return float(((op.a @ u) / u).max())
