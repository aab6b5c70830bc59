"""Dispersal kernels, crowding weights, and their structural certificates.

A kernel K(x, y) >= 0 drives the nonlocal dispersal operator; a crowding
weight Q(x, y) >= 0 together with an exponent p > 0 drives the nonlocal
reaction term.  Both are described by small frozen spec objects that are
materialized to dense matrices over a quadrature grid on demand.

The checkers in this module certify, at grid level, the structural
hypotheses the solver relies on: symmetry of K, positivity of K near the
diagonal, a positive floor of Q on nearby pairs (locally or globally), the
existence of a maximizing point x0 with Q(x0, .) >= Q(x, .), and, for the
polynomial-dip preset, a certified comparison function a(x) with
Q(x0, y) >= Q(x, y) + a(x) and integrable inverse.  `oscillation` measures
sup_{x,z,y} |Q(x,y) - Q(z,y)|, the quantity that closes the solvability
window.

`build_a_eps` and `build_q_eps` produce the regularized weight family: a
dip profile a_eps vanishing at x0 and the row-scaled weight
Q_eps(x, y) = Q(x, y) (2 - a_eps(x)), which satisfies
Q <= Q_eps <= 2 Q and Q_eps(x0, y) - Q_eps(x, y) >= Q(x, y) a_eps(x).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import QuadratureGrid

__all__ = [
    "FloorReport",
    "HypothesisReport",
    "KernelSpec",
    "ModelError",
    "WeightSpec",
    "build_a_eps",
    "build_q_eps",
    "certify",
    "check_k1",
    "check_k2",
    "check_weight_floor",
    "kernel_matrix",
    "oscillation",
    "weight_matrix",
]

_SYM_TOL = 1e-12
_MAX_TOL = 1e-12


class ModelError(ValueError):
    """Invalid kernel/weight parameters or an uncertifiable request."""


def _polyval(coeffs, x: np.ndarray) -> np.ndarray:
    return np.polynomial.polynomial.polyval(x, np.asarray(coeffs, dtype=float))


def _coords_1d(grid: QuadratureGrid, what: str) -> np.ndarray:
    if grid.domain.dim != 1:
        raise ModelError(f"{what} is defined for 1-D domains only")
    return grid.nodes[:, 0]


def _pairwise_dist(grid: QuadratureGrid) -> np.ndarray:
    x = grid.nodes
    return np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Dispersal kernel K(x, y), one of four forms.

    constant:  K = value
    rank_one:  K(x, y) = f(x) f(y) for a 1-D polynomial f (coeffs low to high)
    gaussian:  K(x, y) = exp(-|x - y|^2 / length_scale^2)
    tabulated: explicit (n, n) matrix over the grid nodes
    """

    form: str
    value: float = 1.0
    coeffs: Optional[tuple] = None
    length_scale: float = 1.0
    matrix: Optional[np.ndarray] = None

    @classmethod
    def constant(cls, value: float) -> "KernelSpec":
        if value < 0:
            raise ModelError("constant kernel value must be nonnegative")
        return cls(form="constant", value=float(value))

    @classmethod
    def rank_one(cls, coeffs) -> "KernelSpec":
        return cls(form="rank_one", coeffs=tuple(float(c) for c in coeffs))

    @classmethod
    def gaussian(cls, length_scale: float) -> "KernelSpec":
        if length_scale <= 0:
            raise ModelError("gaussian length_scale must be positive")
        return cls(form="gaussian", length_scale=float(length_scale))

    @classmethod
    def tabulated(cls, matrix: np.ndarray) -> "KernelSpec":
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ModelError("tabulated kernel must be a square matrix")
        return cls(form="tabulated", matrix=m)


def kernel_matrix(kernel: KernelSpec, grid: QuadratureGrid) -> np.ndarray:
    """Materialize K(x_i, x_j) over the grid nodes; entries must be >= 0."""
    n = grid.n
    if kernel.form == "constant":
        k = np.full((n, n), kernel.value)
    elif kernel.form == "rank_one":
        f = _polyval(kernel.coeffs, _coords_1d(grid, "rank_one kernel"))
        k = np.outer(f, f)
    elif kernel.form == "gaussian":
        d = _pairwise_dist(grid)
        k = np.exp(-((d / kernel.length_scale) ** 2))
    elif kernel.form == "tabulated":
        if kernel.matrix.shape != (n, n):
            raise ModelError(
                f"tabulated kernel has shape {kernel.matrix.shape}, "
                f"grid needs ({n}, {n})"
            )
        k = kernel.matrix.copy()
    else:
        raise ModelError(f"unknown kernel form {kernel.form!r}")
    if k.min() < 0:
        raise ModelError("kernel is negative at a sampled pair")
    return k


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Crowding weight Q(x, y) >= 0 plus the reaction exponent p > 0.

    constant:       Q = value
    separable:      Q(x, y) = g(x) h(y), 1-D polynomials
    polynomial_dip: Q(x, y) = h(y) [level - prod_i |x - x_i|^(q_i)] + g(y)
    tabulated:      explicit (n, n) matrix over the grid nodes
    """

    form: str
    p: float
    value: float = 1.0
    g: Optional[tuple] = None
    h: Optional[tuple] = None
    points: Optional[tuple] = None
    exponents: Optional[tuple] = None
    level: float = 1.0
    matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.p <= 0:
            raise ModelError("reaction exponent p must be positive")

    @classmethod
    def constant(cls, value: float, p: float) -> "WeightSpec":
        if value < 0:
            raise ModelError("constant weight value must be nonnegative")
        return cls(form="constant", p=float(p), value=float(value))

    @classmethod
    def separable(cls, g, h, p: float) -> "WeightSpec":
        return cls(
            form="separable",
            p=float(p),
            g=tuple(float(c) for c in g),
            h=tuple(float(c) for c in h),
        )

    @classmethod
    def polynomial_dip(
        cls, h, g, points, exponents, level: float, p: float
    ) -> "WeightSpec":
        pts = tuple(float(c) for c in points)
        exps = tuple(float(c) for c in exponents)
        if len(pts) != len(exps) or not pts:
            raise ModelError("polynomial_dip needs matching points and exponents")
        if any(q <= 0 for q in exps):
            raise ModelError("dip exponents must be positive")
        return cls(
            form="polynomial_dip",
            p=float(p),
            h=tuple(float(c) for c in h),
            g=tuple(float(c) for c in g),
            points=pts,
            exponents=exps,
            level=float(level),
        )

    @classmethod
    def tabulated(cls, matrix: np.ndarray, p: float) -> "WeightSpec":
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ModelError("tabulated weight must be a square matrix")
        return cls(form="tabulated", p=float(p), matrix=m)


def _dip_profile(weight: WeightSpec, x: np.ndarray) -> np.ndarray:
    """prod_i |x - x_i|^(q_i) over 1-D coordinates."""
    prod = np.ones_like(x)
    for xi, qi in zip(weight.points, weight.exponents):
        prod = prod * np.abs(x - xi) ** qi
    return prod


def weight_matrix(weight: WeightSpec, grid: QuadratureGrid) -> np.ndarray:
    """Materialize Q(x_i, x_j) over the grid nodes; entries must be >= 0."""
    n = grid.n
    if weight.form == "constant":
        q = np.full((n, n), weight.value)
    elif weight.form == "separable":
        x = _coords_1d(grid, "separable weight")
        q = np.outer(_polyval(weight.g, x), _polyval(weight.h, x))
    elif weight.form == "polynomial_dip":
        x = _coords_1d(grid, "polynomial_dip weight")
        dip = weight.level - _dip_profile(weight, x)
        q = dip[:, None] * _polyval(weight.h, x)[None, :] + _polyval(
            weight.g, x
        )[None, :]
    elif weight.form == "tabulated":
        if weight.matrix.shape != (n, n):
            raise ModelError(
                f"tabulated weight has shape {weight.matrix.shape}, "
                f"grid needs ({n}, {n})"
            )
        q = weight.matrix.copy()
    else:
        raise ModelError(f"unknown weight form {weight.form!r}")
    if q.min() < 0:
        raise ModelError("weight is negative at a sampled pair")
    return q


def check_k1(kernel: KernelSpec, grid: QuadratureGrid) -> tuple[bool, float]:
    """Symmetry of K on the grid: (symmetric within 1e-12, max asymmetry)."""
    k = kernel_matrix(kernel, grid)
    asym = float(np.abs(k - k.T).max())
    return asym <= _SYM_TOL, asym


def check_k2(
    kernel: KernelSpec, grid: QuadratureGrid, delta: float
) -> tuple[bool, float]:
    """Positivity of K on pairs with |x - y| <= delta.

    Returns (holds, delta); the certified scale is the one passed in.
    """
    if delta <= 0:
        raise ModelError("delta must be positive")
    k = kernel_matrix(kernel, grid)
    near = _pairwise_dist(grid) <= delta
    return bool(k[near].min() > 0), delta


@dataclass(frozen=True, eq=False)
class FloorReport:
    """Weight floor and maximizing-point facts over one grid."""

    q2: bool
    sigma: float          # min Q over pairs with |x - y| <= r
    r: float
    q2pp: bool
    sigma_global: float   # min Q over all pairs
    q4: bool
    x0_index: int
    x0: np.ndarray
    q4_defect: float      # max over (x, y) of Q(x, y) - Q(x0, y)


def check_weight_floor(
    weight: WeightSpec, grid: QuadratureGrid, r: float
) -> FloorReport:
    """Certify the positive floor of Q and locate a maximizing node x0."""
    if r <= 0:
        raise ModelError("r must be positive")
    q = weight_matrix(weight, grid)
    near = _pairwise_dist(grid) <= r
    sigma = float(q[near].min())
    sigma_global = float(q.min())

    col_max = q.max(axis=0)
    advantage = (q - col_max[None, :]).min(axis=1)
    i0 = int(np.argmax(advantage))
    defect = float(-advantage[i0])
    return FloorReport(
        q2=sigma > 0,
        sigma=sigma,
        r=float(r),
        q2pp=sigma_global > 0,
        sigma_global=sigma_global,
        q4=defect <= _MAX_TOL,
        x0_index=i0,
        x0=grid.nodes[i0].copy(),
        q4_defect=defect,
    )


def oscillation(weight: WeightSpec, grid: QuadratureGrid) -> float:
    """sup over x, z, y of |Q(x, y) - Q(z, y)| on the grid."""
    q = weight_matrix(weight, grid)
    return float((q.max(axis=0) - q.min(axis=0)).max())


@dataclass(frozen=True, eq=False)
class HypothesisReport:
    """Certificates for one (kernel, weight, grid) triple.

    ``q3`` is None when the weight form carries no symbolic certificate
    (only the polynomial_dip preset does).  When present, ``q3_a`` samples
    the certified comparison function a(x) = m * (P(x) - min P) with
    m = min h, and ``q3_integrals`` records the quadrature values of
    a^(-1), a^(-p) and a^(-q) for q = max(1, p), over nodes with
    a >= 1e-14.
    """

    k1: bool
    max_asymmetry: float
    k2: bool
    delta: float
    floor: FloorReport
    oscillation: float
    q3: Optional[bool]
    q3_x0_index: Optional[int]
    q3_a: Optional[np.ndarray]
    q3_integrals: Optional[dict]


def _certify_q3(weight: WeightSpec, grid: QuadratureGrid, floor: FloorReport):
    if weight.form != "polynomial_dip":
        return None, None, None, None
    x = _coords_1d(grid, "polynomial_dip weight")
    n_dim = grid.domain.dim
    exponents_ok = all(qi < n_dim / weight.p for qi in weight.exponents)

    prof = _dip_profile(weight, x)
    i0 = int(np.argmin(prof))
    m_coef = float(_polyval(weight.h, x).min())
    a = m_coef * (prof - prof[i0])

    q = weight_matrix(weight, grid)
    gap = q[i0][None, :] - q          # Q(x0, y) - Q(x, y)
    pointwise_ok = bool((gap - a[:, None]).min() >= -_MAX_TOL)

    supported = a >= 1e-14
    integrals = {}
    for label, expo in (
        ("l1", 1.0),
        ("lp", weight.p),
        ("lq", max(1.0, weight.p)),
    ):
        integrals[label] = float(
            grid.weights[supported] @ a[supported] ** (-expo)
        )
    ok = exponents_ok and pointwise_ok and m_coef > 0
    return ok, i0, a, integrals


def certify(
    kernel: KernelSpec,
    weight: WeightSpec,
    grid: QuadratureGrid,
    r: float,
    delta: Optional[float] = None,
) -> HypothesisReport:
    """Run every grid-level certificate and collect the results."""
    if delta is None:
        delta = r
    k1, asym = check_k1(kernel, grid)
    k2, delta = check_k2(kernel, grid, delta)
    floor = check_weight_floor(weight, grid, r)
    q3, q3_i0, q3_a, q3_int = _certify_q3(weight, grid, floor)
    return HypothesisReport(
        k1=k1,
        max_asymmetry=asym,
        k2=k2,
        delta=delta,
        floor=floor,
        oscillation=oscillation(weight, grid),
        q3=q3,
        q3_x0_index=q3_i0,
        q3_a=q3_a,
        q3_integrals=q3_int,
    )


def eps_ceiling(weight: WeightSpec, grid: QuadratureGrid) -> float:
    """Largest admissible dip exponent, N / (2 p)."""
    return grid.domain.dim / (2.0 * weight.p)


def build_a_eps(
    weight: WeightSpec, grid: QuadratureGrid, x0: np.ndarray, eps: float
) -> np.ndarray:
    """Dip profile a_eps over the nodes: |x - x0|^eps where |x - x0| <= 1,
    and 1 farther out.  Requires 0 < eps <= N / (2 p)."""
    eps0 = eps_ceiling(weight, grid)
    if not 0 < eps <= eps0:
        raise ModelError(
            f"eps must lie in (0, {eps0}] (ceiling N/(2p)), got {eps}"
        )
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = np.linalg.norm(grid.nodes - x0[None, :], axis=1)
    return np.where(d <= 1.0, d**eps, 1.0)


def build_q_eps(
    weight: WeightSpec, grid: QuadratureGrid, a_eps: np.ndarray
) -> WeightSpec:
    """Row-scaled weight Q_eps(x, y) = Q(x, y) (2 - a_eps(x)), tabulated."""
    a = np.asarray(a_eps, dtype=float)
    if a.shape != (grid.n,):
        raise ModelError("a_eps must have one value per grid node")
    if a.min() < 0 or a.max() > 1 + 1e-12:
        raise ModelError("a_eps values must lie in [0, 1]")
    q = weight_matrix(weight, grid)
    return WeightSpec.tabulated((2.0 - a)[:, None] * q, p=weight.p)
