"""Box domains, quadrature grids, and ball coverings.

Everything downstream reduces integrals over the habitat to weighted sums
over a fixed node set, so this module stays deliberately small: a `Domain`
is an axis-aligned box in one or two dimensions, `build_grid` produces
nodes and strictly positive weights for one of three classical rules, and
`cover` returns a finite set of ball centers whose closed balls of radius
r/2 cover every grid node.  Grids and coverings are frozen after
construction and are safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RULES",
    "Covering",
    "Domain",
    "GeometryError",
    "QuadratureGrid",
    "build_grid",
    "cover",
]

RULES = ("midpoint", "trapezoid", "gauss-legendre-tensor")

_RULE_ALIASES = {
    "gauss": "gauss-legendre-tensor",
    "gauss-legendre": "gauss-legendre-tensor",
}


class GeometryError(ValueError):
    """Degenerate domain, unknown rule, or invalid covering radius."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box in R^N, N in {1, 2}.

    ``lower`` and ``upper`` are per-axis bounds.  Multi-box unions are not
    supported yet; `from_boxes` exists so configs can already speak the
    list-of-boxes dialect.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi):
            raise GeometryError("lower and upper must have the same length")
        if not 1 <= len(lo) <= 2:
            raise GeometryError("only 1-D and 2-D box domains are supported")
        if any(b <= a for a, b in zip(lo, hi)):
            raise GeometryError(f"degenerate box: lower={lo} upper={hi}")

    @classmethod
    def from_boxes(cls, boxes) -> "Domain":
        if len(boxes) != 1:
            raise GeometryError("exactly one box is supported")
        box = boxes[0]
        return cls(tuple(box["lower"]), tuple(box["upper"]))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.lower, self.upper))

    @property
    def volume(self) -> float:
        return float(math.prod(self.sides))

    @property
    def diameter(self) -> float:
        return float(math.hypot(*self.sides))

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Boolean mask: which rows of ``points`` lie in the closed box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lower) - tol
        hi = np.asarray(self.upper) + tol
        return np.all((pts >= lo) & (pts <= hi), axis=1)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Nodes and positive weights for integration over ``domain``.

    ``nodes`` has shape (n, dim) and ``weights`` shape (n,); the weights sum
    to the domain volume to relative 1e-12.  ``resolution`` is points per
    axis, so n == resolution ** dim.
    """

    domain: Domain
    rule: str
    resolution: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    def integrate(self, samples: np.ndarray) -> float:
        """Weighted sum approximating the integral of the sampled function."""
        values = np.asarray(samples, dtype=float)
        if values.shape != (self.n,):
            raise GeometryError(
                f"expected {self.n} samples, got shape {values.shape}"
            )
        return float(self.weights @ values)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """Weighted inner product <u, v> = sum_j w_j u_j v_j."""
        return float(self.weights @ (np.asarray(u, float) * np.asarray(v, float)))

    def lp_norm(self, u: np.ndarray, p: float) -> float:
        """Weighted L^p norm (sum_j w_j |u_j|^p)^(1/p), p > 0."""
        if p <= 0:
            raise GeometryError("p must be positive")
        u = np.asarray(u, dtype=float)
        return float((self.weights @ np.abs(u) ** p) ** (1.0 / p))


@dataclass(frozen=True, eq=False)
class Covering:
    """Ball centers covering all grid nodes with closed balls of ``radius``."""

    centers: np.ndarray
    radius: float

    @property
    def m(self) -> int:
        return self.centers.shape[0]


def _axis_rule(rule: str, lo: float, hi: float, res: int):
    h = (hi - lo) / res
    if rule == "midpoint":
        x = lo + (np.arange(res) + 0.5) * h
        w = np.full(res, h)
    elif rule == "trapezoid":
        h = (hi - lo) / (res - 1)
        x = lo + np.arange(res) * h
        w = np.full(res, h)
        w[0] = w[-1] = 0.5 * h
    else:  # gauss-legendre-tensor
        t, wt = np.polynomial.legendre.leggauss(res)
        x = 0.5 * (hi - lo) * t + 0.5 * (lo + hi)
        w = 0.5 * (hi - lo) * wt
    return x, w


def build_grid(domain: Domain, rule: str, resolution: int) -> QuadratureGrid:
    """Tensor-product quadrature grid with ``resolution`` points per axis."""
    rule = _RULE_ALIASES.get(rule, rule)
    if rule not in RULES:
        raise GeometryError(f"unknown rule {rule!r}; expected one of {RULES}")
    if resolution < 2:
        raise GeometryError("resolution must be at least 2")

    axes = [
        _axis_rule(rule, lo, hi, resolution)
        for lo, hi in zip(domain.lower, domain.upper)
    ]
    if domain.dim == 1:
        nodes = axes[0][0][:, None]
        weights = axes[0][1].copy()
    else:
        gx, gy = np.meshgrid(axes[0][0], axes[1][0], indexing="ij")
        nodes = np.column_stack([gx.ravel(), gy.ravel()])
        weights = np.outer(axes[0][1], axes[1][1]).ravel()

    if not math.isclose(weights.sum(), domain.volume, rel_tol=1e-12):
        raise GeometryError("weights do not sum to the domain volume")
    if np.any(weights <= 0):
        raise GeometryError("quadrature weights must be strictly positive")
    if not domain.contains(nodes).all():
        raise GeometryError("quadrature nodes left the domain closure")
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureGrid(domain, rule, resolution, nodes, weights)


def cover(domain: Domain, grid: QuadratureGrid, r: float) -> Covering:
    """Cover the grid nodes with closed balls of radius r/2.

    Axis-sweep construction: each axis is split into equal cells no longer
    than r/sqrt(N), and the centers of the resulting cells are the ball
    centers.  The half cell diagonal is then at most r/2, so every point of
    the box (in particular every node) is within r/2 of some center, and
    the per-axis counts are minimal for that cell shape.
    """
    if r <= 0:
        raise GeometryError("covering radius r must be positive")
    dim = domain.dim
    max_cell = r / math.sqrt(dim)
    axes = []
    for lo, hi in zip(domain.lower, domain.upper):
        k = max(1, math.ceil((hi - lo) / max_cell - 1e-12))
        cell = (hi - lo) / k
        axes.append(lo + (np.arange(k) + 0.5) * cell)
    if dim == 1:
        centers = axes[0][:, None]
    else:
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        centers = np.column_stack([gx.ravel(), gy.ravel()])

    dist = np.linalg.norm(grid.nodes[:, None, :] - centers[None, :, :], axis=-1)
    if dist.min(axis=1).max() > 0.5 * r + 1e-12:
        raise GeometryError("covering construction failed to reach every node")
    centers.setflags(write=False)
    return Covering(centers, 0.5 * r)
