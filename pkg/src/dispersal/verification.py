"""Independent oracles and one checker per quantitative bound.

Two solvers live here that share no code with the Newton path:

``oracle_fixed_point`` iterates the literal rearrangement
u <- (1 - w) u + w L0 u / (lambda - Phi_u) with damping.  The positive
solution is an exact stationary point of this map, but its linearized
multiplier there is 1 + w p (lambda - lambda1) / lambda1-scale > 1, so
the iteration started off the solution drains to the trivial state (or
leaves the admissible region).  The result records that honestly via its
status; agreement with Newton is asserted only where the iteration
actually converges.

``oracle_spectral`` solves the same rearrangement as a shape/amplitude
problem: the shape is the principal eigenvector of the symmetric pencil
S v = nu diag(lambda - Phi_u) v, and the amplitude is the root of
nu(t) = 1 along u = t shape.  nu(0) = lambda1 / lambda, and nu is
increasing in t, so the root exists exactly when lambda > lambda1; below
that the oracle certifies nonexistence of a positive solution.

Checkers return BoundReport records with the convention margin >= 0
means the bound is satisfied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .continuation import (
    ContinuationConfig,
    ContinuationError,
    newton_correct,
    window_bounds,
)
from .geometry import Covering, QuadratureGrid
from .logistic import phi
from .model import WeightSpec, check_weight_floor, oscillation
from .operator import DiscreteOperator, collatz_wielandt_sup

__all__ = [
    "BoundReport",
    "OracleResult",
    "VerificationError",
    "check_admissibility",
    "check_collatz_wielandt",
    "check_covering_bound",
    "check_phi_floor",
    "check_positivity",
    "check_rate_nonexistence",
    "check_solvability_window",
    "check_subcritical_nonexistence",
    "oracle_fixed_point",
    "oracle_spectral",
    "pencil_eigenvalue",
    "verify_branch",
]


class VerificationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class BoundReport:
    name: str
    holds: bool
    margin: float
    context: dict = field(default_factory=dict)
    applicable: bool = True


@dataclass(frozen=True, eq=False)
class OracleResult:
    u: np.ndarray
    status: str          # converged | inadmissible | not_converged |
    #                      no_positive_solution
    iters: int
    final_change: float
    residual: float


def _problem_residual(op, weight, lam, u) -> float:
    fld = phi(weight, op.grid, u)
    return float(np.abs(op.apply(u) + fld.values * u - lam * u).max())


def oracle_fixed_point(
    op: DiscreteOperator,
    weight: WeightSpec,
    lam: float,
    u0: np.ndarray,
    relaxation: float = 0.5,
    tol: float = 1e-11,
    max_iters: int = 4000,
) -> OracleResult:
    """Damped rearrangement iteration u <- (1-w) u + w L0 u / (lambda - Phi_u).

    Stops when the sup-change drops below tol.  When an iterate leaves
    the region lambda - Phi_u > 0 the step is retried from the previous
    iterate with half the damping; exhausting the damping budget yields
    status "inadmissible" (inconclusive, not fatal).
    """
    if not 0 < relaxation <= 1:
        raise VerificationError("relaxation must lie in (0, 1]")
    if lam <= 0:
        raise VerificationError("lambda must be positive")
    u = np.asarray(u0, dtype=float).copy()
    if u.min() <= 0:
        raise VerificationError("starting state must be positive")
    grid = op.grid
    omega = relaxation
    prev = None
    change = math.inf
    for it in range(1, max_iters + 1):
        c = lam - phi(weight, grid, u).values
        if c.min() <= 0:
            if prev is None or omega < 1e-6:
                return OracleResult(
                    u=u,
                    status="inadmissible",
                    iters=it,
                    final_change=change,
                    residual=_problem_residual(op, weight, lam, u),
                )
            u = prev
            omega *= 0.5
            continue
        nxt = (1.0 - omega) * u + omega * op.apply(u) / c
        change = float(np.abs(nxt - u).max())
        prev, u = u, nxt
        if change < tol:
            return OracleResult(
                u=u,
                status="converged",
                iters=it,
                final_change=change,
                residual=_problem_residual(op, weight, lam, u),
            )
    return OracleResult(
        u=u,
        status="not_converged",
        iters=max_iters,
        final_change=change,
        residual=_problem_residual(op, weight, lam, u),
    )


def pencil_eigenvalue(
    op: DiscreteOperator, c: np.ndarray
) -> tuple[float, np.ndarray]:
    """Principal eigenpair of S v = nu diag(c) v with c > 0.

    Returns (nu1, u) with u the eigenvector mapped back to node values,
    sign-fixed to positive mean and sup-normalized.
    """
    c = np.asarray(c, dtype=float)
    if c.min() <= 0:
        raise VerificationError("pencil needs a strictly positive field c")
    root_c = np.sqrt(c)
    b = op.s / root_c[:, None] / root_c[None, :]
    vals, vecs = np.linalg.eigh(b)
    nu = float(vals[-1])
    y = vecs[:, -1]
    u = y / root_c / np.sqrt(op.grid.weights)
    if op.grid.integrate(u) < 0:
        u = -u
    sup = float(np.abs(u).max())
    if sup == 0:
        raise VerificationError("degenerate pencil eigenvector")
    return nu, u / sup


def oracle_spectral(
    op: DiscreteOperator,
    weight: WeightSpec,
    lam: float,
    tol: float = 1e-12,
    max_outer: int = 120,
) -> OracleResult:
    """Shape/amplitude fixed point built on the symmetric pencil.

    Status "no_positive_solution" is a genuine certificate: the
    amplitude equation nu(t) = 1 has no positive root when
    lambda <= lambda1.
    """
    from .operator import principal_eigenpair

    grid = op.grid
    if lam <= 0:
        raise VerificationError("lambda must be positive")

    def amplitude(shape: np.ndarray):
        fhat = phi(weight, grid, shape).values
        fsup = float(fhat.max())
        if fsup <= 0:
            raise VerificationError(
                "weight produces no reaction at the shape; amplitude "
                "equation is degenerate"
            )

        def excess(t: float) -> float:
            nu, _ = pencil_eigenvalue(op, lam - t**weight.p * fhat)
            return nu - 1.0

        lo = excess(0.0)
        if lo >= -1e-14:
            return None
        t_hi = (lam * (1.0 - 1e-10) / fsup) ** (1.0 / weight.p)
        hi = excess(t_hi)
        if hi <= 0:
            raise VerificationError(
                "amplitude equation fails to bracket a root"
            )
        return float(brentq(excess, 0.0, t_hi, xtol=1e-14, rtol=1e-15))

    shape = principal_eigenpair(op).phi1
    t = amplitude(shape)
    if t is None:
        return OracleResult(
            u=np.zeros(grid.n),
            status="no_positive_solution",
            iters=0,
            final_change=0.0,
            residual=0.0,
        )
    u = t * shape
    change = math.inf
    for it in range(1, max_outer + 1):
        c = lam - phi(weight, grid, u).values
        _, shape_new = pencil_eigenvalue(op, c)
        if shape_new.min() <= 0:
            raise VerificationError("pencil eigenvector lost positivity")
        if it > 30:
            mix = 0.5 * shape + 0.5 * shape_new
            shape_new = mix / np.abs(mix).max()
        t_new = amplitude(shape_new)
        if t_new is None:
            raise VerificationError(
                "amplitude root vanished during shape iteration"
            )
        u_new = t_new * shape_new
        change = float(np.abs(u_new - u).max())
        u, shape, t = u_new, shape_new, t_new
        if change <= tol * max(1.0, float(np.abs(u).max())):
            return OracleResult(
                u=u,
                status="converged",
                iters=it,
                final_change=change,
                residual=_problem_residual(op, weight, lam, u),
            )
    return OracleResult(
        u=u,
        status="not_converged",
        iters=max_outer,
        final_change=change,
        residual=_problem_residual(op, weight, lam, u),
    )


def check_admissibility(point) -> BoundReport:
    """gamma ||Phi_u||_inf < 1 with gamma = 1 / lambda."""
    margin = 1.0 - point.gamma_phi_sup
    return BoundReport(
        name="admissibility",
        holds=margin > 0,
        margin=margin,
        context={"lambda": point.lam, "gamma_phi_sup": point.gamma_phi_sup},
    )


def check_covering_bound(
    point, covering: Covering, sigma: float, p: float
) -> BoundReport:
    """||u||_p <= (m lambda / sigma)^(1/p) from the ball covering."""
    if sigma <= 0:
        raise VerificationError("covering bound needs a positive sigma")
    bound = (covering.m * point.lam / sigma) ** (1.0 / p)
    margin = bound - point.p_norm
    return BoundReport(
        name="lp_covering_bound",
        holds=margin >= -1e-8,
        margin=margin,
        context={
            "lambda": point.lam,
            "m": covering.m,
            "sigma": sigma,
            "p": p,
            "p_norm": point.p_norm,
            "bound": bound,
        },
    )


def check_phi_floor(
    weight: WeightSpec, grid: QuadratureGrid, u: np.ndarray, sigma: float
) -> BoundReport:
    """min_x Phi_u(x) >= sigma ||u||_p^p under a global weight floor."""
    fld = phi(weight, grid, u)
    floor_val = sigma * grid.lp_norm(u, weight.p) ** weight.p
    margin = float(fld.values.min()) - floor_val
    return BoundReport(
        name="phi_floor",
        holds=margin >= -1e-8,
        margin=margin,
        context={"sigma": sigma, "floor": floor_val},
    )


def check_positivity(op: DiscreteOperator, u: np.ndarray) -> BoundReport:
    """u > 0 at every node and the rate c = (L0 u) / u positive with it."""
    u = np.asarray(u, dtype=float)
    sup = float(np.abs(u).max())
    if sup <= 1e-12:
        return BoundReport(
            name="positivity",
            holds=True,
            margin=math.nan,
            context={"note": "trivial solution"},
            applicable=False,
        )
    min_u = float(u.min())
    if min_u <= 0:
        return BoundReport(
            name="positivity",
            holds=False,
            margin=min_u,
            context={"min_u": min_u},
        )
    c = op.apply(u) / u
    min_c = float(c.min())
    return BoundReport(
        name="positivity",
        holds=min_c > 0,
        margin=min_u,
        context={"min_u": min_u, "min_c": min_c},
    )


def check_collatz_wielandt(
    op: DiscreteOperator, lambda1: float, u: np.ndarray
) -> BoundReport:
    """lambda1 <= sup_x (L0 u)(x) / u(x) for any positive u."""
    cw = collatz_wielandt_sup(op, u)
    margin = cw - lambda1
    return BoundReport(
        name="collatz_wielandt",
        holds=margin >= -1e-8,
        margin=margin,
        context={"sup_ratio": cw, "lambda1": lambda1},
    )


def check_subcritical_nonexistence(
    op: DiscreteOperator,
    weight: WeightSpec,
    lam: float,
    trials: int = 20,
    seed: int = 0,
    cfg: ContinuationConfig | None = None,
) -> BoundReport:
    """Multi-start search for positive solutions; holds if none is found.

    Newton and the damped rearrangement both run from each random
    positive start.  A find requires sup norm > 1e-6, strictly positive
    values, and residual <= 1e-9.  Calling this above lambda1 is the
    checker's own self-test: it must come back not holding.
    """
    if cfg is None:
        cfg = ContinuationConfig(lambda_max=max(2.0 * lam, 4.0))
    rng = np.random.default_rng(seed)
    n = op.grid.n
    tight = replace(cfg, newton_tol=1e-14, newton_max_iters=60)
    found_sup = 0.0
    for _ in range(trials):
        u0 = rng.uniform(0.05, 1.0, n)
        try:
            pt = newton_correct(op, weight, lam, u0, cfg)
            if (
                pt.sup_norm > 1e-6
                and pt.min_u > 0
                and pt.residual_norm <= 1e-9
            ):
                # at lambda = lambda1 the trivial root is degenerate and
                # Newton can stall at a small residual while the iterate
                # is still above the cut; polish before counting a find
                pt = newton_correct(op, weight, lam, pt.u, tight)
                if pt.sup_norm > 1e-6 and pt.min_u > 0:
                    found_sup = max(found_sup, pt.sup_norm)
        except ContinuationError:
            pass
        orc = oracle_fixed_point(op, weight, lam, u0)
        if orc.status == "converged":
            sup = float(np.abs(orc.u).max())
            if sup > 1e-6 and orc.u.min() > 0 and orc.residual <= 1e-9:
                found_sup = max(found_sup, sup)
    margin = 1e-6 - found_sup
    return BoundReport(
        name="subcritical_nonexistence",
        holds=found_sup == 0.0,
        margin=margin,
        context={"lambda": lam, "trials": trials, "max_sup_found": found_sup},
    )


def check_rate_nonexistence(
    op: DiscreteOperator,
    g: np.ndarray,
    lambda1: float,
    trials: int = 20,
    seed: int = 0,
) -> BoundReport:
    """No positive u solves L0 u = g u when g stays above lambda1.

    The problem is linear in u, so each start collapses in one Newton
    step onto the kernel of L0 - diag(g), generically {0}.  Applicable
    only when min g > lambda1 strictly.
    """
    g = np.asarray(g, dtype=float)
    margin = float(g.min()) - lambda1
    if margin <= 1e-12:
        return BoundReport(
            name="rate_nonexistence",
            holds=True,
            margin=margin,
            context={"note": "min g does not exceed lambda1 strictly"},
            applicable=False,
        )
    rng = np.random.default_rng(seed)
    n = op.grid.n
    jac = op.a - np.diag(g)
    found_sup = 0.0
    for _ in range(trials):
        u = rng.uniform(0.05, 1.0, n)
        for _ in range(50):
            r = op.apply(u) - g * u
            if np.abs(r).max() <= 1e-12 * max(1.0, np.abs(u).max()):
                break
            try:
                u = u + np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError:
                u = np.zeros(n)
                break
        sup = float(np.abs(u).max())
        if sup > 1e-6 and u.min() > 0:
            found_sup = max(found_sup, sup)
    return BoundReport(
        name="rate_nonexistence",
        holds=found_sup == 0.0,
        margin=margin,
        context={"min_g": float(g.min()), "max_sup_found": found_sup},
    )


def check_solvability_window(
    weight: WeightSpec,
    grid: QuadratureGrid,
    lambda1: float,
    lam: float | None = None,
) -> BoundReport:
    """Window (lambda1, lambda1 + lambda1 sigma / [Q]); informational.

    Membership of a particular lambda is recorded in the context; lying
    beyond the upper end is not a violation (the window is a sufficient
    condition), so the report always holds when computable.
    """
    floor = check_weight_floor(weight, grid, r=grid.domain.diameter)
    if not floor.q2pp:
        return BoundReport(
            name="solvability_window",
            holds=True,
            margin=math.nan,
            context={"note": "no global weight floor"},
            applicable=False,
        )
    lower, upper = window_bounds(
        lambda1, floor.sigma_global, oscillation(weight, grid)
    )
    ctx = {"lower": lower, "upper": upper, "sigma": floor.sigma_global}
    if lam is not None:
        ctx["lambda"] = lam
        ctx["inside"] = bool(lower < lam < upper)
    return BoundReport(
        name="solvability_window",
        holds=True,
        margin=upper - lower,
        context=ctx,
    )


def verify_branch(
    op: DiscreteOperator,
    weight: WeightSpec,
    lambda1: float,
    branch,
) -> list[BoundReport]:
    """Run every applicable checker over all points of a traced branch.

    Aggregated reports carry the worst margin over the branch; the
    solvability window is attached once, evaluated at the last point.
    """
    grid = op.grid
    reports: list[BoundReport] = []
    pts = branch.points

    adm = min((check_admissibility(pt) for pt in pts), key=lambda r: r.margin)
    reports.append(
        BoundReport(
            name="admissibility",
            holds=all(check_admissibility(pt).holds for pt in pts),
            margin=adm.margin,
            context=adm.context | {"points": len(pts)},
        )
    )

    pos = [check_positivity(op, pt.u) for pt in pts]
    applicable = [r for r in pos if r.applicable]
    if applicable:
        worst = min(applicable, key=lambda r: r.margin)
        reports.append(
            BoundReport(
                name="positivity",
                holds=all(r.holds for r in applicable),
                margin=worst.margin,
                context=worst.context | {"points": len(applicable)},
            )
        )

    # gate on the state itself, not the recorded scalar: loaded branches
    # may carry metadata that disagrees with the stored u
    cw = [check_collatz_wielandt(op, lambda1, pt.u) for pt in pts
          if float(np.asarray(pt.u).min()) > 0]
    if cw:
        worst = min(cw, key=lambda r: r.margin)
        reports.append(
            BoundReport(
                name="collatz_wielandt",
                holds=all(r.holds for r in cw),
                margin=worst.margin,
                context=worst.context | {"points": len(cw)},
            )
        )

    if branch.sigma > 0 and branch.m > 0:
        margins = [pt.lp_bound_margin for pt in pts]
        worst = float(np.nanmin(margins))
        reports.append(
            BoundReport(
                name="lp_covering_bound",
                holds=worst >= -1e-8,
                margin=worst,
                context={
                    "sigma": branch.sigma,
                    "r": branch.r,
                    "m": branch.m,
                    "points": len(pts),
                },
            )
        )

    floor = check_weight_floor(weight, grid, r=grid.domain.diameter)
    if floor.q2pp:
        floors = [
            check_phi_floor(weight, grid, pt.u, floor.sigma_global)
            for pt in pts
        ]
        worst = min(floors, key=lambda r: r.margin)
        reports.append(
            BoundReport(
                name="phi_floor",
                holds=all(r.holds for r in floors),
                margin=worst.margin,
                context=worst.context | {"points": len(floors)},
            )
        )

    reports.append(
        check_solvability_window(
            weight, grid, lambda1, lam=pts[-1].lam if pts else None
        )
    )
    return reports
