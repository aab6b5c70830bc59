"""Positive solution branches by pseudo-arclength continuation.

A branch of positive solutions of A u + Phi_u u = lambda u bifurcates from
the trivial state at lambda = lambda1, the principal eigenvalue.  The
tracer seeds itself just off that point with a Galerkin amplitude guess
(exact for constant-coefficient problems), corrects with damped Newton at
fixed lambda, then follows the branch with secant predictors and bordered
Newton correctors until lambda reaches ``lambda_max``, clamping the final
point exactly onto it.  Step length halves on corrector failure, doubles
after three fast successes, and stays inside [ds_min, ds_max].

Accepted points carry diagnostics: the admissibility value
gamma ||Phi_u||_inf (always < 1 on true solutions), the covering-based
a-priori margin (m lambda / sigma)^(1/p) - ||u||_p when a positive weight
floor sigma and a covering count m are available, Newton iteration counts,
and residual norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import QuadratureGrid, cover
from .logistic import ReactionError, jacobian, phi, residual
from .model import WeightSpec, check_weight_floor, oscillation
from .operator import DiscreteOperator, PrincipalEigenpair

__all__ = [
    "Branch",
    "BranchPoint",
    "ContinuationConfig",
    "ContinuationError",
    "PositivityLost",
    "StepFailure",
    "bifurcation_estimate",
    "newton_correct",
    "seed_branch",
    "solvability_window",
    "solve_at_lambda",
    "trace_branch",
    "window_bounds",
]


class ContinuationError(RuntimeError):
    pass


class StepFailure(ContinuationError):
    """Newton failed to converge within the configured iteration budget."""


class PositivityLost(ContinuationError):
    """Iterates cannot stay positive (p < 1 requires a positive branch)."""


@dataclass(frozen=True)
class ContinuationConfig:
    lambda_max: float = 3.0
    ds: float = 0.02
    ds_min: float = 1e-5
    ds_max: float = 0.1
    s0: float = 0.01
    newton_tol: float = 1e-10
    newton_max_iters: int = 25
    max_points: int = 5000

    def __post_init__(self):
        if not (0 < self.ds_min <= self.ds <= self.ds_max):
            raise ContinuationError(
                "need 0 < ds_min <= ds <= ds_max in the continuation config"
            )
        if self.s0 <= 0 or self.newton_tol <= 0 or self.newton_max_iters < 1:
            raise ContinuationError("invalid continuation config")


@dataclass(frozen=True, eq=False)
class BranchPoint:
    lam: float
    u: np.ndarray
    sup_norm: float
    p_norm: float
    min_u: float
    gamma_phi_sup: float
    lp_bound_margin: float
    newton_iters: int
    residual_norm: float


@dataclass(frozen=True, eq=False)
class Branch:
    points: tuple
    seed_lambda1: float
    termination: str
    fold_indices: tuple
    sigma: float
    r: float
    m: int
    p: float

    def lambdas(self) -> np.ndarray:
        return np.array([pt.lam for pt in self.points])

    def monotone_points(self) -> tuple:
        """Export filter: the lambda-increasing sub-path of the branch."""
        kept = []
        last = -math.inf
        for pt in self.points:
            if pt.lam > last:
                kept.append(pt)
                last = pt.lam
        return tuple(kept)


def _branch_point(op, weight, lam, u, iters, sigma, m) -> BranchPoint:
    grid = op.grid
    fld = phi(weight, grid, u)
    res_norm = float(np.abs(op.a @ u + fld.values * u - lam * u).max())
    p_norm = grid.lp_norm(u, weight.p)
    if sigma is not None and sigma > 0 and m is not None and lam > 0:
        margin = (m * lam / sigma) ** (1.0 / weight.p) - p_norm
    else:
        margin = math.nan
    return BranchPoint(
        lam=float(lam),
        u=np.asarray(u, dtype=float).copy(),
        sup_norm=float(np.abs(u).max()),
        p_norm=p_norm,
        min_u=float(u.min()),
        gamma_phi_sup=fld.sup_norm / lam if lam > 0 else math.inf,
        lp_bound_margin=margin,
        newton_iters=int(iters),
        residual_norm=res_norm,
    )


def _newton_fixed(op, weight, lam, u0, cfg):
    """Damped Newton at fixed lambda.  Returns (u, iters, converged).

    For p < 1 every iterate must stay strictly positive; the line search
    halves the step until it does and raises PositivityLost if it cannot.
    """
    enforce_positive = weight.p < 1
    u = np.asarray(u0, dtype=float).copy()
    r = residual(op, weight, lam, u)
    rn = float(np.abs(r).max())
    for it in range(cfg.newton_max_iters):
        if rn <= cfg.newton_tol * max(1.0, float(np.abs(u).max())):
            return u, it, True
        try:
            jac = jacobian(op, weight, lam, u)
            du = np.linalg.solve(jac, -r)
        except (np.linalg.LinAlgError, ReactionError):
            return u, it, False
        alpha = 1.0
        while True:
            trial = u + alpha * du
            if enforce_positive and trial.min() <= 1e-10:
                alpha *= 0.5
                if alpha < 1e-8:
                    raise PositivityLost(
                        "Newton step cannot keep the iterate positive "
                        "(p < 1 branch)"
                    )
                continue
            rt = residual(op, weight, lam, trial)
            rtn = float(np.abs(rt).max())
            if rtn <= (1.0 - 1e-4 * alpha) * rn or rtn <= cfg.newton_tol:
                break
            alpha *= 0.5
            if alpha < 1e-8:
                return u, it, False
        u, r, rn = trial, rt, rtn
    converged = rn <= cfg.newton_tol * max(1.0, float(np.abs(u).max()))
    return u, cfg.newton_max_iters, converged


def newton_correct(
    op: DiscreteOperator,
    weight: WeightSpec,
    lam: float,
    u0: np.ndarray,
    cfg: ContinuationConfig,
    sigma: float | None = None,
    m: int | None = None,
) -> BranchPoint:
    """Correct u0 to a solution at fixed lambda.

    Converging onto the trivial solution is a legitimate outcome (it is
    how nonexistence below the principal eigenvalue shows up); callers
    decide what to do with a vanishing sup norm.
    """
    u, iters, converged = _newton_fixed(op, weight, lam, u0, cfg)
    if not converged:
        raise StepFailure(
            f"Newton did not converge in {cfg.newton_max_iters} iterations "
            f"at lambda={lam}"
        )
    return _branch_point(op, weight, lam, u, iters, sigma, m)


def seed_branch(
    eigen: PrincipalEigenpair,
    weight: WeightSpec,
    grid: QuadratureGrid,
    s0: float,
) -> tuple[float, np.ndarray]:
    """Galerkin seed near the bifurcation point.

    u_guess = s0 phi1 and lambda_guess = lambda1 +
    <Phi_{u} u, phi1>_w / <u, phi1>_w, which is exact for constant
    kernel and weight.
    """
    if s0 <= 0:
        raise ContinuationError("seed amplitude s0 must be positive")
    u = s0 * eigen.phi1
    fld = phi(weight, grid, u)
    lam = eigen.lambda1 + grid.inner(fld.values * u, eigen.phi1) / grid.inner(
        u, eigen.phi1
    )
    return float(lam), u


def _corrector(op, weight, lam0, u0, t_u, t_lam, u_prev, lam_prev, ds, cfg):
    """Bordered Newton on (u, lambda) with the secant arclength constraint."""
    enforce_positive = weight.p < 1
    grid = op.grid
    n = grid.n
    u = u0.copy()
    lam = lam0

    def full_residual(u_, lam_):
        r = residual(op, weight, lam_, u_)
        cons = (
            grid.inner(t_u, u_ - u_prev) + t_lam * (lam_ - lam_prev) - ds
        )
        return r, cons

    r, cons = full_residual(u, lam)
    fn = max(float(np.abs(r).max()), abs(cons))
    for it in range(cfg.newton_max_iters):
        if fn <= cfg.newton_tol * max(1.0, float(np.abs(u).max())):
            return u, lam, it, True
        try:
            jac = jacobian(op, weight, lam, u)
        except ReactionError:
            return u, lam, it, False
        bordered = np.empty((n + 1, n + 1))
        bordered[:n, :n] = jac
        bordered[:n, n] = -u
        bordered[n, :n] = grid.weights * t_u
        bordered[n, n] = t_lam
        rhs = np.empty(n + 1)
        rhs[:n] = -r
        rhs[n] = -cons
        try:
            dv = np.linalg.solve(bordered, rhs)
        except np.linalg.LinAlgError:
            return u, lam, it, False
        alpha = 1.0
        while True:
            u_t = u + alpha * dv[:n]
            lam_t = lam + alpha * dv[n]
            if enforce_positive and u_t.min() <= 1e-10:
                alpha *= 0.5
                if alpha < 1e-8:
                    return u, lam, it, False
                continue
            rt, cons_t = full_residual(u_t, lam_t)
            ftn = max(float(np.abs(rt).max()), abs(cons_t))
            if ftn <= (1.0 - 1e-4 * alpha) * fn or ftn <= cfg.newton_tol:
                break
            alpha *= 0.5
            if alpha < 1e-8:
                return u, lam, it, False
        u, lam, r, cons, fn = u_t, lam_t, rt, cons_t, ftn
    ok = fn <= cfg.newton_tol * max(1.0, float(np.abs(u).max()))
    return u, lam, cfg.newton_max_iters, ok


def _bootstrap_first_point(op, weight, eigen, cfg, sigma, m):
    s = cfg.s0
    for _ in range(6):
        lam_g, u_g = seed_branch(eigen, weight, op.grid, s)
        try:
            pt = newton_correct(op, weight, lam_g, u_g, cfg, sigma, m)
        except ContinuationError:
            s *= 2.0
            continue
        if pt.sup_norm >= 0.05 * s and pt.min_u > 0:
            return pt
        s *= 2.0
    raise ContinuationError(
        "failed to leave the trivial solution near the bifurcation point"
    )


def trace_branch(
    op: DiscreteOperator,
    weight: WeightSpec,
    eigen: PrincipalEigenpair,
    cfg: ContinuationConfig,
    floor=None,
) -> Branch:
    """Trace the positive branch from (lambda1, 0) up to cfg.lambda_max."""
    grid = op.grid
    if cfg.lambda_max <= eigen.lambda1:
        raise ContinuationError(
            f"lambda_max={cfg.lambda_max} must exceed lambda1={eigen.lambda1}"
        )
    if floor is None:
        floor = check_weight_floor(weight, grid, r=grid.domain.diameter)
    sigma = floor.sigma_global if floor.q2pp else floor.sigma
    r_cov = floor.r
    if sigma > 0:
        m = cover(grid.domain, grid, r_cov).m
    else:
        sigma, m = None, None

    first = _bootstrap_first_point(op, weight, eigen, cfg, sigma, m)
    points = [first]
    folds: list[int] = []

    u_prev = np.zeros(grid.n)
    lam_prev = eigen.lambda1
    du = first.u - u_prev
    dlam = first.lam - lam_prev
    norm = math.sqrt(grid.inner(du, du) + dlam**2)
    t_u, t_lam = du / norm, dlam / norm

    ds = cfg.ds
    fast = 0
    termination = "step_failure"
    while len(points) < cfg.max_points:
        cur = points[-1]
        if cur.lam >= cfg.lambda_max - 1e-12:
            termination = "reached_lambda_max"
            break
        clamp = t_lam > 0 and cur.lam + ds * t_lam > cfg.lambda_max
        if clamp:
            u0 = cur.u + t_u * (cfg.lambda_max - cur.lam) / t_lam
            try:
                pt = newton_correct(
                    op, weight, cfg.lambda_max, u0, cfg, sigma, m
                )
                ok = pt.min_u > 0
            except ContinuationError:
                ok = False
        else:
            u_pred = cur.u + ds * t_u
            lam_pred = cur.lam + ds * t_lam
            u_new, lam_new, iters, ok = _corrector(
                op, weight, lam_pred, u_pred, t_u, t_lam, cur.u, cur.lam,
                ds, cfg,
            )
            if ok and (u_new.min() <= 0 or np.abs(u_new).max() <= 1e-10):
                ok = False
            if ok:
                pt = _branch_point(op, weight, lam_new, u_new, iters, sigma, m)
        if not ok:
            ds *= 0.5
            fast = 0
            if ds < cfg.ds_min:
                termination = "step_failure"
                break
            continue
        if pt.gamma_phi_sup >= 1.0:
            termination = "left_admissible_set"
            break
        du = pt.u - cur.u
        dlam = pt.lam - cur.lam
        norm = math.sqrt(grid.inner(du, du) + dlam**2)
        if norm == 0:
            termination = "step_failure"
            break
        t_u_new, t_lam_new = du / norm, dlam / norm
        if (
            abs(t_lam) > 1e-12
            and abs(t_lam_new) > 1e-12
            and math.copysign(1, t_lam_new) != math.copysign(1, t_lam)
        ):
            folds.append(len(points))
        t_u, t_lam = t_u_new, t_lam_new
        points.append(pt)
        if not clamp:
            fast = fast + 1 if pt.newton_iters <= 4 else 0
            if fast >= 3:
                ds = min(2.0 * ds, cfg.ds_max)
                fast = 0
    return Branch(
        points=tuple(points),
        seed_lambda1=eigen.lambda1,
        termination=termination,
        fold_indices=tuple(folds),
        sigma=sigma if sigma is not None else 0.0,
        r=r_cov,
        m=m if m is not None else 0,
        p=weight.p,
    )


def solve_at_lambda(
    op: DiscreteOperator,
    weight: WeightSpec,
    eigen: PrincipalEigenpair,
    lam: float,
    cfg: ContinuationConfig,
    u0: np.ndarray | None = None,
    floor=None,
) -> BranchPoint:
    """Solve at one fixed lambda.

    Above lambda1 the seed inverts the Galerkin amplitude relation; if the
    direct Newton solve collapses onto the trivial solution the routine
    falls back to a short branch trace clamped at lambda.  At or below
    lambda1 the Newton result (normally trivial) is returned as is.
    """
    grid = op.grid
    if u0 is not None:
        return newton_correct(op, weight, lam, np.asarray(u0, float), cfg)
    if lam <= eigen.lambda1:
        return newton_correct(op, weight, lam, cfg.s0 * eigen.phi1, cfg)
    fld = phi(weight, grid, eigen.phi1)
    kappa = grid.inner(fld.values * eigen.phi1, eigen.phi1) / grid.inner(
        eigen.phi1, eigen.phi1
    )
    if kappa <= 0:
        raise ContinuationError(
            "weight has no reaction at the principal eigenfunction"
        )
    amp = ((lam - eigen.lambda1) / kappa) ** (1.0 / weight.p)
    try:
        pt = newton_correct(op, weight, lam, amp * eigen.phi1, cfg)
        if pt.sup_norm >= 0.05 * amp and pt.min_u > 0:
            return pt
    except ContinuationError:
        pass
    branch = trace_branch(
        op, weight, eigen, replace(cfg, lambda_max=lam), floor=floor
    )
    if branch.termination != "reached_lambda_max":
        raise ContinuationError(
            f"could not continue the branch to lambda={lam} "
            f"({branch.termination})"
        )
    return branch.points[-1]


def window_bounds(lambda1: float, sigma: float, osc: float) -> tuple[float, float]:
    """Solvability window (lambda1, lambda1 + lambda1 sigma / [Q]).

    [Q] = 0 means the weight is x-independent and the window is unbounded.
    """
    if sigma <= 0:
        raise ContinuationError("window needs a positive weight floor sigma")
    if osc <= 1e-14:
        return lambda1, math.inf
    return lambda1, lambda1 + lambda1 * sigma / osc


def solvability_window(
    weight: WeightSpec, grid: QuadratureGrid, lambda1: float
) -> tuple[float, float]:
    floor = check_weight_floor(weight, grid, r=grid.domain.diameter)
    if not floor.q2pp:
        raise ContinuationError(
            "solvability window needs a global positive weight floor"
        )
    return window_bounds(lambda1, floor.sigma_global, oscillation(weight, grid))


def bifurcation_estimate(branch: Branch, p: float | None = None) -> float:
    """Recover the bifurcation value by extrapolating ||u||_inf -> 0.

    Fits lambda = b0 + b1 s^p + b2 s^(2p) through the three
    smallest-amplitude points and returns b0.
    """
    if p is None:
        p = branch.p
    pts = sorted(branch.points, key=lambda q: q.sup_norm)[:3]
    if len(pts) < 3:
        raise ContinuationError("need at least three branch points")
    s = np.array([q.sup_norm for q in pts])
    lam = np.array([q.lam for q in pts])
    vander = np.column_stack([np.ones(3), s**p, s ** (2 * p)])
    coef = np.linalg.solve(vander, lam)
    return float(coef[0])
