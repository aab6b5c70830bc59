"""Independent oracles and the per-bound checkers."""

import math

import numpy as np
import pytest

from dispersal import (
    BranchPoint,
    ContinuationConfig,
    KernelSpec,
    VerificationError,
    WeightSpec,
    assemble,
    check_admissibility,
    check_collatz_wielandt,
    check_covering_bound,
    check_phi_floor,
    check_positivity,
    check_rate_nonexistence,
    check_solvability_window,
    check_subcritical_nonexistence,
    cover,
    oracle_fixed_point,
    oracle_spectral,
    pencil_eigenvalue,
    principal_eigenpair,
    solve_at_lambda,
    trace_branch,
    verify_branch,
)

from .conftest import UNIT, const_weight, unit_grid


def _point(lam, u, grid, weight):
    from dispersal import phi

    u = np.asarray(u, dtype=float)
    fld = phi(weight, grid, u)
    return BranchPoint(
        lam=lam,
        u=u,
        sup_norm=float(np.abs(u).max()),
        p_norm=grid.lp_norm(u, weight.p),
        min_u=float(u.min()),
        gamma_phi_sup=fld.sup_norm / lam,
        lp_bound_margin=math.nan,
        newton_iters=0,
        residual_norm=0.0,
    )


def test_fixed_point_oracle_stationary_at_solution(const_op):
    """u = 1 is an exact fixed point of the rearrangement at lambda = 2."""
    res = oracle_fixed_point(
        const_op, const_weight(), 2.0, np.ones(const_op.n)
    )
    assert res.status == "converged"
    np.testing.assert_allclose(res.u, 1.0, atol=1e-10)
    assert res.residual < 1e-10


def test_fixed_point_oracle_drains_from_off_solution_starts(const_op):
    """Started below the solution the iteration contracts to the trivial
    state: the positive solution is unstable for this map."""
    res = oracle_fixed_point(
        const_op, const_weight(), 2.0, np.full(const_op.n, 0.5)
    )
    assert res.status == "converged"
    assert np.abs(res.u).max() < 1e-8


def test_fixed_point_oracle_subcritical_inconclusive(const_op):
    """Below lambda1 small starts drift toward the admissibility wall
    and the oracle reports that honestly instead of inventing a root."""
    res = oracle_fixed_point(
        const_op, const_weight(), 0.9, np.full(const_op.n, 0.05)
    )
    assert res.status in ("inadmissible", "not_converged")


def test_fixed_point_oracle_validates_inputs(const_op):
    with pytest.raises(VerificationError):
        oracle_fixed_point(
            const_op, const_weight(), 2.0, np.zeros(const_op.n)
        )
    with pytest.raises(VerificationError):
        oracle_fixed_point(
            const_op, const_weight(), 2.0, np.ones(const_op.n),
            relaxation=1.5,
        )


def test_pencil_reduces_to_plain_eigenproblem(const_op, const_eigen):
    lam = 2.0
    nu, u = pencil_eigenvalue(const_op, np.full(const_op.n, lam))
    assert abs(nu - const_eigen.lambda1 / lam) < 1e-12
    np.testing.assert_allclose(u, const_eigen.phi1, atol=1e-10)


def test_pencil_is_one_at_solution(const_op):
    # at the solution u = 1, lambda - Phi_u = 1 and S phi = 1 * 1 * phi
    nu, _ = pencil_eigenvalue(const_op, np.ones(const_op.n))
    assert abs(nu - 1.0) < 1e-10


def test_spectral_oracle_constant_closed_form(const_op):
    res = oracle_spectral(const_op, const_weight(p=1.0), 2.0)
    assert res.status == "converged"
    np.testing.assert_allclose(res.u, 1.0, atol=1e-10)

    res2 = oracle_spectral(const_op, const_weight(p=2.0), 5.0)
    assert res2.status == "converged"
    np.testing.assert_allclose(res2.u, 2.0, atol=1e-9)


def test_spectral_oracle_certifies_nonexistence(const_op):
    for lam in (0.5, 1.0):
        res = oracle_spectral(const_op, const_weight(), lam)
        assert res.status == "no_positive_solution"


def test_spectral_oracle_matches_newton_gaussian():
    grid = unit_grid("trapezoid", 65)
    op = assemble(KernelSpec.gaussian(1.0), grid)
    eigen = principal_eigenpair(op)
    cfg = ContinuationConfig(lambda_max=3.0)
    pt = solve_at_lambda(op, const_weight(), eigen, 2.0, cfg)
    res = oracle_spectral(op, const_weight(), 2.0)
    assert res.status == "converged"
    assert np.abs(res.u - pt.u).max() <= 1e-8


def test_admissibility_margin(const_op, const_eigen):
    cfg = ContinuationConfig()
    pt = solve_at_lambda(const_op, const_weight(), const_eigen, 2.0, cfg)
    rep = check_admissibility(pt)
    assert rep.holds
    assert abs(rep.margin - 0.5) < 1e-10

    bad = _point(2.0, np.full(const_op.n, 3.0), const_op.grid, const_weight())
    assert not check_admissibility(bad).holds


def test_covering_bound_constant_solution(const_op):
    grid = const_op.grid
    c = cover(UNIT, grid, grid.domain.diameter)
    pt = _point(2.0, np.ones(const_op.n), grid, const_weight())
    rep = check_covering_bound(pt, c, sigma=1.0, p=1.0)
    assert rep.holds
    assert abs(rep.margin - 1.0) < 1e-10  # bound 2, ||u||_1 = 1

    trivial = _point(2.0, np.zeros(const_op.n), grid, const_weight())
    rep0 = check_covering_bound(trivial, c, sigma=1.0, p=1.0)
    assert rep0.holds and abs(rep0.margin - 2.0) < 1e-12

    with pytest.raises(VerificationError):
        check_covering_bound(pt, c, sigma=0.0, p=1.0)


def test_phi_floor_margins(grid65, rng):
    u = rng.uniform(0.1, 1.0, grid65.n)
    rep = check_phi_floor(const_weight(), grid65, u, sigma=1.0)
    assert rep.holds
    assert abs(rep.margin) < 1e-12  # Q = 1 attains its floor exactly

    w2 = WeightSpec.constant(2.0, p=1.0)
    rep2 = check_phi_floor(w2, grid65, u, sigma=1.0)
    assert rep2.holds
    assert abs(rep2.margin - grid65.lp_norm(u, 1.0)) < 1e-12


def test_positivity_checker(const_op):
    assert check_positivity(const_op, np.ones(const_op.n)).holds

    trivial = check_positivity(const_op, np.zeros(const_op.n))
    assert trivial.holds and not trivial.applicable

    u = np.ones(const_op.n)
    u[5] = -0.2
    assert not check_positivity(const_op, u).holds


def test_collatz_wielandt_checker(const_op, const_eigen, rng):
    rep = check_collatz_wielandt(const_op, const_eigen.lambda1, const_eigen.phi1)
    assert rep.holds and abs(rep.margin) < 1e-9
    for _ in range(5):
        u = rng.uniform(0.1, 2.0, const_op.n)
        assert check_collatz_wielandt(const_op, const_eigen.lambda1, u).holds


def test_subcritical_nonexistence_holds_below(const_op):
    for lam in (0.5, 1.0):
        rep = check_subcritical_nonexistence(
            const_op, const_weight(), lam, trials=20
        )
        assert rep.holds
        assert rep.context["max_sup_found"] == 0.0


def test_subcritical_checker_self_test_above(const_op):
    """Above lambda1 the same search must find the positive solution;
    anything else would mean the checker cannot see solutions at all."""
    rep = check_subcritical_nonexistence(
        const_op, const_weight(), 1.5, trials=5
    )
    assert not rep.holds
    assert rep.context["max_sup_found"] > 0.4


def test_rate_nonexistence(const_op, const_eigen):
    n = const_op.n
    lam1 = const_eigen.lambda1
    rep = check_rate_nonexistence(const_op, np.full(n, lam1 + 0.5), lam1)
    assert rep.holds and rep.applicable

    at = check_rate_nonexistence(const_op, np.full(n, lam1), lam1)
    assert at.holds and not at.applicable
    below = check_rate_nonexistence(const_op, np.full(n, lam1 - 0.5), lam1)
    assert below.holds and not below.applicable


def test_solvability_window_reports(grid65):
    rep = check_solvability_window(const_weight(), grid65, 1.0, lam=2.0)
    assert rep.holds
    assert rep.context["upper"] == math.inf
    assert rep.context["inside"]

    w = WeightSpec.separable(g=(0.0, 1.0), h=(1.0,), p=1.0)
    rep2 = check_solvability_window(w, grid65, 1.0)
    assert not rep2.applicable


def test_verify_branch_all_hold(const_op, const_eigen):
    cfg = ContinuationConfig(lambda_max=2.5)
    branch = trace_branch(const_op, const_weight(), const_eigen, cfg)
    reports = verify_branch(const_op, const_weight(), const_eigen.lambda1, branch)
    names = [r.name for r in reports]
    for expected in (
        "admissibility",
        "positivity",
        "collatz_wielandt",
        "lp_covering_bound",
        "phi_floor",
        "solvability_window",
    ):
        assert expected in names
    assert all(r.holds for r in reports)
