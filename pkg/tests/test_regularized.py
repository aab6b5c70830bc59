"""Regularized weight family, its margin bound, and the limit run."""

import numpy as np
import pytest

from dispersal import (
    ContinuationConfig,
    Domain,
    KernelSpec,
    RegularizedError,
    WeightSpec,
    assemble,
    build_a_eps,
    build_grid,
    limit_procedure,
    multi_point_profile,
    near_center_mass_bound,
    phi,
    solve_regularized,
    theta_margin,
    weight_matrix,
)

from .conftest import const_weight, dip_weight, unit_grid


def _op129():
    grid = build_grid(Domain((0.0,), (1.0,)), "trapezoid", 129)
    return assemble(KernelSpec.constant(1.0), grid)


def test_theta_margin_values():
    assert theta_margin(1.0, 1.5) == 0.5
    assert theta_margin(1.0, 3.0) == 1.0


def test_solve_regularized_frozen_point():
    """Constant weight, p = 2, eps = 1/4, lambda = 2, center 1/2: the
    regularized solution exists, is positive, and is far from constant."""
    op = _op129()
    cfg = ContinuationConfig(lambda_max=3.0)
    rs = solve_regularized(
        op, const_weight(p=2.0), 2.0, 0.25, cfg, x0_index=64
    )
    u = rs.point.u
    assert abs(float(np.abs(u).max()) - 1.6556155231407552) < 1e-8
    assert u.min() > 0
    assert float(np.abs(u).max()) - float(u.min()) > 0.5
    assert rs.point.residual_norm < 1e-9
    assert rs.margin_min >= -1e-8


def test_regularized_reaction_dominates_plain():
    op = _op129()
    grid = op.grid
    cfg = ContinuationConfig(lambda_max=3.0)
    rs = solve_regularized(op, const_weight(), 2.0, 0.5, cfg, x0_index=64)
    plain = phi(const_weight(), grid, rs.point.u).values
    reg = phi(rs.weight_eps, grid, rs.point.u).values
    assert (reg >= plain - 1e-12).all()


def test_solve_regularized_needs_supercritical_lambda():
    op = _op129()
    cfg = ContinuationConfig(lambda_max=3.0)
    with pytest.raises(RegularizedError):
        solve_regularized(op, const_weight(), 0.9, 0.5, cfg, x0_index=64)


def test_limit_procedure_validates_inputs():
    op = _op129()
    cfg = ContinuationConfig(lambda_max=3.0)
    with pytest.raises(RegularizedError):
        limit_procedure(op, const_weight(p=2.0), 2.0, (2, 4), cfg)
    with pytest.raises(RegularizedError):
        limit_procedure(op, const_weight(), 2.0, (8, 4), cfg)
    with pytest.raises(RegularizedError):
        limit_procedure(op, const_weight(), 2.0, (8,), cfg)
    with pytest.raises(RegularizedError):
        limit_procedure(op, const_weight(), 2.0, (4, 8), cfg, method="spline")


def test_limit_procedure_constant_weight_clean():
    """x-independent weight in the interior of the window: margins, tail
    contraction, near-center mass, and the modulus bound all hold, and
    the field extrapolant recovers the direct solution to grid accuracy."""
    op = _op129()
    cfg = ContinuationConfig(lambda_max=3.0)
    run = limit_procedure(
        op, const_weight(), 1.5, (4, 8, 16, 32, 64), cfg,
        method="fields", x0_index=64,
    )
    assert run.margins_ok
    assert run.gaps_contracting
    assert run.near_mass_ok
    assert run.modulus_ok
    assert np.abs(run.limit - 0.5).max() <= 2e-2

    rich = limit_procedure(
        op, const_weight(), 1.5, (4, 8, 16, 32, 64), cfg,
        method="richardson", x0_index=64,
    )
    # the one-step extrapolant keeps the doubled-row defect at the center
    assert run.limit_residual <= rich.limit_residual


def test_limit_procedure_theta_and_bookkeeping():
    op = _op129()
    cfg = ContinuationConfig(lambda_max=3.0)
    run = limit_procedure(
        op, const_weight(), 1.5, (4, 8, 16), cfg, x0_index=64
    )
    assert abs(run.theta - 0.5) < 1e-10
    assert run.n_values == (4, 8, 16)
    assert run.eps_sequence == (0.25, 0.125, 0.0625)
    assert len(run.solutions) == 3
    assert len(run.cauchy_gaps) == 2
    assert run.method == "richardson"


def test_limit_procedure_dip_concentration():
    """x-dependent weight at lambda = 2 lambda1: every per-n certificate
    holds and the tail contracts, but the mass bound near the center
    breaks and no extrapolant solves the un-regularized equation."""
    op = _op129()
    cfg = ContinuationConfig(lambda_max=3.0)
    run = limit_procedure(
        op, dip_weight(p=2.0), 2.0, (4, 8, 16, 32, 64), cfg, strict=False
    )
    assert run.x0_index == 64
    assert run.margins_ok
    gaps = run.cauchy_gaps
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert not run.near_mass_ok
    assert run.limit_residual > 1e-4

    with pytest.raises(RegularizedError):
        limit_procedure(
            op, dip_weight(p=2.0), 2.0, (4, 8, 16, 32, 64), cfg, strict=True
        )


def test_multi_point_profile_single_center_reduces():
    grid = unit_grid("trapezoid", 65)
    w = dip_weight()
    a_multi, _ = multi_point_profile(w, grid, 0.4)
    a_single = build_a_eps(w, grid, np.array([0.5]), 0.4)
    np.testing.assert_allclose(a_multi, a_single, atol=1e-14)


def test_multi_point_profile_two_centers():
    grid = unit_grid("trapezoid", 5)
    w = WeightSpec.polynomial_dip(
        h=(1.0,), g=(0.0,), points=(0.25, 0.75), exponents=(0.4, 0.4),
        level=2.0, p=1.0,
    )
    a, weps = multi_point_profile(w, grid, 0.5)
    x = grid.nodes[:, 0]
    i_mid = int(np.argmin(np.abs(x - 0.5)))
    assert abs(a[i_mid] - 0.25) < 1e-14  # (0.25 * 0.25)^(1/2)
    for pt in (0.25, 0.75):
        j = int(np.argmin(np.abs(x - pt)))
        assert a[j] == 0.0
    q = weight_matrix(w, grid)
    qe = weight_matrix(weps, grid)
    assert (qe >= q - 1e-12).all() and (qe <= 2 * q + 1e-12).all()


def test_multi_point_profile_rejects_off_grid_point():
    grid = unit_grid("trapezoid", 5)
    w = dip_weight()
    with pytest.raises(RegularizedError):
        multi_point_profile(w, grid, 0.5, points=((0.3,),))


def test_multi_point_profile_rejects_undominated_cells():
    grid = unit_grid("trapezoid", 5)
    # Q(x, y) = x is maximized at the right edge, not at the dip points
    w = WeightSpec.separable(g=(0.0, 1.0), h=(1.0,), p=1.0)
    with pytest.raises(RegularizedError):
        multi_point_profile(w, grid, 0.5, points=((0.25,), (0.75,)))


def test_multi_point_profile_eps_gate():
    grid = unit_grid("trapezoid", 5)
    with pytest.raises(RegularizedError):
        multi_point_profile(dip_weight(p=2.0), grid, 0.3)


def test_near_center_mass_bound_value():
    val = near_center_mass_bound(
        sup_dispersal=1.0, theta=0.5, p=1.0, eps=0.5, radius=0.5, dim=1
    )
    assert abs(val - 4.0 * np.sqrt(2.0)) < 1e-14


def test_near_center_mass_bound_gates():
    with pytest.raises(RegularizedError):
        near_center_mass_bound(1.0, 0.5, 1.0, 0.5, 1.5, 1)
    with pytest.raises(RegularizedError):
        near_center_mass_bound(1.0, 0.5, 2.0, 0.5, 0.5, 1)
