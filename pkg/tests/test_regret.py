import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agnostic_control import (
    BadHorizon,
    CostQuadratic,
    DegenerateOptimal,
    PriorSpec,
    SystemSpec,
    TimeGrid,
    ar_limit,
    bayesian_cost,
    known_a_cost,
    mr_residual,
    mr_scan,
    regret_report,
    solve_constant_mr_prior,
    solve_constant_mr_prior_matrix,
    theorem1_bounds,
)


def _q(x, y):
    return CostQuadratic(np.atleast_2d(np.asarray(x, dtype=float)), float(y))


def test_report_on_hand_built_quadratics():
    rep = regret_report(_q(3.0, 2.0), _q(1.0, 1.0))
    assert rep.mr_at_zero == 2.0
    np.testing.assert_allclose(rep.mr_at_infinity, [3.0])
    assert rep.worst_case_mr == 3.0
    assert rep.mr(1.0) == pytest.approx(5.0 / 2.0)
    assert rep.ar(2.0) == pytest.approx(14.0 - 5.0)


@given(x=st.floats(0.1, 10), y=st.floats(0.1, 10), xs=st.floats(0.1, 10), ys=st.floats(0.1, 10))
def test_worst_case_matches_dense_scan(x, y, xs, ys):
    rep = regret_report(_q(x, y), _q(xs, ys))
    scan = mr_scan(rep, np.arange(-50.0, 50.0 + 1e-9, 0.01))
    assert rep.worst_case_mr >= scan.max() - 1e-12
    # the supremum may only be reached as |a| -> infinity
    tail = rep.mr(1e8)
    assert rep.worst_case_mr == pytest.approx(max(scan.max(), tail), abs=1e-6)


def test_worst_case_from_pipeline_against_scan(ref_spec, unit_prior):
    grid = TimeGrid(0.0, 1.0, 1000)
    rep = regret_report(bayesian_cost(ref_spec, unit_prior, grid), known_a_cost(ref_spec, grid))
    scan = mr_scan(rep, np.arange(-50.0, 50.0 + 1e-9, 0.01))
    assert np.all(scan >= 1.0)
    assert abs(rep.worst_case_mr - scan.max()) <= 1e-3  # the sup sits at |a| = infinity
    assert rep.worst_case_mr >= scan.max()


def test_degenerate_optimal_detected():
    with pytest.raises(DegenerateOptimal):
        regret_report(_q(1.0, 1.0), _q(1.0, 0.0))
    with pytest.raises(DegenerateOptimal):
        regret_report(_q(np.eye(2), 1.0), _q(np.diag([1.0, -1.0]), 1.0))


def test_bounds_against_monte_carlo_prior_average(ref_spec):
    prior = PriorSpec.isotropic(2.0)
    grid = TimeGrid(0.0, 1.0, 1000)
    b, s = bayesian_cost(ref_spec, prior, grid), known_a_cost(ref_spec, grid)
    bounds = theorem1_bounds(b, s, prior)
    a = np.random.default_rng(0).normal(scale=np.sqrt(2.0), size=200_000)
    ar = (b.x_mat[0, 0] - s.x_mat[0, 0]) * a**2 + b.y_scalar - s.y_scalar
    assert bounds.ar_lower == pytest.approx(ar.mean(), rel=1e-2)
    assert bounds.ar_upper == np.inf
    assert 1.0 <= bounds.mr_lower <= bounds.mr_upper


def test_bounds_collapse_for_point_prior():
    spec = SystemSpec.scalar(t_final=1.0)
    grid = TimeGrid(0.0, 1.0, 500)
    prior = PriorSpec(np.zeros((1, 1)))
    b, s = bayesian_cost(spec, prior, grid), known_a_cost(spec, grid)
    bounds = theorem1_bounds(b, s, prior)
    # a = 0 is the only drift the prior allows, where the Bayesian filter is exact
    assert bounds.ar_lower == pytest.approx(0.0, abs=1e-10)
    assert bounds.mr_lower == pytest.approx(1.0, abs=1e-10)


def test_residual_signs_around_root():
    spec = SystemSpec.scalar(t_final=3.5)
    grid = TimeGrid.for_spec(spec, steps_per_unit=500, min_steps=400)
    # with no prior spread X is large relative to the a-free part
    assert mr_residual(PriorSpec(np.zeros((1, 1))), spec, grid)[0, 0] > 0
    assert mr_residual(PriorSpec.isotropic(1e4), spec, grid)[0, 0] < 0


def test_residual_isotropic_in_two_dims():
    spec = SystemSpec.isotropic(2, t_final=2.0)
    grid = TimeGrid(0.0, 2.0, 800)
    r = mr_residual(PriorSpec.isotropic(3.0, 2), spec, grid)
    np.testing.assert_allclose(r, r[0, 0] * np.eye(2), atol=1e-13)


@pytest.mark.parametrize("t_final", [0.5, 3.5, 12.0])
def test_constant_mr_prior_flattens_regret(t_final):
    spec = SystemSpec.scalar(t_final=t_final)
    grid = TimeGrid.for_spec(spec, steps_per_unit=500, min_steps=400)
    sol = solve_constant_mr_prior(spec, grid)
    assert sol.residual <= 1e-8 * max(1.0, abs(sol.report.star.x_mat).max())
    scan = mr_scan(sol.report, np.linspace(-20, 20, 401))
    assert np.ptp(scan) <= 1e-7 * scan.mean()
    assert scan.min() >= 1.0


def test_matrix_solve_agrees_with_isotropic_solve():
    spec = SystemSpec.isotropic(2, t_final=2.0)
    grid = TimeGrid(0.0, 2.0, 800)
    iso = solve_constant_mr_prior(spec, grid)
    full = solve_constant_mr_prior_matrix(spec, grid, PriorSpec(np.diag([1.0, 2.0])))
    np.testing.assert_allclose(full.prior.sigma_prior, iso.sigma**2 * np.eye(2), rtol=1e-6,
                               atol=1e-8)


def test_isotropic_solver_rejects_anisotropic_system():
    spec = SystemSpec.isotropic(2).replace(sigma_v=np.diag([1.0, 2.0]))
    with pytest.raises(ValueError):
        solve_constant_mr_prior(spec, TimeGrid(0.0, 1.0, 100))


def test_flat_prior_limit():
    spec = SystemSpec.scalar(t_final=1.0, t0=0.1)
    grid = TimeGrid.for_spec(spec, steps_per_unit=2000, min_steps=400)
    rep = ar_limit(spec, grid)
    assert rep.y_gap > 0
    assert np.all(rep.decay_ratios >= 10.0)
    assert np.linalg.norm(rep.x_gap, 2) <= 1e-3 * rep.x_star_norm
    assert [r.sigma_sq for r in rep.table] == [1e2, 1e4, 1e6]


def test_flat_prior_limit_guards():
    grid = TimeGrid(0.0, 1.0, 100)
    with pytest.raises(BadHorizon):
        ar_limit(SystemSpec.scalar(t_final=1.0), grid)
    with pytest.raises(ValueError):
        ar_limit(SystemSpec.scalar(t_final=1.0, t0=0.1), grid, sigma_schedule=(1e4, 1e2))


def test_flat_prior_limit_flags_unconverged_y_gap():
    grid = TimeGrid(0.0, 10.0, 5000)
    late = ar_limit(SystemSpec.scalar(t_final=10.0, t0=1.0), grid)
    early = ar_limit(SystemSpec.scalar(t_final=10.0, t0=0.01), grid)
    assert late.y_gap_change < 1e-3
    # with t0 = 0.01 the data barely outweigh a prior of variance 1e6
    assert early.y_gap_change > 0.5
