import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agnostic_control import (
    GridMismatch,
    PriorSpec,
    SystemSpec,
    TimeGrid,
    solve_alpha,
    solve_control_riccati,
    solve_estimation_riccati,
    solve_known_a_riccati,
)
from agnostic_control.numerics import integrate_fixed_step
from agnostic_control.riccati import bayesian_cost_to_go, cost_to_go_from_alpha

from conftest import random_spd
from oracles import control_riccati_scalar, estimation_cov_unit


def test_control_riccati_scalar_closed_form(ref_spec):
    grid = TimeGrid(0.0, 1.0, 1000)
    gain = solve_control_riccati(ref_spec, grid)
    s11, s12 = control_riccati_scalar(grid.nodes, 1.0)
    np.testing.assert_allclose(gain.s11[:, 0, 0], s11, atol=1e-11)
    np.testing.assert_allclose(gain.s12[:, 0, 0], s12, atol=1e-11)
    np.testing.assert_array_equal(gain.s[-1], 0.0)


def test_control_riccati_ignores_sensor_noise_and_prior():
    g = TimeGrid(0.0, 2.0, 400)
    s1 = solve_control_riccati(SystemSpec.scalar(sigma_v=0.3, t_final=2.0), g).s
    s2 = solve_control_riccati(SystemSpec.scalar(sigma_v=3.0, sigma_q0=0.0, t_final=2.0), g).s
    np.testing.assert_array_equal(s1, s2)


def test_control_riccati_blockwise_form():
    rng = np.random.default_rng(11)
    d = 2
    q, r = random_spd(rng, d), random_spd(rng, d)
    spec = SystemSpec.isotropic(d, t_final=1.5).replace(q_weight=q, r_weight=r)
    grid = TimeGrid(0.0, 1.5, 300)
    gain = solve_control_riccati(spec, grid)
    r_inv = np.linalg.inv(r)

    def blocks(t, y):
        # written per block, in reversed time
        s11, s12, s22 = y[:4].reshape(2, 2), y[4:8].reshape(2, 2), y[8:].reshape(2, 2)
        d11 = q - s11 @ r_inv @ s11
        d12 = s11 - s11 @ r_inv @ s12
        d22 = s12.T + s12 - s12.T @ r_inv @ s12
        return np.concatenate([d11.ravel(), d12.ravel(), d22.ravel()])

    ref = integrate_fixed_step(blocks, np.zeros(12), grid).values[::-1]
    np.testing.assert_allclose(gain.s11.reshape(-1, 4), ref[:, :4], atol=1e-11)
    np.testing.assert_allclose(gain.s12.reshape(-1, 4), ref[:, 4:8], atol=1e-11)
    np.testing.assert_allclose(gain.s22.reshape(-1, 4), ref[:, 8:], atol=1e-11)


@pytest.mark.parametrize("sigma_sq", [1.0, 10.0, 100.0])
def test_estimation_riccati_closed_form(sigma_sq):
    spec = SystemSpec.scalar(t_final=5.0)
    grid = TimeGrid(0.0, 5.0, 5000)
    cov = solve_estimation_riccati(spec, PriorSpec.isotropic(sigma_sq), grid)
    np.testing.assert_allclose(cov.p, estimation_cov_unit(grid.nodes, sigma_sq), atol=1e-9)


@pytest.mark.parametrize("sigma_q0,expected", [(1.0, lambda t: np.ones_like(t)), (0.0, np.tanh)])
def test_known_a_riccati_closed_form(sigma_q0, expected):
    spec = SystemSpec.scalar(sigma_q0=sigma_q0, t_final=2.0)
    grid = TimeGrid(0.0, 2.0, 400)
    cov = solve_known_a_riccati(spec, grid)
    np.testing.assert_allclose(cov.p11_star[:, 0, 0], expected(grid.nodes), atol=1e-10)


@given(seed=st.integers(0, 2**32 - 1))
def test_estimation_covariance_stays_psd(seed):
    rng = np.random.default_rng(seed)
    d = 2
    spec = SystemSpec.isotropic(d, t_final=2.0).replace(
        sigma_v=random_spd(rng, d), sigma_w=random_spd(rng, d), sigma_q0=random_spd(rng, d))
    prior = PriorSpec(10.0 * random_spd(rng, d))
    cov = solve_estimation_riccati(spec, prior, TimeGrid(0.0, 2.0, 400))
    np.testing.assert_array_equal(cov.p, np.swapaxes(cov.p, -1, -2))
    assert np.linalg.eigvalsh(cov.p).min() > -1e-10
    # learning never increases the drift uncertainty
    tr22 = np.trace(cov.p22, axis1=1, axis2=2)
    assert np.all(np.diff(tr22) <= 1e-12)


def test_cost_to_go_two_routes_agree():
    rng = np.random.default_rng(5)
    spec = SystemSpec.scalar(sigma_v=0.7, t_final=2.0)
    grid = TimeGrid(0.0, 2.0, 2000)
    gain = solve_control_riccati(spec, grid)
    cov = solve_estimation_riccati(spec, PriorSpec.isotropic(3.0), grid)
    gain = solve_alpha(gain, cov, spec)
    for t in (0.0, 0.5, 1.3, 2.0):
        x = rng.normal(size=2)
        a = bayesian_cost_to_go(x, t, gain, cov, spec)
        b = cost_to_go_from_alpha(x, t, gain, cov, spec)
        assert a == pytest.approx(b, rel=1e-8, abs=1e-10)


def test_grid_checks(ref_spec, unit_prior):
    with pytest.raises(GridMismatch):
        solve_control_riccati(ref_spec, TimeGrid(0.0, 2.0, 10))
    with pytest.raises(GridMismatch):
        solve_estimation_riccati(ref_spec, unit_prior, TimeGrid(0.5, 1.0, 10))
    g = TimeGrid(0.0, 1.0, 10)
    gain = solve_control_riccati(ref_spec, g)
    cov = solve_estimation_riccati(ref_spec, unit_prior, TimeGrid(0.0, 1.0, 20))
    with pytest.raises(GridMismatch):
        solve_alpha(gain, cov, ref_spec)
