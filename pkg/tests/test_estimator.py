import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agnostic_control import (
    DimensionMismatch,
    GridMismatch,
    SystemSpec,
    TimeGrid,
    build_kernel,
    estimate_state,
    solve_weights,
)
from agnostic_control.estimator import kernel_value
from agnostic_control.numerics import Trajectory

from oracles import gls_drift, sampled_kalman_drift, simulate_uncontrolled


def _path(weights, values):
    values = np.asarray(values, dtype=float)
    return Trajectory(weights.grid, values.reshape(len(weights.grid), -1))


def test_kernel_symmetric_and_psd():
    spec = SystemSpec.isotropic(2).replace(sigma_w=np.array([[1.0, 0.4], [0.4, 0.8]]))
    k = build_kernel(spec, 2.0, 60).assembled()
    np.testing.assert_allclose(k, k.T, atol=1e-14)
    # the -s^2 tau^2 / 4T term makes K indefinite in general, but not by much
    assert np.linalg.eigvalsh(k).min() > -0.1


def test_kernel_without_process_noise():
    spec = SystemSpec.scalar(sigma_w=0.0)
    s, tau = np.meshgrid(np.linspace(0.1, 1, 5), np.linspace(0.1, 1, 5))
    np.testing.assert_allclose(kernel_value(spec, 1.0, s, tau)[..., 0, 0], np.minimum(s, tau))


@pytest.mark.parametrize("horizon", [0.3, 1.0, 4.0])
def test_integral_constraint_holds(horizon):
    w = solve_weights(SystemSpec.scalar(), horizon, 200)
    assert w.constraint_residual() <= 1e-12


def test_weights_converge_under_refinement():
    spec = SystemSpec.scalar()
    coarse, fine = solve_weights(spec, 1.0, 200), solve_weights(spec, 1.0, 400)
    np.testing.assert_allclose(fine.omega0[::2], coarse.omega0, atol=1e-4)
    np.testing.assert_allclose(fine.gamma, coarse.gamma, rtol=1e-5)


@given(a=st.floats(-20, 20), horizon=st.sampled_from([0.5, 1.0, 3.0]))
def test_noise_free_mean_path_recovered(a, horizon):
    w = solve_weights(SystemSpec.scalar(), horizon, 400)
    t = w.grid.nodes
    a_hat, q_hat = estimate_state(_path(w, a * t**2 / 2), w)
    assert a_hat[0] == pytest.approx(a, abs=1e-3 * max(1.0, abs(a)))
    assert q_hat[0] == pytest.approx(horizon * a_hat[0], rel=1e-15)


def test_mean_path_recovered_in_two_dims():
    spec = SystemSpec.isotropic(2).replace(sigma_v=np.array([[1.0, 0.3], [0.3, 0.5]]))
    w = solve_weights(spec, 1.5, 300)
    a = np.array([2.0, -1.0])
    y = np.outer(w.grid.nodes**2 / 2, a)
    a_hat, _ = estimate_state(_path(w, y), w)
    np.testing.assert_allclose(a_hat, a, atol=1e-3)


def test_zero_observations_give_zero():
    w = solve_weights(SystemSpec.scalar(), 1.0, 50)
    a_hat, q_hat = estimate_state(_path(w, np.zeros(51)), w)
    assert a_hat[0] == 0.0 and q_hat[0] == 0.0


@given(seed=st.integers(0, 2**31))
def test_linear_in_observations(seed):
    rng = np.random.default_rng(seed)
    w = solve_weights(SystemSpec.scalar(), 1.0, 80)
    y1, y2 = rng.normal(size=(2, 81))
    c = rng.normal()
    lhs = estimate_state(_path(w, y1 + c * y2), w)[0]
    rhs = estimate_state(_path(w, y1), w)[0] + c * estimate_state(_path(w, y2), w)[0]
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


def test_matches_generalized_least_squares():
    rng = np.random.default_rng(3)
    w = solve_weights(SystemSpec.scalar(), 1.0, 400)
    for _ in range(5):
        _, y = simulate_uncontrolled(rng, 1.3, 400, 1.0)
        ours = estimate_state(_path(w, y), w)[0][0]
        assert ours == pytest.approx(gls_drift(y, w.grid.nodes), abs=2e-5)


def test_matches_kalman_filter_with_flat_prior():
    rng = np.random.default_rng(11)
    n_fine, stride = 10_000, 25
    w = solve_weights(SystemSpec.scalar(), 1.0, n_fine // stride)
    diffs = []
    for a in np.linspace(-3, 3, 100):
        _, y = simulate_uncontrolled(rng, a, n_fine, 1.0)
        kf = sampled_kalman_drift(y, 1.0 / n_fine, 1.0, 1.0, 1e6)
        ours = estimate_state(_path(w, y[::stride]), w)[0][0]
        diffs.append(ours - kf)
    assert np.max(np.abs(diffs)) <= 1e-2


def test_unbiased_over_noise():
    rng = np.random.default_rng(5)
    w = solve_weights(SystemSpec.scalar(), 2.0, 200)
    est = []
    for _ in range(2000):
        _, y = simulate_uncontrolled(rng, 0.7, 200, 2.0)
        est.append(estimate_state(_path(w, y), w)[0][0])
    est = np.array(est)
    assert abs(est.mean() - 0.7) < 4 * est.std() / np.sqrt(len(est))


def test_input_validation():
    w = solve_weights(SystemSpec.scalar(), 1.0, 20)
    with pytest.raises(GridMismatch):
        estimate_state(Trajectory(TimeGrid(0.0, 1.0, 10), np.zeros((11, 1))), w)
    with pytest.raises(DimensionMismatch):
        estimate_state(Trajectory(w.grid, np.zeros((21, 2))), w)
    with pytest.raises(ValueError):
        solve_weights(SystemSpec.scalar(), 0.0, 20)
    with pytest.raises(ValueError):
        build_kernel(SystemSpec.scalar(), 1.0, 1)
