"""Closed-loop means and covariances, and the cost quadratics they induce.

Under u = -R^-1 (S11 q_hat + S12 a_hat) the triple z = (q, q_hat, a_hat) obeys
a linear SDE dz = (A z + B a) dt + noise with

    A = [[ 0,    -K,       -L   ],        K = R^-1 S11,  L = R^-1 S12
         [ Gq, -K - Gq,   I - L ],        Gq = P11 Sv^-1
         [ Ga,   -Ga,       0   ]]        Ga = P12^T Sv^-1

and B = [I; 0; 0]. Means are linear in the drift, E z = C a, so
C' = A C + B, and the covariance obeys S' = A S + S A^T + N with
N = blockdiag(Sw, [P11; P12^T] Sv^-1 [P11, P12]). Before the control start
t0 the control terms K and L are switched off.

With the known drift the estimator collapses to (q, q_hat*) with gain
P*11 Sv^-1 and the drift enters through B* = [I - L; I - L].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch
from .model import PriorSpec, SystemSpec, TimeGrid
from .numerics import linear_moments_rk4, stage_table, trapezoid
from .riccati import ControlGain, EstimationCov, KnownACov


@dataclass(frozen=True, eq=False)
class MomentState:
    """Means ``E z = mean @ a`` and covariance of z = (q, q_hat, a_hat) on a grid.

    For the known-drift controller the a_hat block is the drift itself:
    ``c3`` is the identity and every a_hat covariance is zero.
    """

    grid: TimeGrid
    mean: np.ndarray  # (n+1, 3d, d)
    cov: np.ndarray  # (n+1, 3d, 3d)
    known_a: bool = False

    @property
    def d(self) -> int:
        return self.mean.shape[-1]

    def _m(self, i):
        d = self.d
        return self.mean[:, i * d : (i + 1) * d, :]

    def _s(self, i, j):
        d = self.d
        return self.cov[:, i * d : (i + 1) * d, j * d : (j + 1) * d]

    c1 = property(lambda self: self._m(0))
    c2 = property(lambda self: self._m(1))
    c3 = property(lambda self: self._m(2))
    cov_qq = property(lambda self: self._s(0, 0))
    cov_qqh = property(lambda self: self._s(0, 1))
    cov_qah = property(lambda self: self._s(0, 2))
    cov_qhqh = property(lambda self: self._s(1, 1))
    cov_qhah = property(lambda self: self._s(1, 2))
    cov_ahah = property(lambda self: self._s(2, 2))


@dataclass(frozen=True)
class CostQuadratic:
    """Expected cost ``a^T x_mat a + y_scalar`` as a function of the drift."""

    x_mat: np.ndarray
    y_scalar: float

    def __call__(self, a) -> float:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        return float(a @ self.x_mat @ a + self.y_scalar)


def _control_mask(grid: TimeGrid, t0: float) -> np.ndarray:
    """1.0 on steps inside [t0, T], 0.0 before; t0 must be a node."""
    k0 = grid.index_of(t0)
    mask = np.zeros(grid.n_steps)
    mask[k0:] = 1.0
    return mask


def _check_grids(grid: TimeGrid, *objs) -> None:
    for o in objs:
        if o.grid != grid:
            raise GridMismatch(f"{type(o).__name__} is on {o.grid}, expected {grid}")


def closed_loop_tables(spec: SystemSpec, s_half: np.ndarray, p_half: np.ndarray,
                       mask: np.ndarray):
    """Per-step RK4 stage tables (A, B, N) for the Bayesian closed loop."""
    d = spec.d
    r_inv, sv_inv = spec.r_inv, spec.sigma_v_inv
    s_st = stage_table(s_half)
    p_st = stage_table(p_half)
    on = mask[:, None, None, None]
    k_gain = on * (r_inv @ s_st[..., :d, :d])
    l_gain = on * (r_inv @ s_st[..., :d, d:])
    gq = p_st[..., :d, :d] @ sv_inv
    ga = np.swapaxes(p_st[..., :d, d:], -1, -2) @ sv_inv
    eye = np.broadcast_to(np.eye(d), k_gain.shape)

    shape = k_gain.shape[:-2]
    a_tab = np.zeros(shape + (3 * d, 3 * d))
    a_tab[..., 0:d, d : 2 * d] = -k_gain
    a_tab[..., 0:d, 2 * d :] = -l_gain
    a_tab[..., d : 2 * d, 0:d] = gq
    a_tab[..., d : 2 * d, d : 2 * d] = -k_gain - gq
    a_tab[..., d : 2 * d, 2 * d :] = eye - l_gain
    a_tab[..., 2 * d :, 0:d] = ga
    a_tab[..., 2 * d :, d : 2 * d] = -ga

    b_tab = np.zeros(shape + (3 * d, d))
    b_tab[..., 0:d, :] = eye

    ph = p_st[..., :, :d]  # P H^T = [P11; P12^T]
    n_tab = np.zeros(shape + (3 * d, 3 * d))
    n_tab[..., 0:d, 0:d] = spec.sigma_w
    n_tab[..., d:, d:] = ph @ sv_inv @ np.swapaxes(ph, -1, -2)
    return a_tab, b_tab, n_tab


def known_a_tables(spec: SystemSpec, s_half: np.ndarray, p_star_half: np.ndarray,
                   mask: np.ndarray):
    """Per-step stage tables for (q, q_hat*) under the known-drift controller."""
    d = spec.d
    r_inv, sv_inv = spec.r_inv, spec.sigma_v_inv
    s_st = stage_table(s_half)
    p_st = stage_table(p_star_half)
    on = mask[:, None, None, None]
    k_gain = on * (r_inv @ s_st[..., :d, :d])
    l_gain = on * (r_inv @ s_st[..., :d, d:])
    g_star = p_st @ sv_inv
    eye = np.broadcast_to(np.eye(d), k_gain.shape)

    shape = k_gain.shape[:-2]
    a_tab = np.zeros(shape + (2 * d, 2 * d))
    a_tab[..., 0:d, d:] = -k_gain
    a_tab[..., d:, 0:d] = g_star
    a_tab[..., d:, d:] = -k_gain - g_star
    b_tab = np.concatenate([eye - l_gain, eye - l_gain], axis=-2)
    n_tab = np.zeros(shape + (2 * d, 2 * d))
    n_tab[..., 0:d, 0:d] = spec.sigma_w
    n_tab[..., d:, d:] = p_st @ sv_inv @ np.swapaxes(p_st, -1, -2)
    return a_tab, b_tab, n_tab


def propagate_bayesian_moments(spec: SystemSpec, prior: PriorSpec, gain: ControlGain,
                               cov: EstimationCov, grid: TimeGrid) -> MomentState:
    """Means and covariances of (q, q_hat, a_hat) under the Bayesian controller."""
    _check_grids(grid, gain, cov)
    d = spec.d
    if not np.allclose(cov.p22[0], prior.sigma_prior, rtol=1e-12, atol=0.0):
        raise ValueError("estimation covariance was solved for a different prior")
    tables = closed_loop_tables(spec, gain.half_steps(), cov.half_steps(),
                                _control_mask(grid, spec.t0))
    c0 = np.zeros((3 * d, d))
    s0 = np.zeros((3 * d, 3 * d))
    s0[:d, :d] = spec.sigma_q0
    mean, covz = linear_moments_rk4(c0, s0, *tables, grid)
    return MomentState(grid=grid, mean=mean, cov=covz)


def propagate_known_a_moments(spec: SystemSpec, gain: ControlGain, cov_star: KnownACov,
                              grid: TimeGrid) -> MomentState:
    """Means and covariances of (q, q_hat*) under the known-drift controller,
    embedded in the (q, q_hat, a_hat) layout with a_hat = a exactly."""
    _check_grids(grid, gain, cov_star)
    d = spec.d
    tables = known_a_tables(spec, gain.half_steps(), cov_star.half_steps(),
                            _control_mask(grid, spec.t0))
    c0 = np.zeros((2 * d, d))
    s0 = np.zeros((2 * d, 2 * d))
    s0[:d, :d] = spec.sigma_q0
    mean2, cov2 = linear_moments_rk4(c0, s0, *tables, grid)
    n = len(grid)
    mean = np.zeros((n, 3 * d, d))
    mean[:, : 2 * d] = mean2
    mean[:, 2 * d :] = np.eye(d)
    covz = np.zeros((n, 3 * d, 3 * d))
    covz[:, : 2 * d, : 2 * d] = cov2
    return MomentState(grid=grid, mean=mean, cov=covz, known_a=True)


def _cost_quadratic(moments: MomentState, gain: ControlGain, spec: SystemSpec) -> CostQuadratic:
    grid = moments.grid
    _check_grids(grid, gain)
    d = spec.d
    k0 = grid.index_of(spec.t0)
    if k0 == grid.n_steps:
        return CostQuadratic(np.zeros((d, d)), 0.0)
    q, r_inv = spec.q_weight, spec.r_inv
    s_row = gain.s[k0:, :d, :]  # [S11, S12]
    mean = moments.mean[k0:]
    c1 = mean[:, :d]
    # control mean per unit drift: S11 C2 + S12 C3
    g = s_row @ mean[:, d:]
    x_integrand = np.swapaxes(c1, -1, -2) @ q @ c1 + np.swapaxes(g, -1, -2) @ r_inv @ g
    cov = moments.cov[k0:]
    y_integrand = (
        np.einsum("ij,kji->k", q, cov[:, :d, :d])
        + np.einsum("ia,kab,kbc,kic->k", r_inv, s_row, cov[:, d:, d:], s_row)
    )
    x = trapezoid(x_integrand, grid.h)
    return CostQuadratic(0.5 * (x + x.T), float(trapezoid(y_integrand, grid.h)))


def compute_cost_quadratic(moments: MomentState, gain: ControlGain, spec: SystemSpec) -> CostQuadratic:
    """(X, Y) with J(a) = a^T X a + Y for the Bayesian controller, integrating
    over the control window [t0, T] by the trapezoid rule."""
    if moments.known_a:
        raise ValueError("these are known-drift moments; use compute_cost_quadratic_star")
    return _cost_quadratic(moments, gain, spec)


def compute_cost_quadratic_star(moments: MomentState, gain: ControlGain, spec: SystemSpec) -> CostQuadratic:
    """(X*, Y*) for the optimal known-drift controller."""
    if not moments.known_a:
        raise ValueError("these are Bayesian moments; use compute_cost_quadratic")
    return _cost_quadratic(moments, gain, spec)
