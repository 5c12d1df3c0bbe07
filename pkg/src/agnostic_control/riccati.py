"""Control and estimation Riccati equations of the augmented LQG problem.

* control:      -S' = S F + F^T S + Q~ - S B R^-1 B^T S,     S(T) = 0
* estimation:    P' = F P + P F^T - P H^T Sv^-1 H P + G Sw G^T,
                 P(0) = blockdiag(Sigma_q0, Sigma)
* known drift:   P*' = -P* Sv^-1 P* + Sw,                    P*(0) = Sigma_q0
* offset:       -alpha' = tr(P H^T Sv^-1 H P S),            alpha(T) = 0

The optimal Bayesian control is u = -R^-1 (S11 q_hat + S12 a_hat).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, GridMismatch
from .model import PriorSpec, SystemSpec, TimeGrid, augment
from .numerics import hermite_midpoints, riccati_field, riccati_rk4, simpson_tail


def _blocks(m: np.ndarray, d: int):
    return m[..., :d, :d], m[..., :d, d:], m[..., d:, d:]


@dataclass(frozen=True, eq=False)
class EstimationCov:
    """Filter error covariance P(t) of [q; a] on ``grid``."""

    grid: TimeGrid
    p: np.ndarray  # (n+1, 2d, 2d)
    p_dot: np.ndarray

    @property
    def d(self) -> int:
        return self.p.shape[-1] // 2

    @property
    def p11(self):
        return self.p[:, : self.d, : self.d]

    @property
    def p12(self):
        return self.p[:, : self.d, self.d :]

    @property
    def p22(self):
        return self.p[:, self.d :, self.d :]

    def half_steps(self) -> np.ndarray:
        return hermite_midpoints(self.p, self.p_dot, self.grid.h)


@dataclass(frozen=True, eq=False)
class ControlGain:
    """Control Riccati solution S(t) and, once filled, the scalar offset alpha(t)."""

    grid: TimeGrid
    s: np.ndarray  # (n+1, 2d, 2d)
    s_dot: np.ndarray
    alpha: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.s.shape[-1] // 2

    @property
    def s11(self):
        return self.s[:, : self.d, : self.d]

    @property
    def s12(self):
        return self.s[:, : self.d, self.d :]

    @property
    def s22(self):
        return self.s[:, self.d :, self.d :]

    def half_steps(self) -> np.ndarray:
        return hermite_midpoints(self.s, self.s_dot, self.grid.h)


@dataclass(frozen=True, eq=False)
class KnownACov:
    """Known-drift filter covariance P*11(t); P*12 and P*22 vanish identically."""

    grid: TimeGrid
    p11_star: np.ndarray  # (n+1, d, d)
    p11_star_dot: np.ndarray

    def half_steps(self) -> np.ndarray:
        return hermite_midpoints(self.p11_star, self.p11_star_dot, self.grid.h)


def _check_grid(grid: TimeGrid, spec: SystemSpec, *, from_zero: bool = True) -> None:
    if abs(grid.t_end - spec.t_final) > 1e-12 * max(1.0, spec.t_final):
        raise GridMismatch(f"grid ends at {grid.t_end}, horizon is {spec.t_final}")
    if from_zero and grid.t_start != 0.0:
        raise GridMismatch(f"grid must start at 0, starts at {grid.t_start}")


def _control_coefficients(spec: SystemSpec):
    aug = augment(spec)
    m = aug.b_mat @ spec.r_inv @ aug.b_mat.T
    return aug.f_mat.T, m, aug.q_tilde


def solve_control_riccati(spec: SystemSpec, grid: TimeGrid) -> ControlGain:
    """Integrate the control Riccati equation backward from S(T) = 0.

    Uses only F, B, Q and R, so the result does not depend on the sensor
    noise or the prior.
    """
    _check_grid(grid, spec, from_zero=False)
    a, m, c = _control_coefficients(spec)
    # reversed time tau = T - t turns the terminal problem into an initial one
    s_rev = riccati_rk4(np.zeros_like(c), a, m, c, grid)
    s = np.ascontiguousarray(s_rev[::-1])
    s_dot = -riccati_field(s, a, m, c)
    return ControlGain(grid=grid, s=s, s_dot=s_dot)


def solve_estimation_riccati(spec: SystemSpec, prior: PriorSpec, grid: TimeGrid) -> EstimationCov:
    _check_grid(grid, spec)
    if prior.d != spec.d:
        raise DimensionMismatch(f"prior is {prior.d}-dimensional, system is {spec.d}-dimensional")
    aug = augment(spec)
    a = aug.f_mat
    m = aug.h_mat.T @ spec.sigma_v_inv @ aug.h_mat
    c = aug.g_mat @ spec.sigma_w @ aug.g_mat.T
    d = spec.d
    p0 = np.zeros((2 * d, 2 * d))
    p0[:d, :d] = spec.sigma_q0
    p0[d:, d:] = prior.sigma_prior
    p = riccati_rk4(p0, a, m, c, grid)
    return EstimationCov(grid=grid, p=p, p_dot=riccati_field(p, a, m, c))


def solve_known_a_riccati(spec: SystemSpec, grid: TimeGrid) -> KnownACov:
    _check_grid(grid, spec)
    a = np.zeros((spec.d, spec.d))
    m = spec.sigma_v_inv
    c = np.asarray(spec.sigma_w)
    p = riccati_rk4(spec.sigma_q0, a, m, c, grid)
    return KnownACov(grid=grid, p11_star=p, p11_star_dot=riccati_field(p, a, m, c))


def _same_grid(*objs) -> TimeGrid:
    grid = objs[0].grid
    for o in objs[1:]:
        if o.grid != grid:
            raise GridMismatch(f"{type(o).__name__} is on {o.grid}, expected {grid}")
    return grid


def solve_alpha(gain: ControlGain, cov: EstimationCov, spec: SystemSpec) -> ControlGain:
    """Fill alpha(t) = int_t^T tr(P H^T Sv^-1 H P S) by Simpson's rule."""
    grid = _same_grid(gain, cov)
    d = spec.d
    p_half = cov.half_steps()
    s_half = gain.half_steps()
    ph = p_half[:, :, :d]  # P H^T
    integrand = np.einsum("kia,ab,kjb,kji->k", ph, spec.sigma_v_inv, ph, s_half)
    alpha = simpson_tail(integrand, grid.h)
    return replace(gain, alpha=alpha)


def bayesian_cost_to_go(x_hat, t: float, gain: ControlGain, cov: EstimationCov,
                        spec: SystemSpec) -> float:
    """Expected remaining cost from ``t`` given the estimate ``x_hat = [q_hat; a_hat]``:

        x^T S x + tr(P S) + int_t^T [tr(G Sw G^T S) + tr(S B R^-1 B^T S P)] dtau
    """
    grid = _same_grid(gain, cov)
    k = grid.index_of(t)
    x = np.asarray(x_hat, dtype=float).ravel()
    if x.size != 2 * spec.d:
        raise DimensionMismatch(f"x_hat must have {2 * spec.d} entries")
    d = spec.d
    s_half = gain.half_steps()[2 * k :]
    p_half = cov.half_steps()[2 * k :]
    sb = s_half[:, :, :d]  # S B
    integrand = (
        np.einsum("ij,kji->k", spec.sigma_w, s_half[:, :d, :d])
        + np.einsum("kia,ab,kjb,kji->k", sb, spec.r_inv, sb, p_half)
    )
    tail = simpson_tail(integrand, grid.h)[0]
    s, p = gain.s, cov.p
    return float(x @ s[k] @ x + np.trace(p[k] @ s[k]) + tail)


def cost_to_go_from_alpha(x_hat, t: float, gain: ControlGain, cov: EstimationCov,
                          spec: SystemSpec) -> float:
    """Same quantity via the HJB form ``x^T S x + alpha(t) + int_t^T tr(P Q~)``."""
    if gain.alpha is None:
        raise ValueError("gain has no alpha; call solve_alpha first")
    grid = _same_grid(gain, cov)
    k = grid.index_of(t)
    x = np.asarray(x_hat, dtype=float).ravel()
    d = spec.d
    p_half = cov.half_steps()[2 * k :]
    trace_pq = np.einsum("ij,kji->k", spec.q_weight, p_half[:, :d, :d])
    tail = simpson_tail(trace_pq, grid.h)[0]
    return float(x @ gain.s[k] @ x + gain.alpha[k] + tail)
