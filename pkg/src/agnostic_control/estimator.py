"""Flat-prior (Sigma -> infinity) linear estimator of the drift from an
uncontrolled observation window [0, t].

With q(0) = 0 and u = 0 the observation is y(s) = a s^2/2 + X(s) where X is a
zero-mean Gaussian process independent of (a, q(t)). Conditioning on y with a
flat prior on a leads to weights omega(s) = omega0(s) + delta(s - t) kappa
solving

    int_0^t K(s, tau) omega(tau) dtau = (s^2 / 2) I,

with K the covariance of X. Differentiating twice in s turns this first-kind
equation into the second-kind system solved here,

    -Sv w0(s) - (Sw / 2t) int_0^t tau^2 w0 + Sw int_s^t (tau - s) w0(tau) dtau
        = I + ((2s - t) / 2) Sw kappa,                    int_0^t w0 = -kappa,

and the estimates are q_hat = gamma^-1 beta(y), a_hat = q_hat / t with

    gamma   = (int s^2 w0 ds + t^2 kappa) / (2 t^2),
    beta(y) = (int w0 y ds + kappa y(t)) / t.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, GridMismatch
from .model import SystemSpec, TimeGrid
from .numerics import Trajectory, solve_linear


def _trap_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Covariance blocks K(t_nu, t_mu) of the noise process X at t_1..t_n."""

    grid: TimeGrid
    blocks: np.ndarray  # (n, n, d, d)

    def assembled(self) -> np.ndarray:
        n, _, d, _ = self.blocks.shape
        return self.blocks.transpose(0, 2, 1, 3).reshape(n * d, n * d)


def kernel_value(spec: SystemSpec, horizon: float, s, tau):
    """K(s, tau) as an array (..., d, d) broadcast over ``s`` and ``tau``."""
    s = np.asarray(s, dtype=float)[..., None, None]
    tau = np.asarray(tau, dtype=float)[..., None, None]
    lo = np.minimum(s, tau)
    hi = np.maximum(s, tau)
    w_part = 0.5 * lo**2 * hi - lo**3 / 6.0 - (s * tau) ** 2 / (4.0 * horizon)
    return lo * spec.sigma_v + w_part * spec.sigma_w


def build_kernel(spec: SystemSpec, horizon: float, n: int) -> KernelMatrix:
    if not 0 < horizon:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    grid = TimeGrid(0.0, horizon, n)
    t = grid.nodes[1:]
    blocks = kernel_value(spec, horizon, t[:, None], t[None, :])
    return KernelMatrix(grid=grid, blocks=blocks)


@dataclass(frozen=True, eq=False)
class EstimatorWeights:
    grid: TimeGrid
    omega0: np.ndarray  # (n+1, d, d)
    kappa: np.ndarray
    gamma: np.ndarray

    @property
    def horizon(self) -> float:
        return self.grid.t_end

    def constraint_residual(self) -> float:
        w = _trap_weights(self.grid.n_steps, self.grid.h)
        return float(np.max(np.abs(np.einsum("k,kij->ij", w, self.omega0) + self.kappa)))

    def drift_coefficients(self) -> np.ndarray:
        """Blocks c_k with a_hat = sum_k c_k y(t_k), shape (n+1, d, d)."""
        t = self.horizon
        w = _trap_weights(self.grid.n_steps, self.grid.h)
        blocks = w[:, None, None] * self.omega0
        blocks[-1] = blocks[-1] + self.kappa
        return np.linalg.solve(self.gamma, blocks) / t**2


def solve_weights(spec: SystemSpec, horizon: float, n: int) -> EstimatorWeights:
    """Trapezoid discretization of the second-kind system on n+1 nodes, with
    the integral constraint appended as the last block row."""
    if not 0 < horizon:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    return _solve_weights(spec.d, horizon, int(n),
                          spec.sigma_v.tobytes(), spec.sigma_w.tobytes())


@lru_cache(maxsize=4096)
def _solve_weights(d, t, n, sv_bytes, sw_bytes) -> EstimatorWeights:
    sigma_v = np.frombuffer(sv_bytes).reshape(d, d)
    sigma_w = np.frombuffer(sw_bytes).reshape(d, d)
    grid = TimeGrid(0.0, t, n)
    s = grid.nodes
    h = grid.h
    w = _trap_weights(n, h)
    m = n + 2
    coef_v = np.zeros((m, m))
    coef_w = np.zeros((m, m))
    coef_i = np.zeros((m, m))

    coef_v[: n + 1, : n + 1] = -np.eye(n + 1)
    coef_w[: n + 1, : n + 1] = -(w * s**2)[None, :] / (2.0 * t)
    # int_s^t (tau - s) w0(tau) dtau on [s_j, t]
    tail = np.triu(np.full((n + 1, n + 1), h))
    np.fill_diagonal(tail, 0.5 * h)
    tail[:, -1] = 0.5 * h
    tail[-1, -1] = 0.0
    coef_w[: n + 1, : n + 1] += tail * (s[None, :] - s[:, None])
    coef_w[: n + 1, n + 1] = -(2.0 * s - t) / 2.0
    coef_i[n + 1, : n + 1] = w
    coef_i[n + 1, n + 1] = 1.0

    if d == 1:
        a_mat = coef_v * sigma_v[0, 0] + coef_w * sigma_w[0, 0] + coef_i
    else:
        a_mat = np.kron(coef_v, sigma_v) + np.kron(coef_w, sigma_w) + np.kron(coef_i, np.eye(d))
    rhs = np.zeros((m * d, d))
    rhs[: (n + 1) * d] = np.tile(np.eye(d), (n + 1, 1))
    sol = solve_linear(a_mat, rhs).reshape(m, d, d)
    omega0, kappa = sol[: n + 1], sol[n + 1]
    gamma = (np.einsum("k,kij->ij", w * s**2, omega0) + t**2 * kappa) / (2.0 * t**2)
    for arr in (omega0, kappa, gamma):
        arr.setflags(write=False)
    return EstimatorWeights(grid=grid, omega0=omega0, kappa=kappa, gamma=gamma)


def estimate_state(y_path: Trajectory, weights: EstimatorWeights):
    """Return ``(a_hat, q_hat)`` from observations on the weights' grid.

    ``q_hat = t * a_hat`` holds exactly.
    """
    if y_path.grid != weights.grid:
        raise GridMismatch(f"path is on {y_path.grid}, weights on {weights.grid}")
    y = np.asarray(y_path.values, dtype=float)
    d = weights.kappa.shape[0]
    if y.ndim != 2 or y.shape[1] != d:
        raise DimensionMismatch(f"y path must have shape (n+1, {d}), got {y.shape}")
    a_hat = np.einsum("kij,kj->i", weights.drift_coefficients(), y)
    return a_hat, weights.horizon * a_hat
