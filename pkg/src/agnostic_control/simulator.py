"""Euler-Maruyama Monte Carlo of the closed loop

    q_{k+1} = q_k + (a + u_k) dt + dW_k,     y_{k+1} = y_k + q_k dt + dV_k,

under the Bayesian, known-drift and flat-prior (agnostic) controllers.

Every trial draws from its own counter-based stream ``Philox(key=(seed, trial))``
in a fixed order (q0, then dW and dV for each step), so results do not depend
on chunking, thread count or execution order, and different strategies run
with the same seed see identical noise.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Union

import numba
import numpy as np

from .errors import BadHorizon, DimensionMismatch, NonFinite
from .estimator import solve_weights
from .model import PriorSpec, SystemSpec, TimeGrid
from .riccati import solve_control_riccati, solve_estimation_riccati, solve_known_a_riccati

THREADS_ENV = "AGNOSTIC_CONTROL_THREADS"
CHUNK = 256


@dataclass(frozen=True)
class Bayesian:
    prior: PriorSpec


@dataclass(frozen=True)
class KnownA:
    pass


@dataclass(frozen=True)
class AgnosticAdditive:
    """Flat-prior controller; ``n`` is the estimator's quadrature resolution."""

    n: int = 400


Strategy = Union[Bayesian, KnownA, AgnosticAdditive]


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    ``ode_refine`` sets how many Riccati steps are taken per simulation step;
    gains are read at the simulation nodes. ``threads=None`` falls back to the
    ``AGNOSTIC_CONTROL_THREADS`` environment variable, then the CPU count.
    """

    dt: float
    trials: int
    seed: int
    strategy: Strategy = field(default_factory=KnownA)
    threads: int | None = None
    keep_costs: bool = False
    n_paths: int = 0
    ode_refine: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.n_paths < 0 or self.ode_refine < 1:
            raise ValueError("n_paths must be >= 0 and ode_refine >= 1")


@dataclass(frozen=True, eq=False)
class SamplePaths:
    """Trajectories of the first trials, arrays of shape (k, n+1, d)."""

    t: np.ndarray
    q: np.ndarray
    q_hat: np.ndarray
    a_hat: np.ndarray
    u: np.ndarray
    y: np.ndarray

    def write_csv(self, path: str | Path) -> list[Path]:
        """One CSV per trial, ``<stem>_trial<i><suffix>``; returns the paths."""
        path = Path(path)
        d = self.q.shape[-1]
        header = ["t"] + [f"{name}_{i + 1}" for name in ("q", "qhat", "ahat", "u", "y")
                          for i in range(d)]
        written = []
        for k in range(self.q.shape[0]):
            out = path.with_name(f"{path.stem}_trial{k}{path.suffix or '.csv'}")
            table = np.column_stack([self.t, self.q[k], self.q_hat[k], self.a_hat[k],
                                     self.u[k], self.y[k]])
            np.savetxt(out, table, delimiter=",", header=",".join(header), comments="",
                       fmt="%.17e")
            written.append(out)
        return written


@dataclass(frozen=True, eq=False)
class SimResult:
    """``std_error`` is the sample standard deviation over sqrt(trials);
    it is NaN for a single trial."""

    mean_cost: float
    std_error: float
    trials: int
    per_trial_costs: np.ndarray | None = None
    sample_paths: SamplePaths | None = None


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    """A factor L with L L^T = m, valid for singular PSD m."""
    w, v = np.linalg.eigh(m)
    return v * np.sqrt(np.clip(w, 0.0, None))


def sim_grid(spec: SystemSpec, dt: float) -> TimeGrid:
    n = round(spec.t_final / dt)
    if n < 1 or abs(n * dt - spec.t_final) > 1e-9 * spec.t_final:
        raise BadHorizon(f"dt={dt} does not divide the horizon {spec.t_final}")
    grid = TimeGrid(0.0, spec.t_final, n)
    grid.index_of(spec.t0)
    return grid


def draw_noise(spec: SystemSpec, dt: float, n_steps: int, seed: int, start: int, stop: int):
    """Initial states and scaled increments for trials ``start..stop-1``.

    Returns ``q0 (c, d)``, ``dw (c, n, d)`` and ``dv (c, n, d)``.
    """
    d = spec.d
    c = stop - start
    z0 = np.empty((c, d))
    z = np.empty((c, n_steps, 2, d))
    for i in range(c):
        gen = np.random.Generator(np.random.Philox(key=np.array([seed, start + i], dtype=np.uint64)))
        z0[i] = gen.standard_normal(d)
        z[i] = gen.standard_normal((n_steps, 2, d))
    root_dt = math.sqrt(dt)
    q0 = z0 @ _psd_sqrt(spec.sigma_q0).T
    dw = root_dt * (z[:, :, 0, :] @ _psd_sqrt(spec.sigma_w).T)
    dv = root_dt * (z[:, :, 1, :] @ _psd_sqrt(spec.sigma_v).T)
    return q0, np.ascontiguousarray(dw), np.ascontiguousarray(dv)


@numba.njit(cache=True, nogil=True)
def _quad(m, v):
    d = v.shape[0]
    s = 0.0
    for i in range(d):
        for j in range(d):
            s += v[i] * m[i, j] * v[j]
    return s


@numba.njit(cache=True, nogil=True)
def _control(k_mat, x, l_mat, z, out):
    """out = -(k_mat x + l_mat z)."""
    d = out.shape[0]
    for i in range(d):
        s = 0.0
        for j in range(d):
            s += k_mat[i, j] * x[j] + l_mat[i, j] * z[j]
        out[i] = -s


@numba.njit(cache=True, nogil=True)
def _record(paths, i, k, q, qh, ah, u, y):
    d = q.shape[0]
    for j in range(d):
        paths[i, k, 0, j] = q[j]
        paths[i, k, 1, j] = qh[j]
        paths[i, k, 2, j] = ah[j]
        paths[i, k, 3, j] = u[j]
        paths[i, k, 4, j] = y[j]


@numba.njit(cache=True, nogil=True)
def _filter_chunk(q0, dw, dv, a, a_hat0, k_gain, l_gain, g_q, g_a, dt, k0, q_w, r_w, paths):
    """Closed loop with the Euler-discretized filter; ``g_a = 0`` and
    ``a_hat0 = a`` give the known-drift controller."""
    c, n, d = dw.shape
    n_keep = paths.shape[0]
    costs = np.zeros(c)
    q = np.empty(d)
    qh = np.empty(d)
    ah = np.empty(d)
    y = np.empty(d)
    u = np.empty(d)
    innov = np.empty(d)
    for i in range(c):
        q[:] = q0[i]
        qh[:] = 0.0
        ah[:] = a_hat0
        y[:] = 0.0
        cost = 0.0
        for k in range(n):
            if k >= k0:
                _control(k_gain[k], qh, l_gain[k], ah, u)
                cost += (_quad(q_w, q) + _quad(r_w, u)) * dt
            else:
                u[:] = 0.0
            if i < n_keep:
                _record(paths, i, k, q, qh, ah, u, y)
            for j in range(d):
                innov[j] = (q[j] - qh[j]) * dt + dv[i, k, j]
            for j in range(d):
                gq = 0.0
                ga = 0.0
                for m in range(d):
                    gq += g_q[k, j, m] * innov[m]
                    ga += g_a[k, j, m] * innov[m]
                y[j] += q[j] * dt + dv[i, k, j]
                qh[j] += (ah[j] + u[j]) * dt + gq
                q[j] += (a[j] + u[j]) * dt + dw[i, k, j]
                ah[j] += ga
        if i < n_keep:
            u[:] = 0.0
            _record(paths, i, n, q, qh, ah, u, y)
        costs[i] = cost
    return costs


@numba.njit(cache=True, nogil=True)
def _agnostic_chunk(q0, dw, dv, a, k_gain, l_gain, coef, offsets, dt, k0, q_w, r_w, paths):
    """Closed loop with the flat-prior estimator, stepping all trials of the
    chunk together so each step's estimator block is read once.

    ``coef[offsets[k]:offsets[k] + d*(k+1)*d]`` reshaped to (d, (k+1)*d) maps
    the stacked control-free observations ytil_0..ytil_k to a_hat at step k.
    """
    c, n, d = dw.shape
    n_keep = paths.shape[0]
    costs = np.zeros(c)
    ytil = np.zeros((n + 1, d, c))
    q = q0.T.copy()
    qh = np.zeros((d, c))
    ah = np.zeros((d, c))
    y = np.zeros((d, c))
    u = np.zeros((d, c))
    u_cum = np.zeros((d, c))  # integral of u, its contribution to q
    y_ctl = np.zeros((d, c))  # its contribution to y
    for k in range(n):
        if k >= k0:
            m = (k + 1) * d
            block = coef[offsets[k] : offsets[k] + d * m].reshape((d, m))
            ah[:, :] = np.dot(block, ytil[: k + 1].reshape((m, c)))
            for i in range(c):
                for j in range(d):
                    qh[j, i] = k * dt * ah[j, i] + u_cum[j, i]
                for j in range(d):
                    s = 0.0
                    for l in range(d):
                        s += k_gain[k, j, l] * qh[l, i] + l_gain[k, j, l] * ah[l, i]
                    u[j, i] = -s
                quad = 0.0
                for j in range(d):
                    for l in range(d):
                        quad += q[j, i] * q_w[j, l] * q[l, i] + u[j, i] * r_w[j, l] * u[l, i]
                costs[i] += quad * dt
        for i in range(n_keep):
            _record(paths, i, k, q[:, i], qh[:, i], ah[:, i], u[:, i], y[:, i])
        for i in range(c):
            for j in range(d):
                y[j, i] += q[j, i] * dt + dv[i, k, j]
                y_ctl[j, i] += u_cum[j, i] * dt
                u_cum[j, i] += u[j, i] * dt
                q[j, i] += (a[j] + u[j, i]) * dt + dw[i, k, j]
                ytil[k + 1, j, i] = y[j, i] - y_ctl[j, i]
    zero = np.zeros(d)
    for i in range(n_keep):
        _record(paths, i, n, q[:, i].copy(), zero, zero, zero, y[:, i].copy())
    return costs


def _gain_tables(spec: SystemSpec, grid: TimeGrid, refine: int):
    ode = grid.refined(refine)
    gain = solve_control_riccati(spec, ode)
    s = gain.s[::refine][: grid.n_steps]
    d = spec.d
    r_inv = spec.r_inv
    k_gain = np.ascontiguousarray(r_inv @ s[:, :d, :d])
    l_gain = np.ascontiguousarray(r_inv @ s[:, :d, d:])
    return ode, k_gain, l_gain


def _agnostic_coefficients(spec: SystemSpec, grid: TimeGrid, k0: int, n_est: int):
    return _agnostic_coefficients_cached(
        spec.d, spec.sigma_v.tobytes(), spec.sigma_w.tobytes(), grid.t_end, grid.n_steps,
        k0, n_est)


@lru_cache(maxsize=8)
def _agnostic_coefficients_cached(d, sv_bytes, sw_bytes, t_end, n, k0, n_est):
    """Estimator blocks for every control step, folded from the estimator's
    own nodes onto simulation nodes by linear interpolation."""
    spec = SystemSpec(d=d, sigma_v=np.frombuffer(sv_bytes).reshape(d, d),
                      sigma_w=np.frombuffer(sw_bytes).reshape(d, d),
                      q_weight=np.eye(d), r_weight=np.eye(d), sigma_q0=np.zeros((d, d)),
                      t_final=t_end)
    grid = TimeGrid(0.0, t_end, n)
    offsets = np.zeros(n, dtype=np.int64)
    total = 0
    for k in range(n):
        offsets[k] = total
        if k >= k0:
            total += d * (k + 1) * d
    coef = np.zeros(max(total, 1))
    for k in range(k0, n):
        blocks = solve_weights(spec, grid.nodes[k], n_est).drift_coefficients()
        pos = np.arange(n_est + 1) * (k / n_est)
        lo = np.minimum(np.floor(pos).astype(np.int64), k)
        frac = pos - lo
        hi = np.minimum(lo + 1, k)
        folded = np.zeros((k + 1, d, d))
        np.add.at(folded, lo, (1.0 - frac)[:, None, None] * blocks)
        np.add.at(folded, hi, frac[:, None, None] * blocks)
        # (j, l, m): output component j, node l, input component m
        coef[offsets[k] : offsets[k] + d * (k + 1) * d] = folded.transpose(1, 0, 2).ravel()
    return coef, offsets


def _run(spec: SystemSpec, config: SimConfig, a_true, kernel, extra) -> SimResult:
    grid = sim_grid(spec, config.dt)
    n, d = grid.n_steps, spec.d
    trials = int(config.trials)
    n_keep = min(config.n_paths, trials)
    threads = config.threads or default_threads()
    bounds = [(s, min(s + CHUNK, trials)) for s in range(0, trials, CHUNK)]
    paths = np.zeros((n_keep, n + 1, 5, d))

    def work(bound):
        start, stop = bound
        q0, dw, dv = draw_noise(spec, config.dt, n, config.seed, start, stop)
        keep = max(0, min(n_keep, stop) - start)
        sub = np.zeros((keep, n + 1, 5, d))
        costs = kernel(q0, dw, dv, a_true, *extra, sub)
        if keep:
            paths[start : start + keep] = sub
        return costs

    if threads == 1 or len(bounds) == 1:
        parts = [work(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    costs = np.concatenate(parts)
    bad = np.flatnonzero(~np.isfinite(costs))
    if bad.size:
        raise NonFinite(f"trial {bad[0]} diverged", trial=int(bad[0]))
    mean = float(np.mean(costs))
    se = float(np.std(costs, ddof=1) / math.sqrt(trials)) if trials > 1 else math.nan
    sample = None
    if n_keep:
        sample = SamplePaths(t=grid.nodes.copy(), q=paths[:, :, 0], q_hat=paths[:, :, 1],
                             a_hat=paths[:, :, 2], u=paths[:, :, 3], y=paths[:, :, 4])
    return SimResult(mean_cost=mean, std_error=se, trials=trials,
                     per_trial_costs=costs if config.keep_costs else None,
                     sample_paths=sample)


def _drift(spec: SystemSpec, a_true) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a_true, dtype=float))
    if a.shape != (spec.d,):
        raise DimensionMismatch(f"a_true must have {spec.d} entries, got shape {a.shape}")
    return a


def simulate_closed_loop(spec: SystemSpec, config: SimConfig, a_true) -> SimResult:
    """Bayesian controller u = -R^-1 (S11 q_hat + S12 a_hat) with the
    Euler-discretized filter for the prior in ``config.strategy``."""
    if not isinstance(config.strategy, Bayesian):
        raise TypeError("simulate_closed_loop needs a Bayesian strategy")
    a = _drift(spec, a_true)
    grid = sim_grid(spec, config.dt)
    ode, k_gain, l_gain = _gain_tables(spec, grid, config.ode_refine)
    cov = solve_estimation_riccati(spec, config.strategy.prior, ode)
    p = cov.p[:: config.ode_refine][: grid.n_steps]
    d = spec.d
    sv_inv = spec.sigma_v_inv
    g_q = np.ascontiguousarray(p[:, :d, :d] @ sv_inv)
    g_a = np.ascontiguousarray(np.swapaxes(p[:, :d, d:], -1, -2) @ sv_inv)
    extra = (np.zeros(d), k_gain, l_gain, g_q, g_a, config.dt, grid.index_of(spec.t0),
             np.asarray(spec.q_weight), np.asarray(spec.r_weight))
    return _run(spec, config, a, _filter_chunk, extra)


def simulate_known_a(spec: SystemSpec, config: SimConfig, a_true) -> SimResult:
    """Optimal controller knowing ``a_true``; filters q with gain P*11 Sv^-1."""
    a = _drift(spec, a_true)
    grid = sim_grid(spec, config.dt)
    ode, k_gain, l_gain = _gain_tables(spec, grid, config.ode_refine)
    p_star = solve_known_a_riccati(spec, ode).p11_star[:: config.ode_refine][: grid.n_steps]
    d = spec.d
    g_q = np.ascontiguousarray(p_star @ spec.sigma_v_inv)
    g_a = np.zeros_like(g_q)
    extra = (a.copy(), k_gain, l_gain, g_q, g_a, config.dt, grid.index_of(spec.t0),
             np.asarray(spec.q_weight), np.asarray(spec.r_weight))
    return _run(spec, config, a, _filter_chunk, extra)


def simulate_agnostic_additive(spec: SystemSpec, config: SimConfig, a_true) -> SimResult:
    """Flat-prior controller: a_hat from the linear estimator applied to the
    observations with the known control contribution removed, and
    q_hat = t a_hat + int_0^t u. Assumes q(0) = 0 as the estimator does."""
    if not spec.t0 > 0:
        raise BadHorizon("the agnostic controller needs a positive control start t0")
    strategy = config.strategy
    n_est = strategy.n if isinstance(strategy, AgnosticAdditive) else AgnosticAdditive().n
    a = _drift(spec, a_true)
    grid = sim_grid(spec, config.dt)
    _, k_gain, l_gain = _gain_tables(spec, grid, config.ode_refine)
    k0 = grid.index_of(spec.t0)
    coef, offsets = _agnostic_coefficients(spec, grid, k0, n_est)
    extra = (k_gain, l_gain, coef, offsets, config.dt, k0,
             np.asarray(spec.q_weight), np.asarray(spec.r_weight))
    return _run(spec, config, a, _agnostic_chunk, extra)


def simulate(spec: SystemSpec, config: SimConfig, a_true) -> SimResult:
    """Dispatch on ``config.strategy``."""
    strategy = config.strategy
    if isinstance(strategy, Bayesian):
        return simulate_closed_loop(spec, config, a_true)
    if isinstance(strategy, KnownA):
        return simulate_known_a(spec, config, a_true)
    if isinstance(strategy, AgnosticAdditive):
        return simulate_agnostic_additive(spec, config, a_true)
    raise TypeError(f"unknown strategy {strategy!r}")
