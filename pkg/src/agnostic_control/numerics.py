"""Deterministic numerical kernels: fixed-step RK4, dense linear solves and a
damped Newton root finder.

``integrate_fixed_step`` is the general-purpose integrator. The matrix ODEs
that dominate the run time (constant-coefficient Riccati equations and the
linear closed-loop moment system) also have compiled RK4 kernels here; they
take exactly the same steps and are cross-checked against the generic path in
the test suite.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
from numba import njit

from .errors import NoConvergence, NonFinite, Singular
from .model import TimeGrid

SINGULAR_PIVOT_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: TimeGrid
    values: np.ndarray  # (n_steps + 1, m)

    def __post_init__(self):
        if len(self.values) != len(self.grid):
            raise ValueError(f"{len(self.values)} values for {len(self.grid)} grid nodes")

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def integrate_fixed_step(field: Callable[[float, np.ndarray], np.ndarray],
                         y0, grid: TimeGrid) -> Trajectory:
    """Classical RK4 on every interval of ``grid``.

    Raises NonFinite with the time of the first node where the state blew up.
    """
    y = np.array(y0, dtype=float).ravel()
    out = np.empty((len(grid), y.size))
    out[0] = y
    h = grid.h
    nodes = grid.nodes
    for k in range(grid.n_steps):
        t = nodes[k]
        k1 = np.asarray(field(t, y), dtype=float).ravel()
        k2 = np.asarray(field(t + 0.5 * h, y + 0.5 * h * k1), dtype=float).ravel()
        k3 = np.asarray(field(t + 0.5 * h, y + 0.5 * h * k2), dtype=float).ravel()
        k4 = np.asarray(field(t + h, y + h * k3), dtype=float).ravel()
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NonFinite(f"non-finite state at t={nodes[k + 1]:.6g}", time=float(nodes[k + 1]))
        out[k + 1] = y
    return Trajectory(grid, out)


def solve_linear(a_mat, b) -> np.ndarray:
    """Solve ``A X = B`` by LU with partial pivoting (LAPACK getrf/getrs)."""
    a = np.asarray(a_mat, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"a_mat must be square, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"b has {b.shape[0]} rows, a_mat has {a.shape[0]}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale == 0.0:
        raise Singular("zero matrix")
    with warnings.catch_warnings():
        # singular factors are reported below with a clearer message
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < SINGULAR_PIVOT_TOL * scale:
        raise Singular(f"pivot {pivots.min():.3g} below {SINGULAR_PIVOT_TOL:g} relative to max |A| = {scale:.3g}")
    return scipy.linalg.lu_solve((lu, piv), b)


@dataclass(frozen=True)
class RootResult:
    x: np.ndarray
    residual_norm: float
    iterations: int


def find_root(residual: Callable[[np.ndarray], np.ndarray], p0, tol: float = 1e-10,
              max_iter: int = 50, max_step: float = np.inf) -> RootResult:
    """Newton's method with a forward-difference Jacobian and step halving.

    Newton steps are first shortened to at most ``max_step`` in max-norm. A
    step is accepted only if it lowers max|residual|; otherwise it is halved
    up to 30 times. Raises NoConvergence (with the best iterate) when
    ``max_iter`` iterations do not reach ``tol``.
    """
    p = np.atleast_1d(np.asarray(p0, dtype=float)).copy()

    def evaluate(x):
        r = np.atleast_1d(np.asarray(residual(x), dtype=float)).ravel()
        return r, (float(np.max(np.abs(r))) if np.all(np.isfinite(r)) else np.inf)

    r, norm = evaluate(p)
    best = (p.copy(), norm)
    for it in range(max_iter + 1):
        if norm <= tol:
            return RootResult(p, norm, it)
        if it == max_iter:
            break
        jac = np.empty((r.size, p.size))
        for j in range(p.size):
            step = 1e-6 * (1.0 + abs(p[j]))
            pj = p.copy()
            pj[j] += step
            rj, _ = evaluate(pj)
            jac[:, j] = (rj - r) / step
        try:
            if jac.shape[0] == jac.shape[1]:
                delta = solve_linear(jac, -r)
            else:
                delta = np.linalg.lstsq(jac, -r, rcond=None)[0]
        except (Singular, np.linalg.LinAlgError):
            break
        longest = float(np.max(np.abs(delta)))
        lam = min(1.0, max_step / longest) if longest > 0 else 1.0
        for _ in range(31):
            cand = p + lam * delta
            rc, nc = evaluate(cand)
            if nc < norm:
                break
            lam *= 0.5
        else:
            # no descent along the Newton direction
            break
        p, r, norm = cand, rc, nc
        if norm < best[1]:
            best = (p.copy(), norm)
    raise NoConvergence(
        f"Newton did not reach tol={tol:g} (best residual {best[1]:.3g})",
        best=best[0], residual=best[1], iterations=it,
    )


def hermite_midpoints(values: np.ndarray, derivs: np.ndarray, h: float) -> np.ndarray:
    """Interleave node values with cubic-Hermite midpoint estimates.

    Returns an array of length ``2n+1`` (nodes at even indices). The midpoint
    error is O(h^4), which keeps RK4 fourth order when it consumes the table.
    """
    mids = 0.5 * (values[:-1] + values[1:]) + (h / 8.0) * (derivs[:-1] - derivs[1:])
    out = np.empty((2 * len(values) - 1,) + values.shape[1:])
    out[0::2] = values
    out[1::2] = mids
    return out


def stage_table(half_step_values: np.ndarray) -> np.ndarray:
    """(2n+1, ...) half-step samples -> (n, 3, ...) per-step left/mid/right."""
    return np.stack(
        [half_step_values[0:-1:2], half_step_values[1::2], half_step_values[2::2]], axis=1
    )


# --- compiled kernels -------------------------------------------------------


@njit(cache=True, nogil=True)
def _mm(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for p in range(k):
            aip = a[i, p]
            if aip != 0.0:
                for j in range(m):
                    out[i, j] += aip * b[p, j]
    return out


@njit(cache=True, nogil=True)
def _riccati_field(x, a, m, c):
    ax = _mm(a, x)
    return ax + ax.T - _mm(_mm(x, m), x) + c


@njit(cache=True, nogil=True)
def _riccati_rk4(x0, a, m, c, h, n_steps):
    k = x0.shape[0]
    out = np.empty((n_steps + 1, k, k))
    x = x0.copy()
    out[0] = x
    for step in range(n_steps):
        k1 = _riccati_field(x, a, m, c)
        k2 = _riccati_field(x + 0.5 * h * k1, a, m, c)
        k3 = _riccati_field(x + 0.5 * h * k2, a, m, c)
        k4 = _riccati_field(x + h * k3, a, m, c)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x = 0.5 * (x + x.T)
        if not np.all(np.isfinite(x)):
            return out, step + 1
        out[step + 1] = x
    return out, -1


def riccati_rk4(x0, a, m, c, grid: TimeGrid) -> np.ndarray:
    """RK4 for ``X' = A X + X A^T - X M X + C`` with constant coefficients,
    symmetrizing after every step. Returns X at every node, shape (n+1, k, k).
    """
    out, bad = _riccati_rk4(
        np.ascontiguousarray(x0, dtype=float), np.ascontiguousarray(a, dtype=float),
        np.ascontiguousarray(m, dtype=float), np.ascontiguousarray(c, dtype=float),
        float(grid.h), int(grid.n_steps),
    )
    if bad >= 0:
        t = float(grid.nodes[bad])
        raise NonFinite(f"Riccati solution non-finite at t={t:.6g}", time=t)
    return out


def riccati_field(x, a, m, c) -> np.ndarray:
    """Right-hand side of the constant-coefficient Riccati equation, batched
    over leading axes of ``x``."""
    ax = a @ x
    return ax + np.swapaxes(ax, -1, -2) - x @ m @ x + c


@njit(cache=True, nogil=True)
def _linear_moments_rk4(c0, s0, a_tab, b_tab, n_tab, h):
    n_steps = a_tab.shape[0]
    out_c = np.empty((n_steps + 1,) + c0.shape)
    out_s = np.empty((n_steps + 1,) + s0.shape)
    c = c0.copy()
    s = s0.copy()
    out_c[0] = c
    out_s[0] = s
    for step in range(n_steps):
        a1, a2, a3 = a_tab[step, 0], a_tab[step, 1], a_tab[step, 2]
        b1, b2, b3 = b_tab[step, 0], b_tab[step, 1], b_tab[step, 2]
        n1, n2, n3 = n_tab[step, 0], n_tab[step, 1], n_tab[step, 2]

        kc1 = _mm(a1, c) + b1
        as1 = _mm(a1, s)
        ks1 = as1 + as1.T + n1

        c2 = c + 0.5 * h * kc1
        s2 = s + 0.5 * h * ks1
        kc2 = _mm(a2, c2) + b2
        as2 = _mm(a2, s2)
        ks2 = as2 + as2.T + n2

        c3 = c + 0.5 * h * kc2
        s3 = s + 0.5 * h * ks2
        kc3 = _mm(a2, c3) + b2
        as3 = _mm(a2, s3)
        ks3 = as3 + as3.T + n2

        c4 = c + h * kc3
        s4 = s + h * ks3
        kc4 = _mm(a3, c4) + b3
        as4 = _mm(a3, s4)
        ks4 = as4 + as4.T + n3

        c = c + (h / 6.0) * (kc1 + 2.0 * kc2 + 2.0 * kc3 + kc4)
        s = s + (h / 6.0) * (ks1 + 2.0 * ks2 + 2.0 * ks3 + ks4)
        s = 0.5 * (s + s.T)
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(s))):
            return out_c, out_s, step + 1
        out_c[step + 1] = c
        out_s[step + 1] = s
    return out_c, out_s, -1


def linear_moments_rk4(c0, s0, a_tab, b_tab, n_tab, grid: TimeGrid):
    """RK4 for the mean/covariance pair

        C' = A(t) C + B(t),    S' = A(t) S + S A(t)^T + N(t),

    with coefficients given per step as (n_steps, 3, ...) stage tables (left
    node, midpoint, right node). Returns (C, S) at every node.
    """
    a_tab = np.ascontiguousarray(a_tab, dtype=float)
    b_tab = np.ascontiguousarray(b_tab, dtype=float)
    n_tab = np.ascontiguousarray(n_tab, dtype=float)
    if not (len(a_tab) == len(b_tab) == len(n_tab) == grid.n_steps):
        raise ValueError("coefficient tables do not match the grid")
    out_c, out_s, bad = _linear_moments_rk4(
        np.ascontiguousarray(c0, dtype=float), np.ascontiguousarray(s0, dtype=float),
        a_tab, b_tab, n_tab, float(grid.h),
    )
    if bad >= 0:
        t = float(grid.nodes[bad])
        raise NonFinite(f"moment ODE non-finite at t={t:.6g}", time=t)
    return out_c, out_s


def trapezoid(values: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Composite trapezoid rule on a uniform grid."""
    values = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    if len(values) < 2:
        return np.zeros(values.shape[1:])
    return h * (values.sum(axis=0) - 0.5 * (values[0] + values[-1]))


def simpson_tail(half_step_values: np.ndarray, h: float) -> np.ndarray:
    """``out[k] = integral from node k to the last node`` by Simpson's rule on
    each step, using samples at nodes and midpoints (length 2n+1)."""
    f = np.asarray(half_step_values, dtype=float)
    per_step = (h / 6.0) * (f[0:-1:2] + 4.0 * f[1::2] + f[2::2])
    tail = np.zeros((len(per_step) + 1,) + f.shape[1:])
    tail[:-1] = np.cumsum(per_step[::-1], axis=0)[::-1]
    return tail
