"""Additive and multiplicative regret of Bayesian controllers, the
constant-regret prior and the flat-prior limit of the additive regret."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import BadHorizon, DegenerateOptimal, NoConvergence
from .model import PriorSpec, SystemSpec, TimeGrid
from .moments import (
    CostQuadratic,
    compute_cost_quadratic,
    compute_cost_quadratic_star,
    propagate_bayesian_moments,
    propagate_known_a_moments,
)
from .numerics import find_root
from .riccati import (
    ControlGain,
    solve_control_riccati,
    solve_estimation_riccati,
    solve_known_a_riccati,
)


def bayesian_cost(spec: SystemSpec, prior: PriorSpec, grid: TimeGrid,
                  gain: ControlGain | None = None) -> CostQuadratic:
    """(X, Y) of the Bayesian controller for ``prior``; pass ``gain`` to reuse S."""
    if gain is None:
        gain = solve_control_riccati(spec, grid)
    cov = solve_estimation_riccati(spec, prior, grid)
    moments = propagate_bayesian_moments(spec, prior, gain, cov, grid)
    return compute_cost_quadratic(moments, gain, spec)


def known_a_cost(spec: SystemSpec, grid: TimeGrid,
                 gain: ControlGain | None = None) -> CostQuadratic:
    """(X*, Y*) of the optimal known-drift controller."""
    if gain is None:
        gain = solve_control_riccati(spec, grid)
    cov_star = solve_known_a_riccati(spec, grid)
    moments = propagate_known_a_moments(spec, gain, cov_star, grid)
    return compute_cost_quadratic_star(moments, gain, spec)


@dataclass(frozen=True, eq=False)
class RegretReport:
    """Regret of a Bayesian controller against the known-drift optimum.

    ``mr_at_infinity`` holds the generalized eigenvalues of (X, X*), the limits
    of ``mr`` along the corresponding directions as |a| grows.
    """

    bayes: CostQuadratic
    star: CostQuadratic
    mr_at_zero: float
    mr_at_infinity: np.ndarray
    worst_case_mr: float

    def mr(self, a) -> float:
        return self.bayes(a) / self.star(a)

    def ar(self, a) -> float:
        return self.bayes(a) - self.star(a)


@dataclass(frozen=True)
class BoundsReport:
    ar_lower: float
    ar_upper: float
    mr_lower: float
    mr_upper: float


def _generalized_spectrum(x: np.ndarray, x_star: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.eigh(x, x_star, eigvals_only=True)
    except np.linalg.LinAlgError:
        raise DegenerateOptimal("X* is not positive definite; MR is unbounded") from None


def regret_report(bayes: CostQuadratic, star: CostQuadratic) -> RegretReport:
    """MR and AR as functions of the drift, with the exact worst-case MR.

    Along a generalized eigen-direction v of (X, X*) with eigenvalue lam the
    ratio (s lam + Y) / (s + Y*), s = |a|^2 scale, is monotone in s, so the
    supremum over a is max(Y/Y*, max lam).
    """
    if not star.y_scalar > 0:
        raise DegenerateOptimal(f"Y* = {star.y_scalar} (control window is empty?)")
    spectrum = _generalized_spectrum(bayes.x_mat, star.x_mat)
    mr0 = bayes.y_scalar / star.y_scalar
    return RegretReport(
        bayes=bayes,
        star=star,
        mr_at_zero=mr0,
        mr_at_infinity=spectrum,
        worst_case_mr=float(max(mr0, spectrum.max())),
    )


def theorem1_bounds(bayes: CostQuadratic, star: CostQuadratic, prior: PriorSpec,
                    tol: float = 1e-12) -> BoundsReport:
    """Prior-averaged regret (lower) and worst-case regret (upper) of the
    Bayesian strategy; for a Gaussian prior E[a^T M a] = tr(M Sigma)."""
    sigma = prior.sigma_prior
    dx = bayes.x_mat - star.x_mat
    dy = bayes.y_scalar - star.y_scalar
    ar_lower = float(np.trace(dx @ sigma) + dy)
    lam_max = float(np.linalg.eigvalsh(0.5 * (dx + dx.T)).max())
    scale = max(1.0, float(np.abs(star.x_mat).max()))
    ar_upper = np.inf if lam_max > tol * scale else dy
    mr_lower = float((np.trace(bayes.x_mat @ sigma) + bayes.y_scalar)
                     / (np.trace(star.x_mat @ sigma) + star.y_scalar))
    mr_upper = regret_report(bayes, star).worst_case_mr
    return BoundsReport(ar_lower=ar_lower, ar_upper=float(ar_upper),
                        mr_lower=mr_lower, mr_upper=mr_upper)


def mr_residual(sigma_prior: PriorSpec, spec: SystemSpec, grid: TimeGrid,
                gain: ControlGain | None = None,
                star: CostQuadratic | None = None) -> np.ndarray:
    """X - (Y/Y*) X*; zero exactly when MR(a) does not depend on a."""
    if gain is None:
        gain = solve_control_riccati(spec, grid)
    if star is None:
        star = known_a_cost(spec, grid, gain)
    if not star.y_scalar > 0:
        raise DegenerateOptimal(f"Y* = {star.y_scalar}")
    bayes = bayesian_cost(spec, sigma_prior, grid, gain)
    return bayes.x_mat - (bayes.y_scalar / star.y_scalar) * star.x_mat


@dataclass(frozen=True, eq=False)
class ConstantMRSolution:
    prior: PriorSpec
    report: RegretReport
    sigma: float  # prior standard deviation, Sigma = sigma^2 I
    iterations: int
    residual: float  # max-norm of X - (Y/Y*) X*


def _isotropic_check(spec: SystemSpec) -> None:
    if spec.d == 1:
        return
    eye = np.eye(spec.d)
    for name in ("sigma_v", "sigma_w", "q_weight", "r_weight", "sigma_q0"):
        m = getattr(spec, name)
        if not np.allclose(m, m[0, 0] * eye, rtol=0, atol=1e-14):
            raise ValueError(f"isotropic prior solve needs {name} proportional to I")


def _bracket(fn, p0: float, step: float = np.log(4.0), max_expand: int = 40):
    """Walk from ``p0`` in the direction that reduces |fn| until the sign flips."""
    f0 = fn(p0)
    if f0 == 0.0:
        return p0, p0
    # the residual falls with sigma^2 (more learning shrinks X relative to X*)
    direction = 1.0 if f0 > 0 else -1.0
    lo, f_lo = p0, f0
    for _ in range(max_expand):
        hi = lo + direction * step
        f_hi = fn(hi)
        if np.sign(f_hi) != np.sign(f_lo):
            return (lo, hi) if lo < hi else (hi, lo)
        lo, f_lo = hi, f_hi
        step *= 1.5
    raise NoConvergence(f"no sign change of the MR residual found from log sigma^2 = {p0:.3g}",
                        best=float(np.exp(0.5 * lo)), residual=abs(f_lo), iterations=max_expand)


def solve_constant_mr_prior(spec: SystemSpec, grid: TimeGrid, init_sigma: float = 1.0,
                            tol: float = 1e-10, max_iter: int = 50) -> ConstantMRSolution:
    """Find sigma with X(sigma^2 I) = (Y/Y*) X* by Newton in p = log sigma^2.

    The residual is normalized by ||X*|| so ``tol`` is relative. S and the
    known-drift quadratic are computed once and reused across iterations.
    Newton steps are capped; if Newton stalls (the residual is nearly flat
    for small sigma) the root is bracketed by a sign change and refined with
    Brent's method.
    """
    _isotropic_check(spec)
    if not init_sigma > 0:
        raise ValueError(f"init_sigma must be positive, got {init_sigma}")
    d = spec.d
    gain = solve_control_riccati(spec, grid)
    star = known_a_cost(spec, grid, gain)
    scale = float(np.abs(star.x_mat).max())

    def prior_of(p):
        return PriorSpec(float(np.exp(p)) * np.eye(d))

    def scalar_residual(p):
        r = mr_residual(prior_of(p), spec, grid, gain, star)
        return float(np.trace(r) / d / scale)

    p0 = 2.0 * np.log(init_sigma)
    try:
        root = find_root(lambda p: np.array([scalar_residual(p[0])]), [p0], tol=tol,
                         max_iter=max_iter, max_step=2.0)
        p_star, iterations = float(root.x[0]), root.iterations
    except NoConvergence:
        lo, hi = _bracket(scalar_residual, p0)
        p_star, info = scipy.optimize.brentq(scalar_residual, lo, hi, xtol=1e-14, rtol=1e-14,
                                             maxiter=200, full_output=True)
        iterations = info.iterations
        if abs(scalar_residual(p_star)) > max(tol, 1e3 * np.finfo(float).eps):
            raise NoConvergence("bracketed solve did not reach the tolerance",
                                best=float(np.exp(0.5 * p_star)),
                                residual=abs(scalar_residual(p_star)), iterations=iterations)
    prior = prior_of(p_star)
    bayes = bayesian_cost(spec, prior, grid, gain)
    full = bayes.x_mat - (bayes.y_scalar / star.y_scalar) * star.x_mat
    return ConstantMRSolution(
        prior=prior,
        report=regret_report(bayes, star),
        sigma=float(np.exp(0.5 * p_star)),
        iterations=iterations,
        residual=float(np.abs(full).max()),
    )


def solve_constant_mr_prior_matrix(spec: SystemSpec, grid: TimeGrid, init_prior: PriorSpec,
                                   tol: float = 1e-10, max_iter: int = 50) -> ConstantMRSolution:
    """General d > 1 solve over all d(d+1)/2 entries of Sigma = L L^T.

    Parameterized by the Cholesky factor with log-diagonal so Sigma stays
    positive definite.
    """
    d = spec.d
    gain = solve_control_riccati(spec, grid)
    star = known_a_cost(spec, grid, gain)
    scale = float(np.abs(star.x_mat).max())
    rows, cols = np.tril_indices(d)

    def prior_of(p):
        low = np.zeros((d, d))
        low[rows, cols] = p
        low[np.diag_indices(d)] = np.exp(np.diag(low))
        return PriorSpec(low @ low.T)

    def residual(p):
        r = mr_residual(prior_of(p), spec, grid, gain, star)
        return r[rows, cols] / scale

    low0 = np.linalg.cholesky(init_prior.sigma_prior)
    low0[np.diag_indices(d)] = np.log(np.diag(low0))
    root = find_root(residual, low0[rows, cols], tol=tol, max_iter=max_iter)
    prior = prior_of(root.x)
    bayes = bayesian_cost(spec, prior, grid, gain)
    full = bayes.x_mat - (bayes.y_scalar / star.y_scalar) * star.x_mat
    return ConstantMRSolution(
        prior=prior,
        report=regret_report(bayes, star),
        sigma=float(np.sqrt(np.trace(prior.sigma_prior) / d)),
        iterations=root.iterations,
        residual=float(np.abs(full).max()),
    )


@dataclass(frozen=True)
class ARLimitRow:
    sigma_sq: float
    x_gap_norm: float
    y_gap: float


@dataclass(frozen=True, eq=False)
class ARLimitReport:
    """X - X* and Y - Y* along an increasing prior-variance schedule.

    ``x_gap`` and ``y_gap`` are the values at the largest variance, the
    estimate of the flat-prior limit; ``decay_ratios[i]`` is
    ||X - X*|| at entry i divided by that at entry i+1. ``y_gap_change`` is
    the relative change of the y gap over the last two entries. It converges
    much more slowly than X when t0 is small, so a large value means the
    schedule has not reached the limit.
    """

    x_gap: np.ndarray
    y_gap: float
    x_star_norm: float
    table: tuple[ARLimitRow, ...]
    decay_ratios: np.ndarray
    y_gap_change: float = float("nan")


def ar_limit(spec: SystemSpec, grid: TimeGrid,
             sigma_schedule: Sequence[float] = (1e2, 1e4, 1e6)) -> ARLimitReport:
    """Evaluate the additive-regret quadratic for priors sigma^2 I, with
    ``sigma_schedule`` listing the variances sigma^2 in increasing order."""
    if not spec.t0 > 0:
        raise BadHorizon("the flat-prior limit needs a positive control start t0")
    sched = [float(s) for s in sigma_schedule]
    if not sched or any(s <= 0 for s in sched) or any(b <= a for a, b in zip(sched, sched[1:])):
        raise ValueError(f"schedule must be positive and increasing, got {sched}")
    gain = solve_control_riccati(spec, grid)
    star = known_a_cost(spec, grid, gain)
    rows = []
    x_gap = None
    for s2 in sched:
        bayes = bayesian_cost(spec, PriorSpec(s2 * np.eye(spec.d)), grid, gain)
        x_gap = bayes.x_mat - star.x_mat
        rows.append(ARLimitRow(s2, float(np.linalg.norm(x_gap, 2)), bayes.y_scalar - star.y_scalar))
    norms = np.array([r.x_gap_norm for r in rows])
    change = (abs(rows[-1].y_gap - rows[-2].y_gap) / abs(rows[-1].y_gap)
              if len(rows) > 1 else float("nan"))
    return ARLimitReport(
        x_gap=x_gap,
        y_gap=rows[-1].y_gap,
        x_star_norm=float(np.linalg.norm(star.x_mat, 2)),
        table=tuple(rows),
        decay_ratios=norms[:-1] / norms[1:],
        y_gap_change=float(change),
    )


def mr_scan(report: RegretReport, values: np.ndarray) -> np.ndarray:
    """MR on a 1-D grid of drifts (scalar systems)."""
    return np.array([report.mr(a) for a in np.asarray(values, dtype=float)])


RegretFn = Callable[[np.ndarray], float]
