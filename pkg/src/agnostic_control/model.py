"""Problem instances, time grids and the augmented [q; a] state-space model.

The controlled system is

    dq = (a + u) dt + dW,    dy = q dt + dV,

with an unknown constant drift ``a``. Stacking ``x = [q; a]`` turns it into a
standard LQG problem with

    F = [[0, I], [0, 0]],  B = G = [I; 0],  H = [I, 0],  Q~ = blockdiag(Q, 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    AsymmetricMatrix,
    BadHorizon,
    DimensionMismatch,
    GridMismatch,
    NonPositiveDefinite,
)

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def _as_matrix(value, d: int, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.shape == (1, 1) and d > 1:
        arr = arr[0, 0] * np.eye(d)
    if arr.shape != (d, d):
        raise DimensionMismatch(f"{name} has shape {arr.shape}, expected ({d}, {d})")
    return arr


def _symmetrized(m: np.ndarray, name: str) -> np.ndarray:
    asym = np.max(np.abs(m - m.T)) if m.size else 0.0
    if asym > SYMMETRY_TOL:
        raise AsymmetricMatrix(f"{name} is asymmetric (max |M - M^T| = {asym:.3g})")
    return 0.5 * (m + m.T)


def _check_pd(m: np.ndarray, name: str) -> None:
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NonPositiveDefinite(f"{name} is not positive definite") from None


def _check_psd(m: np.ndarray, name: str) -> None:
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    lo = float(np.min(np.linalg.eigvalsh(m)))
    if lo < -PSD_TOL * scale:
        raise NonPositiveDefinite(f"{name} has negative eigenvalue {lo:.3g}")


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """One problem instance.

    All matrices are covariances or weights (not standard deviations).
    ``sigma_w`` defaults to the identity, matching the usual rescaling of the
    process noise.
    """

    d: int
    sigma_v: np.ndarray
    q_weight: np.ndarray
    r_weight: np.ndarray
    sigma_q0: np.ndarray
    t_final: float
    t0: float = 0.0
    sigma_w: np.ndarray | None = None

    @classmethod
    def scalar(
        cls,
        sigma_v: float = 1.0,
        sigma_w: float = 1.0,
        sigma_q0: float = 1.0,
        q: float = 1.0,
        r: float = 1.0,
        t_final: float = 1.0,
        t0: float = 0.0,
    ) -> "SystemSpec":
        """Scalar instance from *standard deviations* ``sigma_v``, ``sigma_w``,
        ``sigma_q0`` and weights ``q``, ``r``; returns a validated spec."""
        return validate_spec(
            cls(
                d=1,
                sigma_w=[[sigma_w**2]],
                sigma_v=[[sigma_v**2]],
                q_weight=[[q]],
                r_weight=[[r]],
                sigma_q0=[[sigma_q0**2]],
                t0=t0,
                t_final=t_final,
            )
        )

    @classmethod
    def isotropic(cls, d: int, sigma_v: float = 1.0, sigma_w: float = 1.0,
                  sigma_q0: float = 1.0, q: float = 1.0, r: float = 1.0,
                  t_final: float = 1.0, t0: float = 0.0) -> "SystemSpec":
        eye = np.eye(d)
        return validate_spec(
            cls(d=d, sigma_w=sigma_w**2 * eye, sigma_v=sigma_v**2 * eye,
                q_weight=q * eye, r_weight=r * eye, sigma_q0=sigma_q0**2 * eye,
                t0=t0, t_final=t_final)
        )

    def with_horizon(self, t_final: float | None = None, t0: float | None = None) -> "SystemSpec":
        return validate_spec(
            replace(
                self,
                t_final=self.t_final if t_final is None else t_final,
                t0=self.t0 if t0 is None else t0,
            )
        )

    def replace(self, **changes) -> "SystemSpec":
        return validate_spec(replace(self, **changes))

    @property
    def r_inv(self) -> np.ndarray:
        return np.linalg.inv(self.r_weight)

    @property
    def sigma_v_inv(self) -> np.ndarray:
        return np.linalg.inv(self.sigma_v)


def validate_spec(raw: SystemSpec) -> SystemSpec:
    """Check every invariant of ``raw`` and return a frozen, symmetrized copy."""
    d = raw.d
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise DimensionMismatch(f"d must be a positive integer, got {d!r}")
    d = int(d)
    sigma_w = np.eye(d) if raw.sigma_w is None else raw.sigma_w
    mats = {
        "sigma_w": _as_matrix(sigma_w, d, "sigma_w"),
        "sigma_v": _as_matrix(raw.sigma_v, d, "sigma_v"),
        "q_weight": _as_matrix(raw.q_weight, d, "q_weight"),
        "r_weight": _as_matrix(raw.r_weight, d, "r_weight"),
        "sigma_q0": _as_matrix(raw.sigma_q0, d, "sigma_q0"),
    }
    for name in mats:
        if not np.all(np.isfinite(mats[name])):
            raise NonPositiveDefinite(f"{name} has non-finite entries")
        mats[name] = _symmetrized(mats[name], name)
    for name in ("sigma_v", "r_weight"):
        _check_pd(mats[name], name)
    for name in ("sigma_w", "q_weight", "sigma_q0"):
        _check_psd(mats[name], name)
    t0, t_final = float(raw.t0), float(raw.t_final)
    if not (math.isfinite(t0) and math.isfinite(t_final)) or t0 < 0 or t0 >= t_final:
        raise BadHorizon(f"need 0 <= t0 < t_final, got t0={t0}, t_final={t_final}")
    return SystemSpec(
        d=d,
        t0=t0,
        t_final=t_final,
        **{k: _frozen(v) for k, v in mats.items()},
    )


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Zero-mean Gaussian prior N(0, sigma_prior) on the drift."""

    sigma_prior: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.sigma_prior, dtype=float))
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"prior covariance must be square, got {m.shape}")
        m = _symmetrized(m, "sigma_prior")
        _check_psd(m, "sigma_prior")
        object.__setattr__(self, "sigma_prior", _frozen(m))

    @classmethod
    def isotropic(cls, variance: float, d: int = 1) -> "PriorSpec":
        return cls(variance * np.eye(d))

    @property
    def d(self) -> int:
        return self.sigma_prior.shape[0]


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    f_mat: np.ndarray
    b_mat: np.ndarray
    g_mat: np.ndarray
    h_mat: np.ndarray
    q_tilde: np.ndarray


def augment(spec: SystemSpec) -> AugmentedSystem:
    d = spec.d
    eye, zero = np.eye(d), np.zeros((d, d))
    f_mat = np.block([[zero, eye], [zero, zero]])
    b_mat = np.vstack([eye, zero])
    h_mat = np.hstack([eye, zero])
    q_tilde = np.block([[spec.q_weight, zero], [zero, zero]])
    return AugmentedSystem(
        f_mat=_frozen(f_mat),
        b_mat=_frozen(b_mat),
        g_mat=_frozen(b_mat),
        h_mat=_frozen(h_mat),
        q_tilde=_frozen(q_tilde),
    )


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_start + k*h`` for ``k = 0..n_steps``."""

    t_start: float
    t_end: float
    n_steps: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not self.t_end > self.t_start:
            raise ValueError(f"empty grid [{self.t_start}, {self.t_end}]")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        nodes = self.t_start + self.h * np.arange(self.n_steps + 1)
        nodes[-1] = self.t_end
        object.__setattr__(self, "nodes", _frozen(nodes))

    @property
    def h(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    def __len__(self) -> int:
        return self.n_steps + 1

    def half_steps(self) -> np.ndarray:
        """Nodes and step midpoints, length ``2*n_steps + 1``."""
        t = self.t_start + 0.5 * self.h * np.arange(2 * self.n_steps + 1)
        t[-1] = self.t_end
        return t

    def index_of(self, t: float) -> int:
        """Index of the node equal to ``t`` (to rounding); GridMismatch otherwise."""
        k = round((t - self.t_start) / self.h)
        if k < 0 or k > self.n_steps or abs(self.nodes[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise GridMismatch(f"t={t} is not a node of {self}")
        return int(k)

    def contains(self, t: float) -> bool:
        try:
            self.index_of(t)
        except GridMismatch:
            return False
        return True

    def refined(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.t_start, self.t_end, self.n_steps * factor)

    @classmethod
    def for_spec(cls, spec: SystemSpec, steps_per_unit: float = 1e4,
                 min_steps: int = 200) -> "TimeGrid":
        """Grid on [0, t_final] fine enough for ``steps_per_unit`` that has the
        control start ``t0`` as a node."""
        return cls.aligned(0.0, spec.t_final, steps_per_unit, must_contain=spec.t0,
                           min_steps=min_steps)

    @classmethod
    def aligned(cls, t_start: float, t_end: float, steps_per_unit: float,
                must_contain: float | None = None, min_steps: int = 1,
                max_tries: int = 100_000) -> "TimeGrid":
        n = max(int(min_steps), int(math.ceil(steps_per_unit * (t_end - t_start) - 1e-9)))
        if must_contain is None or must_contain == t_start:
            return cls(t_start, t_end, n)
        frac = (must_contain - t_start) / (t_end - t_start)
        for m in range(n, n + max_tries):
            k = frac * m
            if abs(k - round(k)) < 1e-9 * max(1.0, k):
                return cls(t_start, t_end, m)
        raise GridMismatch(
            f"no uniform grid with about {n} steps on [{t_start}, {t_end}] has {must_contain} as a node"
        )


def read_matrix(path: str | Path) -> np.ndarray:
    """Read a whitespace-separated matrix, one row per line."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([float(tok) for tok in line.split()])
    if not rows:
        raise DimensionMismatch(f"{path}: no matrix rows")
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise DimensionMismatch(f"{path}: ragged rows (widths {sorted(width)})")
    return np.array(rows, dtype=float)


def write_matrix(path: str | Path, m) -> None:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    Path(path).write_text("".join(" ".join(f"{v:.17g}" for v in row) + "\n" for row in m))
