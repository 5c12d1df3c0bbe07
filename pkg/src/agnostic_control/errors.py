"""Exception types raised across the package."""

import numpy as np


class NonPositiveDefinite(ValueError):
    """A matrix required to be positive (semi)definite is not."""


class BadHorizon(ValueError):
    """Control start and horizon are inconsistent (need 0 <= t0 < t_final)."""


class DimensionMismatch(ValueError):
    """Array shapes disagree with the declared state dimension."""


class AsymmetricMatrix(DimensionMismatch):
    """A covariance or weight matrix is asymmetric beyond tolerance."""


class GridMismatch(ValueError):
    """Trajectories live on different time grids, or a time is not a node."""


class NonFinite(ArithmeticError):
    """NaN or inf appeared during integration or simulation."""

    def __init__(self, message, time=None, trial=None):
        super().__init__(message)
        self.time = time
        self.trial = trial


class Singular(np.linalg.LinAlgError):
    """Linear system is numerically singular."""


class NoConvergence(RuntimeError):
    """Iteration limit hit; ``best`` holds the best iterate found."""

    def __init__(self, message, best=None, residual=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


class DegenerateOptimal(ValueError):
    """The known-drift optimal cost offset is zero, so ratios are undefined."""
