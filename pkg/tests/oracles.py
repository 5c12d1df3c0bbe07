"""Independent reference computations used by the tests.

Nothing here calls the package's solvers; each function is either a closed
form or a straightforward, slow re-derivation.
"""

import numpy as np


def control_riccati_scalar(t, t_final):
    """S11 and S12 of the scalar problem with Q = R = 1."""
    tau = t_final - np.asarray(t, dtype=float)
    return np.tanh(tau), 1.0 - 1.0 / np.cosh(tau)


def estimation_cov_unit(t, sigma_sq):
    """P(t) for sigma_w = sigma_v = sigma_q0 = 1 and prior variance sigma_sq."""
    t = np.asarray(t, dtype=float)
    den = sigma_sq * (2 * t - 3 + 4 * np.exp(-t) - np.exp(-2 * t)) + 2
    p11 = ((2 * t - 1 + np.exp(-2 * t)) * sigma_sq + 2) / den
    p12 = 2 * sigma_sq * (1 - np.exp(-t)) / den
    p22 = 2 * sigma_sq / den
    return np.stack([np.stack([p11, p12], -1), np.stack([p12, p22], -1)], -2)


def error_dynamics_unit(t, sigma_sq, a):
    """Mean filter error e = (E q - E q_hat, a - E a_hat) for the unit instance."""
    t = np.asarray(t, dtype=float)
    den = sigma_sq * (2 * t - 3 + 4 * np.exp(-t) - np.exp(-2 * t)) + 2
    return np.stack([2 * a * (1 - np.exp(-t)) / den, 2 * a / den], -1)


def rk4_matrix(field, x0, t0, t1, n):
    """Plain RK4 on a matrix ODE, no compiled code."""
    h = (t1 - t0) / n
    x = np.array(x0, dtype=float)
    out = [x.copy()]
    for k in range(n):
        t = t0 + k * h
        k1 = field(t, x)
        k2 = field(t + h / 2, x + h / 2 * k1)
        k3 = field(t + h / 2, x + h / 2 * k2)
        k4 = field(t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(x.copy())
    return np.array(out)


def sampled_kalman_drift(y, h, sigma_v, sigma_w, prior_var):
    """Drift estimate from scalar observations y(t_k), t_k = k h, with q(0) = 0.

    Exact discrete-time Kalman filter: over each step the pair
    (dW, int W ds + dV) is jointly Gaussian, so the update is the exact
    Gaussian conditional rather than an Euler approximation.
    """
    x = np.zeros(2)
    p = np.diag([0.0, prior_var])
    phi = np.array([[1.0, h], [0.0, 1.0]])
    c = np.array([h, h * h / 2])
    var_w, var_v = sigma_w**2, sigma_v**2
    q_qq, q_qy, q_yy = var_w * h, var_w * h * h / 2, var_w * h**3 / 3 + var_v * h
    for k in range(len(y) - 1):
        dy = y[k + 1] - y[k]
        mx, my = phi @ x, c @ x
        sxx = phi @ p @ phi.T + np.array([[q_qq, 0.0], [0.0, 0.0]])
        sxy = phi @ p @ c + np.array([q_qy, 0.0])
        syy = c @ p @ c + q_yy
        gain = sxy / syy
        x = mx + gain * (dy - my)
        p = sxx - np.outer(gain, sxy)
    return x[1]


def simulate_uncontrolled(rng, a, n_fine, t_final, sigma_v=1.0, sigma_w=1.0):
    """Euler paths of q and y on a fine grid with q(0) = 0 and u = 0."""
    h = t_final / n_fine
    dw = rng.normal(scale=sigma_w * np.sqrt(h), size=n_fine)
    dv = rng.normal(scale=sigma_v * np.sqrt(h), size=n_fine)
    q = np.concatenate([[0.0], np.cumsum(a * h + dw)])
    y = np.concatenate([[0.0], np.cumsum(q[:-1] * h + dv)])
    return q, y


def gls_drift(y_nodes, t_nodes, sigma_v=1.0, sigma_w=1.0):
    """Generalized least squares for a in y = a t^2/2 + noise, using the
    covariance of the noise process at t_1..t_n."""
    s = np.asarray(t_nodes[1:], dtype=float)
    lo = np.minimum.outer(s, s)
    hi = np.maximum.outer(s, s)
    cov = sigma_v**2 * lo + sigma_w**2 * (0.5 * lo**2 * hi - lo**3 / 6)
    v = s**2 / 2
    g = np.linalg.solve(cov, v)
    return g @ np.asarray(y_nodes[1:]) / (g @ v)
