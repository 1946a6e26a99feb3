"""Independent reference computations used only by the tests."""

import math

import numpy as np


def i0_series(x, tol=1e-16):
    # sum (x/2)^{2k} / (k!)^2 with exact factorials
    total, k = 0.0, 0
    while True:
        term = (x / 2.0) ** (2 * k) / math.factorial(k) ** 2
        total += term
        if term < tol * total:
            return total
        k += 1


def central_diff(f, params, h=1e-5):
    """Central finite-difference gradient of scalar f() w.r.t. arrays in ``params`` (mutated in place)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + h
            up = f()
            p[idx] = old - h
            down = f()
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric, abs_floor=1e-8):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        diff = np.abs(a - n)
        scale = np.maximum(np.abs(a), np.abs(n))
        rel = np.where(scale > abs_floor, diff / np.maximum(scale, 1e-300), diff / abs_floor * 1e-5)
        worst = max(worst, float(rel.max(initial=0.0)))
    return worst


def linear_kalman(observations, omega0, beta, noise_scale, dt, obs_sd, m0, p0):
    """Textbook Kalman filter for the linear damped oscillator, Joseph-form update."""
    a = np.array([[1.0, dt], [-(omega0**2) * dt, 1.0 - beta * dt]])
    q = np.array([[0.0, 0.0], [0.0, noise_scale**2 * dt]])
    h = np.array([[1.0, 0.0]])
    r = np.array([[obs_sd**2]])
    m, p = np.array(m0, float), np.array(p0, float)
    means, covs = [], []
    for y in observations:
        m = a @ m
        p = a @ p @ a.T + q
        s = h @ p @ h.T + r
        k = p @ h.T @ np.linalg.inv(s)
        m = m + (k @ (np.array([y]) - h @ m))
        ikh = np.eye(2) - k @ h
        p = ikh @ p @ ikh.T + k @ r @ k.T
        means.append(m.copy())
        covs.append(p.copy())
    return np.array(means), np.array(covs)


def truncated_t3_mean():
    """E[T | T > 0] for Student t with 3 dof, by quadrature."""
    from scipy.integrate import quad

    def dens(t):
        return 2.0 / (math.pi * math.sqrt(3.0) * (1.0 + t * t / 3.0) ** 2)

    mass = quad(dens, 0, np.inf)[0]
    first = quad(lambda t: t * dens(t), 0, np.inf)[0]
    return first / mass
