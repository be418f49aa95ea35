"""Willmore flow of round spheres in R^n."""
from __future__ import annotations

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DegenerateDimensionError, DomainError, ExtinctionError

N_MAX = 12
EXTINCTION_FLOOR = 1e-6


def check_dimension(n, allow_degenerate=True):
    if int(n) != n or not 1 <= n <= N_MAX:
        raise DomainError(f"dimension must be an integer in 1..{N_MAX}, got {n}")
    if not allow_degenerate and n in (1, 3):
        raise DegenerateDimensionError(
            f"n={n}: the sphere radius is stationary, there is no self-similar radius")
    return int(n)


def sphere_area(n):
    """Surface area of the unit sphere S^(n-1) in R^n."""
    return 2.0 * np.pi ** (n / 2) / gamma_fn(n / 2)


def gamma_n(n, t):
    """Radius (-2 (n-3) (n-1)^2 t)^(1/4) of the self-similar Willmore sphere.

    Valid for n = 2 with t >= 0 and for n >= 4 with t <= 0.
    """
    n = check_dimension(n, allow_degenerate=False)
    t = np.asarray(t, dtype=float)
    ok = (t >= 0) if n == 2 else (t <= 0)
    if not np.all(ok):
        need = "t >= 0" if n == 2 else "t <= 0"
        raise DomainError(f"n={n} requires {need}")
    return (-2.0 * (n - 3) * (n - 1) ** 2 * t) ** 0.25


def gamma_n_dot(n, t):
    """Time derivative of :func:`gamma_n`."""
    g = gamma_n(n, t)
    return -0.5 * (n - 3) * (n - 1) ** 2 / g**3


def willmore_rhs(n, gamma):
    """Normal velocity of a sphere of radius gamma: -((n-1)/g)^3/2 + (n-1)^2/g^3."""
    n = check_dimension(n)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise DomainError("radius must be positive")
    k = n - 1
    return -0.5 * (k / gamma) ** 3 + k * k / gamma**3


def integrate_willmore(n, gamma0, t0, t1, dt):
    """Classical RK4 integration of gamma' = willmore_rhs(n, gamma).

    Returns
    -------
    t, g : ndarray
        Time nodes (last step shortened to land on ``t1``) and radii.

    Raises
    ------
    ExtinctionError
        If the radius drops below 1e-6.  For shrinking spheres (n >= 4)
        the run never goes past t = -dt.
    """
    n = check_dimension(n)
    if gamma0 <= 0:
        raise DomainError("initial radius must be positive")
    if not (dt > 0 and t1 > t0):
        raise ValueError("need dt > 0 and t1 > t0")
    if n >= 4 and t1 > -dt:
        t1 = -dt
    steps = int(np.ceil((t1 - t0) / dt - 1e-12))
    if steps < 1000:
        raise ValueError(f"dt gives only {steps} steps; at least 1000 are required")
    t = np.empty(steps + 1)
    g = np.empty(steps + 1)
    t[0], g[0] = t0, gamma0
    f = lambda y: willmore_rhs(n, y)
    for i in range(steps):
        h = min(dt, t1 - t[i])
        y = g[i]
        try:
            k1 = f(y)
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
        except DomainError:
            raise ExtinctionError("radius left the domain during a step", t[i]) from None
        g[i + 1] = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        t[i + 1] = t[i] + h
        if g[i + 1] < EXTINCTION_FLOOR:
            raise ExtinctionError(f"radius fell below {EXTINCTION_FLOOR}", t[i + 1])
    return t, g


def willmore_energy_sphere(n, gamma):
    """Willmore energy (1/2) |S^(n-1)| g^(n-1) ((n-1)/g)^2 of a round sphere."""
    n = check_dimension(n)
    if np.any(np.asarray(gamma) <= 0):
        raise DomainError("radius must be positive")
    return 0.5 * sphere_area(n) * gamma ** (n - 1) * ((n - 1) / gamma) ** 2
