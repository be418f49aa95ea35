"""Biharmonic heat kernels, the damped 1-D kernel Q, Duhamel sums and mild solutions.

The profile of the biharmonic heat kernel in R^n is

    f_n(s) = s^(1-n) int_0^inf exp(-r^4) (s r)^(n/2) J_((n-2)/2)(s r) dr
           = int_0^inf exp(-r^4) r^(n-1) Lambda_nu(s r) dr,

with Lambda_nu(x) = x^-nu J_nu(x), which is regular at the origin.  The
kernel is p_n(t, x) = abar_n t^(-n/4) f_n(|x| t^(-1/4)) with
abar_n = (2 pi)^(-n/2) from Fourier inversion of exp(-t |xi|^4).
"""
from __future__ import annotations

from dataclasses import dataclass
from math import gamma as gamma_fn

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .errors import DomainError, LipschitzViolationError, NumericalError
from .geometry import sphere_area

_GX, _GW = np.polynomial.legendre.leggauss(20)


# ----------------------------------------------------------------------
# Bessel functions of the first kind
# ----------------------------------------------------------------------
CROSSOVER = 12.0


def _lambda_series(nu, x, terms=70):
    """x^-nu J_nu(x) from the ascending series."""
    q = -0.25 * x * x
    term = np.full_like(x, 2.0**-nu / gamma_fn(nu + 1.0))
    total = term.copy()
    for k in range(terms):
        term = term * q / ((k + 1.0) * (k + nu + 1.0))
        total += term
    return total


def _j_asymptotic(nu, x):
    """Hankel expansion truncated at its smallest term."""
    mu = 4.0 * nu * nu
    P = np.ones_like(x)
    Q = np.zeros_like(x)
    a = np.ones_like(x)  # a_k(nu) / x^k
    last = np.full_like(x, np.inf)
    active = np.ones_like(x, dtype=bool)
    for k in range(1, 60):
        a = a * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        size = np.abs(a)
        active &= size < last
        last = np.where(active, size, last)
        contrib = np.where(active, a, 0.0)
        # P collects even k with sign (-1)^(k/2), Q odd k with sign (-1)^((k-1)/2)
        if k % 2 == 0:
            P += (-1) ** (k // 2) * contrib
        else:
            Q += (-1) ** ((k - 1) // 2) * contrib
        if not active.any():
            break
    chi = x - (0.5 * nu + 0.25) * np.pi
    return np.sqrt(2.0 / (np.pi * x)) * (P * np.cos(chi) - Q * np.sin(chi))


def bessel_lambda(nu, x):
    """Lambda_nu(x) = x^-nu J_nu(x) for x >= 0."""
    x = np.asarray(x, dtype=float)
    small = x < CROSSOVER
    out = np.empty_like(x)
    if small.any():
        out[small] = _lambda_series(nu, x[small])
    if (~small).any():
        xb = x[~small]
        out[~small] = _j_asymptotic(nu, xb) * xb**-nu
    return out


def bessel_j(nu, x):
    """J_nu(x) for x > 0 (series below 12, asymptotic expansion above)."""
    x = np.asarray(x, dtype=float)
    return bessel_lambda(nu, x) * x**nu


# ----------------------------------------------------------------------
# kernel profile
# ----------------------------------------------------------------------
RHO_MAX = 4.5  # exp(-4.5^4) ~ 1e-178


def _profile(n, s, panels):
    edges = np.linspace(0.0, RHO_MAX, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1] - edges[0])
    rho = (mid[:, None] + half * _GX).ravel()
    w = np.tile(half * _GW, panels)
    weight = w * np.exp(-rho**4) * rho ** (n - 1)
    nu = 0.5 * (n - 2)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty(s.size)
    for i0 in range(0, s.size, 256):
        blk = s[i0:i0 + 256]
        out[i0:i0 + 256] = bessel_lambda(nu, np.abs(blk)[:, None] * rho) @ weight
    return out


def f_n(n, s, tol=1e-12):
    """Kernel profile f_n(s), computed with panel doubling until two levels agree.

    Raises
    ------
    NumericalError
        If 1024 panels do not reach ``tol``.
    """
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    scalar = np.ndim(s) == 0
    panels = 32
    prev = _profile(n, s, panels)
    while True:
        panels *= 2
        cur = _profile(n, s, panels)
        if np.max(np.abs(cur - prev)) < tol:
            break
        if panels >= 1024:
            raise NumericalError("kernel profile quadrature did not converge")
        prev = cur
    return float(cur[0]) if scalar else cur


def f_n_at_zero(n):
    """Closed form f_n(0) = 2^(1-n/2) Gamma(n/4) / (4 Gamma(n/2))."""
    return 2.0 ** (1 - 0.5 * n) * gamma_fn(0.25 * n) / (4.0 * gamma_fn(0.5 * n))


def alpha_bar(n):
    """Normalization (2 pi)^(-n/2) of the biharmonic heat kernel."""
    return (2.0 * np.pi) ** (-0.5 * n)


@dataclass(frozen=True)
class KernelTable:
    """Samples of f_n on [0, S] with a fitted decay envelope K exp(-mu s^(4/3))."""

    n: int
    s: np.ndarray
    f: np.ndarray
    alpha_bar: float
    K: float
    mu: float
    tail_s: np.ndarray = None
    tail_f: np.ndarray = None

    def __call__(self, s):
        sp = self.__dict__.get("_sp")
        if sp is None:
            ss, ff = self.s, self.f
            if self.tail_s is not None:
                ss = np.concatenate([ss, self.tail_s[1:]])
                ff = np.concatenate([ff, self.tail_f[1:]])
            sp = CubicSpline(ss, ff)
            object.__setattr__(self, "_sp", sp)
        top = sp.x[-1]
        s = np.abs(np.asarray(s, dtype=float))
        return np.where(s <= top, sp(np.minimum(s, top)), 0.0)

    @property
    def reach(self):
        """Largest sampled s; the kernel is taken as zero beyond it."""
        return self.s[-1] if self.tail_s is None else self.tail_s[-1]

    def envelope(self, s):
        return self.K * np.exp(-self.mu * np.asarray(s, dtype=float) ** (4.0 / 3.0))

    def _radial(self, absolute, t=1.0):
        # Simpson on the table plus the stored tail beyond S, in the variable r = t^(1/4) s
        total = 0.0
        for s, f in ((self.s, self.f), (self.tail_s, self.tail_f)):
            if s is None:
                continue
            r = s * t**0.25
            p = self.alpha_bar * t ** (-0.25 * self.n) * (np.abs(f) if absolute else f)
            total += float(simpson(p * r ** (self.n - 1), x=r))
        return sphere_area(self.n) * total

    def mass(self, t=1.0):
        """Integral of p_n(t, .) over R^n by radial quadrature; equals one."""
        return self._radial(False, t)

    def abs_mass(self):
        """L1 mass of |p_n(1, .)|, larger than one since the kernel changes sign."""
        return self._radial(True)

    def kernel(self, t, x):
        """p_n(t, x) for t > 0."""
        if t <= 0:
            raise DomainError("kernel time must be positive")
        return self.alpha_bar * t ** (-0.25 * self.n) * self(np.abs(x) * t**-0.25)


def fit_envelope(s, f, floor=1e-13, smin=1.0):
    """Fit K, mu so that |f(s)| <= K exp(-mu s^(4/3)) on the samples."""
    a = np.abs(f)
    peak = (a[1:-1] >= a[:-2]) & (a[1:-1] >= a[2:]) & (a[1:-1] > floor) & (s[1:-1] >= smin)
    sp, ap = s[1:-1][peak], a[1:-1][peak]
    if sp.size >= 2:
        mu = -np.polyfit(sp ** (4.0 / 3.0), np.log(ap), 1)[0]
    else:
        mu = 0.0
    if not mu > 0:
        raise NumericalError("decay fit produced a non-positive rate")
    K = float(np.max(a * np.exp(mu * s ** (4.0 / 3.0))))
    return K, float(mu)


def build_kernel_table(n, S=20.0, step=1e-2, tail=True) -> KernelTable:
    """Sample f_n on [0, S].

    With ``tail`` the profile is also sampled on [S, 2S] at twice the
    step; the mass integrals use it since f_n(20) is still about 1e-6.
    """
    s = np.linspace(0.0, S, int(round(S / step)) + 1)
    f = f_n(n, s)
    K, mu = fit_envelope(s, f)
    ts = tf = None
    if tail:
        ts = np.linspace(S, 2 * S, int(round(S / (2 * step))) + 1)
        tf = f_n(n, ts)
    return KernelTable(int(n), s, f, alpha_bar(n), K, mu, ts, tf)


# ----------------------------------------------------------------------
# 1-D convolutions
# ----------------------------------------------------------------------
def _convolve(u, kern, ends):
    """Direct sum  sum_j kern[j] u[i - j]  with kern centered, length 2M+1."""
    M = (kern.size - 1) // 2
    if ends == "constant":
        padded = np.pad(u, M, mode="edge")
    elif ends == "zero":
        padded = np.pad(u, M)
    else:
        raise ValueError("ends must be 'constant' or 'zero'")
    return np.convolve(padded, kern, mode="valid")


def heat_convolve(table: KernelTable, u0, dx, t, ends="constant"):
    """Gamma_t[u0] on a uniform 1-D grid by direct summation with p_1(t, .).

    ``ends`` says how u0 continues past the grid: ``"constant"`` repeats
    the end values, ``"zero"`` treats it as decayed.
    """
    if table.n != 1:
        raise ValueError("1-D convolution needs the n=1 kernel table")
    if t <= 0:
        raise DomainError("time must be positive")
    return _convolve(np.asarray(u0, dtype=float), heat_weights(table, dx, t), ends)


def heat_weights(table: KernelTable, dx, t):
    """Quadrature weights dx * p_1(t, j dx) for |j dx| within the kernel reach."""
    M = int(np.ceil(table.reach * t**0.25 / dx))
    return table.kernel(t, dx * np.arange(-M, M + 1)) * dx


def q_kernel(alpha, nu, y, panels=200):
    """Q(nu, y) = (2 pi)^-1 int exp(-nu (xi^4 + 2 alpha^2 xi^2)) cos(xi y) dxi."""
    if nu <= 0:
        raise DomainError("nu must be positive")
    top = (60.0 / nu) ** 0.25
    edges = np.linspace(0.0, top, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1] - edges[0])
    xi = (mid[:, None] + half * _GX).ravel()
    w = np.tile(half * _GW, panels) * np.exp(-nu * (xi**4 + 2 * alpha**2 * xi**2))
    y = np.asarray(y, dtype=float)
    return (np.cos(np.multiply.outer(y, xi)) @ w) / np.pi


def q_grid_kernel(alpha, tau, dx, M, damped=True):
    """Grid weights of the damped 1-D semigroup at lag tau.

    The xi-integral is restricted to the grid band |xi| <= pi/dx, so the
    weights reduce to the identity at tau = 0 and sum to exp(-alpha^4 tau).
    """
    top = np.pi / dx
    panels = max(64, 2 * M)
    edges = np.linspace(0.0, top, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1] - edges[0])
    xi = (mid[:, None] + half * _GX).ravel()
    sym = (xi * xi + alpha * alpha) ** 2 if damped else xi**4 + 2 * alpha**2 * xi**2
    w = np.tile(half * _GW, panels) * np.exp(-tau * sym)
    j = np.arange(-M, M + 1)
    return dx / np.pi * (np.cos(np.multiply.outer(j * dx, xi)) @ w)


def duhamel_1d(alpha, f, T, nu_end, y, dtau, ends="constant", times=None):
    """Solve u_nu + u_yyyy - 2 alpha^2 u_yy + alpha^4 u = f, u(-T) = 0.

    u(nu, y) = int_0^(nu+T) int exp(-alpha^4 tau) Q(tau, x) f(nu - tau, y - x) dx dtau,
    with the tau-integral by the trapezoid rule on a uniform grid and the
    x-integral by direct summation.

    Parameters
    ----------
    f : callable
        f(nu, y) returning an array shaped like ``y``.
    times : sequence of int, optional
        Indices of the time grid at which to return u (default: all).

    Returns
    -------
    nus : ndarray
        Time grid from -T to ``nu_end``.
    u : ndarray, shape (len(times), len(y))
    """
    y = np.asarray(y, dtype=float)
    dx = y[1] - y[0]
    K = int(round((nu_end + T) / dtau))
    nus = -T + dtau * np.arange(K + 1)
    reach = 40.0 * dtau**0.25 + 10.0 * alpha * np.sqrt(2.0 * dtau)
    M = min(y.size, int(np.ceil(reach / dx)))
    step = q_grid_kernel(alpha, dtau, dx, M)
    # the grid weights form a semigroup, so the trapezoid sum over
    # [nu_0, nu_m] is carried forward one step at a time
    f_prev = np.asarray(f(nus[0], y), dtype=float)
    u = np.zeros_like(y)
    rows = [u]
    for m in range(1, K + 1):
        f_cur = np.asarray(f(nus[m], y), dtype=float)
        u = _convolve(u + 0.5 * dtau * f_prev, step, ends) + 0.5 * dtau * f_cur
        rows.append(u)
        f_prev = f_cur
    out = np.array(rows)
    if times is not None:
        out = out[list(times)]
    return nus, np.array(out)


# ----------------------------------------------------------------------
# Picard iteration for mild solutions
# ----------------------------------------------------------------------
def _dx1(u, dx):
    return np.gradient(u, dx, edge_order=2)


def _dx2(u, dx):
    return np.gradient(np.gradient(u, dx, edge_order=2), dx, edge_order=2)


def mild_solve(G, u0, x, t0, t1, sigma, table: KernelTable, dtau=0.01,
               ends="constant", tol=1e-10, max_iter=200, window=None):
    """Mild solution of u_t + u_xxxx = G(u_xx, u_x, u, t, x) on a 1-D grid.

    Picard iteration of the mild-solution map on windows of length
    T1 = 1/(2 sigma C) with C the L1 mass of |p_1(1, .)|, chained from t0
    to t1.  Inside a window the Duhamel integral uses the trapezoid rule
    on a uniform grid of spacing about ``dtau``.

    Returns
    -------
    t, U : ndarray
        Time nodes and the solution at each node (rows).

    Raises
    ------
    LipschitzViolationError
        If the iterates stop contracting.
    """
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    T1 = 1.0 / (2.0 * sigma * table.abs_mass()) if window is None else float(window)
    # one global node spacing that divides [t0, t1]; windows hold whole steps,
    # so the discrete answer does not depend on how the windows are cut
    total = int(np.ceil((t1 - t0) / dtau - 1e-9))
    h = (t1 - t0) / total
    steps = max(1, int(np.floor(T1 / h + 1e-9)))
    weights = {}

    def gamma(u, m):
        # semigroup operator at lag m * h
        if m == 0:
            return u
        if m not in weights:
            weights[m] = heat_weights(table, dx, m * h)
        return _convolve(u, weights[m], ends)

    ts = [t0]
    traj = [np.asarray(u0, dtype=float)]
    done = 0
    while done < total:
        nsteps = min(steps, total - done)
        ta = t0 + done * h
        nodes = ta + h * np.arange(nsteps + 1)
        ua = traj[-1]
        base = [gamma(ua, m) for m in range(nsteps + 1)]
        U = np.array(base)
        prev_diff = np.inf
        growth = 0
        for it in range(max_iter):
            Gv = np.array([G(_dx2(U[k], dx), _dx1(U[k], dx), U[k], nodes[k], x)
                           for k in range(nsteps + 1)])
            new = np.empty_like(U)
            new[0] = ua
            for m in range(1, nsteps + 1):
                acc = 0.5 * gamma(Gv[0], m) + 0.5 * Gv[m]
                for k in range(1, m):
                    acc = acc + gamma(Gv[k], m - k)
                new[m] = base[m] + h * acc
            diff = float(np.max(np.abs(new - U)))
            U = new
            if diff < tol:
                break
            growth = growth + 1 if diff > prev_diff else 0
            if growth >= 3 or not np.isfinite(diff):
                raise LipschitzViolationError(
                    f"Picard iterates diverging on window starting at t={ta}")
            prev_diff = diff
        else:
            raise LipschitzViolationError(f"no convergence in {max_iter} Picard iterations")
        ts.extend(nodes[1:])
        traj.extend(U[1:])
        done += nsteps
    return np.array(ts), np.array(traj)
