"""Approximate radial solution z(t, r), the operator F and its linearizations.

Radial functions live on the grid r_i = i*dx, i = 1..N.  A field either
carries an analytic jet (values and r-derivatives up to order four) or
is differentiated with fourth-order finite-difference stencils that use
the even extension u(-r) = u(r) across the origin.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial

import numpy as np
from scipy import sparse
from scipy.interpolate import BPoly

from .correction import CorrectionTable
from .errors import CoverageError, DomainError
from .geometry import check_dimension, gamma_n, gamma_n_dot, sphere_area
from .layer import LayerTable


# ----------------------------------------------------------------------
# finite-difference stencils
# ----------------------------------------------------------------------
def _weights(offsets, k):
    """Weights w with sum_j w_j f(x + o_j h) ~ h^k f^(k)(x)."""
    o = np.asarray(offsets, dtype=float)
    m = len(o)
    A = np.vander(o, m, increasing=True).T / np.array(
        [factorial(j) for j in range(m)])[:, None]
    rhs = np.zeros(m)
    rhs[k] = 1.0
    return np.linalg.solve(A, rhs)


# value at r = 0 of the even quadratic-in-r^2 interpolant through r = h, 2h, 3h
_ORIGIN = ((0, 1.5), (1, -0.6), (2, 0.1))


@lru_cache(maxsize=32)
def stencil_matrices(N, dx):
    """Sparse derivative matrices D1..D4 of fourth-order accuracy.

    Interior rows are centered (5 points for orders 1-2, 7 for 3-4).
    Rows near r = 0 fold ghost nodes back by evenness; rows near the
    outer end use one-sided stencils of k + 4 points.
    """
    mats = []
    for k in (1, 2, 3, 4):
        half = 2 if k <= 2 else 3
        center = _weights(range(-half, half + 1), k)
        rows, cols, vals = [], [], []
        for i in range(N):
            if i + half <= N - 1:
                offs, w = range(-half, half + 1), center
            else:
                width = k + 4
                offs = range(N - width - i, N - i)
                w = _weights(offs, k)
            for o, wj in zip(offs, w):
                p = i + o + 1  # grid position in units of dx
                if p >= 1:
                    targets = ((p - 1, 1.0),)
                elif p == 0:
                    targets = _ORIGIN
                else:
                    targets = ((-p - 1, 1.0),)
                for c, f in targets:
                    rows.append(i)
                    cols.append(c)
                    vals.append(wj * f)
        D = sparse.csr_matrix((vals, (rows, cols)), shape=(N, N)).tolil()
        # zero the row sums so constants are annihilated up to summation roundoff
        D.setdiag(D.diagonal() - np.asarray(D.sum(axis=1)).ravel())
        mats.append(D.tocsr() / dx**k)
    return tuple(mats)


class RadialField:
    """Radial function sampled at r_i = i*dx, i = 1..N.

    Parameters
    ----------
    dx : float
    values : array_like
    jet : sequence of 4 arrays, optional
        Exact first to fourth r-derivatives.  When absent, derivatives
        come from :func:`stencil_matrices`.
    """

    def __init__(self, dx, values, jet=None):
        self.dx = float(dx)
        self.values = np.asarray(values, dtype=float)
        self.jet = None if jet is None else tuple(np.asarray(j, dtype=float) for j in jet)

    @classmethod
    def zeros(cls, R, dx):
        N = int(round(R / dx))
        return cls(dx, np.zeros(N), jet=[np.zeros(N)] * 4)

    @classmethod
    def from_function(cls, f, R, dx):
        """Sample ``f(r, k)`` (k-th derivative) for k = 0..4 as a jet."""
        N = int(round(R / dx))
        r = dx * np.arange(1, N + 1)
        return cls(dx, f(r, 0), jet=[f(r, k) for k in range(1, 5)])

    @property
    def N(self):
        return self.values.size

    @property
    def R(self):
        return self.N * self.dx

    @property
    def r(self):
        return self.dx * np.arange(1, self.N + 1)

    def derivs(self):
        """[u, u_r, u_rr, u_rrr, u_rrrr]."""
        if self.jet is not None:
            return [self.values, *self.jet]
        return [self.values] + [D @ self.values for D in stencil_matrices(self.N, self.dx)]

    def stencil_derivs(self):
        return [self.values] + [D @ self.values for D in stencil_matrices(self.N, self.dx)]

    def drop_jet(self):
        return RadialField(self.dx, self.values)

    def laplacian(self, n):
        d = self.derivs()
        return d[2] + (n - 1) / self.r * d[1]

    def _combine(self, other, a, b):
        if isinstance(other, RadialField):
            if other.N != self.N or other.dx != self.dx:
                raise ValueError("fields live on different grids")
            jet = None
            if self.jet is not None and other.jet is not None:
                jet = [a * x + b * y for x, y in zip(self.jet, other.jet)]
            return RadialField(self.dx, a * self.values + b * other.values, jet)
        return RadialField(self.dx, a * self.values + b * other, self.jet if a == 1 else
                           None if self.jet is None else [a * x for x in self.jet])

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, c):
        c = float(c)
        return RadialField(self.dx, c * self.values,
                           None if self.jet is None else [c * x for x in self.jet])

    __rmul__ = __mul__


# ----------------------------------------------------------------------
# cut-off
# ----------------------------------------------------------------------
def _bump_log_derivs(s):
    """b = exp(-1/(s(1-s))) and its first three derivatives on (0, 1)."""
    p = s * (1 - s)
    p1 = 1 - 2 * s
    g1 = p1 / p**2
    g2 = -2 / p**2 - 2 * p1**2 / p**3
    g3 = 12 * p1 / p**3 + 6 * p1**3 / p**4
    b = np.exp(-1 / p)
    return b, g1 * b, (g2 + g1 * g1) * b, (g3 + 3 * g1 * g2 + g1**3) * b


class CutOff:
    """Smooth step: 0 for r <= delta0/2, 1 for r >= delta0.

    The step is the normalized integral of the bump exp(-1/(s(1-s))),
    tabulated on a fine grid and interpolated by quintic Hermite
    polynomials; its derivatives are the bump and its derivatives.
    """

    def __init__(self, delta0=0.5, nodes=4001):
        if not delta0 > 0:
            raise ValueError("delta0 must be positive")
        self.delta0 = float(delta0)
        s = np.linspace(0.0, 1.0, nodes)
        inner = s[1:-1]
        b = np.zeros((4, nodes))
        b[:, 1:-1] = np.array(_bump_log_derivs(inner))
        # cumulative integral with 8-point Gauss-Legendre per cell
        gx, gw = np.polynomial.legendre.leggauss(8)
        a0, a1 = s[:-1, None], s[1:, None]
        pts = 0.5 * (a0 + a1) + 0.5 * (a1 - a0) * gx
        with np.errstate(divide="ignore", over="ignore"):
            cell = (0.5 * (a1 - a0) * np.exp(-1 / (pts * (1 - pts))) * gw).sum(axis=1)
        total = np.concatenate([[0.0], np.cumsum(cell)])
        self._Z = total[-1]
        self._psi = BPoly.from_derivatives(
            s, np.stack([total / self._Z, b[0] / self._Z, b[1] / self._Z], axis=1))

    def eval(self, r, order=0):
        r = np.asarray(r, dtype=float)
        h = 0.5 * self.delta0
        x = (r - h) / h
        inside = (x > 0) & (x < 1)
        xc = np.where(inside, x, 0.5)
        if order == 0:
            core = self._psi(xc)
            return np.where(inside, core, np.where(x >= 1, 1.0, 0.0))
        core = _bump_log_derivs(xc)[order - 1] / self._Z / h**order
        return np.where(inside, core, 0.0)

    def __call__(self, r, order=0):
        return self.eval(r, order)


# ----------------------------------------------------------------------
# modulation of the interface position
# ----------------------------------------------------------------------
class ModulationState:
    """Interface position rho(t) = base(t) + h(t).

    The base radius is the self-similar Willmore sphere gamma_n(t), or a
    fixed ``radius`` (the only choice for n = 1, 3 where spheres do not
    move).

    Parameters
    ----------
    n : int
    h, dh : callable or float
        Modulation and its derivative.
    radius : float, optional
        Stationary base radius.
    """

    def __init__(self, n, h=0.0, dh=None, radius=None):
        self.n = check_dimension(n)
        if radius is None and n in (1, 3):
            raise DomainError(f"n={n} needs an explicit stationary radius")
        self.radius = radius
        self._h = h if callable(h) else (lambda t, c=float(h): 0.0 * np.asarray(t) + c)
        if dh is None:
            if callable(h):
                raise ValueError("a callable h needs its derivative dh")
            dh = 0.0
        self._dh = dh if callable(dh) else (lambda t, c=float(dh): 0.0 * np.asarray(t) + c)

    def gamma(self, t):
        return self.radius + 0.0 * np.asarray(t) if self.radius is not None else gamma_n(self.n, t)

    def h(self, t):
        return self._h(t)

    def dh(self, t):
        return self._dh(t)

    def rho(self, t):
        return self.gamma(t) + self._h(t)

    def drho(self, t):
        base = 0.0 if self.radius is not None else gamma_n_dot(self.n, t)
        return base + self._dh(t)

    def lambda_norm(self, ts):
        """sup |h| + sup (|t|/log|t|) |h'| over the sample times ``ts``."""
        ts = np.asarray(ts, dtype=float)
        return float(np.max(np.abs(self._h(ts)))
                     + np.max(np.abs(ts) / np.log(np.abs(ts)) * np.abs(self._dh(ts))))


# ----------------------------------------------------------------------
# ansatz
# ----------------------------------------------------------------------
@dataclass
class Ansatz:
    """Pieces of z = w_hat + z_tilde at a fixed time, all as jet fields."""

    t: float
    n: int
    rho: float
    drho: float
    w_hat: RadialField
    z_tilde: RadialField
    z: RadialField
    dt_w_hat: np.ndarray
    dt_z_tilde: np.ndarray
    dt_z: np.ndarray


def _leibniz(a, b, k):
    return sum(comb(k, j) * a[j] * b[k - j] for j in range(k + 1))


def build_ansatz(layer: LayerTable, corr: CorrectionTable | None, cutoff: CutOff,
                 mod: ModulationState, t, R, dx) -> Ansatz:
    """Evaluate w_hat, z_tilde, z and their time derivatives on (0, R].

    w_hat   = omega(r - rho) chi + chi - 1
    z_tilde = (n-1)(n-3) r^-2 wt(r - rho) chi
    The time derivatives use rho'(t) analytically.

    Raises
    ------
    CoverageError
        If R < rho(t) + 30.
    """
    n = mod.n
    rho = float(mod.rho(t))
    drho = float(mod.drho(t))
    if R < rho + 30.0:
        raise CoverageError(f"grid end R={R} must reach rho+30={rho + 30.0}")
    N = int(round(R / dx))
    r = dx * np.arange(1, N + 1)
    w_hat, z_t, dt_w_hat, dt_z_tilde = ansatz_jets(layer, corr, cutoff, n, rho, drho, r)
    wf = RadialField(dx, w_hat[0], w_hat[1:])
    zf = RadialField(dx, z_t[0], z_t[1:])
    return Ansatz(float(t), n, rho, drho, wf, zf, wf + zf,
                  dt_w_hat, dt_z_tilde, dt_w_hat + dt_z_tilde)


def ansatz_jets(layer, corr, cutoff, n, rho, drho, r):
    """Jets (orders 0..4) of w_hat and z_tilde at arbitrary radii ``r``.

    Returns
    -------
    w_hat, z_tilde : list of ndarray
    dt_w_hat, dt_z_tilde : ndarray
    """
    r = np.asarray(r, dtype=float)
    y = r - rho
    chi = [cutoff(r, k) for k in range(5)]
    om = [layer(y, k) for k in range(5)]
    A = [_leibniz(om, chi, k) for k in range(5)]
    w_hat = [A[0] + chi[0] - 1.0] + [A[k] + chi[k] for k in range(1, 5)]
    dt_w_hat = -drho * om[1] * chi[0]

    c = (n - 1) * (n - 3)
    if c != 0:
        if corr is None:
            raise ValueError(f"n={n} needs the correction layer")
        wt = [corr(y, k) for k in range(5)]
        inv = [(-1) ** j * factorial(j + 1) * r ** (-2.0 - j) for j in range(5)]
        B = [c * _leibniz(inv, wt, k) for k in range(5)]
        z_t = [_leibniz(B, chi, k) for k in range(5)]
        dt_z_tilde = -drho * c * r**-2.0 * wt[1] * chi[0]
    else:
        z_t = [np.zeros_like(r) for _ in range(5)]
        dt_z_tilde = np.zeros_like(r)
    # chi vanishes identically below delta0/2; keep that exact
    off = r <= 0.5 * cutoff.delta0
    for arr in (*w_hat[1:], *z_t):
        arr[off] = 0.0
    w_hat[0][off] = -1.0
    dt_w_hat[off] = 0.0
    dt_z_tilde[off] = 0.0
    return w_hat, z_t, dt_w_hat, dt_z_tilde


def build_z(layer, corr, cutoff, mod, t, R, dx):
    """z(t, .) as a jet field together with dz/dt."""
    a = build_ansatz(layer, corr, cutoff, mod, t, R, dx)
    return a.z, a.dt_z


# ----------------------------------------------------------------------
# operators
# ----------------------------------------------------------------------
def _check_margin(field):
    if field.N < 11:
        raise ValueError("field needs at least 5 nodes of margin at each end")


def apply_F(pot, field: RadialField, n) -> np.ndarray:
    """F(u) = -Delta(Delta u - W'(u)) + W''(u)(Delta u - W'(u)), radial form."""
    _check_margin(field)
    return F_from_jets(pot, field.derivs(), field.r, n)


def F_from_jets(pot, jets, r, n) -> np.ndarray:
    """Radial F(u) from the values and first four r-derivatives of u."""
    u, u1, u2, u3, u4 = jets
    c = (n - 1) * (n - 3)
    w1, w2, w3 = pot.eval(u, 1), pot.eval(u, 2), pot.eval(u, 3)
    return (-u4 - 2 * (n - 1) / r * u3 + (2 * w2 - c / r**2) * u2
            + (2 * (n - 1) * w2 / r + c / r**3) * u1 + w3 * u1 * u1 - w1 * w2)


def apply_F_composed(pot, field: RadialField, n) -> np.ndarray:
    """F(u) built as -Delta mu + W''(u) mu with mu = Delta u - W'(u).

    Independent of :func:`apply_F`: mu is formed on the grid and its
    Laplacian taken with stencils.
    """
    u = field.values
    mu = field.laplacian(n) - pot.eval(u, 1)
    return -RadialField(field.dx, mu).laplacian(n) + pot.eval(u, 2) * mu


def apply_Fprime(pot, z: RadialField, phi: RadialField, n) -> np.ndarray:
    """Linearization F'(z)[phi], including the W'''' term."""
    return Fprime_from_jets(pot, z.derivs(), phi.derivs(), z.r, n)


def Fprime_from_jets(pot, z_jets, phi_jets, r, n) -> np.ndarray:
    """F'(z)[phi] from jets of z and phi."""
    zv, z1, z2 = z_jets[:3]
    p, p1, p2, p3, p4 = phi_jets
    c = (n - 1) * (n - 3)
    w1, w2, w3, w4 = (pot.eval(zv, k) for k in (1, 2, 3, 4))
    return (-p4 - 2 * (n - 1) / r * p3 + (2 * w2 - c / r**2) * p2 - w2 * w2 * p
            + (2 * (n - 1) * w2 / r + c / r**3) * p1 + 2 * w3 * p1 * z1
            - w3 * w1 * p + w4 * z1 * z1 * p + 2 * w3 * z2 * p
            + 2 * (n - 1) / r * w3 * z1 * p)


def apply_Fsecond(pot, u: RadialField, v1: RadialField, v2: RadialField, n) -> np.ndarray:
    """Second derivative F''(u)[v1, v2] with radial Laplacians.

    The Laplacian of W'''(u) v1 v2 is taken with stencils on the grid
    values, so no fifth derivative of W is needed.
    """
    uv = u.values
    a, b = v1.values, v2.values
    w1, w2, w3, w4 = (pot.eval(uv, k) for k in (1, 2, 3, 4))
    ab = a * b  # formed once so swapping v1, v2 is bitwise symmetric
    t1 = RadialField(u.dx, w3 * ab).laplacian(n)
    t2 = -(w3 * w2 + w4 * (-u.laplacian(n) + w1)) * ab
    t3 = w3 * ((v1.laplacian(n) - w2 * a) * b + (v2.laplacian(n) - w2 * b) * a)
    return t1 + t2 + t3


def nonlinear_N(pot, z: RadialField, phi: RadialField, n) -> np.ndarray:
    """N(phi) = F(z + phi) - F(z) - F'(z)[phi], evaluated directly."""
    return apply_F(pot, z + phi, n) - apply_F(pot, z, n) - apply_Fprime(pot, z, phi, n)


# ----------------------------------------------------------------------
# error, weight, energy
# ----------------------------------------------------------------------
@dataclass
class ErrorSplit:
    E: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    taylor_remainder: np.ndarray
    half_second: np.ndarray


def error_field(pot, ans: Ansatz) -> np.ndarray:
    """E = F(z) - dz/dt."""
    return apply_F(pot, ans.z, ans.n) - ans.dt_z


def error_split(pot, ans: Ansatz) -> ErrorSplit:
    """E together with its two-part decomposition.

    E1 = F(w_hat) - dt w_hat + c r^-2 w_hat_rr + c (n-3)/(2 r^3) w_hat_r,
    E2 = -[same two terms] + F'(w_hat)[z_tilde] + T - dt z_tilde,
    with c = (n-1)(n-3) and T = F(z) - F(w_hat) - F'(w_hat)[z_tilde] the
    exact second-order Taylor remainder.  ``half_second`` holds
    F''(w_hat)[z_tilde, z_tilde]/2, the leading term of T.
    """
    n = ans.n
    r = ans.z.r
    c = (n - 1) * (n - 3)
    _, w1, w2, _, _ = ans.w_hat.derivs()
    shift = c / r**2 * w2 + c * (n - 3) / (2 * r**3) * w1
    Fw = apply_F(pot, ans.w_hat, n)
    Fz = apply_F(pot, ans.z, n)
    lin = apply_Fprime(pot, ans.w_hat, ans.z_tilde, n)
    T = Fz - Fw - lin
    E1 = Fw - ans.dt_w_hat + shift
    E2 = -shift + lin + T - ans.dt_z_tilde
    half = 0.5 * apply_Fsecond(pot, ans.w_hat, ans.z_tilde, ans.z_tilde, n)
    return ErrorSplit(Fz - ans.dt_z, E1, E2, T, half)


def weight_phi(n, t, r, p=None, alpha=np.sqrt(2.0), delta0=0.5):
    """Weight Phi(t, r) that controls the ansatz error.

    Polynomially decaying window of exponent p around
    gamma_n(t) + log|t|/(4 alpha) with height log|t|/|t|^(1/2) for
    r >= delta0, the constant height on [delta0/2, delta0), zero below.
    """
    n = check_dimension(n, allow_degenerate=False)
    p = float(n + 1) if p is None else float(p)
    if not (n < p <= n + 1):
        raise ValueError(f"p must lie in ({n}, {n + 1}], got {p}")
    at = abs(float(t))
    if at <= 1.0:
        raise DomainError("weight needs |t| > 1")
    height = np.log(at) / np.sqrt(at)
    center = gamma_n(n, t) + np.log(at) / (4 * alpha)
    r = np.asarray(r, dtype=float)
    outer = height / (1.0 + np.abs(r - center)) ** p
    return np.where(r >= delta0, outer, np.where(r >= 0.5 * delta0, height, 0.0))


def weighted_norm(psi, phi_weight):
    """sup |psi| / Phi, or +inf when psi is nonzero where Phi vanishes."""
    psi = np.abs(np.asarray(psi, dtype=float))
    w = np.asarray(phi_weight, dtype=float)
    zero = w == 0
    if np.any(psi[zero] != 0):
        return float("inf")
    if np.all(zero):
        return 0.0
    return float(np.max(psi[~zero] / w[~zero]))


def error_ratio(pot, ans: Ansatz, p=None, delta0=0.5):
    """sup_r |E| log|t| / Phi, the constant in the error bound."""
    E = error_field(pot, ans)
    Phi = weight_phi(ans.n, ans.t, ans.z.r, p, pot.alpha, delta0)
    return weighted_norm(E, Phi) * np.log(abs(ans.t))


def diffuse_energy(pot, field: RadialField, n):
    """(1/2)|S^(n-1)| int (Delta u - W'(u))^2 r^(n-1) dr by Simpson's rule."""
    from scipy.integrate import simpson

    mu = field.laplacian(n) - pot.eval(field.values, 1)
    r = field.r
    return 0.5 * sphere_area(n) * float(simpson(mu * mu * r ** (n - 1), x=r))
