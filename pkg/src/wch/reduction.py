"""Projection onto the translation mode and the reduced equation for h(t).

The interface position is rho = gamma_n + h.  Projecting the ansatz error
on omega'(r - rho) r^(n-1) and asking the projection to vanish gives

    h' + 3h/(4t) = P~(h, h'),

solved here as the fixed point of
h(t) = sgn(t) |t|^(-3/4) int_{t0}^{t} |s|^(3/4) P~(h(s), h'(s)) ds.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .ansatz import (CutOff, ModulationState, RadialField, ansatz_jets, build_ansatz,
                     F_from_jets, Fprime_from_jets, apply_F, apply_Fprime, nonlinear_N,
                     weight_phi, weighted_norm)
from .correction import build_correction
from .errors import ContractionError, DomainError, NumericalError, ThresholdError
from .geometry import check_dimension, gamma_n, gamma_n_dot
from .layer import LayerTable, build_layer


def _with_origin(r, f):
    # integrands on r_i = i dx, extended by the r = 0 node
    return np.concatenate([[0.0], r]), np.concatenate([[0.0], f])


def _radial_simpson(r, f, n):
    rr, ff = _with_origin(r, f * r ** (n - 1))
    return float(simpson(ff, x=rr))


def _radial_trapz(r, f, n):
    rr, ff = _with_origin(r, f * r ** (n - 1))
    return float(np.trapezoid(ff, x=rr))


def layer_mass(layer: LayerTable):
    """int (omega')^2 dy; the integrand decays exponentially so the trapezoid rule is spectral."""
    return float(np.trapezoid(layer.values[1] ** 2, x=layer.y))


def odd_moment(layer: LayerTable):
    """int (omega')^2 y dy, zero by symmetry."""
    return float(np.trapezoid(layer.values[1] ** 2 * layer.y, x=layer.y))


# ----------------------------------------------------------------------
# projections and the multiplier c(t)
# ----------------------------------------------------------------------
def project_kernel(phi: RadialField, layer: LayerTable, mod: ModulationState, t, n):
    """int_0^inf phi omega'(r - rho) r^(n-1) dr by composite Simpson."""
    r = phi.r
    return _radial_simpson(r, phi.values * layer(r - mod.rho(t), 1), n)


def kernel_denominator(z_field: RadialField, layer, rho, n):
    """int d_r w_hat omega'(r - rho) r^(n-1) dr, with z_field carrying w_hat."""
    r = z_field.r
    return _radial_simpson(r, z_field.derivs()[1] * layer(r - rho, 1), n)


def compute_c(phi: RadialField, g, potential, layer, correction, cutoff, mod, t, n):
    """Multiplier c(t) that keeps phi orthogonal to omega'(r - rho).

    c * int d_r w_hat omega' r^(n-1) equals

      int [omega''' + (n-1)/r omega'' - W''(z) omega'] (-Delta phi + W''(z) phi) r^(n-1)
    + int [Delta z - W'(z)] W'''(z) phi omega' r^(n-1)
    + int phi d_t[omega'(r - rho)] r^(n-1)
    + int (g + N(phi)) omega' r^(n-1),

    the orthogonality condition differentiated in t with F'(z) moved onto
    omega' by parts.

    Raises
    ------
    ThresholdError
        If the denominator is below 1e-8 rho^(n-1).
    """
    ans = build_ansatz(layer, correction, cutoff, mod, t, phi.R, phi.dx)
    rho, drho = ans.rho, ans.drho
    r = phi.r
    y = r - rho
    om1, om2, om3 = (layer(y, k) for k in (1, 2, 3))
    z = ans.z
    zv, z1, z2 = z.derivs()[:3]
    p, p1, p2 = phi.derivs()[:3]
    w1, w2, w3 = (potential.eval(zv, k) for k in (1, 2, 3))
    den = kernel_denominator(ans.w_hat, layer, rho, n)
    if abs(den) < 1e-8 * rho ** (n - 1):
        raise ThresholdError(f"kernel denominator {den} vanishes at t={t}")
    g = np.zeros_like(r) if g is None else np.asarray(g, dtype=float)
    Nphi = nonlinear_N(potential, z, phi, n)
    lap_p = p2 + (n - 1) / r * p1
    mu = z2 + (n - 1) / r * z1 - w1
    total = (_radial_simpson(r, (om3 + (n - 1) / r * om2 - w2 * om1) * (-lap_p + w2 * p), n)
             + _radial_simpson(r, mu * w3 * p * om1, n)
             + _radial_simpson(r, p * (-drho) * om2, n)
             + _radial_simpson(r, (g + Nphi) * om1, n))
    return total / den


def c_direct(phi: RadialField, g, potential, layer, correction, cutoff, mod, t, n):
    """Same multiplier from int (F'(z)[phi] + g + N) omega' + int phi d_t omega', no integration by parts."""
    ans = build_ansatz(layer, correction, cutoff, mod, t, phi.R, phi.dx)
    r = phi.r
    y = r - ans.rho
    om1, om2 = layer(y, 1), layer(y, 2)
    g = np.zeros_like(r) if g is None else np.asarray(g, dtype=float)
    lin = apply_Fprime(potential, ans.z, phi, n)
    Nphi = nonlinear_N(potential, ans.z, phi, n)
    total = (_radial_simpson(r, (lin + g + Nphi) * om1, n)
             + _radial_simpson(r, phi.values * (-ans.drho) * om2, n))
    return total / kernel_denominator(ans.w_hat, layer, ans.rho, n)


# ----------------------------------------------------------------------
# projected error split
# ----------------------------------------------------------------------
@dataclass
class ProjectionReport:
    t: float
    rho: float
    drho: float
    total: float
    inner: float
    tilde: tuple
    leading: float
    leading_residual: float
    denominator: float
    mass: float

    @property
    def split_defect(self):
        return self.total - self.inner - sum(self.tilde)


def projected_error_split(potential, layer, correction, cutoff, mod, t, n, dx=0.02):
    """Projections of E and of its pieces E~1..E~5 on omega'(r - rho) r^(n-1).

    On r > delta0 the cut-off is 1 and

      E~1 = omega' (rho' + (n-3)(n-1)^2 / (2 r^3))
      E~2 = -d_rr(w_hat'' - W'(w_hat)) + W''(w_hat)(w_hat'' - W'(w_hat))
      E~3 = 2(n-1)/r [W''(w_hat) - W''(omega)] omega'
      E~4 = F'(w_hat)[z~] - (n-1)(n-3)/r^2 [(n-3)/(2r) omega' + omega'']
      E~5 = T - d_t z~,   T = F(z) - F(w_hat) - F'(w_hat)[z~]

    add up to E.  All integrals use the trapezoid rule on (0, rho + 30],
    which is spectrally accurate because the integrands vanish near both
    ends.
    """
    rho = float(mod.rho(t))
    drho = float(mod.drho(t))
    R = rho + 30.0
    r = dx * np.arange(1, int(np.ceil(R / dx)) + 1)
    w, zt, dtw, dtzt = ansatz_jets(layer, correction, cutoff, n, rho, drho, r)
    zj = [a + b for a, b in zip(w, zt)]
    Fz = F_from_jets(potential, zj, r, n)
    E = Fz - dtw - dtzt
    y = r - rho
    om = [layer(y, k) for k in range(5)]
    outer = r > cutoff.delta0
    c = (n - 1) * (n - 3)

    W1, W2, W3 = (potential.eval(w[0], k) for k in (1, 2, 3))
    mu0 = w[2] - W1
    mu2 = w[4] - (W3 * w[1] ** 2 + W2 * w[2])
    Fw = F_from_jets(potential, w, r, n)
    lin = Fprime_from_jets(potential, w, zt, r, n)
    T = Fz - Fw - lin
    tilde_fields = [
        om[1] * (drho + (n - 3) * (n - 1) ** 2 / (2 * r**3)),
        -mu2 + W2 * mu0,
        2 * (n - 1) / r * (W2 - potential.eval(om[0], 2)) * om[1],
        lin - c / r**2 * ((n - 3) / (2 * r) * om[1] + om[2]),
        T - dtzt,
    ]
    weight = om[1] * r ** (n - 1)
    rr = np.concatenate([[0.0], r])

    def integral(f, mask):
        vals = np.where(mask, f * weight, 0.0)
        return float(np.trapezoid(np.concatenate([[0.0], vals]), x=rr))

    total = integral(E, np.ones_like(r, dtype=bool))
    inner = integral(E, ~outer)
    tilde = tuple(integral(f, outer) for f in tilde_fields)
    mass = layer_mass(layer)
    leading = (drho + (n - 3) * (n - 1) ** 2 / (2 * rho**3)) * rho ** (n - 1) * mass
    wden = integral(w[1], np.ones_like(r, dtype=bool))
    return ProjectionReport(float(t), rho, drho, total, inner, tilde, leading,
                            tilde[0] - leading, wden, mass)


# ----------------------------------------------------------------------
# spectral gap
# ----------------------------------------------------------------------
@dataclass
class GapCertificate:
    eigenvalue: float
    residual: float
    iterations: int
    translation_residual: float
    vector: np.ndarray = field(repr=False)

    @property
    def positive(self):
        return self.eigenvalue - self.residual > 0


def layer_operator(potential, layer, Y=20.0, dy=0.05):
    """Dense L = -d_yy + W''(omega) on [-Y, Y] with zero Dirichlet data.

    Fourth-order central differences; nodes outside the interval are
    zero, which keeps the matrix symmetric.

    Returns
    -------
    y, L : ndarray
    """
    if Y < 20:
        raise DomainError("truncation needs Y >= 20")
    m = int(round(Y / dy))
    y = dy * np.arange(-m + 1, m)
    N = y.size
    c = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12 * dy * dy)
    L = np.zeros((N, N))
    for k, ck in zip(range(-2, 3), c):
        L -= ck * np.eye(N, k=k)
    L += np.diag(potential.eval(layer(y), 2))
    return y, L


def translation_residual(potential, layer, Y=20.0, dy=0.05):
    """sup |-omega''' + W''(omega) omega'| on the truncation grid (analytic jets)."""
    m = int(round(Y / dy))
    y = dy * np.arange(-m, m + 1)
    return float(np.max(np.abs(-layer(y, 3) + potential.eval(layer(y), 2) * layer(y, 1))))


def spectral_gap(potential, layer, Y=20.0, dy=0.05, tol=1e-12, max_iter=500, shift=100.0):
    """Smallest value of int |phi'' - W''(omega) phi|^2 / int phi^2 over phi orthogonal to omega'.

    Inverse iteration on A = Q L^2 Q + shift v v^T with v the normalized
    omega' samples and Q = I - v v^T; on the complement of v this is the
    projected form, and v itself is moved to ``shift``.

    Raises
    ------
    NumericalError
        If the iteration does not settle within ``max_iter`` steps.
    """
    y, L = layer_operator(potential, layer, Y, dy)
    v = layer(y, 1)
    v = v / np.linalg.norm(v)
    A = L @ L
    Av = A @ v
    vAv = v @ Av
    A = A - np.outer(v, Av) - np.outer(Av, v) + (vAv + shift) * np.outer(v, v)
    lu = sla.lu_factor(A)
    rng = np.random.default_rng(7)
    x = rng.standard_normal(y.size)
    x -= (v @ x) * v
    x /= np.linalg.norm(x)
    lam = np.inf
    for it in range(1, max_iter + 1):
        x = sla.lu_solve(lu, x)
        x -= (v @ x) * v
        x /= np.linalg.norm(x)
        Ax = A @ x
        new = float(x @ Ax)
        res = float(np.linalg.norm(Ax - new * x))
        if abs(new - lam) < tol * abs(new) and res < 1e-6 * abs(new):
            return GapCertificate(new, res, it, translation_residual(potential, layer, Y, dy), x)
        lam = new
    raise NumericalError("inverse iteration did not converge")


# ----------------------------------------------------------------------
# reduced ODE
# ----------------------------------------------------------------------
@dataclass
class ReductionContext:
    """Everything the projected error needs, built once."""

    potential: object
    layer: LayerTable
    correction: object
    cutoff: CutOff
    window: float = 25.0
    dx: float = 0.05
    mass: float = 0.0

    def __post_init__(self):
        if not self.mass:
            self.mass = layer_mass(self.layer)


def make_context(potential, delta0=0.5, **kw) -> ReductionContext:
    layer = build_layer(potential)
    return ReductionContext(potential, layer, build_correction(layer), CutOff(delta0), **kw)


def error_projection(ctx: ReductionContext, n, rho, drho):
    """int E omega'(r - rho) r^(n-1) dr with phi = 0 on the window |r - rho| <= window.

    omega' is below 1e-15 outside the window.  Trapezoid rule: the
    integrand vanishes at both window ends.
    """
    lo = max(ctx.dx, rho - ctx.window)
    lo = ctx.dx * max(1, int(lo / ctx.dx))
    r = np.arange(lo, rho + ctx.window + ctx.dx / 2, ctx.dx)
    w, zt, dtw, dtzt = ansatz_jets(ctx.layer, ctx.correction, ctx.cutoff, n, rho, drho, r)
    zj = [a + b for a, b in zip(w, zt)]
    E = F_from_jets(ctx.potential, zj, r, n) - dtw - dtzt
    f = E * ctx.layer(r - rho, 1) * r ** (n - 1)
    if lo <= ctx.dx:
        return float(np.trapezoid(np.concatenate([[0.0], f]), x=np.concatenate([[0.0], r])))
    return float(np.trapezoid(f, x=r))


def reduced_P(ctx: ReductionContext, n, t, h, dh):
    """P(h, h') with phi = 0.

    The projection condition int E omega' r^(n-1) = 0 is written as
    rho' + (n-3)(n-1)^2/(2 rho^3) = P, so
    P = rho' + (n-3)(n-1)^2/(2 rho^3) - int E omega' r^(n-1) / (rho^(n-1) int omega'^2).
    """
    rho = gamma_n(n, t) + h
    drho = gamma_n_dot(n, t) + dh
    proj = error_projection(ctx, n, rho, drho)
    return drho + (n - 3) * (n - 1) ** 2 / (2 * rho**3) - proj / (rho ** (n - 1) * ctx.mass)


def p_tilde(n, t, h, P):
    """P plus the part of (n-3)(n-1)^2/(2 rho^3) beyond first order in h."""
    g = gamma_n(n, t)
    k = 0.5 * (n - 3) * (n - 1) ** 2
    return P + k * (g**-3 - (g + h) ** -3 - 3 * h * g**-4)


def lambda_norm(t, h, dh):
    """sup |h| + sup |t|/log|t| |h'| over the sample times."""
    t = np.abs(np.asarray(t, dtype=float))
    return float(np.max(np.abs(h)) + np.max(t / np.log(t) * np.abs(dh)))


@dataclass
class ReducedSolution:
    n: int
    p: float
    That0: float
    t: np.ndarray
    h: np.ndarray
    hprime: np.ndarray
    P: np.ndarray
    Ptilde: np.ndarray
    iterations: int
    history: list
    first_norm: float

    def _spline(self):
        u = np.log(np.abs(self.t))
        order = np.argsort(u)
        return CubicSpline(u[order], self.h[order])

    def h_at(self, t):
        """h(t) from a cubic spline in log|t| through the fixed-point values."""
        return self._spline()(np.log(np.abs(t)))

    def dh_at(self, t):
        """dh/dt from the same spline, independent of the stored h'."""
        t = np.asarray(t, dtype=float)
        return self._spline()(np.log(np.abs(t)), 1) / t

    def modulation(self) -> ModulationState:
        return ModulationState(self.n, h=self.h_at, dh=self.dh_at)

    def rhs_bound_constant(self):
        """max |P| |t| (log|t|)^(2(p-1)) over the grid."""
        at = np.abs(self.t)
        return float(np.max(np.abs(self.P) * at * np.log(at) ** (2 * (self.p - 1))))

    def decay_constant(self, factor=2.0):
        """max |h| log|t| over |t| >= factor * T0."""
        at = np.abs(self.t)
        sel = at >= factor * self.That0
        return float(np.max(np.abs(self.h[sel]) * np.log(at[sel])))

    def ode_residual(self, ctx, ts):
        """h' + 3h/(4t) - P~ at arbitrary times, h and h' from the spline."""
        out = []
        for t in np.atleast_1d(ts):
            h, dh = float(self.h_at(t)), float(self.dh_at(t))
            P = reduced_P(ctx, self.n, t, h, dh)
            out.append(dh + 3 * h / (4 * t) - p_tilde(self.n, t, h, P))
        return np.array(out)


def time_grid(n, That0, decades=3.0, per_decade=60, t_end=None):
    """Log-spaced times from +-T0 to +-10^decades T0 (negative for n >= 4).

    With ``t_end`` the grid runs from +-T0 to t_end instead, in either
    direction of |t|.
    """
    if t_end is not None:
        decades = np.log10(abs(t_end) / That0)
    m = max(int(np.ceil(abs(decades) * per_decade)), 8) + 1
    a = That0 * np.logspace(0.0, decades, m)
    return -a if n >= 4 else a


def fixed_point_map(ctx, n, t, h, dh):
    """One application of the integral map; returns (h_new, h'_new, P, P~)."""
    P = np.array([reduced_P(ctx, n, ti, hi, di) for ti, hi, di in zip(t, h, dh)])
    Pt = p_tilde(n, t, h, P)
    u = np.log(np.abs(t))
    order = np.argsort(u)
    anti = CubicSpline(u[order], (np.abs(t) ** 1.75 * Pt)[order]).antiderivative()
    J = anti(u) - anti(u[0])
    h_new = np.sign(t) * np.abs(t) ** -0.75 * J
    dh_new = Pt - 3 * h_new / (4 * t)
    return h_new, dh_new, P, Pt


def solve_reduced_ode(ctx: ReductionContext, n, p, That0, tol=1e-8, max_iter=30,
                      decades=3.0, per_decade=60, t_end=None) -> ReducedSolution:
    """Picard iteration h <- map(h) from h = 0 in the Lambda norm.

    The grid covers |t| in [T0, 10^decades T0], or runs from +-T0 to
    ``t_end``; h(+-T0) = 0.  h' inside P is the previous iterate's.

    Raises
    ------
    ContractionError
        If the Lambda-norm updates stop decreasing, or the first iterate
        already leaves the unit ball.
    """
    n = check_dimension(n, allow_degenerate=False)
    if n == 3 or n == 1:
        raise DomainError("reduced equation needs n = 2 or n >= 4")
    if not (n < p <= n + 1):
        raise ValueError(f"p must lie in ({n}, {n + 1}], got {p}")
    t = time_grid(n, That0, decades, per_decade, t_end)
    h = np.zeros_like(t)
    dh = np.zeros_like(t)
    history = []
    first = None
    for it in range(1, max_iter + 1):
        h_new, dh_new, P, Pt = fixed_point_map(ctx, n, t, h, dh)
        diff = lambda_norm(t, h_new - h, dh_new - dh)
        history.append(diff)
        if first is None:
            first = lambda_norm(t, h_new, dh_new)
            if 2 * first >= 1:
                raise ContractionError(f"first iterate has Lambda norm {first}; T0 too small")
        h, dh = h_new, dh_new
        if diff < tol:
            return ReducedSolution(n, float(p), float(That0), t, h, dh, P, Pt, it, history, first)
        if it >= 3 and history[-1] > history[-2] > history[-3]:
            raise ContractionError("Lambda-norm updates are growing")
    raise ContractionError(f"no convergence in {max_iter} iterations")


def first_iterate_norm(ctx, n, That0, decades=3.0, per_decade=60):
    """||map(0)||_Lambda on the grid for this T0."""
    t = time_grid(n, That0, decades, per_decade)
    h, dh, _, _ = fixed_point_map(ctx, n, t, np.zeros_like(t), np.zeros_like(t))
    return lambda_norm(t, h, dh)


def lipschitz_ratio(ctx, n, p, t, pair):
    """max_t |P(h1) - P(h2)| |t| (log|t|)^(2(p-1)) / ||h1 - h2||_Lambda."""
    (h1, d1), (h2, d2) = pair
    P1 = np.array([reduced_P(ctx, n, ti, a, b) for ti, a, b in zip(t, h1(t), d1(t))])
    P2 = np.array([reduced_P(ctx, n, ti, a, b) for ti, a, b in zip(t, h2(t), d2(t))])
    at = np.abs(t)
    scale = at * np.log(at) ** (2 * (p - 1))
    return float(np.max(np.abs(P1 - P2) * scale)
                 / lambda_norm(t, h1(t) - h2(t), d1(t) - d2(t)))


def c_bound_ratio(c, t, p, g_norm, phi_norms):
    """|c| divided by (log|t|)^(1-p) |t|^(-1/2) [||g||_Phi + |t|^(-1/4) sum ||d^l phi||_Phi]."""
    at = abs(t)
    scale = np.log(at) ** (1 - p) * at**-0.5 * (g_norm + at**-0.25 * sum(phi_norms))
    return abs(c) / scale


def phi_norms(phi: RadialField, n, t, p, alpha, delta0=0.5):
    """||d^l phi||_Phi for l = 0, 1, 2."""
    w = weight_phi(n, t, phi.r, p, alpha, delta0)
    return [weighted_norm(d, w) for d in phi.derivs()[:3]]
