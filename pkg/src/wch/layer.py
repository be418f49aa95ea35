"""Heteroclinic layer profile omega with omega'' = W'(omega), omega(0) = 0.

The profile is stored through the stretched coordinate sigma defined by
omega = tanh(sigma).  In that variable the inverse map lambda has a smooth
bounded integrand, the gap 1 - |omega| is available to full relative
precision deep in the tails, and sigma(y) is close to linear so cubic
Hermite interpolation is accurate to rounding level.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError, NumericalError
from .potential import Potential

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _gap_of_sigma(sigma):
    """1 - tanh|sigma| evaluated without cancellation."""
    e = np.exp(-2.0 * np.abs(sigma))
    return 2.0 * e / (1.0 + e)


def _integrand_sigma(pot, sigma):
    # d lambda / d sigma = (1 - tanh^2) / sqrt(2 (W - W(1)))
    q = _gap_of_sigma(sigma)
    return q * (2.0 - q) / np.sqrt(2.0 * pot.excess(q))


def _gl_integral(pot, a, b):
    """Vectorized 20-point Gauss-Legendre integral over [a, b]."""
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    vals = _integrand_sigma(pot, mid + half * _GL_X)
    return (half * vals * _GL_W).sum(axis=-1)


def lambda_of_s(pot: Potential, s, gap=None) -> float:
    """Inverse layer map lambda(s) = int_0^s (2(W(tau) - W(1)))^(-1/2) dtau.

    Parameters
    ----------
    pot : Potential
    s : float
        Point in (-1, 1).
    gap : float, optional
        1 - |s| supplied separately.  Needed when |s| is so close to one
        that the gap cannot be recovered from ``s`` in double precision.

    Notes
    -----
    Beyond |tau| = 1/2 the substitution tau = 1 - exp(-v) removes the
    logarithmic blow-up at the well.
    """
    s = float(s)
    q = 1.0 - abs(s) if gap is None else float(gap)
    if not (abs(s) < 1.0 and q > 0.0):
        raise DomainError(f"lambda is defined on (-1, 1), got s={s}")
    sign = 1.0 if s >= 0 else -1.0
    inner = min(abs(s), 0.5)

    def f(tau):
        return 1.0 / np.sqrt(2.0 * float(pot.excess(1.0 - tau)))

    total, _ = integrate.quad(f, 0.0, inner, epsabs=1e-14, epsrel=1e-13)
    if abs(s) > 0.5:
        def g(v):
            e = np.exp(-v)
            return e / np.sqrt(2.0 * float(pot.excess(e)))

        part, _ = integrate.quad(g, np.log(2.0), -np.log(q), epsabs=1e-14,
                                 epsrel=1e-13, limit=200)
        total += part
    return sign * total


def beta(pot: Potential) -> float:
    """Tail amplitude beta with 1 - omega(y) ~ beta exp(-alpha y).

    beta = exp(alpha * int_0^1 [(2(W - W(1)))^(-1/2) - (alpha (1 - s))^(-1)] ds),
    evaluated after the substitution s = 1 - exp(-v).
    """
    alpha = pot.alpha

    def f(v):
        e = np.exp(-v)
        return e / np.sqrt(2.0 * float(pot.excess(e))) - 1.0 / alpha

    # the integrand decays like exp(-v); beyond v = 80 it is below 1e-34
    val, err = integrate.quad(f, 0.0, 80.0, epsabs=1e-14, epsrel=1e-13,
                              limit=400)
    if not np.isfinite(val) or err > 1e-9:
        raise NumericalError(f"beta quadrature did not converge (err={err})")
    return float(np.exp(alpha * val))


@dataclass(frozen=True)
class LayerTable:
    """Tabulated layer on [-Y, Y] with exponential tails beyond.

    Attributes
    ----------
    y : ndarray
        Grid nodes.
    sigma, dsigma : ndarray
        Stretched coordinate artanh(omega) and its y-derivative.
    values : ndarray, shape (5, len(y))
        omega and its first four derivatives at the nodes.
    """

    potential: Potential
    Y: float
    step: float
    y: np.ndarray
    sigma: np.ndarray
    dsigma: np.ndarray
    values: np.ndarray
    alpha: float
    beta: float

    @property
    def omega(self):
        return self.values[0]

    def _spline(self):
        sp = self.__dict__.get("_sp")
        if sp is None:
            sp = CubicHermiteSpline(self.y, self.sigma, self.dsigma)
            object.__setattr__(self, "_sp", sp)
        return sp

    def _core(self, sigma, order):
        pot = self.potential
        q = _gap_of_sigma(sigma)
        sgn = np.where(sigma < 0, -1.0, 1.0)
        if order == 0:
            return sgn * (1.0 - q)
        d1 = np.sqrt(2.0 * pot.excess(q))
        if order == 1:
            return d1
        w1 = sgn * pot.slope_at_gap(q)
        if order == 2:
            return w1
        om = sgn * (1.0 - q)
        if order == 3:
            return pot.eval(om, 2) * d1
        return pot.eval(om, 3) * d1 * d1 + pot.eval(om, 2) * w1

    def _tail(self, y, order):
        sgn = np.where(y < 0, -1.0, 1.0)
        q = self.beta * np.exp(-self.alpha * np.abs(y))
        if order == 0:
            return sgn * (1.0 - q)
        # odd derivatives are alpha^k q, even ones -sgn alpha^k q
        k = self.alpha**order * q
        return k if order % 2 else -sgn * k

    def eval(self, y, order=0):
        """omega^(order)(y) for order 0..4, with tails outside [-Y, Y]."""
        if order not in (0, 1, 2, 3, 4):
            raise ValueError(f"derivative order must be in 0..4, got {order}")
        y = np.asarray(y, dtype=float)
        ay = np.abs(y)
        w = np.clip(ay - (self.Y - 2.0), 0.0, 1.0)
        inside = ay <= self.Y
        out = self._tail(y, order)
        if np.any(inside):
            yc = np.where(inside, y, 0.0)
            core = self._core(self._spline()(yc), order)
            out = np.where(inside, (1.0 - w) * core + w * out, out)
        return out

    def __call__(self, y, order=0):
        return self.eval(y, order)

    def gap(self, y):
        """1 - |omega(y)| to full relative precision."""
        y = np.asarray(y, dtype=float)
        ay = np.abs(y)
        w = np.clip(ay - (self.Y - 2.0), 0.0, 1.0)
        tail = self.beta * np.exp(-self.alpha * ay)
        core = _gap_of_sigma(self._spline()(np.clip(y, -self.Y, self.Y)))
        return np.where(ay <= self.Y, (1.0 - w) * core + w * tail, tail)


def build_layer(pot: Potential, Y=25.0, step=1e-3, tol=None) -> LayerTable:
    """Tabulate the layer by root-finding lambda(s) = y at every node.

    The bracket for each node comes from binary search in a panel table
    of lambda; Newton iterations then polish to rounding level.

    Raises
    ------
    NumericalError
        If Newton fails to converge within 60 iterations at some node.
    """
    if not (Y > 0 and step > 0):
        raise ValueError("Y and step must be positive")
    alpha = pot.alpha
    m = int(round(Y / step))
    if abs(m * step - Y) > 1e-9 * Y:
        raise ValueError("Y must be an integer multiple of step")
    y_pos = np.arange(m + 1) * step

    # panel table of lambda in sigma
    h = 0.05
    top = 0.5 * alpha * (Y + 2.0) + 5.0
    grid = np.arange(0.0, top + h, h)
    lam = np.concatenate([[0.0], np.cumsum(_gl_integral(pot, grid[:-1], grid[1:]))])
    while lam[-1] < Y + 1.0:
        extra = grid[-1] + h * np.arange(1, 200)
        more = lam[-1] + np.cumsum(_gl_integral(
            pot, np.concatenate([[grid[-1]], extra[:-1]]), extra))
        grid, lam = np.concatenate([grid, extra]), np.concatenate([lam, more])

    k = np.clip(np.searchsorted(lam, y_pos, side="right") - 1, 0, len(grid) - 2)
    base_s, base_l = grid[k], lam[k]
    sig = base_s + (y_pos - base_l) / _integrand_sigma(pot, base_s)
    tol = 4.0 * np.finfo(float).eps * np.maximum(1.0, y_pos) if tol is None else tol
    done = np.zeros_like(y_pos, dtype=bool)
    for _ in range(60):
        res = base_l + _gl_integral(pot, base_s, sig) - y_pos
        done = np.abs(res) <= tol
        if done.all():
            break
        sig = sig - res / _integrand_sigma(pot, sig)
    else:
        bad = int(np.flatnonzero(~done)[0])
        raise NumericalError(f"layer root-find failed at node {bad} (y={y_pos[bad]})")

    sigma = np.concatenate([-sig[:0:-1], sig])
    y = np.concatenate([-y_pos[:0:-1], y_pos])
    dsigma = 1.0 / _integrand_sigma(pot, sigma)
    table = LayerTable(pot, float(Y), float(step), y, sigma, dsigma,
                       np.empty((5, y.size)), alpha, beta(pot))
    orders = range(5) if pot.max_order >= 3 else range(4)
    vals = np.full((5, y.size), np.nan)
    for o in orders:
        vals[o] = table.eval(y, o)
    object.__setattr__(table, "values", vals)
    return table
