"""Correction layer wt = -omega' * int_0^y omega'^-2 I, I(y) = int_-inf^y s omega'^2 / 2.

Writing wt = omega' u gives u' = -I / omega'^2.  All derivatives of wt
follow from the Leibniz rule together with the recursion

    (u')' = -y/2 - 2 (omega''/omega') u'

which is the derivative of the quotient, so the only numerical input
is the pair of quadratures producing I and u.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BPoly

from .errors import NumericalError
from .layer import LayerTable


def _cumtrapz(f, h):
    return np.concatenate([[0.0], np.cumsum(0.5 * h * (f[1:] + f[:-1]))])


def _richardson_cumulative(f_fine, h_fine):
    """Cumulative integral at every other fine node, O(h^4) accurate.

    Trapezoid sums at spacing h_fine and 2*h_fine are combined as
    (4 T_fine - T_coarse) / 3.
    """
    fine = _cumtrapz(f_fine, h_fine)[::2]
    coarse = _cumtrapz(f_fine[::2], 2 * h_fine)
    return (4.0 * fine - coarse) / 3.0


@dataclass(frozen=True)
class CorrectionTable:
    """Correction layer on the layer grid.

    Attributes
    ----------
    y : ndarray
        Nodes, identical to ``layer.y``.
    u, du : ndarray
        u = wt / omega' and its derivative -I / omega'^2.
    inner : ndarray
        I(y) at the nodes.
    values : ndarray, shape (4, len(y))
        wt and its first three derivatives.
    """

    layer: LayerTable
    y: np.ndarray
    u: np.ndarray
    du: np.ndarray
    inner: np.ndarray
    values: np.ndarray

    def _poly(self):
        bp = self.__dict__.get("_bp")
        if bp is None:
            ddu = self._dv(self.y, self.du)
            bp = BPoly.from_derivatives(
                self.y, np.stack([self.u, self.du, ddu], axis=1))
            object.__setattr__(self, "_bp", bp)
        return bp

    def _ratios(self, y):
        L = self.layer
        d1, d2, d3, d4 = (L(y, k) for k in (1, 2, 3, 4))
        r = d2 / d1
        r1 = d3 / d1 - r * r
        r2 = d4 / d1 - d3 * d2 / d1**2 - 2.0 * r * r1
        return (d1, d2, d3, d4), (r, r1, r2)

    def _dv(self, y, v):
        (_, d2, _, _), _ = self._ratios(y)
        return -0.5 * y - 2.0 * (d2 / self.layer(y, 1)) * v

    def _u_derivs(self, y):
        """u, u', u'', u''', u'''' at arbitrary y."""
        y = np.asarray(y, dtype=float)
        Y = self.layer.Y
        a = self.layer.alpha
        yc = np.clip(y, -Y, Y)
        bp = self._poly()
        u = bp(yc)
        v = bp(yc, 1)
        # past the table u' follows its asymptote |y|/(4a) + 1/(8a^2)
        out = np.abs(y) > Y
        if np.any(out):
            ay, sg = np.abs(y), np.sign(y)
            slope = lambda t: t / (4 * a) + 1 / (8 * a * a)
            ext = 0.5 * (ay**2 - Y**2) / (4 * a) + (ay - Y) / (8 * a * a)
            u = np.where(out, u + sg * ext, u)
            v = np.where(out, slope(ay), v)
        _, (r, r1, r2) = self._ratios(y)
        v1 = -0.5 * y - 2.0 * r * v
        v2 = -0.5 - 2.0 * (r1 * v + r * v1)
        v3 = -2.0 * (r2 * v + 2.0 * r1 * v1 + r * v2)
        return u, v, v1, v2, v3

    def eval(self, y, order=0):
        """wt^(order)(y) for order 0..4.

        Orders up to three use the Leibniz rule on omega' u.  The fourth
        derivative uses wt'' = W''(omega) wt - y omega'/2 differentiated
        twice, which avoids a fifth derivative of omega.
        """
        if order not in (0, 1, 2, 3, 4):
            raise ValueError(f"derivative order must be in 0..4, got {order}")
        y = np.asarray(y, dtype=float)
        L = self.layer
        W = L.potential
        u = self._u_derivs(y)
        d = [L(y, k) for k in range(1, 5)]  # omega' .. omega''''
        if order <= 3:
            binom = [[1], [1, 1], [1, 2, 1], [1, 3, 3, 1]][order]
            return sum(c * d[j] * u[order - j] for j, c in enumerate(binom))
        om = L(y)
        w0, w1, w2 = (self.eval(y, k) for k in range(3))
        return ((W.eval(om, 4) * d[0] ** 2 + W.eval(om, 3) * d[1]) * w0
                + 2.0 * W.eval(om, 3) * d[0] * w1 + W.eval(om, 2) * w2
                - d[1] - 0.5 * y * d[2])

    def __call__(self, y, order=0):
        return self.eval(y, order)

    def decay_constant(self, rate=0.75):
        """Smallest C with |wt| <= C exp(-rate * alpha |y|) on the table."""
        a = self.layer.alpha
        return float(np.max(np.abs(self.values[0]) * np.exp(rate * a * np.abs(self.y))))

    def fitted_rate(self, lo=5.0, hi=20.0):
        """Least-squares slope of -log|wt| against |y| on [lo, hi], in units of alpha."""
        m = (self.y >= lo) & (self.y <= hi)
        slope = np.polyfit(self.y[m], np.log(np.abs(self.values[0][m])), 1)[0]
        return float(-slope / self.layer.alpha)


def build_correction(layer: LayerTable) -> CorrectionTable:
    """Evaluate the double quadrature defining the correction layer.

    I is accumulated left to right on the negative half-line starting
    from the analytic tail below -Y, then extended by evenness.  The
    outer integral starts at zero.  Both use trapezoid sums with one
    Richardson step, and quotients are formed in log space past y = 10.
    """
    Y, h, a, b = layer.Y, layer.step, layer.alpha, layer.beta
    m = int(round(Y / h))

    # inner integral on [-Y, 0] at spacing h/2, from a grid of spacing h/4
    s4 = np.linspace(-Y, 0.0, 4 * m + 1)
    f4 = 0.5 * s4 * layer(s4, 1) ** 2
    tail = 0.5 * (a * b) ** 2 * np.exp(-2 * a * Y) * (-Y / (2 * a) - 1 / (4 * a * a))
    I_half = tail + _richardson_cumulative(f4, h / 4)  # nodes -Y, -Y+h/2, ..., 0
    I_pos = I_half[::-1]                               # I is even: values at 0..Y
    y2 = np.linspace(0.0, Y, 2 * m + 1)

    d1 = layer(y2, 1)
    if np.any(d1 < 1e-300):
        raise NumericalError("omega' underflow inside the table")
    big = y2 > 10.0
    ratio = np.empty_like(y2)
    ratio[~big] = I_pos[~big] / d1[~big] ** 2
    # I < 0 everywhere, so the quotient is -exp(log|I| - 2 log omega')
    ratio[big] = -np.exp(np.log(-I_pos[big]) - 2.0 * np.log(d1[big]))
    v2 = -ratio
    u_pos = _richardson_cumulative(v2, h / 2)          # nodes 0, h, ..., Y

    y = layer.y
    u = np.concatenate([-u_pos[:0:-1], u_pos])
    du = np.concatenate([v2[::2][:0:-1], v2[::2]])
    inner = np.concatenate([I_pos[::2][:0:-1], I_pos[::2]])
    tab = CorrectionTable(layer, y, u, du, inner, np.empty((4, y.size)))
    vals = np.stack([tab.eval(y, k) for k in range(4)])
    # enforce exact oddness of the tabulated values (roundoff level anyway)
    sign = np.array([1.0, -1.0, 1.0, -1.0])[:, None]
    vals = 0.5 * (vals + sign * (-vals[:, ::-1]))
    object.__setattr__(tab, "values", vals)
    return tab


def _fd2(f, H):
    return (-f[4:] + 16 * f[3:-1] - 30 * f[2:-2] + 16 * f[1:-3] - f[:-4]) / (12 * H * H)


def check_identities(corr: CorrectionTable, layer: LayerTable, bound=20.0, stride=10):
    """Sup-norm residuals of L* wt = y omega'/2 and (L*)^2 wt = -omega''.

    Two routes are reported.  ``analytic_*`` uses the closed-form
    derivatives of wt; ``fd_*`` applies L* = -d^2/dy^2 + W''(omega) with a
    fourth-order stencil of spacing ``stride * step`` directly to the
    tabulated nodes, so it sees any quadrature error in u.

    Returns
    -------
    dict
        Keys ``analytic_L``, ``analytic_L2``, ``fd_L``, ``fd_L2``,
        ``at_zero`` and the nodewise arrays ``resid_L``, ``resid_L2``.
    """
    W = layer.potential
    y = corr.y
    om = layer(y)
    d1, d2, d3, d4 = (layer(y, k) for k in (1, 2, 3, 4))
    w2p = W.eval(om, 2)
    u, v, v1, v2, v3 = corr._u_derivs(y)
    wt = corr.values[0]
    # G = L* wt = -(omega' v' + 2 omega'' v); G'' in closed form
    G = -(d1 * v1 + 2.0 * d2 * v)
    Gpp = -(d1 * v3 + 4.0 * d2 * v2 + 5.0 * d3 * v1 + 2.0 * d4 * v)
    resid_L = G - 0.5 * y * d1
    resid_L2 = -Gpp + w2p * G + d2
    win = np.abs(y) <= bound

    H = stride * layer.step
    ys, ws, oms = y[::stride], wt[::stride], om[::stride]
    g = -_fd2(ws, H) + W.eval(oms[2:-2], 2) * ws[2:-2]
    fd_L = g - 0.5 * ys[2:-2] * layer(ys[2:-2], 1)
    g2 = -_fd2(g, H) + W.eval(oms[4:-4], 2) * g[2:-2] + layer(ys[4:-4], 2)
    win1 = np.abs(ys[2:-2]) <= bound
    win2 = np.abs(ys[4:-4]) <= bound
    i0 = int(np.argmin(np.abs(y)))
    return {
        "analytic_L": float(np.max(np.abs(resid_L[win]))),
        "analytic_L2": float(np.max(np.abs(resid_L2[win]))),
        "fd_L": float(np.max(np.abs(fd_L[win1]))),
        "fd_L2": float(np.max(np.abs(g2[win2]))),
        "at_zero": float(max(abs(resid_L[i0]), abs(resid_L2[i0]))),
        "resid_L": resid_L,
        "resid_L2": resid_L2,
    }


def orthogonality(corr: CorrectionTable) -> float:
    """Trapezoid value of int omega' wt dy over the table."""
    f = corr.layer.values[1] * corr.values[0]
    return float(np.trapezoid(f, corr.y)) if hasattr(np, "trapezoid") else float(np.trapz(f, corr.y))
