"""Double-well potentials with two non-degenerate minima at s = +-1."""
from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import cosdg, sindg

from .errors import DomainError, InvalidPotentialError

KINDS = ("quartic", "cosine", "tabulated")


class Potential:
    """Even double-well potential W and its derivatives up to order four.

    Use the constructors :meth:`quartic`, :meth:`cosine` and
    :meth:`tabulated` rather than calling ``__init__`` directly.

    Attributes
    ----------
    kind : str
        One of ``"quartic"``, ``"cosine"``, ``"tabulated"``.
    max_order : int
        Highest derivative order that can be evaluated.
    arg_scale, amp : float
        Cosine kind only: W(s) = amp * (1 + cos(arg_scale * s)).
    """

    def __init__(self, kind, max_order=4, spline=None, bounds=None,
                 arg_scale=1.0, amp=1.0):
        if kind not in KINDS:
            raise ValueError(f"unknown potential kind {kind!r}")
        self.kind = kind
        self.max_order = max_order
        self.arg_scale = float(arg_scale)
        self.amp = float(amp)
        self._spline = spline
        self._bounds = bounds

    # constructors -------------------------------------------------------
    @classmethod
    def quartic(cls):
        """W(s) = (1 - s^2)^2 / 4."""
        return cls("quartic")

    @classmethod
    def cosine(cls):
        """Cosine well rescaled so its minima sit at +-1 with W''(1) = 1.

        The raw well cos(x) has minima at x = +-pi.  Substituting
        x = pi*s moves them to s = +-1; the amplitude 1/pi^2 normalizes
        the curvature and the additive 1 makes W(+-1) = 0.
        """
        return cls("cosine", arg_scale=np.pi, amp=1.0 / np.pi**2)

    @classmethod
    def tabulated(cls, s, w):
        """Potential interpolated from samples by a cubic spline.

        Only derivatives up to order 2 are available.
        """
        s = np.asarray(s, dtype=float)
        w = np.asarray(w, dtype=float)
        if s.ndim != 1 or s.shape != w.shape or s.size < 4:
            raise ValueError("need matching 1-D arrays with at least 4 samples")
        if np.any(np.diff(s) <= 0):
            raise ValueError("sample abscissae must be strictly increasing")
        if s[0] > -1.0 or s[-1] < 1.0:
            raise DomainError("table must cover [-1, 1]")
        return cls("tabulated", max_order=2, spline=CubicSpline(s, w),
                   bounds=(s[0], s[-1]))

    @classmethod
    def from_name(cls, name):
        if name == "quartic":
            return cls.quartic()
        if name in ("cosine", "cosine-rescaled"):
            return cls.cosine()
        raise ValueError(f"unknown built-in potential {name!r}")

    def __repr__(self):
        return f"Potential(kind={self.kind!r})"

    # evaluation ---------------------------------------------------------
    def eval(self, s, order=0):
        """Return the ``order``-th derivative of W at ``s``."""
        if order not in (0, 1, 2, 3, 4):
            raise ValueError(f"derivative order must be in 0..4, got {order}")
        if order > self.max_order:
            raise ValueError(
                f"{self.kind} potential provides derivatives up to order "
                f"{self.max_order} only")
        s = np.asarray(s, dtype=float)
        if self.kind == "quartic":
            if order == 0:
                return 0.25 * (1.0 - s * s) ** 2
            if order == 1:
                return s**3 - s
            if order == 2:
                return 3.0 * s * s - 1.0
            if order == 3:
                return 6.0 * s
            return np.full_like(s, 6.0)
        if self.kind == "cosine":
            a, c = self.arg_scale, self.amp
            # degree-based trig is exact at the wells, so W'(+-1) = 0 exactly
            x = 180.0 * s
            # derivatives of c*(1 + cos(a s)) cycle through -sin, -cos, sin, cos
            if order == 0:
                return c * (1.0 + cosdg(x))
            sign, fn = [(-1.0, sindg), (-1.0, cosdg), (1.0, sindg),
                        (1.0, cosdg)][order - 1]
            return sign * c * a**order * fn(x)
        lo, hi = self._bounds
        if np.any(s < lo) or np.any(s > hi):
            raise DomainError(f"argument outside tabulated range [{lo}, {hi}]")
        return self._spline(s, order)

    def __call__(self, s, order=0):
        return self.eval(s, order)

    @property
    def alpha(self):
        """sqrt(W''(1)), the decay rate of the layer tails."""
        w2 = float(self.eval(1.0, 2))
        if not w2 > 0.0:
            raise InvalidPotentialError(f"W''(1) = {w2} is not positive")
        return np.sqrt(w2)

    # accurate forms near the wells ---------------------------------------
    def excess(self, q):
        """W(1 - q) - W(1) without cancellation for small gaps ``q``.

        Layer tails need the relative accuracy of this difference when
        1 - |s| is far below machine epsilon relative to one.
        """
        q = np.asarray(q, dtype=float)
        if self.kind == "quartic":
            return 0.25 * q * q * (2.0 - q) ** 2
        if self.kind == "cosine":
            return 2.0 * self.amp * np.sin(0.5 * self.arg_scale * q) ** 2
        direct = self.eval(1.0 - q) - self.eval(1.0)
        local = 0.5 * self.eval(1.0, 2) * q * q
        return np.where(q < 1e-4, local, direct)

    def slope_at_gap(self, q):
        """W'(1 - q) without cancellation for small ``q``."""
        q = np.asarray(q, dtype=float)
        if self.kind == "quartic":
            return -q * (1.0 - q) * (2.0 - q)
        if self.kind == "cosine":
            return -self.amp * self.arg_scale * np.sin(self.arg_scale * q)
        direct = self.eval(1.0 - q, 1)
        local = -self.eval(1.0, 2) * q
        return np.where(q < 1e-4, local, direct)

    def check(self, resolution=1e-3):
        """Return a dict of the double-well invariants, each a bool."""
        s = np.arange(-0.999, 0.999 + 0.5 * resolution, resolution)
        w1 = float(self.eval(1.0))
        return {
            "even": bool(np.allclose(self.eval(s), self.eval(-s),
                                     rtol=0.0, atol=1e-13)),
            "minima": bool(abs(self.eval(1.0, 1)) < 1e-12
                           and abs(self.eval(-1.0, 1)) < 1e-12
                           and self.eval(1.0, 2) > 0),
            "interior_excess": bool(np.all(self.eval(s) > w1)),
        }
