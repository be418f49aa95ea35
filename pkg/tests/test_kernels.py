from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import simpson
from scipy.special import jv

from wch.errors import DomainError
from wch.kernels import (LipschitzViolationError, bessel_j, build_kernel_table, duhamel_1d,
                         f_n, f_n_at_zero, heat_convolve, mild_solve, q_kernel)

# mpmath at 30 digits: sqrt(2/pi) int exp(-r^4) cos(3r) dr and int exp(-r^4) r J_0(2r) dr
F1_AT_3 = 0.0799057910226199330
F2_AT_2 = 0.2421019949441001459


@pytest.mark.parametrize("nu", [-0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5])
def test_bessel_against_scipy(nu):
    x = np.concatenate([np.linspace(1e-3, 11.99, 400), np.linspace(12.0, 90.0, 400)])
    assert np.max(np.abs(bessel_j(nu, x) - jv(nu, x))) < 1e-10


def test_f1_at_zero():
    # sqrt(2/pi) Gamma(5/4) from an mpmath quadrature of exp(-r^4)
    assert f_n(1, 0.0) == pytest.approx(0.7232045423160386, abs=1e-12)
    assert f_n_at_zero(1) == pytest.approx(0.7232045423160386, abs=1e-14)
    for n in range(1, 7):
        assert f_n(n, 0.0) == pytest.approx(f_n_at_zero(n), abs=1e-12)


def test_profile_reference_values():
    assert f_n(1, 3.0) == pytest.approx(F1_AT_3, abs=1e-12)
    assert f_n(2, 2.0) == pytest.approx(F2_AT_2, abs=1e-12)


def test_f1_is_cosine_transform():
    s = np.array([0.3, 1.7, 4.0, 9.5])
    r = np.linspace(0, 4.5, 20001)
    ref = [np.sqrt(2 / np.pi) * simpson(np.exp(-r**4) * np.cos(v * r), x=r) for v in s]
    assert np.max(np.abs(f_n(1, s) - ref)) < 1e-10


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("s", [0.5, 2.0, 5.0])
def test_recurrence(n, s):
    h = 1e-3
    d = (f_n(n, s + h) - f_n(n, s - h)) / (2 * h)
    assert abs(d + s * f_n(n + 2, s)) < 1e-5


def test_f1_changes_sign(kernel_table):
    inner = kernel_table.f[(kernel_table.s > 0) & (kernel_table.s < 20)]
    assert np.any(np.diff(np.sign(inner)) != 0)
    assert inner.min() < 0


@pytest.fixture(scope="module")
def tables(kernel_table):
    return {1: kernel_table, **{n: build_kernel_table(n) for n in (2, 3, 4)}}


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_mass_and_envelope(tables, n):
    T = tables[n]
    for t in (0.5, 1.0, 2.0):
        assert abs(T.mass(t) - 1) < 1e-6
    assert T.mu > 0
    assert np.all(np.abs(T.f) <= T.envelope(T.s) * (1 + 1e-12))
    # the kernel changes sign, so its absolute mass is larger than one
    assert T.abs_mass() > 1.1


def test_heat_convolve_constants_and_semigroup(kernel_table):
    dx = 0.05
    x = np.arange(-40, 40 + dx / 2, dx)
    one = heat_convolve(kernel_table, np.ones_like(x), dx, 1.3)
    assert np.max(np.abs(one - 1)) < 1e-12
    g = np.exp(-x**2)
    a = heat_convolve(kernel_table, heat_convolve(kernel_table, g, dx, 1.0, "zero"), dx, 1.0, "zero")
    b = heat_convolve(kernel_table, g, dx, 2.0, "zero")
    assert np.max(np.abs(a - b)) < 1e-6
    # Fourier oracle: Gamma_t of exp(-x^2) is (1/pi) int sqrt(pi) exp(-xi^2/4 - t xi^4) cos(xi x) dxi
    xi = np.linspace(0, 12, 12001)
    ghat = np.sqrt(np.pi) * np.exp(-xi**2 / 4 - 2.0 * xi**4)
    pick = np.arange(0, x.size, 97)
    ref = [simpson(ghat * np.cos(xi * v), x=xi) / np.pi for v in x[pick]]
    assert np.max(np.abs(b[pick] - ref)) < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 5))
def test_heat_convolve_linear(kernel_table, a, b, t):
    dx = 0.1
    x = np.arange(-10, 10 + dx / 2, dx)
    u, v = np.exp(-x**2), np.sin(x)
    lhs = heat_convolve(kernel_table, a * u + b * v, dx, t)
    rhs = a * heat_convolve(kernel_table, u, dx, t) + b * heat_convolve(kernel_table, v, dx, t)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_heat_convolve_bad_time(kernel_table):
    with pytest.raises(DomainError):
        heat_convolve(kernel_table, np.zeros(5), 0.1, 0.0)


def test_smoothing_estimate(kernel_table):
    dx = 0.01
    x = np.arange(-30, 30 + dx / 2, dx)
    u0 = np.sign(x)
    consts = []
    for t in (0.1, 1.0, 10.0):
        u = heat_convolve(kernel_table, u0, dx, t)
        grad = np.gradient(u, dx)
        consts.append(np.max(np.abs(grad[500:-500])) * t**0.25)
    # sign(x) jumps by 2, so the gradient is 2 p_1(t, x), maximal at x = 0
    assert np.ptp(consts) / np.mean(consts) < 0.02
    assert np.mean(consts) == pytest.approx(2 * f_n_at_zero(1) / np.sqrt(2 * np.pi), rel=0.02)


def test_q_kernel_properties():
    y = np.linspace(-40, 40, 8001)
    envs = []
    for nu in (0.1, 1.0, 10.0):
        q = q_kernel(1.0, nu, y)
        assert simpson(q, x=y) == pytest.approx(1.0, abs=1e-8)
        assert q_kernel(1.0, nu, 0.0) > 0
        near = np.abs(y) <= 20
        envs.append(np.max(np.abs(q[near]) * nu**0.25 * np.exp(np.abs(y[near]) / nu**0.25)))
    assert np.all(np.isfinite(envs))
    with pytest.raises(DomainError):
        q_kernel(1.0, 0.0, 1.0)


def test_q_kernel_gaussian_limit():
    # without the quartic term the kernel is the heat kernel with diffusivity 2 alpha^2
    y = np.linspace(-3, 3, 13)
    nu, a = 50.0, 1.0
    q = q_kernel(a, nu, y)
    gauss = np.exp(-y**2 / (8 * a * a * nu)) / np.sqrt(8 * np.pi * a * a * nu)
    assert np.max(np.abs(q - gauss)) < 0.02 * gauss.max()


def test_duhamel_zero_and_constant():
    y = np.arange(-5, 5 + 1e-9, 0.1)
    _, u = duhamel_1d(1.0, lambda nu, y: np.zeros_like(y), 1.0, 0.0, y, 0.02)
    assert np.all(u == 0)
    errs = []
    for dt in (0.02, 0.01):
        nus, u = duhamel_1d(1.3, lambda nu, y: 2.0 * np.ones_like(y), 1.0, 0.5, y, dt)
        errs.append(np.max(np.abs(u - 2 / 1.3**4 * (1 - np.exp(-1.3**4 * (nus + 1.0)))[:, None])))
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_duhamel_residual():
    res = []
    for dt, dx in ((0.02, 0.2), (0.01, 0.1)):
        y = np.arange(-12, 12 + 1e-9, dx)

        def f(nu, y):
            return np.exp(-y**2 / 2) * (1 + 0.5 * np.sin(3 * nu))

        nus, u = duhamel_1d(1.0, f, 1.0, 0.0, y, dt, ends="zero")
        ut = (u[2:] - u[:-2]) / (2 * dt)
        uc = u[1:-1]
        d2 = np.gradient(np.gradient(uc, dx, axis=1), dx, axis=1)
        d4 = np.gradient(np.gradient(d2, dx, axis=1), dx, axis=1)
        F = np.stack([f(v, y) for v in nus[1:-1]])
        r = ut + d4 - 2 * d2 + uc - F
        res.append(np.max(np.abs(r[5:, 10:-10])))
    assert res[1] < 3e-3
    assert res[0] / res[1] > 3.5


def test_mild_free_evolution(kernel_table):
    dx = 0.1
    x = np.arange(-40, 40 + dx / 2, dx)
    g = np.exp(-x**2)
    ts, U = mild_solve(lambda a, b, u, t, x: 0 * u, g, x, 0.0, 1.0, 1.0, kernel_table,
                       dtau=0.05, ends="zero")
    assert ts[-1] == pytest.approx(1.0, abs=1e-14)
    assert np.max(np.abs(U[-1] - heat_convolve(kernel_table, g, dx, 1.0, "zero"))) < 1e-8


def test_mild_scalar_decay(kernel_table):
    x = np.linspace(-2.5, 2.5, 51)
    ts, U = mild_solve(lambda a, b, u, t, x: -u, np.ones_like(x), x, 0.5, 1.5, 1.0,
                       kernel_table, dtau=0.005)
    assert np.max(np.abs(U - np.exp(-(ts - 0.5))[:, None])) < 1e-6


def test_mild_window_halving(kernel_table):
    dx = 0.1
    x = np.arange(-40, 40 + dx / 2, dx)
    g = np.exp(-x**2)

    def G(uxx, ux, u, t, x):
        return 0.2 * uxx - 0.3 * ux - u + np.sin(x) * np.exp(-x**2)

    full = 1.0 / (2.0 * kernel_table.abs_mass())
    _, U1 = mild_solve(G, g, x, 0.0, 1.0, 1.0, kernel_table, dtau=0.02, ends="zero")
    _, U2 = mild_solve(G, g, x, 0.0, 1.0, 1.0, kernel_table, dtau=0.02, ends="zero",
                       window=full / 2)
    assert np.max(np.abs(U1[-1] - U2[-1])) < 1e-9


def test_mild_detects_non_contraction(kernel_table):
    x = np.linspace(-5, 5, 101)
    with pytest.raises(LipschitzViolationError):
        mild_solve(lambda a, b, u, t, x: 50 * u, np.exp(-x**2), x, 0.0, 1.0, 1.0,
                   kernel_table, dtau=0.05, ends="zero")
