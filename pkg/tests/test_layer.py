from __future__ import annotations

import numpy as np
import pytest

from wch.errors import DomainError
from wch.layer import beta, build_layer, lambda_of_s

SQRT2 = np.sqrt(2.0)


def test_lambda_values(quartic):
    assert lambda_of_s(quartic, 0.0) == 0.0
    # closed form sqrt(2) artanh(s) for the quartic well
    assert lambda_of_s(quartic, 0.5) == pytest.approx(0.7768361992120933, abs=1e-12)
    assert lambda_of_s(quartic, -0.5) == pytest.approx(-0.7768361992120933, abs=1e-12)
    for s in (0.9, 0.999, 1 - 1e-9):
        assert lambda_of_s(quartic, s) == pytest.approx(SQRT2 * np.arctanh(s), rel=1e-10)


def test_lambda_domain(quartic):
    for s in (1.0, -1.0, 1.5):
        with pytest.raises(DomainError):
            lambda_of_s(quartic, s)


def test_beta_values(quartic, cosine):
    assert beta(quartic) == pytest.approx(2.0, rel=1e-12)
    # cosine kink 1 - omega = (4/pi) arctan(exp(-y)), so beta = 4/pi
    assert beta(cosine) == pytest.approx(4.0 / np.pi, rel=1e-10)


def test_quartic_layer_is_tanh(layer):
    y = np.linspace(-10, 10, 20001)
    assert np.max(np.abs(layer(y) - np.tanh(y / SQRT2))) < 1e-8
    assert layer(0.0) == 0.0
    assert layer(0.0, 1) == pytest.approx(1 / SQRT2, rel=1e-14)


def test_cosine_layer_closed_form(cosine_layer):
    y = np.linspace(-20, 20, 4001)
    exact = 4 / np.pi * np.arctan(np.exp(y)) - 1
    assert np.max(np.abs(cosine_layer(y) - exact)) < 1e-12
    # gap relative accuracy deep in the tail
    yt = np.array([10.0, 18.0, 22.0])
    assert np.allclose(cosine_layer.gap(yt), 4 / np.pi * np.arctan(np.exp(-yt)), rtol=1e-10)


@pytest.mark.parametrize("name", ["layer", "cosine_layer"])
def test_table_invariants(name, request):
    tab = request.getfixturevalue(name)
    pot = tab.potential
    om, d1, d2 = tab.values[0], tab.values[1], tab.values[2]
    assert np.all(d1 > 0)
    assert np.all(np.abs(om) < 1)
    assert np.max(np.abs(om + om[::-1])) < 1e-10
    # first integral of the profile equation
    assert np.max(np.abs(0.5 * d1**2 - (pot.eval(om) - pot.eval(1.0)))) < 1e-10
    # fourth-order finite differences of the stored omega against W'(omega)
    h = tab.step
    fd = (-om[4:] + 16 * om[3:-1] - 30 * om[2:-2] + 16 * om[1:-3] - om[:-4]) / (12 * h * h)
    assert np.max(np.abs(fd - pot.eval(om[2:-2], 1))) < 1e-8
    assert np.max(np.abs(d2 - pot.eval(om, 1))) < 1e-8


def test_derivative_chain_consistent(layer):
    y = np.linspace(-20, 20, 801)
    h = 1e-4
    for k in range(4):
        fd = (layer(y + h, k) - layer(y - h, k)) / (2 * h)
        assert np.max(np.abs(fd - layer(y, k + 1))) < 1e-7


def test_tail_limits(layer):
    a, b = layer.alpha, layer.beta
    assert layer.gap(15.0) * np.exp(a * 15.0) == pytest.approx(b, abs=1e-4)
    assert layer(15.0, 1) * np.exp(a * 15.0) == pytest.approx(a * b, abs=1e-4)
    pot = layer.potential
    target = pot.eval(1.0, 3) / (6 * pot.eval(1.0, 2))
    vals = [(b * np.exp(-a * y) - layer.gap(y)) / (b**2 * np.exp(-2 * a * y))
            for y in (12.0, 14.0, 16.0)]
    assert abs(vals[1] - vals[0]) < 1e-2 and abs(vals[2] - vals[1]) < 1e-2
    assert vals[-1] == pytest.approx(target, abs=1e-2)


def test_outside_table_uses_tail(layer):
    y = np.array([30.0, -40.0])
    q = layer.beta * np.exp(-layer.alpha * np.abs(y))
    assert np.allclose(layer(y), np.sign(y) * (1 - q), rtol=0, atol=1e-300)
    for k in range(1, 5):
        expect = layer.alpha**k * q * (1.0 if k % 2 else -np.sign(y))
        assert np.allclose(layer(y, k), expect, rtol=1e-14, atol=0)


def test_lambda_round_trip(layer):
    rng = np.random.default_rng(11)
    ys = rng.uniform(-layer.Y + 1, layer.Y - 1, 1000)
    for y in ys:
        s = float(layer(y))
        got = lambda_of_s(layer.potential, s, gap=float(layer.gap(y)))
        assert got == pytest.approx(y, abs=1e-8)


def test_coarse_layer_converges(quartic):
    tab = build_layer(quartic, Y=12.0, step=0.05)
    y = np.linspace(-9, 9, 1001)
    assert np.max(np.abs(tab(y) - np.tanh(y / SQRT2))) < 1e-12
