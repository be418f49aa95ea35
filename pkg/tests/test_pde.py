from __future__ import annotations

import numpy as np
import pytest

from wch.ansatz import (CutOff, ModulationState, RadialField, apply_F,
                        diffuse_energy)
from wch.errors import DomainError, InstabilityError, TopologyError
from wch.geometry import gamma_n
from wch.pde import (RadialGrid, discrete_F, domain_radius, evolve, imex_apply, imex_operator,
                     initial_from_ansatz, jacobian, locate_zero, stepper_energy, track_interface)


def banded_to_dense(ab):
    N = ab.shape[1]
    A = np.zeros((N, N))
    for j in range(N):
        for i in range(max(0, j - 2), min(N, j + 3)):
            A[i, j] = ab[2 + i - j, j]
    return A


@pytest.fixture(scope="module")
def n2_start(quartic, layer, correction):
    t0 = 1e3
    R = domain_radius(2, t0, 1.1e3)
    return initial_from_ansatz(layer, correction, CutOff(0.5), ModulationState(2), t0, R, 0.02)


@pytest.mark.parametrize("n", [2, 4, 5])
def test_jacobian_matches_finite_differences(quartic, n):
    g = RadialGrid(n, 3.0, 0.1)
    rng = np.random.default_rng(n)
    u = 0.5 * np.tanh(g.r - 1.5) + 0.05 * rng.standard_normal(g.N + 1)
    u[-1] = 1.0
    J = banded_to_dense(jacobian(quartic, g, u))
    eps = 1e-6
    Jfd = np.empty_like(J)
    for j in range(g.N):
        up, um = u.copy(), u.copy()
        up[j] += eps
        um[j] -= eps
        Jfd[:, j] = (discrete_F(quartic, g, up) - discrete_F(quartic, g, um)) / (2 * eps)
    assert np.max(np.abs(J - Jfd)) < 1e-9 * np.max(np.abs(J))


def test_imex_operator_matches_its_action(quartic):
    g = RadialGrid(4, 3.0, 0.1)
    A = banded_to_dense(imex_operator(quartic, g))
    for j in range(g.N):
        e = np.zeros(g.N + 1)
        e[j] = 1.0
        np.testing.assert_allclose(A[:, j], imex_apply(quartic, g, e), rtol=1e-13, atol=1e-6)


def test_euler_increment_matches_apply_F_exactly_for_n1(quartic):
    # n = 1: Lap is the plain second difference, exact on cubics; a linear u
    # makes mu = -W'(u) cubic, so both routes agree to roundoff
    dx, R = 0.25, 6.0
    a, b = -0.6, 0.2
    field = RadialField.from_function(
        lambda r, k: [a + b * r, b + 0 * r, 0 * r, 0 * r, 0 * r][k], R, dx)
    g = RadialGrid(1, R, dx)
    u = a + b * g.r
    dt = 1e-3
    step = (u[:-1] + dt * discrete_F(quartic, g, u) - u[:-1]) / dt
    ref = apply_F(quartic, field, 1)
    # rows 2..N-3 avoid both reflecting ends
    np.testing.assert_allclose(step[2:-2], ref[1:-3], rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4, 6])
def test_euler_increment_converges_to_apply_F(quartic, n):
    a, b, d = -0.3, 0.05, -0.002
    jets = [lambda r: a + b * r**2 + d * r**4, lambda r: 2 * b * r + 4 * d * r**3,
            lambda r: 2 * b + 12 * d * r**2, lambda r: 24 * d * r, lambda r: 24 * d + 0 * r]
    err = []
    for dx in (0.04, 0.02, 0.01):
        field = RadialField.from_function(lambda r, k: jets[k](r), 4.0, dx)
        g = RadialGrid(n, 4.0, dx)
        F = discrete_F(quartic, g, jets[0](g.r))
        sel = (field.r > 1.0) & (field.r < 3.0)
        err.append(np.max(np.abs(F[1:][sel[:-1]] - apply_F(quartic, field, n)[:-1][sel[:-1]])))
    assert err[-1] < 1e-3
    assert 3.5 < err[0] / err[1] < 4.5 and 3.5 < err[1] / err[2] < 4.5


@pytest.mark.parametrize("n", [1, 2, 4])
def test_F_is_weighted_gradient_of_stepper_energy(quartic, n):
    g = RadialGrid(n, 3.0, 0.1)
    rng = np.random.default_rng(7)
    u = 0.5 * np.tanh(g.r - 1.5) + 0.05 * rng.standard_normal(g.N + 1)
    u[-1] = 1.0
    F = discrete_F(quartic, g, u)
    eps = 1e-6
    grad = np.empty(g.N)
    for j in range(g.N):
        up, um = u.copy(), u.copy()
        up[j] += eps
        um[j] -= eps
        grad[j] = (stepper_energy(quartic, g, up) - stepper_energy(quartic, g, um)) / (2 * eps)
    area = stepper_energy(quartic, g, u) / (0.5 * np.dot(g.volume, g.mu(quartic, u) ** 2))
    np.testing.assert_allclose(-grad / (area * g.volume[:-1]), F, rtol=1e-4, atol=1e-6 * np.max(np.abs(F)))


def test_constant_one_is_exact_equilibrium(quartic):
    u0 = np.ones(501)
    run = evolve(quartic, u0, 2, 0.0, 1.0, 0.05, 0.1, track=False)
    assert np.max(np.abs(run.final - 1)) < 1e-12


def test_n3_layer_is_stationary(quartic, layer):
    dx = 0.02
    r = dx * np.arange(int(60 / dx) + 1)
    u0 = layer(r - 20)
    run = evolve(quartic, u0, 3, 0.0, 1.0, 0.02, dx)
    assert np.max(np.abs(run.final - u0)) < 1e-3
    assert abs(run.rho[-1] - 20) < 1e-3


def test_locate_zero_cases(layer, correction):
    dx = 0.02
    r = dx * np.arange(int(40 / dx) + 1)
    assert abs(locate_zero(r, layer(r - 7)) - 7) < dx
    with pytest.raises(TopologyError):
        locate_zero(r, np.ones_like(r))
    with pytest.raises(TopologyError):
        locate_zero(r, np.cos(r))
    t0 = -2e3
    mod = ModulationState(4)
    R = domain_radius(4, t0, t0 / 2)
    u = initial_from_ansatz(layer, correction, CutOff(0.5), mod, t0, R, dx)
    assert abs(locate_zero(dx * np.arange(u.size), u) - mod.rho(t0)) < dx


def test_track_interface_reads_stored_states(quartic, n2_start):
    run = evolve(quartic, n2_start, 2, 1e3, 1e3 + 2, 0.5, 0.02, snap_every=2)
    assert track_interface(run, 1e3 + 1) == pytest.approx(run.rho[2], abs=1e-12)
    assert track_interface(run, 1e3 + 2) == pytest.approx(run.rho[-1], abs=1e-12)
    with pytest.raises(KeyError):
        track_interface(run, 1e3 + 0.3)


def test_energy_nonincreasing_and_matches_operator_energy(quartic, n2_start):
    run = evolve(quartic, n2_start, 2, 1e3, 1e3 + 20, 0.25, 0.02)
    assert run.energy_increase() < 1e-8
    # stepper energy (second order) vs ansatz energy (fourth-order stencils)
    field = RadialField(0.02, run.final[1:])
    g = RadialGrid(2, run.R, 0.02)
    assert stepper_energy(quartic, g, run.final) == pytest.approx(
        diffuse_energy(quartic, field, 2), rel=1e-3)


def test_interface_follows_sphere_for_short_window(quartic, n2_start):
    run = evolve(quartic, n2_start, 2, 1e3, 1.1e3, 0.25, 0.02, record_every=40)
    dev = np.abs(run.rho - gamma_n(2, run.times))
    assert np.all(dev < 3 / np.log(run.times))
    assert np.all(np.diff(run.rho) > 0)


def test_n4_interface_moves_inward(quartic, layer, correction):
    t0, dx = -2e3, 0.05
    R = domain_radius(4, t0, t0 / 2)
    u0 = initial_from_ansatz(layer, correction, CutOff(0.5), ModulationState(4), t0, R, dx)
    run = evolve(quartic, u0, 4, t0, t0 + 50, 0.25, dx, record_every=20)
    assert np.all(np.diff(run.rho) < 0)


def test_grid_convergence_second_order(quartic, layer, correction):
    t0, t1 = 1e3, 1.01e3
    mod = ModulationState(2)
    rho = {}
    for dx in (0.04, 0.02, 0.01):
        u0 = initial_from_ansatz(layer, correction, CutOff(0.5), mod, t0, 48.0, dx)
        rho[dx] = evolve(quartic, u0, 2, t0, t1, 0.25, dx, record_every=1000).rho[-1]
    d1 = abs(rho[0.04] - rho[0.02])
    d2 = abs(rho[0.02] - rho[0.01])
    assert d2 < 4 * 0.02**2
    assert 3.0 < d1 / d2 < 5.0


def test_imex_agrees_with_linearized(quartic, n2_start):
    dx = 0.02
    a = evolve(quartic, n2_start, 2, 1e3, 1e3 + 0.01, "auto", dx, scheme="imex", record_every=10**6)
    b = evolve(quartic, n2_start, 2, 1e3, 1e3 + 0.01, 2.5e-4, dx, record_every=10**6)
    assert abs(a.rho[-1] - b.rho[-1]) < 1e-5
    assert np.max(np.abs(a.final - b.final)) < 1e-5


def test_imex_step_restriction(quartic, n2_start):
    with pytest.raises(DomainError):
        evolve(quartic, n2_start, 2, 1e3, 1e3 + 1, 0.01, 0.02, scheme="imex")


def test_range_violation_reports_step(quartic):
    u0 = np.ones(301)
    u0[100:110] = 1.2
    with pytest.raises(InstabilityError) as exc:
        evolve(quartic, u0, 2, 0.0, 1.0, 0.1, 0.1, track=False)
    assert exc.value.step == 1


def test_backward_window_rejected(quartic):
    with pytest.raises(ValueError):
        evolve(quartic, np.ones(301), 2, 1.0, 0.0, 0.1, 0.1, track=False)
