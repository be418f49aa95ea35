from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from wch.ansatz import ModulationState, RadialField, build_ansatz, error_field
from wch.errors import ContractionError, DomainError
from wch.geometry import gamma_n
from wch.reduction import (c_bound_ratio, c_direct, compute_c, first_iterate_norm,
                           layer_mass, layer_operator, lipschitz_ratio, odd_moment, p_tilde,
                           phi_norms, project_kernel, projected_error_split, solve_reduced_ode,
                           spectral_gap, time_grid)

HERMITE = [lambda x: 1 + 0 * x, lambda x: -2 * x, lambda x: 4 * x**2 - 2,
           lambda x: -8 * x**3 + 12 * x, lambda x: 16 * x**4 - 48 * x**2 + 12]


def gaussian_field(a, eps, R, dx):
    # cut where exp(-x^2) < 1e-27 so the field is exactly zero where Phi vanishes
    return RadialField.from_function(
        lambda r, k: np.where(np.abs(r - a) < 8,
                              eps * HERMITE[k](r - a) * np.exp(-(r - a) ** 2), 0.0), R, dx)


def test_layer_mass_and_odd_moment(layer):
    # int sech^4(y/sqrt2)/2 dy = 2 sqrt(2)/3 for the quartic layer
    assert layer_mass(layer) == pytest.approx(2 * np.sqrt(2) / 3, abs=1e-12)
    assert abs(odd_moment(layer)) < 1e-10


def test_project_kernel_translation_mode(layer):
    mod = ModulationState(4)
    t = -1e4
    rho = mod.rho(t)
    assert rho >= 20
    dx = 0.02

    r = dx * np.arange(1, int(round((rho + 35) / dx)) + 1)
    phi = RadialField(dx, np.where(np.abs(r - rho) < 15, layer(r - rho, 1), 0.0))
    val = project_kernel(phi, layer, mod, t, 4)
    assert val > 0
    assert val == pytest.approx(rho**3 * layer_mass(layer), rel=0.02)


def test_project_kernel_correction_orthogonal(layer, correction):
    mod = ModulationState(1, radius=20.0)
    phi = RadialField.from_function(lambda r, k: correction(r - 20.0, k), 50.0, 0.01)
    assert abs(project_kernel(phi, layer, mod, 0.0, 1)) < 1e-6
    assert project_kernel(RadialField.zeros(50.0, 0.01), layer, mod, 0.0, 1) == 0.0


def test_compute_c_trivial_cases(reduction_ctx):
    ctx = reduction_ctx
    mod = ModulationState(4)
    t = -1e3
    R, dx = mod.rho(t) + 35, 0.02
    zero = RadialField.zeros(R, dx)
    args = (ctx.potential, ctx.layer, ctx.correction, ctx.cutoff, mod, t, 4)
    assert compute_c(zero, None, *args) == 0.0
    ans = build_ansatz(ctx.layer, ctx.correction, ctx.cutoff, mod, t, R, dx)
    E = error_field(ctx.potential, ans)
    c = compute_c(zero, E, *args)
    from wch.reduction import _radial_simpson, kernel_denominator
    den = kernel_denominator(ans.w_hat, ctx.layer, ans.rho, 4)
    rhs = _radial_simpson(zero.r, E * ctx.layer(zero.r - ans.rho, 1), 4)
    assert abs(c * den - rhs) < 1e-10


@pytest.mark.parametrize("t", [-1e3, -1e4])
def test_compute_c_two_routes_and_bound(reduction_ctx, t):
    ctx = reduction_ctx
    mod = ModulationState(4)
    rho = mod.rho(t)
    R, dx = rho + 35, 0.02
    phi = gaussian_field(rho + 1.0, 1e-3, R, dx)
    ans = build_ansatz(ctx.layer, ctx.correction, ctx.cutoff, mod, t, R, dx)
    E = error_field(ctx.potential, ans)
    args = (ctx.potential, ctx.layer, ctx.correction, ctx.cutoff, mod, t, 4)
    c1 = compute_c(phi, E, *args)
    c2 = c_direct(phi, E, *args)
    # integration by parts against the direct projection of F'(z)[phi]
    assert c1 == pytest.approx(c2, rel=1e-10)
    alpha = ctx.potential.alpha
    from wch.ansatz import weight_phi, weighted_norm
    gn = weighted_norm(E, weight_phi(4, t, phi.r, 5, alpha))
    ratio = c_bound_ratio(c1, t, 5, gn, phi_norms(phi, 4, t, 5, alpha))
    assert np.isfinite(ratio) and ratio > 0


@pytest.mark.parametrize("t", [-1e3, -1e4, -1e5])
def test_projected_split(reduction_ctx, t):
    ctx = reduction_ctx
    mod = ModulationState(4)
    rep = projected_error_split(ctx.potential, ctx.layer, ctx.correction, ctx.cutoff, mod, t, 4)
    assert abs(rep.tilde[1]) < 1e-10 and abs(rep.tilde[2]) < 1e-10
    assert abs(rep.split_defect) < 1e-10 * max(1.0, abs(rep.total))
    scale = rep.rho**3 * np.log(-t) / (-t) ** 1.25
    assert abs(rep.leading_residual) / scale < 0.1
    # denominator of c(t) stays close to rho^(n-1) int omega'^2
    assert rep.denominator == pytest.approx(rep.rho**3 * rep.mass, rel=0.1)


def _dense_gap(potential, layer, dy):
    y, L = layer_operator(potential, layer, 20.0, dy)
    v = layer(y, 1)
    basis = sla.null_space(v[None, :])
    A = basis.T @ (L @ L) @ basis
    return sla.eigh(A, eigvals_only=True, subset_by_index=[0, 0])[0]


def test_spectral_gap_quartic(quartic, layer):
    cert = spectral_gap(quartic, layer)
    assert cert.positive
    assert cert.translation_residual < 1e-8
    assert cert.eigenvalue == pytest.approx(2.25, rel=0.05)
    coarse, fine = _dense_gap(quartic, layer, 0.1), _dense_gap(quartic, layer, 0.05)
    rich = fine + (fine - coarse) / 15
    assert coarse == pytest.approx(2.25, rel=0.05)
    assert fine == pytest.approx(2.25, rel=0.05)
    assert cert.eigenvalue == pytest.approx(fine, rel=1e-8)
    assert rich == pytest.approx(2.25, abs=1e-4)


def test_spectral_gap_cosine(cosine, cosine_layer):
    cert = spectral_gap(cosine, cosine_layer)
    assert cert.eigenvalue > 0.5
    assert cert.translation_residual < 1e-8


def test_spectral_gap_short_interval(quartic, layer):
    with pytest.raises(DomainError):
        spectral_gap(quartic, layer, Y=10.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1e-3, 1e-3), st.sampled_from([4, 5, 6]), st.floats(1e3, 1e6))
def test_p_tilde_is_second_order(h, n, at):
    t = -at
    g = gamma_n(n, t)
    k = 0.5 * (n - 3) * (n - 1) ** 2
    rem = p_tilde(n, t, h, 0.0)
    assert abs(rem + 6 * k * h * h / g**5) <= 20 * k * abs(h) ** 3 / g**6 + 1e-18


@pytest.fixture(scope="module")
def reduced(reduction_ctx):
    return solve_reduced_ode(reduction_ctx, 4, 5, 1e3)


def test_reduced_ode_converges(reduced, reduction_ctx):
    assert reduced.iterations <= 30
    assert reduced.history[-1] < 1e-8
    assert np.all(np.diff(reduced.history) < 0)
    assert np.isfinite(reduced.decay_constant())
    assert np.isfinite(reduced.rhs_bound_constant())
    rng = np.random.default_rng(3)
    ts = -np.exp(rng.uniform(np.log(1.1e3), np.log(9e5), 20))
    assert np.max(np.abs(reduced.ode_residual(reduction_ctx, ts))) < 1e-6
    # h(-T0) = 0 and h' agrees with the spline derivative of h
    assert reduced.h[0] == 0.0
    mid = reduced.t[5:-5]
    assert np.allclose(reduced.dh_at(mid), reduced.hprime[5:-5], atol=1e-8)


def test_first_iterate_norm_decreases(reduction_ctx, reduced):
    norms = [reduced.first_norm] + [first_iterate_norm(reduction_ctx, 4, T, decades=2, per_decade=30)
                                    for T in (1e4, 1e5)]
    assert norms[0] > norms[1] > norms[2]


def test_lipschitz_ratio_finite(reduction_ctx):
    rng = np.random.default_rng(11)
    t = time_grid(4, 1e3, decades=2, per_decade=8)
    ratios = []
    for _ in range(5):
        a, b = rng.uniform(-0.3, 0.3, 2)

        def make(c):
            return (lambda s: c / np.log(np.abs(s)),
                    lambda s: -c / (s * np.log(np.abs(s)) ** 2))

        ratios.append(lipschitz_ratio(reduction_ctx, 4, 5, t, (make(a), make(b))))
    assert np.all(np.isfinite(ratios))


def test_reduced_ode_errors(reduction_ctx):
    with pytest.raises(ValueError):
        solve_reduced_ode(reduction_ctx, 4, 4.0, 1e3)
    with pytest.raises(DomainError):
        solve_reduced_ode(reduction_ctx, 3, 3.5, 1e3)
    with pytest.raises(ContractionError):
        solve_reduced_ode(reduction_ctx, 4, 5, 3.0, decades=1, per_decade=10)


def test_reduced_ode_n2_forward(reduction_ctx):
    sol = solve_reduced_ode(reduction_ctx, 2, 2.5, 1e3, decades=1, per_decade=20)
    assert np.all(sol.t > 0)
    assert sol.history[-1] < 1e-8
