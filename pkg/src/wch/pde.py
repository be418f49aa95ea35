"""Direct time integration of the radial equation u_t = F(u) and interface tracking.

Nodes r_i = i dx, i = 0..N with u_N = 1.  Node i owns the shell between
r_{i-1/2} and r_{i+1/2} (clipped to [0, R]) of volume V_i.  The Laplacian
is the conservative flux difference

    (Lap u)_i = [r_{i+1/2}^(n-1) (u_{i+1} - u_i) - r_{i-1/2}^(n-1) (u_i - u_{i-1})] / (dx V_i)

with zero flux through r = 0 (even field) and r = R (u_r(R) = 0).  With
mu = Lap u - W'(u) the stepper uses

    F(u) = -Lap mu + W''(u) mu,    E(u) = (1/2) |S^(n-1)| sum_i V_i mu_i^2.

Lap is self-adjoint for the V-weighted inner product, so F is exactly
-V^(-1) grad E: the semi-discrete flow is a gradient flow of E and the
energy is a true Lyapunov function of the discrete system.  Away from the
origin the operator is second-order accurate.

Two steppers:

* ``"linearized"`` (default): linearly implicit Euler,
  (I - dt J) du = dt F(u) with J the exact banded Jacobian of F.
  Stable at time steps set by accuracy, not by dx^4.
* ``"imex"``: the constant-coefficient part -Lap^2 + 2 W''(1) Lap
  implicit, the rest explicit.  Needs dt <= 0.1 dx^2.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import solve_banded

from .errors import DomainError, InstabilityError, NumericalError, TopologyError
from .geometry import check_dimension, gamma_n, sphere_area


class RadialGrid:
    """Nodes, control volumes and the conservative Laplacian of the stepper."""

    def __init__(self, n, R, dx):
        self.n = n = check_dimension(n)
        self.dx = h = float(dx)
        self.N = N = int(round(R / dx))
        self.R = N * h
        self.r = h * np.arange(N + 1)
        faces = h * (np.arange(N) + 0.5)
        edges = np.concatenate([[0.0], faces, [self.R]])
        self.volume = (edges[1:] ** n - edges[:-1] ** n) / n
        flux = faces ** (n - 1) / h
        diag = np.zeros(N + 1)
        diag[:-1] -= flux
        diag[1:] -= flux
        K = sparse.diags([flux, diag, flux], [-1, 0, 1], format="csr")
        self.lap = (sparse.diags(1.0 / self.volume) @ K).tocsr()

    def mu(self, pot, u):
        return self.lap @ u - pot.eval(u, 1)


def discrete_F(pot, grid: RadialGrid, u):
    """F(u) at the unknowns 0..N-1 as the stepper sees it."""
    mu = grid.mu(pot, u)
    return (-(grid.lap @ mu) + pot.eval(u, 2) * mu)[:grid.N]


def _to_banded(A, N):
    A = sparse.coo_matrix(A)
    keep = (A.row < N) & (A.col < N)
    i, j, v = A.row[keep], A.col[keep], A.data[keep]
    ab = np.zeros((5, N))
    np.add.at(ab, (2 + i - j, j), v)
    return ab


def jacobian(pot, grid, u):
    """Banded Jacobian of :func:`discrete_F` with respect to u_0..u_{N-1}."""
    mu = grid.mu(pot, u)
    w2 = sparse.diags(pot.eval(u, 2))
    dmu = grid.lap - w2
    J = -(grid.lap @ dmu) + w2 @ dmu + sparse.diags(pot.eval(u, 3) * mu)
    return _to_banded(J, grid.N)


def imex_matrix(pot, grid):
    """Sparse -Lap^2 + 2 W''(1) Lap on all nodes."""
    w21 = float(pot.eval(1.0, 2))
    return (-(grid.lap @ grid.lap) + 2 * w21 * grid.lap).tocsr()


def imex_apply(pot, grid, u):
    """The implicit part of the imex scheme applied to the node vector u."""
    return (imex_matrix(pot, grid) @ u)[:grid.N]


def imex_operator(pot, grid):
    """Banded storage of :func:`imex_apply` restricted to the unknowns."""
    return _to_banded(imex_matrix(pot, grid), grid.N)


def stepper_energy(pot, grid, u):
    """The discrete energy (1/2)|S^(n-1)| sum V_i mu_i^2 the stepper dissipates."""
    mu = grid.mu(pot, u)
    return 0.5 * sphere_area(grid.n) * float(np.dot(grid.volume, mu * mu))


@dataclass
class EvolutionRun:
    n: int
    dx: float
    R: float
    t0: float
    dt: float
    scheme: str
    times: np.ndarray
    rho: np.ndarray
    energy: np.ndarray
    snapshots: dict = field(default_factory=dict)
    steps: int = 0
    wall: float = 0.0
    final: np.ndarray = None

    @property
    def r(self):
        return self.dx * np.arange(int(round(self.R / self.dx)) + 1)

    def energy_increase(self):
        """Largest single-step increase of the energy."""
        return float(np.max(np.diff(self.energy))) if self.energy.size > 1 else 0.0


def locate_zero(r, u, delta0=0.5):
    """The unique zero of u on (delta0, R - 5) by linear interpolation.

    Raises
    ------
    TopologyError
        If u has no sign change or more than one there.
    """
    r = np.asarray(r)
    u = np.asarray(u)
    sel = (r > delta0) & (r < r[-1] - 5.0)
    rs, us = r[sel], u[sel]
    s = np.sign(us)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    zeros = np.nonzero(us == 0)[0]
    if idx.size + zeros.size != 1:
        raise TopologyError(f"expected one interface, found {idx.size + zeros.size}")
    if zeros.size:
        return float(rs[zeros[0]])
    i = idx[0]
    return float(rs[i] - us[i] * (rs[i + 1] - rs[i]) / (us[i + 1] - us[i]))


def track_interface(run: EvolutionRun, t, delta0=0.5):
    """Interface of a stored state: a snapshot time or the final time."""
    t_end = run.t0 + run.steps * run.dt
    if np.isclose(t, t_end, rtol=0, atol=1e-9 * max(1.0, abs(t))) and run.final is not None:
        u = run.final
    else:
        key = min(run.snapshots, key=lambda s: abs(s - t), default=None)
        if key is None or not np.isclose(key, t, rtol=0, atol=1e-9 * max(1.0, abs(t))):
            raise KeyError(f"no stored state at t={t}")
        u = run.snapshots[key]
    return locate_zero(run.r, u, delta0)


def initial_from_ansatz(layer, corr, cutoff, mod, t0, R, dx):
    """z(t0, .) on the stepper grid (origin value -1, u(R) = 1)."""
    from .ansatz import build_z
    z, _ = build_z(layer, corr, cutoff, mod, t0, R, dx)
    u = np.concatenate([[-1.0], z.values])
    u[-1] = 1.0
    return u


def _solve(ab, b, step):
    try:
        x = solve_banded((2, 2), ab, b, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"banded system singular at step {step}") from exc
    return x


def domain_radius(n, t0, t1, margin=40.0):
    """Smallest admissible R: the largest sphere radius on [t0, t1] plus ``margin``."""
    return float(np.ceil(max(gamma_n(n, t0), gamma_n(n, t1)) + margin))


def auto_dt(scheme, dx, t0, t1):
    """Default step: accuracy-limited for the linearized scheme, 0.1 dx^2 for imex."""
    if scheme == "imex":
        return 0.1 * dx * dx
    return min(0.25, (t1 - t0) / 100)


def evolve(pot, u0, n, t0, t1, dt, dx, scheme="linearized", snap_every=0,
           record_every=1, delta0=0.5, range_tol=0.05, track=True,
           progress=None) -> EvolutionRun:
    """Integrate u_t = F(u) from t0 to t1 on the radial grid.

    Parameters
    ----------
    u0 : ndarray
        Values at r_i = i dx, i = 0..N; u0[-1] is reset to 1.
    snap_every : int
        Store u every this many steps (0: none).
    record_every : int
        Interface and energy are recorded every this many steps.
    track : bool
        Track the interface (False for fields without one; rho is NaN).

    Raises
    ------
    InstabilityError
        If |u| exceeds 1 + range_tol.
    DomainError
        For the imex scheme with dt > 0.1 dx^2.
    """
    n = check_dimension(n)
    u = np.array(u0, dtype=float)
    R = dx * (u.size - 1)
    grid = RadialGrid(n, R, dx)
    u[-1] = 1.0
    if dt is None or dt == "auto":
        dt = auto_dt(scheme, dx, t0, t1)
    if not t1 > t0:
        raise ValueError("runs integrate forward: need t1 > t0")
    locate = (lambda v: locate_zero(grid.r, v, delta0)) if track else (lambda v: np.nan)
    nsteps = int(np.ceil((t1 - t0) / dt - 1e-9))
    dt = (t1 - t0) / nsteps
    if scheme == "imex":
        if dt > 0.1 * dx * dx * (1 + 1e-12):
            raise DomainError("imex stepping needs dt <= 0.1 dx^2")
        A = imex_matrix(pot, grid)
        M = -dt * _to_banded(A, grid.N)
        M[2] += 1.0
        A = A[:grid.N, :grid.N].tocsr()
    elif scheme != "linearized":
        raise ValueError(f"unknown scheme {scheme!r}")
    start = time.perf_counter()
    times = [t0]
    rhos = [locate(u)]
    energies = [stepper_energy(pot, grid, u)]
    snaps = {}
    if snap_every:
        snaps[t0] = u.copy()
    for k in range(1, nsteps + 1):
        F = discrete_F(pot, grid, u)
        if scheme == "linearized":
            M = -dt * jacobian(pot, grid, u)
            M[2] += 1.0
            u[:-1] += _solve(M, dt * F, k)
        else:
            # the fixed u_N enters A u identically at both time levels
            rhs = u[:-1] + dt * (F - A @ u[:-1])
            u[:-1] = _solve(M, rhs, k)
        if not np.all(np.abs(u) <= 1 + range_tol):
            raise InstabilityError(f"|u| left [-1-{range_tol}, 1+{range_tol}] at step {k}", k)
        t = t0 + k * dt
        if k % record_every == 0 or k == nsteps:
            times.append(t)
            rhos.append(locate(u))
            energies.append(stepper_energy(pot, grid, u))
        if snap_every and (k % snap_every == 0 or k == nsteps):
            snaps[t] = u.copy()
        if progress is not None:
            progress(k, nsteps)
    return EvolutionRun(n, dx, R, t0, dt, scheme, np.array(times), np.array(rhos),
                        np.array(energies), snaps, nsteps, time.perf_counter() - start, u)
