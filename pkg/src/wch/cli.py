"""Command-line front end: configuration, CSV/manifest output and the acceptance runner.

Usage::

    wch SUBCOMMAND [--key value ...] [--config FILE]

Options may appear before or after the subcommand.  A config file holds
``key = value`` lines (``#`` starts a comment); flags override it.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DegenerateDimensionError

SUBCOMMANDS = ("profile", "correction", "willmore", "kernel", "error", "reduce", "evolve", "verify")
CRITERIA_NAMES = tuple(f"A{i}" for i in range(1, 12))


class UsageError(Exception):
    """Bad configuration; carries the offending key."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def _auto_float(v):
    return v if v == "auto" else float(v)


def _suite(v):
    names = CRITERIA_NAMES if v == "all" else tuple(s.strip() for s in v.split(","))
    bad = [s for s in names if s not in CRITERIA_NAMES]
    if bad:
        raise ValueError(f"unknown criteria {bad}")
    return v


def _optional_float(v):
    return None if v in ("auto", "none", "") else float(v)


# key -> (parser, default, help).  Booleans are flags.
COMMON = {
    "potential": (str, "quartic", "double-well potential: quartic (1-s^2)^2/4 or cosine"),
    "out": (str, None, "output file (directory for evolve); default under $WCH_OUT"),
    "seed": (int, 0, "seed for randomized sample times"),
}
PARAMS = {
    "profile": {
        "Y": (float, 25.0, "half-width of the layer table in y"),
        "step": (float, 1e-3, "node spacing of the layer table"),
    },
    "correction": {
        "stride": (int, 10, "write every stride-th node of the correction table"),
    },
    "willmore": {
        "n": (int, 4, "space dimension"),
        "t0": (float, -100.0, "start time"),
        "t1": (float, -10.0, "end time"),
        "dt": (float, 1e-3, "RK4 step"),
        "radius": (_optional_float, None, "initial sphere radius (default: the self-similar radius at t0)"),
    },
    "kernel": {
        "n": (int, 1, "space dimension of the biharmonic heat kernel"),
        "S": (float, 20.0, "largest argument s of the radial profile table"),
        "step": (float, 1e-2, "spacing of the profile table"),
        "check-recurrence": (bool, False, "check f_n'(s) + s f_(n+2)(s) = 0 at s = 0.5, 2, 5"),
        "check-mass": (bool, False, "check that the kernel has unit mass at t = 0.5, 1, 2"),
    },
    "error": {
        "n": (int, 4, "space dimension"),
        "t": (float, -1e4, "time of the ansatz"),
        "R": (_optional_float, None, "grid end (auto: interface radius + 32)"),
        "dx": (float, 0.01, "grid spacing"),
        "p": (_optional_float, None, "decay exponent of the error weight, in (n, n+1] (auto: n+1)"),
        "delta0": (float, 0.5, "inner cut-off radius"),
    },
    "reduce": {
        "n": (int, 4, "space dimension (2 or >= 4)"),
        "p": (float, 5.0, "decay exponent, in (n, n+1]"),
        "That0": (float, 1e3, "|t| at which the modulation h vanishes"),
        "tol": (float, 1e-8, "Picard tolerance in the Lambda norm"),
        "decades": (float, 3.0, "time grid covers |t| in [T0, 10^decades T0]"),
        "per_decade": (int, 60, "time nodes per decade"),
        "spectral-gap": (bool, False, "also compute the projected spectral gap of the layer"),
    },
    "evolve": {
        "n": (int, 2, "space dimension"),
        "t0": (_optional_float, None, "start time (auto: 1e3 for n = 2, -2e3 for n >= 4, 0 if stationary)"),
        "t1": (_optional_float, None, "end time > t0 (auto: 2e3, -1e3, 1)"),
        "dx": (float, 0.02, "grid spacing"),
        "dt": (_auto_float, "auto", "time step or auto"),
        "snap": (int, 50, "number of evenly spaced snapshot files (0: none)"),
        "scheme": (str, "linearized", "linearized (implicit Jacobian) or imex (needs dt <= 0.1 dx^2)"),
        "R": (_optional_float, None, "grid end (auto: largest sphere radius + 40)"),
        "p": (_optional_float, None, "decay exponent for the reduced-ODE prediction (auto: n+1/2)"),
        "stationary": (bool, False, "n = 1, 3: start from a layer at fixed radius"),
        "radius": (float, 20.0, "stationary layer radius"),
    },
    "verify": {
        "suite": (_suite, "all", "all or a comma list of A1..A11"),
    },
}
DEFAULT_OUT = {"profile": "profile.csv", "correction": "correction.csv", "willmore": "gamma.csv",
               "kernel": "kernel.csv", "error": "error.csv", "reduce": "h.csv", "evolve": "run",
               "verify": "verify.csv"}


@dataclass
class RunConfig:
    subcommand: str
    params: dict
    out: Path
    seed: int = 0
    sources: dict = field(default_factory=dict)


def _specs(sub):
    return {**COMMON, **PARAMS[sub]}


def _build_parser(sub):
    p = argparse.ArgumentParser(prog=f"wch {sub}", argument_default=argparse.SUPPRESS,
                                description=f"wch {sub}")
    p.add_argument("--config", help="file of key = value lines; flags override it")
    for key, (typ, default, text) in _specs(sub).items():
        if typ is bool:
            p.add_argument(f"--{key}", action="store_true", dest=key, help=text)
        else:
            p.add_argument(f"--{key}", dest=key, metavar="VALUE", type=str,
                           help=f"{text} (default: {default})")
    return p


def _coerce(key, typ, raw):
    try:
        if typ is bool:
            if isinstance(raw, bool):
                return raw
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(key, f"cannot parse {raw!r} ({exc})") from None


def read_config_file(path):
    """Parse ``key = value`` lines into a dict of strings."""
    out = {}
    for num, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {num}", f"expected key = value, got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def _split_subcommand(argv):
    flags = {f"--{k}" for spec in PARAMS.values() for k, v in spec.items() if v[0] is bool}
    prev_takes_value = False
    for i, tok in enumerate(argv):
        if tok in SUBCOMMANDS and not prev_takes_value:
            return tok, argv[:i] + argv[i + 1:]
        prev_takes_value = tok.startswith("--") and "=" not in tok and tok not in flags \
            and tok not in ("--help", "-h")
    return None, list(argv)


def _attach_negative_values(argv):
    """Rewrite ``--key -1e3`` as ``--key=-1e3``; argparse would read -1e3 as an option."""
    out = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and tok.startswith("-"):
            try:
                float(tok)
            except ValueError:
                pass
            else:
                out[-1] = f"{out[-1]}={tok}"
                continue
        out.append(tok)
    return out


def parse_config(argv) -> RunConfig:
    """Merge defaults, the optional config file and flags into a RunConfig.

    Raises
    ------
    UsageError
        Unknown key, unparsable value, or a violated constraint.
    """
    sub, rest = _split_subcommand(list(argv))
    if sub is None:
        raise UsageError("subcommand", f"expected one of {', '.join(SUBCOMMANDS)}")
    parser = _build_parser(sub)
    try:
        ns, unknown = parser.parse_known_args(_attach_negative_values(rest))
    except SystemExit as exc:
        if exc.code == 0:
            raise
        raise UsageError("arguments", "could not parse the command line") from None
    if unknown:
        raise UsageError(unknown[0].lstrip("-").split("=")[0], "unknown key")
    specs = _specs(sub)
    values = {k: v[1] for k, v in specs.items()}
    sources = {k: "default" for k in specs}
    flags = vars(ns)
    if "config" in flags:
        for k, raw in read_config_file(flags.pop("config")).items():
            if k not in specs:
                raise UsageError(k, "unknown key in config file")
            values[k] = _coerce(k, specs[k][0], raw)
            sources[k] = "file"
    for k, raw in flags.items():
        values[k] = _coerce(k, specs[k][0], raw)
        sources[k] = "flag"
    _validate(sub, values)
    seed = values.pop("seed")
    out = values.pop("out")
    root = Path(os.environ.get("WCH_OUT", "."))
    out = Path(out) if out is not None else root / DEFAULT_OUT[sub]
    return RunConfig(sub, values, out, seed, sources)


def _validate(sub, v):
    from .geometry import check_dimension
    if v["potential"] not in ("quartic", "cosine"):
        raise UsageError("potential", f"unknown potential {v['potential']!r}")
    if "n" in v:
        try:
            check_dimension(v["n"])
        except Exception as exc:
            raise UsageError("n", str(exc)) from None
    n = v.get("n")
    if sub == "reduce" and n in (1, 3):
        raise UsageError("n", str(DegenerateDimensionError(f"n={n}: spheres do not move, no reduced equation")))
    if sub == "error" and n in (1, 3):
        raise UsageError("n", f"n={n} is a degenerate dimension without a moving sphere")
    if sub in ("evolve", "willmore") and n in (1, 3):
        if sub == "evolve" and not v["stationary"]:
            raise UsageError("n", f"n={n} is a degenerate dimension (static spheres); pass --stationary")
        if sub == "willmore" and v["radius"] is None:
            raise UsageError("n", f"n={n} is a degenerate dimension; pass --radius")
    if sub in ("reduce", "error", "evolve") and v.get("p") is not None:
        if not (n < v["p"] <= n + 1):
            raise UsageError("p", f"p must lie in ({n}, {n + 1}], got {v['p']}")
    if sub == "kernel" and v["S"] < 10:
        raise UsageError("S", "the decay envelope fit needs S >= 10")
    if sub == "evolve":
        auto = (0.0, 1.0) if v["stationary"] else (1e3, 2e3) if n == 2 else (-2e3, -1e3)
        for k, d in zip(("t0", "t1"), auto):
            if v[k] is None:
                v[k] = d
        if not v["stationary"]:
            if n == 2 and not v["t0"] > 0:
                raise UsageError("t0", "n=2 interfaces live at t > 0")
            if n >= 4 and not v["t1"] < 0:
                raise UsageError("t1", f"n={n} interfaces live at t < 0")
        if not v["t1"] > v["t0"]:
            raise UsageError("t1", "runs integrate forward: t1 must exceed t0")
        if v["scheme"] not in ("linearized", "imex"):
            raise UsageError("scheme", f"unknown scheme {v['scheme']!r}")
        if v["dt"] != "auto" and v["scheme"] == "imex" and v["dt"] > 0.1 * v["dx"] ** 2:
            raise UsageError("dt", "imex stepping needs dt <= 0.1 dx^2")
    for k in ("dx", "dt", "step", "S", "Y", "tol", "That0"):
        if k in v and v[k] not in (None, "auto") and not v[k] > 0:
            raise UsageError(k, "must be positive")


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------
def write_csv(path, columns: dict):
    """Comma-separated, header row, 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(names), comments="")
    return path


def git_blob_hash(path):
    """SHA-1 of the git blob object for the file contents."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, Path):
        return str(x)
    return x


def write_manifest(config: RunConfig, results: dict | None, path=None):
    """JSON manifest: parameters, output hashes, invariant outcomes, status, wall time.

    ``results`` may hold ``outputs`` (paths), ``invariants`` (list of
    dicts with ``name`` and ``passed``), ``status``, ``reason``,
    ``wall_time`` and free-form ``summary``.
    """
    results = results or {}
    if path is None:
        path = config.out / "manifest.json" if config.subcommand == "evolve" \
            else config.out.with_name(config.out.stem + ".manifest.json")
    path = Path(path)
    invariants = results.get("invariants", [])
    status = results.get("status")
    if status is None:
        status = "passed" if all(i["passed"] for i in invariants) else "failed"
    doc = {
        "subcommand": config.subcommand,
        "parameters": {**config.params, "seed": config.seed, "out": str(config.out)},
        "sources": config.sources,
        "outputs": {Path(p).name: git_blob_hash(p) for p in results.get("outputs", [])},
        "invariants": invariants,
        "status": status,
    }
    for key in ("reason", "wall_time", "summary"):
        if key in results:
            doc[key] = results[key]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=False) + "\n")
    return path


def _inv(name, passed, **values):
    return {"name": name, "passed": bool(passed), **values}


# ----------------------------------------------------------------------
# shared objects
# ----------------------------------------------------------------------
@lru_cache(maxsize=None)
def _potential(name):
    from .potential import Potential
    return Potential.from_name(name)


@lru_cache(maxsize=None)
def _layer(name):
    from .layer import build_layer
    return build_layer(_potential(name))


@lru_cache(maxsize=None)
def _correction(name):
    from .correction import build_correction
    return build_correction(_layer(name))


@lru_cache(maxsize=None)
def _context(name, delta0=0.5):
    from .ansatz import CutOff
    from .reduction import ReductionContext
    return ReductionContext(_potential(name), _layer(name), _correction(name), CutOff(delta0))


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------
def cmd_profile(cfg):
    from .layer import build_layer
    v = cfg.params
    L = build_layer(_potential(v["potential"]), Y=v["Y"], step=v["step"])
    y = L.y
    path = write_csv(cfg.out, {"y": y, **{("omega" if k == 0 else f"omega{k}"): L(y, k)
                                          for k in range(5)}})
    mono = bool(np.all(np.diff(L(y)) > 0))
    return {"outputs": [path], "invariants": [_inv("monotone", mono)],
            "summary": {"alpha": L.alpha, "beta": L.beta}}


def cmd_correction(cfg):
    from .correction import check_identities, orthogonality
    v = cfg.params
    L, C = _layer(v["potential"]), _correction(v["potential"])
    ident = check_identities(C, L)
    s = slice(None, None, v["stride"])
    y = C.y[s]
    path = write_csv(cfg.out, {"y": y, "wt": C(y), "wt1": C(y, 1), "wt2": C(y, 2), "wt3": C(y, 3),
                               "resid_L": ident["resid_L"][s], "resid_L2": ident["resid_L2"][s]})
    orth = orthogonality(C)
    return {"outputs": [path], "invariants": [
        _inv("L* wt = y omega'/2", ident["fd_L"] < 1e-6, fd=ident["fd_L"], analytic=ident["analytic_L"]),
        _inv("(L*)^2 wt = -omega''", ident["fd_L2"] < 1e-5, fd=ident["fd_L2"],
             analytic=ident["analytic_L2"]),
        _inv("int omega' wt = 0", abs(orth) < 1e-8, value=orth)]}


def cmd_willmore(cfg):
    from .geometry import gamma_n, integrate_willmore
    v = cfg.params
    n = v["n"]
    g0 = v["radius"] if v["radius"] is not None else float(gamma_n(n, v["t0"]))
    t, g = integrate_willmore(n, g0, v["t0"], v["t1"], v["dt"])
    cols = {"t": t, "gamma": g}
    inv = []
    if n not in (1, 3) and v["radius"] is None:
        exact = gamma_n(n, t)
        cols["gamma_exact"] = exact
        err = float(np.max(np.abs(g - exact)))
        inv.append(_inv("matches self-similar radius", err < 1e-8, max_error=err))
    path = write_csv(cfg.out, cols)
    return {"outputs": [path], "invariants": inv}


def cmd_kernel(cfg):
    from .kernels import build_kernel_table, f_n
    v = cfg.params
    T = build_kernel_table(v["n"], S=v["S"], step=v["step"])
    path = write_csv(cfg.out, {"s": T.s, "f": T.f, "envelope": T.envelope(T.s)})
    inv = [_inv("envelope bounds table", bool(np.all(np.abs(T.f) <= T.envelope(T.s) * (1 + 1e-12))),
                mu=T.mu, K=T.K)]
    if v["check-recurrence"]:
        h = 1e-3
        res = [abs((f_n(T.n, s + h) - f_n(T.n, s - h)) / (2 * h) + s * f_n(T.n + 2, s))
               for s in (0.5, 2.0, 5.0)]
        inv.append(_inv("recurrence", max(res) < 1e-5, residual=max(res)))
    if v["check-mass"]:
        dev = [abs(T.mass(t) - 1) for t in (0.5, 1.0, 2.0)]
        inv.append(_inv("unit mass", max(dev) < 1e-6, deviation=max(dev)))
    return {"outputs": [path], "invariants": inv}


def cmd_error(cfg):
    from .ansatz import CutOff, ModulationState, build_ansatz, error_field, weight_phi
    v = cfg.params
    n, t = v["n"], v["t"]
    pot = _potential(v["potential"])
    mod = ModulationState(n)
    R = v["R"] if v["R"] is not None else float(np.ceil(mod.rho(t) + 32))
    ans = build_ansatz(_layer(v["potential"]), _correction(v["potential"]), CutOff(v["delta0"]),
                       mod, t, R, v["dx"])
    E = error_field(pot, ans)
    Phi = weight_phi(n, t, ans.z.r, v["p"], pot.alpha, v["delta0"])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(Phi > 0, np.abs(E) * np.log(abs(t)) / Phi, np.where(E == 0, 0.0, np.inf))
    path = write_csv(cfg.out, {"r": ans.z.r, "z": ans.z.values, "E": E, "Phi": Phi, "ratio": ratio})
    sup = float(np.max(ratio))
    return {"outputs": [path], "invariants": [_inv("weighted error finite", np.isfinite(sup), sup=sup)]}


def cmd_reduce(cfg):
    from .reduction import solve_reduced_ode, spectral_gap
    v = cfg.params
    ctx = _context(v["potential"])
    sol = solve_reduced_ode(ctx, v["n"], v["p"], v["That0"], tol=v["tol"], decades=v["decades"],
                            per_decade=v["per_decade"])
    path = write_csv(cfg.out, {"t": sol.t, "h": sol.h, "hprime": sol.hprime, "P": sol.P,
                               "Ptilde": sol.Ptilde})
    rng = np.random.default_rng(cfg.seed)
    at = np.abs(sol.t)
    ts = np.sign(sol.t[0]) * np.exp(rng.uniform(np.log(at.min() * 1.1), np.log(at.max() * 0.9), 20))
    resid = float(np.max(np.abs(sol.ode_residual(ctx, ts))))
    inv = [_inv("converged", sol.history[-1] < v["tol"], iterations=sol.iterations),
           _inv("ODE residual", resid < 1e-6, residual=resid),
           _inv("decay constant finite", np.isfinite(sol.decay_constant()),
                value=sol.decay_constant())]
    if v["spectral-gap"]:
        cert = spectral_gap(ctx.potential, ctx.layer)
        inv.append(_inv("spectral gap positive", cert.positive, eigenvalue=cert.eigenvalue,
                        translation_residual=cert.translation_residual))
    return {"outputs": [path], "invariants": inv,
            "summary": {"first_norm": sol.first_norm, "history": sol.history}}


def cmd_evolve(cfg):
    from .ansatz import CutOff, ModulationState
    from .errors import ContractionError
    from .geometry import gamma_n
    from .pde import domain_radius, evolve, initial_from_ansatz, locate_zero
    from .reduction import solve_reduced_ode
    v = cfg.params
    n, t0, t1, dx = v["n"], v["t0"], v["t1"], v["dx"]
    name = v["potential"]
    pot = _potential(name)
    stationary = n in (1, 3) or v["stationary"]
    if stationary:
        R = v["R"] if v["R"] is not None else float(np.ceil(v["radius"] + 40))
        r = dx * np.arange(int(round(R / dx)) + 1)
        u0 = _layer(name)(r - v["radius"])
        base = lambda t: v["radius"] + 0 * np.asarray(t)
    else:
        R = v["R"] if v["R"] is not None else domain_radius(n, t0, t1)
        if R < domain_radius(n, t0, t1):
            raise UsageError("R", f"R must be at least {domain_radius(n, t0, t1)}")
        u0 = initial_from_ansatz(_layer(name), _correction(name), CutOff(0.5), ModulationState(n),
                                 t0, R, dx)
        base = lambda t: gamma_n(n, t)
    steps_total = None
    snap_every = 0
    if v["snap"] > 0:
        from .pde import auto_dt
        dt = auto_dt(v["scheme"], dx, t0, t1) if v["dt"] == "auto" else v["dt"]
        steps_total = int(np.ceil((t1 - t0) / dt - 1e-9))
        snap_every = max(1, steps_total // v["snap"])
    run = evolve(pot, u0, n, t0, t1, v["dt"], dx, scheme=v["scheme"], snap_every=snap_every)
    h_pred = np.full(run.times.size, np.nan)
    inv = []
    if not stationary:
        p = v["p"] if v["p"] is not None else n + 0.5
        try:
            sol = solve_reduced_ode(_context(name), n, p, abs(t0), t_end=t1)
            h_pred = sol.h_at(run.times)
        except ContractionError as exc:
            inv.append(_inv("reduced-ODE prediction", False, reason=str(exc)))
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    outputs = [write_csv(out / "track.csv", {"t": run.times, "rho_num": run.rho,
                                             "gamma_n": base(run.times), "h_pred": h_pred,
                                             "energy": run.energy})]
    stored = sorted(run.snapshots.items())[1:]  # drop the initial state
    for k, (ts, u) in enumerate(stored):
        outputs.append(write_csv(out / f"snapshot_{k:04d}.csv",
                                 {"r": run.r, "u": u, "t": np.full(u.size, ts)}))
    inc = run.energy_increase()
    inv.append(_inv("range |u| <= 1.05", True, max_abs=float(np.max(np.abs(run.final)))))
    inv.append(_inv("single interface", bool(np.all(np.isfinite(run.rho)))))
    inv.append(_inv("energy non-increasing", inc <= 1e-8, max_increase=inc))
    if not stationary and n >= 4:
        inv.append(_inv("moves inward", bool(np.all(np.diff(run.rho) < 0))))
    if not stationary:
        dev = np.abs(run.rho - gamma_n(n, run.times))
        inv.append(_inv("tracks sphere within 3/log|t|", bool(np.all(dev < 3 / np.log(np.abs(run.times)))),
                        max_deviation=float(dev.max())))
    return {"outputs": outputs, "invariants": inv,
            "summary": {"steps": run.steps, "dt": run.dt, "R": run.R, "scheme": run.scheme,
                        "rho_final": float(run.rho[-1]), "stepper_wall_time": run.wall}}


def cmd_verify(cfg):
    suite = cfg.params["suite"]
    names = CRITERIA_NAMES if suite == "all" else tuple(s.strip() for s in suite.split(","))
    results = [run_criterion(name, cfg.params["potential"]) for name in names]
    for res in results:
        print(res.line(), flush=True)
    path = write_csv(cfg.out, {"criterion": [int(r.name[1:]) for r in results],
                               "passed": [int(r.passed) for r in results],
                               "wall_time": [r.wall for r in results]})
    return {"outputs": [path],
            "invariants": [_inv(r.name, r.passed, wall_time=r.wall, **r.detail) for r in results]}


COMMANDS = {"profile": cmd_profile, "correction": cmd_correction, "willmore": cmd_willmore,
            "kernel": cmd_kernel, "error": cmd_error, "reduce": cmd_reduce, "evolve": cmd_evolve,
            "verify": cmd_verify}


# ----------------------------------------------------------------------
# acceptance criteria
# ----------------------------------------------------------------------
@dataclass
class CriterionResult:
    name: str
    passed: bool
    detail: dict
    wall: float

    def line(self):
        keys = ", ".join(f"{k}={_fmt(v)}" for k, v in self.detail.items())
        return f"{self.name} {'PASS' if self.passed else 'FAIL'} ({self.wall:.1f} s) {keys}"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _a1(name):
    from .layer import beta
    pot = _potential("quartic")
    L = _layer("quartic")
    y = np.linspace(-10, 10, 20001)
    err = float(np.max(np.abs(L(y) - np.tanh(y / np.sqrt(2)))))
    b = beta(pot)
    return (err < 1e-8 and abs(b - 2) < 1e-6 and pot.alpha == np.sqrt(2.0)), \
        {"sup_error": err, "beta": b, "alpha": pot.alpha}, 5.0


def _a2(name):
    from .correction import check_identities, orthogonality
    ident = check_identities(_correction("quartic"), _layer("quartic"), bound=20.0)
    orth = orthogonality(_correction("quartic"))
    worst_L = max(ident["analytic_L"], ident["fd_L"])
    worst_L2 = max(ident["analytic_L2"], ident["fd_L2"])
    return (worst_L < 1e-6 and worst_L2 < 1e-5 and abs(orth) < 1e-8), \
        {"resid_L": worst_L, "resid_L2": worst_L2, "orthogonality": orth}, 10.0


def _a3(name):
    from scipy.integrate import simpson
    from .kernels import build_kernel_table, f_n, heat_convolve, q_kernel
    mass_dev, rec = 0.0, 0.0
    tables = {}
    for n in (1, 2, 3, 4):
        T = build_kernel_table(n)
        tables[n] = T
        mass_dev = max(mass_dev, abs(T.mass(1.0) - 1))
        h = 1e-3
        for s in (0.5, 2.0, 5.0):
            rec = max(rec, abs((f_n(n, s + h) - f_n(n, s - h)) / (2 * h) + s * f_n(n + 2, s)))
    f1 = tables[1].f[(tables[1].s > 0) & (tables[1].s < 20)]
    sign_changes = int(np.count_nonzero(np.diff(np.sign(f1)) != 0))
    dx = 0.05
    x = np.arange(-40, 40 + dx / 2, dx)
    g = np.exp(-x**2)
    T1 = tables[1]
    a = heat_convolve(T1, heat_convolve(T1, g, dx, 1.0, "zero"), dx, 1.0, "zero")
    semigroup = float(np.max(np.abs(a - heat_convolve(T1, g, dx, 2.0, "zero"))))
    y = np.linspace(-20, 20, 4001)
    env = max(float(np.max(np.abs(q_kernel(1.0, nu, y)) * nu**0.25 * np.exp(np.abs(y) / nu**0.25)))
              for nu in (0.1, 0.3, 1.0, 3.0, 10.0))
    qmass = abs(simpson(q_kernel(1.0, 1.0, np.linspace(-40, 40, 8001)), x=np.linspace(-40, 40, 8001)) - 1)
    ok = mass_dev < 1e-6 and rec < 1e-5 and sign_changes >= 1 and semigroup < 1e-6 and np.isfinite(env)
    return ok, {"mass": mass_dev, "recurrence": rec, "sign_changes": sign_changes,
                "semigroup": semigroup, "Q_envelope": env, "Q_mass": qmass}, 60.0


def _a4(name):
    from .ansatz import CutOff, ModulationState, build_ansatz, error_ratio
    mod = ModulationState(4)
    ratios = []
    for t in (-1e3, -1e4, -1e5):
        ans = build_ansatz(_layer("quartic"), _correction("quartic"), CutOff(0.5), mod, t,
                           float(np.ceil(mod.rho(t) + 32)), 0.01)
        ratios.append(error_ratio(_potential("quartic"), ans, p=5))
    spread = max(ratios) / min(ratios)
    return (all(np.isfinite(ratios)) and spread < 1.5), {"ratios": ratios, "spread": spread}, 30.0


def _run_track(n, t0, t1):
    from .ansatz import CutOff, ModulationState
    from .geometry import gamma_n
    from .pde import domain_radius, evolve, initial_from_ansatz
    dx = 0.02
    R = domain_radius(n, t0, t1)
    u0 = initial_from_ansatz(_layer("quartic"), _correction("quartic"), CutOff(0.5),
                             ModulationState(n), t0, R, dx)
    run = evolve(_potential("quartic"), u0, n, t0, t1, "auto", dx)
    checks = np.linspace(t0, t1, 11)[1:]
    idx = [int(np.argmin(np.abs(run.times - c))) for c in checks]
    dev = np.abs(run.rho[idx] - gamma_n(n, run.times[idx]))
    bound = 3 / np.log(np.abs(run.times[idx]))
    return run, dev, bound


def _a5(name):
    run, dev, bound = _run_track(2, 1e3, 2e3)
    inc = run.energy_increase()
    return (bool(np.all(dev < bound)) and inc <= 1e-8), \
        {"max_deviation": float(dev.max()), "min_bound": float(bound.min()), "energy_increase": inc,
         "steps": run.steps}, 600.0


def _a6(name):
    run, dev, bound = _run_track(4, -2e3, -1e3)
    inward = bool(np.all(np.diff(run.rho) < 0))
    return (bool(np.all(dev < bound)) and inward), \
        {"max_deviation": float(dev.max()), "min_bound": float(bound.min()), "inward": inward,
         "steps": run.steps}, 600.0


def _a7(name):
    from .geometry import willmore_rhs
    from .pde import evolve
    dx = 0.02
    r = dx * np.arange(int(60 / dx) + 1)
    u0 = _layer("quartic")(r - 20)
    run = evolve(_potential("quartic"), u0, 3, 0.0, 1.0, 0.02, dx)
    drift = float(np.max(np.abs(run.final - u0)))
    rhs = float(np.max(np.abs(willmore_rhs(3, np.linspace(0.5, 100, 1000)))))
    return (drift < 1e-3 and rhs < 1e-14), {"drift": drift, "willmore_rhs": rhs}, None


def _a8(name):
    import scipy.linalg as sla
    from .reduction import layer_operator, spectral_gap
    pot, L = _potential("quartic"), _layer("quartic")
    out = {}
    ok = True
    for dy in (0.1, 0.05):
        cert = spectral_gap(pot, L, dy=dy)
        y, A = layer_operator(pot, L, 20.0, dy)
        basis = sla.null_space(L(y, 1)[None, :])
        dense = sla.eigh(basis.T @ (A @ A) @ basis, eigvals_only=True, subset_by_index=[0, 0])[0]
        ok &= abs(cert.eigenvalue / 2.25 - 1) < 0.05 and abs(dense / 2.25 - 1) < 0.05
        ok &= abs(cert.eigenvalue - dense) < 1e-6 * dense and cert.translation_residual < 1e-8
        out[f"gap_{dy}"] = cert.eigenvalue
        out[f"dense_{dy}"] = dense
        out[f"translation_residual_{dy}"] = cert.translation_residual
    return bool(ok), out, None


def _a9(name):
    from .reduction import first_iterate_norm, solve_reduced_ode
    ctx = _context("quartic")
    sol = solve_reduced_ode(ctx, 4, 5, 1e3)
    norms = [sol.first_norm] + [first_iterate_norm(ctx, 4, T) for T in (1e4, 1e5)]
    rng = np.random.default_rng(3)
    ts = -np.exp(rng.uniform(np.log(1.1e3), np.log(9e5), 20))
    resid = float(np.max(np.abs(sol.ode_residual(ctx, ts))))
    C = sol.decay_constant()
    ok = sol.iterations <= 30 and norms[0] > norms[1] > norms[2] and np.isfinite(C) and resid < 1e-6
    return bool(ok), {"iterations": sol.iterations, "first_norms": norms, "decay_constant": C,
                      "ode_residual": resid}, 300.0


def _a10(name):
    from .ansatz import ModulationState
    from .reduction import projected_error_split
    ctx = _context("quartic")
    mod = ModulationState(4)
    normalized, outer = [], 0.0
    for t in (-1e3, -1e4, -1e5):
        rep = projected_error_split(ctx.potential, ctx.layer, ctx.correction, ctx.cutoff, mod, t, 4)
        normalized.append(rep.leading_residual / (rep.rho**3 * np.log(-t) / (-t) ** 1.25))
        outer = max(outer, abs(rep.tilde[1]), abs(rep.tilde[2]))
    ok = all(np.isfinite(normalized)) and max(abs(v) for v in normalized) <= 1.0 and outer < 1e-10
    return bool(ok), {"normalized": normalized, "outer_E2_E3": outer}, None


def _a11(name):
    from .ansatz import (CutOff, ModulationState, RadialField, apply_F, apply_Fprime, apply_Fsecond,
                         build_ansatz)
    pot = _potential("quartic")
    mod = ModulationState(4)
    t = -1e4
    ans = build_ansatz(_layer("quartic"), _correction("quartic"), CutOff(0.5), mod, t,
                       float(mod.rho(t)) + 32, 0.01)
    z = ans.z

    def bump(center, width):
        def f(r, k):
            x = (r - center) / width
            H = [1, 2 * x, 4 * x**2 - 2, 8 * x**3 - 12 * x, 16 * x**4 - 48 * x**2 + 12][k]
            return (-1) ** k * H * np.exp(-x * x) / width**k
        return RadialField.from_function(f, z.R, z.dx)

    v1, v2 = bump(ans.rho, 1.0), bump(ans.rho - 1.0, 0.7)
    F0 = apply_F(pot, z, 4)
    lin = apply_Fprime(pot, z, v1, 4)
    gat = [float(np.max(np.abs((apply_F(pot, z + e * v1, 4) - F0) / e - lin))) for e in (1e-3, 5e-4)]
    sec = apply_Fsecond(pot, z, v1, v1, 4)
    tay = [float(np.max(np.abs(apply_F(pot, z + e * v1, 4) - F0 - e * lin - 0.5 * e * e * sec)))
           for e in (1e-2, 5e-3, 2.5e-3)]
    sym = float(np.max(np.abs(apply_Fsecond(pot, z, v1, v2, 4) - apply_Fsecond(pot, z, v2, v1, 4))))
    halving = gat[1] / gat[0]
    orders = [tay[0] / tay[1], tay[1] / tay[2]]
    ok = abs(halving - 0.5) < 0.05 and all(abs(o / 8 - 1) < 0.1 for o in orders) and sym < 1e-12
    return bool(ok), {"gateaux_ratio": halving, "taylor_ratios": orders, "symmetry": sym}, None


CRITERIA = {"A1": _a1, "A2": _a2, "A3": _a3, "A4": _a4, "A5": _a5, "A6": _a6, "A7": _a7,
            "A8": _a8, "A9": _a9, "A10": _a10, "A11": _a11}


def run_criterion(name, potential="quartic") -> CriterionResult:
    """Run one acceptance criterion; the runtime limit is part of the verdict."""
    start = time.perf_counter()
    try:
        ok, detail, limit = CRITERIA[name](name)
    except Exception as exc:  # a crash is a failure with its reason recorded
        return CriterionResult(name, False, {"error": f"{type(exc).__name__}: {exc}"},
                               time.perf_counter() - start)
    wall = time.perf_counter() - start
    if limit is not None:
        detail["limit_s"] = limit
        ok = ok and wall < limit
    return CriterionResult(name, bool(ok), detail, wall)


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------
def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0] in ("-h", "--help") and len(argv) == 1:
        print(__doc__.strip())
        print("\nsubcommands: " + ", ".join(SUBCOMMANDS))
        print("run 'wch SUBCOMMAND --help' for the keys of a subcommand")
        return 0
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"wch: usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    start = time.perf_counter()
    try:
        results = COMMANDS[cfg.subcommand](cfg)
    except UsageError as exc:
        print(f"wch: usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        results = {"status": "failed", "reason": f"{type(exc).__name__}: {exc}"}
        print(f"wch: {cfg.subcommand} failed: {results['reason']}", file=sys.stderr)
    results["wall_time"] = time.perf_counter() - start
    path = write_manifest(cfg, results)
    status = json.loads(path.read_text())["status"]
    print(f"{cfg.subcommand}: {status} ({results['wall_time']:.1f} s), manifest {path}")
    return 0 if status == "passed" else 1


if __name__ == "__main__":
    sys.exit(main())
