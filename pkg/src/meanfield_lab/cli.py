"""Command-line front-end: ``meanfield-lab <subcommand> [flags]``.

Every run writes into ``--out`` (default ``.``):

* ``<name>.json``: the fully resolved config and the results, floats with 17 significant digits
* ``<name>*.csv``: curves and histograms (comma separated, header row, Unix newlines)
* ``<name>.bin``: large dumps in a little-endian binary layout (see ``write_samples`` and
  ``write_complex_matrix``)

Values in a JSON ``--config`` file act as defaults for the flags; explicit flags win.
Usage errors exit with status 2 and module errors with status 1; nothing is written in
either case.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
from scipy import optimize

from meanfield_lab import anyon_af, definetti, jellium, tf_vortex, variational_1d
from meanfield_lab import coulomb_gas as cg
from meanfield_lab.coulomb_gas import sampler
from meanfield_lab.errors import ConvergenceError, DomainError

THREADS_ENV = "MEANFIELD_LAB_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# serialization

def _fmt(x):
    return format(float(x), ".17g")


def _encode(obj, indent=0):
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_encode(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj) if math.isfinite(obj) else "null"
    return json.dumps(str(obj))


def dumps(obj) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _encode(obj) + "\n"


def csv_text(columns: dict) -> str:
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float).ravel() for k in names])
    buf = io.StringIO()
    np.savetxt(buf, data, fmt="%.17g", delimiter=",", header=",".join(names), comments="")
    return buf.getvalue()


def write_complex_matrix(path, M):
    """Header: two little-endian int64 (rows, cols); body: row-major complex128 (re, im pairs)."""
    M = np.ascontiguousarray(np.asarray(M, dtype="<c16"))
    with open(path, "wb") as fh:
        fh.write(np.array(M.shape, dtype="<i8").tobytes())
        fh.write(M.tobytes())


def read_complex_matrix(path):
    with open(path, "rb") as fh:
        rows, cols = np.frombuffer(fh.read(16), dtype="<i8")
        return np.frombuffer(fh.read(), dtype="<c16").reshape(int(rows), int(cols))


class Outputs:
    """Files are staged in memory and only written once the command succeeded."""

    def __init__(self, name):
        self.name = name
        self.files = {}

    def csv(self, suffix, columns):
        self.files[f"{self.name}{suffix}.csv"] = csv_text(columns)

    def binary(self, filename, writer):
        self.files[filename] = writer

    def flush(self, out_dir: Path):
        out_dir.mkdir(parents=True, exist_ok=True)
        for fname, content in self.files.items():
            path = out_dir / fname
            if callable(content):
                content(path)
            else:
                with open(path, "w", newline="\n") as fh:
                    fh.write(content)


# ---------------------------------------------------------------------------
# argument types

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _scan(text):
    try:
        a, b, n = text.split(":")
        return float(a), float(b), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a:b:n") from None


def _state_spec(text):
    if text == "product" or text.startswith("mixed:") or text.startswith("file:"):
        if text.startswith("mixed:"):
            int(text.split(":", 1)[1])
        return text
    raise argparse.ArgumentTypeError("expected product, mixed:<seed> or file:<path>")


def _potential_spec(text):
    if text == "harmonic":
        return text
    if text.startswith("power:"):
        float(text.split(":", 1)[1])
        return text
    raise argparse.ArgumentTypeError("expected harmonic or power:<s>")


# ---------------------------------------------------------------------------
# subcommands

def run_tf_vortex(a, out):
    p = tf_vortex.tf_profile(a.s)
    r = tf_vortex.radial_grid(p, a.grid_points, a.delta)
    cost = tf_vortex.cost_function(p, a.omega0)
    vm = tf_vortex.vortex_density(p, a.omega0, r)
    out.csv("", {"r": r, "rho_tf": p(r), "F_tf": cost.f_tf(r), "H_tf": vm.h_tf, "mu_star": vm.mu})
    return {
        "lambda_tf": p.lambda_tf,
        "r_tf": p.r_tf,
        "omega1": tf_vortex.first_critical_speed(a.s),
        "I_tf": tf_vortex.vortex_energy(vm.mu, p, a.omega0, r),
        "half_cost_integral": tf_vortex.half_cost_integral(vm),
        "I_tf_obstacle": tf_vortex.minimize_vortex_energy(p, a.omega0, r).energy,
        "support_radius": vm.support_radius(),
    }


def _gl_point(b, a):
    params = variational_1d.GLParams(b=b, k=a.k, eps=a.eps, c0=a.c0)
    res = variational_1d.minimize_gl1d(params)
    cc = variational_1d.curvature_constants(b)
    return res, {"b": b, "E1D": res.energy, "alpha": res.profile.alpha, "C1": cc.c1, "C2": cc.c2}


def run_gl1d(a, out):
    theta, _ = variational_1d.theta0()
    summary = {"theta0": theta, "theta0_inv": 1 / theta}
    if a.scan_b is not None:
        lo, hi, n = a.scan_b
        rows = [_gl_point(b, a)[1] for b in np.linspace(lo, hi, n)]
        out.csv("_scan", {k: [row[k] for row in rows] for k in rows[0]})
        summary["scan"] = rows
        return summary
    res, row = _gl_point(a.b, a)
    out.csv("_profile", {"t": res.profile.t, "f": res.profile.f})
    summary.update({k: v for k, v in row.items() if k != "b"})
    return summary


def run_scatlen(a, out):
    if a.potential == "hard":
        w = variational_1d.hard_sphere(a.R0)
        analytic = a.R0
    else:
        w = variational_1d.soft_ball(a.R0, a.V0)
        analytic = variational_1d.soft_ball_scattering_length(a.R0, a.V0)
    res = variational_1d.scattering_length(w)
    summary = {"a": res.a, "a_analytic": analytic, "variational_energy": res.energy}
    if a.potential == "soft":
        total = w.integral()
        summary.update({"integral_w": total, "born_bound_holds": 8 * np.pi * res.a <= total})
    return summary


def _energy_stats(e):
    e = np.asarray(e, dtype=float)
    return {"energy_mean": float(e.mean()) if e.size else float("nan"),
            "energy_variance": float(e.var()) if e.size else float("nan")}


def run_coulomb_mc(a, out):
    V = cg.PowerLogPotential(1.0, a.s, 0.0)
    results = sampler.run_chains(lambda seed: cg.coulomb_chain(a.n, a.beta, V, a.d, seed),
                                 a.seed, a.chains, a.sweeps, a.thin, a.warmup, a.threads)
    samples = np.concatenate([r.samples for r in results])
    energies = np.concatenate([r.energies for r in results])
    radii = np.linalg.norm(samples, axis=-1).ravel()
    mu = cg.equilibrium_measure_radial(V, a.d)
    r_max = 1.5 * mu.r_outer
    r, dens = cg.radial_histogram(radii, r_max, a.bins, a.d)
    out.csv("_hist", {"r": r, "density": dens})
    out.binary("coulomb_mc.bin", lambda path: sampler.write_samples(path, samples))
    summary = {"acceptance": float(np.mean([r.acceptance for r in results])),
               "snapshots": int(samples.shape[0]), "equilibrium_radius": mu.r_outer}
    summary.update(_energy_stats(energies))
    if a.d == 2 and samples.size:
        summary["bl_distance_bound"] = cg.bounded_lipschitz_to_disc(samples, mu.r_outer, seed=a.seed)
    return summary


def run_laughlin(a, out):
    spec = cg.LaughlinPlasmaSpec(a.N, a.ell, a.m)
    res = cg.laughlin_sampler(spec, a.seed, a.sweeps, a.thin, a.warmup)
    out.csv("_density", {"r": res.r, "density": res.density})
    out.csv("_hist", {"r": res.hist_r, "density": res.hist_density})
    out.binary("laughlin.bin", lambda path: sampler.write_samples(path, res.samples))
    summary = {"acceptance": res.acceptance, "snapshots": int(res.samples.shape[0]),
               "bandwidth": res.bandwidth, "density_max": float(res.density.max()),
               "density_max_times_2pi": float(2 * np.pi * res.density.max()),
               "annulus_radii": list(cg.annulus_radii(res.radii)),
               "mean_r2": float(np.mean(res.radii**2))}
    summary.update(_energy_stats(res.energies))
    return summary


def run_bathtub(a, out):
    if not a.cap > 0:
        raise DomainError("cap must be positive")
    # the filled region of a radial increasing V is the disc of area 1/cap
    R = math.sqrt(1 / (math.pi * a.cap))
    r_max = a.r_max if a.r_max is not None else 2 * R
    res, r = cg.bathtub_radial(lambda x: x**a.s, a.cap, r_max, a.shells)
    out.csv("", {"r": r, "rho": res.rho})
    analytic = 2 * math.pi * a.cap * R ** (a.s + 2) / (a.s + 2)
    return {"energy": res.energy, "energy_analytic": analytic, "level": res.level, "radius": R}


def _load_basis(path, m):
    with open(path) as fh:
        data = json.load(fh)
    if "basis" not in data:
        raise DomainError("basis file needs a 'basis' entry")
    basis = np.asarray(data["basis"], dtype=float)
    points = np.asarray(data.get("points", np.zeros((1, basis.shape[0]))), dtype=float)
    cfg = jellium.PeriodicChargeConfig(basis, points, data.get("multiplicities"))
    return cfg.scaled((cfg.m / m) ** (1 / cfg.d)) if m is not None else cfg


def run_jellium(a, out):
    if a.lattice == "custom":
        if a.basis is None:
            raise UsageError("jellium: --lattice custom requires --basis")
        cfg = _load_basis(a.basis, a.m)
    else:
        cfg = jellium.lattice_config(a.lattice, 1.0 if a.m is None else a.m)
    if a.d is not None and a.d != cfg.d:
        raise DomainError(f"lattice {a.lattice} has dimension {cfg.d}, not {a.d}")
    sc = jellium.SmearedCharge(a.eta)
    res = jellium.field_energy_eta(cfg, sc)
    summary = {"W_eta": res.W_eta, "field_energy": res.field_energy, "kappa_d": res.kappa_d,
               "gamma2": res.gamma2, "eta": res.eta, "m": res.m, "d": cfg.d,
               "ewald": res.diagnostics}
    if a.brute_force:
        W = jellium.fourier_field_energy(cfg, sc)
        summary["W_eta_fourier"] = W.W_eta
        summary["ewald_vs_fourier"] = abs(W.W_eta - res.W_eta)
    return summary


def _load_state(spec, N, d):
    if spec == "product":
        return definetti.product_state(np.ones(d), N)
    if spec.startswith("mixed:"):
        return definetti.random_mixed_state(N, d, int(spec.split(":", 1)[1]))
    path = spec.split(":", 1)[1]
    M = read_complex_matrix(path) if not path.endswith(".npy") else np.load(path)
    G = definetti.SymmetricState(N, d, M)
    G.validate()
    return G


def run_definetti(a, out):
    G = _load_state(a.state, a.N, a.d)
    err = definetti.definetti_error(G, a.k)
    mu = definetti.lower_symbol(G, k=a.k)
    summary = {"trace_distance": err.trace_distance, "bound": err.bound,
               "quadrature_mass": mu.mass, "dim": definetti.sym_dim(a.N, a.d)}
    if a.dump:
        gam = definetti.reduced_dm(G, a.k).matrix
        tilde = definetti.ckmr_moments(G, a.k)
        out.binary("definetti_gamma.bin", lambda path: write_complex_matrix(path, gam))
        out.binary("definetti_moments.bin", lambda path: write_complex_matrix(path, tilde))
    return summary


def run_anyon(a, out):
    V = anyon_af.TrapPotential.parse(a.V)
    L = a.L if a.L is not None else anyon_af.default_box(V.s)
    grid = anyon_af.Grid2D(a.grid, L)
    p = anyon_af.AFParams(a.beta, a.R, V)
    res = anyon_af.minimize_af(p, grid, a.tol, a.seed, a.restarts, threads=a.threads)
    X, Y = grid.coords
    out.csv("_density", {"x": X, "y": Y, "density": res.field.density})
    return {"E_af": res.energy, "iterations": res.iterations, "converged": res.converged,
            "gradient_residual": res.gradient_residual,
            "radial_anisotropy": anyon_af.radial_anisotropy(res.field),
            "boundary_ratio": res.field.boundary_ratio(), "L": L,
            "restarts": [{"seed": s, "energy": e, "iterations": it} for s, e, it in res.restarts]}


# ---------------------------------------------------------------------------
# selfcheck

def _close(x, y, tol):
    return abs(x - y) <= tol


def _check_critical_speed():
    om = tf_vortex.first_critical_speed(2.0)
    p = tf_vortex.tf_profile(2.0)
    root = optimize.brentq(lambda w: tf_vortex.cost_function(p, w).h_tf(0.0)[0], 0.1, 10, xtol=1e-12)
    return _close(om, math.sqrt(math.pi), 1e-10) and _close(root, om, 1e-6)


def _check_no_vortices():
    p = tf_vortex.tf_profile(2.0)
    vm = tf_vortex.vortex_density(p, 0.99 * tf_vortex.first_critical_speed(2.0))
    return bool(np.all(vm.mu == 0))


def _check_scattering():
    hard = variational_1d.scattering_length(variational_1d.hard_sphere(1.3)).a
    soft = variational_1d.scattering_length(variational_1d.soft_ball(1.0, 2.0)).a
    return _close(hard, 1.3, 1e-8) and _close(soft, variational_1d.soft_ball_scattering_length(1.0, 2.0), 1e-8)


def _check_theta0():
    return 1.68 <= 1 / variational_1d.theta0()[0] <= 1.72


def _check_bathtub():
    res, _ = cg.bathtub_radial(lambda r: r**2, 1 / (2 * math.pi), 3.0)
    return _close(res.energy, 1.0, 1e-6)


def _check_coulomb_pair():
    cfg = cg.ParticleConfiguration(np.array([[0.0, 0, 0], [1.0, 0, 0]]))
    return _close(cg.hamiltonian(cfg, cg.PowerLogPotential(0.0, 2.0, 0.0)), 2.0, 1e-14)


def _check_jellium():
    sc = jellium.SmearedCharge(0.1)
    sq = jellium.field_energy_eta(jellium.lattice_config("square"), sc).W_eta
    tri = jellium.field_energy_eta(jellium.lattice_config("triangular"), sc).W_eta
    brute = jellium.fourier_field_energy(jellium.lattice_config("square"), sc).W_eta
    return tri < sq and _close(sq, brute, 1e-6)


def _check_definetti():
    N, d = 6, 2
    G = definetti.product_state(np.array([1.0, 0.5j]), N)
    err = definetti.definetti_error(G, 1).trace_distance
    mixed = definetti.random_mixed_state(4, 2, seed=3)
    quad = definetti.lower_symbol(mixed, k=2).moment(2)
    exact = definetti.ckmr_moments(mixed, 2)
    return _close(err, 2 * (d - 1) / (N + d), 1e-12) and np.max(np.abs(quad - exact)) < 1e-10


def _check_anyon():
    grid = anyon_af.Grid2D(64, anyon_af.default_box())
    u = np.exp(-grid.radius**2 / 2) / math.sqrt(math.pi) + 0j
    E0 = anyon_af.af_energy(anyon_af.GridField2D(grid, u), anyon_af.AFParams(0.0, 0.25))
    fun = anyon_af.AFFunctional(grid, anyon_af.AFParams(1.0, 0.25))
    X, Y = grid.coords
    w = u * np.exp(0.3j * X * Y)
    gap = anyon_af.gradient_check(fun, w, (1 + 0.5j * X) * u)
    return _close(E0, 2.0, 0.01) and gap < 1e-5


def _check_serialization():
    x = 0.1 + 0.2
    return float(json.loads(dumps({"x": x}))["x"]) == x


CHECKS = [
    ("tf_vortex", "critical speed closed form and bisection", _check_critical_speed),
    ("tf_vortex", "no vortices below the critical speed", _check_no_vortices),
    ("variational_1d", "scattering lengths", _check_scattering),
    ("variational_1d", "Theta0 window", _check_theta0),
    ("coulomb_gas", "two-point Hamiltonian", _check_coulomb_pair),
    ("coulomb_gas", "bath-tub energy", _check_bathtub),
    ("jellium", "Ewald vs Fourier, triangular below square", _check_jellium),
    ("definetti", "product error and moments", _check_definetti),
    ("anyon_af", "harmonic energy and gradient", _check_anyon),
    ("cli", "float round trip", _check_serialization),
]


def run_selfcheck(a, out, stream=None):
    stream = stream or sys.stdout
    rows = []
    for module, name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, note = bool(fn()), ""
        except Exception as exc:  # a crashing check is a failing check
            ok, note = False, f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        rows.append((module, name, ok, dt))
        line = f"{'PASS' if ok else 'FAIL'}  {module:<15} {name:<45} {dt:8.3f} s"
        print(line + (f"  {note}" if note else ""), file=stream)
    failed = sorted({m for m, _, ok, _ in rows if not ok})
    print(f"{len(rows) - sum(not r[2] for r in rows)}/{len(rows)} checks passed", file=stream)
    if failed:
        print("failing modules: " + ", ".join(failed), file=stream)
    return {"passed": not failed, "failed_modules": failed}


# ---------------------------------------------------------------------------
# parser and dispatch

def _common(p, seed=True):
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--config", default=None, help="JSON file with default flag values")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or 1)")
    if seed:
        p.add_argument("--seed", type=int, default=0, help="master seed")


def build_parser():
    parser = _Parser(prog="meanfield-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("tf-vortex", help="Thomas-Fermi profile and vortex density")
    p.add_argument("--s", type=float, default=2.0, help="trap exponent (>= 2)")
    p.add_argument("--omega0", type=float, default=3.0, help="reduced rotation speed")
    p.add_argument("--grid-points", type=_positive_int, default=tf_vortex.DEFAULT_GRID_POINTS)
    p.add_argument("--delta", type=float, default=tf_vortex.DEFAULT_DELTA,
                   help="grid stops at (1 - delta) R_TF")
    _common(p, seed=False)

    p = sub.add_parser("gl1d", help="reduced 1D Ginzburg-Landau problem")
    p.add_argument("--b", type=float, default=1.4)
    p.add_argument("--k", type=float, default=0.0, help="boundary curvature")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--c0", type=float, default=2.0, help="domain length factor for k != 0")
    p.add_argument("--scan-b", type=_scan, default=None, metavar="A:B:N")
    _common(p, seed=False)

    p = sub.add_parser("scatlen", help="scattering length of a radial potential")
    p.add_argument("--potential", choices=["hard", "soft"], default="hard")
    p.add_argument("--R0", type=float, default=1.0, help="range")
    p.add_argument("--V0", type=float, default=1.0, help="soft-ball height")
    _common(p, seed=False)

    p = sub.add_parser("coulomb-mc", help="Metropolis sampling of a Coulomb gas")
    p.add_argument("--n", type=_positive_int, default=100)
    p.add_argument("--d", type=int, choices=[2, 3], default=2)
    p.add_argument("--beta", type=float, default=4.0)
    p.add_argument("--s", type=float, default=2.0, help="V(x) = |x|^s")
    p.add_argument("--sweeps", type=int, default=10000)
    p.add_argument("--thin", type=_positive_int, default=10)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--chains", type=_positive_int, default=1)
    p.add_argument("--bins", type=_positive_int, default=60)
    _common(p)

    p = sub.add_parser("laughlin", help="Laughlin / quasi-hole plasma")
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--ell", type=int, default=2)
    p.add_argument("--m", type=int, default=0)
    p.add_argument("--sweeps", type=int, default=20000)
    p.add_argument("--thin", type=_positive_int, default=10)
    p.add_argument("--warmup", type=int, default=2000)
    _common(p)

    p = sub.add_parser("bathtub", help="bath-tub energy of a radial potential |x|^s")
    p.add_argument("--s", type=float, default=2.0)
    p.add_argument("--cap", type=float, default=1 / (2 * math.pi))
    p.add_argument("--r-max", type=float, default=None)
    p.add_argument("--shells", type=_positive_int, default=20000)
    _common(p, seed=False)

    p = sub.add_parser("jellium", help="renormalized jellium energy of a periodic configuration")
    p.add_argument("--lattice", choices=["square", "triangular", "cubic", "bcc", "fcc", "custom"],
                   default="square")
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--m", type=float, default=None, help="density (default 1, or the file's)")
    p.add_argument("--d", type=int, choices=[2, 3], default=None)
    p.add_argument("--basis", default=None, help="JSON file with basis, points, multiplicities")
    p.add_argument("--brute-force", action="store_true", help="also run the Fourier sum")
    _common(p, seed=False)

    p = sub.add_parser("definetti", help="quantitative de Finetti construction")
    p.add_argument("--d", type=_positive_int, default=2)
    p.add_argument("--N", type=_positive_int, default=8)
    p.add_argument("--k", type=_positive_int, default=1)
    p.add_argument("--state", type=_state_spec, default="product",
                   help="product, mixed:<seed> or file:<path>")
    p.add_argument("--dump", action="store_true", help="write reduced and moment matrices")
    _common(p, seed=False)

    p = sub.add_parser("anyon", help="average-field functional minimization")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--R", type=float, default=0.25)
    p.add_argument("--V", type=_potential_spec, default="harmonic")
    p.add_argument("--grid", type=_positive_int, default=128)
    p.add_argument("--L", type=float, default=None, help="box half-width (default from V)")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--restarts", type=_positive_int, default=1)
    _common(p)

    p = sub.add_parser("selfcheck", help="fast release checks")
    _common(p, seed=False)
    return parser


RUNNERS = {
    "tf-vortex": run_tf_vortex,
    "gl1d": run_gl1d,
    "scatlen": run_scatlen,
    "coulomb-mc": run_coulomb_mc,
    "laughlin": run_laughlin,
    "bathtub": run_bathtub,
    "jellium": run_jellium,
    "definetti": run_definetti,
    "anyon": run_anyon,
    "selfcheck": run_selfcheck,
}


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        sub = _subparser(parser, args.command)
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        known = {a.dest: a for a in sub._actions}
        flags = []
        for key, val in cfg.items():
            dest = key.replace("-", "_")
            if dest not in known or dest in ("config", "help"):
                raise UsageError(f"unknown config key {key!r}")
            flags.append((known[dest], val))
        # config values become defaults; explicit flags parsed afterwards win
        defaults = {}
        for action, val in flags:
            if action.type is not None and not isinstance(val, bool):
                try:
                    val = action.type(str(val))
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise UsageError(f"bad config value for {action.dest}: {exc}") from None
            if action.choices is not None and val not in action.choices:
                raise UsageError(f"bad config value for {action.dest}: {val!r}")
            defaults[action.dest] = val
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    if args.threads is None:
        env = os.environ.get(THREADS_ENV)
        try:
            args.threads = int(env) if env else 1
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer") from None
    return args


def resolved_config(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "out", "command")}
    if "scan_b" in cfg and cfg["scan_b"] is not None:
        cfg["scan_b"] = list(cfg["scan_b"])
    return {"command": args.command, "parameters": cfg}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if not argv:
            raise UsageError("meanfield-lab: a subcommand is required (see --help)")
        args = parse_args(argv)
        out_dir = Path(args.out)
        os.environ[THREADS_ENV] = str(args.threads)
        name = args.command.replace("-", "_")
        outputs = Outputs(name)
        summary = RUNNERS[args.command](args, outputs)
    except UsageError as exc:
        print(dumps({"error": "usage", "message": str(exc)}), file=sys.stderr, end="")
        return 2
    except (DomainError, ConvergenceError, definetti.ConventionError, OSError) as exc:
        print(dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr, end="")
        return 1
    config = resolved_config(args)
    outputs.files[f"{name}.json"] = dumps({"config": config, "results": summary})
    outputs.files[f"{name}.config.json"] = dumps(config["parameters"])
    outputs.flush(out_dir)
    if args.command == "selfcheck":
        return 0 if summary["passed"] else 1
    print(dumps(summary), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
