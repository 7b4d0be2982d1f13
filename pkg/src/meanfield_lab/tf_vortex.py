"""Thomas-Fermi profile and limiting vortex distribution of a rotating 2D condensate.

Everything is parametrized by the reduced rotation speed ``omega0 = Omega / |log eps|``;
the small parameter ``eps`` itself never enters.  Radial quantities live on grids
that stop at ``(1 - delta) * R_TF`` because the TF density vanishes at ``R_TF``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg

from meanfield_lab.errors import ConvergenceError, DomainError

DEFAULT_DELTA = 1e-3
DEFAULT_GRID_POINTS = 2001


def _check_s(s):
    if not np.isfinite(s) or s < 2:
        raise DomainError(f"trap exponent s must be >= 2, got {s}")


@dataclass(frozen=True)
class TFProfile:
    """rho(r) = [lambda_tf - r^s]_+ / 2, normalized to unit mass in the plane."""

    s: float
    lambda_tf: float
    r_tf: float

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return 0.5 * np.clip(self.lambda_tf - r**self.s, 0.0, None)

    @property
    def scaled_energy(self):
        """eps^2 times the TF ground state energy."""
        s = self.s
        return np.pi * s / (4 * (s + 1)) * self.lambda_tf ** (2 * (s + 1) / s)

    def mass(self):
        val, _ = integrate.quad(lambda r: 2 * np.pi * r * self(r), 0.0, self.r_tf,
                                epsabs=1e-14, epsrel=1e-13)
        return val

    def dlog(self, r):
        """First radial derivative of log rho, valid for r < R_TF."""
        r = np.asarray(r, dtype=float)
        s, lam = self.s, self.lambda_tf
        return -s * r ** (s - 1) / (lam - r**s)

    def d2log(self, r):
        """Second radial derivative of log rho, valid for r < R_TF."""
        r = np.asarray(r, dtype=float)
        s, lam = self.s, self.lambda_tf
        g = lam - r**s
        # d/dr [-s r^{s-1} / g] = -s(s-1) r^{s-2}/g - s^2 r^{2s-2}/g^2
        return -s * (s - 1) * r ** (s - 2) / g - (s * r ** (s - 1)) ** 2 / g**2


def tf_profile(s: float) -> TFProfile:
    _check_s(s)
    lam = (2 * (s + 2) / (np.pi * s)) ** (s / (s + 2))
    return TFProfile(s=float(s), lambda_tf=lam, r_tf=lam ** (1 / s))


def first_critical_speed(s: float) -> float:
    """Reduced rotation speed above which H_TF(0) < 0."""
    _check_s(s)
    return np.pi / 2 * (2 * (s + 2) / (np.pi * s)) ** (s / (s + 2))


@dataclass(frozen=True)
class CostData:
    profile: TFProfile
    omega0: float

    def f_tf(self, r):
        """Potential function -omega0 * int_r^R t rho(t) dt, by adaptive quadrature."""
        p = self.profile
        r = np.atleast_1d(np.asarray(r, dtype=float))
        # integrate between consecutive sorted abscissae, accumulate from R_TF inwards
        knots = np.unique(np.clip(np.append(r, p.r_tf), 0.0, p.r_tf))
        lam, s = p.lambda_tf, p.s

        def integrand(t):
            return 0.5 * t * max(lam - t**s, 0.0)

        pieces = np.array([
            integrate.quad(integrand, a, b, epsabs=1e-15, epsrel=1e-13)[0]
            for a, b in zip(knots[:-1], knots[1:])
        ])
        tail = np.append(np.cumsum(pieces[::-1])[::-1], 0.0)
        return -self.omega0 * tail[np.searchsorted(knots, np.clip(r, 0.0, p.r_tf))]

    def h_tf(self, r):
        return 0.5 * self.profile(r) + self.f_tf(r)


def cost_function(p: TFProfile, omega0: float) -> CostData:
    if not omega0 > 0:
        raise DomainError(f"omega0 must be positive, got {omega0}")
    return CostData(profile=p, omega0=float(omega0))


def radial_grid(p: TFProfile, n_points=DEFAULT_GRID_POINTS, delta=DEFAULT_DELTA):
    """Uniform grid on [0, (1 - delta) R_TF]."""
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    return np.linspace(0.0, (1 - delta) * p.r_tf, int(n_points))


@dataclass(frozen=True)
class VorticityMeasure:
    """Radial vorticity density on a grid.

    ``mu`` is the explicit second-derivative formula, ``mu_div`` the divergence form
    ``[div(rho^{-1} grad H)]_+``; the two differ by ``(2r)^{-1} d/dr log rho`` inside
    the bracket.  ``support`` marks the closed set {H <= 0}.
    """

    r: np.ndarray
    mu: np.ndarray
    mu_div: np.ndarray
    h_tf: np.ndarray
    support: np.ndarray
    omega0: float

    def max_discrepancy(self):
        return float(np.max(np.abs(self.mu - self.mu_div)))

    def support_radius(self):
        pos = np.nonzero(self.mu > 0)[0]
        return float(self.r[pos[-1]]) if pos.size else 0.0


def vortex_density(p: TFProfile, omega0: float, grid=None) -> VorticityMeasure:
    cost = cost_function(p, omega0)
    r = radial_grid(p) if grid is None else np.asarray(grid, dtype=float)
    if r.size and r.max() >= p.r_tf:
        raise DomainError("grid must stay strictly inside the TF support")
    h = cost.h_tf(r)
    support = h <= 0.0
    bracket = 0.5 * p.d2log(r) + 2 * omega0
    with np.errstate(divide="ignore", invalid="ignore"):
        radial_term = np.where(r > 0, p.dlog(r) / np.where(r > 0, r, 1.0), p.d2log(0.0))
    bracket_div = bracket + 0.5 * radial_term
    mu = np.where(support, np.clip(bracket, 0.0, None), 0.0)
    mu_div = np.where(support, np.clip(bracket_div, 0.0, None), 0.0)
    return VorticityMeasure(r=r, mu=mu, mu_div=mu_div, h_tf=h, support=support,
                            omega0=float(omega0))


@dataclass
class VortexPotential:
    r: np.ndarray
    h: np.ndarray
    residual: float
    weights: np.ndarray = field(repr=False)


def _cell_volumes(r):
    """int r dr over the finite-volume cell of each node of a uniform grid."""
    dr = r[1] - r[0]
    vol = r * dr
    vol[0] = dr * dr / 8
    vol[-1] = (r[-1] - dr / 4) * dr / 2
    return vol


def vortex_potential(nu, p: TFProfile, grid, tol=1e-8) -> VortexPotential:
    """Solve -div(rho^{-1} grad h) = nu on the disc of radius grid[-1], h = 0 there.

    Second-order finite volumes on a uniform grid starting at r = 0.
    """
    r = np.asarray(grid, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if r[0] != 0.0:
        raise DomainError("grid must start at r = 0")
    if r[-1] >= p.r_tf:
        raise DomainError("solve radius must be smaller than R_TF (singular weight)")
    dr = r[1] - r[0]
    rh = r[:-1] + dr / 2
    cond = rh / p(rh) / dr  # face conductances
    vol = _cell_volumes(r)
    m = r.size - 1  # unknowns at nodes 0..m-1, Dirichlet at node m
    diag = np.zeros(m)
    diag += cond[:m]
    diag[1:] += cond[: m - 1]
    off = -cond[: m - 1]
    rhs = nu[:m] * vol[:m]
    ab = np.zeros((2, m))
    ab[0, 1:] = off
    ab[1] = diag
    sol = linalg.solveh_banded(ab, rhs)
    h = np.append(sol, 0.0)
    resid = diag * sol - rhs
    resid[:-1] += off * sol[1:]
    resid[1:] += off * sol[:-1]
    scale = max(np.max(np.abs(rhs)), 1e-300)
    rel = float(np.max(np.abs(resid)) / scale) if np.any(rhs) else float(np.max(np.abs(resid)))
    if rel > tol:
        raise ConvergenceError(f"vortex potential residual {rel:.3e} exceeds {tol:.1e}")
    return VortexPotential(r=r, h=h, residual=rel, weights=cond)


def vortex_energy(nu, p: TFProfile, omega0: float, grid) -> float:
    """Discrete energy of a radial vorticity density nu given on ``grid``."""
    r = np.asarray(grid, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if not np.all(np.isfinite(nu)):
        raise DomainError("measure outside energy class: non-finite density")
    pot = vortex_potential(nu, p, r)
    dh = np.diff(pot.h)
    kinetic = 0.5 * np.sum(pot.weights * dh**2)
    vol = _cell_volumes(r)
    cost = cost_function(p, omega0)
    local = np.sum(vol * (0.5 * p(r) * np.abs(nu) + cost.f_tf(r) * nu))
    total = 2 * np.pi * (kinetic + local)
    if not np.isfinite(total):
        raise DomainError("measure outside energy class")
    return float(total)


def half_cost_integral(vm: VorticityMeasure, mu=None) -> float:
    """(1/2) int H_TF mu over the plane, for the closed-form energy identity."""
    mu = vm.mu if mu is None else mu
    vol = _cell_volumes(vm.r)
    return float(np.pi * np.sum(vol * vm.h_tf * mu))


@dataclass(frozen=True)
class ObstacleSolution:
    """Exact minimizer of the discretized vortex energy (free-boundary problem)."""

    r: np.ndarray
    mu: np.ndarray
    h: np.ndarray
    energy: float
    iterations: int

    def support_radius(self):
        pos = np.nonzero(self.mu > 0)[0]
        return float(self.r[pos[-1]]) if pos.size else 0.0


def minimize_vortex_energy(p: TFProfile, omega0: float, grid=None) -> ObstacleSolution:
    """Minimize the discrete vortex energy over nonnegative radial densities.

    The minimizer's potential solves the obstacle problem h >= -H_TF,
    -div(rho^{-1} grad h) >= 0 with complementarity.  Primal-dual active set on the
    finite-volume system of ``vortex_potential``; in 1D the free boundary moves by
    about one cell per sweep, so up to one iteration per node is allowed.
    """
    r = radial_grid(p) if grid is None else np.asarray(grid, dtype=float)
    cost = cost_function(p, omega0)
    dr = r[1] - r[0]
    rh = r[:-1] + dr / 2
    cond = rh / p(rh) / dr
    vol = _cell_volumes(r)
    m = r.size - 1
    psi = -cost.h_tf(r)[:m]
    diag = np.zeros(m)
    diag += cond[:m]
    diag[1:] += cond[: m - 1]
    off = -cond[: m - 1]

    def apply(h):
        out = diag * h
        out[:-1] += off * h[1:]
        out[1:] += off * h[:-1]
        return out

    active = psi > 0
    h = np.zeros(m)
    lam = np.zeros(m)
    for it in range(1, m + 2):
        ab = np.zeros((3, m))
        ab[1] = np.where(active, 1.0, diag)
        ab[0, 1:] = np.where(active[:-1], 0.0, off)
        ab[2, :-1] = np.where(active[1:], 0.0, off)
        h = linalg.solve_banded((1, 1), ab, np.where(active, psi, 0.0))
        lam = apply(h)
        new_active = (lam + diag * (psi - h)) > 0
        if np.array_equal(new_active, active):
            break
        active = new_active
    else:
        raise ConvergenceError("active-set iteration did not settle")
    mu = np.zeros(r.size)
    mu[:m] = np.where(active, np.clip(lam, 0.0, None), 0.0) / vol[:m]
    return ObstacleSolution(r=r, mu=mu, h=np.append(h, 0.0),
                            energy=vortex_energy(mu, p, omega0, r), iterations=it)
