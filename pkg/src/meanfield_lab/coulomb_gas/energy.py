"""Coulomb-gas Hamiltonian, radial equilibrium measures, charge deviations and bath-tub
energies.

Conventions: ``w(x) = -log|x|`` in 2D and ``1/|x|`` in 3D, with ``-Delta w = c_d delta``
(c_2 = 2 pi, c_3 = 4 pi).  The Hamiltonian sums w over *ordered* pairs, so each unordered
pair counts twice.  A mean-field functional ``int V mu + c D(mu, mu)`` with
``D(mu, mu) = int int w(x - y) dmu dmu`` has Euler-Lagrange equation
``V + 2 c (w * mu) = const`` on the support, hence density ``Delta V / (2 c c_d)`` there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from meanfield_lab.errors import DomainError

C_D = {2: 2 * np.pi, 3: 4 * np.pi}


def _check_d(d):
    if d not in C_D:
        raise DomainError(f"dimension must be 2 or 3, got {d}")


def pair_kernel(r, d):
    r = np.asarray(r, dtype=float)
    return -np.log(r) if d == 2 else 1.0 / r


@dataclass(frozen=True)
class ParticleConfiguration:
    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if pts.shape[0] < 1 or pts.shape[1] not in C_D:
            raise DomainError(f"expected an (n, 2) or (n, 3) array, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DomainError("non-finite coordinates")

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]


@dataclass(frozen=True)
class PowerLogPotential:
    """Radial potential V(x) = a |x|^s + b log|x|."""

    a: float = 1.0
    s: float = 2.0
    b: float = 0.0

    def __call__(self, x):
        r = np.linalg.norm(np.atleast_2d(x), axis=-1)
        out = self.a * r**self.s
        if self.b != 0:
            out = out + self.b * np.log(r)
        return out

    def check_confining(self):
        # V -> infinity (and V/2 - log|x| -> infinity in 2D) needs a > 0, s > 0; b > 0 would
        # make the origin a non-integrable attractor for large beta n, so it is excluded
        if not (self.a > 0 and self.s > 0 and self.b <= 0):
            raise DomainError(f"potential {self} is not in the confining class a>0, s>0, b<=0")


def hamiltonian(cfg: ParticleConfiguration, V=None) -> float:
    """H_n = sum over ordered pairs i != j of w(x_i - x_j) + n sum_i V(x_i)."""
    x = cfg.points
    diff = x[:, None, :] - x[None, :, :]
    r = np.sqrt(np.sum(diff**2, axis=-1))
    iu = np.triu_indices(cfg.n, 1)
    dist = r[iu]
    if np.any(dist == 0):
        raise DomainError("coincident points: pair interaction is singular")
    total = 2 * np.sum(pair_kernel(dist, cfg.d))
    if V is not None:
        total += cfg.n * np.sum(V(x))
    return float(total)


# ---------------------------------------------------------------------------
# equilibrium measures

@dataclass(frozen=True)
class EquilibriumMeasure:
    """Radial density on ``r`` (per unit volume), supported in [r_inner, r_outer].

    Closed-form measures carry ``coeff`` and ``power`` (density coeff * r^power on the
    support) and are evaluated exactly; numerical ones are interpolated on ``r``.
    """

    r: np.ndarray
    density: np.ndarray
    r_inner: float
    r_outer: float
    d: int
    coeff: float | None = None
    power: float = 0.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.coeff is not None:
            inside = (r >= self.r_inner) & (r <= self.r_outer)
            with np.errstate(divide="ignore", invalid="ignore"):
                val = self.coeff * np.where(r > 0, r, 1.0) ** self.power
            return np.where(inside, val, 0.0)
        return np.interp(r, self.r, self.density, right=0.0)

    def cumulative_mass(self, radius):
        """Mass inside the ball of the given radius."""
        radius = np.asarray(radius, dtype=float)
        d = self.d
        if self.coeff is not None:
            area = 2 * np.pi if d == 2 else 4 * np.pi
            q = self.power + d
            x = np.clip(radius, self.r_inner, self.r_outer)
            return area * self.coeff * (x**q - self.r_inner**q) / q
        shell = (2 * np.pi * self.r) if d == 2 else (4 * np.pi * self.r**2)
        f = shell * self.density
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(self.r))])
        return np.interp(radius, self.r, cum)

    def mass(self):
        return float(self.cumulative_mass(max(self.r_outer, self.r[-1])))


def _closed_form(coeff, power, r_in, r_out, d, grid):
    r = np.linspace(0.0, r_out * 1.5, 3001) if grid is None else np.asarray(grid, dtype=float)
    m = EquilibriumMeasure(r=r, density=np.zeros_like(r), r_inner=float(r_in),
                           r_outer=float(r_out), d=d, coeff=float(coeff), power=float(power))
    object.__setattr__(m, "density", m(r))
    return m


def piecewise_constant_measure(edges, density, d=2, r_inner=0.0, r_outer=None):
    """Measure with constant density on each shell [edges[k], edges[k+1]]."""
    edges = np.asarray(edges, dtype=float)
    grid = np.repeat(edges, 2)[1:-1]
    vals = np.repeat(np.asarray(density, dtype=float), 2)
    r_outer = float(edges[-1]) if r_outer is None else float(r_outer)
    return EquilibriumMeasure(r=grid, density=vals, r_inner=float(r_inner), r_outer=r_outer, d=d)


def equilibrium_measure_radial(V: PowerLogPotential, d=2, coef=1.0, grid=None) -> EquilibriumMeasure:
    """Minimizer of int V mu + coef * D(mu, mu) over probability measures.

    Implemented classes: V = a r^s (d = 2, 3) and V = a r^2 + b log r with b <= 0 (d = 2).
    The density is Delta V / (2 coef c_d); the support follows from Gauss's law.
    """
    _check_d(d)
    a, s, b = V.a, V.s, V.b
    if not (a > 0 and coef > 0):
        raise DomainError("need a > 0 and a positive interaction coefficient")
    cd = C_D[d]
    area = 2 * np.pi if d == 2 else 4 * np.pi
    if b == 0:
        if s <= 0:
            raise DomainError("power must be positive")
        # Delta r^s = s (s + d - 2) r^{s-2}; unit mass fixes the radius
        k = a * s * (s + d - 2) / (2 * coef * cd)
        q = s + d - 2
        radius = (q / (area * k)) ** (1 / q)
        return _closed_form(k, s - 2, 0.0, radius, d, grid)
    if d != 2 or s != 2 or b > 0:
        raise DomainError("log term only implemented for V = a r^2 + b log r, b <= 0, d = 2")
    value = 4 * a / (2 * coef * cd)
    gamma = -b / (2 * a)  # V'(R1) = 0  <=>  R1^2 = gamma
    r_in = np.sqrt(gamma)
    r_out = np.sqrt(gamma + 1 / (np.pi * value))
    return _closed_form(value, 0.0, r_in, r_out, d, grid)


def quasihole_electrostatic(N, m, ell, grid=None) -> EquilibriumMeasure:
    """Zero-temperature minimizer of int V_m rho + ell D(rho, rho), V_m = r^2 - 2 (m/N) log r."""
    return equilibrium_measure_radial(PowerLogPotential(1.0, 2.0, -2.0 * m / N), 2, ell, grid)


# ---------------------------------------------------------------------------
# discretized radial mean-field energy (ring model)

def ring_kernel(r, d):
    """Interaction between uniform spheres/rings of radii r_i, r_j: w(max(r_i, r_j))."""
    rmax = np.maximum(r[:, None], r[None, :])
    return pair_kernel(rmax, d)


def radial_mf_energy(masses, r, V, d=2, coef=1.0):
    """sum_k q_k V(r_k) + coef sum_{k,l} q_k q_l w(max(r_k, r_l)) for shell masses q."""
    q = np.asarray(masses, dtype=float)
    vr = V(np.column_stack([r, np.zeros((r.size, d - 1))]))
    return float(q @ vr + coef * q @ ring_kernel(r, d) @ q)


def shell_masses(measure: EquilibriumMeasure, edges):
    return np.diff(measure.cumulative_mass(edges))


# ---------------------------------------------------------------------------
# charge deviation

def mass_in_ball(measure: EquilibriumMeasure, center, radius, n_rho=200, n_ang=256):
    """int_{B(center, radius)} mu, by Gauss-Legendre quadrature around the center."""
    center = np.asarray(center, dtype=float)
    c = float(np.linalg.norm(center))
    if c == 0:
        return float(measure.cumulative_mass(radius))
    xr, wr = np.polynomial.legendre.leggauss(n_rho)
    rho = 0.5 * radius * (xr + 1)
    wr = 0.5 * radius * wr
    if measure.d == 2:
        theta = 2 * np.pi * (np.arange(n_ang) + 0.5) / n_ang
        dist = np.sqrt(c * c + rho[:, None] ** 2 + 2 * c * rho[:, None] * np.cos(theta))
        vals = measure(dist).mean(axis=1) * 2 * np.pi * rho
    else:
        xc, wc = np.polynomial.legendre.leggauss(n_ang)
        dist = np.sqrt(c * c + rho[:, None] ** 2 + 2 * c * rho[:, None] * xc)
        vals = (measure(dist) @ wc) * 2 * np.pi * rho**2
    return float(vals @ wr)


def charge_deviation(sample: ParticleConfiguration, mu0: EquilibriumMeasure, x, R) -> float:
    """D(x, R) = #{points in B(x, R)} - n mu0(B(x, R))."""
    if not R > 0:
        raise DomainError("radius must be positive")
    x = np.asarray(x, dtype=float)
    count = np.sum(np.linalg.norm(sample.points - x, axis=1) <= R)
    return float(count - sample.n * mass_in_ball(mu0, x, R))


# ---------------------------------------------------------------------------
# bath-tub

@dataclass(frozen=True)
class BathtubResult:
    energy: float
    rho: np.ndarray
    level: float


def bathtub(V, cap, mass=1.0, volumes=None) -> BathtubResult:
    """Minimize sum V rho vol subject to 0 <= rho <= cap and sum rho vol = mass.

    Cells are filled in increasing order of V; equal values are filled in index order.
    """
    V = np.asarray(V, dtype=float).ravel()
    vol = np.ones_like(V) if volumes is None else np.asarray(volumes, dtype=float).ravel()
    if np.any(vol <= 0):
        raise DomainError("cell volumes must be positive")
    order = np.argsort(V, kind="stable")
    rho = np.zeros_like(V)
    if np.isinf(cap):
        i = order[0]
        rho[i] = mass / vol[i]
        return BathtubResult(energy=float(mass * V[i]), rho=rho, level=float(V[i]))
    if cap * vol.sum() < mass * (1 - 1e-12):
        raise DomainError(f"infeasible cap: cap * volume = {cap * vol.sum()} < mass {mass}")
    cell_mass = cap * vol[order]
    cum = np.cumsum(cell_mass)
    k = int(np.searchsorted(cum, mass))
    k = min(k, V.size - 1)
    rho[order[:k]] = cap
    left = mass - (cum[k - 1] if k > 0 else 0.0)
    rho[order[k]] = left / vol[order[k]]
    return BathtubResult(energy=float(np.sum(V * rho * vol)), rho=rho, level=float(V[order[k]]))


def bathtub_radial(Vr, cap, r_max, n_shells=20000, mass=1.0, d=2):
    """Bath-tub energy for a radial potential, with V averaged exactly over each shell."""
    edges = np.linspace(0.0, r_max, n_shells + 1)
    xg, wg = np.polynomial.legendre.leggauss(8)
    lo, hi = edges[:-1], edges[1:]
    nodes = 0.5 * (hi - lo)[:, None] * (xg + 1) + lo[:, None]
    shell = (2 * np.pi * nodes) if d == 2 else (4 * np.pi * nodes**2)
    weights = 0.5 * (hi - lo)[:, None] * wg * shell
    vol = weights.sum(axis=1)
    vbar = (weights * Vr(nodes)).sum(axis=1) / vol
    res = bathtub(vbar, cap, mass, vol)
    return res, 0.5 * (lo + hi)


def optimal_quasihole_degree(omega, k, N) -> int:
    """m_opt = 0 if omega >= -2kN, else the nearest non-negative integer to -omega/(2k) - N."""
    if not k > 0 or N < 1:
        raise DomainError("need k > 0 and N >= 1")
    if omega >= -2 * k * N:
        return 0
    return max(0, int(np.floor(-omega / (2 * k) - N + 0.5)))


def gaussian_kernel_ring(r, rj, h, d=2):
    """Angle-averaged Gaussian kernel of width h centred at radius rj, evaluated at radius r."""
    if d == 2:
        z = r * rj / h**2
        return np.exp(-((r - rj) ** 2) / (2 * h * h)) * special.i0e(z) / (2 * np.pi * h * h)
    # 3D: (2 pi h^2)^{-3/2} average over the sphere of exp(-|x - y|^2 / 2h^2)
    z = r * rj / h**2
    with np.errstate(divide="ignore", invalid="ignore"):
        avg = np.where(z > 1e-8, (1 - np.exp(-2 * z)) / (2 * np.where(z > 0, z, 1.0)), 1.0)
    return np.exp(-((r - rj) ** 2) / (2 * h * h)) * avg / (2 * np.pi * h * h) ** 1.5
