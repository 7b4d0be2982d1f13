"""Renormalized energy of periodic jellium configurations with smeared charges.

Conventions: w(x) = -log|x| in d=2 and 1/|x| in d=3, -Δw = c_d δ with c_2 = 2π, c_3 = 4π,
and D(f, g) = ∫∫ w(x - y) df(x) dg(y).

For a periodic configuration with cell Λ, points p with multiplicities N_p and background m,
the cell average of |E_η|^2 is exactly

    (c_d/|Λ|) [ Σ_{p≠q} N_p N_q G(p-q) + Σ N_p^2 (D_η + R0) + (Σ N_p)^2 c_d η^2 <|x|^2>_ρ / (d|Λ|) ]

whenever the smeared charges do not overlap. Here G is the zero-mean periodic Green function
(-ΔG = c_d(δ - 1/|Λ|)), R0 = lim_{x→0} G(x) - w(x), and D_η = D(δ^(η), δ^(η)). G and R0 are
evaluated by Ewald summation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from meanfield_lab.errors import DomainError

C_D = {2: 2 * np.pi, 3: 4 * np.pi}
EWALD_DIGITS = 6.0  # alpha * r_cut; erfc(6) ~ 2e-17, e^{-36} ~ 2e-16


def _w(r, d):
    return -np.log(r) if d == 2 else 1.0 / r


def _check_dim(d):
    if d not in (2, 3):
        raise DomainError("only d = 2 and d = 3 are supported")


@dataclass(frozen=True)
class SmearedCharge:
    """Smearing radius ``eta`` and radial profile ``profile(r)`` on [0, 1] (None = uniform ball).

    The profile is normalized against the d-dimensional volume element; it must be
    non-negative with unit integral.
    """

    eta: float
    profile: Callable | None = None

    def __post_init__(self):
        if not self.eta > 0:
            raise DomainError("eta must be positive")

    @property
    def is_ball(self):
        return self.profile is None

    def _shell(self, d):
        area = 2 * np.pi if d == 2 else 4 * np.pi
        return lambda r: area * r ** (d - 1) * self.profile(r)

    def check(self, d):
        if self.is_ball:
            return
        r = np.linspace(0, 1, 1001)
        if np.any(np.asarray(self.profile(r)) < 0):
            raise DomainError("profile must be non-negative")
        total = integrate.quad(self._shell(d), 0, 1, epsabs=1e-13, epsrel=1e-13)[0]
        if abs(total - 1) > 1e-8:
            raise DomainError(f"profile integrates to {total}, not 1")

    def enclosed(self, r, d):
        """Charge of the unit-radius profile inside radius r (r in [0, 1])."""
        if self.is_ball:
            return np.minimum(np.asarray(r, dtype=float), 1.0) ** d
        f = self._shell(d)
        return np.array([integrate.quad(f, 0, min(x, 1.0), epsabs=1e-13)[0] for x in np.atleast_1d(r)])

    def self_energy(self, d):
        """D(δ^(1), δ^(1)) = w(1) + ∫_0^1 Q(s)^2 s^{1-d} ds, Q the enclosed charge."""
        _check_dim(d)
        if self.is_ball:
            return 0.25 if d == 2 else 1.2
        g = lambda s: self.enclosed(s, d)[0] ** 2 * s ** (1 - d)
        return _w(1.0, d) + integrate.quad(g, 0, 1, epsabs=1e-12, limit=200)[0]

    def second_moment(self, d):
        """<|x|^2> under the unit-radius profile."""
        _check_dim(d)
        if self.is_ball:
            return d / (d + 2)
        f = self._shell(d)
        return integrate.quad(lambda r: r * r * f(r), 0, 1, epsabs=1e-13)[0]


def smeared_kernel(sc: SmearedCharge, d):
    """Radial f_η with -Δf_η = c_d(δ^(η) - δ) and f_η = 0 outside B(0, η)."""
    _check_dim(d)
    sc.check(d)
    eta = sc.eta
    if sc.is_ball:
        if d == 2:
            inner = lambda r: np.log(r / eta) - (r * r - eta * eta) / (2 * eta * eta)
        else:
            inner = lambda r: (3 * eta * eta - r * r) / (2 * eta**3) - 1.0 / r
    else:
        # f_η(r) = -∫_r^η (1 - Q(s/η)) s^{1-d} ds
        def inner(r):
            g = lambda s: (1 - sc.enclosed(s / eta, d)[0]) * s ** (1 - d)
            return np.array([-integrate.quad(g, x, eta, epsabs=1e-12)[0] for x in np.atleast_1d(r)])

    def f(r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape)
        m = r < eta
        if np.any(m):
            out[m] = inner(r[m])
        return out

    return f


def kappa_constants(sc: SmearedCharge, d):
    """(κ_d, γ_2); γ_2 is 0 in d = 3 and κ_2 = c_2."""
    _check_dim(d)
    sc.check(d)
    D = sc.self_energy(d)
    if d == 2:
        return C_D[2], C_D[2] * D
    return C_D[3] * D, 0.0


@dataclass
class PeriodicChargeConfig:
    """Points (cartesian, one cell) with integer multiplicities in a periodic lattice.

    ``basis`` rows are the lattice vectors.
    """

    basis: np.ndarray
    points: np.ndarray
    multiplicities: np.ndarray | None = None
    m: float | None = None

    def __post_init__(self):
        self.basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        d = self.basis.shape[0]
        _check_dim(d)
        if self.basis.shape != (d, d):
            raise DomainError("basis must be a d x d matrix")
        self.points = np.asarray(self.points, dtype=float).reshape(-1, d)
        if self.multiplicities is None:
            self.multiplicities = np.ones(len(self.points), dtype=np.int64)
        mult = np.asarray(self.multiplicities)
        if mult.shape != (len(self.points),) or np.any(mult < 1) or np.any(mult != np.round(mult)):
            raise DomainError("multiplicities must be positive integers, one per point")
        self.multiplicities = mult.astype(np.int64)
        vol = self.volume
        if not vol > 1e-14:
            raise DomainError("degenerate lattice basis")
        total = int(self.multiplicities.sum())
        if self.m is None:
            self.m = total / vol
        elif abs(total - self.m * vol) > 1e-12 * max(total, 1):
            raise DomainError(f"cell is not neutral: {total} charges vs background {self.m * vol}")

    @property
    def d(self):
        return self.basis.shape[0]

    @property
    def volume(self):
        return abs(float(np.linalg.det(self.basis)))

    @property
    def reciprocal(self):
        return 2 * np.pi * np.linalg.inv(self.basis).T

    def wrap(self, x):
        """Minimal-image representative of displacement(s) x (fractional coords in [-1/2, 1/2))."""
        frac = np.asarray(x) @ np.linalg.inv(self.basis)
        frac -= np.floor(frac + 0.5)
        return frac @ self.basis

    def min_distance(self):
        """Smallest distance between distinct charges, periodic images included."""
        pts = self.points
        n = len(pts)
        d = self.d
        best = np.inf
        shifts = np.array(list(itertools.product(range(-2, 3), repeat=d))) @ self.basis
        for i in range(n):
            for j in range(n):
                diff = self.wrap(pts[i] - pts[j])[None, :] + shifts
                dist = np.linalg.norm(diff, axis=1)
                if i == j:
                    dist = dist[dist > 1e-12]
                best = min(best, dist.min())
        return float(best)

    def scaled(self, factor):
        """Same configuration with all lengths multiplied by ``factor``."""
        return PeriodicChargeConfig(self.basis * factor, self.points * factor, self.multiplicities.copy(),
                                    self.m / factor**self.d)


LATTICES = {
    "square": np.eye(2),
    "triangular": np.array([[1.0, 0.0], [0.5, np.sqrt(3) / 2]]),
    "cubic": np.eye(3),
    "bcc": 0.5 * np.array([[-1.0, 1, 1], [1, -1, 1], [1, 1, -1]]),
    "fcc": 0.5 * np.array([[0.0, 1, 1], [1, 0, 1], [1, 1, 0]]),
}


def lattice_config(name, m=1.0):
    """Bravais lattice with one point per primitive cell at density m."""
    try:
        base = LATTICES[name]
    except KeyError:
        raise DomainError(f"unknown lattice {name!r}") from None
    if not m > 0:
        raise DomainError("m must be positive")
    d = base.shape[0]
    scale = (1.0 / (m * abs(np.linalg.det(base)))) ** (1.0 / d)
    return PeriodicChargeConfig(base * scale, np.zeros((1, d)), m=m)


def supercell(cfg: PeriodicChargeConfig, reps):
    """Describe the same configuration with a cell enlarged ``reps[i]`` times along basis i."""
    reps = [int(r) for r in np.broadcast_to(reps, (cfg.d,))]
    shifts = np.array(list(itertools.product(*[range(r) for r in reps]))) @ cfg.basis
    pts = (cfg.points[None, :, :] + shifts[:, None, :]).reshape(-1, cfg.d)
    mult = np.tile(cfg.multiplicities, len(shifts))
    return PeriodicChargeConfig(cfg.basis * np.array(reps)[:, None], pts, mult, cfg.m)


def rotated(cfg: PeriodicChargeConfig, rotation):
    R = np.asarray(rotation, dtype=float)
    return PeriodicChargeConfig(cfg.basis @ R.T, cfg.points @ R.T, cfg.multiplicities.copy(), cfg.m)


def _lattice_vectors(basis, cutoff):
    """All lattice vectors of norm < cutoff."""
    # |n_i| <= cutoff * |column i of B^{-1}|
    inv = np.linalg.inv(basis)
    bound = np.ceil(cutoff * np.linalg.norm(inv, axis=0)).astype(int)
    grids = np.meshgrid(*[np.arange(-b, b + 1) for b in bound[1:]], indexing="ij")
    rest = np.stack([g.ravel() for g in grids], axis=1) @ basis[1:]
    out = []
    for n0 in range(-bound[0], bound[0] + 1):
        vecs = rest + n0 * basis[0]
        out.append(vecs[np.einsum("ij,ij->i", vecs, vecs) < cutoff * cutoff])
    return np.concatenate(out)


@dataclass
class EwaldSums:
    alpha: float
    real_vectors: np.ndarray
    recip_vectors: np.ndarray  # nonzero only
    d: int
    volume: float

    @property
    def n_real(self):
        return len(self.real_vectors)

    @property
    def n_recip(self):
        return len(self.recip_vectors)

    def _recip_weights(self):
        k2 = np.sum(self.recip_vectors**2, axis=1)
        return C_D[self.d] / self.volume * np.exp(-k2 / (4 * self.alpha**2)) / k2

    def _real_kernel(self, r):
        a = self.alpha
        if self.d == 2:
            return 0.5 * special.exp1(a * a * r * r)
        return special.erfc(a * r) / r

    def _neutral_const(self):
        return -C_D[self.d] / (4 * self.alpha**2 * self.volume)

    def green(self, x):
        """Zero-mean periodic Green function at minimal-image displacements x (shape (k, d))."""
        x = np.atleast_2d(x)
        out = np.empty(len(x))
        wts = self._recip_weights()
        for i, xi in enumerate(x):
            r = np.linalg.norm(xi[None, :] + self.real_vectors, axis=1)
            out[i] = (self._real_kernel(r).sum() + wts @ np.cos(self.recip_vectors @ xi)
                      + self._neutral_const())
        return out

    def regular_part(self):
        """R0 = lim_{x→0} G(x) - w(x)."""
        r = np.linalg.norm(self.real_vectors, axis=1)
        r = r[r > 0]
        a = self.alpha
        val = self._real_kernel(r).sum() + self._recip_weights().sum() + self._neutral_const()
        if self.d == 2:
            return val - 0.5 * np.euler_gamma - np.log(a)
        return val - 2 * a / np.sqrt(np.pi)


def ewald_sums(cfg: PeriodicChargeConfig, digits=EWALD_DIGITS):
    """Ewald splitting with alpha = sqrt(pi) |Λ|^{-1/d} and cutoffs alpha r_c = k_c / (2 alpha) = digits.

    Real-space terms are below erfc(digits) and reciprocal terms below exp(-digits^2),
    i.e. under 1e-15 relative for the default; both sums have O(digits^d) terms.
    """
    d, vol = cfg.d, cfg.volume
    alpha = np.sqrt(np.pi) / vol ** (1.0 / d)
    # displacements are minimal images, so add the cell diameter to the real cutoff
    diam = np.linalg.norm(cfg.basis, axis=1).sum()
    real = _lattice_vectors(cfg.basis, digits / alpha + diam)
    recip = _lattice_vectors(cfg.reciprocal, 2 * alpha * digits)
    recip = recip[np.linalg.norm(recip, axis=1) > 0]
    return EwaldSums(alpha, real, recip, d, vol)


@dataclass
class JelliumEnergy:
    W_eta: float
    field_energy: float  # cell average of |E_η|^2
    kappa_d: float
    gamma2: float
    eta: float
    m: float
    diagnostics: dict = field(default_factory=dict)


def _renormalization(cfg, sc):
    d = cfg.d
    kappa, gamma2 = kappa_constants(sc, d)
    return cfg.m * (kappa * _w(sc.eta, d) + gamma2), kappa, gamma2


def _check_admissible(cfg, sc):
    sc.check(cfg.d)
    dmin = cfg.min_distance()
    if not sc.eta < 0.5 * dmin:
        raise DomainError(f"smeared charges overlap: eta={sc.eta} vs half minimal distance {0.5 * dmin}")


def field_energy_eta(cfg: PeriodicChargeConfig, sc: SmearedCharge) -> JelliumEnergy:
    """W_η of a periodic configuration via Ewald summation."""
    _check_admissible(cfg, sc)
    d, vol, eta = cfg.d, cfg.volume, sc.eta
    ew = ewald_sums(cfg)
    N = cfg.multiplicities.astype(float)
    pts = cfg.points
    n = len(pts)
    pair = 0.0
    if n > 1:
        iu, ju = np.triu_indices(n, 1)
        g = ew.green(cfg.wrap(pts[iu] - pts[ju]))
        pair = 2 * float(np.sum(N[iu] * N[ju] * g))
    R0 = ew.regular_part()
    D1 = sc.self_energy(d)
    D_eta = D1 - np.log(eta) if d == 2 else D1 / eta
    total = N.sum()
    c = C_D[d]
    smear = total**2 * c * eta * eta * sc.second_moment(d) / (d * vol)
    energy = c / vol * (pair + np.sum(N**2) * (D_eta + R0) + smear)
    ren, kappa, gamma2 = _renormalization(cfg, sc)
    diag = {"alpha": ew.alpha, "n_real": ew.n_real, "n_recip": ew.n_recip, "regular_part": R0,
            "pair_sum": pair}
    return JelliumEnergy(energy - ren, energy, kappa, gamma2, eta, cfg.m, diag)


def _ball_form_factor(x, d):
    x = np.asarray(x, dtype=float)
    if d == 2:
        return 2 * special.j1(x) / x
    return 3 * (np.sin(x) - x * np.cos(x)) / x**3


def fourier_field_energy(cfg: PeriodicChargeConfig, sc: SmearedCharge, k_max=None, chunk=200000):
    """W_η by direct Parseval summation over the dual lattice (uniform-ball charges only).

    Cell average of |E_η|^2 = (c_d/|Λ|)^2 Σ_{k≠0} |S(k)|^2 ŝ(kη)^2 / |k|^2 with
    S(k) = Σ N_p e^{-ik·p}. Terms beyond k_max are added from the shell average of |S|^2
    (= Σ N_p^2) and the asymptotic mean of ŝ^2.
    """
    if not sc.is_ball:
        raise DomainError("the Parseval sum is implemented for uniform-ball charges only")
    _check_admissible(cfg, sc)
    d, vol, eta = cfg.d, cfg.volume, sc.eta
    if k_max is None:
        k_max = (400.0 if d == 2 else 60.0) / eta
    ks = _lattice_vectors(cfg.reciprocal, k_max)
    ks = ks[np.linalg.norm(ks, axis=1) > 0]
    N = cfg.multiplicities.astype(float)
    total = 0.0
    for s in range(0, len(ks), chunk):
        k = ks[s : s + chunk]
        phase = k @ cfg.points.T
        S2 = (np.cos(phase) @ N) ** 2 + (np.sin(phase) @ N) ** 2
        kn = np.linalg.norm(k, axis=1)
        total += np.sum(S2 * _ball_form_factor(kn * eta, d) ** 2 / kn**2)
    # tail: ∫_{|k|>k_max} dk |Λ|/(2π)^d Σ N_p^2 ŝ(kη)^2 / k^2, i.e. |S|^2 replaced by its shell
    # average; ŝ^2 is integrated exactly over 200 units past the cutoff, then by its mean envelope
    dens = vol / (2 * np.pi) ** d * np.sum(N**2)
    x0 = k_max * eta
    x1 = x0 + 200.0
    if d == 2:
        g = lambda x: _ball_form_factor(x, 2) ** 2 / x
        far = 4.0 / (3 * np.pi * x1**3)  # mean ŝ^2 = 4/(π x^3)
        tail = 2 * np.pi * dens * (integrate.quad(g, x0, x1, limit=2000)[0] + far)
    else:
        g = lambda x: _ball_form_factor(x, 3) ** 2
        far = 3.0 / (2 * x1**3) + 9.0 / (10 * x1**5)  # mean ŝ^2 = 9/(2x^4) + 9/(2x^6)
        tail = 4 * np.pi * dens / eta * (integrate.quad(g, x0, x1, limit=2000)[0] + far)
    c = C_D[d]
    energy = (c / vol) ** 2 * (total + tail)
    ren, kappa, gamma2 = _renormalization(cfg, sc)
    return JelliumEnergy(energy - ren, energy, kappa, gamma2, eta, cfg.m,
                         {"k_max": k_max, "n_terms": len(ks), "tail": (c / vol) ** 2 * tail})


@dataclass
class ScalingReport:
    lhs: float
    rhs: float
    difference: float
    m: float
    d: int


def scaling_check(cfg: PeriodicChargeConfig, sc: SmearedCharge, m_scale) -> ScalingReport:
    """Compare W_η at density m_scale * m with the rescaled unit-density value.

    ``cfg`` is first brought to unit density (E'), E is E' compressed to density m_scale,
    and W_η(E) is compared with m^{2-2/d} W_{η m^{1/d}}(E') (d = 3) or
    m (W_{η m^{1/2}}(E') - (κ_2/2) log m) (d = 2).
    """
    if not m_scale > 0:
        raise DomainError("m_scale must be positive")
    d = cfg.d
    unit = cfg.scaled(cfg.m ** (1.0 / d))
    dense = unit.scaled(m_scale ** (-1.0 / d))
    lhs = field_energy_eta(dense, sc).W_eta
    big = SmearedCharge(sc.eta * m_scale ** (1.0 / d), sc.profile)
    w_unit = field_energy_eta(unit, big).W_eta
    if d == 2:
        rhs = m_scale * (w_unit - C_D[2] / 2 * np.log(m_scale))
    else:
        rhs = m_scale ** (2 - 2.0 / d) * w_unit
    return ScalingReport(lhs, rhs, lhs - rhs, m_scale, d)
