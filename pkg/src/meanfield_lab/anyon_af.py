"""Average-field functional for almost-bosonic extended anyons on a 2D grid.

E[u] = ∫ |(∇ + iβ A[|u|^2]) u|^2 + V |u|^2,  A[ρ] = ∇^⊥ w_R * ρ,  ∇^⊥ = (-∂_y, ∂_x),

with w_R the smeared logarithm. The field A is a free-space convolution computed on a grid
zero-padded to twice its size. The kernel is split as ∇^⊥(w_R - g_σ) + ∇^⊥ g_σ, where g_σ is the
potential of a normalized Gaussian of width σ: the first piece comes from the neutral charge
χ_R - G_σ and is applied as an exact Fourier multiplier, the second is a smooth kernel applied by
padded real-space convolution. Both pieces are linear maps ρ -> A, so their adjoints (needed for
the self-consistent part of the gradient) are exact.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as sfft
from scipy import special

from meanfield_lab.errors import ConvergenceError, DomainError

BOUNDARY_TOL = 1e-6


def smeared_log(R, r):
    """w_R(r) = log r for r >= R, log R + (r^2 - R^2)/(2R^2) inside; w_0 = log r."""
    r = np.asarray(r, dtype=float)
    if R < 0 or np.any(r < 0):
        raise DomainError("need R >= 0 and r >= 0")
    with np.errstate(divide="ignore"):
        out = np.log(r)
    if R > 0:
        inside = r < R
        out = np.where(inside, np.log(R) + (r * r - R * R) / (2 * R * R), out)
    return out


def disc_form_factor(k, R):
    """Fourier transform of the normalized disc indicator χ_R: 2 J1(kR)/(kR)."""
    x = np.asarray(k, dtype=float) * R
    out = np.ones_like(x)
    nz = x > 1e-8
    out[nz] = 2 * special.j1(x[nz]) / x[nz]
    out[~nz] = 1 - x[~nz] ** 2 / 8
    return out


@dataclass(frozen=True)
class Grid2D:
    """n x n grid on [-L, L)^2 with spacing h = 2L/n."""

    n: int
    L: float

    def __post_init__(self):
        if self.n < 8 or self.n % 2 or not self.L > 0:
            raise DomainError("need an even n >= 8 and L > 0")

    @property
    def h(self):
        return 2 * self.L / self.n

    @cached_property
    def coords(self):
        x = -self.L + self.h * np.arange(self.n)
        return np.meshgrid(x, x, indexing="ij")

    @cached_property
    def radius(self):
        X, Y = self.coords
        return np.hypot(X, Y)

    @cached_property
    def wavenumbers(self):
        k = 2 * np.pi * np.fft.fftfreq(self.n, self.h)
        k[self.n // 2] = 0.0  # drop the Nyquist mode so ∂ is anti-Hermitian and real-preserving
        return np.meshgrid(k, k, indexing="ij")

    def integrate(self, f):
        return float(np.real(np.sum(f)) * self.h**2)

    def deriv(self, u):
        kx, ky = self.wavenumbers
        U = np.fft.fft2(u)
        return np.fft.ifft2(1j * kx * U), np.fft.ifft2(1j * ky * U)


def default_box(s=2.0, amplitude=1e-8):
    """Half-width L such that exp(-r^{1+s/2}/(1+s/2)) < amplitude at r = L - 1.

    That is the WKB decay of the ground state of -Δ + r^s; for s = 2 this gives L ≈ 7.07.
    """
    p = 1 + s / 2
    return float((p * np.log(1 / amplitude)) ** (1 / p) + 1)


@dataclass
class GridField2D:
    grid: Grid2D
    u: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=complex)
        if self.u.shape != (self.grid.n, self.grid.n):
            raise DomainError("field shape does not match the grid")

    @property
    def norm2(self):
        return self.grid.integrate(np.abs(self.u) ** 2)

    def normalized(self):
        return GridField2D(self.grid, self.u / np.sqrt(self.norm2))

    @property
    def density(self):
        return np.abs(self.u) ** 2

    def boundary_ratio(self):
        a = np.abs(self.u)
        edge = max(a[0].max(), a[-1].max(), a[:, 0].max(), a[:, -1].max())
        return float(edge / a.max())

    def check_boundary(self, tol=BOUNDARY_TOL):
        if self.boundary_ratio() > tol:
            raise DomainError(f"field does not decay at the box boundary (ratio {self.boundary_ratio():.2e})")


@dataclass(frozen=True)
class TrapPotential:
    """V(x) = |x|^s (s > 0); 'harmonic' is s = 2."""

    s: float = 2.0

    def __post_init__(self):
        if not self.s > 0:
            raise DomainError("trap exponent must be positive")

    def __call__(self, r):
        return np.asarray(r) ** self.s

    @classmethod
    def parse(cls, spec):
        if spec == "harmonic":
            return cls(2.0)
        if isinstance(spec, str) and spec.startswith("power:"):
            return cls(float(spec.split(":", 1)[1]))
        raise DomainError(f"unknown potential {spec!r}")


@dataclass(frozen=True)
class AFParams:
    beta: float
    R: float
    V: TrapPotential = field(default_factory=TrapPotential)

    def __post_init__(self):
        if self.R < 0:
            raise DomainError("R must be non-negative")

    @classmethod
    def from_anyons(cls, alpha, N, R, V=None):
        """β = α (N - 1) for N anyons of statistics parameter α."""
        return cls(alpha * (N - 1), R, V or TrapPotential())


class GaugeOperator:
    """Linear map ρ -> A[ρ] = ∇^⊥ w_R * ρ on a grid, with its exact adjoint."""

    def __init__(self, grid: Grid2D, R: float, sigma=None):
        if R < 0:
            raise DomainError("R must be non-negative")
        self.grid, self.R = grid, R
        n, h = grid.n, grid.h
        m = 2 * n
        self.sigma = 3 * h if sigma is None else sigma
        kx, ky = np.meshgrid(2 * np.pi * np.fft.fftfreq(m, h), 2 * np.pi * np.fft.rfftfreq(m, h), indexing="ij")
        k2 = kx * kx + ky * ky
        chi = disc_form_factor(np.sqrt(k2), R)
        self._chi_hat = chi
        with np.errstate(divide="ignore", invalid="ignore"):
            near = 2 * np.pi * (chi - np.exp(-0.5 * self.sigma**2 * k2)) / k2
        near[0, 0] = 0.0
        # far part: ∇^⊥ g_σ = (-y, x)(1 - exp(-r^2/2σ^2))/r^2 sampled on wrapped offsets
        off = h * np.concatenate([np.arange(n), np.arange(-n, 0)])
        X, Y = np.meshgrid(off, off, indexing="ij")
        r2 = X * X + Y * Y
        with np.errstate(divide="ignore", invalid="ignore"):
            g = -np.expm1(-r2 / (2 * self.sigma**2)) / r2
        g[0, 0] = 0.0
        self._T = (1j * ky * near + h * h * sfft.rfft2(-Y * g),
                   -1j * kx * near + h * h * sfft.rfft2(X * g))

    def _forward(self, f):
        n = self.grid.n
        return sfft.rfft2(f, s=(2 * n, 2 * n))

    def _back(self, F):
        n = self.grid.n
        return sfft.irfft2(F, s=(2 * n, 2 * n))[:n, :n]

    def __call__(self, rho):
        F = self._forward(rho)
        return tuple(self._back(T * F) for T in self._T)

    def adjoint(self, Jx, Jy):
        """Σ_c T_c^* J_c with respect to the plain grid sum."""
        return self._back(np.conj(self._T[0]) * self._forward(Jx) + np.conj(self._T[1]) * self._forward(Jy))

    def smeared_density(self, rho):
        """ρ * χ_R computed spectrally (compact kernel, so the padded product is exact)."""
        return self._back(self._chi_hat * self._forward(rho))


def _check_density(grid, rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < -1e-14):
        raise DomainError("density must be non-negative")
    top = rho.max()
    if top > 0:
        edge = max(rho[0].max(), rho[-1].max(), rho[:, 0].max(), rho[:, -1].max())
        if edge > 1e-10 * top:
            raise DomainError("density touches the box boundary; enlarge L")
    return rho


@dataclass
class GaugeField2D:
    Ax: np.ndarray
    Ay: np.ndarray
    grid: Grid2D

    def _d(self, f, axis):
        """Fourth-order central difference along ``axis``; zero on the two outer rings."""
        h = self.grid.h
        n = f.shape[axis]
        out = np.zeros_like(f)

        def sl(off):
            s = [slice(2, -2), slice(2, -2)]
            s[axis] = slice(2 + off, n - 2 + off)
            return tuple(s)

        out[2:-2, 2:-2] = (-f[sl(2)] + 8 * f[sl(1)] - 8 * f[sl(-1)] + f[sl(-2)]) / (12 * h)
        return out

    def curl(self):
        return self._d(self.Ay, 0) - self._d(self.Ax, 1)

    def divergence(self):
        return self._d(self.Ax, 0) + self._d(self.Ay, 1)


def gauge_field(rho, grid: Grid2D, R, op: GaugeOperator | None = None) -> GaugeField2D:
    rho = _check_density(grid, rho)
    op = op or GaugeOperator(grid, R)
    Ax, Ay = op(rho)
    return GaugeField2D(Ax, Ay, grid)


class AFFunctional:
    """Energy and gradient of the average-field functional on a fixed grid."""

    def __init__(self, grid: Grid2D, params: AFParams):
        self.grid, self.p = grid, params
        self.op = GaugeOperator(grid, params.R)
        self.V = params.V(grid.radius)

    def _parts(self, u):
        beta = self.p.beta
        rho = np.abs(u) ** 2
        Ax, Ay = self.op(rho) if beta else (np.zeros_like(rho), np.zeros_like(rho))
        dx, dy = self.grid.deriv(u)
        Dx = dx + 1j * beta * Ax * u
        Dy = dy + 1j * beta * Ay * u
        return rho, Ax, Ay, Dx, Dy

    def energy(self, u):
        u = u.u if isinstance(u, GridField2D) else u
        rho, _, _, Dx, Dy = self._parts(u)
        return self.grid.integrate(np.abs(Dx) ** 2 + np.abs(Dy) ** 2 + self.V * rho)

    def energy_and_gradient(self, u):
        """Energy and G with dE = h^2 Re Σ conj(G) δu."""
        u = u.u if isinstance(u, GridField2D) else u
        beta = self.p.beta
        rho, Ax, Ay, Dx, Dy = self._parts(u)
        E = self.grid.integrate(np.abs(Dx) ** 2 + np.abs(Dy) ** 2 + self.V * rho)
        kx, ky = self.grid.wavenumbers
        div = np.fft.ifft2(1j * kx * np.fft.fft2(Dx) + 1j * ky * np.fft.fft2(Dy))
        G = 2 * (-div - 1j * beta * (Ax * Dx + Ay * Dy) + self.V * u)
        if beta:
            Jx = np.real(1j * u * np.conj(Dx))
            Jy = np.real(1j * u * np.conj(Dy))
            G = G + 4 * beta * u * self.op.adjoint(Jx, Jy)
        return E, G

    def magnetic_term(self, u):
        """β^2 ∫ |A|^2 |u|^2."""
        rho = np.abs(u) ** 2
        Ax, Ay = self.op(rho)
        return self.p.beta**2 * self.grid.integrate((Ax * Ax + Ay * Ay) * rho)


def af_energy(u: GridField2D, p: AFParams) -> float:
    u.check_boundary()
    return AFFunctional(u.grid, p).energy(u)


def gradient_check(fun: AFFunctional, u, du, eps=1e-5):
    """Relative gap between <G, δu> and the central difference of E."""
    _, G = fun.energy_and_gradient(u)
    analytic = fun.grid.h**2 * np.real(np.sum(np.conj(G) * du))
    numeric = (fun.energy(u + eps * du) - fun.energy(u - eps * du)) / (2 * eps)
    return abs(analytic - numeric) / max(abs(numeric), 1e-300)


@dataclass
class AFResult:
    energy: float
    field: GridField2D
    iterations: int
    converged: bool
    restarts: list  # (seed, energy, iterations) per start
    gradient_residual: float = float("nan")


def _initial_field(grid, seed):
    rng = np.random.default_rng(seed)
    X, Y = grid.coords
    env = np.exp(-0.5 * (X * X + Y * Y))
    if seed is None:
        return env.astype(complex)
    c = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    poly = 1 + 0.3 * (c[0] * X + c[1] * Y) + 0.1 * (c[2] * X * X + c[3] * X * Y + c[4] * Y * Y) + 0.1 * c[5]
    return env * poly


def _descend(fun: AFFunctional, u, tol, max_iter, window=50):
    """Preconditioned projected gradient steps with Barzilai-Borwein lengths.

    Steps are accepted under a non-monotone Armijo test against the worst of the last five
    energies, halving the step otherwise.
    """
    grid = fun.grid
    kx, ky = grid.wavenumbers
    precond = 1.0 / (1.0 + kx * kx + ky * ky)
    inner = lambda a, b: grid.h**2 * np.real(np.sum(np.conj(a) * b))
    u = u / np.sqrt(inner(u, u))
    E, G = fun.energy_and_gradient(u)
    history = [E]
    step = 0.5
    prev = None
    for it in range(1, max_iter + 1):
        G = G - inner(u, G) * u  # tangent to the unit sphere
        d = np.fft.ifft2(precond * np.fft.fft2(G))
        d = d - inner(u, d) * u
        slope = inner(G, d)
        if slope <= 1e-30:
            return u, E, it, True
        if prev is not None:
            s, y = u - prev[0], d - prev[1]
            sy = inner(s, y)
            if sy > 0:
                step = min(max(inner(s, s) / sy, 1e-4), 50.0)
        ref = max(history[-5:])
        trial = step
        while True:
            v = u - trial * d
            v = v / np.sqrt(inner(v, v))
            Ev = fun.energy(v)
            if Ev <= ref - 1e-4 * trial * slope:
                break
            trial *= 0.5
            if trial < 1e-14:
                if abs(E - min(history)) <= 1e-12 * abs(E):
                    return u, E, it, True
                raise ConvergenceError(f"line search failed at iteration {it}; energy trace {history[-5:]}")
        prev = (u, d)
        u = v
        E, G = fun.energy_and_gradient(u)
        history.append(E)
        if len(history) > window and max(history[-window - 1 : -window + 4]) - E < tol * abs(E):
            return u, E, it, True
    return u, E, max_iter, False


def minimize_af(p: AFParams, grid: Grid2D | None = None, tol=1e-10, seed=0, restarts=1,
                max_iter=5000, threads=1) -> AFResult:
    """Preconditioned projected gradient descent with normalization retraction.

    Stops when the energy decreases by less than tol (relative) over 50 iterations. Start 0 is
    a Gaussian; further starts are Gaussians times seeded random complex quadratics. Returns the
    lowest of all starts.
    """
    if not p.R > 0:
        raise DomainError("minimization requires R > 0")
    grid = grid or Grid2D(128, default_box(p.V.s))
    fun = AFFunctional(grid, p)
    seeds = [None] + [int(s) for s in np.random.SeedSequence(seed).generate_state(max(restarts - 1, 0))]

    def run(s):
        return _descend(fun, _initial_field(grid, s), tol, max_iter)

    if threads > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(threads) as ex:
            outs = list(ex.map(run, seeds))
    else:
        outs = [run(s) for s in seeds]
    best = int(np.argmin([o[1] for o in outs]))
    u, E, its, conv = outs[best]
    res_field = GridField2D(grid, u)
    res_field.check_boundary()
    rng = np.random.default_rng(seed)
    du = (rng.standard_normal(u.shape) + 1j * rng.standard_normal(u.shape)) * np.abs(u)
    resid = gradient_check(fun, u, du)
    summary = [(s, o[1], o[2]) for s, o in zip(seeds, outs)]
    return AFResult(E, res_field, its, conv, summary, resid)


def radial_anisotropy(field: GridField2D):
    """Relative L2 distance between the density and its angular average.

    The angular average is the shell mean on shells of width h/2, linearly interpolated in r.
    """
    rho = field.density.ravel()
    r = field.grid.radius.ravel()
    width = field.grid.h / 2
    idx = (r / width).astype(int)
    counts = np.bincount(idx)
    sums = np.bincount(idx, weights=rho)
    rsum = np.bincount(idx, weights=r)
    ok = counts > 0
    prof_r, prof = rsum[ok] / counts[ok], sums[ok] / counts[ok]
    radial = np.interp(r, prof_r, prof)
    return float(np.linalg.norm(rho - radial) / np.linalg.norm(rho))
