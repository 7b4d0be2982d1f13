"""Half-line variational problems: the de Gennes constant, reduced 1D Ginzburg-Landau
profiles with curvature, and the zero-energy scattering length of a radial potential.

All 1D GL problems use the same vertex-centred P1 discretization on [0, T]: piecewise
linear f, trapezoid quadrature for the potential and nonlinear terms, natural (Neumann)
condition at t = 0 and f(T) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, linalg, optimize

from meanfield_lab.errors import ConvergenceError, DomainError

DEFAULT_T = 12.0
DEFAULT_SPACING = 1e-3
THETA0_SPACING = 2.5e-3
ALPHA_SCAN = (-5.0, 0.0, 51)


@dataclass(frozen=True)
class Profile1D:
    t: np.ndarray
    f: np.ndarray
    alpha: float

    @property
    def spacing(self):
        return float(self.t[1] - self.t[0])


@dataclass(frozen=True)
class GLParams:
    b: float
    k: float = 0.0
    eps: float = 1e-3
    c0: float = 2.0
    spacing: float = DEFAULT_SPACING
    t_max: float = DEFAULT_T  # domain length used when k == 0

    def __post_init__(self):
        if not self.eps > 0 or not self.c0 > 0:
            raise DomainError("eps and c0 must be positive")
        if not 1 < self.b < 1 / theta0()[0]:
            raise DomainError(f"b must lie in (1, 1/Theta0), got {self.b}")
        if self.eps * self.k * self.length >= 1:
            raise DomainError("eps*k*T must stay below 1 so the weight is positive")

    @property
    def length(self):
        if self.k == 0:
            return float(self.t_max)
        return float(self.c0 * abs(np.log(self.eps)))


def _grid(length, spacing):
    n = int(np.ceil(length / spacing))
    return np.linspace(0.0, length, n + 1)


def _trapezoid_weights(t):
    h = t[1] - t[0]
    w = np.full(t.size, h)
    w[0] = w[-1] = h / 2
    return w


# ---------------------------------------------------------------------------
# de Gennes constant

def _lowest_eigenvalue(alpha, t):
    # -f'' + (t+alpha)^2 f with lumped mass, symmetrized: M^{-1/2} K M^{-1/2}
    h = t[1] - t[0]
    m = t.size - 1  # drop the Dirichlet node
    mass = _trapezoid_weights(t)[:m]
    diag = np.full(m, 2 / h)
    diag[0] = 1 / h
    diag += mass * (t[:m] + alpha) ** 2
    off = np.full(m - 1, -1 / h)
    s = 1 / np.sqrt(mass)
    vals = linalg.eigh_tridiagonal(diag * s * s, off * s[:-1] * s[1:], select="i",
                                   select_range=(0, 0), eigvals_only=True)
    return float(vals[0])


def lowest_eigenvalue(alpha, length=DEFAULT_T, spacing=THETA0_SPACING):
    """lambda_1(alpha) of the shifted harmonic oscillator on the half-line."""
    return _lowest_eigenvalue(alpha, _grid(length, spacing))


def _theta0_on(t):
    lo, hi, n = ALPHA_SCAN
    scan = np.linspace(lo, hi, n)
    vals = [_lowest_eigenvalue(a, t) for a in scan]
    i = int(np.clip(np.argmin(vals), 1, n - 2))
    res = optimize.minimize_scalar(lambda a: _lowest_eigenvalue(a, t),
                                   bracket=(scan[i - 1], scan[i], scan[i + 1]),
                                   method="golden", tol=1e-10)
    return float(res.fun), float(res.x)


@lru_cache(maxsize=16)
def theta0(length=DEFAULT_T, spacing=THETA0_SPACING, tol=1e-5):
    """(Theta0, alpha0) = min over alpha of the lowest half-line eigenvalue.

    Computed at ``spacing`` and ``spacing / 2``; the finer value is returned after
    checking that refinement moved it by less than ``tol``.
    """
    if length < 10 or spacing > 1e-2:
        raise DomainError("theta0 needs T >= 10 and spacing <= 1e-2")
    coarse, _ = _theta0_on(_grid(length, spacing))
    fine, alpha = _theta0_on(_grid(length, spacing / 2))
    if abs(fine - coarse) > tol:
        raise ConvergenceError(f"Theta0 not grid-converged: {coarse} vs {fine}")
    return fine, alpha


# ---------------------------------------------------------------------------
# GL 1D functionals

class _GLProblem:
    """Discrete E_{k,alpha}[f] = f.K f + sum m_i (V_i f_i^2 + (f_i^4 - 2 f_i^2) / 2b)."""

    def __init__(self, b, ek, t):
        self.b, self.ek, self.t = b, ek, t
        h = t[1] - t[0]
        self.m = t.size - 1
        tm = t[:-1] + h / 2
        self.cond = (1 - ek * tm) / h  # stiffness weights per cell
        weight = 1 - ek * t
        self.mass = (_trapezoid_weights(t) * weight)[: self.m]
        self.weight = weight[: self.m]

    def potential(self, alpha):
        t = self.t[: self.m]
        return (t + alpha - 0.5 * self.ek * t**2) ** 2 / self.weight**2

    def _stiff(self, f):
        c = self.cond
        out = np.zeros_like(f)
        out += c[: self.m] * f
        out[1:] += c[: self.m - 1] * f[1:]
        out[:-1] -= c[: self.m - 1] * f[1:]
        out[1:] -= c[: self.m - 1] * f[:-1]
        return out

    def energy(self, f, pot):
        b = self.b
        return float(f @ self._stiff(f) + np.sum(self.mass * (pot * f**2 + (f**4 - 2 * f**2) / (2 * b))))

    def gradient(self, f, pot):
        return 2 * self._stiff(f) + 2 * self.mass * (pot * f + (f**3 - f) / self.b)

    def hessian_banded(self, f, pot):
        c = self.cond
        diag = c[: self.m].copy()
        diag[1:] += c[: self.m - 1]
        diag = 2 * diag + 2 * self.mass * (pot + (3 * f**2 - 1) / self.b)
        ab = np.zeros((2, self.m))
        ab[0, 1:] = -2 * c[: self.m - 1]
        ab[1] = diag
        return ab

    def minimize(self, alpha, f0, gtol=1e-9, max_iter=200):
        """Damped Newton; pure Newton steps once the decrement is small.

        The energy is a sum of O(1) terms that cancel, so near the minimizer its roundoff
        hides further decrease; there the iteration stops when the gradient stalls.
        """
        pot = self.potential(alpha)
        f = f0.copy()
        e = self.energy(f, pot)
        last_local = np.inf
        for it in range(max_iter):
            g = self.gradient(f, pot)
            gnorm = np.max(np.abs(g / self.mass))
            if gnorm < gtol:
                return e, f
            ab = self.hessian_banded(f, pot)
            shift = 0.0
            while True:
                try:
                    trial = ab.copy()
                    trial[1] += shift * self.mass
                    step = -linalg.solveh_banded(trial, g)
                    break
                except linalg.LinAlgError:
                    shift = max(2 * shift, 1e-3)
            slope = g @ step
            if shift == 0 and -slope < 1e-8 * (1e-2 + abs(e)):
                if gnorm >= last_local:
                    return e, f
                last_local = gnorm
                f = f + step
                e = self.energy(f, pot)
                continue
            tau = 1.0
            while True:
                e_new = self.energy(f + tau * step, pot)
                if e_new <= e + 1e-4 * tau * slope:
                    break
                tau /= 2
                if tau < 1e-12:
                    raise ConvergenceError(
                        f"GL line search stalled at alpha={alpha}: E={e}, |grad|={gnorm:.3e}, "
                        f"iteration {it}")
            f = f + tau * step
            e = e_new
        raise ConvergenceError(f"GL Newton did not converge at alpha={alpha}")


@dataclass(frozen=True)
class GLResult:
    energy: float
    profile: Profile1D
    params: GLParams


def _solve_fixed_alpha(problem, alpha, cache):
    f_init = cache.get("f")
    if f_init is None:
        f_init = np.exp(-problem.t[: problem.m] ** 2 / 2)
    e, f = problem.minimize(alpha, f_init)
    f = np.abs(f)
    if e < 0:  # keep the nontrivial branch as warm start
        cache["f"] = f
    return e, f


def minimize_gl1d(p: GLParams) -> GLResult:
    """Joint minimization over f >= 0 and alpha of E^1D_{k,alpha}."""
    t = _grid(p.length, p.spacing)
    problem = _GLProblem(p.b, p.eps * p.k, t)
    cache = {}
    lo, hi, n = ALPHA_SCAN
    scan = np.linspace(lo, hi, n)
    vals = [problem.minimize(a, np.exp(-t[: problem.m] ** 2 / 2))[0] for a in scan]
    i = int(np.clip(np.argmin(vals), 1, n - 2))
    if vals[i] >= 0:
        raise DomainError("no nontrivial GL minimizer on the alpha scan")
    _solve_fixed_alpha(problem, scan[i], cache)
    res = optimize.minimize_scalar(lambda a: _solve_fixed_alpha(problem, a, cache)[0],
                                   bracket=(scan[i - 1], scan[i], scan[i + 1]),
                                   method="golden", tol=1e-9)
    alpha = float(res.x)
    e, f = _solve_fixed_alpha(problem, alpha, cache)
    prof = Profile1D(t=t, f=np.append(f, 0.0), alpha=alpha)
    return GLResult(energy=e, profile=prof, params=p)


def quartic_integral(prof: Profile1D):
    return float(np.sum(_trapezoid_weights(prof.t) * prof.f**4))


def correction_energy(prof: Profile1D, b: float, T: float | None = None) -> float:
    """int_0^T t [ f'^2 + f^2 (-alpha (t + alpha) - 1/b + f^2 / 2b) ], same discretization."""
    t, f, a = prof.t, prof.f, prof.alpha
    if T is not None:
        keep = t <= T + 1e-12
        t, f = t[keep], f[keep]
    h = t[1] - t[0]
    tm = t[:-1] + h / 2
    kinetic = np.sum(tm * np.diff(f) ** 2 / h)
    local = np.sum(_trapezoid_weights(t) * t * f**2 * (-a * (t + a) - 1 / b + f**2 / (2 * b)))
    return float(kinetic + local)


@dataclass(frozen=True)
class CurvatureConstants:
    c1: float  # int f0^4
    c1_energy: float  # -2 b E0, independent evaluation
    c2: float  # (2/3) b f0(0)^2 - 2 b alpha0 E0
    c2_corr: float  # 2 b E^corr[f0]
    energy: float
    alpha0: float


def curvature_constants(b: float, spacing=DEFAULT_SPACING, t_max=DEFAULT_T) -> CurvatureConstants:
    res = minimize_gl1d(GLParams(b=b, spacing=spacing, t_max=t_max))
    prof, e0 = res.profile, res.energy
    a0 = prof.alpha
    return CurvatureConstants(
        c1=quartic_integral(prof),
        c1_energy=-2 * b * e0,
        c2=2 / 3 * b * prof.f[0] ** 2 - 2 * b * a0 * e0,
        c2_corr=2 * b * correction_energy(prof, b),
        energy=e0,
        alpha0=a0,
    )


# ---------------------------------------------------------------------------
# scattering length

@dataclass(frozen=True)
class RadialPotential:
    """Nonnegative radial potential w(r) supported in [0, r0].

    ``hard_core`` > 0 adds an infinite wall on [0, hard_core]; ``breaks`` lists radii
    where w is discontinuous (integration restarts there).
    """

    func: object
    r0: float
    hard_core: float = 0.0
    breaks: tuple = ()

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.r0, self.func(r), 0.0)

    def integral(self):
        """int_{R^3} w."""
        if self.hard_core > 0:
            return np.inf
        knots = sorted({0.0, *self.breaks, self.r0})
        return sum(integrate.quad(lambda r: 4 * np.pi * r * r * float(self.func(r)), a, c,
                                  epsabs=1e-13, epsrel=1e-12)[0]
                   for a, c in zip(knots[:-1], knots[1:]))


def hard_sphere(r0):
    return RadialPotential(func=lambda r: np.zeros_like(np.asarray(r, dtype=float)), r0=r0,
                           hard_core=r0)


def soft_ball(r0, v0):
    return RadialPotential(func=lambda r: np.full_like(np.asarray(r, dtype=float), v0), r0=r0)


def soft_ball_scattering_length(r0, v0):
    kappa = np.sqrt(v0 / 2)
    x = kappa * r0
    if x < 1e-4:  # series of r0 - tanh(x)/kappa, also covers kappa underflowing to 0
        return r0 * x * x * (1 / 3 - 2 * x * x / 15)
    return r0 - np.tanh(x) / kappa


def from_function(w3d, r0, n_probe=64, seed=0):
    """Wrap a function of 3D points as a RadialPotential after checking radial symmetry."""
    rng = np.random.default_rng(seed)
    r = rng.uniform(0, 1.5 * r0, n_probe)
    dirs = rng.standard_normal((n_probe, 2, 3))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    va = np.array([w3d(ri * d[0]) for ri, d in zip(r, dirs)])
    vb = np.array([w3d(ri * d[1]) for ri, d in zip(r, dirs)])
    if not np.allclose(va, vb, rtol=1e-10, atol=1e-12):
        raise DomainError("potential is not radial")
    e = np.array([1.0, 0.0, 0.0])
    return RadialPotential(func=np.vectorize(lambda s: w3d(s * e)), r0=r0)


@dataclass(frozen=True)
class ScatteringResult:
    a: float
    energy: float  # 8 pi a from the variational integral, for cross-checking


def scattering_length(w: RadialPotential, rtol=1e-12) -> ScatteringResult:
    """Solve -2u'' + w u = 0, u(0) = 0, and match u ~ c (r - a) beyond r0."""
    r0 = float(w.r0)
    if not r0 > 0:
        raise DomainError("range r0 must be positive")
    probe = np.linspace(0, r0, 2001)
    vals = np.asarray(w(probe), dtype=float)
    if not np.all(np.isfinite(vals)) or np.any(vals < 0):
        raise DomainError("w must be finite and nonnegative")
    start = float(w.hard_core)
    if start >= r0:
        return ScatteringResult(a=r0, energy=8 * np.pi * r0)
    knots = sorted({start, *[x for x in w.breaks if start < x < r0], r0})
    state = np.array([0.0, 1.0])
    pieces = []
    for lo, hi in zip(knots[:-1], knots[1:]):
        sol = integrate.solve_ivp(lambda r, y: [y[1], 0.5 * float(w.func(r)) * y[0]],
                                  (lo, hi), state, method="DOP853", rtol=rtol,
                                  atol=1e-14 * max(1.0, np.abs(state).max()), dense_output=True)
        if not sol.success:
            raise ConvergenceError(sol.message)
        pieces.append((lo, hi, sol.sol))
        state = sol.y[:, -1]
    u, du = state
    a = r0 - u / du

    # variational value with f = u / (r u'(r0)) inside, 1 - a/r outside
    def integrand(r, sol):
        y, dy = sol(r) / du
        if r == 0:
            return 0.0
        f = y / r
        fp = (dy * r - y) / r**2
        return 4 * np.pi * (2 * fp**2 + float(w.func(r)) * f**2) * r**2

    inside = sum(integrate.quad(integrand, lo, hi, args=(sol,), epsabs=1e-12, epsrel=1e-10,
                                limit=200)[0] for lo, hi, sol in pieces)
    return ScatteringResult(a=float(a), energy=float(inside + 8 * np.pi * a * a / r0))
