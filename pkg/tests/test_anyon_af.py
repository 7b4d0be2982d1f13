import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import eigh_tridiagonal

from meanfield_lab import DomainError
from meanfield_lab.anyon_af import (
    AFFunctional,
    AFParams,
    GaugeOperator,
    Grid2D,
    GridField2D,
    TrapPotential,
    af_energy,
    default_box,
    gauge_field,
    gradient_check,
    minimize_af,
    radial_anisotropy,
    smeared_log,
)

GRID = Grid2D(128, default_box())
SMALL = Grid2D(96, default_box())


def gaussian(grid, width=1.0):
    r = grid.radius
    return np.exp(-r**2 / (2 * width**2)) / (np.sqrt(np.pi) * width) + 0j


def random_trial(grid, rng):
    # smooth, non-vanishing modulus times a smooth random phase
    X, Y = grid.coords
    c = rng.standard_normal(8)
    env = np.exp(-0.5 * ((X - 0.3 * c[0]) ** 2 + (Y - 0.3 * c[1]) ** 2) / (1 + 0.2 * abs(c[2])))
    mod = env * (1 + 0.3 * np.tanh(c[3] * X + c[4] * Y))
    phase = c[5] * X + c[6] * Y + 0.5 * c[7] * X * Y
    u = mod * np.exp(1j * phase)
    return GridField2D(grid, u).normalized().u


# smeared logarithm

def test_smeared_log_outside_and_continuity():
    r = np.array([0.5, 1.0, 3.0])
    assert np.array_equal(smeared_log(0.5, r), np.log(r))
    R = 0.7
    assert smeared_log(R, np.array([R - 1e-12]))[0] == pytest.approx(np.log(R), abs=1e-11)
    assert np.array_equal(smeared_log(0.0, r), np.log(r))


def test_smeared_log_laplacian():
    R, h = 0.8, 1e-4
    r = np.linspace(0.1, 0.7, 13)
    f = lambda x: smeared_log(R, x)
    lap = (f(r + h) - 2 * f(r) + f(r - h)) / h**2 + (f(r + h) - f(r - h)) / (2 * h * r)
    assert np.allclose(lap, 2 * np.pi / (np.pi * R * R), rtol=1e-4)


def test_smeared_log_sentinel_and_errors():
    assert smeared_log(0.0, np.array([0.0]))[0] == -np.inf
    with pytest.raises(DomainError):
        smeared_log(-1.0, np.array([1.0]))


# gauge field

def test_zero_density_zero_field():
    A = gauge_field(np.zeros((GRID.n, GRID.n)), GRID, 0.3)
    assert np.all(A.Ax == 0) and np.all(A.Ay == 0)


@pytest.mark.parametrize("R", [0.0, 0.1])
def test_radial_gauss_law(R):
    rho = np.abs(gaussian(GRID)) ** 2
    A = gauge_field(rho, GRID, R)
    X, Y = GRID.coords
    r = GRID.radius
    band = (r > 0.5) & (r < 2)
    mass = 1 - np.exp(-r**2)  # mass of e^{-r^2}/π inside radius r
    assert np.max(np.abs(np.hypot(A.Ax, A.Ay)[band] * r[band] / mass[band] - 1)) < 0.01
    # purely azimuthal
    radial_part = (A.Ax * X + A.Ay * Y)[band] / r[band]
    assert np.max(np.abs(radial_part)) < 1e-8


@pytest.mark.parametrize("R", [0.5, 0.25, 0.1])
def test_curl_identity(R):
    X, Y = GRID.coords
    rho = np.exp(-X**2 / 0.5 - (Y - 0.3) ** 2 / 0.9)
    op = GaugeOperator(GRID, R)
    A = gauge_field(rho, GRID, R, op)
    ref = 2 * np.pi * op.smeared_density(rho)
    inner = np.s_[2:-2, 2:-2]
    err = np.linalg.norm(A.curl()[inner] - ref[inner]) / np.linalg.norm(ref[inner])
    assert err <= 1e-3
    assert np.max(np.abs(A.divergence())) <= 1e-4 * np.max(np.abs(A.curl()))


def test_curl_identity_grid_converges():
    errs = []
    for n in (48, 64, 96):
        g = Grid2D(n, default_box())
        rho = np.abs(gaussian(g, 0.8)) ** 2
        op = GaugeOperator(g, 0.3)
        A = gauge_field(rho, g, 0.3, op)
        ref = 2 * np.pi * op.smeared_density(rho)
        errs.append(np.linalg.norm((A.curl() - ref)[2:-2, 2:-2]) / np.linalg.norm(ref[2:-2, 2:-2]))
    assert errs[0] > errs[1] > errs[2]


def test_density_touching_boundary_rejected():
    rho = np.ones((GRID.n, GRID.n))
    with pytest.raises(DomainError):
        gauge_field(rho, GRID, 0.2)


def test_disc_kernel_matches_direct_quadrature():
    # A at one point from direct summation of the smeared kernel against the grid density
    R = 0.5
    rho = np.abs(gaussian(GRID)) ** 2
    A = gauge_field(rho, GRID, R)
    X, Y = GRID.coords
    i, j = 80, 70
    dx, dy = X[i, j] - X, Y[i, j] - Y
    r2 = np.maximum(dx * dx + dy * dy, R * R)
    Ax = GRID.h**2 * np.sum(-dy / r2 * rho)
    Ay = GRID.h**2 * np.sum(dx / r2 * rho)
    assert (A.Ax[i, j], A.Ay[i, j]) == pytest.approx((Ax, Ay), rel=2e-3)


# energy

def test_harmonic_energy():
    E = af_energy(GridField2D(GRID, gaussian(GRID)), AFParams(0.0, 0.5))
    assert E == pytest.approx(2.0, rel=5e-3)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_real_field_identity(beta):
    u = GridField2D(GRID, gaussian(GRID, 1.2)).normalized().u.real.astype(complex)
    fun = AFFunctional(GRID, AFParams(beta, 0.3))
    fun0 = AFFunctional(GRID, AFParams(0.0, 0.3))
    assert fun.energy(u) == pytest.approx(fun0.energy(u) + fun.magnetic_term(u), abs=1e-10)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_diamagnetic_inequality(beta):
    rng = np.random.default_rng(int(beta * 10))
    fun = AFFunctional(GRID, AFParams(beta, 0.3))
    fun0 = AFFunctional(GRID, AFParams(0.0, 0.3))
    for _ in range(20):
        u = random_trial(GRID, rng)
        assert fun.energy(u) >= fun0.energy(np.abs(u).astype(complex))


@settings(max_examples=10, deadline=None)
@given(beta=st.sampled_from([-2.0, 0.5, 1.0, 3.0]), R=st.sampled_from([0.0, 0.1, 0.5]), seed=st.integers(0, 1000))
def test_gradient_matches_finite_differences(beta, R, seed):
    rng = np.random.default_rng(seed)
    fun = AFFunctional(SMALL, AFParams(beta, R))
    u = random_trial(SMALL, rng)
    du = (rng.standard_normal(u.shape) + 1j * rng.standard_normal(u.shape)) * np.abs(u)
    assert gradient_check(fun, u, du, eps=1e-5) <= 1e-5


def test_field_validation():
    with pytest.raises(DomainError):
        GridField2D(GRID, np.ones((3, 3)))
    with pytest.raises(DomainError):
        af_energy(GridField2D(GRID, np.ones((GRID.n, GRID.n))), AFParams(1.0, 0.2))
    with pytest.raises(DomainError):
        Grid2D(7, 1.0)


def test_params():
    p = AFParams.from_anyons(0.01, 101, 0.2)
    assert p.beta == pytest.approx(1.0, abs=1e-15)
    assert TrapPotential.parse("harmonic").s == 2.0
    assert TrapPotential.parse("power:4").s == 4.0
    with pytest.raises(DomainError):
        TrapPotential.parse("box")
    with pytest.raises(DomainError):
        AFParams(1.0, -0.1)


def test_default_box_decay():
    L = default_box()
    assert np.exp(-(L - 1) ** 2 / 2) < 1e-8
    assert default_box(4.0) < L


# minimization

@pytest.fixture(scope="module")
def minima():
    out = {}
    for beta in (0.0, 0.5, -0.5, 1.0, 2.0, -2.0):
        out[beta] = minimize_af(AFParams(beta, 0.25), SMALL, restarts=2, seed=1)
    return out


def test_linear_ground_state(minima):
    res = minima[0.0]
    assert res.energy == pytest.approx(2.0, rel=1e-2)
    assert res.converged
    assert res.field.norm2 == pytest.approx(1.0, abs=1e-10)
    assert res.field.boundary_ratio() <= 1e-6


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_energy_above_bosonic(minima, beta):
    assert minima[beta].energy >= minima[0.0].energy
    assert minima[beta].gradient_residual <= 1e-5


@pytest.mark.parametrize("beta", [0.5, 2.0])
def test_even_in_beta(minima, beta):
    assert minima[beta].energy == pytest.approx(minima[-beta].energy, rel=1e-8)


def test_minimizer_is_radial(minima):
    assert radial_anisotropy(minima[2.0].field) <= 0.01


def test_energy_increases_with_beta(minima):
    assert minima[0.5].energy < minima[1.0].energy < minima[2.0].energy


def test_R_continuity():
    Es = [minimize_af(AFParams(1.0, R), SMALL).energy for R in (0.5, 0.25, 0.125)]
    jumps = np.abs(np.diff(Es))
    assert np.all(jumps < 0.05)
    assert jumps[1] < jumps[0]


def test_quartic_trap_radial_oracle():
    # lowest m = 0 eigenvalue of -f'' - f'/r + r^4 f by a symmetric finite-volume scheme
    n, rmax = 4000, 4.0
    dr = rmax / n
    rc = (np.arange(n) + 0.5) * dr
    re = np.arange(1, n + 1) * dr
    diag = (np.concatenate([[0], re[:-1]]) + re) / (rc * dr * dr) + rc**4
    diag[-1] = (re[-2] + 2 * re[-1]) / (rc[-1] * dr * dr) + rc[-1] ** 4
    off = -re[:-1] / (dr * dr * np.sqrt(rc[:-1] * rc[1:]))
    exact = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))[0][0]
    V = TrapPotential(4.0)
    res = minimize_af(AFParams(0.0, 0.25, V), Grid2D(96, default_box(4.0)))
    assert res.energy == pytest.approx(exact, rel=1e-3)


def test_minimization_requires_positive_R():
    with pytest.raises(DomainError):
        minimize_af(AFParams(1.0, 0.0), SMALL)
