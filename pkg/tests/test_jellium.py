import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from meanfield_lab import DomainError
from meanfield_lab.jellium import (
    C_D,
    PeriodicChargeConfig,
    SmearedCharge,
    field_energy_eta,
    fourier_field_energy,
    kappa_constants,
    lattice_config,
    rotated,
    scaling_check,
    smeared_kernel,
    supercell,
)

PARABOLIC_2D = lambda r: 2 / np.pi * (1 - r * r)  # unit mass against 2πr dr
PARABOLIC_3D = lambda r: 15 / (8 * np.pi) * (1 - r * r)  # unit mass against 4πr^2 dr


def _radial_laplacian(f, r, d, h=1e-5):
    f0, fp, fm = f(r), f(r + h), f(r - h)
    return (fp - 2 * f0 + fm) / h**2 + (d - 1) / r * (fp - fm) / (2 * h)


# smeared kernel

@pytest.mark.parametrize("d", [2, 3])
def test_kernel_solves_poisson(d):
    eta = 0.3
    f = smeared_kernel(SmearedCharge(eta), d)
    r = np.linspace(0.05, 0.28, 12)
    vol = np.pi * eta**2 if d == 2 else 4 / 3 * np.pi * eta**3
    assert np.allclose(-_radial_laplacian(f, r, d), C_D[d] / vol, rtol=1e-4)
    # vanishes, with zero slope, at and beyond eta
    assert f(np.array([eta, 0.5, 2.0])) == pytest.approx(0.0, abs=1e-15)
    assert (f(np.array([eta - 1e-6]))[0]) == pytest.approx(0.0, abs=1e-10)


def test_kernel_closed_forms():
    eta = 0.2
    r = np.array([0.05, 0.1, 0.15])
    f2 = smeared_kernel(SmearedCharge(eta), 2)(r)
    assert np.allclose(f2, np.log(r / eta) - (r * r - eta * eta) / (2 * eta * eta), atol=1e-15)
    f3 = smeared_kernel(SmearedCharge(eta), 3)(r)
    assert np.allclose(f3, (3 * eta * eta - r * r) / (2 * eta**3) - 1 / r, atol=1e-12)
    # the smeared potential is less singular than the point potential
    assert np.all(f2 < 0) and np.all(f3 < 0)


@pytest.mark.parametrize("d,prof", [(2, PARABOLIC_2D), (3, PARABOLIC_3D)])
def test_kernel_general_profile(d, prof):
    eta = 0.4
    f = smeared_kernel(SmearedCharge(eta, prof), d)
    r = np.linspace(0.08, 0.36, 8)
    dens = prof(r / eta) / eta**d
    assert np.allclose(-_radial_laplacian(f, r, d, h=1e-4), C_D[d] * dens, rtol=1e-3)


# self-energy constants

def _double_integral_self_energy(d, prof=None):
    # angular average of w(x - y) over spheres is w(max(|x|, |y|))
    area = 2 * np.pi if d == 2 else 4 * np.pi
    dens = (lambda r: d * r ** (d - 1)) if prof is None else (lambda r: area * r ** (d - 1) * prof(r))
    w = (lambda r: -np.log(r)) if d == 2 else (lambda r: 1 / r)
    val = integrate.dblquad(lambda s, r: dens(r) * dens(s) * w(max(r, s)), 0, 1, 0, 1, epsabs=1e-11)[0]
    return val


def test_kappa_3d_ball():
    kappa, gamma2 = kappa_constants(SmearedCharge(1.0), 3)
    assert _double_integral_self_energy(3) == pytest.approx(1.2, abs=1e-6)
    assert kappa == pytest.approx(4 * np.pi * 1.2, abs=1e-12)
    assert gamma2 == 0.0


def test_kappa_2d_ball():
    kappa, gamma2 = kappa_constants(SmearedCharge(1.0), 2)
    assert kappa == 2 * np.pi
    assert _double_integral_self_energy(2) == pytest.approx(0.25, abs=1e-6)
    assert gamma2 == pytest.approx(np.pi / 2, abs=1e-12)


def test_3d_self_energy_fourier_oracle():
    x = np.linspace(1e-6, 4000, 4_000_001)
    s = 3 * (np.sin(x) - x * np.cos(x)) / x**3
    assert 2 / np.pi * np.trapezoid(s * s, x) == pytest.approx(1.2, abs=1e-6)


@pytest.mark.parametrize("d,prof", [(2, PARABOLIC_2D), (3, PARABOLIC_3D)])
def test_general_profile_self_energy(d, prof):
    sc = SmearedCharge(1.0, prof)
    assert sc.self_energy(d) == pytest.approx(_double_integral_self_energy(d, prof), abs=1e-7)


def test_invalid_profile_rejected():
    with pytest.raises(DomainError):
        kappa_constants(SmearedCharge(1.0, lambda r: np.ones_like(r)), 2)
    with pytest.raises(DomainError):
        kappa_constants(SmearedCharge(1.0, lambda r: 4 / np.pi * (0.5 - r)), 2)
    with pytest.raises(DomainError):
        SmearedCharge(0.0)


# field energy

@pytest.mark.parametrize("name,eta", [("square", 0.1), ("triangular", 0.05), ("cubic", 0.1), ("fcc", 0.15)])
def test_ewald_matches_parseval(name, eta):
    cfg = lattice_config(name)
    sc = SmearedCharge(eta)
    assert field_energy_eta(cfg, sc).W_eta == pytest.approx(fourier_field_energy(cfg, sc).W_eta, abs=1e-6)


def test_ewald_matches_parseval_multipoint_cell():
    basis = np.array([[2.0, 0.0], [0.3, 1.5]])
    pts = np.array([[0.1, 0.2], [1.2, 0.4], [0.7, 1.1]])
    cfg = PeriodicChargeConfig(basis, pts, [1, 2, 1])
    sc = SmearedCharge(0.08)
    assert field_energy_eta(cfg, sc).W_eta == pytest.approx(fourier_field_energy(cfg, sc).W_eta, abs=1e-6)


@pytest.mark.parametrize("eta", [0.1, 0.05])
def test_triangular_beats_square(eta):
    sc = SmearedCharge(eta)
    assert field_energy_eta(lattice_config("triangular"), sc).W_eta < field_energy_eta(lattice_config("square"), sc).W_eta


def test_supercell_invariance():
    for name, reps in (("triangular", (2, 3)), ("square", (2, 2)), ("bcc", (1, 2, 2))):
        cfg = lattice_config(name)
        sc = SmearedCharge(0.1)
        assert field_energy_eta(supercell(cfg, reps), sc).W_eta == pytest.approx(
            field_energy_eta(cfg, sc).W_eta, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(theta=st.floats(0, 2 * np.pi), seed=st.integers(0, 1000))
def test_rotation_and_relabel_invariance(theta, seed):
    rng = np.random.default_rng(seed)
    basis = np.array([[1.5, 0.0], [0.4, 1.2]])
    pts = np.array([[0.0, 0.0], [0.75, 0.6], [0.2, 0.7]])
    cfg = PeriodicChargeConfig(basis, pts)
    sc = SmearedCharge(0.05)
    w = field_energy_eta(cfg, sc).W_eta
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    assert field_energy_eta(rotated(cfg, R), sc).W_eta == pytest.approx(w, abs=1e-10)
    perm = rng.permutation(3)
    assert field_energy_eta(PeriodicChargeConfig(basis, pts[perm]), sc).W_eta == pytest.approx(w, abs=1e-10)


def test_shape_independence_gap_decreases():
    cfg = lattice_config("triangular")
    gaps = []
    for eta in (0.2, 0.1, 0.05, 0.025):
        a = field_energy_eta(cfg, SmearedCharge(eta)).W_eta
        b = field_energy_eta(cfg, SmearedCharge(eta, PARABOLIC_2D)).W_eta
        gaps.append(abs(a - b))
    assert all(x > y for x, y in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.01


@pytest.mark.parametrize("name", ["square", "cubic"])
def test_eta_stability(name):
    cfg = lattice_config(name)
    vals = [field_energy_eta(cfg, SmearedCharge(eta)).W_eta for eta in (0.1, 0.05, 0.025)]
    steps = np.abs(np.diff(vals))
    assert steps[1] < 0.3 * steps[0]


def test_overlap_and_neutrality_errors():
    with pytest.raises(DomainError):
        field_energy_eta(lattice_config("square"), SmearedCharge(0.6))
    with pytest.raises(DomainError):
        PeriodicChargeConfig(np.eye(2), np.zeros((1, 2)), m=2.0)
    cfg = PeriodicChargeConfig(np.eye(2), np.array([[0.0, 0.0], [0.1, 0.0]]))
    with pytest.raises(DomainError):
        field_energy_eta(cfg, SmearedCharge(0.06))


def test_double_multiplicity_ewald_vs_parseval():
    cfg2 = PeriodicChargeConfig(np.eye(2) * np.sqrt(2), np.zeros((1, 2)), [2])
    assert cfg2.m == pytest.approx(1.0)
    e = field_energy_eta(cfg2, SmearedCharge(0.1))
    f = fourier_field_energy(cfg2, SmearedCharge(0.1))
    assert e.W_eta == pytest.approx(f.W_eta, abs=1e-6)


# scaling

def test_scaling_trivial():
    assert scaling_check(lattice_config("square"), SmearedCharge(0.1), 1.0).difference == 0.0


@pytest.mark.parametrize("name,m", [("triangular", 4.0), ("cubic", 8.0), ("square", 2.5), ("fcc", 3.0)])
def test_scaling_identity(name, m):
    rep = scaling_check(lattice_config(name), SmearedCharge(0.05), m)
    assert abs(rep.difference) <= 1e-8
