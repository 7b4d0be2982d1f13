import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, special

from meanfield_lab import DomainError
from meanfield_lab.variational_1d import (
    GLParams,
    Profile1D,
    RadialPotential,
    correction_energy,
    curvature_constants,
    from_function,
    hard_sphere,
    lowest_eigenvalue,
    minimize_gl1d,
    quartic_integral,
    scattering_length,
    soft_ball,
    soft_ball_scattering_length,
    theta0,
)


def _pcf_eigenvalue(alpha):
    # decaying solution D_nu(sqrt2 (t + alpha)), eigenvalue 2 nu + 1; Neumann at t = 0
    x = np.sqrt(2) * alpha
    nu = optimize.brentq(lambda v: special.pbdv(v, x)[1], -0.499, 0.5 if alpha > -2 else 1.5)
    return 2 * nu + 1


def test_theta0_against_parabolic_cylinder_oracle():
    th, a0 = theta0()
    res = optimize.minimize_scalar(_pcf_eigenvalue, bracket=(-1.0, -0.77, -0.5), tol=1e-10)
    assert th == pytest.approx(res.fun, abs=1e-5)
    assert a0 == pytest.approx(res.x, abs=1e-3)
    # classical identity alpha0^2 = Theta0
    assert a0**2 == pytest.approx(th, abs=1e-4)
    assert 1.68 <= 1 / th <= 1.72


@pytest.mark.parametrize("alpha", [-1.2, -0.6, 0.4])
def test_eigenvalue_matches_oracle(alpha):
    assert lowest_eigenvalue(alpha, spacing=1.25e-3) == pytest.approx(_pcf_eigenvalue(alpha), abs=2e-6)


def test_theta0_at_most_one():
    th, _ = theta0()
    assert th <= 1
    assert lowest_eigenvalue(0.0, spacing=1.25e-3) == pytest.approx(1.0, abs=1e-5)


def test_eigenvalue_convex_near_minimizer():
    _, a0 = theta0()
    h = 0.05
    vals = [lowest_eigenvalue(a0 + j * h) for j in (-1, 0, 1)]
    assert vals[0] - 2 * vals[1] + vals[2] > 0


def test_theta0_rejects_coarse_grid():
    with pytest.raises(DomainError):
        theta0(spacing=0.05)
    with pytest.raises(DomainError):
        theta0(length=5.0)


@pytest.mark.parametrize("b", [1.0, 0.5, 1.7, 2.0])
def test_b_outside_surface_regime(b):
    with pytest.raises(DomainError):
        GLParams(b=b)


def test_positive_weight_required():
    with pytest.raises(DomainError):
        GLParams(b=1.3, k=200.0, eps=1e-2, c0=2.0)


@pytest.fixture(scope="module")
def gl13():
    return minimize_gl1d(GLParams(b=1.3))


def test_energy_negative_and_profile_valid(gl13):
    prof = gl13.profile
    assert gl13.energy < 0
    assert np.all(prof.f >= 0)
    assert abs(prof.f[-1]) <= 1e-6 * prof.f.max()


def test_profile_solves_euler_lagrange(gl13):
    # independent collocation solve of -f'' + (t+a)^2 f + (f^3 - f)/b = 0, f'(0) = 0, f(T) = 0
    b, prof = 1.3, gl13.profile
    a, T = prof.alpha, prof.t[-1]

    def rhs(t, y):
        return np.vstack([y[1], (t + a) ** 2 * y[0] + (y[0] ** 3 - y[0]) / b])

    def bc(ya, yb):
        return np.array([ya[1], yb[0]])

    mesh = np.linspace(0, T, 400)
    guess = np.vstack([np.interp(mesh, prof.t, prof.f), np.gradient(np.interp(mesh, prof.t, prof.f), mesh)])
    sol = integrate.solve_bvp(rhs, bc, mesh, guess, tol=1e-9, max_nodes=200000)
    assert sol.success
    assert prof.f[0] == pytest.approx(sol.sol(0.0)[0], rel=1e-5)
    fine = np.linspace(0, T, 20001)
    f, fp = sol.sol(fine)
    e_bvp = integrate.trapezoid(fp**2 + (fine + a) ** 2 * f**2 + (f**4 - 2 * f**2) / (2 * b), fine)
    assert gl13.energy == pytest.approx(e_bvp, rel=1e-5)


def test_alpha_stationarity(gl13):
    # dE/dalpha = 2 int (t + alpha) f^2 = 0 at the optimal phase
    prof = gl13.profile
    val = integrate.trapezoid((prof.t + prof.alpha) * prof.f**2, prof.t)
    assert abs(val) < 1e-6


def test_energy_rises_toward_threshold():
    es = [minimize_gl1d(GLParams(b=b, spacing=2e-3)).energy for b in (1.5, 1.6, 1.65, 1.69)]
    assert all(x < y for x, y in zip(es, es[1:]))
    assert es[-1] < 0


def test_grid_refinement_stable(gl13):
    coarse = minimize_gl1d(GLParams(b=1.3, spacing=2e-3)).energy
    assert abs(coarse - gl13.energy) < 1e-4 * abs(gl13.energy)


def test_energy_decreases_with_domain_length():
    es = [minimize_gl1d(GLParams(b=1.3, t_max=L, spacing=2e-3)).energy for L in (3.0, 6.0, 12.0)]
    assert es[0] >= es[1] >= es[2]
    assert abs(es[2] - es[1]) < 1e-8


@pytest.mark.parametrize("b", [1.2, 1.4, 1.65])
def test_curvature_constants(b):
    c = curvature_constants(b)
    assert c.c1 > 0
    assert abs(c.c1_energy - c.c1) / c.c1 <= 1e-3
    assert c.c2 == pytest.approx(c.c2_corr, abs=1e-6)


def test_c2_positive_near_threshold():
    assert curvature_constants(1.65).c2 > 0


def test_correction_energy_zero_profile():
    t = np.linspace(0, 10, 101)
    assert correction_energy(Profile1D(t=t, f=np.zeros_like(t), alpha=-0.7), 1.3) == 0.0


def test_curvature_expansion():
    b, eps, c0 = 1.4, 1e-3, 2.0
    T = c0 * abs(np.log(eps))
    r0 = minimize_gl1d(GLParams(b=b, t_max=T))
    rk = minimize_gl1d(GLParams(b=b, k=1.0, eps=eps, c0=c0))
    slope = (rk.energy - r0.energy) / eps
    target = -correction_energy(r0.profile, b)
    assert abs(slope - target) <= 0.05 * abs(target)


def test_quartic_integral_of_gaussian():
    t = np.linspace(0, 10, 20001)
    prof = Profile1D(t=t, f=np.exp(-t**2 / 2), alpha=0.0)
    assert quartic_integral(prof) == pytest.approx(0.5 * np.sqrt(np.pi / 2), rel=1e-7)


# scattering length

def test_hard_sphere():
    for r0 in (0.3, 1.0, 2.5):
        res = scattering_length(hard_sphere(r0))
        assert res.a == pytest.approx(r0, abs=1e-8)


def test_zero_potential():
    res = scattering_length(soft_ball(1.0, 0.0))
    assert abs(res.a) < 1e-12


@pytest.mark.parametrize("r0,v0", [(1.0, 0.3), (0.7, 10.0), (2.0, 50.0), (0.5, 1e4)])
def test_soft_ball_closed_form(r0, v0):
    res = scattering_length(soft_ball(r0, v0))
    assert res.a == pytest.approx(soft_ball_scattering_length(r0, v0), abs=1e-8)
    assert res.energy == pytest.approx(8 * np.pi * res.a, rel=1e-7)


def _random_soft(rng):
    r0 = rng.uniform(0.3, 2.0)
    coefs = rng.uniform(0, 20, 3)
    powers = rng.integers(1, 4, 3)
    func = lambda r: sum(c * np.clip(1 - (np.asarray(r) / r0) ** 2, 0, None) ** p
                         for c, p in zip(coefs, powers))
    return RadialPotential(func=func, r0=r0)


def test_scattering_bounded_by_integral():
    rng = np.random.default_rng(20261018)
    for _ in range(20):
        w = _random_soft(rng)
        res = scattering_length(w)
        assert 0 <= 8 * np.pi * res.a <= w.integral()
        assert res.energy == pytest.approx(8 * np.pi * res.a, rel=1e-6)


@pytest.mark.parametrize("n", [2, 10])
def test_scaling(n):
    base = soft_ball(1.0, 5.0)
    scaled = RadialPotential(func=lambda r: n**2 * base.func(n * np.asarray(r)), r0=1.0 / n)
    assert scattering_length(scaled).a == pytest.approx(scattering_length(base).a / n, abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(r0=st.floats(0.1, 3.0), v0=st.floats(0.0, 100.0))
def test_soft_ball_below_radius(r0, v0):
    a = scattering_length(soft_ball(r0, v0)).a
    assert -1e-12 <= a <= r0
    assert a == pytest.approx(soft_ball_scattering_length(r0, v0) if v0 > 0 else 0.0, abs=1e-8)


def test_negative_potential_rejected():
    with pytest.raises(DomainError):
        scattering_length(soft_ball(1.0, -1.0))


def test_non_radial_rejected():
    with pytest.raises(DomainError):
        from_function(lambda x: 1.0 + x[0], 1.0)
    w = from_function(lambda x: 3.0 if np.linalg.norm(x) < 1 else 0.0, 1.0)
    assert scattering_length(w).a == pytest.approx(soft_ball_scattering_length(1.0, 3.0), abs=1e-6)
