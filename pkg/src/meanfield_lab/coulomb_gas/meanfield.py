"""Finite-temperature mean-field density of the Laughlin quasi-hole plasma.

Minimizes  int V_m rho + ell D(rho, rho) + N^{-1} int rho log rho,  V_m = r^2 - 2 (m/N) log r,
over radial probability densities.  The density is piecewise constant on annular cells;
the Euler-Lagrange equation

    V_m(r_k) + 2 ell U[rho](r_k) + N^{-1} log rho_k = lambda,   sum_k |cell_k| rho_k = 1

is collocated at the cell centres, with the exact logarithmic potential U of each uniform
annulus, and solved by damped Newton in x = log rho starting from the zero-temperature
annulus.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from meanfield_lab.coulomb_gas.energy import (
    EquilibriumMeasure,
    piecewise_constant_measure,
    quasihole_electrostatic,
)
from meanfield_lab.errors import ConvergenceError, DomainError

X_CAP = 700.0  # exp overflow guard; no floor, vacuum cells are linear in x


def _slog(x):
    """x^2 log x - x^2 / 2, with the x = 0 limit."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * x * np.log(np.where(x > 0, x, 1.0)) - x * x / 2, 0.0)


def annulus_potential_matrix(edges, r):
    """K[k, l] = -int log|r_k - y| over a unit-mass uniform annulus l, for radial r_k."""
    lo, hi = edges[:-1][None, :], edges[1:][None, :]
    rr = np.asarray(r, dtype=float)[:, None]
    span = hi**2 - lo**2
    with np.errstate(divide="ignore"):
        logr = np.log(rr)
    inner = -(_slog(hi) - _slog(lo)) / span  # r inside the hole: mean of -log s
    outer = -logr * np.ones_like(span)
    mid = -((rr**2 - lo**2) * logr + _slog(hi) - _slog(np.clip(rr, lo, hi))) / span
    return np.where(rr <= lo, inner, np.where(rr >= hi, outer, mid))


def quasihole_mf_density(N, m, ell=2, r_max=None, cells=1500, tol=1e-10, max_iter=100) -> EquilibriumMeasure:
    if N < 1 or m < 0 or ell < 1:
        raise DomainError("need N >= 1, m >= 0, ell >= 1")
    zero_t = quasihole_electrostatic(N, m, ell)
    r1, r2 = zero_t.r_inner, zero_t.r_outer
    if r_max is None:
        r_max = r2 + 10 / np.sqrt(N) + 0.05
    if r_max <= r2:
        raise DomainError(f"grid radius {r_max} does not contain the outer radius {r2}")
    edges = np.linspace(0.0, r_max, cells + 1)
    rc = 0.5 * (edges[1:] + edges[:-1])
    area = np.pi * np.diff(edges**2)
    gamma = m / N
    V = rc**2 - 2 * gamma * np.log(rc)
    K = annulus_potential_matrix(edges, rc)

    # zero-temperature start
    q0 = np.diff(zero_t.cumulative_mass(edges))
    rho0 = q0 / area
    phi = V + 2 * ell * (K @ q0)
    on = rho0 > 0.5 * rho0.max()
    lam = float(np.mean(phi[on]))
    x = np.where(rho0 > 0, np.log(np.maximum(rho0, 1e-300)), np.minimum(N * (lam - phi), 0.0))
    lam = float(np.mean(phi[on] + x[on] / N))

    def residual(x, lam):
        q = area * np.exp(x)
        return np.append(V + 2 * ell * (K @ q) + x / N - lam, q.sum() - 1.0)

    res = residual(x, lam)
    norm = np.linalg.norm(res)
    for it in range(max_iter):
        if norm < tol:
            break
        q = area * np.exp(x)
        J = np.zeros((cells + 1, cells + 1))
        J[:cells, :cells] = 2 * ell * K * q[None, :]
        J[np.arange(cells), np.arange(cells)] += 1 / N
        J[:cells, cells] = -1.0
        J[cells, :cells] = q
        step = linalg.solve(J, -res)
        tau = 1.0
        while True:
            xn = np.minimum(x + tau * step[:cells], X_CAP)
            ln = lam + tau * step[cells]
            rn = residual(xn, ln)
            nn = np.linalg.norm(rn)
            if nn < (1 - 1e-4 * tau) * norm or tau < 1e-10:
                break
            tau /= 2
        if tau < 1e-10:
            raise ConvergenceError(f"mean-field Newton stalled at residual {norm:.3e}")
        x, lam, res, norm = xn, ln, rn, nn
    else:
        raise ConvergenceError(f"mean-field Newton did not converge: residual {norm:.3e}")
    return piecewise_constant_measure(edges, np.exp(x), 2, r1, r2)
