"""Density estimates and distances between empirical and limiting measures."""

from __future__ import annotations

import numpy as np
from scipy import optimize

from meanfield_lab.coulomb_gas.energy import gaussian_kernel_ring, piecewise_constant_measure


def radial_histogram(radii, r_max, bins=60, d=2, total=None):
    """Histogram density per unit volume; ``total`` defaults to the number of radii."""
    radii = np.asarray(radii, dtype=float).ravel()
    edges = np.linspace(0.0, r_max, bins + 1)
    counts, _ = np.histogram(radii, bins=edges)
    vol = np.pi * np.diff(edges**2) if d == 2 else 4 / 3 * np.pi * np.diff(edges**3)
    total = radii.size if total is None else total
    return 0.5 * (edges[1:] + edges[:-1]), counts / (total * vol)


def default_bandwidth(n):
    return float(n) ** -0.25


def smoothed_radial_density(radii, r_grid, bandwidth, d=2, n_bins=4000):
    """Gaussian-kernel density estimate averaged over angles, at radii ``r_grid``.

    Radii are first binned on a fine grid (bin width far below the bandwidth), then the
    angle-averaged kernel is applied to the bin centres.
    """
    radii = np.asarray(radii, dtype=float).ravel()
    r_grid = np.asarray(r_grid, dtype=float)
    top = max(radii.max(), r_grid.max()) + 1e-12
    counts, edges = np.histogram(radii, bins=n_bins, range=(0.0, top))
    centres = 0.5 * (edges[1:] + edges[:-1])
    keep = counts > 0
    k = gaussian_kernel_ring(r_grid[:, None], centres[keep][None, :], bandwidth, d)
    return k @ counts[keep] / radii.size


def disc_reference_points(n, radius=1.0, r_inner=0.0):
    """Deterministic, area-stratified points of the uniform measure on a disc/annulus."""
    k = np.arange(n) + 0.5
    r = np.sqrt(r_inner**2 + (radius**2 - r_inner**2) * k / n)
    theta = k * np.pi * (3 - np.sqrt(5))
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def wasserstein1(x, y):
    """Exact W1 between two equal-size uniform point clouds (optimal assignment)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("point clouds must have equal shape")
    cost = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=-1)
    rows, cols = optimize.linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def bounded_lipschitz_to_disc(points, radius=1.0, r_inner=0.0, n_ref=2000, seed=0):
    """Upper bound on d_BL(empirical, uniform on the disc/annulus) via W1 >= d_BL.

    The empirical measure is subsampled to ``n_ref`` points without replacement and
    matched to ``n_ref`` stratified reference points.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] > n_ref:
        rng = np.random.default_rng(seed)
        pts = pts[rng.choice(pts.shape[0], n_ref, replace=False)]
    ref = disc_reference_points(pts.shape[0], radius, r_inner)
    return wasserstein1(pts, ref)


def empirical_measure(sample_points, r_max, bins=100, d=2):
    """Histogram-based radial measure of the given points (unit mass)."""
    r = np.linalg.norm(np.asarray(sample_points).reshape(-1, d), axis=1)
    centres, dens = radial_histogram(r, r_max, bins, d)
    return piecewise_constant_measure(np.linspace(0.0, r_max, bins + 1), dens, d)


def excess_kurtosis(x):
    x = np.asarray(x, dtype=float).ravel()
    c = x - x.mean()
    return float(np.mean(c**4) / np.mean(c**2) ** 2 - 3)


def annulus_radii(radii):
    """(R1, R2) of the uniform annulus with the same mean and variance of r^2.

    For the uniform measure on an annulus r^2 is uniform on [R1^2, R2^2].
    """
    r2 = np.asarray(radii, dtype=float).ravel() ** 2
    mean, half = r2.mean(), np.sqrt(3 * r2.var())
    return float(np.sqrt(max(mean - half, 0.0))), float(np.sqrt(mean + half))
