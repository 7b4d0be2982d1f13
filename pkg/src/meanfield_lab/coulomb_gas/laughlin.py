"""Sampling the scaled Laughlin / quasi-hole plasma and estimating its one-body density."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from meanfield_lab.coulomb_gas.observables import (
    default_bandwidth,
    radial_histogram,
    smoothed_radial_density,
)
from meanfield_lab.coulomb_gas.sampler import LaughlinPlasmaSpec, laughlin_chain, metropolis_chain


@dataclass
class LaughlinResult:
    spec: LaughlinPlasmaSpec
    samples: np.ndarray
    energies: np.ndarray
    acceptance: float
    r: np.ndarray  # evaluation grid
    density: np.ndarray  # smoothed scaled one-body density (unit mass)
    hist_r: np.ndarray
    hist_density: np.ndarray
    bandwidth: float

    @property
    def radii(self):
        return np.linalg.norm(self.samples, axis=-1).ravel()


def laughlin_sampler(spec: LaughlinPlasmaSpec, seed=0, sweeps=20000, thin=10, warmup=2000,
                     grid_points=200, bins=60, bandwidth=None) -> LaughlinResult:
    chain = laughlin_chain(spec, seed)
    out = metropolis_chain(chain, sweeps, thin, warmup)
    radii = np.linalg.norm(out.samples, axis=-1).ravel()
    r_max = float(radii.max()) * 1.05
    h = default_bandwidth(spec.N) if bandwidth is None else bandwidth
    r = np.linspace(0.0, r_max, grid_points)
    dens = smoothed_radial_density(radii, r, h)
    hr, hd = radial_histogram(radii, r_max, bins)
    return LaughlinResult(spec=spec, samples=out.samples, energies=out.energies,
                          acceptance=out.acceptance, r=r, density=dens, hist_r=hr,
                          hist_density=hd, bandwidth=h)
