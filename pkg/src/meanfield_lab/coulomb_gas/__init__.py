"""Mean-field Coulomb gases: Hamiltonian, equilibrium measures, Metropolis sampling,
Laughlin plasma densities, bath-tub energies."""

from meanfield_lab.coulomb_gas.energy import (
    C_D,
    BathtubResult,
    EquilibriumMeasure,
    ParticleConfiguration,
    PowerLogPotential,
    bathtub,
    bathtub_radial,
    charge_deviation,
    equilibrium_measure_radial,
    hamiltonian,
    mass_in_ball,
    optimal_quasihole_degree,
    piecewise_constant_measure,
    quasihole_electrostatic,
    radial_mf_energy,
    shell_masses,
)
from meanfield_lab.coulomb_gas.meanfield import quasihole_mf_density
from meanfield_lab.coulomb_gas.observables import (
    annulus_radii,
    bounded_lipschitz_to_disc,
    default_bandwidth,
    empirical_measure,
    excess_kurtosis,
    radial_histogram,
    smoothed_radial_density,
    wasserstein1,
)
from meanfield_lab.coulomb_gas.sampler import (
    ChainSamples,
    GibbsChain,
    LaughlinPlasmaSpec,
    acceptance_probability,
    coulomb_chain,
    laughlin_chain,
    metropolis_chain,
    read_samples,
    run_chains,
    write_samples,
)
from meanfield_lab.coulomb_gas.laughlin import LaughlinResult, laughlin_sampler
