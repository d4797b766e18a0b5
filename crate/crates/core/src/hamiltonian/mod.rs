//! Two-island charge-basis Hamiltonian and its labeled spectrum.

mod charge;
pub mod eigen;
pub mod labeling;
mod matrix;
mod params;
mod spectrum;
pub mod transmon;

pub use charge::{ChargeConfig, Parity};
pub use labeling::Resolution;
pub use matrix::{build_hamiltonian, BandedHamiltonian, ChargeBasis, DEFAULT_CUTOFF, MIN_CUTOFF};
pub use params::{derive_energies, shunt_capacitance, CircuitParams, CHARGING_GHZ_FF};
pub use spectrum::{
    dispersion_epsilon, dispersion_many, dispersion_report, mode_parameters, mode_parameters_at,
    parity_branch_frequencies, solve_spectrum, transition_dispersion, transition_frequency,
    Dispersion, DispersionTarget, LabeledSpectrum, Level, ModeMethod, ModeParams, Transition,
    DEGENERACY_TOL,
};
