//! Relaxation dynamics of two-dimensional dipolar spin ensembles under
//! dynamical on-site disorder.
//!
//! Modules:
//!
//! - [`constants`], [`ensemble`]: units, constants, positions and couplings
//! - [`noise`]: bath power spectrum, rms-field geometry, noise trajectories
//! - [`sequence`]: filter functions and closed-form decoherence laws
//! - [`cluster`]: exact propagation of small spin clusters
//! - [`hopping`]: resonance-counting transport model
//! - [`inference`]: least-squares fits and density extraction

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod constants;
pub mod ensemble;
pub mod error;
pub mod hopping;
pub mod inference;
pub mod noise;
pub mod numerics;
pub mod rng;
pub mod sequence;

pub use constants::{Constants, GAMMA_E, GAMMA_N, HBAR, J0};
pub use ensemble::{coupling_strength, sample_ensemble, CouplingMatrix, CouplingSet, SpinEnsemble};
pub use error::{Error, Result};
pub use noise::{
    brms_squared, depth_from_brms, generate_trajectory, spectral_density, FieldComponent,
    LayerGeometry, LayerKind, NoiseModel, NoiseTrajectory,
};
pub use sequence::{
    chi_numeric, closed_form_decay, deer_signal, filter_function, finite_pulse_time,
    two_spin_signal, DecayCurve, PulseSequence, SequenceKind,
};
