//! Rate-equation simulation of repetitive quantum-nondemolition readout of a
//! data spin through a tunnel-coupled ancilla spin.
//!
//! The engine works entirely with classical population vectors over a fixed
//! six-state basis (four loaded two-particle states, two ionized one-particle
//! states) propagated by `dρ/dt = Lρ`.

pub mod analysis;
pub mod error;
pub mod liouvillian;
pub mod protocol;
pub mod reservoir;
pub mod spin_system;

pub use analysis::{
    fit_flip_rates, stationary_of_map, stationary_state, sweep_hybridization, Axis, FitWarning,
    FlipRateFit, HybridizationGrid, SweepTarget,
};
pub use error::{QndError, Result};
pub use liouvillian::{
    assemble_aniso, assemble_ee, assemble_en, assemble_rt, assemble_transitions, BasisKind,
    Liouvillian, Matrix6, StateVector, Vector6,
};
pub use protocol::{
    apply_pulse, cycle_map, p_up, propagate, run_qnd, run_rt_protocol, CrMode, CrSchedule,
    ProtocolSpec, Segment, SystemModel, TrajectoryRecord,
};
pub use reservoir::{
    channel_rates, fermi_occupation, golden_rule_rates, preset, FermiEvaluation, LeadSpec,
    Preset, PresetParams, RateSet, TransitionRate, K_B_HZ_PER_K, PRESET_NAMES,
};
pub use spin_system::{
    build_hamiltonian, chemical_potentials, diagonalize, dipolar_xz, eigen_basis,
    transition_amplitudes, Channel, ChemicalPotentials, EigenBasis, SpinSystemSpec, SystemKind,
    Transition, TunnelingMatrix,
};
