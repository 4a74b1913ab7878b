//! Ground states, fidelity and entanglement of the anisotropic spin-1
//! Heisenberg chain.

pub mod dmrg;
pub mod ed;
pub mod lanczos;
mod linalg;
pub mod model;
pub mod mps;
pub mod observables;
pub mod sweep;

pub use dmrg::{dmrg_ground_state, dmrg_ground_state_from, DmrgConfig, DmrgError, DmrgReport};
pub use ed::{ed_ground_state, EdConfig, EdError, EdGroundState};
pub use model::{ModelError, ModelParams};
pub use mps::{Mps, MpsError, SiteTensor};
pub use observables::{
    central_pair_entropy, fidelity, fidelity_susceptibility, find_peak, find_valley, ObservableError, Peak,
    PeakKind, QuantumState,
};
pub use sweep::{
    run_sweep, verify_against_oracle, Mode, OracleReport, PGrid, SweepConfig, SweepError, SweepOutcome,
    SweepRecord,
};
