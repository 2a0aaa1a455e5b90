//! Distributed multikernel adaptive filtering over diffusion networks.
//!
//! Nodes scattered over the unit square each fit a multikernel estimate of
//! an unknown field from their own noisy samples, then average coefficient
//! vectors with their neighbors. The main learner projects onto hyperslabs
//! in the metric induced by the block-diagonal Gram matrix.

pub mod config;
pub mod dictionary;
pub mod error;
pub mod fields;
pub mod harness;
pub mod kernels;
pub mod learners;
pub mod network;
pub mod output;

pub use config::{Algorithm, FieldSpec, MixingKind, SimConfig};
pub use dictionary::Dictionary;
pub use error::{Error, Result};
pub use fields::{FieldModel, GridField};
pub use harness::{
    average_trials, complexity_table, hyperslab_sweep, nmse, run_trial, run_trials,
    ComplexityParams, ComplexityRow, NmseCurve, SweepPoint, TrialOutput,
};
pub use kernels::{filter_output, GaussianKernel, GramMatrix, KernelBank};
pub use learners::{HyperslabParams, MultikernelModel, NodeState, Regressor, RffModel, Sample};
pub use network::{disagreement, validate_consensus, ConsensusReport, Graph, MixingMatrix};
