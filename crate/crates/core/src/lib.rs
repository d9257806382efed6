//! Matrix fractional programming and FPLinQ: joint link scheduling,
//! beamforming and power control for MIMO device-to-device networks, with
//! the benchmark schedulers and a seeded experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fairness;
pub mod fp;
pub mod harness;
pub mod linops;
pub mod matching;
pub mod network;
pub mod rng;
pub mod schedulers;

pub use error::ConfigError;
pub use fairness::{log_utility, pf_update, RateAverages};
pub use harness::{run_experiment, ExperimentConfig, ExperimentResult, HarnessError, Objective};
pub use linops::{CMatrix, HermitianPsd, LinalgError};
pub use matching::{auction, hungarian, Matching, MatchingError, MatchingProblem};
pub use network::{
    generate_topology, AssociationMode, BeamformerSet, LinkWeights, NetworkError, NetworkInstance, Schedule,
    TopologyConfig,
};
pub use schedulers::{run_scheduler, SchedulerConfig, SchedulerError, SchedulerId, SlotSolution};
