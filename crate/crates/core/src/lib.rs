//! Desk-scale simulator and optimization library for coordinated hybrid
//! beamforming in multi-cell mmWave networks.
//!
//! The crate is organized around one downlink scenario: `N` base stations,
//! each serving `K` single-antenna users through an `N_t`-element linear
//! array, coordinated either by a central unit or by message passing between
//! the base stations and a thin consensus layer.
//!
//! Module map:
//! - [`conic`]: small dense semidefinite-program interface used by every
//!   optimization stage (blocks, scalars, trace constraints, LMIs).
//! - [`channel`]: geometric mmWave channel sampling, array responses, AoD
//!   dictionary, bounded CSI perturbations.
//! - [`centralized`]: semidefinite-relaxation transmit precoding across all
//!   cells, with rank-1 extraction and Gaussian randomization.
//! - [`hybrid`]: factorization of a fully digital precoder into RF codebook
//!   columns and a baseband matrix, via sparse Bayesian learning or
//!   simultaneous orthogonal matching pursuit.
//! - [`ici`]: inter-cell-interference variable layout shared by the
//!   distributed algorithms (selection matrices, stacked pseudoinverse).
//! - [`sync_dist`]: synchronous consensus ADMM across base stations.
//! - [`async_proto`]: asynchronous protocol with partial arrivals and a
//!   bounded-delay gate on top of the same ADMM steps.
//! - [`robust`]: worst-case SINR variants over bounded CSI error via the
//!   S-lemma, plus an independent trust-region verifier.
//! - [`metrics`]: SINR, sum rate, feasibility accounting, power accuracy,
//!   signaling overhead counters.
//! - [`harness`]: named experiments, config files, CSV traces.

pub mod async_proto;
pub mod centralized;
pub mod channel;
pub mod conic;
pub mod harness;
pub mod hybrid;
pub mod ici;
pub mod metrics;
pub mod robust;
pub mod sync_dist;

pub use async_proto::{AdbfRun, AsyncConfig};
pub use centralized::{CentralizedOutcome, FdBeamformers};
pub use channel::{ChannelSet, SystemConfig};
pub use conic::{SdpProblem, SdpSolution, SolveStatus};
pub use harness::{
    compare_pipelines, run_experiment, CompareOptions, CsvArtifact, ExperimentId, ExperimentSpec,
    HarnessError, Pipeline, PipelineComparison, TrialStatus,
};
pub use hybrid::{BlParams, HybridPrecoder};
pub use metrics::ExperimentTrace;
pub use robust::{RobustOutcome, RobustSolution, UncertaintyModel};
pub use sync_dist::{SdbfOptions, SdbfRun};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;
/// Dense real matrix.
pub type RMat = nalgebra::DMatrix<f64>;
/// Dense real vector.
pub type RVec = nalgebra::DVector<f64>;
