//! Named experiments over the beamforming pipelines: configuration,
//! deterministic Monte-Carlo fan-out, CSV artifacts, and a cross-pipeline
//! comparison on shared channel draws.
//!
//! Determinism contract: a fixed `(spec, seed)` pair produces byte-identical
//! artifacts on every run and at every worker-thread count. Trial seeds are
//! mixed from the master seed, a lane tag, and the point and trial indices,
//! so no result ever depends on scheduling order; the parallel fan-out
//! collects into index order before any reduction. Grid points reuse the
//! same channel draws per trial, which turns sweep comparisons into paired
//! ones: per-instance monotone properties (tighter targets or larger
//! uncertainty can only lose feasibility) then survive into the sampled
//! rates instead of drowning in Monte-Carlo noise.
//!
//! Failures inside one trial (infeasible instance, no solver verdict,
//! failed extraction, stalled protocol) are recorded in the artifact rows
//! and never abort a sweep.
//!
//! Guardrails: desk scale means at most 4 cells, 3 users per cell, 16
//! antennas, and 64 dictionary columns. Larger shapes need the explicit
//! `allow_large` opt-in; the limits protect runtime expectations, not
//! correctness.

pub mod config;
pub mod csvio;
mod runners;
pub mod stats;

use crate::async_proto::AsyncConfig;
use crate::centralized::{solve_centralized, CentralizedOutcome};
use crate::channel::{ChannelSet, SystemConfig};
use crate::hybrid::BlParams;
use crate::metrics::sinr;
use crate::robust::{solve_robust_centralized, RobustOutcome, UncertaintyModel};
use crate::sync_dist::{run_sdbf, SdbfOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub use csvio::CsvArtifact;
pub use runners::{
    accuracy_curves, convergence_sweep, feasibility_sweep, power_sweep, realization_sweep,
    sumrate_sweep, AccuracyCurves, ConvergencePoint, ConvergenceSweep, FeasibilityCell, PowerCell,
    RealizationRow, SumRateTrial, SweepAxis,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("config error: {0}")]
    Config(String),
}

/// The eight named experiments the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    FeasibilityVsGamma,
    FeasibilityVsEps,
    PowerVsGamma,
    PowerPerRealization,
    AccuracyVsIter,
    ConvergenceVsS,
    ConvergenceVsTau,
    SumrateBlVsSomp,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::FeasibilityVsGamma,
        ExperimentId::FeasibilityVsEps,
        ExperimentId::PowerVsGamma,
        ExperimentId::PowerPerRealization,
        ExperimentId::AccuracyVsIter,
        ExperimentId::ConvergenceVsS,
        ExperimentId::ConvergenceVsTau,
        ExperimentId::SumrateBlVsSomp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentId::FeasibilityVsGamma => "feasibility_vs_gamma",
            ExperimentId::FeasibilityVsEps => "feasibility_vs_eps",
            ExperimentId::PowerVsGamma => "power_vs_gamma",
            ExperimentId::PowerPerRealization => "power_per_realization",
            ExperimentId::AccuracyVsIter => "accuracy_vs_iter",
            ExperimentId::ConvergenceVsS => "convergence_vs_S",
            ExperimentId::ConvergenceVsTau => "convergence_vs_tau",
            ExperimentId::SumrateBlVsSomp => "sumrate_bl_vs_somp",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<&str> = ExperimentId::ALL.iter().map(|id| id.name()).collect();
                HarnessError::Spec(format!(
                    "unknown experiment `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Which algorithm's verdict a feasibility or power sweep reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    /// One-shot semidefinite relaxation at the central unit.
    Centralized,
    /// Synchronous consensus loop.
    Sdbf,
    /// Asynchronous protocol with partial arrivals and a staleness gate.
    Adbf,
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::Centralized => "centralized",
            Pipeline::Sdbf => "sdbf",
            Pipeline::Adbf => "adbf",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "centralized" => Ok(Pipeline::Centralized),
            "sdbf" => Ok(Pipeline::Sdbf),
            "adbf" => Ok(Pipeline::Adbf),
            other => Err(HarnessError::Spec(format!(
                "unknown pipeline `{other}`; expected centralized, sdbf, or adbf"
            ))),
        }
    }
}

/// Terminal state of one Monte-Carlo trial; failures are data, not errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialStatus {
    Feasible,
    Infeasible,
    /// Solver hit its iteration cap without a verdict either way.
    NoVerdict,
    /// Relaxation solved but no rank-1 candidate passed the targets.
    ExtractionFailed,
    /// Distributed loop spent its budget above the stop tolerance.
    NotConverged,
    /// Asynchronous run hit the tick guard before spending its budget.
    Stalled,
    SolverError,
}

impl TrialStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrialStatus::Feasible => "feasible",
            TrialStatus::Infeasible => "infeasible",
            TrialStatus::NoVerdict => "no_verdict",
            TrialStatus::ExtractionFailed => "extraction_failed",
            TrialStatus::NotConverged => "not_converged",
            TrialStatus::Stalled => "stalled",
            TrialStatus::SolverError => "solver_error",
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, TrialStatus::Feasible)
    }
}

/// Full description of one experiment run. Every field is a plain knob so
/// configuration files and command-line flags can override any of them;
/// [`ExperimentSpec::for_experiment`] fills in the defaults each named
/// experiment was designed around.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    /// Monte-Carlo trials per grid point.
    pub trials: usize,
    /// Master seed; every trial seed is derived from it.
    pub seed: u64,
    /// Base scenario; sweeps override the swept dimension per point.
    pub system: SystemConfig,
    /// Algorithm whose verdict feasibility and power sweeps report.
    pub pipeline: Pipeline,
    /// Uncertainty ball radius for fixed-radius experiments; 0 disables
    /// the robust path.
    pub epsilon: f64,
    /// Target SINR grid (linear scale).
    pub gamma_grid: Vec<f64>,
    /// Uncertainty radius grid.
    pub eps_grid: Vec<f64>,
    /// Quorum sizes for the convergence sweep over S.
    pub quorum_grid: Vec<usize>,
    /// Staleness bounds for the convergence sweep over tau.
    pub staleness_grid: Vec<usize>,
    /// Antenna counts for the power sweep.
    pub ntx_grid: Vec<usize>,
    /// Asynchronous protocol knobs; the `seed` field is ignored by sweeps,
    /// which derive per-trial protocol seeds from the master seed.
    pub proto: AsyncConfig,
    /// Consensus loop knobs shared by the synchronous and asynchronous
    /// pipelines (the asynchronous loop uses `penalty` and `stop_tol`).
    pub admm: SdbfOptions,
    /// Bayesian-learning knobs for the hybrid factorization experiment.
    pub bl: BlParams,
    /// Normalized power accuracy defining "converged" for iteration counts.
    pub accuracy_target: f64,
    /// Lifts the desk-scale guardrails.
    pub allow_large: bool,
    /// Worker threads; 0 means the global default pool. Never affects
    /// artifact bytes.
    pub threads: usize,
}

impl ExperimentSpec {
    /// The defaults each named experiment was designed around: desk-scale
    /// shapes, unit noise and weights, and protocol knobs chosen so a
    /// default run finishes in minutes on one core.
    pub fn for_experiment(id: ExperimentId) -> Self {
        let mut spec = Self {
            id,
            trials: 20,
            seed: 1,
            system: SystemConfig::uniform(2, 2, 8).with_target_sinr(2.0),
            pipeline: Pipeline::Adbf,
            epsilon: 0.0,
            gamma_grid: vec![],
            eps_grid: vec![],
            quorum_grid: vec![],
            staleness_grid: vec![],
            ntx_grid: vec![],
            proto: AsyncConfig {
                quorum: 1,
                max_staleness: 4,
                arrival_prob: 0.6,
                cu_budget: 150,
                seed: 0,
            },
            admm: SdbfOptions { stop_tol: 1e-2, ..SdbfOptions::default() },
            bl: BlParams::default(),
            accuracy_target: 0.01,
            allow_large: false,
            threads: 0,
        };
        match id {
            ExperimentId::FeasibilityVsGamma => {
                spec.gamma_grid = vec![1.0, 2.0, 4.0, 8.0, 16.0];
                spec.eps_grid = vec![0.4];
            }
            ExperimentId::FeasibilityVsEps => {
                spec.gamma_grid = vec![2.0, 4.0];
                spec.eps_grid = vec![0.05, 0.1, 0.2, 0.3, 0.4];
            }
            ExperimentId::PowerVsGamma => {
                spec.trials = 10;
                spec.pipeline = Pipeline::Centralized;
                spec.gamma_grid = vec![1.0, 2.0, 4.0, 8.0, 16.0];
                spec.eps_grid = vec![0.0, 0.1];
                spec.ntx_grid = vec![8, 16];
            }
            ExperimentId::PowerPerRealization => {
                spec.trials = 40;
                spec.epsilon = 0.1;
                spec.proto.cu_budget = 40;
                spec.admm.stop_tol = 1e-4;
            }
            ExperimentId::AccuracyVsIter => {
                spec.trials = 50;
                spec.system = SystemConfig::uniform(2, 2, 16).with_target_sinr(2.0);
                spec.proto.cu_budget = 150;
                spec.admm.stop_tol = 1e-6;
                spec.admm.max_outer = 150;
            }
            ExperimentId::ConvergenceVsS => {
                spec.trials = 10;
                spec.system = SystemConfig::uniform(4, 2, 16).with_target_sinr(2.0);
                spec.quorum_grid = vec![1, 2, 3, 4];
                spec.proto.quorum = 2;
                spec.proto.cu_budget = 300;
                spec.admm.stop_tol = 1e-4;
            }
            ExperimentId::ConvergenceVsTau => {
                spec.trials = 10;
                spec.system = SystemConfig::uniform(4, 2, 16).with_target_sinr(2.0);
                spec.staleness_grid = vec![1, 2, 4, 8];
                spec.proto.quorum = 2;
                spec.proto.cu_budget = 300;
                spec.admm.stop_tol = 1e-4;
            }
            ExperimentId::SumrateBlVsSomp => {
                spec.trials = 5;
                spec.system = SystemConfig::uniform(3, 2, 16).with_target_sinr(2.0);
                spec.gamma_grid = vec![2.0, 4.0, 8.0];
                spec.epsilon = 0.1;
                spec.proto.quorum = 2;
                spec.proto.cu_budget = 120;
            }
        }
        spec
    }

    /// Rejects shapes outside the desk-scale guardrails (unless
    /// `allow_large`), empty grids the experiment depends on, and knob
    /// values the pipelines cannot run with.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let e = |msg: String| Err(HarnessError::Spec(msg));
        if self.trials == 0 {
            return e(String::from("trials must be at least 1"));
        }
        let sys = &self.system;
        if sys.n_cells == 0 || sys.users_per_cell == 0 || sys.n_tx == 0 {
            return e(String::from("system dimensions must be positive"));
        }
        if !self.allow_large {
            let max_ntx = self.ntx_grid.iter().copied().max().unwrap_or(0).max(sys.n_tx);
            if sys.n_cells > 4 || sys.users_per_cell > 3 || max_ntx > 16 || sys.dict_size > 64 {
                return e(format!(
                    "shape N={} K={} N_t={max_ntx} G={} exceeds the desk-scale guardrails \
                     (N<=4, K<=3, N_t<=16, G<=64); pass allow_large to lift them",
                    sys.n_cells, sys.users_per_cell, sys.dict_size
                ));
            }
        }
        let distributed = !matches!(self.pipeline, Pipeline::Centralized)
            || matches!(
                self.id,
                ExperimentId::PowerPerRealization
                    | ExperimentId::AccuracyVsIter
                    | ExperimentId::ConvergenceVsS
                    | ExperimentId::ConvergenceVsTau
                    | ExperimentId::SumrateBlVsSomp
            );
        if distributed && sys.n_cells < 2 {
            return e(String::from("distributed pipelines need at least two cells"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return e(format!("epsilon must be finite and nonnegative, got {}", self.epsilon));
        }
        if self.gamma_grid.iter().any(|&g| !(g.is_finite() && g > 0.0)) {
            return e(String::from("gamma grid entries must be positive"));
        }
        if self.eps_grid.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
            return e(String::from("eps grid entries must be nonnegative"));
        }
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(HarnessError::Spec(format!("{} needs a non-empty {what}", self.id)))
            }
        };
        match self.id {
            ExperimentId::FeasibilityVsGamma | ExperimentId::FeasibilityVsEps => {
                need(!self.gamma_grid.is_empty(), "gamma grid")?;
                need(!self.eps_grid.is_empty(), "eps grid")?;
            }
            ExperimentId::PowerVsGamma => {
                need(!self.gamma_grid.is_empty(), "gamma grid")?;
                need(!self.eps_grid.is_empty(), "eps grid")?;
                need(!self.ntx_grid.is_empty(), "n_tx grid")?;
                if self.ntx_grid.iter().any(|&n| n == 0) {
                    return e(String::from("n_tx grid entries must be positive"));
                }
            }
            ExperimentId::ConvergenceVsS => {
                need(!self.quorum_grid.is_empty(), "quorum grid")?;
                if self.quorum_grid.iter().any(|&s| s == 0 || s > sys.n_cells) {
                    return e(format!("quorum grid entries must lie in 1..={}", sys.n_cells));
                }
            }
            ExperimentId::ConvergenceVsTau => {
                need(!self.staleness_grid.is_empty(), "staleness grid")?;
                if self.staleness_grid.iter().any(|&t| t == 0) {
                    return e(String::from("staleness grid entries must be positive"));
                }
            }
            ExperimentId::SumrateBlVsSomp => {
                need(!self.gamma_grid.is_empty(), "gamma grid")?;
            }
            ExperimentId::PowerPerRealization | ExperimentId::AccuracyVsIter => {}
        }
        let p = &self.proto;
        if p.quorum == 0 || p.quorum > sys.n_cells {
            return e(format!("quorum must lie in 1..={}, got {}", sys.n_cells, p.quorum));
        }
        if p.max_staleness == 0 || p.cu_budget == 0 {
            return e(String::from("staleness bound and CU budget must be positive"));
        }
        if !(p.arrival_prob > 0.0 && p.arrival_prob <= 1.0) {
            return e(format!("arrival probability must lie in (0, 1], got {}", p.arrival_prob));
        }
        let a = &self.admm;
        if !(a.penalty > 0.0 && a.stop_tol > 0.0) || a.max_outer == 0 {
            return e(String::from("penalty, stop tolerance, and outer budget must be positive"));
        }
        if !(self.accuracy_target > 0.0) {
            return e(String::from("accuracy target must be positive"));
        }
        Ok(())
    }

    /// Echo of every result-affecting knob, in a fixed order, for the
    /// artifact provenance header. Scheduling knobs (`threads`,
    /// `allow_large`) are excluded so artifact bytes stay invariant.
    pub fn provenance(&self) -> Vec<(String, String)> {
        let sys = &self.system;
        let join_f = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        let join_u = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        let pairs: Vec<(&str, String)> = vec![
            ("version", format!("mcbf-core/{}", env!("CARGO_PKG_VERSION"))),
            ("experiment", self.id.to_string()),
            ("seed", self.seed.to_string()),
            ("trials", self.trials.to_string()),
            ("pipeline", self.pipeline.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("accuracy_target", self.accuracy_target.to_string()),
            ("n_cells", sys.n_cells.to_string()),
            ("users_per_cell", sys.users_per_cell.to_string()),
            ("n_tx", sys.n_tx.to_string()),
            ("n_rf", sys.n_rf.to_string()),
            ("n_paths", sys.n_paths.to_string()),
            ("d_over_lambda", sys.d_over_lambda.to_string()),
            ("dict_size", sys.dict_size.to_string()),
            ("noise_var", sys.sigma2(0, 0).to_string()),
            ("target_sinr", sys.gamma(0, 0).to_string()),
            ("weight", sys.beta(0).to_string()),
            ("gamma_grid", join_f(&self.gamma_grid)),
            ("eps_grid", join_f(&self.eps_grid)),
            ("quorum_grid", join_u(&self.quorum_grid)),
            ("staleness_grid", join_u(&self.staleness_grid)),
            ("ntx_grid", join_u(&self.ntx_grid)),
            ("quorum", self.proto.quorum.to_string()),
            ("max_staleness", self.proto.max_staleness.to_string()),
            ("arrival_prob", self.proto.arrival_prob.to_string()),
            ("cu_budget", self.proto.cu_budget.to_string()),
            ("penalty", self.admm.penalty.to_string()),
            ("stop_tol", self.admm.stop_tol.to_string()),
            ("max_outer", self.admm.max_outer.to_string()),
            ("adaptive_penalty", self.admm.adaptive_penalty.to_string()),
            ("bl_sigma_e2", self.bl.sigma_e2.to_string()),
            ("bl_rho", self.bl.rho.to_string()),
            ("bl_eta_max", self.bl.eta_max.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// Seed lane for channel realizations.
pub(crate) const LANE_CHANNEL: u64 = 1;
/// Seed lane for rank-1 extraction randomness.
pub(crate) const LANE_EXTRACT: u64 = 2;
/// Seed lane for the asynchronous arrival lottery.
pub(crate) const LANE_PROTO: u64 = 3;

/// SplitMix64 finalizer; bijective, spreads neighbouring inputs far apart.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derives the seed for one trial of one grid point on one lane. Pure
/// arithmetic on the inputs, so worker scheduling cannot touch it; pinned
/// by a vector test because artifact reproducibility depends on it.
pub fn trial_seed(master: u64, lane: u64, point: u64, trial: u64) -> u64 {
    let h = splitmix64(master ^ lane.wrapping_mul(0x9E3779B97F4A7C15));
    let h = splitmix64(h ^ point.wrapping_mul(0xBF58476D1CE4E5B9));
    splitmix64(h ^ trial.wrapping_mul(0x94D049BB133111EB))
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global
/// pool when `threads` is 0. Results must not depend on the choice; the
/// determinism tests run both and compare bytes.
pub(crate) fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("worker pool construction cannot fail with positive threads")
            .install(f)
    }
}

/// Runs one named experiment and returns its CSV artifacts: one summary
/// table per experiment, plus a per-trial table where the summary alone
/// would hide the spread (convergence and sum-rate experiments, and the
/// per-realization power run which is per-trial by definition).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<CsvArtifact>, HarnessError> {
    spec.validate()?;
    Ok(match spec.id {
        ExperimentId::FeasibilityVsGamma | ExperimentId::FeasibilityVsEps => {
            runners::feasibility_artifacts(spec)
        }
        ExperimentId::PowerVsGamma => runners::power_artifacts(spec),
        ExperimentId::PowerPerRealization => runners::realization_artifacts(spec),
        ExperimentId::AccuracyVsIter => runners::accuracy_artifacts(spec),
        ExperimentId::ConvergenceVsS | ExperimentId::ConvergenceVsTau => {
            runners::convergence_artifacts(spec)
        }
        ExperimentId::SumrateBlVsSomp => runners::sumrate_artifacts(spec),
    })
}

/// Knobs for [`compare_pipelines`]; `seed` feeds extraction and protocol
/// randomness only, never the channels, which the caller supplies.
#[derive(Debug, Clone)]
pub struct CompareOptions {
    /// Uncertainty ball radius for the robust row; 0 skips it.
    pub epsilon: f64,
    pub admm: SdbfOptions,
    pub proto: AsyncConfig,
    pub seed: u64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            admm: SdbfOptions {
                stop_tol: 1e-3,
                max_outer: 150,
                adaptive_penalty: true,
                ..SdbfOptions::default()
            },
            proto: AsyncConfig {
                quorum: 1,
                max_staleness: 4,
                arrival_prob: 0.6,
                cu_budget: 150,
                seed: 0,
            },
            seed: 0,
        }
    }
}

/// One line of the comparison table.
#[derive(Debug, Clone)]
pub struct PipelineRow {
    pub pipeline: String,
    pub status: TrialStatus,
    /// Total weighted transmit power of the produced design; for the
    /// distributed rows this is the consensus power at the final iterate.
    pub power: f64,
    /// Relaxation objective where one exists.
    pub objective: f64,
    /// Worst per-user relative SINR margin `(SINR − γ)/γ`; NaN when no
    /// beams could be extracted.
    pub min_sinr_margin: f64,
    /// Outer or CU iterations spent; 1 for one-shot solves.
    pub iterations: usize,
    pub converged: bool,
}

/// Verdict of one cross-pipeline consistency check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckOutcome {
    Pass,
    Fail,
    /// Preconditions missing (for example nothing converged), so the check
    /// proves nothing either way.
    Skipped,
}

impl CheckOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckOutcome::Pass => "pass",
            CheckOutcome::Fail => "fail",
            CheckOutcome::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckRow {
    pub name: String,
    pub outcome: CheckOutcome,
    pub detail: String,
}

/// Result of running every pipeline on one shared channel instance.
#[derive(Debug, Clone)]
pub struct PipelineComparison {
    pub rows: Vec<PipelineRow>,
    pub checks: Vec<CheckRow>,
}

impl PipelineComparison {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.outcome != CheckOutcome::Fail)
    }

    /// The power/SINR/iteration table.
    pub fn table_csv(&self, provenance: &[(String, String)]) -> CsvArtifact {
        let mut b = csvio::CsvBuilder::new(
            "compare.csv",
            provenance,
            &["pipeline", "status", "power", "objective", "min_sinr_margin", "iterations", "converged"],
        );
        for r in &self.rows {
            b.row(&[
                r.pipeline.clone(),
                r.status.as_str().to_string(),
                csvio::fmt_f64(r.power),
                csvio::fmt_f64(r.objective),
                csvio::fmt_f64(r.min_sinr_margin),
                r.iterations.to_string(),
                r.converged.to_string(),
            ]);
        }
        b.finish()
    }

    /// The consistency verdicts; details use spaces only, so they stay
    /// single CSV cells.
    pub fn checks_csv(&self, provenance: &[(String, String)]) -> CsvArtifact {
        let mut b =
            csvio::CsvBuilder::new("checks.csv", provenance, &["check", "outcome", "detail"]);
        for c in &self.checks {
            b.row(&[c.name.clone(), c.outcome.as_str().to_string(), c.detail.clone()]);
        }
        b.finish()
    }
}

fn margin_from_beams(
    beams: &[Vec<crate::CVec>],
    channels: &ChannelSet,
    config: &SystemConfig,
) -> f64 {
    let gammas = sinr(beams, channels, &config.noise_vars);
    let mut worst = f64::INFINITY;
    for n in 0..config.n_cells {
        for k in 0..config.users_per_cell {
            worst = worst.min(gammas[n][k] / config.gamma(n, k) - 1.0);
        }
    }
    worst
}

/// Runs every pipeline on the same channel instance and cross-checks the
/// results: the synchronous loop must land within 2 percent of the
/// centralized objective when both finish, the asynchronous protocol in
/// lockstep mode (full quorum, certain arrivals, staleness 1) must
/// reproduce the synchronous trace byte for byte, and a positive
/// uncertainty radius must never make the certified design cheaper than
/// the nominal one.
pub fn compare_pipelines(
    channels: &ChannelSet,
    config: &SystemConfig,
    opts: &CompareOptions,
) -> Result<PipelineComparison, HarnessError> {
    if config.n_cells < 2 {
        return Err(HarnessError::Spec(String::from(
            "pipeline comparison needs at least two cells",
        )));
    }
    if opts.proto.quorum == 0 || opts.proto.quorum > config.n_cells {
        return Err(HarnessError::Spec(format!(
            "quorum must lie in 1..={}, got {}",
            config.n_cells, opts.proto.quorum
        )));
    }
    let mut rows = Vec::new();
    let mut checks = Vec::new();

    // Centralized reference.
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(opts.seed, LANE_EXTRACT, 0, 0));
    let central = solve_centralized(channels, config, &mut rng)
        .map_err(|e| HarnessError::Spec(format!("centralized solve failed: {e}")))?;
    let central_fd = central.feasible().cloned();
    rows.push(match &central_fd {
        Some(fd) => PipelineRow {
            pipeline: String::from("centralized"),
            status: TrialStatus::Feasible,
            power: fd.total_weighted_power,
            objective: fd.sdp_objective,
            min_sinr_margin: margin_from_beams(&fd.beams, channels, config),
            iterations: 1,
            converged: true,
        },
        None => PipelineRow {
            pipeline: String::from("centralized"),
            status: match central {
                CentralizedOutcome::Infeasible => TrialStatus::Infeasible,
                CentralizedOutcome::NoVerdict => TrialStatus::NoVerdict,
                _ => TrialStatus::ExtractionFailed,
            },
            power: f64::NAN,
            objective: f64::NAN,
            min_sinr_margin: f64::NAN,
            iterations: 1,
            converged: false,
        },
    });

    // Synchronous loop with the caller's knobs.
    let sdbf = run_sdbf(channels, config, &opts.admm)
        .map_err(|e| HarnessError::Spec(format!("synchronous loop failed: {e}")))?;
    let sdbf_margin = {
        let flat: Vec<crate::CMat> = sdbf.blocks.iter().flatten().cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(opts.seed, LANE_EXTRACT, 0, 1));
        crate::centralized::extract_beamformers(
            &flat,
            sdbf.trace.final_power(),
            channels,
            config,
            &mut rng,
            100,
        )
        .map(|fd| margin_from_beams(&fd.beams, channels, config))
        .unwrap_or(f64::NAN)
    };
    rows.push(PipelineRow {
        pipeline: String::from("sdbf"),
        status: if sdbf.trace.converged {
            TrialStatus::Feasible
        } else if !sdbf.trace.feasible {
            TrialStatus::Infeasible
        } else {
            TrialStatus::NotConverged
        },
        power: sdbf.trace.final_power(),
        objective: f64::NAN,
        min_sinr_margin: sdbf_margin,
        iterations: sdbf.trace.iterations(),
        converged: sdbf.trace.converged,
    });

    // Lockstep pair for the protocol reduction check: full quorum, certain
    // arrivals, staleness 1, and a fixed penalty on both sides (the
    // adaptive schedule exists only in the synchronous driver, so the
    // paired run pins it off).
    let fixed = SdbfOptions { adaptive_penalty: false, ..opts.admm.clone() };
    let sdbf_fixed = run_sdbf(channels, config, &fixed)
        .map_err(|e| HarnessError::Spec(format!("synchronous loop failed: {e}")))?;
    let lockstep_proto = AsyncConfig {
        quorum: config.n_cells,
        max_staleness: 1,
        arrival_prob: 1.0,
        cu_budget: fixed.max_outer,
        seed: trial_seed(opts.seed, LANE_PROTO, 0, 0),
    };
    let lockstep = crate::async_proto::run_adbf(
        channels,
        config,
        &lockstep_proto,
        fixed.penalty,
        fixed.stop_tol,
    )
    .map_err(|e| HarnessError::Spec(format!("lockstep protocol run failed: {e}")))?;
    rows.push(PipelineRow {
        pipeline: String::from("adbf_lockstep"),
        status: if lockstep.trace.converged {
            TrialStatus::Feasible
        } else if lockstep.trace.stalled {
            TrialStatus::Stalled
        } else {
            TrialStatus::NotConverged
        },
        power: lockstep.trace.final_power(),
        objective: f64::NAN,
        min_sinr_margin: f64::NAN,
        iterations: lockstep.trace.iterations(),
        converged: lockstep.trace.converged,
    });
    let bitwise = sdbf_fixed.trace.rows_csv() == lockstep.trace.rows_csv();
    checks.push(CheckRow {
        name: String::from("lockstep_protocol_reduces_to_synchronous"),
        outcome: if bitwise { CheckOutcome::Pass } else { CheckOutcome::Fail },
        detail: if bitwise {
            format!("traces identical over {} iterations", sdbf_fixed.trace.iterations())
        } else {
            String::from("iteration traces differ")
        },
    });

    // Asynchronous protocol with the caller's knobs.
    let proto = AsyncConfig { seed: trial_seed(opts.seed, LANE_PROTO, 0, 1), ..opts.proto.clone() };
    let adbf =
        crate::async_proto::run_adbf(channels, config, &proto, opts.admm.penalty, opts.admm.stop_tol)
            .map_err(|e| HarnessError::Spec(format!("asynchronous protocol run failed: {e}")))?;
    rows.push(PipelineRow {
        pipeline: String::from("adbf"),
        status: if adbf.trace.converged {
            TrialStatus::Feasible
        } else if adbf.trace.stalled {
            TrialStatus::Stalled
        } else {
            TrialStatus::NotConverged
        },
        power: adbf.trace.final_power(),
        objective: f64::NAN,
        min_sinr_margin: f64::NAN,
        iterations: adbf.trace.iterations(),
        converged: adbf.trace.converged,
    });

    let central_row_power = central_fd.as_ref().map(|fd| fd.sdp_objective);
    match (central_row_power, sdbf.trace.converged) {
        (Some(obj), true) => {
            let gap = (sdbf.trace.final_power() - obj).abs() / obj;
            checks.push(CheckRow {
                name: String::from("synchronous_matches_centralized"),
                outcome: if gap <= 0.02 { CheckOutcome::Pass } else { CheckOutcome::Fail },
                detail: format!("relative power gap {gap:.6}"),
            });
        }
        _ => checks.push(CheckRow {
            name: String::from("synchronous_matches_centralized"),
            outcome: CheckOutcome::Skipped,
            detail: String::from("needs a feasible centralized solve and a converged loop"),
        }),
    }

    // Robust row and dominance check.
    if opts.epsilon > 0.0 {
        let uncertainty =
            UncertaintyModel::uniform_sphere(opts.epsilon, config.n_cells, config.users_per_cell);
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(opts.seed, LANE_EXTRACT, 0, 2));
        let robust = solve_robust_centralized(channels, config, &uncertainty, &mut rng)
            .map_err(|e| HarnessError::Spec(format!("robust solve failed: {e}")))?;
        match robust {
            RobustOutcome::Feasible(sol) => {
                let min_margin = sol
                    .margins
                    .iter()
                    .flatten()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                rows.push(PipelineRow {
                    pipeline: String::from("robust_centralized"),
                    status: TrialStatus::Feasible,
                    power: sol.design.total_weighted_power,
                    objective: sol.objective,
                    min_sinr_margin: min_margin,
                    iterations: 1,
                    converged: true,
                });
                match central_row_power {
                    Some(nominal) => {
                        let premium = sol.objective / nominal - 1.0;
                        let ok = sol.objective >= nominal * (1.0 - 1e-9);
                        checks.push(CheckRow {
                            name: String::from("certified_design_costs_at_least_nominal"),
                            outcome: if ok { CheckOutcome::Pass } else { CheckOutcome::Fail },
                            detail: format!("robust power premium {premium:.6}"),
                        });
                    }
                    None => checks.push(CheckRow {
                        name: String::from("certified_design_costs_at_least_nominal"),
                        outcome: CheckOutcome::Skipped,
                        detail: String::from("nominal problem was not feasible"),
                    }),
                }
            }
            other => {
                rows.push(PipelineRow {
                    pipeline: String::from("robust_centralized"),
                    status: match other {
                        RobustOutcome::Infeasible => TrialStatus::Infeasible,
                        RobustOutcome::NoVerdict => TrialStatus::NoVerdict,
                        _ => TrialStatus::ExtractionFailed,
                    },
                    power: f64::NAN,
                    objective: f64::NAN,
                    min_sinr_margin: f64::NAN,
                    iterations: 1,
                    converged: false,
                });
                checks.push(CheckRow {
                    name: String::from("certified_design_costs_at_least_nominal"),
                    outcome: CheckOutcome::Skipped,
                    detail: String::from("robust problem was not feasible at this radius"),
                });
            }
        }
    }

    Ok(PipelineComparison { rows, checks })
}
