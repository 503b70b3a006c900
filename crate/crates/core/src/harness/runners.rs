//! Monte-Carlo engines behind the named experiments.
//!
//! Each engine exists in two forms: a structured sweep returning typed
//! results (what tests and threshold gates consume) and an artifact builder
//! wrapping it into provenance-headed CSV (what the command line writes).
//! All engines fan trials out through the worker pool and collect into
//! index order, with every random stream seeded from the master seed, so
//! the artifact bytes cannot depend on scheduling. Within one experiment,
//! grid points reuse the channel draw of each trial: sweeps compare the
//! same instances under different knobs rather than resampling per point.

use super::csvio::{fmt_f64, CsvArtifact, CsvBuilder};
use super::stats::median;
use super::{
    in_pool, trial_seed, ExperimentId, ExperimentSpec, HarnessError, Pipeline, TrialStatus,
    LANE_CHANNEL, LANE_EXTRACT, LANE_PROTO,
};
use crate::async_proto::{run_adbf, AdbfRun, AsyncConfig};
use crate::centralized::{
    extract_beamformers, solve_centralized, CentralizedOutcome, DEFAULT_N_RAND,
};
use crate::channel::{build_dictionary, sample_channel, ChannelSet, SystemConfig};
use crate::hybrid::{bl_decompose, evaluate_hybrid, somp_decompose, HybridPrecoder};
use crate::metrics::{feasibility_rate, to_dbm, ExperimentTrace};
use crate::robust::{
    extract_robust_beamformers, run_robust_adbf, run_robust_sdbf, solve_robust_centralized,
    RobustOutcome, UncertaintyModel,
};
use crate::sync_dist::{run_sdbf, SdbfOptions};
use crate::CMat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn channels_for(sys: &SystemConfig, seed: u64) -> ChannelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_channel(sys, &mut rng)
}

fn sphere(eps: f64, sys: &SystemConfig) -> Option<UncertaintyModel> {
    (eps > 0.0).then(|| UncertaintyModel::uniform_sphere(eps, sys.n_cells, sys.users_per_cell))
}

/// One-shot solve at the central unit, robust when `eps > 0`.
struct CentralTrial {
    status: TrialStatus,
    objective: f64,
    power: f64,
}

fn central_trial(channels: &ChannelSet, sys: &SystemConfig, eps: f64, seed: u64) -> CentralTrial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let failed = |status| CentralTrial { status, objective: f64::NAN, power: f64::NAN };
    match sphere(eps, sys) {
        Some(u) => match solve_robust_centralized(channels, sys, &u, &mut rng) {
            Ok(RobustOutcome::Feasible(sol)) => CentralTrial {
                status: TrialStatus::Feasible,
                objective: sol.objective,
                power: sol.design.total_weighted_power,
            },
            Ok(RobustOutcome::Infeasible) => failed(TrialStatus::Infeasible),
            Ok(RobustOutcome::NoVerdict) => failed(TrialStatus::NoVerdict),
            Ok(RobustOutcome::ExtractionFailed) => failed(TrialStatus::ExtractionFailed),
            Err(_) => failed(TrialStatus::SolverError),
        },
        None => match solve_centralized(channels, sys, &mut rng) {
            Ok(CentralizedOutcome::Feasible(fd)) => CentralTrial {
                status: TrialStatus::Feasible,
                objective: fd.sdp_objective,
                power: fd.total_weighted_power,
            },
            Ok(CentralizedOutcome::Infeasible) => failed(TrialStatus::Infeasible),
            Ok(CentralizedOutcome::NoVerdict) => failed(TrialStatus::NoVerdict),
            Ok(CentralizedOutcome::ExtractionFailed) => failed(TrialStatus::ExtractionFailed),
            Err(_) => failed(TrialStatus::SolverError),
        },
    }
}

/// Status of a finished consensus trace. The loops certify feasibility
/// only at convergence; a run that spent its budget is reported as
/// unconverged rather than guessed at.
fn trace_status(trace: &ExperimentTrace) -> TrialStatus {
    if trace.converged && trace.feasible {
        TrialStatus::Feasible
    } else if trace.converged {
        TrialStatus::Infeasible
    } else if trace.stalled {
        TrialStatus::Stalled
    } else {
        TrialStatus::NotConverged
    }
}

fn sdbf_trial(
    channels: &ChannelSet,
    sys: &SystemConfig,
    eps: f64,
    admm: &SdbfOptions,
) -> (TrialStatus, f64, usize) {
    let run = match sphere(eps, sys) {
        Some(u) => run_robust_sdbf(channels, sys, &u, admm),
        None => run_sdbf(channels, sys, admm),
    };
    match run {
        Ok(r) => (trace_status(&r.trace), r.trace.final_power(), r.trace.iterations()),
        Err(_) => (TrialStatus::SolverError, f64::NAN, 0),
    }
}

fn adbf_trial(
    channels: &ChannelSet,
    sys: &SystemConfig,
    eps: f64,
    proto: &AsyncConfig,
    penalty: f64,
    stop_tol: f64,
) -> Result<AdbfRun, TrialStatus> {
    let run = match sphere(eps, sys) {
        Some(u) => run_robust_adbf(channels, sys, &u, proto, penalty, stop_tol),
        None => run_adbf(channels, sys, proto, penalty, stop_tol),
    };
    run.map_err(|_| TrialStatus::SolverError)
}

/// Last recorded total power at or before `iter`; None before the first
/// global update.
fn power_at(trace: &ExperimentTrace, iter: usize) -> Option<f64> {
    trace.rows().iter().take_while(|r| r.iteration <= iter).last().map(|r| r.total_power)
}

/// One grid point of a feasibility sweep with its per-trial verdicts.
#[derive(Debug, Clone)]
pub struct FeasibilityCell {
    pub gamma: f64,
    pub epsilon: f64,
    pub statuses: Vec<TrialStatus>,
}

impl FeasibilityCell {
    pub fn count(&self, status: TrialStatus) -> usize {
        self.statuses.iter().filter(|&&s| s == status).count()
    }

    pub fn feasible(&self) -> usize {
        self.count(TrialStatus::Feasible)
    }

    /// Percentage of all trials that produced a working design; failures
    /// of any kind count against it.
    pub fn rate(&self) -> f64 {
        feasibility_rate(self.feasible(), self.statuses.len())
    }
}

/// Feasibility rate over the `eps x gamma` grid under the spec's pipeline.
pub fn feasibility_sweep(spec: &ExperimentSpec) -> Result<Vec<FeasibilityCell>, HarnessError> {
    spec.validate()?;
    let points: Vec<(f64, f64)> = spec
        .eps_grid
        .iter()
        .flat_map(|&e| spec.gamma_grid.iter().map(move |&g| (e, g)))
        .collect();
    let jobs: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|p| (0..spec.trials).map(move |t| (p, t))).collect();
    let statuses: Vec<TrialStatus> = in_pool(spec.threads, || {
        jobs.par_iter()
            .map(|&(p, t)| {
                let (eps, gamma) = points[p];
                let sys = spec.system.clone().with_target_sinr(gamma);
                let ch = channels_for(&sys, trial_seed(spec.seed, LANE_CHANNEL, 0, t as u64));
                match spec.pipeline {
                    Pipeline::Centralized => {
                        let seed = trial_seed(spec.seed, LANE_EXTRACT, p as u64, t as u64);
                        central_trial(&ch, &sys, eps, seed).status
                    }
                    Pipeline::Sdbf => sdbf_trial(&ch, &sys, eps, &spec.admm).0,
                    Pipeline::Adbf => {
                        let proto = AsyncConfig {
                            seed: trial_seed(spec.seed, LANE_PROTO, 0, t as u64),
                            ..spec.proto.clone()
                        };
                        match adbf_trial(&ch, &sys, eps, &proto, spec.admm.penalty, spec.admm.stop_tol)
                        {
                            Ok(run) => trace_status(&run.trace),
                            Err(status) => status,
                        }
                    }
                }
            })
            .collect()
    });
    Ok(points
        .iter()
        .enumerate()
        .map(|(p, &(eps, gamma))| FeasibilityCell {
            gamma,
            epsilon: eps,
            statuses: statuses[p * spec.trials..(p + 1) * spec.trials].to_vec(),
        })
        .collect())
}

pub(super) fn feasibility_artifacts(spec: &ExperimentSpec) -> Vec<CsvArtifact> {
    let cells = feasibility_sweep(spec).expect("spec validated by the dispatcher");
    let mut b = CsvBuilder::new(
        &format!("{}.csv", spec.id),
        &spec.provenance(),
        &[
            "epsilon",
            "gamma",
            "trials",
            "feasible",
            "infeasible",
            "no_verdict",
            "extraction_failed",
            "not_converged",
            "stalled",
            "solver_error",
            "rate",
        ],
    );
    for c in &cells {
        b.row(&[
            fmt_f64(c.epsilon),
            fmt_f64(c.gamma),
            c.statuses.len().to_string(),
            c.feasible().to_string(),
            c.count(TrialStatus::Infeasible).to_string(),
            c.count(TrialStatus::NoVerdict).to_string(),
            c.count(TrialStatus::ExtractionFailed).to_string(),
            c.count(TrialStatus::NotConverged).to_string(),
            c.count(TrialStatus::Stalled).to_string(),
            c.count(TrialStatus::SolverError).to_string(),
            fmt_f64(c.rate()),
        ]);
    }
    vec![b.finish()]
}

/// One grid point of the transmit-power sweep.
#[derive(Debug, Clone)]
pub struct PowerCell {
    pub n_tx: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub statuses: Vec<TrialStatus>,
    /// Per-trial total weighted power; NaN where the trial failed.
    pub powers: Vec<f64>,
}

impl PowerCell {
    pub fn feasible(&self) -> usize {
        self.statuses.iter().filter(|s| s.is_feasible()).count()
    }

    /// Mean power over the feasible trials; NaN when none were.
    pub fn mean_power(&self) -> f64 {
        let xs: Vec<f64> = self.powers.iter().copied().filter(|p| p.is_finite()).collect();
        if xs.is_empty() {
            f64::NAN
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    }
}

/// Mean transmit power over the `n_tx x eps x gamma` grid.
pub fn power_sweep(spec: &ExperimentSpec) -> Result<Vec<PowerCell>, HarnessError> {
    spec.validate()?;
    let points: Vec<(usize, f64, f64)> = spec
        .ntx_grid
        .iter()
        .flat_map(|&n| {
            spec.eps_grid
                .iter()
                .flat_map(move |&e| spec.gamma_grid.iter().map(move |&g| (n, e, g)))
        })
        .collect();
    let jobs: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|p| (0..spec.trials).map(move |t| (p, t))).collect();
    let results: Vec<(TrialStatus, f64)> = in_pool(spec.threads, || {
        jobs.par_iter()
            .map(|&(p, t)| {
                let (n_tx, eps, gamma) = points[p];
                let mut sys = spec.system.clone().with_target_sinr(gamma);
                sys.n_tx = n_tx;
                sys.dict_size = 4 * n_tx;
                let ch = channels_for(&sys, trial_seed(spec.seed, LANE_CHANNEL, 0, t as u64));
                match spec.pipeline {
                    Pipeline::Centralized => {
                        let seed = trial_seed(spec.seed, LANE_EXTRACT, p as u64, t as u64);
                        let r = central_trial(&ch, &sys, eps, seed);
                        (r.status, r.power)
                    }
                    Pipeline::Sdbf => {
                        let (status, power, _) = sdbf_trial(&ch, &sys, eps, &spec.admm);
                        (status, if status.is_feasible() { power } else { f64::NAN })
                    }
                    Pipeline::Adbf => {
                        let proto = AsyncConfig {
                            seed: trial_seed(spec.seed, LANE_PROTO, 0, t as u64),
                            ..spec.proto.clone()
                        };
                        match adbf_trial(&ch, &sys, eps, &proto, spec.admm.penalty, spec.admm.stop_tol)
                        {
                            Ok(run) => {
                                let status = trace_status(&run.trace);
                                let power = if status.is_feasible() {
                                    run.trace.final_power()
                                } else {
                                    f64::NAN
                                };
                                (status, power)
                            }
                            Err(status) => (status, f64::NAN),
                        }
                    }
                }
            })
            .collect()
    });
    Ok(points
        .iter()
        .enumerate()
        .map(|(p, &(n_tx, eps, gamma))| {
            let slice = &results[p * spec.trials..(p + 1) * spec.trials];
            PowerCell {
                n_tx,
                epsilon: eps,
                gamma,
                statuses: slice.iter().map(|r| r.0).collect(),
                powers: slice.iter().map(|r| r.1).collect(),
            }
        })
        .collect())
}

pub(super) fn power_artifacts(spec: &ExperimentSpec) -> Vec<CsvArtifact> {
    let cells = power_sweep(spec).expect("spec validated by the dispatcher");
    let mut b = CsvBuilder::new(
        &format!("{}.csv", spec.id),
        &spec.provenance(),
        &["n_tx", "epsilon", "gamma", "trials", "feasible", "mean_power", "mean_power_dbm"],
    );
    for c in &cells {
        b.row(&[
            c.n_tx.to_string(),
            fmt_f64(c.epsilon),
            fmt_f64(c.gamma),
            c.statuses.len().to_string(),
            c.feasible().to_string(),
            fmt_f64(c.mean_power()),
            fmt_f64(to_dbm(c.mean_power())),
        ]);
    }
    vec![b.finish()]
}

/// One channel realization of the per-realization power run: the
/// centralized reference, the asynchronous protocol read at half and full
/// budget, and the certified asynchronous run at the spec radius.
#[derive(Debug, Clone)]
pub struct RealizationRow {
    pub trial: usize,
    pub centralized_status: TrialStatus,
    pub centralized_objective: f64,
    pub centralized_power: f64,
    pub adbf_status: TrialStatus,
    pub adbf_iterations: usize,
    pub adbf_power_mid: f64,
    pub adbf_power_final: f64,
    pub robust_status: TrialStatus,
    pub robust_power_final: f64,
}

/// Per-realization power comparison on `trials` shared channel draws.
pub fn realization_sweep(spec: &ExperimentSpec) -> Result<Vec<RealizationRow>, HarnessError> {
    spec.validate()?;
    let mid = (spec.proto.cu_budget / 2).max(1);
    let rows: Vec<RealizationRow> = in_pool(spec.threads, || {
        (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let sys = &spec.system;
                let ch = channels_for(sys, trial_seed(spec.seed, LANE_CHANNEL, 0, t as u64));
                let central =
                    central_trial(&ch, sys, 0.0, trial_seed(spec.seed, LANE_EXTRACT, 0, t as u64));
                let proto = AsyncConfig {
                    seed: trial_seed(spec.seed, LANE_PROTO, 0, t as u64),
                    ..spec.proto.clone()
                };
                let (adbf_status, adbf_iterations, adbf_mid, adbf_final) =
                    match adbf_trial(&ch, sys, 0.0, &proto, spec.admm.penalty, spec.admm.stop_tol) {
                        Ok(run) => (
                            trace_status(&run.trace),
                            run.trace.iterations(),
                            power_at(&run.trace, mid).unwrap_or(f64::NAN),
                            run.trace.final_power(),
                        ),
                        Err(status) => (status, 0, f64::NAN, f64::NAN),
                    };
                // Same lottery seed as the nominal run: the robust column
                // differs only in its local subproblems.
                let (robust_status, robust_final) = if spec.epsilon > 0.0 {
                    match adbf_trial(
                        &ch,
                        sys,
                        spec.epsilon,
                        &proto,
                        spec.admm.penalty,
                        spec.admm.stop_tol,
                    ) {
                        Ok(run) => (trace_status(&run.trace), run.trace.final_power()),
                        Err(status) => (status, f64::NAN),
                    }
                } else {
                    (TrialStatus::Infeasible, f64::NAN)
                };
                RealizationRow {
                    trial: t,
                    centralized_status: central.status,
                    centralized_objective: central.objective,
                    centralized_power: central.power,
                    adbf_status,
                    adbf_iterations,
                    adbf_power_mid: adbf_mid,
                    adbf_power_final: adbf_final,
                    robust_status,
                    robust_power_final: robust_final,
                }
            })
            .collect()
    });
    Ok(rows)
}

pub(super) fn realization_artifacts(spec: &ExperimentSpec) -> Vec<CsvArtifact> {
    let rows = realization_sweep(spec).expect("spec validated by the dispatcher");
    let mid = (spec.proto.cu_budget / 2).max(1);
    let mut b = CsvBuilder::new(
        &format!("{}.csv", spec.id),
        &spec.provenance(),
        &[
            "realization",
            "centralized_status",
            "centralized_objective",
            "centralized_power",
            "adbf_status",
            "adbf_iterations",
            &format!("adbf_power_q{mid}"),
            &format!("adbf_power_q{}", spec.proto.cu_budget),
            "robust_status",
            "robust_power_final",
        ],
    );
    for r in &rows {
        b.row(&[
            r.trial.to_string(),
            r.centralized_status.as_str().to_string(),
            fmt_f64(r.centralized_objective),
            fmt_f64(r.centralized_power),
            r.adbf_status.as_str().to_string(),
            r.adbf_iterations.to_string(),
            fmt_f64(r.adbf_power_mid),
            fmt_f64(r.adbf_power_final),
            r.robust_status.as_str().to_string(),
            fmt_f64(r.robust_power_final),
        ]);
    }
    vec![b.finish()]
}

/// Median normalized power accuracy per iteration for the synchronous loop
/// and the asynchronous protocol, against the centralized optimum of each
/// trial.
#[derive(Debug, Clone)]
pub struct AccuracyCurves {
    /// Iteration axis runs `1..=budget`.
    pub budget: usize,
    /// Trials whose centralized reference was feasible and whose loops ran.
    pub trials_used: usize,
    pub sdbf_median: Vec<f64>,
    pub adbf_median: Vec<f64>,
}

/// Accuracy-versus-iteration curves over `trials` channel draws. Loops
/// that converge early hold their final power for the remaining axis, the
/// same convention the per-iteration traces use.
pub fn accuracy_curves(spec: &ExperimentSpec) -> Result<AccuracyCurves, HarnessError> {
    spec.validate()?;
    let budget = spec.admm.max_outer;
    type TrialCurves = (Vec<f64>, Vec<f64>);
    let per_trial: Vec<Option<TrialCurves>> = in_pool(spec.threads, || {
        (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let sys = &spec.system;
                let ch = channels_for(sys, trial_seed(spec.seed, LANE_CHANNEL, 0, t as u64));
                let central = central_trial(
                    &ch,
                    sys,
                    spec.epsilon,
                    trial_seed(spec.seed, LANE_EXTRACT, 0, t as u64),
                );
                if !central.status.is_feasible() {
                    return None;
                }
                let p_star = central.objective;
                let admm = SdbfOptions { max_outer: budget, ..spec.admm.clone() };
                let sdbf = match sphere(spec.epsilon, sys) {
                    Some(u) => run_robust_sdbf(&ch, sys, &u, &admm),
                    None => run_sdbf(&ch, sys, &admm),
                }
                .ok()?;
                let proto = AsyncConfig {
                    cu_budget: budget,
                    seed: trial_seed(spec.seed, LANE_PROTO, 0, t as u64),
                    ..spec.proto.clone()
                };
                let adbf =
                    adbf_trial(&ch, sys, spec.epsilon, &proto, spec.admm.penalty, spec.admm.stop_tol)
                        .ok()?;
                let curve = |trace: &ExperimentTrace| -> Vec<f64> {
                    (1..=budget)
                        .map(|i| {
                            power_at(trace, i)
                                .map_or(f64::NAN, |p| (p - p_star).abs() / p_star)
                        })
                        .collect()
                };
                Some((curve(&sdbf.trace), curve(&adbf.trace)))
            })
            .collect()
    });
    let used: Vec<&TrialCurves> = per_trial.iter().flatten().collect();
    let median_at = |pick: fn(&TrialCurves) -> &Vec<f64>, i: usize| -> f64 {
        let xs: Vec<f64> = used.iter().map(|c| pick(c)[i]).collect();
        median(&xs)
    };
    Ok(AccuracyCurves {
        budget,
        trials_used: used.len(),
        sdbf_median: (0..budget).map(|i| median_at(|c| &c.0, i)).collect(),
        adbf_median: (0..budget).map(|i| median_at(|c| &c.1, i)).collect(),
    })
}

pub(super) fn accuracy_artifacts(spec: &ExperimentSpec) -> Vec<CsvArtifact> {
    let curves = accuracy_curves(spec).expect("spec validated by the dispatcher");
    let mut b = CsvBuilder::new(
        &format!("{}.csv", spec.id),
        &spec.provenance(),
        &["iteration", "sdbf_median_accuracy", "adbf_median_accuracy", "trials"],
    );
    for i in 0..curves.budget {
        b.row(&[
            (i + 1).to_string(),
            fmt_f64(curves.sdbf_median[i]),
            fmt_f64(curves.adbf_median[i]),
            curves.trials_used.to_string(),
        ]);
    }
    vec![b.finish()]
}

/// Which protocol knob a convergence sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Reports required before the central unit fires.
    Quorum,
    /// Staleness bound on the bounded-delay gate.
    Staleness,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Quorum => "quorum",
            SweepAxis::Staleness => "staleness",
        }
    }
}

/// One grid value with per-trial iterations-to-accuracy (None when the
/// budget ran out first).
#[derive(Debug, Clone)]
pub struct ConvergencePoint {
    pub value: usize,
    pub iterations: Vec<Option<usize>>,
}

impl ConvergencePoint {
    pub fn reached(&self) -> usize {
        self.iterations.iter().filter(|i| i.is_some()).count()
    }

    /// Median iterations over the trials that reached the target; NaN when
    /// none did.
    pub fn median_iterations(&self) -> f64 {
        let xs: Vec<f64> = self.iterations.iter().flatten().map(|&i| i as f64).collect();
        median(&xs)
    }
}

/// Iterations-to-accuracy as one protocol knob sweeps.
#[derive(Debug, Clone)]
pub struct ConvergenceSweep {
    pub axis: SweepAxis,
    pub points: Vec<ConvergencePoint>,
    /// Trials with a feasible centralized reference; the per-point vectors
    /// are aligned over these.
    pub trials_used: usize,
}

impl ConvergenceSweep {
    /// `(knob value, iterations)` pairs over every trial that reached the
    /// target, the input to rank-correlation tests.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .flat_map(|p| {
                p.iterations.iter().flatten().map(|&i| (p.value as f64, i as f64))
            })
            .collect()
    }

    pub fn medians(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.median_iterations()).collect()
    }
}

/// Iterations to the accuracy target as the quorum or the staleness bound
/// sweeps. Trials share channels and lottery seeds across grid values, so
/// each trial compares the same instance under different protocol knobs.
pub fn convergence_sweep(spec: &ExperimentSpec) -> Result<ConvergenceSweep, HarnessError> {
    spec.validate()?;
    let axis = match spec.id {
        ExperimentId::ConvergenceVsS => SweepAxis::Quorum,
        ExperimentId::ConvergenceVsTau => SweepAxis::Staleness,
        other => {
            return Err(HarnessError::Spec(format!(
                "convergence sweep needs a convergence experiment, got {other}"
            )))
        }
    };
    let grid: &[usize] = match axis {
        SweepAxis::Quorum => &spec.quorum_grid,
        SweepAxis::Staleness => &spec.staleness_grid,
    };
    // References first: one centralized optimum per usable trial.
    let refs: Vec<(usize, ChannelSet, f64)> = in_pool(spec.threads, || {
        (0..spec.trials)
            .into_par_iter()
            .filter_map(|t| {
                let ch =
                    channels_for(&spec.system, trial_seed(spec.seed, LANE_CHANNEL, 0, t as u64));
                let central = central_trial(
                    &ch,
                    &spec.system,
                    spec.epsilon,
                    trial_seed(spec.seed, LANE_EXTRACT, 0, t as u64),
                );
                central.status.is_feasible().then(|| (t, ch, central.objective))
            })
            .collect()
    });
    let jobs: Vec<(usize, usize)> =
        (0..grid.len()).flat_map(|p| (0..refs.len()).map(move |r| (p, r))).collect();
    let outcomes: Vec<Option<usize>> = in_pool(spec.threads, || {
        jobs.par_iter()
            .map(|&(p, r)| {
                let (t, ch, p_star) = &refs[r];
                let mut proto = AsyncConfig {
                    seed: trial_seed(spec.seed, LANE_PROTO, 0, *t as u64),
                    ..spec.proto.clone()
                };
                match axis {
                    SweepAxis::Quorum => proto.quorum = grid[p],
                    SweepAxis::Staleness => proto.max_staleness = grid[p],
                }
                adbf_trial(ch, &spec.system, spec.epsilon, &proto, spec.admm.penalty, spec.admm.stop_tol)
                    .ok()
                    .and_then(|run| run.trace.iterations_to_accuracy(*p_star, spec.accuracy_target))
            })
            .collect()
    });
    let points = grid
        .iter()
        .enumerate()
        .map(|(p, &value)| ConvergencePoint {
            value,
            iterations: outcomes[p * refs.len()..(p + 1) * refs.len()].to_vec(),
        })
        .collect();
    Ok(ConvergenceSweep { axis, points, trials_used: refs.len() })
}

pub(super) fn convergence_artifacts(spec: &ExperimentSpec) -> Vec<CsvArtifact> {
    let sweep = convergence_sweep(spec).expect("spec validated by the dispatcher");
    let axis = sweep.axis.name();
    let mut summary = CsvBuilder::new(
        &format!("{}.csv", spec.id),
        &spec.provenance(),
        &[axis, "trials", "reached", "median_iterations"],
    );
    for p in &sweep.points {
        summary.row(&[
            p.value.to_string(),
            p.iterations.len().to_string(),
            p.reached().to_string(),
            fmt_f64(p.median_iterations()),
        ]);
    }
    let mut trials = CsvBuilder::new(
        &format!("{}_trials.csv", spec.id),
        &spec.provenance(),
        &[axis, "trial", "iterations"],
    );
    for p in &sweep.points {
        for (r, iters) in p.iterations.iter().enumerate() {
            trials.row(&[
                p.value.to_string(),
                r.to_string(),
                iters.map_or(String::from("nan"), |i| i.to_string()),
            ]);
        }
    }
    vec![summary.finish(), trials.finish()]
}

/// One Monte-Carlo draw of the hybrid sum-rate experiment.
#[derive(Debug, Clone)]
pub struct SumRateTrial {
    pub gamma: f64,
    pub trial: usize,
    pub status: TrialStatus,
    /// Sum rate of the fully digital consensus design.
    pub rate_fd: f64,
    /// Sum rate after the Bayesian-learning factorization.
    pub rate_bl: f64,
    /// Sum rate after the matching-pursuit factorization.
    pub rate_somp: f64,
}

/// Distributed design, then hybrid factorization by both methods, on the
/// same instances across the target grid.
pub fn sumrate_sweep(spec: &ExperimentSpec) -> Result<Vec<SumRateTrial>, HarnessError> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.gamma_grid.len())
        .flat_map(|p| (0..spec.trials).map(move |t| (p, t)))
        .collect();
    let rows: Vec<SumRateTrial> = in_pool(spec.threads, || {
        jobs.par_iter()
            .map(|&(p, t)| {
                let gamma = spec.gamma_grid[p];
                let mut out = SumRateTrial {
                    gamma,
                    trial: t,
                    status: TrialStatus::SolverError,
                    rate_fd: f64::NAN,
                    rate_bl: f64::NAN,
                    rate_somp: f64::NAN,
                };
                let sys = spec.system.clone().with_target_sinr(gamma);
                let ch = channels_for(&sys, trial_seed(spec.seed, LANE_CHANNEL, 0, t as u64));
                let proto = AsyncConfig {
                    seed: trial_seed(spec.seed, LANE_PROTO, 0, t as u64),
                    ..spec.proto.clone()
                };
                let run = match adbf_trial(
                    &ch,
                    &sys,
                    spec.epsilon,
                    &proto,
                    spec.admm.penalty,
                    spec.admm.stop_tol,
                ) {
                    Ok(run) => run,
                    Err(status) => {
                        out.status = status;
                        return out;
                    }
                };
                let status = trace_status(&run.trace);
                if !status.is_feasible() {
                    out.status = status;
                    return out;
                }
                let flat: Vec<CMat> = run.blocks.iter().flatten().cloned().collect();
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(
                    spec.seed,
                    LANE_EXTRACT,
                    p as u64,
                    t as u64,
                ));
                let fd = match sphere(spec.epsilon, &sys) {
                    Some(u) => extract_robust_beamformers(
                        &flat,
                        run.trace.final_power(),
                        &ch,
                        &sys,
                        &u,
                        &mut rng,
                        DEFAULT_N_RAND,
                    ),
                    None => extract_beamformers(
                        &flat,
                        run.trace.final_power(),
                        &ch,
                        &sys,
                        &mut rng,
                        DEFAULT_N_RAND,
                    ),
                };
                let fd = match fd {
                    Ok(fd) => fd,
                    Err(_) => {
                        out.status = TrialStatus::ExtractionFailed;
                        return out;
                    }
                };
                out.rate_fd = fd.sum_rate();
                let dict = build_dictionary(sys.dict_size, sys.n_tx, sys.d_over_lambda);
                let factorize =
                    |method: &dyn Fn(&CMat) -> Option<HybridPrecoder>| -> Option<Vec<HybridPrecoder>> {
                        (0..sys.n_cells)
                            .map(|n| {
                                let target = CMat::from_fn(sys.n_tx, sys.users_per_cell, |i, k| {
                                    fd.beams[n][k][i]
                                });
                                method(&target)
                            })
                            .collect()
                    };
                let bl = factorize(&|target| bl_decompose(target, &dict, sys.n_rf, &spec.bl).ok());
                let somp = factorize(&|target| Some(somp_decompose(target, &dict, sys.n_rf)));
                match (bl, somp) {
                    (Some(bl), Some(somp)) => {
                        out.status = TrialStatus::Feasible;
                        out.rate_bl = evaluate_hybrid(&ch, &bl, &sys).1;
                        out.rate_somp = evaluate_hybrid(&ch, &somp, &sys).1;
                    }
                    _ => out.status = TrialStatus::SolverError,
                }
                out
            })
            .collect()
    });
    Ok(rows)
}

pub(super) fn sumrate_artifacts(spec: &ExperimentSpec) -> Vec<CsvArtifact> {
    let rows = sumrate_sweep(spec).expect("spec validated by the dispatcher");
    let mut summary = CsvBuilder::new(
        &format!("{}.csv", spec.id),
        &spec.provenance(),
        &["gamma", "trials", "used", "mean_rate_fd", "mean_rate_bl", "mean_rate_somp"],
    );
    for &gamma in &spec.gamma_grid {
        let used: Vec<&SumRateTrial> = rows
            .iter()
            .filter(|r| r.gamma == gamma && r.status.is_feasible())
            .collect();
        let mean = |pick: fn(&SumRateTrial) -> f64| -> f64 {
            if used.is_empty() {
                f64::NAN
            } else {
                used.iter().map(|r| pick(r)).sum::<f64>() / used.len() as f64
            }
        };
        summary.row(&[
            fmt_f64(gamma),
            spec.trials.to_string(),
            used.len().to_string(),
            fmt_f64(mean(|r| r.rate_fd)),
            fmt_f64(mean(|r| r.rate_bl)),
            fmt_f64(mean(|r| r.rate_somp)),
        ]);
    }
    let mut trials = CsvBuilder::new(
        &format!("{}_trials.csv", spec.id),
        &spec.provenance(),
        &["gamma", "trial", "status", "rate_fd", "rate_bl", "rate_somp"],
    );
    for r in &rows {
        trials.row(&[
            fmt_f64(r.gamma),
            r.trial.to_string(),
            r.status.as_str().to_string(),
            fmt_f64(r.rate_fd),
            fmt_f64(r.rate_bl),
            fmt_f64(r.rate_somp),
        ]);
    }
    vec![summary.finish(), trials.finish()]
}
