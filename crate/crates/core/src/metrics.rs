//! Scalar figures of merit and run traces: SINR, sum rate, feasibility
//! accounting, normalized power accuracy, signaling-overhead counters.
//!
//! Everything here is a pure function of its inputs; traces store enough to
//! recompute every summary they carry.

use crate::channel::ChannelSet;
use crate::CVec;

/// Downlink SINR of every user: `Γ_nk` has the desired-beam power of link
/// `(n,k)` on top and noise plus intra-cell plus inter-cell leakage below.
///
/// `beams[n][k]` is BS `n`'s beam for its user `k`; `noise_vars[n][k]` the
/// matching noise floor.
pub fn sinr(beams: &[Vec<CVec>], channels: &ChannelSet, noise_vars: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n_cells = channels.n_cells;
    let k_per = channels.users_per_cell;
    assert_eq!(beams.len(), n_cells);
    let mut out = vec![vec![0.0; k_per]; n_cells];
    for n in 0..n_cells {
        for k in 0..k_per {
            let own = channels.link(n, n, k);
            let signal = own.dotc(&beams[n][k]).norm_sqr();
            let mut denom = noise_vars[n][k];
            for j in 0..k_per {
                if j != k {
                    denom += own.dotc(&beams[n][j]).norm_sqr();
                }
            }
            for m in 0..n_cells {
                if m != n {
                    let cross = channels.link(m, n, k);
                    for beam in &beams[m] {
                        denom += cross.dotc(beam).norm_sqr();
                    }
                }
            }
            out[n][k] = signal / denom;
        }
    }
    out
}

/// `Σ log₂(1 + Γ_nk)` in bits/s/Hz.
pub fn sum_rate(gammas: &[Vec<f64>]) -> f64 {
    gammas
        .iter()
        .flatten()
        .map(|g| (1.0 + g).log2())
        .sum()
}

/// Share of successful computations, in percent.
pub fn feasibility_rate(feasible: usize, total: usize) -> f64 {
    assert!(total > 0, "feasibility rate needs at least one outcome");
    100.0 * feasible as f64 / total as f64
}

/// `|P̂(i) − P| / P`.
pub fn normalized_power_accuracy(p_hat: f64, p: f64) -> f64 {
    assert!(p > 0.0, "reference power must be positive");
    (p_hat - p).abs() / p
}

/// Linear milliwatts to dBm; presentation-only conversion.
pub fn to_dbm(power_mw: f64) -> f64 {
    10.0 * power_mw.log10()
}

/// Who exchanges CSI or consensus variables, and what one exchange costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalingMode {
    /// Full CSI forwarding to the central unit; paid once per solve.
    Centralized,
    /// Consensus exchange of the asynchronous/synchronous distributed
    /// design; paid once per CU iteration.
    DistributedConsensus,
    /// Per-BS exchange of earlier distributed designs that share all ICI
    /// terms with every neighbor each iteration.
    PriorArtExchange,
}

/// Real-scalar exchange counts.
///
/// Centralized scales with the array (`2·N_t·K·N(N−1)` complex-channel
/// reals, independent of iterations); the consensus design moves `NK` reals
/// per iteration; the prior-art baseline `(N−1)NK` per iteration.
pub fn signaling_overhead(
    mode: SignalingMode,
    n_cells: usize,
    users_per_cell: usize,
    n_tx: usize,
    iterations: usize,
) -> u64 {
    let (n, k, nt) = (n_cells as u64, users_per_cell as u64, n_tx as u64);
    match mode {
        SignalingMode::Centralized => 2 * nt * k * n * (n - 1),
        SignalingMode::DistributedConsensus => n * k * iterations as u64,
        SignalingMode::PriorArtExchange => (n - 1) * n * k * iterations as u64,
    }
}

/// One outer/CU iteration of a distributed run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub per_bs_power: Vec<f64>,
    pub total_power: f64,
    pub residual: f64,
    pub feasible: bool,
}

/// Protocol-level event kinds logged by the asynchronous simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    LocalSolve,
    Arrival,
    Fire,
    Waiting,
    Broadcast,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::LocalSolve => "local_solve",
            EventKind::Arrival => "arrival",
            EventKind::Fire => "fire",
            EventKind::Waiting => "waiting",
            EventKind::Broadcast => "broadcast",
        }
    }
}

/// One simulator event (asynchronous runs only).
#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub tick: usize,
    pub cu_iteration: usize,
    pub event: EventKind,
    pub bs: Option<usize>,
    pub residual: f64,
    pub total_power: f64,
    pub tau: Vec<usize>,
}

/// Full record of one distributed (or centralized, single-row) run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentTrace {
    rows: Vec<TraceRow>,
    /// Event log; empty for synchronous runs.
    pub events: Vec<EventRow>,
    pub converged: bool,
    pub feasible: bool,
    /// Abort flag for asynchronous runs that hit the tick guard.
    pub stalled: bool,
    /// Local solve counts per BS.
    pub local_iterations: Vec<usize>,
    /// Number of global updates each BS received.
    pub participation: Vec<usize>,
}

impl ExperimentTrace {
    pub fn push_row(&mut self, row: TraceRow) {
        if let Some(last) = self.rows.last() {
            assert!(row.iteration > last.iteration, "trace rows must be monotone");
        }
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    /// Outer/CU iterations recorded.
    pub fn iterations(&self) -> usize {
        self.rows.last().map_or(0, |r| r.iteration)
    }

    pub fn final_power(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.total_power)
    }

    pub fn final_residual(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.residual)
    }

    /// First recorded iteration whose total power is within `acc` of the
    /// reference `p` in normalized accuracy, and stays there for the rest of
    /// the trace.
    pub fn iterations_to_accuracy(&self, p: f64, acc: f64) -> Option<usize> {
        let mut candidate = None;
        for row in &self.rows {
            if normalized_power_accuracy(row.total_power, p) <= acc {
                candidate.get_or_insert(row.iteration);
            } else {
                candidate = None;
            }
        }
        candidate
    }

    /// Iteration-level CSV: `iteration,p_1..p_N,total_power,residual,feasible`.
    pub fn rows_csv(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.per_bs_power.len());
        let mut out = String::from("iteration");
        for i in 1..=n {
            out.push_str(&format!(",p_{i}"));
        }
        out.push_str(",total_power,residual,feasible\n");
        for r in &self.rows {
            out.push_str(&format!("{}", r.iteration));
            for p in &r.per_bs_power {
                out.push_str(&format!(",{p}"));
            }
            out.push_str(&format!(",{},{},{}\n", r.total_power, r.residual, r.feasible as u8));
        }
        out
    }

    /// Event-level CSV: `tick,cu_iter,event,bs,residual,total_power,tau_1..tau_N`.
    pub fn events_csv(&self) -> String {
        let n = self.events.first().map_or(0, |e| e.tau.len());
        let mut out = String::from("tick,cu_iter,event,bs,residual,total_power");
        for i in 1..=n {
            out.push_str(&format!(",tau_{i}"));
        }
        out.push('\n');
        for e in &self.events {
            let bs = e.bs.map_or(String::from(""), |b| b.to_string());
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                e.tick,
                e.cu_iteration,
                e.event.as_str(),
                bs,
                e.residual,
                e.total_power
            ));
            for t in &e.tau {
                out.push_str(&format!(",{t}"));
            }
            out.push('\n');
        }
        out
    }
}
