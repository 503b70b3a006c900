//! Asynchronous distributed beamforming: an event-driven simulation of one
//! central unit and N base stations exchanging consensus messages over a
//! lossy backhaul.
//!
//! Time advances in discrete ticks. Each tick, every BS holding a queued
//! report retries its uplink, which succeeds with probability `p` and lands
//! at the CU one tick later. The CU absorbs whatever landed and fires a
//! global update once at least `S` stations have reported since its last
//! update, provided no absent station has already gone `τ` updates without
//! being heard; a station at that limit stalls the CU until its report
//! arrives. The broadcast goes to exactly the stations that contributed to
//! the round, again with unit delay; each recipient prices the consensus
//! gap into its dual, re-solves its local design, and queues the next
//! report. Stations whose uplink keeps failing simply stay cached at the CU
//! with whatever they last delivered.
//!
//! With `S = N`, `p = 1`, `τ = 1`, every round contains every station and
//! the event loop replays the synchronous loop arithmetic exactly: same
//! local solves, same consensus updates, same residuals, row for row.

use crate::channel::{ChannelSet, SystemConfig};
use crate::ici::IciLayout;
use crate::metrics::{EventKind, EventRow, ExperimentTrace, TraceRow};
use crate::sync_dist::{
    consensus_residual, dual_update, global_update, local_subproblem, weighted_total,
    BsLocalState, CuState, DistError,
};
use crate::{CMat, RVec};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Protocol knobs: quorum size, staleness bound, uplink reliability, and
/// the central unit's iteration budget.
#[derive(Debug, Clone, PartialEq)]
pub struct AsyncConfig {
    /// Minimum number of distinct BS reports per global update, in `1..=N`.
    pub quorum: usize,
    /// Most global updates any BS may miss in a row, at least 1.
    pub max_staleness: usize,
    /// Per-tick uplink success probability, in `(0, 1]`.
    pub arrival_prob: f64,
    /// Global updates allowed before the run is declared unconverged.
    pub cu_budget: usize,
    /// Seed for the uplink lottery.
    pub seed: u64,
}

impl Default for AsyncConfig {
    fn default() -> Self {
        Self {
            quorum: 1,
            max_staleness: 4,
            arrival_prob: 0.6,
            cu_budget: 40,
            seed: 0,
        }
    }
}

impl AsyncConfig {
    /// Panics unless the knobs make sense for an `n_cells`-station network.
    pub fn validate(&self, n_cells: usize) {
        assert!(
            self.quorum >= 1 && self.quorum <= n_cells,
            "quorum must be between 1 and the number of cells"
        );
        assert!(self.max_staleness >= 1, "staleness bound must be at least 1");
        assert!(
            self.arrival_prob > 0.0 && self.arrival_prob <= 1.0,
            "arrival probability must lie in (0, 1]"
        );
        assert!(self.cu_budget >= 1, "the CU needs a positive budget");
    }
}

/// Seeded per-tick uplink lottery: one Bernoulli draw per BS per tick,
/// ascending BS order, independent of protocol state.
#[derive(Debug, Clone)]
pub struct ArrivalModel {
    rng: ChaCha8Rng,
    n_bs: usize,
    prob: f64,
}

impl ArrivalModel {
    pub fn new(seed: u64, n_bs: usize, prob: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            n_bs,
            prob,
        }
    }

    /// Delivery indicators for one tick.
    pub fn draw(&mut self) -> Vec<bool> {
        (0..self.n_bs)
            .map(|_| self.rng.random::<f64>() < self.prob)
            .collect()
    }
}

/// One local report on the wire: the sender with its `(v_n, ν_n)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalReport {
    pub bs: usize,
    pub v: RVec,
    pub dual: RVec,
}

/// What the CU did with this tick's arrivals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CuOutcome {
    /// Fired: the global vector advanced and a broadcast is owed to
    /// `recipients`, the stations heard from this round.
    Updated { recipients: Vec<usize> },
    /// Quorum or staleness gate not met; arrivals were cached, counters
    /// untouched.
    Waiting,
}

/// Absorbs `arrivals` into the caches and fires a global update when at
/// least `quorum` stations have reported this round and every absent
/// station still has staleness headroom. On a fire the staleness counters
/// reset to 1 for participants and grow by 1 for the rest, the global
/// vector is recomputed from the full caches (stale entries included), and
/// the clock advances.
pub fn cu_step(
    cu: &mut CuState,
    arrivals: &[LocalReport],
    proto: &AsyncConfig,
    penalty: f64,
    layout: &IciLayout,
) -> CuOutcome {
    for a in arrivals {
        cu.v_cache[a.bs] = a.v.clone();
        cu.dual_cache[a.bs] = a.dual.clone();
        cu.round_arrivals[a.bs] = true;
    }
    let n = layout.n_cells();
    let reported = cu.round_arrivals.iter().filter(|&&b| b).count();
    let delay_ok =
        (0..n).all(|m| cu.round_arrivals[m] || cu.staleness[m] < proto.max_staleness);
    if reported < proto.quorum || !delay_ok {
        return CuOutcome::Waiting;
    }

    for m in 0..n {
        cu.staleness[m] = if cu.round_arrivals[m] {
            1
        } else {
            cu.staleness[m] + 1
        };
    }
    assert!(
        cu.staleness.iter().all(|&t| t <= proto.max_staleness),
        "staleness bound violated at a global update"
    );
    cu.v = global_update(&cu.v_cache, &cu.dual_cache, penalty, layout);
    cu.clock += 1;
    let recipients: Vec<usize> = (0..n).filter(|&m| cu.round_arrivals[m]).collect();
    cu.round_arrivals.fill(false);
    CuOutcome::Updated { recipients }
}

/// What a BS hands the simulator after one protocol turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsAction {
    /// A report is ready for the CU. `solved` is false when the local
    /// feasible set was empty and the previous iterate is re-sent.
    Transmit { solved: bool },
    /// No broadcast arrived; the station keeps waiting.
    Wait,
}

/// One BS turn. Without a received broadcast the station does nothing.
/// On receipt it prices the consensus gap into its dual against the local
/// iterate it last reported, adopts the broadcast as its global view,
/// re-solves the local design, and offers the `(v_n, ν_n)` pair for
/// transmission. A station never sees a global vector other than through
/// these broadcasts.
pub fn bs_step(
    state: &mut BsLocalState,
    received_global: Option<&RVec>,
    channels: &ChannelSet,
    config: &SystemConfig,
    layout: &IciLayout,
) -> Result<BsAction, DistError> {
    bs_step_with(state, received_global, channels, config, layout, &local_subproblem)
}

/// The same turn over any local solver.
pub(crate) fn bs_step_with<F>(
    state: &mut BsLocalState,
    received_global: Option<&RVec>,
    channels: &ChannelSet,
    config: &SystemConfig,
    layout: &IciLayout,
    solve: &F,
) -> Result<BsAction, DistError>
where
    F: Fn(&BsLocalState, &ChannelSet, &SystemConfig) -> Result<(RVec, Vec<CMat>), DistError>,
{
    let Some(global) = received_global else {
        return Ok(BsAction::Wait);
    };
    state.dual = dual_update(
        &state.dual,
        state.penalty,
        &layout.apply_w(state.n, global),
        &state.v,
    );
    state.global_view = global.clone();
    let solved = match solve(state, channels, config) {
        Ok((v, blocks)) => {
            state.v = v;
            state.blocks = blocks;
            true
        }
        Err(DistError::LocalInfeasible { .. }) => false,
        Err(e) => return Err(e),
    };
    state.clock += 1;
    Ok(BsAction::Transmit { solved })
}

/// Outcome of an asynchronous run: the trace with its event log, the final
/// covariance blocks and consensus vector, infeasible-solve count, and the
/// wall ticks the event loop consumed.
#[derive(Debug, Clone)]
pub struct AdbfRun {
    pub trace: ExperimentTrace,
    pub blocks: Vec<Vec<CMat>>,
    pub consensus: RVec,
    pub local_infeasible: usize,
    pub ticks: usize,
}

/// Ticks allowed before the run is declared stalled. Ample for any live
/// schedule: a round trip needs two ticks, retries cost `1/p` each, and a
/// straggler can hold the CU for `τ` rounds; the per-fire allowance is
/// capped so that a near-zero `p` cannot stretch the loop unboundedly.
fn tick_guard(proto: &AsyncConfig, n_cells: usize) -> usize {
    let per_fire =
        (4.0 * proto.max_staleness as f64 * n_cells as f64 / proto.arrival_prob).min(1e5);
    64 + (proto.cu_budget as f64 * per_fire).ceil() as usize
}

/// Event loop: BS turns, the uplink lottery, then the CU turn, every tick,
/// until the consensus residual at a global update falls under `stop_tol`
/// or the CU budget is spent. A run that exhausts the tick guard without
/// spending its budget is marked stalled; both outcomes are recorded, not
/// thrown. The trace gains one row per global update and an event log of
/// solves, arrivals, fires, gated waits, and broadcasts.
pub fn run_adbf(
    channels: &ChannelSet,
    config: &SystemConfig,
    proto: &AsyncConfig,
    penalty: f64,
    stop_tol: f64,
) -> Result<AdbfRun, DistError> {
    run_adbf_with(channels, config, proto, penalty, stop_tol, &local_subproblem)
}

/// The same event loop over any local solver; the robust variant swaps in
/// its certified subproblem while lottery, gate, and staleness rules stay
/// bit-identical.
pub(crate) fn run_adbf_with<F>(
    channels: &ChannelSet,
    config: &SystemConfig,
    proto: &AsyncConfig,
    penalty: f64,
    stop_tol: f64,
    solve: &F,
) -> Result<AdbfRun, DistError>
where
    F: Fn(&BsLocalState, &ChannelSet, &SystemConfig) -> Result<(RVec, Vec<CMat>), DistError>,
{
    assert!(config.n_cells >= 2, "consensus needs at least two cells");
    proto.validate(config.n_cells);
    assert!(penalty > 0.0 && stop_tol > 0.0);
    let layout = IciLayout::new(config.n_cells, config.users_per_cell).expect("valid shape");
    let nc = config.n_cells;
    let mut lottery = ArrivalModel::new(proto.seed, nc, proto.arrival_prob);
    let mut bss: Vec<BsLocalState> = (0..nc)
        .map(|n| BsLocalState::new(n, &layout, channels, config, penalty))
        .collect();
    let mut cu = CuState::new(&layout);
    let mut trace = ExperimentTrace::default();
    let mut participation = vec![0usize; nc];
    let mut infeasible_count = 0usize;
    let mut round_infeasible = false;
    let mut last_residual = f64::NAN;

    // Wires. `queued[n]` sits at BS n until a lucky tick; `cu_inbox` and
    // `bs_inbox` hold what was delivered for the current tick. The loop
    // opens with the zero global in every BS inbox, standing in for the
    // CU's initial state and triggering the first local solves.
    let mut queued: Vec<Option<LocalReport>> = vec![None; nc];
    let mut cu_inbox: Vec<LocalReport> = Vec::new();
    let mut bs_inbox: Vec<Option<RVec>> = vec![Some(cu.v.clone()); nc];

    let max_ticks = tick_guard(proto, nc);
    let mut tick = 0usize;
    loop {
        // BS turns, ascending: consume a delivered broadcast, re-solve,
        // queue the next report.
        for n in 0..nc {
            let received = bs_inbox[n].take();
            match bs_step_with(&mut bss[n], received.as_ref(), channels, config, &layout, solve)? {
                BsAction::Transmit { solved } => {
                    if !solved {
                        infeasible_count += 1;
                        round_infeasible = true;
                    }
                    queued[n] = Some(LocalReport {
                        bs: n,
                        v: bss[n].v.clone(),
                        dual: bss[n].dual.clone(),
                    });
                    trace.events.push(EventRow {
                        tick,
                        cu_iteration: cu.clock,
                        event: EventKind::LocalSolve,
                        bs: Some(n),
                        residual: last_residual,
                        total_power: network_power(&bss, config),
                        tau: cu.staleness.clone(),
                    });
                }
                BsAction::Wait => {}
            }
        }

        // Uplink lottery: lucky reports land at the CU next tick.
        let lucky = lottery.draw();
        let mut next_cu_inbox = Vec::new();
        for n in 0..nc {
            if lucky[n] {
                if let Some(report) = queued[n].take() {
                    next_cu_inbox.push(report);
                }
            }
        }

        // CU turn on this tick's deliveries.
        for a in &cu_inbox {
            trace.events.push(EventRow {
                tick,
                cu_iteration: cu.clock,
                event: EventKind::Arrival,
                bs: Some(a.bs),
                residual: last_residual,
                total_power: network_power(&bss, config),
                tau: cu.staleness.clone(),
            });
        }
        let had_arrivals = !cu_inbox.is_empty();
        match cu_step(&mut cu, &cu_inbox, proto, penalty, &layout) {
            CuOutcome::Updated { recipients } => {
                let residual = consensus_residual(&layout, &cu.v, &cu.v_cache);
                last_residual = residual;
                let per_bs_power: Vec<f64> = bss.iter().map(|b| b.power()).collect();
                let total_power = weighted_total(&per_bs_power, &config.weights);
                trace.events.push(EventRow {
                    tick,
                    cu_iteration: cu.clock,
                    event: EventKind::Fire,
                    bs: None,
                    residual,
                    total_power,
                    tau: cu.staleness.clone(),
                });
                for &n in &recipients {
                    participation[n] += 1;
                    bs_inbox[n] = Some(cu.v.clone());
                    trace.events.push(EventRow {
                        tick,
                        cu_iteration: cu.clock,
                        event: EventKind::Broadcast,
                        bs: Some(n),
                        residual,
                        total_power,
                        tau: cu.staleness.clone(),
                    });
                }
                trace.push_row(TraceRow {
                    iteration: cu.clock,
                    per_bs_power,
                    total_power,
                    residual,
                    feasible: !round_infeasible,
                });
                let round_was_feasible = !round_infeasible;
                round_infeasible = false;
                if residual <= stop_tol {
                    trace.converged = true;
                    trace.feasible = round_was_feasible;
                    break;
                }
                if cu.clock >= proto.cu_budget {
                    break;
                }
            }
            CuOutcome::Waiting => {
                if had_arrivals {
                    trace.events.push(EventRow {
                        tick,
                        cu_iteration: cu.clock,
                        event: EventKind::Waiting,
                        bs: None,
                        residual: last_residual,
                        total_power: network_power(&bss, config),
                        tau: cu.staleness.clone(),
                    });
                }
            }
        }
        cu_inbox = next_cu_inbox;

        tick += 1;
        if tick >= max_ticks {
            trace.stalled = true;
            break;
        }
    }

    trace.local_iterations = bss.iter().map(|b| b.clock).collect();
    trace.participation = participation;
    if !trace.converged {
        trace.feasible = false;
    }
    Ok(AdbfRun {
        trace,
        blocks: bss.into_iter().map(|b| b.blocks).collect(),
        consensus: cu.v,
        local_infeasible: infeasible_count,
        ticks: tick,
    })
}

/// Weight-priced power of the stations' current blocks, for event rows.
fn network_power(bss: &[BsLocalState], config: &SystemConfig) -> f64 {
    let per: Vec<f64> = bss.iter().map(|b| b.power()).collect();
    weighted_total(&per, &config.weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::centralized::solve_centralized;
    use crate::channel::sample_channel;
    use crate::sync_dist::{run_sdbf, SdbfOptions};
    use crate::{C64, CVec};

    fn fully_synchronous(n: usize, budget: usize) -> AsyncConfig {
        AsyncConfig {
            quorum: n,
            max_staleness: 1,
            arrival_prob: 1.0,
            cu_budget: budget,
            seed: 99,
        }
    }

    fn report(bs: usize, dim: usize) -> LocalReport {
        LocalReport {
            bs,
            v: RVec::zeros(dim),
            dual: RVec::zeros(dim),
        }
    }

    #[test]
    fn arrival_draws_are_reproducible() {
        let mut a = ArrivalModel::new(5, 4, 0.3);
        let mut b = ArrivalModel::new(5, 4, 0.3);
        let da: Vec<Vec<bool>> = (0..200).map(|_| a.draw()).collect();
        let db: Vec<Vec<bool>> = (0..200).map(|_| b.draw()).collect();
        assert_eq!(da, db);
        let mut c = ArrivalModel::new(6, 4, 0.3);
        let dc: Vec<Vec<bool>> = (0..200).map(|_| c.draw()).collect();
        assert_ne!(da, dc);
        let hits: usize = da.iter().flatten().filter(|&&x| x).count();
        let rate = hits as f64 / 800.0;
        assert!((rate - 0.3).abs() < 0.1, "rate {rate}");
    }

    #[test]
    fn quorum_gate_waits_for_enough_reports() {
        let layout = IciLayout::new(3, 1).unwrap();
        let mut cu = CuState::new(&layout);
        let proto = AsyncConfig {
            quorum: 2,
            max_staleness: 3,
            ..AsyncConfig::default()
        };
        let dim = layout.local_dim();

        let first = cu_step(&mut cu, &[report(0, dim)], &proto, 1.0, &layout);
        assert_eq!(first, CuOutcome::Waiting);
        assert_eq!(cu.staleness, vec![1, 1, 1]);
        assert_eq!(cu.clock, 0);
        assert!(cu.round_arrivals[0], "the early report must stay cached");

        // A second report completes the quorum; the round then covers both.
        let second = cu_step(&mut cu, &[report(1, dim)], &proto, 1.0, &layout);
        assert_eq!(
            second,
            CuOutcome::Updated {
                recipients: vec![0, 1]
            }
        );
        assert_eq!(cu.staleness, vec![1, 1, 2]);
        assert_eq!(cu.clock, 1);
        assert!(!cu.round_arrivals.iter().any(|&b| b));
    }

    #[test]
    fn empty_tick_with_unit_quorum_still_waits() {
        let layout = IciLayout::new(2, 1).unwrap();
        let mut cu = CuState::new(&layout);
        let proto = AsyncConfig {
            quorum: 1,
            ..AsyncConfig::default()
        };
        assert_eq!(cu_step(&mut cu, &[], &proto, 1.0, &layout), CuOutcome::Waiting);
        assert_eq!(cu.clock, 0);
    }

    #[test]
    fn bounded_delay_blocks_until_the_straggler_reports() {
        let layout = IciLayout::new(3, 1).unwrap();
        let mut cu = CuState::new(&layout);
        let proto = AsyncConfig {
            quorum: 1,
            max_staleness: 3,
            ..AsyncConfig::default()
        };
        let dim = layout.local_dim();
        // Station 2 is already at the limit: absent for the last two fires.
        cu.staleness = vec![1, 1, 3];

        let gated = cu_step(&mut cu, &[report(0, dim), report(1, dim)], &proto, 1.0, &layout);
        assert_eq!(gated, CuOutcome::Waiting);
        assert_eq!(cu.staleness, vec![1, 1, 3], "waiting must not move counters");

        // The straggler's report unblocks the round it joins.
        let fired = cu_step(&mut cu, &[report(2, dim)], &proto, 1.0, &layout);
        assert_eq!(
            fired,
            CuOutcome::Updated {
                recipients: vec![0, 1, 2]
            }
        );
        assert_eq!(cu.staleness, vec![1, 1, 1]);
    }

    fn isolated_pair(h1: CVec, h2: CVec) -> ChannelSet {
        let nt = h1.len();
        let zero = CVec::zeros(nt);
        ChannelSet::from_links(vec![
            vec![vec![h1], vec![zero.clone()]],
            vec![vec![zero], vec![h2]],
        ])
    }

    fn small_pair() -> (ChannelSet, SystemConfig) {
        let h1 = CVec::from_vec(vec![C64::new(1.1, 0.2), C64::new(0.0, 0.7)]);
        let h2 = CVec::from_vec(vec![C64::new(0.8, -0.4), C64::new(0.5, 0.1)]);
        let cfg = SystemConfig::uniform(2, 1, 2)
            .with_target_sinr(1.6)
            .with_noise_var(0.5);
        (isolated_pair(h1, h2), cfg)
    }

    #[test]
    fn a_quiet_wire_leaves_the_bs_untouched() {
        let (set, cfg) = small_pair();
        let layout = IciLayout::new(2, 1).unwrap();
        let mut bs = BsLocalState::new(0, &layout, &set, &cfg, 1.0);
        bs.dual = RVec::from_vec(vec![0.4, -0.1]);
        let before = bs.clone();
        let action = bs_step(&mut bs, None, &set, &cfg, &layout).unwrap();
        assert_eq!(action, BsAction::Wait);
        assert_eq!(bs.v, before.v);
        assert_eq!(bs.dual, before.dual);
        assert_eq!(bs.clock, before.clock);
    }

    #[test]
    fn a_consensus_fixed_point_keeps_the_dual_price() {
        let (set, cfg) = small_pair();
        let layout = IciLayout::new(2, 1).unwrap();
        let mut bs = BsLocalState::new(0, &layout, &set, &cfg, 2.0);
        let global = RVec::from_vec(vec![0.25, 0.75]);
        bs.v = layout.apply_w(0, &global);
        bs.dual = RVec::from_vec(vec![1.5, -0.5]);
        let dual_before = bs.dual.clone();
        let action = bs_step(&mut bs, Some(&global), &set, &cfg, &layout).unwrap();
        assert_eq!(action, BsAction::Transmit { solved: true });
        assert_eq!(bs.dual, dual_before, "zero consensus gap must not move the price");
        assert_eq!(bs.clock, 1);
    }

    #[test]
    fn fully_synchronous_protocol_replays_the_synchronous_trace() {
        for (seed, n_cells) in [(20u64, 2usize), (21, 2), (22, 2), (23, 3)] {
            let cfg = SystemConfig::uniform(n_cells, 2, 6).with_target_sinr(1.3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = sample_channel(&cfg, &mut rng);
            let opts = SdbfOptions {
                max_outer: 20,
                ..SdbfOptions::default()
            };
            let sync = run_sdbf(&set, &cfg, &opts).unwrap();
            let proto = fully_synchronous(n_cells, opts.max_outer);
            let adbf = run_adbf(&set, &cfg, &proto, opts.penalty, opts.stop_tol).unwrap();

            assert_eq!(
                adbf.trace.rows_csv(),
                sync.trace.rows_csv(),
                "seed {seed}: traces must agree to the last bit"
            );
            assert_eq!(adbf.consensus, sync.consensus);
            assert_eq!(adbf.trace.converged, sync.trace.converged);
            assert_eq!(adbf.trace.local_iterations, sync.trace.local_iterations);
            assert_eq!(adbf.trace.participation, sync.trace.participation);
            assert!(!adbf.trace.stalled);
        }
    }

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_seeds_replay_identical_event_logs() {
        let cfg = SystemConfig::uniform(2, 1, 4).with_target_sinr(1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let set = sample_channel(&cfg, &mut rng);
        let proto = AsyncConfig {
            quorum: 1,
            max_staleness: 2,
            arrival_prob: 0.6,
            cu_budget: 8,
            seed: 7,
        };
        let a = run_adbf(&set, &cfg, &proto, 1.0, 1e-4).unwrap();
        let b = run_adbf(&set, &cfg, &proto, 1.0, 1e-4).unwrap();
        assert_eq!(a.trace.events_csv(), b.trace.events_csv());
        assert_eq!(a.trace.rows_csv(), b.trace.rows_csv());
        assert_eq!(a.ticks, b.ticks);

        let other = AsyncConfig { seed: 8, ..proto };
        let c = run_adbf(&set, &cfg, &other, 1.0, 1e-4).unwrap();
        assert_ne!(
            a.trace.events_csv(),
            c.trace.events_csv(),
            "a different lottery seed must reshuffle the schedule"
        );
    }

    #[test]
    fn staleness_stays_bounded_and_every_station_keeps_participating() {
        let cfg = SystemConfig::uniform(3, 1, 4).with_target_sinr(1.4);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let set = sample_channel(&cfg, &mut rng);
        let proto = AsyncConfig {
            quorum: 1,
            max_staleness: 3,
            arrival_prob: 0.4,
            cu_budget: 12,
            seed: 3,
        };
        let run = run_adbf(&set, &cfg, &proto, 1.0, 1e-6).unwrap();
        assert!(!run.trace.stalled);
        let fires: Vec<&EventRow> = run
            .trace
            .events
            .iter()
            .filter(|e| e.event == EventKind::Fire)
            .collect();
        assert!(fires.len() >= 6, "only {} fires", fires.len());
        for e in &run.trace.events {
            assert!(e.tau.iter().all(|&t| t <= proto.max_staleness));
        }
        // A staleness bound of 3 forces every station into at least every
        // third round.
        let rounds = fires.len();
        for (n, &count) in run.trace.participation.iter().enumerate() {
            assert!(
                count >= rounds / proto.max_staleness,
                "station {n} joined {count} of {rounds} rounds"
            );
        }
    }

    #[test]
    fn waiting_streaks_stay_bounded_under_sparse_arrivals() {
        let layout = IciLayout::new(3, 1).unwrap();
        let dim = layout.local_dim();
        let mut cu = CuState::new(&layout);
        let proto = AsyncConfig {
            quorum: 3,
            max_staleness: 50,
            arrival_prob: 0.1,
            cu_budget: usize::MAX,
            seed: 1,
        };
        let mut lottery = ArrivalModel::new(11, 3, 0.1);
        let mut streak = 0usize;
        let mut worst = 0usize;
        let mut fires = 0usize;
        for _ in 0..100_000 {
            let arrivals: Vec<LocalReport> = lottery
                .draw()
                .into_iter()
                .enumerate()
                .filter_map(|(n, hit)| hit.then(|| report(n, dim)))
                .collect();
            match cu_step(&mut cu, &arrivals, &proto, 1.0, &layout) {
                CuOutcome::Updated { .. } => {
                    fires += 1;
                    streak = 0;
                }
                CuOutcome::Waiting => {
                    streak += 1;
                    worst = worst.max(streak);
                }
            }
        }
        assert!(fires > 2000, "only {fires} fires in 1e5 steps");
        assert!(worst < 300, "a waiting streak reached {worst} steps");
    }

    #[test]
    fn lossy_links_still_reach_the_centralized_power() {
        let cfg = SystemConfig::uniform(2, 2, 8).with_target_sinr(1.5);
        let mut hits = 0;
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
            let set = sample_channel(&cfg, &mut rng);
            let central = match solve_centralized(&set, &cfg, &mut rng).unwrap().feasible() {
                Some(fd) => fd.sdp_objective,
                None => continue,
            };
            let proto = AsyncConfig {
                quorum: 1,
                max_staleness: 4,
                arrival_prob: 0.6,
                cu_budget: 40,
                seed: 17 + seed,
            };
            // A 1e-2 consensus gap is where the power trajectory settles;
            // tighter gaps need far more updates than the budget grants.
            let run = run_adbf(&set, &cfg, &proto, 1.0, 1e-2).unwrap();
            if !run.trace.converged {
                continue;
            }
            let rel = (run.trace.final_power() - central).abs() / central;
            assert!(rel <= 0.05, "seed {seed}: off by {rel:.4}");
            hits += 1;
        }
        assert!(hits >= 2, "only {hits} converged runs");
    }

    #[test]
    fn iterations_scale_with_staleness_over_quorum() {
        let cfg = SystemConfig::uniform(2, 1, 4).with_target_sinr(1.5);
        // (quorum, staleness bound) ordered by increasing τ/S.
        let combos = [(2usize, 1usize), (1, 2), (1, 6)];
        let mut medians = Vec::new();
        let mut per_combo: Vec<Vec<f64>> = vec![Vec::new(); combos.len()];
        for seed in 0..7u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
            let set = sample_channel(&cfg, &mut rng);
            let central = match solve_centralized(&set, &cfg, &mut rng).unwrap().feasible() {
                Some(fd) => fd.sdp_objective,
                None => continue,
            };
            for (i, &(s, tau)) in combos.iter().enumerate() {
                let proto = AsyncConfig {
                    quorum: s,
                    max_staleness: tau,
                    arrival_prob: 0.6,
                    cu_budget: 60,
                    seed: 40 + seed,
                };
                let run = run_adbf(&set, &cfg, &proto, 1.0, 1e-5).unwrap();
                let iters = run
                    .trace
                    .iterations_to_accuracy(central, 0.01)
                    .unwrap_or(61) as f64;
                per_combo[i].push(iters);
            }
        }
        for samples in per_combo.iter_mut() {
            assert!(samples.len() >= 5, "not enough feasible draws");
            samples.sort_by(f64::total_cmp);
            medians.push(samples[samples.len() / 2]);
        }
        // Least-squares slope of median iterations against τ/S.
        let xs: Vec<f64> = combos.iter().map(|&(s, t)| t as f64 / s as f64).collect();
        let xm = xs.iter().sum::<f64>() / xs.len() as f64;
        let ym = medians.iter().sum::<f64>() / medians.len() as f64;
        let slope: f64 = xs
            .iter()
            .zip(&medians)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm).powi(2)).sum::<f64>();
        assert!(
            slope > 0.0,
            "staler quorums should take more updates: medians {medians:?} at {xs:?}"
        );
    }

    #[test]
    fn budget_exhaustion_marks_the_run_unconverged() {
        let (set, cfg) = small_pair();
        let proto = AsyncConfig {
            quorum: 2,
            max_staleness: 1,
            arrival_prob: 1.0,
            cu_budget: 3,
            seed: 0,
        };
        // An unreachable tolerance spends the whole budget.
        let run = run_adbf(&set, &cfg, &proto, 1.0, 1e-300).unwrap();
        assert!(!run.trace.converged);
        assert!(!run.trace.feasible);
        assert!(!run.trace.stalled);
        assert_eq!(run.trace.rows().len(), 3);
        assert_eq!(run.trace.iterations(), 3);
    }

    #[test]
    fn a_dead_uplink_trips_the_tick_guard() {
        let (set, cfg) = small_pair();
        let proto = AsyncConfig {
            quorum: 2,
            max_staleness: 1,
            arrival_prob: 1e-7,
            cu_budget: 1,
            seed: 2,
        };
        let run = run_adbf(&set, &cfg, &proto, 1.0, 1e-4).unwrap();
        assert!(run.trace.stalled);
        assert!(!run.trace.converged);
        assert!(run.trace.rows().is_empty());
    }

    #[test]
    #[should_panic(expected = "quorum")]
    fn zero_quorum_is_rejected() {
        AsyncConfig {
            quorum: 0,
            ..AsyncConfig::default()
        }
        .validate(2);
    }

    #[test]
    #[should_panic(expected = "quorum")]
    fn excess_quorum_is_rejected() {
        AsyncConfig {
            quorum: 3,
            ..AsyncConfig::default()
        }
        .validate(2);
    }

    #[test]
    #[should_panic(expected = "arrival probability")]
    fn zero_arrival_probability_is_rejected() {
        AsyncConfig {
            arrival_prob: 0.0,
            ..AsyncConfig::default()
        }
        .validate(2);
    }
}
