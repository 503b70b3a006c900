//! Centralized transmit precoding by semidefinite relaxation.
//!
//! The power-minimization problem over beam covariances `G_nk ⪰ 0` has one
//! trace-linear SINR constraint per user; dropping the rank-1 requirement
//! makes it a semidefinite program. Solutions come back rank-1 on almost all
//! instances of this family and are lifted to beams directly; otherwise
//! Gaussian randomization draws candidates from the solution covariance and
//! rescales the whole network by the smallest common factor that restores
//! every SINR target.
//!
//! Every matrix functional in the program touches BS `n`'s blocks only
//! through outer products of the channels BS `n` emits, so optimal blocks
//! can be confined to the span of those `NK` vectors. When that span is a
//! proper subspace (`NK < N_t`) the solve runs on blocks of side `NK` in an
//! orthonormal basis of it and the result is lifted back, which keeps large
//! arrays cheap without changing the optimum; `build_sdr_problem` always
//! exposes the full-side program for inspection and cross-checks.

use crate::channel::{standard_complex, ChannelSet, SystemConfig};
use crate::conic::{
    extract_principal, solve_sdp, BlockId, ConicError, SdpProblem, SdpSolution, SolveStatus,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::metrics::{sinr, sum_rate};
use crate::{C64, CMat, CVec};
use rand::Rng;

/// Second-to-first eigenvalue ratio under which a block counts as rank one.
pub const RANK_TOL: f64 = 1e-6;
/// Default number of Gaussian randomization candidates.
pub const DEFAULT_N_RAND: usize = 100;
/// Largest admissible common power rescale during randomization.
pub(crate) const RESCALE_CAP: f64 = 1e6;

/// Fully digital beamformers with their audit trail.
#[derive(Debug, Clone)]
pub struct FdBeamformers {
    /// `beams[n][k]`: BS `n`'s beam for its user `k`.
    pub beams: Vec<Vec<CVec>>,
    /// `Σ_k ‖g_nk‖²` per BS.
    pub per_bs_power: Vec<f64>,
    /// `Σ_n β_n p_n`.
    pub total_weighted_power: f64,
    /// Achieved SINRs on the given channels.
    pub sinrs: Vec<Vec<f64>>,
    /// Whether each solution block was numerically rank one.
    pub rank1: Vec<Vec<bool>>,
    /// Relaxation objective, a lower bound on the extracted power.
    pub sdp_objective: f64,
}

impl FdBeamformers {
    /// Wraps explicit beams, recomputing powers and SINRs.
    pub fn from_beams(beams: Vec<Vec<CVec>>, channels: &ChannelSet, config: &SystemConfig) -> Self {
        let per_bs_power: Vec<f64> = beams
            .iter()
            .map(|bs| bs.iter().map(|g| g.norm_squared()).sum())
            .collect();
        let total_weighted_power = per_bs_power
            .iter()
            .zip(&config.weights)
            .map(|(p, b)| p * b)
            .sum();
        let sinrs = sinr(&beams, channels, &config.noise_vars);
        let rank1 = vec![vec![true; config.users_per_cell]; config.n_cells];
        Self {
            beams,
            per_bs_power,
            total_weighted_power,
            sinrs,
            rank1,
            sdp_objective: f64::NAN,
        }
    }

    pub fn sum_rate(&self) -> f64 {
        sum_rate(&self.sinrs)
    }

    /// All SINR targets met within `slack`.
    pub fn meets_targets(&self, config: &SystemConfig, slack: f64) -> bool {
        self.sinrs.iter().enumerate().all(|(n, row)| {
            row.iter()
                .enumerate()
                .all(|(k, g)| *g >= config.gamma(n, k) - slack)
        })
    }
}

/// Terminal outcome of a centralized solve; infeasibility is data, not error.
#[derive(Debug, Clone)]
pub enum CentralizedOutcome {
    Feasible(FdBeamformers),
    /// Solver produced a primal-infeasibility certificate.
    Infeasible,
    /// Iteration cap hit without a verdict.
    NoVerdict,
    /// Relaxation solved but no randomization candidate was feasible.
    ExtractionFailed,
}

impl CentralizedOutcome {
    pub fn feasible(&self) -> Option<&FdBeamformers> {
        match self {
            CentralizedOutcome::Feasible(fd) => Some(fd),
            _ => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, CentralizedOutcome::Feasible(_))
    }
}

/// Outer product `h hᴴ`.
pub(crate) fn outer(h: &CVec) -> CMat {
    h * h.adjoint()
}

/// The SINR trace row of user `(n, k)` over blocks `ids[m][i]`, using the
/// provided per-BS views of the channels (full or reduced).
fn push_sinr_constraint(
    p: &mut SdpProblem,
    ids: &[Vec<BlockId>],
    link: &dyn Fn(usize, usize, usize) -> CVec,
    config: &SystemConfig,
    n: usize,
    k: usize,
) {
    let gamma = config.gamma(n, k);
    let mut terms: Vec<(BlockId, CMat)> = Vec::new();
    let own = outer(&link(n, n, k));
    for i in 0..config.users_per_cell {
        let scale = if i == k { 1.0 / gamma } else { -1.0 };
        terms.push((ids[n][i], &own * C64::new(scale, 0.0)));
    }
    for m in (0..config.n_cells).filter(|&m| m != n) {
        let cross = outer(&link(m, n, k));
        for i in 0..config.users_per_cell {
            terms.push((ids[m][i], &cross * C64::new(-1.0, 0.0)));
        }
    }
    p.add_ge_constraint(terms, vec![], config.sigma2(n, k));
}

/// Full-side relaxation: one PSD block per user, one SINR row per user,
/// objective `Σ_n β_n Σ_k Tr(G_nk)`.
pub fn build_sdr_problem(channels: &ChannelSet, config: &SystemConfig) -> SdpProblem {
    let mut p = SdpProblem::new();
    let ids: Vec<Vec<BlockId>> = (0..config.n_cells)
        .map(|n| {
            (0..config.users_per_cell)
                .map(|k| {
                    let id = p.add_block(&format!("G_{}{}", n + 1, k + 1), config.n_tx);
                    p.add_trace_cost(id, config.beta(n));
                    id
                })
                .collect()
        })
        .collect();
    let link = |m: usize, n: usize, k: usize| channels.link(m, n, k).clone();
    for n in 0..config.n_cells {
        for k in 0..config.users_per_cell {
            push_sinr_constraint(&mut p, &ids, &link, config, n, k);
        }
    }
    p
}

/// Orthonormal basis of the span of every channel BS `n` emits, when that
/// span is a proper subspace of the array; `None` otherwise.
pub(crate) fn emitter_span_basis(channels: &ChannelSet, n: usize) -> Option<CMat> {
    let nt = channels.n_tx;
    let cols = channels.n_cells * channels.users_per_cell;
    if cols >= nt {
        return None;
    }
    let mut stack = CMat::zeros(nt, cols);
    let mut c = 0;
    for m in 0..channels.n_cells {
        for k in 0..channels.users_per_cell {
            stack.set_column(c, channels.link(n, m, k));
            c += 1;
        }
    }
    let svd = stack.svd(true, false);
    let u = svd.u.as_ref().expect("u requested");
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        // All emitted channels zero; any single direction works.
        let mut b = CMat::zeros(nt, 1);
        b[(0, 0)] = C64::new(1.0, 0.0);
        return Some(b);
    }
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > 1e-12 * smax)
        .count()
        .max(1);
    if rank >= nt {
        return None;
    }
    Some(u.columns(0, rank).into_owned())
}

/// Per-BS reduction bases for the whole network; identity (None) entries
/// mean the BS keeps full side.
pub(crate) fn reduction_bases(channels: &ChannelSet) -> Vec<Option<CMat>> {
    (0..channels.n_cells)
        .map(|n| emitter_span_basis(channels, n))
        .collect()
}

/// Channel view through the per-emitter bases: the SINR rows of the reduced
/// program use `B_mᴴ h_mnk` wherever the full program uses `h_mnk`.
pub(crate) fn reduced_link(
    channels: &ChannelSet,
    bases: &[Option<CMat>],
    m: usize,
    n: usize,
    k: usize,
) -> CVec {
    match &bases[m] {
        Some(b) => b.adjoint() * channels.link(m, n, k),
        None => channels.link(m, n, k).clone(),
    }
}

fn build_sdr_problem_reduced(
    channels: &ChannelSet,
    config: &SystemConfig,
    bases: &[Option<CMat>],
) -> SdpProblem {
    let mut p = SdpProblem::new();
    let ids: Vec<Vec<BlockId>> = (0..config.n_cells)
        .map(|n| {
            let side = bases[n].as_ref().map_or(config.n_tx, |b| b.ncols());
            (0..config.users_per_cell)
                .map(|k| {
                    let id = p.add_block(&format!("G_{}{}", n + 1, k + 1), side);
                    p.add_trace_cost(id, config.beta(n));
                    id
                })
                .collect()
        })
        .collect();
    let link = |m: usize, n: usize, k: usize| reduced_link(channels, bases, m, n, k);
    for n in 0..config.n_cells {
        for k in 0..config.users_per_cell {
            push_sinr_constraint(&mut p, &ids, &link, config, n, k);
        }
    }
    p
}

/// Lifts reduced solution blocks back to array side.
pub(crate) fn lift_blocks(
    solution: &SdpSolution,
    bases: &[Option<CMat>],
    users_per_cell: usize,
) -> Vec<CMat> {
    solution
        .blocks
        .iter()
        .enumerate()
        .map(|(idx, y)| match &bases[idx / users_per_cell] {
            Some(b) => b * y * b.adjoint(),
            None => y.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractionFailed;

/// Beams from solved covariance blocks (given in `(n, k)` lexicographic
/// order): rank-1 blocks lift exactly; otherwise Gaussian randomization with
/// a common network-wide power rescale, keeping the cheapest feasible
/// candidate set.
pub fn extract_beamformers<R: Rng + ?Sized>(
    blocks: &[CMat],
    sdp_objective: f64,
    channels: &ChannelSet,
    config: &SystemConfig,
    rng: &mut R,
    n_rand: usize,
) -> Result<FdBeamformers, ExtractionFailed> {
    let (nc, kp) = (config.n_cells, config.users_per_cell);
    assert_eq!(blocks.len(), nc * kp);
    let mut rank1 = vec![vec![false; kp]; nc];
    let mut principals: Vec<Vec<CVec>> = vec![Vec::new(); nc];
    let mut all_rank1 = true;
    for n in 0..nc {
        for k in 0..kp {
            let block = &blocks[n * kp + k];
            let h = (block + block.adjoint()) * C64::new(0.5, 0.0);
            let eig = h.clone().symmetric_eigen();
            let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
            vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let flat = vals[0] <= 0.0 || (vals.len() > 1 && vals[1].max(0.0) / vals[0] > RANK_TOL);
            rank1[n][k] = !flat;
            all_rank1 &= !flat;
            let (lam, vec) = extract_principal(block);
            principals[n].push(vec * C64::new(lam.max(0.0).sqrt(), 0.0));
        }
    }

    if all_rank1 {
        let mut fd = FdBeamformers::from_beams(principals, channels, config);
        fd.rank1 = rank1;
        fd.sdp_objective = sdp_objective;
        return Ok(fd);
    }

    // Square roots for covariance sampling of the non-rank-1 blocks.
    let roots: Vec<CMat> = blocks
        .iter()
        .map(|b| {
            let h = (b + b.adjoint()) * C64::new(0.5, 0.0);
            let eig = h.symmetric_eigen();
            let scaled = CMat::from_fn(b.nrows(), b.ncols(), |i, j| {
                eig.eigenvectors[(i, j)] * C64::new(eig.eigenvalues[j].max(0.0).sqrt(), 0.0)
            });
            &scaled * eig.eigenvectors.adjoint()
        })
        .collect();

    let mut best: Option<(f64, Vec<Vec<CVec>>)> = None;
    for _ in 0..n_rand {
        let mut cand: Vec<Vec<CVec>> = vec![Vec::new(); nc];
        for n in 0..nc {
            for k in 0..kp {
                if rank1[n][k] {
                    cand[n].push(principals[n][k].clone());
                } else {
                    let w = CVec::from_fn(config.n_tx, |_, _| standard_complex(rng));
                    cand[n].push(&roots[n * kp + k] * w);
                }
            }
        }
        // Common factor t: all signal and interference terms scale together,
        // so feasibility needs S − γI > 0 per user and t ≥ γσ²/(S − γI).
        let mut t_min: f64 = 0.0;
        let mut ok = true;
        'users: for n in 0..nc {
            for k in 0..kp {
                let own = channels.link(n, n, k);
                let s = own.dotc(&cand[n][k]).norm_sqr();
                let mut i_total = 0.0;
                for j in 0..kp {
                    if j != k {
                        i_total += own.dotc(&cand[n][j]).norm_sqr();
                    }
                }
                for m in (0..nc).filter(|&m| m != n) {
                    let cross = channels.link(m, n, k);
                    for g in &cand[m] {
                        i_total += cross.dotc(g).norm_sqr();
                    }
                }
                let gamma = config.gamma(n, k);
                let margin = s / gamma - i_total;
                if margin <= 0.0 {
                    ok = false;
                    break 'users;
                }
                t_min = t_min.max(config.sigma2(n, k) / margin);
            }
        }
        if !ok || t_min > RESCALE_CAP {
            continue;
        }
        let scale = C64::new(t_min.sqrt(), 0.0);
        let scaled: Vec<Vec<CVec>> = cand
            .iter()
            .map(|bs| bs.iter().map(|g| g * scale).collect())
            .collect();
        let power: f64 = scaled
            .iter()
            .enumerate()
            .map(|(n, bs)| config.beta(n) * bs.iter().map(|g| g.norm_squared()).sum::<f64>())
            .sum();
        if best.as_ref().is_none_or(|(p, _)| power < *p) {
            best = Some((power, scaled));
        }
    }

    let (_, beams) = best.ok_or(ExtractionFailed)?;
    let mut fd = FdBeamformers::from_beams(beams, channels, config);
    fd.rank1 = rank1;
    fd.sdp_objective = sdp_objective;
    Ok(fd)
}

/// End-to-end centralized design: build (reduced where the channel span
/// allows), solve, extract.
pub fn solve_centralized<R: Rng + ?Sized>(
    channels: &ChannelSet,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<CentralizedOutcome, ConicError> {
    let bases = reduction_bases(channels);
    let reduced = bases.iter().any(|b| b.is_some());
    let problem = if reduced {
        build_sdr_problem_reduced(channels, config, &bases)
    } else {
        build_sdr_problem(channels, config)
    };
    let sol = solve_sdp(&problem, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    Ok(match sol.status {
        SolveStatus::Optimal => {
            let blocks = if reduced {
                lift_blocks(&sol, &bases, config.users_per_cell)
            } else {
                sol.blocks.clone()
            };
            match extract_beamformers(
                &blocks,
                sol.objective,
                channels,
                config,
                rng,
                DEFAULT_N_RAND,
            ) {
                Ok(fd) => CentralizedOutcome::Feasible(fd),
                Err(ExtractionFailed) => CentralizedOutcome::ExtractionFailed,
            }
        }
        SolveStatus::Infeasible => CentralizedOutcome::Infeasible,
        SolveStatus::Unbounded | SolveStatus::MaxIter => CentralizedOutcome::NoVerdict,
    })
}
