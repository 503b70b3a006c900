//! Beamforming designs certified against channel estimation error.
//!
//! Every channel estimate carries a bounded perturbation set, a norm ball
//! or an ellipsoid, and every SINR floor must hold for all perturbations
//! at once. The quantified constraints lift into linear matrix
//! inequalities: each own-user floor and each granted interference budget
//! gets one certificate block with a nonnegative multiplier, so the
//! centralized design, the synchronous consensus loop, and the
//! asynchronous protocol all keep their structure and merely swap the
//! per-link rows for certificate blocks. An independent trust-region
//! verifier rechecks any candidate beams by computing exact worst-case
//! SINRs over the perturbation sets, and a recovery step turns converged
//! consensus budgets back into locally certified covariances.

mod trs;

pub use trs::{least_case_quadratic, worst_case_quadratic};

use crate::centralized::{
    emitter_span_basis, outer, reduced_link, reduction_bases, ExtractionFailed, FdBeamformers,
    DEFAULT_N_RAND, RANK_TOL, RESCALE_CAP,
};
use crate::channel::{standard_complex, ChannelSet, SystemConfig};
use crate::conic::{
    extract_principal, solve_sdp, BlockId, ConicError, Lmi, ScalarId, SdpProblem, SolveStatus,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::ici::IciLayout;
use crate::sync_dist::{
    push_consensus_epigraph, run_sdbf_with, BsLocalState, DistError, SdbfOptions, SdbfRun,
    LOCAL_SOLVE_TOL,
};
use crate::async_proto::{run_adbf_with, AdbfRun, AsyncConfig};
use crate::{C64, CMat, CVec, RVec};
use rand::Rng;

/// Bounded perturbation sets around the channel estimates, indexed
/// `[emitter][cell][user]` like the links themselves.
#[derive(Debug, Clone)]
pub enum UncertaintyModel {
    /// Independent norm balls `‖ξ‖ ≤ ε` around each link estimate.
    Spherical { radii: Vec<Vec<Vec<f64>>> },
    /// Ellipsoids `ξᴴ R ξ ≤ 1` with positive definite shape matrices.
    Ellipsoidal { shapes: Vec<Vec<Vec<CMat>>> },
}

impl UncertaintyModel {
    /// Same ball radius on every link of the network.
    pub fn uniform_sphere(radius: f64, n_cells: usize, users_per_cell: usize) -> Self {
        assert!(radius.is_finite() && radius >= 0.0, "radius must be finite and nonnegative");
        UncertaintyModel::Spherical {
            radii: vec![vec![vec![radius; users_per_cell]; n_cells]; n_cells],
        }
    }

    pub fn is_spherical(&self) -> bool {
        matches!(self, UncertaintyModel::Spherical { .. })
    }

    /// Ball radius of link `(m, n, k)`; `None` under ellipsoidal sets.
    pub fn radius(&self, m: usize, n: usize, k: usize) -> Option<f64> {
        match self {
            UncertaintyModel::Spherical { radii } => Some(radii[m][n][k]),
            UncertaintyModel::Ellipsoidal { .. } => None,
        }
    }

    /// Checks coverage of every link and positivity of every set.
    ///
    /// Panics when a dimension disagrees with the configuration, a radius
    /// is not strictly positive, or a shape matrix is not Hermitian
    /// positive definite. The solvers need strict sets; the verifier also
    /// accepts degenerate zero-radius balls and skips this check.
    pub fn validate(&self, config: &SystemConfig) {
        let (nc, kp) = (config.n_cells, config.users_per_cell);
        match self {
            UncertaintyModel::Spherical { radii } => {
                assert_eq!(radii.len(), nc, "one radius set per emitter");
                for per_emitter in radii {
                    assert_eq!(per_emitter.len(), nc, "one radius set per cell");
                    for per_cell in per_emitter {
                        assert_eq!(per_cell.len(), kp, "one radius per user");
                        for &e in per_cell {
                            assert!(e.is_finite() && e > 0.0, "ball radii must be positive");
                        }
                    }
                }
            }
            UncertaintyModel::Ellipsoidal { shapes } => {
                assert_eq!(shapes.len(), nc, "one shape set per emitter");
                for per_emitter in shapes {
                    assert_eq!(per_emitter.len(), nc, "one shape set per cell");
                    for per_cell in per_emitter {
                        assert_eq!(per_cell.len(), kp, "one shape per user");
                        for r in per_cell {
                            assert_eq!(r.nrows(), config.n_tx, "shape side must match the array");
                            assert_eq!(r.ncols(), config.n_tx, "shape side must match the array");
                            let defect = (r - r.adjoint()).norm();
                            assert!(
                                defect <= 1e-9 * r.norm().max(1.0),
                                "shape matrices must be Hermitian"
                            );
                            assert!(
                                r.clone().cholesky().is_some(),
                                "shape matrices must be positive definite"
                            );
                        }
                    }
                }
            }
        }
    }

    /// Shape matrix of link `(m, n, k)` expressed at the given side: balls
    /// stay isotropic in any orthonormal frame, so a reduced program keeps
    /// `ε⁻²·I`; ellipsoids couple the discarded subspace and therefore
    /// only appear at full array side.
    fn shape_in_frame(&self, m: usize, n: usize, k: usize, side: usize) -> CMat {
        match self {
            UncertaintyModel::Spherical { radii } => {
                let e = radii[m][n][k];
                CMat::identity(side, side) * C64::new(1.0 / (e * e), 0.0)
            }
            UncertaintyModel::Ellipsoidal { shapes } => {
                let r = &shapes[m][n][k];
                assert_eq!(r.nrows(), side, "ellipsoidal sets forbid span reduction");
                r.clone()
            }
        }
    }
}

/// Flat index of the ordered cross pair `(m → n, k)`, `m ≠ n`.
fn cross_index(n_cells: usize, users_per_cell: usize, m: usize, n: usize, k: usize) -> usize {
    debug_assert!(m != n && m < n_cells && n < n_cells && k < users_per_cell);
    let n_rank = if n < m { n } else { n - 1 };
    (m * (n_cells - 1) + n_rank) * users_per_cell + k
}

/// Unit scale of a perturbation-set shape, used to normalize the registered
/// certificate multiplier. The largest diagonal entry is within a factor of
/// the matrix side of the spectral norm for Hermitian PSD input, and equals
/// it exactly for the spherical `ε⁻²·I` shapes.
fn lam_scale(shape: &CMat) -> f64 {
    let s = (0..shape.nrows()).fold(0.0f64, |acc, i| acc.max(shape[(i, i)].re));
    assert!(s > 0.0, "shape matrices must be positive definite");
    s
}

/// Shared body of both certificate blocks: for the quantified constraint
/// `∀ξ, ξᴴ shape ξ ≤ 1: (ĥ+ξ)ᴴ (Σ_i c_i G_i) (ĥ+ξ) + corner ≥ 0` the
/// lossless certificate is
/// `[I; ĥᴴ] (Σ c_i G_i) [I, ĥ] + diag(λ·shape, corner − λ) ⪰ 0, λ ≥ 0`.
fn s_lemma_lmi(
    blocks: &[BlockId],
    coeffs: &[f64],
    h_hat: &CVec,
    shape: &CMat,
    lambda: ScalarId,
    corner_scalars: Vec<(ScalarId, f64)>,
    corner_const: f64,
) -> Lmi {
    let r = h_hat.len();
    assert_eq!(blocks.len(), coeffs.len());
    assert_eq!(shape.nrows(), r, "shape must live in the estimate frame");
    assert_eq!(shape.ncols(), r, "shape must live in the estimate frame");
    let q = r + 1;
    let mut l = CMat::zeros(q, r);
    for j in 0..r {
        l[(j, j)] = C64::new(1.0, 0.0);
        l[(q - 1, j)] = h_hat[j].conj();
    }
    let mut constant = CMat::zeros(q, q);
    constant[(q - 1, q - 1)] = C64::new(corner_const, 0.0);
    // The registered scalar is μ = s·λ, which keeps the coefficient matrix
    // at unit scale however small the perturbation set is; tiny radii would
    // otherwise put `1/ε²` entries in the constraint data and stall the
    // interior-point backend.
    let s = lam_scale(shape);
    let mut lam_coeff = CMat::zeros(q, q);
    lam_coeff
        .view_mut((0, 0), (r, r))
        .copy_from(&(shape / C64::new(s, 0.0)));
    lam_coeff[(q - 1, q - 1)] = C64::new(-1.0 / s, 0.0);
    let mut scalar_terms = vec![(lambda, lam_coeff)];
    for (s, c) in corner_scalars {
        let mut m = CMat::zeros(q, q);
        m[(q - 1, q - 1)] = C64::new(c, 0.0);
        scalar_terms.push((s, m));
    }
    let block_terms = blocks
        .iter()
        .zip(coeffs)
        .map(|(&b, &c)| (b, c, l.clone()))
        .collect();
    Lmi {
        side: q,
        constant,
        scalar_terms,
        block_terms,
    }
}

/// Certificate that user `user` of the serving cell keeps its SINR floor
/// for every perturbation of the own-cell estimate `h_hat`: signal over
/// `gamma` minus sibling interference must cover the noise floor plus the
/// inbound budgets, with multiplier `lambda` pricing the perturbation set.
pub fn build_phi(
    blocks: &[BlockId],
    user: usize,
    inbound: &[ScalarId],
    lambda: ScalarId,
    h_hat: &CVec,
    shape: &CMat,
    gamma: f64,
    sigma2: f64,
) -> Lmi {
    assert!(user < blocks.len(), "user must index a serving block");
    assert!(gamma > 0.0, "SINR floor must be positive");
    assert!(sigma2 >= 0.0, "noise power must be nonnegative");
    let coeffs: Vec<f64> = (0..blocks.len())
        .map(|i| if i == user { 1.0 / gamma } else { -1.0 })
        .collect();
    let corner_scalars = inbound.iter().map(|&s| (s, -1.0)).collect();
    s_lemma_lmi(blocks, &coeffs, h_hat, shape, lambda, corner_scalars, -sigma2)
}

/// Certificate that the emitter keeps its interference onto one victim
/// user below the granted budget `outbound` for every perturbation of the
/// cross-link estimate `h_hat`.
pub fn build_psi(
    blocks: &[BlockId],
    outbound: ScalarId,
    lambda: ScalarId,
    h_hat: &CVec,
    shape: &CMat,
) -> Lmi {
    let coeffs = vec![-1.0; blocks.len()];
    s_lemma_lmi(blocks, &coeffs, h_hat, shape, lambda, vec![(outbound, 1.0)], 0.0)
}

struct RobustIds {
    slacks: Vec<ScalarId>,
    lam_own: Vec<Vec<ScalarId>>,
    lam_cross: Vec<ScalarId>,
}

/// Centralized robust relaxation: per-user covariance blocks, one shared
/// interference budget per ordered cross pair, and one certificate block
/// per quantified constraint. `bases` selects per-emitter span reduction
/// (spherical sets only; identity entries keep full side).
fn build_robust_problem(
    channels: &ChannelSet,
    config: &SystemConfig,
    uncertainty: &UncertaintyModel,
    bases: &[Option<CMat>],
) -> (SdpProblem, RobustIds) {
    let (nc, kp) = (config.n_cells, config.users_per_cell);
    let mut p = SdpProblem::new();
    let blocks: Vec<Vec<BlockId>> = (0..nc)
        .map(|n| {
            let side = bases[n].as_ref().map_or(config.n_tx, |b| b.ncols());
            (0..kp)
                .map(|k| {
                    let id = p.add_block(&format!("G_{}{}", n + 1, k + 1), side);
                    p.add_trace_cost(id, config.beta(n));
                    id
                })
                .collect()
        })
        .collect();
    let mut slacks = Vec::with_capacity(nc * nc.saturating_sub(1) * kp);
    for m in 0..nc {
        for n in (0..nc).filter(|&n| n != m) {
            for k in 0..kp {
                debug_assert_eq!(slacks.len(), cross_index(nc, kp, m, n, k));
                slacks.push(p.add_scalar(&format!("v_{}{}{}", m + 1, n + 1, k + 1)));
            }
        }
    }
    let lam_own: Vec<Vec<ScalarId>> = (0..nc)
        .map(|n| {
            (0..kp)
                .map(|k| p.add_scalar(&format!("lam_{}{}{}", n + 1, n + 1, k + 1)))
                .collect()
        })
        .collect();
    let mut lam_cross = Vec::with_capacity(slacks.len());
    for m in 0..nc {
        for n in (0..nc).filter(|&n| n != m) {
            for k in 0..kp {
                lam_cross.push(p.add_scalar(&format!("lam_{}{}{}", m + 1, n + 1, k + 1)));
            }
        }
    }
    // Certificates are one-sided only for nonnegative multipliers.
    for &lam in lam_own.iter().flatten().chain(&lam_cross) {
        p.add_ge_constraint(vec![], vec![(lam, 1.0)], 0.0);
    }

    for n in 0..nc {
        let side = bases[n].as_ref().map_or(config.n_tx, |b| b.ncols());
        for k in 0..kp {
            let inbound: Vec<ScalarId> = (0..nc)
                .filter(|&m| m != n)
                .map(|m| slacks[cross_index(nc, kp, m, n, k)])
                .collect();
            let lmi = build_phi(
                &blocks[n],
                k,
                &inbound,
                lam_own[n][k],
                &reduced_link(channels, bases, n, n, k),
                &uncertainty.shape_in_frame(n, n, k, side),
                config.gamma(n, k),
                config.sigma2(n, k),
            );
            p.add_lmi(lmi.side, lmi.constant, lmi.scalar_terms, lmi.block_terms);
        }
    }
    for m in 0..nc {
        let side = bases[m].as_ref().map_or(config.n_tx, |b| b.ncols());
        for n in (0..nc).filter(|&n| n != m) {
            for k in 0..kp {
                let idx = cross_index(nc, kp, m, n, k);
                let lmi = build_psi(
                    &blocks[m],
                    slacks[idx],
                    lam_cross[idx],
                    &reduced_link(channels, bases, m, n, k),
                    &uncertainty.shape_in_frame(m, n, k, side),
                );
                p.add_lmi(lmi.side, lmi.constant, lmi.scalar_terms, lmi.block_terms);
            }
        }
    }
    (
        p,
        RobustIds {
            slacks,
            lam_own,
            lam_cross,
        },
    )
}

/// Robust counterpart of the centralized design outcome.
#[derive(Debug, Clone)]
pub enum RobustOutcome {
    Feasible(Box<RobustSolution>),
    Infeasible,
    NoVerdict,
    ExtractionFailed,
}

impl RobustOutcome {
    pub fn feasible(&self) -> Option<&RobustSolution> {
        match self {
            RobustOutcome::Feasible(sol) => Some(sol),
            _ => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, RobustOutcome::Feasible(_))
    }
}

/// A certified design: covariance blocks at array side in `(n, k)` order,
/// certificate multipliers and granted budgets indexed `[emitter][cell]
/// [user]` (own entries hold the SINR certificates, the emitter diagonal
/// of `slacks` is unused and zero), the relaxation objective, the
/// extracted beams, and per-user worst-case SINR margins. The margins
/// come from the independent trust-region verifier, never from the
/// solver: `margins[n][k] = (worst-case SINR − γ)/γ`.
#[derive(Debug, Clone)]
pub struct RobustSolution {
    pub blocks: Vec<CMat>,
    pub multipliers: Vec<Vec<Vec<f64>>>,
    pub slacks: Vec<Vec<Vec<f64>>>,
    pub objective: f64,
    pub design: FdBeamformers,
    pub margins: Vec<Vec<f64>>,
}

/// Worst-case extreme of `(ĥ+ξ)ᴴ A (ĥ+ξ)` over the perturbation set of
/// link `(m, n, k)`; ellipsoids are whitened into unit balls first.
fn link_extreme(
    channels: &ChannelSet,
    uncertainty: &UncertaintyModel,
    a: &CMat,
    m: usize,
    n: usize,
    k: usize,
    worst: bool,
) -> f64 {
    let h = channels.link(m, n, k);
    match uncertainty {
        UncertaintyModel::Spherical { radii } => {
            let eps = radii[m][n][k];
            if worst {
                worst_case_quadratic(h, a, eps)
            } else {
                least_case_quadratic(h, a, eps)
            }
        }
        UncertaintyModel::Ellipsoidal { shapes } => {
            let (h2, a2) = ellipsoid_frame(h, a, &shapes[m][n][k]);
            if worst {
                worst_case_quadratic(&h2, &a2, 1.0)
            } else {
                least_case_quadratic(&h2, &a2, 1.0)
            }
        }
    }
}

/// Whitens `ξᴴ R ξ ≤ 1` into a unit ball: with `R = L Lᴴ` the form
/// becomes `(Lᴴĥ + ζ)ᴴ L⁻¹ A L⁻ᴴ (Lᴴĥ + ζ)` over `‖ζ‖ ≤ 1`.
fn ellipsoid_frame(h_hat: &CVec, a: &CMat, shape: &CMat) -> (CVec, CMat) {
    let chol = shape.clone().cholesky().expect("shape is positive definite");
    let l = chol.l();
    let h2 = l.adjoint() * h_hat;
    let x = l.solve_lower_triangular(a).expect("nonsingular factor");
    let y = l
        .solve_lower_triangular(&x.adjoint())
        .expect("nonsingular factor");
    (h2, y.adjoint())
}

/// Exact worst-case SINR of each user over the perturbation sets,
/// reported as a relative margin `(SINR_wc − γ)/γ`. Cross-link
/// interference maximizes independently per emitter; the own link couples
/// signal and sibling interference, so the worst case solves
/// `min_ξ (S(ξ) − γ'·I(ξ)) ≥ γ'·(σ² + ICI_wc)` and bisects the largest
/// `γ'` for which the certified inequality holds.
pub fn verify_robust_sinr(
    beams: &[Vec<CVec>],
    channels: &ChannelSet,
    config: &SystemConfig,
    uncertainty: &UncertaintyModel,
) -> Vec<Vec<f64>> {
    let (nc, kp) = (config.n_cells, config.users_per_cell);
    assert_eq!(beams.len(), nc);
    let emitted: Vec<CMat> = (0..nc)
        .map(|m| {
            beams[m]
                .iter()
                .fold(CMat::zeros(config.n_tx, config.n_tx), |acc, w| acc + outer(w))
        })
        .collect();
    (0..nc)
        .map(|n| {
            (0..kp)
                .map(|k| {
                    let ici: f64 = (0..nc)
                        .filter(|&m| m != n)
                        .map(|m| link_extreme(channels, uncertainty, &emitted[m], m, n, k, true).max(0.0))
                        .sum();
                    let signal = outer(&beams[n][k]);
                    let intra = (0..kp)
                        .filter(|&i| i != k)
                        .fold(CMat::zeros(config.n_tx, config.n_tx), |acc, i| {
                            acc + outer(&beams[n][i])
                        });
                    let sigma2 = config.sigma2(n, k);
                    let floor = |g: f64| -> f64 {
                        let a = &signal - &intra * C64::new(g, 0.0);
                        link_extreme(channels, uncertainty, &a, n, n, k, false) - g * (sigma2 + ici)
                    };
                    let gamma = config.gamma(n, k);
                    // floor(0) ≥ 0 always; grow until the floor breaks, then bisect.
                    let mut lo = 0.0;
                    let mut hi = gamma.max(1e-6);
                    let mut bounded = false;
                    for _ in 0..80 {
                        if floor(hi) < 0.0 {
                            bounded = true;
                            break;
                        }
                        lo = hi;
                        hi *= 2.0;
                    }
                    if bounded {
                        for _ in 0..100 {
                            let mid = 0.5 * (lo + hi);
                            if floor(mid) >= 0.0 {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                    }
                    (lo - gamma) / gamma
                })
                .collect()
        })
        .collect()
}

/// Beams from robust covariance blocks. Rank-1 blocks lift exactly and
/// inherit the certificates; otherwise Gaussian randomization rechecks
/// every candidate against the worst-case functionals (never the nominal
/// SINR) and applies a common power rescale sized by the worst case.
pub fn extract_robust_beamformers<R: Rng + ?Sized>(
    blocks: &[CMat],
    sdp_objective: f64,
    channels: &ChannelSet,
    config: &SystemConfig,
    uncertainty: &UncertaintyModel,
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
        // Common factor t: every worst-case functional is quadratic in the
        // beams, so feasibility needs S_wc/γ − I_wc > 0 per user and
        // t ≥ σ²/(S_wc/γ − I_wc).
        let emitted: Vec<CMat> = (0..nc)
            .map(|m| {
                cand[m]
                    .iter()
                    .fold(CMat::zeros(config.n_tx, config.n_tx), |acc, w| acc + outer(w))
            })
            .collect();
        let mut t_min: f64 = 0.0;
        let mut ok = true;
        'users: for n in 0..nc {
            for k in 0..kp {
                let gamma = config.gamma(n, k);
                let mut combo = outer(&cand[n][k]) * C64::new(1.0 / gamma, 0.0);
                for i in (0..kp).filter(|&i| i != k) {
                    combo -= outer(&cand[n][i]);
                }
                let q_min = link_extreme(channels, uncertainty, &combo, n, n, k, false);
                let ici: f64 = (0..nc)
                    .filter(|&m| m != n)
                    .map(|m| link_extreme(channels, uncertainty, &emitted[m], m, n, k, true).max(0.0))
                    .sum();
                let margin = q_min - ici;
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

/// End-to-end certified centralized design: build the robust relaxation
/// (span-reduced under ball uncertainty), solve, extract beams with
/// worst-case rechecks, and report independently verified margins.
pub fn solve_robust_centralized<R: Rng + ?Sized>(
    channels: &ChannelSet,
    config: &SystemConfig,
    uncertainty: &UncertaintyModel,
    rng: &mut R,
) -> Result<RobustOutcome, ConicError> {
    uncertainty.validate(config);
    let (nc, kp) = (config.n_cells, config.users_per_cell);
    let bases = if uncertainty.is_spherical() {
        reduction_bases(channels)
    } else {
        vec![None; nc]
    };
    let (p, ids) = build_robust_problem(channels, config, uncertainty, &bases);
    let sol = solve_sdp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    match sol.status {
        SolveStatus::Infeasible => return Ok(RobustOutcome::Infeasible),
        SolveStatus::Unbounded | SolveStatus::MaxIter => return Ok(RobustOutcome::NoVerdict),
        SolveStatus::Optimal => {}
    }
    let blocks: Vec<CMat> = sol
        .blocks
        .iter()
        .enumerate()
        .map(|(idx, y)| match &bases[idx / kp] {
            Some(b) => b * y * b.adjoint(),
            None => y.clone(),
        })
        .collect();
    // The problem registers the normalized multipliers μ = s·λ; undo the
    // scale so the reported values price the quantified constraints as
    // stated.
    let mut multipliers = vec![vec![vec![0.0; kp]; nc]; nc];
    let mut slacks = vec![vec![vec![0.0; kp]; nc]; nc];
    for n in 0..nc {
        let side = bases[n].as_ref().map_or(config.n_tx, |b| b.ncols());
        for k in 0..kp {
            let s = lam_scale(&uncertainty.shape_in_frame(n, n, k, side));
            multipliers[n][n][k] = sol.scalars[ids.lam_own[n][k].0] / s;
        }
        for m in (0..nc).filter(|&m| m != n) {
            let side_m = bases[m].as_ref().map_or(config.n_tx, |b| b.ncols());
            for k in 0..kp {
                let idx = cross_index(nc, kp, m, n, k);
                let s = lam_scale(&uncertainty.shape_in_frame(m, n, k, side_m));
                multipliers[m][n][k] = sol.scalars[ids.lam_cross[idx].0] / s;
                slacks[m][n][k] = sol.scalars[ids.slacks[idx].0];
            }
        }
    }
    match extract_robust_beamformers(
        &blocks,
        sol.objective,
        channels,
        config,
        uncertainty,
        rng,
        DEFAULT_N_RAND,
    ) {
        Ok(design) => {
            let margins = verify_robust_sinr(&design.beams, channels, config, uncertainty);
            Ok(RobustOutcome::Feasible(Box::new(RobustSolution {
                blocks,
                multipliers,
                slacks,
                objective: sol.objective,
                design,
                margins,
            })))
        }
        Err(ExtractionFailed) => Ok(RobustOutcome::ExtractionFailed),
    }
}

/// Certified local consensus subproblem of one BS: identical to the
/// nominal subproblem except that the SINR row becomes an own-link
/// certificate (inbound budget in its corner) and each outbound equality
/// becomes an interference certificate, with one multiplier scalar per
/// certificate. Under ball uncertainty the blocks keep the emitter span
/// reduction; ellipsoids force full array side.
pub fn solve_robust_local(
    state: &BsLocalState,
    channels: &ChannelSet,
    config: &SystemConfig,
    uncertainty: &UncertaintyModel,
) -> Result<(RVec, Vec<CMat>), DistError> {
    let layout = IciLayout::new(config.n_cells, config.users_per_cell).expect("valid shape");
    let n = state.n;
    let kp = config.users_per_cell;
    let local_dim = layout.local_dim();
    let reduction = if uncertainty.is_spherical() {
        state.reduction.clone()
    } else {
        None
    };
    let bases: Vec<Option<CMat>> = (0..config.n_cells)
        .map(|m| if m == n { reduction.clone() } else { None })
        .collect();
    let side = reduction.as_ref().map_or(config.n_tx, |b| b.ncols());

    let mut p = SdpProblem::new();
    let blocks: Vec<BlockId> = (0..kp)
        .map(|k| {
            let id = p.add_block(&format!("G_{}{}", n + 1, k + 1), side);
            p.add_trace_cost(id, config.beta(n));
            id
        })
        .collect();
    let vars: Vec<ScalarId> = (0..local_dim)
        .map(|j| {
            let id = p.add_scalar(&format!("v_{}[{}]", n + 1, j));
            p.add_scalar_cost(id, -state.dual[j]);
            id
        })
        .collect();
    let epi = p.add_scalar("t");
    p.add_scalar_cost(epi, state.penalty / 2.0);

    // Own-user floors certified against the own-link perturbation.
    for k in 0..kp {
        let lam = p.add_scalar(&format!("lam_{}{}{}", n + 1, n + 1, k + 1));
        p.add_ge_constraint(vec![], vec![(lam, 1.0)], 0.0);
        let lmi = build_phi(
            &blocks,
            k,
            &[vars[layout.victim_slot(k)]],
            lam,
            &reduced_link(channels, &bases, n, n, k),
            &uncertainty.shape_in_frame(n, n, k, side),
            config.gamma(n, k),
            config.sigma2(n, k),
        );
        p.add_lmi(lmi.side, lmi.constant, lmi.scalar_terms, lmi.block_terms);
    }

    // Outbound budgets certified against the cross-link perturbations.
    for m in (0..config.n_cells).filter(|&m| m != n) {
        for k in 0..kp {
            let lam = p.add_scalar(&format!("lam_{}{}{}", n + 1, m + 1, k + 1));
            p.add_ge_constraint(vec![], vec![(lam, 1.0)], 0.0);
            let lmi = build_psi(
                &blocks,
                vars[layout.emitter_slot(n, m, k)],
                lam,
                &reduced_link(channels, &bases, n, m, k),
                &uncertainty.shape_in_frame(n, m, k, side),
            );
            p.add_lmi(lmi.side, lmi.constant, lmi.scalar_terms, lmi.block_terms);
        }
    }

    let w = layout.apply_w(n, &state.global_view);
    push_consensus_epigraph(&mut p, &vars, epi, &w);

    let sol = solve_sdp(&p, LOCAL_SOLVE_TOL, DEFAULT_MAX_ITER)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(DistError::LocalInfeasible { bs: n }),
        SolveStatus::Unbounded | SolveStatus::MaxIter => {
            return Err(DistError::LocalStall { bs: n })
        }
    }
    let v = RVec::from_fn(local_dim, |j, _| sol.scalars[j]);
    let lifted: Vec<CMat> = sol
        .blocks
        .iter()
        .map(|y| match &reduction {
            Some(b) => b * y * b.adjoint(),
            None => y.clone(),
        })
        .collect();
    Ok((v, lifted))
}

/// Synchronous consensus loop over certified local subproblems; every
/// protocol rule matches the nominal loop bit for bit.
pub fn run_robust_sdbf(
    channels: &ChannelSet,
    config: &SystemConfig,
    uncertainty: &UncertaintyModel,
    opts: &SdbfOptions,
) -> Result<SdbfRun, DistError> {
    uncertainty.validate(config);
    run_sdbf_with(channels, config, opts, &|s: &BsLocalState,
                                            ch: &ChannelSet,
                                            cf: &SystemConfig| {
        solve_robust_local(s, ch, cf, uncertainty)
    })
}

/// Asynchronous protocol over certified local subproblems; lottery, gate,
/// and staleness rules match the nominal protocol bit for bit.
pub fn run_robust_adbf(
    channels: &ChannelSet,
    config: &SystemConfig,
    uncertainty: &UncertaintyModel,
    proto: &AsyncConfig,
    penalty: f64,
    stop_tol: f64,
) -> Result<AdbfRun, DistError> {
    uncertainty.validate(config);
    run_adbf_with(channels, config, proto, penalty, stop_tol, &|s: &BsLocalState,
                                                                ch: &ChannelSet,
                                                                cf: &SystemConfig| {
        solve_robust_local(s, ch, cf, uncertainty)
    })
}

/// Verdict of the post-consensus recovery step.
#[derive(Debug, Clone)]
pub enum RecoveryOutcome {
    /// Certified covariances at array side, user order.
    Feasible(Vec<CMat>),
    /// The frozen budgets admit no certified design; the consensus loop
    /// has not yet produced workable budgets and needs more iterations.
    Infeasible,
    NoVerdict,
}

/// Re-solves one BS with the interference budgets frozen at the consensus
/// values: minimize own power subject to the own-user and outbound
/// certificates evaluated at the agreed budgets.
pub fn feasibility_recovery(
    bs: usize,
    consensus: &RVec,
    channels: &ChannelSet,
    config: &SystemConfig,
    uncertainty: &UncertaintyModel,
) -> Result<RecoveryOutcome, ConicError> {
    uncertainty.validate(config);
    let layout = IciLayout::new(config.n_cells, config.users_per_cell).expect("valid shape");
    let kp = config.users_per_cell;
    let w = layout.apply_w(bs, consensus);
    let reduction = if uncertainty.is_spherical() {
        emitter_span_basis(channels, bs)
    } else {
        None
    };
    let bases: Vec<Option<CMat>> = (0..config.n_cells)
        .map(|m| if m == bs { reduction.clone() } else { None })
        .collect();
    let side = reduction.as_ref().map_or(config.n_tx, |b| b.ncols());

    let mut p = SdpProblem::new();
    let blocks: Vec<BlockId> = (0..kp)
        .map(|k| {
            let id = p.add_block(&format!("G_{}{}", bs + 1, k + 1), side);
            p.add_trace_cost(id, config.beta(bs));
            id
        })
        .collect();
    for k in 0..kp {
        let lam = p.add_scalar(&format!("lam_{}{}{}", bs + 1, bs + 1, k + 1));
        p.add_ge_constraint(vec![], vec![(lam, 1.0)], 0.0);
        let coeffs: Vec<f64> = (0..kp)
            .map(|i| if i == k { 1.0 / config.gamma(bs, k) } else { -1.0 })
            .collect();
        let lmi = s_lemma_lmi(
            &blocks,
            &coeffs,
            &reduced_link(channels, &bases, bs, bs, k),
            &uncertainty.shape_in_frame(bs, bs, k, side),
            lam,
            vec![],
            -(config.sigma2(bs, k) + w[layout.victim_slot(k)]),
        );
        p.add_lmi(lmi.side, lmi.constant, lmi.scalar_terms, lmi.block_terms);
    }
    let psi_coeffs = vec![-1.0; kp];
    for m in (0..config.n_cells).filter(|&m| m != bs) {
        for k in 0..kp {
            let lam = p.add_scalar(&format!("lam_{}{}{}", bs + 1, m + 1, k + 1));
            p.add_ge_constraint(vec![], vec![(lam, 1.0)], 0.0);
            let lmi = s_lemma_lmi(
                &blocks,
                &psi_coeffs,
                &reduced_link(channels, &bases, bs, m, k),
                &uncertainty.shape_in_frame(bs, m, k, side),
                lam,
                vec![],
                w[layout.emitter_slot(bs, m, k)],
            );
            p.add_lmi(lmi.side, lmi.constant, lmi.scalar_terms, lmi.block_terms);
        }
    }

    let sol = solve_sdp(&p, LOCAL_SOLVE_TOL, DEFAULT_MAX_ITER)?;
    Ok(match sol.status {
        SolveStatus::Optimal => {
            let lifted: Vec<CMat> = sol
                .blocks
                .iter()
                .map(|y| match &reduction {
                    Some(b) => b * y * b.adjoint(),
                    None => y.clone(),
                })
                .collect();
            RecoveryOutcome::Feasible(lifted)
        }
        SolveStatus::Infeasible => RecoveryOutcome::Infeasible,
        SolveStatus::Unbounded | SolveStatus::MaxIter => RecoveryOutcome::NoVerdict,
    })
}
