//! Hybrid factorization of fully digital precoders.
//!
//! An RF stage picks `N_rf` constant-modulus columns from an angular
//! dictionary and a baseband stage mixes them, so the factorization is a
//! simultaneously sparse approximation problem: which dictionary columns
//! carry the target precoder, and with what coefficients. The main solver
//! is an empirical-Bayes EM loop: each dictionary column gets a variance
//! hyperparameter, the E-stage computes the Gaussian posterior of the
//! coefficient matrix, the M-stage re-estimates the variances, and columns
//! whose variances survive form the RF support. A greedy simultaneous
//! orthogonal matching pursuit baseline is included for comparison, and
//! both finish with a least-squares refit of the baseband matrix.

use crate::channel::{ChannelSet, SystemConfig};
use crate::metrics::{sinr, sum_rate};
use crate::{C64, CMat, CVec};
use thiserror::Error;

/// Smallest admissible hyperparameter; keeps the prior invertible.
pub const GAMMA_FLOOR: f64 = 1e-12;

/// EM knobs with the defaults used throughout the experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct BlParams {
    /// Approximation-error variance of the factorization model.
    pub sigma_e2: f64,
    /// Stop once `max_i |γ_i' − γ_i|` falls below this.
    pub rho: f64,
    /// Iteration cap; hitting it is recorded, not an error.
    pub eta_max: usize,
}

impl Default for BlParams {
    fn default() -> Self {
        Self {
            sigma_e2: 1e-3,
            rho: 1e-5,
            eta_max: 50,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HybridError {
    /// Posterior covariance could not be formed or inverted; signals a
    /// misconfigured error variance or hyperparameter floor.
    #[error("posterior covariance is singular or ill-conditioned")]
    SingularCovariance,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Hyperparameters and posterior of the Bayesian-learning iteration.
#[derive(Debug, Clone)]
pub struct BlState {
    /// Per-column prior variances, strictly positive.
    pub gamma: Vec<f64>,
    /// Posterior mean of the coefficient matrix, dictionary size by users.
    pub mean: CMat,
    /// Posterior covariance, shared by all users' coefficient columns.
    pub covariance: CMat,
    /// EM iterations performed so far.
    pub iterations: usize,
    /// Approximation-error variance the posterior assumes.
    pub sigma_e2: f64,
}

impl BlState {
    /// Non-informative start: unit variances, empty posterior.
    pub fn init(dict_size: usize, users: usize, sigma_e2: f64) -> Self {
        Self {
            gamma: vec![1.0; dict_size],
            mean: CMat::zeros(dict_size, users),
            covariance: CMat::zeros(dict_size, dict_size),
            iterations: 0,
            sigma_e2,
        }
    }
}

/// One hybrid RF/baseband factorization with its audit trail.
#[derive(Debug, Clone)]
pub struct HybridPrecoder {
    /// Selected dictionary column indices, ascending.
    pub support: Vec<usize>,
    /// RF stage: the selected dictionary columns, copied verbatim so every
    /// entry keeps its constant modulus.
    pub rf: CMat,
    /// Baseband stage from the final least-squares refit.
    pub baseband: CMat,
    /// Frobenius distance between the target and `rf · baseband`.
    pub residual: f64,
    /// EM iterations used (selection rounds for the greedy baseline).
    pub iterations: usize,
    /// Whether the hyperparameter sweep settled before the cap.
    pub converged: bool,
    /// Final hyperparameters; empty for the greedy baseline.
    pub gamma: Vec<f64>,
}

impl HybridPrecoder {
    /// Effective per-user beams `rf · baseband_k`.
    pub fn beams(&self) -> Vec<CVec> {
        (0..self.baseband.ncols())
            .map(|k| &self.rf * self.baseband.column(k))
            .collect()
    }
}

/// Gaussian posterior of the coefficient matrix given the current state:
/// covariance `Ω = ((1/σ_e²) F_TᴴF_T + Γ⁻¹)⁻¹` and mean
/// `𝒮 = (1/σ_e²) Ω F_Tᴴ G`, returned as `(mean, covariance)`.
pub fn bl_posterior(
    state: &BlState,
    dictionary: &CMat,
    target: &CMat,
) -> Result<(CMat, CMat), HybridError> {
    let g = dictionary.ncols();
    if state.gamma.len() != g || dictionary.nrows() != target.nrows() {
        return Err(HybridError::DimensionMismatch(format!(
            "dictionary {}x{}, target {}x{}, {} hyperparameters",
            dictionary.nrows(),
            g,
            target.nrows(),
            target.ncols(),
            state.gamma.len()
        )));
    }
    if state
        .gamma
        .iter()
        .any(|v| !(v.is_finite() && *v > 0.0))
        || !(state.sigma_e2.is_finite() && state.sigma_e2 > 0.0)
    {
        return Err(HybridError::SingularCovariance);
    }
    let scale = C64::new(1.0 / state.sigma_e2, 0.0);
    let mut a = dictionary.adjoint() * dictionary * scale;
    for i in 0..g {
        a[(i, i)] += C64::new(1.0 / state.gamma[i], 0.0);
    }
    let chol = a.cholesky().ok_or(HybridError::SingularCovariance)?;
    // Cheap conditioning probe from the factor's diagonal.
    let diag = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..g {
        let d = diag[(i, i)].re;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if !(lo > 0.0) || (hi / lo).powi(2) > 1e16 {
        return Err(HybridError::SingularCovariance);
    }
    let mean = chol.solve(&(dictionary.adjoint() * target)) * scale;
    let omega = chol.inverse();
    // The inverse is Hermitian up to roundoff; make it exact.
    let omega = (&omega + omega.adjoint()) * C64::new(0.5, 0.0);
    Ok((mean, omega))
}

/// Variance re-estimate `γ_i = ‖mean(i,:)‖²/K + covariance_ii`, floored.
pub fn bl_m_step(mean: &CMat, covariance: &CMat, users: usize) -> Vec<f64> {
    debug_assert_eq!(mean.ncols(), users);
    (0..mean.nrows())
        .map(|i| {
            let row_energy: f64 = (0..users).map(|k| mean[(i, k)].norm_sqr()).sum();
            (row_energy / users as f64 + covariance[(i, i)].re).max(GAMMA_FLOOR)
        })
        .collect()
}

/// Dictionary columns `support` copied verbatim plus the least-squares
/// baseband fit of `target` onto them; returns the Frobenius residual too.
fn ls_refit(dictionary: &CMat, support: &[usize], target: &CMat) -> (CMat, CMat, f64) {
    let rf = CMat::from_fn(dictionary.nrows(), support.len(), |i, j| {
        dictionary[(i, support[j])]
    });
    let pinv = rf
        .clone()
        .svd(true, true)
        .pseudo_inverse(1e-12)
        .expect("svd of a finite matrix");
    let baseband = &pinv * target;
    let residual = (target - &rf * &baseband).norm();
    (rf, baseband, residual)
}

/// Full EM factorization: iterate posterior and variance updates until the
/// hyperparameters settle (or `eta_max`), keep the `n_rf` largest, refit.
pub fn bl_decompose(
    target: &CMat,
    dictionary: &CMat,
    n_rf: usize,
    params: &BlParams,
) -> Result<HybridPrecoder, HybridError> {
    let g = dictionary.ncols();
    if n_rf == 0 || n_rf > g {
        return Err(HybridError::DimensionMismatch(format!(
            "RF stage width {n_rf} outside 1..={g}"
        )));
    }
    let users = target.ncols();
    let mut state = BlState::init(g, users, params.sigma_e2);
    let mut converged = false;
    for j in 1..=params.eta_max {
        let (mean, covariance) = bl_posterior(&state, dictionary, target)?;
        let gamma = bl_m_step(&mean, &covariance, users);
        let delta = gamma
            .iter()
            .zip(&state.gamma)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        state.gamma = gamma;
        state.mean = mean;
        state.covariance = covariance;
        state.iterations = j;
        if delta < params.rho {
            converged = true;
            break;
        }
    }
    // Largest hyperparameters win; equal ones go to the lower index.
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| {
        state.gamma[b]
            .partial_cmp(&state.gamma[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut support = order[..n_rf].to_vec();
    support.sort_unstable();
    let (rf, baseband, residual) = ls_refit(dictionary, &support, target);
    Ok(HybridPrecoder {
        support,
        rf,
        baseband,
        residual,
        iterations: state.iterations,
        converged,
        gamma: state.gamma,
    })
}

/// Greedy baseline: each round picks the dictionary column most correlated
/// with the current residual (summed over users), then refits.
pub fn somp_decompose(target: &CMat, dictionary: &CMat, n_rf: usize) -> HybridPrecoder {
    let g = dictionary.ncols();
    assert!(n_rf >= 1 && n_rf <= g, "RF stage width outside 1..={g}");
    let users = target.ncols();
    let mut support: Vec<usize> = Vec::with_capacity(n_rf);
    let mut residual_mat = target.clone();
    for _ in 0..n_rf {
        let corr = dictionary.adjoint() * &residual_mat;
        let mut best: Option<(f64, usize)> = None;
        for idx in 0..g {
            if support.contains(&idx) {
                continue;
            }
            let score: f64 = (0..users).map(|k| corr[(idx, k)].norm_sqr()).sum();
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, idx));
            }
        }
        support.push(best.expect("n_rf <= dictionary size").1);
        support.sort_unstable();
        let (rf, baseband, _) = ls_refit(dictionary, &support, target);
        residual_mat = target - &rf * &baseband;
    }
    let (rf, baseband, residual) = ls_refit(dictionary, &support, target);
    HybridPrecoder {
        support,
        rf,
        baseband,
        residual,
        iterations: n_rf,
        converged: true,
        gamma: Vec::new(),
    }
}

/// Network SINRs and sum rate with every BS running its hybrid precoder.
pub fn evaluate_hybrid(
    channels: &ChannelSet,
    precoders: &[HybridPrecoder],
    config: &SystemConfig,
) -> (Vec<Vec<f64>>, f64) {
    assert_eq!(precoders.len(), config.n_cells);
    let beams: Vec<Vec<CVec>> = precoders.iter().map(|p| p.beams()).collect();
    let sinrs = sinr(&beams, channels, &config.noise_vars);
    let rate = sum_rate(&sinrs);
    (sinrs, rate)
}
