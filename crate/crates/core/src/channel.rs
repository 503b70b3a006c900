//! Geometric mmWave channel model: multipath link sampling, uniform linear
//! array responses, the angular dictionary used by hybrid factorization, and
//! bounded CSI perturbations for the robustness experiments.
//!
//! Every downlink link from BS `m` to user `k` of cell `n` is a superposition
//! of `L` planar paths, `h = √(N_t/L) Σ_l α_l a(θ_l)`, with standard complex
//! Gaussian gains and angles of departure uniform over the full circle. The
//! scaling keeps `E‖h‖² = N_t` regardless of `L`.
//!
//! Sampling is deterministic under a caller-provided seeded generator; trials
//! fork independent streams so Monte-Carlo runs parallelize without sharing
//! state.

use crate::{C64, CMat, CVec};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::TAU;
use thiserror::Error;

/// Scenario dimensions and per-link targets shared by every pipeline stage.
///
/// Noise variances and SINR targets are stored per (cell, user) and weights
/// per cell; the `uniform` constructor covers the common case where all
/// links share one value.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of cells (one BS each).
    pub n_cells: usize,
    /// Single-antenna users per cell.
    pub users_per_cell: usize,
    /// Transmit antennas per BS (uniform linear array).
    pub n_tx: usize,
    /// RF chains per BS available to the hybrid factorization.
    pub n_rf: usize,
    /// Multipath components per link.
    pub n_paths: usize,
    /// Antenna spacing over carrier wavelength.
    pub d_over_lambda: f64,
    /// Angular dictionary size for hybrid factorization.
    pub dict_size: usize,
    /// Noise variance per (cell, user).
    pub noise_vars: Vec<Vec<f64>>,
    /// Target SINR per (cell, user), linear scale.
    pub target_sinrs: Vec<Vec<f64>>,
    /// Per-cell power weighting factors.
    pub weights: Vec<f64>,
    /// Base seed for trial generation.
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl SystemConfig {
    /// Uniform targets: every link gets the same noise variance and SINR
    /// target, every cell weight 1. RF chains default to one per user,
    /// multipaths to 3, spacing to half-wavelength, dictionary to `4·N_t`.
    pub fn uniform(n_cells: usize, users_per_cell: usize, n_tx: usize) -> Self {
        Self {
            n_cells,
            users_per_cell,
            n_tx,
            n_rf: users_per_cell,
            n_paths: 3,
            d_over_lambda: 0.5,
            dict_size: 4 * n_tx,
            noise_vars: vec![vec![1.0; users_per_cell]; n_cells],
            target_sinrs: vec![vec![1.0; users_per_cell]; n_cells],
            weights: vec![1.0; n_cells],
            seed: 0,
        }
    }

    pub fn with_target_sinr(mut self, gamma: f64) -> Self {
        self.target_sinrs = vec![vec![gamma; self.users_per_cell]; self.n_cells];
        self
    }

    pub fn with_noise_var(mut self, sigma2: f64) -> Self {
        self.noise_vars = vec![vec![sigma2; self.users_per_cell]; self.n_cells];
        self
    }

    pub fn with_paths(mut self, n_paths: usize) -> Self {
        self.n_paths = n_paths;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dict_size(mut self, dict_size: usize) -> Self {
        self.dict_size = dict_size;
        self
    }

    pub fn with_rf_chains(mut self, n_rf: usize) -> Self {
        self.n_rf = n_rf;
        self
    }

    /// Noise variance of user `k` in cell `n`.
    pub fn sigma2(&self, n: usize, k: usize) -> f64 {
        self.noise_vars[n][k]
    }

    /// SINR target of user `k` in cell `n`.
    pub fn gamma(&self, n: usize, k: usize) -> f64 {
        self.target_sinrs[n][k]
    }

    /// Power weight of cell `n`.
    pub fn beta(&self, n: usize) -> f64 {
        self.weights[n]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n_cells == 0 || self.users_per_cell == 0 {
            return fail("need at least one cell and one user".into());
        }
        if self.n_tx == 0 {
            return fail("need at least one transmit antenna".into());
        }
        if self.n_rf == 0 || self.n_rf > self.n_tx {
            return fail(format!("RF chains {} outside 1..=N_t={}", self.n_rf, self.n_tx));
        }
        if self.n_paths == 0 {
            return fail("need at least one path".into());
        }
        if self.d_over_lambda <= 0.0 {
            return fail("antenna spacing must be positive".into());
        }
        if self.noise_vars.len() != self.n_cells
            || self.target_sinrs.len() != self.n_cells
            || self.weights.len() != self.n_cells
            || self
                .noise_vars
                .iter()
                .chain(self.target_sinrs.iter())
                .any(|row| row.len() != self.users_per_cell)
        {
            return fail("per-link parameter shapes disagree with N, K".into());
        }
        let all = self
            .noise_vars
            .iter()
            .chain(self.target_sinrs.iter())
            .flatten()
            .chain(self.weights.iter());
        for v in all {
            if !(v.is_finite() && *v > 0.0) {
                return fail("noise variances, SINR targets, weights must be positive".into());
            }
        }
        Ok(())
    }
}

/// Multipath parameters of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct PathParams {
    pub gains: Vec<C64>,
    pub aods: Vec<f64>,
}

/// All downlink channel vectors of one network realization.
///
/// `link(m, n, k)` is the channel from BS `m` to user `k` of cell `n`; the
/// own-cell channels are the `m == n` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub n_cells: usize,
    pub users_per_cell: usize,
    pub n_tx: usize,
    h: Vec<CVec>,
    /// Per-link path parameters in the same `(m, n, k)` order, when sampled.
    pub paths: Option<Vec<PathParams>>,
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("channel csv parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl ChannelSet {
    fn index(&self, m: usize, n: usize, k: usize) -> usize {
        (m * self.n_cells + n) * self.users_per_cell + k
    }

    /// Channel from BS `m` to user `k` of cell `n`.
    pub fn link(&self, m: usize, n: usize, k: usize) -> &CVec {
        &self.h[self.index(m, n, k)]
    }

    pub fn link_mut(&mut self, m: usize, n: usize, k: usize) -> &mut CVec {
        let i = self.index(m, n, k);
        &mut self.h[i]
    }

    /// Builds a set from explicit vectors, `links[m][n][k]`.
    pub fn from_links(links: Vec<Vec<Vec<CVec>>>) -> Self {
        let n_cells = links.len();
        let users_per_cell = links[0][0].len();
        let n_tx = links[0][0][0].len();
        let mut h = Vec::with_capacity(n_cells * n_cells * users_per_cell);
        for row in &links {
            assert_eq!(row.len(), n_cells);
            for cell in row {
                assert_eq!(cell.len(), users_per_cell);
                for v in cell {
                    assert_eq!(v.len(), n_tx);
                    h.push(v.clone());
                }
            }
        }
        Self {
            n_cells,
            users_per_cell,
            n_tx,
            h,
            paths: None,
        }
    }

    /// One row per `(m, n, k, antenna)`: `m,n,k,antenna,re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,n,k,antenna,re,im\n");
        for m in 0..self.n_cells {
            for n in 0..self.n_cells {
                for k in 0..self.users_per_cell {
                    let h = self.link(m, n, k);
                    for (p, z) in h.iter().enumerate() {
                        out.push_str(&format!("{m},{n},{k},{p},{},{}\n", z.re, z.im));
                    }
                }
            }
        }
        out
    }

    /// Parses the `to_csv` format; dimensions are inferred from the indices.
    pub fn from_csv(text: &str) -> Result<Self, CsvError> {
        let mut rows: Vec<(usize, usize, usize, usize, f64, f64)> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("m,") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(CsvError::Parse {
                    line: ln + 1,
                    msg: format!("expected 6 fields, got {}", fields.len()),
                });
            }
            let parse_idx = |s: &str| -> Result<usize, CsvError> {
                s.parse().map_err(|e| CsvError::Parse {
                    line: ln + 1,
                    msg: format!("bad index {s:?}: {e}"),
                })
            };
            let parse_f = |s: &str| -> Result<f64, CsvError> {
                s.parse().map_err(|e| CsvError::Parse {
                    line: ln + 1,
                    msg: format!("bad value {s:?}: {e}"),
                })
            };
            rows.push((
                parse_idx(fields[0])?,
                parse_idx(fields[1])?,
                parse_idx(fields[2])?,
                parse_idx(fields[3])?,
                parse_f(fields[4])?,
                parse_f(fields[5])?,
            ));
        }
        if rows.is_empty() {
            return Err(CsvError::Parse {
                line: 0,
                msg: "no data rows".into(),
            });
        }
        let n_cells = rows.iter().map(|r| r.0.max(r.1)).max().unwrap() + 1;
        let users_per_cell = rows.iter().map(|r| r.2).max().unwrap() + 1;
        let n_tx = rows.iter().map(|r| r.3).max().unwrap() + 1;
        let mut set = ChannelSet {
            n_cells,
            users_per_cell,
            n_tx,
            h: vec![CVec::zeros(n_tx); n_cells * n_cells * users_per_cell],
            paths: None,
        };
        for (m, n, k, p, re, im) in rows {
            let i = set.index(m, n, k);
            set.h[i][p] = C64::new(re, im);
        }
        Ok(set)
    }
}

/// Unit-norm ULA response: entry `p` is
/// `(1/√N_t)·exp(j·2π·d_over_lambda·p·sin θ)`.
pub fn array_response(theta: f64, n_tx: usize, d_over_lambda: f64) -> CVec {
    assert!(n_tx >= 1);
    let scale = 1.0 / (n_tx as f64).sqrt();
    CVec::from_fn(n_tx, |p, _| {
        let phase = TAU * d_over_lambda * p as f64 * theta.sin();
        C64::from_polar(scale, phase)
    })
}

/// Draws a standard complex Gaussian, `(x + jy)/√2` with `x, y ~ N(0,1)`.
pub fn standard_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) / C64::new(std::f64::consts::SQRT_2, 0.0)
}

/// Samples every link of a network realization; link order `(m, n, k)`
/// lexicographic, so a fixed generator state reproduces the set exactly.
pub fn sample_channel<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> ChannelSet {
    let nc = config.n_cells;
    let k_per = config.users_per_cell;
    let nt = config.n_tx;
    let l = config.n_paths;
    let amp = (nt as f64 / l as f64).sqrt();
    let mut h = Vec::with_capacity(nc * nc * k_per);
    let mut paths = Vec::with_capacity(nc * nc * k_per);
    for _m in 0..nc {
        for _n in 0..nc {
            for _k in 0..k_per {
                let mut gains = Vec::with_capacity(l);
                let mut aods = Vec::with_capacity(l);
                let mut link = CVec::zeros(nt);
                for _ in 0..l {
                    let alpha = standard_complex(rng);
                    let theta = rng.random::<f64>() * TAU;
                    link += array_response(theta, nt, config.d_over_lambda) * alpha;
                    gains.push(alpha);
                    aods.push(theta);
                }
                h.push(link * C64::new(amp, 0.0));
                paths.push(PathParams { gains, aods });
            }
        }
    }
    ChannelSet {
        n_cells: nc,
        users_per_cell: k_per,
        n_tx: nt,
        h,
        paths: Some(paths),
    }
}

/// Angular dictionary: `G` unit-norm steering columns on the uniform cosine
/// grid `cos φ_g = 2(g−1)/G − 1`, realized as `array_response(arcsin ·)` so
/// the grid value is the column's spatial frequency and columns stay pairwise
/// distinct.
pub fn build_dictionary(dict_size: usize, n_tx: usize, d_over_lambda: f64) -> CMat {
    assert!(dict_size >= 1);
    let mut f = CMat::zeros(n_tx, dict_size);
    for g in 0..dict_size {
        let cosine = 2.0 * g as f64 / dict_size as f64 - 1.0;
        let col = array_response(cosine.asin(), n_tx, d_over_lambda);
        f.set_column(g, &col);
    }
    f
}

/// Draws uniformly from the complex ball `‖ξ‖ ≤ radius` in dimension `n`.
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64) -> CVec {
    let dir = CVec::from_fn(n, |_, _| standard_complex(rng));
    let norm = dir.norm();
    if norm == 0.0 || radius == 0.0 {
        return CVec::zeros(n);
    }
    // Radius CDF in real dimension 2n is (r/R)^{2n}.
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / (2.0 * n as f64));
    dir * C64::new(r / norm, 0.0)
}

/// True-channel realizations around an estimated set: adds to every link an
/// independent error drawn uniformly in the ball of radius `epsilon`. Links
/// are visited in `(m, n, k)` lexicographic order.
pub fn perturb_channel<R: Rng + ?Sized>(
    channels: &ChannelSet,
    epsilon: f64,
    rng: &mut R,
) -> ChannelSet {
    assert!(epsilon >= 0.0);
    let mut out = channels.clone();
    out.paths = None;
    for m in 0..channels.n_cells {
        for n in 0..channels.n_cells {
            for k in 0..channels.users_per_cell {
                let xi = sample_ball(rng, channels.n_tx, epsilon);
                *out.link_mut(m, n, k) += xi;
            }
        }
    }
    out
}
