//! Order statistics and the rank-correlation test used by experiment
//! summaries.
//!
//! Medians skip non-finite entries so a partially failed sweep still
//! summarizes cleanly. The Spearman test assigns midranks to ties, takes
//! the Pearson correlation of the ranks, and converts it to one-sided
//! p-values through the large-sample normal approximation `z = r√(n−1)`.
//! The normal CDF uses a polynomial `erf` approximation with absolute
//! error under 2e-7, far below anything a 0.05-level threshold can feel.

/// Median of the finite entries; NaN when none remain.
pub fn median(values: &[f64]) -> f64 {
    let mut xs: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Midranks over `xs`: tied values share the average of the positions they
/// occupy, so rank sums stay exact under ties.
fn midranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..=j are one tie group; 1-based ranks average to this.
        let rank = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation over paired samples, with one-sided tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpearmanTest {
    /// Rank correlation coefficient in `[-1, 1]`.
    pub rho: f64,
    /// Number of pairs.
    pub n: usize,
}

impl SpearmanTest {
    fn z(&self) -> f64 {
        self.rho * ((self.n - 1) as f64).sqrt()
    }

    /// P-value against the alternative "increasing association".
    pub fn p_positive(&self) -> f64 {
        normal_cdf(-self.z())
    }

    /// P-value against the alternative "decreasing association".
    pub fn p_negative(&self) -> f64 {
        normal_cdf(self.z())
    }
}

/// Rank correlation of `(x, y)` pairs; `None` when fewer than three pairs
/// remain after dropping non-finite entries or when either axis is
/// constant, since no ordering signal exists in those cases.
pub fn spearman(pairs: &[(f64, f64)]) -> Option<SpearmanTest> {
    let clean: Vec<(f64, f64)> =
        pairs.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    let n = clean.len();
    if n < 3 {
        return None;
    }
    let xs: Vec<f64> = clean.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = clean.iter().map(|p| p.1).collect();
    let rx = midranks(&xs);
    let ry = midranks(&ys);
    let mean = (n + 1) as f64 / 2.0;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for i in 0..n {
        let dx = rx[i] - mean;
        let dy = ry[i] - mean;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return None;
    }
    Some(SpearmanTest { rho: cov / (var_x * var_y).sqrt(), n })
}

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 `erf` polynomial.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn median_handles_odd_even_and_gaps() {
        assert_abs_diff_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_abs_diff_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_abs_diff_eq!(median(&[f64::NAN, 5.0, f64::INFINITY, 1.0]), 3.0);
        assert!(median(&[]).is_nan());
        assert!(median(&[f64::NAN]).is_nan());
    }

    #[test]
    fn midranks_average_tie_positions() {
        assert_eq!(midranks(&[10.0, 20.0, 20.0, 30.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(midranks(&[7.0, 7.0, 7.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn monotone_sequences_reach_full_correlation() {
        let inc: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, (i * i) as f64)).collect();
        let t = spearman(&inc).unwrap();
        assert_abs_diff_eq!(t.rho, 1.0, epsilon = 1e-12);
        assert!(t.p_positive() < 0.001, "p = {}", t.p_positive());
        assert!(t.p_negative() > 0.99);

        let dec: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, -(i as f64))).collect();
        let t = spearman(&dec).unwrap();
        assert_abs_diff_eq!(t.rho, -1.0, epsilon = 1e-12);
        assert!(t.p_negative() < 0.001);
    }

    #[test]
    fn tied_ranks_match_the_hand_computation() {
        // x ranks (1, 2.5, 2.5, 4), y ranks (1, 2, 3, 4):
        // rho = 4.5 / sqrt(4.5 * 5) = sqrt(0.9).
        let t = spearman(&[(1.0, 1.0), (2.0, 2.0), (2.0, 3.0), (3.0, 4.0)]).unwrap();
        assert_relative_eq!(t.rho, 0.9f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn constant_axes_and_short_samples_give_no_verdict() {
        assert!(spearman(&[(1.0, 1.0), (2.0, 2.0)]).is_none());
        assert!(spearman(&[(1.0, 5.0), (1.0, 6.0), (1.0, 7.0)]).is_none());
        let nans = [(f64::NAN, 1.0), (2.0, 2.0), (3.0, 1.0)];
        assert!(spearman(&nans).is_none());
    }

    #[test]
    fn normal_cdf_matches_tabulated_quantiles() {
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(normal_cdf(1.959964), 0.975, epsilon = 1e-4);
        assert_abs_diff_eq!(normal_cdf(-1.644854), 0.05, epsilon = 1e-4);
        assert_abs_diff_eq!(normal_cdf(3.0), 0.99865, epsilon = 1e-4);
    }
}
