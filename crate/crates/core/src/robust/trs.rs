//! Exact extremes of a quadratic form over a norm ball.
//!
//! The worst-case interference and best-case signal bounds all reduce to
//! `max { (ĥ+ξ)ᴴ A (ĥ+ξ) : ‖ξ‖ ≤ ε }` for a Hermitian `A`. In the
//! eigenbasis of `A` the stationarity condition becomes a scalar secular
//! equation in the multiplier of the ball constraint, monotone above the
//! top eigenvalue, so a bisection pins the maximizer to machine precision.
//! The classical degenerate case, where the estimate has no component on
//! the top eigenspace, is handled by padding the boundary gap along a top
//! eigenvector.

use crate::{C64, CMat, CVec};

/// Bisection steps on the secular equation; each halves the bracket, so
/// this is far past f64 resolution for any bracket the caller can produce.
const BISECT_ITERS: usize = 200;

/// Relative width of the eigenvalue cluster treated as the top eigenspace.
const TOP_TOL: f64 = 1e-11;

/// Largest value of `(ĥ+ξ)ᴴ A (ĥ+ξ)` over `‖ξ‖ ≤ ε`, for Hermitian `A`
/// of any signature. Exact up to eigensolver and bisection error.
pub fn worst_case_quadratic(h_hat: &CVec, a: &CMat, eps: f64) -> f64 {
    worst_case_argmax(h_hat, a, eps).0
}

/// Smallest value of the same form; the maximum of the negated matrix.
pub fn least_case_quadratic(h_hat: &CVec, a: &CMat, eps: f64) -> f64 {
    -worst_case_argmax(h_hat, &(-a), eps).0
}

/// Worst-case value together with a maximizing perturbation (original
/// coordinates, always feasible). The value is attained at the returned
/// point, so callers can cross-check the oracle against the raw form.
pub(crate) fn worst_case_argmax(h_hat: &CVec, a: &CMat, eps: f64) -> (f64, CVec) {
    let n = h_hat.len();
    assert!(n >= 1, "empty quadratic form");
    assert_eq!(a.nrows(), n, "matrix side must match the estimate");
    assert_eq!(a.ncols(), n, "matrix side must match the estimate");
    assert!(eps >= 0.0, "ball radius must be nonnegative");

    let ah = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let nominal = (h_hat.adjoint() * &ah * h_hat)[(0, 0)].re;
    if eps == 0.0 {
        return (nominal, CVec::zeros(n));
    }

    let eig = ah.symmetric_eigen();
    let vals = &eig.eigenvalues;
    let u = &eig.eigenvectors;
    let ht = u.adjoint() * h_hat;
    // b = Uᴴ A ĥ in eigen coordinates; the a_i factor keeps terms with a
    // (near-)zero eigenvalue harmless in the secular sum.
    let b = CVec::from_fn(n, |i, _| ht[i] * C64::new(vals[i], 0.0));
    let bnorm2: f64 = b.iter().map(|c| c.norm_sqr()).sum();

    let amax = vals.max();
    let lam_floor = amax.max(0.0);
    let spec_scale = vals.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let top_width = TOP_TOL * spec_scale.max(f64::MIN_POSITIVE);
    let top: Vec<usize> = if amax > 0.0 {
        (0..n).filter(|&i| vals[i] >= amax - top_width).collect()
    } else {
        Vec::new()
    };
    let s_top: f64 = top.iter().map(|&i| b[i].norm_sqr()).sum();

    // φ(λ) = Σ |b_i|² / (λ − a_i)², the squared norm of the stationary
    // perturbation at multiplier λ; strictly decreasing above the spectrum.
    let phi = |lam: f64| -> f64 {
        (0..n)
            .map(|i| {
                let d = lam - vals[i];
                if d <= 0.0 {
                    if b[i].norm_sqr() == 0.0 { 0.0 } else { f64::INFINITY }
                } else {
                    b[i].norm_sqr() / (d * d)
                }
            })
            .sum()
    };
    let phi_rest = |lam: f64| -> f64 {
        (0..n)
            .filter(|i| !top.contains(i))
            .map(|i| {
                let d = lam - vals[i];
                b[i].norm_sqr() / (d * d)
            })
            .sum()
    };

    let degenerate = s_top <= 1e-26 * bnorm2.max(f64::MIN_POSITIVE);
    let mut xi_eig = CVec::zeros(n);
    if degenerate && phi_rest(lam_floor) <= eps * eps {
        // The multiplier sticks at the top eigenvalue (or zero): fill in
        // the stationary components and, when the constraint must bind,
        // spend the leftover radius on a top eigenvector. The cross term
        // with b vanishes there, so the generic value formula still holds.
        for i in 0..n {
            if !top.contains(&i) {
                xi_eig[i] = b[i] / C64::new(lam_floor - vals[i], 0.0);
            }
        }
        if amax > 0.0 {
            let used: f64 = xi_eig.iter().map(|c| c.norm_sqr()).sum();
            let pad = (eps * eps - used).max(0.0).sqrt();
            let idx = *top.first().expect("positive top eigenvalue has an index");
            xi_eig[idx] += C64::new(pad, 0.0);
        }
    } else {
        // Easy case: bracket the secular root. At the high end
        // φ ≤ ‖b‖²/(λ − a_max)² = ε², so the root sits inside.
        let mut lo = lam_floor;
        let mut hi = lam_floor + bnorm2.sqrt() / eps;
        if phi(hi) > eps * eps {
            hi = lam_floor + 2.0 * bnorm2.sqrt() / eps + spec_scale;
        }
        for _ in 0..BISECT_ITERS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if phi(mid) > eps * eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // hi keeps φ ≤ ε², so the reconstructed point stays feasible.
        for i in 0..n {
            let d = hi - vals[i];
            xi_eig[i] = if d > 0.0 { b[i] / C64::new(d, 0.0) } else { C64::new(0.0, 0.0) };
        }
    }

    let linear: f64 = (0..n).map(|i| (xi_eig[i].conj() * b[i]).re).sum();
    let curved: f64 = (0..n).map(|i| vals[i] * xi_eig[i].norm_sqr()).sum();
    let value = nominal + 2.0 * linear + curved;
    (value, u * xi_eig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_ball, standard_complex};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> CMat {
        let g = CMat::from_fn(n, n, |_, _| standard_complex(rng));
        (&g + g.adjoint()) * C64::new(0.5, 0.0) + CMat::identity(n, n) * C64::new(shift, 0.0)
    }

    fn form(h: &CVec, a: &CMat, xi: &CVec) -> f64 {
        let x = h + xi;
        (x.adjoint() * a * &x)[(0, 0)].re
    }

    #[test]
    fn isotropic_worst_case_is_the_shifted_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = CVec::from_fn(4, |_, _| standard_complex(&mut rng));
        let a = CMat::identity(4, 4);
        for eps in [0.1, 1.0, 3.0] {
            let want = (h.norm() + eps).powi(2);
            assert_abs_diff_eq!(worst_case_quadratic(&h, &a, eps), want, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_radius_returns_the_nominal_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = CVec::from_fn(3, |_, _| standard_complex(&mut rng));
        let a = random_hermitian(&mut rng, 3, 0.0);
        let nominal = form(&h, &a, &CVec::zeros(3));
        assert_abs_diff_eq!(worst_case_quadratic(&h, &a, 0.0), nominal, epsilon = 1e-14);
    }

    #[test]
    fn scalar_case_matches_the_closed_form() {
        let h = CVec::from_element(1, C64::new(1.5, 2.0));
        let r = h.norm();
        let pos = CMat::from_element(1, 1, C64::new(0.7, 0.0));
        let neg = CMat::from_element(1, 1, C64::new(-0.7, 0.0));
        for eps in [0.3, 2.0, 5.0] {
            assert_abs_diff_eq!(
                worst_case_quadratic(&h, &pos, eps),
                0.7 * (r + eps).powi(2),
                epsilon = 1e-12
            );
            let clipped = (r - eps).max(0.0);
            assert_abs_diff_eq!(
                worst_case_quadratic(&h, &neg, eps),
                -0.7 * clipped * clipped,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn the_maximum_is_attained_and_dominates_ball_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..40 {
            let n = 2 + trial % 3;
            let shift = match trial % 4 {
                0 => 1.0,
                1 => 0.0,
                2 => -1.0,
                _ => -4.0,
            };
            let a = random_hermitian(&mut rng, n, shift);
            let h = CVec::from_fn(n, |_, _| standard_complex(&mut rng));
            let eps = [0.05, 0.5, 2.0][trial % 3];
            let (value, xi) = worst_case_argmax(&h, &a, eps);
            let scale = value.abs().max(1.0);
            assert!(xi.norm() <= eps * (1.0 + 1e-9), "maximizer left the ball");
            assert_abs_diff_eq!(form(&h, &a, &xi), value, epsilon = 1e-9 * scale);
            for _ in 0..500 {
                let probe = sample_ball(&mut rng, n, eps);
                assert!(form(&h, &a, &probe) <= value + 1e-9 * scale);
            }
        }
    }

    #[test]
    fn degenerate_top_direction_still_reaches_the_boundary() {
        // Estimate orthogonal to the top eigenvector; the multiplier sticks
        // at the top eigenvalue and the leftover radius pads along it.
        // With A = diag(2, 1), ĥ = e₂, ε = 2 the maximizer is (√3, 2) and
        // the value is 2·3 + 1·4 = 10.
        let a = CMat::from_diagonal(&CVec::from_vec(vec![C64::new(2.0, 0.0), C64::new(1.0, 0.0)]));
        let h = CVec::from_vec(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        let (value, xi) = worst_case_argmax(&h, &a, 2.0);
        assert_abs_diff_eq!(value, 10.0, epsilon = 1e-10);
        assert_abs_diff_eq!(xi.norm(), 2.0, epsilon = 1e-10);
    }

    #[test]
    fn negative_curvature_pulls_the_form_to_zero_inside_the_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = CVec::from_fn(3, |_, _| standard_complex(&mut rng)) * C64::new(0.2, 0.0);
        let a = -CMat::identity(3, 3);
        // Ball contains the origin of the form, so the max is exactly zero.
        assert_abs_diff_eq!(worst_case_quadratic(&h, &a, 1.0), 0.0, epsilon = 1e-12);
        // Least case of the same form is the far side of the ball.
        let want = -(h.norm() + 1.0).powi(2);
        assert_abs_diff_eq!(least_case_quadratic(&h, &a, 1.0), want, epsilon = 1e-10);
    }

    #[test]
    fn null_estimate_spends_the_whole_radius_on_the_top_mode() {
        // A ĥ = 0 forces the pure padding branch: value = ĥᴴAĥ + ε²·a_max.
        let a = CMat::from_diagonal(&CVec::from_vec(vec![C64::new(3.0, 0.0), C64::new(0.0, 0.0)]));
        let h = CVec::from_vec(vec![C64::new(0.0, 0.0), C64::new(2.0, 0.0)]);
        let (value, xi) = worst_case_argmax(&h, &a, 0.5);
        assert_abs_diff_eq!(value, 3.0 * 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(xi.norm(), 0.5, epsilon = 1e-12);
    }
}
