//! Index algebra for the inter-cell-interference consensus variables.
//!
//! The distributed algorithms agree on a global vector `v` with one
//! coordinate per ordered interference link `(m, n, k)`, `m ≠ n`: the power
//! BS `m` leaks onto user `k` of cell `n`. Each BS `n` works with a local
//! vector `v_n` of length `NK`: first the totals `V_nk = Σ_{m≠n} v_mnk` its
//! own users suffer, then the terms `v_nmk` it inflicts on every other cell.
//! The 0/1 matrices `W_n` select local views from the global vector, and the
//! pseudoinverse of their stack is the consensus projector used by the
//! central unit.
//!
//! Orderings are lexicographic: global by `(m, then n ≠ m ascending, then
//! k)`, local by `[V_n1..V_nK, then v_nmk ascending in m, k]`.

use crate::channel::ChannelSet;
use crate::{CVec, RMat, RVec};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IciError {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
}

/// Immutable layout shared read-only by all BS workers.
#[derive(Debug, Clone)]
pub struct IciLayout {
    n_cells: usize,
    users_per_cell: usize,
    w: Vec<RMat>,
    w_pinv: RMat,
}

impl IciLayout {
    pub fn new(n_cells: usize, users_per_cell: usize) -> Result<Self, IciError> {
        if n_cells < 2 {
            return Err(IciError::InvalidDimensions(format!(
                "need at least 2 cells for inter-cell interference, got {n_cells}"
            )));
        }
        if users_per_cell == 0 {
            return Err(IciError::InvalidDimensions("need at least one user".into()));
        }
        let mut layout = Self {
            n_cells,
            users_per_cell,
            w: Vec::with_capacity(n_cells),
            w_pinv: RMat::zeros(0, 0),
        };
        let (gd, ld) = (layout.global_dim(), layout.local_dim());
        for n in 0..n_cells {
            let mut w = RMat::zeros(ld, gd);
            for k in 0..users_per_cell {
                // V_nk totals the leakage of every other BS onto user (n,k).
                for m in (0..n_cells).filter(|&m| m != n) {
                    w[(layout.victim_slot(k), layout.global_index(m, n, k))] = 1.0;
                }
                // v_nmk is a straight copy of one global coordinate.
                for m in (0..n_cells).filter(|&m| m != n) {
                    w[(layout.emitter_slot(n, m, k), layout.global_index(n, m, k))] = 1.0;
                }
            }
            layout.w.push(w);
        }
        let mut stack = RMat::zeros(n_cells * ld, gd);
        for n in 0..n_cells {
            stack.view_mut((n * ld, 0), (ld, gd)).copy_from(&layout.w[n]);
        }
        // Thin QR pseudoinverse; the stack always has full column rank since
        // the emitter rows alone form a permutation of the global coordinates.
        let qr = stack.qr();
        let (q, r) = (qr.q(), qr.r());
        layout.w_pinv = r
            .solve_upper_triangular(&q.transpose())
            .expect("stacked selection matrix has full column rank");
        Ok(layout)
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn users_per_cell(&self) -> usize {
        self.users_per_cell
    }

    /// Global vector length `N(N−1)K`.
    pub fn global_dim(&self) -> usize {
        self.n_cells * (self.n_cells - 1) * self.users_per_cell
    }

    /// Per-BS vector length `NK`.
    pub fn local_dim(&self) -> usize {
        self.n_cells * self.users_per_cell
    }

    /// Global coordinate of `v_mnk` (leakage of BS `m` onto user `k` of
    /// cell `n ≠ m`).
    pub fn global_index(&self, m: usize, n: usize, k: usize) -> usize {
        debug_assert!(m != n && m < self.n_cells && n < self.n_cells && k < self.users_per_cell);
        let n_rank = if n < m { n } else { n - 1 };
        (m * (self.n_cells - 1) + n_rank) * self.users_per_cell + k
    }

    /// Local slot of the ICI total `V_nk` (same position for every BS).
    pub fn victim_slot(&self, k: usize) -> usize {
        debug_assert!(k < self.users_per_cell);
        k
    }

    /// Local slot of `v_nmk` within BS `n`'s vector (`m ≠ n`).
    pub fn emitter_slot(&self, n: usize, m: usize, k: usize) -> usize {
        debug_assert!(m != n && m < self.n_cells && n < self.n_cells && k < self.users_per_cell);
        let m_rank = if m < n { m } else { m - 1 };
        self.users_per_cell + m_rank * self.users_per_cell + k
    }

    pub fn w(&self, n: usize) -> &RMat {
        &self.w[n]
    }

    pub fn w_pinv(&self) -> &RMat {
        &self.w_pinv
    }

    /// `W_n v`: BS `n`'s view of a global vector.
    pub fn apply_w(&self, n: usize, global: &RVec) -> RVec {
        &self.w[n] * global
    }

    /// Stacks per-BS vectors in BS order into one `N·NK` vector.
    pub fn stack(&self, per_bs: &[RVec]) -> RVec {
        assert_eq!(per_bs.len(), self.n_cells);
        let ld = self.local_dim();
        let mut out = RVec::zeros(self.n_cells * ld);
        for (n, v) in per_bs.iter().enumerate() {
            assert_eq!(v.len(), ld);
            out.rows_mut(n * ld, ld).copy_from(v);
        }
        out
    }

    /// `W† · stack`: least-squares consensus over the per-BS views.
    pub fn consensus_from_stack(&self, stacked: &RVec) -> RVec {
        &self.w_pinv * stacked
    }
}

/// The ICI terms BS `n` inflicts with beams `g_n1..g_nK`: local vector with
/// `v_nmk = Σ_i |h_nmkᴴ g_ni|²` filled in and the `V_nk` slots left zero
/// (those are consensus quantities, not local ones).
pub fn compute_local_ici(
    layout: &IciLayout,
    n: usize,
    beams: &[CVec],
    channels: &ChannelSet,
) -> RVec {
    assert_eq!(beams.len(), layout.users_per_cell());
    let mut v = RVec::zeros(layout.local_dim());
    for m in (0..layout.n_cells()).filter(|&m| m != n) {
        for k in 0..layout.users_per_cell() {
            let h = channels.link(n, m, k);
            let power: f64 = beams
                .iter()
                .map(|g| {
                    let inner = h.dotc(g);
                    inner.norm_sqr()
                })
                .sum();
            v[layout.emitter_slot(n, m, k)] = power;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel, SystemConfig};
    use crate::C64;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_enumerated_two_cell_single_user_layout() {
        let l = IciLayout::new(2, 1).unwrap();
        assert_eq!(l.global_dim(), 2);
        assert_eq!(l.local_dim(), 2);
        // Global order: v_(m=0,n=1,k=0) then v_(m=1,n=0,k=0).
        assert_eq!(l.global_index(0, 1, 0), 0);
        assert_eq!(l.global_index(1, 0, 0), 1);
        let w1 = l.w(0);
        let w2 = l.w(1);
        assert_eq!(
            (w1[(0, 0)], w1[(0, 1)], w1[(1, 0)], w1[(1, 1)]),
            (0.0, 1.0, 1.0, 0.0)
        );
        assert_eq!(
            (w2[(0, 0)], w2[(0, 1)], w2[(1, 0)], w2[(1, 1)]),
            (1.0, 0.0, 0.0, 1.0)
        );
        // Each global coordinate sits in exactly two stacked rows, so the
        // stack's Gram matrix is 2I and the pseudoinverse is half the
        // transpose.
        let mut stack = RMat::zeros(4, 2);
        stack.view_mut((0, 0), (2, 2)).copy_from(w1);
        stack.view_mut((2, 0), (2, 2)).copy_from(w2);
        let gram = stack.transpose() * &stack;
        assert_abs_diff_eq!(gram[(0, 0)], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gram[(0, 1)], 0.0, epsilon = 1e-14);
        let expect = stack.transpose() * 0.5;
        for i in 0..2 {
            for j in 0..4 {
                assert_abs_diff_eq!(l.w_pinv()[(i, j)], expect[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn three_cell_two_user_dimensions() {
        let l = IciLayout::new(3, 2).unwrap();
        assert_eq!(l.global_dim(), 12);
        assert_eq!(l.local_dim(), 6);
        assert!(IciLayout::new(1, 2).is_err());
        assert!(IciLayout::new(2, 0).is_err());
    }

    #[test]
    fn global_index_matches_brute_force_enumeration() {
        for (n_cells, k_per) in [(2, 1), (3, 2), (4, 3)] {
            let l = IciLayout::new(n_cells, k_per).unwrap();
            let mut expect = 0;
            for m in 0..n_cells {
                for n in (0..n_cells).filter(|&n| n != m) {
                    for k in 0..k_per {
                        assert_eq!(l.global_index(m, n, k), expect, "({m},{n},{k})");
                        expect += 1;
                    }
                }
            }
            assert_eq!(expect, l.global_dim());
        }
    }

    #[test]
    fn selection_rows_have_documented_support() {
        let l = IciLayout::new(4, 2).unwrap();
        for n in 0..4 {
            let w = l.w(n);
            for k in 0..2 {
                let ones = w.row(l.victim_slot(k)).iter().filter(|&&x| x == 1.0).count();
                assert_eq!(ones, 3, "victim rows sum N-1 coordinates");
            }
            for m in (0..4).filter(|&m| m != n) {
                for k in 0..2 {
                    let row = w.row(l.emitter_slot(n, m, k));
                    assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
                    assert_eq!(row[l.global_index(n, m, k)], 1.0);
                }
            }
        }
        // Every column of the stack carries exactly two ones: one victim
        // row, one emitter row.
        let ld = l.local_dim();
        for g in 0..l.global_dim() {
            let mut ones = 0;
            for n in 0..4 {
                for r in 0..ld {
                    if l.w(n)[(r, g)] == 1.0 {
                        ones += 1;
                    }
                }
            }
            assert_eq!(ones, 2);
        }
    }

    #[test]
    fn pseudoinverse_is_left_inverse() {
        for (n_cells, k_per) in [(2, 1), (2, 2), (3, 2), (4, 2)] {
            let l = IciLayout::new(n_cells, k_per).unwrap();
            let ld = l.local_dim();
            let mut stack = RMat::zeros(n_cells * ld, l.global_dim());
            for n in 0..n_cells {
                stack.view_mut((n * ld, 0), (ld, l.global_dim())).copy_from(l.w(n));
            }
            let prod = l.w_pinv() * stack;
            for i in 0..l.global_dim() {
                for j in 0..l.global_dim() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (prod[(i, j)] - want).abs() < 1e-10,
                        "({n_cells},{k_per}) entry ({i},{j}) = {}",
                        prod[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn local_ici_matches_direct_restatement() {
        let cfg = SystemConfig::uniform(3, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let set = sample_channel(&cfg, &mut rng);
        let l = IciLayout::new(3, 2).unwrap();
        let beams: Vec<CVec> = (0..2)
            .map(|_| CVec::from_fn(4, |_, _| crate::channel::standard_complex(&mut rng)))
            .collect();
        let v = compute_local_ici(&l, 1, &beams, &set);
        for k in 0..2 {
            assert_eq!(v[l.victim_slot(k)], 0.0, "victim slots stay placeholder");
        }
        for m in [0usize, 2] {
            for k in 0..2 {
                let mut want = 0.0;
                for g in &beams {
                    let h = set.link(1, m, k);
                    let ip: C64 = h.iter().zip(g.iter()).map(|(a, b)| a.conj() * b).sum();
                    want += ip.norm_sqr();
                }
                assert_abs_diff_eq!(v[l.emitter_slot(1, m, k)], want, epsilon = 1e-12);
                assert!(v[l.emitter_slot(1, m, k)] >= 0.0);
            }
        }
    }

    #[test]
    fn aligned_beam_hits_cauchy_schwarz_bound() {
        let cfg = SystemConfig::uniform(2, 1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let set = sample_channel(&cfg, &mut rng);
        let l = IciLayout::new(2, 1).unwrap();
        let h = set.link(0, 1, 0).clone();
        let g = h.clone() * C64::new(2.0, 0.0);
        let v = compute_local_ici(&l, 0, &[g.clone()], &set);
        assert_abs_diff_eq!(
            v[l.emitter_slot(0, 1, 0)],
            h.norm_squared() * g.norm_squared(),
            epsilon = 1e-9
        );
        let zeros = compute_local_ici(&l, 0, &[CVec::zeros(4)], &set);
        assert_eq!(zeros.iter().cloned().sum::<f64>(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn consensus_round_trip_recovers_consistent_global(
            n_cells in 2usize..5,
            k_per in 1usize..4,
            seed in 0u64..500,
        ) {
            let l = IciLayout::new(n_cells, k_per).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            use rand::RngExt;
            let v = RVec::from_fn(l.global_dim(), |_, _| rng.random::<f64>());
            let per_bs: Vec<RVec> = (0..n_cells).map(|n| l.apply_w(n, &v)).collect();
            let back = l.consensus_from_stack(&l.stack(&per_bs));
            for i in 0..l.global_dim() {
                prop_assert!((back[i] - v[i]).abs() < 1e-10);
            }
        }
    }
}
