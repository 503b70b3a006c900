//! Lowering of an [`SdpProblem`] onto the interior-point backend's standard
//! conic form `min qᵀx  s.t.  Ax + s = b, s ∈ K`.
//!
//! Variable layout: the scaled triangular coordinates of each embedded block
//! in declaration order, then the scalars. Row layout mirrors the cone list:
//! zero cone (equalities), nonnegative cone (inequality slacks, then scalar
//! bounds), then one PSD triangle cone per block and per LMI.
//!
//! LMIs whose data is entirely real and free of matrix-block terms skip the
//! complex embedding and keep their natural side.

use super::embed::{embed_complex, embed_hermitian, smat, svec, svec_coords, svec_len, unembed_symmetric};
use super::{SdpProblem, SdpSolution, Sense, SolveStatus};
use crate::{CMat, RMat};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

/// Column-major triplet accumulator; entries at the same position sum.
struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    fn new() -> Self {
        Self {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    fn push(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(v);
        }
    }

    /// Builds CSC with duplicate positions summed.
    fn into_csc(self, m: usize, n: usize) -> CscMatrix<f64> {
        CscMatrix::new_from_triplets(m, n, self.rows, self.cols, self.vals)
    }
}

struct VarLayout {
    /// svec offset of each block; blocks are stored embedded (side 2ℓ).
    block_offsets: Vec<usize>,
    /// embedded sides.
    block_sides: Vec<usize>,
    scalar_offset: usize,
    total: usize,
}

fn layout(problem: &SdpProblem) -> VarLayout {
    let mut off = 0;
    let mut block_offsets = Vec::with_capacity(problem.blocks.len());
    let mut block_sides = Vec::with_capacity(problem.blocks.len());
    for b in &problem.blocks {
        block_offsets.push(off);
        let side = 2 * b.side;
        block_sides.push(side);
        off += svec_len(side);
    }
    VarLayout {
        block_offsets,
        block_sides,
        scalar_offset: off,
        total: off + problem.scalars.len(),
    }
}

fn is_real(m: &CMat) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

/// Real LMIs without congruence terms keep their natural side.
fn lmi_is_real(lmi: &super::Lmi) -> bool {
    lmi.block_terms.is_empty()
        && is_real(&lmi.constant)
        && lmi.scalar_terms.iter().all(|(_, f)| is_real(f))
}

fn real_part(m: &CMat) -> RMat {
    RMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re)
}

/// Writes `factor · svec(embedded A)` into constraint row `row` over the
/// svec coordinates of `block`.
fn emit_block_row(t: &mut Triplets, row: usize, vl: &VarLayout, block: usize, a: &CMat, factor: f64) {
    let e = embed_hermitian(a);
    let off = vl.block_offsets[block];
    for (k, v) in svec(&e).into_iter().enumerate() {
        t.push(row, off + k, factor * v);
    }
}

pub(super) fn solve_lowered(problem: &SdpProblem, tol: f64, max_iter: usize) -> SdpSolution {
    let vl = layout(problem);

    // Objective. ⟨C, X⟩ = ½·svec(emb C)ᵀ svec(emb X).
    let mut q = vec![0.0; vl.total];
    for (b, cost) in problem.block_costs.iter().enumerate() {
        if let Some(c) = cost {
            let e = embed_hermitian(c);
            let off = vl.block_offsets[b];
            for (k, v) in svec(&e).into_iter().enumerate() {
                q[off + k] += 0.5 * v;
            }
        }
    }
    for (l, w) in problem.scalar_costs.iter().enumerate() {
        q[vl.scalar_offset + l] += *w;
    }

    let mut t = Triplets::new();
    let mut b_vec: Vec<f64> = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut row = 0usize;

    // Zero cone: trace equalities.
    let n_eq = problem.constraints.iter().filter(|c| c.sense == Sense::Eq).count();
    if n_eq > 0 {
        for c in problem.constraints.iter().filter(|c| c.sense == Sense::Eq) {
            for (blk, a) in &c.block_terms {
                emit_block_row(&mut t, row, &vl, blk.0, a, 0.5);
            }
            for (s, w) in &c.scalar_terms {
                t.push(row, vl.scalar_offset + s.0, *w);
            }
            b_vec.push(c.rhs);
            row += 1;
        }
        cones.push(SupportedConeT::ZeroConeT(n_eq));
    }

    // Nonnegative cone: Ge as rhs − lhs ≤ 0, Le as lhs − rhs ≤ 0, then one
    // bound row per scalar.
    let n_ineq = problem.constraints.iter().filter(|c| c.sense != Sense::Eq).count();
    let n_nonneg = n_ineq + problem.scalars.len();
    if n_nonneg > 0 {
        for c in problem.constraints.iter().filter(|c| c.sense != Sense::Eq) {
            let sign = match c.sense {
                Sense::Ge => -1.0,
                Sense::Le => 1.0,
                Sense::Eq => unreachable!(),
            };
            for (blk, a) in &c.block_terms {
                emit_block_row(&mut t, row, &vl, blk.0, a, 0.5 * sign);
            }
            for (s, w) in &c.scalar_terms {
                t.push(row, vl.scalar_offset + s.0, sign * w);
            }
            b_vec.push(sign * c.rhs);
            row += 1;
        }
        for l in 0..problem.scalars.len() {
            t.push(row, vl.scalar_offset + l, -1.0);
            b_vec.push(0.0);
            row += 1;
        }
        cones.push(SupportedConeT::NonnegativeConeT(n_nonneg));
    }

    // One PSD cone per block: s = svec(X) ⪰ 0.
    for b in 0..problem.blocks.len() {
        let side = vl.block_sides[b];
        let off = vl.block_offsets[b];
        for k in 0..svec_len(side) {
            t.push(row, off + k, -1.0);
            b_vec.push(0.0);
            row += 1;
        }
        cones.push(SupportedConeT::PSDTriangleConeT(side));
    }

    // One PSD cone per LMI: s = svec(F₀ + Σ s_l F_l + Σ α P X Pᴴ).
    for lmi in &problem.lmis {
        if lmi_is_real(lmi) {
            let side = lmi.side;
            let cvals = svec(&real_part(&lmi.constant));
            let term_vecs: Vec<(usize, Vec<f64>)> = lmi
                .scalar_terms
                .iter()
                .map(|(s, f)| (s.0, svec(&real_part(f))))
                .collect();
            for k in 0..svec_len(side) {
                for (s, tv) in &term_vecs {
                    t.push(row, vl.scalar_offset + s, -tv[k]);
                }
                b_vec.push(cvals[k]);
                row += 1;
            }
            cones.push(SupportedConeT::PSDTriangleConeT(side));
            continue;
        }

        let side = 2 * lmi.side;
        let cvals = svec(&embed_hermitian(&lmi.constant));
        let term_vecs: Vec<(usize, Vec<f64>)> = lmi
            .scalar_terms
            .iter()
            .map(|(s, f)| (s.0, svec(&embed_hermitian(f))))
            .collect();
        // Congruence rows: coefficient of svec(X)_α in svec coordinate
        // (i, j) of α·R X Rᵀ is α·svec(Rᵀ B_ij R)_α.
        let congruences: Vec<(usize, f64, RMat)> = lmi
            .block_terms
            .iter()
            .map(|(blk, alpha, p)| (blk.0, *alpha, embed_complex(p)))
            .collect();
        for (k, i, j) in svec_coords(side) {
            for (s, tv) in &term_vecs {
                t.push(row, vl.scalar_offset + s, -tv[k]);
            }
            for (blk, alpha, r) in &congruences {
                let ri = r.row(i).transpose();
                let rj = r.row(j).transpose();
                let basis_img = if i == j {
                    &ri * ri.transpose()
                } else {
                    (&ri * rj.transpose() + &rj * ri.transpose()) / std::f64::consts::SQRT_2
                };
                let off = vl.block_offsets[*blk];
                for (kk, v) in svec(&basis_img).into_iter().enumerate() {
                    t.push(row, off + kk, -alpha * v);
                }
            }
            b_vec.push(cvals[k]);
            row += 1;
        }
        cones.push(SupportedConeT::PSDTriangleConeT(side));
    }

    let a = t.into_csc(row, vl.total);
    let p = CscMatrix::zeros((vl.total, vl.total));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(max_iter as u32)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .build()
        .expect("static settings");

    let mut solver =
        DefaultSolver::new(&p, &q, &a, &b_vec, &cones, settings).expect("lowering produced a well-formed cone program");
    solver.solve();
    let sol = &solver.solution;

    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::MaxIter,
    };

    let mut blocks = Vec::with_capacity(problem.blocks.len());
    for (b, def) in problem.blocks.iter().enumerate() {
        let off = vl.block_offsets[b];
        let side = vl.block_sides[b];
        let coords = &sol.x[off..off + svec_len(side)];
        blocks.push(unembed_symmetric(&smat(coords, side), def.side));
    }
    let scalars: Vec<f64> = (0..problem.scalars.len())
        .map(|l| sol.x[vl.scalar_offset + l])
        .collect();
    let objective = problem.objective_at(&blocks, &scalars);

    SdpSolution {
        status,
        blocks,
        scalars,
        objective,
        primal_residual: sol.r_prim,
        dual_residual: sol.r_dual,
        iterations: sol.iterations as usize,
    }
}

#[cfg(test)]
mod tests {
    use super::Triplets;

    #[test]
    fn csc_assembly_sums_duplicates_and_drops_explicit_zeros() {
        let mut t = Triplets::new();
        t.push(1, 0, 2.0);
        t.push(0, 1, 5.0);
        t.push(1, 0, 3.0);
        t.push(2, 2, 0.0);
        t.push(2, 2, 1.0);
        let m = t.into_csc(3, 3);
        assert_eq!(m.colptr, vec![0, 1, 2, 3]);
        assert_eq!(m.rowval, vec![1, 0, 2]);
        assert_eq!(m.nzval, vec![5.0, 5.0, 1.0]);
    }
}
