//! Small dense semidefinite programming over complex Hermitian blocks.
//!
//! Every optimization stage in this crate reduces to one problem shape:
//! minimize a real linear functional of Hermitian PSD matrix blocks and
//! nonnegative scalars, subject to trace-linear constraints and linear
//! matrix inequalities. This module owns that shape and the solve path.
//!
//! Hermitian data is lowered onto the real symmetric embedding
//! `X ↦ [[Re X, −Im X], [Im X, Re X]]`, which is an algebra homomorphism and
//! maps the complex PSD cone into the real one; the embedded problem is then
//! handed to a primal-dual interior-point solver (Clarabel) whose homogeneous
//! embedding yields infeasibility certificates rather than timeouts. Returned
//! blocks are projected back onto the embedding's image, so callers always
//! see Hermitian matrices.
//!
//! The embedding is transparent: constraint functionals evaluate identically
//! on an embedded point and on its structure-averaged part, and embedded
//! antisymmetric directions are objective-neutral, so optima of the embedded
//! problem reconstruct optima of the complex one.
//!
//! # Example
//! ```
//! use mcbf_core::conic::{SdpProblem, SolveStatus, solve_sdp, DEFAULT_TOL, DEFAULT_MAX_ITER};
//! use mcbf_core::{C64, CMat};
//!
//! // min Tr(G) s.t. Tr(h hᴴ G) ≥ 1, G ⪰ 0 with h = [1, 0]ᵀ.
//! let mut p = SdpProblem::new();
//! let g = p.add_block("G", 2);
//! p.add_trace_cost(g, 1.0);
//! let mut outer = CMat::zeros(2, 2);
//! outer[(0, 0)] = C64::new(1.0, 0.0);
//! p.add_ge_constraint(vec![(g, outer)], vec![], 1.0);
//! let sol = solve_sdp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
//! assert_eq!(sol.status, SolveStatus::Optimal);
//! assert!((sol.objective - 1.0).abs() < 1e-6);
//! ```

mod embed;
mod lower;

pub use embed::{embed_hermitian, unembed_symmetric};

use crate::{C64, CMat, CVec};
use nalgebra::DVector;
use thiserror::Error;

/// Default solve tolerance; tight enough that downstream rank-1 checks on
/// extracted blocks are meaningful.
pub const DEFAULT_TOL: f64 = 1e-7;
/// Default interior-point iteration cap.
pub const DEFAULT_MAX_ITER: usize = 200;

/// Handle to a Hermitian PSD matrix block of an [`SdpProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(pub(crate) usize);

/// Handle to a nonnegative real scalar of an [`SdpProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarId(pub(crate) usize);

/// Direction of a trace-linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// Trace-linear constraint `Σ ⟨A_j, X_j⟩ + Σ c_l s_l ⋈ rhs`.
#[derive(Debug, Clone)]
pub struct TraceConstraint {
    pub block_terms: Vec<(BlockId, CMat)>,
    pub scalar_terms: Vec<(ScalarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Affine linear matrix inequality `F₀ + Σ s_l F_l + Σ α_j P_j X_j P_jᴴ ⪰ 0`.
///
/// block terms are congruences: `(block, α, P)` contributes `α · P X Pᴴ`
/// with `P` of shape `side × block_side`. That form covers every LMI in the
/// robust beamforming pipeline as well as quadratic-penalty epigraphs.
#[derive(Debug, Clone)]
pub struct Lmi {
    pub side: usize,
    pub constant: CMat,
    pub scalar_terms: Vec<(ScalarId, CMat)>,
    pub block_terms: Vec<(BlockId, f64, CMat)>,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockDef {
    pub name: String,
    pub side: usize,
}

/// A semidefinite program over named Hermitian blocks and nonneg scalars.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    pub(crate) blocks: Vec<BlockDef>,
    pub(crate) scalars: Vec<String>,
    pub(crate) block_costs: Vec<Option<CMat>>,
    pub(crate) scalar_costs: Vec<f64>,
    pub(crate) constraints: Vec<TraceConstraint>,
    pub(crate) lmis: Vec<Lmi>,
}

/// Termination status of [`solve_sdp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// KKT residuals at or near tolerance; solution returned.
    Optimal,
    /// Certificate of primal infeasibility found.
    Infeasible,
    /// Certificate of dual infeasibility (primal objective unbounded below).
    Unbounded,
    /// Iteration budget exhausted or progress stalled before a verdict.
    MaxIter,
}

/// Solver output. Block values are Hermitian; on non-`Optimal` statuses they
/// hold whatever iterate the solver stopped at and must not be trusted.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub blocks: Vec<CMat>,
    pub scalars: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("non-Hermitian coefficient matrix: {0}")]
    NonHermitianInput(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

const HERMITIAN_TOL: f64 = 1e-9;

fn hermitian_defect(m: &CMat) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn scale_of(m: &CMat) -> f64 {
    1.0 + m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, name: &str, side: usize) -> BlockId {
        assert!(side >= 1, "blocks must have positive side");
        self.blocks.push(BlockDef {
            name: name.to_string(),
            side,
        });
        self.block_costs.push(None);
        BlockId(self.blocks.len() - 1)
    }

    pub fn add_scalar(&mut self, name: &str) -> ScalarId {
        self.scalars.push(name.to_string());
        self.scalar_costs.push(0.0);
        ScalarId(self.scalars.len() - 1)
    }

    pub fn block_side(&self, id: BlockId) -> usize {
        self.blocks[id.0].side
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_scalars(&self) -> usize {
        self.scalars.len()
    }

    /// Adds `weight · Tr(X)` to the objective.
    pub fn add_trace_cost(&mut self, block: BlockId, weight: f64) {
        let side = self.blocks[block.0].side;
        let eye = CMat::identity(side, side) * C64::new(weight, 0.0);
        match &mut self.block_costs[block.0] {
            Some(c) => *c += eye,
            slot => *slot = Some(eye),
        }
    }

    /// Adds `⟨C, X⟩` to the objective (`C` Hermitian).
    pub fn add_block_cost(&mut self, block: BlockId, cost: CMat) {
        match &mut self.block_costs[block.0] {
            Some(c) => *c += cost,
            slot => *slot = Some(cost),
        }
    }

    /// Adds `weight · s` to the objective.
    pub fn add_scalar_cost(&mut self, scalar: ScalarId, weight: f64) {
        self.scalar_costs[scalar.0] += weight;
    }

    pub fn add_constraint(&mut self, c: TraceConstraint) {
        self.constraints.push(c);
    }

    pub fn add_ge_constraint(
        &mut self,
        block_terms: Vec<(BlockId, CMat)>,
        scalar_terms: Vec<(ScalarId, f64)>,
        rhs: f64,
    ) {
        self.constraints.push(TraceConstraint {
            block_terms,
            scalar_terms,
            sense: Sense::Ge,
            rhs,
        });
    }

    pub fn add_eq_constraint(
        &mut self,
        block_terms: Vec<(BlockId, CMat)>,
        scalar_terms: Vec<(ScalarId, f64)>,
        rhs: f64,
    ) {
        self.constraints.push(TraceConstraint {
            block_terms,
            scalar_terms,
            sense: Sense::Eq,
            rhs,
        });
    }

    pub fn add_le_constraint(
        &mut self,
        block_terms: Vec<(BlockId, CMat)>,
        scalar_terms: Vec<(ScalarId, f64)>,
        rhs: f64,
    ) {
        self.constraints.push(TraceConstraint {
            block_terms,
            scalar_terms,
            sense: Sense::Le,
            rhs,
        });
    }

    /// Adds `constant + Σ s_l F_l + Σ α_j P_j X_j P_jᴴ ⪰ 0`.
    pub fn add_lmi(
        &mut self,
        side: usize,
        constant: CMat,
        scalar_terms: Vec<(ScalarId, CMat)>,
        block_terms: Vec<(BlockId, f64, CMat)>,
    ) {
        self.lmis.push(Lmi {
            side,
            constant,
            scalar_terms,
            block_terms,
        });
    }

    /// Checks Hermitian-ness of every coefficient matrix, dimension
    /// consistency, and finiteness of objective coefficients.
    pub fn validate(&self) -> Result<(), ConicError> {
        let check_herm = |m: &CMat, what: &str| -> Result<(), ConicError> {
            if m.nrows() != m.ncols() {
                return Err(ConicError::DimensionMismatch(format!(
                    "{what}: {}x{} not square",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if hermitian_defect(m) > HERMITIAN_TOL * scale_of(m) {
                return Err(ConicError::NonHermitianInput(what.to_string()));
            }
            Ok(())
        };
        for (b, cost) in self.block_costs.iter().enumerate() {
            if let Some(c) = cost {
                check_herm(c, &format!("objective cost of block {}", self.blocks[b].name))?;
                if c.nrows() != self.blocks[b].side {
                    return Err(ConicError::DimensionMismatch(format!(
                        "objective cost of block {}",
                        self.blocks[b].name
                    )));
                }
                if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(ConicError::DimensionMismatch(format!(
                        "non-finite objective cost on block {}",
                        self.blocks[b].name
                    )));
                }
            }
        }
        if self.scalar_costs.iter().any(|c| !c.is_finite()) {
            return Err(ConicError::DimensionMismatch(
                "non-finite scalar objective coefficient".into(),
            ));
        }
        for (ci, c) in self.constraints.iter().enumerate() {
            for (b, a) in &c.block_terms {
                check_herm(a, &format!("constraint {ci} coefficient on {}", self.blocks[b.0].name))?;
                if a.nrows() != self.blocks[b.0].side {
                    return Err(ConicError::DimensionMismatch(format!(
                        "constraint {ci} coefficient side {} vs block side {}",
                        a.nrows(),
                        self.blocks[b.0].side
                    )));
                }
            }
        }
        for (li, lmi) in self.lmis.iter().enumerate() {
            check_herm(&lmi.constant, &format!("LMI {li} constant"))?;
            if lmi.constant.nrows() != lmi.side {
                return Err(ConicError::DimensionMismatch(format!(
                    "LMI {li} constant side {} vs declared {}",
                    lmi.constant.nrows(),
                    lmi.side
                )));
            }
            for (_, f) in &lmi.scalar_terms {
                check_herm(f, &format!("LMI {li} scalar coefficient"))?;
                if f.nrows() != lmi.side {
                    return Err(ConicError::DimensionMismatch(format!("LMI {li} scalar term side")));
                }
            }
            for (b, _, p) in &lmi.block_terms {
                if p.nrows() != lmi.side || p.ncols() != self.blocks[b.0].side {
                    return Err(ConicError::DimensionMismatch(format!(
                        "LMI {li} congruence shape {}x{} vs ({}, {})",
                        p.nrows(),
                        p.ncols(),
                        lmi.side,
                        self.blocks[b.0].side
                    )));
                }
            }
        }
        Ok(())
    }

    /// Objective value of a candidate assignment; used by weak-duality and
    /// feasibility cross-checks.
    pub fn objective_at(&self, blocks: &[CMat], scalars: &[f64]) -> f64 {
        let mut v = 0.0;
        for (b, cost) in self.block_costs.iter().enumerate() {
            if let Some(c) = cost {
                v += inner_herm(c, &blocks[b]);
            }
        }
        for (l, w) in self.scalar_costs.iter().enumerate() {
            v += w * scalars[l];
        }
        v
    }

    /// Debug dump: one line per nonzero coefficient,
    /// `constraint-id, entity, row, col, re, im`. Objective rows use
    /// constraint-id `obj`, LMIs are prefixed `lmi`.
    pub fn dump_triplets(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let wr = |out: &mut String, cid: &str, ent: &str, m: &CMat| {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    let z = m[(i, j)];
                    if z != C64::new(0.0, 0.0) {
                        let _ = writeln!(out, "{cid},{ent},{i},{j},{},{}", z.re, z.im);
                    }
                }
            }
        };
        for (b, cost) in self.block_costs.iter().enumerate() {
            if let Some(c) = cost {
                wr(&mut out, "obj", &self.blocks[b].name, c);
            }
        }
        for (l, w) in self.scalar_costs.iter().enumerate() {
            if *w != 0.0 {
                let _ = writeln!(out, "obj,{},0,0,{},0", self.scalars[l], w);
            }
        }
        for (ci, c) in self.constraints.iter().enumerate() {
            for (b, a) in &c.block_terms {
                wr(&mut out, &format!("c{ci}"), &self.blocks[b.0].name, a);
            }
            for (s, w) in &c.scalar_terms {
                let _ = writeln!(out, "c{ci},{},0,0,{},0", self.scalars[s.0], w);
            }
            let sense = match c.sense {
                Sense::Le => "le",
                Sense::Eq => "eq",
                Sense::Ge => "ge",
            };
            let _ = writeln!(out, "c{ci},rhs.{sense},0,0,{},0", c.rhs);
        }
        for (li, lmi) in self.lmis.iter().enumerate() {
            wr(&mut out, &format!("lmi{li}"), "const", &lmi.constant);
            for (s, f) in &lmi.scalar_terms {
                wr(&mut out, &format!("lmi{li}"), &self.scalars[s.0], f);
            }
            for (b, alpha, p) in &lmi.block_terms {
                let _ = writeln!(out, "lmi{li},{}.coef,0,0,{alpha},0", self.blocks[b.0].name);
                wr(
                    &mut out,
                    &format!("lmi{li}"),
                    &format!("{}.congruence", self.blocks[b.0].name),
                    p,
                );
            }
        }
        out
    }
}

/// Real inner product `⟨A, B⟩ = Re Tr(Aᴴ B)` of Hermitian matrices.
pub(crate) fn inner_herm(a: &CMat, b: &CMat) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.re * y.re + x.im * y.im;
    }
    acc
}

/// Solves the program; see module docs for the lowering.
pub fn solve_sdp(problem: &SdpProblem, tol: f64, max_iter: usize) -> Result<SdpSolution, ConicError> {
    assert!(tol > 0.0, "tol must be positive");
    problem.validate()?;
    Ok(lower::solve_lowered(problem, tol, max_iter))
}

/// Largest eigenvalue and unit-norm eigenvector of a Hermitian matrix.
///
/// Ties pick the lowest eigenvalue index produced by the deterministic
/// symmetric eigendecomposition; the eigenvector phase is fixed by making its
/// first nonzero entry real-positive. A zero matrix yields `(0, e₁)`.
pub fn extract_principal(block: &CMat) -> (f64, CVec) {
    let n = block.nrows();
    assert_eq!(n, block.ncols(), "extract_principal needs a square matrix");
    // Hermitize first so callers can pass solver output unfiltered.
    let h = (block + block.adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut best = 0;
    for i in 1..n {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let lambda = eig.eigenvalues[best];
    let mut v: CVec = eig.eigenvectors.column(best).into_owned();
    let norm = v.norm();
    if norm > 0.0 {
        v /= C64::new(norm, 0.0);
    } else {
        v = DVector::zeros(n);
        v[0] = C64::new(1.0, 0.0);
        return (lambda, v);
    }
    let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(lead) = v.iter().position(|z| z.norm() > 1e-12 * scale) {
        let phase = v[lead] / C64::new(v[lead].norm(), 0.0);
        v /= phase;
        // Rotation leaves a residual imaginary dust on the lead entry.
        v[lead] = C64::new(v[lead].re.abs(), 0.0);
    }
    (lambda, v)
}

#[cfg(test)]
mod tests;
