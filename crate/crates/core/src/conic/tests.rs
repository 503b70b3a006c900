use super::*;
use crate::{C64, CMat, CVec};
use approx::assert_abs_diff_eq;
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

fn outer(h: &CVec) -> CMat {
    h * h.adjoint()
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    let v = CVec::from_fn(n, |_, _| {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let norm = v.norm();
    v / C64::new(norm, 0.0)
}

/// min Tr(G) s.t. (1/γ)Tr(hhᴴG) ≥ σ², G ⪰ 0; optimum γσ²/‖h‖² at rank one.
fn single_user_problem(h: &CVec, gamma: f64, sigma2: f64) -> SdpProblem {
    let n = h.len();
    let mut p = SdpProblem::new();
    let g = p.add_block("G", n);
    p.add_trace_cost(g, 1.0);
    p.add_ge_constraint(vec![(g, outer(h) / C64::new(gamma, 0.0))], vec![], sigma2);
    p
}

#[test]
fn identity_lmi_reaches_the_identity() {
    let mut p = SdpProblem::new();
    let g = p.add_block("G", 3);
    p.add_trace_cost(g, 1.0);
    // G - I ⪰ 0.
    p.add_lmi(3, -eye(3), vec![], vec![(g, 1.0, eye(3))]);
    let sol = solve_sdp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(sol.objective, 3.0, epsilon = 1e-6);
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(sol.blocks[0][(i, j)].re, want, epsilon = 1e-5);
            assert_abs_diff_eq!(sol.blocks[0][(i, j)].im, 0.0, epsilon = 1e-5);
        }
    }
}

#[test]
fn single_user_axis_channel_is_rank_one_unit_power() {
    let h = CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
    let p = single_user_problem(&h, 1.0, 1.0);
    let sol = solve_sdp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-6);
    let g = &sol.blocks[0];
    assert_abs_diff_eq!(g[(0, 0)].re, 1.0, epsilon = 1e-5);
    assert_abs_diff_eq!(g[(1, 1)].re, 0.0, epsilon = 1e-5);
    assert_abs_diff_eq!(g[(0, 1)].norm(), 0.0, epsilon = 1e-5);
}

#[test]
fn negative_trace_cap_is_certified_infeasible() {
    let mut p = SdpProblem::new();
    let g = p.add_block("G", 2);
    p.add_trace_cost(g, 1.0);
    p.add_le_constraint(vec![(g, eye(2))], vec![], -1.0);
    let sol = solve_sdp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn single_user_family_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..100 {
        let n = 2 + (trial % 5);
        let scale = 0.2 + 3.0 * rng.random::<f64>();
        let h = random_unit(&mut rng, n) * C64::new(scale, 0.0);
        let gamma = 0.5 + 7.5 * rng.random::<f64>();
        let sigma2 = 0.3 + 2.7 * rng.random::<f64>();
        let p = single_user_problem(&h, gamma, sigma2);
        let sol = solve_sdp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "trial {trial}");
        let expect = gamma * sigma2 / h.norm_squared();
        let rel = (sol.objective - expect).abs() / expect;
        assert!(rel <= 1e-6, "trial {trial}: rel err {rel:.3e}");
        // The optimum is rank one along h.
        let (lead, vec) = extract_principal(&sol.blocks[0]);
        assert_abs_diff_eq!(lead, expect, epsilon = 1e-5 * expect.max(1.0));
        let align = (vec.adjoint() * &h)[(0, 0)].norm() / h.norm();
        assert_abs_diff_eq!(align, 1.0, epsilon = 1e-4);
    }
}

#[test]
fn optimal_blocks_stay_psd_to_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let h = random_unit(&mut rng, 4);
        let p = single_user_problem(&h, 2.0, 1.0);
        let sol = solve_sdp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        for b in &sol.blocks {
            let (_, eigs) = hermitian_eigs(b);
            let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -DEFAULT_TOL, "min eigenvalue {min:.3e}");
        }
    }
}

fn hermitian_eigs(m: &CMat) -> (usize, Vec<f64>) {
    let sym = (m + m.adjoint()) / C64::new(2.0, 0.0);
    let eig = sym.symmetric_eigen();
    (m.nrows(), eig.eigenvalues.iter().cloned().collect())
}

#[test]
fn reported_objective_brackets_known_feasible_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let h = random_unit(&mut rng, 3) * C64::new(1.3, 0.0);
        let (gamma, sigma2) = (1.7, 0.9);
        let p = single_user_problem(&h, gamma, sigma2);
        let sol = solve_sdp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        // Independently constructed feasible point: power along h.
        let t = gamma * sigma2 / h.norm_squared().powi(2);
        let feasible = outer(&h) * C64::new(t * 1.000001, 0.0);
        let upper = p.objective_at(&[feasible], &[]);
        assert!(sol.objective <= upper + DEFAULT_TOL.max(1e-9 * upper.abs()));
        // Closed-form optimum is the matching lower bound.
        let lower = gamma * sigma2 / h.norm_squared();
        assert!(sol.objective >= lower - 1e-6 * lower);
    }
}

#[test]
fn identical_problems_solve_bitwise_identically() {
    let build = || {
        let h = CVec::from_vec(vec![
            C64::new(0.6, -0.3),
            C64::new(-0.1, 0.9),
            C64::new(0.4, 0.2),
        ]);
        single_user_problem(&h, 2.4, 1.1)
    };
    let a = solve_sdp(&build(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let b = solve_sdp(&build(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.iterations, b.iterations);
    for (x, y) in a.blocks[0].iter().zip(b.blocks[0].iter()) {
        assert_eq!(x.re.to_bits(), y.re.to_bits());
        assert_eq!(x.im.to_bits(), y.im.to_bits());
    }
}

#[test]
fn scalar_lmi_epigraph_hits_closed_form() {
    // min t s.t. [[t, 1], [1, t]] ⪰ 0  →  t = 1 (real fast path).
    let mut p = SdpProblem::new();
    let t = p.add_scalar("t");
    p.add_scalar_cost(t, 1.0);
    let mut constant = CMat::zeros(2, 2);
    constant[(0, 1)] = C64::new(1.0, 0.0);
    constant[(1, 0)] = C64::new(1.0, 0.0);
    p.add_lmi(2, constant, vec![(t, eye(2))], vec![]);
    let sol = solve_sdp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-6);

    // Complex variant [[t, i], [-i, t]] ⪰ 0 exercises the embedded path.
    let mut p = SdpProblem::new();
    let t = p.add_scalar("t");
    p.add_scalar_cost(t, 1.0);
    let mut constant = CMat::zeros(2, 2);
    constant[(0, 1)] = C64::new(0.0, 1.0);
    constant[(1, 0)] = C64::new(0.0, -1.0);
    p.add_lmi(2, constant, vec![(t, eye(2))], vec![]);
    let sol = solve_sdp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-6);
}

#[test]
fn congruence_lmi_matches_inverse_gram_trace() {
    // min Tr(X) s.t. P X Pᴴ ⪰ I  →  X = P⁻¹P⁻ᴴ, objective Tr((PᴴP)⁻¹).
    let p_mat = CMat::from_vec(
        2,
        2,
        vec![
            C64::new(1.0, 0.4),
            C64::new(-0.2, 0.7),
            C64::new(0.3, -0.1),
            C64::new(1.5, 0.0),
        ],
    );
    let mut p = SdpProblem::new();
    let x = p.add_block("X", 2);
    p.add_trace_cost(x, 1.0);
    p.add_lmi(2, -eye(2), vec![], vec![(x, 1.0, p_mat.clone())]);
    let sol = solve_sdp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let gram = p_mat.adjoint() * &p_mat;
    let expect = gram
        .try_inverse()
        .unwrap()
        .diagonal()
        .iter()
        .map(|z| z.re)
        .sum::<f64>();
    assert_abs_diff_eq!(sol.objective, expect, epsilon = 1e-6 * expect);
}

#[test]
fn principal_extraction_follows_documented_conventions() {
    // Degenerate spectrum: tie-break keeps the lowest index.
    let (lam, v) = extract_principal(&eye(2));
    assert_abs_diff_eq!(lam, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(v[0].re, 1.0, epsilon = 1e-9);
    assert_abs_diff_eq!(v[1].norm(), 0.0, epsilon = 1e-9);

    // Rank-one input returns its generator with real-positive lead entry.
    let h = CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)])
        / C64::new(2.0f64.sqrt(), 0.0);
    let (lam, v) = extract_principal(&outer(&h));
    assert_abs_diff_eq!(lam, 1.0, epsilon = 1e-9);
    assert_abs_diff_eq!(v[0].re, h[0].re, epsilon = 1e-9);
    assert_abs_diff_eq!(v[1].re, h[1].re, epsilon = 1e-9);

    let mut d = CMat::zeros(2, 2);
    d[(0, 0)] = C64::new(3.0, 0.0);
    d[(1, 1)] = C64::new(1.0, 0.0);
    let (lam, v) = extract_principal(&d);
    assert_abs_diff_eq!(lam, 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(v[0].re, 1.0, epsilon = 1e-12);

    // Zero matrix: documented fallback.
    let (lam, v) = extract_principal(&CMat::zeros(3, 3));
    assert_eq!(lam, 0.0);
    assert_abs_diff_eq!(v[0].re, 1.0, epsilon = 1e-12);

    // Phase convention: complex generator comes back with lead entry real.
    let g = CVec::from_vec(vec![C64::new(0.0, 0.8), C64::new(0.6, 0.0)]);
    let (lam, v) = extract_principal(&outer(&g));
    assert_abs_diff_eq!(lam, 1.0, epsilon = 1e-9);
    assert!(v[0].im.abs() < 1e-9 && v[0].re > 0.0);
}

#[test]
fn non_hermitian_coefficients_are_rejected() {
    let mut p = SdpProblem::new();
    let g = p.add_block("G", 2);
    let mut a = CMat::zeros(2, 2);
    a[(0, 1)] = C64::new(1.0, 0.0);
    p.add_ge_constraint(vec![(g, a)], vec![], 1.0);
    let err = solve_sdp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap_err();
    assert!(matches!(err, ConicError::NonHermitianInput(_)));
}

#[test]
fn mismatched_coefficient_shapes_are_rejected() {
    let mut p = SdpProblem::new();
    let g = p.add_block("G", 2);
    p.add_ge_constraint(vec![(g, eye(3))], vec![], 1.0);
    let err = solve_sdp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap_err();
    assert!(matches!(err, ConicError::DimensionMismatch(_)));
}

#[test]
fn triplet_dump_lists_every_nonzero_once() {
    let h = CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
    let mut p = single_user_problem(&h, 2.0, 1.0);
    let t = p.add_scalar("slack");
    p.add_eq_constraint(vec![], vec![(t, 1.0)], 0.5);
    let dump = p.dump_triplets();
    let lines: Vec<&str> = dump.lines().collect();
    assert!(lines.iter().any(|l| l.starts_with("obj,")));
    assert!(lines.iter().any(|l| l.starts_with("c0,")));
    assert!(lines.iter().any(|l| l.contains("rhs")));
    for line in &lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert!(fields.len() >= 4, "short line: {line}");
    }
}
