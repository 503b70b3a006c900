//! Real symmetric embedding of Hermitian matrices and the scaled triangular
//! vectorization used by the interior-point backend.

use crate::{C64, CMat, RMat};

/// `X ↦ [[Re X, −Im X], [Im X, Re X]]` for a matrix of any shape. The map
/// preserves products and sends adjoints to transposes, so it carries
/// congruence factors faithfully.
pub fn embed_complex(x: &CMat) -> RMat {
    let (r, c) = x.shape();
    let mut out = RMat::zeros(2 * r, 2 * c);
    for j in 0..c {
        for i in 0..r {
            let z = x[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

/// [`embed_complex`] restricted to square input. Hermitian matrices map to
/// symmetric ones; the map multiplies traces by two, so PSD-ness carries
/// over in both directions.
pub fn embed_hermitian(x: &CMat) -> RMat {
    assert_eq!(x.nrows(), x.ncols());
    embed_complex(x)
}

/// Inverse of [`embed_hermitian`] composed with projection onto its image:
/// averages the two real copies and antisymmetrizes the imaginary part, so
/// numerically unstructured symmetric input still yields an exactly
/// Hermitian matrix with the same constraint functionals.
pub fn unembed_symmetric(s: &RMat, n: usize) -> CMat {
    assert_eq!(s.nrows(), 2 * n);
    assert_eq!(s.ncols(), 2 * n);
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let re = 0.5 * (s[(i, j)] + s[(i + n, j + n)]);
            let im = 0.5 * (s[(i + n, j)] - s[(i, j + n)]);
            out[(i, j)] = C64::new(re, im);
        }
    }
    // Exact Hermitian projection; the embedding image is Hermitian already,
    // numerical dust aside.
    let adj = out.adjoint();
    (out + adj) * C64::new(0.5, 0.0)
}

/// Dimension of the scaled upper-triangular vectorization of a side-`n`
/// symmetric matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Scaled triangular vectorization: upper triangle, column-major, with
/// off-diagonal entries multiplied by √2 so that `svec(A)ᵀ svec(B) = ⟨A, B⟩`.
/// This is the layout the interior-point backend's PSD cone expects.
pub fn svec(a: &RMat) -> Vec<f64> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut out = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                out.push(a[(i, j)]);
            } else {
                out.push(std::f64::consts::SQRT_2 * 0.5 * (a[(i, j)] + a[(j, i)]));
            }
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], n: usize) -> RMat {
    debug_assert_eq!(v.len(), svec_len(n));
    let mut a = RMat::zeros(n, n);
    let mut idx = 0;
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                a[(i, j)] = v[idx];
            } else {
                let w = v[idx] / std::f64::consts::SQRT_2;
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
            idx += 1;
        }
    }
    a
}

/// Enumerates svec coordinates as `(flat index, row, col)` with `row ≤ col`.
pub fn svec_coords(n: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..n).flat_map(move |j| (0..=j).map(move |i| (i, j))).enumerate().map(|(k, (i, j))| (k, i, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    fn rand_herm(n: usize, seed: u64) -> CMat {
        // Tiny deterministic congruential stream; test-local, no rand dep.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let raw = CMat::from_fn(n, n, |_, _| C64::new(next(), next()));
        let adj = raw.adjoint();
        (raw + adj) * C64::new(0.5, 0.0)
    }

    #[test]
    fn embed_round_trip_is_identity_on_hermitian() {
        for n in 1..6 {
            let x = rand_herm(n, n as u64);
            let back = unembed_symmetric(&embed_hermitian(&x), n);
            assert!((&back - &x).norm() < 1e-14);
        }
    }

    #[test]
    fn embed_preserves_products_and_doubles_traces() {
        let a = rand_herm(4, 7);
        let b = rand_herm(4, 11);
        let ea = embed_hermitian(&a);
        let eb = embed_hermitian(&b);
        let prod = &a * &b;
        let eprod = embed_hermitian(&prod);
        assert!((&ea * &eb - &eprod).norm() < 1e-12);
        let tr: C64 = prod.trace();
        assert!((eprod.trace() - 2.0 * tr.re).abs() < 1e-12);
    }

    #[test]
    fn svec_inner_product_matches_matrix_inner_product() {
        let a = embed_hermitian(&rand_herm(3, 3));
        let b = embed_hermitian(&rand_herm(3, 5));
        let dot: f64 = svec(&a).iter().zip(svec(&b).iter()).map(|(x, y)| x * y).sum();
        let frob = (a.transpose() * &b).trace();
        assert!((dot - frob).abs() < 1e-12);
    }

    #[test]
    fn smat_inverts_svec() {
        let a = embed_hermitian(&rand_herm(5, 9));
        let back = smat(&svec(&a), 10);
        assert!((&back - &a).norm() < 1e-14);
    }

    #[test]
    fn rectangular_embedding_carries_congruences() {
        let x = rand_herm(3, 13);
        // Any 5×3 complex factor; reuse the Hermitian generator and crop.
        let p = rand_herm(5, 17).columns(0, 3).into_owned();
        let want = embed_hermitian(&(&p * &x * p.adjoint()));
        let got = embed_complex(&p) * embed_hermitian(&x) * embed_complex(&p).transpose();
        assert!((&got - &want).norm() < 1e-12);
    }
}
