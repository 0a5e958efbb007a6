//! Normal form of a skew-symmetric bilinear form against a positive one.
//!
//! Given a positive non-degenerate `Q` and a skew form `sigma` on a real
//! vector space, produces a basis `v_1, ..., v_m` and `n <= m/2` with
//! `Q(v_j, v_j) = Q(v_{n+j}, v_{n+j}) > 0`, `Q`-orthogonality across the
//! listed index pairs, and `sigma` in the canonical `+-1/0` pattern:
//! `sigma(v_j, v_{n+j}) = 1` for `j <= n`, all other pairings zero.
//!
//! The construction works in `Q`-orthonormal coordinates, where `sigma`
//! becomes a skew-symmetric matrix: its nonzero spectrum `+-i mu` is
//! read off `-sigma^2`, symplectic pairs are extracted eigenspace by
//! eigenspace, and the radical spans the zero eigenspace. The normal
//! form properties are re-verified post hoc rather than trusted.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct WilliamsonBasis {
    /// Columns are the basis vectors `v_1, ..., v_m`.
    pub basis: DMatrix<f64>,
    /// Number of symplectic pairs.
    pub n: usize,
    /// Skew eigenvalue parameter `mu_j` of the pair `(v_j, v_{n+j})`.
    /// Empirically `Q(v_j, v_j) * mu_j = 1` for this construction; the
    /// relation is reported, not asserted.
    pub pair_values: Vec<f64>,
    /// Largest residual found by the post-hoc verification.
    pub max_residual: f64,
}

/// Computes the normal-form basis. `q` must be symmetric positive
/// definite and `sigma` antisymmetric (checked against `tol`).
pub fn williamson_basis(
    q: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    tol: f64,
) -> Result<WilliamsonBasis> {
    let m = q.nrows();
    if q.ncols() != m || sigma.nrows() != m || sigma.ncols() != m {
        return Err(Error::dim("q and sigma must be square of equal size"));
    }
    let scale = sigma.norm().max(1.0);
    if (sigma + sigma.transpose()).norm() > tol * scale {
        return Err(Error::invalid("sigma must be antisymmetric"));
    }
    let q_eig = (0.5 * (q + q.transpose())).symmetric_eigen();
    if q_eig.eigenvalues.min() <= 0.0 {
        return Err(Error::invalid("q must be positive definite"));
    }
    let q_inv_sqrt = &q_eig.eigenvectors
        * DMatrix::from_diagonal(&q_eig.eigenvalues.map(|x| 1.0 / x.sqrt()))
        * q_eig.eigenvectors.transpose();

    // sigma in Q-orthonormal coordinates
    let s = &q_inv_sqrt * sigma * &q_inv_sqrt;
    let m2 = -(&s * &s);
    let eig = m2.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let svals: Vec<f64> = order
        .iter()
        .map(|&i| eig.eigenvalues[i].max(0.0).sqrt())
        .collect();
    let smax = svals.first().copied().unwrap_or(0.0);
    let zero_tol = (tol.max(1e-7) * smax).max(1e-300);

    // group indices into eigenvalue clusters (descending)
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut radical: Vec<usize> = Vec::new();
    for (pos, &sv) in svals.iter().enumerate() {
        if sv <= zero_tol {
            radical.push(pos);
        } else if let Some(last) = clusters.last_mut() {
            let anchor = svals[last[0]];
            if (anchor - sv).abs() <= 1e-8 * anchor {
                last.push(pos);
            } else {
                clusters.push(vec![pos]);
            }
        } else {
            clusters.push(vec![pos]);
        }
    }

    let col = |pos: usize| -> DVector<f64> {
        eig.eigenvectors.column(order[pos]).clone_owned()
    };

    let mut e_vecs: Vec<DVector<f64>> = Vec::new();
    let mut f_vecs: Vec<DVector<f64>> = Vec::new();
    let mut pair_values: Vec<f64> = Vec::new();
    for cluster in &clusters {
        if cluster.len() % 2 != 0 {
            return Err(Error::Divergence(
                "odd skew eigenvalue multiplicity; adjust tolerance".into(),
            ));
        }
        let mu = cluster.iter().map(|&p| svals[p]).sum::<f64>() / cluster.len() as f64;
        // orthonormal basis of the eigenspace
        let mut space: Vec<DVector<f64>> = cluster.iter().map(|&p| col(p)).collect();
        while !space.is_empty() {
            let a = {
                let mut a = space[0].clone();
                a /= a.norm();
                a
            };
            // partner with sigma(a, b) = +mu after normalization
            let mut b = -(&s * &a) / mu;
            b -= &a * a.dot(&b);
            let bn = b.norm();
            if bn < 0.5 {
                return Err(Error::Divergence(
                    "failed to extract a symplectic partner".into(),
                ));
            }
            b /= bn;
            e_vecs.push(a.clone() / mu.sqrt());
            f_vecs.push(b.clone() / mu.sqrt());
            pair_values.push(mu);
            // deflate the extracted plane
            let mut remaining: Vec<DVector<f64>> = Vec::new();
            for v in space.iter().skip(1) {
                let mut w = v.clone();
                w -= &a * a.dot(v);
                w -= &b * b.dot(v);
                if w.norm() > 1e-7 {
                    w /= w.norm();
                    // re-orthogonalize against what we already kept
                    for r in &remaining {
                        w -= r * r.dot(&w);
                    }
                    let nn = w.norm();
                    if nn > 1e-7 {
                        remaining.push(w / nn);
                    }
                }
            }
            space = remaining;
        }
    }

    let n = e_vecs.len();
    let mut basis = DMatrix::zeros(m, m);
    for (j, v) in e_vecs.iter().enumerate() {
        basis.set_column(j, &(&q_inv_sqrt * v));
    }
    for (j, v) in f_vecs.iter().enumerate() {
        basis.set_column(n + j, &(&q_inv_sqrt * v));
    }
    for (j, &pos) in radical.iter().enumerate() {
        basis.set_column(2 * n + j, &(&q_inv_sqrt * col(pos)));
    }

    let max_residual = verify_normal_form(q, sigma, &basis, n);
    if !(max_residual <= (tol * scale).max(tol)) {
        return Err(Error::Divergence(format!(
            "normal form verification failed: residual {max_residual:.3e}"
        )));
    }
    Ok(WilliamsonBasis {
        basis,
        n,
        pair_values,
        max_residual,
    })
}

/// Residual of the three normal-form properties for a candidate basis;
/// zero means the bullets hold exactly.
pub fn verify_normal_form(
    q: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    basis: &DMatrix<f64>,
    n: usize,
) -> f64 {
    let m = basis.ncols();
    let qb = basis.transpose() * q * basis;
    let sb = basis.transpose() * sigma * basis;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        worst = worst.max((qb[(j, j)] - qb[(n + j, n + j)]).abs());
        if qb[(j, j)] <= 0.0 {
            worst = worst.max(1.0);
        }
    }
    for j in 0..m {
        for k in 0..m {
            if j != k && (j < 2 * n || k < 2 * n) {
                worst = worst.max(qb[(j, k)].abs());
            }
            let expected = if j < n && k == n + j {
                1.0
            } else if (n..2 * n).contains(&j) && k == j - n {
                -1.0
            } else {
                0.0
            };
            worst = worst.max((sb[(j, k)] - expected).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_skew(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        &a - a.transpose()
    }

    fn random_spd(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(m, m) * 0.4
    }

    #[test]
    fn canonical_two_dimensional_case() {
        let q = DMatrix::identity(2, 2);
        let sigma = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let wb = williamson_basis(&q, &sigma, 1e-10).unwrap();
        assert_eq!(wb.n, 1);
        assert!(wb.max_residual < 1e-12);
        assert!((wb.pair_values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_sigma_yields_orthogonal_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_spd(3, &mut rng);
        let sigma = DMatrix::zeros(3, 3);
        let wb = williamson_basis(&q, &sigma, 1e-10).unwrap();
        assert_eq!(wb.n, 0);
        assert!(wb.max_residual < 1e-10);
    }

    #[test]
    fn random_pairs_verify_to_1e10() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..40 {
            let m = 2 + trial % 7; // dimensions 2..8
            let q = random_spd(m, &mut rng);
            let sigma = random_skew(m, &mut rng);
            let wb = williamson_basis(&q, &sigma, 1e-10).unwrap();
            assert!(
                wb.max_residual < 1e-10,
                "dim {m} trial {trial}: residual {:.3e}",
                wb.max_residual
            );
            assert!(2 * wb.n <= m);
        }
    }

    #[test]
    fn repeated_eigenvalues_are_handled() {
        // block diag(mu J, mu J): one eigenvalue of multiplicity 4
        let mut sigma = DMatrix::zeros(4, 4);
        for &(i, j) in &[(0usize, 1usize), (2, 3)] {
            sigma[(i, j)] = 0.7;
            sigma[(j, i)] = -0.7;
        }
        let q = DMatrix::identity(4, 4);
        let wb = williamson_basis(&q, &sigma, 1e-10).unwrap();
        assert_eq!(wb.n, 2);
        assert!(wb.max_residual < 1e-11);
    }

    #[test]
    fn rejects_non_skew_sigma() {
        let q = DMatrix::identity(2, 2);
        let not_skew = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(williamson_basis(&q, &not_skew, 1e-10).is_err());
    }
}
