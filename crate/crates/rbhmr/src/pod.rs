//! Proper orthogonal decomposition in a weighted inner product.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest one count as zero.
pub const ZERO_EIGEN_REL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    Count(usize),
    /// Smallest count whose eigenvalue tail has square root at most the tolerance.
    Tolerance(f64),
    /// Every mode with a nonzero eigenvalue.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PodMethod {
    /// SVD of the Cholesky-weighted snapshot matrix; keeps small eigenvalues accurate.
    #[default]
    WeightedSvd,
    /// Eigendecomposition of the snapshot correlation matrix.
    Snapshots,
}

#[derive(Debug, Clone)]
pub struct PodResult {
    /// Modes as columns, orthonormal in the gram inner product.
    pub basis: DMatrix<f64>,
    /// All nonzero eigenvalues (with the 1/n factor), nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Number of nonzero eigenvalues.
    pub total_count: usize,
}

impl PodResult {
    pub fn m(&self) -> usize {
        self.basis.ncols()
    }

    /// Sum of eigenvalues with index >= `k` (0-based), i.e. the tail after `k` modes.
    pub fn tail(&self, k: usize) -> f64 {
        tail_sum(&self.eigenvalues, k)
    }
}

pub fn tail_sum(eigenvalues: &[f64], k: usize) -> f64 {
    eigenvalues.iter().skip(k).sum()
}

/// Smallest `k >= 1` with `sqrt(tail(k)) <= tol`, capped at the number of eigenvalues.
pub fn count_for_tolerance(eigenvalues: &[f64], tol: f64) -> usize {
    let n = eigenvalues.len();
    if n == 0 {
        return 0;
    }
    // Suffix sums, accumulated from the small end for accuracy.
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + eigenvalues[i];
    }
    (1..=n).find(|&k| suffix[k].sqrt() <= tol).unwrap_or(n)
}

pub fn compute_pod(snapshots: &DMatrix<f64>, gram: &DMatrix<f64>, truncation: Truncation) -> Result<PodResult> {
    compute_pod_with(snapshots, gram, truncation, PodMethod::default())
}

pub fn compute_pod_with(
    snapshots: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    truncation: Truncation,
    method: PodMethod,
) -> Result<PodResult> {
    let (dim, n) = snapshots.shape();
    if n == 0 || dim == 0 {
        return Err(Error::Empty("POD needs at least one snapshot".into()));
    }
    if gram.nrows() != dim || gram.ncols() != dim {
        return Err(Error::InvalidInput(format!(
            "gram is {}x{}, snapshots have {} rows",
            gram.nrows(),
            gram.ncols(),
            dim
        )));
    }
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("POD gram is not positive definite".into()))?;
    let (mut eigenvalues, mut modes) = match method {
        PodMethod::WeightedSvd => {
            let l = chol.l();
            let weighted = l.transpose() * snapshots / (n as f64).sqrt();
            let svd = weighted.svd(true, false);
            let u = svd.u.expect("requested U");
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
            let ev: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].powi(2)).collect();
            let uo = DMatrix::from_fn(dim, order.len(), |r, c| u[(r, order[c])]);
            // Modes in original coordinates: L^T phi = u.
            let phi = l
                .transpose()
                .solve_upper_triangular(&uo)
                .ok_or_else(|| Error::Singular("Cholesky factor singular".into()))?;
            (ev, phi)
        }
        PodMethod::Snapshots => {
            let corr = snapshots.transpose() * gram * snapshots / n as f64;
            let corr = (&corr + corr.transpose()) * 0.5;
            let eig = SymmetricEigen::new(corr);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
            let ev: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
            let mut phi = DMatrix::zeros(dim, n);
            for (c, &i) in order.iter().enumerate() {
                let lam = eig.eigenvalues[i];
                if lam > 0.0 {
                    let v = snapshots * eig.eigenvectors.column(i) / (lam * n as f64).sqrt();
                    phi.set_column(c, &v);
                }
            }
            (ev, phi)
        }
    };
    let lead = eigenvalues.first().copied().unwrap_or(0.0);
    let total = eigenvalues.iter().take_while(|&&l| lead > 0.0 && l > ZERO_EIGEN_REL * lead).count();
    eigenvalues.truncate(total);
    let keep = match truncation {
        Truncation::Count(c) => c.min(total),
        Truncation::Tolerance(tol) => count_for_tolerance(&eigenvalues, tol),
        Truncation::Full => total,
    };
    if let Truncation::Count(c) = truncation {
        if c > total {
            log::warn!("requested {c} POD modes but only {total} are nonzero");
        }
    }
    modes = modes.columns(0, keep).into_owned();
    fix_signs(&mut modes);
    Ok(PodResult {
        basis: modes,
        eigenvalues,
        total_count: total,
    })
}

/// Flip each column so that its first significant entry is positive.
pub fn fix_signs(modes: &mut DMatrix<f64>) {
    for mut col in modes.column_iter_mut() {
        let scale = col.amax();
        if scale == 0.0 {
            continue;
        }
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-8 * scale) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Mean squared gram-norm distance of the snapshots to the span of orthonormal `basis`.
pub fn projection_error(snapshots: &DMatrix<f64>, basis: &DMatrix<f64>, gram: &DMatrix<f64>) -> f64 {
    let n = snapshots.ncols() as f64;
    let coeffs = basis.transpose() * gram * snapshots;
    let resid = snapshots - basis * coeffs;
    let g = gram * &resid;
    resid.component_mul(&g).sum() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn single_snapshot() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let g = random_spd(6, &mut rng);
        let u = DMatrix::from_fn(6, 1, |_, _| rng.random_range(-1.0..1.0));
        let norm2 = (u.transpose() * &g * &u)[(0, 0)];
        let res = compute_pod(&u, &g, Truncation::Full).unwrap();
        assert_eq!(res.total_count, 1);
        assert_relative_eq!(res.eigenvalues[0], norm2, max_relative = 1e-12);
        let b = res.basis.column(0);
        let scaled = u.column(0) / norm2.sqrt();
        let same = (b - &scaled).amax().min((b + &scaled).amax());
        assert!(same < 1e-12);
    }

    #[test]
    fn two_orthogonal_snapshots() {
        let g = DMatrix::<f64>::identity(3, 3);
        let s = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        for method in [PodMethod::WeightedSvd, PodMethod::Snapshots] {
            let res = compute_pod_with(&s, &g, Truncation::Full, method).unwrap();
            assert_relative_eq!(res.eigenvalues[0], 2.0, epsilon = 1e-13);
            assert_relative_eq!(res.eigenvalues[1], 0.5, epsilon = 1e-13);
        }
    }

    #[test]
    fn matches_svd_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let s = DMatrix::from_fn(12, 10, |_, _| rng.random_range(-1.0..1.0));
        let g = DMatrix::<f64>::identity(12, 12);
        let res = compute_pod(&s, &g, Truncation::Count(3)).unwrap();
        let svd = s.clone().svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().map(|v| v * v / 10.0).collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let best: f64 = sv[3..].iter().sum();
        assert_relative_eq!(projection_error(&s, &res.basis, &g), best, max_relative = 1e-10);
    }

    #[test]
    fn tolerance_cut_is_minimal() {
        let ev = [1.0, 1e-2, 1e-4, 1e-6, 1e-8];
        let k = count_for_tolerance(&ev, 1e-2);
        assert_eq!(k, 3);
        assert!(tail_sum(&ev, k).sqrt() <= 1e-2);
        assert!(tail_sum(&ev, k - 1).sqrt() > 1e-2);
        assert_eq!(count_for_tolerance(&ev, 10.0), 1);
    }

    #[test]
    fn rejects_empty() {
        let s = DMatrix::<f64>::zeros(3, 0);
        assert!(matches!(compute_pod(&s, &DMatrix::identity(3, 3), Truncation::Full), Err(Error::Empty(_))));
    }

    proptest::proptest! {
        #[test]
        fn tail_identity_and_orthonormality(seed in 0u64..500, m in 1usize..5) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = random_spd(9, &mut rng);
            let s = DMatrix::from_fn(9, 7, |_, _| rng.random_range(-1.0..1.0));
            let res = compute_pod(&s, &g, Truncation::Count(m)).unwrap();
            let gram_b = res.basis.transpose() * &g * &res.basis;
            proptest::prop_assert!((gram_b - DMatrix::identity(m, m)).amax() < 1e-10);
            let err = projection_error(&s, &res.basis, &g);
            proptest::prop_assert!((err - res.tail(m)).abs() <= 1e-10 * res.tail(0));
            for w in res.eigenvalues.windows(2) {
                proptest::prop_assert!(w[0] >= w[1]);
            }
        }

        #[test]
        fn eigenvalues_invariant_under_reordering(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = random_spd(6, &mut rng);
            let s = DMatrix::from_fn(6, 5, |_, _| rng.random_range(-1.0..1.0));
            let perm = [3usize, 0, 4, 1, 2];
            let sp = DMatrix::from_fn(6, 5, |r, c| s[(r, perm[c])]);
            let a = compute_pod(&s, &g, Truncation::Full).unwrap();
            let b = compute_pod(&sp, &g, Truncation::Full).unwrap();
            for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                proptest::prop_assert!((x - y).abs() <= 1e-12 * a.eigenvalues[0]);
            }
        }

        #[test]
        fn orthonormal_input_spans_same_space(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let q = DMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0)).qr().q();
            let g = DMatrix::identity(8, 8);
            let res = compute_pod(&q, &g, Truncation::Full).unwrap();
            let p1 = &q * q.transpose();
            let p2 = &res.basis * res.basis.transpose();
            proptest::prop_assert!((p1 - p2).amax() < 1e-10);
        }
    }
}
