//! Adaptive empirical projection: bisection of the transverse interval with local
//! interpolation systems, the projection itself, and its a priori / a posteriori bounds.

use nalgebra::{DMatrix, DVector};

use crate::eim::{local_pod, select_interpolants, Dictionary, FnSpace, Functional, InterpSystem, LebesgueMode};
use crate::error::{Error, Result};
use crate::linalg::SymTridiag;

/// Relative eigenvalue cut of the local POD on subintervals.
pub const LOCAL_POD_CUT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpmSettings {
    pub eps_int: f64,
    pub n_max: usize,
    pub dict: Dictionary,
}

impl Default for EpmSettings {
    fn default() -> Self {
        EpmSettings {
            eps_int: 1e-10,
            n_max: 0,
            dict: Dictionary::points(),
        }
    }
}

/// Collateral basis with its partition and precomputed projection integrals.
#[derive(Debug, Clone)]
pub struct EpmProjector {
    /// Orthonormal collateral functions as columns.
    pub basis: DMatrix<f64>,
    /// One interpolation system per interval of the partition, left to right.
    pub parts: Vec<InterpSystem>,
    /// `proj[(l, n)] = int_I theta_l kappa_n` over the owning interval.
    pub proj: DMatrix<f64>,
    pub e_int: f64,
    pub e_int_history: Vec<f64>,
    pub n_train: usize,
}

impl EpmProjector {
    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    /// Total number of functionals over the partition.
    pub fn l(&self) -> usize {
        self.parts.iter().map(|p| p.len()).sum()
    }

    pub fn functionals(&self) -> impl Iterator<Item = &Functional> {
        self.parts.iter().flat_map(|p| p.functionals.iter())
    }

    pub fn observe(&self, v: &[f64]) -> Vec<f64> {
        self.functionals().map(|f| f.apply(v)).collect()
    }

    /// Projection coefficients from observations.
    pub fn coefficients(&self, obs: &[f64]) -> DVector<f64> {
        self.proj.tr_mul(&DVector::from_column_slice(obs))
    }

    pub fn project(&self, v: &[f64]) -> DVector<f64> {
        &self.basis * self.coefficients(&self.observe(v))
    }

    /// Keep the first `k` collateral functions. Only defined for an unrefined partition,
    /// where the greedy sequence is nested in the basis order.
    pub fn truncate(&self, space: &FnSpace, k: usize) -> Result<EpmProjector> {
        if self.parts.len() != 1 {
            return Err(Error::InvalidInput("truncation needs a single-interval partition".into()));
        }
        let k = k.min(self.k());
        let basis = self.basis.columns(0, k).into_owned();
        let parts = vec![self.parts[0].truncate(k)];
        let proj = projection_integrals(space, &basis, &parts);
        Ok(EpmProjector {
            basis,
            parts,
            proj,
            e_int: f64::NAN,
            e_int_history: Vec::new(),
            n_train: self.n_train,
        })
    }

    /// Local integration errors `e^I` of this projector on a snapshot set.
    pub fn local_errors(&self, space: &FnSpace, samples: &DMatrix<f64>) -> Vec<f64> {
        local_errors(space, &self.basis, &self.parts, &self.proj, samples)
    }

    /// Discrete `L2(D x omega)` distance between the snapshots and their projections.
    pub fn discrete_error(&self, space: &FnSpace, samples: &DMatrix<f64>) -> f64 {
        let n = samples.ncols();
        let mut acc = 0.0;
        for j in 0..n {
            let u: Vec<f64> = samples.column(j).iter().copied().collect();
            let d: Vec<f64> = u.iter().zip(self.project(&u).iter()).map(|(a, b)| a - b).collect();
            acc += space.mass().quad(&d, &d);
        }
        (acc / n as f64).max(0.0).sqrt()
    }

    pub fn lebesgue_constants(&self, space: &FnSpace, mode: LebesgueMode) -> Vec<f64> {
        self.parts.iter().map(|p| p.lebesgue_bound(space, mode)).collect()
    }
}

pub fn projection_integrals(space: &FnSpace, basis: &DMatrix<f64>, parts: &[InterpSystem]) -> DMatrix<f64> {
    let l: usize = parts.iter().map(|p| p.len()).sum();
    let mut proj = DMatrix::zeros(l, basis.ncols());
    let mut row = 0;
    for p in parts {
        let mi = space.restricted_mass(p.a, p.b);
        let mk = mi.apply(basis);
        let block = p.theta.transpose() * mk;
        proj.view_mut((row, 0), (p.len(), basis.ncols())).copy_from(&block);
        row += p.len();
    }
    proj
}

fn local_errors(
    space: &FnSpace,
    basis: &DMatrix<f64>,
    parts: &[InterpSystem],
    proj: &DMatrix<f64>,
    samples: &DMatrix<f64>,
) -> Vec<f64> {
    let n = samples.ncols();
    if n == 0 {
        return vec![0.0; parts.len()];
    }
    let exact = basis.transpose() * space.mass().apply(samples);
    let l = proj.nrows();
    let mut obs = DMatrix::zeros(l, n);
    let mut row = 0;
    for p in parts {
        for f in &p.functionals {
            for j in 0..n {
                obs[(row, j)] = f.apply_column(samples, j);
            }
            row += 1;
        }
    }
    let err = exact - proj.transpose() * obs;
    parts
        .iter()
        .map(|p| {
            let gi = basis.transpose() * space.restricted_mass(p.a, p.b).apply(basis);
            let ge = &gi * &err;
            err.component_mul(&ge).sum() / n as f64
        })
        .collect()
}

/// Build the projector, bisecting intervals whose local error exceeds their share of `eps_int`.
pub fn run_adaptive_epm(
    space: &FnSpace,
    basis: &DMatrix<f64>,
    samples: &DMatrix<f64>,
    settings: &EpmSettings,
) -> Result<EpmProjector> {
    if basis.nrows() != space.dim() || samples.nrows() != space.dim() {
        return Err(Error::InvalidInput("basis, samples and space dimensions differ".into()));
    }
    let (y0, y1) = (space.mesh.a, space.mesh.b);
    let width = y1 - y0;
    let mut parts = vec![select_interpolants(space, basis, y0, y1, &settings.dict)?];
    let mut frozen = vec![false];
    let mut proj = projection_integrals(space, basis, &parts);
    let mut local = local_errors(space, basis, &parts, &proj, samples);
    let mut e_int: f64 = local.iter().sum();
    let mut history = vec![e_int];
    for sweep in 0..settings.n_max {
        if e_int <= settings.eps_int {
            break;
        }
        let mut next = Vec::with_capacity(parts.len() * 2);
        let mut next_frozen = Vec::with_capacity(parts.len() * 2);
        let mut refined = false;
        for (i, p) in parts.iter().enumerate() {
            let share = (p.b - p.a) / width * settings.eps_int;
            if frozen[i] || local[i] <= share {
                next.push(p.clone());
                next_frozen.push(frozen[i]);
                continue;
            }
            let mid = 0.5 * (p.a + p.b);
            match bisect(space, basis, p.a, mid, p.b, &settings.dict) {
                Ok((left, right)) => {
                    next.push(left);
                    next.push(right);
                    next_frozen.extend([false, false]);
                    refined = true;
                }
                Err(e) => {
                    log::debug!("sweep {sweep}: keeping [{}, {}] unrefined: {e}", p.a, p.b);
                    next.push(p.clone());
                    next_frozen.push(true);
                }
            }
        }
        if !refined {
            break;
        }
        parts = next;
        frozen = next_frozen;
        proj = projection_integrals(space, basis, &parts);
        local = local_errors(space, basis, &parts, &proj, samples);
        e_int = local.iter().sum();
        history.push(e_int);
    }
    Ok(EpmProjector {
        basis: basis.clone(),
        parts,
        proj,
        e_int,
        e_int_history: history,
        n_train: samples.ncols(),
    })
}

fn bisect(
    space: &FnSpace,
    basis: &DMatrix<f64>,
    a: f64,
    mid: f64,
    b: f64,
    dict: &Dictionary,
) -> Result<(InterpSystem, InterpSystem)> {
    let build = |s: f64, t: f64| -> Result<InterpSystem> {
        let kb = local_pod(space, basis, s, t, LOCAL_POD_CUT)?;
        select_interpolants(space, &kb, s, t, dict)
    };
    Ok((build(a, mid)?, build(mid, b)?))
}

/// `sqrt(tail) + sqrt(e_int)`.
pub fn apriori_bound(eigen_tail: f64, e_int: f64) -> f64 {
    eigen_tail.max(0.0).sqrt() + e_int.max(0.0).sqrt()
}

/// Right-hand side of the discrete-setting convergence bound for point interpolation:
/// `sqrt(k) (1 + sqrt(sum |I| Lambda_I^2) / sqrt(h)) sqrt(tail)`.
pub fn discrete_convergence_bound(k: usize, widths: &[f64], sup_lebesgue: &[f64], h: f64, tail: f64) -> f64 {
    let s: f64 = widths.iter().zip(sup_lebesgue).map(|(w, l)| w * l * l).sum();
    (k as f64).sqrt() * (1.0 + s.sqrt() / h.sqrt()) * tail.max(0.0).sqrt()
}

/// Right-hand side of the `L2` convergence bound: `sqrt(k) (1 + sqrt(sum Lambda_I^2)) sqrt(tail)`.
pub fn convergence_bound(k: usize, lebesgue: &[f64], tail: f64) -> f64 {
    let s: f64 = lebesgue.iter().map(|l| l * l).sum();
    (k as f64).sqrt() * (1.0 + s.sqrt()) * tail.max(0.0).sqrt()
}

/// Smallest `k' > k` with `sqrt(sum_{j >= k'} lambda_j) <= eps_tol` (1-based `k'`).
pub fn enriched_count(eigenvalues: &[f64], k: usize, eps_tol: f64) -> usize {
    let d = eigenvalues.len();
    let mut suffix = vec![0.0; d + 1];
    for i in (0..d).rev() {
        suffix[i] = suffix[i + 1] + eigenvalues[i];
    }
    // With 1-based k', the sum over j >= k' starts at 0-based index k' - 1.
    ((k + 1)..=d).find(|&kp| suffix[kp - 1].sqrt() <= eps_tol).unwrap_or(d)
}

/// `Delta^EPM`: the discrete distance between the two projections over the snapshots.
pub fn aposteriori_bound(
    space: &FnSpace,
    coarse: &EpmProjector,
    rich: &EpmProjector,
    samples: &DMatrix<f64>,
) -> Result<f64> {
    if rich.l() <= coarse.l() {
        return Err(Error::Config(format!(
            "enriched projector needs more functionals ({} <= {})",
            rich.l(),
            coarse.l()
        )));
    }
    let n = samples.ncols();
    let mut acc = 0.0;
    for j in 0..n {
        let u: Vec<f64> = samples.column(j).iter().copied().collect();
        let d = rich.project(&u) - coarse.project(&u);
        let ds: Vec<f64> = d.iter().copied().collect();
        acc += space.mass().quad(&ds, &ds);
    }
    Ok((acc / n.max(1) as f64).max(0.0).sqrt())
}

/// Empirical standard deviations of the squared POD error and of the squared integration error.
pub fn empirical_variances(space: &FnSpace, proj: &EpmProjector, samples: &DMatrix<f64>) -> (f64, f64) {
    let n = samples.ncols();
    let m = space.mass();
    let mut pod_err = Vec::with_capacity(n);
    let mut int_err = Vec::with_capacity(n);
    for j in 0..n {
        let u: Vec<f64> = samples.column(j).iter().copied().collect();
        let c = proj.basis.transpose() * m.apply(&DMatrix::from_column_slice(u.len(), 1, &u));
        let pk = &proj.basis * c;
        let pl = proj.project(&u);
        let d1: Vec<f64> = u.iter().zip(pk.iter()).map(|(a, b)| a - b).collect();
        let d2: Vec<f64> = pk.iter().zip(pl.iter()).map(|(a, b)| a - b).collect();
        pod_err.push(m.quad(&d1, &d1));
        int_err.push(m.quad(&d2, &d2));
    }
    (std_dev(&pod_err), std_dev(&int_err))
}

fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// `s(C)` with `C = erf(s / sqrt 2)`, by bisection.
pub fn confidence_quantile(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidInput(format!("confidence {confidence} not in (0, 1)")));
    }
    let f = |s: f64| statrs::function::erf::erf(s / std::f64::consts::SQRT_2) - confidence;
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Sample size for a Monte Carlo error `eps_mc` at the given confidence.
pub fn required_sample_size(variances: (f64, f64), eps_mc: f64, confidence: f64) -> Result<usize> {
    let s = confidence_quantile(confidence)?;
    let need = |v: f64| (v * v * s / (eps_mc * eps_mc)).ceil() as usize;
    Ok(need(variances.0).max(need(variances.1)))
}

/// Gram matrix `kappa^T M_I kappa` for the interval `[a, b]`.
pub fn restricted_gram(space: &FnSpace, basis: &DMatrix<f64>, a: f64, b: f64) -> DMatrix<f64> {
    let mi: SymTridiag = space.restricted_mass(a, b);
    basis.transpose() * mi.apply(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_interval_mesh;
    use crate::pod::{compute_pod, Truncation};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn space() -> FnSpace {
        FnSpace::p1(build_interval_mesh(0.0, 1.0, 128).unwrap())
    }

    fn smooth_samples(sp: &FnSpace, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut s = DMatrix::zeros(sp.dim(), n);
        for j in 0..n {
            let mu = rng.random_range(0.5..3.0);
            for i in 0..sp.dim() {
                let y = sp.mesh.nodes[i];
                s[(i, j)] = (mu * y).sin() + (1.0 / (1.0 + mu * y * y));
            }
        }
        s
    }

    #[test]
    fn span_manifold_needs_no_refinement() {
        let sp = space();
        let samples = smooth_samples(&sp, 30, 3);
        let pod = compute_pod(&samples, &sp.mass().to_dense(), Truncation::Count(3)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let coeffs = DMatrix::from_fn(3, 20, |_, _| rng.random_range(-1.0..1.0));
        let span = &pod.basis * coeffs;
        let settings = EpmSettings {
            eps_int: 1e-12,
            n_max: 4,
            dict: Dictionary::points(),
        };
        let proj = run_adaptive_epm(&sp, &pod.basis, &span, &settings).unwrap();
        assert_eq!(proj.parts.len(), 1);
        assert!(proj.e_int <= 1e-12);
        assert_eq!(proj.l(), 3);
    }

    #[test]
    fn projection_of_basis_function() {
        let sp = space();
        let samples = smooth_samples(&sp, 30, 4);
        let pod = compute_pod(&samples, &sp.mass().to_dense(), Truncation::Count(4)).unwrap();
        let proj = run_adaptive_epm(&sp, &pod.basis, &samples, &EpmSettings::default()).unwrap();
        let k1: Vec<f64> = pod.basis.column(0).iter().copied().collect();
        let c = proj.coefficients(&proj.observe(&k1));
        assert_relative_eq!(c[0], 1.0, epsilon = 1e-10);
        assert!(c.rows(1, 3).amax() < 1e-10);
        assert_eq!(proj.coefficients(&vec![0.0; proj.l()]).amax(), 0.0);
    }

    #[test]
    fn step_manifold_refines_and_reduces_error() {
        let sp = space();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 50;
        let mut s = DMatrix::zeros(sp.dim(), n);
        for j in 0..n {
            let jump = rng.random_range(0.2..0.8);
            for i in 0..sp.dim() {
                s[(i, j)] = if sp.mesh.nodes[i] < jump { 1.0 } else { 0.2 };
            }
        }
        let pod = compute_pod(&s, &sp.mass().to_dense(), Truncation::Count(3)).unwrap();
        let settings = EpmSettings {
            eps_int: 1e-14,
            n_max: 4,
            dict: Dictionary::averages(6),
        };
        let proj = run_adaptive_epm(&sp, &pod.basis, &s, &settings).unwrap();
        assert!(proj.parts.len() > 1);
        let recomputed: f64 = proj.local_errors(&sp, &s).iter().sum();
        assert_relative_eq!(recomputed, proj.e_int, max_relative = 1e-10);
    }

    #[test]
    fn n_max_zero_gives_plain_interpolation() {
        let sp = space();
        let samples = smooth_samples(&sp, 20, 5);
        let pod = compute_pod(&samples, &sp.mass().to_dense(), Truncation::Count(5)).unwrap();
        let proj = run_adaptive_epm(&sp, &pod.basis, &samples, &EpmSettings::default()).unwrap();
        assert_eq!(proj.parts.len(), 1);
        assert_eq!(proj.l(), proj.k());
        let t = proj.truncate(&sp, 3).unwrap();
        assert_eq!(t.k(), 3);
    }

    #[test]
    fn bounds_arithmetic() {
        assert_eq!(apriori_bound(0.0, 0.0), 0.0);
        assert_relative_eq!(apriori_bound(1e-8, 0.0), 1e-4, epsilon = 1e-18);
        assert_relative_eq!(confidence_quantile(0.6827).unwrap(), 1.0, epsilon = 1e-3);
        assert_eq!(required_sample_size((0.0, 0.0), 0.1, 0.5).unwrap(), 0);
        // With s(C) = 1 (C = erf(1/sqrt 2)).
        let c = statrs::function::erf::erf(1.0 / std::f64::consts::SQRT_2);
        assert_eq!(required_sample_size((2.0, 1.0), 0.1, c).unwrap(), 400);
        assert!(required_sample_size((1.0, 1.0), 0.1, 1.0).is_err());
    }

    #[test]
    fn enriched_count_is_minimal_and_monotone() {
        let ev = [1.0, 0.1, 0.01, 0.001, 1e-4, 1e-5];
        let kp = enriched_count(&ev, 1, 0.04);
        assert_eq!(kp, 4);
        assert!(enriched_count(&ev, 1, 0.004) >= kp);
    }

    #[test]
    fn aposteriori_requires_more_functionals() {
        let sp = space();
        let samples = smooth_samples(&sp, 20, 6);
        let pod = compute_pod(&samples, &sp.mass().to_dense(), Truncation::Count(4)).unwrap();
        let p = run_adaptive_epm(&sp, &pod.basis, &samples, &EpmSettings::default()).unwrap();
        assert!(matches!(aposteriori_bound(&sp, &p, &p, &samples), Err(Error::Config(_))));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn convergence_bounds_hold(seed in 0u64..1000, k in 1usize..6) {
            let sp = space();
            let samples = smooth_samples(&sp, 25, seed);
            let pod = compute_pod(&samples, &sp.mass().to_dense(), Truncation::Full).unwrap();
            let k = k.min(pod.total_count);
            let basis = pod.basis.columns(0, k).into_owned();
            let tail = pod.tail(k);
            for dict in [Dictionary::averages(6), Dictionary::points()] {
                let proj = run_adaptive_epm(&sp, &basis, &samples, &EpmSettings { eps_int: 0.0, n_max: 2, dict }).unwrap();
                let lam = proj.lebesgue_constants(&sp, LebesgueMode::Svd);
                proptest::prop_assert!(proj.e_int.sqrt() <= convergence_bound(k, &lam, tail) * (1.0 + 1e-8) + 1e-14);
                if dict.kind == crate::eim::DictKind::PointEval {
                    let widths: Vec<f64> = proj.parts.iter().map(|p| p.b - p.a).collect();
                    let sup: Vec<f64> = proj.parts.iter().map(|p| p.lebesgue_sup(&sp)).collect();
                    let bound = discrete_convergence_bound(k, &widths, &sup, sp.mesh.max_h(), tail);
                    proptest::prop_assert!(proj.e_int.sqrt() <= bound * (1.0 + 1e-8) + 1e-14);
                }
                // Projecting an already projected function reproduces its coefficients.
                let u: Vec<f64> = samples.column(0).iter().copied().collect();
                let c1 = proj.coefficients(&proj.observe(&u));
                let pu: Vec<f64> = (&proj.basis * &c1).iter().copied().collect();
                let c2 = proj.coefficients(&proj.observe(&pu));
                proptest::prop_assert!((c1 - c2).amax() < 1e-9);
            }
        }
    }
}
