//! Offline phase and per-(m, k) evaluation of the online stage.

use std::time::Instant;

use nalgebra::DMatrix;
use rbhmr::archive::BasisArchive;
use rbhmr::epm::EpmProjector;
use rbhmr::estimate::{brr_assemble, estimate_constants, BrrReport, DerivUnits, Estimator, FluxUnits};
use rbhmr::mesh::FESpace2D;
use rbhmr::reduced::{reconstruct, DerivativeUnits, JacobianMode, ReducedSolution, ReducedSolver};
use rbhmr::reference::{error_norms, exact_error_norms, ReferenceSolution, ReferenceSolver};
use rbhmr::training::{adaptive_train_extension, build_spaces, uniform_training, Manifolds, ReducedSpaces};
use rbhmr::transverse::{Component, TransverseContext};

use crate::error::Result;
use crate::setup::{Setup, TrainingMode};

#[derive(Debug, Clone)]
pub struct Offline {
    pub archive: BasisArchive,
    pub manifolds: Manifolds,
    pub log: Vec<String>,
    pub training_seconds: f64,
    pub spaces_seconds: f64,
}

impl Offline {
    pub fn seconds(&self) -> f64 {
        self.training_seconds + self.spaces_seconds
    }
}

/// Training set and operator manifolds, with the quadrature count and a log.
pub fn train(setup: &Setup, ctx: &TransverseContext) -> Result<(Manifolds, usize, usize, Vec<String>)> {
    match setup.training_mode {
        TrainingMode::Adaptive => {
            let out = adaptive_train_extension(ctx, &setup.pbox, &setup.training)?;
            let man = out.manifolds()?;
            let mut log = out.log.clone();
            log.push(format!("training: {} samples, {} rejected draws, Q={}", out.n_train(), out.rejected, out.q));
            Ok((man, out.n_train(), out.q, log))
        }
        TrainingMode::Uniform(count) => {
            let q = setup.training.q0;
            let samples = uniform_training(ctx, &setup.pbox, q, count, setup.seed)?;
            let man = Manifolds::from_samples(samples.iter())?;
            Ok((man, samples.len(), q, vec![format!("uniform training: {} samples, Q={q}", samples.len())]))
        }
    }
}

pub fn offline(setup: &Setup, ctx: &TransverseContext) -> Result<Offline> {
    let t0 = Instant::now();
    let (manifolds, n_train, q, mut log) = train(setup, ctx)?;
    let training_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let spaces = build_spaces(ctx, &manifolds, &setup.spaces)?;
    let spaces_seconds = t1.elapsed().as_secs_f64();
    let ks: Vec<String> = spaces.units.iter().map(|u| format!("{}={}/{}", u.component.name(), u.k, u.k_enriched)).collect();
    log.push(format!("spaces: m={} of {} modes, collateral {}", spaces.m, spaces.solution.m(), ks.join(" ")));
    Ok(Offline {
        archive: BasisArchive {
            case: setup.case.clone(),
            mesh_y: ctx.mesh().clone(),
            seed: setup.seed,
            q,
            n_train,
            settings: setup.spaces.clone(),
            spaces,
        },
        manifolds,
        log,
        training_seconds,
        spaces_seconds,
    })
}

pub fn reference_solver(setup: &Setup, space: FESpace2D) -> ReferenceSolver {
    let mut r = ReferenceSolver::new(setup.case.clone(), space);
    r.newton = setup.newton;
    r.linear = setup.linear;
    r
}

pub fn solve_reference(setup: &Setup) -> Result<ReferenceSolution> {
    Ok(reference_solver(setup, setup.space()?).solve()?)
}

/// Flux projectors for a collateral count (`None` keeps the tolerance-based count) and
/// their enriched partners.
pub struct FluxPair {
    pub coarse: [EpmProjector; 2],
    pub rich: [EpmProjector; 2],
}

pub fn flux_pair(ctx: &TransverseContext, spaces: &ReducedSpaces, k: Option<usize>, tol_kprime: f64) -> Result<FluxPair> {
    let pick = |c: Component| -> Result<(EpmProjector, EpmProjector)> {
        let u = spaces.unit(c);
        Ok(match k {
            None => (u.projector.clone(), u.enriched.clone()),
            Some(k) => {
                let k = k.clamp(1, u.modes.ncols());
                let kr = u.enriched_for(k, tol_kprime).max(k);
                (u.with_count(ctx, k)?, u.with_count(ctx, kr)?)
            }
        })
    };
    let (cx, rx) = pick(Component::FluxX)?;
    let (cy, ry) = pick(Component::FluxY)?;
    Ok(FluxPair {
        coarse: [cx, cy],
        rich: [rx, ry],
    })
}

/// One online solve with its errors and estimator output.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub m: usize,
    pub k: usize,
    pub rel_h1: f64,
    pub rel_l2: f64,
    pub total_h1: Option<f64>,
    pub report: Option<BrrReport>,
    pub beta_exact: Option<f64>,
    pub iterations: usize,
    pub solution: ReducedSolution,
    pub field: Vec<f64>,
}

/// Online evaluations against a fixed reference solution on the tensor mesh.
pub struct Evaluator<'a> {
    pub setup: &'a Setup,
    pub ctx: &'a TransverseContext,
    pub spaces: &'a ReducedSpaces,
    pub estimator: Estimator,
    pub reference: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(setup: &'a Setup, ctx: &'a TransverseContext, spaces: &'a ReducedSpaces) -> Result<Self> {
        let solver = reference_solver(setup, setup.space()?);
        let reference = solver.solve()?.values;
        Ok(Evaluator {
            setup,
            ctx,
            spaces,
            estimator: Estimator::new(solver),
            reference,
        })
    }

    pub fn space(&self) -> &FESpace2D {
        &self.estimator.space
    }

    pub fn reference_h1(&self) -> f64 {
        self.space().h1_semi_norm(&self.reference)
    }

    pub fn derivative_units(&self) -> DerivativeUnits {
        self.spaces.derivative_units()
    }

    pub fn solver(&self, m: usize, pair: &FluxPair) -> Result<ReducedSolver> {
        let collateral = self.setup.jacobian == JacobianMode::Collateral;
        let deriv = collateral.then(|| self.derivative_units());
        let mut s = ReducedSolver::new(
            self.ctx,
            self.setup.mesh_x()?,
            self.spaces.modes(m),
            &pair.coarse[0],
            &pair.coarse[1],
            deriv.as_ref(),
        )?;
        s.mode = self.setup.jacobian;
        s.newton = self.setup.newton;
        s.linear = self.setup.linear;
        Ok(s)
    }

    /// Solve with `m` modes, warm-started from `warm` when given, from zero on failure.
    /// A collateral Newton matrix that stalls is replaced by the consistent one; both
    /// iterate on the same discrete equations.
    pub fn solve(&self, solver: &ReducedSolver, warm: Option<&ReducedSolution>) -> Result<ReducedSolution> {
        let err = match attempt(solver, warm) {
            Ok(s) => return Ok(s),
            Err(e) => e,
        };
        if solver.mode != JacobianMode::Collateral {
            return Err(err.into());
        }
        log::debug!("collateral Newton failed ({err}), retrying with the consistent jacobian");
        let mut consistent = solver.clone();
        consistent.mode = JacobianMode::Consistent;
        Ok(attempt(&consistent, warm)?)
    }

    pub fn estimate(&self, solver: &ReducedSolver, sol: &ReducedSolution, field: &[f64], pair: &FluxPair) -> Result<BrrReport> {
        let states = solver.gauss_states(&sol.flat());
        let est = &self.estimator;
        let coarse = FluxUnits {
            flux_x: &pair.coarse[0],
            flux_y: &pair.coarse[1],
        };
        let rich = FluxUnits {
            flux_x: &pair.rich[0],
            flux_y: &pair.rich[1],
        };
        let e_mod = est.model_residual_norm(solver, &states, coarse)?;
        let e_epm = est.projection_gap_norm(solver, &states, coarse, rich)?;
        let u = |c: Component| &self.spaces.unit(c).enriched;
        let jac = est.projected_jacobian(
            solver,
            &states,
            DerivUnits {
                diff: u(Component::Diff),
                diff_grad_x: u(Component::DiffGradX),
                diff_grad_y: u(Component::DiffGradY),
            },
        )?;
        let beta = est.inf_sup(&jac, self.setup.norm)?;
        let consts = estimate_constants(field, &est.space, &est.params, self.setup.p_exponent)?;
        Ok(brr_assemble(e_mod, e_epm, beta, consts)?)
    }

    pub fn exact_inf_sup(&self, field: &[f64]) -> Result<f64> {
        let jac = self.estimator.exact_jacobian(field)?;
        Ok(self.estimator.inf_sup(&jac, self.setup.norm)?)
    }

    /// Full evaluation at `(m, k)`; `with_estimate` adds the estimator, `with_exact`
    /// the exact inf-sup constant.
    pub fn evaluate(&self, m: usize, k: Option<usize>, warm: Option<&ReducedSolution>, with_estimate: bool, with_exact: bool) -> Result<Evaluation> {
        let pair = flux_pair(self.ctx, self.spaces, k, self.setup.spaces.projection.tol_kprime)?;
        let solver = self.solver(m, &pair)?;
        let sol = self.solve(&solver, warm)?;
        let field = reconstruct(&sol, &solver.basis, self.space())?;
        let (rel_h1, rel_l2) = error_norms(self.space(), &self.reference, &field)?;
        let total_h1 = exact_error_norms(self.space(), &self.setup.case, &field)?.map(|e| e.0);
        let report = if with_estimate {
            Some(self.estimate(&solver, &sol, &field, &pair)?)
        } else {
            None
        };
        let beta_exact = if with_exact { Some(self.exact_inf_sup(&field)?) } else { None };
        Ok(Evaluation {
            m,
            k: pair.coarse[0].k(),
            rel_h1,
            rel_l2,
            total_h1,
            report,
            beta_exact,
            iterations: sol.log.iterations,
            solution: sol,
            field,
        })
    }
}

fn attempt(solver: &ReducedSolver, warm: Option<&ReducedSolution>) -> rbhmr::Result<ReducedSolution> {
    if let Some(w) = warm {
        match solver.solve_from(solver.pad_guess(w)) {
            Ok(s) => return Ok(s),
            Err(e) => log::debug!("warm start failed ({e}), restarting from zero"),
        }
    }
    solver.solve()
}

/// Relative tail `sqrt(sum_{l >= m} c_l / sum_l c_l)` of squared coefficient norms.
pub fn relative_tail(sq_norms: &[f64], m: usize) -> f64 {
    let total: f64 = sq_norms.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    (sq_norms.iter().skip(m).sum::<f64>() / total).max(0.0).sqrt()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Local maxima of a nodal grid field (`field[(iy, ix)]`) above `floor`, merged into
/// clusters whose members lie within `radius` cells of the cluster's top node. Returns
/// the top node `(ix, iy, value)` of each cluster, highest first.
pub fn peak_clusters(field: &DMatrix<f64>, floor: f64, radius: usize) -> Vec<(usize, usize, f64)> {
    let (ny, nx) = field.shape();
    let mut maxima = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let v = field[(iy, ix)];
            if v < floor {
                continue;
            }
            let mut top = true;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                    if (dx, dy) == (0, 0) || jx < 0 || jy < 0 || jx >= nx as i64 || jy >= ny as i64 {
                        continue;
                    }
                    if field[(jy as usize, jx as usize)] > v {
                        top = false;
                    }
                }
            }
            if top {
                maxima.push((ix, iy, v));
            }
        }
    }
    maxima.sort_by(|a, b| b.2.total_cmp(&a.2));
    let mut clusters: Vec<(usize, usize, f64)> = Vec::new();
    for p in maxima {
        let near = clusters.iter().any(|c| c.0.abs_diff(p.0) <= radius && c.1.abs_diff(p.1) <= radius);
        if !near {
            clusters.push(p);
        }
    }
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [50.0, 100.0, 200.0, 400.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.7)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 1.7).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn median_and_tail() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0]), 2.5);
        assert_eq!(relative_tail(&[9.0, 16.0], 0), 1.0);
        assert!((relative_tail(&[9.0, 16.0], 1) - 0.8).abs() < 1e-15);
        assert_eq!(relative_tail(&[0.0], 0), 0.0);
    }

    #[test]
    fn clusters_merge_nearby_maxima() {
        let mut f = DMatrix::zeros(20, 30);
        f[(5, 5)] = 1.0;
        f[(5, 7)] = 0.9;
        f[(14, 20)] = 0.8;
        f[(2, 28)] = 0.01;
        let c = peak_clusters(&f, 0.05, 3);
        assert_eq!(c, vec![(5, 5, 1.0), (20, 14, 0.8)]);
    }
}
