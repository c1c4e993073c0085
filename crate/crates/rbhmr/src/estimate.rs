//! A posteriori quantities for reduced solutions: residual dual norms, inf-sup
//! approximation, constant estimates and the resulting error indicators.

use nalgebra::DMatrix;

use crate::eim::SpaceKind;
use crate::epm::EpmProjector;
use crate::error::{Error, Result};
use crate::linalg::{Csr, PermutedLu};
use crate::mesh::{eval_p1, FESpace2D, Mesh1D};
use crate::model::{diffusion, DiffusionParams};
use crate::reduced::{ComponentInterpolant, LineState, ReducedSolver};
use crate::reference::{assemble_functional, assemble_linearized, load_vector, GaussPoint, ReferenceSolver};
use crate::transverse::Component;

/// Norm in which the smallest singular value is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InfSupNorm {
    /// Plain coefficient vectors.
    #[default]
    Euclidean,
    /// H1 seminorm on both trial and test side.
    H1Semi,
}

impl std::str::FromStr for InfSupNorm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "euclidean" => Ok(InfSupNorm::Euclidean),
            "h1" | "h1_semi" => Ok(InfSupNorm::H1Semi),
            other => Err(Error::Config(format!("unknown inf-sup norm `{other}`"))),
        }
    }
}

/// Collateral function values at the 2D Gauss points of one column of elements.
struct CollateralTable {
    kind: SpaceKind,
    /// `values[(ey * 3 + gy, n)]` for P1, `values[(ey, n)]` for cellwise functions.
    values: DMatrix<f64>,
}

impl CollateralTable {
    fn new(projector: &EpmProjector, kind: SpaceKind, mesh_y: &Mesh1D) -> Self {
        let k = projector.k();
        let values = match kind {
            SpaceKind::P1 => {
                let ne = mesh_y.n_elem();
                let mut v = DMatrix::zeros(3 * ne, k);
                for n in 0..k {
                    let col: Vec<f64> = projector.basis.column(n).iter().copied().collect();
                    for e in 0..ne {
                        for (g, &t) in crate::mesh::GAUSS3_POINTS.iter().enumerate() {
                            let y = mesh_y.nodes[e] + t * mesh_y.h(e);
                            v[(3 * e + g, n)] = eval_p1(mesh_y, &col, y);
                        }
                    }
                }
                v
            }
            SpaceKind::PiecewiseConstant => projector.basis.clone(),
        };
        CollateralTable { kind, values }
    }

    fn eval(&self, gp: &GaussPoint, coeffs: &[f64]) -> f64 {
        let row = match self.kind {
            SpaceKind::P1 => 3 * gp.ey + gp.gy,
            SpaceKind::PiecewiseConstant => gp.ey,
        };
        coeffs.iter().enumerate().map(|(n, c)| c * self.values[(row, n)]).sum()
    }
}

/// Projected component evaluated along the dominant direction.
struct ProjectedField {
    table: CollateralTable,
    /// Coefficients per x-Gauss point, element-major.
    coeffs: Vec<Vec<f64>>,
}

impl ProjectedField {
    fn new(interp: &ComponentInterpolant, projector: &EpmProjector, mesh_y: &Mesh1D, states: &[LineState]) -> Result<Self> {
        let coeffs = states
            .iter()
            .map(|s| interp.coefficients(s).map(|c| c.iter().copied().collect()))
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(ProjectedField {
            table: CollateralTable::new(projector, interp.component.space_kind(), mesh_y),
            coeffs,
        })
    }

    fn eval(&self, gp: &GaussPoint) -> f64 {
        self.table.eval(gp, &self.coeffs[3 * gp.ex + gp.gx])
    }
}

/// Flux units (x and y) used for one residual evaluation.
#[derive(Debug, Clone, Copy)]
pub struct FluxUnits<'a> {
    pub flux_x: &'a EpmProjector,
    pub flux_y: &'a EpmProjector,
}

/// Derivative units used for the linearization.
#[derive(Debug, Clone, Copy)]
pub struct DerivUnits<'a> {
    pub diff: &'a EpmProjector,
    pub diff_grad_x: &'a EpmProjector,
    pub diff_grad_y: &'a EpmProjector,
}

/// Evaluates estimator ingredients for reduced solutions on the tensor space matching
/// the reduced solver's meshes.
pub struct Estimator {
    pub space: FESpace2D,
    pub params: DiffusionParams,
    load: Vec<f64>,
    reference: ReferenceSolver,
}

impl Estimator {
    pub fn new(reference: ReferenceSolver) -> Self {
        let space = reference.space.clone();
        let load = load_vector(&space, &reference.case);
        Estimator {
            params: reference.case.params,
            space,
            load,
            reference,
        }
    }

    fn check(&self, solver: &ReducedSolver) -> Result<()> {
        if self.space.nx() != solver.n_x() || self.space.ny() != solver.basis.nrows() {
            return Err(Error::InvalidInput("estimator space does not match the reduced solver".into()));
        }
        Ok(())
    }

    fn mesh_y(&self) -> &Mesh1D {
        &self.space.mesh.mesh_y
    }

    /// `<P[A(p)], v>` for every basis function `v` of the tensor space.
    pub fn projected_operator(&self, solver: &ReducedSolver, states: &[LineState], units: FluxUnits) -> Result<Vec<f64>> {
        self.check(solver)?;
        let my = self.mesh_y();
        let ix = ComponentInterpolant::new(Component::FluxX, units.flux_x, my, &solver.basis, self.params)?;
        let iy = ComponentInterpolant::new(Component::FluxY, units.flux_y, my, &solver.basis, self.params)?;
        let fx = ProjectedField::new(&ix, units.flux_x, my, states)?;
        let fy = ProjectedField::new(&iy, units.flux_y, my, states)?;
        assemble_functional(&self.space, |gp| Ok((fx.eval(gp), fy.eval(gp), 0.0)))
    }

    /// Dual norm of `<P_k[A(p)] - f, v>`.
    pub fn model_residual_norm(&self, solver: &ReducedSolver, states: &[LineState], units: FluxUnits) -> Result<f64> {
        let mut r = self.projected_operator(solver, states, units)?;
        for (a, f) in r.iter_mut().zip(&self.load) {
            *a -= f;
        }
        Ok(self.space.riesz_h1(&r).1)
    }

    /// Dual norm of the difference between two projections of the operator.
    pub fn projection_gap_norm(&self, solver: &ReducedSolver, states: &[LineState], coarse: FluxUnits, rich: FluxUnits) -> Result<f64> {
        let a = self.projected_operator(solver, states, coarse)?;
        let b = self.projected_operator(solver, states, rich)?;
        let d: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
        Ok(self.space.riesz_h1(&d).1)
    }

    /// Dual norm of `A(p) - P_k[A(p)]` with the operator integrated exactly on the tensor space.
    pub fn exact_projection_gap_norm(&self, solver: &ReducedSolver, states: &[LineState], field: &[f64], units: FluxUnits) -> Result<f64> {
        let exact = self.reference.operator(field)?;
        let proj = self.projected_operator(solver, states, units)?;
        let d: Vec<f64> = exact.iter().zip(&proj).map(|(x, y)| x - y).collect();
        Ok(self.space.riesz_h1(&d).1)
    }

    /// Linearization with projected `d`, `d' p_x`, `d' p_y`.
    pub fn projected_jacobian(&self, solver: &ReducedSolver, states: &[LineState], units: DerivUnits) -> Result<Csr> {
        self.check(solver)?;
        let my = self.mesh_y();
        let params = self.params;
        let mk = |c, p: &EpmProjector| -> Result<ProjectedField> {
            let i = ComponentInterpolant::new(c, p, my, &solver.basis, params)?;
            ProjectedField::new(&i, p, my, states)
        };
        let d = mk(Component::Diff, units.diff)?;
        let gx = mk(Component::DiffGradX, units.diff_grad_x)?;
        let gy = mk(Component::DiffGradY, units.diff_grad_y)?;
        assemble_linearized(&self.space, |gp| Ok((d.eval(gp), gx.eval(gp), gy.eval(gp))))
    }

    /// Linearization of the exact operator at a tensor-space field.
    pub fn exact_jacobian(&self, field: &[f64]) -> Result<Csr> {
        self.reference.jacobian(field)
    }

    pub fn inf_sup(&self, jac: &Csr, norm: InfSupNorm) -> Result<f64> {
        smallest_singular_value(&self.space, jac, norm)
    }
}

/// Smallest singular value of `jac` by inverse iteration on the normal equations.
pub fn smallest_singular_value(space: &FESpace2D, jac: &Csr, norm: InfSupNorm) -> Result<f64> {
    let lu = PermutedLu::new(jac, space.band_ordering())?;
    let n = jac.n;
    // Deterministic start with all modes present.
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.75).sin()).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let gram = match norm {
        InfSupNorm::Euclidean => None,
        InfSupNorm::H1Semi => Some(space.h1_semi_gram()),
    };
    let apply_gram = |v: &[f64]| match &gram {
        Some(g) => g.mul_vec(v),
        None => v.to_vec(),
    };
    let mut lambda = 0.0;
    for it in 0..500 {
        // y = J^{-1} S J^{-T} S x, the inverse of the pencil J^T S^{-1} J w = s^2 S w.
        let sx = apply_gram(&x);
        let z = lu.solve_transpose(&sx);
        let sz = apply_gram(&z);
        let y = lu.solve(&sz);
        let sy = apply_gram(&y);
        let num = dot(&x, &sy);
        let den = dot(&x, &sx);
        let next = num / den;
        let ny = dot(&y, &sy).sqrt();
        if !(ny > 0.0) || !next.is_finite() {
            return Err(Error::Singular("inverse iteration broke down".into()));
        }
        x = y.iter().map(|v| v / ny).collect();
        if it > 2 && (next - lambda).abs() <= 1e-12 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok(1.0 / lambda.sqrt())
}

/// `c_h = (H^2 + h^2)^{(2 - p) / (2 p)}`.
pub fn c_h(big_h: f64, small_h: f64, p_exponent: f64) -> f64 {
    (big_h * big_h + small_h * small_h).powf((2.0 - p_exponent) / (2.0 * p_exponent))
}

/// Maxima of `|d|`, `|d'|`, `|d''|` over `[lo, hi]`.
pub fn diffusion_bounds(lo: f64, hi: f64, params: &DiffusionParams) -> Result<[f64; 3]> {
    let samples = 400;
    let mut out = [0.0f64; 3];
    for i in 0..=samples {
        let p = if hi > lo { lo + (hi - lo) * i as f64 / samples as f64 } else { lo };
        let (d0, d1, d2) = diffusion(p, params)?;
        out[0] = out[0].max(d0.abs());
        out[1] = out[1].max(d1.abs());
        out[2] = out[2].max(d2.abs());
        if hi <= lo {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub lipschitz: f64,
    pub gamma: f64,
    pub c_h: f64,
}

/// Lipschitz and continuity estimates with unit auxiliary constants.
pub fn estimate_constants(field: &[f64], space: &FESpace2D, params: &DiffusionParams, p_exponent: f64) -> Result<Constants> {
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for &v in field {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let [c1, c2, c3] = diffusion_bounds(lo, hi, params)?;
    let ch = c_h(space.mesh.mesh_x.max_h(), space.mesh.mesh_y.max_h(), p_exponent);
    let semi = space.h1_semi_norm(field);
    Ok(Constants {
        lipschitz: 2.0 * c2 + c3 * ch * semi,
        gamma: c1 + c2 * ch * semi,
        c_h: ch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrrReport {
    pub beta_app: f64,
    pub gamma_est: f64,
    pub lipschitz_est: f64,
    pub c_h: f64,
    pub dual_norm_residual: f64,
    pub dual_norm_epm: f64,
    pub tau: f64,
    /// Absent when `tau >= 1`.
    pub delta: Option<f64>,
    pub c_err: f64,
    pub brr_satisfied: bool,
    /// `tau <= c_err / 2`, the precondition of the lower bound.
    pub effectivity_ok: bool,
}

impl BrrReport {
    /// The bound if available, `tau` otherwise.
    pub fn indicator(&self) -> f64 {
        self.delta.unwrap_or(self.tau)
    }
}

pub fn brr_assemble(dual_residual: f64, dual_epm: f64, beta: f64, consts: Constants) -> Result<BrrReport> {
    for (name, v) in [("residual", dual_residual), ("projection gap", dual_epm), ("inf-sup", beta)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidInput(format!("{name} value {v} is not a finite nonnegative number")));
        }
    }
    if beta == 0.0 {
        return Err(Error::InvalidInput("inf-sup estimate is zero".into()));
    }
    let (l, ch) = (consts.lipschitz, consts.c_h);
    let tau = 2.0 * l * ch / (beta * beta) * (dual_epm + dual_residual);
    let delta = (tau < 1.0).then(|| if l * ch > 0.0 { beta / (l * ch) * (1.0 - (1.0 - tau).sqrt()) } else { 0.0 });
    let c_err = if dual_residual > 0.0 {
        dual_epm / dual_residual
    } else if dual_epm > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(BrrReport {
        beta_app: beta,
        gamma_est: consts.gamma,
        lipschitz_est: l,
        c_h: ch,
        dual_norm_residual: dual_residual,
        dual_norm_epm: dual_epm,
        tau,
        delta,
        c_err,
        brr_satisfied: tau < 1.0,
        effectivity_ok: tau <= 0.5 * c_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, TensorMesh2D};

    fn small_space(nx: usize, ny: usize) -> FESpace2D {
        FESpace2D::new(TensorMesh2D {
            mesh_x: build_interval_mesh(0.0, 2.0, nx).unwrap(),
            mesh_y: build_interval_mesh(0.0, 1.0, ny).unwrap(),
        })
        .unwrap()
    }

    #[test]
    fn c_h_values() {
        assert!((c_h(0.01, 0.01, 4.0) - 2e-4f64.powf(-0.25)).abs() < 1e-12);
        assert!((c_h(0.01, 0.01, 4.0) - 8.409).abs() < 1e-3);
        assert!((c_h(0.3, 0.1, 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn report_edge_cases() {
        let consts = Constants { lipschitz: 2.0, gamma: 1.0, c_h: 1.5 };
        let r = brr_assemble(0.0, 0.0, 0.1, consts).unwrap();
        assert_eq!(r.tau, 0.0);
        assert_eq!(r.delta, Some(0.0));
        // tau = 0.75 exactly
        let beta = 0.2;
        let s = 0.75 * beta * beta / (2.0 * 2.0 * 1.5);
        let r = brr_assemble(s, 0.0, beta, consts).unwrap();
        assert!((r.tau - 0.75).abs() < 1e-14);
        assert!((r.delta.unwrap() - beta / 3.0 * 0.5).abs() < 1e-14);
        let r = brr_assemble(1.0, 0.5, beta, consts).unwrap();
        assert!(r.tau > 1.0 && r.delta.is_none() && !r.brr_satisfied);
        assert!((r.c_err - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_field_bounds_are_pointwise() {
        let params = DiffusionParams::new(0.075, 12.0).unwrap();
        let (d, d1, d2) = diffusion(0.0, &params).unwrap();
        let b = diffusion_bounds(0.0, 0.0, &params).unwrap();
        assert_eq!(b, [d.abs(), d1.abs(), d2.abs()]);
    }

    #[test]
    fn singular_values_match_dense_oracle() {
        let space = small_space(6, 5);
        let n = space.dim();
        // nonsymmetric convection-diffusion style operator
        let jac = assemble_linearized(&space, |gp| Ok((0.3 + gp.x * gp.y, 0.7 * gp.y, -0.4 * gp.x))).unwrap();
        let j = jac.to_dense();
        let sv = j.clone().svd(false, false).singular_values;
        let euclid = sv.iter().copied().fold(f64::INFINITY, f64::min);
        let got = smallest_singular_value(&space, &jac, InfSupNorm::Euclidean).unwrap();
        assert!((got - euclid).abs() < 1e-8 * euclid, "{got} vs {euclid}");
        // generalized: S^{-1/2} J S^{-1/2}
        let s = space.h1_semi_gram().to_dense();
        let eig = s.clone().symmetric_eigen();
        let inv_sqrt = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt())) * eig.eigenvectors.transpose();
        let g = &inv_sqrt * j * &inv_sqrt;
        let svg = g.svd(false, false).singular_values;
        let h1 = svg.iter().copied().fold(f64::INFINITY, f64::min);
        let got = smallest_singular_value(&space, &jac, InfSupNorm::H1Semi).unwrap();
        assert!((got - h1).abs() < 1e-8 * h1, "{got} vs {h1}");
        assert_eq!(n, 20);
    }
}
