//! Full 2D bilinear finite element solver, generic Gauss-point assembly on the tensor
//! space, and error norms.

use crate::error::{Error, Result};
use crate::linalg::{solve_sparse, Csr, LinearStrategy};
use crate::mesh::{FESpace2D, GAUSS3_POINTS, GAUSS3_WEIGHTS};
use crate::model::{diffusion, TestCase};
use crate::newton::{self, NewtonLog, NewtonSettings};

/// A Gauss point of the 3x3 rule on element `(ex, ey)`; `gx`, `gy` index the 1D points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPoint {
    pub ex: usize,
    pub ey: usize,
    pub gx: usize,
    pub gy: usize,
    pub x: f64,
    pub y: f64,
}

impl GaussPoint {
    /// Flat index into per-Gauss-point tables, element-major.
    pub fn flat(&self, n_elem_x: usize) -> usize {
        (self.ey * n_elem_x + self.ex) * 9 + self.gy * 3 + self.gx
    }
}

/// Values and gradients of the four local bilinear shape functions at one Gauss point.
struct LocalShape {
    val: [f64; 4],
    dx: [f64; 4],
    dy: [f64; 4],
}

/// Local node `a` sits at offsets `(a & 1, a >> 1)`.
fn local_shape(tx: f64, ty: f64, hx: f64, hy: f64) -> LocalShape {
    let fx = [1.0 - tx, tx];
    let fy = [1.0 - ty, ty];
    let gx = [-1.0 / hx, 1.0 / hx];
    let gy = [-1.0 / hy, 1.0 / hy];
    let mut s = LocalShape {
        val: [0.0; 4],
        dx: [0.0; 4],
        dy: [0.0; 4],
    };
    for a in 0..4 {
        let (i, j) = (a & 1, a >> 1);
        s.val[a] = fx[i] * fy[j];
        s.dx[a] = gx[i] * fy[j];
        s.dy[a] = fx[i] * gy[j];
    }
    s
}

/// Interior dof of local node `a` of element `(ex, ey)`, if any.
fn local_dof(space: &FESpace2D, ex: usize, ey: usize, a: usize) -> Option<usize> {
    let ix = ex + (a & 1);
    let iy = ey + (a >> 1);
    let (nnx, nny) = (space.mesh.mesh_x.n_nodes(), space.mesh.mesh_y.n_nodes());
    (ix >= 1 && ix <= nnx - 2 && iy >= 1 && iy <= nny - 2).then(|| space.index(ix - 1, iy - 1))
}

/// Visit every Gauss point with its quadrature weight and shape data.
fn for_each_gauss<F: FnMut(&GaussPoint, f64, &LocalShape)>(space: &FESpace2D, mut f: F) {
    let (mx, my) = (&space.mesh.mesh_x, &space.mesh.mesh_y);
    for ey in 0..my.n_elem() {
        let hy = my.h(ey);
        for ex in 0..mx.n_elem() {
            let hx = mx.h(ex);
            for gy in 0..3 {
                for gx in 0..3 {
                    let (tx, ty) = (GAUSS3_POINTS[gx], GAUSS3_POINTS[gy]);
                    let gp = GaussPoint {
                        ex,
                        ey,
                        gx,
                        gy,
                        x: mx.nodes[ex] + tx * hx,
                        y: my.nodes[ey] + ty * hy,
                    };
                    let w = GAUSS3_WEIGHTS[gx] * GAUSS3_WEIGHTS[gy] * hx * hy;
                    f(&gp, w, &local_shape(tx, ty, hx, hy));
                }
            }
        }
    }
}

/// Assemble `v -> ∫ fx v_x + fy v_y + f0 v` with integrand values supplied per Gauss point.
pub fn assemble_functional<F>(space: &FESpace2D, mut integrand: F) -> Result<Vec<f64>>
where
    F: FnMut(&GaussPoint) -> Result<(f64, f64, f64)>,
{
    let mut out = vec![0.0; space.dim()];
    let mut err = None;
    for_each_gauss(space, |gp, w, s| {
        if err.is_some() {
            return;
        }
        let (fx, fy, f0) = match integrand(gp) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                return;
            }
        };
        for a in 0..4 {
            if let Some(i) = local_dof(space, gp.ex, gp.ey, a) {
                out[i] += w * (fx * s.dx[a] + fy * s.dy[a] + f0 * s.val[a]);
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Assemble the linearized form `(w, v) -> ∫ diff ∇w·∇v + w (gx v_x + gy v_y)`; rows index `v`.
pub fn assemble_linearized<F>(space: &FESpace2D, mut coeffs: F) -> Result<Csr>
where
    F: FnMut(&GaussPoint) -> Result<(f64, f64, f64)>,
{
    let (nx, ny) = (space.nx(), space.ny());
    // nine-point stencil storage, slot (dy+1)*3 + (dx+1)
    let mut stencil = vec![[0.0f64; 9]; nx * ny];
    let mut err = None;
    for_each_gauss(space, |gp, w, s| {
        if err.is_some() {
            return;
        }
        let (diff, gx, gy) = match coeffs(gp) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                return;
            }
        };
        for a in 0..4 {
            let Some(i) = local_dof(space, gp.ex, gp.ey, a) else { continue };
            for b in 0..4 {
                if local_dof(space, gp.ex, gp.ey, b).is_none() {
                    continue;
                }
                let v = w * (diff * (s.dx[b] * s.dx[a] + s.dy[b] * s.dy[a]) + s.val[b] * (gx * s.dx[a] + gy * s.dy[a]));
                let dxo = (b & 1) as isize - (a & 1) as isize;
                let dyo = (b >> 1) as isize - (a >> 1) as isize;
                stencil[i][((dyo + 1) * 3 + dxo + 1) as usize] += v;
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let mut indptr = Vec::with_capacity(nx * ny + 1);
    let mut indices = Vec::with_capacity(9 * nx * ny);
    let mut values = Vec::with_capacity(9 * nx * ny);
    indptr.push(0);
    for iy in 0..ny {
        for ix in 0..nx {
            let row = &stencil[space.index(ix, iy)];
            for dyo in -1isize..=1 {
                for dxo in -1isize..=1 {
                    let (jx, jy) = (ix as isize + dxo, iy as isize + dyo);
                    if jx < 0 || jy < 0 || jx >= nx as isize || jy >= ny as isize {
                        continue;
                    }
                    indices.push(space.index(jx as usize, jy as usize));
                    values.push(row[((dyo + 1) * 3 + dxo + 1) as usize]);
                }
            }
            indptr.push(indices.len());
        }
    }
    Ok(Csr {
        n: nx * ny,
        indptr,
        indices,
        values,
    })
}

/// Value and gradient of a field at every Gauss point, indexed by [`GaussPoint::flat`].
pub fn gauss_values(space: &FESpace2D, v: &[f64]) -> Vec<[f64; 3]> {
    let nodal = space.to_nodal(v);
    let mut out = vec![[0.0; 3]; space.mesh.n_elem() * 9];
    let nex = space.mesh.mesh_x.n_elem();
    for_each_gauss(space, |gp, _, s| {
        let mut acc = [0.0; 3];
        for a in 0..4 {
            let val = nodal[(gp.ey + (a >> 1), gp.ex + (a & 1))];
            acc[0] += val * s.val[a];
            acc[1] += val * s.dx[a];
            acc[2] += val * s.dy[a];
        }
        out[gp.flat(nex)] = acc;
    });
    out
}

/// `∫ s v` for the case's source.
pub fn load_vector(space: &FESpace2D, case: &TestCase) -> Vec<f64> {
    assemble_functional(space, |gp| Ok((0.0, 0.0, case.source(gp.x, gp.y)))).expect("source evaluation cannot fail")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub values: Vec<f64>,
    pub log: NewtonLog,
}

/// Newton solver for the full bilinear discretization.
#[derive(Debug, Clone)]
pub struct ReferenceSolver {
    pub case: TestCase,
    pub space: FESpace2D,
    pub newton: NewtonSettings,
    pub linear: LinearStrategy,
    load: Vec<f64>,
}

impl ReferenceSolver {
    pub fn new(case: TestCase, space: FESpace2D) -> Self {
        let load = load_vector(&space, &case);
        ReferenceSolver {
            case,
            space,
            newton: NewtonSettings::default(),
            linear: LinearStrategy::default(),
            load,
        }
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// Operator part `∫ d(p) ∇p·∇v` without the source.
    pub fn operator(&self, p: &[f64]) -> Result<Vec<f64>> {
        let gv = gauss_values(&self.space, p);
        let nex = self.space.mesh.mesh_x.n_elem();
        let params = self.case.params;
        assemble_functional(&self.space, |gp| {
            let [val, px, py] = gv[gp.flat(nex)];
            let (d, _, _) = diffusion(val, &params)?;
            Ok((d * px, d * py, 0.0))
        })
    }

    pub fn residual(&self, p: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.operator(p)?;
        for (a, b) in r.iter_mut().zip(&self.load) {
            *a -= b;
        }
        Ok(r)
    }

    /// Exact Jacobian at `p`.
    pub fn jacobian(&self, p: &[f64]) -> Result<Csr> {
        let gv = gauss_values(&self.space, p);
        let nex = self.space.mesh.mesh_x.n_elem();
        let params = self.case.params;
        assemble_linearized(&self.space, |gp| {
            let [val, px, py] = gv[gp.flat(nex)];
            let (d, d1, _) = diffusion(val, &params)?;
            Ok((d, d1 * px, d1 * py))
        })
    }

    pub fn dual_norm(&self, r: &[f64]) -> f64 {
        self.space.riesz_h1(r).1
    }

    pub fn solve(&self) -> Result<ReferenceSolution> {
        self.solve_from(vec![0.0; self.space.dim()])
    }

    pub fn solve_from(&self, init: Vec<f64>) -> Result<ReferenceSolution> {
        let inv = self.space.band_ordering();
        let (values, log) = newton::solve(
            init,
            &self.newton,
            |p| self.residual(p).ok(),
            |r| self.dual_norm(r),
            |p, r| {
                let jac = self.jacobian(p)?;
                let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
                solve_sparse(&jac, &rhs, self.linear, inv.as_deref())
            },
        )?;
        Ok(ReferenceSolution { values, log })
    }
}

/// Relative H1-seminorm and L2 errors of `approx` against `reference`.
pub fn error_norms(space: &FESpace2D, reference: &[f64], approx: &[f64]) -> Result<(f64, f64)> {
    if reference.len() != space.dim() || approx.len() != space.dim() {
        return Err(Error::InvalidInput("field sizes differ from the space dimension".into()));
    }
    let (rh1, rl2) = (space.h1_semi_norm(reference), space.l2_norm(reference));
    if rh1 == 0.0 || rl2 == 0.0 {
        return Err(Error::InvalidInput("reference field has zero norm".into()));
    }
    let diff: Vec<f64> = reference.iter().zip(approx).map(|(a, b)| a - b).collect();
    Ok((space.h1_semi_norm(&diff) / rh1, space.l2_norm(&diff) / rl2))
}

/// Relative H1-seminorm and L2 errors of a discrete field against the closed-form
/// solution of the case, by 3x3 Gauss quadrature. `None` when no closed form exists.
pub fn exact_error_norms(space: &FESpace2D, case: &TestCase, approx: &[f64]) -> Result<Option<(f64, f64)>> {
    if approx.len() != space.dim() {
        return Err(Error::InvalidInput("field size differs from the space dimension".into()));
    }
    if case.exact(0.0, 0.0).is_none() {
        return Ok(None);
    }
    let gv = gauss_values(space, approx);
    let nex = space.mesh.mesh_x.n_elem();
    let (mut eh1, mut el2, mut nh1, mut nl2) = (0.0, 0.0, 0.0, 0.0);
    for_each_gauss(space, |gp, w, _| {
        let u = case.exact(gp.x, gp.y).unwrap_or(0.0);
        let (ux, uy) = case.exact_gradient(gp.x, gp.y).unwrap_or((0.0, 0.0));
        let [v, vx, vy] = gv[gp.flat(nex)];
        el2 += w * (u - v).powi(2);
        eh1 += w * ((ux - vx).powi(2) + (uy - vy).powi(2));
        nl2 += w * u * u;
        nh1 += w * (ux * ux + uy * uy);
    });
    Ok(Some(((eh1 / nh1).sqrt(), (el2 / nl2).sqrt())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, TensorMesh2D};
    use crate::model::tc1_exact;
    use approx::assert_relative_eq;

    fn space(case: &TestCase, nx: usize, ny: usize) -> FESpace2D {
        FESpace2D::new(TensorMesh2D {
            mesh_x: build_interval_mesh(case.x0, case.x1, nx).unwrap(),
            mesh_y: build_interval_mesh(case.y0, case.y1, ny).unwrap(),
        })
        .unwrap()
    }

    #[test]
    fn constant_diffusion_matches_gram() {
        let case = TestCase::tc1();
        let sp = space(&case, 6, 5);
        let stiff = sp.h1_semi_gram();
        let lin = assemble_linearized(&sp, |_| Ok((1.0, 0.0, 0.0))).unwrap();
        let (a, b) = (stiff.to_dense(), lin.to_dense());
        assert!((a - b).amax() < 1e-13);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let case = TestCase::tc1();
        let sp = space(&case, 8, 6);
        let solver = ReferenceSolver::new(case, sp.clone());
        let p = sp.interpolate(|x, y| 0.3 * (x * (2.0 - x)) * y * (1.0 - y) * (1.0 + (5.0 * x * y).sin()));
        let jac = solver.jacobian(&p).unwrap().to_dense();
        let eps = 1e-6;
        for j in 0..sp.dim() {
            let mut a = p.clone();
            let mut b = p.clone();
            a[j] += eps;
            b[j] -= eps;
            let (ra, rb) = (solver.residual(&a).unwrap(), solver.residual(&b).unwrap());
            let scale = jac.column(j).amax();
            for i in 0..sp.dim() {
                let fd = (ra[i] - rb[i]) / (2.0 * eps);
                assert!((fd - jac[(i, j)]).abs() <= 1e-6 * scale, "({i},{j}) {fd} {}", jac[(i, j)]);
            }
        }
    }

    #[test]
    fn zero_source_gives_zero_solution() {
        let mut case = TestCase::tc2();
        // confine the domain to a strip without sources
        case.x0 = 0.7;
        case.x1 = 1.3;
        let sp = space(&case, 6, 6);
        let sol = ReferenceSolver::new(case, sp).solve().unwrap();
        assert!(sol.values.iter().all(|v| *v == 0.0));
        assert_eq!(sol.log.iterations, 0);
    }

    #[test]
    fn error_norm_extremes() {
        let case = TestCase::tc1();
        let sp = space(&case, 6, 4);
        let p = sp.interpolate(tc1_exact);
        assert_eq!(error_norms(&sp, &p, &p).unwrap(), (0.0, 0.0));
        let (a, b) = error_norms(&sp, &p, &vec![0.0; sp.dim()]).unwrap();
        assert_relative_eq!(a, 1.0, epsilon = 1e-14);
        assert_relative_eq!(b, 1.0, epsilon = 1e-14);
        assert!(error_norms(&sp, &vec![0.0; sp.dim()], &p).is_err());
    }

    #[test]
    fn exact_error_of_interpolant_converges() {
        let case = TestCase::tc1();
        let errs: Vec<(f64, f64)> = [(40, 20), (80, 40)]
            .iter()
            .map(|&(nx, ny)| {
                let sp = space(&case, nx, ny);
                let p = sp.interpolate(tc1_exact);
                exact_error_norms(&sp, &case, &p).unwrap().unwrap()
            })
            .collect();
        // first order in H1, second order in L2
        assert!((errs[0].0 / errs[1].0 - 2.0).abs() < 0.2, "{errs:?}");
        assert!((errs[0].1 / errs[1].1 - 4.0).abs() < 0.6, "{errs:?}");
        let sp = space(&case, 40, 20);
        let p = sp.interpolate(tc1_exact);
        let (z1, z2) = exact_error_norms(&sp, &case, &vec![0.0; sp.dim()]).unwrap().unwrap();
        assert_relative_eq!(z1, 1.0, epsilon = 1e-12);
        assert_relative_eq!(z2, 1.0, epsilon = 1e-12);
        assert!(exact_error_norms(&sp, &TestCase::tc2(), &p).unwrap().is_none());
    }

    #[test]
    fn gauss_values_reproduce_bilinear_field() {
        let case = TestCase::tc1();
        let sp = space(&case, 4, 3);
        let v = sp.interpolate(|x, y| (1.0 + x) * y);
        let gv = gauss_values(&sp, &v);
        let nex = sp.mesh.mesh_x.n_elem();
        // interior element reproduces the bilinear function exactly
        for_each_gauss(&sp, |gp, _, _| {
            if gp.ex == 1 && gp.ey == 1 {
                let [val, px, py] = gv[gp.flat(nex)];
                assert_relative_eq!(val, (1.0 + gp.x) * gp.y, epsilon = 1e-14);
                assert_relative_eq!(px, gp.y, epsilon = 1e-13);
                assert_relative_eq!(py, 1.0 + gp.x, epsilon = 1e-13);
            }
        });
    }
}
