//! Parametrized transverse problem: for a parameter point fixing the dominant-direction
//! profile at a few quadrature points, solve the 1D nonlinear problem on the transverse
//! interval and evaluate the operator components on its solution.

use crate::eim::{FnSpace, SpaceKind};
use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::mesh::{p1_local, Boundary, FESpace1D, Mesh1D, GAUSS3_POINTS, GAUSS3_WEIGHTS};
use crate::model::{diffusion, TestCase};
use crate::newton::{self, NewtonLog, NewtonSettings};

/// Smallest admissible `max_l |U_l|`.
pub const DELTA_U: f64 = 1e-8;

/// Quadrature points `x_l` with the profile values `U(x_l)` and slopes `U'(x_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPoint {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
}

impl ParameterPoint {
    pub fn new(x: Vec<f64>, u: Vec<f64>, du: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() != u.len() || x.len() != du.len() {
            return Err(Error::InvalidInput("parameter point entries must be nonempty and of equal length".into()));
        }
        Ok(ParameterPoint { x, u, du })
    }

    /// Single-point parameter `(x, U, U')`.
    pub fn single(x: f64, u: f64, du: f64) -> Self {
        ParameterPoint {
            x: vec![x],
            u: vec![u],
            du: vec![du],
        }
    }

    pub fn q(&self) -> usize {
        self.x.len()
    }

    /// Flattened coordinates `(x_1, U_1, U'_1, x_2, ...)`.
    pub fn to_coords(&self) -> Vec<f64> {
        (0..self.q()).flat_map(|l| [self.x[l], self.u[l], self.du[l]]).collect()
    }

    pub fn from_coords(c: &[f64]) -> Result<Self> {
        if c.is_empty() || !c.len().is_multiple_of(3) {
            return Err(Error::InvalidInput(format!("parameter coordinates must come in triples, got {}", c.len())));
        }
        let q = c.len() / 3;
        Ok(ParameterPoint {
            x: (0..q).map(|l| c[3 * l]).collect(),
            u: (0..q).map(|l| c[3 * l + 1]).collect(),
            du: (0..q).map(|l| c[3 * l + 2]).collect(),
        })
    }

    /// Points strictly increasing inside `(x0, x1)` and profile not identically small.
    pub fn check_admissible(&self, x0: f64, x1: f64) -> Result<()> {
        if self.x.iter().any(|&x| !(x > x0 && x < x1)) {
            return Err(Error::InvalidInput(format!("quadrature points {:?} leave ({x0}, {x1})", self.x)));
        }
        if self.x.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(format!("quadrature points {:?} are not increasing", self.x)));
        }
        if self.u.iter().all(|u| u.abs() < DELTA_U) {
            return Err(Error::InvalidInput("profile values vanish at every quadrature point".into()));
        }
        Ok(())
    }
}

/// Midpoint-style weights for points `x_1 < ... < x_Q` in `(x0, x1)`; they sum to `x1 - x0`.
pub fn quadrature_weights(points: &[f64], x0: f64, x1: f64) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no quadrature points".into()));
    }
    if points.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput(format!("quadrature points {points:?} are not increasing")));
    }
    if points.iter().any(|&x| !(x > x0 && x < x1)) {
        return Err(Error::InvalidInput(format!("quadrature points {points:?} leave ({x0}, {x1})")));
    }
    let q = points.len();
    if q == 1 {
        return Ok(vec![x1 - x0]);
    }
    let mut w = Vec::with_capacity(q);
    w.push(0.5 * (points[0] + points[1]) - x0);
    for l in 1..q - 1 {
        w.push(0.5 * (points[l + 1] - points[l - 1]));
    }
    w.push(x1 - 0.5 * (points[q - 2] + points[q - 1]));
    Ok(w)
}

/// The five operator components sampled on the transverse interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    /// `d(p) p_x`, nodal.
    FluxX,
    /// `d(p) p_y`, elementwise constant.
    FluxY,
    /// `d(p)`, nodal.
    Diff,
    /// `d'(p) p_x`, nodal.
    DiffGradX,
    /// `d'(p) p_y`, elementwise constant.
    DiffGradY,
}

impl Component {
    pub const ALL: [Component; 5] = [
        Component::FluxX,
        Component::FluxY,
        Component::Diff,
        Component::DiffGradX,
        Component::DiffGradY,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn space_kind(self) -> SpaceKind {
        match self {
            Component::FluxY | Component::DiffGradY => SpaceKind::PiecewiseConstant,
            _ => SpaceKind::P1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::FluxX => "flux_x",
            Component::FluxY => "flux_y",
            Component::Diff => "diff",
            Component::DiffGradX => "diff_grad_x",
            Component::DiffGradY => "diff_grad_y",
        }
    }
}

impl std::str::FromStr for Component {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parse {
                section: "component".into(),
                msg: format!("unknown component `{s}`"),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSnapshot {
    pub components: [Vec<f64>; 5],
}

impl OperatorSnapshot {
    pub fn get(&self, c: Component) -> &[f64] {
        &self.components[c.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransverseSolution {
    /// Interior coefficients of the transverse profile.
    pub coeffs: Vec<f64>,
    pub log: NewtonLog,
}

/// Shared description of the transverse discretization.
#[derive(Debug, Clone)]
pub struct TransverseContext {
    pub case: TestCase,
    /// Zero-trace P1 space on the transverse interval.
    pub space: FESpace1D,
    /// Spaces for nodal and elementwise-constant operator components.
    pub nodal: FnSpace,
    pub cellwise: FnSpace,
    pub newton: NewtonSettings,
}

impl TransverseContext {
    pub fn new(case: TestCase, mesh: Mesh1D) -> Result<Self> {
        if mesh.n_elem() < 2 {
            return Err(Error::InvalidInput("transverse mesh needs at least two elements".into()));
        }
        Ok(TransverseContext {
            case,
            space: FESpace1D::new(mesh.clone(), Boundary::ZeroTrace),
            nodal: FnSpace::p1(mesh.clone()),
            cellwise: FnSpace::piecewise_constant(mesh),
            newton: NewtonSettings {
                tol: 1e-10,
                rel_tol: 0.0,
                max_iter: 25,
                max_halvings: 8,
            },
        })
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.space.mesh
    }

    pub fn component_space(&self, c: Component) -> &FnSpace {
        match c.space_kind() {
            SpaceKind::P1 => &self.nodal,
            SpaceKind::PiecewiseConstant => &self.cellwise,
        }
    }

    /// Dual norm of a functional on the zero-trace space with respect to the H1 seminorm.
    pub fn dual_norm(&self, r: &[f64]) -> f64 {
        match self.space.stiffness.solve_spd(r) {
            Ok(z) => r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt(),
            Err(_) => f64::INFINITY,
        }
    }

    fn weighted_sources(&self, mu: &ParameterPoint, alpha: &[f64]) -> Vec<Vec<f64>> {
        let mesh = self.mesh();
        (0..mu.q())
            .map(|l| {
                let mut vals = Vec::with_capacity(3 * mesh.n_elem());
                for e in 0..mesh.n_elem() {
                    for t in GAUSS3_POINTS {
                        let y = mesh.nodes[e] + t * mesh.h(e);
                        vals.push(alpha[l] * self.case.source(mu.x[l], y));
                    }
                }
                vals
            })
            .collect()
    }

    /// Residual (and optionally Jacobian) of the transverse problem at interior coefficients.
    fn assemble(&self, mu: &ParameterPoint, alpha: &[f64], src: &[Vec<f64>], coeffs: &[f64], with_jac: bool) -> Result<(Vec<f64>, Option<BandMatrix>)> {
        let mesh = self.mesh();
        let nodal = self.space.to_nodal(coeffs);
        let n = self.space.dim();
        let mut res = vec![0.0; n];
        let mut jac = with_jac.then(|| BandMatrix::zeros(n, 1, 1));
        for e in 0..mesh.n_elem() {
            let h = mesh.h(e);
            let mut r_loc = [0.0; 2];
            let mut j_loc = [[0.0; 2]; 2];
            for (g, (&t, &w)) in GAUSS3_POINTS.iter().zip(&GAUSS3_WEIGHTS).enumerate() {
                let (phi, dphi) = p1_local(t, h);
                let prof = nodal[e] * phi[0] + nodal[e + 1] * phi[1];
                let dprof = nodal[e] * dphi[0] + nodal[e + 1] * dphi[1];
                for l in 0..mu.q() {
                    let (u, du) = (mu.u[l], mu.du[l]);
                    let (d, d1, _) = diffusion(u * prof, &self.case.params)?;
                    let wa = w * h * alpha[l];
                    let ws = w * h;
                    for a in 0..2 {
                        let flux = du * du * prof * phi[a] + u * u * dprof * dphi[a];
                        r_loc[a] += wa * d * flux - ws * src[l][3 * e + g] * u * phi[a];
                        if with_jac {
                            for b in 0..2 {
                                j_loc[a][b] += wa * (d1 * u * phi[b] * flux + d * (du * du * phi[b] * phi[a] + u * u * dphi[b] * dphi[a]));
                            }
                        }
                    }
                }
            }
            for a in 0..2 {
                let node = e + a;
                if node == 0 || node == mesh.n_nodes() - 1 {
                    continue;
                }
                res[node - 1] += r_loc[a];
                if let Some(jm) = jac.as_mut() {
                    for b in 0..2 {
                        let other = e + b;
                        if other != 0 && other != mesh.n_nodes() - 1 {
                            jm.add(node - 1, other - 1, j_loc[a][b]);
                        }
                    }
                }
            }
        }
        Ok((res, jac))
    }

    /// Transverse residual vector; public for derivative checks.
    pub fn residual(&self, mu: &ParameterPoint, coeffs: &[f64]) -> Result<Vec<f64>> {
        let alpha = quadrature_weights(&mu.x, self.case.x0, self.case.x1)?;
        let src = self.weighted_sources(mu, &alpha);
        Ok(self.assemble(mu, &alpha, &src, coeffs, false)?.0)
    }

    /// Transverse Jacobian (tridiagonal, nonsymmetric through the `d'` term).
    pub fn jacobian(&self, mu: &ParameterPoint, coeffs: &[f64]) -> Result<BandMatrix> {
        let alpha = quadrature_weights(&mu.x, self.case.x0, self.case.x1)?;
        let src = self.weighted_sources(mu, &alpha);
        Ok(self.assemble(mu, &alpha, &src, coeffs, true)?.1.unwrap())
    }

    /// Newton solve from the zero profile.
    pub fn solve(&self, mu: &ParameterPoint) -> Result<TransverseSolution> {
        mu.check_admissible(self.case.x0, self.case.x1)?;
        let alpha = quadrature_weights(&mu.x, self.case.x0, self.case.x1)?;
        let src = self.weighted_sources(mu, &alpha);
        let n = self.space.dim();
        let (coeffs, log) = newton::solve(
            vec![0.0; n],
            &self.newton,
            |c| self.assemble(mu, &alpha, &src, c, false).ok().map(|r| r.0),
            |r| self.dual_norm(r),
            |c, r| {
                let (_, jac) = self.assemble(mu, &alpha, &src, c, true)?;
                let jac = jac.unwrap();
                let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
                jac.factor().map(|lu| lu.solve(&rhs))
            },
        )?;
        Ok(TransverseSolution { coeffs, log })
    }

    /// Alpha-weighted averages of the operator traces along the quadrature lines.
    pub fn operator_snapshot(&self, mu: &ParameterPoint, coeffs: &[f64]) -> Result<OperatorSnapshot> {
        let alpha = quadrature_weights(&mu.x, self.case.x0, self.case.x1)?;
        let len = self.case.x1 - self.case.x0;
        let mesh = self.mesh();
        let nodal = self.space.to_nodal(coeffs);
        let nn = mesh.n_nodes();
        let ne = mesh.n_elem();
        let mut comps: [Vec<f64>; 5] = [vec![0.0; nn], vec![0.0; ne], vec![0.0; nn], vec![0.0; nn], vec![0.0; ne]];
        let mut d_nodes = vec![0.0; nn];
        let mut d1_nodes = vec![0.0; nn];
        for l in 0..mu.q() {
            let wl = alpha[l] / len;
            let (u, du) = (mu.u[l], mu.du[l]);
            for i in 0..nn {
                let (d, d1, _) = diffusion(u * nodal[i], &self.case.params)?;
                d_nodes[i] = d;
                d1_nodes[i] = d1;
                comps[Component::FluxX.index()][i] += wl * d * du * nodal[i];
                comps[Component::Diff.index()][i] += wl * d;
                comps[Component::DiffGradX.index()][i] += wl * d1 * du * nodal[i];
            }
            for e in 0..ne {
                let slope = u * (nodal[e + 1] - nodal[e]) / mesh.h(e);
                comps[Component::FluxY.index()][e] += wl * 0.5 * (d_nodes[e] + d_nodes[e + 1]) * slope;
                comps[Component::DiffGradY.index()][e] += wl * 0.5 * (d1_nodes[e] + d1_nodes[e + 1]) * slope;
            }
        }
        Ok(OperatorSnapshot { components: comps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_interval_mesh;
    use crate::linalg::SymTridiag;
    use crate::model::tc1_exact;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ctx(case: TestCase, n: usize) -> TransverseContext {
        let mesh = build_interval_mesh(case.y0, case.y1, n).unwrap();
        TransverseContext::new(case, mesh).unwrap()
    }

    #[test]
    fn weights_examples() {
        assert_eq!(quadrature_weights(&[0.7], 0.0, 2.0).unwrap(), vec![2.0]);
        assert_eq!(quadrature_weights(&[0.5, 1.5], 0.0, 2.0).unwrap(), vec![1.0, 1.0]);
        let w = quadrature_weights(&[0.5, 1.0, 1.5], 0.0, 2.0).unwrap();
        for (a, b) in w.iter().zip([0.75, 0.5, 0.75]) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(quadrature_weights(&[1.0, 0.5], 0.0, 2.0).is_err());
        assert!(quadrature_weights(&[1.0, 1.0], 0.0, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn weights_partition_interval(mut pts in proptest::collection::vec(0.001f64..1.999, 1..8)) {
            pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            pts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            let w = quadrature_weights(&pts, 0.0, 2.0).unwrap();
            prop_assert!(w.iter().all(|&v| v > 0.0));
            prop_assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        }

        #[test]
        fn jacobian_matches_finite_differences(
            u in 0.2f64..1.0,
            du in -1.0f64..1.0,
            amp in 0.0f64..0.8,
            seed in 0u64..1000,
        ) {
            let c = ctx(TestCase::tc1(), 20);
            let mu = ParameterPoint::single(0.9, u, du);
            let n = c.space.dim();
            let coeffs: Vec<f64> = (0..n)
                .map(|i| amp * ((i as f64 + 1.0) * 0.37 + seed as f64).sin().abs() * 0.5)
                .collect();
            let band = c.jacobian(&mu, &coeffs).unwrap();
            let jac = nalgebra::DMatrix::from_fn(n, n, |i, j| band.get(i, j));
            let step = 1e-6;
            for j in 0..n {
                let mut plus = coeffs.clone();
                let mut minus = coeffs.clone();
                plus[j] += step;
                minus[j] -= step;
                let rp = c.residual(&mu, &plus).unwrap();
                let rm = c.residual(&mu, &minus).unwrap();
                let scale = jac.column(j).amax().max(1e-12);
                for i in 0..n {
                    let fd = (rp[i] - rm[i]) / (2.0 * step);
                    prop_assert!((fd - jac[(i, j)]).abs() <= 1e-6 * scale, "entry ({i},{j}): fd {fd} vs {}", jac[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn zero_source_gives_zero_profile() {
        // TC2 has no source on the line x = 0.1
        let c = ctx(TestCase::tc2(), 50);
        let sol = c.solve(&ParameterPoint::single(0.1, 0.5, 0.3)).unwrap();
        assert!(sol.coeffs.iter().all(|v| *v == 0.0));
        assert_eq!(sol.log.iterations, 0);
    }

    /// Finite-difference solve of the same 1D boundary-value problem by Picard iteration,
    /// interpolated back to the nodes of `c`.
    fn finite_difference_profile(c: &TransverseContext, mu: &ParameterPoint, n: usize) -> Vec<f64> {
        let (y0, y1) = (c.case.y0, c.case.y1);
        let h = (y1 - y0) / n as f64;
        let (x, u, du) = (mu.x[0], mu.u[0], mu.du[0]);
        let rhs: Vec<f64> = (1..n).map(|i| h * u * c.case.source(x, y0 + h * i as f64)).collect();
        let mut prof = vec![0.0; n + 1];
        for _ in 0..200 {
            let d: Vec<f64> = prof.iter().map(|v| diffusion(u * v, &c.case.params).unwrap().0).collect();
            let mut op = SymTridiag::zeros(n - 1);
            for i in 1..n {
                let left = 0.5 * (d[i - 1] + d[i]) * u * u / h;
                let right = 0.5 * (d[i] + d[i + 1]) * u * u / h;
                op.diag[i - 1] = left + right + h * d[i] * du * du;
                if i < n - 1 {
                    op.off[i - 1] = -right;
                }
            }
            let next = op.solve_spd(&rhs).unwrap();
            let change = next.iter().zip(&prof[1..n]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prof[1..n].copy_from_slice(&next);
            if change < 1e-13 {
                break;
            }
        }
        let fine = build_interval_mesh(y0, y1, n).unwrap();
        (1..c.mesh().n_nodes() - 1).map(|i| crate::mesh::eval_p1(&fine, &prof, c.mesh().nodes[i])).collect()
    }

    #[test]
    fn tc1_profile_matches_independent_solve() {
        let c = ctx(TestCase::tc1(), 100);
        let h = 1e-6;
        for x in [0.5, 1.0, 1.5] {
            let u = tc1_exact(x, 0.5);
            let du = (tc1_exact(x + h, 0.5) - tc1_exact(x - h, 0.5)) / (2.0 * h);
            let mu = ParameterPoint::single(x, u, du);
            let sol = c.solve(&mu).unwrap();
            let oracle = finite_difference_profile(&c, &mu, 4000);
            let dot = c.space.mass.quad(&sol.coeffs, &oracle);
            let cos = dot / (c.space.l2_norm(&sol.coeffs) * c.space.l2_norm(&oracle));
            assert!(cos > 0.99, "cosine similarity {cos} at x = {x}");
            let diff: Vec<f64> = sol.coeffs.iter().zip(&oracle).map(|(a, b)| a - b).collect();
            assert!(c.space.l2_norm(&diff) < 1e-3 * c.space.l2_norm(&oracle));
            assert!(sol.log.final_contraction().is_none_or(|r| r < 0.1));
        }
    }

    #[test]
    fn symmetric_data_gives_symmetric_profile() {
        let c = ctx(TestCase::tc2(), 100);
        let sol = c.solve(&ParameterPoint::single(0.5, 0.8, -0.4)).unwrap();
        let n = sol.coeffs.len();
        let peak = sol.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak > 0.0);
        for i in 0..n {
            assert!((sol.coeffs[i] - sol.coeffs[n - 1 - i]).abs() <= 1e-9 * peak.max(1.0));
        }
        assert!(sol.log.final_contraction().is_none_or(|r| r < 0.1));
    }

    #[test]
    fn zero_profile_snapshot() {
        let case = TestCase::tc1();
        let c0 = case.params.c0;
        let c = ctx(case, 10);
        let snap = c.operator_snapshot(&ParameterPoint::single(1.0, 0.4, 0.2), &vec![0.0; c.space.dim()]).unwrap();
        let (d0, d1, _) = diffusion(0.0, &c.case.params).unwrap();
        assert_relative_eq!(d0, c0, epsilon = 1e-15);
        assert!(snap.get(Component::Diff).iter().all(|v| (v - c0).abs() < 1e-15));
        assert!(snap.get(Component::FluxX).iter().all(|v| *v == 0.0));
        assert!(snap.get(Component::FluxY).iter().all(|v| *v == 0.0));
        assert!(snap.get(Component::DiffGradX).iter().all(|v| *v == 0.0));
        assert!(snap.get(Component::DiffGradY).iter().all(|v| *v == 0.0));
        assert_eq!(snap.get(Component::Diff).len(), 11);
        assert_eq!(snap.get(Component::FluxY).len(), 10);
        let _ = d1;
    }

    #[test]
    fn two_point_snapshot_is_mean_of_traces() {
        let c = ctx(TestCase::tc1(), 12);
        let coeffs: Vec<f64> = (0..c.space.dim()).map(|i| 0.1 + 0.02 * i as f64).collect();
        let pair = ParameterPoint::new(vec![0.5, 1.5], vec![0.3, 0.6], vec![0.4, -0.2]).unwrap();
        let both = c.operator_snapshot(&pair, &coeffs).unwrap();
        // independent trace evaluation
        let nodal = c.space.to_nodal(&coeffs);
        for comp in Component::ALL {
            let trace = |u: f64, du: f64| -> Vec<f64> {
                let d = |i: usize| diffusion(u * nodal[i], &c.case.params).unwrap();
                match comp {
                    Component::FluxX => (0..nodal.len()).map(|i| d(i).0 * du * nodal[i]).collect(),
                    Component::Diff => (0..nodal.len()).map(|i| d(i).0).collect(),
                    Component::DiffGradX => (0..nodal.len()).map(|i| d(i).1 * du * nodal[i]).collect(),
                    Component::FluxY => (0..nodal.len() - 1)
                        .map(|e| 0.5 * (d(e).0 + d(e + 1).0) * u * (nodal[e + 1] - nodal[e]) / c.mesh().h(e))
                        .collect(),
                    Component::DiffGradY => (0..nodal.len() - 1)
                        .map(|e| 0.5 * (d(e).1 + d(e + 1).1) * u * (nodal[e + 1] - nodal[e]) / c.mesh().h(e))
                        .collect(),
                }
            };
            let a = trace(0.3, 0.4);
            let b = trace(0.6, -0.2);
            for (i, v) in both.get(comp).iter().enumerate() {
                assert_relative_eq!(*v, 0.5 * (a[i] + b[i]), epsilon = 1e-14, max_relative = 1e-12);
            }
        }
        let single = c.operator_snapshot(&ParameterPoint::single(0.5, 0.3, 0.4), &coeffs).unwrap();
        let direct = c.operator_snapshot(&ParameterPoint::single(1.7, 0.3, 0.4), &coeffs).unwrap();
        assert_eq!(single, direct);
    }

    #[test]
    fn admissibility() {
        assert!(ParameterPoint::single(1.0, 0.0, 1.0).check_admissible(0.0, 2.0).is_err());
        assert!(ParameterPoint::single(2.0, 1.0, 1.0).check_admissible(0.0, 2.0).is_err());
        assert!(ParameterPoint::single(1.0, 1e-3, 0.0).check_admissible(0.0, 2.0).is_ok());
        let p = ParameterPoint::new(vec![0.5, 1.5], vec![0.1, 0.2], vec![0.3, 0.4]).unwrap();
        assert_eq!(ParameterPoint::from_coords(&p.to_coords()).unwrap(), p);
    }
}
