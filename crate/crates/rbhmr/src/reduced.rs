//! Reduced problem: coupled 1D system for the coefficient functions of the transverse
//! modes, with the nonlinear operator evaluated through empirical projection.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::eim::SpaceKind;
use crate::epm::EpmProjector;
use crate::error::{Error, Result};
use crate::linalg::{solve_sparse, Csr, LinearStrategy, PermutedLu};
use crate::mesh::{p1_local, Boundary, FESpace1D, FESpace2D, Mesh1D, TensorMesh2D, GAUSS3_POINTS, GAUSS3_WEIGHTS};
use crate::model::{diffusion, DiffusionParams};
use crate::newton::{self, NewtonLog, NewtonSettings};
use crate::reference::load_vector;
use crate::transverse::{Component, TransverseContext};

/// How the Newton matrix is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianMode {
    /// Exact derivative of the discrete reduced residual.
    #[default]
    Consistent,
    /// Linearization assembled from separate projections of `d`, `d' p_x`, `d' p_y`.
    /// Cheaper to assemble but only approximates the derivative, so Newton converges linearly.
    Collateral,
}

impl std::str::FromStr for JacobianMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "consistent" => Ok(JacobianMode::Consistent),
            "collateral" => Ok(JacobianMode::Collateral),
            other => Err(Error::Config(format!("unknown jacobian mode `{other}`"))),
        }
    }
}

/// Local transverse state at one point of the dominant direction: mode coefficients
/// and their x-derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct LineState {
    pub val: Vec<f64>,
    pub der: Vec<f64>,
}

/// Empirical projection coefficients of one operator component as a function of the
/// local transverse state.
#[derive(Debug, Clone)]
pub struct ComponentInterpolant {
    pub component: Component,
    params: DiffusionParams,
    /// Full-mesh node indices whose values the functionals need.
    nodes: Vec<usize>,
    /// Mode values at `nodes` (rows) for each mode (columns).
    phi: DMatrix<f64>,
    /// Component dofs touched by the functionals, as node-slot pairs for cellwise dofs.
    dofs: Vec<DofRef>,
    /// Functionals as sparse weights over `dofs` positions.
    functionals: Vec<Vec<(usize, f64)>>,
    proj_t: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy)]
enum DofRef {
    Node(usize),
    Cell { left: usize, right: usize, h: f64 },
}

struct NodeState {
    p: f64,
    px: f64,
    d: [f64; 3],
}

impl ComponentInterpolant {
    pub fn new(component: Component, projector: &EpmProjector, mesh: &Mesh1D, basis: &DMatrix<f64>, params: DiffusionParams) -> Result<Self> {
        let nn = mesh.n_nodes();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        let mut nodes = Vec::new();
        let mut dof_pos: HashMap<usize, usize> = HashMap::new();
        let mut dofs = Vec::new();
        let mut functionals = Vec::new();
        let mut slot_of = |node: usize, nodes: &mut Vec<usize>| -> usize {
            *slot.entry(node).or_insert_with(|| {
                nodes.push(node);
                nodes.len() - 1
            })
        };
        for f in projector.functionals() {
            let mut w = Vec::with_capacity(f.weights.len());
            for &(dof, weight) in &f.weights {
                let pos = match dof_pos.get(&dof) {
                    Some(&p) => p,
                    None => {
                        let r = match component.space_kind() {
                            SpaceKind::P1 => {
                                if dof >= nn {
                                    return Err(Error::InvalidInput(format!("functional dof {dof} outside {nn} nodes")));
                                }
                                DofRef::Node(slot_of(dof, &mut nodes))
                            }
                            SpaceKind::PiecewiseConstant => {
                                if dof + 1 >= nn {
                                    return Err(Error::InvalidInput(format!("functional cell {dof} outside the mesh")));
                                }
                                DofRef::Cell {
                                    left: slot_of(dof, &mut nodes),
                                    right: slot_of(dof + 1, &mut nodes),
                                    h: mesh.h(dof),
                                }
                            }
                        };
                        dofs.push(r);
                        dof_pos.insert(dof, dofs.len() - 1);
                        dofs.len() - 1
                    }
                };
                w.push((pos, weight));
            }
            functionals.push(w);
        }
        let m = basis.ncols();
        let phi = DMatrix::from_fn(nodes.len(), m, |r, s| {
            let node = nodes[r];
            if node == 0 || node == nn - 1 {
                0.0
            } else {
                basis[(node - 1, s)]
            }
        });
        Ok(ComponentInterpolant {
            component,
            params,
            nodes,
            phi,
            dofs,
            functionals,
            proj_t: projector.proj.transpose(),
        })
    }

    pub fn k(&self) -> usize {
        self.proj_t.nrows()
    }

    fn node_states(&self, st: &LineState) -> Result<Vec<NodeState>> {
        let m = self.phi.ncols();
        (0..self.nodes.len())
            .map(|r| {
                let mut p = 0.0;
                let mut px = 0.0;
                for s in 0..m {
                    p += self.phi[(r, s)] * st.val[s];
                    px += self.phi[(r, s)] * st.der[s];
                }
                let (d0, d1, d2) = diffusion(p, &self.params)?;
                Ok(NodeState { p, px, d: [d0, d1, d2] })
            })
            .collect()
    }

    /// Component value at each referenced dof.
    fn dof_values(&self, ns: &[NodeState]) -> Vec<f64> {
        self.dofs
            .iter()
            .map(|&r| match (self.component, r) {
                (Component::FluxX, DofRef::Node(t)) => ns[t].d[0] * ns[t].px,
                (Component::Diff, DofRef::Node(t)) => ns[t].d[0],
                (Component::DiffGradX, DofRef::Node(t)) => ns[t].d[1] * ns[t].px,
                (Component::FluxY, DofRef::Cell { left, right, h }) => {
                    0.5 * (ns[left].d[0] + ns[right].d[0]) * (ns[right].p - ns[left].p) / h
                }
                (Component::DiffGradY, DofRef::Cell { left, right, h }) => {
                    0.5 * (ns[left].d[1] + ns[right].d[1]) * (ns[right].p - ns[left].p) / h
                }
                _ => unreachable!("dof kind always matches the component space"),
            })
            .collect()
    }

    /// Projection coefficients of the component at the given state.
    pub fn coefficients(&self, st: &LineState) -> Result<DVector<f64>> {
        let ns = self.node_states(st)?;
        let vals = self.dof_values(&ns);
        let obs = DVector::from_iterator(
            self.functionals.len(),
            self.functionals.iter().map(|f| f.iter().map(|&(i, w)| w * vals[i]).sum::<f64>()),
        );
        Ok(&self.proj_t * obs)
    }

    /// Coefficients and their derivatives (k x m) with respect to the mode values and
    /// the mode x-derivatives.
    pub fn coefficients_with_derivatives(&self, st: &LineState) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let ns = self.node_states(st)?;
        let vals = self.dof_values(&ns);
        let m = self.phi.ncols();
        let nd = self.dofs.len();
        let mut dval = DMatrix::zeros(nd, m);
        let mut dder = DMatrix::zeros(nd, m);
        for (i, &r) in self.dofs.iter().enumerate() {
            for s in 0..m {
                let (a, b) = match (self.component, r) {
                    (Component::FluxX, DofRef::Node(t)) => {
                        let f = self.phi[(t, s)];
                        (ns[t].d[1] * f * ns[t].px, ns[t].d[0] * f)
                    }
                    (Component::Diff, DofRef::Node(t)) => (ns[t].d[1] * self.phi[(t, s)], 0.0),
                    (Component::DiffGradX, DofRef::Node(t)) => {
                        let f = self.phi[(t, s)];
                        (ns[t].d[2] * f * ns[t].px, ns[t].d[1] * f)
                    }
                    (c, DofRef::Cell { left, right, h }) => {
                        let o = if c == Component::FluxY { 0 } else { 1 };
                        let (fl, fr) = (self.phi[(left, s)], self.phi[(right, s)]);
                        let slope = (ns[right].p - ns[left].p) / h;
                        (
                            0.5 * (ns[left].d[o + 1] * fl + ns[right].d[o + 1] * fr) * slope
                                + 0.5 * (ns[left].d[o] + ns[right].d[o]) * (fr - fl) / h,
                            0.0,
                        )
                    }
                    _ => unreachable!("dof kind always matches the component space"),
                };
                dval[(i, s)] = a;
                dder[(i, s)] = b;
            }
        }
        let nl = self.functionals.len();
        let mut obs = DVector::zeros(nl);
        let mut oval = DMatrix::zeros(nl, m);
        let mut oder = DMatrix::zeros(nl, m);
        for (l, f) in self.functionals.iter().enumerate() {
            for &(i, w) in f {
                obs[l] += w * vals[i];
                for s in 0..m {
                    oval[(l, s)] += w * dval[(i, s)];
                    oder[(l, s)] += w * dder[(i, s)];
                }
            }
        }
        Ok((&self.proj_t * obs, &self.proj_t * oval, &self.proj_t * oder))
    }
}

/// Collateral units for the linearization: `d`, `d' p_x`, `d' p_y`.
#[derive(Debug, Clone)]
pub struct DerivativeUnits {
    pub diff: EpmProjector,
    pub diff_grad_x: EpmProjector,
    pub diff_grad_y: EpmProjector,
}

/// Integral of the product of three P1 functions over one element of length `h`,
/// given their end values.
fn triple_p1(h: f64, a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    h * (0.25 * a[0] * b[0] * c[0]
        + (a[0] * b[0] * c[1] + a[0] * b[1] * c[0] + a[1] * b[0] * c[0]) / 12.0
        + (a[0] * b[1] * c[1] + a[1] * b[0] * c[1] + a[1] * b[1] * c[0]) / 12.0
        + 0.25 * a[1] * b[1] * c[1])
}

/// Transverse integrals of collateral functions against modes.
#[derive(Debug, Clone)]
pub struct TransverseTensors {
    /// `flux_x[(n, j)] = ∫ kappa_n phi_j`.
    pub flux_x: DMatrix<f64>,
    /// `flux_y[(n, j)] = ∫ kappa_n phi_j'`.
    pub flux_y: DMatrix<f64>,
    /// Per collateral function, `m x m` matrices indexed `(j, s)` (test, trial).
    pub diff_mass: Vec<DMatrix<f64>>,
    pub diff_stiff: Vec<DMatrix<f64>>,
    pub grad_x_mass: Vec<DMatrix<f64>>,
    pub grad_y_mixed: Vec<DMatrix<f64>>,
}

/// Mode values on all nodes (zero rows at the boundary), `n_nodes x m`.
fn padded_modes(mesh: &Mesh1D, basis: &DMatrix<f64>) -> DMatrix<f64> {
    let nn = mesh.n_nodes();
    DMatrix::from_fn(nn, basis.ncols(), |i, s| if i == 0 || i == nn - 1 { 0.0 } else { basis[(i - 1, s)] })
}

pub fn precompute_tensors(
    ctx: &TransverseContext,
    basis: &DMatrix<f64>,
    flux_x: &EpmProjector,
    flux_y: &EpmProjector,
    deriv: Option<&DerivativeUnits>,
) -> TransverseTensors {
    let mesh = ctx.mesh();
    let phi = padded_modes(mesh, basis);
    let m = basis.ncols();
    let ne = mesh.n_elem();
    let fx = flux_x.basis.transpose() * ctx.nodal.mass().apply(&phi);
    let mut fy = DMatrix::zeros(flux_y.k(), m);
    for n in 0..flux_y.k() {
        for j in 0..m {
            fy[(n, j)] = (0..ne).map(|e| flux_y.basis[(e, n)] * (phi[(e + 1, j)] - phi[(e, j)])).sum();
        }
    }
    let mut t = TransverseTensors {
        flux_x: fx,
        flux_y: fy,
        diff_mass: Vec::new(),
        diff_stiff: Vec::new(),
        grad_x_mass: Vec::new(),
        grad_y_mixed: Vec::new(),
    };
    let Some(du) = deriv else { return t };
    let triple = |kappa: &DMatrix<f64>, n: usize| {
        DMatrix::from_fn(m, m, |j, s| {
            (0..ne)
                .map(|e| {
                    triple_p1(
                        mesh.h(e),
                        [kappa[(e, n)], kappa[(e + 1, n)]],
                        [phi[(e, s)], phi[(e + 1, s)]],
                        [phi[(e, j)], phi[(e + 1, j)]],
                    )
                })
                .sum()
        })
    };
    for n in 0..du.diff.k() {
        t.diff_mass.push(triple(&du.diff.basis, n));
        t.diff_stiff.push(DMatrix::from_fn(m, m, |j, s| {
            (0..ne)
                .map(|e| {
                    let h = mesh.h(e);
                    let mean = 0.5 * (du.diff.basis[(e, n)] + du.diff.basis[(e + 1, n)]);
                    mean * (phi[(e + 1, s)] - phi[(e, s)]) * (phi[(e + 1, j)] - phi[(e, j)]) / h
                })
                .sum()
        }));
    }
    for n in 0..du.diff_grad_x.k() {
        t.grad_x_mass.push(triple(&du.diff_grad_x.basis, n));
    }
    for n in 0..du.diff_grad_y.k() {
        t.grad_y_mixed.push(DMatrix::from_fn(m, m, |j, s| {
            (0..ne)
                .map(|e| {
                    let h = mesh.h(e);
                    du.diff_grad_y.basis[(e, n)] * (phi[(e + 1, j)] - phi[(e, j)]) / h * h * 0.5 * (phi[(e, s)] + phi[(e + 1, s)])
                })
                .sum()
        }));
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSolution {
    /// Coefficient functions: `coeffs[(s, i)]` is mode `s` at interior x-node `i`.
    pub coeffs: DMatrix<f64>,
    pub log: NewtonLog,
}

impl ReducedSolution {
    /// Node-major flat vector `i * m + s`.
    pub fn flat(&self) -> Vec<f64> {
        self.coeffs.as_slice().to_vec()
    }

    /// `||p_s||^2_{L2}` for each coefficient function.
    pub fn coefficient_norms(&self, space_x: &FESpace1D) -> Vec<f64> {
        (0..self.coeffs.nrows())
            .map(|s| {
                let row: Vec<f64> = self.coeffs.row(s).iter().copied().collect();
                space_x.mass.quad(&row, &row)
            })
            .collect()
    }
}

/// Online solver for one choice of modes and collateral units.
#[derive(Debug, Clone)]
pub struct ReducedSolver {
    pub space_x: FESpace1D,
    pub basis: DMatrix<f64>,
    pub flux_x: ComponentInterpolant,
    pub flux_y: ComponentInterpolant,
    pub deriv: Option<[ComponentInterpolant; 3]>,
    pub tensors: TransverseTensors,
    pub mode: JacobianMode,
    pub newton: NewtonSettings,
    pub linear: LinearStrategy,
    /// `source[(s, i)] = ∫ s ξ_i φ_s`.
    source: DMatrix<f64>,
    gram: PermutedLu,
}

impl ReducedSolver {
    pub fn new(
        ctx: &TransverseContext,
        mesh_x: Mesh1D,
        basis: DMatrix<f64>,
        flux_x: &EpmProjector,
        flux_y: &EpmProjector,
        deriv: Option<&DerivativeUnits>,
    ) -> Result<Self> {
        let m = basis.ncols();
        if m == 0 {
            return Err(Error::InvalidInput("reduced solver needs at least one mode".into()));
        }
        if basis.nrows() != ctx.space.dim() {
            return Err(Error::InvalidInput(format!(
                "mode length {} differs from the transverse space dimension {}",
                basis.nrows(),
                ctx.space.dim()
            )));
        }
        let space_x = FESpace1D::new(mesh_x.clone(), Boundary::ZeroTrace);
        if space_x.dim() == 0 {
            return Err(Error::InvalidInput("dominant mesh has no interior nodes".into()));
        }
        let params = ctx.case.params;
        let mesh_y = ctx.mesh();
        let fx = ComponentInterpolant::new(Component::FluxX, flux_x, mesh_y, &basis, params)?;
        let fy = ComponentInterpolant::new(Component::FluxY, flux_y, mesh_y, &basis, params)?;
        let deriv_units = match deriv {
            Some(du) => Some([
                ComponentInterpolant::new(Component::Diff, &du.diff, mesh_y, &basis, params)?,
                ComponentInterpolant::new(Component::DiffGradX, &du.diff_grad_x, mesh_y, &basis, params)?,
                ComponentInterpolant::new(Component::DiffGradY, &du.diff_grad_y, mesh_y, &basis, params)?,
            ]),
            None => None,
        };
        let tensors = precompute_tensors(ctx, &basis, flux_x, flux_y, deriv);
        let space2d = FESpace2D::new(TensorMesh2D {
            mesh_x,
            mesh_y: mesh_y.clone(),
        })?;
        let load = load_vector(&space2d, &ctx.case);
        let nx = space_x.dim();
        let ny = ctx.space.dim();
        let mut source = DMatrix::zeros(m, nx);
        for i in 0..nx {
            for l in 0..ny {
                let f = load[space2d.index(i, l)];
                if f != 0.0 {
                    for s in 0..m {
                        source[(s, i)] += f * basis[(l, s)];
                    }
                }
            }
        }
        let gram = reduced_gram(&space_x, &ctx.space, &basis);
        let gram = PermutedLu::new(&gram, None)?;
        Ok(ReducedSolver {
            space_x,
            basis,
            flux_x: fx,
            flux_y: fy,
            deriv: deriv_units,
            tensors,
            mode: if deriv.is_some() { JacobianMode::Collateral } else { JacobianMode::Consistent },
            newton: NewtonSettings::default(),
            linear: LinearStrategy::default(),
            source,
            gram,
        })
    }

    pub fn m(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n_x(&self) -> usize {
        self.space_x.dim()
    }

    pub fn unknowns(&self) -> usize {
        self.m() * self.n_x()
    }

    /// Local states at the three Gauss points of every x-element, element-major.
    pub fn gauss_states(&self, u: &[f64]) -> Vec<LineState> {
        let mesh = &self.space_x.mesh;
        let m = self.m();
        let nn = mesh.n_nodes();
        let node = |i: usize, s: usize| if i == 0 || i == nn - 1 { 0.0 } else { u[(i - 1) * m + s] };
        let mut out = Vec::with_capacity(3 * mesh.n_elem());
        for e in 0..mesh.n_elem() {
            let h = mesh.h(e);
            for &t in &GAUSS3_POINTS {
                let (f, g) = p1_local(t, h);
                out.push(LineState {
                    val: (0..m).map(|s| f[0] * node(e, s) + f[1] * node(e + 1, s)).collect(),
                    der: (0..m).map(|s| g[0] * node(e, s) + g[1] * node(e + 1, s)).collect(),
                });
            }
        }
        out
    }

    /// Residual in node-major layout.
    pub fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mesh = &self.space_x.mesh;
        let m = self.m();
        let nn = mesh.n_nodes();
        let states = self.gauss_states(u);
        let mut r = vec![0.0; self.unknowns()];
        for e in 0..mesh.n_elem() {
            let h = mesh.h(e);
            for (g, &t) in GAUSS3_POINTS.iter().enumerate() {
                let st = &states[3 * e + g];
                let c1 = self.flux_x.coefficients(st)?;
                let c2 = self.flux_y.coefficients(st)?;
                let a1 = self.tensors.flux_x.tr_mul(&c1);
                let a2 = self.tensors.flux_y.tr_mul(&c2);
                let (f, df) = p1_local(t, h);
                let w = GAUSS3_WEIGHTS[g] * h;
                for a in 0..2 {
                    let i = e + a;
                    if i == 0 || i == nn - 1 {
                        continue;
                    }
                    for j in 0..m {
                        r[(i - 1) * m + j] += w * (df[a] * a1[j] + f[a] * a2[j]);
                    }
                }
            }
        }
        for i in 0..self.n_x() {
            for j in 0..m {
                r[i * m + j] -= self.source[(j, i)];
            }
        }
        Ok(r)
    }

    /// Newton matrix in node-major layout for the configured mode.
    pub fn jacobian(&self, u: &[f64]) -> Result<Csr> {
        match self.mode {
            JacobianMode::Consistent => self.consistent_jacobian(u),
            JacobianMode::Collateral => self.collateral_jacobian(u),
        }
    }

    fn assemble_blocks<F>(&self, u: &[f64], mut local: F) -> Result<Csr>
    where
        F: FnMut(&LineState) -> Result<[DMatrix<f64>; 4]>,
    {
        // local returns (val-val, val-der, der-val, der-der) couplings: test (row) x trial (col)
        let mesh = &self.space_x.mesh;
        let m = self.m();
        let nn = mesh.n_nodes();
        let states = self.gauss_states(u);
        let mut trips = Vec::with_capacity(mesh.n_elem() * 4 * m * m);
        for e in 0..mesh.n_elem() {
            let h = mesh.h(e);
            let mut block = [[DMatrix::<f64>::zeros(m, m), DMatrix::zeros(m, m)], [DMatrix::zeros(m, m), DMatrix::zeros(m, m)]];
            for (g, &t) in GAUSS3_POINTS.iter().enumerate() {
                let [vv, vd, dv, dd] = local(&states[3 * e + g])?;
                let (f, df) = p1_local(t, h);
                let w = GAUSS3_WEIGHTS[g] * h;
                for a in 0..2 {
                    for b in 0..2 {
                        let coef = [w * f[a] * f[b], w * f[a] * df[b], w * df[a] * f[b], w * df[a] * df[b]];
                        let blk = &mut block[a][b];
                        *blk += &vv * coef[0] + &vd * coef[1] + &dv * coef[2] + &dd * coef[3];
                    }
                }
            }
            for a in 0..2 {
                let i = e + a;
                if i == 0 || i == nn - 1 {
                    continue;
                }
                for b in 0..2 {
                    let r = e + b;
                    if r == 0 || r == nn - 1 {
                        continue;
                    }
                    let blk = &block[a][b];
                    for j in 0..m {
                        for s in 0..m {
                            trips.push(((i - 1) * m + j, (r - 1) * m + s, blk[(j, s)]));
                        }
                    }
                }
            }
        }
        Ok(Csr::from_triplets(self.unknowns(), trips))
    }

    fn consistent_jacobian(&self, u: &[f64]) -> Result<Csr> {
        let m = self.m();
        self.assemble_blocks(u, |st| {
            let (_, g1v, g1d) = self.flux_x.coefficients_with_derivatives(st)?;
            let (_, g2v, _) = self.flux_y.coefficients_with_derivatives(st)?;
            let a1 = self.tensors.flux_x.tr_mul(&g1v);
            let b1 = self.tensors.flux_x.tr_mul(&g1d);
            let a2 = self.tensors.flux_y.tr_mul(&g2v);
            Ok([a2, DMatrix::zeros(m, m), a1, b1])
        })
    }

    fn collateral_jacobian(&self, u: &[f64]) -> Result<Csr> {
        let Some([diff, gx, gy]) = self.deriv.as_ref() else {
            return Err(Error::Config("collateral jacobian requires derivative units".into()));
        };
        let m = self.m();
        let t = &self.tensors;
        self.assemble_blocks(u, |st| {
            let cd = diff.coefficients(st)?;
            let cx = gx.coefficients(st)?;
            let cy = gy.coefficients(st)?;
            let mut dd = DMatrix::zeros(m, m);
            let mut vv = DMatrix::zeros(m, m);
            let mut dv = DMatrix::zeros(m, m);
            for n in 0..cd.len() {
                dd += &t.diff_mass[n] * cd[n];
                vv += &t.diff_stiff[n] * cd[n];
            }
            for n in 0..cx.len() {
                dv += &t.grad_x_mass[n] * cx[n];
            }
            for n in 0..cy.len() {
                vv += &t.grad_y_mixed[n] * cy[n];
            }
            Ok([vv, DMatrix::zeros(m, m), dv, dd])
        })
    }

    /// Dual norm of a reduced functional with respect to the H1 seminorm on the reduced space.
    pub fn dual_norm(&self, r: &[f64]) -> f64 {
        let z = self.gram.solve(r);
        r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }

    pub fn solve(&self) -> Result<ReducedSolution> {
        self.solve_from(vec![0.0; self.unknowns()])
    }

    pub fn solve_from(&self, init: Vec<f64>) -> Result<ReducedSolution> {
        if init.len() != self.unknowns() {
            return Err(Error::InvalidInput("initial guess has the wrong length".into()));
        }
        let (u, log) = newton::solve(
            init,
            &self.newton,
            |u| self.residual(u).ok(),
            |r| self.dual_norm(r),
            |u, r| {
                let jac = self.jacobian(u)?;
                let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
                solve_sparse(&jac, &rhs, self.linear, None)
            },
        )?;
        Ok(ReducedSolution {
            coeffs: DMatrix::from_column_slice(self.m(), self.n_x(), &u),
            log,
        })
    }

    /// Zero-padded warm start from a solution with fewer modes.
    pub fn pad_guess(&self, prev: &ReducedSolution) -> Vec<f64> {
        let m = self.m();
        let mut u = vec![0.0; self.unknowns()];
        for i in 0..self.n_x().min(prev.coeffs.ncols()) {
            for s in 0..m.min(prev.coeffs.nrows()) {
                u[i * m + s] = prev.coeffs[(s, i)];
            }
        }
        u
    }
}

/// H1-seminorm Gram of the reduced space, node-major.
fn reduced_gram(space_x: &FESpace1D, space_y: &FESpace1D, basis: &DMatrix<f64>) -> Csr {
    let m = basis.ncols();
    let my = basis.transpose() * space_y.mass.apply(basis);
    let ky = basis.transpose() * space_y.stiffness.apply(basis);
    let n = space_x.dim();
    let mut trips = Vec::with_capacity(3 * n * m * m);
    for i in 0..n {
        for r in i.saturating_sub(1)..(i + 2).min(n) {
            let (kx, mx) = (space_x.stiffness.get(i, r), space_x.mass.get(i, r));
            for j in 0..m {
                for s in 0..m {
                    trips.push((i * m + j, r * m + s, kx * my[(j, s)] + mx * ky[(j, s)]));
                }
            }
        }
    }
    Csr::from_triplets(n * m, trips)
}

/// Reduced field on the tensor space: nodal values `sum_s p_s(x) phi_s(y)`.
pub fn reconstruct(sol: &ReducedSolution, basis: &DMatrix<f64>, space: &FESpace2D) -> Result<Vec<f64>> {
    if sol.coeffs.ncols() != space.nx() || basis.nrows() != space.ny() || basis.ncols() != sol.coeffs.nrows() {
        return Err(Error::InvalidInput("reduced solution does not match the tensor space".into()));
    }
    let field = basis * &sol.coeffs;
    let mut v = vec![0.0; space.dim()];
    for iy in 0..space.ny() {
        for ix in 0..space.nx() {
            v[space.index(ix, iy)] = field[(iy, ix)];
        }
    }
    Ok(v)
}
