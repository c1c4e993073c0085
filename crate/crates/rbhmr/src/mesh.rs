//! Interval and tensor-product meshes, P1/Q1 spaces, Gram matrices and Riesz maps.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{BandMatrix, Csr, SymTridiag};

/// Three-point Gauss rule on the reference interval [0, 1].
pub const GAUSS3_POINTS: [f64; 3] = [
    0.5 - 0.387_298_334_620_741_7,
    0.5,
    0.5 + 0.387_298_334_620_741_7,
];
pub const GAUSS3_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    pub a: f64,
    pub b: f64,
    pub nodes: Vec<f64>,
}

impl Mesh1D {
    pub fn n_elem(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn h(&self, e: usize) -> f64 {
        self.nodes[e + 1] - self.nodes[e]
    }

    pub fn max_h(&self) -> f64 {
        (0..self.n_elem()).map(|e| self.h(e)).fold(0.0, f64::max)
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    /// Element containing `y` (the right one at interior nodes, the last at `b`).
    pub fn locate(&self, y: f64) -> usize {
        match self.nodes.binary_search_by(|n| n.partial_cmp(&y).unwrap()) {
            Ok(i) => i.min(self.n_elem() - 1),
            Err(i) => i.saturating_sub(1).min(self.n_elem() - 1),
        }
    }
}

/// Uniform mesh with `n` elements on [a, b].
pub fn build_interval_mesh(a: f64, b: f64, n: usize) -> Result<Mesh1D> {
    if !(a < b) {
        return Err(Error::InvalidInput(format!("interval [{a}, {b}] is empty")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("mesh needs at least one element".into()));
    }
    let h = (b - a) / n as f64;
    let mut nodes: Vec<f64> = (0..=n).map(|i| a + h * i as f64).collect();
    nodes[n] = b;
    Ok(Mesh1D { a, b, nodes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    ZeroTrace,
    Free,
}

/// Continuous piecewise-linear space on a 1D mesh.
#[derive(Debug, Clone)]
pub struct FESpace1D {
    pub mesh: Mesh1D,
    pub boundary: Boundary,
    pub mass: SymTridiag,
    pub stiffness: SymTridiag,
}

impl FESpace1D {
    pub fn new(mesh: Mesh1D, boundary: Boundary) -> Self {
        let (mass, stiffness) = assemble_p1_gram(&mesh, boundary);
        FESpace1D {
            mesh,
            boundary,
            mass,
            stiffness,
        }
    }

    pub fn dim(&self) -> usize {
        match self.boundary {
            Boundary::ZeroTrace => self.mesh.n_nodes() - 2,
            Boundary::Free => self.mesh.n_nodes(),
        }
    }

    /// Node index of degree of freedom `i`.
    pub fn node_of(&self, i: usize) -> usize {
        match self.boundary {
            Boundary::ZeroTrace => i + 1,
            Boundary::Free => i,
        }
    }

    /// Nodal values on all mesh nodes (zero-padded for zero trace).
    pub fn to_nodal(&self, coeffs: &[f64]) -> Vec<f64> {
        match self.boundary {
            Boundary::Free => coeffs.to_vec(),
            Boundary::ZeroTrace => {
                let mut v = vec![0.0; self.mesh.n_nodes()];
                v[1..self.mesh.n_nodes() - 1].copy_from_slice(coeffs);
                v
            }
        }
    }

    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        self.mass.quad(v, v).max(0.0).sqrt()
    }
}

/// Exact P1 mass and stiffness matrices.
pub fn assemble_p1_gram(mesh: &Mesh1D, boundary: Boundary) -> (SymTridiag, SymTridiag) {
    let nn = mesh.n_nodes();
    let mut m = SymTridiag::zeros(nn);
    let mut k = SymTridiag::zeros(nn);
    for e in 0..mesh.n_elem() {
        let h = mesh.h(e);
        m.diag[e] += h / 3.0;
        m.diag[e + 1] += h / 3.0;
        m.off[e] += h / 6.0;
        k.diag[e] += 1.0 / h;
        k.diag[e + 1] += 1.0 / h;
        k.off[e] -= 1.0 / h;
    }
    match boundary {
        Boundary::Free => (m, k),
        Boundary::ZeroTrace => {
            let strip = |t: &SymTridiag| SymTridiag {
                diag: t.diag[1..nn - 1].to_vec(),
                off: t.off[1..nn.saturating_sub(2)].to_vec(),
            };
            (strip(&m), strip(&k))
        }
    }
}

/// Riesz representer and dual norm of `functional` with respect to a dense SPD `gram`.
pub fn riesz_represent(functional: &DVector<f64>, gram: &DMatrix<f64>) -> Result<(DVector<f64>, f64)> {
    if gram.nrows() != functional.len() || gram.ncols() != functional.len() {
        return Err(Error::InvalidInput("gram and functional dimensions differ".into()));
    }
    let ch = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("gram matrix is not positive definite".into()))?;
    let r = ch.solve(functional);
    let norm = functional.dot(&r).max(0.0).sqrt();
    Ok((r, norm))
}

/// `valuesᵀ · mass · coeffs`, exact for products of two P1 functions.
pub fn transverse_quadrature(values: &[f64], coeffs: &[f64], mass: &SymTridiag) -> f64 {
    mass.quad(values, coeffs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorMesh2D {
    pub mesh_x: Mesh1D,
    pub mesh_y: Mesh1D,
}

impl TensorMesh2D {
    pub fn n_elem(&self) -> usize {
        self.mesh_x.n_elem() * self.mesh_y.n_elem()
    }
}

/// Zero-trace Q1 space on a tensor mesh, unknowns ordered x-fastest.
#[derive(Debug, Clone)]
pub struct FESpace2D {
    pub mesh: TensorMesh2D,
    pub x: FESpace1D,
    pub y: FESpace1D,
    h1: TensorSpdSolver,
}

impl FESpace2D {
    pub fn new(mesh: TensorMesh2D) -> Result<Self> {
        let x = FESpace1D::new(mesh.mesh_x.clone(), Boundary::ZeroTrace);
        let y = FESpace1D::new(mesh.mesh_y.clone(), Boundary::ZeroTrace);
        if x.dim() == 0 || y.dim() == 0 {
            return Err(Error::InvalidInput("2D space needs interior nodes in both directions".into()));
        }
        let h1 = TensorSpdSolver::new(&x.stiffness, &x.mass, &y.mass, &y.stiffness)?;
        Ok(FESpace2D { mesh, x, y, h1 })
    }

    pub fn nx(&self) -> usize {
        self.x.dim()
    }

    pub fn ny(&self) -> usize {
        self.y.dim()
    }

    pub fn dim(&self) -> usize {
        self.nx() * self.ny()
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix + self.nx() * iy
    }

    /// `inv[old] = new` renumbering to y-fastest order when that shrinks the band.
    pub fn band_ordering(&self) -> Option<Vec<usize>> {
        let (nx, ny) = (self.nx(), self.ny());
        if ny >= nx {
            return None;
        }
        let mut inv = vec![0; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                inv[ix + nx * iy] = iy + ny * ix;
            }
        }
        Some(inv)
    }

    /// Apply `a_y ⊗ b_x + c_y ⊗ d_x` to a vector in x-fastest ordering.
    fn kron_apply(&self, v: &[f64], bx: &SymTridiag, ay: &SymTridiag, dx: &SymTridiag, cy: &SymTridiag) -> Vec<f64> {
        let (nx, ny) = (self.nx(), self.ny());
        let mut bxv = vec![0.0; nx * ny];
        let mut dxv = vec![0.0; nx * ny];
        for iy in 0..ny {
            let row = &v[iy * nx..(iy + 1) * nx];
            bxv[iy * nx..(iy + 1) * nx].copy_from_slice(&bx.mul_vec(row));
            dxv[iy * nx..(iy + 1) * nx].copy_from_slice(&dx.mul_vec(row));
        }
        let mut out = vec![0.0; nx * ny];
        for iy in 0..ny {
            for jy in iy.saturating_sub(1)..(iy + 2).min(ny) {
                let (a, c) = (ay.get(iy, jy), cy.get(iy, jy));
                for ix in 0..nx {
                    out[iy * nx + ix] += a * bxv[jy * nx + ix] + c * dxv[jy * nx + ix];
                }
            }
        }
        out
    }

    /// H¹-seminorm Gram applied to a vector.
    pub fn h1_semi_apply(&self, v: &[f64]) -> Vec<f64> {
        self.kron_apply(v, &self.x.stiffness, &self.y.mass, &self.x.mass, &self.y.stiffness)
    }

    /// L² Gram applied to a vector.
    pub fn mass_apply(&self, v: &[f64]) -> Vec<f64> {
        let zero = SymTridiag::zeros(self.ny());
        let zx = SymTridiag::zeros(self.nx());
        self.kron_apply(v, &self.x.mass, &self.y.mass, &zx, &zero)
    }

    pub fn h1_semi_norm(&self, v: &[f64]) -> f64 {
        dotv(v, &self.h1_semi_apply(v)).max(0.0).sqrt()
    }

    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        dotv(v, &self.mass_apply(v)).max(0.0).sqrt()
    }

    /// Sparse H¹-seminorm Gram.
    pub fn h1_semi_gram(&self) -> Csr {
        let (nx, ny) = (self.nx(), self.ny());
        let mut t = Vec::with_capacity(9 * nx * ny);
        for iy in 0..ny {
            for jy in iy.saturating_sub(1)..(iy + 2).min(ny) {
                for ix in 0..nx {
                    for jx in ix.saturating_sub(1)..(ix + 2).min(nx) {
                        let v = self.y.mass.get(iy, jy) * self.x.stiffness.get(ix, jx)
                            + self.y.stiffness.get(iy, jy) * self.x.mass.get(ix, jx);
                        t.push((self.index(ix, iy), self.index(jx, jy), v));
                    }
                }
            }
        }
        Csr::from_triplets(nx * ny, t)
    }

    /// Riesz representer of a functional in the H¹-seminorm, and the dual norm.
    pub fn riesz_h1(&self, functional: &[f64]) -> (Vec<f64>, f64) {
        let r = self.h1.solve(functional);
        let n = dotv(functional, &r).max(0.0).sqrt();
        (r, n)
    }

    /// Nodal values on the full node grid (boundary included), row-major in y.
    pub fn to_nodal(&self, v: &[f64]) -> DMatrix<f64> {
        let (nnx, nny) = (self.mesh.mesh_x.n_nodes(), self.mesh.mesh_y.n_nodes());
        let mut out = DMatrix::zeros(nny, nnx);
        for iy in 0..self.ny() {
            for ix in 0..self.nx() {
                out[(iy + 1, ix + 1)] = v[self.index(ix, iy)];
            }
        }
        out
    }

    pub fn interpolate<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for iy in 0..self.ny() {
            let y = self.mesh.mesh_y.nodes[iy + 1];
            for ix in 0..self.nx() {
                v[self.index(ix, iy)] = f(self.mesh.mesh_x.nodes[ix + 1], y);
            }
        }
        v
    }
}

pub(crate) fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solver for `M_y ⊗ K_x + K_y ⊗ M_x` by diagonalising the smaller direction.
#[derive(Debug, Clone)]
struct TensorSpdSolver {
    nx: usize,
    ny: usize,
    along_y: bool,
    /// Generalised eigenvectors (columns) of the diagonalised direction, mass-orthonormal.
    vecs: DMatrix<f64>,
    /// Factorised shifted 1D operators of the other direction, one per eigenvalue.
    lus: Vec<crate::linalg::BandLu>,
}

impl TensorSpdSolver {
    fn new(kx: &SymTridiag, mx: &SymTridiag, my: &SymTridiag, ky: &SymTridiag) -> Result<Self> {
        let (nx, ny) = (kx.dim(), ky.dim());
        let along_y = ny <= nx;
        let (kd, md, ko, mo) = if along_y { (ky, my, kx, mx) } else { (kx, mx, ky, my) };
        let (lam, vecs) = generalized_eigen(&kd.to_dense(), &md.to_dense())?;
        let mut lus = Vec::with_capacity(lam.len());
        for &l in &lam {
            let op: BandMatrix = ko.axpy(l, mo).to_band();
            lus.push(op.factor()?);
        }
        Ok(TensorSpdSolver {
            nx,
            ny,
            along_y,
            vecs,
            lus,
        })
    }

    fn solve(&self, r: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let v = &self.vecs;
        let nd = v.ncols();
        let mut out = vec![0.0; nx * ny];
        if self.along_y {
            // r viewed as ny rows of length nx.
            for j in 0..nd {
                let mut rhs = vec![0.0; nx];
                for iy in 0..ny {
                    let c = v[(iy, j)];
                    if c != 0.0 {
                        for ix in 0..nx {
                            rhs[ix] += c * r[iy * nx + ix];
                        }
                    }
                }
                let w = self.lus[j].solve(&rhs);
                for iy in 0..ny {
                    let c = v[(iy, j)];
                    for ix in 0..nx {
                        out[iy * nx + ix] += c * w[ix];
                    }
                }
            }
        } else {
            for j in 0..nd {
                let mut rhs = vec![0.0; ny];
                for iy in 0..ny {
                    let row = &r[iy * nx..(iy + 1) * nx];
                    rhs[iy] = (0..nx).map(|ix| v[(ix, j)] * row[ix]).sum();
                }
                let w = self.lus[j].solve(&rhs);
                for iy in 0..ny {
                    for ix in 0..nx {
                        out[iy * nx + ix] += v[(ix, j)] * w[iy];
                    }
                }
            }
        }
        out
    }
}

/// Solves `K v = λ M v` with `M` SPD; eigenvectors returned M-orthonormal, eigenvalues ascending.
pub fn generalized_eigen(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let ch = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("mass matrix not positive definite".into()))?;
    let l = ch.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Cholesky factor not invertible".into()))?;
    let c = &linv * k * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let lam: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let q = DMatrix::from_fn(k.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    let vecs = linv.transpose() * q;
    Ok((lam, vecs))
}

/// Values of the two local P1 shape functions and their derivatives at reference point `t`.
#[inline]
pub fn p1_local(t: f64, h: f64) -> ([f64; 2], [f64; 2]) {
    ([1.0 - t, t], [-1.0 / h, 1.0 / h])
}

/// Evaluate a P1 function given by nodal values at `y`.
pub fn eval_p1(mesh: &Mesh1D, nodal: &[f64], y: f64) -> f64 {
    let e = mesh.locate(y);
    let t = (y - mesh.nodes[e]) / mesh.h(e);
    nodal[e] * (1.0 - t) + nodal[e + 1] * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interval_mesh_nodes() {
        assert_eq!(build_interval_mesh(0.0, 2.0, 2).unwrap().nodes, vec![0.0, 1.0, 2.0]);
        assert_eq!(build_interval_mesh(0.0, 1.0, 1).unwrap().nodes, vec![0.0, 1.0]);
        let m = build_interval_mesh(0.0, 2.0, 400).unwrap();
        assert_eq!(m.n_nodes(), 401);
        assert_relative_eq!(m.h(17), 0.005, epsilon = 1e-14);
        assert!(build_interval_mesh(1.0, 1.0, 3).is_err());
        assert!(build_interval_mesh(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn p1_gram_two_elements() {
        let sp = FESpace1D::new(build_interval_mesh(0.0, 1.0, 2).unwrap(), Boundary::Free);
        let m = sp.mass.to_dense();
        let k = sp.stiffness.to_dense();
        let m_ref = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 4.0, 1.0, 0.0, 1.0, 2.0]) / 12.0;
        let k_ref = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]) * 2.0;
        assert!((m - m_ref).amax() < 1e-15);
        assert!((k.clone() - k_ref).amax() < 1e-14);
        for i in 0..3 {
            assert!(k.row(i).sum().abs() < 1e-14);
        }
    }

    #[test]
    fn riesz_identity_and_zero() {
        let g = DMatrix::<f64>::identity(4, 4);
        let f = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let (r, n) = riesz_represent(&f, &g).unwrap();
        assert!((r - &f).amax() < 1e-15);
        assert_relative_eq!(n, f.norm(), epsilon = 1e-14);
        let (r0, n0) = riesz_represent(&DVector::zeros(4), &g).unwrap();
        assert_eq!(n0, 0.0);
        assert_eq!(r0.amax(), 0.0);
    }

    #[test]
    fn transverse_quadrature_linear() {
        let sp = FESpace1D::new(build_interval_mesh(0.0, 1.0, 64).unwrap(), Boundary::Free);
        let u: Vec<f64> = sp.mesh.nodes.clone();
        let one = vec![1.0; u.len()];
        assert_relative_eq!(transverse_quadrature(&u, &one, &sp.mass), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn h1_gram_matches_direct_assembly() {
        let mesh = TensorMesh2D {
            mesh_x: build_interval_mesh(0.0, 2.0, 4).unwrap(),
            mesh_y: build_interval_mesh(0.0, 1.0, 4).unwrap(),
        };
        let sp = FESpace2D::new(mesh).unwrap();
        let g = sp.h1_semi_gram().to_dense();
        // Element loop with 2x2 Gauss on bilinear shape functions.
        let (nnx, nny) = (5usize, 5usize);
        let mut full = DMatrix::<f64>::zeros(nnx * nny, nnx * nny);
        let gp = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
        let (hx, hy) = (0.5, 0.25);
        for ey in 0..4 {
            for ex in 0..4 {
                for &s in &gp {
                    for &t in &gp {
                        let w = 0.25 * hx * hy;
                        let loc = [(0, 0), (1, 0), (0, 1), (1, 1)];
                        let grad = |a: usize, b: usize| {
                            let nx = if a == 0 { 1.0 - s } else { s };
                            let ny = if b == 0 { 1.0 - t } else { t };
                            let dx = if a == 0 { -1.0 } else { 1.0 } / hx;
                            let dy = if b == 0 { -1.0 } else { 1.0 } / hy;
                            (dx * ny, nx * dy)
                        };
                        for &(a, b) in &loc {
                            for &(c, d) in &loc {
                                let (g1, g2) = (grad(a, b), grad(c, d));
                                let i = (ex + a) + nnx * (ey + b);
                                let j = (ex + c) + nnx * (ey + d);
                                full[(i, j)] += w * (g1.0 * g2.0 + g1.1 * g2.1);
                            }
                        }
                    }
                }
            }
        }
        for iy in 0..3 {
            for ix in 0..3 {
                for jy in 0..3 {
                    for jx in 0..3 {
                        let a = g[(sp.index(ix, iy), sp.index(jx, jy))];
                        let b = full[((ix + 1) + nnx * (iy + 1), (jx + 1) + nnx * (jy + 1))];
                        assert!((a - b).abs() < 1e-12);
                    }
                }
            }
        }
        let _ = nny;
    }

    #[test]
    fn fast_riesz_matches_dense() {
        for (nx, ny) in [(7, 4), (4, 9)] {
            let mesh = TensorMesh2D {
                mesh_x: build_interval_mesh(0.0, 2.0, nx).unwrap(),
                mesh_y: build_interval_mesh(0.0, 1.0, ny).unwrap(),
            };
            let sp = FESpace2D::new(mesh).unwrap();
            let f: Vec<f64> = (0..sp.dim()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
            let (r, n) = sp.riesz_h1(&f);
            let (rd, nd) = riesz_represent(&DVector::from_vec(f.clone()), &sp.h1_semi_gram().to_dense()).unwrap();
            for i in 0..sp.dim() {
                assert!((r[i] - rd[i]).abs() < 1e-10 * rd.amax());
            }
            assert_relative_eq!(n, nd, max_relative = 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn stiffness_quadratic_form_matches_midpoint(vals in proptest::collection::vec(-3.0f64..3.0, 3..20), stretch in 0.1f64..3.0) {
            let n = vals.len() + 1;
            let mut nodes = vec![0.0];
            for i in 0..n { nodes.push(nodes[i] + stretch * (1.0 + 0.3 * ((i * 7 % 5) as f64))); }
            let mesh = Mesh1D { a: 0.0, b: *nodes.last().unwrap(), nodes };
            let sp = FESpace1D::new(mesh, Boundary::ZeroTrace);
            let q = sp.stiffness.quad(&vals, &vals);
            let nodal = sp.to_nodal(&vals);
            let mut direct = 0.0;
            for e in 0..sp.mesh.n_elem() {
                let s = (nodal[e + 1] - nodal[e]) / sp.mesh.h(e);
                direct += s * s * sp.mesh.h(e);
            }
            proptest::prop_assert!((q - direct).abs() <= 1e-12 * direct.max(1e-300));
            let md = sp.mass.to_dense();
            proptest::prop_assert!((md.clone() - md.transpose()).amax() == 0.0);
            let eig = md.symmetric_eigenvalues();
            proptest::prop_assert!(eig.min() > 0.0);
        }

        #[test]
        fn riesz_norm_invariant_under_congruence(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
            let g = &a * a.transpose() + DMatrix::identity(5, 5);
            let f = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
            let t = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0)) + DMatrix::identity(5, 5) * 3.0;
            // Basis change v = T w: gram becomes T^T G T, functional T^T f.
            let (_, n1) = riesz_represent(&f, &g).unwrap();
            let (_, n2) = riesz_represent(&(t.transpose() * &f), &(t.transpose() * &g * &t)).unwrap();
            proptest::prop_assert!((n1 - n2).abs() <= 1e-10 * n1.max(1e-12));
            // Dense oracle: sup over the gram unit ball via the eigenbasis.
            let eig = SymmetricEigen::new(g.clone());
            let coeffs = eig.eigenvectors.transpose() * &f;
            let oracle: f64 = coeffs.iter().zip(eig.eigenvalues.iter()).map(|(c, l)| c * c / l).sum::<f64>().sqrt();
            proptest::prop_assert!((n1 - oracle).abs() <= 1e-10 * oracle);
        }
    }
}
