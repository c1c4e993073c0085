//! Greedy selection of interpolating functionals (magic points or local averages)
//! on an interval, with cardinal functions and Lebesgue constants.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SymTridiag;
use crate::mesh::Mesh1D;
use crate::pod::{compute_pod, Truncation};

/// Relative size under which a greedy residual counts as zero.
pub const UNISOLVENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    /// Continuous piecewise linears, one coefficient per mesh node (boundary included).
    P1,
    /// One constant per element.
    PiecewiseConstant,
}

/// Discrete function space on the transverse interval, used for operator components.
#[derive(Debug, Clone)]
pub struct FnSpace {
    pub kind: SpaceKind,
    pub mesh: Mesh1D,
    mass: SymTridiag,
}

impl FnSpace {
    pub fn new(kind: SpaceKind, mesh: Mesh1D) -> Self {
        let mut s = FnSpace {
            kind,
            mass: SymTridiag::zeros(0),
            mesh,
        };
        s.mass = s.restricted_mass(s.mesh.a, s.mesh.b);
        s
    }

    pub fn p1(mesh: Mesh1D) -> Self {
        Self::new(SpaceKind::P1, mesh)
    }

    pub fn piecewise_constant(mesh: Mesh1D) -> Self {
        Self::new(SpaceKind::PiecewiseConstant, mesh)
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            SpaceKind::P1 => self.mesh.n_nodes(),
            SpaceKind::PiecewiseConstant => self.mesh.n_elem(),
        }
    }

    pub fn mass(&self) -> &SymTridiag {
        &self.mass
    }

    /// Coordinate attached to a degree of freedom (node, or element midpoint).
    pub fn dof_coordinate(&self, i: usize) -> f64 {
        match self.kind {
            SpaceKind::P1 => self.mesh.nodes[i],
            SpaceKind::PiecewiseConstant => 0.5 * (self.mesh.nodes[i] + self.mesh.nodes[i + 1]),
        }
    }

    fn overlap(&self, e: usize, a: f64, b: f64) -> Option<(f64, f64)> {
        let s = self.mesh.nodes[e].max(a);
        let t = self.mesh.nodes[e + 1].min(b);
        (t > s).then_some((s, t))
    }

    fn elements_touching(&self, a: f64, b: f64) -> std::ops::Range<usize> {
        let lo = self.mesh.locate(a);
        let hi = self.mesh.locate(b);
        lo..(hi + 1).min(self.mesh.n_elem())
    }

    /// Mass matrix of the inner product restricted to `[a, b]`, integrated exactly.
    pub fn restricted_mass(&self, a: f64, b: f64) -> SymTridiag {
        let mut m = SymTridiag::zeros(self.dim());
        for e in self.elements_touching(a, b) {
            let Some((s, t)) = self.overlap(e, a, b) else { continue };
            match self.kind {
                SpaceKind::PiecewiseConstant => m.diag[e] += t - s,
                SpaceKind::P1 => {
                    let (y0, h) = (self.mesh.nodes[e], self.mesh.h(e));
                    let shape = |y: f64| {
                        let r = (y - y0) / h;
                        [1.0 - r, r]
                    };
                    // Simpson is exact for the quadratic products.
                    let pts = [(s, 1.0), (0.5 * (s + t), 4.0), (t, 1.0)];
                    let mut loc = [[0.0; 2]; 2];
                    for (y, w) in pts {
                        let v = shape(y);
                        for i in 0..2 {
                            for j in 0..2 {
                                loc[i][j] += w * (t - s) / 6.0 * v[i] * v[j];
                            }
                        }
                    }
                    m.diag[e] += loc[0][0];
                    m.diag[e + 1] += loc[1][1];
                    m.off[e] += loc[0][1];
                }
            }
        }
        m
    }

    /// Degrees of freedom whose support meets `[a, b]` with positive measure.
    pub fn active_dofs(&self, a: f64, b: f64) -> Vec<usize> {
        let mut out = Vec::new();
        for e in self.elements_touching(a, b) {
            if self.overlap(e, a, b).is_none() {
                continue;
            }
            match self.kind {
                SpaceKind::PiecewiseConstant => out.push(e),
                SpaceKind::P1 => {
                    for i in [e, e + 1] {
                        if out.last() != Some(&i) {
                            out.push(i);
                        }
                    }
                }
            }
        }
        out
    }

    /// Weights `w` with `sum_i w_i v_i = int_a^b v`.
    pub fn integral_weights(&self, a: f64, b: f64) -> Vec<(usize, f64)> {
        let mut acc: Vec<(usize, f64)> = Vec::new();
        let mut push = |i: usize, w: f64| match acc.last_mut() {
            Some(last) if last.0 == i => last.1 += w,
            _ => acc.push((i, w)),
        };
        for e in self.elements_touching(a, b) {
            let Some((s, t)) = self.overlap(e, a, b) else { continue };
            match self.kind {
                SpaceKind::PiecewiseConstant => push(e, t - s),
                SpaceKind::P1 => {
                    let (y0, h) = (self.mesh.nodes[e], self.mesh.h(e));
                    let (rs, rt) = ((s - y0) / h, (t - y0) / h);
                    let len = t - s;
                    push(e, len * (1.0 - 0.5 * (rs + rt)));
                    push(e + 1, len * 0.5 * (rs + rt));
                }
            }
        }
        acc
    }

    pub fn eval(&self, coeffs: &[f64], y: f64) -> f64 {
        let e = self.mesh.locate(y);
        match self.kind {
            SpaceKind::PiecewiseConstant => coeffs[e],
            SpaceKind::P1 => {
                let r = (y - self.mesh.nodes[e]) / self.mesh.h(e);
                coeffs[e] * (1.0 - r) + coeffs[e + 1] * r
            }
        }
    }

    pub fn restricted_norm(&self, v: &[f64], a: f64, b: f64) -> f64 {
        self.restricted_mass(a, b).quad(v, v).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionalKind {
    Point { dof: usize },
    Average { a: f64, b: f64 },
}

/// A linear functional represented by sparse weights over space coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    pub kind: FunctionalKind,
    pub weights: Vec<(usize, f64)>,
}

impl Functional {
    pub fn point(dof: usize) -> Self {
        Functional {
            kind: FunctionalKind::Point { dof },
            weights: vec![(dof, 1.0)],
        }
    }

    /// L2-normalised mean over `[a, b]`.
    pub fn average(space: &FnSpace, a: f64, b: f64) -> Self {
        let s = 1.0 / (b - a).sqrt();
        let weights = space.integral_weights(a, b).into_iter().map(|(i, w)| (i, w * s)).collect();
        Functional {
            kind: FunctionalKind::Average { a, b },
            weights,
        }
    }

    #[inline]
    pub fn apply(&self, v: &[f64]) -> f64 {
        self.weights.iter().map(|&(i, w)| w * v[i]).sum()
    }

    pub fn apply_column(&self, m: &DMatrix<f64>, col: usize) -> f64 {
        self.weights.iter().map(|&(i, w)| w * m[(i, col)]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictKind {
    PointEval,
    LocalAverage,
}

impl std::str::FromStr for DictKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "eim" | "point" => Ok(DictKind::PointEval),
            "geim" | "average" => Ok(DictKind::LocalAverage),
            other => Err(Error::Config(format!("unknown interpolation mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dictionary {
    pub kind: DictKind,
    /// Deepest dyadic level for local averages.
    pub depth: usize,
}

impl Dictionary {
    pub fn points() -> Self {
        Dictionary {
            kind: DictKind::PointEval,
            depth: 6,
        }
    }

    pub fn averages(depth: usize) -> Self {
        Dictionary {
            kind: DictKind::LocalAverage,
            depth,
        }
    }

    /// Candidate functionals restricted to `[a, b]`.
    pub fn candidates(&self, space: &FnSpace, a: f64, b: f64) -> Vec<Functional> {
        let tol = 1e-12 * space.mesh.length();
        match self.kind {
            DictKind::PointEval => (0..space.dim())
                .filter(|&i| {
                    let c = space.dof_coordinate(i);
                    c >= a - tol && c <= b + tol
                })
                .map(Functional::point)
                .collect(),
            DictKind::LocalAverage => {
                let (y0, len) = (space.mesh.a, space.mesh.length());
                let mut out = Vec::new();
                for d in 0..=self.depth {
                    let parts = 1usize << d;
                    let w = len / parts as f64;
                    for j in 0..parts {
                        let (s, t) = (y0 + w * j as f64, y0 + w * (j + 1) as f64);
                        if s >= a - tol && t <= b + tol {
                            out.push(Functional::average(space, s, t));
                        }
                    }
                }
                out
            }
        }
    }
}

/// Interpolation system on one interval: selected functionals, greedy residual
/// functions `q`, the triangular matrix `B_ij = sigma_i(q_j)` and cardinal functions.
#[derive(Debug, Clone)]
pub struct InterpSystem {
    pub a: f64,
    pub b: f64,
    pub functionals: Vec<Functional>,
    pub q: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub theta: DMatrix<f64>,
}

impl InterpSystem {
    pub fn empty(dim: usize, a: f64, b: f64) -> Self {
        InterpSystem {
            a,
            b,
            functionals: Vec::new(),
            q: DMatrix::zeros(dim, 0),
            b_mat: DMatrix::zeros(0, 0),
            theta: DMatrix::zeros(dim, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    pub fn observe(&self, v: &[f64]) -> Vec<f64> {
        self.functionals.iter().map(|f| f.apply(v)).collect()
    }

    /// Coefficients in the `q` basis matching the observations (forward substitution).
    pub fn interpolate(&self, obs: &[f64]) -> DVector<f64> {
        let k = self.len();
        let mut alpha = DVector::zeros(k);
        for i in 0..k {
            let mut s = obs[i];
            for j in 0..i {
                s -= self.b_mat[(i, j)] * alpha[j];
            }
            alpha[i] = s / self.b_mat[(i, i)];
        }
        alpha
    }

    pub fn reconstruct(&self, obs: &[f64]) -> DVector<f64> {
        &self.q * self.interpolate(obs)
    }

    /// First `k` functionals of the greedy sequence (valid because the greedy is nested).
    pub fn truncate(&self, k: usize) -> InterpSystem {
        let k = k.min(self.len());
        let q = self.q.columns(0, k).into_owned();
        let b_mat = self.b_mat.view((0, 0), (k, k)).into_owned();
        let theta = cardinal(&q, &b_mat);
        InterpSystem {
            a: self.a,
            b: self.b,
            functionals: self.functionals[..k].to_vec(),
            q,
            b_mat,
            theta,
        }
    }

    /// Check triangularity, unit diagonal and entry bound.
    pub fn validate(&self) -> Result<()> {
        let k = self.len();
        if self.b_mat.shape() != (k, k) || self.q.ncols() != k || self.theta.ncols() != k {
            return Err(Error::Validation("interpolation system dimensions inconsistent".into()));
        }
        for i in 0..k {
            if (self.b_mat[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!("B diagonal entry {i} is {}", self.b_mat[(i, i)])));
            }
            for j in 0..k {
                let v = self.b_mat[(i, j)];
                if j > i && v != 0.0 {
                    return Err(Error::Validation(format!("B not lower triangular at ({i},{j})")));
                }
                if v.abs() > 1.0 + 1e-10 {
                    return Err(Error::Validation(format!("B entry ({i},{j}) = {v} exceeds 1")));
                }
            }
        }
        Ok(())
    }

    /// Upper bound `2^(k-1) max ||q_i||` or the operator-norm Lebesgue constant.
    pub fn lebesgue_bound(&self, space: &FnSpace, mode: LebesgueMode) -> f64 {
        let k = self.len();
        if k == 0 {
            return 0.0;
        }
        let mi = space.restricted_mass(self.a, self.b);
        match mode {
            LebesgueMode::Geometric => {
                let maxq = (0..k)
                    .map(|j| {
                        let c: Vec<f64> = self.q.column(j).iter().copied().collect();
                        mi.quad(&c, &c).max(0.0).sqrt()
                    })
                    .fold(0.0, f64::max);
                2f64.powi(k as i32 - 1) * maxq
            }
            LebesgueMode::Svd => self.lebesgue_operator_norm(space, &mi),
        }
    }

    fn lebesgue_operator_norm(&self, space: &FnSpace, mi: &SymTridiag) -> f64 {
        let active = space.active_dofs(self.a, self.b);
        let na = active.len();
        let g = DMatrix::from_fn(na, na, |r, c| mi.get(active[r], active[c]));
        let Some(chol) = g.clone().cholesky() else {
            return f64::INFINITY;
        };
        let k = self.len();
        let mut pos = vec![usize::MAX; space.dim()];
        for (r, &i) in active.iter().enumerate() {
            pos[i] = r;
        }
        // Riesz representers of the functionals within the restricted space.
        let mut w = DMatrix::zeros(na, k);
        for (j, f) in self.functionals.iter().enumerate() {
            for &(i, v) in &f.weights {
                if pos[i] != usize::MAX {
                    w[(pos[i], j)] += v;
                }
            }
        }
        let reps = chol.solve(&w);
        let qa = DMatrix::from_fn(na, k, |r, c| self.q[(active[r], c)]);
        let l = chol.l();
        // Orthonormal coordinates: x -> L^T x.
        let ew = (l.transpose() * qa).qr().q();
        let es = (l.transpose() * reps).qr().q();
        let x = es.transpose() * ew;
        let smin = x.singular_values().min();
        if smin <= 0.0 {
            f64::INFINITY
        } else {
            1.0 / smin
        }
    }

    /// `max_y sum_j |theta_j(y)|` over the degrees of freedom in the interval.
    pub fn lebesgue_sup(&self, space: &FnSpace) -> f64 {
        let tol = 1e-12 * space.mesh.length();
        let mut best: f64 = 0.0;
        for i in 0..space.dim() {
            let c = space.dof_coordinate(i);
            if c < self.a - tol || c > self.b + tol {
                continue;
            }
            let s: f64 = self.theta.row(i).iter().map(|v| v.abs()).sum();
            best = best.max(s);
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LebesgueMode {
    Geometric,
    Svd,
}

/// Cardinal functions `theta` with `sigma_i(theta_j) = delta_ij`.
pub fn cardinal(q: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let k = b.nrows();
    if k == 0 {
        return DMatrix::zeros(q.nrows(), 0);
    }
    let binv = b
        .solve_lower_triangular(&DMatrix::identity(k, k))
        .expect("unit lower triangular matrix is invertible");
    q * binv
}

/// Greedy selection of one functional per input function.
pub fn select_interpolants(
    space: &FnSpace,
    basis: &DMatrix<f64>,
    a: f64,
    b: f64,
    dict: &Dictionary,
) -> Result<InterpSystem> {
    let cands = dict.candidates(space, a, b);
    select_from(space, basis, a, b, &cands)
}

pub fn select_from(
    space: &FnSpace,
    basis: &DMatrix<f64>,
    a: f64,
    b: f64,
    cands: &[Functional],
) -> Result<InterpSystem> {
    let (dim, k) = basis.shape();
    if dim != space.dim() {
        return Err(Error::InvalidInput(format!("basis has {dim} rows, space has {}", space.dim())));
    }
    if k == 0 {
        return Ok(InterpSystem::empty(dim, a, b));
    }
    if cands.is_empty() {
        return Err(Error::Empty(format!("no dictionary candidates in [{a}, {b}]")));
    }
    let mi = space.restricted_mass(a, b);
    let nc = cands.len();
    // Candidate values of the input functions and of the accumulated q's.
    let vals = DMatrix::from_fn(nc, k, |c, j| cands[c].apply_column(basis, j));
    let mut qv = DMatrix::<f64>::zeros(nc, k);
    let mut q = DMatrix::<f64>::zeros(dim, k);
    let mut bm = DMatrix::<f64>::zeros(k, k);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for m in 0..k {
        let rhs: Vec<f64> = chosen.iter().map(|&c| vals[(c, m)]).collect();
        let mut alpha = vec![0.0; m];
        for i in 0..m {
            let mut s = rhs[i];
            for j in 0..i {
                s -= bm[(i, j)] * alpha[j];
            }
            alpha[i] = s;
        }
        let mut r = basis.column(m).into_owned();
        let mut rv = vals.column(m).into_owned();
        for j in 0..m {
            r.axpy(-alpha[j], &q.column(j), 1.0);
            rv.axpy(-alpha[j], &qv.column(j), 1.0);
        }
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for c in 0..nc {
            if rv[c].abs() > best_abs {
                best_abs = rv[c].abs();
                best = c;
            }
        }
        let rs: Vec<f64> = r.iter().copied().collect();
        let rnorm = mi.quad(&rs, &rs).max(0.0).sqrt();
        if !(rnorm > 0.0) || best_abs < UNISOLVENCE_TOL * rnorm {
            return Err(Error::NotUnisolvent(format!(
                "step {} on [{a}, {b}]: residual functional value {best_abs:e}, residual norm {rnorm:e}",
                m + 1
            )));
        }
        let piv = rv[best];
        q.set_column(m, &(r / piv));
        qv.set_column(m, &(rv / piv));
        for i in 0..m {
            bm[(m, i)] = qv[(best, i)];
        }
        bm[(m, m)] = 1.0;
        chosen.push(best);
    }
    let theta = cardinal(&q, &bm);
    Ok(InterpSystem {
        a,
        b,
        functionals: chosen.iter().map(|&c| cands[c].clone()).collect(),
        q,
        b_mat: bm,
        theta,
    })
}

/// Orthonormal basis (in `L2(a, b)`) of the span of `basis` restricted to `[a, b]`,
/// embedded back into the full coefficient space with zeros off the active dofs.
pub fn local_pod(space: &FnSpace, basis: &DMatrix<f64>, a: f64, b: f64, rel_cut: f64) -> Result<DMatrix<f64>> {
    let active = space.active_dofs(a, b);
    let (dim, k) = basis.shape();
    if active.is_empty() || k == 0 {
        return Ok(DMatrix::zeros(dim, 0));
    }
    let mi = space.restricted_mass(a, b);
    let na = active.len();
    let g = DMatrix::from_fn(na, na, |r, c| mi.get(active[r], active[c]));
    let snaps = DMatrix::from_fn(na, k, |r, c| basis[(active[r], c)]);
    if snaps.amax() == 0.0 {
        return Ok(DMatrix::zeros(dim, 0));
    }
    let pod = compute_pod(&snaps, &g, Truncation::Full)?;
    let lead = pod.eigenvalues.first().copied().unwrap_or(0.0);
    let keep = pod.eigenvalues.iter().take_while(|&&l| l > rel_cut * lead).count();
    let mut out = DMatrix::zeros(dim, keep);
    for c in 0..keep {
        for (r, &i) in active.iter().enumerate() {
            out[(i, c)] = pod.basis[(r, c)];
        }
    }
    Ok(out)
}
