//! Sparse, banded and tridiagonal kernels.
//!
//! The solvers in this crate only ever see matrices coming from tensor-product
//! grids, so a banded LU with partial pivoting covers the direct path and a
//! BiCGSTAB with ILU(0) covers the iterative one.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix. `off[i]` holds entry (i, i+1).
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn zeros(n: usize) -> Self {
        SymTridiag {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i + 1 == j {
            self.off[i]
        } else if j + 1 == i {
            self.off[j]
        } else {
            0.0
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// Column-wise product with a dense matrix.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for c in 0..x.ncols() {
            let col: Vec<f64> = x.column(c).iter().copied().collect();
            let y = self.mul_vec(&col);
            out.column_mut(c).copy_from_slice(&y);
        }
        out
    }

    pub fn quad(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mul_vec(v).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    pub fn scaled(&self, s: f64) -> Self {
        SymTridiag {
            diag: self.diag.iter().map(|v| v * s).collect(),
            off: self.off.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &SymTridiag) -> Self {
        SymTridiag {
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a + s * b).collect(),
            off: self.off.iter().zip(&other.off).map(|(a, b)| a + s * b).collect(),
        }
    }

    pub fn to_band(&self) -> BandMatrix {
        let n = self.dim();
        let mut b = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            b.set(i, i, self.diag[i]);
            if i + 1 < n {
                b.set(i, i + 1, self.off[i]);
                b.set(i + 1, i, self.off[i]);
            }
        }
        b
    }

    /// Solve with a symmetric positive definite tridiagonal matrix.
    pub fn solve_spd(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 0..n {
            let sub = if i > 0 { self.off[i - 1] } else { 0.0 };
            let denom = self.diag[i] - if i > 0 { sub * c[i - 1] } else { 0.0 };
            if denom.abs() <= f64::MIN_POSITIVE || !denom.is_finite() {
                return Err(Error::Singular(format!("tridiagonal pivot {i} vanished")));
            }
            c[i] = if i + 1 < n { self.off[i] / denom } else { 0.0 };
            d[i] = (rhs[i] - if i > 0 { sub * d[i - 1] } else { 0.0 }) / denom;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }
}

/// Banded matrix in LAPACK `gbtrf` layout, with room for pivoting fill.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            ld,
            data: vec![0.0; ld * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ld + (self.kl + self.ku + i - j)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i <= j + self.kl && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                y[i] += self.data[self.idx(i, j)] * x[j];
            }
        }
        y
    }

    /// LU factorisation with partial pivoting (unblocked `gbtf2`).
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = self.data[self.idx(j, j)].abs();
            for t in 1..=km {
                let v = self.data[self.idx(j + t, j)].abs();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(format!("zero pivot in column {j}")));
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.data.swap(a, b);
                }
            }
            if km > 0 {
                let piv = self.data[self.idx(j, j)];
                for t in 1..=km {
                    let k = self.idx(j + t, j);
                    self.data[k] /= piv;
                }
                for c in (j + 1)..=ju {
                    let ujc = self.data[self.idx(j, c)];
                    if ujc == 0.0 {
                        continue;
                    }
                    for t in 1..=km {
                        let l = self.data[self.idx(j + t, j)];
                        let k = self.idx(j + t, c);
                        self.data[k] -= l * ujc;
                    }
                }
            }
        }
        debug_assert!(kv == self.kl + self.ku);
        Ok(BandLu { a: self, ipiv })
    }
}

/// Factorised band matrix; solves with the matrix and its transpose.
#[derive(Debug, Clone)]
pub struct BandLu {
    a: BandMatrix,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.a.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let a = &self.a;
        let n = a.n;
        let mut x = b.to_vec();
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap(j, p);
            }
            let km = a.kl.min(n - 1 - j);
            let xj = x[j];
            if xj != 0.0 {
                for t in 1..=km {
                    x[j + t] -= a.data[a.idx(j + t, j)] * xj;
                }
            }
        }
        let kv = a.kl + a.ku;
        for j in (0..n).rev() {
            x[j] /= a.data[a.idx(j, j)];
            let xj = x[j];
            if xj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    x[i] -= a.data[a.idx(i, j)] * xj;
                }
            }
        }
        x
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let a = &self.a;
        let n = a.n;
        let kv = a.kl + a.ku;
        let mut x = b.to_vec();
        for j in 0..n {
            let mut s = x[j];
            for i in j.saturating_sub(kv)..j {
                s -= a.data[a.idx(i, j)] * x[i];
            }
            x[j] = s / a.data[a.idx(j, j)];
        }
        for j in (0..n).rev() {
            let km = a.kl.min(n - 1 - j);
            let mut s = x[j];
            for t in 1..=km {
                s -= a.data[a.idx(j + t, j)] * x[j + t];
            }
            x[j] = s;
            let p = self.ipiv[j];
            if p != j {
                x.swap(j, p);
            }
        }
        x
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut trips: Vec<(usize, usize, f64)>) -> Self {
        trips.sort_unstable_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(trips.len());
        let mut values: Vec<f64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trips {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Csr {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                (self.indptr[r]..self.indptr[r + 1])
                    .map(|k| self.values[k] * x[self.indices[k]])
                    .sum()
            })
            .collect()
    }

    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.values[k] * x[r];
            }
        }
        y
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match row.binary_search(&c) {
            Ok(k) => self.values[self.indptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                d[(r, self.indices[k])] += self.values[k];
            }
        }
        d
    }

    /// Lower and upper bandwidth under the permutation `perm[new] = old`.
    pub fn bandwidths(&self, inv: Option<&[usize]>) -> (usize, usize) {
        let map = |i: usize| inv.map_or(i, |p| p[i]);
        let (mut kl, mut ku) = (0, 0);
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let (i, j) = (map(r), map(self.indices[k]));
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    /// Band copy with rows and columns renumbered by `inv[old] = new`.
    pub fn to_band(&self, inv: Option<&[usize]>) -> BandMatrix {
        let (kl, ku) = self.bandwidths(inv);
        let map = |i: usize| inv.map_or(i, |p| p[i]);
        let mut b = BandMatrix::zeros(self.n, kl, ku);
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                b.add(map(r), map(self.indices[k]), self.values[k]);
            }
        }
        b
    }
}

/// Incomplete LU with zero fill on the pattern of a CSR matrix.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: Csr,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &Csr) -> Result<Self> {
        let mut lu = a.clone();
        let n = a.n;
        let mut diag = vec![usize::MAX; n];
        for r in 0..n {
            for k in lu.indptr[r]..lu.indptr[r + 1] {
                if lu.indices[k] == r {
                    diag[r] = k;
                }
            }
            if diag[r] == usize::MAX {
                return Err(Error::Singular(format!("ILU(0): missing diagonal in row {r}")));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.indptr[i], lu.indptr[i + 1]);
            for k in start..end {
                pos[lu.indices[k]] = k;
            }
            for k in start..end {
                let col = lu.indices[k];
                if col >= i {
                    break;
                }
                let piv = lu.values[diag[col]];
                if piv == 0.0 {
                    return Err(Error::Singular(format!("ILU(0): zero pivot in row {col}")));
                }
                let l = lu.values[k] / piv;
                lu.values[k] = l;
                for kk in (diag[col] + 1)..lu.indptr[col + 1] {
                    let c = lu.indices[kk];
                    let p = pos[c];
                    if p != usize::MAX {
                        lu.values[p] -= l * lu.values[kk];
                    }
                }
            }
            for k in start..end {
                pos[lu.indices[k]] = usize::MAX;
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        let lu = &self.lu;
        let n = lu.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in lu.indptr[i]..self.diag[i] {
                s -= lu.values[k] * x[lu.indices[k]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (self.diag[i] + 1)..lu.indptr[i + 1] {
                s -= lu.values[k] * x[lu.indices[k]];
            }
            x[i] = s / lu.values[self.diag[i]];
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB. Returns the solution and the iteration count.
pub fn bicgstab(a: &Csr, b: &[f64], pre: &Ilu0, rtol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = a.n;
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            return Err(Error::LinearSolve("BiCGSTAB breakdown (rho = 0)".into()));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let phat = pre.apply(&p);
        v = a.mul_vec(&phat);
        let r0v = dot(&r0, &v);
        if r0v == 0.0 {
            return Err(Error::LinearSolve("BiCGSTAB breakdown (r0·v = 0)".into()));
        }
        alpha = rho / r0v;
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm2(&s) <= rtol * bnorm {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok((x, it));
        }
        let shat = pre.apply(&s);
        let t = a.mul_vec(&shat);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) <= rtol * bnorm {
            return Ok((x, it));
        }
        if omega == 0.0 {
            return Err(Error::LinearSolve("BiCGSTAB stagnated (omega = 0)".into()));
        }
    }
    Err(Error::LinearSolve(format!(
        "BiCGSTAB reached {max_iter} iterations without meeting rtol {rtol:e}"
    )))
}

/// Linear-solver selection for Newton steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearStrategy {
    /// Direct below the threshold on the number of unknowns, Krylov above.
    Auto(usize),
    Direct,
    Krylov,
}

impl Default for LinearStrategy {
    fn default() -> Self {
        LinearStrategy::Auto(20_000)
    }
}

/// Solves `a x = b`. `inv` optionally renumbers unknowns (`inv[old] = new`) to shrink the band.
pub fn solve_sparse(a: &Csr, b: &[f64], strategy: LinearStrategy, inv: Option<&[usize]>) -> Result<Vec<f64>> {
    let direct = match strategy {
        LinearStrategy::Auto(limit) => a.n <= limit,
        LinearStrategy::Direct => true,
        LinearStrategy::Krylov => false,
    };
    if direct {
        let lu = a.to_band(inv).factor()?;
        match inv {
            None => Ok(lu.solve(b)),
            Some(p) => {
                let mut bp = vec![0.0; a.n];
                for (old, &new) in p.iter().enumerate() {
                    bp[new] = b[old];
                }
                let xp = lu.solve(&bp);
                Ok(p.iter().map(|&new| xp[new]).collect())
            }
        }
    } else {
        let pre = Ilu0::new(a)?;
        let (x, _) = bicgstab(a, b, &pre, 1e-12, 20 * a.n.max(100))?;
        Ok(x)
    }
}

/// Factorised operator that can solve with itself and its transpose, honouring a renumbering.
#[derive(Debug, Clone)]
pub struct PermutedLu {
    lu: BandLu,
    inv: Option<Vec<usize>>,
}

impl PermutedLu {
    pub fn new(a: &Csr, inv: Option<Vec<usize>>) -> Result<Self> {
        let lu = a.to_band(inv.as_deref()).factor()?;
        Ok(PermutedLu { lu, inv })
    }

    fn fwd(&self, b: &[f64]) -> Vec<f64> {
        match &self.inv {
            None => b.to_vec(),
            Some(p) => {
                let mut bp = vec![0.0; b.len()];
                for (old, &new) in p.iter().enumerate() {
                    bp[new] = b[old];
                }
                bp
            }
        }
    }

    fn back(&self, x: Vec<f64>) -> Vec<f64> {
        match &self.inv {
            None => x,
            Some(p) => p.iter().map(|&new| x[new]).collect(),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.back(self.lu.solve(&self.fwd(b)))
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        self.back(self.lu.solve_transpose(&self.fwd(b)))
    }
}

/// Cholesky-based solve with a small dense SPD matrix.
pub fn dense_spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ch = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix not positive definite".into()))?;
    Ok(ch.solve(b))
}

/// Modified Gram–Schmidt (twice) of the columns of `v` in the inner product `gram`.
/// Columns whose remaining norm drops below `drop_tol` times their original norm are discarded.
pub fn orthonormalize<F>(v: &DMatrix<f64>, gram_apply: F, drop_tol: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut gcols: Vec<Vec<f64>> = Vec::new();
    for c in 0..v.ncols() {
        let mut x: Vec<f64> = v.column(c).iter().copied().collect();
        let gx = gram_apply(&x);
        let n0 = dot(&x, &gx).max(0.0).sqrt();
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for (q, gq) in cols.iter().zip(&gcols) {
                let a = dot(&x, gq);
                for (xi, qi) in x.iter_mut().zip(q) {
                    *xi -= a * qi;
                }
            }
        }
        let gx = gram_apply(&x);
        let nx = dot(&x, &gx).max(0.0).sqrt();
        if nx <= drop_tol * n0 {
            continue;
        }
        for xi in x.iter_mut() {
            *xi /= nx;
        }
        let gx: Vec<f64> = gx.iter().map(|g| g / nx).collect();
        cols.push(x);
        gcols.push(gx);
    }
    let nr = v.nrows();
    DMatrix::from_fn(nr, cols.len(), |i, j| cols[j][i])
}
