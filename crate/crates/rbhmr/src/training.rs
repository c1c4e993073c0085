//! Offline stage: adaptive parameter grid, snapshot generation, quadrature-count and
//! projection indicators, and the final reduction and collateral spaces.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eim::Dictionary;
use crate::epm::{enriched_count, run_adaptive_epm, EpmProjector, EpmSettings};
use crate::error::{Error, Result};
use crate::estimate::{brr_assemble, estimate_constants, DerivUnits, Estimator, FluxUnits, InfSupNorm};
use crate::linalg::orthonormalize;
use crate::mesh::{build_interval_mesh, FESpace2D, Mesh1D, TensorMesh2D};
use crate::pod::{compute_pod, count_for_tolerance, tail_sum, PodResult, Truncation};
use crate::reduced::{reconstruct, DerivativeUnits, JacobianMode, ReducedSolver};
use crate::reference::ReferenceSolver;
use crate::transverse::{Component, OperatorSnapshot, ParameterPoint, TransverseContext};

/// Per-point parameter ranges: dominant-direction breakpoints, profile values and slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBox {
    pub x_breaks: Vec<f64>,
    pub u_range: (f64, f64),
    pub du_range: (f64, f64),
}

impl ParameterBox {
    pub fn validate(&self) -> Result<()> {
        if self.x_breaks.len() < 2 || self.x_breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("x breakpoints must be increasing with at least two entries".into()));
        }
        if !(self.u_range.1 > self.u_range.0) || !(self.du_range.1 >= self.du_range.0) {
            return Err(Error::Config("empty profile range".into()));
        }
        Ok(())
    }

    /// Initial cells for `q` quadrature points: every combination of x-intervals.
    pub fn initial_cells(&self, q: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let nx = self.x_breaks.len() - 1;
        let total = nx.pow(q as u32);
        (0..total)
            .map(|mut code| {
                let mut lo = Vec::with_capacity(3 * q);
                let mut hi = Vec::with_capacity(3 * q);
                for _ in 0..q {
                    let i = code % nx;
                    code /= nx;
                    lo.extend([self.x_breaks[i], self.u_range.0, self.du_range.0]);
                    hi.extend([self.x_breaks[i + 1], self.u_range.1, self.du_range.1]);
                }
                (lo, hi)
            })
            .collect()
    }
}

/// Uniform draw from a box, with the quadrature points sorted by position.
/// Returns `None` for draws that are not admissible parameters.
fn draw(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64], x0: f64, x1: f64) -> Option<ParameterPoint> {
    let c: Vec<f64> = lo.iter().zip(hi).map(|(&a, &b)| if b > a { rng.random_range(a..b) } else { a }).collect();
    let mut triples: Vec<[f64; 3]> = c.chunks(3).map(|t| [t[0], t[1], t[2]]).collect();
    triples.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
    let flat: Vec<f64> = triples.iter().flatten().copied().collect();
    let mu = ParameterPoint::from_coords(&flat).ok()?;
    mu.check_admissible(x0, x1).ok()?;
    Some(mu)
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub mu: ParameterPoint,
    /// Transverse solution normalized to unit `L2` norm (zero stays zero).
    pub solution: Vec<f64>,
    pub operator: OperatorSnapshot,
}

/// Solve the transverse problem at `mu` and evaluate the operator on its solution.
pub fn snapshot(ctx: &TransverseContext, mu: &ParameterPoint) -> Result<Sample> {
    let sol = ctx.solve(mu)?;
    let operator = ctx.operator_snapshot(mu, &sol.coeffs)?;
    let n = ctx.space.l2_norm(&sol.coeffs);
    let solution = if n > 0.0 { sol.coeffs.iter().map(|v| v / n).collect() } else { sol.coeffs };
    Ok(Sample {
        mu: mu.clone(),
        solution,
        operator,
    })
}

/// Draw `count` admissible samples with converged snapshots from a box.
fn fill(ctx: &TransverseContext, rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64], count: usize, rejected: &mut usize) -> Result<Vec<Sample>> {
    let (x0, x1) = (ctx.case.x0, ctx.case.x1);
    let mut out = Vec::with_capacity(count);
    let max_attempts = 20 * count.max(1);
    let mut attempts = 0;
    while out.len() < count && attempts < max_attempts {
        attempts += 1;
        let Some(mu) = draw(rng, lo, hi, x0, x1) else {
            *rejected += 1;
            continue;
        };
        match snapshot(ctx, &mu) {
            Ok(s) => out.push(s),
            Err(e) => {
                log::warn!("rejected sample {:?}: {e}", mu.to_coords());
                *rejected += 1;
            }
        }
    }
    if out.is_empty() && count > 0 {
        return Err(Error::Divergence {
            reason: format!("no admissible sample in cell {lo:?}..{hi:?}"),
            history: Vec::new(),
        });
    }
    if out.len() < count {
        log::warn!("cell {lo:?}..{hi:?} kept {} of {count} samples", out.len());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Sweeps since the cell was created.
    pub age: usize,
    /// Refinement threshold inherited from the initial cell.
    pub sigma_thres: f64,
    pub samples: Vec<Sample>,
}

impl Cell {
    pub fn diam(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn sigma(&self) -> f64 {
        self.diam() * self.age as f64
    }

    /// The `2^P` children from bisecting every coordinate.
    pub fn children(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let p = self.lo.len();
        (0..(1usize << p))
            .map(|code| {
                let mut lo = self.lo.clone();
                let mut hi = self.hi.clone();
                for d in 0..p {
                    let mid = 0.5 * (self.lo[d] + self.hi[d]);
                    if code >> d & 1 == 0 {
                        hi[d] = mid;
                    } else {
                        lo[d] = mid;
                    }
                }
                (lo, hi)
            })
            .collect()
    }
}

/// How the age threshold for forced refinement is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaThreshold {
    /// `factor * ceil(diam) + 1` with the initial cell's diameter.
    Scaled(f64),
    Fixed(f64),
}

impl SigmaThreshold {
    pub fn value(&self, diam: f64) -> f64 {
        match *self {
            SigmaThreshold::Scaled(f) => f * diam.ceil() + 1.0,
            SigmaThreshold::Fixed(v) => v,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParameterGrid {
    pub cells: Vec<Cell>,
    /// Number of cells after each sweep.
    pub history: Vec<usize>,
}

impl ParameterGrid {
    pub fn initial(ctx: &TransverseContext, pbox: &ParameterBox, q: usize, n_xi: usize, thres: SigmaThreshold, rng: &mut ChaCha8Rng, rejected: &mut usize) -> Result<Self> {
        let mut cells = Vec::new();
        for (lo, hi) in pbox.initial_cells(q) {
            let samples = fill(ctx, rng, &lo, &hi, n_xi, rejected)?;
            let mut c = Cell {
                lo,
                hi,
                age: 0,
                sigma_thres: 0.0,
                samples,
            };
            c.sigma_thres = thres.value(c.diam());
            cells.push(c);
        }
        let n = cells.len();
        Ok(ParameterGrid { cells, history: vec![n] })
    }

    pub fn volume(&self) -> f64 {
        self.cells.iter().map(Cell::volume).sum()
    }

    pub fn n_samples(&self) -> usize {
        self.cells.iter().map(|c| c.samples.len()).sum()
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.cells.iter().flat_map(|c| c.samples.iter())
    }

    /// Cells marked for refinement: the `ceil(theta N)` smallest indicators plus every
    /// cell whose age indicator exceeds its threshold.
    pub fn mark(&self, eta: &[f64], theta: f64) -> Vec<bool> {
        let n = self.cells.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eta[a].total_cmp(&eta[b]).then(a.cmp(&b)));
        let count = ((theta * n as f64).ceil() as usize).min(n);
        let mut marked = vec![false; n];
        for &i in order.iter().take(count) {
            marked[i] = true;
        }
        for (i, c) in self.cells.iter().enumerate() {
            if c.sigma() > c.sigma_thres {
                marked[i] = true;
            }
        }
        marked
    }

    pub fn refine(&mut self, ctx: &TransverseContext, marked: &[bool], n_xi: usize, rng: &mut ChaCha8Rng, rejected: &mut usize) -> Result<()> {
        let mut next = Vec::with_capacity(self.cells.len());
        for (c, &m) in std::mem::take(&mut self.cells).into_iter().zip(marked) {
            if !m {
                next.push(Cell { age: c.age + 1, ..c });
                continue;
            }
            for (lo, hi) in c.children() {
                let samples = fill(ctx, rng, &lo, &hi, n_xi, rejected)?;
                next.push(Cell {
                    lo,
                    hi,
                    age: 0,
                    sigma_thres: c.sigma_thres,
                    samples,
                });
            }
        }
        self.cells = next;
        self.history.push(self.cells.len());
        Ok(())
    }
}

/// Snapshot matrices over a sample set: solutions and the five operator components.
#[derive(Debug, Clone)]
pub struct Manifolds {
    pub solutions: DMatrix<f64>,
    pub components: [DMatrix<f64>; 5],
}

impl Manifolds {
    pub fn from_samples<'a, I: IntoIterator<Item = &'a Sample>>(samples: I) -> Result<Self> {
        let samples: Vec<&Sample> = samples.into_iter().collect();
        if samples.is_empty() {
            return Err(Error::Empty("no samples".into()));
        }
        let n = samples.len();
        let sol = DMatrix::from_fn(samples[0].solution.len(), n, |i, j| samples[j].solution[i]);
        let components = Component::ALL.map(|c| {
            let rows = samples[0].operator.get(c).len();
            DMatrix::from_fn(rows, n, |i, j| samples[j].operator.get(c)[i])
        });
        Ok(Manifolds { solutions: sol, components })
    }

    pub fn len(&self) -> usize {
        self.solutions.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Settings of the empirical projection passes.
#[derive(Debug, Clone)]
pub struct ProjectionSettings {
    /// POD truncation of the operator manifolds before selection.
    pub eps_err: f64,
    pub eps_int: f64,
    pub n_max: usize,
    pub dict: Dictionary,
    /// Relative tolerance of the enriched count.
    pub tol_kprime: f64,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        ProjectionSettings {
            eps_err: 1e-9,
            eps_int: 1e-10,
            n_max: 0,
            dict: Dictionary::points(),
            tol_kprime: 1e-2,
        }
    }
}

impl ProjectionSettings {
    fn epm(&self) -> EpmSettings {
        EpmSettings {
            eps_int: self.eps_int,
            n_max: self.n_max,
            dict: self.dict,
        }
    }
}

/// Collateral basis of one operator component with its projection systems.
#[derive(Debug, Clone)]
pub struct CollateralUnit {
    pub component: Component,
    pub eigenvalues: Vec<f64>,
    /// POD modes up to the error truncation.
    pub modes: DMatrix<f64>,
    pub k: usize,
    pub k_enriched: usize,
    pub projector: EpmProjector,
    pub enriched: EpmProjector,
    samples: Option<DMatrix<f64>>,
    settings: EpmSettings,
}

impl CollateralUnit {
    pub fn build(ctx: &TransverseContext, component: Component, snapshots: &DMatrix<f64>, eps: f64, settings: &ProjectionSettings) -> Result<Self> {
        let space = ctx.component_space(component);
        let gram = space.mass().to_dense();
        let pod = compute_pod(snapshots, &gram, Truncation::Tolerance(settings.eps_err))?;
        let total = pod.m();
        if total == 0 {
            return Err(Error::Empty(format!("{} manifold has no nonzero mode", component.name())));
        }
        let mut k = count_for_tolerance(&pod.eigenvalues, eps).min(total);
        if count_for_tolerance(&pod.eigenvalues, eps) > total {
            log::warn!("{}: tolerance {eps:e} unreachable, using {total} modes", component.name());
        }
        k = k.max(1);
        let mut k_enriched = enriched_count(&pod.eigenvalues, k, settings.tol_kprime * eps).min(total);
        if k_enriched <= k {
            log::warn!("{}: enriched count clamped to {total}", component.name());
            k_enriched = total;
        }
        let epm = settings.epm();
        let projector = run_adaptive_epm(space, &pod.basis.columns(0, k).into_owned(), snapshots, &epm)?;
        let enriched = run_adaptive_epm(space, &pod.basis.columns(0, k_enriched).into_owned(), snapshots, &epm)?;
        Ok(CollateralUnit {
            component,
            eigenvalues: pod.eigenvalues,
            modes: pod.basis,
            k,
            k_enriched,
            projector,
            enriched,
            samples: Some(snapshots.clone()),
            settings: epm,
        })
    }

    /// Rebuild from stored parts (no snapshots kept).
    pub fn from_parts(component: Component, eigenvalues: Vec<f64>, modes: DMatrix<f64>, projector: EpmProjector, enriched: EpmProjector, settings: EpmSettings) -> Self {
        CollateralUnit {
            component,
            eigenvalues,
            modes,
            k: projector.k(),
            k_enriched: enriched.k(),
            projector,
            enriched,
            samples: None,
            settings,
        }
    }

    pub fn settings(&self) -> &EpmSettings {
        &self.settings
    }

    /// Projector with the first `k` modes.
    pub fn with_count(&self, ctx: &TransverseContext, k: usize) -> Result<EpmProjector> {
        let k = k.clamp(1, self.modes.ncols());
        if k == self.k {
            return Ok(self.projector.clone());
        }
        if k == self.k_enriched {
            return Ok(self.enriched.clone());
        }
        let space = ctx.component_space(self.component);
        match &self.samples {
            Some(s) => run_adaptive_epm(space, &self.modes.columns(0, k).into_owned(), s, &self.settings),
            None if k <= self.k_enriched => self.enriched.truncate(space, k),
            None => Err(Error::InvalidInput(format!("no stored systems for {k} functions"))),
        }
    }

    /// Enriched count paired with `k`, relative to the POD error at `k`.
    pub fn enriched_for(&self, k: usize, tol_kprime: f64) -> usize {
        let total = self.modes.ncols();
        let eps = tail_sum(&self.eigenvalues, k).max(0.0).sqrt();
        enriched_count(&self.eigenvalues, k, tol_kprime * eps).min(total)
    }
}

/// Reduction space and collateral units for all five operator components.
#[derive(Debug, Clone)]
pub struct ReducedSpaces {
    pub solution: PodResult,
    /// Mode count meeting the reduction tolerance.
    pub m: usize,
    pub units: [CollateralUnit; 5],
}

impl ReducedSpaces {
    pub fn unit(&self, c: Component) -> &CollateralUnit {
        &self.units[c.index()]
    }

    pub fn modes(&self, m: usize) -> DMatrix<f64> {
        self.solution.basis.columns(0, m.min(self.solution.m())).into_owned()
    }

    pub fn derivative_units(&self) -> DerivativeUnits {
        DerivativeUnits {
            diff: self.unit(Component::Diff).projector.clone(),
            diff_grad_x: self.unit(Component::DiffGradX).projector.clone(),
            diff_grad_y: self.unit(Component::DiffGradY).projector.clone(),
        }
    }

    /// Online solver with `m` modes; `k` overrides the flux collateral counts.
    pub fn solver(&self, ctx: &TransverseContext, mesh_x: Mesh1D, m: usize, k: Option<usize>, mode: JacobianMode) -> Result<ReducedSolver> {
        let (fx, fy) = match k {
            Some(k) => (self.unit(Component::FluxX).with_count(ctx, k)?, self.unit(Component::FluxY).with_count(ctx, k)?),
            None => (self.unit(Component::FluxX).projector.clone(), self.unit(Component::FluxY).projector.clone()),
        };
        let deriv = (mode == JacobianMode::Collateral).then(|| self.derivative_units());
        let mut s = ReducedSolver::new(ctx, mesh_x, self.modes(m), &fx, &fy, deriv.as_ref())?;
        s.mode = mode;
        Ok(s)
    }
}

/// Tolerances for the final spaces.
#[derive(Debug, Clone)]
pub struct SpaceSettings {
    pub eps_hmr: f64,
    pub eps_epm: f64,
    /// Cap on stored solution modes.
    pub m_cap: usize,
    pub projection: ProjectionSettings,
}

impl Default for SpaceSettings {
    fn default() -> Self {
        SpaceSettings {
            eps_hmr: 1e-5,
            eps_epm: 1e-7,
            m_cap: 20,
            projection: ProjectionSettings::default(),
        }
    }
}

/// Reduction space from the solution manifold and collateral units from the operator manifolds.
pub fn build_spaces(ctx: &TransverseContext, manifolds: &Manifolds, settings: &SpaceSettings) -> Result<ReducedSpaces> {
    let gram = ctx.space.mass.to_dense();
    let mut solution = compute_pod(&manifolds.solutions, &gram, Truncation::Full)?;
    if solution.m() == 0 {
        return Err(Error::Empty("solution manifold is zero".into()));
    }
    let keep = solution.m().min(settings.m_cap.max(1));
    solution.basis = solution.basis.columns(0, keep).into_owned();
    let m = count_for_tolerance(&solution.eigenvalues, settings.eps_hmr).min(keep);
    let mut units = Vec::with_capacity(5);
    for c in Component::ALL {
        units.push(CollateralUnit::build(ctx, c, &manifolds.components[c.index()], settings.eps_epm, &settings.projection)?);
    }
    let units: [CollateralUnit; 5] = units.try_into().map_err(|_| Error::InvalidInput("component count".into()))?;
    Ok(ReducedSpaces { solution, m, units })
}

/// Fit slope of `log(values)` against the index by least squares.
fn log_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let xs: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Next quadrature count: increment when the coefficient decay falls behind the
/// eigenvalue decay by half on some window of five consecutive indices.
pub fn qp_indicator(eigenvalues: &[f64], coeff_norms: &[f64], q: usize, q_max: usize) -> usize {
    const WINDOW: usize = 5;
    let positive = |v: &[f64]| v.iter().take(10).take_while(|x| **x > 0.0).count();
    let n = positive(eigenvalues).min(positive(coeff_norms));
    if n < WINDOW + 1 {
        log::warn!("quadrature indicator needs six positive values, got {n}; keeping Q = {q}");
        return q;
    }
    if q >= q_max {
        return q;
    }
    for start in 0..=(n - WINDOW) {
        let se = log_slope(&eigenvalues[start..start + WINDOW]);
        let sc = log_slope(&coeff_norms[start..start + WINDOW]);
        if se < 0.0 && sc.abs() < 0.5 * se.abs() {
            return q + 1;
        }
    }
    q
}

/// Flux and derivative projectors at small and enriched sizes for the indicator solves.
#[derive(Debug, Clone)]
pub struct IndicatorUnits {
    pub units: [CollateralUnit; 5],
}

/// Small collateral bases to `eps_c` and their enrichments.
pub fn epm_indicator(ctx: &TransverseContext, manifolds: &Manifolds, eps_c: f64, settings: &ProjectionSettings) -> Result<IndicatorUnits> {
    let mut units = Vec::with_capacity(5);
    for c in Component::ALL {
        units.push(CollateralUnit::build(ctx, c, &manifolds.components[c.index()], eps_c, settings)?);
    }
    Ok(IndicatorUnits {
        units: units.try_into().map_err(|_| Error::InvalidInput("component count".into()))?,
    })
}

/// Coarse dominant-direction setting for indicator solves.
pub struct CoarseSetup {
    pub mesh_x: Mesh1D,
    pub estimator: Estimator,
    pub p_exponent: f64,
}

impl CoarseSetup {
    pub fn new(ctx: &TransverseContext, n_elem: usize, p_exponent: f64) -> Result<Self> {
        let mesh_x = build_interval_mesh(ctx.case.x0, ctx.case.x1, n_elem)?;
        let space = FESpace2D::new(TensorMesh2D {
            mesh_x: mesh_x.clone(),
            mesh_y: ctx.mesh().clone(),
        })?;
        Ok(CoarseSetup {
            mesh_x,
            estimator: Estimator::new(ReferenceSolver::new(ctx.case.clone(), space)),
            p_exponent,
        })
    }

    /// Error indicator of the reduced solution with the given modes: the bound when the
    /// proximity condition holds, the proximity indicator otherwise.
    pub fn indicator(&self, ctx: &TransverseContext, basis: &DMatrix<f64>, iu: &IndicatorUnits) -> Result<f64> {
        let u = |c: Component| &iu.units[c.index()];
        let fx = u(Component::FluxX);
        let fy = u(Component::FluxY);
        let mut solver = ReducedSolver::new(ctx, self.mesh_x.clone(), basis.clone(), &fx.projector, &fy.projector, None)?;
        solver.mode = JacobianMode::Consistent;
        let sol = solver.solve()?;
        let states = solver.gauss_states(&sol.flat());
        let est = &self.estimator;
        let coarse = FluxUnits {
            flux_x: &fx.projector,
            flux_y: &fy.projector,
        };
        let rich = FluxUnits {
            flux_x: &fx.enriched,
            flux_y: &fy.enriched,
        };
        let e_mod = est.model_residual_norm(&solver, &states, coarse)?;
        let e_epm = est.projection_gap_norm(&solver, &states, coarse, rich)?;
        let jac = est.projected_jacobian(
            &solver,
            &states,
            DerivUnits {
                diff: &u(Component::Diff).enriched,
                diff_grad_x: &u(Component::DiffGradX).enriched,
                diff_grad_y: &u(Component::DiffGradY).enriched,
            },
        )?;
        let beta = est.inf_sup(&jac, InfSupNorm::Euclidean)?;
        let field = reconstruct(&sol, basis, &est.space)?;
        let consts = estimate_constants(&field, &est.space, &est.params, self.p_exponent)?;
        Ok(brr_assemble(e_mod, e_epm, beta, consts)?.indicator())
    }

    /// Coefficient norms of the coarse reduced solution with the given modes.
    pub fn coefficient_norms(&self, ctx: &TransverseContext, basis: &DMatrix<f64>, iu: &IndicatorUnits) -> Result<Vec<f64>> {
        let fx = &iu.units[Component::FluxX.index()];
        let fy = &iu.units[Component::FluxY.index()];
        let mut solver = ReducedSolver::new(ctx, self.mesh_x.clone(), basis.clone(), &fx.projector, &fy.projector, None)?;
        solver.mode = JacobianMode::Consistent;
        let sol = solver.solve()?;
        Ok(sol.coefficient_norms(&solver.space_x))
    }
}

/// Cell indicators: for each cell the smallest error indicator over its samples, each
/// sample appending its snapshot to the current small basis.
pub fn element_indicators(ctx: &TransverseContext, grid: &ParameterGrid, small: &DMatrix<f64>, iu: &IndicatorUnits, coarse: &CoarseSetup) -> Vec<f64> {
    let mass = &ctx.space.mass;
    grid.cells
        .iter()
        .map(|cell| {
            cell.samples
                .iter()
                .map(|s| {
                    let mut cand = DMatrix::zeros(small.nrows(), small.ncols() + 1);
                    cand.columns_mut(0, small.ncols()).copy_from(small);
                    cand.column_mut(small.ncols()).copy_from_slice(&s.solution);
                    let basis = orthonormalize(&cand, |v| mass.mul_vec(v), 1e-10);
                    if basis.ncols() == 0 {
                        return f64::INFINITY;
                    }
                    match coarse.indicator(ctx, &basis, iu) {
                        Ok(v) if v.is_finite() => v,
                        Ok(_) => f64::INFINITY,
                        Err(e) => {
                            log::debug!("indicator failed at {:?}: {e}", s.mu.to_coords());
                            f64::INFINITY
                        }
                    }
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainingSettings {
    pub m_max: usize,
    pub i_max: usize,
    pub n_xi: usize,
    pub n_c: usize,
    pub theta: f64,
    pub sigma_thres: SigmaThreshold,
    pub nh_prime: usize,
    pub q0: usize,
    pub q_max: usize,
    pub eps_c: f64,
    pub p_exponent: f64,
    pub projection: ProjectionSettings,
    pub seed: u64,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        TrainingSettings {
            m_max: 2,
            i_max: 2,
            n_xi: 10,
            n_c: 50,
            theta: 0.05,
            sigma_thres: SigmaThreshold::Scaled(1.0),
            nh_prime: 10,
            q0: 1,
            q_max: 1,
            eps_c: 0.1,
            p_exponent: 4.0,
            projection: ProjectionSettings::default(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutput {
    pub grid: ParameterGrid,
    pub q: usize,
    pub seed: u64,
    pub rejected: usize,
    pub log: Vec<String>,
}

impl TrainingOutput {
    pub fn manifolds(&self) -> Result<Manifolds> {
        Manifolds::from_samples(self.grid.samples())
    }

    pub fn n_train(&self) -> usize {
        self.grid.n_samples()
    }
}

struct Stage {
    grid: ParameterGrid,
    coarse: Vec<Sample>,
}

fn bootstrap(ctx: &TransverseContext, pbox: &ParameterBox, q: usize, s: &TrainingSettings, rng: &mut ChaCha8Rng, rejected: &mut usize) -> Result<Stage> {
    let grid = ParameterGrid::initial(ctx, pbox, q, s.n_xi, s.sigma_thres, rng, rejected)?;
    let lo: Vec<f64> = (0..q).flat_map(|_| [pbox.x_breaks[0], pbox.u_range.0, pbox.du_range.0]).collect();
    let hi: Vec<f64> = (0..q).flat_map(|_| [*pbox.x_breaks.last().unwrap(), pbox.u_range.1, pbox.du_range.1]).collect();
    let coarse = fill(ctx, rng, &lo, &hi, s.n_c, rejected)?;
    Ok(Stage { grid, coarse })
}

fn small_basis(ctx: &TransverseContext, samples: &Manifolds, count: usize) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Ok(DMatrix::zeros(samples.solutions.nrows(), 0));
    }
    let pod = compute_pod(&samples.solutions, &ctx.space.mass.to_dense(), Truncation::Count(count))?;
    Ok(pod.basis)
}

fn qp_step(ctx: &TransverseContext, stage: &Stage, q: usize, s: &TrainingSettings, coarse: &CoarseSetup, iu: &IndicatorUnits) -> usize {
    if q >= s.q_max {
        return q;
    }
    let all = match Manifolds::from_samples(stage.coarse.iter().chain(stage.grid.samples())) {
        Ok(m) => m,
        Err(_) => return q,
    };
    let gram = ctx.space.mass.to_dense();
    let Ok(pod) = compute_pod(&all.solutions, &gram, Truncation::Count(10)) else { return q };
    match coarse.coefficient_norms(ctx, &pod.basis, iu) {
        Ok(norms) => qp_indicator(&pod.eigenvalues, &norms, q, s.q_max),
        Err(e) => {
            log::warn!("quadrature indicator skipped: {e}");
            q
        }
    }
}

/// Adaptive training-set extension with snapshot generation.
pub fn adaptive_train_extension(ctx: &TransverseContext, pbox: &ParameterBox, s: &TrainingSettings) -> Result<TrainingOutput> {
    pbox.validate()?;
    if !(s.theta > 0.0 && s.theta <= 1.0) {
        return Err(Error::Config(format!("theta must lie in (0, 1], got {}", s.theta)));
    }
    if s.q0 == 0 || s.q_max < s.q0 {
        return Err(Error::Config("need 1 <= Q0 <= Qmax".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut rejected = 0;
    let mut log = Vec::new();
    let coarse = CoarseSetup::new(ctx, s.nh_prime, s.p_exponent)?;
    let mut q = s.q0;
    let mut stage = bootstrap(ctx, pbox, q, s, &mut rng, &mut rejected)?;
    log.push(format!("bootstrap: Q={q}, cells={}, samples={}", stage.grid.cells.len(), stage.grid.n_samples()));
    for m in 0..=s.m_max {
        let all = Manifolds::from_samples(stage.coarse.iter().chain(stage.grid.samples()))?;
        let mut iu = epm_indicator(ctx, &all, s.eps_c, &s.projection)?;
        let q_next = qp_step(ctx, &stage, q, s, &coarse, &iu);
        if q_next != q {
            q = q_next;
            stage = bootstrap(ctx, pbox, q, s, &mut rng, &mut rejected)?;
            log.push(format!("quadrature count raised to Q={q}; grid reset"));
            let all = Manifolds::from_samples(stage.coarse.iter().chain(stage.grid.samples()))?;
            iu = epm_indicator(ctx, &all, s.eps_c, &s.projection)?;
        }
        if m == 0 {
            // first pass only settles the quadrature count
            continue;
        }
        let ks: Vec<String> = iu.units.iter().map(|u| format!("{}:{}/{}", u.component.name(), u.k, u.k_enriched)).collect();
        log.push(format!("m={m}: collateral {}", ks.join(" ")));
        for i in 1..=s.i_max {
            let all = Manifolds::from_samples(stage.coarse.iter().chain(stage.grid.samples()))?;
            let small = small_basis(ctx, &all, m - 1)?;
            let eta = element_indicators(ctx, &stage.grid, &small, &iu, &coarse);
            let marked = stage.grid.mark(&eta, s.theta);
            let n_marked = marked.iter().filter(|b| **b).count();
            stage.grid.refine(ctx, &marked, s.n_xi, &mut rng, &mut rejected)?;
            let finite = eta.iter().filter(|v| v.is_finite()).count();
            log.push(format!(
                "m={m} sweep {i}: finite indicators {finite}/{}, refined {n_marked}, cells={}, samples={}",
                eta.len(),
                stage.grid.cells.len(),
                stage.grid.n_samples()
            ));
        }
    }
    Ok(TrainingOutput {
        grid: stage.grid,
        q,
        seed: s.seed,
        rejected,
        log,
    })
}

/// Samples drawn uniformly from the whole box without adaptation.
pub fn uniform_training(ctx: &TransverseContext, pbox: &ParameterBox, q: usize, count: usize, seed: u64) -> Result<Vec<Sample>> {
    pbox.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo: Vec<f64> = (0..q).flat_map(|_| [pbox.x_breaks[0], pbox.u_range.0, pbox.du_range.0]).collect();
    let hi: Vec<f64> = (0..q).flat_map(|_| [*pbox.x_breaks.last().unwrap(), pbox.u_range.1, pbox.du_range.1]).collect();
    let mut rejected = 0;
    fill(ctx, &mut rng, &lo, &hi, count, &mut rejected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TestCase;
    use proptest::prelude::*;

    fn tc1_ctx(ny: usize) -> TransverseContext {
        TransverseContext::new(TestCase::tc1(), build_interval_mesh(0.0, 1.0, ny).unwrap()).unwrap()
    }

    fn tc1_box() -> ParameterBox {
        ParameterBox {
            x_breaks: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            u_range: (-0.5, 0.5),
            du_range: (-1.0, 1.0),
        }
    }

    fn bare_cell(lo: Vec<f64>, hi: Vec<f64>, age: usize) -> Cell {
        Cell {
            lo,
            hi,
            age,
            sigma_thres: f64::INFINITY,
            samples: Vec::new(),
        }
    }

    #[test]
    fn initial_cells_tile_the_box() {
        let b = tc1_box();
        assert_eq!(b.initial_cells(1).len(), 4);
        let b2 = ParameterBox {
            x_breaks: vec![0.0, 0.4, 0.8, 1.2, 1.6, 2.0],
            u_range: (0.0, 2.0),
            du_range: (-0.5, 0.5),
        };
        let cells = b2.initial_cells(2);
        assert_eq!(cells.len(), 25);
        let vol: f64 = cells.iter().map(|(lo, hi)| lo.iter().zip(hi).map(|(a, b)| b - a).product::<f64>()).sum();
        assert!((vol - 16.0).abs() < 1e-12);
    }

    #[test]
    fn cell_geometry() {
        let c = bare_cell(vec![0.0, 0.0, 0.0], vec![0.3, 0.4, 0.0], 3);
        assert!((c.diam() - 0.5).abs() < 1e-15);
        assert!((c.sigma() - 1.5).abs() < 1e-15);
        assert_eq!(bare_cell(vec![0.0; 3], vec![1.0; 3], 0).sigma(), 0.0);
        let parent = bare_cell(vec![0.0, -0.5, -1.0], vec![0.5, 0.5, 1.0], 0);
        let kids = parent.children();
        assert_eq!(kids.len(), 8);
        let vol: f64 = kids.iter().map(|(lo, hi)| lo.iter().zip(hi).map(|(a, b)| b - a).product::<f64>()).sum();
        assert!((vol - parent.volume()).abs() < 1e-15);
        assert!((SigmaThreshold::Scaled(1.0).value(2.29) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn marking_counts() {
        let grid = ParameterGrid {
            cells: (0..20).map(|i| bare_cell(vec![i as f64], vec![i as f64 + 1.0], 0)).collect(),
            history: vec![20],
        };
        let eta: Vec<f64> = (0..20).map(|i| ((i * 7) % 20) as f64).collect();
        let marked = grid.mark(&eta, 0.05);
        assert_eq!(marked.iter().filter(|b| **b).count(), 1);
        assert!(marked[0]);
        let mut old = grid.clone();
        old.cells[5].age = 10;
        old.cells[5].sigma_thres = 4.0;
        let marked = old.mark(&eta, 0.05);
        assert!(marked[5] && marked[0]);
        assert_eq!(marked.iter().filter(|b| **b).count(), 2);
    }

    #[test]
    fn refinement_preserves_volume_and_ages() {
        let ctx = tc1_ctx(12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rejected = 0;
        let mut grid = ParameterGrid::initial(&ctx, &tc1_box(), 1, 3, SigmaThreshold::Scaled(1.0), &mut rng, &mut rejected).unwrap();
        let v0 = grid.volume();
        for sweep in 0..3 {
            let mut marked = vec![false; grid.cells.len()];
            marked[sweep] = true;
            let before: Vec<usize> = grid.cells.iter().map(|c| c.age).collect();
            grid.refine(&ctx, &marked, 3, &mut rng, &mut rejected).unwrap();
            assert!((grid.volume() - v0).abs() < 1e-12);
            let unrefined: Vec<usize> = before.iter().enumerate().filter(|(i, _)| *i != sweep).map(|(_, a)| a + 1).collect();
            let kept: Vec<usize> = grid.cells.iter().filter(|c| c.age > 0).map(|c| c.age).collect();
            assert_eq!(kept, unrefined.into_iter().filter(|a| *a > 0).collect::<Vec<_>>());
            assert_eq!(grid.cells.iter().filter(|c| c.age == 0).count(), 8);
            assert!(grid.cells.iter().all(|c| c.samples.len() == 3));
        }
        assert_eq!(grid.n_samples(), 3 * grid.cells.len());
        assert_eq!(grid.history, vec![4, 11, 18, 25]);
    }

    #[test]
    fn samples_lie_in_their_cells() {
        let ctx = tc1_ctx(10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rejected = 0;
        let grid = ParameterGrid::initial(&ctx, &tc1_box(), 1, 5, SigmaThreshold::Scaled(1.0), &mut rng, &mut rejected).unwrap();
        for c in &grid.cells {
            for s in &c.samples {
                let coords = s.mu.to_coords();
                for d in 0..3 {
                    assert!(coords[d] >= c.lo[d] && coords[d] <= c.hi[d]);
                }
                let n = ctx.space.l2_norm(&s.solution);
                assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_point_draws_are_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let lo = vec![1.2, 0.0, -0.5, 0.0, 0.0, -0.5];
        let hi = vec![1.6, 2.0, 0.5, 0.4, 2.0, 0.5];
        for _ in 0..50 {
            let mu = draw(&mut rng, &lo, &hi, 0.0, 2.0).unwrap();
            assert!(mu.x[0] < mu.x[1] && mu.x[0] <= 0.4 && mu.x[1] >= 1.2);
        }
    }

    #[test]
    fn training_is_reproducible() {
        let ctx = tc1_ctx(10);
        let a = uniform_training(&ctx, &tc1_box(), 1, 12, 99).unwrap();
        let b = uniform_training(&ctx, &tc1_box(), 1, 12, 99).unwrap();
        let c = uniform_training(&ctx, &tc1_box(), 1, 12, 100).unwrap();
        assert!(a.iter().zip(&b).all(|(s, t)| s.mu == t.mu && s.solution == t.solution));
        assert!(a.iter().zip(&c).any(|(s, t)| s.mu != t.mu));
    }

    #[test]
    fn degenerate_loop_keeps_initial_samples() {
        let ctx = tc1_ctx(10);
        let s = TrainingSettings {
            m_max: 1,
            i_max: 0,
            n_xi: 3,
            n_c: 6,
            ..Default::default()
        };
        let out = adaptive_train_extension(&ctx, &tc1_box(), &s).unwrap();
        assert_eq!(out.n_train(), 12);
        assert_eq!(out.grid.cells.len(), 4);
        let again = adaptive_train_extension(&ctx, &tc1_box(), &s).unwrap();
        assert!(out.grid.samples().zip(again.grid.samples()).all(|(a, b)| a.mu == b.mu));
    }

    #[test]
    fn qp_indicator_examples() {
        let eig: Vec<f64> = (0..10).map(|i| 10f64.powi(-i)).collect();
        assert_eq!(qp_indicator(&eig, &eig, 1, 3), 1);
        let slow: Vec<f64> = (0..10).map(|i| 1.5f64.powi(-i)).collect();
        assert_eq!(qp_indicator(&eig, &slow, 1, 3), 2);
        assert_eq!(qp_indicator(&eig, &slow, 3, 3), 3);
        assert_eq!(qp_indicator(&eig[..4], &slow[..4], 1, 3), 1);
    }

    fn synthetic_manifolds(ctx: &TransverseContext, rank: usize, n: usize) -> Manifolds {
        let comps = Component::ALL.map(|c| {
            let sp = ctx.component_space(c);
            let dim = sp.dim();
            let gens: Vec<Vec<f64>> = (0..rank)
                .map(|r| (0..dim).map(|i| ((r + 1) as f64 * 3.1 * sp.dof_coordinate(i)).sin() + 0.1 * r as f64).collect())
                .collect();
            DMatrix::from_fn(dim, n, |i, j| gens.iter().enumerate().map(|(r, g)| g[i] * (((j * (r + 2)) % 7) as f64 + 1.0)).sum::<f64>())
        });
        let dim = ctx.space.dim();
        let sols = DMatrix::from_fn(dim, n, |i, j| (i as f64 + 1.0).sin() * (j as f64 + 1.0));
        Manifolds { solutions: sols, components: comps }
    }

    #[test]
    fn collateral_counts_on_low_rank_manifold() {
        let ctx = tc1_ctx(20);
        let man = synthetic_manifolds(&ctx, 3, 20);
        let settings = ProjectionSettings::default();
        let unit = CollateralUnit::build(&ctx, Component::FluxX, &man.components[0], 1e3, &settings).unwrap();
        assert_eq!(unit.k, 1);
        assert_eq!(unit.modes.ncols(), 3);
        let unit = CollateralUnit::build(&ctx, Component::FluxY, &man.components[1], 1e-12, &settings).unwrap();
        assert_eq!(unit.k, 3);
        assert_eq!(unit.k_enriched, 3);
    }

    #[test]
    fn space_counts() {
        let ctx = tc1_ctx(16);
        let samples = uniform_training(&ctx, &tc1_box(), 1, 30, 5).unwrap();
        let man = Manifolds::from_samples(samples.iter()).unwrap();
        let big = SpaceSettings {
            eps_hmr: 10.0,
            ..Default::default()
        };
        let sp = build_spaces(&ctx, &man, &big).unwrap();
        assert_eq!(sp.m, 1);
        let tight = SpaceSettings {
            eps_hmr: 1e-14,
            eps_epm: 1e-6,
            ..Default::default()
        };
        let sp = build_spaces(&ctx, &man, &tight).unwrap();
        assert_eq!(sp.m, sp.solution.m());
        for u in &sp.units {
            assert!(u.k < u.k_enriched || u.k_enriched == u.modes.ncols());
            assert!(u.projector.l() >= u.k);
        }
    }

    #[test]
    fn in_span_sample_reproduces_small_basis_indicator() {
        let ctx = tc1_ctx(16);
        let samples = uniform_training(&ctx, &tc1_box(), 1, 40, 21).unwrap();
        let man = Manifolds::from_samples(samples.iter()).unwrap();
        let iu = epm_indicator(&ctx, &man, 1e-3, &ProjectionSettings::default()).unwrap();
        let coarse = CoarseSetup::new(&ctx, 10, 4.0).unwrap();
        let small = small_basis(&ctx, &man, 2).unwrap();
        let own = coarse.indicator(&ctx, &small, &iu).unwrap();
        let in_span = Sample {
            mu: samples[0].mu.clone(),
            solution: small.column(1).iter().map(|v| 0.3 * v).collect(),
            operator: samples[0].operator.clone(),
        };
        let fresh = samples.iter().find(|s| ctx.space.l2_norm(&s.solution) > 0.0).unwrap().clone();
        let mut a = bare_cell(vec![0.0], vec![1.0], 0);
        a.samples.push(in_span);
        let mut b = bare_cell(vec![1.0], vec![2.0], 0);
        b.samples.push(fresh);
        let grid = ParameterGrid {
            cells: vec![a, b],
            history: vec![2],
        };
        let eta = element_indicators(&ctx, &grid, &small, &iu, &coarse);
        assert!((eta[0] - own).abs() <= 1e-8 * own.abs());
        assert!(eta[1].is_finite() && eta[1] > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn refinement_tiles_parent(lo in prop::collection::vec(-2.0f64..0.0, 1..5), w in prop::collection::vec(0.1f64..2.0, 5)) {
            let hi: Vec<f64> = lo.iter().zip(&w).map(|(a, b)| a + b).collect();
            let c = bare_cell(lo.clone(), hi, 2);
            let kids = c.children();
            prop_assert_eq!(kids.len(), 1 << lo.len());
            let vol: f64 = kids.iter().map(|(l, h)| l.iter().zip(h).map(|(a, b)| b - a).product::<f64>()).sum();
            prop_assert!((vol - c.volume()).abs() < 1e-12);
        }

        #[test]
        fn tighter_enrichment_never_shrinks(decay in 0.1f64..0.9, k in 1usize..6, t in 1e-6f64..1e-1) {
            let eig: Vec<f64> = (0..15).map(|i| decay.powi(i)).collect();
            prop_assert!(enriched_count(&eig, k, 0.5 * t) >= enriched_count(&eig, k, t));
        }
    }
}
