//! Study drivers. Each returns tables, plots and manifest notes; [`StudyOutput::write`]
//! puts them in the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbhmr::archive::BasisArchive;
use rbhmr::eim::FnSpace;
use rbhmr::epm::{aposteriori_bound, apriori_bound, enriched_count, run_adaptive_epm, EpmSettings};
use rbhmr::pod::{compute_pod, tail_sum, Truncation};
use rbhmr::reduced::reconstruct;
use rbhmr::reference::exact_error_norms;
use rbhmr::training::{build_spaces, ReducedSpaces, SpaceSettings};
use rbhmr::transverse::{Component, TransverseContext};

use crate::config::Config;
use crate::error::{io_err, Error, Result};
use crate::output::{Cell, Table};
use crate::pipeline::{self, flux_pair, loglog_slope, median, relative_tail, Evaluator};
use crate::setup::Setup;
use crate::svg::{LinePlot, Series};
use crate::synthetic::{self, Source};

pub const CONVERGENCE_COLUMNS: &[&str] = &[
    "m", "k", "rel_H1_model", "rel_L2_model", "rel_H1_total", "pod_tail", "coeff_tail", "tau", "delta", "c_err",
];
pub const LANDSCAPE_COLUMNS: &[&str] = &["m", "k", "rel_H1_model", "rel_L2_model", "iterations", "status"];
pub const INFSUP_COLUMNS: &[&str] = &["m", "eps_epm", "beta_app", "beta_exact", "rel_gap"];
pub const RUNTIME_COLUMNS: &[&str] = &["NH", "nh", "fem_seconds", "rb_offline_seconds", "rb_online_seconds", "rb_total_seconds"];
pub const EPM_BOUNDS_COLUMNS: &[&str] = &["k", "pod_tail", "coeff_tail", "true_proj_error", "apriori", "aposteriori", "e_int"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Offline,
    Solve,
    Reference,
    Convergence,
    Landscape,
    Infsup,
    Runtime,
    EpmBounds,
}

impl std::str::FromStr for StudyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "offline" => StudyKind::Offline,
            "solve" => StudyKind::Solve,
            "reference" => StudyKind::Reference,
            "convergence" => StudyKind::Convergence,
            "landscape" => StudyKind::Landscape,
            "infsup" => StudyKind::Infsup,
            "runtime" => StudyKind::Runtime,
            "epm-bounds" => StudyKind::EpmBounds,
            other => return Err(Error::Config(format!("unknown study kind `{other}`"))),
        })
    }
}

impl std::fmt::Display for StudyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StudyKind::Offline => "offline",
            StudyKind::Solve => "solve",
            StudyKind::Reference => "reference",
            StudyKind::Convergence => "convergence",
            StudyKind::Landscape => "landscape",
            StudyKind::Infsup => "infsup",
            StudyKind::Runtime => "runtime",
            StudyKind::EpmBounds => "epm-bounds",
        })
    }
}

#[derive(Debug, Default)]
pub struct StudyOutput {
    pub tables: Vec<(String, Table)>,
    pub plots: Vec<(String, LinePlot)>,
    pub archives: Vec<(String, BasisArchive)>,
    pub notes: Vec<(String, String)>,
}

impl StudyOutput {
    fn note(&mut self, key: impl Into<String>, value: impl ToString) {
        self.notes.push((key.into(), value.to_string()));
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut written = Vec::new();
        for (name, t) in &self.tables {
            let p = dir.join(format!("{name}.csv"));
            t.write_csv(&p)?;
            written.push(p);
        }
        for (name, plot) in &self.plots {
            let p = dir.join(format!("{name}.svg"));
            std::fs::write(&p, plot.render()).map_err(io_err(&p))?;
            written.push(p);
        }
        for (name, a) in &self.archives {
            let p = dir.join(format!("{name}.hmr"));
            a.save(&p)?;
            written.push(p);
        }
        Ok(written)
    }
}

pub fn run(kind: StudyKind, cfg: &Config) -> Result<StudyOutput> {
    let setup = Setup::from_config(cfg)?;
    match kind {
        StudyKind::Offline => run_offline(&setup),
        StudyKind::Solve => run_solve(cfg, &setup),
        StudyKind::Reference => run_reference(&setup),
        StudyKind::Convergence => run_convergence(cfg, &setup),
        StudyKind::Landscape => run_landscape(cfg, &setup),
        StudyKind::Infsup => run_infsup(cfg, &setup),
        StudyKind::Runtime => run_runtime(cfg, &setup),
        StudyKind::EpmBounds => run_epm_bounds(cfg, &setup),
    }
}

/// Spaces from `study.archive` when set (the archive's case and transverse mesh win),
/// otherwise from an inline offline phase.
pub fn resolve_spaces(cfg: &Config, setup: &Setup, out: &mut StudyOutput) -> Result<(Setup, TransverseContext, ReducedSpaces)> {
    let path = cfg.raw("study.archive");
    if path != "none" {
        let archive = BasisArchive::load(Path::new(path))?;
        let mut s = setup.clone();
        s.case = archive.case.clone();
        s.n_y = archive.mesh_y.n_elem();
        if archive.mesh_y.nodes != s.mesh_y()?.nodes {
            return Err(Error::Validation("archive transverse mesh is not uniform on the case interval".into()));
        }
        out.note("archive", path);
        let ctx = s.context()?;
        return Ok((s, ctx, archive.spaces));
    }
    let ctx = setup.context()?;
    let off = pipeline::offline(setup, &ctx)?;
    for line in &off.log {
        out.note("offline", line);
    }
    out.note("offline_seconds", format!("{:.3}", off.seconds()));
    Ok((setup.clone(), ctx, off.archive.spaces))
}

fn k_override(cfg: &Config) -> Result<Option<usize>> {
    cfg.get_auto::<usize>("study.k")
}

pub fn run_offline(setup: &Setup) -> Result<StudyOutput> {
    let mut out = StudyOutput::default();
    let ctx = setup.context()?;
    let off = pipeline::offline(setup, &ctx)?;
    for line in &off.log {
        out.note("offline", line);
    }
    out.note("training_seconds", format!("{:.3}", off.training_seconds));
    out.note("spaces_seconds", format!("{:.3}", off.spaces_seconds));
    let spaces = &off.archive.spaces;
    let mut spectrum = Table::new(&["index", "solution", "flux_x", "flux_y", "diff", "diff_grad_x", "diff_grad_y"]);
    let longest = spaces.units.iter().map(|u| u.eigenvalues.len()).max().unwrap_or(0).max(spaces.solution.eigenvalues.len());
    let pick = |v: &[f64], i: usize| Cell::Num(v.get(i).copied().unwrap_or(f64::NAN));
    for i in 0..longest {
        let mut row = vec![Cell::from(i + 1), pick(&spaces.solution.eigenvalues, i)];
        row.extend(spaces.units.iter().map(|u| pick(&u.eigenvalues, i)));
        spectrum.push(row);
    }
    let mut plot = LinePlot {
        title: "POD eigenvalues".into(),
        x_label: "index".into(),
        y_label: "eigenvalue".into(),
        log_y: true,
        ..Default::default()
    };
    plot.series.push(Series::new("solution", enumerate(&spaces.solution.eigenvalues)));
    for u in &spaces.units {
        plot.series.push(Series::new(u.component.name(), enumerate(&u.eigenvalues)));
    }
    let mut units = Table::new(&["component", "k", "k_enriched", "intervals", "e_int"]);
    for u in &spaces.units {
        units.push(vec![
            u.component.name().into(),
            u.k.into(),
            u.k_enriched.into(),
            u.projector.parts.len().into(),
            u.projector.e_int.into(),
        ]);
    }
    out.tables.push(("spectrum".into(), spectrum));
    out.tables.push(("collateral".into(), units));
    out.plots.push(("spectrum".into(), plot));
    out.archives.push(("basis".into(), off.archive));
    Ok(out)
}

fn enumerate(v: &[f64]) -> Vec<(f64, f64)> {
    v.iter().enumerate().map(|(i, x)| ((i + 1) as f64, *x)).collect()
}

fn field_table(space: &rbhmr::mesh::FESpace2D, values: &[f64]) -> Table {
    let nodal = space.to_nodal(values);
    let mut t = Table::new(&["x", "y", "value"]);
    for (iy, y) in space.mesh.mesh_y.nodes.iter().enumerate() {
        for (ix, x) in space.mesh.mesh_x.nodes.iter().enumerate() {
            t.push(vec![(*x).into(), (*y).into(), nodal[(iy, ix)].into()]);
        }
    }
    t
}

pub fn run_solve(cfg: &Config, setup: &Setup) -> Result<StudyOutput> {
    let mut out = StudyOutput::default();
    let (setup, ctx, spaces) = resolve_spaces(cfg, setup, &mut out)?;
    let m: usize = cfg.get("study.m")?;
    let m = m.clamp(1, spaces.solution.m());
    let pair = flux_pair(&ctx, &spaces, k_override(cfg)?, setup.spaces.projection.tol_kprime)?;
    let mut solver = rbhmr::reduced::ReducedSolver::new(
        &ctx,
        setup.mesh_x()?,
        spaces.modes(m),
        &pair.coarse[0],
        &pair.coarse[1],
        Some(&spaces.derivative_units()),
    )?;
    solver.mode = setup.jacobian;
    solver.newton = setup.newton;
    solver.linear = setup.linear;
    let t = Instant::now();
    let sol = solver.solve()?;
    out.note("online_seconds", format!("{:.4}", t.elapsed().as_secs_f64()));
    out.note("m", m);
    out.note("k", pair.coarse[0].k());
    out.note("newton_iterations", sol.log.iterations);
    out.note("final_residual", format!("{:e}", sol.log.residuals.last().copied().unwrap_or(f64::NAN)));
    let space = setup.space()?;
    let field = reconstruct(&sol, &solver.basis, &space)?;
    if let Some((h1, l2)) = exact_error_norms(&space, &setup.case, &field)? {
        out.note("rel_H1_total", format!("{h1:e}"));
        out.note("rel_L2_total", format!("{l2:e}"));
    }
    let mut coeffs = Table::new(&["x", "mode", "value"]);
    let mut plot = LinePlot {
        title: "coefficient functions".into(),
        x_label: "x".into(),
        y_label: "p_s(x)".into(),
        ..Default::default()
    };
    let xs = &solver.space_x.mesh.nodes;
    for s in 0..m {
        let mut pts = vec![(xs[0], 0.0)];
        for i in 0..solver.n_x() {
            coeffs.push(vec![xs[i + 1].into(), (s + 1).into(), sol.coeffs[(s, i)].into()]);
            pts.push((xs[i + 1], sol.coeffs[(s, i)]));
        }
        pts.push((*xs.last().unwrap(), 0.0));
        plot.series.push(Series::new(format!("mode {}", s + 1), pts));
    }
    out.tables.push(("coefficients".into(), coeffs));
    out.tables.push(("field".into(), field_table(&space, &field)));
    out.plots.push(("coefficients".into(), plot));
    Ok(out)
}

pub fn run_reference(setup: &Setup) -> Result<StudyOutput> {
    let mut out = StudyOutput::default();
    let space = setup.space()?;
    let t = Instant::now();
    let sol = pipeline::reference_solver(setup, space.clone()).solve()?;
    out.note("seconds", format!("{:.4}", t.elapsed().as_secs_f64()));
    out.note("unknowns", space.dim());
    out.note("newton_iterations", sol.log.iterations);
    out.note("H1_seminorm", format!("{:e}", space.h1_semi_norm(&sol.values)));
    if let Some((h1, l2)) = exact_error_norms(&space, &setup.case, &sol.values)? {
        out.note("rel_H1_exact", format!("{h1:e}"));
        out.note("rel_L2_exact", format!("{l2:e}"));
    }
    out.tables.push(("field".into(), field_table(&space, &sol.values)));
    Ok(out)
}

pub fn run_convergence(cfg: &Config, setup: &Setup) -> Result<StudyOutput> {
    let mut out = StudyOutput::default();
    let (setup, ctx, spaces) = resolve_spaces(cfg, setup, &mut out)?;
    let table = convergence_table(cfg, &setup, &ctx, &spaces, &mut out.notes)?;
    let col = |n: &str| table.column(n);
    let ms = col("m");
    let ref_h1: Vec<f64> = col("rel_H1_model");
    let tau_scaled: Vec<f64> = col("tau_rel_scaled");
    let mut plot = LinePlot {
        title: "convergence in the model order".into(),
        x_label: "m".into(),
        y_label: "relative error".into(),
        log_y: true,
        ..Default::default()
    };
    for (name, ys) in [
        ("rel H1 model", ref_h1),
        ("rel H1 total", col("rel_H1_total")),
        ("pod tail", col("pod_tail")),
        ("coeff tail", col("coeff_tail")),
        ("1e-6 tau_rel", tau_scaled),
    ] {
        plot.series.push(Series::new(name, ms.iter().copied().zip(ys).collect()));
    }
    out.plots.push(("convergence".into(), plot));
    let mut public = Table::new(CONVERGENCE_COLUMNS);
    for r in &table.rows {
        public.push(r[..CONVERGENCE_COLUMNS.len()].to_vec());
    }
    out.tables.push(("convergence".into(), public));
    Ok(out)
}

/// Convergence rows for `m = 0..=study.m_max` plus a trailing `tau_rel_scaled` column
/// (`1e-6 tau / |p_ref|_H1`).
pub fn convergence_table(cfg: &Config, setup: &Setup, ctx: &TransverseContext, spaces: &ReducedSpaces, notes: &mut Vec<(String, String)>) -> Result<Table> {
    let m_max = cfg.get::<usize>("study.m_max")?.min(spaces.solution.m());
    let k = k_override(cfg)?;
    let ev = Evaluator::new(setup, ctx, spaces)?;
    let ref_h1 = ev.reference_h1();
    let mut cols = CONVERGENCE_COLUMNS.to_vec();
    cols.push("tau_rel_scaled");
    let mut table = Table::new(&cols);
    let nan = || Cell::Num(f64::NAN);
    table.push(vec![
        0usize.into(),
        0usize.into(),
        1.0.into(),
        1.0.into(),
        if setup.case.exact(0.0, 0.0).is_some() { 1.0.into() } else { nan() },
        relative_tail(&spaces.solution.eigenvalues, 0).into(),
        nan(),
        nan(),
        nan(),
        nan(),
        nan(),
    ]);
    let mut warm = None;
    let mut last_norms = Vec::new();
    for m in 1..=m_max {
        let t = Instant::now();
        match ev.evaluate(m, k, warm.as_ref(), true, false) {
            Ok(e) => {
                let rep = e.report.as_ref().expect("estimate requested");
                notes.push((
                    format!("m={m}"),
                    format!(
                        "iterations {}, beta {:.6e}, e_mod {:.3e}, e_epm {:.3e}, {:.2}s",
                        e.iterations,
                        rep.beta_app,
                        rep.dual_norm_residual,
                        rep.dual_norm_epm,
                        t.elapsed().as_secs_f64()
                    ),
                ));
                table.push(vec![
                    m.into(),
                    e.k.into(),
                    e.rel_h1.into(),
                    e.rel_l2.into(),
                    e.total_h1.unwrap_or(f64::NAN).into(),
                    tail_sum(&spaces.solution.eigenvalues, m).max(0.0).sqrt().into(),
                    nan(),
                    rep.tau.into(),
                    rep.delta.unwrap_or(f64::NAN).into(),
                    rep.c_err.into(),
                    (1e-6 * rep.tau / ref_h1).into(),
                ]);
                last_norms = e.solution.coefficient_norms(&rbhmr::mesh::FESpace1D::new(setup.mesh_x()?, rbhmr::mesh::Boundary::ZeroTrace));
                warm = Some(e.solution);
            }
            Err(err) => {
                notes.push((format!("m={m}"), format!("failed: {err}")));
                let mut row = vec![m.into(), k.unwrap_or(0).into()];
                row.extend((2..cols.len()).map(|_| nan()));
                table.push(row);
            }
        }
    }
    // coefficient tails from the richest successful solution
    let ci = cols.iter().position(|c| *c == "coeff_tail").unwrap();
    for row in table.rows.iter_mut() {
        let m = row[0].as_f64() as usize;
        if m <= last_norms.len() {
            row[ci] = relative_tail(&last_norms, m).into();
        }
    }
    Ok(table)
}

pub fn run_landscape(cfg: &Config, setup: &Setup) -> Result<StudyOutput> {
    let mut out = StudyOutput::default();
    let (setup, ctx, spaces) = resolve_spaces(cfg, setup, &mut out)?;
    let m_max = cfg.get::<usize>("study.m_max")?.min(spaces.solution.m());
    let ks: Vec<usize> = cfg.list("study.k_list")?;
    let ev = Evaluator::new(&setup, &ctx, &spaces)?;
    let mut table = Table::new(LANDSCAPE_COLUMNS);
    let mut plot = LinePlot {
        title: "error over model order and collateral size".into(),
        x_label: "m".into(),
        y_label: "relative H1 model error".into(),
        log_y: true,
        ..Default::default()
    };
    for &k in &ks {
        let mut pts = Vec::new();
        let mut warm = None;
        for m in 1..=m_max {
            let row = match ev.evaluate(m, Some(k), warm.as_ref(), false, false) {
                Ok(e) => {
                    let status = if e.rel_h1 > 1.0 || m > e.k { "unstable" } else { "ok" };
                    pts.push((m as f64, e.rel_h1));
                    let r = vec![m.into(), e.k.into(), e.rel_h1.into(), e.rel_l2.into(), e.iterations.into(), status.into()];
                    warm = Some(e.solution);
                    r
                }
                Err(err) => {
                    out.note(format!("m={m} k={k}"), format!("failed: {err}"));
                    pts.push((m as f64, f64::NAN));
                    vec![m.into(), k.into(), f64::NAN.into(), f64::NAN.into(), 0usize.into(), "failed".into()]
                }
            };
            table.push(row);
        }
        plot.series.push(Series::new(format!("k = {k}"), pts));
    }
    out.tables.push(("landscape".into(), table));
    out.plots.push(("landscape".into(), plot));
    Ok(out)
}

pub fn run_infsup(cfg: &Config, setup: &Setup) -> Result<StudyOutput> {
    let mut out = StudyOutput::default();
    let ctx = setup.context()?;
    let (manifolds, n_train, _, log) = pipeline::train(setup, &ctx)?;
    for l in log {
        out.note("training", l);
    }
    out.note("n_train", n_train);
    let table = infsup_table(cfg, setup, &ctx, |eps| {
        let s = SpaceSettings {
            eps_epm: eps,
            ..setup.spaces.clone()
        };
        Ok(build_spaces(&ctx, &manifolds, &s)?)
    }, &mut out.notes)?;
    out.tables.push(("infsup".into(), table));
    Ok(out)
}

/// Inf-sup rows for every `(eps, m)` of `study.eps_list` x `study.m_list`.
pub fn infsup_table<F>(cfg: &Config, setup: &Setup, ctx: &TransverseContext, mut spaces_for: F, notes: &mut Vec<(String, String)>) -> Result<Table>
where
    F: FnMut(f64) -> Result<ReducedSpaces>,
{
    let eps_list: Vec<f64> = cfg.list("study.eps_list")?;
    let m_list: Vec<usize> = cfg.list("study.m_list")?;
    let exact_allowed = setup.exact_infsup && setup.space()?.dim() <= setup.exact_max_dofs;
    if setup.exact_infsup && !exact_allowed {
        notes.push(("beta_exact".into(), format!("skipped: more than {} unknowns", setup.exact_max_dofs)));
    }
    let mut table = Table::new(INFSUP_COLUMNS);
    for &eps in &eps_list {
        let spaces = spaces_for(eps)?;
        let ev = Evaluator::new(setup, ctx, &spaces)?;
        let mut warm = None;
        for &m in &m_list {
            if m > spaces.solution.m() {
                notes.push((format!("m={m}"), "skipped: fewer modes available".into()));
                continue;
            }
            match ev.evaluate(m, None, warm.as_ref(), true, exact_allowed) {
                Ok(e) => {
                    let app = e.report.as_ref().map_or(f64::NAN, |r| r.beta_app);
                    let exact = e.beta_exact.unwrap_or(f64::NAN);
                    table.push(vec![m.into(), eps.into(), app.into(), exact.into(), ((app - exact).abs() / exact).into()]);
                    warm = Some(e.solution);
                }
                Err(err) => {
                    notes.push((format!("m={m} eps={eps:e}"), format!("failed: {err}")));
                    table.push(vec![m.into(), eps.into(), f64::NAN.into(), f64::NAN.into(), f64::NAN.into()]);
                }
            }
        }
    }
    Ok(table)
}

/// Wall-clock seconds of one full RB-HMR run (offline + online) and of the 2D solver.
pub struct Timing {
    pub fem: f64,
    pub offline: f64,
    pub online: f64,
}

pub fn time_once(setup: &Setup, m: usize) -> Result<Timing> {
    let t = Instant::now();
    pipeline::solve_reference(setup)?;
    let fem = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let ctx = setup.context()?;
    let off = pipeline::offline(setup, &ctx)?;
    let offline = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let spaces = &off.archive.spaces;
    let m = m.clamp(1, spaces.solution.m());
    let mut solver = spaces.solver(&ctx, setup.mesh_x()?, m, None, setup.jacobian)?;
    solver.newton = setup.newton;
    solver.linear = setup.linear;
    solver.solve()?;
    let online = t.elapsed().as_secs_f64();
    Ok(Timing { fem, offline, online })
}

pub fn run_runtime(cfg: &Config, setup: &Setup) -> Result<StudyOutput> {
    let mut out = StudyOutput::default();
    let nhs: Vec<usize> = cfg.list("study.NH_list")?;
    let ratio: f64 = cfg.get("study.nh_ratio")?;
    let repeats: usize = cfg.get::<usize>("study.repeats")?.max(1);
    let m: usize = cfg.get("study.m")?;
    let mut table = Table::new(RUNTIME_COLUMNS);
    for &nx in &nhs {
        let ny = ((nx as f64 * ratio).round() as usize).max(2);
        let s = setup.with_mesh(nx, ny);
        let mut fem = Vec::new();
        let mut off = Vec::new();
        let mut on = Vec::new();
        let mut tot = Vec::new();
        for _ in 0..repeats {
            let t = time_once(&s, m)?;
            fem.push(t.fem);
            off.push(t.offline);
            on.push(t.online);
            tot.push(t.offline + t.online);
        }
        table.push(vec![
            nx.into(),
            ny.into(),
            median(&mut fem).into(),
            median(&mut off).into(),
            median(&mut on).into(),
            median(&mut tot).into(),
        ]);
    }
    let xs = table.column("NH");
    let mut fit = Table::new(&["quantity", "slope"]);
    let mut plot = LinePlot {
        title: "run time".into(),
        x_label: "N_H".into(),
        y_label: "seconds".into(),
        log_x: true,
        log_y: true,
        ..Default::default()
    };
    for (col, name) in [("fem_seconds", "full 2D FEM"), ("rb_total_seconds", "RB-HMR total"), ("rb_online_seconds", "RB-HMR online")] {
        let ys = table.column(col);
        if let Some(slope) = loglog_slope(&xs, &ys) {
            fit.push(vec![col.into(), slope.into()]);
            out.note(format!("slope {col}"), format!("{slope:.3}"));
        }
        plot.series.push(Series::new(name, xs.iter().copied().zip(ys).collect()));
    }
    out.tables.push(("runtime".into(), table));
    if !fit.rows.is_empty() {
        out.tables.push(("runtime_fit".into(), fit));
    }
    out.plots.push(("runtime".into(), plot));
    Ok(out)
}

/// One row of the projection bounds for `k` collateral functions.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub k: usize,
    pub k_enriched: usize,
    pub pod_tail: f64,
    pub coeff_tail: f64,
    pub true_error: f64,
    pub apriori: f64,
    pub aposteriori: f64,
    pub e_int: f64,
    pub e_int_history: Vec<f64>,
}

/// Projection with the first `k` modes against its enriched partner on `samples`.
/// The a posteriori value is `sqrt(tail(k')) + Delta + sqrt(e_int(k'))`.
pub fn bound_row(space: &FnSpace, modes: &DMatrix<f64>, eigenvalues: &[f64], samples: &DMatrix<f64>, k: usize, settings: &EpmSettings, tol_kprime: f64) -> Result<BoundRow> {
    let k = k.clamp(1, modes.ncols());
    let tail_k = tail_sum(eigenvalues, k);
    let kp = enriched_count(eigenvalues, k, tol_kprime * tail_k.max(0.0).sqrt()).min(modes.ncols());
    let coarse = run_adaptive_epm(space, &modes.columns(0, k).into_owned(), samples, settings)?;
    let true_error = coarse.discrete_error(space, samples);
    let (aposteriori, coeff_tail) = if kp > k {
        let rich = run_adaptive_epm(space, &modes.columns(0, kp).into_owned(), samples, settings)?;
        let delta = if rich.l() > coarse.l() {
            aposteriori_bound(space, &coarse, &rich, samples)?
        } else {
            discrete_gap(space, &coarse, &rich, samples)
        };
        let n = samples.ncols();
        let mut acc = 0.0;
        for j in 0..n {
            let u: Vec<f64> = samples.column(j).iter().copied().collect();
            let c = rich.coefficients(&rich.observe(&u));
            acc += c.iter().skip(k).map(|v| v * v).sum::<f64>();
        }
        let bound = tail_sum(eigenvalues, kp).max(0.0).sqrt() + delta + rich.e_int.max(0.0).sqrt();
        (bound, (acc / n.max(1) as f64).sqrt())
    } else {
        // no richer mode: the tail is exhausted and the bound reduces to the a priori one
        (apriori_bound(tail_k, coarse.e_int), tail_k.max(0.0).sqrt())
    };
    Ok(BoundRow {
        k,
        k_enriched: kp,
        pod_tail: tail_k.max(0.0).sqrt(),
        coeff_tail,
        true_error,
        apriori: apriori_bound(tail_k, coarse.e_int),
        aposteriori,
        e_int: coarse.e_int,
        e_int_history: coarse.e_int_history.clone(),
    })
}

fn discrete_gap(space: &FnSpace, a: &rbhmr::epm::EpmProjector, b: &rbhmr::epm::EpmProjector, samples: &DMatrix<f64>) -> f64 {
    let n = samples.ncols();
    let mut acc = 0.0;
    for j in 0..n {
        let u: Vec<f64> = samples.column(j).iter().copied().collect();
        let d: Vec<f64> = (b.project(&u) - a.project(&u)).iter().copied().collect();
        acc += space.mass().quad(&d, &d);
    }
    (acc / n.max(1) as f64).sqrt()
}

pub fn run_epm_bounds(cfg: &Config, setup: &Setup) -> Result<StudyOutput> {
    let mut out = StudyOutput::default();
    let source: Source = cfg.get("study.source")?;
    let k_max: usize = cfg.get("study.k_max")?;
    let settings = EpmSettings {
        eps_int: setup.spaces.projection.eps_int,
        n_max: setup.spaces.projection.n_max,
        dict: setup.spaces.projection.dict,
    };
    let (space, samples) = match source {
        Source::Training => {
            let component: Component = cfg.get("study.component")?;
            let ctx = setup.context()?;
            let (man, n_train, _, _) = pipeline::train(setup, &ctx)?;
            out.note("component", component.name());
            out.note("n_train", n_train);
            (ctx.component_space(component).clone(), man.components[component.index()].clone())
        }
        other => {
            let space = synthetic::unit_space(setup.n_y)?;
            let n: usize = cfg.get("study.samples")?;
            let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
            let s = match other {
                Source::Smooth => synthetic::smooth(&space, n, &mut rng),
                Source::Step => synthetic::step(&space, n, &mut rng),
                Source::Rank(r) => synthetic::rank(&space, r, n, &mut rng),
                Source::Training => unreachable!(),
            };
            out.note("source", cfg.raw("study.source"));
            (space, s)
        }
    };
    let pod = compute_pod(&samples, &space.mass().to_dense(), Truncation::Tolerance(setup.spaces.projection.eps_err))?;
    let mut table = Table::new(EPM_BOUNDS_COLUMNS);
    for k in 1..=k_max.min(pod.m()) {
        let r = bound_row(&space, &pod.basis, &pod.eigenvalues, &samples, k, &settings, setup.spaces.projection.tol_kprime)?;
        table.push(vec![
            k.into(),
            r.pod_tail.into(),
            r.coeff_tail.into(),
            r.true_error.into(),
            r.apriori.into(),
            r.aposteriori.into(),
            r.e_int.into(),
        ]);
    }
    let ks = table.column("k");
    let mut plot = LinePlot {
        title: "projection error bounds".into(),
        x_label: "k".into(),
        y_label: "L2 error".into(),
        log_y: true,
        ..Default::default()
    };
    for c in ["true_proj_error", "pod_tail", "coeff_tail", "apriori", "aposteriori"] {
        plot.series.push(Series::new(c, ks.iter().copied().zip(table.column(c)).collect()));
    }
    out.tables.push(("epm_bounds".into(), table));
    out.plots.push(("epm_bounds".into(), plot));
    Ok(out)
}
