//! Text archives (`.hmr`) for reduction spaces and collateral units.
//!
//! A file is a block of `# key: value` header lines followed by sections. Each section
//! starts with `[name rows cols]` and holds `rows` lines of `cols` whitespace-separated
//! numbers printed with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::eim::{cardinal, DictKind, Dictionary, FnSpace, Functional, FunctionalKind, InterpSystem};
use crate::epm::{projection_integrals, EpmProjector, EpmSettings};
use crate::error::{Error, Result};
use crate::mesh::Mesh1D;
use crate::model::{DiffusionParams, TestCase, TestCaseTag};
use crate::pod::PodResult;
use crate::training::{CollateralUnit, ProjectionSettings, ReducedSpaces, SpaceSettings};
use crate::transverse::{Component, TransverseContext};

pub const FORMAT_VERSION: &str = "1";

/// Header plus named matrices, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawArchive {
    pub header: Vec<(String, String)>,
    pub sections: Vec<(String, DMatrix<f64>)>,
}

impl RawArchive {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn push(&mut self, name: impl Into<String>, m: DMatrix<f64>) {
        self.sections.push((name.into(), m));
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Parse {
                section: "header".into(),
                msg: format!("missing key `{key}`"),
            })
    }

    pub fn parse_key<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse().map_err(|_| Error::Parse {
            section: "header".into(),
            msg: format!("bad value `{v}` for `{key}`"),
        })
    }

    pub fn section(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Parse {
                section: name.into(),
                msg: "section missing".into(),
            })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            let _ = writeln!(out, "# {k}: {v}");
        }
        for (name, m) in &self.sections {
            let _ = writeln!(out, "[{name} {} {}]", m.nrows(), m.ncols());
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.16e}", m[(r, c)])).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut a = RawArchive::default();
        let mut lines = text.lines().peekable();
        while let Some(line) = lines.peek() {
            let Some(rest) = line.strip_prefix('#') else { break };
            let (k, v) = rest.split_once(':').ok_or_else(|| Error::Parse {
                section: "header".into(),
                msg: format!("malformed header line `{line}`"),
            })?;
            a.header.push((k.trim().to_string(), v.trim().to_string()));
            lines.next();
        }
        while let Some(line) = lines.next() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse {
                section: line.to_string(),
                msg,
            };
            let inner = line
                .strip_prefix('[')
                .and_then(|l| l.strip_suffix(']'))
                .ok_or_else(|| bad("expected a section marker".into()))?;
            let parts: Vec<&str> = inner.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(bad("section marker needs name, rows, cols".into()));
            }
            let name = parts[0].to_string();
            let rows: usize = parts[1].parse().map_err(|_| bad("bad row count".into()))?;
            let cols: usize = parts[2].parse().map_err(|_| bad("bad column count".into()))?;
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                let row = lines.next().ok_or_else(|| Error::Parse {
                    section: name.clone(),
                    msg: format!("file ends after {r} of {rows} rows"),
                })?;
                let vals: Vec<f64> = row
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Parse {
                        section: name.clone(),
                        msg: format!("row {r}: {e}"),
                    })?;
                if vals.len() != cols {
                    return Err(Error::Parse {
                        section: name.clone(),
                        msg: format!("row {r} has {} values, expected {cols}", vals.len()),
                    });
                }
                data.extend(vals);
            }
            a.sections.push((name, DMatrix::from_row_slice(rows, cols, &data)));
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}

fn row(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v)
}

fn row_values(m: &DMatrix<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e12 {
        Ok(v as usize)
    } else {
        Err(Error::Validation(format!("{what} must be a nonnegative integer, got {v}")))
    }
}

/// Reduction space, collateral units and the metadata needed to rebuild the online stage.
#[derive(Debug, Clone)]
pub struct BasisArchive {
    pub case: TestCase,
    pub mesh_y: Mesh1D,
    pub seed: u64,
    pub q: usize,
    pub n_train: usize,
    pub settings: SpaceSettings,
    pub spaces: ReducedSpaces,
}

fn write_projector(raw: &mut RawArchive, prefix: &str, p: &EpmProjector) {
    raw.push(format!("{prefix}.info"), row(&[p.k() as f64, p.e_int, p.n_train as f64, p.parts.len() as f64]));
    raw.push(format!("{prefix}.history"), row(&p.e_int_history));
    for (i, part) in p.parts.iter().enumerate() {
        let pp = format!("{prefix}.part{i}");
        raw.push(format!("{pp}.interval"), row(&[part.a, part.b]));
        let desc = DMatrix::from_fn(part.len(), 3, |r, c| match (&part.functionals[r].kind, c) {
            (FunctionalKind::Point { .. }, 0) => 0.0,
            (FunctionalKind::Point { dof }, 1) => *dof as f64,
            (FunctionalKind::Point { .. }, _) => 0.0,
            (FunctionalKind::Average { .. }, 0) => 1.0,
            (FunctionalKind::Average { a, .. }, 1) => *a,
            (FunctionalKind::Average { b, .. }, _) => *b,
        });
        raw.push(format!("{pp}.functionals"), desc);
        raw.push(format!("{pp}.q"), part.q.clone());
        raw.push(format!("{pp}.b"), part.b_mat.clone());
    }
}

fn read_projector(raw: &RawArchive, prefix: &str, space: &FnSpace, modes: &DMatrix<f64>) -> Result<EpmProjector> {
    let info = row_values(raw.section(&format!("{prefix}.info"))?);
    if info.len() != 4 {
        return Err(Error::Parse {
            section: format!("{prefix}.info"),
            msg: "expected four entries".into(),
        });
    }
    let k = as_count(info[0], "collateral count")?;
    let n_parts = as_count(info[3], "part count")?;
    if k == 0 || k > modes.ncols() {
        return Err(Error::Validation(format!("{prefix}: count {k} outside 1..={}", modes.ncols())));
    }
    let dim = space.dim();
    let mut parts = Vec::with_capacity(n_parts);
    for i in 0..n_parts {
        let pp = format!("{prefix}.part{i}");
        let iv = row_values(raw.section(&format!("{pp}.interval"))?);
        if iv.len() != 2 || !(iv[1] > iv[0]) {
            return Err(Error::Validation(format!("{pp}: bad interval")));
        }
        let desc = raw.section(&format!("{pp}.functionals"))?;
        let mut functionals = Vec::with_capacity(desc.nrows());
        for r in 0..desc.nrows() {
            let f = match desc[(r, 0)] as i64 {
                0 => {
                    let dof = as_count(desc[(r, 1)], "functional dof")?;
                    if dof >= dim {
                        return Err(Error::Validation(format!("{pp}: functional dof {dof} outside the space")));
                    }
                    Functional::point(dof)
                }
                1 => Functional::average(space, desc[(r, 1)], desc[(r, 2)]),
                other => return Err(Error::Validation(format!("{pp}: unknown functional kind {other}"))),
            };
            functionals.push(f);
        }
        let q = raw.section(&format!("{pp}.q"))?.clone();
        let b_mat = raw.section(&format!("{pp}.b"))?.clone();
        if q.nrows() != dim || q.ncols() != functionals.len() {
            return Err(Error::Validation(format!("{pp}: q has shape {:?}", q.shape())));
        }
        let theta = cardinal(&q, &b_mat);
        let sys = InterpSystem {
            a: iv[0],
            b: iv[1],
            functionals,
            q,
            b_mat,
            theta,
        };
        sys.validate()?;
        // B must be the functionals applied to q
        for i in 0..sys.len() {
            for j in 0..sys.len() {
                let v = sys.functionals[i].apply_column(&sys.q, j);
                if (v - sys.b_mat[(i, j)]).abs() > 1e-8 * (1.0 + v.abs()) {
                    return Err(Error::Validation(format!("{pp}: B entry ({i},{j}) does not match the functionals")));
                }
            }
        }
        parts.push(sys);
    }
    let basis = modes.columns(0, k).into_owned();
    let proj = projection_integrals(space, &basis, &parts);
    Ok(EpmProjector {
        basis,
        parts,
        proj,
        e_int: info[1],
        e_int_history: row_values(raw.section(&format!("{prefix}.history"))?),
        n_train: as_count(info[2], "training size")?,
    })
}

fn check_orthonormal(name: &str, modes: &DMatrix<f64>, gram: &DMatrix<f64>) -> Result<()> {
    let g = modes.transpose() * gram * modes;
    let n = g.nrows();
    let dev = (g - DMatrix::identity(n, n)).abs().max();
    if dev > 1e-8 {
        return Err(Error::Validation(format!("{name} modes are not orthonormal (deviation {dev:e})")));
    }
    Ok(())
}

impl BasisArchive {
    pub fn to_raw(&self) -> RawArchive {
        let mut raw = RawArchive::default();
        let s = &self.settings;
        let p = &s.projection;
        raw.set("format", "hmr-archive");
        raw.set("version", FORMAT_VERSION);
        raw.set("testcase", self.case.tag);
        raw.set("c0", format!("{:.16e}", self.case.params.c0));
        raw.set("c4", format!("{:.16e}", self.case.params.c4));
        raw.set("x0", format!("{:.16e}", self.case.x0));
        raw.set("x1", format!("{:.16e}", self.case.x1));
        raw.set("seed", self.seed);
        raw.set("Q", self.q);
        raw.set("n_train", self.n_train);
        raw.set("m", self.spaces.m);
        raw.set("tol.hmr", format!("{:e}", s.eps_hmr));
        raw.set("tol.epm", format!("{:e}", s.eps_epm));
        raw.set("tol.err", format!("{:e}", p.eps_err));
        raw.set("tol.kprime", format!("{:e}", p.tol_kprime));
        raw.set("epm.eps_int", format!("{:e}", p.eps_int));
        raw.set("epm.n_max_int", p.n_max);
        raw.set("epm.mode", if p.dict.kind == DictKind::PointEval { "eim" } else { "geim" });
        raw.set("epm.dict_depth", p.dict.depth);
        raw.set("m_cap", s.m_cap);
        raw.set("solution.total", self.spaces.solution.total_count);
        raw.push("mesh_y", row(&self.mesh_y.nodes));
        raw.push("solution.eigenvalues", row(&self.spaces.solution.eigenvalues));
        raw.push("solution.modes", self.spaces.solution.basis.clone());
        for u in &self.spaces.units {
            let n = u.component.name();
            raw.push(format!("{n}.eigenvalues"), row(&u.eigenvalues));
            raw.push(format!("{n}.modes"), u.modes.clone());
            write_projector(&mut raw, &format!("{n}.small"), &u.projector);
            write_projector(&mut raw, &format!("{n}.enriched"), &u.enriched);
        }
        raw
    }

    pub fn from_raw(raw: &RawArchive) -> Result<Self> {
        let version = raw.get("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version.to_string(),
                expected: FORMAT_VERSION.to_string(),
            });
        }
        let tag: TestCaseTag = raw.parse_key("testcase")?;
        let params = DiffusionParams::new(raw.parse_key("c0")?, raw.parse_key("c4")?)?;
        let mut case = TestCase::from_tag(tag).with_params(params);
        case.x0 = raw.parse_key("x0")?;
        case.x1 = raw.parse_key("x1")?;
        let nodes = row_values(raw.section("mesh_y")?);
        if nodes.len() < 2 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("transverse mesh nodes must increase".into()));
        }
        let mesh_y = Mesh1D {
            a: nodes[0],
            b: *nodes.last().unwrap(),
            nodes,
        };
        case.y0 = mesh_y.a;
        case.y1 = mesh_y.b;
        let dict_kind: DictKind = raw.parse_key("epm.mode")?;
        let dict = Dictionary {
            kind: dict_kind,
            depth: raw.parse_key("epm.dict_depth")?,
        };
        let projection = ProjectionSettings {
            eps_err: raw.parse_key("tol.err")?,
            eps_int: raw.parse_key("epm.eps_int")?,
            n_max: raw.parse_key("epm.n_max_int")?,
            dict,
            tol_kprime: raw.parse_key("tol.kprime")?,
        };
        let settings = SpaceSettings {
            eps_hmr: raw.parse_key("tol.hmr")?,
            eps_epm: raw.parse_key("tol.epm")?,
            m_cap: raw.parse_key("m_cap")?,
            projection,
        };
        let ctx = TransverseContext::new(case.clone(), mesh_y.clone())?;
        let gram = ctx.space.mass.to_dense();
        let sol_modes = raw.section("solution.modes")?.clone();
        if sol_modes.nrows() != ctx.space.dim() {
            return Err(Error::Validation(format!(
                "solution modes have {} rows, transverse space has {}",
                sol_modes.nrows(),
                ctx.space.dim()
            )));
        }
        check_orthonormal("solution", &sol_modes, &gram)?;
        let sol_eig = row_values(raw.section("solution.eigenvalues")?);
        let slack = 1e-12 * sol_eig.first().copied().unwrap_or(0.0);
        if sol_eig.windows(2).any(|w| w[1] > w[0] + slack) || sol_eig.iter().any(|v| *v < -slack) {
            return Err(Error::Validation("solution eigenvalues must be nonnegative and nonincreasing".into()));
        }
        let m: usize = raw.parse_key("m")?;
        if m > sol_modes.ncols() {
            return Err(Error::Validation(format!("mode count {m} exceeds stored modes")));
        }
        let solution = PodResult {
            basis: sol_modes,
            total_count: raw.parse_key("solution.total")?,
            eigenvalues: sol_eig,
        };
        let epm_settings = EpmSettings {
            eps_int: settings.projection.eps_int,
            n_max: settings.projection.n_max,
            dict: settings.projection.dict,
        };
        let mut units = Vec::with_capacity(5);
        for c in Component::ALL {
            let n = c.name();
            let space = ctx.component_space(c);
            let modes = raw.section(&format!("{n}.modes"))?.clone();
            if modes.nrows() != space.dim() {
                return Err(Error::Validation(format!("{n} modes have {} rows, space has {}", modes.nrows(), space.dim())));
            }
            check_orthonormal(n, &modes, &space.mass().to_dense())?;
            let small = read_projector(raw, &format!("{n}.small"), space, &modes)?;
            let enriched = read_projector(raw, &format!("{n}.enriched"), space, &modes)?;
            let eig = row_values(raw.section(&format!("{n}.eigenvalues"))?);
            units.push(CollateralUnit::from_parts(c, eig, modes, small, enriched, epm_settings));
        }
        let units: [CollateralUnit; 5] = units.try_into().map_err(|_| Error::Validation("component count".into()))?;
        Ok(BasisArchive {
            case,
            mesh_y,
            seed: raw.parse_key("seed")?,
            q: raw.parse_key("Q")?,
            n_train: raw.parse_key("n_train")?,
            settings,
            spaces: ReducedSpaces { solution, m, units },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_raw().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_raw(&RawArchive::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_interval_mesh;
    use crate::reduced::JacobianMode;
    use crate::training::{build_spaces, uniform_training, Manifolds, ParameterBox};

    fn archive() -> (BasisArchive, TransverseContext) {
        let case = TestCase::tc1();
        let mesh_y = build_interval_mesh(0.0, 1.0, 16).unwrap();
        let ctx = TransverseContext::new(case.clone(), mesh_y.clone()).unwrap();
        let pbox = ParameterBox {
            x_breaks: vec![0.0, 2.0],
            u_range: (-0.5, 0.5),
            du_range: (-1.0, 1.0),
        };
        let samples = uniform_training(&ctx, &pbox, 1, 40, 12).unwrap();
        let man = Manifolds::from_samples(samples.iter()).unwrap();
        let settings = SpaceSettings {
            eps_epm: 1e-6,
            ..Default::default()
        };
        let spaces = build_spaces(&ctx, &man, &settings).unwrap();
        (
            BasisArchive {
                case,
                mesh_y,
                seed: 12,
                q: 1,
                n_train: 40,
                settings,
                spaces,
            },
            ctx,
        )
    }

    #[test]
    fn text_round_trip_is_byte_identical() {
        let (a, _) = archive();
        let t1 = a.to_raw().to_text();
        let back = BasisArchive::from_raw(&RawArchive::from_text(&t1).unwrap()).unwrap();
        let t2 = back.to_raw().to_text();
        assert_eq!(t1, t2);
        assert_eq!(back.spaces.solution.basis, a.spaces.solution.basis);
        for (u, v) in a.spaces.units.iter().zip(&back.spaces.units) {
            assert_eq!(u.projector.proj, v.projector.proj);
            assert_eq!(u.enriched.basis, v.enriched.basis);
        }
    }

    #[test]
    fn reloaded_archive_reproduces_solution() {
        let (a, ctx) = archive();
        let back = BasisArchive::from_raw(&RawArchive::from_text(&a.to_raw().to_text()).unwrap()).unwrap();
        let mx = build_interval_mesh(0.0, 2.0, 12).unwrap();
        let s1 = a.spaces.solver(&ctx, mx.clone(), 3, None, JacobianMode::Collateral).unwrap().solve().unwrap();
        let s2 = back.spaces.solver(&ctx, mx, 3, None, JacobianMode::Collateral).unwrap().solve().unwrap();
        assert!((&s1.coeffs - &s2.coeffs).abs().max() <= 1e-14);
    }

    #[test]
    fn empty_section_has_marker_only() {
        let mut raw = RawArchive::default();
        raw.set("version", FORMAT_VERSION);
        raw.push("solution.modes", DMatrix::zeros(0, 0));
        let text = raw.to_text();
        assert_eq!(text, "# version: 1\n[solution.modes 0 0]\n");
        assert_eq!(RawArchive::from_text(&text).unwrap(), raw);
    }

    #[test]
    fn truncated_file_names_section() {
        let (a, _) = archive();
        let text = a.to_raw().to_text();
        let cut: String = text.lines().take(40).collect::<Vec<_>>().join("\n");
        match RawArchive::from_text(&cut) {
            Err(Error::Parse { section, .. }) => assert_eq!(section, "solution.modes"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tampered_diagonal_is_rejected() {
        let (a, _) = archive();
        let mut raw = a.to_raw();
        let (_, b) = raw.sections.iter_mut().find(|(n, _)| n == "flux_x.small.part0.b").unwrap();
        b[(0, 0)] = 0.5;
        assert!(matches!(BasisArchive::from_raw(&raw), Err(Error::Validation(_))));
        let mut raw = a.to_raw();
        raw.header.iter_mut().find(|(k, _)| k == "version").unwrap().1 = "7".into();
        assert!(matches!(BasisArchive::from_raw(&raw), Err(Error::Version { .. })));
    }

    #[test]
    fn file_io_reports_path() {
        let err = RawArchive::load(Path::new("/nonexistent/dir/x.hmr")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/x.hmr"));
    }
}
