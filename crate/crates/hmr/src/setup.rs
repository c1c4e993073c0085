//! Typed run settings resolved from a [`Config`].

use rbhmr::eim::{DictKind, Dictionary};
use rbhmr::estimate::InfSupNorm;
use rbhmr::linalg::LinearStrategy;
use rbhmr::mesh::{build_interval_mesh, FESpace2D, Mesh1D, TensorMesh2D};
use rbhmr::model::{DiffusionParams, TestCase, TestCaseTag};
use rbhmr::newton::NewtonSettings;
use rbhmr::reduced::JacobianMode;
use rbhmr::training::{ParameterBox, ProjectionSettings, SigmaThreshold, SpaceSettings, TrainingSettings};
use rbhmr::transverse::TransverseContext;

use crate::config::Config;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingMode {
    Adaptive,
    Uniform(usize),
}

#[derive(Debug, Clone)]
pub struct Setup {
    pub case: TestCase,
    pub n_x: usize,
    pub n_y: usize,
    pub seed: u64,
    pub pbox: ParameterBox,
    pub training_mode: TrainingMode,
    pub training: TrainingSettings,
    pub spaces: SpaceSettings,
    pub newton: NewtonSettings,
    pub linear: LinearStrategy,
    pub jacobian: JacobianMode,
    pub norm: InfSupNorm,
    pub p_exponent: f64,
    pub exact_infsup: bool,
    pub exact_max_dofs: usize,
}

/// Parameter box used when the configuration leaves it on `auto`.
pub fn default_box(tag: TestCaseTag, q_max: usize) -> ParameterBox {
    match tag {
        TestCaseTag::Tc1 => ParameterBox {
            x_breaks: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            u_range: (-0.5, 0.5),
            du_range: (-1.0, 1.0),
        },
        TestCaseTag::Tc2 => ParameterBox {
            x_breaks: vec![0.0, 0.4, 0.8, 1.2, 1.6, 2.0],
            u_range: if q_max >= 2 { (0.0, 2.0) } else { (0.0, 1.0) },
            du_range: if q_max >= 2 { (-0.5, 0.5) } else { (-1.0, 1.0) },
        },
    }
}

fn parse_sigma(v: &str) -> Result<SigmaThreshold> {
    let bad = || Error::Config(format!("bad sigma threshold `{v}` (use scaled:F or fixed:V)"));
    let (kind, num) = v.split_once(':').ok_or_else(bad)?;
    let num: f64 = num.trim().parse().map_err(|_| bad())?;
    match kind.trim() {
        "scaled" => Ok(SigmaThreshold::Scaled(num)),
        "fixed" => Ok(SigmaThreshold::Fixed(num)),
        _ => Err(bad()),
    }
}

fn parse_linear(v: &str) -> Result<LinearStrategy> {
    match v {
        "auto" => Ok(LinearStrategy::default()),
        "direct" => Ok(LinearStrategy::Direct),
        "krylov" => Ok(LinearStrategy::Krylov),
        other => other
            .strip_prefix("auto:")
            .and_then(|n| n.parse().ok())
            .map(LinearStrategy::Auto)
            .ok_or_else(|| Error::Config(format!("bad linear strategy `{other}`"))),
    }
}

fn positive(cfg: &Config, key: &str) -> Result<f64> {
    let v: f64 = cfg.get(key)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("`{key}` must be positive, got {v}")))
    }
}

fn count(cfg: &Config, key: &str) -> Result<usize> {
    let v: usize = cfg.get(key)?;
    if v == 0 {
        return Err(Error::Config(format!("`{key}` must be at least 1")));
    }
    Ok(v)
}

impl Setup {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let tag: TestCaseTag = cfg.get("case")?;
        let mut case = TestCase::from_tag(tag);
        let c0 = cfg.get_auto::<f64>("model.c0")?.unwrap_or(case.params.c0);
        let c4 = cfg.get_auto::<f64>("model.c4")?.unwrap_or(case.params.c4);
        case = case.with_params(DiffusionParams::new(c0, c4).map_err(|e| Error::Config(e.to_string()))?);

        let q0 = count(cfg, "transverse.Q0")?;
        let q_max = count(cfg, "transverse.Qmax")?;
        let mut pbox = default_box(tag, q_max);
        if !cfg.is_auto("box.x_breaks") {
            pbox.x_breaks = cfg.list("box.x_breaks")?;
        }
        if let Some(r) = cfg.range("box.u")? {
            pbox.u_range = r;
        }
        if let Some(r) = cfg.range("box.du")? {
            pbox.du_range = r;
        }
        pbox.validate().map_err(|e| Error::Config(e.to_string()))?;

        let dict_kind: DictKind = cfg.get("epm.mode")?;
        let dict = match dict_kind {
            DictKind::PointEval => Dictionary::points(),
            DictKind::LocalAverage => Dictionary::averages(cfg.get("epm.dict_depth")?),
        };
        let projection = ProjectionSettings {
            eps_err: positive(cfg, "tol.err")?,
            eps_int: positive(cfg, "epm.eps_int")?,
            n_max: cfg.get("epm.n_max_int")?,
            dict,
            tol_kprime: positive(cfg, "tol.kprime")?,
        };
        let seed: u64 = cfg.get("seed")?;
        let p_exponent = positive(cfg, "brr.p_exponent")?;
        let training = TrainingSettings {
            m_max: count(cfg, "train.m_max")?,
            i_max: cfg.get("train.i_max")?,
            n_xi: count(cfg, "train.n_xi")?,
            n_c: cfg.get("train.n_c")?,
            theta: positive(cfg, "train.theta")?,
            sigma_thres: parse_sigma(cfg.raw("train.sigma_thres"))?,
            nh_prime: count(cfg, "train.NHprime")?,
            q0,
            q_max,
            eps_c: positive(cfg, "tol.c")?,
            p_exponent,
            projection: projection.clone(),
            seed,
        };
        if training.theta > 1.0 {
            return Err(Error::Config("`train.theta` must lie in (0, 1]".into()));
        }
        if q0 > q_max {
            return Err(Error::Config("`transverse.Q0` exceeds `transverse.Qmax`".into()));
        }
        let training_mode = match cfg.raw("train.mode") {
            "adaptive" => TrainingMode::Adaptive,
            "uniform" => TrainingMode::Uniform(count(cfg, "train.n_uniform")?),
            other => return Err(Error::Config(format!("unknown training mode `{other}`"))),
        };
        let spaces = SpaceSettings {
            eps_hmr: positive(cfg, "tol.hmr")?,
            eps_epm: positive(cfg, "tol.epm")?,
            m_cap: cfg.get::<usize>("study.m_max")?.max(20),
            projection,
        };
        let newton = NewtonSettings {
            tol: positive(cfg, "solver.tol_newton")?,
            max_iter: count(cfg, "solver.max_iter")?,
            ..NewtonSettings::default()
        };
        Ok(Setup {
            case,
            n_x: count(cfg, "mesh.NH")?,
            n_y: count(cfg, "mesh.nh")?,
            seed,
            pbox,
            training_mode,
            training,
            spaces,
            newton,
            linear: parse_linear(cfg.raw("solver.linear"))?,
            jacobian: cfg.get("solver.jacobian")?,
            norm: cfg.get("brr.norm")?,
            p_exponent,
            exact_infsup: cfg.get("brr.exact_infsup")?,
            exact_max_dofs: cfg.get("brr.exact_max_dofs")?,
        })
    }

    /// Same settings on another mesh.
    pub fn with_mesh(&self, n_x: usize, n_y: usize) -> Self {
        Setup {
            n_x,
            n_y,
            ..self.clone()
        }
    }

    pub fn mesh_x(&self) -> Result<Mesh1D> {
        Ok(build_interval_mesh(self.case.x0, self.case.x1, self.n_x)?)
    }

    pub fn mesh_y(&self) -> Result<Mesh1D> {
        Ok(build_interval_mesh(self.case.y0, self.case.y1, self.n_y)?)
    }

    pub fn context(&self) -> Result<TransverseContext> {
        Ok(TransverseContext::new(self.case.clone(), self.mesh_y()?)?)
    }

    pub fn space(&self) -> Result<FESpace2D> {
        Ok(FESpace2D::new(TensorMesh2D {
            mesh_x: self.mesh_x()?,
            mesh_y: self.mesh_y()?,
        })?)
    }
}
