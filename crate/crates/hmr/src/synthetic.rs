//! Synthetic function manifolds on a uniform P1 space of `[0, 1]`.

use nalgebra::DMatrix;
use rand::Rng;
use rbhmr::eim::FnSpace;
use rbhmr::mesh::build_interval_mesh;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Snapshots from the training run.
    Training,
    Smooth,
    Step,
    /// Random combinations of a fixed number of smooth functions.
    Rank(usize),
}

impl std::str::FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" => Ok(Source::Training),
            "smooth" => Ok(Source::Smooth),
            "step" => Ok(Source::Step),
            other => other
                .strip_prefix("rank:")
                .and_then(|r| r.parse().ok())
                .filter(|r| *r > 0)
                .map(Source::Rank)
                .ok_or_else(|| Error::Config(format!("unknown manifold source `{other}`"))),
        }
    }
}

pub fn unit_space(n_elem: usize) -> Result<FnSpace> {
    Ok(FnSpace::p1(build_interval_mesh(0.0, 1.0, n_elem)?))
}

/// `sin(mu y) + 1 / (1 + mu y^2)` with `mu` uniform in `[0.5, 3]`.
pub fn smooth(space: &FnSpace, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(space.dim(), n);
    for j in 0..n {
        let mu = rng.random_range(0.5..3.0);
        for i in 0..space.dim() {
            let y = space.dof_coordinate(i);
            s[(i, j)] = (mu * y).sin() + 1.0 / (1.0 + mu * y * y);
        }
    }
    s
}

/// Indicator-like steps: `1` left of a jump uniform in `[0.2, 0.8]`, `0.2` right of it.
pub fn step(space: &FnSpace, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(space.dim(), n);
    for j in 0..n {
        let jump = rng.random_range(0.2..0.8);
        for i in 0..space.dim() {
            s[(i, j)] = if space.dof_coordinate(i) < jump { 1.0 } else { 0.2 };
        }
    }
    s
}

/// Random combinations of `sin((l + 1) pi y / 2) + y^l`, `l < rank`.
pub fn rank(space: &FnSpace, r: usize, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let gen = DMatrix::from_fn(space.dim(), r, |i, l| {
        let y = space.dof_coordinate(i);
        ((l + 1) as f64 * std::f64::consts::FRAC_PI_2 * y).sin() + y.powi(l as i32)
    });
    let c = DMatrix::from_fn(r, n, |_, _| rng.random_range(-1.0..1.0));
    gen * c
}

/// Mixed generator: smooth for even `seed`, step for odd.
pub fn mixed(space: &FnSpace, n: usize, seed: u64, rng: &mut impl Rng) -> DMatrix<f64> {
    if seed.is_multiple_of(2) {
        smooth(space, n, rng)
    } else {
        step(space, n, rng)
    }
}
