//! Damped Newton iteration shared by the transverse, reduced and reference solvers.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Absolute tolerance on the residual norm.
    pub tol: f64,
    /// Relative tolerance with respect to the initial residual norm (0 disables it).
    pub rel_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tol: 1e-9,
            rel_tol: 0.0,
            max_iter: 30,
            max_halvings: 8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonLog {
    /// Residual norm before the first step and after each accepted step.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl NewtonLog {
    /// Ratio of the last two residual norms, if there are at least two.
    pub fn final_contraction(&self) -> Option<f64> {
        let n = self.residuals.len();
        (n >= 2 && self.residuals[n - 2] > 0.0).then(|| self.residuals[n - 1] / self.residuals[n - 2])
    }
}

/// Run Newton from `x0`. `residual` returns `None` for states outside the admissible
/// domain, `step` returns the update `delta` with `J delta = -r`.
pub fn solve<R, N, S>(x0: Vec<f64>, settings: &NewtonSettings, mut residual: R, norm: N, mut step: S) -> Result<(Vec<f64>, NewtonLog)>
where
    R: FnMut(&[f64]) -> Option<Vec<f64>>,
    N: Fn(&[f64]) -> f64,
    S: FnMut(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    let mut x = x0;
    let mut r = residual(&x).ok_or_else(|| Error::Divergence {
        reason: "initial state outside the admissible domain".into(),
        history: Vec::new(),
    })?;
    let mut rn = norm(&r);
    let mut log = NewtonLog {
        residuals: vec![rn],
        iterations: 0,
    };
    let target = settings.tol.max(settings.rel_tol * rn);
    while rn > target {
        if log.iterations >= settings.max_iter {
            return Err(Error::Divergence {
                reason: format!("no convergence in {} iterations", settings.max_iter),
                history: log.residuals,
            });
        }
        if !rn.is_finite() {
            return Err(Error::Divergence {
                reason: "non-finite residual".into(),
                history: log.residuals,
            });
        }
        let delta = step(&x, &r)?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
            if let Some(rt) = residual(&trial) {
                let tn = norm(&rt);
                if tn.is_finite() && tn < rn {
                    accepted = Some((trial, rt, tn));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((xn, rt, tn)) = accepted else {
            return Err(Error::Divergence {
                reason: "line search exhausted".into(),
                history: log.residuals,
            });
        };
        x = xn;
        r = rt;
        rn = tn;
        log.iterations += 1;
        log.residuals.push(rn);
    }
    Ok((x, log))
}
