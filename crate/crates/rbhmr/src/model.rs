//! Nonlinear diffusion model problem `-div(d(p) grad p) = s` and its two test cases.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionParams {
    pub c0: f64,
    pub c4: f64,
}

impl DiffusionParams {
    pub fn new(c0: f64, c4: f64) -> Result<Self> {
        if !(c0 > 0.0) || !(c4 > 0.0) {
            return Err(Error::InvalidInput(format!("diffusion needs c0 > 0 and c4 > 0, got c0={c0}, c4={c4}")));
        }
        Ok(DiffusionParams { c0, c4 })
    }
}

/// Diffusion coefficient and its first two derivatives at `p`.
pub fn diffusion(p: f64, params: &DiffusionParams) -> Result<(f64, f64, f64)> {
    let a = 36.0 / params.c4;
    let b = 12.0 / params.c4;
    let q = 1.0 - p;
    let den = p * p * p + b * q * q * q;
    if den.abs() < 1e-14 {
        return Err(Error::Domain(format!("diffusion denominator vanishes at p = {p}")));
    }
    let num = a * p * p * q * q;
    let dnum = 2.0 * a * p * q * (1.0 - 2.0 * p);
    let ddnum = 2.0 * a * (1.0 - 6.0 * p + 6.0 * p * p);
    let dden = 3.0 * p * p - 3.0 * b * q * q;
    let ddden = 6.0 * p + 6.0 * b * q;
    let d2 = den * den;
    let d3 = d2 * den;
    let d = num / d2 + params.c0;
    let d1 = dnum / d2 - 2.0 * num * dden / d3;
    let dd = ddnum / d2 - 4.0 * dnum * dden / d3 - 2.0 * num * ddden / d3 + 6.0 * num * dden * dden / (d3 * den);
    Ok((d, d1, dd))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestCaseTag {
    Tc1,
    Tc2,
}

impl std::str::FromStr for TestCaseTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tc1" => Ok(TestCaseTag::Tc1),
            "tc2" => Ok(TestCaseTag::Tc2),
            other => Err(Error::Config(format!("unknown test case `{other}`"))),
        }
    }
}

impl std::fmt::Display for TestCaseTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TestCaseTag::Tc1 => "tc1",
            TestCaseTag::Tc2 => "tc2",
        })
    }
}

/// A rectangle `(0, x1) x (y0, y1)`, diffusion parameters and a source.
#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub tag: TestCaseTag,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub params: DiffusionParams,
}

impl TestCase {
    pub fn tc1() -> Self {
        TestCase {
            tag: TestCaseTag::Tc1,
            x0: 0.0,
            x1: 2.0,
            y0: 0.0,
            y1: 1.0,
            params: DiffusionParams { c0: 0.1, c4: 36.0 },
        }
    }

    pub fn tc2() -> Self {
        TestCase {
            tag: TestCaseTag::Tc2,
            x0: 0.0,
            x1: 2.0,
            y0: 0.0,
            y1: 1.0,
            params: DiffusionParams { c0: 0.075, c4: 12.0 },
        }
    }

    pub fn from_tag(tag: TestCaseTag) -> Self {
        match tag {
            TestCaseTag::Tc1 => Self::tc1(),
            TestCaseTag::Tc2 => Self::tc2(),
        }
    }

    pub fn with_params(mut self, params: DiffusionParams) -> Self {
        self.params = params;
        self
    }

    pub fn source(&self, x: f64, y: f64) -> f64 {
        match self.tag {
            TestCaseTag::Tc1 => tc1_source(x, y, &self.params),
            TestCaseTag::Tc2 => tc2_source(x, y),
        }
    }

    pub fn exact(&self, x: f64, y: f64) -> Option<f64> {
        match self.tag {
            TestCaseTag::Tc1 => Some(tc1_exact(x, y)),
            TestCaseTag::Tc2 => None,
        }
    }

    /// Exact gradient, where the closed form is known.
    pub fn exact_gradient(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        match self.tag {
            TestCaseTag::Tc1 => {
                let (xv, xd, _) = tc1_x_factor(x);
                let (yv, yd, _) = tc1_y_factor(y);
                Some((xd * yv, xv * yd))
            }
            TestCaseTag::Tc2 => None,
        }
    }
}

fn tc1_x_factor(x: f64) -> (f64, f64, f64) {
    let s = (2.0 * PI * x).sin();
    let c = (2.0 * PI * x).cos();
    let e = s.exp();
    let e1 = 2.0 * PI * c * e;
    let e2 = 4.0 * PI * PI * (c * c - s) * e;
    let g = x * (2.0 - x);
    let g1 = 2.0 - 2.0 * x;
    (g * e, g1 * e + g * e1, -2.0 * e + 2.0 * g1 * e1 + g * e2)
}

fn tc1_y_factor(y: f64) -> (f64, f64, f64) {
    let v = 0.75 * y.powi(2) - 2.5 * y.powi(3) + 2.75 * y.powi(4) - y.powi(5);
    let d = 1.5 * y - 7.5 * y.powi(2) + 11.0 * y.powi(3) - 5.0 * y.powi(4);
    let dd = 1.5 - 15.0 * y + 33.0 * y.powi(2) - 20.0 * y.powi(3);
    (v, d, dd)
}

pub fn tc1_exact(x: f64, y: f64) -> f64 {
    tc1_x_factor(x).0 * tc1_y_factor(y).0
}

/// Forcing for which `tc1_exact` solves the model problem.
pub fn tc1_source(x: f64, y: f64, params: &DiffusionParams) -> f64 {
    let (xv, xd, xdd) = tc1_x_factor(x);
    let (yv, yd, ydd) = tc1_y_factor(y);
    let p = xv * yv;
    let (px, py) = (xd * yv, xv * yd);
    let lap = xdd * yv + xv * ydd;
    // The exact solution stays in [-0.02, 0.05] where the denominator is positive.
    let (d, d1, _) = diffusion(p, params).expect("tc1 solution range keeps the denominator positive");
    -d1 * (px * px + py * py) - d * lap
}

pub fn tc2_source(x: f64, y: f64) -> f64 {
    let in_box = |xa: f64, xb: f64, ya: f64, yb: f64| x >= xa && x <= xb && y >= ya && y <= yb;
    if in_box(0.4, 0.6, 0.2, 0.36) || in_box(0.4, 0.6, 0.64, 0.8) || in_box(1.4, 1.6, 0.4, 0.6) {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diffusion_reference_values() {
        let pr = DiffusionParams::new(0.1, 36.0).unwrap();
        assert_relative_eq!(diffusion(0.0, &pr).unwrap().0, 0.1);
        assert_relative_eq!(diffusion(1.0, &pr).unwrap().0, 0.1);
        assert_relative_eq!(diffusion(0.5, &pr).unwrap().0, 2.35, epsilon = 1e-12);
    }

    #[test]
    fn derivatives_match_central_differences() {
        for pr in [DiffusionParams { c0: 0.1, c4: 36.0 }, DiffusionParams { c0: 0.075, c4: 12.0 }] {
            let mut p = -0.45;
            while p < 1.45 {
                let eps = 1e-5;
                let (d, d1, d2) = diffusion(p, &pr).unwrap();
                let (dp, d1p, _) = diffusion(p + eps, &pr).unwrap();
                let (dm, d1m, _) = diffusion(p - eps, &pr).unwrap();
                let fd1 = (dp - dm) / (2.0 * eps);
                let fd2 = (d1p - d1m) / (2.0 * eps);
                assert!((fd1 - d1).abs() <= 1e-6 * d1.abs().max(1.0), "d' at {p}");
                assert!((fd2 - d2).abs() <= 1e-6 * d2.abs().max(1.0), "d'' at {p}");
                assert!(d >= pr.c0);
                p += 0.013;
            }
        }
    }

    #[test]
    fn tc1_boundary_and_center() {
        assert_eq!(tc1_exact(0.0, 0.5), 0.0);
        assert_eq!(tc1_exact(1.0, 0.0), 0.0);
        assert_relative_eq!(tc1_exact(1.0, 0.5), 0.015625, epsilon = 1e-14);
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            assert!(tc1_exact(2.0 * t, 0.0).abs() < 1e-14);
            assert!(tc1_exact(2.0 * t, 1.0).abs() < 1e-14);
            assert!(tc1_exact(0.0, t).abs() < 1e-14);
            assert!(tc1_exact(2.0, t).abs() < 1e-14);
        }
    }

    fn fd_operator(x: f64, y: f64, pr: &DiffusionParams) -> f64 {
        // Flux-form central differences of -div(d(p) grad p).
        let h = 1e-4;
        let flux_x = |xm: f64| {
            let pm = 0.5 * (tc1_exact(xm - 0.5 * h, y) + tc1_exact(xm + 0.5 * h, y));
            let g = (tc1_exact(xm + 0.5 * h, y) - tc1_exact(xm - 0.5 * h, y)) / h;
            diffusion(pm, pr).unwrap().0 * g
        };
        let flux_y = |ym: f64| {
            let pm = 0.5 * (tc1_exact(x, ym - 0.5 * h) + tc1_exact(x, ym + 0.5 * h));
            let g = (tc1_exact(x, ym + 0.5 * h) - tc1_exact(x, ym - 0.5 * h)) / h;
            diffusion(pm, pr).unwrap().0 * g
        };
        -(flux_x(x + 0.5 * h) - flux_x(x - 0.5 * h)) / h - (flux_y(y + 0.5 * h) - flux_y(y - 0.5 * h)) / h
    }

    #[test]
    fn tc1_source_matches_finite_differences() {
        let pr = TestCase::tc1().params;
        for &(x, y) in &[(1.0, 0.5), (0.3, 0.2), (1.7, 0.8), (0.3, 0.8), (1.7, 0.2)] {
            let s = tc1_source(x, y, &pr);
            let fd = fd_operator(x, y, &pr);
            assert!((s - fd).abs() <= 1e-5 * s.abs().max(1e-3), "({x},{y}): {s} vs {fd}");
        }
        assert!(tc1_source(0.7, 0.0, &pr).is_finite());
    }

    #[test]
    fn tc2_boxes() {
        assert_eq!(tc2_source(0.5, 0.3), 1.0);
        assert_eq!(tc2_source(1.0, 0.5), 0.0);
        assert_eq!(tc2_source(1.5, 0.5), 1.0);
        assert_eq!(tc2_source(0.5, 0.7), 1.0);
        assert_eq!(tc2_source(0.4, 0.2), 1.0);
    }

    #[test]
    fn rejects_nonpositive_params() {
        assert!(DiffusionParams::new(0.0, 1.0).is_err());
        assert!(DiffusionParams::new(1.0, -1.0).is_err());
    }
}
