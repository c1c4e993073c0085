//! Line-oriented `key = value` configuration with dotted sections.
//!
//! Every key has a default; `auto` defers the value to the test case.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{io_err, Error, Result};

/// Known keys with their defaults, in manifest order.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("case", "tc1"),
    ("seed", "1"),
    ("threads", "1"),
    ("mesh.NH", "100"),
    ("mesh.nh", "50"),
    ("model.c0", "auto"),
    ("model.c4", "auto"),
    ("box.x_breaks", "auto"),
    ("box.u", "auto"),
    ("box.du", "auto"),
    ("train.mode", "adaptive"),
    ("train.n_uniform", "300"),
    ("train.m_max", "2"),
    ("train.i_max", "2"),
    ("train.n_xi", "10"),
    ("train.n_c", "50"),
    ("train.theta", "0.05"),
    ("train.sigma_thres", "scaled:1"),
    ("train.NHprime", "10"),
    ("transverse.Q0", "1"),
    ("transverse.Qmax", "1"),
    ("tol.hmr", "1e-5"),
    ("tol.epm", "1e-7"),
    ("tol.err", "1e-9"),
    ("tol.c", "0.1"),
    ("tol.kprime", "1e-2"),
    ("epm.eps_int", "1e-10"),
    ("epm.n_max_int", "0"),
    ("epm.mode", "eim"),
    ("epm.dict_depth", "6"),
    ("solver.tol_newton", "1e-9"),
    ("solver.max_iter", "30"),
    ("solver.linear", "auto"),
    ("solver.jacobian", "consistent"),
    ("brr.p_exponent", "4"),
    ("brr.exact_infsup", "true"),
    ("brr.norm", "euclidean"),
    ("brr.exact_max_dofs", "60000"),
    ("study.archive", "none"),
    ("study.m_max", "10"),
    ("study.m", "5"),
    ("study.k", "auto"),
    ("study.k_list", "5,10,15,20,25"),
    ("study.m_list", "1,2,3,10"),
    ("study.eps_list", "1e-5,1e-7"),
    ("study.NH_list", "50,100,200,400"),
    ("study.nh_ratio", "0.5"),
    ("study.repeats", "3"),
    ("study.component", "flux_x"),
    ("study.k_max", "15"),
    ("study.source", "training"),
    ("study.samples", "50"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<&'static str, String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            values: DEFAULTS.iter().map(|&(k, v)| (k, v.to_string())).collect(),
        }
    }
}

fn known(key: &str) -> Result<&'static str> {
    DEFAULTS
        .iter()
        .map(|&(k, _)| k)
        .find(|k| *k == key)
        .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))
}

impl Config {
    /// Parse `key = value` lines; `#` starts a comment, blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = known(key)?;
        if value.is_empty() {
            return Err(Error::Config(format!("empty value for `{key}`")));
        }
        self.values.insert(k, value.to_string());
        Ok(())
    }

    /// Apply `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{}` is not key=value", o.as_ref())))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key `{key}` missing from the defaults table"))
    }

    pub fn is_auto(&self, key: &str) -> bool {
        self.raw(key) == "auto"
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
    }

    /// `None` for `auto`.
    pub fn get_auto<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        if self.is_auto(key) {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let v = self.raw(key);
        v.split(',')
            .map(|t| t.trim().parse().map_err(|_| Error::Config(format!("bad entry `{t}` in `{key}`"))))
            .collect()
    }

    /// Two-entry list `lo,hi`.
    pub fn range(&self, key: &str) -> Result<Option<(f64, f64)>> {
        if self.is_auto(key) {
            return Ok(None);
        }
        match self.list::<f64>(key)?.as_slice() {
            [lo, hi] if lo < hi => Ok(Some((*lo, *hi))),
            _ => Err(Error::Config(format!("`{key}` needs `lo,hi` with lo < hi"))),
        }
    }

    /// All keys in table order, one `key = value` line each.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, _) in DEFAULTS {
            let _ = writeln!(out, "{k} = {}", self.raw(k));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render_round_trip() {
        let cfg = Config::parse("# comment\ncase = tc2\n\ntrain.theta = 0.01   # inline\nstudy.m_list = 1, 4\n").unwrap();
        assert_eq!(cfg.raw("case"), "tc2");
        assert_eq!(cfg.get::<f64>("train.theta").unwrap(), 0.01);
        assert_eq!(cfg.list::<usize>("study.m_list").unwrap(), vec![1, 4]);
        assert_eq!(Config::parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_and_bad_line_are_config_errors() {
        assert!(matches!(Config::parse("train.bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("no equals sign"), Err(Error::Config(_))));
        let cfg = Config::parse("train.m_max = two").unwrap();
        assert!(matches!(cfg.get::<usize>("train.m_max"), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_and_auto() {
        let mut cfg = Config::default();
        assert!(cfg.get_auto::<f64>("model.c0").unwrap().is_none());
        cfg.apply_overrides(&["model.c0=0.2", "box.u = -1,1"]).unwrap();
        assert_eq!(cfg.get_auto::<f64>("model.c0").unwrap(), Some(0.2));
        assert_eq!(cfg.range("box.u").unwrap(), Some((-1.0, 1.0)));
        cfg.set("box.du", "1,-1").unwrap();
        assert!(cfg.range("box.du").is_err());
        assert!(cfg.apply_overrides(&["seed"]).is_err());
    }
}
