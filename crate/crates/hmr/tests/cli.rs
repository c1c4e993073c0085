//! Command-line behavior: exit codes, manifests, CSV schemas and reruns.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hmr::output::{manifest_config, read_csv};

const SMALL: &str = "case = tc1\nmesh.NH = 20\nmesh.nh = 10\ntrain.mode = uniform\ntrain.n_uniform = 60\n";

fn hmr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmr")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.conf");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn offline(dir: &Path, conf: &str, name: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let o = hmr(&["offline", "--config", conf, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), SMALL);
    let unknown = hmr(&["offline", "--config", &conf, "--set", "mesh.bogus=3"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("mesh.bogus"));
    let missing = hmr(&["offline", "--config", dir.path().join("nope.conf").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    let kind = hmr(&["study", "sideways", "--config", &conf]);
    assert_eq!(kind.status.code(), Some(2));
    let threads = hmr(&["offline", "--config", &conf, "--threads", "0"]);
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn offline_then_solve_from_archive() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), SMALL);
    let out = offline(dir.path(), &conf, "off");
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed: 1"));
    assert!(manifest.contains("basis.hmr"));
    let block = manifest_config(&manifest).unwrap();
    assert!(block.contains("mesh.NH = 20") && block.contains("tol.epm = "));
    let (header, rows) = read_csv(&out.join("spectrum.csv")).unwrap();
    assert_eq!(header, ["index", "solution", "flux_x", "flux_y", "diff", "diff_grad_x", "diff_grad_y"]);
    assert!(rows[0][1] > 0.0);

    let solved = dir.path().join("solve");
    let archive = out.join("basis.hmr");
    let o = hmr(&["solve", "--config", &conf, "--archive", archive.to_str().unwrap(), "--out", solved.to_str().unwrap(), "--set", "study.m=2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&solved.join("coefficients.csv")).unwrap();
    assert_eq!(header, ["x", "mode", "value"]);
    // two modes on the 19 interior nodes
    assert_eq!(rows.len(), 2 * 19);
    let m = fs::read_to_string(solved.join("manifest.txt")).unwrap();
    assert!(m.contains("archive: ") && m.contains("newton_iterations: "));
}

#[test]
fn damaged_archive_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), SMALL);
    let out = offline(dir.path(), &conf, "off");
    let text = fs::read_to_string(out.join("basis.hmr")).unwrap();
    let bad = dir.path().join("bad.hmr");
    fs::write(&bad, text.replacen("# version: 1", "# version: 99", 1)).unwrap();
    let o = hmr(&["solve", "--config", &conf, "--archive", bad.to_str().unwrap(), "--out", dir.path().join("s").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn reruns_from_manifest_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), SMALL);
    let first = offline(dir.path(), &conf, "a");
    let manifest = fs::read_to_string(first.join("manifest.txt")).unwrap();
    let replay = dir.path().join("replay.conf");
    fs::write(&replay, manifest_config(&manifest).unwrap()).unwrap();
    let second = offline(dir.path(), replay.to_str().unwrap(), "b");
    for name in ["basis.hmr", "spectrum.csv", "collateral.csv"] {
        let a = fs::read(first.join(name)).unwrap();
        let b = fs::read(second.join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
}

#[test]
fn study_tables_follow_their_schema() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "case = tc1\nmesh.nh = 64\nstudy.source = step\nstudy.k_max = 4\nepm.n_max_int = 3\n");
    let out = dir.path().join("bounds");
    let o = hmr(&["study", "epm-bounds", "--config", &conf, "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("epm_bounds.csv")).unwrap();
    assert_eq!(header, hmr::studies::EPM_BOUNDS_COLUMNS);
    assert_eq!(rows.len(), 4);
    for r in &rows {
        // the a posteriori bound dominates the true projection error
        assert!(r[5] >= r[3], "{r:?}");
    }
    assert!(out.join("epm_bounds.svg").exists());
    assert!(fs::read_to_string(out.join("manifest.txt")).unwrap().contains("seed: 5"));
}
