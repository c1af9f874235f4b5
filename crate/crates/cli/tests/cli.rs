use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fivegrad"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(sub).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn meta(path: &Path) -> Vec<(String, String)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(" = ").map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

fn lookup<'a>(m: &'a [(String, String)], key: &str) -> &'a str {
    &m.iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("missing {key}")).1
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().to_string()).collect()
}

const SAME_DENSITY: &str = r#"
[grid]
n = 32

[cost]
kind = "power"
p = 2.0

[source]
kind = "random"

[target]
kind = "random"
"#;

#[test]
fn solve_ot_identical_densities_cost_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SAME_DENSITY);
    let out = tmp.path().join("out");
    let o = run("solve-ot", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = meta(&out.join("meta"));
    assert!(lookup(&m, "primal").parse::<f64>().unwrap().abs() < 1e-14);
    for f in ["coupling.csv", "phi.csv", "psi.csv", "map.csv", "manifest"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest = meta(&out.join("manifest"));
    assert_eq!(lookup(&manifest, "seed"), "0");
    assert_eq!(lookup(&manifest, "config_sha256").len(), 64);
}

#[test]
fn invalid_exponent_is_a_configuration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &SAME_DENSITY.replace("p = 2.0", "p = 0.5"));
    let o = run("solve-ot", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`p`"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &SAME_DENSITY.replace("n = 32", "n = 32\ncells = 4"));
    let o = run("solve-ot", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cells"));
}

#[test]
fn shipped_solve_config_matches_golden_meta() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run("solve-ot", &configs().join("solve_ot.toml"), &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let got = meta(&out.join("meta"));
    let want = meta(&configs().join("golden/solve_ot.meta"));
    for key in ["solver", "cost", "cells"] {
        assert_eq!(lookup(&got, key), lookup(&want, key), "{key}");
    }
    let primal = |m: &[(String, String)]| lookup(m, "primal").parse::<f64>().unwrap();
    assert!((primal(&got) - primal(&want)).abs() <= 1e-8);
}

const SINGLE_BATCH: &str = r#"
seed = 5

[batch]
count = 1
p = [2.0]
q = [2.0]
n = [32]
identical = true
"#;

#[test]
fn verify_single_identical_instance_passes_with_zero_lhs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "b.toml", SINGLE_BATCH);
    let out = tmp.path().join("out");
    let o = run("verify-5g", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lhs = csv_column(&out.join("reports.csv"), "lhs");
    assert_eq!(lhs.len(), 1);
    assert!(lhs[0].parse::<f64>().unwrap().abs() < 1e-12);
    assert_eq!(csv_column(&out.join("reports.csv"), "pass"), vec!["true"]);
}

#[test]
fn verify_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SINGLE_BATCH.replace("count = 1", "count = 3").replace("identical = true", "");
    let cfg = write_config(tmp.path(), "b.toml", &text);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run("verify-5g", &cfg, &a, &[]).status.success());
    assert!(run("verify-5g", &cfg, &b, &["--threads", "1"]).status.success());
    assert_eq!(fs::read(a.join("reports.csv")).unwrap(), fs::read(b.join("reports.csv")).unwrap());
    assert_eq!(fs::read(a.join("manifest")).unwrap(), fs::read(b.join("manifest")).unwrap());
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SINGLE_BATCH.replace("identical = true", "");
    let cfg = write_config(tmp.path(), "b.toml", &text);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run("verify-5g", &cfg, &a, &[]).status.success());
    assert!(run("verify-5g", &cfg, &b, &["--seed", "6"]).status.success());
    assert_eq!(csv_column(&b.join("reports.csv"), "seed"), vec!["6"]);
    assert_ne!(csv_column(&a.join("reports.csv"), "lhs"), csv_column(&b.join("reports.csv"), "lhs"));
}

#[test]
fn failing_batch_exits_with_acceptance_code() {
    let tmp = tempfile::tempdir().unwrap();
    // three cells are too few for the gradient stencils, so the instance errors
    let text = SINGLE_BATCH.replace("n = [32]", "n = [3]");
    let cfg = write_config(tmp.path(), "b.toml", &text);
    let out = tmp.path().join("out");
    let o = run("verify-5g", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("errors.csv").exists());
}

const JKO_ZERO: &str = r#"
[grid]
n = 32

[initial]
kind = "bump"
center = [0.5]
width = 0.1
floor = 0.05

[jko]
p = 2.0
tau = 1e-3
steps = 0
energy = { kind = "entropy" }
"#;

#[test]
fn jko_with_no_steps_writes_one_density_and_creates_the_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "j.toml", JKO_ZERO);
    let out = tmp.path().join("nested/run");
    let o = run("jko", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_column(&out.join("trace.csv"), "step"), vec!["0"]);
    assert!(out.join("density_0000.csv").exists());
    assert!(!out.join("density_0001.csv").exists());
}

#[test]
fn jko_unwritable_output_is_a_configuration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "j.toml", JKO_ZERO);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run("jko", &cfg, &blocker.join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn jko_short_heat_run_has_nonincreasing_tv() {
    let tmp = tempfile::tempdir().unwrap();
    let text = JKO_ZERO.replace("steps = 0", "steps = 5").replace("[grid]", "tv_slack = 1e-3\n\n[grid]");
    let cfg = write_config(tmp.path(), "j.toml", &text);
    let out = tmp.path().join("out");
    let o = run("jko", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tv: Vec<f64> = csv_column(&out.join("trace.csv"), "tv").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(tv.len(), 6);
    assert!(tv.windows(2).all(|w| w[1] <= w[0] + 1e-3 * tv[0]));
}

const MOLLIFY: &str = r#"
seed = 2

[grid]
n = 64

[cost]
kind = "power"
p = 2.0

[source]
kind = "random"

[target]
kind = "random"
offset = 1

[mollify]
epsilons = [0.2, 0.1, 0.05]
"#;

#[test]
fn mollify_quadratic_deviations_vanish() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "m.toml", MOLLIFY);
    let out = tmp.path().join("out");
    let o = run("mollify-study", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for v in csv_column(&out.join("convergence.csv"), "gradient_deviation") {
        assert!(v.parse::<f64>().unwrap() < 1e-12, "{v}");
    }
}

#[test]
fn mollify_power_deviation_column_is_nonincreasing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "m.toml", &MOLLIFY.replace("p = 2.0", "p = 1.5"));
    let out = tmp.path().join("out");
    let o = run("mollify-study", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dev: Vec<f64> =
        csv_column(&out.join("convergence.csv"), "gradient_deviation").iter().map(|s| s.parse().unwrap()).collect();
    assert!(dev.windows(2).all(|w| w[1] <= w[0]), "{dev:?}");
}

#[test]
fn mollify_empty_epsilon_list_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "m.toml", &MOLLIFY.replace("[0.2, 0.1, 0.05]", "[]"));
    let o = run("mollify-study", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ctransform_matches_brute_force() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run("ctransform", &configs().join("ctransform.toml"), &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let read = |p: &Path| -> Vec<(f64, f64)> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let (x, v) = l.split_once(',').unwrap();
                (x.parse().unwrap(), v.parse().unwrap())
            })
            .collect()
    };
    let psi = read(&configs().join("data/psi.csv"));
    let phi = read(&out.join("phi.csv"));
    for (x, v) in &phi {
        let brute = psi.iter().map(|(y, p)| (x - y) * (x - y) / 2.0 - p).fold(f64::INFINITY, f64::min);
        assert!((v - brute).abs() < 1e-14);
    }
}

#[test]
fn missing_output_directory_everywhere_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SAME_DENSITY);
    let o = bin().arg("solve-ot").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_acceptance_batch_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run("verify-5g", &configs().join("verify_5g.toml"), &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_column(&out.join("reports.csv"), "pass").len(), 180);
}

#[test]
fn shipped_heat_benchmark_has_nonincreasing_tv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run("jko", &configs().join("jko_heat.toml"), &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tv: Vec<f64> = csv_column(&out.join("trace.csv"), "tv").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(tv.len(), 51);
    assert!(tv.windows(2).all(|w| w[1] <= w[0] + 1e-3 * tv[0]));
    assert_eq!(csv_column(&out.join("comparison.csv"), "time").len(), 5);
}
