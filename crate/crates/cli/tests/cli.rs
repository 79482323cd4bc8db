use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hypercont_cli::{merge, Manifest, ScenarioConfig, ScenarioKind};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hypercont"));
    c.env("RUST_LOG", "warn");
    c
}

fn small_config(dir: &Path, scenario: &str, extra: &str) -> std::path::PathBuf {
    let path = dir.join(format!("{scenario}.toml"));
    let text = format!(
        "scenario = \"{scenario}\"\nn = [3, 4]\nn_hat = 6\nnx = 33\nhorizon = 3.0\nrecord_stride = 2\nmesh_resolution = 17\n{extra}"
    );
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn runs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "thm3", "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        run_ok(&["run", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    }
    for name in ["thm3_n3.csv", "thm3_n4.csv", "verdicts.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn cached_kernels_reproduce_fresh_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    let cfg = small_config(tmp.path(), "thm4", &format!("cache = {:?}\nkernel_source = \"numeric\"\n", cache));
    let (fresh, cached, nocache) = (tmp.path().join("f"), tmp.path().join("c"), tmp.path().join("n"));
    run_ok(&["run", cfg.to_str().unwrap(), "--out", fresh.to_str().unwrap()]);
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 2);
    run_ok(&["run", cfg.to_str().unwrap(), "--out", cached.to_str().unwrap()]);
    let plain = small_config(tmp.path(), "thm4", "kernel_source = \"numeric\"\n");
    run_ok(&["run", plain.to_str().unwrap(), "--out", nocache.to_str().unwrap()]);
    for name in ["thm4_n3.csv", "thm4_n4.csv"] {
        let f = fs::read(fresh.join(name)).unwrap();
        assert_eq!(f, fs::read(cached.join(name)).unwrap());
        assert_eq!(f, fs::read(nocache.join(name)).unwrap());
    }
}

#[test]
fn manifest_verification_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "open-loop", "");
    let out = tmp.path().join("o");
    run_ok(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let manifest = out.join("manifest.json");
    let m = Manifest::load(&manifest).unwrap();
    assert_eq!(m.runs.len(), 2);
    assert_eq!(m.all_files().count(), 3);
    run_ok(&["verify", "--manifest", manifest.to_str().unwrap()]);

    let trace = out.join("open-loop_n3.csv");
    let mut text = fs::read_to_string(&trace).unwrap();
    text.push('\n');
    fs::write(&trace, text).unwrap();
    let res = bin().args(["verify", "--manifest", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("open-loop_n3.csv"));
}

#[test]
fn bad_configs_exit_with_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "scenario = \"thm3\"\nnx = 2\n").unwrap();
    let res = bin().args(["run", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
    fs::write(&bad, "colour = \"blue\"\n").unwrap();
    let res = bin().args(["run", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
    let res = bin().args(["run", "--scenario", "thm5"]).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
    let res = bin().args(["run", tmp.path().join("missing.toml").to_str().unwrap()]).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn report_merges_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let cfg = small_config(tmp.path(), "open-loop", "");
    run_ok(&["run", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    run_ok(&["sweep", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--from", "4", "--to", "6", "--step", "2"]);
    let table = tmp.path().join("merged.csv");
    let out = run_ok(&[
        "report",
        a.join("manifest.json").to_str().unwrap(),
        b.join("manifest.json").to_str().unwrap(),
        "--out",
        table.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&table).unwrap();
    let ns: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(ns, ["3", "4", "6"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("open-loop\tn*"));

    let ma = Manifest::load(&a.join("manifest.json")).unwrap();
    let mb = Manifest::load(&b.join("manifest.json")).unwrap();
    let summary = merge(&[ma, mb]);
    assert_eq!(summary.rows.len(), 3);
    assert!(summary.thresholds.contains_key("open-loop"));
}

#[test]
fn solve_kernels_and_residual_check() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "thm3", "");
    let out = tmp.path().join("k");
    run_ok(&["solve-kernels", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let header = fs::read_to_string(out.join("observer_kernels.csv")).unwrap();
    assert!(header.lines().count() > 17 * 18 / 2);
    let res = run_ok(&["verify", cfg.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&res.stdout).contains("Observer"));
    let printed = bin()
        .args(["verify", cfg.to_str().unwrap(), "--closed-form", "example-observer-printed"])
        .output()
        .unwrap();
    assert_eq!(printed.status.code(), Some(2));
}

#[test]
fn config_round_trips_through_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = small_config(tmp.path(), "state-feedback", "delimiter = \";\"\n");
    let out = tmp.path().join("s");
    run_ok(&["run", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--n", "5"]);
    let m = Manifest::load(&out.join("manifest.json")).unwrap();
    let mut expect = ScenarioConfig::load(&cfg_path).unwrap();
    expect.out = out.clone();
    expect.n = vec![5];
    assert_eq!(m.config, expect);
    assert_eq!(m.config.scenario, ScenarioKind::StateFeedback);
    let trace = fs::read_to_string(out.join("state-feedback_n5.csv")).unwrap();
    assert!(trace.lines().next().unwrap().contains(';'));
}
