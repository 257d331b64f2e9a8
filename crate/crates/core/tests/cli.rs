mod common;

use std::ffi::OsStr;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use beamloc::persist::load_dataset;
use beamloc::preprocess::Split;
use beamloc::train::{ComparisonReport, Method, TABLE_ROWS};
use common::dir_bytes;

fn beamloc<S: AsRef<OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamloc")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok<S: AsRef<OsStr> + std::fmt::Debug>(args: &[S]) -> String {
    let o = beamloc(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn code<S: AsRef<OsStr>>(args: &[S]) -> (i32, String) {
    let o = beamloc(args);
    (o.status.code().unwrap(), stderr(&o))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// 48 snapshots per lap instead of 480.
const FAST: [&str; 2] = ["--speed-kmh", "150"];

fn gen(dir: &Path, scenario: &str, laps: &str, seed: &str) {
    let mut args = vec!["gen", "--scenario", scenario, "--laps", laps, "--seed", seed, "--out", p(dir)];
    args.extend(FAST);
    ok(&args);
}

#[test]
fn help_documents_every_command() {
    let top = ok(&["--help"]);
    for cmd in ["gen", "mix", "train", "train-router", "compare"] {
        assert!(top.contains(cmd), "{top}");
    }
    let gen = ok(&["gen", "--help"]);
    for flag in [
        "--scenario", "--laps", "--seed", "--out", "--config", "--k-factor-db", "--n-scatterers", "--los-mask",
        "--delay-spread-ns", "--noise-floor-db", "--waypoints", "--bs-height-m", "--ue-height-m", "--speed-kmh",
        "--snapshot-interval-s",
    ] {
        assert!(gen.contains(flag), "gen --help lacks {flag}");
    }
    assert!(ok(&["train", "--help"]).contains("--arch"));
    assert!(ok(&["train-router", "--help"]).contains("--bin-index"));
    let cmp = ok(&["compare", "--help"]);
    for flag in ["--method", "--router", "--declare", "--specialist", "--generalized"] {
        assert!(cmp.contains(flag), "compare --help lacks {flag}");
    }
}

#[test]
fn unknown_flags_and_tokens_fail_loudly() {
    let (c, e) = code(&["gen", "--scenario", "s1", "--out", "x", "--bogus"]);
    assert_eq!(c, 2);
    assert!(e.contains("--bogus"), "{e}");
    let (c, e) = code(&["gen", "--scenario", "s4", "--out", "x"]);
    assert_eq!(c, 2);
    assert!(e.contains("s4"), "{e}");
    let (c, e) = code(&["train", "--data", "x", "--arch", "el=6,ln=off,mp=on", "--out", "y"]);
    assert_eq!(c, 2);
    assert!(e.contains("el=6"), "{e}");
}

#[test]
fn router_flag_rules_name_the_flag() {
    let (c, e) = code(&["train-router", "--data", "x", "--variant", "bin", "--out", "y"]);
    assert_eq!(c, 2);
    assert!(e.contains("--bin-index"), "{e}");
    let (c, e) = code(&["train-router", "--data", "x", "--variant", "full", "--bin-index", "3", "--out", "y"]);
    assert_eq!(c, 2);
    assert!(e.contains("--bin-index"), "{e}");
}

#[test]
fn method_three_without_router_names_it() {
    let (c, e) = code(&["compare", "--method", "3", "--data", "x", "--out", "y"]);
    assert_eq!(c, 2);
    assert!(e.contains("router"), "{e}");
}

#[test]
fn missing_dataset_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (c, _) = code(&["train", "--data", p(&tmp.path().join("nope")), "--out", p(&tmp.path().join("ck"))]);
    assert_eq!(c, 3);
}

#[test]
fn config_file_unknown_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "scenario = \"s1\"\nlapz = 3\n").unwrap();
    let (c, e) = code(&["gen", "--config", p(&cfg), "--out", p(&tmp.path().join("d"))]);
    assert_eq!(c, 2);
    assert!(e.contains("lapz"), "{e}");
}

#[test]
fn config_file_drives_generation_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "scenario = \"s2\"\nlaps = 4\nseed = 3\n\n[channel]\nspeed_kmh = 150.0\nn_scatterers = 5\n").unwrap();
    let out = tmp.path().join("d");
    ok(&["gen", "--config", p(&cfg), "--laps", "2", "--out", p(&out)]);
    let ds = load_dataset(&out).unwrap();
    assert_eq!(ds.laps, 2);
    assert_eq!(ds.seed, 3);
    assert_eq!(ds.scenarios(), vec![beamloc::ScenarioId::S2]);
}

#[test]
fn two_laps_is_the_minimal_dataset_and_generation_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    gen(&a, "s3", "2", "7");
    gen(&b, "s3", "2", "7");
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    let ds = load_dataset(&a).unwrap();
    assert_eq!(ds.len(), 96);
    assert_eq!(ds.count(Split::Test), 48);
    assert!(ds.indices(Split::Test).iter().all(|&i| ds.samples[i].lap_index == 2));
    let (c, _) = code(&["gen", "--scenario", "s1", "--laps", "1", "--out", p(&tmp.path().join("c"))]);
    assert_eq!(c, 2);
}

#[test]
fn default_generation_holds_out_the_fifth_lap() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let mut args = vec!["gen", "--scenario", "s1", "--out", p(&d)];
    args.extend(FAST);
    ok(&args);
    let ds = load_dataset(&d).unwrap();
    assert_eq!(ds.laps, 5);
    assert_eq!(ds.count(Split::Test), 48);
    assert!(ds.indices(Split::Test).iter().all(|&i| ds.samples[i].lap_index == 5));
    assert_eq!(ds.count(Split::Val), 19);
}

#[test]
fn full_pipeline_writes_the_comparison_table() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    for s in ["s1", "s2", "s3"] {
        gen(&t.join(s), s, "2", "4");
    }
    ok(&["mix", "--data", p(&t.join("s1")), "--data", p(&t.join("s2")), "--data", p(&t.join("s3")), "--out", p(&t.join("mixed"))]);

    let general = ok(&[
        "train", "--data", p(&t.join("mixed")), "--arch", "el=3,ln=off,mp=off", "--epochs", "1", "--out", p(&t.join("m1")),
    ]);
    assert!(general.contains("parameters 314926"), "{general}");
    for (s, arch, count) in [("s1", "el=1,ln=off,mp=on", "85442"), ("s2", "el=2,ln=off,mp=on", "100088"), ("s3", "el=2,ln=off,mp=on", "100088")] {
        let out = ok(&["train", "--data", p(&t.join(s)), "--arch", arch, "--epochs", "1", "--out", p(&t.join(format!("spec_{s}")))]);
        assert!(out.contains(&format!("parameters {count}")), "{out}");
    }
    assert!(t.join("spec_s1").join("curves.csv").exists());
    let r = ok(&["train-router", "--data", p(&t.join("mixed")), "--variant", "bin", "--bin-index", "20", "--epochs", "5", "--out", p(&t.join("router"))]);
    assert!(r.contains("parameters 387"), "{r}");
    let r = ok(&["train-router", "--data", p(&t.join("mixed")), "--variant", "full", "--epochs", "1", "--out", p(&t.join("router_full"))]);
    assert!(r.contains("parameters 17667"), "{r}");

    let sv = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<String>>();
    let mut args = sv(&["compare", "--method", "1,2,3"]);
    for s in ["s1", "s2", "s3"] {
        args.extend(sv(&["--data", p(&t.join(s))]));
        args.extend(sv(&["--specialist", &format!("{s}={}", p(&t.join(format!("spec_{s}"))))]));
    }
    args.extend(sv(&["--generalized", p(&t.join("m1")), "--router", p(&t.join("router"))]));
    let report_dir = t.join("report");
    args.extend(sv(&["--timing-repeats", "1", "--out", p(&report_dir)]));

    let mut without_declare = args.clone();
    without_declare[2] = "2".into();
    let (c, e) = code(&without_declare);
    assert_eq!(c, 2);
    assert!(e.contains("--declare"), "{e}");

    args.extend(sv(&["--declare", "s1=s1", "--declare", "s2=s2", "--declare", "s3=s3"]));
    ok(&args);
    let report = ComparisonReport::from_json(&fs::read_to_string(report_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.methods.len(), 3);
    assert!(report.method(Method::Adaptive).unwrap().adaptive);
    let csv = fs::read_to_string(report_dir.join("report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, TABLE_ROWS);
}

#[test]
fn corrupted_checkpoint_fails_compare_with_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    gen(&t.join("s1"), "s1", "2", "1");
    ok(&["train", "--data", p(&t.join("s1")), "--epochs", "1", "--out", p(&t.join("ck"))]);
    let blob = t.join("ck").join("head.b2.f32");
    let mut bytes = fs::read(&blob).unwrap();
    bytes[0] ^= 1;
    fs::write(&blob, bytes).unwrap();
    let spec = format!("s1={}", p(&t.join("ck")));
    let (c, e) = code(&[
        "compare", "--method", "2", "--data", p(&t.join("s1")), "--specialist", &spec, "--declare", "s1=s1", "--out", p(&t.join("r")),
    ]);
    assert_eq!(c, 3);
    assert!(e.contains("digest"), "{e}");
}
