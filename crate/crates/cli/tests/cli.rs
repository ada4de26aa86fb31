use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bifkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bifkit")).args(args).output().expect("binary runs")
}

fn bifkit_threads(threads: &str, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bifkit"))
        .env("BIFKIT_THREADS", threads)
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Two generators with entries independent of the parameter.
fn constant_family(dir: &Path) -> PathBuf {
    let p = dir.join("constant.json");
    let text = r#"{"generators": [
        {"name": "a", "matrix": [[[[2, 0]], [[1, 0]]], [[[1, 0]], [[1, 0]]]]},
        {"name": "b", "matrix": [[[[1, 0]], [[0, 0]]], [[[3, 0]], [[1, 0]]]]}
    ]}"#;
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = "-3,0,10,10,32,32";

#[test]
fn lyap_writes_field_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lyap");
    let o = bifkit(&["lyap", "--preset", "riley", "--grid", SMALL, "--n", "20", "--m", "20", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["chi.csv", "chi.pgm", "chi.json", "config.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(out.join("chi.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 32 * 32);
    let side = json(out.join("chi.json"));
    assert_eq!(side["meta"]["n"], 20);
    let cfg = json(out.join("config.json"));
    assert!(cfg["seed"].is_u64());
}

#[test]
fn missing_spec_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-family.json");
    let o = bifkit(&["lyap", "--spec", path(&missing), "--out", path(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(path(&missing)), "{}", stderr(&o));
}

#[test]
fn bad_fields_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = bifkit(&["lyap", "--grid", "1,2,3", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`grid`"));
    let o = bifkit(&["lyap", "--n", "0", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`n`"));
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"n": 3, "bogus": 1}"#).unwrap();
    let o = bifkit(&["lyap", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"));
    let o = bifkit_threads("zero", &["lyap", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("BIFKIT_THREADS"));
}

#[test]
fn empty_loci_are_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let fam = constant_family(dir.path());
    let args = [
        "zeros", "--spec", path(&fam), "--grid", "0,0,4,4,32,32", "--n", "4", "--words", "3", "--n-field", "5",
        "--m-field", "5",
    ];
    let o = bifkit(&[&args[..], &["--out", path(&dir.path().join("o"))]].concat());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-positive total mass"));
}

#[test]
fn explicit_word_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("z");
    let o = bifkit(&["zeros", "--preset", "riley", "--word", "ab", "--t", "4,0", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pts = json(out.join("zeros.json"));
    let got: Vec<(f64, f64, u64)> = pts
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p["re"].as_f64().unwrap(), p["im"].as_f64().unwrap(), p["mult"].as_u64().unwrap()))
        .collect();
    assert_eq!(got.len(), 2);
    assert!((got[0].0 + 4.0).abs() < 1e-9 && got[0].1.abs() < 1e-9 && got[0].2 == 1);
    assert!(got[1].0.abs() < 1e-9 && got[1].1.abs() < 1e-9 && got[1].2 == 1);
}

#[test]
fn constant_trace_word_warns_and_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("z");
    let o = bifkit(&["zeros", "--word", "aaa", "--out", path(&out)]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"));
    assert_eq!(json(out.join("zeros.json")), Value::Array(vec![]));
}

#[test]
fn explicit_collision_is_a_double_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    // tr[a, b] - 2 = lambda^2
    let o = bifkit(&["collide", "--word", "a", "--with", "b", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pts = json(out.join("zeros.json"));
    let pts = pts.as_array().unwrap();
    assert_eq!(pts.len(), 1);
    assert_eq!(pts[0]["mult"], 2);
    assert!(pts[0]["re"].as_f64().unwrap().abs() < 1e-9);
    let o = bifkit(&["collide", "--word", "a", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`with`"));
}

#[test]
fn comparison_report_fields() {
    let dir = tempfile::tempdir().unwrap();
    let bif = dir.path().join("bif");
    let o = bifkit(&["bif", "--grid", SMALL, "--n", "20", "--m", "40", "--out", path(&bif)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("z");
    let o = bifkit(&[
        "zeros", "--grid", SMALL, "--n", "8", "--words", "4", "--bif-cache", path(&bif), "--out", path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(out.join("comparison.json"));
    for key in ["tv", "correlation", "coarsen", "blocks", "settings"] {
        assert!(r.get(key).is_some(), "{key}");
    }
    assert_eq!(r["settings"]["params"]["n_field"], 20);
    assert!(!out.join("bif.csv").exists());
    let loci = json(out.join("loci.json"));
    assert_eq!(loci.as_array().unwrap().len(), 4);

    let small = dir.path().join("z2");
    let o = bifkit(&["zeros", "--grid", "-3,0,10,10,64,64", "--bif-cache", path(&bif), "--out", path(&small)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`bif_cache`"));
}

#[test]
fn constant_family_has_no_bifurcations() {
    let dir = tempfile::tempdir().unwrap();
    let fam = constant_family(dir.path());
    let out = dir.path().join("b");
    let o = bifkit(&["bif", "--spec", path(&fam), "--grid", "0,0,4,4,32,32", "--n", "20", "--m", "20", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(json(out.join("bif.json"))["total"].as_f64().unwrap().abs() <= 1e-6);
    let t = dir.path().join("t");
    let o = bifkit(&["typechange", "--spec", path(&fam), "--grid", "0,0,4,4,32,32", "--out", path(&t)]);
    assert!(o.status.success());
    assert_eq!(json(t.join("typechange.json"))["pixels"], 0);
}

#[test]
fn riley_has_positive_bifurcation_mass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let o = bifkit(&["bif", "--grid", SMALL, "--n", "30", "--m", "50", "--out", path(&out)]);
    assert!(o.status.success());
    assert!(json(out.join("bif.json"))["total"].as_f64().unwrap() > 0.0);
}

#[test]
fn riley_typechange_hugs_the_real_segment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let o = bifkit(&["typechange", "--grid", SMALL, "--n", "2", "--m", "30", "--out", path(&out)]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(out.join("typechange.csv")).unwrap();
    let flagged: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .filter(|l| l.ends_with(",1"))
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (v[0], v[1])
        })
        .collect();
    assert!(!flagged.is_empty());
    // words of length <= 2 are elliptic only on real segments
    assert!(flagged.iter().all(|(_, im)| im.abs() < 10.0 / 32.0 * 1.01));
}

#[test]
fn degenerate_stats_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"family": {"preset": "schottky", "params": {"s": 3}}, "measure": [{"word": "a", "weight": 1}],
            "n_list": [5, 10], "m": 50, "n": 10}"#,
    )
    .unwrap();
    let out = dir.path().join("s");
    let o = bifkit(&["stats", "--config", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(out.join("stats.json"));
    for row in s["delta"]["rows"].as_array().unwrap() {
        assert_eq!(row["count"], 0);
    }
    for row in s["trace_deviation"]["rows"].as_array().unwrap() {
        assert_eq!(row["count"], 0);
    }
    assert_eq!(s["pair_separation"]["violation_fraction"], 1.0);
    let keys: Vec<&str> = s.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["delta", "pair_separation", "settings", "trace_deviation"]);
    let row = s["delta"]["rows"][0].as_object().unwrap();
    let keys: Vec<&str> = row.keys().map(String::as_str).collect();
    assert_eq!(keys, ["count", "n", "probability", "samples", "threshold", "wilson_high", "wilson_low"]);
    assert!(std::fs::read_to_string(out.join("stats.txt")).unwrap().contains("pair separation"));
}

#[test]
fn schottky_decay_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = bifkit(&["stats", "--preset", "schottky", "--m", "2000", "--n-list", "25,50,100", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(out.join("stats.json"));
    let probs: Vec<f64> =
        s["trace_deviation"]["rows"].as_array().unwrap().iter().map(|r| r["probability"].as_f64().unwrap()).collect();
    assert!(probs.windows(2).all(|w| w[1] < w[0]), "{probs:?}");
}

/// Runs `args`, then reruns from the persisted config into a second
/// directory, and compares the named files byte for byte.
fn assert_rerun_identical(cmd: &str, args: &[&str], files: &[&str]) {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let o = bifkit(&[&[cmd][..], args, &["--out", path(&a)]].concat());
    assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    let b = dir.path().join("b");
    let o = bifkit(&[cmd, "--config", path(&a.join("config.json")), "--out", path(&b)]);
    assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    for f in files {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert!(x == y, "{cmd}: {f} differs on rerun");
    }
}

#[test]
fn reruns_are_byte_identical() {
    assert_rerun_identical("lyap", &["--grid", SMALL, "--n", "10", "--m", "10"], &["chi.csv", "chi.pgm", "chi.json"]);
    assert_rerun_identical("bif", &["--grid", SMALL, "--n", "10", "--m", "10"], &["bif.csv", "bif.pgm", "bif.json"]);
    assert_rerun_identical(
        "zeros",
        &["--grid", SMALL, "--n", "6", "--words", "3", "--n-field", "10", "--m-field", "10"],
        &["loci.json", "empirical.csv", "comparison.json", "bif.csv"],
    );
    assert_rerun_identical(
        "collide",
        &["--grid", SMALL, "--n", "4", "--words", "3", "--n-field", "10", "--m-field", "10"],
        &["loci.json", "empirical.csv", "comparison.json"],
    );
    assert_rerun_identical("stats", &["--preset", "schottky", "--m", "100", "--n-list", "5,10"], &["stats.json", "stats.txt"]);
    assert_rerun_identical("typechange", &["--grid", SMALL, "--n", "4", "--m", "5"], &["typechange.csv", "typechange.pgm"]);
}
