use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn petabc(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_petabc"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("run petabc")
}

fn ok(o: Output) -> Output {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(petabc(&a, &["--seed", "5", "simulate"]));
    ok(petabc(&b, &["--seed", "5", "simulate"]));
    for f in ["clean.csv", "noisy.csv", "scenario.json", "manifest.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let clean = fs::read_to_string(a.join("clean.csv")).unwrap();
    let rows: Vec<&str> = clean.lines().skip(1).collect();
    assert_eq!(rows.len(), 60);
    assert!(rows[0].starts_with("0,1,"));
    assert!(rows[59].starts_with("59,60,"));
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn infinite_tolerance_keeps_whole_cache() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(petabc(d, &["simulate"]));
    ok(petabc(d, &["cache", "--n", "300"]));
    let cache = d.join("cache.bin");
    let obs = d.join("noisy.csv");
    ok(petabc(
        d,
        &[
            "abc",
            "--cache",
            path(&cache),
            "--obs",
            path(&obs),
            "--eps",
            "inf",
        ],
    ));
    let lines = fs::read_to_string(d.join("posterior.jsonl"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(lines, 300);
}

#[test]
fn narrowing_gives_nested_boxes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("config.json");
    fs::write(
        &config,
        r#"{"noise_level":4,"reference":{"amplitude":0.05,"power":1.0,"fast_rate":0.12,"slow_weight":0.3,"slow_rate":0.02}}"#,
    )
    .unwrap();
    ok(petabc(d, &["--config", path(&config), "simulate"]));
    let obs = d.join("noisy.csv");
    ok(petabc(
        d,
        &[
            "--config",
            path(&config),
            "narrow",
            "--obs",
            path(&obs),
            "--n",
            "5000",
        ],
    ));
    let stages: Vec<serde_json::Value> =
        serde_json::from_slice(&fs::read(d.join("narrowing.json")).unwrap()).unwrap();
    assert_eq!(stages.len(), 3);
    let eps: Vec<f64> = stages
        .iter()
        .map(|s| s["epsilon"].as_f64().unwrap())
        .collect();
    assert_eq!(eps, [200.0, 50.0, 10.0]);
    let bounds = |b: &serde_json::Value, p: &str| {
        (b[p]["lo"].as_f64().unwrap(), b[p]["hi"].as_f64().unwrap())
    };
    for s in &stages {
        for p in ["r1", "k2", "k2a", "gamma", "t_d", "alpha"] {
            let (olo, ohi) = bounds(&s["sampling_box"], p);
            let (nlo, nhi) = bounds(&s["narrowed"], p);
            assert!(olo <= nlo && nhi <= ohi, "{p}");
        }
    }
    for w in stages.windows(2) {
        assert_eq!(w[0]["narrowed"], w[1]["sampling_box"]);
    }
}

#[test]
fn single_sample_posterior_gives_degenerate_bands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(petabc(d, &["simulate"]));
    ok(petabc(d, &["cache", "--n", "200"]));
    let (cache, obs, post) = (
        d.join("cache.bin"),
        d.join("noisy.csv"),
        d.join("posterior.jsonl"),
    );
    ok(petabc(
        d,
        &[
            "abc",
            "--cache",
            path(&cache),
            "--obs",
            path(&obs),
            "--k",
            "1",
        ],
    ));
    ok(petabc(
        d,
        &["ppc", "--posterior", path(&post), "--no-noise"],
    ));
    let bands = fs::read_to_string(d.join("bands.csv")).unwrap();
    let mut lines = bands.lines();
    assert_eq!(lines.next(), Some("t_mid,mean,lo,hi"));
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f[1], f[2]);
        assert_eq!(f[2], f[3]);
    }
}

#[test]
fn batch_compare_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--seed",
        "9",
        "batch-compare",
        "--realisations",
        "3",
        "--cache-size",
        "500",
        "--best-k",
        "10",
        "--library-size",
        "40",
    ];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(petabc(&a, &args));
    ok(petabc(&b, &args));
    let ra = fs::read(a.join("batch.csv")).unwrap();
    assert_eq!(ra, fs::read(b.join("batch.csv")).unwrap());
    assert!(String::from_utf8(ra)
        .unwrap()
        .lines()
        .any(|l| l.starts_with("s1,truth,R1,,truth,1,ok")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(petabc(d, &["--no-such-flag"]).status.code(), Some(2));
    let missing = d.join("missing.csv");
    assert_eq!(
        petabc(d, &["wls", "--obs", path(&missing)]).status.code(),
        Some(3)
    );
    let bad = d.join("bad.json");
    fs::write(&bad, r#"{"noise_level": 9}"#).unwrap();
    assert_ne!(
        petabc(d, &["--config", path(&bad), "simulate"])
            .status
            .code(),
        Some(0)
    );
    // every frame zero: the weighted design has no usable columns
    let zero = d.join("zero.csv");
    let mut csv = String::from("t_start,t_end,value\n");
    for i in 0..60 {
        csv.push_str(&format!("{i},{},0\n", i + 1));
    }
    fs::write(&zero, csv).unwrap();
    assert_eq!(
        petabc(d, &["wls", "--obs", path(&zero), "--library-size", "5"])
            .status
            .code(),
        Some(4)
    );
}
