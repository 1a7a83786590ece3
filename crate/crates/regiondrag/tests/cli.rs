mod common;

use std::process::{Command, Output};

use regiondrag::formats::{RegionPairRecord, RegionRecord, SessionExport};
use serde_json::Value;

fn regiondrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regiondrag"))
        .args(args)
        .env_remove("REGIONDRAG_BACKEND")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn edit_writes_png_and_timings() {
    let dir = tempfile::tempdir().unwrap();
    let (image, regions) = common::write_fixture(dir.path(), 4);
    let out_png = dir.path().join("out.png");
    let timings = dir.path().join("timings.json");
    let out = regiondrag(&[
        "edit",
        "--image", image.to_str().unwrap(),
        "--regions", regions.to_str().unwrap(),
        "--out", out_png.to_str().unwrap(),
        "--timings", timings.to_str().unwrap(),
        "--seed", "11",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let img = regiondrag::imageio::load_png(&out_png).unwrap();
    assert_eq!((img.width(), img.height()), (64, 64));
    let summary = stdout_json(&out);
    assert_eq!(summary["seed"], 11);
    assert_eq!(summary["backend"], "toy");
    assert_eq!(summary["cp_timesteps"].as_array().unwrap().len(), 7);
    let t: Value = serde_json::from_str(&std::fs::read_to_string(&timings).unwrap()).unwrap();
    assert!(t["total_ms"].as_f64().unwrap() > 0.0);
    for key in ["map_ms", "invert_ms", "denoise_ms", "cp_ms", "decode_ms"] {
        assert!(t[key].is_number(), "{key}");
    }
}

#[test]
fn initial_only_copies_at_one_timestep() {
    let dir = tempfile::tempdir().unwrap();
    let (image, regions) = common::write_fixture(dir.path(), 2);
    let session = dir.path().join("session.json");
    let out = regiondrag(&[
        "edit",
        "--image", image.to_str().unwrap(),
        "--regions", regions.to_str().unwrap(),
        "--out", dir.path().join("o.png").to_str().unwrap(),
        "--cp-mode", "initial-only",
        "--session-out", session.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let export: SessionExport = serde_json::from_str(&std::fs::read_to_string(&session).unwrap()).unwrap();
    assert_eq!(export.cp_timesteps, vec![500]);
    assert_eq!(export.config.cp_mode, regiondrag_core::CpMode::InitialOnly);
    assert_eq!(export.kv.len(), 10);
}

#[test]
fn missing_regions_is_a_usage_error() {
    let out = regiondrag(&["edit", "--image", "in.png", "--out", "out.png"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("--regions") && err.contains("Usage"), "{err}");
}

#[test]
fn help_and_unknown_flags() {
    assert_eq!(regiondrag(&["--help"]).status.code(), Some(0));
    assert_eq!(regiondrag(&["edit", "--bogus"]).status.code(), Some(1));
    assert_eq!(regiondrag(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn validation_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let (image, regions) = common::write_fixture(dir.path(), 0);
    let base = |extra: &[&str]| {
        let mut args = vec![
            "edit",
            "--image", image.to_str().unwrap(),
            "--out", dir.path().join("o.png").to_str().unwrap(),
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        args.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        regiondrag(&refs)
    };
    let out = base(&["--regions", regions.to_str().unwrap(), "--cp-stop", "600"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cp_stop"));

    let out = base(&["--regions", regions.to_str().unwrap(), "--backend", "nope"]);
    assert_eq!(out.status.code(), Some(1));

    let out = base(&["--regions", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let degenerate = dir.path().join("degenerate.json");
    let rec = RegionPairRecord {
        handle: RegionRecord::polygon([(0, 0), (5, 5), (9, 9)], 64, 64),
        target: RegionRecord::polygon([(20, 0), (25, 5), (29, 9)], 64, 64),
    };
    std::fs::write(&degenerate, serde_json::to_string(&[rec]).unwrap()).unwrap();
    let out = base(&["--regions", degenerate.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("empty"));
}

#[test]
fn pipeline_failure_exits_2_and_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let (image, regions) = common::write_fixture(dir.path(), 0);
    let out = regiondrag(&[
        "edit",
        "--image", image.to_str().unwrap(),
        "--regions", regions.to_str().unwrap(),
        "--out", dir.path().join("o.png").to_str().unwrap(),
        "--eta", "5",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("schedule inconsistency"), "{}", stderr(&out));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"sampler_steps": 10, "eta": 0.0, "seed": 3}"#).unwrap();
    let out = regiondrag(&["stats", "--schedule", "--config", config.to_str().unwrap(), "--sampler-steps", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = stdout_json(&out);
    let ts: Vec<u64> = v["schedule"].as_array().unwrap().iter().map(|r| r["t"].as_u64().unwrap()).collect();
    assert_eq!(ts, [250, 500, 750, 1000]);
    assert!(v["schedule"].as_array().unwrap().iter().all(|r| r["sigma"] == 0.0));
}

#[test]
fn backend_env_var_selects_default() {
    let dir = tempfile::tempdir().unwrap();
    let (image, regions) = common::write_fixture(dir.path(), 1);
    let run = |backend: &str| {
        Command::new(env!("CARGO_BIN_EXE_regiondrag"))
            .args(["edit", "--image", image.to_str().unwrap(), "--regions", regions.to_str().unwrap()])
            .args(["--out", dir.path().join("o.png").to_str().unwrap(), "--codec", "pool"])
            .env("REGIONDRAG_BACKEND", backend)
            .output()
            .unwrap()
    };
    let out = run("zero");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout_json(&out)["backend"], "zero");
    assert_eq!(run("missing").status.code(), Some(1));
}

#[test]
fn map_prints_the_mapping() {
    let dir = tempfile::tempdir().unwrap();
    let (_, regions) = common::write_fixture(dir.path(), 6);
    let out = regiondrag(&["map", "--regions", regions.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = stdout_json(&out);
    assert_eq!(v["count"], 64);
    assert!(v["pairs"].as_array().unwrap().iter().all(|p| p["tx"].as_u64().unwrap() == p["hx"].as_u64().unwrap() + 16));
    let out = regiondrag(&["map", "--regions", regions.to_str().unwrap(), "--latent-factor", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_and_stats_on_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::fixture_manifest(dir.path(), 3);
    let (json, csv) = (dir.path().join("r.json"), dir.path().join("r.csv"));
    let out = regiondrag(&[
        "bench",
        "--manifest", manifest.to_str().unwrap(),
        "--json", json.to_str().unwrap(),
        "--csv", csv.to_str().unwrap(),
        "--workers", "2",
        "--eta", "0",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let agg = stdout_json(&out);
    assert_eq!(agg["succeeded"], 3);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 4);

    let out = regiondrag(&["stats", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout_json(&out)["median"], 64.0);
    assert_eq!(regiondrag(&["stats"]).status.code(), Some(1));
}
