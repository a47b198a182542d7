use std::path::{Path, PathBuf};

use qrlob::calibrate::load_bundle;
use qrlob::cli::{main_with_args, run};
use qrlob::engine::read_log;
use qrlob::strategy::SWEEP_HEADER;

fn args(dir: &Path, rest: &[&str]) -> Vec<String> {
    let mut v = vec!["qrlob".to_string(), "--out".into(), dir.to_str().unwrap().into()];
    v.extend(rest.iter().map(|s| s.to_string()));
    v
}

fn manifest_artifacts(dir: &Path) -> Vec<String> {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    v["artifacts"].as_array().unwrap().iter().map(|a| a.as_str().unwrap().to_string()).collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_calibrate_simulate_validate() {
    let root = tempfile::tempdir().unwrap();
    let d = |name: &str| -> PathBuf { root.path().join(name) };

    run(args(&d("synth"), &["--seed", "5", "synth", "--preset", "on", "--hours", "1"])).unwrap();
    let stream = d("synth").join("stream.csv");
    assert!(stream.exists());
    assert!(manifest_artifacts(&d("synth")).contains(&"stream.csv".to_string()));

    run(args(&d("cal"), &["calibrate", "--input", path_str(&stream), "--aggregate-creates", "off"])).unwrap();
    let bundle = load_bundle(&d("cal").join("bundle.json")).unwrap();
    assert_eq!(bundle.mes, [100; 4]);
    let coverage: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d("cal").join("coverage.json")).unwrap()).unwrap();
    assert!(coverage["transitions"].as_u64().unwrap() > 30_000);

    let bundle_path = d("cal").join("bundle.json");
    run(args(&d("sim"), &["simulate", "--bundle", path_str(&bundle_path), "--hours", "0.5", "--stats", "on"])).unwrap();
    let log = read_log(std::fs::File::open(d("sim").join("events.csv")).unwrap()).unwrap();
    assert!(log.len() > 1000);
    assert!(log.windows(2).all(|w| w[0].t_ns < w[1].t_ns));
    assert!(d("sim").join("validation").join("event_types.csv").exists());

    let events = d("sim").join("events.csv");
    run(args(&d("val"), &["validate", "--log", path_str(&events)])).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d("val").join("report.json")).unwrap()).unwrap();
    assert!(report.is_object());

    // a stream validates too
    run(args(&d("val2"), &["validate", "--stream", path_str(&stream)])).unwrap();
    assert!(d("val2").join("report.json").exists());
}

#[test]
fn backtest_writes_sweep() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("bt");
    let a = args(
        &out,
        &[
            "backtest", "--preset", "on", "--m", "0.06", "--strategy", "hft", "--seeds", "2", "--hours", "0.2",
            "--inventories", "2", "--q-max", "1,2",
        ],
    );
    run(a).unwrap();
    let text = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), SWEEP_HEADER.join(","));
    // 1 inventory x 2 sizes x both self-impact settings x 2 seeds
    assert_eq!(lines.count(), 8);

    let out = root.path().join("mf");
    let a = args(
        &out,
        &["backtest", "--preset", "on", "--strategy", "midfreq", "--seeds", "2", "--hours", "0.2", "--thetas", "1"],
    );
    run(a).unwrap();
    assert!(out.join("predictiveness.csv").exists());
}

#[test]
fn metaorder_search_reports_curve() {
    let root = tempfile::tempdir().unwrap();
    let syn = root.path().join("syn");
    run(args(&syn, &["synth", "--preset", "on", "--hours", "0.01"])).unwrap();
    let out = root.path().join("search");
    let bundle = syn.join("bundle.json");
    let a = args(
        &out,
        &[
            "impact-calibrate", "--bundle", path_str(&bundle), "--paths", "16", "--m-hi", "0.1", "--coarse-points", "3",
            "--tol", "0.02", "--volume-hours", "2",
        ],
    );
    match run(a) {
        Ok(()) => {
            let s: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(out.join("search.json")).unwrap()).unwrap();
            let m = s["m"].as_f64().unwrap();
            assert!((0.0..=0.1).contains(&m));
            assert!(out.join("bundle.json").exists());
        }
        Err(e) => assert_eq!(e.code(), 4, "{e}"),
    }
    let curve = std::fs::read_to_string(out.join("mse_curve.csv")).unwrap();
    assert_eq!(curve.lines().next().unwrap(), "m,mse");
    assert!(curve.lines().count() >= 4);
}

#[test]
fn config_file_and_flags() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("cfg");
    let cfg = root.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!("seed = 8\nout = {:?}\n[simulate]\npreset = \"on\"\nhours = 0.05\nlog = \"off\"\n", path_str(&out)),
    )
    .unwrap();
    run(["qrlob", "--config", path_str(&cfg), "simulate", "--hours", "0.1"]).unwrap();
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["common"]["seed"], 8);
    assert_eq!(m["config"]["hours"], 0.1);
    assert!(!out.join("events.csv").exists());

    std::fs::write(&cfg, "[simulate]\nhorus = 1\n").unwrap();
    assert_eq!(main_with_args(["qrlob", "--config", path_str(&cfg), "simulate"]), 2);
}

#[test]
fn exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let empty = root.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = root.path().join("o");
    assert_eq!(main_with_args(args(&out, &["calibrate", "--input", path_str(&empty)])), 3);
    assert_eq!(main_with_args(args(&out, &["calibrate"])), 2);
    assert_eq!(main_with_args(args(&out, &["simulate", "--preset", "on", "--hours", "-1"])), 2);
    assert_eq!(main_with_args(["qrlob", "--version"]), 0);
}
