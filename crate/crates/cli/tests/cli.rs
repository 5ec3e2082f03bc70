use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nanomotion(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nanomotion"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("RUST_LOG", "warn")
        .env_remove("NANOMOTION_OUT")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap()
}

const SMALL: &str = "seed = 4\n[oscillator]\nspread = \"100 nm\"\n[optics]\nx1 = \"150 nm\"\n[simulation]\nsamples = 2000\ntrajectories = 40\n[detection]\nduration = \"2 ms\"\nsegment = \"1 ms\"\nefficiency = 0.05\ndark_rate = \"100 /s\"\n";

#[test]
fn modes_table_has_five_rows() {
    let d = tempfile::tempdir().unwrap();
    let o = nanomotion(d.path(), &["modes"]);
    assert!(o.status.success());
    let csv = fs::read_to_string(d.path().join("modes.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,kL,A_n,meff_ratio");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("1,1.87510,"));
    let m = manifest(d.path());
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["outputs"][0], "modes.csv");
    assert_eq!(m["summary"]["meff_ratio_table_disagreement"], serde_json::json!([3, 4, 5]));
}

#[test]
fn exit_codes_follow_the_contract() {
    let d = tempfile::tempdir().unwrap();
    let coarse = write(d.path(), "coarse.toml", "[simulation]\ndt = \"200 ns\"\n");
    let o = nanomotion(d.path(), &["--config", &coarse, "simulate-g2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dt·omega_m"));

    let broken = write(d.path(), "broken.toml", "seed = 1\n[oscillator]\nfrequency = \"190 kg\"\n");
    let o = nanomotion(d.path(), &["--config", &broken, "modes"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.toml:3:"));

    let wide = write(d.path(), "wide.toml", "[oscillator]\nspread = \"190 nm\"\n");
    let o = nanomotion(d.path(), &["--config", &wide, "analytic-g2"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("did not converge"));
    assert_eq!(manifest(d.path())["exit_code"], 3);

    let o = nanomotion(d.path(), &["fit", "--input", "/nonexistent/g2.csv"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analytic_curve_starts_antibunched() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s.toml", "[oscillator]\nspread = \"76 nm\"\n");
    assert!(nanomotion(d.path(), &["--config", &cfg, "analytic-g2"]).status.success());
    let csv = fs::read_to_string(d.path().join("analytic_g2.csv")).unwrap();
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first, ["0", "0"]);
    assert!(nanomotion(d.path(), &["--config", &cfg, "aj-table"]).status.success());
    let table = fs::read_to_string(d.path().join("aj_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 6);
    assert!(table.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn stream_pipeline_runs_end_to_end() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s.toml", SMALL);
    let p = d.path().display().to_string();
    assert!(nanomotion(d.path(), &["--config", &cfg, "photon-stream"]).status.success());
    let m = manifest(d.path());
    assert!(m["summary"]["counts_detector_1"].as_u64().unwrap() > 100);
    let stream = format!("{p}/photon_stream.csv");
    assert!(nanomotion(d.path(), &["--config", &cfg, "correlate", "--input", &stream]).status.success());
    let g2 = format!("{p}/correlate.csv");
    assert!(nanomotion(d.path(), &["--config", &cfg, "spectrum", "--input", &g2]).status.success());
    let spec = fs::read_to_string(d.path().join("spectrum.csv")).unwrap();
    assert!(spec.starts_with("freq_hz,psd\n"));
    assert!(spec.lines().count() > 100);
}

#[test]
fn simulated_curve_can_be_fitted() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "s.toml",
        "[oscillator]\nspread = \"114 nm\"\n[optics]\nx1 = \"172 nm\"\nx2 = \"-172 nm\"\n[simulation]\nsamples = 6000\ntrajectories = 400\ntau_max = \"8 us\"\n[analysis]\nfit_order = 2\n",
    );
    assert!(nanomotion(d.path(), &["--config", &cfg, "simulate-g2", "--dump-trajectory"]).status.success());
    assert!(d.path().join("trajectory.csv").exists());
    let g2 = d.path().join("simulate_g2.csv").display().to_string();
    let o = nanomotion(d.path(), &["--config", &cfg, "fit", "--input", &g2]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = fs::read_to_string(d.path().join("fit.txt")).unwrap();
    let f: f64 = fit
        .lines()
        .find_map(|l| l.strip_prefix("frequency_hz="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((f / 190e3 - 1.0).abs() < 0.02, "{f}");
    let res = fs::read_to_string(d.path().join("fit_residuals.csv")).unwrap();
    assert!(res.starts_with("tau_s,g2,model,residual\n"));
}

#[test]
fn manifest_scenario_reproduces_the_run() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s.toml", SMALL);
    assert!(nanomotion(d.path(), &["--config", &cfg, "--seed", "99", "simulate-g2"]).status.success());
    let first = fs::read(d.path().join("simulate_g2.csv")).unwrap();
    let m = manifest(d.path());
    assert_eq!(m["seed"], 99);
    let again = tempfile::tempdir().unwrap();
    let replay = write(again.path(), "replay.toml", m["scenario_toml"].as_str().unwrap());
    assert!(nanomotion(again.path(), &["--config", &replay, "simulate-g2"]).status.success());
    assert_eq!(first, fs::read(again.path().join("simulate_g2.csv")).unwrap());
}

#[test]
fn outputs_stay_inside_the_output_directory() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("out");
    let cfg = write(root.path(), "s.toml", SMALL);
    assert!(nanomotion(&out, &["--config", &cfg, "image"]).status.success());
    let mut top: Vec<String> = fs::read_dir(root.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, ["out", "s.toml"]);
    let mut inside: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    inside.sort();
    assert_eq!(inside, ["image.csv", "run.json"]);
}

#[test]
fn env_var_sets_default_output_directory() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_nanomotion"))
        .arg("emitter-g2")
        .env("NANOMOTION_OUT", d.path())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(d.path().join("emitter_g2.csv").exists());
}

#[test]
fn defaults_are_echoed_to_the_log() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "min.toml", "[oscillator]\nfrequency = \"190 kHz\"\n");
    let o = Command::new(env!("CARGO_BIN_EXE_nanomotion"))
        .args(["--config", &cfg, "--out"])
        .arg(d.path())
        .arg("emitter-g2")
        .env("RUST_LOG", "info")
        .output()
        .unwrap();
    assert!(o.status.success());
    let log = String::from_utf8_lossy(&o.stderr);
    assert!(log.contains("default optics.w0 = 3.8e-7 m"));
    assert!(!log.contains("default oscillator.frequency"));
    assert!(log.contains("theta = dx/w0"));
}
