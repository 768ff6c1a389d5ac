use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn edg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edg-lab"))
        .args(args)
        .env_remove("EDG_LAB_JOBS")
        .output()
        .expect("binary runs")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        if p.is_dir() {
            for (n, b) in read_dir_sorted(&p) {
                out.push((format!("{name}/{n}"), b));
            }
        } else {
            out.push((name, fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn simulate_is_deterministic_across_runs_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let common = ["--L", "60", "--replicas", "4", "--t-end", "1", "--seed", "9"];
    let mut args = vec!["simulate", "--out", a.to_str().unwrap(), "--jobs", "1"];
    args.extend(common);
    assert!(edg(&args).status.success());
    let mut args = vec!["simulate", "--out", b.to_str().unwrap(), "--jobs", "3"];
    args.extend(common);
    assert!(edg(&args).status.success());
    let (fa, fb) = (read_dir_sorted(&a), read_dir_sorted(&b));
    assert_eq!(fa.len(), 8);
    assert_eq!(fa, fb);
}

#[test]
fn zero_horizon_writes_the_initial_snapshot_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = edg(&["simulate", "--out", out.to_str().unwrap(), "--t-end", "0", "--L", "20"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = fs::read_to_string(out.join("trajectories/replica_00000.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["header"]["schema_version"], 1);
    assert_eq!(lines[1]["t"], 0.0);
    assert_eq!(lines[2]["events"], 0);
}

#[test]
fn particle_count_is_rounded_density_times_sites() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = edg(&["simulate", "--out", out.to_str().unwrap(), "--t-end", "0", "--L", "10000", "--rho", "0.12345"]);
    assert!(r.status.success());
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("\"N\":1235"), "{summary}");
    let row = summary.lines().find(|l| l.starts_with("0,")).unwrap();
    let m1: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((m1 - 0.1235).abs() < 1e-12);
}

#[test]
fn unnormalized_initial_profile_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let init = tmp.path().join("init.csv");
    fs::write(&init, "t,k,f_k\n0,0,0.5\n0,1,0.3\n").unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, format!("[ode]\ninit = {:?}\n", init.to_str().unwrap())).unwrap();
    let r = edg(&["ode", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("sums to"));
}

#[test]
fn ode_summary_has_conservation_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = edg(&["ode", "--gamma", "1", "--t-end", "2", "--grid", "0:2:0.5", "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut rows = summary.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(rows.next().unwrap(), "t,m0,m1,m2,m_gamma,f0,ell,leak");
    let rows: Vec<Vec<f64>> = rows.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert!((r[1] - 1.0).abs() <= 1e-8);
        assert!((r[2] - 1.0).abs() <= 1e-6 + r[7]);
    }
}

#[test]
fn gelling_kernel_output_is_annotated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"kernel": {"gamma": 1.75}, "system": {"t_end": 1.0}, "ode": {"truncation": "adaptive:256"}}"#).unwrap();
    let out = tmp.path().join("o");
    let r = edg(&["ode", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ode.json")).unwrap()).unwrap();
    assert!(report["blow_up_time"].is_number());
    assert_eq!(report["outcome"]["BlowUp"]["flag"], "TruncationCap");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("# note=a truncated system cannot gel"));
}

#[test]
fn config_errors_name_the_line_or_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[system]\nL = 10\nreplicas = \"many\"\n").unwrap();
    let r = edg(&["simulate", "--config", cfg.to_str().unwrap()]);
    let err = String::from_utf8_lossy(&r.stderr);
    assert_eq!(r.status.code(), Some(2));
    assert!(err.contains("bad.toml:3"), "{err}");
    fs::write(&cfg, "[system]\nreplicas = 0\n").unwrap();
    let err = String::from_utf8_lossy(&edg(&["simulate", "--config", cfg.to_str().unwrap()]).stderr).into_owned();
    assert!(err.contains("system.replicas"), "{err}");
}

#[test]
fn tagged_writes_trajectories_and_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = edg(&["tagged", "--L", "50", "--replicas", "20", "--t-end", "0.5", "--grid", "0:0.5:0.25", "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let lines = fs::read_to_string(out.join("tagged.jsonl")).unwrap();
    let second: serde_json::Value = serde_json::from_str(lines.lines().nth(1).unwrap()).unwrap();
    assert!(second["W"].as_u64().unwrap() >= 1);
    assert_eq!(second["replica"], 0);
    let cmp = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert!(cmp.lines().any(|l| l == "t,TV,L,replicas"));
    assert_eq!(cmp.lines().filter(|l| l.ends_with(",50,20")).count(), 3);
    assert!(out.join("limit_tagged.jsonl").exists());
}

#[test]
fn verify_reports_and_sets_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("v.toml");
    fs::write(&cfg, "[verify]\nchecks = [\"kernel\", \"oracle\", \"size_biased\", \"weak_form\"]\n").unwrap();
    let out = tmp.path().join("o");
    let r = edg(&["verify", "--config", cfg.to_str().unwrap(), "--L", "100", "--t-end", "0.5", "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("PASS kernel"), "{stdout}");
    assert!(stdout.contains("PASS oracle"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["checks"].as_array().unwrap().len(), 4);
    assert_eq!(r.status.success(), report["passed"].as_bool().unwrap());

    fs::write(&cfg, "[verify]\nchecks = [\"lln\"]\nlln_tol = 1e-9\n").unwrap();
    let r = edg(&["verify", "--config", cfg.to_str().unwrap(), "--L", "30", "--t-end", "0.5", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stdout).contains("FAIL lln"));
}

#[test]
fn scaling_writes_fits_and_absorption() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("s.toml");
    fs::write(
        &cfg,
        "[scaling]\ngammas = [1.0, 1.5]\nt_ends = [20.0, 1.0]\ngrid_points = 200\nabsorption_L = [2, 4]\nabsorption_replicas = 50\n",
    )
    .unwrap();
    let out = tmp.path().join("o");
    let r = edg(&["scaling", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let fits = fs::read_to_string(out.join("coarsening.csv")).unwrap();
    assert!(fits.lines().any(|l| l.starts_with("1,20,PowerLaw,")), "{fits}");
    assert!(fits.lines().any(|l| l.starts_with("1.5,1,Exponential,")));
    let abs = fs::read_to_string(out.join("absorption.csv")).unwrap();
    assert!(abs.lines().any(|l| l.starts_with("2,2,50,")));
}
