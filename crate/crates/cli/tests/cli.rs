use std::path::Path;
use std::process::{Command, Output};

fn damisac(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_damisac"));
    cmd.args(args).env_remove("DAMISAC_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

const SMALL_AF: [&str; 2] = ["--set", "af.cpi_lengths=[1000, 2000]"];

#[test]
fn unknown_key_is_a_config_error_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[scenario]\nnum_tx_antennas = 8\n\n[af]\nbogus = 1\n").unwrap();
    let o = damisac(&["af", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let msg = stderr(&o);
    assert!(msg.contains("bogus"), "{msg}");
    assert!(msg.contains("line 5"), "{msg}");
}

#[test]
fn malformed_override_and_thread_count_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = damisac(&["af", "--set", "af.cpi_lengths", "--out", out], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = damisac(&["af", "--set", "af.nonexistent=3", "--out", out], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = damisac(&["af", "--out", out], &[("DAMISAC_THREADS", "zero")]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = damisac(&["not-a-command"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_design_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = damisac(
        &["doppler-cut-isr", "--set", "doppler_cut_isr.gamma_db=30", "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn af_run_writes_tables_and_manifest_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "2")] {
        let mut args = vec!["af", "--seed", "7", "--out", dir.path().to_str().unwrap()];
        args.extend(SMALL_AF);
        let o = damisac(&args, &[("DAMISAC_THREADS", threads)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let printed = String::from_utf8(o.stdout).unwrap();
        assert_eq!(Path::new(printed.trim()), dir.path().join("manifest.json"));
    }
    assert_eq!(
        header(&a.path().join("af_doppler_cut.csv")),
        ["cpi_len", "kind", "d_tau_taps", "d_nu_hz", "mag_db", "phase_rad"]
    );
    assert_eq!(header(&a.path().join("af_summary.csv"))[..2], ["cpi_len", "delay_cut_psr_db"]);
    for f in ["af_doppler_cut.csv", "af_delay_cut.csv", "af_summary.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }

    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "af");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["threads"], 1);
    assert!(m["git_describe"].as_str().is_some_and(|s| !s.is_empty()));
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["config"]["af"]["cpi_lengths"], serde_json::json!([1000, 2000]));
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    assert!(files.contains(&"af_summary.csv"));
    for f in files {
        assert!(a.path().join(f).is_file(), "{f} listed but missing");
    }
}

#[test]
fn small_tradeoff_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = damisac(
        &[
            "tradeoff",
            "--set",
            "tradeoff.num_seeds=2",
            "--set",
            "tradeoff.gamma_fixed_db=[10]",
            "--set",
            "tradeoff.phi_sweep_db=[-40, 0]",
            "--set",
            "tradeoff.phi_fixed_db=[-20]",
            "--set",
            "tradeoff.gamma_sweep_db=[5, 15]",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(dir.path().join("tradeoff_per_seed.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 2 * (2 + 2));
    assert!(rows.iter().all(|x| &x[8] == "ok"));
    assert!(dir.path().join("tradeoff_mean.csv").is_file());
    assert!(dir.path().join("tradeoff_comm_only.csv").is_file());
}

#[test]
fn small_snr_budget_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = damisac(
        &["snr-budget", "--set", "snr_budget.monte_carlo_trials=20", "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(header(&dir.path().join("snr_budget.csv")), ["quantity", "value"]);
}
