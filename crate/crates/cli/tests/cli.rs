use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spinphoton(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinphoton")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn kv(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .parse()
        .unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn budget_defaults() {
    let o = spinphoton(&["budget"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = stdout(&o);
    assert!((kv(&t, "e_xy_pred") - 0.63).abs() < 0.01);
    assert!((kv(&t, "e_z_pred") - 0.81).abs() < 0.01);
    assert!((kv(&t, "p_ent_pred") - 1.0e-3).abs() < 0.05e-3);
    // (1 + 2·0.631 + 0.811)/4, not 0.78.
    assert!((kv(&t, "f_pred") - 0.768).abs() < 0.001);
}

#[test]
fn budget_all_unity_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "unity.toml",
        "[budget]\nf_op = 1.0\nf_s = 1.0\nf_p = 1.0\nf_bg_xy = 1.0\nf_bg_z = 1.0\nf_i = 1.0\ntau_a_us = 1e9\n",
    );
    let o = spinphoton(&["budget", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!((kv(&stdout(&o), "f_pred") - 1.0).abs() < 1e-6);

    let o = spinphoton(&["budget", "--format", "csv"]);
    assert!(stdout(&o).starts_with("key,value\np1,"));
}

#[test]
fn invalid_efficiency_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[rate]\neta_cav = 1.2\n");
    let o = spinphoton(&["budget", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn unknown_key_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "typo.toml", "[mzi]\ndelay_t_us = 75.5\nphase_phy = 1.0\n");
    let o = spinphoton(&["budget", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(spinphoton(&["simulate"]).status.code(), Some(1));
    assert_eq!(spinphoton(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(spinphoton(&["simulate", "--out", "x", "--heralds", "1", "--attempts", "1"]).status.code(), Some(1));
    assert_eq!(spinphoton(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_config_names_path() {
    let o = spinphoton(&["simulate", "--config", "/no/such/config.toml", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/config.toml"));
}

#[test]
fn simulate_is_deterministic_and_analyzable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ideal.toml", "preset = \"ideal\"\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = spinphoton(&[
            "simulate",
            "--config",
            &cfg,
            "--seed",
            "7",
            "--heralds",
            "1500",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ca = fs::read(a.join("clicks.csv")).unwrap();
    assert_eq!(ca, fs::read(b.join("clicks.csv")).unwrap());
    let text = String::from_utf8(ca).unwrap();
    assert!(text.starts_with("# manifest = manifest.toml\nattempt_id,herald,"));
    assert_eq!(text.lines().count(), 1500 + 2);

    let manifest = fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 7"));
    assert!(manifest.contains("clicks.csv"));

    let clicks = a.join("clicks.csv");
    let o = spinphoton(&["analyze", clicks.to_str().unwrap(), "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = stdout(&o);
    let (f, s) = (kv(&t, "fidelity"), kv(&t, "fidelity_sigma"));
    assert!(f > 1.0 - 3.0 * s - 0.01, "F = {f} ± {s}");
    let parity = fs::read_to_string(a.join("parity.csv")).unwrap();
    assert_eq!(parity.lines().count(), 1 + 2 * 11);
}

#[test]
fn analyze_empty_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let header =
        "attempt_id,herald,detection_time_us,phi_at_attempt,spin_basis,spin_result,window_index,photon_count\n";
    let p = write(dir.path(), "empty.csv", header);
    let o = spinphoton(&["analyze", &p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no usable records"), "{}", stderr(&o));
}

fn ellipse_csv(delta: f64, n: usize) -> String {
    let mut s = String::from("apd1,apd2\n");
    for i in 0..n {
        let phi = 0.1 + 6.0 * i as f64 / n as f64;
        s.push_str(&format!("{},{}\n", 2.0 + 1.5 * phi.cos(), -0.5 + 0.7 * (phi + delta).cos()));
    }
    s
}

#[test]
fn phases_recovers_delta() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "apd.csv", &ellipse_csv(1.1, 60));
    let o = spinphoton(&["phases", &p]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!((kv(&stdout(&o), "delta_phi") - 1.1).abs() < 0.02, "{}", stdout(&o));
    let o = spinphoton(&["phases", &p, "--format", "csv"]);
    assert_eq!(stdout(&o).lines().count(), 2 + 60);
}

#[test]
fn phases_rejects_short_and_degenerate_input() {
    let dir = tempfile::tempdir().unwrap();
    let short = write(dir.path(), "short.csv", &ellipse_csv(1.1, 5));
    assert_eq!(spinphoton(&["phases", &short]).status.code(), Some(2));
    let flat = write(dir.path(), "flat.csv", &ellipse_csv(0.0, 40));
    let o = spinphoton(&["phases", &flat]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).to_lowercase().contains("degenerate"), "{}", stderr(&o));
}
