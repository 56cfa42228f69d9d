use std::path::Path;
use std::process::{Command, Output};

fn hphi4(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hphi4"))
        .args(args)
        .env("HPHI4_THREADS", "2")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_solve(dir: &Path) -> Output {
    let cfg = dir.join("solve.conf");
    std::fs::write(
        &cfg,
        "seed = 3\n[basis]\nmodes = 12\n[noise]\nlevel = 4\ndt = 2e-3\nhorizon = 0.05\n",
    )
    .unwrap();
    let out = dir.join("out");
    hphi4(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn empty_config_names_the_missing_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.conf");
    std::fs::write(&cfg, "").unwrap();
    let o = hphi4(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing key"), "{}", stderr(&o));
}

#[test]
fn unknown_study_and_bad_override_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    std::fs::write(&cfg, "seed = 1\n").unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(
        hphi4(&["no-such-study", "--config", c]).status.code(),
        Some(2)
    );
    assert_eq!(
        hphi4(&["solve", "--config", c, "--set", "noise.dt"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn missing_config_file_is_an_io_error() {
    let o = hphi4(&["solve", "--config", "/nonexistent/hphi4.conf"]);
    assert_eq!(o.status.code(), Some(5));
    let o = hphi4(&["verify", "/nonexistent/summary.json"]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn verify_accepts_a_fresh_summary_and_rejects_a_tampered_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_solve(dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let summary = out.join("solve_summary.json");
    for f in ["solve_trajectory.csv", "solve_summary.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(hphi4(&["verify", summary.to_str().unwrap()])
        .status
        .success());

    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    let check = &mut v["checks"][0];
    let name = check["name"].as_str().unwrap().to_string();
    check["value"] = serde_json::json!(1e300);
    check["threshold"] = serde_json::json!(0.0);
    std::fs::write(&summary, serde_json::to_string(&v).unwrap()).unwrap();
    let o = hphi4(&["verify", summary.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains(&name), "{}", stderr(&o));
}

#[test]
fn failing_check_exits_with_assertion_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("r.conf");
    std::fs::write(
        &cfg,
        "[basis]\nmodes = 40\n[renorm]\nlevels = 3..5\nt = 1\n[checks]\nslope_min = 10\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = hphi4(&[
        "renorm-study",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("c1_log2_slope_min"), "{}", stderr(&o));
    assert!(out.join("renorm-study_renorm.csv").is_file());
}
