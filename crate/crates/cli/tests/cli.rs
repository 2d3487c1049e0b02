use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn qpf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn run_config(dir: &Path, text: &str, out: &str) -> Output {
    let cfg = write_config(dir, text);
    let out = dir.join(out);
    qpf(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn cf_golden_reports_convergents() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cf");
    let o = qpf(&["cf", "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = read_json(&out.join("result.json"));
    assert_eq!(r["partial_quotients"][0], "1");
    assert_eq!(r["convergents"][10][1], "89");
    assert_eq!(r["cd_indices"], serde_json::json!([1, 13, 108]));
    let csv = std::fs::read_to_string(out.join("convergents.csv")).unwrap();
    assert!(csv.starts_with("n,a_n,p_n,q_n\n1,1,1,1\n"));
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["run"], "cf");
    assert_eq!(m["status"], 0);
}

#[test]
fn unknown_run_is_config_invalid() {
    let o = qpf(&["fly"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config-invalid"));
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(dir.path(), r#"{"run":"fly"}"#, "out");
    assert_eq!(o.status.code(), Some(2));
    let o = run_config(dir.path(), r#"{"run":"cf","unknown_field":1}"#, "out");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn kam_audit_certifies_six_steps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("audit");
    let cfg = configs().join("audit.json");
    let o = qpf(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = read_json(&out.join("result.json"));
    assert_eq!(r["certified"], true);
    assert_eq!(r["steps"].as_array().unwrap().len(), 6);
    let bound = r["eps0_bound_decimal"].as_str().unwrap();
    assert!(bound.contains("e-"), "{bound}");
    let csv = std::fs::read_to_string(out.join("inequalities.csv")).unwrap();
    assert!(csv.starts_with("name,step,log_scale,lhs_lo,lhs_hi,rhs_lo,rhs_hi,certified\n"));
    assert!(!csv.contains(",false\n"));
}

#[test]
fn kam_run_benchmark_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("benchmark.json");
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = qpf(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            "2",
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        outs.push(out);
    }
    for f in ["steps.csv", "chain.json", "system.json", "result.json"] {
        let a = std::fs::read(outs[0].join(f)).unwrap();
        let b = std::fs::read(outs[1].join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let csv = std::fs::read_to_string(outs[0].join("steps.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("n,q_n,s_n,r_n,g_norm,f_norm,k_used,contracts_met,slack_a_h_norm,"));
    assert!(!header.contains("wall_ms"));
    assert_eq!(lines.count(), 3);
    let chain = std::fs::read_to_string(outs[0].join("chain.json")).unwrap();
    assert!(qpf_core::kamflow::ConjugationChain::from_json(&chain).is_ok());
}

#[test]
fn kam_run_paper_mode_rejects_large_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("benchmark.json");
    let out = dir.path().join("p");
    let o = qpf(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--mode",
        "paper",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kamflow::ScheduleInfeasible"));
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["status"], 3);
}

#[test]
fn rotnum_rigid_rotation() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(
        dir.path(),
        r#"{"run":"rotnum","system":{"rho":0.3},"params":{"horizon":200}}"#,
        "out",
    );
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&dir.path().join("out/result.json"));
    assert!((r["rho"].as_f64().unwrap() - 0.3).abs() < 1e-12);
    let csv = std::fs::read_to_string(dir.path().join("out/rotnum.csv")).unwrap();
    assert!(csv.starts_with("start,estimate,error_bar\n"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn lyapunov_of_hyperbolic_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l");
    let cfg = configs().join("lyapunov.json");
    let o = qpf(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&out.join("result.json"));
    assert!((r["exponent"].as_f64().unwrap() - 0.1).abs() < 1e-3);
}

#[test]
fn lyapunov_rejects_nonzero_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(
        dir.path(),
        r#"{"run":"lyapunov","params":{"matrix":[[1,0],[0,1]]}}"#,
        "out",
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dynamics::TraceNonzero"));
}

#[test]
fn norm_of_file_function() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("f.json"),
        r#"{"s":1,"r":1,"modes":[{"l":1,"k":[1,0],"re":0.5,"im":0},{"l":-1,"k":[-1,0],"re":0.5,"im":0}]}"#,
    )
    .unwrap();
    let o = run_config(
        dir.path(),
        r#"{"run":"norm","params":{"function":{"file":"f.json"},"s":0.5,"r":0.25}}"#,
        "out",
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = read_json(&dir.path().join("out/result.json"));
    let want = (0.75f64).exp();
    assert!((r["norm"].as_f64().unwrap() - want).abs() < 1e-15 * want);
}

#[test]
fn non_hermitian_function_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(
        dir.path(),
        r#"{"run":"norm","params":{"function":{"s":1,"r":1,"modes":[{"l":1,"k":[0,0],"re":1,"im":0}]}}}"#,
        "out",
    );
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn solve_homological_writes_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "run": "solve-homological",
        "system": {"rho": 1.4142135623730951, "s": 2, "r": 2,
            "f": {"s": 2, "r": 2, "modes": [
                {"l": 1, "k": [1, 2], "re": 0.0005, "im": 0},
                {"l": -1, "k": [-1, -2], "re": 0.0005, "im": 0}]}},
        "params": {"k": 6, "waive": true}
    }"#;
    let o = run_config(dir.path(), cfg, "out");
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("out/diagnostics.csv")).unwrap();
    assert!(csv.starts_with("l,lattice_size,min_margin,c_value,neumann_iters,h_norm,bound,ratio\n"));
    assert_eq!(csv.lines().count(), 1 + 10);
}

#[test]
fn verify_conjugacy_identity() {
    let dir = tempfile::tempdir().unwrap();
    let sys = r#"{"rho": 0.3, "f": {"s":1,"r":1,"modes":[{"l":1,"k":[0,1],"re":0.01,"im":0},{"l":-1,"k":[0,-1],"re":0.01,"im":0}]}}"#;
    let cfg = format!(
        r#"{{"run":"verify-conjugacy","system":{sys},"params":{{"system_b":{sys},"samples":4,"horizon":200,"starts":2}}}}"#
    );
    let o = run_config(dir.path(), &cfg, "out");
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = read_json(&dir.path().join("out/result.json"));
    assert_eq!(r["max_defect"].as_f64().unwrap(), 0.0);
}

#[test]
fn modelocked_then_scan() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(
        dir.path(),
        r#"{"run":"approximate-modelocked","system":{"rho":0.41421356237309515},"params":{"eps":0.2}}"#,
        "m",
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = read_json(&dir.path().join("m/result.json"));
    assert_eq!(r["k"], serde_json::json!([1, -1]));

    let o = run_config(
        dir.path(),
        r#"{"run":"mode-lock-scan","system":{"rho":0.2},"params":{"n_points":5}}"#,
        "bad",
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn linearizable_writes_chain() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("benchmark.json"))
        .unwrap()
        .replace("\"kam-run\"", "\"approximate-linearizable\"");
    let o = run_config(dir.path(), &text, "out");
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = read_json(&dir.path().join("out/result.json"));
    assert!(r["distance"].as_f64().unwrap() < 1e-4);
    assert!(dir.path().join("out/chain.json").exists());
}
