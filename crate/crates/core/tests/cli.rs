use std::path::Path;
use std::process::{Command, Output};

fn unipred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unipred"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const HMM: &str = r#"{"k":2,"l":2,"trans":[[0.9,0.1],[0.3,0.7]],"emit":[[0.8,0.2],[0.25,0.75]]}"#;

#[test]
fn simulate_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "hmm.json", HMM);
    let cfg = write(
        dir.path(),
        "sim.json",
        r#"{"model":"hmm.json","n":12,"count":3}"#,
    );
    let a = unipred(&["simulate", "--config", &cfg, "--seed", "4"]);
    let b = unipred(&["simulate", "--config", &cfg, "--seed", "4"]);
    let c = unipred(&["simulate", "--config", &cfg, "--seed", "5"]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert_ne!(stdout(&a), stdout(&c));
    assert_eq!(stdout(&a).lines().count(), 4);
}

#[test]
fn predict_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        r#"{"predictor":{"kind":"optimal-hmm","k":2,"l":2},"sequence":[0,1,1,0,1]}"#,
    );
    let o = unipred(&["predict", "--config", &cfg, "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let total: f64 = v
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["probability"].as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn risk_sweep_writes_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sweep.json",
        r#"{"model_family":{"family":"hmm","k":2,"l":2,"source":{"type":"random","count":2,"seed":3}},
            "predictors":[{"kind":"markov-approx","l":2},{"kind":"oracle"}],
            "n_grid":[4,8],"trials":30,"master_seed":1,"output_path":"out.csv"}"#,
    );
    let o = unipred(&["risk-sweep", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert!(text.starts_with(
        "model_id,predictor,n,risk_nats,ci_low,ci_high,trials,wall_ms,n_times_risk\n"
    ));
    assert_eq!(text.lines().count(), 9);

    let json_out = dir.path().join("o.json").display().to_string();
    let o = unipred(&[
        "risk-sweep",
        "--config",
        &cfg,
        "--out",
        &json_out,
        "--format",
        "json",
        "--seed",
        "9",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_out).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 8);
}

#[test]
fn worst_case_reports_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "wc.json",
        r#"{"model_family":{"family":"renewal","support":3,"source":{"type":"random","count":1,"seed":3}},
            "predictors":[{"kind":"renewal-empirical-hazard"}],
            "n_grid":[6],"mode":"exact","search_budget":8}"#,
    );
    let o = unipred(&["worst-case", "--config", &cfg, "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["evaluated"], 8);
    assert!(v["model"]["mu"].is_array());
    assert!(v["record"]["risk_nats"].as_f64().unwrap() > 0.0);
}

#[test]
fn information_commands() {
    let dir = tempfile::tempdir().unwrap();
    let red = write(
        dir.path(),
        "red.json",
        r#"{"model":{"random":{"family":"hmm","k":2,"l":2}},"assignment":{"kind":"marginal","k":2,"l":2},"m_grid":[2,4]}"#,
    );
    let o = unipred(&["redundancy", "--config", &red, "--seed", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        stdout(&o).lines().next().unwrap(),
        "m,redundancy,ci_low,ci_high,trials,unit"
    );

    let mem = write(
        dir.path(),
        "mem.json",
        &format!(r#"{{"model":{HMM},"n_grid":[1,3]}}"#),
    );
    let o = unipred(&["memory", "--config", &mem, "--format", "json", "--bits"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for row in v.as_array().unwrap() {
        assert_eq!(row["unit"], "bits");
        assert!((row["log_k"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!(
            row["memory_term"].as_f64().unwrap() <= row["latent_info"].as_f64().unwrap() + 1e-9
        );
    }

    let sh = write(
        dir.path(),
        "sh.json",
        r#"{"class":{"class":"renewal","support":2},"m_grid":[1,2,3]}"#,
    );
    let o = unipred(&["shtarkov", "--config", &sh]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"model_family":{"family":"hmm"}}"#,
    );
    assert_eq!(
        unipred(&["risk-sweep", "--config", &bad]).status.code(),
        Some(2)
    );
    assert_eq!(unipred(&["no-such-command"]).status.code(), Some(2));

    let unsorted = write(
        dir.path(),
        "u.json",
        r#"{"model_family":{"family":"hmm","k":2,"l":2,"source":{"type":"random","count":1,"seed":3}},
            "predictors":[{"kind":"oracle"}],"n_grid":[8,4]}"#,
    );
    assert_eq!(
        unipred(&["risk-sweep", "--config", &unsorted])
            .status
            .code(),
        Some(2)
    );

    let budget = write(
        dir.path(),
        "b.json",
        r#"{"model_family":{"family":"hmm","k":3,"l":3,"source":{"type":"random","count":2,"seed":3}},
            "predictors":[{"kind":"optimal-hmm","k":3,"l":3,"budget":50}],
            "n_grid":[10,20],"trials":2}"#,
    );
    let o = unipred(&["risk-sweep", "--config", &budget]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stdout(&o).lines().count(), 5);
}
