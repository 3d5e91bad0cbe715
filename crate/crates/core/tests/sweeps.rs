use unipred::bench::{
    emit_report, parse_json_report, render_report, run_risk_sweep, run_worstcase_search,
    ExperimentConfig, Format, ModelFamily, ParamSource, RunMode, CSV_HEADER,
};
use unipred::infolab::exact_prediction_risk;
use unipred::models::{random_hmm, Model};
use unipred::predictor::{Order, PredictorSpec};

fn hmm_config(
    count: usize,
    predictors: Vec<PredictorSpec>,
    n_grid: Vec<usize>,
    mode: RunMode,
    trials: usize,
) -> ExperimentConfig {
    ExperimentConfig {
        model_family: ModelFamily::Hmm {
            k: 2,
            l: 2,
            source: ParamSource::Random { count, seed: 99 },
        },
        predictors,
        n_grid,
        trials,
        master_seed: 3,
        output_path: None,
        mode,
        threads: None,
        search_budget: None,
    }
}

#[test]
fn monte_carlo_agrees_with_exact() {
    let spec = vec![PredictorSpec::MarkovApprox {
        l: 2,
        d: Order::Fixed(1),
    }];
    let exact = run_risk_sweep(&hmm_config(
        25,
        spec.clone(),
        vec![2, 3, 4, 5],
        RunMode::Exact,
        1,
    ))
    .unwrap();
    let mc = run_risk_sweep(&hmm_config(
        25,
        spec,
        vec![2, 3, 4, 5],
        RunMode::Montecarlo,
        2000,
    ))
    .unwrap();
    assert_eq!(exact.len(), 100);
    let covered = exact
        .iter()
        .zip(&mc)
        .filter(|(e, m)| {
            assert_eq!((&e.model_id, e.n), (&m.model_id, m.n));
            let width = m.ci_high.unwrap() - m.ci_low.unwrap();
            (m.risk_nats.unwrap() - e.risk_nats.unwrap()).abs() <= width
        })
        .count();
    assert!(covered >= 93, "only {covered} of 100 records agree");
}

#[test]
fn worst_case_beats_reference_models() {
    let spec = PredictorSpec::OptimalHmm {
        k: 2,
        l: 2,
        budget: None,
    };
    let cfg = hmm_config(1, vec![spec.clone()], vec![6], RunMode::Exact, 1);
    let references: Vec<Model> = (0..20)
        .map(|i| Model::Hmm(random_hmm(2, 2, 500 + i)))
        .collect();
    let pred = spec.build(None).unwrap();
    let best_reference = references
        .iter()
        .map(|m| exact_prediction_risk(&m.as_hmm(), pred.as_ref(), 6).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let found = run_worstcase_search(&cfg, 60, &references).unwrap();
    let value = found.record.risk_nats.unwrap();
    assert!(value >= best_reference, "{value} < {best_reference}");
    assert_eq!(found.visited.len(), 60);
    let direct = exact_prediction_risk(&found.model.as_hmm(), pred.as_ref(), 6).unwrap();
    assert!((direct - value).abs() < 1e-12);
}

#[test]
fn markov_approx_risk_is_positive_on_long_horizons() {
    let spec = vec![PredictorSpec::MarkovApprox {
        l: 2,
        d: Order::Auto,
    }];
    let grid: Vec<usize> = (6..=12).map(|e| 1 << e).collect();
    let records = run_risk_sweep(&hmm_config(2, spec, grid, RunMode::Montecarlo, 20)).unwrap();
    for r in records {
        let v = r.risk_nats.unwrap();
        assert!(v.is_finite() && v > 0.0, "{r:?}");
        assert!(r.ci_low.unwrap() <= v && v <= r.ci_high.unwrap());
        assert!((r.n_times_risk.unwrap() - r.n as f64 * v).abs() < 1e-9);
    }
}

#[test]
fn reports_are_stable_and_guarded() {
    let cfg = hmm_config(
        2,
        vec![PredictorSpec::Oracle],
        vec![4, 8],
        RunMode::Montecarlo,
        10,
    );
    let records = run_risk_sweep(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let empty = dir.path().join("empty.csv");
    assert!(emit_report(&[], Format::Csv, &empty).is_err());
    assert!(!empty.exists());

    let csv = dir.path().join("r.csv");
    emit_report(&records, Format::Csv, &csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(text.lines().count(), records.len() + 1);
    assert!(text.lines().all(|l| l.split(',').count() == 9));
    assert_eq!(render_report(&records, Format::Csv).unwrap(), text);

    let json = dir.path().join("r.json");
    emit_report(&records, Format::Json, &json).unwrap();
    assert_eq!(
        parse_json_report(&std::fs::read_to_string(&json).unwrap()).unwrap(),
        records
    );

    let missing = dir.path().join("no/such/dir/r.csv");
    let err = emit_report(&records, Format::Csv, &missing)
        .unwrap_err()
        .to_string();
    assert!(err.contains("no/such/dir"), "{err}");
}

#[test]
fn renewal_family_sweep() {
    let cfg = ExperimentConfig {
        model_family: ModelFamily::Renewal {
            support: 3,
            source: ParamSource::Random { count: 2, seed: 1 },
        },
        predictors: vec![
            PredictorSpec::RenewalEmpiricalHazard { floor_exp: 1.0 },
            PredictorSpec::RenewalNml {
                support: 3,
                cap: 12,
            },
            PredictorSpec::Oracle,
        ],
        n_grid: vec![4, 8],
        trials: 1,
        master_seed: 0,
        output_path: None,
        mode: RunMode::Exact,
        threads: None,
        search_budget: None,
    };
    let records = run_risk_sweep(&cfg).unwrap();
    assert_eq!(records.len(), 12);
    for r in &records {
        let v = r.risk_nats.unwrap_or_else(|| panic!("{r:?}"));
        assert!(v >= -1e-12);
        if r.predictor == "oracle" {
            assert!(v.abs() < 1e-12);
        }
    }
}

#[test]
fn config_json_round_trip() {
    let text = r#"{
        "model_family": {"family": "renewal", "support": 4, "source": {"type": "random", "count": 3, "seed": 8}},
        "predictors": [{"kind": "renewal-nml", "support": 4}, {"kind": "markov-approx", "l": 2, "d": "auto"}],
        "n_grid": [4, 8, 12],
        "trials": 50,
        "master_seed": 17,
        "mode": "montecarlo",
        "threads": 2
    }"#;
    let cfg = ExperimentConfig::from_json(text).unwrap();
    assert_eq!(cfg.predictors.len(), 2);
    let again = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(cfg, again);
    assert!(ExperimentConfig::from_json(&text.replace("[4, 8, 12]", "[8, 4]")).is_err());
    assert!(ExperimentConfig::from_json(&text.replace("\"trials\"", "\"trails\"")).is_err());
}
