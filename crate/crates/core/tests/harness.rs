use devbound::harness::{rate_study, verify, write_outputs, ExperimentConfig};

const SMOKE: &str = r#"{
    "distribution": {"kind": "two_point", "a": 1.0, "direction": [1.0]},
    "cost": "kmeans", "k": 1, "p": 4, "delta": 0.05, "m": 2000,
    "trials": 3, "n_eval": 5000, "seed": 5,
    "probes": {"restarts": 2, "perturbations": 2, "far_centers": 1}
}"#;

#[test]
fn outputs_round_trip() {
    let cfg = ExperimentConfig::from_json(SMOKE).unwrap();
    let report = verify(&cfg).unwrap();
    assert_eq!(report.trials.len(), 3);
    assert!(report
        .trials
        .iter()
        .all(|t| t.margin == t.bound - t.deviation));
    let dir = tempfile::tempdir().unwrap();
    let files = write_outputs(&report, dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    let back: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&files[0]).unwrap()).unwrap();
    assert_eq!(back["config"]["seed"], 5);
    assert_eq!(back["trials"].as_array().unwrap().len(), 3);
}

#[test]
fn rate_study_writes_fit() {
    let cfg = SMOKE.replace("\"m\": 2000", "\"m_grid\": [500, 1000, 2000, 4000]");
    let cfg = ExperimentConfig::from_json(&cfg).unwrap();
    let report = rate_study(&cfg).unwrap();
    let fit = report.rate_fit.as_ref().unwrap();
    assert_eq!(fit.points.len(), 4);
    assert!(fit.points.windows(2).all(|w| w[1].bound < w[0].bound));
    let dir = tempfile::tempdir().unwrap();
    let files = write_outputs(&report, dir.path()).unwrap();
    assert!(files.iter().any(|f| f.ends_with("ratefit.csv")));
}

#[test]
fn seeds_change_samples() {
    let a = verify(&ExperimentConfig::from_json(SMOKE).unwrap()).unwrap();
    let b =
        verify(&ExperimentConfig::from_json(&SMOKE.replace("\"seed\": 5", "\"seed\": 6")).unwrap())
            .unwrap();
    assert_ne!(
        a.trials.iter().map(|t| t.deviation).collect::<Vec<_>>(),
        b.trials.iter().map(|t| t.deviation).collect::<Vec<_>>()
    );
}
