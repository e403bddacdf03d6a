mod common;

use cfsearch_core::bundle::{train_bundle, ModelBundle, TrainConfig};
use cfsearch_core::causality::{export_heatmap, import_heatmap};
use cfsearch_core::evaluate::{evaluate_learners, EvaluationTable, Learner};
use cfsearch_core::series::MultivariateSeries;
use cfsearch_core::synth::{generate_var, granger4};

#[test]
fn granger4_bundle_round_trip() {
    let series = generate_var(&granger4(), 5000, 7).unwrap();
    let bundle = train_bundle(&series, &TrainConfig::default()).unwrap();
    assert_eq!(bundle.banks.len(), 4);
    assert!(bundle.banks.iter().all(|b| b.models.len() == 11));
    for (cause, effect) in granger4().planted_edges() {
        assert!(bundle.causality.mask[cause][effect], "{cause}->{effect}");
    }
    for v in 0..4 {
        assert_eq!(bundle.banks[v].features[0], v);
        assert!(bundle.causality.p_values[v][v].is_none());
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.json");
    bundle.save(&path).unwrap();
    let back = ModelBundle::load(&path).unwrap();
    assert_eq!(back, bundle);
    assert_eq!(back.to_json().unwrap(), bundle.to_json().unwrap());

    let heat = dir.path().join("heat.csv");
    export_heatmap(&bundle.causality, &heat).unwrap();
    assert_eq!(import_heatmap(&heat).unwrap(), bundle.causality);

    let mut broken: serde_json::Value = serde_json::from_str(&bundle.to_json().unwrap()).unwrap();
    broken["banks"].as_array_mut().unwrap().pop();
    assert!(ModelBundle::from_json(&broken.to_string()).is_err());
}

#[test]
fn evaluation_table_beats_mean_and_round_trips() {
    let series = generate_var(&granger4(), 3000, 8).unwrap();
    let bundle = train_bundle(&series, &TrainConfig::default()).unwrap();
    let table = evaluate_learners(&series, &bundle, &Learner::ALL).unwrap();
    assert_eq!(table.target, "x4");
    assert_eq!(table.rows.len(), 3);
    for row in &table.rows {
        let m = &row.metrics;
        assert!(m.mae.is_finite() && m.mse.is_finite());
        assert_eq!(m.n, 1500);
    }
    let ridge = &table.rows[0].metrics;
    assert!(ridge.r2.unwrap() > 0.0);
    assert!(ridge.mse <= table.rows[2].metrics.mse);
    let back = EvaluationTable::from_csv("x4", &table.to_csv()).unwrap();
    assert_eq!(back.to_csv(), table.to_csv());
    let text = table.to_text();
    assert!(text.contains("quantile_median"));
}

#[test]
fn constant_target_has_undefined_r2() {
    let base = generate_var(&granger4(), 600, 9).unwrap();
    let mut columns = base.columns().to_vec();
    columns[3] = vec![2.5; base.len()];
    let series = MultivariateSeries::regular(
        base.names().to_vec(),
        base.timestamps()[0],
        base.delta_ns(),
        columns,
        3,
        vec![true, true, true, false],
    )
    .unwrap();
    let bundle = train_bundle(&series, &TrainConfig::default()).unwrap();
    let table = evaluate_learners(&series, &bundle, &[Learner::Ridge, Learner::Persistence]).unwrap();
    assert!(table.rows.iter().all(|r| r.metrics.r2.is_none()));
    assert!(table.to_text().contains("undef"));
    assert!(table.to_csv().lines().nth(1).unwrap().contains(",,"));
}
