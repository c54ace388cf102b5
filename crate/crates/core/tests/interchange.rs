//! Ensembles exported from scikit-learn load and predict like the source.

use serde::Deserialize;

use forest_distill::io::EnsembleDocument;
use forest_distill::model::Prediction;
use forest_distill::Error;

#[derive(Deserialize)]
struct Fixture {
    points: Vec<Vec<f64>>,
    classification: EnsembleDocument,
    classification_tree_predictions: Vec<Vec<usize>>,
    regression: EnsembleDocument,
    regression_mean: Vec<f64>,
}

fn fixture() -> Fixture {
    serde_json::from_str(include_str!("fixtures/exported_forests.json")).unwrap()
}

#[test]
fn classification_trees_agree() {
    let f = fixture();
    let ens = f.classification.to_ensemble().unwrap();
    assert_eq!(ens.trees.len(), 5);
    for (tree, expected) in ens.trees.iter().zip(&f.classification_tree_predictions) {
        for (x, &want) in f.points.iter().zip(expected) {
            assert_eq!(tree.predict(x, &ens.pool).unwrap(), Prediction::Class(want));
        }
    }
}

#[test]
fn regression_mean_agrees() {
    let f = fixture();
    let ens = f.regression.to_ensemble().unwrap();
    for (x, want) in f.points.iter().zip(&f.regression_mean) {
        let got = ens.predict(x).unwrap().as_f64();
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }
}

#[test]
fn reexport_is_stable() {
    let f = fixture();
    let ens = f.regression.to_ensemble().unwrap();
    let again = EnsembleDocument::from_ensemble(&ens);
    assert_eq!(again.to_ensemble().unwrap(), ens);
    let text = serde_json::to_string(&again).unwrap();
    let parsed: EnsembleDocument = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, again);
}

#[test]
fn other_versions_rejected() {
    let mut doc = fixture().classification;
    doc.format_version = 2;
    assert!(matches!(doc.to_ensemble(), Err(Error::FormatVersion(2))));
}

#[test]
fn broken_partition_rejected() {
    let mut doc = fixture().classification;
    doc.trees[0].rules.pop();
    assert!(doc.to_ensemble().is_err());
}
