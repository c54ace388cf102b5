//! Versioned JSON documents for ensembles and rule lists.
//!
//! Thresholds are written as the shortest decimal string that parses back
//! to the same bits, so splittings keep their identity across tools.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    Condition, DataKind, Ensemble, FeatureSelector, Prediction, Rule, ShapeletPool, Sign, Task, Tree, TreeLayout,
};
use crate::pipeline::RuleListModel;
use crate::solver::SolveStatus;
use crate::temporal::Shapelet;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const PARTITION_SAMPLES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorDoc {
    Axis(usize),
    Shapelet(usize),
}

/// Threshold as written: a decimal string, or a plain number from
/// hand-written files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdDoc {
    Text(String),
    Number(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionDoc {
    pub selector: SelectorDoc,
    pub threshold: ThresholdDoc,
    pub sign: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDoc {
    pub conditions: Vec<ConditionDoc>,
    /// Class index into `class_labels`, or the response value.
    pub prediction: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<usize>,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDoc {
    pub tree_id: usize,
    pub rules: Vec<RuleDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeletDoc {
    pub id: usize,
    pub values: Vec<f64>,
    #[serde(default)]
    pub source: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDocument {
    pub format_version: u32,
    pub task: Task,
    #[serde(default = "tabular")]
    pub kind: DataKind,
    /// Feature count, or series length for temporal data.
    pub n_features: usize,
    #[serde(default)]
    pub class_labels: Vec<String>,
    pub trees: Vec<TreeDoc>,
    #[serde(default)]
    pub shapelet_pool: Vec<ShapeletDoc>,
}

fn tabular() -> DataKind {
    DataKind::Tabular
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleListDocument {
    pub format_version: u32,
    pub task: Task,
    pub kind: DataKind,
    pub n_features: usize,
    #[serde(default)]
    pub class_labels: Vec<String>,
    pub rules: Vec<RuleDoc>,
    /// Source tree of every rule.
    pub tree_ids: Vec<usize>,
    pub fallback: f64,
    #[serde(default)]
    pub shapelets: Vec<ShapeletDoc>,
    pub lambda: f64,
    pub ell_used: usize,
    pub solver_status: SolveStatus,
    pub objective: f64,
}

pub fn format_threshold(t: f64) -> String {
    format!("{t:?}")
}

fn sign_token(s: Sign) -> &'static str {
    match s {
        Sign::Le => "<=",
        Sign::Gt => ">",
    }
}

fn condition_doc(c: &Condition) -> ConditionDoc {
    ConditionDoc {
        selector: match c.selector {
            FeatureSelector::Axis(p) => SelectorDoc::Axis(p),
            FeatureSelector::Shapelet(id) => SelectorDoc::Shapelet(id),
        },
        threshold: ThresholdDoc::Text(format_threshold(c.threshold)),
        sign: sign_token(c.sign).into(),
    }
}

fn condition_from(doc: &ConditionDoc) -> Result<Condition> {
    let threshold = match &doc.threshold {
        ThresholdDoc::Number(v) => *v,
        ThresholdDoc::Text(s) => s
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidModel(format!("threshold {s:?} is not a number")))?,
    };
    let sign = match doc.sign.as_str() {
        "<=" | "≤" => Sign::Le,
        ">" => Sign::Gt,
        other => return Err(Error::InvalidModel(format!("invalid sign token {other:?}"))),
    };
    let selector = match doc.selector {
        SelectorDoc::Axis(p) => FeatureSelector::Axis(p),
        SelectorDoc::Shapelet(id) => FeatureSelector::Shapelet(id),
    };
    Ok(Condition::new(selector, threshold, sign))
}

fn rule_doc(r: &Rule, with_coverage: bool) -> RuleDoc {
    RuleDoc {
        conditions: r.conditions.iter().map(condition_doc).collect(),
        prediction: r.prediction.as_f64(),
        weight: r.weight,
        coverage: with_coverage.then_some(r.coverage),
    }
}

fn rule_from(doc: &RuleDoc, task: Task, tree_id: usize) -> Result<Rule> {
    let conditions = doc.conditions.iter().map(condition_from).collect::<Result<Vec<_>>>()?;
    let mut rule = Rule::new(conditions, Prediction::from_f64(task, doc.prediction)?, tree_id);
    rule.weight = doc.weight;
    rule.coverage = doc.coverage.unwrap_or(0);
    Ok(rule)
}

fn shapelet_doc(id: usize, s: &Shapelet) -> ShapeletDoc {
    ShapeletDoc {
        id,
        values: s.values.clone(),
        source: s.source,
    }
}

fn shapelet_from(doc: &ShapeletDoc) -> Shapelet {
    Shapelet {
        values: doc.values.clone(),
        source: doc.source,
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::FormatVersion(v));
    }
    Ok(())
}

impl EnsembleDocument {
    pub fn from_ensemble(ens: &Ensemble) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            task: ens.task,
            kind: ens.kind,
            n_features: ens.width,
            class_labels: ens.class_names.clone(),
            trees: ens
                .trees
                .iter()
                .map(|t| TreeDoc {
                    tree_id: t.tree_id,
                    rules: t.rules.iter().map(|r| rule_doc(r, false)).collect(),
                })
                .collect(),
            shapelet_pool: ens
                .pool
                .shapelets()
                .iter()
                .enumerate()
                .map(|(id, s)| shapelet_doc(id, s))
                .collect(),
        }
    }

    /// Validates and converts, checking that every tree partitions the
    /// input space.
    pub fn to_ensemble(&self) -> Result<Ensemble> {
        check_version(self.format_version)?;
        let mut pool = Vec::with_capacity(self.shapelet_pool.len());
        for (k, s) in self.shapelet_pool.iter().enumerate() {
            if s.id != k {
                return Err(Error::InvalidModel(format!(
                    "shapelet pool entry {k} carries id {}; ids must be 0..n in order",
                    s.id
                )));
            }
            pool.push(shapelet_from(s));
        }
        let trees = self
            .trees
            .iter()
            .map(|t| {
                let rules = t
                    .rules
                    .iter()
                    .map(|r| rule_from(r, self.task, t.tree_id))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Tree::new(t.tree_id, rules))
            })
            .collect::<Result<Vec<_>>>()?;
        let ens = Ensemble::new(
            self.task,
            self.kind,
            self.n_features,
            self.class_labels.clone(),
            trees,
            ShapeletPool::new(pool),
        )?;
        check_partitions(&ens)?;
        Ok(ens)
    }
}

/// Trees whose rules rebuild a complete binary tree are partitions by
/// construction; any other tree is probed on random points.
fn check_partitions(ens: &Ensemble) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for tree in &ens.trees {
        if TreeLayout::build(&tree.rules).is_some() {
            continue;
        }
        let thresholds: Vec<Vec<f64>> = (0..ens.width)
            .map(|p| {
                tree.rules
                    .iter()
                    .flat_map(|r| &r.conditions)
                    .filter(|c| c.selector == FeatureSelector::Axis(p) && !c.is_vacuous())
                    .map(|c| c.threshold)
                    .collect()
            })
            .collect();
        for _ in 0..PARTITION_SAMPLES {
            let x: Vec<f64> = (0..ens.width)
                .map(|p| {
                    let ts = &thresholds[p];
                    if ts.is_empty() || rng.gen_bool(0.2) {
                        rng.gen_range(-3.0..3.0)
                    } else {
                        let t = ts[rng.gen_range(0..ts.len())];
                        match rng.gen_range(0..3) {
                            0 => t,
                            1 => t + t.abs().max(1.0) * 1e-6,
                            _ => t - t.abs().max(1.0) * 1e-6,
                        }
                    }
                })
                .collect();
            let features = ens.pool.features(&x)?;
            tree.predict_features(&features)?;
        }
    }
    Ok(())
}

pub fn save_ensemble(ens: &Ensemble, path: impl AsRef<Path>) -> Result<()> {
    let doc = EnsembleDocument::from_ensemble(ens);
    fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

pub fn load_ensemble(path: impl AsRef<Path>) -> Result<Ensemble> {
    let doc: EnsembleDocument = serde_json::from_str(&fs::read_to_string(path)?)?;
    doc.to_ensemble()
}

impl RuleListDocument {
    pub fn from_model(m: &RuleListModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            task: m.task,
            kind: m.kind,
            n_features: m.width,
            class_labels: m.class_names.clone(),
            rules: m.rules.iter().map(|r| rule_doc(r, true)).collect(),
            tree_ids: m.rules.iter().map(|r| r.tree_id).collect(),
            fallback: m.fallback.as_f64(),
            shapelets: m.shapelets.iter().map(|(&id, s)| shapelet_doc(id, s)).collect(),
            lambda: m.lambda,
            ell_used: m.ell_used,
            solver_status: m.solver_status,
            objective: m.objective,
        }
    }

    pub fn to_model(&self) -> Result<RuleListModel> {
        check_version(self.format_version)?;
        if self.tree_ids.len() != self.rules.len() {
            return Err(Error::InvalidModel("tree_ids and rules differ in length".into()));
        }
        let rules = self
            .rules
            .iter()
            .zip(&self.tree_ids)
            .map(|(r, &t)| rule_from(r, self.task, t))
            .collect::<Result<Vec<_>>>()?;
        let shapelets: BTreeMap<usize, Shapelet> = self.shapelets.iter().map(|s| (s.id, shapelet_from(s))).collect();
        let model = RuleListModel {
            task: self.task,
            kind: self.kind,
            width: self.n_features,
            class_names: self.class_labels.clone(),
            rules,
            fallback: Prediction::from_f64(self.task, self.fallback)?,
            shapelets,
            lambda: self.lambda,
            ell_used: self.ell_used,
            solver_status: self.solver_status,
            objective: self.objective,
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn save_model(m: &RuleListModel, path: impl AsRef<Path>) -> Result<()> {
    let doc = RuleListDocument::from_model(m);
    fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RuleListModel> {
    let doc: RuleListDocument = serde_json::from_str(&fs::read_to_string(path)?)?;
    doc.to_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{train_random_forest, CartParams};
    use crate::model::fixtures::*;
    use crate::model::Dataset;

    fn forest() -> (Ensemble, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..80).map(|_| (0..4).map(|_| rng.gen::<f64>()).collect()).collect();
        let labels: Vec<usize> = rows.iter().map(|r| usize::from(r[0] * r[3] > 0.25)).collect();
        let ds = Dataset::classification(rows, labels, 2, DataKind::Tabular).unwrap();
        (train_random_forest(&ds, &CartParams::forest(20, 3, 9)).unwrap(), ds)
    }

    #[test]
    fn thresholds_round_trip_bitwise() {
        for t in [0.1, 1.0 / 3.0, -2.5e-300, f64::MAX, 12.2, 5e-324] {
            assert_eq!(format_threshold(t).parse::<f64>().unwrap().to_bits(), t.to_bits());
        }
    }

    #[test]
    fn forest_round_trip() {
        let (ens, _) = forest();
        let doc = EnsembleDocument::from_ensemble(&ens);
        let text = serde_json::to_string(&doc).unwrap();
        let back: EnsembleDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(doc, back);
        let loaded = back.to_ensemble().unwrap();
        assert_eq!(loaded, ens);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.5..1.5)).collect();
            assert_eq!(loaded.predict(&x).unwrap(), ens.predict(&x).unwrap());
        }
    }

    #[test]
    fn figure_tree_by_hand() {
        let json = r#"{
          "format_version": 1, "task": "classification", "n_features": 10,
          "class_labels": ["Class 0", "Class 1"],
          "trees": [{"tree_id": 0, "rules": [
            {"conditions": [{"selector": {"axis": 9}, "threshold": "0.7", "sign": "<="},
                            {"selector": {"axis": 7}, "threshold": "12.2", "sign": "<="}], "prediction": 0},
            {"conditions": [{"selector": {"axis": 9}, "threshold": "0.7", "sign": "<="},
                            {"selector": {"axis": 7}, "threshold": 12.2, "sign": ">"}], "prediction": 1},
            {"conditions": [{"selector": {"axis": 9}, "threshold": "0.7", "sign": ">"},
                            {"selector": {"axis": 1}, "threshold": "97.8", "sign": "<="}], "prediction": 0},
            {"conditions": [{"selector": {"axis": 9}, "threshold": "0.7", "sign": ">"},
                            {"selector": {"axis": 1}, "threshold": "97.8", "sign": ">"}], "prediction": 1}
          ]}]
        }"#;
        let doc: EnsembleDocument = serde_json::from_str(json).unwrap();
        let ens = doc.to_ensemble().unwrap();
        assert_eq!(ens.trees[0], figure_tree());
        let mut x = vec![0.0; 10];
        x[9] = 1.0;
        x[1] = 100.0;
        assert_eq!(ens.predict(&x).unwrap(), Prediction::Class(1));
    }

    #[test]
    fn rejects_bad_documents() {
        let (ens, _) = forest();
        let mut doc = EnsembleDocument::from_ensemble(&ens);
        doc.format_version = 2;
        assert!(matches!(doc.to_ensemble(), Err(Error::FormatVersion(2))));

        let mut doc = EnsembleDocument::from_ensemble(&ens);
        doc.trees[0].rules[0].conditions[0].sign = "<".into();
        assert!(doc.to_ensemble().is_err());

        let mut doc = EnsembleDocument::from_ensemble(&ens);
        doc.trees[0].rules[0].conditions[0].selector = SelectorDoc::Shapelet(3);
        assert!(matches!(doc.to_ensemble(), Err(Error::UnknownShapelet(3))));
    }

    #[test]
    fn overlapping_tree_detected_by_sampling() {
        let (ens, _) = forest();
        let mut doc = EnsembleDocument::from_ensemble(&ens);
        // Drop one leaf: the remaining rules no longer rebuild a complete
        // tree and some points satisfy none of them.
        doc.trees[0].rules.pop();
        assert!(matches!(
            doc.to_ensemble(),
            Err(Error::CorruptedTree { .. }) | Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn model_round_trip() {
        let (ens, ds) = forest();
        let model = crate::pipeline::extract(&ens, &ds, &crate::pipeline::ExtractionConfig::fixed(6)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
        let epath = dir.path().join("e.json");
        save_ensemble(&ens, &epath).unwrap();
        assert_eq!(load_ensemble(&epath).unwrap(), ens);
    }
}
