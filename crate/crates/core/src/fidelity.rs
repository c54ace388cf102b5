//! How faithfully a rule list reflects its source ensemble.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::forest::{mdi_importance, shapelet_importance};
use crate::model::{DataKind, Dataset, Ensemble, FeatureSelector, Prediction, Rule, Sign, Task};
use crate::pipeline::{predict_rule_list, RuleListModel};
use crate::{Error, Result};

type ConditionKey = (FeatureSelector, u64, Sign);

fn tree_fraction(ens: &Ensemble, represented: impl Fn(&[Rule]) -> bool) -> f64 {
    if ens.trees.is_empty() {
        return 0.0;
    }
    let hits = ens.trees.iter().filter(|t| represented(&t.rules)).count();
    hits as f64 / ens.trees.len() as f64
}

/// Fraction of trees sharing at least one complete rule with the list.
pub fn path_represented_fraction(rules: &[Rule], ens: &Ensemble) -> f64 {
    tree_fraction(ens, |tree| tree.iter().any(|t| rules.iter().any(|r| r.same_path(t))))
}

fn condition_keys(rules: &[Rule]) -> HashSet<ConditionKey> {
    rules
        .iter()
        .flat_map(|r| &r.conditions)
        .filter(|c| !c.is_vacuous())
        .map(|c| c.key())
        .collect()
}

/// Fraction of trees sharing at least one signed condition with the list.
pub fn node_represented_fraction(rules: &[Rule], ens: &Ensemble) -> f64 {
    let keys = condition_keys(rules);
    tree_fraction(ens, |tree| {
        tree.iter()
            .flat_map(|t| &t.conditions)
            .any(|c| !c.is_vacuous() && keys.contains(&c.key()))
    })
}

/// Fraction of all forest rules (with multiplicity) that appear in the list.
pub fn represented_paths_fraction(rules: &[Rule], ens: &Ensemble) -> f64 {
    let total = ens.n_rules();
    if total == 0 {
        return 0.0;
    }
    let hits = ens
        .trees
        .iter()
        .flat_map(|t| &t.rules)
        .filter(|t| rules.iter().any(|r| r.same_path(t)))
        .count();
    hits as f64 / total as f64
}

/// F1 between two index sets; 0 when either is empty.
pub fn set_f1(predicted: &HashSet<usize>, truth: &HashSet<usize>) -> f64 {
    if predicted.is_empty() || truth.is_empty() {
        return 0.0;
    }
    let tp = predicted.intersection(truth).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let p = tp / predicted.len() as f64;
    let r = tp / truth.len() as f64;
    2.0 * p * r / (p + r)
}

/// The `ceil(top_frac * n)` (at least one) indices with the largest
/// positive importance; ties keep the lower index.
pub fn top_features(importance: &[f64], top_frac: f64) -> HashSet<usize> {
    let k = ((top_frac * importance.len() as f64).ceil() as usize).max(1);
    let mut order: Vec<usize> = (0..importance.len()).filter(|&i| importance[i] > 0.0).collect();
    order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    order.into_iter().take(k).collect()
}

/// F1 of the features used by the list against the forest's most
/// important ones. Temporal ensembles rank shapelet ids instead of axes.
pub fn importance_f1(rules: &[Rule], ens: &Ensemble, ds: &Dataset, top_frac: f64) -> Result<f64> {
    if !(top_frac > 0.0 && top_frac <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "top fraction {top_frac} outside (0, 1]"
        )));
    }
    let importance = match ens.kind {
        DataKind::Tabular => mdi_importance(ens, ds)?,
        DataKind::Temporal => shapelet_importance(ens, ds)?,
    };
    let pick = |s: FeatureSelector| match (ens.kind, s) {
        (DataKind::Tabular, FeatureSelector::Axis(p)) => Some(p),
        (DataKind::Temporal, FeatureSelector::Shapelet(id)) => Some(id),
        _ => None,
    };
    let predicted: HashSet<usize> = rules
        .iter()
        .flat_map(|r| &r.conditions)
        .filter(|c| !c.is_vacuous())
        .filter_map(|c| pick(c.selector))
        .collect();
    Ok(set_f1(&predicted, &top_features(&importance, top_frac)))
}

/// Mismatch rate (classification) or mean squared difference (regression)
/// between the list and the ensemble on `ds`.
pub fn disagreement(model: &RuleListModel, ens: &Ensemble, ds: &Dataset) -> Result<f64> {
    if model.task != ens.task {
        return Err(Error::TaskMismatch {
            expected: ens.task.name(),
            found: model.task.name(),
        });
    }
    if ds.is_empty() {
        return Ok(0.0);
    }
    let forest = ens.predict_dataset(ds)?;
    let n = ds.len() as f64;
    let total: f64 = forest
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let l = predict_rule_list(model, ds.point(i));
            match (l, f) {
                (Prediction::Class(a), Prediction::Class(b)) => f64::from(u8::from(a != *b)),
                (a, b) => (a.as_f64() - b.as_f64()).powi(2),
            }
        })
        .sum();
    Ok(total / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub task: Task,
    /// Node-represented tree fraction.
    pub represented_trees: f64,
    /// Path-represented tree fraction.
    pub path_represented_trees: f64,
    /// Fraction of all forest rules present in the list.
    pub represented_paths: f64,
    pub f1: f64,
    pub top_fraction: f64,
    pub disagreement: f64,
    pub n_rules: usize,
    pub notes: Vec<String>,
}

pub fn fidelity_report(model: &RuleListModel, ens: &Ensemble, ds: &Dataset, top_frac: f64) -> Result<FidelityReport> {
    let rules = &model.rules;
    Ok(FidelityReport {
        task: model.task,
        represented_trees: node_represented_fraction(rules, ens),
        path_represented_trees: path_represented_fraction(rules, ens),
        represented_paths: represented_paths_fraction(rules, ens),
        f1: importance_f1(rules, ens, ds, top_frac)?,
        top_fraction: top_frac,
        disagreement: disagreement(model, ens, ds)?,
        n_rules: rules.len(),
        notes: vec![
            "represented_trees counts trees sharing at least one signed condition with the list".into(),
            "represented_paths is the share of all forest rules, with multiplicity, that appear in the list".into(),
        ],
    })
}
