//! End-to-end extraction: rule catalog, partition program, choice of the
//! rule budget on held-out data, and rule-list inference.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    plurality, Condition, DataKind, Dataset, Ensemble, FeatureSelector, Prediction, Rule, Targets, Task,
};
use crate::preprocess::RuleCatalog;
use crate::solver::{
    build_partition_problem, heuristic_lower_bound, heuristic_upper_bound, max_rules_bound, min_rules_bound,
    solve_exact, sweep_problem, Budget, PartitionSolution, SolveStatus,
};
use crate::temporal::{subsequence_distance, Shapelet};
use crate::{Error, Result};

/// How the cap on the number of rules is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EllSelection {
    Fixed(usize),
    /// Sweep `lo..=hi` and keep the cap with the lowest validation loss.
    /// Missing ends are computed from exact bound programs or heuristics.
    Validate {
        lo: Option<usize>,
        hi: Option<usize>,
        exact_bounds: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub lambda: f64,
    pub ell: EllSelection,
    pub n_min_fraction: f64,
    pub repair_filter: bool,
    pub budget: Budget,
    /// K-fold validation instead of a single held-out split.
    pub cv_folds: Option<usize>,
    pub validation_fraction: f64,
    /// Pruning strength of the tree behind the heuristic upper bound.
    pub upper_bound_alpha: f64,
    pub seed: u64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            ell: EllSelection::Validate {
                lo: None,
                hi: None,
                exact_bounds: true,
            },
            n_min_fraction: 0.0,
            repair_filter: true,
            budget: Budget::default(),
            cv_folds: None,
            validation_fraction: 0.25,
            upper_bound_alpha: 0.01,
            seed: 0,
        }
    }
}

impl ExtractionConfig {
    pub fn fixed(ell: usize) -> Self {
        Self {
            ell: EllSelection::Fixed(ell),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if !(0.0..1.0).contains(&self.n_min_fraction) {
            return Err(Error::InvalidParameter(format!(
                "minimum coverage fraction {} outside [0, 1)",
                self.n_min_fraction
            )));
        }
        match self.ell {
            EllSelection::Fixed(0) => return Err(Error::InvalidParameter("ell must be at least 1".into())),
            EllSelection::Validate {
                lo: Some(lo),
                hi: Some(hi),
                ..
            } if lo == 0 || lo > hi => return Err(Error::InvalidParameter(format!("invalid ell range {lo}..={hi}"))),
            EllSelection::Validate { lo: Some(0), .. } | EllSelection::Validate { hi: Some(0), .. } => {
                return Err(Error::InvalidParameter("ell bounds must be at least 1".into()))
            }
            _ => {}
        }
        if let Some(k) = self.cv_folds {
            if k < 2 {
                return Err(Error::InvalidParameter("cv_folds must be at least 2".into()));
            }
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "validation fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// The extracted rule list with everything needed to predict.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleListModel {
    pub task: Task,
    pub kind: DataKind,
    pub width: usize,
    pub class_names: Vec<String>,
    /// Extracted rules; `coverage` holds the training coverage.
    pub rules: Vec<Rule>,
    pub fallback: Prediction,
    /// Shapelets referenced by the rules, under their ensemble ids.
    pub shapelets: BTreeMap<usize, Shapelet>,
    pub lambda: f64,
    pub ell_used: usize,
    pub solver_status: SolveStatus,
    pub objective: f64,
}

/// Which branch of the inference rule produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Unique,
    Multiple,
    Fallback,
}

impl RuleListModel {
    fn value(&self, selector: FeatureSelector, x: &[f64], cache: &mut Vec<(usize, f64)>) -> Option<f64> {
        match selector {
            FeatureSelector::Axis(p) => x.get(p).copied(),
            FeatureSelector::Shapelet(id) => {
                if let Some(&(_, d)) = cache.iter().find(|(i, _)| *i == id) {
                    return Some(d);
                }
                let d = subsequence_distance(x, &self.shapelets.get(&id)?.values).ok()?;
                cache.push((id, d));
                Some(d)
            }
        }
    }

    fn holds(&self, cond: &Condition, x: &[f64], cache: &mut Vec<(usize, f64)>) -> bool {
        self.value(cond.selector, x, cache).is_some_and(|v| cond.test(v))
    }

    /// Indices of the rules satisfied by `x`. Conditions that cannot be
    /// evaluated on `x` count as unsatisfied.
    pub fn satisfied(&self, x: &[f64]) -> Vec<usize> {
        let mut cache = Vec::new();
        (0..self.rules.len())
            .filter(|&j| self.rules[j].conditions.iter().all(|c| self.holds(c, x, &mut cache)))
            .collect()
    }

    /// The unique satisfied rule, else the satisfied rule with the largest
    /// training coverage (earliest on ties), else the fallback.
    pub fn predict_detail(&self, x: &[f64]) -> (Prediction, Resolution) {
        let hits = self.satisfied(x);
        match hits.as_slice() {
            [] => (self.fallback, Resolution::Fallback),
            [j] => (self.rules[*j].prediction, Resolution::Unique),
            _ => {
                let mut best = hits[0];
                for &j in &hits[1..] {
                    if self.rules[j].coverage > self.rules[best].coverage {
                        best = j;
                    }
                }
                (self.rules[best].prediction, Resolution::Multiple)
            }
        }
    }

    pub fn n_rules(&self) -> usize {
        self.rules.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(Error::InvalidModel("rule list without rules".into()));
        }
        for rule in &self.rules {
            for c in &rule.conditions {
                match c.selector {
                    FeatureSelector::Axis(p) if p >= self.width && !c.is_vacuous() => {
                        return Err(Error::FeatureOutOfRange {
                            index: p,
                            len: self.width,
                        })
                    }
                    FeatureSelector::Shapelet(id) if !self.shapelets.contains_key(&id) => {
                        return Err(Error::UnknownShapelet(id))
                    }
                    _ => {}
                }
            }
            check_prediction(self.task, rule.prediction, self.class_names.len())?;
        }
        check_prediction(self.task, self.fallback, self.class_names.len())
    }
}

fn check_prediction(task: Task, p: Prediction, n_classes: usize) -> Result<()> {
    match (task, p) {
        (Task::Classification, Prediction::Class(c)) if c < n_classes => Ok(()),
        (Task::Regression, Prediction::Value(v)) if v.is_finite() => Ok(()),
        _ => Err(Error::InvalidModel(format!(
            "prediction {p:?} invalid for a {} model",
            task.name()
        ))),
    }
}

pub fn predict_rule_list(model: &RuleListModel, x: &[f64]) -> Prediction {
    model.predict_detail(x).0
}

/// Majority class or mean target.
pub fn fallback_prediction(ds: &Dataset) -> Prediction {
    match ds.targets() {
        Targets::Classes { ids, names } => {
            let mut counts = vec![0usize; names.len()];
            for &c in ids {
                counts[c] += 1;
            }
            Prediction::Class(plurality(&counts))
        }
        Targets::Values(v) => Prediction::Value(v.iter().sum::<f64>() / v.len().max(1) as f64),
    }
}

/// Timings and choices made during one extraction.
#[derive(Debug, Clone, Serialize)]
pub struct ExtractionReport {
    pub preprocess_seconds: f64,
    pub solver_seconds: f64,
    pub n_candidate_rules: usize,
    pub n_filtered_rules: usize,
    pub uncovered_points: usize,
    pub ell_range: Option<(usize, usize)>,
    /// Validation loss per swept cap; `None` where the cap was infeasible.
    pub validation_losses: Vec<(usize, Option<f64>)>,
    pub ell_used: usize,
    pub objective: f64,
    pub status: SolveStatus,
    pub n_rules: usize,
}

fn build_model(
    ens: &Ensemble,
    train: &Dataset,
    catalog: &RuleCatalog,
    sol: &PartitionSolution,
    lambda: f64,
    ell: usize,
) -> RuleListModel {
    let rules: Vec<Rule> = sol.selected.iter().map(|&j| catalog.rules[j].clone()).collect();
    let mut shapelets = BTreeMap::new();
    for rule in &rules {
        for c in &rule.conditions {
            if let FeatureSelector::Shapelet(id) = c.selector {
                if let Some(s) = ens.pool.get(id) {
                    shapelets.insert(id, s.clone());
                }
            }
        }
    }
    RuleListModel {
        task: ens.task,
        kind: ens.kind,
        width: ens.width,
        class_names: ens.class_names.clone(),
        rules,
        fallback: fallback_prediction(train),
        shapelets,
        lambda,
        ell_used: ell,
        solver_status: sol.status,
        objective: sol.objective,
    }
}

fn filtered_catalog(ens: &Ensemble, train: &Dataset, cfg: &ExtractionConfig) -> Result<(RuleCatalog, usize)> {
    if train.is_empty() {
        return Err(Error::InvalidDataset("empty training set".into()));
    }
    if train.width() != ens.width {
        return Err(Error::InvalidDataset(format!(
            "training points have {} values, ensemble expects {}",
            train.width(),
            ens.width
        )));
    }
    let full = RuleCatalog::build(ens, train)?;
    let n = full.len();
    Ok((full.filter_min_coverage(cfg.n_min_fraction, cfg.repair_filter)?, n))
}

/// Solves with cap `ell`, reporting the exact minimum when it is too small.
fn solve_fixed(catalog: &RuleCatalog, cfg: &ExtractionConfig, ell: usize) -> Result<PartitionSolution> {
    let p = build_partition_problem(catalog, cfg.lambda, ell)?;
    let sol = solve_exact(&p, cfg.budget, None)?;
    match sol.status {
        SolveStatus::Infeasible => Err(Error::InfeasibleCardinality {
            ell,
            minimum: min_rules_bound(&p, cfg.budget)?,
        }),
        SolveStatus::BudgetExhausted => Err(Error::NoIncumbent),
        _ => Ok(sol),
    }
}

/// Bounds on the cap from the configuration, exact programs or heuristics.
fn ell_bounds(
    ens: &Ensemble,
    train: &Dataset,
    catalog: &RuleCatalog,
    cfg: &ExtractionConfig,
) -> Result<(usize, usize)> {
    let EllSelection::Validate { lo, hi, exact_bounds } = cfg.ell else {
        unreachable!("bounds only apply to validated caps");
    };
    let p = build_partition_problem(catalog, cfg.lambda, 1)?;
    let exact_min = min_rules_bound(&p, cfg.budget)?;
    let lo = match lo {
        Some(l) => l,
        None if exact_bounds => exact_min,
        None => heuristic_lower_bound(ens).max(exact_min),
    };
    let hi = match hi {
        Some(h) => h,
        None if exact_bounds => max_rules_bound(&p, cfg.budget)?,
        None => heuristic_upper_bound(train, cfg.upper_bound_alpha)?,
    };
    Ok((lo, hi.max(lo)))
}

/// Sweeps `lo..=hi` on `fit`, returning per cap the solution and its loss on
/// `val` (squared-error sum or error count). Caps below the minimum of this
/// catalog yield `None`.
fn sweep_losses(
    ens: &Ensemble,
    fit: &Dataset,
    val: &Dataset,
    cfg: &ExtractionConfig,
    lo: usize,
    hi: usize,
) -> Result<(RuleCatalog, Vec<Option<(PartitionSolution, f64)>>)> {
    let (catalog, _) = filtered_catalog(ens, fit, cfg)?;
    let p = build_partition_problem(&catalog, cfg.lambda, lo)?;
    let (start, sols) = match sweep_problem(&p, lo, hi, cfg.budget) {
        Ok(s) => (lo, s),
        Err(Error::InfeasibleCardinality { minimum, .. }) if minimum <= hi => {
            (minimum, sweep_problem(&p, minimum, hi, cfg.budget)?)
        }
        Err(Error::InfeasibleCardinality { minimum, .. }) => {
            return Err(Error::InfeasibleCardinality { ell: hi, minimum })
        }
        Err(e) => return Err(e),
    };
    let mut out: Vec<Option<(PartitionSolution, f64)>> = vec![None; start - lo];
    for (k, sol) in sols.into_iter().enumerate() {
        if !sol.is_feasible() {
            out.push(None);
            continue;
        }
        let model = build_model(ens, fit, &catalog, &sol, cfg.lambda, start + k);
        let loss = total_loss(&model, val);
        out.push(Some((sol, loss)));
    }
    Ok((catalog, out))
}

fn total_loss(model: &RuleListModel, ds: &Dataset) -> f64 {
    (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let p = predict_rule_list(model, ds.point(i));
            match (p, ds.target(i)) {
                (Prediction::Class(a), Prediction::Class(b)) => f64::from(u8::from(a != b)),
                (a, b) => (a.as_f64() - b.as_f64()).powi(2),
            }
        })
        .sum()
}

/// Index of the smallest loss, earliest on ties.
fn argmin_loss(losses: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, l) in losses.iter().enumerate() {
        if let Some(l) = l {
            if best.is_none_or(|b| *l < losses[b].expect("set when chosen")) {
                best = Some(k);
            }
        }
    }
    best
}

/// Sweeps the cap on `train` and keeps the candidate with the lowest loss
/// on `val`.
pub fn validate_select(
    ens: &Ensemble,
    train: &Dataset,
    val: &Dataset,
    cfg: &ExtractionConfig,
) -> Result<RuleListModel> {
    cfg.validate()?;
    if val.is_empty() {
        return Err(Error::InvalidDataset("empty validation set".into()));
    }
    let (lo, hi) = match cfg.ell {
        EllSelection::Fixed(l) => (l, l),
        EllSelection::Validate { .. } => {
            let (catalog, _) = filtered_catalog(ens, train, cfg)?;
            ell_bounds(ens, train, &catalog, cfg)?
        }
    };
    let (catalog, cands) = sweep_losses(ens, train, val, cfg, lo, hi)?;
    let losses: Vec<Option<f64>> = cands.iter().map(|c| c.as_ref().map(|(_, l)| *l)).collect();
    let k = argmin_loss(&losses).ok_or(Error::NoIncumbent)?;
    let (sol, _) = cands[k].as_ref().expect("argmin is feasible");
    Ok(build_model(ens, train, &catalog, sol, cfg.lambda, lo + k))
}

/// Point indices per class, or all points for regression.
fn strata(ds: &Dataset) -> Vec<Vec<usize>> {
    match ds.targets() {
        Targets::Classes { ids, names } => {
            let mut g = vec![Vec::new(); names.len()];
            for (i, &c) in ids.iter().enumerate() {
                g[c].push(i);
            }
            g
        }
        Targets::Values(v) => vec![(0..v.len()).collect()],
    }
}

/// Stratified (classification) or plain random split into `k` folds.
pub fn fold_assignment(ds: &Dataset, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0usize; ds.len()];
    let mut offset = 0;
    for mut g in strata(ds) {
        g.shuffle(&mut rng);
        for (pos, i) in g.into_iter().enumerate() {
            fold[i] = (pos + offset) % k;
        }
        offset += 1;
    }
    fold
}

/// Held-out split: `(fit, val)` index lists, stratified by class.
pub fn holdout_split(ds: &Dataset, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut fit, mut val) = (Vec::new(), Vec::new());
    for mut g in strata(ds) {
        g.shuffle(&mut rng);
        let n_val = if g.len() >= 2 {
            ((g.len() as f64 * val_fraction).round() as usize).clamp(1, g.len() - 1)
        } else {
            0
        };
        val.extend_from_slice(&g[..n_val]);
        fit.extend_from_slice(&g[n_val..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

pub fn extract(ens: &Ensemble, train: &Dataset, cfg: &ExtractionConfig) -> Result<RuleListModel> {
    extract_with_report(ens, train, cfg).map(|(m, _)| m)
}

/// Runs the full extraction. With a validated cap, the cap is chosen on
/// held-out splits of `train` and the final list is solved on all of it.
pub fn extract_with_report(
    ens: &Ensemble,
    train: &Dataset,
    cfg: &ExtractionConfig,
) -> Result<(RuleListModel, ExtractionReport)> {
    cfg.validate()?;
    if train.task() != ens.task {
        return Err(Error::TaskMismatch {
            expected: ens.task.name(),
            found: train.task().name(),
        });
    }
    let t0 = Instant::now();
    let (catalog, n_candidates) = filtered_catalog(ens, train, cfg)?;
    let preprocess_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();

    let (ell, ell_range, validation_losses) = match cfg.ell {
        EllSelection::Fixed(l) => (l, None, Vec::new()),
        EllSelection::Validate { .. } => {
            let (lo, hi) = ell_bounds(ens, train, &catalog, cfg)?;
            log::info!("validating rule caps {lo}..={hi}");
            let splits: Vec<(Vec<usize>, Vec<usize>)> = match cfg.cv_folds {
                Some(k) => {
                    let fold = fold_assignment(train, k, cfg.seed);
                    (0..k)
                        .map(|f| {
                            let fit = (0..train.len()).filter(|&i| fold[i] != f).collect();
                            let val = (0..train.len()).filter(|&i| fold[i] == f).collect();
                            (fit, val)
                        })
                        .collect()
                }
                None => vec![holdout_split(train, cfg.validation_fraction, cfg.seed)],
            };
            let per_split = splits
                .par_iter()
                .filter(|(fit, val)| !fit.is_empty() && !val.is_empty())
                .map(|(fit, val)| {
                    let fit = train.subset(fit)?;
                    let val = train.subset(val)?;
                    match sweep_losses(ens, &fit, &val, cfg, lo, hi) {
                        Ok((_, c)) => Ok(c.into_iter().map(|o| o.map(|(_, l)| l)).collect()),
                        Err(Error::InfeasibleCardinality { .. }) => Ok(vec![None; hi - lo + 1]),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<Vec<Vec<Option<f64>>>>>()?;
            let totals: Vec<Option<f64>> = (0..=hi - lo)
                .map(|k| per_split.iter().map(|v| v[k]).sum::<Option<f64>>())
                .collect();
            let k = argmin_loss(&totals).unwrap_or(0);
            let losses = totals.iter().enumerate().map(|(k, l)| (lo + k, *l)).collect();
            (lo + k, Some((lo, hi)), losses)
        }
    };

    let sol = match solve_fixed(&catalog, cfg, ell) {
        Err(Error::InfeasibleCardinality { minimum, .. }) if ell_range.is_some() => {
            log::warn!("cap {ell} infeasible on the full training set; raising it to {minimum}");
            solve_fixed(&catalog, cfg, minimum)?
        }
        other => other?,
    };
    let model = build_model(ens, train, &catalog, &sol, cfg.lambda, ell.max(sol.selected.len()));
    let report = ExtractionReport {
        preprocess_seconds,
        solver_seconds: t1.elapsed().as_secs_f64(),
        n_candidate_rules: n_candidates,
        n_filtered_rules: catalog.len(),
        uncovered_points: catalog.uncovered_points.len(),
        ell_range,
        validation_losses,
        ell_used: model.ell_used,
        objective: sol.objective,
        status: sol.status,
        n_rules: model.rules.len(),
    };
    Ok((model, report))
}

/// Accuracy or MSE plus how often each inference branch fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub task: Task,
    pub n_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unique_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multiple_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback_fraction: Option<f64>,
}

fn score(task: Task, preds: &[Prediction], ds: &Dataset) -> Metrics {
    let n = ds.len();
    let mut m = Metrics {
        task,
        n_points: n,
        accuracy: None,
        mse: None,
        unique_fraction: None,
        multiple_fraction: None,
        fallback_fraction: None,
    };
    let nf = n.max(1) as f64;
    match task {
        Task::Classification => {
            let hits = (0..n).filter(|&i| preds[i] == ds.target(i)).count();
            m.accuracy = Some(hits as f64 / nf);
        }
        Task::Regression => {
            let sse: f64 = (0..n)
                .map(|i| (preds[i].as_f64() - ds.target(i).as_f64()).powi(2))
                .sum();
            m.mse = Some(sse / nf);
        }
    }
    m
}

fn check_compatible(task: Task, width: usize, ds: &Dataset) -> Result<()> {
    if ds.task() != task {
        return Err(Error::TaskMismatch {
            expected: task.name(),
            found: ds.task().name(),
        });
    }
    if ds.width() != width {
        return Err(Error::InvalidDataset(format!(
            "points have {} values, model expects {width}",
            ds.width()
        )));
    }
    Ok(())
}

pub fn evaluate(model: &RuleListModel, ds: &Dataset) -> Result<Metrics> {
    check_compatible(model.task, model.width, ds)?;
    let detail: Vec<(Prediction, Resolution)> = (0..ds.len())
        .into_par_iter()
        .map(|i| model.predict_detail(ds.point(i)))
        .collect();
    let preds: Vec<Prediction> = detail.iter().map(|d| d.0).collect();
    let mut m = score(model.task, &preds, ds);
    let nf = ds.len().max(1) as f64;
    let frac = |r: Resolution| detail.iter().filter(|d| d.1 == r).count() as f64 / nf;
    m.unique_fraction = Some(frac(Resolution::Unique));
    m.multiple_fraction = Some(frac(Resolution::Multiple));
    m.fallback_fraction = Some(frac(Resolution::Fallback));
    Ok(m)
}

pub fn evaluate_ensemble(ens: &Ensemble, ds: &Dataset) -> Result<Metrics> {
    check_compatible(ens.task, ens.width, ds)?;
    let preds = ens.predict_dataset(ds)?;
    Ok(score(ens.task, &preds, ds))
}

#[cfg(test)]
mod tests;
