//! Per-rule stability and loss, and the point-to-rule assignment matrix.
//!
//! Stability of a rule is the weighted sum of its Sørensen–Dice overlap with
//! every other rule of the ensemble, computed on sign-stripped splittings.
//! Loss counts misclassified covered points (classification) or the
//! covered-point mean squared error (regression). Both vectors are min-max
//! scaled before they enter the partition objective.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{enumerate_rules, Dataset, Ensemble, Features, Prediction, Rule, SplittingSet, Targets, Task};

/// `2|a ∩ b| / (|a| + |b|)`.
pub fn dice_index(a: &SplittingSet, b: &SplittingSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("Dice index of an empty splitting set".into()));
    }
    Ok(dice_unchecked(a, b))
}

#[inline]
fn dice_unchecked(a: &SplittingSet, b: &SplittingSet) -> f64 {
    2.0 * a.intersection_len(b) as f64 / (a.len() + b.len()) as f64
}

/// `phi_j = sum over l != j of |w_l| * dice(S_j, S_l)`, same-tree pairs
/// included.
pub fn compute_stability(sets: &[SplittingSet], weights: &[f64]) -> Vec<f64> {
    assert_eq!(sets.len(), weights.len());
    (0..sets.len())
        .into_par_iter()
        .map(|j| {
            let sj = &sets[j];
            if sj.is_empty() {
                return 0.0;
            }
            sets.iter()
                .zip(weights)
                .enumerate()
                .filter(|(l, (sl, _))| *l != j && !sl.is_empty())
                .map(|(_, (sl, w))| w.abs() * dice_unchecked(sj, sl))
                .sum()
        })
        .collect()
}

/// Loss of each column and, for regression, the covered-point mean that
/// replaces the stored leaf value. Empty columns get zero loss.
pub fn compute_loss(columns: &[Vec<usize>], ds: &Dataset) -> (Vec<f64>, Vec<Option<f64>>) {
    match ds.targets() {
        Targets::Classes { ids, names } => {
            let xi = columns
                .iter()
                .map(|col| {
                    let mut counts = vec![0usize; names.len()];
                    for &i in col {
                        counts[ids[i]] += 1;
                    }
                    let best = counts.iter().copied().max().unwrap_or(0);
                    (col.len() - best) as f64
                })
                .collect();
            (xi, vec![None; columns.len()])
        }
        Targets::Values(y) => columns
            .iter()
            .map(|col| {
                if col.is_empty() {
                    return (0.0, None);
                }
                let n = col.len() as f64;
                let mean = col.iter().map(|&i| y[i]).sum::<f64>() / n;
                let mse = col.iter().map(|&i| (y[i] - mean).powi(2)).sum::<f64>() / n;
                (mse, Some(mean))
            })
            .unzip(),
    }
}

/// Min-max scaling to `[0, 1]`; a constant vector maps to zeros.
pub fn normalize(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|&v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}

/// Column-sparse assignment matrix: for each rule, the sorted indices of the
/// points of `ds` that satisfy it.
pub fn assignment_matrix(rules: &[Rule], ens: &Ensemble, ds: &Dataset) -> Result<Vec<Vec<usize>>> {
    let per_point: Vec<Vec<usize>> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let f = ens.features(ds.point(i))?;
            Ok(satisfied_rules(rules, &f))
        })
        .collect::<Result<_>>()?;
    let mut columns = vec![Vec::new(); rules.len()];
    for (i, hits) in per_point.into_iter().enumerate() {
        for j in hits {
            columns[j].push(i);
        }
    }
    Ok(columns)
}

fn satisfied_rules(rules: &[Rule], f: &Features<'_>) -> Vec<usize> {
    rules
        .iter()
        .enumerate()
        .filter(|(_, r)| r.satisfied(f))
        .map(|(j, _)| j)
        .collect()
}

/// Ensemble rules with everything the partition problem needs.
#[derive(Debug, Clone, Serialize)]
pub struct RuleCatalog {
    pub task: Task,
    pub n_points: usize,
    pub n_trees: usize,
    /// Rules with recomputed `coverage` (and regression predictions).
    pub rules: Vec<Rule>,
    #[serde(skip)]
    pub splitting_sets: Vec<SplittingSet>,
    pub raw_phi: Vec<f64>,
    pub raw_xi: Vec<f64>,
    pub phi: Vec<f64>,
    pub xi: Vec<f64>,
    /// Covered training points per rule.
    pub columns: Vec<Vec<usize>>,
    /// Points with no candidate rule; their constraints are dropped.
    pub uncovered_points: Vec<usize>,
    /// Leaf count of every source tree.
    pub tree_sizes: Vec<usize>,
}

impl RuleCatalog {
    /// Enumerates every rule of `ens` and preprocesses it against the
    /// training set `ds`.
    pub fn build(ens: &Ensemble, ds: &Dataset) -> Result<Self> {
        if ds.task() != ens.task {
            return Err(Error::TaskMismatch {
                expected: ens.task.name(),
                found: ds.task().name(),
            });
        }
        let mut rules = enumerate_rules(ens);
        if rules.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        let columns = assignment_matrix(&rules, ens, ds)?;
        let splitting_sets: Vec<SplittingSet> = rules.iter().map(Rule::splitting_set).collect();
        let weights: Vec<f64> = rules.iter().map(|r| r.weight).collect();
        let raw_phi = compute_stability(&splitting_sets, &weights);
        let (raw_xi, means) = compute_loss(&columns, ds);
        for ((rule, col), mean) in rules.iter_mut().zip(&columns).zip(means) {
            rule.coverage = col.len();
            if let Some(m) = mean {
                rule.prediction = Prediction::Value(m);
            }
        }
        let uncovered_points = uncovered(&columns, ds.len());
        Ok(Self {
            task: ens.task,
            n_points: ds.len(),
            n_trees: ens.trees.len(),
            phi: normalize(&raw_phi),
            xi: normalize(&raw_xi),
            rules,
            splitting_sets,
            raw_phi,
            raw_xi,
            columns,
            uncovered_points,
            tree_sizes: ens.trees.iter().map(|t| t.rules.len()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Dense 0/1 view, `N x L`.
    pub fn assignment_dense(&self) -> Vec<Vec<u8>> {
        let mut a = vec![vec![0u8; self.len()]; self.n_points];
        for (j, col) in self.columns.iter().enumerate() {
            for &i in col {
                a[i][j] = 1;
            }
        }
        a
    }

    fn select(&self, keep: &[usize]) -> Self {
        let pick = |v: &[f64]| keep.iter().map(|&j| v[j]).collect::<Vec<_>>();
        let columns: Vec<Vec<usize>> = keep.iter().map(|&j| self.columns[j].clone()).collect();
        Self {
            task: self.task,
            n_points: self.n_points,
            n_trees: self.n_trees,
            rules: keep.iter().map(|&j| self.rules[j].clone()).collect(),
            splitting_sets: keep.iter().map(|&j| self.splitting_sets[j].clone()).collect(),
            raw_phi: pick(&self.raw_phi),
            raw_xi: pick(&self.raw_xi),
            phi: pick(&self.phi),
            xi: pick(&self.xi),
            uncovered_points: uncovered(&columns, self.n_points),
            columns,
            tree_sizes: self.tree_sizes.clone(),
        }
    }

    /// Drops rules covering fewer than `ceil(fraction * N)` points (and
    /// always those covering none).
    ///
    /// When no source tree keeps all of its rules, a point may lose every
    /// candidate. With `repair`, dropped rules are restored in descending
    /// coverage order whenever they cover such a point; points still left
    /// without a candidate are listed in `uncovered_points`.
    pub fn filter_min_coverage(&self, fraction: f64, repair: bool) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidParameter(format!(
                "minimum coverage fraction {fraction} outside [0, 1)"
            )));
        }
        let min_cov = ((fraction * self.n_points as f64).ceil() as usize).max(1);
        let mut kept: Vec<bool> = self.rules.iter().map(|r| r.coverage >= min_cov).collect();

        let mut per_tree: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for (r, &k) in self.rules.iter().zip(&kept) {
            let e = per_tree.entry(r.tree_id).or_default();
            e.0 += 1;
            e.1 += k as usize;
        }
        let intact_tree = per_tree.values().any(|&(total, kept)| total == kept);

        if repair && !intact_tree {
            let mut candidates = vec![0usize; self.n_points];
            for (col, _) in self.columns.iter().zip(&kept).filter(|(_, &k)| k) {
                for &i in col {
                    candidates[i] += 1;
                }
            }
            let mut dropped: Vec<usize> = (0..self.len())
                .filter(|&j| !kept[j] && self.rules[j].coverage > 0)
                .collect();
            // Stable sort keeps catalog order among equal coverages.
            dropped.sort_by(|&a, &b| self.rules[b].coverage.cmp(&self.rules[a].coverage));
            for j in dropped {
                if self.columns[j].iter().any(|&i| candidates[i] == 0) {
                    kept[j] = true;
                    for &i in &self.columns[j] {
                        candidates[i] += 1;
                    }
                }
            }
        }
        let keep: Vec<usize> = (0..self.len()).filter(|&j| kept[j]).collect();
        Ok(self.select(&keep))
    }
}

fn uncovered(columns: &[Vec<usize>], n_points: usize) -> Vec<usize> {
    let mut covered = vec![false; n_points];
    for col in columns {
        for &i in col {
            covered[i] = true;
        }
    }
    (0..n_points).filter(|&i| !covered[i]).collect()
}
