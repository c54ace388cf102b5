//! Cardinality-constrained set partitioning: building the integer program
//! from a rule catalog and solving it exactly.

mod bnb;
mod simplex;

use std::collections::HashMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::forest::{train_cart, CartParams, MaxFeatures};
use crate::model::{Dataset, Ensemble};
use crate::preprocess::RuleCatalog;
use crate::{Error, Result};

/// Node and wall-clock limits for a single solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_nodes: usize,
    pub max_seconds: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_nodes: 1_000_000,
            max_seconds: 60.0,
        }
    }
}

impl Budget {
    fn validate(&self) -> Result<()> {
        if self.max_nodes == 0 || !(self.max_seconds > 0.0) {
            return Err(Error::InvalidParameter(
                "solver budget must allow at least one node and a positive time".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    FeasibleBudgetExhausted,
    Infeasible,
    /// The budget ran out before any feasible partition was found.
    BudgetExhausted,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleBudgetExhausted => "feasible_budget_exhausted",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::BudgetExhausted => "budget_exhausted",
        }
    }
}

/// One instance of the partition program over the constrained points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionProblem {
    /// Training point behind each constraint row.
    pub points: Vec<usize>,
    /// Rows covered by each column (indices into `points`).
    pub columns: Vec<Vec<usize>>,
    pub costs: Vec<f64>,
    pub ell: usize,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionSolution {
    /// Selected column indices, ascending.
    pub selected: Vec<usize>,
    pub objective: f64,
    pub best_bound: f64,
    pub status: SolveStatus,
    pub node_count: usize,
    pub wall_seconds: f64,
}

impl PartitionSolution {
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::FeasibleBudgetExhausted)
    }
}

impl PartitionProblem {
    /// A bare instance over rows `0..n_rows`.
    pub fn from_columns(n_rows: usize, columns: Vec<Vec<usize>>, costs: Vec<f64>, ell: usize) -> Result<Self> {
        let p = Self {
            points: (0..n_rows).collect(),
            columns,
            costs,
            ell,
            lambda: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_rows(&self) -> usize {
        self.points.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        if self.columns.len() != self.costs.len() {
            return Err(Error::InvalidParameter(format!(
                "{} columns but {} costs",
                self.columns.len(),
                self.costs.len()
            )));
        }
        if self.ell == 0 {
            return Err(Error::InvalidParameter("ell must be at least 1".into()));
        }
        if let Some(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidParameter(format!("lambda {l} outside [0, 1]")));
            }
        }
        if self.costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("objective coefficients must be finite".into()));
        }
        let mut hit = vec![false; self.n_rows()];
        for col in &self.columns {
            for &r in col {
                let slot = hit
                    .get_mut(r)
                    .ok_or_else(|| Error::InvalidParameter(format!("row {r} out of range")))?;
                *slot = true;
            }
        }
        if let Some(r) = hit.iter().position(|h| !h) {
            return Err(Error::InvalidParameter(format!(
                "point {} is constrained but no column covers it",
                self.points[r]
            )));
        }
        Ok(())
    }

    /// Objective of `selected` if it is a feasible partition.
    pub fn value_of(&self, selected: &[usize]) -> Option<f64> {
        if selected.len() > self.ell {
            return None;
        }
        partition_value(self.n_rows(), &self.columns, &self.costs, selected)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }
}

fn partition_value(n_rows: usize, columns: &[Vec<usize>], costs: &[f64], selected: &[usize]) -> Option<f64> {
    let mut hits = vec![0u32; n_rows];
    let mut seen = vec![false; columns.len()];
    for &j in selected {
        if std::mem::replace(seen.get_mut(j)?, true) {
            return None;
        }
        for &r in &columns[j] {
            hits[r] += 1;
        }
    }
    hits.iter()
        .all(|&h| h == 1)
        .then(|| selected.iter().map(|&j| costs[j]).sum())
}

/// Builds the program with `c_j = λ φ_j − (1 − λ) ξ_j`, one row per point
/// that some rule covers.
pub fn build_partition_problem(catalog: &RuleCatalog, lambda: f64, ell: usize) -> Result<PartitionProblem> {
    if catalog.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    let mut row_of = vec![None; catalog.n_points];
    for &p in &catalog.uncovered_points {
        row_of[p] = Some(usize::MAX);
    }
    let mut points = Vec::new();
    for (p, slot) in row_of.iter_mut().enumerate() {
        if slot.is_none() {
            *slot = Some(points.len());
            points.push(p);
        }
    }
    let columns = catalog
        .columns
        .iter()
        .map(|col| col.iter().map(|&p| row_of[p].expect("assigned above")).collect())
        .collect();
    let costs = catalog
        .phi
        .iter()
        .zip(&catalog.xi)
        .map(|(phi, xi)| lambda * phi - (1.0 - lambda) * xi)
        .collect();
    let p = PartitionProblem {
        points,
        columns,
        costs,
        ell,
        lambda: Some(lambda),
    };
    p.validate()?;
    Ok(p)
}

/// Merges identical columns (keeping the best cost) and identical rows.
/// Returns the instance and, per reduced column, the original index.
fn reduce(
    n_rows: usize,
    columns: &[Vec<usize>],
    costs: &[f64],
    cap: Option<usize>,
    integral: bool,
) -> (bnb::Instance, Vec<usize>, Vec<usize>) {
    let mut by_key: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut keep: Vec<usize> = Vec::new();
    let mut rep: Vec<usize> = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let mut key = col.clone();
        key.sort_unstable();
        key.dedup();
        if key.is_empty() {
            // Empty columns never conflict, so copies are not redundant.
            rep.push(keep.len());
            keep.push(j);
            continue;
        }
        match by_key.get(&key) {
            Some(&k) if costs[keep[k]] >= costs[j] => {}
            Some(&k) => keep[k] = j,
            None => {
                by_key.insert(key, keep.len());
                keep.push(j);
            }
        }
        rep.push(usize::MAX);
    }
    // Representative of every original column, for warm-start mapping.
    for (j, col) in columns.iter().enumerate() {
        if rep[j] == usize::MAX {
            let mut key = col.clone();
            key.sort_unstable();
            key.dedup();
            rep[j] = by_key[&key];
        }
    }

    let mut signature = vec![Vec::new(); n_rows];
    for (k, &j) in keep.iter().enumerate() {
        for &r in &columns[j] {
            if signature[r].last() != Some(&k) {
                signature[r].push(k);
            }
        }
    }
    let mut group_of_sig: HashMap<&[usize], usize> = HashMap::new();
    let mut group = vec![0usize; n_rows];
    for r in 0..n_rows {
        let next = group_of_sig.len();
        group[r] = *group_of_sig.entry(&signature[r]).or_insert(next);
    }
    let n_groups = group_of_sig.len();
    let cols = keep
        .iter()
        .map(|&j| {
            let mut g: Vec<usize> = columns[j].iter().map(|&r| group[r]).collect();
            g.sort_unstable();
            g.dedup();
            g
        })
        .collect();
    let inst = bnb::Instance {
        n_rows: n_groups,
        cols,
        costs: keep.iter().map(|&j| costs[j]).collect(),
        cap,
        integral,
    };
    (inst, keep, rep)
}

fn run(
    n_rows: usize,
    columns: &[Vec<usize>],
    costs: &[f64],
    cap: Option<usize>,
    integral: bool,
    budget: Budget,
    warm: Option<&[usize]>,
) -> PartitionSolution {
    let start = Instant::now();
    let (inst, keep, rep) = reduce(n_rows, columns, costs, cap, integral);
    let warm = warm.map(|w| {
        let mut m: Vec<usize> = w.iter().map(|&j| rep[j]).collect();
        m.sort_unstable();
        m
    });
    let out = bnb::solve(&inst, budget, warm);
    let selected: Vec<usize> = match &out.selected {
        Some(sel) => {
            let mut s: Vec<usize> = sel.iter().map(|&k| keep[k]).collect();
            s.sort_unstable();
            s
        }
        None => Vec::new(),
    };
    if out.selected.is_some() {
        assert!(
            partition_value(n_rows, columns, costs, &selected).is_some() && cap.is_none_or(|c| selected.len() <= c),
            "solver returned a selection that is not a feasible partition"
        );
    }
    PartitionSolution {
        selected,
        objective: out.objective,
        best_bound: out.best_bound,
        status: out.status,
        node_count: out.nodes,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Solves the partition program to optimality within `budget`, optionally
/// seeded with a feasible incumbent.
pub fn solve_exact(p: &PartitionProblem, budget: Budget, warm: Option<&[usize]>) -> Result<PartitionSolution> {
    budget.validate()?;
    p.validate()?;
    if let Some(w) = warm {
        if p.value_of(w).is_none() {
            return Err(Error::InvalidWarmStart(format!(
                "{} columns do not form a partition within the cap of {}",
                w.len(),
                p.ell
            )));
        }
    }
    Ok(run(p.n_rows(), &p.columns, &p.costs, Some(p.ell), false, budget, warm))
}

fn count_bound(p: &PartitionProblem, sign: f64, budget: Budget) -> Result<usize> {
    budget.validate()?;
    let nonempty: Vec<usize> = (0..p.columns.len()).filter(|&j| !p.columns[j].is_empty()).collect();
    let columns: Vec<Vec<usize>> = nonempty.iter().map(|&j| p.columns[j].clone()).collect();
    let costs = vec![sign; columns.len()];
    let sol = run(p.n_rows(), &columns, &costs, None, true, budget, None);
    match sol.status {
        SolveStatus::Optimal => Ok(sol.selected.len()),
        SolveStatus::FeasibleBudgetExhausted => {
            log::warn!("rule-count bound not certified within the budget; using the incumbent");
            Ok(sol.selected.len())
        }
        SolveStatus::Infeasible | SolveStatus::BudgetExhausted => Err(Error::InfeasibleCover),
    }
}

/// Fewest rules in any exact partition (costs and cap are ignored).
pub fn min_rules_bound(p: &PartitionProblem, budget: Budget) -> Result<usize> {
    count_bound(p, -1.0, budget)
}

/// Most rules in any exact partition, counting only columns that cover
/// at least one point.
pub fn max_rules_bound(p: &PartitionProblem, budget: Budget) -> Result<usize> {
    count_bound(p, 1.0, budget)
}

/// Leaf count of the smallest tree.
pub fn heuristic_lower_bound(ens: &Ensemble) -> usize {
    ens.trees.iter().map(|t| t.n_leaves()).min().unwrap_or(1)
}

/// Leaf count of an unbounded-depth CART on `ds` pruned at `alpha`.
pub fn heuristic_upper_bound(ds: &Dataset, alpha: f64) -> Result<usize> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} must be non-negative")));
    }
    let params = CartParams {
        max_depth: usize::MAX,
        min_samples_leaf: 1,
        n_trees: 1,
        max_features: MaxFeatures::All,
        seed: 0,
        cost_complexity_alpha: alpha,
        bootstrap: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(train_cart(ds, &params, &mut rng)?.n_leaves())
}

/// Solves for every cap in `lo..=hi`, seeding each solve with the previous
/// incumbent.
pub fn sweep_ell(
    catalog: &RuleCatalog,
    lambda: f64,
    lo: usize,
    hi: usize,
    budget: Budget,
) -> Result<Vec<PartitionSolution>> {
    let p = build_partition_problem(catalog, lambda, lo.max(1))?;
    sweep_problem(&p, lo, hi, budget)
}

/// [`sweep_ell`] over an already built problem; its own `ell` is ignored.
pub fn sweep_problem(p: &PartitionProblem, lo: usize, hi: usize, budget: Budget) -> Result<Vec<PartitionSolution>> {
    if lo == 0 || lo > hi {
        return Err(Error::InvalidParameter(format!("invalid ell range {lo}..={hi}")));
    }
    let mut p = p.clone();
    let mut out = Vec::with_capacity(hi - lo + 1);
    let mut warm: Option<Vec<usize>> = None;
    for ell in lo..=hi {
        p.ell = ell;
        let sol = solve_exact(&p, budget, warm.as_deref())?;
        if ell == lo && sol.status == SolveStatus::Infeasible {
            let minimum = min_rules_bound(&p, budget)?;
            return Err(Error::InfeasibleCardinality { ell: lo, minimum });
        }
        if sol.is_feasible() {
            warm = Some(sol.selected.clone());
        }
        out.push(sol);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
