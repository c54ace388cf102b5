//! Datasets, conditions, rules, trees and ensembles.
//!
//! A tree is stored as the set of its root-to-leaf rules and an ensemble as
//! the disjoint union of its trees. Every rule keeps the ordered list of
//! signed threshold tests along its path, so the branch structure of a tree
//! can be recovered from its rules alone (see [`TreeLayout`]).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::temporal::{subsequence_distance, Shapelet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
        }
    }
}

/// Whether the columns of a dataset are independent features or a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Tabular,
    Temporal,
}

/// A class index (into the ensemble's class list) or a real response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Prediction {
    Class(usize),
    Value(f64),
}

impl Prediction {
    pub fn as_f64(self) -> f64 {
        match self {
            Prediction::Class(c) => c as f64,
            Prediction::Value(v) => v,
        }
    }

    pub fn class(self) -> Option<usize> {
        match self {
            Prediction::Class(c) => Some(c),
            Prediction::Value(_) => None,
        }
    }

    pub fn from_f64(task: Task, value: f64) -> Result<Self> {
        match task {
            Task::Regression => Ok(Prediction::Value(value)),
            Task::Classification => {
                if value >= 0.0 && value.fract() == 0.0 && value.is_finite() {
                    Ok(Prediction::Class(value as usize))
                } else {
                    Err(Error::InvalidModel(format!(
                        "classification prediction {value} is not a class index"
                    )))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    /// Class ids in `0..names.len()`; `names` keeps the original labels.
    Classes {
        ids: Vec<usize>,
        names: Vec<String>,
    },
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { ids, .. } => ids.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Targets::Classes { .. } => Task::Classification,
            Targets::Values(_) => Task::Regression,
        }
    }
}

/// N points of P values each, with one target per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    values: Vec<f64>,
    width: usize,
    targets: Targets,
    kind: DataKind,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, targets: Targets, kind: DataKind) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidDataset("dataset has no points".into()));
        }
        if rows.len() != targets.len() {
            return Err(Error::InvalidDataset(format!(
                "{} points but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let width = rows[0].len();
        if width == 0 {
            return Err(Error::InvalidDataset("points have no values".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidDataset(format!(
                    "point {i} has {} values, expected {width}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!("point {i} contains {v}")));
            }
            values.extend_from_slice(row);
        }
        match &targets {
            Targets::Classes { ids, names } => {
                if names.is_empty() {
                    return Err(Error::InvalidDataset("no class labels".into()));
                }
                if let Some(c) = ids.iter().find(|&&c| c >= names.len()) {
                    return Err(Error::InvalidDataset(format!(
                        "class id {c} outside the {} declared labels",
                        names.len()
                    )));
                }
            }
            Targets::Values(v) => {
                if v.iter().any(|y| !y.is_finite()) {
                    return Err(Error::InvalidDataset("non-finite regression target".into()));
                }
            }
        }
        Ok(Self {
            values,
            width,
            targets,
            kind,
            feature_names: None,
        })
    }

    /// Classification dataset with labels `0..n_classes` named by their index.
    pub fn classification(rows: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize, kind: DataKind) -> Result<Self> {
        let names = (0..n_classes).map(|c| c.to_string()).collect();
        Self::new(rows, Targets::Classes { ids: labels, names }, kind)
    }

    pub fn regression(rows: Vec<Vec<f64>>, targets: Vec<f64>, kind: DataKind) -> Result<Self> {
        Self::new(rows, Targets::Values(targets), kind)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.width {
            return Err(Error::InvalidDataset(format!(
                "{} feature names for {} features",
                names.len(),
                self.width
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of features, or the series length.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }

    pub fn task(&self) -> Task {
        self.targets.task()
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.width)
    }

    pub fn target(&self, i: usize) -> Prediction {
        match &self.targets {
            Targets::Classes { ids, .. } => Prediction::Class(ids[i]),
            Targets::Values(v) => Prediction::Value(v[i]),
        }
    }

    pub fn n_classes(&self) -> usize {
        match &self.targets {
            Targets::Classes { names, .. } => names.len(),
            Targets::Values(_) => 0,
        }
    }

    pub fn class_names(&self) -> &[String] {
        match &self.targets {
            Targets::Classes { names, .. } => names,
            Targets::Values(_) => &[],
        }
    }

    pub fn class_ids(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { ids, .. } => Some(ids),
            Targets::Values(_) => None,
        }
    }

    pub fn values(&self) -> Option<&[f64]> {
        match &self.targets {
            Targets::Values(v) => Some(v),
            Targets::Classes { .. } => None,
        }
    }

    /// Copy of the points at `indices` (repeats allowed, as in a bootstrap).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let rows = indices.iter().map(|&i| self.point(i).to_vec()).collect();
        let targets = match &self.targets {
            Targets::Classes { ids, names } => Targets::Classes {
                ids: indices.iter().map(|&i| ids[i]).collect(),
                names: names.clone(),
            },
            Targets::Values(v) => Targets::Values(indices.iter().map(|&i| v[i]).collect()),
        };
        let mut out = Dataset::new(rows, targets, self.kind)?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }
}

/// Which scalar a condition reads from a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureSelector {
    /// The `p`-th coordinate of a tabular point.
    Axis(usize),
    /// Subsequence distance to shapelet `id` of the ensemble pool.
    Shapelet(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Le,
    Gt,
}

impl Sign {
    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Le => "<=",
            Sign::Gt => ">",
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Le => Sign::Gt,
            Sign::Gt => Sign::Le,
        }
    }
}

/// A sign-stripped condition, compared by exact threshold bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Splitting {
    pub selector: FeatureSelector,
    pub threshold_bits: u64,
}

impl Splitting {
    pub fn threshold(&self) -> f64 {
        f64::from_bits(self.threshold_bits)
    }
}

/// One branch-node test together with the side of the branch taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub selector: FeatureSelector,
    pub threshold: f64,
    pub sign: Sign,
}

impl Condition {
    pub fn new(selector: FeatureSelector, threshold: f64, sign: Sign) -> Self {
        Self {
            selector,
            threshold,
            sign,
        }
    }

    /// A test every finite point passes; used as the single condition of a
    /// leaf-only tree.
    pub fn vacuous() -> Self {
        Self::new(FeatureSelector::Axis(0), f64::MAX, Sign::Le)
    }

    pub fn is_vacuous(&self) -> bool {
        self.sign == Sign::Le && self.threshold == f64::MAX
    }

    pub fn splitting(&self) -> Splitting {
        Splitting {
            selector: self.selector,
            threshold_bits: self.threshold.to_bits(),
        }
    }

    /// Identity used when matching conditions across trees and lists.
    pub fn key(&self) -> (FeatureSelector, u64, Sign) {
        (self.selector, self.threshold.to_bits(), self.sign)
    }

    /// Comparison on an already extracted feature value; `value == threshold`
    /// goes left.
    #[inline]
    pub fn test(&self, value: f64) -> bool {
        match self.sign {
            Sign::Le => value <= self.threshold,
            Sign::Gt => value > self.threshold,
        }
    }

    #[inline]
    pub fn holds(&self, features: &Features<'_>) -> bool {
        self.test(features.value(self.selector))
    }

    /// Checked evaluation on a raw point.
    pub fn evaluate(&self, x: &[f64], pool: &ShapeletPool) -> Result<bool> {
        let value = match self.selector {
            FeatureSelector::Axis(p) => *x.get(p).ok_or(Error::FeatureOutOfRange { index: p, len: x.len() })?,
            FeatureSelector::Shapelet(id) => {
                let shapelet = pool.get(id).ok_or(Error::UnknownShapelet(id))?;
                subsequence_distance(x, &shapelet.values)?
            }
        };
        Ok(self.test(value))
    }
}

/// Set of sign-stripped splittings of a rule, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SplittingSet {
    elements: Vec<Splitting>,
}

impl SplittingSet {
    pub fn from_conditions(conditions: &[Condition]) -> Self {
        let mut elements: Vec<Splitting> = conditions.iter().map(Condition::splitting).collect();
        elements.sort_unstable();
        elements.dedup();
        Self { elements }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Splitting] {
        &self.elements
    }

    pub fn intersection_len(&self, other: &SplittingSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.elements.len() && j < other.elements.len() {
            match self.elements[i].cmp(&other.elements[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    /// Root-to-leaf order.
    pub conditions: Vec<Condition>,
    pub prediction: Prediction,
    pub tree_id: usize,
    pub weight: f64,
    /// Training points satisfying the rule, filled in by preprocessing.
    pub coverage: usize,
}

impl Rule {
    pub fn new(conditions: Vec<Condition>, prediction: Prediction, tree_id: usize) -> Self {
        Self {
            conditions,
            prediction,
            tree_id,
            weight: 1.0,
            coverage: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn splitting_set(&self) -> SplittingSet {
        SplittingSet::from_conditions(&self.conditions)
    }

    #[inline]
    pub fn satisfied(&self, features: &Features<'_>) -> bool {
        self.conditions.iter().all(|c| c.holds(features))
    }

    /// Checked conjunction; stops at the first failing condition.
    pub fn evaluate(&self, x: &[f64], pool: &ShapeletPool) -> Result<bool> {
        for c in &self.conditions {
            if !c.evaluate(x, pool)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Same path: identical ordered conditions (threshold bits and signs).
    pub fn same_path(&self, other: &Rule) -> bool {
        self.conditions.len() == other.conditions.len()
            && self
                .conditions
                .iter()
                .zip(&other.conditions)
                .all(|(a, b)| a.key() == b.key())
    }

    fn validate(&self, width: usize, pool: &ShapeletPool) -> Result<()> {
        if self.conditions.is_empty() {
            return Err(Error::InvalidModel("rule without conditions".into()));
        }
        if !self.weight.is_finite() {
            return Err(Error::InvalidModel("non-finite rule weight".into()));
        }
        for c in &self.conditions {
            if c.threshold.is_nan() || c.threshold.is_infinite() {
                return Err(Error::InvalidModel(format!("non-finite threshold {}", c.threshold)));
            }
            match c.selector {
                FeatureSelector::Axis(p) if p >= width => {
                    return Err(Error::FeatureOutOfRange { index: p, len: width })
                }
                FeatureSelector::Shapelet(id) if pool.get(id).is_none() => return Err(Error::UnknownShapelet(id)),
                _ => {}
            }
        }
        Ok(())
    }
}

/// A decision tree represented by its leaves' rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub tree_id: usize,
    pub rules: Vec<Rule>,
}

impl Tree {
    pub fn new(tree_id: usize, mut rules: Vec<Rule>) -> Self {
        for r in &mut rules {
            r.tree_id = tree_id;
        }
        Self { tree_id, rules }
    }

    /// Tree made of a single leaf predicting `prediction` everywhere.
    pub fn constant(tree_id: usize, prediction: Prediction) -> Self {
        Self::new(
            tree_id,
            vec![Rule::new(vec![Condition::vacuous()], prediction, tree_id)],
        )
    }

    pub fn n_leaves(&self) -> usize {
        self.rules.len()
    }

    pub fn depth(&self) -> usize {
        self.rules
            .iter()
            .map(|r| {
                if r.conditions.iter().all(Condition::is_vacuous) {
                    0
                } else {
                    r.len()
                }
            })
            .max()
            .unwrap_or(0)
    }

    pub fn predict_features(&self, features: &Features<'_>) -> Result<Prediction> {
        let mut found = None;
        let mut satisfied = 0;
        for rule in &self.rules {
            if rule.satisfied(features) {
                satisfied += 1;
                found.get_or_insert(rule.prediction);
            }
        }
        match (satisfied, found) {
            (1, Some(p)) => Ok(p),
            _ => Err(Error::CorruptedTree {
                tree_id: self.tree_id,
                satisfied,
            }),
        }
    }

    pub fn predict(&self, x: &[f64], pool: &ShapeletPool) -> Result<Prediction> {
        let features = pool.features(x)?;
        self.predict_features(&features)
    }
}

/// Shapelets referenced by id from the conditions of an ensemble.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ShapeletPool {
    shapelets: Vec<Shapelet>,
}

impl ShapeletPool {
    pub fn new(shapelets: Vec<Shapelet>) -> Self {
        Self { shapelets }
    }

    pub fn get(&self, id: usize) -> Option<&Shapelet> {
        self.shapelets.get(id)
    }

    pub fn len(&self) -> usize {
        self.shapelets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapelets.is_empty()
    }

    pub fn shapelets(&self) -> &[Shapelet] {
        &self.shapelets
    }

    /// Id of an identical shapelet, inserting it when absent.
    pub fn intern(&mut self, shapelet: Shapelet) -> usize {
        let bits: Vec<u64> = shapelet.values.iter().map(|v| v.to_bits()).collect();
        if let Some(id) = self
            .shapelets
            .iter()
            .position(|s| s.values.len() == bits.len() && s.values.iter().map(|v| v.to_bits()).eq(bits.iter().copied()))
        {
            return id;
        }
        self.shapelets.push(shapelet);
        self.shapelets.len() - 1
    }

    /// Precomputes every shapelet distance of `x`.
    pub fn features<'a>(&self, x: &'a [f64]) -> Result<Features<'a>> {
        let distances = self
            .shapelets
            .iter()
            .map(|s| subsequence_distance(x, &s.values))
            .collect::<Result<Vec<_>>>()?;
        Ok(Features { point: x, distances })
    }
}

/// A point with the distances to every pool shapelet already computed.
#[derive(Debug, Clone)]
pub struct Features<'a> {
    point: &'a [f64],
    distances: Vec<f64>,
}

impl<'a> Features<'a> {
    /// Tabular view with no shapelet distances.
    pub fn tabular(point: &'a [f64]) -> Self {
        Self {
            point,
            distances: Vec::new(),
        }
    }

    /// Panics on out-of-range selectors; use the checked
    /// [`Condition::evaluate`] on untrusted input.
    #[inline]
    pub fn value(&self, selector: FeatureSelector) -> f64 {
        match selector {
            FeatureSelector::Axis(p) => self.point[p],
            FeatureSelector::Shapelet(id) => self.distances[id],
        }
    }

    pub fn point(&self) -> &'a [f64] {
        self.point
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub task: Task,
    pub kind: DataKind,
    /// Feature count or series length of the training points.
    pub width: usize,
    /// Original class labels, indexed by class id; empty for regression.
    pub class_names: Vec<String>,
    pub trees: Vec<Tree>,
    pub pool: ShapeletPool,
}

impl Ensemble {
    pub fn new(
        task: Task,
        kind: DataKind,
        width: usize,
        class_names: Vec<String>,
        trees: Vec<Tree>,
        pool: ShapeletPool,
    ) -> Result<Self> {
        let ens = Self {
            task,
            kind,
            width,
            class_names,
            trees,
            pool,
        };
        ens.validate()?;
        Ok(ens)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::InvalidModel("ensemble without trees".into()));
        }
        if self.task == Task::Classification && self.class_names.is_empty() {
            return Err(Error::InvalidModel("classification ensemble without classes".into()));
        }
        for tree in &self.trees {
            if tree.rules.is_empty() {
                return Err(Error::InvalidModel(format!("tree {} has no rules", tree.tree_id)));
            }
            for rule in &tree.rules {
                if rule.tree_id != tree.tree_id {
                    return Err(Error::InvalidModel(format!(
                        "rule of tree {} stored in tree {}",
                        rule.tree_id, tree.tree_id
                    )));
                }
                match (self.task, rule.prediction) {
                    (Task::Classification, Prediction::Class(c)) if c < self.class_names.len() => {}
                    (Task::Regression, Prediction::Value(v)) if v.is_finite() => {}
                    (_, p) => {
                        return Err(Error::InvalidModel(format!(
                            "prediction {p:?} invalid for a {} ensemble",
                            self.task.name()
                        )))
                    }
                }
                rule.validate(self.width, &self.pool)?;
            }
        }
        for s in self.pool.shapelets() {
            if s.values.is_empty() || s.values.len() > self.width {
                return Err(Error::ShapeletTooLong {
                    shapelet_len: s.values.len(),
                    series_len: self.width,
                });
            }
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_rules(&self) -> usize {
        self.trees.iter().map(|t| t.rules.len()).sum()
    }

    pub fn features<'a>(&self, x: &'a [f64]) -> Result<Features<'a>> {
        if x.len() != self.width {
            return Err(Error::InvalidDataset(format!(
                "point has {} values, ensemble expects {}",
                x.len(),
                self.width
            )));
        }
        self.pool.features(x)
    }

    pub fn predict_features(&self, features: &Features<'_>) -> Result<Prediction> {
        match self.task {
            Task::Classification => {
                let mut votes = vec![0usize; self.class_names.len()];
                for tree in &self.trees {
                    if let Prediction::Class(c) = tree.predict_features(features)? {
                        votes[c] += 1;
                    }
                }
                Ok(Prediction::Class(plurality(&votes)))
            }
            Task::Regression => {
                let mut sum = 0.0;
                for tree in &self.trees {
                    sum += tree.predict_features(features)?.as_f64();
                }
                Ok(Prediction::Value(sum / self.trees.len() as f64))
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let features = self.features(x)?;
        self.predict_features(&features)
    }

    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<Prediction>> {
        use rayon::prelude::*;
        (0..ds.len())
            .into_par_iter()
            .map(|i| self.predict(ds.point(i)))
            .collect()
    }
}

/// Index of the largest count; ties go to the smallest index.
pub fn plurality(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// All rules of the ensemble in (tree, leaf) order.
pub fn enumerate_rules(ens: &Ensemble) -> Vec<Rule> {
    ens.trees.iter().flat_map(|t| t.rules.iter().cloned()).collect()
}

/// Binary tree rebuilt from a set of rules by sharing condition prefixes.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeLayout {
    /// Index into the rule slice the layout was built from.
    Leaf(usize),
    Branch {
        splitting: Splitting,
        left: Box<TreeLayout>,
        right: Box<TreeLayout>,
    },
}

impl TreeLayout {
    /// Returns `None` unless the rules form a complete binary tree: at every
    /// node all rules agree on the splitting and both sides are non-empty.
    pub fn build(rules: &[Rule]) -> Option<TreeLayout> {
        if rules.is_empty() {
            return None;
        }
        let indices: Vec<usize> = (0..rules.len()).collect();
        Self::build_at(rules, &indices, 0)
    }

    fn build_at(rules: &[Rule], indices: &[usize], depth: usize) -> Option<TreeLayout> {
        if let [only] = indices {
            let rest = &rules[*only].conditions[depth.min(rules[*only].len())..];
            return rest
                .iter()
                .all(Condition::is_vacuous)
                .then_some(TreeLayout::Leaf(*only));
        }
        let first = rules[indices[0]].conditions.get(depth)?.splitting();
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &i in indices {
            let c = rules[i].conditions.get(depth)?;
            if c.splitting() != first {
                return None;
            }
            match c.sign {
                Sign::Le => left.push(i),
                Sign::Gt => right.push(i),
            }
        }
        if left.is_empty() || right.is_empty() {
            return None;
        }
        Some(TreeLayout::Branch {
            splitting: first,
            left: Box::new(Self::build_at(rules, &left, depth + 1)?),
            right: Box::new(Self::build_at(rules, &right, depth + 1)?),
        })
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeLayout::Leaf(_) => 1,
            TreeLayout::Branch { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}
