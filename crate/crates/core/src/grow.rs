//! Greedy impurity-driven tree growth shared by the tabular and shapelet
//! trainers, plus weakest-link cost-complexity pruning.

use rand_chacha::ChaCha8Rng;

use crate::model::{plurality, Condition, Dataset, Prediction, Rule, Sign, Targets, Tree};

/// Candidate split features proposed at a node.
pub(crate) trait CandidateSource {
    type Candidate: Clone;

    /// Candidates in tie-break order, each with its value for every row of
    /// the node (same order as `rows`).
    fn candidates(&mut self, ds: &Dataset, rows: &[usize], rng: &mut ChaCha8Rng) -> Vec<(Self::Candidate, Vec<f64>)>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Node<C> {
    Leaf {
        prediction: Prediction,
        n: usize,
        /// Impurity times sample count.
        cost: f64,
    },
    Branch {
        candidate: C,
        threshold: f64,
        prediction: Prediction,
        n: usize,
        cost: f64,
        left: Box<Node<C>>,
        right: Box<Node<C>>,
    },
}

impl<C: Clone> Node<C> {
    fn n_leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Branch { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    fn leaf_cost(&self) -> f64 {
        match self {
            Node::Leaf { cost, .. } => *cost,
            Node::Branch { left, right, .. } => left.leaf_cost() + right.leaf_cost(),
        }
    }

    /// Converts to rules, mapping each candidate to a selector.
    pub fn into_tree(self, tree_id: usize, selector: &mut impl FnMut(&C) -> crate::model::FeatureSelector) -> Tree {
        let mut rules = Vec::new();
        let mut prefix = Vec::new();
        self.collect(&mut prefix, &mut rules, tree_id, selector);
        Tree::new(tree_id, rules)
    }

    fn collect(
        &self,
        prefix: &mut Vec<Condition>,
        out: &mut Vec<Rule>,
        tree_id: usize,
        selector: &mut impl FnMut(&C) -> crate::model::FeatureSelector,
    ) {
        match self {
            Node::Leaf { prediction, .. } => {
                let conditions = if prefix.is_empty() {
                    vec![Condition::vacuous()]
                } else {
                    prefix.clone()
                };
                out.push(Rule::new(conditions, *prediction, tree_id));
            }
            Node::Branch {
                candidate,
                threshold,
                left,
                right,
                ..
            } => {
                let sel = selector(candidate);
                prefix.push(Condition::new(sel, *threshold, Sign::Le));
                left.collect(prefix, out, tree_id, selector);
                prefix.pop();
                prefix.push(Condition::new(sel, *threshold, Sign::Gt));
                right.collect(prefix, out, tree_id, selector);
                prefix.pop();
            }
        }
    }
}

/// Sufficient statistics of a multiset of targets.
#[derive(Debug, Clone)]
pub(crate) enum Stats {
    Classes { counts: Vec<usize>, n: usize },
    Values { sum: f64, sum_sq: f64, n: usize },
}

impl Stats {
    pub(crate) fn empty(targets: &Targets) -> Self {
        match targets {
            Targets::Classes { names, .. } => Stats::Classes {
                counts: vec![0; names.len()],
                n: 0,
            },
            Targets::Values(_) => Stats::Values {
                sum: 0.0,
                sum_sq: 0.0,
                n: 0,
            },
        }
    }

    pub(crate) fn of(targets: &Targets, rows: &[usize]) -> Self {
        let mut s = Self::empty(targets);
        for &r in rows {
            s.add(targets, r);
        }
        s
    }

    #[inline]
    pub(crate) fn add(&mut self, targets: &Targets, row: usize) {
        match (self, targets) {
            (Stats::Classes { counts, n }, Targets::Classes { ids, .. }) => {
                counts[ids[row]] += 1;
                *n += 1;
            }
            (Stats::Values { sum, sum_sq, n }, Targets::Values(v)) => {
                *sum += v[row];
                *sum_sq += v[row] * v[row];
                *n += 1;
            }
            _ => unreachable!("stats built for another task"),
        }
    }

    #[inline]
    pub(crate) fn remove(&mut self, targets: &Targets, row: usize) {
        match (self, targets) {
            (Stats::Classes { counts, n }, Targets::Classes { ids, .. }) => {
                counts[ids[row]] -= 1;
                *n -= 1;
            }
            (Stats::Values { sum, sum_sq, n }, Targets::Values(v)) => {
                *sum -= v[row];
                *sum_sq -= v[row] * v[row];
                *n -= 1;
            }
            _ => unreachable!("stats built for another task"),
        }
    }

    pub(crate) fn n(&self) -> usize {
        match self {
            Stats::Classes { n, .. } | Stats::Values { n, .. } => *n,
        }
    }

    /// Gini (classification) or variance (regression) times the count.
    pub(crate) fn cost(&self) -> f64 {
        match self {
            Stats::Classes { counts, n } => {
                if *n == 0 {
                    return 0.0;
                }
                let nf = *n as f64;
                let sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
                nf - sq / nf
            }
            Stats::Values { sum, sum_sq, n } => {
                if *n == 0 {
                    return 0.0;
                }
                (sum_sq - sum * sum / *n as f64).max(0.0)
            }
        }
    }

    fn pure(&self) -> bool {
        match self {
            Stats::Classes { counts, n } => counts.contains(n),
            Stats::Values { .. } => self.cost() <= 1e-12 * (self.n() as f64).max(1.0),
        }
    }

    pub(crate) fn prediction(&self) -> Prediction {
        match self {
            Stats::Classes { counts, .. } => Prediction::Class(plurality(counts)),
            Stats::Values { sum, n, .. } => Prediction::Value(sum / *n as f64),
        }
    }
}

struct BestSplit<C> {
    candidate: C,
    values: Vec<f64>,
    threshold: f64,
    gain: f64,
}

/// Grows a tree over `rows` (repeats allowed) of `ds`.
pub(crate) fn grow<S: CandidateSource>(
    ds: &Dataset,
    rows: &[usize],
    params: GrowParams,
    source: &mut S,
    rng: &mut ChaCha8Rng,
) -> Node<S::Candidate> {
    grow_node(ds, rows.to_vec(), 0, params, source, rng)
}

fn grow_node<S: CandidateSource>(
    ds: &Dataset,
    rows: Vec<usize>,
    depth: usize,
    params: GrowParams,
    source: &mut S,
    rng: &mut ChaCha8Rng,
) -> Node<S::Candidate> {
    let targets = ds.targets();
    let stats = Stats::of(targets, &rows);
    let n = rows.len();
    let cost = stats.cost();
    let prediction = stats.prediction();
    let leaf = Node::Leaf { prediction, n, cost };
    if depth >= params.max_depth || n < 2 * params.min_samples_leaf || stats.pure() {
        return leaf;
    }

    let mut best: Option<BestSplit<S::Candidate>> = None;
    for (candidate, values) in source.candidates(ds, &rows, rng) {
        if let Some((threshold, gain)) = best_threshold(targets, &rows, &values, &stats, params) {
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(BestSplit {
                    candidate,
                    values,
                    threshold,
                    gain,
                });
            }
        }
    }
    // Zero-gain splits are kept: an impure node may need one (XOR) before
    // its children can separate.
    let Some(best) = best else {
        return leaf;
    };

    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (&r, &v) in rows.iter().zip(&best.values) {
        if v <= best.threshold {
            left.push(r);
        } else {
            right.push(r);
        }
    }
    debug_assert!(!left.is_empty() && !right.is_empty());
    let left = grow_node(ds, left, depth + 1, params, source, rng);
    let right = grow_node(ds, right, depth + 1, params, source, rng);
    Node::Branch {
        candidate: best.candidate,
        threshold: best.threshold,
        prediction,
        n,
        cost,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Best midpoint threshold for one candidate: `(threshold, gain)`, where
/// ties keep the lowest threshold.
fn best_threshold(
    targets: &Targets,
    rows: &[usize],
    values: &[f64],
    parent: &Stats,
    params: GrowParams,
) -> Option<(f64, f64)> {
    let n = rows.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let parent_cost = parent.cost();
    let mut left = Stats::empty(targets);
    let mut right = parent.clone();
    let mut best: Option<(f64, f64)> = None;
    for k in 0..n - 1 {
        let row = rows[order[k]];
        left.add(targets, row);
        right.remove(targets, row);
        let lo = values[order[k]];
        let hi = values[order[k + 1]];
        if lo == hi {
            continue;
        }
        let n_left = k + 1;
        if n_left < params.min_samples_leaf || n - n_left < params.min_samples_leaf {
            continue;
        }
        let gain = parent_cost - left.cost() - right.cost();
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((midpoint(lo, hi), gain));
        }
    }
    best
}

/// Midpoint of `lo < hi` that still separates them (`lo <= m < hi`).
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

/// Weakest-link pruning: collapses every subtree whose per-leaf cost
/// reduction, relative to the root sample count, is at most `alpha`.
pub(crate) fn prune<C: Clone>(root: Node<C>, alpha: f64) -> Node<C> {
    let total = match &root {
        Node::Leaf { n, .. } | Node::Branch { n, .. } => (*n).max(1) as f64,
    };
    let mut root = root;
    loop {
        let Some(g) = weakest_link(&root, total) else {
            return root;
        };
        if g > alpha {
            return root;
        }
        root = collapse(root, g, total);
    }
}

fn link_strength<C: Clone>(node: &Node<C>, total: f64) -> Option<f64> {
    match node {
        Node::Leaf { .. } => None,
        Node::Branch { cost, .. } => {
            let leaves = node.n_leaves() as f64;
            Some(((cost - node.leaf_cost()) / total / (leaves - 1.0)).max(0.0))
        }
    }
}

fn weakest_link<C: Clone>(node: &Node<C>, total: f64) -> Option<f64> {
    match node {
        Node::Leaf { .. } => None,
        Node::Branch { left, right, .. } => {
            let own = link_strength(node, total);
            [own, weakest_link(left, total), weakest_link(right, total)]
                .into_iter()
                .flatten()
                .min_by(f64::total_cmp)
        }
    }
}

fn collapse<C: Clone>(node: Node<C>, g: f64, total: f64) -> Node<C> {
    if link_strength(&node, total).is_some_and(|s| s <= g) {
        if let Node::Branch {
            prediction, n, cost, ..
        } = node
        {
            return Node::Leaf { prediction, n, cost };
        }
    }
    match node {
        Node::Branch {
            candidate,
            threshold,
            prediction,
            n,
            cost,
            left,
            right,
        } => Node::Branch {
            candidate,
            threshold,
            prediction,
            n,
            cost,
            left: Box::new(collapse(*left, g, total)),
            right: Box::new(collapse(*right, g, total)),
        },
        leaf => leaf,
    }
}
