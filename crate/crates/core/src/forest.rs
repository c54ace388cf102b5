//! CART trees, bagged random forests and mean-decrease-impurity importance
//! for tabular data.

use rand::{seq::index, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grow::{grow, prune, CandidateSource, GrowParams, Stats};
use crate::model::{DataKind, Dataset, Ensemble, FeatureSelector, Features, ShapeletPool, Task, Tree, TreeLayout};

/// Number of features examined at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxFeatures {
    All,
    /// `sqrt(P)` for classification, `P/3` for regression (at least 1).
    Auto,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, width: usize, task: Task) -> usize {
        let m = match self {
            MaxFeatures::All => width,
            MaxFeatures::Count(m) => m,
            MaxFeatures::Auto => match task {
                Task::Classification => (width as f64).sqrt().floor() as usize,
                Task::Regression => width / 3,
            },
        };
        m.clamp(1, width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    /// `usize::MAX` leaves depth unbounded.
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub seed: u64,
    pub cost_complexity_alpha: f64,
    /// Draw a size-N bootstrap sample per tree in forests.
    pub bootstrap: bool,
}

impl Default for CartParams {
    fn default() -> Self {
        Self {
            max_depth: 3,
            min_samples_leaf: 1,
            n_trees: 100,
            max_features: MaxFeatures::All,
            seed: 0,
            cost_complexity_alpha: 0.0,
            bootstrap: true,
        }
    }
}

impl CartParams {
    /// Usual random-forest settings: bootstrap and `Auto` feature subsets.
    pub fn forest(n_trees: usize, max_depth: usize, seed: u64) -> Self {
        Self {
            n_trees,
            max_depth,
            seed,
            max_features: MaxFeatures::Auto,
            ..Self::default()
        }
    }

    fn validate(&self, ds: &Dataset) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::InvalidParameter("max_depth must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidParameter("min_samples_leaf must be at least 1".into()));
        }
        if self.cost_complexity_alpha.is_nan() || self.cost_complexity_alpha < 0.0 {
            return Err(Error::InvalidParameter(
                "cost_complexity_alpha must be non-negative".into(),
            ));
        }
        if let MaxFeatures::Count(0) = self.max_features {
            return Err(Error::InvalidParameter("max_features must be at least 1".into()));
        }
        if ds.kind() != DataKind::Tabular {
            return Err(Error::InvalidDataset("CART needs a tabular dataset".into()));
        }
        Ok(())
    }
}

struct AxisSource {
    width: usize,
    per_split: usize,
}

impl CandidateSource for AxisSource {
    type Candidate = usize;

    fn candidates(&mut self, ds: &Dataset, rows: &[usize], rng: &mut ChaCha8Rng) -> Vec<(usize, Vec<f64>)> {
        let mut features: Vec<usize> = if self.per_split >= self.width {
            (0..self.width).collect()
        } else {
            index::sample(rng, self.width, self.per_split).into_vec()
        };
        features.sort_unstable();
        features
            .into_iter()
            .map(|p| (p, rows.iter().map(|&r| ds.point(r)[p]).collect()))
            .collect()
    }
}

fn grow_cart(ds: &Dataset, rows: &[usize], params: &CartParams, rng: &mut ChaCha8Rng, tree_id: usize) -> Tree {
    let mut source = AxisSource {
        width: ds.width(),
        per_split: params.max_features.resolve(ds.width(), ds.task()),
    };
    let grow_params = GrowParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };
    let mut node = grow(ds, rows, grow_params, &mut source, rng);
    if params.cost_complexity_alpha > 0.0 {
        node = prune(node, params.cost_complexity_alpha);
    }
    node.into_tree(tree_id, &mut |&p| FeatureSelector::Axis(p))
}

/// Axis-aligned tree on every point of `ds` (no resampling).
pub fn train_cart(ds: &Dataset, params: &CartParams, rng: &mut ChaCha8Rng) -> Result<Tree> {
    params.validate(ds)?;
    let rows: Vec<usize> = (0..ds.len()).collect();
    Ok(grow_cart(ds, &rows, params, rng, 0))
}

/// Bagged CART trees; tree `k` draws from seed `params.seed + k`.
pub fn train_random_forest(ds: &Dataset, params: &CartParams) -> Result<Ensemble> {
    params.validate(ds)?;
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
    }
    let n = ds.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(k as u64));
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_cart(ds, &rows, params, &mut rng, k)
        })
        .collect();
    Ensemble::new(
        ds.task(),
        DataKind::Tabular,
        ds.width(),
        ds.class_names().to_vec(),
        trees,
        ShapeletPool::default(),
    )
}

/// Total weighted impurity decrease per selector over all branch nodes,
/// measured by routing `ds` through every tree.
fn impurity_decreases(
    ens: &Ensemble,
    ds: &Dataset,
    slot: impl Fn(FeatureSelector) -> Option<usize> + Sync,
    n_slots: usize,
) -> Result<Vec<f64>> {
    if ds.task() != ens.task {
        return Err(Error::TaskMismatch {
            expected: ens.task.name(),
            found: ds.task().name(),
        });
    }
    let features: Vec<Features<'_>> = (0..ds.len())
        .map(|i| ens.features(ds.point(i)))
        .collect::<Result<_>>()?;
    let rows: Vec<usize> = (0..ds.len()).collect();
    let per_tree = ens
        .trees
        .par_iter()
        .map(|tree| {
            let layout = TreeLayout::build(&tree.rules)
                .ok_or_else(|| Error::InvalidModel(format!("tree {} is not a complete binary tree", tree.tree_id)))?;
            let mut acc = vec![0.0; n_slots];
            accumulate(&layout, ds, &features, &rows, &slot, &mut acc)?;
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![0.0; n_slots];
    for acc in per_tree {
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a;
        }
    }
    Ok(total)
}

fn accumulate(
    node: &TreeLayout,
    ds: &Dataset,
    features: &[Features<'_>],
    rows: &[usize],
    slot: &impl Fn(FeatureSelector) -> Option<usize>,
    acc: &mut [f64],
) -> Result<()> {
    let TreeLayout::Branch { splitting, left, right } = node else {
        return Ok(());
    };
    let threshold = splitting.threshold();
    let (l, r): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&i| features[i].value(splitting.selector) <= threshold);
    let targets = ds.targets();
    let decrease = Stats::of(targets, rows).cost() - Stats::of(targets, &l).cost() - Stats::of(targets, &r).cost();
    let idx = slot(splitting.selector)
        .ok_or_else(|| Error::UnsupportedSelector(format!("{:?} in importance computation", splitting.selector)))?;
    acc[idx] += decrease.max(0.0);
    accumulate(left, ds, features, &l, slot, acc)?;
    accumulate(right, ds, features, &r, slot, acc)
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        v.iter_mut().for_each(|x| *x /= sum);
    }
    v
}

/// Mean decrease impurity per feature, normalized to sum to one (all zeros
/// when no split reduces impurity).
pub fn mdi_importance(ens: &Ensemble, ds: &Dataset) -> Result<Vec<f64>> {
    let width = ens.width;
    let raw = impurity_decreases(
        ens,
        ds,
        |s| match s {
            FeatureSelector::Axis(p) if p < width => Some(p),
            _ => None,
        },
        width,
    )?;
    Ok(normalized(raw))
}

/// Same formula indexed by shapelet id, for temporal ensembles.
pub fn shapelet_importance(ens: &Ensemble, ds: &Dataset) -> Result<Vec<f64>> {
    let raw = impurity_decreases(
        ens,
        ds,
        |s| match s {
            FeatureSelector::Shapelet(id) => Some(id),
            // Vacuous root conditions of leaf-only trees never split.
            FeatureSelector::Axis(_) => None,
        },
        ens.pool.len(),
    )?;
    Ok(normalized(raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{enumerate_rules, Prediction, Rule, Sign};

    fn tab_clf(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Dataset {
        let k = labels.iter().max().unwrap() + 1;
        Dataset::classification(rows, labels, k.max(2), DataKind::Tabular).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn single_class_gives_one_leaf() {
        let ds = tab_clf(vec![vec![1.0], vec![2.0], vec![3.0]], vec![1, 1, 1]);
        let tree = train_cart(&ds, &CartParams::default(), &mut rng()).unwrap();
        assert_eq!(tree.n_leaves(), 1);
    }

    #[test]
    fn two_points_split_at_midpoint() {
        let ds = tab_clf(vec![vec![0.0], vec![1.0]], vec![0, 1]);
        let params = CartParams {
            max_depth: 1,
            ..Default::default()
        };
        let tree = train_cart(&ds, &params, &mut rng()).unwrap();
        assert_eq!(tree.n_leaves(), 2);
        assert_eq!(tree.rules[0].conditions[0].threshold, 0.5);
        for i in 0..2 {
            assert_eq!(
                tree.predict(ds.point(i), &ShapeletPool::default()).unwrap(),
                ds.target(i)
            );
        }
    }

    #[test]
    fn xor_needs_depth_two() {
        // Oracle: enumerate all depth-2 axis trees on the 4 XOR corners with
        // thresholds at 0.5; at least one labels every corner correctly.
        let corners = [(0.0, 0.0, 0), (0.0, 1.0, 1), (1.0, 0.0, 1), (1.0, 1.0, 0)];
        let mut shattered = false;
        for root in 0..2 {
            for left in 0..2 {
                for right in 0..2 {
                    let route = |x: [f64; 2]| {
                        let second = if x[root] <= 0.5 { left } else { right };
                        (x[root] > 0.5) as usize * 2 + (x[second] > 0.5) as usize
                    };
                    let mut leaf_class = [None; 4];
                    let ok = corners.iter().all(|&(a, b, y)| {
                        let l = route([a, b]);
                        *leaf_class[l].get_or_insert(y) == y
                    });
                    shattered |= ok;
                }
            }
        }
        assert!(shattered);

        let rows = corners.iter().map(|&(a, b, _)| vec![a, b]).collect();
        let ds = tab_clf(rows, corners.iter().map(|c| c.2).collect());
        let params = CartParams {
            max_depth: 2,
            ..Default::default()
        };
        let tree = train_cart(&ds, &params, &mut rng()).unwrap();
        for i in 0..4 {
            assert_eq!(
                tree.predict(ds.point(i), &ShapeletPool::default()).unwrap(),
                ds.target(i)
            );
        }
    }

    fn noisy_linear(n: usize, seed: u64) -> Dataset {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..4).map(|_| r.gen_range(0.0..1.0)).collect();
            y.push(x[0] + r.gen_range(-0.01..0.01));
            rows.push(x);
        }
        Dataset::regression(rows, y, DataKind::Tabular).unwrap()
    }

    #[test]
    fn forest_is_reproducible_and_bounded() {
        let ds = noisy_linear(100, 1);
        let params = CartParams::forest(500, 3, 7);
        let a = train_random_forest(&ds, &params).unwrap();
        assert_eq!(a, train_random_forest(&ds, &params).unwrap());
        let rules = enumerate_rules(&a);
        assert!(rules.len() <= 4000);
        assert!(rules.iter().all(|r| r.len() <= 3));
        assert!(a.trees.iter().all(|t| t.n_leaves() <= 8));
    }

    #[test]
    fn unbagged_single_tree_forest_equals_cart() {
        let ds = noisy_linear(60, 2);
        let params = CartParams {
            n_trees: 1,
            bootstrap: false,
            ..Default::default()
        };
        let forest = train_random_forest(&ds, &params).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(params.seed);
        let tree = train_cart(&ds, &params, &mut r).unwrap();
        assert_eq!(forest.trees[0], tree);
    }

    #[test]
    fn importance_examples() {
        use Sign::*;
        let ds = tab_clf(
            vec![vec![0.0, 5.0], vec![1.0, 5.0], vec![2.0, 0.0], vec![3.0, 0.0]],
            vec![0, 0, 1, 1],
        );
        let a = |p, s| crate::model::Condition::new(FeatureSelector::Axis(p), 1.5, s);
        let only_first = Tree::new(
            0,
            vec![
                Rule::new(vec![a(0, Le)], Prediction::Class(0), 0),
                Rule::new(vec![a(0, Gt)], Prediction::Class(1), 0),
            ],
        );
        let second = |k| {
            let b = |s| crate::model::Condition::new(FeatureSelector::Axis(1), 2.5, s);
            Tree::new(
                k,
                vec![
                    Rule::new(vec![b(Le)], Prediction::Class(1), k),
                    Rule::new(vec![b(Gt)], Prediction::Class(0), k),
                ],
            )
        };
        let ens = |trees| {
            Ensemble::new(
                Task::Classification,
                DataKind::Tabular,
                2,
                vec!["a".into(), "b".into()],
                trees,
                ShapeletPool::default(),
            )
            .unwrap()
        };
        assert_eq!(
            mdi_importance(&ens(vec![only_first.clone()]), &ds).unwrap(),
            vec![1.0, 0.0]
        );
        let both = ens(vec![only_first, second(1)]);
        assert_eq!(mdi_importance(&both, &ds).unwrap(), vec![0.5, 0.5]);
        let none = ens(vec![Tree::constant(0, Prediction::Class(0))]);
        assert_eq!(mdi_importance(&none, &ds).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn importance_ranks_the_driving_feature() {
        let ds = noisy_linear(200, 3);
        // Brute-force audit: the best single split on x0 removes more
        // variance than the best split on any other feature.
        let best_decrease = |p: usize| {
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.sort_by(|&a, &b| ds.point(a)[p].total_cmp(&ds.point(b)[p]));
            let y = ds.values().unwrap();
            let var = |idx: &[usize]| {
                let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
                idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
            };
            let total = var(&order);
            (1..order.len())
                .map(|k| total - var(&order[..k]) - var(&order[k..]))
                .fold(0.0, f64::max)
        };
        let audit: Vec<f64> = (0..4).map(best_decrease).collect();
        assert!(audit[1..].iter().all(|&d| d < audit[0]));

        let forest = train_random_forest(&ds, &CartParams::forest(50, 3, 11)).unwrap();
        let imp = mdi_importance(&forest, &ds).unwrap();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let argmax = (0..4).max_by(|&a, &b| imp[a].total_cmp(&imp[b])).unwrap();
        assert_eq!(argmax, 0);
    }

    #[test]
    fn pruning_is_monotone() {
        let ds = noisy_linear(120, 4);
        let mut last = usize::MAX;
        for alpha in [0.0, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 1e9] {
            let params = CartParams {
                max_depth: usize::MAX,
                cost_complexity_alpha: alpha,
                ..Default::default()
            };
            let leaves = train_cart(&ds, &params, &mut rng()).unwrap().n_leaves();
            assert!(leaves <= last, "alpha {alpha}: {leaves} > {last}");
            last = leaves;
        }
        assert_eq!(last, 1);
    }

    #[test]
    fn rejects_temporal_data() {
        let ds = Dataset::classification(vec![vec![1.0]], vec![0], 1, DataKind::Temporal).unwrap();
        assert!(train_cart(&ds, &CartParams::default(), &mut rng()).is_err());
    }
}
