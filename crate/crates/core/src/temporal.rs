//! Subsequence distance and a bagged shapelet forest.
//!
//! Each tree node samples a handful of subsequences from the series that
//! reach it and splits on the one whose distance feature gives the largest
//! impurity decrease. No series normalization is applied.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grow::{grow, CandidateSource, GrowParams, Node};
use crate::model::{DataKind, Dataset, Ensemble, FeatureSelector, ShapeletPool, Tree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shapelet {
    pub values: Vec<f64>,
    /// `(series index, start position)` it was cut from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<(usize, usize)>,
}

impl Shapelet {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, source: None }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Minimum Euclidean distance between `z` and any length-`|z|` window of `x`.
pub fn subsequence_distance(x: &[f64], z: &[f64]) -> Result<f64> {
    if z.is_empty() || z.len() > x.len() {
        return Err(Error::ShapeletTooLong {
            shapelet_len: z.len(),
            series_len: x.len(),
        });
    }
    let mut best = f64::INFINITY;
    for window in x.windows(z.len()) {
        let mut acc = 0.0;
        for (a, b) in window.iter().zip(z) {
            let d = a - b;
            acc += d * d;
            if acc >= best {
                break;
            }
        }
        if acc < best {
            best = acc;
        }
    }
    Ok(best.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeletForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Candidate shapelets sampled at each node.
    pub shapelets_per_node: usize,
    /// Inclusive `(min, max)` shapelet length; `None` means `(ceil(P/10), P)`.
    pub length_bounds: Option<(usize, usize)>,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for ShapeletForestParams {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 3,
            shapelets_per_node: 10,
            length_bounds: None,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl ShapeletForestParams {
    pub fn bounds_for(&self, series_len: usize) -> Result<(usize, usize)> {
        let (lo, hi) = self.length_bounds.unwrap_or((series_len.div_ceil(10), series_len));
        let lo = lo.max(1);
        if lo > hi || hi > series_len {
            return Err(Error::InvalidParameter(format!(
                "shapelet length bounds ({lo}, {hi}) invalid for series of length {series_len}"
            )));
        }
        Ok((lo, hi))
    }

    fn validate(&self, ds: &Dataset) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.shapelets_per_node == 0 {
            return Err(Error::InvalidParameter(
                "trees, depth and shapelets per node must be at least 1".into(),
            ));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidParameter("min_samples_leaf must be at least 1".into()));
        }
        if ds.kind() != DataKind::Temporal {
            return Err(Error::InvalidDataset("shapelet trees need a temporal dataset".into()));
        }
        self.bounds_for(ds.width()).map(|_| ())
    }
}

fn sample_from_rows(
    ds: &Dataset,
    rows: &[usize],
    count: usize,
    (lo, hi): (usize, usize),
    rng: &mut ChaCha8Rng,
) -> Vec<Shapelet> {
    let p = ds.width();
    (0..count)
        .map(|_| {
            let series = rows[rng.gen_range(0..rows.len())];
            let len = rng.gen_range(lo..=hi);
            let start = rng.gen_range(0..=p - len);
            Shapelet {
                values: ds.point(series)[start..start + len].to_vec(),
                source: Some((series, start)),
            }
        })
        .collect()
}

/// Draws `shapelets_per_node` subsequences with uniform series, length and
/// start position.
pub fn sample_shapelets(ds: &Dataset, params: &ShapeletForestParams, rng: &mut ChaCha8Rng) -> Result<Vec<Shapelet>> {
    params.validate(ds)?;
    let rows: Vec<usize> = (0..ds.len()).collect();
    let bounds = params.bounds_for(ds.width())?;
    Ok(sample_from_rows(ds, &rows, params.shapelets_per_node, bounds, rng))
}

struct ShapeletSource {
    per_node: usize,
    bounds: (usize, usize),
}

impl CandidateSource for ShapeletSource {
    type Candidate = Shapelet;

    fn candidates(&mut self, ds: &Dataset, rows: &[usize], rng: &mut ChaCha8Rng) -> Vec<(Shapelet, Vec<f64>)> {
        sample_from_rows(ds, rows, self.per_node, self.bounds, rng)
            .into_iter()
            .map(|s| {
                let d = rows
                    .iter()
                    .map(|&r| subsequence_distance(ds.point(r), &s.values).expect("sampled shapelets fit the series"))
                    .collect();
                (s, d)
            })
            .collect()
    }
}

fn grow_shapelet_node(
    ds: &Dataset,
    rows: &[usize],
    params: &ShapeletForestParams,
    rng: &mut ChaCha8Rng,
) -> Result<Node<Shapelet>> {
    let mut source = ShapeletSource {
        per_node: params.shapelets_per_node,
        bounds: params.bounds_for(ds.width())?,
    };
    let grow_params = GrowParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };
    Ok(grow(ds, rows, grow_params, &mut source, rng))
}

/// Grows one tree on the whole dataset; chosen shapelets are interned in
/// `pool`.
pub fn train_shapelet_tree(
    ds: &Dataset,
    params: &ShapeletForestParams,
    rng: &mut ChaCha8Rng,
    pool: &mut ShapeletPool,
) -> Result<Tree> {
    params.validate(ds)?;
    let rows: Vec<usize> = (0..ds.len()).collect();
    let node = grow_shapelet_node(ds, &rows, params, rng)?;
    Ok(node.into_tree(0, &mut |s: &Shapelet| FeatureSelector::Shapelet(pool.intern(s.clone()))))
}

/// Bagged shapelet trees; tree `k` uses seed `params.seed + k`, so the
/// result does not depend on the thread count.
pub fn train_shapelet_forest(ds: &Dataset, params: &ShapeletForestParams) -> Result<Ensemble> {
    params.validate(ds)?;
    let n = ds.len();
    let nodes = (0..params.n_trees)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(k as u64));
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            grow_shapelet_node(ds, &rows, params, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pool = ShapeletPool::default();
    let trees = nodes
        .into_iter()
        .enumerate()
        .map(|(k, node)| node.into_tree(k, &mut |s: &Shapelet| FeatureSelector::Shapelet(pool.intern(s.clone()))))
        .collect();
    Ensemble::new(
        ds.task(),
        DataKind::Temporal,
        ds.width(),
        ds.class_names().to_vec(),
        trees,
        pool,
    )
}
