use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::forest::train_random_forest;
use crate::model::{DataKind, Dataset};

/// Best objective over all subsets of at most `ell` columns that partition
/// the rows, by exhaustive enumeration.
fn brute_best(p: &PartitionProblem) -> Option<f64> {
    let l = p.columns.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << l) {
        if mask.count_ones() as usize > p.ell {
            continue;
        }
        let sel: Vec<usize> = (0..l).filter(|j| mask >> j & 1 == 1).collect();
        if let Some(v) = p.value_of(&sel) {
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best
}

fn brute_counts(p: &PartitionProblem) -> Option<(usize, usize)> {
    let l = p.columns.len();
    let mut range: Option<(usize, usize)> = None;
    for mask in 1u32..(1 << l) {
        let sel: Vec<usize> = (0..l).filter(|j| mask >> j & 1 == 1).collect();
        if sel.iter().any(|&j| p.columns[j].is_empty()) {
            continue;
        }
        if partition_value(p.n_rows(), &p.columns, &p.costs, &sel).is_some() {
            let k = sel.len();
            range = Some(range.map_or((k, k), |(a, b)| (a.min(k), b.max(k))));
        }
    }
    range
}

/// Random instance built from a few planted partitions plus noise columns,
/// so feasible solutions exist and overlap.
fn random_instance(rng: &mut ChaCha8Rng, max_cols: usize, max_rows: usize, ell_max: usize) -> PartitionProblem {
    let n = rng.gen_range(1..=max_rows);
    let mut columns: Vec<Vec<usize>> = Vec::new();
    while columns.len() < max_cols {
        let parts = rng.gen_range(1..=ell_max.min(n).max(1));
        let mut label: Vec<usize> = (0..n).map(|_| rng.gen_range(0..parts)).collect();
        label[0] = 0;
        for part in 0..parts {
            let col: Vec<usize> = (0..n).filter(|&i| label[i] == part).collect();
            if !col.is_empty() && columns.len() < max_cols {
                columns.push(col);
            }
        }
        if rng.gen_bool(0.3) && columns.len() < max_cols {
            let col: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
            if !col.is_empty() {
                columns.push(col);
            }
        }
    }
    let costs = (0..columns.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ell = rng.gen_range(1..=ell_max);
    PartitionProblem::from_columns(n, columns, costs, ell).unwrap()
}

#[test]
fn single_universal_column() {
    let p = PartitionProblem::from_columns(3, vec![vec![0, 1, 2]], vec![0.2], 1).unwrap();
    let s = solve_exact(&p, Budget::default(), None).unwrap();
    assert_eq!(s.selected, vec![0]);
    assert_eq!(s.status, SolveStatus::Optimal);
}

#[test]
fn prefers_higher_objective_partition() {
    let p = PartitionProblem::from_columns(
        4,
        vec![vec![0, 1, 2, 3], vec![0, 1], vec![2, 3]],
        vec![0.9, 0.25, 0.25],
        3,
    )
    .unwrap();
    let s = solve_exact(&p, Budget::default(), None).unwrap();
    assert_eq!(s.selected, vec![0]);
    assert!((s.objective - 0.9).abs() < 1e-12);
}

#[test]
fn cap_below_minimum_is_infeasible() {
    let p = PartitionProblem::from_columns(3, vec![vec![0], vec![1], vec![2]], vec![1.0; 3], 2).unwrap();
    let s = solve_exact(&p, Budget::default(), None).unwrap();
    assert_eq!(s.status, SolveStatus::Infeasible);
    assert!(s.selected.is_empty());
}

#[test]
fn zero_budget_rejected() {
    let p = PartitionProblem::from_columns(1, vec![vec![0]], vec![0.0], 1).unwrap();
    let b = Budget {
        max_nodes: 0,
        max_seconds: 1.0,
    };
    assert!(matches!(solve_exact(&p, b, None), Err(Error::InvalidParameter(_))));
}

#[test]
fn malformed_warm_start_rejected() {
    let p = PartitionProblem::from_columns(2, vec![vec![0, 1], vec![0], vec![1]], vec![0.0; 3], 2).unwrap();
    assert!(matches!(
        solve_exact(&p, Budget::default(), Some(&[0, 1])),
        Err(Error::InvalidWarmStart(_))
    ));
    assert!(solve_exact(&p, Budget::default(), Some(&[1, 2])).is_ok());
}

#[test]
fn uncovered_row_rejected() {
    assert!(PartitionProblem::from_columns(2, vec![vec![0]], vec![0.0], 1).is_err());
}

#[test]
fn json_round_trip() {
    let p = PartitionProblem::from_columns(2, vec![vec![0, 1], vec![1]], vec![0.5, -0.25], 2).unwrap();
    let back = PartitionProblem::from_json(&p.to_json().unwrap()).unwrap();
    assert_eq!(p, back);
}

#[test]
fn positive_empty_columns_fill_the_cap() {
    let p = PartitionProblem::from_columns(
        2,
        vec![vec![0, 1], vec![], vec![], vec![]],
        vec![-0.5, 0.3, 0.2, -0.1],
        3,
    )
    .unwrap();
    let s = solve_exact(&p, Budget::default(), None).unwrap();
    assert_eq!(s.selected, vec![0, 1, 2]);
}

#[test]
fn duplicate_columns_keep_the_best() {
    let p =
        PartitionProblem::from_columns(2, vec![vec![0, 1], vec![1, 0], vec![0, 1]], vec![0.1, 0.7, 0.3], 1).unwrap();
    let s = solve_exact(&p, Budget::default(), None).unwrap();
    assert_eq!(s.selected, vec![1]);
}

#[test]
fn matches_enumeration_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..150 {
        let p = random_instance(&mut rng, 14, 20, 5);
        let s = solve_exact(&p, Budget::default(), None).unwrap();
        match brute_best(&p) {
            Some(best) => {
                assert_eq!(s.status, SolveStatus::Optimal);
                assert!((s.objective - best).abs() <= 1e-9, "{} vs {best}", s.objective);
                assert!((s.best_bound - s.objective).abs() <= 1e-6);
                assert_eq!(p.value_of(&s.selected), Some(s.objective));
            }
            None => assert_eq!(s.status, SolveStatus::Infeasible),
        }
    }
}

#[test]
fn count_bounds_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..80 {
        let p = random_instance(&mut rng, 12, 15, 6);
        match brute_counts(&p) {
            Some((lo, hi)) => {
                assert_eq!(min_rules_bound(&p, Budget::default()).unwrap(), lo);
                assert_eq!(max_rules_bound(&p, Budget::default()).unwrap(), hi);
            }
            None => assert!(min_rules_bound(&p, Budget::default()).is_err()),
        }
    }
}

#[test]
fn count_bound_examples() {
    let uni = PartitionProblem::from_columns(4, vec![vec![0, 1, 2, 3]], vec![0.0], 1).unwrap();
    assert_eq!(min_rules_bound(&uni, Budget::default()).unwrap(), 1);
    assert_eq!(max_rules_bound(&uni, Budget::default()).unwrap(), 1);
    let ident = PartitionProblem::from_columns(5, (0..5).map(|i| vec![i]).collect(), vec![0.0; 5], 1).unwrap();
    assert_eq!(min_rules_bound(&ident, Budget::default()).unwrap(), 5);
}

#[test]
fn sweep_is_monotone_and_matches_independent_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let p = random_instance(&mut rng, 14, 16, 4);
        let Ok(lo) = min_rules_bound(&p, Budget::default()) else {
            continue;
        };
        let hi = lo + 3;
        let sweep = sweep_problem(&p, lo, hi, Budget::default()).unwrap();
        for w in sweep.windows(2) {
            assert!(w[1].objective >= w[0].objective - 1e-12);
        }
        for (k, s) in sweep.iter().enumerate() {
            let mut q = p.clone();
            q.ell = lo + k;
            let ind = solve_exact(&q, Budget::default(), None).unwrap();
            assert!((ind.objective - s.objective).abs() <= 1e-9);
        }
    }
}

#[test]
fn sweep_below_minimum_names_it() {
    let p = PartitionProblem::from_columns(3, vec![vec![0], vec![1], vec![2], vec![0, 1]], vec![0.0; 4], 1).unwrap();
    match sweep_problem(&p, 1, 3, Budget::default()) {
        Err(Error::InfeasibleCardinality { ell: 1, minimum: 2 }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn tiny_budget_reports_exhaustion() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = random_instance(&mut rng, 20, 30, 5);
    let b = Budget {
        max_nodes: 1,
        max_seconds: 10.0,
    };
    let s = solve_exact(&p, b, None).unwrap();
    assert!(s.node_count <= 1);
    assert_ne!(s.status, SolveStatus::Infeasible);
}

#[test]
fn heuristic_bounds() {
    let rows = vec![vec![0.0], vec![1.0]];
    let ds = Dataset::classification(rows, vec![0, 1], 2, DataKind::Tabular).unwrap();
    assert_eq!(heuristic_upper_bound(&ds, 0.0).unwrap(), 2);
    assert_eq!(heuristic_upper_bound(&ds, 1e9).unwrap(), 1);
    let pure = Dataset::classification(vec![vec![0.0], vec![1.0]], vec![1, 1], 2, DataKind::Tabular).unwrap();
    assert_eq!(heuristic_upper_bound(&pure, 0.0).unwrap(), 1);
}

#[test]
fn heuristic_lower_bound_dominates_exact_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.gen::<f64>()).collect()).collect();
    let labels: Vec<usize> = rows.iter().map(|r| usize::from(r[0] + r[1] > 1.0)).collect();
    let ds = Dataset::classification(rows, labels, 2, DataKind::Tabular).unwrap();
    let ens = train_random_forest(&ds, &CartParams::forest(6, 2, 1)).unwrap();
    let cat = RuleCatalog::build(&ens, &ds).unwrap();
    let p = build_partition_problem(&cat, 0.5, 1).unwrap();
    let exact = min_rules_bound(&p, Budget::default()).unwrap();
    assert!(heuristic_lower_bound(&ens) >= exact);
}

#[test]
fn lambda_extremes() {
    let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64]).collect();
    let labels: Vec<usize> = (0..12).map(|i| usize::from(i % 3 == 0)).collect();
    let ds = Dataset::classification(rows, labels, 2, DataKind::Tabular).unwrap();
    let ens = train_random_forest(&ds, &CartParams::forest(4, 2, 0)).unwrap();
    let cat = RuleCatalog::build(&ens, &ds).unwrap();
    assert_eq!(build_partition_problem(&cat, 1.0, 3).unwrap().costs, cat.phi);
    let neg: Vec<f64> = cat.xi.iter().map(|x| -x).collect();
    assert_eq!(build_partition_problem(&cat, 0.0, 3).unwrap().costs, neg);
    assert!(build_partition_problem(&cat, 1.5, 3).is_err());
    assert!(build_partition_problem(&cat, 0.5, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn solutions_are_partitions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_instance(&mut rng, 16, 25, 5);
        let s = solve_exact(&p, Budget::default(), None).unwrap();
        if s.is_feasible() {
            prop_assert!(s.selected.len() <= p.ell);
            prop_assert_eq!(p.value_of(&s.selected), Some(s.objective));
            prop_assert!(s.best_bound >= s.objective - 1e-9);
        }
    }
}
