use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::forest::{train_random_forest, CartParams};
use crate::model::fixtures::*;
use crate::model::{Sign, Tree};

fn blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let c = i % 2;
        let centre = if c == 0 { 0.3 } else { 0.7 };
        rows.push(vec![
            centre + rng.gen_range(-0.25..0.25),
            rng.gen::<f64>(),
            centre + rng.gen_range(-0.4..0.4),
        ]);
        labels.push(c);
    }
    Dataset::classification(rows, labels, 2, DataKind::Tabular).unwrap()
}

fn model_with(rules: Vec<Rule>, fallback: Prediction) -> RuleListModel {
    RuleListModel {
        task: Task::Classification,
        kind: DataKind::Tabular,
        width: 10,
        class_names: vec!["A".into(), "B".into()],
        rules,
        fallback,
        shapelets: BTreeMap::new(),
        lambda: 0.5,
        ell_used: 2,
        solver_status: SolveStatus::Optimal,
        objective: 0.0,
    }
}

#[test]
fn single_tree_is_reproduced() {
    let ds = blobs(60, 1);
    let mut params = CartParams::forest(1, 3, 4);
    params.bootstrap = false;
    let ens = train_random_forest(&ds, &params).unwrap();
    let leaves = ens.trees[0].n_leaves();
    let model = extract(&ens, &ds, &ExtractionConfig::fixed(leaves)).unwrap();
    assert_eq!(model.rules.len(), leaves);
    for (a, b) in model.rules.iter().zip(&ens.trees[0].rules) {
        assert!(a.same_path(b));
        assert_eq!(a.prediction, b.prediction);
    }
}

#[test]
fn universal_rule_under_unit_cap() {
    let ds = blobs(30, 2);
    let mut ens = train_random_forest(&ds, &CartParams::forest(3, 2, 0)).unwrap();
    ens.trees.push(Tree::constant(3, Prediction::Class(0)));
    let model = extract(&ens, &ds, &ExtractionConfig::fixed(1)).unwrap();
    assert_eq!(model.rules.len(), 1);
    assert!(model.rules[0].conditions.iter().all(Condition::is_vacuous));
    assert_eq!(model.rules[0].coverage, 30);
}

#[test]
fn cap_below_minimum_names_it() {
    let ds = blobs(40, 3);
    let ens = train_random_forest(&ds, &CartParams::forest(3, 3, 1)).unwrap();
    let catalog = RuleCatalog::build(&ens, &ds).unwrap();
    let p = build_partition_problem(&catalog, 0.5, 1).unwrap();
    let min = min_rules_bound(&p, Budget::default()).unwrap();
    if min > 1 {
        match extract(&ens, &ds, &ExtractionConfig::fixed(min - 1)) {
            Err(Error::InfeasibleCardinality { minimum, .. }) => assert_eq!(minimum, min),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn inference_branches() {
    let r10 = {
        let mut r = Rule::new(vec![axis_cond(0, 5.0, Sign::Le)], Prediction::Class(0), 0);
        r.coverage = 10;
        r
    };
    let r25 = {
        let mut r = Rule::new(vec![axis_cond(1, 5.0, Sign::Le)], Prediction::Class(1), 1);
        r.coverage = 25;
        r
    };
    let m = model_with(vec![r10.clone(), r25.clone()], Prediction::Class(0));
    let mut x = vec![0.0; 10];
    assert_eq!(m.predict_detail(&x), (Prediction::Class(1), Resolution::Multiple));
    x[1] = 9.0;
    assert_eq!(m.predict_detail(&x), (Prediction::Class(0), Resolution::Unique));
    x[0] = 9.0;
    assert_eq!(m.predict_detail(&x), (Prediction::Class(0), Resolution::Fallback));

    // Equal coverage falls to list order.
    let mut tie = r25.clone();
    tie.coverage = 10;
    let m = model_with(vec![r10, tie], Prediction::Class(1));
    assert_eq!(predict_rule_list(&m, &[0.0; 10]), Prediction::Class(0));
}

#[test]
fn fallback_is_majority_or_mean() {
    let ds = Dataset::classification(vec![vec![0.0]; 3], vec![1, 0, 1], 2, DataKind::Tabular).unwrap();
    assert_eq!(fallback_prediction(&ds), Prediction::Class(1));
    let ds = Dataset::regression(vec![vec![0.0]; 2], vec![1.0, 3.0], DataKind::Tabular).unwrap();
    assert_eq!(fallback_prediction(&ds), Prediction::Value(2.0));
}

#[test]
fn training_points_resolve_uniquely() {
    for seed in 0..5 {
        let ds = blobs(50, seed);
        let ens = train_random_forest(&ds, &CartParams::forest(10, 3, seed)).unwrap();
        let model = extract(&ens, &ds, &ExtractionConfig::fixed(8)).unwrap();
        let m = evaluate(&model, &ds).unwrap();
        assert_eq!(m.fallback_fraction, Some(0.0));
        assert_eq!(m.multiple_fraction, Some(0.0));
        assert!(model.rules.len() <= 8);
    }
}

#[test]
fn evaluation_examples() {
    let ds = blobs(20, 9);
    let constant_tree = |p| Tree::constant(0, p);
    let ens = Ensemble::new(
        Task::Classification,
        DataKind::Tabular,
        3,
        vec!["0".into(), "1".into()],
        vec![constant_tree(Prediction::Class(0))],
        Default::default(),
    )
    .unwrap();
    let constant = evaluate_ensemble(&ens, &ds).unwrap();
    assert_eq!(constant.accuracy, Some(0.5));

    let values: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
    let reg = Dataset::regression(rows, values.clone(), DataKind::Tabular).unwrap();
    let mean = values.iter().sum::<f64>() / 20.0;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 20.0;
    let stump = Ensemble::new(
        Task::Regression,
        DataKind::Tabular,
        1,
        Vec::new(),
        vec![constant_tree(Prediction::Value(mean))],
        Default::default(),
    )
    .unwrap();
    let m = evaluate_ensemble(&stump, &reg).unwrap();
    assert!((m.mse.unwrap() - var).abs() < 1e-9);

    let mut params = CartParams::forest(1, usize::MAX, 0);
    params.bootstrap = false;
    let full = train_random_forest(&reg, &params).unwrap();
    assert_eq!(evaluate_ensemble(&full, &reg).unwrap().mse, Some(0.0));
    assert!(matches!(evaluate_ensemble(&full, &ds), Err(Error::TaskMismatch { .. })));
}

/// Re-derives every cap's validation loss from independent solves.
fn brute_choice(ens: &Ensemble, train: &Dataset, val: &Dataset, lo: usize, hi: usize) -> usize {
    let catalog = RuleCatalog::build(ens, train).unwrap();
    let mut best: Option<(usize, usize)> = None;
    for ell in lo..=hi {
        let p = build_partition_problem(&catalog, 0.5, ell).unwrap();
        let sol = solve_exact(&p, Budget::default(), None).unwrap();
        if !sol.is_feasible() {
            continue;
        }
        let rules: Vec<&Rule> = sol.selected.iter().map(|&j| &catalog.rules[j]).collect();
        let mut errors = 0;
        for i in 0..val.len() {
            let x = val.point(i);
            let hits: Vec<&&Rule> = rules
                .iter()
                .filter(|r| {
                    r.conditions.iter().all(|c| {
                        c.test(
                            x[match c.selector {
                                FeatureSelector::Axis(p) => p,
                                FeatureSelector::Shapelet(_) => unreachable!(),
                            }],
                        )
                    })
                })
                .collect();
            let pred = match hits.iter().map(|r| r.coverage).max() {
                Some(top) => hits.iter().find(|r| r.coverage == top).unwrap().prediction,
                None => fallback_prediction(train),
            };
            errors += usize::from(pred != val.target(i));
        }
        if best.is_none_or(|(_, e)| errors < e) {
            best = Some((ell, errors));
        }
    }
    best.unwrap().0
}

#[test]
fn validated_cap_matches_brute_force() {
    for seed in 0..6 {
        let train = blobs(36, 100 + seed);
        let val = blobs(24, 200 + seed);
        let ens = train_random_forest(&train, &CartParams::forest(4, 2, seed)).unwrap();
        let cfg = ExtractionConfig {
            ell: EllSelection::Validate {
                lo: None,
                hi: None,
                exact_bounds: true,
            },
            ..ExtractionConfig::default()
        };
        let catalog = RuleCatalog::build(&ens, &train).unwrap();
        let p = build_partition_problem(&catalog, 0.5, 1).unwrap();
        let lo = min_rules_bound(&p, Budget::default()).unwrap();
        let hi = max_rules_bound(&p, Budget::default()).unwrap();
        let model = validate_select(&ens, &train, &val, &cfg).unwrap();
        assert!((lo..=hi).contains(&model.ell_used));
        assert_eq!(model.ell_used, brute_choice(&ens, &train, &val, lo, hi));
    }
}

#[test]
fn collapsed_range_equals_fixed() {
    let ds = blobs(40, 5);
    let ens = train_random_forest(&ds, &CartParams::forest(5, 2, 3)).unwrap();
    let fixed = extract(&ens, &ds, &ExtractionConfig::fixed(4)).unwrap();
    let cfg = ExtractionConfig {
        ell: EllSelection::Validate {
            lo: Some(4),
            hi: Some(4),
            exact_bounds: false,
        },
        ..ExtractionConfig::default()
    };
    let ranged = validate_select(&ens, &ds, &ds, &cfg).unwrap();
    assert_eq!(fixed, ranged);
    let (extracted, report) = extract_with_report(&ens, &ds, &cfg).unwrap();
    assert_eq!(extracted, fixed);
    assert_eq!(report.ell_range, Some((4, 4)));
}

#[test]
fn validation_on_training_data_prefers_small_caps() {
    let ds = blobs(40, 6);
    let ens = train_random_forest(&ds, &CartParams::forest(5, 2, 8)).unwrap();
    let cfg = ExtractionConfig::default();
    let model = validate_select(&ens, &ds, &ds, &cfg).unwrap();
    let chosen = total_loss(&model, &ds);
    let catalog = RuleCatalog::build(&ens, &ds).unwrap();
    for ell in 1..model.ell_used {
        let p = build_partition_problem(&catalog, 0.5, ell).unwrap();
        let sol = solve_exact(&p, Budget::default(), None).unwrap();
        if sol.is_feasible() {
            let m = build_model(&ens, &ds, &catalog, &sol, 0.5, ell);
            assert!(total_loss(&m, &ds) > chosen);
        }
    }
}

#[test]
fn extraction_is_deterministic() {
    let ds = blobs(48, 7);
    let ens = train_random_forest(&ds, &CartParams::forest(8, 3, 2)).unwrap();
    let mut cfg = ExtractionConfig::default();
    cfg.cv_folds = Some(3);
    let a = extract(&ens, &ds, &cfg).unwrap();
    let b = extract(&ens, &ds, &cfg).unwrap();
    assert_eq!(a, b);
    cfg.cv_folds = None;
    let c = extract(&ens, &ds, &cfg).unwrap();
    assert_eq!(c, extract(&ens, &ds, &cfg).unwrap());
}

#[test]
fn splits_are_stratified_and_disjoint() {
    let ds = blobs(40, 2);
    let (fit, val) = holdout_split(&ds, 0.25, 3);
    assert_eq!(fit.len() + val.len(), 40);
    assert_eq!(val.len(), 10);
    let ids = ds.class_ids().unwrap();
    assert_eq!(val.iter().filter(|&&i| ids[i] == 0).count(), 5);
    let folds = fold_assignment(&ds, 4, 1);
    for f in 0..4 {
        assert_eq!(folds.iter().filter(|&&g| g == f).count(), 10);
    }
}

#[test]
fn config_validation() {
    assert!(ExtractionConfig::fixed(0).validate().is_err());
    let mut c = ExtractionConfig::default();
    c.lambda = 1.2;
    assert!(c.validate().is_err());
    let mut c = ExtractionConfig::default();
    c.ell = EllSelection::Validate {
        lo: Some(5),
        hi: Some(3),
        exact_bounds: true,
    };
    assert!(c.validate().is_err());
}
