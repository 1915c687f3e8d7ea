//! Quasi-random search and cross-validation on a small synthetic set.

use std::sync::OnceLock;

use hullgauge::dataset::{build_dataset, Dataset, DatasetSpec, SplitParams};
use hullgauge::eval::mean_average_precision;
use hullgauge::hyperopt::{
    cross_validate, quasi_random_search, trial_log_csv, Axis, CvData, SearchError, SearchSpace, SearchSummary,
};
use hullgauge::nn::NetworkSpec;
use hullgauge::training::TrainConfig;

fn dataset() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| {
        build_dataset(
            &DatasetSpec {
                n_images: 150,
                class_mix: [0.5, 0.3, 0.2],
                seed: 41,
                ..Default::default()
            },
            &SplitParams {
                k_folds: 3,
                ..Default::default()
            },
        )
        .unwrap()
    })
}

fn space(extra: Option<Axis>) -> SearchSpace {
    let mut axes = vec![Axis::log10("lr", 1e-3, 1e-1), Axis::linear("momentum", 0.8, 0.95)];
    axes.extend(extra);
    SearchSpace { axes }
}

fn sample_std(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[test]
fn axis_ignored_by_sgd_leaves_scores_unchanged() {
    let data = CvData::from_dataset(dataset()).unwrap();
    let base = TrainConfig::default();
    let spec = NetworkSpec::default();
    let plain = quasi_random_search(&space(None), &base, &spec, 3, 1, &data, 7).unwrap();
    let inert = quasi_random_search(
        &space(Some(Axis::linear("beta2", 0.9, 0.9999))),
        &base,
        &spec,
        3,
        1,
        &data,
        7,
    )
    .unwrap();
    assert_eq!(plain.len(), inert.len());
    for (a, b) in plain.iter().zip(&inert) {
        assert_eq!(a.trial, b.trial);
        assert_eq!(a.cv, b.cv);
    }
}

#[test]
fn search_is_deterministic_and_ranked() {
    let data = CvData::from_dataset(dataset()).unwrap();
    let run = || {
        quasi_random_search(
            &space(None),
            &TrainConfig::default(),
            &NetworkSpec::default(),
            4,
            1,
            &data,
            3,
        )
    };
    let a = run().unwrap();
    assert_eq!(a, run().unwrap());
    let mut trials: Vec<usize> = a.iter().map(|t| t.trial).collect();
    trials.sort_unstable();
    assert_eq!(trials, vec![1, 2, 3, 4]);
    for w in a.windows(2) {
        assert!(w[0].cv.map_mean >= w[1].cv.map_mean);
    }
    for t in &a {
        assert_eq!(t.sobol_index as usize, t.trial);
    }
}

#[test]
fn budget_of_one_evaluates_first_nonzero_point() {
    let data = CvData::from_dataset(dataset()).unwrap();
    let trials = quasi_random_search(
        &space(None),
        &TrainConfig::default(),
        &NetworkSpec::default(),
        1,
        1,
        &data,
        3,
    )
    .unwrap();
    assert_eq!(trials.len(), 1);
    let lr = trials[0].config.optimizer.lr;
    assert!((lr - 1e-2).abs() < 1e-15, "midpoint of the log axis, got {lr}");
    assert!((trials[0].config.optimizer.momentum - 0.875).abs() < 1e-15);
}

#[test]
fn empty_budget_is_rejected() {
    let data = CvData::from_dataset(dataset()).unwrap();
    let err = quasi_random_search(
        &space(None),
        &TrainConfig::default(),
        &NetworkSpec::default(),
        0,
        1,
        &data,
        3,
    )
    .unwrap_err();
    assert!(matches!(err, hullgauge::Error::Search(SearchError::EmptyBudget)));
}

#[test]
fn cross_validation_scores_every_image_once() {
    let ds = dataset();
    let data = CvData::from_dataset(ds).unwrap();
    let out = cross_validate(&TrainConfig::default(), &NetworkSpec::default(), &data, 2, 5, "m").unwrap();
    assert_eq!(out.states.len(), 3);
    let table = out.table.unwrap();
    assert_eq!(table.images(), data.ids.as_slice());
    let scores = table.model_scores(0);
    assert!(scores.iter().all(|s| s.is_finite()));

    let pooled = mean_average_precision(scores, &data.labels).unwrap().mean;
    assert!((pooled - out.summary.map_pooled).abs() <= 1e-12);
    let defined: Vec<f64> = out.summary.fold_maps.iter().flatten().copied().collect();
    assert_eq!(defined.len(), 3);
    let mean = defined.iter().sum::<f64>() / 3.0;
    assert!((mean - out.summary.map_mean).abs() <= 1e-12);
    assert!((sample_std(&defined) - out.summary.map_std.unwrap()).abs() <= 1e-12);

    // Each fold's network scores its held-out images exactly as recorded.
    for (fold, state) in out.states.iter().enumerate() {
        let held: Vec<usize> = (0..data.len()).filter(|&i| data.folds[i] == fold).collect();
        let tensors: Vec<Vec<f64>> = held.iter().map(|&i| data.images[i].to_tensor()).collect();
        let refs: Vec<&[f64]> = tensors.iter().map(|t| t.as_slice()).collect();
        let again = state.predict(&refs).unwrap();
        for (&i, s) in held.iter().zip(again) {
            assert_eq!(s, scores[i]);
        }
    }
}

#[test]
fn diverging_trial_is_logged_as_failed() {
    let data = CvData::from_dataset(dataset()).unwrap();
    let space = SearchSpace {
        axes: vec![Axis::log10("lr", 1e11, 1e13)],
    };
    let base = TrainConfig {
        batch_size: 4,
        ..TrainConfig::default()
    };
    let trials = quasi_random_search(&space, &base, &NetworkSpec::default(), 1, 1, &data, 3).unwrap();
    assert!(trials[0].cv.failed);
    assert_eq!(trials[0].cv.map_mean, f64::NEG_INFINITY);
    let log = trial_log_csv(&space, &trials);
    assert_eq!(log.lines().count(), 1 + 3);
    assert!(log.lines().skip(1).all(|l| l.ends_with(",-inf")));
    let summary = SearchSummary::new(&space, &trials, 1, 3);
    assert!(summary.ranked[0].failed);
    assert_eq!(summary.ranked[0].map_mean, None);
}

#[test]
fn trial_log_has_one_row_per_trial_and_fold() {
    let data = CvData::from_dataset(dataset()).unwrap();
    let sp = space(None);
    let trials = quasi_random_search(&sp, &TrainConfig::default(), &NetworkSpec::default(), 2, 1, &data, 3).unwrap();
    let log = trial_log_csv(&sp, &trials);
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("trial,sobol_index,lr,momentum,fold,map"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2 * 3);
    assert_eq!(rows[0][0], "1");
    assert_eq!(rows[5][0], "2");
    assert_eq!(rows[5][4], "2");
}
