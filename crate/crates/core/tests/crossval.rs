//! Cross-validation hygiene: no leakage, no order or thread dependence.

use funcnet::curvedata::FunctionalDataset;
use funcnet::eval::{crossvalidate, fit_fold, make_folds, CvMode, CvPlan};
use funcnet::funcnet::TrainConfig;
use funcnet::simgen::{generate, KlConfig};
use funcnet::PipelineConfig;

fn data(n: usize, seed: u64) -> FunctionalDataset {
    generate(&KlConfig {
        n_per_group: n,
        ..KlConfig::two_group(seed)
    })
    .unwrap()
    .dataset
}

fn config() -> PipelineConfig {
    PipelineConfig {
        train: TrainConfig {
            epochs: 150,
            seed: 4,
            ..TrainConfig::default()
        },
        ..PipelineConfig::default()
    }
}

/// Replace the curves and labels of `idx` with those of another dataset.
fn perturb(ds: &FunctionalDataset, other: &FunctionalDataset, idx: &[usize]) -> FunctionalDataset {
    let mut subjects = ds.subjects().to_vec();
    for &i in idx {
        subjects[i].curves = other.subjects()[i].curves.clone();
        subjects[i].response = 1.0 - subjects[i].response;
    }
    FunctionalDataset::new(ds.feature_names().to_vec(), subjects, ds.task(), ds.grid().clone()).unwrap()
}

#[test]
fn test_subjects_do_not_influence_the_fold_model() {
    let ds = data(40, 1);
    let other = data(40, 2);
    let folds = make_folds(&ds.subject_ids(), CvMode::KFold { k: 4, seed: 9 }).unwrap();
    for fold in &folds[..2] {
        let changed = perturb(&ds, &other, &fold.test);
        let a = fit_fold(&ds, &config(), &fold.train, 11).unwrap();
        let b = fit_fold(&changed, &config(), &fold.train, 11).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn report_predictions_ignore_perturbed_test_labels() {
    let ds = data(30, 5);
    let plan = CvPlan::new(CvMode::Holdout { fraction: 0.25, seed: 2 });
    let base = crossvalidate(&ds, &config(), plan).unwrap();
    let test = &make_folds(&ds.subject_ids(), plan.mode).unwrap()[0].test;
    let mut subjects = ds.subjects().to_vec();
    for &i in test {
        subjects[i].response = 1.0 - subjects[i].response;
    }
    let flipped = FunctionalDataset::new(ds.feature_names().to_vec(), subjects, ds.task(), ds.grid().clone()).unwrap();
    let other = crossvalidate(&flipped, &config(), plan).unwrap();
    let preds = |r: &funcnet::eval::CvReport| -> Vec<(String, f64)> {
        r.folds[0].predictions.iter().map(|(id, p, _)| (id.clone(), *p)).collect()
    };
    assert_eq!(preds(&base), preds(&other));
    let acc_a = base.folds[0].metrics.unwrap().primary();
    let acc_b = other.folds[0].metrics.unwrap().primary();
    assert!((acc_a + acc_b - 1.0).abs() < 1e-12);
}

#[test]
fn reordering_subjects_changes_nothing() {
    let ds = data(25, 6);
    let n = ds.n_subjects();
    let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
    let shuffled = ds.subset(&perm);
    let plan = CvPlan::new(CvMode::KFold { k: 3, seed: 1 });
    let a = crossvalidate(&ds, &config(), plan).unwrap();
    let b = crossvalidate(&shuffled, &config(), plan).unwrap();
    assert_eq!(a, b);
}

#[test]
fn thread_count_does_not_change_results() {
    let ds = data(20, 8);
    let plan = CvPlan::new(CvMode::KFold { k: 3, seed: 4 });
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| crossvalidate(&ds, &config(), plan).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&run(2)).unwrap());
}

#[test]
fn folds_partition_the_subjects() {
    let ds = data(23, 3);
    let ids = ds.subject_ids();
    for mode in [
        CvMode::KFold { k: 5, seed: 0 },
        CvMode::LeaveOneOut,
        CvMode::Holdout { fraction: 0.3, seed: 7 },
    ] {
        let folds = make_folds(&ids, mode).unwrap();
        let mut seen = vec![0usize; ids.len()];
        for f in &folds {
            assert_eq!(f.train.len() + f.test.len(), ids.len());
            assert!(f.test.iter().all(|i| !f.train.contains(i)));
            for &i in &f.test {
                seen[i] += 1;
            }
        }
        if !matches!(mode, CvMode::Holdout { .. }) {
            assert!(seen.iter().all(|&c| c == 1));
        }
    }
}

#[test]
fn no_refit_mode_shares_one_scorer() {
    let ds = data(20, 12);
    let plan = CvPlan {
        mode: CvMode::KFold { k: 2, seed: 3 },
        refit_fpca_per_fold: false,
    };
    let report = crossvalidate(&ds, &config(), plan).unwrap();
    assert_eq!(report.folds.len(), 2);
    assert!(report.aggregate.mean.is_finite());
}
