//! Metrics and cross-validation.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvedata::{write_err, FunctionalDataset, Task};
use crate::error::{Error, Result};
use crate::funcnet::Prediction;
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::rng::{child_seed, sha256_hex};

pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            context: "predictions vs truths",
            expected: truths.len(),
            got: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::invalid("RMSE of an empty set"));
    }
    let mse = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / truths.len() as f64;
    Ok(mse.sqrt())
}

/// Confusion counts with label 1 as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub rmse: Option<f64>,
    pub accuracy: Option<f64>,
    pub confusion: Option<Confusion>,
}

impl Metrics {
    /// The headline number: accuracy for classification, RMSE otherwise.
    pub fn primary(&self) -> f64 {
        self.accuracy.or(self.rmse).unwrap_or(f64::NAN)
    }
}

/// Threshold probabilities (`≥ threshold` is positive) and tally.
pub fn classification_metrics(probs: &[f64], labels: &[f64], threshold: f64) -> Result<Metrics> {
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "probabilities vs labels",
            expected: labels.len(),
            got: probs.len(),
        });
    }
    if probs.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    let mut c = Confusion::default();
    for (&p, &y) in probs.iter().zip(labels) {
        let pred = p >= threshold;
        match (pred, y) {
            (true, 1.0) => c.tp += 1,
            (true, 0.0) => c.fp += 1,
            (false, 1.0) => c.fn_ += 1,
            (false, 0.0) => c.tn += 1,
            _ => return Err(Error::invalid(format!("label {y} is not 0 or 1"))),
        }
    }
    Ok(Metrics {
        n: c.total(),
        rmse: None,
        accuracy: Some(c.accuracy()),
        confusion: Some(c),
    })
}

pub fn regression_metrics(predictions: &[f64], truths: &[f64]) -> Result<Metrics> {
    Ok(Metrics {
        n: truths.len(),
        rmse: Some(rmse(predictions, truths)?),
        accuracy: None,
        confusion: None,
    })
}

pub fn metrics_for(task: Task, predictions: &[Prediction], truths: &[f64]) -> Result<Metrics> {
    let values: Vec<f64> = predictions.iter().map(|p| p.value).collect();
    match task {
        Task::Regression => regression_metrics(&values, truths),
        Task::BinaryClassification => classification_metrics(&values, truths, 0.5),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CvMode {
    Holdout { fraction: f64, seed: u64 },
    KFold { k: usize, seed: u64 },
    LeaveOneOut,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub mode: CvMode,
    /// Re-estimate FPCA on each training fold; off reuses one fit on all subjects.
    pub refit_fpca_per_fold: bool,
}

impl CvPlan {
    pub fn new(mode: CvMode) -> Self {
        CvPlan {
            mode,
            refit_fpca_per_fold: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Subject order key: hash of the seed and id, so splits ignore input order.
fn shuffle_key(seed: u64, id: &str) -> String {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(id.as_bytes());
    sha256_hex(&bytes)
}

fn by_id(ids: &[String], mut idx: Vec<usize>) -> Vec<usize> {
    idx.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    idx
}

/// Partition subject indices into folds. Index lists are sorted by subject id.
pub fn make_folds(ids: &[String], mode: CvMode) -> Result<Vec<Fold>> {
    let n = ids.len();
    if n < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 subjects"));
    }
    let shuffled = |seed: u64| {
        let mut order: Vec<(String, usize)> = ids.iter().enumerate().map(|(i, id)| (shuffle_key(seed, id), i)).collect();
        order.sort();
        order.into_iter().map(|(_, i)| i).collect::<Vec<_>>()
    };
    let folds = match mode {
        CvMode::Holdout { fraction, seed } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::invalid(format!("holdout fraction must lie in (0, 1), got {fraction}")));
            }
            let n_test = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
            let order = shuffled(seed);
            vec![Fold {
                train: by_id(ids, order[n_test..].to_vec()),
                test: by_id(ids, order[..n_test].to_vec()),
            }]
        }
        CvMode::KFold { k, seed } => {
            if k < 2 || k > n {
                return Err(Error::invalid(format!("k must lie in 2..={n}, got {k}")));
            }
            let order = shuffled(seed);
            (0..k)
                .map(|f| {
                    let pick = |in_test: bool| {
                        order
                            .iter()
                            .enumerate()
                            .filter(|(pos, _)| (pos % k == f) == in_test)
                            .map(|(_, &i)| i)
                            .collect()
                    };
                    Fold {
                        train: by_id(ids, pick(false)),
                        test: by_id(ids, pick(true)),
                    }
                })
                .collect()
        }
        CvMode::LeaveOneOut => {
            if n > 200 {
                log::warn!("leave-one-out over {n} subjects fits {n} pipelines; expect a long run");
            }
            by_id(ids, (0..n).collect())
                .into_iter()
                .map(|i| Fold {
                    train: by_id(ids, (0..n).filter(|&j| j != i).collect()),
                    test: vec![i],
                })
                .collect()
        }
    };
    Ok(folds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub index: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub metrics: Option<Metrics>,
    pub skipped: Option<String>,
    pub predictions: Vec<(String, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub metric: String,
    pub n_folds: usize,
    pub mean: f64,
    /// Sample standard deviation across folds (0 for a single fold).
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub plan: CvPlan,
    pub folds: Vec<FoldResult>,
    pub aggregate: Aggregate,
    /// Metrics over all test predictions pooled.
    pub pooled: Option<Metrics>,
    pub warnings: Vec<String>,
}

/// Fit the pipeline on the training subjects of a fold, seeded for that fold.
pub fn fit_fold(ds: &FunctionalDataset, config: &PipelineConfig, train: &[usize], seed: u64) -> Result<Pipeline> {
    let mut cfg = config.clone();
    cfg.train.seed = seed;
    Pipeline::fit(&ds.subset(train), &cfg)
}

fn single_class(ds: &FunctionalDataset, idx: &[usize]) -> bool {
    ds.task() == Task::BinaryClassification && {
        let first = ds.subjects()[idx[0]].response;
        idx.iter().all(|&i| ds.subjects()[i].response == first)
    }
}

pub fn crossvalidate(ds: &FunctionalDataset, config: &PipelineConfig, plan: CvPlan) -> Result<CvReport> {
    let ids = ds.subject_ids();
    let folds = make_folds(&ids, plan.mode)?;
    let master = config.train.seed;
    let shared = if plan.refit_fpca_per_fold {
        None
    } else {
        Some(Pipeline::fit(&ds.subset(&by_id(&ids, (0..ds.n_subjects()).collect())), config)?)
    };

    let results: Vec<Result<FoldResult>> = folds
        .par_iter()
        .enumerate()
        .map(|(index, fold)| {
            let seed = child_seed(master, &["fold".into(), index.into()]);
            let mut res = FoldResult {
                index,
                n_train: fold.train.len(),
                n_test: fold.test.len(),
                seed,
                metrics: None,
                skipped: None,
                predictions: Vec::new(),
            };
            if single_class(ds, &fold.train) {
                res.skipped = Some("training fold contains a single class".into());
                return Ok(res);
            }
            let test = ds.subset(&fold.test);
            let preds = match &shared {
                None => fit_fold(ds, config, &fold.train, seed)?.predict(&test)?,
                Some(full) => {
                    let mut cfg = config.clone();
                    cfg.train.seed = seed;
                    Pipeline::fit_with_scorer(&ds.subset(&fold.train), full.scorer.clone(), &cfg)?.predict(&test)?
                }
            };
            let truths = test.responses();
            res.metrics = Some(metrics_for(ds.task(), &preds, &truths)?);
            res.predictions = test
                .subjects()
                .iter()
                .zip(&preds)
                .map(|(s, p)| (s.id.clone(), p.value, s.response))
                .collect();
            Ok(res)
        })
        .collect();
    let folds: Vec<FoldResult> = results.into_iter().collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    for f in &folds {
        if let Some(why) = &f.skipped {
            let w = format!("fold {} skipped: {why}", f.index);
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    let values: Vec<f64> = folds.iter().filter_map(|f| f.metrics.map(|m| m.primary())).collect();
    if values.is_empty() {
        return Err(Error::invalid("every fold was skipped"));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let (pv, pt): (Vec<f64>, Vec<f64>) = folds
        .iter()
        .flat_map(|f| f.predictions.iter().map(|(_, p, t)| (*p, *t)))
        .unzip();
    let pooled = match ds.task() {
        Task::Regression => regression_metrics(&pv, &pt).ok(),
        Task::BinaryClassification => classification_metrics(&pv, &pt, 0.5).ok(),
    };
    Ok(CvReport {
        plan,
        folds,
        aggregate: Aggregate {
            metric: match ds.task() {
                Task::Regression => "rmse",
                Task::BinaryClassification => "accuracy",
            }
            .to_string(),
            n_folds: values.len(),
            mean,
            sd,
        },
        pooled,
        warnings,
    })
}

/// CSV `fold,n_train,n_test,metric,value,status` plus an aggregate row.
pub fn write_cv_csv(report: &CvReport, out: impl Write, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = write_err(path);
    w.write_record(["fold", "n_train", "n_test", "metric", "value", "status"])
        .map_err(&err)?;
    let metric = report.aggregate.metric.as_str();
    for f in &report.folds {
        let value = f.metrics.map(|m| m.primary().to_string()).unwrap_or_default();
        let status = f.skipped.as_deref().unwrap_or("ok");
        w.write_record([
            f.index.to_string(),
            f.n_train.to_string(),
            f.n_test.to_string(),
            metric.to_string(),
            value,
            status.to_string(),
        ])
        .map_err(&err)?;
    }
    let a = &report.aggregate;
    w.write_record([
        "mean".to_string(),
        String::new(),
        String::new(),
        metric.to_string(),
        a.mean.to_string(),
        format!("sd={}", a.sd),
    ])
    .map_err(&err)?;
    w.flush().map_err(|e| Error::io(path, e))
}
