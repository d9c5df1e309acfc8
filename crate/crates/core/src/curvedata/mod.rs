//! Sparse multivariate functional data.
//!
//! A [`FunctionalDataset`] holds `N` subjects, each with one [`SparseCurve`]
//! per feature and a scalar response. Curves are irregular: every
//! subject/feature pair has its own timestamps, all inside the dataset's
//! [`TimeGrid`] domain.

mod cmapss;
mod csv_io;
mod transform;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

pub use cmapss::{load_cmapss, load_cmapss_test, CmapssOptions};
pub use csv_io::{
    load_long_csv, read_curves_csv, read_labels_csv, write_labels_csv, write_long_csv, CurveTable,
};
pub use transform::{minmax_normalize, piecewise_rul_label, sparsify, FeatureRange, NormalizationMap};
pub(crate) use csv_io::write_err;

/// Kind of scalar response attached to each subject.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryClassification,
}

impl Task {
    /// Classification when every label is exactly 0 or 1.
    pub fn infer(labels: impl IntoIterator<Item = f64>) -> Task {
        if labels.into_iter().all(|y| y == 0.0 || y == 1.0) {
            Task::BinaryClassification
        } else {
            Task::Regression
        }
    }
}

/// One subject × feature sequence of irregular observations.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCurve {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SparseCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "curve times/values",
                expected: times.len(),
                got: values.len(),
            });
        }
        if times.is_empty() {
            return Err(Error::invalid("curve needs at least one observation"));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("curve observations".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("curve times must be strictly increasing"));
        }
        Ok(SparseCurve { times, values })
    }

    /// Build from unsorted `(time, value)` pairs; duplicate times are rejected.
    pub fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (times, values) = pairs.into_iter().unzip();
        SparseCurve::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn select(&self, idx: &[usize]) -> SparseCurve {
        SparseCurve {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
        }
    }
}

/// A subject: its curves (indexed by feature) and response.
#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub id: String,
    pub curves: Vec<SparseCurve>,
    pub response: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalDataset {
    feature_names: Vec<String>,
    subjects: Vec<Subject>,
    task: Task,
    grid: TimeGrid,
}

impl FunctionalDataset {
    pub fn new(
        feature_names: Vec<String>,
        subjects: Vec<Subject>,
        task: Task,
        grid: TimeGrid,
    ) -> Result<Self> {
        if feature_names.is_empty() {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        let mut seen = HashSet::new();
        for s in &subjects {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate subject id `{}`", s.id)));
            }
            if s.curves.len() != feature_names.len() {
                return Err(Error::DimensionMismatch {
                    context: "curves per subject",
                    expected: feature_names.len(),
                    got: s.curves.len(),
                });
            }
            for c in &s.curves {
                if let Some(&t) = c.times().iter().find(|&&t| !grid.contains(t)) {
                    return Err(Error::OutOfDomain {
                        time: t,
                        t0: grid.t0(),
                        t1: grid.t1(),
                    });
                }
            }
            if !s.response.is_finite() {
                return Err(Error::NonFinite(format!("response of subject `{}`", s.id)));
            }
            if task == Task::BinaryClassification && s.response != 0.0 && s.response != 1.0 {
                return Err(Error::invalid(format!(
                    "classification label of subject `{}` must be 0 or 1, got {}",
                    s.id, s.response
                )));
            }
        }
        Ok(FunctionalDataset {
            feature_names,
            subjects,
            task,
            grid,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub(crate) fn subjects_mut(&mut self) -> &mut [Subject] {
        &mut self.subjects
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.id.clone()).collect()
    }

    pub fn responses(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.response).collect()
    }

    /// All curves of feature `r`, in subject order.
    pub fn feature_curves(&self, r: usize) -> Vec<&SparseCurve> {
        self.subjects.iter().map(|s| &s.curves[r]).collect()
    }

    /// Dataset restricted to the given subject indices (in that order).
    pub fn subset(&self, idx: &[usize]) -> FunctionalDataset {
        FunctionalDataset {
            feature_names: self.feature_names.clone(),
            subjects: idx.iter().map(|&i| self.subjects[i].clone()).collect(),
            task: self.task,
            grid: self.grid.clone(),
        }
    }

    pub fn total_observations(&self) -> usize {
        self.subjects
            .iter()
            .flat_map(|s| s.curves.iter())
            .map(SparseCurve::len)
            .sum()
    }
}
