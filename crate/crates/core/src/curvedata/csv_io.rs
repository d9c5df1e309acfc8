//! Long-format CSV ingestion: `subject,feature,time,value` plus `subject,label`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{FunctionalDataset, SparseCurve, Subject, Task};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Curves read from a long CSV, before labels are attached.
#[derive(Clone, Debug)]
pub struct CurveTable {
    pub feature_names: Vec<String>,
    /// `(subject_id, curves by feature)` in order of first appearance.
    pub subjects: Vec<(String, Vec<SparseCurve>)>,
    /// Rows dropped because their time was outside the grid domain.
    pub rejected_rows: usize,
}

fn parse_f64(path: &Path, line: usize, field: &str, what: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("cannot parse {what} `{field}`"),
    })
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

/// Order feature labels numerically when they all parse as numbers, else lexically.
fn order_features(names: Vec<String>) -> Vec<String> {
    let mut names = names;
    if names.iter().all(|n| n.parse::<f64>().is_ok()) {
        names.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .total_cmp(&b.parse::<f64>().unwrap())
        });
    } else {
        names.sort();
    }
    names
}

/// Read a long CSV of observations. Rows outside `grid` are dropped and counted.
pub fn read_curves_csv(path: &Path, grid: &TimeGrid) -> Result<CurveTable> {
    let mut rdr = open_reader(path)?;
    check_header(path, &mut rdr, &["subject", "feature", "time", "value"])?;

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, BTreeMap<String, Vec<(f64, f64)>>> = HashMap::new();
    let mut features: Vec<String> = Vec::new();
    let mut rejected = 0usize;

    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if rec.len() != 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let subject = rec[0].to_string();
        let feature = rec[1].to_string();
        let time = parse_f64(path, line, &rec[2], "time")?;
        let value = parse_f64(path, line, &rec[3], "value")?;
        if !value.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("non-finite value `{}`", &rec[3]),
            });
        }
        if !grid.contains(time) {
            rejected += 1;
            continue;
        }
        if !features.contains(&feature) {
            features.push(feature.clone());
        }
        let per_subject = rows.entry(subject.clone()).or_insert_with(|| {
            order.push(subject.clone());
            BTreeMap::new()
        });
        per_subject.entry(feature).or_default().push((time, value));
    }

    if order.is_empty() {
        return Err(Error::invalid(format!(
            "{} contains no usable observations",
            path.display()
        )));
    }
    if rejected > 0 {
        log::warn!(
            "{}: {rejected} rows outside [{}, {}] rejected",
            path.display(),
            grid.t0(),
            grid.t1()
        );
    }

    let features = order_features(features);
    let mut subjects = Vec::with_capacity(order.len());
    for id in order {
        let mut per = rows.remove(&id).expect("subject recorded");
        let mut curves = Vec::with_capacity(features.len());
        for f in &features {
            let mut pairs = per.remove(f).ok_or_else(|| Error::MissingFeature {
                subject: id.clone(),
                feature: f.clone(),
            })?;
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::DuplicateObservation {
                    subject: id.clone(),
                    feature: f.clone(),
                    time: w[0].0,
                });
            }
            curves.push(SparseCurve::from_pairs(pairs)?);
        }
        subjects.push((id, curves));
    }

    Ok(CurveTable {
        feature_names: features,
        subjects,
        rejected_rows: rejected,
    })
}

/// Read `subject,label`.
pub fn read_labels_csv(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut rdr = open_reader(path)?;
    check_header(path, &mut rdr, &["subject", "label"])?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let y = parse_f64(path, line, &rec[1], "label")?;
        if out.insert(rec[0].to_string(), y).is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("subject `{}` labelled twice", &rec[0]),
            });
        }
    }
    Ok(out)
}

/// Load a labelled dataset. `task = None` infers the task from the labels.
pub fn load_long_csv(
    data: &Path,
    labels: &Path,
    grid: TimeGrid,
    task: Option<Task>,
) -> Result<FunctionalDataset> {
    let table = read_curves_csv(data, &grid)?;
    let labels = read_labels_csv(labels)?;
    let mut subjects = Vec::with_capacity(table.subjects.len());
    for (id, curves) in table.subjects {
        let response = *labels
            .get(&id)
            .ok_or_else(|| Error::MissingLabel(id.clone()))?;
        subjects.push(Subject {
            id,
            curves,
            response,
        });
    }
    let task = task.unwrap_or_else(|| Task::infer(subjects.iter().map(|s| s.response)));
    FunctionalDataset::new(table.feature_names, subjects, task, grid)
}

pub(crate) fn write_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e.to_string()))
}

/// Write observations in long format. Floats use shortest round-trip formatting.
pub fn write_long_csv(ds: &FunctionalDataset, out: impl Write, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = write_err(path);
    w.write_record(["subject", "feature", "time", "value"])
        .map_err(&err)?;
    for s in ds.subjects() {
        for (name, c) in ds.feature_names().iter().zip(&s.curves) {
            for (t, v) in c.times().iter().zip(c.values()) {
                w.write_record([s.id.as_str(), name, &t.to_string(), &v.to_string()])
                    .map_err(&err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_labels_csv(ds: &FunctionalDataset, out: impl Write, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = write_err(path);
    w.write_record(["subject", "label"]).map_err(&err)?;
    for s in ds.subjects() {
        w.write_record([s.id.as_str(), &s.response.to_string()])
            .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
