//! C-MAPSS turbofan run-to-failure files.
//!
//! Each row is `unit cycle setting1 setting2 setting3 s1 .. s21`. Training
//! units run until failure, so the linear RUL at a cycle is
//! `last_cycle - cycle`. Every contiguous window of `window_len` cycles
//! becomes one subject whose 21 sensor curves live on times `j / (L - 1)`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{piecewise_rul_label, FunctionalDataset, SparseCurve, Subject, Task};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

pub const N_SENSORS: usize = 21;
const N_SETTINGS: usize = 3;

#[derive(Clone, Debug)]
pub struct CmapssOptions {
    pub window_len: usize,
    /// Piecewise RUL cap (the usual choice is 130 cycles).
    pub cap: f64,
    /// Center each sensor within its operating-condition cluster.
    pub detrend_conditions: bool,
    pub grid_points: usize,
}

impl Default for CmapssOptions {
    fn default() -> Self {
        CmapssOptions {
            window_len: 31,
            cap: 130.0,
            detrend_conditions: false,
            grid_points: 101,
        }
    }
}

#[derive(Clone, Debug)]
struct Row {
    cycle: u32,
    settings: [f64; N_SETTINGS],
    sensors: [f64; N_SENSORS],
}

fn parse_rows(path: &Path) -> Result<BTreeMap<u32, Vec<Row>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut units: BTreeMap<u32, Vec<Row>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if fields.len() < 2 + N_SETTINGS + N_SENSORS {
            return Err(perr(format!(
                "expected {} columns, found {}",
                2 + N_SETTINGS + N_SENSORS,
                fields.len()
            )));
        }
        let num = |k: usize| -> Result<f64> {
            fields[k]
                .parse::<f64>()
                .map_err(|_| perr(format!("bad number `{}` in column {}", fields[k], k + 1)))
        };
        let unit = num(0)? as u32;
        let cycle = num(1)? as u32;
        let mut settings = [0.0; N_SETTINGS];
        for (s, slot) in settings.iter_mut().enumerate() {
            *slot = num(2 + s)?;
        }
        let mut sensors = [0.0; N_SENSORS];
        for (s, slot) in sensors.iter_mut().enumerate() {
            *slot = num(2 + N_SETTINGS + s)?;
        }
        units.entry(unit).or_default().push(Row {
            cycle,
            settings,
            sensors,
        });
    }
    for rows in units.values_mut() {
        rows.sort_by_key(|r| r.cycle);
    }
    if units.is_empty() {
        return Err(Error::invalid(format!("{} has no rows", path.display())));
    }
    Ok(units)
}

fn condition_key(settings: &[f64; N_SETTINGS]) -> (i64, i64, i64) {
    (
        settings[0].round() as i64,
        (settings[1] * 100.0).round() as i64,
        settings[2].round() as i64,
    )
}

/// Replace each sensor value by its deviation from the condition-cluster mean,
/// shifted back by the global sensor mean.
fn detrend(units: &mut BTreeMap<u32, Vec<Row>>) {
    let mut sums: BTreeMap<(i64, i64, i64), ([f64; N_SENSORS], usize)> = BTreeMap::new();
    let mut global = [0.0; N_SENSORS];
    let mut n = 0usize;
    for r in units.values().flatten() {
        let e = sums
            .entry(condition_key(&r.settings))
            .or_insert(([0.0; N_SENSORS], 0));
        for s in 0..N_SENSORS {
            e.0[s] += r.sensors[s];
            global[s] += r.sensors[s];
        }
        e.1 += 1;
        n += 1;
    }
    for g in &mut global {
        *g /= n as f64;
    }
    for r in units.values_mut().flatten() {
        let (sum, cnt) = &sums[&condition_key(&r.settings)];
        for s in 0..N_SENSORS {
            r.sensors[s] = r.sensors[s] - sum[s] / *cnt as f64 + global[s];
        }
    }
}

fn window_subject(unit: u32, rows: &[Row], response: f64) -> Result<Subject> {
    let len = rows.len();
    let times: Vec<f64> = (0..len).map(|j| j as f64 / (len - 1) as f64).collect();
    let curves = (0..N_SENSORS)
        .map(|s| SparseCurve::new(times.clone(), rows.iter().map(|r| r.sensors[s]).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Subject {
        id: format!("u{unit}_c{}", rows[len - 1].cycle),
        curves,
        response,
    })
}

fn sensor_names() -> Vec<String> {
    (1..=N_SENSORS).map(|s| format!("s{s}")).collect()
}

fn prepare(path: &Path, opts: &CmapssOptions) -> Result<(BTreeMap<u32, Vec<Row>>, TimeGrid)> {
    if opts.window_len < 2 {
        return Err(Error::invalid("window_len must be at least 2"));
    }
    if opts.cap <= 0.0 {
        return Err(Error::invalid("RUL cap must be positive"));
    }
    let mut units = parse_rows(path)?;
    if opts.detrend_conditions {
        detrend(&mut units);
    }
    Ok((units, TimeGrid::new(0.0, 1.0, opts.grid_points)?))
}

/// Load a training file: all sliding windows, labelled by capped linear RUL.
///
/// Returns the dataset and the number of units skipped for being shorter
/// than the window.
pub fn load_cmapss(path: &Path, opts: &CmapssOptions) -> Result<(FunctionalDataset, usize)> {
    let (units, grid) = prepare(path, opts)?;
    let mut subjects = Vec::new();
    let mut skipped = 0usize;
    for (&unit, rows) in &units {
        if rows.len() < opts.window_len {
            skipped += 1;
            continue;
        }
        let last_cycle = rows[rows.len() - 1].cycle as f64;
        for w in rows.windows(opts.window_len) {
            let linear = last_cycle - w[w.len() - 1].cycle as f64;
            subjects.push(window_subject(unit, w, piecewise_rul_label(linear, opts.cap))?);
        }
    }
    if skipped > 0 {
        log::warn!(
            "{}: {skipped} units shorter than window {} skipped",
            path.display(),
            opts.window_len
        );
    }
    let ds = FunctionalDataset::new(sensor_names(), subjects, Task::Regression, grid)?;
    Ok((ds, skipped))
}

/// Load a test file: the last window of each unit, labelled by the truth
/// file (one RUL per line, in unit order).
pub fn load_cmapss_test(
    path: &Path,
    rul_path: &Path,
    opts: &CmapssOptions,
) -> Result<(FunctionalDataset, usize)> {
    let (units, grid) = prepare(path, opts)?;
    let text = fs::read_to_string(rul_path).map_err(|e| Error::io(rul_path, e))?;
    let truth: Vec<f64> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: rul_path.to_path_buf(),
                line: i + 1,
                message: format!("bad RUL `{}`", l.trim()),
            })
        })
        .collect::<Result<_>>()?;
    if truth.len() != units.len() {
        return Err(Error::DimensionMismatch {
            context: "RUL truth lines vs test units",
            expected: units.len(),
            got: truth.len(),
        });
    }
    let mut subjects = Vec::new();
    let mut skipped = 0usize;
    for ((&unit, rows), &rul) in units.iter().zip(&truth) {
        if rows.len() < opts.window_len {
            skipped += 1;
            continue;
        }
        let w = &rows[rows.len() - opts.window_len..];
        subjects.push(window_subject(unit, w, piecewise_rul_label(rul, opts.cap))?);
    }
    let ds = FunctionalDataset::new(sensor_names(), subjects, Task::Regression, grid)?;
    Ok((ds, skipped))
}
