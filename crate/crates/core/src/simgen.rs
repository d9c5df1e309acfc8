//! Karhunen–Loève synthetic curves.
//!
//! Subject `i` of group `g` is `X(t) = μ_g(t) + Σ_p ξ_p φ_p(t)` with
//! `φ_p(t) = √2 sin(pπt)` and `ξ_p ~ N(0, λ_p)`, observed at `M` sorted
//! uniform times with additive `N(0, σ²)` noise.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvedata::{write_err, FunctionalDataset, SparseCurve, Subject, Task};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::substream;

/// `a · sin(b π t) + c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFunction {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl MeanFunction {
    pub fn sine(a: f64, b: f64) -> Self {
        MeanFunction { a, b, c: 0.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.a * (self.b * PI * t).sin() + self.c
    }
}

/// `φ_p(t) = √2 sin(pπt)`, `p ≥ 1`.
pub fn sine_eigenfunction(p: usize, t: f64) -> f64 {
    SQRT_2 * (p as f64 * PI * t).sin()
}

/// What each subject's response is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ResponseSpec {
    /// The group index, as a 0/1 classification label (needs two groups).
    GroupLabel,
    /// `intercept + Σ_p weights_p ξ_p + N(0, noise_sd²)`, a regression target.
    Linear {
        weights: Vec<f64>,
        intercept: f64,
        noise_sd: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlConfig {
    pub groups: Vec<MeanFunction>,
    pub eigenvalues: Vec<f64>,
    pub noise_sd: f64,
    pub n_per_group: usize,
    pub m_per_curve: usize,
    pub seed: u64,
    pub grid: TimeGrid,
    pub response: ResponseSpec,
}

impl KlConfig {
    /// Two groups with means `±sin(4πt)`, `λ = (0.1, 0.045, 0.01, 0.001)`,
    /// `σ = 0.3`, 300 subjects per group, 10 observations per curve.
    pub fn two_group(seed: u64) -> Self {
        KlConfig {
            groups: vec![MeanFunction::sine(1.0, 4.0), MeanFunction::sine(-1.0, 4.0)],
            eigenvalues: vec![0.1, 0.045, 0.01, 0.001],
            noise_sd: 0.3,
            n_per_group: 300,
            m_per_curve: 10,
            seed,
            grid: TimeGrid::unit(),
            response: ResponseSpec::GroupLabel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::invalid("need at least one group"));
        }
        if self.eigenvalues.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::invalid("eigenvalues must be finite and non-negative"));
        }
        if self.eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("eigenvalues must be non-increasing"));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::invalid("noise sd must be finite and non-negative"));
        }
        if self.m_per_curve == 0 || self.n_per_group == 0 {
            return Err(Error::invalid(
                "need at least one subject per group and one point per curve",
            ));
        }
        if self.grid.t0() != 0.0 || self.grid.t1() != 1.0 {
            return Err(Error::invalid("the synthetic domain is [0, 1]"));
        }
        match &self.response {
            ResponseSpec::GroupLabel if self.groups.len() != 2 => {
                Err(Error::invalid("group labels need exactly two groups"))
            }
            ResponseSpec::Linear {
                weights, noise_sd, ..
            } if weights.len() != self.eigenvalues.len() || !(*noise_sd >= 0.0) => Err(Error::invalid(
                "response weights must match the eigenvalues and the noise sd must be non-negative",
            )),
            _ => Ok(()),
        }
    }

    fn task(&self) -> Task {
        match self.response {
            ResponseSpec::GroupLabel => Task::BinaryClassification,
            ResponseSpec::Linear { .. } => Task::Regression,
        }
    }
}

/// Every random quantity behind a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub grid: TimeGrid,
    pub groups: Vec<usize>,
    /// True curve (mean included) on the grid, per subject.
    pub curves: Vec<Vec<f64>>,
    /// `ξ_{i,p}`.
    pub scores: Vec<Vec<f64>>,
    /// `ε_{i,j}` aligned with the observation times.
    pub noise: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Simulated {
    pub dataset: FunctionalDataset,
    pub truth: GroundTruth,
}

/// Feature name of the single generated curve.
pub const FEATURE: &str = "x";

struct Draw {
    subject: Subject,
    group: usize,
    curve: Vec<f64>,
    scores: Vec<f64>,
    noise: Vec<f64>,
}

/// True value of a subject's curve at `t`.
pub fn true_value(mean: &MeanFunction, scores: &[f64], t: f64) -> f64 {
    mean.eval(t)
        + scores
            .iter()
            .enumerate()
            .map(|(p, xi)| xi * sine_eigenfunction(p + 1, t))
            .sum::<f64>()
}

fn draw_subject(cfg: &KlConfig, g: usize, i: usize) -> Result<Draw> {
    let key = |role: &'static str| substream(cfg.seed, &["kl".into(), g.into(), i.into(), role.into()]);
    let mean = &cfg.groups[g];

    let mut rng = key("scores");
    let scores: Vec<f64> = cfg
        .eigenvalues
        .iter()
        .map(|l| l.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut rng = key("times");
    let mut times: Vec<f64> = Vec::with_capacity(cfg.m_per_curve);
    while times.len() < cfg.m_per_curve {
        let t: f64 = rng.gen();
        if !times.contains(&t) {
            times.push(t);
        }
    }
    times.sort_by(f64::total_cmp);

    let mut rng = key("noise");
    let noise: Vec<f64> = (0..cfg.m_per_curve)
        .map(|_| cfg.noise_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let values = times
        .iter()
        .zip(&noise)
        .map(|(&t, e)| true_value(mean, &scores, t) + e)
        .collect();
    let curve = cfg
        .grid
        .points()
        .iter()
        .map(|&t| true_value(mean, &scores, t))
        .collect();

    let response = match &cfg.response {
        ResponseSpec::GroupLabel => g as f64,
        ResponseSpec::Linear {
            weights,
            intercept,
            noise_sd,
        } => {
            let mut rng = key("response");
            intercept
                + weights.iter().zip(&scores).map(|(w, s)| w * s).sum::<f64>()
                + noise_sd * rng.sample::<f64, _>(StandardNormal)
        }
    };

    Ok(Draw {
        subject: Subject {
            id: format!("g{g}_{i:05}"),
            curves: vec![SparseCurve::new(times, values)?],
            response,
        },
        group: g,
        curve,
        scores,
        noise,
    })
}

/// Generate the dataset (groups in order, subjects in order) plus ground truth.
pub fn generate(cfg: &KlConfig) -> Result<Simulated> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.groups.len())
        .flat_map(|g| (0..cfg.n_per_group).map(move |i| (g, i)))
        .collect();
    let draws: Vec<Draw> = jobs
        .par_iter()
        .map(|&(g, i)| draw_subject(cfg, g, i))
        .collect::<Result<_>>()?;

    let mut truth = GroundTruth {
        grid: cfg.grid.clone(),
        groups: Vec::with_capacity(draws.len()),
        curves: Vec::with_capacity(draws.len()),
        scores: Vec::with_capacity(draws.len()),
        noise: Vec::with_capacity(draws.len()),
    };
    let mut subjects = Vec::with_capacity(draws.len());
    for d in draws {
        truth.groups.push(d.group);
        truth.curves.push(d.curve);
        truth.scores.push(d.scores);
        truth.noise.push(d.noise);
        subjects.push(d.subject);
    }
    let dataset = FunctionalDataset::new(
        vec![FEATURE.to_string()],
        subjects,
        cfg.task(),
        cfg.grid.clone(),
    )?;
    Ok(Simulated { dataset, truth })
}

/// Long CSV `subject,time,value` of the true curves on the grid.
pub fn write_truth_csv(sim: &Simulated, out: impl Write, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject", "time", "value"]).map_err(write_err(path))?;
    for (s, curve) in sim.dataset.subjects().iter().zip(&sim.truth.curves) {
        for (t, v) in sim.truth.grid.points().iter().zip(curve) {
            w.write_record([s.id.as_str(), &t.to_string(), &v.to_string()])
                .map_err(write_err(path))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// CSV `subject,group,xi1..xiP` of the true scores.
pub fn write_scores_csv(sim: &Simulated, out: impl Write, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let p = sim.truth.scores.first().map_or(0, Vec::len);
    let mut header = vec!["subject".to_string(), "group".to_string()];
    header.extend((1..=p).map(|k| format!("xi{k}")));
    w.write_record(&header).map_err(write_err(path))?;
    for ((s, g), xi) in sim
        .dataset
        .subjects()
        .iter()
        .zip(&sim.truth.groups)
        .zip(&sim.truth.scores)
    {
        let mut row = vec![s.id.clone(), g.to_string()];
        row.extend(xi.iter().map(f64::to_string));
        w.write_record(&row).map_err(write_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
