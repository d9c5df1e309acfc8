//! Per-curve interpolation baselines and the shared RMSE metric.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curvedata::SparseCurve;
use crate::error::{Error, Result};
use crate::fpca::{pace_scores, reconstruct_with_mean, FpcaModel};
use crate::grid::TimeGrid;

/// Natural cubic spline through the observations, evaluated on the grid.
///
/// Outside `[T_1, T_M]` the spline is held at the nearest end value. A
/// single observation yields a constant curve.
pub fn spline_interp(curve: &SparseCurve, grid: &TimeGrid) -> Result<Vec<f64>> {
    let x = curve.times();
    let y = curve.values();
    if x.is_empty() {
        return Err(Error::invalid("cannot interpolate an empty curve"));
    }
    if x.len() == 1 {
        log::warn!("single observation: spline degrades to a constant");
        return Ok(vec![y[0]; grid.len()]);
    }
    let m = natural_second_derivatives(x, y);
    Ok(grid.points().iter().map(|&t| eval_spline(x, y, &m, t)).collect())
}

/// Second derivatives at the knots with `M_0 = M_n = 0`.
fn natural_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    // Thomas algorithm on the interior system.
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for i in 0..k {
        diag[i] = 2.0 * (h[i] + h[i + 1]);
        rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
    }
    for i in 1..k {
        let f = h[i] / diag[i - 1];
        diag[i] -= f * h[i];
        rhs[i] -= f * rhs[i - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for i in (0..k - 1).rev() {
        m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
    }
    m
}

fn eval_spline(x: &[f64], y: &[f64], m: &[f64], t: f64) -> f64 {
    let n = x.len();
    if t <= x[0] {
        return y[0];
    }
    if t >= x[n - 1] {
        return y[n - 1];
    }
    let i = x.partition_point(|&xi| xi <= t).saturating_sub(1).min(n - 2);
    let h = x[i + 1] - x[i];
    let a = (x[i + 1] - t) / h;
    let b = (t - x[i]) / h;
    a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpMode {
    Fixed,
    /// Leave-one-out search over 5 length scales × 5 signal variances × 3
    /// noise variances, scaled to the domain width and the curve's spread.
    #[default]
    GridSearch,
}

/// Squared-exponential GP regression settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
    pub mode: GpMode,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            length_scale: 0.1,
            signal_var: 1.0,
            noise_var: 0.01,
            mode: GpMode::GridSearch,
        }
    }
}

impl GpConfig {
    pub fn fixed(length_scale: f64, signal_var: f64, noise_var: f64) -> Self {
        GpConfig {
            length_scale,
            signal_var,
            noise_var,
            mode: GpMode::Fixed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.signal_var > 0.0 && self.noise_var >= 0.0)
            || !(self.length_scale.is_finite() && self.signal_var.is_finite() && self.noise_var.is_finite())
        {
            return Err(Error::invalid(format!(
                "GP needs length_scale > 0, signal_var > 0, noise_var >= 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

const JITTER_LADDER: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

fn se_kernel(a: f64, b: f64, ls: f64, sv: f64) -> f64 {
    let d = (a - b) / ls;
    sv * (-0.5 * d * d).exp()
}

/// Cholesky of `K + noise I`, adding jitter (relative to the signal
/// variance) until it succeeds.
fn factor(x: &[f64], cfg: &GpConfig) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        se_kernel(x[i], x[j], cfg.length_scale, cfg.signal_var) + if i == j { cfg.noise_var } else { 0.0 }
    });
    let mut last = 0.0;
    for rel in JITTER_LADDER {
        let jitter = rel * cfg.signal_var;
        last = jitter;
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(kj) {
            return Ok(ch);
        }
    }
    Err(Error::NotPositiveDefinite {
        context: "GP kernel matrix",
        jitter: last,
    })
}

/// Mean squared leave-one-out residual, `r_i = [K⁻¹y]_i / [K⁻¹]_ii`.
fn loo_error(x: &[f64], yc: &DVector<f64>, cfg: &GpConfig) -> Result<f64> {
    let ch = factor(x, cfg)?;
    let alpha = ch.solve(yc);
    let inv = ch.inverse();
    Ok((0..x.len())
        .map(|i| (alpha[i] / inv[(i, i)]).powi(2))
        .sum::<f64>()
        / x.len() as f64)
}

fn search_grid(x: &[f64], y: &[f64]) -> Vec<GpConfig> {
    let width = (x[x.len() - 1] - x[0]).max(f64::EPSILON);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).max(1e-8);
    let mut out = Vec::with_capacity(75);
    for ls in [0.05, 0.1, 0.2, 0.4, 0.8] {
        for sv in [0.25, 0.5, 1.0, 2.0, 4.0] {
            for nv in [0.01, 0.1, 0.5] {
                out.push(GpConfig::fixed(ls * width, sv * var, nv * var));
            }
        }
    }
    out
}

/// Hyperparameters that `gp_interp` would use for this curve.
pub fn gp_select(curve: &SparseCurve, cfg: &GpConfig) -> Result<GpConfig> {
    cfg.validate()?;
    let x = curve.times();
    let y = curve.values();
    if cfg.mode == GpMode::Fixed || x.len() < 3 {
        return Ok(GpConfig {
            mode: GpMode::Fixed,
            ..*cfg
        });
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - mean));
    let mut best: Option<(f64, GpConfig)> = None;
    for cand in search_grid(x, y) {
        let Ok(err) = loo_error(x, &yc, &cand) else { continue };
        if err.is_finite() && best.is_none_or(|(b, _)| err < b) {
            best = Some((err, cand));
        }
    }
    best.map(|(_, c)| c).ok_or(Error::NotPositiveDefinite {
        context: "GP hyperparameter search",
        jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

/// GP posterior mean on the grid, after centring by the sample mean.
pub fn gp_interp(curve: &SparseCurve, grid: &TimeGrid, cfg: &GpConfig) -> Result<Vec<f64>> {
    let x = curve.times();
    let y = curve.values();
    if x.is_empty() {
        return Err(Error::invalid("cannot interpolate an empty curve"));
    }
    let cfg = gp_select(curve, cfg)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - mean));
    let alpha = factor(x, &cfg)?.solve(&yc);
    Ok(grid
        .points()
        .iter()
        .map(|&t| {
            mean + x
                .iter()
                .zip(alpha.iter())
                .map(|(&xi, a)| a * se_kernel(t, xi, cfg.length_scale, cfg.signal_var))
                .sum::<f64>()
        })
        .collect())
}

/// PACE curve estimate `μ̂ + Σ (ŝ_p − γ_p) φ̂_p` on the model grid.
pub fn pace_interp(curve: &SparseCurve, model: &FpcaModel) -> Result<Vec<f64>> {
    reconstruct_with_mean(&pace_scores(curve, model)?, model)
}

/// Average over subjects of the per-subject grid RMSE.
pub fn interp_rmse(estimates: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "interpolation subjects",
            expected: truth.len(),
            got: estimates.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::invalid("no curves to compare"));
    }
    let mut total = 0.0;
    for (e, t) in estimates.iter().zip(truth) {
        if e.len() != t.len() || t.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "interpolation grid",
                expected: t.len(),
                got: e.len(),
            });
        }
        let mse = e.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / t.len() as f64;
        total += mse.sqrt();
    }
    Ok(total / truth.len() as f64)
}
