use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{FpcaModel, ScoreMatrix};
use crate::curvedata::SparseCurve;
use crate::error::{Error, Result};

const RIDGE_FRACTION: f64 = 1e-10;
const MAX_JITTER_STEPS: usize = 8;

/// Conditional expectation of the `P` projection scores given one curve.
///
/// `E[η | Z] = γ + Λ Φᵀ (Φ Λ Φᵀ + σ² I)⁻¹ (Z − μ)`, evaluated with a
/// Cholesky solve. When `σ²` is negligible against `λ_1` a ridge of
/// `1e-10·λ_1` keeps the system positive definite.
pub fn pace_scores(curve: &SparseCurve, model: &FpcaModel) -> Result<Vec<f64>> {
    let p = model.n_components;
    if p == 0 {
        return Err(Error::invalid("model has no components"));
    }
    let m = curve.len();
    let grid = &model.grid;
    let lambdas = model.eigenvalues();
    let basis = model.basis();

    let mut phi = DMatrix::zeros(m, p);
    let mut resid = DVector::zeros(m);
    for (j, (&t, &z)) in curve.times().iter().zip(curve.values()).enumerate() {
        resid[j] = z - grid.interpolate(&model.mean, t)?;
        for k in 0..p {
            phi[(j, k)] = grid.interpolate(&basis[k], t)?;
        }
    }

    let lambda1 = lambdas[0];
    let mut noise = model.noise_var;
    if noise < RIDGE_FRACTION * lambda1 {
        noise += RIDGE_FRACTION * lambda1;
    }
    let scaled = DMatrix::from_fn(m, p, |j, k| phi[(j, k)] * lambdas[k]);
    let base = &scaled * phi.transpose();

    let mut jitter = 0.0;
    for _ in 0..=MAX_JITTER_STEPS {
        let mut sigma = base.clone();
        for j in 0..m {
            sigma[(j, j)] += noise + jitter;
        }
        if let Some(chol) = sigma.cholesky() {
            let x = chol.solve(&resid);
            let proj = scaled.transpose() * x;
            return Ok((0..p).map(|k| model.gamma[k] + proj[k]).collect());
        }
        jitter = if jitter == 0.0 {
            RIDGE_FRACTION * lambda1.max(f64::MIN_POSITIVE)
        } else {
            jitter * 10.0
        };
    }
    Err(Error::NotPositiveDefinite {
        context: "PACE covariance",
        jitter,
    })
}

/// Scores for many curves; row order follows `subject_ids`.
pub fn pace_score_matrix(curves: &[&SparseCurve], subject_ids: &[String], model: &FpcaModel) -> Result<ScoreMatrix> {
    if curves.len() != subject_ids.len() {
        return Err(Error::DimensionMismatch {
            context: "subject ids vs curves",
            expected: curves.len(),
            got: subject_ids.len(),
        });
    }
    let scores = curves
        .par_iter()
        .map(|c| pace_scores(c, model))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreMatrix {
        subject_ids: subject_ids.to_vec(),
        scores,
    })
}
