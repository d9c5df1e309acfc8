//! Functional principal components for sparse curves.
//!
//! The covariance operator is discretised on the grid with trapezoid
//! weights `W`; eigenpairs come from the symmetric matrix `W^½ Ĝ W^½`, so
//! the recovered eigenfunctions are orthonormal in the weighted inner
//! product `⟨f, g⟩_w = Σ_g w_g f_g g_g`.
//!
//! Scores are the conditional expectations of the *uncentred* projections
//! `η_p = ⟨X, φ_p⟩` given a curve's sparse noisy observations. Their prior
//! mean is `γ_p = ⟨φ_p, μ⟩`, which is why [`reconstruct`] does not add the
//! mean back: it is already carried by the scores.

mod eigen;
mod mfpca;
mod pace;

use serde::{Deserialize, Serialize};

use crate::curvedata::SparseCurve;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::smoothing::{estimate_moments, SmoothingOptions};

pub use eigen::{eigendecompose, eigendecompose_moments, select_components, EigenSystem};
pub use mfpca::{fit_mfpca, mfpca_scores, reconstruct_joint, stack_scores, MfpcaModel};
pub use pace::{pace_score_matrix, pace_scores};

/// How many components to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentSelection {
    /// Smallest `P` whose fraction of variance explained reaches the cutoff.
    Fve(f64),
    Fixed(usize),
}

impl Default for ComponentSelection {
    fn default() -> Self {
        ComponentSelection::Fve(0.80)
    }
}

impl ComponentSelection {
    pub(crate) fn resolve(&self, eigenvalues: &[f64]) -> Result<usize> {
        match *self {
            ComponentSelection::Fve(cutoff) => select_components(eigenvalues, cutoff),
            ComponentSelection::Fixed(p) => {
                let positive = eigenvalues.iter().filter(|&&l| l > 0.0).count();
                if p == 0 || p > positive {
                    Err(Error::invalid(format!(
                        "fixed component count {p} must lie in 1..={positive}"
                    )))
                } else {
                    Ok(p)
                }
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FpcaOptions {
    pub selection: ComponentSelection,
    pub smoothing: SmoothingOptions,
    /// Cap on stored eigenpairs; `None` keeps every positive one.
    pub max_components: Option<usize>,
}

/// Fitted univariate FPCA for one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpcaModel {
    pub feature: String,
    pub grid: TimeGrid,
    pub mean: Vec<f64>,
    pub eig: EigenSystem,
    pub noise_var: f64,
    pub n_components: usize,
    pub gamma: Vec<f64>,
    /// Smoothing bandwidths used in the fit; 0 for hand-assembled models.
    pub bandwidth_mean: f64,
    pub bandwidth_cov: f64,
}

impl FpcaModel {
    /// Assemble a model from its parts, computing `γ` by quadrature.
    pub fn from_parts(
        feature: impl Into<String>,
        grid: TimeGrid,
        mean: Vec<f64>,
        eig: EigenSystem,
        noise_var: f64,
        n_components: usize,
    ) -> Result<Self> {
        if mean.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                context: "mean vs grid",
                expected: grid.len(),
                got: mean.len(),
            });
        }
        if n_components == 0 || n_components > eig.len() {
            return Err(Error::invalid(format!(
                "component count {n_components} must lie in 1..={}",
                eig.len()
            )));
        }
        let gamma = (0..n_components)
            .map(|p| grid.inner(&eig.eigenfunctions[p], &mean))
            .collect();
        Ok(FpcaModel {
            feature: feature.into(),
            grid,
            mean,
            eig,
            noise_var,
            n_components,
            gamma,
            bandwidth_mean: 0.0,
            bandwidth_cov: 0.0,
        })
    }

    /// The retained eigenfunctions `φ_1..φ_P` on the grid.
    pub fn basis(&self) -> &[Vec<f64>] {
        &self.eig.eigenfunctions[..self.n_components]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.eigenvalues[..self.n_components]
    }
}

/// Conditional scores for a set of subjects, one row per subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub subject_ids: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn n_rows(&self) -> usize {
        self.scores.len()
    }

    pub fn n_cols(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }
}

/// `X̃(t_g) = Σ_p score_p φ_p(t_g)` on the grid. The mean is not re-added.
pub fn reconstruct(scores: &[f64], model: &FpcaModel) -> Result<Vec<f64>> {
    if scores.len() != model.n_components {
        return Err(Error::DimensionMismatch {
            context: "reconstruction scores",
            expected: model.n_components,
            got: scores.len(),
        });
    }
    let mut out = vec![0.0; model.grid.len()];
    for (s, phi) in scores.iter().zip(model.basis()) {
        for (o, f) in out.iter_mut().zip(phi) {
            *o += s * f;
        }
    }
    Ok(out)
}

/// Curve estimate `μ̂ + Σ_p (score_p − γ_p) φ_p`.
///
/// Differs from [`reconstruct`] by the part of `μ̂` orthogonal to the
/// retained eigenfunctions; this is the estimate to compare against true
/// curves when the mean is not in the span of the basis.
pub fn reconstruct_with_mean(scores: &[f64], model: &FpcaModel) -> Result<Vec<f64>> {
    let centred: Vec<f64> = scores.iter().zip(&model.gamma).map(|(s, g)| s - g).collect();
    let mut out = reconstruct(&centred, model)?;
    for (o, m) in out.iter_mut().zip(&model.mean) {
        *o += m;
    }
    Ok(out)
}

/// Diagnostics from a univariate fit.
#[derive(Clone, Debug, Default)]
pub struct FitReport {
    pub warnings: Vec<String>,
}

/// Smooth moments, eigendecompose, select `P`, and score every curve.
pub fn fit_fpca(
    feature: &str,
    curves: &[&SparseCurve],
    subject_ids: &[String],
    grid: &TimeGrid,
    opts: &FpcaOptions,
) -> Result<(FpcaModel, ScoreMatrix, FitReport)> {
    if curves.len() < 2 {
        return Err(Error::invalid(format!(
            "FPCA needs at least 2 curves, got {}",
            curves.len()
        )));
    }
    if subject_ids.len() != curves.len() {
        return Err(Error::DimensionMismatch {
            context: "subject ids vs curves",
            expected: curves.len(),
            got: subject_ids.len(),
        });
    }
    let moments = estimate_moments(curves, grid, opts.smoothing)?;
    let max = opts.max_components.unwrap_or(grid.len());
    let eig = eigendecompose_moments(&moments, max)?;
    let p = opts.selection.resolve(&eig.eigenvalues)?;
    let mut model = FpcaModel::from_parts(feature, grid.clone(), moments.mean, eig, moments.noise_var, p)?;
    model.bandwidth_mean = moments.bandwidth_mean;
    model.bandwidth_cov = moments.bandwidth_cov;
    let scores = pace_score_matrix(curves, subject_ids, &model)?;
    Ok((
        model,
        scores,
        FitReport {
            warnings: moments.warnings,
        },
    ))
}
