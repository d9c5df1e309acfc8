//! Multivariate FPCA from univariate scores.
//!
//! Stack each subject's centred univariate scores across features, take
//! their sample covariance `Ξ` (blocks `Ξ^{(r r')}`), and eigendecompose
//! it. Eigenvector `c_p` split into per-feature blocks `[c_p]^{(r)}` gives
//! the joint eigenfunctions `φ̃_{r,p} = Σ_m [c_p]^{(r)}_m φ_{r,m}` and the
//! joint eigenvalues are the eigenvalues of `Ξ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::eigen::{fix_sign, sorted_symmetric_eigen};
use super::{ComponentSelection, FpcaModel, ScoreMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfpcaModel {
    pub features: Vec<FpcaModel>,
    pub score_means: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    pub joint_eigenvalues: Vec<f64>,
    /// `coeff_vectors[p]` is `c_p`, of length `P₊`.
    pub coeff_vectors: Vec<Vec<f64>>,
    /// `joint_eigenfunctions[p][r]` is `φ̃_{r,p}` on the grid.
    pub joint_eigenfunctions: Vec<Vec<Vec<f64>>>,
    pub n_joint: usize,
}

impl MfpcaModel {
    /// `P₊ = Σ_r P_r`.
    pub fn total_components(&self) -> usize {
        self.score_means.len()
    }

    /// Offsets of each feature's block inside a stacked score vector.
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.features.len() + 1);
        off.push(0);
        for f in &self.features {
            off.push(off.last().unwrap() + f.n_components);
        }
        off
    }
}

/// Concatenate per-feature score vectors for one subject.
pub fn stack_scores(per_feature: &[Vec<f64>]) -> Vec<f64> {
    per_feature.iter().flatten().copied().collect()
}

pub fn fit_mfpca(
    models: Vec<FpcaModel>,
    scores: &[ScoreMatrix],
    selection: ComponentSelection,
) -> Result<MfpcaModel> {
    if models.is_empty() || models.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            context: "feature models vs score matrices",
            expected: models.len(),
            got: scores.len(),
        });
    }
    let ids = &scores[0].subject_ids;
    for s in &scores[1..] {
        if &s.subject_ids != ids {
            return Err(Error::invalid(
                "score matrices disagree on the subject set or order",
            ));
        }
    }
    let n = ids.len();
    if n < 2 {
        return Err(Error::invalid("MFPCA needs at least 2 subjects"));
    }
    for (m, s) in models.iter().zip(scores) {
        if s.scores.iter().any(|row| row.len() != m.n_components) {
            return Err(Error::DimensionMismatch {
                context: "score columns vs model components",
                expected: m.n_components,
                got: s.n_cols(),
            });
        }
    }

    let stacked: Vec<Vec<f64>> = (0..n)
        .map(|i| scores.iter().flat_map(|s| s.scores[i].iter().copied()).collect())
        .collect();
    let p_plus = stacked[0].len();
    let means: Vec<f64> = (0..p_plus)
        .map(|k| stacked.iter().map(|row| row[k]).sum::<f64>() / n as f64)
        .collect();
    let mut xi = DMatrix::zeros(p_plus, p_plus);
    for row in &stacked {
        for a in 0..p_plus {
            let da = row[a] - means[a];
            for b in 0..p_plus {
                xi[(a, b)] += da * (row[b] - means[b]);
            }
        }
    }
    xi /= (n - 1) as f64;
    let xi = (&xi + xi.transpose()) * 0.5;

    let (values, vectors) = sorted_symmetric_eigen(xi.clone());
    let joint_eigenvalues: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let coeff_vectors: Vec<Vec<f64>> = vectors
        .into_iter()
        .map(|mut v| {
            fix_sign(&mut v);
            v
        })
        .collect();

    let mut offsets = vec![0usize];
    for m in &models {
        offsets.push(offsets.last().unwrap() + m.n_components);
    }
    let joint_eigenfunctions = coeff_vectors
        .iter()
        .map(|c| {
            models
                .iter()
                .enumerate()
                .map(|(r, m)| {
                    let mut f = vec![0.0; m.grid.len()];
                    for (k, phi) in m.basis().iter().enumerate() {
                        let coef = c[offsets[r] + k];
                        for (o, v) in f.iter_mut().zip(phi) {
                            *o += coef * v;
                        }
                    }
                    f
                })
                .collect()
        })
        .collect();

    let n_joint = selection.resolve(&joint_eigenvalues)?;
    Ok(MfpcaModel {
        features: models,
        score_means: means,
        xi: (0..p_plus).map(|a| xi.row(a).iter().copied().collect()).collect(),
        joint_eigenvalues,
        coeff_vectors,
        joint_eigenfunctions,
        n_joint,
    })
}

/// Joint scores `s̃_p = c_pᵀ (ŝ − mean)` for `p < n_joint`.
pub fn mfpca_scores(stacked: &[f64], model: &MfpcaModel) -> Result<Vec<f64>> {
    if stacked.len() != model.total_components() {
        return Err(Error::DimensionMismatch {
            context: "stacked univariate scores",
            expected: model.total_components(),
            got: stacked.len(),
        });
    }
    Ok(model.coeff_vectors[..model.n_joint]
        .iter()
        .map(|c| {
            c.iter()
                .zip(stacked.iter().zip(&model.score_means))
                .map(|(ck, (s, m))| ck * (s - m))
                .sum()
        })
        .collect())
}

/// Per-feature curves `Σ_p s̃_p φ̃_{r,p} + Σ_m mean_{r,m} φ_{r,m}`.
pub fn reconstruct_joint(joint_scores: &[f64], model: &MfpcaModel) -> Result<Vec<Vec<f64>>> {
    if joint_scores.len() != model.n_joint {
        return Err(Error::DimensionMismatch {
            context: "joint scores",
            expected: model.n_joint,
            got: joint_scores.len(),
        });
    }
    let offsets = model.block_offsets();
    Ok(model
        .features
        .iter()
        .enumerate()
        .map(|(r, m)| {
            let mut f = vec![0.0; m.grid.len()];
            for (k, phi) in m.basis().iter().enumerate() {
                let mu = model.score_means[offsets[r] + k];
                for (o, v) in f.iter_mut().zip(phi) {
                    *o += mu * v;
                }
            }
            for (s, funcs) in joint_scores.iter().zip(&model.joint_eigenfunctions) {
                for (o, v) in f.iter_mut().zip(&funcs[r]) {
                    *o += s * v;
                }
            }
            f
        })
        .collect())
}
