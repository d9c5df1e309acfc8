use super::FunctionalNetwork;
use crate::error::{Error, Result};
use crate::fpca::{FpcaModel, MfpcaModel};
use crate::grid::TimeGrid;

/// Basis functions for the network inputs, materialised on a grid.
///
/// Input score `j` multiplies the vector-valued function `functions[j]`,
/// which has one grid vector per feature (`None` where it vanishes).
#[derive(Clone, Debug)]
pub struct QuadratureBasis {
    grid: TimeGrid,
    n_features: usize,
    functions: Vec<Vec<Option<Vec<f64>>>>,
}

impl QuadratureBasis {
    /// Per-feature eigenbases, stacked in feature order.
    pub fn univariate(models: &[FpcaModel]) -> Result<Self> {
        let grid = models
            .first()
            .ok_or_else(|| Error::invalid("no FPCA models"))?
            .grid
            .clone();
        let r_total = models.len();
        let mut functions = Vec::new();
        for (r, m) in models.iter().enumerate() {
            if m.grid != grid {
                return Err(Error::invalid("FPCA models use different grids"));
            }
            for phi in m.basis() {
                let mut f = vec![None; r_total];
                f[r] = Some(phi.clone());
                functions.push(f);
            }
        }
        Ok(QuadratureBasis {
            grid,
            n_features: r_total,
            functions,
        })
    }

    /// Joint eigenfunctions `φ̃_p`, one input per retained joint component.
    pub fn joint(model: &MfpcaModel) -> Result<Self> {
        let grid = model
            .features
            .first()
            .ok_or_else(|| Error::invalid("no FPCA models"))?
            .grid
            .clone();
        let functions = model.joint_eigenfunctions[..model.n_joint]
            .iter()
            .map(|blocks| blocks.iter().cloned().map(Some).collect())
            .collect();
        Ok(QuadratureBasis {
            grid,
            n_features: model.features.len(),
            functions,
        })
    }

    /// Build from explicit functions: `functions[j][r]` on `grid`.
    pub fn from_functions(grid: TimeGrid, functions: Vec<Vec<Option<Vec<f64>>>>) -> Result<Self> {
        let n_features = functions.first().map_or(0, Vec::len);
        for f in &functions {
            if f.len() != n_features {
                return Err(Error::invalid("basis functions disagree on feature count"));
            }
            for v in f.iter().flatten() {
                if v.len() != grid.len() {
                    return Err(Error::DimensionMismatch {
                        context: "basis function vs grid",
                        expected: grid.len(),
                        got: v.len(),
                    });
                }
            }
        }
        Ok(QuadratureBasis {
            grid,
            n_features,
            functions,
        })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `Σ_j coeffs_j · functions[j]`, one grid vector per feature.
    pub fn combine(&self, coeffs: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.grid.len()]; self.n_features];
        for (c, f) in coeffs.iter().zip(&self.functions) {
            for (o, v) in out.iter_mut().zip(f) {
                if let Some(v) = v {
                    for (a, b) in o.iter_mut().zip(v) {
                        *a += c * b;
                    }
                }
            }
        }
        out
    }
}

/// Forward pass with the functional integrals evaluated by trapezoid
/// quadrature on materialised weight functions and curves.
pub fn forward_quadrature(net: &FunctionalNetwork, basis: &QuadratureBasis, scores: &[f64]) -> Result<f64> {
    let n = net.n_inputs();
    if scores.len() != n {
        return Err(Error::DimensionMismatch {
            context: "network input scores",
            expected: n,
            got: scores.len(),
        });
    }
    if basis.len() != n {
        return Err(Error::DimensionMismatch {
            context: "quadrature basis size",
            expected: n,
            got: basis.len(),
        });
    }
    let curve = basis.combine(scores);
    let pre: Vec<f64> = net
        .functional
        .coeffs
        .iter()
        .zip(&net.functional.biases)
        .map(|(beta, b)| {
            let w = basis.combine(beta);
            b + w
                .iter()
                .zip(&curve)
                .map(|(wr, xr)| basis.grid.inner(wr, xr))
                .sum::<f64>()
        })
        .collect();
    Ok(net.forward_from_preactivation(&pre))
}
