use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::smoothing::MomentEstimates;

/// Eigenvalues (non-increasing, positive) with eigenfunctions as grid rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<Vec<f64>>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Flip `v` so its largest-magnitude entry (earliest on ties) is positive.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Symmetric eigendecomposition sorted by decreasing eigenvalue.
pub(crate) fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let se = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
    let values = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| se.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (values, vectors)
}

/// Solve the weighted eigenproblem of a covariance surface on `grid`.
///
/// Non-positive eigenvalues (and numerically-zero ones below
/// `1e-12 · max|λ|`) are dropped together with their eigenfunctions.
pub fn eigendecompose(cov: &DMatrix<f64>, grid: &TimeGrid, max_components: usize) -> Result<EigenSystem> {
    let g = grid.len();
    if cov.nrows() != g || cov.ncols() != g {
        return Err(Error::DimensionMismatch {
            context: "covariance vs grid",
            expected: g,
            got: cov.nrows(),
        });
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance surface".into()));
    }
    if max_components > g {
        return Err(Error::invalid(format!(
            "max_components {max_components} exceeds grid size {g}"
        )));
    }
    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let mut b = DMatrix::from_fn(g, g, |r, c| sqrt_w[r] * cov[(r, c)] * sqrt_w[c]);
    // exact symmetry for the solver
    b = (&b + b.transpose()) * 0.5;
    let (values, vectors) = sorted_symmetric_eigen(b);
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;

    let mut eigenvalues = Vec::new();
    let mut eigenfunctions = Vec::new();
    for (lambda, v) in values.into_iter().zip(vectors) {
        if eigenvalues.len() == max_components || lambda <= tol {
            break;
        }
        let mut phi: Vec<f64> = v.iter().zip(&sqrt_w).map(|(x, s)| x / s).collect();
        fix_sign(&mut phi);
        eigenvalues.push(lambda);
        eigenfunctions.push(phi);
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenfunctions,
    })
}

pub fn eigendecompose_moments(moments: &MomentEstimates, max_components: usize) -> Result<EigenSystem> {
    eigendecompose(&moments.cov, &moments.grid, max_components)
}

/// Smallest `P` whose cumulative share of `Σ λ` reaches `cutoff`.
pub fn select_components(eigenvalues: &[f64], cutoff: f64) -> Result<usize> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::invalid(format!("FVE cutoff must lie in (0, 1), got {cutoff}")));
    }
    let total: f64 = eigenvalues.iter().map(|l| l.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::NoSignal);
    }
    let mut cum = 0.0;
    for (p, l) in eigenvalues.iter().enumerate() {
        cum += l.max(0.0);
        if cum / total >= cutoff - 1e-12 {
            return Ok(p + 1);
        }
    }
    Ok(eigenvalues.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn fve_examples() {
        let l = [0.1, 0.045, 0.01, 0.001];
        assert_eq!(select_components(&l, 0.80).unwrap(), 2);
        assert_eq!(select_components(&l, 0.99).unwrap(), 3);
        assert_eq!(select_components(&[1.0], 0.5).unwrap(), 1);
        assert!(matches!(select_components(&[0.0, 0.0], 0.8), Err(Error::NoSignal)));
        assert!(matches!(select_components(&[], 0.8), Err(Error::NoSignal)));
        assert!(select_components(&l, 1.0).is_err());
    }

    #[test]
    fn zero_covariance_has_no_components() {
        let grid = TimeGrid::new(0.0, 1.0, 11).unwrap();
        let eig = eigendecompose(&DMatrix::zeros(11, 11), &grid, 11).unwrap();
        assert!(eig.is_empty());
    }

    #[test]
    fn non_finite_covariance_is_rejected() {
        let grid = TimeGrid::new(0.0, 1.0, 3).unwrap();
        let mut c = DMatrix::zeros(3, 3);
        c[(1, 1)] = f64::NAN;
        assert!(matches!(eigendecompose(&c, &grid, 3), Err(Error::NonFinite(_))));
    }

    #[test]
    fn sign_convention() {
        let mut v = vec![0.1, -0.5, 0.5, 0.2];
        fix_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.5, -0.5, -0.2]);
        let mut w = vec![0.3, 0.1];
        fix_sign(&mut w);
        assert_eq!(w, vec![0.3, 0.1]);
    }

    #[test]
    fn recovered_functions_are_weighted_orthonormal() {
        let grid = TimeGrid::unit();
        let pts = grid.points();
        let cov = DMatrix::from_fn(grid.len(), grid.len(), |r, c| {
            let (s, t) = (pts[r], pts[c]);
            0.2 * (PI * s).sin() * (PI * t).sin() + 0.05 * (-(s - t).abs()).exp()
        });
        let eig = eigendecompose(&cov, &grid, 10).unwrap();
        assert_eq!(eig.len(), 10);
        assert!(eig.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        for p in 0..eig.len() {
            for q in 0..eig.len() {
                let ip = grid.inner(&eig.eigenfunctions[p], &eig.eigenfunctions[q]);
                let target = if p == q { 1.0 } else { 0.0 };
                assert!((ip - target).abs() < 1e-10);
            }
        }
    }
}
