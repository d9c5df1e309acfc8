use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equally spaced evaluation grid on `[t0, t1]` with trapezoid weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n: usize) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite()) || t1 <= t0 {
            return Err(Error::invalid(format!("grid needs t0 < t1, got [{t0}, {t1}]")));
        }
        if n < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 points, got {n}")));
        }
        let step = (t1 - t0) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|g| t0 + g as f64 * step).collect();
        points[n - 1] = t1;
        let mut weights = vec![step; n];
        weights[0] = step / 2.0;
        weights[n - 1] = step / 2.0;
        Ok(TimeGrid {
            t0,
            t1,
            points,
            weights,
        })
    }

    /// The unit interval with 101 points.
    pub fn unit() -> Self {
        TimeGrid::new(0.0, 1.0, 101).expect("valid default grid")
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn width(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn step(&self) -> f64 {
        self.width() / (self.len() - 1) as f64
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t1
    }

    /// Weighted inner product `Σ_g w_g a_g b_g`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.len());
        debug_assert_eq!(b.len(), self.len());
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    /// Trapezoid integral of grid values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Bracketing cell `(g, frac)` such that `t = (1-frac)·t_g + frac·t_{g+1}`.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !self.contains(t) {
            return Err(Error::OutOfDomain {
                time: t,
                t0: self.t0,
                t1: self.t1,
            });
        }
        let n = self.len();
        let pos = (t - self.t0) / self.step();
        let g = (pos.floor() as usize).min(n - 2);
        let frac = ((t - self.points[g]) / (self.points[g + 1] - self.points[g])).clamp(0.0, 1.0);
        Ok((g, frac))
    }

    /// Linear interpolation of grid `values` at `t`.
    pub fn interpolate(&self, values: &[f64], t: f64) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "grid interpolation",
                expected: self.len(),
                got: values.len(),
            });
        }
        let (g, frac) = self.locate(t)?;
        if frac == 0.0 {
            return Ok(values[g]);
        }
        if frac == 1.0 {
            return Ok(values[g + 1]);
        }
        Ok(values[g] + frac * (values[g + 1] - values[g]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_width() {
        for &(t0, t1, n) in &[(0.0, 1.0, 101), (-2.0, 3.5, 7), (10.0, 11.0, 2)] {
            let g = TimeGrid::new(t0, t1, n).unwrap();
            let s: f64 = g.weights().iter().sum();
            assert!((s - (t1 - t0)).abs() < 1e-12);
            assert!(g.points().windows(2).all(|w| w[1] > w[0]));
            assert_eq!(*g.points().last().unwrap(), t1);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(1.0, 1.0, 10).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn interpolation_hits_nodes_and_lines() {
        let g = TimeGrid::new(0.0, 2.0, 5).unwrap();
        let v: Vec<f64> = g.points().iter().map(|t| 3.0 * t - 1.0).collect();
        assert_eq!(g.interpolate(&v, 1.0).unwrap(), 2.0);
        assert_eq!(g.interpolate(&v, 2.0).unwrap(), 5.0);
        assert!((g.interpolate(&v, 0.7).unwrap() - 1.1).abs() < 1e-12);
        assert!(matches!(g.interpolate(&v, 2.01), Err(Error::OutOfDomain { .. })));
    }
}
