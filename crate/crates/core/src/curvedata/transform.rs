use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{FunctionalDataset, SparseCurve};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Piecewise-linear RUL target: `min(cap, linear_rul)`.
pub fn piecewise_rul_label(linear_rul: f64, cap: f64) -> f64 {
    linear_rul.min(cap)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }

    /// Constant features map to 0.5.
    pub fn scale(&self, z: f64) -> f64 {
        if self.is_degenerate() {
            0.5
        } else {
            (z - self.min) / (self.max - self.min)
        }
    }
}

/// Per-feature min/max recorded by [`minmax_normalize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationMap {
    pub features: Vec<FeatureRange>,
}

impl NormalizationMap {
    /// Apply the stored map to another dataset (e.g. a test split).
    pub fn apply(&self, ds: &FunctionalDataset) -> Result<FunctionalDataset> {
        if ds.n_features() != self.features.len() {
            return Err(Error::DimensionMismatch {
                context: "normalization features",
                expected: self.features.len(),
                got: ds.n_features(),
            });
        }
        let mut out = ds.clone();
        for s in out.subjects_mut() {
            self.apply_curves(&mut s.curves);
        }
        Ok(out)
    }

    pub fn apply_curves(&self, curves: &mut [SparseCurve]) {
        for (c, range) in curves.iter_mut().zip(&self.features) {
            for v in c.values_mut() {
                *v = range.scale(*v);
            }
        }
    }
}

/// Scale every feature to `[0, 1]` with its dataset-wide min and max.
pub fn minmax_normalize(ds: &FunctionalDataset) -> Result<(FunctionalDataset, NormalizationMap)> {
    let features = (0..ds.n_features())
        .map(|r| {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for c in ds.feature_curves(r) {
                for &v in c.values() {
                    min = min.min(v);
                    max = max.max(v);
                }
            }
            if min > max {
                return Err(Error::invalid(format!(
                    "feature `{}` has no observations",
                    ds.feature_names()[r]
                )));
            }
            Ok(FeatureRange { min, max })
        })
        .collect::<Result<Vec<_>>>()?;
    let map = NormalizationMap { features };
    Ok((map.apply(ds)?, map))
}

/// Number of points kept out of `m` at `fraction`; always at least one.
fn kept_count(m: usize, fraction: f64) -> usize {
    // tolerance absorbs products such as 0.3 * 10 = 3.0000000000000004
    let k = (fraction * m as f64 - 1e-9).ceil() as usize;
    k.clamp(1, m)
}

/// Indices kept from a curve of length `m`, sorted ascending.
///
/// A single seeded permutation is truncated, so the kept set grows
/// monotonically with `fraction` for a fixed seed.
fn kept_indices(m: usize, fraction: f64, keep_last: bool, rng: &mut impl rand::Rng) -> Vec<usize> {
    let k = kept_count(m, fraction);
    let mut idx: Vec<usize> = if keep_last {
        let mut perm: Vec<usize> = (0..m - 1).collect();
        perm.shuffle(rng);
        perm.truncate(k - 1);
        perm.push(m - 1);
        perm
    } else {
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(rng);
        perm.truncate(k);
        perm
    };
    idx.sort_unstable();
    idx
}

/// Randomly keep `⌈keep_fraction · M⌉` points of every curve.
///
/// Each (subject, feature) pair draws from its own substream of `seed`, so
/// sampled timestamps differ across features and subjects and the result
/// does not depend on iteration order.
pub fn sparsify(
    ds: &FunctionalDataset,
    keep_fraction: f64,
    seed: u64,
    keep_last: bool,
) -> Result<FunctionalDataset> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "keep_fraction must lie in (0, 1], got {keep_fraction}"
        )));
    }
    let mut out = ds.clone();
    for s in out.subjects_mut() {
        for (r, c) in s.curves.iter_mut().enumerate() {
            let mut rng = substream(seed, &["sparsify".into(), s.id.as_str().into(), r.into()]);
            let idx = kept_indices(c.len(), keep_fraction, keep_last, &mut rng);
            *c = c.select(&idx);
        }
    }
    Ok(out)
}
