//! Local-linear kernel smoothing of pooled sparse observations.
//!
//! Mean, covariance surface and noise variance are estimated from all
//! curves of one feature pooled together. The kernel is Gaussian
//! (`exp(-u²/2)`, unnormalised since the constant cancels).
//!
//! The covariance smoother never materialises the `Σ M_i(M_i - 1)` raw
//! products. Every weighted moment it needs is a sum over within-curve pairs
//! `j ≠ l` of terms that factor into a function of `T_j` times a function
//! of `T_l`, so each moment matrix is
//! `Σ_i p_i q_iᵀ − Σ_obs a_j b_jᵀ`: per-curve outer products minus the
//! excluded diagonal.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::curvedata::SparseCurve;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::{child_seed, Key};

const CV_FOLDS: u64 = 5;
const CV_LADDER: usize = 10;
const MIN_KERNEL_MASS: f64 = 3.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// 5-fold cross-validation over a geometric ladder.
    #[default]
    Auto,
    Fixed(f64),
}


#[derive(Clone, Debug)]
pub struct MeanFit {
    pub values: Vec<f64>,
    pub bandwidth: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct CovFit {
    pub cov: DMatrix<f64>,
    pub bandwidth: f64,
    pub warnings: Vec<String>,
}

/// Smoothed first and second moments of one feature.
#[derive(Clone, Debug)]
pub struct MomentEstimates {
    pub grid: TimeGrid,
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub noise_var: f64,
    pub bandwidth_mean: f64,
    pub bandwidth_cov: f64,
    pub warnings: Vec<String>,
}

#[inline]
fn kernel(u: f64) -> f64 {
    (-0.5 * u * u).exp()
}

/// Candidate bandwidths: geometric from two grid steps to half the domain.
pub fn bandwidth_ladder(grid: &TimeGrid) -> Vec<f64> {
    let lo = 2.0 * grid.step();
    let hi = grid.width() / 2.0;
    let hi = hi.max(lo);
    (0..CV_LADDER)
        .map(|k| lo * (hi / lo).powf(k as f64 / (CV_LADDER - 1) as f64))
        .collect()
}

/// Fold index of a curve, derived from its content so that reordering the
/// input does not change fold membership.
fn fold_of(curve: &SparseCurve) -> usize {
    let mut buf = String::with_capacity(curve.len() * 34);
    for (t, z) in curve.times().iter().zip(curve.values()) {
        buf.push_str(&format!("{:016x}{:016x}", t.to_bits(), z.to_bits()));
    }
    (child_seed(0, &[Key::Str("cv-fold"), Key::Str(&buf)]) % CV_FOLDS) as usize
}

/// Local-linear estimate at `t` from `(time, value)` points; returns the
/// estimate and the kernel mass `Σ K`.
fn local_linear_at(ts: &[f64], zs: &[f64], t: f64, h: f64) -> (f64, f64) {
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&ti, &zi) in ts.iter().zip(zs) {
        let d = ti - t;
        let w = kernel(d / h);
        s0 += w;
        s1 += w * d;
        s2 += w * d * d;
        t0 += w * zi;
        t1 += w * d * zi;
    }
    let det = s0 * s2 - s1 * s1;
    let est = if det > 1e-12 * s0 * s2 && det > 0.0 {
        (s2 * t0 - s1 * t1) / det
    } else if s0 > 0.0 {
        t0 / s0
    } else {
        f64::NAN
    };
    (est, s0)
}

/// Local-linear smooth of pooled points onto the grid.
pub fn local_linear_1d(ts: &[f64], zs: &[f64], at: &[f64], h: f64) -> (Vec<f64>, f64) {
    let mut min_mass = f64::INFINITY;
    let est = at
        .iter()
        .map(|&t| {
            let (e, m) = local_linear_at(ts, zs, t, h);
            min_mass = min_mass.min(m);
            e
        })
        .collect();
    (est, min_mass)
}

/// Fit with `h`, doubling it (up to the domain width) while some grid point
/// sees less than the minimum kernel mass.
fn with_mass_guard<T>(
    grid: &TimeGrid,
    h: f64,
    what: &str,
    warnings: &mut Vec<String>,
    mut fit: impl FnMut(f64) -> (T, f64),
) -> (T, f64) {
    let mut h = h;
    loop {
        let (out, mass) = fit(h);
        if mass >= MIN_KERNEL_MASS || h >= grid.width() {
            if mass < MIN_KERNEL_MASS {
                warnings.push(format!(
                    "{what}: kernel mass {mass:.3} below {MIN_KERNEL_MASS} even at bandwidth {h}"
                ));
            }
            return (out, h);
        }
        let next = (2.0 * h).min(grid.width());
        warnings.push(format!(
            "{what}: kernel mass {mass:.3} < {MIN_KERNEL_MASS} at bandwidth {h}, doubled to {next}"
        ));
        h = next;
    }
}

fn pooled(curves: &[&SparseCurve]) -> (Vec<f64>, Vec<f64>) {
    let ts = curves.iter().flat_map(|c| c.times().iter().copied()).collect();
    let zs = curves.iter().flat_map(|c| c.values().iter().copied()).collect();
    (ts, zs)
}

fn choose_mean_bandwidth(curves: &[&SparseCurve], grid: &TimeGrid) -> f64 {
    let folds: Vec<usize> = curves.iter().map(|c| fold_of(c)).collect();
    let ladder = bandwidth_ladder(grid);
    let scores: Vec<f64> = ladder
        .par_iter()
        .map(|&h| {
            let mut sse = 0.0;
            for f in 0..CV_FOLDS as usize {
                let train: Vec<&SparseCurve> = curves
                    .iter()
                    .zip(&folds)
                    .filter(|(_, &k)| k != f)
                    .map(|(c, _)| *c)
                    .collect();
                if train.is_empty() || train.len() == curves.len() {
                    continue;
                }
                let (ts, zs) = pooled(&train);
                let (fit, _) = local_linear_1d(&ts, &zs, grid.points(), h);
                for (c, _) in curves.iter().zip(&folds).filter(|(_, &k)| k == f) {
                    for (&t, &z) in c.times().iter().zip(c.values()) {
                        let p = grid.interpolate(&fit, t).unwrap_or(f64::NAN);
                        sse += (z - p) * (z - p);
                    }
                }
            }
            sse
        })
        .collect();
    pick_bandwidth(&ladder, &scores)
}

/// Smallest CV error; ties and non-finite scores resolve toward larger bandwidths.
fn pick_bandwidth(ladder: &[f64], scores: &[f64]) -> f64 {
    let mut best = (f64::INFINITY, *ladder.last().unwrap());
    for (&h, &s) in ladder.iter().zip(scores) {
        if s.is_finite() && s <= best.0 {
            best = (s, h);
        }
    }
    best.1
}

/// Estimate the mean function on the grid.
pub fn estimate_mean(curves: &[&SparseCurve], grid: &TimeGrid, bandwidth: Bandwidth) -> Result<MeanFit> {
    let n_points: usize = curves.iter().map(|c| c.len()).sum();
    if n_points < 5 {
        return Err(Error::invalid(format!(
            "mean smoothing needs at least 5 pooled points, got {n_points}"
        )));
    }
    let h0 = match bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(Error::invalid(format!("bandwidth must be positive, got {h}"))),
        Bandwidth::Auto => choose_mean_bandwidth(curves, grid),
    };
    let (ts, zs) = pooled(curves);
    let mut warnings = Vec::new();
    let (values, h) = with_mass_guard(grid, h0, "mean", &mut warnings, |h| {
        local_linear_1d(&ts, &zs, grid.points(), h)
    });
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("smoothed mean".into()));
    }
    Ok(MeanFit {
        values,
        bandwidth: h,
        warnings,
    })
}

/// Residuals `Z − μ̂(T)` with μ̂ linearly interpolated from the grid.
fn residuals(curves: &[&SparseCurve], mean: &[f64], grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    curves
        .iter()
        .map(|c| {
            c.times()
                .iter()
                .zip(c.values())
                .map(|(&t, &z)| Ok(z - grid.interpolate(mean, t)?))
                .collect()
        })
        .collect()
}

/// Additive pair-moment sums for a set of curves at one bandwidth.
#[derive(Clone)]
struct PairMoments {
    s00: DMatrix<f64>,
    s10: DMatrix<f64>,
    s20: DMatrix<f64>,
    s11: DMatrix<f64>,
    t00: DMatrix<f64>,
    t10: DMatrix<f64>,
}

impl PairMoments {
    fn zeros(g: usize) -> Self {
        let z = DMatrix::zeros(g, g);
        PairMoments {
            s00: z.clone(),
            s10: z.clone(),
            s20: z.clone(),
            s11: z.clone(),
            t00: z.clone(),
            t10: z,
        }
    }

    fn compute(times: &[&[f64]], resid: &[&[f64]], grid: &TimeGrid, h: f64) -> Self {
        let g = grid.len();
        let n_curves = times.len();
        let n_obs: usize = times.iter().map(|t| t.len()).sum();
        if n_obs == 0 {
            return PairMoments::zeros(g);
        }
        let pts = grid.points();

        // per-curve sums
        let mut p0 = DMatrix::<f64>::zeros(g, n_curves);
        let mut p1 = DMatrix::<f64>::zeros(g, n_curves);
        let mut p2 = DMatrix::<f64>::zeros(g, n_curves);
        let mut q0 = DMatrix::<f64>::zeros(g, n_curves);
        let mut q1 = DMatrix::<f64>::zeros(g, n_curves);
        // per-observation columns for the excluded diagonal j = l
        let mut a = DMatrix::zeros(g, n_obs);
        let mut ad = DMatrix::zeros(g, n_obs);
        let mut ad2 = DMatrix::zeros(g, n_obs);
        let mut ae2 = DMatrix::zeros(g, n_obs);
        let mut ade2 = DMatrix::zeros(g, n_obs);

        let mut col = 0;
        for (i, (ts, es)) in times.iter().zip(resid).enumerate() {
            for (&s, &e) in ts.iter().zip(es.iter()) {
                for (gi, &tg) in pts.iter().enumerate() {
                    let d = s - tg;
                    let w = kernel(d / h);
                    p0[(gi, i)] += w;
                    p1[(gi, i)] += w * d;
                    p2[(gi, i)] += w * d * d;
                    q0[(gi, i)] += w * e;
                    q1[(gi, i)] += w * d * e;
                    a[(gi, col)] = w;
                    ad[(gi, col)] = w * d;
                    ad2[(gi, col)] = w * d * d;
                    ae2[(gi, col)] = w * e * e;
                    ade2[(gi, col)] = w * d * e * e;
                }
                col += 1;
            }
        }

        PairMoments {
            s00: &p0 * p0.transpose() - &a * a.transpose(),
            s10: &p1 * p0.transpose() - &ad * a.transpose(),
            s20: &p2 * p0.transpose() - &ad2 * a.transpose(),
            s11: &p1 * p1.transpose() - &ad * ad.transpose(),
            t00: &q0 * q0.transpose() - &ae2 * a.transpose(),
            t10: &q1 * q0.transpose() - &ade2 * a.transpose(),
        }
    }

    fn minus(&self, other: &PairMoments) -> PairMoments {
        PairMoments {
            s00: &self.s00 - &other.s00,
            s10: &self.s10 - &other.s10,
            s20: &self.s20 - &other.s20,
            s11: &self.s11 - &other.s11,
            t00: &self.t00 - &other.t00,
            t10: &self.t10 - &other.t10,
        }
    }

    fn add_assign(&mut self, other: &PairMoments) {
        self.s00 += &other.s00;
        self.s10 += &other.s10;
        self.s20 += &other.s20;
        self.s11 += &other.s11;
        self.t00 += &other.t00;
        self.t10 += &other.t10;
    }

    /// Solve the 3×3 local-linear system at every grid cell.
    /// Returns the (unsymmetrised) surface and the minimum pair-kernel mass.
    fn solve(&self) -> (DMatrix<f64>, f64) {
        let g = self.s00.nrows();
        let mut out = DMatrix::zeros(g, g);
        let mut min_mass = f64::INFINITY;
        for r in 0..g {
            for c in 0..g {
                // axis 1 moments at (r, c); axis 2 moments are the transposes at (c, r)
                let s00 = self.s00[(r, c)];
                let s10 = self.s10[(r, c)];
                let s01 = self.s10[(c, r)];
                let s20 = self.s20[(r, c)];
                let s02 = self.s20[(c, r)];
                let s11 = self.s11[(r, c)];
                let t00 = self.t00[(r, c)];
                let t10 = self.t10[(r, c)];
                let t01 = self.t10[(c, r)];
                min_mass = min_mass.min(s00);
                let m = nalgebra::Matrix3::new(s00, s10, s01, s10, s20, s11, s01, s11, s02);
                let rhs = nalgebra::Vector3::new(t00, t10, t01);
                let det = m.determinant();
                let scale = s00 * s20 * s02;
                out[(r, c)] = if scale > 0.0 && det > 1e-12 * scale {
                    m.lu().solve(&rhs).map(|b| b[0]).unwrap_or(t00 / s00)
                } else if s00 > 0.0 {
                    t00 / s00
                } else {
                    f64::NAN
                };
            }
        }
        (out, min_mass)
    }
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Bilinear interpolation of a grid surface.
fn surface_at(grid: &TimeGrid, surf: &DMatrix<f64>, s: f64, t: f64) -> f64 {
    let (Ok((i, fs)), Ok((j, ft))) = (grid.locate(s), grid.locate(t)) else {
        return f64::NAN;
    };
    let v00 = surf[(i, j)];
    let v10 = surf[(i + 1, j)];
    let v01 = surf[(i, j + 1)];
    let v11 = surf[(i + 1, j + 1)];
    (1.0 - fs) * (1.0 - ft) * v00 + fs * (1.0 - ft) * v10 + (1.0 - fs) * ft * v01 + fs * ft * v11
}

fn choose_cov_bandwidth(times: &[&[f64]], resid: &[&[f64]], folds: &[usize], grid: &TimeGrid) -> f64 {
    let ladder = bandwidth_ladder(grid);
    let scores: Vec<f64> = ladder
        .par_iter()
        .map(|&h| {
            let per_fold: Vec<PairMoments> = (0..CV_FOLDS as usize)
                .map(|f| {
                    let (t, e): (Vec<&[f64]>, Vec<&[f64]>) = times
                        .iter()
                        .zip(resid)
                        .zip(folds)
                        .filter(|(_, &k)| k == f)
                        .map(|((t, e), _)| (*t, *e))
                        .unzip();
                    PairMoments::compute(&t, &e, grid, h)
                })
                .collect();
            let mut total = PairMoments::zeros(grid.len());
            for m in &per_fold {
                total.add_assign(m);
            }
            let mut sse = 0.0;
            for (f, held) in per_fold.iter().enumerate() {
                if held.s00.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let (surf, _) = total.minus(held).solve();
                let surf = symmetrize(&surf);
                for ((ts, es), _) in times.iter().zip(resid).zip(folds).filter(|(_, &k)| k == f) {
                    for j in 0..ts.len() {
                        for l in 0..ts.len() {
                            if j != l {
                                let r = es[j] * es[l] - surface_at(grid, &surf, ts[j], ts[l]);
                                sse += r * r;
                            }
                        }
                    }
                }
            }
            sse
        })
        .collect();
    pick_bandwidth(&ladder, &scores)
}

/// Smooth off-diagonal raw covariances onto grid × grid.
pub fn estimate_covariance(
    curves: &[&SparseCurve],
    mean: &[f64],
    grid: &TimeGrid,
    bandwidth: Bandwidth,
) -> Result<CovFit> {
    if mean.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            context: "mean vs grid",
            expected: grid.len(),
            got: mean.len(),
        });
    }
    if !curves.iter().any(|c| c.len() >= 2) {
        return Err(Error::Unidentifiable(
            "no curve has two or more observations, so there are no off-diagonal pairs".into(),
        ));
    }
    let resid = residuals(curves, mean, grid)?;
    let times: Vec<&[f64]> = curves.iter().map(|c| c.times()).collect();
    let resid_refs: Vec<&[f64]> = resid.iter().map(Vec::as_slice).collect();

    let h0 = match bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(Error::invalid(format!("bandwidth must be positive, got {h}"))),
        Bandwidth::Auto => {
            let folds: Vec<usize> = curves.iter().map(|c| fold_of(c)).collect();
            choose_cov_bandwidth(&times, &resid_refs, &folds, grid)
        }
    };

    let mut warnings = Vec::new();
    let (surf, h) = with_mass_guard(grid, h0, "covariance", &mut warnings, |h| {
        PairMoments::compute(&times, &resid_refs, grid, h).solve()
    });
    if surf.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("smoothed covariance".into()));
    }
    Ok(CovFit {
        cov: symmetrize(&surf),
        bandwidth: h,
        warnings,
    })
}

/// Noise variance from the gap between the smoothed raw variance `V̂(t)` and
/// the covariance diagonal, averaged over the middle half of the domain.
pub fn estimate_noise_var(
    curves: &[&SparseCurve],
    mean: &[f64],
    cov: &DMatrix<f64>,
    grid: &TimeGrid,
    bandwidth: f64,
) -> Result<f64> {
    let resid = residuals(curves, mean, grid)?;
    let ts: Vec<f64> = curves.iter().flat_map(|c| c.times().iter().copied()).collect();
    let sq: Vec<f64> = resid.iter().flatten().map(|e| e * e).collect();
    let mut warnings = Vec::new();
    let (v_hat, _) = with_mass_guard(grid, bandwidth, "variance", &mut warnings, |h| {
        local_linear_1d(&ts, &sq, grid.points(), h)
    });
    let gap: Vec<f64> = (0..grid.len()).map(|g| v_hat[g] - cov[(g, g)]).collect();
    Ok(middle_half_gap(grid, &gap, &v_hat))
}

/// `max(floor, (2/|T|)·∫_{middle half} gap)` with `floor = 1e-8·max V̂`.
fn middle_half_gap(grid: &TimeGrid, gap: &[f64], v_hat: &[f64]) -> f64 {
    let lo = grid.t0() + grid.width() / 4.0;
    let hi = grid.t1() - grid.width() / 4.0;
    let eps = 1e-12 * grid.width();
    let idx: Vec<usize> = (0..grid.len())
        .filter(|&g| grid.points()[g] >= lo - eps && grid.points()[g] <= hi + eps)
        .collect();
    let mut integral = 0.0;
    let mut length = 0.0;
    for w in idx.windows(2) {
        let dt = grid.points()[w[1]] - grid.points()[w[0]];
        integral += 0.5 * dt * (gap[w[0]] + gap[w[1]]);
        length += dt;
    }
    let avg = if length > 0.0 {
        integral / length
    } else {
        // grid too coarse for the window: fall back to the whole domain
        grid.integrate(gap) / grid.width()
    };
    let vmax = v_hat.iter().cloned().fold(0.0, f64::max);
    let floor = (1e-8 * vmax).max(f64::MIN_POSITIVE);
    if avg.is_finite() {
        avg.max(floor)
    } else {
        floor
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SmoothingOptions {
    pub mean: Bandwidth,
    pub cov: Bandwidth,
}

/// Mean, covariance and noise variance for one feature.
pub fn estimate_moments(
    curves: &[&SparseCurve],
    grid: &TimeGrid,
    opts: SmoothingOptions,
) -> Result<MomentEstimates> {
    let mean = estimate_mean(curves, grid, opts.mean)?;
    let cov = estimate_covariance(curves, &mean.values, grid, opts.cov)?;
    let noise_var = estimate_noise_var(curves, &mean.values, &cov.cov, grid, cov.bandwidth)?;
    let mut warnings = mean.warnings;
    warnings.extend(cov.warnings);
    Ok(MomentEstimates {
        grid: grid.clone(),
        mean: mean.values,
        cov: cov.cov,
        noise_var,
        bandwidth_mean: mean.bandwidth,
        bandwidth_cov: cov.bandwidth,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(ts: &[f64], f: impl Fn(f64) -> f64) -> SparseCurve {
        SparseCurve::new(ts.to_vec(), ts.iter().map(|&t| f(t)).collect()).unwrap()
    }

    fn lcg_times(seed: u64, m: usize) -> Vec<f64> {
        let mut x = seed;
        let mut out: Vec<f64> = (0..m)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    #[test]
    fn mean_reproduces_lines() {
        let grid = TimeGrid::new(0.0, 1.0, 51).unwrap();
        let curves: Vec<SparseCurve> = (0..20).map(|i| curve(&lcg_times(i, 6), |t| 2.0 * t + 1.0)).collect();
        let refs: Vec<&SparseCurve> = curves.iter().collect();
        for bw in [Bandwidth::Fixed(0.03), Bandwidth::Fixed(0.3), Bandwidth::Auto] {
            let fit = estimate_mean(&refs, &grid, bw).unwrap();
            for (m, t) in fit.values.iter().zip(grid.points()) {
                assert!((m - (2.0 * t + 1.0)).abs() < 1e-9, "{m} vs {}", 2.0 * t + 1.0);
            }
        }
    }

    #[test]
    fn mean_of_constant_curve() {
        let grid = TimeGrid::unit();
        let c = curve(&[0.1, 0.3, 0.5, 0.7, 0.9], |_| 4.2);
        let fit = estimate_mean(&[&c], &grid, Bandwidth::Auto).unwrap();
        assert!(fit.values.iter().all(|v| (v - 4.2).abs() < 1e-12));
    }

    #[test]
    fn mean_needs_five_points() {
        let c = curve(&[0.1, 0.3, 0.5, 0.7], |_| 1.0);
        assert!(estimate_mean(&[&c], &TimeGrid::unit(), Bandwidth::Auto).is_err());
        let c5 = curve(&[0.1, 0.3, 0.5, 0.7, 0.9], |_| 1.0);
        assert!(estimate_mean(&[&c5], &TimeGrid::unit(), Bandwidth::Fixed(-1.0)).is_err());
    }

    #[test]
    fn sparse_support_doubles_bandwidth() {
        // points only near t = 0.1; a tiny bandwidth leaves t = 0.9 empty
        let c = curve(&[0.08, 0.09, 0.1, 0.11, 0.12], |t| t);
        let fit = estimate_mean(&[&c], &TimeGrid::unit(), Bandwidth::Fixed(0.01)).unwrap();
        assert!(fit.bandwidth > 0.01);
        assert!(!fit.warnings.is_empty());
        assert!(fit.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn pair_moments_match_brute_force() {
        let grid = TimeGrid::new(0.0, 1.0, 7).unwrap();
        let ts = [vec![0.1, 0.4, 0.8], vec![0.2, 0.5], vec![0.3]];
        let es = [vec![0.5, -1.0, 2.0], vec![1.5, 0.25], vec![3.0]];
        let t_refs: Vec<&[f64]> = ts.iter().map(Vec::as_slice).collect();
        let e_refs: Vec<&[f64]> = es.iter().map(Vec::as_slice).collect();
        let h = 0.2;
        let pm = PairMoments::compute(&t_refs, &e_refs, &grid, h);
        let p = grid.points();
        for r in 0..grid.len() {
            for c in 0..grid.len() {
                let (mut s00, mut s10, mut s20, mut s11, mut t00, mut t10) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                for (t, e) in ts.iter().zip(&es) {
                    for j in 0..t.len() {
                        for l in 0..t.len() {
                            if j == l {
                                continue;
                            }
                            let (ds, dt) = (t[j] - p[r], t[l] - p[c]);
                            let w = kernel(ds / h) * kernel(dt / h);
                            s00 += w;
                            s10 += w * ds;
                            s20 += w * ds * ds;
                            s11 += w * ds * dt;
                            t00 += w * e[j] * e[l];
                            t10 += w * ds * e[j] * e[l];
                        }
                    }
                }
                for (a, b) in [
                    (pm.s00[(r, c)], s00),
                    (pm.s10[(r, c)], s10),
                    (pm.s20[(r, c)], s20),
                    (pm.s11[(r, c)], s11),
                    (pm.t00[(r, c)], t00),
                    (pm.t10[(r, c)], t10),
                ] {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn covariance_is_exactly_symmetric() {
        let grid = TimeGrid::new(0.0, 1.0, 21).unwrap();
        let curves: Vec<SparseCurve> = (0..30)
            .map(|i| curve(&lcg_times(i + 100, 5), |t| (i as f64 * 0.37).sin() * t + (t * 3.0).cos()))
            .collect();
        let refs: Vec<&SparseCurve> = curves.iter().collect();
        let mean = estimate_mean(&refs, &grid, Bandwidth::Auto).unwrap();
        let cov = estimate_covariance(&refs, &mean.values, &grid, Bandwidth::Auto).unwrap();
        assert_eq!(cov.cov, cov.cov.transpose());
    }

    #[test]
    fn covariance_needs_pairs() {
        let grid = TimeGrid::unit();
        let singles: Vec<SparseCurve> = (0..6).map(|i| curve(&[0.1 * i as f64 + 0.05], |t| t)).collect();
        let refs: Vec<&SparseCurve> = singles.iter().collect();
        let mean = vec![0.0; grid.len()];
        assert!(matches!(
            estimate_covariance(&refs, &mean, &grid, Bandwidth::Fixed(0.1)),
            Err(Error::Unidentifiable(_))
        ));
    }

    #[test]
    fn noise_floor_when_gap_negative() {
        let grid = TimeGrid::unit();
        let gap = vec![-1.0; grid.len()];
        let v = vec![2.0; grid.len()];
        assert_eq!(middle_half_gap(&grid, &gap, &v), 2e-8);
        let gap = vec![0.09; grid.len()];
        assert!((middle_half_gap(&grid, &gap, &v) - 0.09).abs() < 1e-12);
    }

    #[test]
    fn ladder_spans_expected_range() {
        let l = bandwidth_ladder(&TimeGrid::unit());
        assert_eq!(l.len(), 10);
        assert!((l[0] - 0.02).abs() < 1e-15);
        assert!((l[9] - 0.5).abs() < 1e-12);
    }
}
