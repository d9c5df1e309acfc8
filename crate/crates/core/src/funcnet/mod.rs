//! Functional multilayer perceptron on FPCA scores.
//!
//! A functional neuron computes `U(b_k + Σ_r ∫ W_{k,r}(t) X̃_r(t) dt)`.
//! With the weight functions expanded in the same discrete-orthonormal
//! eigenbasis as the curves, `W_{k,r} = Σ_p β_{k,r,p} φ_{r,p}` and
//! `X̃_r = Σ_p s_{r,p} φ_{r,p}`, the integral is exactly `Σ_p β_{k,r,p} s_{r,p}`,
//! so the functional layer acts as a dense layer on stacked score vectors.
//! [`forward_quadrature`] evaluates the integrals on the grid instead and
//! serves as the reference for that identity.

mod count;
mod quadrature;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curvedata::Task;
use crate::error::{Error, Result};
use crate::rng::substream;

pub use count::{count_fmlp, count_params, ModelKind};
pub use quadrature::{forward_quadrature, QuadratureBasis};
pub use train::{train, TrainConfig, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Logistic,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Logistic => logistic(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Logistic => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mse,
    CrossEntropy,
}

impl Loss {
    pub fn default_for(task: Task) -> Loss {
        match task {
            Task::Regression => Loss::Mse,
            Task::BinaryClassification => Loss::CrossEntropy,
        }
    }

    const CLAMP: f64 = 1e-12;

    pub fn value(self, pred: f64, target: f64) -> f64 {
        match self {
            Loss::Mse => (pred - target) * (pred - target),
            Loss::CrossEntropy => {
                let p = pred.clamp(Self::CLAMP, 1.0 - Self::CLAMP);
                -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
            }
        }
    }

    fn derivative(self, pred: f64, target: f64) -> f64 {
        match self {
            Loss::Mse => 2.0 * (pred - target),
            Loss::CrossEntropy => {
                if !(Self::CLAMP..=1.0 - Self::CLAMP).contains(&pred) {
                    0.0
                } else {
                    -(target / pred) + (1.0 - target) / (1.0 - pred)
                }
            }
        }
    }
}

/// First layer: `K` logistic functional neurons with eigenbasis coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalLayer {
    /// `P_r` for each feature (or a single block for joint scores).
    pub feature_dims: Vec<usize>,
    /// `coeffs[k]` holds `β_{k,r,p}` stacked over `r` then `p`.
    pub coeffs: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl FunctionalLayer {
    pub fn n_neurons(&self) -> usize {
        self.biases.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.feature_dims.iter().sum()
    }

    /// `β_{k,r,·}`.
    pub fn coeffs_for(&self, k: usize, r: usize) -> &[f64] {
        let start: usize = self.feature_dims[..r].iter().sum();
        &self.coeffs[k][start..start + self.feature_dims[r]]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `weights[o][i]`: output `o`, input `i`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| {
                let z = b + w.iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
                self.activation.apply(z)
            })
            .collect()
    }
}

/// Hidden layer sizes after the functional layer; an output neuron is appended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub functional_neurons: usize,
    pub hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            functional_neurons: 4,
            hidden: vec![2],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `Uniform(−a, a)` with `a = √(6 / (fan_in + fan_out))`, zero biases.
    #[default]
    Glorot,
    Zeros,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalNetwork {
    pub functional: FunctionalLayer,
    /// Hidden layers followed by the single-output layer.
    pub dense: Vec<DenseLayer>,
    pub task: Task,
}

fn uniform_matrix(rows: usize, cols: usize, init: Init, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| match init {
                    Init::Glorot => rng.gen_range(-a..a),
                    Init::Zeros => 0.0,
                })
                .collect()
        })
        .collect()
}

/// Build a network for inputs with per-feature score dimensions `feature_dims`.
pub fn init_network(
    arch: &Architecture,
    feature_dims: &[usize],
    task: Task,
    init: Init,
    seed: u64,
) -> Result<FunctionalNetwork> {
    if arch.functional_neurons == 0 {
        return Err(Error::invalid("need at least one functional neuron"));
    }
    if feature_dims.is_empty() || feature_dims.contains(&0) {
        return Err(Error::invalid("every feature needs at least one score"));
    }
    if arch.hidden.contains(&0) {
        return Err(Error::invalid("hidden layers need at least one neuron"));
    }
    let mut rng = substream(seed, &["init".into()]);
    let k = arch.functional_neurons;
    let p_plus: usize = feature_dims.iter().sum();
    let functional = FunctionalLayer {
        feature_dims: feature_dims.to_vec(),
        coeffs: uniform_matrix(k, p_plus, init, &mut rng)
            .into_iter()
            .collect(),
        biases: vec![0.0; k],
    };
    // uniform_matrix(rows = fan_out, cols = fan_in) uses fan_in + fan_out either way
    let mut dense = Vec::new();
    let mut fan_in = k;
    let out_act = match task {
        Task::Regression => Activation::Identity,
        Task::BinaryClassification => Activation::Logistic,
    };
    let sizes: Vec<(usize, Activation)> = arch
        .hidden
        .iter()
        .map(|&h| (h, Activation::Logistic))
        .chain(std::iter::once((1, out_act)))
        .collect();
    for (size, act) in sizes {
        dense.push(DenseLayer {
            weights: uniform_matrix(size, fan_in, init, &mut rng),
            biases: vec![0.0; size],
            activation: act,
        });
        fan_in = size;
    }
    Ok(FunctionalNetwork {
        functional,
        dense,
        task,
    })
}

/// Classification output: probability plus the label at threshold 0.5
/// (ties go to the positive class).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub value: f64,
    pub label: Option<u8>,
}

impl Prediction {
    pub fn from_output(value: f64, task: Task) -> Self {
        let label = match task {
            Task::BinaryClassification => Some(u8::from(value >= 0.5)),
            Task::Regression => None,
        };
        Prediction { value, label }
    }
}

struct Trace {
    functional: Vec<f64>,
    dense: Vec<Vec<f64>>,
}

impl FunctionalNetwork {
    pub fn n_inputs(&self) -> usize {
        self.functional.n_inputs()
    }

    pub fn n_params(&self) -> usize {
        let f = &self.functional;
        f.coeffs.iter().map(Vec::len).sum::<usize>()
            + f.biases.len()
            + self
                .dense
                .iter()
                .map(|l| l.weights.iter().map(Vec::len).sum::<usize>() + l.biases.len())
                .sum::<usize>()
    }

    fn check_input(&self, scores: &[f64]) -> Result<()> {
        if scores.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                context: "network input scores",
                expected: self.n_inputs(),
                got: scores.len(),
            });
        }
        Ok(())
    }

    /// Functional pre-activations `b_k + Σ β_k · s`.
    fn functional_preactivation(&self, scores: &[f64]) -> Vec<f64> {
        self.functional
            .coeffs
            .iter()
            .zip(&self.functional.biases)
            .map(|(beta, b)| b + beta.iter().zip(scores).map(|(x, y)| x * y).sum::<f64>())
            .collect()
    }

    /// Everything after the functional integrals.
    pub(crate) fn forward_from_preactivation(&self, pre: &[f64]) -> f64 {
        let mut h: Vec<f64> = pre.iter().map(|&z| logistic(z)).collect();
        for layer in &self.dense {
            h = layer.forward(&h);
        }
        h[0]
    }

    fn trace(&self, scores: &[f64]) -> Trace {
        let functional: Vec<f64> = self
            .functional_preactivation(scores)
            .into_iter()
            .map(logistic)
            .collect();
        let mut dense = Vec::with_capacity(self.dense.len());
        let mut h = functional.clone();
        for layer in &self.dense {
            h = layer.forward(&h);
            dense.push(h.clone());
        }
        Trace { functional, dense }
    }

    /// Forward pass on stacked score vectors.
    pub fn forward_scores(&self, scores: &[f64]) -> Result<f64> {
        self.check_input(scores)?;
        Ok(self.forward_from_preactivation(&self.functional_preactivation(scores)))
    }

    pub fn predict(&self, scores: &[f64]) -> Result<Prediction> {
        Ok(Prediction::from_output(self.forward_scores(scores)?, self.task))
    }

    /// All parameters flattened: functional coefficients (neuron-major),
    /// functional biases, then for each dense layer its weights (row-major)
    /// and biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for row in &self.functional.coeffs {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.functional.biases);
        for l in &self.dense {
            for row in &l.weights {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: self.n_params(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        let mut fill = |dst: &mut [f64]| {
            for d in dst {
                *d = it.next().expect("length checked");
            }
        };
        for row in &mut self.functional.coeffs {
            fill(row);
        }
        fill(&mut self.functional.biases);
        for l in &mut self.dense {
            for row in &mut l.weights {
                fill(row);
            }
            fill(&mut l.biases);
        }
        Ok(())
    }

    /// Mean loss over a batch.
    pub fn loss(&self, inputs: &[Vec<f64>], targets: &[f64], loss: Loss) -> Result<f64> {
        let mut total = 0.0;
        for (x, &y) in inputs.iter().zip(targets) {
            total += loss.value(self.forward_scores(x)?, y);
        }
        Ok(total / inputs.len() as f64)
    }

    /// Mean loss and its gradient (in [`params`](Self::params) order) over a batch.
    pub fn backward(&self, inputs: &[Vec<f64>], targets: &[f64], loss: Loss) -> Result<(Vec<f64>, f64)> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::invalid(format!(
                "backward needs a non-empty batch with matching targets ({} inputs, {} targets)",
                inputs.len(),
                targets.len()
            )));
        }
        let k = self.functional.n_neurons();
        let p_plus = self.n_inputs();
        let mut g_coeffs = vec![vec![0.0; p_plus]; k];
        let mut g_fbias = vec![0.0; k];
        let mut g_dense: Vec<(Vec<Vec<f64>>, Vec<f64>)> = self
            .dense
            .iter()
            .map(|l| {
                (
                    vec![vec![0.0; l.weights[0].len()]; l.weights.len()],
                    vec![0.0; l.biases.len()],
                )
            })
            .collect();
        let mut total_loss = 0.0;

        for (x, &y) in inputs.iter().zip(targets) {
            self.check_input(x)?;
            let tr = self.trace(x);
            let out = tr.dense.last().unwrap()[0];
            total_loss += loss.value(out, y);

            // delta = dL/dz for the current layer's pre-activations
            let last = self.dense.len() - 1;
            let mut delta = vec![loss.derivative(out, y) * self.dense[last].activation.derivative_from_output(out)];
            for li in (0..self.dense.len()).rev() {
                let layer = &self.dense[li];
                let input = if li == 0 { &tr.functional } else { &tr.dense[li - 1] };
                let (gw, gb) = &mut g_dense[li];
                for (o, d) in delta.iter().enumerate() {
                    gb[o] += d;
                    for (i, a) in input.iter().enumerate() {
                        gw[o][i] += d * a;
                    }
                }
                let prev_act_deriv: Vec<f64> = if li == 0 {
                    tr.functional.iter().map(|&a| a * (1.0 - a)).collect()
                } else {
                    let act = self.dense[li - 1].activation;
                    tr.dense[li - 1].iter().map(|&a| act.derivative_from_output(a)).collect()
                };
                delta = (0..input.len())
                    .map(|i| {
                        let back: f64 = delta.iter().enumerate().map(|(o, d)| d * layer.weights[o][i]).sum();
                        back * prev_act_deriv[i]
                    })
                    .collect();
            }
            for (kk, d) in delta.iter().enumerate() {
                g_fbias[kk] += d;
                for (j, s) in x.iter().enumerate() {
                    g_coeffs[kk][j] += d * s;
                }
            }
        }

        let n = inputs.len() as f64;
        let mut grad = Vec::with_capacity(self.n_params());
        for row in &g_coeffs {
            grad.extend(row.iter().map(|g| g / n));
        }
        grad.extend(g_fbias.iter().map(|g| g / n));
        for (gw, gb) in &g_dense {
            for row in gw {
                grad.extend(row.iter().map(|g| g / n));
            }
            grad.extend(gb.iter().map(|g| g / n));
        }
        Ok((grad, total_loss / n))
    }
}
