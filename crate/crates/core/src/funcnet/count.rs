use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rnn,
    Lstm,
    Gru,
    Fmlp,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Ok(ModelKind::Rnn),
            "lstm" => Ok(ModelKind::Lstm),
            "gru" => Ok(ModelKind::Gru),
            "fmlp" => Ok(ModelKind::Fmlp),
            other => Err(Error::invalid(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Unknown-parameter count for a single-layer recurrent net or a two-layer
/// functional MLP.
///
/// `hidden` is `L`, `features` is `R`. For [`ModelKind::Fmlp`], `q[k][r]`
/// is the number of basis coefficients of neuron `k` on feature `r`; it is
/// ignored by the recurrent kinds. The FMLP formula assumes one numerical
/// output neuron after the `L` functional neurons.
pub fn count_params(kind: ModelKind, hidden: usize, features: usize, q: &[Vec<usize>]) -> Result<u64> {
    if hidden == 0 || features == 0 {
        return Err(Error::invalid("hidden size and feature count must be at least 1"));
    }
    let l = hidden as u64;
    let r = features as u64;
    let cell = l * (l + r) + l;
    Ok(match kind {
        ModelKind::Rnn => cell,
        ModelKind::Lstm => 4 * cell,
        ModelKind::Gru => 3 * cell,
        ModelKind::Fmlp => {
            if q.len() != hidden || q.iter().any(|row| row.len() != features) {
                return Err(Error::invalid(format!(
                    "coefficient counts must form a {hidden}x{features} table"
                )));
            }
            count_fmlp(q)
        }
    })
}

/// `(Σ_k Σ_r Q_{k,r} + L) + (L + 1)` with `L = q.len()`.
pub fn count_fmlp(q: &[Vec<usize>]) -> u64 {
    let l = q.len() as u64;
    let coeffs: u64 = q.iter().flatten().map(|&v| v as u64).sum();
    coeffs + l + l + 1
}
