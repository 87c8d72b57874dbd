//! Discrete sampling machinery: Gumbel-max categorical draws, differentiable
//! Concrete (relaxed one-hot) samples, and the deterministic argmax encoder.

use crate::graph::{Graph, ValueId};
use crate::nn::softmax_slice;
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Unnormalized log-probabilities of a categorical.
#[derive(Debug, Clone)]
pub struct CategoricalLogits {
    logits: Tensor,
}

impl CategoricalLogits {
    pub fn new(logits: Tensor) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::invalid("categorical needs K >= 1"));
        }
        Ok(CategoricalLogits { logits })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        CategoricalLogits::new(Tensor::vector(values)?)
    }

    pub fn values(&self) -> &[f64] {
        self.logits.values()
    }

    pub fn k(&self) -> usize {
        self.logits.len()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        softmax_slice(self.values())
    }
}

/// A point on the simplex produced by Concrete sampling.
#[derive(Debug, Clone)]
pub struct RelaxedSample {
    pub weights: Tensor,
    pub temperature: f64,
}

/// `argmax_k(logit_k + G_k)` with i.i.d. standard Gumbel noise; distributed
/// exactly as `softmax(logits)`.
pub fn gumbel_max_sample(logits: &CategoricalLogits, rng: &mut RngState) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (k, &a) in logits.values().iter().enumerate() {
        let v = a + rng.gumbel();
        if v > best_v {
            best_v = v;
            best = k;
        }
    }
    best
}

/// Concrete sample: `softmax((logits + G) / temperature)`.
pub fn concrete_sample(
    logits: &CategoricalLogits,
    temperature: f64,
    rng: &mut RngState,
) -> Result<RelaxedSample> {
    if temperature <= 0.0 {
        return Err(Error::invalid(format!("temperature {temperature} must be > 0")));
    }
    let perturbed: Vec<f64> = logits
        .values()
        .iter()
        .map(|&a| (a + rng.gumbel()) / temperature)
        .collect();
    Ok(RelaxedSample {
        weights: Tensor::vector(softmax_slice(&perturbed))?,
        temperature,
    })
}

/// Traced Concrete sampling for a whole batch of logit rows.
///
/// `gumbel` must be a leaf of the same shape holding pre-drawn standard
/// Gumbel noise; the result is differentiable w.r.t. `logits`.
pub fn concrete_rows(
    g: &mut Graph,
    logits: ValueId,
    gumbel: ValueId,
    temperature: f64,
) -> Result<ValueId> {
    if temperature <= 0.0 {
        return Err(Error::invalid(format!("temperature {temperature} must be > 0")));
    }
    let perturbed = g.add(logits, gumbel)?;
    let scaled = g.scale(perturbed, 1.0 / temperature)?;
    g.softmax_rows(scaled)
}

/// Draw a batch of standard Gumbel noise as a tensor.
pub fn gumbel_noise(rows: usize, cols: usize, rng: &mut RngState) -> Tensor {
    let v: Vec<f64> = (0..rows * cols).map(|_| rng.gumbel()).collect();
    Tensor::new(vec![rows, cols], v).expect("gumbel noise is finite")
}

/// Smallest index attaining the maximum (deterministic tie-break).
pub fn argmax_index(logits: &CategoricalLogits) -> usize {
    argmax_slice(logits.values())
}

/// Argmax over a raw slice with smallest-index tie-break.
pub fn argmax_slice(xs: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = xs[0];
    for (k, &v) in xs.iter().enumerate().skip(1) {
        if v > best_v {
            best_v = v;
            best = k;
        }
    }
    best
}
