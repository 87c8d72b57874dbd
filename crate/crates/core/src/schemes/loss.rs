//! Lagrangian losses of the three schemes: `rate + lambda * weighted
//! distortion`, with the rate term the variational cross-entropy gap between
//! the encoder posterior and the prior model.
//!
//! Two ways to take the expectation over code symbols:
//!
//! - **Exact**: sum over the alphabet, weighting every branch by the encoder
//!   posterior. Variance-free; cost scales with K (and K_w * K_u for the
//!   layered schemes).
//! - **Sampled**: one Concrete (relaxed one-hot) sample per batch element and
//!   stage. Every downstream consumer of a symbol (second-stage encoder,
//!   priors, decoders) receives the relaxed vector, and every log-probability
//!   is the inner product of the relaxed vector with the corresponding
//!   log-probability row, which keeps the whole loss differentiable.

use crate::graph::{Gradients, Graph, ValueId};
use crate::rng::RngState;
use crate::sampling::{concrete_rows, gumbel_noise};
use crate::source::Batch;
use crate::tensor::Tensor;
use crate::{Error, Result};

use super::{
    JointModel, LayeredModel, LossBreakdown, SchemeKind, SchemeModel, TrainingMode,
};

/// Pre-drawn Gumbel noise for one training step (sampled mode); `None`
/// fields mean the corresponding stage runs without sampling.
#[derive(Debug, Clone, Default)]
pub struct StepNoise {
    pub stage1: Option<Tensor>,
    pub stage2: Option<Tensor>,
}

impl StepNoise {
    pub fn none() -> Self {
        StepNoise::default()
    }

    /// Draw the noise a model needs for one step, one stream per stage so
    /// consumers stay independent.
    pub fn draw(
        model: &SchemeModel,
        batch_len: usize,
        rng_stage1: &mut RngState,
        rng_stage2: &mut RngState,
    ) -> StepNoise {
        let cfg = model.config();
        match (model.kind(), cfg.mode_for(model.kind())) {
            (_, TrainingMode::ExactExpectation) => StepNoise::none(),
            (SchemeKind::Joint, TrainingMode::Sampled) => StepNoise {
                stage1: Some(gumbel_noise(batch_len, cfg.k_v, rng_stage1)),
                stage2: None,
            },
            (_, TrainingMode::Sampled) => StepNoise {
                stage1: Some(gumbel_noise(batch_len, cfg.k_w, rng_stage1)),
                stage2: Some(gumbel_noise(batch_len, cfg.k_u, rng_stage2)),
            },
        }
    }
}

/// The scalar nodes of a constructed loss graph.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub rate: ValueId,
    pub d1: ValueId,
    pub d2: ValueId,
    pub weighted: ValueId,
    pub total: ValueId,
}

/// Loss value plus gradients, aligned with the model's canonical parameter
/// visit order.
#[derive(Debug, Clone)]
pub struct LossResult {
    pub breakdown: LossBreakdown,
    pub grads: Vec<Vec<f64>>,
}

fn breakdown_from(g: &Graph, nodes: &LossNodes) -> Result<LossBreakdown> {
    Ok(LossBreakdown {
        rate_nats: g.scalar_value(nodes.rate)?,
        d1_mse: g.scalar_value(nodes.d1)?,
        d2_mse: g.scalar_value(nodes.d2)?,
        weighted_mse: g.scalar_value(nodes.weighted)?,
        total: g.scalar_value(nodes.total)?,
    })
}

/// Build the loss graph for `model` with parameters taken from `param_ids`
/// (leaves registered in the model's visit order). Exposing the ids lets the
/// gradient checker drive the same construction with perturbed parameters.
pub fn loss_nodes(
    g: &mut Graph,
    model: &SchemeModel,
    param_ids: &[ValueId],
    batch: &Batch,
    tau: f64,
    noise: &StepNoise,
) -> Result<LossNodes> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    match model {
        SchemeModel::Joint(m) => {
            let ids = JointIds::split(m, param_ids)?;
            build_joint(g, m, &ids, batch, tau, noise)
        }
        SchemeModel::Layered(m) => {
            let ids = LayeredIds::split(m, param_ids)?;
            build_layered(g, m, &ids, batch, tau, noise)
        }
    }
}

/// Register the model's parameters as graph leaves, in visit order.
pub fn register_params(g: &mut Graph, model: &SchemeModel) -> Vec<ValueId> {
    let mut ids = Vec::new();
    model.visit_params(&mut |_, t| ids.push(g.leaf(t)));
    ids
}

/// Evaluate the loss and all parameter gradients for one batch.
pub fn scheme_loss(
    model: &SchemeModel,
    batch: &Batch,
    tau: f64,
    noise: &StepNoise,
) -> Result<LossResult> {
    let mut g = Graph::new();
    let ids = register_params(&mut g, model);
    let nodes = loss_nodes(&mut g, model, &ids, batch, tau, noise)?;
    let breakdown = breakdown_from(&g, &nodes)?;
    let grads: Gradients = g.backward(nodes.total)?;
    let flat = ids
        .iter()
        .map(|&id| {
            let (r, c) = g.shape(id);
            grads.get_or_zeros(id, r * c)
        })
        .collect();
    Ok(LossResult {
        breakdown,
        grads: flat,
    })
}

/// Evaluate the loss only (no reverse pass).
pub fn scheme_loss_value(
    model: &SchemeModel,
    batch: &Batch,
    tau: f64,
    noise: &StepNoise,
) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let ids = register_params(&mut g, model);
    let nodes = loss_nodes(&mut g, model, &ids, batch, tau, noise)?;
    breakdown_from(&g, &nodes)
}

/// Joint-scheme loss with noise drawn from `rng` per the configured mode.
pub fn joint_loss(model: &JointModel, batch: &Batch, rng: &mut RngState) -> Result<LossResult> {
    let wrapped = SchemeModel::Joint(model.clone());
    let mut rng1 = rng.split(1);
    let mut rng2 = rng.split(2);
    let noise = StepNoise::draw(&wrapped, batch.len(), &mut rng1, &mut rng2);
    scheme_loss(&wrapped, batch, model.config.temperature.at(0.0), &noise)
}

/// Marginal-scheme loss with noise drawn from `rng`.
pub fn marginal_loss(model: &LayeredModel, batch: &Batch, rng: &mut RngState) -> Result<LossResult> {
    if model.kind != SchemeKind::Marginal {
        return Err(Error::invalid("marginal_loss requires a marginal model"));
    }
    layered_loss(model, batch, rng)
}

/// Conditional-scheme loss with noise drawn from `rng`.
pub fn conditional_loss(model: &LayeredModel, batch: &Batch, rng: &mut RngState) -> Result<LossResult> {
    if model.kind != SchemeKind::Conditional {
        return Err(Error::invalid("conditional_loss requires a conditional model"));
    }
    layered_loss(model, batch, rng)
}

fn layered_loss(model: &LayeredModel, batch: &Batch, rng: &mut RngState) -> Result<LossResult> {
    let wrapped = SchemeModel::Layered(model.clone());
    let mut rng1 = rng.split(1);
    let mut rng2 = rng.split(2);
    let noise = StepNoise::draw(&wrapped, batch.len(), &mut rng1, &mut rng2);
    scheme_loss(&wrapped, batch, model.config.temperature.at(0.0), &noise)
}

// ---------------------------------------------------------------------------
// Parameter id bundles
// ---------------------------------------------------------------------------

struct JointIds {
    enc: Vec<(ValueId, ValueId)>,
    prior: ValueId,
    dec_un: Vec<(ValueId, ValueId)>,
    dec_inf: Vec<(ValueId, ValueId)>,
}

struct LayeredIds {
    enc_w: Vec<(ValueId, ValueId)>,
    enc_u: Vec<(ValueId, ValueId)>,
    prior_w: ValueId,
    prior_u: Vec<(ValueId, ValueId)>,
    dec_un: Vec<(ValueId, ValueId)>,
    dec_inf: Vec<(ValueId, ValueId)>,
}

fn take_pairs(flat: &[ValueId], pos: &mut usize, layers: usize) -> Vec<(ValueId, ValueId)> {
    let mut out = Vec::with_capacity(layers);
    for _ in 0..layers {
        out.push((flat[*pos], flat[*pos + 1]));
        *pos += 2;
    }
    out
}

impl JointIds {
    fn split(model: &JointModel, flat: &[ValueId]) -> Result<Self> {
        let layers = model.config.hidden_widths.len() + 1;
        let expect = 3 * 2 * layers + 1;
        if flat.len() != expect {
            return Err(Error::shape("joint params", format!("{expect} tensors"), format!("{}", flat.len())));
        }
        let mut pos = 0;
        let enc = take_pairs(flat, &mut pos, layers);
        let prior = flat[pos];
        pos += 1;
        let dec_un = take_pairs(flat, &mut pos, layers);
        let dec_inf = take_pairs(flat, &mut pos, layers);
        Ok(JointIds {
            enc,
            prior,
            dec_un,
            dec_inf,
        })
    }
}

impl LayeredIds {
    fn split(model: &LayeredModel, flat: &[ValueId]) -> Result<Self> {
        let layers = model.config.hidden_widths.len() + 1;
        let expect = 5 * 2 * layers + 1;
        if flat.len() != expect {
            return Err(Error::shape("layered params", format!("{expect} tensors"), format!("{}", flat.len())));
        }
        let mut pos = 0;
        let enc_w = take_pairs(flat, &mut pos, layers);
        let enc_u = take_pairs(flat, &mut pos, layers);
        let prior_w = flat[pos];
        pos += 1;
        let prior_u = take_pairs(flat, &mut pos, layers);
        let dec_un = take_pairs(flat, &mut pos, layers);
        let dec_inf = take_pairs(flat, &mut pos, layers);
        Ok(LayeredIds {
            enc_w,
            enc_u,
            prior_w,
            prior_u,
            dec_un,
            dec_inf,
        })
    }
}

// ---------------------------------------------------------------------------
// Graph construction
// ---------------------------------------------------------------------------

fn eye(k: usize) -> Vec<f64> {
    let mut v = vec![0.0; k * k];
    for i in 0..k {
        v[i * k + i] = 1.0;
    }
    v
}

/// Constant block of `m * k` rows: row `(i, s)` is `onehot(s) ++ [extra[i]]`,
/// ordered `i`-major so a reshape to `(m, k)` puts symbol `s` in column `s`.
fn stacked_onehot_with(extra: &[f64], k: usize) -> (usize, Vec<f64>) {
    let m = extra.len();
    let width = k + 1;
    let mut v = vec![0.0; m * k * width];
    for i in 0..m {
        for s in 0..k {
            let base = (i * k + s) * width;
            v[base + s] = 1.0;
            v[base + k] = extra[i];
        }
    }
    (m * k, v)
}

fn weighted_mean_cols(g: &mut Graph, probs: ValueId, cols: ValueId) -> Result<ValueId> {
    let prod = g.mul(probs, cols)?;
    let per_sample = g.sum_rows(prod)?;
    g.mean(per_sample)
}

fn mse_scalar(g: &mut Graph, target: ValueId, pred: ValueId) -> Result<ValueId> {
    let diff = g.sub(target, pred)?;
    let sq = g.square(diff)?;
    g.mean(sq)
}

fn assemble(
    g: &mut Graph,
    rate: ValueId,
    d1: ValueId,
    d2: ValueId,
    beta: f64,
    lambda: f64,
) -> Result<LossNodes> {
    let bd1 = g.scale(d1, beta)?;
    let bd2 = g.scale(d2, 1.0 - beta)?;
    let weighted = g.add(bd1, bd2)?;
    let ld = g.scale(weighted, lambda)?;
    let total = g.add(rate, ld)?;
    Ok(LossNodes {
        rate,
        d1,
        d2,
        weighted,
        total,
    })
}

fn build_joint(
    g: &mut Graph,
    model: &JointModel,
    ids: &JointIds,
    batch: &Batch,
    tau: f64,
    noise: &StepNoise,
) -> Result<LossNodes> {
    let m = batch.len();
    let k = model.config.k_v;
    let beta = model.config.beta;
    let mode = model.config.mode_for(SchemeKind::Joint);

    let x = g.constant_raw(m, 1, batch.x.clone())?;
    let y = g.constant_raw(m, 1, batch.y.clone())?;

    let logits = model.encoder.forward_with_ids(g, &ids.enc, x)?;
    let logp = g.log_softmax_rows(logits)?;
    let logq_row = g.log_softmax_rows(ids.prior)?;
    let logq = g.broadcast_row(logq_row, m)?;
    let gap = g.sub(logp, logq)?;

    match mode {
        TrainingMode::Sampled => {
            let gum = noise
                .stage1
                .as_ref()
                .ok_or_else(|| Error::invalid("sampled mode needs stage-1 noise"))?;
            if gum.rows_cols() != (m, k) {
                return Err(Error::shape("stage-1 noise", format!("({m}, {k})"), format!("{:?}", gum.rows_cols())));
            }
            let gum = g.constant(gum);
            let s = concrete_rows(g, logits, gum, tau)?;

            let rate = weighted_mean_cols(g, s, gap)?;

            let d1 = if beta > 0.0 {
                let xhat1 = model.dec_uninformed.forward_with_ids(g, &ids.dec_un, s)?;
                mse_scalar(g, x, xhat1)?
            } else {
                g.constant_raw(1, 1, vec![0.0])?
            };
            let d2 = if beta < 1.0 {
                let inp = g.concat_cols(&[s, y])?;
                let xhat2 = model.dec_informed.forward_with_ids(g, &ids.dec_inf, inp)?;
                mse_scalar(g, x, xhat2)?
            } else {
                g.constant_raw(1, 1, vec![0.0])?
            };
            assemble(g, rate, d1, d2, beta, model.config.lambda)
        }
        TrainingMode::ExactExpectation => {
            let probs = g.softmax_rows(logits)?;
            let rate = weighted_mean_cols(g, probs, gap)?;
            let xb = g.broadcast_col(x, k)?;

            let d1 = if beta > 0.0 {
                let eye_k = g.constant_raw(k, k, eye(k))?;
                let xhat1 = model.dec_uninformed.forward_with_ids(g, &ids.dec_un, eye_k)?;
                let row = g.reshape(xhat1, 1, k)?;
                let xhat1_b = g.broadcast_row(row, m)?;
                let diff = g.sub(xb, xhat1_b)?;
                let e1 = g.square(diff)?;
                weighted_mean_cols(g, probs, e1)?
            } else {
                g.constant_raw(1, 1, vec![0.0])?
            };
            let d2 = if beta < 1.0 {
                let (rows, vals) = stacked_onehot_with(&batch.y, k);
                let big = g.constant_raw(rows, k + 1, vals)?;
                let xhat2 = model.dec_informed.forward_with_ids(g, &ids.dec_inf, big)?;
                let xhat2_m = g.reshape(xhat2, m, k)?;
                let diff = g.sub(xb, xhat2_m)?;
                let e2 = g.square(diff)?;
                weighted_mean_cols(g, probs, e2)?
            } else {
                g.constant_raw(1, 1, vec![0.0])?
            };
            assemble(g, rate, d1, d2, beta, model.config.lambda)
        }
    }
}

fn build_layered(
    g: &mut Graph,
    model: &LayeredModel,
    ids: &LayeredIds,
    batch: &Batch,
    tau: f64,
    noise: &StepNoise,
) -> Result<LossNodes> {
    let m = batch.len();
    let (kw, ku) = (model.config.k_w, model.config.k_u);
    let beta = model.config.beta;
    let mode = model.config.mode_for(model.kind);

    let x = g.constant_raw(m, 1, batch.x.clone())?;
    let y = g.constant_raw(m, 1, batch.y.clone())?;

    let logits_w = model.enc_w.forward_with_ids(g, &ids.enc_w, x)?;
    let logp_w = g.log_softmax_rows(logits_w)?;
    let logq_w_row = g.log_softmax_rows(ids.prior_w)?;
    let logq_w = g.broadcast_row(logq_w_row, m)?;
    let gap_w = g.sub(logp_w, logq_w)?;

    match mode {
        TrainingMode::Sampled => {
            let g1 = noise
                .stage1
                .as_ref()
                .ok_or_else(|| Error::invalid("sampled mode needs stage-1 noise"))?;
            let g2 = noise
                .stage2
                .as_ref()
                .ok_or_else(|| Error::invalid("sampled mode needs stage-2 noise"))?;
            if g1.rows_cols() != (m, kw) || g2.rows_cols() != (m, ku) {
                return Err(Error::shape(
                    "stage noise",
                    format!("({m}, {kw}) and ({m}, {ku})"),
                    format!("{:?} and {:?}", g1.rows_cols(), g2.rows_cols()),
                ));
            }
            let g1 = g.constant(g1);
            let g2 = g.constant(g2);

            let s_w = concrete_rows(g, logits_w, g1, tau)?;
            let in_u = g.concat_cols(&[s_w, x])?;
            let logits_u = model.enc_u.forward_with_ids(g, &ids.enc_u, in_u)?;
            let logp_u = g.log_softmax_rows(logits_u)?;
            let s_u = concrete_rows(g, logits_u, g2, tau)?;

            let r_w = {
                let p = g.mul(s_w, gap_w)?;
                g.sum_rows(p)?
            };

            let prior_in = match model.kind {
                SchemeKind::Marginal => s_w,
                SchemeKind::Conditional => g.concat_cols(&[s_w, y])?,
                SchemeKind::Joint => unreachable!("layered model"),
            };
            let prior_logits = model.prior_u.forward_with_ids(g, &ids.prior_u, prior_in)?;
            let logq_u = g.log_softmax_rows(prior_logits)?;
            let gap_u = g.sub(logp_u, logq_u)?;
            let r_u = {
                let p = g.mul(s_u, gap_u)?;
                g.sum_rows(p)?
            };
            let r_total = g.add(r_w, r_u)?;
            let rate = g.mean(r_total)?;

            let d1 = if beta > 0.0 {
                let xhat1 = model.dec_uninformed.forward_with_ids(g, &ids.dec_un, s_w)?;
                mse_scalar(g, x, xhat1)?
            } else {
                g.constant_raw(1, 1, vec![0.0])?
            };
            let d2 = if beta < 1.0 {
                let inp = g.concat_cols(&[s_u, s_w, y])?;
                let xhat2 = model.dec_informed.forward_with_ids(g, &ids.dec_inf, inp)?;
                mse_scalar(g, x, xhat2)?
            } else {
                g.constant_raw(1, 1, vec![0.0])?
            };
            assemble(g, rate, d1, d2, beta, model.config.lambda)
        }
        TrainingMode::ExactExpectation => {
            build_layered_exact(g, model, ids, batch, x, y, logits_w, gap_w)
        }
    }
}

/// Exact enumeration over all `(w, u)` pairs; intended for small alphabets.
#[allow(clippy::too_many_arguments)]
fn build_layered_exact(
    g: &mut Graph,
    model: &LayeredModel,
    ids: &LayeredIds,
    batch: &Batch,
    x: ValueId,
    y: ValueId,
    logits_w: ValueId,
    gap_w: ValueId,
) -> Result<LossNodes> {
    let m = batch.len();
    let (kw, ku) = (model.config.k_w, model.config.k_u);
    let beta = model.config.beta;

    let p_w = g.softmax_rows(logits_w)?;

    let r_w = {
        let p = g.mul(p_w, gap_w)?;
        g.sum_rows(p)?
    };

    let xb_w = g.broadcast_col(x, kw)?;
    let d1 = if beta > 0.0 {
        let eye_w = g.constant_raw(kw, kw, eye(kw))?;
        let xhat1 = model.dec_uninformed.forward_with_ids(g, &ids.dec_un, eye_w)?;
        let row = g.reshape(xhat1, 1, kw)?;
        let xhat1_b = g.broadcast_row(row, m)?;
        let diff = g.sub(xb_w, xhat1_b)?;
        let e1 = g.square(diff)?;
        weighted_mean_cols(g, p_w, e1)?
    } else {
        g.constant_raw(1, 1, vec![0.0])?
    };

    let xb_u = g.broadcast_col(x, ku)?;
    let mut r_u_cols = Vec::with_capacity(kw);
    let mut d2_cols = Vec::with_capacity(kw);
    for w in 0..kw {
        let mut onehot = vec![0.0; kw];
        onehot[w] = 1.0;
        let ow_row = g.constant_raw(1, kw, onehot)?;
        let ow = g.broadcast_row(ow_row, m)?;

        let in_u = g.concat_cols(&[ow, x])?;
        let logits_u = model.enc_u.forward_with_ids(g, &ids.enc_u, in_u)?;
        let logp_u = g.log_softmax_rows(logits_u)?;
        let p_u = g.softmax_rows(logits_u)?;

        let logq_u = match model.kind {
            SchemeKind::Marginal => {
                let logits = model.prior_u.forward_with_ids(g, &ids.prior_u, ow_row)?;
                let lq = g.log_softmax_rows(logits)?;
                g.broadcast_row(lq, m)?
            }
            SchemeKind::Conditional => {
                let inp = g.concat_cols(&[ow, y])?;
                let logits = model.prior_u.forward_with_ids(g, &ids.prior_u, inp)?;
                g.log_softmax_rows(logits)?
            }
            SchemeKind::Joint => unreachable!("layered model"),
        };
        let gap_u = g.sub(logp_u, logq_u)?;
        let r_u_w = {
            let p = g.mul(p_u, gap_u)?;
            g.sum_rows(p)?
        };
        r_u_cols.push(r_u_w);

        if beta < 1.0 {
            // Rows (i, u): (onehot(u), onehot(w), y_i).
            let width = ku + kw + 1;
            let mut vals = vec![0.0; m * ku * width];
            for i in 0..m {
                for u in 0..ku {
                    let base = (i * ku + u) * width;
                    vals[base + u] = 1.0;
                    vals[base + ku + w] = 1.0;
                    vals[base + ku + kw] = batch.y[i];
                }
            }
            let big = g.constant_raw(m * ku, width, vals)?;
            let xhat2 = model.dec_informed.forward_with_ids(g, &ids.dec_inf, big)?;
            let xhat2_m = g.reshape(xhat2, m, ku)?;
            let diff = g.sub(xb_u, xhat2_m)?;
            let e2 = g.square(diff)?;
            let d2_w = {
                let p = g.mul(p_u, e2)?;
                g.sum_rows(p)?
            };
            d2_cols.push(d2_w);
        }
    }

    let r_u_mat = g.concat_cols(&r_u_cols)?;
    let r_u = {
        let p = g.mul(p_w, r_u_mat)?;
        g.sum_rows(p)?
    };
    let r_total = g.add(r_w, r_u)?;
    let rate = g.mean(r_total)?;

    let d2 = if beta < 1.0 {
        let d2_mat = g.concat_cols(&d2_cols)?;
        weighted_mean_cols(g, p_w, d2_mat)?
    } else {
        g.constant_raw(1, 1, vec![0.0])?
    };
    assemble(g, rate, d1, d2, beta, model.config.lambda)
}
