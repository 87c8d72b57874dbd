//! Adam optimization of any scheme, Monte-Carlo evaluation of trained models
//! into rate-distortion points, and lambda sweeps over independent seeded
//! runs.
//!
//! Training is a pure function of `(kind, config)`: all randomness flows from
//! the config seed through split substreams (init / data / stage-1 noise /
//! stage-2 noise), so identical configs reproduce identical parameters.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::mse_to_db;
use crate::parallel::run_all;
use crate::rd::{RdCurve, RdPoint};
use crate::rng::RngState;
use crate::schemes::{
    scheme_loss, LossBreakdown, SchemeConfig, SchemeKind, SchemeModel, StepNoise,
};
use crate::source::{sample_batch, CorrelationModel};
use crate::tensor::Tensor;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// Per-parameter moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state for parameters of the given lengths.
    pub fn new(param_lens: &[usize], lr: f64) -> Self {
        AdamState {
            m: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn for_model(model: &SchemeModel, lr: f64) -> Self {
        let mut lens = Vec::new();
        model.visit_params(&mut |_, t| lens.push(t.len()));
        AdamState::new(&lens, lr)
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update of raw parameter slices.
    pub fn step_slices(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} parameter groups", self.m.len()),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::shape(
                    "adam_step group",
                    format!("{} values", m.len()),
                    format!("{} / {}", p.len(), g.len()),
                ));
            }
            for i in 0..m.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }

    /// Update a model in place with gradients in visit order.
    pub fn step_model(&mut self, model: &mut SchemeModel, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} parameter groups", self.m.len()),
                format!("{} grads", grads.len()),
            ));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut idx = 0;
        let mut bad: Option<String> = None;
        model.visit_params_mut(&mut |name, tensor: &mut Tensor| {
            let g = &grads[idx];
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let p = tensor.values_mut();
            if p.len() != g.len() || p.len() != m.len() {
                if bad.is_none() {
                    bad = Some(format!("gradient shape mismatch at {name}"));
                }
            } else {
                for i in 0..p.len() {
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                    p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.epsilon);
                }
            }
            idx += 1;
        });
        match bad {
            Some(msg) => Err(Error::invalid(msg)),
            None => Ok(()),
        }
    }
}

// ---------------------------------------------------------------------------
// Config, history
// ---------------------------------------------------------------------------

fn default_epochs() -> usize {
    500
}
fn default_steps() -> usize {
    100
}
fn default_batch() -> usize {
    1024
}
fn default_lr() -> f64 {
    1e-4
}
fn default_eval_samples() -> usize {
    100_000
}

/// Everything one training run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_steps")]
    pub steps_per_epoch: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    pub seed: u64,
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    pub scheme: SchemeConfig,
    pub correlation: CorrelationModel,
}

impl TrainConfig {
    pub fn new(scheme: SchemeConfig, correlation: CorrelationModel, seed: u64) -> Self {
        TrainConfig {
            epochs: default_epochs(),
            steps_per_epoch: default_steps(),
            batch_size: default_batch(),
            lr: default_lr(),
            seed,
            eval_samples: default_eval_samples(),
            scheme,
            correlation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::invalid("steps_per_epoch and batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr <= 1.0) {
            return Err(Error::invalid(format!("lr {} not in (0, 1]", self.lr)));
        }
        if self.eval_samples == 0 {
            return Err(Error::invalid("eval_samples must be positive"));
        }
        self.scheme.validate()
    }
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: SchemeModel,
    /// Epoch-mean loss components.
    pub history: Vec<LossBreakdown>,
}

/// Training failure modes. An abort carries the last end-of-epoch model.
#[derive(Debug)]
pub enum TrainError {
    Invalid(Error),
    Aborted {
        step: usize,
        reason: String,
        last_good: Box<SchemeModel>,
        history: Vec<LossBreakdown>,
    },
}

impl std::fmt::Display for TrainError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainError::Invalid(e) => write!(f, "{e}"),
            TrainError::Aborted { step, reason, .. } => {
                write!(f, "training aborted at step {step}: {reason}")
            }
        }
    }
}

impl std::error::Error for TrainError {}

impl From<TrainError> for Error {
    fn from(e: TrainError) -> Error {
        match e {
            TrainError::Invalid(e) => e,
            TrainError::Aborted { step, reason, .. } => Error::TrainAborted { step, reason },
        }
    }
}

/// Write the training history CSV: `epoch,rate_nats,d1_mse,d2_mse,total`.
pub fn write_history_csv<W: Write>(history: &[LossBreakdown], mut w: W) -> Result<()> {
    writeln!(w, "epoch,rate_nats,d1_mse,d2_mse,total")?;
    for (e, h) in history.iter().enumerate() {
        writeln!(w, "{},{},{},{},{}", e, h.rate_nats, h.d1_mse, h.d2_mse, h.total)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Train a scheme from scratch. Fully reproducible from `cfg.seed`.
pub fn train(kind: SchemeKind, cfg: &TrainConfig) -> std::result::Result<TrainedModel, TrainError> {
    cfg.validate().map_err(TrainError::Invalid)?;
    let master = RngState::from_seed(cfg.seed);
    let mut init_rng = master.split(0);
    let mut data_rng = master.split(1);
    let mut noise1_rng = master.split(2);
    let mut noise2_rng = master.split(3);

    let mut model =
        SchemeModel::init(kind, cfg.scheme.clone(), &mut init_rng).map_err(TrainError::Invalid)?;
    let mut adam = AdamState::for_model(&model, cfg.lr);
    let mut history: Vec<LossBreakdown> = Vec::with_capacity(cfg.epochs);
    let mut last_good = model.clone();

    let total_steps = (cfg.epochs * cfg.steps_per_epoch).max(1);
    for epoch in 0..cfg.epochs {
        let mut sums = [0.0f64; 5];
        for step in 0..cfg.steps_per_epoch {
            let global = epoch * cfg.steps_per_epoch + step;
            let progress = global as f64 / (total_steps.saturating_sub(1)).max(1) as f64;
            let tau = cfg.scheme.temperature.at(progress);
            let batch = sample_batch(&cfg.correlation, cfg.batch_size, &mut data_rng)
                .map_err(TrainError::Invalid)?;
            let noise = StepNoise::draw(&model, batch.len(), &mut noise1_rng, &mut noise2_rng);
            let res = match scheme_loss(&model, &batch, tau, &noise) {
                Ok(r) => r,
                Err(e @ Error::NonFinite { .. }) => {
                    return Err(TrainError::Aborted {
                        step: global,
                        reason: e.to_string(),
                        last_good: Box::new(last_good),
                        history,
                    });
                }
                Err(e) => return Err(TrainError::Invalid(e)),
            };
            adam.step_model(&mut model, &res.grads).map_err(TrainError::Invalid)?;
            let b = res.breakdown;
            sums[0] += b.rate_nats;
            sums[1] += b.d1_mse;
            sums[2] += b.d2_mse;
            sums[3] += b.weighted_mse;
            sums[4] += b.total;
        }
        let n = cfg.steps_per_epoch as f64;
        history.push(LossBreakdown {
            rate_nats: sums[0] / n,
            d1_mse: sums[1] / n,
            d2_mse: sums[2] / n,
            weighted_mse: sums[3] / n,
            total: sums[4] / n,
        });
        last_good = model.clone();
    }
    Ok(TrainedModel { model, history })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Monte-Carlo evaluation of a frozen model: hard argmax encoding, plug-in
/// cross-entropy rates under the trained priors, decoder MSEs in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rate_bits_total: f64,
    pub rate_bits_stage1: f64,
    pub rate_bits_stage2: f64,
    pub d1_db: f64,
    pub d2_db: f64,
    pub weighted_db: f64,
    pub n_samples: usize,
    pub d1_mse: f64,
    pub d2_mse: f64,
    pub weighted_mse: f64,
    /// Standard error of the weighted MSE estimate (for Monte-Carlo
    /// tolerance bands).
    pub weighted_mse_se: f64,
}

const EVAL_CHUNK: usize = 8192;
const LN2: f64 = std::f64::consts::LN_2;

/// Evaluate a frozen model on `n` fresh samples.
pub fn evaluate(
    model: &SchemeModel,
    correlation: &CorrelationModel,
    n: usize,
    rng: &mut RngState,
) -> Result<EvalReport> {
    if n == 0 {
        return Err(Error::invalid("evaluation needs n >= 1"));
    }
    let beta = model.config().beta;
    let mut rate1_sum = 0.0;
    let mut rate2_sum = 0.0;
    let mut e1_sum = 0.0;
    let mut e2_sum = 0.0;
    let mut w_sum = 0.0;
    let mut w_sq_sum = 0.0;

    let mut remaining = n;
    while remaining > 0 {
        let m = remaining.min(EVAL_CHUNK);
        remaining -= m;
        let batch = sample_batch(correlation, m, rng)?;
        match model {
            SchemeModel::Joint(jm) => {
                let vs = jm.encode_rows(&batch.x);
                let logq = jm.prior_log_probs();
                let table = jm.uninformed_table();
                let xhat2 = jm.decode_informed_rows(&vs, &batch.y);
                for i in 0..m {
                    rate1_sum += -logq[vs[i]] / LN2;
                    let e1 = batch.x[i] - table[vs[i]];
                    let e2 = batch.x[i] - xhat2[i];
                    let (e1, e2) = (e1 * e1, e2 * e2);
                    e1_sum += e1;
                    e2_sum += e2;
                    let w = beta * e1 + (1.0 - beta) * e2;
                    w_sum += w;
                    w_sq_sum += w * w;
                }
            }
            SchemeModel::Layered(lm) => {
                let ku = lm.config.k_u;
                let (ws, us) = lm.encode_rows(&batch.x);
                let logq_w = lm.prior_w_log_probs();
                let logq_u_rows = lm.prior_u_log_prob_rows(&ws, &batch.y);
                let table = lm.uninformed_table();
                let xhat2 = lm.decode_informed_rows(&ws, &us, &batch.y);
                for i in 0..m {
                    rate1_sum += -logq_w[ws[i]] / LN2;
                    rate2_sum += -logq_u_rows[i * ku + us[i]] / LN2;
                    let e1 = batch.x[i] - table[ws[i]];
                    let e2 = batch.x[i] - xhat2[i];
                    let (e1, e2) = (e1 * e1, e2 * e2);
                    e1_sum += e1;
                    e2_sum += e2;
                    let w = beta * e1 + (1.0 - beta) * e2;
                    w_sum += w;
                    w_sq_sum += w * w;
                }
            }
        }
    }

    let nf = n as f64;
    let rate_stage1 = rate1_sum / nf;
    let rate_stage2 = rate2_sum / nf;
    let d1_mse = (e1_sum / nf).max(1e-300);
    let d2_mse = (e2_sum / nf).max(1e-300);
    let weighted_mse = (beta * d1_mse + (1.0 - beta) * d2_mse).max(1e-300);
    let w_mean = w_sum / nf;
    let w_var = (w_sq_sum / nf - w_mean * w_mean).max(0.0);
    Ok(EvalReport {
        rate_bits_total: rate_stage1 + rate_stage2,
        rate_bits_stage1: rate_stage1,
        rate_bits_stage2: rate_stage2,
        d1_db: mse_to_db(d1_mse),
        d2_db: mse_to_db(d2_mse),
        weighted_db: mse_to_db(weighted_mse),
        n_samples: n,
        d1_mse,
        d2_mse,
        weighted_mse,
        weighted_mse_se: (w_var / nf).sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// A run that failed inside a sweep.
#[derive(Debug, Clone)]
pub struct SweepFailure {
    pub lambda: f64,
    pub seed: u64,
    pub message: String,
}

/// All points (and failures) of one sweep.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub curve: RdCurve,
    pub failures: Vec<SweepFailure>,
}

/// Train and evaluate one model per `(lambda, seed)` pair. Runs are
/// independent; `jobs` caps the worker count (`None` = all cores).
pub fn sweep(
    kind: SchemeKind,
    base_cfg: &TrainConfig,
    lambdas: &[f64],
    seeds: &[u64],
    jobs: Option<usize>,
) -> Result<SweepOutcome> {
    if lambdas.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("sweep needs at least one lambda and one seed"));
    }
    let mut tasks = Vec::new();
    for &lambda in lambdas {
        for &seed in seeds {
            tasks.push((lambda, seed));
        }
    }
    let results = run_all(tasks, jobs, |(lambda, seed)| {
        let mut cfg = base_cfg.clone();
        cfg.scheme.lambda = lambda;
        cfg.seed = seed;
        run_one(kind, &cfg).map_err(|e| SweepFailure {
            lambda,
            seed,
            message: e.to_string(),
        })
    });
    let mut curve = RdCurve::default();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(p) => curve.points.push(p),
            Err(f) => failures.push(f),
        }
    }
    Ok(SweepOutcome { curve, failures })
}

/// Train one `(kind, cfg)` run and evaluate it into an [`RdPoint`].
pub fn run_one(kind: SchemeKind, cfg: &TrainConfig) -> Result<RdPoint> {
    let trained = train(kind, cfg).map_err(Error::from)?;
    let mut eval_rng = RngState::from_seed(cfg.seed).split(1000);
    let report = evaluate(&trained.model, &cfg.correlation, cfg.eval_samples, &mut eval_rng)?;
    Ok(rd_point(kind, cfg.scheme.lambda, cfg.seed, &report))
}

/// Assemble an [`RdPoint`] from an evaluation report.
pub fn rd_point(kind: SchemeKind, lambda: f64, seed: u64, r: &EvalReport) -> RdPoint {
    RdPoint {
        scheme: kind,
        lambda,
        seed,
        rate_bits: r.rate_bits_total,
        rate_stage1_bits: r.rate_bits_stage1,
        rate_stage2_bits: r.rate_bits_stage2,
        d1_db: r.d1_db,
        d2_db: r.d2_db,
        weighted_db: r.weighted_db,
        d1_mse: r.d1_mse,
        d2_mse: r.d2_mse,
        weighted_mse: r.weighted_mse,
    }
}

/// Fraction of adjacent epoch pairs in the last half of training where the
/// mean total loss did not increase (soft convergence diagnostic).
pub fn non_increasing_fraction(history: &[LossBreakdown]) -> f64 {
    let start = history.len() / 2;
    let tail = &history[start..];
    if tail.len() < 2 {
        return 1.0;
    }
    let pairs = tail.len() - 1;
    let good = tail.windows(2).filter(|w| w[1].total <= w[0].total).count();
    good as f64 / pairs as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(kind: SchemeKind, beta: f64, lambda: f64, seed: u64) -> TrainConfig {
        let mut scheme = SchemeConfig::new(beta, lambda).unwrap();
        scheme.k_v = 4;
        scheme.k_w = 3;
        scheme.k_u = 3;
        scheme.hidden_widths = vec![8, 6];
        let _ = kind;
        let mut cfg = TrainConfig::new(scheme, CorrelationModel::new(1.0, 0.1).unwrap(), seed);
        cfg.epochs = 2;
        cfg.steps_per_epoch = 4;
        cfg.batch_size = 32;
        cfg
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut st = AdamState::new(&[3], 0.1);
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![0.0; 3];
        st.step_slices(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(st.t(), 1);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        // Bias correction makes m_hat = g, v_hat = g^2, so the first update
        // is -lr * sign(g) up to epsilon rounding.
        let mut st = AdamState::new(&[2], 0.01);
        let mut p = vec![0.0, 0.0];
        let g = vec![3.0, -0.25];
        st.step_slices(&mut [&mut p], &[&g]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-8, "{}", p[0]);
        assert!((p[1] - 0.01).abs() < 1e-7, "{}", p[1]);
    }

    #[test]
    fn adam_counts_steps() {
        let mut st = AdamState::new(&[1], 0.1);
        let mut p = vec![0.0];
        for i in 1..=5 {
            let g = vec![1.0];
            st.step_slices(&mut [&mut p], &[&g]).unwrap();
            assert_eq!(st.t(), i);
        }
    }

    #[test]
    fn adam_shape_mismatch_rejected() {
        let mut st = AdamState::new(&[2], 0.1);
        let mut p = vec![0.0];
        let g = vec![1.0];
        assert!(st.step_slices(&mut [&mut p], &[&g]).is_err());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let mut cfg = tiny_cfg(SchemeKind::Marginal, 0.2, 5.0, 7);
        cfg.epochs = 0;
        let out = train(SchemeKind::Marginal, &cfg).unwrap();
        let mut rng = RngState::from_seed(cfg.seed).split(0);
        let fresh = SchemeModel::init(SchemeKind::Marginal, cfg.scheme.clone(), &mut rng).unwrap();
        assert_eq!(out.model, fresh);
        assert!(out.history.is_empty());
    }

    #[test]
    fn same_seed_same_parameters() {
        let cfg = tiny_cfg(SchemeKind::Conditional, 0.2, 5.0, 11);
        let a = train(SchemeKind::Conditional, &cfg).unwrap();
        let b = train(SchemeKind::Conditional, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history.len(), b.history.len());
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.total, y.total);
        }
    }

    #[test]
    fn evaluate_report_is_consistent() {
        let cfg = tiny_cfg(SchemeKind::Marginal, 0.3, 5.0, 3);
        let out = train(SchemeKind::Marginal, &cfg).unwrap();
        let mut rng = RngState::from_seed(55);
        let rep = evaluate(&out.model, &cfg.correlation, 10_000, &mut rng).unwrap();
        assert!((rep.rate_bits_total - rep.rate_bits_stage1 - rep.rate_bits_stage2).abs() < 1e-9);
        let recomputed = mse_to_db(0.3 * rep.d1_mse + 0.7 * rep.d2_mse);
        assert!((recomputed - rep.weighted_db).abs() < 1e-9);
        assert!(rep.rate_bits_stage1 >= 0.0 && rep.rate_bits_stage2 >= 0.0);
    }

    #[test]
    fn uniform_prior_rate_is_log_k() {
        // Force the prior uniform: stage-1 rate is exactly log2(K_w)
        // regardless of what the encoder does.
        let cfg = tiny_cfg(SchemeKind::Marginal, 0.2, 5.0, 19);
        let out = train(SchemeKind::Marginal, &cfg).unwrap();
        let mut model = out.model;
        if let SchemeModel::Layered(ref mut lm) = model {
            lm.prior_w = Tensor::zeros(vec![lm.config.k_w]);
        }
        let mut rng = RngState::from_seed(56);
        let rep = evaluate(&model, &cfg.correlation, 5_000, &mut rng).unwrap();
        let expect = (3.0f64).log2();
        assert!((rep.rate_bits_stage1 - expect).abs() < 1e-12, "{}", rep.rate_bits_stage1);
    }

    #[test]
    fn concentrated_prior_rate_is_tiny() {
        let cfg = tiny_cfg(SchemeKind::Joint, 0.5, 5.0, 23);
        let mut rng = RngState::from_seed(1);
        let mut model = SchemeModel::init(SchemeKind::Joint, cfg.scheme.clone(), &mut rng).unwrap();
        if let SchemeModel::Joint(ref mut jm) = model {
            // Zero-weight encoder always emits 0; prior puts ~all mass there.
            jm.encoder = crate::nn::Mlp::zeros(jm.encoder.spec.clone());
            let k = jm.config.k_v;
            let mut logits = vec![0.0; k];
            logits[0] = 22.0; // softmax mass ~ 1 - 3e-10 on symbol 0
            jm.prior_v = Tensor::vector(logits).unwrap();
        }
        let mut erng = RngState::from_seed(2);
        let rep = evaluate(&model, &cfg.correlation, 2_000, &mut erng).unwrap();
        assert!(rep.rate_bits_stage1 < 1e-8, "{}", rep.rate_bits_stage1);
    }

    #[test]
    fn gibbs_inequality_on_evaluation_stream() {
        // Cross-entropy rate >= empirical entropy of the hard indices.
        let cfg = tiny_cfg(SchemeKind::Marginal, 0.2, 8.0, 29);
        let out = train(SchemeKind::Marginal, &cfg).unwrap();
        let model = match &out.model {
            SchemeModel::Layered(m) => m,
            _ => unreachable!(),
        };
        let mut rng = RngState::from_seed(77);
        let batch = sample_batch(&cfg.correlation, 20_000, &mut rng).unwrap();
        let (ws, _) = model.encode_rows(&batch.x);
        let k = model.config.k_w;
        let mut counts = vec![0usize; k];
        for &w in &ws {
            counts[w] += 1;
        }
        let nf = ws.len() as f64;
        let logq = model.prior_w_log_probs();
        let mut ce = 0.0;
        let mut h = 0.0;
        for w in 0..k {
            let p = counts[w] as f64 / nf;
            if p > 0.0 {
                ce += -p * logq[w] / LN2;
                h += -p * p.log2();
            }
        }
        assert!(ce >= h - 1e-12, "cross-entropy {ce} < empirical entropy {h}");
    }

    #[test]
    fn sweep_produces_expected_grid() {
        let cfg = tiny_cfg(SchemeKind::Marginal, 0.2, 5.0, 1);
        let out = sweep(SchemeKind::Marginal, &cfg, &[2.0, 8.0], &[1, 2], Some(1)).unwrap();
        assert_eq!(out.curve.points.len(), 4);
        assert!(out.failures.is_empty());
        let metas: Vec<(f64, u64)> = out.curve.points.iter().map(|p| (p.lambda, p.seed)).collect();
        assert_eq!(metas, vec![(2.0, 1), (2.0, 2), (8.0, 1), (8.0, 2)]);
    }

    #[test]
    fn single_run_single_point() {
        let mut cfg = tiny_cfg(SchemeKind::Joint, 0.5, 5.0, 4);
        cfg.eval_samples = 2_000;
        let out = sweep(SchemeKind::Joint, &cfg, &[5.0], &[4], None).unwrap();
        assert_eq!(out.curve.points.len(), 1);
    }
}
