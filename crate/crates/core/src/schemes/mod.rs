//! The three operational compressor parametrizations: a joint description
//! serving both decoders, and two layered variants that split the description
//! into a first stage `w` (decodable without side information) and a second
//! stage `u` (for the informed decoder), differing in how the second-stage
//! prior is conditioned (`marginal`: on `w`; `conditional`: on `w` and the
//! side information `y`).
//!
//! Network input conventions (one-hot symbols concatenated with reals):
//! - joint encoder: `x -> K_v logits`; uninformed decoder `onehot(v) -> xhat`;
//!   informed decoder `(onehot(v), y) -> xhat`.
//! - layered: `enc_w: x -> K_w`; `enc_u: (onehot(w), x) -> K_u`;
//!   `prior_u(marginal): onehot(w) -> K_u`;
//!   `prior_u(conditional): (onehot(w), y) -> K_u`;
//!   uninformed decoder `onehot(w) -> xhat`; informed decoder
//!   `(onehot(u), onehot(w), y) -> xhat`.

mod checkpoint;
mod encode;
mod loss;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, HistorySummary};
pub use loss::{
    conditional_loss, joint_loss, loss_nodes, marginal_loss, register_params, scheme_loss,
    scheme_loss_value, LossNodes, LossResult, StepNoise,
};

use serde::{Deserialize, Serialize};

use crate::nn::{Mlp, MlpSpec};
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Which compressor family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Joint,
    Marginal,
    Conditional,
}

impl SchemeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::Joint => "joint",
            SchemeKind::Marginal => "marginal",
            SchemeKind::Conditional => "conditional",
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the expectation over code symbols is taken during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Exact sum over the alphabet (variance-free; cost grows with K).
    ExactExpectation,
    /// One Concrete (relaxed one-hot) sample per batch element and stage.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleLaw {
    Fixed,
    Exponential,
}

/// Concrete temperature over training progress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_value: f64,
    pub law: ScheduleLaw,
}

impl TemperatureSchedule {
    pub fn fixed(tau: f64) -> Self {
        TemperatureSchedule {
            initial: tau,
            final_value: tau,
            law: ScheduleLaw::Fixed,
        }
    }

    /// Temperature at training progress `t` in `[0, 1]`.
    pub fn at(&self, t: f64) -> f64 {
        match self.law {
            ScheduleLaw::Fixed => self.initial,
            ScheduleLaw::Exponential => {
                let t = t.clamp(0.0, 1.0);
                self.initial * (self.final_value / self.initial).powf(t)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.initial <= 0.0 || self.final_value <= 0.0 {
            return Err(Error::invalid("temperatures must be positive"));
        }
        Ok(())
    }
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule::fixed(0.5)
    }
}

fn default_k_v() -> usize {
    64
}
fn default_k_wu() -> usize {
    16
}
fn default_hidden() -> Vec<usize> {
    vec![100, 100]
}
fn default_slope() -> f64 {
    0.01
}

/// Everything that shapes one compressor and its Lagrangian objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    /// Weight of the uninformed decoder's distortion, in `[0, 1]`.
    pub beta: f64,
    /// Lagrange multiplier on the weighted distortion, `> 0`.
    pub lambda: f64,
    #[serde(default = "default_k_v")]
    pub k_v: usize,
    #[serde(default = "default_k_wu")]
    pub k_w: usize,
    #[serde(default = "default_k_wu")]
    pub k_u: usize,
    #[serde(default = "default_hidden")]
    pub hidden_widths: Vec<usize>,
    #[serde(default = "default_slope")]
    pub negative_slope: f64,
    #[serde(default)]
    pub temperature: TemperatureSchedule,
    /// `None` picks the per-scheme default: exact for joint, sampled for the
    /// layered schemes.
    #[serde(default)]
    pub training_mode: Option<TrainingMode>,
}

impl SchemeConfig {
    pub fn new(beta: f64, lambda: f64) -> Result<Self> {
        let cfg = SchemeConfig {
            beta,
            lambda,
            k_v: default_k_v(),
            k_w: default_k_wu(),
            k_u: default_k_wu(),
            hidden_widths: default_hidden(),
            negative_slope: default_slope(),
            temperature: TemperatureSchedule::default(),
            training_mode: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid(format!("beta {} outside [0, 1]", self.beta)));
        }
        if self.lambda <= 0.0 {
            return Err(Error::invalid(format!("lambda {} must be > 0", self.lambda)));
        }
        if self.k_v < 2 || self.k_w < 2 || self.k_u < 2 {
            return Err(Error::invalid("alphabet sizes must be >= 2"));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("hidden widths must be non-empty and positive"));
        }
        if !(0.0 < self.negative_slope && self.negative_slope < 1.0) {
            return Err(Error::invalid("negative_slope must be in (0, 1)"));
        }
        self.temperature.validate()
    }

    /// Effective training mode for a scheme kind.
    pub fn mode_for(&self, kind: SchemeKind) -> TrainingMode {
        self.training_mode.unwrap_or(match kind {
            SchemeKind::Joint => TrainingMode::ExactExpectation,
            _ => TrainingMode::Sampled,
        })
    }

    fn mlp(&self, input: usize, output: usize) -> Result<MlpSpec> {
        MlpSpec::new(input, self.hidden_widths.clone(), output, self.negative_slope)
    }
}

/// Per-batch objective components. `weighted_mse` and `total` are built from
/// the other fields with the exact same float operations, so the accounting
/// identities hold to the last bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rate_nats: f64,
    pub d1_mse: f64,
    pub d2_mse: f64,
    pub weighted_mse: f64,
    pub total: f64,
}

/// Joint-description compressor: one code `v` for both decoders.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    pub config: SchemeConfig,
    pub encoder: Mlp,
    /// Free prior logits over the `K_v` symbols.
    pub prior_v: Tensor,
    pub dec_uninformed: Mlp,
    pub dec_informed: Mlp,
}

/// Layered compressor: first-stage code `w`, second-stage code `u`. The
/// `kind` selects the second-stage prior conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredModel {
    pub kind: SchemeKind,
    pub config: SchemeConfig,
    pub enc_w: Mlp,
    pub enc_u: Mlp,
    /// Free prior logits over the `K_w` symbols.
    pub prior_w: Tensor,
    /// Second-stage prior network (`onehot(w)` or `(onehot(w), y)` input).
    pub prior_u: Mlp,
    pub dec_uninformed: Mlp,
    pub dec_informed: Mlp,
}

/// Any trained or initialized compressor.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemeModel {
    Joint(JointModel),
    Layered(LayeredModel),
}

impl JointModel {
    pub fn init(config: SchemeConfig, rng: &mut RngState) -> Result<Self> {
        config.validate()?;
        let k = config.k_v;
        Ok(JointModel {
            encoder: Mlp::init(config.mlp(1, k)?, rng),
            prior_v: Tensor::zeros(vec![k]),
            dec_uninformed: Mlp::init(config.mlp(k, 1)?, rng),
            dec_informed: Mlp::init(config.mlp(k + 1, 1)?, rng),
            config,
        })
    }

    pub fn visit_params(&self, f: &mut impl FnMut(&str, &Tensor)) {
        visit_mlp("encoder", &self.encoder, f);
        f("prior_v", &self.prior_v);
        visit_mlp("dec_uninformed", &self.dec_uninformed, f);
        visit_mlp("dec_informed", &self.dec_informed, f);
    }

    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(&str, &mut Tensor)) {
        visit_mlp_mut("encoder", &mut self.encoder, f);
        f("prior_v", &mut self.prior_v);
        visit_mlp_mut("dec_uninformed", &mut self.dec_uninformed, f);
        visit_mlp_mut("dec_informed", &mut self.dec_informed, f);
    }
}

impl LayeredModel {
    pub fn init(kind: SchemeKind, config: SchemeConfig, rng: &mut RngState) -> Result<Self> {
        config.validate()?;
        let (kw, ku) = (config.k_w, config.k_u);
        let prior_u_input = match kind {
            SchemeKind::Marginal => kw,
            SchemeKind::Conditional => kw + 1,
            SchemeKind::Joint => {
                return Err(Error::invalid("LayeredModel requires marginal or conditional kind"))
            }
        };
        Ok(LayeredModel {
            kind,
            enc_w: Mlp::init(config.mlp(1, kw)?, rng),
            enc_u: Mlp::init(config.mlp(kw + 1, ku)?, rng),
            prior_w: Tensor::zeros(vec![kw]),
            prior_u: Mlp::init(config.mlp(prior_u_input, ku)?, rng),
            dec_uninformed: Mlp::init(config.mlp(kw, 1)?, rng),
            dec_informed: Mlp::init(config.mlp(ku + kw + 1, 1)?, rng),
            config,
        })
    }

    pub fn visit_params(&self, f: &mut impl FnMut(&str, &Tensor)) {
        visit_mlp("enc_w", &self.enc_w, f);
        visit_mlp("enc_u", &self.enc_u, f);
        f("prior_w", &self.prior_w);
        visit_mlp("prior_u", &self.prior_u, f);
        visit_mlp("dec_uninformed", &self.dec_uninformed, f);
        visit_mlp("dec_informed", &self.dec_informed, f);
    }

    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(&str, &mut Tensor)) {
        visit_mlp_mut("enc_w", &mut self.enc_w, f);
        visit_mlp_mut("enc_u", &mut self.enc_u, f);
        f("prior_w", &mut self.prior_w);
        visit_mlp_mut("prior_u", &mut self.prior_u, f);
        visit_mlp_mut("dec_uninformed", &mut self.dec_uninformed, f);
        visit_mlp_mut("dec_informed", &mut self.dec_informed, f);
    }
}

fn visit_mlp(prefix: &str, mlp: &Mlp, f: &mut impl FnMut(&str, &Tensor)) {
    for (i, layer) in mlp.layers.iter().enumerate() {
        f(&format!("{prefix}.{i}.weights"), &layer.weights);
        f(&format!("{prefix}.{i}.bias"), &layer.bias);
    }
}

fn visit_mlp_mut(prefix: &str, mlp: &mut Mlp, f: &mut impl FnMut(&str, &mut Tensor)) {
    for (i, layer) in mlp.layers.iter_mut().enumerate() {
        f(&format!("{prefix}.{i}.weights"), &mut layer.weights);
        f(&format!("{prefix}.{i}.bias"), &mut layer.bias);
    }
}

impl SchemeModel {
    pub fn init(kind: SchemeKind, config: SchemeConfig, rng: &mut RngState) -> Result<Self> {
        Ok(match kind {
            SchemeKind::Joint => SchemeModel::Joint(JointModel::init(config, rng)?),
            SchemeKind::Marginal | SchemeKind::Conditional => {
                SchemeModel::Layered(LayeredModel::init(kind, config, rng)?)
            }
        })
    }

    pub fn kind(&self) -> SchemeKind {
        match self {
            SchemeModel::Joint(_) => SchemeKind::Joint,
            SchemeModel::Layered(m) => m.kind,
        }
    }

    pub fn config(&self) -> &SchemeConfig {
        match self {
            SchemeModel::Joint(m) => &m.config,
            SchemeModel::Layered(m) => &m.config,
        }
    }

    pub fn visit_params(&self, f: &mut impl FnMut(&str, &Tensor)) {
        match self {
            SchemeModel::Joint(m) => m.visit_params(f),
            SchemeModel::Layered(m) => m.visit_params(f),
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(&str, &mut Tensor)) {
        match self {
            SchemeModel::Joint(m) => m.visit_params_mut(f),
            SchemeModel::Layered(m) => m.visit_params_mut(f),
        }
    }

    /// Parameters flattened in canonical visit order.
    pub fn param_tensors(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, t| out.push(t.clone()));
        out
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, t| n += t.len());
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SchemeConfig {
        let mut cfg = SchemeConfig::new(0.2, 10.0).unwrap();
        cfg.k_v = 4;
        cfg.k_w = 3;
        cfg.k_u = 3;
        cfg.hidden_widths = vec![6, 5];
        cfg
    }

    #[test]
    fn visit_orders_are_stable_and_complete() {
        let cfg = small_config();
        let mut rng = RngState::from_seed(1);
        for kind in [SchemeKind::Joint, SchemeKind::Marginal, SchemeKind::Conditional] {
            let m = SchemeModel::init(kind, cfg.clone(), &mut rng).unwrap();
            let mut names = Vec::new();
            m.visit_params(&mut |n, _| names.push(n.to_string()));
            let mut sorted = names.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), names.len(), "duplicate parameter names for {kind}");
            assert!(m.param_count() > 0);
        }
    }

    #[test]
    fn conditional_prior_sees_y() {
        let cfg = small_config();
        let mut rng = RngState::from_seed(2);
        let marg = LayeredModel::init(SchemeKind::Marginal, cfg.clone(), &mut rng).unwrap();
        let cond = LayeredModel::init(SchemeKind::Conditional, cfg, &mut rng).unwrap();
        assert_eq!(marg.prior_u.spec.input_width, 3);
        assert_eq!(cond.prior_u.spec.input_width, 4);
    }

    #[test]
    fn config_validation() {
        assert!(SchemeConfig::new(-0.1, 1.0).is_err());
        assert!(SchemeConfig::new(0.5, 0.0).is_err());
        let mut cfg = SchemeConfig::new(0.5, 1.0).unwrap();
        cfg.k_w = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mode_defaults_per_kind() {
        let cfg = SchemeConfig::new(0.5, 1.0).unwrap();
        assert_eq!(cfg.mode_for(SchemeKind::Joint), TrainingMode::ExactExpectation);
        assert_eq!(cfg.mode_for(SchemeKind::Marginal), TrainingMode::Sampled);
        assert_eq!(cfg.mode_for(SchemeKind::Conditional), TrainingMode::Sampled);
    }

    #[test]
    fn temperature_schedule() {
        let fixed = TemperatureSchedule::fixed(0.5);
        assert_eq!(fixed.at(0.0), 0.5);
        assert_eq!(fixed.at(1.0), 0.5);
        let anneal = TemperatureSchedule {
            initial: 1.0,
            final_value: 0.1,
            law: ScheduleLaw::Exponential,
        };
        assert!((anneal.at(0.0) - 1.0).abs() < 1e-15);
        assert!((anneal.at(1.0) - 0.1).abs() < 1e-15);
        assert!((anneal.at(0.5) - (0.1f64).sqrt()).abs() < 1e-12);
    }
}
