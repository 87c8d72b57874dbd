//! Compression lab for the Heegard--Berger setup: one encoder serving an
//! uninformed decoder and an informed decoder that observes correlated side
//! information which may be absent.
//!
//! The crate bundles everything needed to train, evaluate and audit the three
//! learned one-shot compressor families (`joint`, `marginal`, `conditional`)
//! on the quadratic-Gaussian source `Y = X + N`:
//!
//! - [`graph`]: a small reverse-mode autodiff tape over row-major `f64`
//!   tensors, sized for three-layer dense networks.
//! - [`nn`]: dense layers, leaky-ReLU, softmax heads, Glorot initialization.
//! - [`rng`] / [`sampling`]: seeded streams, Gumbel-max categorical sampling
//!   and differentiable Concrete (relaxed one-hot) sampling.
//! - [`bounds`]: closed-form asymptotic rate-distortion quantities for the
//!   quadratic-Gaussian problem, the minimum weighted distortion at fixed
//!   rate, and exact finite-alphabet information measures.
//! - [`source`]: the correlated Gaussian pair sampler.
//! - [`schemes`]: the three compressor parametrizations, their Lagrangian
//!   losses, deterministic encoders/decoders and JSON checkpoints.
//! - [`trainer`]: Adam, training loops, Monte-Carlo evaluation into
//!   rate-distortion points, and parallel lambda sweeps.
//! - [`codec`]: a binary arithmetic coder realizing the entropy-coder boxes,
//!   with operational bitrate measurement against the model cross-entropy.
//! - [`viz`]: quantization-boundary scans, codebook/decoder-curve exports and
//!   a discontiguous-bin detector, emitted as SVG + CSV.
//!
//! All randomness flows through [`rng::RngState`]; identical seeds give
//! identical results, including under the `parallel` feature (reductions are
//! order-fixed).

pub mod bounds;
pub mod codec;
pub mod graph;
pub mod nn;
pub mod parallel;
pub mod rd;
pub mod rng;
pub mod sampling;
pub mod schemes;
pub mod source;
pub mod stats;
pub mod tensor;
pub mod trainer;
pub mod viz;

mod error;

pub use error::{Error, Result};
pub use tensor::Tensor;
