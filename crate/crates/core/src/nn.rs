//! Dense networks: three-layer MLPs with leaky-ReLU activations.
//!
//! Each network owns its parameters as plain [`Tensor`] values. The traced
//! forward pass ([`mlp_forward`] / [`Mlp::forward`]) records onto a
//! [`Graph`]; [`Mlp::eval_rows`] is the untraced batched forward used by
//! evaluation and visualization, where no gradients are needed.

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, ValueId};
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Architecture of a dense network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_width: usize,
    pub hidden_widths: Vec<usize>,
    pub output_width: usize,
    /// Leaky-ReLU slope, in (0, 1).
    pub negative_slope: f64,
}

impl MlpSpec {
    pub fn new(input_width: usize, hidden_widths: Vec<usize>, output_width: usize, negative_slope: f64) -> Result<Self> {
        if input_width == 0 || output_width == 0 || hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("all layer widths must be >= 1"));
        }
        if !(0.0 < negative_slope && negative_slope < 1.0) {
            return Err(Error::invalid(format!(
                "negative_slope {negative_slope} not in (0, 1)"
            )));
        }
        Ok(MlpSpec {
            input_width,
            hidden_widths,
            output_width,
            negative_slope,
        })
    }

    /// Layer widths as (in, out) pairs.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.input_width;
        for &h in &self.hidden_widths {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_width));
        dims
    }
}

/// Weights `[out x in]` and bias `[out]` of one dense layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayerParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// A dense network: spec plus one [`DenseLayerParams`] per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<DenseLayerParams>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: MlpSpec, rng: &mut RngState) -> Self {
        let layers = spec
            .layer_dims()
            .iter()
            .map(|&(fan_in, fan_out)| {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w: Vec<f64> = (0..fan_in * fan_out)
                    .map(|_| rng.uniform_in(-bound, bound))
                    .collect();
                DenseLayerParams {
                    weights: Tensor::from_rows(fan_out, fan_in, w).expect("finite init"),
                    bias: Tensor::zeros(vec![fan_out]),
                }
            })
            .collect();
        Mlp { spec, layers }
    }

    /// All-zero parameters (useful for degenerate-case tests).
    pub fn zeros(spec: MlpSpec) -> Self {
        let layers = spec
            .layer_dims()
            .iter()
            .map(|&(fan_in, fan_out)| DenseLayerParams {
                weights: Tensor::zeros(vec![fan_out, fan_in]),
                bias: Tensor::zeros(vec![fan_out]),
            })
            .collect();
        Mlp { spec, layers }
    }

    fn check(&self) -> Result<()> {
        let dims = self.spec.layer_dims();
        if dims.len() != self.layers.len() {
            return Err(Error::shape(
                "mlp params",
                format!("{} layers", dims.len()),
                format!("{} layers", self.layers.len()),
            ));
        }
        for (li, (&(fan_in, fan_out), layer)) in dims.iter().zip(&self.layers).enumerate() {
            if layer.weights.shape() != [fan_out, fan_in] {
                return Err(Error::shape(
                    format!("layer {li} weights"),
                    format!("[{fan_out}, {fan_in}]"),
                    format!("{:?}", layer.weights.shape()),
                ));
            }
            if layer.bias.shape() != [fan_out] {
                return Err(Error::shape(
                    format!("layer {li} bias"),
                    format!("[{fan_out}]"),
                    format!("{:?}", layer.bias.shape()),
                ));
            }
        }
        Ok(())
    }

    /// Traced forward pass with pre-registered parameter leaves.
    ///
    /// `param_ids` holds `(weights, bias)` leaf ids per layer, as produced by
    /// [`Mlp::register`]. Activation follows every layer except the last.
    pub fn forward_with_ids(
        &self,
        g: &mut Graph,
        param_ids: &[(ValueId, ValueId)],
        input: ValueId,
    ) -> Result<ValueId> {
        let (_, in_w) = g.shape(input);
        if in_w != self.spec.input_width {
            return Err(Error::shape(
                "mlp input",
                format!("width {}", self.spec.input_width),
                format!("width {in_w}"),
            ));
        }
        let mut h = input;
        let last = param_ids.len() - 1;
        for (li, &(w, b)) in param_ids.iter().enumerate() {
            h = g.linear(h, w, b)?;
            if li != last {
                h = g.leaky_relu(h, self.spec.negative_slope)?;
            }
        }
        Ok(h)
    }

    /// Register parameter leaves on a graph, in layer order.
    pub fn register(&self, g: &mut Graph) -> Vec<(ValueId, ValueId)> {
        self.layers
            .iter()
            .map(|l| (g.leaf(&l.weights), g.leaf(&l.bias)))
            .collect()
    }

    /// Convenience: register and run in one call.
    pub fn forward(&self, g: &mut Graph, input: ValueId) -> Result<ValueId> {
        self.check()?;
        let ids = self.register(g);
        self.forward_with_ids(g, &ids, input)
    }

    /// Untraced batched forward: `rows` samples of `input_width` values,
    /// row-major. Returns `rows x output_width`.
    pub fn eval_rows(&self, input: &[f64], rows: usize) -> Vec<f64> {
        let k_in = self.spec.input_width;
        debug_assert_eq!(input.len(), rows * k_in);
        let mut cur = input.to_vec();
        let mut cur_w = k_in;
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let (n, k) = layer.weights.rows_cols();
            debug_assert_eq!(k, cur_w);
            let wv = layer.weights.values();
            let bv = layer.bias.values();
            let mut next = vec![0.0; rows * n];
            crate::parallel::for_rows(&mut next, n, |i, row| {
                let xr = &cur[i * k..(i + 1) * k];
                for (j, o) in row.iter_mut().enumerate() {
                    let wr = &wv[j * k..(j + 1) * k];
                    let mut v = crate::parallel::dot(xr, wr) + bv[j];
                    if li != last && v <= 0.0 {
                        v *= self.spec.negative_slope;
                    }
                    *o = v;
                }
            });
            cur = next;
            cur_w = n;
        }
        cur
    }

    /// Untraced forward of a single sample.
    pub fn eval_one(&self, input: &[f64]) -> Vec<f64> {
        self.eval_rows(input, 1)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}

/// Spec-level forward: validates `params` against `spec` and runs the traced
/// pass.
pub fn mlp_forward(
    spec: &MlpSpec,
    params: &[DenseLayerParams],
    g: &mut Graph,
    input: ValueId,
) -> Result<ValueId> {
    let mlp = Mlp {
        spec: spec.clone(),
        layers: params.to_vec(),
    };
    mlp.forward(g, input)
}

/// Elementwise leaky-ReLU on a slice (untraced helper).
pub fn leaky_relu_slice(xs: &[f64], slope: f64) -> Vec<f64> {
    xs.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect()
}

/// Stable log-softmax of one row (untraced helper). Shift-exact: adding a
/// constant to the input leaves the output bit-identical.
pub fn log_softmax_slice(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = xs.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    xs.iter().map(|v| (v - m) - lse).collect()
}

/// Softmax of one row (untraced helper).
pub fn softmax_slice(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = xs.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(i: usize, h: Vec<usize>, o: usize) -> MlpSpec {
        MlpSpec::new(i, h, o, 0.01).unwrap()
    }

    #[test]
    fn zero_network_maps_to_zero() {
        let mlp = Mlp::zeros(spec(3, vec![5, 4], 2));
        let out = mlp.eval_one(&[1.0, -2.0, 0.5]);
        assert_eq!(out, vec![0.0, 0.0]);

        let mut g = Graph::new();
        let x = g.leaf_raw(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let y = mlp.forward(&mut g, x).unwrap();
        assert_eq!(g.value(y), &[0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer() {
        let s = MlpSpec::new(1, vec![], 1, 0.01).unwrap();
        let mlp = Mlp {
            spec: s,
            layers: vec![DenseLayerParams {
                weights: Tensor::from_rows(1, 1, vec![1.0]).unwrap(),
                bias: Tensor::zeros(vec![1]),
            }],
        };
        assert_eq!(mlp.eval_one(&[1.5]), vec![1.5]);
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let mut mlp = Mlp::zeros(spec(2, vec![3], 2));
        mlp.layers[1].weights = Tensor::zeros(vec![2, 5]);
        let mut g = Graph::new();
        let x = g.leaf_raw(1, 2, vec![0.0, 0.0]).unwrap();
        let err = mlp.forward(&mut g, x).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
    }

    /// Independent straight-line oracle: hand-rolled loops, no shared code
    /// with `Mlp::eval_rows` or the graph kernels.
    fn oracle_forward(mlp: &Mlp, input: &[f64]) -> Vec<f64> {
        let mut h: Vec<f64> = input.to_vec();
        for (li, layer) in mlp.layers.iter().enumerate() {
            let (n, k) = layer.weights.rows_cols();
            let mut out = vec![0.0; n];
            for j in 0..n {
                let mut s = layer.bias.values()[j];
                for l in 0..k {
                    s += layer.weights.values()[j * k + l] * h[l];
                }
                out[j] = s;
            }
            if li + 1 != mlp.layers.len() {
                for v in &mut out {
                    if *v <= 0.0 {
                        *v *= mlp.spec.negative_slope;
                    }
                }
            }
            h = out;
        }
        h
    }

    #[test]
    fn random_net_matches_independent_oracle() {
        let mut rng = RngState::from_seed(2024);
        let mlp = Mlp::init(spec(1, vec![100, 100], 8), &mut rng);
        let input = [0.731];

        let expect = oracle_forward(&mlp, &input);
        let fast = mlp.eval_one(&input);

        let mut g = Graph::new();
        let x = g.leaf_raw(1, 1, input.to_vec()).unwrap();
        let y = mlp.forward(&mut g, x).unwrap();
        let traced = g.value(y);

        for i in 0..8 {
            assert!((expect[i] - fast[i]).abs() < 1e-12, "eval_rows vs oracle at {i}");
            assert!((expect[i] - traced[i]).abs() < 1e-12, "traced vs oracle at {i}");
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = RngState::from_seed(5);
        let mlp = Mlp::init(spec(2, vec![7, 7], 3), &mut rng);
        let a = mlp.eval_one(&[0.1, -0.2]);
        let b = mlp.eval_one(&[0.1, -0.2]);
        assert_eq!(a, b);
    }

    #[test]
    fn mlp_grad_check() {
        // 3-layer MLP, MSE against a constant target.
        let mut rng = RngState::from_seed(77);
        let mlp = Mlp::init(spec(2, vec![6, 5], 1), &mut rng);
        let params: Vec<Tensor> = mlp
            .layers
            .iter()
            .flat_map(|l| [l.weights.clone(), l.bias.clone()])
            .collect();
        let slope = mlp.spec.negative_slope;
        let err = crate::graph::grad_check(
            |g, ids| {
                let x = g.leaf_raw(3, 2, vec![0.4, -0.1, 1.2, 0.3, -0.8, 0.9])?;
                let mut h = x;
                for (li, pair) in ids.chunks(2).enumerate() {
                    h = g.linear(h, pair[0], pair[1])?;
                    if li != 2 {
                        h = g.leaky_relu(h, slope)?;
                    }
                }
                let target = g.leaf_raw(3, 1, vec![0.5, -0.25, 1.0])?;
                let diff = g.sub(h, target)?;
                let sq = g.square(diff)?;
                g.mean(sq)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "relative error {err}");
    }
}
