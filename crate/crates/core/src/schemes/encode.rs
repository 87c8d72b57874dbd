//! Deterministic encoding and decoding with trained models: argmax encoders
//! over the posterior logits, hard one-hot decoder inputs, and the batched
//! helpers evaluation and entropy coding build on.

use crate::nn::log_softmax_slice;
use crate::sampling::argmax_slice;
use crate::{Error, Result};

use super::{JointModel, LayeredModel, SchemeKind};

fn onehot(k: usize, idx: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[idx] = 1.0;
    v
}

impl JointModel {
    /// Deterministic code for one source value.
    pub fn encode(&self, x: f64) -> usize {
        argmax_slice(&self.encoder.eval_one(&[x]))
    }

    /// Codes for a batch of source values.
    pub fn encode_rows(&self, xs: &[f64]) -> Vec<usize> {
        let k = self.config.k_v;
        let logits = self.encoder.eval_rows(xs, xs.len());
        (0..xs.len())
            .map(|i| argmax_slice(&logits[i * k..(i + 1) * k]))
            .collect()
    }

    /// Log prior probabilities over the `K_v` symbols.
    pub fn prior_log_probs(&self) -> Vec<f64> {
        log_softmax_slice(self.prior_v.values())
    }

    fn check_code(&self, v: usize) -> Result<()> {
        if v >= self.config.k_v {
            return Err(Error::invalid(format!(
                "code {v} out of range for K_v = {}",
                self.config.k_v
            )));
        }
        Ok(())
    }

    /// Uninformed reconstruction of a code.
    pub fn decode_uninformed(&self, v: usize) -> Result<f64> {
        self.check_code(v)?;
        Ok(self.dec_uninformed.eval_one(&onehot(self.config.k_v, v))[0])
    }

    /// Informed reconstruction of a code given side information `y`.
    pub fn decode_informed(&self, v: usize, y: f64) -> Result<f64> {
        self.check_code(v)?;
        let mut input = onehot(self.config.k_v, v);
        input.push(y);
        Ok(self.dec_informed.eval_one(&input)[0])
    }

    /// Reconstruction table of the uninformed decoder, indexed by code.
    pub fn uninformed_table(&self) -> Vec<f64> {
        let k = self.config.k_v;
        let mut eye = vec![0.0; k * k];
        for i in 0..k {
            eye[i * k + i] = 1.0;
        }
        self.dec_uninformed.eval_rows(&eye, k)
    }

    /// Batched informed reconstructions for `(code, y)` pairs.
    pub fn decode_informed_rows(&self, codes: &[usize], ys: &[f64]) -> Vec<f64> {
        let k = self.config.k_v;
        let m = codes.len();
        let mut input = vec![0.0; m * (k + 1)];
        for i in 0..m {
            input[i * (k + 1) + codes[i]] = 1.0;
            input[i * (k + 1) + k] = ys[i];
        }
        self.dec_informed.eval_rows(&input, m)
    }
}

impl LayeredModel {
    /// Deterministic two-stage code for one source value: `w` from the
    /// first-stage logits, then `u` from the second stage fed `(onehot(w), x)`.
    pub fn encode(&self, x: f64) -> (usize, usize) {
        let kw = self.config.k_w;
        let w = argmax_slice(&self.enc_w.eval_one(&[x]));
        let mut input = onehot(kw, w);
        input.push(x);
        let u = argmax_slice(&self.enc_u.eval_one(&input));
        (w, u)
    }

    /// Two-stage codes for a batch of source values.
    pub fn encode_rows(&self, xs: &[f64]) -> (Vec<usize>, Vec<usize>) {
        let (kw, ku) = (self.config.k_w, self.config.k_u);
        let m = xs.len();
        let logits_w = self.enc_w.eval_rows(xs, m);
        let ws: Vec<usize> = (0..m)
            .map(|i| argmax_slice(&logits_w[i * kw..(i + 1) * kw]))
            .collect();
        let mut input = vec![0.0; m * (kw + 1)];
        for i in 0..m {
            input[i * (kw + 1) + ws[i]] = 1.0;
            input[i * (kw + 1) + kw] = xs[i];
        }
        let logits_u = self.enc_u.eval_rows(&input, m);
        let us: Vec<usize> = (0..m)
            .map(|i| argmax_slice(&logits_u[i * ku..(i + 1) * ku]))
            .collect();
        (ws, us)
    }

    /// Log prior probabilities over the first-stage symbols.
    pub fn prior_w_log_probs(&self) -> Vec<f64> {
        log_softmax_slice(self.prior_w.values())
    }

    /// Second-stage log prior given `w` (marginal conditioning).
    pub fn prior_u_log_probs_given_w(&self, w: usize) -> Result<Vec<f64>> {
        if self.kind != SchemeKind::Marginal {
            return Err(Error::invalid(
                "w-only prior conditioning is the marginal scheme's; this model is conditional",
            ));
        }
        self.check_w(w)?;
        Ok(log_softmax_slice(
            &self.prior_u.eval_one(&onehot(self.config.k_w, w)),
        ))
    }

    /// Second-stage log prior given `(w, y)` (conditional conditioning).
    pub fn prior_u_log_probs_given_wy(&self, w: usize, y: f64) -> Result<Vec<f64>> {
        if self.kind != SchemeKind::Conditional {
            return Err(Error::invalid(
                "(w, y) prior conditioning is the conditional scheme's; this model is marginal",
            ));
        }
        self.check_w(w)?;
        let mut input = onehot(self.config.k_w, w);
        input.push(y);
        Ok(log_softmax_slice(&self.prior_u.eval_one(&input)))
    }

    fn check_w(&self, w: usize) -> Result<()> {
        if w >= self.config.k_w {
            return Err(Error::invalid(format!(
                "code w = {w} out of range for K_w = {}",
                self.config.k_w
            )));
        }
        Ok(())
    }

    fn check_u(&self, u: usize) -> Result<()> {
        if u >= self.config.k_u {
            return Err(Error::invalid(format!(
                "code u = {u} out of range for K_u = {}",
                self.config.k_u
            )));
        }
        Ok(())
    }

    /// Uninformed reconstruction from the first-stage code.
    pub fn decode_uninformed(&self, w: usize) -> Result<f64> {
        self.check_w(w)?;
        Ok(self.dec_uninformed.eval_one(&onehot(self.config.k_w, w))[0])
    }

    /// Informed reconstruction from the full code and side information.
    pub fn decode_informed(&self, w: usize, u: usize, y: f64) -> Result<f64> {
        self.check_w(w)?;
        self.check_u(u)?;
        let (kw, ku) = (self.config.k_w, self.config.k_u);
        let mut input = vec![0.0; ku + kw + 1];
        input[u] = 1.0;
        input[ku + w] = 1.0;
        input[ku + kw] = y;
        Ok(self.dec_informed.eval_one(&input)[0])
    }

    /// Reconstruction table of the uninformed decoder, indexed by `w`.
    pub fn uninformed_table(&self) -> Vec<f64> {
        let kw = self.config.k_w;
        let mut eye = vec![0.0; kw * kw];
        for i in 0..kw {
            eye[i * kw + i] = 1.0;
        }
        self.dec_uninformed.eval_rows(&eye, kw)
    }

    /// Batched informed reconstructions for `(w, u, y)` triples.
    pub fn decode_informed_rows(&self, ws: &[usize], us: &[usize], ys: &[f64]) -> Vec<f64> {
        let (kw, ku) = (self.config.k_w, self.config.k_u);
        let m = ws.len();
        let width = ku + kw + 1;
        let mut input = vec![0.0; m * width];
        for i in 0..m {
            input[i * width + us[i]] = 1.0;
            input[i * width + ku + ws[i]] = 1.0;
            input[i * width + ku + kw] = ys[i];
        }
        self.dec_informed.eval_rows(&input, m)
    }

    /// Batched second-stage log priors: for the marginal scheme a `K_w x K_u`
    /// table lookup; for the conditional scheme a per-sample network pass on
    /// `(onehot(w), y)`.
    pub fn prior_u_log_prob_rows(&self, ws: &[usize], ys: &[f64]) -> Vec<f64> {
        let (kw, ku) = (self.config.k_w, self.config.k_u);
        let m = ws.len();
        match self.kind {
            SchemeKind::Marginal => {
                let mut eye = vec![0.0; kw * kw];
                for i in 0..kw {
                    eye[i * kw + i] = 1.0;
                }
                let logits = self.prior_u.eval_rows(&eye, kw);
                let table: Vec<Vec<f64>> = (0..kw)
                    .map(|w| log_softmax_slice(&logits[w * ku..(w + 1) * ku]))
                    .collect();
                let mut out = vec![0.0; m * ku];
                for i in 0..m {
                    out[i * ku..(i + 1) * ku].copy_from_slice(&table[ws[i]]);
                }
                out
            }
            SchemeKind::Conditional => {
                let width = kw + 1;
                let mut input = vec![0.0; m * width];
                for i in 0..m {
                    input[i * width + ws[i]] = 1.0;
                    input[i * width + kw] = ys[i];
                }
                let logits = self.prior_u.eval_rows(&input, m);
                let mut out = vec![0.0; m * ku];
                for i in 0..m {
                    out[i * ku..(i + 1) * ku]
                        .copy_from_slice(&log_softmax_slice(&logits[i * ku..(i + 1) * ku]));
                }
                out
            }
            SchemeKind::Joint => unreachable!("layered model"),
        }
    }
}
