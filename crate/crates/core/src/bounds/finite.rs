//! Exact information measures on finite alphabets, used to brute-force the
//! rate bound chain `I(X;W) + I(X;U|Y,W) <= I(X;(W,U))` on small joints.

use crate::{Error, Result};

/// A joint probability table over up to four finite alphabets, stored flat
/// in row-major order of `dims`.
#[derive(Debug, Clone)]
pub struct FiniteJoint {
    dims: Vec<usize>,
    p: Vec<f64>,
}

impl FiniteJoint {
    pub fn new(dims: Vec<usize>, p: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != p.len() || n == 0 {
            return Err(Error::shape(
                "FiniteJoint",
                format!("{n} cells"),
                format!("{} values", p.len()),
            ));
        }
        if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("probabilities must be finite and >= 0"));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("table sums to {sum}, not 1")));
        }
        Ok(FiniteJoint { dims, p })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }

    /// Marginal over the given axes (kept in the given order).
    pub fn marginal(&self, axes: &[usize]) -> Vec<f64> {
        let strides = self.strides();
        let out_dims: Vec<usize> = axes.iter().map(|&a| self.dims[a]).collect();
        let out_len: usize = out_dims.iter().product();
        let mut out = vec![0.0; out_len];
        for (flat, &prob) in self.p.iter().enumerate() {
            let mut idx = 0;
            for (k, &a) in axes.iter().enumerate() {
                let coord = (flat / strides[a]) % self.dims[a];
                idx = idx * out_dims[k] + coord;
            }
            out[idx] += prob;
        }
        out
    }

    /// Shannon entropy (nats) of the marginal over `axes`.
    pub fn entropy(&self, axes: &[usize]) -> f64 {
        entropy_nats(&self.marginal(axes))
    }
}

/// Entropy in nats with the `0 ln 0 = 0` convention.
fn entropy_nats(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

/// Exact mutual information `I(A;B)` (nats) of a two-axis joint, by double
/// sum with the `0 log(0/..) = 0` convention.
pub fn finite_mi(joint: &FiniteJoint) -> Result<f64> {
    if joint.dims().len() != 2 {
        return Err(Error::invalid(format!(
            "finite_mi expects a two-axis joint, got {} axes",
            joint.dims().len()
        )));
    }
    let (na, nb) = (joint.dims[0], joint.dims[1]);
    let pa = joint.marginal(&[0]);
    let pb = joint.marginal(&[1]);
    let mut mi = 0.0;
    for a in 0..na {
        for b in 0..nb {
            let pab = joint.p[a * nb + b];
            if pab > 0.0 {
                mi += pab * (pab / (pa[a] * pb[b])).ln();
            }
        }
    }
    Ok(mi)
}

/// Outcome of one bound-chain check.
#[derive(Debug, Clone, Copy)]
pub struct BoundChainCheck {
    /// `I(X;W) + I(X;U|Y,W)` in nats.
    pub lhs: f64,
    /// `I(X;(W,U))` in nats.
    pub rhs: f64,
    pub holds: bool,
}

/// Verify `I(X;W) + I(X;U|Y,W) <= I(X;(W,U))` exactly on a joint over
/// `(X, Y, W, U)`. The caller is responsible for the table factorizing as
/// `p(x,y) p(w,u|x)` (the Markov structure that makes the bound a theorem);
/// the quantities are computed exactly either way.
pub fn verify_bound_chain(joint: &FiniteJoint) -> Result<BoundChainCheck> {
    if joint.dims().len() != 4 {
        return Err(Error::invalid("bound chain needs a 4-axis joint (X, Y, W, U)"));
    }
    // Axes: 0 = X, 1 = Y, 2 = W, 3 = U.
    // I(X;W) from the (X, W) marginal.
    let (nx, nw) = (joint.dims[0], joint.dims[2]);
    let xw = FiniteJoint::new(vec![nx, nw], joint.marginal(&[0, 2]))?;
    let i_xw = finite_mi(&xw)?;

    // I(X;U|Y,W) = H(X,Y,W) + H(U,Y,W) - H(Y,W) - H(X,Y,W,U).
    let i_xu_given_yw = joint.entropy(&[0, 1, 2]) + joint.entropy(&[3, 1, 2])
        - joint.entropy(&[1, 2])
        - joint.entropy(&[0, 1, 2, 3]);

    // I(X;(W,U)) from the (X, (W,U)) marginal.
    let nu = joint.dims[3];
    let x_wu = FiniteJoint::new(vec![nx, nw * nu], joint.marginal(&[0, 2, 3]))?;
    let i_x_wu = finite_mi(&x_wu)?;

    let lhs = i_xw + i_xu_given_yw;
    Ok(BoundChainCheck {
        lhs,
        rhs: i_x_wu,
        holds: lhs <= i_x_wu + 1e-12,
    })
}

/// Build the joint `p(x,y,w,u) = p(x,y) p(w,u|x)` from its factors.
/// `p_xy` is `|X| x |Y|` row-major, `p_wu_given_x[x]` is `|W| x |U|` row-major.
pub fn markov_joint(p_xy: &[f64], nx: usize, ny: usize, p_wu_given_x: &[Vec<f64>], nw: usize, nu: usize) -> Result<FiniteJoint> {
    if p_xy.len() != nx * ny || p_wu_given_x.len() != nx {
        return Err(Error::invalid("factor shapes inconsistent"));
    }
    let mut p = vec![0.0; nx * ny * nw * nu];
    for x in 0..nx {
        let cond = &p_wu_given_x[x];
        if cond.len() != nw * nu {
            return Err(Error::invalid("conditional shape inconsistent"));
        }
        for y in 0..ny {
            let pxy = p_xy[x * ny + y];
            for w in 0..nw {
                for u in 0..nu {
                    p[((x * ny + y) * nw + w) * nu + u] = pxy * cond[w * nu + u];
                }
            }
        }
    }
    // Renormalize away accumulated rounding so the invariant holds exactly.
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    FiniteJoint::new(vec![nx, ny, nw, nu], p)
}

/// A random probability vector of length `n`.
pub fn random_simplex(n: usize, rng: &mut crate::rng::RngState) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -rng.uniform().max(1e-12).ln()).collect();
    let sum: f64 = v.iter().sum();
    for x in &mut v {
        *x /= sum;
    }
    v
}
