//! The correlated Gaussian source: batches of `(x, y)` with `Y = X + N`.

use serde::{Deserialize, Serialize};

use crate::rng::RngState;
use crate::{Error, Result};

/// Source law parameters: `X ~ N(0, sigma_x2)`, `N ~ N(0, sigma_n2)`
/// independent of `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationModel {
    pub sigma_x2: f64,
    pub sigma_n2: f64,
}

impl CorrelationModel {
    pub fn new(sigma_x2: f64, sigma_n2: f64) -> Result<Self> {
        if sigma_x2 <= 0.0 || sigma_n2 <= 0.0 {
            return Err(Error::invalid("variances must be positive"));
        }
        Ok(CorrelationModel { sigma_x2, sigma_n2 })
    }

    pub fn setup(&self) -> crate::bounds::GaussSetup {
        crate::bounds::GaussSetup {
            sigma_x2: self.sigma_x2,
            sigma_n2: self.sigma_n2,
        }
    }
}

/// One batch of source/side-information pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Draw `size` fresh i.i.d. pairs: `x_i ~ N(0, sigma_x2)`,
/// `y_i = x_i + n_i` with `n_i ~ N(0, sigma_n2)`.
pub fn sample_batch(model: &CorrelationModel, size: usize, rng: &mut RngState) -> Result<Batch> {
    if size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let mut x = Vec::with_capacity(size);
    let mut y = Vec::with_capacity(size);
    for _ in 0..size {
        let xi = rng.gaussian(0.0, model.sigma_x2)?;
        let ni = rng.gaussian(0.0, model.sigma_n2)?;
        x.push(xi);
        y.push(xi + ni);
    }
    Ok(Batch { x, y })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_noise_means_y_equals_x() {
        let m = CorrelationModel::new(1.0, 1e-300).unwrap();
        let mut rng = RngState::from_seed(8);
        let b = sample_batch(&m, 100, &mut rng).unwrap();
        for (x, y) in b.x.iter().zip(&b.y) {
            assert!((x - y).abs() < 1e-140);
        }
    }

    #[test]
    fn moments_match_the_law() {
        let m = CorrelationModel::new(1.0, 0.1).unwrap();
        let mut rng = RngState::from_seed(1234);
        let n = 1_000_000;
        let b = sample_batch(&m, n, &mut rng).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mx = mean(&b.x);
        let var_x = b.x.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / n as f64;
        let noise: Vec<f64> = b.y.iter().zip(&b.x).map(|(y, x)| y - x).collect();
        let mn = mean(&noise);
        let var_n = noise.iter().map(|v| (v - mn) * (v - mn)).sum::<f64>() / n as f64;
        let cov_xn = b
            .x
            .iter()
            .zip(&noise)
            .map(|(x, n)| (x - mx) * (n - mn))
            .sum::<f64>()
            / n as f64;
        let corr = cov_xn / (var_x * var_n).sqrt();
        assert!((var_x - 1.0).abs() < 0.01, "var x {var_x}");
        assert!((var_n - 0.1).abs() < 0.005, "var n {var_n}");
        assert!(corr.abs() < 0.01, "corr {corr}");

        // E[XY] = sigma_x2 within Monte-Carlo tolerance.
        let exy = b.x.iter().zip(&b.y).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        // var(XY) ~ 3 sigma_x^4 + sigma_x^2 sigma_n^2; 3 sigma over 1e6 draws.
        let tol = 3.0 * (3.0f64 + 0.1).sqrt() / (n as f64).sqrt();
        assert!((exy - 1.0).abs() < tol, "E[XY] {exy}");
    }

    #[test]
    fn fixed_seed_repeats() {
        let m = CorrelationModel::new(2.0, 0.5).unwrap();
        let a = sample_batch(&m, 64, &mut RngState::from_seed(5)).unwrap();
        let b = sample_batch(&m, 64, &mut RngState::from_seed(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_size_rejected() {
        let m = CorrelationModel::new(1.0, 0.1).unwrap();
        assert!(sample_batch(&m, 0, &mut RngState::from_seed(1)).is_err());
    }
}
