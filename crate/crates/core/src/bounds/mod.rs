//! Closed-form asymptotic rate-distortion quantities for the
//! quadratic-Gaussian two-decoder problem, region classification, the
//! minimum weighted distortion at fixed rate, and exact finite-alphabet
//! information measures used to verify the rate bound chain by brute force.
//!
//! Internally everything information-theoretic is computed in nats; rates
//! cross the public interface in bits. Distortions in dB use `10 log10(MSE)`.

mod finite;

pub use finite::{
    finite_mi, markov_joint, random_simplex, verify_bound_chain, BoundChainCheck, FiniteJoint,
};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The quadratic-Gaussian source law: `X ~ N(0, sigma_x2)`,
/// `Y = X + N` with `N ~ N(0, sigma_n2)` independent of `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussSetup {
    pub sigma_x2: f64,
    pub sigma_n2: f64,
}

impl GaussSetup {
    pub fn new(sigma_x2: f64, sigma_n2: f64) -> Result<Self> {
        if sigma_x2 <= 0.0 || sigma_n2 <= 0.0 {
            return Err(Error::invalid(format!(
                "variances must be positive, got sigma_x2 = {sigma_x2}, sigma_n2 = {sigma_n2}"
            )));
        }
        Ok(GaussSetup { sigma_x2, sigma_n2 })
    }

    /// Conditional variance of X given Y: `sigma_x2 sigma_n2 / (sigma_x2 + sigma_n2)`.
    pub fn var_x_given_y(&self) -> f64 {
        self.sigma_x2 * self.sigma_n2 / (self.sigma_x2 + self.sigma_n2)
    }
}

/// Which rate terms are active at a `(D1, D2)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionLabel {
    /// Only the uninformed-decoder term is active.
    PointToPointOnly,
    /// Only the side-information term is active.
    WynerZivOnly,
    /// Both constraints are slack; zero rate suffices.
    ZeroRate,
    /// Both terms are active; rate splits between the two descriptions.
    BothActive,
}

/// `10 log10(mse)`.
pub fn mse_to_db(mse: f64) -> f64 {
    10.0 * mse.log10()
}

/// Rate (bits) to serve both decoders at distortions `(d1, d2)`:
/// `0.5 log2(sigma_x2 / delta1) + 0.5 log2(sigma_n2 delta1 / (delta2 (delta1 + sigma_n2)))`
/// with `delta1 = min(sigma_x2, d1)` and
/// `delta2 = min((1/delta1 + 1/sigma_n2)^-1, d2)`.
pub fn hb_rate(setup: &GaussSetup, d1: f64, d2: f64) -> Result<f64> {
    if d1 <= 0.0 || d2 <= 0.0 {
        return Err(Error::invalid(format!(
            "distortions must be positive, got d1 = {d1}, d2 = {d2}"
        )));
    }
    let delta1 = setup.sigma_x2.min(d1);
    let harmonic = 1.0 / (1.0 / delta1 + 1.0 / setup.sigma_n2);
    let delta2 = harmonic.min(d2);
    let first = 0.5 * (setup.sigma_x2 / delta1).log2();
    let second = 0.5 * (setup.sigma_n2 * delta1 / (delta2 * (delta1 + setup.sigma_n2))).log2();
    Ok(first + second)
}

/// Point-to-point Gaussian rate: `max(0, 0.5 log2(sigma_x2 / d))`.
pub fn p2p_rate(sigma_x2: f64, d: f64) -> Result<f64> {
    if d <= 0.0 {
        return Err(Error::invalid(format!("distortion must be positive, got {d}")));
    }
    Ok((0.5 * (sigma_x2 / d).log2()).max(0.0))
}

/// Wyner-Ziv rate: `max(0, 0.5 log2(var(X|Y) / d2))`.
pub fn wz_rate(setup: &GaussSetup, d2: f64) -> Result<f64> {
    if d2 <= 0.0 {
        return Err(Error::invalid(format!("distortion must be positive, got {d2}")));
    }
    Ok((0.5 * (setup.var_x_given_y() / d2).log2()).max(0.0))
}

/// Classify the `(d1, d2)` pair into its operational region. Boundary
/// equalities go to the label with fewer active terms (the vanishing term
/// contributes zero rate either way).
pub fn classify_region(setup: &GaussSetup, d1: f64, d2: f64) -> Result<RegionLabel> {
    if d1 <= 0.0 || d2 <= 0.0 {
        return Err(Error::invalid("distortions must be positive"));
    }
    let threshold = d1 * setup.sigma_n2 / (d1 + setup.sigma_n2);
    let p2p_active = d1 < setup.sigma_x2;
    let wz_active = d2 < threshold;
    Ok(match (p2p_active, wz_active) {
        (true, true) => RegionLabel::BothActive,
        (true, false) => RegionLabel::PointToPointOnly,
        (false, true) => RegionLabel::WynerZivOnly,
        (false, false) => RegionLabel::ZeroRate,
    })
}

/// Minimum weighted distortion at rate `rate_bits` and its optimizing
/// components: `(d_star, d1_star, d2_star)`, all linear MSE.
///
/// The optimizers are square-root expressions clamped into
/// `[D1-, D1+] = [2^-2R sigma_x2, sigma_x2]` and
/// `[D2-, D2+] = [2^-2R (1/sigma_x2 + 1/sigma_n2)^-1, (2^2R/sigma_x2 + 1/sigma_n2)^-1]`.
/// `beta` in {0, 1} is handled by the continuous limit, where the clamps are
/// what survives.
pub fn min_weighted_distortion(setup: &GaussSetup, beta: f64, rate_bits: f64) -> Result<(f64, f64, f64)> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta {beta} outside [0, 1]")));
    }
    if rate_bits < 0.0 {
        return Err(Error::invalid(format!("rate {rate_bits} must be >= 0")));
    }
    let sx2 = setup.sigma_x2;
    let sn2 = setup.sigma_n2;
    let pow = 2.0_f64.powf(-2.0 * rate_bits);
    let d1_lo = pow * sx2;
    let d1_hi = sx2;
    let d2_lo = pow / (1.0 / sx2 + 1.0 / sn2);
    let d2_hi = 1.0 / (2.0_f64.powf(2.0 * rate_bits) / sx2 + 1.0 / sn2);

    let (d1_star, d2_star) = if beta == 0.0 {
        // Limit: D1 unconstrained (clamps to its max), all rate to U.
        (d1_hi, d2_lo)
    } else if beta == 1.0 {
        // Limit: all rate to W.
        (d1_lo, d2_hi)
    } else {
        let d1_raw = (pow * sx2 * sn2 * (1.0 - beta) / beta).sqrt() - sn2;
        let d2_raw = (pow * sx2 * sn2 * beta / (1.0 - beta)).sqrt();
        (d1_raw.clamp(d1_lo, d1_hi), d2_raw.clamp(d2_lo, d2_hi))
    };
    let d_star = beta * d1_star + (1.0 - beta) * d2_star;
    Ok((d_star, d1_star, d2_star))
}

/// One grid point of an asymptotic bound curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub rate_bits: f64,
    pub d_star: f64,
    pub d1_star: f64,
    pub d2_star: f64,
    pub d_star_db: f64,
    /// One-shot reference: the asymptotic curve shifted up by the 1.53 dB
    /// entropy-constrained scalar-quantizer gap.
    pub d_star_plus_153_db: f64,
    pub d1_star_db: f64,
    pub d2_star_db: f64,
}

/// The minimum weighted distortion evaluated over a rate grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub beta: f64,
    pub points: Vec<BoundPoint>,
}

/// Evaluate `D*(R)` on a sorted grid of non-negative rates.
pub fn bound_curve(setup: &GaussSetup, beta: f64, rate_grid: &[f64]) -> Result<BoundCurve> {
    if rate_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("rate grid must be sorted ascending"));
    }
    let points = rate_grid
        .iter()
        .map(|&r| {
            let (d, d1, d2) = min_weighted_distortion(setup, beta, r)?;
            Ok(BoundPoint {
                rate_bits: r,
                d_star: d,
                d1_star: d1,
                d2_star: d2,
                d_star_db: mse_to_db(d),
                d_star_plus_153_db: mse_to_db(d) + 1.53,
                d1_star_db: mse_to_db(d1),
                d2_star_db: mse_to_db(d2),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundCurve { beta, points })
}

impl BoundCurve {
    /// Interpolated `D*` in dB at an arbitrary rate (linear interpolation on
    /// the grid, clamped to the ends).
    pub fn d_star_db_at(&self, rate_bits: f64) -> f64 {
        let pts = &self.points;
        if rate_bits <= pts[0].rate_bits {
            return pts[0].d_star_db;
        }
        if rate_bits >= pts[pts.len() - 1].rate_bits {
            return pts[pts.len() - 1].d_star_db;
        }
        let i = pts.partition_point(|p| p.rate_bits <= rate_bits);
        let (a, b) = (&pts[i - 1], &pts[i]);
        let t = (rate_bits - a.rate_bits) / (b.rate_bits - a.rate_bits);
        a.d_star_db + t * (b.d_star_db - a.d_star_db)
    }

    /// CSV with header `rate_bits,d_star_db,d_star_plus_153_db,d1_star_db,d2_star_db`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "rate_bits,d_star_db,d_star_plus_153_db,d1_star_db,d2_star_db")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{}",
                p.rate_bits, p.d_star_db, p.d_star_plus_153_db, p.d1_star_db, p.d2_star_db
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(sx2: f64, sn2: f64) -> GaussSetup {
        GaussSetup::new(sx2, sn2).unwrap()
    }

    #[test]
    fn hb_rate_p2p_side() {
        // d2 above the threshold clamps the second term to zero: rate is
        // 0.5 log2(1 / 0.25) = 1 bit.
        let s = setup(1.0, 0.1);
        let threshold = 0.25 * 0.1 / 0.35;
        let r = hb_rate(&s, 0.25, threshold + 0.01).unwrap();
        assert!((r - 1.0).abs() < 1e-12, "{r}");
        // Exactly at the threshold too.
        let r = hb_rate(&s, 0.25, threshold).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hb_rate_zero_when_both_slack() {
        let s = setup(1.0, 0.1);
        let r = hb_rate(&s, 1.5, s.var_x_given_y() * 1.1).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn hb_rate_wz_side() {
        let s = setup(1.0, 0.1);
        let d2 = s.var_x_given_y() / 4.0;
        let r = hb_rate(&s, 2.0, d2).unwrap();
        assert!((r - 1.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn hb_rate_rejects_nonpositive() {
        let s = setup(1.0, 0.1);
        assert!(hb_rate(&s, 0.0, 0.1).is_err());
        assert!(hb_rate(&s, 0.1, -1.0).is_err());
    }

    #[test]
    fn p2p_examples() {
        assert!((p2p_rate(1.0, 0.25).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(p2p_rate(1.0, 2.0).unwrap(), 0.0);
        assert!((p2p_rate(1.0, 1.0 / 16.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn wz_examples() {
        let s = setup(1.0, 0.1);
        assert_eq!(wz_rate(&s, s.var_x_given_y() * 2.0).unwrap(), 0.0);
        assert!((wz_rate(&s, s.var_x_given_y() / 4.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eq5_reductions_match_exactly() {
        // d2 above threshold -> hb_rate == p2p_rate; d1 >= sigma_x2 ->
        // hb_rate == wz_rate. Checked over many random setups.
        let mut rng = crate::rng::RngState::from_seed(515);
        for _ in 0..1000 {
            let s = setup(rng.uniform_in(0.2, 4.0), rng.uniform_in(0.01, 1.0));
            let d1 = rng.uniform_in(0.01, s.sigma_x2);
            let threshold = d1 * s.sigma_n2 / (d1 + s.sigma_n2);
            let d2 = rng.uniform_in(threshold, threshold * 3.0 + 0.01);
            let hb = hb_rate(&s, d1, d2).unwrap();
            let p2p = p2p_rate(s.sigma_x2, d1).unwrap();
            assert!((hb - p2p).abs() < 1e-12, "hb {hb} p2p {p2p}");

            let d1_big = s.sigma_x2 * rng.uniform_in(1.0, 3.0);
            let d2_wz = rng.uniform_in(1e-3, s.var_x_given_y());
            let hb = hb_rate(&s, d1_big, d2_wz).unwrap();
            let wz = wz_rate(&s, d2_wz).unwrap();
            assert!((hb - wz).abs() < 1e-12, "hb {hb} wz {wz}");
        }
    }

    #[test]
    fn hb_rate_monotone_in_distortions() {
        let mut rng = crate::rng::RngState::from_seed(99);
        let s = setup(1.0, 0.1);
        for _ in 0..200 {
            let d1 = rng.uniform_in(0.05, 2.0);
            let d2 = rng.uniform_in(0.005, 0.3);
            let bump1 = rng.uniform_in(0.0, 0.5);
            let bump2 = rng.uniform_in(0.0, 0.1);
            let base = hb_rate(&s, d1, d2).unwrap();
            assert!(hb_rate(&s, d1 + bump1, d2).unwrap() <= base + 1e-12);
            assert!(hb_rate(&s, d1, d2 + bump2).unwrap() <= base + 1e-12);
        }
    }

    #[test]
    fn region_examples() {
        let s = setup(1.0, 0.1);
        assert_eq!(classify_region(&s, 0.5, 0.01).unwrap(), RegionLabel::BothActive);
        assert_eq!(classify_region(&s, 2.0, 0.5).unwrap(), RegionLabel::ZeroRate);
        assert_eq!(classify_region(&s, 0.25, 0.2).unwrap(), RegionLabel::PointToPointOnly);
        assert_eq!(classify_region(&s, 1.5, 0.05).unwrap(), RegionLabel::WynerZivOnly);
        // Boundary d1 == sigma_x2 goes to the degenerate side.
        assert_eq!(classify_region(&s, 1.0, 0.5).unwrap(), RegionLabel::ZeroRate);
    }

    #[test]
    fn min_weighted_distortion_zero_rate_anchor() {
        let s = setup(1.0, 0.01);
        let (d, d1, d2) = min_weighted_distortion(&s, 0.2, 0.0).unwrap();
        assert!((d1 - 1.0).abs() < 1e-15);
        assert!((d2 - 0.01 / 1.01).abs() < 1e-15);
        assert!((d - 0.207_920_792_079_207_9).abs() < 1e-12, "{d}");
        assert!((mse_to_db(d) + 6.82).abs() < 0.01);
    }

    #[test]
    fn min_weighted_distortion_beta_limits() {
        let s = setup(1.0, 0.01);
        for r in [0.0, 0.5, 1.0, 2.0, 3.5] {
            let pow = 2.0_f64.powf(-2.0 * r);
            let (d, _, _) = min_weighted_distortion(&s, 1.0, r).unwrap();
            assert!((d - pow * s.sigma_x2).abs() < 1e-15);
            let (d, _, _) = min_weighted_distortion(&s, 0.0, r).unwrap();
            assert!((d - pow / (1.0 / s.sigma_x2 + 1.0 / s.sigma_n2)).abs() < 1e-15);
        }
        assert!(min_weighted_distortion(&s, -0.1, 1.0).is_err());
        assert!(min_weighted_distortion(&s, 1.1, 1.0).is_err());
    }

    #[test]
    fn min_weighted_components_stay_in_their_clamps() {
        let mut rng = crate::rng::RngState::from_seed(7);
        for _ in 0..500 {
            let s = setup(rng.uniform_in(0.3, 3.0), rng.uniform_in(0.005, 0.5));
            let beta = rng.uniform_in(0.0, 1.0);
            let r = rng.uniform_in(0.0, 5.0);
            let (_, d1, d2) = min_weighted_distortion(&s, beta, r).unwrap();
            let pow = 2.0_f64.powf(-2.0 * r);
            let d1_lo = pow * s.sigma_x2;
            let d2_lo = pow / (1.0 / s.sigma_x2 + 1.0 / s.sigma_n2);
            let d2_hi = 1.0 / (2.0_f64.powf(2.0 * r) / s.sigma_x2 + 1.0 / s.sigma_n2);
            assert!(d1 >= d1_lo - 1e-15 && d1 <= s.sigma_x2 + 1e-15);
            assert!(d2 >= d2_lo - 1e-15 && d2 <= d2_hi + 1e-15);
        }
    }

    #[test]
    fn no_rate_sharing_free_lunch() {
        // D*(R) is no smaller than giving each decoder the full rate
        // separately.
        let s = setup(1.0, 0.1);
        for beta in [0.1, 0.3, 0.5, 0.9] {
            for r in [0.0, 0.25, 0.8, 1.7, 3.0] {
                let (d, _, _) = min_weighted_distortion(&s, beta, r).unwrap();
                let pow = 2.0_f64.powf(-2.0 * r);
                let envelope = beta * pow * s.sigma_x2 + (1.0 - beta) * pow * s.var_x_given_y();
                assert!(d >= envelope - 1e-12, "beta {beta} r {r}: {d} < {envelope}");
            }
        }
    }

    #[test]
    fn bound_curve_consistency() {
        let s = setup(1.0, 0.01);
        let grid: Vec<f64> = (0..=60).map(|i| i as f64 * 0.05).collect();
        let curve = bound_curve(&s, 0.2, &grid).unwrap();
        let (d0, _, _) = min_weighted_distortion(&s, 0.2, 0.0).unwrap();
        assert_eq!(curve.points[0].d_star, d0);
        for w in curve.points.windows(2) {
            assert!(w[1].d_star <= w[0].d_star + 1e-15, "curve not non-increasing");
        }
        for p in &curve.points {
            assert!((p.d_star_plus_153_db - p.d_star_db - 1.53).abs() < 1e-12);
        }
    }

    #[test]
    fn bound_curve_interpolation() {
        let s = setup(1.0, 0.1);
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let curve = bound_curve(&s, 0.01, &grid).unwrap();
        let mid = curve.d_star_db_at(1.234);
        let (exact, _, _) = min_weighted_distortion(&s, 0.01, 1.234).unwrap();
        assert!((mid - mse_to_db(exact)).abs() < 0.02, "{mid} vs {}", mse_to_db(exact));
    }
}
