//! Evaluated rate-distortion records from sweeps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::schemes::SchemeKind;
use crate::Result;

/// One evaluated operating point of a trained compressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub scheme: SchemeKind,
    pub lambda: f64,
    pub seed: u64,
    pub rate_bits: f64,
    pub rate_stage1_bits: f64,
    pub rate_stage2_bits: f64,
    pub d1_db: f64,
    pub d2_db: f64,
    pub weighted_db: f64,
    /// Linear MSEs backing the dB fields.
    pub d1_mse: f64,
    pub d2_mse: f64,
    pub weighted_mse: f64,
}

/// An ordered collection of evaluated points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RdCurve {
    pub points: Vec<RdPoint>,
}

impl RdCurve {
    /// CSV with header
    /// `scheme,lambda,seed,rate_bits,rate_stage1_bits,rate_stage2_bits,d1_db,d2_db,weighted_db`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "scheme,lambda,seed,rate_bits,rate_stage1_bits,rate_stage2_bits,d1_db,d2_db,weighted_db"
        )?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                p.scheme.as_str(),
                p.lambda,
                p.seed,
                p.rate_bits,
                p.rate_stage1_bits,
                p.rate_stage2_bits,
                p.d1_db,
                p.d2_db,
                p.weighted_db
            )?;
        }
        Ok(())
    }
}
