//! Diagnostics of trained encoders and decoders: quantization boundaries over
//! a source grid, codebook points with prior mass, informed-decoder response
//! curves over the side information, and a discontiguous-bin detector. All
//! artifacts export as CSV plus a two-panel SVG.

use std::io::Write;
use std::path::Path;

use crate::nn::softmax_slice;
use crate::schemes::{LayeredModel, SchemeModel};
use crate::{Error, Result};

/// Minimum run length (grid points) a cell needs before the binning detector
/// counts it; suppresses single-point argmax flicker at cell boundaries.
pub const MIN_RUN_POINTS: usize = 3;

/// A maximal contiguous grid run mapped to one code index.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub index: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub points: usize,
}

/// Deterministic encoder scanned over a source grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationMap {
    pub grid: Vec<f64>,
    pub index: Vec<usize>,
    /// Maximal runs in grid order; they partition the grid.
    pub runs: Vec<Run>,
}

/// Which encoder stage a scan or codebook refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderStage {
    /// The joint scheme's single code `v`.
    Joint,
    /// First-stage code `w` of a layered scheme.
    W,
    /// Second-stage code `u` of a layered scheme (as a function of `x`,
    /// with `w` produced by the same encoder).
    U,
    /// The pair `(w, u)` flattened to `w * K_u + u`.
    Pair,
}

impl EncoderStage {
    fn label(&self) -> &'static str {
        match self {
            EncoderStage::Joint => "v",
            EncoderStage::W => "w",
            EncoderStage::U => "u",
            EncoderStage::Pair => "wu",
        }
    }
}

fn build_grid(x_lo: f64, x_hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(x_lo < x_hi) || !(step > 0.0) {
        return Err(Error::invalid(format!(
            "bad grid: [{x_lo}, {x_hi}] step {step}"
        )));
    }
    let n = ((x_hi - x_lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| x_lo + i as f64 * step).collect())
}

/// Scan a deterministic encoder over `[x_lo, x_hi]` with spacing `step` and
/// derive the maximal contiguous runs.
pub fn scan_encoder(
    encode: impl Fn(f64) -> usize,
    x_lo: f64,
    x_hi: f64,
    step: f64,
) -> Result<QuantizationMap> {
    let grid = build_grid(x_lo, x_hi, step)?;
    let index: Vec<usize> = grid.iter().map(|&x| encode(x)).collect();
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=index.len() {
        if i == index.len() || index[i] != index[start] {
            runs.push(Run {
                index: index[start],
                x_lo: grid[start],
                x_hi: grid[i - 1],
                points: i - start,
            });
            start = i;
        }
    }
    Ok(QuantizationMap { grid, index, runs })
}

/// Scan one stage of a model's deterministic encoder.
pub fn scan_model(
    model: &SchemeModel,
    stage: EncoderStage,
    x_lo: f64,
    x_hi: f64,
    step: f64,
) -> Result<QuantizationMap> {
    match (model, stage) {
        (SchemeModel::Joint(m), EncoderStage::Joint) => {
            scan_encoder(|x| m.encode(x), x_lo, x_hi, step)
        }
        (SchemeModel::Layered(m), EncoderStage::W) => {
            scan_encoder(|x| m.encode(x).0, x_lo, x_hi, step)
        }
        (SchemeModel::Layered(m), EncoderStage::U) => {
            scan_encoder(|x| m.encode(x).1, x_lo, x_hi, step)
        }
        (SchemeModel::Layered(m), EncoderStage::Pair) => {
            let ku = m.config.k_u;
            scan_encoder(
                |x| {
                    let (w, u) = m.encode(x);
                    w * ku + u
                },
                x_lo,
                x_hi,
                step,
            )
        }
        _ => Err(Error::invalid(format!(
            "stage {} not valid for a {} model",
            stage.label(),
            model.kind()
        ))),
    }
}

/// Indices whose preimage splits into two or more runs of at least
/// `min_points` grid points, with the count of such runs.
pub fn detect_binning(map: &QuantizationMap, min_points: usize) -> Vec<(usize, usize)> {
    let max_index = map.runs.iter().map(|r| r.index).max().unwrap_or(0);
    let mut counts = vec![0usize; max_index + 1];
    for r in &map.runs {
        if r.points >= min_points {
            counts[r.index] += 1;
        }
    }
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c >= 2)
        .map(|(i, &c)| (i, c))
        .collect()
}

/// Per-index reconstruction and prior mass of a first-stage codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookEntry {
    pub index: usize,
    pub reconstruction: f64,
    pub prior_mass: f64,
    /// Filled by [`CodebookExport::with_empirical`]; zero otherwise.
    pub empirical_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookExport {
    pub stage: EncoderStage,
    pub entries: Vec<CodebookEntry>,
}

impl CodebookExport {
    /// Attach empirical index frequencies (same length as the codebook).
    pub fn with_empirical(mut self, hist: &[f64]) -> Result<Self> {
        if hist.len() != self.entries.len() {
            return Err(Error::shape(
                "empirical histogram",
                format!("{} entries", self.entries.len()),
                format!("{}", hist.len()),
            ));
        }
        for (e, &h) in self.entries.iter_mut().zip(hist) {
            e.empirical_mass = h;
        }
        Ok(self)
    }
}

/// Reconstructions of the uninformed decoder plus trained prior masses for
/// the scheme's first stage.
pub fn export_codebook(model: &SchemeModel, stage: EncoderStage) -> Result<CodebookExport> {
    let (table, masses) = match (model, stage) {
        (SchemeModel::Joint(m), EncoderStage::Joint) => {
            (m.uninformed_table(), softmax_slice(m.prior_v.values()))
        }
        (SchemeModel::Layered(m), EncoderStage::W) => {
            (m.uninformed_table(), softmax_slice(m.prior_w.values()))
        }
        _ => {
            return Err(Error::invalid(format!(
                "codebook stage {} not valid for a {} model",
                stage.label(),
                model.kind()
            )))
        }
    };
    let entries = table
        .iter()
        .zip(&masses)
        .enumerate()
        .map(|(i, (&r, &p))| CodebookEntry {
            index: i,
            reconstruction: r,
            prior_mass: p,
            empirical_mass: 0.0,
        })
        .collect();
    Ok(CodebookExport { stage, entries })
}

/// Empirical first-stage index frequencies over `n` fresh source draws.
pub fn empirical_stage1_histogram(
    model: &SchemeModel,
    correlation: &crate::source::CorrelationModel,
    n: usize,
    rng: &mut crate::rng::RngState,
) -> Result<Vec<f64>> {
    let batch = crate::source::sample_batch(correlation, n, rng)?;
    let (k, codes) = match model {
        SchemeModel::Joint(m) => (m.config.k_v, m.encode_rows(&batch.x)),
        SchemeModel::Layered(m) => (m.config.k_w, m.encode_rows(&batch.x).0),
    };
    let mut hist = vec![0.0; k];
    for c in codes {
        hist[c] += 1.0;
    }
    for h in &mut hist {
        *h /= n as f64;
    }
    Ok(hist)
}

/// Informed-decoder response over a side-information grid for one `(w, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderCurve {
    pub w: usize,
    pub u: usize,
    pub y: Vec<f64>,
    pub x_hat2: Vec<f64>,
}

/// Sample the informed decoder over `[y_lo, y_hi]` for each requested pair.
pub fn export_decoder_curves(
    model: &LayeredModel,
    pairs: &[(usize, usize)],
    y_lo: f64,
    y_hi: f64,
    step: f64,
) -> Result<Vec<DecoderCurve>> {
    let grid = build_grid(y_lo, y_hi, step)?;
    pairs
        .iter()
        .map(|&(w, u)| {
            if w >= model.config.k_w || u >= model.config.k_u {
                return Err(Error::invalid(format!("pair ({w}, {u}) out of range")));
            }
            let ws = vec![w; grid.len()];
            let us = vec![u; grid.len()];
            let x_hat2 = model.decode_informed_rows(&ws, &us, &grid);
            Ok(DecoderCurve {
                w,
                u,
                y: grid.clone(),
                x_hat2,
            })
        })
        .collect()
}

/// Everything one diagnostic figure needs.
#[derive(Debug, Clone, Default)]
pub struct VizBundle {
    pub boundaries: Vec<(EncoderStage, QuantizationMap)>,
    pub codebooks: Vec<CodebookExport>,
    pub curves: Vec<DecoderCurve>,
}

/// Write `boundaries.csv`, `codebook.csv` and `curves.csv` under `dir`.
///
/// Schemas: `stage,index,x_lo,x_hi`; `stage,index,reconstruction,prior_mass,
/// empirical_mass`; `w,u,y,x_hat2`.
pub fn emit_csv(bundle: &VizBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut b = String::from("stage,index,x_lo,x_hi\n");
    for (stage, map) in &bundle.boundaries {
        for r in &map.runs {
            b.push_str(&format!("{},{},{},{}\n", stage.label(), r.index, r.x_lo, r.x_hi));
        }
    }
    std::fs::write(dir.join("boundaries.csv"), b)?;

    let mut c = String::from("stage,index,reconstruction,prior_mass,empirical_mass\n");
    for cb in &bundle.codebooks {
        for e in &cb.entries {
            c.push_str(&format!(
                "{},{},{},{},{}\n",
                cb.stage.label(),
                e.index,
                e.reconstruction,
                e.prior_mass,
                e.empirical_mass
            ));
        }
    }
    std::fs::write(dir.join("codebook.csv"), c)?;

    let mut k = String::from("w,u,y,x_hat2\n");
    for curve in &bundle.curves {
        for (y, xh) in curve.y.iter().zip(&curve.x_hat2) {
            k.push_str(&format!("{},{},{},{}\n", curve.w, curve.u, y, xh));
        }
    }
    std::fs::write(dir.join("curves.csv"), k)?;
    Ok(())
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn sx(&self, x: f64) -> f64 {
        self.x0 + (x - self.xmin) / (self.xmax - self.xmin).max(1e-12) * self.w
    }

    fn sy(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.ymin) / (self.ymax - self.ymin).max(1e-12) * self.h
    }
}

fn fmt_pt(v: f64) -> String {
    format!("{:.2}", v)
}

/// Render the diagnostic figure: left panel boundaries + codebook stalks,
/// right panel informed-decoder curves with stage boundaries marked on the
/// source axis.
pub fn emit_svg(bundle: &VizBundle, path: &Path) -> Result<()> {
    let (width, height) = (980.0, 420.0);
    let mut s = String::new();
    s.push_str(&format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // Left panel: first-stage boundaries and codebook.
    let first = bundle
        .boundaries
        .iter()
        .find(|(st, _)| matches!(st, EncoderStage::W | EncoderStage::Joint));
    let codebook = bundle.codebooks.first();
    if let Some((_, map)) = first {
        let xmin = *map.grid.first().unwrap();
        let xmax = *map.grid.last().unwrap();
        let ymax = codebook
            .map(|cb| {
                cb.entries
                    .iter()
                    .map(|e| e.prior_mass.max(e.empirical_mass))
                    .fold(0.0f64, f64::max)
            })
            .unwrap_or(1.0)
            .max(1e-6);
        let f = Frame {
            x0: 50.0,
            y0: 30.0,
            w: 400.0,
            h: 340.0,
            xmin,
            xmax,
            ymin: 0.0,
            ymax: ymax * 1.1,
        };
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
            f.x0, f.y0, f.w, f.h
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"13\">source x / first-stage cells</text>\n",
            f.x0,
            f.y0 - 10.0
        ));
        for run in map.runs.iter().skip(1) {
            let x = f.sx(run.x_lo);
            s.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"red\" stroke-dasharray=\"5,4\" stroke-width=\"1\"/>\n",
                fmt_pt(x),
                fmt_pt(f.y0),
                fmt_pt(x),
                fmt_pt(f.y0 + f.h)
            ));
        }
        if let Some(cb) = codebook {
            for e in &cb.entries {
                if e.reconstruction < xmin || e.reconstruction > xmax {
                    continue;
                }
                let x = f.sx(e.reconstruction);
                let y1 = f.sy(e.prior_mass);
                s.push_str(&format!(
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"2\"/>\n",
                    fmt_pt(x),
                    fmt_pt(f.sy(0.0)),
                    fmt_pt(x),
                    fmt_pt(y1)
                ));
                s.push_str(&format!(
                    "<circle cx=\"{}\" cy=\"{}\" r=\"3.5\" fill=\"{}\"/>\n",
                    fmt_pt(x),
                    fmt_pt(y1),
                    PALETTE[e.index % PALETTE.len()]
                ));
            }
        }
    }

    // Right panel: informed-decoder curves over the side information, with
    // stage boundaries marked as horizontal lines in the source space.
    if !bundle.curves.is_empty() {
        let ymin_s = bundle
            .curves
            .iter()
            .flat_map(|c| c.x_hat2.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let ymax_s = bundle
            .curves
            .iter()
            .flat_map(|c| c.x_hat2.iter())
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let y_lo = bundle.curves[0].y.first().copied().unwrap_or(0.0);
        let y_hi = bundle.curves[0].y.last().copied().unwrap_or(1.0);
        let f = Frame {
            x0: 530.0,
            y0: 30.0,
            w: 400.0,
            h: 340.0,
            xmin: y_lo,
            xmax: y_hi,
            ymin: ymin_s - 0.05 * (ymax_s - ymin_s).abs().max(1e-6),
            ymax: ymax_s + 0.05 * (ymax_s - ymin_s).abs().max(1e-6),
        };
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
            f.x0, f.y0, f.w, f.h
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"13\">side information y / informed reconstructions</text>\n",
            f.x0,
            f.y0 - 10.0
        ));
        for (stage, map) in &bundle.boundaries {
            let (stroke, dash) = match stage {
                EncoderStage::W | EncoderStage::Joint => ("red", "5,4"),
                _ => ("blue", "2,3"),
            };
            for run in map.runs.iter().skip(1) {
                if run.x_lo < f.ymin || run.x_lo > f.ymax {
                    continue;
                }
                let y = f.sy(run.x_lo);
                s.push_str(&format!(
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-dasharray=\"{}\" stroke-width=\"1\"/>\n",
                    fmt_pt(f.x0),
                    fmt_pt(y),
                    fmt_pt(f.x0 + f.w),
                    fmt_pt(y),
                    stroke,
                    dash
                ));
            }
        }
        for (ci, curve) in bundle.curves.iter().enumerate() {
            let mut d = String::new();
            for (i, (&y, &xh)) in curve.y.iter().zip(&curve.x_hat2).enumerate() {
                let cmd = if i == 0 { 'M' } else { 'L' };
                d.push_str(&format!("{}{} {} ", cmd, fmt_pt(f.sx(y)), fmt_pt(f.sy(xh))));
            }
            s.push_str(&format!(
                "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
                d.trim_end(),
                PALETTE[ci % PALETTE.len()]
            ));
        }
    }

    s.push_str("</svg>\n");
    let mut file = std::fs::File::create(path)?;
    file.write_all(s.as_bytes())?;
    Ok(())
}
