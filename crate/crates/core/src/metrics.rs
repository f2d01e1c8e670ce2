//! PSNR/SSIM on the luma channel, kernel error and the stage-weighted L1
//! diagnostic.

use std::io::Write;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::imgcore::{Image, Kernel};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Luma (if RGB) with `border` pixels shaved from every side.
fn prepare(a: &Image, b: &Image, border: usize) -> Result<(Image, Image)> {
    a.ensure_same_shape(b, "metric inputs")?;
    let (a, b) = (a.luma(), b.luma());
    if border == 0 {
        return Ok((a, b));
    }
    Ok((a.shave(border)?, b.shave(border)?))
}

/// `10·log10(1 / MSE)` on the `[0, 1]` scale; `+∞` for identical inputs.
pub fn psnr(a: &Image, b: &Image, border: usize) -> Result<f64> {
    let (a, b) = prepare(a, b, border)?;
    let mse = a.sub(&b)?.norm_sq() / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            w.push((-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let sum: f64 = w.iter().sum();
    w.iter().map(|v| v / sum).collect()
}

/// Single-scale SSIM: 11×11 Gaussian window (σ = 1.5), `K1 = 0.01`,
/// `K2 = 0.03`, dynamic range 1, averaged over fully covered positions.
pub fn ssim(a: &Image, b: &Image, border: usize) -> Result<f64> {
    let (a, b) = prepare(a, b, border)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Precondition(format!(
            "{h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let win = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for i in 0..oh {
        for j in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for u in 0..SSIM_WINDOW {
                for v in 0..SSIM_WINDOW {
                    let wt = win[u * SSIM_WINDOW + v];
                    let (pa, pb) = (a.get(i + u, j + v, 0), b.get(i + u, j + v, 0));
                    ma += wt * pa;
                    mb += wt * pb;
                    saa += wt * pa * pa;
                    sbb += wt * pb * pb;
                    sab += wt * pa * pb;
                }
            }
            let var_a = saa - ma * ma;
            let var_b = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
    }
    Ok(total / (oh * ow) as f64)
}

/// `Σ|k_est − k_gt|`.
pub fn kernel_l1(k_est: &Kernel, k_gt: &Kernel) -> Result<f64> {
    k_est.l1_distance(k_gt)
}

/// Per-stage weights of the stage loss.
#[derive(Clone, Debug, PartialEq)]
pub struct StageWeights {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl StageWeights {
    /// 0.1 at every stage but the last, 1.0 at the last.
    pub fn standard(stages: usize) -> Self {
        let w: Vec<f64> = (1..=stages).map(|t| if t == stages { 1.0 } else { 0.1 }).collect();
        StageWeights {
            alpha: w.clone(),
            beta: w,
        }
    }
}

/// `Σ α_t ‖K − K_t‖₁ + Σ β_t ‖X − X_t‖₁` over stages `1..=T`.
pub fn stage_loss(trace: &[(Kernel, Image)], gt: (&Kernel, &Image), weights: &StageWeights) -> Result<f64> {
    let errors = trace
        .iter()
        .map(|(k, x)| Ok((k.l1_distance(gt.0)?, x.l1_distance(gt.1)?)))
        .collect::<Result<Vec<_>>>()?;
    weighted_stage_loss(&errors, weights)
}

/// Stage loss from precomputed `(kernel L1, image L1)` errors per stage.
pub fn weighted_stage_loss(errors: &[(f64, f64)], weights: &StageWeights) -> Result<f64> {
    if weights.alpha.len() != errors.len() || weights.beta.len() != errors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} stages against {} / {} weights",
            errors.len(),
            weights.alpha.len(),
            weights.beta.len()
        )));
    }
    Ok(errors
        .iter()
        .zip(weights.alpha.iter().zip(&weights.beta))
        .map(|((ek, ex), (a, b))| a * ek + b * ex)
        .sum())
}

/// Formats a value as the CSV/JSON cells use it: `inf` for +∞.
pub fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

fn serialize_db<S: Serializer>(v: &f64, ser: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        ser.serialize_str("inf")
    } else {
        ser.serialize_f64(*v)
    }
}

fn deserialize_db<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(de)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) => t.parse().map_err(serde::de::Error::custom),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(serialize_with = "serialize_db", deserialize_with = "deserialize_db")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub kernel_l1: Option<f64>,
    pub stage_loss: Option<f64>,
    pub border: usize,
}

impl MetricReport {
    pub fn evaluate(sr: &Image, gt: &Image, border: usize, kernels: Option<(&Kernel, &Kernel)>) -> Result<Self> {
        Ok(MetricReport {
            psnr_db: psnr(sr, gt, border)?,
            ssim: ssim(sr, gt, border)?,
            kernel_l1: kernels.map(|(e, g)| kernel_l1(e, g)).transpose()?,
            stage_loss: None,
            border,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.serialize(self).map_err(|e| Error::Format(format!("csv: {e}")))?;
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(format!("json: {e}")))
    }
}
