//! Proximal operators: the simplex projection for kernels and classical
//! image priors standing in for learned proximal networks.

use serde::{Deserialize, Serialize};

use crate::imgcore::Image;

/// `v ↦ argmin_u ½‖u − v‖² + step · g(u)` for some regularizer `g`.
///
/// Any operator with this signature can drive the image update, including
/// a learned one.
pub trait ProxOperator: Send + Sync {
    fn apply(&self, v: &Image, step: f64) -> Image;
}

/// Euclidean projection onto `{k : k ≥ 0, Σk = 1}` by sort-and-threshold.
///
/// Input must be finite.
pub fn prox_simplex(v: &[f64]) -> Vec<f64> {
    debug_assert!(v.iter().all(|x| x.is_finite()));
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (n, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (n + 1) as f64;
        // Support size is the last index where the sorted entry exceeds
        // its running threshold.
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Simplex projection as a [`ProxOperator`] over a kernel-shaped grid.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimplexProjection;

impl ProxOperator for SimplexProjection {
    fn apply(&self, v: &Image, _step: f64) -> Image {
        Image::from_raw(v.height(), v.width(), v.channels(), prox_simplex(v.data()))
    }
}

/// Built-in image priors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ImageProx {
    /// No prior: a plain gradient step.
    #[default]
    Identity,
    /// `g(u) = τ/2 ‖u‖²`, so `prox(v) = v / (1 + τ·step)`.
    Tikhonov { tau: f64 },
    /// Isotropic total variation `τ·TV(u)` via Chambolle's dual projection.
    Tv { tau: f64, inner_iters: usize },
}

impl ProxOperator for ImageProx {
    fn apply(&self, v: &Image, step: f64) -> Image {
        match *self {
            ImageProx::Identity => v.clone(),
            ImageProx::Tikhonov { tau } => v.scale(1.0 / (1.0 + tau * step)),
            ImageProx::Tv { tau, inner_iters } => tv_prox(v, tau * step, inner_iters),
        }
    }
}

const CHAMBOLLE_DT: f64 = 0.125;

/// `argmin_u ½‖u − v‖² + weight · TV(u)`, channel by channel.
pub fn tv_prox(v: &Image, weight: f64, iters: usize) -> Image {
    if weight <= 0.0 || iters == 0 {
        return v.clone();
    }
    let (h, w, ch) = (v.height(), v.width(), v.channels());
    let mut out = v.clone();
    for c in 0..ch {
        let f: Vec<f64> = (0..h * w).map(|n| v.data()[n * ch + c]).collect();
        let mut px = vec![0.0; h * w];
        let mut py = vec![0.0; h * w];
        let mut div = vec![0.0; h * w];
        for _ in 0..iters {
            divergence(&px, &py, h, w, &mut div);
            let g: Vec<f64> = div.iter().zip(&f).map(|(d, f)| d - f / weight).collect();
            for i in 0..h {
                for j in 0..w {
                    let n = i * w + j;
                    let gx = if i + 1 < h { g[n + w] - g[n] } else { 0.0 };
                    let gy = if j + 1 < w { g[n + 1] - g[n] } else { 0.0 };
                    let norm = (gx * gx + gy * gy).sqrt();
                    let denom = 1.0 + CHAMBOLLE_DT * norm;
                    px[n] = (px[n] + CHAMBOLLE_DT * gx) / denom;
                    py[n] = (py[n] + CHAMBOLLE_DT * gy) / denom;
                }
            }
        }
        divergence(&px, &py, h, w, &mut div);
        for n in 0..h * w {
            out.data_mut()[n * ch + c] = f[n] - weight * div[n];
        }
    }
    out
}

/// Discrete divergence, the negative adjoint of forward differences.
fn divergence(px: &[f64], py: &[f64], h: usize, w: usize, out: &mut [f64]) {
    for i in 0..h {
        for j in 0..w {
            let n = i * w + j;
            let dx = match i {
                _ if h == 1 => 0.0,
                0 => px[n],
                _ if i == h - 1 => -px[n - w],
                _ => px[n] - px[n - w],
            };
            let dy = match j {
                _ if w == 1 => 0.0,
                0 => py[n],
                _ if j == w - 1 => -py[n - 1],
                _ => py[n] - py[n - 1],
            };
            out[n] = dx + dy;
        }
    }
}
