//! Procedural grayscale test charts, so benchmarks and tests need no
//! external images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::imgcore::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChartKind {
    /// Random axis-aligned rectangles over a soft gradient.
    Blocks,
    /// Concentric rings with radially increasing frequency.
    Rings,
    /// Random filled disks and a diagonal step edge.
    Disks,
    /// Superposed oriented sinusoids with a few hard edges.
    Waves,
}

impl ChartKind {
    pub const ALL: [ChartKind; 4] = [ChartKind::Blocks, ChartKind::Rings, ChartKind::Disks, ChartKind::Waves];

    pub fn name(self) -> &'static str {
        match self {
            ChartKind::Blocks => "blocks",
            ChartKind::Rings => "rings",
            ChartKind::Disks => "disks",
            ChartKind::Waves => "waves",
        }
    }
}

pub fn chart(kind: ChartKind, height: usize, width: usize, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (height as f64, width as f64);
    match kind {
        ChartKind::Blocks => {
            let rects: Vec<(f64, f64, f64, f64, f64)> = (0..12)
                .map(|_| {
                    let top = rng.random_range(0.0..hf * 0.8);
                    let left = rng.random_range(0.0..wf * 0.8);
                    let h = rng.random_range(hf * 0.1..hf * 0.5);
                    let w = rng.random_range(wf * 0.1..wf * 0.5);
                    (top, left, h, w, rng.random_range(0.0..1.0))
                })
                .collect();
            Image::from_fn(height, width, 1, |i, j, _| {
                let (y, x) = (i as f64, j as f64);
                let mut v = 0.3 + 0.4 * (x / wf) * (y / hf);
                for &(t, l, h, w, level) in &rects {
                    if y >= t && y < t + h && x >= l && x < l + w {
                        v = 0.5 * v + 0.5 * level;
                    }
                }
                v.clamp(0.0, 1.0)
            })
        }
        ChartKind::Rings => {
            let (cy, cx) = (rng.random_range(0.4..0.6) * hf, rng.random_range(0.4..0.6) * wf);
            let scale = hf.min(wf);
            Image::from_fn(height, width, 1, |i, j, _| {
                let r = ((i as f64 - cy).powi(2) + (j as f64 - cx).powi(2)).sqrt() / scale;
                0.5 + 0.45 * (40.0 * r * r + 6.0 * r).cos()
            })
        }
        ChartKind::Disks => {
            let disks: Vec<(f64, f64, f64, f64)> = (0..10)
                .map(|_| {
                    (
                        rng.random_range(0.0..hf),
                        rng.random_range(0.0..wf),
                        rng.random_range(0.05..0.25) * hf.min(wf),
                        rng.random_range(0.0..1.0),
                    )
                })
                .collect();
            Image::from_fn(height, width, 1, |i, j, _| {
                let (y, x) = (i as f64, j as f64);
                let mut v = if x / wf + y / hf > 1.0 { 0.75 } else { 0.2 };
                for &(cy, cx, r, level) in &disks {
                    if (y - cy).powi(2) + (x - cx).powi(2) <= r * r {
                        v = level;
                    }
                }
                v
            })
        }
        ChartKind::Waves => {
            let waves: Vec<(f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        rng.random_range(0.0..std::f64::consts::PI),
                        rng.random_range(0.05..0.6),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            let edge = rng.random_range(0.3..0.7) * wf;
            Image::from_fn(height, width, 1, |i, j, _| {
                let (y, x) = (i as f64, j as f64);
                let mut v = 0.0;
                for &(angle, freq, phase) in &waves {
                    v += (freq * (x * angle.cos() + y * angle.sin()) + phase).sin();
                }
                let base = 0.5 + 0.1 * v;
                if x > edge { (base + 0.25).min(1.0) } else { base.max(0.0) }
            })
        }
    }
}

/// The built-in benchmark set: one chart of each kind.
pub fn builtin_charts(size: usize, seed: u64) -> Result<Vec<(String, Image)>> {
    ChartKind::ALL
        .iter()
        .enumerate()
        .map(|(n, &kind)| Ok((kind.name().to_string(), chart(kind, size, size, seed.wrapping_add(n as u64))?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_valid_and_deterministic() {
        for kind in ChartKind::ALL {
            let a = chart(kind, 40, 48, 7).unwrap();
            assert_eq!((a.height(), a.width(), a.channels()), (40, 48, 1));
            assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(a, chart(kind, 40, 48, 7).unwrap());
            let mean = a.data().iter().sum::<f64>() / a.data().len() as f64;
            let var = a.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / a.data().len() as f64;
            assert!(var > 1e-3, "{kind:?} is nearly flat");
        }
    }
}
