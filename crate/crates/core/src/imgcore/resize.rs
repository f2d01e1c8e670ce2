use super::Image;
use crate::error::{Error, Result};

const CUBIC_A: f64 = -0.5;

/// Cubic convolution kernel with `a = -0.5`.
pub fn cubic_weight(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((CUBIC_A + 2.0) * x - (CUBIC_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((CUBIC_A * x - 5.0 * CUBIC_A) * x + 8.0 * CUBIC_A) * x - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

/// Four source taps and weights per output coordinate along one axis.
///
/// Output index `d` samples source position `d * in_len / out_len`, so the
/// grids share their upper-left sample. At integer scale `s` the output at
/// `s * i` reproduces input sample `i`, which is the sampling grid of the
/// upper-left downsampler.
fn taps(in_len: usize, out_len: usize) -> Vec<([usize; 4], [f64; 4])> {
    let ratio = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|d| {
            let src = d as f64 * ratio;
            let base = src.floor();
            let t = src - base;
            let base = base as isize;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for (n, off) in (-1isize..=2).enumerate() {
                idx[n] = (base + off).clamp(0, in_len as isize - 1) as usize;
                w[n] = cubic_weight(t - off as f64);
            }
            (idx, w)
        })
        .collect()
}

/// Separable bicubic resampling with edge replication.
pub fn bicubic_resize(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Precondition(format!(
            "target size must be at least 1x1, got {out_h}x{out_w}"
        )));
    }
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let col_taps = taps(w, out_w);
    let row_taps = taps(h, out_h);

    // Horizontal pass: h x out_w.
    let mut tmp = vec![0.0; h * out_w * c];
    for i in 0..h {
        for (j, (idx, wt)) in col_taps.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0.0;
                for n in 0..4 {
                    acc += wt[n] * img.get(i, idx[n], ch);
                }
                tmp[(i * out_w + j) * c + ch] = acc;
            }
        }
    }

    let mut out = vec![0.0; out_h * out_w * c];
    for (i, (idx, wt)) in row_taps.iter().enumerate() {
        for j in 0..out_w {
            for ch in 0..c {
                let mut acc = 0.0;
                for n in 0..4 {
                    acc += wt[n] * tmp[(idx[n] * out_w + j) * c + ch];
                }
                out[(i * out_w + j) * c + ch] = acc;
            }
        }
    }
    Ok(Image::from_raw(out_h, out_w, c, out))
}
