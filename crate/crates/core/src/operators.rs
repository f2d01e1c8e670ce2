//! Linear operators of the degradation model: patch unfolding, its
//! subsampled form, the strided transposed convolution and the gradient
//! adjuster.
//!
//! Conventions shared with [`crate::degrade::convolve2d`]: the kernel is
//! flattened row-major, and the unfolded row for output pixel `(i, j)` holds
//! `x(i + r - a, j + r - b)` in column `a * p + b` (`r = (p - 1) / 2`), so a
//! row dotted with the flattened kernel is exactly the convolution output.
//! Rows follow the image's sample order, channels innermost.

use crate::degrade::check_divisible;
use crate::error::{Error, Result};
use crate::imgcore::{Boundary, Image, Kernel};

/// Floor applied to the adjuster's divisor.
pub const ADJUSTER_EPS: f64 = 1e-8;

/// Largest kernel area `unfold` will materialize.
pub const MAX_UNFOLD_TAPS: usize = 441;
/// Largest pixel count `unfold` will materialize.
pub const MAX_UNFOLD_PIXELS: usize = 512 * 512;

/// Dense row-major matrix of flattened patches.
#[derive(Clone, Debug, PartialEq)]
pub struct UnfoldedMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl UnfoldedMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `M · v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok(self
            .data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `Mᵀ · v`.
    pub fn transpose_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} against {} rows",
                v.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (row, &w) in self.data.chunks_exact(self.cols).zip(v) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * w;
            }
        }
        Ok(out)
    }
}

fn check_kernel_size(p: usize) -> Result<()> {
    if p == 0 || p % 2 == 0 {
        return Err(Error::Precondition(format!("kernel size must be odd, got {p}")));
    }
    Ok(())
}

/// Writes the flattened `p × p` patch feeding output pixel `(i, j, c)`.
#[inline]
fn gather_patch(x: &Image, i: usize, j: usize, c: usize, p: usize, boundary: Boundary, out: &mut [f64]) {
    let r = (p / 2) as isize;
    let (h, w) = (x.height(), x.width());
    for a in 0..p {
        let si = boundary.resolve(i as isize + r - a as isize, h);
        for b in 0..p {
            out[a * p + b] = match (si, boundary.resolve(j as isize + r - b as isize, w)) {
                (Some(si), Some(sj)) => x.get(si, sj, c),
                _ => 0.0,
            };
        }
    }
}

fn unfold_rows(x: &Image, p: usize, step: usize, boundary: Boundary) -> Result<UnfoldedMatrix> {
    check_kernel_size(p)?;
    let (oh, ow, ch) = (x.height() / step, x.width() / step, x.channels());
    let rows = oh * ow * ch;
    if p * p > MAX_UNFOLD_TAPS || x.height() * x.width() > MAX_UNFOLD_PIXELS {
        return Err(Error::Precondition(format!(
            "refusing to materialize a {rows}x{} unfolded matrix; use the matrix-free operators",
            p * p
        )));
    }
    let cols = p * p;
    let mut data = vec![0.0; rows * cols];
    let mut chunks = data.chunks_exact_mut(cols);
    for i in 0..oh {
        for j in 0..ow {
            for c in 0..ch {
                let row = chunks.next().expect("row count");
                gather_patch(x, step * i, step * j, c, p, boundary, row);
            }
        }
    }
    Ok(UnfoldedMatrix { rows, cols, data })
}

/// `U_f(x)`: one row per sample, one column per kernel tap.
pub fn unfold(x: &Image, p: usize, boundary: Boundary) -> Result<UnfoldedMatrix> {
    unfold_rows(x, p, 1, boundary)
}

/// `D_s U_f(x)`: only the rows of pixels that survive `↓s`.
pub fn unfold_downsampled(x: &Image, p: usize, s: usize, boundary: Boundary) -> Result<UnfoldedMatrix> {
    check_divisible(x, s)?;
    unfold_rows(x, p, s, boundary)
}

/// Matrix-free `(x ⊗ k)↓s`, evaluating the convolution only at kept pixels.
///
/// Accumulates in the same order as `convolve2d`, so results agree bitwise.
pub fn blur_downsample(x: &Image, k: &Kernel, s: usize, boundary: Boundary) -> Result<Image> {
    check_divisible(x, s)?;
    let p = k.size();
    if p > x.height().min(x.width()) {
        return Err(Error::Precondition(format!(
            "kernel size {p} exceeds image {}x{}",
            x.height(),
            x.width()
        )));
    }
    let (h, w, ch) = (x.height(), x.width(), x.channels());
    let (oh, ow) = (h / s, w / s);
    let r = k.radius() as isize;
    let mut out = vec![0.0; oh * ow * ch];
    for i in 0..oh {
        for j in 0..ow {
            let (hi, hj) = ((s * i) as isize, (s * j) as isize);
            for c in 0..ch {
                let mut acc = 0.0;
                for a in 0..p {
                    let Some(si) = boundary.resolve(hi + r - a as isize, h) else {
                        continue;
                    };
                    for b in 0..p {
                        if let Some(sj) = boundary.resolve(hj + r - b as isize, w) {
                            acc += k.get(a, b) * x.get(si, sj, c);
                        }
                    }
                }
                out[(i * ow + j) * ch + c] = acc;
            }
        }
    }
    Ok(Image::from_raw(oh, ow, ch, out))
}

/// Matrix-free `(D_s U_f(x))ᵀ · vec(e)`: each kernel tap accumulates the
/// residual-weighted sum of the patch samples it touches.
pub fn unfold_downsampled_transpose(
    x: &Image,
    e: &Image,
    p: usize,
    s: usize,
    boundary: Boundary,
) -> Result<Vec<f64>> {
    check_kernel_size(p)?;
    check_divisible(x, s)?;
    let (h, w, ch) = (x.height(), x.width(), x.channels());
    if e.height() * s != h || e.width() * s != w || e.channels() != ch {
        return Err(Error::DimensionMismatch(format!(
            "residual {}x{}x{} does not match {h}x{w}x{ch} at scale {s}",
            e.height(),
            e.width(),
            e.channels()
        )));
    }
    let r = (p / 2) as isize;
    let mut out = vec![0.0; p * p];
    for i in 0..e.height() {
        for j in 0..e.width() {
            let (hi, hj) = ((s * i) as isize, (s * j) as isize);
            for c in 0..ch {
                let weight = e.get(i, j, c);
                if weight == 0.0 {
                    continue;
                }
                for a in 0..p {
                    let Some(si) = boundary.resolve(hi + r - a as isize, h) else {
                        continue;
                    };
                    for b in 0..p {
                        if let Some(sj) = boundary.resolve(hj + r - b as isize, w) {
                            out[a * p + b] += weight * x.get(si, sj, c);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `k ⊗ᵀ_s e`: the adjoint of `x ↦ (x ⊗ k)↓s` on an `out_h × out_w` grid.
///
/// Each LR sample is scattered back through the kernel taps onto the HR
/// pixels it was computed from. Under circular extension this equals
/// zero-insertion upsampling followed by correlation with `k`; the scatter
/// form stays the exact adjoint for the other extensions too.
pub fn conv_transpose_s(
    k: &Kernel,
    e: &Image,
    s: usize,
    out_h: usize,
    out_w: usize,
    boundary: Boundary,
) -> Result<Image> {
    if s == 0 {
        return Err(Error::Parameter("scale must be >= 1".into()));
    }
    if out_h % s != 0 || out_w % s != 0 || e.height() != out_h / s || e.width() != out_w / s {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} input cannot be transposed onto {out_h}x{out_w} at stride {s}",
            e.height(),
            e.width()
        )));
    }
    let p = k.size();
    let r = k.radius() as isize;
    let ch = e.channels();
    let mut out = vec![0.0; out_h * out_w * ch];
    for i in 0..e.height() {
        for j in 0..e.width() {
            let (hi, hj) = ((s * i) as isize, (s * j) as isize);
            for c in 0..ch {
                let v = e.get(i, j, c);
                if v == 0.0 {
                    continue;
                }
                for a in 0..p {
                    let Some(si) = boundary.resolve(hi + r - a as isize, out_h) else {
                        continue;
                    };
                    for b in 0..p {
                        if let Some(sj) = boundary.resolve(hj + r - b as isize, out_w) {
                            out[(si * out_w + sj) * ch + c] += k.get(a, b) * v;
                        }
                    }
                }
            }
        }
    }
    Ok(Image::from_raw(out_h, out_w, ch, out))
}

/// Divides an HR gradient by the coverage map `k ⊗ᵀ_s 1`, floored at
/// [`ADJUSTER_EPS`], to even out the transposed convolution's overlap.
pub fn gradient_adjuster(g: &Image, k: &Kernel, s: usize, boundary: Boundary) -> Result<Image> {
    let coverage = coverage_map(k, s, g.height(), g.width(), g.channels(), boundary)?;
    let data = g
        .data()
        .iter()
        .zip(coverage.data())
        .map(|(v, d)| v / d.max(ADJUSTER_EPS))
        .collect();
    Ok(Image::from_raw(g.height(), g.width(), g.channels(), data))
}

/// `k ⊗ᵀ_s 1` for an all-ones LR image.
pub fn coverage_map(
    k: &Kernel,
    s: usize,
    out_h: usize,
    out_w: usize,
    channels: usize,
    boundary: Boundary,
) -> Result<Image> {
    if s == 0 || out_h % s != 0 || out_w % s != 0 {
        return Err(Error::Precondition(format!(
            "{out_h}x{out_w} is not divisible by scale {s}"
        )));
    }
    let ones = Image::filled(out_h / s, out_w / s, channels, 1.0)?;
    conv_transpose_s(k, &ones, s, out_h, out_w, boundary)
}
