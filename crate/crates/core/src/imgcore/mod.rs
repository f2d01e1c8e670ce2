//! Image and kernel containers, colour conversion, resampling and file I/O.
//!
//! All samples live in a floating working range of `[0, 1]`; conversion to
//! and from 8-bit happens only at the file boundary.

mod color;
mod io;
mod resize;

pub use color::rgb_to_y;
pub use io::{load_image, read_kernel, save_image, write_kernel, parse_kernel, format_kernel};
pub use resize::{bicubic_resize, cubic_weight};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the kernel weight sum.
pub const KERNEL_SUM_TOL: f64 = 1e-9;

/// A row-major `height × width × channels` grid of samples.
///
/// Channels are interleaved: sample `(i, j, c)` lives at
/// `(i * width + j) * channels + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image, rejecting bad dimensions and non-finite samples.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Precondition(format!(
                "image must be at least 1x1, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Precondition(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "expected {} samples for {height}x{width}x{channels}, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!("non-finite sample at index {pos}")));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    /// Internal constructor for operator outputs; shape is trusted and
    /// finiteness is checked by callers that can produce non-finite values.
    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Image {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Image::filled(height, width, channels, 0.0)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    data.push(f(i, j, c));
                }
            }
        }
        Image::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(i * self.width + j) * self.channels + c]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub(crate) fn ensure_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.ensure_same_shape(other, "subtract")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Image::from_raw(self.height, self.width, self.channels, data))
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Image) -> Result<Image> {
        self.ensure_same_shape(other, "axpy")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(Image::from_raw(self.height, self.width, self.channels, data))
    }

    pub fn scale(&self, alpha: f64) -> Image {
        self.map(|v| alpha * v)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Image::from_raw(self.height, self.width, self.channels, data)
    }

    pub fn dot(&self, other: &Image) -> Result<f64> {
        self.ensure_same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn l1_distance(&self, other: &Image) -> Result<f64> {
        self.ensure_same_shape(other, "l1 distance")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum())
    }

    pub fn clamp01(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Round-trips samples through 8-bit quantization, as a PNG save/load would.
    pub fn quantize8(&self) -> Image {
        self.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
    }

    /// Extracts a single channel as a one-channel image.
    pub fn channel(&self, c: usize) -> Result<Image> {
        if c >= self.channels {
            return Err(Error::Precondition(format!(
                "channel {c} out of range for {}-channel image",
                self.channels
            )));
        }
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Ok(Image::from_raw(self.height, self.width, 1, data))
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::Precondition(format!(
                "crop {height}x{width}+{top}+{left} outside {}x{} image",
                self.height, self.width
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(height * width * c);
        for i in top..top + height {
            let start = (i * self.width + left) * c;
            data.extend_from_slice(&self.data[start..start + width * c]);
        }
        Ok(Image::from_raw(height, width, c, data))
    }

    /// Removes `border` pixels from every side.
    pub fn shave(&self, border: usize) -> Result<Image> {
        if 2 * border >= self.height || 2 * border >= self.width {
            return Err(Error::Precondition(format!(
                "border {border} leaves nothing of a {}x{} image",
                self.height, self.width
            )));
        }
        self.crop(border, border, self.height - 2 * border, self.width - 2 * border)
    }

    /// Center crop to the largest dimensions divisible by `s`.
    pub fn center_crop_multiple(&self, s: usize) -> Result<Image> {
        if s == 0 {
            return Err(Error::Parameter("scale must be >= 1".into()));
        }
        let h = self.height - self.height % s;
        let w = self.width - self.width % s;
        if h == 0 || w == 0 {
            return Err(Error::Precondition(format!(
                "{}x{} image is smaller than scale {s}",
                self.height, self.width
            )));
        }
        self.crop((self.height - h) / 2, (self.width - w) / 2, h, w)
    }

    /// Luma for 3-channel images, a copy otherwise.
    pub fn luma(&self) -> Image {
        if self.channels == 3 {
            rgb_to_y(self).expect("three channels checked")
        } else {
            self.clone()
        }
    }
}

/// A `p × p` non-negative, unit-sum blur kernel with odd `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    /// Validates the simplex invariants exactly as stored.
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        Self::validate_shape(size, &weights)?;
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Format(format!("kernel weight {w} is negative or non-finite")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > KERNEL_SUM_TOL {
            return Err(Error::Format(format!("kernel weights sum to {sum}, expected 1")));
        }
        Ok(Kernel { size, weights })
    }

    /// Scales non-negative weights to unit sum.
    pub fn normalized(size: usize, weights: Vec<f64>) -> Result<Self> {
        Self::validate_shape(size, &weights)?;
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Parameter("kernel weights must be finite and non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Parameter("kernel weights sum to zero".into()));
        }
        Ok(Kernel {
            size,
            weights: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    fn validate_shape(size: usize, weights: &[f64]) -> Result<()> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::Precondition(format!("kernel size must be odd, got {size}")));
        }
        if weights.len() != size * size {
            return Err(Error::DimensionMismatch(format!(
                "kernel of size {size} needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        Ok(())
    }

    /// Center weight 1, all others 0.
    pub fn delta(size: usize) -> Result<Self> {
        let mut w = vec![0.0; size * size];
        if let Some(center) = w.get_mut((size * size) / 2) {
            *center = 1.0;
        }
        Kernel::new(size, w)
    }

    pub fn uniform(size: usize) -> Result<Self> {
        Kernel::normalized(size, vec![1.0; size * size])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.weights[a * self.size + b]
    }

    pub fn l1_distance(&self, other: &Kernel) -> Result<f64> {
        if self.size != other.size {
            return Err(Error::DimensionMismatch(format!(
                "kernel sizes {} vs {}",
                self.size, other.size
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum())
    }

    pub fn to_image(&self) -> Image {
        Image::from_raw(self.size, self.size, 1, self.weights.clone())
    }
}

/// Extension rule for samples outside the image grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Clamp to the nearest edge sample.
    #[default]
    Replicate,
    /// Wrap around (periodic extension).
    Circular,
    /// Outside samples are zero.
    Zero,
}

impl Boundary {
    /// Maps a possibly out-of-range coordinate onto `0..len`, or `None` for
    /// zero extension.
    #[inline]
    pub fn resolve(self, idx: isize, len: usize) -> Option<usize> {
        let n = len as isize;
        match self {
            Boundary::Replicate => Some(idx.clamp(0, n - 1) as usize),
            Boundary::Circular => Some(idx.rem_euclid(n) as usize),
            Boundary::Zero => (0..n).contains(&idx).then_some(idx as usize),
        }
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Boundary::Replicate => "replicate",
            Boundary::Circular => "circular",
            Boundary::Zero => "zero",
        })
    }
}
