//! Synthetic degradation `Y = (X ⊗ K)↓s + N` and the blur-kernel families
//! used for evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{Boundary, Image, Kernel};

/// Gaussian blur parameters, all widths are standard deviations in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelShape {
    Iso { sigma: f64 },
    Aniso { lambda1: f64, lambda2: f64, theta: f64 },
}

impl KernelShape {
    fn validate(&self) -> Result<()> {
        let widths: &[f64] = match self {
            KernelShape::Iso { sigma } => &[*sigma],
            KernelShape::Aniso { lambda1, lambda2, theta } => {
                if !theta.is_finite() {
                    return Err(Error::Parameter(format!("rotation {theta} is not finite")));
                }
                &[*lambda1, *lambda2]
            }
        };
        for &w in widths {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Parameter(format!(
                    "kernel width {w} must be positive (singular covariance)"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub scale: usize,
    pub kernel_size: usize,
    pub kernel: KernelShape,
    /// Noise standard deviation on the 0-255 scale.
    pub noise: f64,
    pub seed: u64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl DegradationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::Parameter("scale must be >= 1".into()));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::Parameter(format!(
                "kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Parameter(format!("noise level {} must be >= 0", self.noise)));
        }
        self.kernel.validate()
    }
}

/// Samples `exp(-½ dᵀ Σ⁻¹ d)` on a `p × p` grid centered at `(p-1)/2` and
/// normalizes to unit sum. `d` is (row offset, column offset) and
/// `Σ = R(θ) diag(λ1², λ2²) R(θ)ᵀ`.
pub fn gaussian_kernel(p: usize, shape: KernelShape) -> Result<Kernel> {
    shape.validate()?;
    if p == 0 || p % 2 == 0 {
        return Err(Error::Parameter(format!("kernel size must be odd, got {p}")));
    }
    let (l1, l2, theta) = match shape {
        KernelShape::Iso { sigma } => (sigma, sigma, 0.0),
        KernelShape::Aniso { lambda1, lambda2, theta } => (lambda1, lambda2, theta),
    };
    let (sin, cos) = theta.sin_cos();
    let center = (p as f64 - 1.0) / 2.0;
    let mut weights = Vec::with_capacity(p * p);
    for i in 0..p {
        for j in 0..p {
            let d0 = i as f64 - center;
            let d1 = j as f64 - center;
            // Coordinates in the principal-axis frame: u = Rᵀ d.
            let u1 = cos * d0 + sin * d1;
            let u2 = -sin * d0 + cos * d1;
            let q = u1 * u1 / (l1 * l1) + u2 * u2 / (l2 * l2);
            weights.push((-0.5 * q).exp());
        }
    }
    Kernel::normalized(p, weights)
}

/// Same-size 2-D convolution (kernel flipped) with the given extension.
pub fn convolve2d(x: &Image, k: &Kernel, boundary: Boundary) -> Result<Image> {
    let (h, w, ch) = (x.height(), x.width(), x.channels());
    let p = k.size();
    if p > h.min(w) {
        return Err(Error::Precondition(format!(
            "kernel size {p} exceeds image {h}x{w}"
        )));
    }
    let r = k.radius() as isize;
    let mut out = vec![0.0; h * w * ch];
    for i in 0..h {
        for j in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for a in 0..p {
                    let Some(si) = boundary.resolve(i as isize + r - a as isize, h) else {
                        continue;
                    };
                    for b in 0..p {
                        if let Some(sj) = boundary.resolve(j as isize + r - b as isize, w) {
                            acc += k.get(a, b) * x.get(si, sj, c);
                        }
                    }
                }
                out[(i * w + j) * ch + c] = acc;
            }
        }
    }
    Ok(Image::from_raw(h, w, ch, out))
}

/// Keeps the upper-left pixel of every `s × s` block.
pub fn downsample_s(x: &Image, s: usize) -> Result<Image> {
    check_divisible(x, s)?;
    let (h, w, ch) = (x.height() / s, x.width() / s, x.channels());
    let mut out = Vec::with_capacity(h * w * ch);
    for i in 0..h {
        for j in 0..w {
            for c in 0..ch {
                out.push(x.get(s * i, s * j, c));
            }
        }
    }
    Ok(Image::from_raw(h, w, ch, out))
}

pub(crate) fn check_divisible(x: &Image, s: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::Parameter("scale must be >= 1".into()));
    }
    if x.height() % s != 0 || x.width() % s != 0 {
        return Err(Error::Precondition(format!(
            "{}x{} image is not divisible by scale {s}",
            x.height(),
            x.width()
        )));
    }
    Ok(())
}

/// Adds i.i.d. `N(0, (σ/255)²)` noise from a ChaCha8 stream seeded with
/// `seed`. No clamping.
pub fn add_awgn(x: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Parameter(format!("noise level {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let normal = Normal::new(0.0, sigma / 255.0)
        .map_err(|e| Error::Parameter(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(x.map(|v| v + normal.sample(&mut rng)))
}

/// Full forward model. Returns the observation and the ground-truth kernel.
pub fn degrade(x: &Image, spec: &DegradationSpec) -> Result<(Image, Kernel)> {
    spec.validate()?;
    let k = gaussian_kernel(spec.kernel_size, spec.kernel)?;
    let blurred = convolve2d(x, &k, spec.boundary)?;
    let lr = downsample_s(&blurred, spec.scale)?;
    let y = add_awgn(&lr, spec.noise, spec.seed)?;
    Ok((y, k))
}

/// Kernel size used for the Gaussian8 protocol.
pub const GAUSSIAN8_SIZE: usize = 21;

/// The eight evenly spaced widths (endpoints included) of the Gaussian8
/// protocol for scale 2, 3 or 4.
pub fn gaussian8_sigmas(scale: usize) -> Result<[f64; 8]> {
    let (lo, hi) = match scale {
        2 => (0.8, 1.6),
        3 => (1.35, 2.40),
        4 => (1.8, 3.2),
        s => return Err(Error::Parameter(format!("Gaussian8 defined for scales 2-4, got {s}"))),
    };
    let mut out = [0.0; 8];
    for (n, v) in out.iter_mut().enumerate() {
        *v = lo + (hi - lo) * n as f64 / 7.0;
    }
    out[7] = hi;
    Ok(out)
}

pub fn gaussian8(scale: usize) -> Result<Vec<Kernel>> {
    gaussian8_sigmas(scale)?
        .iter()
        .map(|&sigma| gaussian_kernel(GAUSSIAN8_SIZE, KernelShape::Iso { sigma }))
        .collect()
}

/// Kernel size of the anisotropic protocol per scale.
pub fn setting2_kernel_size(scale: usize) -> Result<usize> {
    match scale {
        2 => Ok(11),
        3 => Ok(15),
        4 => Ok(21),
        s => Err(Error::Parameter(format!("setting 2 defined for scales 2-4, got {s}"))),
    }
}

/// The anisotropic test grid: width pairs (0.8, 1.6) and (2.0, 4.0), each
/// rotated by 0, π/4, π/2 and 3π/4.
pub fn setting2_grid() -> Vec<KernelShape> {
    use std::f64::consts::FRAC_PI_4;
    let mut out = Vec::with_capacity(8);
    for (lambda1, lambda2) in [(0.8, 1.6), (2.0, 4.0)] {
        for n in 0..4 {
            out.push(KernelShape::Aniso {
                lambda1,
                lambda2,
                theta: n as f64 * FRAC_PI_4,
            });
        }
    }
    out
}

/// Seeded sampler of the anisotropic training distribution:
/// `λ1, λ2 ~ U(0.6, 5.0)`, `θ ~ U[-π, π]`, noise `~ U[0, 25]`.
pub struct Setting2Sampler {
    rng: ChaCha8Rng,
}

impl Setting2Sampler {
    pub fn new(seed: u64) -> Self {
        Setting2Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample_kernel(&mut self) -> KernelShape {
        use std::f64::consts::PI;
        KernelShape::Aniso {
            lambda1: self.rng.random_range(0.6..5.0),
            lambda2: self.rng.random_range(0.6..5.0),
            theta: self.rng.random_range(-PI..=PI),
        }
    }

    pub fn sample_noise(&mut self) -> f64 {
        self.rng.random_range(0.0..=25.0)
    }
}
