//! Alternating kernel/image proximal-gradient solver.
//!
//! Each stage runs a kernel step (gradient through `D_s U_f(X)`, then
//! projection onto the simplex) followed by an image step (gradient through
//! the strided transposed convolution, evened out by the gradient adjuster,
//! then the image prox). Gradients are those of the fidelity
//! `f(X, K) = ½‖(X ⊗ K)↓s − Y‖²`, so steps descend.

pub mod linesearch;
pub mod prox;

use serde::{Deserialize, Serialize};

pub use linesearch::{backtracking_step, backtracking_step_along, proximal_backtracking};
pub use prox::{prox_simplex, tv_prox, ImageProx, ProxOperator, SimplexProjection};

use crate::degrade::{gaussian_kernel, KernelShape};
use crate::error::{Error, Result};
use crate::imgcore::{bicubic_resize, Boundary, Image, Kernel};
use crate::metrics;
use crate::operators::{blur_downsample, conv_transpose_s, gradient_adjuster, unfold_downsampled_transpose};

/// Step-size policy for one of the two updates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StepSize {
    Fixed { delta: f64 },
    /// Backtracking from `initial`; later stages warm-start from twice the
    /// previously accepted step.
    Backtracking { initial: f64 },
}

impl Default for StepSize {
    fn default() -> Self {
        StepSize::Backtracking { initial: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub stages: usize,
    pub scale: usize,
    pub kernel_size: usize,
    pub kernel_step: StepSize,
    pub image_step: StepSize,
    pub image_prox: ImageProx,
    pub boundary: Boundary,
    /// Width of the initial Gaussian kernel; `None` means `p / 6`.
    pub init_sigma: Option<f64>,
    /// When false the kernel stays at its initial value.
    pub update_kernel: bool,
    /// Apply the coverage-normalizing gradient adjuster in the image step.
    pub adjust_gradient: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            stages: 19,
            scale: 2,
            kernel_size: 11,
            kernel_step: StepSize::default(),
            image_step: StepSize::default(),
            image_prox: ImageProx::Identity,
            boundary: Boundary::Replicate,
            init_sigma: None,
            update_kernel: true,
            adjust_gradient: true,
        }
    }
}

impl SolverConfig {
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
        for step in [self.kernel_step, self.image_step] {
            let d = match step {
                StepSize::Fixed { delta } => {
                    if delta.is_finite() && delta >= 0.0 {
                        continue;
                    }
                    delta
                }
                StepSize::Backtracking { initial } => initial,
            };
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Parameter(format!("step size {d} must be positive")));
            }
        }
        match self.image_prox {
            ImageProx::Tikhonov { tau } | ImageProx::Tv { tau, .. } if !(tau >= 0.0) => {
                Err(Error::Parameter(format!("prox weight {tau} must be >= 0")))
            }
            _ => Ok(()),
        }
    }

    pub fn initial_sigma(&self) -> f64 {
        self.init_sigma.unwrap_or(self.kernel_size as f64 / 6.0)
    }
}

/// One row of the per-stage trace. Stage 0 is the initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    /// Fidelity after the full stage.
    pub fidelity: f64,
    /// Fidelity between the kernel step and the image step.
    pub fidelity_after_kernel: f64,
    /// Frobenius norm of `K_t − K_{t-1}`.
    pub kernel_change: f64,
    pub psnr: Option<f64>,
    pub kernel_l1: Option<f64>,
    pub image_l1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub x: Image,
    pub k: Kernel,
    pub stage: usize,
    pub fidelity: f64,
    pub trace: Vec<StageRecord>,
    /// Last accepted kernel and image step sizes.
    pub kernel_delta: f64,
    pub image_delta: f64,
}

/// Ground truth for diagnostics. Either part may be absent.
#[derive(Clone, Copy, Debug, Default)]
pub struct GroundTruth<'a> {
    pub x: Option<&'a Image>,
    pub k: Option<&'a Kernel>,
}

impl<'a> GroundTruth<'a> {
    pub fn new(x: &'a Image, k: &'a Kernel) -> Self {
        GroundTruth { x: Some(x), k: Some(k) }
    }
}

fn check_dims(y: &Image, x: &Image, s: usize) -> Result<()> {
    if x.height() != s * y.height() || x.width() != s * y.width() || x.channels() != y.channels() {
        return Err(Error::DimensionMismatch(format!(
            "HR {}x{}x{} is not scale {s} of LR {}x{}x{}",
            x.height(),
            x.width(),
            x.channels(),
            y.height(),
            y.width(),
            y.channels()
        )));
    }
    Ok(())
}

/// `y − (x ⊗ k)↓s`.
pub fn residual_lr(y: &Image, x: &Image, k: &Kernel, s: usize, boundary: Boundary) -> Result<Image> {
    check_dims(y, x, s)?;
    y.sub(&blur_downsample(x, k, s, boundary)?)
}

/// `½‖(x ⊗ k)↓s − y‖²`.
pub fn fidelity(y: &Image, x: &Image, k: &Kernel, s: usize, boundary: Boundary) -> Result<f64> {
    Ok(0.5 * residual_lr(y, x, k, s, boundary)?.norm_sq())
}

/// Kernel gradient `(D_s U_f(x))ᵀ vec((x ⊗ k)↓s − y)`, row-major `p × p`.
pub fn grad_k(y: &Image, x: &Image, k: &Kernel, s: usize, boundary: Boundary) -> Result<Vec<f64>> {
    check_dims(y, x, s)?;
    let r = blur_downsample(x, k, s, boundary)?.sub(y)?;
    unfold_downsampled_transpose(x, &r, k.size(), s, boundary)
}

/// Image gradient `k ⊗ᵀ_s ((x ⊗ k)↓s − y)`.
pub fn grad_x(y: &Image, x: &Image, k: &Kernel, s: usize, boundary: Boundary) -> Result<Image> {
    check_dims(y, x, s)?;
    let r = blur_downsample(x, k, s, boundary)?.sub(y)?;
    conv_transpose_s(k, &r, s, x.height(), x.width(), boundary)
}

/// Bicubic upsampling of `y` and a centered Gaussian kernel.
pub fn init(y: &Image, cfg: &SolverConfig) -> Result<SolverState> {
    cfg.validate()?;
    let s = cfg.scale;
    let x = bicubic_resize(y, s * y.height(), s * y.width())?;
    let k = gaussian_kernel(cfg.kernel_size, KernelShape::Iso { sigma: cfg.initial_sigma() })?;
    SolverState::new(y, x, k, cfg)
}

impl SolverState {
    /// Starts from an arbitrary `(x, k)` pair.
    pub fn new(y: &Image, x: Image, k: Kernel, cfg: &SolverConfig) -> Result<Self> {
        check_dims(y, &x, cfg.scale)?;
        if k.size() != cfg.kernel_size {
            return Err(Error::DimensionMismatch(format!(
                "kernel size {} vs configured {}",
                k.size(),
                cfg.kernel_size
            )));
        }
        let fid = fidelity(y, &x, &k, cfg.scale, cfg.boundary)?;
        let initial = |s: StepSize| match s {
            StepSize::Fixed { delta } => delta,
            StepSize::Backtracking { initial } => initial,
        };
        Ok(SolverState {
            x,
            k,
            stage: 0,
            fidelity: fid,
            trace: Vec::new(),
            kernel_delta: initial(cfg.kernel_step),
            image_delta: initial(cfg.image_step),
        })
    }
}

fn divergence(stage: usize, reason: impl Into<String>, state: &SolverState) -> Error {
    Error::Divergence {
        stage,
        reason: reason.into(),
        state: Some(Box::new(state.clone())),
    }
}

fn warm_start(last: f64, initial: f64) -> f64 {
    if last > 0.0 {
        2.0 * last
    } else {
        initial
    }
}

/// Kernel update; returns the new kernel and the step taken.
fn kernel_update(state: &SolverState, y: &Image, cfg: &SolverConfig) -> Result<(Kernel, f64)> {
    let (s, b, p) = (cfg.scale, cfg.boundary, cfg.kernel_size);
    let g = grad_k(y, &state.x, &state.k, s, b)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(divergence(state.stage + 1, "non-finite kernel gradient", state));
    }
    let v = state.k.weights();
    let (delta, weights) = match cfg.kernel_step {
        StepSize::Fixed { delta } => {
            let trial: Vec<f64> = v.iter().zip(&g).map(|(k, g)| k - delta * g).collect();
            (delta, prox_simplex(&trial))
        }
        StepSize::Backtracking { initial } => {
            let x = &state.x;
            let f = |w: &[f64]| match Kernel::new(p, w.to_vec()) {
                Ok(k) => fidelity(y, x, &k, s, b).unwrap_or(f64::INFINITY),
                Err(_) => f64::INFINITY,
            };
            proximal_backtracking(f, prox_simplex, v, &g, warm_start(state.kernel_delta, initial))
                .map_err(|e| restage(e, state))?
        }
    };
    let k = Kernel::new(p, weights).map_err(|e| divergence(state.stage + 1, e.to_string(), state))?;
    Ok((k, delta))
}

/// Image update on a state whose kernel is already current.
fn image_update(
    state: &SolverState,
    y: &Image,
    cfg: &SolverConfig,
    prox: &dyn ProxOperator,
) -> Result<(Image, f64)> {
    let (s, b) = (cfg.scale, cfg.boundary);
    let g = grad_x(y, &state.x, &state.k, s, b)?;
    let d = if cfg.adjust_gradient {
        gradient_adjuster(&g, &state.k, s, b)?
    } else {
        g.clone()
    };
    if !d.is_finite() {
        return Err(divergence(state.stage + 1, "non-finite image gradient", state));
    }
    let delta = match cfg.image_step {
        StepSize::Fixed { delta } => delta,
        StepSize::Backtracking { initial } => {
            let (h, w, c) = (state.x.height(), state.x.width(), state.x.channels());
            let k = &state.k;
            let f = |v: &[f64]| {
                let xi = Image::from_raw(h, w, c, v.to_vec());
                fidelity(y, &xi, k, s, b).unwrap_or(f64::INFINITY)
            };
            backtracking_step_along(f, state.x.data(), g.data(), d.data(), warm_start(state.image_delta, initial))
                .map_err(|e| restage(e, state))?
        }
    };
    let x = prox.apply(&state.x.axpy(-delta, &d)?, delta);
    if !x.is_finite() {
        return Err(divergence(state.stage + 1, "non-finite image after prox", state));
    }
    Ok((x, delta))
}

fn restage(err: Error, state: &SolverState) -> Error {
    match err {
        Error::Divergence { reason, .. } => divergence(state.stage + 1, reason, state),
        other => other,
    }
}

/// One kernel step from `state`.
pub fn k_step(state: &SolverState, y: &Image, cfg: &SolverConfig) -> Result<Kernel> {
    Ok(kernel_update(state, y, cfg)?.0)
}

/// One image step from `state` using the configured image prox.
pub fn x_step(state: &SolverState, y: &Image, cfg: &SolverConfig) -> Result<Image> {
    Ok(image_update(state, y, cfg, &cfg.image_prox)?.0)
}

/// Initializes and runs `cfg.stages` kernel-then-image stages.
pub fn run(y: &Image, cfg: &SolverConfig, gt: Option<GroundTruth<'_>>) -> Result<SolverState> {
    run_with_prox(y, cfg, &cfg.image_prox, gt)
}

/// [`run`] with a caller-supplied image prox in place of `cfg.image_prox`.
pub fn run_with_prox(
    y: &Image,
    cfg: &SolverConfig,
    prox: &dyn ProxOperator,
    gt: Option<GroundTruth<'_>>,
) -> Result<SolverState> {
    let state = init(y, cfg)?;
    run_from(state, y, cfg, prox, gt)
}

/// Runs the remaining stages from an existing state.
pub fn run_from(
    mut state: SolverState,
    y: &Image,
    cfg: &SolverConfig,
    prox: &dyn ProxOperator,
    gt: Option<GroundTruth<'_>>,
) -> Result<SolverState> {
    cfg.validate()?;
    if let Some(gt) = gt {
        if gt.x.is_some_and(|x| !x.same_shape(&state.x)) || gt.k.is_some_and(|k| k.size() != state.k.size()) {
            return Err(Error::DimensionMismatch(
                "ground truth does not match the solver's HR/kernel shape".into(),
            ));
        }
    }
    let (s, b) = (cfg.scale, cfg.boundary);
    if state.trace.is_empty() {
        let record = stage_record(&state, state.fidelity, 0.0, gt, s)?;
        state.trace.push(record);
    }
    for _ in 0..cfg.stages {
        let prev_k = state.k.clone();
        if cfg.update_kernel {
            let (k, delta) = kernel_update(&state, y, cfg)?;
            state.k = k;
            state.kernel_delta = delta;
        }
        let mid = fidelity(y, &state.x, &state.k, s, b)?;
        let (x, delta) = image_update(&state, y, cfg, prox)?;
        let fid = fidelity(y, &x, &state.k, s, b)?;
        if !fid.is_finite() {
            return Err(divergence(state.stage + 1, "non-finite fidelity", &state));
        }
        state.x = x;
        state.image_delta = delta;
        state.stage += 1;
        state.fidelity = fid;
        let change = state
            .k
            .weights()
            .iter()
            .zip(prev_k.weights())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let record = stage_record(&state, mid, change, gt, s)?;
        state.trace.push(record);
    }
    Ok(state)
}

fn stage_record(
    state: &SolverState,
    mid: f64,
    change: f64,
    gt: Option<GroundTruth<'_>>,
    s: usize,
) -> Result<StageRecord> {
    // Shave `s` pixels when the image is large enough to keep an interior.
    let border = if 2 * s < state.x.height().min(state.x.width()) { s } else { 0 };
    let gt = gt.unwrap_or_default();
    let psnr = gt.x.map(|x| metrics::psnr(&state.x, x, border)).transpose()?;
    let image_l1 = gt.x.map(|x| state.x.l1_distance(x)).transpose()?;
    let kernel_l1 = gt.k.map(|k| state.k.l1_distance(k)).transpose()?;
    Ok(StageRecord {
        stage: state.stage,
        fidelity: state.fidelity,
        fidelity_after_kernel: mid,
        kernel_change: change,
        psnr,
        kernel_l1,
        image_l1,
    })
}

#[cfg(test)]
mod tests;
