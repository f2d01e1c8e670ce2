//! JSON configuration files. Keys mirror the struct fields; anything left
//! out takes its default, unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::SolverConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Isotropic Gaussian8 kernels, noise-free by default.
    #[default]
    Setting1,
    /// The anisotropic 2×4 grid.
    Setting2,
}

/// Where the benchmark's blur kernels come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelSource {
    Gaussian8,
    /// Kernel text files; all must have the same size.
    Files { paths: Vec<PathBuf> },
    Setting2Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSpec {
    /// Directory of PNG/PNM ground-truth images. `None` uses the built-in
    /// procedural charts.
    pub images: Option<PathBuf>,
    /// Side length of the built-in charts.
    pub chart_size: usize,
    pub setting: Setting,
    pub scale: usize,
    /// Noise levels on the 0-255 scale.
    pub noise: Vec<f64>,
    /// `None` picks the setting's own kernel family.
    pub kernels: Option<KernelSource>,
    /// `scale` and `kernel_size` here are overridden by the benchmark's.
    pub solver: SolverConfig,
    pub output: PathBuf,
    pub master_seed: u64,
    /// Border shaved before PSNR/SSIM; `None` means `scale`.
    pub border: Option<usize>,
    /// Also write each case's SR image and kernel.
    pub save_outputs: bool,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            images: None,
            chart_size: 64,
            setting: Setting::Setting1,
            scale: 2,
            noise: vec![0.0],
            kernels: None,
            solver: SolverConfig::default(),
            output: PathBuf::from("bench-out"),
            master_seed: 0,
            border: None,
            save_outputs: false,
        }
    }
}

impl BenchmarkSpec {
    pub fn kernel_source(&self) -> KernelSource {
        self.kernels.clone().unwrap_or(match self.setting {
            Setting::Setting1 => KernelSource::Gaussian8,
            Setting::Setting2 => KernelSource::Setting2Grid,
        })
    }

    pub fn border(&self) -> usize {
        self.border.unwrap_or(self.scale)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::Parameter("scale must be >= 1".into()));
        }
        if self.noise.is_empty() {
            return Err(Error::Parameter("noise list is empty".into()));
        }
        if let Some(n) = self.noise.iter().find(|n| !(n.is_finite() && **n >= 0.0)) {
            return Err(Error::Parameter(format!("noise level {n} must be >= 0")));
        }
        if self.images.is_none() && self.chart_size == 0 {
            return Err(Error::Parameter("chart size must be positive".into()));
        }
        Ok(())
    }
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(format!("json: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
