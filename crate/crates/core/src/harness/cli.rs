//! Command-line front end. Each subcommand maps to one function that
//! returns the process exit code.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::bench::run_benchmark;
use super::config::{load_json, write_json, BenchmarkSpec, KernelSource, Setting};
use super::{EXIT_FAILED, EXIT_OK};
use crate::degrade::{
    degrade, gaussian8, gaussian8_sigmas, setting2_kernel_size, DegradationSpec, KernelShape, GAUSSIAN8_SIZE,
};
use crate::error::{Error, Result};
use crate::imgcore::{format_kernel, load_image, read_kernel, save_image, write_kernel, Boundary};
use crate::metrics::{format_value, MetricReport};
use crate::solver::{run, GroundTruth, ImageProx, SolverConfig, StepSize};

#[derive(Debug, Parser)]
#[command(name = "blindsr", version, about = "Blind super-resolution by alternating kernel and image updates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Blur, subsample and add noise to a high-resolution image.
    Degrade(DegradeArgs),
    /// Estimate the kernel and high-resolution image from a low-resolution one.
    Solve(SolveArgs),
    /// Score a result against ground truth.
    Eval(EvalArgs),
    /// Write the eight Gaussian8 evaluation kernels for a scale.
    Gaussian8(Gaussian8Args),
    /// Run a seeded benchmark over images, kernels and noise levels.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    /// Defaults to 21, or the setting-2 size for the scale.
    #[arg(long)]
    pub kernel_size: Option<usize>,
    /// Isotropic kernel width.
    #[arg(long, default_value_t = 1.2, conflicts_with = "setting2")]
    pub sigma: f64,
    /// Anisotropic kernel from --l1, --l2, --theta.
    #[arg(long, requires_all = ["l1", "l2"])]
    pub setting2: bool,
    #[arg(long, requires = "setting2")]
    pub l1: Option<f64>,
    #[arg(long, requires = "setting2")]
    pub l2: Option<f64>,
    #[arg(long, default_value_t = 0.0, requires = "setting2")]
    pub theta: f64,
    /// Noise standard deviation on the 0-255 scale.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Boundary::Replicate)]
    pub boundary: Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProxKind {
    Identity,
    Tikhonov,
    Tv,
}

/// Solver flags. Each one overrides the matching key of `--config`.
#[derive(Debug, Default, Args)]
pub struct SolverFlags {
    /// JSON solver configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub stages: Option<usize>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    #[arg(long, value_enum)]
    pub prox: Option<ProxKind>,
    /// Image prior weight for tikhonov/tv.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub tv_iters: Option<usize>,
    /// Fixed kernel step; backtracking when absent.
    #[arg(long)]
    pub kernel_step: Option<f64>,
    /// Fixed image step; backtracking when absent.
    #[arg(long)]
    pub image_step: Option<f64>,
    #[arg(long, value_enum)]
    pub boundary: Option<Boundary>,
    #[arg(long)]
    pub init_sigma: Option<f64>,
    /// Keep the kernel at its initialization.
    #[arg(long)]
    pub fixed_kernel: bool,
    /// Skip the gradient adjuster.
    #[arg(long)]
    pub no_adjust: bool,
}

impl SolverFlags {
    /// `--config` (or the defaults) with the flags applied.
    pub fn resolve(&self, scale: Option<usize>) -> Result<SolverConfig> {
        let base = match &self.config {
            Some(path) => load_json(path)?,
            None => SolverConfig::default(),
        };
        self.apply(base, scale)
    }

    /// Applies the explicit flags on top of `cfg`.
    pub fn apply(&self, mut cfg: SolverConfig, scale: Option<usize>) -> Result<SolverConfig> {
        if let Some(s) = scale {
            cfg.scale = s;
        }
        if let Some(t) = self.stages {
            cfg.stages = t;
        }
        if let Some(p) = self.kernel_size {
            cfg.kernel_size = p;
        }
        let tau = self.tau.unwrap_or(match cfg.image_prox {
            ImageProx::Tikhonov { tau } | ImageProx::Tv { tau, .. } => tau,
            ImageProx::Identity => 1e-3,
        });
        let iters = self.tv_iters.unwrap_or(match cfg.image_prox {
            ImageProx::Tv { inner_iters, .. } => inner_iters,
            _ => 20,
        });
        let kind = self.prox.unwrap_or(match cfg.image_prox {
            ImageProx::Identity => ProxKind::Identity,
            ImageProx::Tikhonov { .. } => ProxKind::Tikhonov,
            ImageProx::Tv { .. } => ProxKind::Tv,
        });
        cfg.image_prox = match kind {
            ProxKind::Identity => ImageProx::Identity,
            ProxKind::Tikhonov => ImageProx::Tikhonov { tau },
            ProxKind::Tv => ImageProx::Tv { tau, inner_iters: iters },
        };
        if let Some(delta) = self.kernel_step {
            cfg.kernel_step = StepSize::Fixed { delta };
        }
        if let Some(delta) = self.image_step {
            cfg.image_step = StepSize::Fixed { delta };
        }
        if let Some(b) = self.boundary {
            cfg.boundary = b;
        }
        if self.init_sigma.is_some() {
            cfg.init_sigma = self.init_sigma;
        }
        if self.fixed_kernel {
            cfg.update_kernel = false;
        }
        if self.no_adjust {
            cfg.adjust_gradient = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Low-resolution input image.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub scale: Option<usize>,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Ground-truth HR image; adds a psnr column to the trace.
    #[arg(long)]
    pub gt_image: Option<PathBuf>,
    /// Ground-truth kernel; adds a kernel_l1 column to the trace.
    #[arg(long)]
    pub gt_kernel: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub sr: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Pixels shaved from each side before scoring.
    #[arg(long, default_value_t = 0)]
    pub border: usize,
    #[arg(long, requires = "gt_kernel")]
    pub kernel: Option<PathBuf>,
    #[arg(long, requires = "kernel")]
    pub gt_kernel: Option<PathBuf>,
    /// Directory for report.csv and report.json.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Gaussian8Args {
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSON benchmark description.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Directory of ground-truth images; built-in charts when absent.
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub chart_size: Option<usize>,
    #[arg(long, value_enum)]
    pub setting: Option<Setting>,
    #[arg(long)]
    pub scale: Option<usize>,
    /// Noise levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub noise: Option<Vec<f64>>,
    /// Explicit kernel files instead of the setting's family.
    #[arg(long, num_args = 1..)]
    pub kernels: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub border: Option<usize>,
    #[arg(long)]
    pub save_outputs: bool,
    /// Worker threads; KX_THREADS takes precedence.
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_degrade(args: &DegradeArgs) -> Result<i32> {
    let kernel = if args.setting2 {
        KernelShape::Aniso {
            lambda1: args.l1.unwrap_or_default(),
            lambda2: args.l2.unwrap_or_default(),
            theta: args.theta,
        }
    } else {
        KernelShape::Iso { sigma: args.sigma }
    };
    let kernel_size = match args.kernel_size {
        Some(p) => p,
        None if args.setting2 => setting2_kernel_size(args.scale)?,
        None => GAUSSIAN8_SIZE,
    };
    let spec = DegradationSpec {
        scale: args.scale,
        kernel_size,
        kernel,
        noise: args.noise,
        seed: args.seed,
        boundary: args.boundary,
    };
    spec.validate()?;
    let hr = load_image(&args.input)?.center_crop_multiple(args.scale)?;
    let (lr, k) = degrade(&hr, &spec)?;
    create_dir(&args.out_dir)?;
    save_image(&hr, args.out_dir.join("hr.png"))?;
    save_image(&lr, args.out_dir.join("lr.png"))?;
    write_kernel(&k, args.out_dir.join("kernel.txt"))?;
    write_json(&spec, args.out_dir.join("degradation.json"))?;
    Ok(EXIT_OK)
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

pub fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let cfg = args.solver.resolve(args.scale)?;
    let y = load_image(&args.input)?;
    let gt_x = args.gt_image.as_ref().map(load_image).transpose()?;
    let gt_k = args.gt_kernel.as_ref().map(read_kernel).transpose()?;
    let gt = GroundTruth {
        x: gt_x.as_ref(),
        k: gt_k.as_ref(),
    };
    let state = run(&y, &cfg, Some(gt))?;
    create_dir(&args.out_dir)?;
    save_image(&state.x, args.out_dir.join("sr.png"))?;
    write_kernel(&state.k, args.out_dir.join("kernel.txt"))?;
    write_json(&cfg, args.out_dir.join("config.json"))?;

    let path = args.out_dir.join("trace.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut header = vec!["stage", "fidelity", "kernel_change"];
    if gt.x.is_some() {
        header.push("psnr");
    }
    if gt.k.is_some() {
        header.push("kernel_l1");
    }
    let csv_err = |e: csv::Error| Error::Format(format!("trace csv: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for r in &state.trace {
        let mut rec = vec![r.stage.to_string(), format_value(r.fidelity), format_value(r.kernel_change)];
        if gt.x.is_some() {
            rec.push(opt_cell(r.psnr));
        }
        if gt.k.is_some() {
            rec.push(opt_cell(r.kernel_l1));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(EXIT_OK)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<i32> {
    let sr = load_image(&args.sr)?;
    let gt = load_image(&args.gt)?;
    let kernels = match (&args.kernel, &args.gt_kernel) {
        (Some(a), Some(b)) => Some((read_kernel(a)?, read_kernel(b)?)),
        _ => None,
    };
    let report = MetricReport::evaluate(&sr, &gt, args.border, kernels.as_ref().map(|(a, b)| (a, b)))?;
    let json = report.to_json()?;
    println!("{json}");
    if let Some(dir) = &args.out_dir {
        create_dir(dir)?;
        let csv_path = dir.join("report.csv");
        let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        report.write_csv(file)?;
        let json_path = dir.join("report.json");
        std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_gaussian8(args: &Gaussian8Args) -> Result<i32> {
    let sigmas = gaussian8_sigmas(args.scale)?;
    let kernels = gaussian8(args.scale)?;
    create_dir(&args.out_dir)?;
    let mut listing = String::new();
    for (n, (sigma, k)) in sigmas.iter().zip(&kernels).enumerate() {
        let name = format!("g8_x{}_{n}.txt", args.scale);
        std::fs::write(args.out_dir.join(&name), format_kernel(k))
            .map_err(|e| Error::io(args.out_dir.join(&name), e))?;
        listing.push_str(&format!("{name} sigma={sigma}\n"));
    }
    print!("{listing}");
    Ok(EXIT_OK)
}

pub fn bench_spec(args: &BenchArgs) -> Result<BenchmarkSpec> {
    let mut spec = match &args.spec {
        Some(path) => load_json(path)?,
        None => BenchmarkSpec::default(),
    };
    if args.images.is_some() {
        spec.images = args.images.clone();
    }
    if let Some(n) = args.chart_size {
        spec.chart_size = n;
    }
    if let Some(s) = args.setting {
        spec.setting = s;
    }
    if let Some(s) = args.scale {
        spec.scale = s;
    }
    if let Some(noise) = &args.noise {
        spec.noise = noise.clone();
    }
    if let Some(paths) = &args.kernels {
        spec.kernels = Some(KernelSource::Files { paths: paths.clone() });
    }
    if let Some(out) = &args.output {
        spec.output = out.clone();
    }
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    if args.border.is_some() {
        spec.border = args.border;
    }
    if args.save_outputs {
        spec.save_outputs = true;
    }
    let base = match &args.solver.config {
        Some(path) => load_json(path)?,
        None => spec.solver.clone(),
    };
    spec.solver = args.solver.apply(base, None)?;
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<i32> {
    let spec = bench_spec(args)?;
    let outcome = run_benchmark(&spec, args.threads)?;
    let mut out = std::io::stdout().lock();
    for row in &outcome.summary {
        let _ = writeln!(
            out,
            "{:<8} {} x{} noise={} cases={} failed={} psnr={} ssim={}",
            row.method,
            row.setting,
            row.scale,
            row.noise,
            row.cases,
            row.failed,
            format_value(row.psnr_db),
            format_value(row.ssim)
        );
    }
    let failures = outcome.failures();
    if failures > 0 {
        eprintln!("{failures} case(s) failed; see {}", outcome.cases_csv.display());
        return Ok(EXIT_FAILED);
    }
    Ok(EXIT_OK)
}

pub fn run_cli(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Degrade(a) => cmd_degrade(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gaussian8(a) => cmd_gaussian8(a),
        Command::Bench(a) => cmd_bench(a),
    }
}
