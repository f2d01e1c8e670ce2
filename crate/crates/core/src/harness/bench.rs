//! Seeded image × kernel × noise benchmark: degrade, solve, score, and
//! tabulate against the bicubic baseline.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::charts::builtin_charts;
use super::config::{write_json, BenchmarkSpec, KernelSource, Setting};
use crate::degrade::{
    add_awgn, convolve2d, downsample_s, gaussian8, gaussian8_sigmas, gaussian_kernel, setting2_grid,
    setting2_kernel_size, KernelShape,
};
use crate::error::{Error, Result};
use crate::imgcore::{bicubic_resize, load_image, read_kernel, save_image, write_kernel, Image, Kernel};
use crate::metrics::{psnr, ssim};
use crate::solver::{run, GroundTruth, SolverConfig};

pub const THREADS_ENV: &str = "KX_THREADS";

/// Worker count: `KX_THREADS` if set and valid, else `requested`, else
/// rayon's default.
pub fn worker_count(requested: Option<usize>) -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .or(requested.filter(|&n| n > 0))
        .unwrap_or_else(rayon::current_num_threads)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Noise seed of one case. Depends only on the master seed and the case's
/// own indices, so growing the image list leaves existing cases alone.
pub fn case_seed(master: u64, image: usize, kernel: usize, noise: usize) -> u64 {
    [image, kernel, noise]
        .iter()
        .fold(splitmix64(master), |h, &i| splitmix64(h ^ i as u64))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseRow {
    pub image_index: usize,
    pub image: String,
    pub kernel_index: usize,
    pub kernel: String,
    pub noise_index: usize,
    pub noise: f64,
    pub seed: u64,
    pub status: String,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub kernel_l1: Option<f64>,
    pub bicubic_psnr_db: Option<f64>,
    pub bicubic_ssim: Option<f64>,
    pub error: String,
}

impl CaseRow {
    pub fn failed(&self) -> bool {
        self.status != "ok"
    }

    fn key(&self) -> (usize, usize, usize) {
        (self.image_index, self.kernel_index, self.noise_index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub setting: String,
    pub scale: usize,
    pub noise: f64,
    pub cases: usize,
    pub failed: usize,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug)]
pub struct BenchmarkOutcome {
    pub cases: Vec<CaseRow>,
    pub summary: Vec<SummaryRow>,
    pub cases_csv: PathBuf,
    pub summary_csv: PathBuf,
}

impl BenchmarkOutcome {
    pub fn failures(&self) -> usize {
        self.cases.iter().filter(|c| c.failed()).count()
    }
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "pgm" | "ppm" | "pnm")
    )
}

/// Ground-truth images, center-cropped to multiples of the scale and sorted
/// by file name.
pub fn load_images(spec: &BenchmarkSpec) -> Result<Vec<(String, Image)>> {
    let images = match &spec.images {
        None => builtin_charts(spec.chart_size, spec.master_seed)?,
        Some(dir) => {
            let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
            let mut paths = Vec::new();
            for entry in entries {
                let path = entry.map_err(|e| Error::io(dir, e))?.path();
                if path.is_file() && is_image_file(&path) {
                    paths.push(path);
                }
            }
            paths.sort();
            paths
                .iter()
                .map(|p| {
                    let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    Ok((name, load_image(p)?))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    if images.is_empty() {
        return Err(Error::Parameter("benchmark has no images".into()));
    }
    images
        .into_iter()
        .map(|(name, img)| Ok((name, img.center_crop_multiple(spec.scale)?)))
        .collect()
}

fn shape_label(shape: &KernelShape) -> String {
    match shape {
        KernelShape::Iso { sigma } => format!("iso-{sigma:.4}"),
        KernelShape::Aniso { lambda1, lambda2, theta } => format!("aniso-{lambda1}-{lambda2}-{theta:.4}"),
    }
}

/// The benchmark's labelled kernel list.
pub fn benchmark_kernels(spec: &BenchmarkSpec) -> Result<Vec<(String, Kernel)>> {
    let kernels = match spec.kernel_source() {
        KernelSource::Gaussian8 => {
            let sigmas = gaussian8_sigmas(spec.scale)?;
            sigmas
                .iter()
                .map(|&sigma| shape_label(&KernelShape::Iso { sigma }))
                .zip(gaussian8(spec.scale)?)
                .collect()
        }
        KernelSource::Setting2Grid => {
            let p = setting2_kernel_size(spec.scale)?;
            setting2_grid()
                .iter()
                .map(|shape| Ok((shape_label(shape), gaussian_kernel(p, *shape)?)))
                .collect::<Result<Vec<_>>>()?
        }
        KernelSource::Files { paths } => paths
            .iter()
            .map(|p| {
                let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                Ok((name, read_kernel(p)?))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let Some((_, first)) = kernels.first() else {
        return Err(Error::Parameter("benchmark has no kernels".into()));
    };
    let p = first.size();
    if let Some((name, k)) = kernels.iter().find(|(_, k)| k.size() != p) {
        return Err(Error::Parameter(format!("kernel {name} is {0}x{0}, expected {p}x{p}", k.size())));
    }
    Ok(kernels)
}

struct Case<'a> {
    image_index: usize,
    image: &'a (String, Image),
    kernel_index: usize,
    kernel: &'a (String, Kernel),
    noise_index: usize,
    noise: f64,
}

struct Scores {
    psnr: f64,
    ssim: f64,
    kernel_l1: f64,
    bicubic: (f64, f64),
}

fn run_case(case: &Case<'_>, seed: u64, cfg: &SolverConfig, border: usize, save: Option<&Path>) -> (Option<(f64, f64)>, Result<Scores>) {
    let (_, hr) = case.image;
    let (_, k) = case.kernel;
    let s = cfg.scale;
    let degraded = convolve2d(hr, k, cfg.boundary)
        .and_then(|b| downsample_s(&b, s))
        .and_then(|lr| add_awgn(&lr, case.noise, seed));
    let y = match degraded {
        Ok(y) => y,
        Err(e) => return (None, Err(e)),
    };
    let bicubic = bicubic_resize(&y, hr.height(), hr.width())
        .and_then(|up| Ok((psnr(&up, hr, border)?, ssim(&up, hr, border)?)));
    let bicubic = match bicubic {
        Ok(b) => b,
        Err(e) => return (None, Err(e)),
    };
    let solved = run(&y, cfg, Some(GroundTruth { x: None, k: Some(k) })).and_then(|st| {
        if let Some(dir) = save {
            let stem = format!("{}_k{}_n{}", case.image.0, case.kernel_index, case.noise_index);
            save_image(&st.x, dir.join(format!("{stem}_sr.png")))?;
            write_kernel(&st.k, dir.join(format!("{stem}_kernel.txt")))?;
        }
        Ok(Scores {
            psnr: psnr(&st.x, hr, border)?,
            ssim: ssim(&st.x, hr, border)?,
            kernel_l1: st.k.l1_distance(k)?,
            bicubic,
        })
    });
    (Some(bicubic), solved)
}

fn setting_name(setting: Setting) -> &'static str {
    match setting {
        Setting::Setting1 => "setting1",
        Setting::Setting2 => "setting2",
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Averages grouped by noise level, bicubic baseline first. Rows must be
/// sorted by case key.
pub fn summarize(spec: &BenchmarkSpec, rows: &[CaseRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for (n, &noise) in spec.noise.iter().enumerate() {
        let group: Vec<&CaseRow> = rows.iter().filter(|r| r.noise_index == n).collect();
        let row = |method: &str, failed: usize, psnr: f64, ssim: f64| SummaryRow {
            method: method.to_string(),
            setting: setting_name(spec.setting).to_string(),
            scale: spec.scale,
            noise,
            cases: group.len(),
            failed,
            psnr_db: psnr,
            ssim,
        };
        let scored: Vec<&&CaseRow> = group.iter().filter(|r| r.bicubic_psnr_db.is_some()).collect();
        out.push(row(
            "bicubic",
            group.len() - scored.len(),
            mean(scored.iter().filter_map(|r| r.bicubic_psnr_db)),
            mean(scored.iter().filter_map(|r| r.bicubic_ssim)),
        ));
        let ok: Vec<&&CaseRow> = group.iter().filter(|r| !r.failed()).collect();
        out.push(row(
            "solver",
            group.len() - ok.len(),
            mean(ok.iter().filter_map(|r| r.psnr_db)),
            mean(ok.iter().filter_map(|r| r.ssim)),
        ));
    }
    out
}

fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs every case and writes `cases.csv`, `summary.csv` and the effective
/// `spec.json` into the output directory. Failed cases become rows with
/// status `failed`; the run itself only errors on setup or I/O problems.
pub fn run_benchmark(spec: &BenchmarkSpec, threads: Option<usize>) -> Result<BenchmarkOutcome> {
    spec.validate()?;
    let images = load_images(spec)?;
    let kernels = benchmark_kernels(spec)?;
    let cfg = SolverConfig {
        scale: spec.scale,
        kernel_size: kernels[0].1.size(),
        ..spec.solver.clone()
    };
    cfg.validate()?;
    std::fs::create_dir_all(&spec.output).map_err(|e| Error::io(&spec.output, e))?;
    let save_dir = spec.output.join("cases");
    if spec.save_outputs {
        std::fs::create_dir_all(&save_dir).map_err(|e| Error::io(&save_dir, e))?;
    }

    let mut cases = Vec::new();
    for (i, image) in images.iter().enumerate() {
        for (j, kernel) in kernels.iter().enumerate() {
            for (n, &noise) in spec.noise.iter().enumerate() {
                cases.push(Case {
                    image_index: i,
                    image,
                    kernel_index: j,
                    kernel,
                    noise_index: n,
                    noise,
                });
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(threads))
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    let border = spec.border();
    let save = spec.save_outputs.then_some(save_dir.as_path());
    let mut rows: Vec<CaseRow> = pool.install(|| {
        cases
            .par_iter()
            .map(|case| {
                let seed = case_seed(spec.master_seed, case.image_index, case.kernel_index, case.noise_index);
                let (bicubic, result) = run_case(case, seed, &cfg, border, save);
                let mut row = CaseRow {
                    image_index: case.image_index,
                    image: case.image.0.clone(),
                    kernel_index: case.kernel_index,
                    kernel: case.kernel.0.clone(),
                    noise_index: case.noise_index,
                    noise: case.noise,
                    seed,
                    status: "ok".into(),
                    psnr_db: None,
                    ssim: None,
                    kernel_l1: None,
                    bicubic_psnr_db: bicubic.map(|b| b.0),
                    bicubic_ssim: bicubic.map(|b| b.1),
                    error: String::new(),
                };
                match result {
                    Ok(sc) => {
                        row.psnr_db = Some(sc.psnr);
                        row.ssim = Some(sc.ssim);
                        row.kernel_l1 = Some(sc.kernel_l1);
                        row.bicubic_psnr_db = Some(sc.bicubic.0);
                        row.bicubic_ssim = Some(sc.bicubic.1);
                    }
                    Err(e) => {
                        row.status = "failed".into();
                        row.error = e.to_string();
                    }
                }
                row
            })
            .collect()
    });
    rows.sort_by_key(CaseRow::key);

    let summary = summarize(spec, &rows);
    let cases_csv = spec.output.join("cases.csv");
    let summary_csv = spec.output.join("summary.csv");
    write_csv(&rows, &cases_csv)?;
    write_csv(&summary, &summary_csv)?;
    write_json(spec, spec.output.join("spec.json"))?;
    Ok(BenchmarkOutcome {
        cases: rows,
        summary,
        cases_csv,
        summary_csv,
    })
}
