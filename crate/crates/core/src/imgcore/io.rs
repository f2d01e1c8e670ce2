use std::fmt::Write as _;
use std::path::Path;

use image::{ColorType, DynamicImage, ImageFormat, ImageReader};

use super::{Image, Kernel, KERNEL_SUM_TOL};
use crate::error::{Error, Result};

/// Tolerance applied when reading kernel files before renormalizing.
const KERNEL_READ_TOL: f64 = 1e-6;

fn image_error(path: &Path, err: image::ImageError) -> Error {
    match err {
        image::ImageError::IoError(e) => Error::io(path, e),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Loads an 8-bit grayscale or RGB PNG/PGM/PPM, scaled to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported image format {other:?}",
                path.display()
            )))
        }
    }
    let decoded = reader.decode().map_err(|e| image_error(path, e))?;
    let (h, w) = (decoded.height() as usize, decoded.width() as usize);
    let (channels, bytes) = match decoded {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported pixel layout {:?} (need 8-bit gray or RGB)",
                path.display(),
                other.color()
            )))
        }
    };
    let data = bytes.into_iter().map(|b| b as f64 / 255.0).collect();
    Image::new(h, w, channels, data)
}

/// Clamps to `[0, 1]`, quantizes with `round(v * 255)` and writes PNG or
/// binary PGM/PPM depending on the file extension.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let color = match img.channels() {
        1 => ColorType::L8,
        3 => ColorType::Rgb8,
        c => return Err(Error::Precondition(format!("cannot save {c}-channel image"))),
    };
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let format = match ext.as_deref() {
        Some("png") => ImageFormat::Png,
        Some("pgm") | Some("ppm") | Some("pnm") => ImageFormat::Pnm,
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported output extension {other:?}",
                path.display()
            )))
        }
    };
    image::save_buffer_with_format(
        path,
        &bytes,
        img.width() as u32,
        img.height() as u32,
        color,
        format,
    )
    .map_err(|e| image_error(path, e))
}

/// Parses the plain-text kernel format: the size `p` on the first line, then
/// `p` lines of `p` whitespace-separated weights.
pub fn parse_kernel(text: &str) -> Result<Kernel> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty kernel file".into()))?;
    let p: usize = header
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad kernel header {header:?}")))?;
    if p == 0 || p % 2 == 0 {
        return Err(Error::Format(format!("kernel size must be odd, got {p}")));
    }
    let mut weights = Vec::with_capacity(p * p);
    let mut rows = 0;
    for line in lines {
        rows += 1;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad kernel weight {tok:?}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != p {
            return Err(Error::Format(format!(
                "kernel row {rows} has {} values, expected {p}",
                row.len()
            )));
        }
        weights.extend(row);
    }
    if rows != p {
        return Err(Error::Format(format!("kernel has {rows} rows, expected {p}")));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < -KERNEL_READ_TOL) {
        return Err(Error::Format(format!("kernel weight {w} is negative")));
    }
    let sum: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    if (sum - 1.0).abs() > KERNEL_READ_TOL {
        return Err(Error::Format(format!("kernel weights sum to {sum}, expected 1")));
    }
    let weights: Vec<f64> = weights.into_iter().map(|w| w.max(0.0)).collect();
    // Leave already-normalized weights untouched so write/read is exact.
    if (sum - 1.0).abs() <= KERNEL_SUM_TOL {
        Kernel::new(p, weights)
    } else {
        Kernel::normalized(p, weights)
    }
}

fn format_weight(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e4).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn format_kernel(k: &Kernel) -> String {
    let p = k.size();
    let mut out = format!("{p}\n");
    for row in k.weights().chunks(p) {
        let line: Vec<String> = row.iter().map(|&v| format_weight(v)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn read_kernel(path: impl AsRef<Path>) -> Result<Kernel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kernel(&text)
}

pub fn write_kernel(k: &Kernel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_kernel(k)).map_err(|e| Error::io(path, e))
}
