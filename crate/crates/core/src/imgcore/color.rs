use super::Image;
use crate::error::{Error, Result};

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// Full-range BT.601 luma of an RGB image.
pub fn rgb_to_y(img: &Image) -> Result<Image> {
    if img.channels() != 3 {
        return Err(Error::Precondition(format!(
            "rgb_to_y needs 3 channels, got {}",
            img.channels()
        )));
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|px| LUMA_R * px[0] + LUMA_G * px[1] + LUMA_B * px[2])
        .collect();
    Ok(Image::from_raw(img.height(), img.width(), 1, data))
}
