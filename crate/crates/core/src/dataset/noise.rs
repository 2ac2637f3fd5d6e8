//! Pixel-level noise transforms over the seeded stream, reproducible
//! byte-for-byte across implementations.

use crate::rng::SplitMix64;

use super::{DatasetError, GrayImage};

pub const DEFAULT_SP_DENSITY: f64 = 0.05;
pub const DEFAULT_SPECKLE_VARIANCE: f64 = 0.04;

/// Salt-and-pepper: each pixel independently becomes 0 with probability
/// d/2, 255 with probability d/2, and is otherwise unchanged.
pub fn add_salt_pepper(
    img: &GrayImage,
    density: f64,
    seed: u64,
) -> Result<GrayImage, DatasetError> {
    if !(0.0..=1.0).contains(&density) || density.is_nan() {
        return Err(DatasetError::InvalidDensity(density));
    }
    let mut rng = SplitMix64::new(seed);
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let u = rng.next_f64();
        if u < density / 2.0 {
            *p = 0;
        } else if u < density {
            *p = 255;
        }
    }
    Ok(out)
}

/// Multiplicative Gaussian noise:
/// `pixel <- clamp(round(pixel * (1 + n)), 0, 255)` with `n ~ N(0, variance)`.
pub fn add_speckle(img: &GrayImage, variance: f64, seed: u64) -> Result<GrayImage, DatasetError> {
    if variance < 0.0 || variance.is_nan() {
        return Err(DatasetError::InvalidVariance(variance));
    }
    let sigma = variance.sqrt();
    let mut rng = SplitMix64::new(seed);
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let n = rng.next_gaussian() * sigma;
        let v = (*p as f64 * (1.0 + n)).round().clamp(0.0, 255.0);
        *p = v as u8;
    }
    Ok(out)
}
