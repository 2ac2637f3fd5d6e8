//! Input normalization: aspect-preserving bilinear resize onto a fixed
//! 128x32 canvas, then per-image standardization.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::GrayImage;

pub const TARGET_WIDTH: usize = 128;
pub const TARGET_HEIGHT: usize = 32;

/// Bilinear resample to the requested extents, rounded to gray levels.
/// Sample centers map as `src = (dst + 0.5) * scale - 0.5`, so a 1:1 resize
/// is the identity.
pub fn resample_bilinear(img: &GrayImage, new_w: u32, new_h: u32) -> GrayImage {
    assert!(new_w > 0 && new_h > 0);
    let (w, h) = (img.width(), img.height());
    let sx = w as f64 / new_w as f64;
    let sy = h as f64 / new_h as f64;
    let mut pixels = Vec::with_capacity((new_w * new_h) as usize);
    for dy in 0..new_h {
        let fy = ((dy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as u32;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for dx in 0..new_w {
            let fx = ((dx as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as u32;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            let top = (1.0 - tx) * img.get(x0, y0) as f64 + tx * img.get(x1, y0) as f64;
            let bot = (1.0 - tx) * img.get(x0, y1) as f64 + tx * img.get(x1, y1) as f64;
            let v = (1.0 - ty) * top + ty * bot;
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(new_w, new_h, pixels).expect("positive extents")
}

/// Scale the image to fit 128x32 preserving aspect ratio, paste it at the
/// top-left of a white canvas, map to [0, 1] and standardize to zero mean
/// and unit variance (a blank image maps to all zeros).
///
/// Returns a `[128, 32]` tensor indexed `(x, y)`.
pub fn preprocess_resize<T: Scalar>(img: &GrayImage) -> Tensor<T> {
    preprocess_to(img, TARGET_WIDTH, TARGET_HEIGHT)
}

/// [`preprocess_resize`] onto an arbitrary canvas; reduced configurations
/// feed smaller input extents.
pub fn preprocess_to<T: Scalar>(img: &GrayImage, width: usize, height: usize) -> Tensor<T> {
    let scale =
        (width as f64 / img.width() as f64).min(height as f64 / img.height() as f64);
    let new_w = ((img.width() as f64 * scale).round() as u32).clamp(1, width as u32);
    let new_h = ((img.height() as f64 * scale).round() as u32).clamp(1, height as u32);
    let resized = if new_w == img.width() && new_h == img.height() {
        img.clone()
    } else {
        resample_bilinear(img, new_w, new_h)
    };

    let mut canvas = vec![255u8; width * height];
    for y in 0..new_h {
        for x in 0..new_w {
            canvas[x as usize * height + y as usize] = resized.get(x, y);
        }
    }

    let n = (width * height) as f64;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for &p in &canvas {
        let v = p as f64 / 255.0;
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    let std = var.sqrt();
    let denom = if std > 1e-12 { std } else { 1.0 };

    let data = canvas
        .iter()
        .map(|&p| T::c((p as f64 / 255.0 - mean) / denom))
        .collect();
    Tensor::from_vec(&[width, height], data).expect("canvas length matches extents")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_image(w: u32, h: u32, seed: u64) -> GrayImage {
        let mut rng = SplitMix64::new(seed);
        let pixels = (0..w * h).map(|_| (rng.next_u64() & 0xFF) as u8).collect();
        GrayImage::new(w, h, pixels).unwrap()
    }

    #[test]
    fn identity_resize_preserves_pixels() {
        let img = random_image(128, 32, 3);
        let resized = resample_bilinear(&img, 128, 32);
        assert_eq!(resized, img);
    }

    #[test]
    fn exact_double_downscale_averages_blocks() {
        // Reference oracle: with a 2x downscale the sample point falls
        // exactly between the four source pixels, so each output is the
        // rounded mean of its 2x2 block.
        let img = random_image(256, 64, 9);
        let resized = resample_bilinear(&img, 128, 32);
        for y in 0..32u32 {
            for x in 0..128u32 {
                let s = img.get(2 * x, 2 * y) as f64
                    + img.get(2 * x + 1, 2 * y) as f64
                    + img.get(2 * x, 2 * y + 1) as f64
                    + img.get(2 * x + 1, 2 * y + 1) as f64;
                let want = (s / 4.0).round() as u8;
                let got = resized.get(x, y);
                assert!(
                    (want as i32 - got as i32).abs() <= 1,
                    "({x},{y}): {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn arbitrary_resize_matches_reference_within_one_level() {
        // Independent oracle: direct per-pixel bilinear interpolation with
        // the same center mapping, evaluated in f64 without intermediate
        // rounding.
        let img = random_image(77, 23, 5);
        let (nw, nh) = (128u32, 32u32);
        let resized = resample_bilinear(&img, nw, nh);
        let sx = 77.0 / nw as f64;
        let sy = 23.0 / nh as f64;
        for dy in 0..nh {
            for dx in 0..nw {
                let fx = ((dx as f64 + 0.5) * sx - 0.5).clamp(0.0, 76.0);
                let fy = ((dy as f64 + 0.5) * sy - 0.5).clamp(0.0, 22.0);
                let (x0, y0) = (fx.floor() as u32, fy.floor() as u32);
                let (x1, y1) = ((x0 + 1).min(76), (y0 + 1).min(22));
                let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
                let v = (1.0 - ty)
                    * ((1.0 - tx) * img.get(x0, y0) as f64 + tx * img.get(x1, y0) as f64)
                    + ty * ((1.0 - tx) * img.get(x0, y1) as f64 + tx * img.get(x1, y1) as f64);
                let got = resized.get(dx, dy) as f64;
                assert!((got - v).abs() <= 1.0, "({dx},{dy}): {got} vs {v}");
            }
        }
    }

    #[test]
    fn preprocess_always_yields_canvas_shape_and_zero_mean() {
        for (w, h, seed) in [(128, 32, 1), (256, 64, 2), (40, 50, 3), (300, 7, 4)] {
            let img = random_image(w, h, seed);
            let t: Tensor<f64> = preprocess_resize(&img);
            assert_eq!(t.shape(), &[128, 32]);
            let mean: f64 = t.data().iter().sum::<f64>() / t.len() as f64;
            assert!(mean.abs() < 1e-9, "{w}x{h}: mean {mean}");
            let var: f64 = t.data().iter().map(|v| v * v).sum::<f64>() / t.len() as f64;
            assert!((var - 1.0).abs() < 1e-6, "{w}x{h}: var {var}");
        }
    }

    #[test]
    fn blank_image_maps_to_zeros() {
        let img = GrayImage::blank(64, 20).unwrap();
        let t: Tensor<f64> = preprocess_resize(&img);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_images_keep_aspect_and_sit_left() {
        // 32x16 scales by 2 -> 64x32; columns beyond 64 are background.
        let mut img = GrayImage::blank(32, 16).unwrap();
        for y in 0..16 {
            for x in 0..32 {
                img.set(x, y, 0);
            }
        }
        let t: Tensor<f64> = preprocess_resize(&img);
        let ink = t.at(&[0, 0]);
        let bg = t.at(&[127, 0]);
        assert!(ink < bg);
        for y in 0..32 {
            assert_eq!(t.at(&[100, y]), bg);
        }
    }
}
