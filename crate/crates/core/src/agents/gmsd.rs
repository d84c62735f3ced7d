//! Gradient-magnitude similarity deviation.
//!
//! Pipeline (constants from the original formulation, intensities on the
//! 0..255 scale): average-pool both luma planes by 2, take Prewitt gradient
//! magnitudes, form the pointwise similarity map
//! `(2*g_r*g_d + C) / (g_r^2 + g_d^2 + C)` with `C = 170`, and return the
//! population standard deviation of the map. Identical inputs give a map of
//! ones and a score of 0; lower is better.

use crate::agents::plane::{block_mean_pool, gradient_magnitude, std_pop, Plane};
use crate::error::{Error, Result};
use crate::image::{luma_255, RasterImage};

const C: f64 = 170.0;

/// Prewitt kernels scaled by 1/3.
pub(crate) const PREWITT_X: [f64; 9] = [
    1.0 / 3.0,
    0.0,
    -1.0 / 3.0,
    1.0 / 3.0,
    0.0,
    -1.0 / 3.0,
    1.0 / 3.0,
    0.0,
    -1.0 / 3.0,
];
pub(crate) const PREWITT_Y: [f64; 9] = [
    1.0 / 3.0,
    1.0 / 3.0,
    1.0 / 3.0,
    0.0,
    0.0,
    0.0,
    -1.0 / 3.0,
    -1.0 / 3.0,
    -1.0 / 3.0,
];

pub fn gmsd(reference: &RasterImage, distorted: &RasterImage) -> Result<f64> {
    if reference.width() != distorted.width() || reference.height() != distorted.height() {
        return Err(Error::validation(format!(
            "gmsd: dimension mismatch {}x{} vs {}x{}",
            reference.height(),
            reference.width(),
            distorted.height(),
            distorted.width()
        )));
    }
    let r = Plane::new(reference.width(), reference.height(), luma_255(reference));
    let d = Plane::new(distorted.width(), distorted.height(), luma_255(distorted));
    let r = block_mean_pool(&r, 2);
    let d = block_mean_pool(&d, 2);
    let gr = gradient_magnitude(&r, &PREWITT_X, &PREWITT_Y);
    let gd = gradient_magnitude(&d, &PREWITT_X, &PREWITT_Y);
    let gms: Vec<f64> = gr
        .data
        .iter()
        .zip(&gd.data)
        .map(|(&a, &b)| (2.0 * a * b + C) / (a * a + b * b + C))
        .collect();
    Ok(std_pop(&gms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::{apply_distortion, DistortionKind, SeverityTable};
    use crate::fixture::generate_pristine;

    #[test]
    fn identical_images_score_zero() {
        let img = generate_pristine(1, 64, 5).pop().unwrap();
        assert!(gmsd(&img, &img).unwrap().abs() < 1e-12);
    }

    #[test]
    fn symmetric_in_arguments() {
        let imgs = generate_pristine(2, 64, 9);
        let a = gmsd(&imgs[0], &imgs[1]).unwrap();
        let b = gmsd(&imgs[1], &imgs[0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blur_severity_orders_scores() {
        let img = generate_pristine(4, 96, 42).pop().unwrap();
        let table = SeverityTable::default();
        let l1 = apply_distortion(&img, DistortionKind::GaussianBlur, 1, 0, &table).unwrap();
        let l5 = apply_distortion(&img, DistortionKind::GaussianBlur, 5, 0, &table).unwrap();
        let s1 = gmsd(&img, &l1).unwrap();
        let s5 = gmsd(&img, &l5).unwrap();
        assert!(s1 < s5, "gmsd level-1 {s1} should score below level-5 {s5}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = RasterImage::constant(8, 8, [0.5; 3]);
        let b = RasterImage::constant(8, 9, [0.5; 3]);
        assert!(gmsd(&a, &b).is_err());
    }
}
