//! Spectral-residual similarity.
//!
//! Combines a spectral-residual visual-saliency similarity with a Scharr
//! gradient similarity, pooled with per-pixel weights `max(VS1, VS2)`.
//! Constants (`C1=0.40`, `C2=225`, `alpha=0.5`) follow the original
//! formulation on the 0..255 luminance scale. Identical inputs score exactly
//! 1; higher is better.
//!
//! Saliency: the luminance plane is resized to quarter scale (bilinear; the
//! reference uses bicubic — exact numeric agreement with the original
//! binaries is not asserted), the log-amplitude spectrum is smoothed with a
//! 3×3 mean filter, the residual is transformed back, squared, smoothed with
//! an 11×11 Gaussian (sigma 3.8), range-normalized, and resized back.

use rustfft::num_complex::Complex64;

use crate::agents::plane::{
    block_mean_pool, fft2, gaussian_smooth, gradient_magnitude, ifft2, mean_filter_3,
    resize_bilinear, Plane,
};
use crate::error::{Error, Result};
use crate::image::{luma_255, RasterImage};

const C1: f64 = 0.40;
const C2: f64 = 225.0;
const ALPHA: f64 = 0.5;

const SCHARR_X: [f64; 9] = [
    3.0 / 16.0,
    0.0,
    -3.0 / 16.0,
    10.0 / 16.0,
    0.0,
    -10.0 / 16.0,
    3.0 / 16.0,
    0.0,
    -3.0 / 16.0,
];
const SCHARR_Y: [f64; 9] = [
    3.0 / 16.0,
    10.0 / 16.0,
    3.0 / 16.0,
    0.0,
    0.0,
    0.0,
    -3.0 / 16.0,
    -10.0 / 16.0,
    -3.0 / 16.0,
];

fn spectral_residual_saliency(y: &Plane) -> Plane {
    let sw = (y.width as f64 / 4.0).round().max(1.0) as usize;
    let sh = (y.height as f64 / 4.0).round().max(1.0) as usize;
    let small = resize_bilinear(y, sw, sh);

    let freq = fft2(&small);
    let amp = Plane::new(
        sw,
        sh,
        freq.iter().map(|c| c.norm().max(1e-12).ln()).collect(),
    );
    let smooth = mean_filter_3(&amp);
    let residual: Vec<Complex64> = freq
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mag = (amp.data[i] - smooth.data[i]).exp();
            let phase = c.arg();
            Complex64::from_polar(mag, phase)
        })
        .collect();
    let spatial = ifft2(&residual, sw, sh);
    let sal = Plane::new(sw, sh, spatial.iter().map(|c| c.norm_sqr()).collect());
    let sal = gaussian_smooth(&sal, 5, 3.8);

    // Range-normalize to [0, 1]; a flat map stays all-zero.
    let (lo, hi) = sal
        .data
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let norm = if span > 1e-300 {
        sal.data.iter().map(|&v| (v - lo) / span).collect()
    } else {
        vec![0.0; sal.data.len()]
    };
    resize_bilinear(&Plane::new(sw, sh, norm), y.width, y.height)
}

pub fn srsim(reference: &RasterImage, distorted: &RasterImage) -> Result<f64> {
    if reference.width() != distorted.width() || reference.height() != distorted.height() {
        return Err(Error::validation(format!(
            "srsim: dimension mismatch {}x{} vs {}x{}",
            reference.height(),
            reference.width(),
            distorted.height(),
            distorted.width()
        )));
    }
    let min_dim = reference.width().min(reference.height());
    let f = ((min_dim as f64 / 256.0).round() as usize).max(1);
    let y1 = block_mean_pool(
        &Plane::new(reference.width(), reference.height(), luma_255(reference)),
        f,
    );
    let y2 = block_mean_pool(
        &Plane::new(distorted.width(), distorted.height(), luma_255(distorted)),
        f,
    );

    let vs1 = spectral_residual_saliency(&y1);
    let vs2 = spectral_residual_saliency(&y2);
    let g1 = gradient_magnitude(&y1, &SCHARR_X, &SCHARR_Y);
    let g2 = gradient_magnitude(&y2, &SCHARR_X, &SCHARR_Y);

    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..vs1.data.len() {
        let (v1, v2) = (vs1.data[i], vs2.data[i]);
        let (a, b) = (g1.data[i], g2.data[i]);
        let s_vs = (2.0 * v1 * v2 + C1) / (v1 * v1 + v2 * v2 + C1);
        let s_g = (2.0 * a * b + C2) / (a * a + b * b + C2);
        let sim = s_vs * s_g.powf(ALPHA);
        let w = v1.max(v2);
        num += sim * w;
        den += w;
    }
    if den <= 0.0 {
        // Saliency vanished (e.g. constant image); fall back to the
        // unweighted mean so identical inputs still score 1.
        let n = vs1.data.len() as f64;
        let mut acc = 0.0;
        for i in 0..vs1.data.len() {
            let (a, b) = (g1.data[i], g2.data[i]);
            let s_g = (2.0 * a * b + C2) / (a * a + b * b + C2);
            acc += s_g.powf(ALPHA);
        }
        return Ok(acc / n);
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::{apply_distortion, DistortionKind, SeverityTable};
    use crate::fixture::generate_pristine;

    #[test]
    fn identical_images_score_one() {
        let img = generate_pristine(1, 64, 21).pop().unwrap();
        let s = srsim(&img, &img).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "srsim(img, img) = {s}");
    }

    #[test]
    fn constant_image_still_scores_one_against_itself() {
        let img = RasterImage::constant(40, 40, [0.4, 0.4, 0.4]);
        let s = srsim(&img, &img).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "srsim on constant = {s}");
    }

    #[test]
    fn blur_severity_orders_scores() {
        let img = generate_pristine(4, 96, 42).pop().unwrap();
        let table = SeverityTable::default();
        let l1 = apply_distortion(&img, DistortionKind::GaussianBlur, 1, 0, &table).unwrap();
        let l5 = apply_distortion(&img, DistortionKind::GaussianBlur, 5, 0, &table).unwrap();
        let s1 = srsim(&img, &l1).unwrap();
        let s5 = srsim(&img, &l5).unwrap();
        assert!(s1 > s5, "srsim level-1 {s1} should score above level-5 {s5}");
    }
}
