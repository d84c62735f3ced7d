//! Mean deviation similarity index.
//!
//! Gradient similarity of the two luma planes and of each against their
//! fused mean, combined with an opponent-chromaticity similarity, pooled by
//! mean absolute deviation. Constants (`C1=140`, `C2=55`, `C3=550`,
//! `alpha=0.6`, pooling exponents 1/4) follow the original formulation on
//! the 0..255 intensity scale. Identical inputs pool to 0; lower is better.
//!
//! The combined similarity is clamped at 0 before the fractional power (the
//! gradient-structure term can dip slightly negative on synthetic edges).

use crate::agents::gmsd::{PREWITT_X, PREWITT_Y};
use crate::agents::plane::{block_mean_pool, gradient_magnitude, Plane};
use crate::error::{Error, Result};
use crate::image::RasterImage;

const C1: f64 = 140.0;
const C2: f64 = 55.0;
const C3: f64 = 550.0;
const ALPHA: f64 = 0.6;

struct LumaChroma {
    l: Plane,
    h: Plane,
    m: Plane,
}

fn decompose(img: &RasterImage, f: usize) -> LumaChroma {
    let (w, hgt) = (img.width(), img.height());
    let mut l = Plane::zeros(w, hgt);
    let mut h = Plane::zeros(w, hgt);
    let mut m = Plane::zeros(w, hgt);
    for (i, px) in img.data().chunks_exact(3).enumerate() {
        let r = 255.0 * px[0] as f64;
        let g = 255.0 * px[1] as f64;
        let b = 255.0 * px[2] as f64;
        l.data[i] = 0.2989 * r + 0.5870 * g + 0.1140 * b;
        h.data[i] = 0.30 * r + 0.04 * g - 0.35 * b;
        m.data[i] = 0.34 * r - 0.60 * g + 0.17 * b;
    }
    LumaChroma {
        l: block_mean_pool(&l, f),
        h: block_mean_pool(&h, f),
        m: block_mean_pool(&m, f),
    }
}

pub fn mdsi(reference: &RasterImage, distorted: &RasterImage) -> Result<f64> {
    if reference.width() != distorted.width() || reference.height() != distorted.height() {
        return Err(Error::validation(format!(
            "mdsi: dimension mismatch {}x{} vs {}x{}",
            reference.height(),
            reference.width(),
            distorted.height(),
            distorted.width()
        )));
    }
    let min_dim = reference.width().min(reference.height());
    let f = ((min_dim as f64 / 256.0).round() as usize).max(1);
    let a = decompose(reference, f);
    let b = decompose(distorted, f);

    let fused = Plane::new(
        a.l.width,
        a.l.height,
        a.l.data
            .iter()
            .zip(&b.l.data)
            .map(|(&x, &y)| 0.5 * (x + y))
            .collect(),
    );
    let g1 = gradient_magnitude(&a.l, &PREWITT_X, &PREWITT_Y);
    let g2 = gradient_magnitude(&b.l, &PREWITT_X, &PREWITT_Y);
    let gf = gradient_magnitude(&fused, &PREWITT_X, &PREWITT_Y);

    let n = g1.data.len();
    let mut gcs = Vec::with_capacity(n);
    for i in 0..n {
        let (x, y, z) = (g1.data[i], g2.data[i], gf.data[i]);
        let gs12 = (2.0 * x * y + C1) / (x * x + y * y + C1);
        let gs13 = (2.0 * x * z + C2) / (x * x + z * z + C2);
        let gs23 = (2.0 * y * z + C2) / (y * y + z * z + C2);
        let gs_hvs = gs12 + gs23 - gs13;
        let (h1, h2) = (a.h.data[i], b.h.data[i]);
        let (m1, m2) = (a.m.data[i], b.m.data[i]);
        let cs = (2.0 * (h1 * h2 + m1 * m2) + C3)
            / (h1 * h1 + h2 * h2 + m1 * m1 + m2 * m2 + C3);
        gcs.push((ALPHA * gs_hvs + (1.0 - ALPHA) * cs).max(0.0));
    }

    // Deviation pooling: mean absolute deviation of GCS^(1/4), then ^(1/4).
    let pow: Vec<f64> = gcs.iter().map(|&v| v.powf(0.25)).collect();
    let mean = pow.iter().sum::<f64>() / n as f64;
    let mad = pow.iter().map(|&v| (v - mean).abs()).sum::<f64>() / n as f64;
    Ok(mad.powf(0.25))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::{apply_distortion, DistortionKind, SeverityTable};
    use crate::fixture::generate_pristine;

    #[test]
    fn identical_images_score_zero() {
        let img = generate_pristine(1, 64, 15).pop().unwrap();
        assert!(mdsi(&img, &img).unwrap().abs() < 1e-12);
    }

    #[test]
    fn blur_severity_orders_scores() {
        let img = generate_pristine(4, 96, 42).pop().unwrap();
        let table = SeverityTable::default();
        let l1 = apply_distortion(&img, DistortionKind::GaussianBlur, 1, 0, &table).unwrap();
        let l5 = apply_distortion(&img, DistortionKind::GaussianBlur, 5, 0, &table).unwrap();
        let s1 = mdsi(&img, &l1).unwrap();
        let s5 = mdsi(&img, &l5).unwrap();
        assert!(s1 < s5, "mdsi level-1 {s1} should score below level-5 {s5}");
    }
}
