//! Procedurally generated pristine images.
//!
//! The repository ships no photographs; these generators produce a small
//! corpus with enough structure (edges, texture, smooth regions, color) that
//! every distortion operator measurably damages it. Four pattern families
//! are cycled: gradient scenes with shapes, multi-frequency checkerboards,
//! low-pass-filtered noise, and a composite "synthetic photo".

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::RasterImage;

/// Deterministically generates `count` pristine images of `size`×`size`.
pub fn generate_pristine(count: usize, size: usize, seed: u64) -> Vec<RasterImage> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)));
            match i % 4 {
                0 => gradient_scene(size, &mut rng),
                1 => checkerboard(size, &mut rng),
                2 => filtered_noise(size, &mut rng),
                _ => synthetic_photo(size, &mut rng),
            }
        })
        .collect()
}

/// Generates the corpus and writes it to `dir` as `pristine_NNN.png`.
pub fn write_pristine_dir(dir: &Path, count: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(count);
    for (i, img) in generate_pristine(count, size, seed).iter().enumerate() {
        let path = dir.join(format!("pristine_{i:03}.png"));
        img.save_png(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

fn gradient_scene(size: usize, rng: &mut ChaCha8Rng) -> RasterImage {
    let (c0, c1) = (rand_color(rng), rand_color(rng));
    let angle: f32 = rng.gen_range(0.0..std::f32::consts::PI);
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut img = RasterImage::constant(size, size, [0.0; 3]);
    for y in 0..size {
        for x in 0..size {
            let t = ((x as f32 * dx + y as f32 * dy) / (size as f32 * 1.42) + 0.5).clamp(0.0, 1.0);
            img.set_pixel(x, y, lerp3(c0, c1, t));
        }
    }
    // Scatter anti-aliased disks over the gradient.
    for _ in 0..rng.gen_range(4..9) {
        let cx = rng.gen_range(0.0..size as f32);
        let cy = rng.gen_range(0.0..size as f32);
        let r = rng.gen_range(size as f32 * 0.05..size as f32 * 0.22);
        let color = rand_color(rng);
        stamp_disk(&mut img, cx, cy, r, color);
    }
    add_texture(&mut img, 0.015, rng);
    img
}

fn checkerboard(size: usize, rng: &mut ChaCha8Rng) -> RasterImage {
    let cell = rng.gen_range(6..24usize);
    let fine = rng.gen_range(2..5usize);
    let (c0, c1) = (rand_color(rng), rand_color(rng));
    let mut img = RasterImage::constant(size, size, [0.0; 3]);
    for y in 0..size {
        for x in 0..size {
            let coarse = (x / cell + y / cell) % 2;
            let detail = (x / fine + y / fine) % 2;
            let base = if coarse == 0 { c0 } else { c1 };
            let v = if detail == 0 { 0.92 } else { 1.0 };
            img.set_pixel(x, y, [base[0] * v, base[1] * v, base[2] * v]);
        }
    }
    add_texture(&mut img, 0.01, rng);
    img
}

fn filtered_noise(size: usize, rng: &mut ChaCha8Rng) -> RasterImage {
    let tint = rand_color(rng);
    let sigma = rng.gen_range(1.0..4.0f32);
    let mut gray: Vec<f32> = (0..size * size).map(|_| rng.gen_range(0.0..1.0)).collect();
    gray = box_blur_3(&gray, size, (sigma as usize).max(1));
    let (lo, hi) = gray
        .iter()
        .fold((f32::MAX, f32::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = (hi - lo).max(1e-6);
    let mut img = RasterImage::constant(size, size, [0.0; 3]);
    for y in 0..size {
        for x in 0..size {
            let t = (gray[y * size + x] - lo) / span;
            img.set_pixel(
                x,
                y,
                [
                    (0.15 + 0.7 * t) * (0.5 + 0.5 * tint[0]),
                    (0.15 + 0.7 * t) * (0.5 + 0.5 * tint[1]),
                    (0.15 + 0.7 * t) * (0.5 + 0.5 * tint[2]),
                ],
            );
        }
    }
    img
}

fn synthetic_photo(size: usize, rng: &mut ChaCha8Rng) -> RasterImage {
    let horizon = rng.gen_range(size / 3..2 * size / 3);
    let sky0 = [0.55, 0.70, 0.95];
    let sky1 = [0.85, 0.90, 1.00];
    let ground = rand_color(rng);
    let mut img = RasterImage::constant(size, size, [0.0; 3]);
    for y in 0..size {
        for x in 0..size {
            if y < horizon {
                let t = y as f32 / horizon as f32;
                img.set_pixel(x, y, lerp3(sky0, sky1, t));
            } else {
                let shade = 0.6 + 0.4 * ((x / 3 + y / 3) % 2) as f32 * 0.2;
                img.set_pixel(
                    x,
                    y,
                    [ground[0] * shade, ground[1] * shade, ground[2] * shade],
                );
            }
        }
    }
    // A few "buildings" poking above the horizon.
    for _ in 0..rng.gen_range(3..7) {
        let w = rng.gen_range(size / 16..size / 5);
        let h = rng.gen_range(size / 10..size / 2);
        let x0 = rng.gen_range(0..size.saturating_sub(w).max(1));
        let color = rand_color(rng);
        for y in horizon.saturating_sub(h)..horizon {
            for x in x0..(x0 + w).min(size) {
                img.set_pixel(x, y, color);
            }
        }
    }
    // Sun disk.
    let sun_x = rng.gen_range(0.0..size as f32);
    stamp_disk(&mut img, sun_x, horizon as f32 * 0.3, size as f32 * 0.07, [1.0, 0.95, 0.7]);
    add_texture(&mut img, 0.02, rng);
    img
}

fn rand_color(rng: &mut ChaCha8Rng) -> [f32; 3] {
    [
        rng.gen_range(0.05..0.95),
        rng.gen_range(0.05..0.95),
        rng.gen_range(0.05..0.95),
    ]
}

fn lerp3(a: [f32; 3], b: [f32; 3], t: f32) -> [f32; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn stamp_disk(img: &mut RasterImage, cx: f32, cy: f32, r: f32, color: [f32; 3]) {
    let size = img.width();
    let x0 = ((cx - r - 1.0).floor().max(0.0)) as usize;
    let x1 = ((cx + r + 1.0).ceil().min(size as f32 - 1.0)) as usize;
    let y0 = ((cy - r - 1.0).floor().max(0.0)) as usize;
    let y1 = ((cy + r + 1.0).ceil().min(size as f32 - 1.0)) as usize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
            // 1px anti-aliasing ramp at the rim.
            let a = (r - d + 0.5).clamp(0.0, 1.0);
            if a > 0.0 {
                let p = img.pixel(x, y);
                img.set_pixel(x, y, lerp3(p, color, a));
            }
        }
    }
}

/// Mild per-pixel texture so that blur always has something to destroy.
fn add_texture(img: &mut RasterImage, amp: f32, rng: &mut ChaCha8Rng) {
    for v in img.data_mut() {
        *v = (*v + rng.gen_range(-amp..amp)).clamp(0.0, 1.0);
    }
}

fn box_blur_3(src: &[f32], size: usize, passes: usize) -> Vec<f32> {
    let mut cur = src.to_vec();
    let mut next = vec![0.0f32; src.len()];
    for _ in 0..passes {
        for y in 0..size {
            for x in 0..size {
                let mut sum = 0.0;
                let mut n = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let yy = y as i64 + dy;
                        let xx = x as i64 + dx;
                        if yy >= 0 && yy < size as i64 && xx >= 0 && xx < size as i64 {
                            sum += cur[yy as usize * size + xx as usize];
                            n += 1.0;
                        }
                    }
                }
                next[y * size + x] = sum / n;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_pristine(4, 64, 7);
        let b = generate_pristine(4, 64, 7);
        assert_eq!(a, b);
        let c = generate_pristine(4, 64, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn images_are_in_range_and_textured() {
        for img in generate_pristine(8, 96, 3) {
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
            // Not constant: blur must be able to change the image.
            let mean = img.mean();
            let var: f32 = img.data().iter().map(|v| (v - mean).powi(2)).sum::<f32>()
                / img.data().len() as f32;
            assert!(var > 1e-4, "fixture image nearly constant (var={var})");
        }
    }
}
