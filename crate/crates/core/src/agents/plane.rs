//! Scalar-plane helpers shared by the full-reference metrics: 3×3
//! convolution with edge replication, block-mean pooling, bilinear resize,
//! Gaussian smoothing, and a 2-D FFT built on rustfft.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// A single-channel f64 image plane.
#[derive(Clone, Debug)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Plane::new(width, height, vec![0.0; width * height])
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Replicate-padded sample.
    #[inline]
    fn at_clamped(&self, x: i64, y: i64) -> f64 {
        let xx = x.clamp(0, self.width as i64 - 1) as usize;
        let yy = y.clamp(0, self.height as i64 - 1) as usize;
        self.data[yy * self.width + xx]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// 3×3 convolution with replicate padding. The kernel is row-major.
pub fn conv3x3(src: &Plane, kernel: &[f64; 9]) -> Plane {
    let mut out = Plane::zeros(src.width, src.height);
    for y in 0..src.height {
        for x in 0..src.width {
            let mut acc = 0.0;
            let mut i = 0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    acc += kernel[i] * src.at_clamped(x as i64 + dx, y as i64 + dy);
                    i += 1;
                }
            }
            out.data[y * src.width + x] = acc;
        }
    }
    out
}

/// Gradient magnitude sqrt(gx^2 + gy^2) for a pair of directional kernels.
pub fn gradient_magnitude(src: &Plane, kx: &[f64; 9], ky: &[f64; 9]) -> Plane {
    let gx = conv3x3(src, kx);
    let gy = conv3x3(src, ky);
    let data = gx
        .data
        .iter()
        .zip(&gy.data)
        .map(|(&a, &b)| (a * a + b * b).sqrt())
        .collect();
    Plane::new(src.width, src.height, data)
}

/// Non-overlapping f×f block mean, truncating edge remainders; the standard
/// downsampling prefilter of the reference metrics.
pub fn block_mean_pool(src: &Plane, f: usize) -> Plane {
    if f <= 1 {
        return src.clone();
    }
    let ow = (src.width / f).max(1);
    let oh = (src.height / f).max(1);
    let mut out = Plane::zeros(ow, oh);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for dy in 0..f {
                for dx in 0..f {
                    acc += src.at((ox * f + dx).min(src.width - 1), (oy * f + dy).min(src.height - 1));
                }
            }
            out.data[oy * ow + ox] = acc / (f * f) as f64;
        }
    }
    out
}

/// Bilinear resize with pixel-center alignment.
pub fn resize_bilinear(src: &Plane, ow: usize, oh: usize) -> Plane {
    let mut out = Plane::zeros(ow, oh);
    let sx = src.width as f64 / ow as f64;
    let sy = src.height as f64 / oh as f64;
    for y in 0..oh {
        for x in 0..ow {
            let fx = (x as f64 + 0.5) * sx - 0.5;
            let fy = (y as f64 + 0.5) * sy - 0.5;
            let x0 = fx.floor();
            let y0 = fy.floor();
            let tx = fx - x0;
            let ty = fy - y0;
            let s = |xx: f64, yy: f64| src.at_clamped(xx as i64, yy as i64);
            let v = s(x0, y0) * (1.0 - tx) * (1.0 - ty)
                + s(x0 + 1.0, y0) * tx * (1.0 - ty)
                + s(x0, y0 + 1.0) * (1.0 - tx) * ty
                + s(x0 + 1.0, y0 + 1.0) * tx * ty;
            out.data[y * ow + x] = v;
        }
    }
    out
}

/// Separable Gaussian smoothing with replicate padding.
pub fn gaussian_smooth(src: &Plane, radius: usize, sigma: f64) -> Plane {
    let mut kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = kernel.iter().sum();
    for v in &mut kernel {
        *v /= sum;
    }
    let mut horiz = Plane::zeros(src.width, src.height);
    for y in 0..src.height {
        for x in 0..src.width {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                acc += k * src.at_clamped(x as i64 + i as i64 - radius as i64, y as i64);
            }
            horiz.data[y * src.width + x] = acc;
        }
    }
    let mut out = Plane::zeros(src.width, src.height);
    for y in 0..src.height {
        for x in 0..src.width {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                acc += k * horiz.at_clamped(x as i64, y as i64 + i as i64 - radius as i64);
            }
            out.data[y * src.width + x] = acc;
        }
    }
    out
}

/// 3×3 mean filter with replicate padding.
pub fn mean_filter_3(src: &Plane) -> Plane {
    conv3x3(src, &[1.0 / 9.0; 9])
}

/// Forward 2-D FFT (rows then columns).
pub fn fft2(src: &Plane) -> Vec<Complex64> {
    let (w, h) = (src.width, src.height);
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);
    let mut buf: Vec<Complex64> = src.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for y in 0..h {
        row_fft.process(&mut buf[y * w..(y + 1) * w]);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
    buf
}

/// Inverse 2-D FFT, normalized by 1/(w*h).
pub fn ifft2(freq: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_inverse(w);
    let col_fft = planner.plan_fft_inverse(h);
    let mut buf = freq.to_vec();
    for y in 0..h {
        row_fft.process(&mut buf[y * w..(y + 1) * w]);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
    let norm = 1.0 / (w * h) as f64;
    for v in &mut buf {
        *v *= norm;
    }
    buf
}

/// Population standard deviation.
pub fn std_pop(data: &[f64]) -> f64 {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    (data.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_round_trip() {
        let p = Plane::new(4, 3, (0..12).map(|i| i as f64).collect());
        let f = fft2(&p);
        let back = ifft2(&f, 4, 3);
        for (a, b) in p.data.iter().zip(&back) {
            assert!((a - b.re).abs() < 1e-10);
            assert!(b.im.abs() < 1e-10);
        }
    }

    #[test]
    fn block_pool_means() {
        let p = Plane::new(4, 2, vec![1.0, 3.0, 5.0, 7.0, 1.0, 3.0, 5.0, 7.0]);
        let pooled = block_mean_pool(&p, 2);
        assert_eq!(pooled.width, 2);
        assert_eq!(pooled.height, 1);
        assert_eq!(pooled.data, vec![2.0, 6.0]);
    }

    #[test]
    fn conv_of_constant_kernel_sums() {
        let p = Plane::new(3, 3, vec![1.0; 9]);
        let out = conv3x3(&p, &[1.0; 9]);
        assert!(out.data.iter().all(|&v| (v - 9.0).abs() < 1e-12));
    }
}
