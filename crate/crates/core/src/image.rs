//! In-memory image representation and lossless persistence.
//!
//! All processing happens on floating-point RGB in `[0, 1]` (linear light);
//! images are persisted as 8-bit PNG so that agent scores recomputed from
//! disk are bit-for-bit reproducible.

use std::path::Path;

use crate::error::{Error, Result};

/// An H×W×3 image with channel-interleaved RGB samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl RasterImage {
    /// Builds an image from interleaved RGB data; `data.len()` must equal
    /// `height * width * 3` and every sample must be finite.
    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation("image dimensions must be positive"));
        }
        if data.len() != width * height * 3 {
            return Err(Error::validation(format!(
                "pixel buffer length {} does not match {}x{}x3",
                data.len(),
                height,
                width
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("pixel buffer contains non-finite values"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// A solid-color image.
    pub fn constant(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Clamps every sample to `[0, 1]` in place.
    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Mean over all samples (all three channels pooled).
    pub fn mean(&self) -> f32 {
        let sum: f64 = self.data.iter().map(|&v| v as f64).sum();
        (sum / self.data.len() as f64) as f32
    }

    /// Mean squared error against another image of the same dimensions.
    pub fn mse(&self, other: &RasterImage) -> Result<f64> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::validation(format!(
                "mse: dimension mismatch {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    /// Extracts a `cw`×`ch` crop with top-left corner `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, cw: usize, ch: usize) -> Result<RasterImage> {
        if x + cw > self.width || y + ch > self.height || cw == 0 || ch == 0 {
            return Err(Error::validation(format!(
                "crop {}x{}+{}+{} outside image {}x{}",
                cw, ch, x, y, self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(cw * ch * 3);
        for row in y..y + ch {
            let start = (row * self.width + x) * 3;
            data.extend_from_slice(&self.data[start..start + cw * 3]);
        }
        Ok(RasterImage {
            width: cw,
            height: ch,
            data,
        })
    }

    /// Quantizes to 8-bit RGB (round to nearest, clamped).
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// Rebuilds an image from 8-bit RGB samples.
    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        Self::from_data(width, height, data)
    }

    /// Writes the image as an 8-bit PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = self.to_rgb8();
        image::save_buffer(
            path,
            &buf,
            self.width as u32,
            self.height as u32,
            image::ColorType::Rgb8,
        )
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Loads any format the `image` crate decodes, converted to RGB.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        Self::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
    }
}

/// BT.601 luma on the `[0, 255]` scale used by the full-reference agents.
pub fn luma_255(img: &RasterImage) -> Vec<f64> {
    img.data()
        .chunks_exact(3)
        .map(|px| 255.0 * (0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_data_rejects_bad_lengths() {
        assert!(RasterImage::from_data(2, 2, vec![0.0; 11]).is_err());
        assert!(RasterImage::from_data(0, 2, vec![]).is_err());
        assert!(RasterImage::from_data(2, 2, vec![f32::NAN; 12]).is_err());
        assert!(RasterImage::from_data(2, 2, vec![0.5; 12]).is_ok());
    }

    #[test]
    fn crop_bounds_checked() {
        let img = RasterImage::constant(4, 4, [0.2, 0.4, 0.6]);
        assert!(img.crop(2, 2, 3, 1).is_err());
        let c = img.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.width(), 2);
        assert_eq!(c.pixel(0, 0), [0.2, 0.4, 0.6]);
    }

    #[test]
    fn rgb8_round_trip_is_exact_on_quantized_values() {
        let img = RasterImage::from_data(
            2,
            1,
            vec![0.0, 1.0, 128.0 / 255.0, 7.0 / 255.0, 250.0 / 255.0, 0.5019608],
        )
        .unwrap();
        let bytes = img.to_rgb8();
        let back = RasterImage::from_rgb8(2, 1, &bytes).unwrap();
        assert_eq!(back.to_rgb8(), bytes);
    }

    #[test]
    fn mse_of_identical_is_zero() {
        let img = RasterImage::constant(3, 3, [0.1, 0.9, 0.5]);
        assert_eq!(img.mse(&img).unwrap(), 0.0);
        let other = RasterImage::constant(3, 4, [0.1, 0.9, 0.5]);
        assert!(img.mse(&other).is_err());
    }
}
