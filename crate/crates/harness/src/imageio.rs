//! 8-bit PNG/PPM reading and writing.
//!
//! Reading converts to `[0,1]` floats; writing rounds each value to the
//! nearest of 256 levels, so a written watermarked image is a lossy copy of the
//! internal one (error up to 1/510 per pixel).

use std::path::Path;

use image::imageops::{self, FilterType};
use image::{DynamicImage, GrayImage, Rgb32FImage, RgbImage};
use wirlab::{Image, Shape};

use crate::error::{HarnessError, Result};

pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> HarnessError + '_ {
    move |source| HarnessError::Image { path: path.to_path_buf(), source }
}

/// Converts a decoded image to the target shape: bilinear resize to
/// `side x side`, then luma (when `channels == 1`) and scaling to `[0,1]`.
pub fn to_image(decoded: &DynamicImage, side: usize, channels: usize) -> Result<Image> {
    let shape = Shape::square(side, channels)?;
    let rgb: Rgb32FImage = decoded.to_rgb32f();
    let resized = if rgb.width() as usize == side && rgb.height() as usize == side {
        rgb
    } else {
        imageops::resize(&rgb, side as u32, side as u32, FilterType::Triangle)
    };
    let pixels: Vec<f64> = match channels {
        1 => resized
            .pixels()
            .map(|p| f64::from(LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2]))
            .collect(),
        3 => resized.pixels().flat_map(|p| p.0.map(f64::from)).collect(),
        c => return Err(HarnessError::Dataset(format!("unsupported channel count {c}"))),
    };
    Ok(Image::from_clamped(shape, pixels)?)
}

pub fn read_image(path: &Path, side: usize, channels: usize) -> Result<Image> {
    let decoded = image::open(path).map_err(image_err(path))?;
    to_image(&decoded, side, channels)
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an 8-bit PNG (or PPM/PGM, by extension).
pub fn write_image(img: &Image, path: &Path) -> Result<()> {
    let s = img.shape();
    let (w, h) = (s.width as u32, s.height as u32);
    let bytes: Vec<u8> = img.pixels().iter().map(|&v| quantize(v)).collect();
    let dynamic = match s.channels {
        1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("buffer matches shape")),
        3 => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("buffer matches shape")),
        c => return Err(HarnessError::Dataset(format!("cannot write {c}-channel image"))),
    };
    dynamic.save(path).map_err(image_err(path))
}

/// Reads an image at its native size, for CLI commands working on files.
pub fn read_native(path: &Path, channels: usize) -> Result<Image> {
    let decoded = image::open(path).map_err(image_err(path))?;
    if decoded.width() != decoded.height() {
        return Err(HarnessError::Dataset(format!("{}: image must be square", path.display())));
    }
    to_image(&decoded, decoded.width() as usize, channels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_of_primaries() {
        let mut img = RgbImage::new(8, 8);
        for (x, _, p) in img.enumerate_pixels_mut() {
            *p = match x % 3 {
                0 => image::Rgb([255, 0, 0]),
                1 => image::Rgb([0, 255, 0]),
                _ => image::Rgb([0, 0, 255]),
            };
        }
        let out = to_image(&DynamicImage::ImageRgb8(img), 8, 1).unwrap();
        assert!((out.get(0, 0, 0) - 0.299).abs() < 1e-6);
        assert!((out.get(1, 0, 0) - 0.587).abs() < 1e-6);
        assert!((out.get(2, 0, 0) - 0.114).abs() < 1e-6);
    }

    #[test]
    fn constant_image_survives_resize() {
        let img = DynamicImage::ImageLuma8(GrayImage::from_pixel(40, 40, image::Luma([51])));
        let out = to_image(&img, 16, 1).unwrap();
        assert!(out.pixels().iter().all(|v| (v - 0.2).abs() < 1e-6));
    }

    #[test]
    fn png_round_trip_within_half_level() {
        let dir = tempfile::tempdir().unwrap();
        let s = Shape::square(8, 1).unwrap();
        let img = Image::from_fn(s, |x, y, _| (x * 8 + y) as f64 / 63.0).unwrap();
        for name in ["a.png", "a.pgm"] {
            let path = dir.path().join(name);
            write_image(&img, &path).unwrap();
            let back = read_native(&path, 1).unwrap();
            for (a, b) in img.pixels().iter().zip(back.pixels()) {
                assert!((a - b).abs() <= 0.5 / 255.0 + 1e-7);
            }
        }
    }
}
