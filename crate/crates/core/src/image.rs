//! Pixel grids, residuals and bit messages.
//!
//! Pixels are stored row-major with channels interleaved (`HWC`), as `f64`.

use rand::Rng;

use crate::error::{ensure_len, invalid, Error, Result};

/// Smallest accepted image side.
pub const MIN_SIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(invalid(format!(
                "image must be at least {MIN_SIDE}x{MIN_SIDE}, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(invalid(format!("channels must be 1 or 3, got {channels}")));
        }
        Ok(Shape { width, height, channels })
    }

    pub fn square(side: usize, channels: usize) -> Result<Self> {
        Shape::new(side, side, channels)
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    pub fn ensure_same(&self, other: &Shape) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(*self, *other))
        }
    }
}

/// A real-valued image with every pixel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    shape: Shape,
    pixels: Vec<f64>,
}

/// Watermarked images satisfy exactly the same invariants as originals.
pub type WatermarkedImage = Image;

impl Image {
    pub fn new(shape: Shape, pixels: Vec<f64>) -> Result<Self> {
        ensure_len(shape.len(), pixels.len())?;
        if let Some(i) = pixels.iter().position(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(invalid(format!("pixel {i} = {} outside [0,1]", pixels[i])));
        }
        Ok(Image { shape, pixels })
    }

    /// Builds an image from arbitrary reals, clamping each into `[0, 1]`.
    /// Non-finite values are rejected.
    pub fn from_clamped(shape: Shape, mut pixels: Vec<f64>) -> Result<Self> {
        ensure_len(shape.len(), pixels.len())?;
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(invalid("non-finite pixel"));
        }
        for p in &mut pixels {
            *p = p.clamp(0.0, 1.0);
        }
        Ok(Image { shape, pixels })
    }

    pub fn constant(shape: Shape, value: f64) -> Result<Self> {
        Image::new(shape, vec![value; shape.len()])
    }

    /// `f(x, y, c)` evaluated at every pixel.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(shape.len());
        for y in 0..shape.height {
            for x in 0..shape.width {
                for c in 0..shape.channels {
                    pixels.push(f(x, y, c));
                }
            }
        }
        Image::new(shape, pixels)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[self.shape.index(x, y, c)]
    }
}

/// Signed difference between a watermarked image and its original.
/// Values are finite and lie in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualImage {
    shape: Shape,
    values: Vec<f64>,
}

impl ResidualImage {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        ensure_len(shape.len(), values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(invalid(format!("residual {i} = {} outside [-1,1]", values[i])));
        }
        Ok(ResidualImage { shape, values })
    }

    pub fn zeros(shape: Shape) -> Self {
        ResidualImage { shape, values: vec![0.0; shape.len()] }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Values shifted by `+0.5`, the form in which a residual is handed to the decoder.
    pub fn decoder_input(&self) -> Vec<f64> {
        self.values.iter().map(|v| v + 0.5).collect()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &ResidualImage) -> Result<f64> {
        self.shape.ensure_same(&other.shape)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Elementwise mean of a nonempty list of same-shape residuals.
    pub fn mean(residuals: &[ResidualImage]) -> Result<ResidualImage> {
        let first = residuals.first().ok_or_else(|| invalid("empty residual list"))?;
        let mut acc = vec![0.0; first.values.len()];
        for r in residuals {
            first.shape.ensure_same(&r.shape)?;
            for (a, v) in acc.iter_mut().zip(&r.values) {
                *a += v;
            }
        }
        let m = residuals.len() as f64;
        for a in &mut acc {
            *a /= m;
        }
        ResidualImage::new(first.shape, acc)
    }
}

/// A secret watermark message over `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMessage {
    bits: Vec<u8>,
}

impl BitMessage {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(invalid("message must have at least one bit"));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(invalid("message bits must be 0 or 1"));
        }
        Ok(BitMessage { bits })
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|ch| match ch {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(invalid(format!("bad bit character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        BitMessage::new(bits)
    }

    pub fn zeros(n: usize) -> Result<Self> {
        BitMessage::new(vec![0; n])
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        BitMessage::new((0..n).map(|_| rng.random_range(0..2u8)).collect())
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// `2 t_i - 1` for each bit.
    pub fn signs(&self) -> impl Iterator<Item = f64> + '_ {
        self.bits.iter().map(|&b| if b == 1 { 1.0 } else { -1.0 })
    }

    pub fn with_bit(&self, index: usize, value: u8) -> Self {
        let mut bits = self.bits.clone();
        bits[index] = value & 1;
        BitMessage { bits }
    }

    pub fn complement(&self) -> Self {
        BitMessage { bits: self.bits.iter().map(|b| 1 - b).collect() }
    }

    pub fn hamming(&self, other: &BitMessage) -> Result<usize> {
        ensure_len(self.len(), other.len())?;
        Ok(self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count())
    }
}

impl std::fmt::Display for BitMessage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}
