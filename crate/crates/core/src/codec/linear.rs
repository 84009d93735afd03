//! Linear spread-spectrum codec with orthonormal carrier patterns.
//!
//! `w = x + a * sum_i (2 t_i - 1) P_i`, decoded by the sign of `<z, P_i>`.
//! Exact linearity makes residual geometry analytic, which is what the attack
//! and certification oracles rely on.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure_len, invalid, Error, Result};
use crate::image::{BitMessage, Image, ResidualImage, Shape, WatermarkedImage};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearCodec {
    shape: Shape,
    patterns: Vec<Vec<f64>>,
    amplitude: f64,
}

impl LinearCodec {
    /// Orthonormalizes `n` seeded Gaussian vectors (Gram-Schmidt, two passes).
    pub fn new(shape: Shape, n: usize, amplitude: f64, seed: u64) -> Result<Self> {
        if n == 0 || n > shape.len() {
            return Err(invalid(format!("need 1 <= n <= {} patterns, got {n}", shape.len())));
        }
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(invalid("amplitude must be > 0"));
        }
        let mut rng = rng::stream(seed, rng::stage_id("linear_codec"), 0);
        let mut patterns: Vec<Vec<f64>> = Vec::with_capacity(n);
        while patterns.len() < n {
            let mut v: Vec<f64> = (0..shape.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            for _ in 0..2 {
                for p in &patterns {
                    let d = dot(&v, p);
                    v.iter_mut().zip(p).for_each(|(a, b)| *a -= d * b);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm < 1e-8 {
                continue;
            }
            v.iter_mut().for_each(|a| *a /= norm);
            patterns.push(v);
        }
        Ok(LinearCodec { shape, patterns, amplitude })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn message_len(&self) -> usize {
        self.patterns.len()
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn patterns(&self) -> &[Vec<f64>] {
        &self.patterns
    }

    /// `a * sum_i (2 t_i - 1) P_i`.
    pub fn watermark_signal(&self, t: &BitMessage) -> Result<Vec<f64>> {
        ensure_len(self.patterns.len(), t.len())?;
        let mut out = vec![0.0; self.shape.len()];
        for (s, p) in t.signs().zip(&self.patterns) {
            out.iter_mut().zip(p).for_each(|(o, v)| *o += self.amplitude * s * v);
        }
        Ok(out)
    }

    /// `<values, P_i>` for each pattern.
    pub fn projections(&self, values: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.shape.len(), values.len())?;
        Ok(self.patterns.iter().map(|p| dot(values, p)).collect())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Embeds additively. Fails if any pixel would leave `[0, 1]`, since clamping
/// would break the exact linearity the oracle is for.
pub fn linear_encode(lc: &LinearCodec, x: &Image, t: &BitMessage) -> Result<WatermarkedImage> {
    lc.shape.ensure_same(&x.shape())?;
    let signal = lc.watermark_signal(t)?;
    let pixels: Vec<f64> = x.pixels().iter().zip(&signal).map(|(a, b)| a + b).collect();
    if let Some(index) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::OracleViolation { index });
    }
    Image::new(x.shape(), pixels)
}

/// `bit_i = 1` iff `<z, P_i> > 0`.
pub fn linear_decode(lc: &LinearCodec, z: &ResidualImage) -> Result<BitMessage> {
    lc.shape.ensure_same(&z.shape())?;
    decode_values(lc, z.values())
}

pub(crate) fn decode_values(lc: &LinearCodec, values: &[f64]) -> Result<BitMessage> {
    let bits = lc.projections(values)?.into_iter().map(|v| u8::from(v > 0.0)).collect();
    BitMessage::new(bits)
}
