//! The trainable micro watermark codec and the analytic linear reference codec.
//!
//! Encoder: the message enters as `n` constant planes valued `2t_i - 1`,
//! concatenated with the image; three 3x3 convolutions (ReLU, ReLU, tanh)
//! produce a residual scaled by the embedding strength.
//!
//! Decoder: two 3x3 convolutions with ReLU, global average pooling, a dense
//! layer and a logistic output per bit.

pub mod conv;
pub mod linear;
pub mod network;

use rand::Rng;

use crate::error::{ensure_len, invalid, Result};
use crate::image::{BitMessage, Image, ResidualImage, Shape, WatermarkedImage};
use crate::rng;

pub use linear::{linear_decode, linear_encode, LinearCodec};
pub use network::{DecoderTrace, EncoderTrace};

/// Lower/upper clamp applied to every bit probability.
pub const PROB_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecConfig {
    pub message_len: usize,
    pub channels: usize,
    pub side: usize,
    pub filters: usize,
    pub strength: f64,
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig { message_len: 16, channels: 1, side: 32, filters: 16, strength: 0.05, seed: 0 }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.message_len == 0 {
            return Err(invalid("message length must be >= 1"));
        }
        if self.filters == 0 {
            return Err(invalid("filter count must be >= 1"));
        }
        if !(self.strength > 0.0 && self.strength <= 0.5) {
            return Err(invalid(format!("strength {} outside (0, 0.5]", self.strength)));
        }
        self.shape().map(|_| ())
    }

    pub fn shape(&self) -> Result<Shape> {
        Shape::square(self.side, self.channels)
    }

    /// `(name, dims)` for every weight tensor, in storage and serialization order.
    pub fn tensor_layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (c, n, f) = (self.channels, self.message_len, self.filters);
        vec![
            ("enc.conv1.weight", vec![f, c + n, 3, 3]),
            ("enc.conv1.bias", vec![f]),
            ("enc.conv2.weight", vec![f, f, 3, 3]),
            ("enc.conv2.bias", vec![f]),
            ("enc.conv3.weight", vec![c, f, 3, 3]),
            ("enc.conv3.bias", vec![c]),
            ("dec.conv1.weight", vec![f, c, 3, 3]),
            ("dec.conv1.bias", vec![f]),
            ("dec.conv2.weight", vec![f, f, 3, 3]),
            ("dec.conv2.bias", vec![f]),
            ("dec.dense.weight", vec![n, f]),
            ("dec.dense.bias", vec![n]),
        ]
    }
}

pub const ENC_W1: usize = 0;
pub const ENC_B1: usize = 1;
pub const ENC_W2: usize = 2;
pub const ENC_B2: usize = 3;
pub const ENC_W3: usize = 4;
pub const ENC_B3: usize = 5;
pub const DEC_W1: usize = 6;
pub const DEC_B1: usize = 7;
pub const DEC_W2: usize = 8;
pub const DEC_B2: usize = 9;
pub const DEC_WD: usize = 10;
pub const DEC_BD: usize = 11;

/// Tensor indices belonging to the encoder.
pub const ENCODER_TENSORS: std::ops::Range<usize> = 0..6;
/// Tensor indices belonging to the decoder.
pub const DECODER_TENSORS: std::ops::Range<usize> = 6..12;

/// Encoder and decoder weights.
///
/// Every stored weight is exactly representable as an `f32`, so the model file's
/// 32-bit serialization is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecParams {
    config: CodecConfig,
    tensors: Vec<Vec<f64>>,
}

impl CodecParams {
    /// Assembles params from raw tensors, checking shapes and finiteness.
    pub fn from_tensors(config: CodecConfig, tensors: Vec<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        let layout = config.tensor_layout();
        ensure_len(layout.len(), tensors.len())?;
        for ((name, dims), t) in layout.iter().zip(&tensors) {
            let want: usize = dims.iter().product();
            if t.len() != want {
                return Err(invalid(format!("{name}: expected {want} values, got {}", t.len())));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("{name}: non-finite weight")));
            }
        }
        let tensors = tensors
            .into_iter()
            .map(|t| t.into_iter().map(round_f32).collect())
            .collect();
        Ok(CodecParams { config, tensors })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Vec<f64>] {
        &self.tensors
    }

    pub fn tensor(&self, i: usize) -> &[f64] {
        &self.tensors[i]
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.tensors
    }

    pub fn num_weights(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn shape(&self) -> Shape {
        // validated at construction
        self.config.shape().expect("validated codec shape")
    }
}

#[inline]
pub(crate) fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// Deterministic Glorot-uniform weights, zero biases.
pub fn init_codec(config: &CodecConfig, seed: u64) -> Result<CodecParams> {
    config.validate()?;
    let mut rng = rng::stream(seed, rng::stage_id("init_codec"), 0);
    let tensors = config
        .tensor_layout()
        .into_iter()
        .map(|(_, dims)| {
            let len: usize = dims.iter().product();
            if dims.len() == 1 {
                return vec![0.0; len];
            }
            let receptive: usize = dims[2..].iter().product();
            let fan_out = dims[0] * receptive;
            let fan_in = dims[1] * receptive;
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..len).map(|_| rng.random_range(-bound..bound)).collect()
        })
        .collect();
    CodecParams::from_tensors(*config, tensors)
}

/// Decoder beliefs `p_i = P(bit i = 1)`, clamped to `[PROB_EPS, 1 - PROB_EPS]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BitProbabilities(Vec<f64>);

impl BitProbabilities {
    /// Clamps into the valid range. Rejects empty or non-finite input.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !p.is_finite()) {
            return Err(invalid("bit probabilities must be finite and nonempty"));
        }
        Ok(BitProbabilities(probs.into_iter().map(|p| p.clamp(PROB_EPS, 1.0 - PROB_EPS)).collect()))
    }

    pub fn uniform(n: usize, p: f64) -> Result<Self> {
        BitProbabilities::new(vec![p; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Hard decision per bit: 1 iff `p > 0.5`; ties go to 0.
pub fn decode_bits(probs: &BitProbabilities) -> BitMessage {
    BitMessage::new(probs.values().iter().map(|&p| u8::from(p > 0.5)).collect())
        .expect("nonempty probabilities give a valid message")
}

fn check_message(params: &CodecParams, t: &BitMessage) -> Result<()> {
    ensure_len(params.config.message_len, t.len())
}

/// Embeds `t` into `x`: `w = clamp(x + s * tanh(E(x, t)), 0, 1)`.
pub fn encode(params: &CodecParams, x: &Image, t: &BitMessage) -> Result<WatermarkedImage> {
    params.shape().ensure_same(&x.shape())?;
    check_message(params, t)?;
    let signs: Vec<f64> = t.signs().collect();
    let planar = network::to_planar(x.pixels(), x.shape());
    let (w, _) = network::encode_traced(params, &planar, &signs);
    Image::from_clamped(x.shape(), network::from_planar(&w, x.shape()))
}

/// Decoder probabilities for an image.
pub fn decode_probs(params: &CodecParams, img: &Image) -> Result<BitProbabilities> {
    params.shape().ensure_same(&img.shape())?;
    decode_probs_raw(params, img.pixels())
}

/// Decoder probabilities for a residual, which is shifted by `+0.5` first.
pub fn decode_residual_probs(params: &CodecParams, z: &ResidualImage) -> Result<BitProbabilities> {
    params.shape().ensure_same(&z.shape())?;
    decode_probs_raw(params, &z.decoder_input())
}

/// Decoder probabilities for an arbitrary real-valued interleaved buffer of the codec's shape.
pub fn decode_probs_raw(params: &CodecParams, pixels: &[f64]) -> Result<BitProbabilities> {
    ensure_len(params.shape().len(), pixels.len())?;
    let planar = network::to_planar(pixels, params.shape());
    let (_, probs, _) = network::decode_traced(params, &planar);
    BitProbabilities::new(probs)
}
