//! Forward passes with activation traces and the matching backward passes.

use super::conv;
use super::{
    CodecConfig, CodecParams, DEC_B1, DEC_B2, DEC_BD, DEC_W1, DEC_W2, DEC_WD, ENC_B1, ENC_B2, ENC_B3, ENC_W1,
    ENC_W2, ENC_W3, PROB_EPS,
};
use crate::image::Shape;

/// Gradient buffers laid out exactly like [`CodecParams`] tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(config: &CodecConfig) -> Self {
        Gradients {
            tensors: config
                .tensor_layout()
                .into_iter()
                .map(|(_, dims)| vec![0.0; dims.iter().product()])
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.tensors.iter_mut().flatten().for_each(|v| *v *= k);
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }

    pub fn get(&self, tensor: usize, index: usize) -> f64 {
        self.tensors[tensor][index]
    }

    pub fn set(&mut self, tensor: usize, index: usize, v: f64) {
        self.tensors[tensor][index] = v;
    }

    pub fn clear(&mut self, range: std::ops::Range<usize>) {
        for t in &mut self.tensors[range] {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Interleaved `HWC` to planar `CHW`.
pub fn to_planar(hwc: &[f64], shape: Shape) -> Vec<f64> {
    let c = shape.channels;
    if c == 1 {
        return hwc.to_vec();
    }
    let plane = shape.plane_len();
    let mut out = vec![0.0; hwc.len()];
    for p in 0..plane {
        for ch in 0..c {
            out[ch * plane + p] = hwc[p * c + ch];
        }
    }
    out
}

/// Planar `CHW` to interleaved `HWC`.
pub fn from_planar(chw: &[f64], shape: Shape) -> Vec<f64> {
    let c = shape.channels;
    if c == 1 {
        return chw.to_vec();
    }
    let plane = shape.plane_len();
    let mut out = vec![0.0; chw.len()];
    for p in 0..plane {
        for ch in 0..c {
            out[p * c + ch] = chw[ch * plane + p];
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct EncoderTrace {
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    tanh_out: Vec<f64>,
    /// False where `x + s * r` fell outside `[0, 1]` and was clamped.
    passed: Vec<bool>,
}

impl EncoderTrace {
    /// Hash of every ReLU and clamp state. Equal signatures mean the pass ran
    /// through the same piecewise-smooth region.
    pub fn signature(&self) -> u64 {
        let h = mask_hash(FNV_OFFSET, self.h1.iter().map(|a| *a > 0.0));
        let h = mask_hash(h, self.h2.iter().map(|a| *a > 0.0));
        mask_hash(h, self.passed.iter().copied())
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

pub(crate) fn mask_hash(mut h: u64, bits: impl Iterator<Item = bool>) -> u64 {
    for b in bits {
        h ^= u64::from(b) + 1;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|a| *a = a.max(0.0));
}

fn relu_mask(grad: &mut [f64], activation: &[f64]) {
    for (g, a) in grad.iter_mut().zip(activation) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Planar encoder pass. Returns the clamped watermarked planes and the trace.
pub fn encode_traced(params: &CodecParams, x: &[f64], signs: &[f64]) -> (Vec<f64>, EncoderTrace) {
    let cfg = params.config();
    let (c, n, f, side) = (cfg.channels, cfg.message_len, cfg.filters, cfg.side);
    let stride1 = c + n;
    let w1 = params.tensor(ENC_W1);

    let mut h1 = conv::forward(x, c, side, side, w1, params.tensor(ENC_B1), f, stride1);
    let mut tap_sums = vec![0.0; f * 9];
    for o in 0..f {
        for (i, s) in signs.iter().enumerate() {
            let base = (o * stride1 + c + i) * 9;
            for k in 0..9 {
                tap_sums[o * 9 + k] += s * w1[base + k];
            }
        }
    }
    conv::add_constant_plane_response(&mut h1, f, side, side, &tap_sums);
    relu_in_place(&mut h1);

    let mut h2 = conv::forward(&h1, f, side, side, params.tensor(ENC_W2), params.tensor(ENC_B2), f, f);
    relu_in_place(&mut h2);

    let mut tanh_out = conv::forward(&h2, f, side, side, params.tensor(ENC_W3), params.tensor(ENC_B3), c, f);
    tanh_out.iter_mut().for_each(|v| *v = v.tanh());

    let mut passed = vec![true; x.len()];
    let w: Vec<f64> = x
        .iter()
        .zip(&tanh_out)
        .zip(passed.iter_mut())
        .map(|((xv, r), ok)| {
            let raw = xv + cfg.strength * r;
            let clamped = raw.clamp(0.0, 1.0);
            *ok = clamped == raw;
            clamped
        })
        .collect();
    let trace = EncoderTrace { x: x.to_vec(), h1, h2, tanh_out, passed };
    (w, trace)
}

/// Accumulates encoder weight gradients given `dL/dw` on the clamped output planes.
pub fn encoder_backward(
    params: &CodecParams,
    trace: &EncoderTrace,
    signs: &[f64],
    grad_w: &[f64],
    grads: &mut Gradients,
) {
    let cfg = params.config();
    let (c, n, f, side) = (cfg.channels, cfg.message_len, cfg.filters, cfg.side);
    let stride1 = c + n;

    let g_a3: Vec<f64> = grad_w
        .iter()
        .zip(&trace.passed)
        .zip(&trace.tanh_out)
        .map(|((g, &ok), r)| if ok { g * cfg.strength * (1.0 - r * r) } else { 0.0 })
        .collect();

    let mut g_h2 = vec![0.0; trace.h2.len()];
    {
        let (a, b) = split_pair(&mut grads.tensors, ENC_W3, ENC_B3);
        conv::backward(&trace.h2, f, side, side, params.tensor(ENC_W3), c, f, &g_a3, Some((a, b)), Some(&mut g_h2));
    }
    relu_mask(&mut g_h2, &trace.h2);

    let mut g_h1 = vec![0.0; trace.h1.len()];
    {
        let (a, b) = split_pair(&mut grads.tensors, ENC_W2, ENC_B2);
        conv::backward(&trace.h1, f, side, side, params.tensor(ENC_W2), f, f, &g_h2, Some((a, b)), Some(&mut g_h1));
    }
    relu_mask(&mut g_h1, &trace.h1);

    {
        let (a, b) = split_pair(&mut grads.tensors, ENC_W1, ENC_B1);
        conv::backward(&trace.x, c, side, side, params.tensor(ENC_W1), f, stride1, &g_h1, Some((a, b)), None);
    }
    let taps = conv::constant_plane_tap_grads(&g_h1, f, side, side);
    let gw1 = &mut grads.tensors[ENC_W1];
    for o in 0..f {
        for (i, s) in signs.iter().enumerate() {
            let base = (o * stride1 + c + i) * 9;
            for k in 0..9 {
                gw1[base + k] += s * taps[o * 9 + k];
            }
        }
    }
    debug_assert_eq!(signs.len(), n);
}

fn split_pair(tensors: &mut [Vec<f64>], a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a < b);
    let (lo, hi) = tensors.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

#[derive(Debug, Clone)]
pub struct DecoderTrace {
    input: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
    pooled: Vec<f64>,
    /// Unclamped logistic outputs.
    sigmoid: Vec<f64>,
}

impl DecoderTrace {
    /// See [`EncoderTrace::signature`].
    pub fn signature(&self) -> u64 {
        let h = mask_hash(FNV_OFFSET, self.g1.iter().map(|a| *a > 0.0));
        let h = mask_hash(h, self.g2.iter().map(|a| *a > 0.0));
        mask_hash(h, (0..self.sigmoid.len()).map(|j| self.clamped(j)))
    }

    /// True where the probability clamp is active, which zeroes the gradient.
    pub fn clamped(&self, bit: usize) -> bool {
        let p = self.sigmoid[bit];
        !(PROB_EPS..=1.0 - PROB_EPS).contains(&p)
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Planar decoder pass. Returns `(logits, clamped probabilities, trace)`.
pub fn decode_traced(params: &CodecParams, input: &[f64]) -> (Vec<f64>, Vec<f64>, DecoderTrace) {
    let cfg = params.config();
    let (c, n, f, side) = (cfg.channels, cfg.message_len, cfg.filters, cfg.side);
    let plane = side * side;

    let mut g1 = conv::forward(input, c, side, side, params.tensor(DEC_W1), params.tensor(DEC_B1), f, c);
    relu_in_place(&mut g1);
    let mut g2 = conv::forward(&g1, f, side, side, params.tensor(DEC_W2), params.tensor(DEC_B2), f, f);
    relu_in_place(&mut g2);
    let pooled: Vec<f64> = (0..f).map(|o| g2[o * plane..(o + 1) * plane].iter().sum::<f64>() / plane as f64).collect();

    let wd = params.tensor(DEC_WD);
    let bd = params.tensor(DEC_BD);
    let logits: Vec<f64> = (0..n)
        .map(|j| bd[j] + wd[j * f..(j + 1) * f].iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let sig: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let probs = sig.iter().map(|p| p.clamp(PROB_EPS, 1.0 - PROB_EPS)).collect();
    let trace = DecoderTrace { input: input.to_vec(), g1, g2, pooled, sigmoid: sig };
    (logits, probs, trace)
}

/// Backpropagates `dL/dlogit` through the decoder.
///
/// Weight gradients are accumulated when `grads` is given; the input gradient
/// (planar) is returned when `want_input` is set.
pub fn decoder_backward(
    params: &CodecParams,
    trace: &DecoderTrace,
    grad_logits: &[f64],
    mut grads: Option<&mut Gradients>,
    want_input: bool,
) -> Option<Vec<f64>> {
    let cfg = params.config();
    let (c, n, f, side) = (cfg.channels, cfg.message_len, cfg.filters, cfg.side);
    let plane = side * side;
    let wd = params.tensor(DEC_WD);

    if let Some(g) = grads.as_deref_mut() {
        for j in 0..n {
            for k in 0..f {
                g.tensors[DEC_WD][j * f + k] += grad_logits[j] * trace.pooled[k];
            }
            g.tensors[DEC_BD][j] += grad_logits[j];
        }
    }
    let mut g_g2 = vec![0.0; f * plane];
    for k in 0..f {
        let gp: f64 = (0..n).map(|j| wd[j * f + k] * grad_logits[j]).sum::<f64>() / plane as f64;
        for (dst, a) in g_g2[k * plane..(k + 1) * plane].iter_mut().zip(&trace.g2[k * plane..(k + 1) * plane]) {
            *dst = if *a > 0.0 { gp } else { 0.0 };
        }
    }

    let mut g_g1 = vec![0.0; f * plane];
    let pair = grads.as_deref_mut().map(|g| split_pair(&mut g.tensors, DEC_W2, DEC_B2));
    conv::backward(&trace.g1, f, side, side, params.tensor(DEC_W2), f, f, &g_g2, pair, Some(&mut g_g1));
    relu_mask(&mut g_g1, &trace.g1);

    let mut g_in = if want_input { Some(vec![0.0; c * plane]) } else { None };
    let pair = grads.as_deref_mut().map(|g| split_pair(&mut g.tensors, DEC_W1, DEC_B1));
    if pair.is_some() || g_in.is_some() {
        conv::backward(&trace.input, c, side, side, params.tensor(DEC_W1), f, c, &g_g1, pair, g_in.as_deref_mut());
    }
    g_in
}

/// Gradient of the mean binary cross-entropy with respect to the logits.
pub fn bce_logit_grads(trace: &DecoderTrace, probs: &[f64], bits: &[u8], scale: f64) -> Vec<f64> {
    let n = probs.len() as f64;
    probs
        .iter()
        .zip(bits)
        .enumerate()
        .map(|(j, (p, &t))| if trace.clamped(j) { 0.0 } else { scale * (p - t as f64) / n })
        .collect()
}

/// Multiplies `dL/dp` by `dp/dlogit`, respecting the clamp.
pub fn prob_to_logit_grads(trace: &DecoderTrace, probs: &[f64], grad_probs: &[f64]) -> Vec<f64> {
    probs
        .iter()
        .zip(grad_probs)
        .enumerate()
        .map(|(j, (p, g))| if trace.clamped(j) { 0.0 } else { g * p * (1.0 - p) })
        .collect()
}
