//! Training objectives and the two-phase training loop.
//!
//! Phase 1 trains encoder and decoder on the weighted message/residual loss with
//! the perturbation layer between them. Phase 2 updates only the encoder on the
//! residual information loss, with the decoder frozen.

pub mod adam;
pub mod gradcheck;
pub mod info;
pub mod loss;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::codec::network::{self, Gradients};
use crate::codec::{init_codec, CodecConfig, CodecParams, DECODER_TENSORS, ENCODER_TENSORS};
use crate::error::{invalid, Error, Result};
use crate::image::{BitMessage, Image};
use crate::rng;
use crate::transforms::{perturb_traced, AppliedPerturbation, PerturbationFamily};

pub use adam::{adam_step, OptimizerState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use info::{kl_bernoulli, loss_ril, mutual_information_discrete};
pub use loss::{loss_message, loss_residual, loss_total, LossWeights};

/// Training regime: which perturbation layer sits between encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    Clean,
    /// Empirical robustness from a mixture of distortions.
    Empirical,
    CertifiedGaussian(f64),
    CertifiedAffine(f64),
}

impl Regime {
    /// The default perturbation layer for this regime; `None` is the identity.
    pub fn perturbation(&self) -> Option<PerturbationFamily> {
        match *self {
            Regime::Clean => None,
            Regime::Empirical => Some(PerturbationFamily::Mixture(vec![
                (PerturbationFamily::GaussianPixel(0.05), 0.5),
                (PerturbationFamily::Affine(0.005), 0.5),
            ])),
            Regime::CertifiedGaussian(s) => Some(PerturbationFamily::GaussianPixel(s)),
            Regime::CertifiedAffine(s) => Some(PerturbationFamily::Affine(s)),
        }
    }

    pub fn tag(&self) -> String {
        match self {
            Regime::Clean => "clean".into(),
            Regime::Empirical => "w-er".into(),
            Regime::CertifiedGaussian(s) => format!("w-cr-gaussian({s})"),
            Regime::CertifiedAffine(s) => format!("w-cr-affine({s})"),
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let arg = |prefix: &str| -> Option<Result<f64>> {
            s.strip_prefix(prefix).and_then(|r| r.strip_suffix(')')).map(|v| {
                v.parse::<f64>().map_err(|_| invalid(format!("bad regime sigma in {s:?}")))
            })
        };
        match s.as_str() {
            "clean" => return Ok(Regime::Clean),
            "w-er" => return Ok(Regime::Empirical),
            _ => {}
        }
        if let Some(v) = arg("w-cr-gaussian(") {
            return Ok(Regime::CertifiedGaussian(v?));
        }
        if let Some(v) = arg("w-cr-affine(") {
            return Ok(Regime::CertifiedAffine(v?));
        }
        Err(invalid(format!("unknown regime {s:?}")))
    }
}

/// When phase 2 runs relative to phase 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RilSchedule {
    /// Every batch of the last `phase2_epochs` phase-1 epochs is followed by a
    /// phase-2 update on the same images.
    Interleaved,
    /// `phase2_epochs` epochs of phase 2 alone after phase 1 finishes.
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub regime: Regime,
    /// Perturbation layer; `None` is the identity.
    pub perturbation: Option<PerturbationFamily>,
    pub ril: bool,
    pub ril_schedule: RilSchedule,
    pub weights: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::for_regime(Regime::Clean)
    }
}

impl TrainConfig {
    pub fn for_regime(regime: Regime) -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            phase1_epochs: 30,
            phase2_epochs: 0,
            regime,
            perturbation: regime.perturbation(),
            ril: false,
            ril_schedule: RilSchedule::Sequential,
            weights: LossWeights::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning rate must be positive"));
        }
        if self.ril && self.ril_schedule == RilSchedule::Interleaved && self.phase2_epochs > self.phase1_epochs {
            return Err(invalid("interleaved phase 2 cannot span more epochs than phase 1"));
        }
        if let Some(f) = &self.perturbation {
            f.validate()?;
        }
        self.weights.validate()
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: u8,
    pub loss_message: f64,
    pub loss_residual: f64,
    pub loss_ril: Option<f64>,
    pub train_bit_accuracy: f64,
    pub val_bit_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct BatchStats {
    loss_message: f64,
    loss_residual: f64,
    loss_ril: f64,
    bit_accuracy: f64,
    /// Combined activation signature of every sample in the batch.
    pattern: u64,
}

impl BatchStats {
    fn add(&mut self, o: &BatchStats) {
        self.loss_message += o.loss_message;
        self.loss_residual += o.loss_residual;
        self.loss_ril += o.loss_ril;
        self.bit_accuracy += o.bit_accuracy;
        self.pattern = rng::mix(self.pattern ^ o.pattern);
    }

    fn scaled(mut self, k: f64) -> Self {
        self.loss_message *= k;
        self.loss_residual *= k;
        self.loss_ril *= k;
        self.bit_accuracy *= k;
        self
    }
}

/// The random draws for one training sample, derived from a seed so that a
/// batch objective can be re-evaluated exactly (for gradient checks).
fn sample_message(seed: u64, n: usize) -> (BitMessage, rng::StreamRng) {
    let mut r = rng::stream(seed, rng::stage_id("train.sample"), 0);
    let t = BitMessage::random(n, &mut r).expect("n >= 1");
    (t, r)
}

fn batch_seed(seed: u64, epoch: usize, batch: usize, slot: usize) -> u64 {
    rng::derive_seed(seed, ((epoch as u64) << 32) | batch as u64, slot as u64)
}

fn bit_agreement(probs: &[f64], bits: &[u8]) -> f64 {
    probs.iter().zip(bits).filter(|(p, b)| u8::from(**p > 0.5) == **b).count() as f64 / bits.len() as f64
}

/// Phase-1 objective for one sample, scaled by `scale`; accumulates both networks' gradients.
fn phase1_sample(
    params: &CodecParams,
    x: &Image,
    sample_seed: u64,
    perturbation: Option<&PerturbationFamily>,
    weights: &LossWeights,
    scale: f64,
) -> Result<(Gradients, BatchStats)> {
    let cfg = params.config();
    let shape = x.shape();
    let (t, mut r) = sample_message(sample_seed, cfg.message_len);
    let signs: Vec<f64> = t.signs().collect();
    let xp = network::to_planar(x.pixels(), shape);
    let (w, enc) = network::encode_traced(params, &xp, &signs);

    let (dec_in, applied) = match perturbation {
        Some(fam) => {
            let hwc = network::from_planar(&w, shape);
            let (out, applied) = perturb_traced(fam, shape, &hwc, &mut r)?;
            (network::to_planar(&out, shape), Some(applied))
        }
        None => (w.clone(), None),
    };
    let (_, probs, dec) = network::decode_traced(params, &dec_in);
    let mut pattern = rng::mix(enc.signature() ^ dec.signature().rotate_left(17));
    if let Some(AppliedPerturbation::Noise { passed }) = &applied {
        pattern = network::mask_hash(pattern, passed.iter().copied());
    }

    let lm = loss::bce(&probs, t.bits());
    let lr = crate::metrics::squared_error_mean(&w, &xp);

    let mut grads = Gradients::zeros(cfg);
    let gl = network::bce_logit_grads(&dec, &probs, t.bits(), scale * weights.message);
    let g_in = network::decoder_backward(params, &dec, &gl, Some(&mut grads), true).expect("input grad");
    let mut g_w = match &applied {
        Some(a) => {
            let g = a.backward(&network::from_planar(&g_in, shape));
            network::to_planar(&g, shape)
        }
        None => g_in,
    };
    let k = scale * weights.residual * 2.0 / w.len() as f64;
    for ((g, a), b) in g_w.iter_mut().zip(&w).zip(&xp) {
        *g += k * (a - b);
    }
    network::encoder_backward(params, &enc, &signs, &g_w, &mut grads);

    let stats = BatchStats {
        loss_message: lm,
        loss_residual: lr,
        loss_ril: 0.0,
        bit_accuracy: bit_agreement(&probs, t.bits()),
        pattern,
    };
    Ok((grads, stats))
}

/// Phase-2 objective for one sample, scaled by `scale`; accumulates encoder gradients only.
fn phase2_sample(params: &CodecParams, x: &Image, sample_seed: u64, lambda: f64, scale: f64) -> (Gradients, BatchStats) {
    let cfg = params.config();
    let shape = x.shape();
    let (t, _) = sample_message(sample_seed, cfg.message_len);
    let signs: Vec<f64> = t.signs().collect();
    let xp = network::to_planar(x.pixels(), shape);
    let (w, enc) = network::encode_traced(params, &xp, &signs);
    let z_in: Vec<f64> = w.iter().zip(&xp).map(|(a, b)| a - b + 0.5).collect();

    let (_, pw, dec_w) = network::decode_traced(params, &w);
    let (_, pz, dec_z) = network::decode_traced(params, &z_in);
    let ril = info::ril_values(&pw, &pz);

    let (gpw, gpz) = info::ril_prob_grads(&pw, &pz);
    let k = scale * lambda;
    let gpw: Vec<f64> = gpw.iter().map(|g| g * k).collect();
    let gpz: Vec<f64> = gpz.iter().map(|g| g * k).collect();
    let glw = network::prob_to_logit_grads(&dec_w, &pw, &gpw);
    let glz = network::prob_to_logit_grads(&dec_z, &pz, &gpz);
    let mut g_w = network::decoder_backward(params, &dec_w, &glw, None, true).expect("input grad");
    let g_z = network::decoder_backward(params, &dec_z, &glz, None, true).expect("input grad");
    // z = w - x, so dz/dw is the identity.
    g_w.iter_mut().zip(&g_z).for_each(|(a, b)| *a += b);

    let mut grads = Gradients::zeros(cfg);
    network::encoder_backward(params, &enc, &signs, &g_w, &mut grads);
    let stats = BatchStats {
        loss_message: loss::bce(&pw, t.bits()),
        loss_residual: crate::metrics::squared_error_mean(&w, &xp),
        loss_ril: ril,
        bit_accuracy: bit_agreement(&pw, t.bits()),
        pattern: rng::mix(enc.signature() ^ dec_w.signature().rotate_left(17) ^ dec_z.signature().rotate_left(41)),
    };
    (grads, stats)
}

fn reduce(results: Vec<(Gradients, BatchStats)>, cfg: &CodecConfig) -> (Gradients, BatchStats) {
    // Fixed summation order keeps results independent of the thread count.
    let mut total = Gradients::zeros(cfg);
    let mut stats = BatchStats::default();
    for (g, s) in &results {
        total.add_assign(g);
        stats.add(s);
    }
    (total, stats)
}

/// Mean phase-1 loss over `batch` and its gradient, with all randomness derived from `seed`.
pub fn phase1_objective(
    params: &CodecParams,
    batch: &[&Image],
    seed: u64,
    perturbation: Option<&PerturbationFamily>,
    weights: &LossWeights,
) -> Result<(f64, Gradients)> {
    phase1_objective_traced(params, batch, seed, perturbation, weights).map(|(v, g, _)| (v, g))
}

/// [`phase1_objective`] plus the activation signature of the whole batch.
pub(crate) fn phase1_objective_traced(
    params: &CodecParams,
    batch: &[&Image],
    seed: u64,
    perturbation: Option<&PerturbationFamily>,
    weights: &LossWeights,
) -> Result<(f64, Gradients, u64)> {
    let scale = 1.0 / batch.len() as f64;
    let results = batch
        .par_iter()
        .enumerate()
        .map(|(i, x)| phase1_sample(params, x, rng::derive_seed(seed, 1, i as u64), perturbation, weights, scale))
        .collect::<Result<Vec<_>>>()?;
    let (g, s) = reduce(results, params.config());
    let s = s.scaled(scale);
    Ok((loss_total(s.loss_message, s.loss_residual, weights), g, s.pattern))
}

/// Mean residual information loss over `batch` (scaled by `lambda`) and its encoder gradient.
pub fn phase2_objective(params: &CodecParams, batch: &[&Image], seed: u64, lambda: f64) -> (f64, Gradients) {
    let (v, g, _) = phase2_objective_traced(params, batch, seed, lambda);
    (v, g)
}

pub(crate) fn phase2_objective_traced(
    params: &CodecParams,
    batch: &[&Image],
    seed: u64,
    lambda: f64,
) -> (f64, Gradients, u64) {
    let scale = 1.0 / batch.len() as f64;
    let results: Vec<_> = batch
        .par_iter()
        .enumerate()
        .map(|(i, x)| phase2_sample(params, x, rng::derive_seed(seed, 1, i as u64), lambda, scale))
        .collect();
    let (g, s) = reduce(results, params.config());
    (lambda * s.loss_ril * scale, g, s.pattern)
}

/// Mean bit accuracy of `decode(encode(x, t))` with seeded random messages and no perturbation.
pub fn evaluate_bit_accuracy(params: &CodecParams, images: &[Image], seed: u64) -> Result<f64> {
    if images.is_empty() {
        return Err(invalid("no images to evaluate"));
    }
    let n = params.config().message_len;
    let accs = images
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut r = rng::stream(seed, rng::stage_id("eval.message"), i as u64);
            let t = BitMessage::random(n, &mut r)?;
            let w = crate::codec::encode(params, x, &t)?;
            let decoded = crate::codec::decode_bits(&crate::codec::decode_probs(params, &w)?);
            crate::metrics::bit_accuracy(&decoded, &t)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(accs.iter().sum::<f64>() / accs.len() as f64)
}

fn check_finite(stats: &BatchStats, epoch: usize) -> Result<()> {
    if [stats.loss_message, stats.loss_residual, stats.loss_ril].iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::TrainingDiverged { epoch, reason: "non-finite loss".into() })
    }
}

fn diverged_at(e: Error, epoch: usize) -> Error {
    match e {
        Error::TrainingDiverged { reason, .. } => Error::TrainingDiverged { epoch, reason },
        other => other,
    }
}

/// Trains a codec from scratch. See [`train_from`].
pub fn train(
    config: &TrainConfig,
    codec: &CodecConfig,
    train_set: &[Image],
    val_set: &[Image],
) -> Result<(CodecParams, TrainReport)> {
    let params = init_codec(codec, codec.seed)?;
    train_from(params, config, train_set, val_set)
}

/// Runs the configured phases starting from `params`.
pub fn train_from(
    mut params: CodecParams,
    config: &TrainConfig,
    train_set: &[Image],
    val_set: &[Image],
) -> Result<(CodecParams, TrainReport)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(invalid("training set is empty"));
    }
    for x in train_set.iter().chain(val_set) {
        params.shape().ensure_same(&x.shape())?;
    }
    let mut report = TrainReport::default();
    let mut opt1 = OptimizerState::new(&params);
    let mut opt2 = OptimizerState::new(&params);
    let e1 = config.phase1_epochs;
    let e2 = if config.ril { config.phase2_epochs } else { 0 };
    let interleaved = config.ril_schedule == RilSchedule::Interleaved;
    let total_epochs = if interleaved { e1 } else { e1 + e2 };

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..total_epochs {
        let mut shuffle = rng::stream(config.seed, rng::stage_id("train.shuffle"), epoch as u64);
        order.shuffle(&mut shuffle);
        let run_phase1 = epoch < e1;
        let run_phase2 = if interleaved { e2 > 0 && epoch >= e1 - e2 } else { epoch >= e1 };

        let mut p1 = BatchStats::default();
        let mut p2 = BatchStats::default();
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Image> = chunk.iter().map(|&i| &train_set[i]).collect();
            let seed = batch_seed(config.seed, epoch, b, 0);
            if run_phase1 {
                let (_, grads, stats) = phase1_step(&params, &batch, seed, config)?;
                check_finite(&stats, epoch)?;
                adam_step(&mut params, &grads, &mut opt1, config.learning_rate, 0..DECODER_TENSORS.end)
                    .map_err(|e| diverged_at(e, epoch))?;
                p1.add(&stats);
            }
            if run_phase2 {
                let (grads, stats) = phase2_step(&params, &batch, seed, config.weights.ril);
                check_finite(&stats, epoch)?;
                adam_step(&mut params, &grads, &mut opt2, config.learning_rate, ENCODER_TENSORS)
                    .map_err(|e| diverged_at(e, epoch))?;
                p2.add(&stats);
            }
            batches += 1;
        }
        let val = if val_set.is_empty() {
            None
        } else {
            Some(evaluate_bit_accuracy(&params, val_set, config.seed ^ 0x5eed)?)
        };
        let k = 1.0 / batches as f64;
        for (phase, stats, active) in [(1u8, p1, run_phase1), (2u8, p2, run_phase2)] {
            if !active {
                continue;
            }
            let s = stats.scaled(k);
            report.epochs.push(EpochRecord {
                epoch,
                phase,
                loss_message: s.loss_message,
                loss_residual: s.loss_residual,
                loss_ril: (phase == 2).then_some(s.loss_ril),
                train_bit_accuracy: s.bit_accuracy,
                val_bit_accuracy: val,
            });
        }
    }
    Ok((params, report))
}

fn phase1_step(
    params: &CodecParams,
    batch: &[&Image],
    seed: u64,
    config: &TrainConfig,
) -> Result<(f64, Gradients, BatchStats)> {
    let scale = 1.0 / batch.len() as f64;
    let results = batch
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            phase1_sample(
                params,
                x,
                rng::derive_seed(seed, 1, i as u64),
                config.perturbation.as_ref(),
                &config.weights,
                scale,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let (g, s) = reduce(results, params.config());
    let s = s.scaled(scale);
    Ok((loss_total(s.loss_message, s.loss_residual, &config.weights), g, s))
}

fn phase2_step(params: &CodecParams, batch: &[&Image], seed: u64, lambda: f64) -> (Gradients, BatchStats) {
    let scale = 1.0 / batch.len() as f64;
    let results: Vec<_> = batch
        .par_iter()
        .enumerate()
        .map(|(i, x)| phase2_sample(params, x, rng::derive_seed(seed, 1, i as u64), lambda, scale))
        .collect();
    let (g, s) = reduce(results, params.config());
    (g, s.scaled(scale))
}

/// Plug-in estimate of I(z; t) on a tiny quantized view of the residual.
///
/// Every image is embedded with every one of the `2^n` messages (`n <= 4`).
/// The residual `w - x` on the 2x2 crop at `origin` (first channel) is reduced
/// to 4 sign bits, giving a 16-state variable whose joint table with `t` goes
/// through [`mutual_information_discrete`].
pub fn quantized_residual_information(params: &CodecParams, images: &[Image], origin: (usize, usize)) -> Result<f64> {
    let n = params.config().message_len;
    if n > 4 {
        return Err(invalid("quantized information probe supports at most 4 bits"));
    }
    if images.is_empty() {
        return Err(invalid("no images to probe"));
    }
    let shape = params.shape();
    if origin.0 + 2 > shape.width || origin.1 + 2 > shape.height {
        return Err(invalid("crop does not fit the image"));
    }
    let states = 1usize << n;
    let rows = images
        .par_iter()
        .map(|x| {
            let mut counts = vec![vec![0u64; states]; 16];
            for m in 0..states {
                let t = BitMessage::new((0..n).map(|i| ((m >> i) & 1) as u8).collect())?;
                let w = crate::codec::encode(params, x, &t)?;
                let mut cell = 0usize;
                for (k, (dx, dy)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                    let (px, py) = (origin.0 + dx, origin.1 + dy);
                    if w.get(px, py, 0) - x.get(px, py, 0) > 0.0 {
                        cell |= 1 << k;
                    }
                }
                counts[cell][m] += 1;
            }
            Ok(counts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![vec![0u64; states]; 16];
    for c in &rows {
        for (a, b) in total.iter_mut().flatten().zip(c.iter().flatten()) {
            *a += b;
        }
    }
    mutual_information_discrete(&info::joint_from_counts(&total)?)
}
