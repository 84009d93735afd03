//! Randomized smoothing of watermark authentication and Monte Carlo certification.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use crate::codec::linear::{decode_values, LinearCodec};
use crate::codec::{decode_bits, decode_probs_raw, CodecParams};
use crate::error::{ensure_len, invalid, Result};
use crate::image::{BitMessage, Image, Shape};
use crate::metrics::{check_threshold, verify};
use crate::rng;
use crate::transforms::{add_gaussian_noise, sample_affine, AffineWarp};

/// Where smoothing noise is added.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothingSpace {
    PixelGaussian,
    /// Gaussian noise on the six affine coefficients.
    Affine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    pub sigma: f64,
    pub space: SmoothingSpace,
    /// Draws used to guess the top class.
    pub n0: usize,
    /// Draws used to bound its probability.
    pub n: usize,
    pub alpha: f64,
    /// Draws per independently seeded chunk.
    pub batch_size: usize,
    /// Clamp noisy pixels to `[0, 1]` before classifying. The clamp is then
    /// part of the base classifier, so the certificate is unaffected.
    pub clamp: bool,
}

impl SmoothingConfig {
    pub fn new(sigma: f64, space: SmoothingSpace) -> Self {
        SmoothingConfig { sigma, space, n0: 100, n: 100_000, alpha: 0.001, batch_size: 1000, clamp: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("smoothing sigma must be > 0"));
        }
        if self.n0 == 0 || self.n0 > self.n {
            return Err(invalid(format!("need 0 < N0 <= N, got N0={} N={}", self.n0, self.n)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha must be in (0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(invalid("sampling batch size must be positive"));
        }
        Ok(())
    }
}

/// Votes of the base classifier over noise draws.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CountPair {
    pub class0: u64,
    pub class1: u64,
}

impl CountPair {
    pub fn total(&self) -> u64 {
        self.class0 + self.class1
    }

    pub fn get(&self, class: u8) -> u64 {
        if class == 1 {
            self.class1
        } else {
            self.class0
        }
    }

    /// Majority class; ties go to class 0.
    pub fn top(&self) -> u8 {
        u8::from(self.class1 > self.class0)
    }

    fn add(self, o: CountPair) -> CountPair {
        CountPair { class0: self.class0 + o.class0, class1: self.class1 + o.class1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Class(u8),
    Abstain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertOutcome {
    pub decision: Decision,
    pub radius: f64,
    /// Lower confidence bound on the top-class probability.
    pub p_lower: f64,
}

/// A binary classifier over raw interleaved pixel buffers.
pub trait BaseClassifier: Sync {
    fn shape(&self) -> Shape;
    fn classify(&self, pixels: &[f64]) -> Result<u8>;
}

/// `authenticate` with the codec, secret and threshold fixed.
#[derive(Debug, Clone, Copy)]
pub struct WatermarkAuthenticator<'a> {
    pub params: &'a CodecParams,
    pub secret: &'a BitMessage,
    pub threshold: f64,
}

impl<'a> WatermarkAuthenticator<'a> {
    pub fn new(params: &'a CodecParams, secret: &'a BitMessage, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        ensure_len(params.config().message_len, secret.len())?;
        Ok(WatermarkAuthenticator { params, secret, threshold })
    }
}

impl BaseClassifier for WatermarkAuthenticator<'_> {
    fn shape(&self) -> Shape {
        self.params.shape()
    }

    fn classify(&self, pixels: &[f64]) -> Result<u8> {
        let decoded = decode_bits(&decode_probs_raw(self.params, pixels)?);
        Ok(u8::from(verify(&decoded, self.secret, self.threshold)?.pass))
    }
}

/// Class 1 iff `<weights, v> + offset > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScoreClassifier {
    pub shape: Shape,
    pub weights: Vec<f64>,
    pub offset: f64,
}

impl LinearScoreClassifier {
    pub fn score(&self, pixels: &[f64]) -> f64 {
        crate::codec::linear::dot(&self.weights, pixels) + self.offset
    }
}

impl BaseClassifier for LinearScoreClassifier {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn classify(&self, pixels: &[f64]) -> Result<u8> {
        ensure_len(self.weights.len(), pixels.len())?;
        Ok(u8::from(self.score(pixels) > 0.0))
    }
}

/// Authentication with the linear codec and a known reference image: decode
/// `v - x` by pattern projections and verify against the secret.
#[derive(Debug, Clone, Copy)]
pub struct LinearAuthenticator<'a> {
    pub codec: &'a LinearCodec,
    pub reference: &'a Image,
    pub secret: &'a BitMessage,
    pub threshold: f64,
}

impl BaseClassifier for LinearAuthenticator<'_> {
    fn shape(&self) -> Shape {
        self.codec.shape()
    }

    fn classify(&self, pixels: &[f64]) -> Result<u8> {
        ensure_len(self.reference.pixels().len(), pixels.len())?;
        let z: Vec<f64> = pixels.iter().zip(self.reference.pixels()).map(|(a, b)| a - b).collect();
        let decoded = decode_values(self.codec, &z)?;
        Ok(u8::from(verify(&decoded, self.secret, self.threshold)?.pass))
    }
}

/// Watermark authentication: decode, then verify against `t` at threshold `tau`.
pub fn authenticate(params: &CodecParams, w: &Image, t: &BitMessage, tau: f64) -> Result<u8> {
    params.shape().ensure_same(&w.shape())?;
    WatermarkAuthenticator::new(params, t, tau)?.classify(w.pixels())
}

fn noisy_copy<R: Rng + ?Sized>(pixels: &[f64], shape: Shape, config: &SmoothingConfig, rng: &mut R) -> Result<Vec<f64>> {
    let mut out = match config.space {
        SmoothingSpace::PixelGaussian => {
            let mut v = pixels.to_vec();
            add_gaussian_noise(&mut v, config.sigma, rng);
            v
        }
        SmoothingSpace::Affine => AffineWarp::new(shape, &sample_affine(config.sigma, rng)?).apply(pixels),
    };
    if config.clamp {
        out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Votes over `count` noise draws. Draws are split into chunks of
/// `config.batch_size`, chunk `c` using its own stream derived from `seed`, so
/// counts do not depend on the number of worker threads.
pub fn sample_under_noise_seeded<C: BaseClassifier + ?Sized>(
    classifier: &C,
    pixels: &[f64],
    config: &SmoothingConfig,
    count: usize,
    seed: u64,
) -> Result<CountPair> {
    config.validate()?;
    if count == 0 {
        return Err(invalid("need at least one draw"));
    }
    let shape = classifier.shape();
    ensure_len(shape.len(), pixels.len())?;
    let chunks = count.div_ceil(config.batch_size);
    let stage = rng::stage_id("sample_under_noise");
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, stage, c as u64);
            let draws = config.batch_size.min(count - c * config.batch_size);
            let mut votes = CountPair::default();
            for _ in 0..draws {
                match classifier.classify(&noisy_copy(pixels, shape, config, &mut r)?)? {
                    1 => votes.class1 += 1,
                    _ => votes.class0 += 1,
                }
            }
            Ok(votes)
        })
        .collect::<Result<Vec<CountPair>>>()?;
    Ok(parts.into_iter().fold(CountPair::default(), CountPair::add))
}

/// [`sample_under_noise_seeded`] with the chunk seed drawn from `rng`.
pub fn sample_under_noise<C: BaseClassifier + ?Sized, R: RngCore + ?Sized>(
    classifier: &C,
    pixels: &[f64],
    config: &SmoothingConfig,
    count: usize,
    rng: &mut R,
) -> Result<CountPair> {
    sample_under_noise_seeded(classifier, pixels, config, count, rng.next_u64())
}

/// Majority vote of the smoothed classifier over `count` draws; `None` on a tie.
pub fn smoothed_predict<C: BaseClassifier + ?Sized>(
    classifier: &C,
    pixels: &[f64],
    config: &SmoothingConfig,
    count: usize,
    seed: u64,
) -> Result<Option<u8>> {
    let votes = sample_under_noise_seeded(classifier, pixels, config, count, seed)?;
    Ok(match votes.class1.cmp(&votes.class0) {
        std::cmp::Ordering::Greater => Some(1),
        std::cmp::Ordering::Less => Some(0),
        std::cmp::Ordering::Equal => None,
    })
}

/// `P[Binomial(n, p) >= k]`.
fn binomial_upper_tail(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        1.0
    } else if p <= 0.0 {
        0.0
    } else if p >= 1.0 {
        1.0
    } else {
        beta_reg(k as f64, (n - k + 1) as f64, p)
    }
}

/// One-sided exact (Clopper-Pearson) lower confidence bound on a binomial
/// proportion: the `p` at which `P[Binomial(n, p) >= k] = alpha`, found by
/// bisection to 1e-12.
pub fn lower_conf_bound(k: u64, n: u64, alpha: f64) -> Result<f64> {
    if n == 0 || k > n {
        return Err(invalid(format!("need 0 <= k <= n and n > 0, got k={k} n={n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha must be in (0, 1)"));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if binomial_upper_tail(k, n, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF: rational approximation refined by one Halley step.
pub fn std_normal_inv_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("probability {p} outside (0, 1)")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] =
        [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    const LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = std_normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x -= u / (1.0 + x * u / 2.0);
    Ok(x)
}

/// Decision and radius from the top-class vote count among `n` estimation draws.
pub fn outcome_from_counts(guess: u8, k: u64, n: u64, alpha: f64, sigma: f64) -> Result<CertOutcome> {
    let p_lower = lower_conf_bound(k, n, alpha)?;
    if p_lower > 0.5 {
        Ok(CertOutcome { decision: Decision::Class(guess), radius: sigma * std_normal_inv_cdf(p_lower)?, p_lower })
    } else {
        Ok(CertOutcome { decision: Decision::Abstain, radius: 0.0, p_lower })
    }
}

/// Largest radius any outcome can report: all `n` draws agree.
pub fn radius_ceiling(sigma: f64, n: u64, alpha: f64) -> Result<f64> {
    Ok(sigma * std_normal_inv_cdf(lower_conf_bound(n, n, alpha)?)?)
}

/// Guesses the top class from `N0` draws, bounds its probability from `N`
/// fresh draws, and certifies or abstains. The two stages use independent
/// streams derived from `seed`.
pub fn certify_seeded<C: BaseClassifier + ?Sized>(
    classifier: &C,
    pixels: &[f64],
    config: &SmoothingConfig,
    seed: u64,
) -> Result<CertOutcome> {
    config.validate()?;
    let guess_seed = rng::derive_seed(seed, rng::stage_id("certify.guess"), 0);
    let estimate_seed = rng::derive_seed(seed, rng::stage_id("certify.estimate"), 0);
    let counts0 = sample_under_noise_seeded(classifier, pixels, config, config.n0, guess_seed)?;
    let guess = counts0.top();
    let counts = sample_under_noise_seeded(classifier, pixels, config, config.n, estimate_seed)?;
    outcome_from_counts(guess, counts.get(guess), config.n as u64, config.alpha, config.sigma)
}

/// Certifies authentication of `w` against `t` at threshold `tau`.
pub fn certify<R: RngCore + ?Sized>(
    params: &CodecParams,
    w: &Image,
    t: &BitMessage,
    tau: f64,
    config: &SmoothingConfig,
    rng: &mut R,
) -> Result<CertOutcome> {
    params.shape().ensure_same(&w.shape())?;
    let clf = WatermarkAuthenticator::new(params, t, tau)?;
    certify_seeded(&clf, w.pixels(), config, rng.next_u64())
}

/// Fraction of samples that are correct and certified at radius `>= r`, for
/// each `r` in `radii`. Abstentions count as failures.
pub fn certified_accuracy_curve(outcomes: &[(CertOutcome, u8)], radii: &[f64]) -> Result<Vec<f64>> {
    if outcomes.is_empty() {
        return Err(invalid("no outcomes"));
    }
    let n = outcomes.len() as f64;
    Ok(radii
        .iter()
        .map(|&r| {
            outcomes
                .iter()
                .filter(|(o, truth)| o.decision == Decision::Class(*truth) && o.radius >= r)
                .count() as f64
                / n
        })
        .collect())
}
