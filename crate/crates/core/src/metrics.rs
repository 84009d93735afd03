//! Verification, image-quality and leakage metrics shared by every stage.

use crate::error::{ensure_len, invalid, Error, Result};
use crate::image::{BitMessage, Image, ResidualImage, Shape, WatermarkedImage};

/// Outcome of comparing a decoded message with the claimed secret.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationResult {
    pub bit_accuracy: f64,
    pub pass: bool,
    pub threshold: f64,
}

/// Fraction of positions where `a` and `b` agree.
pub fn bit_accuracy(a: &BitMessage, b: &BitMessage) -> Result<f64> {
    ensure_len(a.len(), b.len())?;
    let matching = a.bits().iter().zip(b.bits()).filter(|(x, y)| x == y).count();
    Ok(matching as f64 / a.len() as f64)
}

/// Passes iff the bit accuracy reaches `threshold` (inclusive).
pub fn verify(decoded: &BitMessage, secret: &BitMessage, threshold: f64) -> Result<VerificationResult> {
    check_threshold(threshold)?;
    let acc = bit_accuracy(decoded, secret)?;
    Ok(VerificationResult { bit_accuracy: acc, pass: acc >= threshold, threshold })
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.5 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("threshold {threshold} outside (0.5, 1]")))
    }
}

/// Largest `n` for which binomial tail counts are computed exactly in `u128`.
const EXACT_TAIL_MAX_N: usize = 120;

/// `P[Binomial(n, 1/2) >= k]` for `k` in `0..=n+1`.
pub fn fair_coin_upper_tails(n: usize) -> Vec<f64> {
    let mut tails = vec![0.0; n + 2];
    if n <= EXACT_TAIL_MAX_N {
        // C(n, j) by the multiplicative recurrence; every intermediate is exact.
        let mut coeffs = Vec::with_capacity(n + 1);
        let mut c: u128 = 1;
        for j in 0..=n {
            coeffs.push(c);
            c = c * (n - j) as u128 / (j + 1) as u128;
        }
        let total = 2f64.powi(n as i32);
        let mut acc: u128 = 0;
        for k in (0..=n).rev() {
            acc += coeffs[k];
            tails[k] = acc as f64 / total;
        }
    } else {
        use statrs::function::gamma::ln_gamma;
        let ln_total = n as f64 * std::f64::consts::LN_2;
        let ln_fact_n = ln_gamma(n as f64 + 1.0);
        let mut acc = 0.0;
        for k in (0..=n).rev() {
            let ln_c = ln_fact_n - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0);
            acc += (ln_c - ln_total).exp();
            tails[k] = acc.min(1.0);
        }
    }
    tails
}

/// Verification threshold `k/n` for a false-positive budget under a uniformly
/// random decoded message: the smallest `k` with `P[Binomial(n, 1/2) >= k] <= target_fpr`.
pub fn compute_threshold(n: usize, target_fpr: f64) -> Result<f64> {
    Ok(threshold_count(n, target_fpr)? as f64 / n as f64)
}

/// The count `k` behind [`compute_threshold`].
pub fn threshold_count(n: usize, target_fpr: f64) -> Result<usize> {
    if n == 0 {
        return Err(invalid("message length must be >= 1"));
    }
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(invalid(format!("target_fpr {target_fpr} outside (0,1)")));
    }
    let tails = fair_coin_upper_tails(n);
    // k = 0 always has tail 1, so the threshold is at least 1 bit.
    (1..=n)
        .find(|&k| tails[k] <= target_fpr)
        .ok_or(Error::InfeasibleThreshold { n, target_fpr })
}

/// Mean squared error over every pixel and channel.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.shape().ensure_same(&b.shape())?;
    Ok(squared_error_mean(a.pixels(), b.pixels()))
}

pub(crate) fn squared_error_mean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Peak signal-to-noise ratio in dB with peak value 1.0.
///
/// Identical images have zero MSE; this returns `f64::INFINITY` for that case
/// rather than dividing by zero.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let err = mse(a, b)?;
    Ok(psnr_from_mse(err))
}

pub fn psnr_from_mse(err: f64) -> f64 {
    if err == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * err.log10()
    }
}

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size * size)
        .map(|i| {
            let dy = (i / size) as f64 - half;
            let dx = (i % size) as f64 - half;
            (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean structural similarity over all fully-contained 11x11 Gaussian windows
/// (sigma 1.5), averaged over channels. Dynamic range 1.0.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    let shape = a.shape();
    shape.ensure_same(&b.shape())?;
    if shape.width < SSIM_WINDOW || shape.height < SSIM_WINDOW {
        return Err(invalid(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            shape.width, shape.height
        )));
    }
    let window = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let out_w = shape.width - SSIM_WINDOW + 1;
    let out_h = shape.height - SSIM_WINDOW + 1;

    let mut channel_total = 0.0;
    for c in 0..shape.channels {
        let mut sum = 0.0;
        for oy in 0..out_h {
            for ox in 0..out_w {
                let (mut mu_a, mut mu_b, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for wy in 0..SSIM_WINDOW {
                    for wx in 0..SSIM_WINDOW {
                        let g = window[wy * SSIM_WINDOW + wx];
                        let pa = a.get(ox + wx, oy + wy, c);
                        let pb = b.get(ox + wx, oy + wy, c);
                        mu_a += g * pa;
                        mu_b += g * pb;
                        aa += g * pa * pa;
                        bb += g * pb * pb;
                        ab += g * pa * pb;
                    }
                }
                let var_a = aa - mu_a * mu_a;
                let var_b = bb - mu_b * mu_b;
                let cov = ab - mu_a * mu_b;
                let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                sum += num / den;
            }
        }
        channel_total += sum / (out_w * out_h) as f64;
    }
    Ok(channel_total / shape.channels as f64)
}

/// Sample Pearson correlation coefficient.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    ensure_len(xs.len(), ys.len())?;
    if xs.len() < 2 {
        return Err(invalid("pearson_r needs at least two samples"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `w - x`, elementwise.
pub fn residual(w: &WatermarkedImage, x: &Image) -> Result<ResidualImage> {
    w.shape().ensure_same(&x.shape())?;
    let values = w.pixels().iter().zip(x.pixels()).map(|(a, b)| a - b).collect();
    ResidualImage::new(w.shape(), values)
}

/// `clamp(x + zeta * z, 0, 1)`.
pub fn overlay(x: &Image, z: &ResidualImage, zeta: f64) -> Result<Image> {
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(invalid(format!("overlay multiplier {zeta} must be > 0")));
    }
    x.shape().ensure_same(&z.shape())?;
    let pixels = x.pixels().iter().zip(z.values()).map(|(p, r)| p + zeta * r).collect();
    Image::from_clamped(x.shape(), pixels)
}

/// Checks that two shapes agree; exported for callers that work on raw buffers.
pub fn ensure_same_shape(a: Shape, b: Shape) -> Result<()> {
    a.ensure_same(&b)
}
