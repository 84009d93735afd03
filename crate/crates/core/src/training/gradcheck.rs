//! Central finite-difference check of the hand-written backward passes.

use rand::seq::index::sample;

use crate::codec::network::Gradients;
use crate::codec::{CodecParams, ENCODER_TENSORS};
use crate::error::{invalid, Result};
use crate::image::Image;
use crate::rng;
use crate::transforms::PerturbationFamily;

use super::{phase1_objective_traced, phase2_objective_traced, LossWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    /// Weights probed per loss path.
    pub samples: usize,
    pub step: f64,
    pub seed: u64,
    /// Perturbation layer for the phase-1 objective. Its draws are fixed by `seed`.
    pub perturbation: Option<PerturbationFamily>,
    pub weights: LossWeights,
    /// Zero the analytic gradient of the probed weight with the largest
    /// magnitude, to confirm the check notices a broken backward pass.
    pub corrupt: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            samples: 100,
            step: 1e-3,
            seed: 0,
            perturbation: None,
            weights: LossWeights::default(),
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max relative error on the weighted phase-1 loss, over all tensors.
    pub total: f64,
    /// Max relative error on the residual information loss, over encoder tensors.
    pub ril: f64,
    pub checked: usize,
    /// Probes that needed a smaller step to avoid an activation boundary.
    pub kinked: usize,
    /// Probes left out because no candidate step avoided a boundary.
    pub unresolved: usize,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.total.max(self.ril)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Flat weight positions `(tensor, index)` over the given tensors.
fn pick(params: &CodecParams, tensors: std::ops::Range<usize>, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let sizes: Vec<(usize, usize)> = tensors.map(|t| (t, params.tensor(t).len())).collect();
    let total: usize = sizes.iter().map(|s| s.1).sum();
    let mut r = rng::stream(seed, rng::stage_id("grad_check"), 0);
    let mut picked: Vec<usize> = sample(&mut r, total, count.min(total)).into_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|mut flat| {
            for &(t, len) in &sizes {
                if flat < len {
                    return (t, flat);
                }
                flat -= len;
            }
            unreachable!()
        })
        .collect()
}

/// Central difference at the first step in `step, step/10, ...` whose probes
/// stay in the same activation region as the base point. `None` when every
/// candidate straddles a ReLU or clamp boundary.
fn central_difference(
    params: &CodecParams,
    probe: &mut CodecParams,
    (t, i): (usize, usize),
    step: f64,
    base_pattern: u64,
    objective: &impl Fn(&CodecParams) -> Result<(f64, u64)>,
) -> Result<(Option<f64>, bool)> {
    let orig = params.tensor(t)[i];
    let mut h = step;
    let mut reduced = false;
    for _ in 0..KINK_RETRIES {
        probe.tensors_mut()[t][i] = orig + h;
        let (up, pu) = objective(probe)?;
        probe.tensors_mut()[t][i] = orig - h;
        let (down, pd) = objective(probe)?;
        probe.tensors_mut()[t][i] = orig;
        if pu == base_pattern && pd == base_pattern {
            return Ok((Some((up - down) / (2.0 * h)), reduced));
        }
        reduced = true;
        h /= 10.0;
    }
    Ok((None, true))
}

const KINK_RETRIES: usize = 4;

#[derive(Debug, Default)]
struct PathResult {
    worst: f64,
    kinked: usize,
    unresolved: usize,
}

fn check_path(
    params: &CodecParams,
    positions: &[(usize, usize)],
    analytic: &Gradients,
    step: f64,
    corrupt: bool,
    base_pattern: u64,
    objective: impl Fn(&CodecParams) -> Result<(f64, u64)>,
) -> Result<PathResult> {
    let mut grads: Vec<f64> = positions.iter().map(|&(t, i)| analytic.get(t, i)).collect();
    if corrupt {
        let k = (0..grads.len()).max_by(|&a, &b| grads[a].abs().total_cmp(&grads[b].abs())).unwrap_or(0);
        grads[k] = 0.0;
    }
    let mut probe = params.clone();
    let mut out = PathResult::default();
    for (&pos, &a) in positions.iter().zip(&grads) {
        let (numeric, reduced) = central_difference(params, &mut probe, pos, step, base_pattern, &objective)?;
        out.kinked += usize::from(reduced);
        match numeric {
            Some(n) => out.worst = out.worst.max(relative_error(a, n)),
            None => out.unresolved += 1,
        }
    }
    Ok(out)
}

/// Compares analytic gradients of both training objectives against central
/// differences on randomly chosen weights.
///
/// A probe whose `w +- step` evaluations cross a ReLU or clamp boundary sees
/// a different piecewise-smooth function than the analytic gradient at `w`.
/// Such probes are retried with the step divided by ten, a few times; they are
/// counted in `kinked`, and those that never settle in `unresolved`.
pub fn grad_check(params: &CodecParams, batch: &[Image], opts: &GradCheckOptions) -> Result<GradCheckReport> {
    if batch.is_empty() || opts.samples == 0 {
        return Err(invalid("grad check needs a nonempty batch and at least one sample"));
    }
    if !(opts.step > 0.0) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let refs: Vec<&Image> = batch.iter().collect();
    let seed = rng::derive_seed(opts.seed, rng::stage_id("grad_check.batch"), 0);
    let fam = opts.perturbation.as_ref();

    let (_, g_total, base) = phase1_objective_traced(params, &refs, seed, fam, &opts.weights)?;
    let all = pick(params, 0..params.tensors().len(), opts.samples, opts.seed);
    let total = check_path(params, &all, &g_total, opts.step, opts.corrupt, base, |p| {
        phase1_objective_traced(p, &refs, seed, fam, &opts.weights).map(|r| (r.0, r.2))
    })?;

    let (_, g_ril, base) = phase2_objective_traced(params, &refs, seed, 1.0);
    let enc = pick(params, ENCODER_TENSORS, opts.samples, opts.seed ^ 1);
    let ril = check_path(params, &enc, &g_ril, opts.step, opts.corrupt, base, |p| {
        let r = phase2_objective_traced(p, &refs, seed, 1.0);
        Ok((r.0, r.2))
    })?;

    Ok(GradCheckReport {
        total: total.worst,
        ril: ril.worst,
        checked: all.len() + enc.len(),
        kinked: total.kinked + ril.kinked,
        unresolved: total.unresolved + ril.unresolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{init_codec, CodecConfig};
    use crate::image::Shape;

    fn batch(side: usize, count: usize) -> Vec<Image> {
        let s = Shape::square(side, 1).unwrap();
        (0..count)
            .map(|k| {
                Image::from_fn(s, |x, y, _| 0.5 + 0.25 * ((x as f64 * 0.7 + k as f64).sin() * (y as f64 * 0.45).cos()))
                    .unwrap()
            })
            .collect()
    }

    const STRENGTH: f64 = 0.3;

    fn small() -> CodecParams {
        let cfg = CodecConfig { side: 12, filters: 16, message_len: 5, strength: STRENGTH, ..CodecConfig::default() };
        init_codec(&cfg, 9).unwrap()
    }

    /// Larger dense weights so that beliefs from w and z differ and the
    /// residual information loss has a non-vanishing gradient.
    fn sharpened() -> CodecParams {
        let p = small();
        let mut t = p.tensors().to_vec();
        t[crate::codec::DEC_WD].iter_mut().for_each(|w| *w *= 8.0);
        t[crate::codec::ENC_W3].iter_mut().for_each(|w| *w *= 4.0);
        CodecParams::from_tensors(*p.config(), t).unwrap()
    }

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-10, 0.0) - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn fresh_codec_passes() {
        let r = grad_check(&small(), &batch(12, 2), &GradCheckOptions::default()).unwrap();
        assert_eq!(r.checked, 200);
        assert!(r.total < 1e-4, "total {}", r.total);
        assert!(r.ril < 1e-4, "ril {}", r.ril);
    }

    #[test]
    fn sharpened_codec_passes() {
        let r = grad_check(&sharpened(), &batch(12, 2), &GradCheckOptions::default()).unwrap();
        assert_eq!(r.unresolved, 0);
        assert!(r.total < 1e-4, "total {}", r.total);
        assert!(r.ril < 1e-4, "ril {}", r.ril);
    }

    #[test]
    fn zeroed_gradient_is_detected() {
        let opts = GradCheckOptions { corrupt: true, ..GradCheckOptions::default() };
        let r = grad_check(&sharpened(), &batch(12, 2), &opts).unwrap();
        assert!(r.total > 1e-2);
        assert!(r.ril > 1e-2);
    }

    #[test]
    fn affine_layer_passes() {
        let opts = GradCheckOptions {
            samples: 40,
            perturbation: Some(PerturbationFamily::Affine(0.02)),
            ..GradCheckOptions::default()
        };
        let r = grad_check(&small(), &batch(12, 2), &opts).unwrap();
        assert!(r.total < 1e-4, "total {}", r.total);
    }
}
