//! Pixel-space noise, affine coordinate deformation, and the random
//! perturbation layer placed between encoder and decoder during training.
//!
//! Coordinates are normalized per axis to `[-1, 1]` (corner pixels at `±1`).
//! Warps are inverse maps: each output pixel samples the source image.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::image::{Image, Shape};

/// Additive Gaussian pixel noise with standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPixelSpec {
    pub sigma: f64,
}

/// Affine displacement coefficients about the identity transform.
///
/// The source coordinate for normalized output position `(u, v)` is
/// `((1 + b1) u + b2 v + b3, b4 u + (1 + b5) v + b6)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AffineParams(pub [f64; 6]);

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams([0.0; 6]);

    pub fn translation(du: f64, dv: f64) -> Self {
        AffineParams([0.0, 0.0, du, 0.0, 0.0, dv])
    }
}

/// Distribution of affine coefficients: `beta ~ N(0, sigma^2 I_6)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSpec {
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationFamily {
    GaussianPixel(f64),
    Affine(f64),
    /// Branches with positive weights summing to one.
    Mixture(Vec<(PerturbationFamily, f64)>),
}

impl PerturbationFamily {
    /// Builds a mixture, normalizing the weights.
    pub fn mixture(branches: Vec<(PerturbationFamily, f64)>) -> Result<Self> {
        if branches.is_empty() {
            return Err(invalid("mixture needs at least one branch"));
        }
        if branches.iter().any(|(_, w)| !(*w > 0.0 && w.is_finite())) {
            return Err(invalid("mixture weights must be positive"));
        }
        let total: f64 = branches.iter().map(|(_, w)| w).sum();
        let fam = PerturbationFamily::Mixture(
            branches.into_iter().map(|(f, w)| (f, w / total)).collect(),
        );
        fam.validate()?;
        Ok(fam)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PerturbationFamily::GaussianPixel(s) | PerturbationFamily::Affine(s) => {
                if *s >= 0.0 && s.is_finite() {
                    Ok(())
                } else {
                    Err(invalid(format!("noise sigma {s} must be >= 0")))
                }
            }
            PerturbationFamily::Mixture(branches) => {
                if branches.is_empty() {
                    return Err(invalid("mixture needs at least one branch"));
                }
                let total: f64 = branches.iter().map(|(_, w)| w).sum();
                if (total - 1.0).abs() > 1e-12 || branches.iter().any(|(_, w)| *w <= 0.0) {
                    return Err(invalid("mixture weights must be positive and sum to 1"));
                }
                branches.iter().try_for_each(|(f, _)| f.validate())
            }
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("noise sigma {sigma} must be >= 0")))
    }
}

/// Adds independent `N(0, sigma^2)` noise to every value in place (no clamping).
pub fn add_gaussian_noise<R: Rng + ?Sized>(values: &mut [f64], sigma: f64, rng: &mut R) {
    for v in values {
        let e: f64 = rng.sample(StandardNormal);
        *v += sigma * e;
    }
}

/// Gaussian pixel noise followed by clamping to `[0, 1]`.
pub fn apply_gaussian_pixel<R: Rng + ?Sized>(img: &Image, sigma: f64, rng: &mut R) -> Result<Image> {
    check_sigma(sigma)?;
    let mut px = img.pixels().to_vec();
    add_gaussian_noise(&mut px, sigma, rng);
    Image::from_clamped(img.shape(), px)
}

/// Six independent `N(0, sigma^2)` draws.
pub fn sample_affine<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> Result<AffineParams> {
    check_sigma(sigma)?;
    let mut beta = [0.0; 6];
    for b in &mut beta {
        let e: f64 = rng.sample(StandardNormal);
        *b = sigma * e;
    }
    Ok(AffineParams(beta))
}

/// Euclidean norm of the coefficient vector; the unit of the affine certified radius.
pub fn affine_norm(beta: &AffineParams) -> f64 {
    beta.0.iter().map(|b| b * b).sum::<f64>().sqrt()
}

/// Bilinear sampling plan for one affine warp of a fixed shape: four source
/// texels and weights per output pixel, shared by all channels.
#[derive(Debug, Clone)]
pub struct AffineWarp {
    shape: Shape,
    taps: Vec<([usize; 4], [f64; 4])>,
}

impl AffineWarp {
    pub fn new(shape: Shape, beta: &AffineParams) -> Self {
        let [b1, b2, b3, b4, b5, b6] = beta.0;
        let (w, h) = (shape.width, shape.height);
        let half_w = (w - 1) as f64 / 2.0;
        let half_h = (h - 1) as f64 / 2.0;
        let mut taps = Vec::with_capacity(w * h);
        for j in 0..h {
            let v = j as f64 / half_h - 1.0;
            for i in 0..w {
                let u = i as f64 / half_w - 1.0;
                // Displacements are scaled back to pixels and added to the exact
                // integer position, so the zero transform hits texel centres exactly.
                let px = (i as f64 + half_w * (b1 * u + b2 * v + b3)).clamp(0.0, (w - 1) as f64);
                let py = (j as f64 + half_h * (b4 * u + b5 * v + b6)).clamp(0.0, (h - 1) as f64);
                let x0 = px.floor() as usize;
                let y0 = py.floor() as usize;
                let fx = px - x0 as f64;
                let fy = py - y0 as f64;
                let x1 = (x0 + 1).min(w - 1);
                let y1 = (y0 + 1).min(h - 1);
                taps.push((
                    [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
                    [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
                ));
            }
        }
        AffineWarp { shape, taps }
    }

    /// Warps an interleaved buffer of this warp's shape.
    pub fn apply(&self, src: &[f64]) -> Vec<f64> {
        let c = self.shape.channels;
        let mut out = vec![0.0; src.len()];
        for (p, (idx, wt)) in self.taps.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0.0;
                for k in 0..4 {
                    if wt[k] != 0.0 {
                        acc += wt[k] * src[idx[k] * c + ch];
                    }
                }
                out[p * c + ch] = acc;
            }
        }
        out
    }

    /// Transpose of [`AffineWarp::apply`], used to backpropagate through the warp.
    pub fn adjoint(&self, grad_out: &[f64]) -> Vec<f64> {
        let c = self.shape.channels;
        let mut grad = vec![0.0; grad_out.len()];
        for (p, (idx, wt)) in self.taps.iter().enumerate() {
            for ch in 0..c {
                let g = grad_out[p * c + ch];
                for k in 0..4 {
                    grad[idx[k] * c + ch] += wt[k] * g;
                }
            }
        }
        grad
    }
}

/// Deforms `img` by `beta` with bilinear interpolation and edge-clamped sampling.
pub fn apply_affine(img: &Image, beta: &AffineParams) -> Result<Image> {
    if beta.0.iter().any(|b| !b.is_finite()) {
        return Err(invalid("affine coefficients must be finite"));
    }
    let out = AffineWarp::new(img.shape(), beta).apply(img.pixels());
    // Convex combinations of in-range texels stay in range up to rounding.
    Image::from_clamped(img.shape(), out)
}

/// A sampled perturbation, kept so that gradients can be pushed back through it.
#[derive(Debug, Clone)]
pub enum AppliedPerturbation {
    /// Additive noise then clamping; `passed[i]` is false where the clamp was active.
    Noise { passed: Vec<bool> },
    Warp(AffineWarp),
}

impl AppliedPerturbation {
    pub fn backward(&self, grad_out: &[f64]) -> Vec<f64> {
        match self {
            AppliedPerturbation::Noise { passed } => grad_out
                .iter()
                .zip(passed)
                .map(|(g, &ok)| if ok { *g } else { 0.0 })
                .collect(),
            AppliedPerturbation::Warp(warp) => warp.adjoint(grad_out),
        }
    }
}

/// Draws one perturbation from `family` and applies it to a raw interleaved buffer.
pub fn perturb_traced<R: Rng + ?Sized>(
    family: &PerturbationFamily,
    shape: Shape,
    pixels: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, AppliedPerturbation)> {
    match family {
        PerturbationFamily::GaussianPixel(sigma) => {
            check_sigma(*sigma)?;
            let mut out = pixels.to_vec();
            add_gaussian_noise(&mut out, *sigma, rng);
            let mut passed = vec![true; out.len()];
            for (v, ok) in out.iter_mut().zip(passed.iter_mut()) {
                let c = v.clamp(0.0, 1.0);
                if c != *v {
                    *ok = false;
                    *v = c;
                }
            }
            Ok((out, AppliedPerturbation::Noise { passed }))
        }
        PerturbationFamily::Affine(sigma) => {
            let beta = sample_affine(*sigma, rng)?;
            let warp = AffineWarp::new(shape, &beta);
            let out = warp.apply(pixels);
            Ok((out, AppliedPerturbation::Warp(warp)))
        }
        PerturbationFamily::Mixture(branches) => {
            let branch = pick_branch(branches, rng)?;
            perturb_traced(branch, shape, pixels, rng)
        }
    }
}

fn pick_branch<'a, R: Rng + ?Sized>(
    branches: &'a [(PerturbationFamily, f64)],
    rng: &mut R,
) -> Result<&'a PerturbationFamily> {
    let last = branches.last().ok_or_else(|| invalid("empty mixture"))?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (fam, w) in branches {
        acc += w;
        if u < acc {
            return Ok(fam);
        }
    }
    Ok(&last.0)
}

/// One random draw of the perturbation layer.
pub fn perturb<R: Rng + ?Sized>(family: &PerturbationFamily, img: &Image, rng: &mut R) -> Result<Image> {
    let (out, _) = perturb_traced(family, img.shape(), img.pixels(), rng)?;
    Image::from_clamped(img.shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn textured(side: usize) -> Image {
        let s = Shape::square(side, 1).unwrap();
        Image::from_fn(s, |x, y, _| {
            0.5 + 0.4 * ((x as f64 * 0.7).sin() * (y as f64 * 1.3).cos())
        })
        .unwrap()
    }

    /// Horizontal ramp `a + b * x` in pixel units.
    fn ramp(side: usize) -> Image {
        let s = Shape::square(side, 1).unwrap();
        Image::from_fn(s, |x, _, _| 0.1 + 0.8 * x as f64 / (side - 1) as f64).unwrap()
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let img = textured(12);
        let mut rng = stream(1, 0, 0);
        assert_eq!(apply_gaussian_pixel(&img, 0.0, &mut rng).unwrap(), img);
        assert!(apply_gaussian_pixel(&img, -1.0, &mut rng).is_err());
    }

    #[test]
    fn noise_is_reproducible() {
        let img = textured(12);
        let a = apply_gaussian_pixel(&img, 0.2, &mut stream(3, 1, 4)).unwrap();
        let b = apply_gaussian_pixel(&img, 0.2, &mut stream(3, 1, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, img);
    }

    #[test]
    fn noise_variance_matches_sigma() {
        let sigma = 0.1;
        let draws = 100_000;
        let mut rng = stream(11, 2, 0);
        let mut buf = vec![0.5; 1];
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            buf[0] = 0.5;
            add_gaussian_noise(&mut buf, sigma, &mut rng);
            let d = buf[0] - 0.5;
            s1 += d;
            s2 += d * d;
        }
        let n = draws as f64;
        let var = s2 / n - (s1 / n).powi(2);
        let var_se = sigma * sigma * (2.0 / (n - 1.0)).sqrt();
        assert!((var - sigma * sigma).abs() < 3.0 * var_se, "var {var}");
    }

    #[test]
    fn affine_samples_moments() {
        let sigma = 0.02;
        let draws = 100_000;
        let mut rng = stream(5, 3, 0);
        let samples: Vec<[f64; 6]> =
            (0..draws).map(|_| sample_affine(sigma, &mut rng).unwrap().0).collect();
        let n = draws as f64;
        let var_se = sigma * sigma * (2.0 / (n - 1.0)).sqrt();
        for k in 0..6 {
            let col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((var - sigma * sigma).abs() < 3.0 * var_se, "component {k}: {var}");
        }
        for a in 0..6 {
            for b in (a + 1)..6 {
                let xa: Vec<f64> = samples.iter().map(|s| s[a]).collect();
                let xb: Vec<f64> = samples.iter().map(|s| s[b]).collect();
                let r = crate::metrics::pearson_r(&xa, &xb).unwrap();
                assert!(r.abs() < 0.02, "r({a},{b}) = {r}");
            }
        }
        assert_eq!(sample_affine(0.0, &mut rng).unwrap(), AffineParams::IDENTITY);
    }

    #[test]
    fn identity_warp_is_exact() {
        let img = textured(13);
        assert_eq!(apply_affine(&img, &AffineParams::IDENTITY).unwrap(), img);
    }

    #[test]
    fn constant_image_survives_any_warp() {
        let s = Shape::new(10, 14, 3).unwrap();
        let img = Image::constant(s, 0.37).unwrap();
        let beta = AffineParams([0.3, -0.2, 0.5, 0.1, -0.4, -0.7]);
        let out = apply_affine(&img, &beta).unwrap();
        assert!(out.pixels().iter().all(|p| (p - 0.37).abs() < 1e-15));
    }

    #[test]
    fn translation_shifts_ramp() {
        let side = 21;
        let img = ramp(side);
        let delta = 0.1; // one pixel per 0.1 since (side-1)/2 = 10
        let out = apply_affine(&img, &AffineParams::translation(delta, 0.0)).unwrap();
        for y in 0..side {
            for x in 0..side - 1 {
                let expect = 0.1 + 0.8 * (x as f64 + 1.0) / (side - 1) as f64;
                assert!((out.get(x, y, 0) - expect).abs() < 1e-12);
            }
        }
        // Fractional shifts are exact for a linear ramp away from the border.
        let out = apply_affine(&img, &AffineParams::translation(0.037, 0.0)).unwrap();
        for x in 0..side - 1 {
            let expect = 0.1 + 0.8 * (x as f64 + 0.37) / (side - 1) as f64;
            assert!((out.get(x, 5, 0) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn translations_compose() {
        let side = 31;
        let img = ramp(side);
        let a = AffineParams::translation(0.021, 0.0);
        let b = AffineParams::translation(0.043, 0.0);
        let twice = apply_affine(&apply_affine(&img, &a).unwrap(), &b).unwrap();
        let once = apply_affine(&img, &AffineParams::translation(0.064, 0.0)).unwrap();
        for y in 0..side {
            for x in 0..side - 2 {
                assert!((twice.get(x, y, 0) - once.get(x, y, 0)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn warp_stays_within_texel_range() {
        let img = textured(16);
        let mut rng = stream(8, 0, 0);
        for _ in 0..20 {
            let beta = sample_affine(0.2, &mut rng).unwrap();
            let out = AffineWarp::new(img.shape(), &beta).apply(img.pixels());
            assert!(out.iter().all(|p| (-1e-15..=1.0 + 1e-15).contains(p)));
        }
    }

    #[test]
    fn warp_adjoint_is_transpose() {
        let s = Shape::new(9, 11, 3).unwrap();
        let warp = AffineWarp::new(s, &AffineParams([0.1, 0.05, -0.2, 0.02, -0.1, 0.3]));
        let mut rng = stream(2, 2, 2);
        let a: Vec<f64> = (0..s.len()).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..s.len()).map(|_| rng.random::<f64>()).collect();
        let lhs: f64 = warp.apply(&a).iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(warp.adjoint(&b)).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn affine_norm_cases() {
        assert_eq!(affine_norm(&AffineParams::IDENTITY), 0.0);
        assert!((affine_norm(&AffineParams([0.03, 0.0, 0.0, 0.0, 0.04, 0.0])) - 0.05).abs() < 1e-15);
        let mut rng = stream(4, 4, 4);
        for _ in 0..10 {
            let b = sample_affine(1.0, &mut rng).unwrap();
            let mut ss = 0.0;
            for k in 0..6 {
                ss += b.0[k] * b.0[k];
            }
            assert!((affine_norm(&b) - ss.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbation_family_cases() {
        let img = textured(12);
        let mut rng = stream(9, 9, 9);
        assert_eq!(perturb(&PerturbationFamily::GaussianPixel(0.0), &img, &mut rng).unwrap(), img);
        let both = PerturbationFamily::mixture(vec![
            (PerturbationFamily::GaussianPixel(0.0), 0.5),
            (PerturbationFamily::Affine(0.0), 0.5),
        ])
        .unwrap();
        for _ in 0..10 {
            assert_eq!(perturb(&both, &img, &mut rng).unwrap(), img);
        }
        let single = PerturbationFamily::mixture(vec![(PerturbationFamily::Affine(0.05), 3.0)]).unwrap();
        let a = perturb(&single, &img, &mut stream(1, 2, 3)).unwrap();
        let mut r = stream(1, 2, 3);
        let _: f64 = r.random(); // branch choice
        let b = perturb(&PerturbationFamily::Affine(0.05), &img, &mut r).unwrap();
        assert_eq!(a, b);
        assert!(PerturbationFamily::mixture(vec![]).is_err());
        assert!(PerturbationFamily::Mixture(vec![(PerturbationFamily::Affine(0.1), 0.7)])
            .validate()
            .is_err());
    }
}
