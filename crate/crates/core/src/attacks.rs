//! Identity-leakage attacks on post-processing watermarks: forgery by residual
//! averaging, secret extraction from encoder queries, and identity linking by
//! clustering residuals.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng;

use crate::codec::linear::{linear_encode, LinearCodec};
use crate::codec::{encode, CodecParams};
use crate::error::{invalid, Error, Result};
use crate::image::{BitMessage, Image, ResidualImage, Shape};
use crate::metrics::{ensure_same_shape, overlay, pearson_r, residual};
use crate::rng;

/// How an attacker obtains residuals from watermarked images.
#[derive(Debug, Clone, Copy)]
pub enum ResidualSource<'a> {
    /// The matching original is available.
    Exact(&'a Image),
    /// `w - G(w)` with `G` a 5x5 Gaussian blur (sigma 1) standing in for the original.
    Lowpass,
}

pub const LOWPASS_RADIUS: usize = 2;
pub const LOWPASS_SIGMA: f64 = 1.0;

/// Separable Gaussian blur with edge replication, per channel.
pub fn gaussian_blur(img: &Image, radius: usize, sigma: f64) -> Result<Image> {
    Image::from_clamped(img.shape(), blur_values(img.pixels(), img.shape(), radius, sigma)?)
}

/// [`gaussian_blur`] on an unconstrained interleaved buffer.
pub fn blur_values(values: &[f64], s: Shape, radius: usize, sigma: f64) -> Result<Vec<f64>> {
    crate::error::ensure_len(s.len(), values.len())?;
    if !(sigma > 0.0) {
        return Err(invalid("blur sigma must be positive"));
    }
    let taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let norm: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / norm).collect();
    let (w, h) = (s.width as isize, s.height as isize);
    let r = radius as isize;
    let pass = |src: &[f64], horizontal: bool| {
        let mut out = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                for c in 0..s.channels {
                    let mut acc = 0.0;
                    for (k, t) in taps.iter().enumerate() {
                        let d = k as isize - r;
                        let (xx, yy) = if horizontal {
                            ((x + d).clamp(0, w - 1), y)
                        } else {
                            (x, (y + d).clamp(0, h - 1))
                        };
                        acc += t * src[s.index(xx as usize, yy as usize, c)];
                    }
                    out[s.index(x as usize, y as usize, c)] = acc;
                }
            }
        }
        out
    };
    let horiz = pass(values, true);
    Ok(pass(&horiz, false))
}

pub fn estimate_residual(w: &Image, source: ResidualSource<'_>) -> Result<ResidualImage> {
    match source {
        ResidualSource::Exact(x) => residual(w, x),
        ResidualSource::Lowpass => residual(w, &gaussian_blur(w, LOWPASS_RADIUS, LOWPASS_SIGMA)?),
    }
}

/// Overlays `zeta` times the mean residual onto a fresh image.
pub fn forge(residuals: &[ResidualImage], x_new: &Image, zeta: f64) -> Result<Image> {
    if residuals.is_empty() {
        return Err(invalid("forgery needs at least one residual"));
    }
    for z in residuals {
        ensure_same_shape(z.shape(), x_new.shape())?;
    }
    overlay(x_new, &ResidualImage::mean(residuals)?, zeta)
}

/// Black-box access to a watermark encoder.
pub trait EncoderOracle: Sync {
    fn message_len(&self) -> usize;
    fn embed(&self, x: &Image, t: &BitMessage) -> Result<Image>;
}

impl EncoderOracle for CodecParams {
    fn message_len(&self) -> usize {
        self.config().message_len
    }

    fn embed(&self, x: &Image, t: &BitMessage) -> Result<Image> {
        encode(self, x, t)
    }
}

impl EncoderOracle for LinearCodec {
    fn message_len(&self) -> usize {
        LinearCodec::message_len(self)
    }

    fn embed(&self, x: &Image, t: &BitMessage) -> Result<Image> {
        linear_encode(self, x, t)
    }
}

/// Counts calls made through it.
#[derive(Debug)]
pub struct CountingOracle<'a, O: EncoderOracle + ?Sized> {
    inner: &'a O,
    calls: AtomicUsize,
}

impl<'a, O: EncoderOracle + ?Sized> CountingOracle<'a, O> {
    pub fn new(inner: &'a O) -> Self {
        CountingOracle { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<O: EncoderOracle + ?Sized> EncoderOracle for CountingOracle<'_, O> {
    fn message_len(&self) -> usize {
        self.inner.message_len()
    }

    fn embed(&self, x: &Image, t: &BitMessage) -> Result<Image> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.embed(x, t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    pub secret: BitMessage,
    pub queries: usize,
}

/// Greedy bitwise search for the secret behind `z_target`: starting from all
/// zeros, set each bit in turn and keep it when the probe residual moves closer
/// to the target. The residual of the current guess is cached, so the encoder
/// is queried `n + 1` times.
pub fn extract_secret<O: EncoderOracle + ?Sized>(
    oracle: &O,
    z_target: &ResidualImage,
    x_probe: &Image,
    n: usize,
) -> Result<ExtractionResult> {
    ensure_same_shape(z_target.shape(), x_probe.shape())?;
    if n == 0 || n != oracle.message_len() {
        return Err(invalid(format!("message length {n} does not match the encoder ({})", oracle.message_len())));
    }
    let counter = CountingOracle::new(oracle);
    let mut t = BitMessage::zeros(n)?;
    let mut best = residual(&counter.embed(x_probe, &t)?, x_probe)?.distance(z_target)?;
    for i in 0..n {
        let candidate = t.with_bit(i, 1);
        let d = residual(&counter.embed(x_probe, &candidate)?, x_probe)?.distance(z_target)?;
        if d < best {
            best = d;
            t = candidate;
        }
    }
    Ok(ExtractionResult { secret: t, queries: counter.calls() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd iterations from k-means++ seeding. Empty clusters keep their centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    if points.is_empty() || k == 0 || k > points.len() {
        return Err(invalid(format!("k = {k} invalid for {} points", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(invalid("points differ in dimension"));
    }
    let mut r = rng::stream(seed, rng::stage_id("kmeans"), 0);
    let mut centroids = vec![points[r.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = r.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            r.random_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let mut labels = vec![usize::MAX; points.len()];
    let mut inertia = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut total = 0.0;
        for (l, p) in labels.iter_mut().zip(points) {
            let (j, d) = nearest(p, &centroids);
            total += d;
            if *l != j {
                *l = j;
                changed = true;
            }
        }
        inertia.push(total);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (l, p) in labels.iter().zip(points) {
            counts[*l] += 1;
            sums[*l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    Ok(KMeansResult { labels, centroids, inertia })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Mean silhouette coefficient with Euclidean distances. Singleton clusters
/// score 0, as does a point with `a = b = 0`.
pub fn silhouette_score(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::LengthMismatch { expected: points.len(), actual: labels.len() });
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(invalid("silhouette needs at least two nonempty clusters"));
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[labels[j]] += dist(p, q);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / points.len() as f64)
}

/// Projects centered rows onto their top `dims` principal components.
pub fn pca_project(rows: &[Vec<f64>], dims: usize) -> Result<Vec<Vec<f64>>> {
    if rows.is_empty() || dims == 0 {
        return Err(invalid("PCA needs rows and at least one component"));
    }
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    // Eigenvectors of the n x n Gram matrix give the component scores directly:
    // scores = U * sqrt(lambda).
    let gram = &centered * centered.transpose();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let keep = dims.min(n);
    Ok((0..n)
        .map(|i| {
            let mut v: Vec<f64> = order[..keep]
                .iter()
                .map(|&c| eig.eigenvectors[(i, c)] * eig.eigenvalues[c].max(0.0).sqrt())
                .collect();
            v.resize(dims, 0.0);
            v
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkingResult {
    pub labels: Vec<usize>,
    pub silhouette: f64,
    /// Mean pairwise feature distance within each cluster (0 for singletons and empty clusters).
    pub intra_cluster_distance: Vec<f64>,
}

/// Clusters residuals by k-means on PCA features.
///
/// When fewer than two clusters end up nonempty (all residuals identical,
/// say) the silhouette is reported as 0.
pub fn link_identities(residuals: &[ResidualImage], k: usize, pca_dims: usize, seed: u64) -> Result<LinkingResult> {
    if k < 2 {
        return Err(invalid("linking needs k >= 2"));
    }
    if let Some(first) = residuals.first() {
        for z in residuals {
            ensure_same_shape(z.shape(), first.shape())?;
        }
    }
    let rows: Vec<Vec<f64>> = residuals.iter().map(|z| z.values().to_vec()).collect();
    let features = pca_project(&rows, pca_dims)?;
    let km = kmeans(&features, k, seed, 100)?;
    let silhouette = match silhouette_score(&features, &km.labels) {
        Ok(s) => s,
        Err(Error::InvalidArgument(_)) => 0.0,
        Err(e) => return Err(e),
    };
    let intra = (0..k)
        .map(|c| {
            let members: Vec<&Vec<f64>> =
                features.iter().zip(&km.labels).filter(|(_, l)| **l == c).map(|(f, _)| f).collect();
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for i in 0..members.len() {
                for j in i + 1..members.len() {
                    sum += dist(members[i], members[j]);
                    pairs += 1;
                }
            }
            if pairs == 0 {
                0.0
            } else {
                sum / pairs as f64
            }
        })
        .collect();
    Ok(LinkingResult { labels: km.labels, silhouette, intra_cluster_distance: intra })
}

/// Pearson correlation between secret Hamming distances and residual
/// Euclidean distances over all pairs of `k` random secrets embedded in `x`.
pub fn leakage_correlation<O: EncoderOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &O,
    x: &Image,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    if k < 3 {
        return Err(invalid("leakage correlation needs at least 3 secrets"));
    }
    let n = oracle.message_len();
    let secrets: Vec<BitMessage> = (0..k).map(|_| BitMessage::random(n, rng)).collect::<Result<_>>()?;
    let residuals: Vec<ResidualImage> =
        secrets.iter().map(|t| residual(&oracle.embed(x, t)?, x)).collect::<Result<_>>()?;
    let mut hamming = Vec::new();
    let mut distance = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            hamming.push(secrets[i].hamming(&secrets[j])? as f64);
            distance.push(residuals[i].distance(&residuals[j])?);
        }
    }
    pearson_r(&hamming, &distance)
}

/// Random subset of `count` distinct indices below `len`, in ascending order.
pub fn choose_indices<R: Rng + ?Sized>(len: usize, count: usize, rng: &mut R) -> Result<Vec<usize>> {
    if count > len {
        return Err(invalid(format!("cannot choose {count} of {len}")));
    }
    let mut v = sample(rng, len, count).into_vec();
    v.sort_unstable();
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::linear::linear_decode;
    use crate::rng::stream;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    fn linear(n: usize, a: f64) -> (LinearCodec, Image) {
        let s = Shape::square(16, 1).unwrap();
        let lc = LinearCodec::new(s, n, a, 21).unwrap();
        let x = Image::from_fn(s, |x, y, _| 0.4 + 0.2 * (((x + 2 * y) % 5) as f64 / 5.0)).unwrap();
        (lc, x)
    }

    #[test]
    fn lowpass_residual_of_smooth_image_is_small() {
        let s = Shape::square(16, 1).unwrap();
        let smooth = Image::from_fn(s, |x, y, _| 0.5 + 0.1 * ((x as f64 * 0.2).sin() + (y as f64 * 0.15).cos())).unwrap();
        let z = estimate_residual(&smooth, ResidualSource::Lowpass).unwrap();
        let sup = z.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Frozen value for this fixture; a watermark at amplitude 0.05 would dominate it.
        assert!(sup < 0.02, "{sup}");
        let flat = Image::constant(s, 0.3).unwrap();
        let zf = estimate_residual(&flat, ResidualSource::Lowpass).unwrap();
        assert!(zf.values().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn exact_residual_and_forgery_on_linear_codec() {
        let (lc, x) = linear(8, 0.02);
        let t = BitMessage::parse("10110010").unwrap();
        let w = linear_encode(&lc, &x, &t).unwrap();
        let z = estimate_residual(&w, ResidualSource::Exact(&x)).unwrap();
        let signal = lc.watermark_signal(&t).unwrap();
        assert!(z.values().iter().zip(&signal).all(|(a, b)| (a - b).abs() < 1e-15));

        let x_new = Image::from_fn(x.shape(), |x, y, _| 0.45 + 0.1 * (((3 * x + y) % 4) as f64 / 4.0)).unwrap();
        let forged = forge(&[z.clone()], &x_new, 1.0).unwrap();
        let zf = residual(&forged, &x_new).unwrap();
        assert_eq!(linear_decode(&lc, &zf).unwrap(), t);
        for (f, (a, b)) in forged.pixels().iter().zip(x_new.pixels().iter().zip(z.values())) {
            assert!((f - (a + b)).abs() < 1e-15);
        }

        let neg = ResidualImage::new(z.shape(), z.values().iter().map(|v| -v).collect()).unwrap();
        assert_eq!(forge(&[z, neg], &x_new, 1.0).unwrap(), x_new);
        assert!(forge(&[], &x_new, 1.0).is_err());
    }

    #[test]
    fn extraction_on_linear_codec() {
        let (lc, x) = linear(10, 0.02);
        let mut r = stream(8, 0, 0);
        for _ in 0..5 {
            let t = BitMessage::random(10, &mut r).unwrap();
            let z = residual(&linear_encode(&lc, &x, &t).unwrap(), &x).unwrap();
            let out = extract_secret(&lc, &z, &x, 10).unwrap();
            assert_eq!(out.secret, t);
            assert_eq!(out.queries, 11);
        }
        let zeros = BitMessage::zeros(10).unwrap();
        let z0 = residual(&linear_encode(&lc, &x, &zeros).unwrap(), &x).unwrap();
        assert_eq!(extract_secret(&lc, &z0, &x, 10).unwrap().secret, zeros);
        assert!(extract_secret(&lc, &z0, &x, 9).is_err());
    }

    #[test]
    fn kmeans_cases() {
        let pts: Vec<Vec<f64>> = [0.0, 0.2, 0.1, 9.0, 9.3, 9.1].iter().map(|v| vec![*v]).collect();
        let km = kmeans(&pts, 2, 1, 100).unwrap();
        assert_eq!(km.labels[0], km.labels[1]);
        assert_eq!(km.labels[0], km.labels[2]);
        assert_eq!(km.labels[3], km.labels[4]);
        assert_ne!(km.labels[0], km.labels[3]);
        assert!(km.inertia.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        // Brute force over all 2-partitions confirms the optimum.
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << 6) - 1 {
            let mut cost = 0.0;
            for side in [0u32, 1] {
                let g: Vec<f64> = (0..6).filter(|i| (mask >> i & 1) == side).map(|i| pts[i][0]).collect();
                let m = g.iter().sum::<f64>() / g.len() as f64;
                cost += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
            }
            best = best.min(cost);
        }
        assert!((km.inertia.last().unwrap() - best).abs() < 1e-12);

        let own = kmeans(&pts, 6, 3, 100).unwrap();
        assert_eq!(*own.inertia.last().unwrap(), 0.0);
        let mut sorted = own.labels.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4, 5]);

        assert!(kmeans(&pts, 7, 0, 10).is_err());
        assert!(kmeans(&[], 1, 0, 10).is_err());

        let doubled: Vec<Vec<f64>> = pts.iter().chain(&pts).cloned().collect();
        let kd = kmeans(&doubled, 2, 1, 100).unwrap();
        let same = (0..6).all(|i| (kd.labels[i] == kd.labels[0]) == (km.labels[i] == km.labels[0]));
        assert!(same);
    }

    #[test]
    fn silhouette_fixtures() {
        let pts: Vec<Vec<f64>> = [0.0, 0.1, 10.0, 10.1].iter().map(|v| vec![*v]).collect();
        let s = silhouette_score(&pts, &[0, 0, 1, 1]).unwrap();
        assert!((s - 0.990_000).abs() < 1e-6, "{s}");
        assert!((silhouette_score(&pts, &[1, 1, 0, 0]).unwrap() - s).abs() < 1e-15);
        let same = vec![vec![1.0, 2.0]; 4];
        assert_eq!(silhouette_score(&same, &[0, 1, 0, 1]).unwrap(), 0.0);
        assert!(silhouette_score(&pts, &[0, 0, 0, 0]).is_err());
        // Singletons contribute 0; the pair scores against its nearest singleton.
        let want = (9.8 / 9.9 + 9.9 / 10.0) / 4.0;
        assert!((silhouette_score(&pts, &[0, 1, 2, 2]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn linking_linear_users() {
        let (lc, x) = linear(8, 0.02);
        let mut r = stream(12, 0, 0);
        let users: Vec<BitMessage> = (0..4).map(|_| BitMessage::random(8, &mut r).unwrap()).collect();
        let mut residuals = Vec::new();
        let mut truth = Vec::new();
        for (u, t) in users.iter().enumerate() {
            for _ in 0..25 {
                residuals.push(residual(&linear_encode(&lc, &x, t).unwrap(), &x).unwrap());
                truth.push(u);
            }
        }
        let res = link_identities(&residuals, 4, 8, 5).unwrap();
        for i in 0..residuals.len() {
            for j in 0..residuals.len() {
                assert_eq!(truth[i] == truth[j], res.labels[i] == res.labels[j]);
            }
        }
        assert!(res.silhouette >= 0.9);
        assert!(res.intra_cluster_distance.iter().all(|d| d.abs() < 1e-9));

        let same: Vec<ResidualImage> = residuals[..10].to_vec();
        assert_eq!(link_identities(&same, 2, 8, 5).unwrap().silhouette, 0.0);
    }

    #[test]
    fn leakage_on_linear_codec() {
        let (lc, x) = linear(16, 0.01);
        let mut r = stream(13, 0, 0);
        let rho = leakage_correlation(&lc, &x, 20, &mut r).unwrap();
        assert!(rho >= 0.9, "{rho}");
        assert!(leakage_correlation(&lc, &x, 2, &mut r).is_err());
    }

    proptest! {
        #[test]
        fn silhouette_is_isometry_invariant(
            seed in any::<u64>(),
            angle in 0.0f64..std::f64::consts::TAU,
            shift in (-5.0f64..5.0, -5.0f64..5.0),
        ) {
            let mut r = stream(seed, 0, 0);
            let pts: Vec<Vec<f64>> = (0..12)
                .map(|i| vec![r.random::<f64>() + (i % 3) as f64 * 3.0, r.random::<f64>()])
                .collect();
            let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
            let (c, s) = (angle.cos(), angle.sin());
            let moved: Vec<Vec<f64>> = pts
                .iter()
                .map(|p| vec![c * p[0] - s * p[1] + shift.0, s * p[0] + c * p[1] + shift.1])
                .collect();
            let a = silhouette_score(&pts, &labels).unwrap();
            let b = silhouette_score(&moved, &labels).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn extraction_is_exact_for_every_seed(seed in any::<u64>()) {
            let (lc, x) = linear(6, 0.02);
            let mut r = stream(seed, 0, 0);
            let t = BitMessage::random(6, &mut r).unwrap();
            let z = residual(&linear_encode(&lc, &x, &t).unwrap(), &x).unwrap();
            let out = extract_secret(&lc, &z, &x, 6).unwrap();
            prop_assert_eq!(out.secret, t);
            prop_assert!(out.queries <= 7);
        }
    }
}
