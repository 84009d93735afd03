//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --release -p wirlab-harness --test acceptance [-- --only 1,4,10]`
//!
//! Criteria 5 to 7 train networks and take several minutes on one core.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use wirlab::attacks::{extract_secret, forge, silhouette_score, CountingOracle, EncoderOracle};
use wirlab::certify::{
    certify_seeded, lower_conf_bound, outcome_from_counts, sample_under_noise_seeded, smoothed_predict,
    std_normal_cdf, std_normal_inv_cdf, Decision, LinearAuthenticator, LinearScoreClassifier, SmoothingConfig,
    SmoothingSpace,
};
use wirlab::codec::{init_codec, linear_decode, linear_encode, BitProbabilities, CodecConfig, CodecParams, LinearCodec};
use wirlab::metrics::{compute_threshold, psnr, residual, ssim};
use wirlab::rng::stream;
use wirlab::training::gradcheck::GradCheckOptions;
use wirlab::training::{
    evaluate_bit_accuracy, grad_check, kl_bernoulli, mutual_information_discrete, quantized_residual_information, train,
    train_from, LossWeights, Regime, TrainConfig,
};
use wirlab::transforms::add_gaussian_noise;
use wirlab::{BitMessage, Image, Shape};
use wirlab_harness::experiment::{self, read_csv};
use wirlab_harness::model_file::{model_from_bytes, model_to_bytes};
use wirlab_harness::{load_dataset, run_experiment, ExperimentConfig, HarnessError};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn uniform_image(shape: Shape, lo: f64, hi: f64, seed: u64) -> Image {
    let mut r = stream(seed, 0xacce, 0);
    Image::new(shape, (0..shape.len()).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

fn random_secret(n: usize, seed: u64) -> BitMessage {
    BitMessage::random(n, &mut stream(seed, 0x5ec, 0)).unwrap()
}

fn certification_math() -> Outcome {
    let start = Instant::now();
    let lcb = lower_conf_bound(100, 100, 0.001)?;
    let closed = 0.001f64.powf(1.0 / 100.0);
    let z = std_normal_inv_cdf(0.99)?;
    let n = 100_000u64;
    let o = outcome_from_counts(1, n, n, 0.001, 0.25)?;
    let expect = 0.25 * std_normal_inv_cdf(0.001f64.powf(1.0 / n as f64))?;
    let math_secs = start.elapsed().as_secs_f64();

    // The same numbers through the sampling path, with a classifier that always says 1.
    let shape = Shape::square(8, 1)?;
    let always = LinearScoreClassifier { shape, weights: vec![0.0; shape.len()], offset: 1.0 };
    let cfg = SmoothingConfig { n: n as usize, batch_size: 10_000, ..SmoothingConfig::new(0.25, SmoothingSpace::PixelGaussian) };
    let sampled = certify_seeded(&always, &vec![0.5; shape.len()], &cfg, 1)?;

    let pass = close(lcb, 0.933254, 1e-6)
        && close(lcb, closed, 1e-9)
        && close(z, 2.326348, 1e-6)
        && o.decision == Decision::Class(1)
        && close(o.radius, expect, 1e-4)
        && sampled == o
        && math_secs < 1.0;
    Ok((
        pass,
        format!(
            "lcb(100,100)={lcb:.7} (closed form {closed:.7}), inv_cdf(0.99)={z:.7}, R={:.6} (expected {expect:.6}), sampled R={:.6}, {math_secs:.2e}s",
            o.radius, sampled.radius
        ),
    ))
}

fn smoothed_vote_closed_form() -> Outcome {
    let shape = Shape::square(32, 1)?;
    let lc = LinearCodec::new(shape, 1, 1.0, 11)?;
    let x = vec![0.5; shape.len()];
    let n = 10_000;
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for (k, &(m, sigma, norm)) in [(0.05, 0.25, 1.0), (0.2, 0.25, 2.0), (0.3, 0.5, 1.5)].iter().enumerate() {
        let weights: Vec<f64> = lc.patterns()[0].iter().map(|p| norm * p).collect();
        let at_x: f64 = weights.iter().zip(&x).map(|(a, b)| a * b).sum();
        let clf = LinearScoreClassifier { shape, weights, offset: m - at_x };
        let cfg = SmoothingConfig { n, n0: n, clamp: false, ..SmoothingConfig::new(sigma, SmoothingSpace::PixelGaussian) };
        let votes = sample_under_noise_seeded(&clf, &x, &cfg, n, 100 + k as u64)?;
        let frac = votes.class1 as f64 / n as f64;
        let p = std_normal_cdf(m / (sigma * norm));
        let se = (p * (1.0 - p) / n as f64).sqrt();
        worst = worst.max((frac - p).abs() / se);
        details.push(format!("m={m} sigma={sigma} |a|={norm}: {frac:.4} vs {p:.4}"));
    }
    Ok((worst <= 3.0, format!("{}; worst deviation {worst:.2} standard errors", details.join(", "))))
}

fn robustness_spot_check() -> Outcome {
    let shape = Shape::square(32, 1)?;
    let n = 8;
    let lc = LinearCodec::new(shape, n, 1.0, 21)?;
    let cert_cfg = SmoothingConfig { clamp: false, batch_size: 10_000, ..SmoothingConfig::new(0.25, SmoothingSpace::PixelGaussian) };
    let draws = 10_000;
    let (mut certified, mut checked, mut changed, mut adversarial_changed) = (0, 0, 0, 0);
    let mut radii = Vec::new();
    let mut seed = 0u64;
    while certified < 20 {
        seed += 1;
        let x = uniform_image(shape, 0.3, 0.7, seed);
        let t = random_secret(n, seed);
        let Ok(w) = linear_encode(&lc, &x, &t) else { continue };
        let clf = LinearAuthenticator { codec: &lc, reference: &x, secret: &t, threshold: 1.0 };
        let o = certify_seeded(&clf, w.pixels(), &cert_cfg, seed)?;
        let Decision::Class(c) = o.decision else {
            return Ok((false, format!("sample {seed} abstained (p_lower {:.4})", o.p_lower)));
        };
        certified += 1;
        radii.push(o.radius);
        let mut r = stream(seed, 0xde17a, 0);
        let mut deltas: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                let mut d = vec![0.0; shape.len()];
                add_gaussian_noise(&mut d, 1.0, &mut r);
                let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                d.into_iter().map(|v| v * 0.9 * o.radius / norm).collect()
            })
            .collect();
        // Worst direction for a linear decoder: straight against one carrier.
        let s = if t.bits()[0] == 1 { -1.0 } else { 1.0 };
        deltas.push(lc.patterns()[0].iter().map(|p| s * 0.9 * o.radius * p).collect());
        for (j, d) in deltas.iter().enumerate() {
            let moved: Vec<f64> = w.pixels().iter().zip(d).map(|(a, b)| a + b).collect();
            let pred = smoothed_predict(&clf, &moved, &cert_cfg, draws, seed * 1000 + j as u64)?;
            if j < 20 {
                checked += 1;
                changed += usize::from(pred != Some(c));
            } else {
                adversarial_changed += usize::from(pred != Some(c));
            }
        }
    }
    let mean_r = radii.iter().sum::<f64>() / radii.len() as f64;
    Ok((
        changed == 0 && adversarial_changed == 0,
        format!(
            "{certified} samples, mean R {mean_r:.4}; {changed}/{checked} random and {adversarial_changed}/20 worst-direction perturbations changed the smoothed prediction"
        ),
    ))
}

fn attack_oracles() -> Outcome {
    let start = Instant::now();
    let shape = Shape::square(32, 1)?;
    let n = 16;
    let lc = LinearCodec::new(shape, n, 0.5, 31)?;
    let (mut extract_ok, mut max_queries, mut forge_ok) = (0, 0, 0);
    let trials = 10;
    for k in 0..trials {
        let x = uniform_image(shape, 0.3, 0.7, 40 + k);
        let probe = uniform_image(shape, 0.3, 0.7, 80 + k);
        let t = random_secret(n, k);
        let z = residual(&linear_encode(&lc, &x, &t)?, &x)?;
        let counter = CountingOracle::new(&lc);
        let found = extract_secret(&counter, &z, &probe, counter.message_len())?;
        max_queries = max_queries.max(counter.calls());
        extract_ok += usize::from(found.secret == t && found.queries <= n + 1);

        let forged = forge(std::slice::from_ref(&z), &probe, 1.0)?;
        forge_ok += usize::from(linear_decode(&lc, &residual(&forged, &probe)?)? == t);
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        extract_ok == trials as usize && forge_ok == trials as usize && secs < 1.0,
        format!(
            "extraction exact {extract_ok}/{trials} (max {max_queries} queries, n+1 = {}), forgery exact {forge_ok}/{trials}, {secs:.3}s",
            n + 1
        ),
    ))
}

fn training_viability() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 1;
    cfg.dataset.side = 32;
    cfg.dataset.count = 2000;
    cfg.dataset.fractions = [0.8, 0.1, 0.1];
    cfg.message_len = 16;
    cfg.train.phase1_epochs = 75;
    cfg.train.weights.residual = 0.01;
    cfg.validate()?;
    let splits = load_dataset(&cfg.dataset_spec())?;
    let start = Instant::now();
    let (params, report) = experiment::train_phase1(&cfg, Regime::Clean, &splits)?;
    let tau = compute_threshold(16, 0.01)?;
    let q = experiment::evaluate_quality(&params, &splits.val, tau, 7)?;
    let last = report.last().expect("epochs ran");
    Ok((
        q.clean_bit_accuracy >= 0.95 && q.clean_accuracy >= 0.99,
        format!(
            "{} epochs in {:.0}s: validation bit accuracy {:.4} (need 0.95), clean accuracy {:.4} at tau {tau} (need 0.99), train bit accuracy {:.4}, PSNR {:.1} dB",
            report.epochs.len(),
            start.elapsed().as_secs_f64(),
            q.clean_bit_accuracy,
            q.clean_accuracy,
            last.train_bit_accuracy,
            q.psnr
        ),
    ))
}

/// Per-model means over seeds of the desk experiment.
#[derive(Default, Clone, Copy)]
struct Trend {
    forged: f64,
    attack: f64,
    silhouette: f64,
    clean_bits: f64,
    cert_mean: f64,
}

const TREND_SEEDS: u64 = 5;
const TREND_MODELS: [(&str, &str); 6] = [
    ("clean", "clean"),
    ("clean+ril", "clean-ril"),
    ("w-er", "w-er"),
    ("w-er+ril", "w-er-ril"),
    ("w-cr-gaussian(0.25)", "w-cr-gaussian-0.25"),
    ("w-cr-gaussian(0.25)+ril", "w-cr-gaussian-0.25-ril"),
];

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"))
}

fn desk_trends(root: &Path) -> Result<Vec<Trend>, Box<dyn std::error::Error>> {
    let mut sums = vec![Trend::default(); TREND_MODELS.len()];
    for seed in 0..TREND_SEEDS {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = seed;
        cfg.out = root.join(format!("seed{seed}"));
        let start = Instant::now();
        run_experiment(&cfg, false)?;
        eprintln!("  desk seed {seed}: {:.0}s", start.elapsed().as_secs_f64());
        let m_max = *cfg.attack.forge_m.iter().max().expect("nonempty");

        let (qh, qrows) = read_csv(&cfg.out.join("quality.csv"))?;
        let (ah, arows) = read_csv(&cfg.out.join("attacks.csv"))?;
        for (k, (tag, slug)) in TREND_MODELS.iter().enumerate() {
            let q = qrows.iter().find(|r| r[column(&qh, "model")] == *tag).ok_or("model missing from quality.csv")?;
            let a = arows
                .iter()
                .find(|r| r[column(&ah, "model")] == *tag && r[column(&ah, "m")] == m_max.to_string())
                .ok_or("model missing from attacks.csv")?;
            let (_, curve) = read_csv(&cfg.out.join(format!("curve_{slug}.csv")))?;
            let cert: Vec<f64> = curve.iter().map(|r| r[1].parse()).collect::<Result<_, _>>()?;
            let s = &mut sums[k];
            s.clean_bits += q[column(&qh, "clean_bit_accuracy")].parse::<f64>()?;
            s.forged += a[column(&ah, "forged_bit_accuracy")].parse::<f64>()?;
            s.attack += a[column(&ah, "attack_bit_accuracy")].parse::<f64>()?;
            s.silhouette += a[column(&ah, "silhouette")].parse::<f64>()?;
            s.cert_mean += cert.iter().sum::<f64>() / cert.len() as f64;
        }
    }
    let k = TREND_SEEDS as f64;
    Ok(sums
        .into_iter()
        .map(|s| Trend {
            forged: s.forged / k,
            attack: s.attack / k,
            silhouette: s.silhouette / k,
            clean_bits: s.clean_bits / k,
            cert_mean: s.cert_mean / k,
        })
        .collect())
}

fn exacerbation(t: &[Trend]) -> Outcome {
    let (clean, wcr) = (t[0], t[4]);
    let gap = wcr.forged - clean.forged;
    Ok((
        gap >= 0.05 && wcr.silhouette >= clean.silhouette,
        format!(
            "forged bit accuracy clean {:.4}, W-CR {:.4} (gap {:+.4}, need +0.05); silhouette clean {:.4}, W-CR {:.4}",
            clean.forged, wcr.forged, gap, clean.silhouette, wcr.silhouette
        ),
    ))
}

fn mitigation(t: &[Trend]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, base, ril) in [("W-ER", 2, 3), ("W-CR", 4, 5)] {
        let (b, r) = (t[base], t[ril]);
        let ok = r.forged < b.forged
            && r.attack < b.attack
            && b.clean_bits - r.clean_bits <= 0.03
            && (r.cert_mean - b.cert_mean).abs() <= 0.02;
        pass &= ok;
        parts.push(format!(
            "{name}: forged {:.4}->{:.4}, attack {:.4}->{:.4}, clean bits {:.4}->{:.4}, certified {:.4}->{:.4}",
            b.forged, r.forged, b.attack, r.attack, b.clean_bits, r.clean_bits, b.cert_mean, r.cert_mean
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn gradient_correctness() -> Outcome {
    let shape = Shape::square(12, 1)?;
    let batch: Vec<Image> = (0..2)
        .map(|k| {
            Image::from_fn(shape, |x, y, _| 0.5 + 0.25 * ((x as f64 * 0.7 + k as f64).sin() * (y as f64 * 0.45).cos()))
        })
        .collect::<Result<_, _>>()?;
    let cfg = CodecConfig { side: 12, filters: 16, message_len: 5, strength: 0.3, ..CodecConfig::default() };
    let fresh = init_codec(&cfg, 9)?;
    // Stronger embedding and a sharper dense layer make the residual information gradient measurable.
    let mut t = fresh.tensors().to_vec();
    t[wirlab::codec::DEC_WD].iter_mut().for_each(|w| *w *= 8.0);
    t[wirlab::codec::ENC_W3].iter_mut().for_each(|w| *w *= 4.0);
    let sharp = CodecParams::from_tensors(cfg, t)?;
    let opts = GradCheckOptions::default();
    let a = grad_check(&fresh, &batch, &opts)?;
    let b = grad_check(&sharp, &batch, &opts)?;
    let bad = grad_check(&sharp, &batch, &GradCheckOptions { corrupt: true, ..opts })?;
    let total = a.total.max(b.total);
    let ril = b.ril;
    let pass = total < 1e-4 && ril < 1e-4 && b.unresolved == 0 && bad.total > 1e-2 && bad.ril > 1e-2;
    Ok((
        pass,
        format!(
            "loss_total {total:.2e}, loss_ril {ril:.2e} ({} probes, {} on a smaller step); zeroed gradient gives {:.2e} / {:.2e}",
            a.checked + b.checked,
            a.kinked + b.kinked,
            bad.total,
            bad.ril
        ),
    ))
}

fn joint_kl(p: &[f64], q: &[f64]) -> f64 {
    (0..1usize << p.len())
        .map(|o| {
            let (mut pp, mut qq) = (1.0, 1.0);
            for i in 0..p.len() {
                let bit = o >> i & 1 == 1;
                pp *= if bit { p[i] } else { 1.0 - p[i] };
                qq *= if bit { q[i] } else { 1.0 - q[i] };
            }
            pp * (pp / qq).ln()
        })
        .sum()
}

fn synthetic_waves(side: usize, count: usize, seed: u64) -> Vec<Image> {
    let s = Shape::square(side, 1).unwrap();
    let mut r = stream(seed, 7, 0);
    (0..count)
        .map(|_| {
            let waves: Vec<[f64; 3]> =
                (0..3).map(|_| [r.random_range(0.1..0.6), r.random_range(0.1..0.6), r.random::<f64>() * 6.3]).collect();
            Image::from_fn(s, |x, y, _| 0.5 + waves.iter().map(|w| 0.12 * (w[0] * x as f64 + w[1] * y as f64 + w[2]).sin()).sum::<f64>())
                .unwrap()
        })
        .collect()
}

fn information_oracles() -> Outcome {
    let mut r = stream(3, 0, 0);
    let mut worst = 0.0f64;
    for n in 1..=3 {
        for _ in 0..200 {
            let p: Vec<f64> = (0..n).map(|_| r.random_range(0.01..0.99)).collect();
            let q: Vec<f64> = (0..n).map(|_| r.random_range(0.01..0.99)).collect();
            let got = kl_bernoulli(&BitProbabilities::new(p.clone())?, &BitProbabilities::new(q.clone())?)?;
            worst = worst.max((got - joint_kl(&p, &q)).abs());
        }
    }
    let independent = mutual_information_discrete(&[vec![0.25, 0.25], vec![0.25, 0.25]])?;
    let identity = mutual_information_discrete(&[vec![0.5, 0.0], vec![0.0, 0.5]])?;

    let codec = CodecConfig { side: 8, filters: 8, message_len: 2, strength: 0.2, seed: 3, ..CodecConfig::default() };
    let train_set = synthetic_waves(8, 256, 10);
    let probe = synthetic_waves(8, 256, 12);
    let p1 = TrainConfig {
        learning_rate: 3e-3,
        batch_size: 16,
        phase1_epochs: 20,
        weights: LossWeights { residual: 1.0, ..LossWeights::default() },
        seed: 5,
        ..TrainConfig::default()
    };
    let (base, _) = train(&p1, &codec, &train_set, &[])?;
    let p2 = TrainConfig { phase1_epochs: 0, phase2_epochs: 10, ril: true, learning_rate: 1e-3, ..p1 };
    let (ril, _) = train_from(base.clone(), &p2, &train_set, &[])?;
    let before = quantized_residual_information(&base, &probe, (3, 3))?;
    let after = quantized_residual_information(&ril, &probe, (3, 3))?;
    let (acc_before, acc_after) = (evaluate_bit_accuracy(&base, &probe, 1)?, evaluate_bit_accuracy(&ril, &probe, 1)?);

    let pass = worst < 1e-10 && independent.abs() < 1e-12 && close(identity, std::f64::consts::LN_2, 1e-12) && after < before;
    Ok((
        pass,
        format!(
            "max |KL - joint KL| {worst:.1e}; MI independent {independent:.1e}, identity {identity:.12}; quantized I(z;t) {before:.4} -> {after:.4} nats (bit accuracy {acc_before:.3} -> {acc_after:.3})"
        ),
    ))
}

fn metric_fixtures() -> Outcome {
    let shape = Shape::square(16, 1)?;
    let a = Image::from_fn(shape, |x, y, _| 0.2 + 0.02 * ((x * 7 + y * 3) % 20) as f64)?;
    let b = Image::new(shape, a.pixels().iter().map(|v| v + 0.1).collect())?;
    let p = psnr(&a, &b)?;
    let s = ssim(&a, &a)?;
    let points: Vec<Vec<f64>> = [0.0, 0.1, 10.0, 10.1].iter().map(|&v| vec![v]).collect();
    let sil = silhouette_score(&points, &[0, 0, 1, 1])?;
    let tau = compute_threshold(16, 0.01)?;
    Ok((
        close(p, 20.0, 1e-9) && s == 1.0 && close(sil, 0.99, 1e-6) && tau == 14.0 / 16.0,
        format!("PSNR {p:.12} dB, ssim(a,a) {s}, silhouette {sil:.7}, tau(16, 0.01) {tau}"),
    ))
}

fn determinism(root: &Path) -> Outcome {
    let text = "seed = 9\ndataset.side = 12\ndataset.count = 40\ncodec.filters = 4\ntrain.phase1_epochs = 2\n\
                train.phase2_epochs = 1\ntrain.batch_size = 8\ncertify.n0 = 10\ncertify.n = 200\ncertify.batch = 50\n\
                certify.samples = 3\nattack.users = 2\nattack.images_per_user = 3\nattack.forge_m = 1,3\n\
                attack.extract_targets = 2\nattack.pca_dims = 2\nregimes = clean,w-cr-gaussian(0.25)\n";
    let mut summaries = Vec::new();
    for name in ["a", "b"] {
        let mut cfg = ExperimentConfig::parse_str(text)?;
        cfg.out = root.join(name);
        summaries.push((cfg.out.clone(), run_experiment(&cfg, false)?));
    }
    let (a, sa) = &summaries[0];
    let (b, sb) = &summaries[1];
    let mut compared = 0;
    let mut differing = Vec::new();
    for f in &sa.files {
        let name = f.to_string_lossy();
        if name == "config.txt" || name == "timings.json" || name == "manifest.json" {
            continue;
        }
        compared += 1;
        if std::fs::read(a.join(f))? != std::fs::read(b.join(f))? {
            differing.push(name.into_owned());
        }
    }

    let params = wirlab_harness::load_model(&a.join("models/clean.wirm"))?;
    let bytes = model_to_bytes(&params)?;
    let back = model_from_bytes(&bytes)?;
    let bitwise = params.tensors().iter().flatten().zip(back.tensors().iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits())
        && params.config() == back.config();
    let mut rejected = 0;
    for i in 0..bytes.len() {
        let mut bad = bytes.clone();
        bad[i] ^= 0x01;
        rejected += usize::from(model_from_bytes(&bad).is_err());
    }
    let mut body = bytes.clone();
    body[40] ^= 0x80;
    let crc = matches!(model_from_bytes(&body), Err(HarnessError::CorruptModel(m)) if m.contains("CRC"));

    Ok((
        differing.is_empty() && sa.files == sb.files && bitwise && rejected == bytes.len() && crc,
        format!(
            "{compared} report files compared, {} differ{}; model round trip bitwise: {bitwise}; {rejected}/{} single-bit corruptions rejected, body flip reported as CRC: {crc}",
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(" ({})", differing.join(", ")) },
            bytes.len()
        ),
    ))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let only: Option<Vec<usize>> = args
        .iter()
        .position(|a| a == "--only")
        .and_then(|i| args.get(i + 1))
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let wanted = |k: usize| only.as_ref().is_none_or(|o| o.contains(&k));
    let scratch = tempfile::tempdir().expect("temp dir");

    let mut trends: Option<Result<Vec<Trend>, String>> = None;
    let mut trend = |root: &Path| -> Result<Vec<Trend>, String> {
        trends.get_or_insert_with(|| desk_trends(root).map_err(|e| e.to_string())).clone()
    };

    let names = [
        "certification math",
        "smoothed-vote closed form",
        "certified-robustness spot check",
        "attack oracles",
        "training viability",
        "exacerbation trend",
        "mitigation trend",
        "gradient correctness",
        "KL/MI oracles",
        "metric fixtures",
        "determinism and persistence",
    ];
    let mut failed = 0;
    for (i, name) in names.iter().enumerate() {
        let k = i + 1;
        if !wanted(k) {
            continue;
        }
        let start = Instant::now();
        let result = match k {
            1 => certification_math(),
            2 => smoothed_vote_closed_form(),
            3 => robustness_spot_check(),
            4 => attack_oracles(),
            5 => training_viability(),
            6 => trend(&scratch.path().join("desk")).map_err(Into::into).and_then(|t| exacerbation(&t)),
            7 => trend(&scratch.path().join("desk")).map_err(Into::into).and_then(|t| mitigation(&t)),
            8 => gradient_correctness(),
            9 => information_oracles(),
            10 => metric_fixtures(),
            _ => determinism(&scratch.path().join("determinism")),
        };
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!("{} {k:>2} {name}: {detail} [{secs:.1}s]", if pass { "PASS" } else { "FAIL" });
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
