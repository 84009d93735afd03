//! Experiment orchestration: regimes x {without, with} RIL, then quality,
//! certification and attack scorecards, written as CSV files plus a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;
use wirlab::attacks::{estimate_residual, extract_secret, forge, link_identities, ResidualSource};
use wirlab::certify::{certified_accuracy_curve, certify_seeded, CertOutcome, Decision, SmoothingConfig, WatermarkAuthenticator};
use wirlab::codec::{decode_bits, decode_probs, encode, init_codec, CodecParams};
use wirlab::metrics::{bit_accuracy, compute_threshold, psnr, residual, ssim, verify};
use wirlab::rng::{derive_seed, stage_id, stream};
use wirlab::training::{train_from, EpochRecord, Regime, TrainConfig, TrainReport};
use wirlab::{BitMessage, Image, ResidualImage};

use crate::config::{AttackSettings, ExperimentConfig, ResidualMode};
use crate::dataset::{load_dataset, Splits};
use crate::error::{io_err, HarnessError, Result};
use crate::model_file::{load_model, save_model};

/// One trained model: a regime with or without phase-2 training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub regime: Regime,
    pub ril: bool,
}

impl Variant {
    pub fn tag(&self) -> String {
        format!("{}{}", self.regime.tag(), if self.ril { "+ril" } else { "" })
    }

    /// File-name friendly tag, e.g. `w-cr-gaussian-0.25-ril`.
    pub fn slug(&self) -> String {
        self.tag().replace('(', "-").replace(')', "").replace('+', "-")
    }
}

pub fn regime_sigma(r: &Regime) -> f64 {
    match *r {
        Regime::CertifiedGaussian(s) | Regime::CertifiedAffine(s) => s,
        Regime::Clean | Regime::Empirical => 0.0,
    }
}

/// Training config for a regime with the experiment's hyperparameters.
pub fn train_config(cfg: &ExperimentConfig, regime: Regime) -> TrainConfig {
    TrainConfig {
        regime,
        perturbation: regime.perturbation(),
        seed: derive_seed(cfg.seed, stage_id("train"), 0),
        ril: false,
        ..cfg.train.clone()
    }
}

/// Phase 1 for `regime` from the seeded initialization.
pub fn train_phase1(cfg: &ExperimentConfig, regime: Regime, splits: &Splits) -> Result<(CodecParams, TrainReport)> {
    let init = init_codec(&cfg.codec_config(), cfg.codec_config().seed)?;
    Ok(train_from(init, &train_config(cfg, regime), &splits.train, &splits.val)?)
}

/// Phase 2 on top of a phase-1 codec; the decoder stays fixed.
pub fn train_phase2(
    cfg: &ExperimentConfig,
    regime: Regime,
    base: &CodecParams,
    splits: &Splits,
) -> Result<(CodecParams, TrainReport)> {
    let tc = TrainConfig { phase1_epochs: 0, ril: true, ..train_config(cfg, regime) };
    Ok(train_from(base.clone(), &tc, &splits.train, &splits.val)?)
}

/// The verification threshold of the experiment.
pub fn threshold(cfg: &ExperimentConfig) -> Result<f64> {
    Ok(compute_threshold(cfg.message_len, cfg.verify_fpr)?)
}

fn eval_secret(seed: u64, n: usize, i: usize) -> Result<BitMessage> {
    Ok(BitMessage::random(n, &mut stream(seed, stage_id("eval.secret"), i as u64))?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quality {
    pub clean_bit_accuracy: f64,
    /// Fraction of watermarked images that pass verification.
    pub clean_accuracy: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Embeds a seeded secret in every image and decodes it back unperturbed.
pub fn evaluate_quality(params: &CodecParams, images: &[Image], tau: f64, seed: u64) -> Result<Quality> {
    if images.is_empty() {
        return Err(HarnessError::InvalidConfig("no images to evaluate".into()));
    }
    let n = params.config().message_len;
    let rows = images
        .par_iter()
        .enumerate()
        .map(|(i, x)| -> Result<[f64; 4]> {
            let t = eval_secret(seed, n, i)?;
            let w = encode(params, x, &t)?;
            let v = verify(&decode_bits(&decode_probs(params, &w)?), &t, tau)?;
            Ok([v.bit_accuracy, f64::from(u8::from(v.pass)), psnr(&w, x)?, ssim(&w, x)?])
        })
        .collect::<Result<Vec<_>>>()?;
    let k = 1.0 / rows.len() as f64;
    let mean = |j: usize| rows.iter().map(|r| r[j]).sum::<f64>() * k;
    Ok(Quality { clean_bit_accuracy: mean(0), clean_accuracy: mean(1), psnr: mean(2), ssim: mean(3) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertRow {
    pub sample: usize,
    pub outcome: CertOutcome,
    pub seconds: f64,
}

/// Certifies the smoothed authenticator on the first `count` images, each
/// watermarked with its evaluation secret. The true class is 1 (authentic).
pub fn certify_images(
    params: &CodecParams,
    images: &[Image],
    count: usize,
    tau: f64,
    smoothing: &SmoothingConfig,
    seed: u64,
) -> Result<Vec<CertRow>> {
    let n = params.config().message_len;
    images
        .iter()
        .take(count)
        .enumerate()
        .map(|(i, x)| {
            let start = Instant::now();
            let t = eval_secret(seed, n, i)?;
            let w = encode(params, x, &t)?;
            let clf = WatermarkAuthenticator::new(params, &t, tau)?;
            let outcome = certify_seeded(&clf, w.pixels(), smoothing, derive_seed(seed, stage_id("certify"), i as u64))?;
            Ok(CertRow { sample: i, outcome, seconds: start.elapsed().as_secs_f64() })
        })
        .collect()
}

pub fn curve(rows: &[CertRow], radii: &[f64]) -> Result<Vec<f64>> {
    let outcomes: Vec<(CertOutcome, u8)> = rows.iter().map(|r| (r.outcome, 1)).collect();
    Ok(certified_accuracy_curve(&outcomes, radii)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForgeryScore {
    pub m: usize,
    pub bit_accuracy: f64,
    pub pass_rate: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackScores {
    pub forgery: Vec<ForgeryScore>,
    /// Mean bit accuracy of extracted secrets.
    pub attack_bit_accuracy: f64,
    pub silhouette: f64,
}

fn user_secret(seed: u64, n: usize, u: usize) -> Result<BitMessage> {
    Ok(BitMessage::random(n, &mut stream(seed, stage_id("attack.user"), u as u64))?)
}

/// Forgery, extraction and linking against `params`.
///
/// User `u` watermarks `images_per_user` images drawn cyclically from `pool`.
/// Forgery targets and extraction probes come from `fresh`, disjoint from the
/// users' originals.
pub fn attack_scorecard(
    params: &CodecParams,
    pool: &[Image],
    fresh: &[Image],
    settings: &AttackSettings,
    tau: f64,
    seed: u64,
) -> Result<AttackScores> {
    if pool.is_empty() || fresh.is_empty() {
        return Err(HarnessError::InvalidConfig("attacks need nonempty image pools".into()));
    }
    let n = params.config().message_len;
    let (users, per) = (settings.users, settings.images_per_user);
    let secrets: Vec<BitMessage> = (0..users).map(|u| user_secret(seed, n, u)).collect::<Result<_>>()?;
    let residuals: Vec<Vec<ResidualImage>> = (0..users)
        .into_par_iter()
        .map(|u| {
            (0..per)
                .map(|j| {
                    let x = &pool[(u * per + j) % pool.len()];
                    let w = encode(params, x, &secrets[u])?;
                    let source = match settings.residual {
                        ResidualMode::Exact => ResidualSource::Exact(x),
                        ResidualMode::Lowpass => ResidualSource::Lowpass,
                    };
                    Ok(estimate_residual(&w, source)?)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut forgery = Vec::new();
    for &m in &settings.forge_m {
        let per_user = (0..users)
            .into_par_iter()
            .map(|u| -> Result<[f64; 4]> {
                let x_new = &fresh[u % fresh.len()];
                let forged = forge(&residuals[u][..m], x_new, settings.zeta)?;
                let v = verify(&decode_bits(&decode_probs(params, &forged)?), &secrets[u], tau)?;
                Ok([v.bit_accuracy, f64::from(u8::from(v.pass)), psnr(&forged, x_new)?, ssim(&forged, x_new)?])
            })
            .collect::<Result<Vec<_>>>()?;
        let mean = |j: usize| per_user.iter().map(|r| r[j]).sum::<f64>() / users as f64;
        forgery.push(ForgeryScore { m, bit_accuracy: mean(0), pass_rate: mean(1), psnr: mean(2), ssim: mean(3) });
    }

    let targets = settings.extract_targets;
    let attack_bit_accuracy = if targets == 0 {
        f64::NAN
    } else {
        let accs = (0..targets)
            .into_par_iter()
            .map(|u| {
                let probe = &fresh[(users + u) % fresh.len()];
                let found = extract_secret(params, &residuals[u][0], probe, n)?;
                Ok(bit_accuracy(&found.secret, &secrets[u])?)
            })
            .collect::<Result<Vec<f64>>>()?;
        accs.iter().sum::<f64>() / targets as f64
    };

    let flat: Vec<ResidualImage> = residuals.into_iter().flatten().collect();
    let link = link_identities(&flat, users, settings.pca_dims, derive_seed(seed, stage_id("attack.link"), 0))?;
    Ok(AttackScores { forgery, attack_bit_accuracy, silhouette: link.silhouette })
}

/// Files written and stage outcomes of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out: PathBuf,
    pub files: Vec<PathBuf>,
}

struct Writer {
    out: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush().map_err(io_err(&path))?;
        self.files.push(PathBuf::from(name));
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        std::fs::write(&path, body).map_err(io_err(&path))?;
        self.files.push(PathBuf::from(name));
        Ok(())
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub const TRAIN_COLUMNS: [&str; 7] =
    ["epoch", "phase", "loss_message", "loss_residual", "loss_ril", "train_bit_accuracy", "val_bit_accuracy"];

/// Writes the per-epoch training log as CSV.
pub fn write_train_log(report: &TrainReport, path: &Path) -> Result<()> {
    let mut w = Writer { out: path.parent().map(Path::to_path_buf).unwrap_or_default(), files: Vec::new() };
    let name = path.file_name().and_then(|n| n.to_str()).ok_or_else(|| HarnessError::InvalidConfig("bad log path".into()))?;
    w.csv(name, &TRAIN_COLUMNS, epoch_rows(report))
}

fn epoch_rows(report: &TrainReport) -> Vec<Vec<String>> {
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    report
        .epochs
        .iter()
        .map(|e: &EpochRecord| {
            vec![
                e.epoch.to_string(),
                e.phase.to_string(),
                num(e.loss_message),
                num(e.loss_residual),
                opt(e.loss_ril),
                num(e.train_bit_accuracy),
                opt(e.val_bit_accuracy),
            ]
        })
        .collect()
}

fn variants(cfg: &ExperimentConfig) -> Vec<Variant> {
    cfg.regimes
        .iter()
        .flat_map(|&regime| cfg.ril_variants.iter().map(move |&ril| Variant { regime, ril }))
        .collect()
}

/// Runs every stage, writing reports under `cfg.out`.
///
/// CSV reports and models depend only on the config (the output directory
/// aside) and its seed. Wall-clock times appear in the manifest's stage list
/// and in `timings.json`, together with per-sample certification times.
pub fn run_experiment(cfg: &ExperimentConfig, dry_run: bool) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let mut w = Writer { out: cfg.out.clone(), files: Vec::new() };
    let mut stages: Vec<serde_json::Value> = Vec::new();
    let mut timings: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    w.text("config.txt", &cfg.to_text())?;

    let result = if dry_run { Ok(()) } else { run_stages(cfg, &mut w, &mut stages, &mut timings) };
    let failed = result.as_ref().err().map(|e| e.to_string());

    if !dry_run {
        let body = serde_json::to_string_pretty(&timings).expect("json");
        w.text("timings.json", &body)?;
    }
    let mut files: Vec<String> = w.files.iter().map(|p| p.display().to_string()).collect();
    files.push("manifest.json".into());
    let manifest = json!({
        "tool": "wirlab",
        "versions": { "wirlab-core": wirlab::VERSION, "wirlab-harness": env!("CARGO_PKG_VERSION") },
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "config": cfg.entries().into_iter().filter(|(k, _)| *k != "out").collect::<BTreeMap<_, _>>(),
        "dry_run": dry_run,
        "status": if failed.is_some() { "failed" } else { "ok" },
        "error": failed,
        "stages": stages,
        "files": files,
        "seed_derivation": "stage seed = splitmix64 finalizer over (global seed, label hash, index); see wirlab::rng",
    });
    w.text("manifest.json", &(serde_json::to_string_pretty(&manifest).expect("json") + "\n"))?;
    result?;
    Ok(RunSummary { out: cfg.out.clone(), files: w.files })
}

fn run_stages(
    cfg: &ExperimentConfig,
    w: &mut Writer,
    stages: &mut Vec<serde_json::Value>,
    timings: &mut BTreeMap<String, serde_json::Value>,
) -> Result<()> {
    let mut stage = |name: String, stages: &mut Vec<serde_json::Value>, f: &mut dyn FnMut() -> Result<()>| {
        let start = Instant::now();
        let r = f();
        let secs = start.elapsed().as_secs_f64();
        timings.insert(name.clone(), json!(secs));
        match &r {
            Ok(()) => stages.push(json!({ "name": name, "status": "ok", "seconds": secs })),
            Err(e) => stages.push(json!({ "name": name, "status": "failed", "seconds": secs, "error": e.to_string() })),
        }
        r.map_err(|e| HarnessError::Stage { stage: name, msg: e.to_string() })
    };

    let mut splits = Splits::default();
    stage("dataset".into(), stages, &mut || {
        splits = load_dataset(&cfg.dataset_spec())?;
        Ok(())
    })?;
    let tau = threshold(cfg)?;
    let eval_seed = derive_seed(cfg.seed, stage_id("evaluate"), 0);
    let models_dir = cfg.out.join("models");
    std::fs::create_dir_all(&models_dir).map_err(io_err(&models_dir))?;

    let mut quality_rows = Vec::new();
    let mut attack_rows = Vec::new();
    let mut cert_times: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut bases: BTreeMap<String, CodecParams> = BTreeMap::new();
    for v in variants(cfg) {
        let slug = v.slug();
        let model_name = format!("models/{slug}.wirm");
        let model_path = cfg.out.join(&model_name);
        let mut params: Option<CodecParams> = None;
        stage(format!("train:{}", v.tag()), stages, &mut || {
            if cfg.reuse_models && model_path.exists() {
                params = Some(load_model(&model_path)?);
                return Ok(());
            }
            let base_key = v.regime.tag();
            let (p, report) = if v.ril {
                let base = match bases.get(&base_key) {
                    Some(b) => b.clone(),
                    None => train_phase1(cfg, v.regime, &splits)?.0,
                };
                train_phase2(cfg, v.regime, &base, &splits)?
            } else {
                let r = train_phase1(cfg, v.regime, &splits)?;
                bases.insert(base_key, r.0.clone());
                r
            };
            w.csv(&format!("train_{slug}.csv"), &TRAIN_COLUMNS, epoch_rows(&report))?;
            save_model(&p, &model_path)?;
            w.files.push(PathBuf::from(&model_name));
            params = Some(p);
            Ok(())
        })?;
        let params = params.expect("set by the train stage");
        let pool = &splits.test;
        let fresh = if splits.val.is_empty() { &splits.train } else { &splits.val };

        stage(format!("evaluate:{}", v.tag()), stages, &mut || {
            let q = evaluate_quality(&params, pool, tau, eval_seed)?;
            quality_rows.push(vec![
                v.tag(),
                v.regime.tag(),
                num(regime_sigma(&v.regime)),
                v.ril.to_string(),
                num(q.clean_bit_accuracy),
                num(q.clean_accuracy),
                num(q.psnr),
                num(q.ssim),
            ]);
            Ok(())
        })?;

        if cfg.certify_samples > 0 {
            stage(format!("certify:{}", v.tag()), stages, &mut || {
                let rows = certify_images(&params, pool, cfg.certify_samples, tau, &cfg.smoothing, eval_seed)?;
                cert_times.insert(slug.clone(), rows.iter().map(|r| r.seconds).collect());
                let per_sample = rows
                    .iter()
                    .map(|r| {
                        let decision = match r.outcome.decision {
                            Decision::Class(c) => c.to_string(),
                            Decision::Abstain => "abstain".into(),
                        };
                        vec![r.sample.to_string(), "1".into(), decision, num(r.outcome.p_lower), num(r.outcome.radius)]
                    })
                    .collect();
                w.csv(&format!("certify_{slug}.csv"), &["sample", "truth", "decision", "p_lower", "radius"], per_sample)?;
                let acc = curve(&rows, &cfg.radii)?;
                let points: Vec<Vec<String>> = cfg.radii.iter().zip(&acc).map(|(r, a)| vec![num(*r), num(*a)]).collect();
                if cfg.plots {
                    let body: String = points.iter().map(|p| format!("{} {}\n", p[0], p[1])).collect();
                    w.text(&format!("plots/curve_{slug}.dat"), &body)?;
                }
                w.csv(&format!("curve_{slug}.csv"), &["radius", "certified_accuracy"], points)?;
                Ok(())
            })?;
        }

        if cfg.attack.users > 0 {
            stage(format!("attacks:{}", v.tag()), stages, &mut || {
                let s = attack_scorecard(&params, pool, fresh, &cfg.attack, tau, eval_seed)?;
                for f in &s.forgery {
                    attack_rows.push(vec![
                        v.tag(),
                        v.regime.tag(),
                        num(regime_sigma(&v.regime)),
                        v.ril.to_string(),
                        f.m.to_string(),
                        num(cfg.attack.zeta),
                        num(f.bit_accuracy),
                        num(f.pass_rate),
                        num(s.attack_bit_accuracy),
                        num(s.silhouette),
                        num(f.psnr),
                        num(f.ssim),
                    ]);
                }
                Ok(())
            })?;
        }
    }

    stage("report".into(), stages, &mut || {
        w.csv(
            "quality.csv",
            &["model", "regime", "sigma", "ril", "clean_bit_accuracy", "clean_accuracy", "psnr", "ssim"],
            quality_rows.clone(),
        )?;
        if cfg.attack.users > 0 {
            w.csv(
                "attacks.csv",
                &[
                    "model",
                    "regime",
                    "sigma",
                    "ril",
                    "m",
                    "zeta",
                    "forged_bit_accuracy",
                    "forged_pass_rate",
                    "attack_bit_accuracy",
                    "silhouette",
                    "forged_psnr",
                    "forged_ssim",
                ],
                attack_rows.clone(),
            )?;
        }
        Ok(())
    })?;
    timings.insert("certify_samples".into(), json!(cert_times));
    Ok(())
}

/// Reads a report CSV into its header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.map(|r| r.iter().map(String::from).collect())).collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

/// Residual of `w` against `x` or its low-pass estimate, for CLI use.
pub fn residual_of(w: &Image, x: Option<&Image>) -> Result<ResidualImage> {
    Ok(match x {
        Some(x) => residual(w, x)?,
        None => estimate_residual(w, ResidualSource::Lowpass)?,
    })
}
