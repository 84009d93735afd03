//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key below is
//! optional; unknown keys are an error. Lists are comma separated.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `seed` | 0 | global seed; every stage derives its own |
//! | `out` | `wirlab-out` | output directory |
//! | `dataset.source` | `synthetic` | `synthetic` or `directory` |
//! | `dataset.dir` | | image directory when `dataset.source = directory` |
//! | `dataset.side` | 16 | image side after resizing |
//! | `dataset.channels` | 1 | 1 (luma) or 3 |
//! | `dataset.count` | 600 | images used |
//! | `dataset.train`, `dataset.val`, `dataset.test` | 0.6, 0.2, 0.2 | split fractions |
//! | `codec.message_len` | 8 | bits per message |
//! | `codec.filters` | 16 | convolution width |
//! | `codec.strength` | 0.5 | residual amplitude bound, rounded to f32 |
//! | `train.learning_rate` | 0.003 | |
//! | `train.batch_size` | 16 | |
//! | `train.phase1_epochs` | 80 | |
//! | `train.phase2_epochs` | 2 | residual-information epochs (RIL variants only) |
//! | `train.eta_m`, `train.eta_r` | 1, 0.1 | message and residual loss weights |
//! | `train.lambda_ril` | 1 | phase-2 loss scale |
//! | `train.ril_schedule` | `sequential` | `sequential` or `interleaved` |
//! | `train.reuse_models` | false | load `models/<tag>.wirm` when present instead of training |
//! | `regimes` | `clean,w-er,w-cr-gaussian(0.25)` | regimes to train |
//! | `ril` | `both` | `without`, `with` or `both` |
//! | `verify.fpr` | 0.01 | false-positive budget for the verification threshold |
//! | `certify.space` | `gaussian` | `gaussian` or `affine` |
//! | `certify.sigma` | 0.25 | smoothing scale |
//! | `certify.n0`, `certify.n` | 100, 2000 | guess and estimate draws |
//! | `certify.alpha` | 0.001 | |
//! | `certify.batch` | 500 | draws per sampling chunk |
//! | `certify.clamp` | true | clamp noisy copies to `[0,1]` |
//! | `certify.samples` | 20 | test images certified per model |
//! | `certify.radii` | `0,0.1,...,1.0` | radius grid of the curve |
//! | `attack.users` | 4 | simulated users |
//! | `attack.images_per_user` | 30 | watermarked images per user |
//! | `attack.forge_m` | `1,30` | residuals averaged per forgery |
//! | `attack.zeta` | 1 | overlay multiplier |
//! | `attack.extract_targets` | 4 | users attacked by extraction |
//! | `attack.pca_dims` | 8 | linking feature dimension |
//! | `attack.residual` | `exact` | `exact` or `lowpass` residual estimates |
//! | `report.plots` | false | also write one plot file per curve |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use wirlab::certify::{SmoothingConfig, SmoothingSpace};
use wirlab::codec::CodecConfig;
use wirlab::training::{LossWeights, Regime, RilSchedule, TrainConfig};

use crate::dataset::{DataSource, DatasetSpec};
use crate::error::{io_err, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualMode {
    Exact,
    Lowpass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSettings {
    pub users: usize,
    pub images_per_user: usize,
    pub forge_m: Vec<usize>,
    pub zeta: f64,
    pub extract_targets: usize,
    pub pca_dims: usize,
    pub residual: ResidualMode,
}

impl Default for AttackSettings {
    fn default() -> Self {
        AttackSettings {
            users: 4,
            images_per_user: 30,
            forge_m: vec![1, 30],
            zeta: 1.0,
            extract_targets: 4,
            pca_dims: 8,
            residual: ResidualMode::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: DatasetSpec,
    pub message_len: usize,
    pub filters: usize,
    pub strength: f64,
    pub train: TrainConfig,
    pub reuse_models: bool,
    pub regimes: Vec<Regime>,
    /// RIL variants to train per regime, `false` first.
    pub ril_variants: Vec<bool>,
    pub verify_fpr: f64,
    pub smoothing: SmoothingConfig,
    pub certify_samples: usize,
    pub radii: Vec<f64>,
    pub attack: AttackSettings,
    pub plots: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig {
            learning_rate: 3e-3,
            batch_size: 16,
            phase1_epochs: 80,
            phase2_epochs: 2,
            weights: LossWeights { residual: 0.1, ..LossWeights::default() },
            ..TrainConfig::default()
        };
        ExperimentConfig {
            seed: 0,
            out: PathBuf::from("wirlab-out"),
            dataset: DatasetSpec::default(),
            message_len: 8,
            filters: 16,
            strength: 0.5f32 as f64,
            train,
            reuse_models: false,
            regimes: vec![Regime::Clean, Regime::Empirical, Regime::CertifiedGaussian(0.25)],
            ril_variants: vec![false, true],
            verify_fpr: 0.01,
            smoothing: SmoothingConfig { n: 2000, batch_size: 500, ..SmoothingConfig::new(0.25, SmoothingSpace::PixelGaussian) },
            certify_samples: 20,
            radii: (0..=10).map(|i| i as f64 / 10.0).collect(),
            attack: AttackSettings::default(),
            plots: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("{key}: cannot parse {v:?}"))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let v = v.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "dataset.source" => {
                self.dataset.source = match v {
                    "synthetic" => DataSource::Synthetic,
                    "directory" => match &self.dataset.source {
                        DataSource::Directory(d) => DataSource::Directory(d.clone()),
                        DataSource::Synthetic => DataSource::Directory(PathBuf::new()),
                    },
                    _ => return Err(format!("dataset.source must be synthetic or directory, got {v:?}")),
                }
            }
            "dataset.dir" => self.dataset.source = DataSource::Directory(PathBuf::from(v)),
            "dataset.side" => self.dataset.side = parse(key, v)?,
            "dataset.channels" => self.dataset.channels = parse(key, v)?,
            "dataset.count" => self.dataset.count = parse(key, v)?,
            "dataset.train" => self.dataset.fractions[0] = parse(key, v)?,
            "dataset.val" => self.dataset.fractions[1] = parse(key, v)?,
            "dataset.test" => self.dataset.fractions[2] = parse(key, v)?,
            "codec.message_len" => self.message_len = parse(key, v)?,
            "codec.filters" => self.filters = parse(key, v)?,
            "codec.strength" => self.strength = f64::from(parse::<f32>(key, v)?),
            "train.learning_rate" => self.train.learning_rate = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.phase1_epochs" => self.train.phase1_epochs = parse(key, v)?,
            "train.phase2_epochs" => self.train.phase2_epochs = parse(key, v)?,
            "train.eta_m" => self.train.weights.message = parse(key, v)?,
            "train.eta_r" => self.train.weights.residual = parse(key, v)?,
            "train.lambda_ril" => self.train.weights.ril = parse(key, v)?,
            "train.ril_schedule" => {
                self.train.ril_schedule = match v {
                    "sequential" => RilSchedule::Sequential,
                    "interleaved" => RilSchedule::Interleaved,
                    _ => return Err(format!("train.ril_schedule must be sequential or interleaved, got {v:?}")),
                }
            }
            "train.reuse_models" => self.reuse_models = parse(key, v)?,
            "regimes" => self.regimes = parse_list::<Regime>(key, v)?,
            "ril" => {
                self.ril_variants = match v {
                    "without" => vec![false],
                    "with" => vec![true],
                    "both" => vec![false, true],
                    _ => return Err(format!("ril must be without, with or both, got {v:?}")),
                }
            }
            "verify.fpr" => self.verify_fpr = parse(key, v)?,
            "certify.space" => {
                self.smoothing.space = match v {
                    "gaussian" => SmoothingSpace::PixelGaussian,
                    "affine" => SmoothingSpace::Affine,
                    _ => return Err(format!("certify.space must be gaussian or affine, got {v:?}")),
                }
            }
            "certify.sigma" => self.smoothing.sigma = parse(key, v)?,
            "certify.n0" => self.smoothing.n0 = parse(key, v)?,
            "certify.n" => self.smoothing.n = parse(key, v)?,
            "certify.alpha" => self.smoothing.alpha = parse(key, v)?,
            "certify.batch" => self.smoothing.batch_size = parse(key, v)?,
            "certify.clamp" => self.smoothing.clamp = parse(key, v)?,
            "certify.samples" => self.certify_samples = parse(key, v)?,
            "certify.radii" => self.radii = parse_list(key, v)?,
            "attack.users" => self.attack.users = parse(key, v)?,
            "attack.images_per_user" => self.attack.images_per_user = parse(key, v)?,
            "attack.forge_m" => self.attack.forge_m = parse_list(key, v)?,
            "attack.zeta" => self.attack.zeta = parse(key, v)?,
            "attack.extract_targets" => self.attack.extract_targets = parse(key, v)?,
            "attack.pca_dims" => self.attack.pca_dims = parse(key, v)?,
            "attack.residual" => {
                self.attack.residual = match v {
                    "exact" => ResidualMode::Exact,
                    "lowpass" => ResidualMode::Lowpass,
                    _ => return Err(format!("attack.residual must be exact or lowpass, got {v:?}")),
                }
            }
            "report.plots" => self.plots = parse(key, v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults, then validates.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config { line: i + 1, msg: format!("expected key = value, got {line:?}") })?;
            cfg.set(k.trim(), v).map_err(|msg| HarnessError::Config { line: i + 1, msg })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn codec_config(&self) -> CodecConfig {
        CodecConfig {
            message_len: self.message_len,
            channels: self.dataset.channels,
            side: self.dataset.side,
            filters: self.filters,
            strength: self.strength,
            seed: wirlab::rng::derive_seed(self.seed, wirlab::rng::stage_id("codec.init"), 0),
        }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec { seed: wirlab::rng::derive_seed(self.seed, wirlab::rng::stage_id("dataset"), 0), ..self.dataset.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        self.dataset.validate()?;
        if let DataSource::Directory(d) = &self.dataset.source {
            if d.as_os_str().is_empty() {
                return bad("dataset.source = directory needs dataset.dir".into());
            }
        }
        if self.dataset.side < wirlab::metrics::SSIM_WINDOW {
            return bad(format!("dataset.side must be at least {} for image quality metrics", wirlab::metrics::SSIM_WINDOW));
        }
        self.codec_config().validate()?;
        self.train.validate()?;
        if self.train.phase1_epochs == 0 && !self.reuse_models {
            return bad("train.phase1_epochs must be positive".into());
        }
        if self.regimes.is_empty() {
            return bad("regimes must not be empty".into());
        }
        wirlab::metrics::compute_threshold(self.message_len, self.verify_fpr)?;
        self.smoothing.validate()?;
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r >= 0.0)) {
            return bad("certify.radii must be a nonempty list of non-negative radii".into());
        }
        let sizes = self.dataset.split_sizes();
        if sizes[0] == 0 {
            return bad("training split is empty".into());
        }
        if sizes[2] == 0 && (self.certify_samples > 0 || self.attack.users > 0) {
            return bad("test split is empty".into());
        }
        let a = &self.attack;
        if a.users > 0 {
            if a.users < 2 {
                return bad("attack.users must be 0 or at least 2".into());
            }
            if a.forge_m.iter().any(|&m| m == 0 || m > a.images_per_user) {
                return bad("attack.forge_m entries must lie in 1..=attack.images_per_user".into());
            }
            if !(a.zeta > 0.0) {
                return bad("attack.zeta must be positive".into());
            }
            if a.extract_targets > a.users {
                return bad("attack.extract_targets exceeds attack.users".into());
            }
            if a.pca_dims == 0 {
                return bad("attack.pca_dims must be positive".into());
            }
        }
        Ok(())
    }

    /// Every key with its effective value, sorted by key.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let space = match self.smoothing.space {
            SmoothingSpace::PixelGaussian => "gaussian",
            SmoothingSpace::Affine => "affine",
        };
        let (source, dir) = match &self.dataset.source {
            DataSource::Synthetic => ("synthetic", String::new()),
            DataSource::Directory(d) => ("directory", d.display().to_string()),
        };
        let ril = match self.ril_variants.as_slice() {
            [false] => "without",
            [true] => "with",
            _ => "both",
        };
        let t = &self.train;
        let a = &self.attack;
        let s = &self.smoothing;
        BTreeMap::from([
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
            ("dataset.source", source.to_string()),
            ("dataset.dir", dir),
            ("dataset.side", self.dataset.side.to_string()),
            ("dataset.channels", self.dataset.channels.to_string()),
            ("dataset.count", self.dataset.count.to_string()),
            ("dataset.train", self.dataset.fractions[0].to_string()),
            ("dataset.val", self.dataset.fractions[1].to_string()),
            ("dataset.test", self.dataset.fractions[2].to_string()),
            ("codec.message_len", self.message_len.to_string()),
            ("codec.filters", self.filters.to_string()),
            ("codec.strength", (self.strength as f32).to_string()),
            ("train.learning_rate", t.learning_rate.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.phase1_epochs", t.phase1_epochs.to_string()),
            ("train.phase2_epochs", t.phase2_epochs.to_string()),
            ("train.eta_m", t.weights.message.to_string()),
            ("train.eta_r", t.weights.residual.to_string()),
            ("train.lambda_ril", t.weights.ril.to_string()),
            (
                "train.ril_schedule",
                match t.ril_schedule {
                    RilSchedule::Sequential => "sequential",
                    RilSchedule::Interleaved => "interleaved",
                }
                .to_string(),
            ),
            ("train.reuse_models", self.reuse_models.to_string()),
            ("regimes", self.regimes.iter().map(Regime::tag).collect::<Vec<_>>().join(",")),
            ("ril", ril.to_string()),
            ("verify.fpr", self.verify_fpr.to_string()),
            ("certify.space", space.to_string()),
            ("certify.sigma", s.sigma.to_string()),
            ("certify.n0", s.n0.to_string()),
            ("certify.n", s.n.to_string()),
            ("certify.alpha", s.alpha.to_string()),
            ("certify.batch", s.batch_size.to_string()),
            ("certify.clamp", s.clamp.to_string()),
            ("certify.samples", self.certify_samples.to_string()),
            ("certify.radii", join(&self.radii)),
            ("attack.users", a.users.to_string()),
            ("attack.images_per_user", a.images_per_user.to_string()),
            ("attack.forge_m", join(&a.forge_m)),
            ("attack.zeta", a.zeta.to_string()),
            ("attack.extract_targets", a.extract_targets.to_string()),
            ("attack.pca_dims", a.pca_dims.to_string()),
            (
                "attack.residual",
                match a.residual {
                    ResidualMode::Exact => "exact",
                    ResidualMode::Lowpass => "lowpass",
                }
                .to_string(),
            ),
            ("report.plots", self.plots.to_string()),
        ])
    }

    /// Config text that parses back to this config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            if k == "dataset.dir" && v.is_empty() {
                continue;
            }
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 of [`to_text`](Self::to_text) without the output directory, in hex.
    pub fn hash(&self) -> String {
        let text: String = self.to_text().lines().filter(|l| !l.starts_with("out ")).map(|l| format!("{l}\n")).collect();
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
