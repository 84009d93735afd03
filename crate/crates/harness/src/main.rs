use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wirlab::attacks::{extract_secret, forge, link_identities};
use wirlab::certify::{certify_seeded, Decision, WatermarkAuthenticator};
use wirlab::codec::{decode_bits, decode_probs, encode, CodecParams};
use wirlab::metrics::verify;
use wirlab::rng::{derive_seed, stage_id};
use wirlab::training::Regime;
use wirlab::BitMessage;
use wirlab_harness::experiment::{self, residual_of, Variant};
use wirlab_harness::imageio::{read_native, write_image};
use wirlab_harness::{load_dataset, load_model, run_experiment, save_model, ExperimentConfig, HarnessError, Result};

#[derive(Parser)]
#[command(name = "wirlab", version, about = "Watermark identity-leakage laboratory")]
struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Validate the config (and write the manifest for `run`) without doing work.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one regime and save the model under <out>/models.
    Train {
        #[arg(long, default_value = "clean")]
        regime: String,
        /// Follow phase 1 with residual-information training.
        #[arg(long)]
        ril: bool,
    },
    /// Embed a secret into an image; writes an 8-bit PNG (lossy rounding).
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        secret: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print decoded bits and per-bit probabilities.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Check an image against a secret at the verification threshold.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        secret: String,
        /// Bit-accuracy threshold; default from `verify.fpr`.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Certify the smoothed authenticator on one image (smoothing from the config).
    Certify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        secret: String,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Overlay the mean residual of watermarked images onto a new image.
    AttackForge {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        watermarked: Vec<PathBuf>,
        /// Matching originals; without them residuals are low-pass estimates.
        #[arg(long, num_args = 1..)]
        originals: Vec<PathBuf>,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        zeta: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Recover the secret behind one watermarked image with encoder queries.
    AttackExtract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        watermarked: PathBuf,
        #[arg(long)]
        original: Option<PathBuf>,
        /// Image the attacker embeds candidate secrets into.
        #[arg(long)]
        probe: PathBuf,
    },
    /// Cluster residuals of watermarked images into k identities.
    AttackLink {
        #[arg(long, num_args = 1.., required = true)]
        watermarked: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        originals: Vec<PathBuf>,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        pca_dims: usize,
    },
    /// Print the quality and attack tables of a finished run.
    Report,
    /// Full experiment: every regime, certification and attacks.
    Run,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_secret(s: &str) -> Result<BitMessage> {
    Ok(BitMessage::parse(s)?)
}

fn bits(t: &BitMessage) -> String {
    t.bits().iter().map(|b| b.to_string()).collect()
}

fn tau_for(params: &CodecParams, cfg: &ExperimentConfig, tau: Option<f64>) -> Result<f64> {
    match tau {
        Some(t) => Ok(t),
        None => Ok(wirlab::metrics::compute_threshold(params.config().message_len, cfg.verify_fpr)?),
    }
}

fn read_for(params: &CodecParams, path: &Path) -> Result<wirlab::Image> {
    let img = read_native(path, params.config().channels)?;
    params.shape().ensure_same(&img.shape())?;
    Ok(img)
}

fn read_all(paths: &[PathBuf], channels: usize) -> Result<Vec<wirlab::Image>> {
    paths.iter().map(|p| read_native(p, channels)).collect()
}

fn residuals(watermarked: &[wirlab::Image], originals: &[wirlab::Image]) -> Result<Vec<wirlab::ResidualImage>> {
    if !originals.is_empty() && originals.len() != watermarked.len() {
        return Err(HarnessError::InvalidConfig("--originals must match --watermarked one to one".into()));
    }
    watermarked.iter().enumerate().map(|(i, w)| residual_of(w, originals.get(i))).collect()
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    if cli.dry_run && !matches!(cli.command, Command::Run) {
        println!("config ok (hash {})", cfg.hash());
        return Ok(());
    }
    match &cli.command {
        Command::Run => {
            let summary = run_experiment(&cfg, cli.dry_run)?;
            println!("wrote {} files to {}", summary.files.len(), summary.out.display());
        }
        Command::Train { regime, ril } => {
            let regime: Regime = regime.parse()?;
            let splits = load_dataset(&cfg.dataset_spec())?;
            let (base, report) = experiment::train_phase1(&cfg, regime, &splits)?;
            let (params, report) =
                if *ril { experiment::train_phase2(&cfg, regime, &base, &splits)? } else { (base, report) };
            let variant = Variant { regime, ril: *ril };
            let dir = cfg.out.join("models");
            std::fs::create_dir_all(&dir).map_err(|source| HarnessError::Io { path: dir.clone(), source })?;
            let path = dir.join(format!("{}.wirm", variant.slug()));
            save_model(&params, &path)?;
            experiment::write_train_log(&report, &cfg.out.join(format!("train_{}.csv", variant.slug())))?;
            if let Some(last) = report.epochs.last() {
                println!(
                    "epoch {} phase {}: loss_message {:.4}, train bit accuracy {:.4}, val bit accuracy {}",
                    last.epoch,
                    last.phase,
                    last.loss_message,
                    last.train_bit_accuracy,
                    last.val_bit_accuracy.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
                );
            }
            println!("saved {}", path.display());
        }
        Command::Embed { model, input, secret, output } => {
            let params = load_model(model)?;
            let w = encode(&params, &read_for(&params, input)?, &parse_secret(secret)?)?;
            write_image(&w, output)?;
            println!("wrote {}", output.display());
        }
        Command::Decode { model, input } => {
            let params = load_model(model)?;
            let probs = decode_probs(&params, &read_for(&params, input)?)?;
            println!("bits  {}", bits(&decode_bits(&probs)));
            let p: Vec<String> = probs.values().iter().map(|v| format!("{v:.4}")).collect();
            println!("probs {}", p.join(" "));
        }
        Command::Verify { model, input, secret, tau } => {
            let params = load_model(model)?;
            let tau = tau_for(&params, &cfg, *tau)?;
            let decoded = decode_bits(&decode_probs(&params, &read_for(&params, input)?)?);
            let v = verify(&decoded, &parse_secret(secret)?, tau)?;
            println!("{} (bit accuracy {:.4}, threshold {:.4})", if v.pass { "PASS" } else { "FAIL" }, v.bit_accuracy, tau);
        }
        Command::Certify { model, input, secret, tau } => {
            let params = load_model(model)?;
            let tau = tau_for(&params, &cfg, *tau)?;
            let t = parse_secret(secret)?;
            let w = read_for(&params, input)?;
            let clf = WatermarkAuthenticator::new(&params, &t, tau)?;
            let o = certify_seeded(&clf, w.pixels(), &cfg.smoothing, derive_seed(cfg.seed, stage_id("cli.certify"), 0))?;
            match o.decision {
                Decision::Class(c) => println!("class {c}, radius {:.6}, p_lower {:.6}", o.radius, o.p_lower),
                Decision::Abstain => println!("abstain (p_lower {:.6})", o.p_lower),
            }
        }
        Command::AttackForge { model, watermarked, originals, target, zeta, output } => {
            let params = load_model(model)?;
            let c = params.config().channels;
            let z = residuals(&read_all(watermarked, c)?, &read_all(originals, c)?)?;
            let forged = forge(&z, &read_for(&params, target)?, *zeta)?;
            write_image(&forged, output)?;
            println!("forged bits {}", bits(&decode_bits(&decode_probs(&params, &forged)?)));
            println!("wrote {}", output.display());
        }
        Command::AttackExtract { model, watermarked, original, probe } => {
            let params = load_model(model)?;
            let w = read_for(&params, watermarked)?;
            let x = original.as_ref().map(|p| read_for(&params, p)).transpose()?;
            let z = residual_of(&w, x.as_ref())?;
            let found = extract_secret(&params, &z, &read_for(&params, probe)?, params.config().message_len)?;
            println!("extracted {} with {} encoder queries", bits(&found.secret), found.queries);
        }
        Command::AttackLink { watermarked, originals, k, pca_dims } => {
            let c = cfg.dataset.channels;
            let z = residuals(&read_all(watermarked, c)?, &read_all(originals, c)?)?;
            let link = link_identities(&z, *k, *pca_dims, derive_seed(cfg.seed, stage_id("cli.link"), 0))?;
            for (p, l) in watermarked.iter().zip(&link.labels) {
                println!("{l}\t{}", p.display());
            }
            println!("silhouette {:.6}", link.silhouette);
        }
        Command::Report => {
            for name in ["quality.csv", "attacks.csv"] {
                let path = cfg.out.join(name);
                if !path.exists() {
                    continue;
                }
                let (header, rows) = experiment::read_csv(&path)?;
                println!("# {name}");
                println!("{}", header.join("\t"));
                for r in rows {
                    let cells: Vec<String> = r
                        .iter()
                        .map(|c| match (c.parse::<i64>(), c.parse::<f64>()) {
                            (Err(_), Ok(v)) => format!("{v:.4}"),
                            _ => c.clone(),
                        })
                        .collect();
                    println!("{}", cells.join("\t"));
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot configure {k} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
