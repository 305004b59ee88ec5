//! `rismimo`: train the learned transceiver, sweep bit error rates for the
//! model-based and learned designs, benchmark per-channel runtime, and run
//! the invariant self-test.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

mod bench;
mod config;
mod csvio;
mod selftest;
mod sweep;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{parse_value_list, ExperimentConfig, Method, Normalization};
use ris_mimo::autoencoder::{load_checkpoint, save_checkpoint, train_with};

#[derive(Parser)]
#[command(name = "rismimo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; unset flags fall back to the config
/// file, then to built-in defaults. `RISMIMO_SEED` overrides the default
/// seed when `--seed` is not given.
#[derive(Args, Debug)]
struct CommonArgs {
    /// JSON config file (flat object of experiment fields)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for all random sub-streams
    #[arg(long)]
    seed: Option<u64>,
    /// RIS element count
    #[arg(long)]
    k: Option<usize>,
    /// Modulation order (2, 4, 16, 64)
    #[arg(long)]
    mod_order: Option<usize>,
    /// Output file
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the autoencoder and write a checkpoint plus a loss-trace CSV
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Loss trace CSV path
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        /// CSI error deviation used during training
        #[arg(long)]
        sigma_e: Option<f64>,
        #[arg(long)]
        train_snr: Option<f64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Power normalization flavor: paper (average power P^2) or sqrt (P)
        #[arg(long, value_enum)]
        normalization: Option<Normalization>,
    },
    /// BER versus SNR for one method at a fixed CSI error level
    SweepSnr {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// SNR list: comma values or start:end:step (dB)
        #[arg(long)]
        snr: Option<String>,
        /// CSI error deviation during evaluation
        #[arg(long)]
        sigma_e: Option<f64>,
        /// Bits per point
        #[arg(long)]
        bits: Option<u64>,
        /// Trained model (required for --method autoencoder)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// BER versus CSI error deviation for one method at a fixed SNR
    SweepCsi {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Fixed SNR in dB
        #[arg(long)]
        snr_db: Option<f64>,
        /// CSI error list: comma values or start:end:step
        #[arg(long)]
        sigma_e: Option<String>,
        #[arg(long)]
        bits: Option<u64>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Per-channel latency of the model-based design versus autoencoder inference
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        /// Timed repetitions per side (at least 100)
        #[arg(long, default_value_t = 200)]
        reps: usize,
    },
    /// Run the invariant battery
    Selftest,
}

/// Configuration mistakes exit with 2, runtime failures with 1.
enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    fn report_and_exit(self) -> ! {
        match self {
            CliError::Config(e) => {
                eprintln!("configuration error: {e:#}");
                std::process::exit(2);
            }
            CliError::Runtime(e) => {
                eprintln!("error: {e:#}");
                std::process::exit(1);
            }
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path).map_err(CliError::Config)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    } else if let Ok(env_seed) = std::env::var("RISMIMO_SEED") {
        cfg.seed = env_seed
            .parse()
            .map_err(|e| CliError::Config(anyhow::anyhow!("bad RISMIMO_SEED: {e}")))?;
    }
    if let Some(k) = common.k {
        cfg.n_ris = k;
    }
    if let Some(m) = common.mod_order {
        cfg.mod_order = m;
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn validated(cfg: ExperimentConfig) -> Result<ExperimentConfig, CliError> {
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            common,
            loss_csv,
            epochs,
            batch_size,
            samples,
            sigma_e,
            train_snr,
            learning_rate,
            normalization,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(v) = epochs {
                cfg.epochs = v;
            }
            if let Some(v) = batch_size {
                cfg.batch_size = v;
            }
            if let Some(v) = samples {
                cfg.n_samples = v;
            }
            if let Some(v) = sigma_e {
                cfg.train_sigma_e = v;
            }
            if let Some(v) = train_snr {
                cfg.train_snr_db = v;
            }
            if let Some(v) = learning_rate {
                cfg.learning_rate = v;
            }
            if let Some(v) = normalization {
                cfg.normalization = v;
            }
            let cfg = validated(cfg)?;
            let out = cfg
                .output
                .clone()
                .ok_or_else(|| CliError::Config(anyhow::anyhow!("train needs --out <ckpt>")))?;
            let train_cfg = cfg.train_config();
            let total = train_cfg.iterations();
            eprintln!(
                "training: K={} sigma_e={} snr={} dB, {} iterations",
                cfg.n_ris, cfg.train_sigma_e, cfg.train_snr_db, total
            );
            let (model, trace) = train_with(&train_cfg, |it, rec| {
                if it % 50 == 0 || it + 1 == total {
                    eprintln!("iter {it:5}/{total}: loss {:.4}", rec.total);
                }
            })
            .map_err(|e| CliError::Runtime(e.into()))?;
            save_checkpoint(&model, &out).map_err(|e| CliError::Runtime(e.into()))?;
            eprintln!("checkpoint written to {}", out.display());
            if let Some(path) = loss_csv {
                csvio::write_loss_csv(&trace, &path).map_err(CliError::Runtime)?;
                eprintln!("loss trace written to {}", path.display());
            }
            Ok(())
        }
        Command::SweepSnr { common, method, snr, sigma_e, bits, checkpoint } => {
            let mut cfg = load_config(&common)?;
            if let Some(m) = method {
                cfg.method = m;
            }
            if let Some(text) = snr {
                cfg.snr_db = parse_value_list(&text).map_err(CliError::Config)?;
            }
            if let Some(se) = sigma_e {
                cfg.sigma_e = vec![se];
            }
            if let Some(b) = bits {
                cfg.n_bits = b;
            }
            run_sweep_command(validated(cfg)?, checkpoint)
        }
        Command::SweepCsi { common, method, snr_db, sigma_e, bits, checkpoint } => {
            let mut cfg = load_config(&common)?;
            if let Some(m) = method {
                cfg.method = m;
            }
            if let Some(snr) = snr_db {
                cfg.snr_db = vec![snr];
            } else if cfg.snr_db.len() > 1 {
                cfg.snr_db = vec![cfg.snr_db[0]];
            }
            if let Some(text) = sigma_e {
                cfg.sigma_e = parse_value_list(&text).map_err(CliError::Config)?;
            }
            if let Some(b) = bits {
                cfg.n_bits = b;
            }
            run_sweep_command(validated(cfg)?, checkpoint)
        }
        Command::Bench { common, reps } => {
            let cfg = validated(load_config(&common)?)?;
            let result = bench::run_bench(&cfg, reps);
            println!(
                "K={}: model-based design {:.4} ms/channel, autoencoder inference {:.4} ms/channel, ratio {:.2}x",
                result.n_ris,
                result.modelbased_ms,
                result.autoencoder_ms,
                result.ratio()
            );
            Ok(())
        }
        Command::Selftest => {
            let failures = selftest::run_selftest();
            if failures == 0 {
                println!("all checks passed");
                Ok(())
            } else {
                Err(CliError::Runtime(anyhow::anyhow!("{failures} checks failed")))
            }
        }
    }
}

fn run_sweep_command(cfg: ExperimentConfig, checkpoint: Option<PathBuf>) -> Result<(), CliError> {
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| CliError::Config(anyhow::anyhow!("sweep needs --out <csv>")))?;
    let model = match cfg.method {
        Method::Autoencoder => {
            let path = checkpoint.ok_or_else(|| {
                CliError::Config(anyhow::anyhow!("--method autoencoder needs --checkpoint"))
            })?;
            Some(
                load_checkpoint(&path, &cfg.dims())
                    .map_err(|e| CliError::Runtime(e.into()))?,
            )
        }
        _ => None,
    };
    let points = sweep::run_sweep(&cfg, model.as_ref()).map_err(CliError::Runtime)?;
    csvio::write_ber_csv(&points, &out).map_err(CliError::Runtime)?;
    eprintln!("{} points written to {}", points.len(), out.display());
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        e.report_and_exit();
    }
}
