//! Experiment configuration: flat JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ris_mimo::autoencoder::{ModelDims, TrainConfig};
use ris_mimo::modelbased::{ModelBasedConfig, PhaseSelection};
use ris_mimo::neuralnet::NormalizationMode;

/// Which transceiver produces a BER point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Modelbased,
    Autoencoder,
    RandomPhase,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Modelbased => "modelbased",
            Method::Autoencoder => "autoencoder",
            Method::RandomPhase => "random-phase",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    Paper,
    Sqrt,
}

impl From<Normalization> for NormalizationMode {
    fn from(n: Normalization) -> Self {
        match n {
            Normalization::Paper => NormalizationMode::Paper,
            Normalization::Sqrt => NormalizationMode::Sqrt,
        }
    }
}

/// Every knob of the harness, JSON-serializable as one flat object.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_streams: usize,
    pub n_ris: usize,
    pub mod_order: usize,
    pub power: f64,
    pub snr_db: Vec<f64>,
    pub sigma_e: Vec<f64>,
    pub n_bits: u64,
    pub method: Method,
    pub phase_max_iter: usize,
    pub phase_tol: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_snr_db: f64,
    pub n_samples: usize,
    pub train_sigma_e: f64,
    pub normalization: Normalization,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_tx: 4,
            n_rx: 2,
            n_streams: 2,
            n_ris: 16,
            mod_order: 2,
            power: 4.0,
            snr_db: vec![0.0, 5.0, 10.0],
            sigma_e: vec![0.1],
            n_bits: 1_000_000,
            method: Method::Modelbased,
            phase_max_iter: 200,
            phase_tol: 1e-6,
            epochs: 10,
            batch_size: 1000,
            learning_rate: 2e-4,
            train_snr_db: 5.0,
            n_samples: 200_000,
            train_sigma_e: 0.1,
            normalization: Normalization::Paper,
            seed: 1,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))?;
        Ok(cfg)
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            mod_order: self.mod_order,
            n_streams: self.n_streams,
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            n_ris: self.n_ris,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 || self.n_streams == 0 || self.n_ris == 0 {
            anyhow::bail!("dimensions must be positive");
        }
        if self.n_streams > self.n_tx.min(self.n_rx) {
            anyhow::bail!(
                "n_streams = {} exceeds min(n_tx, n_rx) = {}",
                self.n_streams,
                self.n_tx.min(self.n_rx)
            );
        }
        if !matches!(self.mod_order, 2 | 4 | 16 | 64) {
            anyhow::bail!("mod_order must be one of 2, 4, 16, 64");
        }
        if self.power <= 0.0 || !self.power.is_finite() {
            anyhow::bail!("power must be positive");
        }
        if self.snr_db.is_empty() || self.sigma_e.is_empty() {
            anyhow::bail!("snr_db and sigma_e lists must be non-empty");
        }
        if self.sigma_e.iter().any(|s| *s < 0.0 || !s.is_finite()) {
            anyhow::bail!("sigma_e values must be non-negative");
        }
        if self.n_bits == 0 {
            anyhow::bail!("n_bits must be positive");
        }
        if self.phase_max_iter == 0 {
            anyhow::bail!("phase_max_iter must be positive");
        }
        if self.batch_size == 0 || self.n_samples % self.batch_size != 0 {
            anyhow::bail!("batch_size must divide n_samples");
        }
        Ok(())
    }

    pub fn modelbased(&self, snr_db: f64, sigma_e: f64, selection: PhaseSelection) -> ModelBasedConfig {
        ModelBasedConfig {
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            n_streams: self.n_streams,
            n_ris: self.n_ris,
            mod_order: self.mod_order,
            power: self.power,
            sigma2: self.power / 10f64.powf(snr_db / 10.0),
            sigma_e,
            phase_max_iter: self.phase_max_iter,
            phase_tol: self.phase_tol,
            phase_selection: selection,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            dims: self.dims(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            train_snr_db: self.train_snr_db,
            n_samples: self.n_samples,
            sigma_e: self.train_sigma_e,
            power: self.power,
            norm_mode: self.normalization.into(),
            seed: self.seed,
        }
    }
}

/// Parses `start:end:step` or a comma list into a value list.
pub fn parse_value_list(text: &str) -> anyhow::Result<Vec<f64>> {
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            anyhow::bail!("range must be start:end:step, got {text}");
        }
        let start: f64 = parts[0].parse()?;
        let end: f64 = parts[1].parse()?;
        let step: f64 = parts[2].parse()?;
        if step <= 0.0 {
            anyhow::bail!("range step must be positive");
        }
        let mut out = Vec::new();
        let mut v = start;
        while v <= end + 1e-9 {
            out.push(v);
            v += step;
        }
        Ok(out)
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow::anyhow!("bad value {s}: {e}")))
            .collect()
    }
}
