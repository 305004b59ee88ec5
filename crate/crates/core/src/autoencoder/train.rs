//! Joint training of encoder, RIS network, and decoder over fresh fading
//! realizations, with adaptive per-stream loss weights.

use thiserror::Error;

use super::{
    cascade_batch, cascade_theta_grad, compute_loss, update_alpha, AutoencoderModel, ModelDims,
};
use crate::channel::{corrupt_csi, sample_channels, ChannelError, ChannelPair, CsiModel};
use crate::modem::{bits_to_onehot, ModemError, OneHotBlock};
use crate::neuralnet::{AdamHyper, ChannelLayer, Mode, NeuralNetError, NormalizationMode};
use crate::rng::{substream, StreamKind};
use rand::Rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    NeuralNet(#[from] NeuralNetError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Modem(#[from] ModemError),
}

/// Training protocol parameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub dims: ModelDims,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_snr_db: f64,
    pub n_samples: usize,
    pub sigma_e: f64,
    pub power: f64,
    pub norm_mode: NormalizationMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// 200k samples, 10 epochs, batches of 1000, 5 dB training SNR,
    /// CSI error deviation 0.1, learning rate 2e-4.
    fn default() -> Self {
        TrainConfig {
            dims: ModelDims::default(),
            epochs: 10,
            batch_size: 1000,
            learning_rate: 2e-4,
            train_snr_db: 5.0,
            n_samples: 200_000,
            sigma_e: 0.1,
            power: 4.0,
            norm_mode: NormalizationMode::Paper,
            seed: 1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 || self.n_samples == 0 {
            return Err(TrainError::InvalidConfig("counts must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(TrainError::InvalidConfig("batch size must be at least 2".into()));
        }
        if self.n_samples % self.batch_size != 0 {
            return Err(TrainError::InvalidConfig(format!(
                "batch size {} does not divide sample count {}",
                self.batch_size, self.n_samples
            )));
        }
        if !(self.learning_rate > 0.0 && self.power > 0.0) {
            return Err(TrainError::InvalidConfig("rates and power must be positive".into()));
        }
        if self.sigma_e < 0.0 || !self.sigma_e.is_finite() {
            return Err(TrainError::InvalidConfig("sigma_e must be non-negative".into()));
        }
        Ok(())
    }

    pub fn iterations(&self) -> usize {
        self.epochs * (self.n_samples / self.batch_size)
    }

    pub fn noise_variance(&self) -> f64 {
        self.power / 10f64.powf(self.train_snr_db / 10.0)
    }
}

/// One recorded training iteration.
#[derive(Debug, Clone)]
pub struct LossRecord {
    pub iteration: usize,
    pub total: f64,
    pub per_stream: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `|batch-average transmit power - target|` for this batch.
    pub power_gap: f64,
}

/// The full per-iteration loss history of one training run.
#[derive(Debug, Clone, Default)]
pub struct LossTrace {
    pub records: Vec<LossRecord>,
}

impl LossTrace {
    pub fn max_power_gap(&self) -> f64 {
        self.records.iter().map(|r| r.power_gap).fold(0.0, f64::max)
    }

    /// Mean total loss over the records in `range`.
    pub fn mean_total(&self, range: std::ops::Range<usize>) -> f64 {
        let slice = &self.records[range];
        slice.iter().map(|r| r.total).sum::<f64>() / slice.len() as f64
    }
}

/// One training sample: true channels, their estimate, and the payload.
struct Sample {
    truth: ChannelPair,
    estimate: ChannelPair,
    onehot: OneHotBlock,
}

fn make_sample(config: &TrainConfig, index: u64) -> Result<Sample, TrainError> {
    let d = &config.dims;
    let mut rng = substream(config.seed, StreamKind::TrainSample, index);
    let truth = sample_channels(&mut rng, d.n_ris, d.n_tx, d.n_rx);
    let estimate = corrupt_csi(&truth, &CsiModel::new(config.sigma_e)?, &mut rng);
    let bits: Vec<u8> =
        (0..d.bits_per_vector()).map(|_| rng.random_range(0..2u8)).collect();
    let onehot = bits_to_onehot(&bits, d.mod_order, d.n_streams)?;
    Ok(Sample { truth, estimate, onehot })
}

/// Trains a fresh model under `config`. See [`train_with`] for the variant
/// with a progress callback.
pub fn train(config: &TrainConfig) -> Result<(AutoencoderModel, LossTrace), TrainError> {
    train_with(config, |_, _| {})
}

/// Trains a fresh model, invoking `progress(iteration, record)` after every
/// optimizer step.
///
/// The sample set is a deterministic function of the seed: sample `i` is
/// regenerated from its own sub-stream whenever a batch needs it, and epochs
/// revisit the same samples in order. Channel noise is redrawn every forward
/// pass.
pub fn train_with(
    config: &TrainConfig,
    mut progress: impl FnMut(usize, &LossRecord),
) -> Result<(AutoencoderModel, LossTrace), TrainError> {
    config.validate()?;
    let d = config.dims;
    let mut model =
        AutoencoderModel::new(d, config.power, config.norm_mode, config.seed);
    let opt = AdamHyper { lr: config.learning_rate, ..AdamHyper::default() };
    let sigma2 = config.noise_variance();
    let batches_per_epoch = config.n_samples / config.batch_size;
    let mut alpha = vec![1.0 / d.n_streams as f64; d.n_streams];
    let mut trace = LossTrace::default();
    let power_target = match config.norm_mode {
        NormalizationMode::Paper => config.power * config.power,
        NormalizationMode::Sqrt => config.power,
    };

    let mut iteration = 0usize;
    for _epoch in 0..config.epochs {
        for batch in 0..batches_per_epoch {
            let base = (batch * config.batch_size) as u64;
            let samples: Result<Vec<Sample>, TrainError> = (0..config.batch_size)
                .map(|i| make_sample(config, base + i as u64))
                .collect();
            let samples = samples?;
            let truths: Vec<ChannelPair> = samples.iter().map(|s| s.truth.clone()).collect();
            let estimates: Vec<ChannelPair> =
                samples.iter().map(|s| s.estimate.clone()).collect();
            let onehots: Vec<OneHotBlock> = samples.iter().map(|s| s.onehot.clone()).collect();

            // forward
            let thetas = model.ris_net_forward(&estimates, Mode::Training)?;
            let cascades = cascade_batch(&estimates, &thetas)?;
            let (x, mut normalizer) =
                model.encoder_forward(&onehots, &cascades, Mode::Training)?;
            let batch_power = x.iter().map(|v| v * v).sum::<f64>() / config.batch_size as f64;
            let mut channel = ChannelLayer::new(config.power, d.n_streams, sigma2);
            let mut noise_rng = substream(config.seed, StreamKind::TrainNoise, iteration as u64);
            let received = channel.forward(&x, &thetas, &truths, &mut noise_rng)?;
            let logits = model.decoder_forward(received, Mode::Training)?;
            let (total, per_stream, grad_logits) = compute_loss(&logits, &onehots, &alpha)?;

            // backward through decoder, channel, normalizer, encoder
            let grad_received = model.decoder.backward(grad_logits)?;
            let (grad_x, grad_theta_channel) = channel.backward(&grad_received, &truths)?;
            let grad_raw = normalizer.backward(&grad_x)?;
            let grad_enc_in = model.encoder.backward(grad_raw)?;

            // split the encoder input gradient: one-hot part is discarded,
            // cascade part flows back into the phases
            let hot_width = d.mod_order * d.n_streams;
            let grad_cascade = grad_enc_in
                .slice(ndarray::s![.., hot_width..])
                .to_owned();
            let grad_theta_encoder = cascade_theta_grad(&estimates, &thetas, &grad_cascade)?;

            let grad_theta = &grad_theta_channel + &grad_theta_encoder;
            let grad_sigmoid = grad_theta.mapv(|g| std::f64::consts::TAU * g);
            model.ris_net.backward(grad_sigmoid)?;

            model.ris_net.adam_update(&opt);
            model.encoder.adam_update(&opt);
            model.decoder.adam_update(&opt);

            let record = LossRecord {
                iteration,
                total,
                per_stream: per_stream.clone(),
                alpha: alpha.clone(),
                power_gap: (batch_power - power_target).abs(),
            };
            progress(iteration, &record);
            trace.records.push(record);
            alpha = update_alpha(&per_stream);
            iteration += 1;
        }
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A micro configuration that trains in a couple of seconds.
    fn micro_config() -> TrainConfig {
        TrainConfig {
            dims: ModelDims { mod_order: 2, n_streams: 2, n_tx: 2, n_rx: 2, n_ris: 4 },
            epochs: 2,
            batch_size: 50,
            n_samples: 500,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation_catches_bad_batch_split() {
        let config = TrainConfig { batch_size: 300, n_samples: 1000, ..TrainConfig::default() };
        assert!(matches!(train(&config), Err(TrainError::InvalidConfig(_))));
    }

    #[test]
    fn initial_loss_is_near_chance_level() {
        let config = micro_config();
        let (_, trace) = train(&config).unwrap();
        let ln_m = (config.dims.mod_order as f64).ln();
        let first = trace.records.first().unwrap().total;
        assert!(
            (first - ln_m).abs() < 0.2 * ln_m,
            "initial loss {first} vs ln(M) = {ln_m}"
        );
    }

    #[test]
    fn loss_decreases_and_alpha_stays_normalized() {
        let (_, trace) = train(&micro_config()).unwrap();
        let n = trace.records.len();
        let head = trace.mean_total(0..n / 10);
        let tail = trace.mean_total(n - n / 10..n);
        assert!(tail < head, "loss did not decrease: {head} -> {tail}");
        for rec in &trace.records {
            let sum: f64 = rec.alpha.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert_eq!(rec.per_stream.len(), 2);
        }
    }

    #[test]
    fn power_contract_holds_on_every_batch() {
        let (_, trace) = train(&micro_config()).unwrap();
        assert!(trace.max_power_gap() < 1e-9, "gap {}", trace.max_power_gap());
    }

    #[test]
    fn training_is_seed_deterministic() {
        let config = micro_config();
        let (m1, t1) = train(&config).unwrap();
        let (m2, t2) = train(&config).unwrap();
        assert_eq!(t1.records.len(), t2.records.len());
        for (a, b) in t1.records.iter().zip(&t2.records) {
            assert_eq!(a.total.to_bits(), b.total.to_bits());
        }
        let mut params1 = Vec::new();
        m1.encoder.visit_tensors(&mut |_, t| params1.extend_from_slice(t));
        let mut params2 = Vec::new();
        m2.encoder.visit_tensors(&mut |_, t| params2.extend_from_slice(t));
        assert_eq!(params1.len(), params2.len());
        for (a, b) in params1.iter().zip(&params2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
