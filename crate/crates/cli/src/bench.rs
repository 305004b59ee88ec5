//! Per-channel runtime comparison: model-based link design versus
//! autoencoder inference.
//!
//! The model-based side times one full design (phase ascent at the full
//! sweep budget, SVD, water-filling) per fresh channel realization. The
//! autoencoder side times batched inference through all three networks and
//! reports the amortized per-channel cost, the way the system would run in
//! deployment. Medians are taken across repetitions after warmup.

use std::time::Instant;

use ris_mimo::autoencoder::{AutoencoderModel, ModelDims};
use ris_mimo::channel::{corrupt_csi, sample_channels, CsiModel};
use ris_mimo::modelbased::{design_link, optimize_phases};
use ris_mimo::neuralnet::NormalizationMode;
use ris_mimo::rng::{substream, StreamKind};

use crate::config::ExperimentConfig;

pub struct BenchResult {
    pub n_ris: usize,
    pub modelbased_ms: f64,
    pub autoencoder_ms: f64,
}

impl BenchResult {
    pub fn ratio(&self) -> f64 {
        self.modelbased_ms / self.autoencoder_ms
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

/// Times `reps` model-based designs, one per fresh channel realization.
/// A negative ascent tolerance disables early stopping so every design runs
/// the full `phase_max_iter` sweeps.
pub fn bench_modelbased(cfg: &ExperimentConfig, reps: usize, warmup: usize) -> f64 {
    let sigma2 = cfg.power / 10f64.powf(cfg.train_snr_db / 10.0);
    let mut times = Vec::with_capacity(reps);
    for rep in 0..(reps + warmup) {
        let mut rng = substream(cfg.seed, StreamKind::Trial, rep as u64);
        let truth = sample_channels(&mut rng, cfg.n_ris, cfg.n_tx, cfg.n_rx);
        let est = corrupt_csi(&truth, &CsiModel::new(0.1).expect("valid"), &mut rng);
        let start = Instant::now();
        let report = optimize_phases(&est, cfg.phase_max_iter, -1.0, &mut rng);
        let design = design_link(&est, &report.theta, cfg.power, sigma2, cfg.n_streams);
        let dt = start.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(&design);
        if rep >= warmup {
            times.push(dt);
        }
    }
    median(times)
}

/// Times `reps` batched autoencoder inferences over `batch` fresh channels
/// each and returns the per-channel median in milliseconds.
pub fn bench_autoencoder(cfg: &ExperimentConfig, batch: usize, reps: usize, warmup: usize) -> f64 {
    let dims = ModelDims {
        mod_order: cfg.mod_order,
        n_streams: cfg.n_streams,
        n_tx: cfg.n_tx,
        n_rx: cfg.n_rx,
        n_ris: cfg.n_ris,
    };
    // weights do not affect the cost; a fresh model times identically
    let model = AutoencoderModel::new(dims, cfg.power, NormalizationMode::Paper, cfg.seed);
    let sigma2 = cfg.power / 10f64.powf(cfg.train_snr_db / 10.0);
    let mut times = Vec::with_capacity(reps);
    for rep in 0..(reps + warmup) {
        let mut m = model.clone();
        let start = Instant::now();
        let errors = bench_eval_batch(&mut m, sigma2, batch, cfg.seed, rep as u64);
        let dt = start.elapsed().as_secs_f64() * 1e3 / batch as f64;
        std::hint::black_box(errors);
        if rep >= warmup {
            times.push(dt);
        }
    }
    median(times)
}

fn bench_eval_batch(
    model: &mut AutoencoderModel,
    sigma2: f64,
    batch: usize,
    seed: u64,
    rep: u64,
) -> usize {
    use ris_mimo::autoencoder::cascade_batch;
    use ris_mimo::modem::bits_to_onehot;
    use ris_mimo::neuralnet::{ChannelLayer, Mode};
    use rand::Rng;

    let d = model.dims;
    let mut rng = substream(seed, StreamKind::EvalBatch, rep);
    let csi = CsiModel::new(0.1).expect("valid");
    let mut truths = Vec::with_capacity(batch);
    let mut estimates = Vec::with_capacity(batch);
    let mut onehots = Vec::with_capacity(batch);
    for _ in 0..batch {
        let truth = sample_channels(&mut rng, d.n_ris, d.n_tx, d.n_rx);
        estimates.push(corrupt_csi(&truth, &csi, &mut rng));
        truths.push(truth);
        let bits: Vec<u8> =
            (0..d.bits_per_vector()).map(|_| rng.random_range(0..2u8)).collect();
        onehots.push(bits_to_onehot(&bits, d.mod_order, d.n_streams).expect("sized bits"));
    }
    let thetas = model.ris_net_forward(&estimates, Mode::Inference).expect("dims fixed");
    let cascades = cascade_batch(&estimates, &thetas).expect("dims fixed");
    let (x, _) = model.encoder_forward(&onehots, &cascades, Mode::Inference).expect("dims fixed");
    let mut channel = ChannelLayer::new(model.power, d.n_streams, sigma2);
    let received = channel.forward(&x, &thetas, &truths, &mut rng).expect("dims fixed");
    let logits = model.decoder_forward(received, Mode::Inference).expect("dims fixed");
    logits.len()
}

/// Runs both sides at the configured RIS size.
pub fn run_bench(cfg: &ExperimentConfig, reps: usize) -> BenchResult {
    let mb = bench_modelbased(cfg, reps.max(100), 5);
    let ae = bench_autoencoder(cfg, 256, reps.max(100), 3);
    BenchResult { n_ris: cfg.n_ris, modelbased_ms: mb, autoencoder_ms: ae }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bench_produces_positive_times() {
        let cfg = ExperimentConfig { n_ris: 4, ..ExperimentConfig::default() };
        let mb = bench_modelbased(&cfg, 5, 1);
        let ae = bench_autoencoder(&cfg, 16, 5, 1);
        assert!(mb > 0.0);
        assert!(ae > 0.0);
    }
}
