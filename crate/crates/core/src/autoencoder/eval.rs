//! Monte Carlo BER evaluation of a trained model, parallel over batches with
//! per-batch random sub-streams.

use rayon::prelude::*;

use super::{cascade_batch, AutoencoderModel};
use crate::ber::BerPoint;
use crate::channel::{corrupt_csi, sample_channels, ChannelPair, CsiModel};
use crate::modem::{bits_to_onehot, OneHotBlock};
use crate::neuralnet::{ChannelLayer, Mode, NeuralNetError};
use crate::rng::{substream, StreamKind};
use rand::Rng;

const EVAL_BATCH: usize = 1000;

/// Measures the bit error rate of the frozen model at one operating point.
///
/// Batches of 1000 symbol vectors run in parallel, each on its own
/// sub-stream of `seed`, so the result is independent of thread scheduling.
/// At least `n_bits` bits are simulated (rounded up to whole batches).
pub fn evaluate_ber(
    model: &AutoencoderModel,
    snr_db: f64,
    sigma_e: f64,
    n_bits: u64,
    seed: u64,
) -> Result<BerPoint, NeuralNetError> {
    let start = std::time::Instant::now();
    let bits_per_batch = (EVAL_BATCH * model.dims.bits_per_vector()) as u64;
    let n_batches = n_bits.div_ceil(bits_per_batch);
    let sigma2 = model.power / 10f64.powf(snr_db / 10.0);

    let n_errors: u64 = (0..n_batches)
        .into_par_iter()
        .map_init(
            || model.clone(),
            |m, batch| eval_batch(m, sigma2, sigma_e, seed, batch).expect("batch dimensions fixed"),
        )
        .sum();

    Ok(BerPoint {
        snr_db,
        sigma_e,
        n_bits: n_batches * bits_per_batch,
        n_errors,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn eval_batch(
    model: &mut AutoencoderModel,
    sigma2: f64,
    sigma_e: f64,
    seed: u64,
    batch: u64,
) -> Result<u64, NeuralNetError> {
    let d = model.dims;
    let mut rng = substream(seed, StreamKind::EvalBatch, batch);
    let csi = CsiModel::new(sigma_e).expect("validated by caller");
    let mut truths = Vec::with_capacity(EVAL_BATCH);
    let mut estimates = Vec::with_capacity(EVAL_BATCH);
    let mut onehots: Vec<OneHotBlock> = Vec::with_capacity(EVAL_BATCH);
    let mut hot_indices = Vec::with_capacity(EVAL_BATCH);
    for _ in 0..EVAL_BATCH {
        let truth: ChannelPair = sample_channels(&mut rng, d.n_ris, d.n_tx, d.n_rx);
        let estimate = corrupt_csi(&truth, &csi, &mut rng);
        let bits: Vec<u8> =
            (0..d.bits_per_vector()).map(|_| rng.random_range(0..2u8)).collect();
        let onehot = bits_to_onehot(&bits, d.mod_order, d.n_streams)
            .expect("bit count matches dims");
        hot_indices.push(onehot.hot_indices().expect("fresh one-hot"));
        truths.push(truth);
        estimates.push(estimate);
        onehots.push(onehot);
    }

    let thetas = model.ris_net_forward(&estimates, Mode::Inference)?;
    let cascades = cascade_batch(&estimates, &thetas)?;
    let (x, _) = model.encoder_forward(&onehots, &cascades, Mode::Inference)?;
    let mut channel = ChannelLayer::new(model.power, d.n_streams, sigma2);
    let received = channel.forward(&x, &thetas, &truths, &mut rng)?;
    let logits = model.decoder_forward(received, Mode::Inference)?;

    let m = d.mod_order;
    let mut errors = 0u64;
    for (i, row) in logits.rows().into_iter().enumerate() {
        for s in 0..d.n_streams {
            let group = &row.as_slice().expect("contiguous logits")[s * m..(s + 1) * m];
            let mut best = 0usize;
            for (j, &v) in group.iter().enumerate() {
                if v > group[best] {
                    best = j;
                }
            }
            // labels are binary expansions, so the bit distance is the xor weight
            let sent = hot_indices[i][s];
            errors += (best ^ sent).count_ones() as u64;
        }
    }
    Ok(errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::ModelDims;
    use crate::neuralnet::NormalizationMode;

    #[test]
    fn untrained_bpsk_model_sits_at_chance_level() {
        let model = AutoencoderModel::new(
            ModelDims { n_ris: 4, ..ModelDims::default() },
            4.0,
            NormalizationMode::Paper,
            11,
        );
        let point = evaluate_ber(&model, 5.0, 0.0, 40_000, 5).unwrap();
        let ber = point.ber();
        assert!((ber - 0.5).abs() < 0.05, "untrained BER {ber}");
    }

    #[test]
    fn evaluation_is_seed_deterministic_and_counts_bits() {
        let model = AutoencoderModel::new(
            ModelDims { n_ris: 4, ..ModelDims::default() },
            4.0,
            NormalizationMode::Paper,
            12,
        );
        let a = evaluate_ber(&model, 5.0, 0.1, 10_000, 7).unwrap();
        let b = evaluate_ber(&model, 5.0, 0.1, 10_000, 7).unwrap();
        assert_eq!(a.n_errors, b.n_errors);
        assert_eq!(a.n_bits, 10_000); // 5 batches x 2000 bits
        assert_eq!(a.sigma_e, 0.1);
    }
}
