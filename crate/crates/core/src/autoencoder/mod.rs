//! The learned transceiver: encoder, RIS controller, and decoder networks
//! assembled into one end-to-end system, its joint training loop with
//! adaptive per-stream loss weights, checkpointing, and BER evaluation.

mod checkpoint;
mod eval;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use eval::evaluate_ber;
pub use train::{train, train_with, LossRecord, LossTrace, TrainConfig, TrainError};

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{ChannelPair, PhaseConfig};
use crate::modem::OneHotBlock;
use crate::neuralnet::{
    stack_matrix, BatchNormLayer, DenseLayer, Layer, Mlp, Mode, NeuralNetError, NormalizationMode,
    PowerNormalizer, ReluState, SigmoidState, Tensor2,
};
use crate::numerics::CMatrix;
use crate::rng::{substream, StreamKind};

/// System dimensions the three networks are sized for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub mod_order: usize,
    pub n_streams: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_ris: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims { mod_order: 2, n_streams: 2, n_tx: 4, n_rx: 2, n_ris: 16 }
    }
}

impl ModelDims {
    pub fn ris_input_width(&self) -> usize {
        2 * self.n_ris * self.n_tx + 2 * self.n_ris * self.n_rx
    }

    pub fn encoder_input_width(&self) -> usize {
        self.mod_order * self.n_streams + 2 * self.n_tx * self.n_rx
    }

    pub fn decoder_input_width(&self) -> usize {
        2 * self.n_rx
    }

    pub fn logit_width(&self) -> usize {
        self.mod_order * self.n_streams
    }

    pub fn bits_per_vector(&self) -> usize {
        self.n_streams * self.mod_order.trailing_zeros() as usize
    }
}

/// Encoder, RIS network, and decoder with their fixed layer widths.
#[derive(Debug, Clone)]
pub struct AutoencoderModel {
    pub dims: ModelDims,
    pub power: f64,
    pub norm_mode: NormalizationMode,
    pub ris_net: Mlp,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

fn hidden(din: usize, dout: usize, rng: &mut impl Rng) -> Vec<Layer> {
    vec![
        Layer::Dense(DenseLayer::he_init(din, dout, rng)),
        Layer::BatchNorm(BatchNormLayer::new(dout)),
        Layer::Relu(ReluState::default()),
    ]
}

impl AutoencoderModel {
    /// Fresh model with He/Glorot initialization drawn from sub-streams of
    /// `seed`.
    pub fn new(dims: ModelDims, power: f64, norm_mode: NormalizationMode, seed: u64) -> Self {
        let mut r_ris = substream(seed, StreamKind::ModelInit, 0);
        let mut r_enc = substream(seed, StreamKind::ModelInit, 1);
        let mut r_dec = substream(seed, StreamKind::ModelInit, 2);

        let mut ris_layers = Vec::new();
        ris_layers.extend(hidden(dims.ris_input_width(), 256, &mut r_ris));
        ris_layers.extend(hidden(256, 256, &mut r_ris));
        ris_layers.extend(hidden(256, 256, &mut r_ris));
        ris_layers.push(Layer::Dense(DenseLayer::glorot_init(256, dims.n_ris, &mut r_ris)));
        ris_layers.push(Layer::Sigmoid(SigmoidState::default()));

        let mut enc_layers = Vec::new();
        enc_layers.extend(hidden(dims.encoder_input_width(), 1024, &mut r_enc));
        enc_layers.extend(hidden(1024, 1024, &mut r_enc));
        enc_layers.push(Layer::Dense(DenseLayer::glorot_init(1024, 2 * dims.n_tx, &mut r_enc)));

        let mut dec_layers = Vec::new();
        dec_layers.extend(hidden(dims.decoder_input_width(), 512, &mut r_dec));
        dec_layers.extend(hidden(512, 512, &mut r_dec));
        dec_layers.push(Layer::Dense(DenseLayer::glorot_init(512, dims.logit_width(), &mut r_dec)));

        AutoencoderModel {
            dims,
            power,
            norm_mode,
            ris_net: Mlp::new(ris_layers),
            encoder: Mlp::new(enc_layers),
            decoder: Mlp::new(dec_layers),
        }
    }

    /// RIS-network batch forward: stacked channel estimates in, phase angles
    /// in `(-pi, pi)` out.
    pub fn ris_net_forward(
        &mut self,
        estimates: &[ChannelPair],
        mode: Mode,
    ) -> Result<Tensor2, NeuralNetError> {
        let input = ris_input_rows(&self.dims, estimates)?;
        let sig = self.ris_net.forward(input, mode)?;
        Ok(thetas_from_sigmoid(&sig))
    }

    /// Single-realization phase prediction in inference mode.
    pub fn predict_phases(&mut self, estimate: &ChannelPair) -> Result<PhaseConfig, NeuralNetError> {
        let thetas = self.ris_net_forward(std::slice::from_ref(estimate), Mode::Inference)?;
        Ok(PhaseConfig::new(thetas.row(0).to_vec()).expect("sigmoid maps into (-pi, pi)"))
    }

    /// Encoder batch forward: one-hot payloads and estimated cascades in,
    /// power-normalized stacked transmit vectors out. Returns the normalizer
    /// so the caller can run its backward pass.
    pub fn encoder_forward(
        &mut self,
        onehots: &[OneHotBlock],
        cascades: &[CMatrix],
        mode: Mode,
    ) -> Result<(Tensor2, PowerNormalizer), NeuralNetError> {
        let input = encoder_input_rows(&self.dims, onehots, cascades)?;
        let raw = self.encoder.forward(input, mode)?;
        let mut normalizer = PowerNormalizer::new(self.power, self.norm_mode);
        let x = normalizer.forward(raw)?;
        Ok((x, normalizer))
    }

    /// Decoder batch forward: stacked received vectors in, per-stream logit
    /// groups out (`n_streams` contiguous groups of `mod_order`).
    pub fn decoder_forward(&mut self, received: Tensor2, mode: Mode) -> Result<Tensor2, NeuralNetError> {
        if received.ncols() != self.dims.decoder_input_width() {
            return Err(NeuralNetError::WidthMismatch {
                got: received.ncols(),
                want: self.dims.decoder_input_width(),
            });
        }
        self.decoder.forward(received, mode)
    }
}

/// Maps sigmoid outputs in (0,1) onto phases in (-pi, pi).
pub fn thetas_from_sigmoid(sig: &Tensor2) -> Tensor2 {
    sig.mapv(|s| std::f64::consts::TAU * s - std::f64::consts::PI)
}

/// Stacked RIS-network input rows `[Re/Im of H_hat, Re/Im of G_hat]`.
pub fn ris_input_rows(
    dims: &ModelDims,
    estimates: &[ChannelPair],
) -> Result<Tensor2, NeuralNetError> {
    let width = dims.ris_input_width();
    let mut out = Tensor2::zeros((estimates.len(), width));
    for (i, est) in estimates.iter().enumerate() {
        if est.n_ris() != dims.n_ris || est.n_tx() != dims.n_tx || est.n_rx() != dims.n_rx {
            return Err(NeuralNetError::WidthMismatch {
                got: 2 * est.n_ris() * (est.n_tx() + est.n_rx()),
                want: width,
            });
        }
        let h = stack_matrix(&est.ris_rx);
        let g = stack_matrix(&est.tx_ris);
        for (j, v) in h.iter().chain(g.iter()).enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}

/// Stacked encoder input rows `[one-hot streams, Re/Im of the cascade]`.
pub fn encoder_input_rows(
    dims: &ModelDims,
    onehots: &[OneHotBlock],
    cascades: &[CMatrix],
) -> Result<Tensor2, NeuralNetError> {
    let width = dims.encoder_input_width();
    let hot_width = dims.mod_order * dims.n_streams;
    let mut out = Tensor2::zeros((onehots.len(), width));
    for (i, (hot, eff)) in onehots.iter().zip(cascades).enumerate() {
        let mut col = 0;
        for stream in &hot.streams {
            for &v in stream {
                out[(i, col)] = v;
                col += 1;
            }
        }
        if col != hot_width || eff.rows() != dims.n_rx || eff.cols() != dims.n_tx {
            return Err(NeuralNetError::WidthMismatch { got: col, want: hot_width });
        }
        for (j, v) in stack_matrix(eff).into_iter().enumerate() {
            out[(i, hot_width + j)] = v;
        }
    }
    Ok(out)
}

/// Estimated cascades `H_hat^H diag(e^{j theta}) G_hat`, one per sample.
pub fn cascade_batch(
    estimates: &[ChannelPair],
    thetas: &Tensor2,
) -> Result<Vec<CMatrix>, NeuralNetError> {
    if estimates.len() != thetas.nrows() {
        return Err(NeuralNetError::BatchMismatch { got: thetas.nrows(), want: estimates.len() });
    }
    let k = thetas.ncols();
    let mut out = Vec::with_capacity(estimates.len());
    for (i, est) in estimates.iter().enumerate() {
        let coeffs: Vec<Complex64> =
            (0..k).map(|e| Complex64::from_polar(1.0, thetas[(i, e)])).collect();
        let h = &est.ris_rx;
        let g = &est.tx_ris;
        out.push(CMatrix::from_fn(est.n_rx(), est.n_tx(), |r, t| {
            let mut acc = Complex64::ZERO;
            for e in 0..k {
                acc += h[(e, r)].conj() * coeffs[e] * g[(e, t)];
            }
            acc
        }));
    }
    Ok(out)
}

/// Phase gradient of a loss through the estimated cascades: given
/// `dL/d(stacked cascade)` rows, accumulates
/// `dL/d theta_k = Re(conj(dL/dC) : j e^{j theta_k} h_k g_k^T)` per sample.
pub fn cascade_theta_grad(
    estimates: &[ChannelPair],
    thetas: &Tensor2,
    grad_cascade_rows: &Array2<f64>,
) -> Result<Tensor2, NeuralNetError> {
    let b = estimates.len();
    let k = thetas.ncols();
    if grad_cascade_rows.nrows() != b {
        return Err(NeuralNetError::BatchMismatch { got: grad_cascade_rows.nrows(), want: b });
    }
    let mut out = Tensor2::zeros((b, k));
    for (i, est) in estimates.iter().enumerate() {
        let (n_rx, n_tx) = (est.n_rx(), est.n_tx());
        let half = n_rx * n_tx;
        let row = grad_cascade_rows.row(i);
        // complex gradient with Re part in the first half, Im in the second
        let gc = |r: usize, t: usize| Complex64::new(row[r * n_tx + t], row[half + r * n_tx + t]);
        for e in 0..k {
            let v = Complex64::from_polar(1.0, thetas[(i, e)]);
            let mut acc = Complex64::ZERO;
            for r in 0..n_rx {
                for t in 0..n_tx {
                    // d cascade[r,t] / d theta_e = j v_e conj(H[e,r]) G[e,t]
                    let d = Complex64::i() * v * est.ris_rx[(e, r)].conj() * est.tx_ris[(e, t)];
                    acc += gc(r, t).conj() * d;
                }
            }
            out[(i, e)] = acc.re;
        }
    }
    Ok(out)
}

/// Normalized per-stream weights `alpha_i = L_i / sum_j L_j`; uniform when
/// every loss is zero.
pub fn update_alpha(prev_losses: &[f64]) -> Vec<f64> {
    let total: f64 = prev_losses.iter().sum();
    if total > 0.0 {
        prev_losses.iter().map(|l| l / total).collect()
    } else {
        vec![1.0 / prev_losses.len() as f64; prev_losses.len()]
    }
}

/// Weighted multi-stream loss: per-stream softmax cross-entropy combined as
/// `L = sum_i alpha_i L_i`, plus the logit gradient of the weighted sum.
pub fn compute_loss(
    logits: &Tensor2,
    targets: &[OneHotBlock],
    alpha: &[f64],
) -> Result<(f64, Vec<f64>, Tensor2), NeuralNetError> {
    let b = logits.nrows();
    if targets.len() != b {
        return Err(NeuralNetError::BatchMismatch { got: targets.len(), want: b });
    }
    let n_streams = alpha.len();
    let m = logits.ncols() / n_streams;
    let alpha_sum: f64 = alpha.iter().sum();
    if (alpha_sum - 1.0).abs() > 1e-12 || alpha.iter().any(|&a| a < 0.0) {
        return Err(NeuralNetError::InvalidLossWeights);
    }
    let mut per_stream = Vec::with_capacity(n_streams);
    let mut grad = Tensor2::zeros(logits.raw_dim());
    for s in 0..n_streams {
        let mut stream_logits = Tensor2::zeros((b, m));
        let mut stream_targets = Tensor2::zeros((b, m));
        for i in 0..b {
            for j in 0..m {
                stream_logits[(i, j)] = logits[(i, s * m + j)];
                stream_targets[(i, j)] = targets[i].streams[s][j];
            }
        }
        let (loss, g) = crate::neuralnet::softmax_cross_entropy(&stream_logits, &stream_targets)?;
        per_stream.push(loss);
        for i in 0..b {
            for j in 0..m {
                grad[(i, s * m + j)] = alpha[s] * g[(i, j)];
            }
        }
    }
    let total = alpha.iter().zip(&per_stream).map(|(a, l)| a * l).sum();
    Ok((total, per_stream, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channels;
    use crate::modem::bits_to_onehot;
    use crate::neuralnet::unstack_complex_rows;

    fn model(seed: u64) -> AutoencoderModel {
        AutoencoderModel::new(ModelDims::default(), 4.0, NormalizationMode::Paper, seed)
    }

    #[test]
    fn architecture_matches_configured_widths() {
        let m = model(1);
        // encoder: in 4 + 16 = 20 -> 1024 -> 1024 -> 8
        match (&m.encoder.layers[0], &m.encoder.layers[6]) {
            (Layer::Dense(first), Layer::Dense(last)) => {
                assert_eq!(first.in_width(), 20);
                assert_eq!(first.out_width(), 1024);
                assert_eq!(last.out_width(), 8);
            }
            _ => panic!("unexpected encoder layout"),
        }
        assert_eq!(m.encoder.layers.len(), 7);
        // ris: in 192 -> 256 x3 -> 16 -> sigmoid
        assert_eq!(m.ris_net.layers.len(), 11);
        match &m.ris_net.layers[9] {
            Layer::Dense(last) => assert_eq!(last.out_width(), 16),
            _ => panic!("unexpected ris layout"),
        }
        // decoder: in 4 -> 512 -> 512 -> 4
        assert_eq!(m.decoder.layers.len(), 7);
        match &m.decoder.layers[0] {
            Layer::Dense(first) => assert_eq!(first.in_width(), 4),
            _ => panic!("unexpected decoder layout"),
        }
    }

    #[test]
    fn ris_net_outputs_valid_phases_deterministically() {
        let mut m = model(2);
        let mut r = substream(7, StreamKind::Misc, 0);
        let est = sample_channels(&mut r, 16, 4, 2);
        let a = m.predict_phases(&est).unwrap();
        let b = m.predict_phases(&est).unwrap();
        assert_eq!(a, b);
        for &t in a.angles() {
            assert!((-std::f64::consts::PI..=std::f64::consts::PI).contains(&t));
        }
    }

    #[test]
    fn ris_phases_feed_cascades_of_correct_shape() {
        let mut m = model(3);
        let mut r = substream(7, StreamKind::Misc, 1);
        let ests: Vec<_> = (0..5).map(|_| sample_channels(&mut r, 16, 4, 2)).collect();
        let thetas = m.ris_net_forward(&ests, Mode::Inference).unwrap();
        let cascades = cascade_batch(&ests, &thetas).unwrap();
        assert_eq!(cascades.len(), 5);
        assert_eq!((cascades[0].rows(), cascades[0].cols()), (2, 4));
    }

    #[test]
    fn encoder_batch_meets_power_contract_and_shapes() {
        let mut m = model(4);
        let mut r = substream(7, StreamKind::Misc, 2);
        let b = 16;
        let ests: Vec<_> = (0..b).map(|_| sample_channels(&mut r, 16, 4, 2)).collect();
        let thetas = m.ris_net_forward(&ests, Mode::Inference).unwrap();
        let cascades = cascade_batch(&ests, &thetas).unwrap();
        let onehots: Vec<_> = (0..b)
            .map(|i| bits_to_onehot(&[(i % 2) as u8, ((i / 2) % 2) as u8], 2, 2).unwrap())
            .collect();
        let (x, _) = m.encoder_forward(&onehots, &cascades, Mode::Inference).unwrap();
        assert_eq!(x.dim(), (b, 8));
        let avg: f64 = x.iter().map(|v| v * v).sum::<f64>() / b as f64;
        assert!((avg - 16.0).abs() < 1e-9, "batch power {avg}");
        let complex_rows = unstack_complex_rows(&x);
        assert_eq!(complex_rows[0].len(), 4);
        for row in &complex_rows {
            assert!(row.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        }
    }

    #[test]
    fn decoder_emits_stream_groups_and_valid_argmax() {
        let mut m = model(5);
        let y = Tensor2::from_shape_fn((6, 4), |(i, j)| (i + j) as f64 * 0.1);
        let logits = m.decoder_forward(y, Mode::Inference).unwrap();
        assert_eq!(logits.dim(), (6, 4));
        for row in logits.rows() {
            for s in 0..2 {
                let group = &row.as_slice().unwrap()[s * 2..(s + 1) * 2];
                let arg = if group[0] >= group[1] { 0 } else { 1 };
                assert!(arg < 2);
            }
        }
    }

    #[test]
    fn decoder_rejects_wrong_width() {
        let mut m = model(6);
        assert!(m.decoder_forward(Tensor2::zeros((2, 6)), Mode::Inference).is_err());
    }

    #[test]
    fn single_stream_loss_ignores_alpha() {
        let logits = Tensor2::from_shape_vec((2, 2), vec![0.3, -0.2, 1.0, 0.5]).unwrap();
        let targets: Vec<_> = (0..2).map(|i| bits_to_onehot(&[i as u8], 2, 1).unwrap()).collect();
        let (total, per, _) = compute_loss(&logits, &targets, &[1.0]).unwrap();
        assert!((total - per[0]).abs() < 1e-15);
    }

    #[test]
    fn equal_weights_and_losses_collapse_to_common_value() {
        // symmetric logits/target pattern gives identical stream losses
        let logits = Tensor2::from_shape_vec((2, 4), vec![
            0.4, -0.4, 0.4, -0.4,
            -0.1, 0.9, -0.1, 0.9,
        ])
        .unwrap();
        let targets = vec![
            bits_to_onehot(&[0, 0], 2, 2).unwrap(),
            bits_to_onehot(&[1, 1], 2, 2).unwrap(),
        ];
        let (total, per, _) = compute_loss(&logits, &targets, &[0.5, 0.5]).unwrap();
        assert!((per[0] - per[1]).abs() < 1e-12);
        assert!((total - per[0]).abs() < 1e-12);
    }

    #[test]
    fn weighted_loss_matches_dot_product_recomputation() {
        let mut r = substream(7, StreamKind::Misc, 3);
        let logits = Tensor2::from_shape_fn((8, 4), |_| crate::rng::normal(&mut r));
        let targets: Vec<_> = (0..8)
            .map(|i| bits_to_onehot(&[(i % 2) as u8, ((i / 3) % 2) as u8], 2, 2).unwrap())
            .collect();
        let alpha = [0.3, 0.7];
        let (total, per, _) = compute_loss(&logits, &targets, &alpha).unwrap();
        let dot: f64 = alpha.iter().zip(&per).map(|(a, l)| a * l).sum();
        assert!((total - dot).abs() < 1e-12);
    }

    #[test]
    fn invalid_alpha_is_rejected() {
        let logits = Tensor2::zeros((1, 4));
        let targets = vec![bits_to_onehot(&[0, 0], 2, 2).unwrap()];
        assert!(compute_loss(&logits, &targets, &[0.3, 0.3]).is_err());
    }

    #[test]
    fn alpha_update_examples() {
        assert_eq!(update_alpha(&[1.0, 1.0]), vec![0.5, 0.5]);
        assert_eq!(update_alpha(&[3.0, 1.0]), vec![0.75, 0.25]);
        assert_eq!(update_alpha(&[0.0, 0.0]), vec![0.5, 0.5]);
        let a = update_alpha(&[0.2, 1.7, 0.4]);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cascade_theta_grad_matches_finite_differences() {
        use crate::neuralnet::gradcheck::{central_diff, rel_err};
        let mut r = substream(7, StreamKind::Misc, 4);
        let ests: Vec<_> = (0..3).map(|_| sample_channels(&mut r, 4, 3, 2)).collect();
        let mut thetas = Tensor2::from_shape_fn((3, 4), |_| r.random_range(-3.0..3.0));
        let probe = Tensor2::from_shape_fn((3, 12), |_| crate::rng::normal(&mut r));
        let loss = |thetas: &Tensor2| {
            let cascades = cascade_batch(&ests, thetas).unwrap();
            let mut acc = 0.0;
            for (i, c) in cascades.iter().enumerate() {
                for (j, v) in stack_matrix(c).iter().enumerate() {
                    acc += probe[(i, j)] * v;
                }
            }
            acc
        };
        let grad = cascade_theta_grad(&ests, &thetas, &probe).unwrap();
        for idx in [(0, 0), (1, 2), (2, 3)] {
            let numeric = central_diff(
                |d| {
                    thetas[idx] += d;
                    let l = loss(&thetas);
                    thetas[idx] -= d;
                    l
                },
                1e-5,
            );
            assert!(rel_err(grad[idx], numeric) < 1e-4, "idx {idx:?}");
        }
    }
}
