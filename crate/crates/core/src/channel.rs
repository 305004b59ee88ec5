//! Fading channel model for the RIS link: i.i.d. Rayleigh draws for both
//! hops, additive Gaussian CSI estimation error, the diagonal reflection
//! matrix, and the end-to-end received-signal equation
//! `y = sqrt(P/N_s) * H^H Theta G * F s + n`.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::numerics::{matmul, CMatrix, NumericsError};
use crate::rng::complex_gaussian;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("phase {value} at element {index} outside [-pi, pi]")]
    PhaseOutOfRange { index: usize, value: f64 },
    #[error("precoder norm^2 {got} != stream count {want}")]
    PrecoderNorm { got: f64, want: f64 },
    #[error("noise variance must be positive and finite, got {0}")]
    BadNoiseVariance(f64),
    #[error("CSI error deviation must be non-negative and finite, got {0}")]
    BadCsiDeviation(f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// One realization of both hops: transmitter-to-RIS (`n_ris` x `n_tx`) and
/// RIS-to-receiver (`n_ris` x `n_rx`).
#[derive(Debug, Clone)]
pub struct ChannelPair {
    pub tx_ris: CMatrix,
    pub ris_rx: CMatrix,
}

impl ChannelPair {
    pub fn n_ris(&self) -> usize {
        self.tx_ris.rows()
    }

    pub fn n_tx(&self) -> usize {
        self.tx_ris.cols()
    }

    pub fn n_rx(&self) -> usize {
        self.ris_rx.cols()
    }
}

/// Additive CSI estimation-error model: each estimate entry is the true entry
/// plus an independent complex Gaussian of standard deviation `sigma_e`.
#[derive(Debug, Clone, Copy)]
pub struct CsiModel {
    pub sigma_e: f64,
}

impl CsiModel {
    pub fn new(sigma_e: f64) -> Result<Self, ChannelError> {
        if !sigma_e.is_finite() || sigma_e < 0.0 {
            return Err(ChannelError::BadCsiDeviation(sigma_e));
        }
        Ok(CsiModel { sigma_e })
    }
}

/// Per-receive-antenna complex noise variance.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    pub sigma2: f64,
}

impl NoiseModel {
    pub fn new(sigma2: f64) -> Result<Self, ChannelError> {
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(ChannelError::BadNoiseVariance(sigma2));
        }
        Ok(NoiseModel { sigma2 })
    }

    /// Noise variance for a given SNR, with SNR defined as total transmit
    /// power over per-antenna noise power: `sigma2 = P / 10^(snr_db/10)`.
    pub fn from_snr_db(power: f64, snr_db: f64) -> Result<Self, ChannelError> {
        NoiseModel::new(power / 10f64.powf(snr_db / 10.0))
    }
}

/// RIS phase angles, one per element, each in `[-pi, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    angles: Vec<f64>,
}

impl PhaseConfig {
    pub fn new(angles: Vec<f64>) -> Result<Self, ChannelError> {
        for (index, &value) in angles.iter().enumerate() {
            if !value.is_finite() || !(-std::f64::consts::PI..=std::f64::consts::PI).contains(&value)
            {
                return Err(ChannelError::PhaseOutOfRange { index, value });
            }
        }
        Ok(PhaseConfig { angles })
    }

    pub fn zeros(n_ris: usize) -> Self {
        PhaseConfig { angles: vec![0.0; n_ris] }
    }

    /// Uniform i.i.d. phases in [-pi, pi].
    pub fn random(n_ris: usize, rng: &mut impl Rng) -> Self {
        let pi = std::f64::consts::PI;
        PhaseConfig { angles: (0..n_ris).map(|_| rng.random_range(-pi..pi)).collect() }
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Unit-modulus reflection coefficients `e^{j theta_k}`.
    pub fn coefficients(&self) -> Vec<Complex64> {
        self.angles.iter().map(|&t| Complex64::from_polar(1.0, t)).collect()
    }
}

/// Draws a fresh channel pair with i.i.d. unit-variance complex Gaussian
/// entries (Rayleigh fading on both hops).
pub fn sample_channels(
    rng: &mut impl Rng,
    n_ris: usize,
    n_tx: usize,
    n_rx: usize,
) -> ChannelPair {
    ChannelPair {
        tx_ris: CMatrix::from_fn(n_ris, n_tx, |_, _| complex_gaussian(rng)),
        ris_rx: CMatrix::from_fn(n_ris, n_rx, |_, _| complex_gaussian(rng)),
    }
}

/// Adds independent zero-mean complex Gaussian estimation error of standard
/// deviation `model.sigma_e` to every entry of both hops.
pub fn corrupt_csi(
    truth: &ChannelPair,
    model: &CsiModel,
    rng: &mut impl Rng,
) -> ChannelPair {
    let mut noisy = |m: &CMatrix| {
        CMatrix::from_fn(m.rows(), m.cols(), |r, c| {
            m[(r, c)] + model.sigma_e * complex_gaussian(rng)
        })
    };
    ChannelPair { tx_ris: noisy(&truth.tx_ris), ris_rx: noisy(&truth.ris_rx) }
}

/// Diagonal reflection matrix `diag(e^{j theta_1}, ..., e^{j theta_K})` with
/// unit reflection magnitude on every element.
pub fn reflection_matrix(theta: &PhaseConfig) -> CMatrix {
    CMatrix::diag(&theta.coefficients())
}

/// Cascaded channel `H^H Theta G` seen from transmit antennas to receive
/// antennas through the RIS (`n_rx` x `n_tx`).
pub fn effective_channel(csi: &ChannelPair, theta: &PhaseConfig) -> Result<CMatrix, ChannelError> {
    let coeff = theta.coefficients();
    if coeff.len() != csi.n_ris() {
        return Err(NumericsError::DimensionMismatch(format!(
            "phase count {} != RIS elements {}",
            coeff.len(),
            csi.n_ris()
        ))
        .into());
    }
    // H^H (n_rx x K) times diag(v) scales column k by v_k; then times G.
    let scaled = CMatrix::from_fn(csi.n_rx(), csi.n_ris(), |r, k| {
        csi.ris_rx[(k, r)].conj() * coeff[k]
    });
    Ok(matmul(&scaled, &csi.tx_ris)?)
}

/// Transmits one precoded symbol vector through the true channels:
/// `y = sqrt(P/N_s) H^H Theta G F s + n`, with fresh AWGN of per-antenna
/// variance `noise.sigma2`.
#[allow(clippy::too_many_arguments)]
pub fn apply_ris_link(
    symbols: &[Complex64],
    precoder: &CMatrix,
    pair: &ChannelPair,
    theta: &PhaseConfig,
    power: f64,
    noise: &NoiseModel,
    rng: &mut impl Rng,
) -> Result<Vec<Complex64>, ChannelError> {
    let n_streams = precoder.cols();
    if symbols.len() != n_streams {
        return Err(NumericsError::DimensionMismatch(format!(
            "symbol count {} != precoder columns {}",
            symbols.len(),
            n_streams
        ))
        .into());
    }
    let norm2 = precoder.entries().iter().map(|z| z.norm_sqr()).sum::<f64>();
    if (norm2 - n_streams as f64).abs() > 1e-9 {
        return Err(ChannelError::PrecoderNorm { got: norm2, want: n_streams as f64 });
    }
    let cascade = effective_channel(pair, theta)?;
    let tx = matmul(&cascade, precoder)?;
    let gain = (power / n_streams as f64).sqrt();
    let sigma = noise.sigma2.sqrt();
    let y = (0..pair.n_rx())
        .map(|r| {
            let mut acc = Complex64::ZERO;
            for (m, &s) in symbols.iter().enumerate() {
                acc += tx[(r, m)] * s;
            }
            gain * acc + sigma * complex_gaussian(rng)
        })
        .collect();
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{frobenius_norm, hermitian};
    use crate::rng::{substream, StreamKind};

    fn rng(i: u64) -> rand_chacha::ChaCha12Rng {
        substream(42, StreamKind::Misc, i)
    }

    #[test]
    fn sampled_channels_have_zero_mean_unit_variance() {
        let mut r = rng(0);
        let n = 100_000usize;
        let mut sum = Complex64::ZERO;
        let mut pow = 0.0;
        // accumulate over many small draws so both hops are covered
        let mut seen = 0usize;
        while seen < n {
            let pair = sample_channels(&mut r, 4, 2, 2);
            for m in [&pair.tx_ris, &pair.ris_rx] {
                for &z in m.entries() {
                    sum += z;
                    pow += z.norm_sqr();
                    seen += 1;
                }
            }
        }
        let mean = sum / seen as f64;
        assert!(mean.norm() < 0.02, "mean {mean}");
        assert!((pow / seen as f64 - 1.0).abs() < 0.03);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let a = sample_channels(&mut rng(1), 8, 4, 2);
        let b = sample_channels(&mut rng(1), 8, 4, 2);
        assert_eq!(a.tx_ris, b.tx_ris);
        assert_eq!(a.ris_rx, b.ris_rx);
    }

    #[test]
    fn zero_sigma_e_returns_exact_channels() {
        let truth = sample_channels(&mut rng(2), 6, 3, 2);
        let noisy = corrupt_csi(&truth, &CsiModel::new(0.0).unwrap(), &mut rng(3));
        assert_eq!(noisy.tx_ris, truth.tx_ris);
        assert_eq!(noisy.ris_rx, truth.ris_rx);
    }

    #[test]
    fn csi_error_variance_matches_model() {
        let sigma_e = 0.3;
        let model = CsiModel::new(sigma_e).unwrap();
        let mut r = rng(4);
        let mut pow = 0.0;
        let mut count = 0usize;
        while count < 100_000 {
            let truth = sample_channels(&mut r, 8, 4, 2);
            let noisy = corrupt_csi(&truth, &model, &mut r);
            let d = noisy.tx_ris.sub(&truth.tx_ris).unwrap();
            let e = noisy.ris_rx.sub(&truth.ris_rx).unwrap();
            for m in [d, e] {
                for z in m.entries() {
                    pow += z.norm_sqr();
                    count += 1;
                }
            }
        }
        let var = pow / count as f64;
        assert!((var / (sigma_e * sigma_e) - 1.0).abs() < 0.03, "variance {var}");
    }

    #[test]
    fn training_sigma_e_keeps_dimensions_and_finiteness() {
        let truth = sample_channels(&mut rng(5), 16, 4, 2);
        let noisy = corrupt_csi(&truth, &CsiModel::new(0.1).unwrap(), &mut rng(6));
        assert_eq!(noisy.tx_ris.rows(), 16);
        assert_eq!(noisy.tx_ris.cols(), 4);
        assert_eq!(noisy.ris_rx.cols(), 2);
        noisy.tx_ris.check_finite().unwrap();
        noisy.ris_rx.check_finite().unwrap();
    }

    #[test]
    fn reflection_matrix_basics() {
        let eye = reflection_matrix(&PhaseConfig::zeros(3));
        assert_eq!(eye, CMatrix::identity(3));
        let pi = std::f64::consts::PI;
        let neg = reflection_matrix(&PhaseConfig::new(vec![pi; 2]).unwrap());
        for i in 0..2 {
            assert!((neg[(i, i)] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn reflection_coefficients_are_unit_modulus() {
        let mut r = rng(7);
        for _ in 0..100 {
            let theta = PhaseConfig::random(16, &mut r);
            let m = reflection_matrix(&theta);
            for i in 0..16 {
                assert!((m[(i, i)].norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_range_phase_is_rejected() {
        assert!(matches!(
            PhaseConfig::new(vec![4.0]),
            Err(ChannelError::PhaseOutOfRange { index: 0, .. })
        ));
    }

    #[test]
    fn scalar_chain_matches_hand_calculation() {
        // K = n_tx = n_rx = n_streams = 1, all-ones chain, P=4 => y = 2 s
        let pair = ChannelPair {
            tx_ris: CMatrix::identity(1),
            ris_rx: CMatrix::identity(1),
        };
        let theta = PhaseConfig::zeros(1);
        let f = CMatrix::identity(1);
        let noise = NoiseModel::new(1e-30).unwrap();
        let s = [Complex64::new(0.7, -0.2)];
        let y =
            apply_ris_link(&s, &f, &pair, &theta, 4.0, &noise, &mut rng(8)).unwrap();
        assert!((y[0] - 2.0 * s[0]).norm() < 1e-9);
    }

    #[test]
    fn noiseless_link_matches_matmul_composition_oracle() {
        let mut r = rng(9);
        for _ in 0..50 {
            let pair = sample_channels(&mut r, 8, 4, 2);
            let theta = PhaseConfig::random(8, &mut r);
            // scaled semi-unitary precoder with ||F||_F^2 = 2
            let base = sample_channels(&mut r, 4, 2, 2).tx_ris;
            let u = crate::numerics::svd(&base).unwrap().u;
            let f = u.scaled(Complex64::ONE); // 4x2, ||.||_F^2 == 2 already
            let s = vec![Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.8)];
            let noise = NoiseModel::new(1e-30).unwrap();
            let y = apply_ris_link(&s, &f, &pair, &theta, 4.0, &noise, &mut r).unwrap();

            // independent composition: sqrt(P/Ns) * H^H * Theta * G * F * s
            let hh = hermitian(&pair.ris_rx);
            let chain = matmul(
                &matmul(&matmul(&hh, &reflection_matrix(&theta)).unwrap(), &pair.tx_ris)
                    .unwrap(),
                &f,
            )
            .unwrap();
            let gain = (4.0f64 / 2.0).sqrt();
            for rx in 0..2 {
                let want = gain * (chain[(rx, 0)] * s[0] + chain[(rx, 1)] * s[1]);
                assert!((y[rx] - want).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_signal_yields_pure_noise_of_configured_variance() {
        let pair = ChannelPair {
            tx_ris: CMatrix::zeros(2, 2),
            ris_rx: CMatrix::zeros(2, 2),
        };
        let theta = PhaseConfig::zeros(2);
        let f = CMatrix::from_fn(2, 2, |r, c| {
            if r == c { Complex64::ONE } else { Complex64::ZERO }
        });
        let sigma2 = 0.8;
        let noise = NoiseModel::new(sigma2).unwrap();
        let mut r = rng(10);
        let mut pow = 0.0;
        let mut count = 0usize;
        let s = [Complex64::ZERO, Complex64::ZERO];
        while count < 100_000 {
            let y = apply_ris_link(&s, &f, &pair, &theta, 4.0, &noise, &mut r).unwrap();
            for z in y {
                pow += z.norm_sqr();
                count += 1;
            }
        }
        assert!((pow / count as f64 / sigma2 - 1.0).abs() < 0.03);
    }

    #[test]
    fn precoder_norm_violation_is_rejected() {
        let pair = sample_channels(&mut rng(11), 4, 2, 2);
        let theta = PhaseConfig::zeros(4);
        let f = CMatrix::identity(2).scaled(Complex64::new(2.0, 0.0));
        let noise = NoiseModel::new(1.0).unwrap();
        let s = [Complex64::ONE, Complex64::ONE];
        assert!(matches!(
            apply_ris_link(&s, &f, &pair, &theta, 4.0, &noise, &mut rng(12)),
            Err(ChannelError::PrecoderNorm { .. })
        ));
    }

    #[test]
    fn effective_channel_matches_composition_and_k1_phase_carry() {
        let mut r = rng(13);
        let csi = sample_channels(&mut r, 8, 4, 2);
        let theta = PhaseConfig::random(8, &mut r);
        let direct = effective_channel(&csi, &theta).unwrap();
        let composed = matmul(
            &matmul(&hermitian(&csi.ris_rx), &reflection_matrix(&theta)).unwrap(),
            &csi.tx_ris,
        )
        .unwrap();
        assert!(frobenius_norm(&direct.sub(&composed).unwrap()) < 1e-12);

        // K = 1: a single phase factor scales the rank-one outer product
        let csi1 = sample_channels(&mut r, 1, 3, 2);
        let t1 = 0.9;
        let eff = effective_channel(&csi1, &PhaseConfig::new(vec![t1]).unwrap()).unwrap();
        let base = effective_channel(&csi1, &PhaseConfig::zeros(1)).unwrap();
        let phased = base.scaled(Complex64::from_polar(1.0, t1));
        assert!(frobenius_norm(&eff.sub(&phased).unwrap()) < 1e-12);
    }

    #[test]
    fn identity_padded_effective_channel_equals_hermitian_product() {
        // theta = 0 => H_eff = H^H G exactly
        let mut r = rng(14);
        let csi = sample_channels(&mut r, 6, 3, 2);
        let eff = effective_channel(&csi, &PhaseConfig::zeros(6)).unwrap();
        let want = matmul(&hermitian(&csi.ris_rx), &csi.tx_ris).unwrap();
        assert!(frobenius_norm(&eff.sub(&want).unwrap()) < 1e-12);
    }
}
