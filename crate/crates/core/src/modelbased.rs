//! Model-based transceiver design: RIS phase optimization by element-wise
//! coordinate ascent on the total path gain, SVD precoding with water-filling
//! power allocation, a diagonalizing equalizer, and end-to-end Monte Carlo
//! trials (design on estimated CSI, transmission through the true channels).

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::channel::{
    apply_ris_link, corrupt_csi, effective_channel, sample_channels, ChannelError, ChannelPair,
    CsiModel, NoiseModel, PhaseConfig,
};
use crate::modem::{demodulate_min_distance, make_constellation, modulate, ModemError};
use crate::numerics::{svd, CMatrix, NumericsError, SvdFactors};

#[derive(Debug, Error)]
pub enum ModelBasedError {
    #[error("channel is rank deficient for {streams} streams (sigma_{m} = {value:.3e})")]
    RankDeficient { streams: usize, m: usize, value: f64 },
    #[error("water-filling shut off stream {m}; trial cannot carry {streams} streams")]
    StreamShutOff { m: usize, streams: usize },
    #[error("all singular values are zero; degenerate channel")]
    DegenerateChannel,
    #[error("singular values not sorted non-increasing at index {0}")]
    UnsortedSigma(usize),
    #[error("need at least {want} singular values, got {got}")]
    TooFewSigma { got: usize, want: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Modem(#[from] ModemError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Precoder, equalizer, per-stream power fractions, and the SVD of the
/// cascaded channel they were derived from.
#[derive(Debug, Clone)]
pub struct LinkDesign {
    /// Transmit precoder, `n_tx` x `n_streams`, `||F||_F^2 = n_streams`.
    pub precoder: CMatrix,
    /// Receive equalizer, `n_streams` x `n_rx`. Includes the `sqrt(N_s/P)`
    /// compensation of the transmit scaling, so the noiseless end-to-end map
    /// is exactly the identity on the active streams.
    pub equalizer: CMatrix,
    /// Water-filling power fractions, summing to `n_streams`.
    pub power_fractions: Vec<f64>,
    /// Thin SVD of the cascaded channel used for the design.
    pub svd: SvdFactors,
}

impl LinkDesign {
    /// Applies the equalizer to a received vector.
    pub fn equalize(&self, received: &[Complex64]) -> Vec<Complex64> {
        let z = &self.equalizer;
        (0..z.rows())
            .map(|m| (0..z.cols()).map(|r| z[(m, r)] * received[r]).sum())
            .collect()
    }
}

/// Outcome of the phase optimization: final angles, the objective after the
/// initial point and each sweep, and the number of sweeps run.
#[derive(Debug, Clone)]
pub struct PhaseOptReport {
    pub theta: PhaseConfig,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// Hermitian coupling matrix `C` with `v^H C v = ||H^H diag(v) G||_F^2`,
/// built from the Gram matrices of both hops.
fn coupling_matrix(csi: &ChannelPair) -> CMatrix {
    let k = csi.n_ris();
    let g = &csi.tx_ris;
    let h = &csi.ris_rx;
    // A = G G^H, B = H H^H; C_{kl} = conj(A_{kl} B_{lk}).
    let mut c = CMatrix::zeros(k, k);
    for row in 0..k {
        for col in 0..k {
            let mut a = Complex64::ZERO;
            for t in 0..g.cols() {
                a += g[(row, t)] * g[(col, t)].conj();
            }
            let mut b = Complex64::ZERO;
            for r in 0..h.cols() {
                b += h[(col, r)] * h[(row, r)].conj();
            }
            c[(row, col)] = (a * b).conj();
        }
    }
    c
}

fn quadratic_form(c: &CMatrix, v: &[Complex64]) -> f64 {
    let mut acc = Complex64::ZERO;
    for k in 0..v.len() {
        for l in 0..v.len() {
            acc += v[k].conj() * c[(k, l)] * v[l];
        }
    }
    acc.re
}

/// Total path gain `tr(H^H Theta G G^H Theta^H H)` of the cascaded channel
/// for the given phases.
pub fn path_gain_objective(csi: &ChannelPair, theta: &PhaseConfig) -> Result<f64, ModelBasedError> {
    if theta.len() != csi.n_ris() {
        return Err(NumericsError::DimensionMismatch(format!(
            "phase count {} != RIS elements {}",
            theta.len(),
            csi.n_ris()
        ))
        .into());
    }
    Ok(quadratic_form(&coupling_matrix(csi), &theta.coefficients()))
}

/// Maximizes the path gain by cyclic coordinate ascent with the closed-form
/// per-element update `theta_k = arg(sum_{l != k} C_{kl} v_l)`.
///
/// Each update is the exact maximizer of the objective in its coordinate, so
/// the objective trace is non-decreasing. Stops when one full sweep improves
/// the objective by less than `tol` relative, or after `max_iter` sweeps.
/// Phases are initialized uniformly at random from `rng`.
pub fn optimize_phases(
    csi: &ChannelPair,
    max_iter: usize,
    tol: f64,
    rng: &mut impl Rng,
) -> PhaseOptReport {
    let init = PhaseConfig::random(csi.n_ris(), rng);
    optimize_phases_from(csi, init, max_iter, tol)
}

/// Coordinate ascent from a caller-supplied starting point.
pub fn optimize_phases_from(
    csi: &ChannelPair,
    init: PhaseConfig,
    max_iter: usize,
    tol: f64,
) -> PhaseOptReport {
    let c = coupling_matrix(csi);
    let k = init.len();
    let mut v = init.coefficients();
    let mut trace = vec![quadratic_form(&c, &v)];
    let mut iterations = 0;
    for _ in 0..max_iter {
        for i in 0..k {
            let mut w = Complex64::ZERO;
            for l in 0..k {
                if l != i {
                    w += c[(i, l)] * v[l];
                }
            }
            let norm = w.norm();
            if norm > 0.0 {
                v[i] = w / norm;
            }
        }
        iterations += 1;
        let obj = quadratic_form(&c, &v);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(obj);
        if obj - prev <= tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let angles = v.iter().map(|z| z.arg()).collect();
    PhaseOptReport {
        theta: PhaseConfig::new(angles).expect("arg() lies in [-pi, pi]"),
        objective_trace: trace,
        iterations,
    }
}

/// Water-filling power fractions `p_m = max(0, mu - N_s sigma2 / (P lambda_m^2))`
/// with `mu` found by bisection so that the fractions sum to `n_streams`.
pub fn water_filling(
    sigma: &[f64],
    power: f64,
    n_streams: usize,
    sigma2: f64,
) -> Result<Vec<f64>, ModelBasedError> {
    if sigma.len() < n_streams {
        return Err(ModelBasedError::TooFewSigma { got: sigma.len(), want: n_streams });
    }
    for i in 1..sigma.len() {
        if sigma[i] > sigma[i - 1] {
            return Err(ModelBasedError::UnsortedSigma(i));
        }
    }
    let ns = n_streams as f64;
    // Cost of activating stream m; infinite for a dead eigenmode.
    let costs: Vec<f64> = sigma[..n_streams]
        .iter()
        .map(|&l| if l > 0.0 { ns * sigma2 / (power * l * l) } else { f64::INFINITY })
        .collect();
    let min_cost = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    if !min_cost.is_finite() {
        return Err(ModelBasedError::DegenerateChannel);
    }
    let allocated = |mu: f64| -> f64 {
        costs.iter().map(|&c| (mu - c).max(0.0)).sum()
    };
    let mut lo = min_cost;
    let mut hi = ns + min_cost;
    // widen against rounding when costs dwarf ns
    while allocated(hi) < ns {
        hi = 2.0 * hi + 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if allocated(mid) < ns {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Close the last gap exactly on the bracketed active set.
    let active: Vec<usize> = (0..n_streams).filter(|&m| hi > costs[m]).collect();
    let mu = (ns + active.iter().map(|&m| costs[m]).sum::<f64>()) / active.len() as f64;
    Ok(costs.iter().map(|&c| (mu - c).max(0.0)).collect())
}

/// Builds precoder and equalizer from the cascaded channel of the given CSI
/// and phases: the precoder takes the leading right singular vectors scaled
/// by the water-filling fractions; the equalizer inverts the resulting
/// diagonal so that, without noise, the stream estimates equal the inputs.
pub fn design_link(
    csi: &ChannelPair,
    theta: &PhaseConfig,
    power: f64,
    sigma2: f64,
    n_streams: usize,
) -> Result<LinkDesign, ModelBasedError> {
    let cascade = effective_channel(csi, theta)?;
    let factors = svd(&cascade)?;
    if factors.sigma.len() < n_streams {
        return Err(ModelBasedError::TooFewSigma {
            got: factors.sigma.len(),
            want: n_streams,
        });
    }
    let tail = factors.sigma[n_streams - 1];
    if tail <= 1e-12 {
        return Err(ModelBasedError::RankDeficient {
            streams: n_streams,
            m: n_streams,
            value: tail,
        });
    }
    let fractions = water_filling(&factors.sigma, power, n_streams, sigma2)?;
    if let Some(m) = fractions.iter().position(|&p| p == 0.0) {
        return Err(ModelBasedError::StreamShutOff { m: m + 1, streams: n_streams });
    }
    let v = &factors.v;
    let precoder =
        CMatrix::from_fn(v.rows(), n_streams, |r, m| v[(r, m)] * fractions[m].sqrt());
    // Z = sqrt(N_s/P) (Sigma_Ns P^{1/2})^{-1} U_Ns^H; the leading factor
    // compensates the sqrt(P/N_s) transmit scaling.
    let comp = (n_streams as f64 / power).sqrt();
    let u = &factors.u;
    let equalizer = CMatrix::from_fn(n_streams, u.rows(), |m, r| {
        u[(r, m)].conj() * (comp / (factors.sigma[m] * fractions[m].sqrt()))
    });
    Ok(LinkDesign { precoder, equalizer, power_fractions: fractions, svd: factors })
}

/// How the trial picks its RIS phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseSelection {
    /// Coordinate-ascent path-gain maximization on the estimated CSI.
    CoordinateAscent,
    /// Uniform random phases (the baseline bound).
    Random,
}

/// Configuration of one model-based link simulation.
#[derive(Debug, Clone)]
pub struct ModelBasedConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_streams: usize,
    pub n_ris: usize,
    pub mod_order: usize,
    pub power: f64,
    pub sigma2: f64,
    pub sigma_e: f64,
    pub phase_max_iter: usize,
    pub phase_tol: f64,
    pub phase_selection: PhaseSelection,
}

impl Default for ModelBasedConfig {
    /// The 4x2 system with two streams, 16 RIS elements, BPSK, total power 4,
    /// noise set for 5 dB SNR, and 200 ascent sweeps.
    fn default() -> Self {
        ModelBasedConfig {
            n_tx: 4,
            n_rx: 2,
            n_streams: 2,
            n_ris: 16,
            mod_order: 2,
            power: 4.0,
            sigma2: 4.0 / 10f64.powf(0.5),
            sigma_e: 0.0,
            phase_max_iter: 200,
            phase_tol: 1e-6,
            phase_selection: PhaseSelection::CoordinateAscent,
        }
    }
}

impl ModelBasedConfig {
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.sigma2 = self.power / 10f64.powf(snr_db / 10.0);
        self
    }

    pub fn bits_per_trial(&self) -> usize {
        self.n_streams * self.mod_order.trailing_zeros() as usize
    }
}

/// Runs one trial: draw channels, corrupt CSI, pick phases and design the
/// link from the estimates, transmit random bits through the true channels,
/// equalize and detect. Returns transmitted and detected bits.
pub fn run_modelbased_trial(
    config: &ModelBasedConfig,
    rng: &mut impl Rng,
) -> Result<(Vec<u8>, Vec<u8>), ModelBasedError> {
    let truth = sample_channels(rng, config.n_ris, config.n_tx, config.n_rx);
    let estimate = corrupt_csi(&truth, &CsiModel::new(config.sigma_e)?, rng);
    let theta = match config.phase_selection {
        PhaseSelection::CoordinateAscent => {
            optimize_phases(&estimate, config.phase_max_iter, config.phase_tol, rng).theta
        }
        PhaseSelection::Random => PhaseConfig::random(config.n_ris, rng),
    };
    let design = design_link(&estimate, &theta, config.power, config.sigma2, config.n_streams)?;
    let constellation = make_constellation(config.mod_order)?;
    let bits_tx: Vec<u8> =
        (0..config.bits_per_trial()).map(|_| rng.random_range(0..2u8)).collect();
    let symbols = modulate(&bits_tx, &constellation, config.n_streams)?;
    let noise = NoiseModel::new(config.sigma2)?;
    let received = apply_ris_link(
        &symbols,
        &design.precoder,
        &truth,
        &theta,
        config.power,
        &noise,
        rng,
    )?;
    let estimates = design.equalize(&received);
    let bits_rx = demodulate_min_distance(&estimates, &constellation);
    Ok((bits_tx, bits_rx))
}
