//! Link-level library for a point-to-point MIMO system assisted by a
//! reconfigurable intelligent surface (RIS).
//!
//! Two transceiver designs are provided over the same fading-channel model:
//!
//! * [`modelbased`] — phase-shift optimization by coordinate ascent on the
//!   total path gain, SVD precoding with water-filling power allocation, and
//!   a diagonalizing equalizer.
//! * [`autoencoder`] — an end-to-end learned system in which the transmitter,
//!   the RIS controller, and the receiver are dense neural networks trained
//!   jointly through the channel.
//!
//! Supporting modules: [`numerics`] (complex matrices and SVD), [`channel`]
//! (fading, CSI error, AWGN, the RIS reflection model), [`modem`] (Gray-coded
//! M-QAM), [`neuralnet`] (dense layers, batch norm, Adam, and the custom
//! power-normalization and channel layers with exact backprop), and [`ber`]
//! (bit-error measurement records).
//!
//! All randomness flows through explicitly seeded sub-streams ([`rng`]) so
//! that every simulation, including parallel Monte Carlo sweeps, is
//! reproducible bit for bit.

pub mod autoencoder;
pub mod ber;
pub mod channel;
pub mod modelbased;
pub mod modem;
pub mod neuralnet;
pub mod numerics;
pub mod rng;
