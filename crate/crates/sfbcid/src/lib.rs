//! Blind identification of space-frequency block codes in MIMO-OFDM signals.
//!
//! The crate contains a full baseband simulator (modulation, SFBC encoding,
//! OFDM framing, frequency-selective Rayleigh fading, receiver impairments)
//! together with two blind classifiers that decide which code a transmitter
//! used from raw received samples alone:
//!
//! * a hypothesis-test classifier built on a chi-square statistic of
//!   cross-correlations between receive antennas at codeword-aligned
//!   sub-carrier pairs, with an analytically calibrated threshold, and
//! * an SVM classifier on an absolute-value variant of the same statistic
//!   that survives timing-offset phase rotations.
//!
//! A theory module predicts the identification probabilities of the
//! hypothesis-test path analytically, and a harness module runs seeded,
//! reproducible Monte Carlo sweeps and reads/writes IQ captures.
//!
//! Module map:
//!
//! * [`numerics`] — special functions, bisection, quadrature.
//! * [`txchain`] — constellations, SFBC encoders, OFDM resource grid, IFFT/CP.
//! * [`channel`] — Rayleigh fading, AWGN calibrated to SNR, impairments.
//! * [`features`] — cross-correlation estimators and the test statistics.
//! * [`classify`] — threshold computation, decisions, decision tree, SVM.
//! * [`theory`] — analytical identification probabilities.
//! * [`harness`] — experiment configs, trials, sweeps, IQ file I/O.

pub mod channel;
pub mod classify;
pub mod features;
pub mod harness;
pub mod numerics;
pub mod theory;
pub mod txchain;

#[cfg(doctest)]
mod book_doctests;

pub use num_complex::Complex64;
