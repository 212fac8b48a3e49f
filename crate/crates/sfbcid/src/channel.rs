//! Frequency-selective Rayleigh fading, calibrated AWGN, and receiver
//! impairments.
//!
//! The channel between each transmit/receive antenna pair is an independent
//! tapped delay line with circularly-symmetric Gaussian taps and an
//! exponential power delay profile. With a cyclic prefix at least as long as
//! the channel memory and no impairments, the composite system is exactly
//! diagonal per sub-carrier: `y_k = H_k s_k + w_k`.
//!
//! Impairments are applied in a fixed order so joint sweeps are
//! reproducible: sampling clock offset (a two-path filter `[1 - c, c]`),
//! Doppler (the taps evolve as a sum-of-sinusoids fading process), carrier
//! frequency offset (a per-sample phase ramp), then AWGN. Symbol timing
//! offset shifts the serialized stream and is handled at demodulation.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::txchain::TimeDomainFrame;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("frame has {got} antennas, channel expects {want}")]
    AntennaMismatch { want: usize, got: usize },
    #[error("invalid impairment: {0}")]
    InvalidImpairment(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("timing offset {delta} exceeds one OFDM symbol ({limit})")]
    TimingOffsetTooLarge { delta: i64, limit: usize },
}

/// Per-tap variances of the delay profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDelayProfile {
    variances: Vec<f64>,
}

impl PowerDelayProfile {
    /// Exponential profile `sigma_tau^2 = exp(-tau / 5)`, `tau = 0..l_h-1`.
    pub fn exponential(l_h: usize) -> Self {
        Self {
            variances: (0..l_h).map(|tau| (-(tau as f64) / 5.0).exp()).collect(),
        }
    }

    /// Single unit tap (flat channel).
    pub fn flat() -> Self {
        Self {
            variances: vec![1.0],
        }
    }

    pub fn new(variances: Vec<f64>) -> Result<Self, ChannelError> {
        if variances.is_empty() || variances.iter().any(|&v| !(v > 0.0)) {
            return Err(ChannelError::InvalidConfig(
                "delay profile needs positive tap variances".into(),
            ));
        }
        Ok(Self { variances })
    }

    pub fn len(&self) -> usize {
        self.variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variances.is_empty()
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }
}

impl Default for PowerDelayProfile {
    fn default() -> Self {
        Self::exponential(4)
    }
}

/// One drawn channel: time-domain taps per antenna pair plus the derived
/// per-sub-carrier frequency response.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n: usize,
    /// `taps[tx][rx][tau]`
    taps: Vec<Vec<Vec<Complex64>>>,
    /// `freq[k][rx][tx]`, `k` 0-based
    freq: Vec<Vec<Vec<Complex64>>>,
}

impl ChannelRealization {
    /// Builds a realization from explicit taps (`taps[tx][rx][tau]`) and
    /// precomputes the frequency response for an `n`-sub-carrier grid.
    pub fn from_taps(taps: Vec<Vec<Vec<Complex64>>>, n: usize) -> Self {
        let n_tx = taps.len();
        let n_rx = taps[0].len();
        let mut freq = vec![vec![vec![Complex64::new(0.0, 0.0); n_tx]; n_rx]; n];
        for (tx, per_rx) in taps.iter().enumerate() {
            for (rx, h) in per_rx.iter().enumerate() {
                for k in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (tau, &tap) in h.iter().enumerate() {
                        let phase =
                            -2.0 * std::f64::consts::PI * (k as f64) * (tau as f64) / n as f64;
                        acc += tap * Complex64::from_polar(1.0, phase);
                    }
                    freq[k][rx][tx] = acc;
                }
            }
        }
        Self {
            n_tx,
            n_rx,
            n,
            taps,
            freq,
        }
    }

    /// Channel coefficient `H_k^(tx, rx)` for 1-based sub-carrier `k` and
    /// 1-based antenna indices.
    pub fn coeff(&self, k: usize, tx: usize, rx: usize) -> Complex64 {
        self.freq[k - 1][rx - 1][tx - 1]
    }

    /// Row of `H_k` seen by 1-based receive antenna `rx`: one entry per
    /// transmit antenna.
    pub fn rx_row(&self, k: usize, rx: usize) -> &[Complex64] {
        &self.freq[k - 1][rx - 1]
    }

    pub fn taps(&self, tx: usize, rx: usize) -> &[Complex64] {
        &self.taps[tx][rx]
    }

    pub fn memory(&self) -> usize {
        self.taps[0][0].len()
    }
}

/// Receiver-side impairments. All zero means a perfect receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpairmentConfig {
    /// Normalized sampling clock offset, in `[0, 1)`.
    pub clock_offset: f64,
    /// Symbol timing offset in samples; positive = FFT window starts late.
    pub sto: i64,
    /// Carrier frequency offset as a fraction of the sub-carrier spacing.
    pub cfo: f64,
    /// Maximum Doppler frequency normalized to the sampling rate.
    pub doppler: f64,
}

impl Default for ImpairmentConfig {
    fn default() -> Self {
        Self {
            clock_offset: 0.0,
            sto: 0,
            cfo: 0.0,
            doppler: 0.0,
        }
    }
}

impl ImpairmentConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(0.0..1.0).contains(&self.clock_offset) {
            return Err(ChannelError::InvalidImpairment(format!(
                "clock offset {} outside [0, 1)",
                self.clock_offset
            )));
        }
        if self.doppler < 0.0 {
            return Err(ChannelError::InvalidImpairment(format!(
                "doppler {} must be nonnegative",
                self.doppler
            )));
        }
        Ok(())
    }
}

/// AWGN level. The SNR convention is `10 log10(P / sigma_n^2)` with total
/// transmit power `P = 1`; under the unitary DFT the per-sub-carrier noise
/// variance equals the time-domain variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub variance: f64,
}

impl NoiseConfig {
    pub fn from_snr_db(snr_db: f64) -> Self {
        Self {
            variance: 10f64.powf(-snr_db / 10.0),
        }
    }

    pub fn noiseless() -> Self {
        Self { variance: 0.0 }
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Draws an independent Rayleigh channel: every tap is circularly-symmetric
/// complex Gaussian with the profile's variance.
pub fn draw_channel<R: Rng + ?Sized>(
    n_tx: usize,
    n_rx: usize,
    pdp: &PowerDelayProfile,
    n: usize,
    rng: &mut R,
) -> ChannelRealization {
    let taps = (0..n_tx)
        .map(|_| {
            (0..n_rx)
                .map(|_| {
                    pdp.variances()
                        .iter()
                        .map(|&v| complex_gaussian(rng, v))
                        .collect()
                })
                .collect()
        })
        .collect();
    ChannelRealization::from_taps(taps, n)
}

/// Two-path sampling clock offset filter: `y[t] = (1-c) x[t] + c x[t-1]`.
pub fn apply_clock_offset(samples: &[Complex64], clock_offset: f64) -> Vec<Complex64> {
    if clock_offset == 0.0 {
        return samples.to_vec();
    }
    let mut out = Vec::with_capacity(samples.len());
    let mut prev = Complex64::new(0.0, 0.0);
    for &x in samples {
        out.push((1.0 - clock_offset) * x + clock_offset * prev);
        prev = x;
    }
    out
}

/// Per-sample carrier frequency offset: sample `t` is rotated by
/// `exp(j 2 pi cfo t / n)` on the serialized stream.
pub fn apply_cfo(samples: &[Complex64], cfo: f64, n: usize) -> Vec<Complex64> {
    if cfo == 0.0 {
        return samples.to_vec();
    }
    samples
        .iter()
        .enumerate()
        .map(|(t, &x)| {
            x * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * cfo * t as f64 / n as f64)
        })
        .collect()
}

/// Shifts the serialized stream so every FFT window effectively starts
/// `delta` samples from the true symbol boundary (positive = late). Samples
/// pulled from outside the capture are zero.
pub fn apply_sto(frame: &TimeDomainFrame, delta: i64) -> Result<TimeDomainFrame, ChannelError> {
    let limit = frame.n + frame.nu;
    if delta.unsigned_abs() as usize >= limit {
        return Err(ChannelError::TimingOffsetTooLarge { delta, limit });
    }
    if delta == 0 {
        return Ok(frame.clone());
    }
    let mut out = frame.clone();
    for stream in &mut out.samples {
        let src = stream.clone();
        for (t, slot) in stream.iter_mut().enumerate() {
            let from = t as i64 + delta;
            *slot = if from >= 0 && (from as usize) < src.len() {
                src[from as usize]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }
    Ok(out)
}

/// One sum-of-sinusoids fading process: 16 equal-power sinusoids with
/// Jakes-spaced arrival angles (plus a random rotation) and uniform phases.
struct SumOfSinusoids {
    /// Per-sinusoid normalized frequency, `2 pi f_d cos(alpha_m)`.
    omegas: [f64; 16],
    phases: [f64; 16],
    amplitude: f64,
}

impl SumOfSinusoids {
    fn draw<R: Rng + ?Sized>(doppler: f64, variance: f64, rng: &mut R) -> Self {
        const M: usize = 16;
        let rotation: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let mut omegas = [0.0; M];
        let mut phases = [0.0; M];
        for m in 0..M {
            let alpha = 2.0 * std::f64::consts::PI * (m as f64 + 0.5) / M as f64 + rotation;
            omegas[m] = 2.0 * std::f64::consts::PI * doppler * alpha.cos();
            phases[m] = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        }
        Self {
            omegas,
            phases,
            amplitude: (variance / M as f64).sqrt(),
        }
    }

    #[cfg_attr(not(test), allow(dead_code))]
    fn value(&self, t: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..16 {
            acc += Complex64::from_polar(1.0, self.omegas[m] * t + self.phases[m]);
        }
        acc * self.amplitude
    }

    /// The process sampled at `t = 0..len`, advanced by per-sinusoid phasor
    /// recurrences (one complex multiply per sinusoid and sample).
    fn sample_series(&self, len: usize) -> Vec<Complex64> {
        let mut states: Vec<Complex64> = self
            .phases
            .iter()
            .map(|&p| Complex64::from_polar(1.0, p))
            .collect();
        let steps: Vec<Complex64> = self
            .omegas
            .iter()
            .map(|&w| Complex64::from_polar(1.0, w))
            .collect();
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let sum: Complex64 = states.iter().sum();
            out.push(sum * self.amplitude);
            for (s, step) in states.iter_mut().zip(&steps) {
                *s *= step;
            }
        }
        out
    }
}

/// Time-varying convolution: each tap evolves as a sum-of-sinusoids process
/// with maximum normalized Doppler `doppler`, preserving the tap variances.
/// With `doppler == 0` this is bit-identical to the static convolution.
pub fn apply_doppler<R: Rng + ?Sized>(
    frame: &TimeDomainFrame,
    ch: &ChannelRealization,
    doppler: f64,
    pdp: &PowerDelayProfile,
    rng: &mut R,
) -> Result<Vec<Vec<Complex64>>, ChannelError> {
    if frame.n_antennas() != ch.n_tx {
        return Err(ChannelError::AntennaMismatch {
            want: ch.n_tx,
            got: frame.n_antennas(),
        });
    }
    if doppler == 0.0 {
        return Ok(convolve_static(frame, ch));
    }
    let len = frame.samples[0].len();
    let l_h = ch.memory();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); len]; ch.n_rx];
    for tx in 0..ch.n_tx {
        for rx in 0..ch.n_rx {
            for tau in 0..l_h {
                let process = SumOfSinusoids::draw(doppler, pdp.variances()[tau], rng);
                let taps = process.sample_series(len);
                let x = &frame.samples[tx];
                let y = &mut out[rx];
                for t in tau..len {
                    y[t] += taps[t] * x[t - tau];
                }
            }
        }
    }
    Ok(out)
}

/// Static linear convolution of the frame with the channel taps.
fn convolve_static(frame: &TimeDomainFrame, ch: &ChannelRealization) -> Vec<Vec<Complex64>> {
    let len = frame.samples[0].len();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); len]; ch.n_rx];
    for tx in 0..ch.n_tx {
        for rx in 0..ch.n_rx {
            let h = ch.taps(tx, rx);
            let x = &frame.samples[tx];
            let y = &mut out[rx];
            for (tau, &tap) in h.iter().enumerate() {
                if tap == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for t in tau..len {
                    y[t] += tap * x[t - tau];
                }
            }
        }
    }
    out
}

/// Runs the full receive path: clock offset, (possibly time-varying)
/// channel, CFO, timing offset, then AWGN of total variance
/// `noise.variance` per receive antenna.
///
/// `noise_rng` and `doppler_rng` are separate streams so that toggling
/// Doppler does not change the noise realization.
pub fn apply_channel<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    frame: &TimeDomainFrame,
    ch: &ChannelRealization,
    noise: NoiseConfig,
    imp: &ImpairmentConfig,
    pdp: &PowerDelayProfile,
    noise_rng: &mut R1,
    doppler_rng: &mut R2,
) -> Result<TimeDomainFrame, ChannelError> {
    imp.validate()?;
    if frame.n_antennas() != ch.n_tx {
        return Err(ChannelError::AntennaMismatch {
            want: ch.n_tx,
            got: frame.n_antennas(),
        });
    }

    // Clock offset first: a single shared sampling clock, so the same
    // two-path filter applies to every antenna path.
    let filtered = if imp.clock_offset != 0.0 {
        let samples = frame
            .samples
            .iter()
            .map(|s| apply_clock_offset(s, imp.clock_offset))
            .collect();
        TimeDomainFrame {
            samples,
            ..frame.clone()
        }
    } else {
        frame.clone()
    };

    let mut received = apply_doppler(&filtered, ch, imp.doppler, pdp, doppler_rng)?;

    if imp.cfo != 0.0 {
        for stream in &mut received {
            *stream = apply_cfo(stream, imp.cfo, frame.n);
        }
    }

    let mut out = TimeDomainFrame {
        n: frame.n,
        nu: frame.nu,
        n_symbols: frame.n_symbols,
        samples: received,
    };

    if imp.sto != 0 {
        out = apply_sto(&out, imp.sto)?;
    }

    if noise.variance > 0.0 {
        for stream in &mut out.samples {
            for v in stream.iter_mut() {
                *v += complex_gaussian(noise_rng, noise.variance);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::demodulate;
    use crate::txchain::{
        assemble_grid, map_symbols, ofdm_modulate, CodeId, ModulationScheme, OfdmResourceGrid,
        SymbolBlock,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_frame(seed: u64, n: usize, nu: usize, n_b: usize) -> TimeDomainFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks: Vec<SymbolBlock> = (0..n / 2 * n_b)
            .map(|_| SymbolBlock(map_symbols(&mut rng, ModulationScheme::QPSK, 2).unwrap()))
            .collect();
        let grid = assemble_grid(CodeId::Al, &blocks, n, n_b, (0.5f64).sqrt()).unwrap();
        ofdm_modulate(&grid, nu)
    }

    #[test]
    fn flat_profile_gives_constant_frequency_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = draw_channel(2, 2, &PowerDelayProfile::flat(), 16, &mut rng);
        for k in 2..=16 {
            for tx in 1..=2 {
                for rx in 1..=2 {
                    assert!((ch.coeff(k, tx, rx) - ch.coeff(1, tx, rx)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tap_variances_follow_the_profile() {
        let pdp = PowerDelayProfile::default();
        let trials = 10_000;
        let mut acc = vec![0.0; pdp.len()];
        for seed in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = draw_channel(1, 1, &pdp, 4, &mut rng);
            for (tau, &t) in ch.taps(0, 0).iter().enumerate() {
                acc[tau] += t.norm_sqr();
            }
        }
        for (tau, &sum) in acc.iter().enumerate() {
            let want = pdp.variances()[tau];
            let got = sum / trials as f64;
            // 3 sigma of the sample mean of an exponential-ish variate.
            let tol = 3.0 * want / (trials as f64).sqrt();
            assert!((got - want).abs() < tol, "tap {tau}: got {got}, want {want}");
        }
    }

    #[test]
    fn same_seed_reproduces_channel() {
        let pdp = PowerDelayProfile::default();
        let mut a = ChaCha8Rng::seed_from_u64(77);
        let mut b = ChaCha8Rng::seed_from_u64(77);
        let ca = draw_channel(2, 2, &pdp, 8, &mut a);
        let cb = draw_channel(2, 2, &pdp, 8, &mut b);
        assert_eq!(ca.taps(1, 1), cb.taps(1, 1));
    }

    #[test]
    fn disjoint_seeds_give_uncorrelated_taps() {
        let pdp = PowerDelayProfile::flat();
        let trials = 4000;
        let mut acc = Complex64::new(0.0, 0.0);
        for seed in 0..trials {
            let mut r1 = ChaCha8Rng::seed_from_u64(seed);
            let mut r2 = ChaCha8Rng::seed_from_u64(seed + 1_000_000);
            let c1 = draw_channel(1, 1, &pdp, 2, &mut r1);
            let c2 = draw_channel(1, 1, &pdp, 2, &mut r2);
            acc += c1.taps(0, 0)[0] * c2.taps(0, 0)[0].conj();
        }
        assert!(acc.norm() / (trials as f64) < 3.0 / (trials as f64).sqrt());
    }

    #[test]
    fn noise_free_unit_channel_passes_signal_through() {
        let frame = random_frame(3, 16, 4, 2);
        let ch = ChannelRealization::from_taps(
            vec![
                vec![vec![Complex64::new(1.0, 0.0)], vec![Complex64::new(0.0, 0.0)]],
                vec![vec![Complex64::new(0.0, 0.0)], vec![Complex64::new(1.0, 0.0)]],
            ],
            16,
        );
        let mut nr = ChaCha8Rng::seed_from_u64(0);
        let mut dr = ChaCha8Rng::seed_from_u64(1);
        let out = apply_channel(
            &frame,
            &ch,
            NoiseConfig::noiseless(),
            &ImpairmentConfig::default(),
            &PowerDelayProfile::flat(),
            &mut nr,
            &mut dr,
        )
        .unwrap();
        for ant in 0..2 {
            for (a, b) in frame.samples[ant].iter().zip(&out.samples[ant]) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn noise_only_variance_is_calibrated() {
        let n = 32;
        let grid = OfdmResourceGrid::zeros(1, n, 16);
        let frame = ofdm_modulate(&grid, 4);
        let ch = ChannelRealization::from_taps(vec![vec![vec![Complex64::new(1.0, 0.0)]]], n);
        let noise = NoiseConfig::from_snr_db(3.0);
        let mut acc = 0.0;
        let mut count = 0usize;
        for seed in 0..200 {
            let mut nr = ChaCha8Rng::seed_from_u64(seed);
            let mut dr = ChaCha8Rng::seed_from_u64(seed + 1);
            let out = apply_channel(
                &frame,
                &ch,
                noise,
                &ImpairmentConfig::default(),
                &PowerDelayProfile::flat(),
                &mut nr,
                &mut dr,
            )
            .unwrap();
            let g = demodulate(&out, n, 4, 0).unwrap();
            for m in 0..16 {
                for k in 0..n {
                    acc += g.value(0, k, m).norm_sqr();
                    count += 1;
                }
            }
        }
        let got = acc / count as f64;
        assert!(
            (got - noise.variance).abs() < 0.05 * noise.variance,
            "per-sub-carrier noise variance {got}, want {}",
            noise.variance
        );
    }

    #[test]
    fn noise_free_demodulation_matches_frequency_domain_model() {
        // Multi-tap channel, no impairments: y_k = H_k s_k exactly.
        let n = 32;
        let nu = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let blocks: Vec<SymbolBlock> = (0..n / 2 * 3)
            .map(|_| SymbolBlock(map_symbols(&mut rng, ModulationScheme::QPSK, 2).unwrap()))
            .collect();
        let grid = assemble_grid(CodeId::Al, &blocks, n, 3, 1.0).unwrap();
        let frame = ofdm_modulate(&grid, nu);
        let pdp = PowerDelayProfile::default();
        let ch = draw_channel(2, 2, &pdp, n, &mut rng);
        let mut nr = ChaCha8Rng::seed_from_u64(0);
        let mut dr = ChaCha8Rng::seed_from_u64(1);
        let out = apply_channel(
            &frame,
            &ch,
            NoiseConfig::noiseless(),
            &ImpairmentConfig::default(),
            &pdp,
            &mut nr,
            &mut dr,
        )
        .unwrap();
        let rx = demodulate(&out, n, nu, 0).unwrap();
        for m in 0..3 {
            for k in 1..=n {
                for rx_ant in 1..=2usize {
                    let mut want = Complex64::new(0.0, 0.0);
                    for tx_ant in 1..=2usize {
                        want += ch.coeff(k, tx_ant, rx_ant) * grid.value(tx_ant - 1, k - 1, m);
                    }
                    let got = rx.value(rx_ant - 1, k - 1, m);
                    assert!(
                        (got - want).norm() < 1e-9,
                        "k = {k}, m = {m}: got {got}, want {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn antenna_mismatch_is_rejected() {
        let frame = random_frame(3, 16, 4, 1);
        let ch = ChannelRealization::from_taps(vec![vec![vec![Complex64::new(1.0, 0.0)]]], 16);
        let mut nr = ChaCha8Rng::seed_from_u64(0);
        let mut dr = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            apply_channel(
                &frame,
                &ch,
                NoiseConfig::noiseless(),
                &ImpairmentConfig::default(),
                &PowerDelayProfile::flat(),
                &mut nr,
                &mut dr,
            ),
            Err(ChannelError::AntennaMismatch { want: 1, got: 2 })
        ));
    }

    #[test]
    fn clock_offset_basics() {
        let x: Vec<Complex64> = (0..8).map(|t| Complex64::new(t as f64, 0.0)).collect();
        assert_eq!(apply_clock_offset(&x, 0.0), x);

        let mut impulse = vec![Complex64::new(0.0, 0.0); 8];
        impulse[3] = Complex64::new(1.0, 0.0);
        let out = apply_clock_offset(&impulse, 0.5);
        assert!((out[3] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((out[4] - Complex64::new(0.5, 0.0)).norm() < 1e-15);

        // Energy on an impulse equals the two-tap filter gain.
        let varsigma = 0.999;
        let out = apply_clock_offset(&impulse, varsigma);
        let energy: f64 = out.iter().map(|v| v.norm_sqr()).sum();
        let gain = (1.0 - varsigma) * (1.0 - varsigma) + varsigma * varsigma;
        assert!((energy - gain).abs() < 1e-12);
    }

    #[test]
    fn sto_zero_is_identity_and_bounds_are_checked() {
        let frame = random_frame(4, 16, 4, 2);
        assert_eq!(apply_sto(&frame, 0).unwrap(), frame);
        assert!(matches!(
            apply_sto(&frame, 20),
            Err(ChannelError::TimingOffsetTooLarge { .. })
        ));
    }

    #[test]
    fn sto_inside_cp_is_a_pure_phase_ramp() {
        // Early window (delta < 0) on a flat channel: bin k (0-based) picks
        // up exp(j 2 pi k delta / N) relative to the aligned window. Verified
        // against the DFT shift theorem evaluated directly.
        let n = 16;
        let nu = 4;
        let frame = random_frame(9, n, nu, 2);
        let delta = -2i64;
        let shifted = apply_sto(&frame, delta).unwrap();
        let aligned = demodulate(&frame, n, nu, 0).unwrap();
        let late = demodulate(&shifted, n, nu, 0).unwrap();
        for m in 0..2 {
            for k in 0..n {
                let want = aligned.value(0, k, m)
                    * Complex64::from_polar(
                        1.0,
                        2.0 * std::f64::consts::PI * k as f64 * delta as f64 / n as f64,
                    );
                let got = late.value(0, k, m);
                assert!((got - want).norm() < 1e-10, "k = {k}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn cfo_zero_is_identity_and_integer_cfo_shifts_bins() {
        let x: Vec<Complex64> = (0..8).map(|t| Complex64::new(t as f64, 1.0)).collect();
        assert_eq!(apply_cfo(&x, 0.0, 8), x);

        // Single symbol, no CP: a full sub-carrier offset circularly shifts
        // the demodulated grid by one bin.
        let n = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut grid = OfdmResourceGrid::zeros(1, n, 1);
        for k in 0..n {
            grid.set(0, k, 0, map_symbols(&mut rng, ModulationScheme::QPSK, 1).unwrap()[0]);
        }
        let frame = ofdm_modulate(&grid, 0);
        let mut shifted_frame = frame.clone();
        shifted_frame.samples[0] = apply_cfo(&frame.samples[0], 1.0, n);
        let rx = demodulate(&shifted_frame, n, 0, 0).unwrap();
        for k in 0..n {
            let want = grid.value(0, (k + n - 1) % n, 0);
            assert!((rx.value(0, k, 0) - want).norm() < 1e-10);
        }
    }

    #[test]
    fn fractional_cfo_leakage_matches_direct_dft() {
        // One active sub-carrier, fractional offset: compare the pipeline's
        // per-bin leakage against a brute-force DFT of the offset tone.
        let n = 32;
        let k0 = 5usize;
        let cfo = 0.01;
        let mut grid = OfdmResourceGrid::zeros(1, n, 1);
        grid.set(0, k0, 0, Complex64::new(1.0, 0.0));
        let frame = ofdm_modulate(&grid, 0);
        let mut off = frame.clone();
        off.samples[0] = apply_cfo(&frame.samples[0], cfo, n);
        let rx = demodulate(&off, n, 0, 0).unwrap();

        let scale = 1.0 / (n as f64);
        for k in 0..n {
            let mut want = Complex64::new(0.0, 0.0);
            for t in 0..n {
                let phase = 2.0 * std::f64::consts::PI * (k0 as f64 + cfo - k as f64) * t as f64
                    / n as f64;
                want += Complex64::from_polar(scale, phase);
            }
            let got = rx.value(0, k, 0);
            assert!(
                (got.norm_sqr() - want.norm_sqr()).abs() < 0.05 * want.norm_sqr().max(1e-6),
                "bin {k}: got {}, want {}",
                got.norm_sqr(),
                want.norm_sqr()
            );
        }
    }

    #[test]
    fn doppler_zero_is_bit_identical_to_static() {
        let frame = random_frame(6, 16, 4, 2);
        let pdp = PowerDelayProfile::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = draw_channel(2, 2, &pdp, 16, &mut rng);
        let mut d1 = ChaCha8Rng::seed_from_u64(5);
        let moving = apply_doppler(&frame, &ch, 0.0, &pdp, &mut d1).unwrap();
        let static_out = {
            let mut nr = ChaCha8Rng::seed_from_u64(0);
            let mut dr = ChaCha8Rng::seed_from_u64(5);
            apply_channel(
                &frame,
                &ch,
                NoiseConfig::noiseless(),
                &ImpairmentConfig::default(),
                &pdp,
                &mut nr,
                &mut dr,
            )
            .unwrap()
        };
        for (a, b) in moving.iter().zip(&static_out.samples) {
            assert_eq!(a, b);
        }
    }

    fn bessel_j0(x: f64) -> f64 {
        // Series for small arguments, enough for the lags tested here.
        let mut sum = 1.0;
        let mut term = 1.0;
        let x2 = x * x / 4.0;
        for k in 1..60 {
            term *= -x2 / ((k * k) as f64);
            sum += term;
            if term.abs() < 1e-15 {
                break;
            }
        }
        sum
    }

    #[test]
    fn doppler_autocorrelation_follows_jakes_model() {
        let doppler = 5e-3;
        let processes = 4000;
        let lags = [0usize, 20, 50, 100];
        let mut acc = vec![Complex64::new(0.0, 0.0); lags.len()];
        for seed in 0..processes {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = SumOfSinusoids::draw(doppler, 1.0, &mut rng);
            let base = p.value(0.0);
            for (i, &lag) in lags.iter().enumerate() {
                acc[i] += p.value(lag as f64) * base.conj();
            }
        }
        for (i, &lag) in lags.iter().enumerate() {
            let got = acc[i].re / processes as f64;
            let want = bessel_j0(2.0 * std::f64::consts::PI * doppler * lag as f64);
            assert!(
                (got - want).abs() < 0.10,
                "lag {lag}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn doppler_preserves_tap_variance() {
        let processes = 4000;
        let mut acc = 0.0;
        for seed in 0..processes {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = SumOfSinusoids::draw(1e-3, 0.7, &mut rng);
            acc += p.value(123.0).norm_sqr();
        }
        let got = acc / processes as f64;
        assert!((got - 0.7).abs() < 0.05 * 0.7, "tap power {got}");
    }

    #[test]
    fn snr_calibration_through_unit_channel() {
        // Unit channel, SNR = 5 dB: measured signal power over measured
        // noise power matches 10^(SNR/10) within 2%.
        let n = 64;
        let nu = 8;
        let snr_db = 5.0;
        let mut signal_power = 0.0;
        let mut noise_power = 0.0;
        let mut samples = 0usize;
        for seed in 0..150 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let blocks: Vec<SymbolBlock> = (0..n * 4)
                .map(|_| SymbolBlock(map_symbols(&mut rng, ModulationScheme::QPSK, 1).unwrap()))
                .collect();
            let grid = assemble_grid(CodeId::Sm { n_tx: 1 }, &blocks, n, 4, 1.0).unwrap();
            let frame = ofdm_modulate(&grid, nu);
            let ch = ChannelRealization::from_taps(vec![vec![vec![Complex64::new(1.0, 0.0)]]], n);
            let mut nr = ChaCha8Rng::seed_from_u64(seed + 10_000);
            let mut dr = ChaCha8Rng::seed_from_u64(0);
            let noisy = apply_channel(
                &frame,
                &ch,
                NoiseConfig::from_snr_db(snr_db),
                &ImpairmentConfig::default(),
                &PowerDelayProfile::flat(),
                &mut nr,
                &mut dr,
            )
            .unwrap();
            let sps = frame.samples_per_symbol();
            for (clean_sym, noisy_sym) in frame.samples[0]
                .chunks(sps)
                .zip(noisy.samples[0].chunks(sps))
            {
                for t in nu..sps {
                    signal_power += clean_sym[t].norm_sqr();
                    noise_power += (noisy_sym[t] - clean_sym[t]).norm_sqr();
                    samples += 1;
                }
            }
        }
        assert!(samples > 30_000);
        let got = signal_power / noise_power;
        let want = 10f64.powf(snr_db / 10.0);
        assert!(
            (got - want).abs() < 0.02 * want,
            "measured SNR {got}, want {want}"
        );
    }

    #[test]
    fn all_zero_impairments_compose_to_identity() {
        let frame = random_frame(14, 16, 4, 2);
        let n = 16;
        let ident = ImpairmentConfig::default();
        ident.validate().unwrap();
        let ch = ChannelRealization::from_taps(
            vec![
                vec![vec![Complex64::new(1.0, 0.0)], vec![Complex64::new(0.0, 0.0)]],
                vec![vec![Complex64::new(0.0, 0.0)], vec![Complex64::new(1.0, 0.0)]],
            ],
            n,
        );
        let mut nr = ChaCha8Rng::seed_from_u64(0);
        let mut dr = ChaCha8Rng::seed_from_u64(0);
        let out = apply_channel(
            &frame,
            &ch,
            NoiseConfig::noiseless(),
            &ident,
            &PowerDelayProfile::flat(),
            &mut nr,
            &mut dr,
        )
        .unwrap();
        assert_eq!(out.samples, frame.samples);
    }

    #[test]
    fn impairment_validation() {
        let bad = ImpairmentConfig {
            clock_offset: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ImpairmentConfig {
            doppler: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
