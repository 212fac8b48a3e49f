//! Receiver statistics: OFDM demodulation, cross-correlation estimators,
//! stacked correlation vectors, covariance estimates, and the test
//! statistics that separate the space-frequency codes.
//!
//! The discriminating observable is the conjugation-free cross-correlation
//! between two receive antennas at two sub-carriers,
//!
//! ```text
//! R(k1, k2) = E[ y_k1^(i1) * y_k2^(i2) ],   i1 != i2,
//! ```
//!
//! estimated by averaging over the observed OFDM symbols. Under spatial
//! multiplexing every such correlation vanishes; a space-frequency code
//! leaves a nonzero correlation at its codeword-aligned sub-carrier pairs:
//! lag 1 for the Alamouti code, lag 2 for the rate-3/4 three-antenna code,
//! lag 4 for the rate-1/2 three-antenna code.
//!
//! Real and imaginary parts of the estimators over a pair set `Omega` are
//! stacked into a `2D`-dimensional vector `r(k1, k2)`. Sums of those vectors
//! over codeword-aligned pairs, normalized by the pair count, are
//! asymptotically Gaussian; dividing by a variance estimate taken at
//! *unaligned* pairs (where every code is uncorrelated) produces a quadratic
//! form `U` that is chi-square with `q = 2DG` degrees of freedom exactly
//! when no code structure is present.
//!
//! The `T` statistic repeats the construction on elementwise absolute values
//! of `r`, with the estimated mean removed. Its value still responds to the
//! code structure after an unknown symbol-timing offset has scrambled the
//! estimator phases, which is what the SVM classifier exploits.

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::numerics::{mahalanobis_quadratic, DiagonalCovariance, NumericsError};
use crate::txchain::{OfdmResourceGrid, TimeDomainFrame};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("frame stream length {got} does not match {want} expected samples")]
    FrameLength { want: usize, got: usize },
    #[error("window offset {offset} exceeds one OFDM symbol ({limit})")]
    WindowOffsetTooLarge { offset: i64, limit: usize },
    #[error("sub-carrier index {index} outside 1..={n}")]
    SubcarrierOutOfRange { index: usize, n: usize },
    #[error("antenna index {index} outside 1..={n_antennas}")]
    AntennaOutOfRange { index: usize, n_antennas: usize },
    #[error("invalid antenna pair set: {0}")]
    InvalidPairSet(String),
    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Ordered receive-antenna pairs `(i1, i2)`, `i1 != i2`, 1-based.
///
/// The stacking order of every correlation vector follows this set, sorted
/// lexicographically so covariance diagonals align across `r`, `t`, and the
/// estimated covariances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AntennaPairSet {
    pairs: Vec<(usize, usize)>,
}

impl AntennaPairSet {
    pub fn new(mut pairs: Vec<(usize, usize)>) -> Result<Self, FeatureError> {
        if pairs.is_empty() {
            return Err(FeatureError::InvalidPairSet("empty pair set".into()));
        }
        for &(i1, i2) in &pairs {
            if i1 == i2 || i1 == 0 || i2 == 0 {
                return Err(FeatureError::InvalidPairSet(format!(
                    "pair ({i1}, {i2}) must use distinct 1-based antennas"
                )));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(Self { pairs })
    }

    /// The default pair set `{(1,2), (2,1)}`.
    pub fn default_pair() -> Self {
        Self {
            pairs: vec![(1, 2), (2, 1)],
        }
    }

    /// All ordered pairs over `n_rx` antennas; cardinality `n_rx (n_rx - 1)`.
    pub fn full(n_rx: usize) -> Result<Self, FeatureError> {
        if n_rx < 2 {
            return Err(FeatureError::InvalidPairSet(
                "need at least two receive antennas".into(),
            ));
        }
        let mut pairs = Vec::new();
        for i1 in 1..=n_rx {
            for i2 in 1..=n_rx {
                if i1 != i2 {
                    pairs.push((i1, i2));
                }
            }
        }
        Ok(Self { pairs })
    }

    /// Cardinality `D`.
    pub fn d(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn max_antenna(&self) -> usize {
        self.pairs.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0)
    }
}

/// Number of groups `G` for the chi-square statistic; `N' = N / G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupingConfig {
    pub g: usize,
}

impl GroupingConfig {
    pub fn new(g: usize) -> Self {
        Self { g }
    }

    pub fn validate_for(&self, n: usize) -> Result<(), FeatureError> {
        if self.g == 0 || n % self.g != 0 {
            return Err(FeatureError::InvalidGrouping(format!(
                "G = {} must divide N = {n}",
                self.g
            )));
        }
        let n_prime = n / self.g;
        if n_prime % 2 != 0 {
            return Err(FeatureError::InvalidGrouping(format!(
                "N' = {n_prime} must be even"
            )));
        }
        if n < 5 {
            return Err(FeatureError::InvalidGrouping(format!(
                "N = {n} too small for covariance estimation"
            )));
        }
        Ok(())
    }
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self { g: 8 }
    }
}

/// Which statistic a value came from, with its degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKind {
    U,
    T,
    UC1,
    UC2,
    TC1,
    TC2,
}

/// A computed test statistic: the scalar value and its null degrees of
/// freedom `q` (`2DG` for the chi-square family, `2D` for the absolute-value
/// family).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatisticResult {
    pub value: f64,
    pub dof: usize,
    pub kind: StatKind,
}

/// Strips cyclic prefixes and FFTs every OFDM symbol back to the
/// frequency-domain grid. `window_offset` moves the FFT window relative to
/// the true symbol boundary (positive = late); samples outside the capture
/// read as zero.
pub fn demodulate(
    frame: &TimeDomainFrame,
    n: usize,
    nu: usize,
    window_offset: i64,
) -> Result<OfdmResourceGrid, FeatureError> {
    let sps = n + nu;
    if window_offset.unsigned_abs() as usize >= sps {
        return Err(FeatureError::WindowOffsetTooLarge {
            offset: window_offset,
            limit: sps,
        });
    }
    let want = frame.n_symbols * sps;
    for stream in &frame.samples {
        if stream.len() != want {
            return Err(FeatureError::FrameLength {
                want,
                got: stream.len(),
            });
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let scale = 1.0 / (n as f64).sqrt();
    let mut grid = OfdmResourceGrid::zeros(frame.n_antennas(), n, frame.n_symbols);
    let zero = Complex64::new(0.0, 0.0);
    for (ant, stream) in frame.samples.iter().enumerate() {
        for sym in 0..frame.n_symbols {
            let start = (sym * sps + nu) as i64 + window_offset;
            let mut buf: Vec<Complex64> = (0..n)
                .map(|t| {
                    let i = start + t as i64;
                    if i >= 0 && (i as usize) < stream.len() {
                        stream[i as usize]
                    } else {
                        zero
                    }
                })
                .collect();
            fft.process(&mut buf);
            for (k, v) in buf.into_iter().enumerate() {
                grid.set(ant, k, sym, v * scale);
            }
        }
    }
    Ok(grid)
}

/// Cross-correlation estimator between 1-based receive antennas `i1`, `i2`
/// at 1-based sub-carriers `k1`, `k2`:
/// `(1/N_b) sum_n y_k1^(i1)(n) y_k2^(i2)(n)` — a plain product, no
/// conjugation.
pub fn xcorr_estimate(
    grid: &OfdmResourceGrid,
    i1: usize,
    i2: usize,
    k1: usize,
    k2: usize,
) -> Result<Complex64, FeatureError> {
    let n = grid.n_subcarriers;
    for &k in &[k1, k2] {
        if k == 0 || k > n {
            return Err(FeatureError::SubcarrierOutOfRange { index: k, n });
        }
    }
    for &i in &[i1, i2] {
        if i == 0 || i > grid.n_antennas {
            return Err(FeatureError::AntennaOutOfRange {
                index: i,
                n_antennas: grid.n_antennas,
            });
        }
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..grid.n_symbols {
        acc += grid.value(i1 - 1, k1 - 1, m) * grid.value(i2 - 1, k2 - 1, m);
    }
    Ok(acc / grid.n_symbols as f64)
}

/// Stacks real then imaginary parts of the estimators over the pair set:
/// a `2D`-dimensional real vector.
pub fn stack_r(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    k1: usize,
    k2: usize,
) -> Result<Vec<f64>, FeatureError> {
    let d = pairs.d();
    let mut out = vec![0.0; 2 * d];
    for (p, &(i1, i2)) in pairs.pairs().iter().enumerate() {
        let r = xcorr_estimate(grid, i1, i2, k1, k2)?;
        out[p] = r.re;
        out[d + p] = r.im;
    }
    Ok(out)
}

/// Elementwise absolute value of [`stack_r`]; all entries nonnegative.
pub fn stack_t(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    k1: usize,
    k2: usize,
) -> Result<Vec<f64>, FeatureError> {
    let mut r = stack_r(grid, pairs, k1, k2)?;
    for v in &mut r {
        *v = v.abs();
    }
    Ok(r)
}

/// The three sub-carrier pair alignments probed by the classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairFamily {
    /// `(2j-1, 2j)`: adjacent pairs aligned to Alamouti codewords.
    Lag1,
    /// `(4j-3, 4j-1)` and `(4j-2, 4j)`: lag-2 pairs inside rate-3/4 codewords.
    Lag2,
    /// `(8j-7, 8j-3) .. (8j-4, 8j)`: lag-4 pairs inside rate-1/2 codewords.
    Lag4,
}

impl PairFamily {
    /// Sub-carrier lag at which every code is uncorrelated, used for the
    /// covariance estimate of this family's statistic.
    fn guard_lag(&self) -> usize {
        match self {
            PairFamily::Lag1 => 2,
            PairFamily::Lag2 => 5,
            PairFamily::Lag4 => 9,
        }
    }

    fn u_kind(&self) -> StatKind {
        match self {
            PairFamily::Lag1 => StatKind::U,
            PairFamily::Lag2 => StatKind::UC2,
            PairFamily::Lag4 => StatKind::UC1,
        }
    }

    fn t_kind(&self) -> StatKind {
        match self {
            PairFamily::Lag1 => StatKind::T,
            PairFamily::Lag2 => StatKind::TC2,
            PairFamily::Lag4 => StatKind::TC1,
        }
    }

    /// Codeword-aligned index pairs for group `i` of `g`, 1-based. Groups
    /// partition the band; when the group width does not divide evenly the
    /// trailing remainder is dropped.
    fn group_pairs(&self, n: usize, g: usize, i: usize) -> Result<Vec<(usize, usize)>, FeatureError> {
        let n_prime = n / g;
        let (stride, offsets): (usize, &[(usize, usize)]) = match self {
            PairFamily::Lag1 => (2, &[(1, 0)]),
            PairFamily::Lag2 => (4, &[(3, 1), (2, 0)]),
            PairFamily::Lag4 => (8, &[(7, 3), (6, 2), (5, 1), (4, 0)]),
        };
        let per_group = n_prime / stride;
        if per_group == 0 {
            return Err(FeatureError::InvalidGrouping(format!(
                "N' = {n_prime} holds no complete codeword of span {stride}"
            )));
        }
        let mut out = Vec::with_capacity(per_group * offsets.len());
        for j in (i * per_group + 1)..=((i + 1) * per_group) {
            for &(a, b) in offsets {
                out.push((stride * j - a, stride * j - b));
            }
        }
        Ok(out)
    }
}

/// Covariance estimate from lag-`lag` pairs: the diagonal of
/// `(1 / (N - lag - 1)) * sum_{k=1}^{N-lag} r(k, k+lag) o r(k, k+lag)`.
fn estimate_psi_lag(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    lag: usize,
) -> Result<DiagonalCovariance, FeatureError> {
    let n = grid.n_subcarriers;
    if n < lag + 2 {
        return Err(FeatureError::InvalidGrouping(format!(
            "N = {n} too small for a lag-{lag} covariance estimate"
        )));
    }
    let mut acc = vec![0.0; 2 * pairs.d()];
    for k in 1..=(n - lag) {
        let r = stack_r(grid, pairs, k, k + lag)?;
        for (a, v) in acc.iter_mut().zip(&r) {
            *a += v * v;
        }
    }
    let denom = (n - lag - 1) as f64;
    for a in &mut acc {
        *a /= denom;
    }
    for (i, &a) in acc.iter().enumerate() {
        if a <= 1e-300 {
            return Err(NumericsError::SingularCovariance { index: i, value: a }.into());
        }
    }
    Ok(DiagonalCovariance::new(acc)?)
}

/// Error-covariance estimate of the stacked correlation vector, taken at
/// lag-2 sub-carrier pairs where every code is uncorrelated.
pub fn estimate_psi(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
) -> Result<DiagonalCovariance, FeatureError> {
    estimate_psi_lag(grid, pairs, 2)
}

/// Group sums of stacked correlation vectors at codeword-aligned adjacent
/// pairs, each scaled by the square root of its pair count.
pub fn group_vectors(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    cfg: GroupingConfig,
) -> Result<Vec<Vec<f64>>, FeatureError> {
    cfg.validate_for(grid.n_subcarriers)?;
    group_vectors_family(grid, pairs, cfg.g, PairFamily::Lag1)
}

fn group_vectors_family(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    g: usize,
    family: PairFamily,
) -> Result<Vec<Vec<f64>>, FeatureError> {
    let n = grid.n_subcarriers;
    let dim = 2 * pairs.d();
    let mut vs = Vec::with_capacity(g);
    for i in 0..g {
        let index_pairs = family.group_pairs(n, g, i)?;
        let scale = 1.0 / (index_pairs.len() as f64).sqrt();
        let mut v = vec![0.0; dim];
        for (k1, k2) in index_pairs {
            let r = stack_r(grid, pairs, k1, k2)?;
            for (slot, x) in v.iter_mut().zip(&r) {
                *slot += x;
            }
        }
        for slot in &mut v {
            *slot *= scale;
        }
        vs.push(v);
    }
    Ok(vs)
}

fn u_statistic_family(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    cfg: GroupingConfig,
    family: PairFamily,
) -> Result<StatisticResult, FeatureError> {
    cfg.validate_for(grid.n_subcarriers)?;
    check_pairs(grid, pairs)?;
    let psi = estimate_psi_lag(grid, pairs, family.guard_lag())?;
    let vs = group_vectors_family(grid, pairs, cfg.g, family)?;
    let mut value = 0.0;
    for v in &vs {
        value += mahalanobis_quadratic(v, &psi)?;
    }
    Ok(StatisticResult {
        value,
        dof: 2 * pairs.d() * cfg.g,
        kind: family.u_kind(),
    })
}

fn check_pairs(grid: &OfdmResourceGrid, pairs: &AntennaPairSet) -> Result<(), FeatureError> {
    if pairs.max_antenna() > grid.n_antennas {
        return Err(FeatureError::AntennaOutOfRange {
            index: pairs.max_antenna(),
            n_antennas: grid.n_antennas,
        });
    }
    Ok(())
}

/// Chi-square test statistic `U`: group sums over adjacent codeword-aligned
/// pairs, whitened by the lag-2 covariance estimate. Chi-square with
/// `q = 2DG` degrees of freedom when no space-frequency structure is
/// present.
pub fn statistic_u(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    cfg: GroupingConfig,
) -> Result<StatisticResult, FeatureError> {
    u_statistic_family(grid, pairs, cfg, PairFamily::Lag1)
}

/// Top-level decision-tree statistic: lag-4 pairs inside rate-1/2 codeword
/// spans, whitened at lag 9.
pub fn statistic_u_c1(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    cfg: GroupingConfig,
) -> Result<StatisticResult, FeatureError> {
    u_statistic_family(grid, pairs, cfg, PairFamily::Lag4)
}

/// Middle decision-tree statistic: lag-2 pairs inside rate-3/4 codeword
/// spans, whitened at lag 5.
pub fn statistic_u_c2(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    cfg: GroupingConfig,
) -> Result<StatisticResult, FeatureError> {
    u_statistic_family(grid, pairs, cfg, PairFamily::Lag2)
}

/// Mean of the absolute-value vectors at guard-lag pairs.
fn estimate_mu_lag(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    lag: usize,
) -> Result<Vec<f64>, FeatureError> {
    let n = grid.n_subcarriers;
    if n < lag + 2 {
        return Err(FeatureError::InvalidGrouping(format!(
            "N = {n} too small for a lag-{lag} mean estimate"
        )));
    }
    let mut acc = vec![0.0; 2 * pairs.d()];
    for k in 1..=(n - lag) {
        let t = stack_t(grid, pairs, k, k + lag)?;
        for (a, v) in acc.iter_mut().zip(&t) {
            *a += v;
        }
    }
    let denom = (n - lag) as f64;
    for a in &mut acc {
        *a /= denom;
    }
    Ok(acc)
}

/// Mean vector of the absolute-value stacks at lag-2 pairs.
pub fn estimate_mu(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
) -> Result<Vec<f64>, FeatureError> {
    estimate_mu_lag(grid, pairs, 2)
}

fn estimate_phi_lag(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    mu: &[f64],
    lag: usize,
) -> Result<DiagonalCovariance, FeatureError> {
    let n = grid.n_subcarriers;
    let mut acc = vec![0.0; 2 * pairs.d()];
    for k in 1..=(n - lag) {
        let t = stack_t(grid, pairs, k, k + lag)?;
        for ((a, v), m) in acc.iter_mut().zip(&t).zip(mu) {
            let c = v - m;
            *a += c * c;
        }
    }
    let denom = (n - lag - 1) as f64;
    for a in &mut acc {
        *a /= denom;
    }
    for (i, &a) in acc.iter().enumerate() {
        if a <= 1e-300 {
            return Err(NumericsError::SingularCovariance { index: i, value: a }.into());
        }
    }
    Ok(DiagonalCovariance::new(acc)?)
}

/// Covariance of the centered absolute-value stacks at lag-2 pairs.
pub fn estimate_phi(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    mu: &[f64],
) -> Result<DiagonalCovariance, FeatureError> {
    estimate_phi_lag(grid, pairs, mu, 2)
}

fn t_statistic_family(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    family: PairFamily,
) -> Result<StatisticResult, FeatureError> {
    let n = grid.n_subcarriers;
    check_pairs(grid, pairs)?;
    if n < 5 {
        return Err(FeatureError::InvalidGrouping(format!("N = {n} too small")));
    }
    let lag = family.guard_lag();
    let mu = estimate_mu_lag(grid, pairs, lag)?;
    let phi = estimate_phi_lag(grid, pairs, &mu, lag)?;
    // Single grouping over the whole band.
    let index_pairs = family.group_pairs(n, 1, 0)?;
    let scale = 1.0 / (index_pairs.len() as f64).sqrt();
    let mut q = vec![0.0; 2 * pairs.d()];
    for (k1, k2) in index_pairs {
        let t = stack_t(grid, pairs, k1, k2)?;
        for ((slot, x), m) in q.iter_mut().zip(&t).zip(&mu) {
            *slot += x - m;
        }
    }
    for slot in &mut q {
        *slot *= scale;
    }
    let value = mahalanobis_quadratic(&q, &phi)?;
    Ok(StatisticResult {
        value,
        dof: 2 * pairs.d(),
        kind: family.t_kind(),
    })
}

/// Absolute-value test statistic `T`: centered absolute-value stacks summed
/// over adjacent codeword-aligned pairs, whitened by their lag-2 covariance.
/// Non-central chi-square with `2D` degrees of freedom under spatial
/// multiplexing, with a noncentrality set by the mean-estimation error.
pub fn statistic_t(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
) -> Result<StatisticResult, FeatureError> {
    t_statistic_family(grid, pairs, PairFamily::Lag1)
}

/// Absolute-value analogue of the top decision-tree statistic (lag-4 pairs).
pub fn statistic_t_c1(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
) -> Result<StatisticResult, FeatureError> {
    t_statistic_family(grid, pairs, PairFamily::Lag4)
}

/// Absolute-value analogue of the middle decision-tree statistic (lag-2
/// pairs).
pub fn statistic_t_c2(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
) -> Result<StatisticResult, FeatureError> {
    t_statistic_family(grid, pairs, PairFamily::Lag2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel, ChannelRealization, PowerDelayProfile};
    use crate::txchain::{
        assemble_grid, map_symbols, ofdm_modulate, CodeId, ModulationScheme, SymbolBlock,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Builds a received grid directly from the frequency-domain model
    /// `y_k = H_k s_k + w_k`. The equivalence of this model with the full
    /// time-domain pipeline is established by the channel tests.
    fn received_grid(
        code: CodeId,
        ch: &ChannelRealization,
        sigma_s: f64,
        sigma_w_sq: f64,
        n: usize,
        n_b: usize,
        rng: &mut ChaCha8Rng,
    ) -> OfdmResourceGrid {
        let blocks: Vec<SymbolBlock> = (0..n / code.span() * n_b)
            .map(|_| {
                SymbolBlock(
                    map_symbols(rng, ModulationScheme::QPSK, code.symbols_per_block()).unwrap(),
                )
            })
            .collect();
        let tx = assemble_grid(code, &blocks, n, n_b, sigma_s).unwrap();
        let mut rx = OfdmResourceGrid::zeros(ch.n_rx, n, n_b);
        let noise_scale = (sigma_w_sq / 2.0).sqrt();
        for m in 0..n_b {
            for k in 1..=n {
                for rx_ant in 1..=ch.n_rx {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for tx_ant in 1..=ch.n_tx {
                        acc += ch.coeff(k, tx_ant, rx_ant) * tx.value(tx_ant - 1, k - 1, m);
                    }
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    acc += Complex64::new(re * noise_scale, im * noise_scale);
                    rx.set(rx_ant - 1, k - 1, m, acc);
                }
            }
        }
        rx
    }

    #[test]
    fn demodulate_inverts_modulate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let blocks: Vec<SymbolBlock> = (0..8 * 3)
            .map(|_| SymbolBlock(map_symbols(&mut rng, ModulationScheme::QAM16, 2).unwrap()))
            .collect();
        let grid = assemble_grid(CodeId::Al, &blocks, 16, 3, 1.0).unwrap();
        let frame = ofdm_modulate(&grid, 4);
        let back = demodulate(&frame, 16, 4, 0).unwrap();
        for a in 0..2 {
            for k in 0..16 {
                for m in 0..3 {
                    assert!((back.value(a, k, m) - grid.value(a, k, m)).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn demodulate_window_offset_equals_stream_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let blocks: Vec<SymbolBlock> = (0..8 * 2)
            .map(|_| SymbolBlock(map_symbols(&mut rng, ModulationScheme::QPSK, 2).unwrap()))
            .collect();
        let grid = assemble_grid(CodeId::Al, &blocks, 16, 2, 1.0).unwrap();
        let frame = ofdm_modulate(&grid, 4);
        let shifted = crate::channel::apply_sto(&frame, -3).unwrap();
        let a = demodulate(&shifted, 16, 4, 0).unwrap();
        let b = demodulate(&frame, 16, 4, -3).unwrap();
        for k in 0..16 {
            assert!((a.value(0, k, 0) - b.value(0, k, 0)).norm() < 1e-12);
        }
    }

    #[test]
    fn demodulate_checks_lengths_and_offsets() {
        let frame = TimeDomainFrame {
            n: 8,
            nu: 2,
            n_symbols: 2,
            samples: vec![vec![Complex64::new(0.0, 0.0); 19]],
        };
        assert!(matches!(
            demodulate(&frame, 8, 2, 0),
            Err(FeatureError::FrameLength { want: 20, got: 19 })
        ));
        let frame = TimeDomainFrame {
            n: 8,
            nu: 2,
            n_symbols: 1,
            samples: vec![vec![Complex64::new(0.0, 0.0); 10]],
        };
        assert!(matches!(
            demodulate(&frame, 8, 2, 10),
            Err(FeatureError::WindowOffsetTooLarge { .. })
        ));
        let zero = demodulate(&frame, 8, 2, 0).unwrap();
        assert_eq!(zero.value(0, 3, 0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn xcorr_single_symbol_is_plain_product() {
        let mut grid = OfdmResourceGrid::zeros(2, 4, 1);
        grid.set(0, 0, 0, Complex64::new(2.0, 1.0));
        grid.set(1, 1, 0, Complex64::new(0.5, -0.5));
        let r = xcorr_estimate(&grid, 1, 2, 1, 2).unwrap();
        assert_eq!(r, Complex64::new(2.0, 1.0) * Complex64::new(0.5, -0.5));
    }

    #[test]
    fn xcorr_product_symmetry_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = draw_channel(2, 2, &PowerDelayProfile::default(), 16, &mut rng);
        let grid = received_grid(CodeId::Al, &ch, 1.0, 0.5, 16, 7, &mut rng);
        for (k1, k2) in [(1, 2), (3, 5), (16, 1)] {
            let a = xcorr_estimate(&grid, 1, 2, k1, k2).unwrap();
            let b = xcorr_estimate(&grid, 2, 1, k2, k1).unwrap();
            assert_eq!(a, b);
        }
        assert!(xcorr_estimate(&grid, 1, 2, 0, 1).is_err());
        assert!(xcorr_estimate(&grid, 1, 3, 1, 2).is_err());
    }

    #[test]
    fn xcorr_vanishes_for_sm_and_matches_formula_for_al() {
        let n = 8;
        let n_b = 100_000;
        let sigma_s: f64 = (0.5f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ch = draw_channel(2, 2, &PowerDelayProfile::default(), n, &mut rng);

        let sm = received_grid(CodeId::sm(), &ch, sigma_s, 0.0, n, n_b, &mut rng);
        let r_sm = xcorr_estimate(&sm, 1, 2, 3, 4).unwrap();

        let al = received_grid(CodeId::Al, &ch, sigma_s, 0.0, n, n_b, &mut rng);
        let r_al = xcorr_estimate(&al, 1, 2, 3, 4).unwrap();
        // Codeword-aligned pair (3, 4): nonzero mean
        // (H_3^(1,1) H_4^(2,2) - H_3^(2,1) H_4^(1,2)) sigma_s^2.
        let want = (ch.coeff(3, 1, 1) * ch.coeff(4, 2, 2)
            - ch.coeff(3, 2, 1) * ch.coeff(4, 1, 2))
            * sigma_s.powi(2);

        // Estimator standard deviation from the error-variance formula scale.
        let tol = 3.0 * (ch.rx_row(3, 1).iter().map(|h| h.norm_sqr()).sum::<f64>()
            * ch.rx_row(4, 2).iter().map(|h| h.norm_sqr()).sum::<f64>()
            * sigma_s.powi(4)
            / n_b as f64)
            .sqrt();
        assert!(r_sm.norm() < tol, "SM correlation {r_sm} exceeds {tol}");
        assert!(
            (r_al - want).norm() < tol,
            "AL correlation {r_al}, want {want}"
        );
        // Off-alignment AL pair (2, 3) spans codewords: uncorrelated.
        let r_off = xcorr_estimate(&al, 1, 2, 2, 3).unwrap();
        assert!(r_off.norm() < tol);
    }

    #[test]
    fn stack_r_layout() {
        let mut grid = OfdmResourceGrid::zeros(2, 4, 1);
        grid.set(0, 0, 0, Complex64::new(1.0, 0.0));
        grid.set(1, 1, 0, Complex64::new(0.0, 1.0));
        let single = AntennaPairSet::new(vec![(1, 2)]).unwrap();
        let r = stack_r(&grid, &single, 1, 2).unwrap();
        assert_eq!(r, vec![0.0, 1.0]);

        let both = AntennaPairSet::default_pair();
        let r = stack_r(&grid, &both, 1, 2).unwrap();
        assert_eq!(r.len(), 4);

        // A real-valued grid puts the whole imaginary half at zero.
        let mut real_grid = OfdmResourceGrid::zeros(2, 4, 1);
        for k in 0..4 {
            real_grid.set(0, k, 0, Complex64::new(1.5, 0.0));
            real_grid.set(1, k, 0, Complex64::new(-0.5, 0.0));
        }
        let r = stack_r(&real_grid, &both, 1, 2).unwrap();
        assert_eq!(&r[2..], &[0.0, 0.0]);
        let t = stack_t(&real_grid, &both, 1, 2).unwrap();
        assert!(t.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn group_vectors_single_group_and_constant_input() {
        // Constant r across pairs: v = sqrt(N'/2) * r.
        let mut grid = OfdmResourceGrid::zeros(2, 8, 1);
        for k in 0..8 {
            grid.set(0, k, 0, Complex64::new(1.0, 0.0));
            grid.set(1, k, 0, Complex64::new(1.0, 1.0));
        }
        let pairs = AntennaPairSet::new(vec![(1, 2)]).unwrap();
        let vs = group_vectors(&grid, &pairs, GroupingConfig::new(1)).unwrap();
        assert_eq!(vs.len(), 1);
        let expect = 2.0; // sqrt(4) * 1.0
        assert!((vs[0][0] - expect).abs() < 1e-12);
        assert!((vs[0][1] - expect).abs() < 1e-12);

        let vs = group_vectors(&grid, &pairs, GroupingConfig::new(2)).unwrap();
        assert_eq!(vs.len(), 2);
        assert!((vs[0][0] - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn grouping_validation() {
        let cfg = GroupingConfig::new(3);
        assert!(cfg.validate_for(16).is_err()); // 3 does not divide 16
        let cfg = GroupingConfig::new(8);
        assert!(cfg.validate_for(16).is_ok());
        assert!(cfg.validate_for(8).is_err()); // N' = 1 odd
    }

    #[test]
    fn normalized_group_vectors_are_standard_normal_under_sm() {
        // With a fixed channel and the true error variance from the
        // closed-form expression, Psi^(-1/2) v should be standard normal.
        let n = 512;
        let n_b = 20;
        let sigma_s: f64 = (0.5f64).sqrt();
        let sigma_w_sq = 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = draw_channel(2, 2, &PowerDelayProfile::default(), n, &mut rng);
        let pairs = AntennaPairSet::new(vec![(1, 2)]).unwrap();

        // Oracle variance: average of the per-pair error variance across the
        // band (both stacked components share it).
        let sigma_eps_sq = {
            let mut acc = 0.0;
            for j in 1..=(n / 2) {
                acc += crate::theory::sigma_epsilon_sq(
                    ch.rx_row(2 * j - 1, 1),
                    ch.rx_row(2 * j, 2),
                    sigma_s.powi(2),
                    sigma_w_sq,
                    n_b,
                );
            }
            acc / (n / 2) as f64
        };

        let trials = 800;
        let mut samples = Vec::with_capacity(trials * 2);
        for seed in 0..trials {
            let mut trial_rng = ChaCha8Rng::seed_from_u64(1000 + seed as u64);
            let grid = received_grid(CodeId::sm(), &ch, sigma_s, sigma_w_sq, n, n_b, &mut trial_rng);
            let vs = group_vectors(&grid, &pairs, GroupingConfig::new(1)).unwrap();
            for &c in &vs[0] {
                samples.push(c / sigma_eps_sq.sqrt());
            }
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks = 0.0f64;
        for (i, &s) in samples.iter().enumerate() {
            let emp = (i + 1) as f64 / samples.len() as f64;
            let model = 1.0 - 0.5 * crate::numerics::erfc(s / std::f64::consts::SQRT_2).unwrap();
            ks = ks.max((emp - model).abs());
        }
        assert!(ks < 0.03, "KS statistic {ks}");
    }

    #[test]
    fn psi_estimate_counting_identity() {
        // All correlation products equal to 1 + j makes every r component 1,
        // so each diagonal entry is (N-2)/(N-3).
        let n = 16;
        let mut grid = OfdmResourceGrid::zeros(2, n, 1);
        for k in 0..n {
            grid.set(0, k, 0, Complex64::new(1.0, 0.0));
            grid.set(1, k, 0, Complex64::new(1.0, 1.0));
        }
        let pairs = AntennaPairSet::default_pair();
        let psi = estimate_psi(&grid, &pairs).unwrap();
        let want = (n as f64 - 2.0) / (n as f64 - 3.0);
        for &d in psi.diag() {
            assert!((d - want).abs() < 1e-12);
        }
    }

    #[test]
    fn psi_estimate_matches_error_variance_formula() {
        let n = 128;
        let n_b = 50;
        let sigma_s: f64 = (0.5f64).sqrt();
        let sigma_w_sq = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ch = draw_channel(2, 2, &PowerDelayProfile::default(), n, &mut rng);
        let pairs = AntennaPairSet::new(vec![(1, 2)]).unwrap();

        let trials = 400;
        let mut acc = vec![0.0; 2];
        for seed in 0..trials {
            let mut trial_rng = ChaCha8Rng::seed_from_u64(7000 + seed as u64);
            let grid = received_grid(CodeId::sm(), &ch, sigma_s, sigma_w_sq, n, n_b, &mut trial_rng);
            let psi = estimate_psi(&grid, &pairs).unwrap();
            for (a, &d) in acc.iter_mut().zip(psi.diag()) {
                *a += d;
            }
        }
        let want = {
            let mut s = 0.0;
            for k in 1..=(n - 2) {
                s += crate::theory::sigma_epsilon_sq(
                    ch.rx_row(k, 1),
                    ch.rx_row(k + 2, 2),
                    sigma_s.powi(2),
                    sigma_w_sq,
                    n_b,
                );
            }
            s / (n - 3) as f64
        };
        for (c, &a) in acc.iter().enumerate() {
            let got = a / trials as f64;
            assert!(
                (got - want).abs() < 0.1 * want,
                "component {c}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn al_guard_lag_statistics_match_sm() {
        // r(k, k+2) has the same distribution under AL as under SM because
        // the lag-2 correlation of the Alamouti code is zero. Two-sample KS.
        let n = 16;
        let n_b = 20;
        let sigma_s = (0.5f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ch = draw_channel(2, 2, &PowerDelayProfile::default(), n, &mut rng);
        let pairs = AntennaPairSet::new(vec![(1, 2)]).unwrap();
        let trials = 600;
        let mut sm_samples = Vec::with_capacity(trials);
        let mut al_samples = Vec::with_capacity(trials);
        for seed in 0..trials {
            let mut r1 = ChaCha8Rng::seed_from_u64(10_000 + seed as u64);
            let g = received_grid(CodeId::sm(), &ch, sigma_s, 0.1, n, n_b, &mut r1);
            sm_samples.push(stack_r(&g, &pairs, 5, 7).unwrap()[0]);
            let mut r2 = ChaCha8Rng::seed_from_u64(20_000 + seed as u64);
            let g = received_grid(CodeId::Al, &ch, sigma_s, 0.1, n, n_b, &mut r2);
            al_samples.push(stack_r(&g, &pairs, 5, 7).unwrap()[0]);
        }
        sm_samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        al_samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks = 0.0f64;
        for (i, &s) in sm_samples.iter().enumerate() {
            let emp_sm = (i + 1) as f64 / trials as f64;
            let emp_al = al_samples.iter().filter(|&&v| v <= s).count() as f64 / trials as f64;
            ks = ks.max((emp_sm - emp_al).abs());
        }
        // 1% two-sample critical value: 1.63 sqrt(2/n).
        let critical = 1.63 * (2.0 / trials as f64).sqrt();
        assert!(ks < critical, "two-sample KS {ks} >= {critical}");
    }

    #[test]
    fn statistic_u_errors_on_zero_grid() {
        let grid = OfdmResourceGrid::zeros(2, 16, 2);
        let pairs = AntennaPairSet::default_pair();
        let r = statistic_u(&grid, &pairs, GroupingConfig::new(1));
        assert!(matches!(
            r,
            Err(FeatureError::Numerics(NumericsError::SingularCovariance { .. }))
        ));
    }

    #[test]
    fn statistic_u_null_mean_and_al_shift() {
        let n = 128;
        let n_b = 20;
        let sigma_s = (0.5f64).sqrt();
        let pairs = AntennaPairSet::default_pair();
        let cfg = GroupingConfig::new(2);
        let trials = 300;
        let mut u_sm = Vec::with_capacity(trials);
        let mut u_al = Vec::with_capacity(trials);
        for seed in 0..trials {
            let mut trial_rng = ChaCha8Rng::seed_from_u64(30_000 + seed as u64);
            let ch = draw_channel(2, 2, &PowerDelayProfile::default(), n, &mut trial_rng);
            let g = received_grid(CodeId::sm(), &ch, sigma_s, 0.05, n, n_b, &mut trial_rng);
            u_sm.push(statistic_u(&g, &pairs, cfg).unwrap().value);
            let g = received_grid(CodeId::Al, &ch, sigma_s, 0.05, n, n_b, &mut trial_rng);
            u_al.push(statistic_u(&g, &pairs, cfg).unwrap().value);
        }
        let q = (2 * pairs.d() * cfg.g) as f64;
        let mean_sm = u_sm.iter().sum::<f64>() / trials as f64;
        // Null mean is q; allow a few standard errors of chi-square spread.
        assert!(
            (mean_sm - q).abs() < 4.0 * (2.0 * q / trials as f64).sqrt() + 0.5,
            "null mean {mean_sm}, expect ~{q}"
        );
        u_al.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median_al = u_al[trials / 2];
        // 0.999 quantile of chi-square with q = 8 dof is ~26.1.
        assert!(median_al > 26.1, "AL median U {median_al}");
    }

    #[test]
    fn statistic_t_properties_under_al() {
        // Median T exceeds median U at moderate SNR, and the lag-2
        // covariance of the absolute stacks never exceeds the raw one.
        let n = 256;
        let n_b = 50;
        let sigma_s = (0.5f64).sqrt();
        let pairs = AntennaPairSet::default_pair();
        let cfg = GroupingConfig::new(8);
        let trials = 200;
        let mut t_vals = Vec::new();
        let mut u_vals = Vec::new();
        let mut psi_mean = vec![0.0; 4];
        let mut phi_mean = vec![0.0; 4];
        for seed in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(40_000 + seed as u64);
            let ch = draw_channel(2, 2, &PowerDelayProfile::default(), n, &mut rng);
            let g = received_grid(CodeId::Al, &ch, sigma_s, 0.05, n, n_b, &mut rng);
            t_vals.push(statistic_t(&g, &pairs).unwrap().value);
            u_vals.push(statistic_u(&g, &pairs, cfg).unwrap().value);
            for (a, &d) in psi_mean.iter_mut().zip(estimate_psi(&g, &pairs).unwrap().diag()) {
                *a += d / trials as f64;
            }
            let mu = estimate_mu(&g, &pairs).unwrap();
            for (a, &d) in phi_mean
                .iter_mut()
                .zip(estimate_phi(&g, &pairs, &mu).unwrap().diag())
            {
                *a += d / trials as f64;
            }
        }
        t_vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        u_vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(
            t_vals[trials / 2] > u_vals[trials / 2],
            "median T {} <= median U {}",
            t_vals[trials / 2],
            u_vals[trials / 2]
        );
        for c in 0..4 {
            assert!(
                psi_mean[c] >= phi_mean[c],
                "component {c}: mean Psi {} < mean Phi {}",
                psi_mean[c],
                phi_mean[c]
            );
        }
    }

    #[test]
    fn estimator_variance_halves_when_symbols_double() {
        let n = 16;
        let sigma_s = (0.5f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ch = draw_channel(2, 2, &PowerDelayProfile::default(), n, &mut rng);
        let pairs = AntennaPairSet::new(vec![(1, 2)]).unwrap();
        let var_at = |n_b: usize, base: u64| {
            let trials = 2000;
            let mut acc = 0.0;
            for seed in 0..trials {
                let mut trial_rng = ChaCha8Rng::seed_from_u64(base + seed as u64);
                let g = received_grid(CodeId::sm(), &ch, sigma_s, 0.1, n, n_b, &mut trial_rng);
                let r = stack_r(&g, &pairs, 3, 4).unwrap();
                acc += r[0] * r[0];
            }
            acc / trials as f64
        };
        let v1 = var_at(25, 50_000);
        let v2 = var_at(50, 60_000);
        let ratio = v1 / v2;
        assert!(
            (ratio - 2.0).abs() < 0.3,
            "variance ratio {ratio}, expected ~2"
        );
    }

    #[test]
    fn tree_statistics_detect_their_codes() {
        let n = 128;
        let n_b = 40;
        let pairs = AntennaPairSet::default_pair();
        let cfg = GroupingConfig::new(2);
        let trials = 120;
        // chi-square 0.999 quantile for q = 8 dof.
        let threshold = 26.12;
        let mut c1_on_sfbc1 = Vec::new();
        let mut c1_on_sfbc2 = Vec::new();
        let mut c2_on_sfbc2 = Vec::new();
        let mut c1_on_sm = Vec::new();
        let mut c2_on_sm = Vec::new();
        for seed in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(70_000 + seed as u64);
            let ch3 = draw_channel(3, 2, &PowerDelayProfile::default(), n, &mut rng);
            let s1 = (1.0f64 / 3.0).sqrt() / std::f64::consts::SQRT_2;
            let g = received_grid(CodeId::Sfbc1, &ch3, s1, 0.05, n, n_b, &mut rng);
            c1_on_sfbc1.push(statistic_u_c1(&g, &pairs, cfg).unwrap().value);
            let s2 = (1.0f64 / 3.0).sqrt();
            let g = received_grid(CodeId::Sfbc2, &ch3, s2, 0.05, n, n_b, &mut rng);
            c1_on_sfbc2.push(statistic_u_c1(&g, &pairs, cfg).unwrap().value);
            c2_on_sfbc2.push(statistic_u_c2(&g, &pairs, cfg).unwrap().value);
            let ch2 = draw_channel(2, 2, &PowerDelayProfile::default(), n, &mut rng);
            let g = received_grid(CodeId::sm(), &ch2, (0.5f64).sqrt(), 0.05, n, n_b, &mut rng);
            c1_on_sm.push(statistic_u_c1(&g, &pairs, cfg).unwrap().value);
            c2_on_sm.push(statistic_u_c2(&g, &pairs, cfg).unwrap().value);
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        assert!(median(&mut c1_on_sfbc1) > threshold);
        assert!(median(&mut c2_on_sfbc2) > threshold);
        // SFBC2 lag-4 pairs straddle codewords: central statistic.
        assert!(median(&mut c1_on_sfbc2) < threshold);
        // SM is central at every node; the mean should sit near q = 8.
        let q = 8.0;
        let m_c1 = c1_on_sm.iter().sum::<f64>() / trials as f64;
        let m_c2 = c2_on_sm.iter().sum::<f64>() / trials as f64;
        assert!((m_c1 - q).abs() < 1.5, "U^C1 null mean {m_c1}");
        assert!((m_c2 - q).abs() < 1.5, "U^C2 null mean {m_c2}");
    }
}
