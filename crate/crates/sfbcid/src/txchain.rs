//! Transmit chain: constellation mapping, space-frequency block encoding,
//! OFDM resource-grid assembly, and time-domain sample generation.
//!
//! Codewords span `L` consecutive sub-carriers of one OFDM symbol. Four codes
//! are supported:
//!
//! | code  | N_t | L | symbols/block | rate |
//! |-------|-----|---|---------------|------|
//! | SM    | N_t | 1 | N_t           | N_t  |
//! | AL    | 2   | 2 | 2             | 1    |
//! | SFBC1 | 3   | 8 | 4             | 1/2  |
//! | SFBC2 | 3   | 4 | 3             | 3/4  |
//!
//! SM places independent symbol streams on every antenna; AL is the Alamouti
//! code across two sub-carriers; SFBC1 and SFBC2 are the three-antenna
//! orthogonal designs of rate 1/2 and 3/4. The grid uses a unitary DFT
//! convention (1/sqrt(N) both directions) so Parseval holds exactly and the
//! noise variance is identical in time and frequency domains.

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TxError {
    #[error("unsupported modulation: {0}")]
    UnsupportedModulation(String),
    #[error("symbol block has {got} symbols, {code:?} needs {want}")]
    BlockLength { code: CodeId, want: usize, got: usize },
    #[error("codeword span {l} does not divide the {n} sub-carriers")]
    SpanDivisibility { l: usize, n: usize },
    #[error("expected {want} symbol blocks, got {got}")]
    BlockCount { want: usize, got: usize },
}

/// Modulation family and order. The constellation always has unit average
/// symbol energy; transmit power is applied later as a scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModulationScheme {
    Psk(u32),
    Qam(u32),
}

impl ModulationScheme {
    pub const BPSK: Self = Self::Psk(2);
    pub const QPSK: Self = Self::Psk(4);
    pub const QAM16: Self = Self::Qam(16);
    pub const QAM64: Self = Self::Qam(64);

    /// Constellation points with unit average energy.
    pub fn constellation(&self) -> Result<Vec<Complex64>, TxError> {
        match *self {
            ModulationScheme::Psk(m) if matches!(m, 2 | 4 | 8 | 16 | 64) => {
                // Rotate QPSK so the points sit at (+-1 +- j)/sqrt(2).
                let offset = if m == 4 { std::f64::consts::FRAC_PI_4 } else { 0.0 };
                Ok((0..m)
                    .map(|k| {
                        let phase = 2.0 * std::f64::consts::PI * k as f64 / m as f64 + offset;
                        Complex64::from_polar(1.0, phase)
                    })
                    .collect())
            }
            ModulationScheme::Qam(m) if matches!(m, 4 | 16 | 64) => {
                let side = (m as f64).sqrt() as u32;
                // Square QAM with levels +-1, +-3, ...; average energy 2(M-1)/3.
                let norm = (2.0 * (m as f64 - 1.0) / 3.0).sqrt();
                let mut points = Vec::with_capacity(m as usize);
                for i in 0..side {
                    for q in 0..side {
                        let re = (2.0 * i as f64 - side as f64 + 1.0) / norm;
                        let im = (2.0 * q as f64 - side as f64 + 1.0) / norm;
                        points.push(Complex64::new(re, im));
                    }
                }
                Ok(points)
            }
            other => Err(TxError::UnsupportedModulation(format!("{other:?}"))),
        }
    }
}

/// Draws `count` i.i.d. uniformly distributed constellation symbols.
pub fn map_symbols<R: Rng + ?Sized>(
    rng: &mut R,
    scheme: ModulationScheme,
    count: usize,
) -> Result<Vec<Complex64>, TxError> {
    let points = scheme.constellation()?;
    Ok((0..count)
        .map(|_| points[rng.gen_range(0..points.len())])
        .collect())
}

/// One block of data symbols feeding a single codeword.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock(pub Vec<Complex64>);

/// Which space-frequency code the transmitter uses.
///
/// SM carries its antenna count (two by default, three for the
/// decision-tree scenario); the coded schemes fix their own geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeId {
    Sm { n_tx: usize },
    Al,
    Sfbc1,
    Sfbc2,
}

impl CodeId {
    /// Two-antenna spatial multiplexing, the default SM configuration.
    pub fn sm() -> Self {
        CodeId::Sm { n_tx: 2 }
    }

    pub fn n_tx(&self) -> usize {
        match *self {
            CodeId::Sm { n_tx } => n_tx,
            CodeId::Al => 2,
            CodeId::Sfbc1 | CodeId::Sfbc2 => 3,
        }
    }

    /// Sub-carriers spanned by one codeword.
    pub fn span(&self) -> usize {
        match self {
            CodeId::Sm { .. } => 1,
            CodeId::Al => 2,
            CodeId::Sfbc1 => 8,
            CodeId::Sfbc2 => 4,
        }
    }

    /// Data symbols consumed per codeword.
    pub fn symbols_per_block(&self) -> usize {
        match *self {
            CodeId::Sm { n_tx } => n_tx,
            CodeId::Al => 2,
            CodeId::Sfbc1 => 4,
            CodeId::Sfbc2 => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CodeId::Sm { .. } => "SM",
            CodeId::Al => "AL",
            CodeId::Sfbc1 => "SFBC1",
            CodeId::Sfbc2 => "SFBC2",
        }
    }
}

/// Codeword matrix: `n_tx` rows (antennas) by `l` columns (sub-carriers).
#[derive(Debug, Clone, PartialEq)]
pub struct CodewordMatrix {
    pub n_tx: usize,
    pub l: usize,
    entries: Vec<Complex64>,
}

impl CodewordMatrix {
    pub fn entry(&self, antenna: usize, subcarrier: usize) -> Complex64 {
        self.entries[antenna * self.l + subcarrier]
    }

    /// All antenna entries of one column (sub-carrier).
    pub fn column(&self, subcarrier: usize) -> Vec<Complex64> {
        (0..self.n_tx).map(|a| self.entry(a, subcarrier)).collect()
    }
}

/// Encodes a symbol block into its codeword matrix, entrywise scaled by
/// `power_scale`.
pub fn encode(code: CodeId, block: &SymbolBlock, power_scale: f64) -> Result<CodewordMatrix, TxError> {
    let want = code.symbols_per_block();
    if block.0.len() != want {
        return Err(TxError::BlockLength {
            code,
            want,
            got: block.0.len(),
        });
    }
    let x = &block.0;
    let s2 = std::f64::consts::SQRT_2;
    let rows: Vec<Vec<Complex64>> = match code {
        CodeId::Sm { n_tx } => (0..n_tx).map(|a| vec![x[a]]).collect(),
        CodeId::Al => vec![
            vec![x[0], -x[1].conj()],
            vec![x[1], x[0].conj()],
        ],
        CodeId::Sfbc1 => vec![
            vec![
                x[0], -x[1], -x[2], -x[3],
                x[0].conj(), -x[1].conj(), -x[2].conj(), -x[3].conj(),
            ],
            vec![
                x[1], x[0], x[3], -x[2],
                x[1].conj(), x[0].conj(), x[3].conj(), -x[2].conj(),
            ],
            vec![
                x[2], -x[3], x[0], x[1],
                x[2].conj(), -x[3].conj(), x[0].conj(), x[1].conj(),
            ],
        ],
        CodeId::Sfbc2 => {
            let half_a = (-x[0] - x[0].conj() + x[1] - x[1].conj()) / 2.0;
            let half_b = (x[1] + x[1].conj() + x[0] - x[0].conj()) / 2.0;
            vec![
                vec![x[0], -x[1].conj(), x[2].conj() / s2, x[2].conj() / s2],
                vec![x[1], x[0].conj(), x[2].conj() / s2, -x[2].conj() / s2],
                vec![x[2] / s2, x[2] / s2, half_a, half_b],
            ]
        }
    };
    let l = code.span();
    let mut entries = Vec::with_capacity(code.n_tx() * l);
    for row in rows {
        debug_assert_eq!(row.len(), l);
        entries.extend(row.into_iter().map(|v| v * power_scale));
    }
    Ok(CodewordMatrix {
        n_tx: code.n_tx(),
        l,
        entries,
    })
}

/// Complex samples indexed by (antenna, sub-carrier, OFDM symbol).
///
/// Used for both the transmitted grid (one plane per transmit antenna) and
/// the received, demodulated grid (one plane per receive antenna). Storage
/// indices are 0-based; the statistics layer converts from the 1-based
/// sub-carrier convention of the correlation formulas at its boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmResourceGrid {
    pub n_antennas: usize,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    data: Vec<Complex64>,
}

impl OfdmResourceGrid {
    pub fn zeros(n_antennas: usize, n_subcarriers: usize, n_symbols: usize) -> Self {
        Self {
            n_antennas,
            n_subcarriers,
            n_symbols,
            data: vec![Complex64::new(0.0, 0.0); n_antennas * n_subcarriers * n_symbols],
        }
    }

    #[inline]
    fn idx(&self, antenna: usize, subcarrier: usize, symbol: usize) -> usize {
        debug_assert!(antenna < self.n_antennas);
        debug_assert!(subcarrier < self.n_subcarriers);
        debug_assert!(symbol < self.n_symbols);
        (antenna * self.n_symbols + symbol) * self.n_subcarriers + subcarrier
    }

    #[inline]
    pub fn value(&self, antenna: usize, subcarrier: usize, symbol: usize) -> Complex64 {
        self.data[self.idx(antenna, subcarrier, symbol)]
    }

    #[inline]
    pub fn set(&mut self, antenna: usize, subcarrier: usize, symbol: usize, v: Complex64) {
        let i = self.idx(antenna, subcarrier, symbol);
        self.data[i] = v;
    }

    /// Applies a per-sub-carrier phase rotation `exp(j theta[k])`, identical
    /// across antennas and symbols. `theta` is indexed 0-based.
    pub fn rotate_subcarriers(&self, theta: &[f64]) -> Self {
        assert_eq!(theta.len(), self.n_subcarriers);
        let mut out = self.clone();
        for a in 0..self.n_antennas {
            for m in 0..self.n_symbols {
                for k in 0..self.n_subcarriers {
                    let v = self.value(a, k, m) * Complex64::from_polar(1.0, theta[k]);
                    out.set(a, k, m, v);
                }
            }
        }
        out
    }

    pub fn total_energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Lays codewords across the sub-carriers of each OFDM symbol.
///
/// Blocks are consumed in order: symbol 0 takes the first `N/L` blocks,
/// symbol 1 the next `N/L`, and so on.
pub fn assemble_grid(
    code: CodeId,
    blocks: &[SymbolBlock],
    n: usize,
    n_b: usize,
    power_scale: f64,
) -> Result<OfdmResourceGrid, TxError> {
    let l = code.span();
    if n % l != 0 {
        return Err(TxError::SpanDivisibility { l, n });
    }
    let per_symbol = n / l;
    let want = per_symbol * n_b;
    if blocks.len() != want {
        return Err(TxError::BlockCount {
            want,
            got: blocks.len(),
        });
    }
    let mut grid = OfdmResourceGrid::zeros(code.n_tx(), n, n_b);
    for sym in 0..n_b {
        for c in 0..per_symbol {
            let cw = encode(code, &blocks[sym * per_symbol + c], power_scale)?;
            for col in 0..l {
                for ant in 0..code.n_tx() {
                    grid.set(ant, c * l + col, sym, cw.entry(ant, col));
                }
            }
        }
    }
    Ok(grid)
}

/// Recovers the symbol block sequence from a transmit grid (inverse of
/// [`assemble_grid`]). Each data symbol appears unconjugated and unscaled in
/// at least one codeword slot, so extraction is exact.
pub fn disassemble_grid(
    code: CodeId,
    grid: &OfdmResourceGrid,
    power_scale: f64,
) -> Result<Vec<SymbolBlock>, TxError> {
    let l = code.span();
    if grid.n_subcarriers % l != 0 {
        return Err(TxError::SpanDivisibility {
            l,
            n: grid.n_subcarriers,
        });
    }
    let per_symbol = grid.n_subcarriers / l;
    let inv = 1.0 / power_scale;
    let mut blocks = Vec::with_capacity(per_symbol * grid.n_symbols);
    for sym in 0..grid.n_symbols {
        for c in 0..per_symbol {
            let at = |ant: usize, col: usize| grid.value(ant, c * l + col, sym) * inv;
            let x = match code {
                CodeId::Sm { n_tx } => (0..n_tx).map(|a| at(a, 0)).collect(),
                CodeId::Al => vec![at(0, 0), at(1, 0)],
                CodeId::Sfbc1 => vec![at(0, 0), at(1, 0), at(2, 0), at(1, 2)],
                CodeId::Sfbc2 => {
                    vec![at(0, 0), at(1, 0), at(2, 0) * std::f64::consts::SQRT_2]
                }
            };
            blocks.push(SymbolBlock(x));
        }
    }
    Ok(blocks)
}

/// Per-antenna time-domain sample streams with cyclic prefix.
///
/// Each OFDM symbol occupies `nu + n` samples: the last `nu` IFFT outputs
/// copied in front of the `n`-sample body.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomainFrame {
    pub n: usize,
    pub nu: usize,
    pub n_symbols: usize,
    /// `samples[antenna][t]`, length `n_symbols * (n + nu)` each.
    pub samples: Vec<Vec<Complex64>>,
}

impl TimeDomainFrame {
    pub fn n_antennas(&self) -> usize {
        self.samples.len()
    }

    pub fn samples_per_symbol(&self) -> usize {
        self.n + self.nu
    }

    pub fn total_energy(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v.norm_sqr())
            .sum()
    }

    /// Energy excluding cyclic prefixes.
    pub fn body_energy(&self) -> f64 {
        let sps = self.samples_per_symbol();
        self.samples
            .iter()
            .flat_map(|s| s.chunks(sps))
            .flat_map(|sym| sym[self.nu..].iter())
            .map(|v| v.norm_sqr())
            .sum()
    }
}

/// Inverse-transforms each grid symbol to time domain and prepends the
/// cyclic prefix. Unitary scaling: divides by sqrt(N).
pub fn ofdm_modulate(grid: &OfdmResourceGrid, nu: usize) -> TimeDomainFrame {
    let n = grid.n_subcarriers;
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n);
    let scale = 1.0 / (n as f64).sqrt();
    let mut samples = Vec::with_capacity(grid.n_antennas);
    for ant in 0..grid.n_antennas {
        let mut stream = Vec::with_capacity(grid.n_symbols * (n + nu));
        for sym in 0..grid.n_symbols {
            let mut buf: Vec<Complex64> =
                (0..n).map(|k| grid.value(ant, k, sym)).collect();
            ifft.process(&mut buf);
            for v in &mut buf {
                *v *= scale;
            }
            stream.extend_from_slice(&buf[n - nu..]);
            stream.extend_from_slice(&buf);
        }
        samples.push(stream);
    }
    TimeDomainFrame {
        n,
        nu,
        n_symbols: grid.n_symbols,
        samples,
    }
}
