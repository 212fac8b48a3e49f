//! Experiment orchestration: seeded Monte Carlo trials, parameter sweeps,
//! SVM training-set generation, IQ capture classification, and flops
//! accounting.
//!
//! Reproducibility contract: every random stream a trial consumes (data
//! symbols, channel taps, noise, Doppler) is seeded from
//! `(master seed, code, trial index, stream tag)` through a fixed mixing
//! function. Trials are therefore independent work items; parallel and
//! serial execution produce identical results, and a sweep re-run with the
//! same master seed emits byte-identical CSV.

mod config_file;
mod iq;
mod sweep;

pub use config_file::{load_config_file, parse_code, parse_modulation, PartialConfig};
pub use iq::{read_capture, write_capture, IqMeta};
pub use sweep::{run_sweep, wilson_interval, SweepAxis, SweepResult, SweepRow};

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::channel::{
    apply_channel, draw_channel, ChannelError, ImpairmentConfig, NoiseConfig, PowerDelayProfile,
};
use crate::classify::{
    compute_threshold, decision_tree_classify, ht_decide, statistic_kind_name, svm_decision_tree,
    svm_predict, svm_train, svm_train_node, ClassifyError, CodeLabel, SvmModel, SvmTreeModels,
    TrainingSample, TrainingSet,
};
use crate::features::{
    demodulate, statistic_t, statistic_t_c1, statistic_t_c2, statistic_u, AntennaPairSet,
    FeatureError, GroupingConfig, StatKind,
};
use crate::theory::{al_coefficients, pr_al_from_coefficients, TheoryError, TheoryScenario};
use crate::txchain::{
    assemble_grid, map_symbols, ofdm_modulate, CodeId, ModulationScheme, OfdmResourceGrid,
    SymbolBlock, TxError,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("capture file {path}: {message}")]
    Capture { path: String, message: String },
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Which classifier(s) a trial runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Ht,
    Svm,
    Both,
}

impl Algorithm {
    pub fn runs_ht(&self) -> bool {
        matches!(self, Algorithm::Ht | Algorithm::Both)
    }

    pub fn runs_svm(&self) -> bool {
        matches!(self, Algorithm::Svm | Algorithm::Both)
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ht" => Ok(Algorithm::Ht),
            "svm" => Ok(Algorithm::Svm),
            "both" => Ok(Algorithm::Both),
            other => Err(format!("unknown algorithm '{other}'")),
        }
    }
}

/// Two-code decision (SM vs AL) or the four-code decision tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionMode {
    Binary,
    Tree,
}

/// Full parameterization of a Monte Carlo experiment. Defaults follow the
/// standard setup: 512 sub-carriers, 10-sample cyclic prefix, 20 OFDM
/// symbols, 2 receive antennas with both ordered pairs, 8 groups, QPSK,
/// false-alarm probability 1e-3, a 4-tap exponential delay profile, and
/// 1000 trials per point.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub codes: Vec<CodeId>,
    pub n: usize,
    pub nu: usize,
    pub n_b: usize,
    pub n_r: usize,
    pub pairs: AntennaPairSet,
    pub grouping: GroupingConfig,
    pub modulation: ModulationScheme,
    pub pr_false_alarm: f64,
    pub snr_db: f64,
    pub impairments: ImpairmentConfig,
    pub trials: usize,
    pub master_seed: u64,
    pub algorithm: Algorithm,
    pub mode: DecisionMode,
    pub pdp: PowerDelayProfile,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            codes: vec![CodeId::sm(), CodeId::Al],
            n: 512,
            nu: 10,
            n_b: 20,
            n_r: 2,
            pairs: AntennaPairSet::default_pair(),
            grouping: GroupingConfig::default(),
            modulation: ModulationScheme::QPSK,
            pr_false_alarm: 1e-3,
            snr_db: 10.0,
            impairments: ImpairmentConfig::default(),
            trials: 1000,
            master_seed: 0x5fbc_0fd3,
            algorithm: Algorithm::Ht,
            mode: DecisionMode::Binary,
            pdp: PowerDelayProfile::default(),
        }
    }
}

impl ExperimentConfig {
    /// Degrees of freedom of the chi-square statistic, `q = 2DG`.
    pub fn dof(&self) -> usize {
        2 * self.pairs.d() * self.grouping.g
    }

    /// Per-symbol amplitude so the total transmit power across antennas is
    /// one; the rate-1/2 code's conjugate repetition is scaled down by a
    /// further `1/sqrt(2)`.
    pub fn power_scale(code: CodeId) -> f64 {
        let base = (1.0 / code.n_tx() as f64).sqrt();
        match code {
            CodeId::Sfbc1 => base / std::f64::consts::SQRT_2,
            _ => base,
        }
    }

    /// Checks every module precondition; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>, HarnessError> {
        let mut warnings = Vec::new();
        if self.codes.is_empty() {
            return Err(HarnessError::InvalidConfig("empty code set".into()));
        }
        self.grouping
            .validate_for(self.n)
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        for &code in &self.codes {
            if self.n % code.span() != 0 {
                return Err(HarnessError::InvalidConfig(format!(
                    "codeword span {} of {} does not divide N = {}",
                    code.span(),
                    code.name(),
                    self.n
                )));
            }
        }
        if self.pairs.max_antenna() > self.n_r {
            return Err(HarnessError::InvalidConfig(format!(
                "pair set uses antenna {} but N_r = {}",
                self.pairs.max_antenna(),
                self.n_r
            )));
        }
        if !(self.pr_false_alarm > 0.0 && self.pr_false_alarm < 1.0) {
            return Err(HarnessError::InvalidConfig(format!(
                "Pr_f = {} outside (0, 1)",
                self.pr_false_alarm
            )));
        }
        if self.n_b == 0 || self.trials == 0 {
            return Err(HarnessError::InvalidConfig(
                "need at least one symbol and one trial".into(),
            ));
        }
        self.impairments
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        if self.mode == DecisionMode::Tree {
            let n_prime = self.n / self.grouping.g;
            if n_prime % 8 != 0 {
                warnings.push(format!(
                    "N' = {n_prime} is not a multiple of 8; trailing pairs are dropped at the tree nodes"
                ));
            }
        }
        if self.nu + 1 < self.pdp.len() {
            warnings.push(format!(
                "cyclic prefix {} shorter than channel memory {}; inter-symbol interference",
                self.nu,
                self.pdp.len() - 1
            ));
        }
        Ok(warnings)
    }
}

/// Independent random streams consumed by one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    Data = 1,
    Channel = 2,
    Noise = 3,
    Doppler = 4,
    Training = 5,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn code_salt(code: CodeId) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in code.name().bytes() {
        h = (h ^ b as u64).wrapping_mul(0x1000_0000_01b3);
    }
    h ^ (code.n_tx() as u64)
}

/// Derives the seed for one stream of one trial from the master seed.
pub fn derive_seed(master: u64, code: CodeId, trial: u64, tag: StreamTag) -> u64 {
    splitmix(master ^ splitmix(code_salt(code) ^ splitmix(trial) ^ ((tag as u64) << 56)))
}

fn stream_rng(master: u64, code: CodeId, trial: u64, tag: StreamTag) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, code, trial, tag))
}

/// Outcome of one trial. Equality ignores the wall-clock field so that
/// "same seed, same record" is checkable directly.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub seed: u64,
    pub true_code: CodeLabel,
    pub ht_decision: Option<CodeLabel>,
    pub svm_decision: Option<CodeLabel>,
    pub u_value: Option<f64>,
    pub t_value: Option<f64>,
    pub threshold: Option<f64>,
    pub failure: Option<String>,
    pub runtime_micros: u128,
}

impl PartialEq for TrialRecord {
    fn eq(&self, other: &Self) -> bool {
        self.trial_index == other.trial_index
            && self.seed == other.seed
            && self.true_code == other.true_code
            && self.ht_decision == other.ht_decision
            && self.svm_decision == other.svm_decision
            && self.u_value == other.u_value
            && self.t_value == other.t_value
            && self.threshold == other.threshold
            && self.failure == other.failure
    }
}

/// Classifier state shared across the trials of one experiment.
#[derive(Default)]
pub struct TrialClassifiers<'a> {
    pub ht_threshold: Option<f64>,
    pub svm: Option<&'a SvmModel>,
    pub svm_tree: Option<&'a SvmTreeModels>,
}

/// Generates, transmits, impairs, receives, and demodulates one capture.
pub fn simulate_received_grid(
    cfg: &ExperimentConfig,
    code: CodeId,
    trial: u64,
    extra_salt: u64,
) -> Result<OfdmResourceGrid, HarnessError> {
    let master = cfg.master_seed ^ extra_salt;
    let mut data_rng = stream_rng(master, code, trial, StreamTag::Data);
    let per_symbol = cfg.n / code.span();
    let block_count = per_symbol * cfg.n_b;
    let symbols = map_symbols(
        &mut data_rng,
        cfg.modulation,
        block_count * code.symbols_per_block(),
    )?;
    let blocks: Vec<SymbolBlock> = symbols
        .chunks(code.symbols_per_block())
        .map(|c| SymbolBlock(c.to_vec()))
        .collect();
    let grid = assemble_grid(code, &blocks, cfg.n, cfg.n_b, ExperimentConfig::power_scale(code))?;
    let frame = ofdm_modulate(&grid, cfg.nu);

    let mut channel_rng = stream_rng(master, code, trial, StreamTag::Channel);
    let ch = draw_channel(code.n_tx(), cfg.n_r, &cfg.pdp, cfg.n, &mut channel_rng);

    let mut noise_rng = stream_rng(master, code, trial, StreamTag::Noise);
    let mut doppler_rng = stream_rng(master, code, trial, StreamTag::Doppler);
    let received = apply_channel(
        &frame,
        &ch,
        NoiseConfig::from_snr_db(cfg.snr_db),
        &cfg.impairments,
        &cfg.pdp,
        &mut noise_rng,
        &mut doppler_rng,
    )?;
    Ok(demodulate(&received, cfg.n, cfg.nu, 0)?)
}

/// Simulates one capture and writes it as an IQ file with metadata sidecar.
/// Returns the time-domain frame that was written.
pub fn simulate_capture(
    cfg: &ExperimentConfig,
    code: CodeId,
    trial: u64,
    path: &Path,
) -> Result<crate::txchain::TimeDomainFrame, HarnessError> {
    let master = cfg.master_seed;
    let mut data_rng = stream_rng(master, code, trial, StreamTag::Data);
    let per_symbol = cfg.n / code.span();
    let block_count = per_symbol * cfg.n_b;
    let symbols = map_symbols(
        &mut data_rng,
        cfg.modulation,
        block_count * code.symbols_per_block(),
    )?;
    let blocks: Vec<SymbolBlock> = symbols
        .chunks(code.symbols_per_block())
        .map(|c| SymbolBlock(c.to_vec()))
        .collect();
    let grid = assemble_grid(code, &blocks, cfg.n, cfg.n_b, ExperimentConfig::power_scale(code))?;
    let frame = ofdm_modulate(&grid, cfg.nu);
    let mut channel_rng = stream_rng(master, code, trial, StreamTag::Channel);
    let ch = draw_channel(code.n_tx(), cfg.n_r, &cfg.pdp, cfg.n, &mut channel_rng);
    let mut noise_rng = stream_rng(master, code, trial, StreamTag::Noise);
    let mut doppler_rng = stream_rng(master, code, trial, StreamTag::Doppler);
    let received = apply_channel(
        &frame,
        &ch,
        NoiseConfig::from_snr_db(cfg.snr_db),
        &cfg.impairments,
        &cfg.pdp,
        &mut noise_rng,
        &mut doppler_rng,
    )?;
    write_capture(path, &received)?;
    Ok(received)
}

/// Runs one seeded trial end to end: generate, channel, impair, demodulate,
/// statistics, decide. Module errors mark the trial failed instead of
/// aborting the experiment.
pub fn run_trial(
    cfg: &ExperimentConfig,
    code: CodeId,
    trial: u64,
    classifiers: &TrialClassifiers<'_>,
) -> TrialRecord {
    let start = Instant::now();
    let mut record = TrialRecord {
        trial_index: trial,
        seed: derive_seed(cfg.master_seed, code, trial, StreamTag::Data),
        true_code: code.into(),
        ht_decision: None,
        svm_decision: None,
        u_value: None,
        t_value: None,
        threshold: classifiers.ht_threshold,
        failure: None,
        runtime_micros: 0,
    };
    let outcome = (|| -> Result<(), HarnessError> {
        let grid = simulate_received_grid(cfg, code, trial, 0)?;
        if let Some(eta) = classifiers.ht_threshold {
            match cfg.mode {
                DecisionMode::Binary => {
                    let u = statistic_u(&grid, &cfg.pairs, cfg.grouping)?;
                    record.u_value = Some(u.value);
                    record.ht_decision = Some(ht_decide(&u, eta)?);
                }
                DecisionMode::Tree => {
                    let u = statistic_u(&grid, &cfg.pairs, cfg.grouping)?;
                    record.u_value = Some(u.value);
                    record.ht_decision =
                        Some(decision_tree_classify(&grid, &cfg.pairs, cfg.grouping, eta)?);
                }
            }
        }
        match cfg.mode {
            DecisionMode::Binary => {
                if let Some(model) = classifiers.svm {
                    let t = statistic_t(&grid, &cfg.pairs)?;
                    record.t_value = Some(t.value);
                    record.svm_decision = Some(svm_predict(model, &t)?);
                }
            }
            DecisionMode::Tree => {
                if let Some(models) = classifiers.svm_tree {
                    let t = statistic_t(&grid, &cfg.pairs)?;
                    record.t_value = Some(t.value);
                    record.svm_decision = Some(svm_decision_tree(&grid, &cfg.pairs, models)?);
                }
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        record.failure = Some(e.to_string());
    }
    record.runtime_micros = start.elapsed().as_micros();
    record
}

/// Worker count: `SFBCID_WORKERS` if set, otherwise the machine parallelism.
pub fn worker_count() -> usize {
    std::env::var("SFBCID_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Runs `count` independent work items on the worker pool. Results come
/// back ordered by index, so aggregation never depends on scheduling.
pub fn parallel_trials<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    parallel_trials_with(worker_count(), count, f)
}

/// [`parallel_trials`] with an explicit worker count.
pub fn parallel_trials_with<T, F>(workers: usize, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    let workers = workers.min(count.max(1));
    if workers <= 1 {
        return (0..count as u64).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = Vec::with_capacity(count);
    slots.resize_with(count, || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots_ref = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let value = f(i as u64);
                let mut guard = slots_ref.lock().unwrap();
                guard[i] = Some(value);
            });
        }
    });
    slots.into_iter().map(|v| v.unwrap()).collect()
}

/// The SVM training protocol: SNR 0..=15 dB in 1 dB steps, 50 seeded trials
/// per SNR per code, labels attached.
pub const TRAINING_SNR_MIN: i32 = 0;
pub const TRAINING_SNR_MAX: i32 = 15;
pub const TRAINING_TRIALS_PER_SNR: usize = 50;

/// Generates the labeled training set for the two-code SVM.
pub fn generate_training_set(cfg: &ExperimentConfig) -> Result<TrainingSet, HarnessError> {
    generate_training_set_for(cfg, &[CodeId::sm(), CodeId::Al], StatKind::T)
}

/// Training features for the given codes on the requested statistic kind.
pub fn generate_training_set_for(
    cfg: &ExperimentConfig,
    codes: &[CodeId],
    kind: StatKind,
) -> Result<TrainingSet, HarnessError> {
    let mut samples = Vec::new();
    for snr_index in TRAINING_SNR_MIN..=TRAINING_SNR_MAX {
        let mut point = cfg.clone();
        point.snr_db = snr_index as f64;
        for trial in 0..TRAINING_TRIALS_PER_SNR as u64 {
            for &code in codes {
                // Distinct stream from evaluation trials.
                let salt = splitmix(StreamTag::Training as u64 ^ (snr_index as u64) << 8);
                let grid = simulate_received_grid(&point, code, trial, salt)?;
                let stat = match kind {
                    StatKind::T => statistic_t(&grid, &cfg.pairs)?,
                    StatKind::TC1 => statistic_t_c1(&grid, &cfg.pairs)?,
                    StatKind::TC2 => statistic_t_c2(&grid, &cfg.pairs)?,
                    other => {
                        return Err(HarnessError::InvalidConfig(format!(
                            "training on {other:?} is not supported"
                        )))
                    }
                };
                samples.push(TrainingSample {
                    feature: stat.value,
                    label: code.into(),
                });
            }
        }
    }
    Ok(TrainingSet { samples })
}

fn protocol_string(cfg: &ExperimentConfig) -> String {
    format!(
        "snr {TRAINING_SNR_MIN}..{TRAINING_SNR_MAX} dB, {TRAINING_TRIALS_PER_SNR} trials/snr/code, N={}, N_b={}, seed={:#x}",
        cfg.n, cfg.n_b, cfg.master_seed
    )
}

/// Trains the two-code SVM under the standard protocol.
pub fn train_default_svm(cfg: &ExperimentConfig) -> Result<SvmModel, HarnessError> {
    let set = generate_training_set(cfg)?;
    Ok(svm_train(&set, cfg.pairs.d(), &protocol_string(cfg))?)
}

/// Trains the three decision-tree node models. Each node discriminates its
/// code from spatial multiplexing on the node's absolute-value statistic.
pub fn train_svm_tree(cfg: &ExperimentConfig) -> Result<SvmTreeModels, HarnessError> {
    let protocol = protocol_string(cfg);
    let node = |codes: &[CodeId], positive: CodeLabel, kind: StatKind| {
        let set = generate_training_set_for(cfg, codes, kind)?;
        Ok::<SvmModel, HarnessError>(svm_train_node(
            &set,
            positive,
            kind,
            cfg.pairs.d(),
            &protocol,
        )?)
    };
    Ok(SvmTreeModels {
        sfbc1: node(&[CodeId::sm(), CodeId::Sfbc1], CodeLabel::Sfbc1, StatKind::TC1)?,
        sfbc2: node(&[CodeId::sm(), CodeId::Sfbc2], CodeLabel::Sfbc2, StatKind::TC2)?,
        al: node(&[CodeId::sm(), CodeId::Al], CodeLabel::Al, StatKind::T)?,
    })
}

/// How to classify an external capture.
pub enum CaptureClassifier {
    /// Hypothesis test, SM-vs-AL.
    HtBinary { pr_false_alarm: f64, pairs: AntennaPairSet, grouping: GroupingConfig },
    /// Hypothesis-test decision tree over all four codes.
    HtTree { pr_false_alarm: f64, pairs: AntennaPairSet, grouping: GroupingConfig },
    /// Trained two-code SVM; needs no timing-offset metadata.
    Svm { model: SvmModel, pairs: AntennaPairSet },
    /// Trained SVM decision tree.
    SvmTree { models: SvmTreeModels, pairs: AntennaPairSet },
}

/// Classification outcome for one capture.
#[derive(Debug, Clone)]
pub struct CaptureReport {
    pub label: CodeLabel,
    pub statistics: Vec<(String, f64)>,
    pub threshold: Option<f64>,
}

/// Reads an IQ capture, demodulates it, and runs the chosen classifier.
pub fn classify_capture(
    path: &Path,
    classifier: &CaptureClassifier,
) -> Result<CaptureReport, HarnessError> {
    let (frame, meta) = read_capture(path)?;
    let grid = demodulate(&frame, meta.n, meta.nu, 0)?;
    classify_grid(&grid, classifier)
}

/// Classifies an already demodulated grid.
pub fn classify_grid(
    grid: &OfdmResourceGrid,
    classifier: &CaptureClassifier,
) -> Result<CaptureReport, HarnessError> {
    match classifier {
        CaptureClassifier::HtBinary {
            pr_false_alarm,
            pairs,
            grouping,
        } => {
            let q = 2 * pairs.d() * grouping.g;
            let eta = compute_threshold(*pr_false_alarm, q)?;
            let u = statistic_u(grid, pairs, *grouping)?;
            Ok(CaptureReport {
                label: ht_decide(&u, eta)?,
                statistics: vec![(statistic_kind_name(u.kind).to_string(), u.value)],
                threshold: Some(eta),
            })
        }
        CaptureClassifier::HtTree {
            pr_false_alarm,
            pairs,
            grouping,
        } => {
            let q = 2 * pairs.d() * grouping.g;
            let eta = compute_threshold(*pr_false_alarm, q)?;
            let u_c1 = crate::features::statistic_u_c1(grid, pairs, *grouping)?;
            let u_c2 = crate::features::statistic_u_c2(grid, pairs, *grouping)?;
            let u = statistic_u(grid, pairs, *grouping)?;
            Ok(CaptureReport {
                label: crate::classify::tree_decide(u_c1.value, u_c2.value, u.value, eta),
                statistics: vec![
                    ("U_C1".to_string(), u_c1.value),
                    ("U_C2".to_string(), u_c2.value),
                    ("U".to_string(), u.value),
                ],
                threshold: Some(eta),
            })
        }
        CaptureClassifier::Svm { model, pairs } => {
            let t = statistic_t(grid, pairs)?;
            Ok(CaptureReport {
                label: svm_predict(model, &t)?,
                statistics: vec![("T".to_string(), t.value)],
                threshold: None,
            })
        }
        CaptureClassifier::SvmTree { models, pairs } => {
            let t_c1 = statistic_t_c1(grid, pairs)?;
            let t_c2 = statistic_t_c2(grid, pairs)?;
            let t = statistic_t(grid, pairs)?;
            Ok(CaptureReport {
                label: svm_decision_tree(grid, pairs, models)?,
                statistics: vec![
                    ("T_C1".to_string(), t_c1.value),
                    ("T_C2".to_string(), t_c2.value),
                    ("T".to_string(), t.value),
                ],
                threshold: None,
            })
        }
    }
}

/// Dominant per-trial cost of each algorithm in floating-point operations,
/// plus a measured wall-clock figure.
#[derive(Debug, Clone)]
pub struct FlopsReport {
    pub n: usize,
    pub n_b: usize,
    pub d: usize,
    pub ht_flops: u64,
    pub svm_flops: u64,
    pub measured_trial_micros: f64,
}

impl std::fmt::Display for FlopsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "flops model 8*N_b*N*D with N={}, N_b={}, D={}",
            self.n, self.n_b, self.d
        )?;
        writeln!(f, "  HT  : {:>12} flops", self.ht_flops)?;
        writeln!(f, "  SVM : {:>12} flops", self.svm_flops)?;
        write!(
            f,
            "  measured wall-clock per trial: {:.1} us",
            self.measured_trial_micros
        )
    }
}

/// Computes `8 N_b N D` for both algorithms and times a few trials.
pub fn flops_report(cfg: &ExperimentConfig) -> Result<FlopsReport, HarnessError> {
    cfg.validate()?;
    let flops = 8u64 * cfg.n_b as u64 * cfg.n as u64 * cfg.pairs.d() as u64;
    let eta = compute_threshold(cfg.pr_false_alarm, cfg.dof())?;
    let classifiers = TrialClassifiers {
        ht_threshold: Some(eta),
        ..Default::default()
    };
    let reps = 3;
    let start = Instant::now();
    for trial in 0..reps {
        let _ = run_trial(cfg, cfg.codes[0], trial as u64, &classifiers);
    }
    let measured = start.elapsed().as_micros() as f64 / reps as f64;
    Ok(FlopsReport {
        n: cfg.n,
        n_b: cfg.n_b,
        d: cfg.pairs.d(),
        ht_flops: flops,
        svm_flops: flops,
        measured_trial_micros: measured,
    })
}

/// Tabulates the analytical identification probabilities for a seeded
/// random fixed channel: `Pr(SM|SM) = 1 - Pr_f` and the integrated
/// `Pr(AL|AL)` across the SNR grid, one row pair per false-alarm target.
pub fn theory_curves(
    cfg: &ExperimentConfig,
    pr_false_alarms: &[f64],
    snr_grid: &[f64],
    channel_seed: u64,
) -> Result<SweepResult, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(channel_seed);
    let channel = draw_channel(2, 2, &cfg.pdp, cfg.n, &mut rng);
    // The closed theory covers the simplest statistic: one pair, one group.
    let q = 2;
    let mut rows = Vec::new();
    for &pr_f in pr_false_alarms {
        let eta = compute_threshold(pr_f, q)?;
        let algorithm = format!("ht-theory(prf={pr_f})");
        for &snr in snr_grid {
            let scenario = TheoryScenario {
                channel: channel.clone(),
                sigma_s_sq: 0.5,
                sigma_w_sq: NoiseConfig::from_snr_db(snr).variance,
                n: cfg.n,
                n_b: cfg.n_b,
                eta,
            };
            let coeffs = al_coefficients(&scenario)?;
            let pr_al = pr_al_from_coefficients(&coeffs, eta)?;
            let pr_sm = 1.0 - pr_f;
            for (code, pr) in [("SM", pr_sm), ("AL", pr_al)] {
                rows.push(SweepRow {
                    axis: format!("{snr}"),
                    code: code.to_string(),
                    algorithm: algorithm.clone(),
                    pr,
                    ci_low: pr,
                    ci_high: pr,
                    trials: 0,
                    failures: 0,
                });
            }
        }
    }
    Ok(SweepResult {
        axis_name: "snr_db".to_string(),
        rows,
    })
}
