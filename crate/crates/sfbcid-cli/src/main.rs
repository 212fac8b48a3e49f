//! Command-line front end: simulate captures, run sweeps, train SVM models,
//! classify IQ files, tabulate theory curves, and report flops.
//!
//! Configuration resolves in three layers: built-in defaults, then an
//! optional TOML config file (`--config`), then individual flags. The
//! `SFBCID_WORKERS` environment variable caps the worker pool.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sfbcid::classify::{CodeLabel, SvmModel, SvmTreeModels};
use sfbcid::features::{AntennaPairSet, GroupingConfig};
use sfbcid::harness::{
    classify_capture, flops_report, load_config_file, parse_code, parse_modulation, run_sweep,
    simulate_capture, theory_curves, train_default_svm, train_svm_tree, Algorithm,
    CaptureClassifier, DecisionMode, ExperimentConfig, SweepAxis,
};

#[derive(Parser)]
#[command(name = "sfbcid", about = "Blind space-frequency block code identification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Args, Clone)]
struct CommonOpts {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Codes to simulate (SM, SM3, AL, SFBC1, SFBC2).
    #[arg(long, value_delimiter = ',')]
    codes: Option<Vec<String>>,
    /// Number of OFDM sub-carriers.
    #[arg(long)]
    n: Option<usize>,
    /// Cyclic prefix length in samples.
    #[arg(long)]
    nu: Option<usize>,
    /// Observed OFDM symbols per capture.
    #[arg(long = "n-b")]
    n_b: Option<usize>,
    /// Receive antennas.
    #[arg(long = "n-r")]
    n_r: Option<usize>,
    /// Number of groups G for the chi-square statistic.
    #[arg(long)]
    g: Option<usize>,
    /// Modulation (BPSK, QPSK, 8PSK, 16QAM, 64QAM, ...).
    #[arg(long)]
    modulation: Option<String>,
    /// False-alarm probability for the hypothesis test.
    #[arg(long = "pr-f")]
    pr_false_alarm: Option<f64>,
    /// Signal-to-noise ratio in dB.
    #[arg(long)]
    snr: Option<f64>,
    /// Normalized sampling clock offset in [0, 1).
    #[arg(long)]
    clock_offset: Option<f64>,
    /// Symbol timing offset in samples (positive = late FFT window).
    #[arg(long)]
    sto: Option<i64>,
    /// Carrier frequency offset as a fraction of sub-carrier spacing.
    #[arg(long)]
    cfo: Option<f64>,
    /// Maximum Doppler frequency normalized to the sampling rate.
    #[arg(long)]
    doppler: Option<f64>,
    /// Monte Carlo trials per point.
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed for all random streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Classifier(s): ht, svm, or both.
    #[arg(long)]
    algorithm: Option<String>,
    /// Use the four-code decision tree instead of SM-vs-AL.
    #[arg(long)]
    tree: bool,
}

impl CommonOpts {
    fn build(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let partial = load_config_file(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            partial.apply_to(&mut cfg)?;
        }
        if let Some(codes) = &self.codes {
            cfg.codes = codes
                .iter()
                .map(|c| parse_code(c))
                .collect::<Result<_, _>>()?;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(nu) = self.nu {
            cfg.nu = nu;
        }
        if let Some(v) = self.n_b {
            cfg.n_b = v;
        }
        if let Some(v) = self.n_r {
            cfg.n_r = v;
            cfg.pairs = AntennaPairSet::full(v)?;
        }
        if let Some(g) = self.g {
            cfg.grouping = GroupingConfig::new(g);
        }
        if let Some(m) = &self.modulation {
            cfg.modulation = parse_modulation(m)?;
        }
        if let Some(p) = self.pr_false_alarm {
            cfg.pr_false_alarm = p;
        }
        if let Some(s) = self.snr {
            cfg.snr_db = s;
        }
        if let Some(v) = self.clock_offset {
            cfg.impairments.clock_offset = v;
        }
        if let Some(v) = self.sto {
            cfg.impairments.sto = v;
        }
        if let Some(v) = self.cfo {
            cfg.impairments.cfo = v;
        }
        if let Some(v) = self.doppler {
            cfg.impairments.doppler = v;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(a) = &self.algorithm {
            cfg.algorithm = a.parse::<Algorithm>().map_err(anyhow::Error::msg)?;
        }
        if self.tree {
            cfg.mode = DecisionMode::Tree;
        }
        for warning in cfg.validate()? {
            eprintln!("warning: {warning}");
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one capture and write it as an IQ file plus metadata.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        /// Code to transmit.
        #[arg(long, default_value = "AL")]
        code: String,
        /// Trial index within the seeded stream.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Output IQ path; metadata goes to `<output>.meta`.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Sweep one parameter and write per-code identification rates as CSV.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Axis: snr, n, n-b, n-r, modulation, clock-offset, sto, cfo, doppler.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<String>,
        /// Output CSV path (stdout if omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train the SVM classifier(s) and write model file(s).
    TrainSvm {
        #[command(flatten)]
        common: CommonOpts,
        /// Output model path; tree mode appends `-sfbc1/-sfbc2/-al`.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Classify an IQ capture.
    Classify {
        #[command(flatten)]
        common: CommonOpts,
        /// Capture path (expects `<path>.meta` alongside).
        capture: PathBuf,
        /// Trained model for the SVM path.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Tree-node models (SFBC1, SFBC2, AL order) for the SVM tree.
        #[arg(long, num_args = 3)]
        tree_models: Option<Vec<PathBuf>>,
    },
    /// Tabulate the analytical identification-probability curves.
    Theory {
        #[command(flatten)]
        common: CommonOpts,
        /// SNR grid in dB.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr_grid: Vec<f64>,
        /// False-alarm probabilities to evaluate.
        #[arg(long = "pr-f-grid", value_delimiter = ',', default_value = "0.001")]
        pr_f: Vec<f64>,
        /// Seed of the fixed channel draw.
        #[arg(long, default_value_t = 1)]
        channel_seed: u64,
        /// Output CSV path (stdout if omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Report the dominant per-trial cost of both algorithms.
    Flops {
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn parse_axis(axis: &str, values: &[String]) -> Result<SweepAxis> {
    fn nums<T: std::str::FromStr>(values: &[String]) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        values
            .iter()
            .map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("{v}: {e}")))
            .collect()
    }
    Ok(match axis {
        "snr" => SweepAxis::Snr(nums(values)?),
        "n" => SweepAxis::SubcarrierCount(nums(values)?),
        "n-b" => SweepAxis::SymbolCount(nums(values)?),
        "n-r" => SweepAxis::RxAntennas(nums(values)?),
        "modulation" => SweepAxis::Modulation(
            values
                .iter()
                .map(|v| parse_modulation(v).map_err(anyhow::Error::from))
                .collect::<Result<_>>()?,
        ),
        "clock-offset" => SweepAxis::ClockOffset(nums(values)?),
        "sto" => SweepAxis::TimingOffset(nums(values)?),
        "cfo" => SweepAxis::FrequencyOffset(nums(values)?),
        "doppler" => SweepAxis::Doppler(nums(values)?),
        other => bail!("unknown sweep axis '{other}'"),
    })
}

fn write_or_print(path: &Option<PathBuf>, contents: &str) -> Result<()> {
    match path {
        Some(p) => {
            std::fs::write(p, contents).with_context(|| format!("writing {}", p.display()))?;
            eprintln!("wrote {}", p.display());
        }
        None => print!("{contents}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            common,
            code,
            trial,
            output,
        } => {
            let cfg = common.build()?;
            let code = parse_code(&code)?;
            simulate_capture(&cfg, code, trial, &output)?;
            eprintln!(
                "wrote {} ({} antennas, {} symbols of {}+{} samples)",
                output.display(),
                cfg.n_r,
                cfg.n_b,
                cfg.nu,
                cfg.n
            );
        }
        Command::Sweep {
            common,
            axis,
            values,
            output,
        } => {
            let cfg = common.build()?;
            let axis = parse_axis(&axis, &values)?;
            if axis.is_empty() {
                bail!("no axis values given");
            }
            let result = run_sweep(&cfg, &axis)?;
            write_or_print(&output, &result.to_csv())?;
        }
        Command::TrainSvm { common, output } => {
            let cfg = common.build()?;
            if cfg.mode == DecisionMode::Tree {
                let models = train_svm_tree(&cfg)?;
                for (suffix, model) in [
                    ("sfbc1", &models.sfbc1),
                    ("sfbc2", &models.sfbc2),
                    ("al", &models.al),
                ] {
                    let path = with_suffix(&output, suffix);
                    model.save(&path)?;
                    eprintln!("wrote {}", path.display());
                }
            } else {
                let model = train_default_svm(&cfg)?;
                model.save(&output)?;
                eprintln!(
                    "wrote {} (w = {:.6}, b = {:.6}, boundary T = {:.3})",
                    output.display(),
                    model.weight,
                    model.bias,
                    model.boundary()
                );
            }
        }
        Command::Classify {
            common,
            capture,
            model,
            tree_models,
        } => {
            let cfg = common.build()?;
            let classifier = resolve_classifier(&cfg, &model, &tree_models)?;
            let report = classify_capture(&capture, &classifier)?;
            for (name, value) in &report.statistics {
                println!("{name} = {value:.6}");
            }
            if let Some(eta) = report.threshold {
                println!("threshold = {eta:.6}");
            }
            println!("decision: {}", report.label);
        }
        Command::Theory {
            common,
            snr_grid,
            pr_f,
            channel_seed,
            output,
        } => {
            let cfg = common.build()?;
            if snr_grid.is_empty() {
                bail!("empty SNR grid");
            }
            let result = theory_curves(&cfg, &pr_f, &snr_grid, channel_seed)?;
            write_or_print(&output, &result.to_csv())?;
        }
        Command::Flops { common } => {
            let cfg = common.build()?;
            println!("{}", flops_report(&cfg)?);
        }
    }
    Ok(())
}

fn with_suffix(path: &PathBuf, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "model".to_string());
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}-{suffix}{ext}"))
}

fn resolve_classifier(
    cfg: &ExperimentConfig,
    model_path: &Option<PathBuf>,
    tree_paths: &Option<Vec<PathBuf>>,
) -> Result<CaptureClassifier> {
    let wants_svm = cfg.algorithm.runs_svm();
    if wants_svm {
        if cfg.mode == DecisionMode::Tree {
            let Some(paths) = tree_paths else {
                bail!("SVM tree classification needs --tree-models <sfbc1> <sfbc2> <al>");
            };
            let models = SvmTreeModels {
                sfbc1: SvmModel::load(&paths[0])?,
                sfbc2: SvmModel::load(&paths[1])?,
                al: SvmModel::load(&paths[2])?,
            };
            for (model, positive) in [
                (&models.sfbc1, CodeLabel::Sfbc1),
                (&models.sfbc2, CodeLabel::Sfbc2),
                (&models.al, CodeLabel::Al),
            ] {
                if model.positive != positive {
                    bail!("tree model order must be SFBC1, SFBC2, AL");
                }
                if model.d != cfg.pairs.d() {
                    bail!(
                        "model trained for D = {}, configuration has D = {}",
                        model.d,
                        cfg.pairs.d()
                    );
                }
            }
            Ok(CaptureClassifier::SvmTree {
                models,
                pairs: cfg.pairs.clone(),
            })
        } else {
            let Some(path) = model_path else {
                bail!("SVM classification needs --model <file>");
            };
            let model = SvmModel::load(path)?;
            if model.d != cfg.pairs.d() {
                bail!(
                    "model trained for D = {}, configuration has D = {}",
                    model.d,
                    cfg.pairs.d()
                );
            }
            Ok(CaptureClassifier::Svm {
                model,
                pairs: cfg.pairs.clone(),
            })
        }
    } else if cfg.mode == DecisionMode::Tree {
        Ok(CaptureClassifier::HtTree {
            pr_false_alarm: cfg.pr_false_alarm,
            pairs: cfg.pairs.clone(),
            grouping: cfg.grouping,
        })
    } else {
        Ok(CaptureClassifier::HtBinary {
            pr_false_alarm: cfg.pr_false_alarm,
            pairs: cfg.pairs.clone(),
            grouping: cfg.grouping,
        })
    }
}
