//! Parameter sweeps over the figures' axes, with per-code identification
//! probabilities, Wilson confidence intervals, and CSV emission.

use super::{
    parallel_trials, run_trial, train_default_svm, train_svm_tree, DecisionMode,
    ExperimentConfig, HarnessError, TrialClassifiers, TrialRecord,
};
use crate::classify::{compute_threshold, CodeLabel};
use crate::features::AntennaPairSet;
use crate::txchain::ModulationScheme;

/// The swept parameter and its values.
#[derive(Debug, Clone)]
pub enum SweepAxis {
    Snr(Vec<f64>),
    SubcarrierCount(Vec<usize>),
    SymbolCount(Vec<usize>),
    /// Receive antennas; the pair set is maximized at each point.
    RxAntennas(Vec<usize>),
    Modulation(Vec<ModulationScheme>),
    ClockOffset(Vec<f64>),
    TimingOffset(Vec<i64>),
    FrequencyOffset(Vec<f64>),
    Doppler(Vec<f64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Snr(_) => "snr_db",
            SweepAxis::SubcarrierCount(_) => "n",
            SweepAxis::SymbolCount(_) => "n_b",
            SweepAxis::RxAntennas(_) => "n_r",
            SweepAxis::Modulation(_) => "modulation",
            SweepAxis::ClockOffset(_) => "clock_offset",
            SweepAxis::TimingOffset(_) => "sto",
            SweepAxis::FrequencyOffset(_) => "cfo",
            SweepAxis::Doppler(_) => "doppler",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Snr(v) => v.len(),
            SweepAxis::SubcarrierCount(v) => v.len(),
            SweepAxis::SymbolCount(v) => v.len(),
            SweepAxis::RxAntennas(v) => v.len(),
            SweepAxis::Modulation(v) => v.len(),
            SweepAxis::ClockOffset(v) => v.len(),
            SweepAxis::TimingOffset(v) => v.len(),
            SweepAxis::FrequencyOffset(v) => v.len(),
            SweepAxis::Doppler(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies point `idx` to a copy of the base config; returns the label
    /// written into the CSV's axis column.
    fn apply(&self, cfg: &mut ExperimentConfig, idx: usize) -> Result<String, HarnessError> {
        Ok(match self {
            SweepAxis::Snr(v) => {
                cfg.snr_db = v[idx];
                format!("{}", v[idx])
            }
            SweepAxis::SubcarrierCount(v) => {
                cfg.n = v[idx];
                format!("{}", v[idx])
            }
            SweepAxis::SymbolCount(v) => {
                cfg.n_b = v[idx];
                format!("{}", v[idx])
            }
            SweepAxis::RxAntennas(v) => {
                cfg.n_r = v[idx];
                cfg.pairs = AntennaPairSet::full(v[idx])
                    .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
                format!("{}", v[idx])
            }
            SweepAxis::Modulation(v) => {
                cfg.modulation = v[idx];
                format!("{:?}", v[idx])
            }
            SweepAxis::ClockOffset(v) => {
                cfg.impairments.clock_offset = v[idx];
                format!("{}", v[idx])
            }
            SweepAxis::TimingOffset(v) => {
                cfg.impairments.sto = v[idx];
                format!("{}", v[idx])
            }
            SweepAxis::FrequencyOffset(v) => {
                cfg.impairments.cfo = v[idx];
                format!("{}", v[idx])
            }
            SweepAxis::Doppler(v) => {
                cfg.impairments.doppler = v[idx];
                format!("{}", v[idx])
            }
        })
    }
}

/// One (axis point, code, algorithm) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: String,
    pub code: String,
    pub algorithm: String,
    pub pr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: usize,
    pub failures: usize,
}

/// All rows of one sweep, in deterministic order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis_name: String,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// CSV with the fixed column set; formatting is deterministic so a
    /// sweep re-run with the same master seed emits identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis,code,algorithm,pr,ci_low,ci_high,trials,failures\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{},{}\n",
                row.axis,
                row.code,
                row.algorithm,
                row.pr,
                row.ci_low,
                row.ci_high,
                row.trials,
                row.failures
            ));
        }
        out
    }
}

/// Wilson 95% score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

struct CodeOutcome {
    correct: usize,
    decided: usize,
    failures: usize,
}

fn tally(records: &[TrialRecord], pick: impl Fn(&TrialRecord) -> Option<CodeLabel>) -> CodeOutcome {
    let mut correct = 0;
    let mut decided = 0;
    let mut failures = 0;
    for r in records {
        if r.failure.is_some() {
            failures += 1;
            continue;
        }
        if let Some(label) = pick(r) {
            decided += 1;
            if label == r.true_code {
                correct += 1;
            }
        }
    }
    CodeOutcome {
        correct,
        decided,
        failures,
    }
}

/// Runs the full sweep: for every axis point and every code in the config's
/// code set, `cfg.trials` seeded trials, classified by the configured
/// algorithm(s). Emits per-code rows plus an aggregate row (the mean
/// correct-identification probability over the code set).
pub fn run_sweep(base: &ExperimentConfig, axis: &SweepAxis) -> Result<SweepResult, HarnessError> {
    let mut rows = Vec::new();
    for idx in 0..axis.len() {
        let mut cfg = base.clone();
        let label = axis.apply(&mut cfg, idx)?;
        cfg.validate()?;

        let eta = if cfg.algorithm.runs_ht() {
            Some(compute_threshold(cfg.pr_false_alarm, cfg.dof())?)
        } else {
            None
        };
        // Models are retrained at every axis point: the feature's null law
        // depends on N, N_b, and D.
        let svm_model = if cfg.algorithm.runs_svm() && cfg.mode == DecisionMode::Binary {
            Some(train_default_svm(&cfg)?)
        } else {
            None
        };
        let svm_tree = if cfg.algorithm.runs_svm() && cfg.mode == DecisionMode::Tree {
            Some(train_svm_tree(&cfg)?)
        } else {
            None
        };
        let classifiers = TrialClassifiers {
            ht_threshold: eta,
            svm: svm_model.as_ref(),
            svm_tree: svm_tree.as_ref(),
        };

        let mut aggregates: Vec<(&'static str, Vec<CodeOutcome>)> = Vec::new();
        if cfg.algorithm.runs_ht() {
            aggregates.push(("ht", Vec::new()));
        }
        if cfg.algorithm.runs_svm() {
            aggregates.push(("svm", Vec::new()));
        }

        for &code in &cfg.codes {
            let records =
                parallel_trials(cfg.trials, |t| run_trial(&cfg, code, t, &classifiers));
            for (alg, outcomes) in aggregates.iter_mut() {
                let outcome = match *alg {
                    "ht" => tally(&records, |r| r.ht_decision),
                    _ => tally(&records, |r| r.svm_decision),
                };
                let pr = if outcome.decided > 0 {
                    outcome.correct as f64 / outcome.decided as f64
                } else {
                    0.0
                };
                let (lo, hi) = wilson_interval(outcome.correct, outcome.decided);
                rows.push(SweepRow {
                    axis: label.clone(),
                    code: code.name().to_string(),
                    algorithm: alg.to_string(),
                    pr,
                    ci_low: lo,
                    ci_high: hi,
                    trials: outcome.decided,
                    failures: outcome.failures,
                });
                outcomes.push(outcome);
            }
        }

        for (alg, outcomes) in &aggregates {
            let correct: usize = outcomes.iter().map(|o| o.correct).sum();
            let decided: usize = outcomes.iter().map(|o| o.decided).sum();
            let failures: usize = outcomes.iter().map(|o| o.failures).sum();
            let pr = if decided > 0 {
                correct as f64 / decided as f64
            } else {
                0.0
            };
            let (lo, hi) = wilson_interval(correct, decided);
            rows.push(SweepRow {
                axis: label.clone(),
                code: "aggregate".to_string(),
                algorithm: alg.to_string(),
                pr,
                ci_low: lo,
                ci_high: hi,
                trials: decided,
                failures,
            });
        }
    }
    Ok(SweepResult {
        axis_name: axis.name().to_string(),
        rows,
    })
}

/// Convenience accessor: the row for (axis value, code, algorithm).
impl SweepResult {
    pub fn find(&self, axis: &str, code: &str, algorithm: &str) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.axis == axis && r.code == code && r.algorithm == algorithm)
    }
}
