//! Decision layer: threshold calibration, the two-code hypothesis test, the
//! three-level decision tree, and a from-scratch linear SVM on the scalar
//! absolute-value feature.
//!
//! The hypothesis test declares a coded signal whenever the chi-square
//! statistic exceeds a threshold `eta` chosen so that, under the spatial
//! multiplexing null, `Pr(U >= eta)` equals the configured false-alarm
//! probability. Since the null is chi-square with `q = 2DG` degrees of
//! freedom, `eta` solves `F_q(eta) = 1 - Pr_f` and is found by bisection.
//!
//! The decision tree runs three such tests in sequence, one per codeword
//! alignment (lag 4, lag 2, lag 1). All three statistics are chi-square
//! with the same `q` under their respective nulls, so a single `eta` serves
//! every node.
//!
//! The SVM path trains a one-dimensional soft-margin classifier (linear
//! kernel, `C = 1`) on the `T` feature by sequential minimal optimization of
//! the dual, terminating on a duality gap below 1e-6.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    statistic_t, statistic_t_c1, statistic_t_c2, statistic_u, statistic_u_c1, statistic_u_c2,
    AntennaPairSet, FeatureError, GroupingConfig, StatKind, StatisticResult,
};
use crate::numerics::{bisection_solve_expanding, chi_square_cdf, NumericsError, ToleranceConfig};
use crate::txchain::{CodeId, OfdmResourceGrid};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("false-alarm probability {0} outside (0, 1)")]
    InvalidFalseAlarm(f64),
    #[error("degrees of freedom {0} must be even and positive")]
    InvalidDof(usize),
    #[error("statistic kind {got:?} does not fit this decision (expected {want:?})")]
    WrongStatistic { want: StatKind, got: StatKind },
    #[error("training set must contain both classes")]
    SingleClassTraining,
    #[error("model is not trained")]
    UntrainedModel,
    #[error("model was trained for D = {model_d} antenna pairs, statistic has D = {got_d}")]
    PairCountMismatch { model_d: usize, got_d: usize },
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Classifier output label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeLabel {
    Sm,
    Al,
    Sfbc1,
    Sfbc2,
}

impl CodeLabel {
    pub fn name(&self) -> &'static str {
        match self {
            CodeLabel::Sm => "SM",
            CodeLabel::Al => "AL",
            CodeLabel::Sfbc1 => "SFBC1",
            CodeLabel::Sfbc2 => "SFBC2",
        }
    }
}

impl fmt::Display for CodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CodeLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SM" => Ok(CodeLabel::Sm),
            "AL" => Ok(CodeLabel::Al),
            "SFBC1" => Ok(CodeLabel::Sfbc1),
            "SFBC2" => Ok(CodeLabel::Sfbc2),
            other => Err(format!("unknown code label '{other}'")),
        }
    }
}

impl From<CodeId> for CodeLabel {
    fn from(code: CodeId) -> Self {
        match code {
            CodeId::Sm { .. } => CodeLabel::Sm,
            CodeId::Al => CodeLabel::Al,
            CodeId::Sfbc1 => CodeLabel::Sfbc1,
            CodeId::Sfbc2 => CodeLabel::Sfbc2,
        }
    }
}

/// Hypothesis-test configuration: false-alarm target plus the statistic
/// geometry.
#[derive(Debug, Clone)]
pub struct HtConfig {
    pub pr_false_alarm: f64,
    pub grouping: GroupingConfig,
    pub pairs: AntennaPairSet,
}

impl HtConfig {
    pub fn new(pr_false_alarm: f64, grouping: GroupingConfig, pairs: AntennaPairSet) -> Self {
        Self {
            pr_false_alarm,
            grouping,
            pairs,
        }
    }

    pub fn dof(&self) -> usize {
        2 * self.pairs.d() * self.grouping.g
    }
}

/// Detection threshold: solves `F_q(eta) = 1 - pr_f` for the chi-square CDF
/// with `q` degrees of freedom, by bisection with geometric bracket
/// expansion starting from `[0, 2q]`.
pub fn compute_threshold(pr_false_alarm: f64, q: usize) -> Result<f64, ClassifyError> {
    if !(pr_false_alarm > 0.0 && pr_false_alarm < 1.0) {
        return Err(ClassifyError::InvalidFalseAlarm(pr_false_alarm));
    }
    if q == 0 || q % 2 != 0 {
        return Err(ClassifyError::InvalidDof(q));
    }
    let target = 1.0 - pr_false_alarm;
    let f = |eta: f64| chi_square_cdf(eta, q as u32).expect("eta >= 0 inside bracket") - target;
    let tol = ToleranceConfig::default();
    Ok(bisection_solve_expanding(f, 0.0, 2.0 * q as f64, &tol)?)
}

/// Two-code decision on the chi-square statistic: the coded hypothesis (AL)
/// is declared exactly when `U >= eta`.
pub fn ht_decide(stat: &StatisticResult, eta: f64) -> Result<CodeLabel, ClassifyError> {
    if stat.kind != StatKind::U {
        return Err(ClassifyError::WrongStatistic {
            want: StatKind::U,
            got: stat.kind,
        });
    }
    Ok(if stat.value >= eta {
        CodeLabel::Al
    } else {
        CodeLabel::Sm
    })
}

/// Pure decision-tree comparison on already computed statistics.
pub fn tree_decide(u_c1: f64, u_c2: f64, u: f64, eta: f64) -> CodeLabel {
    if u_c1 >= eta {
        CodeLabel::Sfbc1
    } else if u_c2 >= eta {
        CodeLabel::Sfbc2
    } else if u >= eta {
        CodeLabel::Al
    } else {
        CodeLabel::Sm
    }
}

/// Three-level decision tree: lag-4 test for the rate-1/2 code, lag-2 test
/// for the rate-3/4 code, then the adjacent-pair test for AL versus SM. All
/// nodes share the same threshold because their null statistics follow the
/// same chi-square law.
pub fn decision_tree_classify(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    cfg: GroupingConfig,
    eta: f64,
) -> Result<CodeLabel, ClassifyError> {
    let u_c1 = statistic_u_c1(grid, pairs, cfg)?;
    let u_c2 = statistic_u_c2(grid, pairs, cfg)?;
    let u = statistic_u(grid, pairs, cfg)?;
    Ok(tree_decide(u_c1.value, u_c2.value, u.value, eta))
}

/// A trained scalar SVM: decision value `w * T + b`, positive side coded.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub weight: f64,
    pub bias: f64,
    /// Soft-margin parameter the model was trained with.
    pub c: f64,
    /// Number of antenna pairs the feature was computed over; predictions
    /// with a different D are rejected (the feature's null distribution
    /// changes with D, so the model must be retrained).
    pub d: usize,
    /// Which statistic this model discriminates on.
    pub kind: StatKind,
    /// Free-form description of the training protocol.
    pub protocol: String,
    /// Positive-class label (the coded signal this model detects).
    pub positive: CodeLabel,
    trained: bool,
}

impl Default for SvmModel {
    fn default() -> Self {
        Self {
            weight: 0.0,
            bias: 0.0,
            c: 1.0,
            d: 0,
            kind: StatKind::T,
            protocol: String::new(),
            positive: CodeLabel::Al,
            trained: false,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    w: f64,
    b: f64,
    c: f64,
    d: usize,
    feature_kind: String,
    positive: String,
    protocol: String,
}

/// Display name of a statistic kind, as used in model files and reports.
pub fn statistic_kind_name(kind: StatKind) -> &'static str {
    match kind {
        StatKind::U => "U",
        StatKind::T => "T",
        StatKind::UC1 => "U_C1",
        StatKind::UC2 => "U_C2",
        StatKind::TC1 => "T_C1",
        StatKind::TC2 => "T_C2",
    }
}

fn kind_from_str(s: &str) -> Result<StatKind, ClassifyError> {
    match s {
        "U" => Ok(StatKind::U),
        "T" => Ok(StatKind::T),
        "U_C1" => Ok(StatKind::UC1),
        "U_C2" => Ok(StatKind::UC2),
        "T_C1" => Ok(StatKind::TC1),
        "T_C2" => Ok(StatKind::TC2),
        other => Err(ClassifyError::ModelFile(format!(
            "unknown feature kind '{other}'"
        ))),
    }
}

impl SvmModel {
    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Location of the decision boundary in feature space, `-b / w`.
    pub fn boundary(&self) -> f64 {
        -self.bias / self.weight
    }

    /// Writes the model as a small structured-text (TOML) file.
    pub fn save(&self, path: &Path) -> Result<(), ClassifyError> {
        if !self.trained {
            return Err(ClassifyError::UntrainedModel);
        }
        let file = ModelFile {
            w: self.weight,
            b: self.bias,
            c: self.c,
            d: self.d,
            feature_kind: statistic_kind_name(self.kind).to_string(),
            positive: self.positive.to_string(),
            protocol: self.protocol.clone(),
        };
        let text = toml::to_string(&file).map_err(|e| ClassifyError::ModelFile(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| ClassifyError::ModelFile(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ClassifyError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ClassifyError::ModelFile(e.to_string()))?;
        let file: ModelFile =
            toml::from_str(&text).map_err(|e| ClassifyError::ModelFile(e.to_string()))?;
        Ok(Self {
            weight: file.w,
            bias: file.b,
            c: file.c,
            d: file.d,
            kind: kind_from_str(&file.feature_kind)?,
            positive: file
                .positive
                .parse()
                .map_err(ClassifyError::ModelFile)?,
            protocol: file.protocol,
            trained: true,
        })
    }
}

/// One labeled training example: feature value plus the true code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample {
    pub feature: f64,
    pub label: CodeLabel,
}

/// Labeled feature values for SVM training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<TrainingSample>,
}

/// Trains the two-code model: AL is the positive class on the `T` feature.
pub fn svm_train(data: &TrainingSet, d: usize, protocol: &str) -> Result<SvmModel, ClassifyError> {
    svm_train_node(data, CodeLabel::Al, StatKind::T, d, protocol)
}

/// Trains a one-node model for an arbitrary positive class and feature kind
/// (used for the decision-tree nodes).
pub fn svm_train_node(
    data: &TrainingSet,
    positive: CodeLabel,
    kind: StatKind,
    d: usize,
    protocol: &str,
) -> Result<SvmModel, ClassifyError> {
    let features: Vec<f64> = data.samples.iter().map(|s| s.feature).collect();
    let labels: Vec<f64> = data
        .samples
        .iter()
        .map(|s| if s.label == positive { 1.0 } else { -1.0 })
        .collect();
    if !labels.contains(&1.0) || !labels.contains(&-1.0) {
        return Err(ClassifyError::SingleClassTraining);
    }
    let fit = smo_fit(&features, &labels, 1.0);
    Ok(SvmModel {
        weight: fit.w,
        bias: fit.b,
        c: 1.0,
        d,
        kind,
        protocol: protocol.to_string(),
        positive,
        trained: true,
    })
}

// The multiplier and trace fields feed the optimality checks in the tests.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct SmoFit {
    pub w: f64,
    pub b: f64,
    pub alpha: Vec<f64>,
    /// Dual objective (minimization form) after each optimization step.
    pub objective_trace: Vec<f64>,
}

/// Sequential minimal optimization of the soft-margin dual for scalar
/// features: maximal-violating-pair selection, exact two-variable updates,
/// termination on a primal-dual gap below 1e-6 (or 1e4 sweep-equivalents).
///
/// The dual in minimization form is
/// `f(alpha) = 1/2 sum alpha_s alpha_t y_s y_t x_s x_t - sum alpha`,
/// subject to `0 <= alpha <= C` and `sum alpha_t y_t = 0`. A step moves
/// `alpha_i by +y_i t` and `alpha_j by -y_j t`, which keeps the equality
/// constraint; along that direction the curvature is `(x_i - x_j)^2` and
/// the weight changes by `t (x_i - x_j)`.
pub(crate) fn smo_fit(x: &[f64], y: &[f64], c: f64) -> SmoFit {
    let n = x.len();
    let mut alpha = vec![0.0f64; n];
    let mut w = 0.0f64;
    let tau = 1e-12;
    let gap_tol = 1e-6;
    let max_updates = 10_000usize * n.max(1);
    let mut objective_trace = Vec::new();

    let dual_objective =
        |alpha: &[f64], w: f64| -> f64 { 0.5 * w * w - alpha.iter().sum::<f64>() };

    let mut updates = 0usize;
    while updates < max_updates {
        // Maximal violating pair over the box constraints; first index wins
        // ties, so training is deterministic for a fixed data ordering.
        let mut i_up: Option<(usize, f64)> = None;
        let mut i_low: Option<(usize, f64)> = None;
        for t in 0..n {
            let grad = y[t] * w * x[t] - 1.0; // d f / d alpha_t
            let score = -y[t] * grad;
            let can_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let can_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if can_up && i_up.map_or(true, |(_, s)| score > s) {
                i_up = Some((t, score));
            }
            if can_low && i_low.map_or(true, |(_, s)| score < s) {
                i_low = Some((t, score));
            }
        }
        let (Some((i, m_up)), Some((j, m_low))) = (i_up, i_low) else {
            break;
        };
        if m_up - m_low < 1e-9 {
            break; // KKT satisfied
        }

        let curvature = (x[i] - x[j]) * (x[i] - x[j]);
        let unconstrained = if curvature > tau {
            (m_up - m_low) / curvature
        } else {
            f64::INFINITY
        };
        let cap_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let cap_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        let t_step = unconstrained.min(cap_i).min(cap_j);
        if !(t_step > 0.0) || !t_step.is_finite() {
            break; // no feasible progress along this pair
        }

        alpha[i] += y[i] * t_step;
        alpha[j] -= y[j] * t_step;
        alpha[i] = alpha[i].clamp(0.0, c);
        alpha[j] = alpha[j].clamp(0.0, c);
        w += t_step * (x[i] - x[j]);
        updates += 1;

        // Gap check once per sweep-equivalent.
        if updates % n.max(1) == 0 {
            let obj = dual_objective(&alpha, w);
            objective_trace.push(obj);
            let b = optimal_bias(x, y, w);
            let primal = primal_objective(x, y, w, b, c);
            if primal - (-obj) < gap_tol {
                break;
            }
        }
    }

    objective_trace.push(dual_objective(&alpha, w));
    let b = optimal_bias(x, y, w);
    SmoFit {
        w,
        b,
        alpha,
        objective_trace,
    }
}

fn primal_objective(x: &[f64], y: &[f64], w: f64, b: f64, c: f64) -> f64 {
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (1.0 - yi * (w * xi + b)).max(0.0))
        .sum();
    0.5 * w * w + c * hinge
}

/// Primal-optimal bias for a fixed weight: minimizes the hinge sum, which is
/// convex piecewise-linear in `b`; the minimizer set is an interval whose
/// midpoint is returned.
fn optimal_bias(x: &[f64], y: &[f64], w: f64) -> f64 {
    let mut candidates: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| yi - w * xi)
        .collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    let hinge = |b: f64| -> f64 {
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| (1.0 - yi * (w * xi + b)).max(0.0))
            .sum()
    };
    let mut best = f64::INFINITY;
    let mut lo = 0.0;
    let mut hi = 0.0;
    for &b in &candidates {
        let v = hinge(b);
        if v < best - 1e-12 {
            best = v;
            lo = b;
            hi = b;
        } else if (v - best).abs() <= 1e-12 {
            hi = b;
        }
    }
    0.5 * (lo + hi)
}

/// Predicts from the scalar statistic: the positive class exactly when
/// `w * T + b > 0`; ties resolve to SM (the null is retained absent
/// evidence).
pub fn svm_predict(model: &SvmModel, stat: &StatisticResult) -> Result<CodeLabel, ClassifyError> {
    if !model.trained {
        return Err(ClassifyError::UntrainedModel);
    }
    if stat.kind != model.kind {
        return Err(ClassifyError::WrongStatistic {
            want: model.kind,
            got: stat.kind,
        });
    }
    if stat.dof != 2 * model.d {
        return Err(ClassifyError::PairCountMismatch {
            model_d: model.d,
            got_d: stat.dof / 2,
        });
    }
    Ok(if model.weight * stat.value + model.bias > 0.0 {
        model.positive
    } else {
        CodeLabel::Sm
    })
}

/// Trained models for the three decision-tree nodes.
#[derive(Debug, Clone)]
pub struct SvmTreeModels {
    pub sfbc1: SvmModel,
    pub sfbc2: SvmModel,
    pub al: SvmModel,
}

/// SVM decision tree: same topology as the hypothesis-test tree, with a
/// trained model at each node discriminating its code from the rest via the
/// node's absolute-value statistic.
pub fn svm_decision_tree(
    grid: &OfdmResourceGrid,
    pairs: &AntennaPairSet,
    models: &SvmTreeModels,
) -> Result<CodeLabel, ClassifyError> {
    let t_c1 = statistic_t_c1(grid, pairs)?;
    if svm_predict(&models.sfbc1, &t_c1)? == CodeLabel::Sfbc1 {
        return Ok(CodeLabel::Sfbc1);
    }
    let t_c2 = statistic_t_c2(grid, pairs)?;
    if svm_predict(&models.sfbc2, &t_c2)? == CodeLabel::Sfbc2 {
        return Ok(CodeLabel::Sfbc2);
    }
    let t = statistic_t(grid, pairs)?;
    svm_predict(&models.al, &t)
}
