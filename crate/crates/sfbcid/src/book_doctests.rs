//! Runs every code snippet in the guide as a doc-test, keeping the book in
//! sync with the library. Only compiled under `cargo test --doc`.

#[doc = include_str!("../../../book/src/signal-model.md")]
mod signal_model {}

#[doc = include_str!("../../../book/src/correlation-statistics.md")]
mod correlation_statistics {}

#[doc = include_str!("../../../book/src/threshold-calibration.md")]
mod threshold_calibration {}

#[doc = include_str!("../../../book/src/decision-tree.md")]
mod decision_tree {}

#[doc = include_str!("../../../book/src/svm-classifier.md")]
mod svm_classifier {}

#[doc = include_str!("../../../book/src/performance-theory.md")]
mod performance_theory {}

#[doc = include_str!("../../../book/src/impairments.md")]
mod impairments {}
