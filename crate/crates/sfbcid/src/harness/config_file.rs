//! Structured-text experiment configuration files. Every field is optional;
//! values present in the file override the defaults, and command-line flags
//! override the file.

use std::path::Path;

use serde::Deserialize;

use super::{Algorithm, DecisionMode, ExperimentConfig, HarnessError};
use crate::channel::PowerDelayProfile;
use crate::features::{AntennaPairSet, GroupingConfig};
use crate::txchain::{CodeId, ModulationScheme};

/// Partial, file-backed configuration mirroring [`ExperimentConfig`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub codes: Option<Vec<String>>,
    pub n: Option<usize>,
    pub nu: Option<usize>,
    pub n_b: Option<usize>,
    pub n_r: Option<usize>,
    /// Ordered antenna pairs, e.g. `[[1, 2], [2, 1]]`.
    pub pairs: Option<Vec<[usize; 2]>>,
    pub g: Option<usize>,
    pub modulation: Option<String>,
    pub pr_false_alarm: Option<f64>,
    pub snr_db: Option<f64>,
    pub clock_offset: Option<f64>,
    pub sto: Option<i64>,
    pub cfo: Option<f64>,
    pub doppler: Option<f64>,
    pub trials: Option<usize>,
    pub master_seed: Option<u64>,
    pub algorithm: Option<String>,
    pub tree: Option<bool>,
    pub channel_taps: Option<usize>,
}

/// Parses a code name: `SM`, `SM3` (three-antenna SM), `AL`, `SFBC1`,
/// `SFBC2`.
pub fn parse_code(s: &str) -> Result<CodeId, HarnessError> {
    match s.to_ascii_uppercase().as_str() {
        "SM" => Ok(CodeId::sm()),
        "SM3" => Ok(CodeId::Sm { n_tx: 3 }),
        "AL" => Ok(CodeId::Al),
        "SFBC1" => Ok(CodeId::Sfbc1),
        "SFBC2" => Ok(CodeId::Sfbc2),
        other => Err(HarnessError::InvalidConfig(format!(
            "unknown code '{other}' (expected SM, SM3, AL, SFBC1 or SFBC2)"
        ))),
    }
}

/// Parses a modulation name: `BPSK`, `QPSK`, `8PSK`, `16PSK`, `64PSK`,
/// `4QAM`, `16QAM`, `64QAM`.
pub fn parse_modulation(s: &str) -> Result<ModulationScheme, HarnessError> {
    match s.to_ascii_uppercase().as_str() {
        "BPSK" => Ok(ModulationScheme::Psk(2)),
        "QPSK" | "4PSK" => Ok(ModulationScheme::Psk(4)),
        "8PSK" => Ok(ModulationScheme::Psk(8)),
        "16PSK" => Ok(ModulationScheme::Psk(16)),
        "64PSK" => Ok(ModulationScheme::Psk(64)),
        "4QAM" => Ok(ModulationScheme::Qam(4)),
        "16QAM" => Ok(ModulationScheme::Qam(16)),
        "64QAM" => Ok(ModulationScheme::Qam(64)),
        other => Err(HarnessError::InvalidConfig(format!(
            "unknown modulation '{other}'"
        ))),
    }
}

/// Loads a TOML configuration file.
pub fn load_config_file(path: &Path) -> Result<PartialConfig, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| HarnessError::InvalidConfig(e.to_string()))
}

impl PartialConfig {
    /// Overlays the file's values onto a config.
    pub fn apply_to(&self, cfg: &mut ExperimentConfig) -> Result<(), HarnessError> {
        if let Some(codes) = &self.codes {
            cfg.codes = codes
                .iter()
                .map(|s| parse_code(s))
                .collect::<Result<_, _>>()?;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(nu) = self.nu {
            cfg.nu = nu;
        }
        if let Some(n_b) = self.n_b {
            cfg.n_b = n_b;
        }
        if let Some(n_r) = self.n_r {
            cfg.n_r = n_r;
        }
        if let Some(pairs) = &self.pairs {
            cfg.pairs = AntennaPairSet::new(pairs.iter().map(|p| (p[0], p[1])).collect())
                .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
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
        if let Some(s) = self.snr_db {
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
        if let Some(seed) = self.master_seed {
            cfg.master_seed = seed;
        }
        if let Some(a) = &self.algorithm {
            cfg.algorithm = a
                .parse::<Algorithm>()
                .map_err(HarnessError::InvalidConfig)?;
        }
        if let Some(tree) = self.tree {
            cfg.mode = if tree {
                DecisionMode::Tree
            } else {
                DecisionMode::Binary
            };
        }
        if let Some(l_h) = self.channel_taps {
            cfg.pdp = PowerDelayProfile::exponential(l_h);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_defaults() {
        let text = r#"
            codes = ["SM", "AL", "SFBC1"]
            n = 256
            n_b = 5
            g = 4
            modulation = "16QAM"
            pr_false_alarm = 0.01
            snr_db = 4.5
            sto = -3
            trials = 12
            master_seed = 99
            algorithm = "both"
            tree = true
        "#;
        let partial: PartialConfig = toml::from_str(text).unwrap();
        let mut cfg = ExperimentConfig::default();
        partial.apply_to(&mut cfg).unwrap();
        assert_eq!(cfg.codes.len(), 3);
        assert_eq!(cfg.n, 256);
        assert_eq!(cfg.n_b, 5);
        assert_eq!(cfg.grouping.g, 4);
        assert_eq!(cfg.modulation, ModulationScheme::Qam(16));
        assert_eq!(cfg.pr_false_alarm, 0.01);
        assert_eq!(cfg.snr_db, 4.5);
        assert_eq!(cfg.impairments.sto, -3);
        assert_eq!(cfg.trials, 12);
        assert_eq!(cfg.master_seed, 99);
        assert_eq!(cfg.algorithm, Algorithm::Both);
        assert_eq!(cfg.mode, DecisionMode::Tree);
    }

    #[test]
    fn unknown_fields_and_names_are_rejected() {
        assert!(toml::from_str::<PartialConfig>("bogus = 1").is_err());
        assert!(parse_code("XYZ").is_err());
        assert!(parse_modulation("128APSK").is_err());
        assert!(parse_code("sm3").is_ok());
    }
}
