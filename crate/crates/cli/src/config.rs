//! Experiment configuration: JSON file merged with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use aqt_core::analytic::AlgKind;
use aqt_core::oracle::{OracleParams, PeriodicSet};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every field is optional so a file and the flags can each supply part of
/// it; flags win.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_exp: Option<u32>,
    pub s: Option<u64>,
    #[serde(rename = "P", alias = "period")]
    pub period: Option<u64>,
    #[serde(rename = "M", alias = "m")]
    pub m: Option<u64>,
    pub p: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub algorithm: Option<Vec<AlgKind>>,
    pub output_dir: Option<PathBuf>,
    pub max_retries: Option<u64>,
    #[serde(rename = "L", alias = "l")]
    pub l: Option<u64>,
    pub l_max: Option<u64>,
    pub l_step: Option<u64>,
    pub trace: Option<bool>,
}

pub const DEFAULT_MAX_RETRIES: u64 = 16;

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("bad config {}: {e}", path.display())))
    }

    /// Field-wise merge; values set in `over` replace those in `self`.
    pub fn overridden_by(self, over: ExperimentConfig) -> Self {
        ExperimentConfig {
            n_exp: over.n_exp.or(self.n_exp),
            s: over.s.or(self.s),
            period: over.period.or(self.period),
            m: over.m.or(self.m),
            p: over.p.or(self.p),
            trials: over.trials.or(self.trials),
            seed: over.seed.or(self.seed),
            algorithm: over.algorithm.or(self.algorithm),
            output_dir: over.output_dir.or(self.output_dir),
            max_retries: over.max_retries.or(self.max_retries),
            l: over.l.or(self.l),
            l_max: over.l_max.or(self.l_max),
            l_step: over.l_step.or(self.l_step),
            trace: over.trace.or(self.trace),
        }
    }

    fn require<T: Copy>(value: Option<T>, name: &str) -> Result<T, CliError> {
        value.ok_or_else(|| CliError::Validation(format!("missing required parameter '{name}'")))
    }

    pub fn n(&self) -> Result<u64, CliError> {
        let e = Self::require(self.n_exp, "n_exp")?;
        if !(1..=30).contains(&e) {
            return Err(CliError::Validation(format!(
                "n_exp must be in [1, 30], got {e}"
            )));
        }
        Ok(1u64 << e)
    }

    pub fn m(&self) -> Result<u64, CliError> {
        Self::require(self.m, "M")
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        Self::require(self.seed, "seed")
    }

    pub fn trials_or(&self, default: u64) -> Result<u64, CliError> {
        let t = self.trials.unwrap_or(default);
        if t == 0 {
            return Err(CliError::Validation("trials must be positive".into()));
        }
        Ok(t)
    }

    pub fn algorithms_or(&self, default: &[AlgKind]) -> Vec<AlgKind> {
        match &self.algorithm {
            Some(a) if !a.is_empty() => a.clone(),
            _ => default.to_vec(),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("."))
    }

    /// Validated oracle parameters; the seed defaults to 0 here, callers
    /// that draw random numbers check it separately.
    pub fn oracle_params(&self) -> Result<(OracleParams, PeriodicSet), CliError> {
        let n = self.n()?;
        let params = OracleParams {
            n_exp: n.trailing_zeros(),
            s: Self::require(self.s, "s")?,
            period: Self::require(self.period, "P")?,
            m: self.m()?,
            p: self.p.unwrap_or(0.0),
            seed: self.seed.unwrap_or(0),
        };
        let set = params
            .periodic_set()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        Ok((params, set))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win() {
        let file: ExperimentConfig =
            serde_json::from_str(r#"{"n_exp": 10, "s": 208, "P": 5, "M": 7, "seed": 1}"#).unwrap();
        let flags = ExperimentConfig {
            seed: Some(9),
            m: Some(6),
            ..Default::default()
        };
        let merged = file.overridden_by(flags);
        assert_eq!(
            (merged.seed, merged.m, merged.period),
            (Some(9), Some(6), Some(5))
        );
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"N": 10}"#).is_err());
        let cfg = ExperimentConfig {
            n_exp: Some(10),
            s: Some(0),
            period: Some(40),
            m: Some(3),
            ..Default::default()
        };
        assert!(matches!(cfg.oracle_params(), Err(CliError::Validation(_))));
        let cfg = ExperimentConfig {
            period: Some(5),
            ..cfg
        };
        assert_eq!(cfg.oracle_params().unwrap().0.period, 5);
        assert!(ExperimentConfig::default().seed().is_err());
    }

    #[test]
    fn algorithms_parse() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"algorithm": ["qft", "amplified-qft"]}"#).unwrap();
        assert_eq!(
            cfg.algorithms_or(&[]),
            vec![AlgKind::Qft, AlgKind::AmplifiedQft]
        );
        assert_eq!(
            ExperimentConfig::default().algorithms_or(&AlgKind::ALL),
            AlgKind::ALL.to_vec()
        );
    }
}
