//! Run configuration: one TOML (or JSON) file with a section per concern.
//!
//! Every key is optional; missing keys take the desk-scale defaults and
//! unknown keys are rejected.

use std::path::Path;

use fbs_unroll::experiments::{DataSpec, PerturbTarget};
use fbs_unroll::learning::{ObjectiveConfig, TrainConfig};
use fbs_unroll::Regularizer;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSpec,
    pub objective: ObjectiveConfig,
    pub train: TrainConfig,
    pub regularizer: Regularizer,
    pub network: NetworkSection,
    pub sweep: SweepSection,
    pub limit: LimitSection,
    pub gamma: GammaSection,
    pub stability: StabilitySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSpec::default(),
            objective: ObjectiveConfig::default(),
            train: TrainConfig::default(),
            regularizer: Regularizer::l1(1.0),
            network: NetworkSection::default(),
            sweep: SweepSection::default(),
            limit: LimitSection::default(),
            gamma: GammaSection::default(),
            stability: StabilitySection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    /// Depth used by `train`.
    pub depth: usize,
    /// Time horizon `T`; every layer has step `T / N`.
    pub horizon: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            depth: 16,
            horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub layers: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            layers: vec![4, 8, 16, 32],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitSection {
    pub n_ref: usize,
}

impl Default for LimitSection {
    fn default() -> Self {
        LimitSection {
            n_ref: fbs_unroll::dynamics::DEFAULT_REFERENCE_DEPTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaSection {
    pub layers: Vec<usize>,
    pub n_ref: usize,
    /// Number of training samples the objectives are evaluated on.
    pub samples: usize,
    /// Cells of the synthetic target control (used without `--control`).
    pub grid: usize,
    /// Seed of the synthetic target's time-varying part.
    pub seed: u64,
}

impl Default for GammaSection {
    fn default() -> Self {
        GammaSection {
            layers: vec![16, 32, 64, 128, 256],
            n_ref: 4096,
            samples: 2,
            grid: 1024,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityModeKind {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    /// Trained depth (discrete mode) or reference depth (continuous mode).
    pub depth: usize,
    pub mode: StabilityModeKind,
    /// Base learning rate for stability runs; replaces `train.r0`.
    pub r0: f64,
    pub first: f64,
    pub ratio: f64,
    pub count: usize,
    pub direction_seed: u64,
    pub targets: Vec<PerturbTarget>,
}

impl Default for StabilitySection {
    fn default() -> Self {
        StabilitySection {
            depth: 8,
            mode: StabilityModeKind::Discrete,
            r0: 1e-4,
            first: 0.5,
            ratio: 0.5,
            count: 6,
            direction_seed: 11,
            targets: vec![PerturbTarget::X0, PerturbTarget::B, PerturbTarget::Y],
        }
    }
}

fn invalid(section: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("[{section}] {msg}"))
}

fn check_layers(section: &str, layers: &[usize]) -> Result<(), CliError> {
    if layers.is_empty() || layers[0] == 0 {
        return Err(invalid(section, "layers must be a non-empty list of depths ≥ 1"));
    }
    if layers.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(
            section,
            format!("layers must be strictly increasing, got {layers:?}"),
        ));
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.data.validate().map_err(|e| invalid("data", e))?;
        self.objective.validate().map_err(|e| invalid("objective", e))?;
        self.train.validate().map_err(|e| invalid("train", e))?;
        let net = &self.network;
        if net.depth == 0 {
            return Err(invalid("network", "depth must be ≥ 1"));
        }
        if !(net.horizon > 0.0 && net.horizon.is_finite()) {
            return Err(invalid(
                "network",
                format!("horizon must be positive, got {}", net.horizon),
            ));
        }
        check_layers("sweep", &self.sweep.layers)?;
        if self.limit.n_ref < 2 {
            return Err(invalid("limit", "n_ref must be ≥ 2"));
        }
        let g = &self.gamma;
        check_layers("gamma", &g.layers)?;
        if g.n_ref <= *g.layers.last().unwrap() {
            return Err(invalid("gamma", "n_ref must exceed the largest tested depth"));
        }
        if g.samples == 0 || g.grid == 0 {
            return Err(invalid("gamma", "samples and grid must be ≥ 1"));
        }
        let s = &self.stability;
        if s.depth == 0 || s.count == 0 {
            return Err(invalid("stability", "depth and count must be ≥ 1"));
        }
        if !(s.r0 >= 0.0 && s.r0.is_finite()) {
            return Err(invalid("stability", format!("r0 must be ≥ 0, got {}", s.r0)));
        }
        if !(s.first > 0.0 && s.first.is_finite() && s.ratio > 0.0 && s.ratio < 1.0) {
            return Err(invalid("stability", "first must be positive and ratio in (0, 1)"));
        }
        if s.targets.is_empty() {
            return Err(invalid("stability", "targets must not be empty"));
        }
        Ok(())
    }
}

/// Parses a config; `.json` files are JSON, anything else TOML.
pub fn parse_config(text: &str, json: bool) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = if json {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| CliError::Config(toml_message(&e, text)))?
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Single-line rendering of a TOML error with its line and column.
fn toml_message(e: &toml::de::Error, text: &str) -> String {
    let msg = e.message().trim();
    match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {col}: {msg}")
        }
        None => msg.to_string(),
    }
}

/// Reads and validates a config file, or returns the defaults without one.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|x| x == "json");
    parse_config(&text, json).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_config("", false).unwrap(), RunConfig::default());
        assert_eq!(parse_config("{}", true).unwrap(), RunConfig::default());
    }

    #[test]
    fn negative_beta_names_the_field() {
        let err = parse_config("[objective]\nbeta1 = -1.0\n", false).unwrap_err();
        assert!(err.to_string().contains("beta1 must be ≥ 0"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let err = parse_config("[train]\nepochs = 3\nepohcs = 4\n", false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("epohcs"), "{msg}");
        assert!(parse_config("[trian]\n", false).is_err());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = parse_config("[train]\nepochs = 3\n[regularizer]\nkind = \"squared_l2\"\n", false).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.regularizer, Regularizer::squared_l2(1.0));
    }

    #[test]
    fn toml_and_json_agree() {
        let cfg = RunConfig::default();
        let toml_text = toml::to_string(&cfg).unwrap();
        let json_text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse_config(&toml_text, false).unwrap(), cfg);
        assert_eq!(parse_config(&json_text, true).unwrap(), cfg);
    }
}
