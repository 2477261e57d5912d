//! Experiment configuration, read from TOML or assembled from CLI flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dfsq_core::computations::{Builtin, Computation};
use dfsq_core::{make_source, SourceKind, SourceModel};
use serde::{Deserialize, Serialize};

use crate::error::{Context, HarnessError};

pub const DEFAULT_RATES: [f64; 7] = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
pub const DEFAULT_SAMPLES: usize = 1_000_000;
pub const MIN_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    GaussianSquare,
    CauchyExp,
    MultiSumSquare,
    MultiMin,
    DecoderGap,
    Custom,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 6] = [
        ExperimentName::GaussianSquare,
        ExperimentName::CauchyExp,
        ExperimentName::MultiSumSquare,
        ExperimentName::MultiMin,
        ExperimentName::DecoderGap,
        ExperimentName::Custom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentName::GaussianSquare => "gaussian_square",
            ExperimentName::CauchyExp => "cauchy_exp",
            ExperimentName::MultiSumSquare => "multi_sum_square",
            ExperimentName::MultiMin => "multi_min",
            ExperimentName::DecoderGap => "decoder_gap",
            ExperimentName::Custom => "custom",
        }
    }

    fn default_n(&self) -> usize {
        match self {
            ExperimentName::MultiSumSquare => 4,
            ExperimentName::MultiMin => 10,
            _ => 1,
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        let norm = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == norm)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment {s:?}")))
    }
}

/// A source family and its parameters, e.g. `{ kind = "cauchy", params = [0, 1] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub kind: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl SourceSpec {
    pub fn new(kind: &str, params: &[f64]) -> Self {
        SourceSpec {
            kind: kind.into(),
            params: params.to_vec(),
        }
    }

    pub fn build(&self) -> Result<SourceModel, HarnessError> {
        let kind: SourceKind = self.kind.parse().context("source")?;
        make_source(kind, &self.params).context(format!("source {}", self.kind))
    }
}

/// `kind[:p1,p2,...]`
impl FromStr for SourceSpec {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let params =
            parse_list(rest).map_err(|e| HarnessError::Config(format!("source {s:?}: {e}")))?;
        Ok(SourceSpec {
            kind: kind.trim().into(),
            params,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputationSpec {
    pub kind: String,
    #[serde(default)]
    pub arity: Option<usize>,
}

impl ComputationSpec {
    pub fn new(kind: &str, arity: usize) -> Self {
        ComputationSpec {
            kind: kind.into(),
            arity: Some(arity),
        }
    }

    pub fn build(&self, default_arity: usize) -> Result<Builtin, HarnessError> {
        Builtin::from_kind(&self.kind, self.arity.unwrap_or(default_arity)).context("computation")
    }
}

/// Comma-separated reals; empty input gives an empty list.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentName,
    #[serde(default = "default_rates")]
    pub rate_grid: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Number of sources; per-experiment default when absent.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    /// Source override (required for `custom`).
    #[serde(default)]
    pub source: Option<SourceSpec>,
    /// Computation override (required for `custom`).
    #[serde(default)]
    pub computation: Option<ComputationSpec>,
    #[serde(default)]
    pub block_size: Option<usize>,
}

fn default_rates() -> Vec<f64> {
    DEFAULT_RATES.to_vec()
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentName) -> Self {
        ExperimentConfig {
            experiment,
            rate_grid: default_rates(),
            samples: DEFAULT_SAMPLES,
            seed: 0,
            n: None,
            output_path: None,
            source: None,
            computation: None,
            block_size: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.rate_grid.is_empty() {
            return Err(HarnessError::Config("rate grid is empty".into()));
        }
        if self.rate_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(HarnessError::Config(
                "rate grid must be strictly increasing".into(),
            ));
        }
        if self
            .rate_grid
            .iter()
            .any(|r| !r.is_finite() || *r < 3f64.log2())
        {
            return Err(HarnessError::Config(
                "every rate must give at least 3 cells".into(),
            ));
        }
        if self.samples < MIN_SAMPLES {
            return Err(HarnessError::Config(format!(
                "samples must be at least {MIN_SAMPLES}, got {}",
                self.samples
            )));
        }
        if self.n == Some(0) {
            return Err(HarnessError::Config("n must be at least 1".into()));
        }
        if self.experiment == ExperimentName::Custom
            && (self.source.is_none() || self.computation.is_none())
        {
            return Err(HarnessError::Config(
                "custom experiments need a source and a computation".into(),
            ));
        }
        Ok(())
    }

    pub fn sources(&self) -> usize {
        self.n.unwrap_or_else(|| self.experiment.default_n())
    }

    pub fn source_spec(&self) -> SourceSpec {
        if let Some(s) = &self.source {
            return s.clone();
        }
        match self.experiment {
            ExperimentName::CauchyExp => SourceSpec::new("cauchy", &[0.0, 1.0]),
            ExperimentName::MultiMin | ExperimentName::DecoderGap => {
                SourceSpec::new("exponential", &[1.0])
            }
            _ => SourceSpec::new("gaussian", &[0.0, 1.0]),
        }
    }

    pub fn computation_spec(&self) -> ComputationSpec {
        if let Some(c) = &self.computation {
            return c.clone();
        }
        let n = self.sources();
        match self.experiment {
            ExperimentName::CauchyExp => ComputationSpec::new("exp_neg_abs", 1),
            ExperimentName::MultiSumSquare => ComputationSpec::new("sum_of_squares", n),
            ExperimentName::MultiMin => ComputationSpec::new("min", n),
            ExperimentName::DecoderGap => ComputationSpec::new("one_minus_exp_neg", 1),
            _ => ComputationSpec::new("square", 1),
        }
    }

    pub fn plan(&self) -> dfsq_core::McPlan {
        let plan = dfsq_core::McPlan::new(self.samples, self.seed);
        match self.block_size {
            Some(b) => plan.with_block_size(b),
            None => plan,
        }
    }
}

/// Checks that a computation accepts `n` arguments.
pub fn check_arity(g: &dyn Computation, n: usize) -> Result<(), HarnessError> {
    if g.arity() != n {
        return Err(HarnessError::Config(format!(
            "computation takes {} arguments but the experiment has {n} sources",
            g.arity()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_with_defaults() {
        let cfg = ExperimentConfig::from_toml("experiment = \"multi_min\"\nseed = 7\n").unwrap();
        assert_eq!(cfg.experiment, ExperimentName::MultiMin);
        assert_eq!(cfg.rate_grid, DEFAULT_RATES.to_vec());
        assert_eq!(cfg.sources(), 10);
        assert_eq!(cfg.computation_spec(), ComputationSpec::new("min", 10));
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn custom_needs_source_and_computation() {
        assert!(ExperimentConfig::from_toml("experiment = \"custom\"").is_err());
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"custom\"\nsource = { kind = \"exponential\", params = [2.0] }\ncomputation = { kind = \"square\" }\n",
        )
        .unwrap();
        assert_eq!(cfg.source_spec().build().unwrap().median(), 0.5 * 2f64.ln());
    }

    #[test]
    fn validation() {
        for bad in [
            "experiment = \"gaussian_square\"\nrate_grid = [3.0, 2.0]",
            "experiment = \"gaussian_square\"\nrate_grid = []",
            "experiment = \"gaussian_square\"\nrate_grid = [1.0]",
            "experiment = \"gaussian_square\"\nsamples = 100",
            "experiment = \"gaussian_square\"\nn = 0",
            "experiment = \"nope\"",
            "experiment = \"gaussian_square\"\nunknown = 1",
        ] {
            assert!(ExperimentConfig::from_toml(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn source_spec_strings() {
        let s: SourceSpec = "cauchy:0,2".parse().unwrap();
        assert_eq!(s, SourceSpec::new("cauchy", &[0.0, 2.0]));
        let s: SourceSpec = "gaussian".parse().unwrap();
        assert!(s.params.is_empty());
        assert!(s.build().is_ok());
        assert!("gaussian:x".parse::<SourceSpec>().is_err());
        assert!("weibull".parse::<SourceSpec>().unwrap().build().is_err());
        assert_eq!(
            "decoder-gap".parse::<ExperimentName>().unwrap(),
            ExperimentName::DecoderGap
        );
    }
}
