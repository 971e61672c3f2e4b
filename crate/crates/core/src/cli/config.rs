//! Experiment configuration file (TOML).
//!
//! Every default below is visible in [`ExperimentConfig::default`] and can
//! be written out with `ExperimentConfig::to_toml` to obtain a fully
//! explicit file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::eval::{ExperimentSpec, LambdaGrid, SweepConfig};
use crate::model::{Activation, Architecture};
use crate::optimizer::OptimizerConfig;
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::timeseries::{Generator, VarConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed for data generation and model initialization.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default = "default_generator")]
    pub generator: Generator,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub penalty: PenaltySection,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

fn default_out_dir() -> String {
    "out".into()
}

fn default_generator() -> Generator {
    Generator::Var(VarConfig::default())
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: default_out_dir(),
            data: DataSection::default(),
            generator: default_generator(),
            model: ModelSection::default(),
            penalty: PenaltySection::default(),
            optimizer: OptimizerConfig::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Number of time points to simulate.
    pub length: usize,
    /// Center and scale each series before fitting.
    pub standardize: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            length: 1000,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub lags: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub output_bias: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            lags: 3,
            hidden: vec![10],
            activation: Activation::Tanh,
            output_bias: true,
        }
    }
}

impl ModelSection {
    pub fn architecture(&self, p: usize) -> Architecture {
        Architecture {
            p,
            lags: self.lags,
            hidden: self.hidden.clone(),
            activation: self.activation,
            output_bias: self.output_bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltySection {
    pub kind: PenaltyKind,
    /// Strength used by `fit`. The loss is a sum over rows, so useful values
    /// grow with the series length.
    pub lambda: f64,
    /// Grid used by `sweep`.
    pub grid: LambdaGrid,
}

impl Default for PenaltySection {
    fn default() -> Self {
        Self {
            kind: PenaltyKind::Group,
            lambda: 10.0,
            grid: LambdaGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub seeds: Vec<u64>,
    pub include_diagonal: bool,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            include_diagonal: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if self.data.length == 0 {
            return bad("data.length", "must be at least 1".into());
        }
        if self.model.lags == 0 {
            return bad("model.lags", "must be at least 1".into());
        }
        if self.model.hidden.iter().any(|&h| h == 0) {
            return bad("model.hidden", "widths must be positive".into());
        }
        if let Err(e) = PenaltySpec::new(self.penalty.kind, self.penalty.lambda) {
            return bad("penalty.lambda", e.to_string());
        }
        if let LambdaGrid::Auto { points, ratio } = self.penalty.grid {
            if points == 0 || !(ratio > 1.0) {
                return bad("penalty.grid", "needs points >= 1 and ratio > 1".into());
            }
        }
        if let Err(e) = self.optimizer.validate() {
            return bad("optimizer", e.to_string());
        }
        match &self.generator {
            Generator::Var(v) => {
                if v.p == 0 || v.lags == 0 {
                    return bad("generator", "p and lags must be at least 1".into());
                }
                if !(0.0..=1.0).contains(&v.edge_prob) {
                    return bad("generator.edge_prob", "must lie in [0, 1]".into());
                }
                if !(v.target_radius > 0.0 && v.target_radius < 1.0) {
                    return bad("generator.target_radius", "must lie in (0, 1)".into());
                }
            }
            Generator::Lorenz(l) => {
                if l.p < 4 {
                    return bad("generator.p", "Lorenz-96 needs at least 4 series".into());
                }
                if !(l.dt > 0.0) {
                    return bad("generator.dt", "must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn sweep_config(&self, p: usize) -> SweepConfig {
        SweepConfig {
            arch: self.model.architecture(p),
            penalty: self.penalty.kind,
            opt: self.optimizer.clone(),
            grid: self.penalty.grid.clone(),
        }
    }

    pub fn experiment_spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            generator: self.generator.clone(),
            t_len: self.data.length,
            sweep: self.sweep_config(self.generator.p()),
            include_diagonal: self.evaluation.include_diagonal,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::LorenzConfig;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn lorenz_section_parses() {
        let cfg = ExperimentConfig::from_toml(
            "seed = 3\n[generator]\nkind = \"lorenz\"\np = 8\nforcing = 5.0\n[penalty]\nkind = \"hierarchical\"\n[penalty.grid]\nmode = \"explicit\"\nlambdas = [3.0, 1.0]\n",
        )
        .unwrap();
        assert_eq!(
            cfg.generator,
            Generator::Lorenz(LorenzConfig {
                p: 8,
                ..LorenzConfig::default()
            })
        );
        assert_eq!(cfg.penalty.kind, PenaltyKind::Hierarchical);
        assert_eq!(cfg.penalty.grid, LambdaGrid::Explicit { lambdas: vec![3.0, 1.0] });
    }

    #[test]
    fn errors_name_the_location() {
        let err = ExperimentConfig::from_toml("[model]\nlags = 3\nbogus = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("line 3"), "{msg}");

        let err = ExperimentConfig::from_toml("[model]\nlags = 0\n").unwrap_err();
        assert!(err.to_string().contains("model.lags"));

        let err = ExperimentConfig::from_toml("[optimizer]\nbacktrack_factor = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("optimizer"));
    }
}
