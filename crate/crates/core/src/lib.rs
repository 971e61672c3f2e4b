//! Nonlinear Granger causality discovery with component MLPs.
//!
//! One multilayer perceptron is fit per output series on the lagged values
//! of every series. A group-lasso (or hierarchical group-lasso) penalty on
//! the first-layer weights leaving each input series drives whole input
//! groups to exactly zero; a zero group means that series has no effect on
//! the output, so the fitted networks read directly as a Granger graph.
//!
//! Modules:
//! - [`math`]: dense matrices, seeded random streams, finite differences.
//! - [`timeseries`]: sparse VAR and Lorenz-96 generators, standardization.
//! - [`model`]: the component MLP, squared-error loss and backprop.
//! - [`penalty`]: penalty values and proximal operators.
//! - [`optimizer`]: proximal gradient descent with backtracking.
//! - [`eval`]: graph assembly, penalty sweeps, ROC/AUC.
//! - [`cli`]: config files, data formats and the command-line driver.

pub mod cli;
pub mod error;
pub mod eval;
pub mod math;
pub mod model;
pub mod optimizer;
pub mod penalty;
pub mod timeseries;

pub use error::{Error, Result};
pub use eval::{GrangerGraph, SweepResult};
pub use math::{Matrix, SeededRng};
pub use model::{Activation, Architecture, ComponentMlp, LaggedDataset};
pub use optimizer::{FitResult, OptimizerConfig};
pub use penalty::{PenaltyKind, PenaltySpec};
pub use timeseries::{Generator, LorenzConfig, TimeSeries, VarConfig};
