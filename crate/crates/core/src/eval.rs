//! Granger graphs, penalty-path sweeps and ROC/AUC scoring.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{child_seed, Matrix};
use crate::model::{build_lagged, Architecture, ComponentMlp, LaggedDataset};
use crate::optimizer::{fit, is_monotone, warm_start_fit, FitResult, OptimizerConfig};
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::timeseries::{standardize, Generator, TimeSeries};

/// Seed stream offset for per-series model initialization.
const SERIES_STREAM: u64 = 1 << 32;

/// Weighted directed graph; `weights(i, j)` is the strength of `j -> i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrangerGraph {
    weights: Matrix,
}

impl GrangerGraph {
    pub fn from_matrix(weights: Matrix) -> Result<Self> {
        if weights.rows() != weights.cols() {
            return Err(Error::Dimension(format!(
                "graph must be square, got {}x{}",
                weights.rows(),
                weights.cols()
            )));
        }
        if weights.as_slice().iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("graph weights must be finite and >= 0".into()));
        }
        Ok(Self { weights })
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            weights: Matrix::zeros(p, p),
        }
    }

    pub fn p(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights.get(i, j)
    }

    pub fn is_binary(&self) -> bool {
        self.weights.as_slice().iter().all(|&w| w == 0.0 || w == 1.0)
    }

    /// Edges with strictly positive weight.
    pub fn edge_count(&self, include_diagonal: bool) -> usize {
        let p = self.p();
        (0..p)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .filter(|&(i, j)| (include_diagonal || i != j) && self.get(i, j) > 0.0)
            .count()
    }
}

/// Row `i` of the graph is `granger_weights(models[i])`.
pub fn assemble_graph(models: &[ComponentMlp]) -> Result<GrangerGraph> {
    let p = models.len();
    let lags = models.first().map(ComponentMlp::lags);
    let mut w = Matrix::zeros(p, p);
    for (i, m) in models.iter().enumerate() {
        if m.p() != p || Some(m.lags()) != lags {
            return Err(Error::Dimension(format!(
                "model {i} has p = {}, K = {}; expected p = {p}, K = {}",
                m.p(),
                m.lags(),
                lags.unwrap_or(0)
            )));
        }
        w.row_mut(i).copy_from_slice(&m.granger_weights());
    }
    GrangerGraph::from_matrix(w)
}

/// `p x K` matrix whose entry `(j, k)` is the norm of `W^{1,k+1}_{:j}`.
pub fn lag_profile(model: &ComponentMlp) -> Matrix {
    let (p, lags) = (model.p(), model.lags());
    let mut out = Matrix::zeros(p, lags);
    for j in 0..p {
        for k in 0..lags {
            out.set(j, k, crate::math::norm2(&model.lag_block(j, k + 1)));
        }
    }
    out
}

fn considered(p: usize, include_diagonal: bool) -> impl Iterator<Item = (usize, usize)> {
    (0..p)
        .flat_map(move |i| (0..p).map(move |j| (i, j)))
        .filter(move |&(i, j)| include_diagonal || i != j)
}

fn class_counts(truth: &GrangerGraph, include_diagonal: bool) -> Result<(usize, usize)> {
    if !truth.is_binary() {
        return Err(Error::InvalidParameter("ground truth must be a 0/1 graph".into()));
    }
    let pos = considered(truth.p(), include_diagonal)
        .filter(|&(i, j)| truth.get(i, j) == 1.0)
        .count();
    let total = considered(truth.p(), include_diagonal).count();
    if pos == 0 || pos == total {
        return Err(Error::DegenerateTruth(format!(
            "{pos} positives among {total} entries; need both classes"
        )));
    }
    Ok((pos, total - pos))
}

/// One `(FPR, TPR)` point per estimated graph, where an edge counts as
/// predicted iff its weight is strictly positive. The endpoints `(0,0)` and
/// `(1,1)` are added and the result is sorted by FPR then TPR.
pub fn roc_points(
    truth: &GrangerGraph,
    estimates: &[GrangerGraph],
    include_diagonal: bool,
) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = class_counts(truth, include_diagonal)?;
    let mut points = vec![(0.0, 0.0), (1.0, 1.0)];
    for est in estimates {
        if est.p() != truth.p() {
            return Err(Error::Dimension(format!(
                "estimate has p = {}, truth has p = {}",
                est.p(),
                truth.p()
            )));
        }
        let (mut tp, mut fp) = (0usize, 0usize);
        for (i, j) in considered(truth.p(), include_diagonal) {
            if est.get(i, j) > 0.0 {
                if truth.get(i, j) == 1.0 {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    sort_points(&mut points);
    Ok(points)
}

/// Score-based ROC for a single estimate: sweeps a threshold over its
/// distinct edge weights.
pub fn roc_points_by_score(
    truth: &GrangerGraph,
    estimate: &GrangerGraph,
    include_diagonal: bool,
) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = class_counts(truth, include_diagonal)?;
    if estimate.p() != truth.p() {
        return Err(Error::Dimension("estimate and truth differ in p".into()));
    }
    let mut scored: Vec<(f64, bool)> = considered(truth.p(), include_diagonal)
        .map(|(i, j)| (estimate.get(i, j), truth.get(i, j) == 1.0))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (idx, &(score, positive)) in scored.iter().enumerate() {
        if positive {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_tie = scored.get(idx + 1).map_or(true, |next| next.0 != score);
        if last_of_tie {
            points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        }
    }
    points.push((1.0, 1.0));
    sort_points(&mut points);
    Ok(points)
}

fn sort_points(points: &mut [(f64, f64)]) {
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
}

/// Trapezoidal area under an ROC curve. Points are sorted by FPR and, for
/// repeated FPR values, only the largest TPR is kept.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    let mut pts = points.to_vec();
    sort_points(&mut pts);
    let mut dedup: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for (f, t) in pts {
        match dedup.last_mut() {
            Some(last) if last.0 == f => last.1 = last.1.max(t),
            _ => dedup.push((f, t)),
        }
    }
    dedup
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Penalty grid for a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum LambdaGrid {
    /// `points` log-spaced values from `lambda_max` down to `lambda_max / ratio`.
    Auto { points: usize, ratio: f64 },
    Explicit { lambdas: Vec<f64> },
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Auto {
            points: 20,
            ratio: 100.0,
        }
    }
}

impl LambdaGrid {
    /// Concrete descending grid for `ts`.
    pub fn resolve(&self, ts: &TimeSeries, lags: usize, centered: bool) -> Result<Vec<f64>> {
        match self {
            LambdaGrid::Auto { points, ratio } => {
                log_grid(lambda_max(ts, lags, centered)?, *ratio, *points)
            }
            LambdaGrid::Explicit { lambdas } => {
                let mut grid = lambdas.clone();
                if grid.is_empty() || grid.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "explicit lambda grid must be non-empty, finite and >= 0".into(),
                    ));
                }
                grid.sort_by(|a, b| b.total_cmp(a));
                if grid.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::InvalidParameter("lambda grid has duplicates".into()));
                }
                Ok(grid)
            }
        }
    }
}

/// Smallest group-lasso strength at which the linear model on `ts` has
/// every input group at zero: `max_{i,j} 2 |X_j' (y_i - mean(y_i))|`.
pub fn lambda_max(ts: &TimeSeries, lags: usize, centered: bool) -> Result<f64> {
    let p = ts.dim();
    let mut best = 0.0f64;
    for i in 0..p {
        let data = build_lagged(ts, lags, i)?;
        let mean = if centered {
            data.targets.iter().sum::<f64>() / data.len() as f64
        } else {
            0.0
        };
        let mut corr = vec![0.0; data.inputs.cols()];
        for n in 0..data.len() {
            let r = data.targets[n] - mean;
            for (c, v) in corr.iter_mut().zip(data.inputs.row(n)) {
                *c += r * v;
            }
        }
        for j in 0..p {
            let sq: f64 = (0..lags).map(|k| corr[k * p + j].powi(2)).sum();
            best = best.max(2.0 * sq.sqrt());
        }
    }
    if !(best > 0.0) {
        return Err(Error::InvalidParameter("lambda_max is zero for this dataset".into()));
    }
    Ok(best)
}

/// `points` log-spaced values from `hi` down to `hi / ratio`.
pub fn log_grid(hi: f64, ratio: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 || !(hi > 0.0) || !(ratio > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "bad grid: hi = {hi}, ratio = {ratio}, points = {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![hi]);
    }
    let step = ratio.ln() / (points - 1) as f64;
    Ok((0..points).map(|k| hi * (-(k as f64) * step).exp()).collect())
}

/// Model, penalty and optimizer settings shared by every fit in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub arch: Architecture,
    pub penalty: PenaltyKind,
    pub opt: OptimizerConfig,
    pub grid: LambdaGrid,
}

/// Compact record of one fit along a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub model: ComponentMlp,
    pub iterations: usize,
    pub converged: bool,
    pub monotone: bool,
    pub final_objective: f64,
}

impl FitSummary {
    fn from_result(res: &FitResult) -> Self {
        Self {
            model: res.model.clone(),
            iterations: res.iterations_run,
            converged: res.converged,
            monotone: is_monotone(&res.objective_trace),
            final_objective: res.final_objective(),
        }
    }
}

/// Graphs and lag profiles along a descending penalty grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub lambdas: Vec<f64>,
    pub graphs: Vec<GrangerGraph>,
    /// `lag_profiles[l][i]` is the `p x K` lag profile of series `i` at `lambdas[l]`.
    pub lag_profiles: Vec<Vec<Matrix>>,
    /// `fits[l][i]`.
    pub fits: Vec<Vec<FitSummary>>,
}

impl SweepResult {
    pub fn edge_counts(&self, include_diagonal: bool) -> Vec<usize> {
        self.graphs.iter().map(|g| g.edge_count(include_diagonal)).collect()
    }

    /// Nonzero `(input series, lag)` blocks summed over all output series.
    pub fn selected_lag_counts(&self) -> Vec<usize> {
        self.lag_profiles
            .iter()
            .map(|profiles| {
                profiles
                    .iter()
                    .map(|m| m.as_slice().iter().filter(|&&v| v > 0.0).count())
                    .sum()
            })
            .collect()
    }
}

/// Fits one series down the grid, warm-starting each fit from the previous.
pub fn sweep_series(
    data: &LaggedDataset,
    cfg: &SweepConfig,
    lambdas: &[f64],
    seed: u64,
) -> Result<Vec<FitSummary>> {
    let mut out = Vec::with_capacity(lambdas.len());
    let mut previous: Option<FitResult> = None;
    for &lambda in lambdas {
        let spec = PenaltySpec::new(cfg.penalty, lambda)?;
        let res = match &previous {
            None => fit(data, &spec, &cfg.arch, &cfg.opt, seed)?,
            Some(prev) => warm_start_fit(prev, data, &spec, &cfg.opt)?,
        };
        out.push(FitSummary::from_result(&res));
        previous = Some(res);
    }
    Ok(out)
}

/// Per-series initialization seed used by sweeps and single fits.
pub fn series_seed(seed: u64, series: usize) -> u64 {
    child_seed(seed, SERIES_STREAM + series as u64)
}

/// Runs the full grid for every output series (series in parallel).
pub fn run_sweep(ts: &TimeSeries, cfg: &SweepConfig, lambdas: &[f64], seed: u64) -> Result<SweepResult> {
    let p = ts.dim();
    if cfg.arch.p != p {
        return Err(Error::ArchitectureMismatch(format!(
            "architecture has p = {} but data has {p} series",
            cfg.arch.p
        )));
    }
    let per_series: Vec<Vec<FitSummary>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let data = build_lagged(ts, cfg.arch.lags, i)?;
            sweep_series(&data, cfg, lambdas, series_seed(seed, i))
        })
        .collect::<Result<_>>()?;

    let mut graphs = Vec::with_capacity(lambdas.len());
    let mut lag_profiles = Vec::with_capacity(lambdas.len());
    let mut fits = Vec::with_capacity(lambdas.len());
    for l in 0..lambdas.len() {
        let row: Vec<FitSummary> = per_series.iter().map(|s| s[l].clone()).collect();
        let models: Vec<ComponentMlp> = row.iter().map(|f| f.model.clone()).collect();
        graphs.push(assemble_graph(&models)?);
        lag_profiles.push(models.iter().map(lag_profile).collect());
        fits.push(row);
    }
    Ok(SweepResult {
        lambdas: lambdas.to_vec(),
        graphs,
        lag_profiles,
        fits,
    })
}

/// AUC over off-diagonal entries, or `None` if they hold a single class.
pub fn off_diagonal_auc(truth: &GrangerGraph, estimates: &[GrangerGraph]) -> Result<Option<f64>> {
    match roc_points(truth, estimates, false) {
        Ok(points) => Ok(Some(auc(&points))),
        Err(Error::DegenerateTruth(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Everything [`run_experiment`] needs besides the seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub generator: Generator,
    pub t_len: usize,
    pub sweep: SweepConfig,
    pub include_diagonal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AucRow {
    pub seed: u64,
    pub auc: f64,
    /// AUC computed on off-diagonal entries only; `None` when the truth has
    /// no off-diagonal edges (or nothing but edges) there.
    pub auc_off_diagonal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<AucRow>,
    pub truths: Vec<GrangerGraph>,
    pub sweeps: Vec<SweepResult>,
}

impl ExperimentResult {
    pub fn mean_auc(&self) -> f64 {
        self.rows.iter().map(|r| r.auc).sum::<f64>() / self.rows.len() as f64
    }

    /// Mean over the rows where the off-diagonal AUC is defined.
    pub fn mean_auc_off_diagonal(&self) -> Option<f64> {
        let vals: Vec<f64> = self.rows.iter().filter_map(|r| r.auc_off_diagonal).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

/// Generates, standardizes, sweeps and scores one dataset per seed.
pub fn run_experiment(spec: &ExperimentSpec, seeds: &[u64]) -> Result<ExperimentResult> {
    let mut rows = Vec::with_capacity(seeds.len());
    let mut truths = Vec::with_capacity(seeds.len());
    let mut sweeps = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (raw, truth) = spec.generator.generate(spec.t_len, seed)?;
        let (ts, _) = standardize(&raw)?;
        let lambdas = spec
            .sweep
            .grid
            .resolve(&ts, spec.sweep.arch.lags, spec.sweep.arch.output_bias)?;
        let sweep = run_sweep(&ts, &spec.sweep, &lambdas, seed)?;
        let auc_all = auc(&roc_points(&truth, &sweep.graphs, spec.include_diagonal)?);
        let auc_off = off_diagonal_auc(&truth, &sweep.graphs)?;
        rows.push(AucRow {
            seed,
            auc: auc_all,
            auc_off_diagonal: auc_off,
        });
        truths.push(truth);
        sweeps.push(sweep);
    }
    Ok(ExperimentResult { rows, truths, sweeps })
}
