//! Proximal gradient descent with backtracking for the penalized
//! least-squares objectives.
//!
//! Each iteration takes a gradient step on every parameter and then applies
//! the penalty's prox (threshold `step * lambda`) to the first layer. With
//! backtracking on, a step is accepted once the new loss sits under the
//! quadratic upper model `L(W) + <grad, D> + |D|^2 / (2 step)`, which makes
//! the penalized objective non-increasing.
//!
//! The loss is a plain sum over rows, so a given `lambda` or step size means
//! different things at different series lengths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::SeededRng;
use crate::model::{Architecture, ComponentMlp, LaggedDataset, Params};
use crate::penalty::{apply_prox, penalty_value, PenaltySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub initial_step: f64,
    pub max_iters: usize,
    /// Stop once `|F_old - F_new| <= rel_tol * |F_old|`.
    pub rel_tol: f64,
    pub backtracking: bool,
    pub backtrack_factor: f64,
    /// With backtracking, the step is multiplied by this factor after an
    /// iteration whose first trial was accepted (1 keeps it fixed).
    pub step_growth: f64,
    pub min_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            initial_step: 1e-2,
            max_iters: 20_000,
            rel_tol: 1e-6,
            backtracking: true,
            backtrack_factor: 0.5,
            step_growth: 2.0,
            min_step: 1e-12,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_step > 0.0) {
            return Err(Error::InvalidParameter("initial_step must be positive".into()));
        }
        if !(self.min_step > 0.0 && self.min_step < self.initial_step) {
            return Err(Error::InvalidParameter(
                "min_step must be positive and below initial_step".into(),
            ));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidParameter("backtrack_factor must lie in (0, 1)".into()));
        }
        if !(self.step_growth >= 1.0 && self.step_growth.is_finite()) {
            return Err(Error::InvalidParameter("step_growth must be finite and >= 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("rel_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: ComponentMlp,
    /// Penalized objective at the start and after every accepted iteration.
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub final_step: f64,
}

impl FitResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }
}

/// Snapshot handed to a progress sink after every accepted iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub iteration: usize,
    pub objective: f64,
    pub step: f64,
    /// Input series whose outgoing weights are not all zero.
    pub active_groups: usize,
}

/// Smooth loss plus penalty.
pub fn objective(model: &ComponentMlp, data: &LaggedDataset, spec: &PenaltySpec) -> Result<f64> {
    Ok(model.loss(data)? + penalty_value(spec, model))
}

/// One unconditional proximal gradient step; returns the new model and its
/// objective.
pub fn prox_step(
    model: &ComponentMlp,
    data: &LaggedDataset,
    spec: &PenaltySpec,
    step: f64,
) -> Result<(ComponentMlp, f64)> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    let grad = model.grad(data)?;
    if !grad.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    let next = descend(model, &grad, spec, step);
    let obj = objective(&next, data, spec)?;
    Ok((next, obj))
}

fn descend(model: &ComponentMlp, grad: &Params, spec: &PenaltySpec, step: f64) -> ComponentMlp {
    let mut next = model.clone();
    next.params.axpy(-step, grad);
    apply_prox(spec, &mut next, step);
    next
}

/// Fits a freshly initialized model (weights seeded from `seed`).
pub fn fit(
    data: &LaggedDataset,
    spec: &PenaltySpec,
    arch: &Architecture,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<FitResult> {
    fit_with_progress(data, spec, arch, opt, seed, None)
}

pub fn fit_with_progress(
    data: &LaggedDataset,
    spec: &PenaltySpec,
    arch: &Architecture,
    opt: &OptimizerConfig,
    seed: u64,
    sink: Option<&mut dyn FnMut(&Progress)>,
) -> Result<FitResult> {
    let model = ComponentMlp::init(arch.clone(), &mut SeededRng::new(seed))?;
    run(model, data, spec, opt, opt.initial_step, sink)
}

/// Continues optimization from `previous.model`, typically at a new `lambda`.
pub fn warm_start_fit(
    previous: &FitResult,
    data: &LaggedDataset,
    spec: &PenaltySpec,
    opt: &OptimizerConfig,
) -> Result<FitResult> {
    warm_start_fit_with_progress(previous, data, spec, opt, None)
}

pub fn warm_start_fit_with_progress(
    previous: &FitResult,
    data: &LaggedDataset,
    spec: &PenaltySpec,
    opt: &OptimizerConfig,
    sink: Option<&mut dyn FnMut(&Progress)>,
) -> Result<FitResult> {
    let arch = previous.model.arch();
    if data.lags != arch.lags || data.inputs.cols() != arch.input_len() {
        return Err(Error::ArchitectureMismatch(format!(
            "model expects p = {}, K = {} but data has {} columns at K = {}",
            arch.p,
            arch.lags,
            data.inputs.cols(),
            data.lags
        )));
    }
    let step = if opt.backtracking && previous.final_step > opt.min_step {
        previous.final_step
    } else {
        opt.initial_step
    };
    run(previous.model.clone(), data, spec, opt, step, sink)
}

fn run(
    mut model: ComponentMlp,
    data: &LaggedDataset,
    spec: &PenaltySpec,
    opt: &OptimizerConfig,
    mut step: f64,
    mut sink: Option<&mut dyn FnMut(&Progress)>,
) -> Result<FitResult> {
    opt.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParameter("cannot fit an empty dataset".into()));
    }
    let (mut loss, mut grad) = model.loss_and_grad(data)?;
    let mut obj = loss + penalty_value(spec, &model);
    if !obj.is_finite() {
        return Err(Error::NonFinite("initial objective".into()));
    }
    let rounding = (data.len() as f64 + 4.0) * f64::EPSILON;
    let target_energy: f64 = data.targets.iter().map(|y| y * y).sum();
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opt.max_iters {
        if !grad.is_finite() {
            return Err(Error::NonFinite(format!("gradient at iteration {iterations}")));
        }
        let mut first_trial = true;
        let (candidate, cand_loss, cand_grad) = loop {
            let candidate = descend(&model, &grad, spec, step);
            let (cand_loss, cand_grad) = candidate.loss_and_grad(data)?;
            if !opt.backtracking {
                break (candidate, cand_loss, cand_grad);
            }
            let mut delta = candidate.params.clone();
            delta.axpy(-1.0, &model.params);
            let bound = loss + grad.dot(&delta) + delta.sq_norm() / (2.0 * step);
            // Rounding error of a sum of squared residuals: each residual
            // carries an error of order eps * |y|, and the row count
            // multiplies it. Below that level the test is noise.
            let slack = rounding * (loss.abs() + 2.0 * (loss.abs() * target_energy).sqrt());
            if cand_loss.is_finite() && cand_loss <= bound + slack {
                break (candidate, cand_loss, cand_grad);
            }
            step *= opt.backtrack_factor;
            first_trial = false;
            if step < opt.min_step {
                return Err(Error::StepUnderflow {
                    step,
                    min_step: opt.min_step,
                });
            }
        };
        let new_obj = cand_loss + penalty_value(spec, &candidate);
        if !new_obj.is_finite() {
            return Err(Error::NonFinite(format!("objective at iteration {iterations}")));
        }
        if opt.backtracking && new_obj > obj {
            // Only reachable through rounding: the iterate is at a fixed point.
            converged = true;
            break;
        }
        iterations += 1;
        let change = (obj - new_obj).abs();
        let prev = obj;
        model = candidate;
        loss = cand_loss;
        grad = cand_grad;
        obj = new_obj;
        trace.push(obj);
        if let Some(sink) = sink.as_deref_mut() {
            sink(&Progress {
                iteration: iterations,
                objective: obj,
                step,
                active_groups: model.granger_weights().iter().filter(|&&w| w > 0.0).count(),
            });
        }
        if change <= opt.rel_tol * prev.abs() {
            converged = true;
            break;
        }
        if opt.backtracking && first_trial {
            step *= opt.step_growth;
        }
    }

    Ok(FitResult {
        model,
        objective_trace: trace,
        iterations_run: iterations,
        converged,
        final_step: step,
    })
}

/// Checks the objective trace never increases beyond `1e-12 * max(1, |F|)`.
pub fn is_monotone(trace: &[f64]) -> bool {
    trace
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0))
}
