//! Group and hierarchical group-lasso penalties on first-layer column groups,
//! with their exact proximal operators.
//!
//! The group for input series `j` is the stack `(W^{11}_{:j}, ..., W^{1K}_{:j})`.
//! The hierarchical penalty sums the norms of the nested suffix groups
//! `(W^{1k}_{:j}, ..., W^{1K}_{:j})` for `k = 1..K`, so deeper lags are
//! penalized more and can only be active when every shallower lag is.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::norm2;
use crate::model::ComponentMlp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    None,
    Group,
    Hierarchical,
}

impl PenaltyKind {
    pub fn name(self) -> &'static str {
        match self {
            PenaltyKind::None => "none",
            PenaltyKind::Group => "group",
            PenaltyKind::Hierarchical => "hierarchical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub lambda: f64,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "penalty strength must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(Self { kind, lambda })
    }

    pub fn none() -> Self {
        Self {
            kind: PenaltyKind::None,
            lambda: 0.0,
        }
    }

    pub fn with_lambda(self, lambda: f64) -> Result<Self> {
        Self::new(self.kind, lambda)
    }
}

/// The `K` per-lag blocks of one input series' outgoing weights;
/// `blocks[k]` holds lag `k + 1` and has one entry per first-layer unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnGroup {
    pub blocks: Vec<Vec<f64>>,
}

impl ColumnGroup {
    pub fn from_model(model: &ComponentMlp, j: usize) -> Self {
        Self {
            blocks: (1..=model.lags()).map(|k| model.lag_block(j, k)).collect(),
        }
    }

    pub fn write_to(&self, model: &mut ComponentMlp, j: usize) {
        let p = model.p();
        for (k, block) in self.blocks.iter().enumerate() {
            for (h, &v) in block.iter().enumerate() {
                model.params.first_layer.set(h, k * p + j, v);
            }
        }
    }

    fn flatten(&self) -> Vec<f64> {
        self.blocks.concat()
    }

    fn from_flat(flat: &[f64], width: usize) -> Self {
        Self {
            blocks: flat.chunks(width).map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn is_zero(&self, k: usize) -> bool {
        self.blocks[k].iter().all(|&v| v == 0.0)
    }
}

/// Penalty term `lambda * Omega(W)`; `0` for [`PenaltyKind::None`].
pub fn penalty_value(spec: &PenaltySpec, model: &ComponentMlp) -> f64 {
    if spec.kind == PenaltyKind::None || spec.lambda == 0.0 {
        return 0.0;
    }
    let (p, lags) = (model.p(), model.lags());
    let w = &model.params.first_layer;
    let mut total = 0.0;
    for j in 0..p {
        // Squared norm of each lag block for series j.
        let lag_sq: Vec<f64> = (0..lags)
            .map(|k| (0..w.rows()).map(|h| w.get(h, k * p + j).powi(2)).sum())
            .collect();
        match spec.kind {
            PenaltyKind::Group => total += lag_sq.iter().sum::<f64>().sqrt(),
            PenaltyKind::Hierarchical => {
                let mut suffix = 0.0;
                for sq in lag_sq.iter().rev() {
                    suffix += sq;
                    total += suffix.sqrt();
                }
            }
            PenaltyKind::None => unreachable!(),
        }
    }
    spec.lambda * total
}

/// Block soft-thresholding in place: zero if `||block|| <= threshold`,
/// otherwise scale by `1 - threshold / ||block||`.
pub fn prox_group_block_in_place(block: &mut [f64], threshold: f64) {
    if threshold <= 0.0 {
        return;
    }
    let norm = norm2(block);
    if norm <= threshold {
        block.iter_mut().for_each(|v| *v = 0.0);
    } else {
        let shrink = 1.0 - threshold / norm;
        block.iter_mut().for_each(|v| *v *= shrink);
    }
}

pub fn prox_group_block(block: &[f64], threshold: f64) -> Vec<f64> {
    let mut out = block.to_vec();
    prox_group_block_in_place(&mut out, threshold);
    out
}

/// Nested prox on a lag-major flat column (`K` blocks of length `width`):
/// block soft-thresholding of the suffix groups, deepest lag first.
fn prox_hierarchical_flat(flat: &mut [f64], width: usize, threshold: f64) {
    if threshold <= 0.0 {
        return;
    }
    let lags = flat.len() / width;
    for k in (0..lags).rev() {
        prox_group_block_in_place(&mut flat[k * width..], threshold);
    }
}

pub fn prox_hierarchical_column(col: &ColumnGroup, threshold: f64) -> ColumnGroup {
    let width = col.blocks.first().map_or(0, Vec::len);
    if width == 0 {
        return col.clone();
    }
    let mut flat = col.flatten();
    prox_hierarchical_flat(&mut flat, width, threshold);
    ColumnGroup::from_flat(&flat, width)
}

/// Applies the penalty's prox with threshold `step * lambda` to every input
/// column group. Only the first layer is touched.
pub fn apply_prox(spec: &PenaltySpec, model: &mut ComponentMlp, step: f64) {
    let threshold = step * spec.lambda;
    if spec.kind == PenaltyKind::None || threshold <= 0.0 {
        return;
    }
    let (p, lags) = (model.p(), model.lags());
    let width = model.params.first_layer.rows();
    let mut buf = vec![0.0; lags * width];
    let w = &mut model.params.first_layer;
    for j in 0..p {
        for k in 0..lags {
            for h in 0..width {
                buf[k * width + h] = w.get(h, k * p + j);
            }
        }
        match spec.kind {
            PenaltyKind::Group => prox_group_block_in_place(&mut buf, threshold),
            PenaltyKind::Hierarchical => prox_hierarchical_flat(&mut buf, width, threshold),
            PenaltyKind::None => unreachable!(),
        }
        for k in 0..lags {
            for h in 0..width {
                w.set(h, k * p + j, buf[k * width + h]);
            }
        }
    }
}

/// True when every column's zero lag-blocks form a suffix `{k*+1, ..., K}`.
pub fn has_suffix_sparsity(model: &ComponentMlp) -> bool {
    (0..model.p()).all(|j| {
        let col = ColumnGroup::from_model(model, j);
        let mut seen_zero = false;
        (0..model.lags()).all(|k| {
            let zero = col.is_zero(k);
            let ok = zero || !seen_zero;
            seen_zero |= zero;
            ok
        })
    })
}
