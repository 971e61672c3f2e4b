//! Component MLP for a single output series.
//!
//! The first layer takes the `p * K` lagged inputs. Its weight matrix is
//! stored as one `H1 x (K * p)` block whose column `k * p + j` holds the
//! weights leaving series `j` at lag `k + 1`, so `W^{1k}` is the contiguous
//! column range `k * p .. (k + 1) * p`. Deeper layers follow the usual
//! `h_l = act(W_l h_{l-1} + b_l)` recursion and a linear decoder produces the
//! scalar prediction. With no hidden layers the model is a linear
//! autoregression on the same design.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dot, Matrix, SeededRng};
use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// Derivative taken as 0 at exactly 0.
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn slope_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl Default for Activation {
    fn default() -> Self {
        Activation::Tanh
    }
}

/// Shape of a component MLP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// Number of input series.
    pub p: usize,
    /// Number of lags fed to the network.
    pub lags: usize,
    /// Hidden layer widths; empty means a linear model.
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    /// Whether the decoder carries a trainable intercept.
    #[serde(default = "default_true")]
    pub output_bias: bool,
}

fn default_true() -> bool {
    true
}

impl Architecture {
    pub fn new(p: usize, lags: usize, hidden: Vec<usize>) -> Self {
        Self {
            p,
            lags,
            hidden,
            activation: Activation::Tanh,
            output_bias: true,
        }
    }

    pub fn linear(p: usize, lags: usize) -> Self {
        Self::new(p, lags, Vec::new())
    }

    pub fn is_linear(&self) -> bool {
        self.hidden.is_empty()
    }

    /// Rows of the first-layer matrix (1 for a linear model).
    pub fn first_width(&self) -> usize {
        self.hidden.first().copied().unwrap_or(1)
    }

    pub fn input_len(&self) -> usize {
        self.p * self.lags
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.lags == 0 {
            return Err(Error::InvalidParameter("p and lags must be at least 1".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidParameter("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// Every trainable array of a component MLP. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `H1 x (K * p)` input weights, lag-major columns.
    pub first_layer: Matrix,
    /// Biases of hidden layers `1..=L` (empty for a linear model).
    pub biases: Vec<Vec<f64>>,
    /// Weights of hidden layers `2..=L`.
    pub hidden_weights: Vec<Matrix>,
    /// Decoder weights over the last hidden layer (empty for a linear model).
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
}

impl Params {
    pub fn zeros(arch: &Architecture) -> Self {
        let first_layer = Matrix::zeros(arch.first_width(), arch.input_len());
        let biases = arch.hidden.iter().map(|&h| vec![0.0; h]).collect();
        let hidden_weights = arch
            .hidden
            .windows(2)
            .map(|w| Matrix::zeros(w[1], w[0]))
            .collect();
        let output_weights = vec![0.0; arch.hidden.last().copied().unwrap_or(0)];
        Self {
            first_layer,
            biases,
            hidden_weights,
            output_weights,
            output_bias: 0.0,
        }
    }

    /// Visits every scalar in checkpoint order: first layer, then for each
    /// hidden layer its bias followed by the next layer's weights, then the
    /// decoder weights and intercept.
    pub fn for_each(&self, mut f: impl FnMut(f64)) {
        self.first_layer.as_slice().iter().for_each(|&v| f(v));
        for (l, b) in self.biases.iter().enumerate() {
            b.iter().for_each(|&v| f(v));
            if let Some(w) = self.hidden_weights.get(l) {
                w.as_slice().iter().for_each(|&v| f(v));
            }
        }
        self.output_weights.iter().for_each(|&v| f(v));
        f(self.output_bias);
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        self.first_layer.as_mut_slice().iter_mut().for_each(&mut f);
        for (l, b) in self.biases.iter_mut().enumerate() {
            b.iter_mut().for_each(&mut f);
            if let Some(w) = self.hidden_weights.get_mut(l) {
                w.as_mut_slice().iter_mut().for_each(&mut f);
            }
        }
        self.output_weights.iter_mut().for_each(&mut f);
        f(&mut self.output_bias);
    }

    pub fn len(&self) -> usize {
        let mut n = 0;
        self.for_each(|_| n += 1);
        n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each(|v| out.push(v));
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.len(),
                flat.len()
            )));
        }
        let mut it = flat.iter();
        self.for_each_mut(|v| *v = *it.next().expect("length checked"));
        Ok(())
    }

    /// `self += alpha * other`; shapes must match.
    pub fn axpy(&mut self, alpha: f64, other: &Params) {
        let flat = other.to_flat();
        let mut it = flat.iter();
        self.for_each_mut(|v| *v += alpha * it.next().expect("matching layout"));
    }

    pub fn dot(&self, other: &Params) -> f64 {
        dot(&self.to_flat(), &other.to_flat())
    }

    pub fn sq_norm(&self) -> f64 {
        let mut s = 0.0;
        self.for_each(|v| s += v * v);
        s
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|v| ok &= v.is_finite());
        ok
    }

    fn same_shape(&self, other: &Params) -> bool {
        self.first_layer.rows() == other.first_layer.rows()
            && self.first_layer.cols() == other.first_layer.cols()
            && self.biases.iter().map(Vec::len).eq(other.biases.iter().map(Vec::len))
            && self
                .hidden_weights
                .iter()
                .map(|w| (w.rows(), w.cols()))
                .eq(other.hidden_weights.iter().map(|w| (w.rows(), w.cols())))
            && self.output_weights.len() == other.output_weights.len()
    }
}

/// One network `g_i` predicting series `i` from `K` lags of all series.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMlp {
    arch: Architecture,
    pub params: Params,
}

impl ComponentMlp {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let params = Params::zeros(&arch);
        Ok(Self { arch, params })
    }

    /// Weights drawn from `Normal(0, 0.1^2) / sqrt(fan_in)`, biases zero.
    pub fn init(arch: Architecture, rng: &mut SeededRng) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let fill = |m: &mut [f64], fan_in: usize, rng: &mut SeededRng| {
            let scale = 0.1 / (fan_in as f64).sqrt();
            m.iter_mut().for_each(|v| *v = scale * rng.standard_normal());
        };
        let p = &mut model.params;
        fill(p.first_layer.as_mut_slice(), model.arch.input_len(), rng);
        for w in &mut p.hidden_weights {
            let fan_in = w.cols();
            fill(w.as_mut_slice(), fan_in, rng);
        }
        let fan_in = p.output_weights.len();
        fill(&mut p.output_weights, fan_in, rng);
        Ok(model)
    }

    pub fn from_params(arch: Architecture, params: Params) -> Result<Self> {
        arch.validate()?;
        if !Params::zeros(&arch).same_shape(&params) {
            return Err(Error::ArchitectureMismatch(
                "parameter shapes do not match the architecture".into(),
            ));
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn p(&self) -> usize {
        self.arch.p
    }

    pub fn lags(&self) -> usize {
        self.arch.lags
    }

    /// Weights leaving series `j` at lag `lag` (1-based), one per first-layer unit.
    pub fn lag_block(&self, j: usize, lag: usize) -> Vec<f64> {
        let col = (lag - 1) * self.arch.p + j;
        (0..self.params.first_layer.rows())
            .map(|h| self.params.first_layer.get(h, col))
            .collect()
    }

    /// Prediction for one lagged input `(x_{t-1}, ..., x_{t-K})`.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.arch.input_len() {
            return Err(Error::Dimension(format!(
                "input has length {}, expected p*K = {}",
                input.len(),
                self.arch.input_len()
            )));
        }
        let mut ws = Workspace::new(&self.arch);
        Ok(self.forward_into(input, &mut ws))
    }

    fn forward_into(&self, input: &[f64], ws: &mut Workspace) -> f64 {
        let p = &self.params;
        let bias = if self.arch.output_bias { p.output_bias } else { 0.0 };
        if self.arch.is_linear() {
            return dot(p.first_layer.row(0), input) + bias;
        }
        let act = self.arch.activation;
        for (h, a) in ws.acts[0].iter_mut().enumerate() {
            *a = act.apply(dot(p.first_layer.row(h), input) + p.biases[0][h]);
        }
        for l in 1..self.arch.hidden.len() {
            let (prev, rest) = ws.acts.split_at_mut(l);
            let w = &p.hidden_weights[l - 1];
            for (h, a) in rest[0].iter_mut().enumerate() {
                *a = act.apply(dot(w.row(h), &prev[l - 1]) + p.biases[l][h]);
            }
        }
        dot(&p.output_weights, ws.acts.last().expect("hidden layers")) + bias
    }

    pub fn predict(&self, data: &LaggedDataset) -> Result<Vec<f64>> {
        self.check_data(data)?;
        let mut ws = Workspace::new(&self.arch);
        Ok((0..data.len())
            .map(|n| self.forward_into(data.inputs.row(n), &mut ws))
            .collect())
    }

    /// Sum of squared residuals over all rows.
    pub fn loss(&self, data: &LaggedDataset) -> Result<f64> {
        self.check_data(data)?;
        let mut ws = Workspace::new(&self.arch);
        Ok((0..data.len())
            .map(|n| {
                let r = self.forward_into(data.inputs.row(n), &mut ws) - data.targets[n];
                r * r
            })
            .sum())
    }

    /// Exact gradient of [`Self::loss`] by reverse-mode accumulation.
    pub fn grad(&self, data: &LaggedDataset) -> Result<Params> {
        Ok(self.loss_and_grad(data)?.1)
    }

    pub fn loss_and_grad(&self, data: &LaggedDataset) -> Result<(f64, Params)> {
        self.check_data(data)?;
        let mut g = Params::zeros(&self.arch);
        let mut ws = Workspace::new(&self.arch);
        let mut loss = 0.0;
        let p = &self.params;
        let layers = self.arch.hidden.len();
        let act = self.arch.activation;
        for n in 0..data.len() {
            let x = data.inputs.row(n);
            let r = self.forward_into(x, &mut ws) - data.targets[n];
            loss += r * r;
            let dy = 2.0 * r;
            if self.arch.output_bias {
                g.output_bias += dy;
            }
            if layers == 0 {
                axpy_slice(g.first_layer.row_mut(0), dy, x);
                continue;
            }
            axpy_slice(&mut g.output_weights, dy, &ws.acts[layers - 1]);
            // Delta at the last hidden layer.
            for (h, d) in ws.deltas[layers - 1].iter_mut().enumerate() {
                let a = ws.acts[layers - 1][h];
                *d = dy * p.output_weights[h] * act.slope_from_output(a);
            }
            for l in (1..layers).rev() {
                let w = &p.hidden_weights[l - 1];
                let gw = &mut g.hidden_weights[l - 1];
                for h in 0..w.rows() {
                    let d = ws.deltas[l][h];
                    g.biases[l][h] += d;
                    axpy_slice(gw.row_mut(h), d, &ws.acts[l - 1]);
                }
                let (lower, upper) = ws.deltas.split_at_mut(l);
                let below = &mut lower[l - 1];
                below.iter_mut().for_each(|v| *v = 0.0);
                for (h, &d) in upper[0].iter().enumerate() {
                    axpy_slice(below, d, w.row(h));
                }
                for (h, v) in below.iter_mut().enumerate() {
                    *v *= act.slope_from_output(ws.acts[l - 1][h]);
                }
            }
            for (h, &d) in ws.deltas[0].iter().enumerate() {
                if d != 0.0 {
                    g.biases[0][h] += d;
                    axpy_slice(g.first_layer.row_mut(h), d, x);
                }
            }
        }
        Ok((loss, g))
    }

    /// Per-input-series norm of all outgoing first-layer weights, across lags.
    pub fn granger_weights(&self) -> Vec<f64> {
        let (p, lags) = (self.arch.p, self.arch.lags);
        let w = &self.params.first_layer;
        (0..p)
            .map(|j| {
                let mut s = 0.0;
                for h in 0..w.rows() {
                    let row = w.row(h);
                    for k in 0..lags {
                        let v = row[k * p + j];
                        s += v * v;
                    }
                }
                s.sqrt()
            })
            .collect()
    }

    fn check_data(&self, data: &LaggedDataset) -> Result<()> {
        if data.inputs.cols() != self.arch.input_len() {
            return Err(Error::Dimension(format!(
                "dataset has {} input columns, model expects {}",
                data.inputs.cols(),
                self.arch.input_len()
            )));
        }
        Ok(())
    }
}

#[inline]
fn axpy_slice(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(arch: &Architecture) -> Self {
        let acts: Vec<Vec<f64>> = arch.hidden.iter().map(|&h| vec![0.0; h]).collect();
        let deltas = acts.clone();
        Self { acts, deltas }
    }
}

/// Design matrix of lagged inputs and the targets for one output series.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDataset {
    /// `N x (p * K)`; row `n` is `(x_{t-1}, ..., x_{t-K})` for `t = K + n`.
    pub inputs: Matrix,
    /// `x_{t, i}` for `t = K + n`.
    pub targets: Vec<f64>,
    pub series_index: usize,
    pub lags: usize,
}

impl LaggedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn p(&self) -> usize {
        self.inputs.cols() / self.lags
    }
}

/// Builds the lagged regression problem for output series `series`.
pub fn build_lagged(ts: &TimeSeries, lags: usize, series: usize) -> Result<LaggedDataset> {
    let (t_len, p) = (ts.len(), ts.dim());
    if lags == 0 {
        return Err(Error::InvalidParameter("lag order must be at least 1".into()));
    }
    if t_len <= lags {
        return Err(Error::Dimension(format!(
            "need more than {lags} time points for {lags} lags, got {t_len}"
        )));
    }
    if series >= p {
        return Err(Error::Dimension(format!("series index {series} out of range for p = {p}")));
    }
    let n = t_len - lags;
    let mut inputs = Matrix::zeros(n, p * lags);
    let mut targets = Vec::with_capacity(n);
    for row in 0..n {
        let t = lags + row;
        let dst = inputs.row_mut(row);
        for k in 0..lags {
            dst[k * p..(k + 1) * p].copy_from_slice(ts.at(t - k - 1));
        }
        targets.push(ts.at(t)[series]);
    }
    Ok(LaggedDataset {
        inputs,
        targets,
        series_index: series,
        lags,
    })
}
