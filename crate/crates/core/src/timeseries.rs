//! Synthetic ground-truthed datasets: sparse stable VAR processes and
//! Euler-integrated Lorenz-96 trajectories.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GrangerGraph;
use crate::math::{gauss_sample, Matrix, SeededRng};

/// Values whose magnitude exceeds this are treated as divergence.
const DIVERGENCE_LIMIT: f64 = 1e8;

/// `T x p` observation matrix; row `t` is the observation at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Matrix,
}

impl TimeSeries {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::Dimension(format!(
                "time series needs at least one row and column, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("time series contains NaN or Inf".into()));
        }
        Ok(Self { values })
    }

    /// Number of time points.
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    /// Number of series.
    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn at(&self, t: usize) -> &[f64] {
        self.values.row(t)
    }
}

/// Generator settings for a sparse VAR process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarConfig {
    pub p: usize,
    pub lags: usize,
    /// Probability that an off-diagonal edge is present.
    #[serde(default = "VarConfig::default_edge_prob")]
    pub edge_prob: f64,
    /// Magnitude of every nonzero coefficient before rescaling.
    #[serde(default = "VarConfig::default_magnitude")]
    pub magnitude: f64,
    /// Spectral radius of the companion matrix after rescaling.
    #[serde(default = "VarConfig::default_target_radius")]
    pub target_radius: f64,
    #[serde(default = "VarConfig::default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "VarConfig::default_burn_in")]
    pub burn_in: usize,
}

impl VarConfig {
    fn default_edge_prob() -> f64 {
        0.2
    }
    fn default_magnitude() -> f64 {
        0.1
    }
    fn default_target_radius() -> f64 {
        0.95
    }
    fn default_noise_sigma() -> f64 {
        0.1
    }
    fn default_burn_in() -> usize {
        200
    }
}

impl Default for VarConfig {
    fn default() -> Self {
        Self {
            p: 10,
            lags: 3,
            edge_prob: Self::default_edge_prob(),
            magnitude: Self::default_magnitude(),
            target_radius: Self::default_target_radius(),
            noise_sigma: Self::default_noise_sigma(),
            burn_in: Self::default_burn_in(),
        }
    }
}

/// Linear VAR(K) process `x_t = sum_k A_k x_{t-k} + e_t` with its causal graph.
#[derive(Debug, Clone, PartialEq)]
pub struct VarProcess {
    /// `coeffs[k]` is the `p x p` matrix for lag `k + 1`.
    pub coeffs: Vec<Matrix>,
    pub noise_sigma: f64,
    pub truth: GrangerGraph,
}

impl VarProcess {
    /// Builds a process from explicit coefficients; the truth graph is read
    /// off the nonzero pattern.
    pub fn new(coeffs: Vec<Matrix>, noise_sigma: f64) -> Result<Self> {
        let p = coeffs.first().map_or(0, Matrix::rows);
        if p == 0 {
            return Err(Error::Dimension("VAR needs at least one lag and one series".into()));
        }
        if coeffs.iter().any(|a| a.rows() != p || a.cols() != p) {
            return Err(Error::Dimension("all VAR coefficient matrices must be p x p".into()));
        }
        if !(noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise sigma {noise_sigma} < 0")));
        }
        let truth = support_graph(&coeffs);
        Ok(Self {
            coeffs,
            noise_sigma,
            truth,
        })
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].rows()
    }

    pub fn lags(&self) -> usize {
        self.coeffs.len()
    }

    /// Spectral radius of the `pK x pK` companion matrix.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&companion_matrix(&self.coeffs))
    }
}

fn support_graph(coeffs: &[Matrix]) -> GrangerGraph {
    let p = coeffs[0].rows();
    let mut w = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if coeffs.iter().any(|a| a.get(i, j) != 0.0) {
                w.set(i, j, 1.0);
            }
        }
    }
    GrangerGraph::from_matrix(w).expect("support graph is nonnegative")
}

/// Block companion matrix `[[A1 A2 .. AK], [I 0 .. 0], ..., [0 .. I 0]]`.
pub fn companion_matrix(coeffs: &[Matrix]) -> Matrix {
    let p = coeffs[0].rows();
    let k = coeffs.len();
    let n = p * k;
    let mut c = Matrix::zeros(n, n);
    for (lag, a) in coeffs.iter().enumerate() {
        for i in 0..p {
            for j in 0..p {
                c.set(i, lag * p + j, a.get(i, j));
            }
        }
    }
    for r in p..n {
        c.set(r, r - p, 1.0);
    }
    c
}

/// Largest eigenvalue modulus, as the limit `||A^N||^(1/N)` with `N = 2^60`
/// reached by normalized repeated squaring.
///
/// Eigenvalue solvers lose accuracy on defective matrices, and the companion
/// matrix of a sparse VAR whose lags share one coefficient pattern usually is
/// one (errors around 1e-8 show up). The power limit is off by only
/// `O(log N / N)`.
pub fn spectral_radius(m: &Matrix) -> f64 {
    let mut a = DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    let mut log_rho = 0.0;
    let mut weight = 1.0;
    for _ in 0..60 {
        let s = a.amax();
        if s == 0.0 {
            return 0.0;
        }
        log_rho += weight * s.ln();
        a /= s;
        a = &a * &a;
        weight *= 0.5;
    }
    let s = a.amax();
    if s == 0.0 {
        return 0.0;
    }
    (log_rho + weight * s.ln()).exp()
}

/// Draws a random sparse VAR process.
///
/// Diagonal entries are always present (positive sign); each off-diagonal
/// edge appears with probability `edge_prob` and carries one random sign
/// shared by all lags. Every nonzero entry starts at `magnitude` and the
/// whole coefficient set is then multiplied by a single factor so the
/// companion spectral radius equals `target_radius`.
pub fn make_sparse_var(rng: &mut SeededRng, cfg: &VarConfig) -> Result<VarProcess> {
    let VarConfig {
        p,
        lags,
        edge_prob,
        magnitude,
        target_radius,
        noise_sigma,
        ..
    } = *cfg;
    if p == 0 || lags == 0 {
        return Err(Error::InvalidParameter("p and lags must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::InvalidParameter(format!("edge_prob {edge_prob} outside [0, 1]")));
    }
    if !(target_radius > 0.0 && target_radius < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target radius {target_radius} outside (0, 1)"
        )));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise sigma {noise_sigma} < 0")));
    }
    if !(magnitude > 0.0 && magnitude.is_finite()) {
        return Err(Error::InvalidParameter(format!("magnitude {magnitude} must be positive")));
    }

    let mut signs = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if i == j {
                signs.set(i, j, 1.0);
            } else if rng.bernoulli(edge_prob) {
                signs.set(i, j, if rng.bernoulli(0.5) { 1.0 } else { -1.0 });
            }
        }
    }
    let mut base = signs;
    base.scale(magnitude);
    let coeffs = vec![base; lags];

    let scale = rescale_factor(&coeffs, target_radius)?;
    let coeffs = coeffs
        .into_iter()
        .map(|mut a| {
            a.scale(scale);
            a
        })
        .collect();
    VarProcess::new(coeffs, noise_sigma)
}

/// Finds `c > 0` with `rho(companion(c * coeffs)) == target` by bracketing
/// and bisection on the continuous map `c -> rho(c)`.
fn rescale_factor(coeffs: &[Matrix], target: f64) -> Result<f64> {
    let radius_at = |c: f64| {
        let scaled: Vec<Matrix> = coeffs
            .iter()
            .map(|a| {
                let mut a = a.clone();
                a.scale(c);
                a
            })
            .collect();
        spectral_radius(&companion_matrix(&scaled))
    };
    if radius_at(1.0) == 0.0 {
        return Err(Error::InvalidParameter(
            "cannot rescale a VAR with zero spectral radius".into(),
        ));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while radius_at(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::InvalidParameter("VAR rescaling did not bracket".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if radius_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick whichever bracket end lands closer to the target.
    let (rl, rh) = (radius_at(lo), radius_at(hi));
    Ok(if (rl - target).abs() <= (rh - target).abs() { lo } else { hi })
}

/// Simulates `t_len` observations after discarding `burn_in` leading rows,
/// starting from an all-zero history.
pub fn simulate_var(
    process: &VarProcess,
    t_len: usize,
    rng: &mut SeededRng,
    burn_in: usize,
) -> Result<TimeSeries> {
    simulate_var_from(process, t_len, rng, burn_in, None)
}

/// Like [`simulate_var`], but `first` (if given) replaces the first
/// generated observation.
pub fn simulate_var_from(
    process: &VarProcess,
    t_len: usize,
    rng: &mut SeededRng,
    burn_in: usize,
    first: Option<&[f64]>,
) -> Result<TimeSeries> {
    if t_len == 0 {
        return Err(Error::InvalidParameter("T must be at least 1".into()));
    }
    let p = process.dim();
    let lags = process.lags();
    if let Some(x0) = first {
        if x0.len() != p {
            return Err(Error::Dimension(format!("initial state has length {}", x0.len())));
        }
    }
    let total = burn_in + t_len;
    // History rows: `lags` zero rows, followed by generated rows.
    let mut hist = vec![0.0; (lags + total) * p];
    for t in 0..total {
        let row = lags + t;
        let x_t: Vec<f64> = match (t, first) {
            (0, Some(x0)) => x0.to_vec(),
            _ => {
                let mut x = gauss_sample(rng, p, process.noise_sigma)?;
                for (k, a) in process.coeffs.iter().enumerate() {
                    let past = &hist[(row - k - 1) * p..(row - k) * p];
                    for (i, xi) in x.iter_mut().enumerate() {
                        *xi += crate::math::dot(a.row(i), past);
                    }
                }
                x
            }
        };
        if x_t.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::Divergence(format!("VAR state overflowed at step {t}")));
        }
        hist[row * p..(row + 1) * p].copy_from_slice(&x_t);
    }
    let start = (lags + burn_in) * p;
    TimeSeries::new(Matrix::from_vec(t_len, p, hist[start..].to_vec())?)
}

/// Lorenz-96 generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorenzConfig {
    pub p: usize,
    #[serde(default = "LorenzConfig::default_forcing")]
    pub forcing: f64,
    #[serde(default = "LorenzConfig::default_dt")]
    pub dt: f64,
    /// Standard deviation of the additive Gaussian noise injected per step.
    #[serde(default = "LorenzConfig::default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "LorenzConfig::default_burn_in")]
    pub burn_in: usize,
    /// Standard deviation of the perturbation around the `F` equilibrium
    /// used as initial state.
    #[serde(default = "LorenzConfig::default_init_sigma")]
    pub init_sigma: f64,
}

impl LorenzConfig {
    fn default_forcing() -> f64 {
        5.0
    }
    fn default_dt() -> f64 {
        0.01
    }
    fn default_noise_sigma() -> f64 {
        0.01
    }
    fn default_burn_in() -> usize {
        1000
    }
    fn default_init_sigma() -> f64 {
        0.1
    }
}

impl Default for LorenzConfig {
    fn default() -> Self {
        Self {
            p: 10,
            forcing: Self::default_forcing(),
            dt: Self::default_dt(),
            noise_sigma: Self::default_noise_sigma(),
            burn_in: Self::default_burn_in(),
            init_sigma: Self::default_init_sigma(),
        }
    }
}

/// Right-hand side `(x[i+1] - x[i-2]) * x[i-1] - x[i] + F` on a ring.
pub fn lorenz_derivative(x: &[f64], forcing: f64) -> Result<Vec<f64>> {
    let p = x.len();
    if p < 4 {
        return Err(Error::InvalidParameter(format!(
            "Lorenz-96 needs at least 4 series, got {p}"
        )));
    }
    Ok((0..p)
        .map(|i| {
            let next = x[(i + 1) % p];
            let prev = x[(i + p - 1) % p];
            let prev2 = x[(i + p - 2) % p];
            (next - prev2) * prev - x[i] + forcing
        })
        .collect())
}

/// Causal graph of the Lorenz-96 ring: series `i` depends on
/// `i-2, i-1, i, i+1` (mod p).
pub fn lorenz_truth(p: usize) -> GrangerGraph {
    let mut w = Matrix::zeros(p, p);
    for i in 0..p {
        for offset in [p - 2, p - 1, 0, 1] {
            w.set(i, (i + offset) % p, 1.0);
        }
    }
    GrangerGraph::from_matrix(w).expect("nonnegative")
}

/// Euler-integrates Lorenz-96 from `F` plus a seeded perturbation.
pub fn simulate_lorenz(
    cfg: &LorenzConfig,
    t_len: usize,
    rng: &mut SeededRng,
) -> Result<(TimeSeries, GrangerGraph)> {
    if cfg.p < 4 {
        return Err(Error::InvalidParameter(format!(
            "Lorenz-96 needs at least 4 series, got {}",
            cfg.p
        )));
    }
    let init: Vec<f64> = gauss_sample(rng, cfg.p, cfg.init_sigma)?
        .into_iter()
        .map(|d| cfg.forcing + d)
        .collect();
    simulate_lorenz_from(cfg, t_len, rng, &init)
}

/// Euler integration from an explicit initial state. Row 0 of the full
/// trajectory is `init`; the first `burn_in` rows are discarded.
pub fn simulate_lorenz_from(
    cfg: &LorenzConfig,
    t_len: usize,
    rng: &mut SeededRng,
    init: &[f64],
) -> Result<(TimeSeries, GrangerGraph)> {
    if t_len == 0 {
        return Err(Error::InvalidParameter("T must be at least 1".into()));
    }
    if !(cfg.dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {}", cfg.dt)));
    }
    if !(cfg.noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise sigma {} < 0", cfg.noise_sigma)));
    }
    let p = cfg.p;
    if init.len() != p {
        return Err(Error::Dimension(format!("initial state has length {}", init.len())));
    }
    let mut out = Vec::with_capacity(t_len * p);
    let mut x = init.to_vec();
    for step in 0..cfg.burn_in + t_len {
        if step >= cfg.burn_in {
            out.extend_from_slice(&x);
        }
        let d = lorenz_derivative(&x, cfg.forcing)?;
        let noise = gauss_sample(rng, p, cfg.noise_sigma)?;
        for i in 0..p {
            x[i] += cfg.dt * d[i] + noise[i];
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::Divergence(format!("Lorenz-96 state diverged at step {step}")));
        }
    }
    let series = TimeSeries::new(Matrix::from_vec(t_len, p, out)?)?;
    Ok((series, lorenz_truth(p)))
}

/// Either synthetic generator, as selected in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Generator {
    Var(VarConfig),
    Lorenz(LorenzConfig),
}

impl Generator {
    pub fn name(&self) -> &'static str {
        match self {
            Generator::Var(_) => "var",
            Generator::Lorenz(_) => "lorenz",
        }
    }

    pub fn p(&self) -> usize {
        match self {
            Generator::Var(c) => c.p,
            Generator::Lorenz(c) => c.p,
        }
    }

    /// Draws a dataset and its ground truth; a pure function of `(self, seed)`.
    pub fn generate(&self, t_len: usize, seed: u64) -> Result<(TimeSeries, GrangerGraph)> {
        let root = SeededRng::new(seed);
        match self {
            Generator::Var(cfg) => {
                let process = make_sparse_var(&mut root.child(0), cfg)?;
                let ts = simulate_var(&process, t_len, &mut root.child(1), cfg.burn_in)?;
                Ok((ts, process.truth))
            }
            Generator::Lorenz(cfg) => simulate_lorenz(cfg, t_len, &mut root.child(0)),
        }
    }
}

/// Per-series affine transform applied by [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardization {
    pub fn invert(&self, ts: &TimeSeries) -> Result<TimeSeries> {
        let mut m = ts.values().clone();
        for t in 0..m.rows() {
            for (j, v) in m.row_mut(t).iter_mut().enumerate() {
                *v = *v * self.stds[j] + self.means[j];
            }
        }
        TimeSeries::new(m)
    }
}

/// Centers every column and scales it to unit population standard deviation.
pub fn standardize(ts: &TimeSeries) -> Result<(TimeSeries, Standardization)> {
    let (n, p) = (ts.len(), ts.dim());
    let mut means = vec![0.0; p];
    let mut stds = vec![0.0; p];
    let vals = ts.values();
    for j in 0..p {
        let col = vals.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        // Relative cutoff so a constant column with rounding noise still counts.
        if !(var > 1e-24 * mean.abs().max(1.0).powi(2)) {
            return Err(Error::ZeroVariance { column: j });
        }
        means[j] = mean;
        stds[j] = var.sqrt();
    }
    let mut m = vals.clone();
    for t in 0..n {
        for (j, v) in m.row_mut(t).iter_mut().enumerate() {
            *v = (*v - means[j]) / stds[j];
        }
    }
    Ok((TimeSeries::new(m)?, Standardization { means, stds }))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Spectral radius via repeated squaring of the normalized matrix
    /// (Gelfand's formula with 2^40 powers).
    fn radius_by_powering(m: &Matrix) -> f64 {
        let n = m.rows();
        let mut a = m.clone();
        let mut log_rho = 0.0;
        let mut weight = 1.0;
        for _ in 0..40 {
            let s = a.frobenius_norm();
            if s == 0.0 {
                return 0.0;
            }
            log_rho += weight * s.ln();
            a.scale(1.0 / s);
            let mut sq = Matrix::zeros(n, n);
            for i in 0..n {
                for k in 0..n {
                    let aik = a.get(i, k);
                    if aik == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        sq.set(i, j, sq.get(i, j) + aik * a.get(k, j));
                    }
                }
            }
            a = sq;
            weight *= 0.5;
        }
        log_rho += weight * a.frobenius_norm().ln();
        log_rho.exp()
    }

    fn var_cfg(p: usize, lags: usize, edge_prob: f64) -> VarConfig {
        VarConfig {
            p,
            lags,
            edge_prob,
            ..VarConfig::default()
        }
    }

    #[test]
    fn no_edges_gives_identity_truth() {
        let proc = make_sparse_var(&mut SeededRng::new(3), &var_cfg(6, 2, 0.0)).unwrap();
        assert_eq!(proc.truth.weights(), &Matrix::identity(6));
    }

    #[test]
    fn edge_density_within_binomial_bounds() {
        let proc = make_sparse_var(&mut SeededRng::new(11), &var_cfg(10, 3, 0.2)).unwrap();
        let w = proc.truth.weights();
        let mut off = 0;
        for i in 0..10 {
            assert_eq!(w.get(i, i), 1.0);
            for j in 0..10 {
                if i != j && w.get(i, j) == 1.0 {
                    off += 1;
                }
            }
        }
        // Binomial(90, 0.2): mean 18, sd 3.79; 99% two-sided bounds [8, 28].
        assert!((8..=28).contains(&off), "off-diagonal edges {off}");
    }

    #[test]
    fn radius_closed_forms() {
        // Scaled rotation: eigenvalues 0.9 * exp(+-i * 0.7).
        let (c, sn) = (0.7f64.cos(), 0.7f64.sin());
        let rot = Matrix::from_rows(&[vec![0.9 * c, -0.9 * sn], vec![0.9 * sn, 0.9 * c]]).unwrap();
        assert!((spectral_radius(&rot) - 0.9).abs() < 1e-12);
        // Jordan block: a single defective eigenvalue 0.5.
        let jordan = Matrix::from_rows(&[vec![0.5, 1.0], vec![0.0, 0.5]]).unwrap();
        assert!((spectral_radius(&jordan) - 0.5).abs() < 1e-12);
        let nilpotent = Matrix::from_rows(&[vec![0.0, 3.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(spectral_radius(&nilpotent), 0.0);
        // AR(2) x_t = 0.5 x_{t-1} + 0.3 x_{t-2}: roots of z^2 - 0.5 z - 0.3.
        let ar2 = companion_matrix(&[
            Matrix::from_vec(1, 1, vec![0.5]).unwrap(),
            Matrix::from_vec(1, 1, vec![0.3]).unwrap(),
        ]);
        let root = (0.5 + (0.25f64 + 1.2).sqrt()) / 2.0;
        assert!((spectral_radius(&ar2) - root).abs() < 1e-12);
    }

    #[test]
    fn rescaled_radius_hits_target() {
        for seed in 0..5 {
            let cfg = VarConfig {
                target_radius: 0.8 + 0.03 * seed as f64,
                ..var_cfg(6, 3, 0.3)
            };
            let proc = make_sparse_var(&mut SeededRng::new(seed), &cfg).unwrap();
            let oracle = radius_by_powering(&companion_matrix(&proc.coeffs));
            assert!(
                (oracle - cfg.target_radius).abs() < 1e-8,
                "seed {seed}: oracle {oracle} vs target {}",
                cfg.target_radius
            );
            assert!((proc.spectral_radius() - cfg.target_radius).abs() < 1e-8);
        }
    }

    #[test]
    fn truth_zero_implies_coefficients_zero() {
        for seed in 0..10 {
            let proc = make_sparse_var(&mut SeededRng::new(seed), &var_cfg(8, 3, 0.25)).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    let any = proc.coeffs.iter().any(|a| a.get(i, j) != 0.0);
                    assert_eq!(proc.truth.weights().get(i, j) == 1.0, any);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_var_parameters() {
        let mut rng = SeededRng::new(0);
        assert!(make_sparse_var(&mut rng, &VarConfig { target_radius: 1.0, ..var_cfg(3, 1, 0.2) }).is_err());
        assert!(make_sparse_var(&mut rng, &var_cfg(3, 1, 1.5)).is_err());
        let zero = VarConfig { magnitude: 0.0, ..var_cfg(3, 1, 0.2) };
        assert!(make_sparse_var(&mut rng, &zero).is_err());
    }

    #[test]
    fn noiseless_var_from_zero_stays_zero() {
        let proc = VarProcess::new(vec![Matrix::identity(3)], 0.0).unwrap();
        let mut scaled = proc.clone();
        scaled.coeffs[0].scale(0.5);
        let ts = simulate_var(&scaled, 20, &mut SeededRng::new(1), 5).unwrap();
        assert!(ts.values().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_var_halves() {
        let a = Matrix::from_vec(1, 1, vec![0.5]).unwrap();
        let proc = VarProcess::new(vec![a], 0.0).unwrap();
        let ts = simulate_var_from(&proc, 5, &mut SeededRng::new(0), 0, Some(&[1.0])).unwrap();
        assert_eq!(ts.values().column(0), vec![1.0, 0.5, 0.25, 0.125, 0.0625]);
    }

    #[test]
    fn stable_var_has_bounded_variance() {
        let proc = make_sparse_var(&mut SeededRng::new(2), &var_cfg(5, 2, 0.3)).unwrap();
        let ts = simulate_var(&proc, 10_000, &mut SeededRng::new(9), 200).unwrap();
        for j in 0..5 {
            let col = ts.values().column(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(var.is_finite() && var > 0.0 && var < 10.0, "var {var}");
        }
    }

    #[test]
    fn unstable_var_reports_divergence() {
        let a = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        let proc = VarProcess::new(vec![a], 0.0).unwrap();
        let err = simulate_var_from(&proc, 200, &mut SeededRng::new(0), 0, Some(&[1.0])).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
    }

    #[test]
    fn var_simulation_is_deterministic() {
        let proc = make_sparse_var(&mut SeededRng::new(4), &var_cfg(4, 2, 0.3)).unwrap();
        let a = simulate_var(&proc, 50, &mut SeededRng::new(8), 10).unwrap();
        let b = simulate_var(&proc, 50, &mut SeededRng::new(8), 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lorenz_derivative_examples() {
        let d = lorenz_derivative(&[5.0; 7], 5.0).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
        let d = lorenz_derivative(&[1.0, 0.0, 0.0, 0.0, 0.0], 5.0).unwrap();
        assert_eq!(d, vec![4.0, 5.0, 5.0, 5.0, 5.0]);
        let d = lorenz_derivative(&[0.0; 6], 5.0).unwrap();
        assert_eq!(d, vec![5.0; 6]);
        assert!(lorenz_derivative(&[0.0; 3], 5.0).is_err());
    }

    #[test]
    fn lorenz_truth_structure() {
        let g = lorenz_truth(10);
        let row0: Vec<usize> = (0..10).filter(|&j| g.weights().get(0, j) == 1.0).collect();
        assert_eq!(row0, vec![0, 1, 8, 9]);
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(g.weights().get(i, j), g.weights().get((i + 1) % 10, (j + 1) % 10));
            }
        }
    }

    #[test]
    fn lorenz_equilibrium_is_preserved() {
        let cfg = LorenzConfig {
            noise_sigma: 0.0,
            burn_in: 10,
            ..LorenzConfig::default()
        };
        let (ts, _) = simulate_lorenz_from(&cfg, 50, &mut SeededRng::new(0), &[5.0; 10]).unwrap();
        assert!(ts.values().as_slice().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn lorenz_trajectory_bounded_and_moving() {
        let cfg = LorenzConfig::default();
        let (ts, truth) = simulate_lorenz(&cfg, 1000, &mut SeededRng::new(1)).unwrap();
        assert_eq!(truth, lorenz_truth(10));
        let vals = ts.values().as_slice();
        assert!(vals.iter().all(|v| v.abs() < 50.0));
        for j in 0..10 {
            let col = ts.values().column(j);
            let (lo, hi) = col.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            assert!(hi - lo > 0.5, "series {j} nearly constant: range {}", hi - lo);
        }
        let (again, _) = simulate_lorenz(&cfg, 1000, &mut SeededRng::new(1)).unwrap();
        assert_eq!(ts, again);
    }

    fn rk4_reference(x0: &[f64], forcing: f64, horizon: f64, steps: usize) -> Vec<f64> {
        let h = horizon / steps as f64;
        let mut x = x0.to_vec();
        let add = |x: &[f64], d: &[f64], s: f64| -> Vec<f64> {
            x.iter().zip(d).map(|(a, b)| a + s * b).collect()
        };
        for _ in 0..steps {
            let k1 = lorenz_derivative(&x, forcing).unwrap();
            let k2 = lorenz_derivative(&add(&x, &k1, h / 2.0), forcing).unwrap();
            let k3 = lorenz_derivative(&add(&x, &k2, h / 2.0), forcing).unwrap();
            let k4 = lorenz_derivative(&add(&x, &k3, h), forcing).unwrap();
            for i in 0..x.len() {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        x
    }

    #[test]
    fn euler_is_first_order() {
        let x0: Vec<f64> = (0..8).map(|i| 5.0 + 0.3 * (i as f64).sin()).collect();
        let horizon = 0.2;
        let exact = rk4_reference(&x0, 5.0, horizon, 20_000);
        let error_at = |dt: f64| {
            let steps = (horizon / dt).round() as usize;
            let cfg = LorenzConfig {
                p: 8,
                dt,
                noise_sigma: 0.0,
                burn_in: steps,
                ..LorenzConfig::default()
            };
            let (ts, _) = simulate_lorenz_from(&cfg, 1, &mut SeededRng::new(0), &x0).unwrap();
            ts.at(0).iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let ratio = error_at(0.01) / error_at(0.005);
        assert!((ratio - 2.0).abs() < 0.2, "error ratio {ratio}");
    }

    #[test]
    fn standardize_examples() {
        let ts = TimeSeries::new(Matrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let (z, tf) = standardize(&ts).unwrap();
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in z.values().column(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(tf.means, vec![2.0]);
        assert!((tf.stds[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);

        let (zz, _) = standardize(&z).unwrap();
        for (a, b) in zz.values().as_slice().iter().zip(z.values().as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        let back = tf.invert(&z).unwrap();
        for (a, b) in back.values().as_slice().iter().zip(ts.values().as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_centers_columns() {
        let proc = make_sparse_var(&mut SeededRng::new(1), &var_cfg(4, 1, 0.5)).unwrap();
        let ts = simulate_var(&proc, 300, &mut SeededRng::new(2), 10).unwrap();
        let (z, _) = standardize(&ts).unwrap();
        for j in 0..4 {
            let mean = z.values().column(j).iter().sum::<f64>() / 300.0;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_names_constant_column() {
        let m = Matrix::from_rows(&[vec![1.0, 4.0], vec![2.0, 4.0], vec![3.0, 4.0]]).unwrap();
        let err = standardize(&TimeSeries::new(m).unwrap()).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance { column: 1 }));
    }
}
