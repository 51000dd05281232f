//! Parameter state, hyperparameters, data container and the joint density.
//!
//! Responses follow `y_it ~ N(x_t' beta*_{s_i, r} + u_{i r}, sigma2_r)` with
//! `r` the regime active at time `t`. Spatial effects have the Leroux CAR
//! prior `u_r ~ N(0, tau2_r Q(zeta_r)^{-1})` and coefficients are exchangeable
//! draws from `N(mu_beta_r, diag(sigma_beta_r))`.

mod scenario;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::GridTopology;
use crate::partitions::{log_prior_unnormalized, Partition, PriorSpec};
use crate::timeline::{HarmonicDesign, RegimeSchedule};

pub use scenario::{simulate_dataset, CovariateSpec, MissingSpec, RegimeTruth, ScenarioSpec, SimulatedData};

/// Covariate rows `x_t`, `T x K` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    n_times: usize,
    dim: usize,
    values: Vec<f64>,
}

impl Design {
    pub fn new(n_times: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("design must have at least one column".into()));
        }
        if values.len() != n_times * dim {
            return Err(Error::Dimension(format!(
                "design of {n_times}x{dim} needs {} values, got {}",
                n_times * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("design contains non-finite values".into()));
        }
        Ok(Self { n_times, dim, values })
    }

    pub fn harmonic(h: &HarmonicDesign) -> Self {
        Self {
            n_times: h.n_times(),
            dim: h.dim(),
            values: h.matrix(),
        }
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Responses on the grid with a missingness mask.
///
/// Values are stored cell-major (`values[i * T + t]`), with `NaN` at
/// missing entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    topology: GridTopology,
    design: Design,
    values: Vec<f64>,
    missing: Vec<(usize, usize)>,
    slot: Vec<usize>,
    observed: Vec<(usize, usize)>,
}

const NO_SLOT: usize = usize::MAX;

impl Dataset {
    /// `values` is cell-major; `None` marks a missing entry.
    pub fn new(topology: GridTopology, design: Design, values: Vec<Option<f64>>) -> Result<Self> {
        let n = topology.n_cells();
        let t_len = design.n_times();
        if values.len() != n * t_len {
            return Err(Error::Dimension(format!(
                "expected {} cells x {} times = {} values, got {}",
                n,
                t_len,
                n * t_len,
                values.len()
            )));
        }
        let mut missing = Vec::new();
        let mut observed = Vec::new();
        let mut slot = vec![NO_SLOT; n * t_len];
        let mut flat = Vec::with_capacity(values.len());
        for i in 0..n {
            for t in 0..t_len {
                match values[i * t_len + t] {
                    Some(v) if v.is_finite() => {
                        observed.push((i, t));
                        flat.push(v);
                    }
                    Some(v) => {
                        return Err(Error::Data(format!(
                            "non-finite observed value {v} at cell {}, time {}",
                            i + 1,
                            t + 1
                        )))
                    }
                    None => {
                        slot[i * t_len + t] = missing.len();
                        missing.push((i, t));
                        flat.push(f64::NAN);
                    }
                }
            }
        }
        Ok(Self {
            topology,
            design,
            values: flat,
            missing,
            slot,
            observed,
        })
    }

    pub fn topology(&self) -> &GridTopology {
        &self.topology
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn n_cells(&self) -> usize {
        self.topology.n_cells()
    }

    pub fn n_times(&self) -> usize {
        self.design.n_times()
    }

    pub fn dim(&self) -> usize {
        self.design.dim()
    }

    /// Observed value, `None` if missing.
    pub fn value(&self, cell: usize, t: usize) -> Option<f64> {
        let v = self.values[cell * self.n_times() + t];
        (!v.is_nan()).then_some(v)
    }

    /// Raw cell-major storage with `NaN` at missing entries.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    /// Missing entries in cell-major order; position = imputation slot.
    pub fn missing(&self) -> &[(usize, usize)] {
        &self.missing
    }

    /// Observed entries in cell-major order; position = observation index.
    pub fn observed(&self) -> &[(usize, usize)] {
        &self.observed
    }

    pub fn missing_slot(&self, cell: usize, t: usize) -> Option<usize> {
        let s = self.slot[cell * self.n_times() + t];
        (s != NO_SLOT).then_some(s)
    }

    /// Copy with replaced observed values (same mask); used to regenerate data.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Dimension("value count changed".into()));
        }
        let mut out = self.clone();
        for (k, v) in values.into_iter().enumerate() {
            if out.slot[k] == NO_SLOT {
                out.values[k] = v;
            }
        }
        Ok(out)
    }
}

/// Inverse-gamma distribution with density proportional to
/// `x^{-(shape + 1)} exp(-scale / x)`; mean `scale / (shape - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGamma {
    pub shape: f64,
    pub scale: f64,
}

impl InvGamma {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
            return Err(Error::Parameter(format!(
                "inverse-gamma parameters must be positive, got ({shape}, {scale})"
            )));
        }
        Ok(Self { shape, scale })
    }

    pub fn mean(&self) -> f64 {
        self.scale / (self.shape - 1.0)
    }

    pub fn variance(&self) -> f64 {
        let a = self.shape;
        self.scale * self.scale / ((a - 1.0) * (a - 1.0) * (a - 2.0))
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        let (a, b) = (self.shape, self.scale);
        a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x
    }

    /// Draws via `scale / Gamma(shape, 1)`.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = rand_distr::Gamma::new(self.shape, 1.0).expect("validated shape");
        self.scale / rng.sample(g)
    }
}

/// Inverse-gamma pair with the requested mean and variance.
pub fn elicit_inverse_gamma(mean: f64, variance: f64) -> Result<InvGamma> {
    if !(mean > 0.0 && variance > 0.0) {
        return Err(Error::Parameter(format!(
            "mean and variance must be positive, got ({mean}, {variance})"
        )));
    }
    let shape = mean * mean / variance + 2.0;
    InvGamma::new(shape, mean * (shape - 1.0))
}

/// Spatial dependence either fixed or with a Beta prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ZetaPrior {
    Fixed { value: f64 },
    Beta { a: f64, b: f64 },
}

impl ZetaPrior {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ZetaPrior::Fixed { value } if (0.0..1.0).contains(&value) => Ok(()),
            ZetaPrior::Fixed { value } => Err(Error::Parameter(format!(
                "fixed zeta must lie in [0, 1), got {value}"
            ))),
            ZetaPrior::Beta { a, b } if a > 0.0 && b > 0.0 => Ok(()),
            ZetaPrior::Beta { a, b } => Err(Error::Parameter(format!(
                "beta prior parameters must be positive, got ({a}, {b})"
            ))),
        }
    }

    /// Log prior density; fixed mode is a point mass.
    pub fn ln_pdf(&self, zeta: f64) -> f64 {
        match *self {
            ZetaPrior::Fixed { value } => {
                if zeta == value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            ZetaPrior::Beta { a, b } => {
                if !(zeta > 0.0 && zeta < 1.0) {
                    return f64::NEG_INFINITY;
                }
                (a - 1.0) * zeta.ln() + (b - 1.0) * (1.0 - zeta).ln() - ln_beta(a, b)
            }
        }
    }

    /// Starting value: the fixed value or the prior mean.
    pub fn initial(&self) -> f64 {
        match *self {
            ZetaPrior::Fixed { value } => value,
            ZetaPrior::Beta { a, b } => a / (a + b),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, ZetaPrior::Fixed { .. })
    }
}

/// Hyperparameters shared by every regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Prior mean of `mu_beta`; empty means the zero vector.
    #[serde(default)]
    pub m_beta: Vec<f64>,
    #[serde(default = "default_sigma_beta")]
    pub sigma_beta: InvGamma,
    #[serde(default = "default_variance_prior")]
    pub tau2: InvGamma,
    #[serde(default = "default_variance_prior")]
    pub sigma2: InvGamma,
    #[serde(default = "default_partition")]
    pub partition: PriorSpec,
    #[serde(default = "default_zeta")]
    pub zeta: ZetaPrior,
}

fn default_sigma_beta() -> InvGamma {
    InvGamma { shape: 102.0, scale: 101.0 }
}

fn default_variance_prior() -> InvGamma {
    InvGamma { shape: 12.0, scale: 11.0 }
}

fn default_partition() -> PriorSpec {
    PriorSpec::appm(1.0, 1.0).expect("valid default")
}

fn default_zeta() -> ZetaPrior {
    ZetaPrior::Beta { a: 1.0, b: 1.0 }
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            m_beta: Vec::new(),
            sigma_beta: default_sigma_beta(),
            tau2: default_variance_prior(),
            sigma2: default_variance_prior(),
            partition: default_partition(),
            zeta: default_zeta(),
        }
    }
}

impl Hyperparameters {
    /// `m_beta` expanded to dimension `k`.
    pub fn m_beta(&self, k: usize) -> Result<Vec<f64>> {
        if self.m_beta.is_empty() {
            Ok(vec![0.0; k])
        } else if self.m_beta.len() == k {
            Ok(self.m_beta.clone())
        } else {
            Err(Error::Dimension(format!(
                "m_beta has length {}, design has {k} columns",
                self.m_beta.len()
            )))
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        self.m_beta(k)?;
        for ig in [self.sigma_beta, self.tau2, self.sigma2] {
            InvGamma::new(ig.shape, ig.scale)?;
        }
        PriorSpec::new(self.partition.kappa, self.partition.xi, self.partition.variant)?;
        self.zeta.validate()
    }
}

/// Parameters owned by one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeState {
    pub partition: Partition,
    /// One coefficient vector per cluster, indexed by canonical label.
    pub beta: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub tau2: f64,
    pub sigma2: f64,
    pub zeta: f64,
    pub mu_beta: Vec<f64>,
    /// Diagonal of the coefficient covariance.
    pub sigma_beta: Vec<f64>,
}

impl RegimeState {
    /// Linear predictor `x' beta*_{s_i}`.
    #[inline]
    pub fn fitted(&self, cell: usize, x: &[f64]) -> f64 {
        dot(x, &self.beta[self.partition.labels()[cell]])
    }
}

/// Full parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub regimes: Vec<RegimeState>,
    pub schedule: RegimeSchedule,
    /// Imputed responses, one per missing slot of the dataset.
    pub imputed: Vec<f64>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var)
}

impl ModelState {
    /// Mean of `y_it` under the current parameters.
    #[inline]
    pub fn mean(&self, data: &Dataset, cell: usize, t: usize) -> f64 {
        let reg = &self.regimes[self.schedule.regime_of(t)];
        reg.fitted(cell, data.design().row(t)) + reg.u[cell]
    }

    /// Observed value or current imputation.
    #[inline]
    pub fn completed(&self, data: &Dataset, cell: usize, t: usize) -> f64 {
        match data.missing_slot(cell, t) {
            Some(s) => self.imputed[s],
            None => data.raw_values()[cell * data.n_times() + t],
        }
    }

    /// Checks dimensions and parameter ranges against `data`.
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        let (n, k) = (data.n_cells(), data.dim());
        if self.schedule.n_times() != data.n_times() {
            return Err(Error::Dimension(format!(
                "schedule covers {} times, data has {}",
                self.schedule.n_times(),
                data.n_times()
            )));
        }
        if self.regimes.len() != self.schedule.n_regimes() {
            return Err(Error::Dimension(format!(
                "{} regime states for {} regimes",
                self.regimes.len(),
                self.schedule.n_regimes()
            )));
        }
        if self.imputed.len() != data.missing().len() {
            return Err(Error::Dimension(format!(
                "{} imputations for {} missing entries",
                self.imputed.len(),
                data.missing().len()
            )));
        }
        for (r, reg) in self.regimes.iter().enumerate() {
            if reg.partition.n_items() != n || reg.u.len() != n {
                return Err(Error::Dimension(format!("regime {} does not cover {n} cells", r + 1)));
            }
            if reg.beta.len() != reg.partition.n_clusters() {
                return Err(Error::Dimension(format!(
                    "regime {} has {} coefficient vectors for {} clusters",
                    r + 1,
                    reg.beta.len(),
                    reg.partition.n_clusters()
                )));
            }
            if reg.beta.iter().any(|b| b.len() != k) || reg.mu_beta.len() != k || reg.sigma_beta.len() != k {
                return Err(Error::Dimension(format!("regime {} coefficients are not of length {k}", r + 1)));
            }
            let positive = [reg.tau2, reg.sigma2].into_iter().chain(reg.sigma_beta.iter().copied());
            if positive.into_iter().any(|v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::Parameter(format!("regime {} has a nonpositive variance", r + 1)));
            }
            if !(0.0..1.0).contains(&reg.zeta) {
                return Err(Error::Parameter(format!(
                    "regime {} zeta {} outside [0, 1)",
                    r + 1,
                    reg.zeta
                )));
            }
        }
        Ok(())
    }
}

/// Which entries enter the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodMode {
    /// Observed entries only.
    Observed,
    /// Observed entries plus the current imputations.
    Complete,
}

/// Gaussian log-likelihood of the responses.
pub fn log_likelihood(state: &ModelState, data: &Dataset, mode: LikelihoodMode) -> Result<f64> {
    state.validate(data)?;
    let regimes = state.schedule.regimes();
    let mut total = 0.0;
    for i in 0..data.n_cells() {
        for t in 0..data.n_times() {
            let y = match (data.value(i, t), mode) {
                (Some(v), _) => v,
                (None, LikelihoodMode::Complete) => state.completed(data, i, t),
                (None, LikelihoodMode::Observed) => continue,
            };
            let reg = &state.regimes[regimes[t]];
            total += ln_normal(y, state.mean(data, i, t), reg.sigma2);
        }
    }
    Ok(total)
}

/// Log-likelihood of each observed entry, in [`Dataset::observed`] order.
pub fn pointwise_log_likelihood(state: &ModelState, data: &Dataset) -> Result<Vec<f64>> {
    state.validate(data)?;
    Ok(data
        .observed()
        .iter()
        .map(|&(i, t)| {
            let reg = &state.regimes[state.schedule.regime_of(t)];
            let y = data.raw_values()[i * data.n_times() + t];
            ln_normal(y, state.mean(data, i, t), reg.sigma2)
        })
        .collect())
}

/// `log N(u; 0, tau2 Q(zeta)^{-1})`.
pub fn car_log_density(topology: &GridTopology, u: &[f64], tau2: f64, zeta: f64) -> Result<f64> {
    let q = topology.leroux_precision(zeta)?;
    let n = u.len() as f64;
    Ok(-0.5 * n * (2.0 * PI).ln() - 0.5 * n * tau2.ln() + 0.5 * q.log_det() - q.quad_form(u) / (2.0 * tau2))
}

/// Joint log prior of all parameters. The partition term omits the
/// normalising constant of the cohesion prior.
pub fn log_prior(state: &ModelState, hyper: &Hyperparameters, topology: &GridTopology) -> Result<f64> {
    let k = state.regimes.first().map_or(0, |r| r.mu_beta.len());
    let m = hyper.m_beta(k)?;
    let mut total = 0.0;
    for reg in &state.regimes {
        if [reg.tau2, reg.sigma2].iter().chain(&reg.sigma_beta).any(|v| !(*v > 0.0)) {
            return Err(Error::Parameter("variances must be positive".into()));
        }
        if !(0.0..1.0).contains(&reg.zeta) {
            return Err(Error::Parameter(format!("zeta {} outside [0, 1)", reg.zeta)));
        }
        total += car_log_density(topology, &reg.u, reg.tau2, reg.zeta)?;
        for b in &reg.beta {
            for l in 0..k {
                total += ln_normal(b[l], reg.mu_beta[l], reg.sigma_beta[l]);
            }
        }
        for l in 0..k {
            total += ln_normal(reg.mu_beta[l], m[l], reg.sigma_beta[l]);
            total += hyper.sigma_beta.ln_pdf(reg.sigma_beta[l]);
        }
        total += log_prior_unnormalized(&reg.partition, &hyper.partition, topology);
        total += hyper.tau2.ln_pdf(reg.tau2) + hyper.sigma2.ln_pdf(reg.sigma2);
        total += hyper.zeta.ln_pdf(reg.zeta);
    }
    let s = &state.schedule;
    let width = (2 * s.n_lambda() + 1) as f64;
    for (m, &c) in s.changepoints().iter().enumerate() {
        total += if s.in_support(m, c) { -width.ln() } else { f64::NEG_INFINITY };
    }
    Ok(total)
}
