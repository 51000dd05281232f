//! Metropolis-within-Gibbs sampler.
//!
//! One sweep updates, in order: missing responses, cluster coefficients,
//! coefficient means and variances, cluster allocations, spatial effects,
//! CAR scales, CAR dependence, residual variances and change-points.

mod output;
mod prior;
mod steps;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pointwise_log_likelihood, Dataset, Hyperparameters, ModelState, RegimeState};
use crate::partitions::{Partition, PriorSpec, PriorVariant, WeightRule};
use crate::summaries::PointwiseAccumulator;
use crate::timeline::RegimeSchedule;

pub use output::{input_hash, AcceptanceRate, ChainOutput, Draw, Manifest, RunningMoments, Variants, FORMAT_VERSION};
pub use prior::{draw_responses, PriorStateSampler};
pub use steps::{
    beta_conditional, changepoint_log_weights, missing_conditional, mu_beta_conditional, sigma2_conditional,
    sigma_beta_conditional, tau2_conditional, times_by_regime, u_conditional, update_allocations, update_beta_star,
    update_changepoints, update_missing, update_mu_sigma_beta, update_sigma2, update_tau2, update_u, update_zeta,
    zeta_log_target, AllocationVariant, ChangepointMode,
};

/// Partition model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// Cohesion with both the DP and the boundary terms.
    #[default]
    Appm,
    /// Boundary penalty switched off.
    DpOnly,
    /// Boundary penalty only.
    HbOnly,
    /// Every cell in one cluster; allocations are never updated.
    OneCluster,
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "appm" => Ok(Self::Appm),
            "dp-only" | "dp" => Ok(Self::DpOnly),
            "hb-only" | "hb" => Ok(Self::HbOnly),
            "one-cluster" => Ok(Self::OneCluster),
            _ => Err(Error::Config(format!("unknown model variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialPartition {
    #[default]
    OneCluster,
    Singletons,
}

fn one() -> usize {
    1
}

fn default_zeta_step() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub iterations: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thinning: usize,
    #[serde(default)]
    pub allocation: AllocationVariant,
    #[serde(default)]
    pub weights: WeightRule,
    #[serde(default)]
    pub changepoints: ChangepointMode,
    /// Standard deviation of the random-walk proposal on `logit(zeta)`.
    #[serde(default = "default_zeta_step")]
    pub zeta_step: f64,
    #[serde(default)]
    pub model: ModelVariant,
    #[serde(default)]
    pub seed: u64,
    /// Stream index; chains sharing a seed but not a stream are independent.
    #[serde(default)]
    pub chain: u64,
    #[serde(default)]
    pub initial_partition: InitialPartition,
    /// Keep the full draws x observations log-likelihood matrix.
    #[serde(default)]
    pub store_pointwise: bool,
    /// Keep every imputation draw rather than running moments only.
    #[serde(default)]
    pub store_imputations: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            burn_in: 1000,
            thinning: 1,
            allocation: AllocationVariant::default(),
            weights: WeightRule::default(),
            changepoints: ChangepointMode::default(),
            zeta_step: default_zeta_step(),
            model: ModelVariant::default(),
            seed: 0,
            chain: 0,
            initial_partition: InitialPartition::default(),
            store_pointwise: false,
            store_imputations: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if !(self.zeta_step > 0.0) || !self.zeta_step.is_finite() {
            return Err(Error::Config(format!("zeta_step must be positive, got {}", self.zeta_step)));
        }
        Ok(())
    }

    /// `floor((iterations - burn_in) / thinning)`.
    pub fn n_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }
}

/// Validated sampler bound to its hyperparameters.
#[derive(Debug, Clone)]
pub struct Sampler {
    config: SamplerConfig,
    hyper: Hyperparameters,
    prior: PriorSpec,
}

impl Sampler {
    pub fn new(config: SamplerConfig, hyper: Hyperparameters, dim: usize) -> Result<Self> {
        config.validate()?;
        hyper.validate(dim)?;
        let (kappa, xi) = (hyper.partition.kappa, hyper.partition.xi);
        let prior = match config.model {
            ModelVariant::Appm | ModelVariant::OneCluster => PriorSpec::new(kappa, xi, PriorVariant::Appm)?,
            ModelVariant::DpOnly => PriorSpec::new(kappa, xi, PriorVariant::DpOnly)?,
            ModelVariant::HbOnly => PriorSpec::new(kappa, xi, PriorVariant::HbOnly)?,
        };
        Ok(Self { config, hyper, prior })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    /// Partition prior used for allocations.
    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    /// Deterministic starting state: prior means, zero spatial effects and
    /// change-points at their current schedule values.
    pub fn initial_state(&self, data: &Dataset, schedule: &RegimeSchedule) -> Result<ModelState> {
        if schedule.n_times() != data.n_times() {
            return Err(Error::Dimension(format!(
                "schedule covers {} times, data has {}",
                schedule.n_times(),
                data.n_times()
            )));
        }
        let (n, k) = (data.n_cells(), data.dim());
        let m = self.hyper.m_beta(k)?;
        let partition = match (self.config.model, self.config.initial_partition) {
            (ModelVariant::OneCluster, _) | (_, InitialPartition::OneCluster) => Partition::one_cluster(n),
            (_, InitialPartition::Singletons) => Partition::singletons(n),
        };
        let regime = RegimeState {
            beta: vec![m.clone(); partition.n_clusters()],
            partition,
            u: vec![0.0; n],
            tau2: self.hyper.tau2.mean(),
            sigma2: self.hyper.sigma2.mean(),
            zeta: self.hyper.zeta.initial(),
            mu_beta: m,
            sigma_beta: vec![self.hyper.sigma_beta.mean(); k],
        };
        let state = ModelState {
            regimes: vec![regime; schedule.n_regimes()],
            schedule: schedule.clone(),
            imputed: vec![0.0; data.missing().len()],
        };
        state.validate(data)?;
        Ok(state)
    }

    /// One full sweep; returns the CAR-dependence acceptance flags.
    pub fn sweep<R: rand::Rng + ?Sized>(&self, state: &mut ModelState, data: &Dataset, rng: &mut R) -> Result<Vec<bool>> {
        let topology = data.topology();
        update_missing(state, data, rng);
        update_beta_star(state, data, rng)?;
        update_mu_sigma_beta(state, &self.hyper, rng)?;
        if self.config.model != ModelVariant::OneCluster {
            update_allocations(state, data, &self.prior, self.config.allocation, self.config.weights, rng)?;
        }
        update_u(state, data, rng)?;
        update_tau2(state, topology, &self.hyper, rng)?;
        let accepted = update_zeta(state, topology, &self.hyper.zeta, self.config.zeta_step, rng)?;
        update_sigma2(state, data, &self.hyper, rng);
        update_changepoints(state, data, self.config.changepoints, rng)?;
        Ok(accepted)
    }
}

/// Runs one chain from [`Sampler::initial_state`].
pub fn run_chain(config: &SamplerConfig, hyper: &Hyperparameters, data: &Dataset, schedule: &RegimeSchedule) -> Result<ChainOutput> {
    let sampler = Sampler::new(config.clone(), hyper.clone(), data.dim())?;
    let state = sampler.initial_state(data, schedule)?;
    run_chain_from(&sampler, state, data)
}

/// Runs one chain from a given state.
pub fn run_chain_from(sampler: &Sampler, mut state: ModelState, data: &Dataset) -> Result<ChainOutput> {
    state.validate(data)?;
    let config = sampler.config();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(config.chain);
    let n_regimes = state.regimes.len();
    let mut acceptance = vec![AcceptanceRate::default(); n_regimes];
    let mut out = ChainOutput::empty(sampler, data, &state.schedule);

    for iter in 1..=config.iterations {
        let accepted = sampler.sweep(&mut state, data, &mut rng)?;
        for (a, ok) in acceptance.iter_mut().zip(accepted) {
            a.proposed += 1;
            a.accepted += ok as usize;
        }
        if iter > config.burn_in && (iter - config.burn_in) % config.thinning == 0 {
            let pointwise = pointwise_log_likelihood(&state, data)?;
            if let Some(bad) = pointwise.iter().position(|v| !v.is_finite()) {
                let (i, t) = data.observed()[bad];
                return Err(Error::Numerical(format!(
                    "non-finite log-likelihood at cell {}, time {} (iteration {iter})",
                    i + 1,
                    t + 1
                )));
            }
            out.record(iter, &state, pointwise);
        }
    }
    out.zeta_acceptance = acceptance;
    out.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Accumulates pointwise log-likelihoods into a fresh accumulator; used by
/// callers that score states produced elsewhere.
pub fn accumulate_pointwise(states: &[ModelState], data: &Dataset) -> Result<PointwiseAccumulator> {
    let mut acc = PointwiseAccumulator::new(data.observed().len());
    for s in states {
        acc.push(&pointwise_log_likelihood(s, data)?);
    }
    Ok(acc)
}
