//! Forward simulation from the joint prior, used for simulation-based
//! calibration of the sampler.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{Dataset, Hyperparameters, ModelState, RegimeState, ZetaPrior};
use crate::grid::GridTopology;
use crate::partitions::{enumerate_prior, Partition, PriorSampler, PriorSpec, PriorTable, MAX_ENUMERATION_ITEMS};
use crate::timeline::RegimeSchedule;

fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, var: f64) -> f64 {
    mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal)
}

/// Exact or long-chain prior draws of the full parameter vector.
#[derive(Debug, Clone)]
pub struct PriorStateSampler {
    hyper: Hyperparameters,
    prior: PriorSpec,
    /// Present when the grid is small enough to enumerate.
    table: Option<PriorTable>,
}

impl PriorStateSampler {
    pub fn new(topology: &GridTopology, hyper: Hyperparameters, prior: PriorSpec) -> Result<Self> {
        let table = if topology.n_cells() <= MAX_ENUMERATION_ITEMS {
            Some(enumerate_prior(topology, &prior)?)
        } else {
            None
        };
        Ok(Self { hyper, prior, table })
    }

    fn partition<R: Rng + ?Sized>(&self, topology: &GridTopology, rng: &mut R) -> Result<Partition> {
        match &self.table {
            Some(t) => Ok(t.sample(rng).clone()),
            None => {
                let draws = PriorSampler::default().run(topology, &self.prior, 1, rng.random())?;
                Ok(draws.into_iter().next().expect("one draw"))
            }
        }
    }

    /// Draws every parameter, every change-point and the missing responses
    /// from the prior.
    pub fn draw<R: Rng + ?Sized>(&self, data: &Dataset, schedule: &RegimeSchedule, rng: &mut R) -> Result<ModelState> {
        let hyper = &self.hyper;
        let (n, k) = (data.n_cells(), data.dim());
        let m = hyper.m_beta(k)?;
        let mut regimes = Vec::with_capacity(schedule.n_regimes());
        for _ in 0..schedule.n_regimes() {
            let partition = self.partition(data.topology(), rng)?;
            let sigma_beta: Vec<f64> = (0..k).map(|_| hyper.sigma_beta.sample(rng)).collect();
            let mu_beta: Vec<f64> = (0..k).map(|l| normal(rng, m[l], sigma_beta[l])).collect();
            let beta = (0..partition.n_clusters())
                .map(|_| (0..k).map(|l| normal(rng, mu_beta[l], sigma_beta[l])).collect())
                .collect();
            let tau2 = hyper.tau2.sample(rng);
            let sigma2 = hyper.sigma2.sample(rng);
            let zeta = match hyper.zeta {
                ZetaPrior::Fixed { value } => value,
                ZetaPrior::Beta { a, b } => Beta::new(a, b)
                    .map_err(|e| Error::Parameter(format!("zeta prior: {e}")))?
                    .sample(rng)
                    .min(1.0 - f64::EPSILON),
            };
            let mut prec = data.topology().leroux_precision(zeta)?.matrix().clone();
            prec.scale(1.0 / tau2);
            let u = prec.cholesky()?.sample_canonical(&vec![0.0; n], rng);
            regimes.push(RegimeState { partition, beta, u, tau2, sigma2, zeta, mu_beta, sigma_beta });
        }
        let mut schedule = schedule.clone();
        for j in 0..schedule.n_changepoints() {
            let v = rng.random_range(schedule.changepoint_support(j)?);
            schedule.set_changepoint(j, v)?;
        }
        let mut state = ModelState { regimes, schedule, imputed: Vec::new() };
        state.imputed = data
            .missing()
            .iter()
            .map(|&(i, t)| normal(rng, state.mean(data, i, t), state.regimes[state.schedule.regime_of(t)].sigma2))
            .collect();
        Ok(state)
    }
}

/// Fresh observed responses drawn from the likelihood; the missing pattern
/// of `data` is kept.
pub fn draw_responses<R: Rng + ?Sized>(state: &ModelState, data: &Dataset, rng: &mut R) -> Result<Dataset> {
    state.validate(data)?;
    let t_len = data.n_times();
    let mut values = data.raw_values().to_vec();
    for &(i, t) in data.observed() {
        let sigma2 = state.regimes[state.schedule.regime_of(t)].sigma2;
        values[i * t_len + t] = normal(rng, state.mean(data, i, t), sigma2);
    }
    data.with_values(values)
}
