//! Full-conditional updates.
//!
//! Each `*_conditional` function returns the parameters of a conjugate full
//! conditional so that they can be checked independently of the sampling
//! code; the matching `update_*` function draws from it.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridTopology;
use crate::linalg::{log_sum_exp, sample_log_weights, BandedSym};
use crate::model::{dot, Dataset, Hyperparameters, InvGamma, ModelState, RegimeState, ZetaPrior};
use crate::partitions::{allocation_log_weights, PriorSpec, WeightRule, WorkingPartition};
use crate::timeline::RegimeSchedule;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// How cluster labels are resampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocationVariant {
    /// Coefficients integrated out for every candidate cluster, then redrawn.
    #[default]
    Collapsed,
    /// Existing clusters keep their coefficients; only a new cluster is
    /// integrated out.
    Instantiated,
}

/// How change-points are updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangepointMode {
    /// Per-time marginal with coefficients and spatial effects integrated out.
    #[default]
    Marginal,
    /// Conditional on the current coefficients and spatial effects.
    Conditional,
    /// Held at their starting values.
    Fixed,
}

/// Time indices of each regime under the current schedule.
pub fn times_by_regime(schedule: &RegimeSchedule) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); schedule.n_regimes()];
    for t in 0..schedule.n_times() {
        out[schedule.regime_of(t)].push(t);
    }
    out
}

fn cross_product(data: &Dataset, times: &[usize]) -> DMatrix<f64> {
    let k = data.dim();
    let mut m = DMatrix::zeros(k, k);
    for &t in times {
        let x = data.design().row(t);
        for a in 0..k {
            for b in 0..=a {
                m[(a, b)] += x[a] * x[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            m[(b, a)] = m[(a, b)];
        }
    }
    m
}

/// `(sum_t x_t r_t, sum_t r_t^2)` for residuals `r = y - u` of one cell.
fn cell_statistics(state: &ModelState, data: &Dataset, reg: &RegimeState, cell: usize, times: &[usize]) -> (DVector<f64>, f64) {
    let k = data.dim();
    let mut g = DVector::zeros(k);
    let mut h = 0.0;
    for &t in times {
        let r = state.completed(data, cell, t) - reg.u[cell];
        let x = data.design().row(t);
        for l in 0..k {
            g[l] += x[l] * r;
        }
        h += r * r;
    }
    (g, h)
}

/// Precision and canonical vector of the coefficient conditional for a
/// cluster of `n` cells with summed cross-products `g`.
fn beta_canonical(reg: &RegimeState, n: usize, g: &DVector<f64>, xtx: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let k = reg.mu_beta.len();
    let mut p = xtx * (n as f64 / reg.sigma2);
    let mut b = g / reg.sigma2;
    for l in 0..k {
        p[(l, l)] += 1.0 / reg.sigma_beta[l];
        b[l] += reg.mu_beta[l] / reg.sigma_beta[l];
    }
    (p, b)
}

fn dense_cholesky(p: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    p.cholesky()
        .ok_or_else(|| Error::Numerical("coefficient precision is not positive definite".into()))
}

fn draw_canonical<R: Rng + ?Sized>(p: DMatrix<f64>, b: &DVector<f64>, rng: &mut R) -> Result<Vec<f64>> {
    let chol = dense_cholesky(p)?;
    let mean = chol.solve(b);
    let z = DVector::from_fn(b.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let dev = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    Ok((mean + dev).iter().copied().collect())
}

/// Mean and variance of the conditional of missing slot `slot`.
pub fn missing_conditional(state: &ModelState, data: &Dataset, slot: usize) -> (f64, f64) {
    let (i, t) = data.missing()[slot];
    (state.mean(data, i, t), state.regimes[state.schedule.regime_of(t)].sigma2)
}

/// Redraws every missing response.
pub fn update_missing<R: Rng + ?Sized>(state: &mut ModelState, data: &Dataset, rng: &mut R) {
    for slot in 0..data.missing().len() {
        let (m, v) = missing_conditional(state, data, slot);
        let z: f64 = rng.sample(StandardNormal);
        state.imputed[slot] = m + v.sqrt() * z;
    }
}

/// Mean and covariance of the coefficient conditional of `cluster` in
/// `regime`.
pub fn beta_conditional(state: &ModelState, data: &Dataset, regime: usize, cluster: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let times = times_by_regime(&state.schedule);
    let reg = &state.regimes[regime];
    let xtx = cross_product(data, &times[regime]);
    let mut g = DVector::zeros(data.dim());
    let members = reg.partition.members(cluster);
    for &i in &members {
        g += cell_statistics(state, data, reg, i, &times[regime]).0;
    }
    let (p, b) = beta_canonical(reg, members.len(), &g, &xtx);
    let inv = dense_cholesky(p)?.inverse();
    let mean = &inv * b;
    Ok((mean.iter().copied().collect(), inv))
}

/// Redraws every cluster's coefficients.
pub fn update_beta_star<R: Rng + ?Sized>(state: &mut ModelState, data: &Dataset, rng: &mut R) -> Result<()> {
    let times = times_by_regime(&state.schedule);
    for r in 0..state.regimes.len() {
        let xtx = cross_product(data, &times[r]);
        let reg = &state.regimes[r];
        let k = reg.partition.n_clusters();
        let mut g = vec![DVector::zeros(data.dim()); k];
        for i in 0..data.n_cells() {
            g[reg.partition.labels()[i]] += cell_statistics(state, data, reg, i, &times[r]).0;
        }
        let sizes = reg.partition.sizes().to_vec();
        let mut beta = Vec::with_capacity(k);
        for j in 0..k {
            let (p, b) = beta_canonical(&state.regimes[r], sizes[j], &g[j], &xtx);
            beta.push(draw_canonical(p, &b, rng)?);
        }
        state.regimes[r].beta = beta;
    }
    Ok(())
}

/// Conditional of the `l`-th coefficient variance.
pub fn sigma_beta_conditional(reg: &RegimeState, hyper: &Hyperparameters, m_beta: &[f64], l: usize) -> InvGamma {
    let k = reg.beta.len() as f64;
    let mu = reg.mu_beta[l];
    let ss: f64 = reg.beta.iter().map(|b| (b[l] - mu).powi(2)).sum();
    InvGamma {
        shape: hyper.sigma_beta.shape + (1.0 + k) / 2.0,
        scale: hyper.sigma_beta.scale + (mu - m_beta[l]).powi(2) / 2.0 + ss / 2.0,
    }
}

/// Mean and variance of the conditional of the `l`-th coefficient mean.
pub fn mu_beta_conditional(reg: &RegimeState, m_beta: &[f64], l: usize) -> (f64, f64) {
    let k = reg.beta.len() as f64;
    let sum: f64 = reg.beta.iter().map(|b| b[l]).sum();
    ((m_beta[l] + sum) / (1.0 + k), reg.sigma_beta[l] / (1.0 + k))
}

/// Redraws the coefficient variances, then the coefficient means.
pub fn update_mu_sigma_beta<R: Rng + ?Sized>(state: &mut ModelState, hyper: &Hyperparameters, rng: &mut R) -> Result<()> {
    let k = state.regimes.first().map_or(0, |r| r.mu_beta.len());
    let m = hyper.m_beta(k)?;
    for reg in &mut state.regimes {
        for l in 0..k {
            reg.sigma_beta[l] = sigma_beta_conditional(reg, hyper, &m, l).sample(rng);
        }
        for l in 0..k {
            let (mean, var) = mu_beta_conditional(reg, &m, l);
            let z: f64 = rng.sample(StandardNormal);
            reg.mu_beta[l] = mean + var.sqrt() * z;
        }
    }
    Ok(())
}

/// Sufficient statistics of a cluster's residuals.
#[derive(Debug, Clone)]
struct ClusterStats {
    n: usize,
    g: DVector<f64>,
    h: f64,
}

impl ClusterStats {
    fn empty(k: usize) -> Self {
        Self { n: 0, g: DVector::zeros(k), h: 0.0 }
    }

    fn add(&mut self, g: &DVector<f64>, h: f64) {
        self.n += 1;
        self.g += g;
        self.h += h;
    }

    fn sub(&mut self, g: &DVector<f64>, h: f64) {
        self.n -= 1;
        self.g -= g;
        self.h -= h;
    }

    fn with(&self, g: &DVector<f64>, h: f64) -> Self {
        let mut s = self.clone();
        s.add(g, h);
        s
    }
}

/// Log marginal likelihood of a cluster with coefficients integrated over
/// their base distribution.
struct ClusterMarginal {
    prior_precision: Vec<f64>,
    prior_canonical: Vec<f64>,
    /// `sum_l [log prec_l - prec_l mu_l^2] / 2`
    prior_constant: f64,
    sigma2: f64,
    m_times: usize,
    xtx: DMatrix<f64>,
}

impl ClusterMarginal {
    fn new(reg: &RegimeState, m_times: usize, xtx: DMatrix<f64>) -> Self {
        let prior_precision: Vec<f64> = reg.sigma_beta.iter().map(|v| 1.0 / v).collect();
        let prior_canonical: Vec<f64> = reg.mu_beta.iter().zip(&prior_precision).map(|(m, p)| m * p).collect();
        let prior_constant = reg
            .mu_beta
            .iter()
            .zip(&prior_precision)
            .map(|(m, p)| 0.5 * (p.ln() - p * m * m))
            .sum();
        Self {
            prior_precision,
            prior_canonical,
            prior_constant,
            sigma2: reg.sigma2,
            m_times,
            xtx,
        }
    }

    fn log_z(&self, s: &ClusterStats) -> f64 {
        if s.n == 0 {
            return 0.0;
        }
        let k = self.prior_precision.len();
        let n = s.n as f64;
        let mut p = &self.xtx * (n / self.sigma2);
        let mut b = &s.g / self.sigma2;
        for l in 0..k {
            p[(l, l)] += self.prior_precision[l];
            b[l] += self.prior_canonical[l];
        }
        let chol = p.cholesky().expect("positive definite by construction");
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let quad = b.dot(&chol.solve(&b));
        -0.5 * n * self.m_times as f64 * (LN_2PI + self.sigma2.ln()) + self.prior_constant - 0.5 * log_det + 0.5 * quad
            - s.h / (2.0 * self.sigma2)
    }

    /// Log-likelihood of one cell's residuals given coefficients `beta`.
    fn log_lik(&self, g: &DVector<f64>, h: f64, beta: &[f64]) -> f64 {
        let bv = DVector::from_column_slice(beta);
        let quad = h - 2.0 * bv.dot(g) + (&self.xtx * &bv).dot(&bv);
        -0.5 * self.m_times as f64 * (LN_2PI + self.sigma2.ln()) - quad / (2.0 * self.sigma2)
    }
}

/// Resamples every cell's cluster label in every regime.
pub fn update_allocations<R: Rng + ?Sized>(
    state: &mut ModelState,
    data: &Dataset,
    prior: &PriorSpec,
    variant: AllocationVariant,
    rule: WeightRule,
    rng: &mut R,
) -> Result<()> {
    let times = times_by_regime(&state.schedule);
    let topology = data.topology();
    let k = data.dim();
    for r in 0..state.regimes.len() {
        let xtx = cross_product(data, &times[r]);
        let marg = ClusterMarginal::new(&state.regimes[r], times[r].len(), xtx.clone());
        let cells: Vec<(DVector<f64>, f64)> = (0..data.n_cells())
            .map(|i| cell_statistics(state, data, &state.regimes[r], i, &times[r]))
            .collect();
        let reg = &state.regimes[r];
        let mut work = WorkingPartition::from_partition(&reg.partition);
        let mut stats = vec![ClusterStats::empty(k); reg.partition.n_clusters()];
        for (i, (g, h)) in cells.iter().enumerate() {
            stats[reg.partition.labels()[i]].add(g, *h);
        }
        let mut log_z: Vec<f64> = stats.iter().map(|s| marg.log_z(s)).collect();
        let mut betas = reg.beta.clone();

        for (i, (g, h)) in cells.iter().enumerate() {
            let (c, emptied) = work.remove(i).expect("every cell is allocated");
            if emptied {
                work.remove_cluster(c);
                stats.swap_remove(c);
                log_z.swap_remove(c);
                betas.swap_remove(c);
            } else {
                stats[c].sub(g, *h);
                log_z[c] = marg.log_z(&stats[c]);
            }
            let mut w = allocation_log_weights(&work, i, prior, topology, rule);
            let n_existing = stats.len();
            let mut joined = Vec::with_capacity(n_existing);
            for j in 0..n_existing {
                match variant {
                    AllocationVariant::Collapsed => {
                        let z = marg.log_z(&stats[j].with(g, *h));
                        w[j] += z - log_z[j];
                        joined.push(z);
                    }
                    AllocationVariant::Instantiated => {
                        w[j] += marg.log_lik(g, *h, &betas[j]);
                    }
                }
            }
            let alone = ClusterStats::empty(k).with(g, *h);
            w[n_existing] += marg.log_z(&alone);
            let choice = sample_log_weights(&w, rng);
            if choice == n_existing {
                if variant == AllocationVariant::Instantiated {
                    let (p, b) = beta_canonical(&state.regimes[r], 1, g, &xtx);
                    betas.push(draw_canonical(p, &b, rng)?);
                } else {
                    betas.push(vec![0.0; k]);
                }
                stats.push(alone);
                log_z.push(marg.log_z(&stats[n_existing]));
            } else {
                stats[choice].add(g, *h);
                log_z[choice] = match variant {
                    AllocationVariant::Collapsed => joined[choice],
                    AllocationVariant::Instantiated => marg.log_z(&stats[choice]),
                };
            }
            work.assign(i, choice);
        }

        let (partition, order) = work.finish();
        let reg = &mut state.regimes[r];
        reg.partition = partition;
        reg.beta = match variant {
            AllocationVariant::Instantiated => order.iter().map(|&o| betas[o].clone()).collect(),
            AllocationVariant::Collapsed => {
                let mut out = Vec::with_capacity(order.len());
                for &o in &order {
                    let (p, b) = beta_canonical(reg, stats[o].n, &stats[o].g, &xtx);
                    out.push(draw_canonical(p, &b, rng)?);
                }
                out
            }
        };
    }
    Ok(())
}

/// Posterior precision `Q / tau2 + (m_r / sigma2) I` and canonical vector of
/// the spatial effects of `regime`.
pub fn u_conditional(state: &ModelState, data: &Dataset, regime: usize) -> Result<(BandedSym, Vec<f64>)> {
    let times = times_by_regime(&state.schedule);
    let reg = &state.regimes[regime];
    let q = data.topology().leroux_precision(reg.zeta)?;
    let mut p = q.matrix().clone();
    p.scale(1.0 / reg.tau2);
    p.add_diagonal(times[regime].len() as f64 / reg.sigma2);
    let b = (0..data.n_cells())
        .map(|i| {
            times[regime]
                .iter()
                .map(|&t| state.completed(data, i, t) - reg.fitted(i, data.design().row(t)))
                .sum::<f64>()
                / reg.sigma2
        })
        .collect();
    Ok((p, b))
}

/// Redraws the spatial effects of every regime jointly.
pub fn update_u<R: Rng + ?Sized>(state: &mut ModelState, data: &Dataset, rng: &mut R) -> Result<()> {
    for r in 0..state.regimes.len() {
        let (p, b) = u_conditional(state, data, r)?;
        state.regimes[r].u = p.cholesky()?.sample_canonical(&b, rng);
    }
    Ok(())
}

pub fn tau2_conditional(reg: &RegimeState, topology: &GridTopology, hyper: &Hyperparameters) -> Result<InvGamma> {
    let q = topology.leroux_precision(reg.zeta)?;
    Ok(InvGamma {
        shape: hyper.tau2.shape + reg.u.len() as f64 / 2.0,
        scale: hyper.tau2.scale + q.quad_form(&reg.u) / 2.0,
    })
}

pub fn update_tau2<R: Rng + ?Sized>(state: &mut ModelState, topology: &GridTopology, hyper: &Hyperparameters, rng: &mut R) -> Result<()> {
    for reg in &mut state.regimes {
        reg.tau2 = tau2_conditional(reg, topology, hyper)?.sample(rng);
    }
    Ok(())
}

/// Residual variance conditional restricted to the regime's time points.
pub fn sigma2_conditional(state: &ModelState, data: &Dataset, regime: usize, hyper: &Hyperparameters) -> InvGamma {
    let times = times_by_regime(&state.schedule);
    let mut ss = 0.0;
    for i in 0..data.n_cells() {
        for &t in &times[regime] {
            let e = state.completed(data, i, t) - state.mean(data, i, t);
            ss += e * e;
        }
    }
    InvGamma {
        shape: hyper.sigma2.shape + (data.n_cells() * times[regime].len()) as f64 / 2.0,
        scale: hyper.sigma2.scale + ss / 2.0,
    }
}

pub fn update_sigma2<R: Rng + ?Sized>(state: &mut ModelState, data: &Dataset, hyper: &Hyperparameters, rng: &mut R) {
    for r in 0..state.regimes.len() {
        let post = sigma2_conditional(state, data, r, hyper);
        state.regimes[r].sigma2 = post.sample(rng);
    }
}

/// Log density of `zeta` given the spatial effects, up to a constant, on
/// the natural scale.
pub fn zeta_log_target(topology: &GridTopology, u: &[f64], tau2: f64, prior: &ZetaPrior, zeta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&zeta) {
        return Ok(f64::NEG_INFINITY);
    }
    let q = topology.leroux_precision(zeta)?;
    Ok(0.5 * q.log_det() - q.quad_form(u) / (2.0 * tau2) + prior.ln_pdf(zeta))
}

/// Random-walk Metropolis on `logit(zeta)`; returns acceptance per regime.
/// Fixed mode leaves the state untouched.
pub fn update_zeta<R: Rng + ?Sized>(
    state: &mut ModelState,
    topology: &GridTopology,
    prior: &ZetaPrior,
    step: f64,
    rng: &mut R,
) -> Result<Vec<bool>> {
    if prior.is_fixed() {
        return Ok(Vec::new());
    }
    let mut accepted = Vec::with_capacity(state.regimes.len());
    for reg in &mut state.regimes {
        let z0 = reg.zeta;
        let eta0 = (z0 / (1.0 - z0)).ln();
        let noise: f64 = rng.sample(StandardNormal);
        let eta1 = eta0 + step * noise;
        let z1 = 1.0 / (1.0 + (-eta1).exp());
        let jac = |z: f64| z.ln() + (1.0 - z).ln();
        let lp0 = zeta_log_target(topology, &reg.u, reg.tau2, prior, z0)? + jac(z0);
        let lp1 = zeta_log_target(topology, &reg.u, reg.tau2, prior, z1)? + jac(z1);
        let u: f64 = rng.random();
        let ok = lp1.is_finite() && u.ln() < lp1 - lp0;
        if ok {
            reg.zeta = z1;
        }
        accepted.push(ok);
    }
    Ok(accepted)
}

/// Per-time log densities of the responses under `regime`.
fn time_log_densities(state: &ModelState, data: &Dataset, regime: usize, times: &[usize], mode: ChangepointMode) -> Result<Vec<f64>> {
    let reg = &state.regimes[regime];
    let n = data.n_cells();
    let y_at = |t: usize| -> Vec<f64> { (0..n).map(|i| state.completed(data, i, t)).collect() };
    match mode {
        ChangepointMode::Conditional | ChangepointMode::Fixed => Ok(times
            .iter()
            .map(|&t| {
                let x = data.design().row(t);
                (0..n)
                    .map(|i| {
                        let e = state.completed(data, i, t) - reg.fitted(i, x) - reg.u[i];
                        -0.5 * (LN_2PI + reg.sigma2.ln()) - e * e / (2.0 * reg.sigma2)
                    })
                    .sum()
            })
            .collect()),
        ChangepointMode::Marginal => {
            // cov = c I + tau2 Q^{-1} = Q^{-1} (c Q + tau2 I)
            let q = data.topology().leroux_precision(reg.zeta)?;
            let log_det_q = q.matrix().cholesky()?.log_det();
            let mut out = Vec::with_capacity(times.len());
            for &t in times {
                let x = data.design().row(t);
                let c: f64 = x.iter().zip(&reg.sigma_beta).map(|(xl, s)| xl * xl * s).sum::<f64>() + reg.sigma2;
                let center = dot(x, &reg.mu_beta);
                let z: Vec<f64> = y_at(t).iter().map(|y| y - center).collect();
                let mut a = q.matrix().clone();
                a.scale(c);
                a.add_diagonal(reg.tau2);
                let chol = a.cholesky()?;
                let qz = q.matrix().mul_vec(&z);
                let v = chol.solve(&qz);
                let quad = dot(&z, &v);
                let log_det = chol.log_det() - log_det_q;
                out.push(-0.5 * (n as f64 * LN_2PI + log_det + quad));
            }
            Ok(out)
        }
    }
}

/// Unnormalised log full conditional of change-point `m` over its support.
pub fn changepoint_log_weights(state: &ModelState, data: &Dataset, m: usize, mode: ChangepointMode) -> Result<Vec<f64>> {
    let s = &state.schedule;
    let support = s.changepoint_support(m)?;
    let (lo, hi) = (*support.start(), *support.end());
    let before = s.pattern()[m];
    let after = s.pattern()[m + 1];
    let window: Vec<usize> = (lo..=hi).collect();
    let la = time_log_densities(state, data, before, &window, mode)?;
    let lb = time_log_densities(state, data, after, &window, mode)?;
    // candidate c puts lo..=c in `before` and c+1..=hi in `after`
    let total_b: f64 = lb.iter().sum();
    let mut acc_a = 0.0;
    let mut acc_b = 0.0;
    let mut w = Vec::with_capacity(window.len());
    for k in 0..window.len() {
        acc_a += la[k];
        acc_b += lb[k];
        w.push(acc_a + (total_b - acc_b));
    }
    Ok(w)
}

/// Redraws every change-point from its discrete full conditional.
pub fn update_changepoints<R: Rng + ?Sized>(state: &mut ModelState, data: &Dataset, mode: ChangepointMode, rng: &mut R) -> Result<()> {
    if mode == ChangepointMode::Fixed {
        return Ok(());
    }
    for m in 0..state.schedule.n_changepoints() {
        let w = changepoint_log_weights(state, data, m, mode)?;
        debug_assert!(log_sum_exp(&w).is_finite());
        let lo = *state.schedule.changepoint_support(m)?.start();
        let k = sample_log_weights(&w, rng);
        state.schedule.set_changepoint(m, lo + k)?;
    }
    Ok(())
}
