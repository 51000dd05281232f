//! Posterior summaries: co-clustering, partition point estimates, fitted
//! bands and predictive scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partitions::{for_each_set_partition, rand_index, vi_distance, Partition};
use crate::sampler::ChainOutput;

/// Pairwise co-assignment frequencies; row-major `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoclusteringMatrix {
    n: usize,
    values: Vec<f64>,
}

impl CoclusteringMatrix {
    pub fn n_items(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n)
    }
}

fn check_nonempty(draws: &[Partition]) -> Result<usize> {
    let first = draws
        .first()
        .ok_or_else(|| Error::Parameter("no partition draws supplied".into()))?;
    let n = first.n_items();
    if draws.iter().any(|d| d.n_items() != n) {
        return Err(Error::Dimension("partition draws cover different item counts".into()));
    }
    Ok(n)
}

pub fn coclustering(draws: &[Partition]) -> Result<CoclusteringMatrix> {
    let n = check_nonempty(draws)?;
    let mut counts = vec![0usize; n * n];
    for d in draws {
        let s = d.labels();
        for i in 0..n {
            for j in 0..i {
                if s[i] == s[j] {
                    counts[i * n + j] += 1;
                }
            }
        }
    }
    let m = draws.len() as f64;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in 0..i {
            let v = counts[i * n + j] as f64 / m;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(CoclusteringMatrix { n, values })
}

/// Monte Carlo estimate of the posterior expected VI of `candidate`.
pub fn expected_vi(candidate: &Partition, draws: &[Partition]) -> Result<f64> {
    check_nonempty(draws)?;
    let mut total = 0.0;
    for d in draws {
        total += vi_distance(candidate, d)?;
    }
    Ok(total / draws.len() as f64)
}

/// Average-linkage dendrogram cuts on `1 - coclustering`: entry `k` has
/// `n - k` clusters. Ties merge the lowest-indexed pair first.
pub fn average_linkage_cuts(cc: &CoclusteringMatrix) -> Vec<Partition> {
    let n = cc.n_items();
    let mut dist: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 1.0 - cc.get(i, j)).collect()).collect();
    let mut size = vec![1usize; n];
    let mut active: Vec<bool> = vec![true; n];
    let mut label: Vec<usize> = (0..n).collect();
    let mut cuts = Vec::with_capacity(n);
    cuts.push(Partition::from_labels(&label));
    for _ in 1..n {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..n {
            if !active[a] {
                continue;
            }
            for b in a + 1..n {
                if active[b] && dist[a][b] < best.0 {
                    best = (dist[a][b], a, b);
                }
            }
        }
        let (_, a, b) = best;
        for k in 0..n {
            if active[k] && k != a && k != b {
                let d = (size[a] as f64 * dist[a][k] + size[b] as f64 * dist[b][k]) / (size[a] + size[b]) as f64;
                dist[a][k] = d;
                dist[k][a] = d;
            }
        }
        size[a] += size[b];
        active[b] = false;
        for l in label.iter_mut() {
            if *l == b {
                *l = a;
            }
        }
        cuts.push(Partition::from_labels(&label));
    }
    cuts
}

/// Point estimate with its expected VI.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    pub partition: Partition,
    pub expected_vi: f64,
}

fn better(a: &(Partition, f64), b: &(Partition, f64)) -> bool {
    // lower loss, then fewer clusters, then lexicographic labels
    const TOL: f64 = 1e-12;
    if a.1 < b.1 - TOL {
        return true;
    }
    if a.1 > b.1 + TOL {
        return false;
    }
    (a.0.n_clusters(), a.0.labels()) < (b.0.n_clusters(), b.0.labels())
}

fn minimise(candidates: impl IntoIterator<Item = Partition>, draws: &[Partition]) -> Result<PointEstimate> {
    let mut best: Option<(Partition, f64)> = None;
    for c in candidates {
        let v = expected_vi(&c, draws)?;
        let cand = (c, v);
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
    }
    let (partition, expected_vi) = best.expect("at least one candidate");
    Ok(PointEstimate { partition, expected_vi })
}

/// Dendrogram cut minimising the expected VI against the draws.
pub fn vi_point_estimate_detailed(draws: &[Partition]) -> Result<PointEstimate> {
    let cc = coclustering(draws)?;
    minimise(average_linkage_cuts(&cc), draws)
}

pub fn vi_point_estimate(draws: &[Partition]) -> Result<Partition> {
    vi_point_estimate_detailed(draws).map(|p| p.partition)
}

/// Largest item count for [`exhaustive_vi_estimate`].
pub const MAX_EXHAUSTIVE_ITEMS: usize = 6;

/// Expected-VI minimiser over every partition, for at most six items.
pub fn exhaustive_vi_estimate(draws: &[Partition]) -> Result<PointEstimate> {
    let n = check_nonempty(draws)?;
    if n > MAX_EXHAUSTIVE_ITEMS {
        return Err(Error::TooLarge(format!(
            "exhaustive search supports at most {MAX_EXHAUSTIVE_ITEMS} items, got {n}"
        )));
    }
    let mut all = Vec::new();
    for_each_set_partition(n, |rgs| all.push(Partition::from_labels(rgs)));
    minimise(all, draws)
}

/// Per-draw Rand index between two aligned partition sequences.
pub fn rand_index_posterior(a: &[Partition], b: &[Partition]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "sequences have {} and {} draws",
            a.len(),
            b.len()
        )));
    }
    a.iter().zip(b).map(|(x, y)| rand_index(x, y)).collect()
}

/// Sample quantile with linear interpolation between order statistics
/// (`(n - 1) p` positioning). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Pointwise posterior mean and central `level` interval of the regression
/// term `x_t' beta*` of one cell.
pub fn fitted_band(chain: &ChainOutput, cell: usize, level: f64) -> Result<Vec<BandPoint>> {
    if cell >= chain.n_cells() {
        return Err(Error::OutOfRange {
            index: cell,
            lo: 0,
            hi: chain.n_cells() - 1,
        });
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Parameter(format!("level must lie in [0, 1], got {level}")));
    }
    if chain.draws.is_empty() {
        return Err(Error::Parameter("chain has no draws".into()));
    }
    let t_len = chain.design.n_times();
    let mut curves = vec![Vec::with_capacity(chain.draws.len()); t_len];
    let mut schedule = chain.schedule.clone();
    for d in &chain.draws {
        schedule.set_changepoints(&d.changepoints)?;
        for (t, curve) in curves.iter_mut().enumerate() {
            let reg = &d.regimes[schedule.regime_of(t)];
            curve.push(reg.fitted(cell, chain.design.row(t)));
        }
    }
    let (pl, pu) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    Ok(curves
        .into_iter()
        .map(|mut v| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.sort_by(f64::total_cmp);
            BandPoint {
                mean,
                lower: quantile_sorted(&v, pl),
                upper: quantile_sorted(&v, pu),
            }
        })
        .collect())
}

/// Streaming per-observation statistics of `log p(y_i | draw)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseAccumulator {
    draws: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    /// `log sum_k p_ik`
    lse_lik: Vec<f64>,
    /// `log sum_k 1 / p_ik`
    lse_inv: Vec<f64>,
}

fn lse_push(acc: &mut f64, x: f64) {
    if *acc == f64::NEG_INFINITY {
        *acc = x;
    } else if x != f64::NEG_INFINITY {
        let m = acc.max(x);
        *acc = m + ((*acc - m).exp() + (x - m).exp()).ln();
    }
}

impl PointwiseAccumulator {
    pub fn new(n_obs: usize) -> Self {
        Self {
            draws: 0,
            mean: vec![0.0; n_obs],
            m2: vec![0.0; n_obs],
            lse_lik: vec![f64::NEG_INFINITY; n_obs],
            lse_inv: vec![f64::NEG_INFINITY; n_obs],
        }
    }

    /// Rebuilds from stored columns.
    pub fn from_parts(draws: usize, mean: Vec<f64>, m2: Vec<f64>, lse_lik: Vec<f64>, lse_inv: Vec<f64>) -> Result<Self> {
        let n = mean.len();
        if m2.len() != n || lse_lik.len() != n || lse_inv.len() != n {
            return Err(Error::Dimension("pointwise columns differ in length".into()));
        }
        Ok(Self { draws, mean, m2, lse_lik, lse_inv })
    }

    pub fn push(&mut self, loglik: &[f64]) {
        assert_eq!(loglik.len(), self.mean.len());
        self.draws += 1;
        let n = self.draws as f64;
        for (k, &l) in loglik.iter().enumerate() {
            let delta = l - self.mean[k];
            self.mean[k] += delta / n;
            self.m2[k] += delta * (l - self.mean[k]);
            lse_push(&mut self.lse_lik[k], l);
            lse_push(&mut self.lse_inv[k], -l);
        }
    }

    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::Parameter("no draws".into()))?;
        let mut acc = Self::new(first.len());
        for r in rows {
            if r.len() != first.len() {
                return Err(Error::Dimension("ragged log-likelihood matrix".into()));
            }
            acc.push(r);
        }
        Ok(acc)
    }

    pub fn n_draws(&self) -> usize {
        self.draws
    }

    pub fn n_obs(&self) -> usize {
        self.mean.len()
    }

    pub fn mean_log_lik(&self) -> &[f64] {
        &self.mean
    }

    pub fn sum_sq_dev(&self) -> &[f64] {
        &self.m2
    }

    pub fn log_sum_lik(&self) -> &[f64] {
        &self.lse_lik
    }

    pub fn log_sum_inv_lik(&self) -> &[f64] {
        &self.lse_inv
    }

    /// Harmonic-mean CPO estimate per observation, in logs.
    pub fn log_cpo(&self) -> Result<Vec<f64>> {
        if self.draws == 0 {
            return Err(Error::Parameter("no draws accumulated".into()));
        }
        let ln_m = (self.draws as f64).ln();
        self.lse_inv
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let c = ln_m - v;
                if c.is_finite() {
                    Ok(c)
                } else {
                    Err(Error::Numerical(format!("observation {} has no finite likelihood", k + 1)))
                }
            })
            .collect()
    }

    /// `sum_i log mean_k p_ik`.
    pub fn lppd(&self) -> Result<f64> {
        if self.draws == 0 {
            return Err(Error::Parameter("no draws accumulated".into()));
        }
        let ln_m = (self.draws as f64).ln();
        Ok(self.lse_lik.iter().map(|v| v - ln_m).sum())
    }

    /// `sum_i var_k log p_ik` with the `n - 1` divisor.
    pub fn p_waic(&self) -> Result<f64> {
        if self.draws < 2 {
            return Err(Error::Parameter("WAIC needs at least two draws".into()));
        }
        Ok(self.m2.iter().sum::<f64>() / (self.draws - 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitScores {
    pub lpml: f64,
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    pub log_cpo: Vec<f64>,
}

pub fn lpml(acc: &PointwiseAccumulator) -> Result<f64> {
    Ok(acc.log_cpo()?.iter().sum())
}

pub fn waic(acc: &PointwiseAccumulator) -> Result<f64> {
    Ok(-2.0 * (acc.lppd()? - acc.p_waic()?))
}

pub fn fit_scores(acc: &PointwiseAccumulator) -> Result<FitScores> {
    let log_cpo = acc.log_cpo()?;
    let lppd = acc.lppd()?;
    let p_waic = acc.p_waic()?;
    Ok(FitScores {
        lpml: log_cpo.iter().sum(),
        waic: -2.0 * (lppd - p_waic),
        lppd,
        p_waic,
        log_cpo,
    })
}

/// Most frequent cluster count (smallest on ties).
pub fn modal_cluster_count(draws: &[Partition]) -> Result<usize> {
    let n = check_nonempty(draws)?;
    let mut hist = vec![0usize; n + 1];
    for d in draws {
        hist[d.n_clusters()] += 1;
    }
    let max = *hist.iter().max().expect("non-empty");
    Ok(hist.iter().position(|&h| h == max).expect("max exists"))
}

/// Most frequent value (smallest on ties).
pub fn mode_of(values: &[usize]) -> Option<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mut best: Option<(usize, usize)> = None;
    for chunk in sorted.chunk_by(|a, b| a == b) {
        if best.is_none_or(|(_, c)| chunk.len() > c) {
            best = Some((chunk[0], chunk.len()));
        }
    }
    best.map(|(v, _)| v)
}
