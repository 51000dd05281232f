//! Random partitions of grid cells and the areal product partition prior.
//!
//! The prior on a partition `{C_1, ..., C_K}` is proportional to
//! `kappa^K * prod_j Gamma(n_j) * exp(-xi * sum_{i in C_j} l_j(i))`, where
//! `l_j(i)` counts the neighbours of `i` outside `C_j`. The DP-only variant
//! drops the boundary term and the HB-only variant keeps only the boundary
//! term.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::Adjacency;
#[cfg(test)]
use crate::grid::GridTopology;
use crate::linalg::{log_sum_exp, sample_log_weights};

/// A partition of `n` items in canonical form: cluster ids are zero-based and
/// numbered by first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

impl Partition {
    /// Canonicalises arbitrary integer labels.
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut map: HashMap<usize, usize> = HashMap::new();
        let mut labels = Vec::with_capacity(raw.len());
        let mut sizes = Vec::new();
        for &r in raw {
            let next = map.len();
            let id = *map.entry(r).or_insert(next);
            if id == sizes.len() {
                sizes.push(0);
            }
            sizes[id] += 1;
            labels.push(id);
        }
        Self { labels, sizes }
    }

    pub fn one_cluster(n: usize) -> Self {
        Self::from_labels(&vec![0; n])
    }

    pub fn singletons(n: usize) -> Self {
        Self::from_labels(&(0..n).collect::<Vec<_>>())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Labels shifted to start at one, as written to files.
    pub fn one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_items(&self) -> usize {
        self.labels.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    fn check_same_size(&self, other: &Partition) -> Result<()> {
        if self.n_items() != other.n_items() {
            Err(Error::Dimension(format!(
                "partitions cover {} and {} items",
                self.n_items(),
                other.n_items()
            )))
        } else {
            Ok(())
        }
    }

    pub fn to_json(&self) -> PartitionJson {
        PartitionJson {
            labels: self.one_based(),
        }
    }
}

/// `{"labels": [...]}` with one-based labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionJson {
    pub labels: Vec<usize>,
}

impl From<PartitionJson> for Partition {
    fn from(j: PartitionJson) -> Self {
        Partition::from_labels(&j.labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorVariant {
    #[serde(alias = "aPPM")]
    Appm,
    #[serde(alias = "DP-only", alias = "dp")]
    DpOnly,
    #[serde(alias = "HB-only", alias = "hb")]
    HbOnly,
}

impl std::str::FromStr for PriorVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "appm" => Ok(Self::Appm),
            "dp" | "dp-only" => Ok(Self::DpOnly),
            "hb" | "hb-only" => Ok(Self::HbOnly),
            _ => Err(Error::Config(format!("unknown prior variant `{s}`"))),
        }
    }
}

/// Hyperparameters of the partition prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub kappa: f64,
    pub xi: f64,
    pub variant: PriorVariant,
}

impl PriorSpec {
    /// Validates and normalises: DP-only pins `xi = 0`, HB-only pins `kappa = 1`.
    pub fn new(kappa: f64, xi: f64, variant: PriorVariant) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::Parameter(format!("kappa must be positive, got {kappa}")));
        }
        if !(xi >= 0.0) || !xi.is_finite() {
            return Err(Error::Parameter(format!("xi must be non-negative, got {xi}")));
        }
        let (kappa, xi) = match variant {
            PriorVariant::Appm => (kappa, xi),
            PriorVariant::DpOnly => (kappa, 0.0),
            PriorVariant::HbOnly => (1.0, xi),
        };
        Ok(Self { kappa, xi, variant })
    }

    pub fn appm(kappa: f64, xi: f64) -> Result<Self> {
        Self::new(kappa, xi, PriorVariant::Appm)
    }

    pub fn eta(&self) -> f64 {
        (-self.xi).exp()
    }

    fn has_dp_term(&self) -> bool {
        self.variant != PriorVariant::HbOnly
    }
}

/// How allocation moves weigh the boundary penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRule {
    /// Exact ratio of unnormalised priors: every new cut edge is counted from
    /// both of its endpoints.
    #[default]
    Exact,
    /// Only the moving cell's own boundary length is penalised.
    Simplified,
}

/// `K log kappa + sum_j [log Gamma(n_j) - xi * sum_{i in C_j} l_j(i)]`.
pub fn log_prior_unnormalized<A: Adjacency + ?Sized>(p: &Partition, spec: &PriorSpec, topology: &A) -> f64 {
    debug_assert_eq!(p.n_items(), topology.n_cells());
    let boundary = if spec.xi == 0.0 {
        0.0
    } else {
        spec.xi * topology.total_boundary_length(p) as f64
    };
    let dp = if spec.has_dp_term() {
        p.n_clusters() as f64 * spec.kappa.ln()
            + p.sizes().iter().map(|&n| ln_gamma(n as f64)).sum::<f64>()
    } else {
        0.0
    };
    dp - boundary
}

/// Log prior weight of placing one item into a cluster currently holding
/// `size` items (`0` opens a new cluster) when `outside` of its already
/// allocated neighbours are not in that cluster.
#[inline]
pub fn log_allocation_weight(spec: &PriorSpec, size: usize, outside: usize, rule: WeightRule) -> f64 {
    let factor = match rule {
        WeightRule::Exact => 2.0,
        WeightRule::Simplified => 1.0,
    };
    let dp = if !spec.has_dp_term() {
        0.0
    } else if size == 0 {
        spec.kappa.ln()
    } else {
        (size as f64).ln()
    };
    dp - factor * spec.xi * outside as f64
}

/// A partition under construction: some items may be unallocated.
///
/// Cluster ids are stable until [`WorkingPartition::remove_cluster`] moves
/// the last cluster into the freed slot.
#[derive(Debug, Clone)]
pub struct WorkingPartition {
    labels: Vec<Option<usize>>,
    sizes: Vec<usize>,
}

impl WorkingPartition {
    pub fn empty(n: usize) -> Self {
        Self {
            labels: vec![None; n],
            sizes: Vec::new(),
        }
    }

    pub fn from_partition(p: &Partition) -> Self {
        Self {
            labels: p.labels().iter().map(|&l| Some(l)).collect(),
            sizes: p.sizes().to_vec(),
        }
    }

    pub fn label(&self, item: usize) -> Option<usize> {
        self.labels[item]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    /// Unallocates `item`; returns its former cluster and whether it emptied.
    pub fn remove(&mut self, item: usize) -> Option<(usize, bool)> {
        let c = self.labels[item].take()?;
        self.sizes[c] -= 1;
        Some((c, self.sizes[c] == 0))
    }

    /// Deletes an empty cluster. The last cluster takes its id; returns the
    /// id that was moved (if any) so callers can permute parallel arrays.
    pub fn remove_cluster(&mut self, c: usize) -> Option<usize> {
        assert_eq!(self.sizes[c], 0, "cluster {c} is not empty");
        let last = self.sizes.len() - 1;
        self.sizes.swap_remove(c);
        if c == last {
            return None;
        }
        for l in self.labels.iter_mut().flatten() {
            if *l == last {
                *l = c;
            }
        }
        Some(last)
    }

    /// Allocates `item` to `cluster`; `cluster == n_clusters()` opens a new one.
    pub fn assign(&mut self, item: usize, cluster: usize) {
        assert!(self.labels[item].is_none());
        if cluster == self.sizes.len() {
            self.sizes.push(0);
        }
        self.sizes[cluster] += 1;
        self.labels[item] = Some(cluster);
    }

    /// Per-cluster counts of `item`'s allocated neighbours, plus their total.
    pub fn neighbor_counts<A: Adjacency + ?Sized>(&self, item: usize, topology: &A) -> (Vec<usize>, usize) {
        let mut counts = vec![0; self.sizes.len()];
        let mut total = 0;
        for &j in topology.neighbors(item) {
            if let Some(c) = self.labels[j] {
                counts[c] += 1;
                total += 1;
            }
        }
        (counts, total)
    }

    /// Canonical partition plus `order[new_id] = old_id`.
    pub fn finish(&self) -> (Partition, Vec<usize>) {
        let raw: Vec<usize> = self
            .labels
            .iter()
            .map(|l| l.expect("all items must be allocated"))
            .collect();
        let p = Partition::from_labels(&raw);
        let mut order = vec![usize::MAX; p.n_clusters()];
        for (i, &l) in p.labels().iter().enumerate() {
            order[l] = raw[i];
        }
        (p, order)
    }
}

/// Prior log-weights for allocating `item`: one per existing cluster of
/// `partial`, then one for a new cluster.
pub fn allocation_log_weights<A: Adjacency + ?Sized>(
    partial: &WorkingPartition,
    item: usize,
    spec: &PriorSpec,
    topology: &A,
    rule: WeightRule,
) -> Vec<f64> {
    let (counts, total) = partial.neighbor_counts(item, topology);
    let mut w: Vec<f64> = partial
        .sizes()
        .iter()
        .zip(&counts)
        .map(|(&n, &c)| log_allocation_weight(spec, n, total - c, rule))
        .collect();
    w.push(log_allocation_weight(spec, 0, total, rule));
    w
}

/// Largest item count accepted by [`enumerate_prior`].
pub const MAX_ENUMERATION_ITEMS: usize = 10;

/// Exactly normalised prior over every partition of a small grid.
#[derive(Debug, Clone)]
pub struct PriorTable {
    entries: Vec<(Partition, f64)>,
    index: HashMap<Partition, usize>,
    log_normalizer: f64,
}

impl PriorTable {
    pub fn entries(&self) -> &[(Partition, f64)] {
        &self.entries
    }

    pub fn probability(&self, p: &Partition) -> f64 {
        self.index.get(p).map_or(0.0, |&k| self.entries[k].1)
    }

    /// `log sum_rho prod_j c(C_j)`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// Distribution of the number of clusters, index `k` = `k` clusters.
    pub fn cluster_count_pmf(&self) -> Vec<f64> {
        let n = self.entries.first().map_or(0, |(p, _)| p.n_items());
        let mut pmf = vec![0.0; n + 1];
        for (p, w) in &self.entries {
            pmf[p.n_clusters()] += w;
        }
        pmf
    }

    /// `P(s_i = s_j)` for every pair.
    pub fn coclustering(&self) -> Vec<Vec<f64>> {
        let n = self.entries.first().map_or(0, |(p, _)| p.n_items());
        let mut m = vec![vec![0.0; n]; n];
        for (p, w) in &self.entries {
            let s = p.labels();
            for i in 0..n {
                for j in 0..n {
                    if s[i] == s[j] {
                        m[i][j] += w;
                    }
                }
            }
        }
        m
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &Partition {
        let mut u: f64 = rng.random();
        for (p, w) in &self.entries {
            if u < *w {
                return p;
            }
            u -= w;
        }
        &self.entries.last().expect("non-empty table").0
    }
}

/// Visits every set partition of `n` items as a restricted growth string.
pub fn for_each_set_partition(n: usize, mut f: impl FnMut(&[usize])) {
    if n == 0 {
        f(&[]);
        return;
    }
    let mut a = vec![0usize; n];
    let mut maxes = vec![0usize; n];
    loop {
        f(&a);
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return;
            }
            if a[i] <= maxes[i - 1] {
                a[i] += 1;
                maxes[i] = maxes[i - 1].max(a[i]);
                for k in i + 1..n {
                    a[k] = 0;
                    maxes[k] = maxes[i];
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Enumerates and normalises the prior for grids with at most ten cells.
pub fn enumerate_prior<A: Adjacency + ?Sized>(topology: &A, spec: &PriorSpec) -> Result<PriorTable> {
    let n = topology.n_cells();
    if n > MAX_ENUMERATION_ITEMS {
        return Err(Error::TooLarge(format!(
            "exhaustive enumeration supports at most {MAX_ENUMERATION_ITEMS} cells, grid has {n}"
        )));
    }
    let mut parts = Vec::new();
    let mut logw = Vec::new();
    for_each_set_partition(n, |rgs| {
        let p = Partition::from_labels(rgs);
        logw.push(log_prior_unnormalized(&p, spec, topology));
        parts.push(p);
    });
    let log_normalizer = log_sum_exp(&logw);
    let entries: Vec<(Partition, f64)> = parts
        .into_iter()
        .zip(logw)
        .map(|(p, w)| (p, (w - log_normalizer).exp()))
        .collect();
    let index = entries
        .iter()
        .enumerate()
        .map(|(k, (p, _))| (p.clone(), k))
        .collect();
    Ok(PriorTable {
        entries,
        index,
        log_normalizer,
    })
}

/// One Gibbs sweep over all items using prior weights only.
pub fn prior_gibbs_sweep<A: Adjacency + ?Sized, R: Rng + ?Sized>(
    work: &mut WorkingPartition,
    spec: &PriorSpec,
    topology: &A,
    rule: WeightRule,
    rng: &mut R,
) {
    for i in 0..topology.n_cells() {
        if let Some((c, emptied)) = work.remove(i) {
            if emptied {
                work.remove_cluster(c);
            }
        }
        let w = allocation_log_weights(work, i, spec, topology, rule);
        let k = sample_log_weights(&w, rng);
        work.assign(i, k);
    }
}

/// Options for [`PriorSampler`].
#[derive(Debug, Clone, Copy)]
pub struct PriorSampler {
    pub burn_in: usize,
    pub thin: usize,
    pub rule: WeightRule,
}

impl Default for PriorSampler {
    fn default() -> Self {
        Self {
            burn_in: 100,
            thin: 1,
            rule: WeightRule::Exact,
        }
    }
}

impl PriorSampler {
    /// Runs a prior-only Gibbs chain and returns `draws` partitions.
    ///
    /// The chain starts from a sequential allocation draw; each stored draw
    /// is separated by `thin` full sweeps.
    pub fn run<A: Adjacency + ?Sized>(&self, topology: &A, spec: &PriorSpec, draws: usize, seed: u64) -> Result<Vec<Partition>> {
        if draws == 0 {
            return Err(Error::Parameter("at least one draw is required".into()));
        }
        if self.thin == 0 {
            return Err(Error::Parameter("thinning must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = topology.n_cells();
        let mut work = WorkingPartition::empty(n);
        for i in 0..n {
            let w = allocation_log_weights(&work, i, spec, topology, self.rule);
            let k = sample_log_weights(&w, &mut rng);
            work.assign(i, k);
        }
        for _ in 0..self.burn_in {
            prior_gibbs_sweep(&mut work, spec, topology, self.rule, &mut rng);
        }
        let mut out = Vec::with_capacity(draws);
        for _ in 0..draws {
            for _ in 0..self.thin {
                prior_gibbs_sweep(&mut work, spec, topology, self.rule, &mut rng);
            }
            out.push(work.finish().0);
        }
        Ok(out)
    }
}

/// Prior-only Gibbs chain with default burn-in and no thinning.
pub fn sample_prior<A: Adjacency + ?Sized>(topology: &A, spec: &PriorSpec, iterations: usize, seed: u64) -> Result<Vec<Partition>> {
    PriorSampler::default().run(topology, spec, iterations, seed)
}

/// Joint contingency counts keyed by `(label_a, label_b)`.
fn contingency(a: &Partition, b: &Partition) -> Vec<((usize, usize), usize)> {
    let mut m: HashMap<(usize, usize), usize> = HashMap::new();
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        *m.entry((x, y)).or_default() += 1;
    }
    let mut v: Vec<_> = m.into_iter().collect();
    v.sort_unstable();
    v
}

fn pairs(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Fraction of item pairs on which `a` and `b` agree.
pub fn rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    a.check_same_size(b)?;
    let n = a.n_items();
    if n < 2 {
        return Ok(1.0);
    }
    let together_both: f64 = contingency(a, b).iter().map(|(_, c)| pairs(*c)).sum();
    let together_a: f64 = a.sizes().iter().map(|&s| pairs(s)).sum();
    let together_b: f64 = b.sizes().iter().map(|&s| pairs(s)).sum();
    let total = pairs(n);
    let disagree = together_a + together_b - 2.0 * together_both;
    Ok(1.0 - disagree / total)
}

fn entropy(sizes: impl Iterator<Item = usize>, n: f64) -> f64 {
    sizes
        .filter(|&s| s > 0)
        .map(|s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Variation of information `H(a) + H(b) - 2 I(a, b)` in nats.
pub fn vi_distance(a: &Partition, b: &Partition) -> Result<f64> {
    a.check_same_size(b)?;
    let n = a.n_items() as f64;
    if a.n_items() == 0 {
        return Ok(0.0);
    }
    let ha = entropy(a.sizes().iter().copied(), n);
    let hb = entropy(b.sizes().iter().copied(), n);
    let hab = entropy(contingency(a, b).into_iter().map(|(_, c)| c), n);
    // VI = 2 H(a,b) - H(a) - H(b)
    Ok((2.0 * hab - ha - hb).max(0.0))
}
