//! Synthetic data generators with known ground truth.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Design, ModelState, RegimeState};
use crate::error::{Error, Result};
use crate::grid::GridTopology;
use crate::partitions::Partition;
use crate::timeline::{HarmonicDesign, RegimeSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovariateSpec {
    /// Independent `N(t / T, 1)` entries.
    Gaussian { dim: usize },
    /// Harmonic pairs at the given frequency indices.
    Harmonic { frequencies: Vec<usize> },
}

/// True partition (one-based labels, column-major cells) and variances of
/// one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeTruth {
    pub labels: Vec<usize>,
    pub tau2: f64,
    pub sigma2: f64,
    pub zeta: f64,
}

/// Entries removed after simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MissingSpec {
    /// Cells missing at every time.
    #[serde(default)]
    pub cells: usize,
    /// Times missing at every cell.
    #[serde(default)]
    pub times: usize,
    /// Additional isolated `(cell, time)` entries.
    #[serde(default)]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub n_times: usize,
    pub covariates: CovariateSpec,
    /// Variance of the iid coefficient draws around zero.
    pub beta_variance: f64,
    pub regimes: Vec<RegimeTruth>,
    /// One-based change-point centers.
    #[serde(default)]
    pub centers: Vec<usize>,
    #[serde(default)]
    pub n_lambda: usize,
    /// One-based regime label per interval.
    #[serde(default = "single_pattern")]
    pub pattern: Vec<usize>,
    #[serde(default)]
    pub missing: MissingSpec,
}

fn single_pattern() -> Vec<usize> {
    vec![1]
}

/// Three clusters on a 12 x 10 grid: the four left columns, and the upper
/// and lower halves of the six right columns, with one cell of each half
/// swapped into the other.
pub fn contaminated_three_cluster_labels() -> Vec<usize> {
    let (rows, cols) = (12, 10);
    let mut labels = vec![0; rows * cols];
    for c in 0..cols {
        for r in 0..rows {
            labels[c * rows + r] = if c < 4 {
                1
            } else if r < 6 {
                2
            } else {
                3
            };
        }
    }
    labels[7 * rows + 2] = 3;
    labels[7 * rows + 9] = 2;
    labels
}

fn left_right_labels(rows: usize, cols: usize) -> Vec<usize> {
    (0..rows * cols).map(|i| if i / rows < cols / 2 { 1 } else { 2 }).collect()
}

fn diagonal_labels(rows: usize, cols: usize) -> Vec<usize> {
    (0..rows * cols)
        .map(|i| {
            let (r, c) = ((i % rows) as f64 + 0.5, (i / rows) as f64 + 0.5);
            if r / (rows as f64) + c / (cols as f64) < 1.0 {
                1
            } else {
                2
            }
        })
        .collect()
}

impl ScenarioSpec {
    /// Single regime with three mutually contaminated clusters.
    pub fn single_regime() -> Self {
        Self {
            name: "single-regime-contaminated".into(),
            rows: 12,
            cols: 10,
            n_times: 100,
            covariates: CovariateSpec::Gaussian { dim: 5 },
            beta_variance: 2.5,
            regimes: vec![RegimeTruth {
                labels: contaminated_three_cluster_labels(),
                tau2: 1.0,
                sigma2: 0.5,
                zeta: 0.9,
            }],
            centers: Vec::new(),
            n_lambda: 0,
            pattern: vec![1],
            missing: MissingSpec::default(),
        }
    }

    /// The single-regime scenario with three whole cells, four whole times
    /// and twelve scattered entries removed.
    pub fn single_regime_missing() -> Self {
        Self {
            name: "single-regime-missing".into(),
            missing: MissingSpec {
                cells: 3,
                times: 4,
                points: 12,
            },
            ..Self::single_regime()
        }
    }

    /// Two alternating regimes with harmonic covariates of periods 25, 10
    /// and 5 and change-points near 25, 50 and 75.
    pub fn multi_regime(sigma2: f64, n_lambda: usize) -> Self {
        let (rows, cols) = (12, 10);
        let truth = |labels| RegimeTruth {
            labels,
            tau2: 1.0,
            sigma2,
            zeta: 0.75,
        };
        Self {
            name: "multi-regime".into(),
            rows,
            cols,
            n_times: 100,
            covariates: CovariateSpec::Harmonic {
                frequencies: vec![4, 10, 20],
            },
            beta_variance: 2.5,
            regimes: vec![truth(left_right_labels(rows, cols)), truth(diagonal_labels(rows, cols))],
            centers: vec![25, 50, 75],
            n_lambda,
            pattern: vec![1, 2, 1, 2],
            missing: MissingSpec::default(),
        }
    }

    /// Named presets; `multi-regime` uses `sigma2 = 0.1` and `n_lambda = 5`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "single-regime" | "single-regime-contaminated" => Ok(Self::single_regime()),
            "single-regime-missing" => Ok(Self::single_regime_missing()),
            "multi-regime" => Ok(Self::multi_regime(0.1, 5)),
            _ => Err(Error::Config(format!(
                "unknown scenario `{name}` (expected single-regime-contaminated, single-regime-missing or multi-regime)"
            ))),
        }
    }

    pub fn topology(&self) -> Result<GridTopology> {
        GridTopology::new(self.rows, self.cols)
    }

    pub fn schedule(&self) -> Result<RegimeSchedule> {
        let zero = |v: &[usize]| -> Result<Vec<usize>> {
            v.iter()
                .map(|&x| x.checked_sub(1).ok_or_else(|| Error::Config("one-based value 0".into())))
                .collect()
        };
        RegimeSchedule::new(
            self.n_times,
            self.regimes.len(),
            zero(&self.centers)?,
            self.n_lambda,
            zero(&self.pattern)?,
        )
    }

    pub fn dim(&self) -> usize {
        match &self.covariates {
            CovariateSpec::Gaussian { dim } => *dim,
            CovariateSpec::Harmonic { frequencies } => 2 * frequencies.len(),
        }
    }

    pub fn true_partitions(&self) -> Vec<Partition> {
        self.regimes.iter().map(|r| Partition::from_labels(&r.labels)).collect()
    }

    fn validate(&self) -> Result<()> {
        let n = self.rows * self.cols;
        if self.regimes.is_empty() {
            return Err(Error::Config("a scenario needs at least one regime".into()));
        }
        if !(self.beta_variance > 0.0) {
            return Err(Error::Config("beta_variance must be positive".into()));
        }
        for (r, reg) in self.regimes.iter().enumerate() {
            if reg.labels.len() != n {
                return Err(Error::Config(format!(
                    "regime {} labels cover {} cells, grid has {n}",
                    r + 1,
                    reg.labels.len()
                )));
            }
            if !(reg.tau2 > 0.0 && reg.sigma2 > 0.0) || !(0.0..1.0).contains(&reg.zeta) {
                return Err(Error::Config(format!("regime {} has invalid variances or zeta", r + 1)));
            }
        }
        let m = &self.missing;
        if m.cells >= n || m.times >= self.n_times {
            return Err(Error::Config("missing pattern removes every cell or time".into()));
        }
        let remaining = (n - m.cells) * (self.n_times - m.times);
        if m.points >= remaining {
            return Err(Error::Config("too many scattered missing points".into()));
        }
        if self.dim() == 0 {
            return Err(Error::Config("design must have at least one column".into()));
        }
        Ok(())
    }
}

/// A simulated dataset with the state that generated it.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: Dataset,
    pub truth: ModelState,
    /// All simulated responses, cell-major, including masked entries.
    pub complete: Vec<f64>,
}

fn gaussian_design<R: Rng>(n_times: usize, dim: usize, rng: &mut R) -> Design {
    let mut v = Vec::with_capacity(n_times * dim);
    for t in 0..n_times {
        let m = (t + 1) as f64 / n_times as f64;
        for _ in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            v.push(m + z);
        }
    }
    Design::new(n_times, dim, v).expect("shape is consistent")
}

/// Draws data from the model under the scenario's fixed truth.
///
/// Identical seeds give bit-identical output.
pub fn simulate_dataset(spec: &ScenarioSpec, seed: u64) -> Result<SimulatedData> {
    spec.validate()?;
    let topology = spec.topology()?;
    let mut schedule = spec.schedule()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, t_len, k) = (topology.n_cells(), spec.n_times, spec.dim());

    let design = match &spec.covariates {
        CovariateSpec::Gaussian { dim } => gaussian_design(t_len, *dim, &mut rng),
        CovariateSpec::Harmonic { frequencies } => {
            Design::harmonic(&HarmonicDesign::new(t_len, frequencies.clone())?)
        }
    };

    let sd = spec.beta_variance.sqrt();
    let mut regimes = Vec::with_capacity(spec.regimes.len());
    for truth in &spec.regimes {
        let partition = Partition::from_labels(&truth.labels);
        let beta: Vec<Vec<f64>> = (0..partition.n_clusters())
            .map(|_| (0..k).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let mut prec = topology.leroux_precision(truth.zeta)?.matrix().clone();
        prec.scale(1.0 / truth.tau2);
        let u = prec.cholesky()?.sample_canonical(&vec![0.0; n], &mut rng);
        regimes.push(RegimeState {
            partition,
            beta,
            u,
            tau2: truth.tau2,
            sigma2: truth.sigma2,
            zeta: truth.zeta,
            mu_beta: vec![0.0; k],
            sigma_beta: vec![spec.beta_variance; k],
        });
    }
    for m in 0..schedule.n_changepoints() {
        let support = schedule.changepoint_support(m)?;
        let v = rng.random_range(support);
        schedule.set_changepoint(m, v)?;
    }

    let mut complete = vec![0.0; n * t_len];
    for t in 0..t_len {
        let reg = &regimes[schedule.regime_of(t)];
        let x = design.row(t);
        let sd = reg.sigma2.sqrt();
        for i in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            complete[i * t_len + t] = reg.fitted(i, x) + reg.u[i] + sd * e;
        }
    }

    let mut mask = vec![false; n * t_len];
    let ms = spec.missing;
    let cells = sample_indices(&mut rng, n, ms.cells).into_vec();
    let times = sample_indices(&mut rng, t_len, ms.times).into_vec();
    for &i in &cells {
        (0..t_len).for_each(|t| mask[i * t_len + t] = true);
    }
    for &t in &times {
        (0..n).for_each(|i| mask[i * t_len + t] = true);
    }
    let mut placed = 0;
    while placed < ms.points {
        let idx = rng.random_range(0..n * t_len);
        if !mask[idx] {
            mask[idx] = true;
            placed += 1;
        }
    }

    let values = complete
        .iter()
        .zip(&mask)
        .map(|(&v, &m)| (!m).then_some(v))
        .collect();
    let dataset = Dataset::new(topology, design, values)?;
    let imputed = dataset
        .missing()
        .iter()
        .map(|&(i, t)| complete[i * t_len + t])
        .collect();
    Ok(SimulatedData {
        dataset,
        truth: ModelState {
            regimes,
            schedule,
            imputed,
        },
        complete,
    })
}
