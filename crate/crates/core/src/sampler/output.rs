//! Posterior draws and their on-disk layout.
//!
//! A chain directory holds `manifest.json`, `timing.json` and one CSV per
//! parameter block. Everything except `timing.json` is a pure function of the
//! inputs and the seed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChangepointMode, AllocationVariant, ModelVariant, Sampler, SamplerConfig};
use crate::error::{Error, Result};
use crate::grid::GridDescriptor;
use crate::model::{Dataset, Design, Hyperparameters, ModelState, RegimeState};
use crate::partitions::{Partition, WeightRule};
use crate::summaries::PointwiseAccumulator;
use crate::timeline::{RegimeSchedule, TimelineConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceRate {
    pub proposed: usize,
    pub accepted: usize,
}

impl AcceptanceRate {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Welford moments of a vector-valued quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMoments {
    pub count: usize,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningMoments {
    pub fn new(len: usize) -> Self {
        Self { count: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Sample variance (`n - 1` divisor); zero with fewer than two draws.
    pub fn variance(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        self.m2.iter().map(|s| s / (self.count - 1) as f64).collect()
    }
}

/// One retained posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub iteration: usize,
    pub regimes: Vec<RegimeState>,
    /// Zero-based change-point times.
    pub changepoints: Vec<usize>,
    /// Observed-data log-likelihood.
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variants {
    pub model: ModelVariant,
    pub allocation: AllocationVariant,
    pub weights: WeightRule,
    pub changepoints: ChangepointMode,
    pub zeta_fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub chain: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub n_draws: usize,
    pub variants: Variants,
    /// SHA-256 of the grid shape, design and responses.
    pub input_hash: String,
    pub grid: GridDescriptor,
    pub n_times: usize,
    pub dim: usize,
    pub n_regimes: usize,
    pub n_observed: usize,
    pub n_missing: usize,
    pub timeline: TimelineConfig,
    pub sampler: SamplerConfig,
    pub hyper: Hyperparameters,
    /// Estimator behind the reported conditional predictive ordinates.
    pub cpo_estimator: String,
    pub zeta_acceptance: Vec<AcceptanceRate>,
    pub pointwise_matrix: bool,
    pub imputation_draws: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Timing {
    elapsed_seconds: f64,
}

/// Result of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub config: SamplerConfig,
    pub hyper: Hyperparameters,
    pub grid: GridDescriptor,
    pub design: Design,
    /// Schedule shape; change-points hold their starting values.
    pub schedule: RegimeSchedule,
    pub observed: Vec<(usize, usize)>,
    pub missing: Vec<(usize, usize)>,
    pub input_hash: String,
    pub draws: Vec<Draw>,
    /// Streaming statistics over retained draws, in `observed` order.
    pub pointwise: PointwiseAccumulator,
    /// Draws x observations, when requested.
    pub pointwise_matrix: Option<Vec<Vec<f64>>>,
    /// Moments of the imputed responses, in `missing` order.
    pub imputations: RunningMoments,
    pub imputation_draws: Option<Vec<Vec<f64>>>,
    pub zeta_acceptance: Vec<AcceptanceRate>,
    pub elapsed_seconds: f64,
}

/// Hash of everything a chain depends on besides its configuration.
pub fn input_hash(data: &Dataset) -> String {
    let mut h = Sha256::new();
    let topo = data.topology();
    for v in [topo.rows(), topo.cols(), data.n_times(), data.dim()] {
        h.update((v as u64).to_le_bytes());
    }
    for v in data.design().values() {
        h.update(v.to_bits().to_le_bytes());
    }
    for v in data.raw_values() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl ChainOutput {
    pub(crate) fn empty(sampler: &Sampler, data: &Dataset, schedule: &RegimeSchedule) -> Self {
        let config = sampler.config().clone();
        let n_obs = data.observed().len();
        let n_mis = data.missing().len();
        Self {
            pointwise_matrix: config.store_pointwise.then(Vec::new),
            imputation_draws: config.store_imputations.then(Vec::new),
            config,
            hyper: sampler.hyper().clone(),
            grid: data.topology().descriptor(),
            design: data.design().clone(),
            schedule: schedule.clone(),
            observed: data.observed().to_vec(),
            missing: data.missing().to_vec(),
            input_hash: input_hash(data),
            draws: Vec::new(),
            pointwise: PointwiseAccumulator::new(n_obs),
            imputations: RunningMoments::new(n_mis),
            zeta_acceptance: vec![AcceptanceRate::default(); schedule.n_regimes()],
            elapsed_seconds: 0.0,
        }
    }

    pub(crate) fn record(&mut self, iteration: usize, state: &ModelState, pointwise: Vec<f64>) {
        self.pointwise.push(&pointwise);
        self.imputations.push(&state.imputed);
        if let Some(m) = &mut self.imputation_draws {
            m.push(state.imputed.clone());
        }
        let log_likelihood = pointwise.iter().sum();
        if let Some(m) = &mut self.pointwise_matrix {
            m.push(pointwise);
        }
        self.draws.push(Draw {
            iteration,
            regimes: state.regimes.clone(),
            changepoints: state.schedule.changepoints().to_vec(),
            log_likelihood,
        });
    }

    pub fn n_cells(&self) -> usize {
        self.grid.rows * self.grid.cols
    }

    pub fn n_regimes(&self) -> usize {
        self.schedule.n_regimes()
    }

    /// Partition draws of regime `r`.
    pub fn partitions(&self, regime: usize) -> Result<Vec<Partition>> {
        if regime >= self.n_regimes() {
            return Err(Error::OutOfRange { index: regime, lo: 0, hi: self.n_regimes() - 1 });
        }
        Ok(self.draws.iter().map(|d| d.regimes[regime].partition.clone()).collect())
    }

    /// Full model state of draw `k`; imputations are filled from the stored
    /// draws when available and from the running means otherwise.
    pub fn state_at(&self, k: usize) -> Result<ModelState> {
        let d = self.draws.get(k).ok_or(Error::OutOfRange {
            index: k,
            lo: 0,
            hi: self.draws.len().saturating_sub(1),
        })?;
        let mut schedule = self.schedule.clone();
        schedule.set_changepoints(&d.changepoints)?;
        let imputed = match &self.imputation_draws {
            Some(m) => m[k].clone(),
            None => self.imputations.mean.clone(),
        };
        Ok(ModelState { regimes: d.regimes.clone(), schedule, imputed })
    }

    pub fn manifest(&self) -> Manifest {
        let c = &self.config;
        Manifest {
            format_version: FORMAT_VERSION,
            seed: c.seed,
            chain: c.chain,
            iterations: c.iterations,
            burn_in: c.burn_in,
            thinning: c.thinning,
            n_draws: self.draws.len(),
            variants: Variants {
                model: c.model,
                allocation: c.allocation,
                weights: c.weights,
                changepoints: c.changepoints,
                zeta_fixed: self.hyper.zeta.is_fixed(),
            },
            input_hash: self.input_hash.clone(),
            grid: self.grid,
            n_times: self.design.n_times(),
            dim: self.design.dim(),
            n_regimes: self.n_regimes(),
            n_observed: self.observed.len(),
            n_missing: self.missing.len(),
            timeline: TimelineConfig::from_schedule(&self.schedule, &[]),
            sampler: c.clone(),
            hyper: self.hyper.clone(),
            cpo_estimator: "harmonic-mean".into(),
            zeta_acceptance: self.zeta_acceptance.clone(),
            pointwise_matrix: self.pointwise_matrix.is_some(),
            imputation_draws: self.imputation_draws.is_some(),
        }
    }

    /// Writes the chain directory, creating it if needed.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        write_json(&dir.join("manifest.json"), &self.manifest())?;
        write_json(&dir.join("timing.json"), &Timing { elapsed_seconds: self.elapsed_seconds })?;

        let k = self.design.dim();
        let n = self.n_cells();
        let r_len = self.n_regimes();
        let mut t = Table::new(std::iter::once("time".to_string()).chain((1..=k).map(|l| format!("x_{l}"))));
        for time in 0..self.design.n_times() {
            t.row(std::iter::once((time + 1).to_string()).chain(self.design.row(time).iter().map(num)));
        }
        t.write(&dir.join("design.csv"))?;

        let mut t = Table::new(["draw", "iteration", "log_likelihood"].map(String::from));
        for (j, d) in self.draws.iter().enumerate() {
            t.row([(j + 1).to_string(), d.iteration.to_string(), num(&d.log_likelihood)]);
        }
        t.write(&dir.join("draws.csv"))?;

        for r in 0..r_len {
            let mut t = Table::new((1..=n).map(|i| format!("cell_{i}")));
            for d in &self.draws {
                t.row(d.regimes[r].partition.one_based().iter().map(|v| v.to_string()));
            }
            t.write(&dir.join(format!("partition_r{}.csv", r + 1)))?;
        }

        let head = |first: &[&str], prefix: &str, len: usize| {
            first
                .iter()
                .map(|s| s.to_string())
                .chain((1..=len).map(move |l| format!("{prefix}_{l}")))
                .collect::<Vec<_>>()
        };

        let mut t = Table::new(head(&["draw", "regime", "cluster"], "beta", k));
        for (j, d) in self.draws.iter().enumerate() {
            for (r, reg) in d.regimes.iter().enumerate() {
                for (c, b) in reg.beta.iter().enumerate() {
                    t.row([(j + 1).to_string(), (r + 1).to_string(), (c + 1).to_string()].into_iter().chain(b.iter().map(num)));
                }
            }
        }
        t.write(&dir.join("beta.csv"))?;

        let mut u = Table::new(head(&["draw", "regime"], "u", n));
        let mut mu = Table::new(head(&["draw", "regime"], "mu_beta", k));
        let mut sb = Table::new(head(&["draw", "regime"], "sigma_beta", k));
        for (j, d) in self.draws.iter().enumerate() {
            for (r, reg) in d.regimes.iter().enumerate() {
                let key = [(j + 1).to_string(), (r + 1).to_string()];
                u.row(key.clone().into_iter().chain(reg.u.iter().map(num)));
                mu.row(key.clone().into_iter().chain(reg.mu_beta.iter().map(num)));
                sb.row(key.into_iter().chain(reg.sigma_beta.iter().map(num)));
            }
        }
        u.write(&dir.join("u.csv"))?;
        mu.write(&dir.join("mu_beta.csv"))?;
        sb.write(&dir.join("sigma_beta.csv"))?;

        let scalars: [(&str, fn(&RegimeState) -> f64); 3] =
            [("tau2", |r| r.tau2), ("sigma2", |r| r.sigma2), ("zeta", |r| r.zeta)];
        for (name, get) in scalars {
            let mut t = Table::new(head(&["draw"], "regime", r_len));
            for (j, d) in self.draws.iter().enumerate() {
                t.row(std::iter::once((j + 1).to_string()).chain(d.regimes.iter().map(|r| num(&get(r)))));
            }
            t.write(&dir.join(format!("{name}.csv")))?;
        }

        let mut t = Table::new(head(&["draw"], "changepoint", self.schedule.n_changepoints()));
        for (j, d) in self.draws.iter().enumerate() {
            t.row(std::iter::once((j + 1).to_string()).chain(d.changepoints.iter().map(|c| (c + 1).to_string())));
        }
        t.write(&dir.join("changepoints.csv"))?;

        let mut t = Table::new(
            ["cell", "time", "mean_log_lik", "sum_sq_dev", "log_sum_lik", "log_sum_inv_lik"].map(String::from),
        );
        let p = &self.pointwise;
        for (o, &(i, time)) in self.observed.iter().enumerate() {
            t.row([
                (i + 1).to_string(),
                (time + 1).to_string(),
                num(&p.mean_log_lik()[o]),
                num(&p.sum_sq_dev()[o]),
                num(&p.log_sum_lik()[o]),
                num(&p.log_sum_inv_lik()[o]),
            ]);
        }
        t.write(&dir.join("pointwise.csv"))?;

        let mut t = Table::new(["cell", "time", "mean", "sum_sq_dev"].map(String::from));
        for (s, &(i, time)) in self.missing.iter().enumerate() {
            t.row([
                (i + 1).to_string(),
                (time + 1).to_string(),
                num(&self.imputations.mean[s]),
                num(&self.imputations.m2[s]),
            ]);
        }
        t.write(&dir.join("imputations.csv"))?;

        if let Some(m) = &self.pointwise_matrix {
            let mut t = Table::new(head(&["draw"], "obs", self.observed.len()));
            for (j, row) in m.iter().enumerate() {
                t.row(std::iter::once((j + 1).to_string()).chain(row.iter().map(num)));
            }
            t.write(&dir.join("pointwise_matrix.csv"))?;
        }
        if let Some(m) = &self.imputation_draws {
            let mut t = Table::new(head(&["draw"], "slot", self.missing.len()));
            for (j, row) in m.iter().enumerate() {
                t.row(std::iter::once((j + 1).to_string()).chain(row.iter().map(num)));
            }
            t.write(&dir.join("imputation_draws.csv"))?;
        }
        Ok(())
    }

    /// Reads a directory written by [`ChainOutput::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported chain format version {}",
                manifest.format_version
            )));
        }
        let elapsed_seconds = match read_json::<Timing>(&dir.join("timing.json")) {
            Ok(t) => t.elapsed_seconds,
            Err(_) => 0.0,
        };
        let n = manifest.grid.rows * manifest.grid.cols;
        let k = manifest.dim;
        let r_len = manifest.n_regimes;
        let n_draws = manifest.n_draws;
        let schedule = manifest.timeline.schedule()?;

        let rows = read_rows(&dir.join("design.csv"), k + 1)?;
        if rows.len() != manifest.n_times {
            return Err(Error::Data(format!("design.csv has {} rows, expected {}", rows.len(), manifest.n_times)));
        }
        let design = Design::new(manifest.n_times, k, rows.iter().flat_map(|r| r[1..].to_vec()).collect())?;

        let draw_rows = read_rows(&dir.join("draws.csv"), 3)?;
        expect_rows("draws.csv", draw_rows.len(), n_draws)?;

        let mut partitions = vec![Vec::with_capacity(n_draws); r_len];
        for (r, out) in partitions.iter_mut().enumerate() {
            let name = format!("partition_r{}.csv", r + 1);
            let rows = read_rows(&dir.join(&name), n)?;
            expect_rows(&name, rows.len(), n_draws)?;
            for row in rows {
                let labels = row
                    .iter()
                    .map(|&v| to_index(v, &name))
                    .collect::<Result<Vec<_>>>()?;
                out.push(Partition::from_labels(&labels));
            }
        }

        let mut regimes: Vec<Vec<RegimeState>> = (0..n_draws)
            .map(|j| {
                (0..r_len)
                    .map(|r| RegimeState {
                        partition: partitions[r][j].clone(),
                        beta: Vec::new(),
                        u: Vec::new(),
                        tau2: 0.0,
                        sigma2: 0.0,
                        zeta: 0.0,
                        mu_beta: Vec::new(),
                        sigma_beta: Vec::new(),
                    })
                    .collect()
            })
            .collect();

        let slot = |row: &[f64], name: &str| -> Result<(usize, usize)> {
            let j = to_index(row[0], name)?;
            let r = to_index(row[1], name)?;
            if j >= n_draws || r >= r_len {
                return Err(Error::Data(format!("{name}: draw/regime key out of range")));
            }
            Ok((j, r))
        };

        for row in read_rows(&dir.join("beta.csv"), k + 3)? {
            let (j, r) = slot(&row, "beta.csv")?;
            regimes[j][r].beta.push(row[3..].to_vec());
        }
        for row in read_rows(&dir.join("u.csv"), n + 2)? {
            let (j, r) = slot(&row, "u.csv")?;
            regimes[j][r].u = row[2..].to_vec();
        }
        for row in read_rows(&dir.join("mu_beta.csv"), k + 2)? {
            let (j, r) = slot(&row, "mu_beta.csv")?;
            regimes[j][r].mu_beta = row[2..].to_vec();
        }
        for row in read_rows(&dir.join("sigma_beta.csv"), k + 2)? {
            let (j, r) = slot(&row, "sigma_beta.csv")?;
            regimes[j][r].sigma_beta = row[2..].to_vec();
        }
        let setters: [(&str, fn(&mut RegimeState, f64)); 3] = [
            ("tau2", |r, v| r.tau2 = v),
            ("sigma2", |r, v| r.sigma2 = v),
            ("zeta", |r, v| r.zeta = v),
        ];
        for (name, set) in setters {
            let file = format!("{name}.csv");
            let rows = read_rows(&dir.join(&file), r_len + 1)?;
            expect_rows(&file, rows.len(), n_draws)?;
            for (j, row) in rows.iter().enumerate() {
                for r in 0..r_len {
                    set(&mut regimes[j][r], row[r + 1]);
                }
            }
        }
        for (j, draw) in regimes.iter().enumerate() {
            for (r, reg) in draw.iter().enumerate() {
                if reg.beta.len() != reg.partition.n_clusters() || reg.u.len() != n || reg.mu_beta.len() != k {
                    return Err(Error::Data(format!("draw {} regime {} is incomplete", j + 1, r + 1)));
                }
            }
        }

        let n_cp = schedule.n_changepoints();
        let cp_rows = read_rows(&dir.join("changepoints.csv"), n_cp + 1)?;
        expect_rows("changepoints.csv", cp_rows.len(), n_draws)?;

        let draws = regimes
            .into_iter()
            .zip(cp_rows)
            .zip(draw_rows)
            .map(|((regimes, cp), dr)| {
                Ok(Draw {
                    iteration: to_index(dr[1], "draws.csv")? + 1,
                    regimes,
                    changepoints: cp[1..].iter().map(|&c| to_index(c, "changepoints.csv")).collect::<Result<_>>()?,
                    log_likelihood: dr[2],
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let pw = read_rows(&dir.join("pointwise.csv"), 6)?;
        expect_rows("pointwise.csv", pw.len(), manifest.n_observed)?;
        let observed = pw
            .iter()
            .map(|r| Ok((to_index(r[0], "pointwise.csv")?, to_index(r[1], "pointwise.csv")?)))
            .collect::<Result<Vec<_>>>()?;
        let col = |c: usize| pw.iter().map(|r| r[c]).collect::<Vec<_>>();
        let pointwise = PointwiseAccumulator::from_parts(n_draws, col(2), col(3), col(4), col(5))?;

        let im = read_rows(&dir.join("imputations.csv"), 4)?;
        expect_rows("imputations.csv", im.len(), manifest.n_missing)?;
        let missing = im
            .iter()
            .map(|r| Ok((to_index(r[0], "imputations.csv")?, to_index(r[1], "imputations.csv")?)))
            .collect::<Result<Vec<_>>>()?;
        let imputations = RunningMoments {
            count: n_draws,
            mean: im.iter().map(|r| r[2]).collect(),
            m2: im.iter().map(|r| r[3]).collect(),
        };

        let matrix = |flag: bool, file: &str, width: usize| -> Result<Option<Vec<Vec<f64>>>> {
            if !flag {
                return Ok(None);
            }
            let rows = read_rows(&dir.join(file), width + 1)?;
            expect_rows(file, rows.len(), n_draws)?;
            Ok(Some(rows.into_iter().map(|r| r[1..].to_vec()).collect()))
        };
        let pointwise_matrix = matrix(manifest.pointwise_matrix, "pointwise_matrix.csv", observed.len())?;
        let imputation_draws = matrix(manifest.imputation_draws, "imputation_draws.csv", missing.len())?;

        Ok(Self {
            config: manifest.sampler,
            hyper: manifest.hyper,
            grid: manifest.grid,
            design,
            schedule,
            observed,
            missing,
            input_hash: manifest.input_hash,
            draws,
            pointwise,
            pointwise_matrix,
            imputations,
            imputation_draws,
            zeta_acceptance: manifest.zeta_acceptance,
            elapsed_seconds,
        })
    }
}

fn num(x: &f64) -> String {
    x.to_string()
}

fn to_index(v: f64, file: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
        Ok(v as usize - 1)
    } else {
        Err(Error::Data(format!("{file}: expected a positive integer, got {v}")))
    }
}

fn expect_rows(file: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Data(format!("{file} has {got} rows, expected {want}")))
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: impl IntoIterator<Item = String>) -> Self {
        Self { header: header.into_iter().collect(), rows: Vec::new() }
    }

    fn row(&mut self, values: impl IntoIterator<Item = String>) {
        self.rows.push(values.into_iter().collect());
    }

    fn write(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| Error::io(path.display().to_string(), e.into());
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Numeric rows of a headed CSV, each checked to have `width` fields.
fn read_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let name = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(&name, e.into()))?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{name}: {e}")))?;
        if rec.len() != width {
            return Err(Error::Data(format!(
                "{name} line {}: expected {width} fields, got {}",
                line + 2,
                rec.len()
            )));
        }
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("{name} line {}: `{f}` is not a number", line + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("cannot serialize {}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}
