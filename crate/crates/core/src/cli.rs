//! Command implementations behind the `rsappm` binary.
//!
//! Every command writes a `run.json` echoing its arguments and input hashes
//! so the run can be repeated exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{GridDescriptor, GridTopology};
use crate::io::{load_fit_inputs, write_design_csv, write_series_csv, DesignSource, FitConfig};
use crate::model::{simulate_dataset, ScenarioSpec};
use crate::partitions::{PriorSampler, PriorSpec, PriorVariant, WeightRule};
use crate::sampler::{run_chain, ChainOutput, SamplerConfig};
use crate::summaries::{
    coclustering, fit_scores, fitted_band, mode_of, modal_cluster_count, rand_index_posterior, vi_point_estimate_detailed,
};
use crate::timeline::TimelineConfig;

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("cannot serialize {}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let err = |e: csv::Error| Error::io(path.display().to_string(), e.into());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

fn strings<const N: usize>(v: [&str; N]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Arguments of `simulate-prior`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorArgs {
    pub grid: GridDescriptor,
    pub kappa: f64,
    pub xi: f64,
    pub variant: PriorVariant,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub weights: WeightRule,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorSummary {
    pub mean_k: f64,
    pub sd_k: f64,
    pub draws: usize,
}

/// Partition draws from the prior; writes `partitions.csv`,
/// `k_histogram.csv` and `summary.json`.
pub fn simulate_prior(args: &PriorArgs, out: &Path) -> Result<PriorSummary> {
    let topology = GridTopology::from_descriptor(&args.grid)?;
    let spec = PriorSpec::new(args.kappa, args.xi, args.variant)?;
    let sampler = PriorSampler { burn_in: args.burn_in, thin: args.thin, rule: args.weights };
    let draws = sampler.run(&topology, &spec, args.iterations, args.seed)?;
    create_dir(out)?;

    let n = topology.n_cells();
    let header: Vec<String> = std::iter::once("draw".to_string()).chain((1..=n).map(|i| format!("cell_{i}"))).collect();
    let rows: Vec<Vec<String>> = draws
        .iter()
        .enumerate()
        .map(|(j, p)| std::iter::once((j + 1).to_string()).chain(p.one_based().iter().map(|l| l.to_string())).collect())
        .collect();
    write_csv(&out.join("partitions.csv"), &header, &rows)?;

    let mut hist = vec![0usize; n + 1];
    for p in &draws {
        hist[p.n_clusters()] += 1;
    }
    let m = draws.len() as f64;
    let rows: Vec<Vec<String>> = hist
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| vec![k.to_string(), c.to_string(), (c as f64 / m).to_string()])
        .collect();
    write_csv(&out.join("k_histogram.csv"), &strings(["k", "count", "frequency"]), &rows)?;

    let ks: Vec<f64> = draws.iter().map(|p| p.n_clusters() as f64).collect();
    let mean_k = ks.iter().sum::<f64>() / m;
    let sd_k = if ks.len() > 1 {
        (ks.iter().map(|k| (k - mean_k).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let summary = PriorSummary { mean_k, sd_k, draws: draws.len() };
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("run.json"), &json!({"command": "simulate-prior", "args": args}))?;
    Ok(summary)
}

/// Simulated truth as written to `truth.json`; labels and times are one-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthRecord {
    pub scenario: ScenarioSpec,
    pub seed: u64,
    pub changepoints: Vec<usize>,
    pub partitions: Vec<Vec<usize>>,
    pub beta: Vec<Vec<Vec<f64>>>,
    pub u: Vec<Vec<f64>>,
    /// `(cell, time)` pairs that were masked.
    pub missing: Vec<(usize, usize)>,
    /// Responses at the masked pairs before masking.
    pub missing_values: Vec<f64>,
}

/// Writes `data.csv`, `design.csv`, `truth.json` and a ready-to-edit
/// `config.json` for [`fit`].
pub fn simulate_data(spec: &ScenarioSpec, seed: u64, out: &Path) -> Result<TruthRecord> {
    let sim = simulate_dataset(spec, seed)?;
    create_dir(out)?;
    write_series_csv(&out.join("data.csv"), &sim.dataset)?;
    write_design_csv(&out.join("design.csv"), sim.dataset.design())?;
    let t_len = sim.dataset.n_times();
    let truth = TruthRecord {
        scenario: spec.clone(),
        seed,
        changepoints: sim.truth.schedule.changepoints().iter().map(|c| c + 1).collect(),
        partitions: sim.truth.regimes.iter().map(|r| r.partition.one_based()).collect(),
        beta: sim.truth.regimes.iter().map(|r| r.beta.clone()).collect(),
        u: sim.truth.regimes.iter().map(|r| r.u.clone()).collect(),
        missing: sim.dataset.missing().iter().map(|&(i, t)| (i + 1, t + 1)).collect(),
        missing_values: sim.dataset.missing().iter().map(|&(i, t)| sim.complete[i * t_len + t]).collect(),
    };
    write_json(&out.join("truth.json"), &truth)?;

    let mut schedule = sim.truth.schedule.clone();
    schedule.set_changepoints(&schedule.centers().to_vec())?;
    let config = FitConfig {
        grid: sim.dataset.topology().descriptor(),
        timeline: Some(TimelineConfig::from_schedule(&schedule, &[])),
        design: Some(DesignSource::File { path: PathBuf::from("design.csv") }),
        standardize: false,
        sampler: SamplerConfig { iterations: 15000, burn_in: 13000, ..SamplerConfig::default() },
        hyper: Default::default(),
        chains: 1,
    };
    write_json(&out.join("config.json"), &config)?;
    write_json(&out.join("run.json"), &json!({"command": "simulate-data", "scenario": spec.name, "seed": seed}))?;
    Ok(truth)
}

fn chain_dirs(out: &Path, chains: usize) -> Vec<PathBuf> {
    if chains == 1 {
        vec![out.to_path_buf()]
    } else {
        (1..=chains).map(|c| out.join(format!("chain_{c}"))).collect()
    }
}

/// Runs the configured chains concurrently and writes one directory each
/// (`out` itself for a single chain, `out/chain_c` otherwise).
pub fn fit(data: &Path, config_path: &Path, out: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let mut config = FitConfig::read(config_path)?;
    if let Some(s) = seed {
        config.sampler.seed = s;
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let inputs = load_fit_inputs(data, &config, base)?;
    create_dir(out)?;
    let dirs = chain_dirs(out, config.chains);
    let results: Vec<Result<ChainOutput>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..config.chains)
            .map(|c| {
                let mut sc = config.sampler.clone();
                sc.chain += c as u64;
                let (hyper, inputs) = (&config.hyper, &inputs);
                s.spawn(move || run_chain(&sc, hyper, &inputs.dataset, &inputs.schedule))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numerical("chain thread panicked".into()))))
            .collect()
    });
    for (res, dir) in results.into_iter().zip(&dirs) {
        res?.write_dir(dir)?;
    }
    if let Some(rec) = &inputs.standardization {
        write_json(&out.join("standardization.json"), rec)?;
    }
    write_json(
        &out.join("run.json"),
        &json!({
            "command": "fit",
            "data": data.display().to_string(),
            "data_sha256": sha256_file(data)?,
            "config": config,
            "config_sha256": sha256_file(config_path)?,
        }),
    )?;
    Ok(dirs)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSummary {
    pub draws: usize,
    pub lpml: f64,
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    pub cpo_estimator: String,
    /// Per regime.
    pub modal_k: Vec<usize>,
    pub vi_expected_loss: Vec<f64>,
    /// One-based posterior modes.
    pub changepoint_modes: Vec<usize>,
    pub zeta_acceptance: Vec<f64>,
}

/// Headline numbers of a chain.
pub fn chain_summary(chain: &ChainOutput) -> Result<ChainSummary> {
    let scores = fit_scores(&chain.pointwise)?;
    let mut modal_k = Vec::new();
    let mut vi_expected_loss = Vec::new();
    for r in 0..chain.n_regimes() {
        let parts = chain.partitions(r)?;
        modal_k.push(modal_cluster_count(&parts)?);
        vi_expected_loss.push(vi_point_estimate_detailed(&parts)?.expected_vi);
    }
    let changepoint_modes = (0..chain.schedule.n_changepoints())
        .map(|m| {
            let v: Vec<usize> = chain.draws.iter().map(|d| d.changepoints[m]).collect();
            mode_of(&v).map_or(0, |c| c + 1)
        })
        .collect();
    Ok(ChainSummary {
        draws: chain.draws.len(),
        lpml: scores.lpml,
        waic: scores.waic,
        lppd: scores.lppd,
        p_waic: scores.p_waic,
        cpo_estimator: "harmonic-mean".into(),
        modal_k,
        vi_expected_loss,
        changepoint_modes,
        zeta_acceptance: chain.zeta_acceptance.iter().map(|a| a.rate()).collect(),
    })
}

/// Writes VI partitions, co-clustering matrices, Rand-index posteriors
/// between regimes, change-point posteriors, fitted bands for `cells`
/// (zero-based) and `scores.json`.
pub fn summarize(chain_dir: &Path, out: &Path, cells: &[usize], level: f64) -> Result<ChainSummary> {
    let chain = ChainOutput::read_dir(chain_dir)?;
    if chain.draws.is_empty() {
        return Err(Error::Data(format!("{} holds no draws", chain_dir.display())));
    }
    create_dir(out)?;
    let topology = GridTopology::from_descriptor(&chain.grid)?;
    let n = chain.n_cells();
    let r_len = chain.n_regimes();
    let mut per_regime = Vec::with_capacity(r_len);
    for r in 0..r_len {
        let parts = chain.partitions(r)?;
        let est = vi_point_estimate_detailed(&parts)?;
        let rows: Vec<Vec<String>> = (0..n)
            .map(|i| {
                let (row, col) = topology.position(i);
                vec![
                    (i + 1).to_string(),
                    (row + 1).to_string(),
                    (col + 1).to_string(),
                    (est.partition.labels()[i] + 1).to_string(),
                ]
            })
            .collect();
        write_csv(&out.join(format!("vi_partition_r{}.csv", r + 1)), &strings(["cell", "row", "col", "label"]), &rows)?;

        let cc = coclustering(&parts)?;
        let header: Vec<String> = (1..=n).map(|j| format!("cell_{j}")).collect();
        let rows: Vec<Vec<String>> = cc.rows().map(|row| row.iter().map(|v| v.to_string()).collect()).collect();
        write_csv(&out.join(format!("coclustering_r{}.csv", r + 1)), &header, &rows)?;
        per_regime.push(parts);
    }

    let mut header = vec!["draw".to_string()];
    let mut cols = Vec::new();
    for a in 0..r_len {
        for b in a + 1..r_len {
            header.push(format!("r{}_r{}", a + 1, b + 1));
            cols.push(rand_index_posterior(&per_regime[a], &per_regime[b])?);
        }
    }
    let rows: Vec<Vec<String>> = (0..chain.draws.len())
        .map(|j| std::iter::once((j + 1).to_string()).chain(cols.iter().map(|c| c[j].to_string())).collect())
        .collect();
    write_csv(&out.join("rand_index_posterior.csv"), &header, &rows)?;

    let mut rows = Vec::new();
    for m in 0..chain.schedule.n_changepoints() {
        for t in chain.schedule.changepoint_support(m)? {
            let hits = chain.draws.iter().filter(|d| d.changepoints[m] == t).count();
            rows.push(vec![
                (m + 1).to_string(),
                (t + 1).to_string(),
                (hits as f64 / chain.draws.len() as f64).to_string(),
            ]);
        }
    }
    write_csv(&out.join("changepoint_posterior.csv"), &strings(["changepoint", "time", "probability"]), &rows)?;

    for &cell in cells {
        let band = fitted_band(&chain, cell, level)?;
        let rows: Vec<Vec<String>> = band
            .iter()
            .enumerate()
            .map(|(t, b)| vec![(t + 1).to_string(), b.mean.to_string(), b.lower.to_string(), b.upper.to_string()])
            .collect();
        write_csv(&out.join(format!("band_cell{}.csv", cell + 1)), &strings(["time", "mean", "lower", "upper"]), &rows)?;
    }

    let summary = chain_summary(&chain)?;
    write_json(&out.join("scores.json"), &summary)?;
    Ok(summary)
}

/// One row of the comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub chain: String,
    pub model: String,
    pub modal_k: Vec<usize>,
    pub lpml: f64,
    pub waic: f64,
}

/// Model-comparison table; written to `out` as CSV when given.
pub fn compare(chains: &[PathBuf], out: Option<&Path>) -> Result<Vec<ComparisonRow>> {
    if chains.is_empty() {
        return Err(Error::Config("compare needs at least one chain directory".into()));
    }
    let mut rows = Vec::with_capacity(chains.len());
    for dir in chains {
        let chain = ChainOutput::read_dir(dir)?;
        let s = chain_summary(&chain)?;
        let model = serde_json::to_value(chain.config.model)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        rows.push(ComparisonRow {
            chain: dir.display().to_string(),
            model,
            modal_k: s.modal_k,
            lpml: s.lpml,
            waic: s.waic,
        });
    }
    if let Some(path) = out {
        fs::write(path, comparison_csv(&rows)).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(rows)
}

/// CSV text with columns `chain,model,modal_k,lpml,waic`; `modal_k` lists
/// one value per regime separated by `;`.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["chain", "model", "modal_k", "lpml", "waic"]).expect("in-memory write");
    for r in rows {
        let k: Vec<String> = r.modal_k.iter().map(|k| k.to_string()).collect();
        w.write_record([r.chain.clone(), r.model.clone(), k.join(";"), r.lpml.to_string(), r.waic.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}
