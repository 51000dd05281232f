//! Data ingestion, standardization and run configuration.
//!
//! Series are read in long format with columns `cell_id,time,value,missing`
//! (one-based cells in column-major order, one-based times). Pairs absent
//! from the table are treated as missing.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridDescriptor, GridTopology};
use crate::model::{Dataset, Design, Hyperparameters};
use crate::sampler::SamplerConfig;
use crate::timeline::{HarmonicDesign, RegimeSchedule, TimelineConfig};

/// One long-format record, zero-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    pub cell: usize,
    pub time: usize,
    /// `None` when flagged missing.
    pub value: Option<f64>,
}

/// Validated long-format table on a known grid and time span.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeriesTable {
    grid: GridDescriptor,
    n_times: usize,
    records: Vec<RawRecord>,
}

impl RawSeriesTable {
    /// Checks ranges and uniqueness of `(cell, time)` pairs.
    pub fn new(grid: GridDescriptor, n_times: usize, records: Vec<RawRecord>) -> Result<Self> {
        let n_cells = grid.rows * grid.cols;
        if n_cells == 0 || n_times == 0 {
            return Err(Error::Dimension("grid and time span must be non-empty".into()));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.cell >= n_cells {
                return Err(Error::Data(format!(
                    "cell_id {} outside the {}x{} grid (expected 1..={n_cells})",
                    r.cell + 1,
                    grid.rows,
                    grid.cols
                )));
            }
            if r.time >= n_times {
                return Err(Error::Data(format!("time {} outside 1..={n_times}", r.time + 1)));
            }
            if !seen.insert((r.cell, r.time)) {
                return Err(Error::Data(format!(
                    "duplicate record for cell_id {}, time {}",
                    r.cell + 1,
                    r.time + 1
                )));
            }
            if let Some(v) = r.value {
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "non-finite value at cell_id {}, time {}",
                        r.cell + 1,
                        r.time + 1
                    )));
                }
            }
        }
        Ok(Self { grid, n_times, records })
    }

    /// Parses a CSV file; `n_times = None` infers the span from the largest time.
    pub fn read_csv(path: &Path, grid: GridDescriptor, n_times: Option<usize>) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_reader(file, &path.display().to_string(), grid, n_times)
    }

    pub fn from_reader<R: std::io::Read>(reader: R, name: &str, grid: GridDescriptor, n_times: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Data(format!("{name}: cannot read header: {e}")))?
            .clone();
        let col = |want: &str| {
            header
                .iter()
                .position(|h| h.eq_ignore_ascii_case(want))
                .ok_or_else(|| Error::Data(format!("{name} line 1: missing column `{want}` (expected cell_id,time,value,missing)")))
        };
        let (ci, ti, vi, mi) = (col("cell_id")?, col("time")?, col("value")?, col("missing")?);
        let mut records = Vec::new();
        let mut max_time = 0;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::Data(format!("{name} line {line}: {e}"))
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: usize| rec.get(i).unwrap_or("");
            let index = |i: usize, what: &str| -> Result<usize> {
                match field(i).parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(Error::Data(format!(
                        "{name} line {line}: {what} must be a positive integer, got `{}`",
                        field(i)
                    ))),
                }
            };
            let cell = index(ci, "cell_id")?;
            let time = index(ti, "time")?;
            let missing = match field(mi) {
                "0" | "false" | "FALSE" | "" => false,
                "1" | "true" | "TRUE" => true,
                other => {
                    return Err(Error::Data(format!(
                        "{name} line {line}: missing flag must be 0 or 1, got `{other}`"
                    )))
                }
            };
            let value = if missing {
                None
            } else {
                let raw = field(vi);
                let v = raw
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("{name} line {line}: value `{raw}` is not a number")))?;
                if !v.is_finite() {
                    return Err(Error::Data(format!("{name} line {line}: value must be finite")));
                }
                Some(v)
            };
            max_time = max_time.max(time + 1);
            records.push(RawRecord { cell, time, value });
        }
        let n_times = match n_times {
            Some(t) => t,
            None if max_time > 0 => max_time,
            None => return Err(Error::Data(format!("{name}: no records"))),
        };
        Self::new(grid, n_times, records).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{name}: {msg}")),
            other => other,
        })
    }

    pub fn grid(&self) -> GridDescriptor {
        self.grid
    }

    pub fn n_cells(&self) -> usize {
        self.grid.rows * self.grid.cols
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn records(&self) -> &[RawRecord] {
        &self.records
    }

    /// Time span after padding to an even length.
    pub fn padded_times(&self) -> usize {
        self.n_times + self.n_times % 2
    }

    /// Cell-major values over `n_times` columns; absent pairs are missing.
    pub fn values(&self, n_times: usize) -> Vec<Option<f64>> {
        let mut v = vec![None; self.n_cells() * n_times];
        for r in &self.records {
            v[r.cell * n_times + r.time] = r.value;
        }
        v
    }

    /// Dataset on the raw scale (no transform, no padding).
    pub fn to_dataset(&self, design: Design) -> Result<Dataset> {
        let topology = GridTopology::from_descriptor(&self.grid)?;
        Dataset::new(topology, design, self.values(self.n_times))
    }
}

/// Parameters of `z = (ln(y + shift) - mean) / sd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord {
    /// Smallest observed nonzero raw value.
    pub shift: f64,
    pub mean: f64,
    pub sd: f64,
    /// Raw series length before padding.
    pub raw_times: usize,
    pub padded: bool,
}

impl StandardizationRecord {
    pub fn forward(&self, raw: f64) -> f64 {
        ((raw + self.shift).ln() - self.mean) / self.sd
    }

    pub fn inverse(&self, z: f64) -> f64 {
        (z * self.sd + self.mean).exp() - self.shift
    }
}

/// Log-shift and globally standardize observed entries; odd spans gain a
/// trailing all-missing time. `design` must cover the padded span.
pub fn standardize(raw: &RawSeriesTable, design: Design) -> Result<(Dataset, StandardizationRecord)> {
    let observed: Vec<f64> = raw.records.iter().filter_map(|r| r.value).collect();
    if observed.is_empty() {
        return Err(Error::Data("no observed values to standardize".into()));
    }
    let shift = observed
        .iter()
        .copied()
        .filter(|&v| v != 0.0)
        .fold(f64::INFINITY, f64::min);
    if !shift.is_finite() {
        return Err(Error::Data("all observed values are zero".into()));
    }
    if shift <= 0.0 {
        return Err(Error::Data(format!("values must be non-negative, found {shift}")));
    }
    let logs: Vec<f64> = observed.iter().map(|v| (v + shift).ln()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let sd = if logs.len() > 1 {
        (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    if !(sd > 0.0) {
        return Err(Error::Data("observed values have zero spread after the log transform".into()));
    }
    let record = StandardizationRecord {
        shift,
        mean,
        sd,
        raw_times: raw.n_times,
        padded: raw.n_times % 2 == 1,
    };
    let t_len = raw.padded_times();
    if design.n_times() != t_len {
        return Err(Error::Dimension(format!(
            "design covers {} times, standardized series has T = {t_len}",
            design.n_times()
        )));
    }
    let values = raw
        .values(t_len)
        .into_iter()
        .map(|v| v.map(|y| record.forward(y)))
        .collect();
    let topology = GridTopology::from_descriptor(&raw.grid)?;
    Ok((Dataset::new(topology, design, values)?, record))
}

/// Writes a dataset in long format; missing entries carry an empty value.
pub fn write_series_csv(path: &Path, data: &Dataset) -> Result<()> {
    let err = |e: csv::Error| Error::io(path.display().to_string(), e.into());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["cell_id", "time", "value", "missing"]).map_err(err)?;
    for i in 0..data.n_cells() {
        for t in 0..data.n_times() {
            let (value, flag) = match data.value(i, t) {
                Some(v) => (v.to_string(), "0"),
                None => (String::new(), "1"),
            };
            w.write_record([(i + 1).to_string(), (t + 1).to_string(), value, flag.to_string()])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes covariates with columns `time,x_1..x_K`.
pub fn write_design_csv(path: &Path, design: &Design) -> Result<()> {
    let err = |e: csv::Error| Error::io(path.display().to_string(), e.into());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let header: Vec<String> = std::iter::once("time".to_string())
        .chain((1..=design.dim()).map(|l| format!("x_{l}")))
        .collect();
    w.write_record(&header).map_err(err)?;
    for t in 0..design.n_times() {
        let row: Vec<String> = std::iter::once((t + 1).to_string())
            .chain(design.row(t).iter().map(|v| v.to_string()))
            .collect();
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads covariates written by [`write_design_csv`]; rows must list times
/// `1..=T` in order.
pub fn read_design_csv(path: &Path) -> Result<Design> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(&name, e.into()))?;
    let width = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{name}: cannot read header: {e}")))?
        .len();
    if width < 2 {
        return Err(Error::Data(format!("{name} line 1: expected time and at least one covariate column")));
    }
    let mut values = Vec::new();
    let mut n_times = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Data(format!("{name} line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let time: usize = rec[0]
            .parse()
            .map_err(|_| Error::Data(format!("{name} line {line}: time `{}` is not an integer", &rec[0])))?;
        if time != n_times + 1 {
            return Err(Error::Data(format!("{name} line {line}: expected time {}, got {time}", n_times + 1)));
        }
        for f in rec.iter().skip(1) {
            values.push(
                f.parse::<f64>()
                    .map_err(|_| Error::Data(format!("{name} line {line}: `{f}` is not a number")))?,
            );
        }
        n_times += 1;
    }
    Design::new(n_times, width - 1, values)
}

/// Covariate source of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DesignSource {
    /// Harmonic pairs at the given frequency indices.
    Harmonic { frequencies: Vec<usize> },
    /// CSV with columns `time,x_1..x_K`; relative paths resolve against the
    /// configuration file's directory.
    File { path: PathBuf },
}

fn one() -> usize {
    1
}

/// Configuration of the `fit` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub grid: GridDescriptor,
    /// Defaults to a single regime over the data span.
    #[serde(default)]
    pub timeline: Option<TimelineConfig>,
    /// Defaults to harmonics at the timeline frequencies.
    #[serde(default)]
    pub design: Option<DesignSource>,
    /// Log-shift and standardize responses before fitting.
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub hyper: Hyperparameters,
    /// Independent chains run concurrently on streams `sampler.chain + c`.
    #[serde(default = "one")]
    pub chains: usize,
}

impl FitConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        if cfg.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        cfg.sampler.validate()?;
        Ok(cfg)
    }
}

/// Everything a chain needs, resolved from the data file and configuration.
#[derive(Debug, Clone)]
pub struct FitInputs {
    pub dataset: Dataset,
    pub schedule: RegimeSchedule,
    pub standardization: Option<StandardizationRecord>,
}

/// Loads the data, design and schedule named by a configuration.
pub fn load_fit_inputs(data_path: &Path, config: &FitConfig, base_dir: &Path) -> Result<FitInputs> {
    let raw = RawSeriesTable::read_csv(data_path, config.grid, None)?;
    let t_len = if config.standardize { raw.padded_times() } else { raw.n_times() };
    let timeline = match &config.timeline {
        Some(t) => t.clone(),
        None => TimelineConfig {
            n_times: t_len,
            n_regimes: 1,
            n_lambda: 0,
            centers: Vec::new(),
            pattern: vec![1],
            frequencies: Vec::new(),
            changepoints: None,
        },
    };
    if timeline.n_times != t_len {
        return Err(Error::Dimension(format!(
            "timeline expects T = {}, data spans T = {}{}",
            timeline.n_times,
            raw.n_times(),
            if t_len != raw.n_times() { format!(" (padded to {t_len})") } else { String::new() }
        )));
    }
    let t_len = timeline.n_times;
    let design = match &config.design {
        Some(DesignSource::Harmonic { frequencies }) => Design::harmonic(&HarmonicDesign::new(t_len, frequencies.clone())?),
        Some(DesignSource::File { path }) => {
            let p = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            read_design_csv(&p)?
        }
        None => match timeline.design()? {
            Some(h) => Design::harmonic(&h),
            None => {
                return Err(Error::Config(
                    "no covariates: set `design` or list `frequencies` in the timeline".into(),
                ))
            }
        },
    };
    if design.n_times() != t_len {
        return Err(Error::Dimension(format!(
            "design covers {} times, timeline expects T = {t_len}",
            design.n_times()
        )));
    }
    let (dataset, standardization) = if config.standardize {
        let (d, r) = standardize(&raw, design)?;
        (d, Some(r))
    } else {
        let topology = GridTopology::from_descriptor(&config.grid)?;
        (Dataset::new(topology, design, raw.values(t_len))?, None)
    };
    Ok(FitInputs {
        dataset,
        schedule: timeline.schedule()?,
        standardization,
    })
}

/// Parses `RxC` (rows by columns).
pub fn parse_grid(text: &str) -> Result<GridDescriptor> {
    let (r, c) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Config(format!("grid must look like ROWSxCOLS, got `{text}`")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("grid must look like ROWSxCOLS, got `{text}`")))
    };
    let g = GridTopology::new(parse(r)?, parse(c)?).map_err(|e| Error::Config(e.to_string()))?;
    Ok(g.descriptor())
}
