//! Harmonic designs and regime schedules over a discrete time axis.
//!
//! Times, regimes and interval indices are zero-based in the Rust API and
//! one-based in JSON. A change-point value is the last time of its interval:
//! with change-points `c_1 < ... < c_{M-1}`, interval `m` covers
//! `c_m < t <= c_{m+1}` (with `c_0 = -1`, `c_M = T - 1`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seasonal design `x_t = (cos w_1 t, sin w_1 t, cos w_2 t, ...)` with
/// `w_j = 2 pi j / T`, evaluated at one-based time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicDesign {
    n_times: usize,
    frequencies: Vec<usize>,
}

impl HarmonicDesign {
    /// `n_times` must be even and every frequency index in `1..n_times/2`.
    pub fn new(n_times: usize, frequencies: Vec<usize>) -> Result<Self> {
        if n_times == 0 || n_times % 2 != 0 {
            return Err(Error::Parameter(format!(
                "harmonic designs need an even positive length, got {n_times}"
            )));
        }
        if frequencies.is_empty() {
            return Err(Error::Parameter("at least one frequency is required".into()));
        }
        for (k, &j) in frequencies.iter().enumerate() {
            if j == 0 || 2 * j >= n_times {
                return Err(Error::Parameter(format!(
                    "frequency index {j} outside 1..{}",
                    n_times / 2
                )));
            }
            if frequencies[..k].contains(&j) {
                return Err(Error::Parameter(format!("frequency index {j} repeated")));
            }
        }
        Ok(Self { n_times, frequencies })
    }

    /// Frequencies whose period (in time steps) is given, e.g. 96 for a
    /// daily cycle of 15-minute ticks.
    pub fn from_periods(n_times: usize, periods: &[usize]) -> Result<Self> {
        let mut freqs = Vec::with_capacity(periods.len());
        for &p in periods {
            if p == 0 || n_times % p != 0 {
                return Err(Error::Parameter(format!("period {p} does not divide {n_times}")));
            }
            freqs.push(n_times / p);
        }
        Self::new(n_times, freqs)
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn frequencies(&self) -> &[usize] {
        &self.frequencies
    }

    pub fn dim(&self) -> usize {
        2 * self.frequencies.len()
    }

    /// Design row at zero-based time `t`.
    pub fn design_vector(&self, t: usize) -> Result<Vec<f64>> {
        if t >= self.n_times {
            return Err(Error::OutOfRange {
                index: t,
                lo: 0,
                hi: self.n_times - 1,
            });
        }
        let tt = (t + 1) as f64;
        let mut x = Vec::with_capacity(self.dim());
        for &j in &self.frequencies {
            let w = 2.0 * PI * j as f64 / self.n_times as f64;
            x.push((w * tt).cos());
            x.push((w * tt).sin());
        }
        Ok(x)
    }

    /// All rows, `T x K` row-major.
    pub fn matrix(&self) -> Vec<f64> {
        (0..self.n_times)
            .flat_map(|t| self.design_vector(t).expect("t in range"))
            .collect()
    }
}

/// Interval layout, regime labels and the current change-points.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSchedule {
    n_times: usize,
    n_regimes: usize,
    centers: Vec<usize>,
    n_lambda: usize,
    pattern: Vec<usize>,
    changepoints: Vec<usize>,
}

impl RegimeSchedule {
    /// A single regime over all `n_times` points.
    pub fn single(n_times: usize) -> Result<Self> {
        Self::new(n_times, 1, Vec::new(), 0, vec![0])
    }

    /// Validates supports and labels; change-points start at the centers.
    pub fn new(
        n_times: usize,
        n_regimes: usize,
        centers: Vec<usize>,
        n_lambda: usize,
        pattern: Vec<usize>,
    ) -> Result<Self> {
        if n_times == 0 {
            return Err(Error::Parameter("the time axis is empty".into()));
        }
        if n_regimes == 0 {
            return Err(Error::Parameter("at least one regime is required".into()));
        }
        if pattern.len() != centers.len() + 1 {
            return Err(Error::Parameter(format!(
                "{} change-point centers need {} pattern entries, got {}",
                centers.len(),
                centers.len() + 1,
                pattern.len()
            )));
        }
        for r in 0..n_regimes {
            if !pattern.contains(&r) {
                return Err(Error::Parameter(format!(
                    "regime {} never appears in the pattern",
                    r + 1
                )));
            }
        }
        if let Some(&bad) = pattern.iter().find(|&&r| r >= n_regimes) {
            return Err(Error::Parameter(format!(
                "pattern label {} exceeds the regime count {n_regimes}",
                bad + 1
            )));
        }
        let mut prev_hi: Option<usize> = None;
        for &c in &centers {
            if c < n_lambda || c + n_lambda + 1 >= n_times {
                return Err(Error::Parameter(format!(
                    "support of center {} leaves the time axis 1..{}",
                    c + 1,
                    n_times - 1
                )));
            }
            if let Some(hi) = prev_hi {
                if c - n_lambda <= hi {
                    return Err(Error::Parameter(format!(
                        "support of center {} overlaps or precedes the previous one",
                        c + 1
                    )));
                }
            }
            prev_hi = Some(c + n_lambda);
        }
        Ok(Self {
            n_times,
            n_regimes,
            changepoints: centers.clone(),
            centers,
            n_lambda,
            pattern,
        })
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_regimes(&self) -> usize {
        self.n_regimes
    }

    pub fn n_intervals(&self) -> usize {
        self.pattern.len()
    }

    pub fn n_changepoints(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    pub fn n_lambda(&self) -> usize {
        self.n_lambda
    }

    pub fn pattern(&self) -> &[usize] {
        &self.pattern
    }

    pub fn changepoints(&self) -> &[usize] {
        &self.changepoints
    }

    /// Candidate values of change-point `m`.
    pub fn changepoint_support(&self, m: usize) -> Result<std::ops::RangeInclusive<usize>> {
        if m >= self.centers.len() {
            return Err(Error::OutOfRange {
                index: m,
                lo: 0,
                hi: self.centers.len().saturating_sub(1),
            });
        }
        let c = self.centers[m];
        Ok(c - self.n_lambda..=c + self.n_lambda)
    }

    pub fn in_support(&self, m: usize, value: usize) -> bool {
        self.changepoint_support(m).is_ok_and(|s| s.contains(&value))
    }

    /// Sets change-point `m`; values outside its support are rejected.
    pub fn set_changepoint(&mut self, m: usize, value: usize) -> Result<()> {
        let support = self.changepoint_support(m)?;
        if !support.contains(&value) {
            return Err(Error::OutOfRange {
                index: value,
                lo: *support.start(),
                hi: *support.end(),
            });
        }
        self.changepoints[m] = value;
        Ok(())
    }

    pub fn set_changepoints(&mut self, values: &[usize]) -> Result<()> {
        if values.len() != self.centers.len() {
            return Err(Error::Dimension(format!(
                "expected {} change-points, got {}",
                self.centers.len(),
                values.len()
            )));
        }
        for (m, &v) in values.iter().enumerate() {
            self.set_changepoint(m, v)?;
        }
        Ok(())
    }

    /// Overwrites change-points without support checks; for building
    /// deliberately invalid states.
    #[doc(hidden)]
    pub fn force_changepoints(&mut self, values: &[usize]) {
        self.changepoints = values.to_vec();
    }

    /// Interval containing zero-based time `t`.
    pub fn interval_of(&self, t: usize) -> usize {
        self.changepoints.partition_point(|&c| c < t)
    }

    pub fn regime_of(&self, t: usize) -> usize {
        self.pattern[self.interval_of(t)]
    }

    /// Regime label of every time point.
    pub fn regimes(&self) -> Vec<usize> {
        (0..self.n_times).map(|t| self.regime_of(t)).collect()
    }

    /// Number of time points in each regime.
    pub fn regime_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_regimes];
        for t in 0..self.n_times {
            counts[self.regime_of(t)] += 1;
        }
        counts
    }

    /// Interval lengths in order.
    pub fn interval_lengths(&self) -> Vec<usize> {
        let mut bounds = Vec::with_capacity(self.changepoints.len() + 2);
        bounds.push(0);
        bounds.extend(self.changepoints.iter().map(|&c| c + 1));
        bounds.push(self.n_times);
        bounds.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// JSON form `{T, n_R, n_lambda, centers, pattern, frequencies}` with
/// one-based times and regime labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineConfig {
    #[serde(rename = "T")]
    pub n_times: usize,
    #[serde(rename = "n_R", default = "one")]
    pub n_regimes: usize,
    #[serde(default)]
    pub n_lambda: usize,
    #[serde(default)]
    pub centers: Vec<usize>,
    #[serde(default = "single_pattern")]
    pub pattern: Vec<usize>,
    #[serde(default)]
    pub frequencies: Vec<usize>,
    /// Optional starting change-points; defaults to the centers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub changepoints: Option<Vec<usize>>,
}

fn one() -> usize {
    1
}

fn single_pattern() -> Vec<usize> {
    vec![1]
}

fn to_zero_based(values: &[usize], what: &str) -> Result<Vec<usize>> {
    values
        .iter()
        .map(|&v| {
            v.checked_sub(1)
                .ok_or_else(|| Error::Config(format!("{what} values are one-based, got 0")))
        })
        .collect()
}

impl TimelineConfig {
    pub fn schedule(&self) -> Result<RegimeSchedule> {
        let mut s = RegimeSchedule::new(
            self.n_times,
            self.n_regimes,
            to_zero_based(&self.centers, "center")?,
            self.n_lambda,
            to_zero_based(&self.pattern, "pattern")?,
        )?;
        if let Some(cp) = &self.changepoints {
            s.set_changepoints(&to_zero_based(cp, "change-point")?)?;
        }
        Ok(s)
    }

    /// `None` when no frequencies are configured.
    pub fn design(&self) -> Result<Option<HarmonicDesign>> {
        if self.frequencies.is_empty() {
            Ok(None)
        } else {
            HarmonicDesign::new(self.n_times, self.frequencies.clone()).map(Some)
        }
    }

    pub fn from_schedule(s: &RegimeSchedule, frequencies: &[usize]) -> Self {
        Self {
            n_times: s.n_times,
            n_regimes: s.n_regimes,
            n_lambda: s.n_lambda,
            centers: s.centers.iter().map(|c| c + 1).collect(),
            pattern: s.pattern.iter().map(|r| r + 1).collect(),
            frequencies: frequencies.to_vec(),
            changepoints: Some(s.changepoints.iter().map(|c| c + 1).collect()),
        }
    }
}
