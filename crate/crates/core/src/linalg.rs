//! Banded symmetric positive-definite matrices and their Cholesky factors.
//!
//! Column-major grid orderings give CAR precision matrices a half-bandwidth
//! of `rows + 1`, so a band factorization is an exact sparse Cholesky with
//! no fill outside the band. Storage is row-wise lower band, entry `(i, j)`
//! with `i - bw <= j <= i` at `i * (bw + 1) + (j + bw - i)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.offset(i, j)]
        }
    }

    /// Sets entry `(i, j)` (and its mirror). Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        let o = self.offset(i, j);
        self.data[o] = value;
    }

    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.n {
            let o = self.offset(i, i);
            self.data[o] += value;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[self.offset(i, j)];
                if a == 0.0 {
                    continue;
                }
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// `x' A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n);
        let mut acc = 0.0;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut row = 0.0;
            for j in lo..i {
                row += self.data[self.offset(i, j)] * x[j];
            }
            acc += x[i] * (2.0 * row + self.data[self.offset(i, i)] * x[i]);
        }
        acc
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Lower Cholesky factor `A = L L'`, confined to the same band.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        let mut l = self.data.clone();
        let idx = |i: usize, j: usize| i * (bw + 1) + (j + bw - i);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = l[idx(i, j)];
                for k in klo..j {
                    s -= l[idx(i, k)] * l[idx(j, k)];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Numerical(format!(
                            "matrix not positive definite (pivot {i} = {s:e})"
                        )));
                    }
                    l[idx(i, i)] = s.sqrt();
                } else {
                    l[idx(i, j)] = s / l[idx(j, j)];
                }
            }
        }
        Ok(BandCholesky { n, bw, data: l })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.bw + 1) + (j + self.bw - i)]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.at(i, i).ln()).sum::<f64>()
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = b[i];
            for k in lo..i {
                s -= self.at(i, k) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
    }

    /// Solves `L' x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = b[i];
            for k in i + 1..=hi {
                s -= self.at(k, i) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// Draws from `N(A^{-1} b, A^{-1})` where `A = L L'` is a precision.
    pub fn sample_canonical<R: Rng + ?Sized>(&self, b: &[f64], rng: &mut R) -> Vec<f64> {
        let mut w = b.to_vec();
        self.solve_lower_in_place(&mut w);
        for wi in w.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *wi += z;
        }
        self.solve_upper_in_place(&mut w);
        w
    }
}

/// Numerically stable `log(sum(exp(xs)))`; `-inf` for empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Samples an index from unnormalized log-weights.
pub fn sample_log_weights<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> usize {
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(m.is_finite(), "no finite log-weight to sample from");
    let w: Vec<f64> = log_w.iter().map(|x| (x - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, wk) in w.iter().enumerate() {
        if u < *wk {
            return k;
        }
        u -= wk;
    }
    // rounding residue: last positive weight
    w.iter().rposition(|x| *x > 0.0).unwrap_or(w.len() - 1)
}
