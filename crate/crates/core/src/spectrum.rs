//! Collective eigenstates of the effective Hamiltonian.
//!
//! An eigenvalue `μ` of `M` (amplitudes evolve as `e^{μt}`) is reported as
//! `Λ = iμ`: `Re Λ` is the collective frequency shift and `Im Λ = -Γ/2` with
//! `Γ` the collective decay rate. The eigenvalue of the re-emission matrix
//! `V` (where `M = -γ0/2 + (iγ0/2)·V`) is `ν = -2Λ - i`.

use ndarray::Array2;
use ndarray_linalg::{Eig, Norm};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::greens::EffectiveHamiltonian;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectiveState {
    pub lambda: C64,
    /// `Σ|v_i|⁴` of the unit-norm right eigenvector.
    pub participation: f64,
}

impl CollectiveState {
    pub fn shift(&self) -> f64 {
        self.lambda.re
    }

    pub fn decay_rate(&self) -> f64 {
        -2.0 * self.lambda.im
    }

    /// Eigenvalue of the re-emission matrix.
    pub fn v_eigenvalue(&self) -> C64 {
        -2.0 * self.lambda - C64::i()
    }
}

pub fn collective_spectrum(h: &EffectiveHamiltonian) -> Result<Vec<CollectiveState>> {
    matrix_spectrum(h.matrix())
}

/// Eigenstates of an arbitrary generator, sorted by `Re Λ`.
pub fn matrix_spectrum(matrix: &Array2<C64>) -> Result<Vec<CollectiveState>> {
    if matrix.is_empty() {
        return Ok(Vec::new());
    }
    let (values, vectors) = matrix.eig().map_err(|e| {
        Error::LinearAlgebra(format!(
            "eigensolver failed on a {}x{} matrix (Frobenius norm {:.3e}, max entry {:.3e}): {e}",
            matrix.nrows(),
            matrix.ncols(),
            matrix.norm_l2(),
            matrix.norm_max()
        ))
    })?;
    let mut states: Vec<CollectiveState> = values
        .iter()
        .zip(vectors.columns())
        .map(|(mu, v)| {
            let norm2: f64 = v.iter().map(|c| c.norm_sqr()).sum();
            let participation = v.iter().map(|c| (c.norm_sqr() / norm2).powi(2)).sum();
            CollectiveState { lambda: C64::i() * mu, participation }
        })
        .collect();
    states.sort_by(|a, b| a.lambda.re.total_cmp(&b.lambda.re));
    Ok(states)
}

/// Sample skewness of the collective shifts.
pub fn shift_skewness(states: &[CollectiveState]) -> f64 {
    let n = states.len() as f64;
    if states.len() < 3 {
        return 0.0;
    }
    let mean = states.iter().map(|s| s.shift()).sum::<f64>() / n;
    let m2 = states.iter().map(|s| (s.shift() - mean).powi(2)).sum::<f64>() / n;
    let m3 = states.iter().map(|s| (s.shift() - mean).powi(3)).sum::<f64>() / n;
    if m2 == 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Binning of `(Re Λ, decay rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSpec {
    pub shift_bins: usize,
    pub decay_bins: usize,
    /// Fixed ranges; derived from the data when `None`.
    pub shift_range: Option<(f64, f64)>,
    pub decay_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2D {
    pub shift_edges: Vec<f64>,
    pub decay_edges: Vec<f64>,
    /// `counts[i][j]` for shift bin `i`, decay bin `j`.
    pub counts: Vec<Vec<u64>>,
    /// States outside fixed ranges.
    pub outside: u64,
}

impl Histogram2D {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn occupied(&self) -> usize {
        self.counts.iter().flatten().filter(|&&c| c > 0).count()
    }

    /// Counts divided by `total · bin area`.
    pub fn density(&self) -> Vec<Vec<f64>> {
        let total = self.total() as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, &c)| {
                        let area = (self.shift_edges[i + 1] - self.shift_edges[i]) * (self.decay_edges[j + 1] - self.decay_edges[j]);
                        if total == 0.0 {
                            0.0
                        } else {
                            c as f64 / (total * area)
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

fn data_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn bin_of(v: f64, (lo, hi): (f64, f64), n: usize) -> Option<usize> {
    if v < lo || v > hi {
        return None;
    }
    Some((((v - lo) / (hi - lo)) * n as f64).floor().min(n as f64 - 1.0) as usize)
}

pub fn spectrum_histogram(states: &[CollectiveState], spec: &HistogramSpec) -> Result<Histogram2D> {
    if spec.shift_bins == 0 || spec.decay_bins == 0 {
        return Err(Error::InvalidInput("histogram needs at least one bin per axis".into()));
    }
    for (lo, hi) in [spec.shift_range, spec.decay_range].into_iter().flatten() {
        if !(hi > lo) {
            return Err(Error::InvalidInput(format!("empty histogram range [{lo}, {hi}]")));
        }
    }
    if states.is_empty() {
        return Ok(Histogram2D { shift_edges: Vec::new(), decay_edges: Vec::new(), counts: Vec::new(), outside: 0 });
    }
    let xr = spec.shift_range.unwrap_or_else(|| data_range(states.iter().map(|s| s.shift())));
    let yr = spec.decay_range.unwrap_or_else(|| data_range(states.iter().map(|s| s.decay_rate())));
    let edges = |(lo, hi): (f64, f64), n: usize| (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect::<Vec<_>>();
    let mut counts = vec![vec![0u64; spec.decay_bins]; spec.shift_bins];
    let mut outside = 0;
    for s in states {
        match (bin_of(s.shift(), xr, spec.shift_bins), bin_of(s.decay_rate(), yr, spec.decay_bins)) {
            (Some(i), Some(j)) => counts[i][j] += 1,
            _ => outside += 1,
        }
    }
    Ok(Histogram2D { shift_edges: edges(xr, spec.shift_bins), decay_edges: edges(yr, spec.decay_bins), counts, outside })
}
