//! Random configurations, Monte Carlo orchestration and derived fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::greens::AtomEnsemble;
use crate::waveguide::WaveguideGeometry;

/// Sampling request. Exactly two of `n_atoms`, `density`, `length` are set;
/// the third follows from `N = n·a·b·L`. Pinned atoms count towards `N` and
/// come first in every configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSpec {
    pub n_atoms: Option<usize>,
    pub density: Option<f64>,
    pub length: Option<f64>,
    pub seed: u64,
    pub trials: usize,
    pub pinned: Vec<[f64; 3]>,
}

/// All three of `N`, `n`, `L` after resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub n_atoms: usize,
    pub density: f64,
    pub length: f64,
}

impl SamplingSpec {
    pub fn resolve(&self, geometry: &WaveguideGeometry) -> Result<Resolved> {
        let area = geometry.area();
        let given = [self.n_atoms.is_some(), self.density.is_some(), self.length.is_some()];
        let count = given.iter().filter(|g| **g).count();
        if count != 2 {
            return Err(Error::InvalidInput(format!(
                "exactly two of N, n, L must be given (N = n·a·b·L); got {count}"
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        if let Some(n) = self.density {
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::InvalidInput(format!("density must be positive, got {n}")));
            }
        }
        if let Some(l) = self.length {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidInput(format!("length must be positive, got {l}")));
            }
        }
        let resolved = match (self.n_atoms, self.density, self.length) {
            (Some(n_atoms), Some(density), None) => Resolved { n_atoms, density, length: n_atoms as f64 / (density * area) },
            (Some(n_atoms), None, Some(length)) => Resolved { n_atoms, density: n_atoms as f64 / (area * length), length },
            (None, Some(density), Some(length)) => {
                Resolved { n_atoms: (density * area * length).round() as usize, density, length }
            }
            _ => unreachable!(),
        };
        if resolved.n_atoms == 0 && self.n_atoms.is_some() && self.length.is_none() {
            return Err(Error::InvalidInput("N = 0 leaves L undetermined".into()));
        }
        if self.pinned.len() > resolved.n_atoms {
            return Err(Error::InvalidInput(format!(
                "{} pinned atoms exceed N = {}",
                self.pinned.len(),
                resolved.n_atoms
            )));
        }
        for p in &self.pinned {
            if !geometry.contains(p[0], p[1]) || p[2].abs() >= resolved.length / 2.0 {
                return Err(Error::InvalidInput(format!("pinned atom {p:?} lies outside the sampling region")));
            }
        }
        Ok(resolved)
    }
}

/// Positions for one trial: the pinned atoms, then i.i.d. uniform draws in
/// `(0,a)×(0,b)×(-L/2, L/2)`. Depends only on `(seed, trial)`.
pub fn sample_configuration(spec: &SamplingSpec, geometry: &WaveguideGeometry, trial: u64) -> Result<AtomEnsemble> {
    let r = spec.resolve(geometry)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(trial);
    let mut open = |hi: f64| loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u * hi;
        }
    };
    let mut positions = spec.pinned.clone();
    while positions.len() < r.n_atoms {
        let x = open(geometry.a());
        let y = open(geometry.b());
        let z = open(r.length) - r.length / 2.0;
        positions.push([x, y, z]);
    }
    AtomEnsemble::new(positions, geometry)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Statistic {
    pub mean: f64,
    pub stderr: f64,
    pub trials_used: usize,
}

impl Statistic {
    /// Mean and standard error, summed in slice order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, trials_used: 0 };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n < 2 {
            0.0
        } else {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Self { mean, stderr, trials_used: n }
    }
}

/// Outcome of a batch of trials, in trial order.
#[derive(Debug)]
pub struct TrialReport<T> {
    pub outcomes: Vec<(usize, T)>,
    pub failures: Vec<(usize, Error)>,
    pub total: usize,
}

impl<T> TrialReport<T> {
    pub fn warnings(&self) -> Vec<String> {
        self.failures.iter().map(|(i, e)| format!("trial {i} skipped: {e}")).collect()
    }
}

/// Runs `trials` independent tasks on a pool of `threads` workers (default:
/// rayon's choice). Fails when more than 1% of trials fail.
pub fn run_trials<T, F>(trials: usize, threads: Option<usize>, task: F) -> Result<TrialReport<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| (0..trials).into_par_iter().map(&task).collect());
    let mut outcomes = Vec::with_capacity(trials);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => outcomes.push((i, v)),
            Err(e) => failures.push((i, e)),
        }
    }
    if failures.len() * 100 > trials {
        let first = failures.first().map(|(i, e)| format!("trial {i}: {e}")).unwrap_or_default();
        return Err(Error::TooManyFailures { failed: failures.len(), total: trials, first });
    }
    Ok(TrialReport { outcomes, failures, total: trials })
}

/// Per-observable statistics of a Monte Carlo run.
#[derive(Debug, Clone)]
pub struct MonteCarlo {
    pub statistics: Vec<Statistic>,
    pub warnings: Vec<String>,
}

/// Samples one configuration per trial and averages the observables returned
/// by `experiment`. Every trial must return the same number of observables.
pub fn run_monte_carlo<F>(spec: &SamplingSpec, geometry: &WaveguideGeometry, threads: Option<usize>, experiment: F) -> Result<MonteCarlo>
where
    F: Fn(&AtomEnsemble, usize) -> Result<Vec<f64>> + Sync + Send,
{
    spec.resolve(geometry)?;
    let report = run_trials(spec.trials, threads, |t| {
        let ensemble = sample_configuration(spec, geometry, t as u64)?;
        experiment(&ensemble, t)
    })?;
    let width = report.outcomes.first().map(|(_, v)| v.len()).unwrap_or(0);
    if report.outcomes.iter().any(|(_, v)| v.len() != width) {
        return Err(Error::InvalidInput("trials returned different numbers of observables".into()));
    }
    let statistics = (0..width)
        .map(|k| Statistic::from_samples(&report.outcomes.iter().map(|(_, v)| v[k]).collect::<Vec<_>>()))
        .collect();
    Ok(MonteCarlo { statistics, warnings: report.warnings() })
}

/// Ordinary least squares `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::Fit(format!("need at least two paired points, got {} and {}", x.len(), y.len())));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_stderr = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LinearFit { slope, intercept, slope_stderr, r_squared })
}

/// Extinction coefficient from an amplitude profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtinctionFit {
    /// Amplitude convention: `|β| ∝ e^{-alpha·z}`.
    pub alpha: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub bins_used: usize,
    pub warning: Option<String>,
}

/// Fraction of the cloud kept by [`fit_extinction`], centred.
pub const EXTINCTION_WINDOW: f64 = 0.6;

/// Fits `ln|β|` against `z` over the central 60% of the cloud `[z_lo, z_hi]`.
/// Points with non-finite or non-positive amplitude are gaps and skipped.
pub fn fit_extinction(profile: &[(f64, f64)], cloud: (f64, f64)) -> Result<ExtinctionFit> {
    let (lo, hi) = cloud;
    let margin = (hi - lo) * (1.0 - EXTINCTION_WINDOW) / 2.0;
    let (wlo, whi) = (lo + margin, hi - margin);
    let (x, y): (Vec<f64>, Vec<f64>) = profile
        .iter()
        .filter(|(z, amp)| *z >= wlo && *z <= whi && amp.is_finite() && *amp > 0.0)
        .map(|(z, amp)| (*z, amp.ln()))
        .unzip();
    if x.len() < 10 {
        return Err(Error::Fit(format!("{} populated bins in the fit window, need at least 10", x.len())));
    }
    let fit = linear_fit(&x, &y)?;
    let warning = (fit.r_squared < 0.8).then(|| format!("poor fit quality: R² = {:.3}", fit.r_squared));
    Ok(ExtinctionFit { alpha: -fit.slope, stderr: fit.slope_stderr, r_squared: fit.r_squared, bins_used: x.len(), warning })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationFit {
    pub xi: f64,
    pub stderr: f64,
    pub slope: f64,
}

/// `ξ = -1/slope` of mean `ln T` against `L`.
pub fn fit_localization_length(points: &[(f64, f64)]) -> Result<LocalizationFit> {
    if points.len() < 4 {
        return Err(Error::Fit(format!("{} lengths given, need at least 4", points.len())));
    }
    let lmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let lmax = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if !(lmin > 0.0) || lmax < 3.0 * lmin {
        return Err(Error::Fit(format!("lengths span [{lmin}, {lmax}], need a factor of at least 3")));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let fit = linear_fit(&x, &y)?;
    if fit.slope >= 0.0 {
        return Err(Error::Fit(format!("no localization detected (slope {:.3e} ≥ 0)", fit.slope)));
    }
    let xi = -1.0 / fit.slope;
    Ok(LocalizationFit { xi, stderr: fit.slope_stderr * xi * xi, slope: fit.slope })
}
