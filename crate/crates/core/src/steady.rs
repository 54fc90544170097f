//! Steady response to a weak monochromatic probe.
//!
//! The probe is emitted by a source dipole whose own linewidth has been sent
//! to zero, so its amplitude is frozen and it only drives the atoms. With the
//! ensemble answering at the probe frequency, `b_e = β_e·e^{-iδt}` and
//! `(-iδ·I - M)·β = M_{·,s}`, where `M_{·,s}` is the coupling column of a
//! source with the atomic dipole moment.

use std::f64::consts::PI;

use ndarray::Array1;
use ndarray_linalg::{Factorize, Norm, ReciprocalConditionNum, Solve};
use num_complex::Complex64 as C64;

use crate::ensemble::{linear_fit, run_trials, sample_configuration, LinearFit, SamplingSpec, Statistic};
use crate::error::{Error, Result};
use crate::greens::{apply, build_effective_hamiltonian_with, coupling_tensor, BuildOptions, spherical_unit, sublevel_slot, AtomEnsemble, EffectiveHamiltonian, SUBLEVELS};
use crate::waveguide::{longitudinal_wavenumber, TruncationPolicy, WaveguideGeometry};

/// Axial gap between the cloud edge and the source (or detector).
pub const SOURCE_CLEARANCE: f64 = 500.0;
/// Width of the axial bins of a polarization profile.
pub const PROFILE_BIN: f64 = 25.0;
/// Reciprocal condition number below which a solve is refused.
const RCOND_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    /// `ω_s - ω0` in units of `γ0`.
    pub delta: f64,
    pub source_position: [f64; 3],
    pub source_sublevel: i32,
    /// Smallest accepted axial distance between the source and any atom.
    pub min_clearance: f64,
}

impl Probe {
    pub fn new(delta: f64, source_position: [f64; 3], source_sublevel: i32) -> Self {
        Self { delta, source_position, source_sublevel, min_clearance: 0.0 }
    }

    pub fn with_clearance(mut self, min_clearance: f64) -> Self {
        self.min_clearance = min_clearance;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorReading {
    pub position: [f64; 3],
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub beta: Array1<C64>,
    pub drive: Array1<C64>,
    /// `|A·β - drive| / |drive|`.
    pub residual: f64,
    pub rcond: f64,
}

pub fn steady_amplitudes(h: &EffectiveHamiltonian, probe: &Probe) -> Result<SteadyState> {
    sublevel_slot(probe.source_sublevel)?;
    for (i, r) in h.positions().iter().enumerate() {
        let gap = (r[2] - probe.source_position[2]).abs();
        if gap < probe.min_clearance {
            return Err(Error::InvalidInput(format!(
                "source is {gap:.3} from atom {i} along the axis, below the minimum {}",
                probe.min_clearance
            )));
        }
    }
    let n = h.dim();
    if n == 0 {
        return Ok(SteadyState { beta: Array1::zeros(0), drive: Array1::zeros(0), residual: 0.0, rcond: 1.0 });
    }
    let drive = Array1::from(h.external_coupling(probe.source_position, probe.source_sublevel)?);
    let mut a = h.matrix().mapv(|v| -v);
    for k in 0..n {
        a[[k, k]] -= C64::new(0.0, probe.delta);
    }
    let lu = a.factorize().map_err(|_| Error::NearSingular { rcond: 0.0 })?;
    let rcond = lu.rcond()?;
    if rcond < RCOND_FLOOR {
        return Err(Error::NearSingular { rcond });
    }
    let mut beta = lu.solve(&drive)?;
    let scale = drive.norm_l2().max(f64::MIN_POSITIVE);
    let mut residual = (&drive - &a.dot(&beta)).norm_l2() / scale;
    for _ in 0..3 {
        if residual <= 1e-13 {
            break;
        }
        let correction = lu.solve(&(&drive - &a.dot(&beta)))?;
        let next = &beta + &correction;
        let r = (&drive - &a.dot(&next)).norm_l2() / scale;
        if r >= residual {
            break;
        }
        beta = next;
        residual = r;
    }
    if residual > 1e-10 {
        return Err(Error::LinearAlgebra(format!("steady solve residual {residual:.3e} above 1e-10 (rcond {rcond:.3e})")));
    }
    Ok(SteadyState { beta, drive, residual, rcond })
}

/// Total field at `position`: direct source field plus the field of every
/// induced atomic dipole. Intensity sums all three polarizations.
pub fn detector_field(position: [f64; 3], state: &SteadyState, probe: &Probe, h: &EffectiveHamiltonian) -> Result<[C64; 3]> {
    for (i, r) in h.positions().iter().enumerate() {
        let d = ((r[0] - position[0]).powi(2) + (r[1] - position[1]).powi(2) + (r[2] - position[2]).powi(2)).sqrt();
        if d < 1e-9 {
            return Err(Error::Domain(format!("detector coincides with atom {i}")));
        }
    }
    if state.beta.len() != h.dim() {
        return Err(Error::InvalidInput("steady state does not match the Hamiltonian".into()));
    }
    let mut field = apply(&h.tensor(position, probe.source_position)?, &spherical_unit(probe.source_sublevel));
    for (i, r) in h.positions().iter().enumerate() {
        let mut dipole = [C64::new(0.0, 0.0); 3];
        for (slot, &m) in SUBLEVELS.iter().enumerate() {
            let e = spherical_unit(m);
            for a in 0..3 {
                dipole[a] += e[a] * state.beta[3 * i + slot];
            }
        }
        let f = apply(&h.tensor(position, *r)?, &dipole);
        for a in 0..3 {
            field[a] += f[a];
        }
    }
    Ok(field)
}

pub fn detector_intensity(position: [f64; 3], state: &SteadyState, probe: &Probe, h: &EffectiveHamiltonian) -> Result<DetectorReading> {
    let field = detector_field(position, state, probe, h)?;
    Ok(DetectorReading { position, intensity: field.iter().map(|v| v.norm_sqr()).sum() })
}

/// Guide, mode selection and source/detector placement of a scattering run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringSetup {
    pub geometry: WaveguideGeometry,
    pub truncation: TruncationPolicy,
    pub evanescent: bool,
    pub self_shift: bool,
    pub source_sublevel: i32,
    pub clearance: f64,
}

impl ScatteringSetup {
    pub fn new(geometry: WaveguideGeometry) -> Self {
        Self { geometry, truncation: TruncationPolicy::default(), evanescent: true, self_shift: true, source_sublevel: -1, clearance: SOURCE_CLEARANCE }
    }

    /// On axis, `clearance` before a cloud occupying `|z| < length/2`.
    pub fn source_position(&self, length: f64) -> [f64; 3] {
        let (x, y) = self.geometry.axis();
        [x, y, -(length / 2.0 + self.clearance)]
    }

    pub fn detector_position(&self, length: f64) -> [f64; 3] {
        let (x, y) = self.geometry.axis();
        [x, y, length / 2.0 + self.clearance]
    }

    pub fn probe(&self, delta: f64, length: f64) -> Probe {
        Probe::new(delta, self.source_position(length), self.source_sublevel).with_clearance(self.clearance)
    }

    pub fn hamiltonian(&self, ensemble: &AtomEnsemble) -> Result<EffectiveHamiltonian> {
        build_effective_hamiltonian_with(
            ensemble,
            &self.geometry,
            &self.truncation,
            BuildOptions { evanescent: self.evanescent, self_shift: self.self_shift },
        )
    }

    /// Detector intensity with the same source in an empty guide.
    pub fn reference_intensity(&self, length: f64) -> Result<f64> {
        let g = coupling_tensor(self.detector_position(length), self.source_position(length), &self.geometry, &self.truncation, self.evanescent)?;
        Ok(apply(&g, &spherical_unit(self.source_sublevel)).iter().map(|v| v.norm_sqr()).sum())
    }

    /// `T(δ)` for one configuration.
    pub fn transmission_of(&self, ensemble: &AtomEnsemble, length: f64, deltas: &[f64]) -> Result<Vec<f64>> {
        let h = self.hamiltonian(ensemble)?;
        let reference = self.reference_intensity(length)?;
        if reference <= 0.0 {
            return Err(Error::Domain("no radiating channel links source and detector".into()));
        }
        deltas
            .iter()
            .map(|&d| {
                let probe = self.probe(d, length);
                let s = steady_amplitudes(&h, &probe)?;
                Ok(detector_intensity(self.detector_position(length), &s, &probe, &h)?.intensity / reference)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionRow {
    pub delta: f64,
    pub t: Statistic,
    /// Configuration average of `ln T`.
    pub log_t: Statistic,
}

#[derive(Debug, Clone)]
pub struct TransmissionTable {
    pub rows: Vec<TransmissionRow>,
    pub n_atoms: usize,
    pub length: f64,
    pub warnings: Vec<String>,
}

/// Configuration-averaged transmission on a grid of detunings.
pub fn transmission(setup: &ScatteringSetup, spec: &SamplingSpec, deltas: &[f64], threads: Option<usize>) -> Result<TransmissionTable> {
    let resolved = spec.resolve(&setup.geometry)?;
    let report = run_trials(spec.trials, threads, |t| {
        let ensemble = sample_configuration(spec, &setup.geometry, t as u64)?;
        setup.transmission_of(&ensemble, resolved.length, deltas)
    })?;
    let rows = deltas
        .iter()
        .enumerate()
        .map(|(k, &delta)| {
            let t: Vec<f64> = report.outcomes.iter().map(|(_, v)| v[k]).collect();
            let log: Vec<f64> = t.iter().map(|v| v.ln()).collect();
            TransmissionRow { delta, t: Statistic::from_samples(&t), log_t: Statistic::from_samples(&log) }
        })
        .collect();
    Ok(TransmissionTable { rows, n_atoms: resolved.n_atoms, length: resolved.length, warnings: report.warnings() })
}

/// Configuration-averaged polarization in one axial bin. `None` marks a bin
/// that no atom ever fell into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileBin {
    pub z: f64,
    pub count: usize,
    /// Mean per-atom `|β| = (Σ_m |β_m|²)^{1/2}`.
    pub amplitude: Option<f64>,
    pub amplitude_stderr: Option<f64>,
    /// Unwrapped phase of the coherent x-dipole.
    pub phase: Option<f64>,
    /// Mean `|β_m|²` for `m = -1, 0, +1`.
    pub populations: Option<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct PolarizationProfile {
    pub bins: Vec<ProfileBin>,
    /// Carrier removed before phase averaging, `kz` of TE(0,1).
    pub carrier: f64,
    pub length: f64,
    pub warnings: Vec<String>,
}

// Per-bin sums: count, Σ|β|, Σ|β|², Re/Im Σ P_x e^{-ik z}, Σ|β_m|² (3).
const SLOTS: usize = 8;

fn profile_sums(setup: &ScatteringSetup, ensemble: &AtomEnsemble, length: f64, delta: f64, carrier: f64, nbins: usize) -> Result<Vec<f64>> {
    let h = setup.hamiltonian(ensemble)?;
    let s = steady_amplitudes(&h, &setup.probe(delta, length))?;
    let mut sums = vec![0.0; nbins * SLOTS];
    for (i, r) in h.positions().iter().enumerate() {
        let bin = (((r[2] + length / 2.0) / PROFILE_BIN).floor() as usize).min(nbins - 1);
        let b = &s.beta.as_slice().expect("contiguous")[3 * i..3 * i + 3];
        let pops: Vec<f64> = b.iter().map(|v| v.norm_sqr()).collect();
        let amp = pops.iter().sum::<f64>().sqrt();
        let px: C64 = SUBLEVELS.iter().zip(b).map(|(&m, v)| spherical_unit(m)[0] * v).sum();
        let demod = px * C64::new(0.0, -carrier * r[2]).exp();
        let o = bin * SLOTS;
        sums[o] += 1.0;
        sums[o + 1] += amp;
        sums[o + 2] += amp * amp;
        sums[o + 3] += demod.re;
        sums[o + 4] += demod.im;
        for k in 0..3 {
            sums[o + 5 + k] += pops[k];
        }
    }
    Ok(sums)
}

/// Bins of width [`PROFILE_BIN`] along the cloud, averaged over atoms and
/// trials. The phase is the argument of the coherent sum of `P_x·e^{-i kz z}`
/// per bin, unwrapped along increasing `z`, with `kz·z` added back.
pub fn polarization_profile(setup: &ScatteringSetup, spec: &SamplingSpec, delta: f64, threads: Option<usize>) -> Result<PolarizationProfile> {
    let resolved = spec.resolve(&setup.geometry)?;
    let length = resolved.length;
    let nbins = ((length / PROFILE_BIN).ceil() as usize).max(1);
    let carrier = longitudinal_wavenumber(&setup.geometry, 1.0, 0, 1).re;
    let report = run_trials(spec.trials, threads, |t| {
        let ensemble = sample_configuration(spec, &setup.geometry, t as u64)?;
        profile_sums(setup, &ensemble, length, delta, carrier, nbins)
    })?;
    let mut total = vec![0.0; nbins * SLOTS];
    for (_, sums) in &report.outcomes {
        for (acc, v) in total.iter_mut().zip(sums) {
            *acc += v;
        }
    }
    let mut bins = Vec::with_capacity(nbins);
    let mut previous: Option<f64> = None;
    for k in 0..nbins {
        let o = k * SLOTS;
        let count = total[o] as usize;
        let z = -length / 2.0 + (k as f64 + 0.5) * PROFILE_BIN;
        if count == 0 {
            bins.push(ProfileBin { z, count, amplitude: None, amplitude_stderr: None, phase: None, populations: None });
            continue;
        }
        let n = total[o];
        let mean = total[o + 1] / n;
        let stderr = if count > 1 { ((total[o + 2] / n - mean * mean).max(0.0) * n / (n - 1.0) / n).sqrt() } else { 0.0 };
        let mut phase = total[o + 4].atan2(total[o + 3]);
        if let Some(p) = previous {
            phase += 2.0 * PI * ((p - phase) / (2.0 * PI)).round();
        }
        previous = Some(phase);
        bins.push(ProfileBin {
            z,
            count,
            amplitude: Some(mean),
            amplitude_stderr: Some(stderr),
            phase: Some(phase + carrier * z),
            populations: Some([total[o + 5] / n, total[o + 6] / n, total[o + 7] / n]),
        });
    }
    Ok(PolarizationProfile { bins, carrier, length, warnings: report.warnings() })
}

impl PolarizationProfile {
    /// `(z, mean |β|)` for populated bins.
    pub fn amplitude_points(&self) -> Vec<(f64, f64)> {
        self.bins.iter().filter_map(|b| b.amplitude.map(|a| (b.z, a))).collect()
    }

    /// Slope of the unwrapped phase over the central window of the cloud.
    pub fn phase_slope(&self) -> Result<LinearFit> {
        let margin = self.length * (1.0 - crate::ensemble::EXTINCTION_WINDOW) / 2.0;
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .bins
            .iter()
            .filter(|b| b.z >= -self.length / 2.0 + margin && b.z <= self.length / 2.0 - margin)
            .filter_map(|b| b.phase.map(|p| (b.z, p)))
            .unzip();
        linear_fit(&x, &y)
    }

    /// Mean population of sublevel `m` over the atoms in the first and last
    /// `fraction` of the cloud (front faces the source).
    pub fn edge_populations(&self, m: i32, fraction: f64) -> Result<(f64, f64)> {
        let slot = sublevel_slot(m)?;
        let edge = self.length * fraction;
        let mean = |pred: &dyn Fn(f64) -> bool| {
            let (w, s) = self
                .bins
                .iter()
                .filter(|b| pred(b.z))
                .filter_map(|b| b.populations.map(|p| (b.count as f64, b.count as f64 * p[slot])))
                .fold((0.0, 0.0), |(w, s), (a, b)| (w + a, s + b));
            if w == 0.0 {
                Err(Error::InvalidInput("no atoms in the edge region".into()))
            } else {
                Ok(s / w)
            }
        };
        let lo = -self.length / 2.0;
        let hi = self.length / 2.0;
        Ok((mean(&|z| z < lo + edge)?, mean(&|z| z > hi - edge)?))
    }
}
