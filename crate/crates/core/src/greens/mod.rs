//! Dyadic Green tensor of the guide and the effective Hamiltonian of the
//! single-excitation sector.
//!
//! Units: `k0 = 1`, `γ0 = 1`. An atom pair couples through
//! `M_ee' = i(3πγ0/k0)·e_e*·G(r_e, r_e')·e_e'`, which for free space is the
//! familiar coupled-dipole kernel; same-atom blocks are `-γ0/2` plus the same
//! expression with the regularised tensor `G_guide - G_free` at coincidence.

mod ewald;
mod kernel;
mod modal;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::waveguide::{TruncationPolicy, WaveguideGeometry};

pub use ewald::{image_sum_tensor, regular_part_at};
pub use modal::{mode_sum_tensor, ModeSet};

/// Complex 3×3 tensor, indexed `[row][column]` over `x, y, z`.
pub type Tensor3 = [[C64; 3]; 3];

/// `3π γ0 / k0` in internal units.
pub const COUPLING: f64 = 3.0 * PI;

/// Zeeman sublevels of the `J = 1` excited state in slot order.
pub const SUBLEVELS: [i32; 3] = [-1, 0, 1];

/// Closest approach to a wall accepted for a self term.
const WALL_CLEARANCE: f64 = 1e-6;

pub(crate) fn zero_tensor() -> Tensor3 {
    [[C64::new(0.0, 0.0); 3]; 3]
}

pub fn transpose(t: &Tensor3) -> Tensor3 {
    let mut out = zero_tensor();
    for (i, row) in t.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[j][i] = *v;
        }
    }
    out
}

/// Largest entry modulus.
pub fn max_abs(t: &Tensor3) -> f64 {
    t.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Spherical unit vector `e_m` (`e_{±1} = ∓(x̂ ± iŷ)/√2`, `e_0 = ẑ`).
pub fn spherical_unit(m: i32) -> [C64; 3] {
    let s = FRAC_1_SQRT_2;
    match m {
        -1 => [C64::new(s, 0.0), C64::new(0.0, -s), C64::new(0.0, 0.0)],
        0 => [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        1 => [C64::new(-s, 0.0), C64::new(0.0, -s), C64::new(0.0, 0.0)],
        _ => panic!("sublevel {m} outside -1..=1"),
    }
}

/// Slot of sublevel `m` within an atom's block.
pub fn sublevel_slot(m: i32) -> Result<usize> {
    match m {
        -1 => Ok(0),
        0 => Ok(1),
        1 => Ok(2),
        _ => Err(Error::InvalidInput(format!("sublevel m_J = {m} not in {{-1, 0, +1}}"))),
    }
}

/// `e_m*·T·e_m'` for all sublevel pairs.
pub fn to_spherical(t: &Tensor3) -> Tensor3 {
    let mut out = zero_tensor();
    for (i, &m) in SUBLEVELS.iter().enumerate() {
        let em = spherical_unit(m);
        for (j, &mp) in SUBLEVELS.iter().enumerate() {
            let ep = spherical_unit(mp);
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..3 {
                for b in 0..3 {
                    acc += em[a].conj() * t[a][b] * ep[b];
                }
            }
            out[i][j] = acc;
        }
    }
    out
}

/// Inverse of [`to_spherical`].
pub fn to_cartesian(t: &Tensor3) -> Tensor3 {
    let mut out = zero_tensor();
    for a in 0..3 {
        for b in 0..3 {
            let mut acc = C64::new(0.0, 0.0);
            for (i, &m) in SUBLEVELS.iter().enumerate() {
                for (j, &mp) in SUBLEVELS.iter().enumerate() {
                    acc += spherical_unit(m)[a] * t[i][j] * spherical_unit(mp)[b].conj();
                }
            }
            out[a][b] = acc;
        }
    }
    out
}

/// Free-space dyadic Green tensor `(I + ∇∇/k²) e^{ikR}/4πR`.
pub fn free_space_tensor(r: [f64; 3], rp: [f64; 3], k0: f64) -> Tensor3 {
    let d = [r[0] - rp[0], r[1] - rp[1], r[2] - rp[2]];
    let radius = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let kr = k0 * radius;
    let phase = C64::new(0.0, kr).exp() / (4.0 * PI * radius);
    let i = C64::i();
    let transverse = 1.0 + i / kr - 1.0 / (kr * kr);
    let longitudinal = -1.0 - 3.0 * i / kr + 3.0 / (kr * kr);
    let mut g = zero_tensor();
    for a in 0..3 {
        for b in 0..3 {
            let delta = if a == b { 1.0 } else { 0.0 };
            g[a][b] = phase * (transverse * delta + longitudinal * d[a] * d[b] / (radius * radius));
        }
    }
    g
}

fn check_inside(r: [f64; 3], geometry: &WaveguideGeometry) -> Result<()> {
    if !geometry.contains(r[0], r[1]) || !r[2].is_finite() {
        return Err(Error::Domain(format!(
            "point ({}, {}, {}) is not inside the {} x {} cross-section",
            r[0],
            r[1],
            r[2],
            geometry.a(),
            geometry.b()
        )));
    }
    Ok(())
}

fn distance(r: [f64; 3], rp: [f64; 3]) -> f64 {
    ((r[0] - rp[0]).powi(2) + (r[1] - rp[1]).powi(2) + (r[2] - rp[2]).powi(2)).sqrt()
}

/// Guide Green tensor between two distinct interior points.
///
/// The mode sum is used when `|Δz| >= truncation.min_separation`; closer pairs,
/// and pairs whose mode sum would need more than `max_index` harmonics, go
/// through the Ewald-summed image lattice. The two agree to ~1e-9 wherever
/// both apply.
pub fn green_tensor(r: [f64; 3], rp: [f64; 3], geometry: &WaveguideGeometry, k0: f64, truncation: &TruncationPolicy) -> Result<Tensor3> {
    check_inside(r, geometry)?;
    check_inside(rp, geometry)?;
    if distance(r, rp) < 1e-12 {
        return Err(Error::Domain("coincident points; use self_term".into()));
    }
    if (r[2] - rp[2]).abs() >= truncation.min_separation {
        match mode_sum_tensor(r, rp, geometry, k0, truncation, ModeSet::All) {
            Err(Error::Convergence(_)) => {}
            other => return other,
        }
    }
    image_sum_tensor(r, rp, geometry, k0)
}

/// Tensor used for a pair coupling under the given mode selection.
pub fn coupling_tensor(
    r: [f64; 3],
    rp: [f64; 3],
    geometry: &WaveguideGeometry,
    truncation: &TruncationPolicy,
    evanescent: bool,
) -> Result<Tensor3> {
    if evanescent {
        green_tensor(r, rp, geometry, 1.0, truncation)
    } else {
        check_inside(r, geometry)?;
        check_inside(rp, geometry)?;
        mode_sum_tensor(r, rp, geometry, 1.0, truncation, ModeSet::RadiatingOnly)
    }
}

fn check_clearance(r: [f64; 3], geometry: &WaveguideGeometry) -> Result<()> {
    check_inside(r, geometry)?;
    let wall = r[0].min(geometry.a() - r[0]).min(r[1]).min(geometry.b() - r[1]);
    if wall < WALL_CLEARANCE {
        return Err(Error::Domain(format!("point within {wall:.2e} of a wall; image sum does not converge")));
    }
    Ok(())
}

/// Waveguide correction at coincident points, `G_guide(r, r) - G_free(r, r)`.
///
/// Its imaginary part times `2·COUPLING` is the change of the decay rate, its
/// real part gives the position-dependent level shift.
pub fn self_term(r: [f64; 3], geometry: &WaveguideGeometry, k0: f64) -> Result<Tensor3> {
    check_clearance(r, geometry)?;
    regular_part_at(r, geometry, k0)
}

/// Self term when only radiating modes are kept: the radiating-mode tensor at
/// coincidence minus the free-space radiative part `i k0/6π`.
pub fn self_term_radiating(r: [f64; 3], geometry: &WaveguideGeometry, k0: f64) -> Result<Tensor3> {
    check_clearance(r, geometry)?;
    let mut g = mode_sum_tensor(r, r, geometry, k0, &TruncationPolicy::default(), ModeSet::RadiatingOnly)?;
    for (a, row) in g.iter_mut().enumerate() {
        row[a] -= C64::new(0.0, k0 / (6.0 * PI));
    }
    Ok(g)
}

/// Motionless two-level atoms inside the guide.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomEnsemble {
    positions: Vec<[f64; 3]>,
}

impl AtomEnsemble {
    pub fn new(positions: Vec<[f64; 3]>, geometry: &WaveguideGeometry) -> Result<Self> {
        for (i, r) in positions.iter().enumerate() {
            check_inside(*r, geometry).map_err(|e| Error::InvalidInput(format!("atom {i}: {e}")))?;
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if positions[i] == positions[j] {
                    return Err(Error::InvalidInput(format!("atoms {i} and {j} coincide")));
                }
            }
        }
        Ok(Self { positions })
    }

    pub fn empty() -> Self {
        Self { positions: Vec::new() }
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Generator of the single-excitation amplitudes in the frame rotating at ω0:
/// `db/dt = M·b`, with `b` indexed by `3·atom + slot(m_J)`.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    matrix: Array2<C64>,
    positions: Vec<[f64; 3]>,
    geometry: WaveguideGeometry,
    truncation: TruncationPolicy,
    options: BuildOptions,
}

impl EffectiveHamiltonian {
    /// Zeeman-basis matrix.
    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn geometry(&self) -> &WaveguideGeometry {
        &self.geometry
    }

    pub fn truncation(&self) -> &TruncationPolicy {
        &self.truncation
    }

    pub fn evanescent(&self) -> bool {
        self.options.evanescent
    }

    pub fn options(&self) -> BuildOptions {
        self.options
    }

    /// Same operator in the Cartesian dipole basis (complex symmetric).
    pub fn cartesian(&self) -> Array2<C64> {
        map_blocks(&self.matrix, to_cartesian)
    }

    /// Converts a Cartesian-basis matrix back to the Zeeman basis.
    pub fn spherical_from_cartesian(matrix: &Array2<C64>) -> Array2<C64> {
        map_blocks(matrix, to_spherical)
    }

    /// Guide tensor from `rp` to `r` under this build's mode selection.
    pub fn tensor(&self, r: [f64; 3], rp: [f64; 3]) -> Result<Tensor3> {
        coupling_tensor(r, rp, &self.geometry, &self.truncation, self.options.evanescent)
    }

    /// Coupling `M_{e,s}` from an external dipole in sublevel `m` at `position`
    /// to every atomic sublevel.
    pub fn external_coupling(&self, position: [f64; 3], m: i32) -> Result<Vec<C64>> {
        sublevel_slot(m)?;
        let source = spherical_unit(m);
        let mut column = Vec::with_capacity(self.dim());
        for (i, r) in self.positions.iter().enumerate() {
            let g = self.tensor(*r, position).map_err(|e| Error::pair(i, usize::MAX, e))?;
            let field = apply(&g, &source);
            for &mj in SUBLEVELS.iter() {
                let e = spherical_unit(mj);
                let proj: C64 = (0..3).map(|a| e[a].conj() * field[a]).sum();
                column.push(C64::i() * COUPLING * proj);
            }
        }
        Ok(column)
    }
}

/// `T·v`.
pub fn apply(t: &Tensor3, v: &[C64; 3]) -> [C64; 3] {
    let mut out = [C64::new(0.0, 0.0); 3];
    for (a, row) in t.iter().enumerate() {
        out[a] = row.iter().zip(v).map(|(x, y)| x * y).sum();
    }
    out
}

fn map_blocks(matrix: &Array2<C64>, f: impl Fn(&Tensor3) -> Tensor3) -> Array2<C64> {
    let n = matrix.nrows() / 3;
    let mut out = Array2::zeros(matrix.raw_dim());
    for i in 0..n {
        for j in 0..n {
            let mut block = zero_tensor();
            for a in 0..3 {
                for b in 0..3 {
                    block[a][b] = matrix[[3 * i + a, 3 * j + b]];
                }
            }
            let mapped = f(&block);
            for a in 0..3 {
                for b in 0..3 {
                    out[[3 * i + a, 3 * j + b]] = mapped[a][b];
                }
            }
        }
    }
    out
}

/// Assembles `M` for an ensemble. With `evanescent = false` only radiating
/// modes enter both the pair couplings and the self terms.
pub fn build_effective_hamiltonian(
    ensemble: &AtomEnsemble,
    geometry: &WaveguideGeometry,
    truncation: &TruncationPolicy,
    evanescent: bool,
) -> Result<EffectiveHamiltonian> {
    build_effective_hamiltonian_with(ensemble, geometry, truncation, BuildOptions { evanescent, self_shift: true })
}

/// Which parts of the guide response enter `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// Keep evanescent modes in pair couplings and self terms.
    pub evanescent: bool,
    /// Keep the real (level-shift) part of the same-atom correction. When
    /// false only its decay part remains, so single atoms keep the
    /// guide-modified linewidths but no guide-induced Lamb shift.
    pub self_shift: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { evanescent: true, self_shift: true }
    }
}

pub fn build_effective_hamiltonian_with(
    ensemble: &AtomEnsemble,
    geometry: &WaveguideGeometry,
    truncation: &TruncationPolicy,
    options: BuildOptions,
) -> Result<EffectiveHamiltonian> {
    let evanescent = options.evanescent;
    truncation.validate()?;
    let positions = ensemble.positions().to_vec();
    let n = positions.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let blocks: Vec<Result<Tensor3>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let block = if i == j {
                let correction = if evanescent {
                    self_term(positions[i], geometry, 1.0)
                } else {
                    self_term_radiating(positions[i], geometry, 1.0)
                };
                correction.map(|mut t| {
                    if !options.self_shift {
                        for v in t.iter_mut().flatten() {
                            v.re = 0.0;
                        }
                    }
                    for row in t.iter_mut() {
                        for v in row.iter_mut() {
                            *v *= C64::i() * COUPLING;
                        }
                    }
                    for (a, row) in t.iter_mut().enumerate() {
                        row[a] -= 0.5;
                    }
                    t
                })
            } else {
                coupling_tensor(positions[i], positions[j], geometry, truncation, evanescent).map(|mut t| {
                    for row in t.iter_mut() {
                        for v in row.iter_mut() {
                            *v *= C64::i() * COUPLING;
                        }
                    }
                    t
                })
            };
            block.map_err(|e| Error::pair(i, j, e))
        })
        .collect();

    let mut cartesian = Array2::<C64>::zeros((3 * n, 3 * n));
    for (&(i, j), block) in pairs.iter().zip(blocks) {
        let block = block?;
        for a in 0..3 {
            for b in 0..3 {
                cartesian[[3 * i + a, 3 * j + b]] = block[a][b];
                // Reciprocity: G(r', r) = G(r, r')ᵀ.
                cartesian[[3 * j + b, 3 * i + a]] = block[a][b];
            }
        }
    }
    Ok(EffectiveHamiltonian {
        matrix: map_blocks(&cartesian, to_spherical),
        positions,
        geometry: *geometry,
        truncation: *truncation,
        options,
    })
}
