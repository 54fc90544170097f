//! Rectangular perfectly conducting waveguide: mode census and mode profiles.
//!
//! The guide occupies `0 < x < a`, `0 < y < b` and is infinite along `z`.
//! All lengths are in units of `1/k0`.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Cross-section of a rectangular guide with perfectly conducting walls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveguideGeometry {
    a: f64,
    b: f64,
}

impl WaveguideGeometry {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return Err(Error::Geometry(format!("sides must be positive and finite, got a={a}, b={b}")));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn area(&self) -> f64 {
        self.a * self.b
    }

    /// Centre of the cross-section.
    pub fn axis(&self) -> (f64, f64) {
        (0.5 * self.a, 0.5 * self.b)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x > 0.0 && x < self.a && y > 0.0 && y < self.b
    }

    /// Transverse wavenumbers `(πm/a, πn/b)`.
    pub fn transverse_wavenumbers(&self, m: u32, n: u32) -> (f64, f64) {
        (PI * m as f64 / self.a, PI * n as f64 / self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModeFamily {
    Te,
    Tm,
}

impl ModeFamily {
    pub fn label(self) -> &'static str {
        match self {
            ModeFamily::Te => "TE",
            ModeFamily::Tm => "TM",
        }
    }
}

/// One guided mode at a fixed frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub family: ModeFamily,
    pub m: u32,
    pub n: u32,
    /// Longitudinal wavenumber: real and non-negative above cutoff,
    /// `+iκ` with `κ > 0` below it.
    pub kz: C64,
}

impl Mode {
    /// Builds the mode, validating the index rules of its family.
    pub fn new(family: ModeFamily, m: u32, n: u32, geometry: &WaveguideGeometry, k0: f64) -> Result<Self> {
        match family {
            ModeFamily::Tm if m == 0 || n == 0 => {
                return Err(Error::InvalidInput(format!("TM({m},{n}) requires m >= 1 and n >= 1")))
            }
            ModeFamily::Te if m == 0 && n == 0 => {
                return Err(Error::InvalidInput("TE(0,0) does not exist".into()))
            }
            _ => {}
        }
        Ok(Self { family, m, n, kz: longitudinal_wavenumber(geometry, k0, m, n) })
    }

    pub fn is_radiating(&self) -> bool {
        self.kz.im == 0.0
    }

    /// Attenuation constant `Im kz` (zero for radiating modes).
    pub fn attenuation(&self) -> f64 {
        self.kz.im
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.family.label(), self.m, self.n)
    }
}

/// `kz = sqrt(k0² - (πm/a)² - (πn/b)²)` on the branch that decays along `|z|`.
pub fn longitudinal_wavenumber(geometry: &WaveguideGeometry, k0: f64, m: u32, n: u32) -> C64 {
    let (p, q) = geometry.transverse_wavenumbers(m, n);
    let kz2 = k0 * k0 - p * p - q * q;
    if kz2 >= 0.0 {
        C64::new(kz2.sqrt(), 0.0)
    } else {
        C64::new(0.0, (-kz2).sqrt())
    }
}

/// How many evanescent modes the mode sums keep.
///
/// A mode with attenuation `κ` contributes `~exp(-κ|Δz|)`; terms are kept while
/// `κ·|Δz| <= attenuation_budget`. Separations below `min_separation` are never
/// handed to the mode sum (the image representation takes over there).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    pub attenuation_budget: f64,
    pub min_separation: f64,
    pub max_index: u32,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { attenuation_budget: 40.0, min_separation: 0.5, max_index: 2000 }
    }
}

impl TruncationPolicy {
    /// Largest attenuation constant retained over all requested separations.
    pub fn kappa_max(&self) -> f64 {
        self.attenuation_budget / self.min_separation
    }

    /// Attenuation cut used for one axial separation.
    pub fn kappa_max_at(&self, separation: f64) -> f64 {
        self.attenuation_budget / separation.abs().max(self.min_separation)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.attenuation_budget > 0.0 && self.min_separation > 0.0 && self.max_index > 0) {
            return Err(Error::InvalidInput(format!("invalid truncation policy {self:?}")));
        }
        Ok(())
    }
}

/// All TE and TM modes with `Im kz <= κ_max`, ordered by attenuation, then
/// family, then indices.
pub fn classify_modes(geometry: &WaveguideGeometry, k0: f64, truncation: &TruncationPolicy) -> Vec<Mode> {
    modes_below(geometry, k0, truncation.kappa_max(), truncation.max_index)
}

pub(crate) fn modes_below(geometry: &WaveguideGeometry, k0: f64, kappa_max: f64, max_index: u32) -> Vec<Mode> {
    let limit = k0 * k0 + kappa_max * kappa_max;
    let mut modes = Vec::new();
    for m in 0..=max_index {
        let (p, _) = geometry.transverse_wavenumbers(m, 0);
        if p * p > limit {
            break;
        }
        for n in 0..=max_index {
            let (_, q) = geometry.transverse_wavenumbers(m, n);
            if p * p + q * q > limit {
                break;
            }
            if m == 0 && n == 0 {
                continue;
            }
            let kz = longitudinal_wavenumber(geometry, k0, m, n);
            modes.push(Mode { family: ModeFamily::Te, m, n, kz });
            if m >= 1 && n >= 1 {
                modes.push(Mode { family: ModeFamily::Tm, m, n, kz });
            }
        }
    }
    modes.sort_by(|x, y| {
        x.kz.im
            .partial_cmp(&y.kz.im)
            .unwrap_or(Ordering::Equal)
            .then(x.family.cmp(&y.family))
            .then((x.m, x.n).cmp(&(y.m, y.n)))
    });
    modes
}

/// Modes propagating without attenuation at wavenumber `k0`.
pub fn radiating_modes(geometry: &WaveguideGeometry, k0: f64) -> Vec<Mode> {
    modes_below(geometry, k0, 0.0, u32::MAX)
}

/// Electric-field profile of a mode travelling towards `+z`, evaluated at `(x, y)`.
///
/// TE profiles have unit transverse norm over the cross-section. TM profiles are
/// `(kz/k0)·ê_t - i(k_c/k0)·ψ ẑ` with unit-norm `ê_t ∝ ∇ψ` and `ψ`. With these
/// conventions a mode contributes `(i/2kz)·E⁺(r)⊗E⁻(r')·exp(ikz|z-z'|)` to the
/// dyadic Green tensor, `E⁻` being the same profile with the longitudinal sign
/// flipped; summed over all modes this reproduces the free-space tensor as the
/// cross-section grows.
pub fn mode_function(mode: &Mode, geometry: &WaveguideGeometry, k0: f64, x: f64, y: f64) -> Result<[C64; 3]> {
    let (a, b) = (geometry.a(), geometry.b());
    if !(0.0..=a).contains(&x) || !(0.0..=b).contains(&y) {
        return Err(Error::Domain(format!("point ({x}, {y}) outside the {a} x {b} cross-section")));
    }
    let (p, q) = geometry.transverse_wavenumbers(mode.m, mode.n);
    let kc = (p * p + q * q).sqrt();
    let (sx, cx) = (p * x).sin_cos();
    let (sy, cy) = (q * y).sin_cos();
    let weight = |i: u32| if i == 0 { 1.0 } else { 2.0 };
    match mode.family {
        ModeFamily::Te => {
            let norm = (weight(mode.m) * weight(mode.n) / geometry.area()).sqrt() / kc;
            Ok([
                C64::new(norm * q * cx * sy, 0.0),
                C64::new(-norm * p * sx * cy, 0.0),
                C64::new(0.0, 0.0),
            ])
        }
        ModeFamily::Tm => {
            let psi_norm = (4.0 / geometry.area()).sqrt();
            let t = mode.kz / k0 * (psi_norm / kc);
            Ok([t * (p * cx * sy), t * (q * sx * cy), C64::new(0.0, -kc / k0 * psi_norm * sx * sy)])
        }
    }
}
