//! Mode-sum representation: exact for any axial separation, fast when it is large.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use super::kernel::{accumulate, decay_constant, harmonic_weight, Harmonics, Kernel, PairHarmonics};
use super::{zero_tensor, Tensor3};
use crate::error::{Error, Result};
use crate::waveguide::{TruncationPolicy, WaveguideGeometry};

/// Which modes enter a mode sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSet {
    /// Radiating modes plus evanescent modes down to the truncation cut.
    All,
    /// Radiating modes only (evanescent field artificially removed).
    RadiatingOnly,
}

/// `Φ(z) = (2/γ)·exp(-γ|z|)` with its derivatives; the δ-function in `Φ''` at
/// `z = 0` is dropped (it only acts at coincident points).
fn modal_kernel(gamma: C64, dz: f64) -> Kernel {
    let value = 2.0 / gamma * (-gamma * dz.abs()).exp();
    let sign = if dz > 0.0 {
        1.0
    } else if dz < 0.0 {
        -1.0
    } else {
        0.0
    };
    Kernel { value, d1: -gamma * value * sign, d2: gamma * gamma * value }
}

/// Green tensor `G(r, rp)` as a sum over guided modes.
///
/// With [`ModeSet::All`] evanescent modes are kept while `κ·|Δz|` stays within
/// the truncation budget; if that needs indices beyond `max_index` the sum is
/// refused with a convergence error.
pub fn mode_sum_tensor(
    r: [f64; 3],
    rp: [f64; 3],
    geometry: &WaveguideGeometry,
    k0: f64,
    truncation: &TruncationPolicy,
    modes: ModeSet,
) -> Result<Tensor3> {
    let dz = r[2] - rp[2];
    let k2 = k0 * k0;
    let limit = match modes {
        ModeSet::RadiatingOnly => k2,
        ModeSet::All => {
            if dz.abs() < truncation.min_separation {
                return Err(Error::Convergence(format!(
                    "axial separation {:.3e} below the mode-sum minimum {}",
                    dz.abs(),
                    truncation.min_separation
                )));
            }
            let kappa = truncation.kappa_max_at(dz);
            k2 + kappa * kappa
        }
    };
    let (a, b) = (geometry.a(), geometry.b());
    let m_max = (limit.sqrt() * a / PI).floor() as usize;
    let n_max = (limit.sqrt() * b / PI).floor() as usize;
    if m_max > truncation.max_index as usize || n_max > truncation.max_index as usize {
        return Err(Error::Convergence(format!(
            "separation {:.3e} needs indices up to ({m_max}, {n_max}), above the cap {}",
            dz.abs(),
            truncation.max_index
        )));
    }
    let h = PairHarmonics {
        x: Harmonics::new(PI / a, r[0], m_max + 1),
        xp: Harmonics::new(PI / a, rp[0], m_max + 1),
        y: Harmonics::new(PI / b, r[1], n_max + 1),
        yp: Harmonics::new(PI / b, rp[1], n_max + 1),
    };
    let area = geometry.area();
    let mut g = zero_tensor();
    for m in 0..=m_max {
        let p = PI * m as f64 / a;
        for n in 0..=n_max {
            let q = PI * n as f64 / b;
            let kt2 = p * p + q * q;
            if kt2 > limit {
                break;
            }
            if m == 0 && n == 0 {
                continue;
            }
            let gamma = decay_constant(kt2, k2);
            if gamma.norm() < 1e-12 * k0 {
                return Err(Error::AtCutoff { family: "TE/TM", m: m as u32, n: n as u32 });
            }
            let kernel = modal_kernel(gamma, dz);
            accumulate(&mut g, &h, m, n, p, q, harmonic_weight(m, n, area), k2, kernel);
        }
    }
    Ok(g)
}
