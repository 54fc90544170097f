//! Image-lattice representation of the guide Green tensor, summed with Ewald's
//! splitting.
//!
//! Mirror images of a dipole in the four walls form four rectangular lattices
//! of period `(2a, 2b)`. Each lattice sum of `exp(ikR)/4πR` is split at the
//! Ewald parameter `E` into a Gaussian-damped image sum and a Gaussian-damped
//! harmonic sum, both converging like `exp(-(·)²)`. The split is exact, so the
//! result equals the mode sum at every separation, including `Δz → 0` where
//! the mode sum stalls.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use super::kernel::{accumulate, decay_constant, harmonic_weight, Harmonics, Kernel, PairHarmonics};
use super::{zero_tensor, Tensor3};
use crate::error::{Error, Result};
use crate::special::faddeeva;
use crate::waveguide::WaveguideGeometry;

/// Terms are dropped once their Gaussian factor falls below `exp(-TAIL)`.
const TAIL: f64 = 40.0;

/// Largest `k/(2E)` allowed; bounds the `exp((k/2E)²)` cancellation in the split.
const MAX_SPLIT_RATIO: f64 = 2.5;

struct Split {
    e: f64,
    k: f64,
    /// `k / 2E`
    ratio: f64,
}

impl Split {
    fn new(geometry: &WaveguideGeometry, k: f64) -> Self {
        let cell = 4.0 * geometry.area();
        let e = (PI / cell).sqrt().max(k / (2.0 * MAX_SPLIT_RATIO));
        Self { e, k, ratio: k / (2.0 * e) }
    }

    fn reach(&self) -> f64 {
        (TAIL + self.ratio * self.ratio).sqrt()
    }
}

/// Harmonic-sum kernel `Φ(z) = (1/γ)[e^{γ|z|}erfc(γ/2E + |z|E) + e^{-γ|z|}erfc(γ/2E - |z|E)]`.
fn spectral_kernel(gamma: C64, dz: f64, e: f64) -> Kernel {
    let z = dz.abs();
    // γ² is real, so the common Gaussian factor is real.
    let gaussian = (-(gamma * gamma).re / (4.0 * e * e) - z * z * e * e).exp();
    let shift = gamma / (2.0 * e);
    let up = shift + z * e;
    let down = shift - z * e;
    let plus = gaussian * faddeeva(C64::i() * up);
    let minus = if down.re >= 0.0 {
        gaussian * faddeeva(C64::i() * down)
    } else {
        2.0 * (-gamma * z).exp() - gaussian * faddeeva(-C64::i() * down)
    };
    let value = (plus + minus) / gamma;
    let sign = if dz > 0.0 {
        1.0
    } else if dz < 0.0 {
        -1.0
    } else {
        0.0
    };
    Kernel {
        value,
        d1: (plus - minus) * sign,
        d2: gamma * gamma * value - 4.0 * e / PI.sqrt() * gaussian,
    }
}

fn spectral_sum(g: &mut Tensor3, r: [f64; 3], rp: [f64; 3], geometry: &WaveguideGeometry, split: &Split) -> Result<()> {
    let (a, b) = (geometry.a(), geometry.b());
    let dz = r[2] - rp[2];
    let kt_max = 2.0 * split.e * split.reach() + 2.0 * dz.abs() * split.e * split.e + split.k;
    let m_max = (kt_max * a / PI).ceil() as usize;
    let n_max = (kt_max * b / PI).ceil() as usize;
    let h = PairHarmonics {
        x: Harmonics::new(PI / a, r[0], m_max + 1),
        xp: Harmonics::new(PI / a, rp[0], m_max + 1),
        y: Harmonics::new(PI / b, r[1], n_max + 1),
        yp: Harmonics::new(PI / b, rp[1], n_max + 1),
    };
    let k2 = split.k * split.k;
    let area = geometry.area();
    for m in 0..=m_max {
        let p = PI * m as f64 / a;
        for n in 0..=n_max {
            let q = PI * n as f64 / b;
            let kt2 = p * p + q * q;
            if kt2 > kt_max * kt_max {
                break;
            }
            if m == 0 && n == 0 {
                // The uniform harmonic cancels between image lattices.
                continue;
            }
            let gamma = decay_constant(kt2, k2);
            if gamma.norm() < 1e-12 * split.k {
                return Err(Error::AtCutoff { family: "TE/TM", m: m as u32, n: n as u32 });
            }
            let kernel = spectral_kernel(gamma, dz, split.e);
            accumulate(g, &h, m, n, p, q, harmonic_weight(m, n, area), k2, kernel);
        }
    }
    Ok(())
}

/// Radial image term `f(R) = S(R)/8πR` with
/// `S = e^{ikR}erfc(RE + ik/2E) + e^{-ikR}erfc(RE - ik/2E)`, and `f'`, `f''`.
fn image_radial(radius: f64, split: &Split) -> (f64, f64, f64) {
    let Split { e, k, ratio } = *split;
    let envelope = (ratio * ratio - radius * radius * e * e).exp();
    let h = envelope * faddeeva(C64::new(-ratio, radius * e));
    let q = 2.0 * e / PI.sqrt() * envelope;
    let s = 2.0 * h.re;
    let s1 = -2.0 * k * h.im - 2.0 * q;
    let s2 = -k * k * s + 4.0 * radius * e * e * q;
    let c = 1.0 / (8.0 * PI);
    let r = radius;
    let f = c * s / r;
    let f1 = c * (s1 / r - s / (r * r));
    let f2 = c * (s2 / r - 2.0 * s1 / (r * r) + 2.0 * s / (r * r * r));
    (f, f1, f2)
}

/// Adds `sign·(δ_αβ f + ∂_α∂_β f / k²)` for one image to column `beta`.
fn add_image(g: &mut Tensor3, d: [f64; 3], signs: [f64; 3], split: &Split) {
    let radius = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let (f, f1, f2) = image_radial(radius, split);
    let u = [d[0] / radius, d[1] / radius, d[2] / radius];
    let k2 = split.k * split.k;
    for beta in 0..3 {
        if signs[beta] == 0.0 {
            continue;
        }
        for alpha in 0..3 {
            let delta = if alpha == beta { 1.0 } else { 0.0 };
            let hessian = f2 * u[alpha] * u[beta] + f1 / radius * (delta - u[alpha] * u[beta]);
            g[alpha][beta] += C64::new(signs[beta] * (delta * f + hessian / k2), 0.0);
        }
    }
}

fn image_sum(g: &mut Tensor3, r: [f64; 3], rp: [f64; 3], geometry: &WaveguideGeometry, split: &Split, skip_direct: bool) {
    let (a, b) = (geometry.a(), geometry.b());
    let reach = split.reach() / split.e;
    let dz = r[2] - rp[2];
    if dz.abs() > reach {
        return;
    }
    let transverse = (reach * reach - dz * dz).sqrt();
    for sx in [1.0, -1.0] {
        let ix = sx * rp[0];
        let p_lo = ((r[0] - ix - transverse) / (2.0 * a)).floor() as i64;
        let p_hi = ((r[0] - ix + transverse) / (2.0 * a)).ceil() as i64;
        for sy in [1.0, -1.0] {
            let iy = sy * rp[1];
            let q_lo = ((r[1] - iy - transverse) / (2.0 * b)).floor() as i64;
            let q_hi = ((r[1] - iy + transverse) / (2.0 * b)).ceil() as i64;
            // Reflection in an x-wall flips y- and z-dipoles; a y-wall flips x and z.
            let signs = [sy, sx, sx * sy];
            for p in p_lo..=p_hi {
                let dx = r[0] - (ix + 2.0 * a * p as f64);
                for q in q_lo..=q_hi {
                    if skip_direct && sx > 0.0 && sy > 0.0 && p == 0 && q == 0 {
                        continue;
                    }
                    let dy = r[1] - (iy + 2.0 * b * q as f64);
                    if dx * dx + dy * dy + dz * dz > reach * reach {
                        continue;
                    }
                    add_image(g, [dx, dy, dz], signs, split);
                }
            }
        }
    }
}

/// Full guide Green tensor `G(r, rp)` for `r != rp`.
pub fn image_sum_tensor(r: [f64; 3], rp: [f64; 3], geometry: &WaveguideGeometry, k0: f64) -> Result<Tensor3> {
    let split = Split::new(geometry, k0);
    let mut g = zero_tensor();
    spectral_sum(&mut g, r, rp, geometry, &split)?;
    image_sum(&mut g, r, rp, geometry, &split, false);
    Ok(g)
}

/// `lim_{r'→r} [G_guide(r, r') - G_free(r, r')]`.
///
/// The direct image is replaced by the regular remainder of its Ewald term
/// after the free-space pole is removed, `d0 + d1·R² + O(R⁴)`.
pub fn regular_part_at(r: [f64; 3], geometry: &WaveguideGeometry, k0: f64) -> Result<Tensor3> {
    let split = Split::new(geometry, k0);
    let mut g = zero_tensor();
    spectral_sum(&mut g, r, r, geometry, &split)?;
    image_sum(&mut g, r, r, geometry, &split, true);

    let Split { e, k, ratio } = split;
    let envelope = (ratio * ratio).exp();
    let h0 = envelope * faddeeva(C64::new(-ratio, 0.0));
    let q0 = 2.0 * e / PI.sqrt() * envelope;
    let s1 = -2.0 * k * h0.im - 2.0 * q0;
    let f1 = C64::new(s1, -2.0 * k);
    let f3 = C64::new(-k * k * s1 + 4.0 * e * e * q0, 2.0 * k * k * k);
    let d0 = f1 / (8.0 * PI);
    let d1 = f3 / (48.0 * PI);
    let diagonal = d0 + 2.0 * d1 / (k * k);
    for (alpha, row) in g.iter_mut().enumerate() {
        row[alpha] += diagonal;
    }
    Ok(g)
}
