//! Per-(m,n) accumulation shared by the mode sum and the Ewald spectral sum.
//!
//! The guide's dyadic Green tensor is `G = (I + ∇∇/k²)·diag(g_x, g_y, g_z)`,
//! where each scalar `g_β` is the Helmholtz Green function with the wall
//! parities of a β-directed dipole: cosine along the axis parallel to the
//! dipole, sine across it (`g_z` is sine-sine). Expanded over transverse
//! harmonics, every scalar shares one longitudinal kernel `Φ(z)` per `(m, n)`.

use num_complex::Complex64 as C64;

use super::Tensor3;

/// Longitudinal kernel and its first two z-derivatives at one separation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel {
    pub value: C64,
    pub d1: C64,
    pub d2: C64,
}

/// sin/cos of `m·θ·coordinate` for `m = 0..count`.
pub(crate) struct Harmonics {
    pub sin: Vec<f64>,
    pub cos: Vec<f64>,
}

impl Harmonics {
    pub fn new(step: f64, coordinate: f64, count: usize) -> Self {
        let (sin, cos) = (0..count).map(|m| (m as f64 * step * coordinate).sin_cos()).unzip();
        Self { sin, cos }
    }
}

/// Observation (`x`, `y`) and source (`xp`, `yp`) harmonics of one pair.
pub(crate) struct PairHarmonics {
    pub x: Harmonics,
    pub xp: Harmonics,
    pub y: Harmonics,
    pub yp: Harmonics,
}

/// Adds the `(m, n)` contribution with kernel `k` to `g`.
///
/// `weight` is the harmonic normalisation `c_m c_n / (16ab)` (`c_0 = 2`,
/// `c_{>0} = 4`), `p, q` the transverse wavenumbers and `k2` the free-space
/// wavenumber squared.
#[inline]
pub(crate) fn accumulate(g: &mut Tensor3, h: &PairHarmonics, m: usize, n: usize, p: f64, q: f64, weight: f64, k2: f64, kernel: Kernel) {
    let (sx, cx) = (h.x.sin[m], h.x.cos[m]);
    let (sxp, cxp) = (h.xp.sin[m], h.xp.cos[m]);
    let (sy, cy) = (h.y.sin[n], h.y.cos[n]);
    let (syp, cyp) = (h.yp.sin[n], h.yp.cos[n]);
    let w = weight / k2;
    let Kernel { value: phi, d1, d2 } = kernel;

    // Column x: g_x ∝ cos(px)cos(px')·sin(qy)sin(qy').
    let gx = weight * cx * cxp * sy * syp;
    g[0][0] += phi * (gx * (1.0 - p * p / k2));
    g[1][0] += phi * (w * (-p * sx * cxp) * (q * cy * syp));
    g[2][0] += d1 * (w * (-p * sx * cxp) * (sy * syp));

    // Column y: g_y ∝ sin(px)sin(px')·cos(qy)cos(qy').
    let gy = weight * sx * sxp * cy * cyp;
    g[0][1] += phi * (w * (p * cx * sxp) * (-q * sy * cyp));
    g[1][1] += phi * (gy * (1.0 - q * q / k2));
    g[2][1] += d1 * (w * (sx * sxp) * (-q * sy * cyp));

    // Column z: g_z ∝ sin(px)sin(px')·sin(qy)sin(qy').
    let gz = weight * sx * sxp * sy * syp;
    g[0][2] += d1 * (w * (p * cx * sxp) * (sy * syp));
    g[1][2] += d1 * (w * (sx * sxp) * (q * cy * syp));
    g[2][2] += phi * gz + d2 * (gz / k2);
}

/// `c_m c_n / (16 ab)`.
#[inline]
pub(crate) fn harmonic_weight(m: usize, n: usize, area: f64) -> f64 {
    let c = |i: usize| if i == 0 { 2.0 } else { 4.0 };
    c(m) * c(n) / (16.0 * area)
}

/// `γ = sqrt(k_t² - k²)`, real for evanescent terms and `-i·kz` for radiating ones.
#[inline]
pub(crate) fn decay_constant(kt2: f64, k2: f64) -> C64 {
    let g2 = kt2 - k2;
    if g2 >= 0.0 {
        C64::new(g2.sqrt(), 0.0)
    } else {
        C64::new(0.0, -(-g2).sqrt())
    }
}
