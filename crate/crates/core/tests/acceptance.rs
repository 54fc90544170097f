//! Acceptance suite: one PASS/FAIL line per criterion, then a summary.
//!
//! Runs the default model (full waveguide self term). Lines starting with
//! `note:` are diagnostics and are not judged.

use std::time::Instant;

use ndarray::{Array1, Array2};
use ndarray_linalg::Eig;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wgqed_core::ensemble::*;
use wgqed_core::evolve::*;
use wgqed_core::greens::*;
use wgqed_core::spectrum::*;
use wgqed_core::steady::*;
use wgqed_core::waveguide::*;
use wgqed_core::Result;

const A: f64 = 3.0;
const DENSITY: f64 = 0.002;

fn guide(b: f64) -> WaveguideGeometry {
    WaveguideGeometry::new(A, b).expect("valid guide")
}

fn kz01(b: f64) -> f64 {
    longitudinal_wavenumber(&guide(b), 1.0, 0, 1).re
}

struct Suite {
    outcomes: Vec<(usize, bool)>,
}

impl Suite {
    fn record(&mut self, id: usize, title: &str, pass: bool, detail: &str, started: Instant) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id:>2} {title}: {detail} ({:.1} s)", started.elapsed().as_secs_f64());
        self.outcomes.push((id, pass));
    }

    fn error(&mut self, id: usize, title: &str, e: wgqed_core::Error, started: Instant) {
        self.record(id, title, false, &format!("error: {e}"), started);
    }
}

fn note(text: &str) {
    println!("       note: {text}");
}

fn sub(name: &str, pass: bool, detail: &str) -> bool {
    println!("       {} {name}: {detail}", if pass { "ok  " } else { "FAIL" });
    pass
}

fn combined(a: &Statistic, b: &Statistic) -> f64 {
    (a.stderr * a.stderr + b.stderr * b.stderr).sqrt()
}

// 1 ---------------------------------------------------------------------------

fn census(suite: &mut Suite) {
    let t = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (b, expected) in [(3.13, 0), (6.0, 1), (6.25, 1), (6.28, 1), (6.283, 1), (6.30, 2)] {
        let modes = radiating_modes(&guide(b), 1.0);
        let labels: Vec<String> = modes.iter().map(|m| format!("{}{}{}", m.family.label(), m.m, m.n)).collect();
        let ok = modes.len() == expected
            && (expected != 1 || (modes[0].family == ModeFamily::Te && modes[0].m == 0 && modes[0].n == 1));
        pass &= ok;
        parts.push(format!("b={b}: {}", if labels.is_empty() { "none".to_string() } else { labels.join("+") }));
    }
    suite.record(1, "mode census at k0a=3", pass, &parts.join(", "), t);
}

// 2, 3 ------------------------------------------------------------------------

fn two_atom_trace(b: f64, first: [f64; 3], second: [f64; 3]) -> Result<Vec<f64>> {
    let g = guide(b);
    let ens = AtomEnsemble::new(vec![first, second], &g)?;
    let h = build_effective_hamiltonian(&ens, &g, &TruncationPolicy::default(), true)?;
    let s0 = initial_state(&h, 0, -1)?;
    let tr = propagate(&h, &s0, &uniform_grid(10.0, 401))?;
    Ok(population_trace(&tr.states)?.atom(1))
}

fn zero_mode_transfer(suite: &mut Suite) {
    let t = Instant::now();
    let title = "two-atom zero-mode transfer";
    let peaks: Result<Vec<f64>> = [3.13, 3.135, 3.137, 3.14]
        .iter()
        .map(|&b| {
            let trace = two_atom_trace(b, [1.5, b / 2.0, 0.0], [1.5, b / 2.0, 100.0])?;
            Ok(trace.into_iter().fold(0.0, f64::max))
        })
        .collect();
    match peaks {
        Ok(p) => {
            let monotone = p.windows(2).all(|w| w[1] > w[0]);
            let pass = p[0] <= 1e-3 && p[3] >= 0.05 && monotone;
            let detail = format!(
                "peak P2 = {:.3e}, {:.3e}, {:.3e}, {:.3e} at b = 3.13, 3.135, 3.137, 3.14 (need <= 1e-3 first, >= 0.05 last, increasing)",
                p[0], p[1], p[2], p[3]
            );
            suite.record(2, title, pass, &detail, t);
        }
        Err(e) => suite.error(2, title, e, t),
    }
}

fn local_extrema(trace: &[f64]) -> usize {
    trace.windows(3).filter(|w| (w[1] - w[0]) * (w[2] - w[1]) < 0.0).count()
}

fn single_mode_oscillations(suite: &mut Suite) {
    let t = Instant::now();
    let title = "single-mode two-atom oscillations";
    let count = |b: f64| -> Result<usize> {
        let trace = two_atom_trace(b, [1.0, b / 2.0 - 1.0, 0.0], [2.0, b / 2.0 + 1.0, 10.0])?;
        Ok(local_extrema(&trace))
    };
    match (count(6.0), count(6.28)) {
        (Ok(far), Ok(near)) => {
            let detail = format!("local extrema of P2 on [0,10]: {far} at b=6, {near} at b=6.28 (need >= 2 more)");
            suite.record(3, title, near >= far + 2, &detail, t);
        }
        (Err(e), _) | (_, Err(e)) => suite.error(3, title, e, t),
    }
}

// 4 ---------------------------------------------------------------------------

fn ensemble_plateau(suite: &mut Suite) {
    let t = Instant::now();
    let title = "ensemble decay plateau";
    let grid = uniform_grid(25.0, 401);
    let mut stats = Vec::new();
    for b in [6.0, 6.25, 6.283] {
        let g = guide(b);
        let spec = SamplingSpec { n_atoms: Some(40), density: Some(DENSITY), length: None, seed: 4, trials: 200, pinned: vec![[0.8, 1.8, 0.0]] };
        let run = run_monte_carlo(&spec, &g, None, |e, _| {
            let h = build_effective_hamiltonian(e, &g, &TruncationPolicy::default(), true)?;
            let tr = propagate(&h, &initial_state(&h, 0, -1)?, &grid)?;
            Ok(vec![tr.states[160].total_population(), tr.states[400].total_population()])
        });
        match run {
            Ok(mc) => stats.push((b, mc.statistics[0], mc.statistics[1])),
            Err(e) => return suite.error(4, title, e, t),
        }
    }
    let plateau = stats.iter().all(|(_, _, p25)| p25.mean > 0.1);
    let (p6, p6283) = (&stats[0].1, &stats[2].1);
    let separation = (p6283.mean - p6.mean).abs() / combined(p6, p6283);
    let parts: Vec<String> =
        stats.iter().map(|(b, p10, p25)| format!("b={b}: P(10)={:.4}±{:.4} P(25)={:.4}±{:.4}", p10.mean, p10.stderr, p25.mean, p25.stderr)).collect();
    let detail = format!("{}; |ΔP(10)| = {separation:.1} stderr (need P(25) > 0.1, > 3 stderr)", parts.join("; "));
    suite.record(4, title, plateau && separation > 3.0, &detail, t);
}

// 5, 8 ------------------------------------------------------------------------

fn profile(b: f64, delta: f64, trials: usize, self_shift: bool, seed: u64) -> Result<PolarizationProfile> {
    let mut setup = ScatteringSetup::new(guide(b));
    setup.self_shift = self_shift;
    let spec = SamplingSpec { n_atoms: None, density: Some(DENSITY), length: Some(1000.0), seed, trials, pinned: Vec::new() };
    polarization_profile(&setup, &spec, delta, None)
}

fn extinction_and_phase(suite: &mut Suite) {
    let t = Instant::now();
    let targets = [(6.28, 0.0032), (6.283, 0.0011)];
    let mut alpha_pass = true;
    let mut phase_pass = true;
    let mut alpha_parts = Vec::new();
    let mut phase_parts = Vec::new();
    for (b, target) in targets {
        let p = match profile(b, 1.0, 1000, true, 5) {
            Ok(p) => p,
            Err(e) => {
                suite.error(5, "extinction coefficients", e, t);
                suite.error(8, "phase-velocity insensitivity", wgqed_core::Error::Fit("no profile".into()), t);
                return;
            }
        };
        match fit_extinction(&p.amplitude_points(), (-500.0, 500.0)) {
            Ok(fit) => {
                alpha_pass &= (fit.alpha / target - 1.0).abs() <= 0.4;
                alpha_parts.push(format!("b={b}: alpha={:.5}±{:.5} (target {target}, R²={:.2})", fit.alpha, fit.stderr, fit.r_squared));
            }
            Err(e) => {
                alpha_pass = false;
                alpha_parts.push(format!("b={b}: {e}"));
            }
        }
        match p.phase_slope() {
            Ok(fit) => {
                let k = kz01(b);
                phase_pass &= (fit.slope / k - 1.0).abs() <= 0.01;
                phase_parts.push(format!("b={b}: slope={:.5} vs kz={k:.5} ({:+.2}%)", fit.slope, 100.0 * (fit.slope / k - 1.0)));
            }
            Err(e) => {
                phase_pass = false;
                phase_parts.push(format!("b={b}: {e}"));
            }
        }
    }
    suite.record(5, "extinction coefficients", alpha_pass, &format!("{} (±40%)", alpha_parts.join("; ")), t);
    suite.record(8, "phase-velocity insensitivity", phase_pass, &format!("{} (±1%)", phase_parts.join("; ")), t);
    for (b, target) in targets {
        match profile(b, 1.0, 300, false, 5).and_then(|p| fit_extinction(&p.amplitude_points(), (-500.0, 500.0))) {
            Ok(fit) => note(&format!("decay-only self term, 300 trials, b={b}: alpha={:.5}±{:.5} (target {target})", fit.alpha, fit.stderr)),
            Err(e) => note(&format!("decay-only self term, b={b}: {e}")),
        }
    }
}

// 6 ---------------------------------------------------------------------------

const LENGTHS: [f64; 6] = [250.0, 500.0, 750.0, 1000.0, 1250.0, 1500.0];

fn localization_length(b: f64, trials: usize, self_shift: bool) -> Result<(LocalizationFit, Vec<Statistic>)> {
    let mut setup = ScatteringSetup::new(guide(b));
    setup.self_shift = self_shift;
    let mut points = Vec::new();
    let mut stats = Vec::new();
    for (k, &length) in LENGTHS.iter().enumerate() {
        let spec = SamplingSpec { n_atoms: None, density: Some(DENSITY), length: Some(length), seed: 600 + k as u64, trials, pinned: Vec::new() };
        let table = transmission(&setup, &spec, &[5.0], None)?;
        points.push((length, table.rows[0].log_t.mean));
        stats.push(table.rows[0].log_t);
    }
    Ok((fit_localization_length(&points)?, stats))
}

fn localization(suite: &mut Suite) {
    let t = Instant::now();
    let title = "localization lengths";
    let targets = [(6.25, 4000.0), (6.28, 750.0), (6.283, 1750.0)];
    let mut xis = Vec::new();
    let mut parts = Vec::new();
    let mut pass = true;
    for (b, target) in targets {
        match localization_length(b, 1000, true) {
            Ok((fit, stats)) => {
                let ratio = fit.xi / target;
                pass &= (1.0 / 1.5..=1.5).contains(&ratio);
                xis.push(fit.xi);
                let logs: Vec<String> = stats.iter().map(|s| format!("{:.3}", s.mean)).collect();
                parts.push(format!("b={b}: xi={:.0}±{:.0} (target {target}; <lnT> = {})", fit.xi, fit.stderr, logs.join(" ")));
            }
            Err(e) => {
                pass = false;
                xis.push(f64::NAN);
                parts.push(format!("b={b}: {e}"));
            }
        }
    }
    let ordered = xis[1] < xis[2] && xis[2] < xis[0];
    let detail = format!("{}; ordering xi(6.28) < xi(6.283) < xi(6.25): {ordered} (factor 1.5)", parts.join("; "));
    suite.record(6, title, pass && ordered, &detail, t);
    for (b, target) in targets {
        match localization_length(b, 300, false) {
            Ok((fit, _)) => note(&format!("decay-only self term, 300 trials, b={b}: xi={:.0}±{:.0} (target {target})", fit.xi, fit.stderr)),
            Err(e) => note(&format!("decay-only self term, b={b}: {e}")),
        }
    }
}

// 7 ---------------------------------------------------------------------------

fn resonant_transmission(suite: &mut Suite) {
    let t = Instant::now();
    let title = "resonant transmission monotonicity";
    let mut stats = Vec::new();
    for b in [6.0, 6.25, 6.28, 6.283] {
        let setup = ScatteringSetup::new(guide(b));
        let spec = SamplingSpec { n_atoms: None, density: Some(DENSITY), length: Some(1000.0), seed: 7, trials: 1000, pinned: Vec::new() };
        match transmission(&setup, &spec, &[0.0], None) {
            Ok(table) => stats.push((b, table.rows[0].t)),
            Err(e) => return suite.error(7, title, e, t),
        }
    }
    let seps: Vec<f64> = stats.windows(2).map(|w| (w[1].1.mean - w[0].1.mean) / combined(&w[0].1, &w[1].1)).collect();
    let pass = seps.iter().all(|&s| s >= 3.0);
    let parts: Vec<String> = stats.iter().map(|(b, s)| format!("b={b}: T={:.4}±{:.4}", s.mean, s.stderr)).collect();
    let gaps: Vec<String> = seps.iter().map(|s| format!("{s:.1}")).collect();
    let detail = format!("{}; steps in stderr: {} (need each >= 3)", parts.join(", "), gaps.join(", "));
    suite.record(7, title, pass, &detail, t);
}

// 9 ---------------------------------------------------------------------------

fn m0_contrast(suite: &mut Suite) {
    let t = Instant::now();
    let title = "m=0 localization contrast";
    let mut ratios = Vec::new();
    for b in [6.0, 6.283] {
        match profile(b, 0.0, 10_000, true, 9).and_then(|p| p.edge_populations(0, 0.1)) {
            Ok((front, back)) => ratios.push((b, front, back)),
            Err(e) => return suite.error(9, title, e, t),
        }
    }
    let r6 = ratios[0].1 / ratios[0].2;
    let r6283 = ratios[1].1 / ratios[1].2;
    let parts: Vec<String> = ratios.iter().map(|(b, f, k)| format!("b={b}: front {f:.3e} back {k:.3e} ratio {:.2}", f / k)).collect();
    let detail = format!("{} (need > 5 at b=6, < 2 at b=6.283)", parts.join("; "));
    suite.record(9, title, r6 > 5.0 && r6283 < 2.0, &detail, t);
}

// 10 --------------------------------------------------------------------------

fn spectra(b: f64, configs: u64, evanescent: bool, self_shift: bool) -> Result<Vec<Vec<CollectiveState>>> {
    let g = guide(b);
    let spec = SamplingSpec { n_atoms: None, density: Some(DENSITY), length: Some(1000.0), seed: 10, trials: configs as usize, pinned: Vec::new() };
    (0..configs)
        .map(|trial| {
            let e = sample_configuration(&spec, &g, trial)?;
            let h = build_effective_hamiltonian_with(&e, &g, &TruncationPolicy::default(), BuildOptions { evanescent, self_shift })?;
            collective_spectrum(&h)
        })
        .collect()
}

fn mean_max_shift(sets: &[Vec<CollectiveState>]) -> f64 {
    sets.iter().map(|s| s.iter().map(|c| c.shift().abs()).fold(0.0, f64::max)).sum::<f64>() / sets.len() as f64
}

fn sorted_eigenvalues(m: &Array2<C64>) -> Result<Vec<C64>> {
    let (v, _) = m.eig()?;
    let mut v = v.to_vec();
    v.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
    Ok(v)
}

/// Largest eigenvalue mismatch between the evanescent-free spectra at two
/// widths, after mapping y by b2/b1 and z by kz1/kz2 and rescaling by ab·kz.
fn radiating_only_mismatch(configs: u64) -> Result<f64> {
    let (b1, b2) = (6.0, 6.283);
    let (g1, g2) = (guide(b1), guide(b2));
    let (k1, k2) = (kz01(b1), kz01(b2));
    let spec = SamplingSpec { n_atoms: None, density: Some(DENSITY), length: Some(1000.0), seed: 11, trials: 1, pinned: Vec::new() };
    let mut worst: f64 = 0.0;
    for trial in 0..configs {
        let p1 = sample_configuration(&spec, &g1, trial)?;
        let p2: Vec<[f64; 3]> = p1.positions().iter().map(|p| [p[0], p[1] * b2 / b1, p[2] * k1 / k2]).collect();
        let h1 = build_effective_hamiltonian(&p1, &g1, &TruncationPolicy::default(), false)?;
        let h2 = build_effective_hamiltonian(&AtomEnsemble::new(p2, &g2)?, &g2, &TruncationPolicy::default(), false)?;
        let scale = (b2 * k2) / (b1 * k1);
        let e1 = sorted_eigenvalues(h1.matrix())?;
        let e2 = sorted_eigenvalues(h2.matrix())?;
        for (x, y) in e1.iter().zip(&e2) {
            worst = worst.max((x - y * scale).norm() / (1.0 + x.norm()));
        }
    }
    Ok(worst)
}

fn spectrum_broadening(suite: &mut Suite) {
    let t = Instant::now();
    let title = "spectrum broadening";
    let configs = 20;
    let (s6, s6283) = match (spectra(6.0, configs, true, true), spectra(6.283, configs, true, true)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return suite.error(10, title, e, t),
    };
    let (w6, w6283) = (mean_max_shift(&s6), mean_max_shift(&s6283));
    let mismatch = match radiating_only_mismatch(5) {
        Ok(m) => m,
        Err(e) => return suite.error(10, title, e, t),
    };
    let skew = |sets: &[Vec<CollectiveState>]| sets.iter().map(|s| shift_skewness(s).abs()).sum::<f64>() / sets.len() as f64;
    let detail = format!(
        "mean max|ReΛ| over {configs} configurations: {w6:.3e} at b=6, {w6283:.3e} at b=6.283 (ratio {:.2}, need >= 2); \
         evanescent-free mismatch {mismatch:.1e} (need <= 1e-6)",
        w6283 / w6
    );
    suite.record(10, title, w6283 >= 2.0 * w6 && mismatch <= 1e-6, &detail, t);
    note(&format!("mean |skewness| of ReΛ: {:.2} at b=6, {:.2} at b=6.283", skew(&s6), skew(&s6283)));
    match (spectra(6.0, configs, true, false), spectra(6.283, configs, true, false)) {
        (Ok(a), Ok(b)) => note(&format!(
            "decay-only self term: mean max|ReΛ| {:.3e} at b=6, {:.3e} at b=6.283 (ratio {:.2})",
            mean_max_shift(&a),
            mean_max_shift(&b),
            mean_max_shift(&b) / mean_max_shift(&a)
        )),
        (Err(e), _) | (_, Err(e)) => note(&format!("decay-only spectra: {e}")),
    }
}

// 11 --------------------------------------------------------------------------

fn tensor_diff(x: &Tensor3, y: &Tensor3) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            d = d.max((x[i][j] - y[i][j]).norm());
        }
    }
    d
}

fn random_point(rng: &mut ChaCha8Rng, g: &WaveguideGeometry, half: f64) -> [f64; 3] {
    [rng.random_range(0.02..0.98) * g.a(), rng.random_range(0.02..0.98) * g.b(), rng.random_range(-half..half)]
}

fn check_reciprocity(rng: &mut ChaCha8Rng) -> Result<bool> {
    let tp = TruncationPolicy::default();
    let mut worst: f64 = 0.0;
    for b in [3.13, 6.0, 6.283] {
        let g = guide(b);
        for _ in 0..60 {
            let (r, rp) = (random_point(rng, &g, 15.0), random_point(rng, &g, 15.0));
            let x = green_tensor(r, rp, &g, 1.0, &tp)?;
            let y = transpose(&green_tensor(rp, r, &g, 1.0, &tp)?);
            worst = worst.max(tensor_diff(&x, &y) / max_abs(&x).max(1e-300));
        }
    }
    Ok(sub("reciprocity G(r,r') = G(r',r)^T", worst <= 1e-10, &format!("max relative {worst:.1e} (<= 1e-10)")))
}

fn check_dispersion() -> bool {
    let mut worst: f64 = 0.0;
    for b in [3.13, 6.0, 6.25, 6.283, 6.3, 9.7] {
        let g = guide(b);
        for mode in classify_modes(&g, 1.0, &TruncationPolicy::default()) {
            let (p, q) = g.transverse_wavenumbers(mode.m, mode.n);
            worst = worst.max((mode.kz * mode.kz + p * p + q * q - 1.0).norm() / (1.0 + p * p + q * q));
        }
    }
    sub("dispersion kz² + kt² = k0²", worst <= 1e-12, &format!("max relative residual {worst:.1e} (<= 1e-12)"))
}

fn check_boundaries(rng: &mut ChaCha8Rng) -> Result<bool> {
    let g = guide(6.25);
    let tp = TruncationPolicy { attenuation_budget: 8.0, ..TruncationPolicy::default() };
    let mut worst: f64 = 0.0;
    for mode in classify_modes(&g, 1.0, &tp) {
        // Cell centres on a 61 x 61 grid: no mode index in range has nodes on all of them.
        let peak = (0..61)
            .flat_map(|i| (0..61).map(move |j| (i, j)))
            .map(|(i, j)| mode_function(&mode, &g, 1.0, A * ((i as f64 + 0.5) / 61.0), 6.25 * ((j as f64 + 0.5) / 61.0)))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .flat_map(|e| e.iter().map(|v| v.norm()))
            .fold(0.0, f64::max);
        for k in 0..100 {
            let s: f64 = rng.random();
            let (x, y, tangential) = match k % 4 {
                0 => (0.0, s * 6.25, [1, 2]),
                1 => (A, s * 6.25, [1, 2]),
                2 => (s * A, 0.0, [0, 2]),
                _ => (s * A, 6.25, [0, 2]),
            };
            let e = mode_function(&mode, &g, 1.0, x, y)?;
            for c in tangential {
                worst = worst.max(e[c].norm() / peak);
            }
        }
    }
    Ok(sub("tangential E on PEC walls", worst <= 1e-12, &format!("max relative {worst:.1e} at 100 wall points per mode (<= 1e-12)")))
}

fn check_representations() -> Result<bool> {
    let tp = TruncationPolicy::default();
    let mut worst: f64 = 0.0;
    for b in [3.13, 6.0, 6.283] {
        let g = guide(b);
        for dz in [0.5, 0.8, 1.3, 2.0] {
            let r = [0.21 * A, 0.67 * b, -0.3];
            let rp = [0.58 * A, 0.33 * b, -0.3 + dz];
            let modes = mode_sum_tensor(r, rp, &g, 1.0, &tp, ModeSet::All)?;
            let images = image_sum_tensor(r, rp, &g, 1.0)?;
            worst = worst.max(tensor_diff(&modes, &images) / max_abs(&images));
        }
    }
    Ok(sub("mode sum vs image lattice, |Δz| in [0.5, 2]", worst <= 1e-6, &format!("max relative {worst:.1e} (<= 1e-6)")))
}

fn check_free_space() -> Result<bool> {
    let g = WaveguideGeometry::new(200.0, 200.0)?;
    let tp = TruncationPolicy::default();
    let (r, rp) = ([100.0, 100.0, 0.0], [100.0, 100.0, 5.0]);
    let guided = green_tensor(r, rp, &g, 1.0, &tp)?;
    let free = free_space_tensor(r, rp, 1.0);
    let pair = tensor_diff(&guided, &free) / max_abs(&free);
    let e = AtomEnsemble::new(vec![r], &g)?;
    let h = build_effective_hamiltonian(&e, &g, &tp, true)?;
    let mut diag: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { C64::new(-0.5, 0.0) } else { C64::new(0.0, 0.0) };
            diag = diag.max((h.matrix()[[i, j]] - target).norm() / 0.5);
        }
    }
    let pass = pair <= 0.02 && diag <= 0.02;
    let detail = format!("200x200 guide: pair tensor at Δz=5 off by {:.1}%, single-atom block off by {:.1}% of γ0/2 (<= 2%)", 100.0 * pair, 100.0 * diag);
    Ok(sub("free-space limit", pass, &detail))
}

fn check_zero_mode(rng: &mut ChaCha8Rng) -> Result<bool> {
    let g = guide(3.13);
    let positions: Vec<[f64; 3]> = (0..15).map(|_| random_point(rng, &g, 50.0)).collect();
    let h = build_effective_hamiltonian(&AtomEnsemble::new(positions, &g)?, &g, &TruncationPolicy::default(), true)?;
    let worst = collective_spectrum(&h)?.iter().map(|s| s.decay_rate().abs()).fold(0.0, f64::max);
    Ok(sub("zero-mode eigenvalues real", worst <= 1e-3, &format!("max |decay| {worst:.1e} (<= 1e-3)")))
}

fn random_hamiltonian(rng: &mut ChaCha8Rng, b: f64, n: usize) -> Result<EffectiveHamiltonian> {
    let g = guide(b);
    let positions: Vec<[f64; 3]> = (0..n).map(|_| random_point(rng, &g, 20.0)).collect();
    build_effective_hamiltonian(&AtomEnsemble::new(positions, &g)?, &g, &TruncationPolicy::default(), true)
}

fn check_trace(rng: &mut ChaCha8Rng) -> Result<bool> {
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let h = random_hamiltonian(rng, [3.13, 6.0, 6.283][k % 3], 5 + 2 * k)?;
        let sum: C64 = collective_spectrum(&h)?.iter().map(|s| s.lambda).sum();
        let trace: C64 = (0..h.dim()).map(|i| C64::i() * h.matrix()[[i, i]]).sum();
        let scale: f64 = (0..h.dim()).map(|i| h.matrix()[[i, i]].norm()).sum();
        worst = worst.max((sum - trace).norm() / scale);
    }
    Ok(sub("trace identity ΣΛ = i·tr M", worst <= 1e-9, &format!("max relative {worst:.1e} (<= 1e-9)")))
}

fn check_solvers(rng: &mut ChaCha8Rng) -> Result<bool> {
    let mut worst: f64 = 0.0;
    let grid = uniform_grid(10.0, 100);
    for k in 0..10 {
        let h = random_hamiltonian(rng, [6.0, 6.25][k % 2], 1 + k)?;
        let mut b = Array1::from_iter((0..h.dim()).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))));
        let norm = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        b.mapv_inplace(|v| v / norm);
        let s0 = AmplitudeState { t: 0.0, b };
        let e = Propagator::eigen(h.matrix())?.run(&s0, &grid)?;
        let i = Propagator::integrator(h.matrix())?.run(&s0, &grid)?;
        for (x, y) in e.iter().zip(&i) {
            worst = worst.max(x.b.iter().zip(&y.b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max));
        }
    }
    Ok(sub("matrix exponential vs integrator, N = 1..10", worst <= 1e-7, &format!("max deviation {worst:.1e} (<= 1e-7)")))
}

fn check_slow_source(rng: &mut ChaCha8Rng) -> Result<bool> {
    // A radiating TM mode in the 5x5 guide damps every sublevel.
    let gamma_s: f64 = 1e-3;
    let delta = 0.8;
    let setup = ScatteringSetup::new(WaveguideGeometry::new(5.0, 5.0)?);
    let length = 40.0;
    let positions: Vec<[f64; 3]> = (0..4).map(|_| [rng.random_range(0.5..4.5), rng.random_range(0.5..4.5), rng.random_range(-20.0..20.0)]).collect();
    let cloud = AtomEnsemble::new(positions.clone(), &setup.geometry)?;
    let h = setup.hamiltonian(&cloud)?;
    let probe = setup.probe(delta, length);
    let steady = steady_amplitudes(&h, &probe)?;
    let mut with_source = positions;
    with_source.push(probe.source_position);
    let big = setup.hamiltonian(&AtomEnsemble::new(with_source, &setup.geometry)?)?;
    let n = h.dim();
    let src = n + sublevel_slot(-1)?;
    let root = gamma_s.sqrt();
    let mut m = Array2::<C64>::zeros((n + 1, n + 1));
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = big.matrix()[[i, j]];
        }
        m[[i, n]] = root * big.matrix()[[i, src]];
        m[[n, i]] = root * big.matrix()[[src, i]];
    }
    m[[n, n]] = C64::new(-gamma_s / 2.0, -delta);
    let mut b0 = Array1::zeros(n + 1);
    b0[n] = C64::new(1.0, 0.0);
    let tr = propagate_matrix(&m, &AmplitudeState { t: 0.0, b: b0 }, &[0.0, 50.0 / gamma_s])?;
    let b = &tr.states[1].b;
    let size = steady.beta.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let worst = (0..n).map(|k| (b[k] / (b[n] * root) - steady.beta[k]).norm() / size).fold(0.0, f64::max);
    Ok(sub("steady state vs slow-source dynamics", worst <= 0.02, &format!("max relative {:.2}% (<= 2%)", 100.0 * worst)))
}

fn check_determinism() -> Result<bool> {
    let setup = ScatteringSetup::new(guide(6.25));
    let spec = SamplingSpec { n_atoms: Some(12), density: None, length: Some(300.0), seed: 12, trials: 64, pinned: Vec::new() };
    let one = transmission(&setup, &spec, &[0.0, 2.0], Some(1))?;
    let eight = transmission(&setup, &spec, &[0.0, 2.0], Some(8))?;
    let same = one.rows.iter().zip(&eight.rows).all(|(x, y)| {
        x.t.mean.to_bits() == y.t.mean.to_bits() && x.t.stderr.to_bits() == y.t.stderr.to_bits() && x.log_t.mean.to_bits() == y.log_t.mean.to_bits()
    });
    Ok(sub("Monte Carlo determinism, 1 vs 8 threads", same, "bitwise-identical transmission statistics"))
}

fn check_synthetic_fits() -> Result<bool> {
    let profile: Vec<(f64, f64)> = (0..40).map(|i| -500.0 + 25.0 * (i as f64 + 0.5)).map(|z| (z, (-0.0032 * z).exp())).collect();
    let alpha = fit_extinction(&profile, (-500.0, 500.0))?.alpha;
    let points: Vec<(f64, f64)> = LENGTHS.iter().map(|&l| (l, -l / 750.0)).collect();
    let xi = fit_localization_length(&points)?.xi;
    let pass = (alpha - 0.0032).abs() <= 1e-12 && (xi - 750.0).abs() <= 1e-9;
    Ok(sub("synthetic fit inversion", pass, &format!("alpha={alpha:.12}, xi={xi:.9}")))
}

fn check_clt() -> Result<bool> {
    let g = guide(6.28);
    let observe = |e: &AtomEnsemble, _| Ok(vec![e.positions().iter().map(|p| p[2]).sum::<f64>()]);
    let spec = |trials| SamplingSpec { n_atoms: Some(5), density: None, length: Some(100.0), seed: 13, trials, pinned: Vec::new() };
    let small = run_monte_carlo(&spec(400), &g, None, observe)?.statistics[0].stderr;
    let large = run_monte_carlo(&spec(800), &g, None, observe)?.statistics[0].stderr;
    let ratio = large / small * 2f64.sqrt();
    Ok(sub("CLT stderr scaling, 400 vs 800 trials", (ratio - 1.0).abs() <= 0.2, &format!("√2·σ800/σ400 = {ratio:.3} (within 20% of 1)")))
}

fn properties(suite: &mut Suite) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let checks: Vec<Result<bool>> = vec![
        check_reciprocity(&mut rng),
        Ok(check_dispersion()),
        check_boundaries(&mut rng),
        check_representations(),
        check_free_space(),
        check_zero_mode(&mut rng),
        check_trace(&mut rng),
        check_solvers(&mut rng),
        check_slow_source(&mut rng),
        check_determinism(),
        check_synthetic_fits(),
        check_clt(),
    ];
    let mut passed = 0;
    let total = checks.len();
    for c in checks {
        match c {
            Ok(true) => passed += 1,
            Ok(false) => {}
            Err(e) => {
                sub("check", false, &format!("error: {e}"));
            }
        }
    }
    suite.record(11, "property suite", passed == total, &format!("{passed} of {total} checks hold"), t);
}

fn main() {
    let started = Instant::now();
    let mut suite = Suite { outcomes: Vec::new() };
    println!("acceptance suite (k0 = 1, γ0 = 1; default model with full waveguide self term)");
    census(&mut suite);
    zero_mode_transfer(&mut suite);
    single_mode_oscillations(&mut suite);
    ensemble_plateau(&mut suite);
    extinction_and_phase(&mut suite);
    localization(&mut suite);
    resonant_transmission(&mut suite);
    m0_contrast(&mut suite);
    spectrum_broadening(&mut suite);
    properties(&mut suite);
    suite.outcomes.sort_by_key(|(id, _)| *id);
    let passed = suite.outcomes.iter().filter(|(_, p)| *p).count();
    let failed: Vec<String> = suite.outcomes.iter().filter(|(_, p)| !*p).map(|(id, _)| id.to_string()).collect();
    println!(
        "acceptance summary: {passed} of {} criteria pass{} ({:.0} s)",
        suite.outcomes.len(),
        if failed.is_empty() { String::new() } else { format!("; failing: {}", failed.join(", ")) },
        started.elapsed().as_secs_f64()
    );
}
