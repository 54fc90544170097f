use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wgqed_core::ensemble::*;
use wgqed_core::waveguide::WaveguideGeometry;

fn geometry() -> WaveguideGeometry {
    WaveguideGeometry::new(3.0, 6.28).unwrap()
}

fn spec(n: Option<usize>, density: Option<f64>, length: Option<f64>, trials: usize) -> SamplingSpec {
    SamplingSpec { n_atoms: n, density, length, seed: 2024, trials, pinned: Vec::new() }
}

#[test]
fn reference_density_gives_38_atoms() {
    let r = spec(None, Some(0.002), Some(1000.0), 1).resolve(&geometry()).unwrap();
    assert_eq!(r.n_atoms, 38);
}

#[test]
fn positions_are_uniform_in_the_box() {
    let g = geometry();
    let s = spec(Some(100), None, Some(1000.0), 1);
    let mut sums = [0.0; 3];
    let mut count: f64 = 0.0;
    for t in 0..1000 {
        for p in sample_configuration(&s, &g, t).unwrap().positions() {
            assert!(p[0] > 0.0 && p[0] < 3.0 && p[1] > 0.0 && p[1] < 6.28 && p[2].abs() < 500.0);
            for k in 0..3 {
                sums[k] += p[k];
            }
            count += 1.0;
        }
    }
    let widths: [f64; 3] = [3.0, 6.28, 1000.0];
    let centres = [1.5, 3.14, 0.0];
    for k in 0..3 {
        let sigma = widths[k] / 12f64.sqrt() / count.sqrt();
        assert!((sums[k] / count - centres[k]).abs() < 3.0 * sigma, "axis {k}");
    }
}

#[test]
fn density_converges() {
    let g = geometry();
    let s = spec(Some(40), None, Some(2000.0), 1);
    let volume = 3.0 * 6.28 * 2000.0;
    let counted: usize = (0..200).map(|t| sample_configuration(&s, &g, t).unwrap().len()).sum();
    assert!((counted as f64 / 200.0 / volume - 40.0 / volume).abs() < 1e-12);
    let r = spec(None, Some(0.001), Some(2000.0), 1).resolve(&g).unwrap();
    assert!((r.n_atoms as f64 / volume - 0.001).abs() <= 0.5 / volume);
}

#[test]
fn thread_count_does_not_change_results() {
    let g = geometry();
    let s = spec(Some(5), None, Some(100.0), 300);
    let observe = |e: &wgqed_core::greens::AtomEnsemble, _| Ok(vec![e.positions().iter().map(|p| p[2].sin()).sum::<f64>(), 1.0]);
    let one = run_monte_carlo(&s, &g, Some(1), observe).unwrap();
    let eight = run_monte_carlo(&s, &g, Some(8), observe).unwrap();
    for (a, b) in one.statistics.iter().zip(&eight.statistics) {
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }
    assert_eq!(one.statistics[1].stderr, 0.0);
}

#[test]
fn stderr_shrinks_as_root_trials() {
    let g = geometry();
    let observe = |e: &wgqed_core::greens::AtomEnsemble, _| Ok(vec![e.positions()[0][2]]);
    let small = run_monte_carlo(&spec(Some(1), None, Some(10.0), 400), &g, None, observe).unwrap();
    let large = run_monte_carlo(&spec(Some(1), None, Some(10.0), 800), &g, None, observe).unwrap();
    let ratio = large.statistics[0].stderr / small.statistics[0].stderr;
    assert!((ratio * 2f64.sqrt() - 1.0).abs() <= 0.2, "{ratio}");
}

#[test]
fn too_many_failures_abort_the_run() {
    let err = run_trials(100, None, |t| if t < 2 { Err(wgqed_core::Error::Fit("x".into())) } else { Ok(t) }).unwrap_err();
    assert!(matches!(err, wgqed_core::Error::TooManyFailures { failed: 2, total: 100, .. }));
    let ok = run_trials(100, None, |t| if t == 7 { Err(wgqed_core::Error::Fit("x".into())) } else { Ok(t) }).unwrap();
    assert_eq!(ok.outcomes.len(), 99);
    assert_eq!(ok.warnings().len(), 1);
}

#[test]
fn synthetic_fits_invert_exactly() {
    let profile: Vec<(f64, f64)> = (0..40).map(|i| {
        let z = -500.0 + 25.0 * (i as f64 + 0.5);
        (z, (-0.0032 * z).exp())
    }).collect();
    let fit = fit_extinction(&profile, (-500.0, 500.0)).unwrap();
    assert!((fit.alpha - 0.0032).abs() < 1e-12);
    assert!(fit.warning.is_none());
    let points: Vec<(f64, f64)> = [250.0, 500.0, 750.0, 1000.0, 1250.0, 1500.0].iter().map(|&l| (l, -l / 750.0)).collect();
    assert!((fit_localization_length(&points).unwrap().xi - 750.0).abs() < 1e-9);
    let growing: Vec<(f64, f64)> = points.iter().map(|&(l, y)| (l, -y)).collect();
    assert!(fit_localization_length(&growing).unwrap_err().to_string().contains("no localization"));
}

#[test]
fn noisy_fits_are_unbiased() {
    let truth = -1.0 / 750.0;
    let xs: Vec<f64> = (0..500).map(|i| 3.0 * i as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut gauss = move || {
        let u: f64 = 1.0 - rng.random::<f64>();
        let v: f64 = rng.random();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    };
    let runs = 4000;
    let mut covered = 0;
    for _ in 0..runs {
        let ys: Vec<f64> = xs.iter().map(|&x| ((truth * x).exp() * (1.0 + 0.05 * gauss())).ln()).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        if (fit.slope - truth).abs() <= 2.0 * fit.slope_stderr {
            covered += 1;
        }
    }
    assert!(covered as f64 >= 0.95 * runs as f64, "{covered} of {runs}");
}

proptest! {
    #[test]
    fn same_trial_same_positions(seed in any::<u64>(), trial in any::<u64>(), n in 1usize..30) {
        let g = geometry();
        let s = SamplingSpec { n_atoms: Some(n), density: None, length: Some(300.0), seed, trials: 1, pinned: vec![[0.8, 1.8, 0.0]] };
        let a = sample_configuration(&s, &g, trial).unwrap();
        let b = sample_configuration(&s, &g, trial).unwrap();
        prop_assert_eq!(a.positions(), b.positions());
        prop_assert_eq!(a.positions()[0], [0.8, 1.8, 0.0]);
        prop_assert_eq!(a.len(), n);
    }

    #[test]
    fn two_of_three_rule(n in prop::option::of(1usize..100), d in prop::option::of(0.0001f64..0.01), l in prop::option::of(10.0f64..2000.0)) {
        let given = [n.is_some(), d.is_some(), l.is_some()].iter().filter(|x| **x).count();
        let r = spec(n, d, l, 1).resolve(&geometry());
        if given != 2 {
            prop_assert!(r.unwrap_err().to_string().contains("N = n·a·b·L"));
        } else if let Ok(r) = r {
            let implied = r.density * 3.0 * 6.28 * r.length;
            prop_assert!((implied - r.n_atoms as f64).abs() <= 0.5 + 1e-9 * implied);
        }
    }
}
