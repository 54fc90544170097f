//! Experiment dispatch: a validated config in, result tables out.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use wgqed_core::ensemble::{fit_extinction, fit_localization_length, run_monte_carlo, run_trials, sample_configuration, SamplingSpec};
use wgqed_core::evolve::{initial_state, population_trace, propagate, uniform_grid};
use wgqed_core::greens::{build_effective_hamiltonian_with, AtomEnsemble, BuildOptions, SUBLEVELS};
use wgqed_core::spectrum::{collective_spectrum, shift_skewness, spectrum_histogram, CollectiveState, HistogramSpec};
use wgqed_core::steady::{polarization_profile, transmission, ScatteringSetup, PROFILE_BIN, SOURCE_CLEARANCE};
use wgqed_core::waveguide::WaveguideGeometry;
use wgqed_core::Error;

use crate::config::{num, Atoms, Experiment, RunConfig, UNITS};
use crate::table::{Cell, Column, ResultTable};

pub const VERSION: &str = concat!("wgqed ", env!("CARGO_PKG_VERSION"));

/// A table and the file stem it is written under.
#[derive(Debug, Clone)]
pub struct Output {
    pub name: String,
    pub table: ResultTable,
}

impl Output {
    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }
}

/// Runs the configured experiment. `threads = None` lets the pool decide;
/// the tables do not depend on it.
pub fn execute(cfg: &RunConfig, threads: Option<usize>) -> Result<Vec<Output>, Error> {
    let mut outputs = match cfg.experiment {
        Experiment::Dynamics => dynamics(cfg, threads)?,
        Experiment::Steady => steady(cfg, threads)?,
        Experiment::Spectrum => spectrum(cfg, threads)?,
        Experiment::Sweep => sweep(cfg, threads)?,
    };
    let echo = cfg.to_toml();
    for o in &mut outputs {
        let mut header = vec![
            ("version".to_string(), VERSION.to_string()),
            ("experiment".to_string(), cfg.experiment.to_string()),
            ("table".to_string(), o.name.clone()),
            ("units".to_string(), UNITS.to_string()),
            ("seed".to_string(), cfg.seed.to_string()),
        ];
        header.append(&mut o.table.header);
        for line in echo.lines() {
            header.push(("config".to_string(), line.to_string()));
        }
        o.table.header = header;
    }
    Ok(outputs)
}

/// Writes every table into `dir`, creating it if needed.
pub fn write_outputs(outputs: &[Output], dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    outputs
        .iter()
        .map(|o| {
            let path = dir.join(o.file_name());
            fs::write(&path, o.table.to_text())?;
            Ok(path)
        })
        .collect()
}

/// Derived sampling quantities for `--dry-run` and headers.
pub fn derived_lines(cfg: &RunConfig) -> Result<Vec<String>, Error> {
    let Some(spec) = cfg.sampling() else {
        return Ok(match &cfg.atoms {
            Atoms::Explicit(p) => vec![format!("n_atoms = {}", p.len())],
            Atoms::Sampled(_) => Vec::new(),
        });
    };
    let mut lines = Vec::new();
    for (b, length) in sweep_points(cfg) {
        let g = WaveguideGeometry::new(cfg.geometry.a(), b)?;
        let s = with_length(&spec, length);
        let r = s.resolve(&g)?;
        let prefix = if cfg.experiment == Experiment::Sweep { format!("b = {}: ", num(b)) } else { String::new() };
        lines.push(format!("{prefix}n_atoms = {}, density = {}, length = {}", r.n_atoms, num(r.density), num(r.length)));
    }
    Ok(lines)
}

fn sweep_points(cfg: &RunConfig) -> Vec<(f64, Option<f64>)> {
    match &cfg.sweep {
        Some(s) if cfg.experiment == Experiment::Sweep => {
            let lengths: Vec<Option<f64>> = match &s.lengths {
                Some(l) => l.iter().map(|v| Some(*v)).collect(),
                None => vec![None],
            };
            s.b.iter().flat_map(|&b| lengths.iter().map(move |&l| (b, l))).collect()
        }
        _ => vec![(cfg.geometry.b(), None)],
    }
}

fn with_length(spec: &SamplingSpec, length: Option<f64>) -> SamplingSpec {
    match length {
        Some(l) => SamplingSpec { length: Some(l), ..spec.clone() },
        None => spec.clone(),
    }
}

fn options(cfg: &RunConfig) -> BuildOptions {
    BuildOptions { evanescent: cfg.evanescent, self_shift: cfg.self_shift }
}

fn setup(cfg: &RunConfig, geometry: WaveguideGeometry) -> ScatteringSetup {
    ScatteringSetup {
        truncation: cfg.truncation,
        evanescent: cfg.evanescent,
        self_shift: cfg.self_shift,
        source_sublevel: cfg.probe.as_ref().map_or(-1, |p| p.source_sublevel),
        ..ScatteringSetup::new(geometry)
    }
}

fn model_meta(t: &mut ResultTable, cfg: &RunConfig) {
    t.meta("geometry", format!("a = {}, b = {}", num(cfg.geometry.a()), num(cfg.geometry.b())));
    t.meta("model", format!("evanescent = {}, self_shift = {}", cfg.evanescent, cfg.self_shift));
}

fn sampling_meta(t: &mut ResultTable, n_atoms: usize, length: f64, trials: usize, area: f64) {
    t.meta("n_atoms", n_atoms);
    t.meta("length", num(length));
    t.meta("density", num(n_atoms as f64 / (area * length)));
    t.meta("trials", trials);
}

fn warnings(t: &mut ResultTable, w: &[String]) {
    for line in w {
        t.meta("warning", line.replace('\n', " "));
    }
}

fn dynamics(cfg: &RunConfig, threads: Option<usize>) -> Result<Vec<Output>, Error> {
    let d = cfg.dynamics.as_ref().ok_or_else(|| Error::InvalidInput("missing [dynamics]".into()))?;
    let grid = uniform_grid(d.t_max, d.points);
    let atom = d.initial_atom - 1;
    let mut table;
    match &cfg.atoms {
        Atoms::Explicit(positions) => {
            let ens = AtomEnsemble::new(positions.clone(), &cfg.geometry)?;
            let h = build_effective_hamiltonian_with(&ens, &cfg.geometry, &cfg.truncation, options(cfg))?;
            let s0 = initial_state(&h, atom, d.initial_sublevel)?;
            let tr = propagate(&h, &s0, &grid)?;
            let trace = population_trace(&tr.states)?;
            let mut columns = vec![Column::f64("t")];
            columns.extend(trace.labels.iter().map(Column::f64));
            table = ResultTable::new(columns);
            model_meta(&mut table, cfg);
            table.meta("n_atoms", positions.len());
            table.meta("initial", format!("atom {}, m = {}", d.initial_atom, d.initial_sublevel));
            table.meta("method", format!("{:?}", tr.method).to_lowercase());
            warnings(&mut table, &tr.warnings);
            for (t, row) in trace.times.iter().zip(&trace.rows) {
                let mut cells = vec![Cell::Float(*t)];
                cells.extend(row.iter().map(|p| Cell::Float(*p)));
                table.push(cells);
            }
        }
        Atoms::Sampled(_) => {
            let spec = cfg.sampling().expect("sampled");
            let r = spec.resolve(&cfg.geometry)?;
            if atom >= r.n_atoms {
                return Err(Error::InvalidInput(format!("initial_atom = {} but N = {}", d.initial_atom, r.n_atoms)));
            }
            let mc = run_monte_carlo(&spec, &cfg.geometry, threads, |ens, _| {
                let h = build_effective_hamiltonian_with(ens, &cfg.geometry, &cfg.truncation, options(cfg))?;
                let s0 = initial_state(&h, atom, d.initial_sublevel)?;
                let tr = propagate(&h, &s0, &grid)?;
                let mut out = Vec::with_capacity(2 * grid.len());
                for s in &tr.states {
                    out.push(s.total_population());
                    out.push(s.atom_population(atom));
                }
                Ok(out)
            })?;
            let own = format!("P_atom{}", d.initial_atom);
            table = ResultTable::new(vec![
                Column::f64("t"),
                Column::f64("P_total"),
                Column::f64("P_total_stderr"),
                Column::f64(own.clone()),
                Column::f64(format!("{own}_stderr")),
            ]);
            model_meta(&mut table, cfg);
            sampling_meta(&mut table, r.n_atoms, r.length, spec.trials, cfg.geometry.area());
            table.meta("initial", format!("atom {}, m = {}", d.initial_atom, d.initial_sublevel));
            table.meta("averaging", "mean and standard error over trials");
            warnings(&mut table, &mc.warnings);
            for (k, t) in grid.iter().enumerate() {
                let total = mc.statistics[2 * k];
                let own = mc.statistics[2 * k + 1];
                table.push(vec![Cell::Float(*t), total.mean.into(), total.stderr.into(), own.mean.into(), own.stderr.into()]);
            }
        }
    }
    Ok(vec![Output { name: "dynamics".into(), table }])
}

fn transmission_columns(prefix: &[Column]) -> Vec<Column> {
    let mut c = prefix.to_vec();
    c.extend([
        Column::f64("delta"),
        Column::f64("T"),
        Column::f64("T_stderr"),
        Column::f64("lnT"),
        Column::f64("lnT_stderr"),
        Column::i64("trials_used"),
    ]);
    c
}

fn transmission_meta(t: &mut ResultTable) {
    t.meta("transmission", format!("T = I_behind / I_empty_guide, source and detector on axis {} beyond the cloud ends", num(SOURCE_CLEARANCE)));
    t.meta("averaging", "T and lnT are configuration means; lnT averages log T per trial");
}

fn steady(cfg: &RunConfig, threads: Option<usize>) -> Result<Vec<Output>, Error> {
    let spec = cfg.sampling().ok_or_else(|| Error::InvalidInput("steady runs need sampled atoms".into()))?;
    let probe = cfg.probe.as_ref().ok_or_else(|| Error::InvalidInput("missing [probe]".into()))?;
    let s = setup(cfg, cfg.geometry);
    let tt = transmission(&s, &spec, &probe.deltas, threads)?;
    let mut table = ResultTable::new(transmission_columns(&[]));
    model_meta(&mut table, cfg);
    sampling_meta(&mut table, tt.n_atoms, tt.length, spec.trials, cfg.geometry.area());
    table.meta("source_sublevel", probe.source_sublevel);
    transmission_meta(&mut table);
    warnings(&mut table, &tt.warnings);
    for row in &tt.rows {
        table.push(vec![
            row.delta.into(),
            row.t.mean.into(),
            row.t.stderr.into(),
            row.log_t.mean.into(),
            row.log_t.stderr.into(),
            row.t.trials_used.into(),
        ]);
    }
    let mut out = vec![Output { name: "steady_transmission".into(), table }];

    if let Some(p) = &cfg.profile {
        let prof = polarization_profile(&s, &spec, p.delta, threads)?;
        let mut columns = vec![Column::f64("z"), Column::i64("count"), Column::f64("amplitude"), Column::f64("amplitude_stderr"), Column::f64("phase")];
        columns.extend(SUBLEVELS.iter().map(|m| Column::f64(format!("population_m{m}"))));
        let mut t = ResultTable::new(columns);
        model_meta(&mut t, cfg);
        sampling_meta(&mut t, tt.n_atoms, prof.length, spec.trials, cfg.geometry.area());
        t.meta("delta", num(p.delta));
        t.meta("bin_width", num(PROFILE_BIN));
        t.meta("carrier_kz", num(prof.carrier));
        t.meta("amplitude", "mean per-atom |beta|; phase of the coherent x dipole, unwrapped");
        let mut w = prof.warnings.clone();
        match fit_extinction(&prof.amplitude_points(), (-prof.length / 2.0, prof.length / 2.0)) {
            Ok(f) => {
                t.meta("extinction_alpha", format!("{} +- {} (amplitude convention: |beta| ~ exp(-alpha z), R^2 = {:.4}, {} bins)", num(f.alpha), num(f.stderr), f.r_squared, f.bins_used));
                w.extend(f.warning);
            }
            Err(e) => w.push(format!("extinction fit: {e}")),
        }
        match prof.phase_slope() {
            Ok(f) => t.meta("phase_slope", format!("{} +- {}", num(f.slope), num(f.slope_stderr))),
            Err(e) => w.push(format!("phase fit: {e}")),
        }
        warnings(&mut t, &w);
        for b in &prof.bins {
            let mut cells = vec![b.z.into(), b.count.into(), b.amplitude.into(), b.amplitude_stderr.into(), b.phase.into()];
            for k in 0..3 {
                cells.push(b.populations.map(|p| p[k]).into());
            }
            t.push(cells);
        }
        out.push(Output { name: "steady_profile".into(), table: t });
    }
    Ok(out)
}

fn spectrum(cfg: &RunConfig, threads: Option<usize>) -> Result<Vec<Output>, Error> {
    let (per_trial, warn, sampled) = match &cfg.atoms {
        Atoms::Explicit(positions) => {
            let ens = AtomEnsemble::new(positions.clone(), &cfg.geometry)?;
            let h = build_effective_hamiltonian_with(&ens, &cfg.geometry, &cfg.truncation, options(cfg))?;
            (vec![(0, collective_spectrum(&h)?)], Vec::new(), None)
        }
        Atoms::Sampled(_) => {
            let spec = cfg.sampling().expect("sampled");
            let r = spec.resolve(&cfg.geometry)?;
            let report = run_trials(spec.trials, threads, |t| {
                let ens = sample_configuration(&spec, &cfg.geometry, t as u64)?;
                let h = build_effective_hamiltonian_with(&ens, &cfg.geometry, &cfg.truncation, options(cfg))?;
                collective_spectrum(&h)
            })?;
            let w = report.warnings();
            (report.outcomes, w, Some((r, spec.trials)))
        }
    };
    let all: Vec<CollectiveState> = per_trial.iter().flat_map(|(_, s)| s.iter().copied()).collect();

    let mut table = ResultTable::new(vec![
        Column::i64("trial"),
        Column::f64("re_lambda"),
        Column::f64("im_lambda"),
        Column::f64("decay"),
        Column::f64("participation"),
        Column::f64("re_nu"),
        Column::f64("im_nu"),
    ]);
    model_meta(&mut table, cfg);
    match sampled {
        Some((r, trials)) => sampling_meta(&mut table, r.n_atoms, r.length, trials, cfg.geometry.area()),
        None => table.meta("n_atoms", all.len() / 3),
    }
    table.meta("eigenvalues", "Lambda = i mu for eigenvalues mu of the amplitude generator; Re Lambda is the shift, decay = -2 Im Lambda; nu = -2 Lambda - i");
    table.meta("shift_skewness", num(shift_skewness(&all)));
    warnings(&mut table, &warn);
    for (trial, states) in &per_trial {
        for s in states {
            let nu = s.v_eigenvalue();
            table.push(vec![(*trial).into(), s.lambda.re.into(), s.lambda.im.into(), s.decay_rate().into(), s.participation.into(), nu.re.into(), nu.im.into()]);
        }
    }
    let mut out = vec![Output { name: "spectrum_eigenvalues".into(), table }];

    if let Some(bins) = &cfg.histogram {
        let h = spectrum_histogram(&all, &HistogramSpec { shift_bins: bins.shift_bins, decay_bins: bins.decay_bins, shift_range: None, decay_range: None })?;
        let mut t = ResultTable::new(vec![
            Column::f64("shift_lo"),
            Column::f64("shift_hi"),
            Column::f64("decay_lo"),
            Column::f64("decay_hi"),
            Column::i64("count"),
            Column::f64("density"),
        ]);
        model_meta(&mut t, cfg);
        t.meta("states", all.len());
        t.meta("density", "count / (states x bin area)");
        let density = h.density();
        for (i, row) in h.counts.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                t.push(vec![
                    h.shift_edges[i].into(),
                    h.shift_edges[i + 1].into(),
                    h.decay_edges[j].into(),
                    h.decay_edges[j + 1].into(),
                    Cell::Int(*c as i64),
                    density[i][j].into(),
                ]);
            }
        }
        out.push(Output { name: "spectrum_histogram".into(), table: t });
    }
    Ok(out)
}

fn sweep(cfg: &RunConfig, threads: Option<usize>) -> Result<Vec<Output>, Error> {
    let spec = cfg.sampling().ok_or_else(|| Error::InvalidInput("sweep runs need sampled atoms".into()))?;
    let probe = cfg.probe.as_ref().ok_or_else(|| Error::InvalidInput("missing [probe]".into()))?;
    let sw = cfg.sweep.as_ref().ok_or_else(|| Error::InvalidInput("missing [sweep]".into()))?;
    let mut table = ResultTable::new(transmission_columns(&[Column::f64("b"), Column::i64("n_atoms"), Column::f64("length")]));
    table.meta("geometry", format!("a = {}, b swept", num(cfg.geometry.a())));
    table.meta("model", format!("evanescent = {}, self_shift = {}", cfg.evanescent, cfg.self_shift));
    table.meta("trials", spec.trials);
    table.meta("source_sublevel", probe.source_sublevel);
    transmission_meta(&mut table);
    let mut warn = Vec::new();
    // (b, delta) -> [(L, <lnT>)]
    let mut curves: Vec<((f64, f64), Vec<(f64, f64)>)> = Vec::new();
    for (b, length) in sweep_points(cfg) {
        let g = WaveguideGeometry::new(cfg.geometry.a(), b)?;
        let s = setup(cfg, g);
        let tt = transmission(&s, &with_length(&spec, length), &probe.deltas, threads)?;
        warn.extend(tt.warnings.iter().map(|w| format!("b = {}, length = {}: {w}", num(b), num(tt.length))));
        for row in &tt.rows {
            table.push(vec![
                b.into(),
                tt.n_atoms.into(),
                tt.length.into(),
                row.delta.into(),
                row.t.mean.into(),
                row.t.stderr.into(),
                row.log_t.mean.into(),
                row.log_t.stderr.into(),
                row.t.trials_used.into(),
            ]);
            match curves.iter_mut().find(|(k, _)| *k == (b, row.delta)) {
                Some((_, pts)) => pts.push((tt.length, row.log_t.mean)),
                None => curves.push(((b, row.delta), vec![(tt.length, row.log_t.mean)])),
            }
        }
    }
    warnings(&mut table, &warn);
    let mut out = vec![Output { name: "sweep_transmission".into(), table }];

    if sw.lengths.is_some() {
        let mut t = ResultTable::new(vec![Column::f64("b"), Column::f64("delta"), Column::f64("xi"), Column::f64("xi_stderr"), Column::f64("slope")]);
        t.meta("geometry", format!("a = {}, b swept", num(cfg.geometry.a())));
        t.meta("localization", "xi = -1/slope of the configuration mean of ln T against L");
        let mut w = Vec::new();
        for ((b, delta), pts) in &curves {
            match fit_localization_length(pts) {
                Ok(f) => t.push(vec![(*b).into(), (*delta).into(), f.xi.into(), f.stderr.into(), f.slope.into()]),
                Err(e) => {
                    w.push(format!("b = {}, delta = {}: {e}", num(*b), num(*delta)));
                    t.push(vec![(*b).into(), (*delta).into(), Cell::Empty, Cell::Empty, Cell::Empty]);
                }
            }
        }
        warnings(&mut t, &w);
        out.push(Output { name: "sweep_localization".into(), table: t });
    }
    Ok(out)
}
