//! Time evolution of the single-excitation amplitudes, `db/dt = M·b`.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Inverse, Norm};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::greens::{sublevel_slot, EffectiveHamiltonian, SUBLEVELS};

/// Eigenvector condition number above which the spectral path is abandoned.
const CONDITION_LIMIT: f64 = 1e7;
const RTOL: f64 = 1e-11;
const ATOL: f64 = 1e-14;
const MAX_STEPS: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeState {
    pub t: f64,
    pub b: Array1<C64>,
}

impl AmplitudeState {
    pub fn total_population(&self) -> f64 {
        self.b.iter().map(|v| v.norm_sqr()).sum()
    }

    /// `|b|²` summed over the three sublevels of `atom`.
    pub fn atom_population(&self, atom: usize) -> f64 {
        self.b.iter().skip(3 * atom).take(3).map(|v| v.norm_sqr()).sum()
    }
}

/// One atom excited in one sublevel at `t = 0`.
pub fn initial_state(h: &EffectiveHamiltonian, atom: usize, m: i32) -> Result<AmplitudeState> {
    if atom >= h.n_atoms() {
        return Err(Error::InvalidInput(format!("atom index {atom} out of range for {} atoms", h.n_atoms())));
    }
    let mut b = Array1::zeros(h.dim());
    b[3 * atom + sublevel_slot(m)?] = C64::new(1.0, 0.0);
    Ok(AmplitudeState { t: 0.0, b })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// `V·exp(Λt)·V⁻¹` from one dense eigendecomposition.
    Eigen,
    /// Adaptive Dormand–Prince 5(4).
    Integrator,
}

#[derive(Debug, Clone)]
enum Kind {
    Eigen { values: Array1<C64>, vectors: Array2<C64>, inverse: Array2<C64> },
    Integrator { matrix: Array2<C64> },
}

/// Reusable propagator for one matrix.
#[derive(Debug, Clone)]
pub struct Propagator {
    kind: Kind,
    warnings: Vec<String>,
}

impl Propagator {
    /// Spectral path when the eigenvectors are well conditioned, integrator
    /// otherwise (with a warning).
    pub fn new(matrix: &Array2<C64>) -> Result<Self> {
        check_square(matrix)?;
        match spectral(matrix) {
            Ok((kind, cond)) if cond <= CONDITION_LIMIT => Ok(Self { kind, warnings: Vec::new() }),
            Ok((_, cond)) => {
                let mut p = Self::integrator(matrix)?;
                p.warnings.push(format!(
                    "eigenvector condition number {cond:.3e} exceeds {CONDITION_LIMIT:.0e}; switched to the ODE integrator"
                ));
                Ok(p)
            }
            Err(e) => {
                let mut p = Self::integrator(matrix)?;
                p.warnings.push(format!("eigendecomposition failed ({e}); switched to the ODE integrator"));
                Ok(p)
            }
        }
    }

    /// Forces the spectral path regardless of conditioning.
    pub fn eigen(matrix: &Array2<C64>) -> Result<Self> {
        check_square(matrix)?;
        let (kind, _) = spectral(matrix)?;
        Ok(Self { kind, warnings: Vec::new() })
    }

    pub fn integrator(matrix: &Array2<C64>) -> Result<Self> {
        check_square(matrix)?;
        Ok(Self { kind: Kind::Integrator { matrix: matrix.clone() }, warnings: Vec::new() })
    }

    pub fn method(&self) -> Method {
        match self.kind {
            Kind::Eigen { .. } => Method::Eigen,
            Kind::Integrator { .. } => Method::Integrator,
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn dim(&self) -> usize {
        match &self.kind {
            Kind::Eigen { values, .. } => values.len(),
            Kind::Integrator { matrix } => matrix.nrows(),
        }
    }

    /// States at every time of `grid`; `grid[0]` must equal `s0.t`.
    pub fn run(&self, s0: &AmplitudeState, grid: &[f64]) -> Result<Vec<AmplitudeState>> {
        check_grid(s0, grid)?;
        if s0.b.len() != self.dim() {
            return Err(Error::InvalidInput(format!("state has length {}, matrix has dimension {}", s0.b.len(), self.dim())));
        }
        match &self.kind {
            Kind::Eigen { values, vectors, inverse } => {
                let c0 = inverse.dot(&s0.b);
                Ok(grid
                    .iter()
                    .map(|&t| {
                        let dt = t - s0.t;
                        let c = Array1::from_iter(c0.iter().zip(values).map(|(c, l)| c * (l * dt).exp()));
                        AmplitudeState { t, b: vectors.dot(&c) }
                    })
                    .collect())
            }
            Kind::Integrator { matrix } => integrate(matrix, s0, grid),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<AmplitudeState>,
    pub method: Method,
    pub warnings: Vec<String>,
}

pub fn propagate(h: &EffectiveHamiltonian, s0: &AmplitudeState, grid: &[f64]) -> Result<Trajectory> {
    propagate_matrix(h.matrix(), s0, grid)
}

pub fn propagate_matrix(matrix: &Array2<C64>, s0: &AmplitudeState, grid: &[f64]) -> Result<Trajectory> {
    let p = Propagator::new(matrix)?;
    let states = p.run(s0, grid)?;
    Ok(Trajectory { states, method: p.method(), warnings: p.warnings.clone() })
}

/// `count` uniform points on `[0, t_max]`.
pub fn uniform_grid(t_max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|i| t_max * i as f64 / (count - 1) as f64).collect(),
    }
}

fn check_square(m: &Array2<C64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
    }
    Ok(())
}

fn check_grid(s0: &AmplitudeState, grid: &[f64]) -> Result<()> {
    let Some(&first) = grid.first() else {
        return Err(Error::InvalidInput("empty time grid".into()));
    };
    if (first - s0.t).abs() > 1e-12 * (1.0 + s0.t.abs()) {
        return Err(Error::InvalidInput(format!("time grid starts at {first}, state is at {}", s0.t)));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("time grid must be strictly increasing".into()));
    }
    Ok(())
}

fn spectral(matrix: &Array2<C64>) -> Result<(Kind, f64)> {
    let (values, vectors) = matrix.eig()?;
    let inverse = vectors.inv()?;
    let cond = vectors.norm_l1() * inverse.norm_l1();
    if !cond.is_finite() {
        return Err(Error::LinearAlgebra("non-finite eigenvector condition number".into()));
    }
    Ok((Kind::Eigen { values, vectors, inverse }, cond))
}

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn integrate(matrix: &Array2<C64>, s0: &AmplitudeState, grid: &[f64]) -> Result<Vec<AmplitudeState>> {
    let mut out = vec![s0.clone()];
    let mut y = s0.b.clone();
    let mut t = s0.t;
    let scale = matrix.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-3);
    let mut h = 0.01 / scale;
    let mut steps = 0usize;
    let mut k: Vec<Array1<C64>> = vec![matrix.dot(&y); 7];
    for &target in &grid[1..] {
        while t < target {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::Convergence(format!("integrator exceeded {MAX_STEPS} steps")));
            }
            let last = t + h >= target;
            let step = if last { target - t } else { h };
            for s in 1..7 {
                let mut ys = y.clone();
                for (j, kj) in k.iter().enumerate().take(s) {
                    if A[s][j] != 0.0 {
                        ys.scaled_add(C64::new(step * A[s][j], 0.0), kj);
                    }
                }
                k[s] = matrix.dot(&ys);
            }
            let mut y5 = y.clone();
            let mut err = Array1::<C64>::zeros(y.len());
            for s in 0..7 {
                y5.scaled_add(C64::new(step * B5[s], 0.0), &k[s]);
                err.scaled_add(C64::new(step * (B5[s] - B4[s]), 0.0), &k[s]);
            }
            let norm = (err
                .iter()
                .zip(y.iter().zip(y5.iter()))
                .map(|(e, (a, b))| {
                    let tol = ATOL + RTOL * a.norm().max(b.norm());
                    (e.norm() / tol).powi(2)
                })
                .sum::<f64>()
                / y.len().max(1) as f64)
                .sqrt();
            if norm <= 1.0 {
                t = if last { target } else { t + step };
                y = y5;
                // First-same-as-last: stage 7 is the derivative at the new point.
                k[0] = k[6].clone();
                let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || factor < 1.0 {
                    h = step * factor;
                }
            } else {
                h = step * (0.9 * norm.powf(-0.2)).clamp(0.1, 0.9);
            }
            if h < 1e-14 * (1.0 + t.abs()) {
                return Err(Error::Convergence(format!("integrator step underflow at t = {t}")));
            }
        }
        out.push(AmplitudeState { t: target, b: y.clone() });
    }
    Ok(out)
}

/// Populations `|b_e|²` per (atom, sublevel) plus their sum, one row per state.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTrace {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl PopulationTrace {
    /// Column of the total population.
    pub fn total(&self) -> Vec<f64> {
        self.rows.iter().map(|r| *r.last().expect("total column")).collect()
    }

    /// Population of one atom (all sublevels) at every time.
    pub fn atom(&self, atom: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[3 * atom..3 * atom + 3].iter().sum()).collect()
    }
}

/// Label of the population column for `atom` (0-based) and sublevel `m`.
pub fn population_label(atom: usize, m: i32) -> String {
    format!("P_atom{}_m{}", atom + 1, m)
}

pub fn population_trace(states: &[AmplitudeState]) -> Result<PopulationTrace> {
    let Some(first) = states.first() else {
        return Err(Error::InvalidInput("no states to tabulate".into()));
    };
    let n_atoms = first.b.len() / 3;
    let mut labels: Vec<String> = (0..n_atoms)
        .flat_map(|i| SUBLEVELS.iter().map(move |&m| population_label(i, m)))
        .collect();
    labels.push("P_total".into());
    let rows = states
        .iter()
        .map(|s| {
            let mut row: Vec<f64> = s.b.iter().map(|v| v.norm_sqr()).collect();
            row.push(row.iter().sum());
            row
        })
        .collect();
    Ok(PopulationTrace { labels, times: states.iter().map(|s| s.t).collect(), rows })
}
