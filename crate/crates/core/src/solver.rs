//! Full Newton-Raphson power flow for any balanced mix of bus types.
//!
//! Unknowns are ordered as all non-slack angles followed by the voltage
//! magnitudes of PQ and P buses, each in bus order. Equations are the real
//! power balances of every non-slack bus followed by the reactive balances
//! of PQ and PQV buses. With `|PQV| = |P|` the system is square.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{AdmittanceMatrix, BusType, BusTypeAssignment, Network, NetworkError};
use crate::sparse::{CscMatrix, SparseLu};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("invalid solve options: {0}")]
    InvalidOptions(String),
    #[error("state has {found} buses, expected {expected}")]
    SizeMismatch { expected: usize, found: usize },
}

/// Per-bus voltage magnitude (p.u.), angle (rad) and net injections (p.u.).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowState {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl PowerFlowState {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        [&self.v, &self.theta, &self.p, &self.q]
            .iter()
            .all(|xs| xs.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    Diverged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Last iterate, with injections filled in.
    pub state: PowerFlowState,
    /// Number of mismatch evaluations, the initial one included.
    pub iterations: usize,
    /// Infinity norm of the final mismatch (p.u.).
    pub max_mismatch: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Convergence threshold on the infinity norm of the mismatch (p.u.).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Start from unit magnitudes and zero angles instead of the case file's
    /// voltages.
    pub flat_start: bool,
    /// Mismatch norm beyond which the iteration is declared divergent.
    pub divergence_ceiling: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-8,
            max_iterations: 30,
            flat_start: true,
            divergence_ceiling: 1e6,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(SolverError::InvalidOptions(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations < 1 {
            return Err(SolverError::InvalidOptions("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Calculated net injections at `(v, theta)`:
/// `P_k = Σ_j V_k V_j (G_kj cos θ_kj + B_kj sin θ_kj)`,
/// `Q_k = Σ_j V_k V_j (G_kj sin θ_kj − B_kj cos θ_kj)`.
pub fn calc_injections(v: &[f64], theta: &[f64], y: &AdmittanceMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = y.n();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for k in 0..n {
        let (mut pk, mut qk) = (0.0, 0.0);
        for (j, g, b) in y.row(k) {
            let (s, c) = (theta[k] - theta[j]).sin_cos();
            pk += v[j] * (g * c + b * s);
            qk += v[j] * (g * s - b * c);
        }
        p[k] = v[k] * pk;
        q[k] = v[k] * qk;
    }
    (p, q)
}

/// Positions of unknowns and equations for one assignment.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    theta_col: Vec<Option<usize>>,
    v_col: Vec<Option<usize>>,
    p_rows: Vec<usize>,
    q_rows: Vec<usize>,
    n_unknowns: usize,
}

impl Layout {
    pub(crate) fn new(assignment: &BusTypeAssignment) -> Result<Layout, SolverError> {
        assignment.check_balanced()?;
        let types = assignment.types();
        let mut theta_col = vec![None; types.len()];
        let mut v_col = vec![None; types.len()];
        let mut col = 0;
        for (k, &t) in types.iter().enumerate() {
            if t != BusType::Vtheta {
                theta_col[k] = Some(col);
                col += 1;
            }
        }
        for (k, &t) in types.iter().enumerate() {
            if matches!(t, BusType::PQ | BusType::P) {
                v_col[k] = Some(col);
                col += 1;
            }
        }
        let p_rows: Vec<usize> = (0..types.len()).filter(|&k| types[k].has_p()).collect();
        let q_rows: Vec<usize> = (0..types.len()).filter(|&k| types[k].has_q()).collect();
        debug_assert_eq!(p_rows.len() + q_rows.len(), col);
        Ok(Layout {
            theta_col,
            v_col,
            p_rows,
            q_rows,
            n_unknowns: col,
        })
    }

    pub(crate) fn n_unknowns(&self) -> usize {
        self.n_unknowns
    }

    pub(crate) fn n_equations(&self) -> usize {
        self.p_rows.len() + self.q_rows.len()
    }

    /// Unknown vector `[θ…, V…]` read from a state.
    pub(crate) fn gather(&self, state: &PowerFlowState) -> Vec<f64> {
        let mut x = vec![0.0; self.n_unknowns];
        for (k, c) in self.theta_col.iter().enumerate() {
            if let Some(c) = *c {
                x[c] = state.theta[k];
            }
        }
        for (k, c) in self.v_col.iter().enumerate() {
            if let Some(c) = *c {
                x[c] = state.v[k];
            }
        }
        x
    }

    pub(crate) fn scatter(&self, x: &[f64], state: &mut PowerFlowState) {
        for (k, c) in self.theta_col.iter().enumerate() {
            if let Some(c) = *c {
                state.theta[k] = x[c];
            }
        }
        for (k, c) in self.v_col.iter().enumerate() {
            if let Some(c) = *c {
                state.v[k] = x[c];
            }
        }
    }

    fn residual(&self, assignment: &BusTypeAssignment, p_calc: &[f64], q_calc: &[f64]) -> Vec<f64> {
        let mut r = Vec::with_capacity(self.n_equations());
        r.extend(self.p_rows.iter().map(|&k| assignment.spec_p(k).expect("P specified") - p_calc[k]));
        r.extend(self.q_rows.iter().map(|&k| assignment.spec_q(k).expect("Q specified") - q_calc[k]));
        r
    }
}

fn check_len(state: &PowerFlowState, n: usize) -> Result<(), SolverError> {
    for len in [state.v.len(), state.theta.len(), state.p.len(), state.q.len()] {
        if len != n {
            return Err(SolverError::SizeMismatch {
                expected: n,
                found: len,
            });
        }
    }
    Ok(())
}

/// Stacked residual `[ΔP; ΔQ]` = specified − calculated, evaluated at the
/// state's `v` and `theta`.
pub fn mismatch(
    state: &PowerFlowState,
    assignment: &BusTypeAssignment,
    y: &AdmittanceMatrix,
) -> Result<Vec<f64>, SolverError> {
    check_len(state, y.n())?;
    let layout = Layout::new(assignment)?;
    let (p, q) = calc_injections(&state.v, &state.theta, y);
    Ok(layout.residual(assignment, &p, &q))
}

/// Jacobian of the calculated injections with respect to the unknowns,
/// i.e. the negated derivative of [`mismatch`]. A Newton step solves
/// `J Δx = mismatch`.
pub fn jacobian(
    state: &PowerFlowState,
    assignment: &BusTypeAssignment,
    y: &AdmittanceMatrix,
) -> Result<CscMatrix, SolverError> {
    check_len(state, y.n())?;
    let layout = Layout::new(assignment)?;
    let (p, q) = calc_injections(&state.v, &state.theta, y);
    Ok(assemble_jacobian(&layout, state, y, &p, &q))
}

fn assemble_jacobian(
    layout: &Layout,
    state: &PowerFlowState,
    y: &AdmittanceMatrix,
    p: &[f64],
    q: &[f64],
) -> CscMatrix {
    let v = &state.v;
    let th = &state.theta;
    let mut trip = Vec::with_capacity(4 * y.nnz());
    let n_p = layout.p_rows.len();

    for (row, &k) in layout.p_rows.iter().enumerate() {
        let (gkk, bkk) = y.diag(k);
        for (j, g, b) in y.row(k) {
            if j == k {
                if let Some(c) = layout.theta_col[k] {
                    trip.push((row, c, -q[k] - bkk * v[k] * v[k]));
                }
                if let Some(c) = layout.v_col[k] {
                    trip.push((row, c, p[k] / v[k] + gkk * v[k]));
                }
                continue;
            }
            let (s, cs) = (th[k] - th[j]).sin_cos();
            if let Some(c) = layout.theta_col[j] {
                trip.push((row, c, v[k] * v[j] * (g * s - b * cs)));
            }
            if let Some(c) = layout.v_col[j] {
                trip.push((row, c, v[k] * (g * cs + b * s)));
            }
        }
    }
    for (i, &k) in layout.q_rows.iter().enumerate() {
        let row = n_p + i;
        let (gkk, bkk) = y.diag(k);
        for (j, g, b) in y.row(k) {
            if j == k {
                if let Some(c) = layout.theta_col[k] {
                    trip.push((row, c, p[k] - gkk * v[k] * v[k]));
                }
                if let Some(c) = layout.v_col[k] {
                    trip.push((row, c, q[k] / v[k] - bkk * v[k]));
                }
                continue;
            }
            let (s, cs) = (th[k] - th[j]).sin_cos();
            if let Some(c) = layout.theta_col[j] {
                trip.push((row, c, -v[k] * v[j] * (g * cs + b * s)));
            }
            if let Some(c) = layout.v_col[j] {
                trip.push((row, c, v[k] * (g * s - b * cs)));
            }
        }
    }
    CscMatrix::from_triplets(layout.n_equations(), layout.n_unknowns(), &trip)
}

/// Initial iterate: zero angles, specified magnitudes where fixed, 1.0
/// elsewhere.
pub fn flat_start(assignment: &BusTypeAssignment) -> PowerFlowState {
    let n = assignment.len();
    PowerFlowState {
        v: (0..n).map(|k| assignment.spec_v(k).unwrap_or(1.0)).collect(),
        theta: vec![0.0; n],
        p: vec![0.0; n],
        q: vec![0.0; n],
    }
}

fn case_start(network: &Network, assignment: &BusTypeAssignment) -> PowerFlowState {
    let n = assignment.len();
    let slack = assignment.slack();
    let theta0 = network.va0[slack];
    PowerFlowState {
        v: (0..n)
            .map(|k| assignment.spec_v(k).unwrap_or(network.vm0[k]))
            .collect(),
        theta: network.va0.iter().map(|a| a - theta0).collect(),
        p: vec![0.0; n],
        q: vec![0.0; n],
    }
}

/// Solves the power flow for `assignment` on `network`.
pub fn nr_solve(
    network: &Network,
    assignment: &BusTypeAssignment,
    options: &SolveOptions,
) -> Result<SolveOutcome, SolverError> {
    let start = if options.flat_start {
        flat_start(assignment)
    } else {
        case_start(network, assignment)
    };
    nr_solve_from(&network.ybus, assignment, options, start)
}

/// Newton iteration from a given initial state. Fixed magnitudes are taken
/// from the assignment regardless of the initial state.
pub fn nr_solve_from(
    y: &AdmittanceMatrix,
    assignment: &BusTypeAssignment,
    options: &SolveOptions,
    mut state: PowerFlowState,
) -> Result<SolveOutcome, SolverError> {
    options.validate()?;
    check_len(&state, y.n())?;
    if assignment.len() != y.n() {
        return Err(SolverError::SizeMismatch {
            expected: y.n(),
            found: assignment.len(),
        });
    }
    let layout = Layout::new(assignment)?;
    for k in 0..state.len() {
        if let Some(v) = assignment.spec_v(k) {
            state.v[k] = v;
        }
    }
    state.theta[assignment.slack()] = 0.0;

    let mut iterations = 0;
    let mut diagnostic = None;
    let mut order: Option<Vec<usize>> = None;
    let status = loop {
        iterations += 1;
        let (p, q) = calc_injections(&state.v, &state.theta, y);
        let r = layout.residual(assignment, &p, &q);
        let norm = inf_norm(&r);
        if !norm.is_finite() || norm > options.divergence_ceiling {
            diagnostic = Some(format!("mismatch norm {norm:e} exceeds divergence ceiling"));
            break (SolveStatus::Diverged, norm);
        }
        if norm <= options.tolerance {
            break (SolveStatus::Converged, norm);
        }
        if iterations > options.max_iterations {
            break (SolveStatus::MaxIterations, norm);
        }
        let jac = assemble_jacobian(&layout, &state, y, &p, &q);
        // the pattern is fixed for the whole solve, so order once
        let lu = match order.take() {
            Some(o) => SparseLu::factor_ordered(&jac, o),
            None => SparseLu::factor(&jac),
        };
        let step = lu.and_then(|lu| {
            order = Some(lu.column_order().to_vec());
            lu.solve(&r)
        });
        match step {
            Ok(dx) if dx.iter().all(|d| d.is_finite()) => {
                let mut x = layout.gather(&state);
                for (xi, di) in x.iter_mut().zip(&dx) {
                    *xi += di;
                }
                layout.scatter(&x, &mut state);
            }
            Ok(_) => {
                diagnostic = Some("non-finite Newton step".into());
                break (SolveStatus::Diverged, norm);
            }
            Err(e) => {
                diagnostic = Some(format!("singular Jacobian: {e}"));
                break (SolveStatus::Diverged, norm);
            }
        }
    };
    let (status, max_mismatch) = status;
    complete_state(&mut state, assignment, y, status == SolveStatus::Converged);
    Ok(SolveOutcome {
        status,
        state,
        iterations,
        max_mismatch,
        diagnostic,
    })
}

/// Fills `p`/`q`: specified values where the type fixes them (only for a
/// converged state), calculated values everywhere else.
fn complete_state(state: &mut PowerFlowState, assignment: &BusTypeAssignment, y: &AdmittanceMatrix, converged: bool) {
    let (p, q) = calc_injections(&state.v, &state.theta, y);
    for k in 0..state.len() {
        state.p[k] = match assignment.spec_p(k) {
            Some(sp) if converged => sp,
            _ => p[k],
        };
        state.q[k] = match assignment.spec_q(k) {
            Some(sq) if converged => sq,
            _ => q[k],
        };
    }
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
}
