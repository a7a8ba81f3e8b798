//! Linear programming: problem container, simplex solver and polyhedral utilities.

mod polyhedron;
mod simplex;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use polyhedron::{clip_box_2d, polygon_area, Polyhedron, PolyhedronError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// `min c'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lower <= x <= upper`.
///
/// Bounds may be infinite.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: Vec<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Basis description. Column ids are `0..n` for variables and `n + k` for
/// the slack of inequality row `k`. Nonbasic columns not listed in
/// `at_upper` sit at their lower bound (or at zero when free).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Basis {
    pub basic: Vec<usize>,
    pub at_upper: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Multipliers `y` with `c - A'y` the reduced costs. Inequality duals are `<= 0`.
    pub duals_eq: Vec<f64>,
    pub duals_ub: Vec<f64>,
    pub objective: f64,
    pub basis: Basis,
}

impl LinearProgram {
    /// Empty problem on `n` variables with bounds `[0, inf)` and zero cost.
    pub fn new(n: usize) -> Self {
        LinearProgram {
            cost: vec![0.0; n],
            a_eq: DMatrix::zeros(0, n),
            b_eq: Vec::new(),
            a_ub: DMatrix::zeros(0, n),
            b_ub: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_eq(&self) -> usize {
        self.b_eq.len()
    }

    pub fn num_ub(&self) -> usize {
        self.b_ub.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        let dim = |what: &str| Err(LpError::DimensionMismatch(what.to_string()));
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return dim("equality block");
        }
        if self.a_ub.ncols() != n || self.a_ub.nrows() != self.b_ub.len() {
            return dim("inequality block");
        }
        if self.lower.len() != n || self.upper.len() != n {
            return dim("bounds");
        }
        if self.cost.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("cost"));
        }
        if self.a_eq.iter().chain(self.a_ub.iter()).any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("constraint matrix"));
        }
        if self.b_eq.iter().chain(&self.b_ub).any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("right-hand side"));
        }
        if self.lower.iter().any(|v| v.is_nan() || *v == f64::INFINITY)
            || self.upper.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY)
        {
            return Err(LpError::NonFinite("bounds"));
        }
        Ok(())
    }

    /// Max violation of constraints and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.num_eq() {
            let r: f64 = (0..self.num_vars()).map(|j| self.a_eq[(i, j)] * x[j]).sum();
            worst = worst.max((r - self.b_eq[i]).abs());
        }
        for i in 0..self.num_ub() {
            let r: f64 = (0..self.num_vars()).map(|j| self.a_ub[(i, j)] * x[j]).sum();
            worst = worst.max(r - self.b_ub[i]);
        }
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }
}

/// Incremental builder with sparse row input.
#[derive(Clone, Debug, Default)]
pub struct LpBuilder {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    eq: Vec<(Vec<(usize, f64)>, f64)>,
    ub: Vec<(Vec<(usize, f64)>, f64)>,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.len() - 1
    }

    pub fn set_cost(&mut self, j: usize, cost: f64) {
        self.cost[j] = cost;
    }

    /// Adds `sum terms = rhs`; returns the equality row index.
    pub fn eq(&mut self, terms: &[(usize, f64)], rhs: f64) -> usize {
        self.eq.push((terms.to_vec(), rhs));
        self.eq.len() - 1
    }

    /// Adds `sum terms <= rhs`; returns the inequality row index.
    pub fn le(&mut self, terms: &[(usize, f64)], rhs: f64) -> usize {
        self.ub.push((terms.to_vec(), rhs));
        self.ub.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn build(&self) -> LinearProgram {
        let n = self.cost.len();
        let mut a_eq = DMatrix::zeros(self.eq.len(), n);
        for (i, (t, _)) in self.eq.iter().enumerate() {
            for &(j, v) in t {
                a_eq[(i, j)] += v;
            }
        }
        let mut a_ub = DMatrix::zeros(self.ub.len(), n);
        for (i, (t, _)) in self.ub.iter().enumerate() {
            for &(j, v) in t {
                a_ub[(i, j)] += v;
            }
        }
        LinearProgram {
            cost: self.cost.clone(),
            a_eq,
            b_eq: self.eq.iter().map(|r| r.1).collect(),
            a_ub,
            b_ub: self.ub.iter().map(|r| r.1).collect(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }
}

/// Solve a linear program from scratch.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    for j in 0..lp.num_vars() {
        if lp.lower[j] > lp.upper[j] {
            return Ok(infeasible_solution(lp));
        }
    }
    let mut engine = simplex::Engine::new(lp);
    let status = engine.solve()?;
    Ok(finish(lp, &engine, status))
}

fn infeasible_solution(lp: &LinearProgram) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        x: vec![f64::NAN; lp.num_vars()],
        duals_eq: vec![0.0; lp.num_eq()],
        duals_ub: vec![0.0; lp.num_ub()],
        objective: f64::NAN,
        basis: Basis::default(),
    }
}

fn finish(lp: &LinearProgram, engine: &simplex::Engine, status: LpStatus) -> LpSolution {
    let mut sol = engine.solution(status, &lp.cost);
    match status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            sol.objective = f64::INFINITY;
        }
        LpStatus::Unbounded => {
            sol.objective = f64::NEG_INFINITY;
        }
    }
    sol
}

/// A warm-startable solver session supporting appended inequality rows and
/// right-hand-side changes.
#[derive(Clone, Debug)]
pub struct LpSession {
    lp: LinearProgram,
    engine: simplex::Engine,
    extra_rows: usize,
}

impl LpSession {
    pub fn new(lp: LinearProgram) -> Result<Self, LpError> {
        lp.validate()?;
        if (0..lp.num_vars()).any(|j| lp.lower[j] > lp.upper[j]) {
            return Err(LpError::DimensionMismatch("crossed bounds".into()));
        }
        let engine = simplex::Engine::new(&lp);
        Ok(LpSession { lp, engine, extra_rows: 0 })
    }

    pub fn solve(&mut self) -> Result<LpSolution, LpError> {
        let status = self.engine.solve()?;
        Ok(finish(&self.lp, &self.engine, status))
    }

    /// Append `terms <= rhs` rows. Their duals follow the original inequality rows.
    pub fn add_le_rows(&mut self, rows: &[(Vec<(usize, f64)>, f64)]) {
        self.engine.add_le_rows(rows);
        self.extra_rows += rows.len();
    }

    pub fn num_added_rows(&self) -> usize {
        self.extra_rows
    }

    /// Replace the right-hand side of the original rows.
    pub fn set_rhs(&mut self, b_eq: &[f64], b_ub: &[f64]) {
        self.lp.b_eq.copy_from_slice(b_eq);
        self.lp.b_ub.copy_from_slice(b_ub);
        let mut full_ub = b_ub.to_vec();
        full_ub.extend(self.engine_extra_rhs());
        self.engine.set_rhs(b_eq, &full_ub);
    }

    fn engine_extra_rhs(&self) -> Vec<f64> {
        self.engine.extra_rhs(self.lp.num_ub())
    }

    pub fn program(&self) -> &LinearProgram {
        &self.lp
    }
}

impl simplex::Engine {
    fn extra_rhs(&self, first_ub: usize) -> Vec<f64> {
        self.ub_rhs_original()[first_ub..].to_vec()
    }
}
