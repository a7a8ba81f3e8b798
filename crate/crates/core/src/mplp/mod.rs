//! Multiparametric linear programming: `min (c0 + H t)'x  s.t.  A x (=,<=) b0 + F t`.
//!
//! Critical regions are polyhedra in parameter space on which one basis stays
//! optimal; each carries an affine policy and a bilinear cost.

pub(crate) mod enumerate;
mod region;
mod store;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{LinearProgram, LpError, Polyhedron, PolyhedronError};

pub use enumerate::{enumerate_regions, EnumerateOptions};
pub use region::region_from_basis;
pub use store::{Coverage, RegionStore, STORE_FORMAT_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MplpError {
    #[error("seed {0} yields an infeasible LP")]
    SeedInfeasible(usize),
    #[error("seed {0} lies outside the parameter set")]
    SeedOutsideTheta(usize),
    #[error("parameter point is not covered by any stored region")]
    NotCovered,
    #[error("parameter point lies outside the region (violation {0:e})")]
    OutsideRegion(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("store format: {0}")]
    Format(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Polyhedron(#[from] PolyhedronError),
}

/// LP whose right-hand side and cost depend affinely on a parameter vector.
///
/// Rows of `rhs_sens` follow the row order of the base program: equality
/// rows first, then inequality rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParametricLP {
    pub base: LinearProgram,
    pub rhs_sens: DMatrix<f64>,
    pub cost_sens: DMatrix<f64>,
    pub theta: Polyhedron,
    pub param_names: Vec<String>,
}

impl ParametricLP {
    pub fn num_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn validate(&self) -> Result<(), MplpError> {
        self.base.validate()?;
        let p = self.num_params();
        let m = self.base.num_eq() + self.base.num_ub();
        if self.rhs_sens.nrows() != m || self.rhs_sens.ncols() != p {
            return Err(MplpError::DimensionMismatch("rhs sensitivity".into()));
        }
        if self.cost_sens.nrows() != self.base.num_vars() || self.cost_sens.ncols() != p {
            return Err(MplpError::DimensionMismatch("cost sensitivity".into()));
        }
        if self.theta.dim() != p {
            return Err(MplpError::DimensionMismatch("parameter set".into()));
        }
        Ok(())
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    /// Concrete LP at parameter `t`.
    pub fn instantiate(&self, t: &[f64]) -> LinearProgram {
        let mut lp = self.base.clone();
        let n_eq = lp.num_eq();
        let rhs = &self.rhs_sens * nalgebra::DVector::from_column_slice(t);
        for i in 0..n_eq {
            lp.b_eq[i] += rhs[i];
        }
        for i in 0..lp.num_ub() {
            lp.b_ub[i] += rhs[n_eq + i];
        }
        let dc = &self.cost_sens * nalgebra::DVector::from_column_slice(t);
        for j in 0..lp.num_vars() {
            lp.cost[j] += dc[j];
        }
        lp
    }

    /// Substitute fixed values for some parameters; the remaining ones keep
    /// their order and range over `theta`.
    pub fn fix(&self, fixed: &[(usize, f64)], theta: Polyhedron) -> ParametricLP {
        let p = self.num_params();
        let mut t = vec![0.0; p];
        let mut is_fixed = vec![false; p];
        for &(k, v) in fixed {
            t[k] = v;
            is_fixed[k] = true;
        }
        let keep: Vec<usize> = (0..p).filter(|k| !is_fixed[*k]).collect();
        ParametricLP {
            base: self.instantiate(&t),
            rhs_sens: self.rhs_sens.select_columns(&keep),
            cost_sens: self.cost_sens.select_columns(&keep),
            theta,
            param_names: keep.iter().map(|&k| self.param_names[k].clone()).collect(),
        }
    }

    /// Indices of parameters that enter the right-hand side.
    pub fn rhs_params(&self) -> Vec<usize> {
        (0..self.num_params()).filter(|&k| self.rhs_sens.column(k).iter().any(|v| *v != 0.0)).collect()
    }

    /// Indices of parameters that enter the cost.
    pub fn cost_params(&self) -> Vec<usize> {
        (0..self.num_params()).filter(|&k| self.cost_sens.column(k).iter().any(|v| *v != 0.0)).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionFlags {
    /// Facet crossing kept returning this basis.
    pub degenerate: bool,
    /// No interior point of positive radius.
    pub lower_dimensional: bool,
}

/// One critical region with its affine policy `x = x0 + X t` and bilinear
/// cost `f = alpha + g't + t'Q t`.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalRegion {
    pub id: usize,
    pub poly: Polyhedron,
    pub policy_offset: Vec<f64>,
    pub policy_gain: DMatrix<f64>,
    pub cost_const: f64,
    pub cost_linear: Vec<f64>,
    pub cost_quad: DMatrix<f64>,
    pub basis: crate::lp::Basis,
    pub flags: RegionFlags,
}

const REGION_TOL: f64 = 1e-9;

impl CriticalRegion {
    pub fn contains(&self, t: &[f64], tol: f64) -> bool {
        self.poly.contains(t, tol)
    }

    /// Policy at `t`; errors when `t` is outside the region.
    pub fn evaluate_policy(&self, t: &[f64]) -> Result<Vec<f64>, MplpError> {
        let v = self.poly.max_violation(t);
        if v > REGION_TOL {
            return Err(MplpError::OutsideRegion(v));
        }
        Ok(self.policy_at(t))
    }

    /// Policy at `t` without a membership check.
    pub fn policy_at(&self, t: &[f64]) -> Vec<f64> {
        let mut x = self.policy_offset.clone();
        for (j, xj) in x.iter_mut().enumerate() {
            for (k, tk) in t.iter().enumerate() {
                *xj += self.policy_gain[(j, k)] * tk;
            }
        }
        x
    }

    pub fn cost_at(&self, t: &[f64]) -> f64 {
        let p = t.len();
        let mut f = self.cost_const;
        for k in 0..p {
            f += self.cost_linear[k] * t[k];
        }
        for a in 0..p {
            if t[a] == 0.0 {
                continue;
            }
            for b in 0..p {
                f += t[a] * self.cost_quad[(a, b)] * t[b];
            }
        }
        f
    }
}

/// First region (lowest index) containing `t`.
pub fn locate_region<'a>(store: &'a RegionStore, t: &[f64]) -> Result<&'a CriticalRegion, MplpError> {
    store.locate(t, REGION_TOL)
}

/// Convenience wrapper around [`CriticalRegion::evaluate_policy`].
pub fn evaluate_policy(region: &CriticalRegion, t: &[f64]) -> Result<Vec<f64>, MplpError> {
    region.evaluate_policy(t)
}
