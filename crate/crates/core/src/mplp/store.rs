use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CriticalRegion, MplpError, RegionFlags};
use crate::lp::{Basis, Polyhedron};

pub const STORE_FORMAT_VERSION: u32 = 1;

/// Sampled coverage of the parameter set by the stored regions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub feasible_samples: usize,
    pub covered_samples: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionStore {
    pub param_names: Vec<String>,
    pub theta: Polyhedron,
    pub regions: Vec<CriticalRegion>,
    pub coverage: Coverage,
}

impl RegionStore {
    pub fn num_params(&self) -> usize {
        self.param_names.len()
    }

    /// Lowest-index region containing `t` within `tol`.
    pub fn locate(&self, t: &[f64], tol: f64) -> Result<&CriticalRegion, MplpError> {
        if t.len() != self.num_params() {
            return Err(MplpError::DimensionMismatch(format!(
                "point has {} entries, store has {} parameters",
                t.len(),
                self.num_params()
            )));
        }
        self.regions.iter().find(|r| r.contains(t, tol)).ok_or(MplpError::NotCovered)
    }

    pub fn to_json(&self) -> Result<String, MplpError> {
        serde_json::to_string(&StoreDoc::from(self)).map_err(|e| MplpError::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, MplpError> {
        let doc: StoreDoc = serde_json::from_str(s).map_err(|e| MplpError::Format(e.to_string()))?;
        doc.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<(), MplpError> {
        std::fs::write(path, self.to_json()?).map_err(|e| MplpError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, MplpError> {
        let s = std::fs::read_to_string(path).map_err(|e| MplpError::Format(e.to_string()))?;
        Self::from_json(&s)
    }
}

#[derive(Serialize, Deserialize)]
struct PolyDoc {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RegionDoc {
    id: usize,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    policy_gain: Vec<Vec<f64>>,
    policy_offset: Vec<f64>,
    cost_const: f64,
    cost_linear: Vec<f64>,
    cost_quad: Vec<Vec<f64>>,
    basis: Basis,
    flags: RegionFlags,
}

#[derive(Serialize, Deserialize)]
struct StoreDoc {
    version: u32,
    param_names: Vec<String>,
    theta: PolyDoc,
    coverage: Coverage,
    regions: Vec<RegionDoc>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>, MplpError> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(MplpError::Format("ragged matrix".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl From<&RegionStore> for StoreDoc {
    fn from(s: &RegionStore) -> Self {
        StoreDoc {
            version: STORE_FORMAT_VERSION,
            param_names: s.param_names.clone(),
            theta: PolyDoc { a: rows_of(&s.theta.a), b: s.theta.b.clone() },
            coverage: s.coverage.clone(),
            regions: s
                .regions
                .iter()
                .map(|r| RegionDoc {
                    id: r.id,
                    a: rows_of(&r.poly.a),
                    b: r.poly.b.clone(),
                    policy_gain: rows_of(&r.policy_gain),
                    policy_offset: r.policy_offset.clone(),
                    cost_const: r.cost_const,
                    cost_linear: r.cost_linear.clone(),
                    cost_quad: rows_of(&r.cost_quad),
                    basis: r.basis.clone(),
                    flags: r.flags,
                })
                .collect(),
        }
    }
}

impl TryFrom<StoreDoc> for RegionStore {
    type Error = MplpError;

    fn try_from(doc: StoreDoc) -> Result<Self, MplpError> {
        if doc.version != STORE_FORMAT_VERSION {
            return Err(MplpError::Format(format!("unsupported store version {}", doc.version)));
        }
        let p = doc.param_names.len();
        let theta = Polyhedron::new(matrix_of(&doc.theta.a, p)?, doc.theta.b);
        let mut regions = Vec::with_capacity(doc.regions.len());
        for r in doc.regions {
            let n = r.policy_offset.len();
            if r.a.len() != r.b.len() || r.policy_gain.len() != n || r.cost_quad.len() != p || r.cost_linear.len() != p
            {
                return Err(MplpError::Format(format!("region {} has inconsistent sizes", r.id)));
            }
            regions.push(CriticalRegion {
                id: r.id,
                poly: Polyhedron::new(matrix_of(&r.a, p)?, r.b),
                policy_offset: r.policy_offset,
                policy_gain: matrix_of(&r.policy_gain, p)?,
                cost_const: r.cost_const,
                cost_linear: r.cost_linear,
                cost_quad: matrix_of(&r.cost_quad, p)?,
                basis: r.basis,
                flags: r.flags,
            });
        }
        Ok(RegionStore { param_names: doc.param_names, theta, regions, coverage: doc.coverage })
    }
}
