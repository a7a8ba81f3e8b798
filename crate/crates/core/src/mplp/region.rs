use nalgebra::{DMatrix, DVector};

use super::{CriticalRegion, MplpError, ParametricLP, RegionFlags};
use crate::lp::{Basis, Polyhedron};

const ZERO_COEF: f64 = 1e-12;
const FULL_DIM_RADIUS: f64 = 1e-9;

/// Region built from a basis, with the Chebyshev center of its polyhedron.
pub(crate) struct BuiltRegion {
    pub region: CriticalRegion,
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Critical region of `basis` intersected with the parameter set.
pub fn region_from_basis(plp: &ParametricLP, basis: &Basis) -> Result<CriticalRegion, MplpError> {
    Ok(build_region(plp, basis)?.region)
}

enum ColRef {
    Struct(usize),
    Unit(usize),
    /// Artificial column of a redundant row: fixed at zero.
    Art(usize),
}

fn clean_row(row: &mut [f64], rhs: &mut f64) {
    let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(rhs.abs()).max(1.0);
    for v in row.iter_mut() {
        if v.abs() <= ZERO_COEF * scale {
            *v = 0.0;
        }
    }
    if rhs.abs() <= ZERO_COEF * scale {
        *rhs = 0.0;
    }
}

pub(crate) fn build_region(plp: &ParametricLP, basis: &Basis) -> Result<BuiltRegion, MplpError> {
    let lp = &plp.base;
    let n = lp.num_vars();
    let n_eq = lp.num_eq();
    let n_ub = lp.num_ub();
    let m = n_eq + n_ub;
    let p = plp.num_params();
    if basis.basic.len() != m {
        return Err(MplpError::DimensionMismatch(format!("basis has {} columns, expected {m}", basis.basic.len())));
    }
    let col = |id: usize| -> ColRef {
        if id < n {
            ColRef::Struct(id)
        } else if id < n + n_ub {
            ColRef::Unit(n_eq + id - n)
        } else {
            ColRef::Art(id - n - n_ub)
        }
    };
    let entry = |id: usize, row: usize| -> f64 {
        match col(id) {
            ColRef::Struct(j) => {
                if row < n_eq {
                    lp.a_eq[(row, j)]
                } else {
                    lp.a_ub[(row - n_eq, j)]
                }
            }
            ColRef::Unit(r) | ColRef::Art(r) => {
                if r == row {
                    1.0
                } else {
                    0.0
                }
            }
        }
    };
    let bounds = |id: usize| -> (f64, f64) {
        match col(id) {
            ColRef::Struct(j) => (lp.lower[j], lp.upper[j]),
            ColRef::Unit(_) => (0.0, f64::INFINITY),
            ColRef::Art(_) => (0.0, 0.0),
        }
    };

    let mut bmat = DMatrix::zeros(m, m);
    for (pos, &id) in basis.basic.iter().enumerate() {
        for r in 0..m {
            bmat[(r, pos)] = entry(id, r);
        }
    }
    let lu = bmat.clone().lu();
    let singular = || MplpError::Lp(crate::lp::LpError::NumericalFailure("singular basis".into()));

    // Nonbasic values.
    let mut is_basic = vec![false; n + n_ub + m];
    for &id in &basis.basic {
        is_basic[id] = true;
    }
    let mut at_upper = vec![false; n + n_ub + m];
    for &id in &basis.at_upper {
        at_upper[id] = true;
    }
    let mut nb_value = vec![0.0; n + n_ub];
    for id in 0..n + n_ub {
        if is_basic[id] {
            continue;
        }
        let (lo, hi) = bounds(id);
        nb_value[id] = if at_upper[id] && hi.is_finite() {
            hi
        } else if lo.is_finite() {
            lo
        } else if hi.is_finite() {
            hi
        } else {
            0.0
        };
    }

    // Primal: x_B = g0 + G t.
    let mut rhs0 = DVector::zeros(m);
    for i in 0..n_eq {
        rhs0[i] = lp.b_eq[i];
    }
    for i in 0..n_ub {
        rhs0[n_eq + i] = lp.b_ub[i];
    }
    for id in 0..n + n_ub {
        let v = nb_value[id];
        if !is_basic[id] && v != 0.0 {
            for r in 0..m {
                let a = entry(id, r);
                if a != 0.0 {
                    rhs0[r] -= a * v;
                }
            }
        }
    }
    let g0 = lu.solve(&rhs0).ok_or_else(singular)?;
    let gmat = lu.solve(&plp.rhs_sens).ok_or_else(singular)?;

    // Dual: y = y0 + Y t, reduced costs d = d0 + D t.
    let bt = bmat.transpose().lu();
    let mut cb0 = DVector::zeros(m);
    let mut cbs = DMatrix::zeros(m, p);
    for (pos, &id) in basis.basic.iter().enumerate() {
        if let ColRef::Struct(j) = col(id) {
            cb0[pos] = lp.cost[j];
            for k in 0..p {
                cbs[(pos, k)] = plp.cost_sens[(j, k)];
            }
        }
    }
    let y0 = bt.solve(&cb0).ok_or_else(singular)?;
    let ys = bt.solve(&cbs).ok_or_else(singular)?;

    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for r in 0..plp.theta.num_rows() {
        rows.push((plp.theta.row(r), plp.theta.b[r]));
    }
    for (pos, &id) in basis.basic.iter().enumerate() {
        let (lo, hi) = bounds(id);
        let g: Vec<f64> = (0..p).map(|k| gmat[(pos, k)]).collect();
        if lo.is_finite() {
            let mut row: Vec<f64> = g.iter().map(|v| -v).collect();
            let mut b = g0[pos] - lo;
            clean_row(&mut row, &mut b);
            rows.push((row, b));
        }
        if hi.is_finite() {
            let mut row = g.clone();
            let mut b = hi - g0[pos];
            clean_row(&mut row, &mut b);
            rows.push((row, b));
        }
    }
    for id in 0..n + n_ub {
        if is_basic[id] {
            continue;
        }
        let (lo, hi) = bounds(id);
        if lo == hi {
            continue;
        }
        let (mut d0, mut dk) = match col(id) {
            ColRef::Struct(j) => (lp.cost[j], (0..p).map(|k| plp.cost_sens[(j, k)]).collect::<Vec<_>>()),
            _ => (0.0, vec![0.0; p]),
        };
        for r in 0..m {
            let a = entry(id, r);
            if a != 0.0 {
                d0 -= a * y0[r];
                for k in 0..p {
                    dk[k] -= a * ys[(r, k)];
                }
            }
        }
        let free = !lo.is_finite() && !hi.is_finite();
        let upper_side = at_upper[id] && hi.is_finite() || (!lo.is_finite() && hi.is_finite());
        if upper_side || free {
            // d <= 0
            let mut row = dk.clone();
            let mut b = -d0;
            clean_row(&mut row, &mut b);
            rows.push((row, b));
        }
        if !upper_side || free {
            // d >= 0
            let mut row: Vec<f64> = dk.iter().map(|v| -v).collect();
            let mut b = d0;
            clean_row(&mut row, &mut b);
            rows.push((row, b));
        }
    }

    let raw = Polyhedron::from_rows(p, &rows);
    let (poly, center, radius) = raw.reduce()?;

    // Policy over structural variables.
    let mut x0 = vec![0.0; n];
    let mut xg = DMatrix::zeros(n, p);
    x0.copy_from_slice(&nb_value[..n]);
    for (pos, &id) in basis.basic.iter().enumerate() {
        if let ColRef::Struct(j) = col(id) {
            x0[j] = g0[pos];
            for k in 0..p {
                xg[(j, k)] = gmat[(pos, k)];
            }
        }
    }
    // Cost (c0 + H t)'(x0 + X t).
    let c0 = DVector::from_column_slice(&lp.cost);
    let x0v = DVector::from_column_slice(&x0);
    let alpha = c0.dot(&x0v);
    let lin = plp.cost_sens.transpose() * &x0v + xg.transpose() * &c0;
    let quad = plp.cost_sens.transpose() * &xg;

    let region = CriticalRegion {
        id: 0,
        poly,
        policy_offset: x0,
        policy_gain: xg,
        cost_const: alpha,
        cost_linear: lin.iter().copied().collect(),
        cost_quad: quad,
        basis: basis.clone(),
        flags: RegionFlags { degenerate: false, lower_dimensional: radius < FULL_DIM_RADIUS },
    };
    Ok(BuiltRegion { region, center, radius })
}
