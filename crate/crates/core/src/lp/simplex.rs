//! Bounded-variable revised simplex with an explicit dense basis inverse.
//!
//! Columns are kept sparse (structural) or implicit (unit slack and
//! artificial columns). The inverse is stored column-major and refactored
//! from scratch periodically.

use nalgebra::DMatrix;

use super::{Basis, LpError, LpSolution, LpStatus};

/// Feasibility tolerance on scaled values.
pub(crate) const FEAS_TOL: f64 = 1e-9;
/// Optimality tolerance on scaled reduced costs.
pub(crate) const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const REFACTOR_EVERY: usize = 120;
const BLAND_AFTER_DEGENERATE: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Status {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable held at zero.
    Zero,
}

#[derive(Clone, Debug)]
pub(crate) enum ColKind {
    Struct(usize),
    /// Slack of inequality row `row` (column +e_row).
    Slack(usize),
    /// Artificial of row `row` with sign.
    Art(usize, f64),
}

#[derive(Clone, Debug, Default)]
pub(crate) struct SparseCol {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct Engine {
    m: usize,
    n_struct: usize,
    structs: Vec<SparseCol>,
    kinds: Vec<ColKind>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    /// For each row: index of the original equality (`Ok(i)`) or inequality (`Err(i)`) row.
    row_origin: Vec<RowOrigin>,
    /// Column index of each inequality row's slack.
    slack_of_ub: Vec<usize>,
    status: Vec<Status>,
    basis: Vec<usize>,
    x: Vec<f64>,
    binv: Vec<f64>,
    since_refactor: usize,
    degenerate: usize,
    bland: bool,
    n_eq: usize,
    solved: bool,
}

#[derive(Clone, Copy, Debug)]
enum RowOrigin {
    Eq(usize),
    Ub(usize),
}

enum Outcome {
    Optimal,
    Unbounded,
    Infeasible,
}

fn pow2_round(s: f64) -> f64 {
    if !s.is_finite() || s <= 0.0 {
        return 1.0;
    }
    2f64.powi(s.log2().round() as i32)
}

impl Engine {
    pub fn new(lp: &super::LinearProgram) -> Self {
        let n = lp.num_vars();
        let n_eq = lp.num_eq();
        let n_ub = lp.num_ub();
        let m = n_eq + n_ub;

        // Gather rows as triplets for scaling.
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        for i in 0..n_eq {
            rows.push(
                (0..n)
                    .filter_map(|j| {
                        let v = lp.a_eq[(i, j)];
                        (v != 0.0).then_some((j, v))
                    })
                    .collect(),
            );
        }
        for i in 0..n_ub {
            rows.push(
                (0..n)
                    .filter_map(|j| {
                        let v = lp.a_ub[(i, j)];
                        (v != 0.0).then_some((j, v))
                    })
                    .collect(),
            );
        }

        // Geometric-mean equilibration, a few passes.
        let mut rs = vec![1.0; m];
        let mut cs = vec![1.0; n];
        for _ in 0..4 {
            for (i, row) in rows.iter().enumerate() {
                let (mut mx, mut mn) = (0.0f64, f64::INFINITY);
                for &(j, v) in row {
                    let a = (v * cs[j]).abs();
                    mx = mx.max(a);
                    mn = mn.min(a);
                }
                if mx > 0.0 {
                    rs[i] = 1.0 / (mx * mn).sqrt();
                }
            }
            let mut cmax = vec![0.0f64; n];
            let mut cmin = vec![f64::INFINITY; n];
            for (i, row) in rows.iter().enumerate() {
                for &(j, v) in row {
                    let a = (v * rs[i]).abs();
                    cmax[j] = cmax[j].max(a);
                    cmin[j] = cmin[j].min(a);
                }
            }
            for j in 0..n {
                if cmax[j] > 0.0 {
                    cs[j] = 1.0 / (cmax[j] * cmin[j]).sqrt();
                }
            }
        }
        for r in rs.iter_mut() {
            *r = pow2_round(*r);
        }
        for c in cs.iter_mut() {
            *c = pow2_round(*c);
        }

        let mut structs = vec![SparseCol::default(); n];
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                structs[j].idx.push(i);
                structs[j].val.push(v * rs[i] * cs[j]);
            }
        }

        let mut kinds = Vec::with_capacity(n + n_ub + m);
        let mut lo = Vec::with_capacity(n + n_ub + m);
        let mut hi = Vec::with_capacity(n + n_ub + m);
        let mut cost = Vec::with_capacity(n + n_ub + m);
        for j in 0..n {
            kinds.push(ColKind::Struct(j));
            lo.push(lp.lower[j] / cs[j]);
            hi.push(lp.upper[j] / cs[j]);
            cost.push(lp.cost[j] * cs[j]);
        }
        let mut slack_of_ub = Vec::with_capacity(n_ub);
        for i in 0..n_ub {
            slack_of_ub.push(kinds.len());
            kinds.push(ColKind::Slack(n_eq + i));
            lo.push(0.0);
            hi.push(f64::INFINITY);
            cost.push(0.0);
        }
        let mut rhs = Vec::with_capacity(m);
        for i in 0..n_eq {
            rhs.push(lp.b_eq[i] * rs[i]);
        }
        for i in 0..n_ub {
            rhs.push(lp.b_ub[i] * rs[n_eq + i]);
        }
        let mut row_origin = Vec::with_capacity(m);
        row_origin.extend((0..n_eq).map(RowOrigin::Eq));
        row_origin.extend((0..n_ub).map(RowOrigin::Ub));

        let ncols = kinds.len();
        let mut e = Engine {
            m,
            n_struct: n,
            structs,
            kinds,
            lo,
            hi,
            cost,
            rhs,
            row_scale: rs,
            col_scale: cs,
            row_origin,
            slack_of_ub,
            status: vec![Status::Lower; ncols],
            basis: Vec::new(),
            x: vec![0.0; ncols],
            binv: Vec::new(),
            since_refactor: 0,
            degenerate: 0,
            bland: false,
            n_eq,
            solved: false,
        };
        e.initial_basis();
        e
    }

    fn ncols(&self) -> usize {
        self.kinds.len()
    }

    fn nonbasic_value(lo: f64, hi: f64) -> (f64, Status) {
        if lo.is_finite() {
            (lo, Status::Lower)
        } else if hi.is_finite() {
            (hi, Status::Upper)
        } else {
            (0.0, Status::Zero)
        }
    }

    /// Slack basis where possible, artificial columns elsewhere.
    fn initial_basis(&mut self) {
        let ncols = self.ncols();
        for j in 0..ncols {
            let (v, s) = Self::nonbasic_value(self.lo[j], self.hi[j]);
            self.x[j] = v;
            self.status[j] = s;
        }
        let mut resid = self.rhs.clone();
        for j in 0..self.n_struct {
            let xj = self.x[j];
            if xj != 0.0 {
                let c = &self.structs[j];
                for (k, &i) in c.idx.iter().enumerate() {
                    resid[i] -= c.val[k] * xj;
                }
            }
        }
        self.basis = vec![usize::MAX; self.m];
        for (ub, &col) in self.slack_of_ub.clone().iter().enumerate() {
            let row = self.n_eq + ub;
            if resid[row] >= 0.0 {
                self.basis[row] = col;
                self.status[col] = Status::Basic;
                self.x[col] = resid[row];
            }
        }
        for row in 0..self.m {
            if self.basis[row] == usize::MAX {
                let sign = if resid[row] >= 0.0 { 1.0 } else { -1.0 };
                let col = self.kinds.len();
                self.kinds.push(ColKind::Art(row, sign));
                self.lo.push(0.0);
                self.hi.push(f64::INFINITY);
                self.cost.push(0.0);
                self.status.push(Status::Basic);
                self.x.push(resid[row].abs());
                self.basis[row] = col;
            }
        }
        // Basis matrix is diagonal with entries +-1.
        let m = self.m;
        self.binv = vec![0.0; m * m];
        for (pos, &col) in self.basis.iter().enumerate() {
            let s = match self.kinds[col] {
                ColKind::Art(_, s) => s,
                _ => 1.0,
            };
            self.binv[pos + pos * m] = s;
        }
        self.since_refactor = 0;
    }

    #[inline]
    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        match self.kinds[j] {
            ColKind::Struct(k) => {
                let c = &self.structs[k];
                c.idx.iter().zip(&c.val).map(|(&i, &v)| y[i] * v).sum()
            }
            ColKind::Slack(r) => y[r],
            ColKind::Art(r, s) => y[r] * s,
        }
    }

    /// alpha = B^-1 a_j
    fn ftran(&self, j: usize, out: &mut [f64]) {
        let m = self.m;
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut add = |r: usize, v: f64| {
            let col = &self.binv[r * m..(r + 1) * m];
            for (o, &b) in out.iter_mut().zip(col) {
                *o += b * v;
            }
        };
        match self.kinds[j] {
            ColKind::Struct(k) => {
                let c = &self.structs[k];
                for (&i, &v) in c.idx.iter().zip(&c.val) {
                    add(i, v);
                }
            }
            ColKind::Slack(r) => add(r, 1.0),
            ColKind::Art(r, s) => add(r, s),
        }
    }

    /// y = B^-T c_B
    fn btran_cost(&self, cost: &[f64], y: &mut [f64]) {
        let m = self.m;
        for (k, yk) in y.iter_mut().enumerate() {
            let col = &self.binv[k * m..(k + 1) * m];
            *yk = self.basis.iter().zip(col).map(|(&b, &v)| cost[b] * v).sum();
        }
    }

    fn row_of_binv(&self, r: usize, out: &mut [f64]) {
        let m = self.m;
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.binv[r + k * m];
        }
    }

    fn column_dense(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.kinds[j] {
            ColKind::Struct(k) => {
                let c = &self.structs[k];
                for (&i, &v) in c.idx.iter().zip(&c.val) {
                    out[i] = v;
                }
            }
            ColKind::Slack(r) => out[r] = 1.0,
            ColKind::Art(r, s) => out[r] = s,
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        if m == 0 {
            self.since_refactor = 0;
            return Ok(());
        }
        if !self.refactor_structured() {
            self.refactor_dense()?;
        }
        self.since_refactor = 0;
        self.recompute_basics();
        Ok(())
    }

    /// Inverse through the structural block only: unit (slack and artificial)
    /// basics are eliminated by hand, leaving a k x k factorization where k
    /// is the number of basic structural columns. Returns false when the
    /// unit columns do not cover distinct rows or the block is singular.
    fn refactor_structured(&mut self) -> bool {
        let m = self.m;
        let mut unit_of_row: Vec<Option<(usize, f64)>> = vec![None; m];
        let mut struct_pos: Vec<(usize, usize)> = Vec::new();
        for (pos, &j) in self.basis.iter().enumerate() {
            let (r, s) = match self.kinds[j] {
                ColKind::Struct(k) => {
                    struct_pos.push((pos, k));
                    continue;
                }
                ColKind::Slack(r) => (r, 1.0),
                ColKind::Art(r, s) => (r, s),
            };
            if unit_of_row[r].is_some() {
                return false;
            }
            unit_of_row[r] = Some((pos, s));
        }
        let rest: Vec<usize> = (0..m).filter(|&i| unit_of_row[i].is_none()).collect();
        let k = rest.len();
        if k != struct_pos.len() {
            return false;
        }
        let mut rmap = vec![usize::MAX; m];
        for (a, &i) in rest.iter().enumerate() {
            rmap[i] = a;
        }
        let minv = if k > 0 {
            let mut mm = DMatrix::<f64>::zeros(k, k);
            for (c, &(_, sk)) in struct_pos.iter().enumerate() {
                let col = &self.structs[sk];
                for (&i, &v) in col.idx.iter().zip(&col.val) {
                    if rmap[i] != usize::MAX {
                        mm[(rmap[i], c)] += v;
                    }
                }
            }
            match mm.lu().try_inverse() {
                Some(inv) => inv,
                None => return false,
            }
        } else {
            DMatrix::zeros(0, 0)
        };
        self.binv.iter_mut().for_each(|v| *v = 0.0);
        for (a, &row) in rest.iter().enumerate() {
            let col = &mut self.binv[row * m..(row + 1) * m];
            for (c, &(pos, _)) in struct_pos.iter().enumerate() {
                col[pos] = minv[(c, a)];
            }
        }
        for (c, &(_, sk)) in struct_pos.iter().enumerate() {
            let scol = &self.structs[sk];
            for (&i, &v) in scol.idx.iter().zip(&scol.val) {
                if let Some((p, s)) = unit_of_row[i] {
                    let f = v / s;
                    for (a, &row) in rest.iter().enumerate() {
                        self.binv[row * m + p] -= f * minv[(c, a)];
                    }
                }
            }
        }
        for (i, u) in unit_of_row.iter().enumerate() {
            if let Some((p, s)) = *u {
                self.binv[i * m + p] = 1.0 / s;
            }
        }
        true
    }

    fn refactor_dense(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut bmat = DMatrix::<f64>::zeros(m, m);
        let mut col = vec![0.0; m];
        for (pos, &j) in self.basis.iter().enumerate() {
            self.column_dense(j, &mut col);
            for i in 0..m {
                bmat[(i, pos)] = col[i];
            }
        }
        let inv = bmat
            .lu()
            .try_inverse()
            .ok_or_else(|| LpError::NumericalFailure("singular basis at refactorization".into()))?;
        // nalgebra is column-major, matching our layout.
        self.binv.copy_from_slice(inv.as_slice());
        Ok(())
    }

    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut resid = self.rhs.clone();
        for j in 0..self.ncols() {
            if self.status[j] == Status::Basic {
                continue;
            }
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            match self.kinds[j] {
                ColKind::Struct(k) => {
                    let c = &self.structs[k];
                    for (&i, &v) in c.idx.iter().zip(&c.val) {
                        resid[i] -= v * xj;
                    }
                }
                ColKind::Slack(r) => resid[r] -= xj,
                ColKind::Art(r, s) => resid[r] -= s * xj,
            }
        }
        for pos in 0..m {
            let mut v = 0.0;
            for k in 0..m {
                v += self.binv[pos + k * m] * resid[k];
            }
            let b = self.basis[pos];
            self.x[b] = v;
        }
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let ar = alpha[r];
        for k in 0..m {
            let col = &mut self.binv[k * m..(k + 1) * m];
            let p = col[r] / ar;
            if p != 0.0 {
                for (i, c) in col.iter_mut().enumerate() {
                    *c -= alpha[i] * p;
                }
            }
            col[r] = p;
        }
        self.since_refactor += 1;
    }

    fn is_art(&self, j: usize) -> bool {
        matches!(self.kinds[j], ColKind::Art(..))
    }

    /// Primal simplex with the given cost vector. Assumes primal feasibility.
    fn primal(&mut self, cost: &[f64], max_iter: usize) -> Result<Outcome, LpError> {
        let m = self.m;
        let mut y = vec![0.0; m];
        let mut alpha = vec![0.0; m];
        for _ in 0..max_iter {
            if self.since_refactor >= REFACTOR_EVERY.max(self.m / 8) {
                self.refactor()?;
            }
            self.btran_cost(cost, &mut y);
            // Pricing.
            let mut enter = usize::MAX;
            let mut best = 0.0;
            let mut dir = 0.0;
            for j in 0..self.ncols() {
                let st = self.status[j];
                if st == Status::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = cost[j] - self.col_dot(j, &y);
                let (ok, dj) = match st {
                    Status::Lower => (d < -OPT_TOL, 1.0),
                    Status::Upper => (d > OPT_TOL, -1.0),
                    Status::Zero => (d.abs() > OPT_TOL, if d < 0.0 { 1.0 } else { -1.0 }),
                    Status::Basic => unreachable!(),
                };
                if !ok {
                    continue;
                }
                if self.bland {
                    enter = j;
                    dir = dj;
                    break;
                }
                if d.abs() > best {
                    best = d.abs();
                    enter = j;
                    dir = dj;
                }
            }
            if enter == usize::MAX {
                return Ok(Outcome::Optimal);
            }
            self.ftran(enter, &mut alpha);

            // Harris two-pass ratio test. Basic i changes at rate -dir*alpha_i.
            let mut tmax = f64::INFINITY;
            for i in 0..m {
                let rate = -dir * alpha[i];
                let b = self.basis[i];
                if rate < -PIVOT_TOL && self.lo[b].is_finite() {
                    tmax = tmax.min((self.x[b] - self.lo[b] + FEAS_TOL) / -rate);
                } else if rate > PIVOT_TOL && self.hi[b].is_finite() {
                    tmax = tmax.min((self.hi[b] - self.x[b] + FEAS_TOL) / rate);
                }
            }
            let own = self.hi[enter] - self.lo[enter];
            let mut leave = usize::MAX;
            let mut step = f64::INFINITY;
            if tmax.is_finite() {
                let mut best_piv = 0.0;
                let mut best_col = usize::MAX;
                for i in 0..m {
                    let rate = -dir * alpha[i];
                    let b = self.basis[i];
                    let ratio = if rate < -PIVOT_TOL && self.lo[b].is_finite() {
                        (self.x[b] - self.lo[b]) / -rate
                    } else if rate > PIVOT_TOL && self.hi[b].is_finite() {
                        (self.hi[b] - self.x[b]) / rate
                    } else {
                        continue;
                    };
                    if ratio <= tmax {
                        let better = if self.bland { b < best_col } else { rate.abs() > best_piv };
                        if better {
                            best_piv = rate.abs();
                            best_col = b;
                            leave = i;
                            step = ratio.max(0.0);
                        }
                    }
                }
            }
            if own.is_finite() && own <= step {
                // Bound flip.
                let t = own;
                for i in 0..m {
                    let b = self.basis[i];
                    self.x[b] -= t * dir * alpha[i];
                }
                if dir > 0.0 {
                    self.status[enter] = Status::Upper;
                    self.x[enter] = self.hi[enter];
                } else {
                    self.status[enter] = Status::Lower;
                    self.x[enter] = self.lo[enter];
                }
                continue;
            }
            if leave == usize::MAX {
                return Ok(Outcome::Unbounded);
            }
            if step <= 1e-12 {
                self.degenerate += 1;
                if self.degenerate > BLAND_AFTER_DEGENERATE {
                    self.bland = true;
                }
            }
            for i in 0..m {
                let b = self.basis[i];
                self.x[b] -= step * dir * alpha[i];
            }
            self.x[enter] += step * dir;
            let out = self.basis[leave];
            let rate = -dir * alpha[leave];
            if rate < 0.0 {
                self.x[out] = self.lo[out];
                self.status[out] = Status::Lower;
            } else {
                self.x[out] = self.hi[out];
                self.status[out] = Status::Upper;
            }
            if !self.lo[out].is_finite() && !self.hi[out].is_finite() {
                self.status[out] = Status::Zero;
                self.x[out] = 0.0;
            }
            self.status[enter] = Status::Basic;
            self.basis[leave] = enter;
            self.pivot(leave, &alpha);
        }
        Err(LpError::NumericalFailure("iteration limit reached in primal simplex".into()))
    }

    fn max_primal_infeasibility(&self) -> f64 {
        let mut worst = 0.0f64;
        for &b in &self.basis {
            let v = self.x[b];
            worst = worst.max(self.lo[b] - v).max(v - self.hi[b]);
        }
        worst
    }

    fn dual_feasible(&self, cost: &[f64]) -> bool {
        let mut y = vec![0.0; self.m];
        self.btran_cost(cost, &mut y);
        for j in 0..self.ncols() {
            if self.status[j] == Status::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = cost[j] - self.col_dot(j, &y);
            let bad = match self.status[j] {
                Status::Lower => d < -1e-7,
                Status::Upper => d > 1e-7,
                Status::Zero => d.abs() > 1e-7,
                Status::Basic => false,
            };
            if bad {
                return false;
            }
        }
        true
    }

    /// Dual simplex from a dual-feasible basis.
    fn dual(&mut self, cost: &[f64], max_iter: usize) -> Result<Outcome, LpError> {
        let m = self.m;
        let mut y = vec![0.0; m];
        let mut rho = vec![0.0; m];
        let mut alpha = vec![0.0; m];
        let mut d = vec![0.0; self.ncols()];
        let mut stalled = 0usize;
        let mut bland = false;
        for _ in 0..max_iter {
            if self.since_refactor >= REFACTOR_EVERY.max(self.m / 8) {
                self.refactor()?;
            }
            // Leaving row: largest bound violation, or the lowest column index
            // once the dual objective has stalled.
            let mut r = usize::MAX;
            let mut worst = FEAS_TOL;
            let mut below = false;
            for i in 0..m {
                let b = self.basis[i];
                let v = self.x[b];
                let (viol, lo_side) =
                    if self.lo[b] - v > v - self.hi[b] { (self.lo[b] - v, true) } else { (v - self.hi[b], false) };
                if viol <= FEAS_TOL {
                    continue;
                }
                let take = if bland { r == usize::MAX || b < self.basis[r] } else { viol > worst };
                if take {
                    worst = viol;
                    r = i;
                    below = lo_side;
                }
            }
            if r == usize::MAX {
                return Ok(Outcome::Optimal);
            }
            self.btran_cost(cost, &mut y);
            self.row_of_binv(r, &mut rho);
            // x_Br changes by -alpha_rj * dx_j. Need increase if below.
            let mut enter = usize::MAX;
            let mut best_ratio = f64::INFINITY;
            let mut best_piv = 0.0;
            // Harris pass 1
            let mut cand: Vec<(usize, f64, f64)> = Vec::new();
            for j in 0..self.ncols() {
                let st = self.status[j];
                if st == Status::Basic || self.lo[j] == self.hi[j] || self.is_art(j) {
                    continue;
                }
                let arj = self.col_dot(j, &rho);
                if arj.abs() < PIVOT_TOL {
                    continue;
                }
                let dj = cost[j] - self.col_dot(j, &y);
                d[j] = dj;
                // direction of x_j that moves x_Br the right way
                let want_up = if below { arj < 0.0 } else { arj > 0.0 };
                let ok = match st {
                    Status::Lower => want_up,
                    Status::Upper => !want_up,
                    Status::Zero => true,
                    Status::Basic => false,
                };
                if !ok {
                    continue;
                }
                let ratio = match st {
                    Status::Zero => dj.abs() / arj.abs(),
                    _ => (dj.abs() + OPT_TOL) / arj.abs(),
                };
                best_ratio = best_ratio.min(ratio);
                cand.push((j, dj.abs() / arj.abs(), arj.abs()));
            }
            if cand.is_empty() {
                return Ok(Outcome::Infeasible);
            }
            let mut step = 0.0;
            for &(j, ratio, piv) in &cand {
                if ratio <= best_ratio {
                    let better = if bland { enter == usize::MAX || j < enter } else { piv > best_piv };
                    if better {
                        best_piv = piv;
                        enter = j;
                        step = ratio;
                    }
                }
            }
            if step <= 1e-12 {
                stalled += 1;
                if stalled > BLAND_AFTER_DEGENERATE {
                    bland = true;
                }
            } else {
                stalled = 0;
            }
            self.ftran(enter, &mut alpha);
            let ar = alpha[r];
            if ar.abs() < PIVOT_TOL {
                self.refactor()?;
                continue;
            }
            let out = self.basis[r];
            let target = if below { self.lo[out] } else { self.hi[out] };
            // x_out(t) = x_out - alpha_r * t where t is the change of x_enter.
            let t = (self.x[out] - target) / ar;
            for i in 0..m {
                let b = self.basis[i];
                self.x[b] -= alpha[i] * t;
            }
            self.x[enter] += t;
            self.x[out] = target;
            self.status[out] = if below { Status::Lower } else { Status::Upper };
            self.status[enter] = Status::Basic;
            self.basis[r] = enter;
            self.pivot(r, &alpha);
        }
        Err(LpError::NumericalFailure("iteration limit reached in dual simplex".into()))
    }

    fn iter_budget(&self) -> usize {
        50 * (self.m + self.ncols()) + 20_000
    }

    /// Solve from the current state.
    pub fn solve(&mut self) -> Result<LpStatus, LpError> {
        let budget = self.iter_budget();
        if self.solved {
            // Warm start: basis is primal- or dual-feasible from a previous solve.
            let cost = self.cost.clone();
            let mut warm = true;
            if self.max_primal_infeasibility() > FEAS_TOL && self.dual_feasible(&cost) {
                // Infeasibility claims and numerical trouble are settled by a
                // cold start from the slack basis.
                warm = matches!(self.dual(&cost, budget), Ok(Outcome::Optimal));
            }
            if warm && self.max_primal_infeasibility() <= FEAS_TOL {
                if let Ok(status @ (LpStatus::Optimal | LpStatus::Unbounded)) = self.finish_phase2(budget) {
                    return Ok(status);
                }
            }
            // Fall back to a cold start.
            self.cold_reset();
        }
        self.solved = true;
        // Phase 1
        let has_art = self.basis.iter().any(|&b| self.is_art(b));
        if has_art {
            let mut c1 = vec![0.0; self.ncols()];
            for j in 0..self.ncols() {
                if self.is_art(j) {
                    c1[j] = 1.0;
                }
            }
            match self.primal(&c1, budget)? {
                Outcome::Optimal => {}
                _ => return Err(LpError::NumericalFailure("phase 1 did not terminate".into())),
            }
            self.refactor()?;
            let infeas: f64 = (0..self.ncols()).filter(|&j| self.is_art(j)).map(|j| self.x[j].abs()).sum();
            if infeas > 1e-7 {
                return Ok(LpStatus::Infeasible);
            }
            self.retire_artificials()?;
        }
        self.finish_phase2(budget)
    }

    fn cold_reset(&mut self) {
        // Drop artificial columns and rebuild the starting basis.
        let keep = self.kinds.iter().position(|k| matches!(k, ColKind::Art(..))).unwrap_or(self.kinds.len());
        // Artificials are appended after all slacks that existed at
        // construction; slacks added later sit after them, so filter.
        let mut kinds = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut cost = Vec::new();
        let mut remap = vec![usize::MAX; self.kinds.len()];
        for j in 0..self.kinds.len() {
            if j >= keep && self.is_art(j) {
                continue;
            }
            remap[j] = kinds.len();
            kinds.push(self.kinds[j].clone());
            lo.push(self.lo[j]);
            hi.push(self.hi[j]);
            cost.push(self.cost[j]);
        }
        for s in self.slack_of_ub.iter_mut() {
            *s = remap[*s];
        }
        let n = kinds.len();
        self.kinds = kinds;
        self.lo = lo;
        self.hi = hi;
        self.cost = cost;
        self.status = vec![Status::Lower; n];
        self.x = vec![0.0; n];
        self.degenerate = 0;
        self.bland = false;
        self.initial_basis();
    }

    fn retire_artificials(&mut self) -> Result<(), LpError> {
        let m = self.m;
        for j in 0..self.ncols() {
            if self.is_art(j) {
                self.hi[j] = 0.0;
                self.lo[j] = 0.0;
                if self.status[j] != Status::Basic {
                    self.x[j] = 0.0;
                    self.status[j] = Status::Lower;
                }
            }
        }
        let mut rho = vec![0.0; m];
        let mut alpha = vec![0.0; m];
        for pos in 0..m {
            let b = self.basis[pos];
            if !self.is_art(b) {
                continue;
            }
            self.row_of_binv(pos, &mut rho);
            let mut best = 1e-7;
            let mut pick = usize::MAX;
            for j in 0..self.ncols() {
                if self.status[j] == Status::Basic || self.is_art(j) {
                    continue;
                }
                let a = self.col_dot(j, &rho).abs();
                if a > best {
                    best = a;
                    pick = j;
                }
            }
            if pick != usize::MAX {
                self.ftran(pick, &mut alpha);
                self.status[b] = Status::Lower;
                self.x[b] = 0.0;
                self.status[pick] = Status::Basic;
                self.basis[pos] = pick;
                self.pivot(pos, &alpha);
            }
        }
        self.refactor()
    }

    fn finish_phase2(&mut self, budget: usize) -> Result<LpStatus, LpError> {
        let cost = self.cost.clone();
        for _round in 0..4 {
            match self.primal(&cost, budget)? {
                Outcome::Unbounded => return Ok(LpStatus::Unbounded),
                Outcome::Infeasible => return Ok(LpStatus::Infeasible),
                Outcome::Optimal => {}
            }
            self.refactor()?;
            if self.max_primal_infeasibility() <= FEAS_TOL {
                return Ok(LpStatus::Optimal);
            }
            // Drift: repair with the dual simplex, then re-check optimality.
            if let Outcome::Infeasible = self.dual(&cost, budget)? {
                return Ok(LpStatus::Infeasible);
            }
            self.refactor()?;
        }
        if self.max_primal_infeasibility() <= 1e-7 {
            Ok(LpStatus::Optimal)
        } else {
            Err(LpError::NumericalFailure("could not restore primal feasibility".into()))
        }
    }

    /// Append inequality rows `a x <= b` (original, unscaled units).
    pub fn add_le_rows(&mut self, rows: &[(Vec<(usize, f64)>, f64)]) {
        for (terms, b) in rows {
            let (mut mx, mut mn) = (0.0f64, f64::INFINITY);
            for &(j, v) in terms {
                let a = (v * self.col_scale[j]).abs();
                if a > 0.0 {
                    mx = mx.max(a);
                    mn = mn.min(a);
                }
            }
            let rs = if mx > 0.0 { pow2_round(1.0 / (mx * mn).sqrt()) } else { 1.0 };
            let row = self.m;
            let ub_index = self.slack_of_ub.len();
            for &(j, v) in terms {
                if v != 0.0 {
                    self.structs[j].idx.push(row);
                    self.structs[j].val.push(v * rs * self.col_scale[j]);
                }
            }
            self.rhs.push(b * rs);
            self.row_scale.push(rs);
            self.row_origin.push(RowOrigin::Ub(ub_index));
            let col = self.kinds.len();
            self.kinds.push(ColKind::Slack(row));
            self.slack_of_ub.push(col);
            self.lo.push(0.0);
            self.hi.push(f64::INFINITY);
            self.cost.push(0.0);
            self.status.push(Status::Basic);

            // Grow the inverse: new row of B is the new constraint restricted to basics.
            let m = self.m;
            let m1 = m + 1;
            let mut arow = vec![0.0; m];
            for (pos, &bcol) in self.basis.iter().enumerate() {
                if let ColKind::Struct(k) = self.kinds[bcol] {
                    let c = &self.structs[k];
                    if let Some(p) = c.idx.iter().rposition(|&i| i == row) {
                        arow[pos] = c.val[p];
                    }
                }
            }
            // last row of new inverse = -arow^T Binv
            let mut last = vec![0.0; m];
            for k in 0..m {
                let col = &self.binv[k * m..(k + 1) * m];
                last[k] = -arow.iter().zip(col).map(|(a, b)| a * b).sum::<f64>();
            }
            let mut nb = vec![0.0; m1 * m1];
            for k in 0..m {
                nb[k * m1..k * m1 + m].copy_from_slice(&self.binv[k * m..(k + 1) * m]);
                nb[k * m1 + m] = last[k];
            }
            nb[m * m1 + m] = 1.0;
            self.binv = nb;
            self.basis.push(col);
            self.m = m1;
            // slack value
            let mut v = b * rs;
            for &(j, a) in terms {
                v -= a * rs * self.col_scale[j] * self.x[j];
            }
            self.x.push(v);
        }
    }

    /// Overwrite the right-hand side (original units, equality rows then inequality rows).
    pub fn set_rhs(&mut self, b_eq: &[f64], b_ub: &[f64]) {
        for i in 0..self.m {
            let v = match self.row_origin[i] {
                RowOrigin::Eq(k) => b_eq[k],
                RowOrigin::Ub(k) => b_ub[k],
            };
            self.rhs[i] = v * self.row_scale[i];
        }
        self.recompute_basics();
    }

    /// Right-hand sides of all inequality rows in original units.
    pub fn ub_rhs_original(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.slack_of_ub.len()];
        for i in 0..self.m {
            if let RowOrigin::Ub(k) = self.row_origin[i] {
                out[k] = self.rhs[i] / self.row_scale[i];
            }
        }
        out
    }

    pub fn solution(&self, status: LpStatus, lp_cost: &[f64]) -> LpSolution {
        let n = self.n_struct;
        let x: Vec<f64> = (0..n).map(|j| self.x[j] * self.col_scale[j]).collect();
        let mut y = vec![0.0; self.m];
        self.btran_cost(&self.cost, &mut y);
        let n_ub = self.slack_of_ub.len();
        let mut duals_eq = vec![0.0; self.n_eq];
        let mut duals_ub = vec![0.0; n_ub];
        for i in 0..self.m {
            let v = y[i] * self.row_scale[i];
            match self.row_origin[i] {
                RowOrigin::Eq(k) => duals_eq[k] = v,
                RowOrigin::Ub(k) => duals_ub[k] = v,
            }
        }
        let objective = lp_cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        // Column ids: structural j, inequality slack n + k, artificial n + n_ub + row.
        let mut col_id = vec![usize::MAX; self.ncols()];
        for j in 0..n {
            col_id[j] = j;
        }
        for (k, &c) in self.slack_of_ub.iter().enumerate() {
            col_id[c] = n + k;
        }
        for (j, kind) in self.kinds.iter().enumerate() {
            if let ColKind::Art(row, _) = kind {
                col_id[j] = n + n_ub + row;
            }
        }
        let mut basic: Vec<usize> = self.basis.iter().map(|&b| col_id[b]).collect();
        basic.sort_unstable();
        let mut at_upper: Vec<usize> = (0..self.ncols())
            .filter(|&j| self.status[j] == Status::Upper && !self.is_art(j))
            .map(|j| col_id[j])
            .collect();
        at_upper.sort_unstable();
        LpSolution { status, x, duals_eq, duals_ub, objective, basis: Basis { basic, at_upper } }
    }
}
