use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{solve_lp, LinearProgram, LpError, LpStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyhedronError {
    #[error("polyhedron is empty")]
    EmptyPolyhedron,
    #[error("polygon is unbounded")]
    Unbounded2D,
    #[error("expected a 2-dimensional polyhedron, got dimension {0}")]
    NotTwoDimensional(usize),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// `{x : A x <= b}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
}

const FEAS_TOL: f64 = 1e-9;
const CENTER_RADIUS_CAP: f64 = 1e6;

impl Polyhedron {
    pub fn new(a: DMatrix<f64>, b: Vec<f64>) -> Self {
        assert_eq!(a.nrows(), b.len(), "row count of A and b differ");
        Polyhedron { a, b }
    }

    /// Whole space in `dim` dimensions.
    pub fn universe(dim: usize) -> Self {
        Polyhedron { a: DMatrix::zeros(0, dim), b: Vec::new() }
    }

    /// Axis-aligned box.
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Self {
        let d = lower.len();
        let mut a = DMatrix::zeros(2 * d, d);
        let mut b = Vec::with_capacity(2 * d);
        for i in 0..d {
            a[(2 * i, i)] = 1.0;
            b.push(upper[i]);
            a[(2 * i + 1, i)] = -1.0;
            b.push(-lower[i]);
        }
        Polyhedron { a, b }
    }

    pub fn from_rows(dim: usize, rows: &[(Vec<f64>, f64)]) -> Self {
        let mut a = DMatrix::zeros(rows.len(), dim);
        for (i, (r, _)) in rows.iter().enumerate() {
            for j in 0..dim {
                a[(i, j)] = r[j];
            }
        }
        Polyhedron { a, b: rows.iter().map(|r| r.1).collect() }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.a.row(i).iter().copied().collect()
    }

    pub fn push_row(&mut self, row: &[f64], rhs: f64) {
        let n = self.a.nrows();
        let a = std::mem::replace(&mut self.a, DMatrix::zeros(0, 0));
        let mut a = a.insert_row(n, 0.0);
        for (j, v) in row.iter().enumerate() {
            a[(n, j)] = *v;
        }
        self.a = a;
        self.b.push(rhs);
    }

    pub fn intersect(&self, other: &Polyhedron) -> Polyhedron {
        assert_eq!(self.dim(), other.dim());
        let d = self.dim();
        let m = self.num_rows() + other.num_rows();
        let mut a = DMatrix::zeros(m, d);
        a.rows_mut(0, self.num_rows()).copy_from(&self.a);
        a.rows_mut(self.num_rows(), other.num_rows()).copy_from(&other.a);
        let mut b = self.b.clone();
        b.extend_from_slice(&other.b);
        Polyhedron { a, b }
    }

    /// Row residual `a_i x - b_i`.
    pub fn slack(&self, i: usize, x: &[f64]) -> f64 {
        let r: f64 = self.a.row(i).iter().zip(x).map(|(a, v)| a * v).sum();
        r - self.b[i]
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        (0..self.num_rows()).map(|i| self.slack(i, x)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        self.contains(x, FEAS_TOL)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        (0..self.num_rows()).all(|i| self.slack(i, x) <= tol)
    }

    /// Largest inscribed ball (center, radius); `None` when empty. Radius is
    /// capped for unbounded sets.
    pub fn chebyshev_center(&self) -> Result<Option<(Vec<f64>, f64)>, PolyhedronError> {
        let d = self.dim();
        let m = self.num_rows();
        let mut lp = LinearProgram::new(d + 1);
        lp.lower = vec![f64::NEG_INFINITY; d + 1];
        lp.upper = vec![f64::INFINITY; d + 1];
        lp.lower[d] = 0.0;
        lp.upper[d] = CENTER_RADIUS_CAP;
        lp.cost[d] = -1.0;
        let mut a = DMatrix::zeros(m, d + 1);
        for i in 0..m {
            let mut nrm = 0.0;
            for j in 0..d {
                a[(i, j)] = self.a[(i, j)];
                nrm += self.a[(i, j)] * self.a[(i, j)];
            }
            a[(i, d)] = nrm.sqrt();
        }
        lp.a_ub = a;
        lp.b_ub = self.b.clone();
        let sol = solve_lp(&lp)?;
        match sol.status {
            LpStatus::Optimal => {
                let r = sol.x[d];
                Ok(Some((sol.x[..d].to_vec(), r)))
            }
            LpStatus::Infeasible => Ok(None),
            LpStatus::Unbounded => {
                Err(LpError::NumericalFailure("capped Chebyshev problem reported unbounded".into()).into())
            }
        }
    }

    pub fn is_empty(&self) -> Result<bool, PolyhedronError> {
        Ok(self.chebyshev_center()?.is_none())
    }

    /// Maximize `dir' x` over the set. `None` if unbounded, error if empty.
    pub fn support(&self, dir: &[f64]) -> Result<Option<(f64, Vec<f64>)>, PolyhedronError> {
        let d = self.dim();
        let mut lp = LinearProgram::new(d);
        lp.lower = vec![f64::NEG_INFINITY; d];
        lp.cost = dir.iter().map(|v| -v).collect();
        lp.a_ub = self.a.clone();
        lp.b_ub = self.b.clone();
        let sol = solve_lp(&lp)?;
        match sol.status {
            LpStatus::Optimal => Ok(Some((-sol.objective, sol.x))),
            LpStatus::Unbounded => Ok(None),
            LpStatus::Infeasible => Err(PolyhedronError::EmptyPolyhedron),
        }
    }

    /// Minimal representation: rows normalized to unit norm, duplicates and
    /// redundant rows dropped. Row order is deterministic.
    pub fn remove_redundant_rows(&self) -> Result<Polyhedron, PolyhedronError> {
        Ok(self.reduce()?.0)
    }

    /// Like [`Polyhedron::remove_redundant_rows`], also returning the
    /// Chebyshev center and radius.
    pub fn reduce(&self) -> Result<(Polyhedron, Vec<f64>, f64), PolyhedronError> {
        let d = self.dim();
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(self.num_rows());
        for i in 0..self.num_rows() {
            let r = self.row(i);
            let nrm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm < 1e-12 {
                if self.b[i] < -FEAS_TOL {
                    return Err(PolyhedronError::EmptyPolyhedron);
                }
                continue;
            }
            rows.push((r.iter().map(|v| v / nrm).collect(), self.b[i] / nrm));
        }
        rows.sort_by(|x, y| {
            for (p, q) in x.0.iter().zip(&y.0) {
                match p.partial_cmp(q).unwrap() {
                    std::cmp::Ordering::Equal => {}
                    o => return o,
                }
            }
            x.1.partial_cmp(&y.1).unwrap()
        });
        let mut dedup: Vec<(Vec<f64>, f64)> = Vec::with_capacity(rows.len());
        for r in rows {
            if let Some(last) = dedup.last_mut() {
                if last.0.iter().zip(&r.0).all(|(p, q)| (p - q).abs() < 1e-12) {
                    last.1 = last.1.min(r.1);
                    continue;
                }
            }
            dedup.push(r);
        }
        let base = Polyhedron::from_rows(d, &dedup);
        let (center, radius) = base.chebyshev_center()?.ok_or(PolyhedronError::EmptyPolyhedron)?;

        // Work in coordinates centered at an interior point so the slack basis
        // is feasible for every test problem.
        let shifted: Vec<f64> =
            dedup.iter().map(|(r, b)| b - r.iter().zip(&center).map(|(p, c)| p * c).sum::<f64>()).collect();
        let mut keep = vec![true; dedup.len()];
        // Rows hit first by a ray from the center are facets; no LP needed.
        let mut known_facet = vec![false; dedup.len()];
        if radius > FEAS_TOL {
            for i in 0..dedup.len() {
                let dir = &dedup[i].0;
                let mut best = f64::INFINITY;
                let mut second = f64::INFINITY;
                let mut hit = usize::MAX;
                for (k, (r, _)) in dedup.iter().enumerate() {
                    let rate: f64 = r.iter().zip(dir).map(|(p, q)| p * q).sum();
                    if rate > 1e-12 {
                        let t = shifted[k] / rate;
                        if t < best {
                            second = best;
                            best = t;
                            hit = k;
                        } else if t < second {
                            second = t;
                        }
                    }
                }
                if hit != usize::MAX && second - best > 1e-9 * (1.0 + best.abs()) {
                    known_facet[hit] = true;
                }
            }
        }
        for i in 0..dedup.len() {
            if known_facet[i] {
                continue;
            }
            let others: Vec<usize> = (0..dedup.len()).filter(|&k| k != i && keep[k]).collect();
            let mut lp = LinearProgram::new(d);
            lp.lower = vec![f64::NEG_INFINITY; d];
            lp.cost = dedup[i].0.iter().map(|v| -v).collect();
            let mut a = DMatrix::zeros(others.len(), d);
            for (r, &k) in others.iter().enumerate() {
                for j in 0..d {
                    a[(r, j)] = dedup[k].0[j];
                }
            }
            lp.a_ub = a;
            lp.b_ub = others.iter().map(|&k| shifted[k].max(0.0)).collect();
            let sol = solve_lp(&lp)?;
            let redundant = match sol.status {
                LpStatus::Optimal => -sol.objective <= shifted[i] + FEAS_TOL,
                LpStatus::Unbounded => false,
                LpStatus::Infeasible => {
                    if radius > FEAS_TOL {
                        return Err(LpError::NumericalFailure(
                            "redundancy subproblem infeasible for a nonempty set".into(),
                        )
                        .into());
                    }
                    false
                }
            };
            if redundant {
                keep[i] = false;
            }
        }
        let kept: Vec<(Vec<f64>, f64)> = dedup.into_iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r).collect();
        Ok((Polyhedron::from_rows(d, &kept), center, radius))
    }

    /// Vertices of a bounded 2-D polyhedron in counter-clockwise order.
    /// Degenerate sets yield one or two points.
    pub fn vertices_2d(&self) -> Result<Vec<[f64; 2]>, PolyhedronError> {
        if self.dim() != 2 {
            return Err(PolyhedronError::NotTwoDimensional(self.dim()));
        }
        let mut bounds = [0.0; 4];
        for (k, dir) in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]].iter().enumerate() {
            match self.support(dir)? {
                Some((v, _)) => bounds[k] = v,
                None => return Err(PolyhedronError::Unbounded2D),
            }
        }
        let (xmax, xmin, ymax, ymin) = (bounds[0], -bounds[1], bounds[2], -bounds[3]);
        let mut poly = vec![[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]];
        for i in 0..self.num_rows() {
            let (a0, a1, b) = (self.a[(i, 0)], self.a[(i, 1)], self.b[i]);
            let nrm = (a0 * a0 + a1 * a1).sqrt();
            if nrm < 1e-12 {
                continue;
            }
            poly = clip(&poly, a0 / nrm, a1 / nrm, b / nrm);
            if poly.is_empty() {
                break;
            }
        }
        Ok(simplify_ring(poly))
    }

    /// Area of a bounded 2-D polyhedron.
    pub fn area_2d(&self) -> Result<f64, PolyhedronError> {
        Ok(polygon_area(&self.vertices_2d()?))
    }
}

/// Vertices of `{x : a . x <= b}` intersected with the box `[lo, hi]`, by
/// clipping. Rows with a zero normal are skipped.
pub fn clip_box_2d(lo: [f64; 2], hi: [f64; 2], rows: &[([f64; 2], f64)]) -> Vec<[f64; 2]> {
    let mut poly = vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    for (a, b) in rows {
        let nrm = (a[0] * a[0] + a[1] * a[1]).sqrt();
        if nrm < 1e-12 {
            continue;
        }
        poly = clip(&poly, a[0] / nrm, a[1] / nrm, b / nrm);
        if poly.is_empty() {
            break;
        }
    }
    simplify_ring(poly)
}

/// Keep the part of `poly` with `a0 x + a1 y <= b`.
fn clip(poly: &[[f64; 2]], a0: f64, a1: f64, b: f64) -> Vec<[f64; 2]> {
    let n = poly.len();
    if n == 0 {
        return Vec::new();
    }
    let val = |p: &[f64; 2]| a0 * p[0] + a1 * p[1] - b;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..n {
        let p = poly[k];
        let q = poly[(k + 1) % n];
        let (vp, vq) = (val(&p), val(&q));
        let pin = vp <= FEAS_TOL;
        let qin = vq <= FEAS_TOL;
        if pin {
            out.push(p);
        }
        if pin != qin && (vp - vq).abs() > 0.0 {
            let t = vp / (vp - vq);
            if t > 0.0 && t < 1.0 {
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

/// Shoelace area of a ring (positive when counter-clockwise).
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for k in 0..n {
        let p = poly[k];
        let q = poly[(k + 1) % n];
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s
}

fn simplify_ring(mut poly: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let close = |p: &[f64; 2], q: &[f64; 2]| (p[0] - q[0]).abs() <= 1e-9 && (p[1] - q[1]).abs() <= 1e-9;
    // drop repeated points
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(poly.len());
    for p in poly.drain(..) {
        if out.last().is_some_and(|q| close(q, &p)) {
            continue;
        }
        out.push(p);
    }
    while out.len() > 1 && close(&out[0], out.last().unwrap()) {
        out.pop();
    }
    // drop collinear points
    let mut changed = true;
    while changed && out.len() > 2 {
        changed = false;
        let n = out.len();
        for k in 0..n {
            let p = out[(k + n - 1) % n];
            let q = out[k];
            let r = out[(k + 1) % n];
            let cross = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
            let scale = ((r[0] - p[0]).hypot(r[1] - p[1])).max(1.0);
            if cross.abs() <= 1e-12 * scale {
                out.remove(k);
                changed = true;
                break;
            }
        }
    }
    if out.len() == 2 && close(&out[0], &out[1]) {
        out.pop();
    }
    if out.len() >= 3 && polygon_area(&out) < 0.0 {
        out.reverse();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Polyhedron {
        Polyhedron::from_box(&[0.0, 0.0], &[1.0, 2.0])
    }

    #[test]
    fn box_vertices_ccw() {
        let v = square().vertices_2d().unwrap();
        assert_eq!(v.len(), 4);
        assert!((polygon_area(&v) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_row_removed() {
        let mut p = square();
        p.push_row(&[1.0, 1.0], 10.0);
        p.push_row(&[2.0, 0.0], 2.0);
        let r = p.remove_redundant_rows().unwrap();
        assert_eq!(r.num_rows(), 4);
        let again = r.remove_redundant_rows().unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn empty_detected() {
        let mut p = square();
        p.push_row(&[1.0, 0.0], -1.0);
        assert_eq!(p.remove_redundant_rows(), Err(PolyhedronError::EmptyPolyhedron));
    }

    #[test]
    fn unbounded_detected() {
        let p = Polyhedron::from_rows(2, &[(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 1.0)]);
        assert_eq!(p.vertices_2d(), Err(PolyhedronError::Unbounded2D));
    }

    #[test]
    fn segment_and_point() {
        let seg = Polyhedron::from_box(&[0.0, 1.0], &[3.0, 1.0]);
        assert_eq!(seg.vertices_2d().unwrap().len(), 2);
        let pt = Polyhedron::from_box(&[2.0, 1.0], &[2.0, 1.0]);
        assert_eq!(pt.vertices_2d().unwrap(), vec![[2.0, 1.0]]);
    }

    #[test]
    fn chebyshev_of_square() {
        let (c, r) = Polyhedron::from_box(&[0.0, 0.0], &[2.0, 2.0]).chebyshev_center().unwrap().unwrap();
        assert!((r - 1.0).abs() < 1e-9);
        assert!((c[0] - 1.0).abs() < 1e-9 && (c[1] - 1.0).abs() < 1e-9);
    }
}
