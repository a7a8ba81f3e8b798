use serde::{Deserialize, Serialize};

use crate::lp::Polyhedron;

/// `a + b_p * P + b_q * Q`, EUR with P in kW and Q in kvar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineCost {
    pub a: f64,
    pub b_p: f64,
    pub b_q: f64,
}

impl AffineCost {
    pub fn at(&self, p: f64, q: f64) -> f64 {
        self.a + self.b_p * p + self.b_q * q
    }
}

/// One projected critical region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPiece {
    pub poly: Polyhedron,
    pub cost: AffineCost,
    pub region: usize,
    /// Vertices (ccw); a single point or a segment for degenerate pieces.
    pub vertices: Vec<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChartSource {
    /// Projected from the offline region store; piece regions index the store.
    Store,
    /// Built by a direct two-parameter solve.
    Fallback,
}

/// Flexibility chart of one node: union of polygons in (P_grid, Q_grid) with
/// affine costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlexChart2D {
    pub node: usize,
    pub pieces: Vec<ChartPiece>,
    pub source: ChartSource,
}

impl FlexChart2D {
    /// Single-piece chart over an axis-aligned box.
    pub fn from_box(node: usize, lo: [f64; 2], hi: [f64; 2], cost: AffineCost) -> Self {
        let poly = Polyhedron::from_box(&lo, &hi);
        let vertices = convex_hull(&[lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]]);
        FlexChart2D {
            node,
            pieces: vec![ChartPiece { poly, cost, region: 0, vertices }],
            source: ChartSource::Fallback,
        }
    }

    /// Fixed injection: a zero-area chart at `(p, q)` with constant cost.
    pub fn point(node: usize, p: f64, q: f64, cost: f64) -> Self {
        Self::from_box(node, [p, q], [p, q], AffineCost { a: cost, b_p: 0.0, b_q: 0.0 })
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn vertices(&self) -> Vec<[f64; 2]> {
        self.pieces.iter().flat_map(|p| p.vertices.iter().copied()).collect()
    }

    /// Convex hull of the union (ccw).
    pub fn hull(&self) -> Vec<[f64; 2]> {
        convex_hull(&self.vertices())
    }

    /// Half-planes `a . (P, Q) <= b` describing the hull, including
    /// degenerate (point or segment) hulls.
    pub fn hull_rows(&self) -> Vec<([f64; 2], f64)> {
        hull_rows(&self.hull())
    }

    pub fn contains(&self, p: f64, q: f64, tol: f64) -> bool {
        self.hull_rows().iter().all(|(a, b)| a[0] * p + a[1] * q <= b + tol)
    }

    /// Cost at a point: the containing piece with the lowest cost, ties to
    /// the lowest region id.
    pub fn cost_at(&self, p: f64, q: f64, tol: f64) -> Option<f64> {
        self.piece_at(p, q, tol).map(|k| self.pieces[k].cost.at(p, q))
    }

    pub fn piece_at(&self, p: f64, q: f64, tol: f64) -> Option<usize> {
        let mut best: Option<(f64, usize, usize)> = None;
        for (k, piece) in self.pieces.iter().enumerate() {
            if piece.poly.contains(&[p, q], tol) {
                let c = piece.cost.at(p, q);
                let better = match best {
                    None => true,
                    Some((bc, br, _)) => c < bc - 1e-12 || (c <= bc + 1e-12 && piece.region < br),
                };
                if better {
                    best = Some((c, piece.region, k));
                }
            }
        }
        best.map(|b| b.2)
    }

    /// Minimum cost over the chart (attained at a piece vertex).
    pub fn min_cost(&self) -> Option<(f64, [f64; 2])> {
        let mut best: Option<(f64, [f64; 2])> = None;
        for piece in &self.pieces {
            for v in &piece.vertices {
                let c = piece.cost.at(v[0], v[1]);
                if best.is_none_or(|(b, _)| c < b) {
                    best = Some((c, *v));
                }
            }
        }
        best
    }

    pub fn bbox(&self) -> Option<([f64; 2], [f64; 2])> {
        let v = self.vertices();
        if v.is_empty() {
            return None;
        }
        let mut lo = v[0];
        let mut hi = v[0];
        for p in &v {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Some((lo, hi))
    }
}

/// Andrew's monotone chain; collinear points dropped. Coordinates are
/// snapped to a 1e-10 relative grid first so that vertices differing in the
/// last bits do not break the chain.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let scale = points.iter().fold(1.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
    let step = 1e-10 * scale;
    let snap = |v: f64| {
        let r = (v / step).round() * step;
        if r == 0.0 {
            0.0
        } else {
            r
        }
    };
    let mut pts: Vec<[f64; 2]> = points.iter().map(|p| [snap(p[0]), snap(p[1])]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let eps = 1e-12 * scale * scale;
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= eps {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= eps {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() == 2 && (lower[0][0] - lower[1][0]).abs() <= 1e-12 && (lower[0][1] - lower[1][1]).abs() <= 1e-12 {
        lower.pop();
    }
    lower
}

/// Unit-normal half-planes of a ccw hull. A point gives four box rows, a
/// segment two opposite rows plus two end caps.
pub fn hull_rows(hull: &[[f64; 2]]) -> Vec<([f64; 2], f64)> {
    match hull.len() {
        0 => Vec::new(),
        1 => {
            let [x, y] = hull[0];
            vec![([1.0, 0.0], x), ([-1.0, 0.0], -x), ([0.0, 1.0], y), ([0.0, -1.0], -y)]
        }
        2 => {
            let (a, b) = (hull[0], hull[1]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            let t = [d[0] / len, d[1] / len];
            let n = [-t[1], t[0]];
            let dot = |u: [f64; 2], v: [f64; 2]| u[0] * v[0] + u[1] * v[1];
            vec![(n, dot(n, a)), ([-n[0], -n[1]], -dot(n, a)), (t, dot(t, b)), ([-t[0], -t[1]], -dot(t, a))]
        }
        k => (0..k)
            .map(|i| {
                let a = hull[i];
                let b = hull[(i + 1) % k];
                // outward normal of a ccw edge
                let n = [b[1] - a[1], a[0] - b[0]];
                let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
                let n = [n[0] / len, n[1] / len];
                (n, n[0] * a[0] + n[1] * a[1])
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_square_with_interior_point() {
        let h = convex_hull(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0]]);
        assert_eq!(h.len(), 4);
        let rows = hull_rows(&h);
        assert!(rows.iter().all(|(a, b)| a[0] * 0.5 + a[1] * 0.5 <= *b));
        assert!(rows.iter().any(|(a, b)| a[0] * 1.5 + a[1] * 0.5 > *b));
    }

    #[test]
    fn degenerate_hulls() {
        let p = hull_rows(&convex_hull(&[[2.0, -1.0], [2.0, -1.0]]));
        assert_eq!(p.len(), 4);
        assert!(p.iter().all(|(a, b)| (a[0] * 2.0 - a[1] - b).abs() < 1e-12));
        let s = hull_rows(&convex_hull(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]));
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|(a, b)| a[0] * 1.0 + a[1] * 1.0 <= b + 1e-12));
        assert!(s.iter().any(|(a, b)| a[0] * 1.0 + a[1] * 0.0 > b + 1e-6));
    }
}
