//! The two messages crossing a unit boundary: chart (node to central) and
//! setpoint (central to node).

use serde::{Deserialize, Serialize};

use super::chart::{AffineCost, ChartPiece, ChartSource, FlexChart2D};
use crate::lp::{clip_box_2d, Polyhedron};

/// Coefficients are rounded to this grid on the wire.
const WIRE_STEP: f64 = 1e-12;
const DECODE_BOX: f64 = 1e6;

fn round(v: f64) -> f64 {
    let r = (v / WIRE_STEP).round() * WIRE_STEP;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceMessage {
    /// Rows `[a_p, a_q, b]` of `a_p P + a_q Q <= b`.
    pub rows: Vec<[f64; 3]>,
    pub a: f64,
    pub b_p: f64,
    pub b_q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartMessage {
    pub node: usize,
    pub tick: u64,
    pub pieces: Vec<PieceMessage>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetpointMessage {
    pub node: usize,
    pub tick: u64,
    pub p_kw: f64,
    pub q_kvar: f64,
}

impl ChartMessage {
    pub fn from_chart(chart: &FlexChart2D, tick: u64) -> Self {
        let pieces = chart
            .pieces
            .iter()
            .map(|p| PieceMessage {
                rows: (0..p.poly.num_rows())
                    .map(|i| [round(p.poly.a[(i, 0)]), round(p.poly.a[(i, 1)]), round(p.poly.b[i])])
                    .collect(),
                a: round(p.cost.a),
                b_p: round(p.cost.b_p),
                b_q: round(p.cost.b_q),
            })
            .collect();
        ChartMessage { node: chart.node, tick, pieces }
    }

    /// Rebuild a chart on the receiving side; piece ids are positions in the message.
    pub fn to_chart(&self) -> FlexChart2D {
        let pieces = self
            .pieces
            .iter()
            .enumerate()
            .map(|(k, pm)| {
                let rows: Vec<([f64; 2], f64)> = pm.rows.iter().map(|r| ([r[0], r[1]], r[2])).collect();
                let vertices = clip_box_2d([-DECODE_BOX; 2], [DECODE_BOX; 2], &rows);
                let poly_rows: Vec<(Vec<f64>, f64)> = rows.iter().map(|(a, b)| (a.to_vec(), *b)).collect();
                ChartPiece {
                    poly: Polyhedron::from_rows(2, &poly_rows),
                    cost: AffineCost { a: pm.a, b_p: pm.b_p, b_q: pm.b_q },
                    region: k,
                    vertices,
                }
            })
            .collect();
        FlexChart2D { node: self.node, pieces, source: ChartSource::Fallback }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}
