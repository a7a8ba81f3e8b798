#![allow(clippy::needless_range_loop)]

use gridflex::central::{
    backward_forward_sweep, relaxation_gap, solve_central, voltage_mismatch, CentralError, CentralOptions, FeederModel,
    Line,
};
use gridflex::realtime::{AffineCost, FlexChart2D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const S_BASE: f64 = 100.0;

fn feeder(lines: &[(usize, usize)], r: f64, x: f64, v_min: f64, v_max: f64) -> FeederModel {
    FeederModel {
        num_nodes: lines.len() + 1,
        lines: lines.iter().map(|&(from, to)| Line { from, to, r_pu: r, x_pu: x }).collect(),
        v0_sq: 1.0,
        v_min_sq: v_min * v_min,
        v_max_sq: v_max * v_max,
        s_base_kva: S_BASE,
        v_base_v: 400.0,
    }
}

/// Branching five-node feeder: 0-1-2-3 with 4 hanging off 1.
fn five_node(v_min: f64, v_max: f64) -> FeederModel {
    feeder(&[(0, 1), (1, 2), (2, 3), (1, 4)], 0.02, 0.01, v_min, v_max)
}

fn random_charts(n: usize, rng: &mut ChaCha8Rng) -> Vec<FlexChart2D> {
    let mut charts = vec![FlexChart2D::point(0, 0.0, 0.0, 0.0)];
    for j in 1..n {
        let lo = [rng.random_range(-8.0..-2.0), rng.random_range(-3.0..-0.5)];
        let hi = [rng.random_range(-1.0..6.0), rng.random_range(0.5..3.0)];
        let cost = AffineCost { a: 0.0, b_p: rng.random_range(-0.002..0.002), b_q: rng.random_range(-0.001..0.001) };
        charts.push(FlexChart2D::from_box(j, lo, hi, cost));
    }
    charts
}

#[test]
fn flat_network_stays_flat() {
    let f = five_node(0.95, 1.05);
    let charts: Vec<FlexChart2D> = (0..5).map(|j| FlexChart2D::point(j, 0.0, 0.0, 0.0)).collect();
    let sol = solve_central(&f, &charts, &CentralOptions::default()).unwrap();
    for j in 0..5 {
        assert!(sol.p[j].abs() < 1e-12 && sol.q[j].abs() < 1e-12);
        assert!((sol.v[j] - 1.0).abs() < 1e-12);
    }
    assert!(sol.l.iter().all(|l| l.abs() < 1e-12));
    assert!(sol.objective.abs() < 1e-12);
    assert!(relaxation_gap(&f, &sol).iter().all(|g| g.abs() < 1e-12));
}

#[test]
fn single_line_voltage_drop() {
    let f = feeder(&[(0, 1)], 0.01, 0.0, 0.9, 1.1);
    // 10 kW consumption on a 100 kVA base
    let charts = vec![FlexChart2D::point(0, 0.0, 0.0, 0.0), FlexChart2D::point(1, -10.0, 0.0, 0.0)];
    let sol = solve_central(&f, &charts, &CentralOptions::default()).unwrap();
    assert!((sol.p[1] + 0.1).abs() < 1e-12);
    let expect = 1.0 - 2.0 * 0.01 * 0.1;
    assert!((sol.v[1] - expect).abs() < 1e-5, "{} vs {expect}", sol.v[1]);
    assert!(sol.gap_closed);
}

#[test]
fn generous_bounds_give_local_minimizers() {
    let f = five_node(0.5, 1.5);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let opts = CentralOptions { pi_loss: 0.0, ..Default::default() };
    for _ in 0..10 {
        let charts = random_charts(5, &mut rng);
        let sol = solve_central(&f, &charts, &opts).unwrap();
        for j in 1..5 {
            let (_, best) = charts[j].min_cost().unwrap();
            let (p, q) = sol.injection_kw(j, S_BASE);
            assert!((p - best[0]).abs() < 1e-6 && (q - best[1]).abs() < 1e-6, "node {j}: ({p}, {q}) vs {best:?}");
        }
    }
}

#[test]
fn solutions_respect_network_equations() {
    let f = five_node(0.95, 1.05);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let charts = random_charts(5, &mut rng);
        let sol = solve_central(&f, &charts, &CentralOptions::default()).unwrap();
        assert!(sol.gap_closed);
        // slack supplies the nodal balance plus the line losses
        let losses: f64 = f.lines.iter().zip(&sol.l).map(|(line, l)| line.r_pu * l).sum();
        let net: f64 = sol.p.iter().sum();
        assert!((net - losses).abs() < 1e-7, "{net} vs {losses}");
        for (k, line) in f.lines.iter().enumerate() {
            let child: f64 = f.child_lines(line.to).iter().map(|&c| sol.p_flow[c]).sum();
            assert!((sol.p_flow[k] - child - line.r_pu * sol.l[k] + sol.p[line.to]).abs() < 1e-7);
            let z2 = line.r_pu.powi(2) + line.x_pu.powi(2);
            let dv = sol.v[line.from] - 2.0 * (line.r_pu * sol.p_flow[k] + line.x_pu * sol.q_flow[k]) + z2 * sol.l[k];
            assert!((sol.v[line.to] - dv).abs() < 1e-7);
        }
        assert!(sol.v.iter().all(|v| *v >= f.v_min_sq - 1e-9 && *v <= f.v_max_sq + 1e-9));
        let gaps = relaxation_gap(&f, &sol);
        assert!(gaps.iter().all(|g| *g >= -1e-7));
        assert!(gaps.iter().cloned().fold(0.0, f64::max) <= 1e-5);
        assert!(voltage_mismatch(&f, &sol).unwrap() < 0.002);
        assert!(sol.round_objectives.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        for j in 1..5 {
            let (p, q) = sol.injection_kw(j, S_BASE);
            assert!(charts[j].contains(p, q, 1e-7));
        }
    }
}

#[test]
fn consumption_lowers_voltage_downstream() {
    let f = five_node(0.8, 1.2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let mut charts = vec![FlexChart2D::point(0, 0.0, 0.0, 0.0)];
        for j in 1..5 {
            charts.push(FlexChart2D::point(j, rng.random_range(-10.0..0.0), rng.random_range(-3.0..0.0), 0.0));
        }
        let sol = solve_central(&f, &charts, &CentralOptions::default()).unwrap();
        for line in &f.lines {
            assert!(sol.v[line.to] <= sol.v[line.from] + 1e-12);
        }
    }
}

#[test]
fn unreachable_voltage_names_the_deepest_node() {
    let f = five_node(0.99, 1.01);
    let charts: Vec<FlexChart2D> = (0..5)
        .map(|j| if j == 3 { FlexChart2D::point(3, -60.0, -20.0, 0.0) } else { FlexChart2D::point(j, 0.0, 0.0, 0.0) })
        .collect();
    match solve_central(&f, &charts, &CentralOptions::default()) {
        Err(CentralError::Infeasible { node }) => assert_eq!(node, 3),
        other => panic!("expected infeasibility, got {other:?}"),
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let f = five_node(0.95, 1.05);
    let charts: Vec<FlexChart2D> = (0..3).map(|j| FlexChart2D::point(j, 0.0, 0.0, 0.0)).collect();
    assert!(matches!(solve_central(&f, &charts, &CentralOptions::default()), Err(CentralError::MissingChart(_))));
    let mut g = f.clone();
    g.lines[2].r_pu = 0.0;
    assert!(matches!(g.validate(), Err(CentralError::InvalidFeeder(_))));
}

#[test]
fn sweep_matches_relaxation_at_optimum() {
    let f = five_node(0.9, 1.1);
    let charts: Vec<FlexChart2D> = (0..5).map(|j| FlexChart2D::point(j, -5.0 * j as f64, -1.0, 0.0)).collect();
    let sol = solve_central(&f, &charts, &CentralOptions::default()).unwrap();
    let volt = backward_forward_sweep(&f, &sol.p, &sol.q).unwrap();
    for j in 1..5 {
        assert!((volt[j].norm_sqr() - sol.v[j]).abs() < 1e-6);
    }
}
