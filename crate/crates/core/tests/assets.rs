use gridflex::assets::{battery_polytope, pv_polytope, soc_step, BatteryParams, PvParams};
use gridflex::lp::polygon_area;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exact_pv_area_mc(pv: &PvParams, p_max: f64, samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = pv.s_nom_kva;
    let mut hit = 0usize;
    for _ in 0..samples {
        let p: f64 = rng.random_range(0.0..s);
        let q: f64 = rng.random_range(-s..s);
        if p * p + q * q <= s * s && p <= p_max && q.abs() <= pv.q_slope * p {
            hit += 1;
        }
    }
    hit as f64 / samples as f64 * 2.0 * s * s
}

fn disc_slab_area(s: f64, pm: f64) -> f64 {
    if pm >= s {
        return std::f64::consts::PI * s * s;
    }
    let segment = s * s * (pm / s).acos() - pm * (s * s - pm * pm).sqrt();
    std::f64::consts::PI * s * s - 2.0 * segment
}

#[test]
fn pv_area_close_to_exact() {
    let pv = PvParams { s_nom_kva: 10.0, q_slope: 1.0 / 3.0 };
    let approx = polygon_area(&pv_polytope(&pv, 10.0, 8).poly.vertices_2d().unwrap());
    let exact = exact_pv_area_mc(&pv, 10.0, 400_000);
    assert!(approx <= exact * 1.01);
    assert!((approx - exact).abs() / exact < 0.02, "{approx} vs {exact}");
}

#[test]
fn battery_area_close_to_exact() {
    for (s, pm) in [(5.0, 5.0), (5.0, 3.0), (5.0, 7.0), (4.0, 1.0)] {
        let b = BatteryParams { s_nom_kva: s, p_max_kw: pm, ..Default::default() };
        let v = battery_polytope(&b, 16).poly.vertices_2d().unwrap();
        let exact = disc_slab_area(s, pm);
        let approx = polygon_area(&v);
        assert!(approx <= exact + 1e-9);
        assert!((exact - approx) / exact < 0.01, "s={s} pm={pm}: {approx} vs {exact}");
    }
}

#[test]
fn battery_full_active_point_on_boundary() {
    for (s, pm) in [(5.0, 5.0), (5.0, 3.0), (3.0, 2.5)] {
        let b = BatteryParams { s_nom_kva: s, p_max_kw: pm, ..Default::default() };
        let poly = battery_polytope(&b, 4).poly;
        assert!(poly.is_feasible(&[pm, 0.0]));
        assert!(!poly.is_feasible(&[pm + 1e-6, 0.0]));
        assert!(poly.is_feasible(&[-pm, 0.0]));
    }
}

#[test]
fn round_trip_loses_efficiency_share() {
    let b = BatteryParams { capacity_kwh: 8.0, eta_ch: 0.9, eta_dis: 0.92, ..Default::default() };
    let e = 2.0;
    let after_ch = soc_step(0.5, e, 0.0, 1.0, &b);
    // withdrawing exactly the stored energy returns to the start
    let stored = b.eta_ch * e;
    let after = soc_step(after_ch, 0.0, stored * b.eta_dis, 1.0, &b);
    assert!((after - 0.5).abs() < 1e-12);
    // equal terminal energy in and out
    let after2 = soc_step(after_ch, 0.0, e, 1.0, &b);
    let loss = (1.0 / b.eta_dis - b.eta_ch) * e / b.capacity_kwh;
    assert!((0.5 - after2 - loss).abs() < 1e-12);
}

proptest! {
    #[test]
    fn polygons_are_inner_approximations(s in 0.5f64..20.0, pm_frac in 0.0f64..1.5, n in 1usize..12) {
        let pv = PvParams { s_nom_kva: s, q_slope: 1.0 / 3.0 };
        for v in pv_polytope(&pv, pm_frac * s, n).poly.vertices_2d().unwrap() {
            prop_assert!(v[0] * v[0] + v[1] * v[1] <= s * s + 1e-9);
            prop_assert!(v[1].abs() <= v[0] / 3.0 + 1e-9);
        }
        let b = BatteryParams { s_nom_kva: s, p_max_kw: pm_frac * s, ..Default::default() };
        let verts = battery_polytope(&b, n).poly.vertices_2d().unwrap();
        for v in &verts {
            prop_assert!(v[0] * v[0] + v[1] * v[1] <= s * s + 1e-9);
            prop_assert!(v[0].abs() <= pm_frac * s + 1e-9);
            for flip in [[-v[0], v[1]], [v[0], -v[1]]] {
                prop_assert!(verts.iter().any(|w| (w[0] - flip[0]).abs() < 1e-9 && (w[1] - flip[1]).abs() < 1e-9));
            }
        }
    }

    #[test]
    fn pv_area_monotone_in_mpp(s in 1.0f64..10.0, a in 0.0f64..1.2, b in 0.0f64..1.2) {
        let pv = PvParams { s_nom_kva: s, q_slope: 1.0 / 3.0 };
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let area = |f: f64| polygon_area(&pv_polytope(&pv, f * s, 6).poly.vertices_2d().unwrap());
        prop_assert!(area(lo) <= area(hi) + 1e-9);
    }
}
