use gridflex::lp::{solve_lp, LinearProgram, LpStatus, Polyhedron};
use gridflex::mplp::{
    enumerate_regions, evaluate_policy, locate_region, EnumerateOptions, MplpError, ParametricLP, RegionStore,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy() -> ParametricLP {
    let mut base = LinearProgram::new(2);
    base.cost = vec![1.0, 1.0];
    base.a_ub = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
    base.b_ub = vec![0.0, -1.0];
    ParametricLP {
        base,
        rhs_sens: DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]),
        cost_sens: DMatrix::zeros(2, 1),
        theta: Polyhedron::from_box(&[-1.0], &[2.0]),
        param_names: vec!["t".into()],
    }
}

#[test]
fn toy_problem_has_three_regions() {
    let plp = toy();
    let store = enumerate_regions(&plp, &[vec![0.5]], &EnumerateOptions::default()).unwrap();
    assert_eq!(store.regions.len(), 3);
    for k in 0..=300 {
        let t = -1.0 + 3.0 * k as f64 / 300.0;
        let r = locate_region(&store, &[t]).unwrap();
        let expect = t.max(0.0) + (1.0 - t).max(0.0);
        assert!((r.cost_at(&[t]) - expect).abs() < 1e-12);
    }
    let r = locate_region(&store, &[0.5]).unwrap();
    let u = evaluate_policy(r, &[0.5]).unwrap();
    assert!((u[0] - 0.5).abs() < 1e-12 && (u[1] - 0.5).abs() < 1e-12);
}

#[test]
fn shared_facet_goes_to_lowest_index() {
    let store = enumerate_regions(&toy(), &[vec![0.5]], &EnumerateOptions::default()).unwrap();
    let on_facet = locate_region(&store, &[1.0]).unwrap();
    let ids: Vec<usize> = store.regions.iter().filter(|r| r.contains(&[1.0], 1e-9)).map(|r| r.id).collect();
    assert_eq!(on_facet.id, *ids.iter().min().unwrap());
    assert!(ids.len() >= 2);
}

#[test]
fn outside_region_is_rejected() {
    let store = enumerate_regions(&toy(), &[vec![0.5]], &EnumerateOptions::default()).unwrap();
    let r = locate_region(&store, &[0.5]).unwrap();
    assert!(matches!(evaluate_policy(r, &[1.7]), Err(MplpError::OutsideRegion(_))));
}

#[test]
fn infeasible_seed_is_reported() {
    let mut plp = toy();
    plp.base.upper = vec![0.5, 0.5];
    let err = enumerate_regions(&plp, &[vec![1.5]], &EnumerateOptions::default()).unwrap_err();
    assert_eq!(err, MplpError::SeedInfeasible(0));
}

/// Random bounded LP with RHS and cost parameters.
fn random_plp(rng: &mut ChaCha8Rng) -> ParametricLP {
    let n = 6;
    let m = 8;
    let p_rhs = 2;
    let p_cost = 1;
    let p = p_rhs + p_cost;
    let mut base = LinearProgram::new(n);
    base.upper = vec![4.0; n];
    base.cost = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    base.a_ub = DMatrix::from_fn(m, n, |_, _| if rng.random_bool(0.7) { rng.random_range(-1.0..1.0) } else { 0.0 });
    base.b_ub = (0..m).map(|_| rng.random_range(0.5..2.0)).collect();
    base.a_eq = DMatrix::from_fn(1, n, |_, _| rng.random_range(0.0..1.0));
    base.b_eq = vec![2.0];
    let mut rhs_sens = DMatrix::zeros(m + 1, p);
    for i in 0..=m {
        for k in 0..p_rhs {
            if rng.random_bool(0.5) {
                rhs_sens[(i, k)] = rng.random_range(-0.5..0.5);
            }
        }
    }
    let mut cost_sens = DMatrix::zeros(n, p);
    for j in 0..n {
        cost_sens[(j, p_rhs)] = rng.random_range(-1.0..1.0);
    }
    ParametricLP {
        base,
        rhs_sens,
        cost_sens,
        theta: Polyhedron::from_box(&vec![-1.0; p], &vec![1.0; p]),
        param_names: (0..p).map(|k| format!("t{k}")).collect(),
    }
}

#[test]
fn random_stores_match_lp_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    let mut uncovered = 0;
    for case in 0..8 {
        let plp = random_plp(&mut rng);
        let seed = vec![0.0; plp.num_params()];
        if solve_lp(&plp.instantiate(&seed)).unwrap().status != LpStatus::Optimal {
            continue;
        }
        let opts = EnumerateOptions { refill_rounds: 3, refill_samples: 200, rng_seed: case, ..Default::default() };
        let store = enumerate_regions(&plp, &[seed], &opts).unwrap();
        for _ in 0..200 {
            let t: Vec<f64> = (0..plp.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lp = plp.instantiate(&t);
            let sol = solve_lp(&lp).unwrap();
            match locate_region(&store, &t) {
                Ok(r) => {
                    assert_eq!(sol.status, LpStatus::Optimal, "covered point must be feasible");
                    let f = r.cost_at(&t);
                    assert!(
                        (f - sol.objective).abs() <= 1e-6 * (1.0 + sol.objective.abs()),
                        "{f} vs {}",
                        sol.objective
                    );
                    let u = evaluate_policy(r, &t).unwrap();
                    assert!(lp.max_violation(&u) < 1e-7);
                    let cu: f64 = lp.cost.iter().zip(&u).map(|(c, x)| c * x).sum();
                    assert!((cu - f).abs() < 1e-7 * (1.0 + f.abs()));
                    checked += 1;
                }
                Err(MplpError::NotCovered) => {
                    if sol.status == LpStatus::Optimal {
                        uncovered += 1;
                    }
                }
                Err(e) => panic!("{e}"),
            }
        }
    }
    assert!(checked > 500);
    assert!(uncovered * 100 < checked, "uncovered {uncovered} of {checked}");
}

#[test]
fn value_is_continuous_and_convex_in_rhs_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let plp = random_plp(&mut rng);
    let seed = vec![0.0; 3];
    let opts = EnumerateOptions { refill_rounds: 2, refill_samples: 200, ..Default::default() };
    let store = enumerate_regions(&plp, &[seed], &opts).unwrap();
    let f = |t: &[f64]| locate_region(&store, t).ok().map(|r| r.cost_at(t));
    for _ in 0..300 {
        let c = rng.random_range(-1.0..1.0);
        let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), c];
        let b = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), c];
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, c];
        if let (Some(fa), Some(fb), Some(fm)) = (f(&a), f(&b), f(&mid)) {
            assert!(fm <= 0.5 * (fa + fb) + 1e-7);
        }
    }
    // Continuity across shared facets: both sides agree at facet points.
    for r in &store.regions {
        let c = r.poly.chebyshev_center().unwrap().unwrap().0;
        for other in &store.regions {
            if other.id == r.id {
                continue;
            }
            if let Some(x) = shared_point(&r.poly, &other.poly) {
                assert!((r.cost_at(&x) - other.cost_at(&x)).abs() < 1e-6, "discontinuity at {x:?}");
                let pa = r.policy_at(&x);
                let pb = other.policy_at(&x);
                let lp = plp.instantiate(&x);
                assert!(lp.max_violation(&pa) < 1e-6 && lp.max_violation(&pb) < 1e-6);
            }
        }
        assert!(r.contains(&c, 1e-9));
    }
}

fn shared_point(a: &Polyhedron, b: &Polyhedron) -> Option<Vec<f64>> {
    let both = a.intersect(b);
    both.chebyshev_center().ok().flatten().map(|(c, _)| c)
}

#[test]
fn json_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let plp = random_plp(&mut rng);
    let store = enumerate_regions(&plp, &[vec![0.0; 3]], &EnumerateOptions::default()).unwrap();
    let s = store.to_json().unwrap();
    let back = RegionStore::from_json(&s).unwrap();
    assert_eq!(store, back);
    assert_eq!(s, back.to_json().unwrap());
}
