use std::collections::{BTreeMap, VecDeque};

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::region::{build_region, BuiltRegion};
use super::{Coverage, CriticalRegion, MplpError, ParametricLP, RegionStore};
use crate::lp::{solve_lp, Basis, LinearProgram, LpStatus, Polyhedron, PolyhedronError};

#[derive(Clone, Debug)]
pub struct EnumerateOptions {
    /// Maximum number of stored regions.
    pub budget: usize,
    /// Step across a facet when looking for the neighbor.
    pub step: f64,
    /// Tangential perturbation used when a crossing returns the same basis.
    pub tangent_step: f64,
    /// Random probes per refill round; uncovered feasible probes become new seeds.
    pub refill_samples: usize,
    pub refill_rounds: usize,
    /// Feasible samples drawn for the coverage estimate.
    pub coverage_samples: usize,
    pub rng_seed: u64,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        EnumerateOptions {
            budget: 100_000,
            step: 1e-6,
            tangent_step: 1e-5,
            refill_samples: 0,
            refill_rounds: 0,
            coverage_samples: 0,
            rng_seed: 0,
        }
    }
}

const FULL_DIM_RADIUS: f64 = 1e-9;
const PERTURBATION: f64 = 1e-7;

struct Explorer<'a> {
    plp: &'a ParametricLP,
    opts: &'a EnumerateOptions,
    regions: Vec<CriticalRegion>,
    centers: Vec<Vec<f64>>,
    by_basis: BTreeMap<Basis, usize>,
    queue: VecDeque<usize>,
}

/// Explore critical regions from `seeds` by crossing facets.
pub fn enumerate_regions(
    plp: &ParametricLP,
    seeds: &[Vec<f64>],
    opts: &EnumerateOptions,
) -> Result<RegionStore, MplpError> {
    plp.validate()?;
    if opts.budget == 0 {
        return Err(MplpError::DimensionMismatch("budget must be at least 1".into()));
    }
    let p = plp.num_params();
    for (i, s) in seeds.iter().enumerate() {
        if s.len() != p {
            return Err(MplpError::DimensionMismatch(format!("seed {i} has length {}", s.len())));
        }
        if !plp.theta.contains(s, 1e-9) {
            return Err(MplpError::SeedOutsideTheta(i));
        }
    }
    let mut ex = Explorer {
        plp,
        opts,
        regions: Vec::new(),
        centers: Vec::new(),
        by_basis: BTreeMap::new(),
        queue: VecDeque::new(),
    };
    for (i, s) in seeds.iter().enumerate() {
        if ex.full() {
            break;
        }
        if ex.covered(s) {
            continue;
        }
        match solve_lp(&plp.instantiate(s))?.status {
            LpStatus::Optimal => {}
            _ => return Err(MplpError::SeedInfeasible(i)),
        }
        ex.add_at(s)?;
        ex.explore()?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let bbox = if opts.refill_rounds > 0 || opts.coverage_samples > 0 { Some(bounding_box(&plp.theta)?) } else { None };
    for round in 0..opts.refill_rounds {
        if ex.full() {
            break;
        }
        let before = ex.regions.len();
        let bbox = bbox.as_ref().unwrap();
        for _ in 0..opts.refill_samples {
            if ex.full() {
                break;
            }
            let t = sample_theta(&plp.theta, bbox, &mut rng);
            if ex.covered(&t) {
                continue;
            }
            if solve_lp(&plp.instantiate(&t))?.status != LpStatus::Optimal {
                continue;
            }
            ex.add_at(&t)?;
            ex.explore()?;
        }
        debug!("refill round {round}: {} -> {} regions", before, ex.regions.len());
        if ex.regions.len() == before {
            break;
        }
    }

    let mut coverage = Coverage::default();
    if opts.coverage_samples > 0 {
        let bbox = bbox.as_ref().unwrap();
        let mut attempts = 0usize;
        while coverage.feasible_samples < opts.coverage_samples && attempts < 200 * opts.coverage_samples {
            attempts += 1;
            let t = sample_theta(&plp.theta, bbox, &mut rng);
            if solve_lp(&plp.instantiate(&t))?.status != LpStatus::Optimal {
                continue;
            }
            coverage.feasible_samples += 1;
            if ex.covered(&t) {
                coverage.covered_samples += 1;
            }
        }
        coverage.fraction = if coverage.feasible_samples > 0 {
            coverage.covered_samples as f64 / coverage.feasible_samples as f64
        } else {
            0.0
        };
    }
    info!(
        "enumerated {} regions ({} lower-dimensional, {} degenerate)",
        ex.regions.len(),
        ex.regions.iter().filter(|r| r.flags.lower_dimensional).count(),
        ex.regions.iter().filter(|r| r.flags.degenerate).count()
    );
    Ok(RegionStore { param_names: plp.param_names.clone(), theta: plp.theta.clone(), regions: ex.regions, coverage })
}

impl Explorer<'_> {
    fn full(&self) -> bool {
        self.regions.len() >= self.opts.budget
    }

    fn covered(&self, t: &[f64]) -> bool {
        self.regions.iter().any(|r| r.contains(t, 1e-9))
    }

    /// Solve at `t` and record the optimal basis' region. Returns the region index.
    fn add_at(&mut self, t: &[f64]) -> Result<Option<usize>, MplpError> {
        let sol = solve_lp(&self.plp.instantiate(t))?;
        if sol.status != LpStatus::Optimal {
            return Ok(None);
        }
        if let Some(&k) = self.by_basis.get(&sol.basis) {
            return Ok(Some(k));
        }
        let built = match build_region(self.plp, &sol.basis) {
            Ok(b) => Some(b),
            Err(MplpError::Polyhedron(PolyhedronError::EmptyPolyhedron)) => None,
            Err(e) => return Err(e),
        };
        let full = built.as_ref().is_some_and(|b| b.radius >= FULL_DIM_RADIUS);
        if full {
            return Ok(Some(self.push(built.unwrap(), true)));
        }
        // Degenerate vertex: a perturbed problem picks a basis with a full-dimensional region.
        if let Some(alt) = self.perturbed_basis(t)? {
            if let Some(&k) = self.by_basis.get(&alt) {
                return Ok(Some(k));
            }
            match build_region(self.plp, &alt) {
                Ok(b) if b.radius >= FULL_DIM_RADIUS && b.region.contains(t, 1e-7) => {
                    return Ok(Some(self.push(b, true)));
                }
                Ok(_) | Err(MplpError::Polyhedron(PolyhedronError::EmptyPolyhedron)) => {}
                Err(e) => return Err(e),
            }
        }
        match built {
            Some(b) => Ok(Some(self.push(b, false))),
            None => Ok(None),
        }
    }

    fn perturbed_basis(&self, t: &[f64]) -> Result<Option<Basis>, MplpError> {
        let mut lp = self.plp.instantiate(t);
        let mut k = 0.0;
        for v in lp.b_eq.iter_mut().chain(lp.b_ub.iter_mut()) {
            k += 1.0;
            *v += PERTURBATION * (1.0 + 0.5 * (k * 0.618_033_988_75f64).fract());
        }
        for (j, c) in lp.cost.iter_mut().enumerate() {
            *c += PERTURBATION * (1.0 + 0.5 * ((j as f64 + 1.0) * 0.414_213_562_37f64).fract());
        }
        let sol = solve_lp(&lp)?;
        Ok((sol.status == LpStatus::Optimal).then_some(sol.basis))
    }

    fn push(&mut self, built: BuiltRegion, explore: bool) -> usize {
        let mut region = built.region;
        let id = self.regions.len();
        region.id = id;
        self.by_basis.insert(region.basis.clone(), id);
        self.regions.push(region);
        self.centers.push(built.center);
        if explore && !self.regions[id].flags.lower_dimensional {
            self.queue.push_back(id);
        }
        id
    }

    fn explore(&mut self) -> Result<(), MplpError> {
        while let Some(r) = self.queue.pop_front() {
            if self.full() {
                self.queue.clear();
                break;
            }
            let poly = self.regions[r].poly.clone();
            let basis = self.regions[r].basis.clone();
            for f in 0..poly.num_rows() {
                if self.full() {
                    break;
                }
                let normal = poly.row(f);
                let Some((fc, rad)) = facet_center(&poly, f)? else { continue };
                if rad < FULL_DIM_RADIUS {
                    continue;
                }
                let t: Vec<f64> = fc.iter().zip(&normal).map(|(c, a)| c + self.opts.step * a).collect();
                if !self.plp.theta.contains(&t, 0.0) {
                    continue;
                }
                let sol = solve_lp(&self.plp.instantiate(&t))?;
                if sol.status != LpStatus::Optimal {
                    continue;
                }
                if sol.basis == basis {
                    let tan = tangent(&normal);
                    let t2: Vec<f64> = t.iter().zip(&tan).map(|(v, d)| v + self.opts.tangent_step * d).collect();
                    let retry =
                        if self.plp.theta.contains(&t2, 0.0) { solve_lp(&self.plp.instantiate(&t2))? } else { sol };
                    if retry.status != LpStatus::Optimal || retry.basis == basis {
                        self.regions[r].flags.degenerate = true;
                        continue;
                    }
                    if !self.by_basis.contains_key(&retry.basis) {
                        self.add_at(&t2)?;
                    }
                    continue;
                }
                if self.by_basis.contains_key(&sol.basis) {
                    continue;
                }
                self.add_at(&t)?;
            }
        }
        Ok(())
    }
}

/// Chebyshev center of facet `f` within its hyperplane.
fn facet_center(poly: &Polyhedron, f: usize) -> Result<Option<(Vec<f64>, f64)>, MplpError> {
    let d = poly.dim();
    let af = poly.row(f);
    let m = poly.num_rows();
    let mut lp = LinearProgram::new(d + 1);
    lp.lower = vec![f64::NEG_INFINITY; d + 1];
    lp.lower[d] = 0.0;
    lp.upper[d] = 1e6;
    lp.cost[d] = -1.0;
    lp.a_eq = nalgebra::DMatrix::zeros(1, d + 1);
    for j in 0..d {
        lp.a_eq[(0, j)] = af[j];
    }
    lp.b_eq = vec![poly.b[f]];
    lp.a_ub = nalgebra::DMatrix::zeros(m - 1, d + 1);
    lp.b_ub = Vec::with_capacity(m - 1);
    let mut r = 0;
    for k in 0..m {
        if k == f {
            continue;
        }
        let ak = poly.row(k);
        let dot: f64 = ak.iter().zip(&af).map(|(p, q)| p * q).sum();
        let proj: f64 = ak.iter().zip(&af).map(|(p, q)| (p - dot * q).powi(2)).sum::<f64>().sqrt();
        for j in 0..d {
            lp.a_ub[(r, j)] = ak[j];
        }
        lp.a_ub[(r, d)] = proj;
        lp.b_ub.push(poly.b[k]);
        r += 1;
    }
    let sol = solve_lp(&lp)?;
    Ok((sol.status == LpStatus::Optimal).then(|| (sol.x[..d].to_vec(), sol.x[d])))
}

/// Unit vector orthogonal to `normal`, deterministic.
fn tangent(normal: &[f64]) -> Vec<f64> {
    let k = (0..normal.len()).min_by(|&a, &b| normal[a].abs().partial_cmp(&normal[b].abs()).unwrap()).unwrap_or(0);
    let mut t: Vec<f64> = normal.iter().map(|a| -normal[k] * a).collect();
    t[k] += 1.0;
    let nrm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nrm > 0.0 {
        t.iter_mut().for_each(|v| *v /= nrm);
    }
    t
}

pub(crate) fn bounding_box(theta: &Polyhedron) -> Result<Vec<(f64, f64)>, MplpError> {
    let d = theta.dim();
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        let hi = theta.support(&e)?.ok_or(PolyhedronError::Unbounded2D)?.0;
        e[k] = -1.0;
        let lo = -theta.support(&e)?.ok_or(PolyhedronError::Unbounded2D)?.0;
        out.push((lo, hi));
    }
    Ok(out)
}

/// Uniform sample from `theta` by rejection from its bounding box.
pub(crate) fn sample_theta(theta: &Polyhedron, bbox: &[(f64, f64)], rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let t: Vec<f64> = bbox.iter().map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect();
        if theta.contains(&t, 0.0) {
            return t;
        }
    }
}
