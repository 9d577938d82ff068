//! The two reductions the framework rests on: prize-collecting to plain
//! capacitated facility location via collocated dummy facilities, and
//! prize-collecting connected FL to connected FL via LP thresholding plus
//! fractional scaling, with the inverse solution-lifting maps.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::instance::{ClientSpec, FacilitySpec, Instance};
use crate::lp::{check_fl_feasibility, FractionalSolution, LP_TOL};
use crate::subsolvers::Solution;

/// Boundary slack: z within this of 1/2 still counts as paying.
const THRESHOLD_SLACK: f64 = 1e-9;
/// Service-mass support threshold in the scaling multiplier.
const SUPPORT_EPS: f64 = 1e-12;

/// Correspondence between clients of a prize-collecting instance and the
/// dummy facilities of its reduction.
#[derive(Debug, Clone)]
pub struct DummyMap {
    /// Facility count of the original instance; dummies start here.
    pub n_true_facilities: usize,
    /// Dummy facility index -> the client whose penalty it encodes.
    pub dummy_to_client: BTreeMap<usize, usize>,
    /// Inverse of `dummy_to_client`.
    pub client_to_dummy: BTreeMap<usize, usize>,
}

impl DummyMap {
    pub fn is_dummy(&self, facility: usize) -> bool {
        facility >= self.n_true_facilities
    }
}

/// Splits clients by LP penalty mass: those paying at least half go to C_p.
#[derive(Debug, Clone)]
pub struct ThresholdResult {
    pub c_p: BTreeSet<usize>,
    pub residual: BTreeSet<usize>,
    /// Penalty the integral solution will pay for C_p.
    pub penalty_paid: f64,
    /// What the LP already paid for those clients.
    pub lp_penalty_mass: f64,
}

/// Rewrites a prize-collecting capacitated instance as a plain capacitated
/// one: each client gets a collocated dummy facility with opening cost equal
/// to the client's penalty and capacity one. Opening the dummy and serving
/// the client there at distance zero costs exactly the penalty.
pub fn cpfl_to_cfl(inst: &Instance) -> Result<(Instance, DummyMap)> {
    let nf = inst.n_facilities();
    let nc = inst.n_clients();
    for f in &inst.facilities {
        if f.capacity.is_none() {
            return Err(Error::MissingCapacity(format!(
                "facility {} has no capacity; the reduction targets capacitated instances",
                f.id
            )));
        }
    }
    for c in &inst.clients {
        if c.penalty.is_none() {
            return Err(Error::MissingPenalty(format!(
                "client {} has no penalty to encode",
                c.id
            )));
        }
    }

    let mut facilities = inst.facilities.clone();
    for c in &inst.clients {
        facilities.push(FacilitySpec {
            id: format!("dummy_{}", c.id),
            open_cost: c.penalty.unwrap(),
            capacity: Some(1),
        });
    }
    let clients: Vec<ClientSpec> = inst
        .clients
        .iter()
        .map(|c| ClientSpec {
            id: c.id.clone(),
            penalty: None,
        })
        .collect();

    // Node order: true facilities, dummy facilities, clients. Dummy j sits
    // exactly on client j, so its distance row is a copy.
    let old_node = |v: usize| -> usize {
        if v < nf {
            v
        } else if v < nf + nc {
            nf + (v - nf)
        } else {
            nf + (v - nf - nc)
        }
    };
    let n_new = nf + nc + nc;
    let mut dist = vec![vec![0.0; n_new]; n_new];
    #[allow(clippy::needless_range_loop)]
    for a in 0..n_new {
        for b in 0..n_new {
            dist[a][b] = inst.dist[old_node(a)][old_node(b)];
        }
    }
    let edge_cost: Vec<Vec<f64>> = (0..nf + nc)
        .map(|a| (0..nf + nc).map(|b| dist[a][b]).collect())
        .collect();

    let reduced = Instance {
        name: format!("{}#reduced", inst.name),
        facilities,
        clients,
        dist,
        edge_cost,
        connection_scale: inst.connection_scale,
        k: inst.k,
        connectivity_dropped: inst.connectivity_dropped,
    };
    reduced.validate()?;

    let map = DummyMap {
        n_true_facilities: nf,
        dummy_to_client: (0..nc).map(|j| (nf + j, j)).collect(),
        client_to_dummy: (0..nc).map(|j| (j, nf + j)).collect(),
    };
    Ok((reduced, map))
}

/// Maps a solution of the reduced instance back. First normalizes: whenever
/// an open dummy does not serve its own client, move that client onto it
/// (swapping with the dummy's current client if any); collocation makes
/// this free or cheaper. After that, open dummies translate to penalties
/// and everything else carries over unchanged.
pub fn lift_cfl_solution(sol: &Solution, map: &DummyMap) -> Result<Solution> {
    let nc = map.client_to_dummy.len();
    let nf_reduced = map.n_true_facilities + nc;
    for &i in sol.open.iter().chain(sol.assignment.values()) {
        if i >= nf_reduced {
            return Err(Error::InvalidSolution(format!(
                "facility index {i} outside the reduced instance"
            )));
        }
    }
    let mut assignment = sol.assignment.clone();
    if assignment.len() != nc || (0..nc).any(|j| !assignment.contains_key(&j)) {
        return Err(Error::InvalidSolution(
            "reduced solution must assign every client".into(),
        ));
    }
    let mut served_by: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&j, &i) in &assignment {
        served_by.entry(i).or_default().push(j);
    }
    for (&i, js) in &served_by {
        if map.is_dummy(i) && js.len() > 1 {
            return Err(Error::InvalidSolution(format!(
                "dummy facility {i} serves {} clients",
                js.len()
            )));
        }
        if !sol.open.contains(&i) {
            return Err(Error::InvalidSolution(format!(
                "assignment targets closed facility {i}"
            )));
        }
    }

    // Swap normalization. Each pass fixes one dummy for good, so this
    // terminates after at most one pass per client.
    for (&dummy, &j) in &map.dummy_to_client {
        if !sol.open.contains(&dummy) {
            continue;
        }
        if assignment.get(&j) == Some(&dummy) {
            continue;
        }
        let displaced = assignment
            .iter()
            .find(|(_, &i)| i == dummy)
            .map(|(&jp, _)| jp);
        let former = assignment[&j];
        assignment.insert(j, dummy);
        if let Some(jp) = displaced {
            assignment.insert(jp, former);
        }
    }

    let mut open = BTreeSet::new();
    let mut penalty_set = BTreeSet::new();
    for &i in &sol.open {
        if map.is_dummy(i) {
            penalty_set.insert(map.dummy_to_client[&i]);
        } else {
            open.insert(i);
        }
    }
    let lifted_assignment: BTreeMap<usize, usize> = assignment
        .into_iter()
        .filter(|(_, i)| !map.is_dummy(*i))
        .collect();
    Ok(Solution {
        open,
        assignment: lifted_assignment,
        penalty_set,
        steiner_edges: sol.steiner_edges.clone(),
        claimed_total: None,
    })
}

/// Applies the half-threshold rule to the LP's penalty coordinates. The
/// boundary goes into C_p, so the paid total is at most twice the LP mass.
pub fn threshold_penalties(rho_star: &FractionalSolution, inst: &Instance) -> ThresholdResult {
    let z = rho_star
        .z
        .as_ref()
        .expect("thresholding requires penalty coordinates");
    let mut c_p = BTreeSet::new();
    let mut residual = BTreeSet::new();
    let mut penalty_paid = 0.0;
    let mut lp_penalty_mass = 0.0;
    for (j, &zj) in z.iter().enumerate() {
        if zj >= 0.5 - THRESHOLD_SLACK {
            c_p.insert(j);
            let p = inst.penalty(j).expect("penalty kinds define penalties");
            penalty_paid += p;
            lp_penalty_mass += p * zj;
        } else {
            residual.insert(j);
        }
    }
    debug_assert!(
        penalty_paid <= 2.0 * lp_penalty_mass + 1e-8 * (1.0 + penalty_paid),
        "half-threshold accounting broke: {penalty_paid} vs 2 x {lp_penalty_mass}"
    );
    ThresholdResult {
        c_p,
        residual,
        penalty_paid,
        lp_penalty_mass,
    }
}

/// Rescales a thresholded fractional point into one feasible for the
/// connected-FL relaxation on the residual clients: service rows renormalize
/// to one, openings grow by the worst renormalization factor (capped at 1),
/// edge variables double (capped at 1), penalties vanish. Feasibility and
/// the per-component 2x cost bound are checked on every call, not assumed.
pub fn scale_fractional(
    rho_star: &FractionalSolution,
    residual: &BTreeSet<usize>,
    inst: &Instance,
    v: usize,
) -> Result<FractionalSolution> {
    let nf = inst.n_facilities();
    let nc = inst.n_clients();
    let mut mass = vec![0.0; nc];
    for &j in residual {
        mass[j] = (0..nf).map(|i| rho_star.x[i][j]).sum();
        if mass[j] < 0.5 - 1e-9 {
            return Err(Error::ScalePreconditionViolated(format!(
                "residual client {j} is served to {}; threshold first",
                mass[j]
            )));
        }
    }

    let mut x = vec![vec![0.0; nc]; nf];
    for &j in residual {
        for i in 0..nf {
            x[i][j] = rho_star.x[i][j] / mass[j];
        }
    }
    let mut w = vec![0.0; nf];
    for i in 0..nf {
        let mut factor: Option<f64> = None;
        for &j in residual {
            if rho_star.x[i][j] > SUPPORT_EPS {
                let f = 1.0 / mass[j];
                factor = Some(factor.map_or(f, |g: f64| g.max(f)));
            }
        }
        w[i] = match factor {
            Some(f) => (rho_star.w[i] * f).min(1.0),
            None => rho_star.w[i],
        };
    }
    let y: BTreeMap<(usize, usize), f64> = rho_star
        .y
        .iter()
        .map(|(&e, &ye)| (e, (2.0 * ye).min(1.0)))
        .collect();

    let mut scaled = FractionalSolution {
        w,
        x,
        y,
        z: None,
        objective: 0.0,
    };
    scaled.objective = scaled.recompute_objective(inst);

    // The proof's per-variable facts, asserted per component.
    let facility = |p: &FractionalSolution| -> f64 {
        (0..nf)
            .map(|i| inst.facilities[i].open_cost * p.w[i])
            .sum()
    };
    let service_residual = |p: &FractionalSolution| -> f64 {
        residual
            .iter()
            .map(|&j| (0..nf).map(|i| inst.d_fc(i, j) * p.x[i][j]).sum::<f64>())
            .sum()
    };
    let connection = |p: &FractionalSolution| -> f64 {
        p.y.iter()
            .map(|(&(a, b), &ye)| inst.connection_scale * inst.edge(a, b) * ye)
            .sum()
    };
    for (name, scaled_part, orig_part) in [
        ("facility", facility(&scaled), facility(rho_star)),
        (
            "service",
            service_residual(&scaled),
            service_residual(rho_star),
        ),
        ("connection", connection(&scaled), connection(rho_star)),
    ] {
        assert!(
            scaled_part <= 2.0 * orig_part + 1e-9 * (1.0 + orig_part),
            "{name} component scaled past 2x: {scaled_part} vs {orig_part}"
        );
    }

    check_fl_feasibility(inst, &scaled, residual, v, LP_TOL)?;
    Ok(scaled)
}

/// Glues the rounded connected solution for the residual clients together
/// with the thresholded penalty set.
pub fn assemble_conpfl(confl_sol: &Solution, thr: &ThresholdResult) -> Result<Solution> {
    for j in &thr.c_p {
        if confl_sol.assignment.contains_key(j) {
            return Err(Error::Overlap(format!(
                "client {j} pays its penalty yet is assigned"
            )));
        }
    }
    Ok(Solution {
        open: confl_sol.open.clone(),
        assignment: confl_sol.assignment.clone(),
        penalty_set: thr.c_p.clone(),
        steiner_edges: confl_sol.steiner_edges.clone(),
        claimed_total: None,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::instance::{generate_euclidean, GenConfig, ProblemKind};
    use crate::lp::{build_conpfl_lp, solve_with_cuts, CutPool};
    use crate::subsolvers::solve_exact;
    use crate::verify::{evaluate, validate, ValidationPolicy};

    fn pc_config() -> GenConfig {
        GenConfig {
            capacity: Some((2, 3)),
            penalty: Some((0.1, 0.9)),
            ..GenConfig::default()
        }
    }

    #[test]
    fn dummy_construction_rules() {
        let inst = Instance::from_json(
            r#"{
                "name": "twins",
                "facilities": [{"id": "f0", "open_cost": 1.0, "capacity": 2}],
                "clients": [{"id": "c0", "penalty": 3.0}, {"id": "c1", "penalty": 7.0}],
                "points": [[0, 0], [1, 1], [1, 1]]
            }"#,
        )
        .unwrap();
        let (red, map) = cpfl_to_cfl(&inst).unwrap();
        assert_eq!(red.n_facilities(), 3);
        assert_eq!(red.facilities[1].open_cost, 3.0);
        assert_eq!(red.facilities[2].open_cost, 7.0);
        assert_eq!(red.facilities[1].capacity, Some(1));
        // Dummies are collocated with their clients; the two clients are
        // themselves collocated here.
        assert_eq!(red.d_fc(1, 0), 0.0);
        assert_eq!(red.d_fc(2, 1), 0.0);
        assert_eq!(red.edge(1, 2), 0.0);
        assert!(red.clients.iter().all(|c| c.penalty.is_none()));
        assert!(red.validate().is_ok());
        assert_eq!(map.client_to_dummy[&0], 1);
        assert!(map.is_dummy(2));
        assert!(!map.is_dummy(0));
    }

    #[test]
    fn reduction_requires_penalties_and_capacities() {
        let no_pen = generate_euclidean(
            "np",
            2,
            2,
            0,
            &GenConfig {
                capacity: Some((2, 2)),
                ..GenConfig::default()
            },
        )
        .unwrap();
        assert!(matches!(cpfl_to_cfl(&no_pen), Err(Error::MissingPenalty(_))));
        let no_cap = generate_euclidean(
            "ncap",
            2,
            2,
            0,
            &GenConfig {
                penalty: Some((0.5, 1.0)),
                ..GenConfig::default()
            },
        )
        .unwrap();
        assert!(matches!(cpfl_to_cfl(&no_cap), Err(Error::MissingCapacity(_))));
    }

    #[test]
    fn reduction_preserves_optimum() {
        for seed in 0..8 {
            let inst = generate_euclidean("optpres", 3, 4, 70 + seed, &pc_config()).unwrap();
            let (red, map) = cpfl_to_cfl(&inst).unwrap();
            let kind_cpfl = ProblemKind::parse("cpfl").unwrap();
            let kind_cfl = ProblemKind::parse("cfl").unwrap();
            let a = solve_exact(&inst, kind_cpfl).unwrap();
            let b = solve_exact(&red, kind_cfl).unwrap();
            let cost_a = evaluate(&inst, &a, kind_cpfl).unwrap().total;
            let cost_b = evaluate(&red, &b, kind_cfl).unwrap().total;
            assert!(
                (cost_a - cost_b).abs() <= 1e-9 * (1.0 + cost_a.abs()),
                "seed {seed}: {cost_a} vs {cost_b}"
            );
            // And the lifted reduced optimum is a feasible CPFL solution of
            // the same cost.
            let lifted = lift_cfl_solution(&b, &map).unwrap();
            let lifted_cost = evaluate(&inst, &lifted, kind_cpfl).unwrap().total;
            assert!((lifted_cost - cost_b).abs() <= 1e-9 * (1.0 + cost_b.abs()));
            let report = validate(&inst, &lifted, kind_cpfl, &ValidationPolicy::default());
            assert!(report.ok, "{:?}", report.violations);
        }
    }

    #[test]
    fn lift_true_only_solution_is_identity() {
        let inst = generate_euclidean("id", 3, 4, 5, &pc_config()).unwrap();
        let (red, map) = cpfl_to_cfl(&inst).unwrap();
        let kind_cfl = ProblemKind::parse("cfl").unwrap();
        // Force an all-true solution by making dummies expensive.
        let mut pricey = red.clone();
        for d in map.dummy_to_client.keys() {
            pricey.facilities[*d].open_cost = 100.0;
        }
        let sol = solve_exact(&pricey, kind_cfl).unwrap();
        assert!(sol.open.iter().all(|&i| !map.is_dummy(i)));
        let lifted = lift_cfl_solution(&sol, &map).unwrap();
        assert!(lifted.penalty_set.is_empty());
        assert_eq!(lifted.open, sol.open);
        assert_eq!(lifted.assignment, sol.assignment);
    }

    #[test]
    fn lift_swaps_crossed_dummies() {
        // Two collocated client pairs; dummies deliberately serve the wrong
        // clients.
        let inst = Instance::from_json(
            r#"{
                "name": "crossed",
                "facilities": [{"id": "f0", "open_cost": 0.2, "capacity": 2}],
                "clients": [{"id": "c0", "penalty": 1.0}, {"id": "c1", "penalty": 1.0}],
                "points": [[0, 0], [3, 0], [4, 0]]
            }"#,
        )
        .unwrap();
        let (red, map) = cpfl_to_cfl(&inst).unwrap();
        let crossed = Solution {
            open: BTreeSet::from([1, 2]),
            assignment: BTreeMap::from([(0, 2), (1, 1)]),
            ..Solution::default()
        };
        let kind_cfl = ProblemKind::parse("cfl").unwrap();
        let pre_swap = evaluate(&red, &crossed, kind_cfl).unwrap().total;
        let lifted = lift_cfl_solution(&crossed, &map).unwrap();
        assert_eq!(lifted.penalty_set, BTreeSet::from([0, 1]));
        assert!(lifted.assignment.is_empty());
        let kind_cpfl = ProblemKind::parse("cpfl").unwrap();
        let post = evaluate(&inst, &lifted, kind_cpfl).unwrap().total;
        assert!(post <= pre_swap + 1e-12, "{post} vs {pre_swap}");
        // Here the crossing paid d(c0, dummy_c1) = 1 both ways; the swap
        // saves exactly 2.
        assert!((pre_swap - post - 2.0).abs() < 1e-9);
    }

    #[test]
    fn lift_handles_random_crossings() {
        let kind_cfl = ProblemKind::parse("cfl").unwrap();
        let kind_cpfl = ProblemKind::parse("cpfl").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut cases = 0;
        while cases < 100 {
            let seed = rng.gen_range(0..10_000);
            let inst = generate_euclidean("rc", 3, 5, seed, &pc_config()).unwrap();
            let (red, map) = cpfl_to_cfl(&inst).unwrap();
            // Random solution: open all true facilities plus a random dummy
            // subset, then assign greedily with shuffled client order,
            // preferring wrong dummies to force crossings.
            let mut open: BTreeSet<usize> = (0..map.n_true_facilities).collect();
            let mut dummies: Vec<usize> = map.dummy_to_client.keys().copied().collect();
            dummies.shuffle(&mut rng);
            for &d in dummies.iter().take(rng.gen_range(0..=dummies.len())) {
                open.insert(d);
            }
            let mut spare: Vec<usize> = open
                .iter()
                .copied()
                .filter(|&i| map.is_dummy(i))
                .collect();
            spare.shuffle(&mut rng);
            let mut load: BTreeMap<usize, u64> = BTreeMap::new();
            let mut assignment = BTreeMap::new();
            let mut clients: Vec<usize> = (0..red.n_clients()).collect();
            clients.shuffle(&mut rng);
            for j in clients {
                // Prefer a dummy belonging to some other client.
                let wrong = spare
                    .iter()
                    .position(|&d| map.dummy_to_client[&d] != j)
                    .map(|pos| spare.remove(pos));
                let target = match wrong {
                    Some(d) => d,
                    None => {
                        let mut fallback = None;
                        for &i in &open {
                            let cap = red.facilities[i].capacity.unwrap();
                            if load.get(&i).copied().unwrap_or(0) < cap {
                                fallback = Some(i);
                                break;
                            }
                        }
                        match fallback {
                            Some(i) => i,
                            None => break,
                        }
                    }
                };
                *load.entry(target).or_insert(0) += 1;
                assignment.insert(j, target);
            }
            if assignment.len() != red.n_clients() {
                continue;
            }
            let sol = Solution {
                open: open.clone(),
                assignment,
                ..Solution::default()
            };
            let report = validate(&red, &sol, kind_cfl, &ValidationPolicy::default());
            if !report.ok {
                continue;
            }
            cases += 1;
            let pre = evaluate(&red, &sol, kind_cfl).unwrap().total;
            let lifted = lift_cfl_solution(&sol, &map).unwrap();
            let post = evaluate(&inst, &lifted, kind_cpfl).unwrap().total;
            assert!(post <= pre + 1e-9 * (1.0 + pre), "{post} vs {pre}");
            let report = validate(&inst, &lifted, kind_cpfl, &ValidationPolicy::default());
            assert!(report.ok, "{:?}", report.violations);
        }
    }

    #[test]
    fn lift_rejects_malformed_solutions() {
        let inst = generate_euclidean("bad", 2, 2, 3, &pc_config()).unwrap();
        let (_, map) = cpfl_to_cfl(&inst).unwrap();
        let unassigned = Solution {
            open: BTreeSet::from([0]),
            assignment: BTreeMap::from([(0, 0)]),
            ..Solution::default()
        };
        assert!(matches!(
            lift_cfl_solution(&unassigned, &map),
            Err(Error::InvalidSolution(_))
        ));
        let overloaded_dummy = Solution {
            open: BTreeSet::from([2]),
            assignment: BTreeMap::from([(0, 2), (1, 2)]),
            ..Solution::default()
        };
        assert!(matches!(
            lift_cfl_solution(&overloaded_dummy, &map),
            Err(Error::InvalidSolution(_))
        ));
    }

    fn frac_with_z(z: Vec<f64>, inst: &Instance) -> FractionalSolution {
        let nf = inst.n_facilities();
        let nc = inst.n_clients();
        FractionalSolution {
            w: vec![0.0; nf],
            x: vec![vec![0.0; nc]; nf],
            y: BTreeMap::new(),
            z: Some(z),
            objective: 0.0,
        }
    }

    #[test]
    fn threshold_half_boundary() {
        let inst = generate_euclidean(
            "th",
            2,
            3,
            1,
            &GenConfig {
                penalty: Some((1.0, 1.0)),
                ..GenConfig::default()
            },
        )
        .unwrap();
        let thr = threshold_penalties(&frac_with_z(vec![0.6, 0.5, 0.4], &inst), &inst);
        assert_eq!(thr.c_p, BTreeSet::from([0, 1]));
        assert_eq!(thr.residual, BTreeSet::from([2]));
        assert!((thr.penalty_paid - 2.0).abs() < 1e-12);
        assert!((thr.lp_penalty_mass - 1.1).abs() < 1e-12);
        assert!(thr.penalty_paid <= 2.0 * thr.lp_penalty_mass + 1e-9);

        let thr = threshold_penalties(&frac_with_z(vec![0.0, 0.0, 0.0], &inst), &inst);
        assert!(thr.c_p.is_empty());
        assert_eq!(thr.residual.len(), 3);

        let thr = threshold_penalties(&frac_with_z(vec![1.0, 1.0, 1.0], &inst), &inst);
        assert_eq!(thr.c_p.len(), 3);
        assert!((thr.penalty_paid - thr.lp_penalty_mass).abs() < 1e-12);
    }

    #[test]
    fn scaling_formulas() {
        // Hand-checkable point on a 2-facility, 2-client instance.
        let inst = Instance::from_json(
            r#"{
                "name": "scale",
                "facilities": [
                    {"id": "f0", "open_cost": 1.0},
                    {"id": "f1", "open_cost": 1.0}
                ],
                "clients": [{"id": "c0", "penalty": 2.0}, {"id": "c1", "penalty": 2.0}],
                "points": [[0, 0], [1, 0], [0, 1], [1, 1]]
            }"#,
        )
        .unwrap();
        let rho = FractionalSolution {
            w: vec![1.0, 0.35],
            x: vec![vec![0.3, 0.0], vec![0.3, 0.0]],
            y: BTreeMap::from([((0, 1), 0.4)]),
            z: Some(vec![0.4, 1.0]),
            objective: 0.0,
        };
        let residual = BTreeSet::from([0]);
        let scaled = scale_fractional(&rho, &residual, &inst, 0).unwrap();
        assert!((scaled.x[0][0] - 0.5).abs() < 1e-12);
        assert!((scaled.x[1][0] - 0.5).abs() < 1e-12);
        // Multiplier is 1/0.6; w0 caps at 1, w1 = 0.35/0.6.
        assert!((scaled.w[0] - 1.0).abs() < 1e-12);
        assert!((scaled.w[1] - 0.35 / 0.6).abs() < 1e-12);
        assert!((scaled.y[&(0, 1)] - 0.8).abs() < 1e-12);
        assert!(scaled.z.is_none());

        // y at 0.6 caps at 1.
        let mut rho2 = rho.clone();
        rho2.y.insert((0, 1), 0.6);
        let scaled2 = scale_fractional(&rho2, &residual, &inst, 0).unwrap();
        assert!((scaled2.y[&(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_is_identity_on_integral_points() {
        let inst = Instance::from_json(
            r#"{
                "name": "int",
                "facilities": [
                    {"id": "f0", "open_cost": 1.0},
                    {"id": "f1", "open_cost": 1.0}
                ],
                "clients": [{"id": "c0", "penalty": 2.0}, {"id": "c1", "penalty": 2.0}],
                "points": [[0, 0], [1, 0], [0, 0], [1, 0]]
            }"#,
        )
        .unwrap();
        let rho = FractionalSolution {
            w: vec![1.0, 0.0],
            x: vec![vec![1.0, 0.0], vec![0.0, 0.0]],
            y: BTreeMap::from([((0, 1), 0.0)]),
            z: Some(vec![0.0, 1.0]),
            objective: 0.0,
        };
        let residual = BTreeSet::from([0]);
        let scaled = scale_fractional(&rho, &residual, &inst, 0).unwrap();
        assert_eq!(scaled.x[0][0], 1.0);
        assert_eq!(scaled.w, vec![1.0, 0.0]);
        assert_eq!(scaled.y[&(0, 1)], 0.0);
    }

    #[test]
    fn scaling_rejects_unthresholded_input() {
        let inst = generate_euclidean(
            "pre",
            2,
            2,
            9,
            &GenConfig {
                penalty: Some((1.0, 1.0)),
                ..GenConfig::default()
            },
        )
        .unwrap();
        let rho = FractionalSolution {
            w: vec![1.0, 0.0],
            x: vec![vec![0.2, 1.0], vec![0.1, 0.0]],
            y: BTreeMap::new(),
            z: Some(vec![0.7, 0.0]),
            objective: 0.0,
        };
        let err = scale_fractional(&rho, &BTreeSet::from([0, 1]), &inst, 0);
        assert!(matches!(err, Err(Error::ScalePreconditionViolated(_))));
    }

    #[test]
    fn lp_threshold_scale_chain_is_feasible() {
        let cfg = GenConfig {
            penalty: Some((0.05, 0.5)),
            ..GenConfig::default()
        };
        for seed in 0..5 {
            let inst = generate_euclidean("chain", 4, 5, 200 + seed, &cfg).unwrap();
            let mut pool = CutPool::new();
            for v in 0..4 {
                let mut fl = build_conpfl_lp(&inst, v).unwrap();
                let rho = solve_with_cuts(&mut fl, &inst, &mut pool, 10_000).unwrap();
                let thr = threshold_penalties(&rho, &inst);
                assert!(
                    thr.penalty_paid <= 2.0 * thr.lp_penalty_mass + 1e-9 * (1.0 + thr.penalty_paid)
                );
                let scaled = scale_fractional(&rho, &thr.residual, &inst, v).unwrap();
                assert!(scaled.z.is_none());
            }
        }
    }

    #[test]
    fn assemble_merges_and_rejects_overlap() {
        let confl_sol = Solution {
            open: BTreeSet::from([0]),
            assignment: BTreeMap::from([(1, 0)]),
            ..Solution::default()
        };
        let thr = ThresholdResult {
            c_p: BTreeSet::from([0]),
            residual: BTreeSet::from([1]),
            penalty_paid: 1.0,
            lp_penalty_mass: 0.6,
        };
        let sol = assemble_conpfl(&confl_sol, &thr).unwrap();
        assert_eq!(sol.penalty_set, BTreeSet::from([0]));
        assert_eq!(sol.assignment, confl_sol.assignment);

        let empty_cp = ThresholdResult {
            c_p: BTreeSet::new(),
            residual: BTreeSet::from([0, 1]),
            penalty_paid: 0.0,
            lp_penalty_mass: 0.0,
        };
        let full = Solution {
            open: BTreeSet::from([0]),
            assignment: BTreeMap::from([(0, 0), (1, 0)]),
            ..Solution::default()
        };
        let sol = assemble_conpfl(&full, &empty_cp).unwrap();
        assert_eq!(sol.assignment, full.assignment);
        assert!(sol.penalty_set.is_empty());

        let clash = ThresholdResult {
            c_p: BTreeSet::from([1]),
            residual: BTreeSet::from([0]),
            penalty_paid: 1.0,
            lp_penalty_mass: 0.5,
        };
        assert!(matches!(
            assemble_conpfl(&full, &clash),
            Err(Error::Overlap(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn thresholding_partitions_and_pays_at_most_double(
            z in proptest::collection::vec(
                prop_oneof![4 => 0.0f64..1.0, 1 => Just(0.5), 1 => Just(0.25), 1 => Just(0.75)],
                1..=8,
            ),
            seed in 0u64..1000,
        ) {
            let inst = generate_euclidean(
                "thr",
                2,
                z.len(),
                seed,
                &GenConfig {
                    penalty: Some((0.1, 2.0)),
                    ..GenConfig::default()
                },
            )
            .unwrap();
            let thr = threshold_penalties(&frac_with_z(z.clone(), &inst), &inst);

            let all: BTreeSet<usize> = (0..z.len()).collect();
            let union: BTreeSet<usize> = thr.c_p.union(&thr.residual).copied().collect();
            prop_assert_eq!(union, all);
            prop_assert!(thr.c_p.is_disjoint(&thr.residual));
            for (j, &zj) in z.iter().enumerate() {
                if zj >= 0.5 {
                    prop_assert!(thr.c_p.contains(&j), "z[{}] = {} belongs in C_p", j, zj);
                }
                if zj < 0.5 - 1e-9 {
                    prop_assert!(thr.residual.contains(&j), "z[{}] = {} stays residual", j, zj);
                }
            }

            let paid: f64 = thr.c_p.iter().map(|&j| inst.penalty(j).unwrap()).sum();
            let mass: f64 = thr.c_p.iter().map(|&j| inst.penalty(j).unwrap() * z[j]).sum();
            prop_assert!((thr.penalty_paid - paid).abs() <= 1e-12 * (1.0 + paid));
            prop_assert!((thr.lp_penalty_mass - mass).abs() <= 1e-12 * (1.0 + mass));
            prop_assert!(thr.penalty_paid <= 2.0 * thr.lp_penalty_mass + 1e-9);
        }
    }
}
