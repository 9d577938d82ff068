//! The black-box sub-problem solvers the framework composes: local-search
//! capacitated facility location, LP-rounding connected facility location,
//! and exhaustive oracles for every variant at desk scale.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphalg::{min_cost_assignment, mst, steiner_via_closure, AssignmentProblem};
use crate::instance::{BaseKind, Instance, ProblemKind};
use crate::lp::{
    build_confl_lp, check_fl_feasibility, solve_with_cuts, CutPool, FractionalSolution, LP_TOL,
};

/// Exhaustive-oracle guard rails.
pub const EXACT_MAX_FACILITIES: usize = 8;
pub const EXACT_MAX_CLIENTS: usize = 12;
/// Cut-round budget handed to the LP layer.
const CUT_ROUNDS: usize = 10_000;
/// Relative improvement a local-search move must deliver to be accepted.
const LS_IMPROVEMENT: f64 = 1e-6;
/// Accepted-move budget for local search.
const LS_MOVE_BUDGET: usize = 10_000;
/// Opening threshold for LP rounding.
const ROUND_THETA: f64 = 0.5;

/// One solution shape serves every problem variant. Facilities and clients
/// are zero-based indices into the instance's declaration order; the CLI
/// layer translates to identifiers at the file boundary.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Solution {
    pub open: BTreeSet<usize>,
    pub assignment: BTreeMap<usize, usize>,
    pub penalty_set: BTreeSet<usize>,
    /// Facility pairs (a, b) with a < b; may pass through closed facilities.
    pub steiner_edges: BTreeSet<(usize, usize)>,
    /// Objective value asserted by whoever produced the solution, if any;
    /// the validator recomputes and compares.
    pub claimed_total: Option<f64>,
}

impl Solution {
    /// Clients served per facility.
    pub fn loads(&self) -> BTreeMap<usize, usize> {
        let mut loads = BTreeMap::new();
        for &i in self.assignment.values() {
            *loads.entry(i).or_insert(0) += 1;
        }
        loads
    }
}

/// Cost components of a solution; `total` is their sum and `radius` the
/// maximum service distance (the k-center objective).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub facility: f64,
    pub service: f64,
    pub connection: f64,
    pub penalty: f64,
    pub total: f64,
    pub radius: f64,
}

fn capacity_or_unlimited(inst: &Instance, i: usize, nc: usize) -> u64 {
    inst.capacity(i).unwrap_or(nc as u64)
}

fn assignment_for(
    inst: &Instance,
    open: &BTreeSet<usize>,
    with_penalties: bool,
) -> Result<(BTreeMap<usize, usize>, f64)> {
    let caps = |i: usize| inst.capacity(i);
    let dist = |i: usize, j: usize| inst.d_fc(i, j);
    let pen = |j: usize| inst.penalty(j).unwrap_or(f64::INFINITY);
    let a = min_cost_assignment(&AssignmentProblem {
        open_facilities: open,
        capacities: &caps,
        n_clients: inst.n_clients(),
        dist_fc: &dist,
        penalties: if with_penalties { Some(&pen) } else { None },
    })?;
    Ok((a.assigned, a.cost))
}

/// Local-search solver for capacitated facility location. Moves: open one,
/// close one, swap one open for one closed; after each candidate move the
/// clients are reassigned optimally by min-cost flow. A move is accepted
/// only when it improves total cost by more than a relative threshold, so
/// the search terminates. The seed fixes the initial open set and the move
/// scan order; identical (instance, seed) give identical output. When the
/// instance carries a cardinality bound k, every visited open set respects
/// it.
pub fn solve_cfl_local_search(inst: &Instance, seed: u64) -> Result<Solution> {
    let nf = inst.n_facilities();
    let nc = inst.n_clients();
    if nf == 0 {
        return Err(Error::Infeasible("no facilities".into()));
    }
    let k_limit = inst.k.unwrap_or(nf).min(nf);
    let cap_of = |i: usize| capacity_or_unlimited(inst, i, nc);
    let mut by_capacity: Vec<usize> = (0..nf).collect();
    by_capacity.sort_by_key(|&i| std::cmp::Reverse(cap_of(i)));
    let reachable: u64 = by_capacity.iter().take(k_limit).map(|&i| cap_of(i)).sum();
    if reachable < nc as u64 {
        return Err(Error::Infeasible(format!(
            "best {k_limit} facilities cover {reachable} of {nc} clients"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..nf).collect();
    order.shuffle(&mut rng);

    // Initial open set: shuffled prefix until capacity covers all clients,
    // falling back to the k largest capacities when the prefix cannot.
    let mut open = BTreeSet::new();
    let mut total_cap = 0u64;
    for &i in &order {
        if total_cap >= nc as u64 || open.len() == k_limit {
            break;
        }
        open.insert(i);
        total_cap += cap_of(i);
    }
    if total_cap < nc as u64 {
        open = by_capacity.iter().take(k_limit).copied().collect();
    }

    let cost_of = |open: &BTreeSet<usize>| -> Option<(BTreeMap<usize, usize>, f64)> {
        if open.is_empty() && nc > 0 {
            return None;
        }
        let cap: u64 = open.iter().map(|&i| cap_of(i)).sum();
        if cap < nc as u64 {
            return None;
        }
        let (assigned, service) = assignment_for(inst, open, false).ok()?;
        let facility: f64 = open.iter().map(|&i| inst.facilities[i].open_cost).sum();
        Some((assigned, facility + service))
    };

    let (mut assignment, mut current) =
        cost_of(&open).expect("initial open set is capacity-feasible");
    let mut accepted = 0usize;
    'search: while accepted < LS_MOVE_BUDGET {
        let mut candidates: Vec<BTreeSet<usize>> = Vec::new();
        for &i in &order {
            if !open.contains(&i) && open.len() < k_limit {
                let mut c = open.clone();
                c.insert(i);
                candidates.push(c);
            }
        }
        for &i in &order {
            if open.contains(&i) && open.len() > 1 {
                let mut c = open.clone();
                c.remove(&i);
                candidates.push(c);
            }
        }
        for &i in &order {
            if !open.contains(&i) {
                continue;
            }
            for &i2 in &order {
                if open.contains(&i2) {
                    continue;
                }
                let mut c = open.clone();
                c.remove(&i);
                c.insert(i2);
                candidates.push(c);
            }
        }
        for cand in candidates {
            if let Some((a, cost)) = cost_of(&cand) {
                if cost < current - LS_IMPROVEMENT * current {
                    open = cand;
                    assignment = a;
                    current = cost;
                    accepted += 1;
                    continue 'search;
                }
            }
        }
        break;
    }
    Ok(Solution {
        open,
        assignment,
        penalty_set: BTreeSet::new(),
        steiner_edges: BTreeSet::new(),
        claimed_total: None,
    })
}

/// Rounds a fractional connected-FL point: open the root plus every facility
/// with w at least 1/2; if a residual client has no open supported facility,
/// open its nearest supported one; assign residual clients to their nearest
/// open facility; connect the open set with a metric-closure Steiner tree
/// (closed facilities may serve as pass-through nodes). The input must pass
/// a full feasibility sweep first.
pub fn round_confl(
    frac: &FractionalSolution,
    inst: &Instance,
    residual_clients: &BTreeSet<usize>,
    v: usize,
) -> Result<Solution> {
    check_fl_feasibility(inst, frac, residual_clients, v, LP_TOL)?;
    let nf = inst.n_facilities();
    let mut open = BTreeSet::from([v]);
    for (i, &wi) in frac.w.iter().enumerate() {
        if wi + 1e-9 >= ROUND_THETA {
            open.insert(i);
        }
    }
    for &j in residual_clients {
        if open.iter().any(|&i| frac.x[i][j] > 1e-9) {
            continue;
        }
        let mut fallback: Option<(f64, usize)> = None;
        for i in 0..nf {
            if frac.x[i][j] > 1e-9 {
                let d = inst.d_fc(i, j);
                if fallback.map_or(true, |(bd, _)| d < bd - 1e-15) {
                    fallback = Some((d, i));
                }
            }
        }
        let Some((_, i)) = fallback else {
            // All of this client's mass sits on a penalty variable; the
            // caller should have thresholded it out of the residual set.
            return Err(Error::NotFeasibleFractional(format!(
                "residual client {j} has no positive service mass"
            )));
        };
        open.insert(i);
    }
    let mut assignment = BTreeMap::new();
    for &j in residual_clients {
        let i = *open
            .iter()
            .min_by(|&&a, &&b| {
                inst.d_fc(a, j)
                    .partial_cmp(&inst.d_fc(b, j))
                    .unwrap()
                    .then(a.cmp(&b))
            })
            .expect("open set is nonempty");
        assignment.insert(j, i);
    }
    let steiner_edges = if open.len() >= 2 {
        let all: BTreeSet<usize> = (0..nf).collect();
        steiner_via_closure(&open, &all, &|a, b| inst.edge(a, b)).0
    } else {
        BTreeSet::new()
    };
    Ok(Solution {
        open,
        assignment,
        penalty_set: BTreeSet::new(),
        steiner_edges,
        claimed_total: None,
    })
}

fn confl_total(inst: &Instance, sol: &Solution) -> f64 {
    let facility: f64 = sol.open.iter().map(|&i| inst.facilities[i].open_cost).sum();
    let service: f64 = sol.assignment.iter().map(|(&j, &i)| inst.d_fc(i, j)).sum();
    let connection: f64 = sol
        .steiner_edges
        .iter()
        .map(|&(a, b)| inst.connection_scale * inst.edge(a, b))
        .sum();
    facility + service + connection
}

/// Connected facility location on `residual_clients`: tries every root v,
/// solving the rooted LP relaxation by cutting planes and rounding it, and
/// keeps the cheapest rounded solution. Cuts found for one root seed the
/// next root's model.
pub fn solve_confl(inst: &Instance, residual_clients: &BTreeSet<usize>) -> Result<Solution> {
    if inst.n_facilities() == 0 {
        return Err(Error::Infeasible("no facilities".into()));
    }
    let mut pool = CutPool::new();
    let mut best: Option<(f64, Solution)> = None;
    for v in 0..inst.n_facilities() {
        let mut fl = build_confl_lp(inst, residual_clients, v)?;
        let frac = solve_with_cuts(&mut fl, inst, &mut pool, CUT_ROUNDS)?;
        let sol = round_confl(&frac, inst, residual_clients, v)?;
        let total = confl_total(inst, &sol);
        // Integral roundings are feasible for the relaxation they came from.
        assert!(
            total >= frac.objective - 1e-9 * (1.0 + frac.objective.abs()),
            "rounding beat its own relaxation: {total} < {}",
            frac.objective
        );
        if best.as_ref().map_or(true, |(bc, _)| total < bc - 1e-12) {
            best = Some((total, sol));
        }
    }
    Ok(best.expect("per-root loop ran at least once").1)
}

fn guard_rails(inst: &Instance) -> Result<()> {
    if inst.n_facilities() > EXACT_MAX_FACILITIES || inst.n_clients() > EXACT_MAX_CLIENTS {
        return Err(Error::TooLarge(format!(
            "{} facilities x {} clients exceeds exhaustive limits {}x{}",
            inst.n_facilities(),
            inst.n_clients(),
            EXACT_MAX_FACILITIES,
            EXACT_MAX_CLIENTS
        )));
    }
    Ok(())
}

/// Exact Steiner tree over facility nodes: the optimum equals the cheapest
/// MST among all facility supersets of the terminal set.
fn steiner_exact(inst: &Instance, terminals: &BTreeSet<usize>) -> (BTreeSet<(usize, usize)>, f64) {
    if terminals.len() <= 1 {
        return (BTreeSet::new(), 0.0);
    }
    let nf = inst.n_facilities();
    let base: u32 = terminals.iter().fold(0, |m, &i| m | 1 << i);
    let mut best: Option<(f64, BTreeSet<(usize, usize)>)> = None;
    for mask in 0..(1u32 << nf) {
        if mask & base != base {
            continue;
        }
        let nodes: BTreeSet<usize> = (0..nf).filter(|&i| mask & (1 << i) != 0).collect();
        let (edges, w) = mst(&nodes, &|a, b| inst.edge(a, b));
        if best.as_ref().map_or(true, |(bw, _)| w < bw - 1e-12) {
            best = Some((w, edges));
        }
    }
    let (w, edges) = best.expect("terminal superset exists");
    (edges, w)
}

/// Exhaustive optimum for any non-k-center kind within the guard rails:
/// enumerates open sets, assigns clients by min-cost flow (with per-client
/// penalty opt-out for prize-collecting kinds), and prices connectivity with
/// an exact Steiner tree. The empty open set is considered only when every
/// client may pay its penalty.
pub fn solve_exact(inst: &Instance, kind: ProblemKind) -> Result<Solution> {
    guard_rails(inst)?;
    kind.check_instance(inst)?;
    if kind.base == BaseKind::KC {
        let k = inst.k.expect("check_instance verified k");
        return solve_kc_exact(inst, k, kind.connected);
    }
    let nf = inst.n_facilities();
    let nc = inst.n_clients();
    let k_limit = if kind.requires_k() {
        inst.k.expect("check_instance verified k").min(nf)
    } else {
        nf
    };
    let start = if kind.prize_collecting { 0u32 } else { 1u32 };
    let mut best: Option<(f64, Solution)> = None;
    for mask in start..(1u32 << nf) {
        let open: BTreeSet<usize> = (0..nf).filter(|&i| mask & (1 << i) != 0).collect();
        if open.len() > k_limit {
            continue;
        }
        let (assignment, assign_cost) = if open.is_empty() {
            let all: f64 = inst
                .clients
                .iter()
                .map(|c| c.penalty.expect("prize-collecting kind"))
                .sum();
            (BTreeMap::new(), all)
        } else {
            let capped = |i: usize| {
                if kind.capacitated {
                    inst.capacity(i)
                } else {
                    None
                }
            };
            let dist = |i: usize, j: usize| inst.d_fc(i, j);
            let pen = |j: usize| inst.penalty(j).unwrap_or(f64::INFINITY);
            let problem = AssignmentProblem {
                open_facilities: &open,
                capacities: &capped,
                n_clients: nc,
                dist_fc: &dist,
                penalties: if kind.prize_collecting { Some(&pen) } else { None },
            };
            match min_cost_assignment(&problem) {
                Ok(a) => (a.assigned, a.cost),
                Err(Error::Infeasible(_)) => continue,
                Err(e) => return Err(e),
            }
        };
        let facility: f64 = open.iter().map(|&i| inst.facilities[i].open_cost).sum();
        let (steiner_edges, tree_w) = if kind.connected {
            steiner_exact(inst, &open)
        } else {
            (BTreeSet::new(), 0.0)
        };
        let total = facility + assign_cost + inst.connection_scale * tree_w;
        if best.as_ref().map_or(true, |(bc, _)| total < bc - 1e-12) {
            let penalty_set: BTreeSet<usize> = if kind.prize_collecting {
                (0..nc).filter(|j| !assignment.contains_key(j)).collect()
            } else {
                BTreeSet::new()
            };
            best = Some((
                total,
                Solution {
                    open,
                    assignment,
                    penalty_set,
                    steiner_edges,
                    claimed_total: None,
                },
            ));
        }
    }
    best.map(|(_, s)| s)
        .ok_or_else(|| Error::Infeasible("no open set can serve all clients".into()))
}

/// Minimal subtree of the all-facility MST spanning `terminals`. By the MST
/// minimax property its longest edge equals the optimal bottleneck
/// connection cost for the terminal set.
fn bottleneck_tree(
    inst: &Instance,
    terminals: &BTreeSet<usize>,
) -> (BTreeSet<(usize, usize)>, f64) {
    if terminals.len() <= 1 {
        return (BTreeSet::new(), 0.0);
    }
    let all: BTreeSet<usize> = (0..inst.n_facilities()).collect();
    let (mut tree, _) = mst(&all, &|a, b| inst.edge(a, b));
    loop {
        let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
        for &(a, b) in &tree {
            *degree.entry(a).or_insert(0) += 1;
            *degree.entry(b).or_insert(0) += 1;
        }
        let prunable: Vec<(usize, usize)> = tree
            .iter()
            .copied()
            .filter(|&(a, b)| {
                (degree[&a] == 1 && !terminals.contains(&a))
                    || (degree[&b] == 1 && !terminals.contains(&b))
            })
            .collect();
        if prunable.is_empty() {
            break;
        }
        for e in prunable {
            tree.remove(&e);
        }
    }
    let longest = tree
        .iter()
        .map(|&(a, b)| inst.edge(a, b))
        .fold(0.0f64, f64::max);
    (tree, longest)
}

fn kc_assignment_within(
    inst: &Instance,
    open: &BTreeSet<usize>,
    radius: f64,
) -> Option<(BTreeMap<usize, usize>, f64)> {
    const FAR: f64 = 1e12;
    let caps = |i: usize| inst.capacity(i);
    let dist = |i: usize, j: usize| {
        let d = inst.d_fc(i, j);
        if d <= radius + 1e-12 {
            d
        } else {
            FAR
        }
    };
    let a = min_cost_assignment(&AssignmentProblem {
        open_facilities: open,
        capacities: &caps,
        n_clients: inst.n_clients(),
        dist_fc: &dist,
        penalties: None,
    })
    .ok()?;
    let worst = a
        .assigned
        .iter()
        .map(|(&j, &i)| inst.d_fc(i, j))
        .fold(0.0f64, f64::max);
    if worst <= radius + 1e-12 {
        Some((a.assigned, worst))
    } else {
        None
    }
}

fn solve_kc_exact(inst: &Instance, k: usize, connected: bool) -> Result<Solution> {
    guard_rails(inst)?;
    let nf = inst.n_facilities();
    let nc = inst.n_clients();
    if nf == 0 {
        return Err(Error::Infeasible("no facilities".into()));
    }
    let k = k.min(nf);
    let mut radii: Vec<f64> = (0..nf)
        .flat_map(|i| (0..nc).map(move |j| inst.d_fc(i, j)))
        .collect();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    radii.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    // Objective: service radius, or for connected kinds max(radius, longest
    // tree edge). Ties prefer the earlier (smaller) open-set mask.
    let mut best: Option<(f64, f64, Solution)> = None;
    for mask in 1u32..(1 << nf) {
        let open: BTreeSet<usize> = (0..nf).filter(|&i| mask & (1 << i) != 0).collect();
        if open.len() > k {
            continue;
        }
        let feasible = |ri: usize| kc_assignment_within(inst, &open, radii[ri]);
        let found = if nc == 0 {
            Some((BTreeMap::new(), 0.0))
        } else if feasible(radii.len() - 1).is_none() {
            None
        } else {
            // Binary search the smallest feasible candidate radius.
            let mut lo = 0usize;
            let mut hi = radii.len() - 1;
            while lo < hi {
                let mid = (lo + hi) / 2;
                if feasible(mid).is_some() {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            feasible(lo)
        };
        let Some((assignment, radius)) = found else {
            continue;
        };
        let (steiner_edges, longest) = if connected {
            bottleneck_tree(inst, &open)
        } else {
            (BTreeSet::new(), 0.0)
        };
        let objective = radius.max(longest);
        if best
            .as_ref()
            .map_or(true, |(bo, _, _)| objective < bo - 1e-12)
        {
            best = Some((
                objective,
                radius,
                Solution {
                    open,
                    assignment,
                    penalty_set: BTreeSet::new(),
                    steiner_edges,
                    claimed_total: None,
                },
            ));
        }
    }
    best.map(|(_, _, s)| s)
        .ok_or_else(|| Error::Infeasible("no feasible open set within k".into()))
}

/// Exact capacitated k-center: minimum service radius over open sets of size
/// at most k with a capacity-respecting assignment.
pub fn solve_ckc_exact(inst: &Instance, k: usize) -> Result<Solution> {
    solve_kc_exact(inst, k, false)
}

/// Exact connected k-center: like [`solve_ckc_exact`] but the objective is
/// the bottleneck max(service radius, longest Steiner tree edge).
pub fn solve_conkc_exact(inst: &Instance, k: usize) -> Result<Solution> {
    solve_kc_exact(inst, k, true)
}
