//! Combining algorithms: merge a capacitated-side solution with a
//! connected-side solution into one solution feasible for the composed
//! problem, and certify the cost inequality the construction guarantees.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{BaseKind, Instance, ProblemKind};
use crate::subsolvers::{CostBreakdown, Solution};
use crate::verify::{evaluate, objective_value, validate, ValidationPolicy};

/// The edge added for one surviving facility: its witness client j is served
/// by i on the capacitated side and by i' on the connected side, so the
/// metric bounds the direct i-i' edge by d(i,j) + d(j,i').
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessEdge {
    pub cap_facility: usize,
    pub witness_client: usize,
    pub con_facility: usize,
    pub bound: f64,
    pub actual: f64,
}

/// Per-run record of the combining inequality
/// combined_total <= con_total + 2 * cap_total.
/// For k-center kinds the totals are bottleneck objectives, otherwise
/// additive totals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub combined_total: f64,
    pub con_total: f64,
    pub cap_total: f64,
    pub inequality_slack: f64,
    pub combined: CostBreakdown,
    pub con: CostBreakdown,
    pub cap: CostBreakdown,
    pub witness_edges: Vec<WitnessEdge>,
}

impl BoundCertificate {
    fn new(
        combined_total: f64,
        con_total: f64,
        cap_total: f64,
        combined: CostBreakdown,
        con: CostBreakdown,
        cap: CostBreakdown,
        witness_edges: Vec<WitnessEdge>,
    ) -> Self {
        BoundCertificate {
            combined_total,
            con_total,
            cap_total,
            inequality_slack: con_total + 2.0 * cap_total - combined_total,
            combined,
            con,
            cap,
            witness_edges,
        }
    }
}

/// Which symbolic factor composition a pipeline reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComposeRule {
    ConPlus2Cap,
    TwoCapPlusCon,
    Double,
}

/// Symbolic guarantee arithmetic: alpha is the connected-side factor, beta
/// the capacitated-side factor.
pub fn compose_guarantee(alpha: f64, beta: f64, rule: ComposeRule) -> f64 {
    match rule {
        ComposeRule::ConPlus2Cap => alpha + 2.0 * beta,
        ComposeRule::TwoCapPlusCon => 2.0 * alpha + beta,
        ComposeRule::Double => 2.0 * alpha,
    }
}

fn demand_valid(
    inst: &Instance,
    sol: &Solution,
    kind: ProblemKind,
    side: &str,
) -> Result<()> {
    let report = validate(inst, sol, kind, &ValidationPolicy::default());
    if !report.ok {
        let (code, detail) = &report.violations[0];
        return Err(Error::InfeasibleInput(format!(
            "{side} side fails as {kind}: {code}: {detail}"
        )));
    }
    Ok(())
}

/// For each facility in `survivors` pick the assigned client minimizing
/// d(i,j) + d(j, con(j)), ties to the lowest client index, and emit the
/// corresponding facility-facility edge.
fn witness_edges(
    inst: &Instance,
    survivors: &BTreeSet<usize>,
    cap_assignment: &BTreeMap<usize, usize>,
    con_assignment: &BTreeMap<usize, usize>,
) -> Vec<WitnessEdge> {
    let mut edges = Vec::new();
    for &i in survivors {
        let mut best: Option<(f64, usize, usize)> = None;
        for (&j, &ci) in cap_assignment {
            if ci != i {
                continue;
            }
            let ip = con_assignment[&j];
            let bound = inst.d_fc(i, j) + inst.d_fc(ip, j);
            if best.map_or(true, |(bb, _, _)| bound < bb - 1e-15) {
                best = Some((bound, j, ip));
            }
        }
        let (bound, j, ip) = best.expect("survivor serves at least one client");
        if ip == i {
            continue;
        }
        let actual = inst.edge(i, ip);
        assert!(
            actual <= bound + 1e-9,
            "witness edge ({i}, {ip}) costs {actual}, bound {bound}"
        );
        edges.push(WitnessEdge {
            cap_facility: i,
            witness_client: j,
            con_facility: ip,
            bound,
            actual,
        });
    }
    edges
}

fn merge_tree(
    con_tree: &BTreeSet<(usize, usize)>,
    witnesses: &[WitnessEdge],
) -> BTreeSet<(usize, usize)> {
    let mut tree = con_tree.clone();
    for w in witnesses {
        let (a, b) = (
            w.cap_facility.min(w.con_facility),
            w.cap_facility.max(w.con_facility),
        );
        tree.insert((a, b));
    }
    tree
}

/// Merge a connected-side and a capacitated-side solution for the same
/// instance. The capacitated side supplies openings and the assignment
/// (capacities inherited exactly); zero-load facilities are closed; the
/// connected side's tree plus one witness edge per surviving facility
/// provides connectivity, with con-side facilities as pass-through nodes.
pub fn combine_connected_capacitated(
    con: &Solution,
    cap: &Solution,
    inst: &Instance,
) -> Result<(Solution, BoundCertificate)> {
    let con_kind = ProblemKind::new(BaseKind::FL).connected();
    let cap_kind = ProblemKind::new(BaseKind::FL).capacitated();
    demand_valid(inst, con, con_kind, "connected")?;
    demand_valid(inst, cap, cap_kind, "capacitated")?;

    let survivors: BTreeSet<usize> = cap.assignment.values().copied().collect();
    let witnesses = witness_edges(inst, &survivors, &cap.assignment, &con.assignment);
    let combined = Solution {
        open: survivors,
        assignment: cap.assignment.clone(),
        penalty_set: BTreeSet::new(),
        steiner_edges: merge_tree(&con.steiner_edges, &witnesses),
        claimed_total: None,
    };

    let kind = ProblemKind::new(BaseKind::FL).connected().capacitated();
    let combined_bd = evaluate(inst, &combined, kind)?;
    let con_bd = evaluate(inst, con, con_kind)?;
    let cap_bd = evaluate(inst, cap, cap_kind)?;
    let cert = BoundCertificate::new(
        combined_bd.total,
        con_bd.total,
        cap_bd.total,
        combined_bd,
        con_bd,
        cap_bd,
        witnesses,
    );
    assert!(
        cert.inequality_slack >= -1e-9,
        "combining inequality violated: slack {}",
        cert.inequality_slack
    );
    Ok((combined, cert))
}

/// Penalty-aware combine: clients paying in either input pay in the union;
/// the rest keep the capacitated assignment. Facilities whose entire load
/// moved into the union penalty set are closed. Each surviving facility's
/// witness client is served in both inputs, so the edge bounds carry over.
pub fn combine_penalty(
    con: &Solution,
    cap: &Solution,
    inst: &Instance,
) -> Result<(Solution, BoundCertificate)> {
    let con_kind = ProblemKind::new(BaseKind::FL).connected().prize_collecting();
    let cap_kind = ProblemKind::new(BaseKind::FL).capacitated().prize_collecting();
    demand_valid(inst, con, con_kind, "connected")?;
    demand_valid(inst, cap, cap_kind, "capacitated")?;

    let penalty_set: BTreeSet<usize> = con.penalty_set.union(&cap.penalty_set).copied().collect();
    let assignment: BTreeMap<usize, usize> = cap
        .assignment
        .iter()
        .filter(|(j, _)| !penalty_set.contains(j))
        .map(|(&j, &i)| (j, i))
        .collect();
    let survivors: BTreeSet<usize> = assignment.values().copied().collect();
    let witnesses = witness_edges(inst, &survivors, &assignment, &con.assignment);
    let steiner_edges = if survivors.is_empty() {
        BTreeSet::new()
    } else {
        merge_tree(&con.steiner_edges, &witnesses)
    };
    let combined = Solution {
        open: survivors,
        assignment,
        penalty_set,
        steiner_edges,
        claimed_total: None,
    };

    let kind = ProblemKind::new(BaseKind::FL)
        .connected()
        .capacitated()
        .prize_collecting();
    let combined_bd = evaluate(inst, &combined, kind)?;
    let con_bd = evaluate(inst, con, con_kind)?;
    let cap_bd = evaluate(inst, cap, cap_kind)?;
    let cert = BoundCertificate::new(
        combined_bd.total,
        con_bd.total,
        cap_bd.total,
        combined_bd,
        con_bd,
        cap_bd,
        witnesses,
    );
    assert!(
        cert.inequality_slack >= -1e-9,
        "combining inequality violated: slack {}",
        cert.inequality_slack
    );
    Ok((combined, cert))
}

/// k-center combine: openings, assignment and hence the service radius come
/// from the capacitated side; connectivity from the connected side's tree
/// plus witness edges, each of length at most r_cap + r_con. Certificate
/// totals are bottleneck objectives.
pub fn combine_kcenter(
    con: &Solution,
    cap: &Solution,
    inst: &Instance,
    k: usize,
) -> Result<(Solution, BoundCertificate)> {
    if cap.open.len() > k || con.open.len() > k {
        return Err(Error::CardinalityExceeded(format!(
            "inputs open {} and {} facilities, budget {k}",
            cap.open.len(),
            con.open.len()
        )));
    }
    let con_kind = ProblemKind::new(BaseKind::KC).connected();
    let cap_kind = ProblemKind::new(BaseKind::KC).capacitated();
    demand_valid(inst, con, con_kind, "connected")?;
    demand_valid(inst, cap, cap_kind, "capacitated")?;

    let survivors: BTreeSet<usize> = cap.assignment.values().copied().collect();
    let witnesses = witness_edges(inst, &survivors, &cap.assignment, &con.assignment);
    let combined = Solution {
        open: survivors,
        assignment: cap.assignment.clone(),
        penalty_set: BTreeSet::new(),
        steiner_edges: merge_tree(&con.steiner_edges, &witnesses),
        claimed_total: None,
    };

    let kind = ProblemKind::new(BaseKind::KC).connected().capacitated();
    let combined_bd = evaluate(inst, &combined, kind)?;
    let con_bd = evaluate(inst, con, con_kind)?;
    let cap_bd = evaluate(inst, cap, cap_kind)?;
    let r_cap = cap_bd.radius;
    let r_con = con_bd.radius;
    for w in &witnesses {
        assert!(
            w.actual <= r_cap + r_con + 1e-9,
            "witness edge {} exceeds r_cap + r_con = {}",
            w.actual,
            r_cap + r_con
        );
    }
    let cert = BoundCertificate::new(
        objective_value(inst, &combined, kind)?,
        objective_value(inst, con, con_kind)?,
        objective_value(inst, cap, cap_kind)?,
        combined_bd,
        con_bd,
        cap_bd,
        witnesses,
    );
    assert!(
        cert.inequality_slack >= -1e-9,
        "combining inequality violated: slack {}",
        cert.inequality_slack
    );
    Ok((combined, cert))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::instance::{generate_euclidean, GenConfig};
    use crate::verify::certify_bound;

    fn line_instance() -> Instance {
        // Facilities at 0 and 10 on a line, clients at 2 and 8.
        Instance::from_json(
            r#"{
                "name": "line",
                "facilities": [
                    {"id": "f0", "open_cost": 1.0, "capacity": 2},
                    {"id": "f1", "open_cost": 1.0, "capacity": 2}
                ],
                "clients": [
                    {"id": "c0", "penalty": 4.0},
                    {"id": "c1", "penalty": 4.0}
                ],
                "points": [[0, 0], [10, 0], [2, 0], [8, 0]]
            }"#,
        )
        .unwrap()
    }

    fn sol(
        open: &[usize],
        assignment: &[(usize, usize)],
        penalty: &[usize],
        edges: &[(usize, usize)],
    ) -> Solution {
        Solution {
            open: open.iter().copied().collect(),
            assignment: assignment.iter().copied().collect(),
            penalty_set: penalty.iter().copied().collect(),
            steiner_edges: edges.iter().copied().collect(),
            claimed_total: None,
        }
    }

    #[test]
    fn same_single_facility_is_identity() {
        let inst = line_instance();
        let both = sol(&[0], &[(0, 0), (1, 0)], &[], &[]);
        let (combined, cert) = combine_connected_capacitated(&both, &both, &inst).unwrap();
        assert_eq!(combined.open, both.open);
        assert_eq!(combined.assignment, both.assignment);
        assert!(combined.steiner_edges.is_empty());
        // combined = cap, so slack collapses to con.total + cap.total.
        assert!((cert.inequality_slack - (cert.con_total + cert.cap_total)).abs() < 1e-9);
        assert!(certify_bound(&cert));
    }

    #[test]
    fn witness_edge_respects_triangle_bound() {
        let inst = line_instance();
        // Cap side opens both ends; con side serves everyone from f0.
        let cap = sol(&[0, 1], &[(0, 0), (1, 1)], &[], &[]);
        let con = sol(&[0], &[(0, 0), (1, 0)], &[], &[]);
        let (combined, cert) = combine_connected_capacitated(&con, &cap, &inst).unwrap();
        assert_eq!(cert.witness_edges.len(), 1);
        let w = cert.witness_edges[0];
        assert_eq!(w.cap_facility, 1);
        assert_eq!(w.witness_client, 1);
        assert_eq!(w.con_facility, 0);
        // d(f1, c1) = 2, d(c1, f0) = 8.
        assert!((w.bound - 10.0).abs() < 1e-9);
        assert!(w.actual <= w.bound + 1e-9);
        assert!(combined.steiner_edges.contains(&(0, 1)));
        assert!(certify_bound(&cert));
    }

    #[test]
    fn zero_load_facilities_are_closed() {
        let inst = line_instance();
        let cap = sol(&[0, 1], &[(0, 0), (1, 0)], &[], &[]);
        let con = sol(&[0], &[(0, 0), (1, 0)], &[], &[]);
        let (combined, _) = combine_connected_capacitated(&con, &cap, &inst).unwrap();
        assert_eq!(combined.open, [0].into_iter().collect());
    }

    #[test]
    fn infeasible_inputs_are_rejected() {
        let inst = line_instance();
        let good = sol(&[0], &[(0, 0), (1, 0)], &[], &[]);
        let unserved = sol(&[0], &[(0, 0)], &[], &[]);
        assert!(matches!(
            combine_connected_capacitated(&good, &unserved, &inst),
            Err(Error::InfeasibleInput(_))
        ));
        let overloaded = sol(&[0, 1], &[(0, 1), (1, 1)], &[], &[]);
        let mut tight = inst.clone();
        tight.facilities[1].capacity = Some(1);
        assert!(matches!(
            combine_connected_capacitated(&good, &overloaded, &tight),
            Err(Error::InfeasibleInput(_))
        ));
        let disconnected = sol(&[0, 1], &[(0, 0), (1, 1)], &[], &[]);
        assert!(matches!(
            combine_connected_capacitated(&disconnected, &good, &inst),
            Err(Error::InfeasibleInput(_))
        ));
    }

    #[test]
    fn penalty_union_and_swallowed_facility() {
        let inst = line_instance();
        // Cap side serves c1 from f1 and pays for c0; con side pays for c1.
        let cap = sol(&[1], &[(1, 1)], &[0], &[]);
        let con = sol(&[0], &[(0, 0)], &[1], &[]);
        let (combined, cert) = combine_penalty(&con, &cap, &inst).unwrap();
        // Union pays both clients; f1 loses its only witness and closes.
        assert_eq!(combined.penalty_set, [0, 1].into_iter().collect());
        assert!(combined.open.is_empty());
        assert!(combined.assignment.is_empty());
        assert!(combined.steiner_edges.is_empty());
        assert!(certify_bound(&cert));
        assert!((cert.combined.penalty - 8.0).abs() < 1e-9);
    }

    #[test]
    fn penalty_combine_keeps_served_clients() {
        let inst = line_instance();
        let cap = sol(&[0, 1], &[(0, 0), (1, 1)], &[], &[]);
        let con = sol(&[0], &[(0, 0)], &[1], &[]);
        let (combined, cert) = combine_penalty(&con, &cap, &inst).unwrap();
        assert_eq!(combined.penalty_set, [1].into_iter().collect());
        assert_eq!(combined.assignment, [(0, 0)].into_iter().collect());
        assert_eq!(combined.open, [0].into_iter().collect());
        assert!(certify_bound(&cert));
    }

    #[test]
    fn kcenter_combine_and_budget() {
        let inst = line_instance();
        let cap = sol(&[0, 1], &[(0, 0), (1, 1)], &[], &[]);
        let con = sol(&[0], &[(0, 0), (1, 0)], &[], &[]);
        let mut with_k = inst.clone();
        with_k.k = Some(2);
        let (combined, cert) = combine_kcenter(&con, &cap, &with_k, 2).unwrap();
        assert_eq!(combined.open.len(), 2);
        // r_cap = 2, r_con = 8; the witness edge is within r_cap + r_con.
        for w in &cert.witness_edges {
            assert!(w.actual <= 10.0 + 1e-9);
        }
        assert!(certify_bound(&cert));
        assert!(matches!(
            combine_kcenter(&con, &cap, &with_k, 1),
            Err(Error::CardinalityExceeded(_))
        ));
    }

    #[test]
    fn compose_guarantee_arithmetic() {
        assert!((compose_guarantee(3.19, 3.0, ComposeRule::ConPlus2Cap) - 9.19).abs() < 1e-12);
        assert!((compose_guarantee(3.19, 5.0, ComposeRule::ConPlus2Cap) - 13.19).abs() < 1e-12);
        assert!((compose_guarantee(10.66, 0.0, ComposeRule::Double) - 21.32).abs() < 1e-12);
        assert!((compose_guarantee(21.32, 5.0, ComposeRule::ConPlus2Cap) - 31.32).abs() < 1e-12);
        assert!((compose_guarantee(6.0, 6.0, ComposeRule::TwoCapPlusCon) - 18.0).abs() < 1e-12);
    }

    #[test]
    fn combined_loads_match_cap_loads() {
        let cfg = GenConfig {
            capacity: Some((2, 3)),
            ..GenConfig::default()
        };
        for seed in 0..10 {
            let inst = generate_euclidean("loads", 4, 6, 100 + seed, &cfg).unwrap();
            let cap = crate::subsolvers::solve_cfl_local_search(&inst, seed).unwrap();
            let con = crate::subsolvers::solve_confl(
                &crate::instance::drop_capacities(&inst),
                &(0..6).collect(),
            )
            .unwrap();
            let (combined, cert) = combine_connected_capacitated(&con, &cap, &inst).unwrap();
            assert_eq!(combined.loads(), cap.loads());
            assert!(combined.open.len() <= cap.open.len());
            assert!(certify_bound(&cert));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn certificates_hold_on_random_instances(
            nf in 3usize..=5,
            nc in 4usize..=8,
            uniform in proptest::bool::ANY,
            seed in 0u64..5000,
        ) {
            let lo = nc.div_ceil(nf).max(2) as u64;
            let cfg = GenConfig {
                capacity: Some(if uniform { (lo, lo) } else { (lo, lo + 3) }),
                ..GenConfig::default()
            };
            let inst = generate_euclidean("cert", nf, nc, seed, &cfg).unwrap();
            let cap = crate::subsolvers::solve_cfl_local_search(&inst, seed).unwrap();
            let con = crate::subsolvers::solve_confl(
                &crate::instance::drop_capacities(&inst),
                &(0..nc).collect(),
            )
            .unwrap();
            let (combined, cert) = combine_connected_capacitated(&con, &cap, &inst).unwrap();

            prop_assert!(cert.inequality_slack >= -1e-9);
            prop_assert!(certify_bound(&cert));
            // Triangle-inequality reroute bound per repaired edge.
            for we in &cert.witness_edges {
                prop_assert!(we.actual <= we.bound + 1e-9);
                prop_assert_eq!(cap.assignment.get(&we.witness_client), Some(&we.cap_facility));
                prop_assert_eq!(con.assignment.get(&we.witness_client), Some(&we.con_facility));
            }

            let kind = ProblemKind::new(BaseKind::FL).connected().capacitated();
            let report = crate::verify::validate(
                &inst,
                &combined,
                kind,
                &crate::verify::ValidationPolicy::default(),
            );
            prop_assert!(report.ok, "combined output invalid: {:?}", report.violations);
        }
    }
}
