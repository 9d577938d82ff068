//! Cost accounting, feasibility validation under violation policies, and
//! certificate checking. The validator is the one auditor every pipeline
//! output must satisfy; it trusts nothing the solvers claim.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::combine::BoundCertificate;
use crate::error::{Error, Result};
use crate::graphalg::is_connected;
use crate::instance::{BaseKind, Instance, ProblemKind};
use crate::subsolvers::{CostBreakdown, Solution};

/// Slack tolerance for certificate inequalities.
pub const CERT_TOL: f64 = 1e-9;

/// Violation allowances, expressed as multiplicative factors so sub-solvers
/// with bounded capacity or cardinality blowup can be audited honestly.
/// Shipped solvers are validated at factor 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationPolicy {
    pub capacity_violation_gamma: f64,
    pub cardinality_violation: f64,
    pub tolerance: f64,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        ValidationPolicy {
            capacity_violation_gamma: 1.0,
            cardinality_violation: 1.0,
            tolerance: 1e-9,
        }
    }
}

impl ValidationPolicy {
    pub fn with_gamma(gamma: f64) -> Self {
        ValidationPolicy {
            capacity_violation_gamma: gamma,
            ..ValidationPolicy::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    UnservedClient,
    ClosedAssignment,
    CapacityExceeded,
    CardinalityExceeded,
    DisconnectedOpenSet,
    PenaltyOverlap,
    CostMismatch,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationCode::UnservedClient => "UNSERVED_CLIENT",
            ViolationCode::ClosedAssignment => "CLOSED_ASSIGNMENT",
            ViolationCode::CapacityExceeded => "CAPACITY_EXCEEDED",
            ViolationCode::CardinalityExceeded => "CARDINALITY_EXCEEDED",
            ViolationCode::DisconnectedOpenSet => "DISCONNECTED_OPEN_SET",
            ViolationCode::PenaltyOverlap => "PENALTY_OVERLAP",
            ViolationCode::CostMismatch => "COST_MISMATCH",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<(ViolationCode, String)>,
}

impl ValidationReport {
    fn from(violations: Vec<(ViolationCode, String)>) -> Self {
        ValidationReport {
            ok: violations.is_empty(),
            violations,
        }
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|(c, _)| *c == code)
    }
}

fn check_indices(inst: &Instance, sol: &Solution) -> Result<()> {
    let nf = inst.n_facilities();
    let nc = inst.n_clients();
    for &i in &sol.open {
        if i >= nf {
            return Err(Error::UnknownId(format!("open facility index {i}")));
        }
    }
    for (&j, &i) in &sol.assignment {
        if j >= nc {
            return Err(Error::UnknownId(format!("assigned client index {j}")));
        }
        if i >= nf {
            return Err(Error::UnknownId(format!("assignment target index {i}")));
        }
    }
    for &j in &sol.penalty_set {
        if j >= nc {
            return Err(Error::UnknownId(format!("penalty client index {j}")));
        }
    }
    for &(a, b) in &sol.steiner_edges {
        if a >= nf || b >= nf {
            return Err(Error::UnknownId(format!("steiner edge ({a}, {b})")));
        }
    }
    Ok(())
}

/// Cost components of an integral solution. `radius` is filled for k-center
/// kinds and zero otherwise; every other component is kind-independent.
pub fn evaluate(inst: &Instance, sol: &Solution, kind: ProblemKind) -> Result<CostBreakdown> {
    check_indices(inst, sol)?;
    // Empty sums yield -0.0; adding 0.0 normalizes the sign for records.
    let facility: f64 =
        sol.open.iter().map(|&i| inst.facilities[i].open_cost).sum::<f64>() + 0.0;
    let service: f64 =
        sol.assignment.iter().map(|(&j, &i)| inst.d_fc(i, j)).sum::<f64>() + 0.0;
    let connection: f64 = sol
        .steiner_edges
        .iter()
        .map(|&(a, b)| inst.connection_scale * inst.edge(a, b))
        .sum::<f64>()
        + 0.0;
    let mut penalty = 0.0;
    for &j in &sol.penalty_set {
        penalty += inst.penalty(j).ok_or_else(|| {
            Error::MissingPenalty(format!("client {} pays a penalty it does not define", j))
        })?;
    }
    let radius = if kind.base == BaseKind::KC {
        sol.assignment
            .iter()
            .map(|(&j, &i)| inst.d_fc(i, j))
            .fold(0.0f64, f64::max)
    } else {
        0.0
    };
    Ok(CostBreakdown {
        facility,
        service,
        connection,
        penalty,
        total: facility + service + connection + penalty,
        radius,
    })
}

/// The quantity a kind minimizes: the additive total for facility-location
/// kinds, the bottleneck max(service radius, longest scaled tree edge) for
/// k-center kinds.
pub fn objective_value(inst: &Instance, sol: &Solution, kind: ProblemKind) -> Result<f64> {
    let breakdown = evaluate(inst, sol, kind)?;
    if kind.base == BaseKind::KC {
        let longest = sol
            .steiner_edges
            .iter()
            .map(|&(a, b)| inst.connection_scale * inst.edge(a, b))
            .fold(0.0f64, f64::max);
        Ok(breakdown.radius.max(longest))
    } else {
        Ok(breakdown.total)
    }
}

/// Audits a solution against its kind. Findings are reported, never raised;
/// a structurally alien solution (indices outside the instance) is reported
/// under the nearest code so the function stays total.
pub fn validate(
    inst: &Instance,
    sol: &Solution,
    kind: ProblemKind,
    policy: &ValidationPolicy,
) -> ValidationReport {
    let nf = inst.n_facilities();
    let nc = inst.n_clients();
    let mut v: Vec<(ViolationCode, String)> = Vec::new();

    let mut structural = false;
    for &i in &sol.open {
        if i >= nf {
            v.push((
                ViolationCode::ClosedAssignment,
                format!("open set names facility index {i}, instance has {nf}"),
            ));
            structural = true;
        }
    }
    for (&j, &i) in &sol.assignment {
        if j >= nc || i >= nf {
            v.push((
                ViolationCode::ClosedAssignment,
                format!("assignment ({j} -> {i}) outside instance"),
            ));
            structural = true;
        }
    }
    for &j in &sol.penalty_set {
        if j >= nc {
            v.push((
                ViolationCode::UnservedClient,
                format!("penalty set names client index {j}, instance has {nc}"),
            ));
            structural = true;
        }
    }
    for &(a, b) in &sol.steiner_edges {
        if a >= nf || b >= nf {
            v.push((
                ViolationCode::DisconnectedOpenSet,
                format!("steiner edge ({a}, {b}) outside instance"),
            ));
            structural = true;
        }
    }
    if structural {
        return ValidationReport::from(v);
    }

    for j in 0..nc {
        let assigned = sol.assignment.contains_key(&j);
        let paying = sol.penalty_set.contains(&j);
        if kind.prize_collecting {
            if assigned && paying {
                v.push((
                    ViolationCode::PenaltyOverlap,
                    format!("client {j} is both served and paying its penalty"),
                ));
            }
            if !assigned && !paying {
                v.push((
                    ViolationCode::UnservedClient,
                    format!("client {j} is neither served nor paying"),
                ));
            }
        } else {
            if paying {
                v.push((
                    ViolationCode::PenaltyOverlap,
                    format!("client {j} pays a penalty but the kind has none"),
                ));
            }
            if !assigned {
                v.push((
                    ViolationCode::UnservedClient,
                    format!("client {j} is not served"),
                ));
            }
        }
    }

    for (&j, &i) in &sol.assignment {
        if !sol.open.contains(&i) {
            v.push((
                ViolationCode::ClosedAssignment,
                format!("client {j} assigned to closed facility {i}"),
            ));
        }
    }

    if kind.capacitated {
        let loads = sol.loads();
        for (&i, &load) in &loads {
            if let Some(u) = inst.capacity(i) {
                let allowed = policy.capacity_violation_gamma * u as f64;
                if load as f64 > allowed + policy.tolerance {
                    v.push((
                        ViolationCode::CapacityExceeded,
                        format!("facility {i} serves {load}, allowed {allowed}"),
                    ));
                }
            }
        }
    }

    if kind.requires_k() {
        if let Some(k) = inst.k {
            let allowed = policy.cardinality_violation * k as f64;
            if sol.open.len() as f64 > allowed + policy.tolerance {
                v.push((
                    ViolationCode::CardinalityExceeded,
                    format!("{} facilities open, allowed {allowed}", sol.open.len()),
                ));
            }
        }
    }

    if kind.connected && sol.open.len() >= 2 {
        let (connected, components) = is_connected(&sol.open, &sol.steiner_edges);
        if !connected {
            v.push((
                ViolationCode::DisconnectedOpenSet,
                format!("open set splits into {} components", components.len()),
            ));
        }
    }

    if let Some(claimed) = sol.claimed_total {
        match objective_value(inst, sol, kind) {
            Ok(actual) => {
                if (claimed - actual).abs() > policy.tolerance * (1.0 + actual.abs()) {
                    v.push((
                        ViolationCode::CostMismatch,
                        format!("claimed {claimed}, recomputed {actual}"),
                    ));
                }
            }
            Err(e) => {
                v.push((
                    ViolationCode::CostMismatch,
                    format!("claimed {claimed} but recomputation failed: {e}"),
                ));
            }
        }
    }

    ValidationReport::from(v)
}

/// A certificate stands iff its slack is nonnegative up to tolerance.
pub fn certify_bound(cert: &BoundCertificate) -> bool {
    cert.inequality_slack >= -CERT_TOL
}
