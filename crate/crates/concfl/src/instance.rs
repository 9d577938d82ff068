//! Problem instances: on-disk format, metric validation, seeded generators,
//! and the constraint-dropping views that produce sub-problem instances.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for metric checks (symmetry, triangle inequality,
/// agreement between supplied distances and coordinates).
pub const METRIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilitySpec {
    pub id: String,
    pub open_cost: f64,
    /// Maximum number of clients this facility may serve; absent means
    /// uncapacitated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSpec {
    pub id: String,
    /// Cost of leaving this client unserved; absent means the client must be
    /// served.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
}

/// Base objective of a problem variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaseKind {
    /// Facility location: opening costs, no cardinality bound.
    FL,
    /// k-median: at most k open facilities, opening costs typically zero.
    KM,
    /// k-facility location: opening costs and a cardinality bound.
    KFL,
    /// k-center: minimize the maximum service distance.
    KC,
}

/// A problem variant: a base objective plus the three orthogonal constraint
/// toggles the toolkit knows how to add.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemKind {
    pub base: BaseKind,
    pub capacitated: bool,
    pub connected: bool,
    pub prize_collecting: bool,
}

impl ProblemKind {
    pub const fn new(base: BaseKind) -> Self {
        ProblemKind {
            base,
            capacitated: false,
            connected: false,
            prize_collecting: false,
        }
    }

    pub const fn capacitated(mut self) -> Self {
        self.capacitated = true;
        self
    }

    pub const fn connected(mut self) -> Self {
        self.connected = true;
        self
    }

    pub const fn prize_collecting(mut self) -> Self {
        self.prize_collecting = true;
        self
    }

    pub fn requires_k(&self) -> bool {
        matches!(self.base, BaseKind::KM | BaseKind::KFL | BaseKind::KC)
    }

    /// Parses names like "fl", "cfl", "concpfl", "conckc". Order of prefixes
    /// is fixed: connectivity ("con"), capacities ("c"), penalties ("p"),
    /// then the base kind.
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let mut rest = lower.as_str();
        let mut kind = ProblemKind::new(BaseKind::FL);
        if let Some(r) = rest.strip_prefix("con") {
            kind.connected = true;
            rest = r;
        }
        // "c" prefix is unambiguous: no base name starts with 'c'.
        if rest.len() > 2 {
            if let Some(r) = rest.strip_prefix('c') {
                kind.capacitated = true;
                rest = r;
            }
        }
        if let Some(r) = rest.strip_prefix('p') {
            kind.prize_collecting = true;
            rest = r;
        }
        kind.base = match rest {
            "fl" => BaseKind::FL,
            "km" => BaseKind::KM,
            "kfl" => BaseKind::KFL,
            "kc" => BaseKind::KC,
            _ => return Err(Error::Parse(format!("unknown problem kind `{s}`"))),
        };
        Ok(kind)
    }

    pub fn name(&self) -> String {
        let mut s = String::new();
        if self.connected {
            s.push_str("con");
        }
        if self.capacitated {
            s.push('c');
        }
        if self.prize_collecting {
            s.push('p');
        }
        s.push_str(match self.base {
            BaseKind::FL => "fl",
            BaseKind::KM => "km",
            BaseKind::KFL => "kfl",
            BaseKind::KC => "kc",
        });
        s
    }

    /// Checks that `inst` carries every field this kind needs.
    pub fn check_instance(&self, inst: &Instance) -> Result<()> {
        if self.requires_k() && inst.k.is_none() {
            return Err(Error::InvalidConfig(format!(
                "kind {} requires the instance to set k",
                self.name()
            )));
        }
        if self.capacitated {
            if let Some(f) = inst.facilities.iter().find(|f| f.capacity.is_none()) {
                return Err(Error::MissingCapacity(f.id.clone()));
            }
        }
        if self.prize_collecting {
            if let Some(c) = inst.clients.iter().find(|c| c.penalty.is_none()) {
                return Err(Error::MissingPenalty(c.id.clone()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A facility-location instance. Node indices in `dist` follow declaration
/// order: facilities 0..|F|-1, then clients |F|..|F|+|C|-1.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub facilities: Vec<FacilitySpec>,
    pub clients: Vec<ClientSpec>,
    /// Symmetric metric over all nodes (facilities then clients).
    pub dist: Vec<Vec<f64>>,
    /// Symmetric Steiner edge costs over facility pairs. Defaults to `dist`
    /// restricted to facilities.
    pub edge_cost: Vec<Vec<f64>>,
    /// Scale factor on the Steiner tree cost.
    pub connection_scale: f64,
    pub k: Option<usize>,
    /// Set by `drop_connectivity`: the view no longer requires a tree.
    pub connectivity_dropped: bool,
}

/// On-disk JSON shape of an instance.
#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    name: String,
    facilities: Vec<FacilitySpec>,
    clients: Vec<ClientSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dist: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge_cost: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    connection_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
}

impl Instance {
    pub fn n_facilities(&self) -> usize {
        self.facilities.len()
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.facilities.len() + self.clients.len()
    }

    /// Distance between facility `i` and client `j` (both zero-based within
    /// their own lists).
    pub fn d_fc(&self, i: usize, j: usize) -> f64 {
        self.dist[i][self.facilities.len() + j]
    }

    /// Steiner edge cost between facilities `a` and `b`.
    pub fn edge(&self, a: usize, b: usize) -> f64 {
        self.edge_cost[a][b]
    }

    pub fn facility_index(&self, id: &str) -> Result<usize> {
        self.facilities
            .iter()
            .position(|f| f.id == id)
            .ok_or_else(|| Error::UnknownFacility(id.to_string()))
    }

    pub fn client_index(&self, id: &str) -> Result<usize> {
        self.clients
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn penalty(&self, j: usize) -> Option<f64> {
        self.clients[j].penalty
    }

    pub fn capacity(&self, i: usize) -> Option<u64> {
        self.facilities[i].capacity
    }

    pub fn total_capacity(&self) -> Option<u64> {
        self.facilities.iter().map(|f| f.capacity).sum()
    }

    /// Iterator over all unordered facility pairs (a < b), the Steiner edge
    /// variable set.
    pub fn facility_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.facilities.len();
        (0..n).flat_map(move |a| (a + 1..n).map(move |b| (a, b)))
    }

    /// Validates identifiers, matrix dimensions, symmetry, the triangle
    /// inequality, and field invariants. Violating instances are rejected,
    /// not repaired.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        let nf = self.n_facilities();
        let mut seen = HashSet::new();
        for f in &self.facilities {
            if !seen.insert(&f.id) {
                return Err(Error::Parse(format!("duplicate facility id `{}`", f.id)));
            }
            if f.open_cost < 0.0 || !f.open_cost.is_finite() {
                return Err(Error::Parse(format!(
                    "facility `{}` has invalid open_cost {}",
                    f.id, f.open_cost
                )));
            }
            if f.capacity == Some(0) {
                return Err(Error::Parse(format!("facility `{}` has capacity 0", f.id)));
            }
        }
        let mut seen = HashSet::new();
        for c in &self.clients {
            if !seen.insert(&c.id) {
                return Err(Error::Parse(format!("duplicate client id `{}`", c.id)));
            }
            if let Some(p) = c.penalty {
                if p < 0.0 || !p.is_finite() {
                    return Err(Error::Parse(format!(
                        "client `{}` has invalid penalty {p}",
                        c.id
                    )));
                }
            }
        }
        if self.dist.len() != n || self.dist.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "dist must be {n}x{n} (facilities then clients)"
            )));
        }
        if self.edge_cost.len() != nf || self.edge_cost.iter().any(|row| row.len() != nf) {
            return Err(Error::DimensionMismatch(format!(
                "edge_cost must be {nf}x{nf}"
            )));
        }
        if self.connection_scale < 0.0 || !self.connection_scale.is_finite() {
            return Err(Error::Parse(format!(
                "connection_scale must be a nonnegative real, got {}",
                self.connection_scale
            )));
        }
        if self.k == Some(0) {
            return Err(Error::Parse("k must be positive".into()));
        }
        for a in 0..n {
            if self.dist[a][a].abs() > METRIC_TOL {
                return Err(Error::MetricViolation(format!(
                    "nonzero diagonal at node {a}: {}",
                    self.dist[a][a]
                )));
            }
            for b in 0..n {
                let d = self.dist[a][b];
                if d < 0.0 || !d.is_finite() {
                    return Err(Error::MetricViolation(format!(
                        "dist[{a}][{b}] = {d} is not a nonnegative real"
                    )));
                }
                if (d - self.dist[b][a]).abs() > METRIC_TOL {
                    return Err(Error::MetricViolation(format!(
                        "asymmetry at ({a},{b}): {} vs {}",
                        d, self.dist[b][a]
                    )));
                }
            }
        }
        for a in 0..nf {
            for b in 0..nf {
                let c = self.edge_cost[a][b];
                if c < 0.0 || !c.is_finite() {
                    return Err(Error::MetricViolation(format!(
                        "edge_cost[{a}][{b}] = {c} is not a nonnegative real"
                    )));
                }
                if (c - self.edge_cost[b][a]).abs() > METRIC_TOL {
                    return Err(Error::MetricViolation(format!(
                        "edge_cost asymmetry at ({a},{b})"
                    )));
                }
            }
        }
        // Worst triple reported for debuggability.
        let mut worst: Option<(usize, usize, usize, f64)> = None;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let slack = self.dist[a][c] - self.dist[a][b] - self.dist[b][c];
                    if slack > METRIC_TOL && worst.map_or(true, |w| slack > w.3) {
                        worst = Some((a, b, c, slack));
                    }
                }
            }
        }
        if let Some((a, b, c, slack)) = worst {
            return Err(Error::MetricViolation(format!(
                "triangle inequality broken on ({a},{b},{c}) by {slack:.3e}"
            )));
        }
        Ok(())
    }

    fn from_file_repr(file: InstanceFile) -> Result<Instance> {
        let n = file.facilities.len() + file.clients.len();
        let dist = match (&file.points, file.dist) {
            (Some(points), supplied) => {
                if points.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "expected {n} points, got {}",
                        points.len()
                    )));
                }
                let derived: Vec<Vec<f64>> = points
                    .iter()
                    .map(|p| {
                        points
                            .iter()
                            .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
                            .collect()
                    })
                    .collect();
                if let Some(d) = supplied {
                    if d.len() != n || d.iter().any(|row| row.len() != n) {
                        return Err(Error::DimensionMismatch(format!("dist must be {n}x{n}")));
                    }
                    for a in 0..n {
                        for b in 0..n {
                            if (d[a][b] - derived[a][b]).abs() > METRIC_TOL {
                                return Err(Error::MetricViolation(format!(
                                    "supplied dist[{a}][{b}] = {} disagrees with coordinates ({})",
                                    d[a][b], derived[a][b]
                                )));
                            }
                        }
                    }
                }
                derived
            }
            (None, Some(d)) => d,
            (None, None) => {
                return Err(Error::Parse(
                    "instance must supply either points or dist".into(),
                ))
            }
        };
        let nf = file.facilities.len();
        let edge_cost = match file.edge_cost {
            Some(e) => e,
            None => (0..nf)
                .map(|a| (0..nf).map(|b| dist[a][b]).collect())
                .collect(),
        };
        let inst = Instance {
            name: file.name,
            facilities: file.facilities,
            clients: file.clients,
            dist,
            edge_cost,
            connection_scale: file.connection_scale.unwrap_or(1.0),
            k: file.k,
            connectivity_dropped: false,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn from_json(text: &str) -> Result<Instance> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file_repr(file)
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            name: self.name.clone(),
            facilities: self.facilities.clone(),
            clients: self.clients.clone(),
            points: None,
            dist: Some(self.dist.clone()),
            edge_cost: Some(self.edge_cost.clone()),
            connection_scale: Some(self.connection_scale),
            k: self.k,
        };
        serde_json::to_string_pretty(&file).expect("instance serialization cannot fail")
    }
}

/// Loads and validates an instance file.
pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    Instance::from_json(&text)
}

/// Clone with every capacity removed; all other fields (including k)
/// unchanged. Any solution feasible for the input stays feasible here.
pub fn drop_capacities(inst: &Instance) -> Instance {
    let mut out = inst.clone();
    for f in &mut out.facilities {
        f.capacity = None;
    }
    out
}

/// Clone with connection_scale zeroed and connectivity flagged off; costs and
/// capacities unchanged.
pub fn drop_connectivity(inst: &Instance) -> Instance {
    let mut out = inst.clone();
    out.connection_scale = 0.0;
    out.connectivity_dropped = true;
    out
}

/// Configuration for the seeded Euclidean generator. All draws are uniform
/// over the stated ranges; ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub open_cost: (f64, f64),
    /// Per-facility capacity range; `None` generates uncapacitated
    /// facilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<(u64, u64)>,
    /// Per-client penalty range; `None` generates must-serve clients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<(f64, f64)>,
    pub connection_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// When capacities are generated, raise them (within range) until total
    /// capacity covers all clients.
    pub ensure_capacity_feasible: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            open_cost: (0.05, 0.6),
            capacity: None,
            penalty: None,
            connection_scale: 1.0,
            k: None,
            ensure_capacity_feasible: true,
        }
    }
}

impl GenConfig {
    fn check(&self, n_facilities: usize, n_clients: usize) -> Result<()> {
        if self.open_cost.0 > self.open_cost.1 || self.open_cost.0 < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "open_cost range {:?} is empty or negative",
                self.open_cost
            )));
        }
        if let Some((lo, hi)) = self.capacity {
            if lo > hi || lo == 0 {
                return Err(Error::InvalidConfig(format!(
                    "capacity range ({lo},{hi}) is empty or allows zero"
                )));
            }
            let openable = self.k.unwrap_or(n_facilities).min(n_facilities) as u64;
            if self.ensure_capacity_feasible && openable * hi < n_clients as u64 {
                return Err(Error::InvalidConfig(format!(
                    "capacity range ({lo},{hi}) cannot cover {n_clients} clients with {openable} openable facilities"
                )));
            }
        }
        if let Some((lo, hi)) = self.penalty {
            if lo > hi || lo < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "penalty range ({lo},{hi}) is empty or negative"
                )));
            }
        }
        if self.k == Some(0) {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        Ok(())
    }
}

/// Generates a random Euclidean instance: points uniform in the unit square,
/// distances Euclidean (a metric by construction). Identical (seed, config)
/// reproduce identical instances.
pub fn generate_euclidean(
    name: &str,
    n_facilities: usize,
    n_clients: usize,
    seed: u64,
    config: &GenConfig,
) -> Result<Instance> {
    if n_facilities == 0 || n_clients == 0 {
        return Err(Error::InvalidConfig(
            "need at least one facility and one client".into(),
        ));
    }
    config.check(n_facilities, n_clients)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_facilities + n_clients;
    // Draw order is part of the format: points, open costs, capacities,
    // penalties.
    let points: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.gen::<f64>(), rng.gen::<f64>()])
        .collect();
    let open_costs: Vec<f64> = (0..n_facilities)
        .map(|_| rng.gen_range(config.open_cost.0..=config.open_cost.1))
        .collect();
    let mut capacities: Vec<Option<u64>> = match config.capacity {
        Some((lo, hi)) => (0..n_facilities)
            .map(|_| Some(rng.gen_range(lo..=hi)))
            .collect(),
        None => vec![None; n_facilities],
    };
    if let Some((_, hi)) = config.capacity {
        if config.ensure_capacity_feasible {
            // Round-robin raise, clamped to the range, until the largest
            // openable subset can host every client; config.check
            // guarantees termination.
            let openable = config.k.unwrap_or(n_facilities).min(n_facilities);
            let reach = |caps: &[Option<u64>]| -> u64 {
                let mut v: Vec<u64> = caps.iter().map(|c| c.unwrap()).collect();
                v.sort_unstable_by(|a, b| b.cmp(a));
                v.iter().take(openable).sum()
            };
            let mut idx = 0;
            while reach(&capacities) < n_clients as u64 {
                let c = capacities[idx % n_facilities].as_mut().unwrap();
                if *c < hi {
                    *c += 1;
                }
                idx += 1;
            }
        }
    }
    let penalties: Vec<Option<f64>> = match config.penalty {
        Some((lo, hi)) => (0..n_clients).map(|_| Some(rng.gen_range(lo..=hi))).collect(),
        None => vec![None; n_clients],
    };

    let dist: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            points
                .iter()
                .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
                .collect()
        })
        .collect();
    let edge_cost = (0..n_facilities)
        .map(|a| (0..n_facilities).map(|b| dist[a][b]).collect())
        .collect();

    let inst = Instance {
        name: name.to_string(),
        facilities: (0..n_facilities)
            .map(|i| FacilitySpec {
                id: format!("f{i}"),
                open_cost: open_costs[i],
                capacity: capacities[i],
            })
            .collect(),
        clients: (0..n_clients)
            .map(|j| ClientSpec {
                id: format!("c{j}"),
                penalty: penalties[j],
            })
            .collect(),
        dist,
        edge_cost,
        connection_scale: config.connection_scale,
        k: config.k,
        connectivity_dropped: false,
    };
    inst.validate()?;
    Ok(inst)
}
