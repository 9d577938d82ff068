//! Graph primitives shared by the solvers and validators: max flow with a
//! min-cut certificate, min-cost assignment via successive shortest paths,
//! minimum spanning trees, and connectivity queries.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};

/// Capacities below this are treated as exhausted during path search.
const FLOW_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    n_nodes: usize,
    source: usize,
    sink: usize,
    // Forward arcs at even indices, residual reverses at odd.
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
struct Arc {
    head: usize,
    capacity: f64,
    cost: f64,
}

/// Source side of a minimum cut, with its value.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub source_side: BTreeSet<usize>,
    pub value: f64,
}

impl FlowNetwork {
    pub fn new(n_nodes: usize, source: usize, sink: usize) -> Self {
        assert!(source < n_nodes && sink < n_nodes && source != sink);
        FlowNetwork {
            n_nodes,
            source,
            sink,
            arcs: Vec::new(),
            adj: vec![Vec::new(); n_nodes],
        }
    }

    /// Adds a directed arc. Parallel arcs are permitted; self-loops are not.
    pub fn add_arc(&mut self, tail: usize, head: usize, capacity: f64, cost: f64) {
        assert!(tail != head, "self-loops are not allowed");
        assert!(capacity >= 0.0, "capacities must be nonnegative");
        self.adj[tail].push(self.arcs.len());
        self.arcs.push(Arc { head, capacity, cost });
        self.adj[head].push(self.arcs.len());
        self.arcs.push(Arc { head: tail, capacity: 0.0, cost: -cost });
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }
}

/// Edmonds-Karp maximum flow. Returns the flow value and a minimum cut whose
/// value equals it (the max-flow min-cut certificate).
pub fn max_flow(net: &FlowNetwork) -> (f64, Cut) {
    let mut residual: Vec<f64> = net.arcs.iter().map(|a| a.capacity).collect();
    let mut value = 0.0;
    loop {
        // BFS for a shortest augmenting path.
        let mut pred: Vec<Option<usize>> = vec![None; net.n_nodes];
        let mut seen = vec![false; net.n_nodes];
        seen[net.source] = true;
        let mut queue = VecDeque::from([net.source]);
        while let Some(u) = queue.pop_front() {
            if u == net.sink {
                break;
            }
            for &ai in &net.adj[u] {
                let head = net.arcs[ai].head;
                if !seen[head] && residual[ai] > FLOW_EPS {
                    seen[head] = true;
                    pred[head] = Some(ai);
                    queue.push_back(head);
                }
            }
        }
        if !seen[net.sink] {
            // No augmenting path: reachable set is the min cut.
            let source_side: BTreeSet<usize> =
                (0..net.n_nodes).filter(|&u| seen[u]).collect();
            let mut cut_value = 0.0;
            for &u in &source_side {
                for &ai in &net.adj[u] {
                    // Forward arcs only (even index) leaving the source side.
                    if ai % 2 == 0 && !source_side.contains(&net.arcs[ai].head) {
                        cut_value += net.arcs[ai].capacity;
                    }
                }
            }
            return (value, Cut { source_side, value: cut_value });
        }
        let mut bottleneck = f64::INFINITY;
        let mut u = net.sink;
        while u != net.source {
            let ai = pred[u].unwrap();
            bottleneck = bottleneck.min(residual[ai]);
            u = net.arcs[ai ^ 1].head;
        }
        let mut u = net.sink;
        while u != net.source {
            let ai = pred[u].unwrap();
            residual[ai] -= bottleneck;
            residual[ai ^ 1] += bottleneck;
            u = net.arcs[ai ^ 1].head;
        }
        value += bottleneck;
    }
}

/// Minimum-cost flow of a given value via successive shortest paths with
/// Bellman-Ford (costs may be negative only before the first potential
/// update, which Bellman-Ford tolerates). Sends as much flow as possible up
/// to `target`; returns (flow sent, total cost, per-arc flow on forward
/// arcs).
fn min_cost_flow(net: &FlowNetwork, target: f64) -> (f64, f64, Vec<f64>) {
    let mut residual: Vec<f64> = net.arcs.iter().map(|a| a.capacity).collect();
    let mut sent = 0.0;
    let mut cost = 0.0;
    while sent + FLOW_EPS < target {
        // Bellman-Ford shortest path by cost in the residual graph.
        let mut dist = vec![f64::INFINITY; net.n_nodes];
        let mut pred: Vec<Option<usize>> = vec![None; net.n_nodes];
        dist[net.source] = 0.0;
        for _ in 0..net.n_nodes {
            let mut changed = false;
            for u in 0..net.n_nodes {
                if dist[u].is_infinite() {
                    continue;
                }
                for &ai in &net.adj[u] {
                    if residual[ai] <= FLOW_EPS {
                        continue;
                    }
                    let head = net.arcs[ai].head;
                    let nd = dist[u] + net.arcs[ai].cost;
                    if nd + 1e-12 < dist[head] {
                        dist[head] = nd;
                        pred[head] = Some(ai);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[net.sink].is_infinite() {
            break;
        }
        let mut bottleneck = target - sent;
        let mut u = net.sink;
        while u != net.source {
            let ai = pred[u].unwrap();
            bottleneck = bottleneck.min(residual[ai]);
            u = net.arcs[ai ^ 1].head;
        }
        let mut u = net.sink;
        while u != net.source {
            let ai = pred[u].unwrap();
            residual[ai] -= bottleneck;
            residual[ai ^ 1] += bottleneck;
            u = net.arcs[ai ^ 1].head;
        }
        sent += bottleneck;
        cost += bottleneck * dist[net.sink];
    }
    let flows: Vec<f64> = (0..net.arcs.len() / 2)
        .map(|i| net.arcs[2 * i].capacity - residual[2 * i])
        .collect();
    (sent, cost, flows)
}

/// Optimal capacity-respecting assignment of clients to open facilities.
///
/// `capacities[i]` is facility i's capacity (`None` = unlimited, modeled as
/// |clients|). `dist_fc(i, j)` gives the service distance. When
/// `penalties` is supplied, a client may instead pay its penalty; the
/// returned pair is then (assignment, service cost + penalties paid) with
/// unassigned clients implicitly in the penalty set.
pub struct AssignmentProblem<'a> {
    pub open_facilities: &'a BTreeSet<usize>,
    pub capacities: &'a dyn Fn(usize) -> Option<u64>,
    pub n_clients: usize,
    pub dist_fc: &'a dyn Fn(usize, usize) -> f64,
    pub penalties: Option<&'a dyn Fn(usize) -> f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// client index -> facility index; clients absent pay penalty.
    pub assigned: BTreeMap<usize, usize>,
    /// Service cost plus penalties paid.
    pub cost: f64,
}

/// Solves the transportation problem exactly. Network: source -> facility
/// (capacity u_i), facility -> client (capacity 1, cost d), client -> sink
/// (capacity 1); with penalties, an extra source -> client arc (capacity 1,
/// cost p_j) lets the client opt out. Arc insertion order is fixed, so ties
/// resolve to the lowest facility then lowest client index.
pub fn min_cost_assignment(problem: &AssignmentProblem) -> Result<Assignment> {
    let facilities: Vec<usize> = problem.open_facilities.iter().copied().collect();
    let nf = facilities.len();
    let nc = problem.n_clients;
    if nc == 0 {
        return Ok(Assignment { assigned: BTreeMap::new(), cost: 0.0 });
    }
    if problem.penalties.is_none() {
        let total: u64 = facilities
            .iter()
            .map(|&i| (problem.capacities)(i).unwrap_or(nc as u64))
            .sum();
        if total < nc as u64 {
            return Err(Error::Infeasible(format!(
                "open capacity {total} cannot serve {nc} clients"
            )));
        }
    }
    // Nodes: 0 = source, 1..=nf facilities, nf+1..=nf+nc clients, last = sink.
    let source = 0;
    let sink = nf + nc + 1;
    let mut net = FlowNetwork::new(nf + nc + 2, source, sink);
    let mut fc_arc_index = BTreeMap::new();
    let mut penalty_arc_index = BTreeMap::new();
    for (fi, &i) in facilities.iter().enumerate() {
        let cap = (problem.capacities)(i).unwrap_or(nc as u64) as f64;
        net.add_arc(source, 1 + fi, cap, 0.0);
    }
    for (fi, &i) in facilities.iter().enumerate() {
        for j in 0..nc {
            fc_arc_index.insert((fi, j), net.arcs.len());
            net.add_arc(1 + fi, 1 + nf + j, 1.0, (problem.dist_fc)(i, j));
        }
    }
    if let Some(p) = problem.penalties {
        for j in 0..nc {
            penalty_arc_index.insert(j, net.arcs.len());
            net.add_arc(source, 1 + nf + j, 1.0, p(j));
        }
    }
    for j in 0..nc {
        net.add_arc(1 + nf + j, sink, 1.0, 0.0);
    }
    let (sent, cost, flows) = min_cost_flow(&net, nc as f64);
    if sent + 1e-9 < nc as f64 {
        return Err(Error::Infeasible(format!(
            "assignment network saturates at {sent} of {nc} clients"
        )));
    }
    // Transportation polytopes have integral optima; flows land on {0,1}
    // within rounding error.
    let mut assigned = BTreeMap::new();
    for ((fi, j), ai) in &fc_arc_index {
        if flows[ai / 2] > 0.5 {
            assigned.insert(*j, facilities[*fi]);
        }
    }
    for (j, ai) in &penalty_arc_index {
        if flows[ai / 2] > 0.5 {
            debug_assert!(!assigned.contains_key(j));
        }
    }
    Ok(Assignment { assigned, cost })
}

/// Minimum spanning tree over `nodes` with symmetric `weight`. Prim's
/// algorithm; ties broken by (weight, smaller endpoint, larger endpoint) so
/// output is deterministic. Returns edges as (a, b) with a < b.
pub fn mst(
    nodes: &BTreeSet<usize>,
    weight: &dyn Fn(usize, usize) -> f64,
) -> (BTreeSet<(usize, usize)>, f64) {
    let mut edges = BTreeSet::new();
    let mut total = 0.0;
    if nodes.len() <= 1 {
        return (edges, total);
    }
    let order: Vec<usize> = nodes.iter().copied().collect();
    let mut in_tree = BTreeSet::from([order[0]]);
    while in_tree.len() < order.len() {
        let mut best: Option<(f64, usize, usize)> = None;
        for &u in &in_tree {
            for &v in &order {
                if in_tree.contains(&v) {
                    continue;
                }
                let w = weight(u.min(v), u.max(v));
                let cand = (w, u.min(v), u.max(v));
                if best.map_or(true, |b| {
                    cand.0 < b.0 - 1e-15
                        || (cand.0 <= b.0 + 1e-15 && (cand.1, cand.2) < (b.1, b.2))
                }) {
                    best = Some(cand);
                }
            }
        }
        let (w, a, b) = best.expect("tree not spanning yet, candidate must exist");
        let new = if in_tree.contains(&a) { b } else { a };
        in_tree.insert(new);
        edges.insert((a, b));
        total += w;
    }
    (edges, total)
}

/// Connectivity of `targets` in the graph induced by `edges` (endpoints count
/// as nodes even when not in `targets`). Returns whether all targets share
/// one component, plus the component partition over targets ∪ endpoints.
pub fn is_connected(
    targets: &BTreeSet<usize>,
    edges: &BTreeSet<(usize, usize)>,
) -> (bool, Vec<BTreeSet<usize>>) {
    let mut nodes: BTreeSet<usize> = targets.clone();
    for &(a, b) in edges {
        nodes.insert(a);
        nodes.insert(b);
    }
    let mut parent: BTreeMap<usize, usize> = nodes.iter().map(|&u| (u, u)).collect();
    fn find(parent: &mut BTreeMap<usize, usize>, u: usize) -> usize {
        let mut root = u;
        while parent[&root] != root {
            root = parent[&root];
        }
        let mut cur = u;
        while parent[&cur] != root {
            let next = parent[&cur];
            parent.insert(cur, root);
            cur = next;
        }
        root
    }
    for &(a, b) in edges {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        if ra != rb {
            parent.insert(ra.max(rb), ra.min(rb));
        }
    }
    let mut comps: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &u in &nodes {
        let r = find(&mut parent, u);
        comps.entry(r).or_default().insert(u);
    }
    let components: Vec<BTreeSet<usize>> = comps.into_values().collect();
    let connected = match targets.len() {
        0 | 1 => true,
        _ => {
            let first = *targets.iter().next().unwrap();
            let root = find(&mut parent, first);
            targets.iter().all(|&u| find(&mut parent, u) == root)
        }
    };
    (connected, components)
}

/// Steiner tree on `terminals` allowed to route through any of `all_nodes`,
/// via the metric-closure 2-approximation: MST on the closure of terminals,
/// then shortest-path expansion, then MST of the expanded subgraph.
pub fn steiner_via_closure(
    terminals: &BTreeSet<usize>,
    all_nodes: &BTreeSet<usize>,
    weight: &dyn Fn(usize, usize) -> f64,
) -> (BTreeSet<(usize, usize)>, f64) {
    if terminals.len() <= 1 {
        return (BTreeSet::new(), 0.0);
    }
    let order: Vec<usize> = all_nodes.iter().copied().collect();
    let idx: BTreeMap<usize, usize> = order.iter().enumerate().map(|(k, &u)| (u, k)).collect();
    let n = order.len();
    // Floyd-Warshall closure with path reconstruction.
    let mut d = vec![vec![f64::INFINITY; n]; n];
    let mut via = vec![vec![usize::MAX; n]; n];
    for a in 0..n {
        d[a][a] = 0.0;
        for b in 0..n {
            if a != b {
                d[a][b] = weight(order[a].min(order[b]), order[a].max(order[b]));
            }
        }
    }
    for m in 0..n {
        for a in 0..n {
            for b in 0..n {
                if d[a][m] + d[m][b] < d[a][b] - 1e-15 {
                    d[a][b] = d[a][m] + d[m][b];
                    via[a][b] = m;
                }
            }
        }
    }
    fn expand(
        a: usize,
        b: usize,
        via: &Vec<Vec<usize>>,
        out: &mut BTreeSet<(usize, usize)>,
    ) {
        let m = via[a][b];
        if m == usize::MAX {
            out.insert((a.min(b), a.max(b)));
        } else {
            expand(a, m, via, out);
            expand(m, b, via, out);
        }
    }
    let closure = mst(terminals, &|a, b| d[idx[&a]][idx[&b]]);
    let mut expanded: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &(a, b) in &closure.0 {
        expand(idx[&a], idx[&b], &via, &mut expanded);
    }
    // Re-MST the expanded node set to drop any cycles from overlapping paths.
    let mut span_nodes: BTreeSet<usize> = BTreeSet::new();
    for &(a, b) in &expanded {
        span_nodes.insert(order[a]);
        span_nodes.insert(order[b]);
    }
    let expanded_orig: BTreeSet<(usize, usize)> = expanded
        .iter()
        .map(|&(a, b)| {
            let (x, y) = (order[a], order[b]);
            (x.min(y), x.max(y))
        })
        .collect();
    let big = 1e18;
    let (tree, total) = mst(&span_nodes, &|a, b| {
        if expanded_orig.contains(&(a, b)) {
            weight(a, b)
        } else {
            big
        }
    });
    debug_assert!(total < big, "expansion graph must be connected");
    (tree, total)
}
