//! Linear programming: a bounded-variable two-phase simplex, the facility
//! location LP builders, and the cutting-plane loop whose separation oracle
//! prices the exponential connectivity constraint family via max flow.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::graphalg::{max_flow, FlowNetwork};
use crate::instance::Instance;

/// Public feasibility and optimality tolerance for LP results.
pub const LP_TOL: f64 = 1e-7;
/// Reduced-cost tolerance; entering candidates need at least this much.
const PRICE_TOL: f64 = 1e-9;
/// Tableau entries smaller than this cannot serve as pivots.
const PIVOT_TOL: f64 = 1e-9;
/// Internal separation threshold. Tighter than LP_TOL so that solutions
/// derived by 2x scaling still pass public sweeps at LP_TOL.
const CUT_ADD_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct LpVariable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct LpConstraint {
    pub name: String,
    /// Sparse (variable index, coefficient) pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A minimization LP over bounded variables. The exponential connectivity
/// family is not stored here; it is attached lazily by [`solve_with_cuts`],
/// which repeatedly asks [`separate_cuts`] for violated members.
#[derive(Debug, Clone, Default)]
pub struct LpModel {
    pub variables: Vec<LpVariable>,
    pub constraints: Vec<LpConstraint>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective: f64,
}

impl LpModel {
    pub fn new() -> Self {
        LpModel::default()
    }

    pub fn add_variable(&mut self, name: String, lower: f64, upper: f64, objective: f64) -> usize {
        assert!(lower <= upper, "variable `{name}` has empty bound interval");
        self.variables.push(LpVariable { name, lower, upper, objective });
        self.variables.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: String,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.variables.len()));
        self.constraints.push(LpConstraint { name, coeffs, relation, rhs });
    }

    /// Dumps the model in the common text LP interchange format, for
    /// cross-checking against external tools.
    pub fn to_lp_format(&self) -> String {
        let term = |coef: f64, name: &str, first: bool| -> String {
            let sign = if coef < 0.0 {
                "- "
            } else if first {
                ""
            } else {
                "+ "
            };
            format!("{sign}{} {name}", coef.abs())
        };
        let mut out = String::from("Minimize\n obj:");
        let mut first = true;
        for v in &self.variables {
            if v.objective != 0.0 {
                out.push(' ');
                out.push_str(&term(v.objective, &v.name, first));
                first = false;
            }
        }
        if first {
            out.push_str(" 0 ");
            out.push_str(&self.variables.first().map_or("x", |v| v.name.as_str()).to_string());
        }
        out.push_str("\nSubject To\n");
        for c in &self.constraints {
            out.push_str(&format!(" {}:", c.name));
            let mut first = true;
            for &(j, coef) in &c.coeffs {
                out.push(' ');
                out.push_str(&term(coef, &self.variables[j].name, first));
                first = false;
            }
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            out.push_str(&format!(" {rel} {}\n", c.rhs));
        }
        out.push_str("Bounds\n");
        for v in &self.variables {
            if v.lower == v.upper {
                out.push_str(&format!(" {} = {}\n", v.name, v.lower));
            } else {
                let lo = if v.lower.is_infinite() { "-inf".to_string() } else { v.lower.to_string() };
                let hi = if v.upper.is_infinite() { "+inf".to_string() } else { v.upper.to_string() };
                out.push_str(&format!(" {lo} <= {} <= {hi}\n", v.name));
            }
        }
        out.push_str("End\n");
        out
    }
}

/// Bounded-variable primal simplex over a dense tableau. Nonbasic variables
/// rest at a bound; the ratio test permits bound flips. Two phases: phase 1
/// drives artificial variables (added only where the slack basis is
/// infeasible) to zero, phase 2 optimizes the real objective. Dantzig
/// pricing with a Bland fallback after a degenerate streak keeps the method
/// finite and deterministic.
struct Simplex {
    ncols: usize,
    nrows: usize,
    nstruct: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    tab: Vec<Vec<f64>>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    at_upper: Vec<bool>,
    dj: Vec<f64>,
    obj: f64,
    bland: bool,
    degenerate_streak: usize,
    artificial_start: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

impl Simplex {
    fn build(model: &LpModel) -> Result<Simplex> {
        let nstruct = model.variables.len();
        let nrows = model.constraints.len();
        let mut lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
        let mut upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
        for (r, c) in model.constraints.iter().enumerate() {
            let (lo, hi) = match c.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Eq => (0.0, 0.0),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
            let _ = r;
        }
        let base_cols = nstruct + nrows;
        let mut tab: Vec<Vec<f64>> = vec![vec![0.0; base_cols]; nrows];
        for (r, c) in model.constraints.iter().enumerate() {
            for &(j, coef) in &c.coeffs {
                tab[r][j] += coef;
            }
            tab[r][nstruct + r] = 1.0;
        }
        // Nonbasic start: every structural variable at a finite bound.
        let mut at_upper = vec![false; base_cols];
        for j in 0..nstruct {
            if lower[j].is_infinite() {
                if upper[j].is_infinite() {
                    return Err(Error::InvalidConfig(format!(
                        "free variable `{}` is not supported",
                        model.variables[j].name
                    )));
                }
                at_upper[j] = true;
            }
        }
        let bound_val = |j: usize, at_up: bool, lower: &[f64], upper: &[f64]| {
            if at_up { upper[j] } else { lower[j] }
        };
        // Residual per row decides slack-basic vs artificial-basic.
        let mut basis = Vec::with_capacity(nrows);
        let mut beta = Vec::with_capacity(nrows);
        let mut art_sign: Vec<Option<f64>> = vec![None; nrows];
        for (r, c) in model.constraints.iter().enumerate() {
            let mut residual = c.rhs;
            for &(j, coef) in &c.coeffs {
                residual -= coef * bound_val(j, at_upper[j], &lower, &upper);
            }
            let s = nstruct + r;
            if residual >= lower[s] - 1e-12 && residual <= upper[s] + 1e-12 {
                basis.push(s);
                beta.push(residual.clamp(lower[s], upper[s]));
            } else {
                // Clamp the slack to its nearest finite bound; an artificial
                // absorbs the defect.
                let clamped = if residual > upper[s] { upper[s] } else { lower[s] };
                at_upper[s] = residual > upper[s];
                let defect = residual - clamped;
                art_sign[r] = Some(defect.signum());
                basis.push(usize::MAX); // patched below once columns exist
                beta.push(defect.abs());
            }
        }
        let n_art = art_sign.iter().filter(|s| s.is_some()).count();
        let ncols = base_cols + n_art;
        let mut next_art = base_cols;
        for r in 0..nrows {
            if let Some(sign) = art_sign[r] {
                for row in tab.iter_mut() {
                    row.push(0.0);
                }
                tab[r][next_art] = sign;
                lower.push(0.0);
                upper.push(f64::INFINITY);
                basis[r] = next_art;
                // Row scaled so the basic artificial has coefficient +1.
                if sign < 0.0 {
                    for x in tab[r].iter_mut() {
                        *x = -*x;
                    }
                }
                next_art += 1;
            }
        }
        at_upper.resize(ncols, false);
        let mut in_basis = vec![false; ncols];
        for &b in &basis {
            in_basis[b] = true;
        }
        let cost = vec![0.0; ncols];
        Ok(Simplex {
            ncols,
            nrows,
            nstruct,
            lower,
            upper,
            cost,
            tab,
            beta,
            basis,
            in_basis,
            at_upper,
            dj: vec![0.0; ncols],
            obj: 0.0,
            bland: false,
            degenerate_streak: 0,
            artificial_start: base_cols,
        })
    }

    fn bound_val(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.upper[j]
        } else {
            self.lower[j]
        }
    }

    /// Recomputes reduced costs and objective from the current cost vector.
    fn reprice(&mut self) {
        for j in 0..self.ncols {
            self.dj[j] = self.cost[j];
        }
        for r in 0..self.nrows {
            let cb = self.cost[self.basis[r]];
            if cb != 0.0 {
                for j in 0..self.ncols {
                    self.dj[j] -= cb * self.tab[r][j];
                }
            }
        }
        let mut obj = 0.0;
        for j in 0..self.ncols {
            if !self.in_basis[j] {
                obj += self.cost[j] * self.bound_val(j);
            }
        }
        for r in 0..self.nrows {
            obj += self.cost[self.basis[r]] * self.beta[r];
        }
        self.obj = obj;
    }

    fn step(&mut self) -> Step {
        // Pricing.
        let mut enter: Option<(usize, f64)> = None;
        for j in 0..self.ncols {
            if self.in_basis[j] || self.upper[j] - self.lower[j] < 1e-15 {
                continue;
            }
            let d = self.dj[j];
            let eligible = if self.at_upper[j] { d > PRICE_TOL } else { d < -PRICE_TOL };
            if !eligible {
                continue;
            }
            if self.bland {
                enter = Some((j, d));
                break;
            }
            if enter.map_or(true, |(_, best)| d.abs() > best.abs()) {
                enter = Some((j, d));
            }
        }
        let Some((j, dj_enter)) = enter else {
            return Step::Optimal;
        };
        let dir = if self.at_upper[j] { -1.0 } else { 1.0 };
        // Ratio test: entering moves by `limit`; bound flip if its own range
        // binds first.
        let mut limit = self.upper[j] - self.lower[j];
        let mut leave: Option<(usize, bool)> = None;
        for r in 0..self.nrows {
            let a = self.tab[r][j] * dir;
            let b = self.basis[r];
            if a > PIVOT_TOL {
                if self.lower[b].is_finite() {
                    let ratio = ((self.beta[r] - self.lower[b]) / a).max(0.0);
                    let better = ratio < limit - 1e-12
                        || (ratio <= limit + 1e-12
                            && leave.map_or(false, |(lr, _)| {
                                ratio <= limit && b < self.basis[lr]
                            }));
                    if better || (leave.is_none() && ratio < limit + 1e-12) {
                        limit = ratio.min(limit);
                        leave = Some((r, false));
                    }
                }
            } else if a < -PIVOT_TOL {
                if self.upper[b].is_finite() {
                    let ratio = ((self.upper[b] - self.beta[r]) / -a).max(0.0);
                    let better = ratio < limit - 1e-12
                        || (ratio <= limit + 1e-12
                            && leave.map_or(false, |(lr, _)| {
                                ratio <= limit && b < self.basis[lr]
                            }));
                    if better || (leave.is_none() && ratio < limit + 1e-12) {
                        limit = ratio.min(limit);
                        leave = Some((r, true));
                    }
                }
            }
        }
        if limit.is_infinite() {
            return Step::Unbounded;
        }
        self.degenerate_streak = if limit <= 1e-12 { self.degenerate_streak + 1 } else { 0 };
        if self.degenerate_streak > DEGENERATE_STREAK {
            self.bland = true;
        }
        let delta = dir * limit;
        self.obj += dj_enter * delta;
        match leave {
            None => {
                // Bound flip: no basis change.
                for r in 0..self.nrows {
                    self.beta[r] -= self.tab[r][j] * delta;
                }
                self.at_upper[j] = !self.at_upper[j];
            }
            Some((rstar, to_upper)) => {
                let entering_value = self.bound_val(j) + delta;
                for r in 0..self.nrows {
                    if r != rstar {
                        self.beta[r] -= self.tab[r][j] * delta;
                    }
                }
                let leaving = self.basis[rstar];
                self.in_basis[leaving] = false;
                self.at_upper[leaving] = to_upper;
                if leaving >= self.artificial_start {
                    // Artificials never come back.
                    self.upper[leaving] = 0.0;
                }
                let p = self.tab[rstar][j];
                debug_assert!(p.abs() > PIVOT_TOL);
                let inv = 1.0 / p;
                for x in self.tab[rstar].iter_mut() {
                    *x *= inv;
                }
                for r in 0..self.nrows {
                    if r == rstar {
                        continue;
                    }
                    let f = self.tab[r][j];
                    if f != 0.0 {
                        let (head, tail) = self.tab.split_at_mut(rstar.max(r));
                        let (row_r, row_p) = if r < rstar {
                            (&mut head[r], &tail[0])
                        } else {
                            (&mut tail[0], &head[rstar])
                        };
                        for (xr, xp) in row_r.iter_mut().zip(row_p.iter()) {
                            *xr -= f * *xp;
                        }
                    }
                }
                let f = self.dj[j];
                if f != 0.0 {
                    for (d, xp) in self.dj.iter_mut().zip(self.tab[rstar].iter()) {
                        *d -= f * *xp;
                    }
                }
                self.dj[j] = 0.0;
                self.beta[rstar] = entering_value;
                self.basis[rstar] = j;
                self.in_basis[j] = true;
            }
        }
        Step::Moved
    }

    fn optimize(&mut self) -> Result<()> {
        let max_iter = 10_000 + 100 * (self.nrows + self.ncols);
        for _ in 0..max_iter {
            match self.step() {
                Step::Optimal => return Ok(()),
                Step::Unbounded => return Err(Error::Unbounded),
                Step::Moved => {}
            }
        }
        Err(Error::IterationLimit(format!(
            "simplex exceeded {max_iter} pivots"
        )))
    }

    fn values(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = (0..self.nstruct).map(|j| self.bound_val(j)).collect();
        for r in 0..self.nrows {
            if self.basis[r] < self.nstruct {
                vals[self.basis[r]] = self.beta[r];
            }
        }
        vals
    }
}

/// Solves a bounded-variable minimization LP. The returned point satisfies
/// every explicit constraint within [`LP_TOL`]; the pivot rule is fixed, so
/// identical models yield identical solutions.
pub fn solve_lp(model: &LpModel) -> Result<LpSolution> {
    let mut sx = Simplex::build(model)?;
    if sx.artificial_start < sx.ncols {
        // Phase 1: minimize total infeasibility.
        for j in sx.artificial_start..sx.ncols {
            sx.cost[j] = 1.0;
        }
        sx.reprice();
        sx.optimize()?;
        if sx.obj > LP_TOL {
            return Err(Error::Infeasible(format!(
                "phase-1 infeasibility {:.3e}",
                sx.obj
            )));
        }
        // Freeze artificials at zero for phase 2.
        for j in sx.artificial_start..sx.ncols {
            sx.cost[j] = 0.0;
            sx.upper[j] = 0.0;
        }
    }
    for (j, v) in model.variables.iter().enumerate() {
        sx.cost[j] = v.objective;
    }
    sx.reprice();
    sx.optimize()?;
    let values = sx.values();
    let objective: f64 = model
        .variables
        .iter()
        .zip(values.iter())
        .map(|(v, x)| v.objective * x)
        .sum();
    debug_assert!(check_point(model, &values, LP_TOL).is_ok());
    Ok(LpSolution { values, objective })
}

/// Verifies a point against a model's bounds and explicit constraints.
pub fn check_point(model: &LpModel, values: &[f64], tol: f64) -> Result<()> {
    if values.len() != model.variables.len() {
        return Err(Error::DimensionMismatch(format!(
            "point has {} coordinates, model has {} variables",
            values.len(),
            model.variables.len()
        )));
    }
    for (v, &x) in model.variables.iter().zip(values.iter()) {
        if x < v.lower - tol || x > v.upper + tol {
            return Err(Error::NotFeasibleFractional(format!(
                "variable `{}` = {x} outside [{}, {}]",
                v.name, v.lower, v.upper
            )));
        }
    }
    for c in &model.constraints {
        let lhs: f64 = c.coeffs.iter().map(|&(j, coef)| coef * values[j]).sum();
        let ok = match c.relation {
            Relation::Le => lhs <= c.rhs + tol,
            Relation::Eq => (lhs - c.rhs).abs() <= tol,
            Relation::Ge => lhs >= c.rhs - tol,
        };
        if !ok {
            return Err(Error::NotFeasibleFractional(format!(
                "constraint `{}` violated: lhs {lhs}, rhs {}",
                c.name, c.rhs
            )));
        }
    }
    Ok(())
}

/// Column layout of a facility-location LP: w (per facility), x (per
/// facility x residual client), y (per facility edge), optional z (per
/// client).
#[derive(Debug, Clone)]
pub struct FlLayout {
    pub n_facilities: usize,
    pub n_clients: usize,
    /// Ascending client indices carrying x columns and service constraints.
    pub residual: Vec<usize>,
    /// Ascending facility pairs (a, b), a < b.
    pub edges: Vec<(usize, usize)>,
    pub v: usize,
    w_start: usize,
    x_start: usize,
    y_start: usize,
    z_start: Option<usize>,
}

impl FlLayout {
    pub fn w_col(&self, i: usize) -> usize {
        self.w_start + i
    }

    /// `jr` indexes into `residual`, not the full client list.
    pub fn x_col(&self, i: usize, jr: usize) -> usize {
        self.x_start + i * self.residual.len() + jr
    }

    pub fn y_col(&self, e: usize) -> usize {
        self.y_start + e
    }

    pub fn z_col(&self, j: usize) -> usize {
        self.z_start.expect("layout has no z variables") + j
    }

    pub fn edge_index(&self, a: usize, b: usize) -> usize {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).expect("unknown facility edge")
    }
}

/// A facility-location LP together with its column layout.
#[derive(Debug, Clone)]
pub struct FlModel {
    pub lp: LpModel,
    pub layout: FlLayout,
}

/// LP point in facility-location shape. `x` is a full facility-by-client
/// matrix (zero outside the residual set); `z` is present only for
/// penalty-aware models.
#[derive(Debug, Clone)]
pub struct FractionalSolution {
    pub w: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub y: BTreeMap<(usize, usize), f64>,
    pub z: Option<Vec<f64>>,
    pub objective: f64,
}

impl FractionalSolution {
    /// Recomputes the objective from instance data; the stored value must
    /// agree within [`LP_TOL`].
    pub fn recompute_objective(&self, inst: &Instance) -> f64 {
        let mut total = 0.0;
        for (i, f) in inst.facilities.iter().enumerate() {
            total += f.open_cost * self.w[i];
        }
        for i in 0..inst.n_facilities() {
            for j in 0..inst.n_clients() {
                total += inst.d_fc(i, j) * self.x[i][j];
            }
        }
        for (&(a, b), &ye) in &self.y {
            total += inst.connection_scale * inst.edge(a, b) * ye;
        }
        if let Some(z) = &self.z {
            for (j, c) in inst.clients.iter().enumerate() {
                total += c.penalty.unwrap_or(0.0) * z[j];
            }
        }
        total
    }
}

fn fl_layout(inst: &Instance, residual: &BTreeSet<usize>, v: usize, with_z: bool) -> FlLayout {
    let nf = inst.n_facilities();
    let nc = inst.n_clients();
    let residual: Vec<usize> = residual.iter().copied().collect();
    let edges: Vec<(usize, usize)> = inst.facility_edges().collect();
    let w_start = 0;
    let x_start = nf;
    let y_start = x_start + nf * residual.len();
    let z_start = if with_z { Some(y_start + edges.len()) } else { None };
    FlLayout {
        n_facilities: nf,
        n_clients: nc,
        residual,
        edges,
        v,
        w_start,
        x_start,
        y_start,
        z_start,
    }
}

fn build_fl_lp(inst: &Instance, residual: &BTreeSet<usize>, v: usize, with_z: bool) -> Result<FlModel> {
    if v >= inst.n_facilities() {
        return Err(Error::UnknownFacility(format!("facility index {v}")));
    }
    if let Some(&j) = residual.iter().find(|&&j| j >= inst.n_clients()) {
        return Err(Error::UnknownId(format!("client index {j}")));
    }
    if with_z {
        if let Some(c) = inst.clients.iter().find(|c| c.penalty.is_none()) {
            return Err(Error::MissingPenalty(c.id.clone()));
        }
    }
    let layout = fl_layout(inst, residual, v, with_z);
    let mut lp = LpModel::new();
    for (i, f) in inst.facilities.iter().enumerate() {
        // The guessed root is pinned open through its bounds.
        let lo = if i == v { 1.0 } else { 0.0 };
        lp.add_variable(format!("w_{i}"), lo, 1.0, f.open_cost);
    }
    for i in 0..inst.n_facilities() {
        for &j in &layout.residual {
            lp.add_variable(format!("x_{i}_{j}"), 0.0, 1.0, inst.d_fc(i, j));
        }
    }
    for &(a, b) in &layout.edges {
        lp.add_variable(
            format!("y_{a}_{b}"),
            0.0,
            1.0,
            inst.connection_scale * inst.edge(a, b),
        );
    }
    if with_z {
        for (j, c) in inst.clients.iter().enumerate() {
            lp.add_variable(format!("z_{j}"), 0.0, 1.0, c.penalty.unwrap_or(0.0));
        }
    }
    for (jr, &j) in layout.residual.iter().enumerate() {
        let mut coeffs: Vec<(usize, f64)> =
            (0..inst.n_facilities()).map(|i| (layout.x_col(i, jr), 1.0)).collect();
        if with_z {
            coeffs.push((layout.z_col(j), 1.0));
        }
        lp.add_constraint(format!("serve_{j}"), coeffs, Relation::Eq, 1.0);
    }
    for i in 0..inst.n_facilities() {
        for (jr, &j) in layout.residual.iter().enumerate() {
            lp.add_constraint(
                format!("open_{i}_{j}"),
                vec![(layout.x_col(i, jr), 1.0), (layout.w_col(i), -1.0)],
                Relation::Le,
                0.0,
            );
        }
    }
    Ok(FlModel { lp, layout })
}

/// LP relaxation for connected prize-collecting facility location rooted at
/// `v`: minimize facility + service + scaled connection + penalty cost,
/// subject to every client being served or paying penalty, service only at
/// open facilities, the root forced open, and (lazily) the connectivity
/// cuts.
pub fn build_conpfl_lp(inst: &Instance, v: usize) -> Result<FlModel> {
    let all: BTreeSet<usize> = (0..inst.n_clients()).collect();
    build_fl_lp(inst, &all, v, true)
}

/// LP relaxation for connected facility location on `residual_clients`,
/// rooted at `v`: like the penalty model with z removed and service
/// equalities only for residual clients.
pub fn build_confl_lp(inst: &Instance, residual_clients: &BTreeSet<usize>, v: usize) -> Result<FlModel> {
    build_fl_lp(inst, residual_clients, v, false)
}

impl FlModel {
    /// Shapes a raw LP point into facility-location coordinates.
    pub fn extract(&self, sol: &LpSolution) -> FractionalSolution {
        let l = &self.layout;
        let w: Vec<f64> = (0..l.n_facilities).map(|i| sol.values[l.w_col(i)]).collect();
        let mut x = vec![vec![0.0; l.n_clients]; l.n_facilities];
        for i in 0..l.n_facilities {
            for (jr, &j) in l.residual.iter().enumerate() {
                x[i][j] = sol.values[l.x_col(i, jr)];
            }
        }
        let y: BTreeMap<(usize, usize), f64> = l
            .edges
            .iter()
            .enumerate()
            .map(|(e, &pair)| (pair, sol.values[l.y_col(e)]))
            .collect();
        let z = l
            .z_start
            .map(|_| (0..l.n_clients).map(|j| sol.values[l.z_col(j)]).collect());
        FractionalSolution { w, x, y, z, objective: sol.objective }
    }
}

/// One violated member of the connectivity family: for `client` j, the set S
/// (root excluded) with sum_{i in S} x_ij > sum_{e in delta(S)} y_e.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FlCut {
    pub client: usize,
    pub set: BTreeSet<usize>,
}

impl FlCut {
    /// Materializes the cut as sum_{i in S} x_ij - sum_{e in delta(S)} y_e <= 0.
    pub fn to_constraint(&self, layout: &FlLayout) -> LpConstraint {
        let jr = layout
            .residual
            .binary_search(&self.client)
            .expect("cut client outside residual set");
        let mut coeffs: Vec<(usize, f64)> = self
            .set
            .iter()
            .map(|&i| (layout.x_col(i, jr), 1.0))
            .collect();
        for (e, &(a, b)) in layout.edges.iter().enumerate() {
            if self.set.contains(&a) != self.set.contains(&b) {
                coeffs.push((layout.y_col(e), -1.0));
            }
        }
        let name = format!(
            "cut_{}_{}",
            self.client,
            self.set.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("_")
        );
        LpConstraint { name, coeffs, relation: Relation::Le, rhs: 0.0 }
    }
}

/// Finds a most-violated connectivity cut for client `j` against root `v`,
/// or nothing when all cuts hold within `tol`. A super-source feeds each
/// facility i with capacity x_ij; undirected facility edges carry y_e as
/// opposed arc pairs; the sink is v. Violation of the best set S equals
/// (sum_i x_ij) - maxflow, and the min cut's source side (minus the
/// super-source) is that S.
pub fn separate_cuts(
    inst: &Instance,
    x: &[Vec<f64>],
    y: &BTreeMap<(usize, usize), f64>,
    v: usize,
    j: usize,
    tol: f64,
) -> Vec<FlCut> {
    let nf = inst.n_facilities();
    let s = nf; // super-source node id
    let mut net = FlowNetwork::new(nf + 1, s, v);
    let mut x_sum = 0.0;
    for i in 0..nf {
        let xi = x[i][j];
        x_sum += xi;
        if i != v && xi > 0.0 {
            net.add_arc(s, i, xi, 0.0);
        } else if i == v && xi > 0.0 {
            // Mass on the root reaches the sink unconditionally.
            net.add_arc(s, v, xi, 0.0);
        }
    }
    for (&(a, b), &ye) in y {
        if ye > 0.0 {
            net.add_arc(a, b, ye, 0.0);
            net.add_arc(b, a, ye, 0.0);
        }
    }
    let (flow, cut) = max_flow(&net);
    if flow >= x_sum - tol {
        return Vec::new();
    }
    let set: BTreeSet<usize> = cut
        .source_side
        .iter()
        .copied()
        .filter(|&u| u < nf)
        .collect();
    debug_assert!(!set.contains(&v));
    debug_assert!(!set.is_empty());
    vec![FlCut { client: j, set }]
}

/// Cuts discovered so far for one instance, shared across root choices. A
/// cut (S, j) is valid for any root outside S, so later roots start from the
/// pool instead of rediscovering it.
#[derive(Debug, Clone, Default)]
pub struct CutPool {
    cuts: Vec<FlCut>,
    seen: BTreeSet<FlCut>,
}

impl CutPool {
    pub fn new() -> Self {
        CutPool::default()
    }

    /// Returns true when the cut is new.
    pub fn insert(&mut self, cut: FlCut) -> bool {
        if self.seen.insert(cut.clone()) {
            self.cuts.push(cut);
            true
        } else {
            false
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &FlCut> {
        self.cuts.iter()
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }
}

/// Cutting-plane driver: solve, separate over every residual client, add
/// violated cuts, repeat until a full sweep is clean. The result is feasible
/// for the entire exponential family, not just the materialized rows. The
/// pool carries cuts across calls (one pool per instance); `max_rounds`
/// bounds the number of resolves.
pub fn solve_with_cuts(
    fl: &mut FlModel,
    inst: &Instance,
    pool: &mut CutPool,
    max_rounds: usize,
) -> Result<FractionalSolution> {
    let residual: BTreeSet<usize> = fl.layout.residual.iter().copied().collect();
    let v = fl.layout.v;
    let mut installed: BTreeSet<FlCut> = BTreeSet::new();
    for cut in pool.iter() {
        if residual.contains(&cut.client) && !cut.set.contains(&v) && installed.insert(cut.clone())
        {
            let row = cut.to_constraint(&fl.layout);
            fl.lp.constraints.push(row);
        }
    }
    let mut prev_value: Option<f64> = None;
    for _ in 0..max_rounds {
        let sol = solve_lp(&fl.lp)?;
        // Adding cuts can only shrink the feasible region, so the value may
        // never drop between rounds.
        if let Some(prev) = prev_value {
            assert!(
                sol.objective >= prev - 1e-6 * (1.0 + prev.abs()),
                "cut round decreased LP value from {prev} to {}",
                sol.objective
            );
        }
        prev_value = Some(sol.objective);
        let frac = fl.extract(&sol);
        let mut added = false;
        for &j in &fl.layout.residual {
            for cut in separate_cuts(inst, &frac.x, &frac.y, v, j, CUT_ADD_TOL) {
                pool.insert(cut.clone());
                if installed.insert(cut.clone()) {
                    fl.lp.constraints.push(cut.to_constraint(&fl.layout));
                    added = true;
                }
            }
        }
        if !added {
            return Ok(frac);
        }
    }
    Err(Error::IterationLimit(format!(
        "cutting-plane loop exceeded {max_rounds} rounds"
    )))
}

/// Full feasibility audit of an FL-shaped point at tolerance `tol`: bounds,
/// service (with z when present), x <= w, the pinned root, and a complete
/// separation sweep of the connectivity family.
pub fn check_fl_feasibility(
    inst: &Instance,
    frac: &FractionalSolution,
    residual: &BTreeSet<usize>,
    v: usize,
    tol: f64,
) -> Result<()> {
    let nf = inst.n_facilities();
    let nc = inst.n_clients();
    let in_unit = |val: f64| val >= -tol && val <= 1.0 + tol;
    for (i, &wi) in frac.w.iter().enumerate() {
        if !in_unit(wi) {
            return Err(Error::NotFeasibleFractional(format!("w[{i}] = {wi}")));
        }
    }
    for i in 0..nf {
        for j in 0..nc {
            if !in_unit(frac.x[i][j]) {
                return Err(Error::NotFeasibleFractional(format!(
                    "x[{i}][{j}] = {}",
                    frac.x[i][j]
                )));
            }
        }
    }
    for (&(a, b), &ye) in &frac.y {
        if !in_unit(ye) {
            return Err(Error::NotFeasibleFractional(format!("y[{a},{b}] = {ye}")));
        }
    }
    if let Some(z) = &frac.z {
        for (j, &zj) in z.iter().enumerate() {
            if !in_unit(zj) {
                return Err(Error::NotFeasibleFractional(format!("z[{j}] = {zj}")));
            }
        }
    }
    if frac.w[v] < 1.0 - tol {
        return Err(Error::NotFeasibleFractional(format!(
            "root w[{v}] = {} not pinned open",
            frac.w[v]
        )));
    }
    for j in 0..nc {
        let served: f64 = (0..nf).map(|i| frac.x[i][j]).sum();
        if residual.contains(&j) {
            let total = served + frac.z.as_ref().map_or(0.0, |z| z[j]);
            if (total - 1.0).abs() > tol {
                return Err(Error::NotFeasibleFractional(format!(
                    "client {j} coverage {total} != 1"
                )));
            }
        } else if served > tol {
            return Err(Error::NotFeasibleFractional(format!(
                "non-residual client {j} carries service mass {served}"
            )));
        }
    }
    for i in 0..nf {
        for &j in residual {
            if frac.x[i][j] > frac.w[i] + tol {
                return Err(Error::NotFeasibleFractional(format!(
                    "x[{i}][{j}] = {} exceeds w[{i}] = {}",
                    frac.x[i][j], frac.w[i]
                )));
            }
        }
    }
    for &j in residual {
        let violated = separate_cuts(inst, &frac.x, &frac.y, v, j, tol);
        if let Some(cut) = violated.first() {
            return Err(Error::NotFeasibleFractional(format!(
                "connectivity cut violated for client {j}, set {:?}",
                cut.set
            )));
        }
    }
    Ok(())
}
