//! Command-line front end: generate, solve, verify, benchmark.
//!
//! Every solve funnels through [`run_pipeline`], which dispatches on the
//! problem kind and always validates (and certifies, when a combining step
//! produced a bound certificate) before reporting success. Run records are
//! JSON lines and never serialize wall-clock time, so repeated runs of the
//! same corpus produce byte-identical files.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::combine::{
    combine_connected_capacitated, combine_kcenter, combine_penalty, BoundCertificate,
};
use crate::error::{Error, Result};
use crate::instance::{
    drop_capacities, drop_connectivity, generate_euclidean, load_instance, BaseKind, GenConfig,
    Instance, ProblemKind,
};
use crate::lp::{build_confl_lp, build_conpfl_lp, solve_with_cuts, CutPool};
use crate::reductions::{
    assemble_conpfl, cpfl_to_cfl, lift_cfl_solution, scale_fractional, threshold_penalties,
    ThresholdResult,
};
use crate::subsolvers::{
    round_confl, solve_cfl_local_search, solve_ckc_exact, solve_confl, solve_conkc_exact,
    solve_exact, CostBreakdown, Solution, EXACT_MAX_CLIENTS, EXACT_MAX_FACILITIES,
};
use crate::verify::{certify_bound, evaluate, objective_value, validate, ValidationPolicy};

const MAX_CUT_ROUNDS: usize = 10_000;

/// Knobs shared by `solve` and `bench`.
#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    /// Seed for the local-search sub-solver.
    pub seed: u64,
    /// Replace heuristic sub-solvers with the exhaustive oracles.
    pub exact: bool,
    /// Fix the connectivity root instead of trying every facility.
    pub root: Option<usize>,
    /// After the penalty chain picks its residual set, re-solve that set
    /// from scratch and keep the cheaper of the two solutions.
    pub resolve_confl: bool,
}

/// What a pipeline hands back besides the solution itself.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub solution: Solution,
    /// Short id of the solver chain, recorded for later comparison.
    pub pipeline: String,
    /// Present exactly when the kind required a combining step.
    pub certificate: Option<BoundCertificate>,
    /// Best relaxation value seen, when the pipeline solved LPs.
    pub lp_bound: Option<f64>,
}

/// One solve, serialized as a JSON line. Wall time is measured but skipped
/// during serialization: record files must be byte-identical across reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    pub kind: String,
    pub pipeline: String,
    pub seed: u64,
    pub cost: CostBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<BoundCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lp_bound: Option<f64>,
    /// Exact optimum, when the instance fits the oracle guard rails.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
    /// Achieved objective over the oracle optimum; never sinks below 1
    /// beyond rounding noise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(skip, default)]
    pub wall_ms: u128,
}

/// On-disk solution format. Ids rather than indices, so the file stays
/// readable next to the instance JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionFile {
    pub open: Vec<String>,
    /// Pairs (client id, facility id).
    pub assignment: Vec<(String, String)>,
    pub penalty_set: Vec<String>,
    /// Pairs of facility ids, each sorted by declaration order.
    pub steiner_edges: Vec<(String, String)>,
    pub metadata: SolutionMetadata,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionMetadata {
    pub kind: String,
    pub claimed_total: f64,
}

impl SolutionFile {
    pub fn from_solution(
        sol: &Solution,
        inst: &Instance,
        kind: ProblemKind,
        claimed_total: f64,
    ) -> SolutionFile {
        let fid = |i: usize| inst.facilities[i].id.clone();
        let cid = |j: usize| inst.clients[j].id.clone();
        SolutionFile {
            open: sol.open.iter().map(|&i| fid(i)).collect(),
            assignment: sol
                .assignment
                .iter()
                .map(|(&j, &i)| (cid(j), fid(i)))
                .collect(),
            penalty_set: sol.penalty_set.iter().map(|&j| cid(j)).collect(),
            steiner_edges: sol
                .steiner_edges
                .iter()
                .map(|&(a, b)| (fid(a), fid(b)))
                .collect(),
            metadata: SolutionMetadata {
                kind: kind.name(),
                claimed_total,
            },
        }
    }

    pub fn into_solution(&self, inst: &Instance) -> Result<Solution> {
        let mut sol = Solution {
            claimed_total: Some(self.metadata.claimed_total),
            ..Solution::default()
        };
        for id in &self.open {
            sol.open.insert(inst.facility_index(id)?);
        }
        for (cid, fid) in &self.assignment {
            sol.assignment
                .insert(inst.client_index(cid)?, inst.facility_index(fid)?);
        }
        for id in &self.penalty_set {
            sol.penalty_set.insert(inst.client_index(id)?);
        }
        for (a, b) in &self.steiner_edges {
            let a = inst.facility_index(a)?;
            let b = inst.facility_index(b)?;
            sol.steiner_edges.insert((a.min(b), a.max(b)));
        }
        Ok(sol)
    }
}

/// Exact optimum objective when the instance fits the oracle guard rails,
/// `None` when it is too large to enumerate.
pub fn oracle_objective(inst: &Instance, kind: ProblemKind) -> Result<Option<f64>> {
    if inst.n_facilities() > EXACT_MAX_FACILITIES || inst.n_clients() > EXACT_MAX_CLIENTS {
        return Ok(None);
    }
    if kind.prize_collecting && kind.base == BaseKind::KC {
        return Ok(None);
    }
    let sol = solve_exact(inst, kind)?;
    Ok(Some(objective_value(inst, &sol, kind)?))
}

/// Solves `inst` as `kind`, picking the solver chain the kind calls for.
///
/// Connected + capacitated kinds run both sub-solvers against their dropped
/// views and combine; terminal kinds run a single sub-solver. The returned
/// solution is not yet validated; callers do that against their own policy.
pub fn run_pipeline(
    inst: &Instance,
    kind: ProblemKind,
    opts: &SolveOptions,
) -> Result<PipelineOutput> {
    kind.check_instance(inst)?;
    if kind.prize_collecting && kind.base == BaseKind::KC {
        return Err(Error::InvalidConfig(format!(
            "prize-collecting k-center ({kind}) is not supported"
        )));
    }
    if let Some(v) = opts.root {
        if v >= inst.n_facilities() {
            return Err(Error::InvalidConfig(format!(
                "root {v} out of range for {} facilities",
                inst.n_facilities()
            )));
        }
    }
    if kind.connected && kind.capacitated {
        return combined_pipeline(inst, kind, opts);
    }
    if opts.exact {
        return Ok(PipelineOutput {
            solution: solve_exact(inst, kind)?,
            pipeline: "exact".into(),
            certificate: None,
            lp_bound: None,
        });
    }
    match (kind.connected, kind.prize_collecting, kind.base) {
        (true, true, BaseKind::FL) => {
            let (solution, lp_bound) = conpfl_chain(inst, opts)?;
            Ok(PipelineOutput {
                solution,
                pipeline: conpfl_pipeline_id(opts),
                certificate: None,
                lp_bound: Some(lp_bound),
            })
        }
        // The penalty chain scales a fractional point, which can break a
        // cardinality bound; these kinds only work with capacities (where
        // the capacitated side enforces k) or exactly.
        (true, true, _) => Err(Error::InvalidConfig(format!(
            "{kind} has no approximation pipeline; add capacities or rerun with --exact"
        ))),
        (true, false, BaseKind::FL) => {
            let all: BTreeSet<usize> = (0..inst.n_clients()).collect();
            let solution = match opts.root {
                Some(v) => rooted_confl(inst, &all, v)?,
                None => solve_confl(inst, &all)?,
            };
            Ok(PipelineOutput {
                solution,
                pipeline: "confl_cut_round".into(),
                certificate: None,
                lp_bound: None,
            })
        }
        (true, false, BaseKind::KC) => {
            let k = inst.k.expect("check_instance verified k");
            Ok(PipelineOutput {
                solution: solve_conkc_exact(inst, k)?,
                pipeline: "kc_exact".into(),
                certificate: None,
                lp_bound: None,
            })
        }
        // Connected k-median and k-facility-location have no heuristic
        // chain here; desk-scale instances go straight to the oracle.
        (true, false, _) => Ok(PipelineOutput {
            solution: solve_exact(inst, kind)?,
            pipeline: "exact".into(),
            certificate: None,
            lp_bound: None,
        }),
        (false, true, _) => {
            // Penalties reduce to plain capacitated facility location. An
            // uncapacitated kind first gets the vacuous capacity |C|.
            let base = if kind.capacitated {
                inst.clone()
            } else {
                let mut b = inst.clone();
                let nc = b.n_clients() as u64;
                for f in &mut b.facilities {
                    f.capacity = Some(nc);
                }
                b
            };
            let (reduced, map) = cpfl_to_cfl(&base)?;
            let red = solve_cfl_local_search(&reduced, opts.seed)?;
            Ok(PipelineOutput {
                solution: lift_cfl_solution(&red, &map)?,
                pipeline: "cpfl_reduce+cfl_local".into(),
                certificate: None,
                lp_bound: None,
            })
        }
        (false, false, BaseKind::KC) => {
            let k = inst.k.expect("check_instance verified k");
            Ok(PipelineOutput {
                solution: solve_ckc_exact(inst, k)?,
                pipeline: "kc_exact".into(),
                certificate: None,
                lp_bound: None,
            })
        }
        (false, false, _) => Ok(PipelineOutput {
            solution: solve_cfl_local_search(inst, opts.seed)?,
            pipeline: "cfl_local".into(),
            certificate: None,
            lp_bound: None,
        }),
    }
}

fn conpfl_pipeline_id(opts: &SolveOptions) -> String {
    if opts.resolve_confl {
        "conpfl_chain+resolve".into()
    } else {
        "conpfl_chain".into()
    }
}

/// Connected + capacitated kinds: solve each constraint against the view
/// that drops the other, then merge and certify.
fn combined_pipeline(
    inst: &Instance,
    kind: ProblemKind,
    opts: &SolveOptions,
) -> Result<PipelineOutput> {
    let con_view = drop_capacities(inst);
    let cap_view = drop_connectivity(inst);

    if kind.base == BaseKind::KC {
        let k = inst.k.expect("check_instance verified k");
        let con = solve_conkc_exact(&con_view, k)?;
        let cap = solve_ckc_exact(&cap_view, k)?;
        let (solution, cert) = combine_kcenter(&con, &cap, inst, k)?;
        return Ok(PipelineOutput {
            solution,
            pipeline: "combine(conkc_exact+ckc_exact)".into(),
            certificate: Some(cert),
            lp_bound: None,
        });
    }

    let con_kind = ProblemKind {
        capacitated: false,
        ..kind
    };
    let cap_kind = ProblemKind {
        connected: false,
        ..kind
    };
    if kind.prize_collecting {
        let (con, lp_bound, con_id) = if opts.exact {
            (solve_exact(&con_view, con_kind)?, None, "exact".to_string())
        } else {
            let (sol, lp) = conpfl_chain(&con_view, opts)?;
            (sol, Some(lp), conpfl_pipeline_id(opts))
        };
        let (cap, cap_id) = if opts.exact {
            (solve_exact(&cap_view, cap_kind)?, "exact")
        } else {
            let (reduced, map) = cpfl_to_cfl(&cap_view)?;
            let red = solve_cfl_local_search(&reduced, opts.seed)?;
            (lift_cfl_solution(&red, &map)?, "cpfl_reduce+cfl_local")
        };
        let (solution, cert) = combine_penalty(&con, &cap, inst)?;
        Ok(PipelineOutput {
            solution,
            pipeline: format!("combine({con_id}+{cap_id})"),
            certificate: Some(cert),
            lp_bound,
        })
    } else {
        let (con, con_id) = if opts.exact {
            (solve_exact(&con_view, con_kind)?, "exact")
        } else {
            let all: BTreeSet<usize> = (0..inst.n_clients()).collect();
            let sol = match opts.root {
                Some(v) => rooted_confl(&con_view, &all, v)?,
                None => solve_confl(&con_view, &all)?,
            };
            (sol, "confl_cut_round")
        };
        let (cap, cap_id) = if opts.exact {
            (solve_exact(&cap_view, cap_kind)?, "exact")
        } else {
            (solve_cfl_local_search(&cap_view, opts.seed)?, "cfl_local")
        };
        let (solution, cert) = combine_connected_capacitated(&con, &cap, inst)?;
        Ok(PipelineOutput {
            solution,
            pipeline: format!("combine({con_id}+{cap_id})"),
            certificate: Some(cert),
            lp_bound: None,
        })
    }
}

/// Single-root connected facility location: cut loop plus rounding, no
/// search over roots.
fn rooted_confl(inst: &Instance, residual: &BTreeSet<usize>, v: usize) -> Result<Solution> {
    let mut pool = CutPool::new();
    let mut fl = build_confl_lp(inst, residual, v)?;
    let frac = solve_with_cuts(&mut fl, inst, &mut pool, MAX_CUT_ROUNDS)?;
    round_confl(&frac, inst, residual, v)
}

/// The penalty chain: per-root LP, threshold, scale, round, assemble; keeps
/// the cheapest assembled solution over all roots. Returns it along with
/// the smallest relaxation value seen (the reference bound for the chain).
fn conpfl_chain(inst: &Instance, opts: &SolveOptions) -> Result<(Solution, f64)> {
    let kind = ProblemKind::new(BaseKind::FL).connected().prize_collecting();
    let roots: Vec<usize> = match opts.root {
        Some(v) => vec![v],
        None => (0..inst.n_facilities()).collect(),
    };
    let mut pool = CutPool::new();
    let mut min_lp = f64::INFINITY;
    let mut best: Option<(f64, Solution, ThresholdResult)> = None;
    for v in roots {
        let mut fl = build_conpfl_lp(inst, v)?;
        let rho = solve_with_cuts(&mut fl, inst, &mut pool, MAX_CUT_ROUNDS)?;
        min_lp = min_lp.min(rho.objective);
        let thr = threshold_penalties(&rho, inst);
        let solution = if thr.residual.is_empty() {
            // Every client thresholded out: pay all penalties, open nothing.
            Solution {
                penalty_set: thr.c_p.clone(),
                ..Solution::default()
            }
        } else {
            let scaled = scale_fractional(&rho, &thr.residual, inst, v)?;
            let rounded = round_confl(&scaled, inst, &thr.residual, v)?;
            assemble_conpfl(&rounded, &thr)?
        };
        let total = objective_value(inst, &solution, kind)?;
        if best.as_ref().map_or(true, |(t, _, _)| total < *t) {
            best = Some((total, solution, thr));
        }
    }
    let (total, solution, thr) = best.expect("at least one root was tried");
    if opts.resolve_confl && !thr.residual.is_empty() {
        let re = solve_confl(inst, &thr.residual)?;
        let re_sol = assemble_conpfl(&re, &thr)?;
        if objective_value(inst, &re_sol, kind)? < total {
            return Ok((re_sol, min_lp));
        }
    }
    Ok((solution, min_lp))
}

#[derive(Debug, Parser)]
#[command(
    name = "concfl",
    version,
    about = "Facility location with connectivity, capacity and penalty constraints"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random Euclidean instance.
    Gen(GenArgs),
    /// Solve an instance; writes solution and record files.
    Solve(SolveArgs),
    /// Validate a solution file against its instance.
    Verify(VerifyArgs),
    /// Run the seeded benchmark corpus.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output instance path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub facilities: usize,
    #[arg(long, default_value_t = 8)]
    pub clients: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Kind whose required fields (capacities, penalties, k) to generate.
    #[arg(long, default_value = "fl")]
    pub kind: String,
    /// Draw one shared capacity value instead of a spread.
    #[arg(long)]
    pub uniform: bool,
    /// Instance name; defaults to the output file stem.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Instance JSON file.
    pub instance: PathBuf,
    /// Problem kind, e.g. cfl, confl, conpfl, concfl, concpfl, conckc.
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Capacity slack factor tolerated during validation.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Force the exhaustive oracle sub-solvers.
    #[arg(long)]
    pub exact: bool,
    /// Fix the connectivity root to this facility index instead of looping.
    #[arg(long)]
    pub v: Option<usize>,
    /// Also re-solve the penalty chain's residual set from scratch and keep
    /// the cheaper solution.
    #[arg(long)]
    pub resolve_confl: bool,
    /// Solution output path; defaults to the instance path with extension
    /// sol.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record output path; defaults to the instance path with extension
    /// record.json.
    #[arg(long)]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Instance JSON file.
    pub instance: PathBuf,
    /// Solution JSON file.
    pub solution: PathBuf,
    /// Kind to validate as; defaults to the solution file's metadata.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Record output path, one JSON line per run, sorted by instance name.
    #[arg(long, default_value = "results.jsonl")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Instances per kind.
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    /// Worker threads; 0 keeps the rayon default.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Force the exhaustive oracle sub-solvers in every pipeline.
    #[arg(long)]
    pub exact: bool,
}

pub fn main_entry() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(0) => std::process::ExitCode::SUCCESS,
        Ok(_) => std::process::ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}

/// Dispatches a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

/// Generator configuration carrying every field `kind` needs. Uniform
/// capacities pin the range to one value; spread capacities draw from
/// [2, 5]. k defaults to half the facility count, rounded up.
pub fn corpus_config(kind: ProblemKind, uniform: bool, n_facilities: usize) -> GenConfig {
    GenConfig {
        capacity: if kind.capacitated {
            Some(if uniform { (3, 3) } else { (2, 5) })
        } else {
            None
        },
        penalty: if kind.prize_collecting {
            Some((0.1, 1.2))
        } else {
            None
        },
        k: if kind.requires_k() {
            Some((n_facilities + 1) / 2)
        } else {
            None
        },
        ..GenConfig::default()
    }
}

fn cmd_gen(args: &GenArgs) -> Result<i32> {
    let kind = ProblemKind::parse(&args.kind)?;
    let config = corpus_config(kind, args.uniform, args.facilities);
    let name = match &args.name {
        Some(n) => n.clone(),
        None => args
            .out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "instance".into()),
    };
    let inst = generate_euclidean(&name, args.facilities, args.clients, args.seed, &config)?;
    std::fs::write(&args.out, inst.to_json())?;
    println!(
        "wrote {} ({} facilities, {} clients, fields for {})",
        args.out.display(),
        args.facilities,
        args.clients,
        kind
    );
    Ok(0)
}

fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let inst = load_instance(&args.instance)?;
    let kind = ProblemKind::parse(&args.kind)?;
    let opts = SolveOptions {
        seed: args.seed,
        exact: args.exact,
        root: args.v,
        resolve_confl: args.resolve_confl,
    };
    let start = Instant::now();
    let out = run_pipeline(&inst, kind, &opts)?;
    let wall_ms = start.elapsed().as_millis();

    let policy = ValidationPolicy::with_gamma(args.gamma);
    let report = validate(&inst, &out.solution, kind, &policy);
    if !report.ok {
        let (code, detail) = &report.violations[0];
        eprintln!("validation failed: {code}: {detail}");
        return Ok(1);
    }
    if let Some(cert) = &out.certificate {
        if !certify_bound(cert) {
            eprintln!("certificate rejected: slack {}", cert.inequality_slack);
            return Ok(1);
        }
    }

    let cost = evaluate(&inst, &out.solution, kind)?;
    let total = objective_value(&inst, &out.solution, kind)?;
    let oracle = oracle_objective(&inst, kind)?;
    let ratio = oracle.map(|o| total / o);

    let sol_path = args
        .out
        .clone()
        .unwrap_or_else(|| args.instance.with_extension("sol.json"));
    let file = SolutionFile::from_solution(&out.solution, &inst, kind, total);
    std::fs::write(&sol_path, serde_json::to_string_pretty(&file)? + "\n")?;

    let record = RunRecord {
        instance: inst.name.clone(),
        kind: kind.name(),
        pipeline: out.pipeline,
        seed: args.seed,
        cost,
        certificate: out.certificate,
        lp_bound: out.lp_bound,
        oracle,
        ratio,
        wall_ms,
    };
    let rec_path = args
        .record
        .clone()
        .unwrap_or_else(|| args.instance.with_extension("record.json"));
    std::fs::write(&rec_path, serde_json::to_string(&record)? + "\n")?;

    let ratio_note = match ratio {
        Some(r) => format!(", ratio {r:.4}"),
        None => String::new(),
    };
    println!(
        "{}: {} total {:.6}{} ({} ms, solution {}, record {})",
        inst.name,
        kind,
        total,
        ratio_note,
        wall_ms,
        sol_path.display(),
        rec_path.display()
    );
    Ok(0)
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let inst = load_instance(&args.instance)?;
    let text = std::fs::read_to_string(&args.solution)?;
    let file: SolutionFile = serde_json::from_str(&text)?;
    let kind_name = args
        .kind
        .clone()
        .unwrap_or_else(|| file.metadata.kind.clone());
    let kind = ProblemKind::parse(&kind_name)?;
    let sol = file.into_solution(&inst)?;
    let policy = ValidationPolicy::with_gamma(args.gamma);
    let report = validate(&inst, &sol, kind, &policy);
    if report.ok {
        let total = objective_value(&inst, &sol, kind)?;
        println!("ok: {} solution for {} costs {:.6}", kind, inst.name, total);
        Ok(0)
    } else {
        for (code, detail) in &report.violations {
            println!("{code}: {detail}");
        }
        Ok(1)
    }
}

/// Kinds exercised by the benchmark corpus, smallest machinery first.
const BENCH_KINDS: [&str; 12] = [
    "cfl", "confl", "cpfl", "conpfl", "concfl", "conckm", "conckfl", "concpfl", "concpkm",
    "concpkfl", "ckc", "conckc",
];

/// Size wheel for the corpus; everything stays inside the oracle guard
/// rails so every record carries a ratio.
const BENCH_SIZES: [(usize, usize); 4] = [(3, 4), (4, 6), (5, 8), (6, 9)];

/// Corpus promise per kind: the worst acceptable total over the oracle
/// optimum. Uniform and spread capacities promise different factors.
fn ratio_gate(kind: ProblemKind, uniform: bool) -> Option<f64> {
    match kind.name().as_str() {
        "cfl" | "ckm" | "ckfl" => Some(5.0),
        "confl" => Some(10.66),
        "concfl" | "conckm" | "conckfl" => Some(if uniform { 9.19 } else { 13.19 }),
        "conpfl" => Some(21.32),
        "concpfl" | "concpkm" | "concpkfl" => Some(31.32),
        "conckc" => Some(if uniform { 18.0 } else { 24.0 }),
        _ => None,
    }
}

struct BenchRun {
    name: String,
    kind: ProblemKind,
    inst: Instance,
    seed: u64,
    capacity_label: &'static str,
    gate: Option<f64>,
}

/// Deterministic corpus: same seed and count give identical instances.
fn bench_corpus(base_seed: u64, count: usize) -> Result<Vec<BenchRun>> {
    let mut runs = Vec::new();
    for (ki, kind_name) in BENCH_KINDS.iter().enumerate() {
        let kind = ProblemKind::parse(kind_name)?;
        for i in 0..count {
            let (nf, nc) = BENCH_SIZES[i % BENCH_SIZES.len()];
            let uniform = !kind.capacitated || i % 2 == 0;
            let seed = base_seed
                .wrapping_mul(1_000_003)
                .wrapping_add((ki as u64) << 16)
                .wrapping_add(i as u64);
            let capacity_label = if !kind.capacitated {
                ""
            } else if uniform {
                "/u"
            } else {
                "/n"
            };
            let suffix = capacity_label.replace('/', "-");
            let name = format!("{kind_name}-{i:02}{suffix}");
            let config = corpus_config(kind, uniform, nf);
            let inst = generate_euclidean(&name, nf, nc, seed, &config)?;
            runs.push(BenchRun {
                name,
                kind,
                inst,
                seed,
                capacity_label,
                gate: ratio_gate(kind, uniform),
            });
        }
    }
    Ok(runs)
}

fn bench_one(run: &BenchRun, exact: bool) -> Result<RunRecord> {
    let opts = SolveOptions {
        seed: run.seed,
        exact,
        ..SolveOptions::default()
    };
    let start = Instant::now();
    let out = run_pipeline(&run.inst, run.kind, &opts)?;
    let wall_ms = start.elapsed().as_millis();

    let report = validate(&run.inst, &out.solution, run.kind, &ValidationPolicy::default());
    if !report.ok {
        let (code, detail) = &report.violations[0];
        return Err(Error::InvalidSolution(format!("{code}: {detail}")));
    }
    if let Some(cert) = &out.certificate {
        if !certify_bound(cert) {
            return Err(Error::InvalidSolution(format!(
                "certificate slack {}",
                cert.inequality_slack
            )));
        }
    }

    let cost = evaluate(&run.inst, &out.solution, run.kind)?;
    let total = objective_value(&run.inst, &out.solution, run.kind)?;
    let oracle = oracle_objective(&run.inst, run.kind)?;
    let ratio = oracle.map(|o| total / o);
    if let Some(r) = ratio {
        // A heuristic beating the exhaustive oracle means one of them is
        // wrong; stop the corpus rather than record it.
        if r < 1.0 - 1e-9 {
            return Err(Error::InvalidSolution(format!(
                "total {total} undercuts the oracle optimum {}",
                oracle.unwrap()
            )));
        }
    }
    Ok(RunRecord {
        instance: run.name.clone(),
        kind: run.kind.name(),
        pipeline: out.pipeline,
        seed: run.seed,
        cost,
        certificate: out.certificate,
        lp_bound: out.lp_bound,
        oracle,
        ratio,
        wall_ms,
    })
}

fn cmd_bench(args: &BenchArgs) -> Result<i32> {
    use rayon::prelude::*;

    let runs = bench_corpus(args.seed, args.count)?;
    let exec = |runs: &[BenchRun]| -> Vec<(usize, Result<RunRecord>)> {
        runs.par_iter()
            .enumerate()
            .map(|(i, r)| (i, bench_one(r, args.exact)))
            .collect()
    };
    let mut results = if args.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(|| exec(&runs))
    } else {
        exec(&runs)
    };
    results.sort_by(|a, b| runs[a.0].name.cmp(&runs[b.0].name));

    let mut lines = String::new();
    let mut failures: Vec<String> = Vec::new();
    let mut records: Vec<(usize, RunRecord)> = Vec::new();
    for (i, res) in results {
        match res {
            Ok(rec) => {
                lines.push_str(&serde_json::to_string(&rec)?);
                lines.push('\n');
                records.push((i, rec));
            }
            Err(e) => failures.push(format!("{}: {e}", runs[i].name)),
        }
    }
    std::fs::write(&args.out, lines)?;

    // Per-row aggregation, keyed by kind plus capacity scheme so each row
    // has a single gate.
    #[derive(Default)]
    struct Agg {
        runs: usize,
        certified: usize,
        with_cert: usize,
        ratios: Vec<f64>,
        gate: Option<f64>,
        breaches: usize,
    }
    let mut table: BTreeMap<String, Agg> = BTreeMap::new();
    let mut breaches: Vec<String> = Vec::new();
    for (i, rec) in &records {
        let run = &runs[*i];
        let key = format!("{}{}", rec.kind, run.capacity_label);
        let agg = table.entry(key).or_default();
        agg.runs += 1;
        agg.gate = run.gate;
        if let Some(cert) = &rec.certificate {
            agg.with_cert += 1;
            if certify_bound(cert) {
                agg.certified += 1;
            }
        }
        if let Some(r) = rec.ratio {
            agg.ratios.push(r);
            if let Some(g) = run.gate {
                if r > g + 1e-9 {
                    agg.breaches += 1;
                    breaches.push(format!("{}: ratio {r:.4} over gate {g}", run.name));
                }
            }
        }
    }

    println!(
        "{:<12} {:>4} {:>10} {:>10} {:>7} {:>6} {:>6}  status",
        "kind", "runs", "mean", "max", "gate", "certs", "used"
    );
    let mut total_breaches = 0usize;
    let mut cert_bad = 0usize;
    for (key, agg) in &table {
        let mean = if agg.ratios.is_empty() {
            f64::NAN
        } else {
            agg.ratios.iter().sum::<f64>() / agg.ratios.len() as f64
        };
        let max = agg.ratios.iter().copied().fold(f64::NAN, f64::max);
        let gate = agg
            .gate
            .map(|g| format!("{g:.2}"))
            .unwrap_or_else(|| "-".into());
        let status = if agg.breaches > 0 || agg.certified < agg.with_cert {
            "FAIL"
        } else {
            "ok"
        };
        total_breaches += agg.breaches;
        cert_bad += agg.with_cert - agg.certified;
        println!(
            "{key:<12} {:>4} {mean:>10.4} {max:>10.4} {gate:>7} {:>6} {:>6}  {status}",
            agg.runs,
            agg.certified,
            agg.with_cert,
        );
    }
    let with_cert: usize = table.values().map(|a| a.with_cert).sum();
    println!(
        "{} runs, {} failures, {} gate breaches, certificates {}/{}",
        records.len() + failures.len(),
        failures.len(),
        total_breaches,
        with_cert - cert_bad,
        with_cert,
    );
    for f in &failures {
        eprintln!("failure: {f}");
    }
    for b in &breaches {
        eprintln!("gate breach: {b}");
    }
    if failures.is_empty() && total_breaches == 0 && cert_bad == 0 {
        Ok(0)
    } else {
        Ok(1)
    }
}
