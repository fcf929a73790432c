//! The `mmsb` command line: `synth`, `snapshot`, `solve`, `predict` and
//! `evaluate`, each reading an optional JSON config that flags override.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{
    self, hash_dir, hash_file, load_raw_snapshots, read_snapshot_archive, read_solution_archive, write_json,
    InputHash, PredictionMeta, SnapshotMeta, SolutionMeta, SNAPSHOT_KIND, SOLUTION_KIND,
};
use crate::bridge::{objective_value, sinkhorn_solve, SolverConfig};
use crate::context::{load_library, match_context, read_polyline_csv, write_polyline_csv, Context, MatchWeights};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_prediction_suite, format_table};
use crate::marginals::{
    build_snapshot_plan, cycle_time_statistics, extract_at_times, extract_snapshots, ingest_profiles, standardize,
    Standardization, DEFAULT_WINDOW,
};
use crate::predict::{predict_distribution, Query};
use crate::synth::{generate_profiles, sample_gp_path, write_synth_output, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "mmsb", version, about = "Multimarginal Schrödinger bridge trajectory inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate seeded synthetic execution profiles.
    Synth(SynthArgs),
    /// Extract snapshot distributions from execution profiles.
    Snapshot(SnapshotArgs),
    /// Solve the multimarginal bridge over a snapshot archive.
    Solve(SolveArgs),
    /// Predict distributions at query times from a solved bridge.
    Predict(PredictArgs),
    /// Score predictions against measured snapshots.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON file with the command's settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SnapshotArgs {
    #[command(flatten)]
    common: Common,
    /// Directory holding `profiles/` and `cycles.csv` (as written by `synth`).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    profiles_dir: Option<PathBuf>,
    #[arg(long)]
    cycles: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    s_int: Option<usize>,
    /// Extraction window in seconds.
    #[arg(long)]
    window: Option<f64>,
    /// Extract at the query times of these cycles instead of the snapshot
    /// plan (measured-distribution archive for `evaluate`).
    #[arg(long, value_delimiter = ',')]
    query_cycles: Option<Vec<usize>>,
    /// Extract at these explicit times (measured-distribution archive).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    times: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    snapshots: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    solution: Option<PathBuf>,
    /// Context manifest (JSON) used to resolve the solution.
    #[arg(long)]
    library: Option<PathBuf>,
    /// Use this library context directly.
    #[arg(long)]
    context_id: Option<String>,
    /// Query cyber context, e.g. `15,15`.
    #[arg(long, value_delimiter = ',')]
    context_cyber: Option<Vec<u32>>,
    /// Query reference curve (`x,y` CSV).
    #[arg(long)]
    context_phys: Option<PathBuf>,
    /// Query time in seconds; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    tau: Vec<f64>,
    /// Predict at the evenly spread query times of this cycle (1-based).
    #[arg(long)]
    query_cycle: Option<usize>,
    #[arg(long)]
    prune: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    solution: Option<PathBuf>,
    /// Measured-distribution archive written by `snapshot --query-cycles`.
    #[arg(long)]
    held_out: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    tau: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the optimal plan of every query.
    #[arg(long)]
    emit_plan: bool,
}

fn load_config<T: for<'de> Deserialize<'de> + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(T::default()),
    }
}

fn required<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing required setting `{name}`")))
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("settings serialize to JSON")
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpPathConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub num_points: usize,
    pub variance: f64,
    pub length_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub out_dir: Option<PathBuf>,
    pub spec: Option<SynthSpec>,
    /// Also write a reference curve `phys.csv`.
    pub reference_path: Option<GpPathConfig>,
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = load_config(&args.common.config)?;
    if let Some(out) = args.out {
        cfg.out_dir = Some(out);
    }
    let mut spec = required(cfg.spec.clone(), "spec")?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    cfg.spec = Some(spec.clone());
    let out = required(cfg.out_dir.clone(), "out_dir")?;

    let ps = generate_profiles(&spec)?;
    archive::create_dir(&out)?;
    let files = write_synth_output(&out, &spec, &ps)?;
    if let Some(gp) = &cfg.reference_path {
        let curve = sample_gp_path(gp.x_min, gp.x_max, gp.num_points, gp.variance, gp.length_scale, gp.seed)?;
        write_polyline_csv(&out.join("phys.csv"), &curve)?;
    }
    write_json(&out.join("run.json"), &serde_json::json!({ "command": "synth", "config": to_value(&cfg) }))?;
    eprintln!("wrote {} profiles to {}", files.len(), out.display());
    Ok(())
}

// ------------------------------------------------------------- snapshot

fn default_s_int() -> usize {
    4
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnapshotConfig {
    pub input_dir: Option<PathBuf>,
    pub profiles_dir: Option<PathBuf>,
    pub cycles_file: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_s_int")]
    pub s_int: usize,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_true")]
    pub standardize: bool,
    pub query_cycles: Vec<usize>,
    pub times: Vec<f64>,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        Self {
            input_dir: None,
            profiles_dir: None,
            cycles_file: None,
            out_dir: None,
            s_int: default_s_int(),
            window: default_window(),
            standardize: true,
            query_cycles: Vec::new(),
            times: Vec::new(),
        }
    }
}

fn list_csv(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_snapshot(args: SnapshotArgs) -> Result<()> {
    let mut cfg: SnapshotConfig = load_config(&args.common.config)?;
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                cfg.$field = v;
            }
        };
    }
    if args.input.is_some() {
        cfg.input_dir = args.input;
    }
    if args.profiles_dir.is_some() {
        cfg.profiles_dir = args.profiles_dir;
    }
    if args.cycles.is_some() {
        cfg.cycles_file = args.cycles;
    }
    if args.out.is_some() {
        cfg.out_dir = args.out;
    }
    set!(s_int, args.s_int);
    set!(window, args.window);
    set!(query_cycles, args.query_cycles);
    set!(times, args.times);
    if let Some(input) = &cfg.input_dir {
        cfg.profiles_dir.get_or_insert_with(|| input.join("profiles"));
        cfg.cycles_file.get_or_insert_with(|| input.join("cycles.csv"));
    }
    let measured = !cfg.query_cycles.is_empty() || !cfg.times.is_empty();
    if measured {
        cfg.standardize = false;
    }
    if !(cfg.window > 0.0) || !cfg.window.is_finite() {
        return Err(Error::Config(format!("window must be positive, got {}", cfg.window)));
    }
    let profiles_dir = required(cfg.profiles_dir.clone(), "profiles_dir")?;
    let cycles_file = required(cfg.cycles_file.clone(), "cycles_file")?;
    let out = required(cfg.out_dir.clone(), "out_dir")?;

    let files = list_csv(&profiles_dir)?;
    let ps = ingest_profiles(&files, &cycles_file)?;
    let stats = cycle_time_statistics(&ps)?;
    let plan = build_snapshot_plan(&stats, cfg.s_int)?;

    let (snapshots, transform) = if measured {
        let mut times = cfg.times.clone();
        for &c in &cfg.query_cycles {
            times.extend(plan.cycle_query_times(c)?);
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let snaps = extract_at_times(&ps, &times, cfg.window)?;
        (snaps, Standardization::identity(ps.dim()))
    } else {
        let seq = extract_snapshots(&ps, &plan, cfg.window)?;
        let seq = if cfg.standardize { standardize(&seq)?.0 } else { seq };
        let transform = seq.transform().clone();
        (seq.into_parts().0, transform)
    };

    let mut inputs: Vec<InputHash> = files.iter().map(|f| hash_file(f)).collect::<Result<_>>()?;
    inputs.push(hash_file(&cycles_file)?);
    let meta = SnapshotMeta {
        kind: SNAPSHOT_KIND.into(),
        s: snapshots.len(),
        n: ps.len(),
        d: ps.dim(),
        times: snapshots.iter().map(|s| s.time).collect(),
        standardization: transform,
        plan: Some(plan),
        cycle_stats: Some(stats),
        window: cfg.window,
        config: to_value(&cfg),
        inputs,
    };
    archive::write_snapshot_archive(&out, &snapshots, &meta)?;
    eprintln!("wrote {} snapshots of {} samples to {}", meta.s, meta.n, out.display());
    Ok(())
}

// ---------------------------------------------------------------- solve

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub snapshots: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub solver: SolverConfig,
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let mut cfg: SolveConfig = load_config(&args.common.config)?;
    if args.snapshots.is_some() {
        cfg.snapshots = args.snapshots;
    }
    if args.out.is_some() {
        cfg.out_dir = args.out;
    }
    if let Some(eps) = args.eps {
        cfg.solver.epsilon = eps;
    }
    if let Some(tol) = args.tol {
        cfg.solver.tolerance = tol;
    }
    if let Some(it) = args.max_iterations {
        cfg.solver.max_iterations = it;
    }
    cfg.solver.validate()?;
    let snap_dir = required(cfg.snapshots.clone(), "snapshots")?;
    let out = required(cfg.out_dir.clone(), "out_dir")?;
    let snap_abs = std::path::absolute(&snap_dir).map_err(|e| Error::io("resolving snapshot path", e))?;

    let (seq, _) = archive::load_sequence(&snap_dir)?;
    let inputs = hash_dir(&snap_dir)?;
    let start = Instant::now();
    let result = sinkhorn_solve(&seq, &cfg.solver);
    let wall_time = start.elapsed().as_secs_f64();

    let mut meta = SolutionMeta {
        kind: SOLUTION_KIND.into(),
        converged: false,
        snapshot_archive: snap_abs,
        solver: cfg.solver,
        cost_scale_factor: 1.0,
        iterations: 0,
        final_error: f64::INFINITY,
        seconds_per_sweep: 0.0,
        wall_time,
        objective: None,
        config: to_value(&cfg),
        inputs,
    };
    match result {
        Ok(sol) => {
            meta.converged = true;
            meta.cost_scale_factor = sol.kernel.cost_scale_factor;
            meta.iterations = sol.diagnostics.iterations();
            meta.final_error = sol.diagnostics.final_error();
            meta.seconds_per_sweep = sol.diagnostics.seconds_per_sweep();
            meta.objective = Some(objective_value(&sol)?);
            archive::write_solution_archive(&out, &sol, &meta)?;
            eprintln!(
                "converged in {} sweeps (max marginal L1 error {:e}) in {:.3} s",
                meta.iterations, meta.final_error, wall_time
            );
            Ok(())
        }
        Err(Error::NotConverged {
            iterations,
            tolerance,
            error,
            diagnostics,
        }) => {
            archive::create_dir(&out)?;
            archive::write_diagnostics_csv(&out.join("diagnostics.csv"), &diagnostics)?;
            meta.iterations = iterations;
            meta.final_error = error;
            meta.seconds_per_sweep = diagnostics.seconds_per_sweep();
            write_json(&out.join("solution.json"), &meta)?;
            Err(Error::NotConverged {
                iterations,
                tolerance,
                error,
                diagnostics,
            })
        }
        Err(e) => Err(e),
    }
}

// -------------------------------------------------------------- predict

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextQueryConfig {
    pub id: Option<String>,
    pub cyber: Option<[u32; 2]>,
    pub phys_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub solution: Option<PathBuf>,
    pub library: Option<PathBuf>,
    pub context: ContextQueryConfig,
    pub weights: MatchWeights,
    pub taus: Vec<f64>,
    pub query_cycle: Option<usize>,
    pub prune_threshold: f64,
    pub out_dir: Option<PathBuf>,
}

/// Picks the solution directory, consulting the context library if given.
fn resolve_solution(cfg: &PredictConfig) -> Result<(PathBuf, Option<String>)> {
    let Some(manifest) = &cfg.library else {
        let sol = required(cfg.solution.clone(), "solution")?;
        return Ok((sol, None));
    };
    let lib = load_library(manifest)?;
    let id = match &cfg.context.id {
        Some(id) => {
            if lib.get(id).is_none() {
                return Err(Error::Argument(format!("unknown context id {id:?}")));
            }
            id.clone()
        }
        None => {
            let cyber = required(cfg.context.cyber, "context.cyber")?;
            let phys_file = required(cfg.context.phys_file.clone(), "context.phys_file")?;
            let query = Context::new("query", cyber, read_polyline_csv(&phys_file)?)?;
            let ranked = match_context(&lib, &query, cfg.weights)?;
            eprintln!("closest context: {} (score {:.6})", ranked[0].0, ranked[0].1);
            ranked[0].0.clone()
        }
    };
    let entry = lib.get(&id).expect("id checked above");
    let sol = match (&entry.solution_dir, &cfg.solution) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => dir.clone(),
        (None, None) => {
            return Err(Error::State(format!("context {id:?} has no solved bridge (solution_dir)")));
        }
    };
    Ok((sol, Some(id)))
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let mut cfg: PredictConfig = load_config(&args.common.config)?;
    if args.solution.is_some() {
        cfg.solution = args.solution;
    }
    if args.library.is_some() {
        cfg.library = args.library;
    }
    if args.context_id.is_some() {
        cfg.context.id = args.context_id;
    }
    if let Some(c) = args.context_cyber {
        if c.len() != 2 {
            return Err(Error::Argument("--context-cyber takes two integers".into()));
        }
        cfg.context.cyber = Some([c[0], c[1]]);
    }
    if args.context_phys.is_some() {
        cfg.context.phys_file = args.context_phys;
    }
    if !args.tau.is_empty() {
        cfg.taus = args.tau;
    }
    if args.query_cycle.is_some() {
        cfg.query_cycle = args.query_cycle;
    }
    if let Some(p) = args.prune {
        cfg.prune_threshold = p;
    }
    if args.out.is_some() {
        cfg.out_dir = args.out;
    }
    let out = required(cfg.out_dir.clone(), "out_dir")?;
    let (sol_dir, context_id) = resolve_solution(&cfg)?;
    cfg.solution = Some(sol_dir.clone());
    let (sol, sol_meta) = read_solution_archive(&sol_dir)?;

    let mut taus = cfg.taus.clone();
    if let Some(cycle) = cfg.query_cycle {
        let (_, snap_meta) = read_snapshot_archive(&sol_meta.snapshot_archive)?;
        let plan = snap_meta
            .plan
            .ok_or_else(|| Error::State("snapshot archive has no snapshot plan".into()))?;
        taus.extend(plan.cycle_query_times(cycle)?);
    }
    if taus.is_empty() {
        return Err(Error::Config("no query times given (--tau or --query-cycle)".into()));
    }
    let mut inputs = hash_dir(&sol_dir)?;
    if let Some(lib) = &cfg.library {
        inputs.push(hash_file(lib)?);
    }
    let resolved = to_value(&cfg);
    archive::create_dir(&out)?;
    taus.par_iter().enumerate().try_for_each(|(k, &tau)| {
        let query = Query {
            tau,
            context: context_id.clone(),
            prune_threshold: cfg.prune_threshold,
        };
        let pred = predict_distribution(&sol, &query)?;
        let meta = PredictionMeta {
            tau,
            sigma: pred.sigma + 1,
            lambda: pred.lambda,
            prune_threshold: cfg.prune_threshold,
            particles: pred.particles.len(),
            solution: sol_dir.clone(),
            context: context_id.clone(),
            config: resolved.clone(),
            inputs: inputs.clone(),
        };
        archive::write_prediction(&out.join(format!("q{}", k + 1)), &pred, &meta)
    })?;
    eprintln!("wrote {} predictions to {}", taus.len(), out.display());
    Ok(())
}

// ------------------------------------------------------------- evaluate

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub solution: Option<PathBuf>,
    pub held_out: Option<PathBuf>,
    /// Query times; all measured times when empty.
    pub taus: Vec<f64>,
    pub out_dir: Option<PathBuf>,
    pub emit_plan: bool,
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let mut cfg: EvaluateConfig = load_config(&args.common.config)?;
    if args.solution.is_some() {
        cfg.solution = args.solution;
    }
    if args.held_out.is_some() {
        cfg.held_out = args.held_out;
    }
    if !args.tau.is_empty() {
        cfg.taus = args.tau;
    }
    if args.out.is_some() {
        cfg.out_dir = args.out;
    }
    cfg.emit_plan |= args.emit_plan;
    let sol_dir = required(cfg.solution.clone(), "solution")?;
    let held_dir = required(cfg.held_out.clone(), "held_out")?;
    let out = required(cfg.out_dir.clone(), "out_dir")?;

    let (sol, sol_meta) = read_solution_archive(&sol_dir)?;
    let measured = load_raw_snapshots(&held_dir)?;
    if measured[0].support.cols() != sol.marginals.dim() {
        return Err(Error::Argument(format!(
            "measured snapshots have dimension {} but the bridge has {}",
            measured[0].support.cols(),
            sol.marginals.dim()
        )));
    }
    let taus = if cfg.taus.is_empty() {
        measured.iter().map(|s| s.time).collect()
    } else {
        cfg.taus.clone()
    };
    let rows = evaluate_prediction_suite(&sol, &measured, &taus, cfg.emit_plan)?;

    archive::create_dir(&out)?;
    archive::write_report_csv(&out.join("report.csv"), &rows)?;
    if cfg.emit_plan {
        for (k, r) in rows.iter().enumerate() {
            if let Some(plan) = &r.plan {
                archive::write_plan_csv(&out.join(format!("plan_q{}.csv", k + 1)), plan)?;
            }
        }
    }
    let (_, snap_meta) = read_snapshot_archive(&sol_meta.snapshot_archive)?;
    let s_int = snap_meta.plan.map_or(0, |p| p.s_int);
    let table = format_table(&[(s_int, rows.iter().map(|r| r.wasserstein_distance).collect())], 1.0);
    std::fs::write(out.join("report_table.txt"), &table).map_err(|e| Error::io("writing report table", e))?;

    let mut inputs = hash_dir(&sol_dir)?;
    inputs.extend(hash_dir(&held_dir)?);
    write_json(
        &out.join("report_meta.json"),
        &serde_json::json!({ "command": "evaluate", "config": to_value(&cfg), "inputs": inputs }),
    )?;
    print!("{table}");
    Ok(())
}

// ----------------------------------------------------------------- entry

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("MMSB_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Config(format!("MMSB_THREADS must be a positive integer, got {value:?}")))?;
    // A pool may already exist when called twice in one process; keep it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Snapshot(a) => cmd_snapshot(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
