//! fcmvc: stream incomplete views into a consensus clustering from the shell.
//!
//! Subcommands mirror the experiment lifecycle: `synth` makes planted-cluster
//! view files, `corrupt` applies the incomplete-view protocol, `run` streams
//! views through the solver, `resume` integrates one more view into a saved
//! checkpoint, `eval` scores labels against truth, and `bench` drives the
//! missing-ratio / fusing-order / scaling sweeps.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 data or corruption,
//! 4 numerical failure. Errors go to stderr as one JSON object per line.
//! Seeds come only from flags; no environment variable is consulted.

mod files;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use fcmvc::checkpoint::Checkpoint;
use fcmvc::harness::{
    apply_missing, complete_views, generate_synthetic, order_sweep, ratio_sweep, results_csv,
    scale_run, EvalProtocol, FillMode, SyntheticSpec,
};
use fcmvc::labeling::{evaluate, Partition};
use fcmvc::registry::{SampleId, ViewBatch};
use fcmvc::solver::{
    final_labels, init_first_view, integrate_view, ConsensusState, SolveDiagnostics, SolverConfig,
};

#[derive(Debug)]
pub enum CliError {
    Core(fcmvc::Error),
    Io { path: PathBuf, source: std::io::Error },
    Data(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl From<fcmvc::Error> for CliError {
    fn from(e: fcmvc::Error) -> CliError {
        CliError::Core(e)
    }
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io",
            CliError::Data(_) => "data",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::Io { path, source } => format!("{}: {source}", path.display()),
            CliError::Data(msg) => msg.clone(),
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.kind() {
                "invalid-configuration" => 2,
                "numerical-failure" => 4,
                _ => 3,
            },
            CliError::Io { .. } | CliError::Data(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "fcmvc",
    version,
    about = "Streaming incomplete multi-view clustering (FCMVC-IV)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate planted-cluster synthetic view files plus truth labels.
    Synth(SynthArgs),
    /// Apply the incomplete-view protocol to complete view files.
    Corrupt(CorruptArgs),
    /// Stream view files through the solver; write labels and diagnostics.
    Run(RunArgs),
    /// Integrate one more view into a checkpointed consensus.
    Resume(ResumeArgs),
    /// Score a label file against a truth file.
    Eval(EvalArgs),
    /// Experiment sweeps: missing ratio, fusing order, scaling.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Samples.
    #[arg(long)]
    n: usize,
    /// Clusters.
    #[arg(long)]
    k: usize,
    /// Views.
    #[arg(long)]
    views: usize,
    /// Feature dimension per view, comma-separated (e.g. 16,16,16).
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,
    /// Minimum center distance in noise units.
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CorruptArgs {
    /// Missing ratio in [0, 0.5].
    #[arg(long)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Complete view files in arrival order.
    #[arg(required = true)]
    views: Vec<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fill {
    /// Use the incomplete views as they are.
    None,
    /// Zero-filling baseline: missing columns become zero vectors.
    Zero,
    /// Average-filling baseline: missing columns take the view's feature means.
    Average,
}

#[derive(Args)]
struct RunArgs {
    /// Clusters.
    #[arg(long)]
    k: usize,
    /// Relative objective-change tolerance.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// k-means restarts for the final labeling.
    #[arg(long, default_value_t = 50)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Fill::None)]
    fill: Fill,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write the final consensus here for later `resume`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// View files in arrival order.
    #[arg(required = true)]
    views: Vec<PathBuf>,
}

#[derive(Args)]
struct ResumeArgs {
    /// Checkpoint written by `run` or a previous `resume`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// The next arriving view.
    #[arg(long)]
    view: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Write the updated checkpoint here instead of replacing the input.
    #[arg(long)]
    out_checkpoint: Option<PathBuf>,
    /// Also write labels for the updated consensus.
    #[arg(long)]
    labels_out: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted labels (id,label).
    #[arg(long)]
    labels: PathBuf,
    /// Ground-truth labels (id,label).
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchMode {
    /// Missing-ratio sweep: fresh patterns per (ratio, rep).
    Ratio,
    /// Fusing-order sweep: random distinct view orders at one ratio.
    Order,
    /// Per-iteration wall time across sample counts.
    Scale,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    mode: BenchMode,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Samples (ratio/order modes).
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Clusters.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Views (ratio/order modes).
    #[arg(long, default_value_t = 4)]
    views: usize,
    /// Per-view dims, comma-separated; default 16 per view.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// k-means restarts per metric evaluation.
    #[arg(long, default_value_t = 50)]
    restarts: usize,
    /// Missing ratios to sweep (ratio mode).
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5")]
    ratios: Vec<f64>,
    /// Repetitions per ratio (ratio mode).
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Random orders to test (order mode).
    #[arg(long, default_value_t = 10)]
    perms: usize,
    /// Missing ratio (order mode).
    #[arg(long, default_value_t = 0.3)]
    ratio: f64,
    /// Sample counts to time (scale mode).
    #[arg(long, value_delimiter = ',', default_value = "2000,4000,8000")]
    sizes: Vec<usize>,
    /// Feature dimension (scale mode).
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Pinned solver iterations per timing (scale mode).
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// Timing repeats per size, median reported (scale mode).
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Corrupt(args) => cmd_corrupt(args),
        Command::Run(args) => cmd_run(args),
        Command::Resume(args) => cmd_resume(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
    };
    if let Err(e) = result {
        eprintln!("{}", json!({ "error": e.kind(), "message": e.message() }));
        std::process::exit(e.exit_code());
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })
}

fn view_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("view_{t}.csv"))
}

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    let spec = SyntheticSpec {
        n: args.n,
        k: args.k,
        views: args.views,
        dims: args.dims,
        separation: args.separation,
        seed: args.seed,
    };
    let data = generate_synthetic(&spec)?;
    ensure_dir(&args.out_dir)?;
    let mut view_files = Vec::new();
    for view in &data.views {
        let path = view_path(&args.out_dir, view.view_index);
        files::write_view(&path, view)?;
        view_files.push(path);
    }
    let labels_path = args.out_dir.join("labels.csv");
    files::write_labels(&labels_path, &data.ids, data.truth.labels())?;
    println!("{}", json!({ "views": view_files, "labels": labels_path }));
    Ok(())
}

fn cmd_corrupt(args: CorruptArgs) -> CliResult<()> {
    let mut views = Vec::new();
    for (i, path) in args.views.iter().enumerate() {
        views.push(files::read_view(path, i + 1)?);
    }
    let (corrupted, pattern) = apply_missing(&views, args.ratio, args.seed)?;
    ensure_dir(&args.out_dir)?;
    let mut view_files = Vec::new();
    for view in &corrupted {
        let path = view_path(&args.out_dir, view.view_index);
        files::write_view(&path, view)?;
        view_files.push(path);
    }
    let pattern_path = args.out_dir.join("pattern.json");
    files::write_json(&pattern_path, &pattern)?;
    println!("{}", json!({ "views": view_files, "pattern": pattern_path }));
    Ok(())
}

#[derive(Serialize)]
struct ViewRecord {
    view_index: usize,
    n_view: usize,
    n_total: usize,
    #[serde(flatten)]
    diagnostics: SolveDiagnostics,
}

fn record_of(state: &ConsensusState, batch: &ViewBatch) -> ViewRecord {
    ViewRecord {
        view_index: batch.view_index,
        n_view: batch.len(),
        n_total: state.registry().len(),
        diagnostics: state.last_diagnostics().clone(),
    }
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let mut views = Vec::new();
    for (i, path) in args.views.iter().enumerate() {
        views.push(files::read_view(path, i + 1)?);
    }
    match args.fill {
        Fill::None => {}
        Fill::Zero => views = complete_views(&views, FillMode::Zero)?,
        Fill::Average => views = complete_views(&views, FillMode::Average)?,
    }
    let cfg = SolverConfig {
        epsilon: args.epsilon,
        max_iters: args.max_iters,
        seed: args.seed,
        ..SolverConfig::default()
    };
    ensure_dir(&args.out_dir)?;
    let diagnostics_path = args.out_dir.join("diagnostics.json");

    // Drive the stream view by view so diagnostics reach disk even when a
    // later view fails.
    let mut records: Vec<ViewRecord> = Vec::new();
    let streamed = (|| -> fcmvc::Result<ConsensusState> {
        let mut state = init_first_view(&views[0], args.k, &cfg)?;
        records.push(record_of(&state, &views[0]));
        for batch in &views[1..] {
            state = integrate_view(&state, batch, &cfg)?;
            records.push(record_of(&state, batch));
        }
        Ok(state)
    })();

    let config_json = json!({
        "k": args.k,
        "epsilon": args.epsilon,
        "max_iters": args.max_iters,
        "restarts": args.restarts,
        "seed": args.seed,
        "fill": match args.fill { Fill::None => "none", Fill::Zero => "zero", Fill::Average => "average" },
    });
    let state = match streamed {
        Ok(state) => state,
        Err(e) => {
            files::write_json(
                &diagnostics_path,
                &json!({
                    "config": config_json,
                    "views": records,
                    "error": { "error": e.kind(), "message": e.to_string() },
                }),
            )?;
            return Err(e.into());
        }
    };

    let partition = final_labels(&state, args.restarts, args.seed)?;
    let labels_path = args.out_dir.join("labels.csv");
    files::write_labels(&labels_path, state.registry().ids(), partition.labels())?;
    files::write_json(
        &diagnostics_path,
        &json!({ "config": config_json, "views": records }),
    )?;
    if let Some(cp_path) = &args.checkpoint {
        files::save_checkpoint(cp_path, &Checkpoint::from_state(&state))?;
    }
    println!(
        "{}",
        json!({
            "n_samples": state.registry().len(),
            "views_seen": state.views_seen(),
            "labels": labels_path,
            "diagnostics": diagnostics_path,
            "checkpoint": args.checkpoint,
        })
    );
    Ok(())
}

fn cmd_resume(args: ResumeArgs) -> CliResult<()> {
    let state = files::load_checkpoint(&args.checkpoint)?.into_state()?;
    let batch = files::read_view(&args.view, state.views_seen() + 1)?;
    let cfg = SolverConfig {
        epsilon: args.epsilon,
        max_iters: args.max_iters,
        seed: args.seed,
        ..SolverConfig::default()
    };
    let next = integrate_view(&state, &batch, &cfg)?;
    let out_path = args.out_checkpoint.as_ref().unwrap_or(&args.checkpoint);
    files::save_checkpoint(out_path, &Checkpoint::from_state(&next))?;
    let labels_path = match &args.labels_out {
        Some(path) => {
            let partition = final_labels(&next, args.restarts, args.seed)?;
            files::write_labels(path, next.registry().ids(), partition.labels())?;
            Some(path.clone())
        }
        None => None,
    };
    let diag = next.last_diagnostics();
    println!(
        "{}",
        json!({
            "views_seen": next.views_seen(),
            "n_samples": next.registry().len(),
            "iters": diag.iters,
            "converged": diag.converged,
            "objective": diag.objective_trace.last(),
            "checkpoint": out_path,
            "labels": labels_path,
        })
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let truth_rows = files::read_labels(&args.truth)?;
    let pred_rows = files::read_labels(&args.labels)?;
    let truth_ids: std::collections::HashSet<&SampleId> =
        truth_rows.iter().map(|(id, _)| id).collect();
    let pred_of: std::collections::HashMap<&SampleId, usize> =
        pred_rows.iter().map(|(id, l)| (id, *l)).collect();

    let mut missing: Vec<String> = truth_rows
        .iter()
        .filter(|(id, _)| !pred_of.contains_key(id))
        .map(|(id, _)| id.to_string())
        .collect();
    let mut extra: Vec<String> = pred_rows
        .iter()
        .filter(|(id, _)| !truth_ids.contains(id))
        .map(|(id, _)| id.to_string())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        missing.truncate(20);
        extra.truncate(20);
        return Err(CliError::Data(format!(
            "label files disagree on sample ids; missing from labels: [{}], absent from truth: [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }

    let t_labels: Vec<usize> = truth_rows.iter().map(|(_, l)| *l).collect();
    let p_labels: Vec<usize> = truth_rows
        .iter()
        .map(|(id, _)| pred_of[id])
        .collect();
    let t_k = t_labels.iter().max().copied().unwrap_or(0) + 1;
    let p_k = p_labels.iter().max().copied().unwrap_or(0) + 1;
    let truth = Partition::new(t_labels, t_k)?;
    let pred = Partition::new(p_labels, p_k)?;
    let report = evaluate(&truth, &pred)?;
    match args.format {
        Format::Json => println!(
            "{}",
            serde_json::to_string(&report)
                .map_err(|e| CliError::Data(format!("JSON serialization: {e}")))?
        ),
        Format::Csv => {
            println!("acc,nmi,purity,fscore");
            println!("{},{},{},{}", report.acc, report.nmi, report.purity, report.fscore);
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CliResult<()> {
    ensure_dir(&args.out_dir)?;
    let results_path = args.out_dir.join("results.csv");
    let summary_path = args.out_dir.join("summary.json");
    let cfg = SolverConfig {
        epsilon: args.epsilon,
        max_iters: args.max_iters,
        seed: args.seed,
        ..SolverConfig::default()
    };
    let proto = EvalProtocol { restarts: args.restarts, seed: args.seed };
    let spec = SyntheticSpec {
        n: args.n,
        k: args.k,
        views: args.views,
        dims: args.dims.clone().unwrap_or_else(|| vec![16; args.views]),
        separation: args.separation,
        seed: args.seed,
    };

    match args.mode {
        BenchMode::Ratio => {
            let sweep = ratio_sweep(&spec, &args.ratios, args.reps, &cfg, &proto)?;
            files::write_text(&results_path, &results_csv(&sweep.results))?;
            files::write_json(
                &summary_path,
                &json!({ "mode": "ratio", "aggregates": sweep.aggregates }),
            )?;
        }
        BenchMode::Order => {
            let sweep = order_sweep(&spec, args.ratio, args.perms, &cfg, &proto)?;
            files::write_text(&results_path, &results_csv(&sweep.results))?;
            files::write_json(
                &summary_path,
                &json!({ "mode": "order", "ratio": args.ratio, "aggregate": sweep.aggregate }),
            )?;
        }
        BenchMode::Scale => {
            let run = scale_run(&args.sizes, args.k, args.dim, args.iters, args.repeats, args.seed)?;
            let mut csv = String::from("n,iters,seconds_total,seconds_per_iter\n");
            for p in &run.points {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    p.n, p.iters, p.seconds_total, p.seconds_per_iter
                ));
            }
            files::write_text(&results_path, &csv)?;
            let slope = loglog_slope(&run.points);
            files::write_json(
                &summary_path,
                &json!({
                    "mode": "scale",
                    "points": run.points,
                    "ratios": run.ratios,
                    "fitted_slope": slope,
                }),
            )?;
        }
    }
    println!("{}", json!({ "results": results_path, "summary": summary_path }));
    Ok(())
}

/// Least-squares slope of ln(seconds_per_iter) against ln(n): 1.0 means
/// perfectly linear scaling.
fn loglog_slope(points: &[fcmvc::harness::ScalePoint]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds_per_iter.ln()).collect();
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let ym = ys.iter().sum::<f64>() / ys.len() as f64;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    (den > 0.0).then(|| num / den)
}
