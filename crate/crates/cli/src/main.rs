//! `sge`: elastic matching and geodesic distances between weighted shape
//! graphs, from the command line.
//!
//! Subcommands: `match` (solve a registration problem), `render` (draw
//! geodesic frames as SVG), `validate` (check a shape-graph file), and
//! `resample` (uniform polygonal resampling). Every flag can also be set
//! through an `SGE_`-prefixed environment variable.

mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sge_core::formats::{CheckpointFile, ConfigFile, ResultFile, ShapeGraphFile};
use sge_core::graph;
use sge_core::pipeline::geodesic_frames;
use sge_core::{fixed_weight_match, match_graphs};

#[derive(Parser)]
#[command(
    name = "sge",
    version,
    about = "Elastic matching and geodesic distances between weighted shape graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a source shape graph onto a target, estimating a deformation
    /// path and a weight change.
    Match(MatchArgs),
    /// Render geodesic frames of a finished match as SVG files.
    Render(RenderArgs),
    /// Validate a shape-graph file and report every violated condition.
    Validate(ValidateArgs),
    /// Resample a shape-graph file to a uniform number of edges per component.
    Resample(ResampleArgs),
}

#[derive(Args)]
struct MatchArgs {
    /// Source shape-graph JSON file (carries the weights to estimate).
    #[arg(long, env = "SGE_SOURCE")]
    source: PathBuf,
    /// Target shape-graph JSON file.
    #[arg(long, env = "SGE_TARGET")]
    target: PathBuf,
    /// Solver configuration JSON; defaults apply when omitted.
    #[arg(long, env = "SGE_CONFIG")]
    config: Option<PathBuf>,
    /// Output result JSON.
    #[arg(long, env = "SGE_OUT")]
    out: PathBuf,
    /// Freeze the weights at their source values (baseline model).
    #[arg(long, env = "SGE_FIXED_WEIGHTS")]
    fixed_weights: bool,
    /// Estimate weights on the target instead (swaps the roles).
    #[arg(long, env = "SGE_WEIGHTS_ON_TARGET")]
    weights_on_target: bool,
    /// Optional per-stage checkpoint JSON.
    #[arg(long, env = "SGE_CHECKPOINTS")]
    checkpoints: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Result JSON produced by `sge match`.
    #[arg(long, env = "SGE_RESULT")]
    result: PathBuf,
    /// Comma-separated times in [0, 1].
    #[arg(long, env = "SGE_TIMES", default_value = "0,0.25,0.5,0.75,1")]
    times: String,
    /// Output directory (one SVG per time).
    #[arg(long, env = "SGE_OUT")]
    out: PathBuf,
    /// Orthographic projection plane for 3D inputs.
    #[arg(long, env = "SGE_PLANE", value_enum, default_value_t = Plane::Xy)]
    plane: Plane,
}

#[derive(Args)]
struct ValidateArgs {
    /// Shape-graph JSON file.
    #[arg(long, env = "SGE_INPUT")]
    input: PathBuf,
    /// Gluing tolerance; defaults to 1e-6 of the graph diameter.
    #[arg(long, env = "SGE_JUNCTION_TOLERANCE")]
    junction_tolerance: Option<f64>,
}

#[derive(Args)]
struct ResampleArgs {
    /// Shape-graph JSON file.
    #[arg(long, env = "SGE_INPUT")]
    input: PathBuf,
    /// Edges per component after resampling.
    #[arg(long, env = "SGE_COUNT")]
    count: usize,
    /// Output shape-graph JSON.
    #[arg(long, env = "SGE_OUT")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Plane {
    Xy,
    Xz,
    Yz,
}

/// A failure with a machine-readable category and the exit code it maps to.
struct Failure {
    category: &'static str,
    message: String,
    code: u8,
}

impl Failure {
    fn input(category: &'static str, message: String) -> Self {
        Failure {
            category,
            message,
            code: 2,
        }
    }

    fn solver(message: String) -> Self {
        Failure {
            category: "solver",
            message,
            code: 3,
        }
    }
}

fn categorize(e: sge_core::Error) -> Failure {
    use sge_core::Error::*;
    match &e {
        Io { .. } => Failure::input("io", e.to_string()),
        Json(_) => Failure::input("parse", e.to_string()),
        InvalidShapeGraph { .. }
        | InvalidConfig(_)
        | TooFewVertices { .. }
        | DegeneratePolyline { .. }
        | ParameterOutOfRange { .. }
        | ShapeMismatch { .. }
        | DerivativeOrderTooHigh { .. }
        | ZeroLengthEdge { .. } => Failure::input("validation", e.to_string()),
        ImmersionViolation { .. } | NonFiniteEnergy { .. } | EmptyGraph(_) => {
            Failure::solver(e.to_string())
        }
    }
}

fn load_shape(path: &Path) -> Result<sge_core::ShapeGraphSpec, Failure> {
    let file = ShapeGraphFile::load(path).map_err(categorize)?;
    file.to_spec().map_err(categorize)
}

fn run_match(args: &MatchArgs) -> Result<(), Failure> {
    let source = load_shape(&args.source)?;
    let target = load_shape(&args.target)?;
    let config = match &args.config {
        Some(path) => ConfigFile::load(path).map_err(categorize)?,
        None => ConfigFile::default(),
    };
    let mut problem = config.to_problem(source, target);
    if args.weights_on_target {
        problem = problem.swapped();
    }
    problem.validate().map_err(categorize)?;

    let result = if args.fixed_weights {
        fixed_weight_match(&problem)
    } else {
        match_graphs(&problem)
    }
    .map_err(|e| Failure::solver(e.to_string()))?;

    // The result stores the target in the same normalized frame as the path.
    let scale = result.normalization_scale;
    let target_normalized = problem.target.scaled(scale);
    let file = ResultFile::new(&result, &config, &target_normalized);
    file.save(&args.out).map_err(categorize)?;
    if let Some(ck) = &args.checkpoints {
        CheckpointFile::from_result(&result)
            .save(ck)
            .map_err(categorize)?;
    }

    println!("distance: {:.6e}", result.distance);
    println!("path energy: {:.6e}", result.breakdown.path_energy);
    println!("varifold term: {:.6e}", result.breakdown.varifold);
    println!("tv term: {:.6e}", result.breakdown.huber);
    println!("binary penalty term: {:.6e}", result.breakdown.zero_one);
    println!("normalization scale: {:.6e}", scale);
    println!("result written to {}", args.out.display());

    if let Some((stage, message)) = &result.failed_stage {
        return Err(Failure::solver(format!(
            "continuation stage {stage} failed ({message}); partial result written to {}",
            args.out.display()
        )));
    }
    Ok(())
}

fn run_render(args: &RenderArgs) -> Result<(), Failure> {
    let result = ResultFile::load(&args.result).map_err(categorize)?;
    let times: Vec<f64> = args
        .times
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Failure::input("parse", format!("bad time '{t}': {e}")))
        })
        .collect::<Result<_, _>>()?;
    if times.is_empty() {
        return Err(Failure::input("validation", "no times given".into()));
    }
    let path = result.path.to_path().map_err(categorize)?;
    let frames = geodesic_frames(
        &path,
        &result.rho0,
        &result.delta_rho,
        &result.resample_counts,
        &times,
    )
    .map_err(categorize)?;
    let target = result.target.to_spec().map_err(categorize)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Failure::input("io", e.to_string()))?;
    let written = render::render_frames(&frames, &times, &target, args.plane, &args.out)
        .map_err(|e| Failure::input("io", e.to_string()))?;
    for p in &written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let spec = load_shape(&args.input)?;
    let tolerance = args
        .junction_tolerance
        .unwrap_or_else(|| spec.default_junction_tolerance());
    let report = graph::validate(&spec, tolerance);
    if report.is_valid() {
        println!("valid ({} components)", spec.components.len());
        Ok(())
    } else {
        println!("{report}");
        Err(Failure::input(
            "validation",
            format!(
                "{} violated condition(s) in {}",
                report.violations.len(),
                args.input.display()
            ),
        ))
    }
}

fn run_resample(args: &ResampleArgs) -> Result<(), Failure> {
    let spec = load_shape(&args.input)?;
    if args.count == 0 {
        return Err(Failure::input(
            "validation",
            "resample count must be at least 1".into(),
        ));
    }
    let counts = vec![args.count; spec.components.len()];
    let poly = graph::resample(&spec, &counts).map_err(categorize)?;
    let file = sge_core::formats::polygonal_to_file(&poly);
    file.save(&args.out).map_err(categorize)?;
    println!(
        "resampled {} component(s) to {} edges each -> {}",
        spec.components.len(),
        args.count,
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Match(args) => run_match(args),
        Command::Render(args) => run_render(args),
        Command::Validate(args) => run_validate(args),
        Command::Resample(args) => run_resample(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": f.category, "message": f.message })
            );
            ExitCode::from(f.code)
        }
    }
}
