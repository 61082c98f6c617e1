//! `bellow`: design bellow soft pneumatic actuators from the command line.
//!
//! Exit status is 0 on success, 1 on any error and 2 when shape matching
//! finishes without a feasible design.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use bellow_core::actuator::{ActuatorSpec, ActuatorSpecData, Material};
use bellow_core::cad::{self, MeshOptions};
use bellow_core::io::points_csv;
use bellow_core::optimizer::{Budget, MatchProblem, MatchResult, ThicknessBound};
use bellow_core::oracle::DatasetGrid;
use bellow_core::pipeline::{self, to_json, EngineError, MeshRequest, SegmentRequest, SimulateRequest, DEFAULT_SAMPLES_PER_MODULE};
use bellow_core::surrogate::TrainConfig;

const EXIT_ERROR: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser)]
#[command(name = "bellow", version, about = "Bellow soft pneumatic actuator design engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Training data from the analytic deflection model.
    Dataset {
        #[command(subcommand)]
        action: DatasetCmd,
    },
    /// Fit a surrogate network to a dataset CSV.
    Train(TrainArgs),
    /// Split a 3D curve into constant-curvature segments.
    Segment(SegmentArgs),
    /// Search actuator parameters that reproduce a segmented shape.
    Match(MatchArgs),
    /// Turn a match result into an actuator spec.
    Assemble(AssembleArgs),
    /// Mesh an actuator spec to STL.
    Stl(StlArgs),
    /// Forward kinematics: the deformed centerline of an actuator.
    Fk(FkArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Generate the sampling grid as CSV.
    Gen {
        /// Material JSON file; Agilus30 when omitted.
        #[arg(long)]
        material: Option<PathBuf>,
        /// Grid JSON file; the standard grid when omitted.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    /// Points as CSV (x,y,z) or JSON.
    #[arg(long)]
    shape: PathBuf,
    /// Maximum deviation, mm.
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundArg {
    InnerRadius,
    AverageRadius,
}

#[derive(Args)]
struct MatchArgs {
    /// Output of `segment`, or a bare JSON list of segments.
    #[arg(long)]
    segments: PathBuf,
    /// `oracle` or a surrogate model file.
    #[arg(long, default_value = "oracle")]
    model: String,
    #[arg(long)]
    pmax: f64,
    #[arg(long)]
    kappa_max: Option<f64>,
    #[arg(long)]
    rout_min: Option<f64>,
    #[arg(long)]
    rout_max: Option<f64>,
    /// Inner radius search range as `MIN,MAX`.
    #[arg(long, value_parser = parse_pair)]
    r_in_range: Option<(f64, f64)>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `desk`, `full`, or `UPPER/LOWER` iteration counts.
    #[arg(long, default_value = "full", value_parser = parse_budget)]
    budget: Budget,
    #[arg(long, value_enum, default_value = "inner-radius")]
    thickness_bound: BoundArg,
    /// Material JSON file; Agilus30 when omitted.
    #[arg(long)]
    material: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report upper-level progress on stderr.
    #[arg(long)]
    progress: bool,
}

#[derive(Args)]
struct AssembleArgs {
    /// Output of `match`.
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StlArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    ascii: bool,
    /// Angular resolution of the revolve, degrees.
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Args)]
struct FkArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the spec's pressure, kPa.
    #[arg(long)]
    pressure: Option<f64>,
    #[arg(long, default_value = "oracle")]
    model: String,
    #[arg(long, default_value_t = DEFAULT_SAMPLES_PER_MODULE)]
    samples: usize,
    /// Print the full simulation as JSON instead of centerline CSV.
    #[arg(long)]
    json: bool,
    /// Place the centerline in the frame of this segmentation.
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Defaults to BELLOW_PORT, then 8080.
    #[arg(long)]
    port: Option<u16>,
    /// Defaults to BELLOW_STORE, then ./bellow-store.
    #[arg(long)]
    store: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected MIN,MAX")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn parse_budget(s: &str) -> Result<Budget, String> {
    match s {
        "desk" => Ok(Budget::desk()),
        "full" => Ok(Budget::default()),
        _ => {
            let (u, l) = s.split_once('/').ok_or("expected desk, full or UPPER/LOWER")?;
            let upper_iters = u.parse().map_err(|e| format!("{e}"))?;
            let lower_iters = l.parse().map_err(|e| format!("{e}"))?;
            Ok(Budget { upper_iters, lower_iters })
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_material(path: Option<&Path>) -> Result<Material> {
    match path {
        Some(p) => Ok(serde_json::from_str(&read_text(p)?).map_err(EngineError::from)?),
        None => Ok(Material::default()),
    }
}

fn read_spec(path: &Path) -> Result<ActuatorSpecData> {
    Ok(serde_json::from_str(&read_text(path)?).map_err(EngineError::from)?)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().write_all(bytes)?),
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Dataset { action: DatasetCmd::Gen { material, grid, out } } => {
            let material = read_material(material.as_deref())?;
            let grid: DatasetGrid = match grid {
                Some(p) => serde_json::from_str(&read_text(&p)?).map_err(EngineError::from)?,
                None => DatasetGrid::default(),
            };
            let (bytes, rows) = pipeline::dataset_csv(&material, &grid)?;
            emit(Some(&out), &bytes)?;
            eprintln!("wrote {rows} rows to {}", out.display());
        }
        Command::Train(a) => {
            let csv = fs::read(&a.dataset).with_context(|| format!("reading {}", a.dataset.display()))?;
            let cfg = TrainConfig { split_ratio: a.split, epochs: a.epochs, seed: a.seed, lambda: a.lambda, ..Default::default() };
            let (model, report) = pipeline::train_csv(&csv, &cfg, &mut |_, _| {})?;
            model.save(&a.out).map_err(EngineError::from)?;
            print!("{}", to_json(&report));
        }
        Command::Segment(a) => {
            let points = pipeline::parse_points(&read_text(&a.shape)?)?;
            let seg = pipeline::run_segment(&SegmentRequest { points, tolerance: a.tol })?;
            emit(a.out.as_deref(), to_json(&seg).as_bytes())?;
        }
        Command::Match(a) => {
            let (segments, _) = pipeline::parse_segments(&read_text(&a.segments)?)?;
            let model = pipeline::load_model(&a.model)?;
            let mut p = MatchProblem::new(segments, a.pmax);
            p.kappa_max = a.kappa_max;
            p.rout_min = a.rout_min;
            p.rout_max = a.rout_max;
            p.r_in_range = a.r_in_range;
            p.seed = a.seed;
            p.budget = a.budget;
            p.thickness_bound = match a.thickness_bound {
                BoundArg::InnerRadius => ThicknessBound::InnerRadius,
                BoundArg::AverageRadius => ThicknessBound::AverageRadius,
            };
            p.material = read_material(a.material.as_deref())?;
            let show = a.progress;
            let result = pipeline::run_match(&p, &model, &mut |pr| {
                if show && (pr.iteration % 10 == 0 || pr.iteration == pr.budget) {
                    eprintln!("iteration {}/{}: best mean cost {:e}", pr.iteration, pr.budget, pr.best_mean_cost);
                }
            })?;
            emit(a.out.as_deref(), to_json(&result).as_bytes())?;
            if !result.feasible {
                eprintln!("no feasible design: {}", result.message.as_deref().unwrap_or("infeasible"));
                return Ok(EXIT_INFEASIBLE);
            }
        }
        Command::Assemble(a) => {
            let result: MatchResult = serde_json::from_str(&read_text(&a.result)?).map_err(EngineError::from)?;
            let spec = pipeline::assemble(&result)?;
            emit(a.out.as_deref(), to_json(&spec).as_bytes())?;
        }
        Command::Stl(a) => {
            let data = read_spec(&a.spec)?;
            if a.ascii {
                let opts = MeshOptions { angular_step_deg: a.step.unwrap_or(cad::DEFAULT_ANGULAR_STEP_DEG) };
                let spec = ActuatorSpec::try_from(data).map_err(EngineError::from)?;
                let mesh = cad::mesh_actuator(&spec, &opts).map_err(EngineError::from)?;
                let mut buf = Vec::new();
                cad::write_ascii_stl(&mesh, &mut buf).map_err(EngineError::from)?;
                emit(Some(&a.out), &buf)?;
            } else {
                let bytes = pipeline::mesh_stl(&MeshRequest { spec: data, angular_step_deg: a.step })?;
                emit(Some(&a.out), &bytes)?;
            }
        }
        Command::Fk(a) => {
            let model = pipeline::load_model(&a.model)?;
            let req = SimulateRequest { spec: read_spec(&a.spec)?, pressure_kpa: a.pressure, samples_per_module: a.samples };
            let mut sim = pipeline::simulate(&req, &model)?;
            if let Some(b) = &a.base {
                let (_, base) = pipeline::parse_segments(&read_text(b)?)?;
                let Some(base) = base else { bail!("{} has no base frame", b.display()) };
                sim.centerline = pipeline::place_centerline(&sim, &base);
                sim.tip = *sim.centerline.last().expect("centerline is never empty");
            }
            if !sim.extrapolated.is_empty() {
                eprintln!("warning: modules {:?} are outside the model's training range", sim.extrapolated);
            }
            let text = if a.json { to_json(&sim) } else { points_csv(&sim.centerline) };
            emit(a.out.as_deref(), text.as_bytes())?;
        }
        Command::Serve(a) => {
            let mut cfg = bellow_service::ServiceConfig::from_env();
            if let Some(s) = a.store {
                cfg.store_dir = s;
            }
            let port = a.port.unwrap_or_else(bellow_service::port_from_env);
            tokio::runtime::Runtime::new()?.block_on(bellow_service::serve(cfg, port))?;
        }
    }
    Ok(0)
}

fn report(e: &anyhow::Error) {
    match e.downcast_ref::<EngineError>() {
        Some(ee) => {
            eprintln!("error[{}]: {ee}", ee.code());
            for v in ee.violations() {
                eprintln!("  {}: {} ({})", v.code, v.rule, v.detail);
            }
        }
        None => eprintln!("error: {e:#}"),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    // usage errors exit 1 so that 2 stays reserved for infeasible matches
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            report(&e);
            ExitCode::from(EXIT_ERROR)
        }
    }
}
