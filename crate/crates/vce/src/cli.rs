//! Command-line interface.
//!
//! Exit status is 0 on success, 1 on usage errors and 2 on data errors.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vce_core::eval::{behavior_stats, coverage_from_log, match_maps, sampling_curve};
use vce_core::sim::{run_experiment, Schedule};
use vce_core::world::generate_synthetic_world;
use vce_core::{consolidate, AggregationParams, Strategy, World, WorldParams};

use crate::bundle::{self, Bundle};
use crate::config::{load_world_params, RunConfig};
use crate::error::{Result, VceError};
use crate::export::{self, write_table};
use crate::store::{Store, SystemClock};
use crate::{geojson, logio, plot, service};

pub const DEFAULT_DATA_DIR: &str = "vce-data";

#[derive(Debug, Parser)]
#[command(name = "vce", version, about = "Virtual City Explorer engine and simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world.
    GenWorld(GenWorldArgs),
    /// Run a simulated experiment and write a result bundle.
    RunSim(RunSimArgs),
    /// Cluster detections into confirmed PoIs.
    Aggregate(AggregateArgs),
    /// Compare two PoI maps.
    Compare(CompareArgs),
    /// Confirmed PoIs against number of executions.
    SampleCurve(SampleCurveArgs),
    /// Node visit counts and coverage percentage.
    Coverage(CoverageArgs),
    /// Per-session time, distance, steps, errors and escapes.
    Behavior(BehaviorArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write plot-ready CSV tables for a result bundle.
    PlotData(PlotDataArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Geojson,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Basic,
    Taboo,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Basic => Strategy::Basic,
            StrategyArg::Taboo => Strategy::Taboo,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenWorldArgs {
    /// World parameters, bare or under a `[world]` table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "geojson")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct RunSimArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the experiment seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// `seq` or `interleaved:K`.
    #[arg(long)]
    pub schedule: Option<Schedule>,
    /// World GeoJSON to use instead of a generated world.
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Result bundle directory or detections GeoJSON.
    #[arg(long)]
    pub input: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "geojson")]
    pub format: Format,
    /// Run configuration supplying aggregation parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub min_pts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub threshold: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleCurveArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Defaults to the experiment seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    /// Result bundle directory or action log.
    #[arg(long)]
    pub input: PathBuf,
    /// World GeoJSON, needed when the input is a log file.
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BehaviorArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long, env = "VCE_DATA_DIR", default_value = DEFAULT_DATA_DIR)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotDataArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses `args` and runs the command, returning the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenWorld(a) => gen_world(a),
        Command::RunSim(a) => run_sim(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Compare(a) => compare(a),
        Command::SampleCurve(a) => sample_curve(a),
        Command::Coverage(a) => coverage(a),
        Command::Behavior(a) => behavior(a),
        Command::Serve(a) => serve(a),
        Command::PlotData(a) => plot_data(a),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(VceError::io(parent))?;
            }
            Ok(Box::new(export::create(p)?))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn write_json_to(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(VceError::io(dir))
}

fn gen_world(a: GenWorldArgs) -> Result<()> {
    let mut params = match &a.config {
        Some(path) => load_world_params(path)?,
        None => WorldParams::default(),
    };
    if let Some(seed) = a.seed {
        params.seed = seed;
    }
    let world = generate_synthetic_world(&params)?;
    mkdir(&a.out)?;
    match a.format {
        Format::Geojson => {
            geojson::write_json(&a.out.join("world.geojson"), &geojson::world_to_geojson(&world))?;
            geojson::write_json(&a.out.join("truth.geojson"), &geojson::truth_to_geojson(&world))?;
        }
        Format::Csv => write_world_csv(&a.out, &world)?,
    }
    eprintln!(
        "{} nodes, {} edges, {} PoIs, explorable distance {:.0} m",
        world.graph().len(),
        world.graph().edges().len(),
        world.pois().len(),
        vce_core::world::explorable_distance(world.graph())
    );
    Ok(())
}

fn write_world_csv(dir: &Path, world: &World) -> Result<()> {
    write_table(
        export::create(&dir.join("nodes.csv"))?,
        &["node_id", "lat", "lon", "in_area", "indoor"],
        world.graph().nodes().iter().map(|n| {
            vec![
                n.id.0.to_string(),
                n.position.lat().to_string(),
                n.position.lon().to_string(),
                world.is_in_area(n.id).to_string(),
                n.indoor.to_string(),
            ]
        }),
    )?;
    write_table(
        export::create(&dir.join("edges.csv"))?,
        &["a", "b", "length_m"],
        world.graph().edges().iter().map(|e| vec![e.a.0.to_string(), e.b.0.to_string(), e.length_m.to_string()]),
    )?;
    write_table(
        export::create(&dir.join("pois.csv"))?,
        &["poi_id", "lat", "lon"],
        world
            .pois()
            .iter()
            .map(|p| vec![p.id.0.to_string(), p.position.lat().to_string(), p.position.lon().to_string()]),
    )
}

fn run_sim(a: RunSimArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.experiment.seed = seed;
    }
    if let Some(strategy) = a.strategy {
        config.experiment.task.strategy = strategy.into();
    }
    if let Some(schedule) = a.schedule {
        config.experiment.schedule = schedule;
    }
    if let Some(world) = a.world {
        config.world_file = Some(world);
    }
    let world = config.build_world()?;
    let result = run_experiment(Arc::clone(&world), &config.experiment)?;
    bundle::write_bundle(&a.out, &config, &world, &result)?;
    eprintln!(
        "{} sessions finished ({} started), {} detections, {} confirmed PoIs",
        result.meta.finished,
        result.meta.sessions_started,
        result.log.iter().filter(|e| e.kind() == vce_core::ActionKind::SubmitOk).count(),
        result.map.len()
    );
    if result.meta.exhausted {
        eprintln!("warning: session budget exhausted before all executions finished");
    }
    Ok(())
}

fn aggregate(a: AggregateArgs) -> Result<()> {
    let (detections, mut params) = if a.input.is_dir() {
        let b = Bundle::load(&a.input)?;
        let params = b.config.experiment.aggregation;
        (b.detections, params)
    } else {
        let dets = geojson::detections_from_geojson(&geojson::read_json(&a.input)?)
            .map_err(|e| VceError::parse(&a.input, e))?;
        (dets, AggregationParams::default())
    };
    if let Some(path) = &a.config {
        params = RunConfig::load(path)?.experiment.aggregation;
    }
    if let Some(eps) = a.eps {
        params.eps_m = eps;
    }
    if let Some(min_pts) = a.min_pts {
        params.min_pts = min_pts;
    }
    params.validate()?;
    let map = consolidate(&detections, &params);
    match a.format {
        Format::Geojson => write_json_to(a.out.as_deref(), &geojson::clusters_to_geojson(&map)),
        Format::Csv => export::map(output(a.out.as_deref())?, &map),
    }
}

fn compare(a: CompareArgs) -> Result<()> {
    if !(a.threshold >= 0.0 && a.threshold.is_finite()) {
        return Err(VceError::Invalid("threshold must be a non-negative number".into()));
    }
    let map_a = geojson::read_poi_map(&a.a)?;
    let map_b = geojson::read_poi_map(&a.b)?;
    let cmp = match_maps(&map_a, &map_b, a.threshold);
    export::comparison(output(a.out.as_deref())?, &[cmp.row(&map_a, &map_b)])
}

fn sample_curve(a: SampleCurveArgs) -> Result<()> {
    let b = Bundle::load(&a.input)?;
    let seed = a.seed.unwrap_or(b.config.experiment.seed);
    let curve = sampling_curve(&b.executions(), &b.config.experiment.aggregation, a.samples, seed);
    export::curve(output(a.out.as_deref())?, &curve)
}

fn coverage(a: CoverageArgs) -> Result<()> {
    let (world, log) = if a.input.is_dir() {
        let b = Bundle::load(&a.input)?;
        (b.world, b.log)
    } else {
        let world_path = a
            .world
            .as_ref()
            .ok_or_else(|| VceError::Invalid("--world is required when --input is a log file".into()))?;
        (geojson::read_world(world_path)?, logio::read_log(&a.input)?)
    };
    let cov = coverage_from_log(world.graph(), &log)?;
    export::heatmap(output(a.out.as_deref())?, &cov)?;
    eprintln!("coverage {}%", cov.percent);
    Ok(())
}

fn behavior(a: BehaviorArgs) -> Result<()> {
    let b = Bundle::load(&a.input)?;
    let stats = behavior_stats(&b.log, b.config.experiment.taboo_config().as_ref())?;
    bundle::write_behavior(&a.out, &stats)
}

fn serve(a: ServeArgs) -> Result<()> {
    let store = Store::open(&a.data, Arc::new(SystemClock)).map_err(|e| VceError::Invalid(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(service::serve(store, &a.addr)).map_err(|e| VceError::Invalid(format!("{}: {e}", a.addr)))
}

fn plot_data(a: PlotDataArgs) -> Result<()> {
    let b = Bundle::load(&a.input)?;
    let seed = a.seed.unwrap_or(b.config.experiment.seed);
    plot::write_plot_data(&b, &a.out, a.samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn schedule_flag_parses() {
        let cli = Cli::try_parse_from(["vce", "run-sim", "--out", "x", "--schedule", "interleaved:3"]).unwrap();
        match cli.command {
            Command::RunSim(a) => assert_eq!(a.schedule, Some(Schedule::Interleaved { k: 3 })),
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["vce", "run-sim", "--out", "x", "--schedule", "parallel"]).is_err());
    }
}
