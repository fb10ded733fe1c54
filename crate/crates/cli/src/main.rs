use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use waterline::baseline::ThresholdSearch;
use waterline::eval::Tiling;
use waterline::pipeline::{
    self, EvalConfig, MapConfig, NdwiConfig, NdwiMode, PipelineError, PointFormat, Stage,
};
use waterline::raster::Aggregator;
use waterline::seed::DensityDenominator;
use waterline::synth::SceneSpec;
use waterline::werm::Connectivity;

/// Surface-water mapping from airborne LiDAR point clouds.
#[derive(Parser)]
#[command(name = "waterline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map water bodies in a point cloud.
    Map(MapArgs),
    /// Truth-tuned NDWI threshold baselines.
    Ndwi(NdwiArgs),
    /// Compare water masks against a reference.
    Eval(EvalArgs),
    /// Generate a synthetic scene with ground truth.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AggArg {
    Min,
    Max,
    Mean,
}

#[derive(Clone, Copy, ValueEnum)]
enum DenominatorArg {
    FullExtent,
    DataHull,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Global,
    Local,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Las,
    Xyz,
}

/// Worker count; `None` lets the pool decide.
#[derive(Clone, Copy)]
struct Threads(Option<usize>);

fn parse_threads(s: &str) -> Result<Threads, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Threads(None));
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive integer or 'auto', got '{s}'")),
        Ok(n) => Ok(Threads(Some(n))),
    }
}

#[derive(Args)]
struct MapArgs {
    /// LAS or XYZ point file.
    #[arg(required_unless_present = "replay")]
    input: Option<PathBuf>,
    #[arg(long, short)]
    out_dir: PathBuf,
    /// Re-run with the parameters recorded in a previous manifest.json.
    #[arg(long, conflicts_with = "input")]
    replay: Option<PathBuf>,
    /// DSM cell size in metres.
    #[arg(long, default_value_t = 0.5)]
    resolution: f64,
    #[arg(long, value_enum, default_value = "max")]
    aggregator: AggArg,
    #[arg(long, default_value_t = -9999.0, allow_negative_numbers = true)]
    nodata: f64,
    /// Skip points flagged as withheld.
    #[arg(long)]
    drop_withheld: bool,
    /// Adopt the grid of this ASCII raster.
    #[arg(long)]
    grid_like: Option<PathBuf>,
    /// Window side length in cells (odd).
    #[arg(long, default_value_t = 9)]
    window: usize,
    /// Standard score of the lower confidence bound.
    #[arg(long, default_value_t = 2.0)]
    z: f64,
    /// Test against half the global density.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    halve_density: bool,
    #[arg(long, value_enum, default_value = "full-extent")]
    density_denominator: DenominatorArg,
    /// Exact binomial quantile instead of the normal approximation.
    #[arg(long)]
    exact_binomial: bool,
    /// ASCII raster with values > 0 on building footprints.
    #[arg(long)]
    building_mask: Option<PathBuf>,
    /// Seed-clearing distance around buildings in metres.
    #[arg(long, default_value_t = 10.0)]
    building_buffer: f64,
    /// Elevation slice half-width in metres.
    #[arg(long, default_value_t = 0.10)]
    er: f64,
    /// Minimum segment area in square metres.
    #[arg(long, default_value_t = 500.0)]
    ms: f64,
    /// Percentile of segment elevations used as the water level.
    #[arg(long, default_value_t = 0.10)]
    percentile: f64,
    #[arg(long, default_value_t = 2)]
    passes: usize,
    /// 4 or 8.
    #[arg(long, default_value = "8")]
    connectivity: Connectivity,
    /// Worker threads, or 'auto'.
    #[arg(long, default_value = "auto", value_parser = parse_threads)]
    threads: Threads,
}

#[derive(Args)]
struct TileArgs {
    #[arg(long, default_value_t = 10)]
    tiles_x: usize,
    #[arg(long, default_value_t = 10)]
    tiles_y: usize,
}

#[derive(Args)]
struct NdwiArgs {
    #[arg(long)]
    green: PathBuf,
    #[arg(long)]
    nir: PathBuf,
    /// Reference water mask (values > 0 are water).
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, short)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    #[command(flatten)]
    tiles: TileArgs,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    t_min: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    t_max: f64,
    #[arg(long, default_value_t = 201)]
    steps: usize,
    #[arg(long, default_value = "auto", value_parser = parse_threads)]
    threads: Threads,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    pred_a: PathBuf,
    #[arg(long)]
    pred_b: Option<PathBuf>,
    /// Mask of cells to score (values > 0); defaults to all cells.
    #[arg(long)]
    valid: Option<PathBuf>,
    #[command(flatten)]
    tiles: TileArgs,
    /// Tile ids left out of every aggregate.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    /// Directory for per-tile reports.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML scene description.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, short)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "las")]
    format: FormatArg,
}

fn map_config(a: MapArgs) -> Result<MapConfig, PipelineError> {
    if let Some(manifest) = &a.replay {
        let mut config = pipeline::config_from_manifest(manifest, a.out_dir)?;
        config.threads = a.threads.0;
        return Ok(config);
    }
    let mut c = MapConfig::new(a.input.expect("clap enforces input"), a.out_dir);
    c.resolution = a.resolution;
    c.aggregator = match a.aggregator {
        AggArg::Min => Aggregator::Min,
        AggArg::Max => Aggregator::Max,
        AggArg::Mean => Aggregator::Mean,
    };
    c.nodata = a.nodata;
    c.drop_withheld = a.drop_withheld;
    c.grid_like = a.grid_like;
    c.building_mask = a.building_mask;
    c.seed.window_side = a.window;
    c.seed.z_score = a.z;
    c.seed.density_halving = a.halve_density;
    c.seed.density_denominator = match a.density_denominator {
        DenominatorArg::FullExtent => DensityDenominator::FullExtent,
        DenominatorArg::DataHull => DensityDenominator::DataHull,
    };
    c.seed.exact_binomial = a.exact_binomial;
    c.seed.building_buffer_radius = a.building_buffer;
    c.werm.elevation_range = a.er;
    c.werm.min_area = a.ms;
    c.werm.percentile = a.percentile;
    c.werm.passes = a.passes;
    c.werm.connectivity = a.connectivity;
    c.threads = a.threads.0;
    Ok(c)
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Map(args) => {
            let config = map_config(args)?;
            let m = pipeline::run_map(&config)?;
            println!(
                "{} points, grid {}x{}, P = {:.4}, {} seed cells, {} water cells in {} segments",
                m.points_read,
                m.grid.n_cols,
                m.grid.n_rows,
                m.density.p_global,
                m.seed_cells_after_building_buffer,
                m.water_cells,
                m.segments
            );
            println!("outputs written to {}", config.out_dir.display());
        }
        Command::Ndwi(a) => {
            let config = NdwiConfig {
                green: a.green,
                nir: a.nir,
                truth: a.truth,
                out_dir: a.out_dir,
                mode: match a.mode {
                    ModeArg::Global => NdwiMode::Global,
                    ModeArg::Local => NdwiMode::Local,
                    ModeArg::Both => NdwiMode::Both,
                },
                tiling: Tiling::new(a.tiles.tiles_x, a.tiles.tiles_y),
                search: ThresholdSearch {
                    t_min: a.t_min,
                    t_max: a.t_max,
                    steps: a.steps,
                },
                threads: a.threads.0,
            };
            let s = pipeline::run_ndwi(&config)?;
            if let Some(g) = s.global {
                println!("global threshold {:.4} (OA {:.4})", g.threshold, g.oa);
            }
            if !s.local.is_empty() {
                let chosen = s.local.iter().filter(|t| t.choice.is_some()).count();
                println!("local thresholds chosen for {chosen} of {} tiles", s.local.len());
            }
        }
        Command::Eval(a) => {
            let config = EvalConfig {
                truth: a.truth,
                pred_a: a.pred_a,
                pred_b: a.pred_b,
                valid: a.valid,
                tiling: Tiling::new(a.tiles.tiles_x, a.tiles.tiles_y),
                exclude: a.exclude,
                top_k: a.top_k,
                out_dir: a.out,
            };
            let s = pipeline::run_eval(&config)?;
            print!("{}", pipeline::format_eval_table(&s));
        }
        Command::Synth(a) => {
            let text = std::fs::read_to_string(&a.spec).map_err(|e| PipelineError {
                stage: Stage::Input,
                source: format!("cannot read {}: {e}", a.spec.display()).into(),
            })?;
            let spec = SceneSpec::from_toml_str(&text).map_err(|e| PipelineError {
                stage: Stage::Input,
                source: e.into(),
            })?;
            let format = match a.format {
                FormatArg::Las => PointFormat::Las,
                FormatArg::Xyz => PointFormat::Xyz,
            };
            let s = pipeline::run_synth(&spec, &a.out_dir, format)?;
            println!(
                "{} points, grid {}x{}, {} water cells, {} building cells",
                s.points, s.grid.n_cols, s.grid.n_rows, s.water_cells, s.building_cells
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.stage.is_input_stage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
