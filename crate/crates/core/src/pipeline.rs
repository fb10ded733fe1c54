//! End-to-end runs behind the CLI subcommands.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::{self, ThresholdChoice, ThresholdSearch, TileThreshold};
use crate::eval::{self, EvalReport, TileDifference, TileEvaluation, Tiling};
use crate::ingest::{BoundsTracker, LasWriter, PointReader, ReadOptions, XyzWriter};
use crate::products;
use crate::raster::{
    self, occupancy, Aggregator, BitMask, DsmBuilder, GridGeoref, RasterGrid, DEFAULT_NODATA,
};
use crate::seed::{self, DensityStats, SeedParams};
use crate::synth::{self, SceneSpec};
use crate::werm::{self, WermOutcome, WermParams};

/// Pipeline step an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Params,
    Input,
    Ingest,
    Rasterize,
    Density,
    Seed,
    BuildingBuffer,
    Werm,
    Baseline,
    Eval,
    Synth,
    Output,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Params => "params",
            Stage::Input => "input",
            Stage::Ingest => "ingest",
            Stage::Rasterize => "rasterize",
            Stage::Density => "density",
            Stage::Seed => "seed",
            Stage::BuildingBuffer => "building-buffer",
            Stage::Werm => "werm",
            Stage::Baseline => "baseline",
            Stage::Eval => "eval",
            Stage::Synth => "synth",
            Stage::Output => "output",
        }
    }

    /// Stages whose failures are caused by user input rather than by the
    /// pipeline itself.
    pub fn is_input_stage(self) -> bool {
        matches!(self, Stage::Params | Stage::Input | Stage::Ingest)
    }
}

#[derive(Debug)]
pub struct PipelineError {
    pub stage: Stage,
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage.name(), self.source)
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(self.source.as_ref())
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<Box<dyn std::error::Error + Send + Sync>>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

fn in_pool<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T, PipelineError> + Send,
) -> Result<T, PipelineError> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .at(Stage::Params)?
            .install(f),
    }
}

fn write_grid(grid: &RasterGrid, dir: &Path, name: &str) -> Result<String, PipelineError> {
    raster::write_ascii_grid(grid, dir.join(name)).at(Stage::Output)?;
    Ok(name.to_string())
}

fn write_json<T: Serialize>(value: &T, dir: &Path, name: &str) -> Result<String, PipelineError> {
    let file = File::create(dir.join(name)).at(Stage::Output)?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).at(Stage::Output)?;
    out.write_all(b"\n").at(Stage::Output)?;
    out.flush().at(Stage::Output)?;
    Ok(name.to_string())
}

fn write_jsonl<T: Serialize>(records: &[T], dir: &Path, name: &str) -> Result<String, PipelineError> {
    let file = File::create(dir.join(name)).at(Stage::Output)?;
    let mut out = BufWriter::new(file);
    products::write_jsonl(records, &mut out).at(Stage::Output)?;
    out.flush().at(Stage::Output)?;
    Ok(name.to_string())
}

fn read_mask(path: &Path) -> Result<BitMask, PipelineError> {
    let grid = raster::read_ascii_grid(path).at(Stage::Input)?;
    Ok(BitMask::from_raster(&grid, |v| v > 0.0))
}

// ---------------------------------------------------------------- mapping

/// Every parameter of a mapping run. Serialized into the run manifest; the
/// output directory and thread count are left out because they do not
/// affect results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    pub input: PathBuf,
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub resolution: f64,
    pub aggregator: Aggregator,
    pub nodata: f64,
    pub drop_withheld: bool,
    /// Raster whose grid the DSM adopts instead of the point bounds.
    pub grid_like: Option<PathBuf>,
    /// Raster where values > 0 mark buildings; its grid is adopted when no
    /// `grid_like` is given.
    pub building_mask: Option<PathBuf>,
    pub seed: SeedParams,
    pub werm: WermParams,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl MapConfig {
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        MapConfig {
            input: input.into(),
            out_dir: out_dir.into(),
            resolution: 0.5,
            aggregator: Aggregator::Max,
            nodata: DEFAULT_NODATA,
            drop_withheld: false,
            grid_like: None,
            building_mask: None,
            seed: SeedParams::default(),
            werm: WermParams::default(),
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(PipelineError {
                stage: Stage::Params,
                source: format!("resolution must be positive, got {}", self.resolution).into(),
            });
        }
        if !self.nodata.is_finite() {
            return Err(PipelineError {
                stage: Stage::Params,
                source: "nodata value must be finite".into(),
            });
        }
        self.seed.validate().at(Stage::Params)?;
        self.werm.validate().at(Stage::Params)?;
        Ok(())
    }
}

/// In-memory result of seeding and merging one DSM.
#[derive(Debug, Clone)]
pub struct WaterMap {
    pub density: DensityStats,
    /// Seeds before the building buffer.
    pub raw_seeds: BitMask,
    pub seeds: BitMask,
    pub werm: WermOutcome,
}

/// Density test, optional building buffer, then region merging.
pub fn map_water(
    dsm: &RasterGrid,
    buildings: Option<&BitMask>,
    seed_params: &SeedParams,
    werm_params: &WermParams,
) -> Result<WaterMap, PipelineError> {
    let occ = occupancy(dsm);
    let density = seed::density_stats(&occ, seed_params).at(Stage::Density)?;
    let raw_seeds = seed::classify_seeds(&occ, &density, seed_params);
    let seeds = match buildings {
        Some(b) => seed::apply_building_buffer(&raw_seeds, b, seed_params.building_buffer_radius)
            .at(Stage::BuildingBuffer)?,
        None => raw_seeds.clone(),
    };
    let werm = werm::run_werm(&seeds, dsm, werm_params).at(Stage::Werm)?;
    Ok(WaterMap {
        density,
        raw_seeds,
        seeds,
        werm,
    })
}

/// Reproducibility record written next to the products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapManifest {
    pub tool: String,
    pub version: String,
    pub config: MapConfig,
    pub grid: GridGeoref,
    pub points_read: u64,
    pub points_outside_grid: u64,
    pub density: DensityStats,
    pub seed_cells: usize,
    pub seed_cells_after_building_buffer: usize,
    pub cells_added_per_pass: Vec<usize>,
    pub water_cells: usize,
    pub segments: usize,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Reads a manifest and returns its configuration, targeted at `out_dir`.
pub fn config_from_manifest(path: &Path, out_dir: impl Into<PathBuf>) -> Result<MapConfig, PipelineError> {
    let text = fs::read_to_string(path).at(Stage::Input)?;
    let manifest: MapManifest = serde_json::from_str(&text).at(Stage::Input)?;
    Ok(MapConfig {
        out_dir: out_dir.into(),
        ..manifest.config
    })
}

fn rasterize(config: &MapConfig, grid: Option<GridGeoref>) -> Result<(RasterGrid, u64, u64), PipelineError> {
    let options = ReadOptions {
        drop_withheld: config.drop_withheld,
    };
    let georef = match grid {
        Some(g) => g,
        None => {
            // first pass: bounds only
            let mut reader = PointReader::open(&config.input, options).at(Stage::Ingest)?;
            let mut tracker = BoundsTracker::default();
            for p in reader.by_ref() {
                tracker.push(&p.at(Stage::Ingest)?);
            }
            let bounds = tracker.bounds().at(Stage::Ingest)?;
            GridGeoref::covering(&bounds, config.resolution).at(Stage::Rasterize)?
        }
    };
    let mut builder = DsmBuilder::new(georef, config.aggregator);
    let mut read = 0u64;
    for p in PointReader::open(&config.input, options).at(Stage::Ingest)? {
        builder.push(&p.at(Stage::Ingest)?);
        read += 1;
    }
    if read == 0 {
        return Err(PipelineError {
            stage: Stage::Ingest,
            source: "point cloud is empty".into(),
        });
    }
    let outside = builder.outside_count();
    Ok((builder.finish(config.nodata), read, outside))
}

/// Runs the full mapping pipeline and writes every product into
/// `config.out_dir`.
pub fn run_map(config: &MapConfig) -> Result<MapManifest, PipelineError> {
    config.validate()?;
    in_pool(config.threads, || run_map_inner(config))
}

fn run_map_inner(config: &MapConfig) -> Result<MapManifest, PipelineError> {
    if !config.input.is_file() {
        return Err(PipelineError {
            stage: Stage::Ingest,
            source: format!("input point file {} does not exist", config.input.display()).into(),
        });
    }
    let buildings = config.building_mask.as_deref().map(read_mask).transpose()?;
    let grid = match &config.grid_like {
        Some(p) => Some(raster::read_ascii_grid(p).at(Stage::Input)?.georef),
        None => buildings.as_ref().map(|b| b.georef),
    };
    if let (Some(g), Some(r)) = (grid, grid.map(|g| g.cell_size)) {
        if (r - config.resolution).abs() > 1e-9 * r {
            return Err(PipelineError {
                stage: Stage::Params,
                source: format!(
                    "template grid cell size {r} differs from --resolution {} ({g:?})",
                    config.resolution
                )
                .into(),
            });
        }
    }

    let (dsm, points_read, points_outside) = rasterize(config, grid)?;
    let map = map_water(&dsm, buildings.as_ref(), &config.seed, &config.werm)?;

    fs::create_dir_all(&config.out_dir).at(Stage::Output)?;
    let dir = config.out_dir.as_path();
    let seg = &map.werm.segmentation;
    let mut outputs = vec![
        write_grid(&dsm, dir, "dsm.asc")?,
        write_grid(&map.seeds.to_raster(config.nodata), dir, "seeds.asc")?,
        write_grid(&map.werm.mask.to_raster(config.nodata), dir, "water_mask.asc")?,
        write_grid(
            &products::water_elevation_raster(seg, config.nodata),
            dir,
            "water_elevation.asc",
        )?,
        write_grid(&products::hydro_flatten(&dsm, seg), dir, "hydro_flattened_dem.asc")?,
        write_jsonl(&products::segment_report(seg), dir, "segments.jsonl")?,
    ];
    outputs.push(MANIFEST_FILE.to_string());

    let manifest = MapManifest {
        tool: "waterline".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        grid: dsm.georef,
        points_read,
        points_outside_grid: points_outside,
        density: map.density,
        seed_cells: map.raw_seeds.count_ones(),
        seed_cells_after_building_buffer: map.seeds.count_ones(),
        cells_added_per_pass: map.werm.added_per_pass.clone(),
        water_cells: map.werm.mask.count_ones(),
        segments: seg.segments.len(),
        outputs,
    };
    write_json(&manifest, dir, MANIFEST_FILE)?;
    Ok(manifest)
}

// ------------------------------------------------------------------- ndwi

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NdwiMode {
    Global,
    Local,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdwiConfig {
    pub green: PathBuf,
    pub nir: PathBuf,
    pub truth: PathBuf,
    pub out_dir: PathBuf,
    pub mode: NdwiMode,
    pub tiling: Tiling,
    pub search: ThresholdSearch,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdwiSummary {
    pub search: ThresholdSearch,
    pub global: Option<ThresholdChoice>,
    pub tiling: Option<Tiling>,
    pub local: Vec<TileThreshold>,
    pub outputs: Vec<String>,
}

pub fn run_ndwi(config: &NdwiConfig) -> Result<NdwiSummary, PipelineError> {
    config.search.validate().at(Stage::Params)?;
    in_pool(config.threads, || {
        let green = raster::read_ascii_grid(&config.green).at(Stage::Input)?;
        let nir = raster::read_ascii_grid(&config.nir).at(Stage::Input)?;
        let truth = read_mask(&config.truth)?;
        let index = baseline::ndwi(&green, &nir).at(Stage::Input)?;
        fs::create_dir_all(&config.out_dir).at(Stage::Output)?;
        let dir = config.out_dir.as_path();
        let mut outputs = vec![write_grid(&index, dir, "ndwi.asc")?];
        let mut summary = NdwiSummary {
            search: config.search,
            global: None,
            tiling: None,
            local: Vec::new(),
            outputs: Vec::new(),
        };
        if matches!(config.mode, NdwiMode::Global | NdwiMode::Both) {
            let choice = baseline::optimal_threshold(&index, &truth, &config.search).at(Stage::Baseline)?;
            let mask = baseline::threshold_map(&index, choice.threshold);
            outputs.push(write_grid(&mask.to_raster(index.nodata), dir, "ndwi_global_mask.asc")?);
            summary.global = Some(choice);
        }
        if matches!(config.mode, NdwiMode::Local | NdwiMode::Both) {
            let local = baseline::local_optimal_map(&index, &truth, config.tiling, &config.search)
                .at(Stage::Baseline)?;
            outputs.push(write_grid(&local.mask.to_raster(index.nodata), dir, "ndwi_local_mask.asc")?);
            summary.tiling = Some(config.tiling);
            summary.local = local.tiles;
        }
        outputs.push("thresholds.json".into());
        summary.outputs = outputs;
        write_json(&summary, dir, "thresholds.json")?;
        Ok(summary)
    })
}

// ------------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub truth: PathBuf,
    pub pred_a: PathBuf,
    pub pred_b: Option<PathBuf>,
    /// Optional mask restricting evaluated cells (values > 0 are kept).
    pub valid: Option<PathBuf>,
    pub tiling: Tiling,
    pub exclude: Vec<usize>,
    pub top_k: usize,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub a: TileEvaluation,
    pub b: Option<TileEvaluation>,
    pub divergent: Vec<TileDifference>,
}

pub fn run_eval(config: &EvalConfig) -> Result<EvalSummary, PipelineError> {
    let truth = read_mask(&config.truth)?;
    let a = read_mask(&config.pred_a)?;
    let b = config.pred_b.as_deref().map(read_mask).transpose()?;
    let valid = config.valid.as_deref().map(read_mask).transpose()?;
    let ev_a = eval::tile_eval(&a, &truth, valid.as_ref(), config.tiling, &config.exclude).at(Stage::Eval)?;
    let ev_b = b
        .as_ref()
        .map(|b| eval::tile_eval(b, &truth, valid.as_ref(), config.tiling, &config.exclude))
        .transpose()
        .at(Stage::Eval)?;
    let divergent = ev_b
        .as_ref()
        .map(|eb| eval::divergent_tiles(&ev_a.tiles, &eb.tiles, config.top_k))
        .unwrap_or_default();
    let summary = EvalSummary {
        a: ev_a,
        b: ev_b,
        divergent,
    };
    if let Some(dir) = &config.out_dir {
        fs::create_dir_all(dir).at(Stage::Output)?;
        write_jsonl(&summary.a.tiles, dir, "tiles_a.jsonl")?;
        if let Some(eb) = &summary.b {
            write_jsonl(&eb.tiles, dir, "tiles_b.jsonl")?;
            write_jsonl(&summary.divergent, dir, "divergent_tiles.jsonl")?;
        }
        write_json(&summary_aggregates(&summary), dir, "summary.json")?;
    }
    Ok(summary)
}

#[derive(Serialize)]
struct Aggregates {
    pooled_a: Option<EvalReport>,
    mean_oa_a: Option<f64>,
    mean_iou_a: Option<f64>,
    pooled_b: Option<EvalReport>,
    mean_oa_b: Option<f64>,
    mean_iou_b: Option<f64>,
}

fn summary_aggregates(s: &EvalSummary) -> Aggregates {
    Aggregates {
        pooled_a: s.a.pooled,
        mean_oa_a: s.a.mean_oa,
        mean_iou_a: s.a.mean_iou,
        pooled_b: s.b.as_ref().and_then(|b| b.pooled),
        mean_oa_b: s.b.as_ref().and_then(|b| b.mean_oa),
        mean_iou_b: s.b.as_ref().and_then(|b| b.mean_iou),
    }
}

fn fmt_rate(v: Option<f64>) -> String {
    v.map_or_else(|| "   n/a".to_string(), |v| format!("{v:6.4}"))
}

/// Human-readable table of an evaluation.
pub fn format_eval_table(summary: &EvalSummary) -> String {
    let mut s = String::new();
    let row = |s: &mut String, name: &str, r: &EvalReport| {
        s.push_str(&format!(
            "{name:<8} {:>10} {:>10} {:>10} {:>12} {} {} {} {} {}\n",
            r.tp,
            r.fp,
            r.fn_,
            r.tn,
            fmt_rate(r.oa),
            fmt_rate(r.precision),
            fmt_rate(r.recall),
            fmt_rate(r.f1),
            fmt_rate(r.iou)
        ));
    };
    s.push_str(&format!(
        "{:<8} {:>10} {:>10} {:>10} {:>12} {:>6} {:>6} {:>6} {:>6} {:>6}\n",
        "mask", "tp", "fp", "fn", "tn", "oa", "prec", "recall", "f1", "iou"
    ));
    let empty = EvalReport::default();
    row(&mut s, "a", summary.a.pooled.as_ref().unwrap_or(&empty));
    if let Some(b) = &summary.b {
        row(&mut s, "b", b.pooled.as_ref().unwrap_or(&empty));
    }
    s.push_str(&format!(
        "per-tile mean (a): oa {} iou {}\n",
        fmt_rate(summary.a.mean_oa),
        fmt_rate(summary.a.mean_iou)
    ));
    if let Some(b) = &summary.b {
        s.push_str(&format!(
            "per-tile mean (b): oa {} iou {}\n",
            fmt_rate(b.mean_oa),
            fmt_rate(b.mean_iou)
        ));
    }
    if !summary.divergent.is_empty() {
        s.push_str("most divergent tiles (|iou_a - iou_b|):\n");
        for d in &summary.divergent {
            s.push_str(&format!(
                "  tile {:>5}  a {:6.4}  b {:6.4}  diff {:6.4}\n",
                d.tile_id, d.iou_a, d.iou_b, d.abs_diff
            ));
        }
    }
    s
}

// ------------------------------------------------------------------ synth

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointFormat {
    Las,
    Xyz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub grid: GridGeoref,
    pub points: u64,
    pub water_cells: usize,
    pub building_cells: usize,
    pub shadow_cells: usize,
    pub outputs: Vec<String>,
}

/// Generates the scene described by `spec` and writes its point cloud and
/// truth layers to `out_dir`.
pub fn run_synth(spec: &SceneSpec, out_dir: &Path, format: PointFormat) -> Result<SynthSummary, PipelineError> {
    let scene = synth::generate(spec).at(Stage::Synth)?;
    fs::create_dir_all(out_dir).at(Stage::Output)?;
    let g = scene.georef;
    let (points_name, points) = match format {
        PointFormat::Las => {
            let name = "points.las";
            let offset = [g.x_origin.floor(), g.y_origin.floor(), 0.0];
            let mut w = LasWriter::create(out_dir.join(name), [0.001; 3], offset).at(Stage::Output)?;
            let mut n = 0u64;
            for p in scene.points() {
                w.write_point(&p).at(Stage::Output)?;
                n += 1;
            }
            w.finish().at(Stage::Output)?;
            (name, n)
        }
        PointFormat::Xyz => {
            let name = "points.xyz";
            let mut w = XyzWriter::create(out_dir.join(name)).at(Stage::Output)?;
            let mut n = 0u64;
            for p in scene.points() {
                w.write_point(&p).at(Stage::Output)?;
                n += 1;
            }
            w.finish().at(Stage::Output)?;
            (name, n)
        }
    };
    let outputs = vec![
        points_name.to_string(),
        write_grid(&scene.truth_water.to_raster(DEFAULT_NODATA), out_dir, "truth_water.asc")?,
        write_grid(&scene.truth_buildings.to_raster(DEFAULT_NODATA), out_dir, "buildings.asc")?,
        write_grid(&scene.truth_shadow.to_raster(DEFAULT_NODATA), out_dir, "shadow.asc")?,
        write_grid(&scene.green, out_dir, "green.asc")?,
        write_grid(&scene.nir, out_dir, "nir.asc")?,
        "scene.json".to_string(),
    ];
    let summary = SynthSummary {
        grid: g,
        points,
        water_cells: scene.truth_water.count_ones(),
        building_cells: scene.truth_buildings.count_ones(),
        shadow_cells: scene.truth_shadow.count_ones(),
        outputs,
    };
    write_json(&summary, out_dir, "scene.json")?;
    Ok(summary)
}
