//! Grids, masks, DSM construction and ESRI ASCII grid I/O.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Point3, PointCloudBounds};

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Significant digits used when writing cell values.
pub const ASCII_SIGNIFICANT_DIGITS: usize = 6;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid grid: {0}")]
    InvalidGeoref(String),
    #[error("grids are not co-registered: {0:?} vs {1:?}")]
    GeorefMismatch(GridGeoref, GridGeoref),
    #[error("cannot build a DSM from an empty point stream")]
    EmptyPoints,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("ASCII grid header is missing `{0}`")]
    MissingHeaderKey(&'static str),
    #[error("ASCII grid format error: {0}")]
    Format(String),
}

/// Placement and size of a north-up grid. The origin is the lower-left
/// corner; row 0 is the northernmost row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeoref {
    pub x_origin: f64,
    pub y_origin: f64,
    pub cell_size: f64,
    pub n_cols: usize,
    pub n_rows: usize,
}

impl GridGeoref {
    pub fn new(
        x_origin: f64,
        y_origin: f64,
        cell_size: f64,
        n_cols: usize,
        n_rows: usize,
    ) -> Result<Self, RasterError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(RasterError::InvalidGeoref(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if n_cols == 0 || n_rows == 0 {
            return Err(RasterError::InvalidGeoref(format!(
                "grid must have at least one row and column, got {n_rows}x{n_cols}"
            )));
        }
        if !x_origin.is_finite() || !y_origin.is_finite() {
            return Err(RasterError::InvalidGeoref("origin must be finite".into()));
        }
        Ok(GridGeoref {
            x_origin,
            y_origin,
            cell_size,
            n_cols,
            n_rows,
        })
    }

    /// Smallest grid of whole cells, aligned to multiples of `cell_size`,
    /// that covers the bounds.
    pub fn covering(bounds: &PointCloudBounds, cell_size: f64) -> Result<Self, RasterError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(RasterError::InvalidGeoref(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        let col_lo = (bounds.min_x / cell_size).floor();
        let col_hi = (bounds.max_x / cell_size).floor();
        let row_lo = (bounds.min_y / cell_size).floor();
        let row_hi = (bounds.max_y / cell_size).floor();
        let n_cols = (col_hi - col_lo) as usize + 1;
        let n_rows = (row_hi - row_lo) as usize + 1;
        GridGeoref::new(col_lo * cell_size, row_lo * cell_size, cell_size, n_cols, n_rows)
    }

    pub fn len(&self) -> usize {
        self.n_cols * self.n_rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n_cols + col
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.x_origin + (col as f64 + 0.5) * self.cell_size,
            self.y_origin + (self.n_rows as f64 - row as f64 - 0.5) * self.cell_size,
        )
    }

    /// World-space rectangle `(x_min, y_min, x_max, y_max)` of a cell.
    pub fn cell_rect(&self, row: usize, col: usize) -> (f64, f64, f64, f64) {
        let x0 = self.x_origin + col as f64 * self.cell_size;
        let y0 = self.y_origin + (self.n_rows - row - 1) as f64 * self.cell_size;
        (x0, y0, x0 + self.cell_size, y0 + self.cell_size)
    }

    /// Cell containing a world coordinate. Points within a rounding error of
    /// the outer edge snap to the edge cell.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fc = ((x - self.x_origin) / self.cell_size).floor();
        let fr = ((y - self.y_origin) / self.cell_size).floor();
        let col = snap_index(fc, (x - self.x_origin) / self.cell_size, self.n_cols)?;
        let from_south = snap_index(fr, (y - self.y_origin) / self.cell_size, self.n_rows)?;
        Some((self.n_rows - 1 - from_south, col))
    }

    /// Same shape and placement, up to a small fraction of a cell.
    pub fn is_aligned_with(&self, other: &GridGeoref) -> bool {
        let tol = 1e-6 * self.cell_size.min(other.cell_size);
        self.n_cols == other.n_cols
            && self.n_rows == other.n_rows
            && (self.cell_size - other.cell_size).abs() <= tol
            && (self.x_origin - other.x_origin).abs() <= tol
            && (self.y_origin - other.y_origin).abs() <= tol
    }

    pub fn ensure_aligned(&self, other: &GridGeoref) -> Result<(), RasterError> {
        if self.is_aligned_with(other) {
            Ok(())
        } else {
            Err(RasterError::GeorefMismatch(*self, *other))
        }
    }
}

fn snap_index(floored: f64, exact: f64, n: usize) -> Option<usize> {
    const EDGE_EPS: f64 = 1e-9;
    if floored >= 0.0 && floored < n as f64 {
        Some(floored as usize)
    } else if floored == -1.0 && exact > -EDGE_EPS {
        Some(0)
    } else if floored == n as f64 && exact < n as f64 + EDGE_EPS {
        Some(n - 1)
    } else {
        None
    }
}

/// Real-valued grid with a nodata sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pub georef: GridGeoref,
    pub values: Vec<f64>,
    pub nodata: f64,
}

impl RasterGrid {
    pub fn filled(georef: GridGeoref, value: f64, nodata: f64) -> Self {
        RasterGrid {
            georef,
            values: vec![value; georef.len()],
            nodata,
        }
    }

    pub fn nodata_grid(georef: GridGeoref, nodata: f64) -> Self {
        Self::filled(georef, nodata, nodata)
    }

    pub fn from_values(georef: GridGeoref, values: Vec<f64>, nodata: f64) -> Result<Self, RasterError> {
        if values.len() != georef.len() {
            return Err(RasterError::Format(format!(
                "expected {} values, got {}",
                georef.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| **v != nodata && !v.is_finite()) {
            return Err(RasterError::Format(format!("non-finite cell value {v}")));
        }
        Ok(RasterGrid { georef, values, nodata })
    }

    #[inline]
    pub fn is_nodata_value(&self, v: f64) -> bool {
        v == self.nodata
    }

    /// Cell value, `None` for nodata.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.value_at(self.georef.index(row, col))
    }

    #[inline]
    pub fn value_at(&self, index: usize) -> Option<f64> {
        let v = self.values[index];
        (v != self.nodata).then_some(v)
    }

    pub fn nodata_count(&self) -> usize {
        self.values.iter().filter(|v| **v == self.nodata).count()
    }
}

/// Boolean grid co-registered with the raster it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct BitMask {
    pub georef: GridGeoref,
    pub bits: Vec<bool>,
}

impl BitMask {
    pub fn empty(georef: GridGeoref) -> Self {
        BitMask {
            georef,
            bits: vec![false; georef.len()],
        }
    }

    pub fn full(georef: GridGeoref) -> Self {
        BitMask {
            georef,
            bits: vec![true; georef.len()],
        }
    }

    pub fn from_bits(georef: GridGeoref, bits: Vec<bool>) -> Result<Self, RasterError> {
        if bits.len() != georef.len() {
            return Err(RasterError::Format(format!(
                "expected {} mask cells, got {}",
                georef.len(),
                bits.len()
            )));
        }
        Ok(BitMask { georef, bits })
    }

    /// Cells whose value is present and satisfies `pred`.
    pub fn from_raster(grid: &RasterGrid, pred: impl Fn(f64) -> bool) -> Self {
        BitMask {
            georef: grid.georef,
            bits: grid
                .values
                .iter()
                .map(|&v| v != grid.nodata && pred(v))
                .collect(),
        }
    }

    /// 1 for set cells, 0 otherwise.
    pub fn to_raster(&self, nodata: f64) -> RasterGrid {
        RasterGrid {
            georef: self.georef,
            values: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            nodata,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[self.georef.index(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        let i = self.georef.index(row, col);
        self.bits[i] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_subset_of(&self, other: &BitMask) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    pub fn union_with(&mut self, other: &BitMask) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }
}

/// Per-cell reducer for point elevations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Min,
    #[default]
    Max,
    Mean,
}

impl std::str::FromStr for Aggregator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "min" => Ok(Aggregator::Min),
            "max" => Ok(Aggregator::Max),
            "mean" => Ok(Aggregator::Mean),
            other => Err(format!("unknown aggregator {other:?} (expected min, max or mean)")),
        }
    }
}

/// Accumulates a stream of points into a fixed grid.
pub struct DsmBuilder {
    georef: GridGeoref,
    aggregator: Aggregator,
    acc: Vec<f64>,
    counts: Vec<u32>,
    outside: u64,
}

impl DsmBuilder {
    pub fn new(georef: GridGeoref, aggregator: Aggregator) -> Self {
        let init = match aggregator {
            Aggregator::Min => f64::INFINITY,
            Aggregator::Max => f64::NEG_INFINITY,
            Aggregator::Mean => 0.0,
        };
        DsmBuilder {
            georef,
            aggregator,
            acc: vec![init; georef.len()],
            counts: vec![0; georef.len()],
            outside: 0,
        }
    }

    /// Adds a point; points outside the grid are counted and skipped.
    pub fn push(&mut self, p: &Point3) {
        let Some((row, col)) = self.georef.cell_of(p.x, p.y) else {
            self.outside += 1;
            return;
        };
        let i = self.georef.index(row, col);
        self.counts[i] = self.counts[i].saturating_add(1);
        let slot = &mut self.acc[i];
        match self.aggregator {
            Aggregator::Min => *slot = slot.min(p.z),
            Aggregator::Max => *slot = slot.max(p.z),
            Aggregator::Mean => *slot += p.z,
        }
    }

    /// Points that fell outside the grid so far.
    pub fn outside_count(&self) -> u64 {
        self.outside
    }

    pub fn finish(self, nodata: f64) -> RasterGrid {
        let values = self
            .acc
            .into_iter()
            .zip(self.counts)
            .map(|(v, n)| match (n, self.aggregator) {
                (0, _) => nodata,
                (n, Aggregator::Mean) => v / n as f64,
                (_, _) => v,
            })
            .collect();
        RasterGrid {
            georef: self.georef,
            values,
            nodata,
        }
    }
}

/// Rasterizes points into a DSM whose extent is the point bounds snapped
/// outward to whole cells.
pub fn build_dsm(
    points: &[Point3],
    cell_size: f64,
    aggregator: Aggregator,
    nodata: f64,
) -> Result<RasterGrid, RasterError> {
    let bounds = PointCloudBounds::of_points(points).ok_or(RasterError::EmptyPoints)?;
    let georef = GridGeoref::covering(&bounds, cell_size)?;
    let mut builder = DsmBuilder::new(georef, aggregator);
    for p in points {
        builder.push(p);
    }
    Ok(builder.finish(nodata))
}

/// Set exactly where the DSM has a value.
pub fn occupancy(dsm: &RasterGrid) -> BitMask {
    BitMask {
        georef: dsm.georef,
        bits: dsm.values.iter().map(|&v| v != dsm.nodata).collect(),
    }
}

/// Occupied-cell count with two candidate denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyCounts {
    pub occupied: usize,
    /// Every cell of the grid extent.
    pub total_cells: usize,
    /// Cells of the bounding rectangle of occupied rows and columns.
    pub hull_cells: usize,
}

pub fn occupancy_counts(mask: &BitMask) -> OccupancyCounts {
    let g = mask.georef;
    let mut occupied = 0;
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for row in 0..g.n_rows {
        let line = &mask.bits[row * g.n_cols..(row + 1) * g.n_cols];
        let mut any = false;
        for (col, _) in line.iter().enumerate().filter(|(_, b)| **b) {
            occupied += 1;
            any = true;
            c0 = c0.min(col);
            c1 = c1.max(col);
        }
        if any {
            r0 = r0.min(row);
            r1 = r1.max(row);
        }
    }
    let hull_cells = if occupied == 0 {
        0
    } else {
        (r1 - r0 + 1) * (c1 - c0 + 1)
    };
    OccupancyCounts {
        occupied,
        total_cells: g.len(),
        hull_cells,
    }
}

/// Formats with `digits` significant digits, trailing zeros trimmed.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).clamp(0, 30) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

pub fn write_ascii_grid(grid: &RasterGrid, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    let io_err = |source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    write_ascii_grid_to(grid, &mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn write_ascii_grid_to<W: Write>(grid: &RasterGrid, out: &mut W) -> io::Result<()> {
    let g = &grid.georef;
    writeln!(out, "ncols {}", g.n_cols)?;
    writeln!(out, "nrows {}", g.n_rows)?;
    writeln!(out, "xllcorner {}", g.x_origin)?;
    writeln!(out, "yllcorner {}", g.y_origin)?;
    writeln!(out, "cellsize {}", g.cell_size)?;
    let nodata_text = format_significant(grid.nodata, ASCII_SIGNIFICANT_DIGITS);
    writeln!(out, "NODATA_value {nodata_text}")?;
    let mut line = String::with_capacity(g.n_cols * 8);
    for row in grid.values.chunks(g.n_cols) {
        line.clear();
        for (i, &v) in row.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            if v == grid.nodata {
                line.push_str(&nodata_text);
            } else {
                let _ = write!(line, "{}", format_significant(v, ASCII_SIGNIFICANT_DIGITS));
            }
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn read_ascii_grid(path: impl AsRef<Path>) -> Result<RasterGrid, RasterError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_ascii_grid_from(BufReader::new(file)).map_err(|e| match e {
        RasterError::Io { source, .. } => RasterError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn read_ascii_grid_from<R: BufRead>(mut reader: R) -> Result<RasterGrid, RasterError> {
    let io_err = |source| RasterError::Io {
        path: PathBuf::new(),
        source,
    };
    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut center_registered = false;
    let mut cellsize = None;
    let mut nodata = None;
    let mut values = Vec::new();

    let mut line = String::new();
    let mut in_header = true;
    let mut line_no = 0usize;
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(io_err)? == 0 {
            break;
        }
        line_no += 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if in_header {
            let mut parts = text.split_whitespace();
            let key = parts.next().unwrap_or_default();
            if key.parse::<f64>().is_err() {
                let value = parts.next().ok_or_else(|| {
                    RasterError::Format(format!("line {line_no}: header key {key} has no value"))
                })?;
                let num = |v: &str| {
                    v.parse::<f64>().map_err(|_| {
                        RasterError::Format(format!("line {line_no}: bad value {v:?} for {key}"))
                    })
                };
                let count = |v: &str| {
                    v.parse::<usize>().map_err(|_| {
                        RasterError::Format(format!("line {line_no}: bad count {v:?} for {key}"))
                    })
                };
                match key.to_ascii_lowercase().as_str() {
                    "ncols" => ncols = Some(count(value)?),
                    "nrows" => nrows = Some(count(value)?),
                    "xllcorner" => xll = Some(num(value)?),
                    "yllcorner" => yll = Some(num(value)?),
                    "xllcenter" => {
                        xll = Some(num(value)?);
                        center_registered = true;
                    }
                    "yllcenter" => {
                        yll = Some(num(value)?);
                        center_registered = true;
                    }
                    "cellsize" => cellsize = Some(num(value)?),
                    "nodata_value" => nodata = Some(num(value)?),
                    _ => {
                        return Err(RasterError::Format(format!(
                            "line {line_no}: unknown header key {key}"
                        )))
                    }
                }
                continue;
            }
            in_header = false;
            let n = ncols.ok_or(RasterError::MissingHeaderKey("ncols"))?
                * nrows.ok_or(RasterError::MissingHeaderKey("nrows"))?;
            values.reserve(n);
        }
        for tok in text.split_whitespace() {
            let v = tok.parse::<f64>().map_err(|_| {
                RasterError::Format(format!("line {line_no}: value {tok:?} is not a number"))
            })?;
            values.push(v);
        }
    }

    let ncols = ncols.ok_or(RasterError::MissingHeaderKey("ncols"))?;
    let nrows = nrows.ok_or(RasterError::MissingHeaderKey("nrows"))?;
    let mut xll = xll.ok_or(RasterError::MissingHeaderKey("xllcorner"))?;
    let mut yll = yll.ok_or(RasterError::MissingHeaderKey("yllcorner"))?;
    let cellsize = cellsize.ok_or(RasterError::MissingHeaderKey("cellsize"))?;
    let nodata = nodata.unwrap_or(DEFAULT_NODATA);
    if center_registered {
        xll -= 0.5 * cellsize;
        yll -= 0.5 * cellsize;
    }
    let georef = GridGeoref::new(xll, yll, cellsize, ncols, nrows)?;
    if values.len() != georef.len() {
        return Err(RasterError::Format(format!(
            "header declares {} x {} = {} cells but {} values follow",
            nrows,
            ncols,
            georef.len(),
            values.len()
        )));
    }
    RasterGrid::from_values(georef, values, nodata)
}
