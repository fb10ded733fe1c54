//! Water elevation-based region merging.
//!
//! A seed segment whose area qualifies is assigned a representative water
//! level (a low percentile of its DSM values). The DSM is sliced to the cells
//! within `±elevation_range` of that level, and every slice cell reachable
//! from the segment through the slice joins the water mask. Water surfaces
//! are flat, so parts of a lake that returned dense points (and were missed
//! by the density test) share the level of the sparse centre and get merged,
//! while banks and surrounding terrain do not.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{BitMask, GridGeoref, RasterGrid, RasterError};

#[derive(Debug, Error)]
pub enum WermError {
    #[error("invalid region-merging parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Pixel adjacency used for labeling and for slice connectivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(format!("connectivity must be 4 or 8, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl std::str::FromStr for Connectivity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<u8>()
            .map_err(|_| format!("connectivity must be 4 or 8, got {s:?}"))
            .and_then(Connectivity::try_from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WermParams {
    /// Half-width of the elevation slice, meters.
    pub elevation_range: f64,
    /// Minimum segment area eligible for extension, square meters.
    pub min_area: f64,
    /// Percentile of segment elevations used as the water level, in (0, 1).
    pub percentile: f64,
    pub passes: usize,
    pub connectivity: Connectivity,
}

impl Default for WermParams {
    fn default() -> Self {
        WermParams {
            elevation_range: 0.10,
            min_area: 500.0,
            percentile: 0.10,
            passes: 2,
            connectivity: Connectivity::Eight,
        }
    }
}

impl WermParams {
    pub fn validate(&self) -> Result<(), WermError> {
        if !(self.elevation_range > 0.0 && self.elevation_range.is_finite()) {
            return Err(WermError::InvalidParams(format!(
                "elevation range must be positive, got {}",
                self.elevation_range
            )));
        }
        if !(self.min_area >= 0.0 && self.min_area.is_finite()) {
            return Err(WermError::InvalidParams(format!(
                "minimum area must be non-negative, got {}",
                self.min_area
            )));
        }
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return Err(WermError::InvalidParams(format!(
                "percentile must lie strictly between 0 and 1, got {}",
                self.percentile
            )));
        }
        if self.passes == 0 {
            return Err(WermError::InvalidParams("at least one pass is required".into()));
        }
        Ok(())
    }

    /// Smallest cell count whose area reaches `min_area`.
    pub fn min_cells(&self, cell_size: f64) -> usize {
        let cells = self.min_area / (cell_size * cell_size);
        // absorb representation error such as 100.00000000000001
        (cells - cells * 1e-12).ceil().max(0.0) as usize
    }
}

/// Inclusive cell-index rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBox {
    pub row_min: usize,
    pub col_min: usize,
    pub row_max: usize,
    pub col_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterSegment {
    pub id: u32,
    pub cell_count: usize,
    /// Square meters.
    pub area: f64,
    /// Representative water level; `None` when no cell has a DSM value.
    pub elevation: Option<f64>,
    pub bbox: CellBox,
}

/// Connected components of a mask. Label 0 is background; segment `id`
/// lives at `segments[id - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub georef: GridGeoref,
    pub labels: Vec<u32>,
    pub segments: Vec<WaterSegment>,
    cells: Vec<usize>,
    starts: Vec<usize>,
}

impl Segmentation {
    /// Flat indices of the cells of segment `id`, in discovery order.
    pub fn cells_of(&self, id: u32) -> &[usize] {
        let i = id as usize - 1;
        &self.cells[self.starts[i]..self.starts[i + 1]]
    }

    pub fn segment(&self, id: u32) -> &WaterSegment {
        &self.segments[id as usize - 1]
    }
}

/// 1-indexed nearest rank `ceil(percentile · m)`, clamped to `[1, m]`.
pub fn nearest_rank(m: usize, percentile: f64) -> usize {
    let exact = percentile * m as f64;
    let k = (exact - exact.abs() * 1e-12).ceil();
    (k.max(1.0) as usize).min(m)
}

/// Nearest-rank percentile of the present values; `None` if all are nodata.
/// Reorders `values`.
pub fn segment_elevation(values: &mut [f64], percentile: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let k = nearest_rank(values.len(), percentile);
    let (_, v, _) = values.select_nth_unstable_by(k - 1, f64::total_cmp);
    Some(*v)
}

/// Labels the connected components of `mask` and computes each segment's
/// statistics against `dsm`.
pub fn label_segments(
    mask: &BitMask,
    connectivity: Connectivity,
    dsm: &RasterGrid,
    percentile: f64,
) -> Result<Segmentation, WermError> {
    mask.georef.ensure_aligned(&dsm.georef)?;
    let g = mask.georef;
    let (rows, cols) = (g.n_rows as isize, g.n_cols as isize);
    let offsets = connectivity.offsets();
    let mut labels = vec![0u32; g.len()];
    let mut cells = Vec::new();
    let mut starts = vec![0usize];
    let mut segments = Vec::new();
    let mut queue = VecDeque::new();
    let mut elevations = Vec::new();

    for start in 0..g.len() {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        let id = segments.len() as u32 + 1;
        labels[start] = id;
        queue.push_back(start);
        let first = cells.len();
        let mut bbox = CellBox {
            row_min: usize::MAX,
            col_min: usize::MAX,
            row_max: 0,
            col_max: 0,
        };
        while let Some(i) = queue.pop_front() {
            cells.push(i);
            let (r, c) = ((i / g.n_cols) as isize, (i % g.n_cols) as isize);
            bbox.row_min = bbox.row_min.min(r as usize);
            bbox.row_max = bbox.row_max.max(r as usize);
            bbox.col_min = bbox.col_min.min(c as usize);
            bbox.col_max = bbox.col_max.max(c as usize);
            for &(dr, dc) in offsets {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= rows || nc >= cols {
                    continue;
                }
                let n = (nr * cols + nc) as usize;
                if mask.bits[n] && labels[n] == 0 {
                    labels[n] = id;
                    queue.push_back(n);
                }
            }
        }
        elevations.clear();
        elevations.extend(cells[first..].iter().filter_map(|&i| dsm.value_at(i)));
        let cell_count = cells.len() - first;
        segments.push(WaterSegment {
            id,
            cell_count,
            area: cell_count as f64 * g.cell_area(),
            elevation: segment_elevation(&mut elevations, percentile),
            bbox,
        });
        starts.push(cells.len());
    }

    Ok(Segmentation {
        georef: g,
        labels,
        segments,
        cells,
        starts,
    })
}

/// One round of region merging. The output contains the input mask plus,
/// for every eligible segment, the slice cells connected to it.
pub fn werm_pass(
    water: &BitMask,
    segmentation: &Segmentation,
    dsm: &RasterGrid,
    params: &WermParams,
) -> Result<BitMask, WermError> {
    params.validate()?;
    water.georef.ensure_aligned(&dsm.georef)?;
    water.georef.ensure_aligned(&segmentation.georef)?;
    let g = water.georef;
    let (rows, cols) = (g.n_rows as isize, g.n_cols as isize);
    let offsets = params.connectivity.offsets();
    let min_cells = params.min_cells(g.cell_size);
    let er = params.elevation_range;

    let mut out = water.clone();
    // visited marks hold the id of the segment that last reached a cell
    let mut visited = vec![0u32; g.len()];
    let mut queue = VecDeque::new();

    for seg in &segmentation.segments {
        let Some(level) = seg.elevation else { continue };
        if seg.cell_count < min_cells {
            continue;
        }
        let id = seg.id;
        for &i in segmentation.cells_of(id) {
            visited[i] = id;
            queue.push_back(i);
        }
        while let Some(i) = queue.pop_front() {
            let (r, c) = ((i / g.n_cols) as isize, (i % g.n_cols) as isize);
            for &(dr, dc) in offsets {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= rows || nc >= cols {
                    continue;
                }
                let n = (nr * cols + nc) as usize;
                if visited[n] == id {
                    continue;
                }
                let in_slice = segmentation.labels[n] == id
                    || dsm.value_at(n).is_some_and(|z| (z - level).abs() <= er);
                if in_slice {
                    visited[n] = id;
                    out.bits[n] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    Ok(out)
}

/// Result of the full multi-pass merge.
#[derive(Debug, Clone)]
pub struct WermOutcome {
    pub mask: BitMask,
    /// Segments of the final mask with their final water levels.
    pub segmentation: Segmentation,
    /// Cells added by each pass.
    pub added_per_pass: Vec<usize>,
}

/// Runs `params.passes` rounds, relabeling and re-estimating water levels
/// before each one.
pub fn run_werm(seeds: &BitMask, dsm: &RasterGrid, params: &WermParams) -> Result<WermOutcome, WermError> {
    params.validate()?;
    let mut mask = seeds.clone();
    let mut segmentation = label_segments(&mask, params.connectivity, dsm, params.percentile)?;
    let mut added_per_pass = Vec::with_capacity(params.passes);
    for _ in 0..params.passes {
        let before = mask.count_ones();
        let next = werm_pass(&mask, &segmentation, dsm, params)?;
        let added = next.count_ones() - before;
        added_per_pass.push(added);
        if added == 0 {
            // relabeling an unchanged mask reproduces the same levels, so
            // the remaining passes are no-ops
            added_per_pass.resize(params.passes, 0);
            break;
        }
        mask = next;
        segmentation = label_segments(&mask, params.connectivity, dsm, params.percentile)?;
    }
    Ok(WermOutcome {
        mask,
        segmentation,
        added_per_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::DEFAULT_NODATA;

    fn geo(n_cols: usize, n_rows: usize) -> GridGeoref {
        GridGeoref::new(0.0, 0.0, 1.0, n_cols, n_rows).unwrap()
    }

    fn flat(g: GridGeoref, z: f64) -> RasterGrid {
        RasterGrid::filled(g, z, DEFAULT_NODATA)
    }

    #[test]
    fn diagonal_cells_depend_on_connectivity() {
        let g = geo(3, 3);
        let mut m = BitMask::empty(g);
        m.set(0, 0, true);
        m.set(1, 1, true);
        let dsm = flat(g, 0.0);
        let eight = label_segments(&m, Connectivity::Eight, &dsm, 0.1).unwrap();
        let four = label_segments(&m, Connectivity::Four, &dsm, 0.1).unwrap();
        assert_eq!(eight.segments.len(), 1);
        assert_eq!(four.segments.len(), 2);
    }

    #[test]
    fn empty_mask_has_no_segments() {
        let g = geo(5, 4);
        let s = label_segments(&BitMask::empty(g), Connectivity::Eight, &flat(g, 1.0), 0.1).unwrap();
        assert!(s.segments.is_empty());
        assert!(s.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn segment_stats() {
        let g = GridGeoref::new(0.0, 0.0, 0.5, 6, 4).unwrap();
        let mut m = BitMask::empty(g);
        let mut dsm = RasterGrid::nodata_grid(g, DEFAULT_NODATA);
        for (k, c) in (1..5).enumerate() {
            m.set(2, c, true);
            dsm.values[g.index(2, c)] = 10.0 + k as f64;
        }
        dsm.values[g.index(2, 4)] = DEFAULT_NODATA;
        let s = label_segments(&m, Connectivity::Eight, &dsm, 0.5).unwrap();
        let seg = &s.segments[0];
        assert_eq!(seg.cell_count, 4);
        assert_eq!(seg.area, 1.0);
        // values 10, 11, 12: rank ceil(1.5) = 2
        assert_eq!(seg.elevation, Some(11.0));
        assert_eq!(
            seg.bbox,
            CellBox { row_min: 2, col_min: 1, row_max: 2, col_max: 4 }
        );
        assert_eq!(s.cells_of(1).len(), 4);
    }

    #[test]
    fn nearest_rank_definition() {
        let mut v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(segment_elevation(&mut v, 0.10), Some(1.0));
        assert_eq!(segment_elevation(&mut [], 0.10), None);
        assert_eq!(nearest_rank(30, 0.1), 3);
        assert_eq!(nearest_rank(1, 0.1), 1);
        assert_eq!(nearest_rank(7, 0.99), 7);
    }

    #[test]
    fn min_cells_rounds_up() {
        let p = WermParams::default();
        assert_eq!(p.min_cells(0.5), 2000);
        assert_eq!(WermParams { min_area: 100.0, ..p }.min_cells(0.1), 10000);
        assert_eq!(WermParams { min_area: 1.0, ..p }.min_cells(0.3), 12);
        assert_eq!(WermParams { min_area: 0.0, ..p }.min_cells(0.5), 0);
    }

    #[test]
    fn invalid_params() {
        let p = WermParams::default();
        for bad in [
            WermParams { elevation_range: 0.0, ..p },
            WermParams { min_area: -1.0, ..p },
            WermParams { percentile: 0.0, ..p },
            WermParams { percentile: 1.0, ..p },
            WermParams { passes: 0, ..p },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn plateau_merges_entirely() {
        let g = geo(40, 40);
        let mut dsm = flat(g, 5.0);
        for r in 10..30 {
            for c in 10..30 {
                dsm.values[g.index(r, c)] = 2.0 + if (r + c) % 2 == 0 { 0.03 } else { -0.03 };
            }
        }
        let mut seeds = BitMask::empty(g);
        for r in 15..25 {
            for c in 15..25 {
                seeds.set(r, c, true);
            }
        }
        let params = WermParams { min_area: 50.0, ..Default::default() };
        let seg = label_segments(&seeds, params.connectivity, &dsm, params.percentile).unwrap();
        let out = werm_pass(&seeds, &seg, &dsm, &params).unwrap();
        assert_eq!(out.count_ones(), 400);
        for r in 0..40 {
            for c in 0..40 {
                assert_eq!(out.get(r, c), (10..30).contains(&r) && (10..30).contains(&c));
            }
        }
    }

    #[test]
    fn small_seed_is_not_extended() {
        let g = geo(40, 40);
        let dsm = flat(g, 2.0);
        let mut seeds = BitMask::empty(g);
        for r in 0..5 {
            for c in 0..5 {
                seeds.set(r, c, true);
            }
        }
        // 25 m² against the 500 m² default
        let params = WermParams::default();
        let out = run_werm(&seeds, &dsm, &params).unwrap();
        assert_eq!(out.mask, seeds);
    }

    #[test]
    fn nodata_seed_cells_conduct_connectivity() {
        let g = geo(10, 1);
        let mut dsm = flat(g, 1.0);
        for c in 0..4 {
            dsm.values[c] = DEFAULT_NODATA;
        }
        dsm.values[0] = 1.0;
        let mut seeds = BitMask::empty(g);
        for c in 0..4 {
            seeds.set(0, c, true);
        }
        let params = WermParams { min_area: 0.0, ..Default::default() };
        let out = run_werm(&seeds, &dsm, &params).unwrap();
        assert_eq!(out.mask.count_ones(), 10);
    }

    #[test]
    fn segment_without_values_is_not_extended() {
        let g = geo(10, 1);
        let mut dsm = flat(g, 1.0);
        dsm.values[0] = DEFAULT_NODATA;
        let mut seeds = BitMask::empty(g);
        seeds.set(0, 0, true);
        let params = WermParams { min_area: 0.0, ..Default::default() };
        let out = run_werm(&seeds, &dsm, &params).unwrap();
        assert_eq!(out.mask, seeds);
        assert_eq!(out.segmentation.segments[0].elevation, None);
    }

    #[test]
    fn empty_seeds_give_empty_output() {
        let g = geo(10, 10);
        let out = run_werm(&BitMask::empty(g), &flat(g, 0.0), &WermParams::default()).unwrap();
        assert_eq!(out.mask.count_ones(), 0);
        assert!(out.segmentation.segments.is_empty());
    }

    #[test]
    fn connectivity_parses_from_text_and_serde() {
        assert_eq!("4".parse::<Connectivity>().unwrap(), Connectivity::Four);
        assert!("6".parse::<Connectivity>().is_err());
        let json = serde_json::to_string(&Connectivity::Eight).unwrap();
        assert_eq!(json, "8");
    }
}
