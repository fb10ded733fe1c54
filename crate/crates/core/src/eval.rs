//! Confusion-matrix metrics and tile-based evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{BitMask, GridGeoref, RasterError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("invalid tiling: {0}")]
    Tiling(String),
}

/// Counts plus derived rates. A rate is `None` when its denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub oa: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub iou: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl EvalReport {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        EvalReport {
            tp,
            fp,
            fn_,
            tn,
            oa: ratio(tp + tn, tp + tn + fp + fn_),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            iou: ratio(tp, tp + fp + fn_),
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&self, other: &EvalReport) -> EvalReport {
        EvalReport::from_counts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn_ + other.fn_,
            self.tn + other.tn,
        )
    }
}

impl Default for EvalReport {
    fn default() -> Self {
        EvalReport::from_counts(0, 0, 0, 0)
    }
}

/// Confusion counts over the cells where `valid` is set (all cells when
/// absent).
pub fn confusion(pred: &BitMask, truth: &BitMask, valid: Option<&BitMask>) -> Result<EvalReport, EvalError> {
    pred.georef.ensure_aligned(&truth.georef)?;
    if let Some(v) = valid {
        pred.georef.ensure_aligned(&v.georef)?;
    }
    let g = pred.georef;
    Ok(confusion_in(pred, truth, valid, 0..g.n_rows, 0..g.n_cols))
}

fn confusion_in(
    pred: &BitMask,
    truth: &BitMask,
    valid: Option<&BitMask>,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) -> EvalReport {
    let n_cols = pred.georef.n_cols;
    let mut c = [0u64; 4];
    for row in rows {
        let span = row * n_cols + cols.start..row * n_cols + cols.end;
        for i in span {
            if valid.is_some_and(|v| !v.bits[i]) {
                continue;
            }
            c[(pred.bits[i] as usize) << 1 | truth.bits[i] as usize] += 1;
        }
    }
    // index = pred·2 + truth
    EvalReport::from_counts(c[3], c[2], c[1], c[0])
}

/// Partition of a grid into `n_x` by `n_y` near-equal tiles. Tile ids run
/// row-major from the north-west corner; the last row and column absorb the
/// remainder cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tiling {
    pub n_x: usize,
    pub n_y: usize,
}

/// Cell-index extent of one tile (half-open ranges).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileBounds {
    pub id: usize,
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl Tiling {
    pub fn new(n_x: usize, n_y: usize) -> Self {
        Tiling { n_x, n_y }
    }

    pub fn tile_count(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn tiles(&self, georef: &GridGeoref) -> Result<Vec<TileBounds>, EvalError> {
        if self.n_x == 0 || self.n_y == 0 {
            return Err(EvalError::Tiling("tile counts must be positive".into()));
        }
        if self.n_x > georef.n_cols || self.n_y > georef.n_rows {
            return Err(EvalError::Tiling(format!(
                "{}x{} tiles do not fit a {}x{} grid",
                self.n_x, self.n_y, georef.n_cols, georef.n_rows
            )));
        }
        let tw = georef.n_cols / self.n_x;
        let th = georef.n_rows / self.n_y;
        let mut out = Vec::with_capacity(self.tile_count());
        for ty in 0..self.n_y {
            let row_start = ty * th;
            let row_end = if ty + 1 == self.n_y { georef.n_rows } else { row_start + th };
            for tx in 0..self.n_x {
                let col_start = tx * tw;
                let col_end = if tx + 1 == self.n_x { georef.n_cols } else { col_start + tw };
                out.push(TileBounds {
                    id: ty * self.n_x + tx,
                    row_start,
                    row_end,
                    col_start,
                    col_end,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileReport {
    pub tile: TileBounds,
    pub excluded: bool,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEvaluation {
    pub tiles: Vec<TileReport>,
    /// Metrics from the summed counts of the included tiles; `None` when
    /// every tile is excluded.
    pub pooled: Option<EvalReport>,
    /// Unweighted means of the per-tile rates over included tiles where the
    /// rate is defined.
    pub mean_oa: Option<f64>,
    pub mean_iou: Option<f64>,
    pub mean_f1: Option<f64>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn tile_eval(
    pred: &BitMask,
    truth: &BitMask,
    valid: Option<&BitMask>,
    tiling: Tiling,
    exclude: &[usize],
) -> Result<TileEvaluation, EvalError> {
    pred.georef.ensure_aligned(&truth.georef)?;
    if let Some(v) = valid {
        pred.georef.ensure_aligned(&v.georef)?;
    }
    let tiles: Vec<TileReport> = tiling
        .tiles(&pred.georef)?
        .into_iter()
        .map(|t| TileReport {
            tile: t,
            excluded: exclude.contains(&t.id),
            report: confusion_in(pred, truth, valid, t.row_start..t.row_end, t.col_start..t.col_end),
        })
        .collect();
    let included = || tiles.iter().filter(|t| !t.excluded);
    let pooled = included()
        .map(|t| t.report)
        .reduce(|a, b| a.add(&b));
    Ok(TileEvaluation {
        pooled,
        mean_oa: mean(included().map(|t| t.report.oa)),
        mean_iou: mean(included().map(|t| t.report.iou)),
        mean_f1: mean(included().map(|t| t.report.f1)),
        tiles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileDifference {
    pub tile_id: usize,
    pub iou_a: f64,
    pub iou_b: f64,
    pub abs_diff: f64,
}

/// The `k` tiles with the largest IoU gap between two evaluations of the
/// same tiling, ties by ascending id. Tiles excluded in either evaluation or
/// with undefined IoU are skipped.
pub fn divergent_tiles(a: &[TileReport], b: &[TileReport], k: usize) -> Vec<TileDifference> {
    let mut diffs: Vec<TileDifference> = a
        .iter()
        .zip(b)
        .filter(|(ta, tb)| !ta.excluded && !tb.excluded)
        .filter_map(|(ta, tb)| {
            let (ia, ib) = (ta.report.iou?, tb.report.iou?);
            Some(TileDifference {
                tile_id: ta.tile.id,
                iou_a: ia,
                iou_b: ib,
                abs_diff: (ia - ib).abs(),
            })
        })
        .collect();
    diffs.sort_by(|x, y| y.abs_diff.total_cmp(&x.abs_diff).then(x.tile_id.cmp(&y.tile_id)));
    diffs.truncate(k);
    diffs
}
