//! NDWI comparison baseline with truth-tuned thresholds.
//!
//! Both variants are oracles in the sense that they pick thresholds using
//! the reference map: one threshold for the whole scene (global) or one per
//! tile (local). They bound what NDWI thresholding could achieve at best.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalError, TileBounds, Tiling};
use crate::raster::{BitMask, RasterError, RasterGrid};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Tiling(#[from] EvalError),
    #[error("NDWI raster has no valid cells")]
    AllNodata,
    #[error("invalid threshold search: {0}")]
    InvalidSearch(String),
}

/// `(G − NIR) / (G + NIR)`; nodata where either band is missing or the sum
/// is zero. The output uses the green band's nodata value.
pub fn ndwi(green: &RasterGrid, nir: &RasterGrid) -> Result<RasterGrid, BaselineError> {
    green.georef.ensure_aligned(&nir.georef)?;
    let nodata = green.nodata;
    let values = green
        .values
        .par_iter()
        .zip(&nir.values)
        .map(|(&g, &n)| {
            if g == green.nodata || n == nir.nodata {
                return nodata;
            }
            let sum = g + n;
            if sum == 0.0 {
                nodata
            } else {
                (g - n) / sum
            }
        })
        .collect();
    Ok(RasterGrid {
        georef: green.georef,
        values,
        nodata,
    })
}

/// Water where NDWI is present and at least `t`.
pub fn threshold_map(ndwi: &RasterGrid, t: f64) -> BitMask {
    BitMask::from_raster(ndwi, |v| v >= t)
}

/// Uniform grid of candidate thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    pub t_min: f64,
    pub t_max: f64,
    pub steps: usize,
}

impl Default for ThresholdSearch {
    fn default() -> Self {
        ThresholdSearch {
            t_min: -1.0,
            t_max: 1.0,
            steps: 201,
        }
    }
}

impl ThresholdSearch {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.t_min < self.t_max) || !self.t_min.is_finite() || !self.t_max.is_finite() {
            return Err(BaselineError::InvalidSearch(format!(
                "need t_min < t_max, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if self.steps < 2 {
            return Err(BaselineError::InvalidSearch(format!(
                "need at least 2 steps, got {}",
                self.steps
            )));
        }
        Ok(())
    }

    /// `t_i = t_min + i·(t_max − t_min)/(steps − 1)`.
    pub fn thresholds(&self) -> Vec<f64> {
        let span = self.t_max - self.t_min;
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.t_max
                } else {
                    self.t_min + span * i as f64 / last
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub oa: f64,
}

/// Best-OA threshold over a block of cells. Each valid cell is predicted
/// water for exactly the thresholds at or below its value, so per-threshold
/// counts follow from suffix sums over a histogram of those cut-off indices.
fn best_threshold_in(
    ndwi: &RasterGrid,
    truth: &BitMask,
    thresholds: &[f64],
    tile: &TileBounds,
) -> Option<ThresholdChoice> {
    let n_cols = ndwi.georef.n_cols;
    let steps = thresholds.len();
    let mut water_hist = vec![0u64; steps + 1];
    let mut land_hist = vec![0u64; steps + 1];
    let (mut total, mut valid, mut invalid_land) = (0u64, 0u64, 0u64);
    for row in tile.row_start..tile.row_end {
        for i in row * n_cols + tile.col_start..row * n_cols + tile.col_end {
            total += 1;
            let is_water = truth.bits[i];
            match ndwi.value_at(i) {
                None => invalid_land += !is_water as u64,
                Some(v) => {
                    valid += 1;
                    let k = thresholds.partition_point(|&t| t <= v);
                    if is_water {
                        water_hist[k] += 1;
                    } else {
                        land_hist[k] += 1;
                    }
                }
            }
        }
    }
    if valid == 0 {
        return None;
    }
    let land_valid: u64 = land_hist.iter().sum();
    // cells with cut-off index > i are water at threshold i
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut best: Option<(u64, usize)> = None;
    for i in (0..steps).rev() {
        tp += water_hist[i + 1];
        fp += land_hist[i + 1];
        let correct = tp + (land_valid - fp) + invalid_land;
        // scanning downward, strict > keeps the larger threshold on ties
        if best.is_none_or(|(c, _)| correct > c) {
            best = Some((correct, i));
        }
    }
    let (correct, i) = best?;
    Some(ThresholdChoice {
        threshold: thresholds[i],
        oa: correct as f64 / total as f64,
    })
}

/// Threshold from the search grid that maximizes overall accuracy against
/// `truth`; ties go to the larger threshold.
pub fn optimal_threshold(
    ndwi: &RasterGrid,
    truth: &BitMask,
    search: &ThresholdSearch,
) -> Result<ThresholdChoice, BaselineError> {
    search.validate()?;
    ndwi.georef.ensure_aligned(&truth.georef)?;
    let g = ndwi.georef;
    let whole = TileBounds {
        id: 0,
        row_start: 0,
        row_end: g.n_rows,
        col_start: 0,
        col_end: g.n_cols,
    };
    best_threshold_in(ndwi, truth, &search.thresholds(), &whole).ok_or(BaselineError::AllNodata)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileThreshold {
    pub tile: TileBounds,
    /// `None` for tiles without a valid NDWI cell; they map to no water.
    pub choice: Option<ThresholdChoice>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOptimum {
    pub mask: BitMask,
    pub tiles: Vec<TileThreshold>,
}

/// Per-tile optimal thresholds stitched into one mask.
pub fn local_optimal_map(
    ndwi: &RasterGrid,
    truth: &BitMask,
    tiling: Tiling,
    search: &ThresholdSearch,
) -> Result<LocalOptimum, BaselineError> {
    search.validate()?;
    ndwi.georef.ensure_aligned(&truth.georef)?;
    let thresholds = search.thresholds();
    let tiles: Vec<TileThreshold> = tiling
        .tiles(&ndwi.georef)?
        .into_par_iter()
        .map(|tile| TileThreshold {
            tile,
            choice: best_threshold_in(ndwi, truth, &thresholds, &tile),
        })
        .collect();
    let g = ndwi.georef;
    let mut mask = BitMask::empty(g);
    for t in &tiles {
        let Some(choice) = t.choice else { continue };
        for row in t.tile.row_start..t.tile.row_end {
            for i in row * g.n_cols + t.tile.col_start..row * g.n_cols + t.tile.col_end {
                mask.bits[i] = ndwi.value_at(i).is_some_and(|v| v >= choice.threshold);
            }
        }
    }
    Ok(LocalOptimum { mask, tiles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GridGeoref, DEFAULT_NODATA};

    fn grid(values: Vec<f64>, n_cols: usize) -> RasterGrid {
        let n_rows = values.len() / n_cols;
        RasterGrid::from_values(
            GridGeoref::new(0.0, 0.0, 1.0, n_cols, n_rows).unwrap(),
            values,
            DEFAULT_NODATA,
        )
        .unwrap()
    }

    #[test]
    fn ndwi_formula_and_guards() {
        let g = grid(vec![0.2, 0.3, 0.0, DEFAULT_NODATA], 4);
        let n = grid(vec![0.1, 0.3, 0.0, 0.5], 4);
        let out = ndwi(&g, &n).unwrap();
        assert!((out.values[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(out.values[1], 0.0);
        assert_eq!(out.get(0, 2), None);
        assert_eq!(out.get(0, 3), None);
    }

    #[test]
    fn ndwi_requires_matching_grids() {
        assert!(ndwi(&grid(vec![1.0; 4], 4), &grid(vec![1.0; 4], 2)).is_err());
    }

    #[test]
    fn threshold_extremes() {
        let r = grid(vec![-0.5, 0.0, 0.7, DEFAULT_NODATA], 4);
        assert_eq!(threshold_map(&r, -1.0).count_ones(), 3);
        assert_eq!(threshold_map(&r, 0.7 + 1e-9).count_ones(), 0);
    }

    #[test]
    fn thresholds_grid() {
        let t = ThresholdSearch::default().thresholds();
        assert_eq!(t.len(), 201);
        assert_eq!(t[0], -1.0);
        assert_eq!(t[200], 1.0);
        assert!((t[130] - 0.3).abs() < 1e-12);
        assert!(ThresholdSearch { steps: 1, ..Default::default() }.validate().is_err());
        assert!(ThresholdSearch { t_min: 1.0, t_max: 1.0, steps: 5 }.validate().is_err());
    }

    #[test]
    fn constant_ndwi_all_water() {
        let r = grid(vec![0.25; 12], 4);
        let truth = BitMask::full(r.georef);
        let c = optimal_threshold(&r, &truth, &ThresholdSearch::default()).unwrap();
        assert_eq!(c.oa, 1.0);
        assert!(c.threshold <= 0.25);
        // ties toward the larger threshold: the largest grid value ≤ 0.25
        assert!((c.threshold - 0.25).abs() < 1e-12);
    }

    #[test]
    fn all_nodata_is_an_error() {
        let r = grid(vec![DEFAULT_NODATA; 4], 2);
        let truth = BitMask::empty(r.georef);
        assert!(matches!(
            optimal_threshold(&r, &truth, &ThresholdSearch::default()),
            Err(BaselineError::AllNodata)
        ));
    }

    #[test]
    fn nodata_tile_maps_to_land() {
        let mut v = vec![0.5; 8];
        v[0] = DEFAULT_NODATA;
        v[1] = DEFAULT_NODATA;
        v[4] = DEFAULT_NODATA;
        v[5] = DEFAULT_NODATA;
        let r = grid(v, 4);
        let truth = BitMask::full(r.georef);
        let local = local_optimal_map(&r, &truth, Tiling::new(2, 1), &ThresholdSearch::default()).unwrap();
        assert_eq!(local.tiles[0].choice, None);
        assert_eq!(local.tiles[1].choice.unwrap().oa, 1.0);
        assert_eq!(local.mask.count_ones(), 4);
    }
}
