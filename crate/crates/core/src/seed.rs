//! Initial water cells from local point-density dropouts.
//!
//! Every cell is tested against a binomial model of the occupied-cell count
//! in the window centred on it. With `P` the scene-wide fraction of occupied
//! cells, the count in an `N`-cell window is modelled as `B(N, p)` where `p`
//! is `P/2` by default. Halving `P` absorbs the density surplus of
//! overlapping flight lines, so only windows well below an ordinary
//! single-strip density are flagged. A cell is water when its window count
//! falls below the lower confidence bound `N·p − Z·sqrt(N·p·(1 − p))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

use crate::raster::{occupancy_counts, BitMask, RasterError};

#[derive(Debug, Error)]
pub enum SeedError {
    #[error("invalid seed parameters: {0}")]
    InvalidParams(String),
    #[error("empty scene: no cell holds a point")]
    EmptyScene,
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Which cells count toward the scene-wide occupancy fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityDenominator {
    /// Every cell of the grid.
    #[default]
    FullExtent,
    /// Cells inside the bounding rectangle of occupied rows and columns.
    DataHull,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedParams {
    /// Side of the square sliding window, in cells. Odd, at least 3.
    pub window_side: usize,
    /// Critical z-score of the lower confidence bound.
    pub z_score: f64,
    /// Test against `P/2` instead of `P`.
    pub density_halving: bool,
    /// Clearing radius around building cells, meters.
    pub building_buffer_radius: f64,
    /// Use the exact binomial quantile at `Φ(−Z)` instead of the normal bound.
    pub exact_binomial: bool,
    pub density_denominator: DensityDenominator,
}

impl Default for SeedParams {
    fn default() -> Self {
        SeedParams {
            window_side: 9,
            z_score: 2.0,
            density_halving: true,
            building_buffer_radius: 10.0,
            exact_binomial: false,
            density_denominator: DensityDenominator::FullExtent,
        }
    }
}

impl SeedParams {
    pub fn validate(&self) -> Result<(), SeedError> {
        if self.window_side < 3 || self.window_side.is_multiple_of(2) {
            return Err(SeedError::InvalidParams(format!(
                "window side must be odd and at least 3, got {}",
                self.window_side
            )));
        }
        if !(self.z_score > 0.0 && self.z_score.is_finite()) {
            return Err(SeedError::InvalidParams(format!(
                "z-score must be positive, got {}",
                self.z_score
            )));
        }
        if !(self.building_buffer_radius >= 0.0 && self.building_buffer_radius.is_finite()) {
            return Err(SeedError::InvalidParams(format!(
                "building buffer radius must be non-negative, got {}",
                self.building_buffer_radius
            )));
        }
        Ok(())
    }

    pub fn window_cells(&self) -> usize {
        self.window_side * self.window_side
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityStats {
    /// Scene-wide occupied fraction `P`.
    pub p_global: f64,
    /// Success probability of the window model (`P/2` when halving).
    pub p_test: f64,
    /// Normal lower bound for a full window.
    pub threshold_real: f64,
    /// Exact-mode cut-off for a full window: counts at or below it are
    /// water. `None` in normal mode, or when no count qualifies.
    pub exact_quantile: Option<usize>,
    pub occupied_cells: usize,
    /// Cells in the denominator of `p_global`.
    pub denominator_cells: usize,
    pub total_cells: usize,
    pub hull_cells: usize,
}

/// `n·p − z·sqrt(n·p·(1 − p))`.
pub fn normal_lower_bound(n: usize, p: f64, z: f64) -> f64 {
    let n = n as f64;
    n * p - z * (n * p * (1.0 - p)).sqrt()
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// `P(X ≤ k)` for `X ~ B(n, p)`, summed in log space so large windows do
/// not underflow.
pub fn binomial_cdf(k: usize, n: usize, p: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let sum: f64 = (0..=k)
        .map(|i| (ln_binomial(n as u64, i as u64) + i as f64 * lp + (n - i) as f64 * lq).exp())
        .sum();
    sum.min(1.0)
}

/// Largest `k` with `P(X ≤ k) ≤ alpha` for `X ~ B(n, p)`, or `None` when even
/// `P(X = 0)` exceeds `alpha`.
pub fn binomial_lower_quantile(n: usize, p: f64, alpha: f64) -> Option<usize> {
    let mut best = None;
    for k in 0..=n {
        if binomial_cdf(k, n, p) <= alpha {
            best = Some(k);
        } else {
            break;
        }
    }
    best
}

pub fn density_stats(occ: &BitMask, params: &SeedParams) -> Result<DensityStats, SeedError> {
    params.validate()?;
    let counts = occupancy_counts(occ);
    if counts.occupied == 0 {
        return Err(SeedError::EmptyScene);
    }
    let denominator_cells = match params.density_denominator {
        DensityDenominator::FullExtent => counts.total_cells,
        DensityDenominator::DataHull => counts.hull_cells,
    };
    let p_global = counts.occupied as f64 / denominator_cells as f64;
    let p_test = if params.density_halving {
        p_global / 2.0
    } else {
        p_global
    };
    let n = params.window_cells();
    let exact_quantile = if params.exact_binomial {
        binomial_lower_quantile(n, p_test, standard_normal_cdf(-params.z_score))
    } else {
        None
    };
    Ok(DensityStats {
        p_global,
        p_test,
        threshold_real: normal_lower_bound(n, p_test, params.z_score),
        exact_quantile,
        occupied_cells: counts.occupied,
        denominator_cells,
        total_cells: counts.total_cells,
        hull_cells: counts.hull_cells,
    })
}

/// Per-window-size decision rule; windows clipped at the grid border have
/// fewer cells and get their own bound.
enum Decision {
    Normal(Vec<f64>),
    Exact(Vec<Option<usize>>),
}

impl Decision {
    fn new(max_cells: usize, p: f64, params: &SeedParams) -> Self {
        if params.exact_binomial {
            let alpha = standard_normal_cdf(-params.z_score);
            Decision::Exact(
                (0..=max_cells)
                    .map(|n| binomial_lower_quantile(n, p, alpha))
                    .collect(),
            )
        } else {
            Decision::Normal(
                (0..=max_cells)
                    .map(|n| normal_lower_bound(n, p, params.z_score))
                    .collect(),
            )
        }
    }

    #[inline]
    fn is_water(&self, count: u32, window_cells: usize) -> bool {
        match self {
            Decision::Normal(bounds) => (count as f64) < bounds[window_cells],
            Decision::Exact(quantiles) => {
                quantiles[window_cells].is_some_and(|k| count as usize <= k)
            }
        }
    }
}

/// Summed-area table with a zero guard row and column.
fn integral_image(mask: &BitMask) -> Vec<u32> {
    let g = mask.georef;
    let w = g.n_cols + 1;
    let mut sat = vec![0u32; w * (g.n_rows + 1)];
    for row in 0..g.n_rows {
        let mut running = 0u32;
        for col in 0..g.n_cols {
            running += mask.bits[row * g.n_cols + col] as u32;
            sat[(row + 1) * w + col + 1] = sat[row * w + col + 1] + running;
        }
    }
    sat
}

/// Marks cells whose clipped window holds too few occupied cells.
pub fn classify_seeds(occ: &BitMask, stats: &DensityStats, params: &SeedParams) -> BitMask {
    let g = occ.georef;
    let half = params.window_side / 2;
    let decision = Decision::new(params.window_cells(), stats.p_test, params);
    let sat = integral_image(occ);
    let w = g.n_cols + 1;

    let mut bits = vec![false; g.len()];
    bits.par_chunks_mut(g.n_cols)
        .enumerate()
        .for_each(|(row, out)| {
            let r0 = row.saturating_sub(half);
            let r1 = (row + half + 1).min(g.n_rows);
            for (col, cell) in out.iter_mut().enumerate() {
                let c0 = col.saturating_sub(half);
                let c1 = (col + half + 1).min(g.n_cols);
                let count = sat[r1 * w + c1] + sat[r0 * w + c0] - sat[r0 * w + c1] - sat[r1 * w + c0];
                *cell = decision.is_water(count, (r1 - r0) * (c1 - c0));
            }
        });
    BitMask { georef: g, bits }
}

/// Squared Euclidean distance, in cells², from every cell to the nearest set
/// cell; `f64::INFINITY` when the mask is empty.
pub fn squared_distance_transform(mask: &BitMask) -> Vec<f64> {
    let g = mask.georef;
    let (rows, cols) = (g.n_rows, g.n_cols);
    let mut grid: Vec<f64> = mask
        .bits
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();

    // columns first, then rows
    let mut transposed = vec![f64::INFINITY; grid.len()];
    transposed
        .par_chunks_mut(rows)
        .enumerate()
        .for_each_init(
            || (vec![0.0; rows], vec![0.0; rows]),
            |(input, output), (col, out)| {
                for row in 0..rows {
                    input[row] = grid[row * cols + col];
                }
                lower_envelope_1d(input, output);
                out.copy_from_slice(output);
            },
        );
    grid.par_chunks_mut(cols)
        .enumerate()
        .for_each_init(
            || (vec![0.0; cols], vec![0.0; cols]),
            |(input, output), (row, out)| {
                for col in 0..cols {
                    input[col] = transposed[col * rows + row];
                }
                lower_envelope_1d(input, output);
                out.copy_from_slice(output);
            },
        );
    grid
}

/// One-dimensional squared distance transform by the lower envelope of
/// parabolas rooted at the finite samples.
fn lower_envelope_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut roots: Vec<usize> = Vec::with_capacity(n);
    let mut bounds: Vec<f64> = Vec::with_capacity(n + 1);
    for q in (0..n).filter(|&q| f[q].is_finite()) {
        let fq = f[q] + (q * q) as f64;
        loop {
            let Some(&v) = roots.last() else {
                roots.push(q);
                bounds.clear();
                bounds.push(f64::NEG_INFINITY);
                break;
            };
            let s = (fq - (f[v] + (v * v) as f64)) / (2.0 * (q as f64 - v as f64));
            if s <= *bounds.last().unwrap() {
                roots.pop();
                bounds.pop();
                continue;
            }
            roots.push(q);
            bounds.push(s);
            break;
        }
    }
    if roots.is_empty() {
        d.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while k + 1 < roots.len() && bounds[k + 1] < q as f64 {
            k += 1;
        }
        let v = roots[k];
        let dq = q as f64 - v as f64;
        *out = dq * dq + f[v];
    }
}

/// Clears seeds whose cell centre lies within `radius` meters of any
/// building cell centre.
pub fn apply_building_buffer(
    seeds: &BitMask,
    buildings: &BitMask,
    radius: f64,
) -> Result<BitMask, SeedError> {
    seeds.georef.ensure_aligned(&buildings.georef)?;
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(SeedError::InvalidParams(format!(
            "building buffer radius must be non-negative, got {radius}"
        )));
    }
    if !buildings.bits.contains(&true) {
        return Ok(seeds.clone());
    }
    let dist2 = squared_distance_transform(buildings);
    let cell2 = seeds.georef.cell_area();
    let r2 = radius * radius;
    let bits = seeds
        .bits
        .iter()
        .zip(&dist2)
        .map(|(&s, &d2)| s && !(d2 * cell2 <= r2))
        .collect();
    Ok(BitMask {
        georef: seeds.georef,
        bits,
    })
}
