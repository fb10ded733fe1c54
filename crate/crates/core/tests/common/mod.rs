//! Brute-force reference implementations and random scene builders shared
//! by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};

use waterline::raster::{BitMask, GridGeoref, RasterGrid, DEFAULT_NODATA};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn georef(n_cols: usize, n_rows: usize, cell_size: f64) -> GridGeoref {
    GridGeoref::new(1000.0, 2000.0, cell_size, n_cols, n_rows).unwrap()
}

/// Largest k with `P[X ≤ k] ≤ Φ(−z)` for X ~ B(n, p), by direct CDF scan.
pub fn exact_quantile_oracle(n: usize, p: f64, z: f64) -> Option<usize> {
    let alpha = Normal::new(0.0, 1.0).unwrap().cdf(-z);
    let b = Binomial::new(p, n as u64).unwrap();
    let mut best = None;
    for k in 0..=n {
        if b.cdf(k as u64) <= alpha {
            best = Some(k);
        } else {
            break;
        }
    }
    best
}

/// Per-cell window count by direct summation; windows clipped at borders.
pub fn seed_oracle(occ: &BitMask, p: f64, z: f64, window: usize, exact: bool) -> BitMask {
    let g = occ.georef;
    let h = (window / 2) as isize;
    let mut out = BitMask::empty(g);
    let mut quantiles = std::collections::HashMap::new();
    for r in 0..g.n_rows as isize {
        for c in 0..g.n_cols as isize {
            let (mut count, mut n) = (0usize, 0usize);
            for rr in r - h..=r + h {
                for cc in c - h..=c + h {
                    if rr < 0 || cc < 0 || rr >= g.n_rows as isize || cc >= g.n_cols as isize {
                        continue;
                    }
                    n += 1;
                    count += occ.get(rr as usize, cc as usize) as usize;
                }
            }
            let water = if exact {
                let k = *quantiles
                    .entry(n)
                    .or_insert_with(|| exact_quantile_oracle(n, p, z));
                k.is_some_and(|k| count <= k)
            } else {
                let nf = n as f64;
                let bound = nf * p - z * (nf * p * (1.0 - p)).sqrt();
                (count as f64) < bound
            };
            out.set(r as usize, c as usize, water);
        }
    }
    out
}

fn neighbours(g: &GridGeoref, i: usize, eight: bool) -> Vec<usize> {
    let (r, c) = ((i / g.n_cols) as isize, (i % g.n_cols) as isize);
    let mut out = Vec::with_capacity(8);
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            if (dr == 0 && dc == 0) || (!eight && dr != 0 && dc != 0) {
                continue;
            }
            let (nr, nc) = (r + dr, c + dc);
            if nr >= 0 && nc >= 0 && nr < g.n_rows as isize && nc < g.n_cols as isize {
                out.push(nr as usize * g.n_cols + nc as usize);
            }
        }
    }
    out
}

/// Connected components by depth-first search; returns a label per cell
/// (0 = background) and the member list of each component, numbered in
/// order of their first cell in row-major order.
pub fn components_oracle(bits: &[bool], g: &GridGeoref, eight: bool) -> (Vec<u32>, Vec<Vec<usize>>) {
    let mut labels = vec![0u32; bits.len()];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for s in 0..bits.len() {
        if !bits[s] || labels[s] != 0 {
            continue;
        }
        let id = comps.len() as u32 + 1;
        let mut members = Vec::new();
        let mut stack = vec![s];
        labels[s] = id;
        while let Some(i) = stack.pop() {
            members.push(i);
            for n in neighbours(g, i, eight) {
                if bits[n] && labels[n] == 0 {
                    labels[n] = id;
                    stack.push(n);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    (labels, comps)
}

/// Nearest-rank percentile by full sort.
pub fn percentile_oracle(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    // smallest k whose rank fraction k/m reaches p
    let k = (1..=m).find(|&k| k as f64 >= p * m as f64 - 1e-9).unwrap_or(m);
    Some(v[k.max(1) - 1])
}

/// One merge round computed from scratch: for each eligible component of
/// `water`, label the slice united with the component and add every slice
/// piece that touches it.
pub fn werm_pass_oracle(
    water: &BitMask,
    dsm: &RasterGrid,
    er: f64,
    min_area: f64,
    percentile: f64,
    eight: bool,
) -> BitMask {
    let g = water.georef;
    let (_, comps) = components_oracle(&water.bits, &g, eight);
    let mut out = water.clone();
    for comp in &comps {
        if (comp.len() as f64) * g.cell_size * g.cell_size < min_area - 1e-9 {
            continue;
        }
        let values: Vec<f64> = comp.iter().filter_map(|&i| dsm.value_at(i)).collect();
        let Some(w) = percentile_oracle(&values, percentile) else { continue };
        let mut region = vec![false; g.len()];
        for (i, r) in region.iter_mut().enumerate() {
            *r = dsm.value_at(i).is_some_and(|z| (z - w).abs() <= er);
        }
        for &i in comp {
            region[i] = true;
        }
        let (labels, _) = components_oracle(&region, &g, eight);
        let touching: std::collections::HashSet<u32> = comp.iter().map(|&i| labels[i]).collect();
        for (i, &l) in labels.iter().enumerate() {
            if l != 0 && touching.contains(&l) {
                out.bits[i] = true;
            }
        }
    }
    out
}

/// Random occupancy with low-density blobs so that both outcomes occur.
pub fn random_occupancy(rng: &mut ChaCha8Rng, n: usize) -> BitMask {
    let g = georef(n, n, 0.5);
    let base: f64 = rng.random_range(0.5..0.97);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(0..6))
        .map(|_| {
            (
                rng.random_range(0.0..n as f64),
                rng.random_range(0.0..n as f64),
                rng.random_range(3.0..40.0),
                rng.random_range(0.0..0.4),
            )
        })
        .collect();
    let mut m = BitMask::empty(g);
    for r in 0..n {
        for c in 0..n {
            let mut p = base;
            for &(br, bc, rad, bp) in &blobs {
                if (r as f64 - br).hypot(c as f64 - bc) < rad {
                    p = bp;
                }
            }
            m.set(r, c, rng.random::<f64>() < p);
        }
    }
    m
}

/// Terraced or undulating DSM with water-like nodata pockets at low spots,
/// plus a seed mask covering most of those pockets.
pub fn random_werm_scene(rng: &mut ChaCha8Rng, n: usize) -> (RasterGrid, BitMask) {
    let g = georef(n, n, 0.5);
    let terraced = rng.random::<bool>();
    let step = rng.random_range(0.05..0.4);
    let width = rng.random_range(5.0..40.0);
    let amp = rng.random_range(0.1..2.0);
    let wave = rng.random_range(20.0..120.0);
    let noise = rng.random_range(0.0..0.08);
    let mut values = vec![0.0; g.len()];
    for r in 0..n {
        for c in 0..n {
            let (x, y) = (c as f64, r as f64);
            let z = if terraced {
                50.0 + (x / width).floor() * step + ((y / width).floor() * step * 0.5)
            } else {
                50.0 + amp * (x / wave * std::f64::consts::TAU).sin() * (y / wave * std::f64::consts::TAU).cos()
            };
            values[r * n + c] = z + rng.random_range(-noise..=noise);
        }
    }
    let mut seeds = BitMask::empty(g);
    for _ in 0..rng.random_range(1..8) {
        let (r0, c0) = (rng.random_range(0..n), rng.random_range(0..n));
        let (h, w) = (rng.random_range(2..50), rng.random_range(2..50));
        let level = values[r0 * n + c0];
        let hole_p = rng.random_range(0.0..0.9);
        for r in r0..(r0 + h).min(n) {
            for c in c0..(c0 + w).min(n) {
                seeds.set(r, c, true);
                values[r * n + c] = if rng.random::<f64>() < hole_p {
                    DEFAULT_NODATA
                } else {
                    level + rng.random_range(-0.02..=0.02)
                };
            }
        }
    }
    // scattered dropouts outside the seeds
    for v in values.iter_mut() {
        if rng.random::<f64>() < 0.03 {
            *v = DEFAULT_NODATA;
        }
    }
    (RasterGrid::from_values(g, values, DEFAULT_NODATA).unwrap(), seeds)
}
