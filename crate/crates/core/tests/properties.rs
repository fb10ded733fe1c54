mod common;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use waterline::baseline::{ndwi, threshold_map};
use waterline::eval::{confusion, tile_eval, EvalReport, Tiling};
use waterline::products::{hydro_flatten, segment_report, water_elevation_raster};
use waterline::raster::{BitMask, RasterGrid, DEFAULT_NODATA};
use waterline::seed::{apply_building_buffer, classify_seeds, density_stats, SeedParams};
use waterline::werm::{label_segments, run_werm, werm_pass, Connectivity, WermParams};

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(64)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn seeds_shrink_as_z_grows(seed in any::<u64>(), z1 in 0.1..3.0f64, dz in 0.0..2.0f64, exact in any::<bool>()) {
        let occ = random_occupancy(&mut rng(seed), 60);
        let at = |z: f64| {
            let p = SeedParams { z_score: z, exact_binomial: exact, ..SeedParams::default() };
            let s = density_stats(&occ, &p).unwrap();
            classify_seeds(&occ, &s, &p)
        };
        prop_assert!(at(z1 + dz).is_subset_of(&at(z1)));
    }

    #[test]
    fn clearing_occupied_cells_never_removes_seeds(seed in any::<u64>(), clear in 1usize..200, exact in any::<bool>()) {
        let mut r = rng(seed);
        let occ = random_occupancy(&mut r, 60);
        let p = SeedParams { exact_binomial: exact, ..SeedParams::default() };
        // threshold held fixed at the original density
        let stats = density_stats(&occ, &p).unwrap();
        let before = classify_seeds(&occ, &stats, &p);
        let mut thinner = occ.clone();
        for _ in 0..clear {
            let i = r.random_range(0..thinner.bits.len());
            thinner.bits[i] = false;
        }
        prop_assert!(before.is_subset_of(&classify_seeds(&thinner, &stats, &p)));
    }

    #[test]
    fn density_stats_ordering(seed in any::<u64>(), halving in any::<bool>()) {
        let occ = random_occupancy(&mut rng(seed), 40);
        let s = density_stats(&occ, &SeedParams { density_halving: halving, ..SeedParams::default() }).unwrap();
        prop_assert!(0.0 <= s.p_test && s.p_test <= s.p_global && s.p_global <= 1.0);
    }

    #[test]
    fn building_buffer_matches_all_pairs(seed in any::<u64>(), radius in 0.0..6.0f64) {
        let mut r = rng(seed);
        let g = georef(40, 30, 0.5);
        let seeds = BitMask::from_bits(g, (0..g.len()).map(|_| r.random::<f64>() < 0.6).collect()).unwrap();
        let buildings = BitMask::from_bits(g, (0..g.len()).map(|_| r.random::<f64>() < 0.01).collect()).unwrap();
        let out = apply_building_buffer(&seeds, &buildings, radius).unwrap();
        prop_assert!(out.is_subset_of(&seeds));
        for i in 0..g.len() {
            let (ri, ci) = ((i / g.n_cols) as f64, (i % g.n_cols) as f64);
            let near = buildings.bits.iter().enumerate().any(|(j, &b)| {
                b && {
                    let (rj, cj) = ((j / g.n_cols) as f64, (j % g.n_cols) as f64);
                    ((ri - rj).powi(2) + (ci - cj).powi(2)) * 0.25 <= radius * radius
                }
            });
            prop_assert_eq!(out.bits[i], seeds.bits[i] && !near, "cell {}", i);
        }
    }

    #[test]
    fn merge_is_additive_and_nested(seed in any::<u64>(), er1 in 0.01..0.3f64, der in 0.0..0.2f64, ms1 in 0.0..200.0f64, dms in 0.0..300.0f64) {
        let (dsm, seeds) = random_werm_scene(&mut rng(seed), 80);
        let base = WermParams { passes: 1, min_area: ms1, ..WermParams::default() };
        let seg = label_segments(&seeds, base.connectivity, &dsm, base.percentile).unwrap();
        let pass = |p: WermParams| werm_pass(&seeds, &seg, &dsm, &p).unwrap();
        let narrow = pass(WermParams { elevation_range: er1, ..base });
        let wide = pass(WermParams { elevation_range: er1 + der, ..base });
        prop_assert!(seeds.is_subset_of(&narrow));
        prop_assert!(narrow.is_subset_of(&wide));
        let strict = pass(WermParams { min_area: ms1 + dms, ..base });
        prop_assert!(strict.is_subset_of(&pass(base)));
    }

    #[test]
    fn added_cells_are_within_slice_of_their_segment(seed in any::<u64>(), er in 0.02..0.3f64) {
        let (dsm, seeds) = random_werm_scene(&mut rng(seed), 80);
        let p = WermParams { passes: 1, min_area: 0.0, elevation_range: er, ..WermParams::default() };
        let seg = label_segments(&seeds, p.connectivity, &dsm, p.percentile).unwrap();
        let out = werm_pass(&seeds, &seg, &dsm, &p).unwrap();
        let levels: Vec<f64> = seg.segments.iter().filter_map(|s| s.elevation).collect();
        for i in 0..out.bits.len() {
            if out.bits[i] && !seeds.bits[i] {
                let z = dsm.value_at(i).expect("added cells have a value");
                prop_assert!(levels.iter().any(|w| (z - w).abs() <= er));
            }
        }
    }

    #[test]
    fn passes_only_grow(seed in any::<u64>(), passes in 1usize..5) {
        let (dsm, seeds) = random_werm_scene(&mut rng(seed), 80);
        let mut prev = seeds.clone();
        for k in 1..=passes {
            let p = WermParams { passes: k, min_area: 20.0, ..WermParams::default() };
            let out = run_werm(&seeds, &dsm, &p).unwrap();
            prop_assert!(prev.is_subset_of(&out.mask));
            prev = out.mask;
        }
    }

    #[test]
    fn products_agree_with_segmentation(seed in any::<u64>()) {
        let (dsm, seeds) = random_werm_scene(&mut rng(seed), 80);
        let out = run_werm(&seeds, &dsm, &WermParams { min_area: 20.0, ..WermParams::default() }).unwrap();
        let seg = &out.segmentation;
        let report = segment_report(seg);
        prop_assert_eq!(report.iter().map(|r| r.cell_count).sum::<usize>(), out.mask.count_ones());
        for r in &report {
            prop_assert!((r.area_m2 - r.cell_count as f64 * 0.25).abs() < 1e-9);
        }
        let levels = water_elevation_raster(seg, DEFAULT_NODATA);
        let flat = hydro_flatten(&dsm, seg);
        for i in 0..dsm.values.len() {
            if out.mask.bits[i] {
                if let Some(w) = levels.value_at(i) {
                    prop_assert_eq!(flat.values[i], w);
                }
            } else {
                prop_assert_eq!(flat.values[i].to_bits(), dsm.values[i].to_bits());
                prop_assert!(levels.value_at(i).is_none());
            }
        }
    }

    #[test]
    fn ndwi_bounded_and_thresholds_nested(seed in any::<u64>(), t1 in -1.0..1.0f64, dt in 0.0..1.0f64) {
        let mut r = rng(seed);
        let g = georef(30, 20, 1.0);
        let band = |r: &mut rand_chacha::ChaCha8Rng| {
            let v = (0..g.len()).map(|_| if r.random::<f64>() < 0.05 { DEFAULT_NODATA } else { r.random_range(0.0..0.5) }).collect();
            RasterGrid::from_values(g, v, DEFAULT_NODATA).unwrap()
        };
        let (green, nir) = (band(&mut r), band(&mut r));
        let idx = ndwi(&green, &nir).unwrap();
        for i in 0..idx.values.len() {
            if let Some(v) = idx.value_at(i) {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
        prop_assert!(threshold_map(&idx, t1 + dt).is_subset_of(&threshold_map(&idx, t1)));
    }

    #[test]
    fn tile_counts_partition_the_grid(seed in any::<u64>(), nx in 1usize..9, ny in 1usize..9) {
        let mut r = rng(seed);
        let g = georef(37, 23, 1.0);
        let bits = |r: &mut rand_chacha::ChaCha8Rng| BitMask::from_bits(g, (0..g.len()).map(|_| r.random::<bool>()).collect()).unwrap();
        let (pred, truth, valid) = (bits(&mut r), bits(&mut r), bits(&mut r));
        let ev = tile_eval(&pred, &truth, Some(&valid), Tiling::new(nx, ny), &[]).unwrap();
        let sum = ev.tiles.iter().fold(EvalReport::default(), |a, t| a.add(&t.report));
        let whole = confusion(&pred, &truth, Some(&valid)).unwrap();
        prop_assert_eq!(sum.total(), whole.total());
        prop_assert_eq!((sum.tp, sum.fp, sum.fn_, sum.tn), (whole.tp, whole.fp, whole.fn_, whole.tn));
        prop_assert_eq!(whole.total() as usize, valid.count_ones());
    }
}

#[test]
fn four_connectivity_never_adds_more_than_eight() {
    let mut r = rng(99);
    for _ in 0..20 {
        let (dsm, seeds) = random_werm_scene(&mut r, 80);
        let p8 = WermParams { passes: 1, min_area: 0.0, ..WermParams::default() };
        let p4 = WermParams { connectivity: Connectivity::Four, ..p8 };
        let seg8 = label_segments(&seeds, Connectivity::Eight, &dsm, p8.percentile).unwrap();
        let out8 = werm_pass(&seeds, &seg8, &dsm, &p8).unwrap();
        let seg4 = label_segments(&seeds, Connectivity::Four, &dsm, p4.percentile).unwrap();
        let out4 = werm_pass(&seeds, &seg4, &dsm, &p4).unwrap();
        // with identical levels per body, 4-paths are 8-paths
        let summary = |s: &waterline::werm::Segmentation| {
            s.segments.iter().map(|x| (x.cell_count, x.elevation)).collect::<Vec<_>>()
        };
        if summary(&seg4) == summary(&seg8) {
            assert!(out4.is_subset_of(&out8));
        }
    }
}
