use floodcast::dataset::{grid_locations, PatchLocation};
use floodcast::postprocess::{aggregate, AggregationMethod};
use floodcast::raster::{Geometry, MaskGrid, DEFAULT_NODATA};
use proptest::prelude::*;

fn random_patches(locs: &[PatchLocation], seed: &[f32]) -> Vec<Vec<f32>> {
    locs.iter()
        .enumerate()
        .map(|(k, l)| (0..l.size * l.size).map(|i| seed[(k * 131 + i * 7) % seed.len()]).collect())
        .collect()
}

/// Values of every patch covering (r, c).
fn covering(patches: &[Vec<f32>], locs: &[PatchLocation], r: usize, c: usize) -> Vec<f64> {
    patches
        .iter()
        .zip(locs)
        .filter(|(_, l)| r >= l.row0 && r < l.row0 + l.size && c >= l.col0 && c < l.col0 + l.size)
        .map(|(p, l)| f64::from(p[(r - l.row0) * l.size + c - l.col0]))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn methods_agree_when_grid_equals_patch(
        nr in 1usize..5, nc in 1usize..5, patch in prop::sample::select(vec![2usize, 4, 8]),
        vals in prop::collection::vec(0.0f32..5.0, 64),
    ) {
        let geom = Geometry::new(nr * patch, nc * patch, 1.0);
        let mask = MaskGrid::all_data(geom);
        let locs = grid_locations(&geom, patch, patch).unwrap();
        let patches = random_patches(&locs, &vals);
        let base = aggregate(&patches, &locs, AggregationMethod::NoOverlap, &geom, &mask).unwrap();
        for m in AggregationMethod::ALL {
            let g = aggregate(&patches, &locs, m, &geom, &mask).unwrap();
            prop_assert_eq!(g.values(), base.values());
        }
    }

    #[test]
    fn overlapping_results_lie_within_covering_values(
        rows in 6usize..20, cols in 6usize..20, patch in 2usize..6, grid_off in 0usize..5,
        vals in prop::collection::vec(0.0f32..5.0, 97),
    ) {
        let grid = 1 + grid_off % patch;
        let geom = Geometry::new(rows, cols, 1.0);
        let mask = MaskGrid::all_data(geom);
        let locs = grid_locations(&geom, patch, grid).unwrap();
        let patches = random_patches(&locs, &vals);
        let out: Vec<_> = [AggregationMethod::Mean, AggregationMethod::Median, AggregationMethod::Max]
            .iter()
            .map(|&m| aggregate(&patches, &locs, m, &geom, &mask).unwrap())
            .collect();
        for r in 0..rows {
            for c in 0..cols {
                let cov = covering(&patches, &locs, r, c);
                prop_assert!(!cov.is_empty());
                let lo = cov.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = cov.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mean = cov.iter().sum::<f64>() / cov.len() as f64;
                for g in &out {
                    let v = g.get(r, c);
                    prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "{v} outside [{lo}, {hi}]");
                }
                prop_assert!((out[0].get(r, c) - mean).abs() <= 1e-12);
                prop_assert_eq!(out[2].get(r, c), hi);
            }
        }
    }

    #[test]
    fn single_full_patch_is_identity_and_idempotent(
        n in 1usize..12, vals in prop::collection::vec(0.0f32..5.0, 144),
    ) {
        let geom = Geometry::new(n, n, 1.0);
        let mask = MaskGrid::all_data(geom);
        let p = vals[..n * n].to_vec();
        let loc = [PatchLocation { row0: 0, col0: 0, size: n }];
        for m in AggregationMethod::ALL {
            let g = aggregate(std::slice::from_ref(&p), &loc, m, &geom, &mask).unwrap();
            let expect: Vec<f64> = p.iter().map(|&v| f64::from(v)).collect();
            prop_assert_eq!(g.values(), &expect[..]);
            let again: Vec<f32> = g.values().iter().map(|&v| v as f32).collect();
            let twice = aggregate(&[again], &loc, m, &geom, &mask).unwrap();
            prop_assert_eq!(twice.values(), g.values());
        }
    }
}

#[test]
fn overlap_of_one_and_three() {
    // two 2x2 windows sharing the middle column of a 2x3 raster
    let geom = Geometry::new(2, 3, 1.0);
    let mask = MaskGrid::all_data(geom);
    let patches = vec![vec![1.0f32; 4], vec![3.0f32; 4]];
    let locs = [PatchLocation { row0: 0, col0: 0, size: 2 }, PatchLocation { row0: 0, col0: 1, size: 2 }];
    let at = |m| aggregate(&patches, &locs, m, &geom, &mask).unwrap();
    for (m, mid) in [(AggregationMethod::Mean, 2.0), (AggregationMethod::Median, 2.0), (AggregationMethod::Max, 3.0)] {
        let g = at(m);
        assert_eq!(g.values(), &[1.0, mid, 3.0, 1.0, mid, 3.0], "{m}");
    }
}

#[test]
fn negative_predictions_clamp_and_mask_is_nodata() {
    let geom = Geometry::new(4, 4, 1.0);
    let mut flags = vec![true; 16];
    flags[5] = false;
    let mask = MaskGrid::from_flags(geom, flags).unwrap();
    let locs = grid_locations(&geom, 2, 2).unwrap();
    let patches = vec![vec![-1.0f32; 4]; locs.len()];
    for m in AggregationMethod::ALL {
        let g = aggregate(&patches, &locs, m, &geom, &mask).unwrap();
        for (i, &v) in g.values().iter().enumerate() {
            assert_eq!(v, if i == 5 { DEFAULT_NODATA } else { 0.0 });
        }
    }
}
