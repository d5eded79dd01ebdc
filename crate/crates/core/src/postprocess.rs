//! Assembling predicted patches into a catchment raster.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PatchLocation;
use crate::error::{invalid, Error, Result};
use crate::raster::{Geometry, Grid, MaskGrid, DEFAULT_NODATA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMethod {
    /// Abutting windows; the only overlap allowed is the last row/column of
    /// windows pushed back to fit the raster edge, where the earlier window wins.
    #[serde(rename = "none")]
    NoOverlap,
    Mean,
    Median,
    Max,
}

impl AggregationMethod {
    pub const ALL: [AggregationMethod; 4] =
        [AggregationMethod::NoOverlap, AggregationMethod::Mean, AggregationMethod::Median, AggregationMethod::Max];
}

impl fmt::Display for AggregationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationMethod::NoOverlap => "none",
            AggregationMethod::Mean => "mean",
            AggregationMethod::Median => "median",
            AggregationMethod::Max => "max",
        })
    }
}

impl FromStr for AggregationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "no-overlap" | "nooverlap" => Ok(AggregationMethod::NoOverlap),
            "mean" => Ok(AggregationMethod::Mean),
            "median" => Ok(AggregationMethod::Median),
            "max" => Ok(AggregationMethod::Max),
            other => invalid(format!("unknown aggregation `{other}` (none, mean, median, max)")),
        }
    }
}

/// Middle of the sorted values; even counts average the two middle ones.
pub fn median_of(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return invalid("median of no values");
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Checks that windows along one axis abut, allowing only the final
/// edge-flush window to overlap its predecessor.
fn check_abutting(starts: &mut Vec<usize>, size: usize, extent: usize, axis: &str) -> Result<()> {
    starts.sort_unstable();
    starts.dedup();
    for (k, pair) in starts.windows(2).enumerate() {
        let last = k + 2 == starts.len();
        if pair[1] - pair[0] < size && !(last && pair[1] + size == extent) {
            return invalid(format!(
                "windows at {axis} {} and {} overlap; non-overlapping aggregation needs a grid equal to the patch size",
                pair[0], pair[1]
            ));
        }
    }
    Ok(())
}

/// Combines patch values per cell, clamps at zero and writes the nodata
/// sentinel outside the catchment.
pub fn aggregate<P: AsRef<[f32]> + Sync>(
    patches: &[P],
    locations: &[PatchLocation],
    method: AggregationMethod,
    geom: &Geometry,
    mask: &MaskGrid,
) -> Result<Grid> {
    if patches.len() != locations.len() {
        return invalid(format!("{} patches for {} locations", patches.len(), locations.len()));
    }
    geom.check_same(mask.geometry(), "aggregation mask")?;
    for (p, loc) in patches.iter().zip(locations) {
        loc.check(geom)?;
        if p.as_ref().len() != loc.size * loc.size {
            return Err(Error::Shape(format!("patch of {} values for a {}-cell window", p.as_ref().len(), loc.size)));
        }
    }
    if method == AggregationMethod::NoOverlap {
        if let Some(first) = locations.first() {
            let size = first.size;
            if locations.iter().any(|l| l.size != size) {
                return invalid("non-overlapping aggregation needs equal window sizes");
            }
            check_abutting(&mut locations.iter().map(|l| l.row0).collect(), size, geom.rows, "row")?;
            check_abutting(&mut locations.iter().map(|l| l.col0).collect(), size, geom.cols, "column")?;
        }
    }

    let rows: Vec<Result<Vec<f64>>> = (0..geom.rows)
        .into_par_iter()
        .map(|r| {
            let covering: Vec<usize> =
                (0..locations.len()).filter(|&k| (locations[k].row0..locations[k].row0 + locations[k].size).contains(&r)).collect();
            let mut vals = Vec::with_capacity(covering.len());
            let mut out = Vec::with_capacity(geom.cols);
            for c in 0..geom.cols {
                vals.clear();
                for &k in &covering {
                    let loc = &locations[k];
                    if (loc.col0..loc.col0 + loc.size).contains(&c) {
                        vals.push(f64::from(patches[k].as_ref()[(r - loc.row0) * loc.size + (c - loc.col0)]));
                    }
                }
                if vals.is_empty() {
                    return invalid(format!("cell ({r}, {c}) is not covered by any patch"));
                }
                let v = match method {
                    AggregationMethod::NoOverlap => vals[0],
                    AggregationMethod::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
                    AggregationMethod::Median => median_of(&vals)?,
                    AggregationMethod::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                };
                out.push(if mask.is_data(geom.index(r, c)) { v.max(0.0) } else { DEFAULT_NODATA });
            }
            Ok(out)
        })
        .collect();
    let mut values = Vec::with_capacity(geom.len());
    for row in rows {
        values.extend(row?);
    }
    Grid::new(*geom, DEFAULT_NODATA, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loc(row0: usize, col0: usize, size: usize) -> PatchLocation {
        PatchLocation { row0, col0, size }
    }

    #[test]
    fn median_rule() {
        assert_eq!(median_of(&[3.0]).unwrap(), 3.0);
        assert_eq!(median_of(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median_of(&[3.0, 1.0]).unwrap(), 2.0);
        assert_eq!(median_of(&[4.0, 1.0, 9.0, 2.0]).unwrap(), 3.0);
        assert!(median_of(&[]).is_err());
    }

    #[test]
    fn two_patch_overlap() {
        let geom2 = Geometry::new(2, 3, 1.0);
        let mask2 = MaskGrid::all_data(geom2);
        let patches = vec![vec![1.0f32; 4], vec![3.0f32; 4]];
        let locs = [loc(0, 0, 2), loc(0, 1, 2)];
        let get = |m| aggregate(&patches, &locs, m, &geom2, &mask2).unwrap().get(0, 1);
        assert_eq!(get(AggregationMethod::Mean), 2.0);
        assert_eq!(get(AggregationMethod::Median), 2.0);
        assert_eq!(get(AggregationMethod::Max), 3.0);
    }

    #[test]
    fn clamp_nodata_and_coverage() {
        let geom = Geometry::new(2, 2, 1.0);
        let mask = MaskGrid::from_flags(geom, vec![true, true, true, false]).unwrap();
        let g = aggregate(&[vec![-0.2f32, 0.5, 1.0, 2.0]], &[loc(0, 0, 2)], AggregationMethod::Mean, &geom, &mask).unwrap();
        assert_eq!(g.values(), &[0.0, 0.5, 1.0, DEFAULT_NODATA]);

        let geom = Geometry::new(3, 3, 1.0);
        let mask = MaskGrid::all_data(geom);
        assert!(aggregate(&[vec![0.0f32; 4]], &[loc(0, 0, 2)], AggregationMethod::Mean, &geom, &mask).is_err());
        assert!(aggregate(&[vec![0.0f32; 3]], &[loc(0, 0, 2)], AggregationMethod::Mean, &geom, &mask).is_err());
        assert!(aggregate::<Vec<f32>>(&[], &[loc(0, 0, 2)], AggregationMethod::Mean, &geom, &mask).is_err());
    }

    #[test]
    fn no_overlap_validation() {
        let geom = Geometry::new(6, 6, 1.0);
        let mask = MaskGrid::all_data(geom);
        let p = vec![vec![1.0f32; 4]; 9];
        let abut: Vec<_> = [0, 2, 4].iter().flat_map(|&r| [0, 2, 4].map(|c| loc(r, c, 2))).collect();
        assert!(aggregate(&p, &abut, AggregationMethod::NoOverlap, &geom, &mask).is_ok());
        let overlap: Vec<_> = [0, 1, 4].iter().flat_map(|&r| [0, 2, 4].map(|c| loc(r, c, 2))).collect();
        assert!(aggregate(&p, &overlap, AggregationMethod::NoOverlap, &geom, &mask).is_err());

        // 5x5 raster: the last window is pushed back to the edge
        let geom = Geometry::new(5, 5, 1.0);
        let mask = MaskGrid::all_data(geom);
        let edge: Vec<_> = [0, 2, 3].iter().flat_map(|&r| [0, 2, 3].map(|c| loc(r, c, 2))).collect();
        let vals: Vec<Vec<f32>> = (0..9).map(|k| vec![k as f32; 4]).collect();
        let g = aggregate(&vals, &edge, AggregationMethod::NoOverlap, &geom, &mask).unwrap();
        assert_eq!(g.get(3, 3), 4.0);
        assert_eq!(g.get(4, 4), 8.0);
    }

    #[test]
    fn parse_methods() {
        for m in AggregationMethod::ALL {
            assert_eq!(m.to_string().parse::<AggregationMethod>().unwrap(), m);
        }
        assert!("avg".parse::<AggregationMethod>().is_err());
    }
}
