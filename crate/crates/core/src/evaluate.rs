//! Accuracy metrics, high-error area counting and timing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::raster::{Geometry, Grid, MaskGrid, DEFAULT_NODATA};

/// Bin width of depth histograms, metres.
pub const DEPTH_BIN: f64 = 0.1;
/// Upper depth of the 2-D histogram; deeper cells land in the last bin.
pub const DEPTH_CAP: f64 = 7.0;
/// Depth below which relative error is undefined.
pub const REL_ERROR_MIN_DEPTH: f64 = 0.01;
/// Absolute-error bands [lo, hi) of the high-error report.
pub const ERROR_BANDS: [(f64, f64); 4] = [(0.5, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, f64::INFINITY)];
/// Cells closer than this (centre to centre, in cells) share an area.
pub const AREA_DISTANCE: f64 = 16.0;

fn check(pred: &Grid, sim: &Grid, mask: &MaskGrid) -> Result<Geometry> {
    let g = *sim.geometry();
    g.check_same(pred.geometry(), "prediction vs simulation")?;
    g.check_same(mask.geometry(), "mask")?;
    Ok(g)
}

/// Cells that are data in the mask and in both rasters.
fn data_cells<'a>(pred: &'a Grid, sim: &'a Grid, mask: &'a MaskGrid) -> impl Iterator<Item = (usize, f64, f64)> + 'a {
    pred.values().iter().zip(sim.values()).enumerate().filter_map(move |(i, (&p, &s))| {
        (mask.is_data(i) && !pred.is_nodata_value(p) && !sim.is_nodata_value(s)).then_some((i, p, s))
    })
}

/// Mean |pred - sim| over data cells.
pub fn mae(pred: &Grid, sim: &Grid, mask: &MaskGrid) -> Result<f64> {
    check(pred, sim, mask)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (_, p, s) in data_cells(pred, sim, mask) {
        sum += (p - s).abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// Index of the half-open bin [w*i, w*(i+1)) holding `v`, evaluated with the
/// same products the definition uses; negatives go to 0, overflow to the last.
fn depth_bin(v: f64, w: f64, bins: usize) -> usize {
    if !(v > 0.0) {
        return 0;
    }
    let mut i = ((v / w).floor() as usize).min(bins - 1);
    while i > 0 && v < w * i as f64 {
        i -= 1;
    }
    while i + 1 < bins && v >= w * (i + 1) as f64 {
        i += 1;
    }
    i
}

fn bin_count(w: f64, cap: f64) -> Result<usize> {
    if !(w > 0.0 && cap > 0.0 && w.is_finite() && cap.is_finite()) {
        return invalid(format!("histogram bin width {w} and cap {cap} must be positive"));
    }
    Ok(((cap / w).round() as usize).max(1))
}

/// Joint counts of (simulated, predicted) depth bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hist2D {
    pub bin_width: f64,
    pub cap: f64,
    pub bins: usize,
    /// Row-major: row = simulated bin, column = predicted bin.
    pub counts: Vec<u64>,
}

impl Hist2D {
    pub fn get(&self, sim_bin: usize, pred_bin: usize) -> u64 {
        self.counts[sim_bin * self.bins + pred_bin]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts per simulated-depth bin.
    pub fn sim_marginal(&self) -> Vec<u64> {
        self.counts.chunks(self.bins).map(|r| r.iter().sum()).collect()
    }

    /// Counts per predicted-depth bin.
    pub fn pred_marginal(&self) -> Vec<u64> {
        (0..self.bins).map(|j| (0..self.bins).map(|i| self.get(i, j)).sum()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sim_bin,pred_bin,sim_lo,pred_lo,count\n");
        for i in 0..self.bins {
            for j in 0..self.bins {
                let c = self.get(i, j);
                if c > 0 {
                    s.push_str(&format!("{i},{j},{},{},{c}\n", self.bin_width * i as f64, self.bin_width * j as f64));
                }
            }
        }
        s
    }
}

pub fn hist2d(pred: &Grid, sim: &Grid, mask: &MaskGrid, bin_width: f64, cap: f64) -> Result<Hist2D> {
    check(pred, sim, mask)?;
    let bins = bin_count(bin_width, cap)?;
    let mut counts = vec![0u64; bins * bins];
    for (_, p, s) in data_cells(pred, sim, mask) {
        counts[depth_bin(s, bin_width, bins) * bins + depth_bin(p, bin_width, bins)] += 1;
    }
    Ok(Hist2D { bin_width, cap, bins, counts })
}

/// 1-D histogram of one raster's depths over data cells, binned as in [`hist2d`].
pub fn depth_histogram(g: &Grid, mask: &MaskGrid, bin_width: f64, cap: f64) -> Result<Vec<u64>> {
    g.geometry().check_same(mask.geometry(), "mask")?;
    let bins = bin_count(bin_width, cap)?;
    let mut counts = vec![0u64; bins];
    for (i, &v) in g.values().iter().enumerate() {
        if mask.is_data(i) && !g.is_nodata_value(v) {
            counts[depth_bin(v, bin_width, bins)] += 1;
        }
    }
    Ok(counts)
}

/// Histogram of pred - sim with bins centred on zero: bin k covers
/// [(k - K - 1/2) w, (k - K + 1/2) w) for K = range / w; outliers are
/// clamped into the end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub bin_width: f64,
    pub half_bins: usize,
    pub counts: Vec<u64>,
}

impl ErrorHistogram {
    pub fn lower_edge(&self, k: usize) -> f64 {
        (k as f64 - self.half_bins as f64 - 0.5) * self.bin_width
    }

    pub fn center(&self, k: usize) -> f64 {
        (k as f64 - self.half_bins as f64) * self.bin_width
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin,center,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{k},{},{c}\n", self.center(k)));
        }
        s
    }
}

pub fn error_histogram(pred: &Grid, sim: &Grid, mask: &MaskGrid, bin_width: f64, range: f64) -> Result<ErrorHistogram> {
    check(pred, sim, mask)?;
    let half_bins = bin_count(bin_width, range)?;
    let mut h = ErrorHistogram { bin_width, half_bins, counts: vec![0; 2 * half_bins + 1] };
    let last = h.counts.len() - 1;
    for (_, p, s) in data_cells(pred, sim, mask) {
        let d = p - s;
        let guess = (d / bin_width + half_bins as f64 + 0.5).floor();
        let mut k = if guess <= 0.0 { 0 } else { (guess as usize).min(last) };
        while k > 0 && d < h.lower_edge(k) {
            k -= 1;
        }
        while k < last && d >= h.lower_edge(k + 1) {
            k += 1;
        }
        h.counts[k] += 1;
    }
    Ok(h)
}

/// pred - sim at data cells, nodata elsewhere.
pub fn error_grid(pred: &Grid, sim: &Grid, mask: &MaskGrid) -> Result<Grid> {
    let g = check(pred, sim, mask)?;
    let mut v = vec![DEFAULT_NODATA; g.len()];
    for (i, p, s) in data_cells(pred, sim, mask) {
        v[i] = p - s;
    }
    Grid::new(g, DEFAULT_NODATA, v)
}

/// (pred - sim) / sim where sim >= `y_min`; nodata elsewhere.
pub fn relative_error(pred: &Grid, sim: &Grid, mask: &MaskGrid, y_min: f64) -> Result<Grid> {
    let g = check(pred, sim, mask)?;
    if !(y_min > 0.0) {
        return invalid(format!("relative-error depth guard must be positive, got {y_min}"));
    }
    let mut v = vec![DEFAULT_NODATA; g.len()];
    for (i, p, s) in data_cells(pred, sim, mask) {
        if s >= y_min {
            v[i] = (p - s) / s;
        }
    }
    Grid::new(g, DEFAULT_NODATA, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandCount {
    pub lo: f64,
    /// None for the open-ended top band.
    pub hi: Option<f64>,
    pub cells: usize,
    pub areas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighErrorReport {
    pub bands: Vec<BandCount>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Number of single-linkage clusters of `cells` (row, col) whose members
/// are closer than `dist`.
pub fn count_areas(cells: &[(usize, usize)], dist: f64) -> usize {
    if cells.is_empty() {
        return 0;
    }
    let bucket = dist.ceil().max(1.0) as usize;
    let d2 = dist * dist;
    let mut grid: std::collections::HashMap<(usize, usize), Vec<usize>> = std::collections::HashMap::new();
    for (k, &(r, c)) in cells.iter().enumerate() {
        grid.entry((r / bucket, c / bucket)).or_default().push(k);
    }
    let mut uf = UnionFind((0..cells.len()).collect());
    for (k, &(r, c)) in cells.iter().enumerate() {
        let (br, bc) = (r / bucket, c / bucket);
        for nr in br.saturating_sub(1)..=br + 1 {
            for nc in bc.saturating_sub(1)..=bc + 1 {
                let Some(members) = grid.get(&(nr, nc)) else { continue };
                for &m in members {
                    if m <= k {
                        continue;
                    }
                    let (dr, dc) = (cells[m].0 as f64 - r as f64, cells[m].1 as f64 - c as f64);
                    if dr * dr + dc * dc < d2 {
                        uf.union(k, m);
                    }
                }
            }
        }
    }
    (0..cells.len()).filter(|&k| uf.find(k) == k).count()
}

/// Cells and areas per absolute-error band.
pub fn high_error_report(pred: &Grid, sim: &Grid, mask: &MaskGrid) -> Result<HighErrorReport> {
    let g = check(pred, sim, mask)?;
    let mut per_band: Vec<Vec<(usize, usize)>> = vec![Vec::new(); ERROR_BANDS.len()];
    for (i, p, s) in data_cells(pred, sim, mask) {
        let e = (p - s).abs();
        if let Some(b) = ERROR_BANDS.iter().position(|&(lo, hi)| e >= lo && e < hi) {
            per_band[b].push((i / g.cols, i % g.cols));
        }
    }
    let bands = ERROR_BANDS
        .iter()
        .zip(&per_band)
        .map(|(&(lo, hi), cells)| BandCount {
            lo,
            hi: hi.is_finite().then_some(hi),
            cells: cells.len(),
            areas: count_areas(cells, AREA_DISTANCE),
        })
        .collect();
    Ok(HighErrorReport { bands })
}

/// Wall-clock statistics of repeated runs, seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean: f64,
    pub std_dev: f64,
    pub samples: Vec<f64>,
}

/// Times `repeats` calls of `f`.
pub fn measure<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<Timing> {
    if repeats == 0 {
        return invalid("need at least one repeat");
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        std::hint::black_box(f()?);
        samples.push(t.elapsed().as_secs_f64());
    }
    let mean = samples.iter().sum::<f64>() / repeats as f64;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / repeats as f64;
    Ok(Timing { mean, std_dev: var.sqrt(), samples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub repeats: usize,
    pub simulate: Timing,
    /// Patch prediction plus aggregation.
    pub predict: Timing,
    /// Terrain feature extraction and normalisation.
    pub preprocess: Timing,
    /// predict.mean / simulate.mean
    pub ratio: f64,
}

/// Times the three stages `repeats` (>= 3) times each.
pub fn benchmark<A, B, C>(
    repeats: usize,
    simulate: impl FnMut() -> Result<A>,
    predict: impl FnMut() -> Result<B>,
    preprocess: impl FnMut() -> Result<C>,
) -> Result<BenchReport> {
    if repeats < 3 {
        return invalid(format!("benchmark needs at least 3 repeats, got {repeats}"));
    }
    let simulate = measure(repeats, simulate)?;
    let predict = measure(repeats, predict)?;
    let preprocess = measure(repeats, preprocess)?;
    Ok(BenchReport { repeats, ratio: predict.mean / simulate.mean, simulate, predict, preprocess })
}

/// Binary greyscale image.
pub fn pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Log-scaled counts, simulated depth increasing upwards, predicted rightwards.
pub fn hist2d_pgm(h: &Hist2D) -> Vec<u8> {
    let max = h.counts.iter().copied().max().unwrap_or(0);
    let scale = if max == 0 { 0.0 } else { 255.0 / (1.0 + max as f64).ln() };
    let mut px = Vec::with_capacity(h.bins * h.bins);
    for i in (0..h.bins).rev() {
        for j in 0..h.bins {
            px.push(((1.0 + h.get(i, j) as f64).ln() * scale).round() as u8);
        }
    }
    pgm(h.bins, h.bins, &px)
}

/// Values in [lo, hi] mapped linearly to 1..=255; nodata is 0.
pub fn grid_pgm(g: &Grid, lo: f64, hi: f64) -> Vec<u8> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px: Vec<u8> = g
        .values()
        .iter()
        .map(|&v| if g.is_nodata_value(v) { 0 } else { (1.0 + 254.0 * ((v - lo) / span).clamp(0.0, 1.0)).round() as u8 })
        .collect();
    pgm(g.cols(), g.rows(), &px)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize, v: Vec<f64>) -> Grid {
        Grid::new(Geometry::new(rows, cols, 1.0), DEFAULT_NODATA, v).unwrap()
    }

    #[test]
    fn mae_cases() {
        let sim = grid(2, 2, vec![0.0, 1.0, 2.0, 3.0]);
        let mask = MaskGrid::all_data(*sim.geometry());
        assert_eq!(mae(&sim, &sim, &mask).unwrap(), 0.0);
        let pred = grid(2, 2, vec![0.5, 1.5, 2.5, 3.5]);
        assert_eq!(mae(&pred, &sim, &mask).unwrap(), 0.5);
        let other = grid(2, 3, vec![0.0; 6]);
        assert!(mae(&other, &sim, &mask).is_err());
        let none = MaskGrid::from_flags(*sim.geometry(), vec![false; 4]).unwrap();
        assert!(mae(&pred, &sim, &none).is_err());
    }

    #[test]
    fn hist2d_cases() {
        let sim = grid(1, 2, vec![0.05, 7.5]);
        let pred = grid(1, 2, vec![0.23, -0.1]);
        let mask = MaskGrid::all_data(*sim.geometry());
        let h = hist2d(&pred, &sim, &mask, DEPTH_BIN, DEPTH_CAP).unwrap();
        assert_eq!(h.bins, 70);
        assert_eq!(h.get(0, 2), 1);
        assert_eq!(h.get(69, 0), 1);
        assert_eq!(h.total(), 2);
        // 0.3 sits below 0.1 * 3 in binary, so it belongs to bin 2
        assert_eq!(depth_bin(0.3, 0.1, 70), if 0.3 < 0.1 * 3.0 { 2 } else { 3 });
        assert_eq!(depth_bin(0.1, 0.1, 70), 1);
    }

    #[test]
    fn error_histogram_cases() {
        let sim = grid(1, 3, vec![0.0, 1.0, 2.0]);
        let mask = MaskGrid::all_data(*sim.geometry());
        let h = error_histogram(&sim, &sim, &mask, 0.1, 10.0).unwrap();
        assert_eq!(h.counts[h.half_bins], 3);
        let pred = grid(1, 3, vec![0.5, 1.5, 2.5]);
        let h = error_histogram(&pred, &sim, &mask, 0.1, 10.0).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        let far = grid(1, 3, vec![50.0, -50.0, 2.0]);
        let h = error_histogram(&far, &sim, &mask, 0.1, 10.0).unwrap();
        assert_eq!((h.counts[0], h.counts[h.counts.len() - 1]), (1, 1));
    }

    #[test]
    fn relative_error_cases() {
        let sim = grid(1, 3, vec![2.0, 0.005, 1.0]);
        let pred = grid(1, 3, vec![1.0, 0.5, 1.0]);
        let mask = MaskGrid::all_data(*sim.geometry());
        let r = relative_error(&pred, &sim, &mask, REL_ERROR_MIN_DEPTH).unwrap();
        assert_eq!(r.values(), &[-0.5, DEFAULT_NODATA, 0.0]);
    }

    #[test]
    fn area_counting() {
        assert_eq!(count_areas(&[], 16.0), 0);
        assert_eq!(count_areas(&[(0, 0), (0, 10)], 16.0), 1);
        assert_eq!(count_areas(&[(0, 0), (0, 20)], 16.0), 2);
        assert_eq!(count_areas(&[(0, 0), (0, 16)], 16.0), 2);
        // chain: 0-12-24 links transitively
        assert_eq!(count_areas(&[(0, 0), (0, 24), (0, 12)], 16.0), 1);
        // diagonal 12,12 is ~16.97 apart
        assert_eq!(count_areas(&[(0, 0), (12, 12)], 16.0), 2);
        assert_eq!(count_areas(&[(0, 0), (11, 11)], 16.0), 1);
    }

    #[test]
    fn high_error_bands() {
        let sim = Grid::filled(Geometry::new(1, 40, 1.0), 0.0).unwrap();
        let mask = MaskGrid::all_data(*sim.geometry());
        let r = high_error_report(&sim, &sim, &mask).unwrap();
        assert!(r.bands.iter().all(|b| b.cells == 0 && b.areas == 0));
        let mut v = vec![0.0; 40];
        v[0] = 0.7;
        v[10] = 0.9;
        v[35] = 1.2;
        v[39] = 5.0;
        let pred = grid(1, 40, v);
        let r = high_error_report(&pred, &sim, &mask).unwrap();
        let got: Vec<(usize, usize)> = r.bands.iter().map(|b| (b.cells, b.areas)).collect();
        assert_eq!(got, vec![(2, 1), (1, 1), (0, 0), (1, 1)]);
        assert_eq!(r.bands[3].hi, None);
    }

    #[test]
    fn self_comparison_ratio_is_near_one() {
        let work = || -> Result<f64> { Ok((0..200_000).map(|i| (i as f64).sqrt()).sum()) };
        let r = benchmark(5, work, work, work).unwrap();
        assert!(r.ratio > 0.5 && r.ratio < 2.0, "{}", r.ratio);
        assert_eq!(r.predict.samples.len(), 5);
        assert!(r.predict.std_dev >= 0.0);
        assert!(benchmark(2, work, work, work).is_err());
    }

    #[test]
    fn pgm_header() {
        let img = pgm(2, 1, &[0, 255]);
        assert_eq!(&img[..11], b"P5\n2 1\n255\n");
        let h = Hist2D { bin_width: 0.1, cap: 0.2, bins: 2, counts: vec![0, 1, 3, 0] };
        let img = hist2d_pgm(&h);
        // top row is the deepest simulated bin
        assert_eq!(&img[img.len() - 4..], &[255, 0, 0, 128]);
    }
}
