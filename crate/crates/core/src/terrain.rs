//! Terrain derivatives and the five-channel terrain image.
//!
//! Derivatives come from the Zevenbergen–Thorne partial quartic fitted to
//! each 3x3 neighbourhood:
//!
//! ```text
//!   z1 z2 z3        D = ((z4 + z6)/2 - z5) / L^2
//!   z4 z5 z6        E = ((z2 + z8)/2 - z5) / L^2
//!   z7 z8 z9        F = (-z1 + z3 + z7 - z9) / (4 L^2)
//!                   G = (z6 - z4) / (2 L)
//!  (row 0 = north)  H = (z2 - z8) / (2 L)
//! ```
//!
//! `G` and `H` are the east and north components of the gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::raster::{build_mask, rescale_linear, Geometry, Grid, MaskGrid, Range, DEFAULT_NODATA};

/// Gradients below this magnitude count as flat.
pub const FLAT_SLOPE: f64 = 1e-9;

pub const CHANNEL_NAMES: [&str; 5] = ["elevation", "slope", "aspect", "curvature", "mask"];

/// Local quadratic fit of one 3x3 window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceFit {
    /// dz/dx, positive when elevation rises eastward.
    pub gx: f64,
    /// dz/dy, positive when elevation rises northward.
    pub gy: f64,
    pub profile_curv: f64,
    pub plan_curv: f64,
}

impl SurfaceFit {
    pub fn slope(&self) -> f64 {
        self.gx.hypot(self.gy)
    }

    /// Downslope compass direction in degrees clockwise from north, in [0, 360).
    pub fn aspect(&self) -> f64 {
        if self.slope() < FLAT_SLOPE {
            return 0.0;
        }
        let deg = (-self.gx).atan2(-self.gy).to_degrees();
        let deg = if deg < 0.0 { deg + 360.0 } else { deg };
        if deg >= 360.0 {
            0.0
        } else {
            deg
        }
    }

    pub fn curvature(&self) -> f64 {
        self.profile_curv - self.plan_curv
    }
}

/// Fits the 3x3 window given in row-major order (north row first).
///
/// Both curvatures are 0 where the gradient vanishes, since their defining
/// ratio is 0/0 there.
pub fn fit_surface(w: &[f64; 9], cellsize: f64) -> SurfaceFit {
    let l = cellsize;
    let l2 = l * l;
    let [z1, z2, z3, z4, z5, z6, z7, z8, z9] = *w;
    let d = ((z4 + z6) / 2.0 - z5) / l2;
    let e = ((z2 + z8) / 2.0 - z5) / l2;
    let f = (-z1 + z3 + z7 - z9) / (4.0 * l2);
    let g = (z6 - z4) / (2.0 * l);
    let h = (z2 - z8) / (2.0 * l);
    let g2h2 = g * g + h * h;
    let (profile_curv, plan_curv) = if g2h2 > 0.0 {
        (
            -2.0 * (d * g * g + e * h * h + f * g * h) / g2h2,
            2.0 * (d * h * h + e * g * g - f * g * h) / g2h2,
        )
    } else {
        (0.0, 0.0)
    };
    SurfaceFit { gx: g, gy: h, profile_curv, plan_curv }
}

/// Like [`fit_surface`] but rejects windows containing the nodata sentinel.
pub fn fit_window(w: &[f64; 9], cellsize: f64, nodata: f64) -> Result<SurfaceFit> {
    if w.contains(&nodata) {
        return invalid("3x3 window contains nodata; fill borders first");
    }
    Ok(fit_surface(w, cellsize))
}

/// Per-cell slope (rise/run), aspect (degrees) and curvature (1/m).
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub slope: Grid,
    pub aspect: Grid,
    pub curvature: Grid,
}

/// Gathers the 3x3 neighbourhood of (r, c). Off-grid and nodata neighbours
/// take the centre value, which equals edge replication along the border.
#[inline]
fn neighbourhood(dem: &Grid, mask: &MaskGrid, r: usize, c: usize) -> [f64; 9] {
    let geom = dem.geometry();
    let centre = dem.get(r, c);
    let mut w = [centre; 9];
    for (k, slot) in w.iter_mut().enumerate() {
        let dr = k as isize / 3 - 1;
        let dc = k as isize % 3 - 1;
        let rr = (r as isize + dr).clamp(0, geom.rows as isize - 1) as usize;
        let cc = (c as isize + dc).clamp(0, geom.cols as isize - 1) as usize;
        if mask.is_data(geom.index(rr, cc)) {
            *slot = dem.get(rr, cc);
        }
    }
    w
}

pub fn compute_features(dem: &Grid, mask: &MaskGrid) -> Result<Features> {
    let geom = *dem.geometry();
    geom.check_same(mask.geometry(), "compute_features")?;
    if geom.rows < 3 || geom.cols < 3 {
        return invalid(format!("terrain analysis needs at least 3x3 cells, got {}x{}", geom.rows, geom.cols));
    }
    let nodata = dem.nodata();
    let fits: Vec<Option<SurfaceFit>> = (0..geom.len())
        .into_par_iter()
        .map(|i| {
            if !mask.is_data(i) {
                return None;
            }
            let (r, c) = (i / geom.cols, i % geom.cols);
            Some(fit_surface(&neighbourhood(dem, mask, r, c), geom.cellsize))
        })
        .collect();
    let channel = |f: fn(&SurfaceFit) -> f64| {
        let values = fits.iter().map(|s| s.as_ref().map_or(nodata, f)).collect();
        dem.with_values(values)
    };
    Ok(Features {
        slope: channel(SurfaceFit::slope)?,
        aspect: channel(SurfaceFit::aspect)?,
        curvature: channel(SurfaceFit::curvature)?,
    })
}

/// Normalisation ranges of the four rescaled channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub elevation: Range,
    pub slope: Range,
    pub aspect: Range,
    pub curvature: Range,
}

impl NormStats {
    pub fn as_array(&self) -> [Range; 4] {
        [self.elevation, self.slope, self.aspect, self.curvature]
    }
}

/// Elevation, slope, aspect, curvature and mask, each in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainImage {
    /// Channels in [`CHANNEL_NAMES`] order.
    pub channels: [Grid; 5],
    pub norm_stats: NormStats,
}

impl TerrainImage {
    pub fn geometry(&self) -> &Geometry {
        self.channels[0].geometry()
    }

    pub fn mask(&self) -> Result<MaskGrid> {
        MaskGrid::from_grid(&self.channels[4])
    }

    /// Assembles an image from stored channels, validating the layout.
    pub fn from_channels(channels: [Grid; 5], norm_stats: NormStats) -> Result<Self> {
        let geom = *channels[0].geometry();
        for ch in &channels[1..] {
            geom.check_same(ch.geometry(), "terrain channels")?;
        }
        MaskGrid::from_grid(&channels[4])?;
        Ok(TerrainImage { channels, norm_stats })
    }

    /// Re-expresses the image under different normalisation ranges.
    pub fn renormalize(&self, target: &NormStats) -> Result<TerrainImage> {
        if self.norm_stats == *target {
            return Ok(self.clone());
        }
        let mask = self.mask()?;
        let from = self.norm_stats.as_array();
        let to = target.as_array();
        let mut channels = self.channels.clone();
        for k in 0..4 {
            let values = self.channels[k]
                .values()
                .iter()
                .enumerate()
                .map(|(i, &u)| if mask.is_data(i) { to[k].normalize(from[k].denormalize(u)) } else { 0.0 })
                .collect();
            channels[k] = self.channels[k].with_values(values)?;
        }
        Ok(TerrainImage { channels, norm_stats: *target })
    }

    /// Interleaved height x width x 5 copy of a square window, as f32.
    pub fn patch_hwc(&self, row0: usize, col0: usize, size: usize) -> Result<Vec<f32>> {
        let geom = self.geometry();
        geom.window(row0, col0, size)?;
        let mut out = Vec::with_capacity(size * size * 5);
        for r in row0..row0 + size {
            for c in col0..col0 + size {
                let i = geom.index(r, c);
                for ch in &self.channels {
                    out.push(ch.values()[i] as f32);
                }
            }
        }
        Ok(out)
    }
}

/// Builds the terrain image, computing normalisation ranges from the DEM.
pub fn build_terrain_image(dem: &Grid) -> Result<TerrainImage> {
    build_terrain_image_with(dem, None)
}

/// Builds the terrain image, optionally reusing stored normalisation ranges.
pub fn build_terrain_image_with(dem: &Grid, stats: Option<&NormStats>) -> Result<TerrainImage> {
    let mask = build_mask(dem);
    let feats = compute_features(dem, &mask)?;
    let (elev, s_elev) = rescale_linear(dem, &mask, stats.map(|s| s.elevation))?;
    let (slope, s_slope) = rescale_linear(&feats.slope, &mask, stats.map(|s| s.slope))?;
    let (aspect, s_aspect) = rescale_linear(&feats.aspect, &mask, stats.map(|s| s.aspect))?;
    let (curv, s_curv) = rescale_linear(&feats.curvature, &mask, stats.map(|s| s.curvature))?;
    Ok(TerrainImage {
        channels: [elev, slope, aspect, curv, mask.to_grid()],
        norm_stats: NormStats { elevation: s_elev, slope: s_slope, aspect: s_aspect, curvature: s_curv },
    })
}

/// Parameters of the synthetic catchment generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemParams {
    pub size: usize,
    pub cellsize: f64,
    /// Amplitude retained per diamond-square level, in [0, 1).
    pub roughness: f64,
    pub n_pits: usize,
    /// Initial corner amplitude in metres.
    pub relief: f64,
    pub seed: u64,
}

impl Default for DemParams {
    fn default() -> Self {
        DemParams { size: 257, cellsize: 1.0, roughness: 0.55, n_pits: 8, relief: 12.0, seed: 0 }
    }
}

/// Diamond-square heightfield with Gaussian depressions so that water ponds.
///
/// The field is generated on the next `2^k + 1` lattice, cropped to `size`
/// and shifted so its minimum is 0 m.
pub fn gen_synthetic_dem(p: &DemParams) -> Result<Grid> {
    if p.size < 33 {
        return invalid(format!("synthetic DEM size must be at least 33, got {}", p.size));
    }
    if !(0.0..1.0).contains(&p.roughness) {
        return invalid(format!("roughness must lie in [0, 1), got {}", p.roughness));
    }
    if !(p.relief > 0.0) {
        return invalid("relief must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut n = 2usize;
    while n + 1 < p.size {
        n *= 2;
    }
    let side = n + 1;
    let mut h = vec![0.0f64; side * side];
    let at = |r: usize, c: usize| r * side + c;

    let mut amp = p.relief;
    for &(r, c) in &[(0, 0), (0, n), (n, 0), (n, n)] {
        h[at(r, c)] = rng.random::<f64>() * amp;
    }
    let mut step = n;
    while step > 1 {
        let half = step / 2;
        amp *= p.roughness;
        // diamond
        for r in (half..n).step_by(step) {
            for c in (half..n).step_by(step) {
                let avg = (h[at(r - half, c - half)]
                    + h[at(r - half, c + half)]
                    + h[at(r + half, c - half)]
                    + h[at(r + half, c + half)])
                    / 4.0;
                h[at(r, c)] = avg + (rng.random::<f64>() - 0.5) * amp;
            }
        }
        // square
        for r in (0..=n).step_by(half) {
            let c0 = if (r / half).is_multiple_of(2) { half } else { 0 };
            for c in (c0..=n).step_by(step) {
                let mut sum = 0.0;
                let mut cnt = 0.0;
                if r >= half {
                    sum += h[at(r - half, c)];
                    cnt += 1.0;
                }
                if r + half <= n {
                    sum += h[at(r + half, c)];
                    cnt += 1.0;
                }
                if c >= half {
                    sum += h[at(r, c - half)];
                    cnt += 1.0;
                }
                if c + half <= n {
                    sum += h[at(r, c + half)];
                    cnt += 1.0;
                }
                h[at(r, c)] = sum / cnt + (rng.random::<f64>() - 0.5) * amp;
            }
        }
        step = half;
    }

    let size = p.size;
    let mut z: Vec<f64> = (0..size * size).map(|i| h[at(i / size, i % size)]).collect();

    for _ in 0..p.n_pits {
        let depth = rng.random_range(0.5..=2.0);
        let radius: f64 = rng.random_range(5.0..=20.0);
        let cr = rng.random_range(0..size) as f64;
        let cc = rng.random_range(0..size) as f64;
        let sigma = radius / 2.0;
        let reach = (radius * 2.0).ceil() as isize;
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let r = cr as isize + dr;
                let c = cc as isize + dc;
                if r < 0 || c < 0 || r >= size as isize || c >= size as isize {
                    continue;
                }
                let d2 = (dr * dr + dc * dc) as f64;
                z[r as usize * size + c as usize] -= depth * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }

    let min = z.iter().cloned().fold(f64::INFINITY, f64::min);
    for v in &mut z {
        *v -= min;
    }
    Grid::new(Geometry::new(size, size, p.cellsize), DEFAULT_NODATA, z)
}

/// Cells strictly lower than all eight neighbours (interior cells only).
pub fn strict_local_minima(dem: &Grid) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 1..dem.rows().saturating_sub(1) {
        for c in 1..dem.cols().saturating_sub(1) {
            let z = dem.get(r, c);
            let lowest = (0..9).filter(|&k| k != 4).all(|k| dem.get(r + k / 3 - 1, c + k % 3 - 1) > z);
            if lowest {
                out.push((r, c));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Samples f(x, y) on a 3x3 stencil centred at (x0, y0); row 0 is north.
    fn stencil(f: impl Fn(f64, f64) -> f64, x0: f64, y0: f64, l: f64) -> [f64; 9] {
        let mut w = [0.0; 9];
        for (k, v) in w.iter_mut().enumerate() {
            let dx = (k % 3) as f64 - 1.0;
            let dy = 1.0 - (k / 3) as f64;
            *v = f(x0 + dx * l, y0 + dy * l);
        }
        w
    }

    /// Curvatures from exact partial derivatives of a quadratic surface.
    fn oracle_curvatures(p: f64, q: f64, zxx: f64, zyy: f64, zxy: f64) -> (f64, f64) {
        let g = p * p + q * q;
        let profile = -(zxx * p * p + 2.0 * zxy * p * q + zyy * q * q) / g;
        let plan = (zxx * q * q - 2.0 * zxy * p * q + zyy * p * p) / g;
        (profile, plan)
    }

    #[test]
    fn flat_window() {
        let s = fit_surface(&[3.0; 9], 1.0);
        assert_eq!((s.gx, s.gy, s.profile_curv, s.plan_curv), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(s.aspect(), 0.0);
    }

    #[test]
    fn planar_ramp() {
        let s = fit_surface(&stencil(|x, _| x, 0.0, 0.0, 1.0), 1.0);
        assert_eq!((s.gx, s.gy), (1.0, 0.0));
        assert_eq!((s.profile_curv, s.plan_curv), (0.0, 0.0));
        // rises to the east, so water runs west
        assert_eq!(s.aspect(), 270.0);
    }

    #[test]
    fn paraboloid_at_origin() {
        let f = |x: f64, y: f64| (x * x + y * y) / 2.0;
        let s = fit_surface(&stencil(f, 0.0, 0.0, 1.0), 1.0);
        assert_eq!((s.gx, s.gy), (0.0, 0.0));
        assert_eq!((s.profile_curv, s.plan_curv), (0.0, 0.0));
        // off the origin the gradient is defined and the oracle applies
        let s = fit_surface(&stencil(f, 1.0, 0.0, 1.0), 1.0);
        let (pr, pl) = oracle_curvatures(1.0, 0.0, 1.0, 1.0, 0.0);
        assert_eq!((s.profile_curv, s.plan_curv), (pr, pl));
        assert_eq!((pr, pl), (-1.0, 1.0));
    }

    #[test]
    fn nodata_window_rejected() {
        let mut w = [1.0; 9];
        w[2] = -9999.0;
        assert!(fit_window(&w, 1.0, -9999.0).is_err());
        assert!(fit_window(&[1.0; 9], 1.0, -9999.0).is_ok());
    }

    #[test]
    fn aspect_compass_directions() {
        // surface falling toward the given compass direction
        for (deg, f) in [
            (0.0, (|_x: f64, y: f64| -y) as fn(f64, f64) -> f64),
            (90.0, |x, _| -x),
            (180.0, |_, y| y),
            (270.0, |x, _| x),
        ] {
            let s = fit_surface(&stencil(f, 0.0, 0.0, 1.0), 1.0);
            assert_eq!(s.aspect(), deg);
        }
        let s = fit_surface(&stencil(|x, y| -(x + y), 0.0, 0.0, 1.0), 1.0);
        assert!((s.aspect() - 45.0).abs() < 1e-12);
    }

    fn analytic_grid(n: usize, f: impl Fn(f64, f64) -> f64) -> Grid {
        let h = (n / 2) as f64;
        Grid::from_fn(Geometry::new(n, n, 1.0), |r, c| f(c as f64 - h, h - r as f64)).unwrap()
    }

    #[test]
    fn features_flat_and_ramp() {
        let flat = Grid::filled(Geometry::new(5, 5, 1.0), 7.0).unwrap();
        let f = compute_features(&flat, &build_mask(&flat)).unwrap();
        for g in [&f.slope, &f.aspect, &f.curvature] {
            assert!(g.values().iter().all(|&v| v == 0.0));
        }
        let ramp = analytic_grid(9, |x, _| x);
        let f = compute_features(&ramp, &build_mask(&ramp)).unwrap();
        for r in 1..8 {
            for c in 1..8 {
                assert_eq!(f.slope.get(r, c), 1.0);
            }
        }
    }

    #[test]
    fn paraboloid_slope_matches_closed_form() {
        let g = analytic_grid(33, |x, y| (x * x + y * y) / 2.0);
        let f = compute_features(&g, &build_mask(&g)).unwrap();
        for r in 1..32 {
            for c in 1..32 {
                let (x, y) = (c as f64 - 16.0, 16.0 - r as f64);
                assert!((f.slope.get(r, c) - x.hypot(y)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn too_small_and_nodata() {
        let g = Grid::filled(Geometry::new(2, 5, 1.0), 1.0).unwrap();
        assert!(compute_features(&g, &build_mask(&g)).is_err());
        let mut v = vec![1.0; 16];
        v[5] = DEFAULT_NODATA;
        let g = Grid::new(Geometry::new(4, 4, 1.0), DEFAULT_NODATA, v).unwrap();
        let f = compute_features(&g, &build_mask(&g)).unwrap();
        assert_eq!(f.slope.values()[5], DEFAULT_NODATA);
        assert_eq!(f.slope.values()[6], 0.0);
    }

    #[test]
    fn terrain_image_layout() {
        let flat = Grid::filled(Geometry::new(6, 6, 1.0), 3.0).unwrap();
        let img = build_terrain_image(&flat).unwrap();
        for k in 0..4 {
            assert!(img.channels[k].values().iter().all(|&v| v == 0.0));
        }
        assert!(img.channels[4].values().iter().all(|&v| v == 1.0));

        let ramp = analytic_grid(9, |x, _| x);
        let img = build_terrain_image(&ramp).unwrap();
        let e = img.channels[0].values();
        assert_eq!(e.iter().cloned().fold(f64::INFINITY, f64::min), -1.0);
        assert_eq!(e.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        for k in 0..4 {
            assert!(img.channels[k].values().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn renormalize_round_trips() {
        let dem = gen_synthetic_dem(&DemParams { size: 33, seed: 3, ..Default::default() }).unwrap();
        let img = build_terrain_image(&dem).unwrap();
        let mut other = img.norm_stats;
        other.elevation.max += 5.0;
        other.slope.min -= 0.5;
        let there = img.renormalize(&other).unwrap();
        let back = there.renormalize(&img.norm_stats).unwrap();
        for k in 0..4 {
            for (a, b) in back.channels[k].values().iter().zip(img.channels[k].values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let direct = build_terrain_image_with(&dem, Some(&other)).unwrap();
        for (a, b) in direct.channels[0].values().iter().zip(there.channels[0].values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_dem_is_deterministic() {
        let p = DemParams { size: 65, seed: 11, ..Default::default() };
        let a = gen_synthetic_dem(&p).unwrap();
        let b = gen_synthetic_dem(&p).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|&v| v >= 0.0));
        assert!(gen_synthetic_dem(&DemParams { size: 32, ..p }).is_err());
        let c = gen_synthetic_dem(&DemParams { size: 40, ..p }).unwrap();
        assert_eq!((c.rows(), c.cols()), (40, 40));
    }

    #[test]
    fn roughness_controls_slope() {
        let mean_slope = |roughness: f64| {
            let p = DemParams { size: 129, roughness, n_pits: 0, seed: 5, ..Default::default() };
            let dem = gen_synthetic_dem(&p).unwrap();
            let f = compute_features(&dem, &build_mask(&dem)).unwrap();
            let s = f.slope.values();
            (s.iter().sum::<f64>() / s.len() as f64, s.iter().cloned().fold(0.0, f64::max))
        };
        let (smooth_mean, smooth_max) = mean_slope(0.0);
        let (rough_mean, _) = mean_slope(0.8);
        assert!(smooth_max < rough_mean, "{smooth_max} vs {rough_mean}");
        assert!(smooth_mean < rough_mean);
    }

    #[test]
    fn pit_creates_local_minimum() {
        let p = DemParams { size: 65, roughness: 0.0, n_pits: 1, relief: 1.0, seed: 2, ..Default::default() };
        let dem = gen_synthetic_dem(&p).unwrap();
        assert!(!strict_local_minima(&dem).is_empty());
        let none = gen_synthetic_dem(&DemParams { n_pits: 0, ..p }).unwrap();
        assert!(strict_local_minima(&none).is_empty());
    }

    proptest! {
        #[test]
        fn quadratic_surfaces_are_exact(
            a in -4i32..4, b in -4i32..4, cxy in -4i32..4, d in -4i32..4, e in -4i32..4,
            x0 in -3i32..3, y0 in -3i32..3,
        ) {
            let (a, b, cxy, d, e) = (a as f64 / 4.0, b as f64 / 4.0, cxy as f64 / 4.0, d as f64, e as f64);
            let f = |x: f64, y: f64| a * x * x + b * y * y + cxy * x * y + d * x + e * y + 1.0;
            let (x0, y0) = (x0 as f64, y0 as f64);
            let s = fit_surface(&stencil(f, x0, y0, 1.0), 1.0);
            let p = 2.0 * a * x0 + cxy * y0 + d;
            let q = 2.0 * b * y0 + cxy * x0 + e;
            prop_assert_eq!((s.gx, s.gy), (p, q));
            if p * p + q * q > 0.0 {
                let (pr, pl) = oracle_curvatures(p, q, 2.0 * a, 2.0 * b, cxy);
                prop_assert!((s.profile_curv - pr).abs() <= 1e-12 * (1.0 + pr.abs()));
                prop_assert!((s.plan_curv - pl).abs() <= 1e-12 * (1.0 + pl.abs()));
            }
        }

        #[test]
        fn constant_offset_and_power_of_two_scale(
            vals in prop::collection::vec(0i32..2048, 36),
            shift in -100i32..100,
            exp in -2i32..3,
        ) {
            let geom = Geometry::new(6, 6, 1.0);
            let base = Grid::new(geom, DEFAULT_NODATA, vals.iter().map(|&v| v as f64 / 64.0).collect()).unwrap();
            let m = build_mask(&base);
            let f0 = compute_features(&base, &m).unwrap();
            let shifted = base.with_values(base.values().iter().map(|v| v + shift as f64).collect()).unwrap();
            prop_assert_eq!(&compute_features(&shifted, &m).unwrap(), &f0);

            let s = 2f64.powi(exp);
            let scaled = base.with_values(base.values().iter().map(|v| v * s).collect()).unwrap();
            let fs = compute_features(&scaled, &m).unwrap();
            for i in 0..36 {
                prop_assert_eq!(fs.slope.values()[i], s * f0.slope.values()[i]);
                prop_assert_eq!(fs.curvature.values()[i], s * f0.curvature.values()[i]);
                if f0.slope.values()[i] > FLAT_SLOPE {
                    prop_assert_eq!(fs.aspect.values()[i], f0.aspect.values()[i]);
                }
            }
        }

        #[test]
        fn rotation_rotates_features(vals in prop::collection::vec(-50.0f64..50.0, 35)) {
            let g = Grid::new(Geometry::new(5, 7, 1.0), DEFAULT_NODATA, vals).unwrap();
            let rot = g.rotate_ccw();
            let f = compute_features(&g, &build_mask(&g)).unwrap();
            let fr = compute_features(&rot, &build_mask(&rot)).unwrap();
            prop_assert_eq!(&fr.slope, &f.slope.rotate_ccw());
            let expect = f.aspect.rotate_ccw();
            for i in 0..35 {
                if fr.slope.values()[i] > 1e-6 {
                    let d = (fr.aspect.values()[i] - (expect.values()[i] + 270.0) % 360.0).abs();
                    prop_assert!(d < 1e-9 || (d - 360.0).abs() < 1e-9, "{}", d);
                }
            }
        }
    }
}
