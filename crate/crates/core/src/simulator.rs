//! Mass-conserving cellular-automata flood oracle.
//!
//! Each step first adds rain uniformly over the catchment, then moves water
//! downhill: a wet cell spreads part of its depth over the 4-neighbours whose
//! water surface lies below its own, in proportion to the head difference.
//! Outflow is capped at `alpha` times the largest head difference and at the
//! cell's own depth, so depths never go negative and no CFL limit applies.
//! Boundaries are closed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rainfall::{Hyetograph, N_BINS};
use crate::raster::{build_mask, Grid, MaskGrid};

const RAIN_SECONDS: f64 = N_BINS as f64 * 300.0;
const MM_PER_HOUR_TO_M_PER_SECOND: f64 = 3.6e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Seconds per step.
    pub dt: f64,
    /// Seconds of routing after the rain stops.
    pub drain_time: f64,
    /// Outflow cap as a fraction of the largest head difference, in (0, 0.5].
    pub alpha: f64,
    /// Depths at or below this (m) do not move.
    pub min_depth: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { dt: 5.0, drain_time: 1800.0, alpha: 0.5, min_depth: 1e-4 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return invalid(format!("alpha must lie in (0, 0.5], got {}", self.alpha));
        }
        if !(self.min_depth >= 0.0) {
            return invalid("min_depth must be non-negative");
        }
        if !(self.drain_time >= 0.0 && self.drain_time.is_finite()) {
            return invalid("drain_time must be non-negative");
        }
        Ok(())
    }

    pub fn rain_steps(&self) -> usize {
        (RAIN_SECONDS / self.dt).ceil() as usize
    }

    pub fn drain_steps(&self) -> usize {
        (self.drain_time / self.dt).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Per-cell maximum depth over all steps (m).
    pub max_depth: Grid,
    pub final_depth: Grid,
    /// Rain volume added (m^3).
    pub rain_in: f64,
    /// Water volume on the surface at the end (m^3).
    pub stored: f64,
}

/// Relative volume discrepancy; 0 when no rain fell.
pub fn mass_balance(r: &SimResult) -> f64 {
    if r.rain_in == 0.0 {
        0.0
    } else {
        (r.rain_in - r.stored).abs() / r.rain_in
    }
}

/// Adds `intensity * dt` of rain (mm/h, s) to every data cell.
pub fn rain_step(depth: &Grid, intensity: f64, dt: f64, mask: &MaskGrid) -> Result<Grid> {
    depth.geometry().check_same(mask.geometry(), "rain_step")?;
    if !(intensity >= 0.0) {
        return invalid(format!("rain intensity must be non-negative, got {intensity}"));
    }
    let mut v = depth.values().to_vec();
    add_rain(&mut v, intensity * dt / MM_PER_HOUR_TO_M_PER_SECOND, mask.flags());
    depth.with_values(v)
}

fn add_rain(depth: &mut [f64], dz: f64, data: &[bool]) {
    if dz == 0.0 {
        return;
    }
    for (d, &ok) in depth.iter_mut().zip(data) {
        if ok {
            *d += dz;
        }
    }
}

/// Sums up to four terms in ascending order, so the result does not depend on
/// neighbour enumeration order.
#[inline]
fn ordered_sum(mut t: [f64; 4], n: usize) -> f64 {
    let t = &mut t[..n];
    t.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    t.iter().fold(0.0, |acc, v| acc + v)
}

/// Reusable per-step scratch for [`Transfer::step`].
struct Transfer<'a> {
    rows: usize,
    cols: usize,
    elev: &'a [f64],
    data: &'a [bool],
    alpha: f64,
    min_depth: f64,
    head: Vec<f64>,
    outflow: Vec<f64>,
    spread: Vec<f64>,
    next: Vec<f64>,
}

impl<'a> Transfer<'a> {
    fn new(dem: &'a Grid, data: &'a [bool], cfg: &SimConfig) -> Self {
        let n = dem.values().len();
        Transfer {
            rows: dem.rows(),
            cols: dem.cols(),
            elev: dem.values(),
            data,
            alpha: cfg.alpha,
            min_depth: cfg.min_depth,
            head: vec![0.0; n],
            outflow: vec![0.0; n],
            spread: vec![0.0; n],
            next: vec![0.0; n],
        }
    }

    #[inline]
    fn neighbours(rows: usize, cols: usize, i: usize) -> ([usize; 4], usize) {
        let (r, c) = (i / cols, i % cols);
        let mut out = [0; 4];
        let mut n = 0;
        if r > 0 {
            out[n] = i - cols;
            n += 1;
        }
        if c + 1 < cols {
            out[n] = i + 1;
            n += 1;
        }
        if r + 1 < rows {
            out[n] = i + cols;
            n += 1;
        }
        if c > 0 {
            out[n] = i - 1;
            n += 1;
        }
        (out, n)
    }

    /// One synchronous update; `depth` is replaced by the post-step state.
    fn step(&mut self, depth: &mut Vec<f64>) {
        let (rows, cols) = (self.rows, self.cols);
        let (elev, data, alpha, min_depth) = (self.elev, self.data, self.alpha, self.min_depth);
        for i in 0..depth.len() {
            self.head[i] = elev[i] + depth[i];
        }
        let head = &self.head;
        let d: &[f64] = depth;
        // outflow and total head drop of every cell, from the pre-step state
        self.outflow
            .par_iter_mut()
            .zip(self.spread.par_iter_mut())
            .enumerate()
            .for_each(|(i, (out, spread))| {
                *out = 0.0;
                *spread = 0.0;
                if !data[i] || d[i] <= min_depth {
                    return;
                }
                let (nb, n) = Self::neighbours(rows, cols, i);
                let mut drops = [0.0; 4];
                let mut k = 0;
                let mut dmax = 0.0f64;
                for &j in &nb[..n] {
                    if data[j] && head[i] > head[j] {
                        let delta = head[i] - head[j];
                        drops[k] = delta;
                        k += 1;
                        dmax = dmax.max(delta);
                    }
                }
                if k > 0 {
                    *out = d[i].min(alpha * dmax);
                    *spread = ordered_sum(drops, k);
                }
            });
        let (outflow, spread) = (&self.outflow, &self.spread);
        // each cell gathers its inflows from the fixed pre-step quantities
        self.next.par_iter_mut().enumerate().for_each(|(i, next)| {
            if !data[i] {
                *next = d[i];
                return;
            }
            let (nb, n) = Self::neighbours(rows, cols, i);
            let mut inflow = [0.0; 4];
            let mut k = 0;
            for &j in &nb[..n] {
                if outflow[j] > 0.0 && head[j] > head[i] {
                    inflow[k] = outflow[j] * (head[j] - head[i]) / spread[j];
                    k += 1;
                }
            }
            *next = (d[i] - outflow[i]) + ordered_sum(inflow, k);
        });
        std::mem::swap(depth, &mut self.next);
    }
}

/// One transfer step on standalone grids.
pub fn transfer_step(dem: &Grid, depth: &Grid, cfg: &SimConfig, mask: &MaskGrid) -> Result<Grid> {
    cfg.validate()?;
    dem.geometry().check_same(depth.geometry(), "transfer_step")?;
    dem.geometry().check_same(mask.geometry(), "transfer_step")?;
    if let Some(v) = depth.values().iter().zip(mask.flags()).find(|(v, &ok)| ok && **v < 0.0) {
        return invalid(format!("negative depth {}", v.0));
    }
    let mut d = depth.values().to_vec();
    Transfer::new(dem, mask.flags(), cfg).step(&mut d);
    depth.with_values(d)
}

/// Runs the hour of rain followed by the drainage period.
pub fn run(dem: &Grid, h: &Hyetograph, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let mask = build_mask(dem);
    let data = mask.flags();
    let n = dem.values().len();
    let mut depth = vec![0.0; n];
    let mut max_depth = vec![0.0; n];
    let mut rain_depth = 0.0;
    let mut transfer = Transfer::new(dem, data, cfg);

    let track = |depth: &[f64], max_depth: &mut [f64]| {
        for (m, &d) in max_depth.iter_mut().zip(depth) {
            if d > *m {
                *m = d;
            }
        }
    };

    for k in 0..cfg.rain_steps() {
        let t = k as f64 * cfg.dt;
        let dt = cfg.dt.min(RAIN_SECONDS - t);
        let dz = h.intensity_at(t) * dt / MM_PER_HOUR_TO_M_PER_SECOND;
        add_rain(&mut depth, dz, data);
        rain_depth += dz;
        transfer.step(&mut depth);
        track(&depth, &mut max_depth);
    }
    for _ in 0..cfg.drain_steps() {
        transfer.step(&mut depth);
        track(&depth, &mut max_depth);
    }

    let area = dem.cellsize() * dem.cellsize();
    let n_data = mask.count_data() as f64;
    let stored = depth.iter().zip(data).filter(|(_, &ok)| ok).map(|(d, _)| d).sum::<f64>() * area;
    let nodata = dem.nodata();
    let finish = |v: Vec<f64>| {
        let v = v.into_iter().zip(data).map(|(d, &ok)| if ok { d } else { nodata }).collect();
        dem.with_values(v)
    };
    Ok(SimResult {
        max_depth: finish(max_depth)?,
        final_depth: finish(depth)?,
        rain_in: rain_depth * n_data * area,
        stored,
    })
}

/// Mass ledger written next to simulated rasters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassLedger {
    pub hyetograph: String,
    pub rain_in_m3: f64,
    pub stored_m3: f64,
    pub relative_error: f64,
    pub rain_steps: usize,
    pub drain_steps: usize,
    pub config: SimConfig,
}

impl MassLedger {
    pub fn new(h: &Hyetograph, cfg: &SimConfig, r: &SimResult) -> Self {
        MassLedger {
            hyetograph: h.name.clone(),
            rain_in_m3: r.rain_in,
            stored_m3: r.stored,
            relative_error: mass_balance(r),
            rain_steps: cfg.rain_steps(),
            drain_steps: cfg.drain_steps(),
            config: *cfg,
        }
    }
}
