//! Single-band rasters, catchment masks and Esri ASCII grid I/O.
//!
//! Cells are stored row-major with row 0 at the northern edge, as in the
//! ASCII grid layout.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Raster extent and georeferencing shared by all channels of a catchment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub rows: usize,
    pub cols: usize,
    pub cellsize: f64,
    pub xll: f64,
    pub yll: f64,
}

impl Geometry {
    pub fn new(rows: usize, cols: usize, cellsize: f64) -> Self {
        Geometry { rows, cols, cellsize, xll: 0.0, yll: 0.0 }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Same extent and cell layout; corner coordinates are compared exactly.
    pub fn same_as(&self, other: &Geometry) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.cellsize == other.cellsize
            && self.xll == other.xll
            && self.yll == other.yll
    }

    pub fn check_same(&self, other: &Geometry, what: &str) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Geometry(format!(
                "{what}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return invalid("raster must have at least one row and column");
        }
        if !(self.cellsize > 0.0 && self.cellsize.is_finite()) {
            return invalid(format!("cellsize must be positive, got {}", self.cellsize));
        }
        if !self.xll.is_finite() || !self.yll.is_finite() {
            return invalid("corner coordinates must be finite");
        }
        Ok(())
    }

    /// Geometry of a `size`x`size` window anchored at (`row0`, `col0`).
    pub fn window(&self, row0: usize, col0: usize, size: usize) -> Result<Geometry> {
        if size == 0 || row0 + size > self.rows || col0 + size > self.cols {
            return Err(Error::Bounds { row0, col0, size, rows: self.rows, cols: self.cols });
        }
        Ok(Geometry {
            rows: size,
            cols: size,
            cellsize: self.cellsize,
            xll: self.xll + col0 as f64 * self.cellsize,
            yll: self.yll + (self.rows - row0 - size) as f64 * self.cellsize,
        })
    }
}

/// A georeferenced grid of one scalar quantity with a nodata sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    geom: Geometry,
    nodata: f64,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(geom: Geometry, nodata: f64, values: Vec<f64>) -> Result<Self> {
        geom.validate()?;
        if values.len() != geom.len() {
            return Err(Error::Shape(format!(
                "{} values for a {}x{} grid",
                values.len(),
                geom.rows,
                geom.cols
            )));
        }
        if !nodata.is_finite() {
            return invalid("nodata sentinel must be finite");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite value at cell {i}"));
        }
        Ok(Grid { geom, nodata, values })
    }

    pub fn filled(geom: Geometry, value: f64) -> Result<Self> {
        Grid::new(geom, DEFAULT_NODATA, vec![value; geom.len()])
    }

    /// Builds a grid from a cell function `f(row, col)`.
    pub fn from_fn(geom: Geometry, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(geom.len());
        for r in 0..geom.rows {
            for c in 0..geom.cols {
                values.push(f(r, c));
            }
        }
        Grid::new(geom, DEFAULT_NODATA, values)
    }

    /// Same geometry and nodata as `self`, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Grid::new(self.geom, self.nodata, values)
    }

    #[inline]
    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }
    #[inline]
    pub fn rows(&self) -> usize {
        self.geom.rows
    }
    #[inline]
    pub fn cols(&self) -> usize {
        self.geom.cols
    }
    #[inline]
    pub fn cellsize(&self) -> f64 {
        self.geom.cellsize
    }
    #[inline]
    pub fn nodata(&self) -> f64 {
        self.nodata
    }
    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.geom.index(row, col)]
    }
    #[inline]
    pub fn is_nodata_value(&self, v: f64) -> bool {
        v == self.nodata
    }
    #[inline]
    pub fn is_data(&self, row: usize, col: usize) -> bool {
        !self.is_nodata_value(self.get(row, col))
    }

    pub fn set_nodata(&mut self, nodata: f64) -> Result<()> {
        if !nodata.is_finite() {
            return invalid("nodata sentinel must be finite");
        }
        for v in &mut self.values {
            if *v == self.nodata {
                *v = nodata;
            }
        }
        self.nodata = nodata;
        Ok(())
    }

    /// Copies a `size`x`size` window; the corner coordinates follow the window.
    pub fn extract_window(&self, row0: usize, col0: usize, size: usize) -> Result<Grid> {
        let geom = self.geom.window(row0, col0, size)?;
        let mut values = Vec::with_capacity(size * size);
        for r in row0..row0 + size {
            let start = self.geom.index(r, col0);
            values.extend_from_slice(&self.values[start..start + size]);
        }
        Ok(Grid { geom, nodata: self.nodata, values })
    }

    /// Mirrors the grid left-right (columns reversed).
    pub fn mirror_cols(&self) -> Grid {
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.rows() {
            let row = &self.values[r * self.cols()..(r + 1) * self.cols()];
            values.extend(row.iter().rev());
        }
        Grid { geom: self.geom, nodata: self.nodata, values }
    }

    /// Rotates the grid 90 degrees counter-clockwise.
    pub fn rotate_ccw(&self) -> Grid {
        let (rows, cols) = (self.rows(), self.cols());
        let geom = Geometry { rows: cols, cols: rows, ..self.geom };
        let mut values = vec![0.0; self.values.len()];
        for r in 0..rows {
            for c in 0..cols {
                // east column becomes the north row
                values[(cols - 1 - c) * rows + r] = self.get(r, c);
            }
        }
        Grid { geom, nodata: self.nodata, values }
    }
}

/// Catchment mask: +1 on data cells, -1 on nodata cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGrid {
    geom: Geometry,
    data: Vec<bool>,
}

impl MaskGrid {
    pub fn all_data(geom: Geometry) -> Self {
        MaskGrid { geom, data: vec![true; geom.len()] }
    }

    pub fn from_flags(geom: Geometry, data: Vec<bool>) -> Result<Self> {
        geom.validate()?;
        if data.len() != geom.len() {
            return Err(Error::Shape(format!("{} mask flags for {} cells", data.len(), geom.len())));
        }
        Ok(MaskGrid { geom, data })
    }

    /// Interprets a grid of +1/-1 values as a mask.
    pub fn from_grid(g: &Grid) -> Result<Self> {
        let mut data = Vec::with_capacity(g.values.len());
        for (i, &v) in g.values.iter().enumerate() {
            match v {
                v if v == 1.0 => data.push(true),
                v if v == -1.0 => data.push(false),
                _ => return invalid(format!("mask cell {i} holds {v}, expected +1 or -1")),
            }
        }
        Ok(MaskGrid { geom: g.geom, data })
    }

    #[inline]
    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }
    #[inline]
    pub fn is_data(&self, i: usize) -> bool {
        self.data[i]
    }
    #[inline]
    pub fn flags(&self) -> &[bool] {
        &self.data
    }
    pub fn count_data(&self) -> usize {
        self.data.iter().filter(|&&d| d).count()
    }
    /// Cell value as stored in the terrain image.
    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        if self.data[i] {
            1.0
        } else {
            -1.0
        }
    }

    pub fn to_grid(&self) -> Grid {
        let values = (0..self.data.len()).map(|i| self.value(i)).collect();
        Grid { geom: self.geom, nodata: DEFAULT_NODATA, values }
    }

    pub fn extract_window(&self, row0: usize, col0: usize, size: usize) -> Result<MaskGrid> {
        let geom = self.geom.window(row0, col0, size)?;
        let mut data = Vec::with_capacity(size * size);
        for r in row0..row0 + size {
            let start = self.geom.index(r, col0);
            data.extend_from_slice(&self.data[start..start + size]);
        }
        Ok(MaskGrid { geom, data })
    }
}

/// +1 where the DEM holds data, -1 where it holds the nodata sentinel.
pub fn build_mask(dem: &Grid) -> MaskGrid {
    MaskGrid {
        geom: dem.geom,
        data: dem.values.iter().map(|&v| !dem.is_nodata_value(v)).collect(),
    }
}

/// Value range used to map a channel onto [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    /// Maps `v` so `min` lands on -1 and `max` on +1; a degenerate range maps to 0.
    #[inline]
    pub fn normalize(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v - self.min) / (self.max - self.min) * 2.0 - 1.0
        } else {
            0.0
        }
    }

    #[inline]
    pub fn denormalize(&self, u: f64) -> f64 {
        if self.max > self.min {
            (u + 1.0) / 2.0 * (self.max - self.min) + self.min
        } else {
            self.min
        }
    }
}

/// Affinely rescales data cells into [-1, 1]; nodata cells become 0.
///
/// When `stats` is `None` the range is taken over the data cells of `mask`.
/// The range actually used is returned so it can be reapplied at prediction
/// time.
pub fn rescale_linear(g: &Grid, mask: &MaskGrid, stats: Option<Range>) -> Result<(Grid, Range)> {
    g.geom.check_same(&mask.geom, "rescale_linear")?;
    if mask.count_data() == 0 {
        return Err(Error::EmptyMask);
    }
    let range = match stats {
        Some(r) => r,
        None => {
            let mut r = Range { min: f64::INFINITY, max: f64::NEG_INFINITY };
            for (i, &v) in g.values.iter().enumerate() {
                if mask.is_data(i) {
                    r.min = r.min.min(v);
                    r.max = r.max.max(v);
                }
            }
            r
        }
    };
    let values = g
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| if mask.is_data(i) { range.normalize(v) } else { 0.0 })
        .collect();
    Ok((Grid { geom: g.geom, nodata: g.nodata, values }, range))
}

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

/// Parses an Esri ASCII grid.
///
/// Header keys are matched case-insensitively; `NODATA_value` may be
/// omitted, in which case -9999 is assumed.
pub fn read_ascii_grid(text: &str) -> Result<Grid> {
    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut cellsize = None;
    let mut nodata = None;

    let mut lines = text.lines().enumerate().peekable();
    while let Some(&(idx, line)) = lines.peek() {
        let mut toks = line.split_whitespace();
        let Some(key) = toks.next() else {
            lines.next();
            continue;
        };
        if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
            break;
        }
        let lineno = idx + 1;
        let Some(val) = toks.next() else {
            return parse_err(lineno, format!("header key `{key}` has no value"));
        };
        if toks.next().is_some() {
            return parse_err(lineno, format!("trailing tokens after `{key}`"));
        }
        let num = || -> Result<f64> {
            val.parse::<f64>()
                .or_else(|_| parse_err(lineno, format!("bad number `{val}` for `{key}`")))
        };
        let count = || -> Result<usize> {
            val.parse::<usize>()
                .or_else(|_| parse_err(lineno, format!("bad count `{val}` for `{key}`")))
        };
        match key.to_ascii_lowercase().as_str() {
            "ncols" => ncols = Some(count()?),
            "nrows" => nrows = Some(count()?),
            "xllcorner" => xll = Some(num()?),
            "yllcorner" => yll = Some(num()?),
            "cellsize" => cellsize = Some(num()?),
            "nodata_value" => nodata = Some(num()?),
            _ => return parse_err(lineno, format!("unknown header key `{key}`")),
        }
        lines.next();
    }

    let header_line = lines.peek().map_or(text.lines().count(), |&(i, _)| i + 1);
    let missing = |k: &str| Error::Parse { line: header_line, msg: format!("missing header `{k}`") };
    let cols = ncols.ok_or_else(|| missing("ncols"))?;
    let rows = nrows.ok_or_else(|| missing("nrows"))?;
    let geom = Geometry {
        rows,
        cols,
        cellsize: cellsize.ok_or_else(|| missing("cellsize"))?,
        xll: xll.ok_or_else(|| missing("xllcorner"))?,
        yll: yll.ok_or_else(|| missing("yllcorner"))?,
    };
    let nodata = nodata.unwrap_or(DEFAULT_NODATA);

    let mut values = Vec::with_capacity(rows * cols);
    let mut last_line = header_line;
    for (idx, line) in lines {
        last_line = idx + 1;
        for tok in line.split_whitespace() {
            let v: f64 = match tok.parse() {
                Ok(v) => v,
                Err(_) => return parse_err(idx + 1, format!("non-numeric token `{tok}`")),
            };
            if !v.is_finite() {
                return parse_err(idx + 1, format!("non-finite value `{tok}`"));
            }
            if values.len() == rows * cols {
                return parse_err(idx + 1, format!("more than the declared {} cells", rows * cols));
            }
            values.push(v);
        }
    }
    if values.len() != rows * cols {
        return parse_err(
            last_line,
            format!("declared {rows}x{cols} = {} cells, found {}", rows * cols, values.len()),
        );
    }
    Grid::new(geom, nodata, values).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })
}

/// Formats a grid as Esri ASCII; values use shortest round-trip notation.
pub fn write_ascii_grid(g: &Grid) -> String {
    let mut out = String::with_capacity(g.values.len() * 8 + 128);
    let _ = writeln!(out, "ncols {}", g.cols());
    let _ = writeln!(out, "nrows {}", g.rows());
    let _ = writeln!(out, "xllcorner {:?}", g.geom.xll);
    let _ = writeln!(out, "yllcorner {:?}", g.geom.yll);
    let _ = writeln!(out, "cellsize {:?}", g.geom.cellsize);
    let _ = writeln!(out, "NODATA_value {}", g.nodata);
    for row in g.values.chunks(g.cols()) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let text = fs::read_to_string(path.as_ref())?;
    read_ascii_grid(&text)
}

pub fn save_grid(path: impl AsRef<Path>, g: &Grid) -> Result<()> {
    fs::write(path.as_ref(), write_ascii_grid(g))?;
    Ok(())
}
