//! Grid container and preprocessing primitives: wind speed, bilinear
//! resizing, mirror padding, cropping, and global standardization.

use crate::error::{Error, Result};

/// A dense h×w field of f64 values in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    h: usize,
    w: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(h: usize, w: usize, values: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::Shape(format!("grid dimensions must be positive, got {h}x{w}")));
        }
        if values.len() != h * w {
            return Err(Error::Shape(format!(
                "value count {} does not match {h}x{w}",
                values.len()
            )));
        }
        Ok(Self { h, w, values })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self { h, w, values: vec![0.0; h * w] }
    }

    pub fn filled(h: usize, w: usize, value: f64) -> Self {
        Self { h, w, values: vec![value; h * w] }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.w + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.values[r * self.w + c]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same shape, values produced by `f` over the current ones.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { h: self.h, w: self.w, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.h == other.h && self.w == other.w
    }
}

/// Elementwise wind speed √(u² + v²).
pub fn wind_speed(u: &Grid, v: &Grid) -> Result<Grid> {
    if !u.same_shape(v) {
        return Err(Error::Shape(format!(
            "wind components differ in shape: {}x{} vs {}x{}",
            u.h, u.w, v.h, v.w
        )));
    }
    let values = u
        .values
        .iter()
        .zip(&v.values)
        .map(|(&a, &b)| (a * a + b * b).sqrt())
        .collect();
    Ok(Grid { h: u.h, w: u.w, values })
}

/// Align-corners bilinear resampling: output pixel `i` reads source
/// coordinate `i·(h−1)/(h2−1)` (0 when the output axis has length 1), so
/// corner pixels are preserved exactly and resizing to the same size is the
/// identity.
pub fn bilinear_resize(g: &Grid, h2: usize, w2: usize) -> Result<Grid> {
    if h2 == 0 || w2 == 0 {
        return Err(Error::Shape("target dimensions must be positive".into()));
    }
    if h2 == g.h && w2 == g.w {
        return Ok(g.clone());
    }
    let src_coord = |i: usize, n_out: usize, n_in: usize| -> f64 {
        if n_out == 1 {
            0.0
        } else {
            i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
        }
    };
    let mut values = Vec::with_capacity(h2 * w2);
    for i in 0..h2 {
        let sy = src_coord(i, h2, g.h);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(g.h - 1);
        let fy = sy - y0 as f64;
        for j in 0..w2 {
            let sx = src_coord(j, w2, g.w);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(g.w - 1);
            let fx = sx - x0 as f64;
            let v = g.at(y0, x0) * (1.0 - fy) * (1.0 - fx)
                + g.at(y0, x1) * (1.0 - fy) * fx
                + g.at(y1, x0) * fy * (1.0 - fx)
                + g.at(y1, x1) * fy * fx;
            values.push(v);
        }
    }
    Ok(Grid { h: h2, w: w2, values })
}

/// Pads bottom/right by reflection about the last row/column without
/// duplicating the edge itself: row h reflects to row h−2, etc.
pub fn mirror_pad(g: &Grid, h2: usize, w2: usize) -> Result<Grid> {
    if h2 < g.h || w2 < g.w {
        return Err(Error::Parameter(format!(
            "mirror_pad target {h2}x{w2} smaller than source {}x{}",
            g.h, g.w
        )));
    }
    if h2 - g.h >= g.h || w2 - g.w >= g.w {
        return Err(Error::Parameter(format!(
            "mirror_pad amount exceeds source size: {}x{} -> {h2}x{w2}",
            g.h, g.w
        )));
    }
    let reflect = |i: usize, n: usize| -> usize {
        if i < n {
            i
        } else {
            2 * (n - 1) - i
        }
    };
    let mut values = Vec::with_capacity(h2 * w2);
    for i in 0..h2 {
        let si = reflect(i, g.h);
        for j in 0..w2 {
            values.push(g.at(si, reflect(j, g.w)));
        }
    }
    Ok(Grid { h: h2, w: w2, values })
}

/// Top-left h2×w2 block.
pub fn crop(g: &Grid, h2: usize, w2: usize) -> Result<Grid> {
    if h2 > g.h || w2 > g.w {
        return Err(Error::Parameter(format!(
            "crop target {h2}x{w2} larger than source {}x{}",
            g.h, g.w
        )));
    }
    if h2 == 0 || w2 == 0 {
        return Err(Error::Shape("crop target must be non-empty".into()));
    }
    let mut values = Vec::with_capacity(h2 * w2);
    for i in 0..h2 {
        let row = &g.values[i * g.w..i * g.w + w2];
        values.extend_from_slice(row);
    }
    Ok(Grid { h: h2, w: w2, values })
}

/// Global mean/std pair fitted over all pixels of a training set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

const STD_FLOOR: f64 = 1e-8;

impl Standardizer {
    pub fn new(mean: f64, std: f64) -> Self {
        Self { mean, std: std.max(STD_FLOOR) }
    }

    /// Two-pass global mean/std over every pixel of every grid. An
    /// all-constant set clamps std to the 1e−8 floor and logs a warning.
    pub fn fit(train: &[Grid]) -> Result<Self> {
        let count: usize = train.iter().map(Grid::len).sum();
        if count == 0 {
            return Err(Error::Parameter("standardizer needs a non-empty training set".into()));
        }
        let sum: f64 = train.iter().flat_map(|g| g.values.iter()).sum();
        let mean = sum / count as f64;
        let ss: f64 = train
            .iter()
            .flat_map(|g| g.values.iter())
            .map(|&v| (v - mean) * (v - mean))
            .sum();
        let std = (ss / count as f64).sqrt();
        if std < STD_FLOOR {
            log::warn!("training set is (near-)constant; clamping std {std} to {STD_FLOOR}");
        }
        Ok(Self::new(mean, std))
    }

    pub fn apply(&self, g: &Grid) -> Grid {
        g.map(|v| (v - self.mean) / self.std)
    }

    pub fn invert(&self, g: &Grid) -> Grid {
        g.map(|v| v * self.std + self.mean)
    }
}
