//! Gaussian-kernel density rasters.
//!
//! Each cell holds `sum_k exp(-(dx_k^2 + dy_k^2) / alpha)` over the events,
//! evaluated at the cell centre. By default `dx`/`dy` are raw degree offsets
//! (longitude, latitude). Events farther than `5 * sqrt(alpha)` from a cell
//! are skipped.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{BBox, GeoError, GeoPoint, KM_PER_DEGREE};

pub const DEFAULT_ALPHA: f64 = 1e-4;
pub const CUTOFF_SIGMAS: f64 = 5.0;
pub const NODATA: i32 = -9999;
pub const PGM_MAX: u32 = 65535;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatmapError {
    #[error("alpha must be finite and > 0, got {0}")]
    InvalidAlpha(f64),
    #[error("raster dimensions must be >= 1, got {width}x{height}")]
    InvalidSize { width: usize, height: usize },
    #[error(transparent)]
    BBox(#[from] GeoError),
}

/// Units of the offsets fed to the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpace {
    /// Raw degree offsets; `alpha` in squared degrees.
    #[default]
    Degrees,
    /// Local planar kilometers around the event; `alpha` in km^2.
    Kilometers,
}

impl std::str::FromStr for KernelSpace {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "degrees" | "deg" => Ok(KernelSpace::Degrees),
            "kilometers" | "km" => Ok(KernelSpace::Kilometers),
            other => Err(format!(
                "unknown kernel space '{other}' (expected degrees or km)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapParams {
    pub alpha: f64,
    pub width: usize,
    pub height: usize,
    pub bbox: BBox,
    pub normalize: bool,
    pub space: KernelSpace,
}

impl HeatmapParams {
    pub fn new(bbox: BBox) -> Self {
        HeatmapParams {
            alpha: DEFAULT_ALPHA,
            width: 512,
            height: 512,
            bbox,
            normalize: true,
            space: KernelSpace::Degrees,
        }
    }

    pub fn validate(&self) -> Result<(), HeatmapError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(HeatmapError::InvalidAlpha(self.alpha));
        }
        if self.width == 0 || self.height == 0 {
            return Err(HeatmapError::InvalidSize {
                width: self.width,
                height: self.height,
            });
        }
        self.bbox.validate()?;
        Ok(())
    }
}

/// Row-major grid; row 0 is the northern edge, column 0 the western edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub bbox: BBox,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn zeros(width: usize, height: usize, bbox: BBox) -> Self {
        Raster {
            width,
            height,
            bbox,
            values: vec![0.0; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn cell_width(&self) -> f64 {
        self.bbox.lon_span() / self.width as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.bbox.lat_span() / self.height as f64
    }

    /// (lat, lon) of a cell centre.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        cell_center(&self.bbox, self.width, self.height, row, col)
    }

    /// Cell containing `p`, if it lies inside the raster extent.
    pub fn cell_of(&self, p: &GeoPoint) -> Option<(usize, usize)> {
        if !self.bbox.contains(p) {
            return None;
        }
        let col = ((p.lon() - self.bbox.min_lon) / self.cell_width()).floor() as usize;
        let row = ((self.bbox.max_lat - p.lat()) / self.cell_height()).floor() as usize;
        Some((row.min(self.height - 1), col.min(self.width - 1)))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Position and value of the largest cell; ties go to the first in
    /// row-major order.
    pub fn argmax(&self) -> Option<(usize, usize, f64)> {
        let (i, v) =
            self.values
                .iter()
                .enumerate()
                .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
                    Some((_, bv)) if bv >= v => best,
                    _ => Some((i, v)),
                })?;
        Some((i / self.width, i % self.width, v))
    }

    /// Cells strictly greater than their 8 neighbours.
    pub fn local_maxima(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                let v = self.get(r, c);
                let mut is_peak = v > 0.0;
                'scan: for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if nr < 0 || nc < 0 || nr >= self.height as i64 || nc >= self.width as i64 {
                            continue;
                        }
                        if self.get(nr as usize, nc as usize) >= v {
                            is_peak = false;
                            break 'scan;
                        }
                    }
                }
                if is_peak {
                    out.push((r, c));
                }
            }
        }
        out
    }
}

fn cell_center(bbox: &BBox, width: usize, height: usize, row: usize, col: usize) -> (f64, f64) {
    let dx = bbox.lon_span() / width as f64;
    let dy = bbox.lat_span() / height as f64;
    (
        bbox.max_lat - (row as f64 + 0.5) * dy,
        bbox.min_lon + (col as f64 + 0.5) * dx,
    )
}

/// Kernel weight of `event` at `cell_center`, offsets in raw degrees.
pub fn kernel_value(cell_center: &GeoPoint, event: &GeoPoint, alpha: f64) -> f64 {
    let dx = cell_center.lon() - event.lon();
    let dy = cell_center.lat() - event.lat();
    (-(dx * dx + dy * dy) / alpha).exp()
}

/// Squared kernel offset between a cell centre and an event.
fn offset_sq(space: KernelSpace, lat: f64, lon: f64, event: &GeoPoint) -> f64 {
    let dy = lat - event.lat();
    let dx = lon - event.lon();
    match space {
        KernelSpace::Degrees => dx * dx + dy * dy,
        KernelSpace::Kilometers => {
            let ky = dy * KM_PER_DEGREE;
            let kx = dx * KM_PER_DEGREE * event.lat().to_radians().cos();
            kx * kx + ky * ky
        }
    }
}

/// Renders the kernel density of `points` onto the grid described by `params`.
///
/// Per cell, contributions are summed in event order, so the output does not
/// depend on how rows are scheduled across threads.
pub fn render(points: &[GeoPoint], params: &HeatmapParams) -> Result<Raster, HeatmapError> {
    params.validate()?;
    let HeatmapParams {
        alpha,
        width,
        height,
        bbox,
        ..
    } = *params;
    let cutoff = CUTOFF_SIGMAS * alpha.sqrt();
    let cutoff_sq = cutoff * cutoff;

    // Degree half-widths of the cutoff window around an event, used to skip
    // rows and columns that cannot fall inside it.
    let window = |event: &GeoPoint| -> (f64, f64) {
        match params.space {
            KernelSpace::Degrees => (cutoff, cutoff),
            KernelSpace::Kilometers => {
                let lat_deg = cutoff / KM_PER_DEGREE;
                let cos = event.lat().to_radians().cos();
                let lon_deg = if cos > 1e-12 {
                    cutoff / (KM_PER_DEGREE * cos)
                } else {
                    f64::INFINITY
                };
                (lat_deg, lon_deg)
            }
        }
    };
    let dx = bbox.lon_span() / width as f64;

    let mut values = vec![0.0; width * height];
    values
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(row, cells)| {
            let (lat, _) = cell_center(&bbox, width, height, row, 0);
            for event in points {
                let (lat_win, lon_win) = window(event);
                if (lat - event.lat()).abs() > lat_win {
                    continue;
                }
                let (first, last) = if dx > 0.0 && lon_win.is_finite() {
                    let lo = ((event.lon() - lon_win - bbox.min_lon) / dx - 0.5).floor();
                    let hi = ((event.lon() + lon_win - bbox.min_lon) / dx - 0.5).ceil();
                    if hi < 0.0 || lo > (width - 1) as f64 {
                        continue;
                    }
                    (lo.max(0.0) as usize, (hi.min((width - 1) as f64)) as usize)
                } else {
                    (0, width - 1)
                };
                for (col, cell) in cells.iter_mut().enumerate().take(last + 1).skip(first) {
                    let lon = bbox.min_lon + (col as f64 + 0.5) * dx;
                    let d2 = offset_sq(params.space, lat, lon, event);
                    if d2 <= cutoff_sq {
                        *cell += (-d2 / alpha).exp();
                    }
                }
            }
        });

    let mut raster = Raster {
        width,
        height,
        bbox,
        values,
    };
    if params.normalize {
        let max = raster.max_value();
        if max > 0.0 {
            raster.values.iter_mut().for_each(|v| *v /= max);
        }
    }
    Ok(raster)
}

/// ESRI ASCII grid. Square cells use `cellsize`; otherwise the `dx`/`dy`
/// header variant understood by GDAL is written.
pub fn write_ascii_grid<W: Write>(raster: &Raster, mut out: W) -> io::Result<()> {
    let dx = raster.cell_width();
    let dy = raster.cell_height();
    writeln!(out, "ncols {}", raster.width)?;
    writeln!(out, "nrows {}", raster.height)?;
    writeln!(out, "xllcorner {}", raster.bbox.min_lon)?;
    writeln!(out, "yllcorner {}", raster.bbox.min_lat)?;
    if (dx - dy).abs() <= 1e-12 * dx.abs().max(dy.abs()) {
        writeln!(out, "cellsize {dx}")?;
    } else {
        writeln!(out, "dx {dx}")?;
        writeln!(out, "dy {dy}")?;
    }
    writeln!(out, "NODATA_value {NODATA}")?;
    for row in raster.values.chunks(raster.width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Plain (P2) graymap with values scaled so the raster maximum is 65535.
pub fn write_pgm<W: Write>(raster: &Raster, mut out: W) -> io::Result<()> {
    writeln!(out, "P2")?;
    writeln!(out, "{} {}", raster.width, raster.height)?;
    writeln!(out, "{PGM_MAX}")?;
    let max = raster.max_value();
    for row in raster.values.chunks(raster.width) {
        let line: Vec<String> = row
            .iter()
            .map(|&v| {
                let level = if max > 0.0 {
                    (v / max * PGM_MAX as f64).round() as u32
                } else {
                    0
                };
                level.min(PGM_MAX).to_string()
            })
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}
