//! Zoom-dependent marker clustering.
//!
//! Points are projected to pixels at the maximum zoom, and the pixel distance
//! between two points at zoom `Z_c` is that distance divided by
//! `2^(Z_m - Z_c)`. Clustering is greedy first-fit against immovable
//! founders, in input order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{
    default_scale_c, project_pixel, GeoError, GeoPoint, PixelPoint, Projection, MAX_ZOOM,
};

pub const DEFAULT_RADIUS_PX: f64 = 80.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkerError {
    #[error("zoom_current {current} must not exceed zoom_max {max}")]
    ZoomOrder { current: u8, max: u8 },
    #[error("zoom_max {0} exceeds {MAX_ZOOM}")]
    ZoomMax(u8),
    #[error("radius_px must be finite and > 0, got {0}")]
    InvalidRadius(f64),
    #[error("scale constant C must be finite and > 0, got {0}")]
    InvalidScale(f64),
    #[error(transparent)]
    Projection(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerParams {
    pub zoom_current: u8,
    pub zoom_max: u8,
    pub radius_px: f64,
    pub scale_c: f64,
    pub projection: Projection,
}

impl MarkerParams {
    /// Defaults at `zoom_current`: `Z_m = 22`, 80 px radius, equirectangular
    /// projection with C = `256 * 2^22 / 360`.
    pub fn at_zoom(zoom_current: u8) -> Self {
        MarkerParams {
            zoom_current,
            zoom_max: MAX_ZOOM,
            radius_px: DEFAULT_RADIUS_PX,
            scale_c: default_scale_c(MAX_ZOOM),
            projection: Projection::Equirectangular,
        }
    }

    pub fn validate(&self) -> Result<(), MarkerError> {
        if self.zoom_max > MAX_ZOOM {
            return Err(MarkerError::ZoomMax(self.zoom_max));
        }
        if self.zoom_current > self.zoom_max {
            return Err(MarkerError::ZoomOrder {
                current: self.zoom_current,
                max: self.zoom_max,
            });
        }
        if !(self.radius_px.is_finite() && self.radius_px > 0.0) {
            return Err(MarkerError::InvalidRadius(self.radius_px));
        }
        if !(self.scale_c.is_finite() && self.scale_c > 0.0) {
            return Err(MarkerError::InvalidScale(self.scale_c));
        }
        Ok(())
    }

    fn divisor(&self) -> f64 {
        2f64.powi((self.zoom_max - self.zoom_current) as i32)
    }

    fn project(&self, p: &GeoPoint) -> Result<PixelPoint, GeoError> {
        project_pixel(p, self.zoom_max, self.projection, self.scale_c)
    }
}

/// Pixel distance between `a` and `b` at the current zoom.
///
/// The zoom shift is a real division by a power of two, so one zoom level
/// down halves the distance exactly.
pub fn zoom_distance(
    a: &GeoPoint,
    b: &GeoPoint,
    params: &MarkerParams,
) -> Result<f64, MarkerError> {
    params.validate()?;
    let pa = params.project(a)?;
    let pb = params.project(b)?;
    Ok(pa.distance(&pb) / params.divisor())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkerCluster {
    pub founder: GeoPoint,
    pub founder_index: usize,
    pub members: Vec<usize>,
}

impl MarkerCluster {
    pub fn count(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkerClusterSet {
    pub zoom_current: u8,
    pub clusters: Vec<MarkerCluster>,
}

impl MarkerClusterSet {
    pub fn total(&self) -> usize {
        self.clusters.iter().map(MarkerCluster::count).sum()
    }

    /// Member counts, largest first.
    pub fn counts_descending(&self) -> Vec<usize> {
        let mut counts: Vec<usize> = self.clusters.iter().map(MarkerCluster::count).collect();
        counts.sort_unstable_by(|a, b| b.cmp(a));
        counts
    }
}

/// Groups `points` for display at `params.zoom_current`.
///
/// Each point joins the earliest-founded cluster whose founder lies within
/// `radius_px`, or founds a new one.
pub fn cluster_markers(
    points: &[GeoPoint],
    params: &MarkerParams,
) -> Result<MarkerClusterSet, MarkerError> {
    params.validate()?;
    let divisor = params.divisor();
    let radius = params.radius_px;

    // founders bucketed on a grid of radius-sized cells in zoomed pixels
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut founders: Vec<PixelPoint> = Vec::new();
    let mut clusters: Vec<MarkerCluster> = Vec::new();

    for (i, p) in points.iter().enumerate() {
        let px = params.project(p)?;
        let zx = px.px / divisor;
        let zy = px.py / divisor;
        let cell = ((zx / radius).floor() as i64, (zy / radius).floor() as i64);

        let mut best: Option<usize> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let key = (cell.0.saturating_add(dx), cell.1.saturating_add(dy));
                let Some(bucket) = grid.get(&key) else {
                    continue;
                };
                for &c in bucket {
                    if best.is_some_and(|b| b <= c) {
                        continue;
                    }
                    if founders[c].distance(&px) / divisor <= radius {
                        best = Some(c);
                    }
                }
            }
        }

        match best {
            Some(c) => clusters[c].members.push(i),
            None => {
                let id = clusters.len();
                founders.push(px);
                clusters.push(MarkerCluster {
                    founder: *p,
                    founder_index: i,
                    members: vec![i],
                });
                grid.entry(cell).or_default().push(id);
            }
        }
    }

    Ok(MarkerClusterSet {
        zoom_current: params.zoom_current,
        clusters,
    })
}
