//! Run configuration: a flat `key = value` file, overridden by flags.
//!
//! Keys mirror the long flag names (`eps-km`, `zooms`, ...). Schema entries use
//! the canonical field as key and the source column as value: `lat`, `lon`,
//! `month`, `weekday`, `hour` and `feature.<name>`.

use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::dbscan::DbscanParams;
use crate::geo::{default_scale_c, BBox, Projection, MAX_ZOOM};
use crate::heatmap::{KernelSpace, DEFAULT_ALPHA};
use crate::ingest::SchemaMap;
use crate::markers::{MarkerParams, DEFAULT_RADIUS_PX};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid value for '{key}': {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapSettings {
    pub alpha: f64,
    pub width: usize,
    pub height: usize,
    pub normalize: bool,
    pub kernel_space: KernelSpace,
    /// Fraction of the data extent added on each side when no bbox is given.
    pub padding: f64,
    pub bbox: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkerSettings {
    pub zooms: Vec<u8>,
    pub zoom_max: u8,
    pub radius_px: f64,
    pub projection: Projection,
    /// `None` means `256 * 2^zoom_max / 360`.
    pub scale_c: Option<f64>,
}

impl MarkerSettings {
    pub fn params(&self, zoom: u8) -> MarkerParams {
        MarkerParams {
            zoom_current: zoom,
            zoom_max: self.zoom_max,
            radius_px: self.radius_px,
            scale_c: self
                .scale_c
                .unwrap_or_else(|| default_scale_c(self.zoom_max)),
            projection: self.projection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub schema: SchemaMap,
    #[serde(serialize_with = "ser_delimiter")]
    pub delimiter: u8,
    pub dbscan: DbscanParams,
    pub heatmap: HeatmapSettings,
    pub markers: MarkerSettings,
    /// Silhouette is computed on a seeded sample above this many points.
    pub silhouette_max_points: usize,
    pub seed: u64,
}

fn ser_delimiter<S: serde::Serializer>(d: &u8, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&(*d as char).to_string())
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            out_dir: PathBuf::from("out"),
            schema: SchemaMap::new("lat", "lon"),
            delimiter: b',',
            dbscan: DbscanParams::default(),
            heatmap: HeatmapSettings {
                alpha: DEFAULT_ALPHA,
                width: 512,
                height: 512,
                normalize: true,
                kernel_space: KernelSpace::Degrees,
                padding: 0.05,
                bbox: None,
            },
            markers: MarkerSettings {
                zooms: (5..=MAX_ZOOM).collect(),
                zoom_max: MAX_ZOOM,
                radius_px: DEFAULT_RADIUS_PX,
                projection: Projection::Equirectangular,
                scale_c: None,
            },
            silhouette_max_points: 10_000,
            seed: 42,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .trim()
        .parse()
        .map_err(|_| ConfigError::new(key, format!("cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(ConfigError::new(
            key,
            format!("expected true or false, got '{value}'"),
        )),
    }
}

/// `512`, `512x256`.
fn parse_grid(value: &str) -> Result<(usize, usize), ConfigError> {
    let v = value.trim().to_ascii_lowercase();
    match v.split_once('x') {
        Some((w, h)) => Ok((parse_num("grid", w)?, parse_num("grid", h)?)),
        None => {
            let n = parse_num("grid", &v)?;
            Ok((n, n))
        }
    }
}

/// `5-22`, `10,12,14`, or a mix such as `3,5-7`.
fn parse_zooms(value: &str) -> Result<Vec<u8>, ConfigError> {
    let mut zooms = Vec::new();
    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u8, u8) = (parse_num("zooms", a)?, parse_num("zooms", b)?);
                if a > b {
                    return Err(ConfigError::new("zooms", format!("empty range '{part}'")));
                }
                zooms.extend(a..=b);
            }
            None => zooms.push(parse_num("zooms", part)?),
        }
    }
    zooms.sort_unstable();
    zooms.dedup();
    if zooms.is_empty() {
        return Err(ConfigError::new("zooms", "no zoom levels given"));
    }
    Ok(zooms)
}

fn parse_bbox(value: &str) -> Result<BBox, ConfigError> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|s| parse_num("bbox", s))
        .collect::<Result<_, _>>()?;
    let [min_lat, max_lat, min_lon, max_lon] = parts[..] else {
        return Err(ConfigError::new(
            "bbox",
            "expected min_lat,max_lat,min_lon,max_lon",
        ));
    };
    BBox::new(min_lat, max_lat, min_lon, max_lon)
        .map_err(|e| ConfigError::new("bbox", e.to_string()))
}

fn column(key: &str, value: &str) -> Result<String, ConfigError> {
    let v = value.trim();
    if v.is_empty() {
        return Err(ConfigError::new(key, "column name is empty"));
    }
    Ok(v.to_string())
}

impl RunConfig {
    /// Applies one setting; later calls win.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim();
        match key {
            "input" => self.input = Some(PathBuf::from(value.trim())),
            "out-dir" => self.out_dir = PathBuf::from(value.trim()),
            "delimiter" => {
                let v = if value == "\\t" || value == "tab" {
                    "\t"
                } else {
                    value
                };
                match v.as_bytes() {
                    [b] => self.delimiter = *b,
                    _ => return Err(ConfigError::new(key, "expected a single byte")),
                }
            }
            "eps-km" => self.dbscan.eps_km = parse_num(key, value)?,
            "min-pts" => self.dbscan.min_pts = parse_num(key, value)?,
            "alpha" => self.heatmap.alpha = parse_num(key, value)?,
            "grid" => (self.heatmap.width, self.heatmap.height) = parse_grid(value)?,
            "normalize" => self.heatmap.normalize = parse_bool(key, value)?,
            "kernel-space" => {
                self.heatmap.kernel_space = value
                    .parse()
                    .map_err(|e: String| ConfigError::new(key, e))?
            }
            "padding" => self.heatmap.padding = parse_num(key, value)?,
            "bbox" => self.heatmap.bbox = Some(parse_bbox(value)?),
            "zooms" => self.markers.zooms = parse_zooms(value)?,
            "zoom-max" => self.markers.zoom_max = parse_num(key, value)?,
            "radius-px" => self.markers.radius_px = parse_num(key, value)?,
            "projection" => {
                self.markers.projection = value
                    .parse()
                    .map_err(|e: String| ConfigError::new(key, e))?
            }
            "scale-c" => self.markers.scale_c = Some(parse_num(key, value)?),
            "seed" => self.seed = parse_num(key, value)?,
            "silhouette-max-points" => self.silhouette_max_points = parse_num(key, value)?,
            "lat" => self.schema.latitude_column = column(key, value)?,
            "lon" => self.schema.longitude_column = column(key, value)?,
            "month" => self.schema.month_column = Some(column(key, value)?),
            "weekday" => self.schema.weekday_column = Some(column(key, value)?),
            "hour" => self.schema.hour_column = Some(column(key, value)?),
            _ => match key.strip_prefix("feature.") {
                Some(name) if !name.trim().is_empty() => {
                    let name = name.trim().to_string();
                    let col = column(key, value)?;
                    match self
                        .schema
                        .feature_columns
                        .iter_mut()
                        .find(|(n, _)| *n == name)
                    {
                        Some(entry) => entry.1 = col,
                        None => self.schema.feature_columns.push((name, col)),
                    }
                }
                _ => return Err(ConfigError::new(key, "unknown setting")),
            },
        }
        Ok(())
    }

    /// Checks every parameter against its invariants.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.dbscan;
        if !(d.eps_km.is_finite() && d.eps_km > 0.0) {
            return Err(ConfigError::new("eps-km", "must be finite and > 0"));
        }
        if d.min_pts == 0 {
            return Err(ConfigError::new("min-pts", "must be >= 1"));
        }
        let h = &self.heatmap;
        if !(h.alpha.is_finite() && h.alpha > 0.0) {
            return Err(ConfigError::new("alpha", "must be finite and > 0"));
        }
        if h.width == 0 || h.height == 0 {
            return Err(ConfigError::new("grid", "width and height must be >= 1"));
        }
        if !(h.padding.is_finite() && h.padding >= 0.0) {
            return Err(ConfigError::new("padding", "must be finite and >= 0"));
        }
        let m = &self.markers;
        if m.zoom_max > MAX_ZOOM {
            return Err(ConfigError::new(
                "zoom-max",
                format!("must be <= {MAX_ZOOM}"),
            ));
        }
        if let Some(z) = m.zooms.iter().find(|&&z| z > m.zoom_max) {
            return Err(ConfigError::new(
                "zooms",
                format!("zoom {z} exceeds zoom-max {}", m.zoom_max),
            ));
        }
        if m.zooms.is_empty() {
            return Err(ConfigError::new("zooms", "no zoom levels given"));
        }
        if !(m.radius_px.is_finite() && m.radius_px > 0.0) {
            return Err(ConfigError::new("radius-px", "must be finite and > 0"));
        }
        if let Some(c) = m.scale_c {
            if !(c.is_finite() && c > 0.0) {
                return Err(ConfigError::new("scale-c", "must be finite and > 0"));
            }
        }
        if self.silhouette_max_points < 2 {
            return Err(ConfigError::new("silhouette-max-points", "must be >= 2"));
        }
        self.schema
            .validate()
            .map_err(|e| ConfigError::new("lat/lon", e.to_string()))?;
        Ok(())
    }
}

/// Splits a config file into `(key, value)` pairs. `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            ConfigError::new(
                &format!("line {}", n + 1),
                format!("expected key = value, got '{line}'"),
            )
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
