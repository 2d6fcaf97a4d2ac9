//! Geodesy and projection helpers shared by every spatial stage.
//!
//! Distances are great-circle kilometers on a sphere of mean Earth radius.
//! Pixel projections come in two flavours: a literal equirectangular
//! scaling (`lon * C`, `lat * C`) and the usual 256-pixel-tile web mercator.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius (IUGG) in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Kilometers spanned by one degree of latitude on the mean sphere.
pub const KM_PER_DEGREE: f64 = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;

/// Highest supported zoom level.
pub const MAX_ZOOM: u8 = 22;

/// Latitude limit of the square web mercator world.
pub const MERCATOR_MAX_LAT: f64 = 85.05113;

pub const TILE_SIZE: f64 = 256.0;

/// Span given to a bounding-box side whose points all share one coordinate.
pub const MIN_BBOX_SPAN_DEG: f64 = 0.001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinate (lat {lat}, lon {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("zoom level {0} outside 0..={MAX_ZOOM}")]
    InvalidZoom(i64),
    #[error("latitude {0} outside the web mercator domain (|lat| < {MERCATOR_MAX_LAT})")]
    ProjectionDomain(f64),
    #[error("bounding box of an empty point set")]
    EmptyInput,
    #[error("invalid bounding box: {0}")]
    InvalidBBox(String),
    #[error("padding fraction must be finite and >= 0, got {0}")]
    InvalidPadding(f64),
}

/// A validated WGS84-style coordinate in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint", into = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoError;
    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl From<GeoPoint> for RawPoint {
    fn from(p: GeoPoint) -> Self {
        RawPoint {
            lat: p.lat,
            lon: p.lon,
        }
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if lat.is_finite()
            && lon.is_finite()
            && (-90.0..=90.0).contains(&lat)
            && (-180.0..=180.0).contains(&lon)
        {
            Ok(GeoPoint { lat, lon })
        } else {
            Err(GeoError::InvalidCoordinate { lat, lon })
        }
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

/// Great-circle distance in kilometers.
pub fn haversine_km(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();

    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_KM * h.sqrt().atan2((1.0 - h).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// `px = lon * C`, `py = lat * C`; zoom does not enter the projection.
    #[default]
    Equirectangular,
    /// World pixels of a 256-pixel tile pyramid at the requested zoom.
    WebMercator,
}

impl Projection {
    pub fn name(&self) -> &'static str {
        match self {
            Projection::Equirectangular => "equirectangular",
            Projection::WebMercator => "web_mercator",
        }
    }
}

impl std::str::FromStr for Projection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "equirectangular" | "equirect" => Ok(Projection::Equirectangular),
            "web_mercator" | "webmercator" | "mercator" => Ok(Projection::WebMercator),
            other => Err(format!(
                "unknown projection '{other}' (expected equirectangular or web_mercator)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub px: f64,
    pub py: f64,
    pub zoom: u8,
}

impl PixelPoint {
    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.px - other.px).hypot(self.py - other.py)
    }
}

/// Scale constant that makes one equirectangular degree as wide as it is on a
/// full-world tile pyramid at `zoom_max`.
pub fn default_scale_c(zoom_max: u8) -> f64 {
    TILE_SIZE * 2f64.powi(zoom_max as i32) / 360.0
}

pub fn project_pixel(
    p: &GeoPoint,
    zoom: u8,
    projection: Projection,
    scale_c: f64,
) -> Result<PixelPoint, GeoError> {
    if zoom > MAX_ZOOM {
        return Err(GeoError::InvalidZoom(zoom as i64));
    }
    match projection {
        Projection::Equirectangular => Ok(PixelPoint {
            px: p.lon * scale_c,
            py: p.lat * scale_c,
            zoom,
        }),
        Projection::WebMercator => {
            if p.lat.abs() >= MERCATOR_MAX_LAT {
                return Err(GeoError::ProjectionDomain(p.lat));
            }
            let world = TILE_SIZE * 2f64.powi(zoom as i32);
            let sin_lat = p.lat.to_radians().sin();
            let y = 0.5 - ((1.0 + sin_lat) / (1.0 - sin_lat)).ln() / (4.0 * std::f64::consts::PI);
            Ok(PixelPoint {
                px: (p.lon + 180.0) / 360.0 * world,
                py: y * world,
                zoom,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BBox {
    pub fn new(min_lat: f64, max_lat: f64, min_lon: f64, max_lon: f64) -> Result<Self, GeoError> {
        let b = BBox {
            min_lat,
            max_lat,
            min_lon,
            max_lon,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let all_finite = [self.min_lat, self.max_lat, self.min_lon, self.max_lon]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(GeoError::InvalidBBox("non-finite bound".into()));
        }
        if self.min_lat > self.max_lat || self.min_lon > self.max_lon {
            return Err(GeoError::InvalidBBox(format!(
                "min exceeds max in {self:?}"
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat)
            && (self.min_lon..=self.max_lon).contains(&p.lon)
    }

    pub fn lat_span(&self) -> f64 {
        self.max_lat - self.min_lat
    }

    pub fn lon_span(&self) -> f64 {
        self.max_lon - self.min_lon
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.min_lat + self.max_lat) / 2.0,
            (self.min_lon + self.max_lon) / 2.0,
        )
    }
}

/// Smallest box holding every point, padded on each side by
/// `padding_fraction` of the span on that axis.
///
/// Axes where all points coincide get a [`MIN_BBOX_SPAN_DEG`] span centred on
/// the shared value. Results are clamped to the valid coordinate range.
pub fn bounding_box(points: &[GeoPoint], padding_fraction: f64) -> Result<BBox, GeoError> {
    if !(padding_fraction.is_finite() && padding_fraction >= 0.0) {
        return Err(GeoError::InvalidPadding(padding_fraction));
    }
    let first = points.first().ok_or(GeoError::EmptyInput)?;
    let mut b = BBox {
        min_lat: first.lat,
        max_lat: first.lat,
        min_lon: first.lon,
        max_lon: first.lon,
    };
    for p in &points[1..] {
        b.min_lat = b.min_lat.min(p.lat);
        b.max_lat = b.max_lat.max(p.lat);
        b.min_lon = b.min_lon.min(p.lon);
        b.max_lon = b.max_lon.max(p.lon);
    }

    let (min_lat, max_lat) = pad_axis(b.min_lat, b.max_lat, padding_fraction);
    let (min_lon, max_lon) = pad_axis(b.min_lon, b.max_lon, padding_fraction);
    Ok(BBox {
        min_lat: min_lat.max(-90.0),
        max_lat: max_lat.min(90.0),
        min_lon: min_lon.max(-180.0),
        max_lon: max_lon.min(180.0),
    })
}

fn pad_axis(lo: f64, hi: f64, fraction: f64) -> (f64, f64) {
    let span = hi - lo;
    if span == 0.0 {
        let half = MIN_BBOX_SPAN_DEG / 2.0;
        (lo - half, hi + half)
    } else {
        (lo - span * fraction, hi + span * fraction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn rejects_out_of_range_coordinates() {
        assert!(GeoPoint::new(250.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(GeoPoint::new(90.0, 180.0).is_ok());
    }

    #[test]
    fn haversine_examples() {
        assert_eq!(haversine_km(&pt(0.0, 0.0), &pt(0.0, 0.0)), 0.0);
        // closed form: one degree of arc is 2*pi*R/360
        let arc = 2.0 * std::f64::consts::PI * EARTH_RADIUS_KM / 360.0;
        let d = haversine_km(&pt(0.0, 0.0), &pt(1.0, 0.0));
        assert!((d - arc).abs() < 1e-9);
        assert!((d - 111.195).abs() < 0.001);
        let d = haversine_km(&pt(35.2271, -80.8431), &pt(35.2281, -80.8431));
        assert!((d - 0.11119).abs() < 0.0001);
        assert!((d - arc * 0.001).abs() < 1e-9);
    }

    #[test]
    fn antipodal_distance_is_half_circumference() {
        let d = haversine_km(&pt(0.0, 0.0), &pt(0.0, 180.0));
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-6);
    }

    #[test]
    fn equirectangular_projection() {
        let p = project_pixel(&pt(10.0, 20.0), 5, Projection::Equirectangular, 1.0).unwrap();
        assert_eq!((p.px, p.py), (20.0, 10.0));
        let p = project_pixel(&pt(0.0, -45.0), 0, Projection::Equirectangular, 2.0).unwrap();
        assert_eq!((p.px, p.py), (-90.0, 0.0));
    }

    #[test]
    fn web_mercator_projection() {
        let p = project_pixel(&pt(0.0, 0.0), 0, Projection::WebMercator, 1.0).unwrap();
        assert!((p.px - 128.0).abs() < 1e-12);
        assert!((p.py - 128.0).abs() < 1e-12);
        let p = project_pixel(&pt(0.0, -180.0), 3, Projection::WebMercator, 1.0).unwrap();
        assert_eq!(p.px, 0.0);
        // north is up: positive latitude sits above the equator
        let north = project_pixel(&pt(45.0, 0.0), 1, Projection::WebMercator, 1.0).unwrap();
        assert!(north.py < 256.0);
    }

    #[test]
    fn projection_errors() {
        assert_eq!(
            project_pixel(&pt(85.06, 0.0), 3, Projection::WebMercator, 1.0),
            Err(GeoError::ProjectionDomain(85.06))
        );
        assert!(project_pixel(&pt(-85.1, 0.0), 3, Projection::WebMercator, 1.0).is_err());
        assert_eq!(
            project_pixel(&pt(0.0, 0.0), 23, Projection::Equirectangular, 1.0),
            Err(GeoError::InvalidZoom(23))
        );
    }

    #[test]
    fn default_scale_constant() {
        assert_eq!(default_scale_c(0), 256.0 / 360.0);
        assert_eq!(default_scale_c(22), 256.0 * 4194304.0 / 360.0);
    }

    #[test]
    fn bbox_examples() {
        let b = bounding_box(&[pt(0.0, 0.0)], 0.0).unwrap();
        assert!((b.lat_span() - 0.001).abs() < 1e-15);
        assert!((b.lon_span() - 0.001).abs() < 1e-15);
        assert!(b.contains(&pt(0.0, 0.0)));

        let two = [pt(0.0, 0.0), pt(1.0, 1.0)];
        assert_eq!(
            bounding_box(&two, 0.0).unwrap(),
            BBox::new(0.0, 1.0, 0.0, 1.0).unwrap()
        );
        let b = bounding_box(&two, 0.1).unwrap();
        for (got, want) in [
            (b.min_lat, -0.1),
            (b.max_lat, 1.1),
            (b.min_lon, -0.1),
            (b.max_lon, 1.1),
        ] {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(bounding_box(&[], 0.0), Err(GeoError::EmptyInput));
        assert!(bounding_box(&two, -0.5).is_err());
    }

    #[test]
    fn bbox_rejects_inverted_bounds() {
        assert!(BBox::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(0.0, 1.0, f64::NAN, 1.0).is_err());
    }

    fn arb_point() -> impl Strategy<Value = GeoPoint> {
        (-90.0f64..=90.0, -180.0f64..=180.0).prop_map(|(lat, lon)| pt(lat, lon))
    }

    proptest! {
        #[test]
        fn haversine_is_a_metric(a in arb_point(), b in arb_point(), c in arb_point()) {
            let ab = haversine_km(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, haversine_km(&b, &a));
            prop_assert!(haversine_km(&a, &a) == 0.0);
            prop_assert!(ab <= haversine_km(&a, &c) + haversine_km(&c, &b) + 1e-9);
        }

        #[test]
        fn bbox_contains_inputs(points in prop::collection::vec(arb_point(), 1..50), pad in 0.0f64..1.0) {
            let b = bounding_box(&points, pad).unwrap();
            for p in &points {
                prop_assert!(b.contains(p));
            }
        }

        #[test]
        fn equirectangular_is_injective(a in arb_point(), b in arb_point()) {
            let c = default_scale_c(MAX_ZOOM);
            let pa = project_pixel(&a, 10, Projection::Equirectangular, c).unwrap();
            let pb = project_pixel(&b, 10, Projection::Equirectangular, c).unwrap();
            prop_assert_eq!(a == b, pa == pb);
        }

        #[test]
        fn web_mercator_is_injective(
            a in (-85.0f64..85.0, -180.0f64..180.0),
            b in (-85.0f64..85.0, -180.0f64..180.0),
        ) {
            let (a, b) = (pt(a.0, a.1), pt(b.0, b.1));
            let pa = project_pixel(&a, 22, Projection::WebMercator, 1.0).unwrap();
            let pb = project_pixel(&b, 22, Projection::WebMercator, 1.0).unwrap();
            prop_assert_eq!(a == b, pa == pb);
        }
    }
}
