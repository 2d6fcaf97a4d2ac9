//! Hotspot mining for geolocated event records such as traffic crashes.
//!
//! The stages are independent modules:
//!
//! - [`ingest`]: CSV loading with a column mapping and coordinate cleaning
//! - [`geo`]: haversine distances, pixel projections, bounding boxes
//! - [`dbscan`]: grid-indexed DBSCAN in kilometers
//! - [`quality`]: silhouette scores
//! - [`heatmap`]: Gaussian kernel density rasters and their file formats
//! - [`markers`]: zoom-dependent marker clustering
//! - [`temporal`]: month/weekday/hour/category tables
//! - [`cli`]: the file-based pipeline behind the `hotspot` binary

pub mod cli;
pub mod dbscan;
pub mod fixture;
pub mod geo;
pub mod geojson;
pub mod heatmap;
pub mod ingest;
pub mod markers;
pub mod quality;
pub mod temporal;

pub use dbscan::{cluster_summary, dbscan, Clustering, DbscanParams, Label, SpatialIndex};
pub use geo::{bounding_box, haversine_km, project_pixel, BBox, GeoPoint, PixelPoint, Projection};
pub use heatmap::{kernel_value, render, HeatmapParams, Raster};
pub use ingest::{detect_quality, load_records, CleanReport, EventRecord, SchemaMap};
pub use markers::{cluster_markers, zoom_distance, MarkerClusterSet, MarkerParams};
pub use quality::{silhouette, SilhouetteResult};
pub use temporal::{
    aggregate_feature, aggregate_hour, aggregate_month_day, weekday_shares, FeatureBreakdown,
    HourHistogram, MonthDayTable,
};
