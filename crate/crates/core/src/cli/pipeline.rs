//! File-based pipeline stages. Every stage after `clean` reads the cleaned
//! records from the output directory, so stages can be re-run on their own.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{ConfigError, RunConfig};
use crate::dbscan::{cluster_summary, dbscan, Clustering};
use crate::geo::{bounding_box, haversine_km, BBox, GeoPoint};
use crate::geojson::{clusters_collection, markers_collection};
use crate::heatmap::{render, write_ascii_grid, write_pgm, HeatmapParams};
use crate::ingest::{
    detect_quality, load_canonical, load_records, write_records, EventRecord, IngestError,
    LoadOptions, SchemaMap, MONTH_NAMES, WEEKDAY_NAMES,
};
use crate::markers::cluster_markers;
use crate::quality::{silhouette, QualityError};
use crate::temporal::{
    aggregate_feature, aggregate_hour, aggregate_month_day, weekday_shares, FeatureBreakdown,
    HourHistogram, MonthDayTable, TemporalError,
};

pub const CLEANED: &str = "cleaned.csv";
pub const CLEAN_REPORT: &str = "clean_report.json";
pub const CLUSTERS: &str = "clusters.geojson";
pub const SILHOUETTE: &str = "silhouette.json";
pub const HEATMAP_ASC: &str = "heatmap.asc";
pub const HEATMAP_PGM: &str = "heatmap.pgm";
pub const MONTH_DAY: &str = "month_day.csv";
pub const HOURLY: &str = "hourly.csv";
pub const TEMPORAL: &str = "temporal.json";
pub const MANIFEST: &str = "manifest.json";

/// Largest marker clusters reported alongside ours, for comparison only.
pub const REFERENCE_MARKER_COUNTS: [u64; 2] = [10_128, 9_112];

pub fn markers_file(zoom: u8) -> String {
    format!("markers_z{zoom:02}.geojson")
}

pub fn feature_file(feature: &str) -> String {
    let safe: String = feature
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("feature_{safe}.csv")
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("missing upstream artifact: {0}")]
    MissingArtifact(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Io { .. } | CliError::MissingArtifact(_) => 3,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn data(context: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", context.display()))
    }

    fn from_ingest(path: &Path, e: IngestError) -> Self {
        match e {
            IngestError::Io(source) => CliError::io(path, source),
            other => CliError::data(path, other),
        }
    }

    fn from_temporal(path: &Path, e: TemporalError) -> Self {
        match e {
            TemporalError::Io(source) => CliError::io(path, source),
            other => CliError::data(path, other),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingArtifact(path.to_path_buf())
        } else {
            CliError::io(path, e)
        }
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("json values serialize");
    bytes.push(b'\n');
    write(path, &bytes)
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Cleaned records and their feature names, as written by [`clean`].
pub fn load_cleaned(cfg: &RunConfig) -> Result<(Vec<EventRecord>, Vec<String>), CliError> {
    let path = cfg.out_dir.join(CLEANED);
    let bytes = read(&path)?;
    let (records, _, features) =
        load_canonical(bytes.as_slice()).map_err(|e| CliError::from_ingest(&path, e))?;
    Ok((records, features))
}

fn locations(records: &[EventRecord]) -> Vec<GeoPoint> {
    records.iter().map(|r| r.location).collect()
}

pub fn clean(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::Usage("clean needs --input".into()))?;
    let bytes = fs::read(input).map_err(|e| CliError::io(input, e))?;
    let (records, report) = load_records(
        bytes.as_slice(),
        &cfg.schema,
        LoadOptions {
            delimiter: cfg.delimiter,
        },
    )
    .map_err(|e| CliError::from_ingest(input, e))?;

    ensure_out_dir(cfg)?;
    let features: Vec<&str> = cfg.schema.feature_names().collect();
    let mut buf = Vec::new();
    write_records(&mut buf, &records, &features).map_err(|e| CliError::from_ingest(input, e))?;
    write(&cfg.out_dir.join(CLEANED), &buf)?;
    write_json(
        &cfg.out_dir.join(CLEAN_REPORT),
        &json!({ "clean": report, "quality": detect_quality(&records) }),
    )
}

/// Silhouette on at most `max_points` clustered points, sampled with `seed`.
fn sampled_silhouette(
    points: &[GeoPoint],
    clustering: &Clustering,
    max_points: usize,
    seed: u64,
) -> Value {
    let clustered: Vec<usize> = (0..points.len())
        .filter(|&i| !clustering.labels[i].is_noise())
        .collect();
    let noise = points.len() - clustered.len();

    let (sub_points, sub_clustering, sampled) = if clustered.len() > max_points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pick: Vec<usize> = rand::seq::index::sample(&mut rng, clustered.len(), max_points)
            .into_iter()
            .map(|k| clustered[k])
            .collect();
        pick.sort_unstable();
        let sub = Clustering {
            labels: pick.iter().map(|&i| clustering.labels[i]).collect(),
            core_flags: pick.iter().map(|&i| clustering.core_flags[i]).collect(),
            cluster_count: clustering.cluster_count,
        };
        (pick.iter().map(|&i| points[i]).collect(), sub, true)
    } else {
        let sub = Clustering {
            labels: clustered.iter().map(|&i| clustering.labels[i]).collect(),
            core_flags: clustered
                .iter()
                .map(|&i| clustering.core_flags[i])
                .collect(),
            cluster_count: clustering.cluster_count,
        };
        (
            clustered.iter().map(|&i| points[i]).collect::<Vec<_>>(),
            sub,
            false,
        )
    };

    match silhouette(&sub_points, &sub_clustering, haversine_km) {
        Ok(r) => json!({
            "status": "ok",
            "mean_score": r.mean_score,
            "evaluated_points": r.per_point.len(),
            "excluded_noise": noise,
            "sampled": sampled,
        }),
        Err(e @ (QualityError::Undefined(_) | QualityError::EmptyInput)) => json!({
            "status": "undefined",
            "reason": e.to_string(),
            "excluded_noise": noise,
        }),
        Err(e) => json!({ "status": "error", "reason": e.to_string() }),
    }
}

pub fn cluster(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let (records, _) = load_cleaned(cfg)?;
    let points = locations(&records);
    let clustering = dbscan(&points, &cfg.dbscan).map_err(|e| CliError::Data(e.to_string()))?;
    let summary = cluster_summary(&points, &clustering);

    let geo = clusters_collection(&points, &clustering, &summary);
    let mut bytes = serde_json::to_vec(&geo).expect("json values serialize");
    bytes.push(b'\n');
    write(&cfg.out_dir.join(CLUSTERS), &bytes)?;

    let clusters: Vec<Value> = summary
        .iter()
        .map(|s| {
            json!({
                "cluster_id": s.cluster_id,
                "member_count": s.member_count,
                "core_count": s.core_count,
                "centroid": [s.centroid.lon(), s.centroid.lat()],
                "bbox": s.bbox,
            })
        })
        .collect();
    let report = json!({
        "eps_km": cfg.dbscan.eps_km,
        "min_pts": cfg.dbscan.min_pts,
        "points": points.len(),
        "cluster_count": clustering.cluster_count,
        "noise_count": clustering.noise_count(),
        "clusters": clusters,
        "silhouette": sampled_silhouette(&points, &clustering, cfg.silhouette_max_points, cfg.seed),
    });
    write_json(&cfg.out_dir.join(SILHOUETTE), &report)
}

/// Grows the shorter side of `bbox` so that `width x height` cells are square.
pub fn square_cells(bbox: BBox, width: usize, height: usize) -> BBox {
    let cell = (bbox.lon_span() / width as f64).max(bbox.lat_span() / height as f64);
    let (clat, clon) = bbox.center();
    let half_w = cell * width as f64 / 2.0;
    let half_h = cell * height as f64 / 2.0;
    BBox {
        min_lat: clat - half_h,
        max_lat: clat + half_h,
        min_lon: clon - half_w,
        max_lon: clon + half_w,
    }
}

pub fn heatmap_params(cfg: &RunConfig, points: &[GeoPoint]) -> Result<HeatmapParams, CliError> {
    let h = &cfg.heatmap;
    let bbox = match h.bbox {
        Some(b) => b,
        None => {
            let data = if points.is_empty() {
                bounding_box(&[GeoPoint::new(0.0, 0.0).expect("origin")], 0.0)
            } else {
                bounding_box(points, h.padding)
            }
            .map_err(|e| CliError::Data(e.to_string()))?;
            square_cells(data, h.width, h.height)
        }
    };
    Ok(HeatmapParams {
        alpha: h.alpha,
        width: h.width,
        height: h.height,
        bbox,
        normalize: h.normalize,
        space: h.kernel_space,
    })
}

pub fn heatmap(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let (records, _) = load_cleaned(cfg)?;
    let points = locations(&records);
    let params = heatmap_params(cfg, &points)?;
    let raster = render(&points, &params).map_err(|e| CliError::Data(e.to_string()))?;

    for (name, pgm) in [(HEATMAP_ASC, false), (HEATMAP_PGM, true)] {
        let path = cfg.out_dir.join(name);
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let out = BufWriter::new(file);
        let res = if pgm {
            write_pgm(&raster, out)
        } else {
            write_ascii_grid(&raster, out)
        };
        res.map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

pub fn markers(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let (records, _) = load_cleaned(cfg)?;
    let points = locations(&records);
    for &zoom in &cfg.markers.zooms {
        let set = cluster_markers(&points, &cfg.markers.params(zoom))
            .map_err(|e| CliError::Data(format!("zoom {zoom}: {e}")))?;
        debug_assert_eq!(set.total(), points.len());
        let mut bytes =
            serde_json::to_vec(&markers_collection(&set)).expect("json values serialize");
        bytes.push(b'\n');
        write(&cfg.out_dir.join(markers_file(zoom)), &bytes)?;
    }
    Ok(())
}

pub fn temporal(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let (records, features) = load_cleaned(cfg)?;
    let schema = SchemaMap::canonical(&features);

    let table = aggregate_month_day(&records);
    let hours = aggregate_hour(&records);

    let path = cfg.out_dir.join(MONTH_DAY);
    let mut buf = Vec::new();
    table
        .write_csv(&mut buf)
        .map_err(|e| CliError::from_temporal(&path, e))?;
    write(&path, &buf)?;

    let path = cfg.out_dir.join(HOURLY);
    let mut buf = Vec::new();
    hours
        .write_csv(&mut buf)
        .map_err(|e| CliError::from_temporal(&path, e))?;
    write(&path, &buf)?;

    let mut feature_exclusions = serde_json::Map::new();
    for feature in &features {
        let path = cfg.out_dir.join(feature_file(feature));
        let breakdown = aggregate_feature(&records, feature, &schema)
            .map_err(|e| CliError::from_temporal(&path, e))?;
        let mut buf = Vec::new();
        breakdown
            .write_csv(&mut buf)
            .map_err(|e| CliError::from_temporal(&path, e))?;
        write(&path, &buf)?;
        feature_exclusions.insert(feature.clone(), json!(breakdown.excluded));
    }

    write_json(
        &cfg.out_dir.join(TEMPORAL),
        &json!({
            "records": records.len(),
            "month_day_excluded": table.excluded,
            "hour_excluded": hours.excluded,
            "feature_excluded": feature_exclusions,
            "weekday_shares": weekday_shares(&table).ok(),
        }),
    )
}

/// Every artifact the report expects, relative to the output directory.
pub fn expected_artifacts(cfg: &RunConfig, features: &[String]) -> Vec<String> {
    let mut names: Vec<String> = [
        CLEANED,
        CLEAN_REPORT,
        CLUSTERS,
        SILHOUETTE,
        HEATMAP_ASC,
        HEATMAP_PGM,
        MONTH_DAY,
        HOURLY,
        TEMPORAL,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    names.extend(cfg.markers.zooms.iter().map(|&z| markers_file(z)));
    names.extend(features.iter().map(|f| feature_file(f)));
    names.sort();
    names
}

fn parse_json(path: &Path, bytes: &[u8]) -> Result<Value, CliError> {
    serde_json::from_slice(bytes).map_err(|e| CliError::data(path, e))
}

/// Builds the run manifest from the artifacts already on disk.
pub fn build_manifest(cfg: &RunConfig) -> Result<Value, CliError> {
    cfg.validate()?;
    let (_, features) = load_cleaned(cfg)?;

    let mut contents = std::collections::BTreeMap::new();
    for name in expected_artifacts(cfg, &features) {
        let bytes = read(&cfg.out_dir.join(&name))?;
        contents.insert(name, bytes);
    }
    let artifacts: Vec<Value> = contents
        .iter()
        .map(|(name, bytes)| json!({ "name": name, "bytes": bytes.len(), "sha256": sha256_hex(bytes) }))
        .collect();

    let input = match &cfg.input {
        Some(path) => {
            let digest = fs::read(path).ok().map(|b| sha256_hex(&b));
            json!({ "path": path.display().to_string(), "sha256": digest })
        }
        None => Value::Null,
    };

    let clean_report = parse_json(&cfg.out_dir.join(CLEAN_REPORT), &contents[CLEAN_REPORT])?;
    let cluster_report = parse_json(&cfg.out_dir.join(SILHOUETTE), &contents[SILHOUETTE])?;

    let md_path = cfg.out_dir.join(MONTH_DAY);
    let table = MonthDayTable::read_csv(contents[MONTH_DAY].as_slice())
        .map_err(|e| CliError::from_temporal(&md_path, e))?;
    let hr_path = cfg.out_dir.join(HOURLY);
    let hours = HourHistogram::read_csv(contents[HOURLY].as_slice())
        .map_err(|e| CliError::from_temporal(&hr_path, e))?;

    let shares = weekday_shares(&table).ok();
    let max_month = table.max_month().map(|m| m as usize);
    let max_weekday = table.max_weekday().map(|d| d as usize);

    let mut top_features = serde_json::Map::new();
    for feature in &features {
        let name = feature_file(feature);
        let path = cfg.out_dir.join(&name);
        let b = FeatureBreakdown::read_csv(feature, contents[&name].as_slice())
            .map_err(|e| CliError::from_temporal(&path, e))?;
        let top = b.categories.first().map(
            |c| json!({ "category": c.category, "count": c.count, "percentage": c.percentage }),
        );
        top_features.insert(feature.clone(), top.unwrap_or(Value::Null));
    }

    let mut largest_markers = serde_json::Map::new();
    for &zoom in &cfg.markers.zooms {
        let name = markers_file(zoom);
        let v = parse_json(&cfg.out_dir.join(&name), &contents[&name])?;
        let mut counts: Vec<u64> = v["features"]
            .as_array()
            .map(|fs| {
                fs.iter()
                    .filter_map(|f| f["properties"]["count"].as_u64())
                    .collect()
            })
            .unwrap_or_default();
        counts.sort_unstable_by(|a, b| b.cmp(a));
        largest_markers.insert(
            zoom.to_string(),
            json!({ "clusters": counts.len(), "largest": counts.iter().take(2).collect::<Vec<_>>() }),
        );
    }

    let generated_at = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);

    Ok(json!({
        "generated_at_unix": generated_at,
        "input": input,
        "cleaned_sha256": sha256_hex(&contents[CLEANED]),
        "parameters": cfg,
        "artifacts": artifacts,
        "headline": {
            "rows_read": clean_report["clean"]["rows_read"],
            "rows_retained": clean_report["clean"]["rows_retained"],
            "cluster_count": cluster_report["cluster_count"],
            "noise_count": cluster_report["noise_count"],
            "silhouette_mean": cluster_report["silhouette"]["mean_score"],
            "max_month": max_month.map(|m| MONTH_NAMES[m - 1]),
            "max_month_count": max_month.map(|m| table.row_totals()[m - 1]).unwrap_or(0),
            "max_weekday": max_weekday.map(|d| WEEKDAY_NAMES[d]),
            "max_weekday_share": max_weekday.and_then(|d| shares.map(|s| s[d])).unwrap_or(0.0),
            "max_hour": hours.peak_hour(),
            "max_hour_count": hours.peak_hour().map(|h| hours.counts[h as usize]).unwrap_or(0),
            "top_feature": top_features,
            "markers": largest_markers,
        },
        "reference_marker_counts": REFERENCE_MARKER_COUNTS,
    }))
}

pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let manifest = build_manifest(cfg)?;
    write_json(&cfg.out_dir.join(MANIFEST), &manifest)
}

/// All stages in order.
pub fn run_all(cfg: &RunConfig) -> Result<(), CliError> {
    clean(cfg)?;
    cluster(cfg)?;
    heatmap(cfg)?;
    markers(cfg)?;
    temporal(cfg)?;
    report(cfg)
}
