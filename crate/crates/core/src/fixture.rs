//! Synthetic crash datasets for tests and demos.
//!
//! [`CRASH_COUNTS`] holds the published month x weekday crash counts for the North
//! Carolina pedestrian crash data (33,706 events). [`synthetic_dataset`]
//! expands it into one record per event, with invented coordinates, hours and
//! roadway categories drawn from a seeded generator.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, Normal};

use crate::geo::GeoPoint;
use crate::ingest::{EventRecord, SchemaMap, MONTH_NAMES, WEEKDAY_NAMES};

/// Crash counts by month (January first) and weekday (Sunday first).
pub const CRASH_COUNTS: [[u64; 7]; 12] = [
    [246, 352, 469, 379, 406, 438, 317],
    [259, 327, 351, 371, 374, 402, 362],
    [268, 398, 380, 374, 419, 413, 402],
    [257, 367, 386, 401, 391, 425, 405],
    [309, 333, 382, 381, 445, 437, 381],
    [287, 352, 345, 328, 368, 416, 373],
    [303, 340, 363, 355, 341, 383, 356],
    [342, 378, 346, 382, 382, 495, 402],
    [306, 408, 446, 425, 414, 519, 487],
    [340, 507, 534, 578, 506, 599, 511],
    [333, 528, 489, 532, 480, 508, 448],
    [276, 452, 445, 478, 503, 566, 444],
];

/// Published monthly totals.
pub const MONTH_TOTALS: [u64; 12] = [
    2607, 2446, 2654, 2632, 2668, 2469, 2441, 2727, 3005, 3575, 3318, 3164,
];

pub const CRASH_TOTAL: u64 = 33_706;

pub const ROAD_FEATURE: &str = "relation_to_roadway";

/// Column names of the raw CSV written by [`write_raw_csv`].
pub const RAW_COLUMNS: [&str; 6] = [
    "Latitude",
    "Longitude",
    "CrashMonth",
    "CrashDay",
    "CrashHour",
    "RdRelation",
];

/// Roadway categories of the synthetic data and their fixed counts.
pub const ROAD_CATEGORIES: [(&str, u64); 4] = [
    ("Non-Intersection", 14_478),
    ("Non-Roadway", 10_044),
    ("Intersection-Related", 6_112),
    ("Intersection", 3_072),
];

/// Relative hourly weights, midnight first; busiest at 18:00.
const HOUR_WEIGHTS: [u32; 24] = [
    50, 40, 35, 30, 22, 25, 50, 90, 100, 95, 100, 110, 120, 125, 135, 160, 170, 180, 230, 200, 175,
    150, 110, 80,
];

/// Dense spots around Charlotte, NC: (lat, lon).
const HOTSPOTS: [(f64, f64); 13] = [
    (35.2271, -80.8431),
    (35.2400, -80.8200),
    (35.2100, -80.8700),
    (35.2550, -80.8600),
    (35.1950, -80.8150),
    (35.2700, -80.7900),
    (35.1800, -80.8850),
    (35.3000, -80.7500),
    (35.1500, -80.8400),
    (35.2250, -80.9200),
    (35.3150, -80.8400),
    (35.1650, -80.7700),
    (35.2850, -80.9000),
];

const HOTSPOT_EVENTS: usize = 700;
const HOTSPOT_SIGMA_DEG: f64 = 0.00012;
const BACKGROUND_LAT: (f64, f64) = (35.05, 35.40);
const BACKGROUND_LON: (f64, f64) = (-81.00, -80.65);

/// Schema matching the raw CSV layout.
pub fn raw_schema() -> SchemaMap {
    SchemaMap {
        latitude_column: RAW_COLUMNS[0].into(),
        longitude_column: RAW_COLUMNS[1].into(),
        month_column: Some(RAW_COLUMNS[2].into()),
        weekday_column: Some(RAW_COLUMNS[3].into()),
        hour_column: Some(RAW_COLUMNS[4].into()),
        feature_columns: vec![(ROAD_FEATURE.into(), RAW_COLUMNS[5].into())],
    }
}

/// One record per table cell event, coordinates at the origin, no hour.
/// Order is row-major over the table.
pub fn expand_table(table: &[[u64; 7]; 12]) -> Vec<EventRecord> {
    let origin = GeoPoint::new(0.0, 0.0).expect("origin is valid");
    let mut out = Vec::new();
    for (m, row) in table.iter().enumerate() {
        for (d, &count) in row.iter().enumerate() {
            for _ in 0..count {
                let mut r = EventRecord::new(origin);
                r.month = Some(m as u8 + 1);
                r.weekday = Some(d as u8);
                out.push(r);
            }
        }
    }
    out
}

/// The full synthetic dataset: published month x weekday counts, 13 dense hotspots
/// over a uniform background, hours peaked at 18 and fixed roadway category
/// counts. Record order is shuffled; everything is a function of `seed`.
pub fn synthetic_dataset(seed: u64) -> Vec<EventRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = expand_table(&CRASH_COUNTS);
    let n = records.len();

    let jitter = Normal::new(0.0, HOTSPOT_SIGMA_DEG).expect("positive sigma");
    let mut locations = Vec::with_capacity(n);
    for &(lat, lon) in &HOTSPOTS {
        for _ in 0..HOTSPOT_EVENTS {
            locations.push((lat + jitter.sample(&mut rng), lon + jitter.sample(&mut rng)));
        }
    }
    while locations.len() < n {
        locations.push((
            rng.random_range(BACKGROUND_LAT.0..BACKGROUND_LAT.1),
            rng.random_range(BACKGROUND_LON.0..BACKGROUND_LON.1),
        ));
    }
    locations.shuffle(&mut rng);

    let mut roads: Vec<&str> = ROAD_CATEGORIES
        .iter()
        .flat_map(|&(name, count)| std::iter::repeat_n(name, count as usize))
        .collect();
    roads.shuffle(&mut rng);

    let hours = WeightedIndex::new(HOUR_WEIGHTS).expect("positive weights");
    for ((record, (lat, lon)), road) in records.iter_mut().zip(locations).zip(roads) {
        record.location = GeoPoint::new(lat, lon).expect("fixture coordinates are in range");
        record.hour = Some(hours.sample(&mut rng) as u8);
        record.features.insert(ROAD_FEATURE.into(), road.into());
    }
    records.shuffle(&mut rng);
    records
}

/// Writes records in the raw layout of [`RAW_COLUMNS`], with month and
/// weekday spelled out.
pub fn write_raw_csv<W: Write>(records: &[EventRecord], sink: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(RAW_COLUMNS)?;
    for r in records {
        w.write_record([
            r.location.lat().to_string(),
            r.location.lon().to_string(),
            r.month
                .map(|m| MONTH_NAMES[m as usize - 1].to_string())
                .unwrap_or_default(),
            r.weekday
                .map(|d| WEEKDAY_NAMES[d as usize].to_string())
                .unwrap_or_default(),
            r.hour.map(|h| h.to_string()).unwrap_or_default(),
            r.features.get(ROAD_FEATURE).cloned().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
