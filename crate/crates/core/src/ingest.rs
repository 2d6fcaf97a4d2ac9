//! Loading delimited event data into [`EventRecord`]s.
//!
//! Rows whose latitude or longitude is empty, unparseable or out of range are
//! dropped. Rows that repeat an earlier coordinate pair are kept: several
//! events can happen at the same spot.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;

pub const WEEKDAY_NAMES: [&str; 7] = [
    "Sunday",
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
];

pub const MONTH_NAMES: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("schema error: column '{0}' not found in header")]
    MissingColumn(String),
    #[error("schema error: {0}")]
    InvalidSchema(String),
    #[error("input error: {0}")]
    Input(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Maps source columns onto the canonical record fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaMap {
    pub latitude_column: String,
    pub longitude_column: String,
    pub month_column: Option<String>,
    pub weekday_column: Option<String>,
    pub hour_column: Option<String>,
    /// `(canonical name, source column)` pairs, in output order.
    pub feature_columns: Vec<(String, String)>,
}

impl SchemaMap {
    pub fn new(latitude_column: impl Into<String>, longitude_column: impl Into<String>) -> Self {
        SchemaMap {
            latitude_column: latitude_column.into(),
            longitude_column: longitude_column.into(),
            month_column: None,
            weekday_column: None,
            hour_column: None,
            feature_columns: Vec::new(),
        }
    }

    /// Schema of the canonical CSV written by [`write_records`].
    pub fn canonical<S: AsRef<str>>(feature_names: &[S]) -> Self {
        SchemaMap {
            latitude_column: "lat".into(),
            longitude_column: "lon".into(),
            month_column: Some("month".into()),
            weekday_column: Some("weekday".into()),
            hour_column: Some("hour".into()),
            feature_columns: feature_names
                .iter()
                .map(|n| (n.as_ref().to_string(), n.as_ref().to_string()))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let lat = self.latitude_column.trim();
        let lon = self.longitude_column.trim();
        if lat.is_empty() || lon.is_empty() {
            return Err(IngestError::InvalidSchema(
                "latitude and longitude columns must be named".into(),
            ));
        }
        if lat == lon {
            return Err(IngestError::InvalidSchema(format!(
                "latitude and longitude both map to column '{lat}'"
            )));
        }
        let mut seen = HashSet::new();
        for (name, _) in &self.feature_columns {
            if name.trim().is_empty() {
                return Err(IngestError::InvalidSchema("empty feature name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(IngestError::InvalidSchema(format!(
                    "feature '{name}' mapped twice"
                )));
            }
        }
        Ok(())
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.feature_columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn has_feature(&self, name: &str) -> bool {
        self.feature_names().any(|n| n == name)
    }
}

/// One cleaned point event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub location: GeoPoint,
    /// 1 = January .. 12 = December.
    pub month: Option<u8>,
    /// 0 = Sunday .. 6 = Saturday.
    pub weekday: Option<u8>,
    pub hour: Option<u8>,
    pub features: BTreeMap<String, String>,
}

impl EventRecord {
    pub fn new(location: GeoPoint) -> Self {
        EventRecord {
            location,
            month: None,
            weekday: None,
            hour: None,
            features: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub rows_read: u64,
    /// Includes the out-of-range rows below.
    pub rows_dropped_missing_coords: u64,
    pub rows_out_of_range_coords: u64,
    pub rows_retained: u64,
    pub duplicate_coordinate_rows: u64,
}

/// Per-field absence counts over a record set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityReport {
    pub records: u64,
    pub month_absent: u64,
    pub weekday_absent: u64,
    pub hour_absent: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub delimiter: u8,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { delimiter: b',' }
    }
}

enum Coord {
    Missing,
    OutOfRange,
    Valid(GeoPoint),
}

fn parse_coords(lat: &str, lon: &str) -> Coord {
    let (Ok(lat), Ok(lon)) = (lat.trim().parse::<f64>(), lon.trim().parse::<f64>()) else {
        return Coord::Missing;
    };
    if !lat.is_finite() || !lon.is_finite() {
        return Coord::Missing;
    }
    match GeoPoint::new(lat, lon) {
        Ok(p) => Coord::Valid(p),
        Err(_) => Coord::OutOfRange,
    }
}

fn parse_month(raw: &str) -> Option<u8> {
    let s = raw.trim();
    if let Ok(n) = s.parse::<u8>() {
        return (1..=12).contains(&n).then_some(n);
    }
    name_index(s, &MONTH_NAMES).map(|i| i as u8 + 1)
}

fn parse_weekday(raw: &str) -> Option<u8> {
    let s = raw.trim();
    if let Ok(n) = s.parse::<u8>() {
        return (n <= 6).then_some(n);
    }
    name_index(s, &WEEKDAY_NAMES).map(|i| i as u8)
}

fn parse_hour(raw: &str) -> Option<u8> {
    let n = raw.trim().parse::<u8>().ok()?;
    (n <= 23).then_some(n)
}

/// Full names or three-letter abbreviations, case-insensitive.
fn name_index(s: &str, names: &[&str]) -> Option<usize> {
    if s.len() < 3 {
        return None;
    }
    let lower = s.to_ascii_lowercase();
    names.iter().position(|name| {
        let name = name.to_ascii_lowercase();
        name == lower || (lower.len() == 3 && name.starts_with(&lower))
    })
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim() == name.trim())
        .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
}

fn optional_index(
    headers: &csv::StringRecord,
    name: &Option<String>,
) -> Result<Option<usize>, IngestError> {
    name.as_deref()
        .map(|n| column_index(headers, n))
        .transpose()
}

/// Parses delimited text with a header row into cleaned records.
pub fn load_records<R: Read>(
    source: R,
    schema: &SchemaMap,
    options: LoadOptions,
) -> Result<(Vec<EventRecord>, CleanReport), IngestError> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    let lat_idx = column_index(&headers, &schema.latitude_column)?;
    let lon_idx = column_index(&headers, &schema.longitude_column)?;
    let month_idx = optional_index(&headers, &schema.month_column)?;
    let weekday_idx = optional_index(&headers, &schema.weekday_column)?;
    let hour_idx = optional_index(&headers, &schema.hour_column)?;
    let feature_idx = schema
        .feature_columns
        .iter()
        .map(|(name, col)| Ok((name.clone(), column_index(&headers, col)?)))
        .collect::<Result<Vec<_>, IngestError>>()?;

    let mut report = CleanReport::default();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut row = csv::StringRecord::new();

    while reader.read_record(&mut row)? {
        report.rows_read += 1;
        let field = |i: usize| row.get(i).unwrap_or("");
        let location = match parse_coords(field(lat_idx), field(lon_idx)) {
            Coord::Valid(p) => p,
            Coord::Missing => {
                report.rows_dropped_missing_coords += 1;
                continue;
            }
            Coord::OutOfRange => {
                report.rows_dropped_missing_coords += 1;
                report.rows_out_of_range_coords += 1;
                continue;
            }
        };

        if !seen.insert(coord_key(&location)) {
            report.duplicate_coordinate_rows += 1;
        }

        let mut record = EventRecord::new(location);
        record.month = month_idx.and_then(|i| parse_month(field(i)));
        record.weekday = weekday_idx.and_then(|i| parse_weekday(field(i)));
        record.hour = hour_idx.and_then(|i| parse_hour(field(i)));
        for (name, i) in &feature_idx {
            let value = field(*i).trim();
            if !value.is_empty() {
                record.features.insert(name.clone(), value.to_string());
            }
        }
        records.push(record);
        report.rows_retained += 1;
    }
    Ok((records, report))
}

fn coord_key(p: &GeoPoint) -> (u64, u64) {
    // -0.0 and 0.0 are the same place
    ((p.lat() + 0.0).to_bits(), (p.lon() + 0.0).to_bits())
}

pub fn detect_quality(records: &[EventRecord]) -> QualityReport {
    let mut q = QualityReport {
        records: records.len() as u64,
        ..QualityReport::default()
    };
    for r in records {
        q.month_absent += r.month.is_none() as u64;
        q.weekday_absent += r.weekday.is_none() as u64;
        q.hour_absent += r.hour.is_none() as u64;
    }
    q
}

/// Writes records as canonical CSV (`lat,lon,month,weekday,hour,<features>`),
/// readable again with [`SchemaMap::canonical`].
pub fn write_records<W: Write, S: AsRef<str>>(
    sink: W,
    records: &[EventRecord],
    feature_names: &[S],
) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec!["lat", "lon", "month", "weekday", "hour"];
    header.extend(feature_names.iter().map(|s| s.as_ref()));
    writer.write_record(&header)?;

    let opt = |v: Option<u8>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in records {
        let mut row = vec![
            r.location.lat().to_string(),
            r.location.lon().to_string(),
            opt(r.month),
            opt(r.weekday),
            opt(r.hour),
        ];
        for name in feature_names {
            row.push(r.features.get(name.as_ref()).cloned().unwrap_or_default());
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Loads a file previously written by [`write_records`]; feature columns are
/// whatever follows the five fixed columns.
pub fn load_canonical<R: Read>(
    source: R,
) -> Result<(Vec<EventRecord>, CleanReport, Vec<String>), IngestError> {
    let mut buf = Vec::new();
    let mut source = source;
    source.read_to_end(&mut buf)?;
    let mut reader = csv::ReaderBuilder::new().from_reader(buf.as_slice());
    let headers = reader.headers()?.clone();
    for (i, fixed) in ["lat", "lon", "month", "weekday", "hour"]
        .iter()
        .enumerate()
    {
        if headers.get(i).map(str::trim) != Some(*fixed) {
            return Err(IngestError::MissingColumn((*fixed).to_string()));
        }
    }
    let features: Vec<String> = headers.iter().skip(5).map(|s| s.to_string()).collect();
    let schema = SchemaMap::canonical(&features);
    let (records, report) = load_records(buf.as_slice(), &schema, LoadOptions::default())?;
    Ok((records, report, features))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> SchemaMap {
        let mut s = SchemaMap::new("Latitude", "Longitude");
        s.month_column = Some("CrashMonth".into());
        s.weekday_column = Some("CrashDay".into());
        s.hour_column = Some("CrashHour".into());
        s.feature_columns = vec![("road".into(), "RdRelation".into())];
        s
    }

    const HEADER: &str = "Latitude,Longitude,CrashMonth,CrashDay,CrashHour,RdRelation\n";

    #[test]
    fn drops_row_with_empty_longitude() {
        let data = format!(
            "{HEADER}35.1,-80.8,October,Friday,18,Non-Intersection\n35.2,,1,0,3,\n35.3,-80.7,,,,\n"
        );
        let (records, report) =
            load_records(data.as_bytes(), &schema(), LoadOptions::default()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(report.rows_read, 3);
        assert_eq!(report.rows_dropped_missing_coords, 1);
        assert_eq!(report.rows_retained, 2);
        assert_eq!(records[0].month, Some(10));
        assert_eq!(records[0].weekday, Some(5));
        assert_eq!(records[0].hour, Some(18));
        assert_eq!(records[0].features["road"], "Non-Intersection");
        // absent fields stay absent
        assert_eq!(records[1].month, None);
        assert!(records[1].features.is_empty());
    }

    #[test]
    fn keeps_duplicate_coordinates() {
        let data = format!("{HEADER}35.1,-80.8,1,1,1,a\n35.1,-80.8,2,2,2,b\n");
        let (records, report) =
            load_records(data.as_bytes(), &schema(), LoadOptions::default()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(report.duplicate_coordinate_rows, 1);
    }

    #[test]
    fn whitespace_garbage_and_out_of_range_are_missing() {
        let data = format!(
            "{HEADER}  ,-80.8,,,,\nabc,-80.8,,,,\n250,-80.8,,,,\nNaN,1,,,,\ninf,1,,,,\n35,-80,,,,\n"
        );
        let (records, report) =
            load_records(data.as_bytes(), &schema(), LoadOptions::default()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(report.rows_dropped_missing_coords, 5);
        assert_eq!(report.rows_out_of_range_coords, 1);
    }

    #[test]
    fn short_rows_are_missing_fields() {
        let data = format!("{HEADER}35.1\n35.1,-80.8\n");
        let (records, report) =
            load_records(data.as_bytes(), &schema(), LoadOptions::default()).unwrap();
        assert_eq!(report.rows_dropped_missing_coords, 1);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].hour, None);
    }

    #[test]
    fn unparseable_temporal_fields_are_absent() {
        let data = format!("{HEADER}1,1,13,7,24,x\n1,1,Sept,Fri,-1,x\n1,1,oct,sun,0,x\n");
        let (records, _) =
            load_records(data.as_bytes(), &schema(), LoadOptions::default()).unwrap();
        assert_eq!(
            (records[0].month, records[0].weekday, records[0].hour),
            (None, None, None)
        );
        assert_eq!(
            (records[1].month, records[1].weekday, records[1].hour),
            (None, Some(5), None)
        );
        assert_eq!(
            (records[2].month, records[2].weekday, records[2].hour),
            (Some(10), Some(0), Some(0))
        );
    }

    #[test]
    fn missing_column_is_named() {
        let data = "Latitude,Longitude\n1,1\n";
        let err = load_records(data.as_bytes(), &schema(), LoadOptions::default()).unwrap_err();
        match err {
            IngestError::MissingColumn(c) => assert_eq!(c, "CrashMonth"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_validation() {
        assert!(SchemaMap::new("", "lon").validate().is_err());
        assert!(SchemaMap::new("x", "x").validate().is_err());
        let mut s = SchemaMap::new("lat", "lon");
        s.feature_columns = vec![("a".into(), "c1".into()), ("a".into(), "c2".into())];
        assert!(s.validate().is_err());
    }

    #[test]
    fn custom_delimiter() {
        let data = "lat;lon\n1.5;2.5\n";
        let (records, _) = load_records(
            data.as_bytes(),
            &SchemaMap::new("lat", "lon"),
            LoadOptions { delimiter: b';' },
        )
        .unwrap();
        assert_eq!(records[0].location, GeoPoint::new(1.5, 2.5).unwrap());
    }

    #[test]
    fn quality_counts() {
        assert_eq!(detect_quality(&[]), QualityReport::default());
        let mut records: Vec<EventRecord> = (0..5)
            .map(|_| {
                let mut r = EventRecord::new(GeoPoint::new(0.0, 0.0).unwrap());
                r.month = Some(1);
                r.weekday = Some(1);
                r.hour = Some(1);
                r
            })
            .collect();
        records[1].hour = None;
        records[3].hour = None;
        let q = detect_quality(&records);
        assert_eq!(q.hour_absent, 2);
        assert_eq!(q.month_absent, 0);
        assert_eq!(q.records, 5);
    }

    fn arb_record() -> impl Strategy<Value = EventRecord> {
        (
            -90.0f64..=90.0,
            -180.0f64..=180.0,
            prop::option::of(1u8..=12),
            prop::option::of(0u8..=6),
            prop::option::of(0u8..=23),
            prop::option::of("[a-zA-Z ,\"-]{1,12}"),
        )
            .prop_map(|(lat, lon, month, weekday, hour, road)| {
                let mut r = EventRecord::new(GeoPoint::new(lat, lon).unwrap());
                r.month = month;
                r.weekday = weekday;
                r.hour = hour;
                if let Some(road) = road.filter(|s| !s.trim().is_empty()) {
                    r.features.insert("road".into(), road.trim().to_string());
                }
                r
            })
    }

    proptest! {
        #[test]
        fn reload_of_canonical_output_is_identity(records in prop::collection::vec(arb_record(), 0..40)) {
            let mut buf = Vec::new();
            write_records(&mut buf, &records, &["road"]).unwrap();
            let (again, report, features) = load_canonical(buf.as_slice()).unwrap();
            prop_assert_eq!(features, vec!["road".to_string()]);
            prop_assert_eq!(report.rows_dropped_missing_coords, 0);
            prop_assert_eq!(report.rows_read, records.len() as u64);
            prop_assert_eq!(again, records);
        }

        #[test]
        fn rows_are_conserved(rows in prop::collection::vec(("[0-9.\\- ]{0,6}", "[0-9.\\- ]{0,6}"), 0..40)) {
            let mut data = String::from("lat,lon\n");
            for (a, b) in &rows {
                data.push_str(&format!("{a},{b}\n"));
            }
            let (records, report) =
                load_records(data.as_bytes(), &SchemaMap::new("lat", "lon"), LoadOptions::default()).unwrap();
            prop_assert_eq!(report.rows_read, rows.len() as u64);
            prop_assert_eq!(report.rows_read, report.rows_retained + report.rows_dropped_missing_coords);
            prop_assert!(report.duplicate_coordinate_rows <= report.rows_retained);
            prop_assert_eq!(records.len() as u64, report.rows_retained);
        }
    }
}
