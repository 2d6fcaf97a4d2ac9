//! Month x weekday tables, hourly histograms and categorical breakdowns.
//!
//! Records lacking the key of a given aggregation are skipped for that
//! aggregation only, and counted in its `excluded` field.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::ingest::{EventRecord, SchemaMap, MONTH_NAMES, WEEKDAY_NAMES};

#[derive(Debug, Error)]
pub enum TemporalError {
    #[error("shares are undefined for an empty table")]
    UndefinedShare,
    #[error("schema error: unknown feature '{0}'")]
    UnknownFeature(String),
    #[error("malformed table: {0}")]
    Malformed(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Rounds a percentage to three decimals.
pub fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MonthDayTable {
    /// `counts[month - 1][weekday]`, weekday 0 = Sunday.
    pub counts: [[u64; 7]; 12],
    pub excluded: u64,
}

impl MonthDayTable {
    pub fn row_totals(&self) -> [u64; 12] {
        self.counts.map(|row| row.iter().sum())
    }

    pub fn column_totals(&self) -> [u64; 7] {
        let mut out = [0; 7];
        for row in &self.counts {
            for (d, v) in row.iter().enumerate() {
                out[d] += v;
            }
        }
        out
    }

    pub fn grand_total(&self) -> u64 {
        self.row_totals().iter().sum()
    }

    /// Busiest month (1-based); ties go to the earlier month. `None` when empty.
    pub fn max_month(&self) -> Option<u8> {
        argmax(&self.row_totals()).map(|i| i as u8 + 1)
    }

    /// Busiest weekday (0 = Sunday). `None` when empty.
    pub fn max_weekday(&self) -> Option<u8> {
        argmax(&self.column_totals()).map(|i| i as u8)
    }

    /// CSV in the layout `Months,Sunday,...,Saturday,total cases`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), TemporalError> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["Months"];
        header.extend(WEEKDAY_NAMES);
        header.push("total cases");
        w.write_record(&header)?;
        for (m, row) in self.counts.iter().enumerate() {
            let mut rec = vec![MONTH_NAMES[m].to_string()];
            rec.extend(row.iter().map(u64::to_string));
            rec.push(row.iter().sum::<u64>().to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`MonthDayTable::write_csv`]; row totals are
    /// checked against the cells.
    pub fn read_csv<R: Read>(source: R) -> Result<Self, TemporalError> {
        let mut r = csv::Reader::from_reader(source);
        let mut table = MonthDayTable::default();
        let mut seen = [false; 12];
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 9 {
                return Err(TemporalError::Malformed(format!(
                    "expected 9 columns, found {}",
                    rec.len()
                )));
            }
            let m = MONTH_NAMES
                .iter()
                .position(|n| *n == rec[0].trim())
                .ok_or_else(|| TemporalError::Malformed(format!("unknown month '{}'", &rec[0])))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| TemporalError::Malformed(format!("bad count '{s}'")))
            };
            for d in 0..7 {
                table.counts[m][d] = parse(&rec[d + 1])?;
            }
            if parse(&rec[8])? != table.counts[m].iter().sum::<u64>() {
                return Err(TemporalError::Malformed(format!(
                    "total for {} does not match its cells",
                    MONTH_NAMES[m]
                )));
            }
            seen[m] = true;
        }
        if let Some(m) = seen.iter().position(|s| !s) {
            return Err(TemporalError::Malformed(format!(
                "missing row {}",
                MONTH_NAMES[m]
            )));
        }
        Ok(table)
    }
}

fn argmax(values: &[u64]) -> Option<usize> {
    let (i, v) = values.iter().enumerate().fold(
        (0, 0),
        |best, (i, &v)| if v > best.1 { (i, v) } else { best },
    );
    (v > 0).then_some(i)
}

pub fn aggregate_month_day(records: &[EventRecord]) -> MonthDayTable {
    let mut table = MonthDayTable::default();
    for r in records {
        match (r.month, r.weekday) {
            (Some(m), Some(d)) => table.counts[(m - 1) as usize][d as usize] += 1,
            _ => table.excluded += 1,
        }
    }
    table
}

/// Share of each weekday (Sunday first) in percent, rounded to 3 decimals.
pub fn weekday_shares(table: &MonthDayTable) -> Result<[f64; 7], TemporalError> {
    let total = table.grand_total();
    if total == 0 {
        return Err(TemporalError::UndefinedShare);
    }
    Ok(table
        .column_totals()
        .map(|c| round3(100.0 * c as f64 / total as f64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HourHistogram {
    pub counts: [u64; 24],
    pub excluded: u64,
}

impl HourHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn peak_hour(&self) -> Option<u8> {
        argmax(&self.counts).map(|h| h as u8)
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), TemporalError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["hour", "count"])?;
        for (h, c) in self.counts.iter().enumerate() {
            w.write_record([h.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self, TemporalError> {
        let mut r = csv::Reader::from_reader(source);
        let mut hist = HourHistogram::default();
        for rec in r.records() {
            let rec = rec?;
            let bad = || TemporalError::Malformed(format!("bad hourly row {:?}", rec));
            let h: usize = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(bad)?;
            let c: u64 = rec
                .get(1)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(bad)?;
            if h > 23 {
                return Err(bad());
            }
            hist.counts[h] = c;
        }
        Ok(hist)
    }
}

pub fn aggregate_hour(records: &[EventRecord]) -> HourHistogram {
    let mut hist = HourHistogram::default();
    for r in records {
        match r.hour {
            Some(h) => hist.counts[h as usize] += 1,
            None => hist.excluded += 1,
        }
    }
    hist
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryShare {
    pub category: String,
    pub count: u64,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FeatureBreakdown {
    pub feature: String,
    /// Descending by count, ties in lexicographic order.
    pub categories: Vec<CategoryShare>,
    pub total: u64,
    pub excluded: u64,
}

impl FeatureBreakdown {
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), TemporalError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["category", "count", "percentage"])?;
        for c in &self.categories {
            w.write_record([
                c.category.clone(),
                c.count.to_string(),
                format!("{:.3}", c.percentage),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `category,count,percentage` rows; the feature name is supplied by
    /// the caller.
    pub fn read_csv<R: Read>(feature: &str, source: R) -> Result<Self, TemporalError> {
        let mut r = csv::Reader::from_reader(source);
        let mut out = FeatureBreakdown {
            feature: feature.to_string(),
            ..Default::default()
        };
        for rec in r.records() {
            let rec = rec?;
            let bad = || TemporalError::Malformed(format!("bad breakdown row {:?}", rec));
            let count: u64 = rec
                .get(1)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(bad)?;
            let percentage: f64 = rec
                .get(2)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(bad)?;
            out.total += count;
            out.categories.push(CategoryShare {
                category: rec.get(0).unwrap_or_default().to_string(),
                count,
                percentage,
            });
        }
        Ok(out)
    }
}

pub fn aggregate_feature(
    records: &[EventRecord],
    feature: &str,
    schema: &SchemaMap,
) -> Result<FeatureBreakdown, TemporalError> {
    if !schema.has_feature(feature) {
        return Err(TemporalError::UnknownFeature(feature.to_string()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut excluded = 0;
    for r in records {
        match r.features.get(feature) {
            Some(v) => *counts.entry(v.as_str()).or_default() += 1,
            None => excluded += 1,
        }
    }
    let total: u64 = counts.values().sum();
    let mut categories: Vec<CategoryShare> = counts
        .into_iter()
        .map(|(category, count)| CategoryShare {
            category: category.to_string(),
            count,
            percentage: round3(100.0 * count as f64 / total as f64),
        })
        .collect();
    categories.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.category.cmp(&b.category))
    });
    Ok(FeatureBreakdown {
        feature: feature.to_string(),
        categories,
        total,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use proptest::prelude::*;

    fn rec(month: Option<u8>, weekday: Option<u8>, hour: Option<u8>) -> EventRecord {
        let mut r = EventRecord::new(GeoPoint::new(0.0, 0.0).unwrap());
        r.month = month;
        r.weekday = weekday;
        r.hour = hour;
        r
    }

    fn with_feature(value: &str) -> EventRecord {
        let mut r = rec(None, None, None);
        r.features.insert("road".into(), value.into());
        r
    }

    fn road_schema() -> SchemaMap {
        let mut s = SchemaMap::new("lat", "lon");
        s.feature_columns = vec![("road".into(), "road".into())];
        s
    }

    #[test]
    fn month_day_basics() {
        let t = aggregate_month_day(&[]);
        assert_eq!(t.grand_total(), 0);
        assert_eq!(t.max_month(), None);

        let t = aggregate_month_day(&[rec(Some(3), Some(5), None), rec(None, Some(1), None)]);
        assert_eq!(t.counts[2][5], 1);
        assert_eq!(t.grand_total(), 1);
        assert_eq!(t.excluded, 1);
        assert_eq!(t.max_month(), Some(3));
        assert_eq!(t.max_weekday(), Some(5));
    }

    #[test]
    fn shares() {
        assert!(matches!(
            weekday_shares(&MonthDayTable::default()),
            Err(TemporalError::UndefinedShare)
        ));
        let uniform = MonthDayTable {
            counts: [[10; 7]; 12],
            excluded: 0,
        };
        for s in weekday_shares(&uniform).unwrap() {
            assert!((s - 14.286).abs() < 0.001);
        }
    }

    #[test]
    fn hours() {
        let h = aggregate_hour(&[]);
        assert_eq!(h.total(), 0);
        assert_eq!(h.peak_hour(), None);
        let recs: Vec<_> = (0..3)
            .map(|_| rec(None, None, Some(18)))
            .chain([rec(None, None, None)])
            .collect();
        let h = aggregate_hour(&recs);
        assert_eq!(h.counts[18], 3);
        assert_eq!(h.excluded, 1);
        assert_eq!(h.peak_hour(), Some(18));
    }

    #[test]
    fn features() {
        let recs = [with_feature("A"), with_feature("B")];
        let b = aggregate_feature(&recs, "road", &road_schema()).unwrap();
        assert_eq!(b.total, 2);
        assert_eq!(b.categories[0].category, "A");
        assert_eq!(b.categories[0].percentage, 50.0);
        assert_eq!(b.categories[1].percentage, 50.0);

        let b = aggregate_feature(&[], "road", &road_schema()).unwrap();
        assert!(b.categories.is_empty());
        assert_eq!(b.total, 0);

        assert!(matches!(
            aggregate_feature(&recs, "speed", &road_schema()),
            Err(TemporalError::UnknownFeature(f)) if f == "speed"
        ));
    }

    #[test]
    fn feature_order_and_rounding() {
        let recs: Vec<_> = ["b", "a", "c", "c", "b", "c", "x"]
            .iter()
            .map(|v| with_feature(v))
            .chain([rec(None, None, None)])
            .collect();
        let b = aggregate_feature(&recs, "road", &road_schema()).unwrap();
        let order: Vec<&str> = b.categories.iter().map(|c| c.category.as_str()).collect();
        assert_eq!(order, vec!["c", "b", "a", "x"]);
        assert_eq!(b.categories[0].percentage, 42.857);
        assert_eq!(b.excluded, 1);

        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "category,count,percentage\nc,3,42.857\nb,2,28.571\na,1,14.286\nx,1,14.286\n"
        );
        let back = FeatureBreakdown::read_csv("road", buf.as_slice()).unwrap();
        assert_eq!(back.categories, b.categories);
    }

    #[test]
    fn malformed_tables_rejected() {
        let bad_total = "Months,Sunday,Monday,Tuesday,Wednesday,Thursday,Friday,Saturday,total cases\nJanuary,1,1,1,1,1,1,1,8\n";
        assert!(MonthDayTable::read_csv(bad_total.as_bytes()).is_err());
        assert!(HourHistogram::read_csv("hour,count\n24,1\n".as_bytes()).is_err());
    }

    fn arb_record() -> impl Strategy<Value = EventRecord> {
        (
            prop::option::of(1u8..=12),
            prop::option::of(0u8..=6),
            prop::option::of(0u8..=23),
            prop::option::of("[a-e]"),
        )
            .prop_map(|(m, d, h, f)| {
                let mut r = rec(m, d, h);
                if let Some(f) = f {
                    r.features.insert("road".into(), f);
                }
                r
            })
    }

    proptest! {
        #[test]
        fn conservation_and_closure(records in prop::collection::vec(arb_record(), 0..300)) {
            let n = records.len() as u64;
            let t = aggregate_month_day(&records);
            prop_assert_eq!(t.grand_total() + t.excluded, n);
            for (m, total) in t.row_totals().iter().enumerate() {
                prop_assert_eq!(*total, t.counts[m].iter().sum::<u64>());
            }
            let h = aggregate_hour(&records);
            prop_assert_eq!(h.total() + h.excluded, n);
            let f = aggregate_feature(&records, "road", &road_schema()).unwrap();
            prop_assert_eq!(f.total + f.excluded, n);
            prop_assert_eq!(f.categories.iter().map(|c| c.count).sum::<u64>(), f.total);

            if t.grand_total() > 0 {
                let s: f64 = weekday_shares(&t).unwrap().iter().sum();
                prop_assert!((s - 100.0).abs() <= 0.005);
            }
            if f.total > 0 {
                let s: f64 = f.categories.iter().map(|c| c.percentage).sum();
                prop_assert!((s - 100.0).abs() <= 0.005);
            }
        }

        #[test]
        fn permutation_invariance(records in prop::collection::vec(arb_record(), 0..100), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(aggregate_month_day(&records), aggregate_month_day(&shuffled));
            prop_assert_eq!(aggregate_hour(&records), aggregate_hour(&shuffled));
            prop_assert_eq!(
                aggregate_feature(&records, "road", &road_schema()).unwrap(),
                aggregate_feature(&shuffled, "road", &road_schema()).unwrap()
            );
        }

        #[test]
        fn month_day_csv_round_trip(records in prop::collection::vec(arb_record(), 0..300)) {
            let t = aggregate_month_day(&records);
            let mut buf = Vec::new();
            t.write_csv(&mut buf).unwrap();
            let back = MonthDayTable::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.counts, t.counts);
        }
    }
}
