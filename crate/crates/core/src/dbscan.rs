//! DBSCAN over geographic points with haversine distances.
//!
//! Neighbourhood queries go through a uniform grid whose cells are at least
//! `eps_km` wide on both axes, so scanning the 3x3 block around a point's cell
//! finds every point within `eps_km`. Candidates are then filtered with the
//! exact haversine distance.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_km, BBox, GeoPoint, KM_PER_DEGREE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DbscanError {
    #[error("eps_km must be finite and > 0, got {0}")]
    InvalidEps(f64),
    #[error("min_pts must be >= 1")]
    InvalidMinPts,
    #[error("cell size must be finite and > 0, got {0}")]
    InvalidCellSize(f64),
    #[error("eps {eps_km} km exceeds index cell size {cell_size_km} km")]
    EpsExceedsCell { eps_km: f64, cell_size_km: f64 },
    #[error("point index {0} out of range")]
    IndexOutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps_km: f64,
    /// Neighbourhood size (the point itself included) that makes a core point.
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams {
            eps_km: 0.05,
            min_pts: 300,
        }
    }
}

impl DbscanParams {
    pub fn new(eps_km: f64, min_pts: usize) -> Result<Self, DbscanError> {
        let p = DbscanParams { eps_km, min_pts };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DbscanError> {
        if !(self.eps_km.is_finite() && self.eps_km > 0.0) {
            return Err(DbscanError::InvalidEps(self.eps_km));
        }
        if self.min_pts == 0 {
            return Err(DbscanError::InvalidMinPts);
        }
        Ok(())
    }
}

// Keeps grid columns slightly narrower than the true east-west extent of
// `cell_size_km` at the most poleward latitude of the data.
const LON_SCALE_MARGIN: f64 = 0.999;

/// Uniform grid over a local equirectangular plane.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    cell_size_km: f64,
    km_per_deg_lon: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl SpatialIndex {
    /// Buckets `points` into square cells of `cell_size_km`.
    ///
    /// Longitude degrees are converted to kilometers with the cosine of the
    /// most poleward latitude in the set, which never overstates the true
    /// east-west distance between two points of the set.
    pub fn build(points: &[GeoPoint], cell_size_km: f64) -> Result<Self, DbscanError> {
        if !(cell_size_km.is_finite() && cell_size_km > 0.0) {
            return Err(DbscanError::InvalidCellSize(cell_size_km));
        }
        let max_abs_lat = points.iter().map(|p| p.lat().abs()).fold(0.0, f64::max);
        let km_per_deg_lon =
            (KM_PER_DEGREE * max_abs_lat.to_radians().cos() * LON_SCALE_MARGIN).max(0.0);

        let mut index = SpatialIndex {
            cell_size_km,
            km_per_deg_lon,
            cells: HashMap::new(),
        };
        for (i, p) in points.iter().enumerate() {
            let key = index.cell_of(p.lat(), p.lon());
            index.cells.entry(key).or_default().push(i);
        }
        Ok(index)
    }

    pub fn cell_size_km(&self) -> f64 {
        self.cell_size_km
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> impl Iterator<Item = (&(i64, i64), &Vec<usize>)> {
        self.cells.iter()
    }

    fn cell_of(&self, lat: f64, lon: f64) -> (i64, i64) {
        let row = (lat * KM_PER_DEGREE / self.cell_size_km).floor() as i64;
        let col = (lon * self.km_per_deg_lon / self.cell_size_km).floor() as i64;
        (row, col)
    }

    fn scan_block(&self, center: (i64, i64), out: &mut Vec<usize>) {
        for dr in -1..=1 {
            for dc in -1..=1 {
                if let Some(bucket) = self.cells.get(&(center.0 + dr, center.1 + dc)) {
                    out.extend_from_slice(bucket);
                }
            }
        }
    }

    /// Indices of all points within `eps_km` of `points[q]`, `q` included,
    /// in ascending order.
    pub fn neighbors(
        &self,
        points: &[GeoPoint],
        q: usize,
        eps_km: f64,
    ) -> Result<Vec<usize>, DbscanError> {
        if !(eps_km.is_finite() && eps_km > 0.0) {
            return Err(DbscanError::InvalidEps(eps_km));
        }
        if eps_km > self.cell_size_km {
            return Err(DbscanError::EpsExceedsCell {
                eps_km,
                cell_size_km: self.cell_size_km,
            });
        }
        let origin = points.get(q).ok_or(DbscanError::IndexOutOfRange(q))?;
        Ok(self.neighbors_unchecked(points, origin, eps_km))
    }

    fn neighbors_unchecked(
        &self,
        points: &[GeoPoint],
        origin: &GeoPoint,
        eps_km: f64,
    ) -> Vec<usize> {
        let mut candidates = Vec::new();
        self.scan_block(self.cell_of(origin.lat(), origin.lon()), &mut candidates);

        // Points across the antimeridian live at the other end of the grid.
        if (180.0 - origin.lon().abs()) * self.km_per_deg_lon <= self.cell_size_km {
            let wrapped = origin.lon() - 360.0f64.copysign(origin.lon());
            self.scan_block(self.cell_of(origin.lat(), wrapped), &mut candidates);
            candidates.sort_unstable();
            candidates.dedup();
        }

        let mut found: Vec<usize> = candidates
            .into_iter()
            .filter(|&i| haversine_km(origin, &points[i]) <= eps_km)
            .collect();
        found.sort_unstable();
        found
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Noise,
    Cluster(usize),
}

impl Label {
    pub fn cluster_id(&self) -> Option<usize> {
        match self {
            Label::Noise => None,
            Label::Cluster(id) => Some(*id),
        }
    }

    pub fn is_noise(&self) -> bool {
        matches!(self, Label::Noise)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub labels: Vec<Label>,
    pub core_flags: Vec<bool>,
    pub cluster_count: usize,
}

impl Clustering {
    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_noise()).count()
    }

    /// Member indices of each cluster, ordered by cluster id then point index.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count];
        for (i, label) in self.labels.iter().enumerate() {
            if let Label::Cluster(c) = label {
                out[*c].push(i);
            }
        }
        out
    }
}

/// Runs DBSCAN.
///
/// Cluster ids are assigned in the order their first core point appears in
/// the input. A border point within reach of several clusters goes to the
/// one created first.
pub fn dbscan(points: &[GeoPoint], params: &DbscanParams) -> Result<Clustering, DbscanError> {
    params.validate()?;
    let n = points.len();
    if n == 0 {
        return Ok(Clustering {
            labels: Vec::new(),
            core_flags: Vec::new(),
            cluster_count: 0,
        });
    }
    let index = SpatialIndex::build(points, params.eps_km)?;

    let core_flags: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| {
            index
                .neighbors_unchecked(points, &points[i], params.eps_km)
                .len()
                >= params.min_pts
        })
        .collect();

    let mut labels = vec![Label::Noise; n];
    let mut assigned = vec![false; n];
    let mut cluster_count = 0;
    let mut frontier = VecDeque::new();

    for seed in 0..n {
        if assigned[seed] || !core_flags[seed] {
            continue;
        }
        let id = cluster_count;
        cluster_count += 1;
        labels[seed] = Label::Cluster(id);
        assigned[seed] = true;
        frontier.push_back(seed);

        while let Some(p) = frontier.pop_front() {
            for q in index.neighbors_unchecked(points, &points[p], params.eps_km) {
                if assigned[q] {
                    continue;
                }
                assigned[q] = true;
                labels[q] = Label::Cluster(id);
                if core_flags[q] {
                    frontier.push_back(q);
                }
            }
        }
    }

    Ok(Clustering {
        labels,
        core_flags,
        cluster_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub member_count: usize,
    pub core_count: usize,
    pub centroid: GeoPoint,
    pub bbox: BBox,
}

/// Member count, mean position and tight extent of every cluster, by id.
pub fn cluster_summary(points: &[GeoPoint], clustering: &Clustering) -> Vec<ClusterSummary> {
    clustering
        .members()
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(cluster_id, members)| {
            let count = members.len() as f64;
            let (lat_sum, lon_sum) = members.iter().fold((0.0, 0.0), |(a, b), &i| {
                (a + points[i].lat(), b + points[i].lon())
            });
            let first = points[members[0]];
            let tight = members.iter().fold(
                BBox {
                    min_lat: first.lat(),
                    max_lat: first.lat(),
                    min_lon: first.lon(),
                    max_lon: first.lon(),
                },
                |b, &i| BBox {
                    min_lat: b.min_lat.min(points[i].lat()),
                    max_lat: b.max_lat.max(points[i].lat()),
                    min_lon: b.min_lon.min(points[i].lon()),
                    max_lon: b.max_lon.max(points[i].lon()),
                },
            );
            ClusterSummary {
                cluster_id,
                member_count: members.len(),
                core_count: members
                    .iter()
                    .filter(|&&i| clustering.core_flags[i])
                    .count(),
                centroid: GeoPoint::new(lat_sum / count, lon_sum / count)
                    .expect("mean of valid coordinates"),
                bbox: tight,
            }
        })
        .collect()
}
