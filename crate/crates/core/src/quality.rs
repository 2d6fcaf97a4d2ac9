//! Silhouette validation of a clustering. Noise points are left out.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dbscan::{Clustering, Label};
use crate::geo::GeoPoint;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QualityError {
    #[error("empty clustering")]
    EmptyInput,
    #[error("silhouette is undefined for {0} cluster(s); at least 2 are required")]
    Undefined(usize),
    #[error("clustering has {labels} labels for {points} points")]
    LengthMismatch { labels: usize, points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SilhouetteResult {
    pub mean_score: f64,
    /// Scores of clustered points, in input order.
    pub per_point: Vec<f64>,
    /// Input index of each entry in `per_point`.
    pub point_indices: Vec<usize>,
    pub excluded_noise: usize,
}

/// Mean silhouette over all clustered points under `metric`.
///
/// Singleton clusters score 0. A point whose intra- and nearest-cluster mean
/// distances are both zero also scores 0.
pub fn silhouette<M>(
    points: &[GeoPoint],
    clustering: &Clustering,
    metric: M,
) -> Result<SilhouetteResult, QualityError>
where
    M: Fn(&GeoPoint, &GeoPoint) -> f64 + Sync,
{
    if clustering.labels.len() != points.len() {
        return Err(QualityError::LengthMismatch {
            labels: clustering.labels.len(),
            points: points.len(),
        });
    }
    if points.is_empty() {
        return Err(QualityError::EmptyInput);
    }

    let members = clustering.members();
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let non_empty = sizes.iter().filter(|&&s| s > 0).count();
    if non_empty < 2 {
        return Err(QualityError::Undefined(non_empty));
    }

    let clustered: Vec<(usize, usize)> = clustering
        .labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.cluster_id().map(|c| (i, c)))
        .collect();

    let per_point: Vec<f64> = clustered
        .par_iter()
        .map(|&(i, own)| {
            if sizes[own] < 2 {
                return 0.0;
            }
            // one pass over all clustered points, summing per cluster
            let mut sums = vec![0.0f64; sizes.len()];
            for &(j, c) in &clustered {
                if j != i {
                    sums[c] += metric(&points[i], &points[j]);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = sums
                .iter()
                .zip(&sizes)
                .enumerate()
                .filter(|&(c, (_, &n))| c != own && n > 0)
                .map(|(_, (s, &n))| s / n as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                ((b - a) / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();

    let mean_score = per_point.iter().sum::<f64>() / per_point.len() as f64;
    Ok(SilhouetteResult {
        mean_score,
        per_point,
        point_indices: clustered.iter().map(|&(i, _)| i).collect(),
        excluded_noise: clustering
            .labels
            .iter()
            .filter(|l| **l == Label::Noise)
            .count(),
    })
}
