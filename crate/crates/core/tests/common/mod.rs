//! Brute-force reference implementations shared by the integration tests.
//! Nothing here goes through the grid index or the optimized loops.

#![allow(dead_code)]

use hotspot::dbscan::{Clustering, Label};
use hotspot::geo::GeoPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const R_KM: f64 = 6371.0088;

/// Haversine in the asin form, written out independently of the library.
pub fn oracle_distance(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (la1, lo1) = (a.lat().to_radians(), a.lon().to_radians());
    let (la2, lo2) = (b.lat().to_radians(), b.lon().to_radians());
    let s1 = ((la2 - la1) / 2.0).sin();
    let s2 = ((lo2 - lo1) / 2.0).sin();
    let h = s1 * s1 + la1.cos() * la2.cos() * s2 * s2;
    2.0 * R_KM * h.sqrt().min(1.0).asin()
}

/// Textbook DBSCAN over a full distance matrix.
pub fn brute_force_dbscan(points: &[GeoPoint], eps_km: f64, min_pts: usize) -> Clustering {
    let n = points.len();
    let region = |p: usize| -> Vec<usize> {
        (0..n)
            .filter(|&q| oracle_distance(&points[p], &points[q]) <= eps_km)
            .collect()
    };
    let mut visited = vec![false; n];
    let mut labels = vec![Label::Noise; n];
    let mut core = vec![false; n];
    let mut clusters = 0;

    for p in 0..n {
        if visited[p] {
            continue;
        }
        visited[p] = true;
        let neighborhood = region(p);
        if neighborhood.len() < min_pts {
            continue;
        }
        core[p] = true;
        let c = clusters;
        clusters += 1;
        labels[p] = Label::Cluster(c);
        let mut seeds = neighborhood;
        let mut k = 0;
        while k < seeds.len() {
            let q = seeds[k];
            k += 1;
            if !visited[q] {
                visited[q] = true;
                let nq = region(q);
                if nq.len() >= min_pts {
                    core[q] = true;
                    seeds.extend(nq);
                }
            }
            if labels[q] == Label::Noise {
                labels[q] = Label::Cluster(c);
            }
        }
    }
    Clustering {
        labels,
        core_flags: core,
        cluster_count: clusters,
    }
}

/// Silhouette straight from the definition; `None` for noise points.
pub fn brute_force_silhouette(points: &[GeoPoint], labels: &[Label]) -> Vec<Option<f64>> {
    let clusters: Vec<usize> = {
        let mut ids: Vec<usize> = labels.iter().filter_map(|l| l.cluster_id()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    (0..points.len())
        .map(|i| {
            let own = labels[i].cluster_id()?;
            let mean_to = |c: usize, skip_self: bool| -> Option<f64> {
                let ds: Vec<f64> = (0..points.len())
                    .filter(|&j| labels[j].cluster_id() == Some(c) && !(skip_self && j == i))
                    .map(|j| oracle_distance(&points[i], &points[j]))
                    .collect();
                (!ds.is_empty()).then(|| ds.iter().sum::<f64>() / ds.len() as f64)
            };
            let Some(a) = mean_to(own, true) else {
                return Some(0.0);
            };
            let b = clusters
                .iter()
                .filter(|&&c| c != own)
                .filter_map(|&c| mean_to(c, false))
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            Some(if m > 0.0 { (b - a) / m } else { 0.0 })
        })
        .collect()
}

/// Blobs plus scattered noise in a ~1 km square near Charlotte.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> Vec<GeoPoint> {
    let blobs = rng.random_range(1..=5);
    let centers: Vec<(f64, f64)> = (0..blobs)
        .map(|_| {
            (
                35.2 + rng.random_range(0.0..0.01),
                -80.85 + rng.random_range(0.0..0.01),
            )
        })
        .collect();
    let jitter = Normal::new(0.0, rng.random_range(0.0001..0.0005)).unwrap();
    (0..n)
        .map(|_| {
            if rng.random_bool(0.8) {
                let (lat, lon) = centers[rng.random_range(0..blobs)];
                GeoPoint::new(lat + jitter.sample(rng), lon + jitter.sample(rng)).unwrap()
            } else {
                GeoPoint::new(
                    35.2 + rng.random_range(0.0..0.01),
                    -80.85 + rng.random_range(0.0..0.01),
                )
                .unwrap()
            }
        })
        .collect()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
