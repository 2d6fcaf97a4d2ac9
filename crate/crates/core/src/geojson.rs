//! GeoJSON encodings of clustering results.

use serde_json::{json, Value};

use crate::dbscan::{ClusterSummary, Clustering, Label};
use crate::geo::GeoPoint;
use crate::markers::MarkerClusterSet;

fn point_feature(p: &GeoPoint, properties: Value) -> Value {
    json!({
        "type": "Feature",
        "geometry": { "type": "Point", "coordinates": [p.lon(), p.lat()] },
        "properties": properties,
    })
}

/// One feature per input point (`kind = "point"`, `cluster_id` is -1 for
/// noise) followed by one per cluster centroid (`kind = "centroid"`).
pub fn clusters_collection(
    points: &[GeoPoint],
    clustering: &Clustering,
    summary: &[ClusterSummary],
) -> Value {
    let mut features = Vec::with_capacity(points.len() + summary.len());
    for (i, p) in points.iter().enumerate() {
        let cluster_id = match clustering.labels[i] {
            Label::Cluster(c) => c as i64,
            Label::Noise => -1,
        };
        features.push(point_feature(
            p,
            json!({
                "kind": "point",
                "cluster_id": cluster_id,
                "is_core": clustering.core_flags[i],
            }),
        ));
    }
    for s in summary {
        features.push(point_feature(
            &s.centroid,
            json!({
                "kind": "centroid",
                "cluster_id": s.cluster_id,
                "member_count": s.member_count,
            }),
        ));
    }
    json!({ "type": "FeatureCollection", "features": features })
}

/// One feature per marker cluster, placed at its founder.
pub fn markers_collection(set: &MarkerClusterSet) -> Value {
    let features: Vec<Value> = set
        .clusters
        .iter()
        .map(|c| {
            point_feature(
                &c.founder,
                json!({ "count": c.count(), "zoom": set.zoom_current }),
            )
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}
