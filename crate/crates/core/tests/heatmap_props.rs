use hotspot::geo::{BBox, GeoPoint};
use hotspot::heatmap::{kernel_value, render, HeatmapParams, Raster};
use proptest::prelude::*;

const BOX: (f64, f64, f64, f64) = (35.20, 35.26, -80.88, -80.80);

fn params(width: usize, height: usize, alpha: f64) -> HeatmapParams {
    let (a, b, c, d) = BOX;
    let mut p = HeatmapParams::new(BBox::new(a, b, c, d).unwrap());
    p.width = width;
    p.height = height;
    p.alpha = alpha;
    p.normalize = false;
    p
}

fn events() -> impl Strategy<Value = Vec<GeoPoint>> {
    prop::collection::vec((BOX.0..BOX.1, BOX.2..BOX.3), 0..60).prop_map(|v| {
        v.into_iter()
            .map(|(la, lo)| GeoPoint::new(la, lo).unwrap())
            .collect()
    })
}

/// Full kernel sum with no cutoff.
fn exhaustive(points: &[GeoPoint], p: &HeatmapParams) -> Raster {
    let mut r = Raster::zeros(p.width, p.height, p.bbox);
    for row in 0..p.height {
        for col in 0..p.width {
            let (lat, lon) = r.cell_center(row, col);
            let centre = GeoPoint::new(lat, lon).unwrap();
            r.values[row * p.width + col] = points
                .iter()
                .map(|e| kernel_value(&centre, e, p.alpha))
                .sum();
        }
    }
    r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn additive(a in events(), b in events(), alpha in 1e-6f64..1e-4) {
        let p = params(24, 18, alpha);
        let ra = render(&a, &p).unwrap();
        let rb = render(&b, &p).unwrap();
        let joined: Vec<GeoPoint> = a.iter().chain(&b).copied().collect();
        let rj = render(&joined, &p).unwrap();
        for i in 0..rj.values.len() {
            prop_assert!((rj.values[i] - ra.values[i] - rb.values[i]).abs() <= 1e-9);
            // adding events never lowers a cell
            prop_assert!(rj.values[i] + 1e-12 >= ra.values[i]);
        }
    }

    #[test]
    fn mirror_symmetric(a in events(), alpha in 1e-6f64..1e-4) {
        let p = params(20, 16, alpha);
        let (clat, clon) = ((BOX.0 + BOX.1) / 2.0, (BOX.2 + BOX.3) / 2.0);
        let mirrored: Vec<GeoPoint> = a
            .iter()
            .map(|e| GeoPoint::new(2.0 * clat - e.lat(), 2.0 * clon - e.lon()).unwrap())
            .collect();
        let r = render(&a, &p).unwrap();
        let m = render(&mirrored, &p).unwrap();
        for row in 0..p.height {
            for col in 0..p.width {
                let mv = m.get(p.height - 1 - row, p.width - 1 - col);
                prop_assert!((r.get(row, col) - mv).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn cutoff_is_sound(a in prop::collection::vec((BOX.0..BOX.1, BOX.2..BOX.3), 100),
                       alpha in 1e-6f64..1e-4) {
        let pts: Vec<GeoPoint> = a.into_iter().map(|(la, lo)| GeoPoint::new(la, lo).unwrap()).collect();
        let p = params(16, 12, alpha);
        let fast = render(&pts, &p).unwrap();
        let full = exhaustive(&pts, &p);
        for (x, y) in fast.values.iter().zip(&full.values) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn normalized_peak_is_one(a in events()) {
        prop_assume!(!a.is_empty());
        let mut p = params(20, 20, 1e-5);
        p.normalize = true;
        let r = render(&a, &p).unwrap();
        prop_assert!(r.values.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(r.max_value() == 0.0 || (r.max_value() - 1.0).abs() < 1e-12);
    }
}
