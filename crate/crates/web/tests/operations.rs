use coopcache_web::{placement_curve, rate_profile, speed_histogram};

#[test]
fn histogram_tracks_density() {
    let rows = speed_histogram(55.0, 2.5, 50.0, 60.0, 50_000, 10, 3).unwrap();
    assert_eq!(rows.len(), 10);
    // Bins are 1 km/h wide, so densities sum to the total mass.
    let mass: f64 = rows.iter().map(|r| r[2]).sum();
    assert!((mass - 1.0).abs() < 1e-9);
    for r in &rows {
        assert!((r[1] - r[2]).abs() < 0.02, "{r:?}");
    }
    assert!(speed_histogram(55.0, 2.5, 60.0, 50.0, 10, 10, 1).is_err());
}

#[test]
fn rates_peak_abeam_the_rsu() {
    let rows = rate_profile(1000.0, 10.0, 25.0, 11, 1).unwrap();
    assert_eq!(rows[5][0], 500.0);
    assert!(rows[5][1] > rows[0][1] && rows[5][1] > rows[10][1]);
    assert!(rows[5][2] > rows[0][2] && rows[5][2] > rows[10][2]);
    assert!(rows.iter().all(|r| r[1..].iter().all(|x| x.is_finite() && *x > 0.0)));
    assert!(rate_profile(1000.0, 10.0, 25.0, 1, 1).is_err());
}

#[test]
fn placement_curve_is_deterministic() {
    let a = placement_curve(12, 3, 6, 4, 5).unwrap();
    assert_eq!(a.len(), 4);
    assert_eq!(a, placement_curve(12, 3, 6, 4, 5).unwrap());
    assert!(a.iter().all(|r| (0.0..=1.0).contains(&r[2])));
    assert!(placement_curve(4, 3, 6, 4, 5).is_err());
}
