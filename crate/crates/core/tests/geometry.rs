mod common;

use common::rng;
use rand::Rng;
use stereo_core::geometry::{
    depth_to_disparity, depth_to_points, disparity_to_depth, disparity_to_points, disparity_tolerance,
    expected_depth_error, voxelize,
};
use stereo_core::{CameraRig, Mask, PointCloud, Tensor};

fn rig_1074() -> CameraRig {
    CameraRig::new(1074.0, 1074.0, 1280.0, 1024.0, 0.1, 2560, 2048).unwrap()
}

#[test]
fn rig_invariants() {
    assert!(CameraRig::new(0.0, 1.0, 1.0, 1.0, 0.1, 4, 4).is_err());
    assert!(CameraRig::new(1.0, 1.0, 4.0, 1.0, 0.1, 4, 4).is_err());
    assert!(CameraRig::new(1.0, 1.0, 1.0, 1.0, -0.1, 4, 4).is_err());
    let r = CameraRig::reference();
    assert!((r.fx - 1074.05).abs() < 0.01);
}

#[test]
fn depth_examples() {
    let r = rig_1074();
    assert!((disparity_to_depth(53.7, &r).unwrap() - 2.0).abs() < 1e-9);
    assert!((disparity_to_depth(r.fx * r.baseline, &r).unwrap() - 1.0).abs() < 1e-12);
    assert!((disparity_to_depth(383.0, &r).unwrap() - 0.280).abs() < 5e-4);
    assert!(disparity_to_depth(10.0, &r).unwrap() > disparity_to_depth(10.5, &r).unwrap());
}

#[test]
fn round_trip_is_exact_to_1e_9() {
    let r = CameraRig::reference();
    let mut g = rng(1);
    for _ in 0..10_000 {
        let d: f64 = g.random_range(1e-3..384.0);
        let back = depth_to_disparity(disparity_to_depth(d, &r).unwrap(), &r).unwrap();
        assert!((back - d).abs() / d <= 1e-9);
    }
}

#[test]
fn depth_error_examples() {
    let r = rig_1074();
    let delta = disparity_tolerance(2.0, 0.01, &r);
    assert!((delta - 0.2685).abs() < 1e-4, "{delta}");
    assert!((expected_depth_error(2.0, delta, &r) - 0.01).abs() < 1e-15);
    assert_eq!(expected_depth_error(2.0, 0.0, &r), 0.0);
    let e1 = expected_depth_error(1.3, 0.2, &r);
    let e2 = expected_depth_error(2.6, 0.2, &r);
    assert!((e2 / e1 - 4.0).abs() < 1e-12);
}

#[test]
fn first_order_error_tracks_exact_difference() {
    let r = CameraRig::reference();
    for zi in 1..=30 {
        let z = zi as f64 * 0.1;
        for di in 1..=10 {
            let delta = di as f64 * 0.05;
            let d = depth_to_disparity(z, &r).unwrap();
            let exact = disparity_to_depth(d, &r).unwrap() - disparity_to_depth(d + delta, &r).unwrap();
            let approx = expected_depth_error(z, delta, &r);
            assert!((approx - exact).abs() / exact <= 0.05, "z={z} delta={delta}");
        }
    }
}

#[test]
fn point_examples() {
    let r = CameraRig::new(100.0, 100.0, 4.0, 3.0, 0.1, 8, 6).unwrap();
    let depth = Tensor::full(&[6, 8], 2.0f64);
    let only_centre = Mask::from_fn(6, 8, |y, x| (y, x) == (3, 4));
    let c = depth_to_points(&depth, Some(&only_centre), &r, None).unwrap();
    assert_eq!(c.points, vec![[0.0, 0.0, 2.0]]);

    let none = depth_to_points(&depth, Some(&Mask::filled(6, 8, false)), &r, None).unwrap();
    assert!(none.is_empty());

    let disp = Tensor::full(&[6, 8], 5.0f64);
    let plane = disparity_to_points(&disp, None, &r, None).unwrap();
    assert_eq!(plane.len(), 48);
    let z0 = plane.points[0][2];
    assert!(plane.points.iter().all(|p| p[2] == z0));
    assert!((z0 as f64 - 2.0).abs() < 1e-6);
}

#[test]
fn colours_follow_points() {
    let r = CameraRig::new(100.0, 100.0, 1.0, 1.0, 0.1, 2, 2).unwrap();
    let depth = Tensor::new(&[2, 2], vec![1.0f64, -1.0, f64::NAN, 2.0]).unwrap();
    let img = Tensor::from_fn(&[3, 2, 2], |i| i as f64 / 11.0);
    let c = depth_to_points(&depth, None, &r, Some(&img)).unwrap();
    assert_eq!(c.len(), 2);
    let cols = c.colors.unwrap();
    assert_eq!(cols[0], [0, 93, 185]);
    assert_eq!(cols[1], [70, 162, 255]);
}

#[test]
fn voxel_examples() {
    let one = PointCloud {
        points: vec![[0.01, 0.01, 0.01]],
        colors: None,
    };
    assert_eq!(
        voxelize(&one, 0.02).unwrap().into_iter().collect::<Vec<_>>(),
        vec![[0, 0, 0]]
    );
    let two = PointCloud {
        points: vec![[0.001, 0.0, 0.5], [0.019, 0.0, 0.5]],
        colors: None,
    };
    let v = voxelize(&two, 0.02).unwrap();
    assert_eq!(v.into_iter().collect::<Vec<_>>(), vec![[0, 0, 25]]);
    assert!(voxelize(&PointCloud::default(), 0.02).unwrap().is_empty());
    assert!(voxelize(&one, 0.0).is_err());
}

#[test]
fn voxelize_matches_floor_oracle_and_is_order_free() {
    let mut g = rng(5);
    let points: Vec<[f32; 3]> = (0..10_000)
        .map(|_| {
            [
                g.random_range(-3.0..3.0),
                g.random_range(-3.0..3.0),
                g.random_range(0.1..6.0),
            ]
        })
        .collect();
    let cloud = PointCloud {
        points: points.clone(),
        colors: None,
    };
    let got = voxelize(&cloud, 0.02).unwrap();
    let mut want = std::collections::BTreeSet::new();
    for p in &points {
        let mut idx = [0i64; 3];
        for k in 0..3 {
            let q = p[k] as f64 / 0.02;
            let mut f = q as i64;
            if (f as f64) > q {
                f -= 1;
            }
            idx[k] = f;
        }
        want.insert(idx);
    }
    assert_eq!(got, want);
    let mut rev = cloud.clone();
    rev.points.reverse();
    assert_eq!(voxelize(&rev, 0.02).unwrap(), got);
    let doubled = PointCloud {
        points: [points.clone(), points].concat(),
        colors: None,
    };
    assert_eq!(voxelize(&doubled, 0.02).unwrap(), got);
}
