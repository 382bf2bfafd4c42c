mod common;

use common::{metrics_oracle, random_tensor, rng};
use rand::Rng;
use stereo_core::metrics::{compute_metrics, DEFAULT_THRESHOLDS};
use stereo_core::{Mask, Tensor};

#[test]
fn perfect_prediction() {
    let gt = Tensor::full(&[4, 4], 3.0f64);
    let r = compute_metrics(&gt, &gt, None, &DEFAULT_THRESHOLDS).unwrap();
    assert_eq!((r.epe, r.rmse, r.a90, r.a95), (0.0, 0.0, 0.0, 0.0));
    assert!(r.bad.values().all(|&b| b == 0.0));
    assert_eq!(r.evaluated, 16);
}

#[test]
fn hand_example() {
    let gt = Tensor::zeros(&[1, 4]);
    let pred = Tensor::new(&[1, 4], vec![0.0f64, 1.0, -2.0, 3.0]).unwrap();
    let r = compute_metrics(&pred, &gt, None, &DEFAULT_THRESHOLDS).unwrap();
    assert_eq!(r.epe, 1.5);
    assert_eq!(r.bad_at(2.0), Some(0.25));
    assert_eq!(r.bad["2.0"], 0.25);
    assert!((r.rmse - 1.8708).abs() < 1e-4);
    assert_eq!(r.rmse, (14.0f64 / 4.0).sqrt());
}

#[test]
fn masked_pixels_never_matter() {
    let mut g = rng(1);
    let gt = random_tensor(&mut g, &[8, 8], 0.0, 10.0);
    let pred = random_tensor(&mut g, &[8, 8], 0.0, 10.0);
    let mask = Mask::from_fn(8, 8, |y, _| y < 4);
    let a = compute_metrics(&pred, &gt, Some(&mask), &DEFAULT_THRESHOLDS).unwrap();
    let mut wild = pred.clone();
    for x in 0..8 {
        wild.set(&[6, x], 1e6);
    }
    wild.set(&[7, 0], f64::NAN);
    let b = compute_metrics(&wild, &gt, Some(&mask), &DEFAULT_THRESHOLDS).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.masked, 32);
}

#[test]
fn empty_mask_is_an_error() {
    let gt = Tensor::zeros(&[2, 2]);
    assert!(compute_metrics::<f64>(&gt, &gt, Some(&Mask::filled(2, 2, false)), &[1.0]).is_err());
}

#[test]
fn non_finite_pixels_are_counted_not_scored() {
    let gt = Tensor::new(&[1, 3], vec![1.0f64, f64::NAN, 2.0]).unwrap();
    let pred = Tensor::new(&[1, 3], vec![1.5, 0.0, f64::INFINITY]).unwrap();
    let r = compute_metrics(&pred, &gt, None, &[1.0]).unwrap();
    assert_eq!((r.evaluated, r.excluded_nonfinite), (1, 2));
    assert_eq!(r.epe, 0.5);
}

#[test]
fn matches_brute_force_oracle_exactly() {
    let mut g = rng(2);
    let th = [0.5, 1.0, 2.0, 4.0];
    for _ in 0..50 {
        let gt = random_tensor(&mut g, &[16, 16], 0.0, 20.0);
        let pred = Tensor::from_fn(&[16, 16], |i| gt.data()[i] + g.random_range(-6.0..6.0));
        let mask = Mask::from_fn(16, 16, |_, _| g.random_bool(0.8));
        let r = compute_metrics(&pred, &gt, Some(&mask), &th).unwrap();
        let o = metrics_oracle(pred.data(), gt.data(), mask.data(), &th);
        assert!((r.epe - o.epe).abs() <= 1e-12 * o.epe.max(1.0));
        assert!((r.rmse - o.rmse).abs() <= 1e-12 * o.rmse.max(1.0));
        assert_eq!((r.a90, r.a95), (o.a90, o.a95));
        for (t, b) in th.iter().zip(&o.bad) {
            assert_eq!(r.bad_at(*t), Some(*b));
        }
        let bads: Vec<f64> = th.iter().map(|t| r.bad_at(*t).unwrap()).collect();
        assert!(bads.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.a90 <= r.a95);
    }
}
