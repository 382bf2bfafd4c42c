mod common;

use common::rng;
use rand::Rng;
use stereo_core::loss::{LabeledSample, LossConfig};
use stereo_core::model::{ModelConfig, WeightSet};
use stereo_core::synth::{synth_pair, SynthScene};
use stereo_core::train::{
    adam_step, augment, flip_vertical, poly_lr, random_crop, shift_disparity, train, train_epoch, AdamConfig,
    AugmentFlags, Gradients, OptimizerState, TrainConfig, MIN_VALID_FRACTION,
};
use stereo_core::{Error, Mask, Tensor};

fn scalar_weights(w: f64) -> WeightSet<f64> {
    let mut ws = WeightSet::new();
    ws.insert("w", Tensor::scalar(w)).unwrap();
    ws
}

fn grads(g: f64) -> Gradients<f64> {
    [("w".to_owned(), vec![g])].into_iter().collect()
}

#[test]
fn poly_lr_examples() {
    assert_eq!(poly_lr(0, 100, 0.001, 0.9).unwrap(), 0.001);
    assert_eq!(poly_lr(100, 100, 0.001, 0.9).unwrap(), 0.0);
    assert!((poly_lr(50, 100, 0.001, 0.9).unwrap() - 5.359e-4).abs() < 1e-7);
    assert!(poly_lr(101, 100, 0.001, 0.9).is_err());
    let mut prev = f64::INFINITY;
    for t in 0..=37 {
        let lr = poly_lr(t, 37, 0.01, 0.9).unwrap();
        assert!(lr <= prev);
        prev = lr;
    }
}

#[test]
fn adam_first_step_is_lr_times_sign() {
    let cfg = AdamConfig {
        eps: 0.0,
        ..AdamConfig::default()
    };
    for g in [0.3, -2.0, 1e-6] {
        let mut w = scalar_weights(1.0);
        let mut st = OptimizerState::new(&w);
        adam_step(&mut w, &grads(g), &mut st, 0.01, &cfg).unwrap();
        let step = w.get("w").unwrap().item() - 1.0;
        assert!((step.abs() - 0.01).abs() < 1e-15, "{step}");
        assert_eq!(step.signum(), -g.signum());
    }
}

#[test]
fn adam_zero_gradient_keeps_weights_and_counts_step() {
    let mut w = scalar_weights(0.7);
    let mut st = OptimizerState::new(&w);
    adam_step(&mut w, &grads(0.0), &mut st, 0.1, &AdamConfig::default()).unwrap();
    assert_eq!(w.get("w").unwrap().item(), 0.7);
    assert_eq!(st.t, 1);
}

#[test]
fn adam_minimises_a_quadratic() {
    let mut w = scalar_weights(1.0);
    let mut st = OptimizerState::new(&w);
    for _ in 0..200 {
        let x = w.get("w").unwrap().item();
        adam_step(&mut w, &grads(2.0 * x), &mut st, 0.1, &AdamConfig::default()).unwrap();
    }
    assert!(w.get("w").unwrap().item().abs() < 1e-2);
}

#[test]
fn adam_matches_scalar_reference() {
    let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.05f64);
    let mut r = rng(3);
    let gs: Vec<f64> = (0..100).map(|_| r.random_range(-1.0..1.0)).collect();
    let (mut x, mut m, mut v) = (0.4f64, 0.0f64, 0.0f64);
    let mut w = scalar_weights(0.4);
    let mut st = OptimizerState::new(&w);
    for (t, &g) in gs.iter().enumerate() {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t as i32 + 1));
        let vh = v / (1.0 - b2.powi(t as i32 + 1));
        x -= lr * mh / (vh.sqrt() + eps);
        adam_step(&mut w, &grads(g), &mut st, lr, &AdamConfig::default()).unwrap();
        assert!((w.get("w").unwrap().item() - x).abs() <= 1e-10);
    }
}

#[test]
fn adam_names_missing_gradient() {
    let mut w = scalar_weights(1.0);
    let mut st = OptimizerState::new(&w);
    let err = adam_step(&mut w, &Gradients::new(), &mut st, 0.1, &AdamConfig::default()).unwrap_err();
    assert!(matches!(&err, Error::MissingGradient(n) if n == "w"), "{err}");
}

fn sample(seed: u64) -> LabeledSample<f32> {
    synth_pair(&SynthScene::random(seed, 32, 24, 16)).unwrap()
}

#[test]
fn augment_with_no_flags_is_identity() {
    let s = sample(1);
    assert_eq!(augment(&s, &AugmentFlags::default(), &mut rng(0)), s);
}

#[test]
fn vertical_flip_is_an_involution() {
    let s = sample(2);
    let f = flip_vertical(&s);
    assert_ne!(f, s);
    assert_eq!(flip_vertical(&f), s);
    assert_eq!(f.gt_disparity.at(&[0, 5]), s.gt_disparity.at(&[23, 5]));
}

#[test]
fn photometric_augmentation_keeps_labels() {
    let s = sample(3);
    let flags = AugmentFlags {
        color_jitter: true,
        noise: true,
        blur: true,
        ..AugmentFlags::default()
    };
    for seed in 0..5 {
        let a = augment(&s, &flags, &mut rng(seed));
        assert_eq!(a.gt_disparity, s.gt_disparity);
        assert_eq!(a.valid_mask, s.valid_mask);
        assert_ne!(a.pair.left, s.pair.left);
        assert!(a.pair.left.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn jitter_and_blur_treat_both_views_alike() {
    let s = sample(4);
    let same = LabeledSample {
        pair: stereo_core::StereoPair::new(s.pair.left.clone(), s.pair.left.clone()).unwrap(),
        ..s
    };
    let flags = AugmentFlags {
        color_jitter: true,
        blur: true,
        ..AugmentFlags::default()
    };
    let a = augment(&same, &flags, &mut rng(8));
    assert_eq!(a.pair.left, a.pair.right);
}

#[test]
fn disparity_shift_keeps_the_pair_consistent() {
    let s = sample(5);
    for k in 0..=2 {
        let t = shift_disparity(&s, k);
        let w = 32;
        for y in 0..24 {
            for x in 0..w {
                if !t.valid_mask.get(y, x) {
                    continue;
                }
                let d = t.gt_disparity.at(&[y, x]);
                assert_eq!(d, s.gt_disparity.at(&[y, x]) - k as f32);
                let xr = x - d as usize;
                for c in 0..3 {
                    assert_eq!(t.pair.right.at(&[c, y, xr]), t.pair.left.at(&[c, y, x]));
                }
            }
        }
    }
}

#[test]
fn random_crop_respects_bounds_and_valid_fraction() {
    let s = sample(6);
    assert!(random_crop(&s, 28, 40, &mut rng(0)).is_err());
    for seed in 0..10 {
        let c = random_crop(&s, 16, 16, &mut rng(seed)).unwrap();
        assert_eq!(c.pair.left.shape(), &[3, 16, 16]);
        assert!(c.valid_mask.count() as f64 >= MIN_VALID_FRACTION * 256.0);
    }
    // A sparse mask forces resampling; the crop still lands on a valid pixel.
    let mut sparse = s.clone();
    sparse.valid_mask = Mask::from_fn(24, 32, |y, x| y == 20 && x == 30);
    let c = random_crop(&sparse, 8, 8, &mut rng(1)).unwrap();
    assert_eq!(c.pair.left.shape(), &[3, 8, 8]);
}

fn tiny() -> (ModelConfig, TrainConfig, Vec<LabeledSample<f32>>) {
    let cfg = ModelConfig::toy();
    let tc = TrainConfig {
        epochs: 3,
        batch_size: 2,
        crop_h: 16,
        crop_w: 24,
        seed: 7,
        augment: AugmentFlags::all(),
        ..TrainConfig::default()
    };
    (cfg, tc, (0..4).map(sample).collect())
}

#[test]
fn training_is_bitwise_reproducible() {
    let (cfg, tc, data) = tiny();
    let run = || {
        let mut w = WeightSet::<f32>::init(&cfg, 0).unwrap();
        train(&data, &mut w, &cfg, &tc, &LossConfig::default(), |_, _| {}).unwrap();
        w.to_bytes()
    };
    let a = run();
    assert_eq!(a, run());
    assert_ne!(a, WeightSet::<f32>::init(&cfg, 0).unwrap().to_bytes());
}

#[test]
fn epoch_learning_rate_follows_schedule() {
    let (cfg, tc, data) = tiny();
    let mut w = WeightSet::<f32>::init(&cfg, 0).unwrap();
    let hist = train(&data, &mut w, &cfg, &tc, &LossConfig::default(), |_, _| {}).unwrap();
    for s in &hist {
        assert_eq!(s.lr, poly_lr(s.epoch, tc.epochs, tc.lr0, tc.poly_power).unwrap());
        assert_eq!(s.log_line().split('\t').count(), 8);
    }
}

#[test]
fn epoch_rejects_bad_inputs() {
    let (cfg, tc, data) = tiny();
    let mut w = WeightSet::<f32>::init(&cfg, 0).unwrap();
    let mut st = OptimizerState::new(&w);
    let lc = LossConfig::default();
    assert!(train_epoch(&[], &mut w, &mut st, &cfg, &tc, &lc, 0).is_err());
    let big = TrainConfig {
        crop_h: 32,
        ..tc.clone()
    };
    assert!(train_epoch(&data, &mut w, &mut st, &cfg, &big, &lc, 0).is_err());
    let odd = TrainConfig { crop_w: 22, ..tc };
    assert!(train_epoch(&data, &mut w, &mut st, &cfg, &odd, &lc, 0).is_err());
}
