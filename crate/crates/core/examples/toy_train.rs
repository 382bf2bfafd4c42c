//! Trains the toy configuration on synthetic pairs and reports validation EPE.
//!
//! `cargo run --release -p stereo-core --example toy_train -- [train] [val] [epochs] [weights-out]`

use stereo_core::loss::LossConfig;
use stereo_core::model::{forward, ModelConfig, WeightSet};
use stereo_core::synth::{synth_pair, SynthScene};
use stereo_core::train::{train, AugmentFlags, EpochStats, TrainConfig};

fn env_or<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> stereo_core::Result<()> {
    let raw: Vec<String> = std::env::args().skip(1).collect();
    let args: Vec<usize> = raw.iter().take(3).map(|a| a.parse().expect("integer")).collect();
    let n_train = args.first().copied().unwrap_or(200);
    let n_val = args.get(1).copied().unwrap_or(50);
    let epochs = args.get(2).copied().unwrap_or(100);

    let cfg = ModelConfig::toy();
    let make = |seed| synth_pair(&SynthScene::random(seed, 64, 64, cfg.ndisp));
    let data = (0..n_train as u64).map(make).collect::<Result<Vec<_>, _>>()?;
    let val = (10_000..10_000 + n_val as u64)
        .map(make)
        .collect::<Result<Vec<_>, _>>()?;

    let toy = TrainConfig::toy();
    let augment = match std::env::var("AUGMENT") {
        Ok(flags) => AugmentFlags::parse(&flags)?,
        Err(_) => toy.augment,
    };
    let tc = TrainConfig {
        epochs,
        batch_size: env_or("BATCH", toy.batch_size),
        lr0: env_or("LR", toy.lr0),
        augment,
        ..toy
    };
    let mut w = WeightSet::<f32>::init(&cfg, 0)?;
    println!("{}\tval_epe", EpochStats::LOG_HEADER);
    train(&data, &mut w, &cfg, &tc, &LossConfig::default(), |s, w| {
        let (mut err, mut n) = (0.0, 0usize);
        for v in &val {
            let out = forward(&v.pair, w, &cfg).expect("forward");
            for ((p, g), &m) in out
                .d_hr
                .data()
                .iter()
                .zip(v.gt_disparity.data())
                .zip(v.valid_mask.data())
            {
                if m {
                    err += (p - g).abs() as f64;
                    n += 1;
                }
            }
        }
        println!("{}\t{:.4}", s.log_line(), err / n as f64);
    })?;

    let mut abs: Vec<f32> = Vec::new();
    for seed in 0..10 {
        let z = synth_pair(&SynthScene::plane(20_000 + seed, 64, 64, cfg.ndisp, 0))?;
        let out = forward(&z.pair, &w, &cfg)?;
        abs.extend(out.d_hr.data().iter().map(|d| d.abs()));
    }
    abs.sort_by(f32::total_cmp);
    println!("zero-disparity median |d| = {:.4}", abs[abs.len() / 2]);
    if let Some(path) = raw.get(3) {
        w.save(path)?;
    }
    Ok(())
}
