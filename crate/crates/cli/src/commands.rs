use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use serde_json::json;
use stereo_core::geometry::{disparity_to_points, voxelize};
use stereo_core::metrics::compute_metrics;
use stereo_core::model::forward;
use stereo_core::pfm::{load_pfm, save_pfm};
use stereo_core::pipeline::{infer as run_infer, load_dataset, load_image, save_sample, InferOptions};
use stereo_core::ply::{save_ply, PlyFormat};
use stereo_core::synth::{synth_pair, SynthScene};
use stereo_core::train::{train as run_train, AugmentFlags, EpochStats, TrainConfig};
use stereo_core::{CameraRig, LabeledSample, LossConfig, Mask, ModelConfig, PointCloud, StereoPair, Tensor, WeightSet};

use crate::{CloudArgs, EvalArgs, InferArgs, SynthArgs, TrainArgs};

/// Field of view assumed when `--fx` is not given.
const DEFAULT_HFOV_DEG: f64 = 100.0;

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}{ext}"))
}

pub fn infer(a: &InferArgs) -> Result<()> {
    let start = Instant::now();
    let weights = WeightSet::<f32>::load(&a.weights).context("loading weights")?;
    let cfg = ModelConfig::from_weight_shapes(a.ndisp, a.cv_scale, |n| weights.get(n).map(|t| t.shape().to_vec()))
        .with_context(|| format!("{} does not match --ndisp/--cv-scale", a.weights.display()))?;
    let left = load_image(&a.left)?;
    let right = load_image(&a.right)?;
    let pair = StereoPair::new(left, right).context("left and right images differ in size")?;
    let opts = InferOptions {
        conf_threshold: a.conf_thresh,
        min_region: a.min_region,
    };
    let out = run_infer(&pair, &weights, &cfg, &opts)?;
    let (h, w) = (pair.height(), pair.width());

    save_pfm(&a.out_disp, &out.disparity)?;
    if let Some(p) = &a.out_conf {
        save_pfm(p, &out.confidence)?;
    }
    if a.filtered {
        save_pfm(sibling(&a.out_disp, "_filtered"), &out.filtered.masked())?;
    }
    let mut points = None;
    if let Some(p) = &a.ply {
        let rig = match a.fx {
            Some(fx) => CameraRig::new(fx, fx, w as f64 / 2.0, h as f64 / 2.0, a.baseline, w, h)?,
            None => CameraRig::from_hfov(w, h, DEFAULT_HFOV_DEG, a.baseline)?,
        };
        let valid = a.filtered.then_some(&out.filtered.valid);
        let cloud = disparity_to_points(&out.disparity, valid, &rig, Some(&pair.left))?;
        save_ply(p, &cloud, PlyFormat::BinaryLittleEndian)?;
        points = Some(cloud.len());
    }
    let summary = json!({
        "width": w,
        "height": h,
        "ndisp": cfg.ndisp,
        "cv_scale": cfg.cv_scale,
        "padding": out.padding,
        "valid_fraction": out.filtered.valid_fraction(),
        "points": points,
        "wall_seconds": start.elapsed().as_secs_f64(),
    });
    println!("{summary}");
    Ok(())
}

fn validation_epe(val: &[LabeledSample<f32>], weights: &WeightSet<f32>, cfg: &ModelConfig) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for s in val {
        let out = forward(&s.pair, weights, cfg)?;
        for ((p, g), &ok) in out
            .d_hr
            .data()
            .iter()
            .zip(s.gt_disparity.data())
            .zip(s.valid_mask.data())
        {
            if ok {
                sum += (p - g).abs() as f64;
                n += 1;
            }
        }
    }
    ensure!(n > 0, "validation set has no valid pixels");
    Ok(sum / n as f64)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let model = ModelConfig {
        ndisp: a.ndisp,
        cv_scale: a.cv_scale,
        feat_channels: a.feat_channels,
        ..ModelConfig::toy()
    };
    model.validate()?;
    let tc = TrainConfig {
        lr0: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        crop_h: a.crop.height,
        crop_w: a.crop.width,
        seed: a.seed,
        augment: AugmentFlags::parse(&a.augment)?,
        ..TrainConfig::default()
    };
    tc.validate(model.cv_scale)?;
    let data = load_dataset(&a.data)?;
    let val = a.val.as_ref().map(load_dataset).transpose()?;
    log::info!("{} training samples, model {model:?}", data.len());

    let mut weights = WeightSet::<f32>::init(&model, a.seed)?;
    let mut failure = None;
    println!(
        "{}{}",
        EpochStats::LOG_HEADER,
        if val.is_some() { "\tval_epe" } else { "" }
    );
    run_train(
        &data,
        &mut weights,
        &model,
        &tc,
        &LossConfig::default(),
        |s, w| match &val {
            Some(v) => match validation_epe(v, w, &model) {
                Ok(epe) => println!("{}\t{epe:.6}", s.log_line()),
                Err(e) => {
                    println!("{}\tNaN", s.log_line());
                    failure.get_or_insert(e);
                }
            },
            None => println!("{}", s.log_line()),
        },
    )?;
    if let Some(e) = failure {
        return Err(e.context("validation failed"));
    }
    weights.save(&a.out_weights)?;
    log::info!("wrote {}", a.out_weights.display());
    Ok(())
}

/// Every PFM under `root` keyed by relative path without extension, or the
/// single file itself under the empty key.
fn collect_maps(root: &Path, exts: &[&str]) -> Result<Vec<(String, PathBuf)>> {
    let meta = std::fs::metadata(root).with_context(|| root.display().to_string())?;
    if !meta.is_dir() {
        return Ok(vec![(String::new(), root.to_owned())]);
    }
    let mut out = Vec::new();
    let mut stack = vec![root.to_owned()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).with_context(|| dir.display().to_string())? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p
                .extension()
                .is_some_and(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
            {
                let key = p.strip_prefix(root)?.with_extension("").to_string_lossy().into_owned();
                out.push((key, p));
            }
        }
    }
    out.sort();
    ensure!(!out.is_empty(), "{}: no maps found", root.display());
    Ok(out)
}

fn load_mask(path: &Path) -> Result<Mask> {
    let is_pfm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    if is_pfm {
        let m = load_pfm(path)?;
        let (h, w) = (m.shape()[0], m.shape()[1]);
        Ok(Mask::new(
            h,
            w,
            m.data().iter().map(|v| v.is_finite() && *v != 0.0).collect(),
        )?)
    } else {
        let img = load_image(path)?;
        let (h, w) = (img.shape()[1], img.shape()[2]);
        let plane = h * w;
        Ok(Mask::from_fn(h, w, |y, x| {
            (0..3).any(|c| img.data()[c * plane + y * w + x] > 0.0)
        }))
    }
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let preds = collect_maps(&a.pred, &["pfm"])?;
    let gts = collect_maps(&a.gt, &["pfm"])?;
    let masks = a.mask.as_ref().map(|m| collect_maps(m, &["pfm", "png"])).transpose()?;
    let single = preds.len() == 1 && gts.len() == 1 && preds[0].0.is_empty();

    let (mut pred_all, mut gt_all, mut mask_all) = (Vec::new(), Vec::new(), Vec::new());
    for (key, pred_path) in &preds {
        let gt_path = if single {
            &gts[0].1
        } else {
            &gts.iter()
                .find(|(k, _)| k == key)
                .with_context(|| format!("no ground truth for `{key}` under {}", a.gt.display()))?
                .1
        };
        let pred = load_pfm(pred_path)?;
        let gt = load_pfm(gt_path)?;
        ensure!(
            pred.shape() == gt.shape(),
            "{} is {:?} but {} is {:?}",
            pred_path.display(),
            pred.shape(),
            gt_path.display(),
            gt.shape()
        );
        let mask = match &masks {
            None => Mask::filled(gt.shape()[0], gt.shape()[1], true),
            Some(ms) => {
                let path = match ms.as_slice() {
                    [(k, p)] if k.is_empty() => p,
                    _ => {
                        &ms.iter()
                            .find(|(k, _)| k == key)
                            .with_context(|| format!("no mask for `{key}`"))?
                            .1
                    }
                };
                let m = load_mask(path)?;
                ensure!(
                    [m.height(), m.width()] == gt.shape(),
                    "mask {} does not match {}",
                    path.display(),
                    gt_path.display()
                );
                m
            }
        };
        pred_all.extend_from_slice(pred.data());
        gt_all.extend_from_slice(gt.data());
        mask_all.extend_from_slice(mask.data());
    }
    let n = pred_all.len();
    let report = compute_metrics(
        &Tensor::new(&[1, n], pred_all)?,
        &Tensor::new(&[1, n], gt_all)?,
        Some(&Mask::new(1, n, mask_all)?),
        &a.thresholds,
    )?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out).with_context(|| a.out.display().to_string())?;
    for i in 0..a.count {
        let scene = SynthScene::random(a.seed + i as u64, a.size.width, a.size.height, a.ndisp);
        let sample = synth_pair(&scene)?;
        save_sample(&a.out, i, &sample)?;
    }
    println!(
        "{}",
        json!({ "count": a.count, "width": a.size.width, "height": a.size.height, "ndisp": a.ndisp, "out": a.out })
    );
    Ok(())
}

pub fn cloud(a: &CloudArgs) -> Result<()> {
    let disp = load_pfm(&a.disp)?;
    let (h, w) = (disp.shape()[0], disp.shape()[1]);
    let rig = CameraRig::new(a.fx, a.fy, a.cx, a.cy, a.baseline, w, h)?;
    let cloud = disparity_to_points(&disp, None, &rig, None)?;
    if cloud.is_empty() {
        bail!("{} has no finite positive disparities", a.disp.display());
    }
    save_ply(&a.out, &cloud, PlyFormat::BinaryLittleEndian)?;
    let voxels = voxelize(&cloud, a.voxel)?;
    if let Some(p) = &a.voxel_out {
        let centres = PointCloud {
            points: voxels
                .iter()
                .map(|k| k.map(|c| ((c as f64 + 0.5) * a.voxel) as f32))
                .collect(),
            colors: None,
        };
        save_ply(p, &centres, PlyFormat::BinaryLittleEndian)?;
    }
    println!(
        "{}",
        json!({ "points": cloud.len(), "voxels": voxels.len(), "voxel_size": a.voxel })
    );
    Ok(())
}
