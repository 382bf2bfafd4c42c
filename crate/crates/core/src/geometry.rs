//! Disparity/depth conversion, point clouds and voxelisation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::real::Real;
use crate::tensor::Tensor;

pub const DEFAULT_VOXEL_SIZE: f64 = 0.02;

/// Rectified pinhole stereo rig.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Metres.
    pub baseline: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraRig {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, baseline: f64, width: usize, height: usize) -> Result<Self> {
        let rig = Self {
            fx,
            fy,
            cx,
            cy,
            baseline,
            width,
            height,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.baseline > 0.0) {
            return Err(Error::invalid("fx, fy and baseline must be > 0"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::invalid(format!(
                "principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Square-pixel rig from the horizontal field of view:
    /// `fx = (W/2) / tan(hfov/2)`, `fy = fx`, principal point at the centre.
    pub fn from_hfov(width: usize, height: usize, hfov_deg: f64, baseline: f64) -> Result<Self> {
        let fx = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        Self::new(fx, fx, width as f64 / 2.0, height as f64 / 2.0, baseline, width, height)
    }

    /// 2560 x 2048 px, 100 degree horizontal field of view, 10 cm baseline.
    pub fn reference() -> Self {
        Self::from_hfov(2560, 2048, 100.0, 0.1).expect("valid constants")
    }

    /// `fx * baseline`, in px * m.
    pub fn focal_baseline(&self) -> f64 {
        self.fx * self.baseline
    }
}

/// `Z = fx * b / d`; `None` for non-positive or non-finite disparity.
pub fn disparity_to_depth(d: f64, rig: &CameraRig) -> Option<f64> {
    (d.is_finite() && d > 0.0).then(|| rig.focal_baseline() / d)
}

/// `d = fx * b / Z`; `None` for non-positive or non-finite depth.
pub fn depth_to_disparity(z: f64, rig: &CameraRig) -> Option<f64> {
    (z.is_finite() && z > 0.0).then(|| rig.focal_baseline() / z)
}

/// First-order depth error `Z^2 * delta_d / (fx * b)`.
pub fn expected_depth_error(z: f64, delta_d: f64, rig: &CameraRig) -> f64 {
    z * z * delta_d / rig.focal_baseline()
}

/// Disparity error that produces `depth_error` at depth `z`.
pub fn disparity_tolerance(z: f64, depth_error: f64, rig: &CameraRig) -> f64 {
    depth_error * rig.focal_baseline() / (z * z)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<[f32; 3]>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_map<T: Real>(map: &Tensor<T>, valid: Option<&Mask>, color: Option<&Tensor<T>>) -> Result<(usize, usize)> {
    if map.rank() != 2 {
        return Err(Error::shape(format!("expected a [H,W] map, got {:?}", map.shape())));
    }
    let (h, w) = (map.shape()[0], map.shape()[1]);
    if valid.is_some_and(|m| (m.height(), m.width()) != (h, w)) {
        return Err(Error::shape("mask does not match the map"));
    }
    if color.is_some_and(|c| c.shape() != [3, h, w]) {
        return Err(Error::shape("colour image must be [3,H,W] matching the map"));
    }
    Ok((h, w))
}

fn to_u8<T: Real>(v: T) -> u8 {
    (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Back-projects every valid pixel with finite positive depth:
/// `X = (x - cx) Z / fx`, `Y = (y - cy) Z / fy`.
pub fn depth_to_points<T: Real>(
    depth: &Tensor<T>,
    valid: Option<&Mask>,
    rig: &CameraRig,
    color: Option<&Tensor<T>>,
) -> Result<PointCloud> {
    rig.validate()?;
    let (h, w) = check_map(depth, valid, color)?;
    let mut cloud = PointCloud {
        points: Vec::new(),
        colors: color.map(|_| Vec::new()),
    };
    for y in 0..h {
        for x in 0..w {
            if valid.is_some_and(|m| !m.get(y, x)) {
                continue;
            }
            let z = depth.data()[y * w + x].as_f64();
            if !(z.is_finite() && z > 0.0) {
                continue;
            }
            let px = (x as f64 - rig.cx) * z / rig.fx;
            let py = (y as f64 - rig.cy) * z / rig.fy;
            cloud.points.push([px as f32, py as f32, z as f32]);
            if let (Some(c), Some(out)) = (color, cloud.colors.as_mut()) {
                let at = |ch: usize| to_u8(c.data()[(ch * h + y) * w + x]);
                out.push([at(0), at(1), at(2)]);
            }
        }
    }
    Ok(cloud)
}

/// Converts a disparity map to depth and back-projects it.
pub fn disparity_to_points<T: Real>(
    disparity: &Tensor<T>,
    valid: Option<&Mask>,
    rig: &CameraRig,
    color: Option<&Tensor<T>>,
) -> Result<PointCloud> {
    let depth = disparity.map(|d| T::of(disparity_to_depth(d.as_f64(), rig).unwrap_or(f64::NAN)));
    depth_to_points(&depth, valid, rig, color)
}

/// Occupied voxel indices `floor(coord / voxel_size)`.
pub fn voxelize(cloud: &PointCloud, voxel_size: f64) -> Result<BTreeSet<[i64; 3]>> {
    if !(voxel_size > 0.0) {
        return Err(Error::invalid(format!("voxel size must be > 0, got {voxel_size}")));
    }
    Ok(cloud
        .points
        .iter()
        .map(|p| p.map(|c| (c as f64 / voxel_size).floor() as i64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_rig_focal_length() {
        let r = CameraRig::reference();
        assert!((r.fx - 1074.0).abs() < 0.1, "{}", r.fx);
        assert_eq!(r.fy, r.fx);
        assert_eq!((r.cx, r.cy), (1280.0, 1024.0));
    }

    #[test]
    fn invalid_disparity_emits_no_depth() {
        let r = CameraRig::reference();
        assert_eq!(disparity_to_depth(0.0, &r), None);
        assert_eq!(disparity_to_depth(-1.0, &r), None);
        assert_eq!(disparity_to_depth(f64::NAN, &r), None);
    }
}
