use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dilation applied to residual block `i` of every dilated stack.
pub const DILATION_CYCLE: [usize; 4] = [1, 2, 5, 9];

pub fn block_dilation(i: usize) -> usize {
    DILATION_CYCLE[i % DILATION_CYCLE.len()]
}

/// Sizing of the stereo network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Maximum disparity at full resolution.
    pub ndisp: usize,
    /// Cost-volume downsample factor, 4 or 8.
    pub cv_scale: usize,
    /// Channels of the matching features fed to the cost volume.
    pub feat_channels: usize,
    pub enc_channels: usize,
    pub enc_blocks: usize,
    /// Output channels of each 3-D aggregation conv, in order.
    pub agg_3d_channels: Vec<usize>,
    pub agg_2d_blocks: usize,
    pub refine_channels: usize,
    pub refine_blocks: usize,
}

impl Default for ModelConfig {
    /// Deployment sizing: 384 disparities, downsample 8, 16 feature channels.
    fn default() -> Self {
        Self {
            ndisp: 384,
            cv_scale: 8,
            feat_channels: 16,
            enc_channels: 32,
            enc_blocks: 4,
            agg_3d_channels: vec![8, 4],
            agg_2d_blocks: 4,
            refine_channels: 16,
            refine_blocks: 2,
        }
    }
}

impl ModelConfig {
    /// Desk-scale sizing used for the synthetic end-to-end runs.
    pub fn toy() -> Self {
        Self {
            ndisp: 16,
            cv_scale: 4,
            feat_channels: 8,
            enc_channels: 16,
            enc_blocks: 2,
            agg_3d_channels: vec![8, 4],
            agg_2d_blocks: 2,
            refine_channels: 8,
            refine_blocks: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.cv_scale, 4 | 8) {
            return Err(Error::invalid(format!(
                "cost-volume scale must be 4 or 8, got {}",
                self.cv_scale
            )));
        }
        if self.ndisp == 0 || !self.ndisp.is_multiple_of(self.cv_scale) {
            return Err(Error::invalid(format!(
                "ndisp {} must be a positive multiple of the cost-volume scale {}",
                self.ndisp, self.cv_scale
            )));
        }
        if self.ndisp / self.cv_scale < 2 {
            return Err(Error::invalid("need at least two low-resolution disparities"));
        }
        if self.feat_channels == 0
            || self.enc_channels == 0
            || self.refine_channels == 0
            || self.agg_3d_channels.contains(&0)
        {
            return Err(Error::invalid("channel counts must be >= 1"));
        }
        Ok(())
    }

    /// Number of disparity candidates at cost-volume resolution.
    pub fn ndisp_lr(&self) -> usize {
        self.ndisp / self.cv_scale
    }

    pub(crate) fn down_stages(&self) -> usize {
        self.cv_scale.trailing_zeros() as usize
    }

    pub(crate) fn agg_width(&self) -> usize {
        self.agg_3d_channels.last().copied().unwrap_or(self.feat_channels) * self.ndisp_lr()
    }

    /// Every weight tensor the network expects, as `(name, shape)`.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut conv = |name: String, shape: Vec<usize>| {
            out.push((format!("{name}.bias"), vec![shape[0]]));
            out.push((format!("{name}.weight"), shape));
        };
        let e = self.enc_channels;
        conv("enc.stem".into(), vec![e, 3, 3, 3]);
        for i in 1..self.down_stages() {
            conv(format!("enc.down{i}"), vec![e, e, 3, 3]);
        }
        for i in 0..self.enc_blocks {
            conv(format!("enc.res{i}.a"), vec![e, e, 3, 3]);
            conv(format!("enc.res{i}.b"), vec![e, e, 3, 3]);
        }
        conv("enc.head".into(), vec![self.feat_channels, e, 1, 1]);

        let mut c = self.feat_channels;
        for (i, &n) in self.agg_3d_channels.iter().enumerate() {
            conv(format!("agg.c3d{i}"), vec![n, c, 3, 3, 3]);
            c = n;
        }
        let a = self.agg_width();
        for i in 0..self.agg_2d_blocks {
            conv(format!("agg.res{i}.a"), vec![a, a, 3, 3]);
            conv(format!("agg.res{i}.b"), vec![a, a, 3, 3]);
        }
        conv("agg.out".into(), vec![self.ndisp_lr(), a, 1, 1]);

        let r = self.refine_channels;
        conv("ref.in".into(), vec![r, 5, 3, 3]);
        for i in 0..self.refine_blocks {
            conv(format!("ref.res{i}.a"), vec![r, r, 3, 3]);
            conv(format!("ref.res{i}.b"), vec![r, r, 3, 3]);
        }
        conv("ref.out".into(), vec![1, r, 3, 3]);
        out
    }

    /// Recovers the sizing of a weight set given its disparity range and
    /// cost-volume scale, which the weights alone do not pin down.
    pub fn from_weight_shapes(
        ndisp: usize,
        cv_scale: usize,
        shape_of: impl Fn(&str) -> Option<Vec<usize>>,
    ) -> Result<Self> {
        let need = |name: &str| shape_of(name).ok_or_else(|| Error::format(format!("weights lack tensor `{name}`")));
        let count = |prefix: &str| {
            (0..)
                .take_while(|i| shape_of(&format!("{prefix}{i}.a.weight")).is_some())
                .count()
        };
        let agg_3d_channels = (0..)
            .map_while(|i| shape_of(&format!("agg.c3d{i}.weight")).map(|s| s[0]))
            .collect();
        let cfg = Self {
            ndisp,
            cv_scale,
            feat_channels: need("enc.head.weight")?[0],
            enc_channels: need("enc.stem.weight")?[0],
            enc_blocks: count("enc.res"),
            agg_3d_channels,
            agg_2d_blocks: count("agg.res"),
            refine_channels: need("ref.in.weight")?[0],
            refine_blocks: count("ref.res"),
        };
        cfg.validate()?;
        for (name, shape) in cfg.layout() {
            let got = need(&name)?;
            if got != shape {
                return Err(Error::shape(format!(
                    "weight `{name}` has shape {got:?}, expected {shape:?} for ndisp={ndisp}, cv_scale={cv_scale}"
                )));
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matches_deployment_sizing() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.ndisp_lr(), 48);
        assert_eq!(c.agg_width(), 192);
        assert_eq!(c.down_stages(), 3);
    }

    #[test]
    fn rejects_bad_scale_and_indivisible_ndisp() {
        let mut c = ModelConfig::toy();
        c.cv_scale = 2;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy();
        c.ndisp = 18;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy();
        c.feat_channels = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn layout_names_are_unique() {
        let l = ModelConfig::default().layout();
        let mut names: Vec<_> = l.iter().map(|(n, _)| n.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), l.len());
    }

    #[test]
    fn recovers_config_from_shapes() {
        for cfg in [ModelConfig::toy(), ModelConfig::default()] {
            let layout: std::collections::HashMap<_, _> = cfg.layout().into_iter().collect();
            let got = ModelConfig::from_weight_shapes(cfg.ndisp, cfg.cv_scale, |n| layout.get(n).cloned()).unwrap();
            assert_eq!(got, cfg);
        }
        let layout: std::collections::HashMap<_, _> = ModelConfig::toy().layout().into_iter().collect();
        // 24 disparities at scale 4 gives 6 score channels, not 4
        assert!(ModelConfig::from_weight_shapes(24, 4, |n| layout.get(n).cloned()).is_err());
    }
}
