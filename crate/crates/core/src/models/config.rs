use serde::{Deserialize, Serialize};

use crate::error::{HclError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Side of the square input image, in pixels.
    pub input_size: usize,
    /// Channels of C2..C5.
    pub stage_channels: [usize; 4],
    pub blocks_per_stage: [usize; 4],
    pub group_norm_groups: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            input_size: 64,
            stage_channels: [16, 32, 64, 128],
            blocks_per_stage: [1, 1, 1, 1],
            group_norm_groups: 4,
        }
    }
}

impl BackboneConfig {
    /// Spatial side of C2..C5 (input / 4, 8, 16, 32).
    pub fn stage_resolutions(&self) -> [usize; 4] {
        let s = self.input_size;
        [s / 4, s / 8, s / 16, s / 32]
    }
}

/// How the spatial head brings P2..P5 to the final `R×R` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialFusion {
    /// Paths finer than `R` are average-pooled straight to `R×R` before the sum.
    #[default]
    Pooled,
    /// Every path is upsampled to the P2 grid, summed, then pooled to `R×R`.
    Vanilla,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub d_sem: usize,
    pub hidden_sem: usize,
    pub fpn_channels: usize,
    /// Side `R` of the spatial map; the spatial embedding has `R²` entries.
    pub spatial_res: usize,
    pub fusion: SpatialFusion,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            d_sem: 64,
            hidden_sem: 128,
            fpn_channels: 16,
            spatial_res: 8,
            fusion: SpatialFusion::Pooled,
        }
    }
}

impl HeadConfig {
    pub fn d_spa(&self) -> usize {
        self.spatial_res * self.spatial_res
    }

    pub fn concat_dim(&self) -> usize {
        self.d_sem + self.d_spa()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub head: HeadConfig,
}

fn cfg_err<T>(msg: String) -> Result<T> {
    Err(HclError::Config(msg))
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.backbone;
        let h = &self.head;
        if b.input_size == 0 || b.input_size % 32 != 0 {
            return cfg_err(format!(
                "model.input_size must be a positive multiple of 32, got {}",
                b.input_size
            ));
        }
        let groups = b.group_norm_groups;
        if groups == 0 {
            return cfg_err("model.gn_groups must be positive".into());
        }
        for (i, &c) in b.stage_channels.iter().enumerate() {
            if c == 0 || c % groups != 0 {
                return cfg_err(format!(
                    "stage C{} has {c} channels, not divisible into {groups} groups",
                    i + 2
                ));
            }
        }
        if b.blocks_per_stage.contains(&0) {
            return cfg_err("model.blocks_per_stage entries must be ≥ 1".into());
        }
        if h.d_sem == 0 || h.hidden_sem == 0 || h.fpn_channels == 0 {
            return cfg_err("head widths must be positive".into());
        }
        let r = h.spatial_res;
        if r == 0 {
            return cfg_err("model.spatial_res must be positive".into());
        }
        for res in b.stage_resolutions() {
            let ok = if res >= r {
                res % r == 0
            } else {
                r % res == 0 && (r / res).is_power_of_two()
            };
            if !ok {
                return cfg_err(format!(
                    "stage resolution {res} cannot be resampled to spatial_res {r}"
                ));
            }
        }
        Ok(())
    }
}
