//! Flat `key = value` run configuration. Every field has a dotted key; the
//! same keys are accepted by `--set key=value` overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{AugConfig, JitterStrengths};
use crate::data::{DataSource, DatasetSpec};
use crate::error::{HclError, Result};
use crate::models::{ModelConfig, SpatialFusion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Synthetic,
    Corpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub source: SourceKind,
    /// Seed of the synthetic generator, independent of the training seed.
    pub seed: u64,
    pub n: usize,
    pub size: usize,
    pub path: Option<PathBuf>,
    pub holdout: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: SourceKind::Synthetic,
            seed: 0,
            n: 2048,
            size: 64,
            path: None,
            holdout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub gallery: usize,
    pub bins: usize,
    pub dims: Vec<usize>,
    pub renormalize: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            gallery: 1024,
            bins: 10,
            dims: vec![8, 16, 32],
            renormalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub lr0: f64,
    pub sgd_momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub queue_capacity: usize,
    pub temperature: f64,
    pub key_momentum: f64,
    pub area_range: (f64, f64),
    pub aspect_range: (f64, f64),
    pub flip_enabled: bool,
    pub jitter: JitterStrengths,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let aug = AugConfig::default();
        TrainConfig {
            seed: 0,
            lr0: 0.05,
            sgd_momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 32,
            stage1_epochs: 20,
            stage2_epochs: 20,
            queue_capacity: 1024,
            temperature: 0.2,
            key_momentum: 0.999,
            area_range: aug.area_range,
            aspect_range: aug.aspect_range,
            flip_enabled: aug.flip_enabled,
            jitter: aug.jitter,
            model: ModelConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Every accepted key, in rendering order.
pub const CONFIG_KEYS: &[&str] = &[
    "seed",
    "lr0",
    "sgd_momentum",
    "weight_decay",
    "batch_size",
    "stage1_epochs",
    "stage2_epochs",
    "queue_capacity",
    "temperature",
    "key_momentum",
    "aug.area_min",
    "aug.area_max",
    "aug.aspect_min",
    "aug.aspect_max",
    "aug.flip",
    "aug.brightness",
    "aug.contrast",
    "aug.saturation",
    "model.input_size",
    "model.channels",
    "model.blocks_per_stage",
    "model.gn_groups",
    "model.d_sem",
    "model.hidden_sem",
    "model.fpn_channels",
    "model.spatial_res",
    "model.fusion",
    "data.source",
    "data.seed",
    "data.n",
    "data.size",
    "data.path",
    "data.holdout",
    "eval.gallery",
    "eval.bins",
    "eval.dims",
    "eval.renormalize",
];

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(HclError::Config(msg.into()))
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .or_else(|_| cfg_err(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => cfg_err(format!("`{key}`: expected a boolean, got `{value}`")),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|s| parse::<usize>(key, s.trim()))
        .collect()
}

fn parse_four(key: &str, value: &str) -> Result<[usize; 4]> {
    let v = parse_list(key, value)?;
    v.try_into()
        .or_else(|v: Vec<usize>| cfg_err(format!("`{key}`: expected 4 values, got {}", v.len())))
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "lr0" => self.lr0 = parse(key, v)?,
            "sgd_momentum" => self.sgd_momentum = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "stage1_epochs" => self.stage1_epochs = parse(key, v)?,
            "stage2_epochs" => self.stage2_epochs = parse(key, v)?,
            "queue_capacity" => self.queue_capacity = parse(key, v)?,
            "temperature" => self.temperature = parse(key, v)?,
            "key_momentum" => self.key_momentum = parse(key, v)?,
            "aug.area_min" => self.area_range.0 = parse(key, v)?,
            "aug.area_max" => self.area_range.1 = parse(key, v)?,
            "aug.aspect_min" => self.aspect_range.0 = parse(key, v)?,
            "aug.aspect_max" => self.aspect_range.1 = parse(key, v)?,
            "aug.flip" => self.flip_enabled = parse_bool(key, v)?,
            "aug.brightness" => self.jitter.brightness = parse(key, v)?,
            "aug.contrast" => self.jitter.contrast = parse(key, v)?,
            "aug.saturation" => self.jitter.saturation = parse(key, v)?,
            "model.input_size" => self.model.backbone.input_size = parse(key, v)?,
            "model.channels" => self.model.backbone.stage_channels = parse_four(key, v)?,
            "model.blocks_per_stage" => self.model.backbone.blocks_per_stage = parse_four(key, v)?,
            "model.gn_groups" => self.model.backbone.group_norm_groups = parse(key, v)?,
            "model.d_sem" => self.model.head.d_sem = parse(key, v)?,
            "model.hidden_sem" => self.model.head.hidden_sem = parse(key, v)?,
            "model.fpn_channels" => self.model.head.fpn_channels = parse(key, v)?,
            "model.spatial_res" => self.model.head.spatial_res = parse(key, v)?,
            "model.fusion" => {
                self.model.head.fusion = match v {
                    "pooled" => SpatialFusion::Pooled,
                    "vanilla" => SpatialFusion::Vanilla,
                    _ => return cfg_err(format!("`{key}`: expected pooled or vanilla, got `{v}`")),
                }
            }
            "data.source" => {
                self.data.source = match v {
                    "synthetic" => SourceKind::Synthetic,
                    "corpus" => SourceKind::Corpus,
                    _ => return cfg_err(format!("`{key}`: expected synthetic or corpus, got `{v}`")),
                }
            }
            "data.seed" => self.data.seed = parse(key, v)?,
            "data.n" => self.data.n = parse(key, v)?,
            "data.size" => self.data.size = parse(key, v)?,
            "data.path" => self.data.path = (!v.is_empty()).then(|| PathBuf::from(v)),
            "data.holdout" => self.data.holdout = parse(key, v)?,
            "eval.gallery" => self.eval.gallery = parse(key, v)?,
            "eval.bins" => self.eval.bins = parse(key, v)?,
            "eval.dims" => self.eval.dims = parse_list(key, v)?,
            "eval.renormalize" => self.eval.renormalize = parse_bool(key, v)?,
            _ => return cfg_err(format!("unknown config key `{key}`")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let b = &self.model.backbone;
        let h = &self.model.head;
        Some(match key {
            "seed" => self.seed.to_string(),
            "lr0" => self.lr0.to_string(),
            "sgd_momentum" => self.sgd_momentum.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "stage1_epochs" => self.stage1_epochs.to_string(),
            "stage2_epochs" => self.stage2_epochs.to_string(),
            "queue_capacity" => self.queue_capacity.to_string(),
            "temperature" => self.temperature.to_string(),
            "key_momentum" => self.key_momentum.to_string(),
            "aug.area_min" => self.area_range.0.to_string(),
            "aug.area_max" => self.area_range.1.to_string(),
            "aug.aspect_min" => self.aspect_range.0.to_string(),
            "aug.aspect_max" => self.aspect_range.1.to_string(),
            "aug.flip" => self.flip_enabled.to_string(),
            "aug.brightness" => self.jitter.brightness.to_string(),
            "aug.contrast" => self.jitter.contrast.to_string(),
            "aug.saturation" => self.jitter.saturation.to_string(),
            "model.input_size" => b.input_size.to_string(),
            "model.channels" => join(&b.stage_channels),
            "model.blocks_per_stage" => join(&b.blocks_per_stage),
            "model.gn_groups" => b.group_norm_groups.to_string(),
            "model.d_sem" => h.d_sem.to_string(),
            "model.hidden_sem" => h.hidden_sem.to_string(),
            "model.fpn_channels" => h.fpn_channels.to_string(),
            "model.spatial_res" => h.spatial_res.to_string(),
            "model.fusion" => match h.fusion {
                SpatialFusion::Pooled => "pooled".into(),
                SpatialFusion::Vanilla => "vanilla".into(),
            },
            "data.source" => match self.data.source {
                SourceKind::Synthetic => "synthetic".into(),
                SourceKind::Corpus => "corpus".into(),
            },
            "data.seed" => self.data.seed.to_string(),
            "data.n" => self.data.n.to_string(),
            "data.size" => self.data.size.to_string(),
            "data.path" => self
                .data
                .path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "data.holdout" => self.data.holdout.to_string(),
            "eval.gallery" => self.eval.gallery.to_string(),
            "eval.bins" => self.eval.bins.to_string(),
            "eval.dims" => join(&self.eval.dims),
            "eval.renormalize" => self.eval.renormalize.to_string(),
            _ => return None,
        })
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let Some((k, v)) = o.split_once('=') else {
                return cfg_err(format!("override `{o}` is not of the form key=value"));
            };
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Parses config text on top of the defaults. Blank lines and `#`
    /// comments are skipped; repeated keys are rejected.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return cfg_err(format!("line {}: expected `key = value`, got `{line}`", i + 1));
            };
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return cfg_err(format!("line {}: key `{k}` given twice", i + 1));
            }
            cfg.set(k, v)
                .map_err(|e| HclError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn aug_config(&self) -> AugConfig {
        AugConfig {
            area_range: self.area_range,
            aspect_range: self.aspect_range,
            flip_enabled: self.flip_enabled,
            jitter: self.jitter,
            out_size: self.model.backbone.input_size,
        }
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let source = match self.data.source {
            SourceKind::Synthetic => DataSource::Synthetic {
                seed: self.data.seed,
                n: self.data.n,
                size: self.data.size,
            },
            SourceKind::Corpus => match &self.data.path {
                Some(path) => DataSource::Corpus {
                    path: path.clone(),
                    size: self.data.size,
                },
                None => return cfg_err("data.source = corpus needs data.path"),
            },
        };
        Ok(DatasetSpec {
            source,
            holdout: self.data.holdout,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return cfg_err(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.sgd_momentum) {
            return cfg_err(format!("sgd_momentum must lie in [0, 1), got {}", self.sgd_momentum));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return cfg_err(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size < 2 {
            return cfg_err(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if self.queue_capacity < 1 {
            return cfg_err("queue_capacity must be at least 1");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return cfg_err(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(0.0..=1.0).contains(&self.key_momentum) {
            return cfg_err(format!("key_momentum must lie in [0, 1], got {}", self.key_momentum));
        }
        if self.eval.gallery < 1 || self.eval.bins < 2 {
            return cfg_err("eval.gallery must be ≥ 1 and eval.bins ≥ 2");
        }
        self.model.validate()?;
        self.aug_config()
            .validate()
            .map_err(|e| HclError::Config(e.to_string()))?;
        self.dataset_spec()?
            .validate()
            .map_err(|e| HclError::Config(e.to_string()))?;
        Ok(())
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for key in CONFIG_KEYS {
            writeln!(f, "{key} = {}", self.get(key).expect("listed key"))?;
        }
        Ok(())
    }
}
