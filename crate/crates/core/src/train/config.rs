use crate::error::{Error, Result};
use crate::extract::ExtractionMode;
use crate::mm::{AnchorFusion, MmVariant};
use crate::model::{AttentionKind, ModelConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Model variant, one per ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Structure only.
    #[default]
    Stru,
    /// Structure plus align-attention attribute scoring.
    Mm,
    /// Attribute scoring over type embeddings, without values.
    #[serde(rename = "mm-novalue")]
    MmNoValue,
    /// Attribute scoring with uniform weights instead of align attention.
    NoAms,
    /// Structure only, on symmetric align-subgraphs.
    Symmetric,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Self::Stru, Self::Mm, Self::MmNoValue, Self::NoAms, Self::Symmetric];

    pub fn extraction(self) -> ExtractionMode {
        match self {
            Self::Symmetric => ExtractionMode::Symmetric,
            _ => ExtractionMode::Merged,
        }
    }

    pub fn modal(self) -> Option<MmVariant> {
        match self {
            Self::Mm => Some(MmVariant::Full),
            Self::MmNoValue => Some(MmVariant::NoValue),
            Self::NoAms => Some(MmVariant::NoAttention),
            Self::Stru | Self::Symmetric => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Stru => "stru",
            Self::Mm => "mm",
            Self::MmNoValue => "mm-novalue",
            Self::NoAms => "no-ams",
            Self::Symmetric => "symmetric",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}` (expected stru, mm, mm-novalue, no-ams or symmetric)")))
    }
}

/// Training hyperparameters. Loaded from a TOML key-value file; every range
/// is checked by [`TrainConfig::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Directional queries per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub depth: usize,
    pub dim: usize,
    pub kg_dim: usize,
    pub kg_out_dim: usize,
    pub attention: AttentionKind,
    pub seed: u64,
    pub variant: Variant,
    /// Share of training seeds installed as anchors; the rest are positives.
    pub anchor_fraction: f64,
    /// Clip the global gradient norm at 5.
    pub grad_clip: bool,
    pub resplit_each_epoch: bool,
    /// Cosine threshold for modal anchors; none when absent.
    pub modal_anchor_threshold: Option<f64>,
    pub modal_anchor_fusion: AnchorFusion,
}

pub const CLIP_NORM: f64 = 5.0;

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            weight_decay: 1e-5,
            dropout: 0.0,
            batch_size: 8,
            epochs: 50,
            depth: 5,
            dim: 32,
            kg_dim: 8,
            kg_out_dim: 8,
            attention: AttentionKind::Sigmoid,
            seed: 0,
            variant: Variant::Stru,
            anchor_fraction: 0.75,
            grad_clip: true,
            resplit_each_epoch: false,
            modal_anchor_threshold: None,
            modal_anchor_fusion: AnchorFusion::VisionOnly,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1e-4..=1e-2).contains(&self.lr) {
            return bad(format!("lr {} outside [1e-4, 1e-2]", self.lr));
        }
        if !(1e-5..=1e-2).contains(&self.weight_decay) {
            return bad(format!("weight_decay {} outside [1e-5, 1e-2]", self.weight_decay));
        }
        if !(0.0..=0.3).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 0.3]", self.dropout));
        }
        if ![4, 8, 16].contains(&self.batch_size) {
            return bad(format!("batch_size {} not in {{4, 8, 16}}", self.batch_size));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.anchor_fraction > 0.0 && self.anchor_fraction < 1.0) {
            return bad(format!("anchor_fraction {} outside (0, 1)", self.anchor_fraction));
        }
        if let Some(t) = self.modal_anchor_threshold {
            if !(t > 0.0 && t <= 1.0) {
                return bad(format!("modal_anchor_threshold {t} outside (0, 1]"));
            }
        }
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            dim: self.dim,
            kg_dim: self.kg_dim,
            kg_out_dim: self.kg_out_dim,
            depth: self.depth,
            attention: self.attention,
            dropout: self.dropout,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// This config with the keys present in `text` replaced.
    pub fn overlay_toml(&self, text: &str) -> Result<Self> {
        let over: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))?;
        let mut base = toml::Table::try_from(self).expect("config serializes");
        base.extend(over);
        let cfg: Self = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
