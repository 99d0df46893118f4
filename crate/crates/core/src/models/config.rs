use serde::{Deserialize, Serialize};

use crate::data::{NUM_ATTRIBUTES, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::losses::TieKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Standard,
    Cbm,
    Xcb,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Standard, ModelKind::Cbm, ModelKind::Xcb];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Standard => "standard",
            ModelKind::Cbm => "cbm",
            ModelKind::Xcb => "xcb",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(ModelKind::Standard),
            "cbm" => Ok(ModelKind::Cbm),
            "xcb" => Ok(ModelKind::Xcb),
            _ => Err(Error::contract(format!("unknown model kind `{s}` (standard|cbm|xcb)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BottleneckActivation {
    Sigmoid,
    GumbelSigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionActivation {
    Softmax,
    Entmax15,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionNorm {
    /// Activation over tokens for each query.
    Regular,
    /// Activation over queries for each token, then per-query rescaling.
    Slot,
}

/// Architecture plus the XCB ablation switches. Defaults describe the full
/// XCB model on 64×64 Shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub resolution: usize,
    pub num_classes: usize,
    /// Bottleneck width N (forced to the attribute count for CBM).
    pub latent_dim: usize,
    pub embed_dim: usize,
    /// Real tokens plus padding.
    pub vocab_size: usize,
    pub conv_channels: Vec<usize>,
    pub bottleneck: BottleneckActivation,
    pub attention: AttentionActivation,
    pub normalization: AttentionNorm,
    pub dummies: bool,
    pub sparsity_reg: bool,
    pub tie: TieKind,
    /// Per-channel statistics subtracted/divided inside the model, so all
    /// public entry points take raw [0, 1] images.
    pub input_mean: [f64; 3],
    pub input_std: [f64; 3],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Xcb,
            resolution: 64,
            num_classes: NUM_CLASSES,
            latent_dim: 10,
            embed_dim: 50,
            vocab_size: crate::data::Vocabulary::shapes().len(),
            conv_channels: vec![8, 16, 32],
            bottleneck: BottleneckActivation::GumbelSigmoid,
            attention: AttentionActivation::Entmax15,
            normalization: AttentionNorm::Slot,
            dummies: true,
            sparsity_reg: true,
            tie: TieKind::Js,
            input_mean: [0.0; 3],
            input_std: [1.0; 3],
        }
    }
}

impl ModelConfig {
    pub fn for_kind(kind: ModelKind) -> Self {
        let mut cfg = Self { kind, ..Self::default() };
        if kind == ModelKind::Cbm {
            cfg.latent_dim = NUM_ATTRIBUTES;
        }
        cfg
    }

    /// Number of query rows, counting the dummy query when enabled.
    pub fn num_queries(&self) -> usize {
        self.latent_dim + usize::from(self.dummies)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::contract(m));
        if self.resolution < 16 {
            return bad(format!("resolution {} too small", self.resolution));
        }
        if self.latent_dim == 0 || self.num_classes < 2 {
            return bad("latent width and class count must be positive".into());
        }
        if self.kind == ModelKind::Cbm && self.latent_dim != NUM_ATTRIBUTES {
            return bad(format!("CBM bottleneck must equal the attribute count {NUM_ATTRIBUTES}"));
        }
        if self.kind == ModelKind::Xcb && (self.embed_dim == 0 || !self.embed_dim.is_multiple_of(2) || self.vocab_size < 2) {
            return bad("XCB needs an even embedding width and a vocabulary".into());
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return bad("conv channels must be non-empty and positive".into());
        }
        if self.input_std.iter().any(|s| !(*s > 0.0)) {
            return bad(format!("input std must be positive, got {:?}", self.input_std));
        }
        Ok(())
    }
}
