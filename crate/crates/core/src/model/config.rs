use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::Task;

/// Hyperparameters and ablation switches of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AsimConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub prediction_hidden_dims: Vec<usize>,
    pub use_attention: bool,
    pub use_fusion: bool,
    pub use_shortcuts: bool,
    pub train_embeddings: bool,
}

impl Default for AsimConfig {
    fn default() -> Self {
        AsimConfig {
            embed_dim: 300,
            hidden: 200,
            num_classes: 4,
            max_len: 250,
            dropout: 0.2,
            prediction_hidden_dims: vec![200],
            use_attention: true,
            use_fusion: true,
            use_shortcuts: true,
            train_embeddings: false,
        }
    }
}

impl AsimConfig {
    /// Width of the per-token representations that attention compares.
    pub fn k(&self) -> usize {
        2 * self.hidden
    }

    pub fn task(&self) -> Task {
        Task::from_num_classes(self.num_classes).unwrap_or(Task::Ku4)
    }

    pub fn validate(&self) -> Result<()> {
        if Task::from_num_classes(self.num_classes).is_none() {
            return Err(Error::Config(format!("num_classes must be 2 or 4, got {}", self.num_classes)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.hidden == 0 || self.embed_dim == 0 || self.max_len == 0 {
            return Err(Error::Config("hidden, embed_dim and max_len must be positive".into()));
        }
        if self.prediction_hidden_dims.contains(&0) {
            return Err(Error::Config("prediction hidden widths must be positive".into()));
        }
        if !self.use_attention && self.use_fusion {
            return Err(Error::Config(
                "the fusion layer consumes attention output; disable fusion when attention is off".into(),
            ));
        }
        Ok(())
    }
}

/// The five configurations compared in the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Full,
    NoFusion,
    NoShortcuts,
    NoFusionShortcuts,
    NoAttentionFusionShortcuts,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoFusion,
        Variant::NoShortcuts,
        Variant::NoFusionShortcuts,
        Variant::NoAttentionFusionShortcuts,
    ];

    pub const ABLATIONS: [Variant; 4] = [
        Variant::NoFusion,
        Variant::NoShortcuts,
        Variant::NoFusionShortcuts,
        Variant::NoAttentionFusionShortcuts,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "ASIM",
            Variant::NoFusion => "ASIM (-FL)",
            Variant::NoShortcuts => "ASIM (-SC)",
            Variant::NoFusionShortcuts => "ASIM (-FL-SC)",
            Variant::NoAttentionFusionShortcuts => "ASIM (-Attn-FL-SC)",
        }
    }

    /// Returns `base` with this variant's switches applied.
    pub fn apply(self, base: &AsimConfig) -> AsimConfig {
        let (attn, fl, sc) = match self {
            Variant::Full => (true, true, true),
            Variant::NoFusion => (true, false, true),
            Variant::NoShortcuts => (true, true, false),
            Variant::NoFusionShortcuts => (true, false, false),
            Variant::NoAttentionFusionShortcuts => (false, false, false),
        };
        AsimConfig {
            use_attention: attn,
            use_fusion: fl,
            use_shortcuts: sc,
            ..base.clone()
        }
    }
}
