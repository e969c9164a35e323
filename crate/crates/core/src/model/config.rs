//! Model hyperparameters and validation.

use serde::{Deserialize, Serialize};

use crate::diffcore::DiffError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Mlp,
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouterKind {
    /// Nonnegative gate: relu(W_gate·fused); a variable number of experts can
    /// be active and the whole path stays differentiable.
    Relu,
    /// Softmax gate with hard truncation to the top-k entries (kept mass is
    /// not renormalized; gradient flows only through kept entries).
    TopkSoftmax,
    /// Single-expert fallback: the constant weight 1. Used by the
    /// mixture-ablation variant.
    Unit,
}

/// Which intermediate the low-rank side pathway reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoraTap {
    /// The input of the final projection (default: the adapted layer).
    ProjInput,
    /// The concatenated feature embedding, bypassing the backbone body.
    Features,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EasqConfig {
    /// Embedding width for id features (user, item).
    pub emb_dim_id: usize,
    /// Embedding width for categorical context features.
    pub emb_dim_cat: usize,
    /// Embedding width for bucketized dense features.
    pub emb_dim_bucket: usize,
    pub backbone_kind: BackboneKind,
    /// Width of the final projection's input.
    pub backbone_hidden: usize,
    /// Attention heads (attention backbone only).
    pub n_heads: usize,
    /// Output dimension of the backbone representation h.
    pub d_h: usize,
    pub lora_rank: usize,
    pub use_lora: bool,
    pub lora_tap: LoraTap,
    /// Main-task expert count.
    pub k1: usize,
    /// Satisfaction-task expert count.
    pub k2: usize,
    pub expert_hidden: usize,
    pub router_kind: RouterKind,
    /// Experts kept by the top-k router.
    pub topk: usize,
    /// Weight of the satisfaction pairwise loss.
    pub lambda1: f64,
    /// Weight of the preference-alignment loss.
    pub lambda2: f64,
    /// Alignment temperature.
    pub beta: f64,
    /// Widen the alignment pair stream to pairs involving Uncertain answers.
    pub dpo_include_uncertain: bool,
    pub seed: u64,
}

impl Default for EasqConfig {
    fn default() -> Self {
        Self {
            emb_dim_id: 64,
            emb_dim_cat: 32,
            emb_dim_bucket: 8,
            backbone_kind: BackboneKind::Mlp,
            backbone_hidden: 32,
            n_heads: 2,
            d_h: 16,
            lora_rank: 4,
            use_lora: true,
            lora_tap: LoraTap::ProjInput,
            k1: 4,
            k2: 2,
            expert_hidden: 32,
            router_kind: RouterKind::Relu,
            topk: 2,
            lambda1: 0.5,
            lambda2: 0.5,
            beta: 0.1,
            dpo_include_uncertain: false,
            seed: 0,
        }
    }
}

impl EasqConfig {
    /// Small dimensions for fast exact tests (gradient checks perturb every
    /// coordinate, so parameter counts matter).
    pub fn tiny() -> Self {
        Self {
            emb_dim_id: 6,
            emb_dim_cat: 4,
            emb_dim_bucket: 3,
            backbone_hidden: 8,
            d_h: 6,
            lora_rank: 2,
            expert_hidden: 5,
            k1: 3,
            k2: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DiffError> {
        let err = |m: String| Err(DiffError::InvalidArg(m));
        if self.emb_dim_id == 0 || self.emb_dim_cat == 0 || self.emb_dim_bucket == 0 {
            return err("embedding dims must be >= 1".into());
        }
        if self.d_h == 0 || self.backbone_hidden == 0 || self.expert_hidden == 0 {
            return err("layer widths must be >= 1".into());
        }
        if self.k1 < 1 || self.k2 < 1 {
            return err(format!("expert counts must be >= 1, got K1={} K2={}", self.k1, self.k2));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return err("lambda1 and lambda2 must be nonnegative".into());
        }
        if self.beta <= 0.0 {
            return err(format!("beta must be positive, got {}", self.beta));
        }
        if self.use_lora {
            let tap_width = match self.lora_tap {
                LoraTap::ProjInput => self.backbone_hidden,
                LoraTap::Features => self.feature_width(),
            };
            if self.lora_rank < 1 || self.lora_rank >= self.d_h.min(tap_width) {
                return err(format!(
                    "lora_rank must satisfy 1 <= r < min(d_h, input width) = min({}, {})",
                    self.d_h, tap_width
                ));
            }
        }
        if self.router_kind == RouterKind::TopkSoftmax
            && (self.topk < 1 || self.topk > self.k1 || self.topk > self.k2)
        {
            return err(format!(
                "topk must satisfy 1 <= topk <= min(K1, K2), got {}",
                self.topk
            ));
        }
        if self.backbone_kind == BackboneKind::Attention {
            if self.n_heads == 0 || self.backbone_hidden % self.n_heads != 0 {
                return err(format!(
                    "backbone_hidden ({}) must be divisible by n_heads ({})",
                    self.backbone_hidden, self.n_heads
                ));
            }
        }
        Ok(())
    }

    /// Width of the concatenated feature embedding
    /// (two id fields + one categorical + one bucketized dense field).
    pub fn feature_width(&self) -> usize {
        2 * self.emb_dim_id + self.emb_dim_cat + self.emb_dim_bucket
    }
}
