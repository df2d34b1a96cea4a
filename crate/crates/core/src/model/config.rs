use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub hidden: usize,
    pub ffn_mult: usize,
    pub vocab_size: usize,
    /// Tag-head width, including the reserved label 0.
    pub n_tag_labels: usize,
    pub max_seq_len: usize,
    pub layer_norm_eps: f64,
    /// Dropout on the attention and feed-forward sublayer outputs.
    pub dropout: f64,
}

impl ModelConfig {
    /// Laptop-sized encoder: 2 layers, 4 heads, hidden 64.
    pub fn desk(vocab_size: usize, n_tag_labels: usize) -> Self {
        ModelConfig {
            n_layers: 2,
            n_heads: 4,
            hidden: 64,
            ffn_mult: 4,
            vocab_size,
            n_tag_labels,
            max_seq_len: 128,
            layer_norm_eps: 1e-5,
            dropout: 0.1,
        }
    }

    /// The full-size encoder: 8 layers, 8 heads, hidden 256, 8192 vocabulary.
    pub fn full(n_tag_labels: usize) -> Self {
        ModelConfig {
            n_layers: 8,
            n_heads: 8,
            hidden: 256,
            vocab_size: 8192,
            ..ModelConfig::desk(8192, n_tag_labels)
        }
    }

    pub fn ffn_hidden(&self) -> usize {
        self.hidden * self.ffn_mult
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("hidden", self.hidden),
            ("ffn_mult", self.ffn_mult),
            ("vocab_size", self.vocab_size),
            ("n_tag_labels", self.n_tag_labels),
            ("max_seq_len", self.max_seq_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be positive")));
        }
        if self.hidden % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "hidden ({}) must be divisible by n_heads ({})",
                self.hidden, self.n_heads
            )));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(Error::Config("layer_norm_eps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn n_params(&self) -> usize {
        let (h, f) = (self.hidden, self.ffn_hidden());
        let layer = 4 * (h * h + h) + 4 * h + h * f + f + f * h + h;
        self.vocab_size * h
            + self.max_seq_len * h
            + self.n_layers * layer
            + 2 * h
            + h * self.vocab_size
            + self.vocab_size
            + h * self.n_tag_labels
            + self.n_tag_labels
    }
}
