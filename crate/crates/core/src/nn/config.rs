use std::fmt;
use std::str::FromStr;

use crate::kv::{KvError, KvMap};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Gcn,
    Gat,
}

/// Ordering of nonlinearity and attention vector in the GAT score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionScore {
    /// `a^T LeakyReLU(W_dst h_i + W_src h_j)`.
    V2,
    /// `LeakyReLU(a^T [W h_i || W h_j])`.
    V1,
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Gcn => "gcn",
            Kernel::Gat => "gat",
        })
    }
}

impl FromStr for Kernel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Kernel::Gcn),
            "gat" => Ok(Kernel::Gat),
            other => Err(format!("unknown kernel {other:?}")),
        }
    }
}

impl fmt::Display for AttentionScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionScore::V2 => "v2",
            AttentionScore::V1 => "v1",
        })
    }
}

impl FromStr for AttentionScore {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "v2" => Ok(AttentionScore::V2),
            "v1" => Ok(AttentionScore::V1),
            other => Err(format!("unknown attention score {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kernel: Kernel,
    pub attention: AttentionScore,
    pub blocks: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub dropout: f64,
    pub learn_rate: f64,
    pub batch_size: usize,
    pub class_weight_multiplier: f64,
    pub threshold: f64,
    pub max_nodes: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kernel: Kernel::Gcn,
            attention: AttentionScore::V2,
            blocks: 4,
            embed_dim: 32,
            hidden_dim: 64,
            heads: 4,
            dropout: 0.1,
            learn_rate: 1e-3,
            batch_size: 16,
            class_weight_multiplier: 1.0,
            threshold: 0.5,
            max_nodes: 1024,
            epochs: 100,
            patience: 10,
            seed: 0,
        }
    }
}

pub const MODEL_KEYS: &[&str] = &[
    "kernel",
    "attention",
    "blocks",
    "embed_dim",
    "hidden_dim",
    "heads",
    "dropout",
    "learn_rate",
    "batch_size",
    "class_weight_multiplier",
    "threshold",
    "max_nodes",
    "epochs",
    "patience",
    "seed",
];

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let fail = |msg: &str| Err(NnError::InvalidConfig(msg.to_string()));
        if self.blocks == 0 {
            return fail("blocks must be at least 1");
        }
        if self.hidden_dim == 0 || self.heads == 0 || self.max_nodes == 0 || self.batch_size == 0 {
            return fail("hidden_dim, heads, max_nodes and batch_size must be positive");
        }
        if self.kernel == Kernel::Gat && self.blocks > 1 && !self.hidden_dim.is_multiple_of(self.heads) {
            return fail("hidden_dim must be divisible by heads");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail("threshold must lie strictly inside (0, 1)");
        }
        if !(self.learn_rate >= 0.0 && self.learn_rate.is_finite()) {
            return fail("learn_rate must be finite and non-negative");
        }
        if !(self.class_weight_multiplier > 0.0 && self.class_weight_multiplier.is_finite()) {
            return fail("class_weight_multiplier must be positive");
        }
        Ok(())
    }

    /// Reads the model keys present in `kv`, defaulting the rest.
    pub fn from_kv(kv: &KvMap) -> Result<ModelConfig, KvError> {
        let d = ModelConfig::default();
        let parse_enum = |key: &str, default: String| -> Result<String, KvError> {
            Ok(kv.get_str(key).map(str::to_string).unwrap_or(default))
        };
        let kernel = parse_enum("kernel", d.kernel.to_string())?;
        let attention = parse_enum("attention", d.attention.to_string())?;
        let bad = |key: &str, value: &str| KvError::BadValue {
            key: key.into(),
            value: value.into(),
        };
        Ok(ModelConfig {
            kernel: kernel.parse().map_err(|_| bad("kernel", &kernel))?,
            attention: attention.parse().map_err(|_| bad("attention", &attention))?,
            blocks: kv.get_or("blocks", d.blocks)?,
            embed_dim: kv.get_or("embed_dim", d.embed_dim)?,
            hidden_dim: kv.get_or("hidden_dim", d.hidden_dim)?,
            heads: kv.get_or("heads", d.heads)?,
            dropout: kv.get_or("dropout", d.dropout)?,
            learn_rate: kv.get_or("learn_rate", d.learn_rate)?,
            batch_size: kv.get_or("batch_size", d.batch_size)?,
            class_weight_multiplier: kv.get_or("class_weight_multiplier", d.class_weight_multiplier)?,
            threshold: kv.get_or("threshold", d.threshold)?,
            max_nodes: kv.get_or("max_nodes", d.max_nodes)?,
            epochs: kv.get_or("epochs", d.epochs)?,
            patience: kv.get_or("patience", d.patience)?,
            seed: kv.get_or("seed", d.seed)?,
        })
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::default();
        kv.set("kernel", self.kernel);
        kv.set("attention", self.attention);
        kv.set("blocks", self.blocks);
        kv.set("embed_dim", self.embed_dim);
        kv.set("hidden_dim", self.hidden_dim);
        kv.set("heads", self.heads);
        // `{:?}` prints the shortest representation that parses back exactly.
        kv.set("dropout", format!("{:?}", self.dropout));
        kv.set("learn_rate", format!("{:?}", self.learn_rate));
        kv.set("batch_size", self.batch_size);
        kv.set("class_weight_multiplier", format!("{:?}", self.class_weight_multiplier));
        kv.set("threshold", format!("{:?}", self.threshold));
        kv.set("max_nodes", self.max_nodes);
        kv.set("epochs", self.epochs);
        kv.set("patience", self.patience);
        kv.set("seed", self.seed);
        kv
    }

    /// Width of every block's per-head output; heads are concatenated in all
    /// blocks but the last, which averages them.
    pub(crate) fn head_dim(&self, last: bool) -> usize {
        if last {
            self.hidden_dim
        } else {
            self.hidden_dim / self.heads
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_roundtrip() {
        let c = ModelConfig {
            kernel: Kernel::Gat,
            dropout: 0.15,
            learn_rate: 3e-4,
            ..Default::default()
        };
        assert_eq!(ModelConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_threshold() {
        let c = ModelConfig {
            threshold: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
