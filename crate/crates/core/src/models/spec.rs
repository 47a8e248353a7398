use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Architecture family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    DeepSet,
    Attention,
    #[serde(rename = "RNN")]
    Rnn,
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "GRU")]
    Gru,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::DeepSet,
        Family::Attention,
        Family::Rnn,
        Family::Lstm,
        Family::Gru,
    ];

    pub fn is_sequential(self) -> bool {
        matches!(self, Family::Rnn | Family::Lstm | Family::Gru)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::DeepSet => "DeepSet",
            Family::Attention => "Attention",
            Family::Rnn => "RNN",
            Family::Lstm => "LSTM",
            Family::Gru => "GRU",
        }
    }

    /// Number of `d`-wide gate blocks in the recurrent cell.
    pub fn gate_blocks(self) -> usize {
        match self {
            Family::Rnn => 1,
            Family::Gru => 3,
            Family::Lstm => 4,
            Family::DeepSet | Family::Attention => 0,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn yes() -> bool {
    true
}
fn default_input_dim() -> usize {
    10
}
fn default_embed() -> usize {
    64
}
fn default_hidden() -> usize {
    32
}
fn default_layers() -> usize {
    3
}

/// Architecture and layer widths of one model.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    /// Emit one intermediate value per instance and sum them.
    #[serde(default)]
    pub capacity: bool,
    /// Take the absolute value of every intermediate (capacity models only).
    #[serde(default = "yes")]
    pub use_abs: bool,
    /// Width of the raw instance features.
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    #[serde(default = "default_embed")]
    pub embed_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_layers")]
    pub enc_layers: usize,
    #[serde(default = "default_layers")]
    pub dec_layers: usize,
}

impl ModelSpec {
    pub fn new(family: Family, capacity: bool) -> Self {
        Self {
            family,
            capacity,
            use_abs: true,
            input_dim: default_input_dim(),
            embed_dim: default_embed(),
            hidden_dim: default_hidden(),
            enc_layers: default_layers(),
            dec_layers: default_layers(),
        }
    }

    pub fn with_dims(mut self, input: usize, embed: usize, hidden: usize) -> Self {
        self.input_dim = input;
        self.embed_dim = embed;
        self.hidden_dim = hidden;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.capacity && !self.family.is_sequential() {
            return Err(ModelError::Spec(format!(
                "{} has no capacity variant; only RNN, LSTM and GRU do",
                self.family
            )));
        }
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return Err(ModelError::Spec(format!(
                "encoder and decoder need at least one layer, got {} and {}",
                self.enc_layers, self.dec_layers
            )));
        }
        if self.input_dim == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(ModelError::Spec("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Display name such as `C-GRU`.
    pub fn name(&self) -> String {
        match (self.capacity, self.use_abs) {
            (false, _) => self.family.name().to_string(),
            (true, true) => format!("C-{}", self.family),
            (true, false) => format!("C-{} (no abs)", self.family),
        }
    }
}
