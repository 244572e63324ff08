use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::spec::parse_ngnn_spec;
use crate::error::{NgnnError, Result};
use crate::tensor::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Sage,
    Gat,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Gcn, Arch::Sage, Arch::Gat];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Gcn => "gcn",
            Arch::Sage => "sage",
            Arch::Gat => "gat",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which GNN layers receive an NGNN block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NgnnPosition {
    #[default]
    None,
    Input,
    Hidden,
    Output,
    All,
}

impl NgnnPosition {
    pub const ALL: [NgnnPosition; 5] = [
        NgnnPosition::None,
        NgnnPosition::Input,
        NgnnPosition::Hidden,
        NgnnPosition::Output,
        NgnnPosition::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NgnnPosition::None => "none",
            NgnnPosition::Input => "input",
            NgnnPosition::Hidden => "hidden",
            NgnnPosition::Output => "output",
            NgnnPosition::All => "all",
        }
    }

    /// Whether layer `layer` of an `num_layers`-layer stack gets a block.
    /// Hidden layers are `1..num_layers - 1`.
    pub fn attaches(self, layer: usize, num_layers: usize) -> bool {
        let last = num_layers - 1;
        match self {
            NgnnPosition::None => false,
            NgnnPosition::Input => layer == 0,
            NgnnPosition::Hidden => layer > 0 && layer < last,
            NgnnPosition::Output => layer == last,
            NgnnPosition::All => true,
        }
    }
}

impl fmt::Display for NgnnPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NgnnPosition {
    type Err = NgnnError;

    fn from_str(s: &str) -> Result<Self> {
        NgnnPosition::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| NgnnError::Config(format!("unknown ngnn position {s:?}")))
    }
}

fn default_layers() -> usize {
    3
}

fn default_heads() -> usize {
    1
}

fn default_activation() -> Activation {
    Activation::Relu
}

/// Architecture of an L-layer GNN stack with optional NGNN blocks.
///
/// `in_dim` and `out_dim` may be left at 0 in experiment files; they are
/// filled from the dataset before the model is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    #[serde(default)]
    pub in_dim: usize,
    pub hidden_dim: usize,
    #[serde(default)]
    pub out_dim: usize,
    #[serde(default = "default_layers")]
    pub num_layers: usize,
    /// Attention heads of the non-output GAT layers; the output layer has
    /// one head.
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default)]
    pub ngnn_position: NgnnPosition,
    #[serde(default)]
    pub ngnn_spec: String,
    #[serde(default = "default_activation")]
    pub inter_layer_activation: Activation,
    #[serde(default)]
    pub dropout: f64,
}

impl ModelConfig {
    /// Vanilla 3-layer stack.
    pub fn new(arch: Arch, in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        ModelConfig {
            arch,
            in_dim,
            hidden_dim,
            out_dim,
            num_layers: default_layers(),
            heads: default_heads(),
            ngnn_position: NgnnPosition::None,
            ngnn_spec: String::new(),
            inter_layer_activation: default_activation(),
            dropout: 0.0,
        }
    }

    pub fn with_layers(mut self, num_layers: usize) -> Self {
        self.num_layers = num_layers;
        self
    }

    pub fn with_heads(mut self, heads: usize) -> Self {
        self.heads = heads;
        self
    }

    pub fn with_ngnn(mut self, position: NgnnPosition, spec: &str) -> Self {
        self.ngnn_position = position;
        self.ngnn_spec = spec.to_string();
        self
    }

    /// Expanded NGNN activations; empty when no block is attached anywhere.
    pub fn ngnn_activations(&self) -> Result<Vec<Activation>> {
        if self.ngnn_position == NgnnPosition::None {
            return Ok(Vec::new());
        }
        parse_ngnn_spec(&self.ngnn_spec)
    }

    /// Width of layer `i`'s output.
    pub fn layer_dims(&self, i: usize) -> (usize, usize) {
        let d_in = if i == 0 { self.in_dim } else { self.hidden_dim };
        let d_out = if i + 1 == self.num_layers { self.out_dim } else { self.hidden_dim };
        (d_in, d_out)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NgnnError::Config(m));
        if self.num_layers < 2 {
            return bad(format!("num_layers must be >= 2, got {}", self.num_layers));
        }
        if self.in_dim == 0 || self.hidden_dim == 0 || self.out_dim == 0 {
            return bad(format!(
                "dims must be positive (in {}, hidden {}, out {})",
                self.in_dim, self.hidden_dim, self.out_dim
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.heads == 0 {
            return bad("heads must be >= 1".into());
        }
        if self.arch == Arch::Gat && self.hidden_dim % self.heads != 0 {
            return bad(format!(
                "hidden_dim {} not divisible by {} heads",
                self.hidden_dim, self.heads
            ));
        }
        self.ngnn_activations()?;
        Ok(())
    }
}
