//! Causal temporal graph attention network.

mod checkpoint;
mod forward;
mod ops;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamId;
use crate::causal::{EnvPolicy, EnvRounding, Variant};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use checkpoint::{load_checkpoint, params_from_json, params_to_json, save_checkpoint, CHECKPOINT_VERSION};
pub use forward::{forward, forward_on_tape, ForwardTrace, Mode, ParamVars};
pub use ops::{aggregate_neighborhood, attention_scores, embed_node, RelationNeighborhood};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub num_heads: usize,
    /// Input dropout rate, training mode only.
    pub dropout: f64,
    pub leaky_slope: f64,
    pub variant: Variant,
    /// Fraction of each neighborhood treated as environment (proportional variants).
    pub env_ratio: f64,
    /// Fraction of the causal set mixed into each environment neighbor.
    pub causal_ratio: f64,
    /// Environment set size for the fixed-count variants.
    pub fixed_env_count: usize,
    pub env_rounding: EnvRounding,
    pub num_layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 256,
            num_heads: 4,
            dropout: 0.2,
            leaky_slope: 0.2,
            variant: Variant::Pl,
            env_ratio: 0.2,
            causal_ratio: 0.5,
            fixed_env_count: 2,
            env_rounding: EnvRounding::Floor,
            num_layers: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidInput(msg));
        if self.hidden_dim == 0 || self.num_heads == 0 || self.num_layers == 0 {
            return fail(format!(
                "hidden_dim, num_heads and num_layers must be positive, got {} / {} / {}",
                self.hidden_dim, self.num_heads, self.num_layers
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !self.leaky_slope.is_finite() {
            return fail("leaky_slope must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.env_ratio) {
            return fail(format!("env_ratio must be in [0, 1], got {}", self.env_ratio));
        }
        if !(self.causal_ratio > 0.0 && self.causal_ratio <= 1.0) {
            return fail(format!("causal_ratio must be in (0, 1], got {}", self.causal_ratio));
        }
        Ok(())
    }

    /// Environment selection rule for the configured variant.
    pub fn env_policy(&self) -> EnvPolicy {
        if self.variant.uses_fixed_count() {
            EnvPolicy::Fixed(self.fixed_env_count)
        } else {
            EnvPolicy::Proportion {
                ratio: self.env_ratio,
                rounding: self.env_rounding,
            }
        }
    }
}

/// Ids of the parameters owned by one attention layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerIds {
    /// `2d × H`; column `h` is the attention vector of head `h`, the first
    /// `d` entries scoring the center and the last `d` the neighbor.
    pub attn: ParamId,
    pub mixup_weight: ParamId,
    pub mixup_bias: ParamId,
    /// `(H·d) × d`.
    pub output_proj: ParamId,
}

pub const PROJECTION: ParamId = ParamId(0);
pub const PROJECTION_BIAS: ParamId = ParamId(1);
pub const LABEL_EMBED: ParamId = ParamId(2);
pub const CLASSIFIER: ParamId = ParamId(3);
pub const CLASSIFIER_BIAS: ParamId = ParamId(4);
const SHARED: usize = 5;
const PER_LAYER: usize = 4;

/// All trainable tensors, addressed by [`ParamId`].
#[derive(Clone, Debug, PartialEq)]
pub struct CatGnnParams {
    input_dim: usize,
    hidden_dim: usize,
    num_heads: usize,
    num_layers: usize,
    tensors: Vec<Tensor>,
}

impl CatGnnParams {
    /// Glorot-uniform matrices and zero biases.
    pub fn init(input_dim: usize, config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidInput("input_dim must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = layout(input_dim, config.hidden_dim, config.num_heads, config.num_layers);
        let tensors = layout
            .iter()
            .map(|(name, (rows, cols))| {
                if name.ends_with("bias") {
                    Tensor::zeros(*rows, *cols)
                } else {
                    glorot(*rows, *cols, &mut rng)
                }
            })
            .collect();
        Ok(Self {
            input_dim,
            hidden_dim: config.hidden_dim,
            num_heads: config.num_heads,
            num_layers: config.num_layers,
            tensors,
        })
    }

    /// Builds a parameter set from explicit tensors in [`CatGnnParams::names`] order.
    pub fn from_tensors(input_dim: usize, config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let layout = layout(input_dim, config.hidden_dim, config.num_heads, config.num_layers);
        if tensors.len() != layout.len() {
            return Err(Error::shape(
                "CatGnnParams",
                format!("{} tensors for {} parameters", tensors.len(), layout.len()),
            ));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if t.shape() != *shape {
                return Err(Error::shape("CatGnnParams", format!("{name}: expected {shape:?}, got {:?}", t.shape())));
            }
            if !t.is_finite() {
                return Err(Error::NumericsError(format!("parameter {name}")));
            }
        }
        Ok(Self {
            input_dim,
            hidden_dim: config.hidden_dim,
            num_heads: config.num_heads,
            num_layers: config.num_layers,
            tensors,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn num_heads(&self) -> usize {
        self.num_heads
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn layer(&self, l: usize) -> LayerIds {
        let base = SHARED + PER_LAYER * l;
        LayerIds {
            attn: ParamId(base),
            mixup_weight: ParamId(base + 1),
            mixup_bias: ParamId(base + 2),
            output_proj: ParamId(base + 3),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn names(&self) -> Vec<String> {
        layout(self.input_dim, self.hidden_dim, self.num_heads, self.num_layers)
            .into_iter()
            .map(|(n, _)| n)
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// `‖Θ‖²` over every tensor.
    pub fn l2_norm_sq(&self) -> f64 {
        self.tensors.iter().flat_map(|t| t.data()).map(|x| x * x).sum()
    }

    /// Checks that `config` describes tensors of the shapes held here.
    pub fn check_config(&self, config: &ModelConfig) -> Result<()> {
        if (config.hidden_dim, config.num_heads, config.num_layers) != (self.hidden_dim, self.num_heads, self.num_layers) {
            return Err(Error::InvalidInput(format!(
                "parameters have d={}, H={}, layers={} but config asks for d={}, H={}, layers={}",
                self.hidden_dim,
                self.num_heads,
                self.num_layers,
                config.hidden_dim,
                config.num_heads,
                config.num_layers
            )));
        }
        Ok(())
    }
}

fn layout(input_dim: usize, d: usize, heads: usize, layers: usize) -> Vec<(String, (usize, usize))> {
    let mut out = vec![
        ("projection".to_string(), (input_dim, d)),
        ("projection_bias".to_string(), (1, d)),
        ("label_embed".to_string(), (3, d)),
        ("classifier".to_string(), (d, 1)),
        ("classifier_bias".to_string(), (1, 1)),
    ];
    for l in 0..layers {
        out.push((format!("layer{l}.attn"), (2 * d, heads)));
        out.push((format!("layer{l}.mixup_weight"), (d, 1)));
        out.push((format!("layer{l}.mixup_bias"), (1, 1)));
        out.push((format!("layer{l}.output_proj"), (heads * d, d)));
    }
    out
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(rows, cols, data).expect("sized by construction")
}
