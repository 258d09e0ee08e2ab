//! Single-node building blocks on plain values.
//!
//! [`forward`](super::forward) evaluates the same maps for whole batches on a
//! tape; these versions handle one center at a time and are convenient for
//! inspection and cross-checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CatGnnParams, Mode, ModelConfig, LABEL_EMBED, PROJECTION, PROJECTION_BIAS};
use crate::causal::softmax;
use crate::error::{Error, Result};
use crate::graph::{Label, MultiRelationGraph, NodeId};
use crate::tensor::Tensor;

/// Input embedding of one node: projected features plus the embedding of its
/// observed label, or of "unlabeled" when `mask_self` is set.
#[allow(clippy::too_many_arguments)]
pub fn embed_node(
    graph: &MultiRelationGraph,
    observed: &[Label],
    node: NodeId,
    params: &CatGnnParams,
    config: &ModelConfig,
    mask_self: bool,
    mode: Mode,
    seed: u64,
) -> Result<Tensor> {
    if node >= graph.num_nodes() || observed.len() != graph.num_nodes() {
        return Err(Error::IndexError(format!(
            "node {node} with {} nodes and {} observed labels",
            graph.num_nodes(),
            observed.len()
        )));
    }
    if params.input_dim() != graph.feature_dim() {
        return Err(Error::shape(
            "embed_node",
            format!("features have {} columns, parameters expect {}", graph.feature_dim(), params.input_dim()),
        ));
    }
    let label = if mask_self { Label::Unlabeled } else { observed[node] };
    let x = Tensor::row_vector(graph.features().row(node).to_vec());
    let mut out = x.matmul(params.get(PROJECTION))?;
    out.add_scaled(params.get(PROJECTION_BIAS), 1.0);
    for (o, e) in out.data_mut().iter_mut().zip(params.get(LABEL_EMBED).row(label.index())) {
        *o += e;
    }
    if mode == Mode::Train && config.dropout > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - config.dropout);
        for o in out.data_mut() {
            *o *= if rng.gen::<f64>() < config.dropout { 0.0 } else { keep };
        }
    }
    Ok(out)
}

/// Attention of one head over a neighborhood, evaluated directly from the
/// concatenation `[x_i ⊕ x_j]`.
pub fn attention_scores(
    center_emb: &[f64],
    neighbor_embs: &Tensor,
    head: usize,
    params: &CatGnnParams,
    layer: usize,
    slope: f64,
) -> Result<Vec<f64>> {
    let d = params.hidden_dim();
    if neighbor_embs.rows() == 0 {
        return Err(Error::EmptyNeighborhood);
    }
    if head >= params.num_heads() || layer >= params.num_layers() {
        return Err(Error::IndexError(format!("head {head} of layer {layer}")));
    }
    if center_emb.len() != d || neighbor_embs.cols() != d {
        return Err(Error::shape(
            "attention_scores",
            format!("center width {}, neighbors {:?}, d={d}", center_emb.len(), neighbor_embs.shape()),
        ));
    }
    let attn = params.get(params.layer(layer).attn);
    let scores: Vec<f64> = (0..neighbor_embs.rows())
        .map(|j| {
            let z: f64 = center_emb
                .iter()
                .chain(neighbor_embs.row(j))
                .enumerate()
                .map(|(k, x)| attn.get(k, head) * x)
                .sum();
            if z > 0.0 {
                z
            } else {
                slope * z
            }
        })
        .collect();
    Ok(softmax(&scores))
}

/// Attention weights (one vector per head) and intervened features for one
/// relation of one center.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationNeighborhood {
    pub attention: Vec<Vec<f64>>,
    pub features: Tensor,
}

/// `(Σ_r concat_h ELU(Σ_j α_h[j] x'_j)) · W_c`, a `1×d` row. An empty slice
/// yields zeros.
pub fn aggregate_neighborhood(relations: &[RelationNeighborhood], params: &CatGnnParams, layer: usize) -> Result<Tensor> {
    let (d, heads) = (params.hidden_dim(), params.num_heads());
    if layer >= params.num_layers() {
        return Err(Error::IndexError(format!("layer {layer} of {}", params.num_layers())));
    }
    let mut concat = vec![0.0; heads * d];
    for rel in relations {
        let m = rel.features.rows();
        if rel.attention.len() != heads || rel.attention.iter().any(|w| w.len() != m) || rel.features.cols() != d {
            return Err(Error::shape(
                "aggregate_neighborhood",
                format!(
                    "{} heads of lengths {:?} for features {:?}",
                    rel.attention.len(),
                    rel.attention.iter().map(Vec::len).collect::<Vec<_>>(),
                    rel.features.shape()
                ),
            ));
        }
        for (h, weights) in rel.attention.iter().enumerate() {
            for c in 0..d {
                let s: f64 = weights.iter().enumerate().map(|(j, w)| w * rel.features.get(j, c)).sum();
                concat[h * d + c] += if s > 0.0 { s } else { s.exp_m1() };
            }
        }
    }
    Tensor::row_vector(concat).matmul(params.get(params.layer(layer).output_proj))
}
