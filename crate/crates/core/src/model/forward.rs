//! Batched forward pass on a tape.
//!
//! Every (center, relation) pair with at least one neighbor forms a group;
//! attention is a segment softmax over groups, and mixup participants form a
//! second level of segments over the edges. Groups of a center are summed
//! before the output projection and the result is added to the center's own
//! embedding, so a center without neighbors keeps just its self path.

use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::{CatGnnParams, ModelConfig, CLASSIFIER, CLASSIFIER_BIAS, LABEL_EMBED, PROJECTION, PROJECTION_BIAS};
use crate::autodiff::{ParamId, Segments, Tape, Var};
use crate::causal::{inspect, select_causal, Variant, WeightMode};
use crate::error::{Error, Result};
use crate::graph::{Label, MultiRelationGraph, NodeId};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Tape handles for every parameter, indexed like [`CatGnnParams::ids`].
pub struct ParamVars {
    vars: Vec<Var>,
}

impl ParamVars {
    /// Records all parameters on `tape`; as gradient-tracked leaves when
    /// `trainable`, as constants otherwise.
    pub fn register(tape: &mut Tape, params: &CatGnnParams, trainable: bool) -> Self {
        let vars = params
            .ids()
            .map(|id| {
                let value = params.get(id).clone();
                if trainable {
                    tape.param(id, value)
                } else {
                    tape.constant(value)
                }
            })
            .collect();
        Self { vars }
    }

    pub fn get(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn all(&self) -> &[Var] {
        &self.vars
    }
}

/// Logits plus work counters for one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardTrace {
    /// `B×1`, aligned with the batch.
    pub logits: Var,
    pub edges: usize,
    pub env_edges: usize,
    pub mixed_edges: usize,
    pub dropped_edges: usize,
}

/// Logits for `batch` without recording gradients.
pub fn forward(
    graph: &MultiRelationGraph,
    observed: &[Label],
    batch: &[NodeId],
    params: &CatGnnParams,
    config: &ModelConfig,
    mode: Mode,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, false);
    let trace = forward_on_tape(&mut tape, &vars, graph, observed, batch, params, config, mode, seed)?;
    Ok(tape.value(trace.logits).data().to_vec())
}

/// Records the forward pass for `batch` on `tape`.
///
/// `observed` is the label vector visible to the model. Batch nodes never see
/// their own label: with one layer only their own input row is masked, with
/// deeper stacks every row of a batch node is, since its embedding could
/// otherwise flow back to it through a neighbor.
#[allow(clippy::too_many_arguments)]
pub fn forward_on_tape(
    tape: &mut Tape,
    vars: &ParamVars,
    graph: &MultiRelationGraph,
    observed: &[Label],
    batch: &[NodeId],
    params: &CatGnnParams,
    config: &ModelConfig,
    mode: Mode,
    seed: u64,
) -> Result<ForwardTrace> {
    config.validate()?;
    params.check_config(config)?;
    let n = graph.num_nodes();
    if batch.is_empty() {
        return Err(Error::InvalidInput("batch is empty".into()));
    }
    if observed.len() != n {
        return Err(Error::shape("forward", format!("{} observed labels for {n} nodes", observed.len())));
    }
    if params.input_dim() != graph.feature_dim() {
        return Err(Error::shape(
            "forward",
            format!("features have {} columns, parameters expect {}", graph.feature_dim(), params.input_dim()),
        ));
    }
    let mut in_batch = vec![false; n];
    for &v in batch {
        if v >= n {
            return Err(Error::IndexError(format!("batch node {v} of {n}")));
        }
        if std::mem::replace(&mut in_batch[v], true) {
            return Err(Error::InvalidInput(format!("node {v} appears twice in the batch")));
        }
    }

    let depth = config.num_layers;
    // centers[l] are the nodes whose layer-l representation is needed
    let mut centers: Vec<Vec<NodeId>> = vec![Vec::new(); depth + 1];
    centers[depth] = batch.to_vec();
    for l in (1..depth).rev() {
        centers[l] = expand(graph, &centers[l + 1]);
    }

    // layer-0 rows are keyed by (node, label hidden)
    let hidden = |v: NodeId, as_center: bool| if depth == 1 { as_center } else { in_batch[v] };
    let mut keys: Vec<(NodeId, bool)> = Vec::new();
    let mut key_row: HashMap<(NodeId, bool), usize> = HashMap::new();
    let mut add_key = |key: (NodeId, bool)| {
        if let std::collections::hash_map::Entry::Vacant(slot) = key_row.entry(key) {
            slot.insert(keys.len());
            keys.push(key);
        }
    };
    for &c in &centers[1] {
        add_key((c, hidden(c, true)));
    }
    for &c in &centers[1] {
        for rel in graph.relations() {
            for &u in rel.adjacency.neighbors(c) {
                add_key((u as NodeId, hidden(u as NodeId, false)));
            }
        }
    }

    let d_in = graph.feature_dim();
    let mut x0 = Tensor::zeros(keys.len(), d_in);
    for (r, &(v, _)) in keys.iter().enumerate() {
        x0.row_mut(r).copy_from_slice(graph.features().row(v));
    }
    let label_idx: Vec<usize> = keys
        .iter()
        .map(|&(v, masked)| if masked { Label::Unlabeled.index() } else { observed[v].index() })
        .collect();
    let x0 = tape.constant(x0);
    let mut h = tape.matmul(x0, vars.get(PROJECTION))?;
    h = tape.add_row(h, vars.get(PROJECTION_BIAS))?;
    let lab = tape.gather_rows(vars.get(LABEL_EMBED), &Rc::new(label_idx))?;
    h = tape.add(h, lab)?;
    h = tape.dropout(h, config.dropout, seed, mode == Mode::Train)?;

    let mut stats = Stats::default();
    let mut prev_rows: HashMap<NodeId, usize> = HashMap::new();
    for l in 1..=depth {
        let row_of = |v: NodeId, as_center: bool| -> usize {
            if l == 1 {
                key_row[&(v, hidden(v, as_center))]
            } else {
                prev_rows[&v]
            }
        };
        h = layer(tape, vars, params, config, graph, l - 1, h, &centers[l], row_of, &mut stats)?;
        prev_rows = centers[l].iter().enumerate().map(|(i, &v)| (v, i)).collect();
    }

    let logits = tape.matmul(h, vars.get(CLASSIFIER))?;
    let logits = tape.add_row(logits, vars.get(CLASSIFIER_BIAS))?;
    Ok(ForwardTrace {
        logits,
        edges: stats.edges,
        env_edges: stats.env_edges,
        mixed_edges: stats.mixed_edges,
        dropped_edges: stats.dropped_edges,
    })
}

#[derive(Default)]
struct Stats {
    edges: usize,
    env_edges: usize,
    mixed_edges: usize,
    dropped_edges: usize,
}

/// `nodes` followed by their unseen neighbors in encounter order.
fn expand(graph: &MultiRelationGraph, nodes: &[NodeId]) -> Vec<NodeId> {
    let mut seen = vec![false; graph.num_nodes()];
    let mut out = nodes.to_vec();
    for &v in nodes {
        seen[v] = true;
    }
    for &v in nodes {
        for rel in graph.relations() {
            for &u in rel.adjacency.neighbors(v) {
                let u = u as NodeId;
                if !std::mem::replace(&mut seen[u], true) {
                    out.push(u);
                }
            }
        }
    }
    out
}

/// One attention layer: returns a `|centers|×d` representation.
#[allow(clippy::too_many_arguments)]
fn layer(
    tape: &mut Tape,
    vars: &ParamVars,
    params: &CatGnnParams,
    config: &ModelConfig,
    graph: &MultiRelationGraph,
    l: usize,
    prev: Var,
    centers: &[NodeId],
    row_of: impl Fn(NodeId, bool) -> usize,
    stats: &mut Stats,
) -> Result<Var> {
    let d = params.hidden_dim();
    let heads = params.num_heads();
    let ids = params.layer(l);

    let center_rows: Vec<usize> = centers.iter().map(|&c| row_of(c, true)).collect();
    let mut edge_center = Vec::new();
    let mut edge_nbr = Vec::new();
    let mut edge_node = Vec::new();
    let mut edge_group = Vec::new();
    let mut group_center = Vec::new();
    let mut group_node = Vec::new();
    for (ci, &c) in centers.iter().enumerate() {
        for rel in graph.relations() {
            let nbrs = rel.adjacency.neighbors(c);
            if nbrs.is_empty() {
                continue;
            }
            let g = group_center.len();
            group_center.push(ci);
            group_node.push(c);
            for &u in nbrs {
                let u = u as NodeId;
                edge_center.push(center_rows[ci]);
                edge_nbr.push(row_of(u, false));
                edge_node.push(u);
                edge_group.push(g);
            }
        }
    }
    let self_path = tape.gather_rows(prev, &Rc::new(center_rows))?;
    stats.edges += edge_nbr.len();
    if edge_nbr.is_empty() {
        return Ok(self_path);
    }

    let attn = vars.get(ids.attn);
    let a_center = tape.slice_rows(attn, 0, d)?;
    let a_nbr = tape.slice_rows(attn, d, 2 * d)?;
    let p = tape.matmul(prev, a_center)?;
    let q = tape.matmul(prev, a_nbr)?;
    let edge_nbr = Rc::new(edge_nbr);
    let pc = tape.gather_rows(p, &Rc::new(edge_center))?;
    let qn = tape.gather_rows(q, &edge_nbr)?;
    let raw = tape.add(pc, qn)?;
    let scores = tape.leaky_relu(raw, config.leaky_slope)?;
    let groups = Rc::new(Segments::new(edge_group)?);
    let alpha = tape.segment_softmax(scores, &groups)?;

    let (alpha, values, groups, group_center) = match config.variant {
        Variant::NCat => (alpha, tape.gather_rows(prev, &edge_nbr)?, groups, group_center),
        variant => {
            let alpha_val = tape.value(alpha).clone();
            let mut partitions = Vec::with_capacity(groups.num_segments());
            for (g, (start, end)) in groups.ranges().enumerate() {
                let per_head: Vec<Vec<f64>> = (0..heads)
                    .map(|hd| (start..end).map(|e| alpha_val.get(e, hd)).collect())
                    .collect();
                let part = inspect(group_node[g], &edge_node[start..end], &per_head, config)?;
                stats.env_edges += part.env_set.len();
                partitions.push((start, part));
            }
            if variant == Variant::DCat {
                let mut kept = Vec::new();
                let mut kept_group = Vec::new();
                let mut kept_center = Vec::new();
                for (g, (start, part)) in partitions.iter().enumerate() {
                    if part.causal_set.is_empty() {
                        continue;
                    }
                    let id = kept_center.len();
                    kept_center.push(group_center[g]);
                    for &pos in &part.causal_set {
                        kept.push(start + pos);
                        kept_group.push(id);
                    }
                }
                stats.dropped_edges += edge_nbr.len() - kept.len();
                if kept.is_empty() {
                    return Ok(self_path);
                }
                let kept_nbr: Vec<usize> = kept.iter().map(|&e| edge_nbr[e]).collect();
                let kept_groups = Rc::new(Segments::new(kept_group)?);
                let kept_scores = tape.gather_rows(scores, &Rc::new(kept))?;
                let alpha = tape.segment_softmax(kept_scores, &kept_groups)?;
                let values = tape.gather_rows(prev, &Rc::new(kept_nbr))?;
                (alpha, values, kept_groups, kept_center)
            } else {
                let mode = variant.weight_mode().expect("mixing variant");
                let mut part_rows = Vec::with_capacity(edge_nbr.len());
                let mut part_edges = Vec::with_capacity(edge_nbr.len());
                let mut part_seg = Vec::with_capacity(edge_nbr.len());
                let mut mixed = 0;
                for (start, part) in &partitions {
                    let selected = select_causal(part, config.causal_ratio);
                    for pos in 0..part.len() {
                        let e = start + pos;
                        if part.is_env(pos) && !selected.is_empty() {
                            mixed += 1;
                            let participants: Vec<usize> =
                                std::iter::once(pos).chain(selected.iter().copied()).collect();
                            for &p in &participants {
                                part_rows.push(edge_nbr[start + p]);
                                part_edges.push(start + p);
                                part_seg.push(e);
                            }
                        } else {
                            part_rows.push(edge_nbr[e]);
                            part_edges.push(e);
                            part_seg.push(e);
                        }
                    }
                }
                stats.mixed_edges += mixed;
                let values = if mixed == 0 {
                    tape.gather_rows(prev, &edge_nbr)?
                } else {
                    let part_rows = Rc::new(part_rows);
                    let part_seg = Rc::new(Segments::new(part_seg)?);
                    let weights = match mode {
                        WeightMode::Importance => {
                            // head-mean attention of each participant, renormalized
                            // over the participants of its environment neighbor
                            let mean = tape.constant(Tensor::filled(heads, 1, 1.0 / heads as f64));
                            let importance = tape.matmul(alpha, mean)?;
                            let importance = tape.gather_rows(importance, &Rc::new(part_edges))?;
                            tape.segment_normalize(importance, &part_seg)?
                        }
                        WeightMode::Learned => {
                            let s = tape.matmul(prev, vars.get(ids.mixup_weight))?;
                            let s = tape.add_row(s, vars.get(ids.mixup_bias))?;
                            let s = tape.gather_rows(s, &part_rows)?;
                            tape.segment_softmax(s, &part_seg)?
                        }
                    };
                    tape.gather_weighted_segment_sum(weights, prev, &part_rows, &part_seg)?
                };
                (alpha, values, groups, group_center)
            }
        }
    };

    let mut per_head = Vec::with_capacity(heads);
    for hd in 0..heads {
        let w = tape.column(alpha, hd)?;
        let agg = tape.weighted_segment_sum(w, values, &groups)?;
        per_head.push(tape.elu(agg)?);
    }
    let cat = if heads == 1 { per_head[0] } else { tape.concat_cols(&per_head)? };
    let summed = tape.scatter_add_rows(cat, &Rc::new(group_center), centers.len())?;
    let out = tape.matmul(summed, vars.get(ids.output_proj))?;
    tape.add(self_path, out)
}
