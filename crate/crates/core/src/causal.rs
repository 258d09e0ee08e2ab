//! Inspection and intervention on attention neighborhoods.
//!
//! The inspector turns per-head attention into a single importance score per
//! neighbor and splits the neighborhood into a low-importance environment set
//! and a causal set. The intervener replaces each environment neighbor by a
//! convex combination of itself and the strongest causal neighbors. Every
//! function here works on values owned by the caller and returns new values, so
//! an intervention performed for one center can never leak into another.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::model::ModelConfig;
use crate::tensor::Tensor;

/// Slack used when turning `ratio * count` into an integer, so that products
/// such as `0.29 * 100` are not rounded down to 28.
const COUNT_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Proportional environment set, learned mixup weights.
    #[serde(rename = "PL")]
    Pl,
    /// Proportional environment set, importance-derived weights.
    #[serde(rename = "PI")]
    Pi,
    /// Fixed-size environment set, learned weights.
    #[serde(rename = "FL")]
    Fl,
    /// Fixed-size environment set, importance-derived weights.
    #[serde(rename = "FI")]
    Fi,
    /// No intervention: plain attention over every neighbor.
    #[serde(rename = "N_CAT")]
    NCat,
    /// Environment neighbors are dropped instead of mixed.
    #[serde(rename = "D_CAT")]
    DCat,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Variant::Pl, Variant::Pi, Variant::Fl, Variant::Fi, Variant::NCat, Variant::DCat];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Pl => "PL",
            Variant::Pi => "PI",
            Variant::Fl => "FL",
            Variant::Fi => "FI",
            Variant::NCat => "N_CAT",
            Variant::DCat => "D_CAT",
        }
    }

    /// `None` for the two ablations, which never mix.
    pub fn weight_mode(self) -> Option<WeightMode> {
        match self {
            Variant::Pl | Variant::Fl => Some(WeightMode::Learned),
            Variant::Pi | Variant::Fi => Some(WeightMode::Importance),
            Variant::NCat | Variant::DCat => None,
        }
    }

    pub fn uses_fixed_count(self) -> bool {
        matches!(self, Variant::Fl | Variant::Fi)
    }

    pub fn inspects(self) -> bool {
        self != Variant::NCat
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
        match key.as_str() {
            "PL" => Ok(Variant::Pl),
            "PI" => Ok(Variant::Pi),
            "FL" => Ok(Variant::Fl),
            "FI" => Ok(Variant::Fi),
            "NCAT" => Ok(Variant::NCat),
            "DCAT" => Ok(Variant::DCat),
            _ => Err(Error::InvalidInput(format!("unknown variant `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Softmax of a linear scorer over the participants.
    Learned,
    /// Participants weighted by their share of importance.
    Importance,
}

impl WeightMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightMode::Learned => "learned",
            WeightMode::Importance => "importance",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvRounding {
    #[default]
    Floor,
    Ceil,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvPolicy {
    Proportion { ratio: f64, rounding: EnvRounding },
    Fixed(usize),
}

impl EnvPolicy {
    pub fn proportion(ratio: f64) -> Self {
        EnvPolicy::Proportion {
            ratio,
            rounding: EnvRounding::Floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvPolicy::Proportion { ratio, .. } if !(0.0..=1.0).contains(&ratio) => {
                Err(Error::InvalidInput(format!("env ratio must be in [0, 1], got {ratio}")))
            }
            _ => Ok(()),
        }
    }

    /// Size of the environment set for a neighborhood of `m` nodes.
    pub fn env_count(&self, m: usize) -> Result<usize> {
        self.validate()?;
        Ok(match *self {
            EnvPolicy::Proportion { ratio, rounding } => {
                let x = ratio * m as f64;
                let n = match rounding {
                    EnvRounding::Floor => (x + COUNT_EPS).floor(),
                    EnvRounding::Ceil => (x - COUNT_EPS).ceil(),
                };
                (n.max(0.0) as usize).min(m)
            }
            EnvPolicy::Fixed(count) => count.min(m),
        })
    }
}

/// Number of causal neighbors mixed into each environment neighbor.
pub fn causal_count(causal_ratio: f64, causal_len: usize) -> usize {
    if causal_len == 0 {
        return 0;
    }
    ((causal_ratio * causal_len as f64 + COUNT_EPS).floor() as usize).clamp(1, causal_len)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodPartition {
    pub center: NodeId,
    /// Neighbor node ids, in the order the other vectors are indexed by.
    pub neighbors: Vec<NodeId>,
    pub importance: Vec<f64>,
    /// Positions into `neighbors`, ascending.
    pub env_set: Vec<usize>,
    /// Positions into `neighbors`, ascending.
    pub causal_set: Vec<usize>,
}

impl NeighborhoodPartition {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn is_env(&self, pos: usize) -> bool {
        self.env_set.binary_search(&pos).is_ok()
    }

    /// Causal positions by decreasing importance, ties to the lower node id.
    pub fn causal_by_importance(&self) -> Vec<usize> {
        let mut order = self.causal_set.clone();
        order.sort_by(|&a, &b| {
            self.importance[b]
                .total_cmp(&self.importance[a])
                .then(self.neighbors[a].cmp(&self.neighbors[b]))
        });
        order
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixupPlan {
    /// Position of the environment neighbor being replaced.
    pub env: usize,
    /// Positions of the selected causal neighbors.
    pub causal: Vec<usize>,
    /// `[a_j, a_1, .., a_k]`.
    pub weights: Vec<f64>,
}

impl MixupPlan {
    /// `[env, causal...]`, aligned with `weights`.
    pub fn participants(&self) -> Vec<usize> {
        std::iter::once(self.env).chain(self.causal.iter().copied()).collect()
    }
}

/// Linear scorer used by the learned weight mode.
#[derive(Clone, Copy, Debug)]
pub struct MixupScorer<'a> {
    pub weights: &'a [f64],
    pub bias: f64,
}

impl MixupScorer<'_> {
    pub fn score(&self, emb: &[f64]) -> f64 {
        self.weights.iter().zip(emb).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }
}

/// Head-averaged attention, renormalized over the neighborhood.
pub fn node_importance(per_head: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = per_head.first() else {
        return Err(Error::InvalidInput("need at least one attention head".into()));
    };
    let m = first.len();
    if m == 0 {
        return Err(Error::EmptyNeighborhood);
    }
    if let Some(h) = per_head.iter().position(|w| w.len() != m) {
        return Err(Error::shape(
            "node_importance",
            format!("head {h} has {} weights, head 0 has {m}", per_head[h].len()),
        ));
    }
    let heads = per_head.len() as f64;
    let mean: Vec<f64> = (0..m).map(|j| per_head.iter().map(|w| w[j]).sum::<f64>() / heads).collect();
    let total: f64 = mean.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::NumericsError("node_importance".into()));
    }
    Ok(mean.into_iter().map(|a| a / total).collect())
}

/// Splits a neighborhood into the lowest-importance environment set and the rest.
pub fn partition_neighborhood(
    center: NodeId,
    neighbors: &[NodeId],
    importance: &[f64],
    policy: EnvPolicy,
) -> Result<NeighborhoodPartition> {
    if neighbors.len() != importance.len() {
        return Err(Error::shape(
            "partition_neighborhood",
            format!("{} neighbors vs {} importance scores", neighbors.len(), importance.len()),
        ));
    }
    let n_env = policy.env_count(neighbors.len())?;
    let mut order: Vec<usize> = (0..neighbors.len()).collect();
    order.sort_by(|&a, &b| importance[a].total_cmp(&importance[b]).then(neighbors[a].cmp(&neighbors[b])));
    let mut env_set = order[..n_env].to_vec();
    let mut causal_set = order[n_env..].to_vec();
    env_set.sort_unstable();
    causal_set.sort_unstable();
    Ok(NeighborhoodPartition {
        center,
        neighbors: neighbors.to_vec(),
        importance: importance.to_vec(),
        env_set,
        causal_set,
    })
}

/// Importance followed by partition under the policy implied by `config`.
pub fn inspect(
    center: NodeId,
    neighbors: &[NodeId],
    per_head: &[Vec<f64>],
    config: &ModelConfig,
) -> Result<NeighborhoodPartition> {
    let importance = node_importance(per_head)?;
    let policy = if config.variant.inspects() {
        config.env_policy()
    } else {
        EnvPolicy::Fixed(0)
    };
    partition_neighborhood(center, neighbors, &importance, policy)
}

/// Chooses the causal partners of environment neighbor `env` and their weights.
///
/// `embeddings` holds one row per neighbor position. The scorer is only read in
/// learned mode.
pub fn plan_mixup(
    partition: &NeighborhoodPartition,
    env: usize,
    mode: WeightMode,
    causal_ratio: f64,
    embeddings: &Tensor,
    scorer: Option<MixupScorer<'_>>,
) -> Result<MixupPlan> {
    if !partition.is_env(env) {
        return Err(Error::InvalidInput(format!("position {env} is not in the environment set")));
    }
    if !(causal_ratio > 0.0 && causal_ratio <= 1.0) {
        return Err(Error::InvalidInput(format!("causal ratio must be in (0, 1], got {causal_ratio}")));
    }
    if partition.causal_set.is_empty() {
        return Err(Error::NoCausalNodes);
    }
    let causal = select_causal(partition, causal_ratio);
    let participants: Vec<usize> = std::iter::once(env).chain(causal.iter().copied()).collect();
    let weights = match mode {
        WeightMode::Importance => importance_weights(partition, &participants),
        WeightMode::Learned => {
            let scorer = scorer.ok_or_else(|| Error::InvalidInput("learned mixup needs a scorer".into()))?;
            if embeddings.rows() != partition.len() || embeddings.cols() != scorer.weights.len() {
                return Err(Error::shape(
                    "plan_mixup",
                    format!(
                        "embeddings {:?} for {} neighbors and scorer width {}",
                        embeddings.shape(),
                        partition.len(),
                        scorer.weights.len()
                    ),
                ));
            }
            let scores: Vec<f64> = participants.iter().map(|&p| scorer.score(embeddings.row(p))).collect();
            softmax(&scores)
        }
    };
    Ok(MixupPlan { env, causal, weights })
}

/// The `max(1, ⌊r_c·|S_c|⌋)` most important causal positions, strongest first.
pub fn select_causal(partition: &NeighborhoodPartition, causal_ratio: f64) -> Vec<usize> {
    let mut causal = partition.causal_by_importance();
    causal.truncate(causal_count(causal_ratio, causal.len()));
    causal
}

/// Importance of each participant divided by the participants' total.
pub fn importance_weights(partition: &NeighborhoodPartition, participants: &[usize]) -> Vec<f64> {
    let total: f64 = participants.iter().map(|&p| partition.importance[p]).sum();
    if total > 0.0 {
        participants.iter().map(|&p| partition.importance[p] / total).collect()
    } else {
        vec![1.0 / participants.len() as f64; participants.len()]
    }
}

/// The mixed replacement for the plan's environment neighbor, as a fresh `1×d` row.
pub fn causal_mixup(plan: &MixupPlan, embeddings: &Tensor) -> Result<Tensor> {
    let participants = plan.participants();
    if participants.len() != plan.weights.len() {
        return Err(Error::shape(
            "causal_mixup",
            format!("{} participants vs {} weights", participants.len(), plan.weights.len()),
        ));
    }
    if let Some(&p) = participants.iter().find(|&&p| p >= embeddings.rows()) {
        return Err(Error::IndexError(format!("participant {p} of {} rows", embeddings.rows())));
    }
    let mut out = vec![0.0; embeddings.cols()];
    for (&p, &w) in participants.iter().zip(&plan.weights) {
        for (o, x) in out.iter_mut().zip(embeddings.row(p)) {
            *o += w * x;
        }
    }
    Tensor::from_vec(1, embeddings.cols(), out)
}

/// Neighborhood after intervention, ready for aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantOutput {
    /// Neighbor positions that survive, ascending.
    pub kept: Vec<usize>,
    /// One row per kept neighbor.
    pub features: Tensor,
    /// Per-head attention over `kept`, each summing to one.
    pub attention: Vec<Vec<f64>>,
    pub plans: Vec<MixupPlan>,
}

/// Applies the configured variant to one neighborhood.
///
/// `embeddings` are the original neighbor embeddings (one row per position) and
/// `attention` the per-head weights they received. An empty `kept` means the
/// whole neighborhood was removed and the caller falls back to the self path.
pub fn apply_variant(
    partition: &NeighborhoodPartition,
    attention: &[Vec<f64>],
    embeddings: &Tensor,
    scorer: Option<MixupScorer<'_>>,
    config: &ModelConfig,
) -> Result<VariantOutput> {
    let m = partition.len();
    if embeddings.rows() != m || attention.iter().any(|w| w.len() != m) {
        return Err(Error::shape(
            "apply_variant",
            format!("{m} neighbors, embeddings {:?}", embeddings.shape()),
        ));
    }
    match config.variant {
        Variant::NCat => Ok(VariantOutput {
            kept: (0..m).collect(),
            features: embeddings.clone(),
            attention: attention.to_vec(),
            plans: Vec::new(),
        }),
        Variant::DCat => {
            let kept = partition.causal_set.clone();
            let rows: Vec<Vec<f64>> = kept.iter().map(|&p| embeddings.row(p).to_vec()).collect();
            let features = if rows.is_empty() {
                Tensor::zeros(0, embeddings.cols())
            } else {
                Tensor::from_rows(&rows)?
            };
            let attention = attention
                .iter()
                .map(|w| {
                    let total: f64 = kept.iter().map(|&p| w[p]).sum();
                    kept.iter().map(|&p| w[p] / total).collect()
                })
                .collect();
            Ok(VariantOutput {
                kept,
                features,
                attention,
                plans: Vec::new(),
            })
        }
        variant => {
            let mode = variant.weight_mode().expect("mixing variant");
            let mut features = embeddings.clone();
            let mut plans = Vec::new();
            if !partition.causal_set.is_empty() {
                for &j in &partition.env_set {
                    let plan = plan_mixup(partition, j, mode, config.causal_ratio, embeddings, scorer)?;
                    let mixed = causal_mixup(&plan, embeddings)?;
                    features.row_mut(j).copy_from_slice(mixed.data());
                    plans.push(plan);
                }
            }
            Ok(VariantOutput {
                kept: (0..m).collect(),
                features,
                attention: attention.to_vec(),
                plans,
            })
        }
    }
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
