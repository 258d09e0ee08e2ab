//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive in execution order together with the
//! values it needs for its local partials. [`Tape::backward`] walks the record
//! once in reverse and returns gradients for every registered parameter.
//! Constants never receive gradients and nodes that do not depend on a
//! parameter are skipped entirely.

mod gradcheck;
mod segments;

use std::collections::BTreeMap;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{matmul_nt_into, matmul_tn_into, Tensor};

pub use gradcheck::{check_gradient, grad_check, GradCheckReport};
pub use segments::Segments;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Identifies a trainable parameter across tapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// Default negative slope for [`Tape::leaky_relu`].
pub const LEAKY_SLOPE: f64 = 0.2;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    Column(Var, usize),
    LeakyRelu(Var, f64),
    Elu(Var),
    Sigmoid(Var),
    Dropout(Var, Rc<Vec<f64>>),
    SegmentSoftmax(Var, Rc<Segments>),
    SegmentNormalize(Var, Rc<Segments>),
    WeightedSegmentSum(Var, Var, Rc<Segments>),
    GatherWeightedSegmentSum(Var, Var, Rc<Vec<usize>>, Rc<Segments>),
    GatherRows(Var, Rc<Vec<usize>>),
    ScatterAddRows(Var, Rc<Vec<usize>>),
    Sum(Var),
    BceWithLogits(Var, Rc<Vec<(usize, f64)>>),
    L2NormSq(Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamId>,
    tracked: bool,
}

/// Gradients keyed by parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    map: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.map.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.map.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    #[inline]
    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            param: None,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers a trainable leaf. Each `ParamId` may be registered once per tape.
    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            param: Some(id),
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NumericsError(name.to_string()));
        }
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node {
            value,
            op,
            param: None,
            tracked,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("add", format!("{:?} + {:?}", va.shape(), vb.shape())));
        }
        let mut out = va.clone();
        out.add_scaled(vb, 1.0);
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    /// `a (n×d) + row (1×d)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(Error::shape("add_row", format!("{:?} + {:?}", va.shape(), vr.shape())));
        }
        let mut out = va.clone();
        for r in 0..out.rows() {
            for (x, b) in out.row_mut(r).iter_mut().zip(vr.data()) {
                *x += b;
            }
        }
        self.push("add_row", out, Op::AddRow(a, row), &[a, row])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * c);
        self.push("scale", out, Op::Scale(a, c), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::shape("concat_cols", "no inputs"));
        };
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for p in parts {
            let v = self.value(*p);
            if v.rows() != rows {
                return Err(Error::shape("concat_cols", format!("{} rows vs {rows}", v.rows())));
            }
            cols += v.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for p in parts {
                let v = self.value(*p);
                out.row_mut(r)[offset..offset + v.cols()].copy_from_slice(v.row(r));
                offset += v.cols();
            }
        }
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let va = self.value(a);
        if start > end || end > va.rows() {
            return Err(Error::shape("slice_rows", format!("{start}..{end} of {} rows", va.rows())));
        }
        let cols = va.cols();
        let out = Tensor::from_vec(end - start, cols, va.data()[start * cols..end * cols].to_vec())?;
        self.push("slice_rows", out, Op::SliceRows(a, start), &[a])
    }

    /// Column `c` of `a` as an `n×1` tensor.
    pub fn column(&mut self, a: Var, c: usize) -> Result<Var> {
        let va = self.value(a);
        if c >= va.cols() {
            return Err(Error::shape("column", format!("column {c} of {:?}", va.shape())));
        }
        let out = Tensor::column((0..va.rows()).map(|r| va.get(r, c)).collect());
        self.push("column", out, Op::Column(a, c), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push("leaky_relu", out, Op::LeakyRelu(a, slope), &[a])
    }

    /// ELU with unit scale: `x` for `x > 0`, `eˣ − 1` otherwise.
    pub fn elu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push("elu", out, Op::Elu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(a), &[a])
    }

    /// Inverted dropout. Identity (no tape entry) when not training or `rate == 0`.
    pub fn dropout(&mut self, a: Var, rate: f64, seed: u64, training: bool) -> Result<Var> {
        if !training || rate == 0.0 {
            return Ok(a);
        }
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidInput(format!("dropout rate {rate} not in [0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        self.dropout_with_mask(a, mask)
    }

    /// Dropout with an explicit multiplicative mask (already scaled).
    pub fn dropout_with_mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        let va = self.value(a);
        if mask.len() != va.len() {
            return Err(Error::shape("dropout", format!("mask of {} for {} values", mask.len(), va.len())));
        }
        let data = va.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_vec(va.rows(), va.cols(), data)?;
        self.push("dropout", out, Op::Dropout(a, Rc::new(mask)), &[a])
    }

    /// Softmax within each segment, independently per column.
    pub fn segment_softmax(&mut self, scores: Var, segments: &Rc<Segments>) -> Result<Var> {
        let vs = self.value(scores);
        if vs.rows() != segments.len() {
            return Err(Error::shape(
                "segment_softmax",
                format!("{} scores for {} segment ids", vs.rows(), segments.len()),
            ));
        }
        let cols = vs.cols();
        let mut out = Tensor::zeros(vs.rows(), cols);
        for (start, end) in segments.ranges() {
            for c in 0..cols {
                let max = (start..end).map(|r| vs.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for r in start..end {
                    let e = (vs.get(r, c) - max).exp();
                    out.set(r, c, e);
                    total += e;
                }
                for r in start..end {
                    out.set(r, c, out.get(r, c) / total);
                }
            }
        }
        self.push("segment_softmax", out, Op::SegmentSoftmax(scores, segments.clone()), &[scores])
    }

    /// Divides each entry by its segment's column total. Entries should be
    /// positive; a zero total is reported as a numerics error.
    pub fn segment_normalize(&mut self, a: Var, segments: &Rc<Segments>) -> Result<Var> {
        let va = self.value(a);
        if va.rows() != segments.len() {
            return Err(Error::shape(
                "segment_normalize",
                format!("{} rows for {} segment ids", va.rows(), segments.len()),
            ));
        }
        let mut out = va.clone();
        for (start, end) in segments.ranges() {
            for c in 0..va.cols() {
                let total: f64 = (start..end).map(|r| va.get(r, c)).sum();
                for r in start..end {
                    out.set(r, c, va.get(r, c) / total);
                }
            }
        }
        self.push("segment_normalize", out, Op::SegmentNormalize(a, segments.clone()), &[a])
    }

    /// `out[s] = Σ_{e ∈ s} weights[e] · values[e]` with `weights` shaped `E×1`.
    pub fn weighted_segment_sum(&mut self, weights: Var, values: Var, segments: &Rc<Segments>) -> Result<Var> {
        let (vw, vv) = (self.value(weights), self.value(values));
        if vw.cols() != 1 || vw.rows() != vv.rows() || vv.rows() != segments.len() {
            return Err(Error::shape(
                "weighted_segment_sum",
                format!("weights {:?}, values {:?}, {} segment ids", vw.shape(), vv.shape(), segments.len()),
            ));
        }
        let cols = vv.cols();
        let mut out = Tensor::zeros(segments.num_segments(), cols);
        for (s, (start, end)) in segments.ranges().enumerate() {
            let dst = out.row_mut(s);
            let w0 = vw.data()[start];
            for (o, x) in dst.iter_mut().zip(vv.row(start)) {
                *o = w0 * x;
            }
            for r in start + 1..end {
                let w = vw.data()[r];
                for (o, x) in dst.iter_mut().zip(vv.row(r)) {
                    *o += w * x;
                }
            }
        }
        self.push(
            "weighted_segment_sum",
            out,
            Op::WeightedSegmentSum(weights, values, segments.clone()),
            &[weights, values],
        )
    }

    /// `out[s] = Σ_{e ∈ s} weights[e] · src[rows[e]]`. Same result as
    /// `weighted_segment_sum(weights, gather_rows(src, rows), segments)` without
    /// the gathered intermediate.
    pub fn gather_weighted_segment_sum(
        &mut self,
        weights: Var,
        src: Var,
        rows: &Rc<Vec<usize>>,
        segments: &Rc<Segments>,
    ) -> Result<Var> {
        let (vw, vs) = (self.value(weights), self.value(src));
        if vw.cols() != 1 || vw.rows() != rows.len() || rows.len() != segments.len() {
            return Err(Error::shape(
                "gather_weighted_segment_sum",
                format!("weights {:?}, {} rows, {} segment ids", vw.shape(), rows.len(), segments.len()),
            ));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= vs.rows()) {
            return Err(Error::shape("gather_weighted_segment_sum", format!("row {bad} of {}", vs.rows())));
        }
        let mut out = Tensor::zeros(segments.num_segments(), vs.cols());
        for (s, (start, end)) in segments.ranges().enumerate() {
            let dst = out.row_mut(s);
            let w0 = vw.data()[start];
            for (o, x) in dst.iter_mut().zip(vs.row(rows[start])) {
                *o = w0 * x;
            }
            for e in start + 1..end {
                let w = vw.data()[e];
                for (o, x) in dst.iter_mut().zip(vs.row(rows[e])) {
                    *o += w * x;
                }
            }
        }
        self.push(
            "gather_weighted_segment_sum",
            out,
            Op::GatherWeightedSegmentSum(weights, src, rows.clone(), segments.clone()),
            &[weights, src],
        )
    }

    /// `out[i] = a[index[i]]`.
    pub fn gather_rows(&mut self, a: Var, index: &Rc<Vec<usize>>) -> Result<Var> {
        let va = self.value(a);
        let cols = va.cols();
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            if i >= va.rows() {
                return Err(Error::shape("gather_rows", format!("row {i} of {}", va.rows())));
            }
            data.extend_from_slice(va.row(i));
        }
        let out = Tensor::from_vec(index.len(), cols, data)?;
        self.push("gather_rows", out, Op::GatherRows(a, index.clone()), &[a])
    }

    /// `out[index[i]] += a[i]`, `out` has `rows` rows.
    pub fn scatter_add_rows(&mut self, a: Var, index: &Rc<Vec<usize>>, rows: usize) -> Result<Var> {
        let va = self.value(a);
        if index.len() != va.rows() {
            return Err(Error::shape("scatter_add_rows", format!("{} indices for {} rows", index.len(), va.rows())));
        }
        let mut out = Tensor::zeros(rows, va.cols());
        for (r, &i) in index.iter().enumerate() {
            if i >= rows {
                return Err(Error::shape("scatter_add_rows", format!("target row {i} of {rows}")));
            }
            for (o, x) in out.row_mut(i).iter_mut().zip(va.row(r)) {
                *o += x;
            }
        }
        self.push("scatter_add_rows", out, Op::ScatterAddRows(a, index.clone()), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push("sum", out, Op::Sum(a), &[a])
    }

    /// Mean binary cross-entropy over the rows where `mask` is set.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], mask: &[bool]) -> Result<Var> {
        let vl = self.value(logits);
        if vl.cols() != 1 || vl.rows() != targets.len() || targets.len() != mask.len() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("logits {:?}, {} targets, {} mask entries", vl.shape(), targets.len(), mask.len()),
            ));
        }
        let selected: Vec<(usize, f64)> = mask
            .iter()
            .zip(targets)
            .enumerate()
            .filter(|(_, (&m, _))| m)
            .map(|(i, (_, &y))| (i, y))
            .collect();
        if selected.is_empty() {
            return Err(Error::ContractError("bce_with_logits: mask selects no rows".into()));
        }
        let total: f64 = selected
            .iter()
            .map(|&(i, y)| {
                let z = vl.data()[i];
                z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
            })
            .sum();
        let out = Tensor::scalar(total / selected.len() as f64);
        self.push("bce_with_logits", out, Op::BceWithLogits(logits, Rc::new(selected)), &[logits])
    }

    /// `Σ ‖p‖²` over all given tensors.
    pub fn l2_norm_sq(&mut self, params: &[Var]) -> Result<Var> {
        let total: f64 = params
            .iter()
            .map(|p| self.value(*p).data().iter().map(|x| x * x).sum::<f64>())
            .sum();
        self.push("l2_norm_sq", Tensor::scalar(total), Op::L2NormSq(params.to_vec()), params)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::ContractError(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if let Some(id) = node.param {
                out.map.insert(id, g);
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
        }
        Ok(out)
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut send = |v: Var, delta: Tensor| {
            if !self.nodes[v.0].tracked {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_scaled(&delta, 1.0),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if self.is_tracked(*a) {
                    let mut ga = Tensor::zeros(m, k);
                    matmul_nt_into(g.data(), vb.data(), ga.data_mut(), m, n, k);
                    send(*a, ga);
                }
                if self.is_tracked(*b) {
                    let mut gb = Tensor::zeros(k, n);
                    matmul_tn_into(va.data(), g.data(), gb.data_mut(), m, k, n);
                    send(*b, gb);
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                send(*a, g.clone());
                let mut gr = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, x) in gr.data_mut().iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                send(*row, gr);
            }
            Op::Scale(a, c) => send(*a, g.map(|x| x * c)),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let cols = self.value(*p).cols();
                    let mut gp = Tensor::zeros(g.rows(), cols);
                    for r in 0..g.rows() {
                        gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                    }
                    offset += cols;
                    send(*p, gp);
                }
            }
            Op::SliceRows(a, start) => {
                let va = self.value(*a);
                let mut ga = Tensor::zeros(va.rows(), va.cols());
                let cols = va.cols();
                ga.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                send(*a, ga);
            }
            Op::Column(a, c) => {
                let va = self.value(*a);
                let mut ga = Tensor::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    ga.set(r, *c, g.data()[r]);
                }
                send(*a, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let va = self.value(*a);
                let data = va
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&x, &d)| if x > 0.0 { d } else { slope * d })
                    .collect();
                send(*a, Tensor::from_vec(va.rows(), va.cols(), data)?);
            }
            Op::Elu(a) => {
                let va = self.value(*a);
                let data = va
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&x, &d)| if x > 0.0 { d } else { d * x.exp() })
                    .collect();
                send(*a, Tensor::from_vec(va.rows(), va.cols(), data)?);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let data = y.data().iter().zip(g.data()).map(|(&s, &d)| d * s * (1.0 - s)).collect();
                send(*a, Tensor::from_vec(y.rows(), y.cols(), data)?);
            }
            Op::Dropout(a, mask) => {
                let data = g.data().iter().zip(mask.iter()).map(|(d, m)| d * m).collect();
                send(*a, Tensor::from_vec(g.rows(), g.cols(), data)?);
            }
            Op::SegmentSoftmax(a, segments) => {
                let y = &node.value;
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for (start, end) in segments.ranges() {
                    for c in 0..y.cols() {
                        let dot: f64 = (start..end).map(|r| y.get(r, c) * g.get(r, c)).sum();
                        for r in start..end {
                            ga.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                }
                send(*a, ga);
            }
            Op::SegmentNormalize(a, segments) => {
                let (va, y) = (self.value(*a), &node.value);
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for (start, end) in segments.ranges() {
                    for c in 0..y.cols() {
                        let total: f64 = (start..end).map(|r| va.get(r, c)).sum();
                        let dot: f64 = (start..end).map(|r| y.get(r, c) * g.get(r, c)).sum();
                        for r in start..end {
                            ga.set(r, c, (g.get(r, c) - dot) / total);
                        }
                    }
                }
                send(*a, ga);
            }
            Op::WeightedSegmentSum(w, v, segments) => {
                let (vw, vv) = (self.value(*w), self.value(*v));
                let track_w = self.is_tracked(*w);
                let track_v = self.is_tracked(*v);
                let mut gw = Tensor::zeros(vw.rows(), 1);
                let mut gv = Tensor::zeros(vv.rows(), vv.cols());
                for (s, (start, end)) in segments.ranges().enumerate() {
                    let gs = g.row(s);
                    for r in start..end {
                        if track_w {
                            gw.data_mut()[r] = gs.iter().zip(vv.row(r)).map(|(a, b)| a * b).sum();
                        }
                        if track_v {
                            let wr = vw.data()[r];
                            for (o, d) in gv.row_mut(r).iter_mut().zip(gs) {
                                *o = wr * d;
                            }
                        }
                    }
                }
                if track_w {
                    send(*w, gw);
                }
                if track_v {
                    send(*v, gv);
                }
            }
            Op::GatherWeightedSegmentSum(w, src, rows, segments) => {
                let (vw, vs) = (self.value(*w), self.value(*src));
                let track_w = self.is_tracked(*w);
                let track_s = self.is_tracked(*src);
                let mut gw = Tensor::zeros(vw.rows(), 1);
                let mut gs_src = Tensor::zeros(if track_s { vs.rows() } else { 0 }, vs.cols());
                for (s, (start, end)) in segments.ranges().enumerate() {
                    let gs = g.row(s);
                    for e in start..end {
                        if track_w {
                            gw.data_mut()[e] = gs.iter().zip(vs.row(rows[e])).map(|(a, b)| a * b).sum();
                        }
                        if track_s {
                            let we = vw.data()[e];
                            for (o, d) in gs_src.row_mut(rows[e]).iter_mut().zip(gs) {
                                *o += we * d;
                            }
                        }
                    }
                }
                if track_w {
                    send(*w, gw);
                }
                if track_s {
                    send(*src, gs_src);
                }
            }
            Op::GatherRows(a, index) => {
                let va = self.value(*a);
                let mut ga = Tensor::zeros(va.rows(), va.cols());
                for (r, &i) in index.iter().enumerate() {
                    for (o, d) in ga.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += d;
                    }
                }
                send(*a, ga);
            }
            Op::ScatterAddRows(a, index) => {
                let cols = g.cols();
                let mut data = Vec::with_capacity(index.len() * cols);
                for &i in index.iter() {
                    data.extend_from_slice(g.row(i));
                }
                send(*a, Tensor::from_vec(index.len(), cols, data)?);
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                send(*a, Tensor::filled(r, c, g.data()[0]));
            }
            Op::BceWithLogits(logits, selected) => {
                let vl = self.value(*logits);
                let scale = g.data()[0] / selected.len() as f64;
                let mut gl = Tensor::zeros(vl.rows(), 1);
                for &(i, y) in selected.iter() {
                    gl.data_mut()[i] = scale * (sigmoid(vl.data()[i]) - y);
                }
                send(*logits, gl);
            }
            Op::L2NormSq(params) => {
                let s = 2.0 * g.data()[0];
                for p in params {
                    send(*p, self.value(*p).map(|x| s * x));
                }
            }
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
