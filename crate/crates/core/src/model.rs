//! The cell graph classifier: stacked stages of adaptive multi-depth
//! graph convolution followed by soft clustering, a max readout per stage,
//! and a linear classifier over the concatenated readouts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, SparseId, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{CellGraph, FeatureSet, NormalizationStats, N_CLASSES};
use crate::tensor::Tensor;

/// How the per-depth embeddings of a stage are fused.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    /// Bi-LSTM over depth feeding a per-node softmax attention.
    #[default]
    Adaptive,
    /// Concatenate all depths and project back to the hidden width.
    Concat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Graph convolutions per stage.
    pub k_hops: usize,
    /// Embedding width of each stage; one entry per stage.
    pub hidden_dims: Vec<usize>,
    pub lstm_hidden: usize,
    /// Cluster count of each stage; one entry per stage, strictly decreasing.
    pub cluster_sizes: Vec<usize>,
    pub n_classes: usize,
    /// Dropout rate on every stage's input, in training mode.
    pub dropout: f64,
    #[serde(default)]
    pub features: FeatureSet,
    #[serde(default)]
    pub fusion: FusionKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            k_hops: 3,
            hidden_dims: vec![32, 32],
            lstm_hidden: 16,
            cluster_sizes: vec![32, 8],
            n_classes: N_CLASSES,
            dropout: 0.2,
            features: FeatureSet::default(),
            fusion: FusionKind::default(),
        }
    }
}

impl ModelConfig {
    pub fn n_stages(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("model config: {msg}")));
        if self.cluster_sizes.is_empty() {
            return bad("need at least one stage".into());
        }
        if self.hidden_dims.len() != self.cluster_sizes.len() {
            return bad(format!(
                "{} hidden widths for {} stages",
                self.hidden_dims.len(),
                self.cluster_sizes.len()
            ));
        }
        if self.k_hops == 0 || self.lstm_hidden == 0 || self.n_classes == 0 {
            return bad("k_hops, lstm_hidden and n_classes must be positive".into());
        }
        if self.hidden_dims.contains(&0) || self.cluster_sizes.contains(&0) {
            return bad("widths and cluster sizes must be positive".into());
        }
        if self.cluster_sizes.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("cluster sizes {:?} must strictly decrease", self.cluster_sizes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    fn stage_input_dim(&self, stage: usize) -> usize {
        if stage == 0 {
            self.features.dim()
        } else {
            self.hidden_dims[stage - 1]
        }
    }

    /// Every parameter as `(name, rows, cols)`, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        let k = self.k_hops;
        let lh = self.lstm_hidden;
        for (s, (&h, &c)) in self.hidden_dims.iter().zip(&self.cluster_sizes).enumerate() {
            let d_in = self.stage_input_dim(s);
            for branch in ["embed", "assign"] {
                for l in 0..k {
                    out.push((format!("s{s}.{branch}.conv{l}"), if l == 0 { d_in } else { h }, h));
                }
            }
            match self.fusion {
                FusionKind::Adaptive => {
                    for dir in ["fwd", "bwd"] {
                        out.push((format!("s{s}.lstm.{dir}.w_ih"), h, 4 * lh));
                        out.push((format!("s{s}.lstm.{dir}.w_hh"), lh, 4 * lh));
                        out.push((format!("s{s}.lstm.{dir}.b"), 1, 4 * lh));
                    }
                    out.push((format!("s{s}.attn.w"), 2 * lh, 1));
                    out.push((format!("s{s}.attn.b"), 1, 1));
                }
                FusionKind::Concat => {
                    out.push((format!("s{s}.fuse.w"), k * h, h));
                    out.push((format!("s{s}.fuse.b"), 1, h));
                }
            }
            out.push((format!("s{s}.assign.w"), k * h, c));
            out.push((format!("s{s}.assign.b"), 1, c));
        }
        let readout: usize = self.hidden_dims.iter().sum();
        out.push(("classifier.w".into(), readout, self.n_classes));
        out.push(("classifier.b".into(), 1, self.n_classes));
        out
    }

    /// Scalar parameter count implied by the configuration.
    pub fn count_params(&self) -> usize {
        self.param_shapes().iter().map(|(_, r, c)| r * c).sum()
    }
}

/// Number of scalar parameters held by `store`.
pub fn count_params(store: &ParamStore) -> usize {
    store.count_scalars()
}

#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug)]
enum Fusion {
    Adaptive {
        fwd: LstmParams,
        bwd: LstmParams,
        attn_w: ParamId,
        attn_b: ParamId,
    },
    Concat {
        w: ParamId,
        b: ParamId,
    },
}

#[derive(Clone, Debug)]
struct StageParams {
    embed: Vec<ParamId>,
    assign: Vec<ParamId>,
    fusion: Fusion,
    assign_w: ParamId,
    assign_b: ParamId,
}

/// Propagation operator of a stage: the sparse input graph for the first
/// stage, a dense coarsened matrix afterwards.
#[derive(Clone, Copy, Debug)]
pub enum Operator {
    Sparse(SparseId),
    Dense(Var),
}

impl Operator {
    fn propagate(self, tape: &mut Tape, h: Var) -> Result<Var> {
        match self {
            Operator::Sparse(a) => tape.spmm(a, h),
            Operator::Dense(a) => tape.matmul(a, h),
        }
    }
}

/// `ReLU((A' H) W)`.
pub fn graph_conv(tape: &mut Tape, a: Operator, h: Var, w: Var) -> Result<Var> {
    let ah = a.propagate(tape, h)?;
    let z = tape.matmul(ah, w)?;
    tape.relu(z)
}

fn lstm_direction(tape: &mut Tape, seq: &[Var], p: [Var; 3], hidden: usize) -> Result<Vec<Var>> {
    let [w_ih, w_hh, b] = p;
    let mut out = Vec::with_capacity(seq.len());
    let mut state: Option<(Var, Var)> = None;
    for &x in seq {
        let xw = tape.matmul(x, w_ih)?;
        let pre = match state {
            Some((h, _)) => {
                let hw = tape.matmul(h, w_hh)?;
                tape.add(xw, hw)?
            }
            None => xw,
        };
        let gates = tape.add_row(pre, b)?;
        let i_raw = tape.slice_cols(gates, 0, hidden)?;
        let f_raw = tape.slice_cols(gates, hidden, hidden)?;
        let g_raw = tape.slice_cols(gates, 2 * hidden, hidden)?;
        let o_raw = tape.slice_cols(gates, 3 * hidden, hidden)?;
        let i = tape.sigmoid(i_raw)?;
        let g = tape.tanh(g_raw)?;
        let o = tape.sigmoid(o_raw)?;
        let ig = tape.mul(i, g)?;
        let c = match state {
            Some((_, c_prev)) => {
                let f = tape.sigmoid(f_raw)?;
                let fc = tape.mul(f, c_prev)?;
                tape.add(fc, ig)?
            }
            None => ig,
        };
        let tc = tape.tanh(c)?;
        let h = tape.mul(o, tc)?;
        out.push(h);
        state = Some((h, c));
    }
    Ok(out)
}

/// Bidirectional LSTM run independently per node over the depth sequence.
/// Output `l` is `[forward_l | backward_l]`.
pub fn bilstm_over_depth(
    tape: &mut Tape,
    store: &ParamStore,
    seq: &[Var],
    fwd: LstmParams,
    bwd: LstmParams,
) -> Result<Vec<Var>> {
    if seq.is_empty() {
        return Err(Error::invalid("empty depth sequence"));
    }
    let hidden = store.value(fwd.w_hh).rows();
    let load = |tape: &mut Tape, p: LstmParams| -> Result<[Var; 3]> {
        Ok([
            tape.param(store, p.w_ih)?,
            tape.param(store, p.w_hh)?,
            tape.param(store, p.b)?,
        ])
    };
    let pf = load(tape, fwd)?;
    let pb = load(tape, bwd)?;
    let forward = lstm_direction(tape, seq, pf, hidden)?;
    let reversed: Vec<Var> = seq.iter().rev().copied().collect();
    let mut backward = lstm_direction(tape, &reversed, pb, hidden)?;
    backward.reverse();
    forward
        .into_iter()
        .zip(backward)
        .map(|(f, b)| tape.concat_cols(&[f, b]))
        .collect()
}

/// Per-depth attention scores (`n x k`, rows sum to 1) and the fused embedding.
pub fn attention_fuse(
    tape: &mut Tape,
    depths: &[Var],
    lstm_out: &[Var],
    attn_w: Var,
    attn_b: Var,
) -> Result<(Var, Var)> {
    let mut logits = Vec::with_capacity(lstm_out.len());
    for &z in lstm_out {
        let s = tape.matmul(z, attn_w)?;
        logits.push(tape.add_row(s, attn_b)?);
    }
    let joined = tape.concat_cols(&logits)?;
    let scores = tape.softmax_rows(joined)?;
    let mut fused = None;
    for (l, &h) in depths.iter().enumerate() {
        let s = tape.slice_cols(scores, l, 1)?;
        let term = tape.mul_col(h, s)?;
        fused = Some(match fused {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    Ok((scores, fused.expect("at least one depth")))
}

/// `H = Sᵀ M` and `A = Sᵀ A' S`.
pub fn coarsen(tape: &mut Tape, m: Var, a: Operator, s: Var) -> Result<(Var, Var)> {
    let st = tape.transpose(s)?;
    let h = tape.matmul(st, m)?;
    let as_ = a.propagate(tape, s)?;
    let a_next = tape.matmul(st, as_)?;
    Ok((h, a_next))
}

/// Tape handles for one stage of a forward pass.
#[derive(Clone, Debug)]
pub struct StageOutput {
    /// Fused node embeddings `M`.
    pub embedding: Var,
    /// Soft assignment `S`, rows summing to 1.
    pub assignment: Var,
    /// Per-node depth attention, when the stage uses adaptive fusion.
    pub attention: Option<Var>,
    /// Cluster features `SᵀM`.
    pub pooled: Var,
    /// Cluster adjacency `SᵀA'S`, before re-weighting.
    pub adjacency: Var,
    pub readout: Var,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub logits: Var,
    pub stages: Vec<StageOutput>,
}

pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    stages: Vec<StageParams>,
    classifier: (ParamId, ParamId),
}

impl Model {
    /// Freshly initialized model: Glorot-uniform weights, zero biases, and a
    /// forget-gate bias of one.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for (name, rows, cols) in config.param_shapes() {
            let value = if name.ends_with(".b") {
                let mut b = Tensor::zeros(rows, cols);
                if name.contains(".lstm.") {
                    let h = cols / 4;
                    b.data_mut()[h..2 * h].fill(1.0);
                }
                b
            } else {
                let bound = (6.0 / (rows + cols) as f64).sqrt();
                Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
            };
            store.insert(name, value)?;
        }
        Self::from_params(config, store)
    }

    /// Wraps an existing parameter store, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let shapes = config.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::invalid(format!(
                "model expects {} parameters, store holds {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, r, c), id) in shapes.iter().zip(params.ids()) {
            if params.name(id) != name || params.value(id).shape() != (*r, *c) {
                return Err(Error::invalid(format!(
                    "parameter {:?} {:?} does not match expected {name:?} {:?}",
                    params.name(id),
                    params.value(id).shape(),
                    (r, c)
                )));
            }
        }
        let id = |name: String| params.id(&name).expect("checked above");
        let lstm = |s: usize, dir: &str| LstmParams {
            w_ih: id(format!("s{s}.lstm.{dir}.w_ih")),
            w_hh: id(format!("s{s}.lstm.{dir}.w_hh")),
            b: id(format!("s{s}.lstm.{dir}.b")),
        };
        let stages = (0..config.n_stages())
            .map(|s| StageParams {
                embed: (0..config.k_hops).map(|l| id(format!("s{s}.embed.conv{l}"))).collect(),
                assign: (0..config.k_hops).map(|l| id(format!("s{s}.assign.conv{l}"))).collect(),
                fusion: match config.fusion {
                    FusionKind::Adaptive => Fusion::Adaptive {
                        fwd: lstm(s, "fwd"),
                        bwd: lstm(s, "bwd"),
                        attn_w: id(format!("s{s}.attn.w")),
                        attn_b: id(format!("s{s}.attn.b")),
                    },
                    FusionKind::Concat => Fusion::Concat {
                        w: id(format!("s{s}.fuse.w")),
                        b: id(format!("s{s}.fuse.b")),
                    },
                },
                assign_w: id(format!("s{s}.assign.w")),
                assign_b: id(format!("s{s}.assign.b")),
            })
            .collect();
        let classifier = (id("classifier.w".into()), id("classifier.b".into()));
        Ok(Model {
            config,
            params,
            stages,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    fn conv_stack(&self, tape: &mut Tape, a: Operator, x: Var, weights: &[ParamId]) -> Result<Vec<Var>> {
        let mut h = x;
        let mut depths = Vec::with_capacity(weights.len());
        for &w in weights {
            let w = tape.param(&self.params, w)?;
            h = graph_conv(tape, a, h, w)?;
            depths.push(h);
        }
        Ok(depths)
    }

    fn stage(&self, tape: &mut Tape, p: &StageParams, x: Var, a: Operator) -> Result<StageOutput> {
        let depths = self.conv_stack(tape, a, x, &p.embed)?;
        let (embedding, attention) = match p.fusion {
            Fusion::Adaptive {
                fwd,
                bwd,
                attn_w,
                attn_b,
            } => {
                let lstm_out = bilstm_over_depth(tape, &self.params, &depths, fwd, bwd)?;
                let w = tape.param(&self.params, attn_w)?;
                let b = tape.param(&self.params, attn_b)?;
                let (scores, m) = attention_fuse(tape, &depths, &lstm_out, w, b)?;
                (m, Some(scores))
            }
            Fusion::Concat { w, b } => {
                let joined = tape.concat_cols(&depths)?;
                let w = tape.param(&self.params, w)?;
                let b = tape.param(&self.params, b)?;
                let z = tape.matmul(joined, w)?;
                let z = tape.add_row(z, b)?;
                (tape.relu(z)?, None)
            }
        };
        let assign_depths = self.conv_stack(tape, a, x, &p.assign)?;
        let joined = tape.concat_cols(&assign_depths)?;
        let w = tape.param(&self.params, p.assign_w)?;
        let b = tape.param(&self.params, p.assign_b)?;
        let z = tape.matmul(joined, w)?;
        let z = tape.add_row(z, b)?;
        let assignment = tape.softmax_rows(z)?;
        let (pooled, adjacency) = coarsen(tape, embedding, a, assignment)?;
        let readout = tape.max_over_rows(pooled)?;
        Ok(StageOutput {
            embedding,
            assignment,
            attention,
            pooled,
            adjacency,
            readout,
        })
    }

    /// Records the forward pass for already normalized node inputs `x`
    /// (`n x features.dim()`) on the graph's propagation operator. `p` is the
    /// neighbour share used to re-weight coarsened adjacencies.
    pub fn forward(&self, tape: &mut Tape, x: &Tensor, graph: &CellGraph, mode: Mode<'_>) -> Result<ForwardOutput> {
        if x.rows() == 0 || graph.n() == 0 {
            return Err(Error::EmptyGraph);
        }
        if x.rows() != graph.n() || x.cols() != self.config.features.dim() {
            return Err(Error::Shape {
                op: "forward",
                lhs: x.shape(),
                rhs: (graph.n(), self.config.features.dim()),
            });
        }
        let p = graph.config.edges.p;
        let (mut rng, training) = match mode {
            Mode::Train(rng) => (Some(rng), true),
            Mode::Eval => (None, false),
        };
        let mut h = tape.constant(x.clone())?;
        let mut a = Operator::Sparse(tape.sparse(graph.operator.clone()));
        let mut stages = Vec::with_capacity(self.stages.len());
        for (s, params) in self.stages.iter().enumerate() {
            if let Some(rng) = rng.as_deref_mut() {
                h = tape.dropout(h, self.config.dropout, training, rng)?;
            }
            let out = self.stage(tape, params, h, a)?;
            if s + 1 < self.stages.len() {
                h = out.pooled;
                a = Operator::Dense(tape.reweight(out.adjacency, p)?);
            }
            stages.push(out);
        }
        let readouts: Vec<Var> = stages.iter().map(|s| s.readout).collect();
        let joined = tape.concat_cols(&readouts)?;
        let w = tape.param(&self.params, self.classifier.0)?;
        let b = tape.param(&self.params, self.classifier.1)?;
        let z = tape.matmul(joined, w)?;
        let logits = tape.add_row(z, b)?;
        Ok(ForwardOutput { logits, stages })
    }

    /// Eval-mode logits for a raw graph under the given normalization.
    pub fn logits(&self, graph: &CellGraph, stats: &NormalizationStats) -> Result<Tensor> {
        let x = stats.apply(graph, self.config.features);
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, &x, graph, Mode::Eval)?;
        Ok(tape.value(out.logits).clone())
    }

    /// Eval-mode class probabilities.
    pub fn predict_proba(&self, graph: &CellGraph, stats: &NormalizationStats) -> Result<Vec<f64>> {
        let logits = self.logits(graph, stats)?;
        let mut probs = logits.row(0).to_vec();
        crate::autodiff::softmax_in_place(&mut probs);
        Ok(probs)
    }

    /// Eval-mode assignment matrices, one per stage.
    pub fn assignments(&self, graph: &CellGraph, stats: &NormalizationStats) -> Result<Vec<Tensor>> {
        let x = stats.apply(graph, self.config.features);
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, &x, graph, Mode::Eval)?;
        Ok(out.stages.iter().map(|s| tape.value(s.assignment).clone()).collect())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Adjacency, GraphConfig};

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            k_hops: 2,
            hidden_dims: vec![6, 5],
            lstm_hidden: 3,
            cluster_sizes: vec![4, 2],
            ..ModelConfig::default()
        }
    }

    fn ring_graph(n: usize) -> CellGraph {
        let coords = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64 * std::f64::consts::TAU;
                [10.0 * t.cos() + i as f64 * 0.1, 10.0 * t.sin()]
            })
            .collect();
        let descriptors = (0..n)
            .map(|i| std::array::from_fn(|k| ((i * 5 + k * 3) % 7) as f64 - 3.0))
            .collect();
        let adj = Adjacency::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap();
        CellGraph::new(
            coords,
            descriptors,
            adj,
            Some(crate::graph::Grade::Normal),
            GraphConfig::default(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn graph_conv_identity() {
        let mut tape = Tape::new();
        let a = Operator::Sparse(tape.sparse(crate::tensor::CsrMatrix::from_rows(
            2,
            vec![vec![(0, 1.0)], vec![(1, 1.0)]],
        )));
        let h = tape.constant(t(&[&[1.0, 2.0], &[0.0, 3.0]])).unwrap();
        let w = tape.constant(Tensor::identity(2)).unwrap();
        let out = graph_conv(&mut tape, a, h, w).unwrap();
        assert_eq!(tape.value(out), tape.value(h));
    }

    #[test]
    fn graph_conv_two_node_path() {
        let adj = Adjacency::from_edges(2, [(0, 1)]).unwrap();
        let mut tape = Tape::new();
        let a = Operator::Sparse(tape.sparse(crate::graph::reweight(&adj, 0.4)));
        let h = tape.constant(t(&[&[1.0, -2.0], &[3.0, 0.5]])).unwrap();
        let w = tape.constant(t(&[&[1.0, 0.5], &[-1.0, 2.0]])).unwrap();
        let out = graph_conv(&mut tape, a, h, w).unwrap();
        let mixed = t(&[&[0.6 + 1.2, -1.2 + 0.2], &[0.4 + 1.8, -0.8 + 0.3]]);
        let expected = mixed
            .matmul(&t(&[&[1.0, 0.5], &[-1.0, 2.0]]))
            .unwrap()
            .map(|v| v.max(0.0));
        assert!(tape.value(out).max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn graph_conv_complete_graph_identical_rows() {
        let adj = Adjacency::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        let mut tape = Tape::new();
        let a = Operator::Sparse(tape.sparse(crate::graph::reweight(&adj, 0.4)));
        let h = tape.constant(Tensor::filled(4, 3, 0.7)).unwrap();
        let w = tape
            .constant(Tensor::from_fn(3, 2, |r, c| (r + c) as f64 - 1.0))
            .unwrap();
        let out = graph_conv(&mut tape, a, h, w).unwrap();
        let v = tape.value(out);
        assert!((1..4).all(|r| v.row(r) == v.row(0)));
    }

    fn zero_lstm(store: &mut ParamStore, prefix: &str, d: usize, h: usize) -> LstmParams {
        LstmParams {
            w_ih: store.insert(format!("{prefix}.w_ih"), Tensor::zeros(d, 4 * h)).unwrap(),
            w_hh: store.insert(format!("{prefix}.w_hh"), Tensor::zeros(h, 4 * h)).unwrap(),
            b: store.insert(format!("{prefix}.b"), Tensor::zeros(1, 4 * h)).unwrap(),
        }
    }

    #[test]
    fn bilstm_zero_weights_stay_zero() {
        let mut store = ParamStore::new();
        let fwd = zero_lstm(&mut store, "f", 3, 2);
        let bwd = zero_lstm(&mut store, "b", 3, 2);
        let mut tape = Tape::new();
        let seq: Vec<Var> = (0..3)
            .map(|l| tape.constant(Tensor::filled(4, 3, l as f64 + 1.0)).unwrap())
            .collect();
        let out = bilstm_over_depth(&mut tape, &store, &seq, fwd, bwd).unwrap();
        assert_eq!(out.len(), 3);
        for v in out {
            assert_eq!(tape.value(v), &Tensor::zeros(4, 4));
        }
    }

    #[test]
    fn bilstm_single_step_and_node_independence() {
        let config = small_config();
        let model = Model::new(config, 3).unwrap();
        let Fusion::Adaptive { fwd, bwd, .. } = model.stages[0].fusion else {
            unreachable!()
        };
        let x = Tensor::from_fn(5, 6, |r, c| ((r * 3 + c) % 5) as f64 * 0.3 - 0.6);
        let perm = [3, 0, 4, 1, 2];
        let mut px = Tensor::zeros(5, 6);
        for (i, &p) in perm.iter().enumerate() {
            px.row_mut(p).copy_from_slice(x.row(i));
        }
        let run = |x: &Tensor, k: usize| {
            let mut tape = Tape::new();
            let seq: Vec<Var> = (0..k)
                .map(|l| tape.constant(x.scale(l as f64 + 1.0)).unwrap())
                .collect();
            let out = bilstm_over_depth(&mut tape, model.params(), &seq, fwd, bwd).unwrap();
            out.iter().map(|&v| tape.value(v).clone()).collect::<Vec<_>>()
        };
        let single = run(&x, 1);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].cols(), 6);
        let (a, b) = (run(&x, 3), run(&px, 3));
        for (oa, ob) in a.iter().zip(&b) {
            for (i, &p) in perm.iter().enumerate() {
                assert_eq!(oa.row(i), ob.row(p));
            }
        }
    }

    #[test]
    fn attention_single_depth_and_identical_depths() {
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::from_fn(4, 3, |r, c| (r * 3 + c) as f64)).unwrap();
        let z = tape
            .constant(Tensor::from_fn(4, 2, |r, c| r as f64 - c as f64))
            .unwrap();
        let w = tape.constant(t(&[&[2.0], &[-1.0]])).unwrap();
        let b = tape.constant(Tensor::scalar(0.3)).unwrap();
        let (s, m) = attention_fuse(&mut tape, &[h], &[z], w, b).unwrap();
        assert_eq!(tape.value(s), &Tensor::filled(4, 1, 1.0));
        assert_eq!(tape.value(m), tape.value(h));

        let z2 = tape
            .constant(Tensor::from_fn(4, 2, |r, c| (r * c) as f64 * 0.7))
            .unwrap();
        let z3 = tape.constant(Tensor::from_fn(4, 2, |r, _| -(r as f64))).unwrap();
        let (s, m) = attention_fuse(&mut tape, &[h, h, h], &[z, z2, z3], w, b).unwrap();
        let sv = tape.value(s);
        for r in 0..4 {
            assert!((sv.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(tape.value(m).max_abs_diff(tape.value(h)) < 1e-12);
    }

    #[test]
    fn coarsen_identity_assignment() {
        let g = ring_graph(6);
        let mut tape = Tape::new();
        let a = Operator::Sparse(tape.sparse(g.operator.clone()));
        let m = tape
            .constant(Tensor::from_fn(6, 3, |r, c| (r as f64 - 2.5) * (c as f64 + 0.1)))
            .unwrap();
        let s = tape.constant(Tensor::identity(6)).unwrap();
        let (h, a_next) = coarsen(&mut tape, m, a, s).unwrap();
        assert_eq!(tape.value(h), tape.value(m));
        assert_eq!(tape.value(a_next), &g.operator.to_dense());
    }

    #[test]
    fn coarsen_single_cluster() {
        let g = ring_graph(5);
        let mut tape = Tape::new();
        let a = Operator::Sparse(tape.sparse(g.operator.clone()));
        let mv = Tensor::from_fn(5, 2, |r, c| (r * 7 + c) as f64 / 3.0);
        let m = tape.constant(mv.clone()).unwrap();
        let s = tape.constant(Tensor::filled(5, 1, 1.0)).unwrap();
        let (h, a_next) = coarsen(&mut tape, m, a, s).unwrap();
        for c in 0..2 {
            let col: f64 = (0..5).map(|r| mv.get(r, c)).sum();
            assert_eq!(tape.value(h).get(0, c), col);
        }
        assert!((tape.value(a_next).item().unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation_and_counts() {
        assert!(ModelConfig::default().validate().is_ok());
        let mut c = ModelConfig {
            cluster_sizes: vec![8, 8],
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
        c = ModelConfig {
            hidden_dims: vec![32],
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
        c = ModelConfig {
            k_hops: 0,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());

        let base = ModelConfig::default();
        let model = Model::new(base.clone(), 0).unwrap();
        assert_eq!(count_params(model.params()), base.count_params());
        let wider = ModelConfig {
            hidden_dims: vec![64, 64],
            ..base.clone()
        };
        assert!(wider.count_params() > base.count_params());
    }

    #[test]
    fn default_parameter_count_is_stable() {
        assert_eq!(ModelConfig::default().count_params(), 28_077);
    }

    #[test]
    fn forward_shapes_and_invariants() {
        let g = ring_graph(9);
        let model = Model::new(small_config(), 1).unwrap();
        let x = NormalizationStats::fit([&g]).unwrap().apply(&g, FeatureSet::default());
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &x, &g, Mode::Eval).unwrap();
        assert_eq!(tape.value(out.logits).shape(), (1, 3));
        for (i, (stage, c)) in out.stages.iter().zip([4, 2]).enumerate() {
            let s = tape.value(stage.assignment);
            assert_eq!(s.cols(), c);
            for r in 0..s.rows() {
                assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            let a = tape.value(stage.adjacency);
            if i == 0 {
                // Later stages propagate with the re-weighted, row-normalized operator.
                assert!(a.max_abs_diff(&a.transpose()) < 1e-12);
            }
            assert!(a.data().iter().all(|&v| v >= 0.0));
        }
        let again = model.logits(&g, &NormalizationStats::fit([&g]).unwrap()).unwrap();
        assert_eq!(&again, tape.value(out.logits));
    }

    #[test]
    fn zero_classifier_gives_uniform_probabilities() {
        let g = ring_graph(7);
        let mut model = Model::new(small_config(), 2).unwrap();
        let (w, b) = model.classifier;
        model.params_mut().value_mut(w).fill(0.0);
        model.params_mut().value_mut(b).fill(0.0);
        let probs = model.predict_proba(&g, &NormalizationStats::identity()).unwrap();
        assert!(probs.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn from_params_rejects_mismatch() {
        let model = Model::new(small_config(), 0).unwrap();
        let store = model.into_params();
        assert!(Model::from_params(ModelConfig::default(), store.clone()).is_err());
        assert!(Model::from_params(small_config(), store).is_ok());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
