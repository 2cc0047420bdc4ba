//! Link-stealing attack specifications and their multi-input MLP classifiers.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::defense::{apply_defended_query, DefenseConfig, QueryResponse};
use crate::error::{Error, Result};
use crate::features::{
    graph_block, node_attr_block, posterior_pair_block, transfer_block, BlockKind, FeatureBlock, QueryContext,
};
use crate::gnn::GnnModel;
use crate::graph::{Graph, Hop, NodeId};
use crate::nn::{cosine_anneal, BoundParams, Optimizer, ParamId, ParamSet, Tape, Tensor, Var};
use crate::rng::StageRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackId {
    Baseline0,
    Baseline1,
    Baseline2,
    Attack0,
    Attack1,
    Attack2,
    Attack3,
    Attack4,
    Attack5,
    Attack6,
    Attack7,
    Attack8,
    Attack9,
}

impl AttackId {
    pub const ALL: [AttackId; 13] = [
        AttackId::Baseline0,
        AttackId::Baseline1,
        AttackId::Baseline2,
        AttackId::Attack0,
        AttackId::Attack1,
        AttackId::Attack2,
        AttackId::Attack3,
        AttackId::Attack4,
        AttackId::Attack5,
        AttackId::Attack6,
        AttackId::Attack7,
        AttackId::Attack8,
        AttackId::Attack9,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackId::Baseline0 => "b0",
            AttackId::Baseline1 => "b1",
            AttackId::Baseline2 => "b2",
            AttackId::Attack0 => "a0",
            AttackId::Attack1 => "a1",
            AttackId::Attack2 => "a2",
            AttackId::Attack3 => "a3",
            AttackId::Attack4 => "a4",
            AttackId::Attack5 => "a5",
            AttackId::Attack6 => "a6",
            AttackId::Attack7 => "a7",
            AttackId::Attack8 => "a8",
            AttackId::Attack9 => "a9",
        }
    }

    pub fn spec(self) -> AttackSpec {
        use AttackId::*;
        let (hop, posteriors, node_attrs, graph_feats) = match self {
            Baseline0 => (None, false, true, false),
            Baseline1 => (None, false, false, true),
            Baseline2 => (None, false, true, true),
            Attack0 => (Some(Hop::Zero), true, false, false),
            Attack1 => (Some(Hop::One), true, false, false),
            Attack2 => (Some(Hop::Two), true, false, false),
            Attack3 => (Some(Hop::Zero), true, true, false),
            Attack4 => (Some(Hop::One), true, true, false),
            Attack5 => (Some(Hop::Two), true, true, false),
            Attack6 => (Some(Hop::One), true, false, true),
            Attack7 => (Some(Hop::Two), true, false, true),
            Attack8 => (Some(Hop::One), true, true, true),
            Attack9 => (Some(Hop::Two), true, true, true),
        };
        AttackSpec {
            id: self,
            hop,
            posteriors,
            node_attrs,
            graph_feats,
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, AttackId::Baseline0 | AttackId::Baseline1 | AttackId::Baseline2)
    }
}

impl fmt::Display for AttackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        AttackId::ALL
            .into_iter()
            .find(|a| a.name() == lower)
            .ok_or_else(|| Error::invalid(format!("unknown attack `{s}` (expected b0-b2 or a0-a9)")))
    }
}

/// Which inputs an attack uses and at what query depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttackSpec {
    pub id: AttackId,
    /// Query depth for posteriors; `None` for attacks that never query.
    pub hop: Option<Hop>,
    pub posteriors: bool,
    pub node_attrs: bool,
    pub graph_feats: bool,
}

impl AttackSpec {
    /// Input kinds in the order the model's branches consume them.
    pub fn kinds(&self) -> Vec<BlockKind> {
        let mut kinds = Vec::new();
        if self.posteriors {
            kinds.push(BlockKind::Posterior);
        }
        if self.node_attrs {
            kinds.push(BlockKind::NodeAttr);
        }
        if self.graph_feats {
            kinds.push(BlockKind::Graph);
        }
        kinds
    }

    /// Hidden-layer widths of each branch, in [`AttackSpec::kinds`] order.
    pub fn branch_widths(&self) -> Vec<Vec<usize>> {
        match (self.posteriors, self.node_attrs, self.graph_feats) {
            (true, false, false) | (false, true, false) => vec![vec![128, 32]],
            (false, false, true) => vec![vec![16]],
            (false, true, true) => vec![vec![256, 64, 8], vec![1]],
            (true, true, false) => vec![vec![64, 16], vec![128, 64, 16]],
            (true, false, true) => vec![vec![128, 64, 16], vec![16, 4]],
            (true, true, true) => vec![vec![128, 64, 16], vec![128, 64, 16], vec![4]],
            (false, false, false) => Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.posteriors || self.node_attrs || self.graph_feats) {
            return Err(Error::invalid(format!("{} uses no inputs", self.id)));
        }
        if self.posteriors && self.hop.is_none() {
            return Err(Error::invalid(format!("{} queries posteriors without a hop", self.id)));
        }
        if self.graph_feats && self.hop == Some(Hop::Zero) {
            return Err(Error::invalid(format!(
                "{}: graph features need at least a 1-hop query",
                self.id
            )));
        }
        Ok(())
    }
}

/// Hidden widths of a posterior-only attack with `depth` linear layers in total.
pub fn posterior_depth_widths(depth: usize) -> Result<Vec<usize>> {
    match depth {
        2 => Ok(vec![128]),
        3 => Ok(vec![128, 32]),
        4 => Ok(vec![128, 64, 32]),
        5 => Ok(vec![256, 128, 64, 32]),
        d => Err(Error::invalid(format!("attack depth must be 2 to 5, got {d}"))),
    }
}

/// How queried posteriors become the posterior-slot input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PosteriorEncoding {
    /// The four pairwise operations over the two posteriors.
    #[default]
    Pairwise,
    /// Class-count independent similarity features, for shadow models
    /// trained on a different dataset.
    Transfer,
}

/// Subset of the four pairwise operations kept in posterior blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpSet(pub [bool; 4]);

impl Default for OpSet {
    fn default() -> Self {
        OpSet([true; 4])
    }
}

impl OpSet {
    pub fn is_all(&self) -> bool {
        self.0 == [true; 4]
    }

    /// Keeps only the selected op sub-blocks of a full pairwise block.
    pub fn select(&self, block: FeatureBlock) -> Result<FeatureBlock> {
        if self.is_all() {
            return Ok(block);
        }
        if !self.0.iter().any(|&b| b) {
            return Err(Error::invalid("empty pairwise-op selection"));
        }
        if block.len() % 4 != 0 {
            return Err(Error::shape(format!(
                "posterior block of length {} is not 4 ops wide",
                block.len()
            )));
        }
        let width = block.len() / 4;
        let values = block
            .values
            .chunks(width)
            .zip(self.0)
            .filter(|(_, keep)| *keep)
            .flat_map(|(chunk, _)| chunk.iter().copied())
            .collect();
        Ok(FeatureBlock {
            kind: block.kind,
            values,
        })
    }
}

impl FromStr for OpSet {
    type Err = Error;

    /// `all`, or a comma list of `hadamard`, `average`, `wl1`, `wl2`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(OpSet::default());
        }
        let mut set = [false; 4];
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let i = crate::features::PAIRWISE_OPS
                .iter()
                .position(|op| op.eq_ignore_ascii_case(part))
                .ok_or_else(|| Error::invalid(format!("unknown pairwise op `{part}`")))?;
            set[i] = true;
        }
        if !set.iter().any(|&b| b) {
            return Err(Error::invalid("empty pairwise-op selection"));
        }
        Ok(OpSet(set))
    }
}

/// Everything that shapes how a pair is queried and encoded.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QueryOptions {
    pub defense: DefenseConfig,
    pub encoding: PosteriorEncoding,
    pub ops: OpSet,
}

/// Posterior-slot block for one pair at one depth.
pub fn posterior_slot(model: &GnnModel, ctx: &QueryContext, opts: &QueryOptions) -> Result<FeatureBlock> {
    match apply_defended_query(model, ctx, &opts.defense)? {
        QueryResponse::LabelFeature(values) => Ok(FeatureBlock {
            kind: BlockKind::Posterior,
            values,
        }),
        QueryResponse::Posteriors(pu, pv) => match opts.encoding {
            PosteriorEncoding::Pairwise => opts.ops.select(posterior_pair_block(&pu, &pv)?),
            PosteriorEncoding::Transfer => {
                let mut block = transfer_block(&pu, &pv)?;
                block.kind = BlockKind::Posterior;
                Ok(block)
            }
        },
    }
}

/// Builds one block per active input of `spec` for the pair `(u, v)` of `g`.
pub fn assemble_features(
    spec: &AttackSpec,
    model: &GnnModel,
    g: &Graph,
    u: NodeId,
    v: NodeId,
    opts: &QueryOptions,
) -> Result<Vec<FeatureBlock>> {
    spec.validate()?;
    let mut blocks = Vec::with_capacity(3);
    if spec.posteriors {
        let hop = spec.hop.expect("validated");
        blocks.push(posterior_slot(model, &QueryContext::new(g, u, v, hop)?, opts)?);
    }
    if spec.node_attrs {
        g.check_node(u)?;
        g.check_node(v)?;
        blocks.push(node_attr_block(g.feature_row(u), g.feature_row(v))?);
    }
    if spec.graph_feats {
        blocks.push(graph_block(&QueryContext::new(g, u, v, Hop::One)?)?);
    }
    Ok(blocks)
}

/// Hyper-parameters of attack-model training.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// Overrides the depth of posterior-only attacks (total linear layers).
    pub posterior_depth: Option<usize>,
}

impl Default for AttackTrainConfig {
    fn default() -> Self {
        AttackTrainConfig {
            epochs: 200,
            learning_rate: 1e-3,
            dropout: 0.5,
            batch_size: None,
            posterior_depth: None,
        }
    }
}

/// Per-column affine map to zero mean and unit variance, fit on training rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Tensor) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mean: Vec<f64> = (0..d)
            .map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n.max(1) as f64)
            .collect();
        let scale = (0..d)
            .map(|j| {
                let var = (0..n).map(|i| (x.get(i, j) - mean[j]).powi(2)).sum::<f64>() / n.max(1) as f64;
                let sd = var.sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) * self.scale[j];
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Branch {
    kind: BlockKind,
    input_dim: usize,
    layers: Vec<(ParamId, ParamId)>,
    scaler: Standardizer,
}

/// One MLP branch per input kind, concatenated into a two-way linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiInputMlp {
    pub spec: AttackSpec,
    params: ParamSet,
    branches: Vec<Branch>,
    head: (ParamId, ParamId),
    dropout: f64,
}

/// Link probability and the thresholded decision for one pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkVerdict {
    pub score: f64,
    pub linked: bool,
}

impl LinkVerdict {
    /// Softmax over two logits; class 1 means "linked".
    pub fn from_logits(logits: [f64; 2]) -> Self {
        let m = logits[0].max(logits[1]);
        let e0 = (logits[0] - m).exp();
        let e1 = (logits[1] - m).exp();
        let score = e1 / (e0 + e1);
        LinkVerdict {
            score,
            linked: score >= 0.5,
        }
    }
}

fn stack(rows: &[&[f64]]) -> Result<Tensor> {
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::shape("feature rows of different lengths"));
    }
    Tensor::matrix(rows.len(), cols, rows.iter().flat_map(|r| r.iter().copied()).collect())
}

impl MultiInputMlp {
    /// Randomly initialized model for `spec` with the given branch input sizes.
    pub fn new(spec: AttackSpec, input_dims: &[usize], cfg: &AttackTrainConfig, rng: &mut StageRng) -> Result<Self> {
        spec.validate()?;
        let kinds = spec.kinds();
        if kinds.len() != input_dims.len() {
            return Err(Error::shape(format!(
                "{} takes {} inputs, got {} dimensions",
                spec.id,
                kinds.len(),
                input_dims.len()
            )));
        }
        let mut widths = spec.branch_widths();
        if let Some(depth) = cfg.posterior_depth {
            if kinds != [BlockKind::Posterior] {
                return Err(Error::invalid(format!(
                    "depth override applies to posterior-only attacks, not {}",
                    spec.id
                )));
            }
            widths = vec![posterior_depth_widths(depth)?];
        }
        let mut params = ParamSet::new();
        let mut branches = Vec::new();
        let mut head_in = 0;
        for (b, ((kind, &dim), widths)) in kinds.iter().zip(input_dims).zip(&widths).enumerate() {
            if dim == 0 {
                return Err(Error::shape(format!("empty {kind} input")));
            }
            let mut layers = Vec::new();
            let mut fan_in = dim;
            for (l, &w) in widths.iter().enumerate() {
                let wid = params.add_weight(format!("branch{b}.layer{l}.weight"), fan_in, w, rng);
                let bid = params.add_zeros(format!("branch{b}.layer{l}.bias"), 1, w);
                layers.push((wid, bid));
                fan_in = w;
            }
            head_in += fan_in;
            branches.push(Branch {
                kind: *kind,
                input_dim: dim,
                layers,
                scaler: Standardizer {
                    mean: vec![0.0; dim],
                    scale: vec![1.0; dim],
                },
            });
        }
        let head = (
            params.add_weight("head.weight", head_in, 2, rng),
            params.add_zeros("head.bias", 1, 2),
        );
        Ok(MultiInputMlp {
            spec,
            params,
            branches,
            head,
            dropout: cfg.dropout,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.branches.iter().map(|b| b.input_dim).collect()
    }

    /// Hidden widths of each branch followed by the head width.
    pub fn layer_widths(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self
            .branches
            .iter()
            .map(|b| b.layers.iter().map(|&(w, _)| self.params.get(w).value.cols()).collect())
            .collect();
        out.push(vec![2]);
        out
    }

    /// Stacks per-pair blocks into one matrix per branch, checking kinds and sizes.
    fn batch(&self, rows: &[&[FeatureBlock]]) -> Result<Vec<Tensor>> {
        self.branches
            .iter()
            .enumerate()
            .map(|(b, branch)| {
                let mut slices = Vec::with_capacity(rows.len());
                for blocks in rows {
                    if blocks.len() != self.branches.len() {
                        return Err(Error::shape(format!(
                            "{} expects {} blocks, got {}",
                            self.spec.id,
                            self.branches.len(),
                            blocks.len()
                        )));
                    }
                    let block = &blocks[b];
                    if block.kind != branch.kind || block.len() != branch.input_dim {
                        return Err(Error::shape(format!(
                            "branch {b} expects {} of length {}, got {} of length {}",
                            branch.kind,
                            branch.input_dim,
                            block.kind,
                            block.len()
                        )));
                    }
                    slices.push(block.values.as_slice());
                }
                stack(&slices)
            })
            .collect()
    }

    fn forward(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        inputs: &[Tensor],
        training: bool,
        rng: &mut StageRng,
    ) -> Result<Var> {
        let mut embeddings = Vec::with_capacity(self.branches.len());
        for (branch, x) in self.branches.iter().zip(inputs) {
            let mut h = tape.input(branch.scaler.apply(x));
            for &(w, b) in &branch.layers {
                h = tape.matmul(h, p.get(w))?;
                h = tape.add_row(h, p.get(b))?;
                h = tape.relu(h)?;
                h = tape.dropout(h, self.dropout, training, rng)?;
            }
            embeddings.push(h);
        }
        let z = if embeddings.len() == 1 {
            embeddings[0]
        } else {
            tape.concat_cols(&embeddings)?
        };
        let logits = tape.matmul(z, p.get(self.head.0))?;
        tape.add_row(logits, p.get(self.head.1))
    }

    /// Evaluation-mode logits, one `[not linked, linked]` row per pair.
    pub fn logits(&self, rows: &[&[FeatureBlock]]) -> Result<Tensor> {
        let inputs = self.batch(rows)?;
        let mut tape = Tape::new();
        let p = tape.bind_all(&self.params);
        // Dropout is off outside training, so this stream is never drawn from.
        let mut unused = crate::rng::stream(0, "attack-eval");
        let out = self.forward(&mut tape, &p, &inputs, false, &mut unused)?;
        Ok(tape.value(out).clone())
    }

    pub fn score_pairs(&self, rows: &[&[FeatureBlock]]) -> Result<Vec<LinkVerdict>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let logits = self.logits(rows)?;
        Ok((0..logits.rows())
            .map(|i| LinkVerdict::from_logits([logits.get(i, 0), logits.get(i, 1)]))
            .collect())
    }
}

/// Decides whether one pair is linked.
pub fn infer_link(model: &MultiInputMlp, features: &[FeatureBlock]) -> Result<LinkVerdict> {
    Ok(model.score_pairs(&[features])?[0])
}

/// Labeled attack-training example.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackExample {
    pub blocks: Vec<FeatureBlock>,
    pub linked: bool,
}

/// Trains a fresh model for `spec` with cross-entropy, Adam and cosine
/// learning-rate annealing.
pub fn train_attack(
    spec: AttackSpec,
    examples: &[AttackExample],
    cfg: &AttackTrainConfig,
    rng: &mut StageRng,
) -> Result<MultiInputMlp> {
    let first = examples
        .first()
        .ok_or_else(|| Error::invalid("no attack training examples"))?;
    let positives = examples.iter().filter(|e| e.linked).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::invalid("attack training needs both linked and unlinked pairs"));
    }
    if cfg.epochs == 0 {
        return Err(Error::invalid("attack training needs at least one epoch"));
    }
    let dims: Vec<usize> = first.blocks.iter().map(FeatureBlock::len).collect();
    let mut model = MultiInputMlp::new(spec, &dims, cfg, rng)?;

    let rows: Vec<&[FeatureBlock]> = examples.iter().map(|e| e.blocks.as_slice()).collect();
    let inputs = model.batch(&rows)?;
    for (branch, x) in model.branches.iter_mut().zip(&inputs) {
        branch.scaler = Standardizer::fit(x);
    }
    let labels: Vec<usize> = examples.iter().map(|e| usize::from(e.linked)).collect();
    let batch = cfg.batch_size.unwrap_or(examples.len()).clamp(1, examples.len());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut opt = Optimizer::adam(cfg.learning_rate, &model.params);
    for epoch in 0..cfg.epochs {
        opt.learning_rate = cosine_anneal(cfg.learning_rate, epoch, cfg.epochs)?;
        if batch < examples.len() {
            order.shuffle(rng);
        }
        for chunk in order.chunks(batch) {
            let (x, y): (Vec<Tensor>, Vec<usize>) = if batch == examples.len() {
                (inputs.clone(), labels.clone())
            } else {
                (
                    inputs.iter().map(|t| t.select_rows(chunk)).collect(),
                    chunk.iter().map(|&i| labels[i]).collect(),
                )
            };
            let mut tape = Tape::new();
            let p = tape.bind_all(&model.params);
            let logits = model.forward(&mut tape, &p, &x, true, rng)?;
            let loss = tape.softmax_cross_entropy(logits, &y)?;
            let grads = tape.backward(loss)?;
            tape.accumulate_param_grads(&grads, &mut model.params)?;
            opt.step(&mut model.params)?;
        }
    }
    Ok(model)
}
