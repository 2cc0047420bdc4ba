//! Inductive GNN node classifiers: GCN, GraphSAGE, GAT and GIN layers, the
//! two-layer model, full-batch training and k-hop inference.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Subgraph};
use crate::nn::{
    argmax, BoundParams, Checkpoint, Message, MessageList, Optimizer, ParamId, ParamSet, Tape, Tensor, Var,
};
use crate::rng::{self, StageRng};

/// Negative slope of the LeakyReLU inside GAT attention scores.
pub const GAT_NEGATIVE_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arch {
    Gcn,
    Sage,
    Gat,
    Gin,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Gcn, Arch::Sage, Arch::Gat, Arch::Gin];

    fn tag(self) -> u8 {
        match self {
            Arch::Gcn => 0,
            Arch::Sage => 1,
            Arch::Gat => 2,
            Arch::Gin => 3,
        }
    }

    fn from_tag(tag: u8) -> Result<Arch> {
        Arch::ALL
            .into_iter()
            .find(|a| a.tag() == tag)
            .ok_or_else(|| Error::Checkpoint(format!("unknown layer tag {tag}")))
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Gcn => "gcn",
            Arch::Sage => "sage",
            Arch::Gat => "gat",
            Arch::Gin => "gin",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Arch::Gcn),
            "sage" | "graphsage" => Ok(Arch::Sage),
            "gat" => Ok(Arch::Gat),
            "gin" => Ok(Arch::Gin),
            other => Err(Error::invalid(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Message lists for one graph, precomputed for every aggregation style.
#[derive(Clone, Debug)]
pub struct Topology {
    num_nodes: usize,
    /// `1/|N(v) ∪ v|` over the closed neighborhood (GCN).
    closed_mean: Arc<MessageList>,
    /// `1/|N(v)|` over open neighbors (GraphSAGE).
    open_mean: Arc<MessageList>,
    /// Unit weights over open neighbors (GIN).
    open_sum: Arc<MessageList>,
    /// Unit weights over the closed neighborhood; GAT replaces them with attention.
    closed: Arc<MessageList>,
}

impl Topology {
    /// Builds from open neighbor lists; the self term is added here.
    pub fn from_neighbors(neighbors: &[Vec<usize>]) -> Result<Self> {
        let n = neighbors.len();
        let (mut closed_mean, mut open_mean, mut open_sum, mut closed) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (v, ns) in neighbors.iter().enumerate() {
            let closed_w = 1.0 / (ns.len() + 1) as f64;
            closed_mean.push(Message {
                dst: v,
                src: v,
                weight: closed_w,
            });
            closed.push(Message {
                dst: v,
                src: v,
                weight: 1.0,
            });
            for &u in ns {
                closed_mean.push(Message {
                    dst: v,
                    src: u,
                    weight: closed_w,
                });
                open_mean.push(Message {
                    dst: v,
                    src: u,
                    weight: 1.0 / ns.len() as f64,
                });
                open_sum.push(Message {
                    dst: v,
                    src: u,
                    weight: 1.0,
                });
                closed.push(Message {
                    dst: v,
                    src: u,
                    weight: 1.0,
                });
            }
        }
        let list = |m| MessageList::new(n, n, m).map(Arc::new);
        Ok(Topology {
            num_nodes: n,
            closed_mean: list(closed_mean)?,
            open_mean: list(open_mean)?,
            open_sum: list(open_sum)?,
            closed: list(closed)?,
        })
    }

    pub fn from_graph(g: &Graph) -> Result<Self> {
        Self::from_neighbors(g.adjacency())
    }

    pub fn from_subgraph(s: &Subgraph) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); s.num_nodes()];
        let mut has_loop = vec![false; s.num_nodes()];
        for &(i, j) in &s.edges {
            if i == j {
                has_loop[i] = true;
            } else {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
        if let Some(v) = has_loop.iter().position(|&l| !l) {
            if neighbors[v].is_empty() {
                return Err(Error::invalid(format!(
                    "local node {v} has neither neighbors nor a self-loop"
                )));
            }
        }
        for ns in &mut neighbors {
            ns.sort_unstable();
        }
        Self::from_neighbors(&neighbors)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }
}

#[derive(Clone, Debug, PartialEq)]
struct GatHead {
    weight: ParamId,
    attn_src: ParamId,
    attn_dst: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
enum LayerWeights {
    Gcn {
        weight: ParamId,
        bias: ParamId,
    },
    Sage {
        self_weight: ParamId,
        neigh_weight: ParamId,
        bias: ParamId,
    },
    Gat {
        heads: Vec<GatHead>,
        bias: ParamId,
    },
    Gin {
        eps: ParamId,
        w1: ParamId,
        b1: ParamId,
        w2: ParamId,
        b2: ParamId,
    },
}

/// One message-passing layer. Weights live in the owning model's [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct GnnLayer {
    pub kind: Arch,
    pub in_dim: usize,
    pub out_dim: usize,
    pub heads: usize,
    weights: LayerWeights,
}

impl GnnLayer {
    /// Registers a new layer's weights in `params`. For GAT, `out_dim` is the
    /// concatenated width and must divide evenly by `heads`.
    pub fn new<R: Rng + ?Sized>(
        kind: Arch,
        in_dim: usize,
        out_dim: usize,
        heads: usize,
        prefix: &str,
        params: &mut ParamSet,
        rng: &mut R,
    ) -> Result<Self> {
        let name = |s: &str| format!("{prefix}.{s}");
        let weights = match kind {
            Arch::Gcn => LayerWeights::Gcn {
                weight: params.add_weight(name("weight"), in_dim, out_dim, rng),
                bias: params.add_zeros(name("bias"), 1, out_dim),
            },
            Arch::Sage => LayerWeights::Sage {
                self_weight: params.add_weight(name("self_weight"), in_dim, out_dim, rng),
                neigh_weight: params.add_weight(name("neigh_weight"), in_dim, out_dim, rng),
                bias: params.add_zeros(name("bias"), 1, out_dim),
            },
            Arch::Gat => {
                if heads == 0 || out_dim % heads != 0 {
                    return Err(Error::invalid(format!(
                        "GAT width {out_dim} does not split into {heads} heads"
                    )));
                }
                let head_dim = out_dim / heads;
                let heads = (0..heads)
                    .map(|h| GatHead {
                        weight: params.add_weight(name(&format!("head{h}.weight")), in_dim, head_dim, rng),
                        attn_src: params.add_weight(name(&format!("head{h}.attn_src")), head_dim, 1, rng),
                        attn_dst: params.add_weight(name(&format!("head{h}.attn_dst")), head_dim, 1, rng),
                    })
                    .collect();
                LayerWeights::Gat {
                    heads,
                    bias: params.add_zeros(name("bias"), 1, out_dim),
                }
            }
            Arch::Gin => LayerWeights::Gin {
                eps: params.add_zeros(name("eps"), 1, 1),
                w1: params.add_weight(name("mlp1.weight"), in_dim, out_dim, rng),
                b1: params.add_zeros(name("mlp1.bias"), 1, out_dim),
                w2: params.add_weight(name("mlp2.weight"), out_dim, out_dim, rng),
                b2: params.add_zeros(name("mlp2.bias"), 1, out_dim),
            },
        };
        let heads = if kind == Arch::Gat { heads } else { 1 };
        Ok(GnnLayer {
            kind,
            in_dim,
            out_dim,
            heads,
            weights,
        })
    }

    /// Pre-activation output of the layer for every node of `topo`.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, h: Var, topo: &Topology) -> Result<Var> {
        let hv = tape.value(h);
        if hv.rows() != topo.num_nodes() || hv.cols() != self.in_dim {
            return Err(Error::shape(format!(
                "{} layer expects [{} x {}], got {:?}",
                self.kind,
                topo.num_nodes(),
                self.in_dim,
                hv.shape()
            )));
        }
        match &self.weights {
            LayerWeights::Gcn { weight, bias } => {
                let z = tape.matmul(h, p.get(*weight))?;
                let agg = tape.propagate(z, &topo.closed_mean)?;
                tape.add_row(agg, p.get(*bias))
            }
            LayerWeights::Sage {
                self_weight,
                neigh_weight,
                bias,
            } => {
                let own = tape.matmul(h, p.get(*self_weight))?;
                let z = tape.matmul(h, p.get(*neigh_weight))?;
                let neigh = tape.propagate(z, &topo.open_mean)?;
                let sum = tape.add(own, neigh)?;
                tape.add_row(sum, p.get(*bias))
            }
            LayerWeights::Gat { heads, bias } => {
                let mut outs = Vec::with_capacity(heads.len());
                for head in heads {
                    let z = tape.matmul(h, p.get(head.weight))?;
                    let s_src = tape.matmul(z, p.get(head.attn_src))?;
                    let s_dst = tape.matmul(z, p.get(head.attn_dst))?;
                    let e = tape.edge_scores(s_src, s_dst, &topo.closed)?;
                    let e = tape.leaky_relu(e, GAT_NEGATIVE_SLOPE)?;
                    let alpha = tape.edge_softmax(e, &topo.closed)?;
                    outs.push(tape.weighted_propagate(z, alpha, &topo.closed)?);
                }
                let cat = if outs.len() == 1 {
                    outs[0]
                } else {
                    tape.concat_cols(&outs)?
                };
                tape.add_row(cat, p.get(*bias))
            }
            LayerWeights::Gin { eps, w1, b1, w2, b2 } => {
                let neigh = tape.propagate(h, &topo.open_sum)?;
                let scaled = tape.scale_by(h, p.get(*eps))?;
                let own = tape.add(h, scaled)?;
                let x = tape.add(own, neigh)?;
                let x = tape.matmul(x, p.get(*w1))?;
                let x = tape.add_row(x, p.get(*b1))?;
                let x = tape.relu(x)?;
                let x = tape.matmul(x, p.get(*w2))?;
                tape.add_row(x, p.get(*b2))
            }
        }
    }
}

/// Hyper-parameters for training a node classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct GnnTrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout: f64,
}

impl Default for GnnTrainConfig {
    fn default() -> Self {
        GnnTrainConfig {
            hidden: 128,
            epochs: 200,
            learning_rate: 0.001,
            dropout: 0.5,
        }
    }
}

/// Class-probability vector returned by a query.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior(Vec<f64>);

impl Posterior {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let total: f64 = values.iter().sum();
        if values.is_empty() || values.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("not a probability vector: {values:?}")));
        }
        Ok(Posterior(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    /// Most likely class; the lowest id wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn leading_probability(&self) -> f64 {
        self.0[self.argmax()]
    }
}

/// Two-layer GNN classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct GnnModel {
    pub arch: Arch,
    pub in_dim: usize,
    pub hidden: usize,
    pub num_classes: usize,
    params: ParamSet,
    layer1: GnnLayer,
    layer2: GnnLayer,
}

impl GnnModel {
    pub fn new<R: Rng + ?Sized>(
        arch: Arch,
        in_dim: usize,
        hidden: usize,
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params = ParamSet::new();
        let (heads1, heads2) = if arch == Arch::Gat { (2, 1) } else { (1, 1) };
        let layer1 = GnnLayer::new(arch, in_dim, hidden, heads1, "layer1", &mut params, rng)?;
        let layer2 = GnnLayer::new(arch, hidden, num_classes, heads2, "layer2", &mut params, rng)?;
        Ok(GnnModel {
            arch,
            in_dim,
            hidden,
            num_classes,
            params,
            layer1,
            layer2,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn layers(&self) -> [&GnnLayer; 2] {
        [&self.layer1, &self.layer2]
    }

    /// Logits for every node of `topo`. Dropout follows the hidden activation
    /// and only fires when `training` is set.
    pub fn logits<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        features: Var,
        topo: &Topology,
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let h = self.layer1.forward(tape, p, features, topo)?;
        let h = tape.relu(h)?;
        let h = tape.dropout(h, dropout, training, rng)?;
        self.layer2.forward(tape, p, h, topo)
    }

    /// Inference-mode posteriors for every node of `topo`.
    pub fn posteriors(&self, features: &Tensor, topo: &Topology, temperature: f64) -> Result<Tensor> {
        if features.cols() != self.in_dim {
            return Err(Error::shape(format!(
                "model expects {} attributes, query has {}",
                self.in_dim,
                features.cols()
            )));
        }
        let mut tape = Tape::new();
        let p = tape.bind_all(&self.params);
        let x = tape.input(features.clone());
        let mut unused = rng::stream(0, "inference");
        let logits = self.logits(&mut tape, &p, x, topo, 0.0, false, &mut unused)?;
        let probs = tape.softmax(logits, temperature)?;
        Ok(tape.value(probs).clone())
    }

    /// Predicted class of every node of `g`, using the whole graph as context.
    pub fn predict_graph(&self, g: &Graph) -> Result<Vec<usize>> {
        let topo = Topology::from_graph(g)?;
        Ok(self.posteriors(g.features(), &topo, 1.0)?.argmax_rows())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            tags: vec![self.layer1.kind.tag(), self.layer2.kind.tag()],
            meta: vec![self.in_dim as u64, self.hidden as u64, self.num_classes as u64],
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let (&[t1, t2], &[in_dim, hidden, classes]) = (ck.tags.as_slice(), ck.meta.as_slice()) else {
            return Err(Error::Checkpoint("expected 2 layer tags and 3 dimensions".into()));
        };
        let arch = Arch::from_tag(t1)?;
        if Arch::from_tag(t2)? != arch {
            return Err(Error::Checkpoint("mixed layer kinds".into()));
        }
        let mut skeleton_rng = rng::stream(0, "checkpoint-skeleton");
        let mut model = GnnModel::new(
            arch,
            in_dim as usize,
            hidden as usize,
            classes as usize,
            &mut skeleton_rng,
        )?;
        if model.params.len() != ck.params.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameters stored, {arch} model has {}",
                ck.params.len(),
                model.params.len()
            )));
        }
        for (slot, stored) in model.params.iter_mut().zip(ck.params.iter()) {
            if slot.name != stored.name || slot.value.shape() != stored.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` {:?} does not match `{}` {:?}",
                    stored.name,
                    stored.value.shape(),
                    slot.name,
                    slot.value.shape()
                )));
            }
            slot.value = stored.value.clone();
        }
        Ok(model)
    }
}

/// Trains a two-layer model on every node of `g` with default hyper-parameters.
pub fn train_gnn(g: &Graph, arch: Arch, seed: u64) -> Result<GnnModel> {
    let mut rng = rng::stream(seed, "gnn-train");
    train_gnn_with(g, arch, &GnnTrainConfig::default(), &mut rng)
}

/// Full-batch training with cross-entropy and Adam.
pub fn train_gnn_with(g: &Graph, arch: Arch, cfg: &GnnTrainConfig, rng: &mut StageRng) -> Result<GnnModel> {
    if g.num_classes() < 2 {
        return Err(Error::invalid(format!(
            "node classification needs at least 2 classes, got {}",
            g.num_classes()
        )));
    }
    if g.num_nodes() == 0 {
        return Err(Error::GraphTooSmall("no training nodes".into()));
    }
    let mut model = GnnModel::new(arch, g.feature_dim(), cfg.hidden, g.num_classes(), rng)?;
    let topo = Topology::from_graph(g)?;
    let mut opt = Optimizer::adam(cfg.learning_rate, &model.params);
    for _ in 0..cfg.epochs {
        let mut tape = Tape::new();
        let p = tape.bind_all(&model.params);
        let x = tape.input(g.features().clone());
        let logits = model.logits(&mut tape, &p, x, &topo, cfg.dropout, true, rng)?;
        let loss = tape.softmax_cross_entropy(logits, g.labels())?;
        let grads = tape.backward(loss)?;
        tape.accumulate_param_grads(&grads, &mut model.params)?;
        opt.step(&mut model.params)?;
    }
    Ok(model)
}

/// Posterior of the subgraph's center at the given softmax temperature.
pub fn khop_query(model: &GnnModel, sub: &Subgraph, temperature: f64) -> Result<Posterior> {
    let topo = Topology::from_subgraph(sub)?;
    let probs = model.posteriors(&sub.features, &topo, temperature)?;
    Posterior::new(probs.row(0).to_vec())
}

/// Most likely class of the subgraph's center; ties go to the lowest id.
pub fn predict_label(model: &GnnModel, sub: &Subgraph) -> Result<usize> {
    Ok(khop_query(model, sub, 1.0)?.argmax())
}
