//! Attack input blocks built from a node pair.
//!
//! Every builder is symmetric in its two arguments bit-for-bit, so an attack
//! sees the same input whichever order a pair is presented in.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::pearson_correlation;
use crate::gnn::{khop_query, GnnModel, Posterior};
use crate::graph::{Edge, Graph, Hop, NodeId, Subgraph};

/// Names of the four pairwise operations, in block order.
pub const PAIRWISE_OPS: [&str; 4] = ["hadamard", "average", "wl1", "wl2"];
pub const GRAPH_FEATURES: [&str; 3] = ["common_neighbors", "jaccard", "preferential_attachment"];
pub const TRANSFER_FEATURES: [&str; 7] = [
    "entropy_hadamard",
    "entropy_average",
    "entropy_wl1",
    "entropy_wl2",
    "cosine",
    "jsd",
    "correlation_distance",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    Posterior,
    NodeAttr,
    Graph,
    Transfer,
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Posterior => "posterior",
            BlockKind::NodeAttr => "node_attr",
            BlockKind::Graph => "graph",
            BlockKind::Transfer => "transfer",
        }
    }

    /// Column names for a block of this kind with `len` values.
    pub fn column_names(self, len: usize) -> Vec<String> {
        let prefix = self.name();
        match self {
            BlockKind::Posterior if len % 4 == 0 => {
                let per_op = len / 4;
                PAIRWISE_OPS
                    .iter()
                    .flat_map(|op| (0..per_op).map(move |i| format!("{prefix}_{op}_{i}")))
                    .collect()
            }
            BlockKind::NodeAttr => (0..len).map(|i| format!("{prefix}_hadamard_{i}")).collect(),
            BlockKind::Graph if len == 3 => GRAPH_FEATURES.iter().map(|f| format!("{prefix}_{f}")).collect(),
            BlockKind::Transfer if len == 7 => TRANSFER_FEATURES.iter().map(|f| format!("{prefix}_{f}")).collect(),
            _ => (0..len).map(|i| format!("{prefix}_{i}")).collect(),
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBlock {
    pub kind: BlockKind,
    pub values: Vec<f64>,
}

impl FeatureBlock {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// What the adversary sees for one pair: both endpoints' neighborhoods at
/// the query depth, with the pair's own edge removed.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryContext {
    pub hop: Hop,
    pub pair: Edge,
    pub u: Subgraph,
    pub v: Subgraph,
}

impl QueryContext {
    pub fn new(g: &Graph, u: NodeId, v: NodeId, hop: Hop) -> Result<Self> {
        if u == v {
            return Err(Error::invalid(format!("pair ({u}, {v}) is not two distinct nodes")));
        }
        let pair = Edge::new(u, v);
        Ok(QueryContext {
            hop,
            pair,
            u: g.khop_subgraph(u, hop, Some(pair))?,
            v: g.khop_subgraph(v, hop, Some(pair))?,
        })
    }
}

/// Hadamard, average, weighted L1 and weighted L2 of `a` and `b`,
/// concatenated in that order.
pub fn pairwise_ops(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "pairwise ops on lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let mut out = vec![0.0; 4 * n];
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        let diff = (x - y).abs();
        out[i] = x * y;
        out[n + i] = (x + y) / 2.0;
        out[2 * n + i] = diff;
        out[3 * n + i] = diff * diff;
    }
    Ok(out)
}

/// Posterior block from two already-computed posteriors.
pub fn posterior_pair_block(pu: &Posterior, pv: &Posterior) -> Result<FeatureBlock> {
    Ok(FeatureBlock {
        kind: BlockKind::Posterior,
        values: pairwise_ops(pu.values(), pv.values())?,
    })
}

/// Queries both endpoints at the context's depth and combines the posteriors.
pub fn posterior_block(model: &GnnModel, ctx: &QueryContext, temperature: f64) -> Result<FeatureBlock> {
    let pu = khop_query(model, &ctx.u, temperature)?;
    let pv = khop_query(model, &ctx.v, temperature)?;
    posterior_pair_block(&pu, &pv)
}

pub fn node_attr_block(fu: &[f64], fv: &[f64]) -> Result<FeatureBlock> {
    if fu.len() != fv.len() {
        return Err(Error::shape(format!(
            "node attributes of length {} and {}",
            fu.len(),
            fv.len()
        )));
    }
    Ok(FeatureBlock {
        kind: BlockKind::NodeAttr,
        values: fu.iter().zip(fv).map(|(a, b)| a * b).collect(),
    })
}

/// Common neighbors, Jaccard coefficient and preferential attachment.
pub fn proximity(nu: &BTreeSet<NodeId>, nv: &BTreeSet<NodeId>) -> [f64; 3] {
    let common = nu.intersection(nv).count();
    let union = nu.len() + nv.len() - common;
    let jaccard = if union == 0 { 0.0 } else { common as f64 / union as f64 };
    [common as f64, jaccard, (nu.len() * nv.len()) as f64]
}

/// Proximity features over the visible direct neighborhoods in `ctx`.
pub fn graph_block(ctx: &QueryContext) -> Result<FeatureBlock> {
    if ctx.hop == Hop::Zero {
        return Err(Error::invalid("graph features need a neighborhood; hop 0 has none"));
    }
    let nu = ctx.u.center_neighbors();
    let nv = ctx.v.center_neighbors();
    Ok(FeatureBlock {
        kind: BlockKind::Graph,
        values: proximity(&nu, &nv).to_vec(),
    })
}

/// Shannon entropy in nats; zero entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

fn padded(a: &[f64], len: usize) -> Vec<f64> {
    let mut v = a.to_vec();
    v.resize(len, 0.0);
    v
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Jensen-Shannon divergence in nats; the shorter input is zero-padded.
pub fn jensen_shannon(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    let (p, q) = (padded(p, len), padded(q, len));
    let kl_to_mid = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, &y)| x * (x / ((x + y) / 2.0)).ln())
            .sum()
    };
    0.5 * kl_to_mid(&p, &q) + 0.5 * kl_to_mid(&q, &p)
}

/// One minus Pearson correlation; zero when either input is constant.
pub fn correlation_distance(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    let (a, b) = (padded(a, len), padded(b, len));
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(&a) || constant(&b) {
        return 0.0;
    }
    1.0 - pearson_correlation(&a, &b).expect("padded to equal length")
}

/// Class-count independent block for shadow models trained on another dataset:
/// pairwise ops over the two entropies, then cosine similarity, JS divergence
/// and correlation distance of the posteriors.
pub fn transfer_block(pu: &Posterior, pv: &Posterior) -> Result<FeatureBlock> {
    let (a, b) = (pu.values(), pv.values());
    let mut values = pairwise_ops(&[entropy(a)], &[entropy(b)])?;
    let len = a.len().max(b.len());
    let (pa, pb) = (padded(a, len), padded(b, len));
    values.push(cosine_similarity(&pa, &pb));
    values.push(jensen_shannon(a, b));
    values.push(correlation_distance(a, b));
    Ok(FeatureBlock {
        kind: BlockKind::Transfer,
        values,
    })
}

/// Writes one row per pair: `u,v,label` followed by every block's columns.
/// The header is taken from the first row's block layout.
pub fn write_feature_csv(path: &Path, rows: &[(Edge, usize, Vec<FeatureBlock>)]) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    let mut header = vec!["u".to_string(), "v".to_string(), "label".to_string()];
    if let Some((_, _, blocks)) = rows.first() {
        for b in blocks {
            header.extend(b.kind.column_names(b.len()));
        }
    }
    out.write_record(&header)?;
    for (pair, label, blocks) in rows {
        let mut record = vec![pair.low().to_string(), pair.high().to_string(), label.to_string()];
        for b in blocks {
            record.extend(b.values.iter().map(f64::to_string));
        }
        if record.len() != header.len() {
            return Err(Error::shape(format!(
                "row for {pair:?} has {} columns, header has {}",
                record.len(),
                header.len()
            )));
        }
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}
