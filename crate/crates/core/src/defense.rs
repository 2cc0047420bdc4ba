//! Defenses: output restriction (labels only, softened posteriors) and
//! differentially private perturbation of the training adjacency.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::QueryContext;
use crate::gnn::{khop_query, predict_label, GnnModel, Posterior};
use crate::graph::Graph;

pub const DEFAULT_TEMPERATURE: f64 = 20.0;
pub const DEFAULT_BUDGET_SPLIT: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DefenseKind {
    None,
    LabelOnly,
    SoftPosterior,
    EdgeRand,
    LapGraph,
}

impl DefenseKind {
    pub fn name(self) -> &'static str {
        match self {
            DefenseKind::None => "none",
            DefenseKind::LabelOnly => "label",
            DefenseKind::SoftPosterior => "soft",
            DefenseKind::EdgeRand => "edgerand",
            DefenseKind::LapGraph => "lapgraph",
        }
    }

    /// Whether the defense perturbs the training graph (and needs a budget).
    pub fn is_private(self) -> bool {
        matches!(self, DefenseKind::EdgeRand | DefenseKind::LapGraph)
    }
}

impl fmt::Display for DefenseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DefenseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(DefenseKind::None),
            "label" | "label_only" => Ok(DefenseKind::LabelOnly),
            "soft" | "soft_posterior" => Ok(DefenseKind::SoftPosterior),
            "edgerand" | "edge_rand" => Ok(DefenseKind::EdgeRand),
            "lapgraph" | "lap_graph" => Ok(DefenseKind::LapGraph),
            other => Err(Error::invalid(format!(
                "unknown defense `{other}` (expected none, label, soft, edgerand or lapgraph)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DefenseConfig {
    pub kind: DefenseKind,
    pub temperature: f64,
    pub epsilon: f64,
    pub budget_split: f64,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            kind: DefenseKind::None,
            temperature: DEFAULT_TEMPERATURE,
            epsilon: 1.0,
            budget_split: DEFAULT_BUDGET_SPLIT,
        }
    }
}

impl DefenseConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn of(kind: DefenseKind) -> Self {
        DefenseConfig {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::invalid(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.budget_split > 0.0 && self.budget_split < 1.0) {
            return Err(Error::invalid(format!(
                "budget split {} outside (0, 1)",
                self.budget_split
            )));
        }
        Ok(())
    }

    /// Softmax temperature applied to query outputs.
    pub fn query_temperature(&self) -> f64 {
        if self.kind == DefenseKind::SoftPosterior {
            self.temperature
        } else {
            1.0
        }
    }
}

/// Sum of the one-hot encodings of two labels.
pub fn label_only_feature(label_u: usize, label_v: usize, num_classes: usize) -> Result<Vec<f64>> {
    for l in [label_u, label_v] {
        if l >= num_classes {
            return Err(Error::invalid(format!("label {l} outside {num_classes} classes")));
        }
    }
    let mut out = vec![0.0; num_classes];
    out[label_u] += 1.0;
    out[label_v] += 1.0;
    Ok(out)
}

/// What a defended model reveals about a queried pair.
#[derive(Clone, Debug, PartialEq)]
pub enum QueryResponse {
    Posteriors(Posterior, Posterior),
    LabelFeature(Vec<f64>),
}

pub fn apply_defended_query(model: &GnnModel, ctx: &QueryContext, defense: &DefenseConfig) -> Result<QueryResponse> {
    match defense.kind {
        DefenseKind::LabelOnly => {
            let lu = predict_label(model, &ctx.u)?;
            let lv = predict_label(model, &ctx.v)?;
            Ok(QueryResponse::LabelFeature(label_only_feature(
                lu,
                lv,
                model.num_classes,
            )?))
        }
        _ => {
            let t = defense.query_temperature();
            Ok(QueryResponse::Posteriors(
                khop_query(model, &ctx.u, t)?,
                khop_query(model, &ctx.v, t)?,
            ))
        }
    }
}

/// Symmetric boolean adjacency with an empty diagonal, stored densely.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PerturbedAdjacency {
    n: usize,
    cells: Vec<bool>,
}

impl PerturbedAdjacency {
    pub fn empty(n: usize) -> Self {
        PerturbedAdjacency {
            n,
            cells: vec![false; n * n],
        }
    }

    pub fn from_graph(g: &Graph) -> Self {
        let mut adj = Self::empty(g.num_nodes());
        for e in g.edges() {
            adj.set(e.low(), e.high(), true);
        }
        adj
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`. Diagonal writes are ignored.
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        if i != j {
            self.cells[i * self.n + j] = value;
            self.cells[j * self.n + i] = value;
        }
    }

    pub fn num_edges(&self) -> usize {
        self.upper_pairs().filter(|&(i, j)| self.get(i, j)).count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| !self.get(i, i) && (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Every `(i, j)` with `i < j`, row by row.
    pub fn upper_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| (i + 1..self.n).map(move |j| (i, j)))
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.upper_pairs().filter(|&(i, j)| self.get(i, j)).collect()
    }

    /// `g` with its edge set replaced by this adjacency.
    pub fn apply_to(&self, g: &Graph) -> Result<Graph> {
        if g.num_nodes() != self.n {
            return Err(Error::shape(format!(
                "adjacency over {} nodes applied to a graph of {}",
                self.n,
                g.num_nodes()
            )));
        }
        g.with_edges(self.edges())
    }
}

/// Randomized-response flip probability for budget `epsilon`.
pub fn flip_probability(epsilon: f64) -> f64 {
    2.0 / (epsilon.exp() + 1.0)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")))
    }
}

/// Flips every upper-triangular cell independently with
/// [`flip_probability`]`(epsilon)`, mirroring to keep the matrix symmetric.
pub fn edge_rand<R: Rng + ?Sized>(adj: &PerturbedAdjacency, epsilon: f64, rng: &mut R) -> Result<PerturbedAdjacency> {
    check_epsilon(epsilon)?;
    let s = flip_probability(epsilon);
    let mut out = adj.clone();
    for i in 0..adj.n {
        for j in i + 1..adj.n {
            if rng.random::<f64>() < s {
                out.set(i, j, !adj.get(i, j));
            }
        }
    }
    Ok(out)
}

/// Draws from a zero-mean Laplace distribution by inverting its CDF.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    // u in (-1/2, 1/2]; the open end at -1/2 keeps the log finite.
    let u = 0.5 - rng.random::<f64>();
    if u == 0.5 {
        return 0.0;
    }
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Spends `budget_split · epsilon` on a noisy edge count `T̂`, adds Laplace
/// noise to every cell with the rest, and keeps the `T̂` largest cells.
pub fn lap_graph<R: Rng + ?Sized>(
    adj: &PerturbedAdjacency,
    epsilon: f64,
    budget_split: f64,
    rng: &mut R,
) -> Result<PerturbedAdjacency> {
    lap_graph_with_estimate(adj, epsilon, budget_split, rng).map(|(out, _)| out)
}

/// [`lap_graph`] that also returns the edge-count estimate `T̂`.
pub fn lap_graph_with_estimate<R: Rng + ?Sized>(
    adj: &PerturbedAdjacency,
    epsilon: f64,
    budget_split: f64,
    rng: &mut R,
) -> Result<(PerturbedAdjacency, usize)> {
    check_epsilon(epsilon)?;
    if !(budget_split > 0.0 && budget_split < 1.0) {
        return Err(Error::invalid(format!("budget split {budget_split} outside (0, 1)")));
    }
    let eps1 = budget_split * epsilon;
    let eps2 = epsilon - eps1;
    let cells = adj.n * adj.n.saturating_sub(1) / 2;
    let noisy_count = adj.num_edges() as f64 + sample_laplace(1.0 / eps1, rng);
    let t_hat = noisy_count.round().clamp(0.0, cells as f64) as usize;

    let scale = 1.0 / eps2;
    let mut scored: Vec<(f64, usize, usize)> = adj
        .upper_pairs()
        .map(|(i, j)| (f64::from(u8::from(adj.get(i, j))) + sample_laplace(scale, rng), i, j))
        .collect();
    let by_value_desc =
        |a: &(f64, usize, usize), b: &(f64, usize, usize)| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2)));
    if t_hat > 0 && t_hat < scored.len() {
        scored.select_nth_unstable_by(t_hat - 1, by_value_desc);
    }
    let mut out = PerturbedAdjacency::empty(adj.n);
    for &(_, i, j) in scored.iter().take(t_hat) {
        out.set(i, j, true);
    }
    Ok((out, t_hat))
}

/// Training graph as seen by the target model under `defense`.
pub fn perturb_graph<R: Rng + ?Sized>(g: &Graph, defense: &DefenseConfig, rng: &mut R) -> Result<Graph> {
    defense.validate()?;
    let adj = PerturbedAdjacency::from_graph(g);
    match defense.kind {
        DefenseKind::EdgeRand => edge_rand(&adj, defense.epsilon, rng)?.apply_to(g),
        DefenseKind::LapGraph => lap_graph(&adj, defense.epsilon, defense.budget_split, rng)?.apply_to(g),
        _ => Ok(g.clone()),
    }
}
