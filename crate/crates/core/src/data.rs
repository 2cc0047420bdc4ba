//! Dataset loading, the synthetic planted-partition generator, target/shadow
//! splitting and link-prediction pair datasets.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph, NodeId};
use crate::nn::Tensor;
use crate::rng::{self, StageRng};

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
/// Optional: one external id per line, in feature-row order. When present,
/// `edges.tsv` refers to these ids instead of row indices.
pub const IDS_FILE: &str = "ids.txt";

/// A loaded graph plus the external id of every node.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: Graph,
    pub external_ids: Vec<String>,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Reads `edges.tsv`, `features.csv` and `labels.csv` from `dir`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let features_path = dir.join(FEATURES_FILE);
    let features_text = fs::read_to_string(&features_path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, text) in data_lines(&features_text) {
        let row = text
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(&features_path, line, e.to_string()))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    &features_path,
                    line,
                    format!("{} columns, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    let n = rows.len();

    let labels_path = dir.join(LABELS_FILE);
    let labels_text = fs::read_to_string(&labels_path)?;
    let labels = data_lines(&labels_text)
        .map(|(line, t)| {
            t.parse::<usize>()
                .map_err(|e| parse_err(&labels_path, line, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.len() != n {
        return Err(parse_err(
            &labels_path,
            0,
            format!("{} labels for {n} feature rows", labels.len()),
        ));
    }

    let ids_path = dir.join(IDS_FILE);
    let external_ids: Vec<String> = if ids_path.exists() {
        let ids: Vec<String> = data_lines(&fs::read_to_string(&ids_path)?)
            .map(|(_, t)| t.to_string())
            .collect();
        if ids.len() != n {
            return Err(parse_err(&ids_path, 0, format!("{} ids for {n} nodes", ids.len())));
        }
        ids
    } else {
        (0..n).map(|i| i.to_string()).collect()
    };
    let lookup: HashMap<&str, NodeId> = external_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    if lookup.len() != n {
        return Err(parse_err(&ids_path, 0, "duplicate external ids"));
    }

    let edges_path = dir.join(EDGES_FILE);
    let edges_text = fs::read_to_string(&edges_path)?;
    let mut edges = Vec::new();
    for (line, text) in data_lines(&edges_text) {
        let cols: Vec<&str> = text.split_whitespace().collect();
        if cols.len() != 2 {
            return Err(parse_err(&edges_path, line, "expected two columns"));
        }
        let resolve = |c: &str| {
            lookup
                .get(c)
                .copied()
                .ok_or_else(|| parse_err(&edges_path, line, format!("unknown node `{c}`")))
        };
        edges.push((resolve(cols[0])?, resolve(cols[1])?));
    }

    let features = Tensor::from_rows(&rows);
    let features = if n == 0 { Tensor::zeros(0, 0) } else { features };
    let graph = Graph::with_inferred_classes(n, edges, features, labels)?;
    Ok(Dataset { graph, external_ids })
}

/// Writes `g` in the directory format read by [`load_dataset`].
pub fn save_dataset(g: &Graph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut edges = fs::File::create(dir.join(EDGES_FILE))?;
    for e in g.edges() {
        writeln!(edges, "{}\t{}", e.low(), e.high())?;
    }
    let mut features = fs::File::create(dir.join(FEATURES_FILE))?;
    for v in 0..g.num_nodes() {
        let row: Vec<String> = g.feature_row(v).iter().map(f64::to_string).collect();
        writeln!(features, "{}", row.join(","))?;
    }
    let mut labels = fs::File::create(dir.join(LABELS_FILE))?;
    for l in g.labels() {
        writeln!(labels, "{l}")?;
    }
    Ok(())
}

/// Parameters of the planted-partition (stochastic block) generator.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedPartition {
    pub nodes: usize,
    pub communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        PlantedPartition {
            nodes: 400,
            communities: 4,
            p_in: 0.1,
            p_out: 0.005,
            feature_dim: 32,
            noise: 3.0,
            seed: 0,
        }
    }
}

/// Community-structured graph: node `i` belongs to community
/// `i * communities / nodes`; pairs link with probability `p_in` inside a
/// community and `p_out` across; attributes are the community centroid
/// (standard normal per coordinate) plus `N(0, noise²)` per coordinate.
pub fn generate_planted_partition(spec: &PlantedPartition) -> Result<Graph> {
    let PlantedPartition {
        nodes,
        communities,
        p_in,
        p_out,
        feature_dim,
        noise,
        seed,
    } = *spec;
    if communities < 2 {
        return Err(Error::invalid("planted partition needs at least 2 communities"));
    }
    if nodes < communities {
        return Err(Error::invalid(format!(
            "{nodes} nodes cannot fill {communities} communities"
        )));
    }
    for (name, p) in [("p_in", p_in), ("p_out", p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("{name} = {p} is not a probability")));
        }
    }
    if p_in <= p_out {
        return Err(Error::invalid(format!("p_in ({p_in}) must exceed p_out ({p_out})")));
    }
    if !(noise >= 0.0) {
        return Err(Error::invalid(format!("noise must be non-negative, got {noise}")));
    }
    let community = |i: usize| i * communities / nodes;

    let mut edge_rng = rng::stream(seed, "planted-edges");
    let mut edges = Vec::new();
    for i in 0..nodes {
        for j in i + 1..nodes {
            let p = if community(i) == community(j) { p_in } else { p_out };
            if edge_rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let mut feature_rng = rng::stream(seed, "planted-features");
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let centroids: Vec<Vec<f64>> = (0..communities)
        .map(|_| (0..feature_dim).map(|_| unit.sample(&mut feature_rng)).collect())
        .collect();
    let mut data = Vec::with_capacity(nodes * feature_dim);
    for i in 0..nodes {
        for &c in &centroids[community(i)] {
            let eps = if noise > 0.0 {
                noise * unit.sample(&mut feature_rng)
            } else {
                0.0
            };
            data.push(c + eps);
        }
    }
    let features = Tensor::matrix(nodes, feature_dim, data)?;
    let labels = (0..nodes).map(community).collect();
    Graph::new(nodes, edges, features, labels, communities)
}

/// Induced subgraph together with the parent id of each of its nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub graph: Graph,
    pub source_ids: Vec<NodeId>,
}

impl Split {
    fn induce(g: &Graph, mut ids: Vec<NodeId>) -> Result<Split> {
        ids.sort_unstable();
        Ok(Split {
            graph: g.induced(&ids)?,
            source_ids: ids,
        })
    }
}

/// Target and shadow halves, each divided 8:2 into train and test graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitBundle {
    pub target_train: Split,
    pub target_test: Split,
    pub shadow_train: Split,
    pub shadow_test: Split,
}

const SPLIT_NAMES: [&str; 4] = ["target_train", "target_test", "shadow_train", "shadow_test"];

/// Number of training nodes in a half of `size` nodes (8:2, rounded).
pub fn train_count(size: usize) -> usize {
    (size * 4 + 2) / 5
}

impl SplitBundle {
    pub fn splits(&self) -> [(&'static str, &Split); 4] {
        [
            (SPLIT_NAMES[0], &self.target_train),
            (SPLIT_NAMES[1], &self.target_test),
            (SPLIT_NAMES[2], &self.shadow_train),
            (SPLIT_NAMES[3], &self.shadow_test),
        ]
    }

    /// Writes one `<split>.txt` per split, listing source node ids one per line.
    pub fn write_manifest(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, split) in self.splits() {
            let path = dir.join(format!("{name}.txt"));
            let mut f = fs::File::create(&path)?;
            for id in &split.source_ids {
                writeln!(f, "{id}")?;
            }
            written.push(path);
        }
        Ok(written)
    }

    /// Rebuilds a bundle from manifests written by [`SplitBundle::write_manifest`].
    pub fn read_manifest(g: &Graph, dir: &Path) -> Result<SplitBundle> {
        let mut splits = Vec::new();
        for name in SPLIT_NAMES {
            let path = dir.join(format!("{name}.txt"));
            let ids = data_lines(&fs::read_to_string(&path)?)
                .map(|(line, t)| t.parse::<usize>().map_err(|e| parse_err(&path, line, e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            splits.push(Split::induce(g, ids)?);
        }
        let mut it = splits.into_iter();
        let mut next = || it.next().expect("four splits");
        Ok(SplitBundle {
            target_train: next(),
            target_test: next(),
            shadow_train: next(),
            shadow_test: next(),
        })
    }
}

/// Halves `g` into target and shadow, then splits each half 8:2.
pub fn make_splits(g: &Graph, seed: u64) -> Result<SplitBundle> {
    make_splits_with(g, 1.0, &mut rng::stream(seed, "split"))
}

/// As [`make_splits`], keeping only `shadow_fraction` of the shadow half's
/// nodes (chosen uniformly) before its 8:2 split.
pub fn make_splits_with(g: &Graph, shadow_fraction: f64, rng: &mut StageRng) -> Result<SplitBundle> {
    if g.num_nodes() < 4 {
        return Err(Error::GraphTooSmall(format!(
            "splitting needs at least 4 nodes, got {}",
            g.num_nodes()
        )));
    }
    if g.num_classes() < 1 {
        return Err(Error::invalid("graph has no classes"));
    }
    if !(shadow_fraction > 0.0 && shadow_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "shadow fraction {shadow_fraction} outside (0, 1]"
        )));
    }
    let mut order: Vec<NodeId> = (0..g.num_nodes()).collect();
    order.shuffle(rng);
    let half = g.num_nodes() / 2;
    let target = order[..half].to_vec();
    let mut shadow = order[half..].to_vec();
    if shadow_fraction < 1.0 {
        let keep = ((shadow.len() as f64 * shadow_fraction).round() as usize).max(2);
        shadow.shuffle(rng);
        shadow.truncate(keep);
    }
    let divide = |half: Vec<NodeId>| -> Result<(Split, Split)> {
        let cut = train_count(half.len());
        if cut == 0 {
            return Err(Error::GraphTooSmall("empty training split".into()));
        }
        Ok((
            Split::induce(g, half[..cut].to_vec())?,
            Split::induce(g, half[cut..].to_vec())?,
        ))
    };
    let (target_train, target_test) = divide(target)?;
    let (shadow_train, shadow_test) = divide(shadow)?;
    Ok(SplitBundle {
        target_train,
        target_test,
        shadow_train,
        shadow_test,
    })
}

/// Uniform node subsample of `g` (with induced edges) at the given fraction.
pub fn subsample_nodes(g: &Graph, fraction: f64, rng: &mut StageRng) -> Result<Split> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    let keep = ((g.num_nodes() as f64 * fraction).round() as usize).max(1);
    let all: Vec<NodeId> = (0..g.num_nodes()).collect();
    let ids: Vec<NodeId> = all.choose_multiple(rng, keep).copied().collect();
    Split::induce(g, ids)
}

/// Which graph a pair dataset was drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    ShadowTrain,
    TargetTrain,
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LabeledPair {
    pub u: NodeId,
    pub v: NodeId,
    pub linked: bool,
}

impl LabeledPair {
    pub fn edge(&self) -> Edge {
        Edge::new(self.u, self.v)
    }

    pub fn label(&self) -> usize {
        usize::from(self.linked)
    }
}

/// Balanced link / non-link node pairs over one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDataset {
    pub pairs: Vec<LabeledPair>,
    pub provenance: Provenance,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.pairs.iter().map(LabeledPair::label).collect()
    }

    pub fn positives(&self) -> impl Iterator<Item = &LabeledPair> {
        self.pairs.iter().filter(|p| p.linked)
    }

    /// Fails unless the dataset was drawn from the expected graph.
    pub fn require(&self, provenance: Provenance) -> Result<()> {
        if self.provenance == provenance {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "pair dataset drawn from {:?}, expected {provenance:?}",
                self.provenance
            )))
        }
    }
}

pub fn build_pair_dataset(g: &Graph, seed: u64) -> Result<PairDataset> {
    build_pair_dataset_with(g, Provenance::Other, &mut rng::stream(seed, "negative-sample"))
}

/// Every edge of `g` as a positive, and as many non-adjacent pairs sampled
/// uniformly without replacement as negatives, shuffled together.
pub fn build_pair_dataset_with(g: &Graph, provenance: Provenance, rng: &mut StageRng) -> Result<PairDataset> {
    let positives: Vec<Edge> = g.edges().collect();
    if positives.is_empty() {
        return Err(Error::GraphTooSmall("graph has no edges to use as positives".into()));
    }
    let n = g.num_nodes();
    let total = n * (n - 1) / 2;
    let non_edges = total - positives.len();
    if non_edges < positives.len() {
        return Err(Error::GraphTooDense(format!(
            "{} edges but only {non_edges} non-adjacent pairs",
            positives.len()
        )));
    }
    let wanted = positives.len();
    let negatives: Vec<Edge> = if non_edges <= 4 * wanted {
        let pool: Vec<Edge> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| Edge::new(u, v)))
            .filter(|e| !g.has_edge(e.low(), e.high()))
            .collect();
        pool.choose_multiple(rng, wanted).copied().collect()
    } else {
        let mut seen = HashSet::with_capacity(wanted);
        let mut out = Vec::with_capacity(wanted);
        while out.len() < wanted {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u == v || g.has_edge(u, v) {
                continue;
            }
            let e = Edge::new(u, v);
            if seen.insert(e) {
                out.push(e);
            }
        }
        out
    };
    let mut pairs: Vec<LabeledPair> = positives
        .iter()
        .map(|e| (e, true))
        .chain(negatives.iter().map(|e| (e, false)))
        .map(|(e, linked)| LabeledPair {
            u: e.low(),
            v: e.high(),
            linked,
        })
        .collect();
    pairs.shuffle(rng);
    Ok(PairDataset { pairs, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: usize) -> Graph {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
        let feats = Tensor::from_rows(&(0..n).map(|i| vec![i as f64]).collect::<Vec<_>>());
        Graph::new(n, edges, feats, (0..n).map(|i| i % 2).collect(), 2).unwrap()
    }

    fn gnp(n: usize, p: f64, seed: u64) -> Graph {
        let mut r = rng::stream(seed, "gnp");
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if r.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        Graph::new(n, edges, Tensor::zeros(n, 1), vec![0; n], 1).unwrap()
    }

    #[test]
    fn split_sizes() {
        let g = complete(100);
        let b = make_splits(&g, 3).unwrap();
        assert_eq!(b.target_train.graph.num_nodes() + b.target_test.graph.num_nodes(), 50);
        assert_eq!(b.target_train.graph.num_nodes(), 40);
        assert_eq!(b.target_test.graph.num_nodes(), 10);
        assert_eq!(b.shadow_train.graph.num_nodes(), 40);
    }

    #[test]
    fn splits_are_deterministic_and_disjoint() {
        let g = gnp(60, 0.1, 1);
        let a = make_splits(&g, 9).unwrap();
        assert_eq!(a, make_splits(&g, 9).unwrap());
        assert_ne!(a, make_splits(&g, 10).unwrap());
        let mut seen = HashSet::new();
        for (_, s) in a.splits() {
            for &id in &s.source_ids {
                assert!(seen.insert(id), "node {id} in two splits");
            }
        }
        assert_eq!(seen.len(), 60);
    }

    #[test]
    fn split_graphs_match_induced_subgraph_oracle() {
        let g = complete(10);
        for seed in 0..20 {
            let b = make_splits(&g, seed).unwrap();
            for (_, split) in b.splits() {
                let k = split.source_ids.len();
                assert_eq!(split.graph.num_edges(), k * (k - 1) / 2);
                for (local, &src) in split.source_ids.iter().enumerate() {
                    assert_eq!(split.graph.feature_row(local), g.feature_row(src));
                    assert_eq!(split.graph.labels()[local], g.labels()[src]);
                }
            }
        }
        let sparse = gnp(30, 0.2, 4);
        let b = make_splits(&sparse, 2).unwrap();
        let ids = &b.target_train.source_ids;
        let oracle = ids
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| ids[i + 1..].iter().map(move |&c| (a, c)))
            .filter(|&(a, c)| sparse.has_edge(a, c))
            .count();
        assert_eq!(b.target_train.graph.num_edges(), oracle);
    }

    #[test]
    fn tiny_graph_is_rejected() {
        let g = complete(3);
        assert!(matches!(make_splits(&g, 0), Err(Error::GraphTooSmall(_))));
    }

    #[test]
    fn shadow_subsampling_shrinks_shadow_only() {
        let g = gnp(200, 0.05, 5);
        let b = make_splits_with(&g, 0.2, &mut rng::stream(1, "split")).unwrap();
        assert_eq!(b.target_train.graph.num_nodes(), 80);
        assert_eq!(b.shadow_train.graph.num_nodes() + b.shadow_test.graph.num_nodes(), 20);
    }

    #[test]
    fn dense_graphs_cannot_be_balanced() {
        assert!(matches!(
            build_pair_dataset(&complete(3), 0),
            Err(Error::GraphTooDense(_))
        ));
        let path = Graph::new(3, [(0, 1), (1, 2)], Tensor::zeros(3, 1), vec![0; 3], 1).unwrap();
        assert!(matches!(build_pair_dataset(&path, 0), Err(Error::GraphTooDense(_))));
    }

    #[test]
    fn pair_dataset_membership_and_balance() {
        let g = gnp(50, 0.1, 7);
        let ds = build_pair_dataset(&g, 11).unwrap();
        let pos = ds.positives().count();
        assert_eq!(pos, g.num_edges());
        assert_eq!(ds.len(), 2 * pos);
        let mut seen = HashSet::new();
        for p in &ds.pairs {
            assert_ne!(p.u, p.v);
            assert_eq!(g.has_edge(p.u, p.v), p.linked);
            assert!(seen.insert(p.edge()));
        }
        assert_eq!(ds, build_pair_dataset(&g, 11).unwrap());
    }

    #[test]
    fn pair_dataset_dense_branch_is_exhaustive() {
        // 6 nodes, 6 edges, 9 non-edges: the enumeration branch runs.
        let g = Graph::new(
            6,
            [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)],
            Tensor::zeros(6, 1),
            vec![0; 6],
            1,
        )
        .unwrap();
        let ds = build_pair_dataset(&g, 1).unwrap();
        assert_eq!(ds.pairs.iter().filter(|p| !p.linked).count(), 6);
        assert!(ds.pairs.iter().filter(|p| !p.linked).all(|p| !g.has_edge(p.u, p.v)));
    }

    #[test]
    fn planted_partition_properties() {
        let spec = PlantedPartition {
            nodes: 60,
            communities: 3,
            p_in: 0.5,
            p_out: 0.0,
            feature_dim: 4,
            noise: 0.0,
            seed: 1,
        };
        let g = generate_planted_partition(&spec).unwrap();
        for e in g.edges() {
            assert_eq!(g.labels()[e.low()], g.labels()[e.high()]);
        }
        for v in 1..60 {
            if g.labels()[v] == g.labels()[v - 1] {
                assert_eq!(g.feature_row(v), g.feature_row(v - 1));
            }
        }
        let bad = PlantedPartition {
            p_in: 0.1,
            p_out: 0.2,
            ..spec.clone()
        };
        assert!(generate_planted_partition(&bad).is_err());
        assert!(generate_planted_partition(&PlantedPartition {
            communities: 1,
            ..spec.clone()
        })
        .is_err());
        assert!(generate_planted_partition(&PlantedPartition { p_in: 1.5, ..spec }).is_err());
    }

    #[test]
    fn planted_partition_edge_rates() {
        let spec = PlantedPartition {
            nodes: 400,
            communities: 4,
            p_in: 0.1,
            p_out: 0.005,
            feature_dim: 2,
            noise: 1.0,
            seed: 3,
        };
        let g = generate_planted_partition(&spec).unwrap();
        let intra = g
            .edges()
            .filter(|e| g.labels()[e.low()] == g.labels()[e.high()])
            .count() as f64;
        let total = g.num_edges() as f64;
        let intra_pairs = 4.0 * (100.0 * 99.0 / 2.0);
        let inter_pairs = 400.0 * 399.0 / 2.0 - intra_pairs;
        let expected_intra = intra_pairs * 0.1;
        let expected_fraction = expected_intra / (expected_intra + inter_pairs * 0.005);
        assert!((intra - expected_intra).abs() / expected_intra < 0.1, "intra {intra}");
        assert!(((intra / total) - expected_fraction).abs() / expected_fraction < 0.1);
    }

    #[test]
    fn dataset_directory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = generate_planted_partition(&PlantedPartition {
            nodes: 20,
            feature_dim: 3,
            ..Default::default()
        })
        .unwrap();
        save_dataset(&g, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.graph, g);
    }

    #[test]
    fn loader_remaps_external_ids_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(IDS_FILE), "doc-a\ndoc-b\ndoc-c\n").unwrap();
        fs::write(dir.path().join(EDGES_FILE), "doc-a\tdoc-c\ndoc-c doc-a\n").unwrap();
        fs::write(dir.path().join(FEATURES_FILE), "1,0\n0,1\n0.5,0.5\n").unwrap();
        fs::write(dir.path().join(LABELS_FILE), "0\n1\n1\n").unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.graph.num_edges(), 1);
        assert!(ds.graph.has_edge(0, 2));
        assert_eq!(ds.external_ids[2], "doc-c");

        fs::write(dir.path().join(LABELS_FILE), "0\n1\n").unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Parse { .. })));
        fs::write(dir.path().join(LABELS_FILE), "0\n1\n1\n").unwrap();
        fs::write(dir.path().join(FEATURES_FILE), "1,0\n0\n0.5,0.5\n").unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn manifest_replays_splits() {
        let g = gnp(40, 0.1, 2);
        let b = make_splits(&g, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.write_manifest(dir.path()).unwrap();
        assert_eq!(SplitBundle::read_manifest(&g, dir.path()).unwrap(), b);
    }
}
