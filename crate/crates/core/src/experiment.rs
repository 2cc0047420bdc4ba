//! End-to-end experiments: configuration, seeded multi-run execution, the
//! defense sweep, cross-dataset transfer and CSV reports.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::attack::{
    posterior_slot, train_attack, AttackExample, AttackId, AttackSpec, AttackTrainConfig, MultiInputMlp, OpSet,
    PosteriorEncoding, QueryOptions,
};
use crate::data::{
    build_pair_dataset_with, generate_planted_partition, load_dataset, make_splits_with, PairDataset, PlantedPartition,
    Provenance, SplitBundle,
};
use crate::defense::{perturb_graph, DefenseConfig, DefenseKind};
use crate::error::{Error, Result, StageContext};
use crate::eval::{
    accuracy, auc_of, leading_probability_cdf, pearson_correlation, robustness_groups, surprising_links, GroupMetric,
    GroupReport, ScoredPair, SurprisingLinks,
};
use crate::features::{cosine_similarity, graph_block, node_attr_block, proximity, FeatureBlock, QueryContext};
use crate::gnn::{train_gnn_with, Arch, GnnModel, GnnTrainConfig, Posterior, Topology};
use crate::graph::{Edge, Graph, Hop};
use crate::rng::{self, derive_seed};

/// Where a run's graph comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    /// Synthetic graph; `seed: None` draws a fresh graph from every run seed.
    Planted {
        params: PlantedPartition,
        seed: Option<u64>,
    },
    Directory(PathBuf),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Planted {
            params: PlantedPartition::default(),
            seed: None,
        }
    }
}

impl FromStr for DatasetSource {
    type Err = Error;

    /// `planted`, `planted:key=value,...` or a dataset directory.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let Some(rest) = s.strip_prefix("planted") else {
            return Ok(DatasetSource::Directory(PathBuf::from(s)));
        };
        let rest = match rest.strip_prefix(':') {
            Some(r) => r,
            None if rest.is_empty() => "",
            None => return Ok(DatasetSource::Directory(PathBuf::from(s))),
        };
        let mut params = PlantedPartition::default();
        let mut seed = None;
        for item in rest.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected key=value in `{item}`")))?;
            let bad = |e: &dyn fmt::Display| Error::invalid(format!("planted {key}: {e}"));
            match key.trim() {
                "n" | "nodes" => params.nodes = value.parse().map_err(|e| bad(&e))?,
                "c" | "communities" => params.communities = value.parse().map_err(|e| bad(&e))?,
                "p_in" => params.p_in = value.parse().map_err(|e| bad(&e))?,
                "p_out" => params.p_out = value.parse().map_err(|e| bad(&e))?,
                "d" | "dim" | "feature_dim" => params.feature_dim = value.parse().map_err(|e| bad(&e))?,
                "noise" => params.noise = value.parse().map_err(|e| bad(&e))?,
                "seed" => seed = Some(value.parse().map_err(|e| bad(&e))?),
                other => return Err(Error::invalid(format!("unknown planted-partition key `{other}`"))),
            }
        }
        Ok(DatasetSource::Planted { params, seed })
    }
}

impl fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSource::Directory(p) => write!(f, "{}", p.display()),
            DatasetSource::Planted { params: p, seed } => {
                write!(
                    f,
                    "planted:nodes={},communities={},p_in={},p_out={},dim={},noise={}",
                    p.nodes, p.communities, p.p_in, p.p_out, p.feature_dim, p.noise
                )?;
                if let Some(s) = seed {
                    write!(f, ",seed={s}")?;
                }
                Ok(())
            }
        }
    }
}

/// A dataset ready to hand out one graph per run.
enum LoadedDataset {
    Fixed(Graph),
    Planted(PlantedPartition),
}

impl LoadedDataset {
    fn open(source: &DatasetSource) -> Result<Self> {
        match source {
            DatasetSource::Directory(dir) => Ok(LoadedDataset::Fixed(load_dataset(dir)?.graph)),
            DatasetSource::Planted { params, seed: Some(s) } => {
                Ok(LoadedDataset::Fixed(generate_planted_partition(&PlantedPartition {
                    seed: *s,
                    ..params.clone()
                })?))
            }
            DatasetSource::Planted { params, seed: None } => {
                // Fail on bad parameters here rather than inside every run.
                generate_planted_partition(params).map(|_| LoadedDataset::Planted(params.clone()))
            }
        }
    }

    fn graph(&self, run_seed: u64) -> Result<std::borrow::Cow<'_, Graph>> {
        match self {
            LoadedDataset::Fixed(g) => Ok(std::borrow::Cow::Borrowed(g)),
            LoadedDataset::Planted(p) => Ok(std::borrow::Cow::Owned(generate_planted_partition(
                &PlantedPartition {
                    seed: derive_seed(run_seed, "dataset"),
                    ..p.clone()
                },
            )?)),
        }
    }
}

/// Everything that determines an experiment's output.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Dataset supplying shadow training data in transfer experiments.
    pub shadow_dataset: Option<DatasetSource>,
    pub target_arch: Arch,
    pub shadow_arch: Arch,
    pub attacks: Vec<AttackId>,
    /// When set, posterior attacks at other depths are skipped.
    pub hops: Option<Vec<Hop>>,
    pub defense: DefenseConfig,
    pub epsilons: Vec<f64>,
    pub shadow_fraction: f64,
    pub runs: usize,
    pub seed: u64,
    pub gnn: GnnTrainConfig,
    pub attack_train: AttackTrainConfig,
    pub ops: OpSet,
    /// Negative control: shuffle link labels of the attack training set.
    pub shuffle_attack_labels: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::default(),
            shadow_dataset: None,
            target_arch: Arch::Sage,
            shadow_arch: Arch::Sage,
            attacks: AttackId::ALL.to_vec(),
            hops: None,
            defense: DefenseConfig::none(),
            epsilons: (1..=10).map(f64::from).collect(),
            shadow_fraction: 1.0,
            runs: 5,
            seed: 0,
            gnn: GnnTrainConfig::default(),
            attack_train: AttackTrainConfig::default(),
            ops: OpSet::default(),
            shuffle_attack_labels: false,
        }
    }
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|e| Error::invalid(format!("`{v}`: {e}"))))
        .collect()
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::invalid(format!("{key} = `{value}`: {e}")))
}

/// Budgets as a comma list, or an inclusive integer range `a..b`.
pub fn parse_epsilons(value: &str) -> Result<Vec<f64>> {
    if let Some((a, b)) = value.split_once("..") {
        let (a, b): (u32, u32) = (parse_value("epsilon", a)?, parse_value("epsilon", b)?);
        if a > b {
            return Err(Error::invalid(format!("empty epsilon range {a}..{b}")));
        }
        return Ok((a..=b).map(f64::from).collect());
    }
    parse_list(value)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(Error::invalid(format!("{key} = `{other}` is not a boolean"))),
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "dataset" => self.dataset = value.parse()?,
            "shadow_dataset" => self.shadow_dataset = Some(value.parse()?),
            "arch" | "target_arch" => self.target_arch = parse_value(key, value)?,
            "shadow_arch" => self.shadow_arch = parse_value(key, value)?,
            "attack" | "attacks" => {
                self.attacks = if value.eq_ignore_ascii_case("all") {
                    AttackId::ALL.to_vec()
                } else {
                    parse_list(value)?
                }
            }
            "hop" | "hops" => {
                let depths: Vec<usize> = parse_list(value)?;
                self.hops = Some(depths.into_iter().map(Hop::from_depth).collect::<Result<_>>()?);
            }
            "defense" => self.defense.kind = parse_value(key, value)?,
            "epsilon" | "epsilons" => {
                self.epsilons = parse_epsilons(value)?;
                if let Some(&first) = self.epsilons.first() {
                    self.defense.epsilon = first;
                }
            }
            "temperature" => self.defense.temperature = parse_value(key, value)?,
            "budget_split" => self.defense.budget_split = parse_value(key, value)?,
            "shadow_fraction" => self.shadow_fraction = parse_value(key, value)?,
            "runs" => self.runs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "hidden" => self.gnn.hidden = parse_value(key, value)?,
            "epochs" => self.gnn.epochs = parse_value(key, value)?,
            "learning_rate" => self.gnn.learning_rate = parse_value(key, value)?,
            "dropout" => self.gnn.dropout = parse_value(key, value)?,
            "attack_epochs" => self.attack_train.epochs = parse_value(key, value)?,
            "attack_learning_rate" => self.attack_train.learning_rate = parse_value(key, value)?,
            "attack_dropout" => self.attack_train.dropout = parse_value(key, value)?,
            "attack_batch_size" => {
                self.attack_train.batch_size = match value {
                    "full" | "0" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "attack_depth" => self.attack_train.posterior_depth = Some(parse_value(key, value)?),
            "pairwise_ops" => self.ops = value.parse()?,
            "shuffle_attack_labels" => self.shuffle_attack_labels = parse_bool(key, value)?,
            other => return Err(Error::invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses flat `key = value` text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text, Path::new("<config>"))?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got `{line}`")))?;
            self.set(key, value).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&fs::read_to_string(path)?, path)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::invalid("runs must be at least 1"));
        }
        if !(self.shadow_fraction > 0.0 && self.shadow_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "shadow fraction {} outside (0, 1]",
                self.shadow_fraction
            )));
        }
        if self.attacks.is_empty() {
            return Err(Error::invalid("no attacks selected"));
        }
        if self.active_attacks().is_empty() {
            return Err(Error::invalid("the hop filter excludes every selected attack"));
        }
        self.defense.validate()
    }

    /// Selected attacks after the hop filter, deduplicated, in table order.
    pub fn active_attacks(&self) -> Vec<AttackId> {
        let mut ids: Vec<AttackId> = self
            .attacks
            .iter()
            .copied()
            .filter(|id| match (&self.hops, id.spec().hop) {
                (Some(hops), Some(h)) => hops.contains(&h),
                _ => true,
            })
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Query options for the target (`shadow == false`) or shadow model.
    /// Graph perturbation only ever defends the target; output restrictions
    /// are public behavior the adversary reproduces on its shadow model.
    fn query_options(&self, shadow: bool) -> QueryOptions {
        let defense = if shadow && self.defense.kind.is_private() {
            DefenseConfig {
                kind: DefenseKind::None,
                ..self.defense
            }
        } else {
            self.defense
        };
        QueryOptions {
            defense,
            encoding: PosteriorEncoding::Pairwise,
            ops: self.ops,
        }
    }
}

/// Outcome of one attack in one run.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackResult {
    pub attack: AttackId,
    pub auc: f64,
    /// Every attacked target pair with its score.
    pub scores: Vec<ScoredPair>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub target_accuracy: f64,
    pub shadow_accuracy: f64,
    pub attacks: Vec<AttackResult>,
    pub splits: SplitBundle,
    pub target_model: GnnModel,
    pub shadow_model: GnnModel,
    pub elapsed: Duration,
}

impl RunResult {
    pub fn attack(&self, id: AttackId) -> Option<&AttackResult> {
        self.attacks.iter().find(|a| a.attack == id)
    }
}

/// All runs of one experiment, in run order.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub runs: Vec<RunResult>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl RunReport {
    pub fn attacks(&self) -> Vec<AttackId> {
        self.runs
            .first()
            .map_or_else(Vec::new, |r| r.attacks.iter().map(|a| a.attack).collect())
    }

    pub fn aucs(&self, id: AttackId) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.attack(id)).map(|a| a.auc).collect()
    }

    pub fn mean_auc(&self, id: AttackId) -> Option<f64> {
        mean(self.aucs(id))
    }

    pub fn mean_target_accuracy(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.target_accuracy)).unwrap_or(f64::NAN)
    }

    pub fn mean_shadow_accuracy(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.shadow_accuracy)).unwrap_or(f64::NAN)
    }

    pub fn total_elapsed(&self) -> Duration {
        self.runs.iter().map(|r| r.elapsed).sum()
    }
}

/// Per-pair inputs shared by every attack of a run.
#[derive(Clone, Debug)]
struct PairParts {
    posterior: [Option<FeatureBlock>; 3],
    node_attr: Option<FeatureBlock>,
    graph: Option<FeatureBlock>,
}

impl PairParts {
    fn select(&self, spec: &AttackSpec) -> Result<Vec<FeatureBlock>> {
        let missing = |what: &str| Error::invalid(format!("{what} block was not computed for {}", spec.id));
        let mut blocks = Vec::with_capacity(3);
        if spec.posteriors {
            let hop = spec.hop.ok_or_else(|| missing("posterior"))?;
            blocks.push(
                self.posterior[hop.depth()]
                    .clone()
                    .ok_or_else(|| missing("posterior"))?,
            );
        }
        if spec.node_attrs {
            blocks.push(self.node_attr.clone().ok_or_else(|| missing("node attribute"))?);
        }
        if spec.graph_feats {
            blocks.push(self.graph.clone().ok_or_else(|| missing("graph"))?);
        }
        Ok(blocks)
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Needs {
    hops: [bool; 3],
    node_attr: bool,
    graph: bool,
}

impl Needs {
    fn of(attacks: &[AttackId]) -> Self {
        let mut n = Needs::default();
        for spec in attacks.iter().map(|a| a.spec()) {
            if let (true, Some(h)) = (spec.posteriors, spec.hop) {
                n.hops[h.depth()] = true;
            }
            n.node_attr |= spec.node_attrs;
            n.graph |= spec.graph_feats;
        }
        n
    }
}

fn compute_parts(
    model: &GnnModel,
    g: &Graph,
    pairs: &PairDataset,
    needs: Needs,
    opts: &QueryOptions,
) -> Result<Vec<PairParts>> {
    pairs
        .pairs
        .par_iter()
        .map(|p| {
            let mut posterior: [Option<FeatureBlock>; 3] = [None, None, None];
            for hop in Hop::ALL {
                if needs.hops[hop.depth()] {
                    let ctx = QueryContext::new(g, p.u, p.v, hop)?;
                    posterior[hop.depth()] = Some(posterior_slot(model, &ctx, opts)?);
                }
            }
            let node_attr = if needs.node_attr {
                Some(node_attr_block(g.feature_row(p.u), g.feature_row(p.v))?)
            } else {
                None
            };
            let graph = if needs.graph {
                Some(graph_block(&QueryContext::new(g, p.u, p.v, Hop::One)?)?)
            } else {
                None
            };
            Ok(PairParts {
                posterior,
                node_attr,
                graph,
            })
        })
        .collect()
}

fn test_accuracy(model: &GnnModel, g: &Graph) -> Result<f64> {
    if g.num_nodes() == 0 {
        return Ok(f64::NAN);
    }
    accuracy(&model.predict_graph(g)?, g.labels())
}

/// Trains one attack from shadow parts and scores the target pairs.
fn run_attack(
    id: AttackId,
    cfg: &ExperimentConfig,
    run_seed: u64,
    shadow: (&PairDataset, &[PairParts]),
    target: (&PairDataset, &[PairParts]),
) -> Result<(AttackResult, MultiInputMlp)> {
    shadow.0.require(Provenance::ShadowTrain)?;
    target.0.require(Provenance::TargetTrain)?;
    let spec = id.spec();
    let mut examples = shadow
        .0
        .pairs
        .iter()
        .zip(shadow.1)
        .map(|(p, parts)| {
            Ok(AttackExample {
                blocks: parts.select(&spec)?,
                linked: p.linked,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if cfg.shuffle_attack_labels {
        let mut labels: Vec<bool> = examples.iter().map(|e| e.linked).collect();
        labels.shuffle(&mut rng::stream(run_seed, &format!("control-{id}")));
        for (e, l) in examples.iter_mut().zip(labels) {
            e.linked = l;
        }
    }
    let mut attack_rng = rng::stream(run_seed, &format!("attack-train-{id}"));
    let model = train_attack(spec, &examples, &cfg.attack_train, &mut attack_rng)?;
    let test_blocks = target
        .1
        .iter()
        .map(|parts| parts.select(&spec))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<&[FeatureBlock]> = test_blocks.iter().map(Vec::as_slice).collect();
    let verdicts = model.score_pairs(&rows)?;
    let scores: Vec<ScoredPair> = target
        .0
        .pairs
        .iter()
        .zip(verdicts)
        .map(|(p, v)| ScoredPair {
            pair: p.edge(),
            score: v.score,
            linked: p.linked,
        })
        .collect();
    Ok((
        AttackResult {
            attack: id,
            auc: auc_of(&scores)?,
            scores,
        },
        model,
    ))
}

fn run_once(cfg: &ExperimentConfig, data: &LoadedDataset, run: usize, attacks: &[AttackId]) -> Result<RunResult> {
    let start = Instant::now();
    let seed = cfg.seed.wrapping_add(run as u64);
    let graph = data.graph(seed).stage("dataset")?;
    let splits = make_splits_with(&graph, cfg.shadow_fraction, &mut rng::stream(seed, "split")).stage("split")?;

    let target_graph = if cfg.defense.kind.is_private() {
        perturb_graph(
            &splits.target_train.graph,
            &cfg.defense,
            &mut rng::stream(seed, "defense"),
        )
        .stage("defense")?
    } else {
        splits.target_train.graph.clone()
    };
    let target_model = train_gnn_with(
        &target_graph,
        cfg.target_arch,
        &cfg.gnn,
        &mut rng::stream(seed, "target-train"),
    )
    .stage("target-train")?;
    let shadow_model = train_gnn_with(
        &splits.shadow_train.graph,
        cfg.shadow_arch,
        &cfg.gnn,
        &mut rng::stream(seed, "shadow-train"),
    )
    .stage("shadow-train")?;
    let target_accuracy = test_accuracy(&target_model, &splits.target_test.graph).stage("target-eval")?;
    let shadow_accuracy = test_accuracy(&shadow_model, &splits.shadow_test.graph).stage("shadow-eval")?;

    if attacks.is_empty() {
        return Ok(RunResult {
            run,
            seed,
            target_accuracy,
            shadow_accuracy,
            attacks: Vec::new(),
            splits,
            target_model,
            shadow_model,
            elapsed: start.elapsed(),
        });
    }
    let shadow_pairs = build_pair_dataset_with(
        &splits.shadow_train.graph,
        Provenance::ShadowTrain,
        &mut rng::stream(seed, "negative-sample-shadow"),
    )
    .stage("shadow-pairs")?;
    let target_pairs = build_pair_dataset_with(
        &splits.target_train.graph,
        Provenance::TargetTrain,
        &mut rng::stream(seed, "negative-sample-target"),
    )
    .stage("target-pairs")?;

    let needs = Needs::of(attacks);
    let shadow_parts = compute_parts(
        &shadow_model,
        &splits.shadow_train.graph,
        &shadow_pairs,
        needs,
        &cfg.query_options(true),
    )
    .stage("shadow-features")?;
    let target_parts = compute_parts(
        &target_model,
        &splits.target_train.graph,
        &target_pairs,
        needs,
        &cfg.query_options(false),
    )
    .stage("target-features")?;

    let results = attacks
        .par_iter()
        .map(|&id| {
            run_attack(
                id,
                cfg,
                seed,
                (&shadow_pairs, &shadow_parts),
                (&target_pairs, &target_parts),
            )
            .map(|(r, _)| r)
            .stage("attack")
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RunResult {
        run,
        seed,
        target_accuracy,
        shadow_accuracy,
        attacks: results,
        splits,
        target_model,
        shadow_model,
        elapsed: start.elapsed(),
    })
}

/// Runs the full pipeline `cfg.runs` times with seeds `seed, seed+1, ...`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let data = LoadedDataset::open(&cfg.dataset).stage("dataset")?;
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|r| run_once(cfg, &data, r, &cfg.active_attacks()))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport { runs })
}

/// Trains target and shadow models for every run without attacking them.
pub fn train_models(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let data = LoadedDataset::open(&cfg.dataset).stage("dataset")?;
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|r| run_once(cfg, &data, r, &[]))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport { runs })
}

/// Attacks a target dataset with a shadow model trained on another dataset,
/// using class-count independent posterior features.
pub fn run_transfer(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let shadow_source = cfg.shadow_dataset.as_ref().unwrap_or(&cfg.dataset);
    let target_data = LoadedDataset::open(&cfg.dataset).stage("dataset")?;
    let shadow_data = LoadedDataset::open(shadow_source).stage("shadow-dataset")?;
    let hops = cfg.hops.clone().unwrap_or_else(|| vec![Hop::One]);
    let attacks: Vec<AttackId> = [AttackId::Attack0, AttackId::Attack1, AttackId::Attack2]
        .into_iter()
        .filter(|a| a.spec().hop.is_some_and(|h| hops.contains(&h)))
        .collect();
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let start = Instant::now();
            let seed = cfg.seed.wrapping_add(run as u64);
            let target_graph = target_data.graph(seed).stage("dataset")?;
            let shadow_graph = shadow_data
                .graph(derive_seed(seed, "shadow-dataset"))
                .stage("shadow-dataset")?;
            let target_splits = make_splits_with(&target_graph, 1.0, &mut rng::stream(seed, "split")).stage("split")?;
            let shadow_splits = make_splits_with(
                &shadow_graph,
                cfg.shadow_fraction,
                &mut rng::stream(seed, "shadow-split"),
            )
            .stage("split")?;
            let splits = SplitBundle {
                target_train: target_splits.target_train,
                target_test: target_splits.target_test,
                shadow_train: shadow_splits.shadow_train,
                shadow_test: shadow_splits.shadow_test,
            };
            let target_model = train_gnn_with(
                &splits.target_train.graph,
                cfg.target_arch,
                &cfg.gnn,
                &mut rng::stream(seed, "target-train"),
            )
            .stage("target-train")?;
            let shadow_model = train_gnn_with(
                &splits.shadow_train.graph,
                cfg.shadow_arch,
                &cfg.gnn,
                &mut rng::stream(seed, "shadow-train"),
            )
            .stage("shadow-train")?;
            let target_accuracy = test_accuracy(&target_model, &splits.target_test.graph).stage("target-eval")?;
            let shadow_accuracy = test_accuracy(&shadow_model, &splits.shadow_test.graph).stage("shadow-eval")?;
            let shadow_pairs = build_pair_dataset_with(
                &splits.shadow_train.graph,
                Provenance::ShadowTrain,
                &mut rng::stream(seed, "negative-sample-shadow"),
            )
            .stage("shadow-pairs")?;
            let target_pairs = build_pair_dataset_with(
                &splits.target_train.graph,
                Provenance::TargetTrain,
                &mut rng::stream(seed, "negative-sample-target"),
            )
            .stage("target-pairs")?;
            let needs = Needs::of(&attacks);
            let transfer = |shadow: bool| QueryOptions {
                encoding: PosteriorEncoding::Transfer,
                ..cfg.query_options(shadow)
            };
            let shadow_parts = compute_parts(
                &shadow_model,
                &splits.shadow_train.graph,
                &shadow_pairs,
                needs,
                &transfer(true),
            )
            .stage("shadow-features")?;
            let target_parts = compute_parts(
                &target_model,
                &splits.target_train.graph,
                &target_pairs,
                needs,
                &transfer(false),
            )
            .stage("target-features")?;
            let results = attacks
                .iter()
                .map(|&id| {
                    run_attack(
                        id,
                        cfg,
                        seed,
                        (&shadow_pairs, &shadow_parts),
                        (&target_pairs, &target_parts),
                    )
                    .map(|(r, _)| r)
                    .stage("attack")
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RunResult {
                run,
                seed,
                target_accuracy,
                shadow_accuracy,
                attacks: results,
                splits,
                target_model,
                shadow_model,
                elapsed: start.elapsed(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport { runs })
}

/// One point of a privacy-budget sweep; `epsilon: None` is the undefended model.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub run: usize,
    pub epsilon: Option<f64>,
    pub target_accuracy: f64,
    pub auc: f64,
    /// Edges of the (possibly perturbed) training graph the target saw.
    pub training_edges: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub defense: DefenseKind,
    pub attack: AttackId,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// `(epsilon, mean target accuracy, mean AUC)` in sweep order, undefended first.
    pub fn means(&self) -> Vec<(Option<f64>, f64, f64)> {
        let mut order: Vec<Option<f64>> = Vec::new();
        for r in &self.rows {
            if !order.iter().any(|e| e.map(f64::to_bits) == r.epsilon.map(f64::to_bits)) {
                order.push(r.epsilon);
            }
        }
        order
            .into_iter()
            .map(|eps| {
                let rows: Vec<&SweepRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.epsilon.map(f64::to_bits) == eps.map(f64::to_bits))
                    .collect();
                (
                    eps,
                    mean(rows.iter().map(|r| r.target_accuracy)).unwrap_or(f64::NAN),
                    mean(rows.iter().map(|r| r.auc)).unwrap_or(f64::NAN),
                )
            })
            .collect()
    }
}

/// Retrains the target on a perturbed graph for every budget and re-runs one
/// attack, trained once per run from the (undefended) shadow model.
pub fn run_defense_sweep(cfg: &ExperimentConfig, epsilons: &[f64]) -> Result<SweepReport> {
    cfg.validate()?;
    if !cfg.defense.kind.is_private() {
        return Err(Error::invalid(format!(
            "a budget sweep needs edgerand or lapgraph, not {}",
            cfg.defense.kind
        )));
    }
    if epsilons.is_empty() {
        return Err(Error::invalid("empty epsilon list"));
    }
    for &e in epsilons {
        DefenseConfig {
            epsilon: e,
            ..cfg.defense
        }
        .validate()?;
    }
    let attack = match cfg.attacks.as_slice() {
        [only] => *only,
        _ => AttackId::Attack1,
    };
    if attack.is_baseline() {
        return Err(Error::invalid(format!(
            "{attack} never queries the model; sweep a posterior attack"
        )));
    }
    let data = LoadedDataset::open(&cfg.dataset).stage("dataset")?;
    let per_run = (0..cfg.runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<SweepRow>> {
            let seed = cfg.seed.wrapping_add(run as u64);
            let graph = data.graph(seed).stage("dataset")?;
            let splits =
                make_splits_with(&graph, cfg.shadow_fraction, &mut rng::stream(seed, "split")).stage("split")?;
            let shadow_model = train_gnn_with(
                &splits.shadow_train.graph,
                cfg.shadow_arch,
                &cfg.gnn,
                &mut rng::stream(seed, "shadow-train"),
            )
            .stage("shadow-train")?;
            let shadow_pairs = build_pair_dataset_with(
                &splits.shadow_train.graph,
                Provenance::ShadowTrain,
                &mut rng::stream(seed, "negative-sample-shadow"),
            )
            .stage("shadow-pairs")?;
            let target_pairs = build_pair_dataset_with(
                &splits.target_train.graph,
                Provenance::TargetTrain,
                &mut rng::stream(seed, "negative-sample-target"),
            )
            .stage("target-pairs")?;
            let needs = Needs::of(&[attack]);
            let opts = cfg.query_options(true);
            let shadow_parts = compute_parts(&shadow_model, &splits.shadow_train.graph, &shadow_pairs, needs, &opts)
                .stage("shadow-features")?;
            let spec = attack.spec();
            let examples = shadow_pairs
                .pairs
                .iter()
                .zip(&shadow_parts)
                .map(|(p, parts)| {
                    Ok(AttackExample {
                        blocks: parts.select(&spec)?,
                        linked: p.linked,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let attack_model = train_attack(
                spec,
                &examples,
                &cfg.attack_train,
                &mut rng::stream(seed, &format!("attack-train-{attack}")),
            )
            .stage("attack")?;

            let budgets: Vec<Option<f64>> = std::iter::once(None).chain(epsilons.iter().map(|&e| Some(e))).collect();
            budgets
                .par_iter()
                .map(|&eps| {
                    let train_graph = match eps {
                        None => splits.target_train.graph.clone(),
                        Some(e) => perturb_graph(
                            &splits.target_train.graph,
                            &DefenseConfig {
                                epsilon: e,
                                ..cfg.defense
                            },
                            &mut rng::stream(seed, &format!("defense-{e}")),
                        )
                        .stage("defense")?,
                    };
                    let target_model = train_gnn_with(
                        &train_graph,
                        cfg.target_arch,
                        &cfg.gnn,
                        &mut rng::stream(seed, "target-train"),
                    )
                    .stage("target-train")?;
                    let target_accuracy =
                        test_accuracy(&target_model, &splits.target_test.graph).stage("target-eval")?;
                    let parts = compute_parts(&target_model, &splits.target_train.graph, &target_pairs, needs, &opts)
                        .stage("target-features")?;
                    let blocks = parts.iter().map(|p| p.select(&spec)).collect::<Result<Vec<_>>>()?;
                    let rows: Vec<&[FeatureBlock]> = blocks.iter().map(Vec::as_slice).collect();
                    let scores: Vec<ScoredPair> = target_pairs
                        .pairs
                        .iter()
                        .zip(attack_model.score_pairs(&rows)?)
                        .map(|(p, v)| ScoredPair {
                            pair: p.edge(),
                            score: v.score,
                            linked: p.linked,
                        })
                        .collect();
                    Ok(SweepRow {
                        run,
                        epsilon: eps,
                        target_accuracy,
                        auc: auc_of(&scores)?,
                        training_edges: train_graph.num_edges(),
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        defense: cfg.defense.kind,
        attack,
        rows: per_run.into_iter().flatten().collect(),
    })
}

/// Value of `metric` for each pair of the adversary-visible graph `g`.
pub fn pair_metric(g: &Graph, pairs: &[Edge], metric: GroupMetric) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|&e| {
            if metric == GroupMetric::NodeSimilarity {
                g.check_node(e.low())?;
                g.check_node(e.high())?;
                return Ok(cosine_similarity(g.feature_row(e.low()), g.feature_row(e.high())));
            }
            let nu = g.visible_neighbors(e.low(), Some(e))?.into_iter().collect();
            let nv = g.visible_neighbors(e.high(), Some(e))?.into_iter().collect();
            let [cn, jaccard, pa] = proximity(&nu, &nv);
            Ok(match metric {
                GroupMetric::CommonNeighbors => cn,
                GroupMetric::Jaccard => jaccard,
                GroupMetric::PreferentialAttachment => pa,
                GroupMetric::NodeSimilarity => unreachable!(),
            })
        })
        .collect()
}

/// Robustness, correlation and surprising-link analysis of one run.
#[derive(Clone, Debug)]
pub struct RunAnalysis {
    pub groups: Vec<(AttackId, GroupReport)>,
    /// `(attack, metric, Pearson r)` between attack score and metric over positives.
    pub correlations: Vec<(AttackId, GroupMetric, f64)>,
    /// `(attack, baseline, metric, rates)` over the lowest-metric group.
    pub surprising: Vec<(AttackId, AttackId, GroupMetric, SurprisingLinks)>,
    pub leading_cdf: Vec<(f64, f64)>,
}

/// Baseline an attack is compared with when looking for surprising links.
fn baseline_for(metric: GroupMetric) -> AttackId {
    match metric {
        GroupMetric::NodeSimilarity => AttackId::Baseline0,
        _ => AttackId::Baseline1,
    }
}

pub fn analyze_run(run: &RunResult) -> Result<RunAnalysis> {
    let g = &run.splits.target_train.graph;
    let mut groups = Vec::new();
    let mut correlations = Vec::new();
    let mut surprising = Vec::new();
    for result in &run.attacks {
        let positives: Vec<ScoredPair> = result.scores.iter().filter(|s| s.linked).copied().collect();
        let negatives: Vec<f64> = result.scores.iter().filter(|s| !s.linked).map(|s| s.score).collect();
        let pairs: Vec<Edge> = positives.iter().map(|p| p.pair).collect();
        let pos_scores: Vec<f64> = positives.iter().map(|p| p.score).collect();
        for metric in GroupMetric::ALL {
            let values = pair_metric(g, &pairs, metric)?;
            let report = robustness_groups(metric, &positives, &negatives, &values)?;
            correlations.push((result.attack, metric, pearson_correlation(&pos_scores, &values)?));
            let baseline = baseline_for(metric);
            if !result.attack.is_baseline() {
                if let Some(base) = run.attack(baseline) {
                    let by_pair: BTreeMap<Edge, bool> = base
                        .scores
                        .iter()
                        .filter(|s| s.linked)
                        .map(|s| (s.pair, s.score >= 0.5))
                        .collect();
                    let attack_verdicts: Vec<bool> = positives.iter().map(|p| p.score >= 0.5).collect();
                    let base_verdicts: Vec<bool> = positives
                        .iter()
                        .map(|p| by_pair.get(&p.pair).copied().unwrap_or(false))
                        .collect();
                    let rates = surprising_links(&attack_verdicts, &base_verdicts, report.last_group())?;
                    surprising.push((result.attack, baseline, metric, rates));
                }
            }
            groups.push((result.attack, report));
        }
    }
    let topo = Topology::from_graph(g)?;
    let probs = run.target_model.posteriors(g.features(), &topo, 1.0)?;
    let posteriors = (0..probs.rows())
        .map(|i| Posterior::new(probs.row(i).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunAnalysis {
        groups,
        correlations,
        surprising,
        leading_cdf: leading_probability_cdf(&posteriors),
    })
}

fn writer(dir: &Path, name: &str) -> Result<(csv::Writer<fs::File>, PathBuf)> {
    let path = dir.join(name);
    Ok((csv::Writer::from_path(&path)?, path))
}

/// Writes `runs.csv`, `aucs.csv` and `summary.csv`. Timing is left out so
/// identical configurations give identical bytes.
pub fn write_run_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let (mut w, path) = writer(dir, "runs.csv")?;
    w.write_record(["run", "seed", "target_accuracy", "shadow_accuracy"])?;
    for r in &report.runs {
        w.write_record([
            r.run.to_string(),
            r.seed.to_string(),
            r.target_accuracy.to_string(),
            r.shadow_accuracy.to_string(),
        ])?;
    }
    w.flush()?;
    written.push(path);

    let (mut w, path) = writer(dir, "aucs.csv")?;
    w.write_record(["run", "attack", "auc"])?;
    for r in &report.runs {
        for a in &r.attacks {
            w.write_record([r.run.to_string(), a.attack.to_string(), a.auc.to_string()])?;
        }
    }
    w.flush()?;
    written.push(path);

    let (mut w, path) = writer(dir, "summary.csv")?;
    w.write_record(["attack", "runs", "mean_auc", "min_auc", "max_auc"])?;
    for id in report.attacks() {
        let aucs = report.aucs(id);
        let lo = aucs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = aucs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        w.write_record([
            id.to_string(),
            aucs.len().to_string(),
            report.mean_auc(id).unwrap_or(f64::NAN).to_string(),
            lo.to_string(),
            hi.to_string(),
        ])?;
    }
    w.flush()?;
    written.push(path);
    Ok(written)
}

/// Per-pair attack scores of every run.
pub fn write_pair_scores(report: &RunReport, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let (mut w, path) = writer(dir, "pair_scores.csv")?;
    w.write_record(["run", "attack", "u", "v", "label", "score"])?;
    for r in &report.runs {
        for a in &r.attacks {
            for s in &a.scores {
                w.write_record([
                    r.run.to_string(),
                    a.attack.to_string(),
                    s.pair.low().to_string(),
                    s.pair.high().to_string(),
                    u8::from(s.linked).to_string(),
                    s.score.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(path)
}

/// Split manifests and model checkpoints, one directory per run.
pub fn write_run_artifacts(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for r in &report.runs {
        let run_dir = dir.join(format!("run{}", r.run));
        written.extend(r.splits.write_manifest(&run_dir.join("splits"))?);
        for (name, model) in [("target.ckpt", &r.target_model), ("shadow.ckpt", &r.shadow_model)] {
            let path = run_dir.join(name);
            fs::write(&path, model.to_checkpoint().to_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn write_sweep_report(report: &SweepReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let eps = |e: Option<f64>| e.map_or_else(|| "none".to_string(), |v| v.to_string());
    let (mut w, rows_path) = writer(dir, "sweep_runs.csv")?;
    w.write_record([
        "run",
        "defense",
        "epsilon",
        "attack",
        "target_accuracy",
        "auc",
        "training_edges",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.run.to_string(),
            report.defense.to_string(),
            eps(r.epsilon),
            report.attack.to_string(),
            r.target_accuracy.to_string(),
            r.auc.to_string(),
            r.training_edges.to_string(),
        ])?;
    }
    w.flush()?;
    let (mut w, summary_path) = writer(dir, "sweep_summary.csv")?;
    w.write_record(["defense", "epsilon", "mean_target_accuracy", "mean_auc"])?;
    for (e, acc, auc) in report.means() {
        w.write_record([report.defense.to_string(), eps(e), acc.to_string(), auc.to_string()])?;
    }
    w.flush()?;
    Ok(vec![rows_path, summary_path])
}

pub fn write_analysis(analysis: &RunAnalysis, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let groups: Vec<(String, GroupReport)> = analysis
        .groups
        .iter()
        .map(|(a, g)| (a.to_string(), g.clone()))
        .collect();
    let group_path = dir.join("groups.csv");
    crate::eval::write_group_csv(&group_path, &groups)?;

    let (mut w, corr_path) = writer(dir, "correlations.csv")?;
    w.write_record(["attack", "metric", "pearson"])?;
    for (a, m, r) in &analysis.correlations {
        w.write_record([a.to_string(), m.to_string(), r.to_string()])?;
    }
    w.flush()?;

    let (mut w, surprising_path) = writer(dir, "surprising_links.csv")?;
    w.write_record(["attack", "baseline", "metric", "last_group_rate", "overall_rate"])?;
    for (a, b, m, s) in &analysis.surprising {
        w.write_record([
            a.to_string(),
            b.to_string(),
            m.to_string(),
            s.group.to_string(),
            s.overall.to_string(),
        ])?;
    }
    w.flush()?;

    let cdf_path = dir.join("leading_probability_cdf.csv");
    crate::eval::write_cdf_csv(&cdf_path, &analysis.leading_cdf)?;
    Ok(vec![group_path, corr_path, surprising_path, cdf_path])
}
