//! Metrics and post-hoc analyses of attack scores.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gnn::Posterior;
use crate::graph::Edge;

/// One attacked pair with its link probability and ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredPair {
    pub pair: Edge,
    pub score: f64,
    pub linked: bool,
}

/// 1-based ranks, ties sharing the average of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Area under the ROC curve via the Mann-Whitney statistic; ties count half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("auc input"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid("AUC needs both positive and negative examples"));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

pub fn auc_of(scored: &[ScoredPair]) -> Result<f64> {
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let labels: Vec<bool> = scored.iter().map(|s| s.linked).collect();
    auc(&scores, &labels)
}

/// AUC of a set of positive scores against a set of negative scores.
pub fn auc_split(positive: &[f64], negative: &[f64]) -> Result<f64> {
    let scores: Vec<f64> = positive.iter().chain(negative).copied().collect();
    let labels: Vec<bool> = (0..scores.len()).map(|i| i < positive.len()).collect();
    auc(&scores, &labels)
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let correct = predictions.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Sample Pearson correlation; 0 when either side has zero variance or
/// fewer than two points are given.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} vs {} values", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (Pearson over average ranks).
pub fn spearman_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} vs {} values", x.len(), y.len())));
    }
    pearson_correlation(&average_ranks(x), &average_ranks(y))
}

/// Pair-level measures used to stratify positive pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroupMetric {
    NodeSimilarity,
    CommonNeighbors,
    PreferentialAttachment,
    Jaccard,
}

impl GroupMetric {
    pub const ALL: [GroupMetric; 4] = [
        GroupMetric::NodeSimilarity,
        GroupMetric::CommonNeighbors,
        GroupMetric::PreferentialAttachment,
        GroupMetric::Jaccard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GroupMetric::NodeSimilarity => "node_similarity",
            GroupMetric::CommonNeighbors => "common_neighbors",
            GroupMetric::PreferentialAttachment => "preferential_attachment",
            GroupMetric::Jaccard => "jaccard",
        }
    }
}

impl fmt::Display for GroupMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GroupMetric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric `{s}`")))
    }
}

pub const NUM_GROUPS: usize = 10;

/// Per-group AUCs for positives stratified by one metric.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupReport {
    pub metric: GroupMetric,
    /// Indices into the positive list, group 0 holding the highest metric values.
    pub groups: Vec<Vec<usize>>,
    /// `(highest, lowest)` metric value in each group.
    pub bounds: Vec<(f64, f64)>,
    pub aucs: Vec<f64>,
}

impl GroupReport {
    pub fn last_group(&self) -> &[usize] {
        self.groups.last().map_or(&[], Vec::as_slice)
    }
}

/// Splits positive indices into ten contiguous, near-equal groups after sorting
/// by metric descending (ties by pair). The first `P mod 10` groups get one extra.
pub fn partition_by_metric(pairs: &[Edge], metric: &[f64]) -> Result<Vec<Vec<usize>>> {
    if pairs.len() != metric.len() {
        return Err(Error::shape(format!(
            "{} pairs, {} metric values",
            pairs.len(),
            metric.len()
        )));
    }
    if pairs.len() < NUM_GROUPS {
        return Err(Error::invalid(format!(
            "{} positives cannot fill {NUM_GROUPS} groups",
            pairs.len()
        )));
    }
    if metric.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite("group metric"));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| match metric[b].total_cmp(&metric[a]) {
        Ordering::Equal => pairs[a].cmp(&pairs[b]),
        o => o,
    });
    let base = pairs.len() / NUM_GROUPS;
    let extra = pairs.len() % NUM_GROUPS;
    let mut groups = Vec::with_capacity(NUM_GROUPS);
    let mut start = 0;
    for g in 0..NUM_GROUPS {
        let size = base + usize::from(g < extra);
        groups.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(groups)
}

/// Groups `positives` by `metric` and scores each group against every negative.
pub fn robustness_groups(
    metric_kind: GroupMetric,
    positives: &[ScoredPair],
    negative_scores: &[f64],
    metric: &[f64],
) -> Result<GroupReport> {
    let pairs: Vec<Edge> = positives.iter().map(|p| p.pair).collect();
    let groups = partition_by_metric(&pairs, metric)?;
    let mut aucs = Vec::with_capacity(groups.len());
    let mut bounds = Vec::with_capacity(groups.len());
    for group in &groups {
        let scores: Vec<f64> = group.iter().map(|&i| positives[i].score).collect();
        aucs.push(auc_split(&scores, negative_scores)?);
        bounds.push((metric[group[0]], metric[*group.last().expect("nonempty group")]));
    }
    Ok(GroupReport {
        metric: metric_kind,
        groups,
        bounds,
        aucs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurprisingLinks {
    /// Share of the given group found by the attack but missed by the baseline.
    pub group: f64,
    /// Same share over all positives, as a reference.
    pub overall: f64,
}

/// Positives the attack flags as linked while the baseline does not.
pub fn surprising_links(attack: &[bool], baseline: &[bool], group: &[usize]) -> Result<SurprisingLinks> {
    if attack.len() != baseline.len() {
        return Err(Error::shape(format!(
            "{} attack verdicts, {} baseline verdicts",
            attack.len(),
            baseline.len()
        )));
    }
    if group.is_empty() || attack.is_empty() {
        return Err(Error::invalid("surprising-link rate of an empty group"));
    }
    let surprising = |i: usize| attack[i] && !baseline[i];
    if let Some(&bad) = group.iter().find(|&&i| i >= attack.len()) {
        return Err(Error::invalid(format!("group index {bad} out of range")));
    }
    let in_group = group.iter().filter(|&&i| surprising(i)).count();
    let overall = (0..attack.len()).filter(|&i| surprising(i)).count();
    Ok(SurprisingLinks {
        group: in_group as f64 / group.len() as f64,
        overall: overall as f64 / attack.len() as f64,
    })
}

/// Empirical CDF of each posterior's largest entry: `(value, fraction ≤ value)`
/// at every distinct value, ascending.
pub fn leading_probability_cdf(posteriors: &[Posterior]) -> Vec<(f64, f64)> {
    let mut lead: Vec<f64> = posteriors.iter().map(Posterior::leading_probability).collect();
    lead.sort_by(f64::total_cmp);
    let n = lead.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in lead.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    out
}

pub fn write_cdf_csv(path: &Path, cdf: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["leading_probability", "cumulative_fraction"])?;
    for (v, f) in cdf {
        w.write_record([v.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_group_csv(path: &Path, reports: &[(String, GroupReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["attack", "metric", "group", "size", "metric_high", "metric_low", "auc"])?;
    for (attack, r) in reports {
        for (g, ((group, (hi, lo)), a)) in r.groups.iter().zip(&r.bounds).zip(&r.aucs).enumerate() {
            w.write_record([
                attack.clone(),
                r.metric.to_string(),
                g.to_string(),
                group.len().to_string(),
                hi.to_string(),
                lo.to_string(),
                a.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
