//! Metrics over synthesis runs: distances, activation-increase ratios,
//! prediction quality on synthesized inputs and rank-based significance
//! testing.

use crate::error::{Error, Result};
use crate::network::{LabeledInput, Network, NeuronId};
use crate::suspicious::SuspiciousnessReport;
use crate::synthesis::SynthesisResult;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::BTreeMap;

/// The three norms of one perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

/// Manhattan, Euclidean and Chebyshev distances between two vectors.
pub fn distances(a: &[f64], b: &[f64]) -> Result<Distances> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context: "distance operands",
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut l1 = 0.0;
    let mut sq = 0.0;
    let mut linf: f64 = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let d = (x - y).abs();
        l1 += d;
        sq += d * d;
        linf = linf.max(d);
    }
    Ok(Distances {
        l1,
        l2: sq.sqrt(),
        linf,
    })
}

/// Counts (increased, total) pairs of synthesized result and evaluated neuron
/// where the neuron's post-activation value strictly rose.
pub fn activation_increase_counts(
    results: &[SynthesisResult],
    neurons: &[NeuronId],
) -> Result<(u64, u64)> {
    if results.is_empty() {
        return Err(Error::Argument("no synthesis results".into()));
    }
    if neurons.is_empty() {
        return Err(Error::Argument("no neurons to evaluate".into()));
    }
    let mut increased = 0;
    let mut total = 0;
    for r in results {
        for &id in neurons {
            let before = r.original_trace.neuron_value(id)?;
            let after = r.synthesized_trace.neuron_value(id)?;
            total += 1;
            if after > before {
                increased += 1;
            }
        }
    }
    Ok((increased, total))
}

/// Fraction of (result, neuron) pairs whose activation strictly increased.
/// `neurons` may be any head of a ranking, not just the selected set.
pub fn activation_increase_ratio(
    results: &[SynthesisResult],
    neurons: &[NeuronId],
) -> Result<f64> {
    let (increased, total) = activation_increase_counts(results, neurons)?;
    Ok(increased as f64 / total as f64)
}

/// Midranks of the pooled sample (ties share the average rank).
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].partial_cmp(&pooled[j]).expect("no NaN samples"));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

fn u_statistic_from_ranks(ranks_a: f64, n: usize) -> f64 {
    ranks_a - (n * (n + 1)) as f64 / 2.0
}

fn validate_samples(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("empty sample".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Argument("samples must not contain NaN".into()));
    }
    Ok(())
}

/// Rank-sum U statistic of `a` against `b` with a two-sided p-value. The
/// exact permutation distribution is enumerated when the smaller sample has
/// at most 8 observations; larger samples use the normal approximation with
/// tie correction and continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len().min(b.len()) <= 8 {
        mann_whitney_u_exact(a, b)
    } else {
        mann_whitney_u_normal(a, b)
    }
}

/// Exact two-sided p by full enumeration of label assignments.
pub fn mann_whitney_u_exact(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    validate_samples(a, b)?;
    let n = a.len();
    let m = b.len();
    let total = n + m;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let observed = u_statistic_from_ranks(ranks[..n].iter().sum(), n);

    let mid = (n * m) as f64 / 2.0;
    let observed_dev = (observed - mid).abs();

    // Walk every n-subset of pooled positions in lexicographic order. Rank
    // values are multiples of 1/2, so sums and comparisons are exact.
    let mut combo: Vec<usize> = (0..n).collect();
    let mut extreme: u64 = 0;
    let mut count: u64 = 0;
    loop {
        let rank_sum: f64 = combo.iter().map(|&i| ranks[i]).sum();
        let u = u_statistic_from_ranks(rank_sum, n);
        if (u - mid).abs() >= observed_dev {
            extreme += 1;
        }
        count += 1;

        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return Ok((observed, extreme as f64 / count as f64));
            }
            i -= 1;
            if combo[i] != i + total - n {
                break;
            }
        }
        combo[i] += 1;
        for j in i + 1..n {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

/// Normal approximation with midrank tie correction and continuity
/// correction.
pub fn mann_whitney_u_normal(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    validate_samples(a, b)?;
    let n = a.len();
    let m = b.len();
    let total = n + m;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let observed = u_statistic_from_ranks(ranks[..n].iter().sum(), n);

    // tie correction: sum t^3 - t over groups of equal values
    let mut sorted = pooled.clone();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("no NaN samples"));
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }

    let nm = (n * m) as f64;
    let nt = total as f64;
    let variance = nm / 12.0 * ((nt + 1.0) - tie_term / (nt * (nt - 1.0)));
    if variance <= 0.0 {
        // every observation tied: no evidence of a difference
        return Ok((observed, 1.0));
    }
    let z = ((observed - nm / 2.0).abs() - 0.5).max(0.0) / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p = (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0);
    Ok((observed, p))
}

/// Per-run distance means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mean_l1: f64,
    pub mean_l2: f64,
    pub mean_linf: f64,
}

/// Aggregate metrics of one synthesis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Cross-entropy of the synthesized inputs against their original labels.
    pub loss: f64,
    /// Fraction of synthesized inputs still classified as their original label.
    pub accuracy: f64,
    pub distances: DistanceStats,
    pub activation_increase_ratio: f64,
    /// Selected suspicious neurons per hidden layer.
    pub per_layer_counts: BTreeMap<usize, usize>,
    pub runtime_seconds: f64,
}

/// Summarizes a synthesis run against the report that guided it. Loss and
/// accuracy are measured with the originals' ground-truth labels, so a
/// prediction flip counts against accuracy.
pub fn summarize(
    net: &Network,
    results: &[SynthesisResult],
    report: &SuspiciousnessReport,
    elapsed_seconds: f64,
) -> Result<EvalSummary> {
    if results.is_empty() {
        return Err(Error::Argument("no synthesis results".into()));
    }
    let synthesized_set: Vec<LabeledInput> = results
        .iter()
        .map(|r| LabeledInput::new(r.synthesized.clone(), r.original.label))
        .collect();
    let loss = net.cross_entropy_loss(&synthesized_set)?;
    let correct = results
        .iter()
        .filter(|r| r.synthesized_trace.matches(r.original.label))
        .count();
    let accuracy = correct as f64 / results.len() as f64;

    let count = results.len() as f64;
    let distances = DistanceStats {
        mean_l1: results.iter().map(|r| r.distances.l1).sum::<f64>() / count,
        mean_l2: results.iter().map(|r| r.distances.l2).sum::<f64>() / count,
        mean_linf: results.iter().map(|r| r.distances.linf).sum::<f64>() / count,
    };

    let selected = report.selected();
    let ratio = activation_increase_ratio(results, &selected)?;
    let mut per_layer_counts = BTreeMap::new();
    for id in &selected {
        *per_layer_counts.entry(id.layer).or_insert(0) += 1;
    }

    Ok(EvalSummary {
        loss,
        accuracy,
        distances,
        activation_increase_ratio: ratio,
        per_layer_counts,
        runtime_seconds: elapsed_seconds,
    })
}
