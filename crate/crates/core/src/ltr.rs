//! Ranking losses over plan scores.
//!
//! Plans are ranked by label `1 / latency`, so the fastest plan comes first.
//! Scores are compared under the Plackett-Luce model: a full ranking has
//! probability `Π_j exp(s_j) / Σ_{m≥j} exp(s_m)` and any single comparison
//! `i ≻ j` has marginal probability `exp(s_i) / (exp(s_i) + exp(s_j))`.
//!
//! * listwise: negative log-likelihood of each query's full ranking (listMLE)
//! * pairwise: full breaking of every ranking into all `n(n-1)/2` comparisons,
//!   then the negative log of their marginal probabilities
//! * regression: mean squared error against normalized log-latency, kept as
//!   a baseline
//!
//! Plan references are plain indices into the caller's score vector.

use crate::plan_ir::PlanFingerprint;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtrError {
    #[error("latency must be positive and finite, got {0}")]
    NonPositiveLatency(f64),
    #[error("ranked list is empty")]
    EmptyList,
}

pub fn label_map(latency: f64) -> Result<f64, LtrError> {
    if latency > 0.0 && latency.is_finite() {
        Ok(1.0 / latency)
    } else {
        Err(LtrError::NonPositiveLatency(latency))
    }
}

/// One distinct plan after deduplication.
#[derive(Debug, Clone, PartialEq)]
pub struct DedupGroup {
    /// Index of the first input record with this fingerprint.
    pub representative: usize,
    /// Arithmetic mean of the group's latencies.
    pub latency: f64,
    /// All input indices in the group, ascending.
    pub members: Vec<usize>,
}

/// Collapses records with equal fingerprints, in first-occurrence order.
pub fn dedup_plans(records: &[(PlanFingerprint, f64)]) -> Vec<DedupGroup> {
    let mut slot: HashMap<&PlanFingerprint, usize> = HashMap::new();
    let mut groups: Vec<DedupGroup> = Vec::new();
    for (i, (fp, _)) in records.iter().enumerate() {
        match slot.get(fp) {
            Some(&g) => groups[g].members.push(i),
            None => {
                slot.insert(fp, groups.len());
                groups.push(DedupGroup { representative: i, latency: 0.0, members: vec![i] });
            }
        }
    }
    for g in &mut groups {
        let sum: f64 = g.members.iter().map(|&i| records[i].1).sum();
        g.latency = sum / g.members.len() as f64;
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub plan: usize,
    pub label: f64,
}

/// One query's plans, best (highest label) first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub items: Vec<RankedItem>,
}

impl RankedList {
    /// Builds the ranking from `(plan, latency)` pairs. Equal labels are
    /// ordered by ascending plan reference.
    pub fn from_latencies(query_id: impl Into<String>, plans: &[(usize, f64)]) -> Result<Self, LtrError> {
        if plans.is_empty() {
            return Err(LtrError::EmptyList);
        }
        let mut items = plans
            .iter()
            .map(|&(plan, lat)| Ok(RankedItem { plan, label: label_map(lat)? }))
            .collect::<Result<Vec<_>, LtrError>>()?;
        items.sort_by(|a, b| b.label.total_cmp(&a.label).then(a.plan.cmp(&b.plan)));
        Ok(RankedList { query_id: query_id.into(), items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSample {
    pub query_id: String,
    pub winner: usize,
    pub loser: usize,
}

/// Every comparison implied by the ranking. Items with equal labels carry no
/// preference and yield no pair.
pub fn full_breaking(list: &RankedList) -> Vec<PairSample> {
    let mut out = Vec::with_capacity(list.len() * list.len().saturating_sub(1) / 2);
    for (i, a) in list.items.iter().enumerate() {
        for b in &list.items[i + 1..] {
            if a.label > b.label {
                out.push(PairSample { query_id: list.query_id.clone(), winner: a.plan, loser: b.plan });
            }
        }
    }
    out
}

/// Logistic function, stable for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Stable `ln Σ exp(x_i)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Probability that the plan scored `s_i` beats the plan scored `s_j`.
pub fn pl_pair_prob(s_i: f64, s_j: f64) -> f64 {
    let m = s_i.max(s_j);
    let (a, b) = ((s_i - m).exp(), (s_j - m).exp());
    a / (a + b)
}

/// Sum over pairs of `−ln P(winner ≻ loser) = ln(1 + e^{−δ})` with
/// `δ = s_winner − s_loser`, and its gradient with respect to `scores`.
pub fn pairwise_loss_and_grad(pairs: &[PairSample], scores: &[f64]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; scores.len()];
    let mut loss = 0.0;
    for p in pairs {
        let delta = scores[p.winner] - scores[p.loser];
        loss += softplus(-delta);
        // d/dδ ln(1+e^{−δ}) = −(1 − σ(δ)) = −σ(−δ)
        let g = sigmoid(-delta);
        grad[p.winner] -= g;
        grad[p.loser] += g;
    }
    (loss, grad)
}

/// Negative Plackett-Luce log-likelihood of the list's order:
/// `Σ_j [ln Σ_{m≥j} exp(s_m) − s_j]` over positions best-first.
pub fn listwise_loss_and_grad(list: &RankedList, scores: &[f64]) -> Result<(f64, Vec<f64>), LtrError> {
    if list.is_empty() {
        return Err(LtrError::EmptyList);
    }
    let s: Vec<f64> = list.items.iter().map(|it| scores[it.plan]).collect();
    let n = s.len();
    // suffix[j] = ln Σ_{m≥j} exp(s_m), accumulated right to left
    let mut suffix = vec![0.0; n];
    let mut acc = f64::NEG_INFINITY;
    for j in (0..n).rev() {
        acc = if acc == f64::NEG_INFINITY {
            s[j]
        } else {
            let m = acc.max(s[j]);
            m + ((acc - m).exp() + (s[j] - m).exp()).ln()
        };
        suffix[j] = acc;
    }
    let loss: f64 = (0..n).map(|j| suffix[j] - s[j]).sum();
    let mut grad = vec![0.0; scores.len()];
    for k in 0..n {
        // −1 + Σ_{j≤k} softmax over stage j evaluated at item k
        let g: f64 = -1.0 + (0..=k).map(|j| (s[k] - suffix[j]).exp()).sum::<f64>();
        grad[list.items[k].plan] += g;
    }
    Ok((loss, grad))
}

/// Min and max of `ln(1 + latency)` over a training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyNormalizer {
    pub min: f64,
    pub max: f64,
}

impl LatencyNormalizer {
    pub fn fit(latencies: impl IntoIterator<Item = f64>) -> Option<Self> {
        latencies.into_iter().fold(None, |acc, l| {
            let v = l.ln_1p();
            Some(match acc {
                None => LatencyNormalizer { min: v, max: v },
                Some(n) => LatencyNormalizer { min: n.min.min(v), max: n.max.max(v) },
            })
        })
    }

    /// Min-max normalized `ln(1 + latency)`, in `[0, 1]` on the fitted range.
    pub fn normalize(&self, latency: f64) -> f64 {
        if self.max <= self.min {
            0.0
        } else {
            (latency.ln_1p() - self.min) / (self.max - self.min)
        }
    }

    /// Regression target for a plan. The normalized log-latency is negated
    /// (`1 − x`) so a higher score still means a faster plan.
    pub fn target(&self, latency: f64) -> f64 {
        1.0 - self.normalize(latency)
    }
}

/// Mean squared error and its gradient.
pub fn regression_loss_and_grad(targets: &[f64], scores: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(targets.len(), scores.len(), "targets and scores differ in length");
    let n = targets.len().max(1) as f64;
    let loss = scores.iter().zip(targets).map(|(s, t)| (s - t) * (s - t)).sum::<f64>() / n;
    let grad = scores.iter().zip(targets).map(|(s, t)| 2.0 * (s - t) / n).collect();
    (loss, grad)
}
