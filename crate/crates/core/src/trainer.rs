//! Mini-batch training of the plan scorer with Adam, early stopping on the
//! training loss, and checkpoint selection on a held-out validation set.

use crate::datastore::QueryEntry;
use crate::ltr::{
    full_breaking, listwise_loss_and_grad, pairwise_loss_and_grad, regression_loss_and_grad, LatencyNormalizer,
    LtrError, PairSample, RankedList,
};
use crate::plan_ir::{encode_plan, fit_scaler, EncodedTree, FeatureScaler, PlanError};
use crate::scorer::{
    argmax_by_score, backward, forward, init_params_with, score_batch, Architecture, Checkpoint, ScorerError,
    ScorerParams, TrainingMode,
};
use crate::tensor::{adam_step, AdamState};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset has no usable training samples")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("query `{0}` has no candidate latencies")]
    MissingLatency(String),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Ltr(#[from] LtrError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainingMode,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Pairs, lists or items per batch; `None` picks the mode's default.
    pub batch_size: Option<usize>,
    pub validation_fraction: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainingMode::Pairwise,
            learning_rate: 0.001,
            max_epochs: 100,
            early_stop_patience: 10,
            batch_size: None,
            validation_fraction: 0.1,
            seed: 0,
            shuffle: true,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn for_mode(mode: TrainingMode) -> Self {
        TrainConfig { mode, ..Default::default() }
    }

    pub fn effective_batch_size(&self) -> usize {
        self.batch_size.unwrap_or(match self.mode {
            TrainingMode::Pairwise => 256,
            TrainingMode::Listwise => 16,
            TrainingMode::Regression => 256,
        })
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie strictly between 0 and 1");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.effective_batch_size() == 0 {
            return bad("batch_size must be at least 1");
        }
        self.architecture.validate()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        serde_json::from_str(text).map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Training samples over a flat plan index: candidate `c` of query `q` is
/// plan `offsets[q] + c`.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainingSamples {
    Pairs(Vec<PairSample>),
    Lists(Vec<RankedList>),
    /// `(plan, regression target)`.
    Items(Vec<(usize, f64)>),
}

impl TrainingSamples {
    pub fn len(&self) -> usize {
        match self {
            TrainingSamples::Pairs(v) => v.len(),
            TrainingSamples::Lists(v) => v.len(),
            TrainingSamples::Items(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn offsets(entries: &[&QueryEntry]) -> Vec<usize> {
    let mut acc = 0;
    entries
        .iter()
        .map(|e| {
            let o = acc;
            acc += e.candidates.len();
            o
        })
        .collect()
}

fn samples_for(entries: &[&QueryEntry], mode: TrainingMode) -> Result<TrainingSamples, TrainError> {
    if entries.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let offs = offsets(entries);
    let lists = || {
        entries
            .iter()
            .zip(&offs)
            .map(|(e, &o)| {
                let plans: Vec<(usize, f64)> =
                    e.candidates.iter().enumerate().map(|(c, cand)| (o + c, cand.latency)).collect();
                RankedList::from_latencies(e.query_id.clone(), &plans)
            })
            .collect::<Result<Vec<_>, _>>()
    };
    Ok(match mode {
        TrainingMode::Pairwise => TrainingSamples::Pairs(lists()?.iter().flat_map(full_breaking).collect()),
        TrainingMode::Listwise => TrainingSamples::Lists(lists()?),
        TrainingMode::Regression => {
            let all = entries.iter().flat_map(|e| e.candidates.iter().map(|c| c.latency));
            let norm = LatencyNormalizer::fit(all).ok_or(TrainError::EmptyDataset)?;
            let mut items = Vec::new();
            for (e, &o) in entries.iter().zip(&offs) {
                for (c, cand) in e.candidates.iter().enumerate() {
                    items.push((o + c, norm.target(cand.latency)));
                }
            }
            TrainingSamples::Items(items)
        }
    })
}

/// Pairs from full breaking, one list per query, or one item per plan.
pub fn build_samples(entries: &[QueryEntry], mode: TrainingMode) -> Result<TrainingSamples, TrainError> {
    samples_for(&entries.iter().collect::<Vec<_>>(), mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: TrainingMode,
    pub config_digest: String,
    pub epochs_run: usize,
    pub stopped_early: bool,
    /// Mean per-sample training loss for each epoch.
    pub epoch_losses: Vec<f64>,
    /// Selected-plan total latency on the validation queries after each epoch.
    pub validation_metrics: Vec<f64>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_validation: f64,
    /// Sum of per-query minimum latencies over the validation queries.
    pub oracle_validation: f64,
    pub queries_total: usize,
    pub queries_train: usize,
    pub queries_validation: usize,
    pub unique_plans_train: usize,
    pub samples: usize,
    pub validation_query_ids: Vec<String>,
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn encode_all(entries: &[&QueryEntry], scaler: &FeatureScaler) -> Vec<EncodedTree> {
    entries.iter().flat_map(|e| e.candidates.iter().map(|c| encode_plan(&c.plan, scaler))).collect()
}

/// Scores every plan in chunks to bound memory.
fn score_all(p: &ScorerParams, trees: &[EncodedTree]) -> Result<Vec<f64>, ScorerError> {
    let mut out = Vec::with_capacity(trees.len());
    for chunk in trees.chunks(512) {
        let refs: Vec<&EncodedTree> = chunk.iter().collect();
        out.extend(score_batch(p, &refs)?);
    }
    Ok(out)
}

/// Per query, the index of the candidate the model selects.
pub(crate) fn selections(entries: &[&QueryEntry], scores: &[f64]) -> Result<Vec<usize>, TrainError> {
    let mut pos = 0;
    entries
        .iter()
        .map(|e| {
            let n = e.candidates.len();
            let ids: Vec<usize> = e.candidates.iter().map(|c| c.representative_hint()).collect();
            let pick = argmax_by_score(&scores[pos..pos + n], &ids)
                .ok_or_else(|| TrainError::MissingLatency(e.query_id.clone()))?;
            pos += n;
            Ok(pick)
        })
        .collect()
}

fn selected_total(entries: &[&QueryEntry], trees: &[EncodedTree], p: &ScorerParams) -> Result<f64, TrainError> {
    let scores = score_all(p, trees)?;
    let picks = selections(entries, &scores)?;
    Ok(entries.iter().zip(picks).map(|(e, i)| e.candidates[i].latency).sum())
}

/// Sum over queries of the recorded latency of the plan the model selects.
pub fn validate(p: &ScorerParams, entries: &[&QueryEntry]) -> Result<f64, TrainError> {
    if let Some(e) = entries.iter().find(|e| e.candidates.is_empty()) {
        return Err(TrainError::MissingLatency(e.query_id.clone()));
    }
    let trees = encode_all(entries, &p.scaler);
    selected_total(entries, &trees, p)
}

/// Seeded choice of validation queries, returned as sorted indices.
fn validation_indices(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n < 2 {
        return Vec::new();
    }
    let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx = sample(rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// One mini-batch: forward over the unique plans it touches, loss gradient
/// averaged over its samples, backward, Adam.
struct Step<'a> {
    params: &'a mut ScorerParams,
    adam: &'a mut AdamState,
    trees: &'a [EncodedTree],
    lr: f64,
}

impl Step<'_> {
    fn run(&mut self, samples: &TrainingSamples, batch: &[usize]) -> Result<f64, TrainError> {
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut order: Vec<usize> = Vec::new();
        let mut slot = |g: usize| -> usize {
            *local.entry(g).or_insert_with(|| {
                order.push(g);
                order.len() - 1
            })
        };
        let n = batch.len() as f64;
        let remapped = match samples {
            TrainingSamples::Pairs(all) => {
                let pairs: Vec<PairSample> = batch
                    .iter()
                    .map(|&i| {
                        let p = &all[i];
                        PairSample { query_id: String::new(), winner: slot(p.winner), loser: slot(p.loser) }
                    })
                    .collect();
                Remapped::Pairs(pairs)
            }
            TrainingSamples::Lists(all) => {
                let lists: Vec<RankedList> = batch
                    .iter()
                    .map(|&i| {
                        let mut l = all[i].clone();
                        for it in &mut l.items {
                            it.plan = slot(it.plan);
                        }
                        l
                    })
                    .collect();
                Remapped::Lists(lists)
            }
            TrainingSamples::Items(all) => {
                let items: Vec<(usize, f64)> = batch.iter().map(|&i| (slot(all[i].0), all[i].1)).collect();
                Remapped::Items(items)
            }
        };
        let refs: Vec<&EncodedTree> = order.iter().map(|&g| &self.trees[g]).collect();
        let cache = forward(self.params, &refs)?;
        let (loss, mut dscores) = match &remapped {
            Remapped::Pairs(pairs) => pairwise_loss_and_grad(pairs, &cache.scores),
            Remapped::Lists(lists) => {
                let mut total = 0.0;
                let mut grad = vec![0.0; cache.scores.len()];
                for l in lists {
                    let (v, g) = listwise_loss_and_grad(l, &cache.scores)?;
                    total += v;
                    grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                (total, grad)
            }
            Remapped::Items(items) => {
                // items are unique plans, so local slot i is item i
                let targets: Vec<f64> = items.iter().map(|t| t.1).collect();
                let (mse, g) = regression_loss_and_grad(&targets, &cache.scores);
                (mse * n, g.into_iter().map(|x| x * n).collect())
            }
        };
        dscores.iter_mut().for_each(|g| *g /= n);
        if !loss.is_finite() {
            return Ok(f64::NAN);
        }
        let grads = backward(self.params, &cache, &dscores)?;
        let mut tensors = self.params.tensors_mut();
        adam_step(&mut tensors, &grads.tensors(), self.adam, self.lr).map_err(ScorerError::from)?;
        Ok(loss)
    }
}

enum Remapped {
    Pairs(Vec<PairSample>),
    Lists(Vec<RankedList>),
    Items(Vec<(usize, f64)>),
}

/// Trains a scorer on `entries`; `catalog_hash` is stored in the checkpoint.
pub fn train(
    entries: &[QueryEntry],
    catalog_hash: &str,
    config: &TrainConfig,
) -> Result<(Checkpoint, TrainReport), TrainError> {
    config.validate()?;
    if entries.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if let Some(e) = entries.iter().find(|e| e.candidates.is_empty()) {
        return Err(TrainError::MissingLatency(e.query_id.clone()));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let val_idx = validation_indices(entries.len(), config.validation_fraction, &mut rng);
    let (mut train_q, mut val_q): (Vec<&QueryEntry>, Vec<&QueryEntry>) = (Vec::new(), Vec::new());
    for (i, e) in entries.iter().enumerate() {
        if val_idx.binary_search(&i).is_ok() {
            val_q.push(e);
        } else {
            train_q.push(e);
        }
    }
    if val_q.is_empty() {
        // a single query can only be validated against itself
        val_q = train_q.clone();
    }

    let samples = samples_for(&train_q, config.mode)?;
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let scaler = fit_scaler(train_q.iter().flat_map(|e| e.candidates.iter().map(|c| &c.plan)))?;
    let train_trees = encode_all(&train_q, &scaler);
    let val_trees = encode_all(&val_q, &scaler);

    let mut params = init_params_with(&config.architecture, config.seed)?;
    params.scaler = scaler;
    params.catalog_hash = catalog_hash.to_string();
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut adam = AdamState::new(&shapes);
    let batch_size = config.effective_batch_size();

    let oracle_validation: f64 = val_q.iter().map(|e| e.oracle_latency()).sum();
    let mut best: Option<(f64, usize, ScorerParams)> = None;
    let mut epoch_losses = Vec::new();
    let mut validation_metrics = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for epoch in 1..=config.max_epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        let mut step = Step { params: &mut params, adam: &mut adam, trees: &train_trees, lr: config.learning_rate };
        for (b, batch) in order.chunks(batch_size).enumerate() {
            let l = step.run(&samples, batch)?;
            if !l.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b });
            }
            total += l;
        }
        let mean = total / samples.len() as f64;
        epoch_losses.push(mean);
        let metric = selected_total(&val_q, &val_trees, &params)?;
        validation_metrics.push(metric);
        if best.as_ref().is_none_or(|b| metric < b.0) {
            best = Some((metric, epoch, params.clone()));
        }
        if mean < best_loss {
            best_loss = mean;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop_patience {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }

    let (best_validation, best_epoch, best_params) = best.expect("at least one epoch ran");
    let digest = config.digest();
    let report = TrainReport {
        mode: config.mode,
        config_digest: digest.clone(),
        epochs_run: epoch_losses.len(),
        stopped_early,
        epoch_losses,
        validation_metrics,
        best_epoch,
        best_validation,
        oracle_validation,
        queries_total: entries.len(),
        queries_train: train_q.len(),
        queries_validation: if val_idx.is_empty() { 0 } else { val_q.len() },
        unique_plans_train: train_trees.len(),
        samples: samples.len(),
        validation_query_ids: val_q.iter().map(|e| e.query_id.clone()).collect(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let ckpt = Checkpoint { params: best_params, mode: config.mode, config_digest: digest, best_validation };
    Ok((ckpt, report))
}
