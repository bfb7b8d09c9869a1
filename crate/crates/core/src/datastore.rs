//! Execution records on disk, per-query candidate lists, and the
//! train/test splits for the adhoc and repeat scenarios.

use crate::hint_catalog::Catalog;
use crate::ltr::dedup_plans;
use crate::plan_ir::{fingerprint, parse_explain, PlanError, PlanFingerprint, PlanTree};
use chrono::{DateTime, Utc};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatastoreError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("query `{0}` has no record for the default hint set 0")]
    MissingDefaultPlan(String),
    #[error("query `{query_id}` references hint set {hint_set_id}, which is not in the catalog")]
    UnknownHintSet { query_id: String, hint_set_id: usize },
    #[error("query `{query_id}`, hint set {hint_set_id}: {source}")]
    Plan {
        query_id: String,
        hint_set_id: usize,
        #[source]
        source: PlanError,
    },
    #[error("{requested} held-out templates requested but only {available} templates exist")]
    InsufficientTemplates { requested: usize, available: usize },
    #[error("template `{template}` has {available} queries, cannot hold out {requested}")]
    InsufficientQueriesPerTemplate { template: String, available: usize, requested: usize },
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("query id `{0}` appears in both datasets")]
    DuplicateQueryId(String),
    #[error("malformed split file: {0}")]
    MalformedSplit(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatastoreError + '_ {
    move |source| DatastoreError::Io { path: path.display().to_string(), source }
}

/// One `(query, hint set, plan, latency)` observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub query_id: String,
    pub template_id: String,
    pub sql: String,
    pub hint_set_id: usize,
    pub plan_json: String,
    /// Wall time in milliseconds; the configured timeout when `timed_out`.
    pub latency_ms: f64,
    pub timed_out: bool,
    pub collected_at: DateTime<Utc>,
}

pub fn append_records(path: &Path, records: &[ExecutionRecord]) -> Result<(), DatastoreError> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("record serializes");
        buf.push(b'\n');
    }
    f.write_all(&buf).map_err(io_err(path))?;
    f.flush().map_err(io_err(path))
}

pub fn write_records(path: &Path, records: &[ExecutionRecord]) -> Result<(), DatastoreError> {
    std::fs::write(path, b"").map_err(io_err(path))?;
    append_records(path, records)
}

/// Reads a line-delimited record file. Blank lines are ignored; any other
/// line that fails to parse or has a non-positive latency is reported with its
/// 1-based line number.
pub fn load_records(path: &Path) -> Result<Vec<ExecutionRecord>, DatastoreError> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExecutionRecord = serde_json::from_str(&line)
            .map_err(|e| DatastoreError::SchemaViolation { line: i + 1, message: e.to_string() })?;
        if !(rec.latency_ms > 0.0 && rec.latency_ms.is_finite()) {
            return Err(DatastoreError::SchemaViolation {
                line: i + 1,
                message: format!("latency_ms must be positive, got {}", rec.latency_ms),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// A distinct plan of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub fingerprint: PlanFingerprint,
    pub plan: PlanTree,
    /// Mean latency over the hint sets that produced this plan.
    pub latency: f64,
    /// Ascending; the first entry is the one reported when this plan is chosen.
    pub hint_set_ids: Vec<usize>,
}

impl Candidate {
    pub fn representative_hint(&self) -> usize {
        self.hint_set_ids[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEntry {
    pub query_id: String,
    pub template_id: String,
    pub sql: String,
    /// Ordered by representative hint set id.
    pub candidates: Vec<Candidate>,
    /// Latency of the candidate the default hint set produced.
    pub default_latency: f64,
}

impl QueryEntry {
    pub fn default_candidate(&self) -> usize {
        self.candidates
            .iter()
            .position(|c| c.hint_set_ids.contains(&0))
            .expect("QueryEntry invariant: default plan present")
    }

    pub fn oracle_latency(&self) -> f64 {
        self.candidates.iter().map(|c| c.latency).fold(f64::INFINITY, f64::min)
    }
}

/// Parses, fingerprints and deduplicates each query's plans. Queries appear
/// in order of their first record.
pub fn group_queries(records: &[ExecutionRecord], catalog: &Catalog) -> Result<Vec<QueryEntry>, DatastoreError> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_query: HashMap<&str, Vec<&ExecutionRecord>> = HashMap::new();
    for r in records {
        if catalog.get(r.hint_set_id).is_none() {
            return Err(DatastoreError::UnknownHintSet { query_id: r.query_id.clone(), hint_set_id: r.hint_set_id });
        }
        by_query
            .entry(&r.query_id)
            .or_insert_with(|| {
                order.push(&r.query_id);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|qid| {
            let mut recs = by_query.remove(qid).expect("grouped");
            recs.sort_by_key(|r| r.hint_set_id);
            build_entry(qid, &recs)
        })
        .collect()
}

fn build_entry(query_id: &str, recs: &[&ExecutionRecord]) -> Result<QueryEntry, DatastoreError> {
    if !recs.iter().any(|r| r.hint_set_id == 0) {
        return Err(DatastoreError::MissingDefaultPlan(query_id.to_string()));
    }
    let plans = recs
        .iter()
        .map(|r| {
            parse_explain(&r.plan_json).map_err(|source| DatastoreError::Plan {
                query_id: query_id.to_string(),
                hint_set_id: r.hint_set_id,
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let keyed: Vec<(PlanFingerprint, f64)> =
        plans.iter().zip(recs).map(|(p, r)| (fingerprint(p), r.latency_ms)).collect();
    let candidates: Vec<Candidate> = dedup_plans(&keyed)
        .into_iter()
        .map(|g| {
            let mut hint_set_ids: Vec<usize> = g.members.iter().map(|&i| recs[i].hint_set_id).collect();
            hint_set_ids.dedup();
            Candidate {
                fingerprint: keyed[g.representative].0.clone(),
                plan: plans[g.representative].clone(),
                latency: g.latency,
                hint_set_ids,
            }
        })
        .collect();
    let default_latency =
        candidates.iter().find(|c| c.hint_set_ids.contains(&0)).map(|c| c.latency).expect("checked above");
    Ok(QueryEntry {
        query_id: query_id.to_string(),
        template_id: recs[0].template_id.clone(),
        sql: recs[0].sql.clone(),
        candidates,
        default_latency,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Test queries come from templates never seen in training.
    Adhoc,
    /// Test queries are unseen queries of training templates.
    Repeat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Rand,
    Slow,
}

impl std::str::FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "adhoc" => Ok(Scenario::Adhoc),
            "repeat" => Ok(Scenario::Repeat),
            o => Err(format!("unknown scenario `{o}` (expected adhoc or repeat)")),
        }
    }
}

impl std::str::FromStr for Selection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rand" => Ok(Selection::Rand),
            "slow" => Ok(Selection::Slow),
            o => Err(format!("unknown selection `{o}` (expected rand or slow)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub selection: Selection,
    /// Templates (adhoc) or queries per template (repeat) to hold out.
    pub holdout: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    /// e.g. `adhoc-rand`.
    pub fn label(&self) -> String {
        let s = match self.scenario {
            Scenario::Adhoc => "adhoc",
            Scenario::Repeat => "repeat",
        };
        let k = match self.selection {
            Selection::Rand => "rand",
            Selection::Slow => "slow",
        };
        format!("{s}-{k}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitResult {
    pub spec: ScenarioSpec,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DatastoreError> {
        serde_json::from_str(text).map_err(|e| DatastoreError::MalformedSplit(e.to_string()))
    }

    /// Entries whose ids are in `ids`, in dataset order.
    pub fn select<'a>(entries: &'a [QueryEntry], ids: &[String]) -> Vec<&'a QueryEntry> {
        let want: HashSet<&str> = ids.iter().map(String::as_str).collect();
        entries.iter().filter(|e| want.contains(e.query_id.as_str())).collect()
    }
}

/// Templates in first-appearance order with their queries.
fn templates(entries: &[QueryEntry]) -> Vec<(&str, Vec<&QueryEntry>)> {
    let mut order: Vec<(&str, Vec<&QueryEntry>)> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for e in entries {
        let i = *slot.entry(&e.template_id).or_insert_with(|| {
            order.push((&e.template_id, Vec::new()));
            order.len() - 1
        });
        order[i].1.push(e);
    }
    order
}

/// Seeded `k`-subset of `items`, returned in the input's order.
fn pick<T: Copy>(items: &[T], k: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut idx = sample(rng, items.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i]).collect()
}

pub fn make_split(entries: &[QueryEntry], spec: &ScenarioSpec) -> Result<SplitResult, DatastoreError> {
    if spec.holdout == 0 {
        return Err(DatastoreError::InvalidSpec("holdout must be at least 1".into()));
    }
    let groups = templates(entries);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let test: HashSet<&str> = match spec.scenario {
        Scenario::Adhoc => {
            if spec.holdout >= groups.len() {
                return Err(DatastoreError::InsufficientTemplates { requested: spec.holdout, available: groups.len() });
            }
            let chosen: Vec<usize> = match spec.selection {
                Selection::Rand => {
                    let all: Vec<usize> = (0..groups.len()).collect();
                    pick(&all, spec.holdout, &mut rng)
                }
                Selection::Slow => {
                    let mut ranked: Vec<(usize, f64)> = groups
                        .iter()
                        .enumerate()
                        .map(|(i, (_, qs))| (i, qs.iter().map(|q| q.default_latency).sum()))
                        .collect();
                    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| groups[a.0].0.cmp(groups[b.0].0)));
                    ranked.into_iter().take(spec.holdout).map(|(i, _)| i).collect()
                }
            };
            chosen.into_iter().flat_map(|i| groups[i].1.iter().map(|q| q.query_id.as_str())).collect()
        }
        Scenario::Repeat => {
            let mut test = HashSet::new();
            for (template, qs) in &groups {
                if spec.holdout >= qs.len() {
                    return Err(DatastoreError::InsufficientQueriesPerTemplate {
                        template: template.to_string(),
                        available: qs.len(),
                        requested: spec.holdout,
                    });
                }
                let chosen: Vec<&QueryEntry> = match spec.selection {
                    Selection::Rand => pick(qs, spec.holdout, &mut rng),
                    Selection::Slow => {
                        let mut ranked = qs.clone();
                        ranked.sort_by(|a, b| {
                            b.default_latency.total_cmp(&a.default_latency).then_with(|| a.query_id.cmp(&b.query_id))
                        });
                        ranked.truncate(spec.holdout);
                        ranked
                    }
                };
                test.extend(chosen.into_iter().map(|q| q.query_id.as_str()));
            }
            test
        }
    };
    let (test_ids, train_ids): (Vec<&QueryEntry>, Vec<&QueryEntry>) =
        entries.iter().partition(|e| test.contains(e.query_id.as_str()));
    Ok(SplitResult {
        spec: *spec,
        train: train_ids.into_iter().map(|e| e.query_id.clone()).collect(),
        test: test_ids.into_iter().map(|e| e.query_id.clone()).collect(),
    })
}

/// Prefixes query and template ids with `<prefix>/` so datasets can be
/// merged without collisions.
pub fn namespace(entries: Vec<QueryEntry>, prefix: &str) -> Vec<QueryEntry> {
    entries
        .into_iter()
        .map(|mut e| {
            e.query_id = format!("{prefix}/{}", e.query_id);
            e.template_id = format!("{prefix}/{}", e.template_id);
            e
        })
        .collect()
}

/// Concatenates two datasets; query ids must not collide.
pub fn merge_datasets(a: Vec<QueryEntry>, b: Vec<QueryEntry>) -> Result<Vec<QueryEntry>, DatastoreError> {
    let seen: HashSet<&str> = a.iter().map(|e| e.query_id.as_str()).collect();
    if let Some(dup) = b.iter().find(|e| seen.contains(e.query_id.as_str())) {
        return Err(DatastoreError::DuplicateQueryId(dup.query_id.clone()));
    }
    let mut out = a;
    out.extend(b);
    Ok(out)
}

/// Node/depth statistics over the distinct plans of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub queries: usize,
    pub templates: usize,
    pub unique_plans: usize,
    pub max_nodes: usize,
    pub avg_nodes: f64,
    pub max_depth: usize,
    pub avg_depth: f64,
    pub mean_candidates_per_query: f64,
}

pub fn dataset_stats(entries: &[QueryEntry]) -> DatasetStats {
    let plans: Vec<&PlanTree> = entries.iter().flat_map(|e| e.candidates.iter().map(|c| &c.plan)).collect();
    let n = plans.len().max(1) as f64;
    let templates: BTreeMap<&str, ()> = entries.iter().map(|e| (e.template_id.as_str(), ())).collect();
    DatasetStats {
        queries: entries.len(),
        templates: templates.len(),
        unique_plans: plans.len(),
        max_nodes: plans.iter().map(|p| p.node_count).max().unwrap_or(0),
        avg_nodes: plans.iter().map(|p| p.node_count as f64).sum::<f64>() / n,
        max_depth: plans.iter().map(|p| p.depth).max().unwrap_or(0),
        avg_depth: plans.iter().map(|p| p.depth as f64).sum::<f64>() / n,
        mean_candidates_per_query: plans.len() as f64 / entries.len().max(1) as f64,
    }
}
