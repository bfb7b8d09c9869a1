//! Sources of `(plan, latency)` observations and the collection loop that
//! writes them to a record file.

mod live;

pub use live::{DbConfig, PgSource};

use crate::datastore::{append_records, load_records, DatastoreError, ExecutionRecord};
use crate::hint_catalog::{Catalog, HintSet};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("connection error: {0}")]
    Connection(String),
    #[error("SQL error: {0}")]
    Sql(String),
    #[error("statement exceeded {0} ms")]
    Timeout(u64),
    #[error("no recorded observation for query `{query_id}` under hint set {hint_set_id}")]
    MissingRecord { query_id: String, hint_set_id: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Datastore(#[from] DatastoreError),
}

/// A query to collect, as listed in a query file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub template_id: String,
    pub sql: String,
}

/// Reads one JSON `Query` per line; blank lines are skipped.
pub fn load_queries(path: &Path) -> Result<Vec<Query>, DatastoreError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DatastoreError::Io { path: path.display().to_string(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DatastoreError::SchemaViolation { line: i + 1, message: e.to_string() })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub latency_ms: f64,
    pub timed_out: bool,
}

pub trait PlanSource {
    /// Raw `EXPLAIN (FORMAT JSON)` output under the hint set.
    fn plan_for(&mut self, query: &Query, hint: &HintSet) -> Result<String, GatewayError>;
    fn measure(&mut self, query: &Query, hint: &HintSet) -> Result<Measurement, GatewayError>;
}

/// Median; the mean of the middle pair for even lengths.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Outcome of executing a statement once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunOutcome {
    Completed(Duration),
    TimedOut,
}

/// Runs `run` up to `repetitions` times and reports the median wall time.
/// The first timeout ends the measurement with a censored latency.
pub fn measure_repeated(
    repetitions: u32,
    timeout_ms: u64,
    mut run: impl FnMut() -> Result<RunOutcome, GatewayError>,
) -> Result<Measurement, GatewayError> {
    let mut times = Vec::with_capacity(repetitions as usize);
    for _ in 0..repetitions.max(1) {
        match run()? {
            RunOutcome::Completed(d) => times.push((d.as_secs_f64() * 1e3).max(1e-6)),
            RunOutcome::TimedOut => return Ok(Measurement { latency_ms: timeout_ms as f64, timed_out: true }),
        }
    }
    Ok(Measurement { latency_ms: median(&times).expect("at least one run"), timed_out: false })
}

/// A `(query, hint set)` pair that failed during collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub query_id: String,
    pub hint_set_id: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollectSummary {
    pub written: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Collects every query × hint set into `out`, one record at a time.
/// Pairs already present in `out` are skipped. Per-item failures go to
/// `manifest` and collection continues; connection loss aborts, keeping
/// everything written so far.
pub fn collect(
    source: &mut dyn PlanSource,
    queries: &[Query],
    catalog: &Catalog,
    out: &Path,
    manifest: &Path,
) -> Result<CollectSummary, GatewayError> {
    let done: HashSet<(String, usize)> = if out.exists() {
        load_records(out)?.into_iter().map(|r| (r.query_id, r.hint_set_id)).collect()
    } else {
        HashSet::new()
    };
    let mut summary = CollectSummary::default();
    for q in queries {
        for hint in catalog.iter() {
            if done.contains(&(q.query_id.clone(), hint.id)) {
                summary.skipped += 1;
                continue;
            }
            let observed = source.plan_for(q, hint).and_then(|plan| source.measure(q, hint).map(|m| (plan, m)));
            match observed {
                Ok((plan_json, m)) => {
                    let rec = ExecutionRecord {
                        query_id: q.query_id.clone(),
                        template_id: q.template_id.clone(),
                        sql: q.sql.clone(),
                        hint_set_id: hint.id,
                        plan_json,
                        latency_ms: m.latency_ms,
                        timed_out: m.timed_out,
                        collected_at: Utc::now(),
                    };
                    append_records(out, std::slice::from_ref(&rec))?;
                    summary.written += 1;
                }
                Err(e @ GatewayError::Connection(_)) => return Err(e),
                Err(e) => {
                    append_failure(
                        manifest,
                        &FailureEntry { query_id: q.query_id.clone(), hint_set_id: hint.id, error: e.to_string() },
                    )?;
                    summary.failed += 1;
                }
            }
        }
    }
    Ok(summary)
}

fn append_failure(path: &Path, entry: &FailureEntry) -> Result<(), DatastoreError> {
    let io = |source| DatastoreError::Io { path: path.display().to_string(), source };
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let line = serde_json::to_string(entry).expect("failure entry serializes");
    writeln!(f, "{line}").map_err(io)
}

/// Serves previously recorded observations. The first record of a pair wins.
#[derive(Debug, Clone, Default)]
pub struct ReplaySource {
    records: HashMap<(String, usize), ExecutionRecord>,
}

impl ReplaySource {
    pub fn from_records(records: Vec<ExecutionRecord>) -> Self {
        let mut map = HashMap::new();
        for r in records {
            map.entry((r.query_id.clone(), r.hint_set_id)).or_insert(r);
        }
        ReplaySource { records: map }
    }

    fn lookup(&self, q: &Query, h: &HintSet) -> Result<&ExecutionRecord, GatewayError> {
        self.records
            .get(&(q.query_id.clone(), h.id))
            .ok_or_else(|| GatewayError::MissingRecord { query_id: q.query_id.clone(), hint_set_id: h.id })
    }
}

pub fn replay_source(path: &Path) -> Result<ReplaySource, GatewayError> {
    Ok(ReplaySource::from_records(load_records(path)?))
}

impl PlanSource for ReplaySource {
    fn plan_for(&mut self, q: &Query, h: &HintSet) -> Result<String, GatewayError> {
        Ok(self.lookup(q, h)?.plan_json.clone())
    }

    fn measure(&mut self, q: &Query, h: &HintSet) -> Result<Measurement, GatewayError> {
        let r = self.lookup(q, h)?;
        Ok(Measurement { latency_ms: r.latency_ms, timed_out: r.timed_out })
    }
}
