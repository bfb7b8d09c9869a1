//! A simulated database for exercising the whole pipeline offline.
//!
//! Each template fixes a chain of relations (table sizes, index
//! availability, join fanouts); each query draws its own predicate
//! selectivities. A toy cost-based planner picks scan and join operators
//! with a mis-calibrated cost model, so the default plan is often a poor
//! choice. Latency is a fixed function of the chosen operators and their
//! row counts under the true cost model, times a small seeded noise factor.

use crate::datastore::ExecutionRecord;
use crate::gateway::{GatewayError, Measurement, PlanSource, Query};
use crate::hint_catalog::{Catalog, HintFlags, HintSet, Knob};
use crate::plan_ir::{OperatorKind, PlanNode, PlanTree};
use chrono::DateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub templates: usize,
    pub queries_per_template: usize,
    pub seed: u64,
    /// Half-width of the multiplicative noise band, e.g. 0.03 for ±3%.
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { templates: 60, queries_per_template: 10, seed: 7, noise: 0.03 }
    }
}

/// Eight hint sets: the default, each join method alone, scan restrictions,
/// and two mixed settings.
pub fn synthetic_catalog() -> Catalog {
    // bit order: hashjoin, mergejoin, nestloop, indexscan, seqscan, indexonlyscan
    let rows: [[bool; 6]; 8] = [
        [true, true, true, true, true, true],
        [true, false, false, true, true, true],
        [false, true, false, true, true, true],
        [false, false, true, true, true, true],
        [true, true, true, false, true, false],
        [true, true, true, true, false, true],
        [true, true, false, true, true, true],
        [true, false, true, false, true, false],
    ];
    Catalog::from_flags(rows.iter().map(|b| HintFlags::from_bits(*b)).collect()).expect("synthetic catalog is valid")
}

#[derive(Debug, Clone)]
struct Relation {
    name: String,
    table_rows: f64,
    indexed: bool,
    covering: bool,
    fanout: f64,
}

#[derive(Debug, Clone)]
struct QueryModel {
    relations: Vec<Relation>,
    /// Filtered rows per relation after the query's predicates.
    rows: Vec<f64>,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(a << 6).wrapping_add(a >> 2);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-operator cost coefficients.
struct CostModel {
    seq: f64,
    index: f64,
    index_only: f64,
    hash: f64,
    merge: f64,
    nl_probe: f64,
    nl_plain: f64,
}

/// What the simulated optimizer believes.
const PLANNER: CostModel =
    CostModel { seq: 0.01, index: 0.04, index_only: 0.02, hash: 0.015, merge: 0.004, nl_probe: 0.03, nl_plain: 0.0005 };

/// What execution actually costs: random I/O and nested loops are far more
/// expensive than the optimizer assumes.
const TRUTH: CostModel =
    CostModel { seq: 0.01, index: 0.3, index_only: 0.05, hash: 0.08, merge: 0.03, nl_probe: 2.0, nl_plain: 0.02 };

impl CostModel {
    fn scan(&self, op: &OperatorKind, table_rows: f64, rows: f64) -> f64 {
        match op {
            OperatorKind::SeqScan => self.seq * table_rows,
            OperatorKind::IndexScan => self.index * rows + 0.5,
            _ => self.index_only * rows + 0.5,
        }
    }

    fn join(&self, op: &OperatorKind, outer: f64, inner: f64, inner_table: f64, indexed: bool) -> f64 {
        match op {
            OperatorKind::HashJoin => self.hash * (outer + inner) + 1.0,
            OperatorKind::MergeJoin => self.merge * (outer * (outer + 2.0).log2() + inner * (inner + 2.0).log2()) + 1.0,
            _ if indexed => self.nl_probe * outer * (inner_table + 2.0).log2(),
            _ => self.nl_plain * outer * inner,
        }
    }
}

/// A plan subtree with its output rows and execution cost under [`TRUTH`].
struct Built {
    node: PlanNode,
    rows: f64,
    latency: f64,
}

impl QueryModel {
    fn scan(&self, i: usize, f: &HintFlags) -> Built {
        let r = &self.relations[i];
        let rows = self.rows[i];
        let mut applicable = vec![(OperatorKind::SeqScan, Knob::SeqScan)];
        if r.indexed {
            applicable.push((OperatorKind::IndexScan, Knob::IndexScan));
            if r.covering {
                applicable.push((OperatorKind::IndexOnlyScan, Knob::IndexOnlyScan));
            }
        }
        let enabled: Vec<&OperatorKind> = applicable.iter().filter(|(_, k)| f.get(*k)).map(|(o, _)| o).collect();
        // a disabled operator is still used when nothing else applies
        let pool: Vec<&OperatorKind> =
            if enabled.is_empty() { applicable.iter().map(|(o, _)| o).collect() } else { enabled };
        let op = pool
            .into_iter()
            .min_by(|a, b| PLANNER.scan(a, r.table_rows, rows).total_cmp(&PLANNER.scan(b, r.table_rows, rows)))
            .expect("seq scan always applicable")
            .clone();
        let mut node = PlanNode::new(op.clone(), PLANNER.scan(&op, r.table_rows, rows), rows.round())
            .with_relation(r.name.clone());
        if op != OperatorKind::SeqScan {
            node = node.with_index(format!("{}_pkey", r.name));
        }
        Built { latency: TRUTH.scan(&op, r.table_rows, rows), node, rows }
    }

    fn join(&self, outer: Built, i: usize, f: &HintFlags) -> Built {
        let r = &self.relations[i];
        let inner = self.scan(i, f);
        let options = [
            (OperatorKind::HashJoin, Knob::HashJoin),
            (OperatorKind::MergeJoin, Knob::MergeJoin),
            (OperatorKind::NestedLoop, Knob::NestLoop),
        ];
        let enabled: Vec<&OperatorKind> = options.iter().filter(|(_, k)| f.get(*k)).map(|(o, _)| o).collect();
        let cost = |m: &CostModel, op: &OperatorKind| m.join(op, outer.rows, inner.rows, r.table_rows, r.indexed);
        let op = enabled
            .into_iter()
            .min_by(|a, b| cost(&PLANNER, a).total_cmp(&cost(&PLANNER, b)))
            .expect("catalog entries enable a join")
            .clone();
        let rows = (outer.rows * inner.rows / r.table_rows * r.fanout).max(1.0);
        let own = cost(&TRUTH, &op);
        let est_total = outer.node.est_cost + inner.node.est_cost + cost(&PLANNER, &op);
        let wrap = |name: &str, b: Built, extra: f64| {
            let (c, n) = (b.node.est_cost + extra, b.node.est_rows);
            PlanNode::new(OperatorKind::Other(name.into()), c, n).with_children(vec![b.node])
        };
        let (left, right, inputs) = match op {
            OperatorKind::HashJoin => {
                let il = inner.latency;
                (outer.node, wrap("Hash", inner, 0.5), outer.latency + il)
            }
            OperatorKind::MergeJoin => {
                let lat = outer.latency + inner.latency;
                (wrap("Sort", outer, 1.0), wrap("Sort", inner, 1.0), lat)
            }
            _ if r.indexed => {
                // parameterized lookups replace the inner scan
                let per_probe = (inner.rows / r.table_rows * r.fanout).max(1.0).round();
                let probe = PlanNode::new(OperatorKind::IndexScan, 0.5, per_probe)
                    .with_relation(r.name.clone())
                    .with_index(format!("{}_pkey", r.name));
                (outer.node, probe, outer.latency)
            }
            _ => (outer.node, inner.node, outer.latency + inner.latency),
        };
        Built {
            node: PlanNode::new(op, est_total, rows.round()).with_children(vec![left, right]),
            rows,
            latency: inputs + own,
        }
    }

    fn plan(&self, f: &HintFlags) -> (PlanTree, f64) {
        let mut acc = self.scan(0, f);
        for i in 1..self.relations.len() {
            acc = self.join(acc, i, f);
        }
        let root = PlanNode::new(OperatorKind::Other("Aggregate".into()), acc.node.est_cost + 0.001 * acc.rows, 1.0)
            .with_children(vec![acc.node]);
        (PlanTree::new(root).expect("generated plans are well-formed"), acc.latency + 0.001 * acc.rows + 0.2)
    }
}

/// Simulated database serving plans and latencies for generated queries.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    config: SyntheticConfig,
    queries: Vec<Query>,
    models: HashMap<String, (u64, QueryModel)>,
}

impl SyntheticSource {
    pub fn new(config: SyntheticConfig) -> Self {
        let mut queries = Vec::new();
        let mut models = HashMap::new();
        for t in 0..config.templates {
            let mut trng = ChaCha8Rng::seed_from_u64(mix(config.seed, t as u64));
            let n = trng.gen_range(2..=4);
            let relations: Vec<Relation> = (0..n)
                .map(|i| Relation {
                    name: format!("t{t}_r{i}"),
                    table_rows: log_uniform(&mut trng, 1e4, 1e6).round(),
                    indexed: trng.gen_bool(0.75),
                    covering: trng.gen_bool(0.4),
                    fanout: log_uniform(&mut trng, 0.5, 4.0),
                })
                .collect();
            for k in 0..config.queries_per_template {
                let qseq = (t * config.queries_per_template + k) as u64;
                let mut qrng = ChaCha8Rng::seed_from_u64(mix(config.seed ^ 0x5157, qseq));
                let rows: Vec<f64> =
                    relations.iter().map(|r| (r.table_rows * log_uniform(&mut qrng, 1e-3, 1.0)).max(1.0)).collect();
                let id = format!("{t}{}", letters(k));
                queries.push(Query {
                    query_id: id.clone(),
                    template_id: t.to_string(),
                    sql: format!(
                        "SELECT count(*) FROM {} /* {id} */",
                        relations.iter().map(|r| r.name.as_str()).collect::<Vec<_>>().join(" NATURAL JOIN ")
                    ),
                });
                models.insert(id, (qseq, QueryModel { relations: relations.clone(), rows }));
            }
        }
        SyntheticSource { config, queries, models }
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    /// Latency without measurement noise.
    pub fn noiseless_latency(&self, q: &Query, h: &HintSet) -> Result<f64, GatewayError> {
        Ok(self.model(q)?.1.plan(&h.flags).1)
    }

    fn model(&self, q: &Query) -> Result<&(u64, QueryModel), GatewayError> {
        self.models.get(&q.query_id).ok_or_else(|| GatewayError::Sql(format!("unknown query `{}`", q.query_id)))
    }

    /// All query × hint set records, with a fixed timestamp so the output is
    /// reproducible.
    pub fn records(&self, catalog: &Catalog) -> Vec<ExecutionRecord> {
        let mut me = self.clone();
        let stamp = DateTime::from_timestamp(1_700_000_000, 0).expect("valid timestamp");
        let mut out = Vec::new();
        for q in &self.queries {
            for h in catalog.iter() {
                let plan_json = me.plan_for(q, h).expect("known query");
                let m = me.measure(q, h).expect("known query");
                out.push(ExecutionRecord {
                    query_id: q.query_id.clone(),
                    template_id: q.template_id.clone(),
                    sql: q.sql.clone(),
                    hint_set_id: h.id,
                    plan_json,
                    latency_ms: m.latency_ms,
                    timed_out: m.timed_out,
                    collected_at: stamp,
                });
            }
        }
        out
    }
}

/// 0 → "a", 25 → "z", 26 → "ba", ...
fn letters(mut k: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'a' + (k % 26) as u8);
        k /= 26;
        if k == 0 {
            break;
        }
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

impl PlanSource for SyntheticSource {
    fn plan_for(&mut self, q: &Query, h: &HintSet) -> Result<String, GatewayError> {
        Ok(self.model(q)?.1.plan(&h.flags).0.to_explain_json())
    }

    fn measure(&mut self, q: &Query, h: &HintSet) -> Result<Measurement, GatewayError> {
        let (qseq, model) = self.model(q)?;
        let base = model.plan(&h.flags).1;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(self.config.seed, *qseq), h.id as u64 + 1));
        let factor = 1.0 + rng.gen_range(-self.config.noise..=self.config.noise);
        Ok(Measurement { latency_ms: base * factor, timed_out: false })
    }
}
