//! Test-set evaluation: per-query selections against the default plan and
//! the per-query optimum, aggregated overall and per template.

mod spectrum;

pub use spectrum::{embedding_spectrum, spectrum_from_embeddings, SpectrumReport, COLLAPSE_THRESHOLD};

use crate::datastore::QueryEntry;
use crate::plan_ir::encode_plan;
use crate::scorer::{score_batch, ScorerError, ScorerParams};
use crate::trainer::{selections, TrainError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("query `{0}` has no candidate latencies")]
    MissingLatency(String),
    #[error("latency totals must be positive (default {default}, selected {selected})")]
    NonPositiveTotal { default: f64, selected: f64 },
    #[error("spectrum needs at least 2 distinct plans, got {0}")]
    TooFewPlans(usize),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

impl From<TrainError> for EvalError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::MissingLatency(q) => EvalError::MissingLatency(q),
            TrainError::Scorer(s) => EvalError::Scorer(s),
            other => EvalError::Scorer(ScorerError::Malformed(other.to_string())),
        }
    }
}

/// `default_total / selected_total`.
pub fn speedup(default_total: f64, selected_total: f64) -> Result<f64, EvalError> {
    if default_total > 0.0 && selected_total > 0.0 {
        Ok(default_total / selected_total)
    } else {
        Err(EvalError::NonPositiveTotal { default: default_total, selected: selected_total })
    }
}

/// Two decimals, e.g. `3.47`.
pub fn format_speedup(x: f64) -> String {
    format!("{x:.2}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub query_id: String,
    pub template_id: String,
    pub default_latency: f64,
    pub selected_hint: usize,
    pub selected_latency: f64,
    pub oracle_hint: usize,
    pub oracle_latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRow {
    pub template_id: String,
    pub queries: usize,
    pub default_mean: f64,
    pub selected_mean: f64,
    pub oracle_mean: f64,
    pub regressions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Scenario label such as `repeat-rand`, when known.
    pub scenario: Option<String>,
    pub queries: usize,
    pub total_default: f64,
    pub total_selected: f64,
    pub total_oracle: f64,
    pub speedup: f64,
    pub oracle_speedup: f64,
    pub regressions: usize,
    pub per_template: Vec<TemplateRow>,
    pub rows: Vec<EvalRow>,
}

/// Builds the report from a chosen candidate index per query.
pub fn report_from_selections(
    entries: &[&QueryEntry],
    picks: &[usize],
    scenario: Option<String>,
) -> Result<EvalReport, EvalError> {
    if entries.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let mut rows = Vec::with_capacity(entries.len());
    for (e, &pick) in entries.iter().zip(picks) {
        let oracle = e
            .candidates
            .iter()
            .min_by(|a, b| a.latency.total_cmp(&b.latency).then(a.representative_hint().cmp(&b.representative_hint())))
            .ok_or_else(|| EvalError::MissingLatency(e.query_id.clone()))?;
        let chosen = &e.candidates[pick];
        rows.push(EvalRow {
            query_id: e.query_id.clone(),
            template_id: e.template_id.clone(),
            default_latency: e.default_latency,
            selected_hint: chosen.representative_hint(),
            selected_latency: chosen.latency,
            oracle_hint: oracle.representative_hint(),
            oracle_latency: oracle.latency,
        });
    }
    let total = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>();
    let (td, ts, to) = (total(|r| r.default_latency), total(|r| r.selected_latency), total(|r| r.oracle_latency));
    let mut groups: BTreeMap<&str, Vec<&EvalRow>> = BTreeMap::new();
    for r in &rows {
        groups.entry(&r.template_id).or_default().push(r);
    }
    let per_template = groups
        .into_iter()
        .map(|(t, rs)| {
            let n = rs.len() as f64;
            let mean = |f: fn(&EvalRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            TemplateRow {
                template_id: t.to_string(),
                queries: rs.len(),
                default_mean: mean(|r| r.default_latency),
                selected_mean: mean(|r| r.selected_latency),
                oracle_mean: mean(|r| r.oracle_latency),
                regressions: rs.iter().filter(|r| r.selected_latency > r.default_latency).count(),
            }
        })
        .collect();
    Ok(EvalReport {
        scenario,
        queries: rows.len(),
        total_default: td,
        total_selected: ts,
        total_oracle: to,
        speedup: speedup(td, ts)?,
        oracle_speedup: speedup(td, to)?,
        regressions: rows.iter().filter(|r| r.selected_latency > r.default_latency).count(),
        per_template,
        rows,
    })
}

/// Scores every candidate of every query and reports the outcome of
/// choosing the top-scored plan.
pub fn evaluate(
    params: &ScorerParams,
    entries: &[&QueryEntry],
    scenario: Option<String>,
) -> Result<EvalReport, EvalError> {
    if entries.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let scores = score_entries(params, entries)?;
    let picks = selections(entries, &scores)?;
    report_from_selections(entries, &picks, scenario)
}

/// Scores of all candidates, query by query, flattened.
pub fn score_entries(params: &ScorerParams, entries: &[&QueryEntry]) -> Result<Vec<f64>, EvalError> {
    let mut out = Vec::new();
    for e in entries {
        if e.candidates.is_empty() {
            return Err(EvalError::MissingLatency(e.query_id.clone()));
        }
        let trees: Vec<_> = e.candidates.iter().map(|c| encode_plan(&c.plan, &params.scaler)).collect();
        out.extend(score_batch(params, &trees.iter().collect::<Vec<_>>())?);
    }
    Ok(out)
}

/// Fraction of candidate pairs with distinct latencies whose score order
/// matches the latency order; `None` without such pairs.
pub fn pairwise_accuracy(entries: &[&QueryEntry], scores: &[f64]) -> Option<f64> {
    let (mut agree, mut total) = (0usize, 0usize);
    let mut pos = 0;
    for e in entries {
        let s = &scores[pos..pos + e.candidates.len()];
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                let (li, lj) = (e.candidates[i].latency, e.candidates[j].latency);
                if li == lj {
                    continue;
                }
                total += 1;
                if (li < lj && s[i] > s[j]) || (lj < li && s[j] > s[i]) {
                    agree += 1;
                }
            }
        }
        pos += e.candidates.len();
    }
    (total > 0).then(|| agree as f64 / total as f64)
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(sc) = &self.scenario {
            let _ = writeln!(s, "scenario      {sc}");
        }
        let _ = writeln!(s, "queries       {}", self.queries);
        let _ = writeln!(s, "speedup       {}", format_speedup(self.speedup));
        let _ = writeln!(s, "oracle        {}", format_speedup(self.oracle_speedup));
        let _ = writeln!(s, "regressions   {}", self.regressions);
        let _ = writeln!(
            s,
            "totals (ms)   default {:.1}  selected {:.1}  oracle {:.1}\n",
            self.total_default, self.total_selected, self.total_oracle
        );
        let header = ["template", "queries", "default_ms", "selected_ms", "oracle_ms", "regressions"];
        let body: Vec<[String; 6]> = self
            .per_template
            .iter()
            .map(|t| {
                [
                    t.template_id.clone(),
                    t.queries.to_string(),
                    format!("{:.1}", t.default_mean),
                    format!("{:.1}", t.selected_mean),
                    format!("{:.1}", t.oracle_mean),
                    t.regressions.to_string(),
                ]
            })
            .collect();
        s.push_str(&aligned(&header, &body));
        s
    }
}

/// One line per scenario: speedup, oracle speedup and regression count.
pub fn scenario_table(reports: &[EvalReport]) -> String {
    let header = ["scenario", "queries", "speedup", "oracle", "regressions"];
    let body: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            [
                r.scenario.clone().unwrap_or_else(|| "-".into()),
                r.queries.to_string(),
                format_speedup(r.speedup),
                format_speedup(r.oracle_speedup),
                r.regressions.to_string(),
            ]
        })
        .collect();
    aligned(&header, &body)
}

/// Left-aligned first column, right-aligned numeric columns.
pub(crate) fn aligned<const N: usize>(header: &[&str; N], body: &[[String; N]]) -> String {
    let mut w = header.map(str::len);
    for row in body {
        for (i, c) in row.iter().enumerate() {
            w[i] = w[i].max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut out = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(out, "{c:<width$}", width = w[0]);
            } else {
                let _ = write!(out, "  {c:>width$}", width = w[i]);
            }
        }
        out.push('\n');
        out
    };
    let mut s = line(header.to_vec());
    for row in body {
        s.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::group_queries;
    use crate::scorer::{init_params_with, Architecture};
    use crate::synthetic::{synthetic_catalog, SyntheticConfig, SyntheticSource};

    fn data() -> Vec<QueryEntry> {
        let cat = synthetic_catalog();
        let src = SyntheticSource::new(SyntheticConfig { templates: 4, queries_per_template: 3, ..Default::default() });
        group_queries(&src.records(&cat), &cat).unwrap()
    }

    #[test]
    fn speedup_examples() {
        assert_eq!(speedup(7.0, 7.0).unwrap(), 1.0);
        assert_eq!(speedup(100.0, 50.0).unwrap(), 2.0);
        assert!(matches!(speedup(0.0, 1.0), Err(EvalError::NonPositiveTotal { .. })));
        assert_eq!(format_speedup(3.4712), "3.47");
        assert_eq!(format_speedup(6.7349), "6.73");
    }

    #[test]
    fn always_default_is_neutral() {
        let e = data();
        let refs: Vec<&QueryEntry> = e.iter().collect();
        let picks: Vec<usize> = e.iter().map(QueryEntry::default_candidate).collect();
        let r = report_from_selections(&refs, &picks, None).unwrap();
        assert_eq!(r.speedup, 1.0);
        assert_eq!(r.regressions, 0);
    }

    #[test]
    fn arithmetic_example() {
        let mut e = data();
        e.truncate(2);
        for q in &mut e {
            q.candidates.truncate(2);
            q.candidates[0].latency = 100.0;
            q.default_latency = 100.0;
        }
        e[0].candidates[1].latency = 50.0;
        e[1].candidates[1].latency = 150.0;
        let refs: Vec<&QueryEntry> = e.iter().collect();
        let r = report_from_selections(&refs, &[1, 1], Some("adhoc-rand".into())).unwrap();
        assert_eq!(r.speedup, 1.0);
        assert_eq!(r.regressions, 1);
        assert_eq!(r.total_oracle, 150.0);
        assert!(r.to_text().contains("speedup       1.00"));
    }

    #[test]
    fn oracle_rows_and_dominance() {
        let e = data();
        let refs: Vec<&QueryEntry> = e.iter().collect();
        let p = init_params_with(&Architecture { input_dim: 9, conv_channels: vec![4], mlp_dims: vec![1] }, 5).unwrap();
        let r = evaluate(&p, &refs, None).unwrap();
        for (row, q) in r.rows.iter().zip(&e) {
            let brute = q.candidates.iter().map(|c| c.latency).fold(f64::INFINITY, f64::min);
            let worst = q.candidates.iter().map(|c| c.latency).fold(0.0, f64::max);
            assert_eq!(row.oracle_latency, brute);
            assert!(row.oracle_latency <= row.selected_latency && row.selected_latency <= worst);
        }
        assert_eq!(r.per_template.len(), 4);
        assert_eq!(r.per_template.iter().map(|t| t.queries).sum::<usize>(), 12);
        let parsed: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(parsed, r);
        assert!(matches!(evaluate(&p, &[], None), Err(EvalError::EmptyTestSet)));
    }

    #[test]
    fn accuracy_counts_ordered_pairs() {
        let mut e = data();
        e.truncate(1);
        e[0].candidates.truncate(3);
        for (c, l) in e[0].candidates.iter_mut().zip([1.0, 2.0, 3.0]) {
            c.latency = l;
        }
        let refs: Vec<&QueryEntry> = e.iter().collect();
        assert_eq!(pairwise_accuracy(&refs, &[3.0, 2.0, 1.0]), Some(1.0));
        assert_eq!(pairwise_accuracy(&refs, &[1.0, 2.0, 3.0]), Some(0.0));
        assert_eq!(pairwise_accuracy(&refs, &[3.0, 1.0, 2.0]), Some(2.0 / 3.0));
    }

    #[test]
    fn scenario_table_shape() {
        let e = data();
        let refs: Vec<&QueryEntry> = e.iter().collect();
        let picks: Vec<usize> = e.iter().map(QueryEntry::default_candidate).collect();
        let a = report_from_selections(&refs, &picks, Some("repeat-rand".into())).unwrap();
        let t = scenario_table(&[a.clone(), EvalReport { scenario: Some("adhoc-slow".into()), ..a }]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("repeat-rand") && lines[1].contains("1.00"));
        assert_eq!(lines[1].len(), lines[2].len());
    }
}
