use crate::{
    CliError, CollectArgs, Command, DataArgs, EvaluateArgs, InspectArgs, Population, RankArgs, SourceKind,
    SpectrumArgs, SplitArgs, TrainArgs,
};
use hintrank::datastore::{
    dataset_stats, group_queries, load_records, make_split, QueryEntry, ScenarioSpec, SplitResult,
};
use hintrank::eval::{embedding_spectrum, evaluate, score_entries};
use hintrank::gateway::{collect, load_queries, replay_source, CollectSummary, DbConfig, PgSource, PlanSource, Query};
use hintrank::hint_catalog::{default_catalog, parse_catalog, Catalog};
use hintrank::scorer::{argmax_by_score, Checkpoint};
use hintrank::synthetic::{synthetic_catalog, SyntheticConfig, SyntheticSource};
use hintrank::trainer::{train, TrainConfig};
use std::path::{Path, PathBuf};

pub(crate) fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Collect(a) => cmd_collect(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn load_catalog(spec: &str) -> Result<Catalog, CliError> {
    match spec {
        "default" => Ok(default_catalog()),
        "synthetic" => Ok(synthetic_catalog()),
        path => Ok(parse_catalog(&read(Path::new(path))?)?),
    }
}

fn load_dataset(args: &DataArgs) -> Result<(Catalog, Vec<QueryEntry>), CliError> {
    let catalog = load_catalog(&args.catalog)?;
    let records = load_records(&args.data)?;
    let entries = group_queries(&records, &catalog)?;
    Ok((catalog, entries))
}

fn load_split(path: &Path) -> Result<SplitResult, CliError> {
    Ok(SplitResult::from_json(&read(path)?)?)
}

fn load_checkpoint(path: &Path, catalog: &Catalog) -> Result<Checkpoint, CliError> {
    let ckpt = Checkpoint::load(path)?;
    let active = catalog.content_hash();
    if ckpt.params.catalog_hash != active {
        return Err(CliError::CatalogMismatch { checkpoint: ckpt.params.catalog_hash, active });
    }
    Ok(ckpt)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_collect(a: CollectArgs) -> Result<(), CliError> {
    let catalog = load_catalog(&a.catalog)?;
    let manifest = a.manifest.clone().unwrap_or_else(|| with_suffix(&a.out, ".failures.jsonl"));
    let need_queries = |q: &Option<PathBuf>| -> Result<Vec<Query>, CliError> {
        let path = q.as_ref().ok_or_else(|| CliError::Usage("--queries is required for this source".into()))?;
        Ok(load_queries(path)?)
    };
    let summary: CollectSummary = match a.source {
        SourceKind::Synthetic => {
            let mut src = SyntheticSource::new(SyntheticConfig {
                templates: a.templates,
                queries_per_template: a.queries_per_template,
                seed: a.seed,
                ..SyntheticConfig::default()
            });
            let queries = match &a.queries {
                Some(p) => load_queries(p)?,
                None => src.queries().to_vec(),
            };
            run_collect(&mut src, &queries, &catalog, &a.out, &manifest)?
        }
        SourceKind::Replay => {
            let path =
                a.replay.as_ref().ok_or_else(|| CliError::Usage("--replay is required for --source replay".into()))?;
            let mut src = replay_source(path)?;
            let queries = need_queries(&a.queries)?;
            run_collect(&mut src, &queries, &catalog, &a.out, &manifest)?
        }
        SourceKind::Live => {
            let config = DbConfig {
                host: a.db_host,
                port: a.db_port,
                database: a.db_name,
                user: a.db_user,
                password_env: a.db_password_env,
                timeout_ms: a.timeout_ms,
                repetitions: a.repetitions,
                reset_statement: a.reset_statement,
            };
            let queries = need_queries(&a.queries)?;
            let mut src = PgSource::connect(config)?;
            run_collect(&mut src, &queries, &catalog, &a.out, &manifest)?
        }
    };
    println!("written {}  skipped {}  failed {}", summary.written, summary.skipped, summary.failed);
    if summary.failed > 0 {
        println!("failures logged to {}", manifest.display());
    }
    Ok(())
}

fn run_collect(
    src: &mut dyn PlanSource,
    queries: &[Query],
    catalog: &Catalog,
    out: &Path,
    manifest: &Path,
) -> Result<CollectSummary, CliError> {
    Ok(collect(src, queries, catalog, out, manifest)?)
}

fn cmd_split(a: SplitArgs) -> Result<(), CliError> {
    let (_, entries) = load_dataset(&a.data)?;
    let spec = ScenarioSpec { scenario: a.scenario, selection: a.selection, holdout: a.holdout, seed: a.seed };
    let split = make_split(&entries, &spec)?;
    write(&a.out, &split.to_json())?;
    println!("{}: {} train, {} test", spec.label(), split.train.len(), split.test.len());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let (catalog, entries) = load_dataset(&a.data)?;
    let mut config = match &a.config {
        Some(p) => TrainConfig::from_json(&read(p)?)?,
        None => a.mode.map(TrainConfig::for_mode).unwrap_or_default(),
    };
    if let Some(m) = a.mode {
        config.mode = m;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(e) = a.max_epochs {
        config.max_epochs = e;
    }
    let selected: Vec<QueryEntry> = match &a.split {
        Some(p) => {
            let split = load_split(p)?;
            SplitResult::select(&entries, &split.train).into_iter().cloned().collect()
        }
        None => entries,
    };
    let (ckpt, report) = train(&selected, &catalog.content_hash(), &config)?;
    ckpt.save(&a.out)?;
    let report_path = a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".report.json"));
    write(&report_path, &report.to_json())?;
    println!(
        "mode {}  epochs {}  best epoch {}  validation {:.3} (oracle {:.3})  {:.1}s",
        report.mode,
        report.epochs_run,
        report.best_epoch,
        report.best_validation,
        report.oracle_validation,
        report.wall_clock_seconds
    );
    println!("checkpoint {}", a.out.display());
    println!("report     {}", report_path.display());
    Ok(())
}

fn cmd_rank(a: RankArgs) -> Result<(), CliError> {
    let (catalog, entries) = load_dataset(&a.data)?;
    let ckpt = load_checkpoint(&a.checkpoint, &catalog)?;
    let entry = entries
        .iter()
        .find(|e| e.query_id == a.query_id)
        .ok_or_else(|| CliError::Usage(format!("query `{}` is not in the dataset", a.query_id)))?;
    let scores = score_entries(&ckpt.params, &[entry])?;
    let ids: Vec<usize> = entry.candidates.iter().map(|c| c.representative_hint()).collect();
    let best = argmax_by_score(&scores, &ids).expect("query has candidates");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(ids[i].cmp(&ids[j])));
    println!("query {}  ({} distinct plans)", entry.query_id, entry.candidates.len());
    println!("  {:>12}  {:>12}  hint sets", "score", "latency_ms");
    for i in order {
        let c = &entry.candidates[i];
        let mark = if i == best { '*' } else { ' ' };
        let hints: Vec<String> = c.hint_set_ids.iter().map(|h| h.to_string()).collect();
        let label = catalog.get(c.representative_hint()).map(|h| h.label()).unwrap_or_default();
        println!("{mark} {:>12.6}  {:>12.3}  [{}] {label}", scores[i], c.latency, hints.join(","));
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let (catalog, entries) = load_dataset(&a.data)?;
    let ckpt = load_checkpoint(&a.checkpoint, &catalog)?;
    let (test, label) = match &a.split {
        Some(p) => {
            let split = load_split(p)?;
            (SplitResult::select(&entries, &split.test), Some(split.spec.label()))
        }
        None => (entries.iter().collect(), None),
    };
    let report = evaluate(&ckpt.params, &test, label)?;
    if let Some(p) = &a.report {
        write(p, &report.to_json())?;
    }
    let text = report.to_text();
    if let Some(p) = &a.text {
        write(p, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn cmd_spectrum(a: SpectrumArgs) -> Result<(), CliError> {
    let (catalog, entries) = load_dataset(&a.data)?;
    let ckpt = load_checkpoint(&a.checkpoint, &catalog)?;
    let chosen: Vec<&QueryEntry> = match (a.population, &a.split) {
        (Population::All, _) => entries.iter().collect(),
        (pop, Some(p)) => {
            let split = load_split(p)?;
            let ids = if pop == Population::Train { &split.train } else { &split.test };
            SplitResult::select(&entries, ids)
        }
        (_, None) => return Err(CliError::Usage("--population train|test needs --split".into())),
    };
    let plans: Vec<_> = chosen.iter().flat_map(|e| e.candidates.iter().map(|c| &c.plan)).collect();
    let report = embedding_spectrum(&ckpt.params, &plans)?;
    write(&a.out, &report.to_csv())?;
    if let Some(p) = &a.report {
        write(p, &report.to_json())?;
    }
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> Result<(), CliError> {
    let (_, entries) = load_dataset(&a.data)?;
    let s = dataset_stats(&entries);
    if let Some(p) = &a.report {
        write(p, &serde_json::to_string_pretty(&s).expect("stats serialize"))?;
    }
    println!("Queries          {}", s.queries);
    println!("Templates        {}", s.templates);
    println!("Unique Plans     {}", s.unique_plans);
    println!("Max Nodes        {}", s.max_nodes);
    println!("Avg Nodes        {:.2}", s.avg_nodes);
    println!("Max Depth        {}", s.max_depth);
    println!("Avg Depth        {:.2}", s.avg_depth);
    println!("Plans per Query  {:.2}", s.mean_candidates_per_query);
    Ok(())
}
