use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use pbforecast::data::{
    load_campaign_dir, load_pabulib, validate_campaign, write_campaign, ModelId, PredictionRun, META_FILE,
};
use pbforecast::features::{embed_descriptions, select_pca_dim, SweepData};
use pbforecast::llm::{
    probe_attribute_retrieval, probe_description_completion, summarize_probes, CompletionMode, PromptKind,
    PromptVariant,
};
use pbforecast::metrics::{evaluate_run, null_predictor, null_run, EvalOptions, EvalReport, GreedyRule};
use pbforecast::models::{ClassicalOptions, ModelKind};

use crate::args::*;
use crate::error::{CliError, CliResult, ErrorKind};
use crate::forecast::{classical_run, encode_train, fit_and_save, llm_run, resolve_dim};
use crate::workspace::Workspace;

/// What a command prints on stdout.
#[derive(Debug)]
pub enum Output {
    Json(serde_json::Value),
    Text(String),
}

impl Output {
    pub fn render(&self) -> String {
        match self {
            Output::Json(v) => serde_json::to_string_pretty(v).expect("json value") + "\n",
            Output::Text(t) => t.clone(),
        }
    }
}

/// Runs every command except `serve`.
pub fn run(ws: &Workspace, command: &Command) -> CliResult<Output> {
    match command {
        Command::Validate(a) => validate(ws, a),
        Command::Embed(a) => embed(ws, a),
        Command::SelectDim(a) => select_dim(ws, a),
        Command::Fit(a) => fit(ws, a),
        Command::Predict(a) => predict(ws, a),
        Command::Evaluate(a) => evaluate(ws, a),
        Command::Probe(a) => probe(ws, a),
        Command::Report(a) => report(ws, a),
        Command::Serve(_) => Err(CliError::usage("serve is not a batch command")),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::new(ErrorKind::Data, format!("{}: {e}", path.display())))
}

fn validate(ws: &Workspace, a: &ValidateArgs) -> CliResult<Output> {
    let path = PathBuf::from(&a.path);
    let campaign = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pb")) {
        let language = a.language.as_deref().ok_or_else(|| CliError::usage("--language is required for .pb files"))?;
        load_pabulib(&path, language)?
    } else if path.join(META_FILE).is_file() {
        load_campaign_dir(&path)?
    } else if path.exists() {
        return Err(CliError::usage(format!("{} is neither a .pb file nor a campaign folder", path.display())));
    } else {
        ws.load(&a.path)?
    };
    // Loaders reject unclean campaigns; this covers Pabulib input.
    let report = validate_campaign(&campaign);
    if !report.is_clean() {
        return Err(CliError::new(ErrorKind::Validation, format!("campaign failed validation:\n{report}"))
            .with_details(serde_json::to_value(&report.violations)?));
    }
    if let Some(dir) = &a.write_to {
        write_campaign(&campaign, dir)?;
    }
    Ok(Output::Json(json!({
        "campaign": campaign.id(),
        "projects": campaign.len(),
        "voters": campaign.meta.voters,
        "total_votes": campaign.meta.total_votes,
        "budget": campaign.meta.budget.as_major_f64(),
        "ground_truth": campaign.has_ground_truth(),
        "violations": [],
        "written_to": a.write_to,
    })))
}

fn embed(ws: &Workspace, a: &EmbedArgs) -> CliResult<Output> {
    let ids = if a.campaigns.is_empty() { ws.campaign_ids() } else { a.campaigns.clone() };
    let embedder = ws.embedder()?;
    let mut out = Vec::new();
    for id in ids {
        let campaign = ws.load(&id)?;
        let vectors = embed_descriptions(&campaign, &*embedder, ws.settings.embedding.max_in_flight)?;
        out.push(json!({
            "campaign": id,
            "projects": vectors.len(),
            "dim": vectors.first().map_or(0, Vec::len),
        }));
    }
    Ok(Output::Json(json!({ "embedding": ws.settings.embedding.describe(), "campaigns": out })))
}

fn select_dim(ws: &Workspace, a: &SelectDimArgs) -> CliResult<Output> {
    let kind = ModelKind::from(a.kind);
    let train_id = ws.train_for(&a.eval, a.train.as_deref())?;
    let train = ws.load(&train_id)?;
    let eval = ws.load(&a.eval)?;
    let embedder = ws.embedder()?;
    let (schema, train_features) = encode_train(&train, &*embedder, ws.settings.embedding.max_in_flight)?;
    let eval_features = pbforecast::features::encode_campaign(&eval, &schema, &*embedder, ws.settings.embedding.max_in_flight)?;
    let dims: Vec<usize> = if a.dims.is_empty() { (1..=train.len()).collect() } else { a.dims.clone() };
    let max = schema.embedding_range().len().min(train.len());
    let dims: Vec<usize> = dims.into_iter().filter(|&d| d <= max).collect();
    if dims.is_empty() {
        return Err(CliError::usage(format!("no dimension in range 1..={max}")));
    }
    let data = SweepData { schema: &schema, train: &train, train_features: &train_features, eval: &eval, eval_features: &eval_features };
    let options = ClassicalOptions { k: a.k, ..ClassicalOptions::default() };
    let sweep = select_pca_dim(data, kind, &dims, &options)?;
    let value = json!({ "train": train_id, "eval": a.eval, "embedding": ws.settings.embedding.describe(), "sweep": sweep });
    write_file(
        &ws.reports_dir(&a.eval).join(format!("dim-sweep.{}.json", kind.to_string().to_lowercase())),
        &(serde_json::to_string_pretty(&value)? + "\n"),
    )?;
    Ok(Output::Json(value))
}

fn fit(ws: &Workspace, a: &FitArgs) -> CliResult<Output> {
    let kind = ModelKind::from(a.kind);
    let train_id = match (&a.train, &a.eval) {
        (Some(t), _) => t.clone(),
        (None, Some(e)) => ws.default_train(e)?,
        (None, None) => return Err(CliError::usage("pass --train or --eval")),
    };
    let dim = resolve_dim(ws, kind, a.dim, a.eval.as_deref())?;
    let model = fit_and_save(ws, &train_id, kind, dim, a.k)?;
    Ok(Output::Json(json!({
        "kind": kind,
        "train": train_id,
        "pca_dim": model.pca_dim(),
        "schema_hash": model.schema_hash,
        "embedding": model.embedding.describe(),
        "path": ws.model_path(&train_id, kind),
    })))
}

fn predict(ws: &Workspace, a: &PredictArgs) -> CliResult<Output> {
    let target = ws.load(&a.eval)?;
    let run = match a.model {
        ModelId::Pvm | ModelId::Knn => {
            let kind = if a.model == ModelId::Pvm { ModelKind::Pvm } else { ModelKind::Knn };
            let train_id = ws.train_for(&a.eval, a.train.as_deref())?;
            let path = ws.model_path(&train_id, kind);
            let stored = if path.is_file() { Some(ws.load_model(&path)?) } else { None };
            let model = match stored {
                Some(m) if a.dim.is_none_or(|d| d == m.pca_dim()) && a.k.is_none() => m,
                _ => fit_and_save(ws, &train_id, kind, resolve_dim(ws, kind, a.dim, Some(&a.eval))?, a.k)?,
            };
            classical_run(ws, &model, &target)?
        }
        ModelId::Null => null_run(&target, a.seed),
        llm => {
            let kind = PromptKind::from_model_id(llm).expect("remaining ids are LLM variants");
            let variant = PromptVariant {
                kind,
                reasoning: a.reasoning.into(),
                language: a.language.clone().unwrap_or_else(|| target.meta.language.clone()),
            };
            let client = ws.llm_client()?;
            llm_run(ws, &client, &variant, &target, a.train.as_deref(), &ws.settings.pipeline)?
        }
    };
    if a.dry_run {
        return Ok(Output::Json(serde_json::to_value(&run)?));
    }
    let stored = ws.run_store()?.save(&run)?;
    Ok(Output::Json(json!({
        "run_id": stored.run_id(),
        "campaign": stored.campaign_id,
        "model": stored.model,
        "records": stored.records.len(),
        "gaps": stored.gap_count(),
        "complete": stored.complete,
        "config": stored.config,
    })))
}

fn eval_options(a: &EvaluateArgs) -> EvalOptions {
    EvalOptions {
        force: a.force,
        greedy_rule: if a.stop_at_first_overflow { GreedyRule::StopAtFirstOverflow } else { GreedyRule::SkipAndContinue },
    }
}

/// Writes `<reports>/<campaign>/<MODEL>.json` and `<MODEL>.series.csv`.
pub fn write_report(ws: &Workspace, report: &EvalReport) -> CliResult<PathBuf> {
    let dir = ws.reports_dir(&report.campaign_id);
    let json_path = dir.join(format!("{}.json", report.model));
    write_file(&json_path, &(serde_json::to_string_pretty(report)? + "\n"))?;
    write_file(&dir.join(format!("{}.series.csv", report.model)), &report.series_csv())?;
    Ok(json_path)
}

fn evaluate(ws: &Workspace, a: &EvaluateArgs) -> CliResult<Output> {
    let campaign = ws.load(&a.campaign)?;
    let report = if a.model == Some(ModelId::Null) {
        null_predictor(&campaign, a.shuffles, a.seed)?
    } else {
        let run = ws.resolve_run(&a.campaign, a.run.as_deref(), a.model)?;
        evaluate_run(&run, &campaign, &eval_options(a))?
    };
    let path = write_report(ws, &report)?;
    Ok(Output::Json(json!({
        "campaign": report.campaign_id,
        "model": report.model,
        "run_id": report.run_id,
        "normalized_rmse": report.normalized_rmse,
        "kendall_tau": report.kendall_tau,
        "gaps": report.gap_count,
        "distinct_predictions": report.distinct_predictions,
        "banded": report.banded,
        "report": path,
    })))
}

fn probe(ws: &Workspace, a: &ProbeArgs) -> CliResult<Output> {
    let campaign = ws.load(&a.campaign)?;
    let client = ws.llm_client()?;
    let embedder = ws.embedder()?;
    let limit = a.limit.unwrap_or(campaign.len()).min(campaign.len());
    let (title, prefix, attributes) = match a.kind {
        ProbeArg::TitleOnly => (true, false, false),
        ProbeArg::Prefix => (false, true, false),
        ProbeArg::Attributes => (false, false, true),
        ProbeArg::All => (true, true, true),
    };
    let mut reports = Vec::new();
    for p in &campaign.projects[..limit] {
        if title {
            reports.push(probe_description_completion(&client, &*embedder, &campaign.meta, p, CompletionMode::TitleOnly)?);
        }
        if prefix {
            reports.push(probe_description_completion(&client, &*embedder, &campaign.meta, p, CompletionMode::Prefix)?);
        }
        if attributes {
            reports.push(probe_attribute_retrieval(&client, &campaign.meta, p)?);
        }
    }
    let summary = summarize_probes(&reports);
    let value = json!({
        "campaign": campaign.id(),
        "llm_model": client.config().model,
        "summary": summary,
        "reports": reports,
    });
    write_file(&ws.reports_dir(&a.campaign).join("probes.json"), &(serde_json::to_string_pretty(&value)? + "\n"))?;
    Ok(Output::Json(json!({ "campaign": campaign.id(), "summary": summary })))
}

/// Stored evaluation reports of a campaign in model order.
pub fn load_reports(ws: &Workspace, campaign: &str) -> CliResult<Vec<EvalReport>> {
    let dir = ws.reports_dir(campaign);
    let mut out = Vec::new();
    for model in ModelId::ALL {
        let path = dir.join(format!("{model}.json"));
        match std::fs::read_to_string(&path) {
            Ok(text) => out.push(serde_json::from_str(&text).map_err(|e| {
                CliError::new(ErrorKind::Data, format!("{}: {e}", path.display()))
            })?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>, scale: f64, places: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.*}", places, x * scale))
}

/// Markdown summary of one campaign's reports: accuracy and top-k tables.
pub fn summary_table(campaign: &str, reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let n = reports.first().map_or(0, |r| r.n_projects);
    let _ = writeln!(out, "## {campaign} ({n} projects)\n");
    let _ = writeln!(out, "| Model | Normalized RMSE (%) | Kendall tau | Gaps | Distinct | Banded |");
    let _ = writeln!(out, "|---|---:|---:|---:|---:|---|");
    for r in reports {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            r.model,
            fmt_opt(r.normalized_rmse, 100.0, 2),
            fmt_opt(r.kendall_tau, 1.0, 3),
            r.gap_count,
            r.distinct_predictions,
            if r.banded { "yes" } else { "no" }
        );
    }
    let ks: Vec<usize> = [10, 20, 30].iter().map(|p| (n * p / 100).max(1)).collect();
    let _ = writeln!(out, "\n| Model | J@{} | J@{} | J@{} | Funded (pred/real) |", ks[0], ks[1], ks[2]);
    let _ = writeln!(out, "|---|---:|---:|---:|---:|");
    for r in reports {
        let cells: Vec<String> = ks.iter().map(|&k| fmt_opt(r.jaccard_at(k), 1.0, 3)).collect();
        let overlap = r.funded_pred.iter().filter(|id| r.funded_real.contains(id)).count();
        let funded = if r.funded_pred.is_empty() && r.model == ModelId::Null {
            "-".to_string()
        } else {
            format!("{overlap}/{}", r.funded_real.len())
        };
        let _ = writeln!(out, "| {} | {} | {} | {} | {funded} |", r.model, cells[0], cells[1], cells[2]);
    }
    out
}

type Series = fn(&EvalReport) -> &Vec<f64>;

/// One CSV per plotted quantity: `k` then one column per model.
pub fn plot_csvs(reports: &[EvalReport]) -> BTreeMap<&'static str, String> {
    let k_max = reports.iter().map(|r| r.k_max).max().unwrap_or(0);
    let mut files = BTreeMap::new();
    let series: [(&str, Series); 2] =
        [("jaccard.csv", |r| &r.jaccard), ("cum_cost.csv", |r| &r.cum_cost_pred)];
    for (name, get) in series {
        let mut csv = String::from("k");
        if name == "cum_cost.csv" {
            csv.push_str(",REAL");
        }
        for r in reports {
            let _ = write!(csv, ",{}", r.model);
        }
        csv.push('\n');
        for k in 0..k_max {
            let _ = write!(csv, "{}", k + 1);
            if name == "cum_cost.csv" {
                let real = reports.first().and_then(|r| r.cum_cost_real.get(k));
                let _ = write!(csv, ",{}", real.map(|v| v.to_string()).unwrap_or_default());
            }
            for r in reports {
                let _ = write!(csv, ",{}", get(r).get(k).map(|v| v.to_string()).unwrap_or_default());
            }
            csv.push('\n');
        }
        files.insert(name, csv);
    }
    files
}

fn report(ws: &Workspace, a: &ReportArgs) -> CliResult<Output> {
    if let Some(run_id) = &a.run {
        let campaign_id = run_id.split(':').next().unwrap_or_default();
        let campaign = ws.load(campaign_id)?;
        let run: PredictionRun = ws.resolve_run(campaign_id, Some(run_id), None)?;
        let r = evaluate_run(&run, &campaign, &EvalOptions { force: true, ..EvalOptions::default() })?;
        let mut text = format!("run {run_id}\n\n");
        text.push_str(&summary_table(campaign_id, std::slice::from_ref(&r)));
        return Ok(Output::Text(text));
    }
    let ids = if a.campaigns.is_empty() {
        ws.campaign_ids().into_iter().filter(|id| ws.reports_dir(id).is_dir()).collect()
    } else {
        a.campaigns.clone()
    };
    let mut text = String::new();
    for id in ids {
        ws.entry(&id)?;
        let reports = load_reports(ws, &id)?;
        if reports.is_empty() {
            let _ = writeln!(text, "## {id}\n\nno evaluation reports; run `evaluate` first\n");
            continue;
        }
        let table = summary_table(&id, &reports);
        let dir = ws.reports_dir(&id);
        write_file(&dir.join("summary.md"), &table)?;
        for (name, csv) in plot_csvs(&reports) {
            write_file(&dir.join("plots").join(name), &csv)?;
        }
        text.push_str(&table);
        text.push('\n');
    }
    Ok(Output::Text(text))
}
