use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use veritrace_core::corpus::{
    load_jsonl, parse_babi, write_jsonl, CategoryLabel, DatasetKind, LoadOptions, QaInstance,
};
use veritrace_core::decompose::{cross_check, decompose as decompose_instance, solve_oracle, TraceSkeleton};
use veritrace_core::infer::{collect, Outcome};
use veritrace_core::parse_eval::{evaluate, score_answer, EvalResult, ModelOutput};
use veritrace_core::report::{emit, summarize, Aggregate, ConfusionReport, Format, MetricsTable, QuerySetting};
use veritrace_core::synth::synth_cotemp;
use veritrace_core::trace::{export_sft, render_answers, render_correct, CorruptionPolicy, SftMode, SftRecord};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::Run;
use crate::{
    BuildSftArgs, DecomposeArgs, EvalArgs, InferArgs, IngestArgs, OracleArgs, Replay, ReportArgs, SourceFormat,
};

fn finish(run: Run, cfg: &RunConfig) -> Result<(), CliError> {
    for path in run.finish(cfg)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn tagged(stem: &str, tag: &Option<String>, ext: &str) -> String {
    match tag {
        Some(t) => format!("{stem}.{t}.{ext}"),
        None => format!("{stem}.{ext}"),
    }
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("serializable");
        out.push(b'\n');
    }
    out
}

fn read_jsonl<T: DeserializeOwned>(run: &mut Run, path: &Path) -> Result<Vec<T>, CliError> {
    let text = run.read_input_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn load_instances(run: &mut Run, path: &Path, kind: &DatasetKind) -> Result<Vec<QaInstance>, CliError> {
    let bytes = run.read_input(path)?;
    Ok(load_jsonl(bytes.as_slice(), kind, LoadOptions::default())?.instances)
}

pub fn ingest(a: IngestArgs, cfg: &mut RunConfig) -> Result<(), CliError> {
    a.common.apply(cfg);
    let mut run = Run::new("ingest", &cfg.out_dir());
    let instances = if let Some(n) = a.synthetic_cotemp {
        if cfg.dataset.kind.as_deref().is_some_and(|k| k != "cotemp") {
            return Err(CliError::Config("synthetic instances are co-temporal; use --dataset cotemp".into()));
        }
        cfg.dataset.kind = Some("cotemp".into());
        let seed = a.seed.or(cfg.dataset.synthetic_seed).unwrap_or(0);
        cfg.dataset.synthetic_count = Some(n);
        cfg.dataset.synthetic_seed = Some(seed);
        synth_cotemp(n, seed)
    } else {
        let input = a.input.as_deref().expect("clap enforces input");
        match a.format {
            SourceFormat::Babi => {
                if cfg.dataset.kind.as_deref().is_some_and(|k| k != "babi") {
                    return Err(CliError::Config("bAbI input requires --dataset babi".into()));
                }
                cfg.dataset.kind = Some("babi".into());
                let task = a.task.as_deref().ok_or_else(|| CliError::Config("bAbI input requires --task".into()))?;
                let label = CategoryLabel::new(task)?;
                parse_babi(&run.read_input_string(input)?, &label)?
            }
            SourceFormat::Jsonl => {
                let kind = cfg.dataset_kind()?;
                let bytes = run.read_input(input)?;
                let report = load_jsonl(bytes.as_slice(), &kind, LoadOptions { strict: !a.lenient })?;
                for s in &report.skipped {
                    warn!("skipped line {}: {}", s.line, s.reason);
                }
                if a.lenient {
                    let skipped = report.skipped.iter().map(|s| json!({"line": s.line, "reason": s.reason}));
                    run.output("skipped.jsonl", jsonl(skipped));
                }
                report.instances
            }
        }
    };
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &instances).map_err(|e| CliError::io(Path::new("instances.jsonl"), e))?;
    run.output("instances.jsonl", buf);
    info!("ingested {} instance(s)", instances.len());
    finish(run, cfg)
}

#[derive(Serialize)]
struct SkeletonLine<'a> {
    id: &'a str,
    #[serde(flatten)]
    skeleton: &'a TraceSkeleton,
}

pub fn decompose(a: DecomposeArgs, cfg: &mut RunConfig) -> Result<(), CliError> {
    a.common.apply(cfg);
    let kind = cfg.dataset_kind()?;
    let mut run = Run::new("decompose", &cfg.out_dir());
    let instances = load_instances(&mut run, &a.input, &kind)?;
    let mut skeletons = Vec::with_capacity(instances.len());
    for inst in &instances {
        skeletons.push(decompose_instance(inst)?);
    }
    let lines = instances.iter().zip(&skeletons).map(|(i, s)| SkeletonLine { id: &i.id, skeleton: s });
    run.output("skeletons.jsonl", jsonl(lines));
    if kind == DatasetKind::Cotemp {
        let checks: Vec<_> = instances.iter().filter_map(cross_check).collect();
        let disagree = checks.iter().filter(|c| !c.agrees).count();
        if disagree > 0 {
            warn!("{disagree} instance(s) whose gold category differs from the recomputed relation");
        }
        run.output("crosscheck.jsonl", jsonl(&checks));
    }
    finish(run, cfg)
}

pub fn build_sft(a: BuildSftArgs, cfg: &mut RunConfig) -> Result<(), CliError> {
    a.common.apply(cfg);
    let mode: SftMode = a.mode.parse().map_err(CliError::Usage)?;
    if let Some(seed) = a.seed {
        cfg.corruption.seed = Some(seed);
    }
    if a.keep_category {
        cfg.corruption.corrupt_category = false;
    }
    if a.keep_facts {
        cfg.corruption.corrupt_facts = false;
    }
    let policy = match mode {
        SftMode::IncorrectTrace => {
            let seed = cfg
                .corruption
                .seed
                .ok_or_else(|| CliError::Config("incorrect-trace mode requires a corruption seed".into()))?;
            if !cfg.corruption.corrupt_category && !cfg.corruption.corrupt_facts {
                return Err(CliError::Config(
                    "incorrect-trace mode must corrupt the category, the facts, or both".into(),
                ));
            }
            Some(CorruptionPolicy {
                seed,
                corrupt_category: cfg.corruption.corrupt_category,
                corrupt_facts: cfg.corruption.corrupt_facts,
            })
        }
        _ => None,
    };
    let kind = cfg.dataset_kind()?;
    let template = cfg.template(&kind)?;
    let mut run = Run::new(format!("build-sft.{}", mode.as_str()), &cfg.out_dir());
    let instances = load_instances(&mut run, &a.input, &kind)?;
    let mut buf = Vec::new();
    let n = export_sft(&instances, mode, policy.as_ref(), &template, &mut buf)?;
    info!("exported {n} {} record(s)", mode.as_str());
    run.output(format!("sft.{}.jsonl", mode.as_str()), buf);
    finish(run, cfg)
}

fn oracle_completion(
    inst: &QaInstance,
    mode: SftMode,
    cfg: &RunConfig,
    kind: &DatasetKind,
) -> Result<String, CliError> {
    let answers = solve_oracle(inst)?;
    if mode == SftMode::Vanilla {
        return Ok(render_answers(&answers));
    }
    let skeleton = decompose_instance(inst)?;
    let solved = QaInstance { gold_answers: answers, ..inst.clone() };
    Ok(render_correct(&solved, &skeleton, &cfg.template(kind)?)?)
}

pub fn infer(a: InferArgs, cfg: &mut RunConfig) -> Result<(), CliError> {
    a.common.apply(cfg);
    if let Some(v) = &a.base_url {
        cfg.endpoint.base_url = Some(v.clone());
    }
    if let Some(v) = &a.model {
        cfg.endpoint.model_name = Some(v.clone());
    }
    if let Some(v) = a.max_in_flight {
        cfg.endpoint.max_in_flight = v;
    }
    if let Some(v) = a.max_retries {
        cfg.endpoint.max_retries = v;
    }
    let out_dir = cfg.out_dir();
    let command = match &a.tag {
        Some(t) => format!("infer.{t}"),
        None => "infer".to_string(),
    };
    let mut run = Run::new(command, &out_dir);
    let records: Vec<SftRecord> = read_jsonl(&mut run, &a.input)?;

    let (outputs, failures): (Vec<ModelOutput>, Vec<serde_json::Value>) = match a.replay {
        Some(Replay::Gold) => (
            records.iter().map(|r| ModelOutput { id: r.id.clone(), completion: r.completion.clone() }).collect(),
            vec![],
        ),
        Some(Replay::Oracle) => {
            let path =
                a.instances.as_deref().ok_or_else(|| CliError::Config("oracle replay requires --instances".into()))?;
            let kind = cfg.dataset_kind()?;
            let instances = load_instances(&mut run, path, &kind)?;
            let by_id: HashMap<&str, &QaInstance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
            let mut outputs = Vec::with_capacity(records.len());
            let mut failures = Vec::new();
            for r in &records {
                let Some(inst) = by_id.get(r.id.as_str()) else {
                    return Err(CliError::Input(format!("record {} has no matching instance", r.id)));
                };
                match oracle_completion(inst, r.mode, cfg, &kind) {
                    Ok(completion) => outputs.push(ModelOutput { id: r.id.clone(), completion }),
                    Err(CliError::Decompose(e)) => {
                        failures.push(json!({"id": r.id, "attempts": 0, "reason": e.to_string()}))
                    }
                    Err(e) => return Err(e),
                }
            }
            (outputs, failures)
        }
        None => {
            let endpoint = cfg.endpoint()?;
            let cache = a.cache.clone().unwrap_or_else(|| out_dir.join("cache"));
            let report = collect(&records, &endpoint, &cache)?;
            info!("{} network call(s)", report.network_calls);
            let failures = report
                .failures()
                .into_iter()
                .map(|c| {
                    let reason = match &c.outcome {
                        Outcome::Failed { reason } => reason.clone(),
                        Outcome::Completed { .. } => unreachable!(),
                    };
                    json!({"id": c.id, "attempts": c.attempts, "reason": reason})
                })
                .collect();
            (report.completions(), failures)
        }
    };
    if !failures.is_empty() {
        warn!("{} record(s) failed; see failures file", failures.len());
    }
    run.output(tagged("outputs", &a.tag, "jsonl"), jsonl(&outputs));
    run.output(tagged("failures", &a.tag, "jsonl"), jsonl(&failures));
    finish(run, cfg)
}

pub fn eval(a: EvalArgs, cfg: &mut RunConfig) -> Result<(), CliError> {
    a.common.apply(cfg);
    let kind = cfg.dataset_kind()?;
    let template = cfg.template(&kind)?;
    let command = match &a.tag {
        Some(t) => format!("eval.{t}"),
        None => "eval".to_string(),
    };
    let mut run = Run::new(command, &cfg.out_dir());
    let instances = load_instances(&mut run, &a.instances, &kind)?;
    let outputs: Vec<ModelOutput> = read_jsonl(&mut run, &a.outputs)?;
    let mut by_id: HashMap<&str, &str> = HashMap::new();
    for o in &outputs {
        if by_id.insert(o.id.as_str(), o.completion.as_str()).is_some() {
            return Err(CliError::Input(format!("duplicate output id {}", o.id)));
        }
    }
    let mut missing = 0;
    let mut results = Vec::with_capacity(instances.len());
    for inst in &instances {
        let completion = by_id.remove(inst.id.as_str()).unwrap_or_else(|| {
            missing += 1;
            ""
        });
        let skeleton = decompose_instance(inst)?;
        results.push(evaluate(inst, &skeleton, completion, &template));
    }
    if missing > 0 {
        warn!("{missing} instance(s) without output scored as empty completions");
    }
    if !by_id.is_empty() {
        warn!("{} output(s) with unknown ids ignored", by_id.len());
    }
    let n = results.len().max(1) as f64;
    let pct = |f: fn(&EvalResult) -> bool| results.iter().filter(|r| f(r)).count() as f64 / n * 100.0;
    println!(
        "{} instance(s): exact match {:.2}%, classification {:.2}%, IR {:.2}%",
        results.len(),
        pct(|r| r.answer.exact_match),
        pct(|r| r.steps.classification_correct),
        pct(|r| r.steps.ir_correct)
    );
    run.output(tagged("eval", &a.tag, "jsonl"), jsonl(&results));
    finish(run, cfg)
}

fn parse_run(spec: &str) -> Result<(String, QuerySetting, PathBuf), CliError> {
    let mut parts = spec.splitn(3, ':');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(m), Some(s), Some(p)) if !m.is_empty() && !p.is_empty() => {
            let setting = s.parse().map_err(|e: veritrace_core::report::ReportError| CliError::Usage(e.to_string()))?;
            Ok((m.to_string(), setting, PathBuf::from(p)))
        }
        _ => Err(CliError::Usage(format!("--run expects MODEL:SETTING:PATH, got {spec:?}"))),
    }
}

pub fn report(a: ReportArgs, cfg: &mut RunConfig) -> Result<(), CliError> {
    a.common.apply(cfg);
    let runs = a.runs.iter().map(|s| parse_run(s)).collect::<Result<Vec<_>, _>>()?;
    let mut run = Run::new("report", &cfg.out_dir());
    let mut table = MetricsTable::default();
    let mut matrices: BTreeMap<QuerySetting, Vec<ConfusionReport>> = BTreeMap::new();
    for (model, setting, path) in &runs {
        let results: Vec<EvalResult> = read_jsonl(&mut run, path)?;
        table.push(summarize(&results, model, *setting)?);
        if setting.has_trace() {
            matrices.entry(*setting).or_default().push(ConfusionReport::from_results(&results, model, *setting));
        }
    }
    let mut markdown = emit(Aggregate::Table(&table), Format::Markdown);
    run.output("report.json", emit(Aggregate::Table(&table), Format::Json));
    run.output("report.csv", emit(Aggregate::Table(&table), Format::Csv));
    for (setting, reports) in &matrices {
        for c in reports {
            let name = if reports.len() == 1 {
                format!("confusion.{}.json", setting.as_str())
            } else {
                format!("confusion.{}.{}.json", setting.as_str(), slug(&c.model))
            };
            run.output(name, emit(Aggregate::Confusion(c), Format::Json));
            markdown.push('\n');
            markdown.push_str(&emit(Aggregate::Confusion(c), Format::Markdown));
        }
    }
    print!("{markdown}");
    run.output("report.md", markdown);
    finish(run, cfg)
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

pub fn oracle_check(a: OracleArgs, cfg: &mut RunConfig) -> Result<(), CliError> {
    a.common.apply(cfg);
    let kind = cfg.dataset_kind()?;
    let mut run = Run::new("oracle-check", &cfg.out_dir());
    let instances = load_instances(&mut run, &a.input, &kind)?;
    let mut disagreements = Vec::new();
    for inst in &instances {
        match solve_oracle(inst) {
            Ok(answers) if score_answer(&answers, &inst.gold_answers).exact_match => {}
            Ok(answers) => disagreements.push(json!({"id": inst.id, "gold": inst.gold_answers, "oracle": answers})),
            Err(e) => disagreements.push(json!({"id": inst.id, "gold": inst.gold_answers, "error": e.to_string()})),
        }
    }
    let checks: Vec<_> = instances.iter().filter_map(cross_check).collect();
    let total = instances.len();
    let agree = total - disagreements.len();
    let pct = if total == 0 { 0.0 } else { agree as f64 / total as f64 * 100.0 };
    let doc = json!({
        "total": total,
        "agree": agree,
        "agreement_pct": pct,
        "category_checked": checks.len(),
        "category_agree": checks.iter().filter(|c| c.agrees).count(),
        "disagreements": disagreements,
    });
    println!("oracle agreement: {agree}/{total} ({pct:.2}%)");
    run.output("oracle.json", serde_json::to_string_pretty(&doc).expect("serializable") + "\n");
    finish(run, cfg)?;
    if agree < total {
        return Err(CliError::OracleDisagreement { disagreements: total - agree, total });
    }
    Ok(())
}
