//! Metric tables and confusion-matrix documents in JSON, CSV and Markdown.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parse_eval::{confusion, ConfusionMatrix, EvalResult, QuadrantPercent};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("no results for {model} / {setting}")]
    Empty { model: String, setting: String },
    #[error("unknown output format {0:?} (expected json, csv or markdown)")]
    UnknownFormat(String),
    #[error("unknown query setting {0:?}")]
    UnknownSetting(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuerySetting {
    #[serde(rename = "prompt")]
    Prompt,
    #[serde(rename = "sft-vanilla")]
    SftVanilla,
    #[serde(rename = "sft-correct-trace")]
    SftCorrectTrace,
    #[serde(rename = "sft-incorrect-trace")]
    SftIncorrectTrace,
}

impl QuerySetting {
    pub fn as_str(&self) -> &'static str {
        match self {
            QuerySetting::Prompt => "prompt",
            QuerySetting::SftVanilla => "sft-vanilla",
            QuerySetting::SftCorrectTrace => "sft-correct-trace",
            QuerySetting::SftIncorrectTrace => "sft-incorrect-trace",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            QuerySetting::Prompt => "Prompt",
            QuerySetting::SftVanilla => "SFT - Vanilla",
            QuerySetting::SftCorrectTrace => "SFT - Correct Trace",
            QuerySetting::SftIncorrectTrace => "SFT - Incorrect Trace",
        }
    }

    pub fn has_trace(&self) -> bool {
        matches!(self, QuerySetting::SftCorrectTrace | QuerySetting::SftIncorrectTrace)
    }
}

impl FromStr for QuerySetting {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prompt" => Ok(QuerySetting::Prompt),
            "sft-vanilla" | "vanilla" => Ok(QuerySetting::SftVanilla),
            "sft-correct-trace" | "correct" => Ok(QuerySetting::SftCorrectTrace),
            "sft-incorrect-trace" | "incorrect" => Ok(QuerySetting::SftIncorrectTrace),
            other => Err(ReportError::UnknownSetting(other.to_string())),
        }
    }
}

/// One (model, setting) row. Percentages are in `[0, 100]` at full
/// precision; trace columns are `None` for settings without traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub setting: QuerySetting,
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub classification_step_acc: Option<f64>,
    pub ir_step_acc: Option<f64>,
    pub avg_trace_len: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    /// Rows ordered by model, then setting.
    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
        self.rows.sort_by(|a, b| (&a.model, a.setting).cmp(&(&b.model, b.setting)));
    }
}

pub fn summarize(results: &[EvalResult], model: &str, setting: QuerySetting) -> Result<MetricsRow, ReportError> {
    if results.is_empty() {
        return Err(ReportError::Empty { model: model.to_string(), setting: setting.as_str().to_string() });
    }
    let n = results.len() as f64;
    let pct = |f: &dyn Fn(&EvalResult) -> f64| results.iter().map(f).sum::<f64>() / n * 100.0;
    let trace = setting.has_trace();
    Ok(MetricsRow {
        model: model.to_string(),
        setting,
        accuracy: pct(&|r| f64::from(u8::from(r.answer.exact_match))),
        f1: pct(&|r| r.answer.f1),
        precision: pct(&|r| r.answer.precision),
        recall: pct(&|r| r.answer.recall),
        classification_step_acc: trace.then(|| pct(&|r| f64::from(u8::from(r.steps.classification_correct)))),
        ir_step_acc: trace.then(|| pct(&|r| f64::from(u8::from(r.steps.ir_correct)))),
        avg_trace_len: trace.then(|| results.iter().map(|r| r.steps.trace_len_words as f64).sum::<f64>() / n),
    })
}

/// A labelled confusion matrix, the data behind one confusion plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub model: String,
    pub setting: QuerySetting,
    pub matrix: ConfusionMatrix,
}

impl ConfusionReport {
    pub fn from_results(results: &[EvalResult], model: &str, setting: QuerySetting) -> Self {
        ConfusionReport { model: model.to_string(), setting, matrix: confusion(results) }
    }

    /// Reads back a document written by [`emit`] in JSON format.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        #[derive(Deserialize)]
        struct Doc {
            model: String,
            setting: QuerySetting,
            counts: ConfusionMatrix,
        }
        let d: Doc = serde_json::from_str(text)?;
        Ok(ConfusionReport { model: d.model, setting: d.setting, matrix: d.counts })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl FromStr for Format {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

pub enum Aggregate<'a> {
    Table(&'a MetricsTable),
    Confusion(&'a ConfusionReport),
}

/// Two decimals, half-up. The epsilon absorbs binary representation error
/// so that e.g. 12.345 rounds up.
pub fn round2(x: f64) -> f64 {
    (x * 100.0 + 0.5 + 1e-9).floor() / 100.0
}

fn cell(x: Option<f64>, blank: &str) -> String {
    x.map_or_else(|| blank.to_string(), |v| format!("{:.2}", round2(v)))
}

const COLUMNS: [&str; 9] = [
    "Model",
    "Query Setting",
    "Accuracy",
    "F1",
    "Precision",
    "Recall",
    "Classification Step Accuracy",
    "IR Step Accuracy",
    "Avg Trace Length",
];

fn row_cells(r: &MetricsRow, blank: &str) -> Vec<String> {
    vec![
        r.model.clone(),
        r.setting.display_name().to_string(),
        cell(Some(r.accuracy), blank),
        cell(Some(r.f1), blank),
        cell(Some(r.precision), blank),
        cell(Some(r.recall), blank),
        cell(r.classification_step_acc, blank),
        cell(r.ir_step_acc, blank),
        cell(r.avg_trace_len, blank),
    ]
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Serialize)]
struct ConfusionDoc<'a> {
    model: &'a str,
    setting: QuerySetting,
    x_axis: &'static str,
    y_axis: &'static str,
    total: u64,
    counts: ConfusionMatrix,
    percent: QuadrantPercent,
    /// Rows: trace correct, trace incorrect. Columns: solution correct, solution incorrect.
    grid: [[u64; 2]; 2],
    grid_labels: [[&'static str; 2]; 2],
}

fn emit_confusion(c: &ConfusionReport, format: Format) -> String {
    let m = &c.matrix;
    let p = m.percentages();
    match format {
        Format::Json => {
            let doc = ConfusionDoc {
                model: &c.model,
                setting: c.setting,
                x_axis: "final_solution_correct",
                y_axis: "trace_correct",
                total: m.total(),
                counts: *m,
                percent: p,
                grid: [[m.tp, m.fn_], [m.fp, m.tn]],
                grid_labels: [["TP", "FN"], ["FP", "TN"]],
            };
            serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
        }
        Format::Csv => format!(
            "model,setting,quadrant,count,percent\n{m0},{s},TP,{},{:.2}\n{m0},{s},FP,{},{:.2}\n{m0},{s},FN,{},{:.2}\n{m0},{s},TN,{},{:.2}\n",
            m.tp,
            p.tp,
            m.fp,
            p.fp,
            m.fn_,
            p.fn_,
            m.tn,
            p.tn,
            m0 = csv_field(&c.model),
            s = c.setting.as_str(),
        ),
        Format::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "**{} / {}** (n = {})\n", c.model, c.setting.display_name(), m.total());
            let _ = writeln!(out, "| | Solution correct | Solution incorrect |");
            let _ = writeln!(out, "|---|---|---|");
            let _ = writeln!(out, "| Trace correct | TP {} ({:.2}%) | FN {} ({:.2}%) |", m.tp, p.tp, m.fn_, p.fn_);
            let _ = writeln!(out, "| Trace incorrect | FP {} ({:.2}%) | TN {} ({:.2}%) |", m.fp, p.fp, m.tn, p.tn);
            out
        }
    }
}

fn emit_table(t: &MetricsTable, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(t).expect("serializable") + "\n",
        Format::Csv => {
            let header = [
                "model",
                "setting",
                "accuracy",
                "f1",
                "precision",
                "recall",
                "classification_step_acc",
                "ir_step_acc",
                "avg_trace_len",
            ];
            let mut out = header.join(",") + "\n";
            for r in &t.rows {
                let mut cells = row_cells(r, "");
                cells[0] = csv_field(&cells[0]);
                cells[1] = r.setting.as_str().to_string();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            out
        }
        Format::Markdown => {
            let mut out = format!("| {} |\n", COLUMNS.join(" | "));
            out.push_str(&format!("|{}\n", "---|".repeat(COLUMNS.len())));
            for r in &t.rows {
                out.push_str(&format!("| {} |\n", row_cells(r, "-").join(" | ")));
            }
            out
        }
    }
}

/// Deterministic serialization. JSON keeps full precision; CSV and Markdown
/// round to two decimals.
pub fn emit(aggregate: Aggregate<'_>, format: Format) -> String {
    match aggregate {
        Aggregate::Table(t) => emit_table(t, format),
        Aggregate::Confusion(c) => emit_confusion(c, format),
    }
}
