//! QA instance model and dataset ingestion.
//!
//! Two input formats are supported: the bAbI story format (numbered lines,
//! questions carry `\tanswer\tsupport` columns) and a canonical JSONL schema
//! with the keys `id`, `facts`, `question`, `answers`, `category`, `support`.
//! Both produce [`QaInstance`] values that pass [`validate`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const COTEMP_CATEGORIES: [&str; 4] = ["equal", "overlap", "during", "mix"];

pub const MARCO_CATEGORIES: [&str; 5] = ["description", "numeric", "entity", "location", "person"];

pub const BABI_CATEGORIES: [&str; 11] = [
    "single-supporting-fact",
    "two-supporting-facts",
    "two-arg-relations",
    "counting",
    "lists-sets",
    "conjunction",
    "time-reasoning",
    "basic-deduction",
    "basic-induction",
    "positional-reasoning",
    "size-reasoning",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("invalid category label {0:?}: expected [a-z0-9-]+")]
    InvalidLabel(String),
    #[error("category {label:?} is not declared for dataset {dataset}")]
    UnknownCategory { label: String, dataset: String },
    #[error("custom dataset {0:?} declares no categories")]
    EmptyCategorySet(String),
    #[error("line {line}: {message}")]
    Babi { line: usize, message: String },
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CorpusError {
    fn from(e: std::io::Error) -> Self {
        CorpusError::Io(e.to_string())
    }
}

/// Lowercase hyphenated category token, e.g. `during` or `two-supporting-facts`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CategoryLabel(String);

impl CategoryLabel {
    pub fn new(label: impl Into<String>) -> Result<Self, CorpusError> {
        let label = label.into();
        let ok = !label.is_empty() && label.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-');
        if ok {
            Ok(CategoryLabel(label))
        } else {
            Err(CorpusError::InvalidLabel(label))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for CategoryLabel {
    type Error = CorpusError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        CategoryLabel::new(s)
    }
}

impl From<CategoryLabel> for String {
    fn from(c: CategoryLabel) -> String {
        c.0
    }
}

impl fmt::Display for CategoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for CategoryLabel {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CategoryLabel::new(s)
    }
}

/// Which dataset an instance belongs to, together with its declared category set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Cotemp,
    Marco,
    Babi,
    Custom { name: String, categories: Vec<CategoryLabel> },
}

impl DatasetKind {
    pub fn custom(name: impl Into<String>, categories: Vec<CategoryLabel>) -> Result<Self, CorpusError> {
        let name = name.into();
        if categories.is_empty() {
            return Err(CorpusError::EmptyCategorySet(name));
        }
        let mut seen = HashSet::new();
        let categories = categories.into_iter().filter(|c| seen.insert(c.clone())).collect();
        Ok(DatasetKind::Custom { name, categories })
    }

    pub fn name(&self) -> &str {
        match self {
            DatasetKind::Cotemp => "cotemp",
            DatasetKind::Marco => "marco",
            DatasetKind::Babi => "babi",
            DatasetKind::Custom { name, .. } => name,
        }
    }

    /// Declared categories, in declaration order.
    pub fn categories(&self) -> Vec<CategoryLabel> {
        let fixed: &[&str] = match self {
            DatasetKind::Cotemp => &COTEMP_CATEGORIES,
            DatasetKind::Marco => &MARCO_CATEGORIES,
            DatasetKind::Babi => &BABI_CATEGORIES,
            DatasetKind::Custom { categories, .. } => return categories.clone(),
        };
        fixed.iter().map(|s| CategoryLabel(s.to_string())).collect()
    }

    pub fn contains(&self, label: &CategoryLabel) -> bool {
        match self {
            DatasetKind::Custom { categories, .. } => categories.contains(label),
            _ => self.categories().iter().any(|c| c == label),
        }
    }

    pub fn check(&self, label: &CategoryLabel) -> Result<(), CorpusError> {
        if self.contains(label) {
            Ok(())
        } else {
            Err(CorpusError::UnknownCategory { label: label.to_string(), dataset: self.name().to_string() })
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One open-book question with its gold decomposition annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct QaInstance {
    pub id: String,
    pub dataset: DatasetKind,
    pub facts: Vec<String>,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub gold_category: CategoryLabel,
    pub gold_support: BTreeSet<usize>,
    /// Unknown JSONL keys, carried through untouched.
    pub metadata: BTreeMap<String, Value>,
}

/// A single violated invariant reported by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyId,
    EmptyFacts,
    EmptyAnswers,
    SupportOutOfRange { index: usize, facts: usize },
    UnknownCategory(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyId => write!(f, "id is empty"),
            Violation::EmptyFacts => write!(f, "facts list is empty"),
            Violation::EmptyAnswers => write!(f, "gold answers list is empty"),
            Violation::SupportOutOfRange { index, facts } => {
                write!(f, "support index {index} out of range for {facts} facts")
            }
            Violation::UnknownCategory(c) => write!(f, "category {c:?} not in dataset category set"),
        }
    }
}

/// Returns every violated instance-level invariant; an empty list means valid.
pub fn validate(instance: &QaInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    if instance.id.is_empty() {
        out.push(Violation::EmptyId);
    }
    if instance.facts.is_empty() {
        out.push(Violation::EmptyFacts);
    }
    if instance.gold_answers.is_empty() {
        out.push(Violation::EmptyAnswers);
    }
    for &index in &instance.gold_support {
        if index >= instance.facts.len() {
            out.push(Violation::SupportOutOfRange { index, facts: instance.facts.len() });
        }
    }
    if !instance.dataset.contains(&instance.gold_category) {
        out.push(Violation::UnknownCategory(instance.gold_category.to_string()));
    }
    out
}

/// Parses a bAbI story file. Every question line yields one instance whose
/// facts are the story's statement lines seen so far.
pub fn parse_babi(text: &str, task_label: &CategoryLabel) -> Result<Vec<QaInstance>, CorpusError> {
    DatasetKind::Babi.check(task_label)?;

    enum Line {
        Statement(usize),
        Question,
    }

    let mut out = Vec::new();
    let mut story = 0usize;
    let mut last_no = 0usize;
    let mut facts: Vec<String> = Vec::new();
    // story line number -> kind of line
    let mut lines: Vec<Line> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| CorpusError::Babi { line: line_no, message };

        let (num, rest) = raw.trim_start().split_once(' ').ok_or_else(|| err("expected `<number> <text>`".into()))?;
        let n: usize = num.parse().map_err(|_| err(format!("malformed line number {num:?}")))?;
        if n == 1 {
            story += 1;
            facts.clear();
            lines.clear();
        } else if n != last_no + 1 || story == 0 {
            return Err(err(format!("line number {n} does not follow {last_no}")));
        }
        last_no = n;

        let cols: Vec<&str> = rest.split('\t').collect();
        match cols.len() {
            1 => {
                lines.push(Line::Statement(facts.len()));
                facts.push(rest.trim().to_string());
            }
            3 => {
                let question = cols[0].trim().to_string();
                let gold_answers: Vec<String> =
                    cols[1].split(',').map(|a| a.trim().to_string()).filter(|a| !a.is_empty()).collect();
                if gold_answers.is_empty() {
                    return Err(err("question has no answer".into()));
                }
                let mut gold_support = BTreeSet::new();
                for sid in cols[2].split_whitespace() {
                    let s: usize = sid.parse().map_err(|_| err(format!("malformed support id {sid:?}")))?;
                    if s == n {
                        return Err(err(format!("support id {s} refers to the question itself")));
                    }
                    match s.checked_sub(1).and_then(|i| lines.get(i)) {
                        Some(Line::Statement(fact)) => {
                            gold_support.insert(*fact);
                        }
                        Some(Line::Question) => {
                            return Err(err(format!("support id {s} refers to a question line")));
                        }
                        None => return Err(err(format!("support id {s} out of range"))),
                    }
                }
                if facts.is_empty() {
                    return Err(err("question precedes any statement in its story".into()));
                }
                lines.push(Line::Question);
                out.push(QaInstance {
                    id: format!("babi-{}-s{}-l{}", task_label, story, n),
                    dataset: DatasetKind::Babi,
                    facts: facts.clone(),
                    question,
                    gold_answers,
                    gold_category: task_label.clone(),
                    gold_support,
                    metadata: BTreeMap::new(),
                });
            }
            k => return Err(err(format!("expected 0 or 2 tabs, found {}", k - 1))),
        }
    }
    Ok(out)
}

/// Canonical JSONL line. Field order is the on-disk key order.
#[derive(Debug, Serialize, Deserialize)]
struct CanonicalRecord {
    id: String,
    facts: Vec<String>,
    question: String,
    answers: Vec<String>,
    category: String,
    support: Vec<usize>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Abort on the first bad line (default) instead of skipping it.
    pub strict: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { strict: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub instances: Vec<QaInstance>,
    pub skipped: Vec<SkippedLine>,
}

const REQUIRED_KEYS: [&str; 6] = ["id", "facts", "question", "answers", "category", "support"];

fn parse_jsonl_line(text: &str, kind: &DatasetKind, seen: &HashSet<String>) -> Result<QaInstance, String> {
    let value: Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("line is not a JSON object")?;
    for key in REQUIRED_KEYS {
        if !obj.contains_key(key) {
            return Err(format!("missing key {key:?}"));
        }
    }
    let rec: CanonicalRecord = serde_json::from_value(value).map_err(|e| format!("schema error: {e}"))?;
    if seen.contains(&rec.id) {
        return Err(format!("duplicate id {:?}", rec.id));
    }
    let category = CategoryLabel::new(rec.category).map_err(|e| e.to_string())?;
    kind.check(&category).map_err(|e| e.to_string())?;
    let inst = QaInstance {
        id: rec.id,
        dataset: kind.clone(),
        facts: rec.facts,
        question: rec.question,
        gold_answers: rec.answers,
        gold_category: category,
        gold_support: rec.support.into_iter().collect(),
        metadata: rec.extra,
    };
    match validate(&inst).as_slice() {
        [] => Ok(inst),
        vs => Err(vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")),
    }
}

/// Loads canonical JSONL. Blank lines are ignored.
pub fn load_jsonl<R: BufRead>(reader: R, kind: &DatasetKind, opts: LoadOptions) -> Result<LoadReport, CorpusError> {
    let mut instances = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_jsonl_line(&line, kind, &seen) {
            Ok(inst) => {
                seen.insert(inst.id.clone());
                instances.push(inst);
            }
            Err(reason) if opts.strict => return Err(CorpusError::Jsonl { line: idx + 1, message: reason }),
            Err(reason) => skipped.push(SkippedLine { line: idx + 1, reason }),
        }
    }
    Ok(LoadReport { instances, skipped })
}

/// Serializes one instance as a canonical JSONL line (no trailing newline).
pub fn to_jsonl_line(instance: &QaInstance) -> String {
    let rec = CanonicalRecord {
        id: instance.id.clone(),
        facts: instance.facts.clone(),
        question: instance.question.clone(),
        answers: instance.gold_answers.clone(),
        category: instance.gold_category.to_string(),
        support: instance.gold_support.iter().copied().collect(),
        extra: instance.metadata.clone(),
    };
    serde_json::to_string(&rec).expect("canonical record serializes")
}

pub fn write_jsonl<W: Write>(mut sink: W, instances: &[QaInstance]) -> std::io::Result<usize> {
    for inst in instances {
        writeln!(sink, "{}", to_jsonl_line(inst))?;
    }
    sink.flush()?;
    Ok(instances.len())
}
