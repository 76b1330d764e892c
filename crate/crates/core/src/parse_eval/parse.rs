use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::CategoryLabel;
use crate::pylist::parse_list;
use crate::trace::{TraceTemplate, CATEGORY_SLOT, FACTS_SLOT};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFlags {
    pub missing_think: bool,
    pub missing_answer: bool,
    pub category_unparsed: bool,
    pub facts_unparsed: bool,
}

/// A model completion split into its trace components and answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedOutput {
    pub think_text: Option<String>,
    pub category: Option<CategoryLabel>,
    pub facts: Option<Vec<String>>,
    pub answers: Vec<String>,
    pub flags: ParseFlags,
}

/// Regex source matching `literal` with any whitespace run standing in for
/// each whitespace run of the literal.
fn flexible(literal: &str) -> String {
    literal.split_whitespace().map(regex::escape).collect::<Vec<_>>().join(r"\s+")
}

/// Span `(content_start, content_end, span_end)` between `open` and `close`,
/// searching from `from`. A missing close delimiter extends the span to
/// `stop` (or the end of text).
fn span(text: &str, open: &str, close: &str, from: usize, stop: Option<&str>) -> Option<(usize, usize, usize)> {
    let start = text[from..].find(open)? + from + open.len();
    match text[start..].find(close) {
        Some(end) => Some((start, start + end, start + end + close.len())),
        None => {
            let end = stop.and_then(|s| text[start..].find(s)).map_or(text.len(), |e| start + e);
            Some((start, end, end))
        }
    }
}

/// Answers from free text: a list literal when the whole text is one,
/// otherwise the trimmed text with one layer of matching quotes removed.
pub fn parse_answers(text: &str) -> Vec<String> {
    let t = text.trim();
    if t.is_empty() {
        return Vec::new();
    }
    if let Some(items) = parse_list(t) {
        return items;
    }
    let unquoted = ['"', '\'']
        .iter()
        .find_map(|q| t.strip_prefix(*q).and_then(|r| r.strip_suffix(*q)))
        .filter(|s| !s.is_empty())
        .unwrap_or(t);
    vec![unquoted.trim().to_string()]
}

/// Compiled regex for `source`, memoised for the life of the process.
fn cached(source: String) -> Option<Arc<Regex>> {
    static CACHE: LazyLock<Mutex<HashMap<String, Arc<Regex>>>> = LazyLock::new(Default::default);
    let mut cache = CACHE.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(re) = cache.get(&source) {
        return Some(Arc::clone(re));
    }
    let re = Arc::new(Regex::new(&source).ok()?);
    cache.insert(source, Arc::clone(&re));
    Some(re)
}

fn parse_category(think: &str, template: &TraceTemplate) -> Option<CategoryLabel> {
    let (prefix, _) = template.classification_pattern.split_once(CATEGORY_SLOT)?;
    let re = cached(format!(r"{}\s*([A-Za-z0-9-]+)", flexible(prefix)))?;
    let token = re.captures(think)?.get(1)?.as_str().to_ascii_lowercase();
    CategoryLabel::new(token).ok()
}

fn parse_facts(think: &str, template: &TraceTemplate) -> Option<Vec<String>> {
    let (prefix, suffix) = template.ir_pattern.split_once(FACTS_SLOT)?;
    let re = cached(flexible(prefix))?;
    let mut rest = think[re.find(think)?.end()..].trim();
    let suffix = suffix.trim();
    if !suffix.is_empty() {
        rest = rest.strip_suffix(suffix).unwrap_or(rest).trim_end();
    }
    if rest.is_empty() {
        return None;
    }
    match parse_list(rest) {
        Some(items) => Some(items),
        None => Some(vec![rest.to_string()]),
    }
}

/// Total parser: never fails, records what it could not find in `flags`.
pub fn parse_output(completion: &str, template: &TraceTemplate) -> ParsedOutput {
    let mut flags = ParseFlags::default();
    let think = span(completion, &template.think_open, &template.think_close, 0, Some(&template.answer_open));
    let after_think = think.map_or(0, |(_, _, end)| end);
    let answer = span(completion, &template.answer_open, &template.answer_close, after_think, None);

    let think_text = think.map(|(s, e, _)| completion[s..e].to_string());
    flags.missing_think = think_text.is_none();

    let answers = match answer {
        Some((s, e, _)) => parse_answers(&completion[s..e]),
        None => {
            flags.missing_answer = true;
            let body = match think {
                Some((_, _, end)) => &completion[end..],
                None => completion,
            };
            let mut body = body.to_string();
            for d in template.delimiters() {
                body = body.replace(d, " ");
            }
            parse_answers(&body)
        }
    };

    let category = think_text.as_deref().and_then(|t| parse_category(t, template));
    let facts = think_text.as_deref().and_then(|t| parse_facts(t, template));
    flags.category_unparsed = category.is_none();
    flags.facts_unparsed = facts.is_none();

    ParsedOutput { think_text, category, facts, answers, flags }
}
