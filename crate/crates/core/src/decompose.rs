//! Rule-based decomposition into a Classification step (category label) and
//! an IR step (supporting facts), plus a deterministic reference solver.
//!
//! Temporal facts are reduced to day-precision [`Interval`]s. Two intervals
//! are `equal` when their endpoints coincide, `during` when one strictly
//! contains the other, `overlap` on any other non-empty intersection, and
//! unrelated when disjoint. `mix` only exists at instance level: the gold
//! support facts bear more than one distinct relation to the anchor.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CategoryLabel, DatasetKind, QaInstance};

const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

pub fn month_name(month: u32) -> &'static str {
    const NAMES: [&str; 12] = [
        "January",
        "February",
        "March",
        "April",
        "May",
        "June",
        "July",
        "August",
        "September",
        "October",
        "November",
        "December",
    ];
    NAMES[(month - 1) as usize]
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecomposeError {
    #[error("instance {0}: empty gold support, IR step undefined")]
    EmptySupport(String),
    #[error("instance {0}: no anchor fact found for the question")]
    NoAnchor(String),
    #[error("instance {id}: no fact satisfies relation {category}")]
    NoMatch { id: String, category: String },
    #[error("instance {id}: support index {index} out of range")]
    SupportOutOfRange { id: String, index: usize },
}

/// A calendar date at year, month or day granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateValue {
    year: i32,
    month: Option<u32>,
    day: Option<u32>,
}

impl DateValue {
    pub fn new(year: i32, month: Option<u32>, day: Option<u32>) -> Option<Self> {
        match (month, day) {
            (None, Some(_)) => return None,
            (Some(m), None) if !(1..=12).contains(&m) => return None,
            (Some(m), Some(d)) => {
                NaiveDate::from_ymd_opt(year, m, d)?;
            }
            _ => {}
        }
        NaiveDate::from_ymd_opt(year, 1, 1)?;
        Some(DateValue { year, month, day })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> Option<u32> {
        self.month
    }

    pub fn day(&self) -> Option<u32> {
        self.day
    }

    /// Earliest day covered at this granularity.
    pub fn first_day(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month.unwrap_or(1), self.day.unwrap_or(1)).expect("validated date")
    }

    /// Latest day covered at this granularity.
    pub fn last_day(&self) -> NaiveDate {
        match (self.month, self.day) {
            (Some(m), Some(d)) => NaiveDate::from_ymd_opt(self.year, m, d).expect("validated date"),
            (Some(m), None) => {
                let next = if m == 12 {
                    NaiveDate::from_ymd_opt(self.year + 1, 1, 1)
                } else {
                    NaiveDate::from_ymd_opt(self.year, m + 1, 1)
                };
                next.and_then(|d| d.pred_opt()).expect("validated date")
            }
            _ => NaiveDate::from_ymd_opt(self.year, 12, 31).expect("validated date"),
        }
    }
}

impl fmt::Display for DateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.month, self.day) {
            (Some(m), Some(d)) => write!(f, "{} {}, {}", month_name(m), d, self.year),
            (Some(m), None) => write!(f, "{}, {}", month_name(m), self.year),
            _ => write!(f, "{}", self.year),
        }
    }
}

/// Closed day range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    lo: NaiveDate,
    hi: NaiveDate,
}

impl Interval {
    pub fn new(lo: NaiveDate, hi: NaiveDate) -> Option<Self> {
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn spanning(from: DateValue, to: DateValue) -> Option<Self> {
        Interval::new(from.first_day(), to.last_day())
    }

    pub fn point(date: DateValue) -> Self {
        Interval { lo: date.first_day(), hi: date.last_day() }
    }

    pub fn lo(&self) -> NaiveDate {
        self.lo
    }

    pub fn hi(&self) -> NaiveDate {
        self.hi
    }

    pub fn contains(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalRelation {
    Equal,
    Overlap,
    During,
    Mix,
}

impl TemporalRelation {
    pub fn as_str(&self) -> &'static str {
        match self {
            TemporalRelation::Equal => "equal",
            TemporalRelation::Overlap => "overlap",
            TemporalRelation::During => "during",
            TemporalRelation::Mix => "mix",
        }
    }

    pub fn from_label(label: &CategoryLabel) -> Option<Self> {
        match label.as_str() {
            "equal" => Some(TemporalRelation::Equal),
            "overlap" => Some(TemporalRelation::Overlap),
            "during" => Some(TemporalRelation::During),
            "mix" => Some(TemporalRelation::Mix),
            _ => None,
        }
    }

    pub fn label(&self) -> CategoryLabel {
        CategoryLabel::new(self.as_str()).expect("static label")
    }
}

impl fmt::Display for TemporalRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pairwise relation; `None` when the intervals are disjoint. Never returns `Mix`.
pub fn relation(anchor: &Interval, candidate: &Interval) -> Option<TemporalRelation> {
    if anchor == candidate {
        Some(TemporalRelation::Equal)
    } else if anchor.contains(candidate) || candidate.contains(anchor) {
        Some(TemporalRelation::During)
    } else if anchor.intersects(candidate) {
        Some(TemporalRelation::Overlap)
    } else {
        None
    }
}

const DATE_SRC: &str = r"(?:[A-Z][a-z]+\s+\d{1,2},\s*\d{4}|[A-Z][a-z]+,?\s+\d{4}|\d{4})";

static FROM_TO: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?-u:\b)from\s+({DATE_SRC})\s+to\s+({DATE_SRC})(?-u:\b)")).unwrap());
static IN_DATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(&format!(r"(?-u:\b)in\s+({DATE_SRC})(?-u:\b)")).unwrap());
static DATE_PARTS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:([A-Za-z]+)\s+(\d{1,2}),\s*(\d{4})|([A-Za-z]+),?\s+(\d{4})|(\d{4}))$").unwrap());

fn month_number(name: &str) -> Option<u32> {
    let lower = name.to_ascii_lowercase();
    MONTHS.iter().position(|m| *m == lower).map(|i| i as u32 + 1)
}

/// Parses `YYYY`, `Month, YYYY` / `Month YYYY`, or `Month D, YYYY`.
pub fn parse_date(text: &str) -> Option<DateValue> {
    let caps = DATE_PARTS.captures(text.trim())?;
    if let (Some(m), Some(d), Some(y)) = (caps.get(1), caps.get(2), caps.get(3)) {
        return DateValue::new(
            y.as_str().parse().ok()?,
            Some(month_number(m.as_str())?),
            Some(d.as_str().parse().ok()?),
        );
    }
    if let (Some(m), Some(y)) = (caps.get(4), caps.get(5)) {
        return DateValue::new(y.as_str().parse().ok()?, Some(month_number(m.as_str())?), None);
    }
    DateValue::new(caps.get(6)?.as_str().parse().ok()?, None, None)
}

/// Byte span of the recognized date phrase plus its interval.
fn date_phrase(fact: &str) -> Option<(usize, Interval)> {
    for caps in FROM_TO.captures_iter(fact).collect::<Vec<_>>().into_iter().rev() {
        let (Some(from), Some(to)) = (parse_date(&caps[1]), parse_date(&caps[2])) else {
            continue;
        };
        if let Some(iv) = Interval::spanning(from, to) {
            return Some((caps.get(0).unwrap().start(), iv));
        }
    }
    for caps in IN_DATE.captures_iter(fact).collect::<Vec<_>>().into_iter().rev() {
        if let Some(d) = parse_date(&caps[1]) {
            return Some((caps.get(0).unwrap().start(), Interval::point(d)));
        }
    }
    None
}

/// Recognizes "from <date> to <date>" and "in <date>" phrases.
pub fn extract_interval(fact: &str) -> Option<Interval> {
    date_phrase(fact).map(|(_, iv)| iv)
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(|w| w.to_lowercase()).collect()
}

const CONNECTORS: [&str; 5] = [" for ", " of ", " at ", " to ", " with "];

/// Object entity of a temporal fact: the text between the first connector
/// word and the date phrase, e.g. "History Museum of Armenia" in
/// "X works for History Museum of Armenia from 1964 to 1975.".
pub fn fact_entity(fact: &str, anchor_fact: Option<&str>) -> Option<String> {
    let (start, _) = date_phrase(fact)?;
    let head = fact[..start].trim_end();
    let padded = format!("{head} ");
    let connector = CONNECTORS.iter().filter_map(|c| padded.find(c).map(|pos| (pos, c.len()))).min();
    let entity = match connector {
        Some((pos, len)) => padded[pos + len..].trim().to_string(),
        None => {
            // no connector: drop the word prefix shared with the anchor fact
            let anchor_words: Vec<&str> = anchor_fact.map(|a| a.split_whitespace().collect()).unwrap_or_default();
            let own: Vec<&str> = head.split_whitespace().collect();
            let shared = own.iter().zip(anchor_words.iter()).take_while(|(a, b)| a == b).count();
            own[shared.min(own.len())..].join(" ")
        }
    };
    let entity = entity.trim_end_matches([',', ';']).trim().to_string();
    (!entity.is_empty()).then_some(entity)
}

/// Index of the fact the question is about: the temporal fact sharing the
/// longest contiguous run of normalized words with the question, counting
/// only words that do not occur in every temporal fact. Ties go to the
/// earliest fact.
pub fn find_anchor(question: &str, facts: &[String]) -> Option<usize> {
    let temporal: Vec<(usize, Vec<String>)> =
        facts.iter().enumerate().filter(|(_, f)| extract_interval(f).is_some()).map(|(i, f)| (i, words(f))).collect();
    if temporal.is_empty() {
        return None;
    }
    let shared: BTreeSet<&String> = if temporal.len() > 1 {
        let mut it = temporal.iter().map(|(_, w)| w.iter().collect::<BTreeSet<_>>());
        let first = it.next().unwrap();
        it.fold(first, |acc, s| acc.intersection(&s).copied().collect())
    } else {
        BTreeSet::new()
    };
    let q = words(question);
    let mut best: Option<(usize, usize, usize)> = None; // (score, chars, index)
    for (idx, fw) in &temporal {
        let mut prev = vec![(0usize, 0usize); fw.len() + 1];
        let mut top = (0usize, 0usize);
        for qw in &q {
            let mut cur = vec![(0usize, 0usize); fw.len() + 1];
            for (j, w) in fw.iter().enumerate() {
                if w == qw {
                    let (s, c) = prev[j];
                    let distinct = usize::from(!shared.contains(w));
                    cur[j + 1] = (s + distinct, c + w.len() * distinct);
                    top = top.max(cur[j + 1]);
                }
            }
            prev = cur;
        }
        if top.0 == 0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((s, c, _)) => (top.0, top.1) > (s, c),
        };
        if better {
            best = Some((top.0, top.1, *idx));
        }
    }
    best.map(|(_, _, i)| i)
}

/// Decomposed ground truth for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSkeleton {
    pub category: CategoryLabel,
    pub support: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived_answers: Option<Vec<String>>,
}

/// Builds the gold skeleton; the oracle fills `derived_answers` when it can.
pub fn decompose(instance: &QaInstance) -> Result<TraceSkeleton, DecomposeError> {
    if instance.gold_support.is_empty() {
        return Err(DecomposeError::EmptySupport(instance.id.clone()));
    }
    if let Some(&index) = instance.gold_support.iter().find(|&&i| i >= instance.facts.len()) {
        return Err(DecomposeError::SupportOutOfRange { id: instance.id.clone(), index });
    }
    Ok(TraceSkeleton {
        category: instance.gold_category.clone(),
        support: instance.gold_support.iter().copied().collect(),
        derived_answers: solve_oracle(instance).ok(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportRelation {
    pub fact: usize,
    pub relation: Option<TemporalRelation>,
}

/// Diagnostic comparing the gold category with the relation recomputed from
/// the support facts' dates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub id: String,
    pub anchor: usize,
    pub gold: CategoryLabel,
    pub relations: Vec<SupportRelation>,
    pub recomputed: Option<TemporalRelation>,
    pub agrees: bool,
}

/// Runs only for cotemp instances whose anchor fact can be identified.
pub fn cross_check(instance: &QaInstance) -> Option<CrossCheck> {
    if instance.dataset != DatasetKind::Cotemp {
        return None;
    }
    let anchor = find_anchor(&instance.question, &instance.facts)?;
    let anchor_iv = extract_interval(&instance.facts[anchor])?;
    let relations: Vec<SupportRelation> = instance
        .gold_support
        .iter()
        .filter(|&&i| i < instance.facts.len())
        .map(|&fact| SupportRelation {
            fact,
            relation: extract_interval(&instance.facts[fact]).and_then(|iv| relation(&anchor_iv, &iv)),
        })
        .collect();
    let distinct: BTreeSet<Option<TemporalRelation>> = relations.iter().map(|r| r.relation).collect();
    let recomputed = if distinct.contains(&None) || distinct.is_empty() {
        None
    } else if distinct.len() > 1 {
        Some(TemporalRelation::Mix)
    } else {
        *distinct.iter().next().unwrap()
    };
    let agrees = recomputed.map(|r| r.label()) == Some(instance.gold_category.clone());
    Some(CrossCheck {
        id: instance.id.clone(),
        anchor,
        gold: instance.gold_category.clone(),
        relations,
        recomputed,
        agrees,
    })
}

static WHERE_IS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^Where is (\w+)\s*\?$").unwrap());

fn solve_where_is(instance: &QaInstance) -> Option<Vec<String>> {
    let who = WHERE_IS.captures(instance.question.trim())?.get(1)?.as_str().to_string();
    let fact = instance.facts.iter().rev().find(|f| f.split_whitespace().next() == Some(who.as_str()))?;
    let place = fact.split_whitespace().last()?.trim_end_matches(['.', '!', '?']);
    Some(vec![place.to_string()])
}

/// Deterministic reference solver.
///
/// Temporal instances are solved from the dates alone: find the anchor,
/// relate every other temporal fact to it, and return the entities of the
/// facts bearing the gold relation (any relation, with at least two distinct
/// ones, for `mix`), in context order. bAbI "Where is X?" questions are
/// answered by tracking the last location of X. Everything else is validated
/// against its support annotation and returns the gold answers.
pub fn solve_oracle(instance: &QaInstance) -> Result<Vec<String>, DecomposeError> {
    let id = || instance.id.clone();
    if instance.dataset == DatasetKind::Cotemp {
        if let Some(target) = TemporalRelation::from_label(&instance.gold_category) {
            let anchor =
                find_anchor(&instance.question, &instance.facts).ok_or_else(|| DecomposeError::NoAnchor(id()))?;
            let anchor_fact = &instance.facts[anchor];
            let anchor_iv = extract_interval(anchor_fact).ok_or_else(|| DecomposeError::NoAnchor(id()))?;
            let mut matched = Vec::new();
            let mut kinds = BTreeSet::new();
            for (i, fact) in instance.facts.iter().enumerate() {
                if i == anchor {
                    continue;
                }
                let Some(rel) = extract_interval(fact).and_then(|iv| relation(&anchor_iv, &iv)) else {
                    continue;
                };
                if target == TemporalRelation::Mix || rel == target {
                    if let Some(entity) = fact_entity(fact, Some(anchor_fact)) {
                        kinds.insert(rel);
                        matched.push(entity);
                    }
                }
            }
            let mix_ok = target != TemporalRelation::Mix || kinds.len() > 1;
            if matched.is_empty() || !mix_ok {
                return Err(DecomposeError::NoMatch { id: id(), category: target.to_string() });
            }
            return Ok(matched);
        }
    }
    if instance.dataset == DatasetKind::Babi && instance.gold_category.as_str() == "single-supporting-fact" {
        if let Some(answer) = solve_where_is(instance) {
            return Ok(answer);
        }
    }
    if instance.gold_support.is_empty() {
        return Err(DecomposeError::EmptySupport(id()));
    }
    if let Some(&index) = instance.gold_support.iter().find(|&&i| i >= instance.facts.len()) {
        return Err(DecomposeError::SupportOutOfRange { id: id(), index });
    }
    Ok(instance.gold_answers.clone())
}
