//! Seeded generator of co-temporal employment instances.
//!
//! Labels come from explicit day sets built for every fact, so they are
//! independent of the interval extraction and relation code they are used
//! to test.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::corpus::{CategoryLabel, DatasetKind, QaInstance, COTEMP_CATEGORIES};
use crate::decompose::month_name;

const FIRST: [&str; 16] = [
    "Ada", "Bruno", "Chiara", "Dmitri", "Elif", "Farid", "Greta", "Hiro", "Ines", "Jonas", "Kalani", "Lucia", "Mateo",
    "Noor", "Oskar", "Priya",
];
const LAST: [&str; 16] = [
    "Abara",
    "Brandt",
    "Castell",
    "Dumont",
    "Eriksen",
    "Ferreira",
    "Gallo",
    "Haddad",
    "Ivanova",
    "Jansen",
    "Kowalski",
    "Lindqvist",
    "Moreau",
    "Nakamura",
    "Okafor",
    "Petrov",
];
const ADJ: [&str; 24] = [
    "Amber",
    "Boreal",
    "Cobalt",
    "Delta",
    "Eastgate",
    "Fairview",
    "Granite",
    "Harbor",
    "Ironwood",
    "Juniper",
    "Keystone",
    "Lakeside",
    "Meridian",
    "Northfield",
    "Oakridge",
    "Pinecrest",
    "Quarry",
    "Redstone",
    "Silverline",
    "Tidewater",
    "Upland",
    "Valemont",
    "Westbrook",
    "Yellowpine",
];
const NOUN: [&str; 12] = [
    "Analytics",
    "Bank",
    "Clinic",
    "Foundry",
    "Gazette",
    "Institute",
    "Laboratories",
    "Museum",
    "Observatory",
    "Press",
    "Railways",
    "University",
];

/// Day-resolution date as written in a fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Written {
    Year(i32),
    Month(i32, u32),
    Day(i32, u32, u32),
}

impl Written {
    fn first(self) -> NaiveDate {
        match self {
            Written::Year(y) => NaiveDate::from_ymd_opt(y, 1, 1),
            Written::Month(y, m) => NaiveDate::from_ymd_opt(y, m, 1),
            Written::Day(y, m, d) => NaiveDate::from_ymd_opt(y, m, d),
        }
        .expect("valid date")
    }

    fn last(self) -> NaiveDate {
        match self {
            Written::Year(y) => NaiveDate::from_ymd_opt(y, 12, 31).expect("valid date"),
            Written::Month(y, m) => {
                let (ny, nm) = if m == 12 { (y + 1, 1) } else { (y, m + 1) };
                NaiveDate::from_ymd_opt(ny, nm, 1).expect("valid date").pred_opt().expect("valid date")
            }
            Written::Day(..) => self.first(),
        }
    }

    fn render(self) -> String {
        match self {
            Written::Year(y) => y.to_string(),
            Written::Month(y, m) => format!("{}, {y}", month_name(m)),
            Written::Day(y, m, d) => format!("{} {d}, {y}", month_name(m)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Span {
    Range(Written, Written),
    At(Written),
}

impl Span {
    fn days(self) -> BTreeSet<i32> {
        let (a, b) = match self {
            Span::Range(a, b) => (a.first(), b.last()),
            Span::At(a) => (a.first(), a.last()),
        };
        (a.num_days_from_ce()..=b.num_days_from_ce()).collect()
    }

    fn phrase(self) -> String {
        match self {
            Span::Range(a, b) => format!("from {} to {}", a.render(), b.render()),
            Span::At(a) => format!("in {}", a.render()),
        }
    }
}

/// Relation label computed from day sets; `None` for disjoint spans.
fn label(anchor: &BTreeSet<i32>, other: &BTreeSet<i32>) -> Option<&'static str> {
    if anchor == other {
        Some("equal")
    } else if anchor.is_superset(other) || other.is_superset(anchor) {
        Some("during")
    } else if !anchor.is_disjoint(other) {
        Some("overlap")
    } else {
        None
    }
}

fn written(rng: &mut ChaCha8Rng, form: u8, year: i32) -> Written {
    match form {
        0 => Written::Year(year),
        1 => Written::Month(year, rng.random_range(1..=12)),
        _ => Written::Day(year, rng.random_range(1..=12), rng.random_range(1..=28)),
    }
}

/// Random span whose years fall in `lo..=hi`.
fn span_in(rng: &mut ChaCha8Rng, lo: i32, hi: i32) -> Span {
    let form = rng.random_range(0..3u8);
    if form < 2 && rng.random_bool(0.2) {
        let year = rng.random_range(lo..=hi);
        return Span::At(written(rng, form, year));
    }
    loop {
        let y1 = rng.random_range(lo..=hi);
        let y2 = rng.random_range(y1..=hi.min(y1 + 12));
        let a = written(rng, form, y1);
        let b = written(rng, form, y2);
        if a.first() <= b.last() {
            return Span::Range(a, b);
        }
    }
}

fn with_label(rng: &mut ChaCha8Rng, anchor: Span, target: &str) -> Span {
    let anchor_days = anchor.days();
    if target == "equal" {
        // same day set, possibly written in a finer form
        if let (true, Span::Range(Written::Year(a), Written::Year(b))) = (rng.random_bool(0.5), anchor) {
            return Span::Range(Written::Month(a, 1), Written::Month(b, 12));
        }
        return anchor;
    }
    let (lo, hi) = (anchor_days.first().copied().unwrap(), anchor_days.last().copied().unwrap());
    let (ylo, yhi) = (year_of(lo), year_of(hi));
    loop {
        let s = span_in(rng, ylo - 4, yhi + 4);
        if label(&anchor_days, &s.days()) == Some(target) {
            return s;
        }
    }
}

fn disjoint(rng: &mut ChaCha8Rng, anchor: Span) -> Span {
    let days = anchor.days();
    let (ylo, yhi) = (year_of(*days.first().unwrap()), year_of(*days.last().unwrap()));
    loop {
        let s = if rng.random_bool(0.5) { span_in(rng, ylo - 25, ylo - 1) } else { span_in(rng, yhi + 1, yhi + 25) };
        if label(&days, &s.days()).is_none() {
            return s;
        }
    }
}

fn year_of(day: i32) -> i32 {
    NaiveDate::from_num_days_from_ce_opt(day).expect("in range").year()
}

fn fact(subject: &str, employer: &str, span: Span, rng: &mut ChaCha8Rng) -> String {
    let verb = if rng.random_bool(0.5) { "worked" } else { "works" };
    format!("{subject} {verb} for {employer} {}.", span.phrase())
}

/// One instance with the given category; deterministic in `(seed, index)`.
pub fn synth_instance(seed: u64, index: usize, category: &str) -> QaInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let subject = format!("{} {}", FIRST[rng.random_range(0..FIRST.len())], LAST[rng.random_range(0..LAST.len())]);
    let n_facts = rng.random_range(5..=9usize);
    let mut adjs = ADJ.to_vec();
    adjs.shuffle(&mut rng);
    let employers: Vec<String> =
        adjs[..n_facts].iter().map(|a| format!("{a} {}", NOUN[rng.random_range(0..NOUN.len())])).collect();

    let anchor = {
        let y = rng.random_range(1950..=1995);
        match rng.random_range(0..3u8) {
            0 => Span::Range(Written::Year(y), Written::Year(y + rng.random_range(1..=8))),
            1 => Span::Range(
                Written::Month(y, rng.random_range(1..=12)),
                Written::Month(y + rng.random_range(1..=6), rng.random_range(1..=12)),
            ),
            _ => Span::Range(
                Written::Day(y, rng.random_range(1..=12), rng.random_range(1..=28)),
                Written::Day(y + rng.random_range(1..=6), rng.random_range(1..=12), rng.random_range(1..=28)),
            ),
        }
    };

    let target_labels: Vec<&str> = match category {
        "mix" => {
            let mut pool = ["equal", "overlap", "during"];
            pool.shuffle(&mut rng);
            pool[..2].to_vec()
        }
        c => vec![c; if c != "equal" && rng.random_bool(0.3) { 2 } else { 1 }],
    };
    let mut spans: Vec<(Span, bool)> = vec![(anchor, false)];
    for t in &target_labels {
        spans.push((with_label(&mut rng, anchor, t), true));
    }
    while spans.len() < n_facts {
        spans.push((disjoint(&mut rng, anchor), false));
    }

    let mut order: Vec<usize> = (0..n_facts).collect();
    order.shuffle(&mut rng);
    let mut facts = vec![String::new(); n_facts];
    let mut support = BTreeSet::new();
    let mut answers_at = BTreeMap::new();
    let mut anchor_pos = 0;
    for (src, &dst) in order.iter().enumerate() {
        let (span, is_target) = spans[src];
        facts[dst] = fact(&subject, &employers[src], span, &mut rng);
        if src == 0 {
            anchor_pos = dst;
        }
        if is_target {
            support.insert(dst);
            answers_at.insert(dst, employers[src].clone());
        }
    }
    let question = format!(
        "While {subject} was working for {}, which employer did {subject} work for during the same time period?",
        employers[0]
    );
    QaInstance {
        id: format!("synth-cotemp-{seed}-{index:05}"),
        dataset: DatasetKind::Cotemp,
        facts,
        question,
        gold_answers: answers_at.into_values().collect(),
        gold_category: CategoryLabel::new(category).expect("static label"),
        gold_support: support,
        metadata: BTreeMap::from([("anchor".to_string(), json!(anchor_pos)), ("synthetic".to_string(), json!(true))]),
    }
}

/// `n` instances cycling through the four co-temporal categories.
pub fn synth_cotemp(n: usize, seed: u64) -> Vec<QaInstance> {
    (0..n).map(|i| synth_instance(seed, i, COTEMP_CATEGORIES[i % COTEMP_CATEGORIES.len()])).collect()
}
