use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::QaInstance;
use crate::decompose::TraceSkeleton;

use super::parse::ParsedOutput;

/// Lowercase, drop punctuation (brackets and quotes included), drop the
/// articles a/an/the, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lower = text.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| c.is_alphanumeric() || c.is_whitespace()).collect();
    no_punct.split_whitespace().filter(|w| !matches!(*w, "a" | "an" | "the")).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerScores {
    pub exact_match: bool,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Share of gold answers found among the predictions (diagnostic).
    pub answer_recall: f64,
}

fn token_prf(pred: &[&str], gold: &[&str]) -> (f64, f64, f64) {
    if pred.is_empty() && gold.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    if pred.is_empty() || gold.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return (0.0, 0.0, 0.0);
    }
    let p = common as f64 / pred.len() as f64;
    let r = common as f64 / gold.len() as f64;
    (p, r, 2.0 * p * r / (p + r))
}

/// Final-solution scores.
///
/// Exact match compares the normalized prediction multiset with the
/// normalized gold multiset. Precision, recall and F1 are token level
/// between all predictions joined together and each gold alternative; with
/// several gold answers the joined gold list is an extra alternative. The
/// alternative with the highest F1 wins (first on ties).
pub fn score_answer(pred_answers: &[String], gold_answers: &[String]) -> AnswerScores {
    let mut pred_norm: Vec<String> = pred_answers.iter().map(|a| normalize_answer(a)).collect();
    let mut gold_norm: Vec<String> = gold_answers.iter().map(|a| normalize_answer(a)).collect();

    let pred_joined = pred_norm.join(" ");
    let pred_tokens: Vec<&str> = pred_joined.split_whitespace().collect();
    let mut alternatives: Vec<String> = gold_norm.clone();
    if gold_norm.len() > 1 {
        alternatives.push(gold_norm.join(" "));
    }
    let mut best = (0.0, 0.0, 0.0);
    let mut have = false;
    for alt in &alternatives {
        let gold_tokens: Vec<&str> = alt.split_whitespace().collect();
        let s = token_prf(&pred_tokens, &gold_tokens);
        if !have || s.2 > best.2 {
            best = s;
            have = true;
        }
    }

    let pred_set: BTreeSet<&String> = pred_norm.iter().collect();
    let found = gold_norm.iter().filter(|g| pred_set.contains(g)).count();
    let answer_recall = if gold_norm.is_empty() { 0.0 } else { found as f64 / gold_norm.len() as f64 };

    pred_norm.sort();
    gold_norm.sort();
    AnswerScores {
        exact_match: !gold_norm.is_empty() && pred_norm == gold_norm,
        precision: best.0,
        recall: best.1,
        f1: best.2,
        answer_recall,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepScores {
    pub classification_correct: bool,
    pub ir_correct: bool,
    pub trace_correct: bool,
    pub trace_len_words: usize,
    /// Alphanumeric runs plus individual punctuation marks of the think-span.
    pub trace_len_tokens: usize,
    /// Jaccard overlap between predicted and gold fact sets (diagnostic).
    pub ir_overlap: f64,
}

fn count_tokens(text: &str) -> usize {
    let mut n = 0;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if !in_word {
                n += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                n += 1;
            }
        }
    }
    n
}

/// Intermediate-trace scores against the gold skeleton.
pub fn score_trace(parsed: &ParsedOutput, skeleton: &TraceSkeleton, instance: &QaInstance) -> StepScores {
    let classification_correct = parsed
        .category
        .as_ref()
        .is_some_and(|c| normalize_answer(c.as_str()) == normalize_answer(skeleton.category.as_str()));

    let gold: BTreeSet<String> =
        skeleton.support.iter().filter_map(|&i| instance.facts.get(i)).map(|f| normalize_answer(f)).collect();
    let (ir_correct, ir_overlap) = match &parsed.facts {
        Some(facts) => {
            let pred: BTreeSet<String> = facts.iter().map(|f| normalize_answer(f)).collect();
            let inter = pred.intersection(&gold).count();
            let union = pred.union(&gold).count();
            let overlap = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
            (!gold.is_empty() && pred == gold, overlap)
        }
        None => (false, 0.0),
    };

    let think = parsed.think_text.as_deref().unwrap_or("");
    StepScores {
        classification_correct,
        ir_correct,
        trace_correct: classification_correct && ir_correct,
        trace_len_words: think.split_whitespace().count(),
        trace_len_tokens: count_tokens(think),
        ir_overlap,
    }
}
