//! Completion parsing and scoring of final answers and intermediate traces.

mod confusion;
mod parse;
mod score;

pub use confusion::{confusion, ConfusionMatrix, QuadrantPercent};
pub use parse::{parse_answers, parse_output, ParseFlags, ParsedOutput};
pub use score::{normalize_answer, score_answer, score_trace, AnswerScores, StepScores};

use serde::{Deserialize, Serialize};

use crate::corpus::QaInstance;
use crate::decompose::TraceSkeleton;
use crate::trace::TraceTemplate;

/// Model-output JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub id: String,
    pub completion: String,
}

/// Per-record evaluation. Serializes flat: `id`, answer scores, step
/// scores, then parse flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub id: String,
    #[serde(flatten)]
    pub answer: AnswerScores,
    #[serde(flatten)]
    pub steps: StepScores,
    #[serde(flatten)]
    pub flags: ParseFlags,
}

pub fn evaluate(
    instance: &QaInstance,
    skeleton: &TraceSkeleton,
    completion: &str,
    template: &TraceTemplate,
) -> EvalResult {
    let parsed = parse_output(completion, template);
    EvalResult {
        id: instance.id.clone(),
        answer: score_answer(&parsed.answers, &instance.gold_answers),
        steps: score_trace(&parsed, skeleton, instance),
        flags: parsed.flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::decompose;
    use crate::fixtures::cotemp_example;
    use crate::trace::render_correct;

    #[test]
    fn flat_jsonl_round_trip() {
        let inst = cotemp_example();
        let sk = decompose(&inst).unwrap();
        let t = TraceTemplate::temporal();
        let r = evaluate(&inst, &sk, &render_correct(&inst, &sk, &t).unwrap(), &t);
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.starts_with(r#"{"id":"cotemp-morus-hasratyan","exact_match":true,"precision":1.0"#), "{line}");
        assert!(line.contains(r#""trace_correct":true"#));
        assert!(line.ends_with(
            r#""missing_think":false,"missing_answer":false,"category_unparsed":false,"facts_unparsed":false}"#
        ));
        let back: EvalResult = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }
}
