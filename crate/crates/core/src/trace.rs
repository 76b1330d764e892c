//! Input-Trace-Output rendering and SFT dataset export.
//!
//! A trace completion has the shape
//!
//! ```text
//! <think>{classification sentence} {IR sentence}</think> <answer>['answer', ...]</answer>
//! ```
//!
//! where the IR sentence lists the selected facts as a Python-style string
//! list. Corrupted traces keep the gold answer but swap in a wrong category
//! and facts drawn from outside the gold support.

use std::collections::BTreeSet;
use std::io::Write;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{CategoryLabel, DatasetKind, QaInstance};
use crate::decompose::{decompose, DecomposeError, TraceSkeleton};
use crate::pylist::format_list;

pub const CATEGORY_SLOT: &str = "{category}";
pub const FACTS_SLOT: &str = "{facts}";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("invalid trace template: {0}")]
    InvalidTemplate(String),
    #[error("instance {0}: category set has a single member, no wrong category exists")]
    SingletonCategorySet(String),
    #[error("instance {0}: every fact is in the gold support, no wrong fact exists")]
    NoNonGoldFacts(String),
    #[error("incorrect-trace export requires a corruption policy")]
    MissingPolicy,
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error("instance {id}: {source}")]
    Instance {
        id: String,
        #[source]
        source: Box<TraceError>,
    },
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceTemplate {
    pub classification_pattern: String,
    pub ir_pattern: String,
    pub think_open: String,
    pub think_close: String,
    pub answer_open: String,
    pub answer_close: String,
}

impl TraceTemplate {
    pub const TEMPORAL_CLASSIFICATION: &'static str =
        "The temporal relation between the event in question and the event in context is: {category}.";
    pub const GENERIC_CLASSIFICATION: &'static str = "The category of the question is: {category}.";
    pub const IR: &'static str = "I need to use the following facts to answer the question: {facts}";

    fn with_classification(classification: &str) -> Self {
        TraceTemplate {
            classification_pattern: classification.into(),
            ir_pattern: Self::IR.into(),
            think_open: "<think>".into(),
            think_close: "</think>".into(),
            answer_open: "<answer>".into(),
            answer_close: "</answer>".into(),
        }
    }

    pub fn temporal() -> Self {
        Self::with_classification(Self::TEMPORAL_CLASSIFICATION)
    }

    pub fn generic() -> Self {
        Self::with_classification(Self::GENERIC_CLASSIFICATION)
    }

    pub fn for_kind(kind: &DatasetKind) -> Self {
        match kind {
            DatasetKind::Cotemp => Self::temporal(),
            _ => Self::generic(),
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: String| Err(TraceError::InvalidTemplate(m));
        if self.classification_pattern.matches(CATEGORY_SLOT).count() != 1 {
            return bad(format!("classification pattern must contain {CATEGORY_SLOT} exactly once"));
        }
        if self.ir_pattern.matches(FACTS_SLOT).count() != 1 {
            return bad(format!("IR pattern must contain {FACTS_SLOT} exactly once"));
        }
        let delims = [&self.think_open, &self.think_close, &self.answer_open, &self.answer_close];
        if delims.iter().any(|d| d.trim().is_empty()) {
            return bad("delimiters must be non-empty".into());
        }
        if delims.iter().collect::<BTreeSet<_>>().len() != delims.len() {
            return bad("delimiters must be distinct".into());
        }
        Ok(())
    }

    pub fn delimiters(&self) -> [&str; 4] {
        [&self.think_open, &self.think_close, &self.answer_open, &self.answer_close]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SftMode {
    Vanilla,
    CorrectTrace,
    IncorrectTrace,
}

impl SftMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SftMode::Vanilla => "vanilla",
            SftMode::CorrectTrace => "correct_trace",
            SftMode::IncorrectTrace => "incorrect_trace",
        }
    }
}

impl std::str::FromStr for SftMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "vanilla" => Ok(SftMode::Vanilla),
            "correct" | "correct_trace" => Ok(SftMode::CorrectTrace),
            "incorrect" | "incorrect_trace" => Ok(SftMode::IncorrectTrace),
            other => Err(format!("unknown SFT mode {other:?}")),
        }
    }
}

/// What the trace of a record claims; `null` for vanilla records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub category: Option<CategoryLabel>,
    pub support: Option<Vec<usize>>,
}

/// One JSONL line of an SFT dataset. Field order is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub id: String,
    pub mode: SftMode,
    pub prompt: String,
    pub completion: String,
    pub meta: TraceMeta,
}

pub fn render_prompt(instance: &QaInstance) -> String {
    format!(
        "Answer the question based on the context: {} Question: {} Only return the answer.",
        format_list(&instance.facts),
        instance.question
    )
}

pub fn render_answers(answers: &[String]) -> String {
    format_list(answers)
}

/// Renders a full trace completion for the category and facts named by `skeleton`.
pub fn render_trace(
    instance: &QaInstance,
    skeleton: &TraceSkeleton,
    template: &TraceTemplate,
) -> Result<String, TraceError> {
    template.validate()?;
    let facts: Vec<&str> = skeleton
        .support
        .iter()
        .map(|&i| {
            instance
                .facts
                .get(i)
                .map(String::as_str)
                .ok_or_else(|| DecomposeError::SupportOutOfRange { id: instance.id.clone(), index: i })
        })
        .collect::<Result<_, _>>()?;
    let classification = template.classification_pattern.replacen(CATEGORY_SLOT, skeleton.category.as_str(), 1);
    let ir = template.ir_pattern.replacen(FACTS_SLOT, &format_list(&facts), 1);
    Ok(format!(
        "{}{} {}{} {}{}{}",
        template.think_open,
        classification,
        ir,
        template.think_close,
        template.answer_open,
        render_answers(&instance.gold_answers),
        template.answer_close
    ))
}

/// Gold trace completion: gold category, gold support facts in context order, gold answers.
pub fn render_correct(
    instance: &QaInstance,
    skeleton: &TraceSkeleton,
    template: &TraceTemplate,
) -> Result<String, TraceError> {
    let mut gold = skeleton.clone();
    gold.support.sort_unstable();
    gold.support.dedup();
    render_trace(instance, &gold, template)
}

/// Seeded corruption of the Classification and IR steps.
///
/// The random stream for an instance is ChaCha8 keyed by
/// `SHA-256("veritrace/corrupt/v1" || seed as u64 LE || instance id UTF-8)`.
/// Draws use rejection sampling on `next_u64`: first the category index
/// (into the dataset's declared categories minus the gold one, in
/// declaration order), then a partial Fisher-Yates shuffle over the
/// ascending non-gold fact indices. The selected facts are returned in
/// ascending order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionPolicy {
    pub seed: u64,
    pub corrupt_category: bool,
    pub corrupt_facts: bool,
}

impl CorruptionPolicy {
    pub fn new(seed: u64) -> Self {
        CorruptionPolicy { seed, corrupt_category: true, corrupt_facts: true }
    }

    pub fn stream(&self, instance_id: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(b"veritrace/corrupt/v1");
        h.update(self.seed.to_le_bytes());
        h.update(instance_id.as_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(key)
    }
}

/// Uniform integer in `0..n` by rejection sampling.
fn uniform_below(rng: &mut impl RngCore, n: usize) -> usize {
    assert!(n > 0);
    let n = n as u64;
    let zone = (u64::MAX / n) * n;
    loop {
        let x = rng.next_u64();
        if x < zone {
            return (x % n) as usize;
        }
    }
}

pub fn corrupt(
    instance: &QaInstance,
    skeleton: &TraceSkeleton,
    policy: &CorruptionPolicy,
) -> Result<TraceSkeleton, TraceError> {
    let mut rng = policy.stream(&instance.id);
    let category = if policy.corrupt_category {
        let others: Vec<CategoryLabel> =
            instance.dataset.categories().into_iter().filter(|c| *c != skeleton.category).collect();
        if others.is_empty() {
            return Err(TraceError::SingletonCategorySet(instance.id.clone()));
        }
        others[uniform_below(&mut rng, others.len())].clone()
    } else {
        skeleton.category.clone()
    };
    let support = if policy.corrupt_facts {
        let gold: BTreeSet<usize> = skeleton.support.iter().copied().collect();
        let mut pool: Vec<usize> = (0..instance.facts.len()).filter(|i| !gold.contains(i)).collect();
        if pool.is_empty() {
            return Err(TraceError::NoNonGoldFacts(instance.id.clone()));
        }
        let k = gold.len().clamp(1, pool.len());
        for i in 0..k {
            let j = i + uniform_below(&mut rng, pool.len() - i);
            pool.swap(i, j);
        }
        let mut picked = pool[..k].to_vec();
        picked.sort_unstable();
        picked
    } else {
        skeleton.support.clone()
    };
    Ok(TraceSkeleton { category, support, derived_answers: None })
}

/// Builds the SFT record for one instance.
pub fn build_record(
    instance: &QaInstance,
    mode: SftMode,
    policy: Option<&CorruptionPolicy>,
    template: &TraceTemplate,
) -> Result<SftRecord, TraceError> {
    let prompt = render_prompt(instance);
    let (completion, meta) = match mode {
        SftMode::Vanilla => (render_answers(&instance.gold_answers), TraceMeta { category: None, support: None }),
        SftMode::CorrectTrace | SftMode::IncorrectTrace => {
            let gold = decompose(instance)?;
            let shown = if mode == SftMode::CorrectTrace {
                gold
            } else {
                corrupt(instance, &gold, policy.ok_or(TraceError::MissingPolicy)?)?
            };
            let completion = render_correct(instance, &shown, template)?;
            (completion, TraceMeta { category: Some(shown.category), support: Some(shown.support) })
        }
    };
    Ok(SftRecord { id: instance.id.clone(), mode, prompt, completion, meta })
}

/// Writes one JSONL record per instance; aborts on the first failing instance.
pub fn export_sft<W: Write>(
    instances: &[QaInstance],
    mode: SftMode,
    policy: Option<&CorruptionPolicy>,
    template: &TraceTemplate,
    mut sink: W,
) -> Result<usize, TraceError> {
    template.validate()?;
    if mode == SftMode::IncorrectTrace && policy.is_none() {
        return Err(TraceError::MissingPolicy);
    }
    let mut written = 0;
    for inst in instances {
        let rec = build_record(inst, mode, policy, template)
            .map_err(|e| TraceError::Instance { id: inst.id.clone(), source: Box::new(e) })?;
        serde_json::to_writer(&mut sink, &rec).map_err(std::io::Error::from)?;
        sink.write_all(b"\n")?;
        written += 1;
    }
    sink.flush()?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{babi_instance, cotemp_example};

    pub(crate) const COTEMP_EXAMPLE_PROMPT: &str = "Answer the question based on the context: ['Morus Hasratyan worked for The Newcastle upon Tyne Hospitals NHS Foundation Trust from September 11, 1972 to December 18, 1974.', 'Morus Hasratyan is a member of the Communist Party of the Soviet Union in 1955.', 'Morus Hasratyan works for Haigazian University from 1965 to 1966.', \"Morus Hasratyan worked for Bishop's University from 1972 to 1975.\", 'Morus Hasratyan worked for ISCTE – Lisbon University Institute from June, 1957 to December, 1960.', 'Morus Hasratyan works for History Museum of Armenia from 1964 to 1975.', 'Morus Hasratyan worked for Royal Air Force College Cranwell in February, 1959.', 'Morus Hasratyan worked for University of Detroit Mercy in September, 1963.', 'Morus Hasratyan worked for Tagesspiegel from May, 1957 to November, 1957.', 'Morus Hasratyan worked for North Carolina State University in May, 1962.'] Question: While Morus Hasratyan was working for Haigazian University, which employer did Morus Hasratyan work for during the same time period? Only return the answer.";

    #[test]
    fn prompt_matches_table_example() {
        let inst = cotemp_example();
        assert_eq!(render_prompt(&inst), COTEMP_EXAMPLE_PROMPT);
        assert_eq!(render_prompt(&inst), render_prompt(&inst));
    }

    #[test]
    fn prompt_single_fact() {
        let mut inst = babi_instance();
        inst.facts.truncate(1);
        assert_eq!(
            render_prompt(&inst),
            "Answer the question based on the context: ['Mary moved to the bathroom.'] Question: Where is Mary? Only return the answer."
        );
    }

    #[test]
    fn correct_trace_matches_table_example() {
        let inst = cotemp_example();
        let sk = decompose(&inst).unwrap();
        let got = render_correct(&inst, &sk, &TraceTemplate::temporal()).unwrap();
        assert_eq!(
            got,
            "<think>The temporal relation between the event in question and the event in context is: during. \
             I need to use the following facts to answer the question: \
             ['Morus Hasratyan works for History Museum of Armenia from 1964 to 1975.']</think> \
             <answer>['History Museum of Armenia']</answer>"
        );
    }

    #[test]
    fn two_support_facts_in_context_order() {
        let mut inst = babi_instance();
        inst.gold_category = CategoryLabel::new("two-supporting-facts").unwrap();
        inst.gold_support = BTreeSet::from([3, 1]);
        let sk = TraceSkeleton { category: inst.gold_category.clone(), support: vec![3, 1], derived_answers: None };
        let got = render_correct(&inst, &sk, &TraceTemplate::generic()).unwrap();
        assert_eq!(
            got,
            "<think>The category of the question is: two-supporting-facts. I need to use the following facts to answer the question: \
             ['John went to the hallway.', 'Sandra moved to the garden.']</think> <answer>['bathroom']</answer>"
        );
    }

    #[test]
    fn template_validation() {
        let inst = cotemp_example();
        let sk = decompose(&inst).unwrap();
        let mut t = TraceTemplate::temporal();
        t.think_open.clear();
        t.think_close.clear();
        assert!(matches!(render_correct(&inst, &sk, &t), Err(TraceError::InvalidTemplate(_))));
        let mut t = TraceTemplate::temporal();
        t.answer_open = t.think_open.clone();
        assert!(t.validate().is_err());
        let mut t = TraceTemplate::temporal();
        t.ir_pattern = "facts: {facts} {facts}".into();
        assert!(t.validate().is_err());
        let mut t = TraceTemplate::generic();
        t.classification_pattern = "no slot".into();
        assert!(t.validate().is_err());
    }

    #[test]
    fn corruption_complements() {
        let inst = cotemp_example();
        let sk = decompose(&inst).unwrap();
        for seed in 0..50 {
            let bad = corrupt(&inst, &sk, &CorruptionPolicy::new(seed)).unwrap();
            assert!(["equal", "overlap", "mix"].contains(&bad.category.as_str()));
            assert_eq!(bad.support.len(), 1);
            assert_ne!(bad.support[0], 5);
            assert!(bad.support[0] < 10);
        }
    }

    #[test]
    fn corruption_deterministic_and_seed_sensitive() {
        let inst = cotemp_example();
        let sk = decompose(&inst).unwrap();
        let p = CorruptionPolicy::new(7);
        assert_eq!(corrupt(&inst, &sk, &p).unwrap(), corrupt(&inst, &sk, &p).unwrap());
        let distinct: BTreeSet<_> =
            (0..40).map(|s| corrupt(&inst, &sk, &CorruptionPolicy::new(s)).unwrap().support).collect();
        assert!(distinct.len() > 3);
    }

    #[test]
    fn corruption_errors_and_ablation() {
        let mut inst = babi_instance();
        inst.facts.truncate(1);
        let sk = decompose(&inst).unwrap();
        assert!(matches!(corrupt(&inst, &sk, &CorruptionPolicy::new(1)), Err(TraceError::NoNonGoldFacts(_))));

        let single = DatasetKind::custom("one", vec![CategoryLabel::new("only").unwrap()]).unwrap();
        let mut inst = babi_instance();
        inst.dataset = single;
        inst.gold_category = CategoryLabel::new("only").unwrap();
        let sk = decompose(&inst).unwrap();
        assert!(matches!(corrupt(&inst, &sk, &CorruptionPolicy::new(1)), Err(TraceError::SingletonCategorySet(_))));

        let inst = cotemp_example();
        let sk = decompose(&inst).unwrap();
        let only_facts = CorruptionPolicy { corrupt_category: false, ..CorruptionPolicy::new(3) };
        let bad = corrupt(&inst, &sk, &only_facts).unwrap();
        assert_eq!(bad.category, sk.category);
        assert_ne!(bad.support, sk.support);
        let only_cat = CorruptionPolicy { corrupt_facts: false, ..CorruptionPolicy::new(3) };
        let bad = corrupt(&inst, &sk, &only_cat).unwrap();
        assert_ne!(bad.category, sk.category);
        assert_eq!(bad.support, sk.support);
    }

    #[test]
    fn export_modes() {
        let inst = cotemp_example();
        let mut buf = Vec::new();
        let n = export_sft(std::slice::from_ref(&inst), SftMode::Vanilla, None, &TraceTemplate::temporal(), &mut buf)
            .unwrap();
        assert_eq!(n, 1);
        let rec: SftRecord = serde_json::from_slice(buf.trim_ascii_end()).unwrap();
        assert_eq!(rec.completion, "['History Museum of Armenia']");
        assert_eq!(rec.meta, TraceMeta { category: None, support: None });
        let line = String::from_utf8(buf).unwrap();
        assert!(line.starts_with(r#"{"id":"cotemp-morus-hasratyan","mode":"vanilla","prompt":"#), "{line}");
        assert!(line.trim_end().ends_with(r#""meta":{"category":null,"support":null}}"#), "{line}");

        let mut buf = Vec::new();
        let p = CorruptionPolicy::new(7);
        export_sft(
            std::slice::from_ref(&inst),
            SftMode::IncorrectTrace,
            Some(&p),
            &TraceTemplate::temporal(),
            &mut buf,
        )
        .unwrap();
        let rec: SftRecord = serde_json::from_slice(buf.trim_ascii_end()).unwrap();
        assert!(rec.completion.ends_with("<answer>['History Museum of Armenia']</answer>"));
        assert_ne!(rec.meta.category.as_ref().unwrap().as_str(), "during");
        assert!(!rec.meta.support.as_ref().unwrap().contains(&5));

        let mut buf = Vec::new();
        assert_eq!(export_sft(&[], SftMode::CorrectTrace, None, &TraceTemplate::temporal(), &mut buf).unwrap(), 0);
        assert!(buf.is_empty());

        assert!(matches!(
            export_sft(&[inst], SftMode::IncorrectTrace, None, &TraceTemplate::temporal(), Vec::new()),
            Err(TraceError::MissingPolicy)
        ));
    }

    #[test]
    fn export_reports_failing_instance() {
        let mut inst = babi_instance();
        inst.facts.truncate(1);
        let err = export_sft(
            &[inst],
            SftMode::IncorrectTrace,
            Some(&CorruptionPolicy::new(1)),
            &TraceTemplate::generic(),
            Vec::new(),
        )
        .unwrap_err();
        assert!(matches!(&err, TraceError::Instance { id, .. } if id == "babi-qa1-s1-l6"), "{err}");
    }
}
