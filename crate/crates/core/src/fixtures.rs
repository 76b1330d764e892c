//! Small hand-built instances shared by tests, benches and the CLI smoke tests.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{CategoryLabel, DatasetKind, QaInstance};

pub const COTEMP_EXAMPLE_FACTS: [&str; 10] = [
    "Morus Hasratyan worked for The Newcastle upon Tyne Hospitals NHS Foundation Trust from September 11, 1972 to December 18, 1974.",
    "Morus Hasratyan is a member of the Communist Party of the Soviet Union in 1955.",
    "Morus Hasratyan works for Haigazian University from 1965 to 1966.",
    "Morus Hasratyan worked for Bishop's University from 1972 to 1975.",
    "Morus Hasratyan worked for ISCTE – Lisbon University Institute from June, 1957 to December, 1960.",
    "Morus Hasratyan works for History Museum of Armenia from 1964 to 1975.",
    "Morus Hasratyan worked for Royal Air Force College Cranwell in February, 1959.",
    "Morus Hasratyan worked for University of Detroit Mercy in September, 1963.",
    "Morus Hasratyan worked for Tagesspiegel from May, 1957 to November, 1957.",
    "Morus Hasratyan worked for North Carolina State University in May, 1962.",
];

pub const COTEMP_EXAMPLE_QUESTION: &str = "While Morus Hasratyan was working for Haigazian University, which employer did Morus Hasratyan work for during the same time period?";

/// The co-temporal example: answer "History Museum of Armenia", category
/// `during`, supported by fact 5.
pub fn cotemp_example() -> QaInstance {
    QaInstance {
        id: "cotemp-morus-hasratyan".into(),
        dataset: DatasetKind::Cotemp,
        facts: COTEMP_EXAMPLE_FACTS.iter().map(|s| s.to_string()).collect(),
        question: COTEMP_EXAMPLE_QUESTION.into(),
        gold_answers: vec!["History Museum of Armenia".into()],
        gold_category: CategoryLabel::new("during").expect("static label"),
        gold_support: BTreeSet::from([5]),
        metadata: BTreeMap::new(),
    }
}

pub fn babi_instance() -> QaInstance {
    QaInstance {
        id: "babi-qa1-s1-l6".into(),
        dataset: DatasetKind::Babi,
        facts: vec![
            "Mary moved to the bathroom.".into(),
            "John went to the hallway.".into(),
            "Daniel went back to the hallway.".into(),
            "Sandra moved to the garden.".into(),
            "John moved to the office.".into(),
        ],
        question: "Where is Mary?".into(),
        gold_answers: vec!["bathroom".into()],
        gold_category: CategoryLabel::new("single-supporting-fact").expect("static label"),
        gold_support: BTreeSet::from([0]),
        metadata: BTreeMap::new(),
    }
}
