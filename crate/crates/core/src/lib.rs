//! Verifiable reasoning traces for open-book question answering.
//!
//! Instances are loaded into a canonical form ([`corpus`]), decomposed into
//! a gold classification plus supporting facts ([`decompose`]), rendered into
//! fine-tuning records with correct or corrupted traces ([`trace`]), sent to a
//! model endpoint ([`infer`]), and scored on both the final answer and the
//! intermediate steps ([`parse_eval`], [`report`]).

pub mod corpus;
pub mod decompose;
pub mod fixtures;
pub mod infer;
pub mod parse_eval;
pub mod pylist;
pub mod report;
pub mod synth;
pub mod trace;

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use corpus::{
    load_jsonl, parse_babi, validate, write_jsonl, CategoryLabel, CorpusError, DatasetKind, LoadOptions, LoadReport,
    QaInstance,
};
pub use decompose::{
    cross_check, decompose, extract_interval, relation, solve_oracle, CrossCheck, DecomposeError, Interval,
    TemporalRelation, TraceSkeleton,
};
pub use infer::{collect, collect_with, Cache, CollectReport, EndpointConfig, InferError, Transport};
pub use parse_eval::{
    confusion, evaluate, parse_output, score_answer, score_trace, AnswerScores, ConfusionMatrix, EvalResult,
    ModelOutput, ParsedOutput, StepScores,
};
pub use report::{emit, summarize, Aggregate, ConfusionReport, Format, MetricsRow, MetricsTable, QuerySetting};
pub use trace::{
    build_record, corrupt, export_sft, render_correct, CorruptionPolicy, SftMode, SftRecord, TraceError, TraceTemplate,
};
