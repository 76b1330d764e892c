//! Shared workloads for the throughput benchmarks.

use veritrace_core::corpus::QaInstance;
use veritrace_core::decompose::{decompose, TraceSkeleton};
use veritrace_core::synth::synth_cotemp;
use veritrace_core::trace::{render_correct, TraceTemplate};

pub struct Workload {
    pub instances: Vec<QaInstance>,
    pub skeletons: Vec<TraceSkeleton>,
    pub completions: Vec<String>,
    pub template: TraceTemplate,
}

/// `n` synthetic co-temporal instances with their skeletons and gold
/// completions.
pub fn workload(n: usize, seed: u64) -> Workload {
    let instances = synth_cotemp(n, seed);
    let template = TraceTemplate::temporal();
    let skeletons: Vec<_> = instances.iter().map(|i| decompose(i).expect("synthetic instances decompose")).collect();
    let completions = instances
        .iter()
        .zip(&skeletons)
        .map(|(i, s)| render_correct(i, s, &template).expect("gold trace renders"))
        .collect();
    Workload { instances, skeletons, completions, template }
}
