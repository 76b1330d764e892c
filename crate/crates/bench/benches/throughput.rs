use std::hint::black_box;
use std::io::sink;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use veritrace_bench::workload;
use veritrace_core::decompose::{decompose, extract_interval, relation};
use veritrace_core::parse_eval::{parse_output, score_answer, score_trace};
use veritrace_core::trace::{export_sft, CorruptionPolicy, SftMode};

const N: usize = 1000;

fn bench_decompose(c: &mut Criterion) {
    let w = workload(N, 11);
    let mut g = c.benchmark_group("decompose");
    g.throughput(Throughput::Elements(N as u64));
    g.bench_function("skeleton", |b| {
        b.iter(|| {
            for i in &w.instances {
                black_box(decompose(black_box(i)).unwrap());
            }
        })
    });
    let intervals: Vec<_> =
        w.instances.iter().flat_map(|i| i.facts.iter().filter_map(|f| extract_interval(f))).collect();
    g.bench_function("relation_pairs", |b| {
        b.iter(|| intervals.windows(2).filter_map(|p| relation(black_box(&p[0]), black_box(&p[1]))).count())
    });
    g.finish();
}

fn bench_export(c: &mut Criterion) {
    let w = workload(N, 12);
    let policy = CorruptionPolicy::new(7);
    let mut g = c.benchmark_group("export_sft");
    g.throughput(Throughput::Elements(N as u64));
    for mode in [SftMode::Vanilla, SftMode::CorrectTrace, SftMode::IncorrectTrace] {
        g.bench_with_input(BenchmarkId::from_parameter(mode.as_str()), &mode, |b, &mode| {
            b.iter(|| export_sft(&w.instances, mode, Some(&policy), &w.template, sink()).unwrap())
        });
    }
    g.finish();
}

fn bench_eval(c: &mut Criterion) {
    let w = workload(N, 13);
    let mut g = c.benchmark_group("eval");
    g.throughput(Throughput::Elements(N as u64));
    g.bench_function("parse_output", |b| {
        b.iter(|| {
            for c in &w.completions {
                black_box(parse_output(black_box(c), &w.template));
            }
        })
    });
    let parsed: Vec<_> = w.completions.iter().map(|c| parse_output(c, &w.template)).collect();
    g.bench_function("score_answer", |b| {
        b.iter(|| {
            parsed
                .iter()
                .zip(&w.instances)
                .map(|(p, i)| score_answer(black_box(&p.answers), &i.gold_answers).f1)
                .sum::<f64>()
        })
    });
    g.bench_function("score_trace", |b| {
        b.iter(|| {
            for ((p, s), i) in parsed.iter().zip(&w.skeletons).zip(&w.instances) {
                black_box(score_trace(black_box(p), s, i));
            }
        })
    });
    g.finish();
}

criterion_group!(benches, bench_decompose, bench_export, bench_eval);
criterion_main!(benches);
