use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use edgerag_core::llm::{parse_decision, render_decision};
use edgerag_core::retrieval::{synthetic_records, Encoder, HashEncoder, VectorStore};
use edgerag_core::solvers::{solve_alternating, solve_grid_oracle, SolverKind, SolverSpec};
use edgerag_core::{generate_scenario, SlotState, SystemConfig};

fn slot(users: usize) -> SlotState {
    let scenario = generate_scenario(&SystemConfig::default(), users, 7).unwrap();
    SlotState::from_scenario(&scenario, 0).unwrap()
}

fn rates(c: &mut Criterion) {
    let st = slot(10);
    let power = vec![1.0; 10];
    c.bench_function("rates K=10", |b| b.iter(|| st.rates(black_box(&power))));
}

fn solvers(c: &mut Criterion) {
    let spec = SolverSpec::new(SolverKind::AlternatingHeuristic);
    let st10 = slot(10);
    c.bench_function("alternating K=10", |b| b.iter(|| solve_alternating(black_box(&st10), &spec)));
    let oracle = SolverSpec::new(SolverKind::GridOracle).with_grid(11);
    let st1 = slot(1);
    c.bench_function("grid oracle K=1 R=11", |b| {
        b.iter(|| solve_grid_oracle(black_box(&st1), &oracle).unwrap())
    });
}

fn retrieval(c: &mut Criterion) {
    let encoder = HashEncoder::default();
    let store = VectorStore::from_records(&synthetic_records(1000, 1), &encoder).unwrap();
    let query = encoder.encode_text("mobile user 17 computing capability").unwrap();
    c.bench_function("top_k 5 of 1000", |b| b.iter(|| store.top_k(black_box(&query), 5).unwrap()));
}

fn parsing(c: &mut Criterion) {
    let st = slot(10);
    let text = format!(
        "Sure, here it is:\n```json\n{}\n```",
        render_decision(&solve_alternating(&st, &SolverSpec::new(SolverKind::AlternatingHeuristic)))
    );
    c.bench_function("parse decision K=10", |b| b.iter(|| parse_decision(black_box(&text), 10).unwrap()));
}

criterion_group!(benches, rates, solvers, retrieval, parsing);
criterion_main!(benches);
