//! Criterion benchmarks for the hot paths: model scoring and ranking,
//! response parsing, and ranking metrics.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion};
use profdenoise::denoise::{ProposalSource, TitledItem};
use profdenoise::eval::{mrr_at_k, ndcg_at_k};
use profdenoise::llm::parse_response;
use profdenoise::multivae::{Dims, ModelParams};
use profdenoise::rng::seeded_rng;
use profdenoise::scorer::{rank_of, rescore_with_removals};
use profdenoise::Scorer;

fn model(n_items: usize) -> ModelParams {
    let dims = Dims {
        n_items,
        hidden: 600,
        latent: 200,
    };
    ModelParams::init(dims, &mut seeded_rng(1, &[]))
}

fn scoring(c: &mut Criterion) {
    let mut g = c.benchmark_group("scoring");
    for n_items in [400, 3883] {
        let m = model(n_items);
        let profile: Vec<usize> = (0..n_items).step_by(23).collect();
        let candidate = 1;
        g.bench_with_input(BenchmarkId::new("score", n_items), &profile, |b, p| {
            b.iter(|| m.score(black_box(p)))
        });
        g.bench_with_input(BenchmarkId::new("rank_of", n_items), &profile, |b, p| {
            b.iter(|| rank_of(&m, black_box(p), candidate, p).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("rescore_two", n_items), &profile, |b, p| {
            b.iter(|| rescore_with_removals(&m, black_box(p), &p[..2], candidate, p).unwrap())
        });
    }
    g.finish();
}

fn parsing(c: &mut Criterion) {
    let window: Vec<TitledItem> = (0..20)
        .map(|i| TitledItem {
            item: i,
            title: Some(format!("The Movie, Part {i} (19{:02})", 70 + i)),
        })
        .collect();
    let source = ProposalSource {
        denoiser: "bench".into(),
        run: 0,
        response: None,
        transport_error: None,
    };
    let responses = [
        ("plain", "[The Movie, Part 3 (1973)]".to_string()),
        ("pair", "Removal: [The Movie, Part 3 (1973)], [The Movie, Part 11 (1981)]".to_string()),
        (
            "reasoning",
            format!(
                "<think>{}</think>\nAfter weighing the history, the odd one out is:\nRemoval: [the movie, part 7 (1977)]",
                "Considering each title in turn. ".repeat(200)
            ),
        ),
        ("malformed", "I would rather not remove anything.".to_string()),
    ];
    let mut g = c.benchmark_group("parse_response");
    for (name, text) in &responses {
        let k = if *name == "pair" { 2 } else { 1 };
        g.bench_function(*name, |b| {
            b.iter(|| parse_response(black_box(text), &window, k, source.clone()))
        });
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let ranks: Vec<usize> = (1..=10_000).map(|i| (i * 7919) % 3883 + 1).collect();
    c.bench_function("metrics/ndcg_mrr_10k", |b| {
        b.iter(|| {
            ranks
                .iter()
                .map(|&r| ndcg_at_k(r, 20) + mrr_at_k(r, 20))
                .sum::<f64>()
        })
    });
}

pub fn benchmarks(c: &mut Criterion) {
    scoring(c);
    parsing(c);
    metrics(c);
}
