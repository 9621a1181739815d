use std::hint::black_box;

use arcross_bench::{answers, articles, marked_text, sentence, ANSWER_SEED};
use arcross_core::corpus::filter_corpus;
use arcross_core::evaluation::{rouge_l, rouge_n};
use arcross_core::grid::build_crossword;
use arcross_core::text::{contains_answer, normalize, NormalizationProfile};
use arcross_core::{BuildConfig, FilterConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn text(c: &mut Criterion) {
    let input = marked_text(1, 200);
    c.bench_function("normalize/all/200-words", |b| {
        b.iter(|| normalize(black_box(&input), NormalizationProfile::ALL))
    });
    let clue = marked_text(2, 12);
    c.bench_function("contains_answer/12-words", |b| {
        b.iter(|| contains_answer(black_box(&clue), "الكتاب"))
    });
}

fn rouge(c: &mut Criterion) {
    let mut group = c.benchmark_group("rouge");
    for len in [20, 100, 400] {
        let cand = sentence(3, len);
        let reference = sentence(4, len);
        group.bench_with_input(BenchmarkId::new("rouge_l", len), &len, |b, _| {
            b.iter(|| rouge_l(&cand, &reference))
        });
        group.bench_with_input(BenchmarkId::new("rouge_2", len), &len, |b, _| {
            b.iter(|| rouge_n(&cand, &reference, 2))
        });
    }
    group.finish();
}

fn filter(c: &mut Criterion) {
    let records = articles(5, 1000);
    let config = FilterConfig::default();
    c.bench_function("filter_corpus/1000-articles", |b| {
        b.iter(|| filter_corpus(black_box(&records), &config))
    });
}

fn grid(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_crossword");
    for count in [5, 10] {
        let set = answers(ANSWER_SEED, count);
        let config = BuildConfig {
            seed: 1,
            ..BuildConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(count), &count, |b, _| {
            b.iter(|| build_crossword(black_box(&set), &config))
        });
    }
    group.finish();
}

criterion_group!(benches, text, rouge, filter, grid);
criterion_main!(benches);
