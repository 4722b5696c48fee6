use criterion::{black_box, criterion_group, criterion_main, Criterion};

use permlab::gfun::g_eval;
use permlab::perm::subset_sum_hits;
use permlab::sumstats::{rho_raw_count, tau_distinct_split, Bitset, EngineLimits, RhoEngine};
use permlab::walks::{sample_walk, WalkKind};
use permlab::StreamSeed;

fn subset_sum(c: &mut Criterion) {
    let mut s = StreamSeed::new(1, 0).stream();
    let vals: Vec<u64> = (0..40).map(|i| 1 + (s.exp1() * (i as f64 + 1.0) * 30.0) as u64).collect();
    let target = vals.iter().sum::<u64>() / 2;
    c.bench_function("subset_sum_hits 40 values", |b| b.iter(|| subset_sum_hits(black_box(&vals), target)));
}

fn rho_mitm(c: &mut Criterion) {
    let mut s = StreamSeed::new(2, 0).stream();
    let mut t = 0.0;
    let exps: Vec<f64> = (0..32)
        .map(|_| {
            t += s.exp1();
            t
        })
        .collect();
    let limits = EngineLimits::default();
    c.bench_function("rho mitm 32 exponents", |b| {
        b.iter(|| rho_raw_count(black_box(&exps), t, RhoEngine::Mitm, &limits).unwrap())
    });
}

fn tau_split(c: &mut Criterion) {
    let mut s = StreamSeed::new(3, 0).stream();
    let mut t = 0.0;
    let vals: Vec<u64> = (0..24)
        .map(|_| {
            t += s.exp1();
            (t.exp2()).ceil() as u64
        })
        .collect();
    let limits = EngineLimits::default();
    let mut scratch = Bitset::default();
    c.bench_function("tau split 24 values", |b| {
        b.iter(|| tau_distinct_split(black_box(&vals), &limits, &mut scratch).unwrap())
    });
}

fn walk(c: &mut Criterion) {
    let mut s = StreamSeed::new(4, 0).stream();
    c.bench_function("Pois(1) walk 1e4 steps", |b| b.iter(|| sample_walk(WalkKind::Upper, 10_000, &mut s)));
}

fn gfun(c: &mut Criterion) {
    c.bench_function("g_eval", |b| b.iter(|| g_eval(black_box(0.37))));
}

criterion_group!(kernels, subset_sum, rho_mitm, tau_split, walk, gfun);
criterion_main!(kernels);
