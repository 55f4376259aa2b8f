use criterion::{criterion_group, criterion_main, Criterion};
use racbound_bench::{solve_options, staggered_box, symmetric_scan, uniform_scheme};
use racbound_core::explorer::{self, ScanPoint};
use racbound_core::infotheory;
use racbound_core::npa::{self, Level};
use std::hint::black_box;

fn bounds(c: &mut Criterion) {
    let opts = solve_options();
    let mut g = c.benchmark_group("bound");
    g.sample_size(10);
    for (d, k, level) in [(2, 2, Level::One), (3, 2, Level::One), (3, 3, Level::One), (2, 2, Level::OneAB)] {
        g.bench_function(format!("d{d}_k{k}_{}", level.as_str()), |b| {
            b.iter(|| npa::solve_level(black_box(d), black_box(k), level, &opts).unwrap())
        });
    }
    g.finish();
}

fn information(c: &mut Criterion) {
    let mut g = c.benchmark_group("information_gain");
    for (d, k) in [(2, 2), (3, 3), (5, 3)] {
        let b = staggered_box(d, k);
        let s = uniform_scheme(d, k);
        g.bench_function(format!("d{d}_k{k}"), |bench| {
            bench.iter(|| infotheory::information_gain(black_box(&b), black_box(&s)).unwrap())
        });
    }
    g.finish();
}

fn explorer_points(c: &mut Criterion) {
    c.bench_function("scan_point", |b| {
        b.iter(|| ScanPoint::evaluate(black_box([0.9, 0.8, 0.85, 0.7]), black_box([0.4, 0.6])))
    });
    let config = symmetric_scan(41);
    let mut g = c.benchmark_group("scan");
    g.sample_size(10);
    g.bench_function("symmetric_41", |b| b.iter(|| explorer::scan(black_box(&config), None).unwrap()));
    g.finish();
}

criterion_group!(benches, bounds, information, explorer_points);
criterion_main!(benches);
