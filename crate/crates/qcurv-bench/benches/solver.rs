use criterion::{criterion_group, criterion_main, Criterion};
use qcurv::solver::{functional_i, gradient_i, minimize, SphereProblem};
use qcurv::ZonalSpectrum;
use qcurv_bench::case_b_request;
use std::hint::black_box;

fn evaluation(c: &mut Criterion) {
    let pr = SphereProblem::new(&case_b_request()).unwrap();
    let mut v = ZonalSpectrum::zeros(4, 64);
    for l in 1..=16 {
        v.coeffs[l] = 0.3 / (l * l) as f64;
    }
    c.bench_function("functional_i", |b| b.iter(|| functional_i(black_box(&v), &pr)));
    c.bench_function("gradient_i", |b| b.iter(|| gradient_i(black_box(&v), &pr)));
}

fn full_solve(c: &mut Criterion) {
    let req = case_b_request();
    c.bench_function("minimize_case_b", |b| b.iter(|| minimize(black_box(&req)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = evaluation, full_solve
}
criterion_main!(benches);
