use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use frontlab_core::conv::{
    convolve_direct, convolve_direct_sequential, pad_into, ConvolutionMethod,
};
use frontlab_core::kernels::{build_kernel, KernelFamily};

fn profile(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - ((i as f64 - n as f64 / 2.0) * 0.025).tanh()))
        .collect()
}

fn bench_convolution(c: &mut Criterion) {
    let kernel = build_kernel(KernelFamily::Gaussian { sigma: 1.0 }, 0.05, 1e-12).unwrap();
    let mut group = c.benchmark_group("convolution");
    for n in [1601usize, 3201, 8193] {
        let u = profile(n);
        let mut padded = Vec::new();
        pad_into(&u, 1.0, 0.0, kernel.half, &mut padded);
        let mut out = vec![0.0; n];
        group.bench_with_input(BenchmarkId::new("direct_sequential", n), &n, |b, _| {
            b.iter(|| convolve_direct_sequential(kernel.weights(), black_box(&padded), &mut out))
        });
        group.bench_with_input(BenchmarkId::new("direct_parallel", n), &n, |b, _| {
            b.iter(|| convolve_direct(kernel.weights(), black_box(&padded), &mut out))
        });
        let mut plan = kernel.plan(n, false, ConvolutionMethod::Fft);
        group.bench_with_input(BenchmarkId::new("fft", n), &n, |b, _| {
            b.iter(|| plan.apply(black_box(&u), 1.0, 0.0, &mut out))
        });
        let mut both = kernel.plan(n, true, ConvolutionMethod::Fft);
        let mut out2 = vec![0.0; n];
        group.bench_with_input(BenchmarkId::new("fft_packed_pair", n), &n, |b, _| {
            b.iter(|| both.apply_both(black_box(&u), 1.0, 0.0, &mut out, &mut out2))
        });
    }
    group.finish();
}

fn bench_jobs(c: &mut Criterion) {
    let items: Vec<u64> = (0..64).collect();
    let work = |k: &u64| (0..20_000u64).fold(*k as f64, |acc, j| (acc + j as f64).sqrt());
    let mut group = c.benchmark_group("jobs");
    group.bench_function("map_jobs_parallel", |b| {
        b.iter(|| frontlab_core::par::map_jobs(black_box(&items), work))
    });
    group.bench_function("map_jobs_sequential", |b| {
        b.iter(|| frontlab_core::par::map_jobs_sequential(black_box(&items), work))
    });
    group.finish();
}

criterion_group!(benches, bench_convolution, bench_jobs);
criterion_main!(benches);
