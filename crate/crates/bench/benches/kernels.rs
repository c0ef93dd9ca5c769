use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use lastzero::boundary::kernel_h;
use lastzero::sim::{detect_zero_crossings, estimate_prediction_errors, simulate_skeleton, SimConfig, StoppingRule};
use lastzero::{solve, GainSpec, LevyModel, ScaleFamily, SolverConfig};

fn scale(c: &mut Criterion) {
    let jd = ScaleFamily::new(LevyModel::jump_diffusion(3.0, 1.0, 1.0, 1.0).unwrap()).unwrap();
    c.bench_function("scale_w jump-diffusion", |b| b.iter(|| jd.scale_w(black_box(1.7))));
    c.bench_function("scale_wq q=1", |b| b.iter(|| jd.scale_wq(black_box(1.0), black_box(1.7)).unwrap()));
    c.bench_function("kernel_h", |b| b.iter(|| kernel_h(0.5, 1.0, black_box(1.3), 0.4, black_box(0.8), 2.5)));
}

fn paths(c: &mut Criterion) {
    let m = LevyModel::jump_diffusion(3.0, 1.0, 1.0, 1.0).unwrap();
    c.bench_function("skeleton + crossings, T=20 dt=1e-2", |b| {
        let mut i = 0;
        b.iter(|| {
            i += 1;
            detect_zero_crossings(simulate_skeleton(&m, 0.0, 20.0, 1e-2, 1, i))
        })
    });
    let mut g = c.benchmark_group("estimators");
    g.sample_size(10);
    let cfg = SimConfig::new(2_000, 400.0, 1e-2, 3);
    let rules = [StoppingRule::ConstantBarrier(1.0), StoppingRule::Immediate];
    g.bench_function("two rules, 2000 paths", |b| {
        b.iter(|| estimate_prediction_errors(&m, &rules, 2.0, 0.0, &cfg).unwrap())
    });
    g.finish();
}

fn solver(c: &mut Criterion) {
    let spec = GainSpec::new(LevyModel::brownian_drift(0.5, 1.0).unwrap(), 2.0).unwrap();
    let cfg = SolverConfig { n_u: 30, ..SolverConfig::default() };
    let mut g = c.benchmark_group("solve");
    g.sample_size(10);
    g.bench_function("brownian, 30 nodes", |b| b.iter(|| solve(&spec, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, scale, paths, solver);
criterion_main!(benches);
