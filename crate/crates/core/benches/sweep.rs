//! Sequential against rayon-parallel evaluation of a contingency sweep.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hvdc_modal::params::FaultKind;
use hvdc_modal::sweep::{run_sweep, Mode, Study, SweepSpec};
use hvdc_modal::Execution;

fn spec() -> SweepSpec {
    SweepSpec {
        kinds: FaultKind::FAULTS.to_vec(),
        location_d: vec![0.1, 0.9],
        r_f: vec![0.0, 200.0],
        clr: vec![0.09, 0.17],
        snr_db: vec![f64::INFINITY],
        seeds: vec![0],
        mode: Mode::Simulate,
    }
}

fn sweep(c: &mut Criterion) {
    let study = Study::default();
    let spec = spec();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    let modes = [("sequential", Execution::Sequential), ("parallel", Execution::parallel())];
    for (name, exec) in modes {
        group.bench_with_input(BenchmarkId::new(name, spec.size()), &exec, |b, &exec| {
            b.iter(|| black_box(run_sweep(&study, &spec, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
