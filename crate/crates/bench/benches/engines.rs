use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use std::sync::Arc;

use lifshitz_core::dynamics::{
    run_to_absorption, DynamicsState, NoObserver, RejectionFreeEngine, SpinField,
};
use lifshitz_core::geometry::{hypercube, BoundaryCondition, Region};
use lifshitz_core::randomness::EventStream;

fn square(l: u32) -> (Arc<Region>, BoundaryCondition) {
    let region = Arc::new(hypercube(l, 2).unwrap());
    let bc = BoundaryCondition::uniform(&region, 1).unwrap();
    (region, bc)
}

fn bench_absorption(c: &mut Criterion) {
    let mut group = c.benchmark_group("absorption_d2");
    group.sample_size(20);
    for l in [16u32, 32, 64] {
        let (region, bc) = square(l);
        let n = region.len();
        group.bench_with_input(BenchmarkId::new("rejection_free", l), &l, |b, _| {
            let mut seed = 0u64;
            b.iter(|| {
                seed += 1;
                let mut state =
                    DynamicsState::new(region.clone(), &bc, SpinField::all_minus(n)).unwrap();
                let mut eng = RejectionFreeEngine::new(&state, seed);
                black_box(
                    eng.run_to_absorption(&mut state, 1e9, &mut NoObserver)
                        .unwrap(),
                )
            })
        });
        if l <= 32 {
            group.bench_with_input(BenchmarkId::new("graphical", l), &l, |b, _| {
                let mut seed = 0u64;
                b.iter(|| {
                    seed += 1;
                    let mut state =
                        DynamicsState::new(region.clone(), &bc, SpinField::all_minus(n)).unwrap();
                    let mut stream = EventStream::new(seed, n as u32).unwrap();
                    black_box(
                        run_to_absorption(&mut state, &mut stream, 1e9, &mut NoObserver).unwrap(),
                    )
                })
            });
        }
    }
    group.finish();
}

fn bench_event_stream(c: &mut Criterion) {
    c.bench_function("event_stream_1e5", |b| {
        let mut stream = EventStream::new(7, 4096).unwrap();
        b.iter(|| {
            let mut last = 0.0;
            for _ in 0..100_000 {
                last = black_box(stream.next_event()).time;
            }
            last
        })
    });
}

criterion_group!(benches, bench_absorption, bench_event_stream);
criterion_main!(benches);
