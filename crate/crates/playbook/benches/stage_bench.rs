//! Compares the test stage running episodes sequentially versus on the
//! rayon pool (the `parallel` feature, on by default). Both paths produce
//! identical metrics and logs; only wall time differs.

use criterion::{criterion_group, criterion_main, Criterion};
use playbook::harness::{initial_store, test_stage, ConfigFactory, RunConfig, RunLog};
use playbook::libraries::Libraries;

fn bench_test_stage(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let store = initial_store();
    let libraries = Libraries::new();

    let mut group = c.benchmark_group("test_stage");
    group.sample_size(20);
    for (name, parallelism) in [("sequential", 1usize), ("parallel", 4usize)] {
        let mut config = RunConfig::default().with_out_dir(dir.path());
        config.test_tasks_per_type = 2;
        config.test_parallelism = parallelism;
        let factory = ConfigFactory::new(config.backend.clone());
        group.bench_function(name, |b| {
            b.iter(|| {
                let mut log = RunLog::in_memory();
                test_stage(&config, &store, &libraries, None, &factory, &mut log).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_test_stage);
criterion_main!(benches);
