use criterion::{criterion_group, criterion_main, Criterion};
use rootflow_bench::synthetic;
use rootflow_core::flow::{train_flow, FlowData, TrainConfig};
use rootflow_core::order::{discover_order, discover_order_perm, PermConfig, SeqConfig};
use rootflow_core::RngStream;

fn train(c: &mut Criterion) {
    let ds = synthetic(4, 1000, 0);
    let data = FlowData::from_columns(ds.values(), 0).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("train_flow_epoch_d4_n1000", |b| {
        b.iter(|| train_flow(&data, &cfg, &RngStream::new(1)).unwrap())
    });
    let seq = SeqConfig {
        train: TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        },
        ..SeqConfig::default()
    };
    group.bench_function("discover_order_1_epoch_d4", |b| {
        b.iter(|| discover_order(&ds, &seq, &RngStream::new(2)).unwrap())
    });
    let perm = PermConfig {
        epochs: 1,
        ..PermConfig::default()
    };
    group.bench_function("discover_order_perm_1_epoch_d4", |b| {
        b.iter(|| discover_order_perm(&ds, &perm, &RngStream::new(3)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, train);
criterion_main!(benches);
