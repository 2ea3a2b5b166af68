use rootflow_core::flow::{FlowSpec, TrainConfig};
use rootflow_core::io::{format_dataset_csv, format_graph_csv, parse_dataset_csv, parse_graph_csv};
use rootflow_core::order::{discover_order, discover_order_perm, PermConfig, SeqConfig};
use rootflow_core::scm::{generate, sample_scm, standardize, synthesize, varsort_order, SynthConfig};
use rootflow_core::{count_backward, is_valid_order, Dag, Dataset, Matrix, RngStream};

fn small_seq() -> SeqConfig {
    SeqConfig {
        train: TrainConfig {
            epochs: 3,
            flow: FlowSpec {
                hidden_units: 32,
                ..FlowSpec::default()
            },
            ..TrainConfig::default()
        },
        ..SeqConfig::default()
    }
}

#[test]
fn chain_is_recovered_from_files() {
    let root = RngStream::new(4);
    let dag = Dag::chain(3);
    let scm = sample_scm(&dag, &SynthConfig::new(3, 1000, 4), &mut root.substream(1)).unwrap();
    let raw = generate(&scm, 1000, &mut root.substream(2)).unwrap();
    let raw = parse_dataset_csv(&format_dataset_csv(&raw).unwrap()).unwrap();
    let dag = parse_graph_csv(&format_graph_csv(&dag), Some(raw.column_names())).unwrap();
    let res = discover_order(&standardize(&raw).unwrap(), &SeqConfig::default(), &root.substream(3)).unwrap();
    // the last remaining variable needs no round
    assert_eq!(res.rounds.len(), 2);
    assert_eq!(res.order.as_slice()[0], 0, "order {}", res.order);
    assert!(count_backward(&res.order, &dag).unwrap() <= 1);
}

#[test]
fn independent_columns_any_order_is_valid() {
    let mut rng = RngStream::new(5);
    let ds = standardize(&Dataset::with_default_names(Matrix::from_fn(200, 2, |_, _| rng.normal())).unwrap()).unwrap();
    let perm = discover_order_perm(
        &ds,
        &PermConfig {
            epochs: 1,
            ..PermConfig::default()
        },
        &RngStream::new(6),
    )
    .unwrap();
    let seq = discover_order(&ds, &small_seq(), &RngStream::new(7)).unwrap();
    for order in [perm.order, seq.order] {
        assert!(is_valid_order(&order, &Dag::empty(2)).unwrap());
    }
}

#[test]
fn methods_require_standardized_data() {
    let (_, raw) = synthesize(&SynthConfig::new(3, 100, 0)).unwrap();
    assert!(discover_order(&raw, &small_seq(), &RngStream::new(0)).is_err());
    assert!(discover_order_perm(&raw, &PermConfig::default(), &RngStream::new(0)).is_err());
    // varsort is meant for raw data
    assert_eq!(varsort_order(&raw).len(), 3);
}

#[test]
fn discovery_is_reproducible() {
    let (_, raw) = synthesize(&SynthConfig::new(4, 300, 11)).unwrap();
    let ds = standardize(&raw).unwrap();
    let a = discover_order(&ds, &small_seq(), &RngStream::new(1)).unwrap();
    let b = discover_order(&ds, &small_seq(), &RngStream::new(1)).unwrap();
    assert_eq!(a, b);
}
