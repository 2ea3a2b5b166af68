//! `rootflow`: synthesize data, discover causal orders, score them, run seeded benchmarks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rootflow_core::io::{
    default_output_dir, load_dataset_csv, load_graph_csv, load_order, parse_order, run_experiment, save_dataset_csv,
    save_graph_csv, save_order, ExperimentConfig, Method, RoundRecord,
};
use rootflow_core::order::{discover_order, discover_order_perm, JacAggregation};
use rootflow_core::scm::{standardize, synthesize, varsort_order};
use rootflow_core::{count_backward, CausalOrder, Dag, Dataset, Matrix, RngStream};

#[derive(Parser)]
#[command(
    name = "rootflow",
    version,
    about = "Causal order discovery with conditional spline flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random DAG and a monotonic SCM and write data.csv and graph.csv.
    Synth(SynthArgs),
    /// Sequential root-peeling order discovery.
    Discover(DiscoverArgs),
    /// Permutation-learning baseline.
    DiscoverPerm(DiscoverArgs),
    /// Order by ascending marginal variance of the raw data.
    Varsort(VarsortArgs),
    /// Count backward edges of an order against a graph.
    Eval(EvalArgs),
    /// Run a seeded experiment from a JSON config.
    Bench(BenchArgs),
}

/// Flags mirroring the experiment config fields.
#[derive(Args, Clone, Default)]
struct Overrides {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    flow_layers: Option<usize>,
    #[arg(long)]
    mlp_hidden_layers: Option<usize>,
    #[arg(long)]
    hidden_units: Option<usize>,
    #[arg(long)]
    jac_agg: Option<JacAggregation>,
    /// Sinkhorn temperature.
    #[arg(long)]
    t: Option<f64>,
    /// Jacobian l1 penalty weight.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sinkhorn_iters: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { cfg.$f = v; })* };
        }
        set!(
            epochs,
            lr,
            batch_size,
            flow_layers,
            mlp_hidden_layers,
            hidden_units,
            jac_agg,
            t,
            lambda,
            sinkhorn_iters
        );
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to min(1, 2/(d-1)).
    #[arg(long)]
    edge_prob: Option<f64>,
    /// Output directory [default: $ROOTFLOW_OUT_DIR or ./results].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiscoverArgs {
    #[arg(long)]
    data: PathBuf,
    /// Ground truth; when given the Count Backward score is reported.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct VarsortArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// One-based order such as `2,3,1`, or a path to an order file.
    #[arg(long)]
    order: String,
    #[arg(long)]
    graph: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Result file [default: config `output`, else $ROOTFLOW_OUT_DIR/<config stem>.result.json].
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[command(flatten)]
    overrides: Overrides,
}

fn out_dir(out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(default_output_dir)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_graph_for(path: &Path, ds: &Dataset) -> Result<Dag> {
    load_graph_csv(path, Some(ds.column_names())).with_context(|| format!("reading graph {}", path.display()))
}

fn report_cb(order: &CausalOrder, graph: Option<&Path>, ds: &Dataset) -> Result<Option<usize>> {
    let Some(path) = graph else { return Ok(None) };
    let cb = count_backward(order, &load_graph_for(path, ds)?)?;
    println!("cb {cb}");
    Ok(Some(cb))
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut cfg = ExperimentConfig {
        d: args.d,
        n: args.n,
        edge_prob: args.edge_prob,
        ..ExperimentConfig::default()
    };
    cfg.seeds = vec![args.seed];
    cfg.validate()?;
    let (scm, ds) = synthesize(&cfg.synth_config(args.seed))?;
    let dir = out_dir(args.out);
    save_dataset_csv(&ds, dir.join("data.csv"))?;
    save_graph_csv(&scm.dag, dir.join("graph.csv"))?;
    println!(
        "wrote {} and {}",
        dir.join("data.csv").display(),
        dir.join("graph.csv").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Diagnostics {
    method: Method,
    seed: Option<u64>,
    order: Vec<usize>,
    cb: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rounds: Option<Vec<RoundRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    soft_permutation: Option<Matrix>,
}

fn discover(args: DiscoverArgs, method: Method) -> Result<()> {
    let mut cfg = ExperimentConfig {
        method,
        ..ExperimentConfig::default()
    };
    args.overrides.apply(&mut cfg);
    cfg.validate()?;
    let raw = load_dataset_csv(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    let ds = standardize(&raw)?;
    // same substream as a bench seed
    let rng = RngStream::new(args.seed).substream(3);
    let (order, rounds, soft) = match method {
        Method::Sequential => {
            let res = discover_order(&ds, &cfg.seq_config(), &rng)?;
            (
                res.order,
                Some(res.rounds.iter().map(RoundRecord::from).collect()),
                None,
            )
        }
        Method::Permutation => {
            let res = discover_order_perm(&ds, &cfg.perm_config(), &rng)?;
            (res.order, None, Some(res.soft_permutation))
        }
        Method::Varsort => unreachable!("varsort has its own subcommand"),
    };
    println!("order {order}");
    let cb = report_cb(&order, args.graph.as_deref(), &raw)?;
    let dir = out_dir(args.out);
    save_order(&order, dir.join("order.txt"))?;
    write_json(
        &dir.join("diagnostics.json"),
        &Diagnostics {
            method,
            seed: Some(args.seed),
            order: order.to_one_based(),
            cb,
            rounds,
            soft_permutation: soft,
        },
    )
}

fn varsort(args: VarsortArgs) -> Result<()> {
    let raw = load_dataset_csv(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    let order = varsort_order(&raw);
    println!("order {order}");
    let cb = report_cb(&order, args.graph.as_deref(), &raw)?;
    let dir = out_dir(args.out);
    save_order(&order, dir.join("order.txt"))?;
    write_json(
        &dir.join("diagnostics.json"),
        &Diagnostics {
            method: Method::Varsort,
            seed: None,
            order: order.to_one_based(),
            cb,
            rounds: None,
            soft_permutation: None,
        },
    )
}

fn eval(args: EvalArgs) -> Result<()> {
    let order = if Path::new(&args.order).is_file() {
        load_order(&args.order)?
    } else {
        parse_order(&args.order)?
    };
    let dag = load_graph_csv(&args.graph, None).with_context(|| format!("reading graph {}", args.graph.display()))?;
    println!("{}", count_backward(&order, &dag)?);
    Ok(())
}

fn bench(args: BenchArgs) -> Result<bool> {
    let mut cfg =
        ExperimentConfig::load(&args.config).with_context(|| format!("reading config {}", args.config.display()))?;
    args.overrides.apply(&mut cfg);
    // data paths in a config are relative to the config file
    let base = args.config.parent().unwrap_or(Path::new(""));
    for p in [&mut cfg.data, &mut cfg.graph].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    if let Some(seeds) = args.seeds {
        cfg.seeds = seeds;
    }
    let output = args.output.or_else(|| cfg.output.clone()).unwrap_or_else(|| {
        let stem = args
            .config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        default_output_dir().join(format!("{stem}.result.json"))
    });
    let record = run_experiment(&cfg)?;
    record.save(&output)?;
    for s in &record.seeds {
        match (&s.cb, &s.error) {
            (Some(cb), _) => println!("seed {} cb {cb}", s.seed),
            (None, Some(e)) => println!("seed {} error {e}", s.seed),
            _ => {}
        }
    }
    if let Some(agg) = &record.aggregate {
        println!("mean cb {:.3} std {:.3}", agg.mean, agg.std);
    }
    eprintln!("{:.1}s, wrote {}", record.wall_clock_seconds, output.display());
    Ok(!record.all_failed())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Discover(a) => discover(a, Method::Sequential),
        Command::DiscoverPerm(a) => discover(a, Method::Permutation),
        Command::Varsort(a) => varsort(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => {
            if !bench(a)? {
                bail!("every seed failed");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
