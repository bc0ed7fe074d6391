use std::collections::BTreeSet;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tagcube_cli::bench::{self, IcebergBench, LayoutBench};
use tagcube_cli::synth::{self, SynthSpec};
use tagcube_cli::{load_dataset, render};
use tagcube_core::cube::GroupingMap;
use tagcube_core::layout::HeuristicSpec;
use tagcube_core::{Aggregator, BoundDataset, CloudEngine, QueryDescriptor};
use tagcube_server::AppState;

#[derive(Parser)]
#[command(name = "tagcube", version, about = "OLAP cubes as tag clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and bind a dataset, then print a summary.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute one tag cloud.
    Cloud(CloudArgs),
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "0.0.0.0")]
        host: String,
        /// Defaults to $TAGCUBE_PORT, then 8080.
        #[arg(long)]
        port: Option<u16>,
    },
    /// Iceberg versus exact top-k: quality and timing.
    BenchIceberg {
        #[command(flatten)]
        data: DataArgs,
        /// Display dimensions, one 1-tag cloud each. Defaults to all.
        #[arg(long, value_delimiter = ',')]
        dims: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = bench::LIMITS)]
        limits: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = bench::SIZES)]
        sizes: Vec<usize>,
        #[arg(long, default_value = "count")]
        agg: Aggregator,
        #[arg(long)]
        measure: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Layout heuristics over every ordered (display, cluster) pair.
    BenchLayout {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',')]
        dims: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "nn,pwmc:1000,mc:1000")]
        heuristics: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "cosine,tanimoto")]
        similarity: Vec<String>,
        #[arg(long, default_value_t = 150)]
        limit: usize,
        #[arg(long, default_value_t = 150)]
        k: usize,
        #[arg(long, default_value = "count")]
        agg: Aggregator,
        #[arg(long)]
        measure: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a Zipf-distributed fact table as CSV.
    Synth {
        #[arg(long, default_value_t = 4)]
        dims: usize,
        /// One value for all dimensions, or one per dimension.
        #[arg(long, value_delimiter = ',', default_value = "50")]
        cardinalities: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        facts: usize,
        #[arg(long = "zipf", default_value_t = 1.2)]
        zipf_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Delimited fact file.
    input: PathBuf,
    /// Dataset id; defaults to the file stem.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value = ",")]
    delimiter: String,
    #[arg(long)]
    no_header: bool,
    /// Dimension columns; defaults to every non-measure column.
    #[arg(long, value_delimiter = ',')]
    dimensions: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    measures: Vec<String>,
}

impl DataArgs {
    fn id(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    fn load(&self) -> Result<BoundDataset> {
        let delimiter = match self.delimiter.as_str() {
            "tab" | "\\t" => '\t',
            d if d.chars().count() == 1 => d.chars().next().unwrap(),
            _ => bail!("delimiter must be a single character"),
        };
        load_dataset(
            &self.input,
            &self.id(),
            delimiter,
            !self.no_header,
            &self.dimensions,
            &self.measures,
        )
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct CloudArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<String>,
    #[arg(long, default_value = "count")]
    agg: Aggregator,
    #[arg(long)]
    measure: Option<String>,
    /// `dimension:value`; repeatable.
    #[arg(long)]
    slice: Vec<String>,
    /// `dimension:v1|v2`; repeatable.
    #[arg(long)]
    dice: Vec<String>,
    /// Grouping map as JSON; repeatable.
    #[arg(long)]
    group: Vec<String>,
    #[arg(long, default_value_t = 150)]
    k: usize,
    #[arg(long, default_value_t = 150)]
    limit: usize,
    #[arg(long)]
    exact: bool,
    #[arg(long, value_delimiter = ',')]
    cluster: Vec<String>,
    #[arg(long, default_value = "cosine")]
    similarity: String,
    #[arg(long, default_value = "nn")]
    heuristic: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 7)]
    buckets: u32,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CloudArgs {
    fn descriptor(&self, dataset: &str) -> Result<QueryDescriptor> {
        let mut q = QueryDescriptor::new(dataset, self.dims.clone());
        q.agg = self.agg;
        q.measure = self.measure.clone();
        for s in &self.slice {
            let (d, v) = s
                .split_once(':')
                .ok_or_else(|| anyhow!("--slice must be `dimension:value`"))?;
            q.slices.insert(d.to_string(), v.to_string());
        }
        for s in &self.dice {
            let (d, v) = s
                .split_once(':')
                .ok_or_else(|| anyhow!("--dice must be `dimension:v1|v2`"))?;
            let values: BTreeSet<String> = v.split('|').map(str::to_string).collect();
            q.dices.entry(d.to_string()).or_default().extend(values);
        }
        for g in &self.group {
            let g: GroupingMap = serde_json::from_str(g).context("bad --group")?;
            q.groupings.push(g);
        }
        q.k = self.k;
        q.limit = self.limit;
        q.exact = self.exact;
        q.cluster = self.cluster.clone();
        q.similarity = self.similarity.clone();
        q.heuristic = self.heuristic.clone();
        q.seed = self.seed;
        q.buckets = self.buckets;
        Ok(q)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { data, out } => {
            let ds = data.load()?;
            let dims: Vec<_> = ds
                .dimensions()
                .iter()
                .map(|d| serde_json::json!({"name": d.name, "values": d.dictionary.len()}))
                .collect();
            let summary = serde_json::json!({
                "id": ds.id(),
                "facts": ds.fact_count(),
                "dimensions": dims,
                "measures": ds.schema().measures,
            });
            emit(out.as_deref(), &format!("{summary}\n"))
        }
        Command::Cloud(args) => {
            let ds = args.data.load()?;
            let q = args.descriptor(ds.id())?;
            let response = CloudEngine::new().run(&ds, &q)?;
            let text = match args.format {
                Format::Json => response.to_json(),
                Format::Text => render::text(&response),
            };
            emit(args.out.as_deref(), &text)
        }
        Command::Serve { host, port } => {
            let port = port.unwrap_or_else(tagcube_server::port_from_env);
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad --host")?;
            let state = Arc::new(AppState::new(CloudEngine::new()));
            tokio::runtime::Runtime::new()?.block_on(tagcube_server::serve(addr, state))?;
            Ok(())
        }
        Command::BenchIceberg {
            data,
            dims,
            limits,
            sizes,
            agg,
            measure,
            out,
        } => {
            let ds = data.load()?;
            let base_dims = ds.schema().dimensions.clone();
            let bench = IcebergBench {
                dataset: &ds,
                display_dims: if dims.is_empty() { base_dims.clone() } else { dims },
                base_dims,
                aggregator: agg,
                measure,
                limits,
                sizes,
            };
            emit(out.as_deref(), &bench::to_csv(&bench.run()?)?)
        }
        Command::BenchLayout {
            data,
            dims,
            heuristics,
            similarity,
            limit,
            k,
            agg,
            measure,
            seed,
            out,
        } => {
            let engine = CloudEngine::new();
            let heuristics = heuristics
                .iter()
                .map(|h| {
                    let spec: HeuristicSpec = h.parse()?;
                    engine.layout_registry().build(&spec)?;
                    Ok(spec)
                })
                .collect::<Result<Vec<_>>>()?;
            let ds = data.load()?;
            let bench = LayoutBench {
                dataset: &ds,
                dims: if dims.is_empty() { ds.schema().dimensions.clone() } else { dims },
                aggregator: agg,
                measure,
                similarities: similarity,
                heuristics,
                limit,
                k,
                seed,
            };
            let rows = bench.run(engine.similarity_registry(), engine.layout_registry())?;
            emit(out.as_deref(), &bench::to_csv(&rows)?)
        }
        Command::Synth {
            dims,
            cardinalities,
            facts,
            zipf_s,
            seed,
            out,
        } => {
            let cardinalities = match cardinalities.as_slice() {
                [c] => vec![*c; dims],
                cs if cs.len() == dims => cs.to_vec(),
                cs => bail!("{} cardinalities given for {dims} dimensions", cs.len()),
            };
            let spec = SynthSpec {
                cardinalities,
                facts,
                zipf_s,
                seed,
            };
            emit(out.as_deref(), &synth::generate(&spec)?.to_delimited(',')?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            // I/O failures exit 1; every validation failure exits 2.
            if e.chain().any(|c| c.is::<std::io::Error>()) {
                ExitCode::FAILURE
            } else {
                ExitCode::from(2)
            }
        }
    }
}
