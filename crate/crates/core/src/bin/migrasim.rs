use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use migrasim::bfs::BfsAlgorithm;
use migrasim::error::{SimError, SimResult};
use migrasim::graph::GraphType;
use migrasim::gsana::{LayoutMode, Scheme};
use migrasim::harness::{run_experiment, to_csv, to_json, ExperimentSpec, KernelKind, Preset};
use migrasim::machine::SpawnStrategy;
use migrasim::spmv::{GrainSpec, XLayout};

/// Runs kernels on the simulated machine and prints one record per sweep
/// point.
#[derive(Parser)]
#[command(name = "migrasim", version)]
struct Cli {
    /// Write JSON instead of CSV.
    #[arg(long, global = true)]
    json: bool,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Machine configuration file of `key = value` lines.
    #[arg(long, global = true)]
    machine: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    SingleNode,
    MultiNode,
}

#[derive(Subcommand)]
enum Cmd {
    /// STREAM triad over striped arrays.
    Stream { nelems: u64, nthreads: u64 },
    /// Sparse matrix-vector multiply.
    Spmv {
        /// `synth` or a Matrix Market file.
        matrix: String,
        /// Laplacian grid side.
        size: u64,
        /// replicated|striped or 0|1.
        layout: XLayout,
        /// serial|recursive or 0|1.
        spawn: SpawnStrategy,
        nthreads: u64,
    },
    /// Breadth-first search on a generated graph.
    Bfs {
        #[arg(long, default_value = "rmat")]
        graph_type: GraphType,
        #[arg(long, default_value_t = 10)]
        scale: u32,
        #[arg(long, default_value_t = 16)]
        edge_factor: u64,
        /// migrating|remote_writes or 0|1.
        #[arg(long, default_value = "remote_writes")]
        algorithm: BfsAlgorithm,
    },
    /// Graph-alignment similarity stage.
    Gsana {
        /// Vertex count of a generated pair or a pair JSON file.
        pair: String,
        /// 0 = blk, 1 = hcb.
        layout: LayoutMode,
        /// 0 = all, 1 = pair.
        scheme: Scheme,
        /// Threadlet cap per nodelet.
        nthreads: u32,
        #[arg(long, default_value_t = migrasim::gsana::DEFAULT_K)]
        k: usize,
    },
    /// A sweep described by a TOML or JSON experiment file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
}

fn build_spec(cli: &Cli) -> SimResult<ExperimentSpec> {
    let mut spec = match &cli.cmd {
        Cmd::Sweep { config } => ExperimentSpec::load(config)?,
        Cmd::Stream { nelems, nthreads } => {
            let mut s = ExperimentSpec::new(KernelKind::Stream);
            s.stream.nelems = vec![*nelems];
            s.stream.nthreads = vec![*nthreads];
            s
        }
        Cmd::Spmv {
            matrix,
            size,
            layout,
            spawn,
            nthreads,
        } => {
            let mut s = ExperimentSpec::new(KernelKind::Spmv);
            s.spmv.matrix = vec![matrix.clone()];
            s.spmv.size = vec![*size];
            s.spmv.layout = vec![*layout];
            s.spmv.spawn = vec![*spawn];
            s.spmv.grain = vec![GrainSpec::Dynamic(*nthreads)];
            s
        }
        Cmd::Bfs {
            graph_type,
            scale,
            edge_factor,
            algorithm,
        } => {
            let mut s = ExperimentSpec::new(KernelKind::Bfs);
            s.bfs.graph_type = vec![*graph_type];
            s.bfs.scale = vec![*scale];
            s.bfs.edge_factor = vec![*edge_factor];
            s.bfs.algorithm = vec![*algorithm];
            s
        }
        Cmd::Gsana {
            pair,
            layout,
            scheme,
            nthreads,
            k,
        } => {
            let mut s = ExperimentSpec::new(KernelKind::Gsana);
            s.gsana.pair = vec![pair.clone()];
            s.gsana.layout = vec![*layout];
            s.gsana.scheme = vec![*scheme];
            s.gsana.nthreads = vec![*nthreads];
            s.gsana.k = vec![*k];
            s
        }
    };
    if let Some(p) = &cli.machine {
        spec.machine.config = Some(std::fs::canonicalize(p)?);
    }
    if let Some(p) = cli.preset {
        spec.machine.preset = match p {
            PresetArg::SingleNode => Preset::SingleNode,
            PresetArg::MultiNode => Preset::MultiNode,
        };
    }
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if let Ok(v) = std::env::var("MIGRASIM_SEED") {
        spec.seed = v
            .trim()
            .parse()
            .map_err(|_| SimError::InvalidParam(format!("MIGRASIM_SEED `{v}` is not an integer")))?;
    }
    if cli.out.is_some() {
        spec.output = cli.out.clone();
    }
    Ok(spec)
}

fn run(cli: &Cli) -> SimResult<()> {
    let spec = build_spec(cli)?;
    let records = run_experiment(&spec)?;
    let text = if cli.json { to_json(&records)? } else { to_csv(&records)? };
    match &spec.output {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("migrasim: {e}");
            ExitCode::FAILURE
        }
    }
}
