//! Experiment runner: STREAM-triad baseline, parameter sweeps over the
//! kernels on fresh machines, and CSV/JSON reports.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bfs::{bfs_metrics, pick_root, run_bfs, BfsAlgorithm};
use crate::dds::StripedArray;
use crate::error::{SimError, SimResult};
use crate::graph::{gen_graph, kernel1_build, FlatGraph, GraphType, Kernel1Options};
use crate::gsana::{gen_aligned_pair, run_gsana, AlignedPair, GsanaConfig, LayoutMode, Scheme, DEFAULT_K};
use crate::machine::{Ctx, EventCounters, Machine, MachineConfig, NodeletId, Registers, SimTime, SpawnStrategy, WORD_BYTES};
use crate::spmv::{gen_laplacian, load_matrix_market, spmv_bandwidth, spmv_run, CsrMatrix, DistCsr, GrainSpec, LaplacianSpec, XLayout};

/// Scalar of the triad `a = b + s·c`.
pub const TRIAD_SCALAR: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct StreamResult {
    pub bandwidth: f64,
    pub time: SimTime,
    pub counters: EventCounters,
    /// Whether every `a[i]` equals `b[i] + s·c[i]`.
    pub verified: bool,
}

/// STREAM triad over arrays striped across `min(nthreads, P)` nodelets, each
/// thread touching only elements local to its nodelet. Bandwidth counts
/// three 8-byte words per element.
pub fn stream_triad(m: &mut Machine, nelems: u64, nthreads: u64) -> SimResult<StreamResult> {
    if nthreads == 0 || nelems < nthreads {
        return Err(SimError::InvalidParam(format!(
            "stream needs 1 <= nthreads <= nelems, got {nthreads} threads for {nelems} elements"
        )));
    }
    let width = (nthreads as usize).min(m.nodelets());
    let a = StripedArray::with_width(m, "stream.a", nelems, width)?;
    let b = StripedArray::with_width(m, "stream.b", nelems, width)?;
    let c = StripedArray::with_width(m, "stream.c", nelems, width)?;
    let bv: Vec<f64> = (0..nelems).map(|i| i as f64).collect();
    let cv: Vec<f64> = (0..nelems).map(|i| (2 * i + 1) as f64).collect();
    b.host_fill(m, &bv.iter().map(|x| x.to_bits()).collect::<Vec<_>>())?;
    c.host_fill(m, &cv.iter().map(|x| x.to_bits()).collect::<Vec<_>>())?;

    for t in 0..nthreads {
        let k = (t % width as u64) as usize;
        let on_nodelet = nthreads / width as u64 + u64::from((k as u64) < nthreads % width as u64);
        let rank = t / width as u64;
        let (a, b, c) = (a.clone(), b.clone(), c.clone());
        let mine: Vec<u64> = a
            .local_indices(NodeletId(k as u32))
            .skip(rank as usize)
            .step_by(on_nodelet as usize)
            .collect();
        m.spawn(NodeletId(k as u32), Registers::empty(), move |ctx: Ctx| async move {
            ctx.tag("triad");
            for i in mine {
                let x = f64::from_bits(b.get(&ctx, i).await?);
                let y = f64::from_bits(c.get(&ctx, i).await?);
                a.set(&ctx, i, (x + TRIAD_SCALAR * y).to_bits()).await?;
            }
            Ok(())
        })?;
    }
    let rep = m.run_region_measured()?;
    let got = a.host_to_vec(m)?;
    let verified = got
        .iter()
        .zip(bv.iter().zip(&cv))
        .all(|(&g, (x, y))| f64::from_bits(g) == x + TRIAD_SCALAR * y);
    let bandwidth = 3 * WORD_BYTES * nelems;
    Ok(StreamResult {
        bandwidth: bandwidth as f64 / rep.time.seconds,
        time: rep.time,
        counters: rep.counters,
        verified,
    })
}

fn peak_cache() -> &'static Mutex<HashMap<String, f64>> {
    static PEAKS: OnceLock<Mutex<HashMap<String, f64>>> = OnceLock::new();
    PEAKS.get_or_init(Default::default)
}

/// Measured triad bandwidth of `cfg` with one thread per nodelet, cached by
/// configuration hash.
pub fn stream_peak(cfg: &MachineConfig) -> SimResult<f64> {
    let key = cfg.config_hash();
    if let Some(&bw) = peak_cache().lock().expect("peak cache").get(&key) {
        return Ok(bw);
    }
    let mut m = Machine::new(cfg.clone())?;
    let p = m.nodelets() as u64;
    let bw = stream_triad(&mut m, 64 * p, p)?.bandwidth;
    peak_cache().lock().expect("peak cache").insert(key, bw);
    Ok(bw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Stream,
    Spmv,
    Bfs,
    Gsana,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    SingleNode,
    MultiNode,
}

/// Where the machine configuration comes from. A config file replaces the
/// preset; the topology fields override either.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineRef {
    pub preset: Preset,
    pub config: Option<PathBuf>,
    pub nodes: Option<u32>,
    pub nodelets_per_node: Option<u32>,
}

impl MachineRef {
    pub fn resolve(&self, base_dir: Option<&Path>) -> SimResult<MachineConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(p), _) => MachineConfig::from_kv_file(&resolve_path(p, base_dir))?,
            (None, Preset::SingleNode) => MachineConfig::single_node(),
            (None, Preset::MultiNode) => MachineConfig::multi_node(),
        };
        if let Some(n) = self.nodes {
            cfg.nodes = n;
        }
        if let Some(n) = self.nodelets_per_node {
            cfg.nodelets_per_node = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn resolve_path(p: &Path, base_dir: Option<&Path>) -> PathBuf {
    match base_dir {
        Some(d) if p.is_relative() => d.join(p),
        _ => p.to_path_buf(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamParams {
    pub nelems: Vec<u64>,
    pub nthreads: Vec<u64>,
}

impl Default for StreamParams {
    fn default() -> Self {
        Self {
            nelems: vec![1 << 14],
            nthreads: vec![8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpmvParams {
    /// `synth` for the 2D Laplacian or a Matrix Market path.
    pub matrix: Vec<String>,
    /// Laplacian grid side; ignored for files.
    pub size: Vec<u64>,
    pub layout: Vec<XLayout>,
    pub spawn: Vec<SpawnStrategy>,
    pub grain: Vec<GrainSpec>,
}

impl Default for SpmvParams {
    fn default() -> Self {
        Self {
            matrix: vec!["synth".into()],
            size: vec![32],
            layout: vec![XLayout::Replicated],
            spawn: vec![SpawnStrategy::Recursive],
            grain: vec![GrainSpec::default()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BfsParams {
    pub graph_type: Vec<GraphType>,
    pub scale: Vec<u32>,
    pub edge_factor: Vec<u64>,
    pub algorithm: Vec<BfsAlgorithm>,
}

impl Default for BfsParams {
    fn default() -> Self {
        Self {
            graph_type: vec![GraphType::Rmat],
            scale: vec![10],
            edge_factor: vec![16],
            algorithm: vec![BfsAlgorithm::RemoteWrites],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsanaParams {
    /// Vertex count of a generated pair, or a path to a pair in JSON.
    pub pair: Vec<String>,
    pub layout: Vec<LayoutMode>,
    pub scheme: Vec<Scheme>,
    /// Threadlet cap per nodelet.
    pub nthreads: Vec<u32>,
    pub k: Vec<usize>,
}

impl Default for GsanaParams {
    fn default() -> Self {
        Self {
            pair: vec!["512".into()],
            layout: vec![LayoutMode::Hcb],
            scheme: vec![Scheme::All],
            nthreads: vec![64],
            k: vec![DEFAULT_K],
        }
    }
}

/// A sweep over one kernel. Every list is a sweep axis; the points are
/// their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kernel: KernelKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub machine: MachineRef,
    /// Record host wall-clock per point. Never written to JSON.
    #[serde(default)]
    pub wall_clock: bool,
    #[serde(default)]
    pub stream: StreamParams,
    #[serde(default)]
    pub spmv: SpmvParams,
    #[serde(default)]
    pub bfs: BfsParams,
    #[serde(default)]
    pub gsana: GsanaParams,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(kernel: KernelKind) -> Self {
        Self {
            kernel,
            seed: 0,
            output: None,
            machine: MachineRef::default(),
            wall_clock: false,
            stream: StreamParams::default(),
            spmv: SpmvParams::default(),
            bfs: BfsParams::default(),
            gsana: GsanaParams::default(),
            base_dir: None,
        }
    }

    pub fn from_toml_str(text: &str) -> SimResult<Self> {
        toml::from_str(text).map_err(|e| SimError::InvalidParam(format!("bad experiment spec: {e}")))
    }

    pub fn from_json_str(text: &str) -> SimResult<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads JSON for `.json` files and TOML otherwise.
    pub fn load(path: &Path) -> SimResult<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut spec = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)?
        } else {
            Self::from_toml_str(&text)?
        };
        spec.base_dir = path.parent().map(Path::to_path_buf);
        Ok(spec)
    }

    /// Sweep points in a fixed order: the last axis varies fastest.
    pub fn expand(&self) -> SimResult<Vec<Point>> {
        fn nonempty<T>(name: &str, v: &[T]) -> SimResult<()> {
            if v.is_empty() {
                return Err(SimError::InvalidParam(format!("sweep list `{name}` is empty")));
            }
            Ok(())
        }
        let mut out = Vec::new();
        match self.kernel {
            KernelKind::Stream => {
                let s = &self.stream;
                nonempty("nelems", &s.nelems)?;
                nonempty("nthreads", &s.nthreads)?;
                for &nelems in &s.nelems {
                    for &nthreads in &s.nthreads {
                        out.push(Point::Stream { nelems, nthreads });
                    }
                }
            }
            KernelKind::Spmv => {
                let s = &self.spmv;
                nonempty("matrix", &s.matrix)?;
                nonempty("size", &s.size)?;
                nonempty("layout", &s.layout)?;
                nonempty("spawn", &s.spawn)?;
                nonempty("grain", &s.grain)?;
                for matrix in &s.matrix {
                    for &size in &s.size {
                        for &layout in &s.layout {
                            for &spawn in &s.spawn {
                                for &grain in &s.grain {
                                    out.push(Point::Spmv {
                                        matrix: matrix.clone(),
                                        size,
                                        layout,
                                        spawn,
                                        grain,
                                    });
                                }
                            }
                        }
                    }
                }
            }
            KernelKind::Bfs => {
                let s = &self.bfs;
                nonempty("graph_type", &s.graph_type)?;
                nonempty("scale", &s.scale)?;
                nonempty("edge_factor", &s.edge_factor)?;
                nonempty("algorithm", &s.algorithm)?;
                for &graph_type in &s.graph_type {
                    for &scale in &s.scale {
                        for &edge_factor in &s.edge_factor {
                            for &algorithm in &s.algorithm {
                                out.push(Point::Bfs {
                                    graph_type,
                                    scale,
                                    edge_factor,
                                    algorithm,
                                });
                            }
                        }
                    }
                }
            }
            KernelKind::Gsana => {
                let s = &self.gsana;
                nonempty("pair", &s.pair)?;
                nonempty("layout", &s.layout)?;
                nonempty("scheme", &s.scheme)?;
                nonempty("nthreads", &s.nthreads)?;
                nonempty("k", &s.k)?;
                for pair in &s.pair {
                    for &layout in &s.layout {
                        for &scheme in &s.scheme {
                            for &nthreads in &s.nthreads {
                                for &k in &s.k {
                                    out.push(Point::Gsana {
                                        pair: pair.clone(),
                                        layout,
                                        scheme,
                                        nthreads,
                                        k,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One concrete parameter combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "lowercase")]
pub enum Point {
    Stream {
        nelems: u64,
        nthreads: u64,
    },
    Spmv {
        matrix: String,
        size: u64,
        layout: XLayout,
        spawn: SpawnStrategy,
        grain: GrainSpec,
    },
    Bfs {
        graph_type: GraphType,
        scale: u32,
        edge_factor: u64,
        algorithm: BfsAlgorithm,
    },
    Gsana {
        pair: String,
        layout: LayoutMode,
        scheme: Scheme,
        nthreads: u32,
        k: usize,
    },
}

impl Point {
    pub fn kernel(&self) -> KernelKind {
        match self {
            Point::Stream { .. } => KernelKind::Stream,
            Point::Spmv { .. } => KernelKind::Spmv,
            Point::Bfs { .. } => KernelKind::Bfs,
            Point::Gsana { .. } => KernelKind::Gsana,
        }
    }

    /// `key=value` pairs joined by `;`, kernel excluded.
    pub fn params_string(&self) -> String {
        let v = serde_json::to_value(self).expect("point serialises");
        let obj = v.as_object().expect("points are objects");
        obj.iter()
            .filter(|(k, _)| k.as_str() != "kernel")
            .map(|(k, v)| match v {
                serde_json::Value::String(s) => format!("{k}={s}"),
                other => format!("{k}={other}"),
            })
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Precondition checks that need no machine.
    pub fn validate(&self, base_dir: Option<&Path>) -> SimResult<()> {
        let bad = |msg: String| Err(SimError::InvalidParam(msg));
        match self {
            Point::Stream { nelems, nthreads } => {
                if *nthreads == 0 || nelems < nthreads {
                    return bad(format!("stream needs 1 <= nthreads <= nelems, got {nthreads} and {nelems}"));
                }
            }
            Point::Spmv { matrix, size, grain, .. } => {
                grain.grain(1)?;
                if matrix == "synth" {
                    if *size == 0 {
                        return bad("Laplacian size must be at least 1".into());
                    }
                } else if !resolve_path(Path::new(matrix), base_dir).is_file() {
                    return bad(format!("matrix file `{matrix}` not found"));
                }
            }
            Point::Bfs { scale, edge_factor, .. } => {
                if !(1..=30).contains(scale) || *edge_factor == 0 {
                    return bad(format!(
                        "bfs needs scale in 1..=30 and edge_factor >= 1, got {scale} and {edge_factor}"
                    ));
                }
            }
            Point::Gsana { pair, nthreads, k, .. } => {
                if *nthreads == 0 || *k == 0 {
                    return bad("gsana needs nthreads >= 1 and k >= 1".into());
                }
                match pair.parse::<u64>() {
                    Ok(n) if n < 2 => return bad(format!("pair size {n} below 2")),
                    Ok(_) => {}
                    Err(_) if !resolve_path(Path::new(pair), base_dir).is_file() => return bad(format!("pair file `{pair}` not found")),
                    Err(_) => {}
                }
            }
        }
        Ok(())
    }

    /// The machine this point runs on.
    pub fn machine_config(&self, base: &MachineConfig, seed: u64) -> MachineConfig {
        let mut cfg = base.clone();
        cfg.seed = seed;
        if let Point::Gsana { nthreads, .. } = self {
            cfg.max_threadlets_per_nodelet = *nthreads;
        }
        cfg
    }

    fn run(&self, cfg: &MachineConfig, seed: u64, base_dir: Option<&Path>) -> SimResult<Outcome> {
        let mut m = Machine::new(cfg.clone())?;
        match self {
            Point::Stream { nelems, nthreads } => {
                let r = stream_triad(&mut m, *nelems, *nthreads)?;
                Ok(Outcome::new(r.time, r.counters, r.bandwidth))
            }
            Point::Spmv {
                matrix,
                size,
                layout,
                spawn,
                grain,
            } => {
                let a: CsrMatrix = if matrix == "synth" {
                    gen_laplacian(LaplacianSpec::new(*size as usize))?
                } else {
                    load_matrix_market(&resolve_path(Path::new(matrix), base_dir))?
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x: Vec<f64> = (0..a.ncols).map(|_| rng.random()).collect();
                let dist = DistCsr::distribute(&mut m, &a)?;
                let r = spmv_run(&mut m, &dist, &x, *layout, *grain, *spawn)?;
                let bw = spmv_bandwidth(a.nrows, a.ncols, a.nnz(), r.report.time.seconds)?;
                Ok(Outcome::new(r.report.time, r.report.counters, bw))
            }
            Point::Bfs {
                graph_type,
                scale,
                edge_factor,
                algorithm,
            } => {
                let el = gen_graph(*graph_type, *scale, *edge_factor, seed)?;
                let flat = FlatGraph::from_edge_list(&el);
                let root = pick_root(&flat, seed);
                let (g, _) = kernel1_build(&mut m, &el, &Kernel1Options::default())?;
                let r = run_bfs(&mut m, &g, root, *algorithm)?;
                let (teps, bw) = bfs_metrics(*scale, *edge_factor, r.time.seconds)?;
                let mut o = Outcome::new(r.time, r.counters, bw);
                o.teps = Some(teps);
                Ok(o)
            }
            Point::Gsana {
                pair, layout, scheme, k, ..
            } => {
                let p: AlignedPair = match pair.parse::<u64>() {
                    Ok(n) => gen_aligned_pair(n, seed)?,
                    Err(_) => serde_json::from_str(&std::fs::read_to_string(resolve_path(Path::new(pair), base_dir))?)?,
                };
                let gcfg = GsanaConfig {
                    k: *k,
                    layout: *layout,
                    scheme: *scheme,
                    seed,
                    ..GsanaConfig::default()
                };
                let r = run_gsana(&mut m, &p.g1, &p.g2, &gcfg)?;
                let bw = r.bandwidth()?;
                Ok(Outcome::new(r.time, r.counters, bw))
            }
        }
    }
}

struct Outcome {
    time: SimTime,
    counters: EventCounters,
    bandwidth: f64,
    teps: Option<f64>,
}

impl Outcome {
    fn new(time: SimTime, counters: EventCounters, bandwidth: f64) -> Self {
        Self {
            time,
            counters,
            bandwidth,
            teps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub bandwidth_bytes_per_s: f64,
    pub teps: Option<f64>,
    pub stream_peak_bytes_per_s: f64,
    pub pct_of_stream_peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub point: Point,
    pub seed: u64,
    pub config_hash: String,
    pub time: SimTime,
    pub metrics: Metrics,
    pub counters: EventCounters,
    #[serde(skip)]
    pub wall_seconds: Option<f64>,
}

/// Runs one point on a fresh machine.
pub fn run_point(
    index: usize,
    point: &Point,
    base: &MachineConfig,
    seed: u64,
    base_dir: Option<&Path>,
    wall_clock: bool,
) -> SimResult<RunRecord> {
    let wrap = |e: SimError| SimError::Sweep {
        index,
        point: point.params_string(),
        source: Box::new(e),
    };
    let cfg = point.machine_config(base, seed);
    let t0 = Instant::now();
    let o = point.run(&cfg, seed, base_dir).map_err(wrap)?;
    let wall = t0.elapsed().as_secs_f64();
    let peak = stream_peak(&cfg).map_err(wrap)?;
    Ok(RunRecord {
        index,
        point: point.clone(),
        seed,
        config_hash: cfg.config_hash(),
        time: o.time,
        metrics: Metrics {
            bandwidth_bytes_per_s: o.bandwidth,
            teps: o.teps,
            stream_peak_bytes_per_s: peak,
            pct_of_stream_peak: 100.0 * o.bandwidth / peak,
        },
        counters: o.counters,
        wall_seconds: wall_clock.then_some(wall),
    })
}

/// Validates every point, then runs them in parallel; records come back in
/// sweep order.
pub fn run_experiment(spec: &ExperimentSpec) -> SimResult<Vec<RunRecord>> {
    let base_dir = spec.base_dir.as_deref();
    let base = spec.machine.resolve(base_dir)?;
    let points = spec.expand()?;
    for (i, p) in points.iter().enumerate() {
        p.validate(base_dir).map_err(|e| SimError::Sweep {
            index: i,
            point: p.params_string(),
            source: Box::new(e),
        })?;
    }
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| run_point(i, p, &base, spec.seed, base_dir, spec.wall_clock))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Fixed CSV header: sweep fields, metrics, then counter totals.
pub const CSV_HEADER: [&str; 20] = [
    "index",
    "kernel",
    "params",
    "seed",
    "config_hash",
    "makespan_cycles",
    "seconds",
    "bandwidth_bytes_per_s",
    "teps",
    "pct_of_stream_peak",
    "local_reads",
    "local_writes",
    "atomics",
    "remote_writes_issued",
    "migrations_out",
    "migrations_in",
    "inter_node_migrations",
    "spawns",
    "stack_return_migrations",
    "peak_threadlets",
];

pub fn to_csv(records: &[RunRecord]) -> SimResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| SimError::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        let t = r.counters.totals();
        let kernel = serde_json::to_value(r.point.kernel())?;
        let row = [
            r.index.to_string(),
            kernel.as_str().unwrap_or_default().to_string(),
            r.point.params_string(),
            r.seed.to_string(),
            r.config_hash.clone(),
            r.time.makespan_cycles.to_string(),
            r.time.seconds.to_string(),
            r.metrics.bandwidth_bytes_per_s.to_string(),
            r.metrics.teps.map(|t| t.to_string()).unwrap_or_default(),
            r.metrics.pct_of_stream_peak.to_string(),
            t.local_reads.to_string(),
            t.local_writes.to_string(),
            t.atomics.to_string(),
            t.remote_writes_issued.to_string(),
            t.migrations_out.to_string(),
            t.migrations_in.to_string(),
            t.inter_node_migrations.to_string(),
            t.spawns.to_string(),
            t.stack_return_migrations.to_string(),
            t.peak_threadlets.to_string(),
        ];
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn to_json(records: &[RunRecord]) -> SimResult<String> {
    Ok(serde_json::to_string_pretty(records)?)
}

pub fn emit_report(records: &[RunRecord], format: ReportFormat, path: &Path) -> SimResult<()> {
    let text = match format {
        ReportFormat::Csv => to_csv(records)?,
        ReportFormat::Json => to_json(records)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::CostTable;

    fn cfg(p: u32) -> MachineConfig {
        MachineConfig::with_nodelets(p)
    }

    #[test]
    fn triad_cycle_arithmetic() {
        let mut m = Machine::new(cfg(8)).unwrap();
        let r = stream_triad(&mut m, 64, 8).unwrap();
        assert!(r.verified);
        assert_eq!(r.time.makespan_cycles, 24);
        assert!(r.counters.nodelets.iter().all(|n| n.busy_cycles == 24));
        assert_eq!(r.counters.migrations(), 0);

        let mut m = Machine::new(cfg(8)).unwrap();
        let r = stream_triad(&mut m, 64, 4).unwrap();
        assert_eq!(r.time.makespan_cycles, 48);
        assert_eq!(r.counters.migrations(), 0);
        assert!(r.counters.nodelets[4..].iter().all(|n| n.busy_cycles == 0));
    }

    #[test]
    fn triad_with_more_threads_than_nodelets() {
        let mut m = Machine::new(cfg(4)).unwrap();
        let r = stream_triad(&mut m, 103, 9).unwrap();
        assert!(r.verified);
        assert_eq!(r.counters.migrations(), 0);
        assert_eq!(r.counters.totals().local_reads, 206);
        let mut m = Machine::new(cfg(4)).unwrap();
        assert!(stream_triad(&mut m, 3, 4).is_err());
    }

    #[test]
    fn peak_follows_config_hash() {
        let a = stream_peak(&cfg(8)).unwrap();
        assert_eq!(a, 8.0 * 8.0 * 175e6);
        let mut slow = cfg(8);
        slow.cost_table = CostTable {
            local_read: 2,
            ..CostTable::default()
        };
        assert!(stream_peak(&slow).unwrap() < a);
    }

    #[test]
    fn spmv_sweep_expands_to_four() {
        let spec = ExperimentSpec::from_toml_str(
            r#"
kernel = "spmv"
seed = 3
[machine]
preset = "single_node"
[spmv]
size = [8]
grain = ["16", "dynamic-256"]
layout = ["replicated", "striped"]
"#,
        )
        .unwrap();
        let recs = run_experiment(&spec).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs.iter().map(|r| r.index).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(to_json(&recs).unwrap(), to_json(&run_experiment(&spec).unwrap()).unwrap());
        let csv = to_csv(&recs).unwrap();
        assert!(csv.starts_with("index,kernel,params,"));
        assert_eq!(csv.lines().count(), 5);
        for r in &recs {
            assert!(r.metrics.pct_of_stream_peak > 0.0);
            assert_eq!(
                r.config_hash,
                r.point.machine_config(&MachineConfig::single_node(), 3).config_hash()
            );
        }
    }

    #[test]
    fn reordering_points_keeps_records() {
        let base = MachineConfig::single_node();
        let a = Point::Stream { nelems: 256, nthreads: 8 };
        let b = Point::Spmv {
            matrix: "synth".into(),
            size: 6,
            layout: XLayout::Striped,
            spawn: SpawnStrategy::Serial,
            grain: GrainSpec::Fixed(4),
        };
        let ra = run_point(0, &a, &base, 1, None, false).unwrap();
        let rb = run_point(1, &b, &base, 1, None, false).unwrap();
        let rb2 = run_point(0, &b, &base, 1, None, false).unwrap();
        let ra2 = run_point(1, &a, &base, 1, None, false).unwrap();
        assert_eq!((ra.time, &ra.counters), (ra2.time, &ra2.counters));
        assert_eq!((rb.time, &rb.counters), (rb2.time, &rb2.counters));
    }

    #[test]
    fn invalid_points_are_rejected_before_running() {
        let mut spec = ExperimentSpec::new(KernelKind::Stream);
        spec.stream.nthreads = vec![8, 0];
        match run_experiment(&spec).unwrap_err() {
            SimError::Sweep { index, .. } => assert_eq!(index, 1),
            e => panic!("{e}"),
        }
        spec.stream.nthreads.clear();
        assert!(spec.expand().is_err());
        assert!(ExperimentSpec::from_toml_str("kernel = \"bfs\"\nbogus = 1\n").is_err());
        assert!(ExperimentSpec::from_json_str(r#"{"kernel":"warp"}"#).is_err());
    }

    #[test]
    fn wall_clock_never_reaches_json() {
        let mut spec = ExperimentSpec::new(KernelKind::Stream);
        spec.stream.nelems = vec![64];
        spec.wall_clock = true;
        let recs = run_experiment(&spec).unwrap();
        assert!(recs[0].wall_seconds.is_some());
        assert!(!to_json(&recs).unwrap().contains("wall"));
    }

    #[test]
    fn unwritable_output_is_an_io_error() {
        let recs = run_experiment(&ExperimentSpec::new(KernelKind::Stream)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("missing").join("out.csv");
        assert!(matches!(emit_report(&recs, ReportFormat::Csv, &bad), Err(SimError::Io(_))));
        let good = dir.path().join("out.json");
        emit_report(&recs, ReportFormat::Json, &good).unwrap();
        let back: Vec<RunRecord> = serde_json::from_str(&std::fs::read_to_string(good).unwrap()).unwrap();
        assert_eq!(back, recs);
    }
}
