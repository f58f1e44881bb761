//! Edge-block adjacency graph, its parallel construction from an edge list,
//! and the RMAT / Erdős–Rényi generators.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dds::{EdgeBlockPool, StripedArray, DEFAULT_BLOCK_CAPACITY};
use crate::error::{SimError, SimResult};
use crate::machine::{Ctx, GlobalAddress, Machine, NodeletId, Registers, RunReport, Word, NIL};

pub const DEFAULT_EDGE_FACTOR: u64 = 16;

/// Quadrant probabilities of the recursive RMAT sampler.
pub const RMAT_ABCD: [f64; 4] = [0.57, 0.19, 0.19, 0.05];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeList {
    pub scale: u32,
    pub edge_factor: u64,
    pub edges: Vec<(u64, u64)>,
}

impl EdgeList {
    pub fn nvertices(&self) -> u64 {
        1 << self.scale
    }

    pub fn self_loops(&self) -> usize {
        self.edges.iter().filter(|(s, d)| s == d).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphType {
    Rmat,
    Er,
}

impl FromStr for GraphType {
    type Err = SimError;
    fn from_str(s: &str) -> SimResult<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rmat" => Ok(Self::Rmat),
            "er" => Ok(Self::Er),
            _ => Err(SimError::InvalidParam(format!("unknown graph type `{s}`"))),
        }
    }
}

impl fmt::Display for GraphType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rmat => "rmat",
            Self::Er => "er",
        })
    }
}

fn check_scale(scale: u32) -> SimResult<()> {
    if !(1..=40).contains(&scale) {
        return Err(SimError::InvalidParam(format!("scale {scale} outside 1..=40")));
    }
    Ok(())
}

/// `edge_factor * 2^scale` edges from recursive quadrant sampling.
pub fn gen_rmat(scale: u32, edge_factor: u64, seed: u64) -> SimResult<EdgeList> {
    check_scale(scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [a, b, c, _] = RMAT_ABCD;
    let m = edge_factor << scale;
    let mut edges = Vec::with_capacity(m as usize);
    for _ in 0..m {
        let (mut s, mut d) = (0u64, 0u64);
        for _ in 0..scale {
            let r: f64 = rng.random();
            let (sb, db) = if r < a {
                (0, 0)
            } else if r < a + b {
                (0, 1)
            } else if r < a + b + c {
                (1, 0)
            } else {
                (1, 1)
            };
            s = (s << 1) | sb;
            d = (d << 1) | db;
        }
        edges.push((s, d));
    }
    Ok(EdgeList { scale, edge_factor, edges })
}

/// `edge_factor * 2^scale` edges with uniformly random endpoints.
pub fn gen_er(scale: u32, edge_factor: u64, seed: u64) -> SimResult<EdgeList> {
    check_scale(scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1u64 << scale;
    let edges = (0..edge_factor << scale)
        .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
        .collect();
    Ok(EdgeList { scale, edge_factor, edges })
}

pub fn gen_graph(kind: GraphType, scale: u32, edge_factor: u64, seed: u64) -> SimResult<EdgeList> {
    match kind {
        GraphType::Rmat => gen_rmat(scale, edge_factor, seed),
        GraphType::Er => gen_er(scale, edge_factor, seed),
    }
}

/// Writes the edges as little-endian `(u64 src, u64 dst)` pairs.
pub fn write_edge_list(path: &Path, el: &EdgeList) -> SimResult<()> {
    let mut buf = Vec::with_capacity(el.edges.len() * 16);
    for &(s, d) in &el.edges {
        buf.extend_from_slice(&s.to_le_bytes());
        buf.extend_from_slice(&d.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

/// Reads pairs written by [`write_edge_list`]. The edge factor is recovered
/// from the edge count.
pub fn read_edge_list(path: &Path, scale: u32) -> SimResult<EdgeList> {
    check_scale(scale)?;
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() % 16 != 0 {
        return Err(SimError::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("{} bytes is not a whole number of edges", buf.len()),
        });
    }
    let n = 1u64 << scale;
    let word = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8-byte chunk"));
    let mut edges = Vec::with_capacity(buf.len() / 16);
    for (k, pair) in buf.chunks_exact(16).enumerate() {
        let (s, d) = (word(&pair[..8]), word(&pair[8..]));
        if s >= n || d >= n {
            return Err(SimError::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                msg: format!("edge ({s}, {d}) outside scale {scale}"),
            });
        }
        edges.push((s, d));
    }
    Ok(EdgeList {
        scale,
        edge_factor: edges.len() as u64 / n,
        edges,
    })
}

/// Plain host adjacency with the same content as a built [`BlockGraph`]:
/// both directions, self-loops dropped, duplicates kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatGraph {
    pub adj: Vec<Vec<u64>>,
}

impl FlatGraph {
    pub fn from_edge_list(el: &EdgeList) -> Self {
        let mut adj = vec![Vec::new(); el.nvertices() as usize];
        for &(s, d) in &el.edges {
            if s != d {
                adj[s as usize].push(d);
                adj[d as usize].push(s);
            }
        }
        Self { adj }
    }

    pub fn nvertices(&self) -> usize {
        self.adj.len()
    }

    pub fn has_edge(&self, u: u64, v: u64) -> bool {
        self.adj[u as usize].contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kernel1Options {
    pub block_capacity: u64,
    /// Blocks per nodelet pool; `None` sizes every pool at
    /// `2 * edge_factor * 2^scale / P`.
    pub pool_blocks: Option<Vec<u64>>,
}

impl Default for Kernel1Options {
    fn default() -> Self {
        Self {
            block_capacity: DEFAULT_BLOCK_CAPACITY,
            pool_blocks: None,
        }
    }
}

/// Per-vertex chains of edge blocks. Head, tail and degree arrays are
/// striped, so vertex `v` is owned by nodelet `v mod P`.
#[derive(Debug, Clone)]
pub struct BlockGraph {
    pub nvertices: u64,
    pub heads: StripedArray,
    pub tails: StripedArray,
    pub degrees: StripedArray,
    pub pool: EdgeBlockPool,
}

#[derive(Debug, Clone)]
pub struct Kernel1Stats {
    /// Counters of the count, scatter and insert regions together.
    pub report: RunReport,
    /// Directed edges delivered to each nodelet by the scatter.
    pub scattered: Vec<u64>,
    /// Delivered edges whose source is owned by another nodelet.
    pub misplaced: u64,
}

/// Builds the graph from an edge list staged on nodelet 0: a counting pass,
/// a scatter of each low-bits group to its owner with remote writes, then one
/// insertion threadlet per nodelet.
pub fn kernel1_build(m: &mut Machine, el: &EdgeList, opts: &Kernel1Options) -> SimResult<(BlockGraph, Kernel1Stats)> {
    let p = m.nodelets();
    let n = el.nvertices();
    let nedges = el.edges.len() as u64;
    if let Some(&(s, d)) = el.edges.iter().find(|&&(s, d)| s >= n || d >= n) {
        return Err(SimError::InvalidParam(format!("edge ({s}, {d}) outside {n} vertices")));
    }

    let pool_blocks = match &opts.pool_blocks {
        Some(b) if b.len() != p => {
            return Err(SimError::InvalidParam(format!("{} pool sizes for {p} nodelets", b.len())));
        }
        Some(b) => b.clone(),
        None => vec![(2 * el.edge_factor * n).div_ceil(p as u64).max(1); p],
    };
    let pool = EdgeBlockPool::new(m, "graph.blocks", opts.block_capacity, &pool_blocks)?;
    let heads = StripedArray::new(m, "graph.heads", n)?;
    let tails = StripedArray::new(m, "graph.tails", n)?;
    let degrees = StripedArray::new(m, "graph.degrees", n)?;
    heads.host_fill_value(m, NIL)?;
    tails.host_fill_value(m, NIL)?;

    let mut staged = vec![0u64; p];
    staged[0] = 2 * nedges;
    let stage = m.alloc("k1.staged", &staged)?[0];
    for (k, &(s, d)) in el.edges.iter().enumerate() {
        m.host_write(stage.add_words(2 * k as u64), s)?;
        m.host_write(stage.add_words(2 * k as u64 + 1), d)?;
    }
    let mut counts_words = vec![0u64; p];
    counts_words[0] = p as u64;
    let counts_at = m.alloc("k1.counts", &counts_words)?[0];

    let before = m.report();
    let pw = p as u64;
    m.spawn(NodeletId(0), Registers::empty(), move |ctx| async move {
        ctx.tag("k1_count");
        let mut counts = vec![0u64; pw as usize];
        for k in 0..nedges {
            let s = ctx.read(stage.add_words(2 * k)).await?;
            let d = ctx.read(stage.add_words(2 * k + 1)).await?;
            if s != d {
                counts[(s % pw) as usize] += 1;
                counts[(d % pw) as usize] += 1;
            }
        }
        for (i, c) in counts.into_iter().enumerate() {
            ctx.write(counts_at.add_words(i as u64), c).await?;
        }
        Ok(())
    })?;
    m.run_region()?;

    let scattered: Vec<u64> = (0..pw).map(|i| m.host_read(counts_at.add_words(i))).collect::<SimResult<_>>()?;
    let recv_words: Vec<u64> = scattered.iter().map(|c| 2 * c).collect();
    let recv: std::sync::Arc<[GlobalAddress]> = m.alloc("k1.recv", &recv_words)?.into();

    let r = recv.clone();
    m.spawn(NodeletId(0), Registers::empty(), move |ctx| async move {
        ctx.tag("k1_scatter");
        let mut cursor = vec![0u64; pw as usize];
        for k in 0..nedges {
            let s = ctx.read(stage.add_words(2 * k)).await?;
            let d = ctx.read(stage.add_words(2 * k + 1)).await?;
            if s == d {
                continue;
            }
            for (a, b) in [(s, d), (d, s)] {
                let g = (a % pw) as usize;
                let at = r[g].add_words(2 * cursor[g]);
                ctx.remote_write(at, a).await?;
                ctx.remote_write(at.add_words(1), b).await?;
                cursor[g] += 1;
            }
        }
        Ok(())
    })?;
    m.run_region()?;

    let mut misplaced = 0;
    for (g, &c) in scattered.iter().enumerate() {
        for k in 0..c {
            if m.host_read(recv[g].add_words(2 * k))? % pw != g as u64 {
                misplaced += 1;
            }
        }
    }

    let graph = BlockGraph {
        nvertices: n,
        heads,
        tails,
        degrees,
        pool,
    };
    for (g, &c) in scattered.iter().enumerate() {
        let (gr, buf) = (graph.clone(), recv[g]);
        m.spawn(NodeletId(g as u32), Registers::new(&[c])?, move |ctx| async move {
            ctx.tag("k1_insert");
            for k in 0..ctx.reg(0) {
                let s = ctx.read(buf.add_words(2 * k)).await?;
                let d = ctx.read(buf.add_words(2 * k + 1)).await?;
                gr.insert(&ctx, s, d).await?;
            }
            Ok(())
        })?;
    }
    m.run_region()?;
    let report = m.report().since(&before, m.config().clock_hz);
    Ok((
        graph,
        Kernel1Stats {
            report,
            scattered,
            misplaced,
        },
    ))
}

impl BlockGraph {
    pub fn home(&self, v: u64) -> NodeletId {
        self.heads.home(v)
    }

    /// Appends `d` to `s`'s chain, opening a new block when the tail is
    /// full. Only the owner of `s` may call this.
    async fn insert(&self, ctx: &Ctx, s: u64, d: u64) -> SimResult<()> {
        let cap = self.pool.capacity();
        let tail = GlobalAddress::from_word(self.tails.get(ctx, s).await?);
        let mut appended = false;
        if let Some(b) = tail {
            let used = ctx.read(EdgeBlockPool::used_addr(b)).await?;
            if used < cap {
                ctx.write(EdgeBlockPool::id_addr(b, used), d).await?;
                ctx.write(EdgeBlockPool::used_addr(b), used + 1).await?;
                appended = true;
            }
        }
        if !appended {
            let nb = self.pool.alloc_block(self.home(s))?;
            ctx.write(EdgeBlockPool::id_addr(nb, 0), d).await?;
            ctx.write(EdgeBlockPool::used_addr(nb), 1).await?;
            match tail {
                Some(b) => ctx.write(EdgeBlockPool::next_addr(b), nb.to_word()).await?,
                None => self.heads.set(ctx, s, nb.to_word()).await?,
            }
            self.tails.set(ctx, s, nb.to_word()).await?;
        }
        let deg = self.degrees.get(ctx, s).await?;
        self.degrees.set(ctx, s, deg + 1).await
    }

    /// Starts a charged walk over `v`'s neighbours.
    pub async fn cursor(&self, ctx: &Ctx, v: u64) -> SimResult<ChainCursor> {
        let head = GlobalAddress::from_word(self.heads.get(ctx, v).await?);
        let used = match head {
            Some(b) => ctx.read(EdgeBlockPool::used_addr(b)).await?,
            None => 0,
        };
        Ok(ChainCursor {
            vertex: v,
            block: head,
            used,
            idx: 0,
            visited: usize::from(head.is_some()),
            bound: self.pool.total_blocks() as usize,
        })
    }

    /// Every neighbour of `v` through charged reads.
    pub async fn neighbors(&self, ctx: &Ctx, v: u64) -> SimResult<Vec<u64>> {
        let mut c = self.cursor(ctx, v).await?;
        let mut out = Vec::new();
        while let Some(d) = c.next(ctx).await? {
            out.push(d);
        }
        Ok(out)
    }

    /// Uncharged walk for checking results.
    pub fn host_neighbors(&self, m: &Machine, v: u64) -> SimResult<Vec<u64>> {
        let mut out = Vec::new();
        let mut block = GlobalAddress::from_word(self.heads.host_get(m, v)?);
        let mut visited = 0;
        while let Some(b) = block {
            visited += 1;
            if visited > self.pool.total_blocks() as usize {
                return Err(SimError::CorruptChain {
                    vertex: v,
                    bound: self.pool.total_blocks() as usize,
                });
            }
            let used = m.host_read(EdgeBlockPool::used_addr(b))?;
            for j in 0..used {
                out.push(m.host_read(EdgeBlockPool::id_addr(b, j))?);
            }
            block = GlobalAddress::from_word(m.host_read(EdgeBlockPool::next_addr(b))?);
        }
        Ok(out)
    }

    /// Blocks in `v`'s chain with their homes.
    pub fn host_chain(&self, m: &Machine, v: u64) -> SimResult<Vec<NodeletId>> {
        let mut out = Vec::new();
        let mut block = GlobalAddress::from_word(self.heads.host_get(m, v)?);
        while let Some(b) = block {
            out.push(b.nodelet);
            if out.len() > self.pool.total_blocks() as usize {
                return Err(SimError::CorruptChain {
                    vertex: v,
                    bound: self.pool.total_blocks() as usize,
                });
            }
            block = GlobalAddress::from_word(m.host_read(EdgeBlockPool::next_addr(b))?);
        }
        Ok(out)
    }

    pub fn host_degree(&self, m: &Machine, v: u64) -> SimResult<Word> {
        self.degrees.host_get(m, v)
    }
}

/// Position in a vertex's block chain. Each step is a charged read at the
/// current block's home.
#[derive(Debug, Clone)]
pub struct ChainCursor {
    vertex: u64,
    block: Option<GlobalAddress>,
    used: u64,
    idx: u64,
    visited: usize,
    bound: usize,
}

impl ChainCursor {
    pub async fn next(&mut self, ctx: &Ctx) -> SimResult<Option<u64>> {
        loop {
            let Some(b) = self.block else {
                return Ok(None);
            };
            if self.idx < self.used {
                let id = ctx.read(EdgeBlockPool::id_addr(b, self.idx)).await?;
                self.idx += 1;
                return Ok(Some(id));
            }
            self.block = GlobalAddress::from_word(ctx.read(EdgeBlockPool::next_addr(b)).await?);
            self.idx = 0;
            if let Some(nb) = self.block {
                self.visited += 1;
                if self.visited > self.bound {
                    return Err(SimError::CorruptChain {
                        vertex: self.vertex,
                        bound: self.bound,
                    });
                }
                self.used = ctx.read(EdgeBlockPool::used_addr(nb)).await?;
            }
        }
    }
}
