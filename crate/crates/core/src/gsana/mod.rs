//! The similarity stage of a graph aligner: vertices of two graphs are
//! placed in the unit square, bucketed by a quad-tree, and every vertex of
//! the second graph is scored against the first graph's vertices in
//! neighbouring buckets, keeping its `k` best candidates.

pub mod gen;
pub mod graph;
pub mod layout;
pub mod sim;
pub mod space;

#[cfg(test)]
mod tests;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gen::{gen_aligned_pair, gen_aligned_pair_with, AlignedPair, Perturbation};
pub use graph::{rw_count, sigma, AttributedGraph, SimilarityWeights, VertexMeta};
pub use layout::{assign_layout, LayoutAssignment, LayoutMode};
pub use sim::{parallel_sim, GsanaResult, SimInput, TaskStat};
pub use space::{build_quadtree, hilbert_rank, place_vertices, PlacedVertex, QuadTree, Rect};

use crate::error::{SimError, SimResult};
use crate::machine::{Machine, WORD_BYTES};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// One task per bucket.
    All,
    /// One sub-task per bucket pair, merged by a per-bucket parent.
    Pair,
}

impl FromStr for Scheme {
    type Err = SimError;
    fn from_str(s: &str) -> SimResult<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" | "0" => Ok(Self::All),
            "pair" | "1" => Ok(Self::Pair),
            _ => Err(SimError::InvalidParam(format!("unknown scheme `{s}`, expected all or pair"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::All => "all",
            Self::Pair => "pair",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u64,
    pub score: f64,
}

impl Candidate {
    /// Higher score first, then lower id.
    pub fn ranks_before(&self, other: &Candidate) -> bool {
        self.cmp_rank(other) == Ordering::Less
    }

    pub fn cmp_rank(&self, other: &Candidate) -> Ordering {
        other.score.total_cmp(&self.score).then(self.id.cmp(&other.id))
    }
}

/// Best candidates of every vertex of the second graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKList {
    pub lists: Vec<Vec<Candidate>>,
}

impl TopKList {
    pub fn get(&self, v: u64) -> &[Candidate] {
        &self.lists[v as usize]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("top-k serialises")
    }
}

/// Bucket size of the reference pairs for `n` vertices.
pub fn bucket_capacity_for(n: u64) -> usize {
    match n {
        0..=1024 => 32,
        1025..=4096 => 64,
        4097..=16384 => 128,
        _ => 256,
    }
}

/// Compulsory bytes of the similarity stage.
pub fn bandwidth_bytes(tasks: &[TaskStat]) -> u64 {
    tasks.iter().map(TaskStat::words).sum::<u64>() * WORD_BYTES
}

pub fn gsana_bandwidth(tasks: &[TaskStat], seconds: f64) -> SimResult<f64> {
    if seconds.is_nan() || seconds <= 0.0 {
        return Err(SimError::InvalidParam(format!("time must be positive, got {seconds}")));
    }
    Ok(bandwidth_bytes(tasks) as f64 / seconds)
}

/// Places, buckets and lays out both graphs for a machine of `p` nodelets.
pub fn prepare(g1: &AttributedGraph, g2: &AttributedGraph, bucket_capacity: usize, mode: LayoutMode, p: usize) -> SimResult<SimInput> {
    if g1.nvertices() == 0 || g2.nvertices() == 0 {
        return Err(SimError::InvalidParam("both graphs need at least one vertex".into()));
    }
    let qt1 = build_quadtree(&place_vertices(g1), bucket_capacity)?;
    let qt2 = build_quadtree(&place_vertices(g2), bucket_capacity)?;
    let layout1 = assign_layout(&qt1, &g1.degrees(), mode, p)?;
    let layout2 = assign_layout(&qt2, &g2.degrees(), mode, p)?;
    Ok(SimInput {
        g1: g1.clone(),
        g2: g2.clone(),
        qt1,
        qt2,
        layout1,
        layout2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GsanaConfig {
    pub k: usize,
    pub weights: SimilarityWeights,
    /// Derived from the vertex count when absent.
    pub bucket_capacity: Option<usize>,
    pub layout: LayoutMode,
    pub scheme: Scheme,
    pub seed: u64,
}

impl Default for GsanaConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            weights: SimilarityWeights::default(),
            bucket_capacity: None,
            layout: LayoutMode::Hcb,
            scheme: Scheme::All,
            seed: 0,
        }
    }
}

pub fn run_gsana(m: &mut Machine, g1: &AttributedGraph, g2: &AttributedGraph, cfg: &GsanaConfig) -> SimResult<GsanaResult> {
    if cfg.k == 0 {
        return Err(SimError::InvalidParam("k must be at least 1".into()));
    }
    let cap = cfg
        .bucket_capacity
        .unwrap_or_else(|| bucket_capacity_for(g1.nvertices().max(g2.nvertices()) as u64));
    let inp = prepare(g1, g2, cap, cfg.layout, m.nodelets())?;
    parallel_sim(m, &inp, cfg.k, cfg.weights, cfg.scheme, cfg.seed)
}
