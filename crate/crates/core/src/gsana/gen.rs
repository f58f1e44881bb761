use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::AttributedGraph;
use crate::error::{SimError, SimResult};
use crate::graph::RMAT_ABCD;

pub const VERTEX_TYPES: u32 = 4;
pub const EDGE_TYPES: u32 = 3;
pub const MAX_ATTRS: usize = 4;
/// Size of the attribute value domain.
pub const ATTR_VALUES: u32 = 8;

/// (|V|, |E₁|) of the reference pairs.
pub const EDGE_TARGETS: [(u64, u64); 7] = [
    (512, 1_300),
    (1024, 4_400),
    (2048, 14_000),
    (4096, 35_000),
    (8192, 88_000),
    (16384, 186_000),
    (32768, 385_000),
];

/// Fractions applied when deriving the second graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub edge_delete: f64,
    pub edge_add: f64,
    pub vertex_drop: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            edge_delete: 0.10,
            edge_add: 0.05,
            vertex_drop: 0.05,
        }
    }
}

impl Perturbation {
    pub const NONE: Perturbation = Perturbation {
        edge_delete: 0.0,
        edge_add: 0.0,
        vertex_drop: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub g1: AttributedGraph,
    pub g2: AttributedGraph,
    /// (id in g1, id in g2) of every surviving vertex, by g1 id.
    pub truth: Vec<(u64, u64)>,
}

/// Edge count for `n` vertices, interpolating the reference ratios in log2(n).
pub fn target_edges(n: u64) -> u64 {
    let ratio = |i: usize| EDGE_TARGETS[i].1 as f64 / EDGE_TARGETS[i].0 as f64;
    let last = EDGE_TARGETS.len() - 1;
    let r = if n <= EDGE_TARGETS[0].0 {
        ratio(0)
    } else if n >= EDGE_TARGETS[last].0 {
        ratio(last)
    } else {
        let i = EDGE_TARGETS.iter().rposition(|&(v, _)| v <= n).expect("n above first anchor");
        let (a, b) = (EDGE_TARGETS[i].0 as f64, EDGE_TARGETS[i + 1].0 as f64);
        let t = ((n as f64).log2() - a.log2()) / (b.log2() - a.log2());
        ratio(i) + t * (ratio(i + 1) - ratio(i))
    };
    let cap = n * n.saturating_sub(1) / 4;
    ((r * n as f64).round() as u64).min(cap)
}

fn rmat_pair(rng: &mut ChaCha8Rng, scale: u32) -> (u64, u64) {
    let [a, b, c, _] = RMAT_ABCD;
    let (mut s, mut d) = (0u64, 0u64);
    for _ in 0..scale {
        let r: f64 = rng.random();
        let (bs, bd) = if r < a {
            (0, 0)
        } else if r < a + b {
            (0, 1)
        } else if r < a + b + c {
            (1, 0)
        } else {
            (1, 1)
        };
        s = s << 1 | bs;
        d = d << 1 | bd;
    }
    (s, d)
}

pub fn gen_aligned_pair(n: u64, seed: u64) -> SimResult<AlignedPair> {
    gen_aligned_pair_with(n, seed, &Perturbation::default())
}

pub fn gen_aligned_pair_with(n: u64, seed: u64, pert: &Perturbation) -> SimResult<AlignedPair> {
    if n < 2 {
        return Err(SimError::InvalidParam(format!("aligned pair needs at least 2 vertices, got {n}")));
    }
    for (name, f) in [
        ("edge_delete", pert.edge_delete),
        ("edge_add", pert.edge_add),
        ("vertex_drop", pert.vertex_drop),
    ] {
        if !(0.0..1.0).contains(&f) {
            return Err(SimError::InvalidParam(format!("{name} must be in [0, 1), got {f}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 64 - (n - 1).leading_zeros();
    let m = target_edges(n);

    let mut seen = HashSet::new();
    let mut edges = Vec::with_capacity(m as usize);
    let mut attempts = 0u64;
    while (edges.len() as u64) < m && attempts < 64 * m {
        attempts += 1;
        let (s, d) = rmat_pair(&mut rng, scale);
        if s >= n || d >= n || s == d || !seen.insert((s.min(d), s.max(d))) {
            continue;
        }
        edges.push((s, d, rng.random_range(0..EDGE_TYPES)));
    }
    let vtypes: Vec<u32> = (0..n).map(|_| rng.random_range(0..VERTEX_TYPES)).collect();
    let domain: Vec<u32> = (0..ATTR_VALUES).collect();
    let attrs: Vec<Vec<u32>> = (0..n)
        .map(|_| {
            let k = rng.random_range(0..=MAX_ATTRS);
            domain.choose_multiple(&mut rng, k).copied().collect()
        })
        .collect();
    let g1 = AttributedGraph::new(n, vtypes, attrs, &edges)?;

    // second graph: drop vertices, delete and add edges, relabel
    let mut ids: Vec<u64> = (0..n).collect();
    ids.shuffle(&mut rng);
    let ndrop = ((pert.vertex_drop * n as f64).round() as usize).min(n as usize - 1);
    let mut kept: Vec<u64> = ids[ndrop..].to_vec();
    kept.sort_unstable();
    let mut labels: Vec<u64> = (0..kept.len() as u64).collect();
    labels.shuffle(&mut rng);
    let mut relabel = vec![u64::MAX; n as usize];
    for (&old, &new) in kept.iter().zip(&labels) {
        relabel[old as usize] = new;
    }

    let mut e2: Vec<(u64, u64, u32)> = g1
        .edges()
        .into_iter()
        .filter(|&(s, d, _)| relabel[s as usize] != u64::MAX && relabel[d as usize] != u64::MAX)
        .collect();
    let base = e2.len();
    e2.shuffle(&mut rng);
    e2.truncate(base - (pert.edge_delete * base as f64).round() as usize);
    let mut present: HashSet<(u64, u64)> = e2.iter().map(|&(s, d, _)| (s, d)).collect();
    let nadd = (pert.edge_add * base as f64).round() as usize;
    let max_edges = kept.len() * (kept.len() - 1) / 2;
    let mut added = 0;
    while added < nadd && present.len() < max_edges {
        let s = *kept.choose(&mut rng).expect("kept is nonempty");
        let d = *kept.choose(&mut rng).expect("kept is nonempty");
        if s != d && present.insert((s.min(d), s.max(d))) {
            e2.push((s.min(d), s.max(d), rng.random_range(0..EDGE_TYPES)));
            added += 1;
        }
    }

    let n2 = kept.len();
    let mut vt2 = vec![0; n2];
    let mut at2 = vec![Vec::new(); n2];
    for &old in &kept {
        let new = relabel[old as usize] as usize;
        vt2[new] = g1.vtype(old);
        at2[new] = g1.attrs(old).to_vec();
    }
    let e2: Vec<(u64, u64, u32)> = e2
        .into_iter()
        .map(|(s, d, t)| (relabel[s as usize], relabel[d as usize], t))
        .collect();
    let g2 = AttributedGraph::new(n2 as u64, vt2, at2, &e2)?;
    let truth = kept.iter().map(|&old| (old, relabel[old as usize])).collect();
    Ok(AlignedPair { g1, g2, truth })
}
