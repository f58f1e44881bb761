use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};

/// Undirected graph with typed vertices, typed edges and per-vertex
/// attribute sets. Neighbour lists are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct AttributedGraph {
    adj: Vec<Vec<u64>>,
    /// Edge types parallel to `adj`.
    etypes: Vec<Vec<u32>>,
    vtypes: Vec<u32>,
    attrs: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: u64,
    edges: Vec<(u64, u64, u32)>,
    vtypes: Vec<u32>,
    attrs: Vec<Vec<u32>>,
}

impl TryFrom<GraphJson> for AttributedGraph {
    type Error = SimError;
    fn try_from(j: GraphJson) -> SimResult<Self> {
        AttributedGraph::new(j.n, j.vtypes, j.attrs, &j.edges)
    }
}

impl From<AttributedGraph> for GraphJson {
    fn from(g: AttributedGraph) -> Self {
        GraphJson {
            n: g.nvertices() as u64,
            edges: g.edges(),
            vtypes: g.vtypes,
            attrs: g.attrs,
        }
    }
}

impl AttributedGraph {
    /// Builds the graph from undirected typed edges. Self-loops are dropped;
    /// repeated edges keep the smallest type. Attribute sets are sorted and
    /// deduplicated.
    pub fn new(n: u64, vtypes: Vec<u32>, mut attrs: Vec<Vec<u32>>, edges: &[(u64, u64, u32)]) -> SimResult<Self> {
        let nv = n as usize;
        if vtypes.len() != nv || attrs.len() != nv {
            return Err(SimError::Dimension(format!(
                "{n} vertices but {} types and {} attribute sets",
                vtypes.len(),
                attrs.len()
            )));
        }
        for a in &mut attrs {
            a.sort_unstable();
            a.dedup();
        }
        let mut pairs: Vec<Vec<(u64, u32)>> = vec![Vec::new(); nv];
        for &(s, d, t) in edges {
            if s >= n || d >= n {
                return Err(SimError::OutOfRange {
                    what: "edge endpoint",
                    index: s.max(d) as usize,
                    len: nv,
                });
            }
            if s != d {
                pairs[s as usize].push((d, t));
                pairs[d as usize].push((s, t));
            }
        }
        let mut adj = Vec::with_capacity(nv);
        let mut etypes = Vec::with_capacity(nv);
        for mut p in pairs {
            p.sort_unstable();
            p.dedup_by_key(|e| e.0);
            adj.push(p.iter().map(|e| e.0).collect());
            etypes.push(p.iter().map(|e| e.1).collect());
        }
        Ok(Self {
            adj,
            etypes,
            vtypes,
            attrs,
        })
    }

    pub fn nvertices(&self) -> usize {
        self.adj.len()
    }

    pub fn nedges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: u64) -> &[u64] {
        &self.adj[v as usize]
    }

    pub fn edge_types(&self, v: u64) -> &[u32] {
        &self.etypes[v as usize]
    }

    pub fn degree(&self, v: u64) -> u64 {
        self.adj[v as usize].len() as u64
    }

    pub fn degrees(&self) -> Vec<u64> {
        self.adj.iter().map(|a| a.len() as u64).collect()
    }

    pub fn vtype(&self, v: u64) -> u32 {
        self.vtypes[v as usize]
    }

    pub fn attrs(&self, v: u64) -> &[u32] {
        &self.attrs[v as usize]
    }

    /// Each undirected edge once, as (smaller id, larger id, type).
    pub fn edges(&self) -> Vec<(u64, u64, u32)> {
        let mut out = Vec::with_capacity(self.nedges());
        for (u, (ns, ts)) in self.adj.iter().zip(&self.etypes).enumerate() {
            for (&v, &t) in ns.iter().zip(ts) {
                if (u as u64) < v {
                    out.push((u as u64, v, t));
                }
            }
        }
        out
    }

    pub fn metadata(&self, v: u64) -> VertexMeta {
        let mut ntypes: Vec<u32> = self.neighbors(v).iter().map(|&u| self.vtype(u)).collect();
        let mut etypes = self.edge_types(v).to_vec();
        ntypes.sort_unstable();
        etypes.sort_unstable();
        VertexMeta {
            vtype: self.vtype(v),
            degree: self.degree(v),
            neighbor_types: ntypes,
            edge_types: etypes,
            attrs: self.attrs(v).to_vec(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serialises")
    }

    pub fn from_json(text: &str) -> SimResult<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> SimResult<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> SimResult<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// The sorted per-vertex arrays the similarity kernel compares.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VertexMeta {
    pub vtype: u32,
    pub degree: u64,
    pub neighbor_types: Vec<u32>,
    pub edge_types: Vec<u32>,
    pub attrs: Vec<u32>,
}

impl VertexMeta {
    /// Machine words: `[type | nattrs << 32, degree, neighbour types, edge
    /// types, attributes]`.
    pub fn encode(&self) -> Vec<u64> {
        let mut w = Vec::with_capacity(self.words() as usize);
        w.push(self.vtype as u64 | (self.attrs.len() as u64) << 32);
        w.push(self.degree);
        w.extend(self.neighbor_types.iter().map(|&t| t as u64));
        w.extend(self.edge_types.iter().map(|&t| t as u64));
        w.extend(self.attrs.iter().map(|&a| a as u64));
        w
    }

    pub fn words(&self) -> u64 {
        2 + 2 * self.degree + self.attrs.len() as u64
    }

    /// Splits a header pair into (type, nattrs, degree).
    pub fn header(w0: u64, w1: u64) -> (u32, u64, u64) {
        (w0 as u32, w0 >> 32, w1)
    }

    /// Rebuilds metadata from the header and the remaining words.
    pub fn decode(w0: u64, w1: u64, rest: &[u64]) -> Self {
        let (vtype, na, d) = Self::header(w0, w1);
        let d = d as usize;
        let small = |s: &[u64]| s.iter().map(|&x| x as u32).collect::<Vec<_>>();
        VertexMeta {
            vtype,
            degree: d as u64,
            neighbor_types: small(&rest[..d]),
            edge_types: small(&rest[d..2 * d]),
            attrs: small(&rest[2 * d..2 * d + na as usize]),
        }
    }
}

/// |A ∩ B| / |A ∪ B| over sorted multisets; two empty inputs score 1.
pub fn multiset_jaccard(a: &[u32], b: &[u32]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    common as f64 / (a.len() + b.len() - common) as f64
}

/// 1 − |d(u) − d(v)| / max(d(u), d(v), 1).
pub fn degree_similarity(du: u64, dv: u64) -> f64 {
    1.0 - du.abs_diff(dv) as f64 / du.max(dv).max(1) as f64
}

/// Component weights of the similarity score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    pub vertex_type: f64,
    pub degree: f64,
    pub neighbor_types: f64,
    pub edge_types: f64,
    pub attributes: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        Self {
            vertex_type: 0.2,
            degree: 0.2,
            neighbor_types: 0.2,
            edge_types: 0.2,
            attributes: 0.2,
        }
    }
}

impl SimilarityWeights {
    pub fn new(w: [f64; 5]) -> SimResult<Self> {
        let s = Self {
            vertex_type: w[0],
            degree: w[1],
            neighbor_types: w[2],
            edge_types: w[3],
            attributes: w[4],
        };
        s.validate()?;
        Ok(s)
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.vertex_type, self.degree, self.neighbor_types, self.edge_types, self.attributes]
    }

    pub fn validate(&self) -> SimResult<()> {
        let w = self.as_array();
        if w.iter().any(|x| x.is_nan() || *x < 0.0) {
            return Err(SimError::InvalidParam(format!("weights must be non-negative: {w:?}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(SimError::InvalidParam(format!("weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// The five component scores in weight order.
pub fn components(u: &VertexMeta, v: &VertexMeta) -> [f64; 5] {
    [
        if u.vtype == v.vtype { 1.0 } else { 0.0 },
        degree_similarity(u.degree, v.degree),
        multiset_jaccard(&u.neighbor_types, &v.neighbor_types),
        multiset_jaccard(&u.edge_types, &v.edge_types),
        multiset_jaccard(&u.attrs, &v.attrs),
    ]
}

/// Weighted sum accumulated left to right, the order the kernel uses.
pub fn weighted_score(c: &[f64; 5], w: &SimilarityWeights) -> f64 {
    let mut s = 0.0;
    for (ci, wi) in c.iter().zip(w.as_array()) {
        s += wi * ci;
    }
    s
}

/// Reads and updates one similarity evaluation performs.
pub fn rw_count(du: u64, dv: u64, au: u64, av: u64) -> u64 {
    let tau = 4;
    let delta = 4;
    let tau_v = du + dv + 2;
    let tau_e = du + dv + 2;
    let c_v = au + av + 2;
    tau + delta + tau_v + tau_e + c_v
}

/// Host-side σ(u, v) with its access count.
pub fn sigma(g1: &AttributedGraph, u: u64, g2: &AttributedGraph, v: u64, w: &SimilarityWeights) -> (f64, u64) {
    let (mu, mv) = (g1.metadata(u), g2.metadata(v));
    let score = weighted_score(&components(&mu, &mv), w);
    (score, rw_count(mu.degree, mv.degree, mu.attrs.len() as u64, mv.attrs.len() as u64))
}
