use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::space::QuadTree;
use crate::error::{SimError, SimResult};
use crate::machine::NodeletId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutMode {
    /// Vertices and buckets in equal contiguous blocks, independently.
    Blk,
    /// Buckets in Hilbert order, vertices stored with their bucket.
    Hcb,
}

impl FromStr for LayoutMode {
    type Err = SimError;
    fn from_str(s: &str) -> SimResult<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blk" | "0" => Ok(Self::Blk),
            "hcb" | "1" => Ok(Self::Hcb),
            _ => Err(SimError::InvalidParam(format!("unknown layout `{s}`, expected blk or hcb"))),
        }
    }
}

impl fmt::Display for LayoutMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Blk => "blk",
            Self::Hcb => "hcb",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayoutAssignment {
    pub mode: LayoutMode,
    pub vertex_nodelet: Vec<NodeletId>,
    /// Indexed like `QuadTree::buckets`.
    pub bucket_nodelet: Vec<NodeletId>,
    /// Storage label of each vertex. Under HCB the members of the i-th
    /// bucket in Hilbert order get consecutive labels; under BLK it is the
    /// identity.
    pub rename: Vec<u64>,
}

impl LayoutAssignment {
    pub fn nodelet_of(&self, v: u64) -> NodeletId {
        self.vertex_nodelet[v as usize]
    }
}

/// Element `i` of `n` split into `p` equal contiguous blocks.
fn block(i: usize, n: usize, p: usize) -> NodeletId {
    NodeletId((i * p / n.max(1)) as u32)
}

pub fn assign_layout(qt: &QuadTree, degrees: &[u64], mode: LayoutMode, p: usize) -> SimResult<LayoutAssignment> {
    if p == 0 {
        return Err(SimError::InvalidParam("layout needs at least one nodelet".into()));
    }
    let n = degrees.len();
    let nb = qt.buckets.len();
    match mode {
        LayoutMode::Blk => Ok(LayoutAssignment {
            mode,
            vertex_nodelet: (0..n).map(|v| block(v, n, p)).collect(),
            bucket_nodelet: (0..nb).map(|b| block(b, nb, p)).collect(),
            rename: (0..n as u64).collect(),
        }),
        LayoutMode::Hcb => {
            let mut order: Vec<usize> = (0..nb).collect();
            order.sort_by_key(|&b| (qt.buckets[b].hilbert, b));

            // Each bucket weighs its incident edges plus one per member so
            // isolated vertices still count. A bucket goes to the nodelet
            // whose share of the total weight holds its weight midpoint.
            let weight = |b: usize| qt.buckets[b].members.iter().map(|&v| degrees[v as usize] + 1).sum::<u64>();
            let total: u64 = order.iter().map(|&b| weight(b)).sum();
            let mut bucket_nodelet = vec![NodeletId(0); nb];
            let mut vertex_nodelet = vec![NodeletId(0); n];
            let mut rename = vec![u64::MAX; n];
            let (mut prefix, mut label) = (0u64, 0u64);
            for &b in &order {
                let w = weight(b);
                let mid = 2 * prefix + w;
                let k = ((mid as u128 * p as u128) / (2 * total.max(1)) as u128).min(p as u128 - 1) as u32;
                bucket_nodelet[b] = NodeletId(k);
                prefix += w;
                for &v in &qt.buckets[b].members {
                    vertex_nodelet[v as usize] = NodeletId(k);
                    rename[v as usize] = label;
                    label += 1;
                }
            }
            Ok(LayoutAssignment {
                mode,
                vertex_nodelet,
                bucket_nodelet,
                rename,
            })
        }
    }
}
