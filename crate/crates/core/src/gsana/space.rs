use std::collections::VecDeque;

use serde::Serialize;

use super::graph::AttributedGraph;
use crate::error::{SimError, SimResult};

/// Coordinate given to vertices the anchor cannot reach.
pub const UNREACHABLE_X: f64 = 1.0 - 1e-9;
/// Largest coordinate a placed vertex can take.
pub const MAX_COORD: f64 = 1.0 - 1e-9;
pub const MAX_DEPTH: u32 = 16;
/// Hilbert curve order used to rank bucket centres.
pub const HILBERT_ORDER: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlacedVertex {
    pub id: u64,
    pub x: f64,
    pub y: f64,
}

/// x from hop distance to the highest-degree vertex, y from log degree.
pub fn place_vertices(g: &AttributedGraph) -> Vec<PlacedVertex> {
    let n = g.nvertices();
    if n == 0 {
        return Vec::new();
    }
    let degrees = g.degrees();
    let max_deg = *degrees.iter().max().expect("nonempty");
    let anchor = degrees.iter().position(|&d| d == max_deg).expect("max exists") as u64;

    let mut hops = vec![u64::MAX; n];
    hops[anchor as usize] = 0;
    let mut q = VecDeque::from([anchor]);
    while let Some(u) = q.pop_front() {
        for &v in g.neighbors(u) {
            if hops[v as usize] == u64::MAX {
                hops[v as usize] = hops[u as usize] + 1;
                q.push_back(v);
            }
        }
    }
    let max_hop = hops.iter().filter(|&&h| h != u64::MAX).max().copied().unwrap_or(0);
    let ylog = (1.0 + max_deg as f64).log2();

    (0..n)
        .map(|v| {
            let x = match hops[v] {
                u64::MAX => UNREACHABLE_X,
                h => h as f64 / (max_hop + 1) as f64,
            };
            let y = if max_deg == 0 {
                0.0
            } else {
                ((1.0 + degrees[v] as f64).log2() / ylog).min(MAX_COORD)
            };
            PlacedVertex { id: v as u64, x, y }
        })
        .collect()
}

/// Half-open rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    /// Closed rectangles overlap or share a boundary.
    pub fn touches(&self, o: &Rect) -> bool {
        self.x0 <= o.x1 && o.x0 <= self.x1 && self.y0 <= o.y1 && o.y0 <= self.y1
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x0 <= x && x < self.x1 && self.y0 <= y && y < self.y1
    }

    /// Children in z-order: low-low, high-low, low-high, high-high.
    fn quadrants(&self) -> [Rect; 4] {
        let (mx, my) = self.center();
        [
            Rect { x1: mx, y1: my, ..*self },
            Rect { x0: mx, y1: my, ..*self },
            Rect { x1: mx, y0: my, ..*self },
            Rect { x0: mx, y0: my, ..*self },
        ]
    }

    /// Hilbert rank of the grid cell holding the centre.
    pub fn hilbert_rank(&self) -> u64 {
        let side = 1u64 << HILBERT_ORDER;
        let cell = |c: f64| ((c * side as f64) as u64).min(side - 1);
        let (cx, cy) = self.center();
        hilbert_rank(cell(cx), cell(cy), HILBERT_ORDER).expect("cell in range")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bucket {
    pub rect: Rect,
    pub members: Vec<u64>,
    pub depth: u32,
    pub hilbert: u64,
}

/// Leaves of a recursive four-way split of the unit square.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadTree {
    pub capacity: usize,
    /// Non-empty leaves in creation order.
    pub buckets: Vec<Bucket>,
    pub empty_leaves: Vec<Rect>,
}

pub fn build_quadtree(placed: &[PlacedVertex], capacity: usize) -> SimResult<QuadTree> {
    if capacity == 0 {
        return Err(SimError::InvalidParam("bucket capacity must be at least 1".into()));
    }
    let mut qt = QuadTree {
        capacity,
        buckets: Vec::new(),
        empty_leaves: Vec::new(),
    };
    split(&mut qt, Rect::UNIT, placed.to_vec(), 0);
    Ok(qt)
}

fn split(qt: &mut QuadTree, rect: Rect, pts: Vec<PlacedVertex>, depth: u32) {
    if pts.len() <= qt.capacity || depth == MAX_DEPTH {
        if pts.is_empty() {
            qt.empty_leaves.push(rect);
        } else {
            qt.buckets.push(Bucket {
                rect,
                members: pts.iter().map(|p| p.id).collect(),
                depth,
                hilbert: rect.hilbert_rank(),
            });
        }
        return;
    }
    let (mx, my) = rect.center();
    let mut parts: [Vec<PlacedVertex>; 4] = Default::default();
    for p in pts {
        let i = usize::from(p.x >= mx) + 2 * usize::from(p.y >= my);
        parts[i].push(p);
    }
    for (r, part) in rect.quadrants().into_iter().zip(parts) {
        split(qt, r, part, depth + 1);
    }
}

impl QuadTree {
    pub fn leaf_count(&self) -> usize {
        self.buckets.len() + self.empty_leaves.len()
    }

    /// Bucket index of every vertex.
    pub fn bucket_of(&self, nvertices: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; nvertices];
        for (b, bucket) in self.buckets.iter().enumerate() {
            for &v in &bucket.members {
                out[v as usize] = b;
            }
        }
        out
    }

    /// Non-empty buckets whose closed rectangles touch `rect`, in Hilbert
    /// order.
    pub fn neighbor_buckets(&self, rect: &Rect) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.buckets.len()).filter(|&b| self.buckets[b].rect.touches(rect)).collect();
        out.sort_by_key(|&b| (self.buckets[b].hilbert, b));
        out
    }
}

/// Position of cell `(ix, iy)` along the Hilbert curve of the given order;
/// the first-order curve visits (0,0), (0,1), (1,1), (1,0).
pub fn hilbert_rank(ix: u64, iy: u64, order: u32) -> SimResult<u64> {
    if order > 31 {
        return Err(SimError::InvalidParam(format!("Hilbert order {order} exceeds 31")));
    }
    let n = 1u64 << order;
    if ix >= n || iy >= n {
        return Err(SimError::OutOfRange {
            what: "Hilbert cell",
            index: ix.max(iy) as usize,
            len: n as usize,
        });
    }
    let (mut x, mut y, mut d) = (ix, iy, 0u64);
    let mut s = n / 2;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = n - 1 - x;
                y = n - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s /= 2;
    }
    Ok(d)
}
