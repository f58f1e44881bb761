//! Distributed CSR sparse matrix-vector multiply.
//!
//! Row lengths are striped over the nodelets and each row's column indices
//! and values sit in a chunk on the same nodelet as its length entry. The
//! input vector is either replicated on every nodelet or striped; the output
//! vector is striped and written with remote writes.

mod mtx;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use mtx::{load_matrix_market, parse_matrix_market};

use crate::dds::{JaggedLocalArray, ReplicatedArray, StripedArray};
use crate::error::{SimError, SimResult};
use crate::machine::{Ctx, Machine, NodeletId, Registers, RunReport, SpawnStrategy, TaskSpec, WORD_BYTES};

/// Tag of the row-length reads that move a threadlet between rows.
pub const TAG_ROW: &str = "row";
/// Tag of the per-nonzero column, value and vector reads.
pub const TAG_COMPUTE: &str = "compute";

/// Host-side compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u64>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// each row ends up sorted by column.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> SimResult<Self> {
        let mut t = triplets.to_vec();
        if let Some(&(r, c, _)) = t.iter().find(|&&(r, c, _)| r >= nrows || c >= ncols) {
            return Err(SimError::Dimension(format!("entry ({r}, {c}) outside {nrows}x{ncols}")));
        }
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *vals.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            cols.push(c as u64);
            vals.push(v);
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            cols: (0..n as u64).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[u64], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }
}

/// A `d`-dimensional `k`-point stencil on an `n`-sided grid. Only the 2D
/// five-point case is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaplacianSpec {
    pub n: usize,
    pub d: u32,
    pub k: u32,
}

impl LaplacianSpec {
    pub fn new(n: usize) -> Self {
        Self { n, d: 2, k: 5 }
    }
}

/// Five-point Laplacian on an `n`x`n` grid in row-major order: 4 on the
/// diagonal and -1 for every grid neighbour.
pub fn gen_laplacian(spec: LaplacianSpec) -> SimResult<CsrMatrix> {
    if spec.d != 2 || spec.k != 5 {
        return Err(SimError::Unsupported(format!(
            "only the 2-dimensional 5-point stencil is generated, not d={} k={}",
            spec.d, spec.k
        )));
    }
    if spec.n == 0 {
        return Err(SimError::InvalidParam("grid side must be at least 1".into()));
    }
    let n = spec.n;
    let mut t = Vec::with_capacity(5 * n * n);
    for r in 0..n {
        for c in 0..n {
            let i = r * n + c;
            if r > 0 {
                t.push((i, i - n, -1.0));
            }
            if c > 0 {
                t.push((i, i - 1, -1.0));
            }
            t.push((i, i, 4.0));
            if c + 1 < n {
                t.push((i, i + 1, -1.0));
            }
            if r + 1 < n {
                t.push((i, i + n, -1.0));
            }
        }
    }
    CsrMatrix::from_triplets(n * n, n * n, &t)
}

/// A matrix resident in machine memory.
#[derive(Debug, Clone)]
pub struct DistCsr {
    pub nrows: usize,
    pub ncols: usize,
    pub nnz: usize,
    /// Length of each row, striped.
    pub row_len: StripedArray,
    pub cols: JaggedLocalArray,
    /// Values as `f64` bit patterns.
    pub vals: JaggedLocalArray,
}

impl DistCsr {
    /// Allocates the layout and stages the matrix with uncharged writes.
    pub fn distribute(m: &mut Machine, a: &CsrMatrix) -> SimResult<Self> {
        let lens: Vec<u64> = (0..a.nrows).map(|i| a.row_len(i) as u64).collect();
        let row_len = StripedArray::new(m, "csr.row_len", a.nrows as u64)?;
        row_len.host_fill(m, &lens)?;
        let cols = JaggedLocalArray::new(m, "csr.cols", &lens)?;
        let vals = JaggedLocalArray::new(m, "csr.vals", &lens)?;
        for i in 0..a.nrows {
            let (c, v) = a.row(i);
            cols.host_fill_row(m, i, c)?;
            let bits: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
            vals.host_fill_row(m, i, &bits)?;
        }
        Ok(Self {
            nrows: a.nrows,
            ncols: a.ncols,
            nnz: a.nnz(),
            row_len,
            cols,
            vals,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XLayout {
    Replicated,
    Striped,
}

impl FromStr for XLayout {
    type Err = SimError;
    fn from_str(s: &str) -> SimResult<Self> {
        match s {
            "replicated" | "0" => Ok(Self::Replicated),
            "striped" | "1" => Ok(Self::Striped),
            _ => Err(SimError::InvalidParam(format!("unknown vector layout `{s}`"))),
        }
    }
}

impl fmt::Display for XLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Replicated => "replicated",
            Self::Striped => "striped",
        })
    }
}

/// Rows (or queue entries) handed to one threadlet.
///
/// Written as `16` or `fixed-16` for a fixed grain and `dynamic-256` for a
/// target thread count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GrainSpec {
    Fixed(u64),
    Dynamic(u64),
}

impl Default for GrainSpec {
    fn default() -> Self {
        Self::Fixed(16)
    }
}

impl GrainSpec {
    /// Rows per thread for `nrows` rows.
    pub fn grain(self, nrows: u64) -> SimResult<u64> {
        match self {
            Self::Fixed(0) | Self::Dynamic(0) => Err(SimError::InvalidParam(format!("grain `{self}` must be at least 1"))),
            Self::Fixed(g) => Ok(g),
            Self::Dynamic(t) => Ok(nrows.div_ceil(t).max(1)),
        }
    }
}

impl FromStr for GrainSpec {
    type Err = SimError;
    fn from_str(s: &str) -> SimResult<Self> {
        let bad = || SimError::InvalidParam(format!("bad grain `{s}`"));
        let (mode, num) = s.split_once('-').unwrap_or(("fixed", s));
        let n: u64 = num.parse().map_err(|_| bad())?;
        let g = match mode {
            "fixed" => Self::Fixed(n),
            "dynamic" => Self::Dynamic(n),
            _ => return Err(bad()),
        };
        g.grain(1)?;
        Ok(g)
    }
}

impl TryFrom<String> for GrainSpec {
    type Error = SimError;
    fn try_from(s: String) -> SimResult<Self> {
        s.parse()
    }
}

impl From<GrainSpec> for String {
    fn from(g: GrainSpec) -> String {
        g.to_string()
    }
}

impl fmt::Display for GrainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(g) => write!(f, "fixed-{g}"),
            Self::Dynamic(t) => write!(f, "dynamic-{t}"),
        }
    }
}

/// Splits `0..nrows` into contiguous ranges of the grain size. Each range
/// starts on the nodelet that owns its first row.
pub fn partition_rows(nrows: u64, grain: GrainSpec, p: usize) -> SimResult<Vec<(NodeletId, Range<u64>)>> {
    let g = grain.grain(nrows)?;
    Ok((0..nrows)
        .step_by(g as usize)
        .map(|start| {
            let end = (start + g).min(nrows);
            (NodeletId((start % p as u64) as u32), start..end)
        })
        .collect())
}

#[derive(Debug, Clone)]
enum XVec {
    Replicated(ReplicatedArray),
    Striped(StripedArray),
}

impl XVec {
    async fn get(&self, ctx: &Ctx, i: u64) -> SimResult<u64> {
        match self {
            Self::Replicated(r) => r.get(ctx, i).await,
            Self::Striped(s) => s.get(ctx, i).await,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpmvResult {
    pub y: Vec<f64>,
    /// Counters and makespan of the multiply region alone.
    pub report: RunReport,
    /// Worker threadlets spawned, one per row range.
    pub threads: usize,
    /// Migrations triggered by column, value and vector reads.
    pub compute_migrations: u64,
}

/// Computes `y = A x` on the machine.
pub fn spmv_run(m: &mut Machine, a: &DistCsr, x: &[f64], layout: XLayout, grain: GrainSpec, spawn: SpawnStrategy) -> SimResult<SpmvResult> {
    if x.len() != a.ncols {
        return Err(SimError::Dimension(format!(
            "x has {} entries, matrix has {} columns",
            x.len(),
            a.ncols
        )));
    }
    let xbits: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
    let xv = match layout {
        XLayout::Replicated => {
            let r = ReplicatedArray::new(m, "spmv.x", a.ncols as u64)?;
            r.host_fill(m, &xbits)?;
            XVec::Replicated(r)
        }
        XLayout::Striped => {
            let s = StripedArray::new(m, "spmv.x", a.ncols as u64)?;
            s.host_fill(m, &xbits)?;
            XVec::Striped(s)
        }
    };
    let y = StripedArray::new(m, "spmv.y", a.nrows as u64)?;

    let ranges = partition_rows(a.nrows as u64, grain, m.nodelets())?;
    let threads = ranges.len();
    let tasks = ranges
        .into_iter()
        .map(|(at, rows)| {
            let (a, xv, y) = (a.clone(), xv.clone(), y.clone());
            TaskSpec::new(at, Registers::empty(), move |ctx: Ctx| async move {
                for i in rows {
                    ctx.tag(TAG_ROW);
                    let len = a.row_len.get(&ctx, i).await?;
                    ctx.tag(TAG_COMPUTE);
                    let mut acc = 0.0f64;
                    for j in 0..len {
                        let c = a.cols.get(&ctx, i as usize, j).await?;
                        let v = f64::from_bits(a.vals.get(&ctx, i as usize, j).await?);
                        acc += v * f64::from_bits(xv.get(&ctx, c).await?);
                    }
                    y.put(&ctx, i, acc.to_bits()).await?;
                }
                Ok(())
            })
        })
        .collect();

    m.launch(tasks, spawn)?;
    let report = m.run_region_measured()?;
    let y = y.host_to_vec(m)?.into_iter().map(f64::from_bits).collect();
    Ok(SpmvResult {
        y,
        compute_migrations: report.counters.tag(TAG_COMPUTE).migrations,
        report,
        threads,
    })
}

/// Compulsory traffic of one multiply in bytes: the matrix with 8-byte
/// indices and values plus `nrows + 1` offsets, one copy of `x`, and `y`.
pub fn spmv_bytes(nrows: usize, ncols: usize, nnz: usize) -> u64 {
    let w = WORD_BYTES;
    nnz as u64 * 2 * w + (nrows as u64 + 1) * w + ncols as u64 * w + nrows as u64 * w
}

pub fn spmv_bandwidth(nrows: usize, ncols: usize, nnz: usize, seconds: f64) -> SimResult<f64> {
    if seconds.is_nan() || seconds <= 0.0 {
        return Err(SimError::InvalidParam(format!("time must be positive, got {seconds}")));
    }
    Ok(spmv_bytes(nrows, ncols, nnz) as f64 / seconds)
}
