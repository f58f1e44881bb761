//! Distributed containers built on the machine's address space.
//!
//! Descriptors (base addresses, row tables) live on the host and are cheap to
//! clone into threadlet bodies; the elements themselves live in nodelet
//! memory and are only touched through [`Ctx`] operations or the uncharged
//! host accessors used for staging.

use std::ops::Range;
use std::sync::Arc;

use parking_lot::Mutex;

use crate::error::{SimError, SimResult};
use crate::machine::{Ctx, GlobalAddress, Machine, NodeletId, Word, NIL};

fn per_nodelet_counts(len: u64, width: usize, p: usize) -> Vec<u64> {
    let mut words = vec![0; p];
    for (n, w) in words.iter_mut().enumerate().take(width) {
        *w = len / width as u64 + u64::from((n as u64) < len % width as u64);
    }
    words
}

/// Element `i` lives on nodelet `i mod width`, where `width` is normally the
/// machine's nodelet count.
#[derive(Debug, Clone)]
pub struct StripedArray {
    len: u64,
    width: usize,
    bases: Arc<[GlobalAddress]>,
}

impl StripedArray {
    pub fn new(m: &mut Machine, name: &str, len: u64) -> SimResult<Self> {
        let p = m.nodelets();
        Self::with_width(m, name, len, p)
    }

    /// Stripes over the first `width` nodelets only.
    pub fn with_width(m: &mut Machine, name: &str, len: u64, width: usize) -> SimResult<Self> {
        let p = m.nodelets();
        if width == 0 || width > p {
            return Err(SimError::InvalidParam(format!("stripe width {width} outside 1..={p}")));
        }
        let bases = m.alloc(name, &per_nodelet_counts(len, width, p))?;
        Ok(Self {
            len,
            width,
            bases: bases.into(),
        })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn home(&self, i: u64) -> NodeletId {
        NodeletId((i % self.width as u64) as u32)
    }

    pub fn addr(&self, i: u64) -> SimResult<GlobalAddress> {
        if i >= self.len {
            return Err(SimError::OutOfRange {
                what: "striped array",
                index: i as usize,
                len: self.len as usize,
            });
        }
        let w = self.width as u64;
        Ok(self.bases[(i % w) as usize].add_words(i / w))
    }

    /// Global indices homed on nodelet `n`, ascending.
    pub fn local_indices(&self, n: NodeletId) -> impl Iterator<Item = u64> {
        let (w, len) = (self.width as u64, self.len);
        let start = n.0 as u64;
        (start..len).step_by(w as usize).filter(move |_| start < w)
    }

    pub async fn get(&self, ctx: &Ctx, i: u64) -> SimResult<Word> {
        ctx.read(self.addr(i)?).await
    }

    pub async fn set(&self, ctx: &Ctx, i: u64, v: Word) -> SimResult<()> {
        ctx.write(self.addr(i)?, v).await
    }

    /// Remote write of element `i`; never migrates.
    pub async fn put(&self, ctx: &Ctx, i: u64, v: Word) -> SimResult<()> {
        ctx.remote_write(self.addr(i)?, v).await
    }

    pub fn host_get(&self, m: &Machine, i: u64) -> SimResult<Word> {
        m.host_read(self.addr(i)?)
    }

    pub fn host_set(&self, m: &mut Machine, i: u64, v: Word) -> SimResult<()> {
        m.host_write(self.addr(i)?, v)
    }

    pub fn host_fill(&self, m: &mut Machine, values: &[Word]) -> SimResult<()> {
        for (i, &v) in values.iter().enumerate() {
            self.host_set(m, i as u64, v)?;
        }
        Ok(())
    }

    pub fn host_fill_value(&self, m: &mut Machine, v: Word) -> SimResult<()> {
        for i in 0..self.len {
            self.host_set(m, i, v)?;
        }
        Ok(())
    }

    pub fn host_to_vec(&self, m: &Machine) -> SimResult<Vec<Word>> {
        (0..self.len).map(|i| self.host_get(m, i)).collect()
    }
}

/// One full copy per nodelet. Reads use the reader's local copy; writes are
/// broadcast as remote writes and agree after the next region boundary.
#[derive(Debug, Clone)]
pub struct ReplicatedArray {
    len: u64,
    bases: Arc<[GlobalAddress]>,
}

impl ReplicatedArray {
    pub fn new(m: &mut Machine, name: &str, len: u64) -> SimResult<Self> {
        let p = m.nodelets();
        let bases = m.alloc(name, &vec![len; p])?;
        Ok(Self { len, bases: bases.into() })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn copies(&self) -> usize {
        self.bases.len()
    }

    pub fn addr(&self, copy: NodeletId, i: u64) -> SimResult<GlobalAddress> {
        if i >= self.len {
            return Err(SimError::OutOfRange {
                what: "replicated array",
                index: i as usize,
                len: self.len as usize,
            });
        }
        let base = self.bases.get(copy.index()).ok_or(SimError::OutOfRange {
            what: "replica",
            index: copy.index(),
            len: self.bases.len(),
        })?;
        Ok(base.add_words(i))
    }

    /// Reads the copy on the threadlet's current nodelet.
    pub async fn get(&self, ctx: &Ctx, i: u64) -> SimResult<Word> {
        ctx.read(self.addr(ctx.here(), i)?).await
    }

    /// Broadcasts `v` to every copy, one remote write each.
    pub async fn replicated_write(&self, ctx: &Ctx, i: u64, v: Word) -> SimResult<()> {
        for n in 0..self.copies() {
            ctx.remote_write(self.addr(NodeletId(n as u32), i)?, v).await?;
        }
        Ok(())
    }

    pub fn host_get(&self, m: &Machine, copy: NodeletId, i: u64) -> SimResult<Word> {
        m.host_read(self.addr(copy, i)?)
    }

    /// Writes `values` into every copy.
    pub fn host_fill(&self, m: &mut Machine, values: &[Word]) -> SimResult<()> {
        for n in 0..self.copies() {
            for (i, &v) in values.iter().enumerate() {
                m.host_write(self.addr(NodeletId(n as u32), i as u64)?, v)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowChunk {
    pub home: NodeletId,
    pub len: u64,
    pub base: GlobalAddress,
}

/// Variable-length rows, each stored contiguously on one nodelet. By
/// default row `i` lives on nodelet `i mod P`.
#[derive(Debug, Clone)]
pub struct JaggedLocalArray {
    rows: Arc<[RowChunk]>,
}

impl JaggedLocalArray {
    pub fn new(m: &mut Machine, name: &str, lengths: &[u64]) -> SimResult<Self> {
        let p = m.nodelets() as u32;
        let homes: Vec<NodeletId> = (0..lengths.len()).map(|i| NodeletId(i as u32 % p)).collect();
        Self::with_homes(m, name, lengths, &homes)
    }

    /// Places row `i` on `homes[i]`.
    pub fn with_homes(m: &mut Machine, name: &str, lengths: &[u64], homes: &[NodeletId]) -> SimResult<Self> {
        if lengths.len() != homes.len() {
            return Err(SimError::Dimension(format!(
                "{} row lengths but {} row homes",
                lengths.len(),
                homes.len()
            )));
        }
        let p = m.nodelets();
        let mut words = vec![0u64; p];
        let mut offsets = Vec::with_capacity(lengths.len());
        for (&len, &h) in lengths.iter().zip(homes) {
            if h.index() >= p {
                return Err(SimError::InvalidParam(format!("row home {h} does not exist")));
            }
            offsets.push(words[h.index()]);
            words[h.index()] += len;
        }
        let bases = m.alloc(name, &words)?;
        let rows = lengths
            .iter()
            .zip(homes)
            .zip(offsets)
            .map(|((&len, &home), off)| RowChunk {
                home,
                len,
                base: bases[home.index()].add_words(off),
            })
            .collect();
        Ok(Self { rows })
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> SimResult<RowChunk> {
        self.rows.get(i).copied().ok_or(SimError::OutOfRange {
            what: "jagged rows",
            index: i,
            len: self.rows.len(),
        })
    }

    pub fn addr(&self, i: usize, j: u64) -> SimResult<GlobalAddress> {
        let r = self.row(i)?;
        if j >= r.len {
            return Err(SimError::OutOfRange {
                what: "jagged row",
                index: j as usize,
                len: r.len as usize,
            });
        }
        Ok(r.base.add_words(j))
    }

    pub async fn get(&self, ctx: &Ctx, i: usize, j: u64) -> SimResult<Word> {
        ctx.read(self.addr(i, j)?).await
    }

    pub fn host_fill_row(&self, m: &mut Machine, i: usize, values: &[Word]) -> SimResult<()> {
        for (j, &v) in values.iter().enumerate() {
            m.host_write(self.addr(i, j as u64)?, v)?;
        }
        Ok(())
    }

    pub fn host_row(&self, m: &Machine, i: usize) -> SimResult<Vec<Word>> {
        let r = self.row(i)?;
        (0..r.len).map(|j| m.host_read(r.base.add_words(j))).collect()
    }
}

/// Block layout: `[used, next, id_0 .. id_{capacity-1}]`.
const BLOCK_USED: u64 = 0;
const BLOCK_NEXT: u64 = 1;
const BLOCK_IDS: u64 = 2;

pub const DEFAULT_BLOCK_CAPACITY: u64 = 16;

/// Per-nodelet pools of fixed-capacity edge blocks. A block handle is the
/// block's base address; a `next` word holding [`NIL`] ends a chain.
///
/// Allocation bookkeeping is host-side and uncharged. Blocks are never freed.
#[derive(Debug, Clone)]
pub struct EdgeBlockPool {
    capacity: u64,
    blocks: Arc<[u64]>,
    bases: Arc<[GlobalAddress]>,
    next_free: Arc<Mutex<Vec<u64>>>,
}

impl EdgeBlockPool {
    pub fn new(m: &mut Machine, name: &str, capacity: u64, blocks_per_nodelet: &[u64]) -> SimResult<Self> {
        if capacity == 0 {
            return Err(SimError::InvalidParam("edge block capacity must be at least 1".into()));
        }
        let words: Vec<u64> = blocks_per_nodelet.iter().map(|b| b * (capacity + BLOCK_IDS)).collect();
        let bases = m.alloc(name, &words)?;
        let pool = Self {
            capacity,
            blocks: blocks_per_nodelet.into(),
            bases: bases.into(),
            next_free: Arc::new(Mutex::new(vec![0; blocks_per_nodelet.len()])),
        };
        for (n, &count) in blocks_per_nodelet.iter().enumerate() {
            for b in 0..count {
                m.host_write(pool.block_at(n, b).add_words(BLOCK_NEXT), NIL)?;
            }
        }
        Ok(pool)
    }

    fn block_at(&self, n: usize, b: u64) -> GlobalAddress {
        self.bases[n].add_words(b * (self.capacity + BLOCK_IDS))
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn total_blocks(&self) -> u64 {
        self.blocks.iter().sum()
    }

    /// Blocks handed out so far by each nodelet's pool.
    pub fn allocated(&self) -> Vec<u64> {
        self.next_free.lock().clone()
    }

    /// Takes a block from `preferred`'s pool, or from the next nodelet with a
    /// free block, scanning upward and wrapping around.
    pub fn alloc_block(&self, preferred: NodeletId) -> SimResult<GlobalAddress> {
        let p = self.blocks.len();
        let mut next = self.next_free.lock();
        for k in 0..p {
            let n = (preferred.index() + k) % p;
            if next[n] < self.blocks[n] {
                let b = next[n];
                next[n] += 1;
                return Ok(self.block_at(n, b));
            }
        }
        Err(SimError::Alloc(format!("all {} edge-block pools exhausted", p)))
    }

    pub fn used_addr(block: GlobalAddress) -> GlobalAddress {
        block.add_words(BLOCK_USED)
    }

    pub fn next_addr(block: GlobalAddress) -> GlobalAddress {
        block.add_words(BLOCK_NEXT)
    }

    pub fn id_addr(block: GlobalAddress, j: u64) -> GlobalAddress {
        block.add_words(BLOCK_IDS + j)
    }
}

#[derive(Debug)]
struct QueueState {
    tail: Vec<u64>,
    mark: Vec<u64>,
    window: Vec<Range<u64>>,
}

/// Append-only per-nodelet vertex buffers with a sliding frontier window.
///
/// A push lands on the pushing threadlet's current nodelet. The tail index
/// is host bookkeeping; the stored entry is one charged local write.
#[derive(Debug, Clone)]
pub struct NodeletQueue {
    capacity: u64,
    bases: Arc<[GlobalAddress]>,
    state: Arc<Mutex<QueueState>>,
}

impl NodeletQueue {
    pub fn new(m: &mut Machine, name: &str, capacity_per_nodelet: u64) -> SimResult<Self> {
        let p = m.nodelets();
        let bases = m.alloc(name, &vec![capacity_per_nodelet; p])?;
        Ok(Self {
            capacity: capacity_per_nodelet,
            bases: bases.into(),
            state: Arc::new(Mutex::new(QueueState {
                tail: vec![0; p],
                mark: vec![0; p],
                window: vec![0..0; p],
            })),
        })
    }

    fn reserve(&self, n: NodeletId) -> SimResult<GlobalAddress> {
        let mut st = self.state.lock();
        let idx = st.tail[n.index()];
        if idx >= self.capacity {
            return Err(SimError::Alloc(format!("queue on {n} is full ({} entries)", self.capacity)));
        }
        st.tail[n.index()] += 1;
        Ok(self.bases[n.index()].add_words(idx))
    }

    pub async fn push(&self, ctx: &Ctx, v: Word) -> SimResult<()> {
        let slot = self.reserve(ctx.here())?;
        ctx.write(slot, v).await
    }

    pub fn host_push(&self, m: &mut Machine, n: NodeletId, v: Word) -> SimResult<()> {
        let slot = self.reserve(n)?;
        m.host_write(slot, v)
    }

    pub fn entry_addr(&self, n: NodeletId, i: u64) -> GlobalAddress {
        self.bases[n.index()].add_words(i)
    }

    /// Makes everything pushed since the previous slide the new frontier and
    /// returns the per-nodelet windows.
    pub fn slide_window(&self) -> Vec<Range<u64>> {
        let mut st = self.state.lock();
        let st = &mut *st;
        for n in 0..st.tail.len() {
            st.window[n] = st.mark[n]..st.tail[n];
            st.mark[n] = st.tail[n];
        }
        st.window.clone()
    }

    pub fn window(&self, n: NodeletId) -> Range<u64> {
        self.state.lock().window[n.index()].clone()
    }

    pub fn frontier_len(&self) -> u64 {
        self.state.lock().window.iter().map(|r| r.end - r.start).sum()
    }

    pub fn host_window_items(&self, m: &Machine, n: NodeletId) -> SimResult<Vec<Word>> {
        self.window(n).map(|i| m.host_read(self.entry_addr(n, i))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{MachineConfig, Registers};

    fn machine(p: u32) -> Machine {
        Machine::new(MachineConfig::with_nodelets(p)).unwrap()
    }

    #[test]
    fn striped_home_rule() {
        let mut m = machine(8);
        let a = StripedArray::new(&mut m, "a", 10).unwrap();
        assert_eq!(a.home(9), NodeletId(1));
        assert_eq!(a.addr(9).unwrap().nodelet, NodeletId(1));
        assert!(a.addr(10).is_err());
        assert_eq!(a.local_indices(NodeletId(1)).collect::<Vec<_>>(), vec![1, 9]);
        assert_eq!(a.local_indices(NodeletId(7)).collect::<Vec<_>>(), vec![7]);
    }

    #[test]
    fn replicated_alloc_size() {
        let mut m = machine(8);
        let r = ReplicatedArray::new(&mut m, "r", 4).unwrap();
        assert_eq!(r.copies(), 8);
        // the next allocation starts right after four words on every nodelet
        let probe = m.alloc("probe", &[1; 8]).unwrap();
        assert!(probe.iter().all(|a| a.offset == 32));
    }

    #[test]
    fn jagged_rows_follow_stripe() {
        let mut m = machine(8);
        let j = JaggedLocalArray::new(&mut m, "j", &[3, 5]).unwrap();
        assert_eq!(j.row(0).unwrap().home, NodeletId(0));
        assert_eq!(j.row(1).unwrap().home, NodeletId(1));
        assert!(j.addr(0, 3).is_err());
    }

    #[test]
    fn replicated_write_broadcasts() {
        for p in [1u32, 8] {
            let mut m = machine(p);
            let r = ReplicatedArray::new(&mut m, "r", 4).unwrap();
            let rr = r.clone();
            m.spawn(NodeletId(0), Registers::empty(), move |ctx| async move {
                rr.replicated_write(&ctx, 2, 11).await
            })
            .unwrap();
            let rep = m.run_to_completion().unwrap();
            let t = rep.counters.totals();
            assert_eq!(t.remote_writes_issued, p as u64);
            assert_eq!(t.migrations_out, 0);
            for n in 0..p {
                assert_eq!(r.host_get(&m, NodeletId(n), 2).unwrap(), 11);
            }
        }
    }

    #[test]
    fn replicated_reads_are_local() {
        let mut m = machine(4);
        let r = ReplicatedArray::new(&mut m, "r", 3).unwrap();
        r.host_fill(&mut m, &[5, 6, 7]).unwrap();
        for n in 0..4 {
            let r = r.clone();
            m.spawn(NodeletId(n), Registers::empty(), move |ctx| async move {
                for i in 0..3 {
                    assert_eq!(r.get(&ctx, i).await?, 5 + i);
                }
                Ok(())
            })
            .unwrap();
        }
        assert_eq!(m.run_to_completion().unwrap().counters.migrations(), 0);
    }

    #[test]
    fn pool_overflow_scans_forward() {
        let mut m = machine(4);
        let pool = EdgeBlockPool::new(&mut m, "pool", 4, &[1, 1, 0, 1]).unwrap();
        assert_eq!(pool.alloc_block(NodeletId(1)).unwrap().nodelet, NodeletId(1));
        assert_eq!(pool.alloc_block(NodeletId(1)).unwrap().nodelet, NodeletId(3));
        assert_eq!(pool.alloc_block(NodeletId(1)).unwrap().nodelet, NodeletId(0));
        assert!(matches!(pool.alloc_block(NodeletId(2)), Err(SimError::Alloc(_))));
        assert_eq!(pool.allocated(), vec![1, 1, 0, 1]);
    }

    #[test]
    fn fresh_blocks_end_chains() {
        let mut m = machine(2);
        let pool = EdgeBlockPool::new(&mut m, "pool", 2, &[2, 2]).unwrap();
        let b = pool.alloc_block(NodeletId(0)).unwrap();
        assert_eq!(m.host_read(EdgeBlockPool::next_addr(b)).unwrap(), NIL);
        assert_eq!(m.host_read(EdgeBlockPool::used_addr(b)).unwrap(), 0);
    }

    #[test]
    fn queue_push_and_slide() {
        let mut m = machine(4);
        let q = NodeletQueue::new(&mut m, "q", 8).unwrap();
        let far = m.alloc("far", &[0, 0, 0, 1]).unwrap()[3];
        let qq = q.clone();
        m.spawn(NodeletId(2), Registers::empty(), move |ctx| async move {
            for v in 0..3 {
                qq.push(&ctx, v).await?;
            }
            // after migrating, pushes land on the new nodelet
            ctx.read(far).await?;
            qq.push(&ctx, 99).await
        })
        .unwrap();
        let rep = m.run_to_completion().unwrap();
        assert_eq!(rep.counters.migrations(), 1);
        let w = q.slide_window();
        assert_eq!(w[2], 0..3);
        assert_eq!(w[3], 0..1);
        assert_eq!(q.host_window_items(&m, NodeletId(3)).unwrap(), vec![99]);
        assert_eq!(q.slide_window().iter().map(|r| r.end - r.start).sum::<u64>(), 0);
        assert_eq!(q.frontier_len(), 0);
    }

    #[test]
    fn queue_overflow_is_an_error() {
        let mut m = machine(1);
        let q = NodeletQueue::new(&mut m, "q", 1).unwrap();
        q.host_push(&mut m, NodeletId(0), 1).unwrap();
        assert!(q.host_push(&mut m, NodeletId(0), 2).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn stripe_law(p in 1u32..65, len in 1u64..500, picks in proptest::collection::vec(any::<u64>(), 1..20)) {
                let mut m = machine(p);
                let a = StripedArray::new(&mut m, "a", len).unwrap();
                let idx: Vec<u64> = picks.iter().map(|x| x % len).collect();
                let aa = a.clone();
                let ii = idx.clone();
                m.spawn(NodeletId(0), Registers::empty(), move |ctx| async move {
                    for &i in &ii {
                        aa.get(&ctx, i).await?;
                        assert_eq!(ctx.here(), aa.home(i));
                    }
                    Ok(())
                }).unwrap();
                let rep = m.run_to_completion().unwrap();
                let mut expected = vec![0u64; p as usize];
                for &i in &idx {
                    expected[(i % p as u64) as usize] += 1;
                }
                let got: Vec<u64> = rep.counters.nodelets.iter().map(|n| n.local_reads).collect();
                prop_assert_eq!(got, expected);
            }

            #[test]
            fn jagged_row_walk_is_local(p in 1u32..17, lens in proptest::collection::vec(0u64..12, 1..40)) {
                let mut m = machine(p);
                let j = JaggedLocalArray::new(&mut m, "j", &lens).unwrap();
                for i in 0..lens.len() {
                    let jj = j.clone();
                    let home = jj.row(i).unwrap().home;
                    m.spawn(home, Registers::empty(), move |ctx| async move {
                        let r = jj.row(i)?;
                        for k in 0..r.len {
                            jj.get(&ctx, i, k).await?;
                        }
                        Ok(())
                    }).unwrap();
                }
                let rep = m.run_to_completion().unwrap();
                prop_assert_eq!(rep.counters.migrations(), 0);
                prop_assert_eq!(rep.counters.totals().local_reads, lens.iter().sum::<u64>());
            }

            #[test]
            fn frontier_holds_exactly_previous_pushes(p in 1u32..9, rounds in proptest::collection::vec(proptest::collection::vec((0u32..8, 0u64..1000), 0..10), 1..5)) {
                let mut m = machine(p);
                let q = NodeletQueue::new(&mut m, "q", 64).unwrap();
                for round in &rounds {
                    let mut log: Vec<Vec<u64>> = vec![Vec::new(); p as usize];
                    for &(n, v) in round {
                        let n = n % p;
                        q.host_push(&mut m, NodeletId(n), v).unwrap();
                        log[n as usize].push(v);
                    }
                    q.slide_window();
                    for n in 0..p {
                        prop_assert_eq!(&q.host_window_items(&m, NodeletId(n)).unwrap(), &log[n as usize]);
                    }
                }
            }
        }
    }
}
