//! Deterministic model of a migratory-thread machine.
//!
//! Memory is partitioned across nodelets. Threadlets are cooperative tasks
//! written as `async` blocks over a [`Ctx`]; every memory operation is one
//! scheduler step. A read (or get-style atomic) of a word homed on another
//! nodelet migrates the threadlet there first. Remote writes never migrate:
//! they are queued as packets and become visible at the end of the current
//! parallel region.
//!
//! Time is accounted per nodelet. Each event charges its cost to the nodelet
//! where it executes (a migration is charged at its source), and the makespan
//! of a run is the largest per-nodelet busy-cycle total.

mod config;
mod counters;

use std::collections::VecDeque;
use std::fmt;
use std::future::Future;
use std::pin::Pin;
use std::sync::Arc;
use std::task::{Context, Poll, Waker};

use arrayvec::ArrayVec;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

pub use config::{CostTable, MachineConfig, DEFAULT_MEMORY_PER_NODELET};
pub use counters::{EventCounters, NodeletCounters, RunReport, SimTime, TagCounters};

use crate::error::{SimError, SimResult};

/// Machine word. Every stored value is eight bytes.
pub type Word = u64;

pub const WORD_BYTES: u64 = 8;

/// The all-ones word, used as the `-1` sentinel and as a null handle.
pub const NIL: Word = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeletId(pub u32);

impl NodeletId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeletId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "nodelet {}", self.0)
    }
}

/// A word address: owning nodelet plus byte offset in its memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GlobalAddress {
    pub nodelet: NodeletId,
    pub offset: u64,
}

impl GlobalAddress {
    pub fn new(nodelet: NodeletId, offset: u64) -> Self {
        Self { nodelet, offset }
    }

    /// The address `n` words further on the same nodelet.
    pub fn add_words(self, n: u64) -> Self {
        Self {
            nodelet: self.nodelet,
            offset: self.offset + n * WORD_BYTES,
        }
    }

    /// Encodes the address into one word so it can be stored as a pointer.
    pub fn to_word(self) -> Word {
        ((self.nodelet.0 as u64) << 44) | (self.offset / WORD_BYTES)
    }

    /// Inverse of [`to_word`](Self::to_word); `NIL` decodes to `None`.
    pub fn from_word(w: Word) -> Option<Self> {
        (w != NIL).then(|| Self {
            nodelet: NodeletId((w >> 44) as u32),
            offset: (w & ((1 << 44) - 1)) * WORD_BYTES,
        })
    }
}

impl fmt::Display for GlobalAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}+{:#x}", self.nodelet.0, self.offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ThreadletId(pub u32);

/// A threadlet's register file; at most sixteen words.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registers(ArrayVec<Word, 16>);

impl Registers {
    pub fn new(words: &[Word]) -> SimResult<Self> {
        let mut regs = ArrayVec::new();
        regs.try_extend_from_slice(words)
            .map_err(|_| SimError::TooManyRegisters(words.len()))?;
        Ok(Self(regs))
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, i: usize) -> Option<Word> {
        self.0.get(i).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreadletState {
    Runnable,
    BlockedOnSpawnCredit,
    /// Suspended in [`Ctx::sync`]; holds no threadlet slot while waiting.
    WaitingChildren,
    Finished,
}

/// How a batch of threadlets is launched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpawnStrategy {
    /// One parent issues every spawn in order.
    Serial,
    /// A binary tree of spawner threadlets fans the batch out.
    Recursive,
}

impl std::str::FromStr for SpawnStrategy {
    type Err = SimError;
    fn from_str(s: &str) -> SimResult<Self> {
        match s {
            "serial" | "0" => Ok(Self::Serial),
            "recursive" | "1" => Ok(Self::Recursive),
            _ => Err(SimError::InvalidParam(format!("unknown spawn strategy `{s}`"))),
        }
    }
}

impl fmt::Display for SpawnStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Serial => "serial",
            Self::Recursive => "recursive",
        })
    }
}

/// Snapshot of one threadlet's bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadletInfo {
    pub id: ThreadletId,
    pub home_nodelet: NodeletId,
    pub current_nodelet: NodeletId,
    pub accumulated_cycles: u64,
    pub state: ThreadletState,
    pub spawn_depth: u32,
    pub registers: Registers,
}

pub type TaskFuture = Pin<Box<dyn Future<Output = SimResult<()>> + Send + 'static>>;
type TaskBody = Box<dyn FnOnce(Ctx) -> TaskFuture + Send + 'static>;

/// A threadlet waiting to be spawned: where, with which registers, doing what.
pub struct TaskSpec {
    pub at: NodeletId,
    pub registers: Registers,
    body: TaskBody,
}

impl TaskSpec {
    pub fn new<F, Fut>(at: NodeletId, registers: Registers, body: F) -> Self
    where
        F: FnOnce(Ctx) -> Fut + Send + 'static,
        Fut: Future<Output = SimResult<()>> + Send + 'static,
    {
        Self {
            at,
            registers,
            body: Box::new(move |ctx| Box::pin(body(ctx))),
        }
    }
}

impl fmt::Debug for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskSpec")
            .field("at", &self.at)
            .field("registers", &self.registers)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy)]
enum PacketKind {
    Store,
    Add,
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    dst: GlobalAddress,
    value: Word,
    kind: PacketKind,
}

#[derive(Debug)]
struct Allocation {
    name: String,
    /// (nodelet, first word, word count)
    ranges: Vec<(u32, u64, u64)>,
}

#[derive(Debug)]
struct Thread {
    home: NodeletId,
    current: NodeletId,
    slot: NodeletId,
    cycles: u64,
    state: ThreadletState,
    parent: Option<u32>,
    children: u32,
    tag: usize,
    depth: u32,
    regs: Registers,
}

const UNTAGGED: &str = "untagged";

struct Core {
    cfg: MachineConfig,
    costs: CostTable,
    p: usize,
    mem: Vec<Vec<Word>>,
    allocs: Vec<Allocation>,
    nodelets: Vec<NodeletCounters>,
    tags: Vec<(&'static str, TagCounters)>,
    threads: Vec<Thread>,
    occupied: Vec<u32>,
    credit_queue: Vec<VecDeque<u32>>,
    new_tasks: Vec<(u32, TaskFuture)>,
    packets: Vec<Packet>,
}

impl Core {
    fn node_of(&self, n: NodeletId) -> u32 {
        n.0 / self.cfg.nodelets_per_node
    }

    fn allocation_map(&self) -> String {
        let mut out = String::new();
        for a in &self.allocs {
            for &(n, start, words) in &a.ranges {
                out.push_str(&format!(
                    "  {:<24} n{} [{:#x}, {:#x})\n",
                    a.name,
                    n,
                    start * WORD_BYTES,
                    (start + words) * WORD_BYTES
                ));
            }
        }
        if out.is_empty() {
            out.push_str("  (no allocations)\n");
        }
        out
    }

    fn check(&self, tid: Option<u32>, addr: GlobalAddress) -> SimResult<usize> {
        let n = addr.nodelet.index();
        let ok = n < self.p && addr.offset.is_multiple_of(WORD_BYTES) && ((addr.offset / WORD_BYTES) as usize) < self.mem[n].len();
        if ok {
            Ok((addr.offset / WORD_BYTES) as usize)
        } else {
            Err(SimError::Fault {
                tid: tid.map(ThreadletId),
                addr,
                map: self.allocation_map(),
            })
        }
    }

    fn charge(&mut self, tid: u32, at: NodeletId, cycles: u64) {
        self.nodelets[at.index()].busy_cycles += cycles;
        self.threads[tid as usize].cycles += cycles;
    }

    fn move_to(&mut self, tid: u32, dst: NodeletId) {
        let src = self.threads[tid as usize].current;
        if src == dst {
            return;
        }
        let inter = self.node_of(src) != self.node_of(dst);
        let cost = if inter {
            self.costs.migration_inter_node
        } else {
            self.costs.migration_intra_node
        };
        self.charge(tid, src, cost);
        let s = &mut self.nodelets[src.index()];
        s.migrations_out += 1;
        if inter {
            s.inter_node_migrations += 1;
        }
        self.nodelets[dst.index()].migrations_in += 1;
        let tag = self.threads[tid as usize].tag;
        self.tags[tag].1.migrations += 1;
        self.threads[tid as usize].current = dst;
    }

    fn read(&mut self, tid: u32, addr: GlobalAddress) -> SimResult<Word> {
        let w = self.check(Some(tid), addr)?;
        self.move_to(tid, addr.nodelet);
        self.charge(tid, addr.nodelet, self.costs.local_read);
        self.nodelets[addr.nodelet.index()].local_reads += 1;
        let tag = self.threads[tid as usize].tag;
        self.tags[tag].1.reads += 1;
        Ok(self.mem[addr.nodelet.index()][w])
    }

    fn write(&mut self, tid: u32, addr: GlobalAddress, value: Word) -> SimResult<()> {
        let w = self.check(Some(tid), addr)?;
        self.move_to(tid, addr.nodelet);
        self.charge(tid, addr.nodelet, self.costs.local_write);
        self.nodelets[addr.nodelet.index()].local_writes += 1;
        let tag = self.threads[tid as usize].tag;
        self.tags[tag].1.writes += 1;
        self.mem[addr.nodelet.index()][w] = value;
        Ok(())
    }

    fn remote_write(&mut self, tid: u32, dst: GlobalAddress, value: Word, kind: PacketKind) -> SimResult<()> {
        self.check(Some(tid), dst)?;
        let here = self.threads[tid as usize].current;
        self.charge(tid, here, self.costs.remote_write_packet);
        self.nodelets[here.index()].remote_writes_issued += 1;
        let tag = self.threads[tid as usize].tag;
        self.tags[tag].1.remote_writes += 1;
        self.packets.push(Packet { dst, value, kind });
        Ok(())
    }

    fn cas(&mut self, tid: u32, addr: GlobalAddress, expect: Word, new: Word) -> SimResult<(bool, Word)> {
        let w = self.check(Some(tid), addr)?;
        self.move_to(tid, addr.nodelet);
        self.charge(tid, addr.nodelet, self.costs.atomic_op);
        self.nodelets[addr.nodelet.index()].atomics += 1;
        let tag = self.threads[tid as usize].tag;
        self.tags[tag].1.atomics += 1;
        let cell = &mut self.mem[addr.nodelet.index()][w];
        let observed = *cell;
        if observed == expect {
            *cell = new;
            Ok((true, observed))
        } else {
            Ok((false, observed))
        }
    }

    fn stack_access(&mut self, tid: u32) {
        let t = &self.threads[tid as usize];
        let (home, here, tag) = (t.home, t.current, t.tag);
        if here != home {
            self.charge(tid, here, self.costs.stack_return_migration);
            self.nodelets[here.index()].stack_return_migrations += 1;
            self.threads[tid as usize].current = home;
        } else {
            self.charge(tid, home, self.costs.local_read);
            self.nodelets[home.index()].local_reads += 1;
            self.tags[tag].1.reads += 1;
        }
    }

    fn tag_index(&mut self, name: &'static str) -> usize {
        match self.tags.iter().position(|(t, _)| *t == name) {
            Some(i) => i,
            None => {
                self.tags.push((name, TagCounters::default()));
                self.tags.len() - 1
            }
        }
    }

    /// Registers a new threadlet and charges the spawner. The future is
    /// attached separately once built.
    fn create(&mut self, parent: Option<u32>, at: NodeletId, regs: Registers) -> SimResult<u32> {
        if at.index() >= self.p {
            return Err(SimError::InvalidParam(format!("spawn target {at} does not exist")));
        }
        let (home, depth) = match parent {
            Some(ptid) => {
                let here = self.threads[ptid as usize].current;
                self.charge(ptid, here, self.costs.spawn);
                let pt = &mut self.threads[ptid as usize];
                pt.children += 1;
                (here, pt.depth + 1)
            }
            None => (at, 0),
        };
        self.nodelets[at.index()].spawns += 1;
        let tid = self.threads.len() as u32;
        self.threads.push(Thread {
            home,
            current: at,
            slot: at,
            cycles: 0,
            state: ThreadletState::BlockedOnSpawnCredit,
            parent,
            children: 0,
            tag: 0,
            depth,
            regs,
        });
        self.enqueue(tid);
        Ok(tid)
    }

    fn enqueue(&mut self, tid: u32) {
        let slot = self.threads[tid as usize].slot;
        self.threads[tid as usize].state = ThreadletState::BlockedOnSpawnCredit;
        self.credit_queue[slot.index()].push_back(tid);
        self.admit(slot);
    }

    fn admit(&mut self, n: NodeletId) {
        let cap = self.cfg.max_threadlets_per_nodelet;
        while self.occupied[n.index()] < cap {
            let Some(tid) = self.credit_queue[n.index()].pop_front() else {
                break;
            };
            self.threads[tid as usize].state = ThreadletState::Runnable;
            self.occupied[n.index()] += 1;
            let c = &mut self.nodelets[n.index()];
            c.peak_threadlets = c.peak_threadlets.max(self.occupied[n.index()] as u64);
        }
        debug_assert!(self.occupied[n.index()] <= cap);
    }

    fn release(&mut self, tid: u32) {
        let slot = self.threads[tid as usize].slot;
        self.occupied[slot.index()] -= 1;
        self.admit(slot);
    }

    fn finish(&mut self, tid: u32) {
        self.threads[tid as usize].state = ThreadletState::Finished;
        self.release(tid);
        if let Some(ptid) = self.threads[tid as usize].parent {
            let pt = &mut self.threads[ptid as usize];
            pt.children -= 1;
            if pt.children == 0 && pt.state == ThreadletState::WaitingChildren {
                self.enqueue(ptid);
            }
        }
    }

    fn drain_packets(&mut self) {
        let packets = std::mem::take(&mut self.packets);
        for pk in packets {
            let n = pk.dst.nodelet.index();
            let w = (pk.dst.offset / WORD_BYTES) as usize;
            let cell = &mut self.mem[n][w];
            *cell = match pk.kind {
                PacketKind::Store => pk.value,
                PacketKind::Add => cell.wrapping_add(pk.value),
            };
            self.nodelets[n].remote_writes_received += 1;
            self.nodelets[n].busy_cycles += self.costs.local_write;
        }
    }

    fn counters(&self) -> EventCounters {
        EventCounters {
            nodelets: self.nodelets.clone(),
            by_tag: self
                .tags
                .iter()
                .filter(|(_, c)| *c != TagCounters::default())
                .map(|(n, c)| ((*n).to_owned(), c.clone()))
                .collect(),
        }
    }
}

/// A threadlet's handle on the machine. Every `async` operation is one
/// scheduler step.
#[derive(Clone)]
pub struct Ctx {
    core: Arc<Mutex<Core>>,
    tid: u32,
}

impl Ctx {
    pub fn id(&self) -> ThreadletId {
        ThreadletId(self.tid)
    }

    pub fn here(&self) -> NodeletId {
        self.core.lock().threads[self.tid as usize].current
    }

    pub fn home(&self) -> NodeletId {
        self.core.lock().threads[self.tid as usize].home
    }

    pub fn nodelets(&self) -> usize {
        self.core.lock().p
    }

    /// Register `i`, or 0 past the end of the register file.
    pub fn reg(&self, i: usize) -> Word {
        self.core.lock().threads[self.tid as usize].regs.get(i).unwrap_or(0)
    }

    /// Attributes this threadlet's subsequent events to `name`.
    pub fn tag(&self, name: &'static str) {
        let mut core = self.core.lock();
        let idx = core.tag_index(name);
        core.threads[self.tid as usize].tag = idx;
    }

    pub async fn read(&self, addr: GlobalAddress) -> SimResult<Word> {
        let v = self.core.lock().read(self.tid, addr)?;
        yield_now().await;
        Ok(v)
    }

    /// `n` consecutive reads starting at `addr`, charged exactly like `n`
    /// calls to [`read`](Self::read) but yielding once.
    pub async fn read_words(&self, addr: GlobalAddress, n: u64) -> SimResult<Vec<Word>> {
        let out = {
            let mut core = self.core.lock();
            (0..n)
                .map(|i| core.read(self.tid, addr.add_words(i)))
                .collect::<SimResult<Vec<_>>>()?
        };
        yield_now().await;
        Ok(out)
    }

    pub async fn write(&self, addr: GlobalAddress, value: Word) -> SimResult<()> {
        self.core.lock().write(self.tid, addr, value)?;
        yield_now().await;
        Ok(())
    }

    /// Fire-and-forget store. Never migrates; visible after the region ends.
    /// Packets to the same address apply in issue order.
    pub async fn remote_write(&self, addr: GlobalAddress, value: Word) -> SimResult<()> {
        self.core.lock().remote_write(self.tid, addr, value, PacketKind::Store)?;
        yield_now().await;
        Ok(())
    }

    /// Memory-side wrapping add, delivered like [`remote_write`](Self::remote_write).
    pub async fn remote_add(&self, addr: GlobalAddress, value: Word) -> SimResult<()> {
        self.core.lock().remote_write(self.tid, addr, value, PacketKind::Add)?;
        yield_now().await;
        Ok(())
    }

    /// Get-style compare-and-swap: migrates to the owner like a read.
    pub async fn cas(&self, addr: GlobalAddress, expect: Word, new: Word) -> SimResult<(bool, Word)> {
        let r = self.core.lock().cas(self.tid, addr, expect, new)?;
        yield_now().await;
        Ok(r)
    }

    /// A stack access; returns the threadlet to its home nodelet if it is away.
    pub async fn stack_access(&self) -> SimResult<()> {
        self.core.lock().stack_access(self.tid);
        yield_now().await;
        Ok(())
    }

    pub async fn spawn<F, Fut>(&self, at: NodeletId, registers: Registers, body: F) -> SimResult<ThreadletId>
    where
        F: FnOnce(Ctx) -> Fut + Send + 'static,
        Fut: Future<Output = SimResult<()>> + Send + 'static,
    {
        self.spawn_spec(TaskSpec::new(at, registers, body)).await
    }

    pub async fn spawn_spec(&self, spec: TaskSpec) -> SimResult<ThreadletId> {
        let tid = self.core.lock().create(Some(self.tid), spec.at, spec.registers)?;
        let fut = (spec.body)(Ctx {
            core: self.core.clone(),
            tid,
        });
        self.core.lock().new_tasks.push((tid, fut));
        yield_now().await;
        Ok(ThreadletId(tid))
    }

    /// Spawns every task, either one by one from this threadlet or through a
    /// binary tree of spawner threadlets.
    pub async fn spawn_all(&self, tasks: Vec<TaskSpec>, strategy: SpawnStrategy) -> SimResult<()> {
        match strategy {
            SpawnStrategy::Serial => {
                for t in tasks {
                    self.spawn_spec(t).await?;
                }
            }
            SpawnStrategy::Recursive => {
                if tasks.len() == 1 {
                    let t = tasks.into_iter().next().expect("one task");
                    self.spawn_spec(t).await?;
                } else if !tasks.is_empty() {
                    self.spawn_spec(spawner_node(tasks)).await?;
                }
            }
        }
        Ok(())
    }

    /// Waits for every threadlet this one spawned. The slot is given up while
    /// waiting and re-acquired through the credit queue.
    pub async fn sync(&self) {
        {
            let mut core = self.core.lock();
            if core.threads[self.tid as usize].children == 0 {
                return;
            }
            core.threads[self.tid as usize].state = ThreadletState::WaitingChildren;
            core.release(self.tid);
        }
        yield_now().await;
    }
}

/// Interior node of a recursive spawn tree; runs at its first task's nodelet.
fn spawner_node(mut tasks: Vec<TaskSpec>) -> TaskSpec {
    let at = tasks[0].at;
    let right = tasks.split_off(tasks.len() / 2);
    let left = tasks;
    TaskSpec::new(at, Registers::empty(), move |ctx: Ctx| async move {
        ctx.tag("spawner");
        for half in [left, right] {
            if half.len() == 1 {
                let t = half.into_iter().next().expect("one task");
                ctx.spawn_spec(t).await?;
            } else {
                ctx.spawn_spec(spawner_node(half)).await?;
            }
        }
        Ok(())
    })
}

struct YieldNow(bool);

impl Future for YieldNow {
    type Output = ();
    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        if self.0 {
            Poll::Ready(())
        } else {
            self.0 = true;
            Poll::Pending
        }
    }
}

fn yield_now() -> YieldNow {
    YieldNow(false)
}

/// The simulated machine: nodelet memories, threadlets and counters.
pub struct Machine {
    core: Arc<Mutex<Core>>,
    tasks: Vec<Option<TaskFuture>>,
    active: Vec<u32>,
    sealed: bool,
}

impl fmt::Debug for Machine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let core = self.core.lock();
        f.debug_struct("Machine")
            .field("nodelets", &core.p)
            .field("threadlets", &core.threads.len())
            .field("sealed", &self.sealed)
            .finish()
    }
}

impl Machine {
    pub fn new(cfg: MachineConfig) -> SimResult<Self> {
        cfg.validate()?;
        let p = cfg.nodelets();
        let core = Core {
            costs: cfg.cost_table.clone(),
            cfg,
            p,
            mem: vec![Vec::new(); p],
            allocs: Vec::new(),
            nodelets: vec![NodeletCounters::default(); p],
            tags: vec![(UNTAGGED, TagCounters::default())],
            threads: Vec::new(),
            occupied: vec![0; p],
            credit_queue: vec![VecDeque::new(); p],
            new_tasks: Vec::new(),
            packets: Vec::new(),
        };
        Ok(Self {
            core: Arc::new(Mutex::new(core)),
            tasks: Vec::new(),
            active: Vec::new(),
            sealed: false,
        })
    }

    pub fn config(&self) -> MachineConfig {
        self.core.lock().cfg.clone()
    }

    pub fn nodelets(&self) -> usize {
        self.core.lock().p
    }

    pub fn node_of(&self, n: NodeletId) -> u32 {
        self.core.lock().node_of(n)
    }

    /// Reserves `words[n]` words on each nodelet `n` and returns the base
    /// address on every nodelet. Memory starts zeroed.
    pub fn alloc(&mut self, name: &str, words: &[u64]) -> SimResult<Vec<GlobalAddress>> {
        let mut core = self.core.lock();
        if words.len() != core.p {
            return Err(SimError::InvalidParam(format!(
                "allocation `{name}` lists {} nodelets, machine has {}",
                words.len(),
                core.p
            )));
        }
        let budget = core.cfg.memory_per_nodelet_bytes / WORD_BYTES;
        for (n, &w) in words.iter().enumerate() {
            let used = core.mem[n].len() as u64;
            if used + w > budget {
                return Err(SimError::Alloc(format!(
                    "`{name}` needs {w} words on nodelet {n}, {} of {budget} already used",
                    used
                )));
            }
        }
        let mut bases = Vec::with_capacity(words.len());
        let mut ranges = Vec::new();
        for (n, &w) in words.iter().enumerate() {
            let start = core.mem[n].len() as u64;
            core.mem[n].resize((start + w) as usize, 0);
            bases.push(GlobalAddress::new(NodeletId(n as u32), start * WORD_BYTES));
            if w > 0 {
                ranges.push((n as u32, start, w));
            }
        }
        core.allocs.push(Allocation {
            name: name.to_owned(),
            ranges,
        });
        Ok(bases)
    }

    /// Uncharged read, for loading inputs and inspecting results.
    pub fn host_read(&self, addr: GlobalAddress) -> SimResult<Word> {
        let core = self.core.lock();
        let w = core.check(None, addr)?;
        Ok(core.mem[addr.nodelet.index()][w])
    }

    /// Uncharged write, for staging inputs before a timed region.
    pub fn host_write(&mut self, addr: GlobalAddress, value: Word) -> SimResult<()> {
        let mut core = self.core.lock();
        let w = core.check(None, addr)?;
        core.mem[addr.nodelet.index()][w] = value;
        Ok(())
    }

    /// Spawns a threadlet from outside the machine. Host spawns cost no
    /// cycles; the threadlet's home is its spawn nodelet.
    pub fn spawn<F, Fut>(&mut self, at: NodeletId, registers: Registers, body: F) -> SimResult<ThreadletId>
    where
        F: FnOnce(Ctx) -> Fut + Send + 'static,
        Fut: Future<Output = SimResult<()>> + Send + 'static,
    {
        self.spawn_spec(TaskSpec::new(at, registers, body))
    }

    pub fn spawn_spec(&mut self, spec: TaskSpec) -> SimResult<ThreadletId> {
        if self.sealed {
            return Err(SimError::Lifecycle("spawn after run_to_completion".into()));
        }
        let tid = self.core.lock().create(None, spec.at, spec.registers)?;
        let fut = (spec.body)(Ctx {
            core: self.core.clone(),
            tid,
        });
        self.attach(tid, fut);
        Ok(ThreadletId(tid))
    }

    /// Starts a driver threadlet on nodelet 0 that spawns `tasks` with the
    /// given strategy. Spawn costs are charged inside the machine.
    pub fn launch(&mut self, tasks: Vec<TaskSpec>, strategy: SpawnStrategy) -> SimResult<()> {
        if tasks.is_empty() {
            return Ok(());
        }
        self.spawn(NodeletId(0), Registers::empty(), move |ctx| async move {
            ctx.tag("spawner");
            ctx.spawn_all(tasks, strategy).await
        })?;
        Ok(())
    }

    fn attach(&mut self, tid: u32, fut: TaskFuture) {
        let idx = tid as usize;
        if self.tasks.len() <= idx {
            self.tasks.resize_with(idx + 1, || None);
        }
        self.tasks[idx] = Some(fut);
        self.active.push(tid);
    }

    fn absorb_new_tasks(&mut self) {
        let new = std::mem::take(&mut self.core.lock().new_tasks);
        for (tid, fut) in new {
            self.attach(tid, fut);
        }
    }

    /// Runs until every threadlet has finished (a global barrier), then
    /// delivers all outstanding remote-write packets.
    pub fn run_region(&mut self) -> SimResult<()> {
        if self.sealed {
            return Err(SimError::Lifecycle("machine already ran to completion".into()));
        }
        let mut cx = Context::from_waker(Waker::noop());
        let mut runnable = Vec::new();
        loop {
            self.absorb_new_tasks();
            runnable.clear();
            {
                let core = self.core.lock();
                runnable.extend(
                    self.active
                        .iter()
                        .copied()
                        .filter(|&t| core.threads[t as usize].state == ThreadletState::Runnable),
                );
            }
            if runnable.is_empty() {
                if !self.active.is_empty() {
                    self.sealed = true;
                    return Err(SimError::Deadlock(self.deadlock_report()));
                }
                break;
            }
            for &tid in &runnable {
                let fut = self.tasks[tid as usize].as_mut().expect("active threadlet has a body");
                match fut.as_mut().poll(&mut cx) {
                    Poll::Ready(Ok(())) => {
                        self.tasks[tid as usize] = None;
                        self.core.lock().finish(tid);
                    }
                    Poll::Ready(Err(e)) => {
                        self.sealed = true;
                        return Err(e);
                    }
                    Poll::Pending => {}
                }
                self.absorb_new_tasks();
            }
            let core = self.core.lock();
            self.active.retain(|&t| core.threads[t as usize].state != ThreadletState::Finished);
        }
        self.core.lock().drain_packets();
        Ok(())
    }

    /// Runs one region and reports only what it added to the counters.
    pub fn run_region_measured(&mut self) -> SimResult<RunReport> {
        let before = self.report();
        self.run_region()?;
        Ok(self.report().since(&before, self.core.lock().cfg.clock_hz))
    }

    fn deadlock_report(&self) -> String {
        let core = self.core.lock();
        let mut s = String::from("no runnable threadlet; stuck threadlets:\n");
        for &t in &self.active {
            let th = &core.threads[t as usize];
            s.push_str(&format!("  t{t} on {} state {:?}\n", th.current, th.state));
        }
        s
    }

    /// Runs the final region and seals the machine.
    pub fn run_to_completion(&mut self) -> SimResult<RunReport> {
        self.run_region()?;
        self.sealed = true;
        Ok(self.report())
    }

    /// Counters and makespan so far.
    pub fn report(&self) -> RunReport {
        let core = self.core.lock();
        let counters = core.counters();
        RunReport {
            time: SimTime::from_cycles(counters.makespan_cycles(), core.cfg.clock_hz),
            counters,
        }
    }

    pub fn threadlet(&self, id: ThreadletId) -> Option<ThreadletInfo> {
        let core = self.core.lock();
        core.threads.get(id.0 as usize).map(|t| ThreadletInfo {
            id,
            home_nodelet: t.home,
            current_nodelet: t.current,
            accumulated_cycles: t.cycles,
            state: t.state,
            spawn_depth: t.depth,
            registers: t.regs.clone(),
        })
    }

    pub fn threadlet_count(&self) -> usize {
        self.core.lock().threads.len()
    }

    pub fn pending_packets(&self) -> usize {
        self.core.lock().packets.len()
    }
}
