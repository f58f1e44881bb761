use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Event tallies for one nodelet.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeletCounters {
    pub local_reads: u64,
    pub local_writes: u64,
    pub atomics: u64,
    pub remote_writes_issued: u64,
    pub remote_writes_received: u64,
    pub migrations_in: u64,
    pub migrations_out: u64,
    pub inter_node_migrations: u64,
    pub spawns: u64,
    pub stack_return_migrations: u64,
    pub busy_cycles: u64,
    pub peak_threadlets: u64,
}

impl NodeletCounters {
    /// Event counts accumulated after `earlier` was taken. The peak is
    /// carried over unchanged.
    pub fn since(&self, earlier: &NodeletCounters) -> NodeletCounters {
        NodeletCounters {
            local_reads: self.local_reads - earlier.local_reads,
            local_writes: self.local_writes - earlier.local_writes,
            atomics: self.atomics - earlier.atomics,
            remote_writes_issued: self.remote_writes_issued - earlier.remote_writes_issued,
            remote_writes_received: self.remote_writes_received - earlier.remote_writes_received,
            migrations_in: self.migrations_in - earlier.migrations_in,
            migrations_out: self.migrations_out - earlier.migrations_out,
            inter_node_migrations: self.inter_node_migrations - earlier.inter_node_migrations,
            spawns: self.spawns - earlier.spawns,
            stack_return_migrations: self.stack_return_migrations - earlier.stack_return_migrations,
            busy_cycles: self.busy_cycles - earlier.busy_cycles,
            peak_threadlets: self.peak_threadlets,
        }
    }

    fn accumulate(&mut self, o: &NodeletCounters) {
        self.local_reads += o.local_reads;
        self.local_writes += o.local_writes;
        self.atomics += o.atomics;
        self.remote_writes_issued += o.remote_writes_issued;
        self.remote_writes_received += o.remote_writes_received;
        self.migrations_in += o.migrations_in;
        self.migrations_out += o.migrations_out;
        self.inter_node_migrations += o.inter_node_migrations;
        self.spawns += o.spawns;
        self.stack_return_migrations += o.stack_return_migrations;
        self.busy_cycles += o.busy_cycles;
        self.peak_threadlets = self.peak_threadlets.max(o.peak_threadlets);
    }
}

/// Events attributed to the access class a threadlet declared with
/// [`Ctx::tag`](crate::machine::Ctx::tag). A migration is attributed to the
/// tag of the access that triggered it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagCounters {
    pub reads: u64,
    pub writes: u64,
    pub atomics: u64,
    pub remote_writes: u64,
    pub migrations: u64,
}

impl TagCounters {
    /// Memory reads and writes performed under this tag, counting a remote
    /// write as one write.
    pub fn accesses(&self) -> u64 {
        self.reads + self.writes + self.atomics + self.remote_writes
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    pub nodelets: Vec<NodeletCounters>,
    pub by_tag: BTreeMap<String, TagCounters>,
}

impl EventCounters {
    pub fn new(p: usize) -> Self {
        Self {
            nodelets: vec![NodeletCounters::default(); p],
            by_tag: BTreeMap::new(),
        }
    }

    /// Sum over nodelets; `peak_threadlets` is the maximum instead of the sum.
    pub fn totals(&self) -> NodeletCounters {
        let mut t = NodeletCounters::default();
        for n in &self.nodelets {
            t.accumulate(n);
        }
        t
    }

    /// Counts accumulated after the `earlier` snapshot of the same machine.
    pub fn since(&self, earlier: &EventCounters) -> EventCounters {
        let nodelets = self.nodelets.iter().zip(&earlier.nodelets).map(|(a, b)| a.since(b)).collect();
        let by_tag = self
            .by_tag
            .iter()
            .map(|(name, c)| {
                let b = earlier.tag(name);
                let d = TagCounters {
                    reads: c.reads - b.reads,
                    writes: c.writes - b.writes,
                    atomics: c.atomics - b.atomics,
                    remote_writes: c.remote_writes - b.remote_writes,
                    migrations: c.migrations - b.migrations,
                };
                (name.clone(), d)
            })
            .filter(|(_, d)| *d != TagCounters::default())
            .collect();
        EventCounters { nodelets, by_tag }
    }

    pub fn tag(&self, name: &str) -> TagCounters {
        self.by_tag.get(name).cloned().unwrap_or_default()
    }

    pub fn migrations(&self) -> u64 {
        self.totals().migrations_out
    }

    pub fn makespan_cycles(&self) -> u64 {
        self.nodelets.iter().map(|n| n.busy_cycles).max().unwrap_or(0)
    }
}

/// Simulated completion time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimTime {
    pub makespan_cycles: u64,
    pub seconds: f64,
}

impl SimTime {
    pub fn from_cycles(cycles: u64, clock_hz: f64) -> Self {
        Self {
            makespan_cycles: cycles,
            seconds: cycles as f64 / clock_hz,
        }
    }
}

/// Counters and time of a completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub time: SimTime,
    pub counters: EventCounters,
}

impl RunReport {
    /// The part of this report accumulated after `earlier`; the makespan is
    /// recomputed from the busy-cycle deltas.
    pub fn since(&self, earlier: &RunReport, clock_hz: f64) -> RunReport {
        let counters = self.counters.since(&earlier.counters);
        RunReport {
            time: SimTime::from_cycles(counters.makespan_cycles(), clock_hz),
            counters,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}
