use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{SimError, SimResult};

/// Cycle costs charged per machine event.
///
/// Every event is charged to the nodelet where it executes. A migration is
/// charged at the source nodelet; the destination pays only for the access
/// that follows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostTable {
    pub local_read: u64,
    pub local_write: u64,
    pub atomic_op: u64,
    pub remote_write_packet: u64,
    pub migration_intra_node: u64,
    pub migration_inter_node: u64,
    pub spawn: u64,
    pub stack_return_migration: u64,
}

impl Default for CostTable {
    fn default() -> Self {
        Self {
            local_read: 1,
            local_write: 1,
            atomic_op: 2,
            remote_write_packet: 3,
            migration_intra_node: 12,
            migration_inter_node: 48,
            spawn: 6,
            stack_return_migration: 12,
        }
    }
}

impl CostTable {
    pub fn validate(&self) -> SimResult<()> {
        let entries = [
            ("local_read", self.local_read),
            ("local_write", self.local_write),
            ("atomic_op", self.atomic_op),
            ("remote_write_packet", self.remote_write_packet),
            ("migration_intra_node", self.migration_intra_node),
            ("migration_inter_node", self.migration_inter_node),
            ("spawn", self.spawn),
            ("stack_return_migration", self.stack_return_migration),
        ];
        if let Some((name, _)) = entries.iter().find(|(_, v)| *v == 0) {
            return Err(SimError::Config(format!("cost `{name}` must be at least 1 cycle")));
        }
        if self.migration_inter_node < self.migration_intra_node {
            return Err(SimError::Config(
                "migration_inter_node must not be cheaper than migration_intra_node".into(),
            ));
        }
        if self.migration_intra_node < self.remote_write_packet {
            return Err(SimError::Config(
                "migration_intra_node must not be cheaper than remote_write_packet".into(),
            ));
        }
        Ok(())
    }
}

pub const DEFAULT_MEMORY_PER_NODELET: u64 = 1 << 30;

/// Topology, limits and costs of a simulated machine.
///
/// The file form is a flat list of `key = value` lines; cost entries sit at
/// the top level next to the topology keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MachineConfig {
    pub nodes: u32,
    pub nodelets_per_node: u32,
    pub max_threadlets_per_nodelet: u32,
    pub clock_hz: f64,
    pub seed: u64,
    pub memory_per_nodelet_bytes: u64,
    #[serde(flatten)]
    pub cost_table: CostTable,
}

impl Default for MachineConfig {
    fn default() -> Self {
        Self {
            nodes: 1,
            nodelets_per_node: 8,
            max_threadlets_per_nodelet: 64,
            clock_hz: 175e6,
            seed: 0,
            memory_per_nodelet_bytes: DEFAULT_MEMORY_PER_NODELET,
            cost_table: CostTable::default(),
        }
    }
}

impl MachineConfig {
    /// One node of eight nodelets.
    pub fn single_node() -> Self {
        Self::default()
    }

    /// Eight nodes of eight nodelets.
    pub fn multi_node() -> Self {
        Self {
            nodes: 8,
            ..Self::default()
        }
    }

    /// A flat machine with `p` nodelets on one node.
    pub fn with_nodelets(p: u32) -> Self {
        Self {
            nodes: 1,
            nodelets_per_node: p,
            ..Self::default()
        }
    }

    pub fn nodelets(&self) -> usize {
        self.nodes as usize * self.nodelets_per_node as usize
    }

    pub fn validate(&self) -> SimResult<()> {
        if self.nodes == 0 || self.nodelets_per_node == 0 {
            return Err(SimError::Config("machine needs at least one nodelet".into()));
        }
        if self.max_threadlets_per_nodelet == 0 {
            return Err(SimError::Config("max_threadlets_per_nodelet must be at least 1".into()));
        }
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(SimError::Config("clock_hz must be positive".into()));
        }
        if self.memory_per_nodelet_bytes < 8 {
            return Err(SimError::Config("memory_per_nodelet_bytes must hold one word".into()));
        }
        self.cost_table.validate()
    }

    pub fn from_kv_str(text: &str) -> SimResult<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| SimError::Config(e.to_string()))?;
        let known: toml::Table = toml::Table::try_from(MachineConfig::default()).expect("default config serializes");
        if let Some(key) = table.keys().find(|k| !known.contains_key(*k)) {
            return Err(SimError::Config(format!("unknown config key `{key}`")));
        }
        let cfg: MachineConfig = table.try_into().map_err(|e: toml::de::Error| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_kv_file(path: &Path) -> SimResult<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_kv_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// Stable digest of the configuration, used to pair kernel runs with the
    /// stream baseline measured on the same machine.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        assert_eq!(MachineConfig::single_node().nodelets(), 8);
        assert_eq!(MachineConfig::multi_node().nodelets(), 64);
        assert_eq!(MachineConfig::with_nodelets(1).nodelets(), 1);
    }

    #[test]
    fn rejects_bad_configs() {
        let c = MachineConfig {
            nodelets_per_node: 0,
            ..MachineConfig::default()
        };
        assert!(c.validate().is_err());
        let c = MachineConfig {
            clock_hz: 0.0,
            ..MachineConfig::default()
        };
        assert!(c.validate().is_err());
        let mut c = MachineConfig::default();
        c.cost_table.migration_intra_node = 2;
        assert!(c.validate().is_err());
        let mut c = MachineConfig::default();
        c.cost_table.spawn = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn kv_file_roundtrip() {
        let text = "nodes = 8\nnodelets_per_node = 8\nmigration_inter_node = 96\nseed = 42\n";
        let cfg = MachineConfig::from_kv_str(text).unwrap();
        assert_eq!(cfg.nodelets(), 64);
        assert_eq!(cfg.cost_table.migration_inter_node, 96);
        assert_eq!(cfg.cost_table.local_read, 1);
        let back = MachineConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
        assert!(MachineConfig::from_kv_str("bogus = 1").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = MachineConfig::default();
        assert_eq!(a.config_hash(), MachineConfig::default().config_hash());
        assert_ne!(a.config_hash(), MachineConfig::multi_node().config_hash());
    }
}
