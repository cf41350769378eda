//! Scenario files (TOML), defaults and validation.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adaptive::AdaptationParams;
use crate::csma::CsmaParams;
use crate::error::{ConfigError, SimError};
use crate::icn::Name;
use crate::radio::{ConnectivityGraph, NodeId, NUM_CHANNELS};
use crate::tsch::{ScheduleParams, SharedCellParams};

/// Link-layer configuration under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MacMode {
    #[serde(rename = "SINR")]
    Sinr,
    #[serde(rename = "DINR")]
    Dinr,
    #[serde(rename = "ADINR")]
    Adinr,
    #[serde(rename = "CSMA")]
    Csma,
    #[serde(rename = "CSMA-3")]
    Csma3,
    #[serde(rename = "CSMA-3ST")]
    Csma3St,
}

impl MacMode {
    pub const ALL: [MacMode; 6] = [
        MacMode::Sinr,
        MacMode::Dinr,
        MacMode::Adinr,
        MacMode::Csma,
        MacMode::Csma3,
        MacMode::Csma3St,
    ];

    pub fn is_tsch(self) -> bool {
        matches!(self, MacMode::Sinr | MacMode::Dinr | MacMode::Adinr)
    }

    /// Content cells follow Interest activity instead of staying on.
    pub fn activates_cells(self) -> bool {
        matches!(self, MacMode::Dinr | MacMode::Adinr)
    }

    pub fn label(self) -> &'static str {
        match self {
            MacMode::Sinr => "SINR",
            MacMode::Dinr => "DINR",
            MacMode::Adinr => "ADINR",
            MacMode::Csma => "CSMA",
            MacMode::Csma3 => "CSMA-3",
            MacMode::Csma3St => "CSMA-3ST",
        }
    }
}

impl fmt::Display for MacMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MacMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MacMode::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| ConfigError::Invalid(format!("unknown MAC mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeLoss {
    pub a: NodeId,
    pub b: NodeId,
    pub p_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelLoss {
    pub channel: u8,
    pub p_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Topology {
    /// Extra isolated nodes; nodes named by edges are implied.
    pub nodes: Vec<NodeId>,
    pub edges: Vec<[NodeId; 2]>,
    /// Loss applied to every edge unless overridden.
    pub edge_loss: f64,
    pub edge_override: Vec<EdgeLoss>,
    pub channel_loss: Vec<ChannelLoss>,
}

impl Topology {
    pub fn graph(&self) -> Result<ConnectivityGraph, ConfigError> {
        let mut g = ConnectivityGraph::new(
            self.nodes
                .iter()
                .copied()
                .chain(self.edges.iter().flat_map(|e| e.iter().copied())),
        );
        for [a, b] in &self.edges {
            g.add_edge(*a, *b, self.edge_loss)?;
        }
        for e in &self.edge_override {
            if !g.are_adjacent(e.a, e.b) {
                return Err(ConfigError::Invalid(format!(
                    "loss override for missing edge {}-{}",
                    e.a, e.b
                )));
            }
            g.add_edge(e.a, e.b, e.p_loss)?;
        }
        for c in &self.channel_loss {
            g.set_channel_loss(c.channel, c.p_loss)?;
        }
        Ok(g)
    }
}

/// Extra consumers competing with the main one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SideTraffic {
    pub nodes: Vec<NodeId>,
    pub interests_per_frame: f64,
    /// Modes in which side traffic runs.
    pub modes: Vec<MacMode>,
    /// Modes in which the rate is multiplied by `boost`.
    pub boost_modes: Vec<MacMode>,
    pub boost: f64,
}

impl Default for SideTraffic {
    fn default() -> Self {
        Self {
            nodes: Vec::new(),
            interests_per_frame: 1.0,
            modes: vec![MacMode::Csma, MacMode::Csma3, MacMode::Csma3St],
            boost_modes: vec![MacMode::Csma3St],
            boost: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsumerPolicy {
    /// New Interests per slotframe; defaults to 15 for ADINR, else 1.
    pub rate_per_frame: Option<f64>,
    /// Retransmission timeout. TSCH modes default to the scheduled round
    /// trip plus two slotframes; CSMA modes to 1 s.
    pub timeout_s: Option<f64>,
    /// Retransmissions per chunk; unlimited unless set (CSMA-3 and
    /// CSMA-3ST default to 3).
    pub max_retransmissions: Option<u32>,
    /// Intermediate PIT lifetime as a fraction of the consumer timeout.
    pub pit_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FibPolicy {
    /// Entries per intermediate node; the root is unbounded.
    pub intermediate_capacity: usize,
    pub exclude_silent_children: bool,
}

impl Default for FibPolicy {
    fn default() -> Self {
        Self {
            intermediate_capacity: 8,
            exclude_silent_children: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerTable {
    pub tx_mw: f64,
    pub rx_mw: f64,
    pub sleep_mw: f64,
}

impl Default for PowerTable {
    fn default() -> Self {
        Self {
            tx_mw: 60.0,
            rx_mw: 55.0,
            sleep_mw: 0.1,
        }
    }
}

/// How nodes learn the schedules around them before reserving cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Knowledge {
    /// Only what piggybacked bitfields delivered.
    Piggyback,
    /// Current two-hop occupancy at every slotframe boundary.
    Fresh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TschOptions {
    pub slot_ms: u32,
    pub beacon_period_frames: u32,
    pub mac_retries: u32,
    pub knowledge: Knowledge,
}

impl Default for TschOptions {
    fn default() -> Self {
        Self {
            slot_ms: 15,
            beacon_period_frames: 4,
            mac_retries: 3,
            knowledge: Knowledge::Fresh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunLimits {
    /// Hard stop in slotframes.
    pub max_frames: u64,
    pub trace: bool,
}

impl Default for RunLimits {
    fn default() -> Self {
        Self {
            max_frames: 4000,
            trace: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepetitionPolicy {
    pub max_runs: u32,
    /// Runs the running mean is compared across.
    pub window: u32,
    pub tolerance: f64,
}

impl Default for RepetitionPolicy {
    fn default() -> Self {
        Self {
            max_runs: 100,
            window: 5,
            tolerance: 0.01,
        }
    }
}

fn default_prefix() -> Name {
    Name::new(["content"])
}

fn default_chunks() -> u32 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: MacMode,
    pub root: NodeId,
    pub consumer: NodeId,
    pub producer: NodeId,
    #[serde(default = "default_chunks")]
    pub chunks: u32,
    #[serde(default = "default_prefix")]
    pub content_prefix: Name,
    #[serde(default)]
    pub seed: u64,
    pub topology: Topology,
    #[serde(default)]
    pub side_traffic: SideTraffic,
    #[serde(default)]
    pub schedule: ScheduleParams,
    #[serde(default)]
    pub tsch: TschOptions,
    #[serde(default)]
    pub shared_cell: SharedCellParams,
    #[serde(default)]
    pub adaptation: AdaptationParams,
    #[serde(default)]
    pub csma: CsmaParams,
    #[serde(default)]
    pub consumer_policy: ConsumerPolicy,
    #[serde(default)]
    pub fib: FibPolicy,
    #[serde(default)]
    pub power: PowerTable,
    #[serde(default)]
    pub limits: RunLimits,
    #[serde(default)]
    pub repetition: RepetitionPolicy,
}

pub const IOTLAB10: &str = include_str!("../scenarios/iotlab10.toml");
pub const IOTLAB10_LOSSY: &str = include_str!("../scenarios/iotlab10-lossy.toml");

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// The bundled ten-node testbed reconstruction.
    pub fn iotlab10() -> Self {
        Self::from_toml(IOTLAB10).expect("bundled scenario is valid")
    }

    /// Same topology with a lossy CSMA channel.
    pub fn iotlab10_lossy() -> Self {
        Self::from_toml(IOTLAB10_LOSSY).expect("bundled scenario is valid")
    }

    pub fn with_mode(mut self, mode: MacMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = self.topology.graph()?;
        for (what, id) in [
            ("root", self.root),
            ("consumer", self.consumer),
            ("producer", self.producer),
        ] {
            if !g.contains(id) {
                return Err(ConfigError::Invalid(format!("{what} {id} is not in the topology")));
            }
        }
        if self.consumer == self.producer {
            return Err(ConfigError::Invalid("consumer and producer must differ".into()));
        }
        if self.chunks == 0 {
            return Err(ConfigError::Invalid("chunks must be positive".into()));
        }
        let unreachable = g.unreachable_from(self.root);
        if !unreachable.is_empty() {
            return Err(ConfigError::Disconnected(unreachable));
        }
        let mut seen = BTreeSet::new();
        for &n in &self.side_traffic.nodes {
            if !g.contains(n) {
                return Err(ConfigError::UnknownNode(n));
            }
            if n == self.root || !seen.insert(n) {
                return Err(ConfigError::Invalid(format!(
                    "side consumer {n} repeated or equal to the root"
                )));
            }
        }
        if self.side_traffic.interests_per_frame <= 0.0 || self.side_traffic.boost <= 0.0 {
            return Err(ConfigError::Invalid("side traffic rates must be positive".into()));
        }
        self.schedule.partition()?;
        if self.tsch.slot_ms == 0 {
            return Err(ConfigError::Invalid("slot_ms must be positive".into()));
        }
        if self.mode == MacMode::Adinr {
            self.adaptation.validate()?;
        }
        if self.csma.min_be > self.csma.max_be || self.csma.max_be > 16 || self.csma.airtime_ticks == 0 {
            return Err(ConfigError::Invalid(
                "CSMA backoff exponents or airtime out of range".into(),
            ));
        }
        if self.csma.airtime_ticks >= self.tsch.slot_ms {
            return Err(ConfigError::Invalid("CSMA airtime must be shorter than a slot".into()));
        }
        if self.csma.channel >= NUM_CHANNELS {
            return Err(ConfigError::Invalid("CSMA channel out of range".into()));
        }
        if let Some(r) = self.consumer_policy.rate_per_frame {
            if r <= 0.0 {
                return Err(ConfigError::Invalid("consumer rate must be positive".into()));
            }
        }
        if let Some(t) = self.consumer_policy.timeout_s {
            if t <= 0.0 {
                return Err(ConfigError::Invalid("consumer timeout must be positive".into()));
            }
        }
        if let Some(f) = self.consumer_policy.pit_fraction {
            if !(0.0..=1.0).contains(&f) || f == 0.0 {
                return Err(ConfigError::Invalid("pit_fraction must lie in (0, 1]".into()));
            }
        }
        if self.repetition.max_runs == 0 || self.repetition.window == 0 {
            return Err(ConfigError::Invalid("repetition limits must be positive".into()));
        }
        Ok(())
    }

    pub fn graph(&self) -> Result<ConnectivityGraph, ConfigError> {
        self.topology.graph()
    }

    pub fn slot_ms(&self) -> u32 {
        self.tsch.slot_ms
    }

    pub fn frame_ms(&self) -> u64 {
        u64::from(self.tsch.slot_ms) * u64::from(self.schedule.slotframe_length)
    }

    pub fn consumer_rate(&self) -> f64 {
        self.consumer_policy
            .rate_per_frame
            .unwrap_or(if self.mode == MacMode::Adinr { 15.0 } else { 1.0 })
    }

    pub fn max_retransmissions(&self) -> Option<u32> {
        match self.consumer_policy.max_retransmissions {
            Some(n) => Some(n),
            None if matches!(self.mode, MacMode::Csma3 | MacMode::Csma3St) => Some(3),
            None => None,
        }
    }

    pub fn side_rate(&self) -> Option<f64> {
        let st = &self.side_traffic;
        if st.nodes.is_empty() || !st.modes.contains(&self.mode) {
            return None;
        }
        let boost = if st.boost_modes.contains(&self.mode) {
            st.boost
        } else {
            1.0
        };
        Some(st.interests_per_frame * boost)
    }

    pub fn side_prefix(node: NodeId) -> Name {
        Name::new([format!("side{node}")])
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, SimError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path.display().to_string(), e))?;
    ScenarioConfig::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::build_dodag;

    #[test]
    fn bundled_testbed() {
        let c = ScenarioConfig::iotlab10();
        let g = c.graph().unwrap();
        assert_eq!(g.node_count(), 10);
        assert_eq!((c.consumer, c.producer, c.root), (8, 1, 1));
        assert_eq!(c.side_traffic.nodes, vec![4, 6, 7]);
        let d = build_dodag(&g, 1).unwrap();
        assert_eq!(d.path_to_root(8), vec![8, 9, 5, 2, 1]);
        for side in [4, 6, 7] {
            let path = d.path_to_root(side);
            assert!(path.len() >= 2);
            assert!(
                path.iter().any(|n| [9, 5, 2].contains(n)),
                "{side} crosses the consumer path"
            );
        }
        assert_eq!(c.slot_ms(), 15);
        assert_eq!(c.frame_ms(), 1515);
        assert!(ScenarioConfig::iotlab10_lossy().validate().is_ok());
    }

    #[test]
    fn inverted_thresholds_rejected() {
        let text = IOTLAB10.replace("mode = \"SINR\"", "mode = \"ADINR\"") + "\n[adaptation]\nu_low = 0.95\n";
        assert!(matches!(ScenarioConfig::from_toml(&text), Err(SimError::Config(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = IOTLAB10.to_string() + "\nbogus = 1\n";
        assert!(matches!(ScenarioConfig::from_toml(&text), Err(SimError::Parse(_))));
    }

    #[test]
    fn missing_slot_length_defaults() {
        assert!(!IOTLAB10.contains("slot_ms"));
        assert_eq!(ScenarioConfig::iotlab10().tsch.slot_ms, 15);
    }

    #[test]
    fn consumer_equal_producer_rejected() {
        let text = IOTLAB10.replace("consumer = 8", "consumer = 1");
        assert!(ScenarioConfig::from_toml(&text).is_err());
    }

    #[test]
    fn mode_defaults() {
        let c = ScenarioConfig::iotlab10();
        assert_eq!(c.clone().with_mode(MacMode::Adinr).consumer_rate(), 15.0);
        assert_eq!(c.consumer_rate(), 1.0);
        assert_eq!(c.clone().with_mode(MacMode::Csma3).max_retransmissions(), Some(3));
        assert_eq!(c.max_retransmissions(), None);
        assert_eq!(c.side_rate(), None);
        assert_eq!(c.clone().with_mode(MacMode::Csma3St).side_rate(), Some(2.0));
        assert_eq!("csma-3st".parse::<MacMode>().unwrap(), MacMode::Csma3St);
    }

    #[test]
    fn round_trip() {
        let c = ScenarioConfig::iotlab10_lossy();
        assert_eq!(ScenarioConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}
