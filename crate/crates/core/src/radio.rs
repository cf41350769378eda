//! Graph-based wireless medium.
//!
//! Connectivity is an explicit undirected edge list. A receiver hears a frame
//! only if it listens on the frame's physical channel, exactly one of its
//! neighbors transmits on that channel in the slot, and the loss draw for the
//! edge (and channel) succeeds. There is no capture effect.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub type NodeId = u32;

/// Number of physical channels available to the hopping sequence.
pub const NUM_CHANNELS: u8 = 16;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityGraph {
    nodes: BTreeSet<NodeId>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    edge_loss: BTreeMap<(NodeId, NodeId), f64>,
    channel_loss: BTreeMap<u8, f64>,
}

fn edge_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl ConnectivityGraph {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let nodes: BTreeSet<NodeId> = nodes.into_iter().collect();
        let adjacency = nodes.iter().map(|&n| (n, BTreeSet::new())).collect();
        Self {
            nodes,
            adjacency,
            edge_loss: BTreeMap::new(),
            channel_loss: BTreeMap::new(),
        }
    }

    /// Builds a lossless graph from an edge list; nodes are inferred.
    pub fn from_edges(edges: &[(NodeId, NodeId)]) -> Result<Self, ConfigError> {
        let mut g = Self::new(edges.iter().flat_map(|&(a, b)| [a, b]));
        for &(a, b) in edges {
            g.add_edge(a, b, 0.0)?;
        }
        Ok(g)
    }

    pub fn add_node(&mut self, node: NodeId) {
        self.nodes.insert(node);
        self.adjacency.entry(node).or_default();
    }

    pub fn add_edge(&mut self, a: NodeId, b: NodeId, p_loss: f64) -> Result<(), ConfigError> {
        if a == b {
            return Err(ConfigError::Invalid(format!("self-loop on node {a}")));
        }
        if !(0.0..=1.0).contains(&p_loss) {
            return Err(ConfigError::Invalid(format!(
                "loss probability {p_loss} on edge ({a},{b}) outside [0,1]"
            )));
        }
        for n in [a, b] {
            if !self.nodes.contains(&n) {
                return Err(ConfigError::UnknownNode(n));
            }
        }
        self.adjacency.get_mut(&a).expect("node").insert(b);
        self.adjacency.get_mut(&b).expect("node").insert(a);
        self.edge_loss.insert(edge_key(a, b), p_loss);
        Ok(())
    }

    /// Extra loss probability applied to every frame on a physical channel,
    /// modelling external interference.
    pub fn set_channel_loss(&mut self, channel: u8, p_loss: f64) -> Result<(), ConfigError> {
        if channel >= NUM_CHANNELS || !(0.0..=1.0).contains(&p_loss) {
            return Err(ConfigError::Invalid(format!(
                "bad channel interference ({channel}, {p_loss})"
            )));
        }
        self.channel_loss.insert(channel, p_loss);
        Ok(())
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.edge_loss.iter().map(|(&(a, b), &p)| (a, b, p))
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency.get(&a).is_some_and(|s| s.contains(&b))
    }

    pub fn adjacent(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&node).into_iter().flatten().copied()
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency.get(&node).map_or(0, |s| s.len())
    }

    /// Probability that a single frame from `a` to `b` on `channel` is lost
    /// even without a collision.
    pub fn loss_probability(&self, a: NodeId, b: NodeId, channel: u8) -> f64 {
        let edge = self.edge_loss.get(&edge_key(a, b)).copied().unwrap_or(1.0);
        let chan = self.channel_loss.get(&channel).copied().unwrap_or(0.0);
        1.0 - (1.0 - edge) * (1.0 - chan)
    }

    /// Exact k-hop neighborhood (excluding `node` itself).
    pub fn neighbors(&self, node: NodeId, hops: u32) -> Result<BTreeSet<NodeId>, ConfigError> {
        if !self.nodes.contains(&node) {
            return Err(ConfigError::UnknownNode(node));
        }
        let dist = self.bfs_distances(node, hops);
        Ok(dist
            .into_iter()
            .filter(|&(n, d)| n != node && d <= hops)
            .map(|(n, _)| n)
            .collect())
    }

    /// Hop distances from `source`, exploring at most `limit` hops.
    pub fn bfs_distances(&self, source: NodeId, limit: u32) -> BTreeMap<NodeId, u32> {
        let mut dist = BTreeMap::new();
        let mut queue = VecDeque::new();
        dist.insert(source, 0);
        queue.push_back(source);
        while let Some(n) = queue.pop_front() {
            let d = dist[&n];
            if d == limit {
                continue;
            }
            for m in self.adjacent(n) {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(m) {
                    e.insert(d + 1);
                    queue.push_back(m);
                }
            }
        }
        dist
    }

    /// Nodes not reachable from `root`.
    pub fn unreachable_from(&self, root: NodeId) -> Vec<NodeId> {
        let dist = self.bfs_distances(root, u32::MAX);
        self.nodes.iter().copied().filter(|n| !dist.contains_key(n)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Destination {
    Unicast(NodeId),
    Broadcast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionAttempt<F> {
    pub sender: NodeId,
    pub frame: F,
    pub bytes: usize,
    /// Physical channel, `< NUM_CHANNELS`.
    pub channel: u8,
    pub asn: u64,
    pub destination: Destination,
}

/// What one listening radio observed in a slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reception {
    /// Frame of attempt `index` was received.
    Delivered(usize),
    /// Two or more in-range transmissions overlapped on the channel.
    Collision(Vec<usize>),
    /// Exactly one in-range frame, dropped by the loss process.
    ChannelLoss(usize),
    /// Nothing in range on this channel.
    Idle,
}

/// Resolves one slot: every `(listener, channel)` pair gets a [`Reception`].
///
/// Listeners that are also transmitting must not be passed in; a half-duplex
/// radio cannot receive while it sends.
pub fn resolve_slot<F, R: Rng>(
    attempts: &[TransmissionAttempt<F>],
    listeners: &[(NodeId, u8)],
    graph: &ConnectivityGraph,
    rng: &mut R,
) -> Vec<(NodeId, Reception)> {
    debug_assert!(attempts.windows(2).all(|w| w[0].asn == w[1].asn));
    listeners
        .iter()
        .map(|&(rx, channel)| {
            let in_range: Vec<usize> = attempts
                .iter()
                .enumerate()
                .filter(|(_, a)| a.channel == channel && a.sender != rx && graph.are_adjacent(a.sender, rx))
                .map(|(i, _)| i)
                .collect();
            let outcome = match in_range.as_slice() {
                [] => Reception::Idle,
                [only] => {
                    let a = &attempts[*only];
                    let p = graph.loss_probability(a.sender, rx, channel);
                    if p > 0.0 && rng.gen::<f64>() < p {
                        Reception::ChannelLoss(*only)
                    } else {
                        Reception::Delivered(*only)
                    }
                }
                _ => Reception::Collision(in_range),
            };
            (rx, outcome)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn attempt(sender: NodeId, channel: u8, dest: Destination) -> TransmissionAttempt<()> {
        TransmissionAttempt {
            sender,
            frame: (),
            bytes: 50,
            channel,
            asn: 0,
            destination: dest,
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn single_sender_reaches_all_listening_neighbors() {
        let g = ConnectivityGraph::from_edges(&[(1, 2), (1, 3), (3, 4)]).unwrap();
        let a = [attempt(1, 5, Destination::Broadcast)];
        let out = resolve_slot(&a, &[(2, 5), (3, 5), (4, 5)], &g, &mut rng());
        assert_eq!(out[0].1, Reception::Delivered(0));
        assert_eq!(out[1].1, Reception::Delivered(0));
        assert_eq!(out[2].1, Reception::Idle);
    }

    #[test]
    fn same_channel_overlap_collides_at_common_neighbor() {
        let g = ConnectivityGraph::from_edges(&[(1, 2), (3, 2)]).unwrap();
        let a = [
            attempt(1, 2, Destination::Unicast(2)),
            attempt(3, 2, Destination::Unicast(2)),
        ];
        let out = resolve_slot(&a, &[(2, 2)], &g, &mut rng());
        assert_eq!(out[0].1, Reception::Collision(vec![0, 1]));
    }

    #[test]
    fn different_channels_do_not_interfere() {
        let g = ConnectivityGraph::from_edges(&[(1, 2), (3, 4), (1, 4), (3, 2)]).unwrap();
        let a = [
            attempt(1, 2, Destination::Unicast(2)),
            attempt(3, 9, Destination::Unicast(4)),
        ];
        let out = resolve_slot(&a, &[(2, 2), (4, 9)], &g, &mut rng());
        assert_eq!(out[0].1, Reception::Delivered(0));
        assert_eq!(out[1].1, Reception::Delivered(1));
    }

    #[test]
    fn total_loss_edge_never_delivers() {
        let mut g = ConnectivityGraph::new([1, 2]);
        g.add_edge(1, 2, 1.0).unwrap();
        let a = [attempt(1, 0, Destination::Unicast(2))];
        let out = resolve_slot(&a, &[(2, 0)], &g, &mut rng());
        assert_eq!(out[0].1, Reception::ChannelLoss(0));
    }

    #[test]
    fn channel_interference_only_hits_its_channel() {
        let mut g = ConnectivityGraph::from_edges(&[(1, 2)]).unwrap();
        g.set_channel_loss(3, 1.0).unwrap();
        assert_eq!(g.loss_probability(1, 2, 3), 1.0);
        assert_eq!(g.loss_probability(1, 2, 4), 0.0);
    }

    #[test]
    fn neighborhoods() {
        let g = ConnectivityGraph::from_edges(&[(1, 2), (2, 3)]).unwrap();
        assert_eq!(g.neighbors(2, 1).unwrap(), BTreeSet::from([1, 3]));
        assert_eq!(g.neighbors(1, 2).unwrap(), BTreeSet::from([2, 3]));
        let mut g2 = g.clone();
        g2.add_node(9);
        assert!(g2.neighbors(9, 2).unwrap().is_empty());
        assert_eq!(g.neighbors(42, 1), Err(ConfigError::UnknownNode(42)));
    }

    #[test]
    fn rejects_self_loops_and_bad_probabilities() {
        let mut g = ConnectivityGraph::new([1, 2]);
        assert!(g.add_edge(1, 1, 0.0).is_err());
        assert!(g.add_edge(1, 2, 1.5).is_err());
        assert!(g.add_edge(1, 3, 0.0).is_err());
    }
}
