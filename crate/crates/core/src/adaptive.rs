//! Utilization-driven reservation of dynamic cells, and the per-node
//! schedule knowledge that keeps those reservations conflict-free.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::radio::{NodeId, NUM_CHANNELS};

/// Occupancy of one node's slotframe, one 16-bit channel mask per slot,
/// plus the union of what it knows about its direct neighbors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleBitfield {
    pub owner: NodeId,
    own: Vec<u16>,
    neighbors: Vec<u16>,
}

impl ScheduleBitfield {
    pub fn new(owner: NodeId, slotframe_length: u32) -> Self {
        let n = slotframe_length as usize;
        Self {
            owner,
            own: vec![0; n],
            neighbors: vec![0; n],
        }
    }

    pub fn from_cells(owner: NodeId, slotframe_length: u32, cells: impl IntoIterator<Item = (u32, u8)>) -> Self {
        let mut bf = Self::new(owner, slotframe_length);
        for (s, c) in cells {
            bf.set_own(s, c);
        }
        bf
    }

    pub fn slotframe_length(&self) -> u32 {
        self.own.len() as u32
    }

    pub fn set_own(&mut self, slot: u32, channel: u8) {
        self.own[slot as usize] |= 1 << channel;
    }

    pub fn own_occupied(&self, slot: u32, channel: u8) -> bool {
        self.own[slot as usize] & (1 << channel) != 0
    }

    /// True if the owner has any cell in `slot`.
    pub fn own_slot_busy(&self, slot: u32) -> bool {
        self.own[slot as usize] != 0
    }

    pub fn neighbor_occupied(&self, slot: u32, channel: u8) -> bool {
        self.neighbors[slot as usize] & (1 << channel) != 0
    }

    pub fn own_mask(&self) -> &[u16] {
        &self.own
    }

    pub fn neighbor_mask(&self) -> &[u16] {
        &self.neighbors
    }

    pub fn set_neighbor_mask(&mut self, mask: Vec<u16>) {
        assert_eq!(mask.len(), self.own.len(), "bitfield length mismatch");
        self.neighbors = mask;
    }

    /// Bytes on the air: two fixed-size maps.
    pub fn wire_len(&self) -> usize {
        2 * self.own.len() * usize::from(NUM_CHANNELS) / 8
    }
}

/// What a node has learned about the schedules around it, keyed by the
/// neighbor that reported it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborKnowledge {
    pub owner: NodeId,
    slotframe_length: u32,
    table: BTreeMap<NodeId, ScheduleBitfield>,
}

impl NeighborKnowledge {
    pub fn new(owner: NodeId, slotframe_length: u32) -> Self {
        Self {
            owner,
            slotframe_length,
            table: BTreeMap::new(),
        }
    }

    /// Replaces whatever was known about the bitfield's owner.
    pub fn merge(&mut self, bitfield: &ScheduleBitfield) {
        if bitfield.owner != self.owner {
            self.table.insert(bitfield.owner, bitfield.clone());
        }
    }

    pub fn get(&self, node: NodeId) -> Option<&ScheduleBitfield> {
        self.table.get(&node)
    }

    pub fn known(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.table.keys().copied()
    }

    /// Union of the neighbors' own maps, as shipped in a piggyback.
    pub fn one_hop_union(&self) -> Vec<u16> {
        let mut out = vec![0u16; self.slotframe_length as usize];
        for bf in self.table.values() {
            for (o, m) in out.iter_mut().zip(bf.own_mask()) {
                *o |= m;
            }
        }
        out
    }

    /// True if any known node within two hops uses `(slot, channel)`.
    pub fn blocked(&self, slot: u32, channel: u8) -> bool {
        self.table
            .values()
            .any(|bf| bf.own_occupied(slot, channel) || bf.neighbor_occupied(slot, channel))
    }

    /// Builds the piggyback for an outgoing Interest.
    pub fn piggyback(&self, own: &ScheduleBitfield) -> ScheduleBitfield {
        let mut bf = own.clone();
        bf.set_neighbor_mask(self.one_hop_union());
        bf
    }
}

/// Adaptation thresholds and burst size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptationParams {
    /// Window length T in slotframes.
    pub window_frames: u32,
    pub u_high: f64,
    pub u_low: f64,
    /// Interest cells per allocation.
    pub burst: u32,
    /// Cap on dynamic Interest cells per directed link.
    pub max_dyn_interest_cells: u32,
}

impl Default for AdaptationParams {
    fn default() -> Self {
        Self {
            window_frames: 4,
            u_high: 0.9,
            u_low: 0.25,
            burst: 2,
            max_dyn_interest_cells: 30,
        }
    }
}

impl AdaptationParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.window_frames == 0 || self.burst == 0 {
            return Err(ConfigError::Invalid(
                "adaptation window and burst must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.u_low) || !(0.0..=1.0).contains(&self.u_high) {
            return Err(ConfigError::Invalid("utilization thresholds must lie in [0, 1]".into()));
        }
        if self.u_low >= self.u_high {
            return Err(ConfigError::Invalid(format!(
                "u_low ({}) must be below u_high ({})",
                self.u_low, self.u_high
            )));
        }
        Ok(())
    }
}

pub type Link = (NodeId, NodeId);

/// Sliding window of `(scheduled, used)` cell counts per directed link.
#[derive(Debug, Clone, Default)]
pub struct UtilizationMonitor {
    window: usize,
    links: BTreeMap<Link, VecDeque<(u32, u32)>>,
}

impl UtilizationMonitor {
    pub fn new(window_frames: u32) -> Self {
        Self {
            window: window_frames as usize,
            links: BTreeMap::new(),
        }
    }

    /// Appends one slotframe's counts for `link`.
    pub fn record(&mut self, link: Link, scheduled: u32, used: u32) {
        debug_assert!(used <= scheduled);
        let w = self.links.entry(link).or_default();
        w.push_back((scheduled, used));
        while w.len() > self.window {
            w.pop_front();
        }
    }

    pub fn is_full(&self, link: Link) -> bool {
        self.links.get(&link).is_some_and(|w| w.len() >= self.window)
    }

    /// `(c_s, c_u)` summed over the window.
    pub fn totals(&self, link: Link) -> (u32, u32) {
        self.links
            .get(&link)
            .map(|w| w.iter().fold((0, 0), |(s, u), &(a, b)| (s + a, u + b)))
            .unwrap_or((0, 0))
    }

    /// `c_u / c_s` over the window, 0 when nothing was scheduled.
    pub fn utilization(&self, link: Link) -> f64 {
        match self.totals(link) {
            (0, _) => 0.0,
            (s, u) => f64::from(u) / f64::from(s),
        }
    }

    /// Forgets the window, e.g. after the link's capacity changed.
    pub fn reset(&mut self, link: Link) {
        self.links.remove(&link);
    }

    pub fn links(&self) -> impl Iterator<Item = Link> + '_ {
        self.links.keys().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    /// Add this many Interest cells (one burst).
    Allocate(u32),
    /// Release this many bursts.
    Deallocate(u32),
    Hold,
}

impl Decision {
    pub fn label(&self) -> &'static str {
        match self {
            Decision::Allocate(_) => "ALLOCATE",
            Decision::Deallocate(_) => "DEALLOCATE",
            Decision::Hold => "HOLD",
        }
    }
}

/// Threshold test for one link. Holds until the window is full.
///
/// Deallocation releases the largest number of bursts that keeps the
/// projected utilization at or below `u_high`, and at least one.
pub fn evaluate_adaptation(
    monitor: &UtilizationMonitor,
    link: Link,
    params: &AdaptationParams,
    dyn_bursts: u32,
    dyn_interest_cells: u32,
) -> Decision {
    if !monitor.is_full(link) {
        return Decision::Hold;
    }
    let u = monitor.utilization(link);
    if u > params.u_high {
        if dyn_interest_cells + params.burst <= params.max_dyn_interest_cells {
            return Decision::Allocate(params.burst);
        }
        return Decision::Hold;
    }
    if u < params.u_low && dyn_bursts > 0 {
        let (s, used) = monitor.totals(link);
        let t = f64::from(params.window_frames);
        let per_frame_sched = f64::from(s) / t;
        let per_frame_used = f64::from(used) / t;
        let mut release = 1;
        for r in (1..=dyn_bursts).rev() {
            let remaining = per_frame_sched - f64::from(r * params.burst);
            if per_frame_used == 0.0 || (remaining > 0.0 && per_frame_used <= params.u_high * remaining) {
                release = r;
                break;
            }
        }
        return Decision::Deallocate(release);
    }
    Decision::Hold
}

/// Cells chosen for one burst on link `a -> b`: Interest cells carry
/// `a -> b`, content cells the reverse.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DynAllocation {
    pub interest: Vec<(u32, u8)>,
    pub content: Vec<(u32, u8)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("dynamic region exhausted for link {a}->{b}: found {found} of {needed} cells")]
pub struct Reject {
    pub a: NodeId,
    pub b: NodeId,
    pub found: usize,
    pub needed: usize,
}

/// Greedy first-fit (by slot, then channel) inside `dyn_range`.
///
/// A candidate needs both endpoints idle for the whole slot and the channel
/// unused by anything in either endpoint's two-hop knowledge. Either the
/// whole burst fits or nothing is returned.
#[allow(clippy::too_many_arguments)]
pub fn allocate_dynamic_cells(
    a: NodeId,
    b: NodeId,
    burst: u32,
    k: u32,
    dyn_range: Range<u32>,
    own_a: &ScheduleBitfield,
    own_b: &ScheduleBitfield,
    know_a: &NeighborKnowledge,
    know_b: &NeighborKnowledge,
) -> Result<DynAllocation, Reject> {
    let needed = (burst + k * burst) as usize;
    let mut taken: BTreeSet<u32> = BTreeSet::new();
    let mut picks = Vec::with_capacity(needed);
    'slots: for s in dyn_range {
        if picks.len() == needed {
            break;
        }
        if own_a.own_slot_busy(s) || own_b.own_slot_busy(s) || taken.contains(&s) {
            continue;
        }
        for c in 0..NUM_CHANNELS {
            if !know_a.blocked(s, c) && !know_b.blocked(s, c) {
                taken.insert(s);
                picks.push((s, c));
                continue 'slots;
            }
        }
    }
    if picks.len() < needed {
        return Err(Reject {
            a,
            b,
            found: picks.len(),
            needed,
        });
    }
    let content = picks.split_off(burst as usize);
    Ok(DynAllocation {
        interest: picks,
        content,
    })
}
