//! TSCH schedules: cells, the three-part slotframe, the static builder, a
//! global collision checker and per-slot radio decisions.
//!
//! Indexing is 0-based. The shared broadcast cell every node holds is
//! `(slot 0, channel offset 0)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adaptive::ScheduleBitfield;
use crate::error::{ConfigError, ScheduleError};
use crate::radio::{ConnectivityGraph, NodeId, NUM_CHANNELS};
use crate::routing::Dodag;

/// Channel hopping: `(channel_offset + asn) mod 16`.
pub fn physical_channel(channel_offset: u8, asn: u64) -> u8 {
    ((u64::from(channel_offset) + asn) % u64::from(NUM_CHANNELS)) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Tx,
    Rx,
    SharedBroadcast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Peer {
    Node(NodeId),
    Broadcast,
}

/// Sub-slotframe a cell belongs to. `Shared` is slot 0 only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ssf {
    Shared,
    I,
    C,
    Dyn,
}

/// Traffic class a cell is reserved for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellKind {
    /// Unicast Interest-direction frames (Interests, NAMs, DAOs).
    Interest,
    /// Unicast content chunks.
    Content,
    /// Node-scheduled broadcast (multi-face Interests, DIOs).
    Broadcast,
    /// Contention cell (beacons).
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub slot: u32,
    pub channel: u8,
    pub role: Role,
    pub peer: Peer,
    pub ssf: Ssf,
    pub kind: CellKind,
    pub active: bool,
    /// Content cells per Interest cell.
    pub k: u32,
}

impl Cell {
    pub fn peer_node(&self) -> Option<NodeId> {
        match self.peer {
            Peer::Node(n) => Some(n),
            Peer::Broadcast => None,
        }
    }
}

/// Slot ranges of the three sub-slotframes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub slotframe_length: u32,
    pub len_i: u32,
    pub len_c: u32,
}

impl Partition {
    pub fn new(slotframe_length: u32, len_i: u32, len_c: u32) -> Result<Self, ConfigError> {
        if len_i == 0 || len_c == 0 || 1 + len_i + len_c > slotframe_length {
            return Err(ConfigError::Invalid(format!(
                "partition 1 + {len_i} + {len_c} does not fit a slotframe of {slotframe_length}"
            )));
        }
        Ok(Self {
            slotframe_length,
            len_i,
            len_c,
        })
    }

    pub fn len_dyn(&self) -> u32 {
        self.slotframe_length - 1 - self.len_i - self.len_c
    }

    pub fn range(&self, ssf: Ssf) -> Range<u32> {
        let i0 = 1;
        let c0 = i0 + self.len_i;
        let d0 = c0 + self.len_c;
        match ssf {
            Ssf::Shared => 0..1,
            Ssf::I => i0..c0,
            Ssf::C => c0..d0,
            Ssf::Dyn => d0..self.slotframe_length,
        }
    }

    pub fn ssf_of(&self, slot: u32) -> Ssf {
        [Ssf::Shared, Ssf::I, Ssf::C, Ssf::Dyn]
            .into_iter()
            .find(|s| self.range(*s).contains(&slot))
            .unwrap_or(Ssf::Dyn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleParams {
    pub slotframe_length: u32,
    pub len_i: u32,
    pub len_c: u32,
    pub k: u32,
    pub cells_per_neighbor: u32,
    pub broadcast_cells_per_node: u32,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            slotframe_length: 101,
            len_i: 20,
            len_c: 20,
            k: 1,
            cells_per_neighbor: 1,
            broadcast_cells_per_node: 1,
        }
    }
}

impl ScheduleParams {
    pub fn partition(&self) -> Result<Partition, ConfigError> {
        if self.k == 0 || self.cells_per_neighbor == 0 {
            return Err(ConfigError::Invalid(
                "k and cells_per_neighbor must be at least 1".into(),
            ));
        }
        Partition::new(self.slotframe_length, self.len_i, self.len_c)
    }
}

/// One node's cells, keyed by `(slot, channel offset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleMatrix {
    pub owner: NodeId,
    pub partition: Partition,
    cells: BTreeMap<(u32, u8), Cell>,
}

impl ScheduleMatrix {
    /// Empty schedule holding only the shared cell.
    pub fn new(owner: NodeId, partition: Partition) -> Self {
        let mut m = Self {
            owner,
            partition,
            cells: BTreeMap::new(),
        };
        m.insert(Cell {
            slot: 0,
            channel: 0,
            role: Role::SharedBroadcast,
            peer: Peer::Broadcast,
            ssf: Ssf::Shared,
            kind: CellKind::Shared,
            active: true,
            k: 1,
        });
        m
    }

    /// Returns the cell previously at the same position, if any.
    pub fn insert(&mut self, cell: Cell) -> Option<Cell> {
        self.cells.insert((cell.slot, cell.channel), cell)
    }

    pub fn remove(&mut self, slot: u32, channel: u8) -> Option<Cell> {
        self.cells.remove(&(slot, channel))
    }

    pub fn get(&self, slot: u32, channel: u8) -> Option<&Cell> {
        self.cells.get(&(slot, channel))
    }

    pub fn cells(&self) -> impl Iterator<Item = &Cell> + '_ {
        self.cells.values()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells_at(&self, slot: u32) -> impl Iterator<Item = &Cell> + '_ {
        self.cells.range((slot, 0)..(slot + 1, 0)).map(|(_, c)| c)
    }

    pub fn slot_busy(&self, slot: u32) -> bool {
        self.cells_at(slot).next().is_some()
    }

    /// Cells toward or from `peer` of the given kind and role.
    pub fn face_cells(&self, peer: NodeId, kind: CellKind, role: Role) -> impl Iterator<Item = &Cell> + '_ {
        self.cells
            .values()
            .filter(move |c| c.peer == Peer::Node(peer) && c.kind == kind && c.role == role)
    }

    /// Activates or deactivates every content cell shared with `peer` in
    /// the given role. Returns how many cells changed.
    pub fn set_content_active(&mut self, peer: NodeId, role: Role, active: bool) -> usize {
        let mut n = 0;
        for c in self.cells.values_mut() {
            if c.kind == CellKind::Content && c.peer == Peer::Node(peer) && c.role == role && c.active != active {
                c.active = active;
                n += 1;
            }
        }
        n
    }

    pub fn set_all_content_active(&mut self, active: bool) {
        for c in self.cells.values_mut() {
            if c.kind == CellKind::Content {
                c.active = active;
            }
        }
    }

    pub fn bitfield(&self) -> ScheduleBitfield {
        ScheduleBitfield::from_cells(self.owner, self.partition.slotframe_length, self.cells.keys().copied())
    }

    pub fn faces(&self) -> BTreeMap<NodeId, Face> {
        let mut faces: BTreeMap<NodeId, Face> = BTreeMap::new();
        for c in self.cells.values() {
            if c.kind == CellKind::Broadcast || c.kind == CellKind::Shared {
                continue;
            }
            let Some(p) = c.peer_node() else { continue };
            let f = faces.entry(p).or_insert_with(|| Face {
                peer: p,
                tx_cells: Vec::new(),
                rx_cells: Vec::new(),
            });
            match c.role {
                Role::Tx => f.tx_cells.push((c.slot, c.channel)),
                Role::Rx => f.rx_cells.push((c.slot, c.channel)),
                Role::SharedBroadcast => {}
            }
        }
        faces
    }

    /// What the radio does in the slot at `asn`. `has_frame` tells whether
    /// the MAC has something queued for a transmit-capable cell.
    pub fn slot_action(&self, asn: u64, has_frame: impl Fn(&Cell) -> bool) -> SlotAction {
        let slot = (asn % u64::from(self.partition.slotframe_length)) as u32;
        let mut listen = None;
        for c in self.cells_at(slot).filter(|c| c.active) {
            match c.role {
                Role::SharedBroadcast => {
                    return if has_frame(c) {
                        SlotAction::Contend(*c)
                    } else {
                        SlotAction::Listen(*c)
                    };
                }
                Role::Tx if has_frame(c) => return SlotAction::Transmit(*c),
                Role::Tx => {}
                Role::Rx => listen = listen.or(Some(*c)),
            }
        }
        listen.map_or(SlotAction::Sleep, SlotAction::Listen)
    }
}

/// Cells toward one neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Face {
    pub peer: NodeId,
    pub tx_cells: Vec<(u32, u8)>,
    pub rx_cells: Vec<(u32, u8)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotAction {
    Transmit(Cell),
    Listen(Cell),
    Contend(Cell),
    Sleep,
}

/// Nodes within two hops of every node (each set includes the node).
pub fn two_hop_sets(graph: &ConnectivityGraph) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
    graph
        .nodes()
        .map(|n| (n, graph.bfs_distances(n, 2).into_keys().collect()))
        .collect()
}

/// A transmission reserved at some `(slot, channel)`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Reserved {
    sender: NodeId,
    receivers: Vec<NodeId>,
}

/// Two transmissions in the same cell conflict when either sender is
/// within two hops of a receiver of the other.
fn conflicts(a: &Reserved, b: &Reserved, within2: &BTreeMap<NodeId, BTreeSet<NodeId>>) -> Option<NodeId> {
    let hits = |tx: NodeId, rxs: &[NodeId]| rxs.iter().copied().find(|r| within2[r].contains(&tx));
    hits(b.sender, &a.receivers).or_else(|| hits(a.sender, &b.receivers))
}

struct Builder<'a> {
    graph: &'a ConnectivityGraph,
    within2: BTreeMap<NodeId, BTreeSet<NodeId>>,
    busy: BTreeMap<NodeId, BTreeSet<u32>>,
    reserved: BTreeMap<(u32, u8), Vec<Reserved>>,
    matrices: BTreeMap<NodeId, ScheduleMatrix>,
    k: u32,
}

impl Builder<'_> {
    fn fits(&self, r: &Reserved, slot: u32, channel: u8) -> bool {
        let free = |n: &NodeId| !self.busy.get(n).is_some_and(|s| s.contains(&slot));
        if !free(&r.sender) || !r.receivers.iter().all(free) {
            return false;
        }
        self.reserved
            .get(&(slot, channel))
            .is_none_or(|v| v.iter().all(|o| conflicts(r, o, &self.within2).is_none()))
    }

    /// First fit at or after `preferred_from`, falling back to the whole range.
    fn find(&self, r: &Reserved, range: Range<u32>, preferred_from: u32) -> Option<(u32, u8)> {
        let start = preferred_from.clamp(range.start, range.end);
        (start..range.end)
            .chain(range.start..start)
            .find_map(|s| (0..NUM_CHANNELS).find(|&c| self.fits(r, s, c)).map(|c| (s, c)))
    }

    fn place(
        &mut self,
        r: Reserved,
        ssf: Ssf,
        kind: CellKind,
        range: Range<u32>,
        preferred_from: u32,
        what: String,
    ) -> Result<u32, ScheduleError> {
        let Some((slot, channel)) = self.find(&r, range, preferred_from) else {
            return Err(ScheduleError::Infeasible {
                region: match ssf {
                    Ssf::I => "SSF_I",
                    Ssf::C => "SSF_C",
                    _ => "SSF_Dyn",
                },
                what,
                node: r.sender,
                neighborhood: self.within2[&r.sender].iter().copied().collect(),
            });
        };
        let unicast = kind != CellKind::Broadcast;
        let tx = Cell {
            slot,
            channel,
            role: Role::Tx,
            peer: if unicast {
                Peer::Node(r.receivers[0])
            } else {
                Peer::Broadcast
            },
            ssf,
            kind,
            active: true,
            k: self.k,
        };
        self.matrices.get_mut(&r.sender).expect("known node").insert(tx);
        for &rx in &r.receivers {
            self.matrices.get_mut(&rx).expect("known node").insert(Cell {
                role: Role::Rx,
                peer: Peer::Node(r.sender),
                ..tx
            });
            self.busy.entry(rx).or_default().insert(slot);
        }
        self.busy.entry(r.sender).or_default().insert(slot);
        self.reserved.entry((slot, channel)).or_default().push(r);
        Ok(slot)
    }

    fn unicast(
        &mut self,
        a: NodeId,
        b: NodeId,
        ssf: Ssf,
        kind: CellKind,
        range: Range<u32>,
        from: u32,
    ) -> Result<u32, ScheduleError> {
        let what = format!("{a}->{b} {kind:?} cell");
        self.place(
            Reserved {
                sender: a,
                receivers: vec![b],
            },
            ssf,
            kind,
            range,
            from,
            what,
        )
    }
}

/// Builds every node's static schedule.
///
/// SSF_I holds, per tree edge and direction, `cells_per_neighbor` Interest
/// cells plus `broadcast_cells_per_node` broadcast cells per node. Up-link
/// cells are ordered so that an Interest climbs the whole tree within one
/// slotframe. SSF_C mirrors every unicast SSF_I cell `k` times with roles
/// swapped; cells carrying content toward the leaves are ordered top-down.
pub fn build_static_schedule(
    graph: &ConnectivityGraph,
    dodag: &Dodag,
    params: &ScheduleParams,
) -> Result<BTreeMap<NodeId, ScheduleMatrix>, ScheduleError> {
    let partition = params.partition()?;
    let mut b = Builder {
        graph,
        within2: two_hop_sets(graph),
        busy: BTreeMap::new(),
        reserved: BTreeMap::new(),
        matrices: graph.nodes().map(|n| (n, ScheduleMatrix::new(n, partition))).collect(),
        k: params.k,
    };
    let ri = partition.range(Ssf::I);
    let rc = partition.range(Ssf::C);

    let mut by_rank: Vec<NodeId> = dodag.nodes().collect();
    by_rank.sort_by_key(|n| (dodag.rank_of(*n), *n));
    let mut deepest_first = by_rank.clone();
    deepest_first.sort_by_key(|n| (std::cmp::Reverse(dodag.rank_of(*n)), *n));

    // up-links, leaves first
    let mut up_slot: BTreeMap<NodeId, u32> = BTreeMap::new();
    for &n in &deepest_first {
        let Some(p) = dodag.parent_of(n) else { continue };
        let from = dodag
            .children_of(n)
            .filter_map(|c| up_slot.get(&c))
            .map(|s| s + 1)
            .max()
            .unwrap_or(ri.start);
        for i in 0..params.cells_per_neighbor {
            let s = b.unicast(n, p, Ssf::I, CellKind::Interest, ri.clone(), from)?;
            if i == 0 {
                up_slot.insert(n, s);
            }
        }
    }

    // broadcast cells, root first
    let mut bcast_slot: BTreeMap<NodeId, u32> = BTreeMap::new();
    for &n in &by_rank {
        let from = dodag
            .parent_of(n)
            .and_then(|p| bcast_slot.get(&p))
            .map_or(ri.start, |s| s + 1);
        let receivers: Vec<NodeId> = b.graph.adjacent(n).collect();
        for i in 0..params.broadcast_cells_per_node {
            let s = b.place(
                Reserved {
                    sender: n,
                    receivers: receivers.clone(),
                },
                Ssf::I,
                CellKind::Broadcast,
                ri.clone(),
                from,
                format!("broadcast cell of {n}"),
            )?;
            if i == 0 {
                bcast_slot.insert(n, s);
            }
        }
    }

    // down-links, root first
    let mut down_slot: BTreeMap<NodeId, u32> = BTreeMap::new();
    for &n in &by_rank {
        let from = down_slot.get(&n).map_or(ri.start, |s| s + 1);
        for c in dodag.children_of(n).collect::<Vec<_>>() {
            for i in 0..params.cells_per_neighbor {
                let s = b.unicast(n, c, Ssf::I, CellKind::Interest, ri.clone(), from)?;
                if i == 0 {
                    down_slot.insert(c, s);
                }
            }
        }
    }

    // content toward the leaves (answers to upward Interests), top-down
    let per_face = params.cells_per_neighbor * params.k;
    let mut cdown_slot: BTreeMap<NodeId, u32> = BTreeMap::new();
    for &n in &by_rank {
        let from = cdown_slot.get(&n).map_or(rc.start, |s| s + 1);
        for c in dodag.children_of(n).collect::<Vec<_>>() {
            for i in 0..per_face {
                let s = b.unicast(n, c, Ssf::C, CellKind::Content, rc.clone(), from)?;
                if i == 0 {
                    cdown_slot.insert(c, s);
                }
            }
        }
    }

    // content toward the root (answers to downward Interests), leaves first
    let mut cup_slot: BTreeMap<NodeId, u32> = BTreeMap::new();
    for &n in &deepest_first {
        let Some(p) = dodag.parent_of(n) else { continue };
        let from = dodag
            .children_of(n)
            .filter_map(|c| cup_slot.get(&c))
            .map(|s| s + 1)
            .max()
            .unwrap_or(rc.start);
        for i in 0..per_face {
            let s = b.unicast(n, p, Ssf::C, CellKind::Content, rc.clone(), from)?;
            if i == 0 {
                cup_slot.insert(n, s);
            }
        }
    }

    Ok(b.matrices)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A node holds more than one cell in a slot other than the shared one.
    HalfDuplex { node: NodeId, slot: u32 },
    /// A TX cell without the peer's RX cell, or the reverse.
    Unmatched {
        node: NodeId,
        peer: NodeId,
        slot: u32,
        channel: u8,
    },
    /// Two transmissions in one cell reach a common receiver's two-hop range.
    Interference {
        slot: u32,
        channel: u8,
        senders: (NodeId, NodeId),
        receiver: NodeId,
    },
    /// A cell outside the range of its sub-slotframe, or a missing shared cell.
    Partition { node: NodeId, slot: u32 },
    /// A cell toward a node that is not a radio neighbor.
    NotAdjacent { node: NodeId, peer: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::HalfDuplex { node, slot } => write!(f, "node {node} holds several cells in slot {slot}"),
            Violation::Unmatched {
                node,
                peer,
                slot,
                channel,
            } => write!(
                f,
                "cell ({slot},{channel}) of node {node} has no counterpart on node {peer}"
            ),
            Violation::Interference {
                slot,
                channel,
                senders,
                receiver,
            } => write!(
                f,
                "senders {} and {} interfere at receiver {receiver} in cell ({slot},{channel})",
                senders.0, senders.1
            ),
            Violation::Partition { node, slot } => write!(f, "node {node}: cell in slot {slot} violates the partition"),
            Violation::NotAdjacent { node, peer } => write!(f, "node {node} schedules non-neighbor {peer}"),
        }
    }
}

/// Checks a global schedule; an empty result means collision-free.
pub fn check_collision_free(schedules: &BTreeMap<NodeId, ScheduleMatrix>, graph: &ConnectivityGraph) -> Vec<Violation> {
    let within2 = two_hop_sets(graph);
    let mut out = Vec::new();
    let mut reserved: BTreeMap<(u32, u8), Vec<Reserved>> = BTreeMap::new();

    for (&n, m) in schedules {
        match m.get(0, 0) {
            Some(c) if c.role == Role::SharedBroadcast => {}
            _ => out.push(Violation::Partition { node: n, slot: 0 }),
        }
        let mut per_slot: BTreeMap<u32, usize> = BTreeMap::new();
        for c in m.cells() {
            let in_range = m.partition.range(c.ssf).contains(&c.slot);
            let shared_ok = (c.slot == 0) == (c.role == Role::SharedBroadcast && c.ssf == Ssf::Shared);
            if !in_range || !shared_ok {
                out.push(Violation::Partition { node: n, slot: c.slot });
            }
            if c.slot != 0 {
                *per_slot.entry(c.slot).or_default() += 1;
            }
            if let Some(p) = c.peer_node() {
                if !graph.are_adjacent(n, p) {
                    out.push(Violation::NotAdjacent { node: n, peer: p });
                }
                let want_role = if c.role == Role::Tx { Role::Rx } else { Role::Tx };
                let counterpart = schedules.get(&p).and_then(|pm| pm.get(c.slot, c.channel));
                let matched = counterpart.is_some_and(|o| {
                    o.role == want_role
                        && o.kind == c.kind
                        && (o.peer == Peer::Node(n) || (c.kind == CellKind::Broadcast && o.peer == Peer::Broadcast))
                });
                if !matched {
                    out.push(Violation::Unmatched {
                        node: n,
                        peer: p,
                        slot: c.slot,
                        channel: c.channel,
                    });
                }
            }
            if c.role == Role::Tx {
                let receivers = match c.peer {
                    Peer::Node(p) => vec![p],
                    Peer::Broadcast => {
                        let rx: Vec<NodeId> = graph.adjacent(n).collect();
                        for &r in &rx {
                            let listening =
                                schedules
                                    .get(&r)
                                    .and_then(|rm| rm.get(c.slot, c.channel))
                                    .is_some_and(|o| {
                                        o.role == Role::Rx && o.peer == Peer::Node(n) && o.kind == CellKind::Broadcast
                                    });
                            if !listening {
                                out.push(Violation::Unmatched {
                                    node: n,
                                    peer: r,
                                    slot: c.slot,
                                    channel: c.channel,
                                });
                            }
                        }
                        rx
                    }
                };
                reserved
                    .entry((c.slot, c.channel))
                    .or_default()
                    .push(Reserved { sender: n, receivers });
            }
        }
        for (slot, count) in per_slot {
            if count > 1 {
                out.push(Violation::HalfDuplex { node: n, slot });
            }
        }
    }

    for ((slot, channel), txs) in &reserved {
        for (i, a) in txs.iter().enumerate() {
            for b in &txs[i + 1..] {
                if let Some(receiver) = conflicts(a, b, &within2) {
                    out.push(Violation::Interference {
                        slot: *slot,
                        channel: *channel,
                        senders: (a.sender, b.sender),
                        receiver,
                    });
                }
            }
        }
    }
    out
}

pub const SCHEDULE_CSV_HEADER: &str = "node,slot_offset,channel_offset,role,peer,ssf,active,kind";

fn role_str(r: Role) -> &'static str {
    match r {
        Role::Tx => "TX",
        Role::Rx => "RX",
        Role::SharedBroadcast => "SHARED",
    }
}

fn ssf_str(s: Ssf) -> &'static str {
    match s {
        Ssf::Shared => "SHARED",
        Ssf::I => "I",
        Ssf::C => "C",
        Ssf::Dyn => "DYN",
    }
}

fn kind_str(k: CellKind) -> &'static str {
    match k {
        CellKind::Interest => "interest",
        CellKind::Content => "content",
        CellKind::Broadcast => "broadcast",
        CellKind::Shared => "shared",
    }
}

/// One line per cell, nodes and cells in ascending order.
pub fn schedule_to_csv(schedules: &BTreeMap<NodeId, ScheduleMatrix>) -> String {
    let mut out = String::from(SCHEDULE_CSV_HEADER);
    out.push('\n');
    for (n, m) in schedules {
        for c in m.cells() {
            let peer = match c.peer {
                Peer::Node(p) => p.to_string(),
                Peer::Broadcast => "BROADCAST".to_string(),
            };
            out.push_str(&format!(
                "{n},{},{},{},{peer},{},{},{}\n",
                c.slot,
                c.channel,
                role_str(c.role),
                ssf_str(c.ssf),
                c.active,
                kind_str(c.kind)
            ));
        }
    }
    out
}

/// Inverse of [`schedule_to_csv`]. Cells get `k` from `params`.
pub fn parse_schedule_csv(
    text: &str,
    params: &ScheduleParams,
) -> Result<BTreeMap<NodeId, ScheduleMatrix>, ConfigError> {
    let partition = params.partition()?;
    let mut out: BTreeMap<NodeId, ScheduleMatrix> = BTreeMap::new();
    let bad = |line: usize, why: &str| ConfigError::Invalid(format!("schedule line {line}: {why}"));
    for (i, line) in text.lines().enumerate().skip(1) {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(bad(line_no, "expected 8 fields"));
        }
        let num = |s: &str| s.parse::<u32>().map_err(|_| bad(line_no, "bad number"));
        let node = num(f[0])?;
        let slot = num(f[1])?;
        let channel = u8::try_from(num(f[2])?)
            .ok()
            .filter(|c| *c < NUM_CHANNELS)
            .ok_or_else(|| bad(line_no, "bad channel"))?;
        let role = match f[3] {
            "TX" => Role::Tx,
            "RX" => Role::Rx,
            "SHARED" => Role::SharedBroadcast,
            _ => return Err(bad(line_no, "bad role")),
        };
        let peer = match f[4] {
            "BROADCAST" => Peer::Broadcast,
            p => Peer::Node(num(p)?),
        };
        let ssf = match f[5] {
            "SHARED" => Ssf::Shared,
            "I" => Ssf::I,
            "C" => Ssf::C,
            "DYN" => Ssf::Dyn,
            _ => return Err(bad(line_no, "bad ssf")),
        };
        let active = f[6].parse::<bool>().map_err(|_| bad(line_no, "bad active flag"))?;
        let kind = match f[7] {
            "interest" => CellKind::Interest,
            "content" => CellKind::Content,
            "broadcast" => CellKind::Broadcast,
            "shared" => CellKind::Shared,
            _ => return Err(bad(line_no, "bad kind")),
        };
        if slot >= partition.slotframe_length {
            return Err(bad(line_no, "slot outside the slotframe"));
        }
        out.entry(node)
            .or_insert_with(|| ScheduleMatrix::new(node, partition))
            .insert(Cell {
                slot,
                channel,
                role,
                peer,
                ssf,
                kind,
                active,
                k: params.k,
            });
    }
    Ok(out)
}

/// Shared-cell backoff constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SharedCellParams {
    pub initial_window: u32,
    pub max_window: u32,
    pub max_retries: u32,
}

impl Default for SharedCellParams {
    fn default() -> Self {
        Self {
            initial_window: 2,
            max_window: 8,
            max_retries: 2,
        }
    }
}

/// Backoff state of one frame waiting for the shared cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharedBackoff {
    pub window: u32,
    pub counter: u32,
    pub retries: u32,
}

impl SharedBackoff {
    pub fn start<R: Rng>(params: &SharedCellParams, rng: &mut R) -> Self {
        Self {
            window: params.initial_window,
            counter: rng.gen_range(0..params.initial_window),
            retries: 0,
        }
    }

    /// Updates after a collision; `false` means the frame is dropped.
    pub fn on_collision<R: Rng>(&mut self, params: &SharedCellParams, rng: &mut R) -> bool {
        self.retries += 1;
        if self.retries > params.max_retries {
            return false;
        }
        self.window = (self.window * 2).min(params.max_window);
        self.counter = rng.gen_range(0..self.window);
        true
    }
}

/// One occurrence of the shared cell: contenders whose counter reached zero
/// transmit, the rest defer. Returns the transmitters; two or more of them
/// within range of a common listener collide there.
pub fn shared_cell_contend(contenders: &mut BTreeMap<NodeId, SharedBackoff>) -> Vec<NodeId> {
    let mut tx = Vec::new();
    for (&n, b) in contenders.iter_mut() {
        if b.counter == 0 {
            tx.push(n);
        } else {
            b.counter -= 1;
        }
    }
    tx
}

/// Beacons are staggered across nodes: node `n` beacons in frames where
/// `(frame + n) % period == 0`.
pub fn beacon_due(node: NodeId, frame: u64, period_frames: u32) -> bool {
    period_frames > 0 && (frame + u64::from(node)).is_multiple_of(u64::from(period_frames))
}
