//! NDN-style forwarding: names, the bimodal FIB, the PIT and the per-node
//! forwarder that ties them to the routing strategy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ConfigError;
use crate::packet::{DataChunk, Direction, InterestPacket};
use crate::radio::NodeId;
use crate::routing::{self, TreePosition};

/// Hierarchical content name such as `/content/17`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Name {
    components: Vec<String>,
}

impl Name {
    pub fn new<I, S>(components: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            components: components.into_iter().map(Into::into).collect(),
        }
    }

    /// The empty prefix, written `/*`, matching every name.
    pub fn root() -> Self {
        Self::default()
    }

    /// Parses a FIB prefix. A trailing `*` component is accepted and dropped:
    /// prefix matching already covers any suffix.
    pub fn parse_prefix(s: &str) -> Result<Self, ConfigError> {
        let mut parts: Vec<&str> = s.split('/').filter(|p| !p.is_empty()).collect();
        if parts.last() == Some(&"*") {
            parts.pop();
        }
        if parts.contains(&"*") {
            return Err(ConfigError::Invalid(format!(
                "wildcard only allowed as final component: {s}"
            )));
        }
        Ok(Self::new(parts))
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn is_prefix_of(&self, other: &Name) -> bool {
        other.components.starts_with(&self.components)
    }

    pub fn child(&self, component: impl Into<String>) -> Name {
        let mut c = self.components.clone();
        c.push(component.into());
        Name { components: c }
    }

    /// Name of chunk `index` of the content object `self`.
    pub fn chunk(&self, index: u32) -> Name {
        self.child(index.to_string())
    }

    pub fn chunk_index(&self) -> Option<u32> {
        self.components.last().and_then(|c| c.parse().ok())
    }

    pub fn wire_len(&self) -> usize {
        self.components.iter().map(|c| c.len() + 2).sum()
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.components.is_empty() {
            return write!(f, "/");
        }
        for c in &self.components {
            write!(f, "/{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Name {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('/').filter(|p| !p.is_empty()).collect();
        if parts.contains(&"*") {
            return Err(ConfigError::Invalid(format!(
                "content names cannot contain wildcards: {s}"
            )));
        }
        Ok(Self::new(parts))
    }
}

impl Serialize for Name {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Name {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Name::parse_prefix(&s).map_err(serde::de::Error::custom)
    }
}

/// A face is either the local application or the link to one neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaceId {
    App,
    Neighbor(NodeId),
}

impl FaceId {
    pub fn neighbor(&self) -> Option<NodeId> {
        match self {
            FaceId::App => None,
            FaceId::Neighbor(n) => Some(*n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FibMode {
    Include,
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BimodalFibEntry {
    pub prefix: Name,
    pub face: NodeId,
    pub mode: FibMode,
}

/// Result of a FIB lookup over a candidate face set.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FibLookup {
    pub faces: Vec<NodeId>,
    /// At least one face carried an INCLUDE decision.
    pub include_matched: bool,
    /// At least one entry matched the name on some candidate face.
    pub any_match: bool,
}

/// Prefix table whose entries carry include/exclude mode per face.
///
/// Capacity `None` means unbounded (the gateway). Bounded tables evict the
/// least recently used entry on overflow.
#[derive(Debug, Clone, Default)]
pub struct BimodalFib {
    entries: BTreeMap<(Name, NodeId), FibMode>,
    last_used: BTreeMap<(Name, NodeId), u64>,
    capacity: Option<usize>,
    clock: u64,
}

impl BimodalFib {
    pub fn new(capacity: Option<usize>) -> Self {
        Self {
            capacity,
            ..Self::default()
        }
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = BimodalFibEntry> + '_ {
        self.entries.iter().map(|((p, f), m)| BimodalFibEntry {
            prefix: p.clone(),
            face: *f,
            mode: *m,
        })
    }

    pub fn get(&self, prefix: &Name, face: NodeId) -> Option<FibMode> {
        self.entries.get(&(prefix.clone(), face)).copied()
    }

    /// Installs or overwrites `(prefix, face)`. Returns false when the table
    /// has zero capacity and nothing was stored.
    pub fn insert(&mut self, prefix: Name, face: NodeId, mode: FibMode) -> bool {
        let key = (prefix, face);
        self.clock += 1;
        if !self.entries.contains_key(&key) {
            match self.capacity {
                Some(0) => return false,
                Some(cap) if self.entries.len() >= cap => {
                    let victim = self
                        .last_used
                        .iter()
                        .min_by_key(|(k, &t)| (t, (*k).clone()))
                        .map(|(k, _)| k.clone())
                        .expect("full table has entries");
                    self.entries.remove(&victim);
                    self.last_used.remove(&victim);
                }
                _ => {}
            }
        }
        self.entries.insert(key.clone(), mode);
        self.last_used.insert(key, self.clock);
        true
    }

    pub fn remove(&mut self, prefix: &Name, face: NodeId) -> Option<FibMode> {
        let key = (prefix.clone(), face);
        self.last_used.remove(&key);
        self.entries.remove(&key)
    }

    /// Mode of the longest prefix matching `name` on `face`.
    pub fn decision(&self, name: &Name, face: NodeId) -> Option<(usize, FibMode)> {
        self.matching(name, face)
            .max_by_key(|(len, _, _)| *len)
            .map(|(l, _, m)| (l, m))
    }

    fn matching<'a>(&'a self, name: &'a Name, face: NodeId) -> impl Iterator<Item = (usize, &'a Name, FibMode)> + 'a {
        self.entries
            .iter()
            .filter(move |((p, f), _)| *f == face && p.is_prefix_of(name))
            .map(|((p, _), m)| (p.len(), p, *m))
    }

    /// Eligible faces for `name` among `faces`.
    ///
    /// Per face, the longest matching prefix decides. If any face resolves to
    /// INCLUDE, exactly the INCLUDE faces are returned. Otherwise every face
    /// not resolved to EXCLUDE is returned, which for an empty table is every
    /// face (transparent flooding).
    pub fn fib_lookup(&self, name: &Name, faces: &[NodeId]) -> FibLookup {
        let decisions: Vec<(NodeId, Option<FibMode>)> = faces
            .iter()
            .map(|&f| (f, self.decision(name, f).map(|(_, m)| m)))
            .collect();
        let include_matched = decisions.iter().any(|(_, d)| *d == Some(FibMode::Include));
        let any_match = decisions.iter().any(|(_, d)| d.is_some());
        let faces = if include_matched {
            decisions
                .iter()
                .filter(|(_, d)| *d == Some(FibMode::Include))
                .map(|(f, _)| *f)
                .collect()
        } else {
            decisions
                .iter()
                .filter(|(_, d)| *d != Some(FibMode::Exclude))
                .map(|(f, _)| *f)
                .collect()
        };
        FibLookup {
            faces,
            include_matched,
            any_match,
        }
    }

    /// [`fib_lookup`](Self::fib_lookup) that also refreshes LRU stamps of the
    /// deciding entries.
    pub fn lookup_and_touch(&mut self, name: &Name, faces: &[NodeId]) -> FibLookup {
        let result = self.fib_lookup(name, faces);
        self.clock += 1;
        let clock = self.clock;
        for &f in faces {
            let best = self
                .matching(name, f)
                .max_by_key(|(len, _, _)| *len)
                .map(|(_, p, _)| p.clone());
            if let Some(p) = best {
                self.last_used.insert((p, f), clock);
            }
        }
        result
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitEntry {
    pub name: Name,
    pub incoming: BTreeSet<FaceId>,
    /// Neighbors the Interest was forwarded to.
    pub outgoing: BTreeSet<NodeId>,
    pub expiry: u64,
    /// Nonce that created the entry and the direction it arrived in.
    pub origin_nonce: u64,
    pub origin_direction: Direction,
}

#[derive(Debug, Clone, Default)]
pub struct PitTable {
    entries: BTreeMap<Name, PitEntry>,
}

impl PitTable {
    pub fn get(&self, name: &Name) -> Option<&PitEntry> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, entry: PitEntry) {
        self.entries.insert(entry.name.clone(), entry);
    }

    pub fn remove(&mut self, name: &Name) -> Option<PitEntry> {
        self.entries.remove(name)
    }

    fn get_mut(&mut self, name: &Name) -> Option<&mut PitEntry> {
        self.entries.get_mut(name)
    }

    /// Removes and returns entries with `expiry <= now`.
    pub fn expire(&mut self, now: u64) -> Vec<PitEntry> {
        let dead: Vec<Name> = self
            .entries
            .values()
            .filter(|e| e.expiry <= now)
            .map(|e| e.name.clone())
            .collect();
        dead.into_iter().filter_map(|n| self.entries.remove(&n)).collect()
    }

    pub fn next_expiry(&self) -> Option<u64> {
        self.entries.values().map(|e| e.expiry).min()
    }
}

/// Side effects requested by the forwarder.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Send the Interest to these neighbors (one MAC transmission if the MAC
    /// can broadcast, otherwise one per neighbor).
    SendInterest {
        to: Vec<NodeId>,
        interest: InterestPacket,
    },
    SendData {
        to: NodeId,
        chunk: DataChunk,
    },
    /// Hand a chunk to the local application.
    DeliverToApp(DataChunk),
    /// Expect content from this neighbor (requester side of the face).
    ActivateRx(NodeId),
    DeactivateRx(NodeId),
    /// Content may flow to this neighbor (responder side).
    ActivateTx(NodeId),
    DeactivateTx(NodeId),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwarderCounters {
    pub interests_received: u64,
    pub nonce_drops: u64,
    pub aggregated: u64,
    pub dead_ends: u64,
    pub unsolicited_data: u64,
    pub data_forwarded: u64,
    pub produced: u64,
}

/// Per-node forwarding engine.
#[derive(Debug, Clone)]
pub struct Forwarder {
    pub node: NodeId,
    pub position: TreePosition,
    pub fib: BimodalFib,
    pub pit: PitTable,
    seen_nonces: BTreeSet<(u64, Direction)>,
    produces: Vec<Name>,
    pub pit_lifetime_slots: u64,
    pub chunk_payload_bytes: usize,
    pub counters: ForwarderCounters,
}

impl Forwarder {
    pub fn new(node: NodeId, position: TreePosition, fib: BimodalFib, pit_lifetime_slots: u64) -> Self {
        Self {
            node,
            position,
            fib,
            pit: PitTable::default(),
            seen_nonces: BTreeSet::new(),
            produces: Vec::new(),
            pit_lifetime_slots,
            chunk_payload_bytes: 64,
            counters: ForwarderCounters::default(),
        }
    }

    pub fn add_produced_prefix(&mut self, prefix: Name) {
        self.produces.push(prefix);
    }

    pub fn produces(&self, name: &Name) -> bool {
        self.produces.iter().any(|p| p.is_prefix_of(name))
    }

    pub fn produced_prefixes(&self) -> &[Name] {
        &self.produces
    }

    fn produce(&mut self, name: &Name) -> DataChunk {
        self.counters.produced += 1;
        DataChunk {
            name: name.clone(),
            chunk_index: name.chunk_index().unwrap_or(0),
            payload_bytes: self.chunk_payload_bytes,
        }
    }

    /// Processes an Interest arriving on `from` at slot `now`.
    pub fn on_interest(&mut self, now: u64, interest: InterestPacket, from: FaceId) -> Vec<Action> {
        self.counters.interests_received += 1;
        let mut actions = Vec::new();

        // Loop freedom: a DOWN Interest is only accepted from the parent.
        if interest.direction == Direction::Down {
            if let (FaceId::Neighbor(n), Some(p)) = (from, self.position.parent) {
                if n != p {
                    self.counters.nonce_drops += 1;
                    return actions;
                }
            }
        }
        if !self.seen_nonces.insert((interest.nonce, interest.direction)) {
            self.counters.nonce_drops += 1;
            return actions;
        }

        if self.produces(&interest.name) {
            let chunk = self.produce(&interest.name);
            match from {
                FaceId::App => actions.push(Action::DeliverToApp(chunk)),
                FaceId::Neighbor(n) => {
                    actions.push(Action::ActivateTx(n));
                    actions.push(Action::SendData { to: n, chunk });
                }
            }
            return actions;
        }

        // A DOWN pass of an Interest this node already forwarded upward keeps
        // the original entry and continues flooding into the subtree.
        let continuation = self.pit.get(&interest.name).is_some_and(|e| {
            e.origin_nonce == interest.nonce
                && e.origin_direction == Direction::Up
                && interest.direction == Direction::Down
        });

        if !continuation {
            if let Some(entry) = self.pit.get_mut(&interest.name) {
                self.counters.aggregated += 1;
                if entry.incoming.insert(from) {
                    if let FaceId::Neighbor(n) = from {
                        actions.push(Action::ActivateTx(n));
                    }
                }
                return actions;
            }
        }

        let decision = routing::forward_decision(&self.position, &interest, from, &mut self.fib);
        let Some((direction, faces)) = decision else {
            self.counters.dead_ends += 1;
            return actions;
        };
        let faces: Vec<NodeId> = faces
            .into_iter()
            .filter(|&f| FaceId::Neighbor(f) != from || direction == Direction::Down)
            .collect();
        if faces.is_empty() {
            self.counters.dead_ends += 1;
            return actions;
        }

        if continuation {
            let entry = self.pit.get_mut(&interest.name).expect("checked");
            for &f in &faces {
                if entry.outgoing.insert(f) {
                    actions.push(Action::ActivateRx(f));
                }
            }
            entry.expiry = entry.expiry.max(now + self.pit_lifetime_slots);
        } else {
            let mut incoming = BTreeSet::new();
            incoming.insert(from);
            if let FaceId::Neighbor(n) = from {
                actions.push(Action::ActivateTx(n));
            }
            for &f in &faces {
                actions.push(Action::ActivateRx(f));
            }
            self.pit.insert(PitEntry {
                name: interest.name.clone(),
                incoming,
                outgoing: faces.iter().copied().collect(),
                expiry: now + self.pit_lifetime_slots,
                origin_nonce: interest.nonce,
                origin_direction: interest.direction,
            });
        }
        self.seen_nonces.insert((interest.nonce, direction));
        actions.push(Action::SendInterest {
            to: faces,
            interest: InterestPacket { direction, ..interest },
        });
        actions
    }

    /// Processes a chunk arriving from neighbor `from`. Unsolicited chunks
    /// (no PIT entry) are dropped and counted.
    pub fn on_data(&mut self, chunk: DataChunk, _from: NodeId) -> Vec<Action> {
        let Some(entry) = self.pit.remove(&chunk.name) else {
            self.counters.unsolicited_data += 1;
            return Vec::new();
        };
        let mut actions: Vec<Action> = entry.outgoing.iter().map(|&f| Action::DeactivateRx(f)).collect();
        for face in &entry.incoming {
            match face {
                FaceId::App => actions.push(Action::DeliverToApp(chunk.clone())),
                FaceId::Neighbor(n) => {
                    self.counters.data_forwarded += 1;
                    actions.push(Action::SendData {
                        to: *n,
                        chunk: chunk.clone(),
                    });
                }
            }
        }
        actions
    }

    /// Drops expired PIT entries, releasing their cell activations.
    pub fn expire(&mut self, now: u64) -> Vec<Action> {
        let mut actions = Vec::new();
        for e in self.pit.expire(now) {
            actions.extend(e.outgoing.iter().map(|&f| Action::DeactivateRx(f)));
            actions.extend(e.incoming.iter().filter_map(|f| f.neighbor()).map(Action::DeactivateTx));
        }
        actions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> Name {
        s.parse().unwrap()
    }

    fn p(s: &str) -> Name {
        Name::parse_prefix(s).unwrap()
    }

    #[test]
    fn name_prefixes() {
        assert!(n("/a/b").is_prefix_of(&n("/a/b/c")));
        assert!(!n("/a/c").is_prefix_of(&n("/a/b/c")));
        assert!(p("/*").is_prefix_of(&n("/anything")));
        assert!(p("/a/*").is_prefix_of(&n("/a")));
        assert!(Name::parse_prefix("/a/*/b").is_err());
        assert!("/a/*".parse::<Name>().is_err());
        assert_eq!(n("/content/7").chunk_index(), Some(7));
        assert_eq!(n("/content").chunk(3).to_string(), "/content/3");
    }

    #[test]
    fn empty_fib_floods() {
        let fib = BimodalFib::new(None);
        let r = fib.fib_lookup(&n("/x/y"), &[1, 2, 3]);
        assert_eq!(r.faces, vec![1, 2, 3]);
        assert!(!r.include_matched && !r.any_match);
    }

    #[test]
    fn exclude_blocks_one_face() {
        let mut fib = BimodalFib::new(None);
        fib.insert(p("/light/*"), 2, FibMode::Exclude);
        assert_eq!(fib.fib_lookup(&n("/light/bulb1"), &[1, 2, 3]).faces, vec![1, 3]);
        assert_eq!(fib.fib_lookup(&n("/heat/x"), &[1, 2, 3]).faces, vec![1, 2, 3]);
    }

    #[test]
    fn longest_prefix_wins_per_face() {
        let mut fib = BimodalFib::new(None);
        fib.insert(p("/a/*"), 1, FibMode::Include);
        fib.insert(p("/a/b/*"), 1, FibMode::Exclude);
        let r = fib.fib_lookup(&n("/a/b/x"), &[1, 2]);
        assert_eq!(r.faces, vec![2]);
        assert!(!r.include_matched);
        let r = fib.fib_lookup(&n("/a/c"), &[1, 2]);
        assert_eq!(r.faces, vec![1]);
        assert!(r.include_matched);
    }

    #[test]
    fn include_restricts_to_matched_faces() {
        let mut fib = BimodalFib::new(None);
        fib.insert(p("/*"), 3, FibMode::Exclude);
        fib.insert(p("/s/temp/*"), 2, FibMode::Include);
        assert_eq!(fib.fib_lookup(&n("/s/temp/1"), &[1, 2, 3]).faces, vec![2]);
        assert_eq!(fib.fib_lookup(&n("/q"), &[1, 2, 3]).faces, vec![1, 2]);
    }

    #[test]
    fn lru_eviction() {
        let mut fib = BimodalFib::new(Some(2));
        fib.insert(p("/a"), 1, FibMode::Include);
        fib.insert(p("/b"), 1, FibMode::Include);
        fib.lookup_and_touch(&n("/a/x"), &[1]);
        fib.insert(p("/c"), 1, FibMode::Include);
        assert_eq!(fib.len(), 2);
        assert!(fib.get(&p("/a"), 1).is_some());
        assert!(fib.get(&p("/b"), 1).is_none());
        let mut zero = BimodalFib::new(Some(0));
        assert!(!zero.insert(p("/a"), 1, FibMode::Include));
        assert!(zero.is_empty());
    }

    fn leaf_under(parent: NodeId) -> TreePosition {
        TreePosition {
            node: 9,
            parent: Some(parent),
            children: BTreeSet::new(),
            rank: 1,
        }
    }

    fn interest(name: &str, nonce: u64, direction: Direction) -> InterestPacket {
        InterestPacket {
            name: n(name),
            nonce,
            direction,
            piggyback: None,
        }
    }

    #[test]
    fn producer_answers_on_reverse_face() {
        let pos = TreePosition {
            node: 1,
            parent: None,
            children: BTreeSet::from([2]),
            rank: 0,
        };
        let mut fw = Forwarder::new(1, pos, BimodalFib::new(None), 10);
        fw.add_produced_prefix(n("/content"));
        let actions = fw.on_interest(0, interest("/content/4", 1, Direction::Up), FaceId::Neighbor(2));
        match &actions[..] {
            [Action::ActivateTx(2), Action::SendData { to: 2, chunk }] => {
                assert_eq!(chunk.chunk_index, 4)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn aggregation_and_nonce_filter() {
        let pos = TreePosition {
            node: 5,
            parent: Some(2),
            children: BTreeSet::from([7, 9]),
            rank: 2,
        };
        let mut fw = Forwarder::new(5, pos, BimodalFib::new(Some(8)), 10);
        let first = fw.on_interest(0, interest("/c/1", 11, Direction::Up), FaceId::Neighbor(9));
        assert!(first
            .iter()
            .any(|a| matches!(a, Action::SendInterest { to, .. } if to == &vec![2])));
        // same name, other face: aggregated, not re-forwarded
        let second = fw.on_interest(1, interest("/c/1", 12, Direction::Up), FaceId::Neighbor(7));
        assert!(!second.iter().any(|a| matches!(a, Action::SendInterest { .. })));
        assert_eq!(fw.pit.get(&n("/c/1")).unwrap().incoming.len(), 2);
        // duplicate nonce: no state change
        let before = fw.pit.get(&n("/c/1")).cloned();
        let third = fw.on_interest(2, interest("/c/1", 11, Direction::Up), FaceId::Neighbor(9));
        assert!(third.is_empty());
        assert_eq!(fw.pit.get(&n("/c/1")).cloned(), before);
        assert_eq!(fw.counters.nonce_drops, 1);

        // data fans out to both incoming faces and clears the entry
        let chunk = DataChunk {
            name: n("/c/1"),
            chunk_index: 1,
            payload_bytes: 10,
        };
        let out = fw.on_data(chunk.clone(), 2);
        let sends: Vec<_> = out
            .iter()
            .filter_map(|a| match a {
                Action::SendData { to, .. } => Some(*to),
                _ => None,
            })
            .collect();
        assert_eq!(sends, vec![7, 9]);
        assert!(fw.pit.is_empty());
        assert!(fw.on_data(chunk, 2).is_empty());
        assert_eq!(fw.counters.unsolicited_data, 1);
    }

    #[test]
    fn expired_entry_drops_late_chunk() {
        let mut fw = Forwarder::new(9, leaf_under(5), BimodalFib::new(Some(8)), 3);
        fw.on_interest(0, interest("/c/2", 1, Direction::Up), FaceId::App);
        let exp = fw.expire(3);
        assert!(exp.contains(&Action::DeactivateRx(5)));
        let late = fw.on_data(
            DataChunk {
                name: n("/c/2"),
                chunk_index: 2,
                payload_bytes: 1,
            },
            5,
        );
        assert!(late.is_empty());
        assert_eq!(fw.counters.unsolicited_data, 1);
    }

    #[test]
    fn down_interest_from_non_parent_is_dropped() {
        let mut fw = Forwarder::new(9, leaf_under(5), BimodalFib::new(Some(8)), 3);
        let a = fw.on_interest(0, interest("/c/2", 1, Direction::Down), FaceId::Neighbor(4));
        assert!(a.is_empty());
    }
}
