//! Tree routing: DODAG formation, name advertisements toward the root, and
//! the up/down Interest forwarding strategy.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::ConfigError;
use crate::icn::{BimodalFib, FaceId, FibMode, Name};
use crate::packet::{Direction, InterestPacket};
use crate::radio::{ConnectivityGraph, NodeId};

/// Root-anchored shortest-path tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dodag {
    pub root: NodeId,
    pub parent: BTreeMap<NodeId, NodeId>,
    pub children: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub rank: BTreeMap<NodeId, u32>,
}

impl Dodag {
    /// Assembles a tree from a parent map, deriving children and ranks.
    pub fn from_parents(root: NodeId, parent: BTreeMap<NodeId, NodeId>) -> Result<Self, ConfigError> {
        let mut children: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        children.entry(root).or_default();
        for (&c, &p) in &parent {
            children.entry(p).or_default().insert(c);
            children.entry(c).or_default();
        }
        let mut rank = BTreeMap::new();
        rank.insert(root, 0);
        let mut frontier = vec![root];
        while let Some(n) = frontier.pop() {
            let r = rank[&n];
            for &c in &children[&n] {
                if rank.insert(c, r + 1).is_some() {
                    return Err(ConfigError::Invalid(format!("cycle through node {c}")));
                }
                frontier.push(c);
            }
        }
        let orphans: Vec<NodeId> = parent.keys().copied().filter(|n| !rank.contains_key(n)).collect();
        if !orphans.is_empty() {
            return Err(ConfigError::Disconnected(orphans));
        }
        Ok(Self {
            root,
            parent,
            children,
            rank,
        })
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.rank.keys().copied()
    }

    pub fn parent_of(&self, node: NodeId) -> Option<NodeId> {
        self.parent.get(&node).copied()
    }

    pub fn children_of(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.children.get(&node).into_iter().flatten().copied()
    }

    pub fn rank_of(&self, node: NodeId) -> Option<u32> {
        self.rank.get(&node).copied()
    }

    pub fn max_rank(&self) -> u32 {
        self.rank.values().copied().max().unwrap_or(0)
    }

    /// Nodes from `node` up to and including the root.
    pub fn path_to_root(&self, node: NodeId) -> Vec<NodeId> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent_of(cur) {
            path.push(p);
            cur = p;
        }
        path
    }

    /// `node` and everything below it.
    pub fn subtree(&self, node: NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            if out.insert(n) {
                stack.extend(self.children_of(n));
            }
        }
        out
    }

    pub fn position(&self, node: NodeId) -> TreePosition {
        TreePosition {
            node,
            parent: self.parent_of(node),
            children: self.children_of(node).collect(),
            rank: self.rank_of(node).unwrap_or(u32::MAX),
        }
    }

    /// `node, parent, rank` lines; the root's parent column is empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,parent,rank\n");
        for (&n, &r) in &self.rank {
            let p = self.parent_of(n).map(|p| p.to_string()).unwrap_or_default();
            out.push_str(&format!("{n},{p},{r}\n"));
        }
        out
    }
}

/// What a node knows about its place in the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreePosition {
    pub node: NodeId,
    pub parent: Option<NodeId>,
    pub children: BTreeSet<NodeId>,
    pub rank: u32,
}

impl TreePosition {
    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }
}

/// Wavefront tree construction: each node attaches to the lowest-id
/// neighbor among those closest to the root.
pub fn build_dodag(graph: &ConnectivityGraph, root: NodeId) -> Result<Dodag, ConfigError> {
    if !graph.contains(root) {
        return Err(ConfigError::UnknownNode(root));
    }
    let unreachable = graph.unreachable_from(root);
    if !unreachable.is_empty() {
        return Err(ConfigError::Disconnected(unreachable));
    }
    let mut rank: BTreeMap<NodeId, u32> = BTreeMap::from([(root, 0)]);
    let mut parent = BTreeMap::new();
    let mut wave = vec![root];
    let mut r = 0;
    while !wave.is_empty() {
        let mut next = BTreeMap::new();
        for &sender in &wave {
            for n in graph.adjacent(sender) {
                if rank.contains_key(&n) {
                    continue;
                }
                next.entry(n)
                    .and_modify(|p: &mut NodeId| *p = (*p).min(sender))
                    .or_insert(sender);
            }
        }
        r += 1;
        for (&n, &p) in &next {
            rank.insert(n, r);
            parent.insert(n, p);
        }
        wave = next.into_keys().collect();
    }
    Dodag::from_parents(root, parent)
}

/// In-band DODAG membership driven by received DIOs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DodagMember {
    pub rank: Option<u32>,
    pub parent: Option<NodeId>,
}

/// What a DIO changed at the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DioEffect {
    pub rank_changed: bool,
    pub parent_changed: bool,
}

impl DodagMember {
    pub fn root() -> Self {
        Self {
            rank: Some(0),
            parent: None,
        }
    }

    /// Adopts `sender` if it offers a strictly better rank, or an equal rank
    /// through a lower node id.
    pub fn on_dio(&mut self, sender: NodeId, sender_rank: u32) -> DioEffect {
        let offered = sender_rank + 1;
        let better = match (self.rank, self.parent) {
            (Some(0), None) => false,
            (None, _) => true,
            (Some(r), Some(p)) => offered < r || (offered == r && sender < p),
            (Some(_), None) => true,
        };
        if !better {
            return DioEffect::default();
        }
        let rank_changed = self.rank != Some(offered);
        self.rank = Some(offered);
        self.parent = Some(sender);
        DioEffect {
            rank_changed,
            parent_changed: true,
        }
    }
}

/// One FIB installation caused by a name advertisement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FibUpdate {
    pub node: NodeId,
    pub prefix: Name,
    pub face: NodeId,
    pub installed: bool,
}

/// Handles a NAM for `prefix` that reached `node` from `child`. Returns the
/// update and whether the NAM continues to the parent.
pub fn accept_nam(
    node: NodeId,
    fib: &mut BimodalFib,
    prefix: &Name,
    child: NodeId,
    is_root: bool,
) -> (FibUpdate, bool) {
    let installed = fib.insert(prefix.clone(), child, FibMode::Include);
    (
        FibUpdate {
            node,
            prefix: prefix.clone(),
            face: child,
            installed,
        },
        !is_root,
    )
}

/// Walks a NAM from `origin` to the root, updating each ancestor's FIB.
pub fn propagate_nam(
    prefix: &Name,
    origin: NodeId,
    dodag: &Dodag,
    fibs: &mut BTreeMap<NodeId, BimodalFib>,
) -> Vec<FibUpdate> {
    let mut updates = Vec::new();
    let mut child = origin;
    while let Some(parent) = dodag.parent_of(child) {
        let fib = fibs.entry(parent).or_default();
        let (update, forward) = accept_nam(parent, fib, prefix, child, parent == dodag.root);
        updates.push(update);
        if !forward {
            break;
        }
        child = parent;
    }
    updates
}

/// Installs `EXCLUDE *` toward every child that advertised nothing.
pub fn exclude_silent_children(
    dodag: &Dodag,
    fibs: &mut BTreeMap<NodeId, BimodalFib>,
    advertised_from: &BTreeMap<NodeId, BTreeSet<NodeId>>,
) {
    for node in dodag.nodes().collect::<Vec<_>>() {
        let heard = advertised_from.get(&node);
        for c in dodag.children_of(node).collect::<Vec<_>>() {
            if heard.is_none_or(|h| !h.contains(&c)) {
                fibs.entry(node).or_default().insert(Name::root(), c, FibMode::Exclude);
            }
        }
    }
}

/// Chooses direction and next hops for an Interest arriving on `from`.
///
/// UP Interests are redirected down when a child face carries an INCLUDE
/// match, otherwise climb to the parent; the root turns them around. DOWN
/// Interests only ever go to children. `None` is a dead end.
pub fn forward_decision(
    position: &TreePosition,
    interest: &InterestPacket,
    from: FaceId,
    fib: &mut BimodalFib,
) -> Option<(Direction, Vec<NodeId>)> {
    let children: Vec<NodeId> = position.children.iter().copied().collect();
    let down = |fib: &mut BimodalFib| {
        let faces = fib.lookup_and_touch(&interest.name, &children).faces;
        (!faces.is_empty()).then_some((Direction::Down, faces))
    };
    match interest.direction {
        Direction::Down => down(fib),
        Direction::Up => match position.parent {
            None => down(fib),
            Some(parent) => {
                let _ = from;
                let below = fib.lookup_and_touch(&interest.name, &children);
                if below.include_matched {
                    return Some((Direction::Down, below.faces));
                }
                if fib.decision(&interest.name, parent).map(|(_, m)| m) == Some(FibMode::Exclude) {
                    return None;
                }
                Some((Direction::Up, vec![parent]))
            }
        },
    }
}
