//! Node-level protocol logic shared by both link layers: forwarding,
//! bootstrap (DIO/DAO/NAM), consumer applications and metric counters.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde_json::{json, Value};

use crate::config::{MacMode, ScenarioConfig};
use crate::icn::{Action, BimodalFib, FaceId, Forwarder, Name};
use crate::metrics::TraceEvent;
use crate::packet::{DataChunk, Direction, InterestPacket, NamPacket, Packet};
use crate::radio::{ConnectivityGraph, Destination, NodeId};
use crate::routing::{accept_nam, exclude_silent_children, Dodag, DodagMember};

/// Work handed to the link layer.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Out {
    Send {
        from: NodeId,
        dest: Destination,
        /// Intended receivers of a broadcast Interest; empty means everyone.
        targets: Vec<NodeId>,
        packet: Packet,
    },
    /// Content from `peer` is (no longer) expected at `node`.
    Listen { node: NodeId, peer: NodeId, active: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RunPhase {
    Bootstrap,
    Workload { start: u64 },
    Finished { at: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    deadline: u64,
}

/// A consumer fetching numbered chunks under one prefix.
#[derive(Debug, Clone)]
pub(crate) struct App {
    pub prefix: Name,
    pub main: bool,
    /// `None` keeps requesting until the main consumer is done.
    pub total: Option<u32>,
    rate: f64,
    tokens: f64,
    next_new: u32,
    attempts: BTreeMap<u32, u32>,
    first_sent: BTreeMap<u32, u64>,
    outstanding: BTreeMap<u32, Pending>,
    retx: VecDeque<u32>,
    pub delivered: BTreeSet<u32>,
    pub failed: BTreeSet<u32>,
}

impl App {
    fn new(prefix: Name, main: bool, total: Option<u32>, rate: f64) -> Self {
        Self {
            prefix,
            main,
            total,
            rate,
            tokens: 0.0,
            next_new: 0,
            attempts: BTreeMap::new(),
            first_sent: BTreeMap::new(),
            outstanding: BTreeMap::new(),
            retx: VecDeque::new(),
            delivered: BTreeSet::new(),
            failed: BTreeSet::new(),
        }
    }

    fn resolved(&self) -> bool {
        self.total
            .is_some_and(|t| (self.delivered.len() + self.failed.len()) as u32 >= t)
    }

    fn next_chunk(&mut self) -> Option<u32> {
        if let Some(i) = self.retx.pop_front() {
            return Some(i);
        }
        if self.total.is_none_or(|t| self.next_new < t) {
            self.next_new += 1;
            return Some(self.next_new - 1);
        }
        None
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NodeCtx {
    pub fwd: Forwarder,
    pub member: DodagMember,
    dao_to: Option<NodeId>,
    dao_inflight: bool,
    nam_sent: bool,
    pub apps: Vec<App>,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Counters {
    pub e2e_retx: u64,
    pub dups: u64,
    pub mac_retx: u64,
    pub collisions: u64,
    pub shared_collisions: u64,
}

pub(crate) struct Network {
    pub cfg: ScenarioConfig,
    pub graph: ConnectivityGraph,
    /// Tree the static schedule was built on.
    pub dodag: Dodag,
    /// Tree in use for forwarding; differs from `dodag` only for CSMA.
    pub tree: Dodag,
    pub nodes: BTreeMap<NodeId, NodeCtx>,
    pub trace: Vec<TraceEvent>,
    pub counters: Counters,
    pub phase: RunPhase,
    pub latencies: Vec<f64>,
    pub ttc_s: Option<f64>,
    listening: BTreeMap<(NodeId, NodeId), u32>,
    advertised_from: BTreeMap<NodeId, BTreeSet<NodeId>>,
    control_in_flight: u32,
    timeout_slots: u64,
    nonce: u64,
}

fn is_control(p: &Packet) -> bool {
    matches!(p, Packet::Dio { .. } | Packet::Dao { .. } | Packet::Nam(_))
}

impl Network {
    pub fn new(cfg: &ScenarioConfig, graph: ConnectivityGraph, dodag: Dodag) -> Self {
        let l = u64::from(cfg.schedule.slotframe_length);
        let slot_ms = f64::from(cfg.slot_ms());
        let timeout_slots = match (cfg.consumer_policy.timeout_s, cfg.mode.is_tsch()) {
            (Some(t), _) => (t * 1000.0 / slot_ms).ceil() as u64,
            // worst-case round trip through the static schedule, plus slack
            (None, true) => (u64::from(dodag.max_rank()) * (1 + u64::from(cfg.schedule.k)) + 2) * l,
            (None, false) => (1000.0 / slot_ms).ceil() as u64,
        };
        let frac = cfg.consumer_policy.pit_fraction.unwrap_or(0.9);
        let pit_slots = ((timeout_slots as f64 * frac).floor() as u64).max(1);

        let side_rate = cfg.side_rate();
        let mut nodes = BTreeMap::new();
        for n in graph.nodes() {
            let mut apps = Vec::new();
            if n == cfg.consumer {
                apps.push(App::new(
                    cfg.content_prefix.clone(),
                    true,
                    Some(cfg.chunks),
                    cfg.consumer_rate(),
                ));
            }
            if let Some(rate) = side_rate {
                if cfg.side_traffic.nodes.contains(&n) {
                    apps.push(App::new(ScenarioConfig::side_prefix(n), false, None, rate));
                }
            }
            let capacity = (n != cfg.root).then_some(cfg.fib.intermediate_capacity);
            let lifetime = if apps.is_empty() { pit_slots } else { timeout_slots };
            let mut fwd = Forwarder::new(n, dodag.position(n), BimodalFib::new(capacity), lifetime);
            if n == cfg.producer {
                fwd.add_produced_prefix(cfg.content_prefix.clone());
            }
            if n == cfg.root && side_rate.is_some() {
                for &s in &cfg.side_traffic.nodes {
                    fwd.add_produced_prefix(ScenarioConfig::side_prefix(s));
                }
            }
            let member = if n == cfg.root {
                DodagMember::root()
            } else {
                DodagMember::default()
            };
            nodes.insert(
                n,
                NodeCtx {
                    fwd,
                    member,
                    dao_to: None,
                    dao_inflight: false,
                    nam_sent: false,
                    apps,
                },
            );
        }
        Self {
            cfg: cfg.clone(),
            graph,
            tree: dodag.clone(),
            dodag,
            nodes,
            trace: Vec::new(),
            counters: Counters::default(),
            phase: RunPhase::Bootstrap,
            latencies: Vec::new(),
            ttc_s: None,
            listening: BTreeMap::new(),
            advertised_from: BTreeMap::new(),
            control_in_flight: 0,
            timeout_slots,
            nonce: 0,
        }
    }

    pub fn emit(&mut self, asn: u64, node: NodeId, event: &str, detail: Value) {
        if self.cfg.limits.trace {
            self.trace.push(TraceEvent {
                asn,
                node,
                event: event.to_string(),
                detail,
            });
        }
    }

    fn slot_s(&self) -> f64 {
        f64::from(self.cfg.slot_ms()) / 1000.0
    }

    pub fn workload_started(&self) -> bool {
        !matches!(self.phase, RunPhase::Bootstrap)
    }

    pub fn is_listening(&self, node: NodeId, peer: NodeId) -> bool {
        self.listening.get(&(node, peer)).is_some_and(|c| *c > 0)
    }

    /// Parent used for control traffic: the scheduled tree under TSCH, the
    /// tree formed in-band under CSMA.
    fn parent_of(&self, node: NodeId) -> Option<NodeId> {
        if self.cfg.mode.is_tsch() {
            self.dodag.parent_of(node)
        } else {
            self.nodes[&node].member.parent
        }
    }

    fn send(&mut self, out: &mut Vec<Out>, from: NodeId, dest: Destination, targets: Vec<NodeId>, packet: Packet) {
        if is_control(&packet) {
            self.control_in_flight += 1;
        }
        out.push(Out::Send {
            from,
            dest,
            targets,
            packet,
        });
    }

    pub fn apply_actions(&mut self, asn: u64, node: NodeId, actions: Vec<Action>, out: &mut Vec<Out>) {
        for a in actions {
            match a {
                Action::SendInterest { to, interest } => {
                    let (dest, targets) = match to.as_slice() {
                        [one] => (Destination::Unicast(*one), Vec::new()),
                        _ => (Destination::Broadcast, to),
                    };
                    self.send(out, node, dest, targets, Packet::Interest(interest));
                }
                Action::SendData { to, chunk } => {
                    self.send(out, node, Destination::Unicast(to), Vec::new(), Packet::Data(chunk));
                }
                Action::DeliverToApp(chunk) => self.deliver(asn, node, chunk),
                Action::ActivateRx(peer) => {
                    let c = self.listening.entry((node, peer)).or_default();
                    *c += 1;
                    if *c == 1 {
                        out.push(Out::Listen {
                            node,
                            peer,
                            active: true,
                        });
                    }
                }
                Action::DeactivateRx(peer) => {
                    let c = self.listening.entry((node, peer)).or_default();
                    if *c > 0 {
                        *c -= 1;
                        if *c == 0 {
                            out.push(Out::Listen {
                                node,
                                peer,
                                active: false,
                            });
                        }
                    }
                }
                // transmit-side content cells stay on; an idle Tx cell sleeps anyway
                Action::ActivateTx(_) | Action::DeactivateTx(_) => {}
            }
        }
    }

    fn deliver(&mut self, asn: u64, node: NodeId, chunk: DataChunk) {
        let slot_s = self.slot_s();
        let ctx = self.nodes.get_mut(&node).expect("known node");
        let Some(app) = ctx.apps.iter_mut().find(|a| a.prefix.is_prefix_of(&chunk.name)) else {
            return;
        };
        let idx = chunk.chunk_index;
        let main = app.main;
        if app.outstanding.remove(&idx).is_some() {
            app.delivered.insert(idx);
            let first = app.first_sent.get(&idx).copied().unwrap_or(asn);
            let latency = (asn + 1 - first) as f64 * slot_s;
            if main {
                self.latencies.push(latency);
                self.emit(asn, node, "chunk", json!({"chunk": idx, "latency_s": latency}));
            } else {
                self.emit(asn, node, "side_chunk", json!({"chunk": idx}));
            }
        } else if app.delivered.contains(&idx) {
            self.note_duplicate(asn, node, idx, main);
        }
    }

    fn note_duplicate(&mut self, asn: u64, node: NodeId, idx: u32, main: bool) {
        if main {
            self.counters.dups += 1;
            self.emit(asn, node, "duplicate", json!({"chunk": idx}));
        } else {
            self.emit(asn, node, "side_duplicate", json!({"chunk": idx}));
        }
    }

    /// A frame from `from` reached `node` intact.
    pub fn on_receive(
        &mut self,
        asn: u64,
        node: NodeId,
        from: NodeId,
        packet: &Packet,
        targets: &[NodeId],
        out: &mut Vec<Out>,
    ) {
        match packet {
            Packet::Interest(i) => {
                if !targets.is_empty() && !targets.contains(&node) {
                    return;
                }
                let actions = self.nodes.get_mut(&node).expect("known node").fwd.on_interest(
                    asn,
                    i.clone(),
                    FaceId::Neighbor(from),
                );
                self.apply_actions(asn, node, actions, out);
            }
            Packet::Data(d) => {
                let ctx = self.nodes.get_mut(&node).expect("known node");
                let before = ctx.fwd.counters.unsolicited_data;
                let actions = ctx.fwd.on_data(d.clone(), from);
                if ctx.fwd.counters.unsolicited_data > before {
                    let dup = ctx
                        .apps
                        .iter()
                        .find(|a| a.prefix.is_prefix_of(&d.name) && a.delivered.contains(&d.chunk_index))
                        .map(|a| a.main);
                    if let Some(main) = dup {
                        self.note_duplicate(asn, node, d.chunk_index, main);
                    }
                }
                self.apply_actions(asn, node, actions, out);
            }
            Packet::Dio { rank } => {
                if self.workload_started() || node == self.cfg.root {
                    return;
                }
                let ctx = self.nodes.get_mut(&node).expect("known node");
                let eff = ctx.member.on_dio(from, *rank);
                let (new_rank, parent) = (ctx.member.rank, ctx.member.parent);
                if eff.parent_changed {
                    self.emit(asn, node, "joined", json!({"parent": parent, "rank": new_rank}));
                }
                if eff.rank_changed {
                    let r = new_rank.expect("joined");
                    self.send(out, node, Destination::Broadcast, Vec::new(), Packet::Dio { rank: r });
                }
            }
            Packet::Dao { parent } => {
                if *parent == node {
                    self.emit(asn, node, "dao", json!({"child": from}));
                }
            }
            Packet::Nam(nam) => {
                let is_root = node == self.cfg.root;
                let ctx = self.nodes.get_mut(&node).expect("known node");
                let (update, forward) = accept_nam(node, &mut ctx.fwd.fib, &nam.prefix, from, is_root);
                self.advertised_from.entry(node).or_default().insert(from);
                self.emit(
                    asn,
                    node,
                    "nam",
                    json!({"prefix": nam.prefix.to_string(), "face": from, "installed": update.installed}),
                );
                if forward {
                    if let Some(p) = self.parent_of(node) {
                        self.send(out, node, Destination::Unicast(p), Vec::new(), Packet::Nam(nam.clone()));
                    }
                }
            }
            Packet::Beacon | Packet::LinkAck { .. } => {}
        }
    }

    /// The link layer finished with a frame, successfully or not.
    pub fn on_sent(&mut self, asn: u64, node: NodeId, packet: &Packet, delivered: bool, out: &mut Vec<Out>) {
        if is_control(packet) {
            self.control_in_flight = self.control_in_flight.saturating_sub(1);
        }
        let Packet::Dao { parent } = packet else { return };
        let ctx = self.nodes.get_mut(&node).expect("known node");
        ctx.dao_inflight = false;
        if !delivered {
            return;
        }
        ctx.dao_to = Some(*parent);
        self.emit(asn, node, "dao_ack", json!({"parent": parent}));
        let ctx = self.nodes.get_mut(&node).expect("known node");
        if ctx.nam_sent || node == self.cfg.root {
            return;
        }
        ctx.nam_sent = true;
        let prefixes = ctx.fwd.produced_prefixes().to_vec();
        for prefix in prefixes {
            self.send(
                out,
                node,
                Destination::Unicast(*parent),
                Vec::new(),
                Packet::Nam(NamPacket { prefix, origin: node }),
            );
        }
    }

    pub fn mac_retry(&mut self, asn: u64, node: NodeId, packet: &Packet, retry: u32) {
        self.counters.mac_retx += 1;
        self.emit(asn, node, "mac_retry", json!({"kind": packet.kind(), "retry": retry}));
    }

    pub fn mac_drop(&mut self, asn: u64, node: NodeId, packet: &Packet) {
        self.emit(asn, node, "mac_drop", json!({"kind": packet.kind()}));
    }

    pub fn collision(&mut self, asn: u64, listener: NodeId, detail: Value) {
        self.counters.collisions += 1;
        self.emit(asn, listener, "collision", detail);
    }

    pub fn shared_collision(&mut self, asn: u64, sender: NodeId) {
        self.counters.shared_collisions += 1;
        self.emit(asn, sender, "shared_collision", Value::Null);
    }

    fn all_joined(&self) -> bool {
        self.nodes.values().all(|c| c.member.rank.is_some())
    }

    fn quiescent(&self) -> bool {
        self.all_joined()
            && self.control_in_flight == 0
            && self.nodes.iter().all(|(&n, c)| {
                n == self.cfg.root
                    || (c.dao_to.is_some()
                        && c.dao_to == self.parent_of(n)
                        && (c.nam_sent || c.fwd.produced_prefixes().is_empty()))
            })
    }

    /// Slotframe boundary: bootstrap progress, then token refill.
    pub fn frame_boundary(&mut self, asn: u64, frame: u64, out: &mut Vec<Out>) {
        if self.phase == RunPhase::Bootstrap {
            if frame == 0 {
                let root = self.cfg.root;
                self.send(out, root, Destination::Broadcast, Vec::new(), Packet::Dio { rank: 0 });
            } else if self.quiescent() {
                self.start_workload(asn);
            } else {
                self.bootstrap_step(asn, out);
            }
        }
        if matches!(self.phase, RunPhase::Workload { .. }) {
            for ctx in self.nodes.values_mut() {
                for app in &mut ctx.apps {
                    app.tokens = (app.tokens + app.rate).min(app.rate.max(1.0));
                }
            }
        }
    }

    fn bootstrap_step(&mut self, asn: u64, out: &mut Vec<Out>) {
        let ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        if !self.all_joined() {
            for &n in &ids {
                if let Some(r) = self.nodes[&n].member.rank {
                    self.send(out, n, Destination::Broadcast, Vec::new(), Packet::Dio { rank: r });
                }
            }
        }
        for &n in &ids {
            let ctx = &self.nodes[&n];
            if n == self.cfg.root || ctx.member.rank.is_none() || ctx.dao_inflight {
                continue;
            }
            let Some(p) = self.parent_of(n) else { continue };
            if ctx.dao_to == Some(p) {
                continue;
            }
            self.nodes.get_mut(&n).expect("known node").dao_inflight = true;
            self.emit(asn, n, "dao_tx", json!({"parent": p}));
            self.send(out, n, Destination::Unicast(p), Vec::new(), Packet::Dao { parent: p });
        }
    }

    fn start_workload(&mut self, asn: u64) {
        if !self.cfg.mode.is_tsch() {
            let parents: BTreeMap<NodeId, NodeId> = self
                .nodes
                .iter()
                .filter_map(|(&n, c)| c.member.parent.map(|p| (n, p)))
                .collect();
            if let Ok(t) = Dodag::from_parents(self.cfg.root, parents) {
                self.tree = t;
            }
            for (&n, ctx) in self.nodes.iter_mut() {
                ctx.fwd.position = self.tree.position(n);
            }
        }
        if self.cfg.fib.exclude_silent_children {
            let mut fibs: BTreeMap<NodeId, BimodalFib> =
                self.nodes.iter().map(|(&n, c)| (n, c.fwd.fib.clone())).collect();
            exclude_silent_children(&self.tree, &mut fibs, &self.advertised_from);
            for (n, fib) in fibs {
                self.nodes.get_mut(&n).expect("known node").fwd.fib = fib;
            }
        }
        self.phase = RunPhase::Workload { start: asn };
        let root = self.cfg.root;
        self.emit(asn, root, "workload_start", json!({"tree": self.tree.to_csv()}));
    }

    /// Per-slot work: PIT expiry, consumer timeouts, Interest release.
    /// `interest_idle(n)` tells whether node `n` has no Interest waiting in
    /// its MAC.
    pub fn slot_tick(&mut self, asn: u64, interest_idle: &dyn Fn(NodeId) -> bool, out: &mut Vec<Out>) {
        let ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        for &n in &ids {
            let actions = self.nodes.get_mut(&n).expect("known node").fwd.expire(asn);
            self.apply_actions(asn, n, actions, out);
        }
        if !matches!(self.phase, RunPhase::Workload { .. }) {
            return;
        }
        let max_retx = self.cfg.max_retransmissions();
        for &n in &ids {
            for ai in 0..self.nodes[&n].apps.len() {
                self.app_timeouts(asn, n, ai, max_retx);
                if interest_idle(n) {
                    self.app_release(asn, n, ai, out);
                }
            }
        }
    }

    fn app_timeouts(&mut self, asn: u64, node: NodeId, ai: usize, max_retx: Option<u32>) {
        let app = &mut self.nodes.get_mut(&node).expect("known node").apps[ai];
        let due: Vec<u32> = app
            .outstanding
            .iter()
            .filter(|(_, p)| p.deadline <= asn)
            .map(|(i, _)| *i)
            .collect();
        let main = app.main;
        let mut failed = Vec::new();
        for i in due {
            app.outstanding.remove(&i);
            let attempts = app.attempts[&i];
            if max_retx.is_some_and(|m| attempts > m) {
                app.failed.insert(i);
                failed.push(i);
            } else {
                app.retx.push_back(i);
            }
        }
        for i in failed {
            let ev = if main { "chunk_failed" } else { "side_chunk_failed" };
            self.emit(asn, node, ev, json!({"chunk": i}));
        }
    }

    fn app_release(&mut self, asn: u64, node: NodeId, ai: usize, out: &mut Vec<Out>) {
        let timeout = self.timeout_slots;
        let ctx = self.nodes.get_mut(&node).expect("known node");
        let app = &mut ctx.apps[ai];
        if app.tokens < 1.0 {
            return;
        }
        let Some(idx) = app.next_chunk() else { return };
        app.tokens -= 1.0;
        let attempts = app.attempts.entry(idx).or_default();
        *attempts += 1;
        let attempt = *attempts;
        app.first_sent.entry(idx).or_insert(asn);
        app.outstanding.insert(
            idx,
            Pending {
                deadline: asn + timeout,
            },
        );
        let name = app.prefix.chunk(idx);
        let main = app.main;
        self.nonce += 1;
        let interest = InterestPacket {
            name,
            nonce: (u64::from(node) << 40) | self.nonce,
            direction: Direction::Up,
            piggyback: None,
        };
        if attempt > 1 {
            if main {
                self.counters.e2e_retx += 1;
                self.emit(asn, node, "retransmit", json!({"chunk": idx, "attempt": attempt}));
            } else {
                self.emit(asn, node, "side_retransmit", json!({"chunk": idx, "attempt": attempt}));
            }
        } else if main {
            self.emit(asn, node, "request", json!({"chunk": idx}));
        }
        let actions = self
            .nodes
            .get_mut(&node)
            .expect("known node")
            .fwd
            .on_interest(asn, interest, FaceId::App);
        self.apply_actions(asn, node, actions, out);
    }

    /// Ends the workload once the main consumer has resolved every chunk.
    pub fn check_done(&mut self, asn: u64) {
        if !matches!(self.phase, RunPhase::Workload { .. }) {
            return;
        }
        let consumer = self.cfg.consumer;
        let Some(app) = self.nodes[&consumer].apps.iter().find(|a| a.main) else {
            return;
        };
        if !app.resolved() {
            return;
        }
        let delivered = app.delivered.len();
        self.phase = RunPhase::Finished { at: asn };
        if delivered as u32 == self.cfg.chunks {
            let ttc = (asn + 1) as f64 * self.slot_s();
            self.ttc_s = Some(ttc);
            self.emit(asn, consumer, "complete", json!({"ttc_s": ttc}));
        } else {
            self.emit(asn, consumer, "incomplete", json!({"delivered": delivered}));
        }
    }

    pub fn main_app(&self) -> Option<&App> {
        self.nodes
            .get(&self.cfg.consumer)
            .and_then(|c| c.apps.iter().find(|a| a.main))
    }

    pub fn is_adinr(&self) -> bool {
        self.cfg.mode == MacMode::Adinr
    }
}
