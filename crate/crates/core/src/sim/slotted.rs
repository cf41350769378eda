//! Slot-by-slot driver for the TSCH configurations.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::network::{Network, Out, RunPhase};
use super::{AdaptationRow, DynCell};
use crate::adaptive::{
    allocate_dynamic_cells, evaluate_adaptation, Decision, DynAllocation, Link, NeighborKnowledge, UtilizationMonitor,
};
use crate::config::Knowledge;
use crate::kernel::{global_rng, node_rng};
use crate::metrics::{EnergyLedger, RadioState};
use crate::packet::Packet;
use crate::radio::{resolve_slot, Destination, NodeId, Reception, TransmissionAttempt};
use crate::tsch::{
    beacon_due, physical_channel, shared_cell_contend, Cell, CellKind, Peer, Role, ScheduleMatrix, SharedBackoff,
    SlotAction, Ssf,
};

#[derive(Debug, Clone)]
struct QFrame {
    packet: Packet,
    targets: Vec<NodeId>,
    retries: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum QKey {
    Interest(NodeId),
    Content(NodeId),
    Bcast,
}

#[derive(Debug, Default)]
struct Queues {
    interest: BTreeMap<NodeId, VecDeque<QFrame>>,
    content: BTreeMap<NodeId, VecDeque<QFrame>>,
    bcast: VecDeque<QFrame>,
    beacon: Option<SharedBackoff>,
}

impl Queues {
    fn get_mut(&mut self, key: QKey) -> Option<&mut VecDeque<QFrame>> {
        match key {
            QKey::Interest(p) => self.interest.get_mut(&p),
            QKey::Content(p) => self.content.get_mut(&p),
            QKey::Bcast => Some(&mut self.bcast),
        }
    }

    fn has_frame(&self, cell: &Cell) -> bool {
        let nonempty = |m: &BTreeMap<NodeId, VecDeque<QFrame>>, p: Option<NodeId>| {
            p.and_then(|p| m.get(&p)).is_some_and(|q| !q.is_empty())
        };
        match cell.kind {
            CellKind::Interest => nonempty(&self.interest, cell.peer_node()),
            CellKind::Content => nonempty(&self.content, cell.peer_node()),
            CellKind::Broadcast => !self.bcast.is_empty(),
            CellKind::Shared => self.beacon.is_some(),
        }
    }

    fn interest_idle(&self) -> bool {
        self.interest
            .values()
            .all(|q| q.iter().all(|f| !matches!(f.packet, Packet::Interest(_))))
            && self.bcast.iter().all(|f| !matches!(f.packet, Packet::Interest(_)))
    }
}

/// Dynamic cells granted to one link, most recent last.
#[derive(Debug, Default)]
struct LinkBursts {
    bursts: Vec<DynAllocation>,
}

pub(crate) struct Slotted {
    pub schedules: BTreeMap<NodeId, ScheduleMatrix>,
    queues: BTreeMap<NodeId, Queues>,
    rngs: BTreeMap<NodeId, ChaCha8Rng>,
    medium_rng: ChaCha8Rng,
    pub ledger: EnergyLedger,
    monitor: UtilizationMonitor,
    used: BTreeMap<Link, u32>,
    dyn_cells: BTreeMap<Link, LinkBursts>,
    knowledge: BTreeMap<NodeId, NeighborKnowledge>,
    pub adaptation_log: Vec<AdaptationRow>,
    pub dynamic_cells: Vec<DynCell>,
}

impl Slotted {
    pub fn new(net: &Network, mut schedules: BTreeMap<NodeId, ScheduleMatrix>, seed: u64) -> Self {
        if net.cfg.mode.activates_cells() {
            for m in schedules.values_mut() {
                let peers: Vec<NodeId> = m.faces().into_keys().collect();
                for p in peers {
                    m.set_content_active(p, Role::Rx, false);
                }
            }
        }
        let nodes: Vec<NodeId> = net.graph.nodes().collect();
        Self {
            queues: nodes.iter().map(|&n| (n, Queues::default())).collect(),
            rngs: nodes.iter().map(|&n| (n, node_rng(seed, n))).collect(),
            medium_rng: global_rng(seed),
            ledger: EnergyLedger::default(),
            monitor: UtilizationMonitor::new(net.cfg.adaptation.window_frames),
            used: BTreeMap::new(),
            dyn_cells: BTreeMap::new(),
            knowledge: BTreeMap::new(),
            adaptation_log: Vec::new(),
            dynamic_cells: Vec::new(),
            schedules,
        }
    }

    fn apply(&mut self, net: &Network, outs: Vec<Out>) {
        for o in outs {
            match o {
                Out::Send {
                    from,
                    dest,
                    targets,
                    packet,
                } => {
                    let q = self.queues.get_mut(&from).expect("known node");
                    let f = QFrame {
                        packet,
                        targets,
                        retries: 0,
                    };
                    match (dest, &f.packet) {
                        (Destination::Unicast(p), Packet::Data(_)) => q.content.entry(p).or_default().push_back(f),
                        (Destination::Unicast(p), _) => q.interest.entry(p).or_default().push_back(f),
                        (Destination::Broadcast, _) => q.bcast.push_back(f),
                    }
                }
                Out::Listen { node, peer, active } => {
                    if net.cfg.mode.activates_cells() {
                        self.schedules
                            .get_mut(&node)
                            .expect("known node")
                            .set_content_active(peer, Role::Rx, active);
                    }
                }
            }
        }
    }

    /// Runs until the workload is over (plus the drain period) or the
    /// frame limit.
    pub fn run(&mut self, net: &mut Network) {
        let l = u64::from(net.cfg.schedule.slotframe_length);
        let limit = net.cfg.limits.max_frames * l;
        let drain = if net.is_adinr() {
            2 * u64::from(net.cfg.adaptation.window_frames) + 1
        } else {
            0
        };
        let mut asn = 0;
        while asn < limit {
            self.step(net, asn, l);
            asn += 1;
            if let RunPhase::Finished { at } = net.phase {
                if asn >= (at / l + 1 + drain) * l {
                    break;
                }
            }
        }
        if matches!(net.phase, RunPhase::Workload { .. } | RunPhase::Bootstrap) {
            net.emit(
                asn,
                net.cfg.consumer,
                "cutoff",
                json!({"frames": net.cfg.limits.max_frames}),
            );
        }
        net.emit(asn, net.cfg.root, "slots", json!({"total": asn}));
    }

    fn step(&mut self, net: &mut Network, asn: u64, l: u64) {
        let slot = (asn % l) as u32;
        let mut outs = Vec::new();
        if slot == 0 {
            let frame = asn / l;
            if frame > 0 && net.is_adinr() {
                self.adapt(net, asn);
            }
            net.frame_boundary(asn, frame, &mut outs);
            for (&n, q) in self.queues.iter_mut() {
                if q.beacon.is_none() && beacon_due(n, frame, net.cfg.tsch.beacon_period_frames) {
                    q.beacon = Some(SharedBackoff::start(
                        &net.cfg.shared_cell,
                        self.rngs.get_mut(&n).expect("known node"),
                    ));
                }
            }
            if net.workload_started() && self.knowledge.is_empty() && net.cfg.tsch.knowledge == Knowledge::Piggyback {
                for n in net.graph.nodes().collect::<Vec<_>>() {
                    let k = self.fresh_knowledge(net, n);
                    self.knowledge.insert(n, k);
                }
            }
        }
        {
            let queues = &self.queues;
            net.slot_tick(asn, &|n| queues[&n].interest_idle(), &mut outs);
        }
        self.apply(net, std::mem::take(&mut outs));

        if slot == 0 {
            self.shared_slot(net, asn);
        } else {
            self.scheduled_slot(net, asn, &mut outs);
        }
        self.apply(net, outs);
        net.check_done(asn);
    }

    fn shared_slot(&mut self, net: &mut Network, asn: u64) {
        let slot_ms = u64::from(net.cfg.slot_ms());
        let mut contenders: BTreeMap<NodeId, SharedBackoff> = self
            .queues
            .iter()
            .filter_map(|(&n, q)| q.beacon.map(|b| (n, b)))
            .collect();
        let tx = shared_cell_contend(&mut contenders);
        let channel = physical_channel(0, asn);
        let attempts: Vec<TransmissionAttempt<()>> = tx
            .iter()
            .map(|&s| TransmissionAttempt {
                sender: s,
                frame: (),
                bytes: Packet::Beacon.size_bytes(),
                channel,
                asn,
                destination: Destination::Broadcast,
            })
            .collect();
        let listeners: Vec<(NodeId, u8)> = net
            .graph
            .nodes()
            .filter(|n| !tx.contains(n))
            .map(|n| (n, channel))
            .collect();
        let mut collided: BTreeSet<NodeId> = BTreeSet::new();
        for (_, rec) in resolve_slot(&attempts, &listeners, &net.graph, &mut self.medium_rng) {
            if let Reception::Collision(v) = rec {
                collided.extend(v.iter().map(|&i| attempts[i].sender));
            }
        }
        for (&n, q) in self.queues.iter_mut() {
            let state = if tx.contains(&n) {
                RadioState::Tx
            } else {
                RadioState::Rx
            };
            self.ledger.energy_charge(n, state, slot_ms);
            if let Some(b) = contenders.get(&n) {
                q.beacon = Some(*b);
            }
        }
        for s in tx {
            let q = self.queues.get_mut(&s).expect("known node");
            if collided.contains(&s) {
                net.shared_collision(asn, s);
                let b = q.beacon.as_mut().expect("contending");
                if !b.on_collision(&net.cfg.shared_cell, self.rngs.get_mut(&s).expect("known node")) {
                    q.beacon = None;
                }
            } else {
                q.beacon = None;
            }
        }
    }

    fn scheduled_slot(&mut self, net: &mut Network, asn: u64, outs: &mut Vec<Out>) {
        let slot_ms = u64::from(net.cfg.slot_ms());
        let piggyback = net.is_adinr() && net.cfg.tsch.knowledge == Knowledge::Piggyback;
        let mut attempts: Vec<TransmissionAttempt<(QKey, QFrame)>> = Vec::new();
        let mut listeners = Vec::new();
        for (&n, sched) in &self.schedules {
            let q = &self.queues[&n];
            let action = sched.slot_action(asn, |c| q.has_frame(c));
            let state = match action {
                SlotAction::Transmit(c) => {
                    let (key, dest) = match (c.kind, c.peer) {
                        (CellKind::Interest, Peer::Node(p)) => (QKey::Interest(p), Destination::Unicast(p)),
                        (CellKind::Content, Peer::Node(p)) => (QKey::Content(p), Destination::Unicast(p)),
                        _ => (QKey::Bcast, Destination::Broadcast),
                    };
                    let mut frame = match key {
                        QKey::Interest(p) => q.interest[&p].front(),
                        QKey::Content(p) => q.content[&p].front(),
                        _ => q.bcast.front(),
                    }
                    .expect("has_frame checked")
                    .clone();
                    if let (true, Packet::Interest(i)) = (piggyback, &mut frame.packet) {
                        if let Some(k) = self.knowledge.get(&n) {
                            i.piggyback = Some(Box::new(k.piggyback(&sched.bitfield())));
                        }
                    }
                    if c.kind == CellKind::Interest {
                        if let Peer::Node(p) = c.peer {
                            *self.used.entry((n, p)).or_default() += 1;
                        }
                    }
                    net.emit(
                        asn,
                        n,
                        "tx",
                        json!({"kind": frame.packet.kind(), "slot": c.slot, "ch": c.channel, "retry": frame.retries}),
                    );
                    attempts.push(TransmissionAttempt {
                        sender: n,
                        bytes: frame.packet.size_bytes(),
                        frame: (key, frame),
                        channel: physical_channel(c.channel, asn),
                        asn,
                        destination: dest,
                    });
                    RadioState::Tx
                }
                SlotAction::Listen(c) | SlotAction::Contend(c) => {
                    listeners.push((n, physical_channel(c.channel, asn)));
                    RadioState::Rx
                }
                SlotAction::Sleep => RadioState::Sleep,
            };
            self.ledger.energy_charge(n, state, slot_ms);
        }
        if attempts.is_empty() {
            return;
        }

        let receptions = resolve_slot(&attempts, &listeners, &net.graph, &mut self.medium_rng);
        let mut acked = vec![false; attempts.len()];
        for (r, rec) in receptions {
            match rec {
                Reception::Delivered(i) => {
                    let a = &attempts[i];
                    match a.destination {
                        Destination::Unicast(d) if d != r => continue,
                        Destination::Unicast(_) => acked[i] = true,
                        Destination::Broadcast => {}
                    }
                    let (_, frame) = &a.frame;
                    if let (true, Packet::Interest(pi)) = (piggyback, &frame.packet) {
                        if let (Some(bf), Some(k)) = (&pi.piggyback, self.knowledge.get_mut(&r)) {
                            k.merge(bf);
                        }
                    }
                    net.on_receive(asn, r, a.sender, &frame.packet, &frame.targets, outs);
                }
                Reception::Collision(v) => {
                    let senders: Vec<NodeId> = v.iter().map(|&i| attempts[i].sender).collect();
                    net.collision(asn, r, json!({"senders": senders}));
                }
                Reception::ChannelLoss(_) | Reception::Idle => {}
            }
        }

        let max_retries = net.cfg.tsch.mac_retries;
        for (i, a) in attempts.iter().enumerate() {
            let (key, frame) = &a.frame;
            let q = self
                .queues
                .get_mut(&a.sender)
                .and_then(|q| q.get_mut(*key))
                .expect("attempt came from a queue");
            let unicast = matches!(a.destination, Destination::Unicast(_));
            if !unicast || acked[i] {
                q.pop_front();
                net.on_sent(asn, a.sender, &frame.packet, true, outs);
                continue;
            }
            let head = q.front_mut().expect("attempted frame still queued");
            head.retries += 1;
            if head.retries > max_retries {
                q.pop_front();
                net.mac_drop(asn, a.sender, &frame.packet);
                net.on_sent(asn, a.sender, &frame.packet, false, outs);
            } else {
                let r = head.retries;
                net.mac_retry(asn, a.sender, &frame.packet, r);
            }
        }
    }

    /// Knowledge `node` would hold after hearing every neighbor's current
    /// bitfield, each carrying that neighbor's own one-hop union.
    fn fresh_knowledge(&self, net: &Network, node: NodeId) -> NeighborKnowledge {
        let l = net.cfg.schedule.slotframe_length;
        let mut k = NeighborKnowledge::new(node, l);
        for y in net.graph.adjacent(node) {
            let mut ky = NeighborKnowledge::new(y, l);
            for z in net.graph.adjacent(y) {
                ky.merge(&self.schedules[&z].bitfield());
            }
            k.merge(&ky.piggyback(&self.schedules[&y].bitfield()));
        }
        k
    }

    fn knowledge_of(&self, net: &Network, node: NodeId) -> NeighborKnowledge {
        match (net.cfg.tsch.knowledge, self.knowledge.get(&node)) {
            (Knowledge::Piggyback, Some(k)) => k.clone(),
            _ => self.fresh_knowledge(net, node),
        }
    }

    fn interest_tx_cells(&self, node: NodeId, peer: NodeId) -> u32 {
        self.schedules[&node]
            .face_cells(peer, CellKind::Interest, Role::Tx)
            .count() as u32
    }

    /// Frame-boundary adaptation: record last frame's utilization per link
    /// and apply the threshold decisions.
    fn adapt(&mut self, net: &mut Network, asn: u64) {
        let params = net.cfg.adaptation;
        let k = net.cfg.schedule.k;
        let mut links: Vec<Link> = Vec::new();
        for (&n, m) in &self.schedules {
            let peers: BTreeSet<NodeId> = m
                .cells()
                .filter(|c| c.kind == CellKind::Interest && c.role == Role::Tx)
                .filter_map(Cell::peer_node)
                .collect();
            links.extend(peers.into_iter().map(|p| (n, p)));
        }
        let mut used = std::mem::take(&mut self.used);
        for &link in &links {
            let scheduled = self.interest_tx_cells(link.0, link.1);
            let u = used.remove(&link).unwrap_or(0).min(scheduled);
            self.monitor.record(link, scheduled, u);
        }

        for link in links {
            let bursts = self.dyn_cells.get(&link).map_or(0, |b| b.bursts.len() as u32);
            let decision = evaluate_adaptation(&self.monitor, link, &params, bursts, bursts * params.burst);
            let u_cur = self.monitor.utilization(link);
            let label = match decision {
                Decision::Hold => continue,
                Decision::Allocate(_) => match self.allocate(net, asn, link, params.burst, k) {
                    Ok(()) => "ALLOCATE",
                    Err(e) => {
                        net.emit(
                            asn,
                            link.0,
                            "reject",
                            json!({"peer": link.1, "found": e.found, "needed": e.needed}),
                        );
                        "REJECT"
                    }
                },
                Decision::Deallocate(n) => {
                    self.deallocate(link, n);
                    "DEALLOCATE"
                }
            };
            self.monitor.reset(link);
            let after = self.dyn_cells.get(&link).map_or(0, |b| {
                b.bursts
                    .iter()
                    .map(|d| (d.interest.len() + d.content.len()) as u32)
                    .sum()
            });
            net.emit(
                asn,
                link.0,
                "adapt",
                json!({"peer": link.1, "u": u_cur, "decision": label, "dyn_cells": after}),
            );
            self.adaptation_log.push(AdaptationRow {
                asn,
                link,
                utilization: u_cur,
                decision: label.to_string(),
                dyn_cells_after: after,
            });
        }
    }

    fn allocate(
        &mut self,
        net: &Network,
        asn: u64,
        link: Link,
        burst: u32,
        k: u32,
    ) -> Result<(), crate::adaptive::Reject> {
        let (a, b) = link;
        let dyn_range = self.schedules[&a].partition.range(Ssf::Dyn);
        let know_a = self.knowledge_of(net, a);
        let know_b = self.knowledge_of(net, b);
        let alloc = allocate_dynamic_cells(
            a,
            b,
            burst,
            k,
            dyn_range,
            &self.schedules[&a].bitfield(),
            &self.schedules[&b].bitfield(),
            &know_a,
            &know_b,
        )?;
        let base = Cell {
            slot: 0,
            channel: 0,
            role: Role::Tx,
            peer: Peer::Node(b),
            ssf: Ssf::Dyn,
            kind: CellKind::Interest,
            active: true,
            k,
        };
        for &(slot, channel) in &alloc.interest {
            let tx = Cell { slot, channel, ..base };
            self.schedules.get_mut(&a).expect("known node").insert(tx);
            self.schedules.get_mut(&b).expect("known node").insert(Cell {
                role: Role::Rx,
                peer: Peer::Node(a),
                ..tx
            });
        }
        let listening = !net.cfg.mode.activates_cells() || net.is_listening(a, b);
        for &(slot, channel) in &alloc.content {
            let tx = Cell {
                slot,
                channel,
                peer: Peer::Node(a),
                kind: CellKind::Content,
                ..base
            };
            self.schedules.get_mut(&b).expect("known node").insert(tx);
            self.schedules.get_mut(&a).expect("known node").insert(Cell {
                role: Role::Rx,
                peer: Peer::Node(b),
                active: listening,
                ..tx
            });
        }
        for (cells, kind) in [
            (&alloc.interest, CellKind::Interest),
            (&alloc.content, CellKind::Content),
        ] {
            self.dynamic_cells.extend(cells.iter().map(|&(slot, channel)| DynCell {
                asn,
                link,
                slot,
                channel,
                kind,
            }));
        }
        self.dyn_cells.entry(link).or_default().bursts.push(alloc);
        Ok(())
    }

    fn deallocate(&mut self, link: Link, n: u32) {
        let (a, b) = link;
        let Some(lb) = self.dyn_cells.get_mut(&link) else {
            return;
        };
        for _ in 0..n {
            let Some(d) = lb.bursts.pop() else { break };
            for &(s, c) in d.interest.iter().chain(&d.content) {
                self.schedules.get_mut(&a).expect("known node").remove(s, c);
                self.schedules.get_mut(&b).expect("known node").remove(s, c);
            }
        }
    }
}
