//! Micro-tick driver for the CSMA/CA configurations.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::network::{Network, Out, RunPhase};
use crate::csma::{CsmaState, Medium, RadioAction, SendOutcome, TickEvent};
use crate::kernel::node_rng;
use crate::metrics::{EnergyLedger, RadioState};
use crate::packet::Packet;
use crate::radio::{Destination, NodeId};

type Frame = (Packet, Vec<NodeId>);

pub(crate) struct Contention {
    macs: BTreeMap<NodeId, CsmaState<Frame>>,
    rngs: BTreeMap<NodeId, ChaCha8Rng>,
    medium: Medium,
    pub ledger: EnergyLedger,
}

fn interest_idle(st: &CsmaState<Frame>) -> bool {
    st.queue.iter().all(|((p, _), _)| !matches!(p, Packet::Interest(_)))
}

impl Contention {
    pub fn new(net: &Network, seed: u64) -> Self {
        let nodes: Vec<NodeId> = net.graph.nodes().collect();
        Self {
            macs: nodes.iter().map(|&n| (n, CsmaState::default())).collect(),
            rngs: nodes.iter().map(|&n| (n, node_rng(seed, n))).collect(),
            medium: Medium::default(),
            ledger: EnergyLedger::default(),
        }
    }

    fn apply(&mut self, outs: Vec<Out>) {
        for o in outs {
            if let Out::Send {
                from,
                dest,
                targets,
                packet,
            } = o
            {
                self.macs
                    .get_mut(&from)
                    .expect("known node")
                    .enqueue((packet, targets), dest);
            }
        }
    }

    fn all_idle(&self) -> bool {
        self.macs.values().all(|m| m.queue.is_empty() && !m.is_transmitting())
    }

    /// One tick is one millisecond; a slot is `slot_ms` ticks and only
    /// anchors the consumer clock and the trace.
    pub fn run(&mut self, net: &mut Network) {
        let tps = u64::from(net.cfg.slot_ms());
        let l = u64::from(net.cfg.schedule.slotframe_length);
        let limit = net.cfg.limits.max_frames * l * tps;
        let params = net.cfg.csma;
        let mut on_air: BTreeSet<NodeId> = BTreeSet::new();
        let mut ack_due: BTreeSet<NodeId> = BTreeSet::new();
        let mut t = 0u64;
        while t < limit {
            let asn = t / tps;
            if t.is_multiple_of(tps) {
                let mut outs = Vec::new();
                if asn.is_multiple_of(l) {
                    net.frame_boundary(asn, asn / l, &mut outs);
                }
                {
                    let macs = &self.macs;
                    net.slot_tick(asn, &|n| interest_idle(&macs[&n]), &mut outs);
                }
                self.apply(outs);
            }

            if on_air.is_empty() && ack_due.is_empty() && self.all_idle() {
                // nothing can happen before the next slot boundary
                let skip = tps - t % tps;
                for &n in self.macs.keys() {
                    self.ledger.energy_charge(n, RadioState::Rx, skip);
                }
                t += skip;
                if self.end_of_slot(net, t / tps - 1) {
                    break;
                }
                continue;
            }

            let mut now_air = BTreeSet::new();
            let mut finished = Vec::new();
            let mut outs = Vec::new();
            for (&n, st) in self.macs.iter_mut() {
                let rng = self.rngs.get_mut(&n).expect("known node");
                let busy = Medium::busy(n, &on_air, &net.graph);
                let was_tx = st.is_transmitting();
                let before = st.retries;
                let (act, ev, outcome) = st.csma_tick(&params, busy, rng);
                if st.retries > before {
                    let p = st.head().expect("retrying a queued frame").0 .0.clone();
                    net.mac_retry(asn, n, &p, st.retries);
                }
                if let Some(o) = outcome {
                    let ((p, _), _) = st.pop_done().expect("outcome for a queued frame");
                    if matches!(o, SendOutcome::Dropped { .. }) {
                        net.mac_drop(asn, n, &p);
                    }
                    net.on_sent(asn, n, &p, false, &mut outs);
                }
                let state = if act == RadioAction::Transmit {
                    if !was_tx {
                        self.medium.start(n);
                        let ((p, _), _) = st.head().expect("transmitting a queued frame");
                        net.emit(asn, n, "tx", json!({"kind": p.kind(), "tick": t, "retry": st.retries}));
                    }
                    now_air.insert(n);
                    RadioState::Tx
                } else if ack_due.contains(&n) {
                    RadioState::Tx
                } else {
                    RadioState::Rx
                };
                self.ledger.energy_charge(n, state, 1);
                if ev == Some(TickEvent::Finished) {
                    finished.push(n);
                }
            }
            self.medium.tick(&now_air, &net.graph);

            let mut next_ack = BTreeSet::new();
            let mut deliveries = Vec::new();
            for s in finished {
                let intact = self.medium.finish(s, &net.graph);
                let rng = self.rngs.get_mut(&s).expect("known node");
                let heard: Vec<NodeId> = intact
                    .iter()
                    .copied()
                    .filter(|&r| {
                        let p = net.graph.loss_probability(s, r, params.channel);
                        !(p > 0.0 && rng.gen::<f64>() < p)
                    })
                    .collect();
                let st = self.macs.get_mut(&s).expect("known node");
                let (frame, dest) = st.head().expect("finished a queued frame").clone();
                let acked = match dest {
                    Destination::Unicast(d) => {
                        if net.graph.are_adjacent(s, d) && !intact.contains(&d) {
                            net.collision(asn, d, json!({"sender": s, "tick": t}));
                        }
                        if heard.contains(&d) {
                            next_ack.insert(d);
                            deliveries.push((d, s, frame.clone()));
                            true
                        } else {
                            false
                        }
                    }
                    Destination::Broadcast => {
                        deliveries.extend(heard.iter().map(|&r| (r, s, frame.clone())));
                        true
                    }
                };
                match st.on_frame_end(&params, acked, rng) {
                    Some(o) => {
                        st.pop_done();
                        if matches!(o, SendOutcome::Dropped { .. }) {
                            net.mac_drop(asn, s, &frame.0);
                        }
                        net.on_sent(asn, s, &frame.0, acked, &mut outs);
                    }
                    None => net.mac_retry(asn, s, &frame.0, st.retries),
                }
            }
            for (r, s, (packet, targets)) in deliveries {
                net.on_receive(asn, r, s, &packet, &targets, &mut outs);
            }
            self.apply(outs);
            on_air = now_air;
            ack_due = next_ack;
            t += 1;
            if t.is_multiple_of(tps) && self.end_of_slot(net, asn) {
                break;
            }
        }
        if matches!(net.phase, RunPhase::Workload { .. } | RunPhase::Bootstrap) {
            net.emit(
                t / tps,
                net.cfg.consumer,
                "cutoff",
                json!({"frames": net.cfg.limits.max_frames}),
            );
        }
        net.emit(t / tps, net.cfg.root, "ticks", json!({"total": t}));
    }

    fn end_of_slot(&mut self, net: &mut Network, asn: u64) -> bool {
        net.check_done(asn);
        matches!(net.phase, RunPhase::Finished { .. })
    }
}
