//! Unslotted CSMA/CA with link-layer ACKs, driven on 1 ms micro-ticks.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::radio::{ConnectivityGraph, Destination, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsmaParams {
    pub min_be: u32,
    pub max_be: u32,
    pub max_backoffs: u32,
    pub max_retries: u32,
    /// Micro-ticks per frame transmission.
    pub airtime_ticks: u32,
    /// Physical channel the whole network uses.
    pub channel: u8,
}

impl Default for CsmaParams {
    fn default() -> Self {
        Self {
            min_be: 3,
            max_be: 5,
            max_backoffs: 4,
            max_retries: 3,
            airtime_ticks: 4,
            channel: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Idle,
    /// Counting down, then sense the channel.
    Backoff(u32),
    /// On air; ticks left after the current one.
    Transmitting(u32),
}

/// Per-node MAC state.
#[derive(Debug, Clone)]
pub struct CsmaState<F> {
    pub queue: VecDeque<(F, Destination)>,
    pub be: u32,
    pub nb: u32,
    pub retries: u32,
    stage: Stage,
}

impl<F> Default for CsmaState<F> {
    fn default() -> Self {
        Self {
            queue: VecDeque::new(),
            be: 0,
            nb: 0,
            retries: 0,
            stage: Stage::Idle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadioAction {
    Listen,
    Transmit,
}

/// Result of one frame's journey through the MAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Delivered { retries: u32 },
    Dropped { retries: u32 },
}

/// Something that happened on a tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickEvent {
    /// First tick on air.
    Started,
    /// Last tick on air; the caller resolves delivery.
    Finished,
}

impl<F> CsmaState<F> {
    pub fn enqueue(&mut self, frame: F, dest: Destination) {
        self.queue.push_back((frame, dest));
    }

    pub fn is_transmitting(&self) -> bool {
        matches!(self.stage, Stage::Transmitting(_))
    }

    pub fn head(&self) -> Option<&(F, Destination)> {
        self.queue.front()
    }

    fn begin_attempt<R: Rng>(&mut self, params: &CsmaParams, rng: &mut R) {
        self.nb = 0;
        self.be = params.min_be;
        self.stage = Stage::Backoff(rng.gen_range(0..1u32 << self.be));
    }

    /// Advances one micro-tick. `channel_busy` is the carrier sense as seen
    /// at the start of the tick.
    pub fn csma_tick<R: Rng>(
        &mut self,
        params: &CsmaParams,
        channel_busy: bool,
        rng: &mut R,
    ) -> (RadioAction, Option<TickEvent>, Option<SendOutcome>) {
        if self.stage == Stage::Idle && !self.queue.is_empty() {
            self.retries = 0;
            self.begin_attempt(params, rng);
        }
        match self.stage {
            Stage::Idle => (RadioAction::Listen, None, None),
            Stage::Backoff(n) if n > 0 => {
                self.stage = Stage::Backoff(n - 1);
                (RadioAction::Listen, None, None)
            }
            Stage::Backoff(_) => {
                if channel_busy {
                    self.nb += 1;
                    if self.nb > params.max_backoffs {
                        // channel access failure counts as a failed attempt
                        return (RadioAction::Listen, None, self.after_failure(params, rng));
                    }
                    self.be = (self.be + 1).min(params.max_be);
                    self.stage = Stage::Backoff(rng.gen_range(0..1u32 << self.be));
                    return (RadioAction::Listen, None, None);
                }
                self.stage = Stage::Transmitting(params.airtime_ticks - 1);
                let ev = if params.airtime_ticks == 1 {
                    TickEvent::Finished
                } else {
                    TickEvent::Started
                };
                (RadioAction::Transmit, Some(ev), None)
            }
            Stage::Transmitting(left) => {
                self.stage = Stage::Transmitting(left - 1);
                let ev = (left == 1).then_some(TickEvent::Finished);
                (RadioAction::Transmit, ev, None)
            }
        }
    }

    /// Called after [`TickEvent::Finished`] with whether the frame was
    /// acknowledged (broadcasts always count as done).
    pub fn on_frame_end<R: Rng>(&mut self, params: &CsmaParams, acked: bool, rng: &mut R) -> Option<SendOutcome> {
        let broadcast = matches!(self.queue.front(), Some((_, Destination::Broadcast)));
        if acked || broadcast {
            self.stage = Stage::Idle;
            return Some(SendOutcome::Delivered { retries: self.retries });
        }
        self.after_failure(params, rng)
    }

    fn after_failure<R: Rng>(&mut self, params: &CsmaParams, rng: &mut R) -> Option<SendOutcome> {
        if self.retries >= params.max_retries {
            self.stage = Stage::Idle;
            return Some(SendOutcome::Dropped { retries: self.retries });
        }
        self.retries += 1;
        self.begin_attempt(params, rng);
        None
    }

    /// Removes the frame whose outcome was just reported.
    pub fn pop_done(&mut self) -> Option<(F, Destination)> {
        self.queue.pop_front()
    }
}

/// Tracks which in-flight frames got corrupted at which receivers.
#[derive(Debug, Clone, Default)]
pub struct Medium {
    /// sender -> receivers at which its current frame is corrupted
    corrupted: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Medium {
    pub fn start(&mut self, sender: NodeId) {
        self.corrupted.insert(sender, BTreeSet::new());
    }

    /// Marks collisions for one tick given the set of transmitting nodes.
    /// A receiver hearing two or more neighbors loses all of them; a
    /// transmitting node hears nothing.
    pub fn tick(&mut self, transmitting: &BTreeSet<NodeId>, graph: &ConnectivityGraph) {
        for &s in transmitting {
            let rxs: Vec<NodeId> = graph.adjacent(s).collect();
            for r in rxs {
                let heard = graph.adjacent(r).filter(|x| transmitting.contains(x)).count();
                if heard > 1 || transmitting.contains(&r) {
                    self.corrupted.entry(s).or_default().insert(r);
                }
            }
        }
    }

    /// Receivers of `sender`'s frame that got it intact (before loss).
    pub fn finish(&mut self, sender: NodeId, graph: &ConnectivityGraph) -> Vec<NodeId> {
        let bad = self.corrupted.remove(&sender).unwrap_or_default();
        graph.adjacent(sender).filter(|r| !bad.contains(r)).collect()
    }

    /// Carrier sense: any neighbor on air.
    pub fn busy(node: NodeId, transmitting: &BTreeSet<NodeId>, graph: &ConnectivityGraph) -> bool {
        graph.adjacent(node).any(|n| transmitting.contains(&n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run_until_outcome(
        st: &mut CsmaState<u8>,
        params: &CsmaParams,
        mut acked: impl FnMut(u32) -> bool,
        rng: &mut ChaCha8Rng,
    ) -> (SendOutcome, u32) {
        let mut transmissions = 0;
        for _ in 0..10_000 {
            let (_, ev, out) = st.csma_tick(params, false, rng);
            if let Some(o) = out {
                return (o, transmissions);
            }
            if ev == Some(TickEvent::Finished) {
                transmissions += 1;
                if let Some(o) = st.on_frame_end(params, acked(transmissions), rng) {
                    st.pop_done();
                    return (o, transmissions);
                }
            }
        }
        panic!("no outcome");
    }

    #[test]
    fn idle_network_delivers_first_try() {
        let p = CsmaParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut st = CsmaState::default();
        st.enqueue(7u8, Destination::Unicast(2));
        assert_eq!(
            run_until_outcome(&mut st, &p, |_| true, &mut rng),
            (SendOutcome::Delivered { retries: 0 }, 1)
        );
    }

    #[test]
    fn success_on_the_last_allowed_attempt() {
        let p = CsmaParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut st = CsmaState::default();
        st.enqueue(7u8, Destination::Unicast(2));
        assert_eq!(
            run_until_outcome(&mut st, &p, |n| n == 4, &mut rng),
            (SendOutcome::Delivered { retries: 3 }, 4)
        );
    }

    #[test]
    fn budget_exhausted_drops() {
        let p = CsmaParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut st = CsmaState::default();
        st.enqueue(7u8, Destination::Unicast(2));
        assert_eq!(
            run_until_outcome(&mut st, &p, |_| false, &mut rng),
            (SendOutcome::Dropped { retries: 3 }, 4)
        );
        assert!(st.queue.is_empty());
    }

    #[test]
    fn broadcast_is_sent_once() {
        let p = CsmaParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut st = CsmaState::default();
        st.enqueue(7u8, Destination::Broadcast);
        assert_eq!(
            run_until_outcome(&mut st, &p, |_| false, &mut rng),
            (SendOutcome::Delivered { retries: 0 }, 1)
        );
    }

    #[test]
    fn empty_queue_listens_and_backoff_counts_down() {
        let p = CsmaParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut st: CsmaState<u8> = CsmaState::default();
        assert_eq!(st.csma_tick(&p, false, &mut rng).0, RadioAction::Listen);
        st.enqueue(1, Destination::Unicast(2));
        st.stage = Stage::Backoff(3);
        st.retries = 0;
        st.be = 3;
        for _ in 0..3 {
            assert_eq!(st.csma_tick(&p, false, &mut rng).0, RadioAction::Listen);
        }
        assert_eq!(
            st.csma_tick(&p, false, &mut rng),
            (RadioAction::Transmit, Some(TickEvent::Started), None)
        );
    }

    #[test]
    fn busy_channel_exhausts_backoffs() {
        let p = CsmaParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut st = CsmaState::default();
        st.enqueue(1u8, Destination::Unicast(2));
        let mut outcome = None;
        for _ in 0..100_000 {
            let (a, _, o) = st.csma_tick(&p, true, &mut rng);
            assert_eq!(a, RadioAction::Listen);
            if o.is_some() {
                outcome = o;
                break;
            }
        }
        assert_eq!(outcome, Some(SendOutcome::Dropped { retries: 3 }));
    }

    #[test]
    fn overlapping_frames_collide_at_common_neighbor() {
        let g = ConnectivityGraph::from_edges(&[(1, 2), (2, 3)]).unwrap();
        let mut m = Medium::default();
        m.start(1);
        m.start(3);
        let tx = BTreeSet::from([1, 3]);
        m.tick(&tx, &g);
        assert!(m.finish(1, &g).is_empty());
        assert!(Medium::busy(2, &tx, &g));
        m.start(1);
        m.tick(&BTreeSet::from([1]), &g);
        assert_eq!(m.finish(1, &g), vec![2]);
    }
}
