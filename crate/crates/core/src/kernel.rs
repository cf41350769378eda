//! Slot-quantized discrete-event kernel.
//!
//! Time is an absolute slot number (ASN). Within one slot, events are ordered
//! by a fixed [`Phase`] and then by insertion sequence, so two runs with the
//! same seed dispatch exactly the same events in exactly the same order.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::ConfigError;

/// Absolute slot number paired with the slot length used to convert it to
/// wall-clock time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SimTime {
    pub asn: u64,
    pub slot_duration_ms: u32,
}

impl SimTime {
    pub fn new(asn: u64, slot_duration_ms: u32) -> Self {
        Self { asn, slot_duration_ms }
    }

    pub fn millis(&self) -> u64 {
        self.asn * u64::from(self.slot_duration_ms)
    }

    pub fn seconds(&self) -> f64 {
        self.millis() as f64 / 1000.0
    }
}

/// Intra-slot ordering of events sharing an ASN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    TxDecision,
    MediumResolution,
    RxDelivery,
    Bookkeeping,
}

/// Opaque handle returned by [`EventQueue::schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

#[derive(Debug)]
struct Entry<E> {
    asn: u64,
    phase: Phase,
    seq: u64,
    payload: E,
}

impl<E> Entry<E> {
    fn key(&self) -> (u64, Phase, u64) {
        (self.asn, self.phase, self.seq)
    }
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Priority queue of `(asn, phase, seq)`-ordered events with cancellation.
#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    cancelled: BTreeSet<u64>,
    next_seq: u64,
    now: u64,
    last_phase: Option<Phase>,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            cancelled: BTreeSet::new(),
            next_seq: 0,
            now: 0,
            last_phase: None,
        }
    }

    /// Current ASN: the ASN of the last dispatched event.
    pub fn now(&self) -> u64 {
        self.now
    }

    /// Enqueues `payload` at `(asn, phase)`.
    ///
    /// # Panics
    ///
    /// Scheduling before the current ASN is a programming error and panics.
    pub fn schedule(&mut self, asn: u64, phase: Phase, payload: E) -> EventHandle {
        assert!(
            asn >= self.now,
            "event scheduled in the past: asn {asn} < now {}",
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry {
            asn,
            phase,
            seq,
            payload,
        }));
        EventHandle(seq)
    }

    pub fn cancel(&mut self, handle: EventHandle) {
        self.cancelled.insert(handle.0);
    }

    pub fn is_empty(&self) -> bool {
        self.peek_asn().is_none()
    }

    /// ASN of the next live event.
    pub fn peek_asn(&self) -> Option<u64> {
        self.heap
            .iter()
            .filter(|Reverse(e)| !self.cancelled.contains(&e.seq))
            .map(|Reverse(e)| e.asn)
            .min()
    }

    /// Removes and returns the next live event.
    pub fn pop(&mut self) -> Option<(u64, Phase, E)> {
        while let Some(Reverse(entry)) = self.heap.pop() {
            if self.cancelled.remove(&entry.seq) {
                continue;
            }
            debug_assert!(entry.asn >= self.now);
            self.now = entry.asn;
            self.last_phase = Some(entry.phase);
            return Some((entry.asn, entry.phase, entry.payload));
        }
        None
    }

    /// Dispatches every event with `asn < end` to `handler`, stopping early
    /// when `stop` returns true after a dispatch. Returns the ASN of the last
    /// dispatched event (or the current ASN if nothing ran).
    pub fn run_until<S, H>(&mut self, end: u64, mut stop: S, mut handler: H) -> u64
    where
        H: FnMut(&mut Self, u64, Phase, E),
        S: FnMut() -> bool,
    {
        loop {
            match self.next_live_asn() {
                Some(asn) if asn < end => {}
                _ => break,
            }
            let Some((asn, phase, payload)) = self.pop() else {
                break;
            };
            handler(self, asn, phase, payload);
            if stop() {
                break;
            }
        }
        self.now
    }

    fn next_live_asn(&mut self) -> Option<u64> {
        while let Some(Reverse(top)) = self.heap.peek() {
            if self.cancelled.contains(&top.seq) {
                let Reverse(e) = self.heap.pop().expect("peeked");
                self.cancelled.remove(&e.seq);
                continue;
            }
            return Some(top.asn);
        }
        None
    }
}

/// Splits an ASN into `(slotframe number, slot offset)`.
pub fn slotframe_index(asn: u64, slotframe_length: u32) -> Result<(u64, u32), ConfigError> {
    if slotframe_length == 0 {
        return Err(ConfigError::Invalid("slotframe length must be at least 1".into()));
    }
    let len = u64::from(slotframe_length);
    Ok((asn / len, (asn % len) as u32))
}

/// Independent random stream for one node, derived from the global seed.
///
/// Streams are keyed by node id so adding a node does not shift the draws of
/// any other node.
pub fn node_rng(seed: u64, node: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(node) + 1);
    rng
}

/// Stream used for draws that belong to no particular node.
pub fn global_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn dispatch_orders_by_time() {
        let mut q = EventQueue::new();
        q.schedule(5, Phase::TxDecision, "five");
        q.schedule(3, Phase::TxDecision, "three");
        let mut seen = Vec::new();
        q.run_until(u64::MAX, || false, |_, _, _, p| seen.push(p));
        assert_eq!(seen, vec!["three", "five"]);
    }

    #[test]
    fn equal_time_and_phase_is_fifo() {
        let mut q = EventQueue::new();
        for i in 0..10 {
            q.schedule(7, Phase::RxDelivery, i);
        }
        q.schedule(7, Phase::TxDecision, 100);
        let mut seen = Vec::new();
        q.run_until(u64::MAX, || false, |_, _, _, p| seen.push(p));
        assert_eq!(seen, vec![100, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    }

    #[test]
    fn cancelled_event_never_fires() {
        let mut q = EventQueue::new();
        let h = q.schedule(2, Phase::Bookkeeping, 1);
        q.schedule(3, Phase::Bookkeeping, 2);
        q.cancel(h);
        let mut seen = Vec::new();
        q.run_until(u64::MAX, || false, |_, _, _, p| seen.push(p));
        assert_eq!(seen, vec![2]);
    }

    #[test]
    fn empty_queue_returns_current_time() {
        let mut q: EventQueue<()> = EventQueue::new();
        assert_eq!(q.run_until(1000, || false, |_, _, _, _| {}), 0);
    }

    #[test]
    fn run_until_respects_end_and_predicate() {
        let mut q = EventQueue::new();
        for asn in 0..20 {
            q.schedule(asn, Phase::Bookkeeping, asn);
        }
        let mut count = 0u64;
        let end = q.run_until(10, || false, |_, _, _, _| count += 1);
        assert_eq!((end, count), (9, 10));

        let hits = std::cell::Cell::new(0u64);
        let end = q.run_until(u64::MAX, || hits.get() == 3, |_, _, _, _| hits.set(hits.get() + 1));
        assert_eq!(end, 12);
    }

    #[test]
    fn handler_can_reschedule() {
        let mut q = EventQueue::new();
        q.schedule(0, Phase::TxDecision, 0u64);
        let mut trace = Vec::new();
        q.run_until(
            5,
            || false,
            |q, asn, _, n| {
                trace.push(asn);
                q.schedule(asn + 1, Phase::TxDecision, n + 1);
            },
        );
        assert_eq!(trace, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    #[should_panic(expected = "in the past")]
    fn scheduling_in_the_past_panics() {
        let mut q = EventQueue::new();
        q.schedule(4, Phase::TxDecision, ());
        q.pop();
        q.schedule(3, Phase::TxDecision, ());
    }

    #[test]
    fn slotframe_index_examples() {
        assert_eq!(slotframe_index(0, 101).unwrap(), (0, 0));
        assert_eq!(slotframe_index(101, 101).unwrap(), (1, 0));
        // 150 = 1 * 101 + 49
        assert_eq!(slotframe_index(150, 101).unwrap(), (1, 49));
        assert!(slotframe_index(3, 0).is_err());
    }

    #[test]
    fn wall_clock_is_exact() {
        let t = SimTime::new(10_100, 15);
        assert_eq!(t.millis(), 151_500);
        assert!((t.seconds() - 151.5).abs() < 1e-12);
    }

    #[test]
    fn node_streams_are_independent_of_each_other() {
        let a: Vec<u32> = (0..4).map(|_| node_rng(9, 3).gen()).collect();
        let mut r3 = node_rng(9, 3);
        let mut r4 = node_rng(9, 4);
        let x: u32 = r3.gen();
        let y: u32 = r4.gen();
        assert_eq!(a[0], x);
        assert_ne!(x, y);
    }
}
