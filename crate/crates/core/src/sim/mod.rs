//! Experiment runs: wiring scenario, routing, schedule and link layer
//! together, plus repetition control.

mod contention;
mod network;
mod slotted;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::adaptive::Link;
use crate::config::{ScenarioConfig, Topology};
use crate::error::SimError;
use crate::metrics::{converged, convergence_value, energy_event, EnergyLedger, MetricsRecord, TraceEvent};
use crate::radio::{ConnectivityGraph, NodeId};
use crate::routing::{build_dodag, Dodag};
use crate::tsch::{build_static_schedule, CellKind, ScheduleMatrix};

use contention::Contention;
use network::Network;
use slotted::Slotted;

/// One adaptation decision other than HOLD.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationRow {
    pub asn: u64,
    pub link: Link,
    pub utilization: f64,
    /// `ALLOCATE`, `DEALLOCATE` or `REJECT`.
    pub decision: String,
    /// Dynamic Interest plus content cells on the link afterwards.
    pub dyn_cells_after: u32,
}

pub const ADAPTATION_CSV_HEADER: &str = "asn,link,U_cur,decision,dyn_cells_after";

pub fn adaptation_csv(rows: &[AdaptationRow]) -> String {
    let mut out = format!("{ADAPTATION_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{}->{},{:.4},{},{}",
            r.asn, r.link.0, r.link.1, r.utilization, r.decision, r.dyn_cells_after
        );
    }
    out
}

/// A dynamic cell as granted, keyed by the link whose Interests it serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DynCell {
    pub asn: u64,
    pub link: Link,
    pub slot: u32,
    pub channel: u8,
    pub kind: CellKind,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: MetricsRecord,
    pub trace: Vec<TraceEvent>,
    pub adaptation_log: Vec<AdaptationRow>,
    /// Every dynamic cell granted during the run.
    pub dynamic_cells: Vec<DynCell>,
    pub ledger: EnergyLedger,
    /// Tree used for forwarding during the workload.
    pub tree: Dodag,
    /// TSCH schedules as they stood at the end of the run.
    pub final_schedules: Option<BTreeMap<NodeId, ScheduleMatrix>>,
    pub workload_start_asn: Option<u64>,
    /// Slot in which the main consumer resolved its last chunk.
    pub completion_asn: Option<u64>,
}

/// Tree and static schedule for a scenario.
pub fn plan(cfg: &ScenarioConfig) -> Result<(ConnectivityGraph, Dodag, BTreeMap<NodeId, ScheduleMatrix>), SimError> {
    cfg.validate()?;
    let graph = cfg.graph()?;
    let dodag = build_dodag(&graph, cfg.root)?;
    let schedules = build_static_schedule(&graph, &dodag, &cfg.schedule)?;
    Ok((graph, dodag, schedules))
}

/// Runs one experiment: bootstrap, then the retrieval workload until the
/// consumer resolved every chunk or the frame limit hit.
pub fn run_experiment(cfg: &ScenarioConfig, seed: u64) -> Result<RunOutput, SimError> {
    let (graph, dodag, schedules) = plan(cfg)?;
    let mut net = Network::new(cfg, graph, dodag);
    net.emit(
        0,
        cfg.root,
        "run_start",
        json!({"mode": cfg.mode.label(), "seed": seed}),
    );
    let (ledger, adaptation_log, dynamic_cells, final_schedules) = if cfg.mode.is_tsch() {
        let mut mac = Slotted::new(&net, schedules, seed);
        mac.run(&mut net);
        (mac.ledger, mac.adaptation_log, mac.dynamic_cells, Some(mac.schedules))
    } else {
        let mut mac = Contention::new(&net, seed);
        mac.run(&mut net);
        (mac.ledger, Vec::new(), Vec::new(), None)
    };
    let end = net.trace.last().map_or(0, |e| e.asn);
    for (&n, t) in &ledger.nodes {
        if cfg.limits.trace {
            net.trace.push(energy_event(end, n, t));
        }
    }
    let duration_ms = ledger.nodes.values().map(|t| t.total_ms()).max().unwrap_or(0);
    net.emit(end, cfg.root, "run_end", json!({"duration_ms": duration_ms}));

    let record = build_record(&net, &ledger, seed, duration_ms);
    let (workload_start_asn, completion_asn) = match net.phase {
        network::RunPhase::Bootstrap => (None, None),
        network::RunPhase::Workload { start } => (Some(start), None),
        network::RunPhase::Finished { at } => (
            net.trace.iter().find(|e| e.event == "workload_start").map(|e| e.asn),
            Some(at),
        ),
    };
    Ok(RunOutput {
        record,
        trace: net.trace,
        adaptation_log,
        dynamic_cells,
        ledger,
        tree: net.tree,
        final_schedules,
        workload_start_asn,
        completion_asn,
    })
}

fn build_record(net: &Network, ledger: &EnergyLedger, seed: u64, duration_ms: u64) -> MetricsRecord {
    let cfg = &net.cfg;
    let completed: Vec<bool> = match net.main_app() {
        Some(app) => (0..cfg.chunks).map(|i| app.delivered.contains(&i)).collect(),
        None => vec![false; cfg.chunks as usize],
    };
    let delivered = completed.iter().filter(|c| **c).count();
    MetricsRecord {
        config: cfg.mode.label().to_string(),
        seed,
        ttc_s: net.ttc_s,
        pdr: delivered as f64 / f64::from(cfg.chunks),
        completed,
        e2e_retx: net.counters.e2e_retx,
        dups: net.counters.dups,
        mac_retx: net.counters.mac_retx,
        collisions: net.counters.collisions,
        shared_collisions: net.counters.shared_collisions,
        energy_mj: ledger
            .nodes
            .iter()
            .map(|(&n, t)| (n, t.energy_mj(&cfg.power)))
            .collect(),
        mean_power_mw: ledger
            .nodes
            .iter()
            .map(|(&n, t)| (n, t.mean_power_mw(&cfg.power)))
            .collect(),
        chunk_latencies_s: net.latencies.clone(),
        duration_s: duration_ms as f64 / 1000.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repetitions {
    /// Until the running mean settles (see [`converged`]) or the run cap.
    Auto,
    Fixed(u32),
}

impl std::str::FromStr for Repetitions {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Repetitions::Auto);
        }
        match s.parse::<u32>() {
            Ok(k) if k > 0 => Ok(Repetitions::Fixed(k)),
            _ => Err(format!("expected `auto` or a positive count, got {s:?}")),
        }
    }
}

/// Runs seeds `first_seed, first_seed + 1, ...`.
pub fn run_repetitions(cfg: &ScenarioConfig, first_seed: u64, reps: Repetitions) -> Result<Vec<RunOutput>, SimError> {
    let cap = match reps {
        Repetitions::Auto => cfg.repetition.max_runs,
        Repetitions::Fixed(k) => k,
    };
    let mut outs = Vec::new();
    let mut values = Vec::new();
    for i in 0..u64::from(cap) {
        let out = run_experiment(cfg, first_seed + i)?;
        values.push(convergence_value(&out.record));
        outs.push(out);
        if reps == Repetitions::Auto && converged(&values, &cfg.repetition) {
            break;
        }
    }
    Ok(outs)
}

/// Random connected topology of `n` nodes with bounded degree, rooted at
/// node 1 which also produces; the consumer is the deepest node.
pub fn random_scenario(n: u32, chunks: u32, seed: u64) -> ScenarioConfig {
    assert!(n >= 2, "need at least two nodes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut degree: BTreeMap<NodeId, u32> = BTreeMap::new();
    let mut edges: Vec<[NodeId; 2]> = Vec::new();
    for v in 2..=n {
        let open: Vec<NodeId> = (1..v).filter(|u| degree.get(u).copied().unwrap_or(0) < 3).collect();
        let u = *open.choose(&mut rng).expect("a degree-bounded tree always has a leaf");
        edges.push([u, v]);
        *degree.entry(u).or_default() += 1;
        *degree.entry(v).or_default() += 1;
    }
    for _ in 0..n / 3 {
        let a = rng.gen_range(1..=n);
        let b = rng.gen_range(1..=n);
        let exists = edges
            .iter()
            .any(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a));
        if a == b || exists || degree[&a] >= 4 || degree[&b] >= 4 {
            continue;
        }
        edges.push([a, b]);
        *degree.entry(a).or_default() += 1;
        *degree.entry(b).or_default() += 1;
    }
    let mut cfg = ScenarioConfig::iotlab10();
    cfg.name = format!("random{n}-{seed}");
    cfg.topology = Topology {
        nodes: (1..=n).collect(),
        edges,
        ..Topology::default()
    };
    cfg.side_traffic.nodes.clear();
    cfg.root = 1;
    cfg.producer = 1;
    cfg.chunks = chunks;
    let graph = cfg.graph().expect("generated edges are valid");
    let dist = graph.bfs_distances(1, u32::MAX);
    cfg.consumer = dist
        .iter()
        .max_by_key(|(&v, &d)| (d, std::cmp::Reverse(v)))
        .map(|(&v, _)| v)
        .expect("non-empty graph");
    cfg
}
