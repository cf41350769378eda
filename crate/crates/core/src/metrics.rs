//! Energy accounting, per-run metrics, the event trace and summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{PowerTable, RepetitionPolicy};
use crate::error::SimError;
use crate::radio::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadioState {
    Tx,
    Rx,
    Sleep,
}

/// Time spent per radio state, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateTimes {
    pub tx_ms: u64,
    pub rx_ms: u64,
    pub sleep_ms: u64,
}

impl StateTimes {
    pub fn total_ms(&self) -> u64 {
        self.tx_ms + self.rx_ms + self.sleep_ms
    }

    /// Millijoules under `power` (mW x ms = uJ).
    pub fn energy_mj(&self, power: &PowerTable) -> f64 {
        (self.tx_ms as f64 * power.tx_mw + self.rx_ms as f64 * power.rx_mw + self.sleep_ms as f64 * power.sleep_mw)
            / 1000.0
    }

    pub fn mean_power_mw(&self, power: &PowerTable) -> f64 {
        match self.total_ms() {
            0 => 0.0,
            t => self.energy_mj(power) * 1000.0 / t as f64,
        }
    }
}

/// Per-node radio-state time ledger.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub nodes: BTreeMap<NodeId, StateTimes>,
}

impl EnergyLedger {
    pub fn energy_charge(&mut self, node: NodeId, state: RadioState, ms: u64) {
        let t = self.nodes.entry(node).or_default();
        match state {
            RadioState::Tx => t.tx_ms += ms,
            RadioState::Rx => t.rx_ms += ms,
            RadioState::Sleep => t.sleep_ms += ms,
        }
    }

    pub fn get(&self, node: NodeId) -> StateTimes {
        self.nodes.get(&node).copied().unwrap_or_default()
    }
}

/// One line of the JSON-lines trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub asn: u64,
    pub node: NodeId,
    pub event: String,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub config: String,
    pub seed: u64,
    /// Seconds from the first slot until the last chunk arrived; `None`
    /// (censored) unless every chunk arrived.
    pub ttc_s: Option<f64>,
    pub pdr: f64,
    pub completed: Vec<bool>,
    pub e2e_retx: u64,
    pub dups: u64,
    pub mac_retx: u64,
    /// Overlaps on scheduled cells or on the CSMA channel.
    pub collisions: u64,
    /// Overlaps of contending frames in the shared cell.
    pub shared_collisions: u64,
    pub energy_mj: BTreeMap<NodeId, f64>,
    pub mean_power_mw: BTreeMap<NodeId, f64>,
    pub chunk_latencies_s: Vec<f64>,
    pub duration_s: f64,
}

impl MetricsRecord {
    pub fn network_mean_power_mw(&self) -> f64 {
        mean(&self.mean_power_mw.values().copied().collect::<Vec<_>>())
    }

    pub fn latency_jitter_s(&self) -> f64 {
        stddev(&self.chunk_latencies_s)
    }
}

/// Rebuilds a [`MetricsRecord`] from a trace alone.
pub fn metrics_from_trace(
    trace: &[TraceEvent],
    config: &str,
    seed: u64,
    chunks: u32,
    power: &PowerTable,
) -> MetricsRecord {
    let mut completed = vec![false; chunks as usize];
    let mut latencies = Vec::new();
    let mut rec = MetricsRecord {
        config: config.to_string(),
        seed,
        ttc_s: None,
        pdr: 0.0,
        completed: Vec::new(),
        e2e_retx: 0,
        dups: 0,
        mac_retx: 0,
        collisions: 0,
        shared_collisions: 0,
        energy_mj: BTreeMap::new(),
        mean_power_mw: BTreeMap::new(),
        chunk_latencies_s: Vec::new(),
        duration_s: 0.0,
    };
    for ev in trace {
        match ev.event.as_str() {
            "chunk" => {
                if let Some(i) = ev.detail["chunk"].as_u64() {
                    if let Some(c) = completed.get_mut(i as usize) {
                        *c = true;
                    }
                }
                latencies.push(ev.detail["latency_s"].as_f64().unwrap_or(f64::NAN));
            }
            "duplicate" => rec.dups += 1,
            "retransmit" => rec.e2e_retx += 1,
            "mac_retry" => rec.mac_retx += 1,
            "collision" => rec.collisions += 1,
            "shared_collision" => rec.shared_collisions += 1,
            "complete" => rec.ttc_s = ev.detail["ttc_s"].as_f64(),
            "energy" => {
                let t = StateTimes {
                    tx_ms: ev.detail["tx_ms"].as_u64().unwrap_or(0),
                    rx_ms: ev.detail["rx_ms"].as_u64().unwrap_or(0),
                    sleep_ms: ev.detail["sleep_ms"].as_u64().unwrap_or(0),
                };
                rec.energy_mj.insert(ev.node, t.energy_mj(power));
                rec.mean_power_mw.insert(ev.node, t.mean_power_mw(power));
            }
            "run_end" => rec.duration_s = ev.detail["duration_ms"].as_u64().unwrap_or(0) as f64 / 1000.0,
            _ => {}
        }
    }
    rec.pdr = completed.iter().filter(|c| **c).count() as f64 / f64::from(chunks.max(1));
    rec.completed = completed;
    rec.chunk_latencies_s = latencies;
    rec
}

/// Trace event for a node's accumulated radio-state times.
pub fn energy_event(asn: u64, node: NodeId, t: &StateTimes) -> TraceEvent {
    TraceEvent {
        asn,
        node,
        event: "energy".into(),
        detail: json!({"tx_ms": t.tx_ms, "rx_ms": t.rx_ms, "sleep_ms": t.sleep_ms}),
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation; 0 for fewer than two values.
fn stddev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Stat> {
        if xs.is_empty() {
            return None;
        }
        Some(Stat {
            mean: mean(xs),
            std: stddev(xs),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: String,
    pub runs: usize,
    /// Over uncensored runs only.
    pub ttc_s: Option<Stat>,
    pub censored: usize,
    pub pdr: Stat,
    pub e2e_retx: Stat,
    pub dups: Stat,
    pub mac_retx: Stat,
    /// Mean over runs of the per-run chunk latency standard deviation.
    pub latency_jitter_s: f64,
    pub energy_mj: BTreeMap<NodeId, f64>,
    pub mean_power_mw: BTreeMap<NodeId, f64>,
}

/// Mean, standard deviation, min and max of each metric across runs.
/// Time-to-completion jitter is its standard deviation across runs.
pub fn summarize(records: &[MetricsRecord]) -> Summary {
    assert!(!records.is_empty(), "summarize needs at least one record");
    let col = |f: &dyn Fn(&MetricsRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let ttcs: Vec<f64> = records.iter().filter_map(|r| r.ttc_s).collect();
    let mut energy: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    let mut power: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    for r in records {
        for (n, e) in &r.energy_mj {
            energy.entry(*n).or_default().push(*e);
        }
        for (n, p) in &r.mean_power_mw {
            power.entry(*n).or_default().push(*p);
        }
    }
    Summary {
        config: records[0].config.clone(),
        runs: records.len(),
        ttc_s: Stat::of(&ttcs),
        censored: records.len() - ttcs.len(),
        pdr: Stat::of(&col(&|r| r.pdr)).expect("non-empty"),
        e2e_retx: Stat::of(&col(&|r| r.e2e_retx as f64)).expect("non-empty"),
        dups: Stat::of(&col(&|r| r.dups as f64)).expect("non-empty"),
        mac_retx: Stat::of(&col(&|r| r.mac_retx as f64)).expect("non-empty"),
        latency_jitter_s: mean(&col(&|r| r.latency_jitter_s())),
        energy_mj: energy.into_iter().map(|(n, v)| (n, mean(&v))).collect(),
        mean_power_mw: power.into_iter().map(|(n, v)| (n, mean(&v))).collect(),
    }
}

/// True once the running mean of `values` moved by less than the
/// tolerance (relative) over the last `window` additions.
pub fn converged(values: &[f64], policy: &RepetitionPolicy) -> bool {
    let w = policy.window as usize;
    if values.len() <= w {
        return false;
    }
    let running = |n: usize| mean(&values[..n]);
    let now = running(values.len());
    let before = running(values.len() - w);
    if now == 0.0 {
        return before == 0.0;
    }
    ((now - before) / now).abs() < policy.tolerance
}

/// The quantity the repetition rule tracks: ttc, or the run length when
/// the run was censored.
pub fn convergence_value(r: &MetricsRecord) -> f64 {
    r.ttc_s.unwrap_or(r.duration_s)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// Results table: one row per run and a trailing summary row.
pub fn results_csv(records: &[MetricsRecord], summary: &Summary) -> String {
    let nodes: Vec<NodeId> = records
        .iter()
        .flat_map(|r| r.energy_mj.keys().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut out = String::from("config,seed,ttc_s,pdr,e2e_retx,dups,mac_retx");
    for n in &nodes {
        let _ = write!(out, ",energy_node_{n}_mJ");
    }
    out.push_str(",summary\n");
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{:.6},{},{},{}",
            r.config,
            r.seed,
            fmt_opt(r.ttc_s),
            r.pdr,
            r.e2e_retx,
            r.dups,
            r.mac_retx
        );
        for n in &nodes {
            let _ = write!(out, ",{}", fmt_opt(r.energy_mj.get(n).copied()));
        }
        out.push_str(",false\n");
    }
    let _ = write!(
        out,
        "{},,{},{:.6},{:.3},{:.3},{:.3}",
        summary.config,
        fmt_opt(summary.ttc_s.map(|s| s.mean)),
        summary.pdr.mean,
        summary.e2e_retx.mean,
        summary.dups.mean,
        summary.mac_retx.mean
    );
    for n in &nodes {
        let _ = write!(out, ",{}", fmt_opt(summary.energy_mj.get(n).copied()));
    }
    out.push_str(",true\n");
    out
}

pub fn trace_jsonl(trace: &[TraceEvent]) -> String {
    let mut out = String::new();
    for ev in trace {
        out.push_str(&serde_json::to_string(ev).expect("trace event serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, SimError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| SimError::Parse(format!("trace line: {e}"))))
        .collect()
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), SimError> {
    let mut f = std::fs::File::create(path).map_err(|e| SimError::io(path.display().to_string(), e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| SimError::io(path.display().to_string(), e))
}

/// Writes `results.csv` and `summary.json` into `dir`.
pub fn emit_results(records: &[MetricsRecord], summary: &Summary, dir: &Path) -> Result<(), SimError> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir.display().to_string(), e))?;
    write_file(&dir.join("results.csv"), &results_csv(records, summary))?;
    write_file(
        &dir.join("summary.json"),
        &serde_json::to_string_pretty(summary).expect("summary serializes"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(ttc: Option<f64>, pdr: f64) -> MetricsRecord {
        MetricsRecord {
            config: "SINR".into(),
            seed: 1,
            ttc_s: ttc,
            pdr,
            completed: vec![],
            e2e_retx: 2,
            dups: 0,
            mac_retx: 0,
            collisions: 0,
            shared_collisions: 0,
            energy_mj: BTreeMap::from([(1, 10.0), (2, 20.0)]),
            mean_power_mw: BTreeMap::from([(1, 1.0), (2, 2.0)]),
            chunk_latencies_s: vec![0.1, 0.3],
            duration_s: 160.0,
        }
    }

    #[test]
    fn ledger_arithmetic() {
        let p = PowerTable::default();
        let mut l = EnergyLedger::default();
        // one slotframe, 4 active slots of 101
        l.energy_charge(1, RadioState::Rx, 4 * 15);
        l.energy_charge(1, RadioState::Sleep, 97 * 15);
        let want = (4.0 * 55.0 + 97.0 * 0.1) * 15.0 / 1000.0;
        assert!((l.get(1).energy_mj(&p) - want).abs() < 1e-12);
        // always-listening node for 1 s
        let idle = StateTimes {
            rx_ms: 1000,
            ..Default::default()
        };
        assert!((idle.energy_mj(&p) - 55.0).abs() < 1e-12);
        assert!((idle.mean_power_mw(&p) - 55.0).abs() < 1e-12);
    }

    #[test]
    fn single_record_summary() {
        let s = summarize(&[record(Some(152.0), 1.0)]);
        let t = s.ttc_s.unwrap();
        assert_eq!((t.mean, t.std, t.min, t.max), (152.0, 0.0, 152.0, 152.0));
        assert_eq!(s.censored, 0);
    }

    #[test]
    fn censored_runs_excluded_from_ttc() {
        let s = summarize(&[record(Some(150.0), 1.0), record(None, 0.97), record(Some(154.0), 1.0)]);
        assert_eq!(s.censored, 1);
        assert_eq!(s.ttc_s.unwrap().mean, 152.0);
        assert!((s.pdr.mean - 2.97 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let recs = [record(Some(152.0), 1.0), record(None, 0.5)];
        let csv = results_csv(&recs, &summarize(&recs));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "config,seed,ttc_s,pdr,e2e_retx,dups,mac_retx,energy_node_1_mJ,energy_node_2_mJ,summary"
        );
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("SINR,1,,0.5"));
        assert!(lines[3].ends_with(",true"));
    }

    #[test]
    fn convergence_rule() {
        let p = RepetitionPolicy::default();
        assert!(!converged(&[1.0; 5], &p));
        assert!(converged(&[1.0; 6], &p));
        assert!(!converged(&[1.0, 1.0, 1.0, 1.0, 1.0, 2.0], &p));
    }

    #[test]
    fn trace_round_trip() {
        let ev = vec![
            TraceEvent {
                asn: 3,
                node: 8,
                event: "chunk".into(),
                detail: json!({"chunk": 0, "latency_s": 0.25}),
            },
            energy_event(
                9,
                8,
                &StateTimes {
                    tx_ms: 15,
                    rx_ms: 30,
                    sleep_ms: 100,
                },
            ),
            TraceEvent {
                asn: 9,
                node: 8,
                event: "complete".into(),
                detail: json!({"ttc_s": 0.06}),
            },
        ];
        let back = parse_trace(&trace_jsonl(&ev)).unwrap();
        assert_eq!(back, ev);
        let r = metrics_from_trace(&back, "SINR", 1, 1, &PowerTable::default());
        assert_eq!(r.pdr, 1.0);
        assert_eq!(r.ttc_s, Some(0.06));
        assert_eq!(r.chunk_latencies_s, vec![0.25]);
    }
}
