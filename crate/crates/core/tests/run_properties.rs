//! Whole-run properties across modes and seeds.

use icnsim::config::{MacMode, ScenarioConfig};
use icnsim::metrics::{metrics_from_trace, parse_trace, trace_jsonl};
use icnsim::sim::{plan, random_scenario, run_experiment, RunOutput};
use icnsim::tsch::{schedule_to_csv, CellKind, Ssf};
use proptest::prelude::*;

fn short(cfg: ScenarioConfig, mode: MacMode, chunks: u32) -> ScenarioConfig {
    let mut c = cfg.with_mode(mode);
    c.chunks = chunks;
    c
}

fn run(cfg: &ScenarioConfig, seed: u64) -> RunOutput {
    run_experiment(cfg, seed).expect("scenario runs")
}

fn mode() -> impl Strategy<Value = MacMode> {
    prop::sample::select(MacMode::ALL.to_vec())
}

fn scenario_for(mode: MacMode) -> ScenarioConfig {
    if mode.is_tsch() {
        ScenarioConfig::iotlab10()
    } else {
        ScenarioConfig::iotlab10_lossy()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn same_seed_same_trace(mode in mode(), seed in 0u64..1000) {
        let cfg = short(scenario_for(mode), mode, 15);
        let (a, b) = (run(&cfg, seed), run(&cfg, seed));
        prop_assert_eq!(trace_jsonl(&a.trace), trace_jsonl(&b.trace));
        prop_assert_eq!(a.record, b.record);
    }

    #[test]
    fn metrics_recompute_from_trace(mode in mode(), seed in 0u64..1000) {
        let cfg = short(scenario_for(mode), mode, 15);
        let out = run(&cfg, seed);
        let trace = parse_trace(&trace_jsonl(&out.trace)).unwrap();
        let again = metrics_from_trace(&trace, cfg.mode.label(), seed, cfg.chunks, &cfg.power);
        prop_assert_eq!(again, out.record);
    }

    #[test]
    fn every_node_accounts_for_the_whole_run(mode in mode(), seed in 0u64..1000) {
        let cfg = short(scenario_for(mode), mode, 15);
        let out = run(&cfg, seed);
        let totals: Vec<u64> = out.ledger.nodes.values().map(|t| t.total_ms()).collect();
        prop_assert!(totals.windows(2).all(|w| w[0] == w[1]), "{:?}", totals);
        prop_assert_eq!(totals[0] as f64 / 1000.0, out.record.duration_s);
        if !mode.is_tsch() {
            // contention radios never sleep
            prop_assert!(out.ledger.nodes.values().all(|t| t.sleep_ms == 0));
        }
    }

    #[test]
    fn asn_never_goes_backwards(mode in mode(), seed in 0u64..1000) {
        let cfg = short(scenario_for(mode), mode, 10);
        let out = run(&cfg, seed);
        prop_assert!(out.trace.windows(2).all(|w| w[0].asn <= w[1].asn));
    }

    #[test]
    fn sinr_on_random_topologies_is_clean(n in 3u32..=25, seed in any::<u64>()) {
        let cfg = random_scenario(n, 10, seed);
        let out = run(&cfg, 1);
        prop_assert_eq!(out.record.pdr, 1.0);
        prop_assert_eq!(out.record.mac_retx, 0);
        prop_assert_eq!(out.record.collisions, 0);
    }
}

#[test]
fn sinr_schedule_never_changes() {
    let cfg = short(ScenarioConfig::iotlab10(), MacMode::Sinr, 20);
    let (_, _, initial) = plan(&cfg).unwrap();
    let out = run(&cfg, 1);
    assert_eq!(
        schedule_to_csv(out.final_schedules.as_ref().unwrap()),
        schedule_to_csv(&initial)
    );
    assert!(out.dynamic_cells.is_empty() && out.adaptation_log.is_empty());
}

#[test]
fn dinr_never_allocates() {
    let out = run(&short(ScenarioConfig::iotlab10(), MacMode::Dinr, 20), 1);
    assert!(out.dynamic_cells.is_empty() && out.adaptation_log.is_empty());
}

#[test]
fn adaptation_stays_in_the_dynamic_region() {
    let cfg = ScenarioConfig::iotlab10().with_mode(MacMode::Adinr);
    let (_, _, initial) = plan(&cfg).unwrap();
    let out = run(&cfg, 1);
    assert!(!out.dynamic_cells.is_empty());
    // fresh two-hop knowledge keeps granted cells conflict-free
    assert_eq!((out.record.collisions, out.record.mac_retx), (0, 0));
    let part = cfg.schedule.partition().unwrap();
    for c in &out.dynamic_cells {
        assert!(part.range(Ssf::Dyn).contains(&c.slot), "{c:?}");
        assert!(matches!(c.kind, CellKind::Interest | CellKind::Content));
    }
    // static regions untouched; every burst released by the end
    let fin = out.final_schedules.unwrap();
    for (n, m) in &fin {
        assert!(m.cells().all(|c| c.ssf != Ssf::Dyn), "node {n} kept dynamic cells");
        let statics = |s: &icnsim::tsch::ScheduleMatrix| {
            s.cells()
                .map(|c| (c.slot, c.channel, c.role, c.peer, c.kind))
                .collect::<Vec<_>>()
        };
        assert_eq!(statics(m), statics(&initial[n]));
    }
}

#[test]
fn dinr_saves_energy_per_node() {
    let sinr = run(&ScenarioConfig::iotlab10().with_mode(MacMode::Sinr), 1);
    let dinr = run(&ScenarioConfig::iotlab10().with_mode(MacMode::Dinr), 1);
    for (n, e) in &dinr.record.energy_mj {
        assert!(*e <= sinr.record.energy_mj[n], "node {n}");
    }
}

#[test]
fn mode_ordering_on_the_testbed() {
    let ttc = |m| run(&ScenarioConfig::iotlab10().with_mode(m), 1).record.ttc_s.unwrap();
    let (sinr, dinr, adinr) = (ttc(MacMode::Sinr), ttc(MacMode::Dinr), ttc(MacMode::Adinr));
    assert!(adinr < dinr && dinr <= sinr * 1.05, "{sinr} {dinr} {adinr}");
}

#[test]
fn sleeping_tsch_radios_dominate() {
    let out = run(&ScenarioConfig::iotlab10(), 1);
    for t in out.ledger.nodes.values() {
        assert!(t.sleep_ms > t.tx_ms + t.rx_ms);
        assert_eq!(t.total_ms(), t.tx_ms + t.rx_ms + t.sleep_ms);
    }
}
