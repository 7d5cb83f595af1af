//! Workload-level behavior seen through whole simulations.

use nocsim::experiment::{run_experiment, ExperimentSpec, SweepAxis};
use nocsim::{FabricKind, MessageClass, RunConfig, Simulation, TrafficConfig};

fn quick(fabric: FabricKind) -> RunConfig {
    RunConfig {
        fabric,
        warmup_cycles: 2_000,
        measure_cycles: 30_000,
        ..RunConfig::default()
    }
}

#[test]
fn open_loop_load_matches_target() {
    let run = RunConfig {
        cores: 4,
        concentration: 1,
        ports: 4,
        warmup_cycles: 0,
        measure_cycles: 1_000_000,
        ..RunConfig::default()
    };
    let r = nocsim::run(&run, &TrafficConfig::bernoulli(0.5)).unwrap();
    assert!((r.load_port_mean - 0.5).abs() < 0.01, "{}", r.load_port_mean);
    let r = nocsim::run(&run, &TrafficConfig::messages(0.3, 0.5)).unwrap();
    assert!((r.load_port_mean - 0.3).abs() < 0.3 * 0.02, "{}", r.load_port_mean);
}

#[test]
fn data_messages_on_4b_links_arrive_as_18_cell_trains() {
    let run = RunConfig {
        link_width: 4,
        ..quick(FabricKind::Oq)
    };
    let r = nocsim::run(&run, &TrafficConfig::messages(0.05, 0.0)).unwrap();
    assert!(r.spike_runs.count() > 0);
    assert!(r.spike_runs.quantile(0.5) >= 18, "median run {}", r.spike_runs.quantile(0.5));
    assert!(r.spike_p99 >= 18);
}

#[test]
fn bernoulli_cell_runs_are_short() {
    let run = RunConfig {
        cores: 16,
        concentration: 1,
        ports: 16,
        ..quick(FabricKind::Oq)
    };
    let r = nocsim::run(&run, &TrafficConfig::bernoulli(0.1)).unwrap();
    // a run continues with probability p/N per cycle
    let expected = 1.0 / (1.0 - 0.1 / 16.0);
    assert!((r.spike_runs.mean() - expected).abs() < 0.01, "{}", r.spike_runs.mean());
}

#[test]
fn half_control_mix_gives_one_to_five_cells_on_16b_links() {
    let run = RunConfig {
        link_width: 16,
        ..quick(FabricKind::Oq)
    };
    let mut sim = Simulation::new(&run, &TrafficConfig::messages(0.3, 0.5)).unwrap();
    sim.enable_message_log();
    sim.run_to_end().unwrap();
    let log = sim.message_log().unwrap();
    let ctrl = log.injected.iter().filter(|m| m.class.is_control()).count() as f64;
    let data = log.injected.len() as f64 - ctrl;
    assert!((ctrl / data - 1.0).abs() < 0.05, "{ctrl} control, {data} data");
    assert_eq!(sim.cells_injected() as f64, ctrl + 5.0 * data);
}

/// Longest departure burst at the destination output when `senders` cores
/// each send one 18-cell message to core 3 at cycle 0.
fn burst_at_output(senders: u32) -> u64 {
    let run = RunConfig {
        cores: 4,
        concentration: 1,
        ports: 4,
        link_width: 4,
        warmup_cycles: 0,
        measure_cycles: 200,
        ..RunConfig::default()
    };
    let mut sim = Simulation::new(&run, &TrafficConfig::idle()).unwrap();
    for s in 0..senders {
        sim.inject_message(s, 3, MessageClass::Response);
    }
    sim.run_to_end().unwrap();
    sim.report().output_bursts.max()
}

#[test]
fn concurrent_messages_merge_into_a_double_spike() {
    assert_eq!(burst_at_output(1), 18);
    assert_eq!(burst_at_output(2), 36);
}

#[test]
fn doubling_noc_delay_lowers_closed_loop_throughput() {
    let base = quick(FabricKind::Oq);
    let slow = RunConfig {
        latency_offset: 4,
        ..base.clone()
    };
    for seed in 1..=3 {
        let a = nocsim::run(&RunConfig { seed, ..base.clone() }, &TrafficConfig::default()).unwrap();
        let b = nocsim::run(&RunConfig { seed, ..slow.clone() }, &TrafficConfig::default()).unwrap();
        assert!(b.end_delay_mean >= 2.0 * a.end_delay_mean);
        assert!(b.txn_per_kcycle < a.txn_per_kcycle);
    }
}

fn sweep(axis: SweepAxis, values: &[&str], run: RunConfig, traffic: TrafficConfig) -> Vec<nocsim::MetricsReport> {
    let spec = ExperimentSpec {
        name: "t".into(),
        axis,
        values: values.iter().map(|v| v.to_string()).collect(),
        seeds: vec![7],
        run,
        traffic,
        stall_value: None,
    };
    let out = run_experiment(&spec, 4).unwrap();
    out.points.into_iter().map(|p| p.result.unwrap()).collect()
}

#[test]
fn shrinking_the_switch_raises_per_port_load() {
    let r = sweep(
        SweepAxis::SwitchSize,
        &["16", "8", "4", "2", "1"],
        quick(FabricKind::Oq),
        TrafficConfig::default(),
    );
    for w in r.windows(2) {
        assert!(w[1].load_port_mean >= w[0].load_port_mean, "{} then {}", w[0].load_port_mean, w[1].load_port_mean);
    }
}

#[test]
fn iq_switch_queues_at_least_as_long_as_oq() {
    let r = sweep(
        SweepAxis::Fabric,
        &["OQ", "IQ_FIFO"],
        RunConfig {
            link_width: 16,
            ..quick(FabricKind::Oq)
        },
        TrafficConfig::default(),
    );
    assert!(r[1].qdelay_switch_mean >= r[0].qdelay_switch_mean);
}

#[test]
fn zero_load_reports_zero_queueing() {
    let r = nocsim::run(&quick(FabricKind::Mesh), &TrafficConfig::idle()).unwrap();
    assert_eq!(r.qdelay_total_mean(), 0.0);
    assert_eq!(r.util_mean, 0.0);
    assert_eq!(r.end_delay_mean, 0.0);
}

#[test]
fn transaction_trace_lists_every_completed_transaction() {
    let run = RunConfig {
        warmup_cycles: 0,
        measure_cycles: 5_000,
        ..quick(FabricKind::Oq)
    };
    let mut sim = Simulation::new(&run, &TrafficConfig::default()).unwrap();
    sim.workload_mut().enable_trace();
    sim.run_to_end().unwrap();
    sim.drain().unwrap();
    let csv = nocsim::workload::transaction_trace_csv(sim.workload().trace());
    assert_eq!(csv.lines().count() as u64, 1 + sim.workload().completed());
    assert!(csv.starts_with("id,pattern,src,home,owner,issue,complete"));
}
