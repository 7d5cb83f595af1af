//! Every injected message is reassembled exactly once after a drain.

use nocsim::workload::Message;
use nocsim::{BufferDepth, EdgeMode, FabricKind, RunConfig, Simulation, TrafficConfig};
use proptest::prelude::*;

fn drain_and_compare(run: &RunConfig, traffic: &TrafficConfig) -> usize {
    let mut sim = Simulation::new(run, traffic).unwrap();
    sim.enable_message_log();
    sim.run_to_end().unwrap();
    sim.drain().unwrap();
    sim.audit().unwrap();
    assert_eq!(sim.in_flight(), 0);
    assert_eq!(sim.cells_injected(), sim.cells_delivered());
    let log = sim.message_log().unwrap();
    let mut injected: Vec<Message> = log.injected.clone();
    let mut delivered: Vec<Message> = log.delivered.clone();
    injected.sort_by_key(|m| m.id);
    delivered.sort_by_key(|m| m.id);
    assert_eq!(injected, delivered);
    injected.len()
}

fn short(fabric: FabricKind) -> RunConfig {
    RunConfig {
        fabric,
        link_width: 16,
        warmup_cycles: 500,
        measure_cycles: 5_000,
        ..RunConfig::default()
    }
}

#[test]
fn open_loop_messages_drain_on_every_fabric() {
    for fabric in [
        FabricKind::Oq,
        FabricKind::IqFifo,
        FabricKind::VoqRrm,
        FabricKind::VoqIslip(1),
        FabricKind::VoqIslip(4),
        FabricKind::Mesh,
    ] {
        let n = drain_and_compare(&short(fabric), &TrafficConfig::messages(0.3, 0.5));
        assert!(n > 1_000, "{fabric}: only {n} messages");
    }
}

#[test]
fn uber_mesh_drains_with_credits() {
    let run = RunConfig {
        edge_mode: EdgeMode::InputQueued,
        buffer_depth: BufferDepth::Cells(2),
        vnets: 2,
        credit_audit_interval: 1,
        ..short(FabricKind::Mesh)
    };
    drain_and_compare(&run, &TrafficConfig::messages(0.4, 0.5));
    drain_and_compare(&run, &TrafficConfig::default());
}

#[test]
fn closed_loop_transactions_all_complete() {
    let run = short(FabricKind::Mesh);
    let mut sim = Simulation::new(&run, &TrafficConfig::default()).unwrap();
    sim.run_to_end().unwrap();
    sim.drain().unwrap();
    let w = sim.workload();
    assert!(w.issued() > 100);
    assert_eq!(w.issued(), w.completed());
    assert_eq!(w.outstanding_transactions(), 0);
}

#[test]
fn open_loop_identity_injected_equals_delivered() {
    // long run: the rates agree up to the cells still in flight
    let run = RunConfig {
        warmup_cycles: 1_000,
        measure_cycles: 100_000,
        ..short(FabricKind::VoqIslip(1))
    };
    let r = nocsim::run(&run, &TrafficConfig::messages(0.4, 0.5)).unwrap();
    assert!((r.load_port_mean - r.throughput_port_mean).abs() < 0.005, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exactly_once_under_random_configs(
        fabric in prop_oneof![
            Just(FabricKind::Oq),
            Just(FabricKind::IqFifo),
            Just(FabricKind::VoqRrm),
            Just(FabricKind::VoqIslip(2)),
            Just(FabricKind::Mesh),
        ],
        conc in prop_oneof![Just(1usize), Just(2), Just(4)],
        width in prop_oneof![Just(4u32), Just(16), Just(64)],
        load in 0.05f64..0.6,
        uber in any::<bool>(),
        seed in 0u64..1_000,
    ) {
        let mut run = RunConfig {
            cores: 4 * conc,
            concentration: conc,
            ports: 4,
            fabric,
            link_width: width,
            warmup_cycles: 100,
            measure_cycles: 1_500,
            seed,
            ..RunConfig::default()
        };
        if uber && fabric == FabricKind::Mesh {
            run.edge_mode = EdgeMode::InputQueued;
            run.buffer_depth = BufferDepth::Cells(3);
            run.vnets = 2;
            run.credit_audit_interval = 1;
        }
        drain_and_compare(&run, &TrafficConfig::messages(load, 0.5));
    }
}
