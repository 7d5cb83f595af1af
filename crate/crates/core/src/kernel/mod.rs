//! The cycle-driven engine.
//!
//! Every cycle runs the same phases in the same order:
//! 1. egress edges deliver due cells to reassembly; completed messages go to
//!    the workload;
//! 2. credit returns land;
//! 3. ingress edges forward one cell each into the fabric;
//! 4. the fabric allocates and launches, then cores launch into their edges;
//! 5. the workload creates messages, which are segmented into core outboxes;
//! 6. audits and the inactivity watchdog run, and the clock advances.
//!
//! A launch at cycle `t` is seen by the next component no earlier than
//! `t + 1`, so every component holds a cell for at least one cycle.

pub mod rng;

use std::collections::HashMap;

use crate::config::{EdgeMode, RunConfig};
use crate::edge::{segment, Cell, CorePort, EgressEdge, IngressEdge, IqEdge, OqEdge, ReassemblyTable};
use crate::error::SimError;
use crate::fabric::Fabric;
use crate::metrics::{Collector, MetricsReport, Peaks};
use crate::mesh::CreditTarget;
use crate::workload::{Emission, Message, TrafficConfig, Workload};
use rng::{RngStream, StreamId, StreamKind};

/// Elapsed cycles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct SimClock {
    cycle: u64,
}

impl SimClock {
    pub fn now(self) -> u64 {
        self.cycle
    }

    pub fn tick(&mut self) {
        self.cycle += 1;
    }
}

/// Messages injected and reassembled, for exactly-once checks.
#[derive(Debug, Clone, Default)]
pub struct MessageLog {
    pub injected: Vec<Message>,
    pub delivered: Vec<Message>,
}

#[derive(Debug)]
pub struct Simulation {
    run: RunConfig,
    clock: SimClock,
    workload: Workload,
    cores: Vec<CorePort>,
    ingress: Vec<IngressEdge>,
    egress: Vec<EgressEdge>,
    reassembly: Vec<ReassemblyTable>,
    fabric: Fabric,
    collector: Collector,
    messages: HashMap<u64, Message>,
    next_msg: u64,
    in_flight: u64,
    cells_injected: u64,
    cells_delivered: u64,
    last_movement: u64,
    log: Option<MessageLog>,
    scratch_cells: Vec<Cell>,
    scratch_emissions: Vec<Emission>,
    scratch_credits: Vec<(u32, u8)>,
}

impl Simulation {
    pub fn new(run: &RunConfig, traffic: &TrafficConfig) -> Result<Self, SimError> {
        run.validate()?;
        traffic.validate(run)?;
        let k = run.concentration;
        let depth = run.buffer_depth.limit();
        let ingress = (0..run.ports)
            .map(|p| match run.edge_mode {
                EdgeMode::OutputQueued => IngressEdge::Oq(OqEdge::new(RngStream::new(
                    run.seed,
                    StreamId::new(StreamKind::EdgeShuffle, p as u32),
                ))),
                EdgeMode::InputQueued => IngressEdge::Iq(IqEdge::new(k, depth, depth)),
            })
            .collect();
        Ok(Simulation {
            run: run.clone(),
            clock: SimClock::default(),
            workload: Workload::new(run, traffic),
            cores: (0..run.cores).map(|_| CorePort::new(depth)).collect(),
            ingress,
            egress: (0..run.ports)
                .map(|p| EgressEdge::new(p, k, run.component_latency as u64))
                .collect(),
            reassembly: (0..run.cores as u32).map(ReassemblyTable::new).collect(),
            fabric: Fabric::new(run),
            collector: Collector::new(run.ports, run.warmup_cycles, run.measure_cycles),
            messages: HashMap::new(),
            next_msg: 0,
            in_flight: 0,
            cells_injected: 0,
            cells_delivered: 0,
            last_movement: 0,
            log: None,
            scratch_cells: Vec::new(),
            scratch_emissions: Vec::new(),
            scratch_credits: Vec::new(),
        })
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn config(&self) -> &RunConfig {
        &self.run
    }

    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    pub fn workload_mut(&mut self) -> &mut Workload {
        &mut self.workload
    }

    pub fn fabric(&self) -> &Fabric {
        &self.fabric
    }

    /// Record every injected and reassembled message from now on.
    pub fn enable_message_log(&mut self) {
        self.log.get_or_insert_with(MessageLog::default);
    }

    pub fn message_log(&self) -> Option<&MessageLog> {
        self.log.as_ref()
    }

    /// Cells created but not yet delivered.
    pub fn in_flight(&self) -> u64 {
        self.in_flight
    }

    pub fn cells_injected(&self) -> u64 {
        self.cells_injected
    }

    pub fn cells_delivered(&self) -> u64 {
        self.cells_delivered
    }

    /// Inject a message created now, bypassing the workload. Returns its id.
    pub fn inject_message(&mut self, src_core: u32, dst_core: u32, class: crate::workload::MessageClass) -> u64 {
        self.create_message(
            Emission {
                src_core,
                dst_core,
                class,
                txn: None,
            },
            self.clock.now(),
        )
    }

    fn create_message(&mut self, e: Emission, now: u64) -> u64 {
        let id = self.next_msg;
        self.next_msg += 1;
        let size = if e.class.is_control() {
            self.run.control_bytes
        } else {
            self.run.data_bytes
        };
        let msg = Message {
            id,
            src_core: e.src_core,
            dst_core: e.dst_core,
            class: e.class,
            size_bytes: size,
            vnet: e.class.vnet(self.run.vnets),
            created_at: now,
            txn: e.txn,
        };
        let src_port = self.run.port_of_core(e.src_core);
        let cells = segment(&msg, self.run.link_width, src_port as u32, self.run.port_of_core(e.dst_core) as u32);
        let c = self.run.component_latency as u64;
        let n = cells.len() as u64;
        let core = &mut self.cores[e.src_core as usize];
        for mut cell in cells {
            cell.transit.ready_at = now + c + cell.seq as u64;
            core.push(cell);
        }
        self.in_flight += n;
        self.cells_injected += n;
        self.collector.cells_created(src_port, n, now);
        if let Some(log) = self.log.as_mut() {
            log.injected.push(msg.clone());
        }
        self.messages.insert(id, msg);
        id
    }

    /// Advance one cycle.
    pub fn step(&mut self) -> Result<(), SimError> {
        let now = self.clock.now();
        let stalled = self.run.stall_at_cycle.is_some_and(|s| now >= s);
        let mut moved = false;

        // 1: deliveries
        let mut cells = std::mem::take(&mut self.scratch_cells);
        cells.clear();
        for e in &mut self.egress {
            e.due(now, &mut cells);
        }
        for cell in cells.drain(..) {
            moved = true;
            self.deliver(cell, now)?;
        }

        // 2: credits
        let mut credits = std::mem::take(&mut self.scratch_credits);
        credits.clear();
        self.fabric.land_credits(now, &mut credits)?;
        for &(port, vnet) in &credits {
            match &mut self.ingress[port as usize] {
                IngressEdge::Iq(e) => e.fabric_credit_return(vnet)?,
                IngressEdge::Oq(_) => return Err(SimError::Credit("fabric credit returned to an OQ edge".into())),
            }
        }
        let k = self.run.concentration;
        for (port, edge) in self.ingress.iter_mut().enumerate() {
            if let IngressEdge::Iq(e) = edge {
                credits.clear();
                e.due_core_returns(now, &mut credits);
                for &(local, vnet) in &credits {
                    self.cores[port * k + local as usize].credit_return(vnet)?;
                }
            }
        }
        self.scratch_credits = credits;

        if !stalled {
            // 3: edges into the fabric
            let mut launches = 0;
            for port in 0..self.ingress.len() {
                if let Some(cell) = self.ingress[port].concentrate(now) {
                    launches += 1;
                    self.collector.fabric_arrival(port, &cell, now);
                    self.fabric.inject(port, cell, now)?;
                }
            }

            // 4: fabric, then cores
            launches += self.fabric.cycle(now, &mut cells)?;
            let link = self.run.link_cycles();
            for cell in cells.drain(..) {
                let port = cell.dst_port as usize;
                self.collector.fabric_departure(port, now);
                self.egress[port].eject(cell, now + link)?;
            }
            self.collector.links_busy(launches, now);
            moved |= launches > 0;

            let c = self.run.component_latency as u64;
            for core in 0..self.cores.len() {
                if let Some(mut cell) = self.cores[core].select(now) {
                    moved = true;
                    cell.transit.ready_at = now + c;
                    self.ingress[core / k].accept(core % k, cell)?;
                }
            }
        }
        self.scratch_cells = cells;

        // 5: new traffic
        let mut emissions = std::mem::take(&mut self.scratch_emissions);
        self.workload.generate(now, &mut emissions);
        for e in emissions.drain(..) {
            self.create_message(e, now);
        }
        self.scratch_emissions = emissions;

        // 6: audits
        let interval = self.run.credit_audit_interval;
        if interval > 0 && now % interval == 0 {
            self.audit()?;
        }
        if moved || self.in_flight == 0 {
            self.last_movement = now;
        } else if now - self.last_movement >= self.run.watchdog_cycles {
            return Err(SimError::Deadlock {
                cycle: now,
                idle: now - self.last_movement,
                in_flight: self.in_flight,
                component: self.stalled_component(),
            });
        }
        self.clock.tick();
        Ok(())
    }

    fn deliver(&mut self, cell: Cell, now: u64) -> Result<(), SimError> {
        self.in_flight -= 1;
        self.cells_delivered += 1;
        let src_port = cell.src_port as usize;
        let dst_port = cell.dst_port as usize;
        if self.run.port_of_core(cell.dst_core) != dst_port || self.run.port_of_core(cell.src_core) != src_port {
            return Err(SimError::Routing(format!("cell header ports disagree with cores for message {}", cell.msg_id)));
        }
        if self.fabric.mesh().is_some() {
            let expected = self.run.routers_on_path(src_port, dst_port);
            if cell.transit.routers as usize != expected {
                return Err(SimError::Routing(format!(
                    "cell of message {} visited {} routers, dimension-ordered path has {expected}",
                    cell.msg_id, cell.transit.routers
                )));
            }
        }
        // every cycle of the trip is either fixed pipeline latency or queueing
        let t = &cell.transit;
        let queued = t.q_source as u64 + t.q_edge as u64 + t.q_fabric as u64;
        let floor = self.run.path_floor(src_port, dst_port);
        let expected = cell.created_at + cell.seq as u64 + floor + queued;
        if now != expected {
            return Err(SimError::Timestamp(format!(
                "cell {}:{} delivered at {now}, expected {expected} (floor {floor}, queued {queued})",
                cell.msg_id, cell.seq
            )));
        }
        self.collector.cell_delivered(&cell, now);
        let Some(done) = self.reassembly[cell.dst_core as usize].accept(&cell, now)? else {
            return Ok(());
        };
        let msg = self
            .messages
            .remove(&done.msg_id)
            .ok_or_else(|| SimError::Invariant(format!("reassembled unknown message {}", done.msg_id)))?;
        let end_delay = now - msg.created_at;
        self.collector.message_delivered(msg.class, end_delay, done.reassembly_delay, now);
        if let Some(c) = self.workload.on_delivery(&msg, now)? {
            self.collector.transaction_completed(c.latency, c.noc_delay, now);
        }
        if let Some(log) = self.log.as_mut() {
            log.delivered.push(msg);
        }
        Ok(())
    }

    fn stalled_component(&self) -> String {
        let mut best: Option<(u64, String)> = self.fabric.oldest();
        let mut consider = |at: u64, name: String| {
            if best.as_ref().is_none_or(|b| at < b.0) {
                best = Some((at, name));
            }
        };
        for (port, e) in self.ingress.iter().enumerate() {
            if let Some(at) = e.oldest() {
                consider(at, format!("ingress edge {port}"));
            }
        }
        for (core, c) in self.cores.iter().enumerate() {
            if let Some(at) = c.oldest_created() {
                consider(at, format!("core {core} injection queue"));
            }
        }
        for (port, e) in self.egress.iter().enumerate() {
            if let Some(at) = e.oldest() {
                consider(at, format!("egress edge {port}"));
            }
        }
        best.map(|b| b.1).unwrap_or_else(|| "unknown".into())
    }

    /// Check credit conservation on every credited channel and that the
    /// in-flight count matches the cells actually held.
    pub fn audit(&self) -> Result<(), SimError> {
        let held = self.cores.iter().map(CorePort::len).sum::<usize>()
            + self.ingress.iter().map(IngressEdge::len).sum::<usize>()
            + self.fabric.len()
            + self.egress.iter().map(EgressEdge::len).sum::<usize>();
        if held as u64 != self.in_flight {
            return Err(SimError::Invariant(format!(
                "{} cells in flight but {held} held by components",
                self.in_flight
            )));
        }
        let Some(depth) = self.run.buffer_depth.limit() else {
            return Ok(());
        };
        let k = self.run.concentration;
        let vnets = self.run.vnets;
        for (port, edge) in self.ingress.iter().enumerate() {
            let IngressEdge::Iq(e) = edge else { continue };
            for local in 0..k {
                for vnet in 0..vnets {
                    let credits = self.cores[port * k + local].credits(vnet).unwrap_or(0) as usize;
                    let total = credits + e.fifo_len(local, vnet) + e.pending_core_returns(local, vnet);
                    if total != depth {
                        return Err(SimError::Credit(format!(
                            "core {} vnet {vnet}: credits, edge occupancy and returns sum to {total}, depth {depth}",
                            port * k + local
                        )));
                    }
                }
            }
        }
        if let Some(mesh) = self.fabric.mesh() {
            let flying = mesh.returns_in_flight();
            mesh.audit_credits(&flying)?;
            for (port, edge) in self.ingress.iter().enumerate() {
                let IngressEdge::Iq(e) = edge else { continue };
                for vnet in 0..vnets {
                    let back = flying
                        .get(&CreditTarget::Edge {
                            port: port as u32,
                            vnet,
                        })
                        .copied()
                        .unwrap_or(0);
                    let total = e.fabric_credits(vnet).unwrap_or(0) as usize + mesh.local_occupancy(port, vnet) + back;
                    if total != depth {
                        return Err(SimError::Credit(format!(
                            "edge {port} vnet {vnet}: credits, router occupancy and returns sum to {total}, depth {depth}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Run the warmup and measurement windows, then drain if configured.
    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        let end = self.run.warmup_cycles + self.run.measure_cycles;
        while self.clock.now() < end {
            self.step()?;
        }
        if self.run.drain {
            self.drain()?;
        }
        self.audit()
    }

    /// Stop new traffic and run until every cell and transaction is done.
    pub fn drain(&mut self) -> Result<(), SimError> {
        self.workload.stop_injection();
        while self.in_flight > 0 || !self.workload.is_idle() {
            self.step()?;
        }
        Ok(())
    }

    pub fn report(&self) -> MetricsReport {
        let peaks = Peaks {
            edge: self.ingress.iter().map(IngressEdge::peak).max().unwrap_or(0),
            fabric: self.fabric.peak(),
        };
        self.collector.report(self.fabric.link_count(), peaks)
    }
}

/// Simulate one configuration and return its measurements.
pub fn run(config: &RunConfig, traffic: &TrafficConfig) -> Result<MetricsReport, SimError> {
    let mut sim = Simulation::new(config, traffic)?;
    sim.run_to_end()?;
    Ok(sim.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::FabricKind;

    #[test]
    fn clock_ticks_by_one() {
        let mut c = SimClock::default();
        c.tick();
        c.tick();
        assert_eq!(c.now(), 2);
    }

    #[test]
    fn idle_system_only_advances_the_clock() {
        let run = RunConfig {
            warmup_cycles: 10,
            measure_cycles: 100,
            ..RunConfig::default()
        };
        let report = super::run(&run, &TrafficConfig::idle()).unwrap();
        assert_eq!(report.util_mean, 0.0);
        assert_eq!(report.qdelay_edge_mean, 0.0);
        assert_eq!(report.qdelay_switch_mean, 0.0);
        assert_eq!(report.cells_delivered, 0);
    }

    #[test]
    fn one_message_on_an_oq_switch() {
        // 72B over 16B links: five cells, the last one created four cycles
        // behind the first; floor 4c + 2L = 6
        let run = RunConfig {
            link_width: 16,
            warmup_cycles: 0,
            measure_cycles: 100,
            ..RunConfig::default()
        };
        let mut sim = Simulation::new(&run, &TrafficConfig::idle()).unwrap();
        sim.enable_message_log();
        sim.inject_message(0, 63, crate::workload::MessageClass::Response);
        let mut done_at = None;
        for _ in 0..40 {
            sim.step().unwrap();
            if done_at.is_none() && !sim.message_log().unwrap().delivered.is_empty() {
                done_at = Some(sim.now());
            }
        }
        // delivered during cycle 4 + 6 = 10
        assert_eq!(done_at, Some(11));
        assert_eq!(sim.report().end_delay_mean, 10.0);
    }

    #[test]
    fn stalled_fabric_trips_the_watchdog() {
        let run = RunConfig {
            fabric: FabricKind::IqFifo,
            watchdog_cycles: 50,
            stall_at_cycle: Some(0),
            warmup_cycles: 0,
            measure_cycles: 1_000,
            ..RunConfig::default()
        };
        let mut sim = Simulation::new(&run, &TrafficConfig::idle()).unwrap();
        sim.inject_message(3, 40, crate::workload::MessageClass::Request);
        let err = sim.run_to_end().unwrap_err();
        match err {
            SimError::Deadlock { in_flight, component, .. } => {
                assert_eq!(in_flight, 1);
                assert_eq!(component, "core 3 injection queue");
            }
            other => panic!("unexpected {other}"),
        }
    }
}
