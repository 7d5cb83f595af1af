//! The switching fabric between ingress and egress edges.

use crate::config::{FabricKind, RunConfig};
use crate::edge::Cell;
use crate::error::SimError;
use crate::mesh::Mesh;
use crate::switch::{Departure, Switch};

/// A single-stage switch with one link from every ingress edge and one link
/// to every egress edge.
#[derive(Debug, Clone)]
pub struct SingleStage {
    switch: Switch,
    ports: usize,
    entry_delay: u64,
    departures: Vec<Departure>,
}

impl SingleStage {
    pub fn new(run: &RunConfig) -> Self {
        SingleStage {
            switch: Switch::new(run.fabric, run.ports, run.seed),
            ports: run.ports,
            entry_delay: run.link_cycles() + run.component_latency as u64,
            departures: Vec::with_capacity(run.ports),
        }
    }

    pub fn switch(&self) -> &Switch {
        &self.switch
    }
}

#[derive(Debug, Clone)]
pub enum Fabric {
    Single(SingleStage),
    Mesh(Mesh),
}

impl Fabric {
    pub fn new(run: &RunConfig) -> Self {
        match run.fabric {
            FabricKind::Mesh => Fabric::Mesh(Mesh::new(run)),
            _ => Fabric::Single(SingleStage::new(run)),
        }
    }

    /// Take a cell the ingress edge of `port` launched at `now`.
    pub fn inject(&mut self, port: usize, mut cell: Cell, now: u64) -> Result<(), SimError> {
        match self {
            Fabric::Single(s) => {
                cell.transit.ready_at = now + s.entry_delay;
                s.switch.accept(port, cell);
                Ok(())
            }
            Fabric::Mesh(m) => m.inject(port, cell, now),
        }
    }

    /// Credit returns due by `now`; those owed to ingress edges are pushed
    /// as `(port, vnet)`.
    pub fn land_credits(&mut self, now: u64, edges: &mut Vec<(u32, u8)>) -> Result<(), SimError> {
        match self {
            Fabric::Single(_) => Ok(()),
            Fabric::Mesh(m) => m.land_credits(now, edges),
        }
    }

    /// Advance one cycle. Cells leaving toward egress edges are appended to
    /// `ejected`. Returns link launches, ejections included.
    pub fn cycle(&mut self, now: u64, ejected: &mut Vec<Cell>) -> Result<usize, SimError> {
        match self {
            Fabric::Single(s) => {
                s.departures.clear();
                s.switch.cycle(now, &mut s.departures);
                let n = s.departures.len();
                for d in s.departures.drain(..) {
                    debug_assert_eq!(d.output, d.cell.dst_port as usize);
                    ejected.push(d.cell);
                }
                Ok(n)
            }
            Fabric::Mesh(m) => m.cycle(now, ejected),
        }
    }

    pub fn link_count(&self) -> usize {
        match self {
            Fabric::Single(s) => 2 * s.ports,
            Fabric::Mesh(m) => m.link_count(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Fabric::Single(s) => s.switch.len(),
            Fabric::Mesh(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn peak(&self) -> usize {
        match self {
            Fabric::Single(s) => s.switch.peak(),
            Fabric::Mesh(m) => m.peak(),
        }
    }

    /// Creation cycle of the oldest cell inside and where it sits.
    pub fn oldest(&self) -> Option<(u64, String)> {
        match self {
            Fabric::Single(s) => s
                .switch
                .oldest()
                .map(|(at, input)| (at, format!("switch input {input}"))),
            Fabric::Mesh(m) => m.oldest(),
        }
    }

    pub fn mesh(&self) -> Option<&Mesh> {
        match self {
            Fabric::Mesh(m) => Some(m),
            Fabric::Single(_) => None,
        }
    }
}
