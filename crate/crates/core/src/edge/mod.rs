//! Edges between cores and the fabric: segmentation into cells, the ingress
//! multiplexor (output- or input-queued), the contention-free ejection
//! demultiplexor, and reassembly at the destination core.

mod reassembly;

use std::collections::VecDeque;

use rand::seq::SliceRandom;

use crate::arbiter::rr_arbiter;
use crate::error::SimError;
use crate::kernel::rng::RngStream;
use crate::workload::{Message, MessageClass};

pub use reassembly::{Reassembled, ReassemblyTable};

/// Per-hop bookkeeping carried by a cell; not part of its header.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Transit {
    /// Cycle from which the cell may leave the component holding it.
    pub ready_at: u64,
    pub q_source: u32,
    pub q_edge: u32,
    pub q_fabric: u32,
    /// Mesh routers entered so far.
    pub routers: u16,
    /// Output chosen by route computation at the current router.
    pub route: u8,
}

/// Fixed-size switching unit. Every cell carries the full header so it can be
/// routed on its own and reassembled at the destination core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub msg_id: u64,
    pub seq: u16,
    pub total: u16,
    pub src_core: u32,
    pub dst_core: u32,
    pub src_port: u32,
    pub dst_port: u32,
    pub vnet: u8,
    pub class: MessageClass,
    pub size_bytes: u32,
    pub created_at: u64,
    pub transit: Transit,
}

impl Cell {
    /// Waiting time accumulated since the cell became ready, stamped on departure.
    fn wait(&self, now: u64) -> u32 {
        (now - self.transit.ready_at) as u32
    }
}

/// Split a message into `ceil(size / link_width)` cells numbered from 0.
pub fn segment(msg: &Message, link_width: u32, src_port: u32, dst_port: u32) -> Vec<Cell> {
    assert!(link_width > 0, "link width must be positive");
    let total = msg.size_bytes.div_ceil(link_width).max(1);
    (0..total)
        .map(|seq| {
            let offset = seq * link_width;
            Cell {
                msg_id: msg.id,
                seq: seq as u16,
                total: total as u16,
                src_core: msg.src_core,
                dst_core: msg.dst_core,
                src_port,
                dst_port,
                vnet: msg.vnet,
                class: msg.class,
                size_bytes: link_width.min(msg.size_bytes.saturating_sub(offset)).max(1),
                created_at: msg.created_at,
                transit: Transit::default(),
            }
        })
        .collect()
}

/// A core's injection port: per-vnet outboxes drained one cell per cycle.
#[derive(Debug, Clone)]
pub struct CorePort {
    outbox: [VecDeque<Cell>; 2],
    /// Free slots in this core's edge FIFOs, when the edge is credited.
    credits: Option<[u32; 2]>,
    depth: u32,
}

impl CorePort {
    pub fn new(edge_depth: Option<usize>) -> Self {
        CorePort {
            outbox: [VecDeque::new(), VecDeque::new()],
            credits: edge_depth.map(|d| [d as u32; 2]),
            depth: edge_depth.unwrap_or(0) as u32,
        }
    }

    pub fn push(&mut self, cell: Cell) {
        self.outbox[cell.vnet as usize].push_back(cell);
    }

    pub fn len(&self) -> usize {
        self.outbox[0].len() + self.outbox[1].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn credits(&self, vnet: u8) -> Option<u32> {
        self.credits.map(|c| c[vnet as usize])
    }

    /// Pick the next cell to launch: control before data, only with credit.
    pub fn select(&mut self, now: u64) -> Option<Cell> {
        for vnet in 0..2 {
            let Some(head) = self.outbox[vnet].front() else {
                continue;
            };
            if head.transit.ready_at > now {
                continue;
            }
            if let Some(credits) = self.credits.as_mut() {
                if credits[vnet] == 0 {
                    continue;
                }
                credits[vnet] -= 1;
            }
            let mut cell = self.outbox[vnet].pop_front().expect("head exists");
            cell.transit.q_source += cell.wait(now);
            return Some(cell);
        }
        None
    }

    pub fn credit_return(&mut self, vnet: u8) -> Result<(), SimError> {
        let Some(credits) = self.credits.as_mut() else {
            return Err(SimError::Credit("credit returned to an uncredited core".into()));
        };
        let c = &mut credits[vnet as usize];
        *c += 1;
        if *c > self.depth {
            return Err(SimError::Credit(format!("core credit {} exceeds edge depth {}", c, self.depth)));
        }
        Ok(())
    }

    pub fn oldest_ready(&self) -> Option<u64> {
        self.outbox.iter().filter_map(|q| q.front()).map(|c| c.transit.ready_at).min()
    }

    pub fn oldest_created(&self) -> Option<u64> {
        self.outbox.iter().filter_map(|q| q.front()).map(|c| c.created_at).min()
    }
}

/// Ingress multiplexor with one queue per vnet. Cells that become ready in the
/// same cycle are written in a uniformly random order.
#[derive(Debug, Clone)]
pub struct OqEdge {
    staging: VecDeque<Cell>,
    queues: [VecDeque<Cell>; 2],
    batch: Vec<Cell>,
    rng: RngStream,
    peak: usize,
}

impl OqEdge {
    pub fn new(rng: RngStream) -> Self {
        OqEdge {
            staging: VecDeque::new(),
            queues: [VecDeque::new(), VecDeque::new()],
            batch: Vec::new(),
            rng,
            peak: 0,
        }
    }

    pub fn accept(&mut self, cell: Cell) {
        self.staging.push_back(cell);
    }

    /// Admit this cycle's ready cells, then forward one cell (control first).
    pub fn concentrate(&mut self, now: u64) -> Option<Cell> {
        while self.staging.front().is_some_and(|c| c.transit.ready_at <= now) {
            self.batch.push(self.staging.pop_front().expect("front exists"));
        }
        if !self.batch.is_empty() {
            self.batch.shuffle(&mut self.rng);
            for cell in self.batch.drain(..) {
                self.queues[cell.vnet as usize].push_back(cell);
            }
            self.peak = self.peak.max(self.queued());
        }
        for q in &mut self.queues {
            if let Some(mut cell) = q.pop_front() {
                cell.transit.q_edge += cell.wait(now);
                return Some(cell);
            }
        }
        None
    }

    fn queued(&self) -> usize {
        self.queues[0].len() + self.queues[1].len()
    }

    pub fn len(&self) -> usize {
        self.staging.len() + self.queued()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ingress multiplexor with one FIFO per (core, vnet), served round-robin with
/// strict control-over-data priority.
#[derive(Debug, Clone)]
pub struct IqEdge {
    fifos: Vec<[VecDeque<Cell>; 2]>,
    pointers: [usize; 2],
    depth: Option<usize>,
    fabric_credits: Option<[u32; 2]>,
    fabric_depth: u32,
    core_returns: VecDeque<(u64, u32, u8)>,
    peak: usize,
}

impl IqEdge {
    /// `depth` bounds each per-core FIFO; `fabric_depth` is the credit pool
    /// toward the fabric input buffer, if credited.
    pub fn new(cores: usize, depth: Option<usize>, fabric_depth: Option<usize>) -> Self {
        IqEdge {
            fifos: (0..cores).map(|_| [VecDeque::new(), VecDeque::new()]).collect(),
            pointers: [0; 2],
            depth,
            fabric_credits: fabric_depth.map(|d| [d as u32; 2]),
            fabric_depth: fabric_depth.unwrap_or(0) as u32,
            core_returns: VecDeque::new(),
            peak: 0,
        }
    }

    pub fn accept(&mut self, local_core: usize, cell: Cell) -> Result<(), SimError> {
        let fifo = &mut self.fifos[local_core][cell.vnet as usize];
        fifo.push_back(cell);
        if let Some(depth) = self.depth {
            if fifo.len() > depth {
                return Err(SimError::Credit(format!(
                    "edge FIFO of local core {local_core} holds {} cells, depth {depth}",
                    fifo.len()
                )));
            }
        }
        self.peak = self.peak.max(self.fifos[local_core][0].len() + self.fifos[local_core][1].len());
        Ok(())
    }

    pub fn pointer(&self, vnet: u8) -> usize {
        self.pointers[vnet as usize]
    }

    /// Round-robin over the per-core FIFOs, control before data, at most one
    /// cell per cycle and only with fabric credit.
    pub fn concentrate(&mut self, now: u64) -> Option<Cell> {
        let k = self.fifos.len();
        for vnet in 0..2 {
            if self.fabric_credits.is_some_and(|c| c[vnet] == 0) {
                continue;
            }
            let mut requests = 0u64;
            for (i, fifo) in self.fifos.iter().enumerate() {
                if fifo[vnet].front().is_some_and(|c| c.transit.ready_at <= now) {
                    requests |= 1 << i;
                }
            }
            let Some((winner, next)) = rr_arbiter(requests, k, self.pointers[vnet]) else {
                continue;
            };
            self.pointers[vnet] = next;
            let mut cell = self.fifos[winner][vnet].pop_front().expect("requesting FIFO is nonempty");
            cell.transit.q_edge += cell.wait(now);
            if let Some(credits) = self.fabric_credits.as_mut() {
                credits[vnet] -= 1;
            }
            if self.depth.is_some() {
                self.core_returns.push_back((now + 1, winner as u32, vnet as u8));
            }
            return Some(cell);
        }
        None
    }

    pub fn fabric_credit_return(&mut self, vnet: u8) -> Result<(), SimError> {
        let Some(credits) = self.fabric_credits.as_mut() else {
            return Err(SimError::Credit("fabric credit returned to an uncredited edge".into()));
        };
        let c = &mut credits[vnet as usize];
        *c += 1;
        if *c > self.fabric_depth {
            return Err(SimError::Credit(format!("edge credit {} exceeds fabric depth {}", c, self.fabric_depth)));
        }
        Ok(())
    }

    pub fn fabric_credits(&self, vnet: u8) -> Option<u32> {
        self.fabric_credits.map(|c| c[vnet as usize])
    }

    /// Credits owed to cores that are due by `now`: `(local core, vnet)`.
    pub fn due_core_returns(&mut self, now: u64, out: &mut Vec<(u32, u8)>) {
        while self.core_returns.front().is_some_and(|r| r.0 <= now) {
            let (_, core, vnet) = self.core_returns.pop_front().expect("front exists");
            out.push((core, vnet));
        }
    }

    pub fn fifo_len(&self, local_core: usize, vnet: u8) -> usize {
        self.fifos[local_core][vnet as usize].len()
    }

    pub fn pending_core_returns(&self, local_core: usize, vnet: u8) -> usize {
        self.core_returns.iter().filter(|r| r.1 as usize == local_core && r.2 == vnet).count()
    }

    pub fn len(&self) -> usize {
        self.fifos.iter().map(|f| f[0].len() + f[1].len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ingress side of an edge.
#[derive(Debug, Clone)]
pub enum IngressEdge {
    Oq(OqEdge),
    Iq(IqEdge),
}

impl IngressEdge {
    pub fn accept(&mut self, local_core: usize, cell: Cell) -> Result<(), SimError> {
        match self {
            IngressEdge::Oq(e) => {
                e.accept(cell);
                Ok(())
            }
            IngressEdge::Iq(e) => e.accept(local_core, cell),
        }
    }

    pub fn concentrate(&mut self, now: u64) -> Option<Cell> {
        match self {
            IngressEdge::Oq(e) => e.concentrate(now),
            IngressEdge::Iq(e) => e.concentrate(now),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            IngressEdge::Oq(e) => e.len(),
            IngressEdge::Iq(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn peak(&self) -> usize {
        match self {
            IngressEdge::Oq(e) => e.peak,
            IngressEdge::Iq(e) => e.peak,
        }
    }

    /// Creation cycle of the oldest cell held.
    pub fn oldest(&self) -> Option<u64> {
        match self {
            IngressEdge::Oq(e) => e.staging.iter().chain(e.queues.iter().flatten()).map(|c| c.created_at).min(),
            IngressEdge::Iq(e) => e.fifos.iter().flatten().flatten().map(|c| c.created_at).min(),
        }
    }
}

/// Ejection demultiplexor: delivers every arriving cell to its core after
/// the edge latency, without queueing.
#[derive(Debug, Clone)]
pub struct EgressEdge {
    port: usize,
    concentration: usize,
    latency: u64,
    deliveries: VecDeque<(u64, Cell)>,
}

impl EgressEdge {
    pub fn new(port: usize, concentration: usize, latency: u64) -> Self {
        EgressEdge {
            port,
            concentration,
            latency,
            deliveries: VecDeque::new(),
        }
    }

    /// Take a cell that arrived from the fabric at `arrived_at`.
    pub fn eject(&mut self, cell: Cell, arrived_at: u64) -> Result<u64, SimError> {
        if cell.dst_port as usize != self.port || cell.dst_core as usize / self.concentration != self.port {
            return Err(SimError::Routing(format!(
                "cell {}:{} for core {} (port {}) arrived at edge {}",
                cell.msg_id, cell.seq, cell.dst_core, cell.dst_port, self.port
            )));
        }
        let at = arrived_at + self.latency;
        if self.deliveries.back().is_some_and(|(t, _)| *t > at) {
            return Err(SimError::Timestamp(format!("out-of-order ejection at edge {}", self.port)));
        }
        self.deliveries.push_back((at, cell));
        Ok(at)
    }

    /// Cells whose delivery time has come.
    pub fn due(&mut self, now: u64, out: &mut Vec<Cell>) {
        while self.deliveries.front().is_some_and(|(t, _)| *t <= now) {
            out.push(self.deliveries.pop_front().expect("front exists").1);
        }
    }

    pub fn len(&self) -> usize {
        self.deliveries.len()
    }

    pub fn oldest(&self) -> Option<u64> {
        self.deliveries.iter().map(|(_, c)| c.created_at).min()
    }

    pub fn is_empty(&self) -> bool {
        self.deliveries.is_empty()
    }
}
