//! Single-stage switch models: ideal output-queued, input-queued with one FIFO
//! per input, and virtual output queues under a round-robin matcher.
//!
//! Queues are unbounded. A cell is eligible once the cycle reaches its
//! `transit.ready_at`; schedulers only see cells eligible at the start of the
//! cycle.

mod sched;

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::arbiter::rr_arbiter;
use crate::config::FabricKind;
use crate::edge::{Cell, Transit};
use crate::kernel::rng::{RngStream, StreamId, StreamKind};
use crate::workload::MessageClass;

pub use sched::{islip_schedule, rrm_schedule, Matcher, PointerRule};

/// A cell leaving the switch on `output`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Departure {
    pub output: usize,
    pub cell: Cell,
}

fn depart(output: usize, mut cell: Cell, now: u64, out: &mut Vec<Departure>) {
    cell.transit.q_fabric += (now - cell.transit.ready_at) as u32;
    out.push(Departure { output, cell });
}

/// One FIFO per output. Cells that become eligible in the same cycle are
/// written in a uniformly random order; every nonempty output sends one cell.
#[derive(Debug, Clone)]
pub struct OqSwitch {
    staging: VecDeque<Cell>,
    batch: Vec<Cell>,
    outputs: Vec<VecDeque<Cell>>,
    rng: RngStream,
    peak: usize,
}

impl OqSwitch {
    pub fn new(n: usize, rng: RngStream) -> Self {
        OqSwitch {
            staging: VecDeque::new(),
            batch: Vec::new(),
            outputs: (0..n).map(|_| VecDeque::new()).collect(),
            rng,
            peak: 0,
        }
    }

    /// Cells must be accepted in non-decreasing `ready_at` order.
    pub fn accept(&mut self, cell: Cell) {
        debug_assert!(self.staging.back().is_none_or(|c| c.transit.ready_at <= cell.transit.ready_at));
        self.staging.push_back(cell);
    }

    pub fn cycle(&mut self, now: u64, out: &mut Vec<Departure>) {
        while self.staging.front().is_some_and(|c| c.transit.ready_at <= now) {
            self.batch.push(self.staging.pop_front().expect("front exists"));
        }
        if !self.batch.is_empty() {
            self.batch.shuffle(&mut self.rng);
            for cell in self.batch.drain(..) {
                let q = &mut self.outputs[cell.dst_port as usize];
                q.push_back(cell);
                self.peak = self.peak.max(q.len());
            }
        }
        for (j, q) in self.outputs.iter_mut().enumerate() {
            if let Some(cell) = q.pop_front() {
                depart(j, cell, now, out);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.staging.len() + self.outputs.iter().map(VecDeque::len).sum::<usize>()
    }

    pub fn queue_len(&self, output: usize) -> usize {
        self.outputs[output].len()
    }
}

/// One FIFO per input; each output grants round-robin among inputs whose
/// eligible head targets it. Cells behind a losing head wait.
#[derive(Debug, Clone)]
pub struct IqFifoSwitch {
    inputs: Vec<VecDeque<Cell>>,
    pointers: Vec<usize>,
    columns: Vec<u64>,
    peak: usize,
}

impl IqFifoSwitch {
    pub fn new(n: usize) -> Self {
        assert!(n <= 64, "at most 64 ports");
        IqFifoSwitch {
            inputs: (0..n).map(|_| VecDeque::new()).collect(),
            pointers: vec![0; n],
            columns: vec![0; n],
            peak: 0,
        }
    }

    pub fn accept(&mut self, input: usize, cell: Cell) {
        let q = &mut self.inputs[input];
        q.push_back(cell);
        self.peak = self.peak.max(q.len());
    }

    pub fn cycle(&mut self, now: u64, out: &mut Vec<Departure>) {
        let n = self.inputs.len();
        self.columns.fill(0);
        for (i, q) in self.inputs.iter().enumerate() {
            if let Some(head) = q.front().filter(|c| c.transit.ready_at <= now) {
                self.columns[head.dst_port as usize] |= 1 << i;
            }
        }
        for j in 0..n {
            if let Some((i, next)) = rr_arbiter(self.columns[j], n, self.pointers[j]) {
                self.pointers[j] = next;
                let cell = self.inputs[i].pop_front().expect("requesting input has a head");
                depart(j, cell, now, out);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.iter().map(VecDeque::len).sum()
    }

    pub fn pointer(&self, output: usize) -> usize {
        self.pointers[output]
    }
}

/// N x N virtual output queues scheduled by a [`Matcher`].
#[derive(Debug, Clone)]
pub struct VoqSwitch {
    n: usize,
    voqs: Vec<VecDeque<Cell>>,
    per_input: Vec<usize>,
    matcher: Matcher,
    requests: Vec<u64>,
    matching: Vec<(usize, usize)>,
    peak: usize,
}

impl VoqSwitch {
    pub fn new(n: usize, rule: PointerRule, iterations: u32) -> Self {
        assert!(n <= 64, "at most 64 ports");
        VoqSwitch {
            n,
            voqs: (0..n * n).map(|_| VecDeque::new()).collect(),
            per_input: vec![0; n],
            matcher: Matcher::new(n, rule, iterations),
            requests: vec![0; n],
            matching: Vec::with_capacity(n),
            peak: 0,
        }
    }

    pub fn accept(&mut self, input: usize, cell: Cell) {
        self.voqs[input * self.n + cell.dst_port as usize].push_back(cell);
        self.per_input[input] += 1;
        self.peak = self.peak.max(self.per_input[input]);
    }

    pub fn cycle(&mut self, now: u64, out: &mut Vec<Departure>) {
        let n = self.n;
        for i in 0..n {
            let mut row = 0u64;
            if self.per_input[i] > 0 {
                for j in 0..n {
                    if self.voqs[i * n + j].front().is_some_and(|c| c.transit.ready_at <= now) {
                        row |= 1 << j;
                    }
                }
            }
            self.requests[i] = row;
        }
        self.matcher.schedule(&self.requests, &mut self.matching);
        for &(i, j) in &self.matching {
            let cell = self.voqs[i * n + j].pop_front().expect("matched VOQ is nonempty");
            self.per_input[i] -= 1;
            depart(j, cell, now, out);
        }
    }

    pub fn len(&self) -> usize {
        self.per_input.iter().sum()
    }

    pub fn matcher(&self) -> &Matcher {
        &self.matcher
    }
}

/// Any single-stage switch.
#[derive(Debug, Clone)]
pub enum Switch {
    Oq(OqSwitch),
    IqFifo(IqFifoSwitch),
    Voq(VoqSwitch),
}

impl Switch {
    /// Panics on [`FabricKind::Mesh`].
    pub fn new(kind: FabricKind, n: usize, seed: u64) -> Self {
        match kind {
            FabricKind::Oq => Switch::Oq(OqSwitch::new(n, RngStream::new(seed, StreamId::new(StreamKind::SwitchShuffle, 0)))),
            FabricKind::IqFifo => Switch::IqFifo(IqFifoSwitch::new(n)),
            FabricKind::VoqRrm => Switch::Voq(VoqSwitch::new(n, PointerRule::Rrm, 1)),
            FabricKind::VoqIslip(k) => Switch::Voq(VoqSwitch::new(n, PointerRule::Islip, k)),
            FabricKind::Mesh => panic!("a mesh is not a single-stage switch"),
        }
    }

    pub fn accept(&mut self, input: usize, cell: Cell) {
        match self {
            Switch::Oq(s) => s.accept(cell),
            Switch::IqFifo(s) => s.accept(input, cell),
            Switch::Voq(s) => s.accept(input, cell),
        }
    }

    pub fn cycle(&mut self, now: u64, out: &mut Vec<Departure>) {
        match self {
            Switch::Oq(s) => s.cycle(now, out),
            Switch::IqFifo(s) => s.cycle(now, out),
            Switch::Voq(s) => s.cycle(now, out),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Switch::Oq(s) => s.len(),
            Switch::IqFifo(s) => s.len(),
            Switch::Voq(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Creation cycle and input of the oldest cell held.
    pub fn oldest(&self) -> Option<(u64, u32)> {
        let key = |c: &Cell| (c.created_at, c.src_port);
        match self {
            Switch::Oq(s) => s.staging.iter().chain(s.outputs.iter().flatten()).map(key).min(),
            Switch::IqFifo(s) => s.inputs.iter().flatten().map(key).min(),
            Switch::Voq(s) => s.voqs.iter().flatten().map(key).min(),
        }
    }

    /// Largest queue seen: per output for OQ, per input otherwise.
    pub fn peak(&self) -> usize {
        match self {
            Switch::Oq(s) => s.peak,
            Switch::IqFifo(s) => s.peak,
            Switch::Voq(s) => s.peak,
        }
    }
}

/// Throughput of a switch offered one uniformly addressed cell per input
/// per cycle.
///
/// An input holding `backlog` cells refuses arrivals, which keeps queues
/// bounded for switches that cannot keep up. Returns departures per port
/// per cycle over the last `cycles` of `warmup + cycles` cycles.
pub fn saturated_throughput(kind: FabricKind, n: usize, warmup: u64, cycles: u64, backlog: usize, seed: u64) -> f64 {
    let mut switch = Switch::new(kind, n, seed);
    let mut rng = RngStream::new(seed, StreamId::new(StreamKind::OpenLoopPort, 0));
    let mut held = vec![0usize; n];
    let mut out = Vec::with_capacity(n);
    let mut counted = 0u64;
    let mut id = 0u64;
    for now in 0..warmup + cycles {
        for (input, h) in held.iter_mut().enumerate() {
            if *h < backlog {
                let dst: u32 = rng.random_range(0..n as u32);
                switch.accept(input, bare_cell(id, input as u32, dst, now));
                id += 1;
                *h += 1;
            }
        }
        out.clear();
        switch.cycle(now, &mut out);
        for d in &out {
            held[d.cell.src_port as usize] -= 1;
        }
        if now >= warmup {
            counted += out.len() as u64;
        }
    }
    counted as f64 / (n as u64 * cycles) as f64
}

/// A single-cell message from input `src` to output `dst`, eligible at `ready`.
pub fn bare_cell(msg_id: u64, src: u32, dst: u32, ready: u64) -> Cell {
    Cell {
        msg_id,
        seq: 0,
        total: 1,
        src_core: src,
        dst_core: dst,
        src_port: src,
        dst_port: dst,
        vnet: 0,
        class: MessageClass::Request,
        size_bytes: 8,
        created_at: ready,
        transit: Transit {
            ready_at: ready,
            ..Transit::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oq(n: usize) -> OqSwitch {
        OqSwitch::new(n, RngStream::new(3, StreamId::new(StreamKind::SwitchShuffle, 0)))
    }

    #[test]
    fn oq_fan_in_drains_one_per_cycle() {
        let n = 8;
        let mut s = oq(n);
        for i in 0..n {
            s.accept(bare_cell(i as u64, i as u32, 0, 0));
        }
        let mut waits = Vec::new();
        for now in 0..n as u64 {
            let mut out = Vec::new();
            s.cycle(now, &mut out);
            assert_eq!(out.len(), 1);
            waits.push(out[0].cell.transit.q_fabric);
        }
        assert_eq!(waits, (0..n as u32).collect::<Vec<_>>());
        assert_eq!(s.len(), 0);
    }

    #[test]
    fn oq_is_work_conserving_and_fifo() {
        let mut s = oq(2);
        for t in 0..4 {
            s.accept(bare_cell(t, 0, 1, t));
        }
        let mut ids = Vec::new();
        for now in 0..4 {
            let mut out = Vec::new();
            s.cycle(now, &mut out);
            ids.extend(out.iter().map(|d| d.cell.msg_id));
        }
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn empty_switches_send_nothing() {
        for kind in [FabricKind::Oq, FabricKind::IqFifo, FabricKind::VoqRrm, FabricKind::VoqIslip(2)] {
            let mut s = Switch::new(kind, 4, 1);
            let mut out = Vec::new();
            s.cycle(0, &mut out);
            assert!(out.is_empty());
        }
    }

    #[test]
    fn iq_fifo_head_blocks_the_queue() {
        let mut s = IqFifoSwitch::new(2);
        s.accept(0, bare_cell(0, 0, 0, 0));
        s.accept(1, bare_cell(1, 1, 0, 0));
        // input 1's second cell targets an idle output but sits behind its head
        s.accept(1, bare_cell(2, 1, 1, 0));
        let mut out = Vec::new();
        s.cycle(0, &mut out);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].cell.msg_id, 0);
        assert_eq!(s.inputs[1].len(), 2);
        out.clear();
        s.cycle(1, &mut out);
        assert_eq!(out.iter().map(|d| d.cell.msg_id).collect::<Vec<_>>(), vec![1]);
        out.clear();
        s.cycle(2, &mut out);
        assert_eq!(out[0].cell.msg_id, 2);
        assert_eq!(out[0].cell.transit.q_fabric, 2);
    }

    #[test]
    fn iq_fifo_ignores_cells_not_yet_eligible() {
        let mut s = IqFifoSwitch::new(2);
        s.accept(0, bare_cell(0, 0, 1, 5));
        let mut out = Vec::new();
        s.cycle(4, &mut out);
        assert!(out.is_empty());
        s.cycle(5, &mut out);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn single_active_voq_matches_oq_delays() {
        // one input sending a burst: every model serializes it identically
        let arrivals = [0u64, 0, 0, 1, 5, 5, 6];
        let mut delays = Vec::new();
        for kind in [FabricKind::Oq, FabricKind::VoqRrm, FabricKind::VoqIslip(1), FabricKind::VoqIslip(4)] {
            let mut s = Switch::new(kind, 4, 1);
            for (k, &t) in arrivals.iter().enumerate() {
                s.accept(2, bare_cell(k as u64, 2, 3, t));
            }
            let mut got = Vec::new();
            for now in 0..20 {
                let mut out = Vec::new();
                s.cycle(now, &mut out);
                got.extend(out.iter().map(|d| d.cell.transit.q_fabric));
            }
            delays.push(got);
        }
        assert_eq!(delays[0], vec![0, 1, 2, 2, 0, 1, 1]);
        assert!(delays.iter().all(|d| d == &delays[0]));
    }

    #[test]
    fn voq_departures_form_partial_permutations() {
        let mut s = VoqSwitch::new(4, PointerRule::Islip, 2);
        let mut rng = RngStream::new(5, StreamId::new(StreamKind::OpenLoopPort, 0));
        let mut id = 0;
        for now in 0..2_000 {
            for i in 0..4 {
                if rng.random_bool(0.7) {
                    s.accept(i, bare_cell(id, i as u32, rng.random_range(0..4), now));
                    id += 1;
                }
            }
            let mut out = Vec::new();
            s.cycle(now, &mut out);
            let mut ins = 0u64;
            let mut outs = 0u64;
            for d in &out {
                assert_eq!(ins & (1 << d.cell.src_port), 0);
                assert_eq!(outs & (1 << d.output), 0);
                ins |= 1 << d.cell.src_port;
                outs |= 1 << d.output;
            }
        }
    }

    #[test]
    fn hol_two_port_saturation_is_three_quarters() {
        let t = saturated_throughput(FabricKind::IqFifo, 2, 1_000, 200_000, 4, 11);
        assert!((t - 0.75).abs() < 0.01, "throughput {t}");
    }

    #[test]
    fn islip_beats_fifo_under_saturation() {
        let fifo = saturated_throughput(FabricKind::IqFifo, 8, 1_000, 20_000, 64, 2);
        let islip = saturated_throughput(FabricKind::VoqIslip(1), 8, 20_000, 20_000, 1 << 20, 2);
        assert!(islip > 0.95 && fifo < 0.7, "islip {islip}, fifo {fifo}");
    }
}
