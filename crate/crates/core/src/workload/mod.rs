//! Traffic sources: open-loop synthetic loads and the closed-loop
//! memory-transaction workload.

mod transaction;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::config::RunConfig;
use crate::error::{ConfigError, SimError};
use crate::kernel::rng::{RngStream, StreamId, StreamKind};

pub use transaction::{transaction_advance, MessageSpec, Transaction, TxnPattern, TxnPhase};

/// Protocol role of a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageClass {
    Request,
    Forward,
    Response,
}

impl MessageClass {
    /// Requests and forwards are control messages; responses carry a block.
    pub fn is_control(self) -> bool {
        !matches!(self, MessageClass::Response)
    }

    /// Virtual network of the class: control on 0, data on 1 when split.
    pub fn vnet(self, vnets: u8) -> u8 {
        if vnets >= 2 && !self.is_control() {
            1
        } else {
            0
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Message {
    pub id: u64,
    pub src_core: u32,
    pub dst_core: u32,
    pub class: MessageClass,
    pub size_bytes: u32,
    pub vnet: u8,
    pub created_at: u64,
    pub txn: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficMode {
    /// Every port emits a single-cell message with probability `load` per cycle.
    BernoulliCells,
    /// Bernoulli message arrivals; each message becomes a back-to-back cell train.
    MessageOpenLoop,
    /// Cores issue memory transactions and block on outstanding ones.
    ClosedLoop,
}

impl std::str::FromStr for TrafficMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bernoulli_cells" | "bernoullicells" => Ok(TrafficMode::BernoulliCells),
            "message_open_loop" | "messageopenloop" => Ok(TrafficMode::MessageOpenLoop),
            "closed_loop" | "closedloop" => Ok(TrafficMode::ClosedLoop),
            _ => Err(ConfigError::field(
                "mode",
                format!("unknown traffic mode `{s}` (expected bernoulli_cells, message_open_loop or closed_loop)"),
            )),
        }
    }
}

impl std::fmt::Display for TrafficMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrafficMode::BernoulliCells => "bernoulli_cells",
            TrafficMode::MessageOpenLoop => "message_open_loop",
            TrafficMode::ClosedLoop => "closed_loop",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    pub mode: TrafficMode,
    /// Open-loop target, cells per cycle per fabric port.
    pub load: f64,
    /// Fraction of open-loop messages that are control messages.
    pub control_fraction: f64,
    pub three_hop_fraction: f64,
    pub mshr_per_core: u32,
    /// Mean of the geometric think time; `f64::INFINITY` never issues.
    pub think_time_mean: f64,
    /// Home interleaving granularity in address units.
    pub address_interleave: u64,
    /// Owner service time before a forwarded request is answered.
    pub l1_latency: u64,
    /// Home service time before a request is answered or forwarded.
    pub l2_latency: u64,
    pub mem_latency: u64,
    /// Fraction of home accesses that also pay `mem_latency`.
    pub mem_fraction: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            mode: TrafficMode::ClosedLoop,
            load: 0.1,
            control_fraction: 0.5,
            three_hop_fraction: 0.3,
            mshr_per_core: 1,
            think_time_mean: 150.0,
            address_interleave: 1,
            l1_latency: 3,
            l2_latency: 12,
            mem_latency: 100,
            mem_fraction: 0.1,
        }
    }
}

impl TrafficConfig {
    pub fn bernoulli(load: f64) -> Self {
        TrafficConfig {
            mode: TrafficMode::BernoulliCells,
            load,
            ..TrafficConfig::default()
        }
    }

    pub fn messages(load: f64, control_fraction: f64) -> Self {
        TrafficConfig {
            mode: TrafficMode::MessageOpenLoop,
            load,
            control_fraction,
            ..TrafficConfig::default()
        }
    }

    /// An open-loop source that never emits; used for hand-driven runs.
    pub fn idle() -> Self {
        TrafficConfig::bernoulli(0.0)
    }

    /// Expected cells per open-loop message.
    pub fn mean_cells_per_message(&self, run: &RunConfig) -> f64 {
        let ctrl = run.cells_per_message(run.control_bytes) as f64;
        let data = run.cells_per_message(run.data_bytes) as f64;
        self.control_fraction * ctrl + (1.0 - self.control_fraction) * data
    }

    pub fn validate(&self, run: &RunConfig) -> Result<(), ConfigError> {
        let unit = |field: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::field(field, format!("{v} is outside [0, 1]")))
            }
        };
        unit("load", self.load)?;
        unit("control_fraction", self.control_fraction)?;
        unit("three_hop_fraction", self.three_hop_fraction)?;
        unit("mem_fraction", self.mem_fraction)?;
        if self.mshr_per_core == 0 {
            return Err(ConfigError::field("mshr_per_core", "must be at least 1"));
        }
        if self.think_time_mean.is_nan() || self.think_time_mean < 0.0 {
            return Err(ConfigError::field("think_time_mean", "must be a non-negative number"));
        }
        if self.address_interleave == 0 {
            return Err(ConfigError::field("address_interleave", "must be at least 1"));
        }
        if self.mode == TrafficMode::MessageOpenLoop && self.load / self.mean_cells_per_message(run) > 1.0 {
            return Err(ConfigError::field("load", "message arrival rate would exceed one per cycle"));
        }
        Ok(())
    }
}

/// Home core of an address: modulo interleaving at `granularity`.
pub fn home_node(address: u64, cores: u32, granularity: u64) -> u32 {
    assert!(cores >= 1, "home_node needs at least one core");
    ((address / granularity.max(1)) % cores as u64) as u32
}

/// Ports that emit a cell this cycle: each independently with probability `load`.
pub fn gen_bernoulli(load: f64, rngs: &mut [RngStream], out: &mut Vec<usize>) {
    out.clear();
    for (port, rng) in rngs.iter_mut().enumerate() {
        if load > 0.0 && rng.random_bool(load.min(1.0)) {
            out.push(port);
        }
    }
}

/// Per-core state of the closed-loop workload.
#[derive(Debug, Clone)]
pub struct CoreState {
    pub id: u32,
    pub outstanding: u32,
    pub think_remaining: u64,
    think_rng: RngStream,
    txn_rng: RngStream,
}

impl CoreState {
    pub fn new(id: u32, seed: u64, traffic: &TrafficConfig) -> Self {
        let mut core = CoreState {
            id,
            outstanding: 0,
            think_remaining: 0,
            think_rng: RngStream::new(seed, StreamId::new(StreamKind::CoreThink, id)),
            txn_rng: RngStream::new(seed, StreamId::new(StreamKind::CoreTransaction, id)),
        };
        core.think_remaining = core.draw_think(traffic.think_time_mean).unwrap_or(u64::MAX);
        core
    }

    fn draw_think(&mut self, mean: f64) -> Option<u64> {
        if !mean.is_finite() {
            return None;
        }
        if mean <= 0.0 {
            return Some(0);
        }
        let geo = Geometric::new(1.0 / (mean + 1.0)).expect("valid geometric parameter");
        Some(geo.sample(&mut self.think_rng))
    }
}

/// A transaction a core decided to start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NewTransaction {
    pub pattern: TxnPattern,
    pub home_core: u32,
    pub owner_core: Option<u32>,
}

/// Advance one core by a cycle; returns the transaction it issues, if any.
///
/// The think countdown only runs while the core has a free MSHR.
pub fn core_tick(core: &mut CoreState, traffic: &TrafficConfig, cores: u32) -> Option<NewTransaction> {
    if core.outstanding >= traffic.mshr_per_core {
        return None;
    }
    if core.think_remaining > 0 {
        if core.think_remaining != u64::MAX {
            core.think_remaining -= 1;
        }
        return None;
    }
    core.think_remaining = core.draw_think(traffic.think_time_mean).unwrap_or(u64::MAX);
    core.outstanding += 1;

    let address: u64 = core.txn_rng.random();
    let home_core = home_node(address, cores, traffic.address_interleave);
    let three_hop = traffic.three_hop_fraction > 0.0 && core.txn_rng.random_bool(traffic.three_hop_fraction);
    if !three_hop {
        return Some(NewTransaction {
            pattern: TxnPattern::TwoHop,
            home_core,
            owner_core: None,
        });
    }
    let owner = match cores {
        1 => 0,
        2 => 1 - home_core,
        _ => loop {
            let candidate = core.txn_rng.random_range(0..cores);
            if candidate != home_core && candidate != core.id {
                break candidate;
            }
        },
    };
    Some(NewTransaction {
        pattern: TxnPattern::ThreeHop,
        home_core,
        owner_core: Some(owner),
    })
}

/// A message the workload wants injected at the current cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Emission {
    pub src_core: u32,
    pub dst_core: u32,
    pub class: MessageClass,
    pub txn: Option<u64>,
}

/// One completed transaction, for the optional trace export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxnRecord {
    pub id: u64,
    pub pattern: TxnPattern,
    pub src: u32,
    pub home: u32,
    pub owner: Option<u32>,
    pub issued_at: u64,
    pub completed_at: u64,
}

/// A completed transaction reported back to the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Completion {
    pub latency: u64,
    pub noc_delay: u64,
}

/// Workload engine advanced by the kernel once per cycle.
#[derive(Debug)]
pub struct Workload {
    traffic: TrafficConfig,
    cores: u32,
    concentration: usize,
    ports: usize,
    mean_cells: f64,
    port_rngs: Vec<RngStream>,
    core_states: Vec<CoreState>,
    service_rng: RngStream,
    transactions: HashMap<u64, Transaction>,
    pending: BinaryHeap<Reverse<(u64, u64, PendingEmission)>>,
    pending_seq: u64,
    next_txn: u64,
    injecting: bool,
    trace: Option<Vec<TxnRecord>>,
    scratch_ports: Vec<usize>,
    issued: u64,
    completed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct PendingEmission {
    src_core: u32,
    dst_core: u32,
    class: MessageClass,
    txn: u64,
}

impl Workload {
    pub fn new(run: &RunConfig, traffic: &TrafficConfig) -> Self {
        let cores = run.cores as u32;
        let port_rngs = (0..run.ports as u32)
            .map(|p| RngStream::new(run.seed, StreamId::new(StreamKind::OpenLoopPort, p)))
            .collect();
        let core_states = if traffic.mode == TrafficMode::ClosedLoop {
            (0..cores).map(|c| CoreState::new(c, run.seed, traffic)).collect()
        } else {
            Vec::new()
        };
        Workload {
            traffic: traffic.clone(),
            cores,
            concentration: run.concentration,
            ports: run.ports,
            mean_cells: traffic.mean_cells_per_message(run),
            port_rngs,
            core_states,
            service_rng: RngStream::new(run.seed, StreamId::new(StreamKind::Service, 0)),
            transactions: HashMap::new(),
            pending: BinaryHeap::new(),
            pending_seq: 0,
            next_txn: 0,
            injecting: true,
            trace: None,
            scratch_ports: Vec::new(),
            issued: 0,
            completed: 0,
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[TxnRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Stop creating new traffic; in-progress transactions still finish.
    pub fn stop_injection(&mut self) {
        self.injecting = false;
    }

    /// No transaction outstanding and no service pending.
    pub fn is_idle(&self) -> bool {
        self.transactions.is_empty() && self.pending.is_empty()
    }

    pub fn outstanding_transactions(&self) -> usize {
        self.transactions.len()
    }

    pub fn issued(&self) -> u64 {
        self.issued
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    /// Messages to create this cycle: due service replies, then new traffic.
    pub fn generate(&mut self, now: u64, out: &mut Vec<Emission>) {
        out.clear();
        while let Some(Reverse((due, _, e))) = self.pending.peek() {
            if *due > now {
                break;
            }
            let e = *e;
            self.pending.pop();
            out.push(Emission {
                src_core: e.src_core,
                dst_core: e.dst_core,
                class: e.class,
                txn: Some(e.txn),
            });
        }
        if !self.injecting {
            return;
        }
        match self.traffic.mode {
            TrafficMode::BernoulliCells => {
                let mut ports = std::mem::take(&mut self.scratch_ports);
                gen_bernoulli(self.traffic.load, &mut self.port_rngs, &mut ports);
                for &port in &ports {
                    let rng = &mut self.port_rngs[port];
                    let src = (port * self.concentration) as u32 + rng.random_range(0..self.concentration as u32);
                    let dst = rng.random_range(0..self.cores);
                    out.push(Emission {
                        src_core: src,
                        dst_core: dst,
                        class: MessageClass::Request,
                        txn: None,
                    });
                }
                self.scratch_ports = ports;
            }
            TrafficMode::MessageOpenLoop => {
                let rate = (self.traffic.load / self.mean_cells).min(1.0);
                for port in 0..self.ports {
                    let rng = &mut self.port_rngs[port];
                    if rate <= 0.0 || !rng.random_bool(rate) {
                        continue;
                    }
                    let src = (port * self.concentration) as u32 + rng.random_range(0..self.concentration as u32);
                    let dst = rng.random_range(0..self.cores);
                    let control = self.traffic.control_fraction > 0.0 && rng.random_bool(self.traffic.control_fraction);
                    out.push(Emission {
                        src_core: src,
                        dst_core: dst,
                        class: if control { MessageClass::Request } else { MessageClass::Response },
                        txn: None,
                    });
                }
            }
            TrafficMode::ClosedLoop => {
                for c in 0..self.core_states.len() {
                    let Some(new) = core_tick(&mut self.core_states[c], &self.traffic, self.cores) else {
                        continue;
                    };
                    let id = self.next_txn;
                    self.next_txn += 1;
                    self.issued += 1;
                    let tx = Transaction::new(id, c as u32, new, now);
                    out.push(Emission {
                        src_core: c as u32,
                        dst_core: new.home_core,
                        class: MessageClass::Request,
                        txn: Some(id),
                    });
                    self.transactions.insert(id, tx);
                }
            }
        }
    }

    /// React to a reassembled message. Returns the completion if it finished
    /// a transaction.
    pub fn on_delivery(&mut self, msg: &Message, now: u64) -> Result<Option<Completion>, SimError> {
        let Some(txn_id) = msg.txn else {
            return Ok(None);
        };
        let tx = self
            .transactions
            .get_mut(&txn_id)
            .ok_or_else(|| SimError::Protocol(format!("message {} names unknown transaction {txn_id}", msg.id)))?;
        tx.noc_delay += now - msg.created_at;
        let next = transaction_advance(tx, msg, now)?;
        for spec in next {
            let service = match msg.class {
                MessageClass::Request => {
                    let miss = self.traffic.mem_fraction > 0.0 && self.service_rng.random_bool(self.traffic.mem_fraction);
                    self.traffic.l2_latency + if miss { self.traffic.mem_latency } else { 0 }
                }
                _ => self.traffic.l1_latency,
            };
            self.pending_seq += 1;
            self.pending.push(Reverse((
                now + service,
                self.pending_seq,
                PendingEmission {
                    src_core: spec.src_core,
                    dst_core: spec.dst_core,
                    class: spec.class,
                    txn: txn_id,
                },
            )));
        }
        if tx.phase != TxnPhase::Complete {
            return Ok(None);
        }
        let tx = self.transactions.remove(&txn_id).expect("present");
        let completed_at = tx.completed_at.expect("complete transactions are stamped");
        let core = &mut self.core_states[tx.core as usize];
        core.outstanding = core
            .outstanding
            .checked_sub(1)
            .ok_or_else(|| SimError::Protocol(format!("core {} completed more transactions than it issued", tx.core)))?;
        self.completed += 1;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TxnRecord {
                id: tx.id,
                pattern: tx.pattern,
                src: tx.core,
                home: tx.home_core,
                owner: tx.owner_core,
                issued_at: tx.issued_at,
                completed_at,
            });
        }
        Ok(Some(Completion {
            latency: completed_at - tx.issued_at,
            noc_delay: tx.noc_delay,
        }))
    }
}

/// Transaction trace as CSV: `id,pattern,src,home,owner,issue,complete`.
pub fn transaction_trace_csv(records: &[TxnRecord]) -> String {
    let mut s = String::from("id,pattern,src,home,owner,issue,complete\n");
    for r in records {
        let pattern = match r.pattern {
            TxnPattern::TwoHop => "two_hop",
            TxnPattern::ThreeHop => "three_hop",
        };
        let owner = r.owner.map(|o| o.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.id, pattern, r.src, r.home, owner, r.issued_at, r.completed_at
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vnet_mapping_is_total() {
        assert_eq!(MessageClass::Request.vnet(2), 0);
        assert_eq!(MessageClass::Forward.vnet(2), 0);
        assert_eq!(MessageClass::Response.vnet(2), 1);
        for class in [MessageClass::Request, MessageClass::Forward, MessageClass::Response] {
            assert_eq!(class.vnet(1), 0);
        }
    }

    #[test]
    fn home_node_single_core() {
        for addr in [0, 1, 17, u64::MAX] {
            assert_eq!(home_node(addr, 1, 1), 0);
        }
    }

    #[test]
    fn home_node_interleaves_evenly() {
        let n = 12u32;
        let mut counts = vec![0; n as usize];
        for id in 0..n as u64 {
            counts[home_node(id, n, 1) as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c == 1));

        let mut counts = vec![0; n as usize];
        for addr in 0..(n as u64 * 64 * 5) {
            counts[home_node(addr, n, 64) as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c == 64 * 5));
    }

    #[test]
    fn home_node_uniform_over_random_addresses() {
        // chi-square style: every bin within 2% of the expected count
        let cores = 16u32;
        let draws = 100_000;
        let mut rng = RngStream::new(7, StreamId::new(StreamKind::CoreTransaction, 0));
        let mut counts = vec![0u32; cores as usize];
        for _ in 0..draws {
            counts[home_node(rng.random(), cores, 1) as usize] += 1;
        }
        let expected = draws as f64 / cores as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 15 degrees of freedom; 99.9th percentile is 37.7
        assert!(chi2 < 37.7, "chi2 = {chi2}");
        for &c in &counts {
            assert!((c as f64 - expected).abs() / expected < 0.02 * 2.5, "{counts:?}");
        }
    }

    #[test]
    fn bernoulli_extremes() {
        let mut rngs: Vec<_> = (0..4).map(|p| RngStream::new(1, StreamId::new(StreamKind::OpenLoopPort, p))).collect();
        let mut out = Vec::new();
        for _ in 0..1000 {
            gen_bernoulli(0.0, &mut rngs, &mut out);
            assert!(out.is_empty());
            gen_bernoulli(1.0, &mut rngs, &mut out);
            assert_eq!(out, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn bernoulli_rate_matches_load() {
        let mut rngs: Vec<_> = (0..4).map(|p| RngStream::new(3, StreamId::new(StreamKind::OpenLoopPort, p))).collect();
        let mut counts = [0u64; 4];
        let mut out = Vec::new();
        let cycles = 1_000_000;
        for _ in 0..cycles {
            gen_bernoulli(0.5, &mut rngs, &mut out);
            for &p in &out {
                counts[p] += 1;
            }
        }
        for c in counts {
            let rate = c as f64 / cycles as f64;
            assert!((rate - 0.5).abs() < 0.01, "rate {rate}");
        }
    }

    fn closed(mshr: u32, think: f64) -> TrafficConfig {
        TrafficConfig {
            mshr_per_core: mshr,
            think_time_mean: think,
            ..TrafficConfig::default()
        }
    }

    #[test]
    fn blocked_core_never_issues() {
        let traffic = closed(1, 0.0);
        let mut core = CoreState::new(0, 1, &traffic);
        core.outstanding = 1;
        for _ in 0..1000 {
            assert!(core_tick(&mut core, &traffic, 8).is_none());
        }
    }

    #[test]
    fn infinite_think_time_never_issues() {
        let traffic = closed(4, f64::INFINITY);
        let mut core = CoreState::new(0, 1, &traffic);
        for _ in 0..10_000 {
            assert!(core_tick(&mut core, &traffic, 8).is_none());
        }
    }

    #[test]
    fn zero_think_time_issues_until_mshrs_full() {
        let traffic = closed(3, 0.0);
        let mut core = CoreState::new(2, 1, &traffic);
        let issued: Vec<_> = (0..10).filter_map(|_| core_tick(&mut core, &traffic, 8)).collect();
        assert_eq!(issued.len(), 3);
        assert_eq!(core.outstanding, 3);
    }

    #[test]
    fn think_time_mean_is_respected() {
        let traffic = closed(1, 20.0);
        let mut core = CoreState::new(0, 9, &traffic);
        let mut total = 0u64;
        let n = 50_000;
        for _ in 0..n {
            total += core.draw_think(traffic.think_time_mean).unwrap();
        }
        let mean = total as f64 / n as f64;
        assert!((mean - 20.0).abs() < 0.5, "mean {mean}");
    }

    #[test]
    fn three_hop_owner_is_a_third_party() {
        let traffic = TrafficConfig {
            three_hop_fraction: 1.0,
            think_time_mean: 0.0,
            mshr_per_core: u32::MAX,
            ..TrafficConfig::default()
        };
        let mut core = CoreState::new(5, 11, &traffic);
        for _ in 0..500 {
            let t = core_tick(&mut core, &traffic, 16).unwrap();
            assert_eq!(t.pattern, TxnPattern::ThreeHop);
            let owner = t.owner_core.unwrap();
            assert_ne!(owner, t.home_core);
            assert_ne!(owner, 5);
        }
    }

    #[test]
    fn trace_csv_has_fixed_header() {
        let csv = transaction_trace_csv(&[TxnRecord {
            id: 3,
            pattern: TxnPattern::ThreeHop,
            src: 1,
            home: 2,
            owner: Some(4),
            issued_at: 10,
            completed_at: 90,
        }]);
        assert_eq!(csv, "id,pattern,src,home,owner,issue,complete\n3,three_hop,1,2,4,10,90\n");
    }
}
