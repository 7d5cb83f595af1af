//! Measurement-window statistics and the CSV export.

use crate::edge::Cell;
use crate::workload::MessageClass;

/// Histogram over non-negative integer samples, one bucket per value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Histogram {
    counts: Vec<u64>,
    total: u64,
    sum: u128,
    max: u64,
}

impl Histogram {
    pub fn record(&mut self, value: u64) {
        let i = value as usize;
        if i >= self.counts.len() {
            self.counts.resize(i + 1, 0);
        }
        self.counts[i] += 1;
        self.total += 1;
        self.sum += value as u128;
        self.max = self.max.max(value);
    }

    pub fn count(&self) -> u64 {
        self.total
    }

    pub fn sum(&self) -> u128 {
        self.sum
    }

    pub fn max(&self) -> u64 {
        self.max
    }

    /// Mean of the samples; 0 when empty.
    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.sum as f64 / self.total as f64
        }
    }

    /// Smallest value with at least `q` of the mass at or below it.
    pub fn quantile(&self, q: f64) -> u64 {
        if self.total == 0 {
            return 0;
        }
        let target = ((q * self.total as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (v, &c) in self.counts.iter().enumerate() {
            seen += c;
            if seen >= target {
                return v as u64;
            }
        }
        self.max
    }

    /// Number of samples equal to `value`.
    pub fn at(&self, value: u64) -> u64 {
        self.counts.get(value as usize).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &Histogram) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.sum += other.sum;
        self.max = self.max.max(other.max);
    }
}

/// Runs of back-to-back cells from one fabric input to one output, the size
/// of each output's consecutive-cycle departure bursts, and how many cells
/// reach the same output in the same cycle.
#[derive(Debug, Clone)]
struct SpikeTracker {
    /// Per input: (last cycle, output, run length).
    runs: Vec<Option<(u64, u32, u64)>>,
    /// Per output: (last cycle, burst length).
    bursts: Vec<Option<(u64, u64)>>,
    batch_cycle: u64,
    batch: Vec<u32>,
    run_hist: Histogram,
    burst_hist: Histogram,
    batch_hist: Histogram,
}

impl SpikeTracker {
    fn new(ports: usize) -> Self {
        SpikeTracker {
            runs: vec![None; ports],
            bursts: vec![None; ports],
            batch_cycle: 0,
            batch: vec![0; ports],
            run_hist: Histogram::default(),
            burst_hist: Histogram::default(),
            batch_hist: Histogram::default(),
        }
    }

    fn arrival(&mut self, input: usize, output: u32, now: u64) {
        match &mut self.runs[input] {
            Some((last, out, len)) if *out == output && *last + 1 == now => {
                *last = now;
                *len += 1;
            }
            slot => {
                if let Some((_, _, len)) = slot.take() {
                    self.run_hist.record(len);
                }
                *slot = Some((now, output, 1));
            }
        }
        if now != self.batch_cycle {
            self.flush_batch();
            self.batch_cycle = now;
        }
        self.batch[output as usize] += 1;
    }

    fn departure(&mut self, output: usize, now: u64) {
        match &mut self.bursts[output] {
            Some((last, len)) if *last + 1 == now => {
                *last = now;
                *len += 1;
            }
            slot => {
                if let Some((_, len)) = slot.take() {
                    self.burst_hist.record(len);
                }
                *slot = Some((now, 1));
            }
        }
    }

    fn flush_batch(&mut self) {
        for b in &mut self.batch {
            if *b > 0 {
                self.batch_hist.record(*b as u64);
                *b = 0;
            }
        }
    }

    /// Close every open run.
    fn finish(&mut self) -> (Histogram, Histogram, Histogram) {
        let mut runs = self.run_hist.clone();
        for (_, _, len) in self.runs.iter().flatten() {
            runs.record(*len);
        }
        let mut bursts = self.burst_hist.clone();
        for (_, len) in self.bursts.iter().flatten() {
            bursts.record(*len);
        }
        let mut batches = self.batch_hist.clone();
        for &b in &self.batch {
            if b > 0 {
                batches.record(b as u64);
            }
        }
        (runs, bursts, batches)
    }
}

/// Event sink fed by the kernel; everything outside the window is ignored.
#[derive(Debug, Clone)]
pub struct Collector {
    start: u64,
    end: u64,
    ports: usize,
    injected: Vec<u64>,
    delivered_cells: u64,
    link_busy: u64,
    q_source: Histogram,
    q_edge: Histogram,
    q_fabric: Histogram,
    q_edge_vnet: [Histogram; 2],
    q_fabric_vnet: [Histogram; 2],
    routers: Histogram,
    end_delay: Histogram,
    end_delay_class: [Histogram; 3],
    reassembly: Histogram,
    spikes: SpikeTracker,
    txn_latency: Histogram,
    txn_noc: Histogram,
}

impl Collector {
    pub fn new(ports: usize, warmup: u64, measure: u64) -> Self {
        Collector {
            start: warmup,
            end: warmup + measure,
            ports,
            injected: vec![0; ports],
            delivered_cells: 0,
            link_busy: 0,
            q_source: Histogram::default(),
            q_edge: Histogram::default(),
            q_fabric: Histogram::default(),
            q_edge_vnet: Default::default(),
            q_fabric_vnet: Default::default(),
            routers: Histogram::default(),
            end_delay: Histogram::default(),
            end_delay_class: Default::default(),
            reassembly: Histogram::default(),
            spikes: SpikeTracker::new(ports),
            txn_latency: Histogram::default(),
            txn_noc: Histogram::default(),
        }
    }

    pub fn in_window(&self, now: u64) -> bool {
        now >= self.start && now < self.end
    }

    pub fn cells_created(&mut self, port: usize, cells: u64, now: u64) {
        if self.in_window(now) {
            self.injected[port] += cells;
        }
    }

    pub fn links_busy(&mut self, launches: usize, now: u64) {
        if self.in_window(now) {
            self.link_busy += launches as u64;
        }
    }

    /// A cell entering the fabric from the ingress edge of `port`.
    pub fn fabric_arrival(&mut self, port: usize, cell: &Cell, now: u64) {
        if self.in_window(now) {
            self.spikes.arrival(port, cell.dst_port, now);
        }
    }

    /// A cell leaving the fabric toward the egress edge of `port`.
    pub fn fabric_departure(&mut self, port: usize, now: u64) {
        if self.in_window(now) {
            self.spikes.departure(port, now);
        }
    }

    pub fn cell_delivered(&mut self, cell: &Cell, now: u64) {
        if !self.in_window(now) {
            return;
        }
        let t = &cell.transit;
        self.delivered_cells += 1;
        self.q_source.record(t.q_source as u64);
        self.q_edge.record(t.q_edge as u64);
        self.q_fabric.record(t.q_fabric as u64);
        self.q_edge_vnet[cell.vnet as usize].record(t.q_edge as u64);
        self.q_fabric_vnet[cell.vnet as usize].record(t.q_fabric as u64);
        self.routers.record(t.routers as u64);
    }

    pub fn message_delivered(&mut self, class: MessageClass, end_delay: u64, reassembly_delay: u64, now: u64) {
        if !self.in_window(now) {
            return;
        }
        self.end_delay.record(end_delay);
        self.end_delay_class[class.index()].record(end_delay);
        self.reassembly.record(reassembly_delay);
    }

    pub fn transaction_completed(&mut self, latency: u64, noc_delay: u64, now: u64) {
        if self.in_window(now) {
            self.txn_latency.record(latency);
            self.txn_noc.record(noc_delay);
        }
    }

    pub fn report(&self, links: usize, peaks: Peaks) -> MetricsReport {
        let cycles = self.end - self.start;
        let load_per_port: Vec<f64> = self.injected.iter().map(|&c| c as f64 / cycles as f64).collect();
        let n = self.ports as f64;
        let mean = load_per_port.iter().sum::<f64>() / n;
        let var = load_per_port.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        let (runs, bursts, batches) = self.spikes.clone().finish();
        let mut control = self.end_delay_class[MessageClass::Request.index()].clone();
        control.merge(&self.end_delay_class[MessageClass::Forward.index()]);
        MetricsReport {
            measure_cycles: cycles,
            ports: self.ports,
            links,
            link_busy: self.link_busy,
            util_mean: self.link_busy as f64 / (links as f64 * cycles as f64),
            load_port_mean: mean,
            load_port_min: load_per_port.iter().copied().fold(f64::INFINITY, f64::min),
            load_port_max: load_per_port.iter().copied().fold(0.0, f64::max),
            load_cv: if mean > 0.0 { var.sqrt() / mean } else { 0.0 },
            load_per_port,
            throughput_port_mean: self.delivered_cells as f64 / (n * cycles as f64),
            cells_delivered: self.delivered_cells,
            spike_p99: runs.quantile(0.99),
            spike_runs: runs,
            output_bursts: bursts,
            batch_sizes: batches,
            peak_edge_queue: peaks.edge,
            peak_fabric_queue: peaks.fabric,
            qdelay_source_mean: self.q_source.mean(),
            qdelay_edge_mean: self.q_edge.mean(),
            qdelay_switch_mean: self.q_fabric.mean(),
            qdelay_edge_by_vnet: [self.q_edge_vnet[0].mean(), self.q_edge_vnet[1].mean()],
            qdelay_switch_by_vnet: [self.q_fabric_vnet[0].mean(), self.q_fabric_vnet[1].mean()],
            qdelay_switch: self.q_fabric.clone(),
            routers_mean: self.routers.mean(),
            messages_delivered: self.end_delay.count(),
            end_delay_mean: self.end_delay.mean(),
            end_delay_by_class: [
                self.end_delay_class[0].mean(),
                self.end_delay_class[1].mean(),
                self.end_delay_class[2].mean(),
            ],
            end_delay_control_mean: control.mean(),
            reasm_delay_mean: self.reassembly.mean(),
            txn_completed: self.txn_latency.count(),
            txn_per_kcycle: self.txn_latency.count() as f64 * 1000.0 / cycles as f64,
            txn_lat_mean: self.txn_latency.mean(),
            txn_noc_mean: self.txn_noc.mean(),
        }
    }
}

/// Largest queue occupancies seen anywhere in the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Peaks {
    pub edge: usize,
    pub fabric: usize,
}

/// Everything measured in one run's window.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub measure_cycles: u64,
    pub ports: usize,
    pub links: usize,
    pub link_busy: u64,
    /// Mean fraction of cycles a fabric link carries a cell.
    pub util_mean: f64,
    /// Cells created at the cores of each port, per cycle.
    pub load_per_port: Vec<f64>,
    pub load_port_mean: f64,
    pub load_port_min: f64,
    pub load_port_max: f64,
    /// Coefficient of variation of `load_per_port`.
    pub load_cv: f64,
    /// Cells delivered per port per cycle.
    pub throughput_port_mean: f64,
    pub cells_delivered: u64,
    pub spike_runs: Histogram,
    pub spike_p99: u64,
    pub output_bursts: Histogram,
    pub batch_sizes: Histogram,
    pub peak_edge_queue: usize,
    pub peak_fabric_queue: usize,
    pub qdelay_source_mean: f64,
    pub qdelay_edge_mean: f64,
    pub qdelay_switch_mean: f64,
    pub qdelay_edge_by_vnet: [f64; 2],
    pub qdelay_switch_by_vnet: [f64; 2],
    pub qdelay_switch: Histogram,
    /// Routers visited per delivered cell; 0 for single-stage fabrics.
    pub routers_mean: f64,
    pub messages_delivered: u64,
    pub end_delay_mean: f64,
    /// Indexed by [`MessageClass::index`].
    pub end_delay_by_class: [f64; 3],
    /// Requests and forwards together.
    pub end_delay_control_mean: f64,
    pub reasm_delay_mean: f64,
    pub txn_completed: u64,
    pub txn_per_kcycle: f64,
    pub txn_lat_mean: f64,
    /// Mean summed end delay of a transaction's messages.
    pub txn_noc_mean: f64,
}

impl MetricsReport {
    /// Queueing a cell saw on average across source, edge and fabric.
    pub fn qdelay_total_mean(&self) -> f64 {
        self.qdelay_source_mean + self.qdelay_edge_mean + self.qdelay_switch_mean
    }
}

pub const CSV_HEADER: &str = "axis,value,seed,util_mean,load_port_mean,load_cv,spike_p99,qdelay_edge_mean,qdelay_switch_mean,end_delay_mean,reasm_delay_mean,txn_per_kcycle,txn_lat_mean";

/// The numeric columns of a CSV row, in header order.
pub fn csv_values(r: &MetricsReport) -> [f64; 10] {
    [
        r.util_mean,
        r.load_port_mean,
        r.load_cv,
        r.spike_p99 as f64,
        r.qdelay_edge_mean,
        r.qdelay_switch_mean,
        r.end_delay_mean,
        r.reasm_delay_mean,
        r.txn_per_kcycle,
        r.txn_lat_mean,
    ]
}

pub fn csv_row(axis: &str, value: &str, seed: &str, values: &[f64]) -> String {
    let mut s = format!("{axis},{value},{seed}");
    for v in values {
        s.push(',');
        s.push_str(&fmt_g6(*v));
    }
    s
}

/// Six significant digits, `%g` style: fixed notation for exponents in
/// [-4, 6), scientific otherwise, trailing zeros dropped.
pub fn fmt_g6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{v:.*}", (5 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
