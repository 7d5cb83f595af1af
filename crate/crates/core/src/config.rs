//! Run configuration and its validation.

use std::fmt;
use std::str::FromStr;

use crate::error::ConfigError;

/// Switching fabric between the edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FabricKind {
    /// Ideal output-queued switch.
    Oq,
    /// Crossbar with one FIFO per input and a round-robin arbiter per output.
    IqFifo,
    /// Virtual output queues scheduled by single-iteration RRM.
    VoqRrm,
    /// Virtual output queues scheduled by iSLIP with the given iteration count.
    VoqIslip(u32),
    /// 2D mesh of dimension-ordered routers.
    Mesh,
}

impl FabricKind {
    pub fn is_single_stage(self) -> bool {
        !matches!(self, FabricKind::Mesh)
    }
}

impl fmt::Display for FabricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FabricKind::Oq => f.write_str("OQ"),
            FabricKind::IqFifo => f.write_str("IQ_FIFO"),
            FabricKind::VoqRrm => f.write_str("VOQ_RRM"),
            FabricKind::VoqIslip(k) => write!(f, "VOQ_ISLIP({k})"),
            FabricKind::Mesh => f.write_str("MESH"),
        }
    }
}

impl FromStr for FabricKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || {
            ConfigError::field(
                "fabric",
                format!("unknown fabric `{s}` (expected OQ, IQ_FIFO, VOQ_RRM, VOQ_ISLIP(k) or MESH)"),
            )
        };
        let t = s.trim().to_ascii_uppercase();
        match t.as_str() {
            "OQ" => Ok(FabricKind::Oq),
            "IQ_FIFO" | "IQ" => Ok(FabricKind::IqFifo),
            "VOQ_RRM" | "RRM" => Ok(FabricKind::VoqRrm),
            "VOQ_ISLIP" | "ISLIP" => Ok(FabricKind::VoqIslip(1)),
            "MESH" => Ok(FabricKind::Mesh),
            _ => {
                let inner = t
                    .strip_prefix("VOQ_ISLIP(")
                    .or_else(|| t.strip_prefix("ISLIP("))
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(bad)?;
                let k: u32 = inner.trim().parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(ConfigError::field("fabric", "iSLIP needs at least one iteration"));
                }
                Ok(FabricKind::VoqIslip(k))
            }
        }
    }
}

/// Capacity of a finite queue, in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferDepth {
    Unbounded,
    Cells(usize),
}

impl BufferDepth {
    pub fn limit(self) -> Option<usize> {
        match self {
            BufferDepth::Unbounded => None,
            BufferDepth::Cells(n) => Some(n),
        }
    }
}

/// How an edge multiplexes its cores onto the fabric port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeMode {
    /// One port queue; concurrent arrivals are written in random order.
    OutputQueued,
    /// One FIFO per core, served round-robin.
    InputQueued,
}

impl fmt::Display for EdgeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeMode::OutputQueued => f.write_str("OQ"),
            EdgeMode::InputQueued => f.write_str("IQ"),
        }
    }
}

impl FromStr for EdgeMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "OQ" | "OUTPUT_QUEUED" => Ok(EdgeMode::OutputQueued),
            "IQ" | "INPUT_QUEUED" => Ok(EdgeMode::InputQueued),
            _ => Err(ConfigError::field("edge_mode", format!("unknown edge mode `{s}` (expected OQ or IQ)"))),
        }
    }
}

/// Fully resolved parameters of one simulation run.
///
/// Latencies are in cycles. A cell spends at least `component_latency`
/// cycles in every core, edge and single-stage switch it visits,
/// `router_pipeline_depth` cycles in every mesh router, and
/// `link_latency + latency_offset` cycles on every link between an edge and
/// the fabric or between two routers.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cores: usize,
    /// Cores per fabric port.
    pub concentration: usize,
    pub ports: usize,
    pub fabric: FabricKind,
    /// (rows, cols); only meaningful for [`FabricKind::Mesh`].
    pub mesh_dims: (usize, usize),
    pub router_pipeline_depth: u32,
    pub link_width: u32,
    pub link_latency: u32,
    pub latency_offset: u32,
    pub component_latency: u32,
    pub buffer_depth: BufferDepth,
    pub vnets: u8,
    pub edge_mode: EdgeMode,
    pub warmup_cycles: u64,
    pub measure_cycles: u64,
    pub seed: u64,
    /// After the measurement window, stop injecting and run until empty.
    pub drain: bool,
    pub watchdog_cycles: u64,
    /// Audit credit conservation every this many cycles; 0 disables.
    pub credit_audit_interval: u64,
    pub control_bytes: u32,
    pub data_bytes: u32,
    /// Fault injection: freeze every launch from this cycle on.
    pub stall_at_cycle: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cores: 64,
            concentration: 16,
            ports: 4,
            fabric: FabricKind::Oq,
            mesh_dims: (2, 2),
            router_pipeline_depth: 4,
            link_width: 64,
            link_latency: 1,
            latency_offset: 0,
            component_latency: 1,
            buffer_depth: BufferDepth::Unbounded,
            vnets: 1,
            edge_mode: EdgeMode::OutputQueued,
            warmup_cycles: 10_000,
            measure_cycles: 100_000,
            seed: 1,
            drain: false,
            watchdog_cycles: 10_000,
            credit_audit_interval: 0,
            control_bytes: 8,
            data_bytes: 72,
            stall_at_cycle: None,
        }
    }
}

/// Largest port count of a single-stage switch and largest concentration;
/// request sets are 64-bit masks.
pub const MAX_RADIX: usize = 64;

impl RunConfig {
    /// Link traversal time including the configured offset.
    pub fn link_cycles(&self) -> u64 {
        self.link_latency as u64 + self.latency_offset as u64
    }

    pub fn credits_enabled(&self) -> bool {
        self.buffer_depth.limit().is_some()
    }

    pub fn port_of_core(&self, core: u32) -> usize {
        core as usize / self.concentration
    }

    /// Mesh coordinates (x = column, y = row) of a fabric port.
    pub fn mesh_coords(&self, port: usize) -> (usize, usize) {
        (port % self.mesh_dims.1, port / self.mesh_dims.1)
    }

    pub fn cells_per_message(&self, bytes: u32) -> u32 {
        bytes.div_ceil(self.link_width)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cores == 0 {
            return Err(ConfigError::field("cores", "must be at least 1"));
        }
        if self.concentration == 0 {
            return Err(ConfigError::field("concentration", "must be at least 1"));
        }
        if self.ports == 0 {
            return Err(ConfigError::field("ports", "must be at least 1"));
        }
        if self.cores != self.concentration * self.ports {
            return Err(ConfigError::field(
                "cores",
                format!(
                    "cores ({}) must equal concentration ({}) x ports ({})",
                    self.cores, self.concentration, self.ports
                ),
            ));
        }
        if self.concentration > MAX_RADIX {
            return Err(ConfigError::field("concentration", format!("at most {MAX_RADIX} cores per port")));
        }
        match self.fabric {
            FabricKind::Mesh => {
                let (rows, cols) = self.mesh_dims;
                if rows == 0 || cols == 0 || rows * cols != self.ports {
                    return Err(ConfigError::field(
                        "mesh_rows",
                        format!("mesh {rows}x{cols} does not have {} ports", self.ports),
                    ));
                }
            }
            _ => {
                if self.ports > MAX_RADIX {
                    return Err(ConfigError::field("ports", format!("single-stage switches support at most {MAX_RADIX} ports")));
                }
            }
        }
        if let FabricKind::VoqIslip(0) = self.fabric {
            return Err(ConfigError::field("fabric", "iSLIP needs at least one iteration"));
        }
        if self.router_pipeline_depth == 0 {
            return Err(ConfigError::field("router_pipeline_depth", "must be at least 1"));
        }
        if self.link_width == 0 {
            return Err(ConfigError::field("link_width", "must be at least 1 byte"));
        }
        if self.link_latency == 0 {
            return Err(ConfigError::field("link_latency", "must be at least 1 cycle"));
        }
        if self.component_latency == 0 {
            return Err(ConfigError::field("component_latency", "must be at least 1 cycle"));
        }
        if self.control_bytes == 0 {
            return Err(ConfigError::field("control_bytes", "must be at least 1"));
        }
        if self.data_bytes == 0 {
            return Err(ConfigError::field("data_bytes", "must be at least 1"));
        }
        let max_cells = self.cells_per_message(self.control_bytes.max(self.data_bytes));
        if max_cells > u16::MAX as u32 {
            return Err(ConfigError::field("link_width", "messages would need more than 65535 cells"));
        }
        if self.buffer_depth == BufferDepth::Cells(0) {
            return Err(ConfigError::field("buffer_depth", "finite buffers need at least one cell"));
        }
        if self.vnets != 1 && self.vnets != 2 {
            return Err(ConfigError::field("vnets", "must be 1 or 2"));
        }
        if self.vnets == 2 && self.fabric != FabricKind::Mesh {
            return Err(ConfigError::field("vnets", "two virtual networks require the MESH fabric"));
        }
        if self.credits_enabled() {
            if self.fabric != FabricKind::Mesh {
                return Err(ConfigError::field(
                    "buffer_depth",
                    "finite buffers are only modeled for the MESH fabric; single-stage switches are unbounded",
                ));
            }
            if self.edge_mode != EdgeMode::InputQueued {
                return Err(ConfigError::field("edge_mode", "finite buffers require input-queued (IQ) edges"));
            }
        }
        if self.measure_cycles == 0 {
            return Err(ConfigError::field("measure_cycles", "must be at least 1"));
        }
        if self.watchdog_cycles == 0 {
            return Err(ConfigError::field("watchdog_cycles", "must be at least 1"));
        }
        Ok(())
    }

    /// Most-square factorization `rows x cols = ports` with `rows <= cols`.
    pub fn square_dims(ports: usize) -> (usize, usize) {
        let mut rows = (ports as f64).sqrt().floor() as usize;
        while rows > 1 && ports % rows != 0 {
            rows -= 1;
        }
        let rows = rows.max(1);
        (rows, ports / rows)
    }

    /// Analytic lower bound on a cell's end-to-end latency between two ports,
    /// excluding serialization.
    pub fn path_floor(&self, src_port: usize, dst_port: usize) -> u64 {
        let c = self.component_latency as u64;
        let link = self.link_cycles();
        match self.fabric {
            FabricKind::Mesh => {
                let routers = self.routers_on_path(src_port, dst_port) as u64;
                // core, ingress edge, egress edge; one link per router plus the ingress link
                3 * c + (routers + 1) * link + routers * self.router_pipeline_depth as u64
            }
            _ => 4 * c + 2 * link,
        }
    }

    /// Routers visited between two ports under dimension-ordered routing.
    pub fn routers_on_path(&self, src_port: usize, dst_port: usize) -> usize {
        let (sx, sy) = self.mesh_coords(src_port);
        let (dx, dy) = self.mesh_coords(dst_port);
        sx.abs_diff(dx) + sy.abs_diff(dy) + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fabric_names_round_trip() {
        for kind in [
            FabricKind::Oq,
            FabricKind::IqFifo,
            FabricKind::VoqRrm,
            FabricKind::VoqIslip(1),
            FabricKind::VoqIslip(4),
            FabricKind::Mesh,
        ] {
            assert_eq!(kind.to_string().parse::<FabricKind>().unwrap(), kind);
        }
        assert_eq!("voq_islip".parse::<FabricKind>().unwrap(), FabricKind::VoqIslip(1));
        assert!("VOQ_ISLIP(0)".parse::<FabricKind>().is_err());
        assert!("BUTTERFLY".parse::<FabricKind>().is_err());
    }

    #[test]
    fn default_config_is_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn dimension_mismatch_names_the_field() {
        let cfg = RunConfig {
            fabric: FabricKind::Mesh,
            mesh_dims: (3, 3),
            ..RunConfig::default()
        };
        assert_eq!(cfg.validate().unwrap_err().field_name(), Some("mesh_rows"));
    }

    #[test]
    fn zero_depth_buffer_is_rejected() {
        let cfg = RunConfig {
            fabric: FabricKind::Mesh,
            buffer_depth: BufferDepth::Cells(0),
            edge_mode: EdgeMode::InputQueued,
            ..RunConfig::default()
        };
        assert_eq!(cfg.validate().unwrap_err().field_name(), Some("buffer_depth"));
    }

    #[test]
    fn finite_buffers_need_mesh_and_iq_edges() {
        let mut cfg = RunConfig {
            buffer_depth: BufferDepth::Cells(4),
            ..RunConfig::default()
        };
        assert_eq!(cfg.validate().unwrap_err().field_name(), Some("buffer_depth"));
        cfg.fabric = FabricKind::Mesh;
        assert_eq!(cfg.validate().unwrap_err().field_name(), Some("edge_mode"));
        cfg.edge_mode = EdgeMode::InputQueued;
        cfg.validate().unwrap();
    }

    #[test]
    fn square_dims_prefers_square() {
        assert_eq!(RunConfig::square_dims(4), (2, 2));
        assert_eq!(RunConfig::square_dims(64), (8, 8));
        assert_eq!(RunConfig::square_dims(8), (2, 4));
        assert_eq!(RunConfig::square_dims(2), (1, 2));
        assert_eq!(RunConfig::square_dims(1), (1, 1));
        assert_eq!(RunConfig::square_dims(7), (1, 7));
    }

    #[test]
    fn cores_must_match_ports_times_concentration() {
        let cfg = RunConfig {
            cores: 60,
            ..RunConfig::default()
        };
        assert_eq!(cfg.validate().unwrap_err().field_name(), Some("cores"));
    }
}
