//! TOML configuration files.
//!
//! A file has up to four parts, all optional:
//!
//! ```toml
//! [run]          # RunConfig fields; unset fields take their defaults
//! fabric = "MESH"
//! ports = 4
//!
//! [traffic]      # TrafficConfig fields
//! mode = "closed_loop"
//!
//! [debug]
//! stall_at_cycle = 5000
//!
//! [[experiment]] # one sweep; may override [run] and [traffic]
//! name = "offsets"
//! axis = "latency_offset"
//! values = [0, 10, 20, 40]
//! seeds = [1, 2, 3]
//! [experiment.run]
//! measure_cycles = 50000
//! ```
//!
//! Unknown keys are rejected. When `cores` is unset it is
//! `concentration x ports`; when only `cores` and `ports` are set the
//! concentration follows from them. Mesh dimensions default to the most
//! square factorization of the port count.

use serde::{Deserialize, Serialize};

use crate::config::{BufferDepth, EdgeMode, FabricKind, RunConfig};
use crate::error::ConfigError;
use crate::experiment::{ExperimentSpec, SweepAxis};
use crate::workload::{TrafficConfig, TrafficMode};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run: Option<RawRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    traffic: Option<RawTraffic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    debug: Option<RawDebug>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    experiment: Vec<RawExperiment>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(skip_serializing_if = "Option::is_none")]
    cores: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    concentration: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ports: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fabric: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mesh_rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mesh_cols: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    router_pipeline_depth: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    link_width: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    link_latency: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    latency_offset: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    component_latency: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    buffer_depth: Option<toml::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vnets: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edge_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warmup_cycles: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    measure_cycles: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    drain: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    watchdog_cycles: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    credit_audit_interval: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    control_bytes: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    data_bytes: Option<u32>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraffic {
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    load: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    control_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    three_hop_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mshr_per_core: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    think_time_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    address_interleave: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l1_latency: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l2_latency: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mem_latency: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mem_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDebug {
    #[serde(skip_serializing_if = "Option::is_none")]
    stall_at_cycle: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: String,
    axis: String,
    values: Vec<toml::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stall_value: Option<toml::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run: Option<RawRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    traffic: Option<RawTraffic>,
}

/// A parsed and resolved configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub run: RunConfig,
    pub traffic: TrafficConfig,
    pub experiments: Vec<ExperimentSpec>,
}

impl ConfigFile {
    /// Parse, resolve and validate configuration text.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawFile = toml::from_str(text).map_err(|e| syntax_error(text, &e))?;
        let stall = raw.debug.as_ref().and_then(|d| d.stall_at_cycle);
        let raw_run = raw.run.clone().unwrap_or_default();
        let raw_traffic = raw.traffic.clone().unwrap_or_default();
        let mut run = resolve_run(&[&raw_run])?;
        run.stall_at_cycle = stall;
        let traffic = resolve_traffic(&[&raw_traffic])?;
        run.validate()?;
        traffic.validate(&run)?;
        let mut experiments = Vec::new();
        for e in &raw.experiment {
            let axis: SweepAxis = e.axis.parse()?;
            let values = e.values.iter().map(value_text).collect::<Result<Vec<_>, _>>()?;
            if values.is_empty() {
                return Err(ConfigError::field("values", format!("experiment `{}` has no axis values", e.name)));
            }
            let seeds = e.seeds.clone().unwrap_or_else(|| vec![run.seed]);
            if seeds.is_empty() {
                return Err(ConfigError::field("seeds", format!("experiment `{}` needs at least one seed", e.name)));
            }
            let mut erun = resolve_run(&[&raw_run, e.run.as_ref().unwrap_or(&RawRun::default())])?;
            erun.stall_at_cycle = stall;
            let etraffic = resolve_traffic(&[&raw_traffic, e.traffic.as_ref().unwrap_or(&RawTraffic::default())])?;
            let spec = ExperimentSpec {
                name: e.name.clone(),
                axis,
                values,
                seeds,
                run: erun,
                traffic: etraffic,
                stall_value: e.stall_value.as_ref().map(value_text).transpose()?,
            };
            spec.validate()?;
            experiments.push(spec);
        }
        let mut names: Vec<&str> = experiments.iter().map(|e| e.name.as_str()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::field("name", "experiment names must be unique"));
        }
        Ok(ConfigFile { run, traffic, experiments })
    }

    /// Replace every seed: the base run's and each experiment's seed list.
    pub fn override_seed(&mut self, seed: u64) {
        self.run.seed = seed;
        for e in &mut self.experiments {
            e.seeds = vec![seed];
            e.run.seed = seed;
        }
    }

    /// Fully resolved TOML that parses back to the same configuration.
    pub fn to_toml(&self) -> String {
        let raw = RawFile {
            run: Some(raw_run(&self.run)),
            traffic: Some(raw_traffic(&self.traffic)),
            debug: self.run.stall_at_cycle.map(|s| RawDebug { stall_at_cycle: Some(s) }),
            experiment: self
                .experiments
                .iter()
                .map(|e| RawExperiment {
                    name: e.name.clone(),
                    axis: e.axis.to_string(),
                    values: e.values.iter().map(|v| text_value(v)).collect(),
                    seeds: Some(e.seeds.clone()),
                    stall_value: e.stall_value.as_deref().map(text_value),
                    run: Some(raw_run(&e.run)),
                    traffic: Some(raw_traffic(&e.traffic)),
                })
                .collect(),
        };
        toml::to_string(&raw).expect("resolved configuration serializes")
    }
}

fn syntax_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(1);
    ConfigError::Syntax {
        line,
        message: e.message().trim().to_string(),
    }
}

/// Axis values are kept as text and parsed by the axis.
fn value_text(v: &toml::Value) -> Result<String, ConfigError> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        other => Err(ConfigError::field("values", format!("unsupported axis value {other}"))),
    }
}

fn text_value(s: &str) -> toml::Value {
    if let Ok(i) = s.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = s.parse::<f64>() {
        toml::Value::Float(f)
    } else {
        toml::Value::String(s.to_string())
    }
}

fn parse_buffer(v: &toml::Value) -> Result<BufferDepth, ConfigError> {
    match v {
        toml::Value::Integer(n) if *n >= 0 => Ok(BufferDepth::Cells(*n as usize)),
        toml::Value::String(s) if s.eq_ignore_ascii_case("unbounded") => Ok(BufferDepth::Unbounded),
        other => Err(ConfigError::field(
            "buffer_depth",
            format!("expected a cell count or \"unbounded\", got {other}"),
        )),
    }
}

/// Apply layers of overrides, later layers winning, onto the defaults.
fn resolve_run(layers: &[&RawRun]) -> Result<RunConfig, ConfigError> {
    let mut r = RunConfig::default();
    let pick = |f: &dyn Fn(&RawRun) -> bool| layers.iter().any(|l| f(l));
    macro_rules! take {
        ($field:ident) => {
            for l in layers {
                if let Some(v) = l.$field.clone() {
                    r.$field = v;
                }
            }
        };
    }
    take!(concentration);
    take!(ports);
    take!(cores);
    take!(router_pipeline_depth);
    take!(link_width);
    take!(link_latency);
    take!(latency_offset);
    take!(component_latency);
    take!(vnets);
    take!(warmup_cycles);
    take!(measure_cycles);
    take!(seed);
    take!(drain);
    take!(watchdog_cycles);
    take!(credit_audit_interval);
    take!(control_bytes);
    take!(data_bytes);
    let has_cores = pick(&|l| l.cores.is_some());
    let has_conc = pick(&|l| l.concentration.is_some());
    if !has_cores {
        r.cores = r.concentration * r.ports;
    } else if !has_conc && r.ports > 0 && r.cores % r.ports == 0 {
        r.concentration = r.cores / r.ports;
    }
    for l in layers {
        if let Some(f) = &l.fabric {
            r.fabric = f.parse()?;
        }
        if let Some(m) = &l.edge_mode {
            r.edge_mode = m.parse()?;
        }
        if let Some(b) = &l.buffer_depth {
            r.buffer_depth = parse_buffer(b)?;
        }
    }
    let rows = layers.iter().rev().find_map(|l| l.mesh_rows);
    let cols = layers.iter().rev().find_map(|l| l.mesh_cols);
    r.mesh_dims = match (rows, cols) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) => (a, if a > 0 { r.ports / a } else { 0 }),
        (None, Some(b)) => (if b > 0 { r.ports / b } else { 0 }, b),
        (None, None) => RunConfig::square_dims(r.ports.max(1)),
    };
    Ok(r)
}

fn resolve_traffic(layers: &[&RawTraffic]) -> Result<TrafficConfig, ConfigError> {
    let mut t = TrafficConfig::default();
    macro_rules! take {
        ($field:ident) => {
            for l in layers {
                if let Some(v) = l.$field {
                    t.$field = v;
                }
            }
        };
    }
    take!(load);
    take!(control_fraction);
    take!(three_hop_fraction);
    take!(mshr_per_core);
    take!(think_time_mean);
    take!(address_interleave);
    take!(l1_latency);
    take!(l2_latency);
    take!(mem_latency);
    take!(mem_fraction);
    for l in layers {
        if let Some(m) = &l.mode {
            t.mode = m.parse::<TrafficMode>()?;
        }
    }
    Ok(t)
}

fn raw_run(r: &RunConfig) -> RawRun {
    RawRun {
        cores: Some(r.cores),
        concentration: Some(r.concentration),
        ports: Some(r.ports),
        fabric: Some(r.fabric.to_string()),
        mesh_rows: Some(r.mesh_dims.0),
        mesh_cols: Some(r.mesh_dims.1),
        router_pipeline_depth: Some(r.router_pipeline_depth),
        link_width: Some(r.link_width),
        link_latency: Some(r.link_latency),
        latency_offset: Some(r.latency_offset),
        component_latency: Some(r.component_latency),
        buffer_depth: Some(match r.buffer_depth {
            BufferDepth::Unbounded => toml::Value::String("unbounded".into()),
            BufferDepth::Cells(n) => toml::Value::Integer(n as i64),
        }),
        vnets: Some(r.vnets),
        edge_mode: Some(r.edge_mode.to_string()),
        warmup_cycles: Some(r.warmup_cycles),
        measure_cycles: Some(r.measure_cycles),
        seed: Some(r.seed),
        drain: Some(r.drain),
        watchdog_cycles: Some(r.watchdog_cycles),
        credit_audit_interval: Some(r.credit_audit_interval),
        control_bytes: Some(r.control_bytes),
        data_bytes: Some(r.data_bytes),
    }
}

fn raw_traffic(t: &TrafficConfig) -> RawTraffic {
    RawTraffic {
        mode: Some(t.mode.to_string()),
        load: Some(t.load),
        control_fraction: Some(t.control_fraction),
        three_hop_fraction: Some(t.three_hop_fraction),
        mshr_per_core: Some(t.mshr_per_core),
        think_time_mean: Some(t.think_time_mean),
        address_interleave: Some(t.address_interleave),
        l1_latency: Some(t.l1_latency),
        l2_latency: Some(t.l2_latency),
        mem_latency: Some(t.mem_latency),
        mem_fraction: Some(t.mem_fraction),
    }
}

/// Names of the edge and fabric enums as written in files.
pub fn describe(run: &RunConfig) -> String {
    let edge = match run.edge_mode {
        EdgeMode::OutputQueued => "OQ edges",
        EdgeMode::InputQueued => "IQ edges",
    };
    match run.fabric {
        FabricKind::Mesh => format!(
            "{}x{} mesh, {}-cycle routers, {} cores per port, {edge}",
            run.mesh_dims.0, run.mesh_dims.1, run.router_pipeline_depth, run.concentration
        ),
        f => format!("{f} switch, {} ports, {} cores per port, {edge}", run.ports, run.concentration),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ConfigFile::parse("[run]\nfabric = \"OQ\"\nports = 4\n").unwrap();
        assert_eq!(cfg.run, RunConfig::default());
        assert_eq!(cfg.traffic, TrafficConfig::default());
        assert!(cfg.experiments.is_empty());
    }

    #[test]
    fn concentrated_mesh_is_accepted() {
        let cfg = ConfigFile::parse(
            "[run]\ncores = 64\nconcentration = 16\nfabric = \"MESH\"\nmesh_rows = 2\nmesh_cols = 2\nports = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.run.mesh_dims, (2, 2));
    }

    #[test]
    fn mesh_dimension_mismatch_names_the_field() {
        let err = ConfigFile::parse("[run]\nfabric = \"MESH\"\nports = 4\nmesh_rows = 3\nmesh_cols = 3\n").unwrap_err();
        assert_eq!(err.field_name(), Some("mesh_rows"));
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        let err = ConfigFile::parse("[run]\nports = 4\nfabric = \n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ConfigFile::parse("[run]\nports = 4\n\nportz = 4\n").unwrap_err();
        match err {
            ConfigError::Syntax { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("portz"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_buffer_is_a_field_error() {
        let err = ConfigFile::parse("[run]\nfabric = \"MESH\"\nedge_mode = \"IQ\"\nbuffer_depth = 0\n").unwrap_err();
        assert_eq!(err.field_name(), Some("buffer_depth"));
    }

    #[test]
    fn cores_follow_ports_and_concentration() {
        let cfg = ConfigFile::parse("[run]\nports = 16\nconcentration = 1\n").unwrap();
        assert_eq!(cfg.run.cores, 16);
        let cfg = ConfigFile::parse("[run]\ncores = 64\nports = 64\nfabric = \"MESH\"\n").unwrap();
        assert_eq!(cfg.run.concentration, 1);
        assert_eq!(cfg.run.mesh_dims, (8, 8));
    }

    #[test]
    fn experiments_inherit_and_override() {
        let text = r#"
[run]
measure_cycles = 500
[traffic]
mode = "bernoulli_cells"
load = 0.2

[[experiment]]
name = "a"
axis = "load"
values = [0.1, 0.3]
seeds = [4, 5]
[experiment.run]
fabric = "IQ_FIFO"
"#;
        let cfg = ConfigFile::parse(text).unwrap();
        let e = &cfg.experiments[0];
        assert_eq!(e.run.fabric, FabricKind::IqFifo);
        assert_eq!(e.run.measure_cycles, 500);
        assert_eq!(e.traffic.load, 0.2);
        assert_eq!(e.values, vec!["0.1", "0.3"]);
        assert_eq!(e.seeds, vec![4, 5]);
        assert_eq!(cfg.run.fabric, FabricKind::Oq);
    }

    #[test]
    fn echo_round_trips() {
        let text = r#"
[run]
fabric = "MESH"
edge_mode = "IQ"
buffer_depth = 8
vnets = 2
[debug]
stall_at_cycle = 77
[[experiment]]
name = "x"
axis = "fabric"
values = ["MESH"]
stall_value = "MESH"
"#;
        let cfg = ConfigFile::parse(text).unwrap();
        let again = ConfigFile::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }
}
