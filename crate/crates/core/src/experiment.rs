//! Parameter sweeps: one run per (axis value, seed), written as CSV.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::{FabricKind, RunConfig};
use crate::error::{ConfigError, SimError};
use crate::kernel::run;
use crate::metrics::{csv_row, csv_values, MetricsReport, CSV_HEADER};
use crate::workload::{TrafficConfig, TrafficMode};

/// The parameter an experiment varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Fabric port count; the core count is held and concentration follows.
    SwitchSize,
    Fabric,
    LatencyOffset,
    /// Open-loop offered load per port.
    Load,
    /// Cores per port; the core count is held and the port count follows.
    Concentration,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::SwitchSize => "switch_size",
            SweepAxis::Fabric => "fabric",
            SweepAxis::LatencyOffset => "latency_offset",
            SweepAxis::Load => "load",
            SweepAxis::Concentration => "concentration",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "switch_size" | "ports" => Ok(SweepAxis::SwitchSize),
            "fabric" => Ok(SweepAxis::Fabric),
            "latency_offset" | "offset" => Ok(SweepAxis::LatencyOffset),
            "load" => Ok(SweepAxis::Load),
            "concentration" => Ok(SweepAxis::Concentration),
            _ => Err(ConfigError::field(
                "axis",
                format!("unknown axis `{s}` (expected switch_size, fabric, latency_offset, load or concentration)"),
            )),
        }
    }
}

/// One sweep from a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub axis: SweepAxis,
    pub values: Vec<String>,
    pub seeds: Vec<u64>,
    pub run: RunConfig,
    pub traffic: TrafficConfig,
    /// When set, `stall_at_cycle` only applies to points with this value.
    pub stall_value: Option<String>,
}

fn parse_num<T: FromStr>(axis: SweepAxis, v: &str) -> Result<T, ConfigError> {
    v.trim()
        .parse()
        .map_err(|_| ConfigError::field("values", format!("`{v}` is not a valid {axis} value")))
}

fn reshape(run: &mut RunConfig, ports: usize) -> Result<(), ConfigError> {
    if ports == 0 || run.cores % ports != 0 {
        return Err(ConfigError::field(
            "values",
            format!("{} cores do not divide evenly onto {ports} ports", run.cores),
        ));
    }
    run.ports = ports;
    run.concentration = run.cores / ports;
    run.mesh_dims = RunConfig::square_dims(ports);
    Ok(())
}

impl ExperimentSpec {
    /// Configuration of one point of the sweep.
    pub fn point(&self, value: &str, seed: u64) -> Result<(RunConfig, TrafficConfig), ConfigError> {
        let mut run = self.run.clone();
        let mut traffic = self.traffic.clone();
        run.seed = seed;
        match self.axis {
            SweepAxis::SwitchSize => reshape(&mut run, parse_num(self.axis, value)?)?,
            SweepAxis::Concentration => {
                let k: usize = parse_num(self.axis, value)?;
                if k == 0 {
                    return Err(ConfigError::field("values", "concentration must be at least 1"));
                }
                let ports = run.cores / k;
                reshape(&mut run, ports)?;
                if run.concentration != k {
                    return Err(ConfigError::field(
                        "values",
                        format!("{} cores cannot be split {k} per port", run.cores),
                    ));
                }
            }
            SweepAxis::Fabric => {
                run.fabric = value.parse()?;
                if run.fabric == FabricKind::Mesh && run.mesh_dims.0 * run.mesh_dims.1 != run.ports {
                    run.mesh_dims = RunConfig::square_dims(run.ports);
                }
            }
            SweepAxis::LatencyOffset => run.latency_offset = parse_num(self.axis, value)?,
            SweepAxis::Load => {
                if traffic.mode == TrafficMode::ClosedLoop {
                    return Err(ConfigError::field("axis", "the load axis needs an open-loop traffic mode"));
                }
                traffic.load = parse_num(self.axis, value)?;
            }
        }
        if let Some(sv) = &self.stall_value {
            if sv != value {
                run.stall_at_cycle = None;
            }
        }
        run.validate()?;
        traffic.validate(&run)?;
        Ok((run, traffic))
    }

    /// Check every point resolves to a valid configuration.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for v in &self.values {
            self.point(v, self.seeds.first().copied().unwrap_or(self.run.seed))?;
        }
        Ok(())
    }
}

/// Outcome of one (value, seed) point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub value: String,
    pub seed: u64,
    pub result: Result<MetricsReport, SimError>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub name: String,
    pub points: Vec<PointResult>,
    pub csv: String,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &PointResult> {
        self.points.iter().filter(|p| p.result.is_err())
    }

    pub fn all_ok(&self) -> bool {
        self.failures().next().is_none()
    }
}

/// Run every point on `jobs` worker threads. Output order depends only on
/// the experiment definition, never on scheduling.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentOutcome, ConfigError> {
    let mut work = Vec::new();
    for v in &spec.values {
        for &s in &spec.seeds {
            let (run, traffic) = spec.point(v, s)?;
            work.push((v.clone(), s, run, traffic));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ConfigError::field("jobs", e.to_string()))?;
    let points: Vec<PointResult> = pool.install(|| {
        work.par_iter()
            .map(|(v, s, run_cfg, traffic)| PointResult {
                value: v.clone(),
                seed: *s,
                result: run(run_cfg, traffic),
            })
            .collect()
    });
    let csv = render_csv(spec, &points);
    Ok(ExperimentOutcome {
        name: spec.name.clone(),
        points,
        csv,
    })
}

/// Per-seed rows for each value, followed by a `mean` row over the seeds
/// that succeeded. Failed points produce no row.
pub fn render_csv(spec: &ExperimentSpec, points: &[PointResult]) -> String {
    let axis = spec.axis.to_string();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for v in &spec.values {
        let ok: Vec<(u64, [f64; 10])> = points
            .iter()
            .filter(|p| &p.value == v)
            .filter_map(|p| p.result.as_ref().ok().map(|r| (p.seed, csv_values(r))))
            .collect();
        if ok.is_empty() {
            continue;
        }
        let mut mean = [0.0; 10];
        for (seed, vals) in &ok {
            out.push_str(&csv_row(&axis, v, &seed.to_string(), vals));
            out.push('\n');
            for (m, x) in mean.iter_mut().zip(vals) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= ok.len() as f64;
        }
        out.push_str(&csv_row(&axis, v, "mean", &mean));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(axis: SweepAxis, values: &[&str]) -> ExperimentSpec {
        let mut run = RunConfig::default();
        run.warmup_cycles = 100;
        run.measure_cycles = 400;
        ExperimentSpec {
            name: "t".into(),
            axis,
            values: values.iter().map(|s| s.to_string()).collect(),
            seeds: vec![1, 2],
            run,
            traffic: TrafficConfig::bernoulli(0.2),
            stall_value: None,
        }
    }

    #[test]
    fn switch_size_keeps_cores() {
        let s = spec(SweepAxis::SwitchSize, &["16"]);
        let (run, _) = s.point("16", 1).unwrap();
        assert_eq!((run.ports, run.concentration, run.cores), (16, 4, 64));
        assert!(s.point("5", 1).is_err());
    }

    #[test]
    fn concentration_sets_ports() {
        let mut s = spec(SweepAxis::Concentration, &["1"]);
        s.run.fabric = FabricKind::Mesh;
        let (run, _) = s.point("1", 1).unwrap();
        assert_eq!((run.ports, run.mesh_dims), (64, (8, 8)));
    }

    #[test]
    fn load_axis_rejects_closed_loop() {
        let mut s = spec(SweepAxis::Load, &["0.1"]);
        s.traffic = TrafficConfig::default();
        assert!(s.validate().is_err());
    }

    #[test]
    fn csv_has_seed_and_mean_rows() {
        let s = spec(SweepAxis::LatencyOffset, &["0", "5"]);
        let out = run_experiment(&s, 2).unwrap();
        assert!(out.all_ok());
        let lines: Vec<&str> = out.csv.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert!(lines[3].starts_with("latency_offset,0,mean,"));
        assert!(lines[6].starts_with("latency_offset,5,mean,"));
    }

    #[test]
    fn job_count_does_not_change_output() {
        let s = spec(SweepAxis::Load, &["0.1", "0.3"]);
        let a = run_experiment(&s, 1).unwrap();
        let b = run_experiment(&s, 4).unwrap();
        assert_eq!(a.csv, b.csv);
    }

    #[test]
    fn failed_points_are_skipped() {
        let mut s = spec(SweepAxis::LatencyOffset, &["0", "3"]);
        s.run.stall_at_cycle = Some(0);
        s.run.watchdog_cycles = 50;
        s.stall_value = Some("3".into());
        let out = run_experiment(&s, 2).unwrap();
        assert_eq!(out.failures().count(), 2);
        assert!(out.csv.contains("latency_offset,0,mean"));
        assert!(!out.csv.contains("latency_offset,3,"));
    }
}
