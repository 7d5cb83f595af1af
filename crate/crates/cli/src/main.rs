use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nocsim::configfile::{describe, ConfigFile};
use nocsim::experiment::run_experiment;
use nocsim::metrics::{csv_row, csv_values, fmt_g6, CSV_HEADER};
use nocsim::presets::{self, PRESETS};
use nocsim::{run, ConfigError, SimError};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "nocsim", version, about = "Cycle-accurate network-on-chip simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the [run] and [traffic] sections once.
    Run(RunArgs),
    /// Run every [[experiment]] sweep and write one CSV per experiment.
    Sweep(SweepArgs),
    /// Parse and check configurations; with no --config, check every preset.
    Validate {
        /// Config file path or preset name; repeatable.
        #[arg(long)]
        config: Vec<String>,
    },
    /// List the shipped presets and their experiments.
    ListExperiments,
}

#[derive(Args)]
struct Common {
    /// Config file path or preset name.
    #[arg(long)]
    config: String,
    /// Output directory.
    #[arg(long, env = "NOCSIM_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Replace every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Worker threads for sweep points.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
    /// Only run the named experiment.
    #[arg(long)]
    experiment: Option<String>,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn load(source: &str) -> Result<ConfigFile, Failure> {
    let path = Path::new(source);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{source}: {e}")))?;
        return ConfigFile::parse(&text).map_err(|e| Failure::Config(format!("{source}: {e}")));
    }
    match presets::find(source) {
        Some(p) => p.load().map_err(|e| Failure::Config(format!("preset {source}: {e}"))),
        None => Err(Failure::Config(format!("`{source}` is neither a file nor a preset name"))),
    }
}

fn prepare(common: &Common) -> Result<ConfigFile, Failure> {
    let mut cfg = load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.override_seed(s);
    }
    fs::create_dir_all(&common.out).map_err(|e| io_failure(&common.out, e))?;
    let echo = common.out.join("config.toml");
    fs::write(&echo, cfg.to_toml()).map_err(|e| io_failure(&echo, e))?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> Result<u8, Failure> {
    let cfg = prepare(&args.common)?;
    eprintln!("{}", describe(&cfg.run));
    let report = run(&cfg.run, &cfg.traffic)?;
    let path = args.common.out.join("run.csv");
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    text.push_str(&csv_row("run", "base", &cfg.run.seed.to_string(), &csv_values(&report)));
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_failure(&path, e))?;
    let names = CSV_HEADER.split(',').skip(3);
    for (name, v) in names.zip(csv_values(&report)) {
        println!("{name:>20} {}", fmt_g6(v));
    }
    println!("{}", path.display());
    Ok(0)
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8, Failure> {
    let cfg = prepare(&args.common)?;
    let selected: Vec<_> = cfg
        .experiments
        .iter()
        .filter(|e| args.experiment.as_ref().is_none_or(|n| *n == e.name))
        .collect();
    if selected.is_empty() {
        return Err(Failure::Config(match &args.experiment {
            Some(n) => format!("no experiment named `{n}`"),
            None => "the config has no [[experiment]] sections".into(),
        }));
    }
    let mut failed = 0;
    for spec in selected {
        let outcome = run_experiment(spec, args.jobs)?;
        let path = args.common.out.join(format!("{}.csv", spec.name));
        fs::write(&path, &outcome.csv).map_err(|e| io_failure(&path, e))?;
        for p in outcome.failures() {
            failed += 1;
            if let Err(e) = &p.result {
                eprintln!("{} {}={} seed {}: {e}", spec.name, spec.axis, p.value, p.seed);
            }
        }
        println!("{}", path.display());
    }
    Ok(if failed > 0 { EXIT_PARTIAL } else { 0 })
}

fn cmd_validate(configs: &[String]) -> Result<u8, Failure> {
    let sources: Vec<String> = if configs.is_empty() {
        PRESETS.iter().map(|p| p.name.to_string()).collect()
    } else {
        configs.to_vec()
    };
    for s in &sources {
        let cfg = load(s)?;
        println!("{s}: ok, {} experiment(s)", cfg.experiments.len());
    }
    Ok(0)
}

fn cmd_list() -> Result<u8, Failure> {
    for p in PRESETS {
        println!("{:<22} {}", p.name, p.summary);
        let cfg = p.load()?;
        for e in &cfg.experiments {
            println!("    {:<18} {} = [{}], {} seed(s)", e.name, e.axis, e.values.join(", "), e.seeds.len());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate { config } => cmd_validate(config),
        Command::ListExperiments => cmd_list(),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
