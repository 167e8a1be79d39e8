use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ncospan_core::fixtures;
use ncospan_core::milp::LeafMode;
use ncospan_core::pipeline::{run_method, Method, RunOptions};
use ncospan_core::power::RadioProfile;
use ncospan_core::report::{write_compare_csv, SolveReport};
use ncospan_core::scenario::{load_scenario, save_scenario, Scenario};
use ncospan_core::solver::BnbLimits;

#[derive(Parser)]
#[command(name = "ncospan", version, about = "System-power-aware channel scheduling for NC-OFDMA networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a scenario and report every invariant violation.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Solve a scenario with one method and print a JSON report.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "greedy")]
        method: Method,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a one-row comparison CSV to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run several methods on the same scenario and print a CSV table.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods; the first is the ratio reference.
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<Method>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also write all JSON reports to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one of the reference scenarios as TOML.
    Generate {
        #[arg(long)]
        preset: Preset,
        #[arg(long, default_value_t = fixtures::FIXTURE_SEED)]
        seed: u64,
        /// Channel count of the single-link preset.
        #[arg(long, default_value_t = 20)]
        channels: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Relative optimality gap at which branch-and-bound stops.
    #[arg(long, default_value_t = 1e-4)]
    gap: f64,
    #[arg(long, default_value_t = 200_000)]
    max_nodes: usize,
    /// Branch-and-bound time limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Greedy pass-order seed; defaults to the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the scenario's radio with a preset (high-slope, low-slope).
    #[arg(long)]
    radio: Option<String>,
    /// How branch-and-bound scores integral nodes.
    #[arg(long, value_enum, default_value_t = Leaf::Exact)]
    leaf: Leaf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Leaf {
    Exact,
    Relaxed,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 12-node grid on the Wichita TV channels.
    Wichita12,
    /// Single link over contiguous 3 MHz channels with alternating gains.
    AlternatingLink,
    /// Two nodes, one channel.
    MinimalPair,
}

impl Common {
    fn load(&self) -> Result<Scenario> {
        let scenario = load_scenario(&self.scenario)
            .with_context(|| format!("loading {}", self.scenario.display()))?;
        Ok(match &self.radio {
            Some(name) => match RadioProfile::preset(name) {
                Some(r) => scenario.with_radio(r),
                None => bail!("unknown radio preset '{name}' (expected high-slope or low-slope)"),
            },
            None => scenario,
        })
    }

    fn options(&self) -> Result<RunOptions> {
        if !(self.gap >= 0.0) {
            bail!("--gap must be non-negative");
        }
        let time_limit = match self.time_limit {
            Some(t) if !(t > 0.0) || !t.is_finite() => bail!("--time-limit must be a positive number of seconds"),
            Some(t) => Some(Duration::from_secs_f64(t)),
            None => None,
        };
        Ok(RunOptions {
            limits: BnbLimits { gap: self.gap, max_nodes: self.max_nodes, time_limit, ..Default::default() },
            mode: match self.leaf {
                Leaf::Exact => LeafMode::Exact,
                Leaf::Relaxed => LeafMode::Relaxed,
            },
            seed: self.seed,
        })
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Validate { scenario } => match load_scenario(&scenario) {
            Ok(s) => {
                println!("{}: ok ({s})", scenario.display());
                Ok(0)
            }
            Err(e) => {
                println!("{}: {e}", scenario.display());
                Ok(1)
            }
        },
        Command::Solve { common, method, out, csv } => {
            let scenario = common.load()?;
            let run = run_method(&scenario, method, &common.options()?);
            let report = SolveReport::new(&scenario, &run);
            let json = report.to_json();
            println!("{json}");
            if let Some(path) = out {
                fs::write(&path, &json).with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(path) = csv {
                let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                write_compare_csv(file, std::slice::from_ref(&report))?;
            }
            if let Some(err) = &report.error {
                log::error!("{method}: {err}");
            }
            Ok(report.outcome.exit_code())
        }
        Command::Compare { common, methods, csv, out } => {
            let scenario = common.load()?;
            let options = common.options()?;
            let reports: Vec<SolveReport> = methods
                .iter()
                .map(|&m| {
                    log::info!("running {m}");
                    SolveReport::new(&scenario, &run_method(&scenario, m, &options))
                })
                .collect();
            match csv {
                Some(path) => {
                    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    write_compare_csv(file, &reports)?;
                }
                None => write_compare_csv(io::stdout().lock(), &reports)?,
            }
            if let Some(path) = out {
                let json = serde_json::to_string_pretty(&reports)?;
                fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(0)
        }
        Command::Generate { preset, seed, channels, out } => {
            let scenario = match preset {
                Preset::Wichita12 => fixtures::wichita_twelve_node(seed)?,
                Preset::AlternatingLink => fixtures::alternating_link(channels, seed)?,
                Preset::MinimalPair => fixtures::minimal_pair(),
            };
            save_scenario(&scenario, &out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} ({scenario})", out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NCOSPAN_LOG", "warn")).init();
    // clap exits with 2 on usage errors, which is reserved for infeasible runs.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
