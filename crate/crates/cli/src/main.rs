use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use erg_cli::commands;
use erg_cli::scenario::Overrides;
use erg_cli::{exit, CliError};
use erg_core::stability::Variant;

#[derive(Parser)]
#[command(name = "erg", version, about = "Explicit reference governor for input-delay systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Output path (`-` for stdout)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the simulation step [s]
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Override the simulated duration [s]
    #[arg(long, global = true)]
    duration: Option<f64>,
    /// Seed for certificate searches
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress summaries
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or `preset:<name>`) and write its trace as CSV
    Simulate { scenario: String },
    /// Run one of the built-in flow-control experiments
    Reproduce {
        /// norg, erg1..erg4, aggressive-norg, aggressive-erg1, aggressive-erg4
        name: String,
    },
    /// Sweep the feedback gain and report where each LMI stops being feasible
    Lmi {
        scenario: String,
        /// razumikhin, krasovskii_q, krasovskii_r or all
        #[arg(long, default_value = "all")]
        variant: String,
        #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
        k_min: f64,
        #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
        k_max: f64,
        #[arg(long, default_value_t = 61)]
        steps: usize,
    },
    /// Run a scenario over a grid of values of one numeric field
    Sweep {
        scenario: String,
        /// Dotted path into the scenario, e.g. `erg.kappa2` or `system.A.0.0`
        #[arg(long)]
        param: String,
        /// Comma-separated values
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 0..=1)]
        values: Vec<f64>,
    },
    /// Search a stability certificate for the scenario's loop
    Synthesize {
        scenario: String,
        #[arg(long)]
        variant: String,
        /// Maximize the constraint-admissible level set
        #[arg(long)]
        volume: bool,
    },
}

fn parse_variants(s: &str) -> Result<Vec<Variant>, CliError> {
    if s == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    s.split(',')
        .map(|v| Variant::from_name(v.trim()).ok_or_else(|| CliError::Usage(format!("unknown variant `{v}`"))))
        .collect()
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let c = &cli.common;
    let ov = Overrides {
        dt: c.dt,
        duration: c.duration,
        seed: c.seed,
    };
    match cli.command {
        Command::Simulate { scenario } => commands::simulate(&scenario, c.out.as_deref(), &ov, c.quiet),
        Command::Reproduce { name } => commands::reproduce(&name, c.out.as_deref(), &ov, c.quiet),
        Command::Lmi {
            scenario,
            variant,
            k_min,
            k_max,
            steps,
        } => {
            let sc = commands::load_scenario(&scenario)?;
            let report = commands::lmi(&sc, &scenario, &parse_variants(&variant)?, k_min, k_max, steps, c.seed.unwrap_or(0))?;
            print!("{report}");
            Ok(exit::OK)
        }
        Command::Sweep { scenario, param, values } => {
            let sc = commands::load_scenario(&scenario)?;
            let rows = commands::sweep(&sc, &scenario, &param, &values, &ov, commands::thread_cap())?;
            match c.out.as_deref() {
                Some(p) if p.as_os_str() != "-" => {
                    let f = std::fs::File::create(p).map_err(|e| CliError::Io {
                        path: p.display().to_string(),
                        source: e,
                    })?;
                    commands::write_sweep(std::io::BufWriter::new(f), &rows)?;
                }
                _ => commands::write_sweep(std::io::stdout().lock(), &rows)?,
            }
            Ok(exit::OK)
        }
        Command::Synthesize {
            scenario,
            variant,
            volume,
        } => {
            let sc = commands::load_scenario(&scenario)?;
            let v = Variant::from_name(&variant).ok_or_else(|| CliError::Usage(format!("unknown variant `{variant}`")))?;
            let (spec, margin) = commands::synthesize_certificate(&sc, &scenario, v, c.seed.unwrap_or(0), volume)?;
            println!("{}", serde_json::to_string_pretty(&spec).expect("certificate serializes"));
            if !c.quiet {
                eprintln!("LMI margin {margin:.3e}");
            }
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::ERROR as u8 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::ERROR as u8)
        }
    }
}
