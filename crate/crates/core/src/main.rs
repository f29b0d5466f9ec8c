use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pathspin::apparatus::ApparatusSpec;
use pathspin::nri::Constraint;
use pathspin::scenario::{
    default_sweep_grid, enumerate_hv_table, load_apparatus, nosignal_check, optimize_scenario,
    run_scenario_spec, sweep_wing1_angle, Overrides, SEED_ENV,
};
use pathspin::shots::write_counts_csv;
use pathspin::states::Wing1Setting;
use pathspin::Error;

const EXIT_PARSE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Parser, Debug)]
#[command(name = "pathspin", version, about = "Path-spin noncontextuality tests on EPR-Bohm subensembles")]
struct Cli {
    #[arg(long, value_enum, default_value = "json", global = true)]
    format: Format,

    /// Seed used when neither --seed nor the apparatus file sets one.
    #[arg(long, env = SEED_ENV, global = true, hide_env_values = true)]
    default_seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Apparatus description file.
    file: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shots: Option<u64>,
    /// Wing-1 setting: A, B or angle:<radians>.
    #[arg(long)]
    wing1: Option<Wing1Setting>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact, sampled and optimized NRI values for each subensemble.
    Run(Common),
    /// Compare wing-2 statistics under wing-1 settings A and B.
    Nosignal(Common),
    /// Sweep the wing-1 direction through the x-z plane.
    Sweep {
        file: PathBuf,
        /// Number of evenly spaced angles in [0, π].
        #[arg(long, default_value_t = 19)]
        points: usize,
        /// Explicit comma-separated angles in radians.
        #[arg(long, value_delimiter = ',', conflicts_with = "points")]
        angles: Option<Vec<f64>>,
    },
    /// List the 16 noncontextual value assignments.
    EnumerateHv,
    /// Optimize measurement settings under each constraint family.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        constraint: Option<Vec<Constraint>>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Io(_) => EXIT_PARSE,
        Error::Validation { .. } | Error::BeamSplitterNorm { .. } | Error::NotUnit { .. } => {
            EXIT_VALIDATION
        }
        _ => EXIT_NUMERICAL,
    }
}

fn emit_json<T: Serialize>(out: &mut impl Write, v: &T) -> pathspin::Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Numerical(e.to_string()))?;
    writeln!(out, "{s}")?;
    Ok(())
}

fn emit_csv<T: Serialize>(out: &mut impl Write, rows: &[T]) -> pathspin::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Numerical(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn load(c: &Common, default_seed: Option<u64>) -> pathspin::Result<(ApparatusSpec, Overrides)> {
    let spec = load_apparatus(&c.file)?;
    let o = Overrides {
        seed: c.seed,
        shots: c.shots,
        wing1: c.wing1,
        default_seed,
    };
    Ok((spec, o))
}

#[derive(Serialize)]
struct OptimizeRow {
    outcome: String,
    constraint: String,
    s: f64,
    theta1: f64,
    theta2: f64,
    chi1: f64,
    chi2: f64,
    concurrence: f64,
    tsirelson_max: f64,
}

fn execute(cli: &Cli, out: &mut impl Write) -> pathspin::Result<()> {
    match &cli.command {
        Command::Run(c) => {
            let (spec, o) = load(c, cli.default_seed)?;
            let report = run_scenario_spec(&spec, &o)?;
            match cli.format {
                Format::Json => emit_json(out, &report),
                Format::Csv => write_counts_csv(out, &report.count_records()),
            }
        }
        Command::Nosignal(c) => {
            let (spec, o) = load(c, cli.default_seed)?;
            let report = nosignal_check(&spec, &o)?;
            match cli.format {
                Format::Json => emit_json(out, &report)?,
                Format::Csv => {
                    let s = &report.sampled;
                    let rows = [
                        ("rho_residual", report.rho_residual),
                        ("detector_residual", report.detector_residual),
                        ("sampled_max_abs_diff", s.max_abs_diff),
                        ("sampled_max_z", s.max_z),
                    ];
                    writeln!(out, "quantity,value")?;
                    for (k, v) in rows {
                        writeln!(out, "{k},{v}")?;
                    }
                }
            }
            if !report.exact_ok() {
                return Err(Error::Numerical(format!(
                    "wing-2 statistics depend on the wing-1 setting (ρ residual {}, detector residual {})",
                    report.rho_residual, report.detector_residual
                )));
            }
            if !report.sampled.within_5_sigma {
                return Err(Error::Numerical(format!(
                    "sampled no-signaling residual at {:.2} standard errors",
                    report.sampled.max_z
                )));
            }
            Ok(())
        }
        Command::Sweep { file, points, angles } => {
            let spec = load_apparatus(file)?;
            let grid = angles.clone().unwrap_or_else(|| default_sweep_grid(*points));
            let rows = sweep_wing1_angle(&spec, &grid)?;
            match cli.format {
                Format::Json => emit_json(out, &rows),
                Format::Csv => emit_csv(out, &rows),
            }
        }
        Command::EnumerateHv => {
            let table = enumerate_hv_table()?;
            match cli.format {
                Format::Json => emit_json(out, &table)?,
                Format::Csv => {
                    emit_csv(out, &table.rows)?;
                    eprintln!("{}", table.summary());
                }
            }
            Ok(())
        }
        Command::Optimize { common, constraint } => {
            let (spec, o) = load(common, cli.default_seed)?;
            let constraints = constraint.clone().unwrap_or_else(|| Constraint::ALL.to_vec());
            let report = optimize_scenario(&spec, &o, &constraints)?;
            match cli.format {
                Format::Json => emit_json(out, &report),
                Format::Csv => {
                    let rows: Vec<_> = report
                        .entries
                        .iter()
                        .map(|e| OptimizeRow {
                            outcome: e.outcome.to_string(),
                            constraint: e.optimum.constraint.to_string(),
                            s: e.optimum.s,
                            theta1: e.optimum.angles.theta1,
                            theta2: e.optimum.angles.theta2,
                            chi1: e.optimum.angles.chi1,
                            chi2: e.optimum.angles.chi2,
                            concurrence: e.concurrence,
                            tsirelson_max: e.tsirelson_max,
                        })
                        .collect();
                    emit_csv(out, &rows)
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_PARSE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(&cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
