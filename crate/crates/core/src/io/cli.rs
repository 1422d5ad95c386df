//! Command-line interface: study execution, single trials, deterministic
//! margins, validation, and stats recomputation.
//!
//! Exit codes: 0 success, 1 input error, 2 runtime fault, 3 study error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::{build_setup, load_case, load_scenario, LoadedScenario, ScenarioFile};
use crate::integrator::{run_trial, TrajectoryRow, TrialOutcome};
use crate::montecarlo::{
    histogram, run_study, stats_from_margins, MarginStats, RecordCause, StudyError, TrialRecord,
};

#[derive(Parser)]
#[command(
    name = "dynmargin",
    version,
    about = "Stochastic dynamic voltage-stability margin simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full Monte Carlo margin study and write its output files.
    Run(RunArgs),
    /// Run one stochastic trial and dump its trajectory.
    Single(SingleArgs),
    /// Compute the deterministic (noise-free) margin.
    Deterministic(CommonArgs),
    /// Validate a case and/or scenario without running anything.
    Validate(ValidateArgs),
    /// Recompute statistics from an existing margins.csv.
    Stats(StatsArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Case file (JSON); with --scenario it overrides the referenced case.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Integration step override (s).
    #[arg(long)]
    dt: Option<f64>,
    /// Base seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of Monte Carlo trials override.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads (0 = automatic). Results do not depend on this.
    #[arg(long, default_value_t = 0)]
    parallelism: usize,
    /// Also write trajectory_<trial>.csv for every trial.
    #[arg(long, default_value_t = false)]
    dump_trajectories: bool,
}

#[derive(Args)]
struct SingleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Which trial index to run (selects the random streams).
    #[arg(long, default_value_t = 0)]
    trial: u64,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    case: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Directory holding margins.csv; stats.json is rewritten there.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

/// Runs the CLI against the given argv and returns the process exit code.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    match cli.command {
        Command::Run(args) => run_command(args),
        Command::Single(args) => single_command(args),
        Command::Deterministic(args) => deterministic_command(args),
        Command::Validate(args) => validate_command(args),
        Command::Stats(args) => stats_command(args),
    }
}

/// Loads the scenario/case combination the common flags describe.
fn load_inputs(common: &CommonArgs) -> Result<LoadedScenario, i32> {
    match (&common.scenario, &common.case) {
        (Some(scenario_path), case_override) => {
            let mut loaded = match load_scenario(scenario_path) {
                Ok(l) => l,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Err(1);
                }
            };
            if let Some(case_path) = case_override {
                match load_case(case_path) {
                    Ok(case) => {
                        loaded.case = case;
                        loaded.case_path = case_path.clone();
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        return Err(1);
                    }
                }
            }
            Ok(loaded)
        }
        (None, Some(case_path)) => match load_case(case_path) {
            Ok(case) => Ok(LoadedScenario {
                scenario: ScenarioFile::default_for_case(case_path.display().to_string()),
                case,
                case_path: case_path.clone(),
            }),
            Err(e) => {
                eprintln!("error: {e}");
                Err(1)
            }
        },
        (None, None) => {
            eprintln!("error: provide --scenario and/or --case");
            Err(1)
        }
    }
}

fn apply_common_overrides(loaded: &mut LoadedScenario, common: &CommonArgs) {
    if let Some(dt) = common.dt {
        loaded.scenario.integration.dt = dt;
    }
    if let Some(seed) = common.seed {
        loaded.scenario.study.base_seed = seed;
    }
}

fn run_command(args: RunArgs) -> i32 {
    let mut loaded = match load_inputs(&args.common) {
        Ok(l) => l,
        Err(code) => return code,
    };
    apply_common_overrides(&mut loaded, &args.common);
    if let Some(n) = args.trials {
        loaded.scenario.study.n_trials = n;
    }
    let (setup, mut study) = build_setup(&loaded);
    study.parallelism = args.parallelism;
    study.dump_trajectories = args.dump_trajectories;

    let out_dir = &args.common.out_dir;
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return 1;
    }
    let sink = |trial: u64, rows: &[TrajectoryRow]| {
        let path = out_dir.join(format!("trajectory_{trial}.csv"));
        if let Err(e) = super::write_trajectory_csv(&path, &setup, rows) {
            eprintln!("warning: cannot write {}: {e}", path.display());
        }
    };
    let output = match run_study(&setup, &study, Some(&sink)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                StudyError::Deterministic(_) => 2,
                _ => 3,
            };
        }
    };

    let margins_path = out_dir.join("margins.csv");
    let stats_path = out_dir.join("stats.json");
    let histo_path = out_dir.join("histogram.csv");
    let bins = histogram(&output.records, loaded.scenario.study.histogram_bin_mw);
    if let Err(e) = super::write_margins_csv(&margins_path, &output.records)
        .and_then(|_| super::write_stats_json(&stats_path, &output.stats))
        .and_then(|_| super::write_histogram_csv(&histo_path, &bins))
    {
        eprintln!("error: writing outputs: {e}");
        return 2;
    }
    print_stats(&output.stats);
    println!(
        "wrote {}, {}, {}",
        margins_path.display(),
        stats_path.display(),
        histo_path.display()
    );
    0
}

fn single_command(args: SingleArgs) -> i32 {
    let mut loaded = match load_inputs(&args.common) {
        Ok(l) => l,
        Err(code) => return code,
    };
    apply_common_overrides(&mut loaded, &args.common);
    let (setup, study) = build_setup(&loaded);
    let out_dir = &args.common.out_dir;
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return 1;
    }
    let result = match run_trial(&setup, study.base_seed, args.trial, true) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: trial fault: {e}");
            return 2;
        }
    };
    let path = out_dir.join(format!("trajectory_{}.csv", args.trial));
    if let Some(rows) = &result.trajectory {
        if let Err(e) = super::write_trajectory_csv(&path, &setup, rows) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return 2;
        }
    }
    match &result.outcome {
        TrialOutcome::Collapse(ev) => println!(
            "trial {}: margin {:.2} MW (z* = {:.4}, t = {:.2} s, cause {})",
            args.trial, ev.margin_mw, ev.z_star, ev.t_collapse, ev.cause
        ),
        TrialOutcome::NoCollapse { t_end } => {
            println!("trial {}: no collapse within {t_end} s", args.trial)
        }
    }
    println!("wrote {}", path.display());
    0
}

fn deterministic_command(args: CommonArgs) -> i32 {
    let mut loaded = match load_inputs(&args) {
        Ok(l) => l,
        Err(code) => return code,
    };
    apply_common_overrides(&mut loaded, &args);
    let (setup, study) = build_setup(&loaded);
    let det = setup.deterministic();
    let result = match run_trial(&det, study.base_seed, 0, false) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: trial fault: {e}");
            return 2;
        }
    };
    match &result.outcome {
        TrialOutcome::Collapse(ev) => {
            println!(
                "deterministic margin: {:.2} MW (z* = {:.4}, collapse at t = {:.2} s, cause {})",
                ev.margin_mw, ev.z_star, ev.t_collapse, ev.cause
            );
            0
        }
        TrialOutcome::NoCollapse { t_end } => {
            eprintln!("no collapse within {t_end} s; raise max_time or the ramp rate");
            3
        }
    }
}

fn validate_command(args: ValidateArgs) -> i32 {
    match (&args.scenario, &args.case) {
        (Some(path), _) => match load_scenario(path) {
            Ok(loaded) => {
                println!(
                    "ok: scenario {} (case {}: {} buses, {} branches, {} recovery loads, {} renewables)",
                    path.display(),
                    loaded.case.network.name,
                    loaded.case.network.n_buses(),
                    loaded.case.network.branches.len(),
                    loaded.case.devices.erl_loads.len(),
                    loaded.case.devices.renewables.len(),
                );
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
        (None, Some(path)) => match load_case(path) {
            Ok(loaded) => {
                println!(
                    "ok: case {} ({} buses, {} branches, {} recovery loads, {} LTCs, {} renewables)",
                    loaded.network.name,
                    loaded.network.n_buses(),
                    loaded.network.branches.len(),
                    loaded.devices.erl_loads.len(),
                    loaded.devices.ltcs.len(),
                    loaded.devices.renewables.len(),
                );
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
        (None, None) => {
            eprintln!("error: provide --scenario and/or --case");
            1
        }
    }
}

fn stats_command(args: StatsArgs) -> i32 {
    let margins_path = args.out_dir.join("margins.csv");
    let text = match std::fs::read_to_string(&margins_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", margins_path.display());
            return 1;
        }
    };
    let records = match super::parse_margins_csv(&text) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", margins_path.display());
            return 1;
        }
    };
    let stats = recompute_stats(&records);
    let stats_path = args.out_dir.join("stats.json");
    if let Err(e) = super::write_stats_json(&stats_path, &stats) {
        eprintln!("error: writing {}: {e}", stats_path.display());
        return 2;
    }
    print_stats(&stats);
    println!("wrote {}", stats_path.display());
    0
}

/// Statistics from records alone; the deterministic margin is not
/// recoverable from margins.csv and is reported as absent.
pub fn recompute_stats(records: &[TrialRecord]) -> MarginStats {
    let margins: Vec<f64> = records.iter().filter_map(|r| r.margin_mw).collect();
    let n_no_collapse = records
        .iter()
        .filter(|r| r.cause == RecordCause::NoCollapse)
        .count() as u64;
    let n_faults = records
        .iter()
        .filter(|r| r.cause == RecordCause::Fault)
        .count() as u64;
    stats_from_margins(&margins, records.len() as u64, n_no_collapse, n_faults, None)
}

fn print_stats(stats: &MarginStats) {
    if let Some(det) = stats.deterministic_margin_mw {
        println!("deterministic margin: {det:.2} MW");
    }
    println!(
        "trials: {} ({} collapsed, {} no-collapse, {} faults)",
        stats.n_trials, stats.n_collapsed, stats.n_no_collapse, stats.n_faults
    );
    println!(
        "margin mean {:.2} MW, std {:.2} MW, d90 (p10) {:.2} MW",
        stats.mean_mw, stats.std_mw, stats.d90_mw
    );
}

/// Writes `margins.csv`: one row per trial in trial order.
pub fn write_margins_csv_to(w: &mut impl std::io::Write, records: &[TrialRecord]) -> std::io::Result<()> {
    writeln!(w, "trial_id,seed,margin_mw,cause,t_collapse,floor_events")?;
    for r in records {
        let margin = r.margin_mw.map(|m| m.to_string()).unwrap_or_default();
        let t = r.t_collapse.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.trial, r.base_seed, margin, r.cause, t, r.floor_events
        )?;
    }
    Ok(())
}

/// Parses `margins.csv` back into records; errors name the line.
pub fn parse_margins_csv_text(text: &str) -> Result<Vec<TrialRecord>, String> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or("empty file")?;
    if header.trim() != "trial_id,seed,margin_mw,cause,t_collapse,floor_events" {
        return Err(format!("line 1: unexpected header '{}'", header.trim()));
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(format!("line {}: expected 6 fields, got {}", i + 1, fields.len()));
        }
        let parse_u64 = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|e| format!("line {}: {what}: {e}", i + 1))
        };
        let parse_opt_f64 = |s: &str, what: &str| -> Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| format!("line {}: {what}: {e}", i + 1))
            }
        };
        let margin_mw = parse_opt_f64(fields[2], "margin_mw")?;
        if let Some(m) = margin_mw {
            if !m.is_finite() {
                return Err(format!("line {}: margin_mw must be finite", i + 1));
            }
        }
        let t_collapse = parse_opt_f64(fields[4], "t_collapse")?;
        if let Some(t) = t_collapse {
            if !t.is_finite() {
                return Err(format!("line {}: t_collapse must be finite", i + 1));
            }
        }
        let cause: RecordCause = fields[3]
            .parse()
            .map_err(|e| format!("line {}: {e}", i + 1))?;
        if cause == RecordCause::NoCollapse && margin_mw.is_some() {
            return Err(format!("line {}: no-collapse rows cannot carry a margin", i + 1));
        }
        records.push(TrialRecord {
            trial: parse_u64(fields[0], "trial_id")?,
            base_seed: parse_u64(fields[1], "seed")?,
            margin_mw,
            cause,
            t_collapse,
            floor_events: parse_u64(fields[5], "floor_events")?,
        });
    }
    Ok(records)
}
