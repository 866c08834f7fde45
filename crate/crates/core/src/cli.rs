//! Command-line front end. Exit codes: 0 success, 1 audit failure,
//! 2 usage or configuration error, 3 solver failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::convergence::cauchy_study;
use crate::energy::{compute_domain_constants, TrajectoryReport};
use crate::error::{Error, Result};
use crate::io::{write_ledger_file, write_state, RunLock};
use crate::momentum::check_h4;
use crate::scenario::Scenario;
use crate::time_loop::{audit_run, run as run_scenario, RunFailure, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUDIT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "ksmix",
    version,
    about = "Variable-density flow with mass diffusion: runs, audits, refinement studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its ledger and snapshots.
    Run(Common),
    /// Run a scenario and audit every binding inequality.
    Verify(Common),
    /// Refinement study over a list of time steps.
    Refine {
        #[command(flatten)]
        common: Common,
        /// Comma-separated time steps, at least three.
        #[arg(long, value_delimiter = ',', required = true)]
        tau_list: Vec<f64>,
    },
    /// Print domain constants and the coercivity margin.
    Constants(Common),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory, overriding `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides density, momentum and divergence tolerances.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    snapshot_every: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<Scenario> {
        let text = fs::read_to_string(&self.scenario)
            .map_err(|e| Error::invalid(format!("cannot read {}: {e}", self.scenario.display())))?;
        let mut s = Scenario::parse(&text)?;
        if let Some(out) = &self.out {
            s.output.directory = out.clone();
        }
        if let Some(t) = self.tol {
            s.solver.density_tol = t;
            s.solver.momentum_tol = t;
            s.solver.div_tol = t;
        }
        if let Some(k) = self.snapshot_every {
            s.snapshot_every = k;
        }
        s.validate()?;
        Ok(s)
    }
}

fn failure_code(e: &Error) -> i32 {
    match e {
        Error::Solver(_) | Error::DensityRange(_) | Error::BoundaryFlux(_) => EXIT_SOLVER,
        _ => EXIT_USAGE,
    }
}

fn usage_error(e: &Error) -> i32 {
    eprintln!("error: {e}");
    EXIT_USAGE
}

/// Writes the scenario echo, ledger, summary and snapshots of a (possibly partial) run.
fn write_outputs(dir: &Path, scenario: &Scenario, traj: &Trajectory) -> Result<()> {
    fs::write(dir.join("scenario.cfg"), scenario.to_text())?;
    write_ledger_file(&traj.ledger, &dir.join("ledger.csv"))?;
    let last = traj.steps();
    for s in &traj.states {
        let due =
            s.step == 0 || s.step == last || (scenario.snapshot_every > 0 && s.step % scenario.snapshot_every == 0);
        if due {
            write_state(dir, s, &scenario.output.formats)?;
        }
    }
    let mut f = fs::File::create(dir.join("summary.txt"))?;
    writeln!(f, "fingerprint: {}", traj.fingerprint)?;
    writeln!(f, "steps: {}", traj.steps())?;
    writeln!(f, "tau: {:?}", traj.tau)?;
    writeln!(f, "mode: {}", traj.h4.mode.as_str())?;
    writeln!(f, "alpha1: {:?}", traj.h4.alpha1)?;
    writeln!(f, "alpha2: {:?}", traj.h4.alpha2)?;
    writeln!(f, "lambda1_h: {:?}", traj.constants.lambda1)?;
    writeln!(f, "c_omega: {:?} ({})", traj.constants.c_omega, traj.constants.c_omega_source.label())?;
    writeln!(f, "initial_divergence_l2: {:e}", traj.ledger.rows[0].res_div)?;
    Ok(())
}

fn print_report(out: &mut impl Write, report: &TrajectoryReport) -> std::io::Result<()> {
    writeln!(out, "mode: {}", report.mode.as_str())?;
    for c in &report.criteria {
        let status = match (c.passed(), c.binding) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "info",
        };
        let first = c.first_violation.map_or_else(String::new, |s| format!(" first_violation_step={s}"));
        writeln!(
            out,
            "{status} {:<24} binding={} evaluated={} violations={} worst_relative_slack={:.3e}{first}",
            c.name, c.binding, c.evaluated, c.violations, c.worst_relative_slack
        )?;
    }
    writeln!(out, "overall: {}", if report.passed() { "PASS" } else { "FAIL" })
}

/// Runs with the output lock held; solver failures still write partial outputs.
fn execute(scenario: &Scenario) -> std::result::Result<Trajectory, i32> {
    let dir = scenario.output.directory.clone();
    let _lock = RunLock::acquire(&dir).map_err(|e| usage_error(&e))?;
    match run_scenario(scenario) {
        Ok(t) => {
            write_outputs(&dir, scenario, &t).map_err(|e| usage_error(&e))?;
            Ok(t)
        }
        Err(RunFailure { error, partial }) => {
            eprintln!("error: {error}");
            match partial {
                Some(p) => {
                    if let Err(e) = write_outputs(&dir, scenario, &p) {
                        eprintln!("error: could not write partial outputs: {e}");
                    } else {
                        eprintln!("partial outputs ({} steps) kept in {}", p.steps(), dir.display());
                    }
                    Err(EXIT_SOLVER)
                }
                None => Err(failure_code(&error)),
            }
        }
    }
}

fn constants(scenario: &Scenario) -> Result<String> {
    let c = compute_domain_constants(&scenario.grid, scenario.solver.c_omega)?;
    let h = check_h4(&scenario.physics, &c)?;
    let mut o = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(o, "lambda1_h: {:?}", c.lambda1);
    let _ = writeln!(o, "a_p: {:?}", c.a_p);
    let _ = writeln!(o, "c_omega: {:?} ({})", c.c_omega, c.c_omega_source.label());
    let _ = writeln!(o, "c_tilde: {:?}", c.c_tilde);
    let _ = writeln!(o, "mu_min: {:?}", h.mu_min);
    let _ = writeln!(o, "mu_prime_max: {:?}", h.mu_prime_max);
    let _ = writeln!(o, "kappa: {:?}", h.kappa);
    let _ = writeln!(o, "alpha1: {:?}", h.alpha1);
    let _ = writeln!(o, "alpha2: {:?}", h.alpha2);
    let _ = writeln!(o, "mode: {}", h.mode.as_str());
    Ok(o)
}

/// Parses `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout();
    match cli.command {
        Command::Run(common) => {
            let s = match common.load() {
                Ok(s) => s,
                Err(e) => return usage_error(&e),
            };
            match execute(&s) {
                Ok(t) => {
                    println!("completed {} steps; outputs in {}", t.steps(), s.output.directory.display());
                    println!("fingerprint: {}", t.fingerprint);
                    EXIT_OK
                }
                Err(code) => code,
            }
        }
        Command::Verify(common) => {
            let s = match common.load() {
                Ok(s) => s,
                Err(e) => return usage_error(&e),
            };
            let t = match execute(&s) {
                Ok(t) => t,
                Err(code) => return code,
            };
            match audit_run(&t) {
                Ok(report) => {
                    let _ = print_report(&mut stdout, &report);
                    if report.passed() {
                        EXIT_OK
                    } else {
                        EXIT_AUDIT
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_AUDIT
                }
            }
        }
        Command::Refine { common, tau_list } => {
            if tau_list.len() < 3 {
                eprintln!("error: --tau-list needs at least 3 time steps, got {}", tau_list.len());
                return EXIT_USAGE;
            }
            let s = match common.load() {
                Ok(s) => s,
                Err(e) => return usage_error(&e),
            };
            let dir = s.output.directory.clone();
            let _lock = match RunLock::acquire(&dir) {
                Ok(l) => l,
                Err(e) => return usage_error(&e),
            };
            match cauchy_study(&s, &tau_list, &[1]) {
                Ok(report) => {
                    let csv = report.to_csv();
                    if let Err(e) = fs::write(dir.join("refinement.csv"), &csv) {
                        return usage_error(&e.into());
                    }
                    print!("{csv}");
                    EXIT_OK
                }
                Err(RunFailure { error, partial }) => {
                    eprintln!("error: {error}");
                    if partial.is_some() {
                        EXIT_SOLVER
                    } else {
                        failure_code(&error)
                    }
                }
            }
        }
        Command::Constants(common) => {
            let s = match common.load() {
                Ok(s) => s,
                Err(e) => return usage_error(&e),
            };
            match constants(&s) {
                Ok(text) => {
                    print!("{text}");
                    EXIT_OK
                }
                Err(e) => usage_error(&e),
            }
        }
    }
}
