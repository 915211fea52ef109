//! Scenario runner behind the `foliab` binary.
//!
//! A run resolves the fixture, executes one verification suite and
//! produces a [`RunReport`]: one row per check with its residual and
//! tolerance, plus suite-specific details and CSV tables.
//!
//! Exit codes: 0 all checks pass, 1 some check fails, 2 malformed scenario
//! or arguments, 3 unknown fixture, 4 numerical or I/O failure.

pub mod report;
pub mod scenario;
pub mod suites;

use report::{config_hash, Metadata, RunReport, Summary};
use scenario::{Command, Scenario, ScenarioError};
use serde::Serialize;
use std::fmt;
use std::path::{Path, PathBuf};
use suites::{SuiteError, Tolerances};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECKS_FAILED: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_FIXTURE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const DEFAULT_OUT_DIR: &str = "foliab-out";

#[derive(Debug)]
pub enum RunError {
    Scenario(ScenarioError),
    Numerical(foliab::Error),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Scenario(ScenarioError::Parse { .. }) => EXIT_PARSE,
            RunError::Scenario(ScenarioError::FixtureMissing(_)) => EXIT_FIXTURE,
            RunError::Numerical(_) | RunError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Scenario(e) => write!(f, "{e}"),
            RunError::Numerical(e) => write!(f, "numerical failure: {e}"),
            RunError::Io(e) => write!(f, "could not write reports: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ScenarioError> for RunError {
    fn from(e: ScenarioError) -> Self {
        RunError::Scenario(e)
    }
}

impl From<SuiteError> for RunError {
    fn from(e: SuiteError) -> Self {
        match e {
            SuiteError::Scenario(s) => RunError::Scenario(s),
            SuiteError::Numerical(n) => RunError::Numerical(n),
        }
    }
}

/// Command-line overrides applied on top of the scenario.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol_scale: Option<f64>,
}

/// Everything that determines a run; its hash goes into the report.
#[derive(Serialize)]
struct EffectiveConfig<'a> {
    version: &'static str,
    command: Command,
    tol_scale: f64,
    scenario: &'a Scenario,
}

/// Runs one suite and assembles the report (nothing is written).
pub fn execute(command: Command, mut scenario: Scenario, ov: &Overrides) -> Result<RunReport, RunError> {
    if let Some(c) = scenario.command {
        if c != command {
            return Err(ScenarioError::Parse {
                key: "command".into(),
                message: format!("scenario is for '{}' but '{}' was requested", c.as_str(), command.as_str()),
            }
            .into());
        }
    }
    let tol_scale = ov.tol_scale.unwrap_or(1.0);
    if !(tol_scale.is_finite() && tol_scale > 0.0) {
        return Err(ScenarioError::Parse { key: "--tol-scale".into(), message: "must be positive and finite".into() }.into());
    }
    if let Some(s) = ov.seed {
        scenario.seed = Some(s);
    }
    let seed = scenario.require_seed(command)?;
    let tol = Tolerances::resolve(command, &scenario.tolerances, tol_scale)?;
    if !scenario.sweep.is_empty() && command != Command::Audit {
        return Err(ScenarioError::Parse { key: "sweep".into(), message: "parameter sweeps are only supported by 'audit'".into() }.into());
    }
    let fx = scenario.load_fixture(&Default::default())?;
    log::info!("running {} on {}", command.as_str(), fx.name);

    let out = match command {
        Command::Identities => suites::identities(&scenario, &fx, seed, &tol)?,
        Command::Jacobi => suites::jacobi(&scenario, &fx, seed, &tol)?,
        Command::NormalChart => suites::normal_chart(&scenario, &fx, seed, &tol)?,
        Command::Audit => suites::audit(&scenario, &fx, seed, &tol)?,
        Command::Partition => suites::partition(&scenario, &fx, seed, &tol)?,
    };

    let version = env!("CARGO_PKG_VERSION");
    let hash = config_hash(&EffectiveConfig { version, command, tol_scale, scenario: &scenario });
    let passed = out.checks.iter().filter(|c| c.pass).count();
    Ok(RunReport {
        metadata: Metadata { tool: "foliab".into(), version: version.into(), config_hash: hash },
        command: command.as_str().into(),
        fixture: out.fixture,
        seed,
        summary: Summary { total: out.checks.len(), passed, failed: out.checks.len() - passed },
        checks: out.checks,
        details: out.details,
        tables: out.tables,
    })
}

/// Parses the scenario, runs it, writes the reports and returns the exit
/// code. Diagnostics go to stderr, the check summary to stdout.
pub fn run(command: Command, scenario_path: &Path, out: Option<&Path>, ov: &Overrides) -> i32 {
    let result = (|| -> Result<RunReport, RunError> {
        let sc = Scenario::from_file(scenario_path)?;
        let dir: PathBuf = match (out, &sc.out) {
            (Some(d), _) => d.to_path_buf(),
            (None, Some(d)) => PathBuf::from(d),
            (None, None) => PathBuf::from(DEFAULT_OUT_DIR),
        };
        let report = execute(command, sc, ov)?;
        report.write(&dir).map_err(RunError::Io)?;
        Ok(report)
    })();
    match result {
        Ok(report) => {
            print!("{}", render_summary(&report));
            if report.all_pass() {
                EXIT_OK
            } else {
                EXIT_CHECKS_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// One line per check, then a totals line.
pub fn render_summary(r: &RunReport) -> String {
    let width = r.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in &r.checks {
        s.push_str(&format!(
            "{} {:<width$}  residual {:>10.3e}  tol {:>9.2e}\n",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.residual,
            c.tolerance
        ));
    }
    s.push_str(&format!("{} on {}: {}/{} checks passed\n", r.command, r.fixture, r.summary.passed, r.summary.total));
    s
}

/// Rows of `list-fixtures`.
pub fn fixture_listing() -> String {
    let rows = foliab::fixtures::list_fixtures();
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut s = format!("{:<width$}  n'  n''  π    description\n", "name");
    for r in rows {
        s.push_str(&format!(
            "{:<width$}  {:>2}  {:>3}  {:<3}  {}\n",
            r.name,
            r.n_transverse,
            r.n_leafwise,
            if r.has_submersion { "yes" } else { "no" },
            r.description
        ));
    }
    s
}
