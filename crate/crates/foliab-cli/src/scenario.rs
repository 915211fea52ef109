//! Scenario files: a flat JSON document with a top-level schema version.

use foliab::audit::{AuditConfig, CoverConfig};
use foliab::fixtures::{self, Fixture, FixtureDef};
use foliab::geometry::Domain;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Command {
    Identities,
    Jacobi,
    NormalChart,
    Audit,
    Partition,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Identities => "identities",
            Command::Jacobi => "jacobi",
            Command::NormalChart => "normal-chart",
            Command::Audit => "audit",
            Command::Partition => "partition",
        }
    }

    /// Whether the suite draws random samples (and therefore needs a seed).
    pub fn is_random(&self) -> bool {
        matches!(self, Command::Identities | Command::Jacobi | Command::NormalChart | Command::Partition)
    }
}

/// A built-in fixture name or an inline definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FixtureRef {
    Name(String),
    Inline(Box<FixtureDef>),
}

impl FixtureRef {
    pub fn label(&self) -> String {
        match self {
            FixtureRef::Name(n) => n.clone(),
            FixtureRef::Inline(d) => d.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChartSpec {
    /// Chart center; defaults to the center of the sampling region.
    pub center: Option<Vec<f64>>,
    pub r_transverse: f64,
    pub r_leafwise: f64,
    pub step: f64,
    /// Also report the chart-basis variants of the radial identities.
    pub include_chart_basis: bool,
}

impl Default for ChartSpec {
    fn default() -> Self {
        ChartSpec { center: None, r_transverse: 0.5, r_leafwise: 0.5, step: foliab::normal_charts::DEFAULT_CHART_STEP, include_chart_basis: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobiSpec {
    /// Parameter length of each leafwise geodesic (unit speed).
    pub length: f64,
    pub step: f64,
    /// Central-difference step of the geodesic variation.
    pub variation_step: f64,
    /// Number of solves that also get the (expensive) variation comparison.
    pub variation_samples: usize,
}

impl Default for JacobiSpec {
    fn default() -> Self {
        JacobiSpec { length: 1.0, step: 1e-2, variation_step: 1e-2, variation_samples: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverSpec {
    pub region: Option<Domain>,
    pub packing_radius: f64,
    pub config: CoverConfig,
    /// Random query points for the partition checks.
    pub partition_points: usize,
    /// Lattice nodes per axis for the gradient-uniformity check.
    pub gradient_lattice: usize,
}

impl Default for CoverSpec {
    fn default() -> Self {
        CoverSpec { region: None, packing_radius: 0.5, config: CoverConfig::default(), partition_points: 1000, gradient_lattice: 15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    /// Optional; when present it must match the command on the command line.
    #[serde(default)]
    pub command: Option<Command>,
    pub fixture: FixtureRef,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// One parameter swept over a list of values (audit only).
    #[serde(default)]
    pub sweep: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub samples: Option<usize>,
    /// Sampling box for random points; defaults to the fixture domain
    /// scaled by `region_scale` about its center.
    #[serde(default)]
    pub region: Option<Domain>,
    #[serde(default = "default_region_scale")]
    pub region_scale: f64,
    /// Tolerance overrides by key.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub chart: ChartSpec,
    #[serde(default)]
    pub jacobi: JacobiSpec,
    #[serde(default)]
    pub audit: AuditConfig,
    /// Also compute per-center chart coefficient bounds in the audit.
    #[serde(default)]
    pub audit_charts: bool,
    #[serde(default)]
    pub cover: CoverSpec,
    #[serde(default)]
    pub out: Option<String>,
}

fn default_region_scale() -> f64 {
    0.2
}

/// Scenario problems, mapped onto exit codes by the runner.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    /// Malformed document or invalid value; `key` is the offending path.
    Parse { key: String, message: String },
    /// The referenced fixture does not exist.
    FixtureMissing(String),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Parse { key, message } => write!(f, "scenario key '{key}': {message}"),
            ScenarioError::FixtureMissing(name) => write!(f, "fixture '{name}' is not registered"),
        }
    }
}

impl std::error::Error for ScenarioError {}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse { key: key.into(), message: message.into() }
}

impl Scenario {
    pub fn from_str(text: &str) -> Result<Scenario, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path.is_empty() || path == "." { "<root>".to_string() } else { path };
            invalid(key, e.into_inner().to_string())
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid("<file>", format!("{}: {e}", path.display())))?;
        Scenario::from_str(&text)
    }

    /// Structural checks that serde cannot express.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema != SCHEMA_VERSION {
            return Err(invalid("schema", format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema)));
        }
        for (k, v) in &self.tolerances {
            if !(v.is_finite() && *v > 0.0) {
                return Err(invalid(format!("tolerances.{k}"), "tolerances must be positive and finite"));
            }
        }
        if self.sweep.len() > 1 {
            return Err(invalid("sweep", "at most one swept parameter is supported"));
        }
        for (k, vals) in &self.sweep {
            if vals.is_empty() {
                return Err(invalid(format!("sweep.{k}"), "sweep needs at least one value"));
            }
        }
        if !(self.region_scale > 0.0 && self.region_scale <= 1.0) {
            return Err(invalid("region_scale", "must lie in (0, 1]"));
        }
        if let Some(r) = &self.region {
            check_box("region", r)?;
        }
        if let Some(r) = &self.cover.region {
            check_box("cover.region", r)?;
        }
        if let Some(r) = &self.audit.region {
            check_box("audit.region", r)?;
        }
        if self.samples == Some(0) {
            return Err(invalid("samples", "must be positive"));
        }
        let c = &self.chart;
        if !(c.r_transverse > 0.0 && c.r_leafwise > 0.0) {
            return Err(invalid("chart", "chart radii must be positive"));
        }
        if !(c.step > 0.0) {
            return Err(invalid("chart.step", "must be positive"));
        }
        let j = &self.jacobi;
        if !(j.length > 0.0 && j.step > 0.0 && j.step <= j.length) {
            return Err(invalid("jacobi", "need 0 < step ≤ length"));
        }
        if !(j.variation_step > 0.0 && j.variation_step <= 1e-2) {
            return Err(invalid("jacobi.variation_step", "must lie in (0, 1e-2]"));
        }
        if !(self.cover.packing_radius > 0.0) {
            return Err(invalid("cover.packing_radius", "must be positive"));
        }
        if self.cover.partition_points == 0 || self.cover.gradient_lattice < 2 {
            return Err(invalid("cover", "partition_points must be positive and gradient_lattice at least 2"));
        }
        self.audit.validate().map_err(|e| invalid("audit", e.to_string()))?;
        Ok(())
    }

    /// Seed check against the command that will run.
    pub fn require_seed(&self, command: Command) -> Result<u64, ScenarioError> {
        match (self.seed, command.is_random()) {
            (Some(s), _) => Ok(s),
            (None, false) => Ok(0),
            (None, true) => Err(invalid("seed", format!("'{}' samples randomly and needs a seed", command.as_str()))),
        }
    }

    /// Resolves the fixture with `params` plus any extra overrides.
    pub fn load_fixture(&self, extra: &BTreeMap<String, f64>) -> Result<Fixture, ScenarioError> {
        let mut overrides = self.params.clone();
        overrides.extend(extra.iter().map(|(k, v)| (k.clone(), *v)));
        let def = match &self.fixture {
            FixtureRef::Name(name) => fixtures::builtin_def(name).ok_or_else(|| ScenarioError::FixtureMissing(name.clone()))?,
            FixtureRef::Inline(def) => (**def).clone(),
        };
        let fx = Fixture::from_def(&def, &overrides).map_err(|e| invalid("fixture", e.to_string()))?;
        if let Some(r) = &self.region {
            if r.dim() != fx.field.dim {
                return Err(invalid("region", format!("box has dimension {} but the fixture has {}", r.dim(), fx.field.dim)));
            }
        }
        Ok(fx)
    }

    /// Box from which random sample points are drawn.
    pub fn sampling_region(&self, fx: &Fixture) -> Domain {
        match &self.region {
            Some(r) => r.intersect(&fx.field.domain),
            None => fx.field.domain.scaled(self.region_scale),
        }
    }
}

fn check_box(key: &str, d: &Domain) -> Result<(), ScenarioError> {
    if d.lo.len() != d.hi.len() || d.lo.is_empty() {
        return Err(invalid(key, "lo and hi must be non-empty and of equal length"));
    }
    if d.lo.iter().zip(&d.hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
        return Err(invalid(key, "need finite bounds with lo ≤ hi"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_parses() {
        let sc = Scenario::from_str(r#"{"schema": 1, "fixture": "FIX-WARP", "seed": 3}"#).unwrap();
        assert_eq!(sc.fixture, FixtureRef::Name("FIX-WARP".into()));
        assert_eq!(sc.seed, Some(3));
        assert_eq!(sc.audit, AuditConfig::default());
    }

    #[test]
    fn unknown_nested_key_is_named() {
        let err = Scenario::from_str(r#"{"schema": 1, "fixture": "FIX-WARP", "audit": {"latice": [3]}}"#).unwrap_err();
        match err {
            ScenarioError::Parse { key, message } => {
                assert!(key.starts_with("audit"), "{key}");
                assert!(message.contains("latice"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_type_is_named() {
        let err = Scenario::from_str(r#"{"schema": 1, "fixture": "FIX-WARP", "jacobi": {"length": "long"}}"#).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { ref key, .. } if key == "jacobi.length"), "{err:?}");
    }

    #[test]
    fn nonpositive_tolerance_is_rejected() {
        let err = Scenario::from_str(r#"{"schema": 1, "fixture": "FIX-WARP", "tolerances": {"radial": 0}}"#).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { ref key, .. } if key == "tolerances.radial"));
    }

    #[test]
    fn missing_fixture_is_distinguished() {
        let sc = Scenario::from_str(r#"{"schema": 1, "fixture": "FIX-NOPE"}"#).unwrap();
        assert_eq!(sc.load_fixture(&BTreeMap::new()).unwrap_err(), ScenarioError::FixtureMissing("FIX-NOPE".into()));
    }

    #[test]
    fn random_commands_need_a_seed() {
        let sc = Scenario::from_str(r#"{"schema": 1, "fixture": "FIX-WARP"}"#).unwrap();
        assert!(sc.require_seed(Command::Jacobi).is_err());
        assert_eq!(sc.require_seed(Command::Audit).unwrap(), 0);
    }
}
