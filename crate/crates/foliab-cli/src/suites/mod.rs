//! Verification suites. Each suite turns a scenario into check rows,
//! structured details and CSV tables.

mod audit;
mod identities;
mod jacobi;
mod normal_chart;
mod partition;

use crate::report::{CheckRow, Table};
use crate::scenario::{Command, Scenario, ScenarioError};
use foliab::fixtures::Fixture;
use foliab::geometry::{vertical_projector, Domain, MetricField};
use foliab::linalg;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub use audit::run as audit;
pub use identities::run as identities;
pub use jacobi::run as jacobi;
pub use normal_chart::run as normal_chart;
pub use partition::run as partition;

#[derive(Debug)]
pub enum SuiteError {
    Scenario(ScenarioError),
    Numerical(foliab::Error),
}

impl From<ScenarioError> for SuiteError {
    fn from(e: ScenarioError) -> Self {
        SuiteError::Scenario(e)
    }
}

impl From<foliab::Error> for SuiteError {
    fn from(e: foliab::Error) -> Self {
        SuiteError::Numerical(e)
    }
}

pub type SuiteResult<T> = std::result::Result<T, SuiteError>;

/// What a suite hands back to the runner.
#[derive(Debug, Clone)]
pub struct SuiteOutput {
    pub fixture: String,
    pub checks: Vec<CheckRow>,
    pub details: serde_json::Value,
    pub tables: Vec<Table>,
}

/// Default tolerances per suite, as `(key, value, meaning)`.
pub fn tolerance_defaults(command: Command) -> &'static [(&'static str, f64, &'static str)] {
    match command {
        Command::Identities => identities::TOLERANCES,
        Command::Jacobi => jacobi::TOLERANCES,
        Command::NormalChart => normal_chart::TOLERANCES,
        Command::Audit => audit::TOLERANCES,
        Command::Partition => partition::TOLERANCES,
    }
}

/// Resolved tolerances: defaults, scenario overrides, global scale.
#[derive(Debug, Clone)]
pub struct Tolerances {
    values: BTreeMap<&'static str, f64>,
}

impl Tolerances {
    pub fn resolve(command: Command, overrides: &BTreeMap<String, f64>, scale: f64) -> Result<Tolerances, ScenarioError> {
        let defaults = tolerance_defaults(command);
        for key in overrides.keys() {
            if !defaults.iter().any(|(k, _, _)| k == key) {
                let known: Vec<&str> = defaults.iter().map(|(k, _, _)| *k).collect();
                return Err(ScenarioError::Parse {
                    key: format!("tolerances.{key}"),
                    message: format!("unknown tolerance for '{}' (known: {})", command.as_str(), known.join(", ")),
                });
            }
        }
        let values = defaults.iter().map(|(k, v, _)| (*k, overrides.get(*k).copied().unwrap_or(*v) * scale)).collect();
        Ok(Tolerances { values })
    }

    pub fn get(&self, key: &str) -> f64 {
        *self.values.get(key).unwrap_or_else(|| panic!("tolerance key '{key}' is not declared"))
    }
}

/// Running maxima of named residuals, with one table row per sample.
#[derive(Debug, Default)]
pub(crate) struct Accumulator {
    order: Vec<String>,
    meta: BTreeMap<String, (String, f64)>,
    worst: BTreeMap<String, f64>,
    samples: Vec<(String, BTreeMap<String, f64>)>,
}

fn worse(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

impl Accumulator {
    pub fn sample(&mut self, label: String) {
        self.samples.push((label, BTreeMap::new()));
    }

    pub fn record(&mut self, name: &str, anchor: &str, tolerance: f64, value: f64) {
        if !self.meta.contains_key(name) {
            self.order.push(name.to_string());
            self.meta.insert(name.to_string(), (anchor.to_string(), tolerance));
        }
        let w = self.worst.entry(name.to_string()).or_insert(0.0);
        *w = worse(*w, value);
        if let Some((_, row)) = self.samples.last_mut() {
            let e = row.entry(name.to_string()).or_insert(0.0);
            *e = worse(*e, value);
        }
    }

    pub fn rows(&self) -> Vec<CheckRow> {
        self.order
            .iter()
            .map(|n| {
                let (anchor, tol) = &self.meta[n];
                CheckRow::new(n.clone(), anchor.clone(), self.worst[n], *tol)
            })
            .collect()
    }

    /// `sample, label, <one column per check>`; blank cells where a check
    /// was not evaluated for that sample.
    pub fn table(&self, name: &str) -> Table {
        let mut header = vec!["sample".to_string(), "point".to_string()];
        header.extend(self.order.iter().cloned());
        let mut t = Table { name: name.into(), header, rows: Vec::new() };
        for (i, (label, vals)) in self.samples.iter().enumerate() {
            let mut row = vec![i.into(), label.clone().into()];
            for n in &self.order {
                row.push(match vals.get(n) {
                    Some(v) => (*v).into(),
                    None => "".into(),
                });
            }
            t.rows.push(row);
        }
        t
    }
}

pub(crate) fn point_label(x: &[f64]) -> String {
    x.iter().map(|v| crate::report::format_float(*v)).collect::<Vec<_>>().join(" ")
}

pub(crate) fn random_point(rng: &mut ChaCha8Rng, region: &Domain) -> Vec<f64> {
    region.lo.iter().zip(&region.hi).map(|(a, b)| if a < b { rng.gen_range(*a..*b) } else { *a }).collect()
}

pub(crate) fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// `g`-unit vector along `v`.
pub(crate) fn unit(g: &[f64], v: &[f64]) -> Vec<f64> {
    let len = linalg::gnorm(g, v);
    v.iter().map(|c| c / len).collect()
}

/// `(vertical part, horizontal part)` of `v` at `x`.
pub(crate) fn split(m: &MetricField, x: &[f64], v: &[f64]) -> foliab::Result<(Vec<f64>, Vec<f64>)> {
    let g = m.values(x);
    let vp = vertical_projector(&m.spec, &g)?;
    let ver = linalg::matvec(&vp, v, m.dim);
    let hor = linalg::sub(v, &ver);
    Ok((ver, hor))
}

/// Fixture-specific oracles apply only to unmodified built-ins.
pub(crate) fn builtin_name<'a>(sc: &Scenario, fx: &'a Fixture) -> Option<&'a str> {
    match &sc.fixture {
        crate::scenario::FixtureRef::Name(_) => Some(fx.name.as_str()),
        crate::scenario::FixtureRef::Inline(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulator_keeps_first_seen_order_and_maxima() {
        let mut acc = Accumulator::default();
        acc.sample("p0".into());
        acc.record("b", "B", 1.0, 0.5);
        acc.record("a", "A", 1.0, 0.1);
        acc.sample("p1".into());
        acc.record("b", "B", 1.0, 2.0);
        let rows = acc.rows();
        assert_eq!(rows[0].name, "b");
        assert_eq!(rows[0].residual, 2.0);
        assert!(!rows[0].pass);
        assert!(rows[1].pass);
        let t = acc.table("x");
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1][3], "".into());
    }

    #[test]
    fn nan_poisons_the_maximum() {
        let mut acc = Accumulator::default();
        acc.record("a", "A", 1.0, f64::NAN);
        acc.record("a", "A", 1.0, 0.0);
        assert!(acc.rows()[0].residual.is_nan());
        assert!(!acc.rows()[0].pass);
    }

    #[test]
    fn unknown_tolerance_key_is_named() {
        let mut o = BTreeMap::new();
        o.insert("bogus".to_string(), 1.0);
        let err = Tolerances::resolve(Command::Jacobi, &o, 1.0).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { ref key, .. } if key == "tolerances.bogus"));
    }

    #[test]
    fn scale_multiplies_every_tolerance() {
        let t = Tolerances::resolve(Command::Identities, &BTreeMap::new(), 10.0).unwrap();
        for (k, v, _) in tolerance_defaults(Command::Identities) {
            assert_eq!(t.get(k), v * 10.0);
        }
    }
}
