//! Built-in example foliations and the data format shared with user scenarios.
//!
//! A fixture declares the chart box, the metric coefficients as expressions,
//! and optionally a distinguished submersion π with its base metric and
//! isometric embeddings (used for chordal distances by the injectivity
//! estimators).

use crate::error::{Error, Result};
use crate::expr::{self, ScalarExpr};
use crate::geometry::{DifferentiationConfig, Domain, FoliationSpec, Metric, MetricField};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A bound or coefficient given as a number or an expression string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumOrExpr {
    Num(f64),
    Expr(String),
}

impl NumOrExpr {
    fn eval(&self, params: &BTreeMap<String, f64>) -> Result<f64> {
        match self {
            NumOrExpr::Num(v) => Ok(*v),
            NumOrExpr::Expr(s) => {
                let e = expr::parse(s, 0, params)
                    .map_err(|error| Error::Expression { source_text: s.clone(), error })?;
                e.constant().ok_or_else(|| Error::Fixture(format!("bound '{s}' is not constant")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDef {
    pub lo: Vec<NumOrExpr>,
    pub hi: Vec<NumOrExpr>,
}

impl BoxDef {
    fn resolve(&self, params: &BTreeMap<String, f64>) -> Result<Domain> {
        let lo = self.lo.iter().map(|v| v.eval(params)).collect::<Result<Vec<_>>>()?;
        let hi = self.hi.iter().map(|v| v.eval(params)).collect::<Result<Vec<_>>>()?;
        Domain::new(lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmersionDef {
    pub map: Vec<String>,
    pub base_metric: Vec<Vec<String>>,
    pub base_domain: BoxDef,
    #[serde(default)]
    pub base_embedding: Option<Vec<String>>,
}

/// On-disk fixture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureDef {
    #[serde(default = "one")]
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub n_transverse: usize,
    pub n_leafwise: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub domain: BoxDef,
    pub metric: Vec<Vec<String>>,
    #[serde(default)]
    pub submersion: Option<SubmersionDef>,
    #[serde(default)]
    pub embedding: Option<Vec<String>>,
}

fn one() -> u32 {
    1
}

/// Distinguished submersion onto a local transversal, with its base metric.
#[derive(Debug, Clone)]
pub struct Submersion {
    pub map: Vec<ScalarExpr>,
    pub base: Metric,
    pub base_embedding: Option<Vec<ScalarExpr>>,
}

impl Submersion {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.map.iter().map(|c| c.program.eval_f64(x)).collect()
    }

    /// `π_*` at `x` as an `n' × n` matrix.
    pub fn differential(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        DMatrix::from_fn(self.map.len(), n, |a, k| self.map[a].gradient[k].eval_f64(x))
    }
}

/// A resolved fixture.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub description: String,
    pub params: BTreeMap<String, f64>,
    pub field: MetricField,
    pub submersion: Option<Submersion>,
    pub embedding: Option<Vec<ScalarExpr>>,
}

fn parse_list(srcs: &[String], nvars: usize, params: &BTreeMap<String, f64>) -> Result<Vec<ScalarExpr>> {
    srcs.iter()
        .map(|s| {
            ScalarExpr::parse(s, nvars, params).map_err(|error| Error::Expression { source_text: s.clone(), error })
        })
        .collect()
}

impl Fixture {
    /// Resolves a definition, overriding declared parameters with `overrides`.
    pub fn from_def(def: &FixtureDef, overrides: &BTreeMap<String, f64>) -> Result<Fixture> {
        if def.schema != 1 {
            return Err(Error::Fixture(format!("unsupported fixture schema {}", def.schema)));
        }
        let mut params = def.params.clone();
        for (k, v) in overrides {
            if !params.contains_key(k) {
                return Err(Error::Fixture(format!("fixture '{}' has no parameter '{k}'", def.name)));
            }
            params.insert(k.clone(), *v);
        }
        let spec = FoliationSpec::new(def.n_transverse, def.n_leafwise)?;
        let n = spec.n_total;
        let domain = def.domain.resolve(&params)?;
        let metric = Metric::from_expressions(&def.name, &def.metric, domain, &params)?;
        let field = MetricField::new(spec, metric)?;
        let submersion = match &def.submersion {
            None => None,
            Some(s) => {
                if s.map.len() != spec.n_transverse {
                    return Err(Error::Fixture("submersion must have n' components".into()));
                }
                let base_domain = s.base_domain.resolve(&params)?;
                let base = Metric::from_expressions(&format!("{}-base", def.name), &s.base_metric, base_domain, &params)?;
                let base_embedding = match &s.base_embedding {
                    Some(e) => Some(parse_list(e, spec.n_transverse, &params)?),
                    None => None,
                };
                Some(Submersion { map: parse_list(&s.map, n, &params)?, base, base_embedding })
            }
        };
        let embedding = match &def.embedding {
            Some(e) => Some(parse_list(e, n, &params)?),
            None => None,
        };
        let fx = Fixture {
            name: def.name.clone(),
            description: def.description.clone(),
            params,
            field,
            submersion,
            embedding,
        };
        let probe = fx.field.domain.lattice(&[5]);
        let lam = fx.field.min_eigenvalue_on(&probe);
        if !(lam > 0.0) {
            return Err(Error::Fixture(format!("metric of '{}' is not positive definite (min eigenvalue {lam})", fx.name)));
        }
        Ok(fx)
    }

    pub fn with_diff(mut self, diff: DifferentiationConfig) -> Fixture {
        self.field.metric = self.field.metric.with_diff(diff);
        self
    }

    pub fn has_submersion(&self) -> bool {
        self.submersion.is_some()
    }

    pub fn embed(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.embedding.as_ref().map(|e| e.iter().map(|c| c.program.eval_f64(x)).collect())
    }
}

const BUILTIN: &[(&str, &str)] = &[
    ("FIX-PRODUCT", include_str!("../fixtures/product.json")),
    ("FIX-SLOPE", include_str!("../fixtures/slope.json")),
    ("FIX-WARP", include_str!("../fixtures/warp.json")),
    ("FIX-WARP-SINGULAR", include_str!("../fixtures/warp_singular.json")),
    ("FIX-HOPF", include_str!("../fixtures/hopf.json")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

pub fn builtin_def(name: &str) -> Option<FixtureDef> {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| serde_json::from_str(src).expect("built-in fixture files are valid"))
}

/// Loads a built-in fixture with parameter overrides.
pub fn load(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Fixture> {
    let def = builtin_def(name).ok_or_else(|| Error::Fixture(format!("unknown fixture '{name}'")))?;
    Fixture::from_def(&def, overrides)
}

/// Loads a built-in fixture with its default parameters.
pub fn builtin(name: &str) -> Result<Fixture> {
    load(name, &BTreeMap::new())
}

/// One row of the fixture listing.
#[derive(Debug, Clone, Serialize)]
pub struct FixtureSummary {
    pub name: String,
    pub n_transverse: usize,
    pub n_leafwise: usize,
    pub has_submersion: bool,
    pub description: String,
}

pub fn list_fixtures() -> Vec<FixtureSummary> {
    BUILTIN
        .iter()
        .map(|(name, _)| {
            let d = builtin_def(name).unwrap();
            FixtureSummary {
                name: d.name,
                n_transverse: d.n_transverse,
                n_leafwise: d.n_leafwise,
                has_submersion: d.submersion.is_some(),
                description: d.description,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_load() {
        for name in builtin_names() {
            let f = builtin(name).unwrap();
            assert_eq!(f.name, name);
        }
        assert_eq!(list_fixtures().len(), 5);
    }

    #[test]
    fn singular_parameter_moves_domain() {
        let mut o = BTreeMap::new();
        o.insert("eps".to_string(), 0.01);
        let f = load("FIX-WARP-SINGULAR", &o).unwrap();
        assert_eq!(f.field.domain.lo[0], 0.01);
        o.insert("nope".to_string(), 1.0);
        assert!(load("FIX-WARP-SINGULAR", &o).is_err());
    }

    #[test]
    fn hopf_embedding_is_isometric() {
        let f = builtin("FIX-HOPF").unwrap();
        let x = [1.1, 0.4, -0.7];
        let g = f.field.values(&x);
        let emb = f.embedding.as_ref().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let pull: f64 = emb.iter().map(|c| c.gradient[i].eval_f64(&x) * c.gradient[j].eval_f64(&x)).sum();
                assert!((pull - g[i * 3 + j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn hopf_projection_is_a_riemannian_submersion() {
        // Horizontal vectors have the same length upstairs and downstairs.
        let f = builtin("FIX-HOPF").unwrap();
        let s = f.submersion.as_ref().unwrap();
        let x = [0.8, 0.3, 1.2];
        let g = f.field.values(&x);
        let vp = crate::geometry::vertical_projector(&f.field.spec, &g).unwrap();
        let gb = s.base.values(&s.project(&x));
        for a in 0..2 {
            let mut e = vec![0.0; 3];
            e[a] = 1.0;
            let v = crate::linalg::matvec(&vp, &e, 3);
            let h = crate::linalg::sub(&e, &v);
            let up = crate::linalg::inner(&g, &h, &h);
            let d = s.differential(&x);
            let down: Vec<f64> = (0..2).map(|b| (0..3).map(|k| d[(b, k)] * h[k]).sum()).collect();
            assert!((up - crate::linalg::inner(&gb, &down, &down)).abs() < 1e-14);
        }
    }
}
