//! Foliated charts, metric evaluation and the differentiation engine.
//!
//! Every chart is an axis-aligned box whose first `n'` coordinates are
//! transverse and last `n''` leafwise, so the plaques are the slices
//! `x' = const`. Metric coefficients are given either as expressions (exact
//! jets via forward-mode differentiation) or as a black-box closure
//! (central finite differences).

use crate::error::{Error, Result};
use crate::expr::{ExprError, Program, ScalarExpr};
use crate::jet::{Jet, JetSpace, Scalar};
use crate::linalg;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::ops::Deref;
use std::sync::Arc;

/// Dimensions of a foliated chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoliationSpec {
    pub n_transverse: usize,
    pub n_leafwise: usize,
    pub n_total: usize,
}

impl FoliationSpec {
    pub fn new(n_transverse: usize, n_leafwise: usize) -> Result<Self> {
        if n_transverse == 0 || n_leafwise == 0 {
            return Err(Error::InvalidInput(format!(
                "foliation needs n' ≥ 1 and n'' ≥ 1, got ({n_transverse}, {n_leafwise})"
            )));
        }
        Ok(FoliationSpec { n_transverse, n_leafwise, n_total: n_transverse + n_leafwise })
    }

    pub fn is_transverse(&self, i: usize) -> bool {
        i < self.n_transverse
    }
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidInput(format!("malformed domain box {lo:?} .. {hi:?}")));
        }
        Ok(Domain { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Distance from `x` to the boundary in the sup-norm (negative outside).
    pub fn margin(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (a, b))| (v - a).min(b - v))
            .fold(f64::INFINITY, f64::min)
    }

    /// The box scaled by `factor` about its center.
    pub fn scaled(&self, factor: f64) -> Domain {
        let c = self.center();
        let lo = self.lo.iter().zip(&c).map(|(a, m)| m + factor * (a - m)).collect();
        let hi = self.hi.iter().zip(&c).map(|(b, m)| m + factor * (b - m)).collect();
        Domain { lo, hi }
    }

    pub fn intersect(&self, other: &Domain) -> Domain {
        Domain {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect(),
        }
    }

    /// Tensor lattice with `counts[k]` nodes per axis, endpoints included.
    pub fn lattice(&self, counts: &[usize]) -> Vec<Vec<f64>> {
        let n = self.dim();
        let axes: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let c = counts[k.min(counts.len() - 1)].max(1);
                if c == 1 {
                    vec![0.5 * (self.lo[k] + self.hi[k])]
                } else {
                    (0..c).map(|i| self.lo[k] + (self.hi[k] - self.lo[k]) * i as f64 / (c - 1) as f64).collect()
                }
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for p in &out {
                for &v in axis {
                    let mut q = p.clone();
                    q.push(v);
                    next.push(q);
                }
            }
            out = next;
        }
        out
    }
}

/// A point of a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub chart_id: u32,
    pub coords: DVector<f64>,
}

impl Point {
    pub fn new(coords: &[f64]) -> Point {
        Point { chart_id: 0, coords: DVector::from_column_slice(coords) }
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coords.as_slice()
    }

    pub fn transverse(&self, spec: &FoliationSpec) -> &[f64] {
        &self.as_slice()[..spec.n_transverse]
    }

    pub fn leafwise(&self, spec: &FoliationSpec) -> &[f64] {
        &self.as_slice()[spec.n_transverse..]
    }
}

/// A tangent vector in the coordinate frame `∂_1..∂_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub components: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: &Point, components: &[f64]) -> TangentVector {
        TangentVector { base: base.clone(), components: DVector::from_column_slice(components) }
    }

    pub fn as_slice(&self) -> &[f64] {
        self.components.as_slice()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffMode {
    Dual,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferentiationConfig {
    pub mode: DiffMode,
    /// Base step for first derivatives; order `d` uses `fd_step^(3/(d+2))`.
    pub fd_step: f64,
    pub max_order: usize,
}

impl Default for DifferentiationConfig {
    fn default() -> Self {
        DifferentiationConfig { mode: DiffMode::Dual, fd_step: 1e-5, max_order: 6 }
    }
}

impl DifferentiationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fd_step > 0.0) {
            return Err(Error::InvalidInput("fd_step must be positive".into()));
        }
        if self.max_order < 4 {
            return Err(Error::InvalidInput("max_order must be at least 4".into()));
        }
        Ok(())
    }

    fn step_for(&self, order: usize) -> f64 {
        self.fd_step.powf(3.0 / (order as f64 + 2.0))
    }
}

/// Central stencils (second-order accurate) for derivative orders 0..=4.
fn stencil(order: usize) -> &'static [(i32, f64)] {
    match order {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        4 => &[(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
        _ => &[],
    }
}

/// Highest derivative order available from the finite-difference engine.
pub const FD_MAX_ORDER: usize = 4;

/// Taylor jet of `f` at `x` filled by tensor-product central differences.
pub fn fd_jet(f: &dyn Fn(&[f64]) -> f64, x: &[f64], order: usize, cfg: &DifferentiationConfig) -> Result<Jet> {
    if order > FD_MAX_ORDER {
        return Err(Error::OrderExceeded { requested: order, max: FD_MAX_ORDER });
    }
    let sp = JetSpace::get(x.len(), order);
    let mut coeffs = vec![0.0; sp.len()];
    for (idx, mono) in sp.monomials().iter().enumerate() {
        let deg: usize = mono.iter().map(|&e| e as usize).sum();
        let h = cfg.step_for(deg);
        let mut acc = 0.0;
        let mut y = x.to_vec();
        // Iterate over the tensor product of the per-axis stencils.
        let axes: Vec<&[(i32, f64)]> = mono.iter().map(|&e| stencil(e as usize)).collect();
        let mut counter = vec![0usize; x.len()];
        loop {
            let mut w = 1.0;
            for k in 0..x.len() {
                let (off, c) = axes[k][counter[k]];
                y[k] = x[k] + off as f64 * h;
                w *= c;
            }
            acc += w * f(&y);
            let mut k = 0;
            while k < x.len() {
                counter[k] += 1;
                if counter[k] < axes[k].len() {
                    break;
                }
                counter[k] = 0;
                k += 1;
            }
            if k == x.len() {
                break;
            }
        }
        let fact: f64 = mono.iter().map(|&e| (1..=e as u64).product::<u64>() as f64).product();
        coeffs[idx] = acc / h.powi(deg as i32) / fact;
    }
    Ok(Jet::from_coeffs(sp, &coeffs))
}

/// A smooth scalar function on chart coordinates.
#[derive(Clone)]
pub enum ScalarMap {
    Expression(ScalarExpr),
    BlackBox(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for ScalarMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarMap::Expression(e) => write!(f, "ScalarMap({})", e.source),
            ScalarMap::BlackBox(_) => write!(f, "ScalarMap(<closure>)"),
        }
    }
}

impl ScalarMap {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ScalarMap::Expression(e) => e.program.eval_f64(x),
            ScalarMap::BlackBox(f) => f(x),
        }
    }

    pub fn jet(&self, x: &[f64], order: usize, cfg: &DifferentiationConfig) -> Result<Jet> {
        match (self, cfg.mode) {
            (ScalarMap::Expression(e), DiffMode::Dual) => Ok(e.program.eval(&Jet::seed(x, order))),
            (ScalarMap::Expression(e), DiffMode::FiniteDifference) => {
                fd_jet(&|y: &[f64]| e.program.eval_f64(y), x, order, cfg)
            }
            (ScalarMap::BlackBox(f), _) => fd_jet(&|y: &[f64]| f(y), x, order, cfg),
        }
    }
}

/// A multi-index `I` with its transverse/leafwise split.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex {
    pub exponents: Vec<u8>,
}

impl MultiIndex {
    pub fn new(exponents: &[u8]) -> MultiIndex {
        MultiIndex { exponents: exponents.to_vec() }
    }

    pub fn order(&self) -> usize {
        self.exponents.iter().map(|&e| e as usize).sum()
    }

    pub fn transverse_order(&self, spec: &FoliationSpec) -> usize {
        self.exponents[..spec.n_transverse].iter().map(|&e| e as usize).sum()
    }

    pub fn leafwise_order(&self, spec: &FoliationSpec) -> usize {
        self.exponents[spec.n_transverse..].iter().map(|&e| e as usize).sum()
    }

    /// All multi-indices in `n` variables with `|I| ≤ order`.
    pub fn all_up_to(n: usize, order: usize) -> Vec<MultiIndex> {
        JetSpace::get(n, order).monomials().iter().map(|m| MultiIndex::new(m)).collect()
    }
}

/// `∂_I f(p)`.
pub fn differentiate(f: &ScalarMap, index: &MultiIndex, p: &Point, cfg: &DifferentiationConfig) -> Result<f64> {
    let order = index.order();
    if order > cfg.max_order {
        return Err(Error::OrderExceeded { requested: order, max: cfg.max_order });
    }
    let jet = f.jet(p.as_slice(), order, cfg)?;
    Ok(jet.derivative(&index.exponents))
}

#[derive(Clone)]
enum MetricSource {
    /// Row-major coefficient expressions (with gradients).
    Expressions(Vec<ScalarExpr>),
    BlackBox(Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>),
}

/// A Riemannian metric on a coordinate box.
#[derive(Clone)]
pub struct Metric {
    pub name: String,
    pub dim: usize,
    pub domain: Domain,
    pub diff: DifferentiationConfig,
    /// Condition-number cap for [`inverse_metric`].
    pub condition_cap: f64,
    source: MetricSource,
}

impl std::fmt::Debug for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Metric").field("name", &self.name).field("dim", &self.dim).field("domain", &self.domain).finish()
    }
}

fn expr_err(src: &str, error: ExprError) -> Error {
    Error::Expression { source_text: src.to_string(), error }
}

impl Metric {
    /// Builds a metric from a full `n×n` table of coefficient expressions.
    pub fn from_expressions(
        name: &str,
        entries: &[Vec<String>],
        domain: Domain,
        params: &BTreeMap<String, f64>,
    ) -> Result<Metric> {
        let n = entries.len();
        if n == 0 || entries.iter().any(|row| row.len() != n) || domain.dim() != n {
            return Err(Error::InvalidInput(format!("metric '{name}' must be a square table matching the domain")));
        }
        let mut parsed = Vec::with_capacity(n * n);
        for row in entries {
            for src in row {
                parsed.push(ScalarExpr::parse(src, n, params).map_err(|e| expr_err(src, e))?);
            }
        }
        // Symmetry is enforced structurally: the lower triangle mirrors the upper.
        for i in 0..n {
            for j in 0..i {
                let upper = parsed[j * n + i].clone();
                if parsed[i * n + j].expr != upper.expr {
                    let probe = domain.center();
                    let a = parsed[i * n + j].program.eval_f64(&probe);
                    let b = upper.program.eval_f64(&probe);
                    if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                        return Err(Error::InvalidInput(format!(
                            "metric '{name}' entry ({},{}) differs from its transpose",
                            i + 1,
                            j + 1
                        )));
                    }
                }
                parsed[i * n + j] = upper;
            }
        }
        Ok(Metric {
            name: name.to_string(),
            dim: n,
            domain,
            diff: DifferentiationConfig::default(),
            condition_cap: 1e12,
            source: MetricSource::Expressions(parsed),
        })
    }

    /// A user-supplied closure returning the row-major coefficient table.
    /// All derivatives are taken by finite differences.
    pub fn from_closure(name: &str, dim: usize, domain: Domain, f: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>) -> Metric {
        Metric {
            name: name.to_string(),
            dim,
            domain,
            diff: DifferentiationConfig { mode: DiffMode::FiniteDifference, ..Default::default() },
            condition_cap: 1e12,
            source: MetricSource::BlackBox(f),
        }
    }

    pub fn has_expressions(&self) -> bool {
        matches!(self.source, MetricSource::Expressions(_))
    }

    pub fn with_diff(mut self, diff: DifferentiationConfig) -> Metric {
        if self.has_expressions() {
            self.diff = diff;
        } else {
            self.diff = DifferentiationConfig { mode: DiffMode::FiniteDifference, ..diff };
        }
        self
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim || !self.domain.contains(x) {
            return Err(Error::OutsideDomain { point: x.to_vec() });
        }
        Ok(())
    }

    /// Coefficients `g_ij(x)` (row-major) without a domain check.
    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        match &self.source {
            MetricSource::Expressions(e) => e.iter().map(|c| c.program.eval_f64(x)).collect(),
            MetricSource::BlackBox(f) => {
                let mut g = f(x);
                let n = self.dim;
                for i in 0..n {
                    for j in 0..i {
                        let s = 0.5 * (g[i * n + j] + g[j * n + i]);
                        g[i * n + j] = s;
                        g[j * n + i] = s;
                    }
                }
                g
            }
        }
    }

    /// `(g, ∂g)` with `∂g[k*n*n + i*n + j] = ∂_k g_ij`.
    pub fn values_and_gradient(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim;
        let g = self.values(x);
        let mut dg = vec![0.0; n * n * n];
        match (&self.source, self.diff.mode) {
            (MetricSource::Expressions(e), DiffMode::Dual) => {
                for (ij, c) in e.iter().enumerate() {
                    for k in 0..n {
                        dg[k * n * n + ij] = c.gradient[k].eval_f64(x);
                    }
                }
            }
            _ => {
                let h = self.diff.fd_step;
                let mut y = x.to_vec();
                for k in 0..n {
                    y[k] = x[k] + h;
                    let gp = self.values(&y);
                    y[k] = x[k] - h;
                    let gm = self.values(&y);
                    y[k] = x[k];
                    for ij in 0..n * n {
                        dg[k * n * n + ij] = (gp[ij] - gm[ij]) / (2.0 * h);
                    }
                }
            }
        }
        (g, dg)
    }

    /// Taylor jets of the coefficients at `x` up to `order`.
    pub fn jets(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        if order > self.diff.max_order {
            return Err(Error::OrderExceeded { requested: order, max: self.diff.max_order });
        }
        let n = self.dim;
        match (&self.source, self.diff.mode) {
            (MetricSource::Expressions(e), DiffMode::Dual) => {
                let seed = Jet::seed(x, order);
                let mut out: Vec<Jet> = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        if j < i {
                            let t = out[j * n + i].clone();
                            out.push(t);
                        } else {
                            out.push(e[i * n + j].program.eval(&seed));
                        }
                    }
                }
                Ok(out)
            }
            _ => {
                let mut out: Vec<Jet> = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        if j < i {
                            let t = out[j * n + i].clone();
                            out.push(t);
                        } else {
                            let f = |y: &[f64]| self.values(y)[i * n + j];
                            out.push(fd_jet(&f, x, order, &self.diff)?);
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// `g` and `∂g` composed with a jet-valued point (chart pullbacks).
    pub fn on_jets(&self, y: &[Jet]) -> Result<(Vec<Jet>, Vec<Jet>)> {
        let MetricSource::Expressions(e) = &self.source else {
            return Err(Error::Unsupported("jet composition needs an expression metric".into()));
        };
        let n = self.dim;
        let mut g: Vec<Jet> = Vec::with_capacity(n * n);
        let mut dg: Vec<Option<Jet>> = vec![None; n * n * n];
        for i in 0..n {
            for j in 0..n {
                if j < i {
                    let t = g[j * n + i].clone();
                    g.push(t);
                    for k in 0..n {
                        dg[k * n * n + i * n + j] = dg[k * n * n + j * n + i].clone();
                    }
                } else {
                    let c = &e[i * n + j];
                    g.push(c.program.eval(y));
                    for k in 0..n {
                        dg[k * n * n + i * n + j] = Some(c.gradient[k].eval(y));
                    }
                }
            }
        }
        Ok((g, dg.into_iter().map(|d| d.unwrap()).collect()))
    }

    /// Coefficient programs (row-major), when expression-backed.
    pub fn programs(&self) -> Option<Vec<&Program>> {
        match &self.source {
            MetricSource::Expressions(e) => Some(e.iter().map(|c| &c.program).collect()),
            MetricSource::BlackBox(_) => None,
        }
    }
}

/// A metric on a foliated chart.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub spec: FoliationSpec,
    pub metric: Metric,
}

impl Deref for MetricField {
    type Target = Metric;
    fn deref(&self) -> &Metric {
        &self.metric
    }
}

impl MetricField {
    pub fn new(spec: FoliationSpec, metric: Metric) -> Result<MetricField> {
        if metric.dim != spec.n_total {
            return Err(Error::InvalidInput(format!(
                "metric dimension {} does not match n' + n'' = {}",
                metric.dim, spec.n_total
            )));
        }
        Ok(MetricField { spec, metric })
    }

    /// Sampled positive-definiteness check: minimum eigenvalue over a lattice.
    pub fn min_eigenvalue_on(&self, points: &[Vec<f64>]) -> f64 {
        let n = self.dim;
        points
            .iter()
            .map(|x| {
                let g = linalg::to_dmatrix(&self.values(x), n);
                SymmetricEigen::new(g).eigenvalues.min()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// `g_ij(p)`.
pub fn eval_metric(m: &Metric, p: &Point) -> Result<DMatrix<f64>> {
    m.check(p.as_slice())?;
    Ok(linalg::to_dmatrix(&m.values(p.as_slice()), m.dim))
}

/// `g^{ij}(p)`, refusing ill-conditioned metrics.
pub fn inverse_metric(m: &Metric, p: &Point) -> Result<DMatrix<f64>> {
    let g = eval_metric(m, p)?;
    let eig = SymmetricEigen::new(g.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= m.condition_cap) {
        return Err(Error::DegenerateMetric { condition });
    }
    let inv = g.try_inverse().ok_or(Error::DegenerateMetric { condition })?;
    Ok(0.5 * (&inv + inv.transpose()))
}

/// Vertical projector `V^i_j` from metric coefficients.
///
/// Vertical vectors are the leafwise coordinate directions; the horizontal
/// complement is their g-orthogonal complement. For a transverse `∂_j` the
/// vertical part is `Σ_b (G''^{-1} g''_{·j})_b ∂_b` with `G''` the leafwise
/// block of g.
pub fn vertical_projector<S: Scalar>(spec: &FoliationSpec, g: &[S]) -> Result<Vec<S>> {
    let (n, n1, n2) = (spec.n_total, spec.n_transverse, spec.n_leafwise);
    let proto = &g[0];
    let mut block = Vec::with_capacity(n2 * n2);
    for b in 0..n2 {
        for c in 0..n2 {
            block.push(g[(n1 + b) * n + n1 + c].clone());
        }
    }
    let binv = linalg::inverse(&block, n2).ok_or(Error::DegenerateMetric { condition: f64::INFINITY })?;
    let mut v: Vec<S> = (0..n * n).map(|_| proto.lift(0.0)).collect();
    for j in 0..n {
        if j >= n1 {
            v[j * n + j] = proto.lift(1.0);
            continue;
        }
        for b in 0..n2 {
            let mut acc = proto.lift(0.0);
            for c in 0..n2 {
                acc = acc.fma(&binv[b * n2 + c], &g[(n1 + c) * n + j]);
            }
            v[(n1 + b) * n + j] = acc;
        }
    }
    Ok(v)
}

/// Splits `v` into `(V v, H v)`.
pub fn split_tangent(m: &MetricField, v: &TangentVector) -> Result<(TangentVector, TangentVector)> {
    m.check(v.base.as_slice())?;
    let n = m.dim;
    let g = m.values(v.base.as_slice());
    let vp = vertical_projector(&m.spec, &g)?;
    let vert = linalg::matvec(&vp, v.as_slice(), n);
    let horiz = linalg::sub(v.as_slice(), &vert);
    Ok((TangentVector::new(&v.base, &vert), TangentVector::new(&v.base, &horiz)))
}

/// Orthonormal basis of `T_pM` adapted to the splitting: the first `n'`
/// columns span the horizontal space, the last `n''` the vertical one.
///
/// Vertical vectors come from Gram–Schmidt on `∂''_1..∂''_{n''}`, horizontal
/// ones from Gram–Schmidt on `H∂'_1..H∂'_{n'}`, so at a point where the
/// coordinate frame is orthonormal the basis is the coordinate basis.
pub fn adapted_basis(spec: &FoliationSpec, g: &[f64]) -> Result<DMatrix<f64>> {
    let n = spec.n_total;
    let n1 = spec.n_transverse;
    let vp = vertical_projector(spec, g)?;
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let gs = |raw: Vec<f64>, cols: &[Vec<f64>]| -> Result<Vec<f64>> {
        let mut w = raw;
        for c in cols {
            let d = linalg::inner(g, &w, c);
            w = linalg::axpy(-d, c, &w);
        }
        let len = linalg::gnorm(g, &w);
        if !(len > 1e-14) {
            return Err(Error::DegenerateMetric { condition: f64::INFINITY });
        }
        Ok(w.iter().map(|x| x / len).collect())
    };
    let mut horiz = Vec::new();
    for a in 0..n1 {
        let mut e = vec![0.0; n];
        e[a] = 1.0;
        let ve = linalg::matvec(&vp, &e, n);
        horiz.push(gs(linalg::sub(&e, &ve), &horiz)?);
    }
    let mut vert = Vec::new();
    for b in n1..n {
        let mut e = vec![0.0; n];
        e[b] = 1.0;
        vert.push(gs(e, &vert)?);
    }
    cols.extend(horiz);
    cols.extend(vert);
    let mut out = DMatrix::zeros(n, n);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            out[(i, j)] = c[i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn warp() -> MetricField {
        let m = Metric::from_expressions(
            "warp",
            &[vec!["1".into(), "0".into()], vec!["0".into(), "exp(2*x1)".into()]],
            Domain::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap(),
            &BTreeMap::new(),
        )
        .unwrap();
        MetricField::new(FoliationSpec::new(1, 1).unwrap(), m).unwrap()
    }

    #[test]
    fn spec_invariants() {
        assert!(FoliationSpec::new(0, 2).is_err());
        let s = FoliationSpec::new(2, 1).unwrap();
        assert_eq!(s.n_total, 3);
    }

    #[test]
    fn warp_metric_values() {
        let m = warp();
        let g = eval_metric(&m, &Point::new(&[0.5, 0.1])).unwrap();
        assert_eq!(g[(0, 0)], 1.0);
        assert!((g[(1, 1)] - 1f64.exp()).abs() < 1e-15);
        let gi = inverse_metric(&m, &Point::new(&[0.5, 0.1])).unwrap();
        assert!((gi[(1, 1)] - (-1f64).exp()).abs() < 1e-15);
        assert!(matches!(eval_metric(&m, &Point::new(&[6.0, 0.0])), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn differentiate_polynomial_and_metric_entry() {
        let f = ScalarMap::Expression(ScalarExpr::parse("x1^2*x2", 2, &BTreeMap::new()).unwrap());
        let cfg = DifferentiationConfig::default();
        let d = differentiate(&f, &MultiIndex::new(&[2, 1]), &Point::new(&[0.7, -3.0]), &cfg).unwrap();
        assert_eq!(d, 2.0);
        let g22 = ScalarMap::Expression(ScalarExpr::parse("exp(2*x1)", 2, &BTreeMap::new()).unwrap());
        let d = differentiate(&g22, &MultiIndex::new(&[1, 0]), &Point::new(&[0.0, 0.0]), &cfg).unwrap();
        assert!((d - 2.0).abs() < 1e-15);
        let big = MultiIndex::new(&[7, 0]);
        assert!(matches!(differentiate(&g22, &big, &Point::new(&[0.0, 0.0]), &cfg), Err(Error::OrderExceeded { .. })));
    }

    #[test]
    fn fd_jets_agree_with_dual() {
        let m = warp();
        let fd = m.clone().metric.with_diff(DifferentiationConfig { mode: DiffMode::FiniteDifference, ..Default::default() });
        let x = [0.3, 0.2];
        let a = m.jets(&x, 2).unwrap();
        let b = fd.jets(&x, 2).unwrap();
        for (ja, jb) in a.iter().zip(&b) {
            for (ca, cb) in ja.coeffs().iter().zip(jb.coeffs()) {
                assert!((ca - cb).abs() <= 1e-4 * (1.0 + ca.abs()), "{ca} vs {cb}");
            }
        }
    }

    #[test]
    fn warp_split_of_dx_is_horizontal() {
        let m = warp();
        let p = Point::new(&[0.4, 1.0]);
        let (v, h) = split_tangent(&m, &TangentVector::new(&p, &[1.0, 0.0])).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 0.0]);
        assert_eq!(h.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn lattice_includes_endpoints() {
        let d = Domain::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let pts = d.lattice(&[3, 2]);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![0.0, -1.0]);
        assert_eq!(pts[5], vec![1.0, 1.0]);
    }
}
