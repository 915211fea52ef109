//! Sampled bounded-geometry audit.
//!
//! Everything here is "up to sampled order and region": suprema are taken
//! over fixed lattices of a working box and of boxes exhausting the
//! fixture domain, never over the whole (possibly non-compact) manifold.
//! All sampling is deterministic, and parallel evaluation reduces in index
//! order, so repeated runs agree bitwise.

use crate::connections::{covariant_derivatives, AuditTensor, ConnectionKind, TensorNorm};
use crate::error::{Error, Result};
use crate::fixtures::Fixture;
use crate::geometry::{adapted_basis, Domain, MetricField, Point, TangentVector};
use crate::jet::Jet;
use crate::linalg;
use crate::normal_charts::{NormalChart, DEFAULT_CHART_STEP};
use crate::transport::{integrate_with, CurveSolution, Source};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Worker count: available cores, capped by `FOLIAB_THREADS`.
pub fn worker_threads() -> usize {
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var("FOLIAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(cap) if cap >= 1 => avail.min(cap),
        _ => avail,
    }
}

/// Order-preserving parallel map over a slice.
pub fn par_map<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync,
{
    let threads = worker_threads().min(items.len()).max(1);
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<U>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("audit worker panicked")).collect()
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Working box; defaults to the fixture domain.
    pub region: Option<Domain>,
    /// Lattice nodes per axis for the covariant table.
    pub lattice: Vec<usize>,
    /// Scales of the exhausting boxes (about the region center).
    pub exhaustion: Vec<f64>,
    pub m_max: usize,
    pub deriv_order_chart: usize,
    pub r_transverse: f64,
    pub r_leafwise: f64,
    /// Chart centers per axis for the coefficient bounds.
    pub chart_centers: Vec<usize>,
    /// Chart lattice nodes per axis.
    pub chart_lattice: Vec<usize>,
    /// Horizon for the injectivity estimates.
    pub injectivity_cap: f64,
    pub geodesic_step: f64,
    /// Sample points for the injectivity estimates (region center if empty).
    pub injectivity_points: Vec<Vec<f64>>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            region: None,
            lattice: vec![9],
            exhaustion: vec![0.25, 0.5, 0.75, 0.95, 1.0],
            m_max: 2,
            deriv_order_chart: 3,
            r_transverse: 0.5,
            r_leafwise: 0.5,
            chart_centers: vec![3],
            chart_lattice: vec![5],
            injectivity_cap: 4.0,
            geodesic_step: 1e-2,
            injectivity_points: Vec::new(),
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_transverse > 0.0 && self.r_leafwise > 0.0) {
            return Err(Error::InvalidInput("audit radii must be positive".into()));
        }
        if self.lattice.is_empty() || self.lattice.contains(&0) {
            return Err(Error::InvalidInput("audit lattice needs positive node counts".into()));
        }
        if self.exhaustion.is_empty() || self.exhaustion.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return Err(Error::InvalidInput("exhaustion scales must lie in (0, 1]".into()));
        }
        if self.m_max > 4 {
            return Err(Error::OrderExceeded { requested: self.m_max, max: 4 });
        }
        if !(self.injectivity_cap > 0.0 && self.geodesic_step > 0.0) {
            return Err(Error::InvalidInput("injectivity cap and step must be positive".into()));
        }
        Ok(())
    }

    pub fn region_for(&self, m: &MetricField) -> Domain {
        match &self.region {
            Some(r) => r.intersect(&m.domain),
            None => m.domain.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    BoundedUpToSampledOrder,
    ViolationFound,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub tensor: String,
    pub order: usize,
    pub scale: f64,
    pub sup_operator: f64,
    pub sup_frobenius: f64,
    pub witness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormTable {
    pub rows: Vec<NormRow>,
    pub verdict: Verdict,
    pub witness: Option<Vec<f64>>,
}

impl NormTable {
    /// Row at the largest scale.
    pub fn sup(&self, tensor: &str, order: usize) -> Option<&NormRow> {
        self.rows.iter().filter(|r| r.tensor == tensor && r.order == order).max_by(|a, b| a.scale.total_cmp(&b.scale))
    }
}

fn tensor_name(t: AuditTensor) -> &'static str {
    match t {
        AuditTensor::R => "R",
        AuditTensor::T => "T",
        AuditTensor::A => "A",
    }
}

/// Sup-sampled `|∇^m R|`, `|∇^m T|`, `|∇^m A|` on every exhaustion box.
///
/// The verdict is `violation_found` when some sup on the full box exceeds
/// twice its value on the smallest box, `inconclusive` on non-finite values.
pub fn covariant_bound_table(m: &MetricField, cfg: &AuditConfig) -> Result<NormTable> {
    cfg.validate()?;
    let region = cfg.region_for(m);
    let tensors = [AuditTensor::R, AuditTensor::T, AuditTensor::A];
    let mut scales = cfg.exhaustion.clone();
    scales.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    for &scale in &scales {
        let pts: Vec<Vec<f64>> = region.scaled(scale).intersect(&m.domain).lattice(&cfg.lattice);
        // Per point: [tensor][order] = (operator, frobenius).
        let vals: Vec<Result<Vec<Vec<(f64, f64)>>>> = par_map(&pts, |x| {
            let g = m.values(x);
            tensors
                .iter()
                .map(|&t| {
                    let d = covariant_derivatives(m, x, t, cfg.m_max)?;
                    Ok(d.iter().map(|v| (v.norm(&g, TensorNorm::Operator), v.norm(&g, TensorNorm::Frobenius))).collect())
                })
                .collect()
        });
        let vals: Vec<Vec<Vec<(f64, f64)>>> = vals.into_iter().collect::<Result<_>>()?;
        for (ti, &t) in tensors.iter().enumerate() {
            for order in 0..=cfg.m_max {
                let mut row =
                    NormRow { tensor: tensor_name(t).into(), order, scale, sup_operator: 0.0, sup_frobenius: 0.0, witness: pts[0].clone() };
                for (p, v) in pts.iter().zip(&vals) {
                    let (op, fr) = v[ti][order];
                    if !op.is_finite() || !fr.is_finite() {
                        row.sup_operator = f64::NAN;
                        row.witness = p.clone();
                        break;
                    }
                    if op > row.sup_operator {
                        row.sup_operator = op;
                        row.witness = p.clone();
                    }
                    row.sup_frobenius = row.sup_frobenius.max(fr);
                }
                rows.push(row);
            }
        }
    }
    let mut verdict = Verdict::BoundedUpToSampledOrder;
    let mut witness = None;
    for t in tensors {
        for order in 0..=cfg.m_max {
            let series: Vec<&NormRow> = rows.iter().filter(|r| r.tensor == tensor_name(t) && r.order == order).collect();
            if series.iter().any(|r| !r.sup_operator.is_finite()) {
                if verdict != Verdict::ViolationFound {
                    verdict = Verdict::Inconclusive;
                    witness = series.iter().find(|r| !r.sup_operator.is_finite()).map(|r| r.witness.clone());
                }
                continue;
            }
            let first = series.first().expect("at least one scale").sup_operator;
            let last = series.last().expect("at least one scale");
            if last.sup_operator > 2.0 * first + 1e-8 && verdict != Verdict::ViolationFound {
                verdict = Verdict::ViolationFound;
                witness = Some(last.witness.clone());
            }
        }
    }
    Ok(NormTable { rows, verdict, witness })
}

/// What ended an injectivity estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorLimit {
    Cap,
    Separation,
    Reapproach,
    DomainExit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectivityKind {
    Leafwise,
    Transverse,
    Ambient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityEstimate {
    pub kind: InjectivityKind,
    pub point: Vec<f64>,
    pub floor: f64,
    pub cap: f64,
    pub limited_by: FloorLimit,
    pub inconclusive: bool,
    /// Whether the shot endpoints invert through the normal chart at the
    /// point (ambient only; `None` when undecidable on the sampled domain).
    pub chart_inversion_ok: Option<bool>,
}

/// Direction fan `±(cos α e_last + sin α e_other)`, `α ∈ {0, ±π/6, ±π/3}`
/// (just `±e_last` in dimension one).
pub fn direction_fan(e_last: &[f64], e_other: Option<&[f64]>) -> Vec<Vec<f64>> {
    let alphas: &[f64] = if e_other.is_some() {
        &[0.0, std::f64::consts::FRAC_PI_6, -std::f64::consts::FRAC_PI_6, std::f64::consts::FRAC_PI_3, -std::f64::consts::FRAC_PI_3]
    } else {
        &[0.0]
    };
    let mut out = Vec::new();
    for &a in alphas {
        for sign in [1.0, -1.0] {
            out.push(
                (0..e_last.len())
                    .map(|i| sign * (a.cos() * e_last[i] + e_other.map_or(0.0, |o| a.sin() * o[i])))
                    .collect(),
            );
        }
    }
    out
}

/// Shoots the fan and returns the first time a geodesic stops being
/// (verifiably) minimising: two geodesics nearly meet again (separation at
/// most 5% of its running maximum), one re-approaches the start, or one
/// leaves the domain. Unit-speed initial data is assumed.
fn fan_floor<P>(curves: &[CurveSolution], cap: f64, pos: P) -> (f64, FloorLimit)
where
    P: Fn(&[f64]) -> Vec<f64>,
{
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let origin = pos(&curves[0].points[0]);
    let mut best = (cap, FloorLimit::Cap);
    for c in curves {
        if c.partial && c.t_end() < best.0 {
            best = (c.t_end(), FloorLimit::DomainExit);
        }
    }
    // Re-approach: the chordal distance to the start passes a maximum.
    for c in curves {
        let d: Vec<f64> = (0..c.len()).map(|k| dist(&pos(&c.points[k]), &origin)).collect();
        for k in 2..d.len() {
            if d[k] < d[k - 1] - 1e-12 * (1.0 + d[k - 1]) {
                // Vertex of the parabola through the last three nodes.
                let (t0, t1, t2) = (c.times[k - 2], c.times[k - 1], c.times[k]);
                let (d0, d1, d2) = (d[k - 2], d[k - 1], d[k]);
                let den = (t0 - t1) * (t0 - t2) * (t1 - t2);
                let a = (t2 * (d1 - d0) + t1 * (d0 - d2) + t0 * (d2 - d1)) / den;
                let b = (t2 * t2 * (d0 - d1) + t1 * t1 * (d2 - d0) + t0 * t0 * (d1 - d2)) / den;
                let t = if a < 0.0 { (-b / (2.0 * a)).clamp(t0, t2) } else { t1 };
                if t < best.0 {
                    best = (t, FloorLimit::Reapproach);
                }
                break;
            }
        }
    }
    // Pairwise separation collapse.
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let (a, b) = (&curves[i], &curves[j]);
            let len = a.len().min(b.len());
            let mut run_max = 0.0f64;
            for k in 1..len {
                let s = dist(&pos(&a.points[k]), &pos(&b.points[k]));
                if run_max > 0.0 && s <= 0.05 * run_max {
                    let limit = 0.05 * run_max;
                    let (mut lo, mut hi) = (a.times[k - 1], a.times[k]);
                    for _ in 0..40 {
                        let mid = 0.5 * (lo + hi);
                        if dist(&pos(&a.eval(mid).0), &pos(&b.eval(mid).0)) <= limit {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    if hi < best.0 {
                        best = (hi, FloorLimit::Separation);
                    }
                    break;
                }
                run_max = run_max.max(s);
            }
        }
    }
    best
}

fn unit(g: &[f64], v: Vec<f64>) -> Vec<f64> {
    let l = linalg::gnorm(g, &v);
    v.iter().map(|x| x / l).collect()
}

fn injectivity_points(fx: &Fixture, cfg: &AuditConfig) -> Vec<Vec<f64>> {
    if cfg.injectivity_points.is_empty() {
        vec![cfg.region_for(&fx.field).center()]
    } else {
        cfg.injectivity_points.clone()
    }
}

fn finish(kind: InjectivityKind, point: &[f64], cap: f64, step: f64, (floor, limited_by): (f64, FloorLimit)) -> InjectivityEstimate {
    let inconclusive = floor <= 2.0 * step && limited_by != FloorLimit::Cap;
    InjectivityEstimate {
        kind,
        point: point.to_vec(),
        floor: if inconclusive { 0.0 } else { floor },
        cap,
        limited_by,
        inconclusive,
        chart_inversion_ok: None,
    }
}

/// Fan-shooting lower estimate of the leaf injectivity radius
/// (leafwise `∇̊`-geodesics, chordal distances through the embedding when
/// the fixture has one).
pub fn leafwise_injectivity_floor(fx: &Fixture, cfg: &AuditConfig) -> Result<Vec<InjectivityEstimate>> {
    cfg.validate()?;
    let m = &fx.field;
    let (n, n1) = (m.dim, m.spec.n_transverse);
    let mut out = Vec::new();
    for p in injectivity_points(fx, cfg) {
        let g = m.values(&p);
        let basis = adapted_basis(&m.spec, &g)?;
        let col = |j: usize| -> Vec<f64> { basis.column(j).iter().copied().collect() };
        let other = if n - n1 >= 2 { Some(col(n1)) } else { None };
        let fan = direction_fan(&col(n - 1), other.as_deref());
        let curves = fan
            .iter()
            .map(|v| integrate_with(Source::Field(m, ConnectionKind::Adapted), &p, &unit(&g, v.clone()), cfg.injectivity_cap, cfg.geodesic_step))
            .collect::<Result<Vec<_>>>()?;
        let res = fan_floor(&curves, cfg.injectivity_cap, |x| fx.embed(x).unwrap_or_else(|| x.to_vec()));
        out.push(finish(InjectivityKind::Leafwise, &p, cfg.injectivity_cap, cfg.geodesic_step, res));
    }
    Ok(out)
}

/// The same estimate for the base of the fixture's submersion, at the
/// projected sample points.
pub fn transverse_injectivity_floor(fx: &Fixture, cfg: &AuditConfig) -> Result<Vec<InjectivityEstimate>> {
    cfg.validate()?;
    let sub = fx
        .submersion
        .as_ref()
        .ok_or_else(|| Error::Unsupported(format!("{} declares no submersion", fx.name)))?;
    let base = &sub.base;
    let k = base.dim;
    let mut out = Vec::new();
    for p in injectivity_points(fx, cfg) {
        let b = sub.project(&p);
        let g = base.values(&b);
        let frame = linalg::orthonormal_frame(&g, k).ok_or(Error::DegenerateMetric { condition: f64::INFINITY })?;
        let col = |j: usize| -> Vec<f64> { frame.column(j).iter().copied().collect() };
        let other = if k >= 2 { Some(col(0)) } else { None };
        let fan = direction_fan(&col(k - 1), other.as_deref());
        let curves = fan
            .iter()
            .map(|v| integrate_with(Source::Plain(base), &b, &unit(&g, v.clone()), cfg.injectivity_cap, cfg.geodesic_step))
            .collect::<Result<Vec<_>>>()?;
        let embed = |x: &[f64]| -> Vec<f64> {
            match &sub.base_embedding {
                Some(e) => e.iter().map(|c| c.program.eval_f64(x)).collect(),
                None => x.to_vec(),
            }
        };
        let res = fan_floor(&curves, cfg.injectivity_cap, embed);
        out.push(finish(InjectivityKind::Transverse, &p, cfg.injectivity_cap, cfg.geodesic_step, res));
    }
    Ok(out)
}

/// Levi-Civita fan estimate, plus a check that the fan endpoints at radius
/// `min(floor, r', r'')` invert through the normal chart at the point.
pub fn ambient_injectivity_floor(fx: &Fixture, cfg: &AuditConfig) -> Result<Vec<InjectivityEstimate>> {
    cfg.validate()?;
    let m = &fx.field;
    let (n, n1) = (m.dim, m.spec.n_transverse);
    let mut out = Vec::new();
    for p in injectivity_points(fx, cfg) {
        let g = m.values(&p);
        let basis = adapted_basis(&m.spec, &g)?;
        let col = |j: usize| -> Vec<f64> { basis.column(j).iter().copied().collect() };
        let fan = direction_fan(&col(n - 1), Some(&col(n1 - 1)));
        let curves = fan
            .iter()
            .map(|v| integrate_with(Source::Field(m, ConnectionKind::LeviCivita), &p, &unit(&g, v.clone()), cfg.injectivity_cap, cfg.geodesic_step))
            .collect::<Result<Vec<_>>>()?;
        let res = fan_floor(&curves, cfg.injectivity_cap, |x| fx.embed(x).unwrap_or_else(|| x.to_vec()));
        let mut est = finish(InjectivityKind::Ambient, &p, cfg.injectivity_cap, cfg.geodesic_step, res);
        if !est.inconclusive {
            let rc = est.floor.min(cfg.r_transverse).min(cfg.r_leafwise);
            let domain_limited = est.limited_by == FloorLimit::DomainExit;
            est.chart_inversion_ok = chart_inverts_fan(m, &p, &curves, rc, domain_limited);
        }
        out.push(est);
    }
    Ok(out)
}

/// `None` when the ball reaches the domain boundary (floor limited by a
/// domain exit) and no chart of the needed size fits: the containment is
/// then undecidable on the sampled domain rather than false.
fn chart_inverts_fan(m: &MetricField, p: &[f64], curves: &[CurveSolution], r: f64, domain_limited: bool) -> Option<bool> {
    let chart = match NormalChart::build(m, &Point::new(p), 1.5 * r, 1.5 * r, DEFAULT_CHART_STEP) {
        Ok(c) if c.r_transverse >= 1.5 * r => c,
        _ => return if domain_limited { None } else { Some(false) },
    };
    Some(fan_inverts(&chart, curves, r).unwrap_or(false))
}

fn fan_inverts(chart: &NormalChart, curves: &[CurveSolution], r: f64) -> Result<bool> {
    for c in curves {
        let y = c.eval(r.min(c.t_end())).0;
        let x = chart.inverse(&y)?;
        let back = chart.forward(&x)?;
        let err = back.as_slice().iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err > 1e-8 || !chart.contains(&x) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn multi_indices(nvars: usize, order: usize) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = vec![vec![0; nvars]];
    for _ in 0..order {
        let mut next = Vec::new();
        for e in &out {
            let start = e.iter().rposition(|&v| v > 0).unwrap_or(0);
            for k in start..nvars {
                let mut f = e.clone();
                f[k] += 1;
                next.push(f);
            }
        }
        out = next;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartBoundRow {
    pub center: Vec<f64>,
    pub r_transverse: f64,
    pub r_leafwise: f64,
    /// Set when the chart could not be built at the requested radii.
    pub excluded: bool,
    /// `sup |∂_I g_ij|` by `|I|`.
    pub sup_metric: Vec<f64>,
    /// `sup |∂_I g^ij|` by `|I|`.
    pub sup_inverse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartBounds {
    pub rows: Vec<ChartBoundRow>,
    /// `sup` over centers, by `|I|`.
    pub sup_metric: Vec<f64>,
    pub sup_inverse: Vec<f64>,
    /// Relative spread `(max − min)/max` across centers, by `|I|`.
    pub spread_metric: Vec<f64>,
    pub spread_inverse: Vec<f64>,
}

/// Derivatives of the chart metric and its inverse, sampled over a lattice
/// of each normal chart at a lattice of centers.
pub fn chart_coefficient_bounds(m: &MetricField, cfg: &AuditConfig) -> Result<ChartBounds> {
    cfg.validate()?;
    let region = cfg.region_for(m);
    let (n, n1) = (m.dim, m.spec.n_transverse);
    let k = cfg.deriv_order_chart;
    let centers = region.lattice(&cfg.chart_centers);
    let scale: Vec<f64> = (0..n).map(|i| if i < n1 { cfg.r_transverse } else { cfg.r_leafwise }).collect();
    let box_pts: Vec<Vec<f64>> = Domain::new(scale.iter().map(|r| -r).collect(), scale.clone())?.lattice(&cfg.chart_lattice);
    let indices: Vec<Vec<Vec<u8>>> = (0..=k).map(|o| multi_indices(n, o)).collect();
    let rows: Vec<Result<ChartBoundRow>> = par_map(&centers, |c| {
        let mut row = ChartBoundRow {
            center: c.clone(),
            r_transverse: cfg.r_transverse,
            r_leafwise: cfg.r_leafwise,
            excluded: false,
            sup_metric: vec![0.0; k + 1],
            sup_inverse: vec![0.0; k + 1],
        };
        let chart = match NormalChart::build(m, &Point::new(c), cfg.r_transverse, cfg.r_leafwise, DEFAULT_CHART_STEP) {
            Ok(ch) if ch.r_transverse == cfg.r_transverse => ch,
            Ok(_) | Err(Error::ChartTooLarge { .. }) | Err(Error::BoundaryExit { .. }) => {
                log::warn!("chart at {c:?} excluded from coefficient bounds");
                row.excluded = true;
                return Ok(row);
            }
            Err(e) => return Err(e),
        };
        for x in box_pts.iter().filter(|x| chart.contains(&x.iter().map(|v| v * 0.999).collect::<Vec<_>>())) {
            let (kappa, _) = chart.forward_generic(&Jet::seed(x, k + 1))?;
            let jac: Vec<Jet> = (0..n * n).map(|e| kappa[e / n].partial(e % n)).collect();
            let (g, _) = m.on_jets(&kappa)?;
            let gj = linalg::matmul(&g, &jac, n);
            let gc = linalg::matmul(&linalg::transpose(&jac, n), &gj, n);
            let gi = linalg::inverse(&gc, n).ok_or(Error::DegenerateMetric { condition: f64::INFINITY })?;
            for (o, idx) in indices.iter().enumerate() {
                for e in idx {
                    for (a, b) in gc.iter().zip(&gi) {
                        row.sup_metric[o] = row.sup_metric[o].max(a.derivative(e).abs());
                        row.sup_inverse[o] = row.sup_inverse[o].max(b.derivative(e).abs());
                    }
                }
            }
        }
        Ok(row)
    });
    let rows: Vec<ChartBoundRow> = rows.into_iter().collect::<Result<_>>()?;
    let kept: Vec<&ChartBoundRow> = rows.iter().filter(|r| !r.excluded).collect();
    let agg = |f: &dyn Fn(&ChartBoundRow) -> &Vec<f64>| -> (Vec<f64>, Vec<f64>) {
        (0..=k)
            .map(|o| {
                let v: Vec<f64> = kept.iter().map(|r| f(r)[o]).collect();
                let mx = v.iter().copied().fold(0.0, f64::max);
                let mn = v.iter().copied().fold(f64::INFINITY, f64::min);
                (mx, if mx > 1e-12 { (mx - mn) / mx } else { 0.0 })
            })
            .unzip()
    };
    let (sup_metric, spread_metric) = agg(&|r| &r.sup_metric);
    let (sup_inverse, spread_inverse) = agg(&|r| &r.sup_inverse);
    Ok(ChartBounds { rows, sup_metric, sup_inverse, spread_metric, spread_inverse })
}

/// A normal chart tabulated on a grid over `[−R', R'] × [−R'', R'']`,
/// with piecewise-cubic interpolation and a Newton inverse on the
/// interpolant. Cheap enough for the many membership queries of covers.
#[derive(Debug, Clone)]
pub struct ChartTable {
    pub center: Vec<f64>,
    pub n: usize,
    pub n_transverse: usize,
    pub half_widths: Vec<f64>,
    pub nodes: usize,
    basis_inv: DMatrix<f64>,
    values: Vec<Option<Vec<f64>>>,
}

impl ChartTable {
    pub fn new(chart: &NormalChart, nodes: usize) -> Result<ChartTable> {
        if nodes < 4 {
            return Err(Error::InvalidInput("chart table needs at least 4 nodes per axis".into()));
        }
        let (n, n1) = (chart.n(), chart.n_transverse());
        let half_widths: Vec<f64> = (0..n).map(|i| if i < n1 { chart.r_transverse } else { chart.r_leafwise }).collect();
        let grid = Domain::new(half_widths.iter().map(|r| -r).collect(), half_widths.clone())?.lattice(&[nodes]);
        let values = grid
            .iter()
            .map(|x| match chart.forward(x) {
                Ok(p) => Ok(Some(p.as_slice().to_vec())),
                Err(Error::BoundaryExit { .. }) | Err(Error::OutsideDomain { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChartTable {
            center: chart.center.as_slice().to_vec(),
            n,
            n_transverse: n1,
            half_widths,
            nodes,
            basis_inv: chart.basis.clone().try_inverse().expect("basis invertible"),
            values,
        })
    }

    /// Interpolated chart map (`None` outside the table or near failed nodes).
    pub fn forward(&self, x: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        let m = self.nodes;
        let mut starts = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for a in 0..n {
            let h = 2.0 * self.half_widths[a] / (m - 1) as f64;
            let u = (x[a] + self.half_widths[a]) / h;
            if !(u >= 0.0 && u <= (m - 1) as f64) {
                return None;
            }
            let s = (u.floor() as isize - 1).clamp(0, m as isize - 4) as usize;
            let w: Vec<f64> = (0..4)
                .map(|i| {
                    (0..4).filter(|&j| j != i).map(|j| (u - (s + j) as f64) / (i as f64 - j as f64)).product()
                })
                .collect();
            starts.push(s);
            weights.push(w);
        }
        let mut out = vec![0.0; n];
        for flat in 0..4usize.pow(n as u32) {
            let mut idx = 0;
            let mut w = 1.0;
            let mut f = flat;
            for a in 0..n {
                let o = f % 4;
                f /= 4;
                idx = idx * m + starts[a] + o;
                w *= weights[a][o];
            }
            let v = self.values[idx].as_ref()?;
            for i in 0..n {
                out[i] += w * v[i];
            }
        }
        Some(out)
    }

    /// Chart coordinates of `y`, if it lies in the tabulated image.
    pub fn inverse(&self, y: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        let d: Vec<f64> = (0..n).map(|i| y[i] - self.center[i]).collect();
        let mut x: Vec<f64> = (0..n).map(|i| (0..n).map(|j| self.basis_inv[(i, j)] * d[j]).sum()).collect();
        let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max);
        'newton: for _ in 0..30 {
            let f = self.forward(&x)?;
            let r: Vec<f64> = (0..n).map(|i| y[i] - f[i]).collect();
            if r.iter().map(|v| v.abs()).fold(0.0, f64::max) <= 1e-13 * scale {
                return Some(x);
            }
            let h = 1e-6;
            let mut jac = DMatrix::zeros(n, n);
            for k in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let (fp, fm) = match (self.forward(&xp), self.forward(&xm)) {
                    (Some(a), Some(b)) => (a, b),
                    (Some(a), None) => (a, f.clone()),
                    (None, Some(b)) => (f.clone(), b),
                    (None, None) => return None,
                };
                let den = xp[k] - xm[k] - if self.forward(&xm).is_none() { h } else { 0.0 } - if self.forward(&xp).is_none() { h } else { 0.0 };
                for i in 0..n {
                    jac[(i, k)] = (fp[i] - fm[i]) / den;
                }
            }
            let dx = jac.lu().solve(&nalgebra::DVector::from_vec(r.clone()))?;
            // Damped step: stay inside the table and do not increase the residual.
            let norm = |v: &[f64]| v.iter().map(|a| a.abs()).fold(0.0, f64::max);
            let r0 = norm(&r);
            let mut lambda = 1.0;
            loop {
                let trial: Vec<f64> = (0..n).map(|i| x[i] + lambda * dx[i]).collect();
                if let Some(ft) = self.forward(&trial) {
                    let rt: Vec<f64> = (0..n).map(|i| y[i] - ft[i]).collect();
                    if norm(&rt) < r0 {
                        x = trial;
                        break;
                    }
                }
                lambda *= 0.5;
                if lambda < 1e-6 {
                    break 'newton;
                }
            }
        }
        let f = self.forward(&x)?;
        let err = (0..n).map(|i| (y[i] - f[i]).abs()).fold(0.0, f64::max);
        (err <= 1e-9 * scale).then_some(x)
    }

    /// `(|x'|, |x''|)` of `y`, if it lies in the tabulated image.
    pub fn radii_of(&self, y: &[f64]) -> Option<(f64, f64)> {
        let x = self.inverse(y)?;
        let n1 = self.n_transverse;
        let r1 = x[..n1].iter().map(|v| v * v).sum::<f64>().sqrt();
        let r2 = x[n1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        Some((r1, r2))
    }

    /// Whether `y ∈ U_{p, r', r''}`.
    pub fn contains(&self, y: &[f64], r_transverse: f64, r_leafwise: f64) -> bool {
        self.radii_of(y).is_some_and(|(a, b)| a < r_transverse && b < r_leafwise)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// A lattice graph over a box with `3^n − 1` neighbours per node and edge
/// lengths from the metric at edge midpoints.
struct LatticeGraph {
    points: Vec<Vec<f64>>,
    edges: Vec<Vec<(usize, f64)>>,
    volume_weights: Vec<f64>,
}

impl LatticeGraph {
    fn new(m: &MetricField, region: &Domain, counts: Vec<usize>) -> LatticeGraph {
        let n = region.dim();
        let points = region.lattice(&counts);
        let strides: Vec<usize> = (0..n).map(|a| counts[a + 1..].iter().product()).collect();
        let cell: f64 = (0..n).map(|a| if counts[a] > 1 { (region.hi[a] - region.lo[a]) / (counts[a] - 1) as f64 } else { 1.0 }).product();
        let mut edges = vec![Vec::new(); points.len()];
        let mut volume_weights = Vec::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            let g = m.values(p);
            volume_weights.push(linalg::to_dmatrix(&g, n).determinant().abs().sqrt() * cell);
            let coord: Vec<usize> = (0..n).map(|a| (i / strides[a]) % counts[a]).collect();
            for off in 0..3usize.pow(n as u32) {
                let mut f = off;
                let mut j = 0isize;
                let mut ok = true;
                let mut zero = true;
                for a in 0..n {
                    let d = (f % 3) as isize - 1;
                    f /= 3;
                    zero &= d == 0;
                    let c = coord[a] as isize + d;
                    if c < 0 || c >= counts[a] as isize {
                        ok = false;
                        break;
                    }
                    j += c * strides[a] as isize;
                }
                if !ok || zero {
                    continue;
                }
                let q = &points[j as usize];
                let mid: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
                let d: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
                edges[i].push((j as usize, linalg::gnorm(&m.values(&mid), &d)));
            }
        }
        LatticeGraph { points, edges, volume_weights }
    }

    /// Graph distances from `src`, explored up to `limit`.
    fn dijkstra(&self, src: usize, limit: f64) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.points.len()];
        dist[src] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Entry(0.0, src));
        while let Some(Entry(d, i)) = heap.pop() {
            if d > dist[i] || d > limit {
                continue;
            }
            for &(j, w) in &self.edges[i] {
                let nd = d + w;
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Entry(nd, j));
                }
            }
        }
        dist
    }
}

/// A sampled cover by normal chart neighbourhoods `U_{p_i, r', r''}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cover {
    pub centers: Vec<Vec<f64>>,
    pub packing_radius: f64,
    pub r_transverse: f64,
    pub r_leafwise: f64,
    /// Observed maximal number of sets `U_{p_i, 2r', 2r''}` over a test lattice.
    pub multiplicity: usize,
    /// Fraction of test points lying in some `U_{p_i, r', r''}`.
    pub coverage: f64,
    pub test_points: usize,
    pub uncovered_witness: Option<Vec<f64>>,
    /// `max_i vol B(p_i, r1 + r2) / vol B(p_i, r1/2)` (lattice quadrature,
    /// balls clipped to the region), `r2 = 2r' + 2r''`.
    pub volume_ratio: f64,
    #[serde(skip)]
    pub charts: Vec<ChartTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverConfig {
    /// Candidate lattice spacing (defaults to `r1/4`, the coarsest allowed).
    pub spacing: Option<f64>,
    /// Chart radii as multiples of `r1`.
    pub radius_factor: f64,
    /// Test lattice nodes per axis.
    pub test_lattice: usize,
    /// Chart table nodes per axis.
    pub table_nodes: usize,
}

impl Default for CoverConfig {
    fn default() -> Self {
        CoverConfig { spacing: None, radius_factor: 1.25, test_lattice: 100, table_nodes: 21 }
    }
}

/// Greedy maximal `r1`-separated packing of a box, with the chart
/// neighbourhoods of radii `(f·r1, f·r1)` checked for coverage and
/// multiplicity on a test lattice.
pub fn build_cover(m: &MetricField, region: &Domain, r1: f64, cfg: &CoverConfig) -> Result<Cover> {
    if !(r1 > 0.0) {
        return Err(Error::InvalidInput("packing radius must be positive".into()));
    }
    let region = region.intersect(&m.domain);
    let n = m.dim;
    let limit = r1 / 4.0;
    let spacing = cfg.spacing.unwrap_or(limit);
    if spacing > limit * (1.0 + 1e-12) {
        return Err(Error::RegionTooCoarse { spacing, limit });
    }
    let counts: Vec<usize> = (0..n).map(|a| ((region.hi[a] - region.lo[a]) / spacing).ceil() as usize + 1).collect();
    let graph = LatticeGraph::new(m, &region, counts);
    let mut near = vec![false; graph.points.len()];
    let mut centers = Vec::new();
    for i in 0..graph.points.len() {
        if near[i] {
            continue;
        }
        centers.push(i);
        for (j, d) in graph.dijkstra(i, r1).iter().enumerate() {
            if *d < r1 {
                near[j] = true;
            }
        }
    }
    let r_chart = cfg.radius_factor * r1;
    let r2 = 4.0 * r_chart;
    let mut volume_ratio = 0.0f64;
    for &c in &centers {
        let d = graph.dijkstra(c, r1 + r2);
        let vol = |r: f64| -> f64 { d.iter().zip(&graph.volume_weights).filter(|(x, _)| **x < r).map(|(_, w)| w).sum() };
        volume_ratio = volume_ratio.max(vol(r1 + r2) / vol(0.5 * r1).max(f64::MIN_POSITIVE));
    }
    let center_pts: Vec<Vec<f64>> = centers.iter().map(|&i| graph.points[i].clone()).collect();
    let charts = par_map(&center_pts, |p| -> Result<ChartTable> {
        // Nodes whose image leaves the domain stay empty; only the part of
        // each neighbourhood inside the domain is ever queried.
        let chart = NormalChart::unprobed(m, &Point::new(p), 2.0 * r_chart, 2.0 * r_chart, DEFAULT_CHART_STEP)?;
        ChartTable::new(&chart, cfg.table_nodes)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut cover = Cover {
        centers: center_pts,
        packing_radius: r1,
        r_transverse: r_chart,
        r_leafwise: r_chart,
        multiplicity: 0,
        coverage: 0.0,
        test_points: 0,
        uncovered_witness: None,
        volume_ratio,
        charts,
    };
    let tests = region.lattice(&[cfg.test_lattice]);
    let stats = par_map(&tests, |y| cover.membership(y));
    let mut covered = 0usize;
    for (y, (inner, outer)) in tests.iter().zip(&stats) {
        if *inner > 0 {
            covered += 1;
        } else if cover.uncovered_witness.is_none() {
            cover.uncovered_witness = Some(y.clone());
        }
        cover.multiplicity = cover.multiplicity.max(*outer);
    }
    cover.test_points = tests.len();
    cover.coverage = covered as f64 / tests.len() as f64;
    Ok(cover)
}

impl Cover {
    /// Number of sets `U_{p_i, r', r''}` and `U_{p_i, 2r', 2r''}` containing `y`.
    pub fn membership(&self, y: &[f64]) -> (usize, usize) {
        let mut inner = 0;
        let mut outer = 0;
        for t in &self.charts {
            if let Some((a, b)) = t.radii_of(y) {
                if a < self.r_transverse && b < self.r_leafwise {
                    inner += 1;
                }
                if a < 2.0 * self.r_transverse && b < 2.0 * self.r_leafwise {
                    outer += 1;
                }
            }
        }
        (inner, outer)
    }
}

/// `h(t) = f(t)/(f(t) + f(1 − t))`, `f(t) = e^{−1/t}` for `t > 0`.
pub fn smooth_step(t: f64) -> f64 {
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let (a, b) = (f(t), f(1.0 - t));
    a / (a + b)
}

/// Radial bump: `1` on `[0, r]`, `0` on `[2r, ∞)`, smooth in between.
pub fn bump(s: f64, r: f64) -> f64 {
    smooth_step(2.0 - s / r)
}

/// Partition of unity subordinate to `{U_{p_i, 2r', 2r''}}`.
pub struct PartitionOfUnity<'a> {
    pub cover: &'a Cover,
}

pub fn partition_of_unity(cover: &Cover) -> PartitionOfUnity<'_> {
    PartitionOfUnity { cover }
}

impl PartitionOfUnity<'_> {
    /// `ψ_i = ρ'(x'_i) ρ''(x''_i)` for every chart.
    pub fn raw(&self, y: &[f64]) -> Vec<f64> {
        let c = self.cover;
        c.charts
            .iter()
            .map(|t| match t.radii_of(y) {
                Some((a, b)) => bump(a, c.r_transverse) * bump(b, c.r_leafwise),
                None => 0.0,
            })
            .collect()
    }

    /// Weights `φ_i = ψ_i / Σ ψ`.
    pub fn weights(&self, y: &[f64]) -> Result<Vec<f64>> {
        let psi = self.raw(y);
        let total: f64 = psi.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Uncovered { point: y.to_vec() });
        }
        Ok(psi.iter().map(|v| v / total).collect())
    }

    /// Per-chart maximum of `|dφ_i|_g` over the sample points (central
    /// differences with step `h`); charts whose weight vanishes on all
    /// samples report zero.
    pub fn gradient_bounds(&self, m: &MetricField, points: &[Vec<f64>], h: f64) -> Result<Vec<f64>> {
        let n = m.dim;
        let k = self.cover.charts.len();
        let per_point = par_map(points, |y| -> Result<Vec<f64>> {
            let mut grads = vec![vec![0.0; n]; k];
            for a in 0..n {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[a] += h;
                ym[a] -= h;
                let (wp, wm) = (self.weights(&yp)?, self.weights(&ym)?);
                for i in 0..k {
                    grads[i][a] = (wp[i] - wm[i]) / (2.0 * h);
                }
            }
            let gi = linalg::inverse(&m.values(y), n).ok_or(Error::DegenerateMetric { condition: f64::INFINITY })?;
            Ok(grads.iter().map(|d| linalg::inner(&gi, d, d).max(0.0).sqrt()).collect())
        });
        let mut out = vec![0.0f64; k];
        for r in per_point {
            for (o, v) in out.iter_mut().zip(r?) {
                *o = o.max(v);
            }
        }
        Ok(out)
    }
}

/// Everything the audit computes for one fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub fixture: String,
    pub norms: NormTable,
    pub injectivity: Vec<InjectivityEstimate>,
    pub charts: Option<ChartBounds>,
    pub verdict: Verdict,
    pub witness: Option<Vec<f64>>,
}

/// Runs the norm table, the three injectivity estimates (transverse only
/// when the fixture has a submersion) and, optionally, the chart bounds.
pub fn run_audit(fx: &Fixture, cfg: &AuditConfig, with_charts: bool) -> Result<AuditReport> {
    let norms = covariant_bound_table(&fx.field, cfg)?;
    let mut injectivity = leafwise_injectivity_floor(fx, cfg)?;
    if fx.has_submersion() {
        injectivity.extend(transverse_injectivity_floor(fx, cfg)?);
    }
    injectivity.extend(ambient_injectivity_floor(fx, cfg)?);
    let charts = if with_charts { Some(chart_coefficient_bounds(&fx.field, cfg)?) } else { None };
    let mut verdict = norms.verdict;
    if verdict == Verdict::BoundedUpToSampledOrder && injectivity.iter().any(|e| e.inconclusive) {
        verdict = Verdict::Inconclusive;
    }
    Ok(AuditReport { fixture: fx.name.clone(), witness: norms.witness.clone(), norms, injectivity, charts, verdict })
}

/// Unit tangent vector helper for callers holding a point.
pub fn unit_vector(m: &MetricField, p: &Point, v: &[f64]) -> TangentVector {
    TangentVector::new(p, &unit(&m.values(p.as_slice()), v.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::builtin;

    #[test]
    fn smooth_step_limits() {
        assert_eq!(smooth_step(0.0), 0.0);
        assert_eq!(smooth_step(1.0), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(bump(0.7, 1.0), 1.0);
        assert_eq!(bump(2.0, 1.0), 0.0);
        assert!(bump(1.5, 1.0) > 0.0 && bump(1.5, 1.0) < 1.0);
    }

    #[test]
    fn multi_indices_count() {
        // C(n + k − 1, k) indices of order k.
        assert_eq!(multi_indices(2, 3).len(), 4);
        assert_eq!(multi_indices(3, 2).len(), 6);
        assert_eq!(multi_indices(3, 0).len(), 1);
    }

    #[test]
    fn par_map_keeps_order() {
        let v: Vec<usize> = (0..37).collect();
        assert_eq!(par_map(&v, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn product_table_is_zero() {
        let f = builtin("FIX-PRODUCT").unwrap();
        let cfg = AuditConfig { lattice: vec![3], exhaustion: vec![0.5, 1.0], ..Default::default() };
        let t = covariant_bound_table(&f.field, &cfg).unwrap();
        assert!(t.rows.iter().all(|r| r.sup_operator == 0.0 && r.sup_frobenius == 0.0));
        assert_eq!(t.verdict, Verdict::BoundedUpToSampledOrder);
    }

    #[test]
    fn coarse_lattice_rejected() {
        let f = builtin("FIX-PRODUCT").unwrap();
        let region = Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let cfg = CoverConfig { spacing: Some(0.2), ..Default::default() };
        assert!(matches!(build_cover(&f.field, &region, 0.5, &cfg), Err(Error::RegionTooCoarse { .. })));
    }

    #[test]
    fn table_interpolates_warp_chart() {
        let f = builtin("FIX-WARP").unwrap();
        let chart = NormalChart::build(&f.field, &Point::new(&[0.0, 0.0]), 1.0, 1.0, DEFAULT_CHART_STEP).unwrap();
        let t = ChartTable::new(&chart, 21).unwrap();
        let x = [0.33, -0.41];
        let y = t.forward(&x).unwrap();
        assert!((y[0] - 0.33).abs() < 1e-6 && (y[1] + 0.41 * (-0.33f64).exp()).abs() < 1e-6);
        let back = t.inverse(&y).unwrap();
        assert!((back[0] - x[0]).abs() < 1e-10 && (back[1] - x[1]).abs() < 1e-10);
    }
}
