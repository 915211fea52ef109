//! Geodesics, parallel transport and the adapted exponential map.
//!
//! All integration is classical fixed-step RK4. Node times are `k·step`
//! plus a final partial step, so a longer run shares its prefix with a
//! shorter one bit for bit. Leaving the chart box stops integration and
//! flags the solution as partial.

use crate::connections::{christoffel_values, connection_values, ConnectionKind};
use crate::error::{Error, Result};
use crate::fixtures::{Fixture, Submersion};
use crate::geometry::{Domain, Metric, MetricField, Point, TangentVector};
use crate::linalg;
use nalgebra::DMatrix;

/// Where connection coefficients come from.
#[derive(Clone, Copy)]
pub enum Source<'a> {
    Field(&'a MetricField, ConnectionKind),
    Plain(&'a Metric),
}

impl<'a> Source<'a> {
    pub fn dim(&self) -> usize {
        match self {
            Source::Field(m, _) => m.dim,
            Source::Plain(m) => m.dim,
        }
    }

    pub fn domain(&self) -> &'a Domain {
        match self {
            Source::Field(m, _) => &m.domain,
            Source::Plain(m) => &m.domain,
        }
    }

    pub fn kind(&self) -> ConnectionKind {
        match self {
            Source::Field(_, k) => *k,
            Source::Plain(_) => ConnectionKind::LeviCivita,
        }
    }

    pub fn coefficients(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Source::Field(m, k) => connection_values(m, x, *k),
            Source::Plain(m) => christoffel_values(m, x),
        }
    }

    pub fn metric_values(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Source::Field(m, _) => m.values(x),
            Source::Plain(m) => m.values(x),
        }
    }
}

/// `−C^i_{jk} u^j w^k`.
pub fn contract(n: usize, c: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if u[j] == 0.0 {
                continue;
            }
            for k in 0..n {
                s += c[(i * n + j) * n + k] * u[j] * w[k];
            }
        }
        out[i] = -s;
    }
    out
}

/// Node times for `[0, t_end]`.
pub fn time_grid(t_end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!("t_end must be non-negative, got {t_end}")));
    }
    let full = (t_end / step).floor() as usize;
    let mut t: Vec<f64> = (0..=full).map(|k| k as f64 * step).collect();
    if t_end - full as f64 * step > 1e-12 * step {
        t.push(t_end);
    }
    Ok(t)
}

/// One RK4 step of an autonomous system.
pub fn rk4_step<F>(y: &[f64], h: f64, f: &mut F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let k1 = f(y)?;
    let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
    let k2 = f(&y2)?;
    let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
    let k3 = f(&y3)?;
    let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
    let k4 = f(&y4)?;
    Ok((0..y.len()).map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// A discretized geodesic with cubic Hermite dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSolution {
    pub kind: ConnectionKind,
    pub step: f64,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub accelerations: Vec<Vec<f64>>,
    /// Set when integration stopped at the chart boundary.
    pub partial: bool,
}

fn hermite(t0: f64, t1: f64, y0: &[f64], d0: &[f64], y1: &[f64], d1: &[f64], t: f64) -> Vec<f64> {
    let h = t1 - t0;
    if h == 0.0 {
        return y0.to_vec();
    }
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    (0..y0.len()).map(|i| h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i]).collect()
}

impl CurveSolution {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn end_point(&self) -> &[f64] {
        self.points.last().unwrap()
    }

    pub fn end_velocity(&self) -> &[f64] {
        self.velocities.last().unwrap()
    }

    pub fn point(&self, k: usize) -> Point {
        Point::new(&self.points[k])
    }

    pub fn velocity(&self, k: usize) -> TangentVector {
        TangentVector::new(&self.point(k), &self.velocities[k])
    }

    fn interval(&self, t: f64) -> usize {
        match self.times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(k) => k.min(self.len().saturating_sub(2)),
            Err(k) => k.saturating_sub(1).min(self.len().saturating_sub(2)),
        }
    }

    /// `(γ(t), γ̇(t))` by Hermite interpolation of the nodes.
    pub fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        if self.len() == 1 {
            return (self.points[0].clone(), self.velocities[0].clone());
        }
        let k = self.interval(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let x = hermite(t0, t1, &self.points[k], &self.velocities[k], &self.points[k + 1], &self.velocities[k + 1], t);
        let v = hermite(
            t0,
            t1,
            &self.velocities[k],
            &self.accelerations[k],
            &self.velocities[k + 1],
            &self.accelerations[k + 1],
            t,
        );
        (x, v)
    }

    /// Max relative drift of `|γ̇|_g` along the nodes.
    pub fn speed_drift(&self, metric: &Metric) -> f64 {
        let speeds: Vec<f64> =
            self.points.iter().zip(&self.velocities).map(|(x, v)| linalg::gnorm(&metric.values(x), v)).collect();
        let s0 = speeds[0].max(1e-300);
        speeds.iter().map(|s| (s - speeds[0]).abs() / s0).fold(0.0, f64::max)
    }

    /// Max over interior nodes of `|ẍ + C(ẋ,ẋ)|`, with `ẍ` from central
    /// differences of the stored velocities (an O(h²) check).
    pub fn geodesic_residual(&self, src: Source<'_>) -> Result<f64> {
        let n = src.dim();
        let mut worst = 0.0f64;
        for k in 1..self.len().saturating_sub(1) {
            let h0 = self.times[k] - self.times[k - 1];
            let h1 = self.times[k + 1] - self.times[k];
            if (h0 - h1).abs() > 1e-12 * h0 {
                continue;
            }
            let c = src.coefficients(&self.points[k])?;
            let acc = contract(n, &c, &self.velocities[k], &self.velocities[k]);
            for i in 0..n {
                let fd = (self.velocities[k + 1][i] - self.velocities[k - 1][i]) / (2.0 * h0);
                worst = worst.max((fd - acc[i]).abs());
            }
        }
        Ok(worst)
    }
}

/// Integrates the geodesic equation of `src` from `x0` with velocity `v0`.
pub fn integrate_with(src: Source<'_>, x0: &[f64], v0: &[f64], t_end: f64, step: f64) -> Result<CurveSolution> {
    let n = src.dim();
    if x0.len() != n || v0.len() != n {
        return Err(Error::InvalidInput("geodesic initial data has wrong length".into()));
    }
    let domain = src.domain();
    if !domain.contains(x0) {
        return Err(Error::OutsideDomain { point: x0.to_vec() });
    }
    let times = time_grid(t_end, step)?;
    let mut rhs = |y: &[f64]| -> Result<Vec<f64>> {
        let c = src.coefficients(&y[..n])?;
        let mut d = y[n..].to_vec();
        d.extend(contract(n, &c, &y[n..], &y[n..]));
        Ok(d)
    };
    let mut state: Vec<f64> = x0.iter().chain(v0).copied().collect();
    let mut sol = CurveSolution {
        kind: src.kind(),
        step,
        times: vec![0.0],
        points: vec![x0.to_vec()],
        velocities: vec![v0.to_vec()],
        accelerations: vec![rhs(&state)?[n..].to_vec()],
        partial: false,
    };
    for k in 1..times.len() {
        let h = times[k] - times[k - 1];
        let next = rk4_step(&state, h, &mut rhs)?;
        if !next.iter().all(|v| v.is_finite()) || !domain.contains(&next[..n]) {
            sol.partial = true;
            break;
        }
        state = next;
        sol.times.push(times[k]);
        sol.points.push(state[..n].to_vec());
        sol.velocities.push(state[n..].to_vec());
        sol.accelerations.push(rhs(&state)?[n..].to_vec());
    }
    Ok(sol)
}

/// Geodesic of `∇` or `∇̊` from `p` with initial velocity `v` on `[0, t_end]`.
pub fn integrate_geodesic(
    m: &MetricField,
    kind: ConnectionKind,
    p: &Point,
    v: &TangentVector,
    t_end: f64,
    step: f64,
) -> Result<CurveSolution> {
    if v.components.len() != m.dim {
        return Err(Error::InvalidInput("velocity has wrong length".into()));
    }
    let kind = if kind == ConnectionKind::Breve { ConnectionKind::Adapted } else { kind };
    integrate_with(Source::Field(m, kind), p.as_slice(), v.as_slice(), t_end, step)
}

/// Parallel-transported vectors along a curve.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub curve: CurveSolution,
    /// Per node, the transported vectors as columns.
    pub frames: Vec<DMatrix<f64>>,
}

impl TransportSolution {
    pub fn vector(&self, node: usize, col: usize) -> Vec<f64> {
        self.frames[node].column(col).iter().copied().collect()
    }

    /// Max drift of the Gram matrix `Pᵀ g P` over the nodes.
    pub fn gram_drift(&self, metric: &Metric) -> f64 {
        let gram = |k: usize| {
            let g = linalg::to_dmatrix(&metric.values(&self.curve.points[k]), metric.dim);
            self.frames[k].transpose() * g * &self.frames[k]
        };
        let g0 = gram(0);
        (0..self.frames.len()).map(|k| (gram(k) - &g0).abs().max()).fold(0.0, f64::max)
    }
}

/// Transports the columns of `frame` along `curve`, re-integrating the
/// joint system on the curve's own time grid.
pub fn transport_with(src: Source<'_>, curve: &CurveSolution, frame: &DMatrix<f64>) -> Result<TransportSolution> {
    let n = src.dim();
    let cols = frame.ncols();
    if frame.nrows() != n {
        return Err(Error::InvalidInput("transported vectors have wrong length".into()));
    }
    let mut rhs = |y: &[f64]| -> Result<Vec<f64>> {
        let c = src.coefficients(&y[..n])?;
        let v = &y[n..2 * n];
        let mut d = v.to_vec();
        d.extend(contract(n, &c, v, v));
        for col in 0..cols {
            let p = &y[2 * n + col * n..2 * n + (col + 1) * n];
            d.extend(contract(n, &c, p, v));
        }
        Ok(d)
    };
    let mut state: Vec<f64> = curve.points[0].iter().chain(&curve.velocities[0]).copied().collect();
    state.extend(frame.iter());
    let unpack = |s: &[f64]| DMatrix::from_column_slice(n, cols, &s[2 * n..]);
    let mut frames = vec![unpack(&state)];
    let mut points = vec![curve.points[0].clone()];
    let mut velocities = vec![curve.velocities[0].clone()];
    for k in 1..curve.len() {
        let h = curve.times[k] - curve.times[k - 1];
        state = rk4_step(&state, h, &mut rhs)?;
        frames.push(unpack(&state));
        points.push(state[..n].to_vec());
        velocities.push(state[n..2 * n].to_vec());
    }
    let mut base = curve.clone();
    base.points = points;
    base.velocities = velocities;
    Ok(TransportSolution { curve: base, frames })
}

/// Parallel transport of `v0` along `curve` for the chosen connection.
pub fn parallel_transport(m: &MetricField, kind: ConnectionKind, curve: &CurveSolution, v0: &TangentVector) -> Result<TransportSolution> {
    if v0.components.len() != m.dim {
        return Err(Error::InvalidInput("vector has wrong length".into()));
    }
    let frame = DMatrix::from_column_slice(m.dim, 1, v0.as_slice());
    transport_with(Source::Field(m, kind), curve, &frame)
}

/// Transport of several vectors at once.
pub fn transport_frame(m: &MetricField, kind: ConnectionKind, curve: &CurveSolution, frame: &DMatrix<f64>) -> Result<TransportSolution> {
    transport_with(Source::Field(m, kind), curve, frame)
}

/// `exp̊_p(v)`: endpoint of the adapted geodesic at time 1.
pub fn adapted_exp(m: &MetricField, p: &Point, v: &TangentVector, step: f64) -> Result<Point> {
    let c = integrate_geodesic(m, ConnectionKind::Adapted, p, v, 1.0, step)?;
    if c.partial {
        return Err(Error::BoundaryExit { t: c.t_end() });
    }
    Ok(Point::new(c.end_point()))
}

/// Exponential map of a plain metric (for the base of a submersion).
pub fn metric_exp(metric: &Metric, x: &[f64], v: &[f64], step: f64) -> Result<Vec<f64>> {
    let c = integrate_with(Source::Plain(metric), x, v, 1.0, step)?;
    if c.partial {
        return Err(Error::BoundaryExit { t: c.t_end() });
    }
    Ok(c.end_point().to_vec())
}

/// Geodesic of the leaf through `p` in its induced metric (the leafwise
/// block of g with `x'` frozen). `w` holds the `n''` leafwise components.
pub fn leaf_exp(m: &MetricField, p: &Point, w: &[f64], step: f64) -> Result<Point> {
    let (n, n1, n2) = (m.dim, m.spec.n_transverse, m.spec.n_leafwise);
    if w.len() != n2 {
        return Err(Error::InvalidInput("leaf vector needs n'' components".into()));
    }
    let xt: Vec<f64> = p.as_slice()[..n1].to_vec();
    let lo = m.domain.lo[n1..].to_vec();
    let hi = m.domain.hi[n1..].to_vec();
    let leaf_domain = Domain::new(lo, hi)?;
    let full = |z: &[f64]| -> Vec<f64> { xt.iter().chain(z).copied().collect() };
    let coeffs = |z: &[f64]| -> Result<Vec<f64>> {
        let (g, dg) = m.values_and_gradient(&full(z));
        let block: Vec<f64> = (0..n2 * n2).map(|e| g[(n1 + e / n2) * n + n1 + e % n2]).collect();
        let dblock: Vec<f64> =
            (0..n2 * n2 * n2).map(|e| dg[(n1 + e / (n2 * n2)) * n * n + (n1 + (e / n2) % n2) * n + n1 + e % n2]).collect();
        let inv = linalg::inverse(&block, n2).ok_or(Error::DegenerateMetric { condition: f64::INFINITY })?;
        Ok(crate::connections::christoffel_from(n2, &inv, &dblock))
    };
    let times = time_grid(1.0, step)?;
    let mut rhs = |y: &[f64]| -> Result<Vec<f64>> {
        let c = coeffs(&y[..n2])?;
        let mut d = y[n2..].to_vec();
        d.extend(contract(n2, &c, &y[n2..], &y[n2..]));
        Ok(d)
    };
    let mut state: Vec<f64> = p.as_slice()[n1..].iter().chain(w).copied().collect();
    for k in 1..times.len() {
        state = rk4_step(&state, times[k] - times[k - 1], &mut rhs)?;
        if !leaf_domain.contains(&state[..n2]) {
            return Err(Error::BoundaryExit { t: times[k] });
        }
    }
    Ok(Point::new(&full(&state[..n2])))
}

fn submersion_of(fx: &Fixture) -> Result<&Submersion> {
    fx.submersion
        .as_ref()
        .ok_or_else(|| Error::Unsupported(format!("fixture '{}' declares no distinguished submersion", fx.name)))
}

/// `‖π(exp̊_p v) − exp̌_{π(p)}(π_* v)‖` in base coordinates.
pub fn submersion_commutation_residual(fx: &Fixture, p: &Point, v: &TangentVector, step: f64) -> Result<f64> {
    let s = submersion_of(fx)?;
    let up = adapted_exp(&fx.field, p, v, step)?;
    let lhs = s.project(up.as_slice());
    let d = s.differential(p.as_slice());
    let w: Vec<f64> = (0..d.nrows()).map(|a| (0..d.ncols()).map(|k| d[(a, k)] * v.components[k]).sum()).collect();
    let rhs = metric_exp(&s.base, &s.project(p.as_slice()), &w, step)?;
    Ok(lhs.iter().zip(&rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Whether `exp̊ E` and `exp̊ F` lie on the same plaque (same π-value within `tol`).
pub fn plaque_criterion_check(fx: &Fixture, p: &Point, e: &TangentVector, f: &TangentVector, step: f64, tol: f64) -> Result<bool> {
    let s = submersion_of(fx)?;
    let a = s.project(adapted_exp(&fx.field, p, e, step)?.as_slice());
    let b = s.project(adapted_exp(&fx.field, p, f, step)?.as_slice());
    Ok(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::builtin;

    #[test]
    fn grid_has_partial_last_step() {
        let t = time_grid(0.25, 0.1).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(*t.last().unwrap(), 0.25);
        assert!(time_grid(1.0, 0.0).is_err());
    }

    #[test]
    fn product_geodesic_is_straight() {
        let f = builtin("FIX-PRODUCT").unwrap();
        let p = Point::new(&[0.1, 0.2]);
        let c = integrate_geodesic(&f.field, ConnectionKind::LeviCivita, &p, &TangentVector::new(&p, &[0.0, 1.0]), 1.0, 1e-2).unwrap();
        assert!((c.end_point()[1] - 1.2).abs() < 1e-14);
        assert_eq!(c.end_point()[0], 0.1);
    }

    #[test]
    fn warp_vertical_adapted_geodesic_stays_on_leaf() {
        let f = builtin("FIX-WARP").unwrap();
        let p = Point::new(&[0.0, 0.0]);
        let c = integrate_geodesic(&f.field, ConnectionKind::Adapted, &p, &TangentVector::new(&p, &[0.0, 1.0]), 1.0, 1e-3).unwrap();
        for (x, t) in c.points.iter().zip(&c.times) {
            assert!(x[0].abs() < 1e-14);
            assert!((x[1] - t).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_exit_is_flagged() {
        let f = builtin("FIX-PRODUCT").unwrap();
        let p = Point::new(&[4.5, 0.0]);
        let c = integrate_geodesic(&f.field, ConnectionKind::LeviCivita, &p, &TangentVector::new(&p, &[1.0, 0.0]), 1.0, 1e-2).unwrap();
        assert!(c.partial);
        assert!(adapted_exp(&f.field, &p, &TangentVector::new(&p, &[1.0, 0.0]), 1e-2).is_err());
    }

    #[test]
    fn hermite_reproduces_cubic() {
        let y = hermite(0.0, 1.0, &[0.0], &[0.0], &[1.0], &[3.0], 0.5);
        assert!((y[0] - 0.125).abs() < 1e-15);
    }
}
