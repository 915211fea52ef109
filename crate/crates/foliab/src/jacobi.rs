//! Adapted Jacobi fields along leafwise geodesics.
//!
//! With `Y = ∇̊_γ̇ X − T̊(γ̇, X)` the second-order equation becomes the
//! first-order pair `∇̊_γ̇ X = Y + T̊(γ̇, X)`, `∇̊_γ̇ Y = R̊(γ̇, X)γ̇`. In a
//! `∇̊`-parallel orthonormal frame `E(t)` covariant derivatives are plain
//! derivatives of components, so with `X = ξ^i E_i`, `Y = η^i E_i`:
//!
//! ```text
//! ξ' = η + M_T(t) ξ,    η' = M_R(t) ξ
//! ```
//!
//! where column `j` of `M_T` (resp. `M_R`) holds the frame components of
//! `T̊(γ̇, E_j)` (resp. `R̊(γ̇, E_j)γ̇`).

use crate::connections::{self, local_values, ConnectionKind, JetGeometry, TensorNorm, TensorValue};
use crate::error::{Error, Result};
use crate::geometry::{adapted_basis, vertical_projector, MetricField, Point, TangentVector};
use crate::linalg;
use crate::transport::{self, CurveSolution};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Relative horizontal speed above which a curve is not leafwise.
const LEAFWISE_TOL: f64 = 1e-8;

/// Frame and coefficient data along a fixed leafwise geodesic, shared by
/// all solves along it.
#[derive(Debug, Clone)]
pub struct JacobiSystem {
    pub n: usize,
    pub n_transverse: usize,
    pub gamma: CurveSolution,
    /// `∇̊`-parallel orthonormal adapted frame (columns) at each node.
    pub frames: Vec<DMatrix<f64>>,
    pub metrics: Vec<Vec<f64>>,
    pub vprojs: Vec<Vec<f64>>,
    /// Frame components of `γ̇` (constant along γ).
    pub velocity_frame: Vec<f64>,
    m_t: Vec<DMatrix<f64>>,
    m_r: Vec<DMatrix<f64>>,
    m_t_mid: Vec<DMatrix<f64>>,
    m_r_mid: Vec<DMatrix<f64>>,
    /// Frobenius norms of `T̊` and `R̊` at the nodes.
    pub torsion_norms: Vec<f64>,
    pub curvature_norms: Vec<f64>,
    pub speed: f64,
}

/// Lagrange weights for `t` on the (up to) four nodes nearest to it.
fn lagrange_stencil(times: &[f64], t: f64) -> (Vec<usize>, Vec<f64>) {
    let n = times.len();
    let width = n.min(4);
    let k = times.partition_point(|s| *s <= t).saturating_sub(1);
    let start = k.saturating_sub(1).min(n - width);
    let idx: Vec<usize> = (start..start + width).collect();
    let w = idx
        .iter()
        .map(|&i| {
            idx.iter().filter(|&&j| j != i).fold(1.0, |acc, &j| acc * (t - times[j]) / (times[i] - times[j]))
        })
        .collect();
    (idx, w)
}

fn blend(mats: &[DMatrix<f64>], idx: &[usize], w: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(mats[0].nrows(), mats[0].ncols());
    for (i, wi) in idx.iter().zip(w) {
        out += &mats[*i] * *wi;
    }
    out
}

impl JacobiSystem {
    pub fn new(m: &MetricField, gamma: &CurveSolution) -> Result<JacobiSystem> {
        let n = m.dim;
        let n1 = m.spec.n_transverse;
        if gamma.kind != ConnectionKind::Adapted {
            return Err(Error::InvalidInput("adapted Jacobi fields need an adapted (∇̊) geodesic".into()));
        }
        if gamma.len() < 2 {
            return Err(Error::InvalidInput("geodesic has fewer than two nodes".into()));
        }
        let x0 = &gamma.points[0];
        let v0 = &gamma.velocities[0];
        let g0 = m.values(x0);
        let vp0 = vertical_projector(&m.spec, &g0)?;
        let speed = linalg::gnorm(&g0, v0);
        let horiz = linalg::sub(v0, &linalg::matvec(&vp0, v0, n));
        if linalg::gnorm(&g0, &horiz) > LEAFWISE_TOL * speed.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "geodesic is not leafwise: horizontal speed {:.3e}",
                linalg::gnorm(&g0, &horiz)
            )));
        }
        let basis = adapted_basis(&m.spec, &g0)?;
        let tr = transport::transport_frame(m, ConnectionKind::Adapted, gamma, &basis)?;
        let velocity_frame = basis.clone().try_inverse().expect("orthonormal basis") * DVector::from_column_slice(v0);
        let velocity_frame: Vec<f64> = velocity_frame.iter().copied().collect();

        let coefficients = |x: &[f64], v: &[f64], e: &DMatrix<f64>| -> Result<(DMatrix<f64>, DMatrix<f64>, f64, f64, Vec<f64>, Vec<f64>)> {
            let lg = local_values(m, x)?;
            let tor = lg.adapted_torsion();
            let jg = JetGeometry::at(m, x, 2)?;
            let r = linalg::values(&jg.curvature(ConnectionKind::Adapted));
            let einv = e.clone().try_inverse().ok_or_else(|| Error::Numerical("transported frame degenerate".into()))?;
            let mut mt = DMatrix::zeros(n, n);
            let mut mr = DMatrix::zeros(n, n);
            for j in 0..n {
                let ej: Vec<f64> = e.column(j).iter().copied().collect();
                let tv = connections::apply2(n, &tor, v, &ej);
                let rv = connections::apply_curvature(n, &r, v, &ej, v);
                mt.set_column(j, &(&einv * DVector::from_vec(tv)));
                mr.set_column(j, &(&einv * DVector::from_vec(rv)));
            }
            let tn = TensorValue { n, lower: 2, components: tor }.norm(&lg.g, TensorNorm::Frobenius);
            let rn = TensorValue { n, lower: 3, components: r }.norm(&lg.g, TensorNorm::Frobenius);
            Ok((mt, mr, tn, rn, lg.g, lg.vproj))
        };

        let count = gamma.len();
        let mut sys = JacobiSystem {
            n,
            n_transverse: n1,
            gamma: tr.curve.clone(),
            frames: tr.frames.clone(),
            metrics: Vec::with_capacity(count),
            vprojs: Vec::with_capacity(count),
            velocity_frame,
            m_t: Vec::with_capacity(count),
            m_r: Vec::with_capacity(count),
            m_t_mid: Vec::with_capacity(count - 1),
            m_r_mid: Vec::with_capacity(count - 1),
            torsion_norms: Vec::with_capacity(count),
            curvature_norms: Vec::with_capacity(count),
            speed,
        };
        for k in 0..count {
            let (mt, mr, tn, rn, g, vp) = coefficients(&tr.curve.points[k], &tr.curve.velocities[k], &tr.frames[k])?;
            sys.m_t.push(mt);
            sys.m_r.push(mr);
            sys.torsion_norms.push(tn);
            sys.curvature_norms.push(rn);
            sys.metrics.push(g);
            sys.vprojs.push(vp);
        }
        // Interval midpoints: cubic interpolation of the node matrices.
        let times = &sys.gamma.times;
        for k in 0..count - 1 {
            let tm = 0.5 * (times[k] + times[k + 1]);
            let (idx, w) = lagrange_stencil(times, tm);
            sys.m_t_mid.push(blend(&sys.m_t, &idx, &w));
            sys.m_r_mid.push(blend(&sys.m_r, &idx, &w));
        }
        Ok(sys)
    }

    /// `max_t max{3, 2|T̊|²|γ̇|² + 1 + |R̊|²|γ̇|⁴}`.
    pub fn growth_constant(&self) -> f64 {
        let s2 = self.speed * self.speed;
        self.torsion_norms
            .iter()
            .zip(&self.curvature_norms)
            .map(|(t, r)| (2.0 * t * t * s2 + 1.0 + r * r * s2 * s2).max(3.0))
            .fold(3.0, f64::max)
    }

    fn rhs(mt: &DMatrix<f64>, mr: &DMatrix<f64>, xi: &DVector<f64>, eta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (eta + mt * xi, mr * xi)
    }

    /// Solves with `X(a) = x0`, `Y(a) = y0` (coordinate components).
    /// A non-vertical `y0` is projected onto the vertical space.
    pub fn solve(self: &Arc<Self>, x0: &[f64], y0: &[f64]) -> Result<JacobiSolution> {
        let n = self.n;
        if x0.len() != n || y0.len() != n {
            return Err(Error::InvalidInput("initial data has wrong length".into()));
        }
        let g0 = &self.metrics[0];
        let yv = linalg::matvec(&self.vprojs[0], y0, n);
        let moved = linalg::gnorm(g0, &linalg::sub(y0, &yv));
        if moved > 1e-10 * linalg::gnorm(g0, y0).max(1.0) {
            log::warn!("Y0 is not vertical (horizontal part {moved:.3e}); projecting");
        }
        let e0inv = self.frames[0].clone().try_inverse().expect("frame invertible");
        let mut xi = &e0inv * DVector::from_column_slice(x0);
        let mut eta = &e0inv * DVector::from_vec(yv);
        let times = &self.gamma.times;
        let mut xis = vec![xi.clone()];
        let mut etas = vec![eta.clone()];
        for k in 0..times.len() - 1 {
            let h = times[k + 1] - times[k];
            let (a0, b0) = (&self.m_t[k], &self.m_r[k]);
            let (am, bm) = (&self.m_t_mid[k], &self.m_r_mid[k]);
            let (a1, b1) = (&self.m_t[k + 1], &self.m_r[k + 1]);
            let (k1x, k1y) = Self::rhs(a0, b0, &xi, &eta);
            let (k2x, k2y) = Self::rhs(am, bm, &(&xi + &k1x * (0.5 * h)), &(&eta + &k1y * (0.5 * h)));
            let (k3x, k3y) = Self::rhs(am, bm, &(&xi + &k2x * (0.5 * h)), &(&eta + &k2y * (0.5 * h)));
            let (k4x, k4y) = Self::rhs(a1, b1, &(&xi + &k3x * h), &(&eta + &k3y * h));
            xi += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
            eta += (k1y + k2y * 2.0 + k3y * 2.0 + k4y) * (h / 6.0);
            xis.push(xi.clone());
            etas.push(eta.clone());
        }
        Ok(JacobiSolution::from_frame(self.clone(), xis, etas))
    }

    /// Numerical rank of `(X0, Y0) ↦ (X(b), Y(b))` over `T_pM ⊕ T_pF`.
    pub fn endpoint_rank(self: &Arc<Self>, threshold: f64) -> Result<usize> {
        let n = self.n;
        let n1 = self.n_transverse;
        let e0 = &self.frames[0];
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for i in 0..n + (n - n1) {
            let (x0, y0): (Vec<f64>, Vec<f64>) = if i < n {
                (e0.column(i).iter().copied().collect(), vec![0.0; n])
            } else {
                (vec![0.0; n], e0.column(n1 + i - n).iter().copied().collect())
            };
            let s = self.solve(&x0, &y0)?;
            let last = s.len() - 1;
            let v: Vec<f64> = s.xi[last].iter().chain(s.eta[last].iter()).copied().collect();
            cols.push(DVector::from_vec(v));
        }
        let mat = DMatrix::from_columns(&cols);
        let sv = mat.singular_values();
        let top = sv.max();
        Ok(sv.iter().filter(|s| **s > threshold * top.max(1.0)).count())
    }
}

/// An adapted Jacobi field sampled at the nodes of its geodesic.
#[derive(Debug, Clone)]
pub struct JacobiSolution {
    pub system: Arc<JacobiSystem>,
    /// Frame components of X and Y.
    pub xi: Vec<DVector<f64>>,
    pub eta: Vec<DVector<f64>>,
    /// Coordinate components of X and Y.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub c_const: f64,
}

impl JacobiSolution {
    fn from_frame(system: Arc<JacobiSystem>, xi: Vec<DVector<f64>>, eta: Vec<DVector<f64>>) -> JacobiSolution {
        let x = xi.iter().zip(&system.frames).map(|(c, e)| (e * c).iter().copied().collect()).collect();
        let y = eta.iter().zip(&system.frames).map(|(c, e)| (e * c).iter().copied().collect()).collect();
        let c_const = system.growth_constant();
        JacobiSolution { system, xi, eta, x, y, c_const }
    }

    pub fn gamma(&self) -> &CurveSolution {
        &self.system.gamma
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x_vector(&self, k: usize) -> TangentVector {
        TangentVector::new(&Point::new(&self.gamma().points[k]), &self.x[k])
    }

    pub fn y_vector(&self, k: usize) -> TangentVector {
        TangentVector::new(&Point::new(&self.gamma().points[k]), &self.y[k])
    }

    fn norm2(&self, k: usize, v: &[f64]) -> f64 {
        linalg::inner(&self.system.metrics[k], v, v)
    }

    /// Max over nodes of `|H Y|`, in coordinates.
    pub fn horizontal_residual(&self) -> f64 {
        let n = self.system.n;
        (0..self.len())
            .map(|k| {
                let h = linalg::sub(&self.y[k], &linalg::matvec(&self.system.vprojs[k], &self.y[k], n));
                self.norm2(k, &h).sqrt()
            })
            .fold(0.0, f64::max)
    }

    fn horizontal_norms(&self) -> Vec<f64> {
        let n = self.system.n;
        (0..self.len())
            .map(|k| {
                let h = linalg::sub(&self.x[k], &linalg::matvec(&self.system.vprojs[k], &self.x[k], n));
                self.norm2(k, &h).sqrt()
            })
            .collect()
    }

    /// `max − min` of `|H X|` over the nodes.
    pub fn horizontal_norm_deviation(&self) -> f64 {
        let v = self.horizontal_norms();
        let hi = v.iter().copied().fold(f64::MIN, f64::max);
        let lo = v.iter().copied().fold(f64::MAX, f64::min);
        hi - lo
    }

    /// `(v, γ̇)` at node `k`.
    pub fn inner_with_velocity(&self, k: usize, v: &[f64]) -> f64 {
        linalg::inner(&self.system.metrics[k], v, &self.gamma().velocities[k])
    }

    /// `max − min` of `(Y, γ̇)` over the nodes.
    pub fn y_velocity_drift(&self) -> f64 {
        let v: Vec<f64> = (0..self.len()).map(|k| self.inner_with_velocity(k, &self.y[k])).collect();
        v.iter().copied().fold(f64::MIN, f64::max) - v.iter().copied().fold(f64::MAX, f64::min)
    }

    /// Max over nodes of `|∇^F_γ̇ X̄|`, evaluated as `H(∇̊_γ̇ X) − A_{X} γ̇`.
    pub fn normal_connection_residual(&self, m: &MetricField) -> Result<f64> {
        let sys = &self.system;
        let mut worst = 0.0f64;
        for k in 0..self.len() {
            let dxi = &self.eta[k] + &sys.m_t[k] * &self.xi[k];
            let nabla: Vec<f64> = (&sys.frames[k] * dxi).iter().copied().collect();
            let lg = local_values(m, &self.gamma().points[k])?;
            let r = connections::normal_part(&lg, &nabla, &self.x[k], &self.gamma().velocities[k]);
            worst = worst.max(self.norm2(k, &r).sqrt());
        }
        Ok(worst)
    }

    /// Max over interior nodes of the central-difference residual of the
    /// first-order frame system.
    pub fn ode_residual(&self) -> f64 {
        let sys = &self.system;
        let t = &self.gamma().times;
        let mut worst = 0.0f64;
        for k in 1..self.len().saturating_sub(1) {
            let h = t[k + 1] - t[k - 1];
            let dxi = (&self.xi[k + 1] - &self.xi[k - 1]) / h;
            let deta = (&self.eta[k + 1] - &self.eta[k - 1]) / h;
            let rx = dxi - (&self.eta[k] + &sys.m_t[k] * &self.xi[k]);
            let ry = deta - &sys.m_r[k] * &self.xi[k];
            worst = worst.max(rx.amax()).max(ry.amax());
        }
        worst
    }
}

/// Builds the system along `gamma` and solves one initial-value problem.
pub fn solve_adapted_jacobi(m: &MetricField, gamma: &CurveSolution, x0: &TangentVector, y0: &TangentVector) -> Result<JacobiSolution> {
    let sys = Arc::new(JacobiSystem::new(m, gamma)?);
    sys.solve(x0.as_slice(), y0.as_slice())
}

/// `e^{C(b−a)}(|X(a)|² + |Y(a)|²) − (|X(b)|² + |Y(b)|²)`.
pub fn growth_bound_margin(sol: &JacobiSolution) -> f64 {
    let last = sol.len() - 1;
    let span = sol.gamma().times[last] - sol.gamma().times[0];
    let start = sol.norm2(0, &sol.x[0]) + sol.norm2(0, &sol.y[0]);
    let end = sol.norm2(last, &sol.x[last]) + sol.norm2(last, &sol.y[last]);
    (sol.c_const * span).exp() * start - end
}

/// `X* = X − c(t−a)γ̇`, `Y* = Y − cγ̇` with `c = (Y, γ̇)/|γ̇|²`.
pub fn normalize_jacobi(sol: &JacobiSolution) -> Result<JacobiSolution> {
    let speed2 = sol.system.speed * sol.system.speed;
    if !(speed2 > 0.0) {
        return Err(Error::InvalidInput("zero-speed geodesic".into()));
    }
    let drift = sol.y_velocity_drift();
    let scale = (sol.norm2(0, &sol.y[0]).sqrt() * sol.system.speed).max(1.0);
    if drift > 1e-6 * scale {
        return Err(Error::Numerical(format!("(Y, γ̇) is not constant along γ (drift {drift:.3e})")));
    }
    let c = sol.inner_with_velocity(0, &sol.y[0]) / speed2;
    let v = DVector::from_column_slice(&sol.system.velocity_frame);
    let t0 = sol.gamma().times[0];
    let xi = sol.xi.iter().zip(&sol.gamma().times).map(|(x, t)| x - &v * (c * (t - t0))).collect();
    let eta = sol.eta.iter().map(|y| y - &v * c).collect();
    Ok(JacobiSolution::from_frame(sol.system.clone(), xi, eta))
}

/// Central-difference variation field of the leafwise geodesic variation
/// `f(t,s) = exp̊_{ξ(s)}(t(V(s) + sW(s)))`, sampled on the nodes of `gamma`.
pub fn variation_field(m: &MetricField, gamma: &CurveSolution, x0: &TangentVector, y0: &TangentVector, h: f64) -> Result<Vec<TangentVector>> {
    if !(h > 0.0 && h <= 1e-2) {
        return Err(Error::InvalidInput(format!("variation step must lie in (0, 1e-2], got {h}")));
    }
    let n = m.dim;
    let p = Point::new(&gamma.points[0]);
    let side = |s: f64| -> Result<CurveSolution> {
        let sign = s.signum();
        let dir = TangentVector::new(&p, &x0.as_slice().iter().map(|c| sign * c).collect::<Vec<_>>());
        let step = (h / 16.0).min(gamma.step);
        let xi = transport::integrate_geodesic(m, ConnectionKind::Adapted, &p, &dir, h, step)?;
        if xi.partial {
            return Err(Error::BoundaryExit { t: xi.t_end() });
        }
        let mut vw = DMatrix::zeros(n, 2);
        vw.set_column(0, &DVector::from_column_slice(&gamma.velocities[0]));
        vw.set_column(1, &DVector::from_column_slice(y0.as_slice()));
        let tr = transport::transport_frame(m, ConnectionKind::Adapted, &xi, &vw)?;
        let last = tr.frames.len() - 1;
        let start = tr.curve.points[last].clone();
        let vel: Vec<f64> = (0..n).map(|i| tr.frames[last][(i, 0)] + s * tr.frames[last][(i, 1)]).collect();
        let q = Point::new(&start);
        let c = transport::integrate_geodesic(m, ConnectionKind::Adapted, &q, &TangentVector::new(&q, &vel), gamma.t_end(), gamma.step)?;
        if c.partial || c.len() != gamma.len() {
            return Err(Error::BoundaryExit { t: c.t_end() });
        }
        Ok(c)
    };
    let plus = side(h)?;
    let minus = side(-h)?;
    Ok((0..gamma.len())
        .map(|k| {
            let comps: Vec<f64> = (0..n).map(|i| (plus.points[k][i] - minus.points[k][i]) / (2.0 * h)).collect();
            TangentVector::new(&Point::new(&gamma.points[k]), &comps)
        })
        .collect())
}

/// Max nodewise coordinate distance between a variation field and a solution.
pub fn field_distance(a: &[TangentVector], sol: &JacobiSolution) -> f64 {
    a.iter()
        .zip(&sol.x)
        .map(|(v, x)| v.as_slice().iter().zip(x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

/// Errors of the variation field against the ODE solution at `h` and `h/2`,
/// and their ratio (≈ 4 for a second-order difference).
pub fn richardson_ratio(m: &MetricField, sol: &JacobiSolution, h: f64) -> Result<(f64, f64, f64)> {
    let x0 = sol.x_vector(0);
    let y0 = sol.y_vector(0);
    let e1 = field_distance(&variation_field(m, sol.gamma(), &x0, &y0, h)?, sol);
    let e2 = field_distance(&variation_field(m, sol.gamma(), &x0, &y0, h / 2.0)?, sol);
    Ok((e1, e2, e1 / e2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::builtin;

    fn leaf_curve(name: &str, p: &[f64], v: &[f64], t: f64) -> (MetricField, CurveSolution) {
        let f = builtin(name).unwrap();
        let pt = Point::new(p);
        let c = transport::integrate_geodesic(&f.field, ConnectionKind::Adapted, &pt, &TangentVector::new(&pt, v), t, 1e-3).unwrap();
        (f.field, c)
    }

    #[test]
    fn lagrange_weights_reproduce_cubics() {
        let t = [0.0, 0.1, 0.2, 0.3, 0.35];
        let (idx, w) = lagrange_stencil(&t, 0.27);
        let f = |x: f64| 1.0 - 2.0 * x + x * x * x;
        let v: f64 = idx.iter().zip(&w).map(|(i, wi)| wi * f(t[*i])).sum();
        assert!((v - f(0.27)).abs() < 1e-14);
    }

    #[test]
    fn velocity_is_a_jacobi_field() {
        let (m, c) = leaf_curve("FIX-WARP", &[0.3, -0.2], &[0.0, 0.8], 1.0);
        let sys = Arc::new(JacobiSystem::new(&m, &c).unwrap());
        let s = sys.solve(&c.velocities[0], &[0.0, 0.0]).unwrap();
        for k in 0..s.len() {
            for i in 0..2 {
                assert!((s.x[k][i] - c.velocities[k][i]).abs() < 1e-9);
            }
        }
        let s = sys.solve(&[0.0, 0.0], &c.velocities[0]).unwrap();
        for k in 0..s.len() {
            for i in 0..2 {
                assert!((s.x[k][i] - c.times[k] * c.velocities[k][i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_transverse_geodesic() {
        let (m, c) = leaf_curve("FIX-WARP", &[0.0, 0.0], &[1.0, 0.0], 0.5);
        assert!(JacobiSystem::new(&m, &c).is_err());
    }

    #[test]
    fn product_fields_are_constant() {
        let (m, c) = leaf_curve("FIX-PRODUCT", &[0.0, 0.0], &[0.0, 1.0], 1.0);
        let s = solve_adapted_jacobi(&m, &c, &c.velocity(0), &TangentVector::new(&c.point(0), &[0.0, 0.0])).unwrap();
        let p = c.point(0);
        let s2 = solve_adapted_jacobi(&m, &c, &TangentVector::new(&p, &[1.0, 0.0]), &TangentVector::new(&p, &[0.0, 0.0])).unwrap();
        assert_eq!(s.c_const, 3.0);
        for x in &s2.x {
            assert!((x[0] - 1.0).abs() < 1e-14 && x[1].abs() < 1e-14);
        }
    }

    #[test]
    fn warp_invariants_hold() {
        let (m, c) = leaf_curve("FIX-WARP", &[0.2, 0.1], &[0.0, 1.0], 1.0);
        let sys = Arc::new(JacobiSystem::new(&m, &c).unwrap());
        assert_eq!(sys.endpoint_rank(1e-6).unwrap(), 3);
        let s = sys.solve(&[0.7, -0.4], &[0.0, 0.5]).unwrap();
        assert!(s.horizontal_residual() < 1e-6);
        assert!(s.horizontal_norm_deviation() < 1e-6);
        assert!(s.normal_connection_residual(&m).unwrap() < 1e-6);
        assert!(growth_bound_margin(&s) >= -1e-8);
        let ns = normalize_jacobi(&s).unwrap();
        for k in 0..ns.len() {
            assert!(ns.inner_with_velocity(k, &ns.y[k]).abs() < 1e-8);
        }
    }
}

#[cfg(test)]
mod variation_tests {
    use super::*;
    use crate::fixtures::builtin;

    #[test]
    fn variation_matches_ode_at_second_order() {
        let f = builtin("FIX-WARP").unwrap();
        let p = Point::new(&[0.2, 0.1]);
        let c = transport::integrate_geodesic(&f.field, ConnectionKind::Adapted, &p, &TangentVector::new(&p, &[0.0, 1.0]), 1.0, 1e-3).unwrap();
        let s = solve_adapted_jacobi(&f.field, &c, &TangentVector::new(&p, &[0.6, 0.3]), &TangentVector::new(&p, &[0.0, -0.4])).unwrap();
        let (e1, e2, ratio) = richardson_ratio(&f.field, &s, 1e-2).unwrap();
        eprintln!("{e1:e} {e2:e} {ratio}");
        assert!((3.5..=4.5).contains(&ratio));
    }
}
