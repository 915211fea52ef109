//! Normal foliation charts.
//!
//! The chart map at `p` sends `x = (x', x'')` to the endpoint of a two-leg
//! construction: a horizontal `∇̊`-geodesic from `p` with velocity
//! `Σ x'^a e_a` (transporting the whole orthonormal basis), then a leafwise
//! `∇̊`-geodesic with velocity `Σ x''^b s_b` (transporting the frame
//! again). Both legs use a fixed number of RK4 steps determined by the
//! chart radii, so the numerical map is smooth in `x` and can be pushed
//! through Taylor jets to get exact derivatives of the discrete map.
//!
//! Index conventions for chart-level arrays:
//! - `a[i*n + j]`: `θ^i = a^i_j dx^j` (frame coefficients);
//! - `gamma_frame[(i*n + j)*n + k]`: `∇̊_{∂_k} s_j = Γ^i_{jk} s_i`;
//! - `gamma[(i*n + j)*n + k]`: `∇̊_{∂_k} ∂_j = Γ^i_{jk} ∂_i`;
//! - `torsion_frame[(i*n + k)*n + l]`: frame component `i` of `T̊(∂_k, ∂_l)`;
//! - `curvature_frame[((i*n + j)*n + k)*n + l]`: frame component `i` of
//!   `R̊(∂_k, ∂_l) s_j`; the plain version uses `∂_j` and chart components.

use crate::connections::{self, covariant_derivative, local_geometry, ConnectionKind, JetGeometry, LocalGeometry};
use crate::error::{Error, Result};
use crate::geometry::{adapted_basis, MetricField, Point};
use crate::jet::{Jet, Scalar};
use crate::linalg;
use crate::transport;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Default RK4 step (in units of geodesic length) for both legs.
pub const DEFAULT_CHART_STEP: f64 = 1e-2;

/// Scalars the chart construction can be run on.
pub trait ChartScalar: Scalar {
    fn adapted_coefficients(m: &MetricField, y: &[Self]) -> Result<Vec<Self>>;
}

impl ChartScalar for f64 {
    fn adapted_coefficients(m: &MetricField, y: &[f64]) -> Result<Vec<f64>> {
        connections::connection_values(m, y, ConnectionKind::Adapted)
    }
}

impl ChartScalar for Jet {
    fn adapted_coefficients(m: &MetricField, y: &[Jet]) -> Result<Vec<Jet>> {
        let (g, dg) = m.on_jets(y)?;
        Ok(local_geometry(&m.spec, &g, &dg)?.adapted)
    }
}

#[inline]
fn ix3(n: usize, a: usize, b: usize, c: usize) -> usize {
    (a * n + b) * n + c
}

#[inline]
fn ix4(n: usize, a: usize, b: usize, c: usize, d: usize) -> usize {
    ((a * n + b) * n + c) * n + d
}

/// `−C^i_{jk} u^j w^k` over any scalar.
fn contract<S: Scalar>(n: usize, c: &[S], u: &[S], w: &[S]) -> Vec<S> {
    let proto = &u[0];
    (0..n)
        .map(|i| {
            let mut acc = proto.lift(0.0);
            for j in 0..n {
                if u[j].is_zero() {
                    continue;
                }
                let mut inner = proto.lift(0.0);
                for k in 0..n {
                    inner = inner.fma(&c[ix3(n, i, j, k)], &w[k]);
                }
                acc = acc.fma(&u[j], &inner);
            }
            acc.negate()
        })
        .collect()
}

fn rk4_generic<S: Scalar, F>(y: &[S], h: f64, f: &mut F) -> Result<Vec<S>>
where
    F: FnMut(&[S]) -> Result<Vec<S>>,
{
    let add = |y: &[S], k: &[S], s: f64| -> Vec<S> { y.iter().zip(k).map(|(a, b)| a.plus(&b.scale(s))).collect() };
    let k1 = f(y)?;
    let k2 = f(&add(y, &k1, 0.5 * h))?;
    let k3 = f(&add(y, &k2, 0.5 * h))?;
    let k4 = f(&add(y, &k3, h))?;
    Ok((0..y.len())
        .map(|i| {
            let s = k1[i].plus(&k2[i].scale(2.0)).plus(&k3[i].scale(2.0)).plus(&k4[i]);
            y[i].plus(&s.scale(h / 6.0))
        })
        .collect())
}

/// Adapted geodesic on `τ ∈ [0,1]` with `steps` RK4 steps, transporting
/// the given columns. Returns the endpoint and the transported columns.
fn shoot<S: ChartScalar>(m: &MetricField, x0: &[S], v0: &[S], cols: &[Vec<S>], steps: usize) -> Result<(Vec<S>, Vec<Vec<S>>)> {
    let n = m.dim;
    let nc = cols.len();
    let mut state: Vec<S> = x0.iter().chain(v0).cloned().collect();
    for c in cols {
        state.extend(c.iter().cloned());
    }
    let mut rhs = |y: &[S]| -> Result<Vec<S>> {
        let c = S::adapted_coefficients(m, &y[..n])?;
        let v = &y[n..2 * n];
        let mut d = v.to_vec();
        d.extend(contract(n, &c, v, v));
        for col in 0..nc {
            d.extend(contract(n, &c, &y[2 * n + col * n..2 * n + (col + 1) * n], v));
        }
        Ok(d)
    };
    let h = 1.0 / steps as f64;
    for k in 0..steps {
        state = rk4_generic(&state, h, &mut rhs)?;
        let x: Vec<f64> = state[..n].iter().map(|s| s.value()).collect();
        if !x.iter().all(|v| v.is_finite()) || !m.domain.contains(&x) {
            return Err(Error::BoundaryExit { t: (k + 1) as f64 * h });
        }
    }
    let end = state[..n].to_vec();
    let out = (0..nc).map(|c| state[2 * n + c * n..2 * n + (c + 1) * n].to_vec()).collect();
    Ok((end, out))
}

/// A normal foliation chart at a point.
#[derive(Debug, Clone)]
pub struct NormalChart {
    pub field: MetricField,
    pub center: Point,
    pub r_transverse: f64,
    pub r_leafwise: f64,
    /// Orthonormal adapted basis at the center (columns; first `n'` horizontal).
    pub basis: DMatrix<f64>,
    pub step: f64,
    steps_transverse: usize,
    steps_leafwise: usize,
}

/// Frame coefficients `θ^i = a^i_j dx^j` and their inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCoefficients {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl NormalChart {
    /// Builds the chart, halving both radii (up to three times) when the
    /// construction leaves the domain at test points of `B' × B''`.
    pub fn build(m: &MetricField, p: &Point, r_transverse: f64, r_leafwise: f64, step: f64) -> Result<NormalChart> {
        if !(r_transverse > 0.0 && r_leafwise > 0.0 && step > 0.0) {
            return Err(Error::InvalidInput("chart radii and step must be positive".into()));
        }
        let (mut r1, mut r2) = (r_transverse, r_leafwise);
        for attempt in 0..4 {
            let chart = NormalChart::unprobed(m, p, r1, r2, step)?;
            match chart.probe() {
                Ok(()) => return Ok(chart),
                Err(Error::BoundaryExit { .. }) if attempt < 3 => {
                    log::warn!("normal chart at {:?} leaves the domain at radii ({r1}, {r2}); halving", p.as_slice());
                    r1 *= 0.5;
                    r2 *= 0.5;
                }
                Err(Error::BoundaryExit { .. }) => return Err(Error::ChartTooLarge { r_transverse: r1, r_leafwise: r2 }),
                Err(e) => return Err(e),
            }
        }
        unreachable!()
    }

    /// The chart at the given radii without checking that `B' × B''` maps
    /// into the domain; evaluations outside report `BoundaryExit`.
    pub fn unprobed(m: &MetricField, p: &Point, r_transverse: f64, r_leafwise: f64, step: f64) -> Result<NormalChart> {
        if !(r_transverse > 0.0 && r_leafwise > 0.0 && step > 0.0) {
            return Err(Error::InvalidInput("chart radii and step must be positive".into()));
        }
        m.check(p.as_slice())?;
        Ok(NormalChart {
            field: m.clone(),
            center: p.clone(),
            r_transverse,
            r_leafwise,
            basis: adapted_basis(&m.spec, &m.values(p.as_slice()))?,
            step,
            steps_transverse: (r_transverse / step).ceil().max(1.0) as usize,
            steps_leafwise: (r_leafwise / step).ceil().max(1.0) as usize,
        })
    }

    pub fn n(&self) -> usize {
        self.field.dim
    }

    pub fn n_transverse(&self) -> usize {
        self.field.spec.n_transverse
    }

    /// Boundary points of `B' × B''` along the axes and their corners.
    pub fn probe_points(&self) -> Vec<Vec<f64>> {
        let (n, n1) = (self.n(), self.n_transverse());
        let mut tv: Vec<Vec<f64>> = vec![vec![0.0; n1]];
        let mut lv: Vec<Vec<f64>> = vec![vec![0.0; n - n1]];
        for a in 0..n1 {
            for s in [-1.0, 1.0] {
                let mut v = vec![0.0; n1];
                v[a] = s * self.r_transverse;
                tv.push(v);
            }
        }
        for b in 0..n - n1 {
            for s in [-1.0, 1.0] {
                let mut v = vec![0.0; n - n1];
                v[b] = s * self.r_leafwise;
                lv.push(v);
            }
        }
        let mut out = Vec::new();
        for t in &tv {
            for l in &lv {
                out.push(t.iter().chain(l).copied().collect());
            }
        }
        out
    }

    fn probe(&self) -> Result<()> {
        for x in self.probe_points() {
            self.forward_generic::<f64>(&x)?;
        }
        Ok(())
    }

    /// Whether `x` lies in `B' × B''`.
    pub fn contains(&self, x: &[f64]) -> bool {
        let n1 = self.n_transverse();
        let r1 = x[..n1].iter().map(|v| v * v).sum::<f64>().sqrt();
        let r2 = x[n1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        r1 < self.r_transverse && r2 < self.r_leafwise
    }

    /// The chart map and the frame `s_1..s_n` (columns, ambient components).
    pub fn forward_generic<S: ChartScalar>(&self, x: &[S]) -> Result<(Vec<S>, Vec<Vec<S>>)> {
        let (n, n1) = (self.n(), self.n_transverse());
        if x.len() != n {
            return Err(Error::InvalidInput(format!("chart point needs {n} coordinates")));
        }
        let proto = &x[0];
        let p: Vec<S> = self.center.as_slice().iter().map(|&v| proto.lift(v)).collect();
        let cols: Vec<Vec<S>> = (0..n).map(|j| (0..n).map(|i| proto.lift(self.basis[(i, j)])).collect()).collect();
        let mut v1: Vec<S> = vec![proto.lift(0.0); n];
        for a in 0..n1 {
            for i in 0..n {
                v1[i] = v1[i].fma(&x[a], &cols[a][i]);
            }
        }
        let (q, s) = shoot(&self.field, &p, &v1, &cols, self.steps_transverse)?;
        let mut v2: Vec<S> = vec![proto.lift(0.0); n];
        for b in n1..n {
            for i in 0..n {
                v2[i] = v2[i].fma(&x[b], &s[b][i]);
            }
        }
        shoot(&self.field, &q, &v2, &s, self.steps_leafwise)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Point> {
        Ok(Point::new(&self.forward_generic::<f64>(x)?.0))
    }

    /// Frame `s_1..s_n` at `x` as matrix columns.
    pub fn frame(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let (_, s) = self.forward_generic::<f64>(x)?;
        let n = self.n();
        Ok(DMatrix::from_fn(n, n, |i, j| s[j][i]))
    }

    /// Value and Jacobian of the chart map at `x`.
    pub fn forward_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let n = self.n();
        let (k, _) = self.forward_generic(&Jet::seed(x, 1))?;
        Ok((k.iter().map(|j| j.value()).collect(), DMatrix::from_fn(n, n, |i, c| k[i].d1(c))))
    }

    /// Chart coordinates of an ambient point by damped Newton, seeded with
    /// the linearisation at the center (the chart differential there is
    /// the chosen orthonormal basis).
    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if y.len() != n {
            return Err(Error::InvalidInput("ambient point has wrong length".into()));
        }
        let einv = self.basis.clone().try_inverse().expect("basis invertible");
        let d = DVector::from_iterator(n, (0..n).map(|i| y[i] - self.center.as_slice()[i]));
        let x0: Vec<f64> = (&einv * d).iter().copied().collect();
        self.inverse_from(y, &x0)
    }

    pub fn inverse_from(&self, y: &[f64], seed: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let resid = |k: &[f64]| (0..n).map(|i| (y[i] - k[i]).powi(2)).sum::<f64>().sqrt();
        let mut x = seed.to_vec();
        let (mut k, mut jac) = self.forward_with_jacobian(&x)?;
        let mut r = resid(&k);
        let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for _ in 0..50 {
            if r <= 1e-14 * scale {
                return Ok(x);
            }
            let rhs = DVector::from_iterator(n, (0..n).map(|i| y[i] - k[i]));
            let dx = jac.clone().lu().solve(&rhs).ok_or_else(|| Error::Numerical("singular chart Jacobian".into()))?;
            let mut lambda = 1.0;
            loop {
                let trial: Vec<f64> = (0..n).map(|i| x[i] + lambda * dx[i]).collect();
                match self.forward_with_jacobian(&trial) {
                    Ok((kt, jt)) if resid(&kt) < r || lambda < 1e-3 => {
                        let rt = resid(&kt);
                        if rt >= r && lambda < 1e-3 {
                            return if r <= 1e-10 * scale { Ok(x) } else { Err(Error::Numerical("chart inverse stalled".into())) };
                        }
                        x = trial;
                        k = kt;
                        jac = jt;
                        r = rt;
                        break;
                    }
                    Ok(_) | Err(Error::BoundaryExit { .. }) if lambda >= 1e-3 => lambda *= 0.5,
                    Ok(_) => return Err(Error::Numerical("chart inverse stalled".into())),
                    Err(e) => return Err(e),
                }
            }
        }
        if r <= 1e-10 * scale {
            Ok(x)
        } else {
            Err(Error::Numerical(format!("chart inverse did not converge (residual {r:.3e})")))
        }
    }

    /// `θ^i = a^i_j dx^j` with respect to chart coordinates, and `b = a^{-1}`.
    pub fn frame_coefficients(&self, x: &[f64]) -> Result<FrameCoefficients> {
        let cj = ChartJets::at(self, x, 1)?;
        let a = linalg::to_dmatrix(&linalg::values(&cj.a()), self.n());
        let b = a.clone().try_inverse().ok_or_else(|| Error::Numerical("frame coefficients singular".into()))?;
        Ok(FrameCoefficients { a, b })
    }

    /// Coefficients of `θ^i` with respect to the ambient coordinate
    /// coframe `dy^j` (the inverse of the frame matrix).
    pub fn ambient_frame_coefficients(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.frame(x)?.try_inverse().ok_or_else(|| Error::Numerical("frame singular".into()))
    }

    /// `g_ij` in chart coordinates: `Jᵀ g(κ(x)) J`.
    pub fn metric(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let (k, j) = self.forward_with_jacobian(x)?;
        let g = linalg::to_dmatrix(&self.field.values(&k), self.n());
        Ok(j.transpose() * g * j)
    }
}

/// Builds a chart with the default step.
pub fn build_normal_chart(m: &MetricField, p: &Point, r_transverse: f64, r_leafwise: f64, step: f64) -> Result<NormalChart> {
    NormalChart::build(m, p, r_transverse, r_leafwise, step)
}

pub fn frame_coefficients(chart: &NormalChart, x: &[f64]) -> Result<FrameCoefficients> {
    chart.frame_coefficients(x)
}

pub fn metric_in_normal_chart(chart: &NormalChart, x: &[f64]) -> Result<DMatrix<f64>> {
    chart.metric(x)
}

/// Which assembly of `(T̊^i)_{kj;l}` to use in `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FRoute {
    /// Differentiate chart components of `T̊^i` directly.
    ChartDerivative,
    /// Pull back the ambient `∇̊T̊` and correct with `Γ^i_{jl}`.
    AmbientCovariant,
}

/// Jets of the chart map and frame at a point, with the ambient adapted
/// geometry composed along them.
pub struct ChartJets {
    pub n: usize,
    pub n_transverse: usize,
    pub order: usize,
    pub x: Vec<f64>,
    pub kappa: Vec<Jet>,
    /// `S[i*n + j]` = ambient component `i` of `s_j`.
    pub frame: Vec<Jet>,
    pub frame_inv: Vec<Jet>,
    /// `J[i*n + k] = ∂_k κ^i` (one order lower).
    pub jac: Vec<Jet>,
    jac_inv: Vec<Jet>,
    ambient: LocalGeometry<Jet>,
    ambient_values: JetGeometry,
}

impl ChartJets {
    pub fn at(chart: &NormalChart, x: &[f64], order: usize) -> Result<ChartJets> {
        if order == 0 {
            return Err(Error::InvalidInput("chart jets need order ≥ 1".into()));
        }
        let n = chart.n();
        let m = &chart.field;
        let (kappa, cols) = chart.forward_generic(&Jet::seed(x, order))?;
        let frame: Vec<Jet> = (0..n * n).map(|e| cols[e % n][e / n].clone()).collect();
        let frame_inv = linalg::inverse(&frame, n).ok_or_else(|| Error::Numerical("frame singular".into()))?;
        let jac: Vec<Jet> = (0..n * n).map(|e| kappa[e / n].partial(e % n)).collect();
        let jac_inv = linalg::inverse(&jac, n).ok_or_else(|| Error::Numerical("chart Jacobian singular".into()))?;
        let (g, dg) = m.on_jets(&kappa)?;
        let ambient = local_geometry(&m.spec, &g, &dg)?;
        let kv: Vec<f64> = kappa.iter().map(|k| k.value()).collect();
        let ambient_values = JetGeometry::at(m, &kv, 2)?;
        Ok(ChartJets {
            n,
            n_transverse: chart.n_transverse(),
            order,
            x: x.to_vec(),
            kappa,
            frame,
            frame_inv,
            jac,
            jac_inv,
            ambient,
            ambient_values,
        })
    }

    pub fn point(&self) -> Vec<f64> {
        self.kappa.iter().map(|k| k.value()).collect()
    }

    /// `a = S^{-1} J` (order `K − 1`).
    pub fn a(&self) -> Vec<Jet> {
        linalg::matmul(&self.frame_inv, &self.jac, self.n)
    }

    /// Chart metric `Jᵀ g J` (order `K − 1`).
    pub fn metric(&self) -> Vec<Jet> {
        let n = self.n;
        let gj = linalg::matmul(&self.ambient.g, &self.jac, n);
        linalg::matmul(&linalg::transpose(&self.jac, n), &gj, n)
    }

    /// `Γ̊(u, w)^α = Γ̊^α_{βγ} u^β w^γ` with ambient coefficients.
    fn ambient_apply(&self, u: &[Jet], w: &[Jet]) -> Vec<Jet> {
        contract(self.n, &self.ambient.adapted, u, w).iter().map(|v| v.negate()).collect()
    }

    fn column(mat: &[Jet], n: usize, j: usize) -> Vec<Jet> {
        (0..n).map(|i| mat[i * n + j].clone()).collect()
    }

    /// `Γ^i_{jk}` of the frame: `S^{-1}(∂_k s_j + Γ̊(s_j, J_k))`.
    pub fn gamma_frame(&self) -> Vec<Jet> {
        let n = self.n;
        let proto = self.frame[0].truncate(self.order - 1).lift(0.0);
        let mut out = vec![proto; n * n * n];
        for j in 0..n {
            let sj = Self::column(&self.frame, n, j);
            for k in 0..n {
                let jk = Self::column(&self.jac, n, k);
                let ga = self.ambient_apply(&sj, &jk);
                let d: Vec<Jet> = (0..n).map(|a| sj[a].partial(k).plus(&ga[a])).collect();
                let v = linalg::matvec(&self.frame_inv, &d, n);
                for i in 0..n {
                    out[ix3(n, i, j, k)] = v[i].clone();
                }
            }
        }
        out
    }

    /// Chart Christoffel symbols `J^{-1}(∂_k J_j + Γ̊(J_j, J_k))` (order `K − 2`).
    pub fn gamma_chart(&self) -> Result<Vec<Jet>> {
        if self.order < 2 {
            return Err(Error::OrderExceeded { requested: 2, max: self.order });
        }
        let n = self.n;
        let mut out = Vec::with_capacity(n * n * n);
        let mut cols = vec![Vec::new(); n * n];
        for j in 0..n {
            let jj = Self::column(&self.jac, n, j);
            for k in 0..n {
                let jk = Self::column(&self.jac, n, k);
                let ga = self.ambient_apply(&jj, &jk);
                let d: Vec<Jet> = (0..n).map(|a| jj[a].partial(k).plus(&ga[a])).collect();
                cols[j * n + k] = linalg::matvec(&self.jac_inv, &d, n);
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out.push(cols[j * n + k][i].clone());
                }
            }
        }
        Ok(out)
    }

    fn torsion_with(&self, lead: &[Jet]) -> Vec<Jet> {
        let n = self.n;
        let tor = self.ambient.adapted_torsion();
        let mut cols = vec![Vec::new(); n * n];
        for k in 0..n {
            let jk = Self::column(&self.jac, n, k);
            for l in 0..n {
                let jl = Self::column(&self.jac, n, l);
                let proto = jk[0].lift(0.0);
                let mut v = vec![proto; n];
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            let t = &tor[ix3(n, a, b, c)];
                            if t.is_zero() {
                                continue;
                            }
                            v[a] = v[a].fma(t, &jk[b].times(&jl[c]));
                        }
                    }
                }
                cols[k * n + l] = linalg::matvec(lead, &v, n);
            }
        }
        let mut out = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for e in 0..n * n {
                out.push(cols[e][i].clone());
            }
        }
        out
    }

    /// Frame components `T̊^i_{kl}` of `T̊(∂_k, ∂_l)` (order `K − 1`).
    pub fn torsion_frame(&self) -> Vec<Jet> {
        self.torsion_with(&self.frame_inv)
    }

    /// Chart components `T̊^i_{kl}` (order `K − 1`).
    pub fn torsion_chart(&self) -> Vec<Jet> {
        self.torsion_with(&self.jac_inv)
    }

    fn curvature_with(&self, lead: &[f64], third: &[f64]) -> Vec<f64> {
        let n = self.n;
        let r = linalg::values(&self.ambient_values.curvature(ConnectionKind::Adapted));
        let jv = linalg::values(&self.jac);
        let col = |m: &[f64], j: usize| -> Vec<f64> { (0..n).map(|i| m[i * n + j]).collect() };
        let mut out = vec![0.0; n * n * n * n];
        for j in 0..n {
            let tj = col(third, j);
            for k in 0..n {
                for l in 0..n {
                    let v = connections::apply_curvature(n, &r, &col(&jv, k), &col(&jv, l), &tj);
                    let w = linalg::matvec(lead, &v, n);
                    for i in 0..n {
                        out[ix4(n, i, j, k, l)] = w[i];
                    }
                }
            }
        }
        out
    }

    /// `R^i_{jkl}`: frame component `i` of `R̊(∂_k, ∂_l) s_j`.
    pub fn curvature_frame(&self) -> Vec<f64> {
        self.curvature_with(&linalg::values(&self.frame_inv), &linalg::values(&self.frame))
    }

    /// Chart components of `R̊(∂_k, ∂_l) ∂_j`.
    pub fn curvature_chart(&self) -> Vec<f64> {
        self.curvature_with(&linalg::values(&self.jac_inv), &linalg::values(&self.jac))
    }

    /// `(T̊^i)_{kj;l}` at `[((i*n + k)*n + j)*n + l]`.
    pub fn torsion_form_derivative(&self, route: FRoute) -> Result<Vec<f64>> {
        let n = self.n;
        if self.order < 2 {
            return Err(Error::OrderExceeded { requested: 2, max: self.order });
        }
        let tf = self.torsion_frame();
        let tfv = linalg::values(&tf);
        let mut out = vec![0.0; n * n * n * n];
        match route {
            FRoute::ChartDerivative => {
                let gam = linalg::values(&self.gamma_chart()?);
                for i in 0..n {
                    for k in 0..n {
                        for j in 0..n {
                            for l in 0..n {
                                let mut v = tf[ix3(n, i, k, j)].d1(l);
                                for mm in 0..n {
                                    v -= gam[ix3(n, mm, k, l)] * tfv[ix3(n, i, mm, j)];
                                    v -= gam[ix3(n, mm, j, l)] * tfv[ix3(n, i, k, mm)];
                                }
                                out[ix4(n, i, k, j, l)] = v;
                            }
                        }
                    }
                }
            }
            FRoute::AmbientCovariant => {
                let local = &self.ambient_values.local;
                let tor = local.adapted_torsion();
                let dt = linalg::values(&covariant_derivative(n, 2, &tor, &local.adapted));
                let jv = linalg::values(&self.jac);
                let sinv = linalg::values(&self.frame_inv);
                let gf = linalg::values(&self.gamma_frame());
                for i in 0..n {
                    for k in 0..n {
                        for j in 0..n {
                            for l in 0..n {
                                let mut v = 0.0;
                                for al in 0..n {
                                    if sinv[i * n + al] == 0.0 {
                                        continue;
                                    }
                                    let mut s = 0.0;
                                    for b in 0..n {
                                        for c in 0..n {
                                            for d in 0..n {
                                                s += dt[ix4(n, al, b, c, d)] * jv[b * n + k] * jv[c * n + j] * jv[d * n + l];
                                            }
                                        }
                                    }
                                    v += sinv[i * n + al] * s;
                                }
                                for mm in 0..n {
                                    v -= tfv[ix3(n, mm, k, j)] * gf[ix3(n, i, mm, l)];
                                }
                                out[ix4(n, i, k, j, l)] = v;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// `F^i_{jkl}` at `[((i*n + j)*n + k)*n + l]`.
    pub fn f_tensor(&self, route: FRoute) -> Result<Vec<f64>> {
        let n = self.n;
        let d = self.torsion_form_derivative(route)?;
        let gam = linalg::values(&self.gamma_chart()?);
        let tf = linalg::values(&self.torsion_frame());
        let tc = linalg::values(&self.torsion_chart());
        let mut out = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut v = d[ix4(n, i, k, j, l)] - d[ix4(n, i, k, l, j)];
                        for mm in 0..n {
                            v += gam[ix3(n, mm, k, l)] * tf[ix3(n, i, mm, j)];
                            v -= gam[ix3(n, mm, k, j)] * tf[ix3(n, i, mm, l)];
                            v += tc[ix3(n, mm, l, j)] * tf[ix3(n, i, k, mm)];
                        }
                        out[ix4(n, i, j, k, l)] = v;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `F` at `x` assembled along the chosen route.
pub fn f_tensor(chart: &NormalChart, x: &[f64], route: FRoute) -> Result<Vec<f64>> {
    ChartJets::at(chart, x, 2)?.f_tensor(route)
}

/// `(max |Γ^i_{jk}(0)|, max over samples and k > n' of |Γ^i_{jk}(x', 0)|)`
/// for the frame connection symbols.
pub fn gamma_vanishing_residuals(chart: &NormalChart, transversal_samples: &[Vec<f64>]) -> Result<(f64, f64)> {
    let (n, n1) = (chart.n(), chart.n_transverse());
    let at0 = ChartJets::at(chart, &vec![0.0; n], 1)?;
    let center = linalg::max_abs(&linalg::values(&at0.gamma_frame()));
    let mut leaf = 0.0f64;
    for xt in transversal_samples {
        let mut x = xt.clone();
        x.resize(n, 0.0);
        let g = linalg::values(&ChartJets::at(chart, &x, 1)?.gamma_frame());
        for i in 0..n {
            for j in 0..n {
                for k in n1..n {
                    leaf = leaf.max(g[ix3(n, i, j, k)].abs());
                }
            }
        }
    }
    Ok((center, leaf))
}

/// Which radial field an identity is taken along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Radial {
    /// `R' = x'^l ∂'_l`, on the local transversal `x'' = 0`.
    Transverse,
    /// `R'' = x''^l ∂''_l`, anywhere in the chart.
    Leafwise,
}

/// One of the radial Christoffel/curvature identities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RadialVariant {
    pub radial: Radial,
    /// `true` for the `k ≤ n'` equations.
    pub k_transverse: bool,
    /// Frame (`true`) or chart-basis (`false`) connection symbols.
    pub frame: bool,
}

impl RadialVariant {
    pub fn all() -> Vec<RadialVariant> {
        let mut v = Vec::new();
        for frame in [true, false] {
            for radial in [Radial::Transverse, Radial::Leafwise] {
                for k_transverse in [true, false] {
                    v.push(RadialVariant { radial, k_transverse, frame });
                }
            }
        }
        v
    }

    pub fn name(&self) -> String {
        format!(
            "{}_{}_k_{}",
            if self.frame { "frame" } else { "chart" },
            match self.radial {
                Radial::Transverse => "transverse",
                Radial::Leafwise => "leafwise",
            },
            if self.k_transverse { "le" } else { "gt" }
        )
    }
}

/// Differential (radial derivative) or integral (quadrature) form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityForm {
    Differential,
    Integral,
}

fn radial_range(radial: Radial, n: usize, n1: usize) -> std::ops::Range<usize> {
    match radial {
        Radial::Transverse => 0..n1,
        Radial::Leafwise => n1..n,
    }
}

/// `R h` and `R² h` for the radial field on the given index range.
fn radial_derivatives(h: &Jet, x: &[f64], range: std::ops::Range<usize>, second: bool) -> (f64, f64) {
    let mut r1 = 0.0;
    for l in range.clone() {
        r1 += x[l] * h.d1(l);
    }
    if !second {
        return (r1, 0.0);
    }
    let nv = h.nvars();
    let mut r2 = r1;
    for l in range.clone() {
        for m in range.clone() {
            let mut e = vec![0u8; nv];
            e[l] += 1;
            e[m] += 1;
            r2 += x[l] * x[m] * h.derivative(&e);
        }
    }
    (r1, r2)
}

fn check_region(chart: &NormalChart, radial: Radial, x: &[f64]) -> Result<Option<()>> {
    let (n, n1) = (chart.n(), chart.n_transverse());
    if x.len() != n {
        return Err(Error::InvalidInput("chart point has wrong length".into()));
    }
    if radial == Radial::Transverse && x[n1..].iter().any(|v| *v != 0.0) {
        return Err(Error::InvalidInput("transverse radial identities hold on the local transversal x'' = 0".into()));
    }
    let r = radial_range(radial, n, n1);
    if x[r].iter().all(|v| *v == 0.0) {
        return Ok(None);
    }
    Ok(Some(()))
}

/// Adaptive Simpson quadrature of a vector-valued integrand.
pub fn adaptive_simpson<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    fn simpson(fa: &[f64], fm: &[f64], fb: &[f64], h: f64) -> Vec<f64> {
        (0..fa.len()).map(|i| h / 6.0 * (fa[i] + 4.0 * fm[i] + fb[i])).collect()
    }
    #[allow(clippy::too_many_arguments)]
    fn rec<F: FnMut(f64) -> Result<Vec<f64>>>(
        f: &mut F,
        a: f64,
        b: f64,
        fa: &[f64],
        fm: &[f64],
        fb: &[f64],
        whole: &[f64],
        tol: f64,
        depth: usize,
    ) -> Result<Vec<f64>> {
        let m = 0.5 * (a + b);
        let fl = f(0.5 * (a + m))?;
        let fr = f(0.5 * (m + b))?;
        let left = simpson(fa, &fl, fm, m - a);
        let right = simpson(fm, &fr, fb, b - m);
        let err = (0..whole.len()).map(|i| (left[i] + right[i] - whole[i]).abs()).fold(0.0, f64::max);
        if err <= 15.0 * tol || depth == 0 {
            return Ok((0..whole.len()).map(|i| left[i] + right[i] + (left[i] + right[i] - whole[i]) / 15.0).collect());
        }
        let l = rec(f, a, m, fa, &fl, fm, &left, 0.5 * tol, depth - 1)?;
        let r = rec(f, m, b, fm, &fr, fb, &right, 0.5 * tol, depth - 1)?;
        Ok(l.iter().zip(&r).map(|(x, y)| x + y).collect())
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let fm = f(0.5 * (a + b))?;
    let whole = simpson(&fa, &fm, &fb, b - a);
    rec(&mut f, a, b, &fa, &fm, &fb, &whole, tol, 18)
}

/// Point on the ray used by the integral forms: `τx` (transverse) or
/// `(x', τx'')` (leafwise).
fn ray_point(radial: Radial, x: &[f64], n1: usize, tau: f64) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, v)| match radial {
            Radial::Transverse => tau * v,
            Radial::Leafwise if i >= n1 => tau * v,
            Radial::Leafwise => *v,
        })
        .collect()
}

/// Residual of a radial Christoffel/curvature identity at `x`
/// (`None` on degenerate rays).
pub fn radial_identity_residual(chart: &NormalChart, variant: RadialVariant, x: &[f64], form: IdentityForm) -> Result<Option<f64>> {
    if check_region(chart, variant.radial, x)?.is_none() {
        return Ok(None);
    }
    let (n, n1) = (chart.n(), chart.n_transverse());
    let range = radial_range(variant.radial, n, n1);
    let ks: Vec<usize> = if variant.k_transverse { (0..n1).collect() } else { (n1..n).collect() };
    let gamma_of = |cj: &ChartJets| -> Result<Vec<Jet>> {
        if variant.frame {
            Ok(cj.gamma_frame())
        } else {
            cj.gamma_chart()
        }
    };
    let curvature_of = |cj: &ChartJets| if variant.frame { cj.curvature_frame() } else { cj.curvature_chart() };
    let order = if variant.frame { 2 } else { 3 };
    let cj = ChartJets::at(chart, x, order)?;
    let gam = gamma_of(&cj)?;
    let mut worst = 0.0f64;
    match form {
        IdentityForm::Differential => {
            let r = curvature_of(&cj);
            // Shift term: present for k ≤ n' along R', for k > n' along R''.
            let shifted = variant.k_transverse == (variant.radial == Radial::Transverse);
            for i in 0..n {
                for j in 0..n {
                    for &k in &ks {
                        let g = &gam[ix3(n, i, j, k)];
                        let (rg, _) = radial_derivatives(g, x, range.clone(), false);
                        let lhs = rg + if shifted { g.value() } else { 0.0 };
                        let rhs: f64 = range.clone().map(|l| r[ix4(n, i, j, l, k)] * x[l]).sum();
                        worst = worst.max((lhs - rhs).abs());
                    }
                }
            }
        }
        IdentityForm::Integral => {
            let weighted = variant.k_transverse == (variant.radial == Radial::Transverse);
            let integrand = |tau: f64| -> Result<Vec<f64>> {
                let y = ray_point(variant.radial, x, n1, tau);
                let cjt = ChartJets::at(chart, &y, if variant.frame { 1 } else { 2 })?;
                let r = curvature_of(&cjt);
                let w = if weighted { tau } else { 1.0 };
                let mut out = Vec::with_capacity(n * n * ks.len());
                for i in 0..n {
                    for j in 0..n {
                        for &k in &ks {
                            out.push(w * range.clone().map(|l| r[ix4(n, i, j, l, k)] * x[l]).sum::<f64>());
                        }
                    }
                }
                Ok(out)
            };
            let integral = adaptive_simpson(integrand, 0.0, 1.0, 1e-8)?;
            // Leafwise k ≤ n' carries the value on the transversal.
            let base = if variant.radial == Radial::Leafwise && variant.k_transverse {
                let mut x0 = x.to_vec();
                for v in x0[n1..].iter_mut() {
                    *v = 0.0;
                }
                Some(linalg::values(&gamma_of(&ChartJets::at(chart, &x0, order)?)?))
            } else {
                None
            };
            let mut e = 0;
            for i in 0..n {
                for j in 0..n {
                    for &k in &ks {
                        let lhs = gam[ix3(n, i, j, k)].value();
                        let rhs = integral[e] + base.as_ref().map_or(0.0, |b| b[ix3(n, i, j, k)]);
                        worst = worst.max((lhs - rhs).abs());
                        e += 1;
                    }
                }
            }
        }
    }
    Ok(Some(worst))
}

/// One of the eight second-order radial equations for the frame coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameVariant {
    pub radial: Radial,
    /// `i ≤ n'`.
    pub i_transverse: bool,
    /// `j ≤ n'`.
    pub j_transverse: bool,
}

impl FrameVariant {
    pub fn all() -> Vec<FrameVariant> {
        let mut v = Vec::new();
        for radial in [Radial::Transverse, Radial::Leafwise] {
            for i_transverse in [true, false] {
                for j_transverse in [true, false] {
                    v.push(FrameVariant { radial, i_transverse, j_transverse });
                }
            }
        }
        v
    }

    pub fn name(&self) -> String {
        format!(
            "{}_i_{}_j_{}",
            match self.radial {
                Radial::Transverse => "transverse",
                Radial::Leafwise => "leafwise",
            },
            if self.i_transverse { "le" } else { "gt" },
            if self.j_transverse { "le" } else { "gt" }
        )
    }

    /// Sign of the first-order radial term: `(R² + R)` or `(R² − R)`.
    fn first_order_sign(&self) -> f64 {
        match self.radial {
            Radial::Transverse => {
                if self.j_transverse {
                    1.0
                } else {
                    -1.0
                }
            }
            Radial::Leafwise => {
                if self.j_transverse {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Whether the curvature term appears on the right-hand side.
    fn has_curvature(&self) -> bool {
        match self.radial {
            Radial::Transverse => self.i_transverse,
            Radial::Leafwise => !self.i_transverse,
        }
    }

    /// Whether the torsion term `T^i_{kj} x^k` appears.
    fn has_torsion(&self) -> bool {
        self.radial == Radial::Transverse && self.j_transverse
    }
}

fn block(n: usize, n1: usize, transverse: bool) -> std::ops::Range<usize> {
    if transverse {
        0..n1
    } else {
        n1..n
    }
}

/// `Σ_{k,l} (R^i_{klj} [+] F^i_{jkl}) x^l x^k` over the radial index range.
fn quadratic_term(n: usize, r: &[f64], f: &[f64], with_r: bool, i: usize, j: usize, x: &[f64], range: &std::ops::Range<usize>) -> f64 {
    let mut s = 0.0;
    for k in range.clone() {
        for l in range.clone() {
            let mut c = f[ix4(n, i, j, k, l)];
            if with_r {
                c += r[ix4(n, i, k, l, j)];
            }
            s += c * x[l] * x[k];
        }
    }
    s
}

fn linear_torsion_term(n: usize, t: &[f64], i: usize, j: usize, x: &[f64], range: &std::ops::Range<usize>) -> f64 {
    range.clone().map(|k| t[ix3(n, i, k, j)] * x[k]).sum()
}

/// Residual of one frame-coefficient equation at `x` (`None` on degenerate rays).
pub fn frame_ode_residual(chart: &NormalChart, variant: FrameVariant, x: &[f64], form: IdentityForm) -> Result<Option<f64>> {
    if check_region(chart, variant.radial, x)?.is_none() {
        return Ok(None);
    }
    let (n, n1) = (chart.n(), chart.n_transverse());
    let range = radial_range(variant.radial, n, n1);
    let is = block(n, n1, variant.i_transverse);
    let js = block(n, n1, variant.j_transverse);
    let cj = ChartJets::at(chart, x, 3)?;
    let a = cj.a();
    let mut worst = 0.0f64;
    match form {
        IdentityForm::Differential => {
            let r = cj.curvature_frame();
            let f = cj.f_tensor(FRoute::ChartDerivative)?;
            let t = linalg::values(&cj.torsion_frame());
            for i in is.clone() {
                for j in js.clone() {
                    let (r1, r2) = radial_derivatives(&a[i * n + j], x, range.clone(), true);
                    let lhs = r2 + variant.first_order_sign() * r1;
                    let mut rhs = quadratic_term(n, &r, &f, variant.has_curvature(), i, j, x, &range);
                    if variant.has_torsion() {
                        rhs += linear_torsion_term(n, &t, i, j, x, &range);
                    }
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
        IdentityForm::Integral => {
            // ξ'(1, x) = R a(x); the "+R" equations integrate from zero with
            // weights u², u; the "−R" ones carry ξ'(0, x).
            let plus = variant.first_order_sign() > 0.0;
            let pairs: Vec<(usize, usize)> = is.clone().flat_map(|i| js.clone().map(move |j| (i, j))).collect();
            let integrand = |u: f64| -> Result<Vec<f64>> {
                let y = ray_point(variant.radial, x, n1, u);
                let cju = ChartJets::at(chart, &y, 2)?;
                let r = cju.curvature_frame();
                let f = cju.f_tensor(FRoute::ChartDerivative)?;
                let t = linalg::values(&cju.torsion_frame());
                let w2 = if plus { u * u } else { 1.0 };
                Ok(pairs
                    .iter()
                    .map(|&(i, j)| {
                        let mut v = w2 * quadratic_term(n, &r, &f, variant.has_curvature(), i, j, x, &range);
                        if variant.has_torsion() {
                            v += u * linear_torsion_term(n, &t, i, j, x, &range);
                        }
                        v
                    })
                    .collect())
            };
            let integral = adaptive_simpson(integrand, 0.0, 1.0, 1e-8)?;
            let start = if plus {
                None
            } else {
                let x0 = ray_point(variant.radial, x, n1, 0.0);
                let a0 = ChartJets::at(chart, &x0, 2)?.a();
                Some(pairs.iter().map(|&(i, j)| range.clone().map(|l| x[l] * a0[i * n + j].d1(l)).sum::<f64>()).collect::<Vec<_>>())
            };
            for (e, &(i, j)) in pairs.iter().enumerate() {
                let (lhs, _) = radial_derivatives(&a[i * n + j], x, range.clone(), false);
                let rhs = integral[e] + start.as_ref().map_or(0.0, |s| s[e]);
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    Ok(Some(worst))
}

/// Compares `t ↦ ∂'_i κ(x', t x'')` (central differences of the chart map
/// with step `h`) with the adapted Jacobi field of matching initial data.
pub fn coordinate_jacobi_check(chart: &NormalChart, x: &[f64], i: usize, h: f64, samples: usize) -> Result<f64> {
    let (n, n1) = (chart.n(), chart.n_transverse());
    if i >= n1 {
        return Err(Error::InvalidInput("coordinate Jacobi check needs a transverse index".into()));
    }
    let mut x0 = x.to_vec();
    for v in x0[n1..].iter_mut() {
        *v = 0.0;
    }
    let cj = ChartJets::at(chart, &x0, 2)?;
    let q = cj.point();
    let jv = linalg::values(&cj.jac);
    let s = linalg::values(&cj.frame);
    let vel: Vec<f64> = (0..n).map(|a| (n1..n).map(|b| x[b] * s[a * n + b]).sum()).collect();
    let xi0: Vec<f64> = (0..n).map(|a| jv[a * n + i]).collect();
    // d/dt ∂_i κ(x', t x'') at t = 0, then Y0 = ∇̊_γ̇ X − T̊(γ̇, X).
    let dx: Vec<f64> = (0..n).map(|a| (n1..n).map(|b| x[b] * cj.jac[a * n + i].d1(b)).sum()).collect();
    let lg = connections::local_values(&chart.field, &q)?;
    let mut nabla = dx.clone();
    let cov = transport::contract(n, &lg.adapted, &xi0, &vel);
    for a in 0..n {
        nabla[a] -= cov[a];
    }
    let tor = connections::apply2(n, &lg.adapted_torsion(), &vel, &xi0);
    let y0: Vec<f64> = (0..n).map(|a| nabla[a] - tor[a]).collect();
    let qp = Point::new(&q);
    let gamma = transport::integrate_geodesic(
        &chart.field,
        ConnectionKind::Adapted,
        &qp,
        &crate::geometry::TangentVector::new(&qp, &vel),
        1.0,
        1e-3,
    )?;
    if gamma.partial {
        return Err(Error::BoundaryExit { t: gamma.t_end() });
    }
    let sys = std::sync::Arc::new(crate::jacobi::JacobiSystem::new(&chart.field, &gamma)?);
    let sol = sys.solve(&xi0, &y0)?;
    let last = sol.len() - 1;
    let mut worst = 0.0f64;
    for s_idx in 0..=samples {
        let k = (s_idx * last) / samples.max(1);
        let t = gamma.times[k];
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for b in n1..n {
            xp[b] *= t;
            xm[b] *= t;
        }
        xp[i] += h;
        xm[i] -= h;
        let fp = chart.forward(&xp)?;
        let fm = chart.forward(&xm)?;
        for a in 0..n {
            let fd = (fp.as_slice()[a] - fm.as_slice()[a]) / (2.0 * h);
            worst = worst.max((fd - sol.x[k][a]).abs());
        }
    }
    Ok(worst)
}

/// Max over components of the first structure equation
/// `dθ^i + θ^i_j ∧ θ^j − T̊^i = 0` at `x`.
pub fn structure_equation_residual(chart: &NormalChart, x: &[f64]) -> Result<f64> {
    let n = chart.n();
    let cj = ChartJets::at(chart, x, 2)?;
    let a = cj.a();
    let av = linalg::values(&a);
    let g = linalg::values(&cj.gamma_frame());
    let t = linalg::values(&cj.torsion_frame());
    let mut worst = 0.0f64;
    for i in 0..n {
        for k in 0..n {
            for l in 0..n {
                let mut v = a[i * n + l].d1(k) - a[i * n + k].d1(l);
                for j in 0..n {
                    v += g[ix3(n, i, j, k)] * av[j * n + l] - g[ix3(n, i, j, l)] * av[j * n + k];
                }
                v -= t[ix3(n, i, k, l)];
                worst = worst.max(v.abs());
            }
        }
    }
    Ok(worst)
}

/// Radial normalisation `θ^i(R) = x^i` on the radial block, `θ^i(R) = 0`
/// off it, and `θ^i_j(R) = 0`. Transverse checks need `x'' = 0`.
pub fn radial_normalization_residual(chart: &NormalChart, radial: Radial, x: &[f64]) -> Result<f64> {
    check_region(chart, radial, x)?;
    let (n, n1) = (chart.n(), chart.n_transverse());
    let range = radial_range(radial, n, n1);
    let cj = ChartJets::at(chart, x, 1)?;
    let a = linalg::values(&cj.a());
    let g = linalg::values(&cj.gamma_frame());
    let mut worst = 0.0f64;
    for i in 0..n {
        let theta: f64 = range.clone().map(|l| a[i * n + l] * x[l]).sum();
        let expected = if range.contains(&i) { x[i] } else { 0.0 };
        worst = worst.max((theta - expected).abs());
        for j in 0..n {
            let conn: f64 = range.clone().map(|l| g[ix3(n, i, j, l)] * x[l]).sum();
            worst = worst.max(conn.abs());
        }
    }
    Ok(worst)
}

/// Orthonormality, `g = aᵀa`, `g^{-1} = b bᵀ`, and the split of the frame.
pub fn frame_residuals(chart: &NormalChart, x: &[f64]) -> Result<f64> {
    let (n, n1) = (chart.n(), chart.n_transverse());
    let cj = ChartJets::at(chart, x, 1)?;
    let s = linalg::to_dmatrix(&linalg::values(&cj.frame), n);
    let g = linalg::to_dmatrix(&linalg::values(&cj.ambient.g), n);
    let ortho = (s.transpose() * &g * &s - DMatrix::identity(n, n)).abs().max();
    let a = linalg::to_dmatrix(&linalg::values(&cj.a()), n);
    let gc = linalg::to_dmatrix(&linalg::values(&cj.metric()), n);
    let pull = (a.transpose() * &a - &gc).abs().max();
    let b = a.clone().try_inverse().ok_or_else(|| Error::Numerical("frame coefficients singular".into()))?;
    let gci = gc.try_inverse().ok_or_else(|| Error::Numerical("chart metric singular".into()))?;
    let inv = (&b * b.transpose() - gci).abs().max();
    let vp = linalg::to_dmatrix(&linalg::values(&cj.ambient.vproj), n);
    let mut split = 0.0f64;
    for j in 0..n {
        let col = s.column(j).into_owned();
        let v = &vp * &col;
        let off = if j < n1 { v } else { col - v };
        split = split.max(off.amax());
    }
    Ok(ortho.max(pull).max(inv).max(split))
}

/// `max |E^{-1} J(0) − I|` with `J` by central differences of the chart map.
pub fn jacobian_at_zero_residual(chart: &NormalChart, h: f64) -> Result<f64> {
    let n = chart.n();
    let einv = chart.basis.clone().try_inverse().expect("basis invertible");
    let mut jac = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut xp = vec![0.0; n];
        let mut xm = vec![0.0; n];
        xp[k] = h;
        xm[k] = -h;
        let fp = chart.forward(&xp)?;
        let fm = chart.forward(&xm)?;
        for i in 0..n {
            jac[(i, k)] = (fp.as_slice()[i] - fm.as_slice()[i]) / (2.0 * h);
        }
    }
    Ok((einv * jac - DMatrix::identity(n, n)).abs().max())
}

/// Spread of `π(κ(x', ·))` over the given leafwise offsets.
pub fn plaque_spread(chart: &NormalChart, submersion: &crate::fixtures::Submersion, xt: &[f64], leaf_offsets: &[Vec<f64>]) -> Result<f64> {
    let base = {
        let mut x = xt.to_vec();
        x.resize(chart.n(), 0.0);
        submersion.project(chart.forward(&x)?.as_slice())
    };
    let mut worst = 0.0f64;
    for l in leaf_offsets {
        let x: Vec<f64> = xt.iter().chain(l).copied().collect();
        let v = submersion.project(chart.forward(&x)?.as_slice());
        for (a, b) in v.iter().zip(&base) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::builtin;

    fn warp_chart() -> NormalChart {
        let f = builtin("FIX-WARP").unwrap();
        NormalChart::build(&f.field, &Point::new(&[0.0, 0.0]), 0.5, 0.5, DEFAULT_CHART_STEP).unwrap()
    }

    #[test]
    fn product_chart_is_a_translation() {
        let f = builtin("FIX-PRODUCT").unwrap();
        let c = NormalChart::build(&f.field, &Point::new(&[0.3, -0.2]), 1.0, 1.0, DEFAULT_CHART_STEP).unwrap();
        let y = c.forward(&[0.4, 0.7]).unwrap();
        assert!((y.as_slice()[0] - 0.7).abs() < 1e-14 && (y.as_slice()[1] - 0.5).abs() < 1e-14);
        let x = c.inverse(&[0.1, 0.1]).unwrap();
        assert!((x[0] + 0.2).abs() < 1e-12 && (x[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn warp_chart_matches_closed_form() {
        // κ(x', x'') = (x', x'' e^{-x'}) at the origin.
        let c = warp_chart();
        for x in [[0.3, 0.0], [0.0, 0.4], [-0.2, 0.3], [0.45, -0.1]] {
            let y = c.forward(&x).unwrap();
            assert!((y.as_slice()[0] - x[0]).abs() < 1e-9, "{x:?} {y:?}");
            assert!((y.as_slice()[1] - x[1] * (-x[0]).exp()).abs() < 1e-9, "{x:?} {y:?}");
        }
        let g = c.metric(&[0.3, 0.2]).unwrap();
        assert!((g[(0, 0)] - 1.04).abs() < 1e-8 && (g[(0, 1)] + 0.2).abs() < 1e-8 && (g[(1, 1)] - 1.0).abs() < 1e-8);
        let af = c.ambient_frame_coefficients(&[0.3, 0.0]).unwrap();
        assert!((af[(1, 1)] - 0.3f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn inverse_round_trip() {
        let c = warp_chart();
        let x = [0.2, -0.35];
        let y = c.forward(&x).unwrap();
        let back = c.inverse(y.as_slice()).unwrap();
        assert!((back[0] - x[0]).abs() < 1e-10 && (back[1] - x[1]).abs() < 1e-10);
    }

    #[test]
    fn warp_frame_symbols_vanish_where_expected() {
        let c = warp_chart();
        let (c0, leaf) = gamma_vanishing_residuals(&c, &[vec![0.2], vec![-0.4]]).unwrap();
        assert!(c0 < 1e-12 && leaf < 1e-8, "{c0} {leaf}");
    }

    #[test]
    fn f_routes_agree_on_warp() {
        let c = warp_chart();
        let a = f_tensor(&c, &[0.2, 0.3], FRoute::ChartDerivative).unwrap();
        let b = f_tensor(&c, &[0.2, 0.3], FRoute::AmbientCovariant).unwrap();
        let d = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn warp_chart_symbols_match_closed_form_metric() {
        // Chart metric of the WARP chart at the origin:
        // g = [[1 + y², −y], [−y, 1]] in coordinates (x, y).
        let c = warp_chart();
        let x = [0.2, 0.3];
        let cj = ChartJets::at(&c, &x, 3).unwrap();
        let num = linalg::values(&cj.gamma_chart().unwrap());
        let v = Jet::seed(&x, 2);
        let one = v[0].lift(1.0);
        let g = vec![one.plus(&v[1].times(&v[1])), v[1].negate(), v[1].negate(), one.clone()];
        let dg: Vec<Jet> = (0..2).flat_map(|k| g.iter().map(move |e| e.partial(k))).collect();
        let g1: Vec<Jet> = g.iter().map(|e| e.truncate(1)).collect();
        let lg = local_geometry(&c.field.spec, &g1, &dg).unwrap();
        let exact = linalg::values(&lg.adapted);
        let d = num.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-8, "{num:?} vs {exact:?}");
    }

    #[test]
    fn simpson_integrates_polynomials() {
        let v = adaptive_simpson(|t| Ok(vec![t * t, t.exp()]), 0.0, 1.0, 1e-10).unwrap();
        assert!((v[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((v[1] - (1f64.exp() - 1.0)).abs() < 1e-9);
    }
}
