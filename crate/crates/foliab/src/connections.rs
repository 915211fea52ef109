//! Levi-Civita and adapted connections, O'Neill tensors, torsion, curvature.
//!
//! Index conventions (all row-major):
//! * connection coefficients `Γ[i][j][k]` with `∇_{∂_k} ∂_j = Γ^i_{jk} ∂_i`;
//! * (1,2)-tensors `T[a][j][k]` meaning `T_{∂_j} ∂_k` (direction slot first);
//! * curvature `R[i][j][k][l]` meaning `R(∂_k, ∂_l) ∂_j`;
//! * torsion `Tor[a][b][c]` meaning `T̊(∂_b, ∂_c)`.
//!
//! The adapted connection is `∇̊_E F = V∇_E(VF) + H∇_E(HF)`. Writing
//! `W^i_{jk} = ∂_k V^i_j + Γ^i_{lk} V^l_j` (the coefficients of `∇(V∂_j)`),
//! one gets `Γ̊ = Γ − W + V(2W − Γ)` and `S := Γ − Γ̊ = T + A` with
//! `T^a_{jk} = V^m_j S^a_{km}` and `A^a_{jk} = H^m_j S^a_{km}`.

use crate::error::{Error, Result};
use crate::expr::{Expr, Program, ScalarExpr};
use crate::geometry::{vertical_projector, FoliationSpec, Metric, MetricField, Point, TangentVector};
use crate::jet::{Jet, Scalar};
use crate::linalg;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionKind {
    LeviCivita,
    Adapted,
    Breve,
}

/// Connection coefficients at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionCoefficients {
    pub kind: ConnectionKind,
    pub n: usize,
    pub gamma: Vec<f64>,
}

impl ConnectionCoefficients {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.gamma[(i * self.n + j) * self.n + k]
    }

    /// Largest `|Γ^i_jk − Γ^i_kj|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n;
        let mut m = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    m = m.max((self.get(i, j, k) - self.get(i, k, j)).abs());
                }
            }
        }
        m
    }
}

/// Pointwise geometry assembled from `g` and `∂g`.
#[derive(Debug, Clone)]
pub struct LocalGeometry<S> {
    pub n: usize,
    pub n_transverse: usize,
    pub g: Vec<S>,
    pub ginv: Vec<S>,
    /// Vertical projector `V^i_j` at `[i*n + j]`.
    pub vproj: Vec<S>,
    pub christoffel: Vec<S>,
    pub adapted: Vec<S>,
}

#[inline]
fn ix3(n: usize, a: usize, b: usize, c: usize) -> usize {
    (a * n + b) * n + c
}

#[inline]
fn ix4(n: usize, a: usize, b: usize, c: usize, d: usize) -> usize {
    ((a * n + b) * n + c) * n + d
}

/// Levi-Civita coefficients from `g^{-1}` and `∂g` (`dg[k][i][j] = ∂_k g_ij`).
pub fn christoffel_from<S: Scalar>(n: usize, ginv: &[S], dg: &[S]) -> Vec<S> {
    let proto = &ginv[0];
    // Lowered symbols Γ_{l,jk} = ½(∂_k g_lj + ∂_j g_lk − ∂_l g_jk).
    let mut lowered = Vec::with_capacity(n * n * n);
    for l in 0..n {
        for j in 0..n {
            for k in 0..n {
                let s = dg[ix3(n, k, l, j)].plus(&dg[ix3(n, j, l, k)]).minus(&dg[ix3(n, l, j, k)]);
                lowered.push(s.scale(0.5));
            }
        }
    }
    let mut out = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut acc = proto.lift(0.0);
                for l in 0..n {
                    acc = acc.fma(&ginv[i * n + l], &lowered[ix3(n, l, j, k)]);
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Builds the pointwise geometry from metric coefficients and their first derivatives.
pub fn local_geometry<S: Scalar>(spec: &FoliationSpec, g: &[S], dg: &[S]) -> Result<LocalGeometry<S>> {
    let n = spec.n_total;
    let n1 = spec.n_transverse;
    let n2 = spec.n_leafwise;
    let proto = g[0].clone();
    let ginv = linalg::inverse(g, n).ok_or(Error::DegenerateMetric { condition: f64::INFINITY })?;
    let gamma = christoffel_from(n, &ginv, dg);
    let vproj = vertical_projector(spec, g)?;

    // ∂_k V^b_j for transverse j: V^b_j = Σ_c B^{bc} g_{cj}, B = (G'')^{-1}.
    let mut block = Vec::with_capacity(n2 * n2);
    for b in 0..n2 {
        for c in 0..n2 {
            block.push(g[(n1 + b) * n + n1 + c].clone());
        }
    }
    let binv = linalg::inverse(&block, n2).ok_or(Error::DegenerateMetric { condition: f64::INFINITY })?;
    let zero = proto.lift(0.0);
    // dv[k][i][j] = ∂_k V^i_j
    let mut dv: Vec<S> = vec![zero.clone(); n * n * n];
    for k in 0..n {
        // ∂_k B = −B (∂_k G'') B
        let dblock: Vec<S> = (0..n2 * n2).map(|e| dg[ix3(n, k, n1 + e / n2, n1 + e % n2)].clone()).collect();
        let db = linalg::matmul(&linalg::matmul(&binv, &dblock, n2), &binv, n2);
        for j in 0..n1 {
            for b in 0..n2 {
                let mut acc = zero.clone();
                for c in 0..n2 {
                    let gcj = &g[(n1 + c) * n + j];
                    acc = acc.minus(&db[b * n2 + c].times(gcj));
                    acc = acc.fma(&binv[b * n2 + c], &dg[ix3(n, k, n1 + c, j)]);
                }
                dv[ix3(n, k, n1 + b, j)] = acc;
            }
        }
    }
    // W^i_{jk} = ∂_k V^i_j + Γ^i_{lk} V^l_j
    let mut w = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut acc = dv[ix3(n, k, i, j)].clone();
                for l in 0..n {
                    let v = &vproj[l * n + j];
                    if !v.is_zero() {
                        acc = acc.fma(&gamma[ix3(n, i, l, k)], v);
                    }
                }
                w.push(acc);
            }
        }
    }
    // Γ̊ = Γ − W + V(2W − Γ)
    let diff: Vec<S> = w.iter().zip(&gamma).map(|(a, b)| a.scale(2.0).minus(b)).collect();
    let mut adapted = Vec::with_capacity(n * n * n);
    for a in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut acc = gamma[ix3(n, a, j, k)].minus(&w[ix3(n, a, j, k)]);
                for i in 0..n {
                    let v = &vproj[a * n + i];
                    if !v.is_zero() {
                        acc = acc.fma(v, &diff[ix3(n, i, j, k)]);
                    }
                }
                adapted.push(acc);
            }
        }
    }
    Ok(LocalGeometry { n, n_transverse: n1, g: g.to_vec(), ginv, vproj, christoffel: gamma, adapted })
}

impl<S: Scalar> LocalGeometry<S> {
    pub fn hproj(&self) -> Vec<S> {
        let n = self.n;
        (0..n * n)
            .map(|e| {
                let v = self.vproj[e].negate();
                if e / n == e % n {
                    v.shift(1.0)
                } else {
                    v
                }
            })
            .collect()
    }

    /// `S = Γ − Γ̊`, the coefficients of `T + A`.
    pub fn difference(&self) -> Vec<S> {
        self.christoffel.iter().zip(&self.adapted).map(|(a, b)| a.minus(b)).collect()
    }

    fn split_tensor(&self, proj: &[S]) -> Vec<S> {
        let n = self.n;
        let s = self.difference();
        let proto = &self.g[0];
        let mut out = Vec::with_capacity(n * n * n);
        for a in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut acc = proto.lift(0.0);
                    for m in 0..n {
                        let p = &proj[m * n + j];
                        if !p.is_zero() {
                            acc = acc.fma(p, &s[ix3(n, a, k, m)]);
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    /// O'Neill `T[a][j][k]` = component `a` of `T_{∂_j} ∂_k`.
    pub fn oneill_t(&self) -> Vec<S> {
        self.split_tensor(&self.vproj)
    }

    /// O'Neill `A[a][j][k]` = component `a` of `A_{∂_j} ∂_k`.
    pub fn oneill_a(&self) -> Vec<S> {
        let h = self.hproj();
        self.split_tensor(&h)
    }

    /// Torsion of `∇̊`: `Tor[a][b][c] = Γ̊^a_{cb} − Γ̊^a_{bc}`.
    pub fn adapted_torsion(&self) -> Vec<S> {
        torsion_of(self.n, &self.adapted)
    }
}

/// Torsion `Tor[a][b][c] = C^a_{cb} − C^a_{bc}` of a connection with coefficients `C`.
pub fn torsion_of<S: Scalar>(n: usize, c: &[S]) -> Vec<S> {
    let mut out = Vec::with_capacity(n * n * n);
    for a in 0..n {
        for b in 0..n {
            for d in 0..n {
                out.push(c[ix3(n, a, d, b)].minus(&c[ix3(n, a, b, d)]));
            }
        }
    }
    out
}

/// Curvature `R[i][j][k][l]` of coefficient jets `C` (order drops by one).
pub fn curvature_of(n: usize, c: &[Jet]) -> Vec<Jet> {
    let partials: Vec<Vec<Jet>> = (0..n).map(|k| c.iter().map(|x| x.partial(k)).collect()).collect();
    let mut out = Vec::with_capacity(n * n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut acc = partials[k][ix3(n, i, j, l)].minus(&partials[l][ix3(n, i, j, k)]);
                    for m in 0..n {
                        acc = acc.fma(&c[ix3(n, i, m, k)], &c[ix3(n, m, j, l)]);
                        acc = acc.minus(&c[ix3(n, i, m, l)].times(&c[ix3(n, m, j, k)]));
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// Covariant derivative of a (1,p)-tensor with layout `[i][j1..jp]`; the new
/// derivative index is appended last.
pub fn covariant_derivative(n: usize, lower: usize, t: &[Jet], c: &[Jet]) -> Vec<Jet> {
    let size = n.pow(lower as u32 + 1);
    debug_assert_eq!(t.len(), size);
    let partials: Vec<Vec<Jet>> = (0..n).map(|m| t.iter().map(|x| x.partial(m)).collect()).collect();
    let mut out = Vec::with_capacity(size * n);
    let mut idx = vec![0usize; lower + 1];
    for flat in 0..size {
        // decode flat -> (i, j1..jp)
        let mut r = flat;
        for s in (0..=lower).rev() {
            idx[s] = r % n;
            r /= n;
        }
        for m in 0..n {
            let mut acc = partials[m][flat].clone();
            // + C^i_{l m} T^l_J
            for l in 0..n {
                let src = flat - idx[0] * n.pow(lower as u32) + l * n.pow(lower as u32);
                acc = acc.fma(&c[ix3(n, idx[0], l, m)], &t[src]);
            }
            // − C^l_{j_b m} T^i_{..l..}
            for b in 1..=lower {
                let stride = n.pow((lower - b) as u32);
                for l in 0..n {
                    let src = flat - idx[b] * stride + l * stride;
                    acc = acc.minus(&c[ix3(n, l, idx[b], m)].times(&t[src]));
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Jet-valued geometry at a point, for quantities needing derivatives.
#[derive(Debug, Clone)]
pub struct JetGeometry {
    pub spec: FoliationSpec,
    pub order: usize,
    pub local: LocalGeometry<Jet>,
}

impl JetGeometry {
    /// Expands the metric to `order` at `x`; connection data is one order lower.
    pub fn at(m: &MetricField, x: &[f64], order: usize) -> Result<JetGeometry> {
        if order == 0 {
            return Err(Error::InvalidInput("jet geometry needs order ≥ 1".into()));
        }
        m.check(x)?;
        let g = m.jets(x, order)?;
        let n = m.dim;
        let mut dg = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for e in g.iter() {
                dg.push(e.partial(k));
            }
        }
        let local = local_geometry(&m.spec, &g, &dg)?;
        Ok(JetGeometry { spec: m.spec, order, local })
    }

    pub fn n(&self) -> usize {
        self.local.n
    }

    pub fn curvature(&self, kind: ConnectionKind) -> Vec<Jet> {
        match kind {
            ConnectionKind::LeviCivita => curvature_of(self.n(), &self.local.christoffel),
            ConnectionKind::Adapted => curvature_of(self.n(), &self.local.adapted),
            ConnectionKind::Breve => curvature_of(self.n(), &breve_from(self.n(), &self.local.adapted)),
        }
    }
}

/// `Γ̆^a_{jk} = ½(Γ̊^a_{jk} + Γ̊^a_{kj})`, i.e. `∇̆ = ∇̊ − ½T̊`.
pub fn breve_from<S: Scalar>(n: usize, adapted: &[S]) -> Vec<S> {
    let mut out = Vec::with_capacity(n * n * n);
    for a in 0..n {
        for j in 0..n {
            for k in 0..n {
                out.push(adapted[ix3(n, a, j, k)].plus(&adapted[ix3(n, a, k, j)]).scale(0.5));
            }
        }
    }
    out
}

/// f64 geometry at `x` through the fast path (no jets).
pub fn local_values(m: &MetricField, x: &[f64]) -> Result<LocalGeometry<f64>> {
    let (g, dg) = m.values_and_gradient(x);
    local_geometry(&m.spec, &g, &dg)
}

/// Levi-Civita coefficients of a plain metric (no foliation needed).
pub fn christoffel_values(m: &Metric, x: &[f64]) -> Result<Vec<f64>> {
    let (g, dg) = m.values_and_gradient(x);
    let ginv = linalg::inverse(&g, m.dim).ok_or(Error::DegenerateMetric { condition: f64::INFINITY })?;
    Ok(christoffel_from(m.dim, &ginv, &dg))
}

pub fn connection_values(m: &MetricField, x: &[f64], kind: ConnectionKind) -> Result<Vec<f64>> {
    let lg = local_values(m, x)?;
    Ok(match kind {
        ConnectionKind::LeviCivita => lg.christoffel,
        ConnectionKind::Adapted => lg.adapted,
        ConnectionKind::Breve => breve_from(lg.n, &lg.adapted),
    })
}

/// Contract a (1,2)-tensor value `t[a][j][k]` with `E^j F^k`.
pub fn apply2(n: usize, t: &[f64], e: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for a in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if e[j] == 0.0 {
                continue;
            }
            for k in 0..n {
                s += t[ix3(n, a, j, k)] * e[j] * f[k];
            }
        }
        out[a] = s;
    }
    out
}

/// `R(E,F)G` from `R[i][j][k][l]`.
pub fn apply_curvature(n: usize, r: &[f64], e: &[f64], f: &[f64], g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    s += r[ix4(n, i, j, k, l)] * g[j] * e[k] * f[l];
                }
            }
        }
        out[i] = s;
    }
    out
}

/// `(∇_D T)_E F` from a derivative array `[a][j][k][m]`.
pub fn apply_derivative(n: usize, dt: &[f64], d: &[f64], e: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for a in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            for k in 0..n {
                for m in 0..n {
                    s += dt[ix4(n, a, j, k, m)] * e[j] * f[k] * d[m];
                }
            }
        }
        out[a] = s;
    }
    out
}

// ---------------------------------------------------------------- vector fields

/// A smooth vector field on the chart, given componentwise by expressions.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub components: Vec<Program>,
}

impl VectorField {
    pub fn constant(v: &[f64]) -> VectorField {
        VectorField { components: v.iter().map(|&c| Program::compile(&Expr::Const(c))).collect() }
    }

    /// `v + L (x − x0)`: a linear-coefficient extension of `v` from `x0`.
    pub fn affine(x0: &[f64], v: &[f64], lin: &DMatrix<f64>) -> VectorField {
        let n = v.len();
        let components = (0..n)
            .map(|i| {
                let mut e = Expr::Const(v[i]);
                for k in 0..n {
                    let d = Expr::sub(Expr::Var(k), Expr::Const(x0[k]));
                    e = Expr::add(e, Expr::mul(Expr::Const(lin[(i, k)]), d));
                }
                Program::compile(&e)
            })
            .collect();
        VectorField { components }
    }

    pub fn parse(srcs: &[String], n: usize, params: &BTreeMap<String, f64>) -> Result<VectorField> {
        let components = srcs
            .iter()
            .map(|s| {
                ScalarExpr::parse(s, n, params)
                    .map(|e| e.program)
                    .map_err(|error| Error::Expression { source_text: s.clone(), error })
            })
            .collect::<Result<Vec<_>>>()?;
        if components.len() != n {
            return Err(Error::InvalidInput(format!("vector field needs {n} components")));
        }
        Ok(VectorField { components })
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval_f64(x)).collect()
    }

    pub fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        let seed = Jet::seed(x, order);
        self.components.iter().map(|c| c.eval(&seed)).collect()
    }
}

// ---------------------------------------------------------------- pointwise operations

fn check_vec(m: &MetricField, v: &TangentVector, p: &Point) -> Result<()> {
    if v.components.len() != m.dim {
        return Err(Error::InvalidInput("tangent vector has wrong length".into()));
    }
    if v.base.coords != p.coords {
        return Err(Error::InvalidInput("tangent vector is not based at p".into()));
    }
    Ok(())
}

fn tv(p: &Point, v: Vec<f64>) -> TangentVector {
    TangentVector::new(p, &v)
}

pub fn christoffel(m: &MetricField, p: &Point) -> Result<ConnectionCoefficients> {
    m.check(p.as_slice())?;
    Ok(ConnectionCoefficients { kind: ConnectionKind::LeviCivita, n: m.dim, gamma: local_values(m, p.as_slice())?.christoffel })
}

pub fn adapted_coefficients(m: &MetricField, p: &Point, kind: ConnectionKind) -> Result<ConnectionCoefficients> {
    m.check(p.as_slice())?;
    Ok(ConnectionCoefficients { kind, n: m.dim, gamma: connection_values(m, p.as_slice(), kind)? })
}

/// `T_E F`.
pub fn oneill_t(m: &MetricField, p: &Point, e: &TangentVector, f: &TangentVector) -> Result<TangentVector> {
    m.check(p.as_slice())?;
    check_vec(m, e, p)?;
    check_vec(m, f, p)?;
    let lg = local_values(m, p.as_slice())?;
    Ok(tv(p, apply2(m.dim, &lg.oneill_t(), e.as_slice(), f.as_slice())))
}

/// `A_E F`.
pub fn oneill_a(m: &MetricField, p: &Point, e: &TangentVector, f: &TangentVector) -> Result<TangentVector> {
    m.check(p.as_slice())?;
    check_vec(m, e, p)?;
    check_vec(m, f, p)?;
    let lg = local_values(m, p.as_slice())?;
    Ok(tv(p, apply2(m.dim, &lg.oneill_a(), e.as_slice(), f.as_slice())))
}

/// Jets of order 1 of the field components and of `V`, `Γ` at `x`.
struct FirstOrder {
    n: usize,
    vproj: Vec<Jet>,
    gamma0: Vec<f64>,
}

impl FirstOrder {
    fn at(m: &MetricField, x: &[f64]) -> Result<FirstOrder> {
        let jg = JetGeometry::at(m, x, 1)?;
        Ok(FirstOrder { n: m.dim, vproj: jg.local.vproj.clone(), gamma0: linalg::values(&jg.local.christoffel) })
    }

    /// `∇_E (P F)` for a projector jet `P` (or identity when `None`).
    fn nabla_projected(&self, e: &[f64], f: &[Jet], proj: Option<&[Jet]>) -> Vec<f64> {
        let n = self.n;
        let pf: Vec<Jet> = match proj {
            Some(p) => linalg::matvec(p, f, n),
            None => f.to_vec(),
        };
        let pf0: Vec<f64> = linalg::values(&pf);
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for k in 0..n {
                    s += e[k] * pf[i].d1(k);
                    for j in 0..n {
                        s += self.gamma0[ix3(n, i, j, k)] * pf0[j] * e[k];
                    }
                }
                s
            })
            .collect()
    }

    fn hproj(&self) -> Vec<Jet> {
        let n = self.n;
        (0..n * n)
            .map(|e| {
                let v = self.vproj[e].negate();
                if e / n == e % n {
                    v.shift(1.0)
                } else {
                    v
                }
            })
            .collect()
    }

    fn v0(&self) -> Vec<f64> {
        linalg::values(&self.vproj)
    }

    fn adapted(&self, e: &[f64], f: &[Jet]) -> Vec<f64> {
        let n = self.n;
        let v0 = self.v0();
        let h = self.hproj();
        let h0 = linalg::values(&h);
        let a = self.nabla_projected(e, f, Some(&self.vproj));
        let b = self.nabla_projected(e, f, Some(&h));
        let va = linalg::matvec(&v0, &a, n);
        let hb = linalg::matvec(&h0, &b, n);
        va.iter().zip(&hb).map(|(x, y)| x + y).collect()
    }
}

/// `∇_E F` (Levi-Civita) for a vector field `F`.
pub fn levi_civita_derivative(m: &MetricField, p: &Point, dir: &TangentVector, f: &VectorField) -> Result<TangentVector> {
    m.check(p.as_slice())?;
    check_vec(m, dir, p)?;
    let fo = FirstOrder::at(m, p.as_slice())?;
    Ok(tv(p, fo.nabla_projected(dir.as_slice(), &f.jets(p.as_slice(), 1), None)))
}

/// `∇̊_E F = V∇_E(VF) + H∇_E(HF)`.
pub fn adapted_derivative(m: &MetricField, p: &Point, dir: &TangentVector, f: &VectorField) -> Result<TangentVector> {
    m.check(p.as_slice())?;
    check_vec(m, dir, p)?;
    let fo = FirstOrder::at(m, p.as_slice())?;
    Ok(tv(p, fo.adapted(dir.as_slice(), &f.jets(p.as_slice(), 1))))
}

/// `T_E F` evaluated literally as `H∇_{VE}(VF) + V∇_{VE}(HF)` on a field
/// extension `F` (the result must not depend on the extension).
pub fn oneill_t_from_extension(m: &MetricField, p: &Point, e: &TangentVector, f: &VectorField) -> Result<TangentVector> {
    oneill_from_extension(m, p, e, f, true)
}

/// `A_E F = H∇_{HE}(VF) + V∇_{HE}(HF)` on a field extension.
pub fn oneill_a_from_extension(m: &MetricField, p: &Point, e: &TangentVector, f: &VectorField) -> Result<TangentVector> {
    oneill_from_extension(m, p, e, f, false)
}

fn oneill_from_extension(m: &MetricField, p: &Point, e: &TangentVector, f: &VectorField, vertical_dir: bool) -> Result<TangentVector> {
    m.check(p.as_slice())?;
    check_vec(m, e, p)?;
    let n = m.dim;
    let fo = FirstOrder::at(m, p.as_slice())?;
    let v0 = fo.v0();
    let h = fo.hproj();
    let h0 = linalg::values(&h);
    let ve = linalg::matvec(&v0, e.as_slice(), n);
    let dir = if vertical_dir { ve } else { linalg::sub(e.as_slice(), &ve) };
    let fj = f.jets(p.as_slice(), 1);
    let a = fo.nabla_projected(&dir, &fj, Some(&fo.vproj));
    let b = fo.nabla_projected(&dir, &fj, Some(&h));
    let ha = linalg::matvec(&h0, &a, n);
    let vb = linalg::matvec(&v0, &b, n);
    Ok(tv(p, ha.iter().zip(&vb).map(|(x, y)| x + y).collect()))
}

/// `T̊(E,F)` via the case formulas:
/// `T̊(V,W) = 0`, `T̊(X,Y) = −2A_X Y`, `T̊(X,V) = −T̊(V,X) = T_V X − A_X V`.
pub fn adapted_torsion(m: &MetricField, p: &Point, e: &TangentVector, f: &TangentVector) -> Result<TangentVector> {
    m.check(p.as_slice())?;
    check_vec(m, e, p)?;
    check_vec(m, f, p)?;
    let n = m.dim;
    let lg = local_values(m, p.as_slice())?;
    let t = lg.oneill_t();
    let a = lg.oneill_a();
    let ve = linalg::matvec(&lg.vproj, e.as_slice(), n);
    let he = linalg::sub(e.as_slice(), &ve);
    let vf = linalg::matvec(&lg.vproj, f.as_slice(), n);
    let hf = linalg::sub(f.as_slice(), &vf);
    let xy = apply2(n, &a, &he, &hf).iter().map(|v| -2.0 * v).collect::<Vec<_>>();
    // T̊(HE, VF) = T_{VF} HE − A_{HE} VF
    let xv = linalg::sub(&apply2(n, &t, &vf, &he), &apply2(n, &a, &he, &vf));
    // T̊(VE, HF) = −(T_{VE} HF − A_{HF} VE)
    let vx = linalg::sub(&apply2(n, &a, &hf, &ve), &apply2(n, &t, &ve, &hf));
    let out = (0..n).map(|i| xy[i] + xv[i] + vx[i]).collect();
    Ok(tv(p, out))
}

/// `T̊(E,F) = ∇̊_E F − ∇̊_F E − [E,F]` on field extensions.
pub fn adapted_torsion_direct(m: &MetricField, p: &Point, e: &VectorField, f: &VectorField) -> Result<TangentVector> {
    m.check(p.as_slice())?;
    let n = m.dim;
    let x = p.as_slice();
    let fo = FirstOrder::at(m, x)?;
    let ej = e.jets(x, 1);
    let fj = f.jets(x, 1);
    let e0 = linalg::values(&ej);
    let f0 = linalg::values(&fj);
    let a = fo.adapted(&e0, &fj);
    let b = fo.adapted(&f0, &ej);
    let br = bracket(n, &ej, &fj);
    Ok(tv(p, (0..n).map(|i| a[i] - b[i] - br[i]).collect()))
}

/// Coordinate bracket `[E,F]^i = E^k ∂_k F^i − F^k ∂_k E^i` from order-1 jets.
pub fn bracket(n: usize, e: &[Jet], f: &[Jet]) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for k in 0..n {
                s += e[k].value() * f[i].d1(k) - f[k].value() * e[i].d1(k);
            }
            s
        })
        .collect()
}

/// `∇̆_E F = ∇̊_E F − ½T̊(E, F)`.
pub fn breve_derivative(m: &MetricField, p: &Point, dir: &TangentVector, f: &VectorField) -> Result<TangentVector> {
    let a = adapted_derivative(m, p, dir, f)?;
    let fv = tv(p, f.eval(p.as_slice()));
    let t = adapted_torsion(m, p, dir, &fv)?;
    Ok(tv(p, (0..m.dim).map(|i| a.components[i] - 0.5 * t.components[i]).collect()))
}

/// `R(E,F)G` for the chosen connection.
pub fn curvature(
    m: &MetricField,
    p: &Point,
    kind: ConnectionKind,
    e: &TangentVector,
    f: &TangentVector,
    g: &TangentVector,
) -> Result<TangentVector> {
    m.check(p.as_slice())?;
    let jg = JetGeometry::at(m, p.as_slice(), 2)?;
    let r = linalg::values(&jg.curvature(kind));
    Ok(tv(p, apply_curvature(m.dim, &r, e.as_slice(), f.as_slice(), g.as_slice())))
}

/// Sectional curvature of the plane spanned by `e`, `f`.
pub fn sectional_curvature(m: &MetricField, p: &Point, kind: ConnectionKind, e: &[f64], f: &[f64]) -> Result<f64> {
    let g = m.values(p.as_slice());
    let jg = JetGeometry::at(m, p.as_slice(), 2)?;
    let r = linalg::values(&jg.curvature(kind));
    let rv = apply_curvature(m.dim, &r, e, f, f);
    let num = linalg::inner(&g, &rv, e);
    let den = linalg::inner(&g, e, e) * linalg::inner(&g, f, f) - linalg::inner(&g, e, f).powi(2);
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurvatureCase {
    VV,
    XY,
    XV,
}

/// All tensors entering the curvature-difference identities, at one point.
pub struct CurvatureData {
    pub n: usize,
    pub g: Vec<f64>,
    pub vproj: Vec<f64>,
    pub r: Vec<f64>,
    pub r_adapted: Vec<f64>,
    pub t: Vec<f64>,
    pub a: Vec<f64>,
    pub dt: Vec<f64>,
    pub da: Vec<f64>,
}

impl CurvatureData {
    pub fn at(m: &MetricField, x: &[f64]) -> Result<CurvatureData> {
        let jg = JetGeometry::at(m, x, 2)?;
        let n = m.dim;
        let t = jg.local.oneill_t();
        let a = jg.local.oneill_a();
        let dt = covariant_derivative(n, 2, &t, &jg.local.christoffel);
        let da = covariant_derivative(n, 2, &a, &jg.local.christoffel);
        Ok(CurvatureData {
            n,
            g: linalg::values(&jg.local.g),
            vproj: linalg::values(&jg.local.vproj),
            r: linalg::values(&jg.curvature(ConnectionKind::LeviCivita)),
            r_adapted: linalg::values(&jg.curvature(ConnectionKind::Adapted)),
            t: linalg::values(&t),
            a: linalg::values(&a),
            dt: linalg::values(&dt),
            da: linalg::values(&da),
        })
    }

    fn tt(&self, e: &[f64], f: &[f64]) -> Vec<f64> {
        apply2(self.n, &self.t, e, f)
    }

    fn aa(&self, e: &[f64], f: &[f64]) -> Vec<f64> {
        apply2(self.n, &self.a, e, f)
    }

    /// `(R̊ − R)(E,F)G`.
    pub fn lhs(&self, e: &[f64], f: &[f64], g: &[f64]) -> Vec<f64> {
        linalg::sub(
            &apply_curvature(self.n, &self.r_adapted, e, f, g),
            &apply_curvature(self.n, &self.r, e, f, g),
        )
    }

    /// Right-hand sides of the three displayed identities.
    pub fn rhs(&self, case: CurvatureCase, e: &[f64], f: &[f64], g: &[f64]) -> Vec<f64> {
        let n = self.n;
        let dt = |d: &[f64], x: &[f64], y: &[f64]| apply_derivative(n, &self.dt, d, x, y);
        let da = |d: &[f64], x: &[f64], y: &[f64]| apply_derivative(n, &self.da, d, x, y);
        let sum = |parts: &[(f64, Vec<f64>)]| -> Vec<f64> {
            (0..n).map(|i| parts.iter().map(|(c, v)| c * v[i]).sum()).collect()
        };
        match case {
            // −(∇_V T)_W + (∇_W T)_V + [T_V, T_W]
            CurvatureCase::VV => {
                let (v, w) = (e, f);
                sum(&[
                    (-1.0, dt(v, w, g)),
                    (1.0, dt(w, v, g)),
                    (1.0, self.tt(v, &self.tt(w, g))),
                    (-1.0, self.tt(w, &self.tt(v, g))),
                ])
            }
            // −(∇_X A)_Y + (∇_Y A)_X + [A_X, A_Y] + T_{V[X,Y]}, with V[X,Y] = 2A_X Y
            CurvatureCase::XY => {
                let (x, y) = (e, f);
                let vxy: Vec<f64> = self.aa(x, y).iter().map(|c| 2.0 * c).collect();
                sum(&[
                    (-1.0, da(x, y, g)),
                    (1.0, da(y, x, g)),
                    (1.0, self.aa(x, &self.aa(y, g))),
                    (-1.0, self.aa(y, &self.aa(x, g))),
                    (1.0, self.tt(&vxy, g)),
                ])
            }
            // −(∇_X T)_V + (∇_V A)_X − T_{T_V X} + A_{A_X V} + [A_X, T_V]
            CurvatureCase::XV => {
                let (x, v) = (e, f);
                sum(&[
                    (-1.0, dt(x, v, g)),
                    (1.0, da(v, x, g)),
                    (-1.0, self.tt(&self.tt(v, x), g)),
                    (1.0, self.aa(&self.aa(x, v), g)),
                    (1.0, self.aa(x, &self.tt(v, g))),
                    (-1.0, self.tt(v, &self.aa(x, g))),
                ])
            }
        }
    }

    /// Random unit vector in the vertical (or horizontal) subspace.
    pub fn random_split_unit<R: Rng>(&self, rng: &mut R, vertical: bool) -> Vec<f64> {
        let n = self.n;
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = linalg::matvec(&self.vproj, &raw, n);
        let w = if vertical { v } else { linalg::sub(&raw, &v) };
        let len = linalg::gnorm(&self.g, &w);
        w.iter().map(|c| c / len).collect()
    }

    pub fn random_unit<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let len = linalg::gnorm(&self.g, &raw);
        raw.iter().map(|c| c / len).collect()
    }
}

/// Max g-norm residual of one curvature-difference identity over `draws`
/// random unit test vectors.
pub fn curvature_difference_check<R: Rng>(m: &MetricField, p: &Point, case: CurvatureCase, rng: &mut R, draws: usize) -> Result<f64> {
    m.check(p.as_slice())?;
    let cd = CurvatureData::at(m, p.as_slice())?;
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let (e, f) = match case {
            CurvatureCase::VV => (cd.random_split_unit(rng, true), cd.random_split_unit(rng, true)),
            CurvatureCase::XY => (cd.random_split_unit(rng, false), cd.random_split_unit(rng, false)),
            CurvatureCase::XV => (cd.random_split_unit(rng, false), cd.random_split_unit(rng, true)),
        };
        let g = cd.random_unit(rng);
        let d = linalg::sub(&cd.lhs(&e, &f, &g), &cd.rhs(case, &e, &f, &g));
        worst = worst.max(linalg::gnorm(&cd.g, &d));
    }
    Ok(worst)
}

/// `θ_X V = ∇̊_X V − T_V X` for horizontal `X` and a vertical field `V`.
pub fn theta_operator(m: &MetricField, p: &Point, x: &TangentVector, vf: &VectorField) -> Result<TangentVector> {
    m.check(p.as_slice())?;
    let n = m.dim;
    let lg = local_values(m, p.as_slice())?;
    let vx = linalg::matvec(&lg.vproj, x.as_slice(), n);
    let scale = linalg::gnorm(&lg.g, x.as_slice()).max(1e-300);
    if linalg::gnorm(&lg.g, &vx) > 1e-8 * scale {
        return Err(Error::InvalidInput("θ needs a horizontal direction".into()));
    }
    let d = adapted_derivative(m, p, x, vf)?;
    let v0 = vf.eval(p.as_slice());
    let t = apply2(n, &lg.oneill_t(), &v0, x.as_slice());
    Ok(tv(p, linalg::sub(d.as_slice(), &t)))
}

/// `V[X̃, V]` for the horizontal extension `X̃(y) = H(y) X`.
pub fn theta_bracket(m: &MetricField, p: &Point, x: &TangentVector, vf: &VectorField) -> Result<TangentVector> {
    m.check(p.as_slice())?;
    let n = m.dim;
    let xs = p.as_slice();
    let fo = FirstOrder::at(m, xs)?;
    let h = fo.hproj();
    let seed = Jet::seed(xs, 1);
    let xc: Vec<Jet> = x.as_slice().iter().map(|&c| seed[0].lift(c)).collect();
    let xt = linalg::matvec(&h, &xc, n);
    let br = bracket(n, &xt, &vf.jets(xs, 1));
    Ok(tv(p, linalg::matvec(&fo.v0(), &br, n)))
}

/// Horizontal representative of `∇^F_V X̄ = overline(∇̊_V X − A_X V)`.
pub fn normal_connection_derivative(m: &MetricField, p: &Point, v: &TangentVector, xf: &VectorField) -> Result<TangentVector> {
    m.check(p.as_slice())?;
    let n = m.dim;
    let lg = local_values(m, p.as_slice())?;
    let vv = linalg::matvec(&lg.vproj, v.as_slice(), n);
    let scale = linalg::gnorm(&lg.g, v.as_slice()).max(1e-300);
    if linalg::gnorm(&lg.g, &linalg::sub(v.as_slice(), &vv)) > 1e-8 * scale {
        return Err(Error::InvalidInput("normal connection needs a vertical direction".into()));
    }
    let d = adapted_derivative(m, p, v, xf)?;
    let x0 = xf.eval(p.as_slice());
    Ok(tv(p, normal_part(&lg, d.as_slice(), &x0, v.as_slice())))
}

/// `H(∇̊_V X) − A_X V` given `∇̊_V X` directly (fields known only along a curve).
pub fn normal_part(lg: &LocalGeometry<f64>, nabla_x: &[f64], x: &[f64], v: &[f64]) -> Vec<f64> {
    let n = lg.n;
    let h = lg.hproj();
    let hd = linalg::matvec(&h, nabla_x, n);
    let ax = apply2(n, &lg.oneill_a(), x, v);
    linalg::sub(&hd, &ax)
}

// ---------------------------------------------------------------- norms

/// Pointwise tensor norm convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorNorm {
    /// Root sum of squares of orthonormal-frame components.
    Frobenius,
    /// Sup of `|τ(E_1..E_p)|` over g-unit arguments (multilinear operator norm).
    Operator,
}

/// An evaluated (1,p)-tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValue {
    pub n: usize,
    pub lower: usize,
    pub components: Vec<f64>,
}

impl TensorValue {
    /// Components in a g-orthonormal frame (columns of `frame`).
    pub fn frame_components(&self, frame: &DMatrix<f64>) -> Vec<f64> {
        let n = self.n;
        let inv = frame.clone().try_inverse().expect("frame invertible");
        let mut cur = self.components.clone();
        // Transform slot by slot: upper slot with inv, lower slots with frame.
        for slot in 0..=self.lower {
            let stride = n.pow((self.lower - slot) as u32);
            let mut next = vec![0.0; cur.len()];
            for flat in 0..cur.len() {
                let idx = (flat / stride) % n;
                let base = flat - idx * stride;
                let mut s = 0.0;
                for l in 0..n {
                    let c = if slot == 0 { inv[(idx, l)] } else { frame[(l, idx)] };
                    s += c * cur[base + l * stride];
                }
                next[flat] = s;
            }
            cur = next;
        }
        cur
    }

    pub fn norm(&self, g: &[f64], kind: TensorNorm) -> f64 {
        let frame = linalg::orthonormal_frame(g, self.n).expect("metric positive definite");
        let c = self.frame_components(&frame);
        match kind {
            TensorNorm::Frobenius => c.iter().map(|v| v * v).sum::<f64>().sqrt(),
            TensorNorm::Operator => operator_norm(self.n, self.lower, &c),
        }
    }
}

/// Multilinear operator norm of a Euclidean (1,p) array by alternating
/// maximisation over unit vectors, from several deterministic starts.
pub fn operator_norm(n: usize, lower: usize, c: &[f64]) -> f64 {
    let fro = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if fro == 0.0 {
        return 0.0;
    }
    if lower == 0 {
        return fro;
    }
    if lower == 1 {
        return DMatrix::from_row_slice(n, n, c).singular_values().max();
    }
    // Contract all lower slots except `free` with the current vectors, giving
    // an n×n matrix (output index × free slot).
    let contract = |vecs: &[DVector<f64>], free: usize| -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        let total = c.len();
        for flat in 0..total {
            let mut r = flat;
            let mut idx = vec![0usize; lower + 1];
            for s in (0..=lower).rev() {
                idx[s] = r % n;
                r /= n;
            }
            let mut w = c[flat];
            for s in 0..lower {
                if s != free {
                    w *= vecs[s][idx[s + 1]];
                }
            }
            m[(idx[0], idx[free + 1])] += w;
        }
        m
    };
    let top_right = |m: &DMatrix<f64>| -> (f64, DVector<f64>) {
        let eig = SymmetricEigen::new(m.transpose() * m);
        let (k, lam) = eig.eigenvalues.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        (lam.max(0.0).sqrt(), eig.eigenvectors.column(k).into_owned())
    };
    // Starts: unfolding-based vectors, then coordinate directions in slot 0.
    let mut starts: Vec<Vec<DVector<f64>>> = Vec::new();
    let mut unfold: Vec<DVector<f64>> = Vec::new();
    for s in 0..lower {
        let ones = vec![DVector::from_element(n, 1.0 / (n as f64).sqrt()); lower];
        let (_, v) = top_right(&contract(&ones, s));
        unfold.push(v);
    }
    starts.push(unfold.clone());
    for a in 0..n {
        let mut st = unfold.clone();
        st[0] = DVector::from_fn(n, |i, _| if i == a { 1.0 } else { 0.0 });
        starts.push(st);
        let mut st = unfold.clone();
        st[lower - 1] = DVector::from_fn(n, |i, _| if i == a { 1.0 } else { 0.0 });
        starts.push(st);
    }
    let mut best = 0.0f64;
    for mut vecs in starts {
        let mut val = 0.0;
        for _ in 0..200 {
            let prev = val;
            for s in 0..lower {
                let (sv, v) = top_right(&contract(&vecs, s));
                vecs[s] = v;
                val = sv;
            }
            if (val - prev).abs() <= 1e-15 * val.max(1.0) {
                break;
            }
        }
        best = best.max(val);
    }
    best.min(fro)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord, Hash)]
pub enum AuditTensor {
    R,
    T,
    A,
}

/// `∇^k τ` for k = 0..=max_order, as values, from one jet expansion.
pub fn covariant_derivatives(m: &MetricField, x: &[f64], tensor: AuditTensor, max_order: usize) -> Result<Vec<TensorValue>> {
    let base_order = match tensor {
        AuditTensor::R => 2,
        AuditTensor::T | AuditTensor::A => 1,
    };
    let jg = JetGeometry::at(m, x, base_order + max_order)?;
    let n = m.dim;
    let (mut cur, mut lower) = match tensor {
        AuditTensor::R => (jg.curvature(ConnectionKind::LeviCivita), 3),
        AuditTensor::T => (jg.local.oneill_t(), 2),
        AuditTensor::A => (jg.local.oneill_a(), 2),
    };
    let mut out = Vec::with_capacity(max_order + 1);
    for k in 0..=max_order {
        out.push(TensorValue { n, lower, components: linalg::values(&cur) });
        if k < max_order {
            cur = covariant_derivative(n, lower, &cur, &jg.local.christoffel);
            lower += 1;
        }
    }
    Ok(out)
}

/// `|∇^k τ|_g` at `p`.
pub fn covariant_norm(m: &MetricField, p: &Point, tensor: AuditTensor, order: usize, kind: TensorNorm) -> Result<f64> {
    if order > 4 {
        return Err(Error::OrderExceeded { requested: order, max: 4 });
    }
    m.check(p.as_slice())?;
    let vals = covariant_derivatives(m, p.as_slice(), tensor, order)?;
    Ok(vals[order].norm(&m.values(p.as_slice()), kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::builtin;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn warp_christoffels_match_closed_form() {
        let f = builtin("FIX-WARP").unwrap();
        let x = [0.3, -1.2];
        let c = christoffel(&f.field, &Point::new(&x)).unwrap();
        let e2 = (2.0f64 * 0.3).exp();
        assert!((c.get(0, 1, 1) + e2).abs() < 1e-14);
        assert!((c.get(1, 0, 1) - 1.0).abs() < 1e-14);
        assert!((c.get(1, 1, 0) - 1.0).abs() < 1e-14);
        assert!(c.asymmetry() < 1e-15);
    }

    #[test]
    fn warp_t_of_unit_vertical_is_minus_dx() {
        let f = builtin("FIX-WARP").unwrap();
        let x = [0.7, 0.2];
        let p = Point::new(&x);
        let v = TangentVector::new(&p, &[0.0, (-0.7f64).exp()]);
        let t = oneill_t(&f.field, &p, &v, &v).unwrap();
        assert!((t.components[0] + 1.0).abs() < 1e-14);
        assert!(t.components[1].abs() < 1e-14);
    }

    #[test]
    fn frobenius_and_operator_norms_of_warp_t() {
        let f = builtin("FIX-WARP").unwrap();
        let p = Point::new(&[1.3, 0.0]);
        let op = covariant_norm(&f.field, &p, AuditTensor::T, 0, TensorNorm::Operator).unwrap();
        let fr = covariant_norm(&f.field, &p, AuditTensor::T, 0, TensorNorm::Frobenius).unwrap();
        assert!((op - 1.0).abs() < 1e-12, "{op}");
        assert!((fr - 2f64.sqrt()).abs() < 1e-12, "{fr}");
    }

    #[test]
    fn hopf_horizontal_sectional_curvature_is_one() {
        let f = builtin("FIX-HOPF").unwrap();
        let x = [1.0, 0.2, 0.3];
        let g = f.field.values(&x);
        let e = crate::geometry::adapted_basis(&f.field.spec, &g).unwrap();
        let e1: Vec<f64> = e.column(0).iter().copied().collect();
        let e2: Vec<f64> = e.column(1).iter().copied().collect();
        let k = sectional_curvature(&f.field, &Point::new(&x), ConnectionKind::LeviCivita, &e1, &e2).unwrap();
        assert!((k - 1.0).abs() < 1e-10, "{k}");
    }

    #[test]
    fn operator_norm_of_rank_one_tensor() {
        // τ(u,v) = (a·u)(b·v) e1 has operator norm |a||b|.
        let n = 2;
        let a = [3.0, 4.0];
        let b = [1.0, 0.0];
        let mut c = vec![0.0; 8];
        for j in 0..n {
            for k in 0..n {
                c[j * n + k] = a[j] * b[k];
            }
        }
        assert!((operator_norm(2, 2, &c) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn product_everything_vanishes() {
        let f = builtin("FIX-PRODUCT").unwrap();
        let p = Point::new(&[0.1, 0.2]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for case in [CurvatureCase::VV, CurvatureCase::XY, CurvatureCase::XV] {
            assert_eq!(curvature_difference_check(&f.field, &p, case, &mut rng, 4).unwrap(), 0.0);
        }
    }

    #[test]
    fn covariant_derivative_of_metric_compatible_identity() {
        // ∇ of the identity (1,1)-tensor vanishes for any connection.
        let f = builtin("FIX-HOPF").unwrap();
        let jg = JetGeometry::at(&f.field, &[0.9, 0.1, 0.2], 2).unwrap();
        let n = 3;
        let proto = jg.local.christoffel[0].clone();
        let id: Vec<Jet> = (0..n * n).map(|e| proto.lift(if e / n == e % n { 1.0 } else { 0.0 })).collect();
        let d = covariant_derivative(n, 1, &id, &jg.local.adapted);
        assert!(d.iter().all(|j| j.value().abs() < 1e-14));
    }
}
