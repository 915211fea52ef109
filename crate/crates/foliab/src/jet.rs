//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] of order `K` in `n` variables stores the Taylor coefficients
//! `c_I = ∂_I f(x0) / I!` for all multi-indices with `|I| ≤ K`. Arithmetic on
//! jets propagates derivatives exactly (forward mode, all orders at once), so
//! a metric expression evaluated on seeded jets yields every partial derivative
//! of its coefficients up to `K` without truncation error.
//!
//! Monomials are stored in graded order, so the coefficients of an order-`K'`
//! truncation are a prefix of the order-`K` array. Binary operations between
//! jets of different order silently truncate to the smaller order; this is
//! what makes `partial` (which lowers the order by one) compose naturally.

use smallvec::SmallVec;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

/// Number-like values the geometry pipeline is generic over.
///
/// Implemented by `f64` (plain values) and [`Jet`] (values plus derivatives).
/// Constants are created through [`Scalar::lift`] so that jets inherit the
/// variable space of an existing value.
pub trait Scalar: Clone + fmt::Debug {
    fn value(&self) -> f64;
    /// A constant living in the same space as `self`.
    fn lift(&self, c: f64) -> Self;
    fn plus(&self, o: &Self) -> Self;
    fn minus(&self, o: &Self) -> Self;
    fn times(&self, o: &Self) -> Self;
    fn over(&self, o: &Self) -> Self;
    fn negate(&self) -> Self;
    fn scale(&self, c: f64) -> Self;
    fn shift(&self, c: f64) -> Self;
    fn recip(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sinh(&self) -> Self;
    fn cosh(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powi(&self, k: i32) -> Self;
    fn powf(&self, c: f64) -> Self;

    /// Exactly zero, including every derivative.
    fn is_zero(&self) -> bool;

    fn zero_like(&self) -> Self {
        self.lift(0.0)
    }

    /// `self + a*b`, the workhorse of tensor contractions.
    fn fma(&self, a: &Self, b: &Self) -> Self {
        self.plus(&a.times(b))
    }
}

impl Scalar for f64 {
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    #[inline]
    fn lift(&self, c: f64) -> Self {
        c
    }
    #[inline]
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    #[inline]
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    #[inline]
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    #[inline]
    fn over(&self, o: &Self) -> Self {
        self / o
    }
    #[inline]
    fn negate(&self) -> Self {
        -self
    }
    #[inline]
    fn scale(&self, c: f64) -> Self {
        self * c
    }
    #[inline]
    fn shift(&self, c: f64) -> Self {
        self + c
    }
    #[inline]
    fn recip(&self) -> Self {
        1.0 / self
    }
    #[inline]
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    #[inline]
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    #[inline]
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    #[inline]
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    #[inline]
    fn sinh(&self) -> Self {
        f64::sinh(*self)
    }
    #[inline]
    fn cosh(&self) -> Self {
        f64::cosh(*self)
    }
    #[inline]
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    #[inline]
    fn powi(&self, k: i32) -> Self {
        f64::powi(*self, k)
    }
    #[inline]
    fn powf(&self, c: f64) -> Self {
        f64::powf(*self, c)
    }
    #[inline]
    fn fma(&self, a: &Self, b: &Self) -> Self {
        self + a * b
    }
}

/// Monomial tables shared by every jet with the same `(nvars, order)`.
pub struct JetSpace {
    nvars: usize,
    order: usize,
    monomials: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    /// The space one order lower (itself at order 0).
    lower: Option<&'static JetSpace>,
    /// `(lhs, rhs, out)` triples of the truncated product.
    products: Vec<(u16, u16, u16)>,
    /// Per variable: `(src, dst, factor)` with `(∂_k f)[dst] = factor · f[src]`.
    partials: Vec<Vec<(u16, u16, f64)>>,
    factorials: Vec<f64>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JetSpace(n={}, K={})", self.nvars, self.order)
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

fn monomials_of_degree(nvars: usize, d: usize, out: &mut Vec<Vec<u8>>) {
    fn rec(k: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if k + 1 == cur.len() {
            cur[k] = left as u8;
            out.push(cur.clone());
            return;
        }
        for e in (0..=left).rev() {
            cur[k] = e as u8;
            rec(k + 1, left - e, cur, out);
        }
    }
    let mut cur = vec![0u8; nvars];
    rec(0, d, &mut cur, out);
}

impl JetSpace {
    fn build(nvars: usize, order: usize, lower: Option<&'static JetSpace>) -> JetSpace {
        assert!(nvars >= 1, "jet space needs at least one variable");
        let mut monomials = Vec::new();
        for d in 0..=order {
            monomials_of_degree(nvars, d, &mut monomials);
        }
        debug_assert_eq!(monomials.len(), binomial(nvars + order, order));
        assert!(monomials.len() < u16::MAX as usize, "jet space too large");
        let lookup: HashMap<Vec<u8>, usize> =
            monomials.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let deg = |m: &[u8]| m.iter().map(|&e| e as usize).sum::<usize>();

        let mut products = Vec::new();
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                if deg(a) + deg(b) > order {
                    continue;
                }
                let s: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                products.push((i as u16, j as u16, lookup[&s] as u16));
            }
        }
        // Sorting by output slot keeps the accumulation cache-friendly.
        products.sort_by_key(|&(_, _, k)| k);

        let factorials = monomials
            .iter()
            .map(|m| m.iter().map(|&e| (1..=e as u64).product::<u64>() as f64).product())
            .collect();

        let mut partials = vec![Vec::new(); nvars];
        for (i, m) in monomials.iter().enumerate() {
            for k in 0..nvars {
                let mut up = m.clone();
                up[k] += 1;
                if let Some(&src) = lookup.get(&up) {
                    if deg(m) < order {
                        partials[k].push((src as u16, i as u16, up[k] as f64));
                    }
                }
            }
        }
        JetSpace { nvars, order, monomials, lookup, lower, products, partials, factorials }
    }

    /// The shared space for `(nvars, order)`; built once and leaked.
    pub fn get(nvars: usize, order: usize) -> &'static JetSpace {
        static REGISTRY: OnceLock<Mutex<HashMap<(usize, usize), &'static JetSpace>>> = OnceLock::new();
        let reg = REGISTRY.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(sp) = reg.lock().expect("jet registry poisoned").get(&(nvars, order)) {
            return sp;
        }
        let lower = if order > 0 { Some(JetSpace::get(nvars, order - 1)) } else { None };
        let built = JetSpace::build(nvars, order, lower);
        let mut map = reg.lock().expect("jet registry poisoned");
        map.entry((nvars, order)).or_insert_with(|| Box::leak(Box::new(built)))
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn monomials(&self) -> &[Vec<u8>] {
        &self.monomials
    }

    pub fn index_of(&self, exponents: &[u8]) -> Option<usize> {
        self.lookup.get(exponents).copied()
    }

    fn lower(&self) -> &'static JetSpace {
        self.lower.expect("order-0 space has no lower space")
    }

    fn truncated(&self, order: usize) -> &'static JetSpace {
        let mut sp = self.lower();
        while sp.order > order {
            sp = sp.lower();
        }
        sp
    }
}

type Coeffs = SmallVec<[f64; 10]>;

/// A truncated Taylor expansion at a fixed base point.
#[derive(Clone)]
pub struct Jet {
    space: &'static JetSpace,
    c: Coeffs,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet(K={}, {:?})", self.space.order, &self.c[..])
    }
}

impl Jet {
    pub fn constant(space: &'static JetSpace, v: f64) -> Jet {
        let mut c: Coeffs = SmallVec::from_elem(0.0, space.len());
        c[0] = v;
        Jet { space, c }
    }

    /// The coordinate function `x_k` expanded at a point where it equals `v`.
    pub fn variable(space: &'static JetSpace, k: usize, v: f64) -> Jet {
        let mut j = Jet::constant(space, v);
        if space.order >= 1 {
            j.c[1 + k] = 1.0;
        }
        j
    }

    /// Seeds all coordinates at `x`.
    pub fn seed(x: &[f64], order: usize) -> Vec<Jet> {
        let sp = JetSpace::get(x.len(), order);
        x.iter().enumerate().map(|(k, &v)| Jet::variable(sp, k, v)).collect()
    }

    pub fn from_coeffs(space: &'static JetSpace, coeffs: &[f64]) -> Jet {
        assert_eq!(coeffs.len(), space.len());
        Jet { space, c: SmallVec::from_slice(coeffs) }
    }

    pub fn space(&self) -> &'static JetSpace {
        self.space
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub fn nvars(&self) -> usize {
        self.space.nvars
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    /// Taylor coefficient of the monomial with the given exponents.
    pub fn coeff(&self, exponents: &[u8]) -> f64 {
        self.space.index_of(exponents).map_or(0.0, |i| self.c[i])
    }

    /// The partial derivative `∂_I f` at the base point.
    pub fn derivative(&self, exponents: &[u8]) -> f64 {
        match self.space.index_of(exponents) {
            Some(i) => self.c[i] * self.space.factorials[i],
            None => panic!("derivative order exceeds jet order {}", self.space.order),
        }
    }

    /// First derivative `∂_k f`.
    pub fn d1(&self, k: usize) -> f64 {
        self.c[1 + k]
    }

    /// The jet of `∂_k f`, one order lower.
    ///
    /// Panics on an order-0 jet: callers track the order budget.
    pub fn partial(&self, k: usize) -> Jet {
        assert!(self.space.order >= 1, "partial derivative of an order-0 jet");
        let sp = self.space.lower();
        let mut c: Coeffs = SmallVec::from_elem(0.0, sp.len());
        for &(src, dst, f) in &self.space.partials[k] {
            c[dst as usize] = f * self.c[src as usize];
        }
        Jet { space: sp, c }
    }

    /// Drop all coefficients above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.space.order {
            return self.clone();
        }
        let sp = self.space.truncated(order);
        Jet { space: sp, c: SmallVec::from_slice(&self.c[..sp.len()]) }
    }

    /// True when every derivative coefficient vanishes.
    pub fn is_constant(&self) -> bool {
        self.c[1..].iter().all(|&v| v == 0.0)
    }

    fn common<'a>(&'a self, o: &'a Jet) -> (&'static JetSpace, &'a [f64], &'a [f64]) {
        debug_assert_eq!(self.space.nvars, o.space.nvars, "jets over different variable sets");
        let sp = if self.space.order <= o.space.order { self.space } else { o.space };
        let m = sp.len();
        (sp, &self.c[..m], &o.c[..m])
    }

    fn mul_slices(sp: &'static JetSpace, a: &[f64], b: &[f64]) -> Coeffs {
        let mut out: Coeffs = SmallVec::from_elem(0.0, sp.len());
        if sp.order == 0 {
            out[0] = a[0] * b[0];
            return out;
        }
        if sp.order == 1 {
            out[0] = a[0] * b[0];
            for i in 1..sp.len() {
                out[i] = a[0] * b[i] + a[i] * b[0];
            }
            return out;
        }
        for &(i, j, k) in &sp.products {
            out[k as usize] += a[i as usize] * b[j as usize];
        }
        out
    }

    /// `f(u)` given `derivs[m] = f^{(m)}(u0)` for `m = 0..=K`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let sp = self.space;
        let k = sp.order;
        debug_assert!(derivs.len() > k);
        if k == 0 {
            return Jet::constant(sp, derivs[0]);
        }
        if k == 1 {
            let mut c = self.c.clone();
            c[0] = derivs[0];
            for v in c[1..].iter_mut() {
                *v *= derivs[1];
            }
            return Jet { space: sp, c };
        }
        let mut delta = self.c.clone();
        delta[0] = 0.0;
        // Horner in δ = u − u0 with coefficients f^{(m)}/m!.
        let mut fact = vec![1.0; k + 1];
        for m in 1..=k {
            fact[m] = fact[m - 1] * m as f64;
        }
        let mut acc: Coeffs = SmallVec::from_elem(0.0, sp.len());
        acc[0] = derivs[k] / fact[k];
        for m in (0..k).rev() {
            acc = Self::mul_slices(sp, &acc, &delta);
            acc[0] += derivs[m] / fact[m];
        }
        Jet { space: sp, c: acc }
    }

    fn order_derivs(&self, f: impl Fn(usize) -> f64) -> Vec<f64> {
        (0..=self.space.order).map(f).collect()
    }
}

impl Scalar for Jet {
    fn value(&self) -> f64 {
        self.c[0]
    }

    fn is_zero(&self) -> bool {
        self.c.iter().all(|&v| v == 0.0)
    }

    fn lift(&self, c: f64) -> Self {
        Jet::constant(self.space, c)
    }

    fn plus(&self, o: &Self) -> Self {
        let (sp, a, b) = self.common(o);
        Jet { space: sp, c: a.iter().zip(b).map(|(x, y)| x + y).collect() }
    }

    fn minus(&self, o: &Self) -> Self {
        let (sp, a, b) = self.common(o);
        Jet { space: sp, c: a.iter().zip(b).map(|(x, y)| x - y).collect() }
    }

    fn times(&self, o: &Self) -> Self {
        let (sp, a, b) = self.common(o);
        Jet { space: sp, c: Self::mul_slices(sp, a, b) }
    }

    fn over(&self, o: &Self) -> Self {
        self.times(&o.recip())
    }

    fn negate(&self) -> Self {
        Jet { space: self.space, c: self.c.iter().map(|x| -x).collect() }
    }

    fn scale(&self, s: f64) -> Self {
        Jet { space: self.space, c: self.c.iter().map(|x| x * s).collect() }
    }

    fn shift(&self, s: f64) -> Self {
        let mut c = self.c.clone();
        c[0] += s;
        Jet { space: self.space, c }
    }

    fn fma(&self, a: &Self, b: &Self) -> Self {
        let (sp, x, y) = a.common(b);
        let sp = if sp.order <= self.space.order { sp } else { self.space };
        let m = sp.len();
        let prod = Self::mul_slices(sp, &x[..m], &y[..m]);
        Jet { space: sp, c: self.c[..m].iter().zip(&prod).map(|(u, v)| u + v).collect() }
    }

    fn recip(&self) -> Self {
        let u = self.c[0];
        let mut d = Vec::with_capacity(self.space.order + 1);
        let mut v = 1.0 / u;
        for m in 0..=self.space.order {
            d.push(v);
            v *= -((m + 1) as f64) / u;
        }
        self.compose(&d)
    }

    fn exp(&self) -> Self {
        let e = self.c[0].exp();
        self.compose(&self.order_derivs(|_| e))
    }

    fn ln(&self) -> Self {
        let u = self.c[0];
        self.compose(&self.order_derivs(|m| {
            if m == 0 {
                u.ln()
            } else {
                let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
                sign * (1..m).map(|i| i as f64).product::<f64>() / u.powi(m as i32)
            }
        }))
    }

    fn sin(&self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose(&self.order_derivs(|m| [s, c, -s, -c][m % 4]))
    }

    fn cos(&self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose(&self.order_derivs(|m| [c, -s, -c, s][m % 4]))
    }

    fn sinh(&self) -> Self {
        let (s, c) = (self.c[0].sinh(), self.c[0].cosh());
        self.compose(&self.order_derivs(|m| if m % 2 == 0 { s } else { c }))
    }

    fn cosh(&self) -> Self {
        let (s, c) = (self.c[0].sinh(), self.c[0].cosh());
        self.compose(&self.order_derivs(|m| if m % 2 == 0 { c } else { s }))
    }

    fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    fn powi(&self, k: i32) -> Self {
        if k == 0 {
            return self.lift(1.0);
        }
        if k == 1 {
            return self.clone();
        }
        if k == 2 {
            return self.times(self);
        }
        let u = self.c[0];
        if u == 0.0 && k > 0 {
            // Falling-factorial derivatives vanish except at m = k.
            return self.compose(&self.order_derivs(|m| {
                if m as i32 == k {
                    (1..=k).map(|i| i as f64).product()
                } else {
                    0.0
                }
            }));
        }
        self.compose(&self.order_derivs(|m| {
            let mut coef = 1.0;
            for i in 0..m {
                coef *= (k - i as i32) as f64;
            }
            coef * u.powi(k - m as i32)
        }))
    }

    fn powf(&self, a: f64) -> Self {
        let u = self.c[0];
        self.compose(&self.order_derivs(|m| {
            let mut coef = 1.0;
            for i in 0..m {
                coef *= a - i as f64;
            }
            coef * u.powf(a - m as f64)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy(order: usize, x: f64, y: f64) -> (Jet, Jet) {
        let v = Jet::seed(&[x, y], order);
        (v[0].clone(), v[1].clone())
    }

    #[test]
    fn space_sizes_are_binomial() {
        for n in 1..4 {
            for k in 0..5 {
                assert_eq!(JetSpace::get(n, k).len(), binomial(n + k, k));
            }
        }
    }

    #[test]
    fn graded_prefix_property() {
        let big = JetSpace::get(3, 4);
        let small = JetSpace::get(3, 2);
        assert_eq!(&big.monomials()[..small.len()], small.monomials());
    }

    #[test]
    fn polynomial_derivatives_are_exact() {
        let (x, y) = xy(4, 1.3, -0.7);
        let f = x.times(&x).times(&y);
        assert_eq!(f.derivative(&[2, 1]), 2.0);
        assert!((f.derivative(&[1, 0]) - 2.0 * 1.3 * -0.7).abs() < 1e-15);
        assert_eq!(f.derivative(&[3, 0]), 0.0);
    }

    #[test]
    fn exp_of_2x_derivative() {
        let (x, _) = xy(3, 0.0, 0.0);
        let f = x.scale(2.0).exp();
        assert!((f.derivative(&[1, 0]) - 2.0).abs() < 1e-15);
        assert!((f.derivative(&[3, 0]) - 8.0).abs() < 1e-13);
    }

    #[test]
    fn quotient_and_transcendentals_match_closed_forms() {
        let (x, y) = xy(3, 0.4, 0.9);
        // d/dx sin(x)/y = cos(x)/y ; d²/dxdy = -cos(x)/y²
        let f = x.sin().over(&y);
        assert!((f.derivative(&[1, 0]) - 0.4f64.cos() / 0.9).abs() < 1e-14);
        assert!((f.derivative(&[1, 1]) + 0.4f64.cos() / 0.81).abs() < 1e-14);
        let g = x.ln().times(&y.cosh());
        assert!((g.derivative(&[2, 0]) + 0.9f64.cosh() / 0.16).abs() < 1e-12);
        let h = x.sqrt();
        assert!((h.derivative(&[2, 0]) + 0.25 * 0.4f64.powf(-1.5)).abs() < 1e-12);
        let p = x.powi(-3);
        assert!((p.derivative(&[1, 0]) + 3.0 * 0.4f64.powi(-4)).abs() < 1e-10);
    }

    #[test]
    fn partial_lowers_order() {
        let (x, y) = xy(3, 0.5, 2.0);
        let f = x.times(&x).times(&x).times(&y);
        let fx = f.partial(0);
        assert_eq!(fx.order(), 2);
        assert!((fx.value() - 3.0 * 0.25 * 2.0).abs() < 1e-15);
        assert!((fx.derivative(&[1, 1]) - 6.0 * 0.5).abs() < 1e-14);
    }

    #[test]
    fn mixed_orders_truncate() {
        let (x, y) = xy(3, 0.5, 2.0);
        let a = x.partial(0); // constant 1, order 2
        let s = a.plus(&y);
        assert_eq!(s.order(), 2);
        assert_eq!(s.value(), 3.0);
    }

    #[test]
    fn zero_base_integer_power() {
        let (x, _) = xy(4, 0.0, 0.0);
        let f = x.powi(3);
        assert_eq!(f.derivative(&[3, 0]), 6.0);
        assert_eq!(f.derivative(&[1, 0]), 0.0);
    }
}
