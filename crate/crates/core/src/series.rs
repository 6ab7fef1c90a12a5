//! Truncated multivariate Taylor algebra.
//!
//! Analytic inputs are represented as polynomials truncated per variable
//! group. Variables are ordered `[t, x_1..x_d, zeta_1..zeta_d, u_1..u_nu]`
//! where `zeta = xi - xi_0` is the frequency offset from the distinguished
//! frequency. All arithmetic closes within the truncation; products drop
//! overflowing terms and set a sticky `saturated` flag instead of erroring.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Variable layout: one time variable, `d` space and `d` frequency-offset
/// variables, plus `nu` state variables (used only by analytic data that
/// keeps explicit u-dependence, e.g. the zeroth-order term).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarLayout {
    pub d: usize,
    pub nu: usize,
}

impl VarLayout {
    pub fn new(d: usize, nu: usize) -> Self {
        VarLayout { d, nu }
    }

    pub fn nvars(&self) -> usize {
        1 + 2 * self.d + self.nu
    }

    pub fn t(&self) -> usize {
        0
    }

    pub fn x(&self, j: usize) -> usize {
        debug_assert!(j < self.d);
        1 + j
    }

    pub fn zeta(&self, j: usize) -> usize {
        debug_assert!(j < self.d);
        1 + self.d + j
    }

    pub fn u(&self, j: usize) -> usize {
        debug_assert!(j < self.nu);
        1 + 2 * self.d + j
    }

    /// Group of a variable index: 0 = t, 1 = x, 2 = zeta, 3 = u.
    pub fn group_of(&self, var: usize) -> usize {
        if var == 0 {
            0
        } else if var <= self.d {
            1
        } else if var <= 2 * self.d {
            2
        } else {
            3
        }
    }
}

/// Truncation degree per variable group (total degree within the group).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub t: u32,
    pub x: u32,
    pub zeta: u32,
    #[serde(default)]
    pub u: u32,
}

impl Caps {
    pub fn uniform(deg: u32) -> Self {
        Caps { t: deg, x: deg, zeta: deg, u: deg }
    }

    fn group(&self, g: usize) -> u32 {
        match g {
            0 => self.t,
            1 => self.x,
            2 => self.zeta,
            _ => self.u,
        }
    }

    /// Upper bound on the total degree of any admissible monomial.
    pub fn total(&self) -> u32 {
        self.t + self.x + self.zeta + self.u
    }
}

pub type Exps = Vec<u8>;

/// Sparse record used by the JSON ingestion schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoeffRecord {
    pub exponents: Vec<u8>,
    pub value: f64,
}

/// A truncated Taylor polynomial about the base point
/// (t=0, x=0, zeta=0, u=0).
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorSeries {
    layout: VarLayout,
    caps: Caps,
    coeffs: BTreeMap<Exps, f64>,
    saturated: bool,
}

impl TaylorSeries {
    pub fn zero(layout: VarLayout, caps: Caps) -> Self {
        TaylorSeries { layout, caps, coeffs: BTreeMap::new(), saturated: false }
    }

    pub fn constant(layout: VarLayout, caps: Caps, c: f64) -> Self {
        let mut s = Self::zero(layout, caps);
        if c != 0.0 {
            s.coeffs.insert(vec![0; layout.nvars()], c);
        }
        s
    }

    /// The monomial `c * v_i` for variable index `i`.
    pub fn variable(layout: VarLayout, caps: Caps, i: usize, c: f64) -> Self {
        let mut e = vec![0u8; layout.nvars()];
        e[i] = 1;
        Self::monomial(layout, caps, &e, c)
    }

    pub fn monomial(layout: VarLayout, caps: Caps, exps: &[u8], c: f64) -> Self {
        let mut s = Self::zero(layout, caps);
        s.set(exps, c);
        s
    }

    pub fn layout(&self) -> VarLayout {
        self.layout
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn saturated(&self) -> bool {
        self.saturated
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn admissible(&self, exps: &[u8]) -> bool {
        if exps.len() != self.layout.nvars() {
            return false;
        }
        let mut deg = [0u32; 4];
        for (i, &e) in exps.iter().enumerate() {
            deg[self.layout.group_of(i)] += e as u32;
        }
        (0..4).all(|g| deg[g] <= self.caps.group(g))
    }

    pub fn get(&self, exps: &[u8]) -> f64 {
        self.coeffs.get(exps).copied().unwrap_or(0.0)
    }

    /// Sets a coefficient. Panics on an inadmissible exponent; use the
    /// ingestion path for validated input.
    pub fn set(&mut self, exps: &[u8], c: f64) {
        assert!(self.admissible(exps), "inadmissible exponent {exps:?}");
        if c == 0.0 {
            self.coeffs.remove(exps);
        } else {
            self.coeffs.insert(exps.to_vec(), c);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Exps, &f64)> {
        self.coeffs.iter()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn constant_term(&self) -> f64 {
        self.get(&vec![0; self.layout.nvars()])
    }

    fn assert_compatible(&self, other: &Self) {
        assert_eq!(self.layout, other.layout, "layout mismatch");
        assert_eq!(self.caps, other.caps, "caps mismatch");
    }

    pub fn add(&self, other: &Self) -> Self {
        self.assert_compatible(other);
        let mut out = self.clone();
        out.saturated |= other.saturated;
        for (e, c) in &other.coeffs {
            let v = out.get(e) + c;
            out.set(e, v);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for v in out.coeffs.values_mut() {
            *v = -*v;
        }
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        if c == 0.0 {
            out.coeffs.clear();
            return out;
        }
        for v in out.coeffs.values_mut() {
            *v *= c;
        }
        out
    }

    /// Truncating product. Terms whose exponents exceed a group cap are
    /// dropped and the sticky `saturated` flag is set.
    pub fn mul(&self, other: &Self) -> Self {
        self.assert_compatible(other);
        let mut out = Self::zero(self.layout, self.caps);
        out.saturated = self.saturated || other.saturated;
        let n = self.layout.nvars();
        let mut e = vec![0u8; n];
        for (ea, ca) in &self.coeffs {
            for (eb, cb) in &other.coeffs {
                for i in 0..n {
                    e[i] = ea[i] + eb[i];
                }
                if out.admissible(&e) {
                    let v = out.get(&e) + ca * cb;
                    if v == 0.0 {
                        out.coeffs.remove(&e);
                    } else {
                        out.coeffs.insert(e.clone(), v);
                    }
                } else {
                    out.saturated = true;
                }
            }
        }
        out
    }

    /// Partial derivative with respect to variable `i`.
    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.layout, self.caps);
        out.saturated = self.saturated;
        for (e, c) in &self.coeffs {
            if e[i] >= 1 {
                let mut e2 = e.clone();
                e2[i] -= 1;
                out.coeffs.insert(e2, c * e[i] as f64);
            }
        }
        out
    }

    /// Exact polynomial evaluation at a numeric point (length `nvars`).
    pub fn eval(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.layout.nvars());
        let mut acc = 0.0;
        for (e, c) in &self.coeffs {
            let mut m = *c;
            for (i, &p) in e.iter().enumerate() {
                if p > 0 {
                    m *= point[i].powi(p as i32);
                }
            }
            acc += m;
        }
        acc
    }

    /// Value of the pure derivative d^k/d v_i^k at the base point,
    /// i.e. k! times the coefficient of v_i^k.
    pub fn pure_derivative_at_base(&self, i: usize, k: u32) -> f64 {
        let mut e = vec![0u8; self.layout.nvars()];
        e[i] = k as u8;
        let mut fact = 1.0;
        for m in 1..=k {
            fact *= m as f64;
        }
        self.get(&e) * fact
    }

    /// Writes `self` as a polynomial in variable `i` with series coefficients
    /// (exponent of `i` zeroed in each coefficient).
    fn coeffs_in_var(&self, i: usize) -> Vec<TaylorSeries> {
        let max = self
            .coeffs
            .keys()
            .map(|e| e[i])
            .max()
            .unwrap_or(0) as usize;
        let mut out = vec![Self::zero(self.layout, self.caps); max + 1];
        for (e, c) in &self.coeffs {
            let m = e[i] as usize;
            let mut e2 = e.clone();
            e2[i] = 0;
            out[m].coeffs.insert(e2, *c);
        }
        out
    }

    /// Substitutes the series `s` for variable `i` (Horner form). The result
    /// saturates like any product chain.
    pub fn substitute(&self, i: usize, s: &Self) -> Self {
        self.assert_compatible(s);
        let cs = self.coeffs_in_var(i);
        let mut acc = Self::zero(self.layout, self.caps);
        for c in cs.iter().rev() {
            acc = acc.mul(s).add(c);
        }
        acc.saturated |= self.saturated || s.saturated;
        acc
    }

    /// Exact division by `v_i^k`. Fails if a coefficient with exponent
    /// below `k` exceeds `tol` in magnitude.
    pub fn divide_by_var(&self, i: usize, k: u8, tol: f64) -> Result<Self> {
        let mut out = Self::zero(self.layout, self.caps);
        out.saturated = self.saturated;
        for (e, c) in &self.coeffs {
            if e[i] < k {
                if c.abs() > tol {
                    return Err(Error::Division(format!(
                        "coefficient {c:.3e} at {e:?} is not divisible by variable {i}^{k}"
                    )));
                }
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= k;
            out.coeffs.insert(e2, *c);
        }
        Ok(out)
    }

    /// Multiplies by the monomial `v_i^k` (saturating).
    pub fn shift_var(&self, i: usize, k: u8) -> Self {
        let mut out = Self::zero(self.layout, self.caps);
        out.saturated = self.saturated;
        for (e, c) in &self.coeffs {
            let mut e2 = e.clone();
            e2[i] += k;
            if out.admissible(&e2) {
                out.coeffs.insert(e2, *c);
            } else {
                out.saturated = true;
            }
        }
        out
    }

    /// Truncated reciprocal about the base point (Neumann series); the
    /// constant term must be nonzero.
    pub fn recip(&self, tol: f64) -> Result<Self> {
        let a0 = self.constant_term();
        if a0.abs() <= tol {
            return Err(Error::Division("reciprocal of a series with vanishing constant term".into()));
        }
        let w = self.scale(1.0 / a0).sub(&Self::constant(self.layout, self.caps, 1.0));
        let mut acc = Self::constant(self.layout, self.caps, 1.0);
        let mut term = Self::constant(self.layout, self.caps, 1.0);
        for _ in 0..self.caps.total() {
            term = term.mul(&w).neg();
            if term.is_zero() {
                break;
            }
            acc = acc.add(&term);
        }
        Ok(acc.scale(1.0 / a0))
    }

    /// Truncated square root with positive constant term (Newton iteration).
    pub fn sqrt(&self, tol: f64) -> Result<Self> {
        let a0 = self.constant_term();
        if a0 <= tol {
            return Err(Error::Division(format!(
                "square root needs a positive constant term, got {a0:.3e}"
            )));
        }
        let mut y = Self::constant(self.layout, self.caps, a0.sqrt());
        let steps = (self.caps.total() as f64 + 1.0).log2().ceil() as usize + 2;
        for _ in 0..steps {
            let inv = y.recip(tol)?;
            y = y.add(&self.mul(&inv)).scale(0.5);
        }
        Ok(y)
    }

    pub fn to_records(&self) -> Vec<CoeffRecord> {
        self.coeffs
            .iter()
            .map(|(e, c)| CoeffRecord { exponents: e.clone(), value: *c })
            .collect()
    }

    /// Builds a series from sparse records, validating exponents against the
    /// truncation bounds.
    pub fn from_records(layout: VarLayout, caps: Caps, records: &[CoeffRecord]) -> Result<Self> {
        let mut s = Self::zero(layout, caps);
        for r in records {
            if r.exponents.len() != layout.nvars() {
                return Err(Error::Ingestion(format!(
                    "exponent list {:?} has length {}, expected {}",
                    r.exponents,
                    r.exponents.len(),
                    layout.nvars()
                )));
            }
            if !s.admissible(&r.exponents) {
                return Err(Error::Ingestion(format!(
                    "exponents {:?} exceed the truncation bounds",
                    r.exponents
                )));
            }
            if !r.value.is_finite() {
                return Err(Error::Ingestion("non-finite coefficient".into()));
            }
            let v = s.get(&r.exponents) + r.value;
            s.set(&r.exponents, v);
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l1() -> (VarLayout, Caps) {
        (VarLayout::new(1, 0), Caps::uniform(6))
    }

    #[test]
    fn product_truncates_and_flags() {
        let (l, c) = l1();
        let t = TaylorSeries::variable(l, c, l.t(), 1.0);
        let mut p = t.clone();
        for _ in 0..5 {
            p = p.mul(&t);
        }
        assert!(!p.saturated());
        assert_eq!(p.get(&[6, 0, 0]), 1.0);
        let q = p.mul(&t);
        assert!(q.saturated());
        assert!(q.is_zero());
    }

    #[test]
    fn substitute_matches_pointwise_eval() {
        let (l, c) = l1();
        let t = TaylorSeries::variable(l, c, l.t(), 1.0);
        let x = TaylorSeries::variable(l, c, l.x(0), 1.0);
        // f = t^2 + 3 t x + 1, then t := x^2
        let f = t
            .mul(&t)
            .add(&t.mul(&x).scale(3.0))
            .add(&TaylorSeries::constant(l, c, 1.0));
        let g = f.substitute(l.t(), &x.mul(&x));
        for &xv in &[0.0, 0.3, -0.7, 1.1] {
            let direct = (xv * xv) * (xv * xv) + 3.0 * (xv * xv) * xv + 1.0;
            assert!((g.eval(&[0.0, xv, 0.0]) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn recip_and_sqrt_roundtrip() {
        let (l, c) = l1();
        let t = TaylorSeries::variable(l, c, l.t(), 1.0);
        let x = TaylorSeries::variable(l, c, l.x(0), -0.5);
        let a = TaylorSeries::constant(l, c, 4.0).add(&t).add(&x.mul(&t));
        let inv = a.recip(1e-12).unwrap();
        let one = a.mul(&inv);
        assert!((one.constant_term() - 1.0).abs() < 1e-12);
        assert!(one.sub(&TaylorSeries::constant(l, c, 1.0)).max_abs_coeff() < 1e-12);
        let r = a.sqrt(1e-12).unwrap();
        assert!(r.mul(&r).sub(&a).max_abs_coeff() < 1e-12);
    }

    #[test]
    fn divide_by_var_detects_remainder() {
        let (l, c) = l1();
        let t = TaylorSeries::variable(l, c, l.t(), 2.0);
        let ok = t.divide_by_var(l.t(), 1, 1e-12).unwrap();
        assert_eq!(ok.constant_term(), 2.0);
        let bad = TaylorSeries::constant(l, c, 1.0).divide_by_var(l.t(), 1, 1e-12);
        assert!(bad.is_err());
    }

    #[test]
    fn ingestion_rejects_out_of_bounds() {
        let (l, c) = l1();
        let r = CoeffRecord { exponents: vec![7, 0, 0], value: 1.0 };
        assert!(TaylorSeries::from_records(l, c, &[r]).is_err());
        let r = CoeffRecord { exponents: vec![1, 0], value: 1.0 };
        assert!(TaylorSeries::from_records(l, c, &[r]).is_err());
    }

    #[test]
    fn derivative_shifts_exponents() {
        let (l, c) = l1();
        let t = TaylorSeries::variable(l, c, l.t(), 1.0);
        let f = t.mul(&t).mul(&t); // t^3
        let df = f.derivative(l.t());
        assert_eq!(df.get(&[2, 0, 0]), 3.0);
        assert_eq!(f.pure_derivative_at_base(l.t(), 3), 6.0);
    }
}
