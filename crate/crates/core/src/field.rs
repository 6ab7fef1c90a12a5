//! Truncated trigonometric-Taylor fields: the solution space of the
//! fixed-point solver.
//!
//! A field holds coefficients `v_{n,k}(s_i)` for Fourier modes `|n| <=
//! n_max`, spatial multi-indices `|k| <= x_deg` and a uniform time grid on
//! `[0, s_max]`. Products convolve in (n, k); mass dropped beyond the
//! cutoffs is accumulated in a sticky `tail_mass` (the rigor gap of the
//! truncation policy). Fields are immutable values.

use crate::error::{Error, Result};
use crate::majorant::{mode_bracket, PhiParams, SpaceParams};
use crate::symbol::TaylorSymbol;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

/// Shared discretization of a field family.
#[derive(Debug)]
pub struct FieldGrid {
    pub d: usize,
    pub n_max: i64,
    pub x_deg: u32,
    pub s: Vec<f64>,
    k_list: Vec<Vec<u8>>,
    k_lookup: HashMap<Vec<u8>, usize>,
    /// k_sum[a][b] = index of k_a + k_b, or usize::MAX when truncated away.
    k_sum: Vec<Vec<usize>>,
}

fn enumerate_multi_indices(d: usize, deg: u32) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = vec![vec![0; d]];
    for _ in 0..deg {
        let mut next: Vec<Vec<u8>> = Vec::new();
        for k in &out {
            for j in 0..d {
                let mut k2 = k.clone();
                k2[j] += 1;
                next.push(k2);
            }
        }
        out.extend(next);
    }
    out.sort();
    out.dedup();
    out.retain(|k| k.iter().map(|&e| e as u32).sum::<u32>() <= deg);
    out
}

impl FieldGrid {
    pub fn new(d: usize, n_max: i64, x_deg: u32, s_max: f64, s_points: usize) -> Arc<Self> {
        assert!(s_points >= 2 && n_max >= 1);
        let s: Vec<f64> = (0..s_points)
            .map(|i| s_max * i as f64 / (s_points - 1) as f64)
            .collect();
        let k_list = enumerate_multi_indices(d, x_deg);
        let k_lookup: HashMap<Vec<u8>, usize> =
            k_list.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        let mut k_sum = vec![vec![usize::MAX; k_list.len()]; k_list.len()];
        for (a, ka) in k_list.iter().enumerate() {
            for (b, kb) in k_list.iter().enumerate() {
                let sum: Vec<u8> = ka.iter().zip(kb).map(|(x, y)| x + y).collect();
                if let Some(&i) = k_lookup.get(&sum) {
                    k_sum[a][b] = i;
                }
            }
        }
        Arc::new(FieldGrid { d, n_max, x_deg, s, k_list, k_lookup, k_sum })
    }

    pub fn n_count(&self) -> usize {
        (2 * self.n_max + 1) as usize
    }

    pub fn k_count(&self) -> usize {
        self.k_list.len()
    }

    pub fn s_count(&self) -> usize {
        self.s.len()
    }

    pub fn k_index(&self, k: &[u8]) -> Option<usize> {
        self.k_lookup.get(k).copied()
    }

    pub fn k_at(&self, i: usize) -> &[u8] {
        &self.k_list[i]
    }

    pub fn n_slot(&self, n: i64) -> usize {
        (n + self.n_max) as usize
    }

    pub fn step(&self) -> f64 {
        self.s[1] - self.s[0]
    }

    fn same(&self, other: &FieldGrid) -> bool {
        std::ptr::eq(self, other)
            || (self.d == other.d
                && self.n_max == other.n_max
                && self.x_deg == other.x_deg
                && self.s.len() == other.s.len())
    }
}

/// Scalar trigonometric-Taylor field.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<FieldGrid>,
    /// Layout: [n][k][s].
    data: Vec<Complex64>,
    /// Accumulated magnitude of coefficients dropped by truncation.
    pub tail_mass: f64,
}

impl ScalarField {
    pub fn zero(grid: Arc<FieldGrid>) -> Self {
        let len = grid.n_count() * grid.k_count() * grid.s_count();
        ScalarField { grid, data: vec![Complex64::new(0.0, 0.0); len], tail_mass: 0.0 }
    }

    #[inline]
    fn idx(&self, n_slot: usize, k: usize, s: usize) -> usize {
        (n_slot * self.grid.k_count() + k) * self.grid.s_count() + s
    }

    pub fn get(&self, n: i64, k: usize, s: usize) -> Complex64 {
        if n.abs() > self.grid.n_max {
            return Complex64::new(0.0, 0.0);
        }
        self.data[self.idx(self.grid.n_slot(n), k, s)]
    }

    pub fn set(&mut self, n: i64, k: usize, s: usize, v: Complex64) {
        let i = self.idx(self.grid.n_slot(n), k, s);
        self.data[i] = v;
    }

    pub fn add(&self, other: &Self) -> Self {
        assert!(self.grid.same(&other.grid));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out.tail_mass += other.tail_mass;
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert!(self.grid.same(&other.grid));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out.tail_mass += other.tail_mass;
        out
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= c;
        }
        out
    }

    /// Multiplies the slice at each time by `f(s)`.
    pub fn scale_time(&self, f: impl Fn(f64) -> Complex64) -> Self {
        let mut out = self.clone();
        for ns in 0..self.grid.n_count() {
            for k in 0..self.grid.k_count() {
                for si in 0..self.grid.s_count() {
                    let i = self.idx(ns, k, si);
                    out.data[i] *= f(self.grid.s[si]);
                }
            }
        }
        out
    }

    /// Trig-Taylor product: convolution in n and k, pointwise in s. Dropped
    /// coefficients feed `tail_mass`.
    pub fn product(&self, other: &Self) -> Self {
        assert!(self.grid.same(&other.grid));
        let g = &self.grid;
        let mut out = ScalarField::zero(self.grid.clone());
        out.tail_mass = self.tail_mass + other.tail_mass;
        let nc = g.n_count();
        let kc = g.k_count();
        let sc = g.s_count();
        for ns1 in 0..nc {
            let n1 = ns1 as i64 - g.n_max;
            for ns2 in 0..nc {
                let n = n1 + ns2 as i64 - g.n_max;
                let in_n = n.abs() <= g.n_max;
                let out_ns = if in_n { g.n_slot(n) } else { 0 };
                for k1 in 0..kc {
                    for k2 in 0..kc {
                        let ks = g.k_sum[k1][k2];
                        let keep = in_n && ks != usize::MAX;
                        let b1 = (ns1 * kc + k1) * sc;
                        let b2 = (ns2 * kc + k2) * sc;
                        if keep {
                            let bo = (out_ns * kc + ks) * sc;
                            for si in 0..sc {
                                let v = self.data[b1 + si] * other.data[b2 + si];
                                out.data[bo + si] += v;
                            }
                        } else {
                            let mut dropped = 0.0;
                            for si in 0..sc {
                                dropped += (self.data[b1 + si] * other.data[b2 + si]).norm();
                            }
                            out.tail_mass += dropped / sc as f64;
                        }
                    }
                }
            }
        }
        out
    }

    /// Exact mode multiplication by `i n`.
    pub fn dtheta(&self) -> Self {
        let mut out = self.clone();
        let g = &self.grid;
        for ns in 0..g.n_count() {
            let n = ns as i64 - g.n_max;
            let f = Complex64::new(0.0, n as f64);
            for k in 0..g.k_count() {
                for si in 0..g.s_count() {
                    let i = self.idx(ns, k, si);
                    out.data[i] = self.data[i] * f;
                }
            }
        }
        out
    }

    /// Spatial derivative along axis j: `(d_x v)_{n,k} = (k_j+1) v_{n,k+e_j}`.
    pub fn dx(&self, j: usize) -> Self {
        let g = &self.grid;
        let mut out = ScalarField::zero(self.grid.clone());
        out.tail_mass = self.tail_mass;
        for ns in 0..g.n_count() {
            for k in 0..g.k_count() {
                let mut up = g.k_list[k].clone();
                up[j] += 1;
                if let Some(ku) = g.k_index(&up) {
                    let f = up[j] as f64;
                    for si in 0..g.s_count() {
                        let i = self.idx(ns, k, si);
                        let iu = self.idx(ns, ku, si);
                        out.data[i] = self.data[iu] * f;
                    }
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Evaluates the field at (s_index, x, theta).
    pub fn eval(&self, s_idx: usize, x: &[f64], theta: f64) -> Complex64 {
        let g = &self.grid;
        let mut acc = Complex64::new(0.0, 0.0);
        for ns in 0..g.n_count() {
            let n = ns as i64 - g.n_max;
            let ph = Complex64::new(0.0, n as f64 * theta).exp();
            for k in 0..g.k_count() {
                let mut xk = 1.0;
                for (j, &e) in g.k_list[k].iter().enumerate() {
                    xk *= x[j].powi(e as i32);
                }
                acc += self.data[self.idx(ns, k, s_idx)] * ph * xk;
            }
        }
        acc
    }
}

/// C^2-valued field (the solver unknown).
#[derive(Debug, Clone)]
pub struct VectorField {
    pub comps: [ScalarField; 2],
}

impl VectorField {
    pub fn zero(grid: Arc<FieldGrid>) -> Self {
        VectorField { comps: [ScalarField::zero(grid.clone()), ScalarField::zero(grid)] }
    }

    pub fn grid(&self) -> &Arc<FieldGrid> {
        &self.comps[0].grid
    }

    pub fn add(&self, o: &Self) -> Self {
        VectorField { comps: [self.comps[0].add(&o.comps[0]), self.comps[1].add(&o.comps[1])] }
    }

    pub fn sub(&self, o: &Self) -> Self {
        VectorField { comps: [self.comps[0].sub(&o.comps[0]), self.comps[1].sub(&o.comps[1])] }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        VectorField { comps: [self.comps[0].scale(c), self.comps[1].scale(c)] }
    }

    pub fn dtheta(&self) -> Self {
        VectorField { comps: [self.comps[0].dtheta(), self.comps[1].dtheta()] }
    }

    pub fn dx(&self, j: usize) -> Self {
        VectorField { comps: [self.comps[0].dx(j), self.comps[1].dx(j)] }
    }

    pub fn tail_mass(&self) -> f64 {
        self.comps[0].tail_mass + self.comps[1].tail_mass
    }

    pub fn max_abs(&self) -> f64 {
        self.comps[0].max_abs().max(self.comps[1].max_abs())
    }

    pub fn eval(&self, s_idx: usize, x: &[f64], theta: f64) -> [Complex64; 2] {
        [self.comps[0].eval(s_idx, x, theta), self.comps[1].eval(s_idx, x, theta)]
    }

    /// Parseval sum over modes at x = 0 (k = 0 coefficients only):
    /// `sum_{comp, n} |v_{n,0}(s)|^2`, the theta-average of |v|^2 at x = 0.
    pub fn mode_square_sum(&self, s_idx: usize) -> f64 {
        let g = self.grid().clone();
        let k0 = g.k_index(&vec![0u8; g.d]).expect("zero multi-index");
        let mut acc = 0.0;
        for comp in &self.comps {
            for n in -g.n_max..=g.n_max {
                acc += comp.get(n, k0, s_idx).norm_sqr();
            }
        }
        acc
    }
}

/// 2x2-matrix-valued field (composed analytic data).
#[derive(Debug, Clone)]
pub struct MatrixField {
    pub entries: [[ScalarField; 2]; 2],
}

impl MatrixField {
    pub fn zero(grid: Arc<FieldGrid>) -> Self {
        MatrixField {
            entries: [
                [ScalarField::zero(grid.clone()), ScalarField::zero(grid.clone())],
                [ScalarField::zero(grid.clone()), ScalarField::zero(grid)],
            ],
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        MatrixField {
            entries: [
                [self.entries[0][0].add(&o.entries[0][0]), self.entries[0][1].add(&o.entries[0][1])],
                [self.entries[1][0].add(&o.entries[1][0]), self.entries[1][1].add(&o.entries[1][1])],
            ],
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        MatrixField {
            entries: [
                [self.entries[0][0].scale(c), self.entries[0][1].scale(c)],
                [self.entries[1][0].scale(c), self.entries[1][1].scale(c)],
            ],
        }
    }

    /// Matrix-vector product; entries convolve with the vector components.
    pub fn mul_vec(&self, v: &VectorField) -> VectorField {
        let mut out = VectorField::zero(v.grid().clone());
        for i in 0..2 {
            let mut acc = self.entries[i][0].product(&v.comps[0]);
            acc = acc.add(&self.entries[i][1].product(&v.comps[1]));
            out.comps[i] = acc;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for row in &self.entries {
            for e in row {
                m = m.max(e.max_abs());
            }
        }
        m
    }
}

/// Builds the n = 0 matrix field of a (t, x, zeta) symbol along the solver
/// grid: t is substituted by `time_scale * s_i`, zeta is frozen at 0, and the
/// x-monomials populate the k-slots (clipped at the grid degree).
pub fn matrix_field_from_symbol(
    grid: &Arc<FieldGrid>,
    sym: &TaylorSymbol,
    time_scale: f64,
) -> MatrixField {
    let layout = sym.layout();
    let mut out = MatrixField::zero(grid.clone());
    for i in 0..2 {
        for j in 0..2 {
            let mut dropped = 0.0f64;
            for (e, &c) in sym.entry(i, j).iter() {
                // zeta exponents frozen at 0.
                if (0..layout.d).any(|m| e[layout.zeta(m)] != 0) {
                    continue;
                }
                if layout.nu > 0 && (0..layout.nu).any(|m| e[layout.u(m)] != 0) {
                    continue; // u-dependence is handled by the caller
                }
                let k: Vec<u8> = (0..layout.d).map(|m| e[layout.x(m)]).collect();
                match grid.k_index(&k) {
                    Some(ki) => {
                        let et = e[layout.t()] as i32;
                        for (si, &s) in grid.s.iter().enumerate() {
                            let t = time_scale * s;
                            let v = c * t.powi(et);
                            let old = out.entries[i][j].get(0, ki, si);
                            out.entries[i][j].set(0, ki, si, old + v);
                        }
                    }
                    None => dropped += c.abs(),
                }
            }
            out.entries[i][j].tail_mass += dropped;
        }
    }
    out
}

/// Weighted sup-norm of a vector field at one time-grid index: the smallest
/// C with `|v_{n,k}(s)| <= C c1/(n^2+1) e^{(M' - int gamma) <n>}
/// Phi_k(eps^{1/(1+eta)} s)` over the stored modes, computed in log space.
pub fn es_norm(v: &VectorField, s_idx: usize, sp: &SpaceParams, pp: &PhiParams) -> Result<f64> {
    let g = v.grid().clone();
    let s = g.s[s_idx];
    let w = sp.weight(s);
    let t = sp.time_scale() * s;
    let mut log_phi = Vec::with_capacity(g.k_count());
    for k in 0..g.k_count() {
        log_phi.push(pp.phi_coeff(g.k_at(k), t)?.ln());
    }
    let mut best = f64::NEG_INFINITY;
    for comp in &v.comps {
        for n in -g.n_max..=g.n_max {
            let log_mode = pp.c1.ln() - ((n * n + 1) as f64).ln() + w * mode_bracket(n);
            for k in 0..g.k_count() {
                let a = comp.get(n, k, s_idx).norm();
                if a > 0.0 {
                    best = best.max(a.ln() - log_mode - log_phi[k]);
                }
            }
        }
    }
    Ok(if best.is_finite() { best.exp() } else { 0.0 })
}

/// Full space norm: max of `es_norm` over the time grid.
pub fn e_norm(v: &VectorField, sp: &SpaceParams, pp: &PhiParams) -> Result<f64> {
    let mut best: f64 = 0.0;
    for s_idx in 0..v.grid().s_count() {
        best = best.max(es_norm(v, s_idx, sp, pp)?);
    }
    Ok(best)
}

/// Norm of a matrix field: the max over entries, each measured as an
/// (n, k, s)-indexed scalar against the same profile.
pub fn matrix_e_norm(m: &MatrixField, sp: &SpaceParams, pp: &PhiParams) -> Result<f64> {
    let mut best: f64 = 0.0;
    for i in 0..2 {
        let v = VectorField { comps: [m.entries[i][0].clone(), m.entries[i][1].clone()] };
        best = best.max(e_norm(&v, sp, pp)?);
    }
    Ok(best)
}

/// Snapshot record for the on-disk field schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldRecord {
    pub comp: usize,
    pub n: i64,
    pub k: Vec<u8>,
    pub s_index: usize,
    pub re: f64,
    pub im: f64,
}

pub fn field_to_records(v: &VectorField, threshold: f64) -> Vec<FieldRecord> {
    let g = v.grid().clone();
    let mut out = Vec::new();
    for (ci, comp) in v.comps.iter().enumerate() {
        for n in -g.n_max..=g.n_max {
            for k in 0..g.k_count() {
                for s_idx in 0..g.s_count() {
                    let val = comp.get(n, k, s_idx);
                    if val.norm() > threshold {
                        out.push(FieldRecord {
                            comp: ci,
                            n,
                            k: g.k_at(k).to_vec(),
                            s_index: s_idx,
                            re: val.re,
                            im: val.im,
                        });
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<FieldGrid> {
        FieldGrid::new(1, 4, 3, 2.0, 9)
    }

    #[test]
    fn product_convolves_modes_and_monomials() {
        let g = grid();
        let mut a = ScalarField::zero(g.clone());
        let mut b = ScalarField::zero(g.clone());
        // a = e^{i theta} x, b = e^{-2 i theta} x^2
        for si in 0..g.s_count() {
            a.set(1, g.k_index(&[1]).unwrap(), si, Complex64::new(2.0, 0.0));
            b.set(-2, g.k_index(&[2]).unwrap(), si, Complex64::new(0.5, 0.0));
        }
        let p = a.product(&b);
        assert_eq!(p.get(-1, g.k_index(&[3]).unwrap(), 4), Complex64::new(1.0, 0.0));
        assert_eq!(p.tail_mass, 0.0);
        // Pointwise evaluation agrees.
        let x = [0.7];
        let th = 0.9;
        let pa = a.eval(3, &x, th) * b.eval(3, &x, th);
        let pv = p.eval(3, &x, th);
        assert!((pa - pv).norm() < 1e-14);
    }

    #[test]
    fn product_tracks_truncated_tail() {
        let g = grid();
        let mut a = ScalarField::zero(g.clone());
        for si in 0..g.s_count() {
            a.set(4, g.k_index(&[2]).unwrap(), si, Complex64::new(1.0, 0.0));
        }
        let p = a.product(&a); // lands at n=8, k=4: fully truncated
        assert!(p.max_abs() == 0.0);
        assert!(p.tail_mass > 0.9);
    }

    #[test]
    fn dtheta_and_dx() {
        let g = grid();
        let mut a = ScalarField::zero(g.clone());
        for si in 0..g.s_count() {
            a.set(3, g.k_index(&[2]).unwrap(), si, Complex64::new(1.0, 0.0));
        }
        let dt = a.dtheta();
        assert_eq!(dt.get(3, g.k_index(&[2]).unwrap(), 0), Complex64::new(0.0, 3.0));
        let dx = a.dx(0);
        assert_eq!(dx.get(3, g.k_index(&[1]).unwrap(), 0), Complex64::new(2.0, 0.0));
        assert_eq!(dx.get(3, g.k_index(&[2]).unwrap(), 0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn es_norm_of_exact_profile_is_one() {
        let g = grid();
        let sp = SpaceParams {
            m_prime: 1.0,
            beta: 0.3,
            gamma0: 1.0,
            eta: 1.0,
            delta_exp: 0.2,
            eps: 1e-4,
        };
        let pp = PhiParams::new(2.0, 3.0);
        // Build the bounding profile exactly at one (n, k).
        let n = 2i64;
        let ki = g.k_index(&[1]).unwrap();
        let mut v = VectorField::zero(g.clone());
        for si in 0..g.s_count() {
            let s = g.s[si];
            let bound = pp.c1 / ((n * n + 1) as f64)
                * (sp.weight(s) * mode_bracket(n)).exp()
                * pp.phi_coeff(&[1], sp.time_scale() * s).unwrap();
            v.comps[0].set(n, ki, si, Complex64::new(bound, 0.0));
        }
        for si in 0..g.s_count() {
            let norm = es_norm(&v, si, &sp, &pp).unwrap();
            assert!((norm - 1.0).abs() < 1e-12, "norm at {si} is {norm}");
        }
        // Absolute homogeneity.
        let v3 = v.scale(Complex64::new(3.0, 0.0));
        assert!((es_norm(&v3, 4, &sp, &pp).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_field_substitutes_time() {
        use crate::series::{Caps, TaylorSeries, VarLayout};
        let l = VarLayout::new(1, 0);
        let c = Caps::uniform(4);
        // entry (0,1) = t + x^2
        let mut sym = TaylorSymbol::zero(l, c);
        *sym.entry_mut(0, 1) = TaylorSeries::variable(l, c, l.t(), 1.0)
            .add(&TaylorSeries::monomial(l, c, &[0, 2, 0], 1.0));
        let g = grid();
        let mf = matrix_field_from_symbol(&g, &sym, 0.5);
        let si = 4; // s = 1.0, t = 0.5
        assert!((mf.entries[0][1].get(0, g.k_index(&[0]).unwrap(), si).re - 0.5).abs() < 1e-14);
        assert!((mf.entries[0][1].get(0, g.k_index(&[2]).unwrap(), si).re - 1.0).abs() < 1e-14);
    }
}
