//! The Duhamel fixed-point solver: operators T^theta, T^x, T^u, Picard
//! iteration, the contraction constant and growth verification of the
//! computed solution.
//!
//! The equation solved is the reduced mode equation in the normal-form
//! frame: `u(s) = f(s) + int_0^s U(s', s) G(s', u(s')) ds'` with
//! `G = eps^{-eta/(1+eta)} (R + eps^{2/(1+eta)} A_u . u) d_theta u
//!    + eps^{1/(1+eta)} (A d_x u + F u)`.
//! The propagator is the frozen-coefficient closed form; the basis drift and
//! trace phase of a general system are dropped when reducing (the
//! frozen-coefficient narrowing; the drift is reachable through the ODE
//! oracle instead). Time integrals use composite Simpson on the grid with a
//! 3/8 tail on odd prefixes.

use crate::error::{Error, Result};
use crate::field::{
    e_norm, es_norm, matrix_e_norm, matrix_field_from_symbol, FieldGrid, MatrixField, ScalarField,
    VectorField,
};
use crate::majorant::{PhiParams, SpaceParams};
use crate::propagator::{FreeSolution, LogMat, ModePropagator, PropagatorCase};
use crate::series::TaylorSeries;
use crate::symbol::{QuasilinearSystem, TaylorSymbol};
use crate::normalform::{NormalFormCase, NormalFormData};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// System data in the solver frame.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub case: PropagatorCase,
    pub gamma0: f64,
    /// Remainder symbol R^eta (solver frame); None means identically zero.
    pub remainder: Option<TaylorSymbol>,
    /// Full first-order symbol for the x-transport term.
    pub a_symbol: Option<TaylorSymbol>,
    /// u-derivative matrices.
    pub a_u: Vec<TaylorSymbol>,
    /// Zeroth-order term; may carry u-dependence (layout nu = 2).
    pub f_symbol: Option<TaylorSymbol>,
}

impl ReducedSystem {
    /// A system that is exactly the frozen normal form with optional
    /// constant-coefficient nonlinearities (the toy configuration).
    pub fn toy(case: PropagatorCase, gamma0: f64, a_u: Vec<TaylorSymbol>, f_symbol: Option<TaylorSymbol>) -> Self {
        ReducedSystem { case, gamma0, remainder: None, a_symbol: None, a_u, f_symbol }
    }

    /// Conjugates a classified system into the normal-form frame. The
    /// x/t-dependence of the basis and the trace phase are dropped
    /// (frozen-coefficient reduction, as in the propagator module).
    pub fn from_normal_form(system: &QuasilinearSystem, nf: &NormalFormData) -> Result<Self> {
        let case = match nf.case {
            NormalFormCase::Smooth => PropagatorCase::Smooth,
            NormalFormCase::Stiff => {
                return Err(Error::Precondition(
                    "stiff reduction requires the eps parameter; use from_normal_form_airy".into(),
                ))
            }
        };
        Self::reduce(system, nf, case)
    }

    pub fn from_normal_form_airy(
        system: &QuasilinearSystem,
        nf: &NormalFormData,
        eps: f64,
    ) -> Result<Self> {
        if nf.case != NormalFormCase::Stiff {
            return Err(Error::Precondition("airy reduction needs a stiff normal form".into()));
        }
        Self::reduce(system, nf, PropagatorCase::Airy { eps })
    }

    fn reduce(
        system: &QuasilinearSystem,
        nf: &NormalFormData,
        case: PropagatorCase,
    ) -> Result<Self> {
        let layout = system.linear.layout();
        let caps = system.linear.caps();
        let t_var = TaylorSeries::variable(layout, caps, layout.t(), 1.0);
        let frozen = match nf.case {
            NormalFormCase::Smooth => {
                let mut m = TaylorSymbol::zero(layout, caps);
                *m.entry_mut(0, 1) = t_var.clone();
                *m.entry_mut(1, 0) = t_var.scale(-nf.gamma0 * nf.gamma0);
                m
            }
            NormalFormCase::Stiff => {
                let mut m = TaylorSymbol::zero(layout, caps);
                *m.entry_mut(0, 1) = TaylorSeries::constant(layout, caps, 1.0);
                *m.entry_mut(1, 0) = t_var.scale(-nf.gamma0 * nf.gamma0);
                m
            }
        };
        let b = system.linear.traceless();
        let conj = |x: &TaylorSymbol| nf.q0_inv.mul(x).mul(&nf.q0);
        let in_frame = conj(&b);
        let remainder = in_frame.sub(&frozen);
        let a_u = system.u_derivative.iter().map(|m| conj(m)).collect();
        // The zeroth-order term keeps its own layout; conjugation uses the
        // constant part of the basis when u-dependence is present.
        let f_symbol = if system.zeroth_order.layout() == layout {
            Some(conj(&system.zeroth_order))
        } else {
            Some(system.zeroth_order.clone())
        };
        Ok(ReducedSystem {
            case,
            gamma0: nf.gamma0,
            remainder: Some(remainder),
            a_symbol: Some(in_frame),
            a_u,
            f_symbol,
        })
    }
}

/// Solver configuration: cutoffs, tolerances and space parameters. The
/// parameters either come from a feasible plan instantiation or carry the
/// explicit override flag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveConfig {
    pub eps: f64,
    pub delta_exp: f64,
    pub space: SpaceParams,
    pub phi: PhiParams,
    pub n_max: i64,
    pub x_deg: u32,
    pub s_points: usize,
    pub max_iter: usize,
    pub residual_tol: f64,
    pub override_contraction: bool,
}

impl SolveConfig {
    /// Final time of the space (growth time capped by analyticity).
    pub fn s_final(&self) -> Result<f64> {
        let s1 = self.space.growth_time_s1()?;
        // Stay strictly inside the majorant's convergence disk.
        Ok(s1.min(0.98 * self.space.analyticity_time(self.phi.rho)))
    }

    pub fn grid(&self) -> Result<Arc<FieldGrid>> {
        Ok(FieldGrid::new(1, self.n_max, self.x_deg, self.s_final()?, self.s_points))
    }
}

/// Composite Simpson weights for every prefix 0..=i of a uniform grid
/// (trapezoid for a single interval, 3/8 tail on odd interval counts).
pub fn simpson_prefix_weights(nodes: usize, h: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let mut w = vec![0.0; i + 1];
        if i == 0 {
            out.push(w);
            continue;
        }
        if i == 1 {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
            out.push(w);
            continue;
        }
        let simpson_upto = if i % 2 == 0 { i } else { i - 3 };
        if simpson_upto > 0 {
            w[0] += h / 3.0;
            w[simpson_upto] += h / 3.0;
            for m in 1..simpson_upto {
                w[m] += if m % 2 == 1 { 4.0 * h / 3.0 } else { 2.0 * h / 3.0 };
            }
        }
        if i % 2 == 1 {
            // 3/8 rule on the last three intervals.
            let base = i - 3;
            let c = 3.0 * h / 8.0;
            w[base] += c;
            w[base + 1] += 3.0 * c;
            w[base + 2] += 3.0 * c;
            w[base + 3] += c;
        }
        out.push(w);
    }
    out
}

/// Precomputed flows and quadrature weights for one solve.
pub struct Workspace {
    pub grid: Arc<FieldGrid>,
    weights: Vec<Vec<f64>>,
    /// flows[n_slot][j][i] for j <= i, materialized.
    flows: Vec<Vec<Vec<[[Complex64; 2]; 2]>>>,
}

impl Workspace {
    pub fn new(rs: &ReducedSystem, cfg: &SolveConfig) -> Result<Self> {
        let grid = cfg.grid()?;
        let sc = grid.s_count();
        let weights = simpson_prefix_weights(sc, grid.step());
        let mut flows = Vec::with_capacity(grid.n_count());
        for ns in 0..grid.n_count() {
            let n = ns as i64 - grid.n_max;
            let prop = ModePropagator::new(rs.case, n, rs.gamma0);
            let mut per_j: Vec<Vec<[[Complex64; 2]; 2]>> = Vec::with_capacity(sc);
            for j in 0..sc {
                let mut per_i = Vec::with_capacity(sc - j);
                for i in j..sc {
                    let f: LogMat = prop.flow(grid.s[j], grid.s[i])?;
                    per_i.push(f.to_cmat()?);
                }
                per_j.push(per_i);
            }
            flows.push(per_j);
        }
        Ok(Workspace { grid, weights, flows })
    }

    #[inline]
    fn flow(&self, n_slot: usize, j: usize, i: usize) -> &[[Complex64; 2]; 2] {
        &self.flows[n_slot][j][i - j]
    }

    /// `out(s_i) = sum_{j <= i} w_j U_n(s_j, s_i) g(s_j)` per mode and
    /// monomial.
    pub fn duhamel(&self, g: &VectorField) -> VectorField {
        let grid = &self.grid;
        let mut out = VectorField::zero(grid.clone());
        out.comps[0].tail_mass = g.tail_mass();
        let nc = grid.n_count();
        let kc = grid.k_count();
        let sc = grid.s_count();
        for ns in 0..nc {
            for k in 0..kc {
                for i in 0..sc {
                    let w = &self.weights[i];
                    let mut acc0 = Complex64::new(0.0, 0.0);
                    let mut acc1 = Complex64::new(0.0, 0.0);
                    for (j, &wj) in w.iter().enumerate() {
                        if wj == 0.0 {
                            continue;
                        }
                        let u = self.flow(ns, j, i);
                        let g0 = g.comps[0].get(ns as i64 - grid.n_max, k, j);
                        let g1 = g.comps[1].get(ns as i64 - grid.n_max, k, j);
                        acc0 += wj * (u[0][0] * g0 + u[0][1] * g1);
                        acc1 += wj * (u[1][0] * g0 + u[1][1] * g1);
                    }
                    out.comps[0].set(ns as i64 - grid.n_max, k, i, acc0);
                    out.comps[1].set(ns as i64 - grid.n_max, k, i, acc1);
                }
            }
        }
        out
    }
}

fn matrix_times_component_sum(a_u: &[MatrixField], u: &VectorField) -> MatrixField {
    let grid = u.grid().clone();
    let mut out = MatrixField::zero(grid);
    for (j, a) in a_u.iter().enumerate() {
        for r in 0..2 {
            for c in 0..2 {
                let term = a.entries[r][c].product(&u.comps[j]);
                out.entries[r][c] = out.entries[r][c].add(&term);
            }
        }
    }
    out
}

/// Composes analytic matrix data H(t, x, u) with the scaled field:
/// evaluates `H(time_scale * s, x, eps^{2/(1+eta)} u)` by truncated
/// composition. Returns the composed field and its measured norm.
pub fn compose_analytic(
    h: &TaylorSymbol,
    u: &VectorField,
    sp: &SpaceParams,
    pp: &PhiParams,
    ws: &Workspace,
) -> Result<(MatrixField, f64)> {
    let grid = &ws.grid;
    let layout = h.layout();
    let time_scale = sp.time_scale();
    let mut out = matrix_field_from_symbol(grid, h, time_scale);
    if layout.nu > 0 {
        // Group monomials by their u-exponents and multiply by field powers.
        let u_amp = Complex64::new(sp.eps.powf(2.0 / (1.0 + sp.eta)), 0.0);
        let mut max_pow = [0u8; 2];
        for i in 0..2 {
            for jj in 0..2 {
                for (e, _) in h.entry(i, jj).iter() {
                    for m in 0..layout.nu.min(2) {
                        max_pow[m] = max_pow[m].max(e[layout.u(m)]);
                    }
                }
            }
        }
        // Cached powers of the scaled components.
        let scaled: Vec<ScalarField> =
            (0..2).map(|m| u.comps[m].scale(u_amp)).collect();
        let mut pows: Vec<Vec<ScalarField>> = Vec::new();
        for m in 0..2 {
            let mut v = Vec::new();
            let mut acc: Option<ScalarField> = None;
            for _ in 1..=max_pow[m] {
                acc = Some(match acc {
                    None => scaled[m].clone(),
                    Some(a) => a.product(&scaled[m]),
                });
                v.push(acc.clone().unwrap());
            }
            pows.push(v);
        }
        for i in 0..2 {
            for jj in 0..2 {
                // Collect per-u-exponent sub-series.
                use std::collections::BTreeMap;
                let mut groups: BTreeMap<(u8, u8), TaylorSeries> = BTreeMap::new();
                for (e, &c) in h.entry(i, jj).iter() {
                    let a1 = e[layout.u(0)];
                    let a2 = if layout.nu > 1 { e[layout.u(1)] } else { 0 };
                    if a1 == 0 && a2 == 0 {
                        continue; // already in the base field
                    }
                    let mut e2 = e.clone();
                    e2[layout.u(0)] = 0;
                    if layout.nu > 1 {
                        e2[layout.u(1)] = 0;
                    }
                    let entry = groups
                        .entry((a1, a2))
                        .or_insert_with(|| TaylorSeries::zero(layout, h.caps()));
                    entry.set(&e2, entry.get(&e2) + c);
                }
                for ((a1, a2), series) in groups {
                    let mut sym = TaylorSymbol::zero(layout, h.caps());
                    *sym.entry_mut(0, 0) = series;
                    let base = matrix_field_from_symbol(grid, &sym, time_scale);
                    let mut factor: Option<ScalarField> = None;
                    if a1 > 0 {
                        factor = Some(pows[0][(a1 - 1) as usize].clone());
                    }
                    if a2 > 0 {
                        let p2 = &pows[1][(a2 - 1) as usize];
                        factor = Some(match factor {
                            None => p2.clone(),
                            Some(f) => f.product(p2),
                        });
                    }
                    let term = match factor {
                        None => base.entries[0][0].clone(),
                        Some(f) => base.entries[0][0].product(&f),
                    };
                    out.entries[i][jj] = out.entries[i][jj].add(&term);
                }
            }
        }
    }
    let norm = matrix_e_norm(&out, sp, pp)?;
    Ok((out, norm))
}

/// `T^theta(u) = int_0^s U (eps^{-eta/(1+eta)} R + eps^{(2-eta)/(1+eta)}
/// A_u . u) d_theta u`.
pub fn apply_t_theta(
    u: &VectorField,
    rs: &ReducedSystem,
    cfg: &SolveConfig,
    ws: &Workspace,
) -> Result<VectorField> {
    let eta = rs.case.eta();
    let eps = cfg.eps;
    let du = u.dtheta();
    let mut bracket = MatrixField::zero(ws.grid.clone());
    if let Some(r) = &rs.remainder {
        let rf = matrix_field_from_symbol(&ws.grid, r, cfg.space.time_scale());
        bracket = bracket.add(&rf.scale(Complex64::new(eps.powf(-eta / (1.0 + eta)), 0.0)));
    }
    if !rs.a_u.is_empty() {
        let au_fields: Vec<MatrixField> = rs
            .a_u
            .iter()
            .map(|m| matrix_field_from_symbol(&ws.grid, m, cfg.space.time_scale()))
            .collect();
        let au_u = matrix_times_component_sum(&au_fields, u);
        bracket =
            bracket.add(&au_u.scale(Complex64::new(eps.powf((2.0 - eta) / (1.0 + eta)), 0.0)));
    }
    let integrand = bracket.mul_vec(&du);
    Ok(ws.duhamel(&integrand))
}

/// `T^x(u) = int_0^s U eps^{1/(1+eta)} A(s', x, eps^{2/(1+eta)} u) d_x u`.
pub fn apply_t_x(
    u: &VectorField,
    rs: &ReducedSystem,
    cfg: &SolveConfig,
    ws: &Workspace,
) -> Result<VectorField> {
    let Some(a_sym) = &rs.a_symbol else {
        return Ok(VectorField::zero(ws.grid.clone()));
    };
    let eta = rs.case.eta();
    let eps = cfg.eps;
    let mut a_field = matrix_field_from_symbol(&ws.grid, a_sym, cfg.space.time_scale());
    if !rs.a_u.is_empty() {
        // u-dependence of the transport matrix: A + sum_j A_{u_j} (eps^{2/(1+eta)} u_j).
        let u_amp = Complex64::new(eps.powf(2.0 / (1.0 + eta)), 0.0);
        let au_fields: Vec<MatrixField> = rs
            .a_u
            .iter()
            .map(|m| matrix_field_from_symbol(&ws.grid, m, cfg.space.time_scale()))
            .collect();
        let au_u = matrix_times_component_sum(&au_fields, &u.scale(u_amp));
        a_field = a_field.add(&au_u);
    }
    let dxu = u.dx(0);
    let integrand = a_field
        .mul_vec(&dxu)
        .scale(Complex64::new(eps.powf(1.0 / (1.0 + eta)), 0.0));
    Ok(ws.duhamel(&integrand))
}

/// `T^u(u) = int_0^s U eps^{1/(1+eta)} F(s', x, eps^{2/(1+eta)} u) u`.
pub fn apply_t_u(
    u: &VectorField,
    rs: &ReducedSystem,
    cfg: &SolveConfig,
    ws: &Workspace,
) -> Result<VectorField> {
    let Some(f_sym) = &rs.f_symbol else {
        return Ok(VectorField::zero(ws.grid.clone()));
    };
    let eta = rs.case.eta();
    let eps = cfg.eps;
    let (f_field, _) = compose_analytic(f_sym, u, &cfg.space, &cfg.phi, ws)?;
    let integrand = f_field
        .mul_vec(u)
        .scale(Complex64::new(eps.powf(1.0 / (1.0 + eta)), 0.0));
    Ok(ws.duhamel(&integrand))
}

/// Full Duhamel operator `T = T^theta + T^x + T^u`.
pub fn apply_t(
    u: &VectorField,
    rs: &ReducedSystem,
    cfg: &SolveConfig,
    ws: &Workspace,
) -> Result<VectorField> {
    let a = apply_t_theta(u, rs, cfg, ws)?;
    let b = apply_t_x(u, rs, cfg, ws)?;
    let c = apply_t_u(u, rs, cfg, ws)?;
    Ok(a.add(&b).add(&c))
}

/// Measured norms feeding the contraction constant.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormInputs {
    /// E-norm of the remainder symbol as a field (no eps factor).
    pub remainder_norm: f64,
    /// E-norm of the free solution.
    pub free_norm: f64,
}

/// `K^eta(eps) = C(U^eta) (beta^{-1} (eps^{-eta/(1+eta)} |R| +
/// eps^{1/(1+eta)} |f|) + R rho^{-1})`.
pub fn contraction_constant(cfg: &SolveConfig, case: PropagatorCase, norms: &NormInputs) -> f64 {
    let eta = case.eta();
    let eps = cfg.eps;
    case.flow_constant()
        * ((1.0 / cfg.space.beta)
            * (eps.powf(-eta / (1.0 + eta)) * norms.remainder_norm
                + eps.powf(1.0 / (1.0 + eta)) * norms.free_norm)
            + cfg.phi.big_r / cfg.phi.rho)
}

/// Builds the Picard seed field from the free solution (modes +-1, k = 0).
pub fn field_from_free(f: &FreeSolution, grid: &Arc<FieldGrid>) -> Result<VectorField> {
    if f.s_grid.len() != grid.s_count() {
        return Err(Error::Precondition("free solution grid mismatch".into()));
    }
    let k0 = grid.k_index(&vec![0u8; grid.d]).expect("zero index");
    let mut u = VectorField::zero(grid.clone());
    for si in 0..grid.s_count() {
        for comp in 0..2 {
            let vp = f.mode_plus[si][comp];
            let vm = f.mode_minus[si][comp];
            let amp = f.log_amplitude;
            let p = crate::airy::LogComplex { mantissa: vp.mantissa, log: vp.log + amp };
            let m = crate::airy::LogComplex { mantissa: vm.mantissa, log: vm.log + amp };
            u.comps[comp].set(1, k0, si, p.to_complex()?);
            u.comps[comp].set(-1, k0, si, m.to_complex()?);
        }
    }
    Ok(u)
}

/// Growth verification of the computed solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthRecord {
    /// min over s in [1, s_final] of |u(s,0,0)| / envelope(s).
    pub lower_bound_factor: f64,
    pub max_deviation_factor: f64,
    /// max over the same range of |u - f|(s,0,0) / envelope(s).
    pub smallness_ratio: f64,
    /// The bound K C(U) e^{s beta} the smallness route allows.
    pub smallness_bound: f64,
    /// R eps + rho eps^{1/(1+eta)} s_final; the cube fits the domain iff < 1.
    pub cube_margin: f64,
    pub cube_fits: bool,
}

/// Compares |u(s, 0, 0)| against the case envelope
/// `e^{-M} e^{gamma0 s^{1+eta}/(1+eta)}` (times `s^{-1/4}` in the Airy case).
pub fn growth_check(
    u: &VectorField,
    f: &VectorField,
    rs: &ReducedSystem,
    cfg: &SolveConfig,
    k_value: f64,
) -> Result<GrowthRecord> {
    let grid = u.grid().clone();
    let m_eps = cfg.space.m_of_eps();
    let eta = rs.case.eta();
    let mut lower = f64::INFINITY;
    let mut upper: f64 = 0.0;
    let mut small: f64 = 0.0;
    for si in 0..grid.s_count() {
        let s = grid.s[si];
        if s < 1.0 {
            continue;
        }
        let mut log_env = -m_eps + rs.gamma0 * s.powf(1.0 + eta) / (1.0 + eta);
        if matches!(rs.case, PropagatorCase::Airy { .. }) {
            log_env += -0.25 * s.ln();
        }
        let env = log_env.exp();
        let val = u.eval(si, &[0.0], 0.0);
        let mag = val[0].norm().max(val[1].norm());
        lower = lower.min(mag / env);
        upper = upper.max(mag / env);
        let dv = u.sub(f).eval(si, &[0.0], 0.0);
        let dmag = dv[0].norm().max(dv[1].norm());
        small = small.max(dmag / env);
    }
    let s_final = cfg.s_final()?;
    let smallness_bound =
        k_value * rs.case.flow_constant() * (cfg.space.beta * s_final).exp();
    let cube_margin = cfg.phi.big_r * cfg.eps + cfg.phi.rho * cfg.space.time_scale() * s_final;
    Ok(GrowthRecord {
        lower_bound_factor: lower,
        max_deviation_factor: upper,
        smallness_ratio: small,
        smallness_bound,
        cube_margin,
        cube_fits: cube_margin < 1.0,
    })
}

/// Outcome of a Picard solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub distances: Vec<f64>,
    pub contraction_measured: f64,
    pub residual: f64,
    pub k_formula: f64,
    pub norms: NormInputs,
    /// Measured `|u - f| / (K |f|)` (the solution-size constant).
    pub solution_size_constant: f64,
    /// Accumulated majorant mass discarded by truncation (rigor gap).
    pub tail_mass: f64,
    pub growth: Option<GrowthRecord>,
}

/// Picard iteration `u^{m+1} = f + T(u^m)` from `u^0 = f`; stops when the
/// E-distance between iterates falls below the tolerance.
pub fn solve_fixed_point(
    free: &FreeSolution,
    rs: &ReducedSystem,
    cfg: &SolveConfig,
) -> Result<(VectorField, SolveReport)> {
    cfg.phi.validate()?;
    let ws = Workspace::new(rs, cfg)?;
    let f_field = field_from_free(free, &ws.grid)?;
    let free_norm = e_norm(&f_field, &cfg.space, &cfg.phi)?;
    let remainder_norm = match &rs.remainder {
        Some(r) => {
            let rf = matrix_field_from_symbol(&ws.grid, r, cfg.space.time_scale());
            matrix_e_norm(&rf, &cfg.space, &cfg.phi)?
        }
        None => 0.0,
    };
    let norms = NormInputs { remainder_norm, free_norm };
    let k_formula = contraction_constant(cfg, rs.case, &norms);
    if k_formula >= 1.0 && !cfg.override_contraction {
        return Err(Error::Precondition(format!(
            "contraction constant {k_formula:.3} >= 1; pass the override flag to force a solve"
        )));
    }

    let mut u = f_field.clone();
    let mut distances = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let tu = apply_t(&u, rs, cfg, &ws)?;
        let next = f_field.add(&tu);
        let d = e_norm(&next.sub(&u), &cfg.space, &cfg.phi)?;
        distances.push(d);
        u = next;
        if d < cfg.residual_tol {
            converged = true;
            break;
        }
        let m = distances.len();
        if m >= 4 && distances[m - 1] > distances[m - 2] && distances[m - 2] > distances[m - 3] {
            return Err(Error::Divergence { iterations: m, trace: distances });
        }
    }
    let tu = apply_t(&u, rs, cfg, &ws)?;
    let residual = e_norm(&u.sub(&f_field).sub(&tu), &cfg.space, &cfg.phi)?;
    let mut contraction_measured: f64 = 0.0;
    for w in distances.windows(2) {
        if w[0] > 1e-300 {
            contraction_measured = contraction_measured.max(w[1] / w[0]);
        }
    }
    let diff_norm = e_norm(&u.sub(&f_field), &cfg.space, &cfg.phi)?;
    let solution_size_constant = if k_formula * free_norm > 0.0 {
        diff_norm / (k_formula * free_norm)
    } else {
        0.0
    };
    let growth = growth_check(&u, &f_field, rs, cfg, k_formula).ok();
    let report = SolveReport {
        converged,
        iterations: distances.len(),
        distances,
        contraction_measured,
        residual,
        k_formula,
        norms,
        solution_size_constant,
        tail_mass: u.tail_mass(),
        growth,
    };
    Ok((u, report))
}
