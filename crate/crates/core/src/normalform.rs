//! Analytic changes of basis bringing a transitioning symbol to its normal
//! form, and the remainder decompositions feeding the fixed-point solver.
//!
//! For a traceless 2x2 series matrix M with `M^2 = -det(M) Id`, picking a
//! constant column v2 and setting v1 = M v2 gives `M [v1 v2] = [v1 v2] N`
//! with `N = [[0, 1], [-det M, 0]]` exactly, so the conjugation residual
//! vanishes identically within truncation. The pivot decides which constant
//! column is usable.

use crate::error::{Error, Result};
use crate::series::TaylorSeries;
use crate::symbol::{QuasilinearSystem, TaylorSymbol, TransitionClassification};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalFormCase {
    Smooth,
    Stiff,
}

/// Change of basis with verified residual.
#[derive(Debug, Clone)]
pub struct NormalFormData {
    pub case: NormalFormCase,
    pub q0: TaylorSymbol,
    /// Truncated inverse (matrix Neumann series about the base point).
    pub q0_inv: TaylorSymbol,
    /// Half trace of the input symbol.
    pub half_trace: TaylorSeries,
    /// Growth rate: delta(base) in the smooth case, sqrt(e(base)) in the
    /// stiff case.
    pub gamma0: f64,
    /// Smooth payload.
    pub delta_series: Option<TaylorSeries>,
    /// Stiff payload.
    pub t_star: Option<TaylorSeries>,
    pub e_series: Option<TaylorSeries>,
    /// Normal form in the transformed frame: [[0, t], [-t delta^2, 0]] or
    /// [[0, 1], [-(t - t_star) e, 0]].
    pub target: TaylorSymbol,
    /// Q0^{-1} (A - tr/2) Q0 - target; identically zero within truncation.
    pub residual: TaylorSymbol,
    pub residual_max: f64,
}

/// Remainder split into the buckets consumed by the solver estimates.
#[derive(Debug, Clone)]
pub struct RemainderDecomposition {
    pub case: NormalFormCase,
    /// The leading symbol (normal form conjugated back, plus the trace part).
    pub leading: TaylorSymbol,
    /// Full remainder `A - leading`.
    pub remainder: TaylorSymbol,
    pub r_t: TaylorSymbol,
    pub r_x: Vec<TaylorSymbol>,
    pub r_zeta: Vec<TaylorSymbol>,
    /// Stiff only: the bucket carried by the transition time.
    pub r_e: Option<TaylorSymbol>,
    /// Scalar payloads sitting in the lower-left slot of the transformed
    /// frame: the components are `Q0 [[0,0],[payload,0]] Q0^{-1}`.
    pub payload_t: TaylorSeries,
    pub payload_x: Vec<TaylorSeries>,
    pub payload_zeta: Vec<TaylorSeries>,
    pub payload_e: Option<TaylorSeries>,
    /// Max coefficient mismatch of the recomposition identity.
    pub recomposition_error: f64,
}

fn neumann_inverse(q: &TaylorSymbol, tol: f64) -> Result<TaylorSymbol> {
    let layout = q.layout();
    let caps = q.caps();
    let base = vec![0.0; layout.nvars()];
    let q0 = q.eval(&base);
    let det = q0[0][0] * q0[1][1] - q0[0][1] * q0[1][0];
    if det.abs() <= tol {
        return Err(Error::DegeneratePivot);
    }
    let inv0 = [
        [q0[1][1] / det, -q0[0][1] / det],
        [-q0[1][0] / det, q0[0][0] / det],
    ];
    let inv0 = TaylorSymbol::from_constant(layout, caps, inv0);
    let n = q.sub(&TaylorSymbol::from_constant(layout, caps, q0));
    let k = inv0.mul(&n); // no constant term
    let mut acc = TaylorSymbol::identity(layout, caps);
    let mut term = TaylorSymbol::identity(layout, caps);
    for _ in 0..caps.total() {
        term = term.mul(&k).scale(-1.0);
        if term.max_abs_coeff() == 0.0 {
            break;
        }
        acc = acc.add(&term);
    }
    Ok(acc.mul(&inv0))
}

/// Builds Q0 for a traceless series matrix whose square is `-det * Id`.
/// Pivot preference: the (2,1) entry, then the (1,2) entry, the tie at the
/// base point broken by the larger magnitude.
fn build_q0(m: &TaylorSymbol, tol: f64) -> Result<TaylorSymbol> {
    let layout = m.layout();
    let caps = m.caps();
    let base = vec![0.0; layout.nvars()];
    let p21 = m.entry(1, 0).eval(&base);
    let p12 = m.entry(0, 1).eval(&base);
    let one = TaylorSeries::constant(layout, caps, 1.0);
    let zero = TaylorSeries::zero(layout, caps);
    let use_21 = if p21.abs() <= tol && p12.abs() <= tol {
        return Err(Error::DegeneratePivot);
    } else if p21.abs() <= tol {
        false
    } else if p12.abs() <= tol {
        true
    } else {
        p21.abs() >= p12.abs()
    };
    Ok(if use_21 {
        // columns (m11, m21) and (1, 0)
        TaylorSymbol::new([
            [m.entry(0, 0).clone(), one],
            [m.entry(1, 0).clone(), zero],
        ])
    } else {
        // columns (m12, -m11) and (0, 1)
        TaylorSymbol::new([
            [m.entry(0, 1).clone(), zero],
            [m.entry(0, 0).neg(), one],
        ])
    })
}

/// Constructs the analytic change of basis for a classified transition and
/// verifies the residual.
pub fn normal_form(
    system: &QuasilinearSystem,
    classification: &TransitionClassification,
    tol: f64,
) -> Result<NormalFormData> {
    let a = &system.linear;
    let layout = a.layout();
    let caps = a.caps();
    let half_trace = a.trace().scale(0.5);
    let b = a.traceless();
    let t_var = TaylorSeries::variable(layout, caps, layout.t(), 1.0);

    match classification {
        TransitionClassification::Smooth { delta_series, .. } => {
            let delta_series = delta_series
                .clone()
                .ok_or_else(|| Error::Precondition("smooth classification without delta series".into()))?;
            // Semi-simplicity makes every entry divisible by t.
            let b_tilde = TaylorSymbol::new([
                [
                    b.entry(0, 0).divide_by_var(layout.t(), 1, tol)?,
                    b.entry(0, 1).divide_by_var(layout.t(), 1, tol)?,
                ],
                [
                    b.entry(1, 0).divide_by_var(layout.t(), 1, tol)?,
                    b.entry(1, 1).divide_by_var(layout.t(), 1, tol)?,
                ],
            ]);
            let q0 = build_q0(&b_tilde, tol)?;
            let q0_inv = neumann_inverse(&q0, tol)?;
            let delta_sq = b_tilde.det();
            let gamma0 = delta_series.constant_term();
            let mut target = TaylorSymbol::zero(layout, caps);
            *target.entry_mut(0, 1) = t_var.clone();
            *target.entry_mut(1, 0) = delta_sq.mul(&t_var).neg();
            let residual = q0_inv.mul(&b).mul(&q0).sub(&target);
            let residual_max = residual.max_abs_coeff();
            Ok(NormalFormData {
                case: NormalFormCase::Smooth,
                q0,
                q0_inv,
                half_trace,
                gamma0,
                delta_series: Some(delta_series),
                t_star: None,
                e_series: None,
                target,
                residual,
                residual_max,
            })
        }
        TransitionClassification::Stiff { gamma0, t_star, e_series, .. } => {
            let t_star = t_star
                .clone()
                .ok_or_else(|| Error::Precondition("stiff classification without t_star".into()))?;
            let e_series = e_series
                .clone()
                .ok_or_else(|| Error::Precondition("stiff classification without e series".into()))?;
            let q0 = build_q0(&b, tol)?;
            let q0_inv = neumann_inverse(&q0, tol)?;
            let mut target = TaylorSymbol::zero(layout, caps);
            *target.entry_mut(0, 1) = TaylorSeries::constant(layout, caps, 1.0);
            *target.entry_mut(1, 0) = t_var.sub(&t_star).mul(&e_series).neg();
            let residual = q0_inv.mul(&b).mul(&q0).sub(&target);
            let residual_max = residual.max_abs_coeff();
            Ok(NormalFormData {
                case: NormalFormCase::Stiff,
                q0,
                q0_inv,
                half_trace,
                gamma0: *gamma0,
                delta_series: None,
                t_star: Some(t_star),
                e_series: Some(e_series),
                target,
                residual,
                residual_max,
            })
        }
        other => Err(Error::Precondition(format!(
            "normal form needs a smooth or stiff classification, got {}",
            other.tag()
        ))),
    }
}

/// Splits a scalar series with no constant term into `t g_t + sum_j x_j g_xj
/// + sum_j zeta_j g_zj` by monomial bucketing (t first, then x, then zeta).
fn bucket_scalar(
    g: &TaylorSeries,
    tol: f64,
) -> Result<(TaylorSeries, Vec<TaylorSeries>, Vec<TaylorSeries>)> {
    let layout = g.layout();
    let caps = g.caps();
    let mut g_t = TaylorSeries::zero(layout, caps);
    let mut g_x = vec![TaylorSeries::zero(layout, caps); layout.d];
    let mut g_z = vec![TaylorSeries::zero(layout, caps); layout.d];
    for (e, c) in g.iter() {
        if e[layout.t()] >= 1 {
            let mut e2 = e.clone();
            e2[layout.t()] -= 1;
            g_t.set(&e2, g_t.get(&e2) + c);
            continue;
        }
        let mut assigned = false;
        for j in 0..layout.d {
            if e[layout.x(j)] >= 1 {
                let mut e2 = e.clone();
                e2[layout.x(j)] -= 1;
                let v = g_x[j].get(&e2) + c;
                g_x[j].set(&e2, v);
                assigned = true;
                break;
            }
        }
        if assigned {
            continue;
        }
        for j in 0..layout.d {
            if e[layout.zeta(j)] >= 1 {
                let mut e2 = e.clone();
                e2[layout.zeta(j)] -= 1;
                let v = g_z[j].get(&e2) + c;
                g_z[j].set(&e2, v);
                assigned = true;
                break;
            }
        }
        if !assigned && c.abs() > tol {
            return Err(Error::DecompositionFailure(format!(
                "constant leftover {c:.3e} not assignable to any bucket"
            )));
        }
    }
    Ok((g_t, g_x, g_z))
}

/// Computes `R = A - leading` and splits it per the case's recomposition
/// identity by Taylor-coefficient bucketing of the scalar payload.
pub fn remainder_expansion(
    system: &QuasilinearSystem,
    nf: &NormalFormData,
    tol: f64,
) -> Result<RemainderDecomposition> {
    let a = &system.linear;
    let layout = a.layout();
    let caps = a.caps();
    let t_var = TaylorSeries::variable(layout, caps, layout.t(), 1.0);
    let lower = |s: &TaylorSeries| -> TaylorSymbol {
        // Q0 [[0,0],[s,0]] Q0^{-1}
        let mut m = TaylorSymbol::zero(layout, caps);
        *m.entry_mut(1, 0) = s.clone();
        nf.q0.mul(&m).mul(&nf.q0_inv)
    };

    let (leading_core, g, r_e) = match nf.case {
        NormalFormCase::Smooth => {
            let delta_sq = nf
                .delta_series
                .as_ref()
                .expect("smooth payload")
                .mul(nf.delta_series.as_ref().expect("smooth payload"));
            let gamma0_sq = nf.gamma0 * nf.gamma0;
            let mut frozen = TaylorSymbol::zero(layout, caps);
            *frozen.entry_mut(0, 1) = t_var.clone();
            *frozen.entry_mut(1, 0) = t_var.scale(-gamma0_sq);
            let g = delta_sq.sub(&TaylorSeries::constant(layout, caps, gamma0_sq));
            (frozen, g, None)
        }
        NormalFormCase::Stiff => {
            let e_series = nf.e_series.as_ref().expect("stiff payload");
            let e0 = e_series.constant_term();
            let mut frozen = TaylorSymbol::zero(layout, caps);
            *frozen.entry_mut(0, 1) = TaylorSeries::constant(layout, caps, 1.0);
            *frozen.entry_mut(1, 0) = t_var.scale(-e0);
            let g = e_series.sub(&TaylorSeries::constant(layout, caps, e0));
            let r_e = lower(e_series);
            (frozen, g, Some(r_e))
        }
    };

    let half_tr_id = TaylorSymbol::identity(layout, caps).scale_series(&nf.half_trace);
    let leading = nf.q0.mul(&leading_core).mul(&nf.q0_inv).add(&half_tr_id);
    let remainder = a.sub(&leading);

    let (g_t, g_x, g_z) = bucket_scalar(&g, tol)?;
    let r_t = lower(&g_t.neg());
    let r_x: Vec<TaylorSymbol> = g_x.iter().map(|s| lower(&s.neg())).collect();
    let r_zeta: Vec<TaylorSymbol> = g_z.iter().map(|s| lower(&s.neg())).collect();

    // Recomposition identity, coefficient-wise within truncation.
    let t_sq = t_var.mul(&t_var);
    let mut recomposed = r_t.scale_series(&t_sq);
    for j in 0..layout.d {
        let tx = t_var.mul(&TaylorSeries::variable(layout, caps, layout.x(j), 1.0));
        recomposed = recomposed.add(&r_x[j].scale_series(&tx));
        let tz = t_var.mul(&TaylorSeries::variable(layout, caps, layout.zeta(j), 1.0));
        recomposed = recomposed.add(&r_zeta[j].scale_series(&tz));
    }
    if let (Some(r_e), Some(t_star)) = (&r_e, &nf.t_star) {
        recomposed = recomposed.add(&r_e.scale_series(t_star));
    }
    let recomposition_error = recomposed.sub(&remainder).max_abs_coeff();
    let scale = remainder.max_abs_coeff().max(1.0);
    if recomposition_error > tol.max(1e-9 * scale) {
        return Err(Error::DecompositionFailure(format!(
            "recomposition mismatch {recomposition_error:.3e} exceeds tolerance \
             (violated structural assumptions?)"
        )));
    }

    Ok(RemainderDecomposition {
        case: nf.case,
        leading,
        remainder,
        r_t,
        r_x,
        r_zeta,
        r_e,
        payload_t: g_t.neg(),
        payload_x: g_x.iter().map(|s| s.neg()).collect(),
        payload_zeta: g_z.iter().map(|s| s.neg()).collect(),
        payload_e: nf.e_series.clone(),
        recomposition_error,
    })
}
