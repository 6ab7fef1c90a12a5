//! 2x2 matrix symbols and the discriminant analysis that drives the
//! transition classification.
//!
//! The discriminant of a 2x2 symbol is `det(A) - (tr(A)/2)^2`; its sign
//! decides whether the spectrum is real (hyperbolic) or a conjugate complex
//! pair (elliptic). Classification walks a decision tree over the truncated
//! Taylor data: initial ellipticity, no transition, smooth transition
//! (discriminant a perfect square `(t*delta)^2`), or a stiff transition with
//! an analytic transition-time surface `t = t_star(x, zeta)`.

use crate::error::{Error, Result};
use crate::series::{Caps, CoeffRecord, TaylorSeries, VarLayout};
use serde::{Deserialize, Serialize};

/// A 2x2 grid of Taylor series sharing layout and truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorSymbol {
    entries: [[TaylorSeries; 2]; 2],
}

impl TaylorSymbol {
    pub fn new(entries: [[TaylorSeries; 2]; 2]) -> Self {
        let l = entries[0][0].layout();
        let c = entries[0][0].caps();
        for row in &entries {
            for e in row {
                assert_eq!(e.layout(), l, "symbol entries must share the layout");
                assert_eq!(e.caps(), c, "symbol entries must share the truncation");
            }
        }
        TaylorSymbol { entries }
    }

    pub fn zero(layout: VarLayout, caps: Caps) -> Self {
        let z = TaylorSeries::zero(layout, caps);
        TaylorSymbol::new([[z.clone(), z.clone()], [z.clone(), z]])
    }

    pub fn identity(layout: VarLayout, caps: Caps) -> Self {
        let mut s = Self::zero(layout, caps);
        s.entries[0][0] = TaylorSeries::constant(layout, caps, 1.0);
        s.entries[1][1] = TaylorSeries::constant(layout, caps, 1.0);
        s
    }

    pub fn from_constant(layout: VarLayout, caps: Caps, m: [[f64; 2]; 2]) -> Self {
        let mk = |v| TaylorSeries::constant(layout, caps, v);
        TaylorSymbol::new([[mk(m[0][0]), mk(m[0][1])], [mk(m[1][0]), mk(m[1][1])]])
    }

    pub fn entry(&self, i: usize, j: usize) -> &TaylorSeries {
        &self.entries[i][j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut TaylorSeries {
        &mut self.entries[i][j]
    }

    pub fn layout(&self) -> VarLayout {
        self.entries[0][0].layout()
    }

    pub fn caps(&self) -> Caps {
        self.entries[0][0].caps()
    }

    pub fn map(&self, f: impl Fn(&TaylorSeries) -> TaylorSeries) -> Self {
        TaylorSymbol::new([
            [f(&self.entries[0][0]), f(&self.entries[0][1])],
            [f(&self.entries[1][0]), f(&self.entries[1][1])],
        ])
    }

    pub fn add(&self, other: &Self) -> Self {
        TaylorSymbol::new([
            [
                self.entries[0][0].add(&other.entries[0][0]),
                self.entries[0][1].add(&other.entries[0][1]),
            ],
            [
                self.entries[1][0].add(&other.entries[1][0]),
                self.entries[1][1].add(&other.entries[1][1]),
            ],
        ])
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.map(|e| e.neg()))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.layout(), self.caps());
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = TaylorSeries::zero(self.layout(), self.caps());
                for k in 0..2 {
                    acc = acc.add(&self.entries[i][k].mul(&other.entries[k][j]));
                }
                out.entries[i][j] = acc;
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|e| e.scale(c))
    }

    /// Multiplies every entry by the scalar series.
    pub fn scale_series(&self, s: &TaylorSeries) -> Self {
        self.map(|e| e.mul(s))
    }

    pub fn trace(&self) -> TaylorSeries {
        self.entries[0][0].add(&self.entries[1][1])
    }

    pub fn det(&self) -> TaylorSeries {
        self.entries[0][0]
            .mul(&self.entries[1][1])
            .sub(&self.entries[0][1].mul(&self.entries[1][0]))
    }

    /// The traceless part `A - (tr A / 2) Id`.
    pub fn traceless(&self) -> Self {
        let half_tr = self.trace().scale(0.5);
        let mut out = self.clone();
        out.entries[0][0] = out.entries[0][0].sub(&half_tr);
        out.entries[1][1] = out.entries[1][1].sub(&half_tr);
        out
    }

    pub fn max_abs_coeff(&self) -> f64 {
        let mut m: f64 = 0.0;
        for row in &self.entries {
            for e in row {
                m = m.max(e.max_abs_coeff());
            }
        }
        m
    }

    pub fn eval(&self, point: &[f64]) -> [[f64; 2]; 2] {
        [
            [self.entries[0][0].eval(point), self.entries[0][1].eval(point)],
            [self.entries[1][0].eval(point), self.entries[1][1].eval(point)],
        ]
    }

    pub fn to_records(&self) -> [[Vec<CoeffRecord>; 2]; 2] {
        [
            [self.entries[0][0].to_records(), self.entries[0][1].to_records()],
            [self.entries[1][0].to_records(), self.entries[1][1].to_records()],
        ]
    }

    pub fn from_records(
        layout: VarLayout,
        caps: Caps,
        records: &[[Vec<CoeffRecord>; 2]; 2],
    ) -> Result<Self> {
        Ok(TaylorSymbol::new([
            [
                TaylorSeries::from_records(layout, caps, &records[0][0])?,
                TaylorSeries::from_records(layout, caps, &records[0][1])?,
            ],
            [
                TaylorSeries::from_records(layout, caps, &records[1][0])?,
                TaylorSeries::from_records(layout, caps, &records[1][1])?,
            ],
        ]))
    }
}

/// Evaluation box around the base point within which the truncated data is
/// declared valid. A configuration parameter, not derived from the input.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ValidityBox {
    /// Time range `[0, t]`.
    pub t: f64,
    /// Space half-width per axis.
    pub x: f64,
    /// Frequency-offset half-width per axis.
    pub zeta: f64,
}

impl Default for ValidityBox {
    fn default() -> Self {
        ValidityBox { t: 0.5, x: 0.5, zeta: 0.25 }
    }
}

impl ValidityBox {
    pub fn contains(&self, layout: &VarLayout, point: &[f64]) -> bool {
        if point[layout.t()] < -1e-12 || point[layout.t()] > self.t {
            return false;
        }
        for j in 0..layout.d {
            if point[layout.x(j)].abs() > self.x {
                return false;
            }
            if point[layout.zeta(j)].abs() > self.zeta {
                return false;
            }
        }
        true
    }
}

/// Truncated Taylor data of a quasilinear 2x2 system: the frozen principal
/// symbol, its u-derivatives, and the zeroth-order term.
#[derive(Debug, Clone)]
pub struct QuasilinearSystem {
    /// Principal symbol at the frozen state, contracted with the distinguished
    /// frequency: series in (t, x, zeta).
    pub linear: TaylorSymbol,
    /// One matrix per state component (derivative of the symbol in that
    /// component), series in (t, x, zeta).
    pub u_derivative: Vec<TaylorSymbol>,
    /// Zeroth-order term. May carry explicit u-dependence (layout with
    /// nu = 2), in which case the genuinely-nonlinear check applies.
    pub zeroth_order: TaylorSymbol,
    pub validity: ValidityBox,
}

impl QuasilinearSystem {
    pub fn new(
        linear: TaylorSymbol,
        u_derivative: Vec<TaylorSymbol>,
        zeroth_order: TaylorSymbol,
        validity: ValidityBox,
    ) -> Self {
        assert_eq!(u_derivative.len(), 2, "one u-derivative per state component");
        QuasilinearSystem { linear, u_derivative, zeroth_order, validity }
    }

    /// System with zero u-derivatives and zero zeroth-order term.
    pub fn linear_only(linear: TaylorSymbol) -> Self {
        let z = TaylorSymbol::zero(linear.layout(), linear.caps());
        QuasilinearSystem::new(linear, vec![z.clone(), z.clone()], z, ValidityBox::default())
    }

    pub fn d(&self) -> usize {
        self.linear.layout().d
    }
}

/// Evaluates a symbol at a numeric point, guarding the validity box.
pub fn eval_symbol(
    sym: &TaylorSymbol,
    validity: &ValidityBox,
    t: f64,
    x: &[f64],
    zeta: &[f64],
) -> Result<[[f64; 2]; 2]> {
    let layout = sym.layout();
    assert_eq!(x.len(), layout.d);
    assert_eq!(zeta.len(), layout.d);
    let mut point = vec![0.0; layout.nvars()];
    point[layout.t()] = t;
    for j in 0..layout.d {
        point[layout.x(j)] = x[j];
        point[layout.zeta(j)] = zeta[j];
    }
    if !validity.contains(&layout, &point) {
        return Err(Error::OutsideValidityBox(format!("t={t}, x={x:?}, zeta={zeta:?}")));
    }
    Ok(sym.eval(&point))
}

/// Discriminant `det(A) - (tr(A)/2)^2` as a truncated series. The output
/// shares the input truncation; the product may saturate, which is recorded
/// on the returned series.
pub fn discriminant(sym: &TaylorSymbol) -> TaylorSeries {
    let half_tr = sym.trace().scale(0.5);
    sym.det().sub(&half_tr.mul(&half_tr))
}

/// Newton iteration on `Delta(t, x, zeta) = 0` from the seed `t = 0` at the
/// given numeric point. Requires the stiff regime at the base point.
pub fn transition_time(sym: &TaylorSymbol, x: &[f64], zeta: &[f64], tol: f64) -> Result<f64> {
    let delta = discriminant(sym);
    transition_time_of_delta(&delta, x, zeta, tol)
}

pub(crate) fn transition_time_of_delta(
    delta: &TaylorSeries,
    x: &[f64],
    zeta: &[f64],
    tol: f64,
) -> Result<f64> {
    let layout = delta.layout();
    let ddt = delta.derivative(layout.t());
    let mut point = vec![0.0; layout.nvars()];
    for j in 0..layout.d {
        point[layout.x(j)] = x[j];
        point[layout.zeta(j)] = zeta[j];
    }
    let base = vec![0.0; layout.nvars()];
    let slope0 = ddt.eval(&base);
    if slope0 <= tol {
        return Err(Error::NotStiff(slope0));
    }
    let mut t = 0.0;
    for _ in 0..50 {
        point[layout.t()] = t;
        let f = delta.eval(&point);
        if f.abs() < tol {
            if t < -tol {
                return Err(Error::InitiallyElliptic { t_star: t });
            }
            return Ok(t);
        }
        let fp = ddt.eval(&point);
        if fp.abs() < 1e-300 {
            return Err(Error::NoConvergence { steps: 50, residual: f.abs() });
        }
        t -= f / fp;
    }
    point[layout.t()] = t;
    let f = delta.eval(&point);
    if f.abs() < tol {
        if t < -tol {
            return Err(Error::InitiallyElliptic { t_star: t });
        }
        Ok(t)
    } else {
        Err(Error::NoConvergence { steps: 50, residual: f.abs() })
    }
}

/// Solves `Delta(t_star(x, zeta), x, zeta) = 0` for the transition-time
/// series by Newton iteration in the series algebra. Requires
/// `d_t Delta > tol` at the base point.
pub fn transition_time_series(delta: &TaylorSeries, tol: f64) -> Result<TaylorSeries> {
    let layout = delta.layout();
    let ddt = delta.derivative(layout.t());
    let slope0 = ddt.constant_term();
    if slope0 <= tol {
        return Err(Error::NotStiff(slope0));
    }
    let mut t_star = TaylorSeries::zero(layout, delta.caps());
    // Quadratic convergence in attained order: a handful of steps suffices.
    let steps = (delta.caps().total() as f64 + 1.0).log2().ceil() as usize + 2;
    for _ in 0..steps {
        let f = delta.substitute(layout.t(), &t_star);
        let fp = ddt.substitute(layout.t(), &t_star);
        let correction = f.mul(&fp.recip(tol)?);
        t_star = t_star.sub(&correction);
    }
    // t_star depends on (x, zeta) only; stray t-terms mean non-convergence.
    let mut clean = TaylorSeries::zero(layout, delta.caps());
    for (e, c) in t_star.iter() {
        if e[layout.t()] == 0 {
            clean.set(e, *c);
        } else if c.abs() > tol {
            return Err(Error::NoConvergence { steps, residual: c.abs() });
        }
    }
    Ok(clean)
}

/// Factor series `e` with `Delta = (t - t_star) e`, by synthetic division in
/// the t-variable.
pub fn stiff_factor_series(
    delta: &TaylorSeries,
    t_star: &TaylorSeries,
    tol: f64,
) -> Result<TaylorSeries> {
    let layout = delta.layout();
    let max_t = delta.iter().map(|(e, _)| e[layout.t()]).max().unwrap_or(0);
    // delta = sum_m delta_m(x, zeta) t^m; divide by (t - t_star):
    // e_{m-1} = delta_m + t_star * e_m, remainder = delta_0 + t_star * e_0.
    let coeff_m = |m: u8| -> TaylorSeries {
        let mut out = TaylorSeries::zero(layout, delta.caps());
        for (e, c) in delta.iter() {
            if e[layout.t()] == m {
                let mut e2 = e.clone();
                e2[layout.t()] = 0;
                out.set(&e2, *c);
            }
        }
        out
    };
    let mut quotient_parts: Vec<TaylorSeries> = vec![TaylorSeries::zero(layout, delta.caps()); max_t as usize];
    let mut carry = coeff_m(max_t);
    for m in (1..=max_t).rev() {
        quotient_parts[(m - 1) as usize] = carry.clone();
        carry = coeff_m(m - 1).add(&t_star.mul(&carry));
    }
    let remainder = carry;
    if remainder.max_abs_coeff() > tol.max(1e-9 * delta.max_abs_coeff()) {
        return Err(Error::Division(format!(
            "nonzero remainder {:.3e} dividing the discriminant by (t - t_star)",
            remainder.max_abs_coeff()
        )));
    }
    let mut e_series = TaylorSeries::zero(layout, delta.caps());
    for (m, part) in quotient_parts.iter().enumerate() {
        e_series = e_series.add(&part.shift_var(layout.t(), m as u8));
    }
    Ok(e_series)
}

/// Outcome of the discriminant analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TransitionClassification {
    /// Strictly hyperbolic at the base point (no double root).
    NoTransition,
    /// The discriminant is already positive somewhere at t = 0.
    InitiallyElliptic { witness: (f64, Vec<f64>, Vec<f64>) },
    /// `Delta = (t delta)^2` with `delta(0,0,xi_0) = gamma0 > 0`.
    Smooth {
        gamma0: f64,
        #[serde(skip)]
        delta_series: Option<TaylorSeries>,
        diagnostics: AssumptionReport,
    },
    /// `d_t Delta(0,0,xi_0) > 0`; carries the transition-time and factor
    /// series and the degeneracy order of `t_star` in x (if any).
    Stiff {
        /// sqrt of `d_t Delta` at the base point; the growth rate of the
        /// associated propagator.
        gamma0: f64,
        /// Smallest order k with a nonvanishing pure-x coefficient of
        /// `t_star`; `None` when `t_star` vanishes within truncation.
        degeneracy: Option<u32>,
        /// Whether the degeneracy order is within reach of the method
        /// (k = 2 is flagged out of scope).
        in_method_scope: bool,
        #[serde(skip)]
        t_star: Option<TaylorSeries>,
        #[serde(skip)]
        e_series: Option<TaylorSeries>,
        diagnostics: AssumptionReport,
    },
}

impl TransitionClassification {
    pub fn tag(&self) -> &'static str {
        match self {
            TransitionClassification::NoTransition => "no-transition",
            TransitionClassification::InitiallyElliptic { .. } => "initially-elliptic",
            TransitionClassification::Smooth { .. } => "smooth",
            TransitionClassification::Stiff { .. } => "stiff",
        }
    }
}

/// Per-assumption diagnostic record. Failures are entries, not errors.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Double eigenvalue at the base point: tr(A)/2.
    pub lambda0: f64,
    /// Discriminant at the base point (branching needs |.| <= tol).
    pub delta_at_base: f64,
    pub branching: bool,
    /// Max |entry| of the traceless part at the base point.
    pub traceless_at_base: f64,
    pub semi_simple: bool,
    /// Pure-x derivatives of the discriminant at the base point, k = 0..4
    /// (per axis, the maximum in magnitude for k <= 3, the value on axis 0
    /// for k = 4).
    pub dx_delta: [f64; 5],
    /// Degenerate stiff-transition derivative test: d_x^k Delta = 0 for
    /// k <= 3 and d_x^4 Delta < 0.
    pub degenerate_flat: bool,
    /// Genuinely-nonlinear zeroth-order check. None when the input carries
    /// no u-dependence in the zeroth-order term.
    pub genuinely_nonlinear: Option<bool>,
    pub notes: Vec<String>,
}

/// Evaluates the standing assumptions at the base point and reports them.
pub fn check_assumptions(system: &QuasilinearSystem, tol: f64) -> AssumptionReport {
    let layout = system.linear.layout();
    let base = vec![0.0; layout.nvars()];
    let delta = discriminant(&system.linear);
    let mut rep = AssumptionReport::default();
    rep.lambda0 = 0.5 * system.linear.trace().eval(&base);
    rep.delta_at_base = delta.eval(&base);
    rep.branching = rep.delta_at_base.abs() <= tol;
    let traceless = system.linear.traceless();
    rep.traceless_at_base = traceless
        .eval(&base)
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    rep.semi_simple = rep.traceless_at_base <= tol;
    for k in 0..=4u32 {
        let mut worst = 0.0f64;
        for j in 0..layout.d {
            let v = delta.pure_derivative_at_base(layout.x(j), k);
            if v.abs() > worst.abs() {
                worst = v;
            }
        }
        rep.dx_delta[k as usize] = worst;
    }
    rep.degenerate_flat = rep.dx_delta[..4].iter().all(|v| v.abs() <= tol)
        && rep.dx_delta[4] < -tol;
    if !rep.branching {
        rep.notes.push("no double root at the base point".into());
    }
    if system.zeroth_order.layout().nu > 0 {
        // Genuinely nonlinear zeroth-order term: the u-constant part of the
        // zeroth-order matrix must vanish identically.
        let l = system.zeroth_order.layout();
        let mut max_const_in_u = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                for (e, c) in system.zeroth_order.entry(i, j).iter() {
                    let u_free = (0..l.nu).all(|m| e[l.u(m)] == 0);
                    if u_free {
                        max_const_in_u = max_const_in_u.max(c.abs());
                    }
                }
            }
        }
        rep.genuinely_nonlinear = Some(max_const_in_u <= tol);
    }
    rep
}

/// Number of sample points per axis for the initial-hyperbolicity scan.
const SCAN_POINTS: usize = 33;

fn scan_initial_ellipticity(
    delta: &TaylorSeries,
    validity: &ValidityBox,
    tol: f64,
) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let layout = delta.layout();
    let d = layout.d;
    // Grid over (x, zeta) at t = 0. Axes are scanned jointly via mixed-radix
    // enumeration; 33 points per axis.
    let total: usize = SCAN_POINTS.pow(2 * d as u32);
    let mut point = vec![0.0; layout.nvars()];
    for idx in 0..total {
        let mut rem = idx;
        for j in 0..d {
            let i = rem % SCAN_POINTS;
            rem /= SCAN_POINTS;
            point[layout.x(j)] = -validity.x + 2.0 * validity.x * i as f64 / (SCAN_POINTS - 1) as f64;
        }
        for j in 0..d {
            let i = rem % SCAN_POINTS;
            rem /= SCAN_POINTS;
            point[layout.zeta(j)] =
                -validity.zeta + 2.0 * validity.zeta * i as f64 / (SCAN_POINTS - 1) as f64;
        }
        let v = delta.eval(&point);
        if v > tol {
            let x = (0..d).map(|j| point[layout.x(j)]).collect();
            let zeta = (0..d).map(|j| point[layout.zeta(j)]).collect();
            return Some((v, x, zeta));
        }
    }
    None
}

/// Attempts the smooth factorization `Delta = (t delta)^2`; returns the
/// delta-series on success.
fn try_smooth_factorization(delta: &TaylorSeries, tol: f64) -> Option<TaylorSeries> {
    let layout = delta.layout();
    let dsq = delta.divide_by_var(layout.t(), 2, tol).ok()?;
    if dsq.constant_term() <= tol {
        return None;
    }
    dsq.sqrt(tol).ok()
}

/// Decision tree over the discriminant. Truncation in x must be at least 5
/// so the fourth-derivative test is meaningful.
pub fn classify_transition(
    system: &QuasilinearSystem,
    tol: f64,
) -> Result<TransitionClassification> {
    let layout = system.linear.layout();
    if system.linear.caps().x < 5 {
        return Err(Error::Precondition(
            "classification needs x-truncation degree >= 5".into(),
        ));
    }
    let delta = discriminant(&system.linear);
    let diagnostics = check_assumptions(system, tol);

    if let Some(witness) = scan_initial_ellipticity(&delta, &system.validity, tol) {
        return Ok(TransitionClassification::InitiallyElliptic { witness });
    }
    let base = vec![0.0; layout.nvars()];
    let delta0 = delta.eval(&base);
    if delta0 < -tol {
        return Ok(TransitionClassification::NoTransition);
    }

    // Branching holds at the base point. Smooth branch first: Delta must
    // vanish identically at t = 0 and factor as (t delta)^2.
    let t0_part_max = delta
        .iter()
        .filter(|(e, _)| e[layout.t()] == 0)
        .fold(0.0f64, |m, (_, c)| m.max(c.abs()));
    if t0_part_max <= tol {
        if let Some(delta_series) = try_smooth_factorization(&delta, tol) {
            let gamma0 = delta_series.constant_term();
            if gamma0 > tol {
                return Ok(TransitionClassification::Smooth {
                    gamma0,
                    delta_series: Some(delta_series),
                    diagnostics,
                });
            }
        }
    }

    // Stiff branch.
    let slope0 = delta.derivative(layout.t()).constant_term();
    if slope0 > tol {
        let t_star = transition_time_series(&delta, tol)?;
        let e_series = stiff_factor_series(&delta, &t_star, tol)?;
        let mut diagnostics = diagnostics;
        // Degeneracy order: smallest pure-x order with a nonvanishing
        // t_star coefficient (checked per axis).
        let mut degeneracy: Option<u32> = None;
        'outer: for k in 1..=system.linear.caps().x {
            for j in 0..layout.d {
                let c = t_star.pure_derivative_at_base(layout.x(j), k);
                if c.abs() > tol {
                    degeneracy = Some(k);
                    if k % 2 == 1 {
                        diagnostics.notes.push(format!(
                            "t_star has odd leading order {k} in x, in contradiction with \
                             the assumption of non-negativity of the transition time"
                        ));
                        return Ok(TransitionClassification::InitiallyElliptic {
                            witness: (c, vec![0.0; layout.d], vec![0.0; layout.d]),
                        });
                    }
                    if c / factorial(k) < 0.0 {
                        diagnostics.notes.push(format!(
                            "t_star has negative leading coefficient at order {k}; \
                             the transition time dips below zero near the base point"
                        ));
                        return Ok(TransitionClassification::InitiallyElliptic {
                            witness: (c, vec![0.0; layout.d], vec![0.0; layout.d]),
                        });
                    }
                    break 'outer;
                }
            }
        }
        let in_method_scope = degeneracy != Some(2);
        if degeneracy == Some(2) {
            diagnostics
                .notes
                .push("non-degenerate transition time (k = 2): out of method scope".into());
        }
        return Ok(TransitionClassification::Stiff {
            gamma0: slope0.sqrt(),
            degeneracy,
            in_method_scope,
            t_star: Some(t_star),
            e_series: Some(e_series),
            diagnostics,
        });
    }

    Err(Error::Inconclusive(format!(
        "all tests below tolerance: Delta(base) = {delta0:.3e}, d_t Delta(base) = {slope0:.3e}, \
         t=0 slice max = {t0_part_max:.3e}; diagnostics: {diagnostics:?}"
    )))
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|m| m as f64).product::<f64>().max(1.0)
}

// ---------------------------------------------------------------------------
// Ingestion format
// ---------------------------------------------------------------------------

/// On-disk description of a system: sparse coefficient records per matrix
/// entry, validated against the truncation bounds on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemFile {
    pub space_dim: usize,
    pub caps: Caps,
    #[serde(default)]
    pub validity_box: Option<ValidityBox>,
    pub linear: [[Vec<CoeffRecord>; 2]; 2],
    #[serde(default)]
    pub u_derivative: Option<Vec<[[Vec<CoeffRecord>; 2]; 2]>>,
    #[serde(default)]
    pub zeroth_order: Option<[[Vec<CoeffRecord>; 2]; 2]>,
    /// When true, zeroth-order exponent lists carry two extra trailing
    /// u-exponents.
    #[serde(default)]
    pub zeroth_order_u_dependent: bool,
}

impl SystemFile {
    pub fn parse(text: &str) -> Result<QuasilinearSystem> {
        let file: SystemFile = serde_json::from_str(text)?;
        file.build()
    }

    pub fn build(&self) -> Result<QuasilinearSystem> {
        let layout = VarLayout::new(self.space_dim, 0);
        let linear = TaylorSymbol::from_records(layout, self.caps, &self.linear)?;
        let z = TaylorSymbol::zero(layout, self.caps);
        let u_derivative = match &self.u_derivative {
            Some(list) => {
                if list.len() != 2 {
                    return Err(Error::Ingestion(format!(
                        "expected 2 u-derivative matrices, got {}",
                        list.len()
                    )));
                }
                list.iter()
                    .map(|r| TaylorSymbol::from_records(layout, self.caps, r))
                    .collect::<Result<Vec<_>>>()?
            }
            None => vec![z.clone(), z.clone()],
        };
        let zeroth_order = match &self.zeroth_order {
            Some(r) => {
                let zl = if self.zeroth_order_u_dependent {
                    VarLayout::new(self.space_dim, 2)
                } else {
                    layout
                };
                TaylorSymbol::from_records(zl, self.caps, r)?
            }
            None => z,
        };
        Ok(QuasilinearSystem::new(
            linear,
            u_derivative,
            zeroth_order,
            self.validity_box.unwrap_or_default(),
        ))
    }

    pub fn from_system(system: &QuasilinearSystem) -> Self {
        SystemFile {
            space_dim: system.d(),
            caps: system.linear.caps(),
            validity_box: Some(system.validity),
            linear: system.linear.to_records(),
            u_derivative: Some(system.u_derivative.iter().map(|s| s.to_records()).collect()),
            zeroth_order: Some(system.zeroth_order.to_records()),
            zeroth_order_u_dependent: system.zeroth_order.layout().nu > 0,
        }
    }
}

// ---------------------------------------------------------------------------
// Normal-form builders used across tests and the demo
// ---------------------------------------------------------------------------

/// The smooth-transition normal form `[[0, t], [-gamma0^2 t, 0]]`.
pub fn smooth_normal_form_symbol(layout: VarLayout, caps: Caps, gamma0: f64) -> TaylorSymbol {
    let mut s = TaylorSymbol::zero(layout, caps);
    *s.entry_mut(0, 1) = TaylorSeries::variable(layout, caps, layout.t(), 1.0);
    *s.entry_mut(1, 0) = TaylorSeries::variable(layout, caps, layout.t(), -gamma0 * gamma0);
    s
}

/// The stiff (Airy) normal form `[[0, 1], [-(t - t_star) e, 0]]` where
/// `t_star` and `e` are given series in (x, zeta) resp. (t, x, zeta).
pub fn stiff_normal_form_symbol(
    t_star: &TaylorSeries,
    e_series: &TaylorSeries,
) -> TaylorSymbol {
    let layout = t_star.layout();
    let caps = t_star.caps();
    let t = TaylorSeries::variable(layout, caps, layout.t(), 1.0);
    let mut s = TaylorSymbol::zero(layout, caps);
    *s.entry_mut(0, 1) = TaylorSeries::constant(layout, caps, 1.0);
    *s.entry_mut(1, 0) = t.sub(t_star).mul(e_series).neg();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lc() -> (VarLayout, Caps) {
        (VarLayout::new(1, 0), Caps::uniform(6))
    }

    fn tser(l: VarLayout, c: Caps) -> TaylorSeries {
        TaylorSeries::variable(l, c, l.t(), 1.0)
    }

    #[test]
    fn eval_constant_identity() {
        let (l, c) = lc();
        let id = TaylorSymbol::identity(l, c);
        let m = eval_symbol(&id, &ValidityBox::default(), 0.3, &[0.1], &[0.0]).unwrap();
        assert_eq!(m, [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn eval_smooth_normal_form() {
        let (l, c) = lc();
        let s = smooth_normal_form_symbol(l, c, 1.0);
        let m = eval_symbol(&s, &ValidityBox::default(), 0.5, &[0.0], &[0.0]).unwrap();
        assert_eq!(m, [[0.0, 0.5], [-0.5, 0.0]]);
    }

    #[test]
    fn eval_outside_box_errors() {
        let (l, c) = lc();
        let id = TaylorSymbol::identity(l, c);
        assert!(eval_symbol(&id, &ValidityBox::default(), 0.9, &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn discriminant_of_diagonal() {
        let (l, c) = lc();
        let m = TaylorSymbol::from_constant(l, c, [[1.0, 0.0], [0.0, -1.0]]);
        let delta = discriminant(&m);
        assert!((delta.constant_term() + 1.0).abs() < 1e-14);
        assert_eq!(delta.iter().count(), 1);
    }

    #[test]
    fn discriminant_of_smooth_normal_form() {
        let (l, c) = lc();
        let gamma0 = 2.0;
        let s = smooth_normal_form_symbol(l, c, gamma0);
        let delta = discriminant(&s);
        // Delta = gamma0^2 t^2
        assert!((delta.get(&[2, 0, 0]) - gamma0 * gamma0).abs() < 1e-14);
        assert_eq!(delta.iter().count(), 1);
    }

    #[test]
    fn discriminant_hand_expansion() {
        // [[0, 1], [-(t - x^4), 0]] has Delta = t - x^4.
        let (l, c) = lc();
        let t = tser(l, c);
        let x = TaylorSeries::variable(l, c, l.x(0), 1.0);
        let x4 = x.mul(&x).mul(&x).mul(&x);
        let mut a = TaylorSymbol::zero(l, c);
        *a.entry_mut(0, 1) = TaylorSeries::constant(l, c, 1.0);
        *a.entry_mut(1, 0) = t.sub(&x4).neg();
        let delta = discriminant(&a);
        assert!(delta.sub(&t.sub(&x4)).max_abs_coeff() < 1e-14);
    }

    #[test]
    fn transition_time_explicit_root() {
        let (l, c) = lc();
        let t = tser(l, c);
        let x = TaylorSeries::variable(l, c, l.x(0), 1.0);
        let x4 = x.mul(&x).mul(&x).mul(&x);
        let mut a = TaylorSymbol::zero(l, c);
        *a.entry_mut(0, 1) = TaylorSeries::constant(l, c, 1.0);
        *a.entry_mut(1, 0) = t.sub(&x4).neg();
        let ts = transition_time(&a, &[0.3], &[0.0], 1e-12).unwrap();
        assert!((ts - 0.0081).abs() < 1e-10);

        // Same root with a nontrivial factor: Delta = (t - x^4)(1 + t).
        let delta2 = t.sub(&x4).mul(&TaylorSeries::constant(l, c, 1.0).add(&t));
        let ts2 = transition_time_of_delta(&delta2, &[0.3], &[0.0], 1e-12).unwrap();
        assert!((ts2 - 0.0081).abs() < 1e-10);
    }

    #[test]
    fn transition_time_initially_elliptic_signal() {
        let (l, c) = lc();
        let t = tser(l, c);
        let x2 = TaylorSeries::variable(l, c, l.x(0), 1.0);
        let delta = t.add(&x2.mul(&x2)); // t + x^2, root at -x^2
        match transition_time_of_delta(&delta, &[0.1], &[0.0], 1e-12) {
            Err(Error::InitiallyElliptic { t_star }) => assert!((t_star + 0.01).abs() < 1e-10),
            other => panic!("expected initially-elliptic signal, got {other:?}"),
        }
    }

    #[test]
    fn t_star_series_and_factor() {
        // Delta = (t - x^4)(1 + t): t_star = x^4, e = 1 + t within truncation.
        let (l, c) = lc();
        let t = tser(l, c);
        let x = TaylorSeries::variable(l, c, l.x(0), 1.0);
        let x4 = x.mul(&x).mul(&x).mul(&x);
        let delta = t.sub(&x4).mul(&TaylorSeries::constant(l, c, 1.0).add(&t));
        let ts = transition_time_series(&delta, 1e-12).unwrap();
        assert!(ts.sub(&x4).max_abs_coeff() < 1e-10);
        let e = stiff_factor_series(&delta, &ts, 1e-10).unwrap();
        let expect = TaylorSeries::constant(l, c, 1.0).add(&t);
        // e agrees with 1 + t on all coefficients the truncated division
        // determines exactly (the x^4-shifted tail saturates).
        assert!((e.constant_term() - 1.0).abs() < 1e-10);
        assert!((e.get(&[1, 0, 0]) - 1.0).abs() < 1e-10);
        assert!(e.sub(&expect).max_abs_coeff() < 1e-9);
    }

    #[test]
    fn classify_smooth_normal_form() {
        let (l, c) = lc();
        let s = smooth_normal_form_symbol(l, c, 2.0);
        let sys = QuasilinearSystem::linear_only(s);
        match classify_transition(&sys, 1e-9).unwrap() {
            TransitionClassification::Smooth { gamma0, .. } => {
                assert!((gamma0 - 2.0).abs() < 1e-12)
            }
            other => panic!("expected smooth, got {other:?}"),
        }
    }

    #[test]
    fn classify_stiff_degenerate() {
        let (l, c) = lc();
        let t = tser(l, c);
        let x = TaylorSeries::variable(l, c, l.x(0), 1.0);
        let x4 = x.mul(&x).mul(&x).mul(&x);
        let mut a = TaylorSymbol::zero(l, c);
        *a.entry_mut(0, 1) = TaylorSeries::constant(l, c, 1.0);
        *a.entry_mut(1, 0) = t.sub(&x4).neg();
        let sys = QuasilinearSystem::linear_only(a);
        match classify_transition(&sys, 1e-9).unwrap() {
            TransitionClassification::Stiff { degeneracy, in_method_scope, .. } => {
                assert_eq!(degeneracy, Some(4));
                assert!(in_method_scope);
            }
            other => panic!("expected stiff, got {other:?}"),
        }
    }

    #[test]
    fn classify_stiff_k2_flagged() {
        let (l, c) = lc();
        let t = tser(l, c);
        let x = TaylorSeries::variable(l, c, l.x(0), 1.0);
        let mut a = TaylorSymbol::zero(l, c);
        *a.entry_mut(0, 1) = TaylorSeries::constant(l, c, 1.0);
        *a.entry_mut(1, 0) = t.sub(&x.mul(&x)).neg();
        let sys = QuasilinearSystem::linear_only(a);
        match classify_transition(&sys, 1e-9).unwrap() {
            TransitionClassification::Stiff { degeneracy, in_method_scope, .. } => {
                assert_eq!(degeneracy, Some(2));
                assert!(!in_method_scope);
            }
            other => panic!("expected stiff k=2, got {other:?}"),
        }
    }

    #[test]
    fn classify_no_transition_and_elliptic() {
        let (l, c) = lc();
        let hyp = TaylorSymbol::from_constant(l, c, [[1.0, 0.0], [0.0, -1.0]]);
        let sys = QuasilinearSystem::linear_only(hyp);
        assert!(matches!(
            classify_transition(&sys, 1e-9).unwrap(),
            TransitionClassification::NoTransition
        ));
        let ell = TaylorSymbol::from_constant(l, c, [[0.0, 1.0], [-1.0, 0.0]]);
        let sys = QuasilinearSystem::linear_only(ell);
        assert!(matches!(
            classify_transition(&sys, 1e-9).unwrap(),
            TransitionClassification::InitiallyElliptic { .. }
        ));
    }

    #[test]
    fn assumptions_on_normal_forms() {
        let (l, c) = lc();
        let smooth = QuasilinearSystem::linear_only(smooth_normal_form_symbol(l, c, 1.0));
        let rep = check_assumptions(&smooth, 1e-10);
        assert!(rep.branching);
        assert!(rep.semi_simple);

        // Stiff normal form: branching holds but semi-simplicity fails
        // (the off-diagonal 1 survives at the base point).
        let t = tser(l, c);
        let mut airy = TaylorSymbol::zero(l, c);
        *airy.entry_mut(0, 1) = TaylorSeries::constant(l, c, 1.0);
        *airy.entry_mut(1, 0) = t.neg();
        let stiff = QuasilinearSystem::linear_only(airy);
        let rep = check_assumptions(&stiff, 1e-10);
        assert!(rep.branching);
        assert!(!rep.semi_simple);

        let diag = QuasilinearSystem::linear_only(TaylorSymbol::from_constant(
            l,
            c,
            [[1.0, 0.0], [0.0, -1.0]],
        ));
        let rep = check_assumptions(&diag, 1e-10);
        assert!(!rep.branching);
    }

    #[test]
    fn ingestion_roundtrip() {
        let (l, c) = lc();
        let s = smooth_normal_form_symbol(l, c, 1.5);
        let sys = QuasilinearSystem::linear_only(s);
        let file = SystemFile::from_system(&sys);
        let text = serde_json::to_string(&file).unwrap();
        let back = SystemFile::parse(&text).unwrap();
        assert!(back.linear.sub(&sys.linear).max_abs_coeff() < 1e-15);
    }
}
