//! Per-Fourier-mode propagators of the two frozen-coefficient normal forms,
//! in closed form, with an ODE-integration oracle, growth-envelope fitting
//! and the polarized free solutions.
//!
//! Smooth case (eta = 1): the mode flow solves
//! `V' = i n s [[0, 1], [-gamma0^2, 0]] V`, giving
//! `exp(i n (s^2 - s'^2)/2 B)` with entries cosh/sinh of
//! `n gamma0 (s^2 - s'^2)/2`.
//!
//! Airy case (eta = 1/2): the flow of
//! `V' = i n [[0, eps^{-1/3}], [-eps^{1/3} gamma0^2 s, 0]] V` is assembled
//! from the scaled Airy basis on the real and j-rotated rays; the
//! `eps^{+-1/3}` weights sit on the off-diagonal entries.
//!
//! All flows are carried log-scaled; `n = 0` flows are the identity since
//! the coefficient matrix is n-scaled.

use crate::airy::{airy_n_pair, j_rotation, AiryScale, LogComplex, AI_ZERO, AIP_ZERO};
use crate::error::{Error, Result};
use crate::ode::{cmat_identity, CMat2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A 2x2 complex matrix carried as `mantissa * exp(log)`.
#[derive(Debug, Clone, Copy)]
pub struct LogMat {
    pub mantissa: CMat2,
    pub log: f64,
}

impl LogMat {
    pub fn identity() -> Self {
        LogMat { mantissa: cmat_identity(), log: 0.0 }
    }

    pub fn from_entries(e: [[LogComplex; 2]; 2]) -> Self {
        let mut top = f64::NEG_INFINITY;
        for row in &e {
            for v in row {
                top = top.max(v.abs_log());
            }
        }
        if !top.is_finite() {
            return LogMat { mantissa: [[Complex64::new(0.0, 0.0); 2]; 2], log: 0.0 };
        }
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for jj in 0..2 {
                let d = e[i][jj].log - top;
                m[i][jj] = e[i][jj].mantissa * d.exp();
            }
        }
        LogMat { mantissa: m, log: top }
    }

    pub fn entry(&self, i: usize, j: usize) -> LogComplex {
        LogComplex { mantissa: self.mantissa[i][j], log: self.log }.normalized()
    }

    /// Max-entry magnitude in log scale.
    pub fn norm_log(&self) -> f64 {
        let mut m = 0.0f64;
        for row in &self.mantissa {
            for e in row {
                m = m.max(e.norm());
            }
        }
        self.log + m.ln()
    }

    pub fn to_cmat(&self) -> Result<CMat2> {
        if self.log > 700.0 {
            return Err(Error::InvalidArgument(format!(
                "flow overflows f64 (log-scale {:.3})",
                self.log
            )));
        }
        let f = self.log.exp();
        let mut out = self.mantissa;
        for row in out.iter_mut() {
            for e in row.iter_mut() {
                *e *= f;
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[LogComplex; 2]) -> [LogComplex; 2] {
        let a = |i: usize, j: usize| self.entry(i, j);
        [
            a(0, 0).mul(v[0]).add(a(0, 1).mul(v[1])),
            a(1, 0).mul(v[0]).add(a(1, 1).mul(v[1])),
        ]
    }

    pub fn mul(&self, other: &LogMat) -> LogMat {
        let mut e = [[LogComplex::zero(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                e[i][j] = self
                    .entry(i, 0)
                    .mul(other.entry(0, j))
                    .add(self.entry(i, 1).mul(other.entry(1, j)));
            }
        }
        LogMat::from_entries(e)
    }
}

/// Closed-form smooth-case mode flow on `[s0, s1]`.
pub fn smooth_flow(n: i64, gamma0: f64, s0: f64, s1: f64) -> Result<LogMat> {
    if s1 < s0 {
        return Err(Error::InvalidArgument(format!(
            "flow interval reversed: [{s0}, {s1}]"
        )));
    }
    if n == 0 {
        return Ok(LogMat::identity());
    }
    let x = n as f64 * gamma0 * (s1 * s1 - s0 * s0) / 2.0;
    let ax = x.abs();
    let u = (-2.0 * ax).exp();
    let c = 0.5 * (1.0 + u); // cosh(x) e^{-|x|}
    let sh = x.signum() * 0.5 * (1.0 - u); // sinh(x) e^{-|x|}
    let m: CMat2 = [
        [Complex64::new(c, 0.0), Complex64::new(0.0, sh / gamma0)],
        [Complex64::new(0.0, -gamma0 * sh), Complex64::new(c, 0.0)],
    ];
    Ok(LogMat { mantissa: m, log: ax })
}

/// Closed-form Airy-case mode flow on `[s0, s1]`, `0 <= s0 <= s1 <
/// eps^{-2/3}`.
pub fn airy_flow(n: i64, gamma0: f64, eps: f64, s0: f64, s1: f64) -> Result<LogMat> {
    if s1 < s0 || s0 < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "flow interval invalid: [{s0}, {s1}]"
        )));
    }
    if s1 >= eps.powf(-2.0 / 3.0) {
        return Err(Error::InvalidArgument(format!(
            "s = {s1} outside the validity window s < eps^(-2/3) = {:.3}",
            eps.powf(-2.0 / 3.0)
        )));
    }
    if n == 0 {
        return Ok(LogMat::identity());
    }
    let scale = AiryScale::new(n, gamma0)?;
    let j = j_rotation();
    let z0 = Complex64::new(s0, 0.0);
    let z1 = Complex64::new(s1, 0.0);
    let a0 = airy_n_pair(&scale, z0);
    let aj0 = airy_n_pair(&scale, j * z0);
    let a1 = airy_n_pair(&scale, z1);
    let aj1 = airy_n_pair(&scale, j * z1);

    let nu = scale.nu();
    let w0 = (j - 1.0) * (nu.powf(-1.0 / 3.0) * AI_ZERO) * (nu.powf(1.0 / 3.0) * AIP_ZERO);
    let c_inv = LogComplex::from_complex(w0);
    let i_n = Complex64::new(0.0, n as f64);
    let eps13 = eps.powf(1.0 / 3.0);

    // v11 = C (j Ai'(j s0) Ai(s1) - Ai'(s0) Ai(j s1))
    let v11 = aj0.aip.scale(j).mul(a1.ai).add(a0.aip.mul(aj1.ai).neg());
    // v21 = C eps^{1/3}/(i n) (j Ai'(j s0) Ai'(s1) - j Ai'(s0) Ai'(j s1))
    let v21 = aj0
        .aip
        .scale(j)
        .mul(a1.aip)
        .add(a0.aip.scale(j).mul(aj1.aip).neg())
        .scale(Complex64::new(eps13, 0.0) / i_n);
    // v12 = C i n / eps^{1/3} (-Ai(j s0) Ai(s1) + Ai(s0) Ai(j s1))
    let v12 = aj0
        .ai
        .mul(a1.ai)
        .neg()
        .add(a0.ai.mul(aj1.ai))
        .scale(i_n / Complex64::new(eps13, 0.0));
    // v22 = -C (Ai(j s0) Ai'(s1) - j Ai(s0) Ai'(j s1))
    let v22 = aj0
        .ai
        .mul(a1.aip)
        .add(a0.ai.scale(j).mul(aj1.aip).neg())
        .neg();

    let e = [
        [v11.div(c_inv), v12.div(c_inv)],
        [v21.div(c_inv), v22.div(c_inv)],
    ];
    Ok(LogMat::from_entries(e))
}

/// Case tag selecting the frozen-coefficient flow family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PropagatorCase {
    /// eta = 1; growth rate `gamma0 tau`.
    Smooth,
    /// eta = 1/2; growth rate `gamma0 tau^{1/2}` and an `eps^{-1/3}` weight.
    Airy { eps: f64 },
}

impl PropagatorCase {
    pub fn eta(&self) -> f64 {
        match self {
            PropagatorCase::Smooth => 1.0,
            PropagatorCase::Airy { .. } => 0.5,
        }
    }

    /// The propagator-size constant: 1 in the smooth case, `eps^{-1/3}` in
    /// the Airy case.
    pub fn flow_constant(&self) -> f64 {
        match self {
            PropagatorCase::Smooth => 1.0,
            PropagatorCase::Airy { eps } => eps.powf(-1.0 / 3.0),
        }
    }

    /// Integral of the reference growth rate `gamma0 tau^eta` over [s0, s1].
    pub fn rate_integral(&self, gamma0: f64, s0: f64, s1: f64) -> f64 {
        let p = self.eta() + 1.0;
        gamma0 * (s1.powf(p) - s0.powf(p)) / p
    }
}

/// Per-mode flow with its growth metadata.
#[derive(Debug, Clone, Copy)]
pub struct ModePropagator {
    pub case: PropagatorCase,
    pub n: i64,
    pub gamma0: f64,
}

impl ModePropagator {
    pub fn new(case: PropagatorCase, n: i64, gamma0: f64) -> Self {
        ModePropagator { case, n, gamma0 }
    }

    pub fn flow(&self, s0: f64, s1: f64) -> Result<LogMat> {
        match self.case {
            PropagatorCase::Smooth => smooth_flow(self.n, self.gamma0, s0, s1),
            PropagatorCase::Airy { eps } => airy_flow(self.n, self.gamma0, eps, s0, s1),
        }
    }

    /// |det - 1| by the stable route: for the Airy flow the determinant
    /// equals the ratio of Wronskians at the two endpoints, which stays O(1);
    /// for the smooth flow cosh^2 - sinh^2 is grouped as a product of
    /// exponentials. A raw-entry determinant is only meaningful when the
    /// growth between the endpoints is small (the information is otherwise
    /// destroyed by cancellation); see `det_residual_raw`.
    pub fn det_residual(&self, s0: f64, s1: f64) -> Result<f64> {
        match self.case {
            PropagatorCase::Smooth => {
                // det = (cosh - |sinh|)(cosh + |sinh|) with cosh - |sinh| =
                // e^{-|x|} identically; in the scaled mantissas the grouped
                // product reduces to c + |sh|, which must equal 1.
                let f = self.flow(s0, s1)?;
                let c = f.mantissa[0][0].re;
                let sh = (f.mantissa[1][0].im / self.gamma0).abs();
                Ok((c + sh - 1.0).abs())
            }
            PropagatorCase::Airy { .. } => {
                let scale = AiryScale::new(if self.n == 0 { 1 } else { self.n }, self.gamma0)?;
                if self.n == 0 {
                    return Ok(0.0);
                }
                let w0 = crate::airy::airy_wronskian(&scale, s0)?;
                let w1 = crate::airy::airy_wronskian(&scale, s1)?;
                Ok(((w1 / w0) - Complex64::new(1.0, 0.0)).norm())
            }
        }
    }

    /// |det - 1| straight from the materialized entries; reliable only when
    /// `norm_log` of the flow is below ~9 (f64 resolves the cancellation).
    pub fn det_residual_raw(&self, s0: f64, s1: f64) -> Result<f64> {
        let f = self.flow(s0, s1)?;
        let m = f.mantissa;
        let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * (2.0 * f.log).exp();
        Ok((det - Complex64::new(1.0, 0.0)).norm())
    }
}

/// Builds the complex coefficient matrix `B(s) = i n A(s)` of the mode ODE
/// for one of the two frozen cases.
pub fn mode_coefficient_matrix(
    case: PropagatorCase,
    n: i64,
    gamma0: f64,
) -> impl Fn(f64) -> CMat2 {
    move |s: f64| -> CMat2 {
        let i_n = Complex64::new(0.0, n as f64);
        let z = Complex64::new(0.0, 0.0);
        match case {
            PropagatorCase::Smooth => [
                [z, i_n * s],
                [-i_n * gamma0 * gamma0 * s, z],
            ],
            PropagatorCase::Airy { eps } => [
                [z, i_n * eps.powf(-1.0 / 3.0)],
                [-i_n * eps.powf(1.0 / 3.0) * gamma0 * gamma0 * s, z],
            ],
        }
    }
}

/// Growth-trace sample: the flow magnitude on `[s0, s1]` in log scale,
/// together with the reference exponent `|n| int gamma^sharp`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthSample {
    pub s0: f64,
    pub s1: f64,
    pub log_norm: f64,
    pub ref_exponent: f64,
}

/// Sampled growth of a mode flow plus fit metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthTrace {
    pub case: PropagatorCase,
    pub n: i64,
    pub gamma0: f64,
    pub samples: Vec<GrowthSample>,
}

impl GrowthTrace {
    /// Samples `log |U_n(s0, s)|` over a uniform s-grid.
    pub fn sample(prop: &ModePropagator, s0: f64, s_max: f64, count: usize) -> Result<Self> {
        let mut samples = Vec::with_capacity(count);
        for k in 0..count {
            let s = s0 + (s_max - s0) * (k as f64 + 1.0) / count as f64;
            let f = prop.flow(s0, s)?;
            samples.push(GrowthSample {
                s0,
                s1: s,
                log_norm: f.norm_log(),
                ref_exponent: prop.n.unsigned_abs() as f64
                    * prop.case.rate_integral(prop.gamma0, s0, s),
            });
        }
        Ok(GrowthTrace { case: prop.case, n: prop.n, gamma0: prop.gamma0, samples })
    }
}

/// Envelope fit `log|U| = log C + p log s + rate * ref_exponent`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub log_c: f64,
    pub c: f64,
    pub prefactor_power: f64,
    pub rate: f64,
}

/// Least-squares fit of the growth envelope. Requires at least 20 samples
/// beyond s = 2.
pub fn growth_envelope(trace: &GrowthTrace) -> Result<EnvelopeFit> {
    let usable: Vec<&GrowthSample> =
        trace.samples.iter().filter(|g| g.s1 > 2.0 && g.log_norm.is_finite()).collect();
    if usable.len() < 20 {
        return Err(Error::DegenerateFit(format!(
            "need >= 20 samples beyond s = 2, got {}",
            usable.len()
        )));
    }
    // Normal equations for [1, ln s, ref_exponent].
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for g in &usable {
        let row = [1.0, g.s1.ln(), g.ref_exponent];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * g.log_norm;
        }
    }
    let sol = solve3(ata, atb).ok_or_else(|| {
        Error::DegenerateFit("singular normal equations in the envelope fit".into())
    })?;
    Ok(EnvelopeFit { log_c: sol[0], c: sol[0].exp(), prefactor_power: sol[1], rate: sol[2] })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let mut piv = col;
        for r in col + 1..3 {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 3];
    for r in (0..3).rev() {
        let mut acc = b[r];
        for c in r + 1..3 {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Some(x)
}

/// Polarization vectors (in the normal-form frame) that ride the maximal
/// growth of the flow.
pub fn polarization(case: PropagatorCase, gamma0: f64) -> ([Complex64; 2], [Complex64; 2]) {
    match case {
        PropagatorCase::Smooth => (
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, -gamma0)],
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, gamma0)],
        ),
        PropagatorCase::Airy { eps } => {
            let scale = AiryScale { n: 1, gamma0 };
            let nu = scale.nu();
            let ai0 = nu.powf(-1.0 / 3.0) * AI_ZERO;
            let aip0 = nu.powf(1.0 / 3.0) * AIP_ZERO;
            let j = j_rotation();
            let i = Complex64::new(0.0, 1.0);
            let e13 = eps.powf(1.0 / 3.0);
            (
                [Complex64::new(ai0, 0.0), -i * e13 * j * aip0],
                [Complex64::new(ai0, 0.0), i * e13 * j * aip0],
            )
        }
    }
}

/// The free solution: the flow applied to the small polarized datum carried
/// on modes n = +-1 with amplitude `e^{-M(eps)}`, `M(eps) = eps^{-delta}`.
#[derive(Debug, Clone)]
pub struct FreeSolution {
    pub case: PropagatorCase,
    pub eps: f64,
    pub delta_exp: f64,
    pub gamma0: f64,
    /// log of the datum amplitude: -M(eps).
    pub log_amplitude: f64,
    pub e_plus: [Complex64; 2],
    pub e_minus: [Complex64; 2],
    pub s_grid: Vec<f64>,
    /// Mode +1 coefficient vectors per grid point, amplitude excluded.
    pub mode_plus: Vec<[LogComplex; 2]>,
    /// Mode -1 coefficients (the conjugates, stored for direct use).
    pub mode_minus: Vec<[LogComplex; 2]>,
    pub theta_grid: Vec<f64>,
    /// Real sampled values f(s, theta), amplitude included when finite.
    pub values: Vec<Vec<[f64; 2]>>,
}

/// Builds the free solution on the given grids.
pub fn free_solution(
    case: PropagatorCase,
    gamma0: f64,
    eps: f64,
    delta_exp: f64,
    s_grid: &[f64],
    theta_grid: &[f64],
) -> Result<FreeSolution> {
    if let PropagatorCase::Airy { eps: e } = case {
        let s_lim = e.powf(-2.0 / 3.0);
        if s_grid.iter().any(|&s| s >= s_lim) {
            return Err(Error::InvalidArgument(format!(
                "s-grid reaches {} >= eps^(-2/3) = {s_lim:.3}",
                s_grid.last().copied().unwrap_or(0.0)
            )));
        }
    }
    let (e_plus, e_minus) = polarization(case, gamma0);
    // Fourier coefficients of the real datum: h_{+1} = (e_plus + conj(e_minus))/2.
    let h_plus = [
        0.5 * (e_plus[0] + e_minus[0].conj()),
        0.5 * (e_plus[1] + e_minus[1].conj()),
    ];
    let h_plus_lc = [LogComplex::from_complex(h_plus[0]), LogComplex::from_complex(h_plus[1])];
    let m_eps = eps.powf(-delta_exp);
    let prop_plus = ModePropagator::new(case, 1, gamma0);
    let prop_minus = ModePropagator::new(case, -1, gamma0);
    let mut mode_plus = Vec::with_capacity(s_grid.len());
    let mut mode_minus = Vec::with_capacity(s_grid.len());
    let mut values = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let f_plus = prop_plus.flow(0.0, s)?.mul_vec(&h_plus_lc);
        let h_minus_lc = [
            LogComplex::from_complex(h_plus[0].conj()),
            LogComplex::from_complex(h_plus[1].conj()),
        ];
        let f_minus = prop_minus.flow(0.0, s)?.mul_vec(&h_minus_lc);
        let mut row = Vec::with_capacity(theta_grid.len());
        for &theta in theta_grid {
            let ph = Complex64::new(0.0, theta).exp();
            let mut val = [0.0f64; 2];
            for comp in 0..2 {
                let v = f_plus[comp]
                    .scale(ph)
                    .add(f_minus[comp].scale(ph.conj()));
                let scaled = LogComplex { mantissa: v.mantissa, log: v.log - m_eps };
                val[comp] = scaled.to_complex().map(|c| c.re).unwrap_or(f64::INFINITY);
            }
            row.push(val);
        }
        values.push(row);
        mode_plus.push(f_plus);
        mode_minus.push(f_minus);
    }
    Ok(FreeSolution {
        case,
        eps,
        delta_exp,
        gamma0,
        log_amplitude: -m_eps,
        e_plus,
        e_minus,
        s_grid: s_grid.to_vec(),
        mode_plus,
        mode_minus,
        theta_grid: theta_grid.to_vec(),
        values,
    })
}

impl FreeSolution {
    /// log of sup over theta of the max-component magnitude at grid index i,
    /// amplitude included.
    pub fn log_sup_norm(&self, i: usize) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for comp in 0..2 {
            let a = self.mode_plus[i][comp].abs_log();
            let b = self.mode_minus[i][comp].abs_log();
            // sup over theta of |a e^{i theta} + b e^{-i theta}| is |a| + |b|
            // attained when the phases align.
            let hi = a.max(b);
            let lo = a.min(b);
            m = m.max(hi + (1.0 + (lo - hi).exp()).ln());
        }
        m + self.log_amplitude
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{cmat_det, cmat_rel_diff, integrate_matrix_ode};

    #[test]
    fn smooth_identity_at_equal_times() {
        for n in [-3i64, 0, 2] {
            let f = smooth_flow(n, 1.5, 0.7, 0.7).unwrap();
            assert!(cmat_rel_diff(&f.to_cmat().unwrap(), &cmat_identity()) < 1e-14);
        }
    }

    #[test]
    fn smooth_closed_form_example() {
        // n=1, gamma0=1, s0=0, s1=1: [[cosh .5, i sinh .5], [-i sinh .5, cosh .5]]
        let f = smooth_flow(1, 1.0, 0.0, 1.0).unwrap().to_cmat().unwrap();
        assert!((f[0][0].re - 1.1276259652).abs() < 1e-9);
        assert!((f[0][1].im - 0.5210953055).abs() < 1e-9);
        assert!((f[1][0].im + 0.5210953055).abs() < 1e-9);
        assert!((f[1][1].re - 1.1276259652).abs() < 1e-9);
    }

    #[test]
    fn smooth_matches_ode_oracle() {
        let n = 3i64;
        let gamma0 = 1.3;
        let rhs = mode_coefficient_matrix(PropagatorCase::Smooth, n, gamma0);
        let oracle = integrate_matrix_ode(&rhs, 0.0, 3.0, 1e-11).unwrap();
        let cf = smooth_flow(n, gamma0, 0.0, 3.0).unwrap().to_cmat().unwrap();
        assert!(cmat_rel_diff(&oracle, &cf) < 1e-8);
    }

    #[test]
    fn airy_identity_at_equal_times() {
        for n in [-2i64, 1, 5] {
            let f = airy_flow(n, 1.0, 1e-3, 2.0, 2.0).unwrap();
            let m = f.to_cmat().unwrap();
            assert!(
                cmat_rel_diff(&m, &cmat_identity()) < 1e-10,
                "airy flow at s0=s1 deviates: {m:?}"
            );
        }
    }

    #[test]
    fn airy_matches_ode_oracle_small_range() {
        let n = 1i64;
        let gamma0 = 1.0;
        let eps: f64 = 1e-3;
        let rhs = mode_coefficient_matrix(PropagatorCase::Airy { eps }, n, gamma0);
        let oracle = integrate_matrix_ode(&rhs, 0.0, 5.0, 1e-11).unwrap();
        let cf = airy_flow(n, gamma0, eps, 0.0, 5.0).unwrap().to_cmat().unwrap();
        assert!(
            cmat_rel_diff(&oracle, &cf) < 1e-6,
            "rel diff {}",
            cmat_rel_diff(&oracle, &cf)
        );
    }

    #[test]
    fn airy_diagonal_entries_real() {
        // The (1,1) and (2,2) entries solve a real ODE with real data.
        let f = airy_flow(2, 1.0, 1e-3, 1.0, 4.0).unwrap();
        let m = f.mantissa;
        assert!(m[0][0].im.abs() < 1e-9 * m[0][0].re.abs());
        assert!(m[1][1].im.abs() < 1e-9 * m[1][1].re.abs());
    }

    #[test]
    fn negative_n_is_conjugate() {
        let fp = airy_flow(2, 1.0, 1e-3, 0.5, 3.0).unwrap();
        let fm = airy_flow(-2, 1.0, 1e-3, 0.5, 3.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let a = fp.mantissa[i][j];
                let b = fm.mantissa[i][j];
                assert!((a.conj() - b).norm() < 1e-9 * a.norm().max(1e-30));
            }
        }
        let sp = smooth_flow(3, 0.7, 0.0, 2.0).unwrap();
        let sm = smooth_flow(-3, 0.7, 0.0, 2.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((sp.mantissa[i][j].conj() - sm.mantissa[i][j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cocycle_identity() {
        let prop = ModePropagator::new(PropagatorCase::Airy { eps: 1e-3 }, 2, 1.0);
        let (s0, tau, s1) = (0.5, 2.0, 4.5);
        let whole = prop.flow(s0, s1).unwrap();
        let composed = prop.flow(tau, s1).unwrap().mul(&prop.flow(s0, tau).unwrap());
        let d = (whole.norm_log() - composed.norm_log()).abs();
        assert!(d < 1e-8, "cocycle log mismatch {d}");
        let w = whole.to_cmat().unwrap();
        let c = composed.to_cmat().unwrap();
        assert!(cmat_rel_diff(&w, &c) < 1e-8);
    }

    #[test]
    fn determinant_residuals() {
        let prop = ModePropagator::new(PropagatorCase::Airy { eps: 1e-3 }, 3, 1.0);
        assert!(prop.det_residual(0.0, 8.0).unwrap() < 1e-8);
        // Raw det on a short window where cancellation is resolvable.
        assert!(prop.det_residual_raw(2.0, 2.3).unwrap() < 1e-8);
        let sprop = ModePropagator::new(PropagatorCase::Smooth, 2, 1.0);
        assert!(sprop.det_residual(0.0, 4.0).unwrap() < 1e-12);
        assert!(sprop.det_residual_raw(1.0, 1.4).unwrap() < 1e-10);
    }

    #[test]
    fn duhamel_drift_inflates_growth_mildly() {
        // Adding the eps^{1/2}-scaled basis-drift term inflates the growth
        // constant by at most e^{sqrt(eps) c s}.
        let n = 2i64;
        let gamma0 = 1.0;
        let eps: f64 = 1e-2;
        let c_drift = 0.8;
        let frozen = mode_coefficient_matrix(PropagatorCase::Smooth, n, gamma0);
        let drifted = |s: f64| -> CMat2 {
            let mut b = frozen(s);
            // constant drift block of magnitude c_drift, eps^{1/2}-scaled
            b[0][1] += Complex64::new(eps.sqrt() * c_drift, 0.0);
            b[1][0] += Complex64::new(-eps.sqrt() * c_drift, 0.0);
            b
        };
        let s_end = 2.5;
        let base = integrate_matrix_ode(&frozen, 0.0, s_end, 1e-10).unwrap();
        let pert = integrate_matrix_ode(&drifted, 0.0, s_end, 1e-10).unwrap();
        let norm = |m: &CMat2| {
            m.iter().flatten().map(|e| e.norm()).fold(0.0f64, f64::max)
        };
        let inflation = norm(&pert) / norm(&base);
        let bound = (eps.sqrt() * c_drift * s_end).exp();
        assert!(
            inflation <= bound * 1.05,
            "inflation {inflation} exceeds Gronwall bound {bound}"
        );
    }

    #[test]
    fn eigen_relation_of_airy_flow() {
        // Flow applied to (Ai_1(0), -i eps^{1/3} j Ai_1'(0)) yields the same
        // expression evaluated at j s.
        let gamma0 = 1.0;
        let eps: f64 = 1e-3;
        let scale = AiryScale::new(1, gamma0).unwrap();
        let j = j_rotation();
        let i = Complex64::new(0.0, 1.0);
        let e13 = eps.powf(1.0 / 3.0);
        let nu = scale.nu();
        let v0 = [
            LogComplex::from_complex(Complex64::new(nu.powf(-1.0 / 3.0) * AI_ZERO, 0.0)),
            LogComplex::from_complex(-i * e13 * j * nu.powf(1.0 / 3.0) * AIP_ZERO),
        ];
        for &s in &[1.0, 3.0, 6.0] {
            let f = airy_flow(1, gamma0, eps, 0.0, s).unwrap();
            let got = f.mul_vec(&v0);
            let pair = airy_n_pair(&scale, j * s);
            let want = [pair.ai, pair.aip.scale(-i * e13 * j)];
            for comp in 0..2 {
                let g = got[comp].to_complex().unwrap();
                let w = want[comp].to_complex().unwrap();
                let rel = (g - w).norm() / w.norm();
                assert!(rel < 1e-8, "eigen relation off by {rel:e} at s={s}, comp {comp}");
            }
        }
    }

    #[test]
    fn envelope_fit_recovers_synthetic_model() {
        // Planted (C, p, rate) must be recovered exactly by the fit.
        let mut trace = GrowthTrace {
            case: PropagatorCase::Smooth,
            n: 2,
            gamma0: 1.0,
            samples: Vec::new(),
        };
        let (log_c, p, rate) = (0.35, -0.25, 0.97);
        for k in 0..40 {
            let s = 2.1 + 0.25 * k as f64;
            let ref_exp = 2.0 * 1.0 * s * s / 2.0;
            trace.samples.push(GrowthSample {
                s0: 0.0,
                s1: s,
                log_norm: log_c + p * s.ln() + rate * ref_exp,
                ref_exponent: ref_exp,
            });
        }
        let fit = growth_envelope(&trace).unwrap();
        assert!((fit.log_c - log_c).abs() < 1e-9);
        assert!((fit.prefactor_power - p).abs() < 1e-9);
        assert!((fit.rate - rate).abs() < 1e-10);
    }

    #[test]
    fn smooth_growth_rate_fits_to_one() {
        let prop = ModePropagator::new(PropagatorCase::Smooth, 2, 1.0);
        let trace = GrowthTrace::sample(&prop, 0.0, 5.0, 50).unwrap();
        let fit = growth_envelope(&trace).unwrap();
        assert!((fit.rate - 1.0).abs() < 0.01, "rate {}", fit.rate);
        assert!(fit.prefactor_power.abs() < 0.1, "p {}", fit.prefactor_power);
    }

    #[test]
    fn free_solution_smooth_growth() {
        // log sup |f(s)| - gamma0 s^2/2 stays within +-0.1 of its value at
        // s=1 (exact eigen-relation, constant polarization norm).
        let s_grid: Vec<f64> = (0..40).map(|k| 0.1 * k as f64).collect();
        let theta_grid: Vec<f64> = (0..16).map(|k| k as f64 * std::f64::consts::PI / 8.0).collect();
        let f = free_solution(PropagatorCase::Smooth, 1.0, 1e-4, 0.2, &s_grid, &theta_grid).unwrap();
        assert!((f.log_amplitude + 1e-4f64.powf(-0.2)).abs() < 1e-12);
        let centred: Vec<f64> = (10..40)
            .map(|i| f.log_sup_norm(i) - 0.5 * s_grid[i] * s_grid[i])
            .collect();
        let first = centred[0];
        for v in &centred {
            assert!((v - first).abs() < 0.1, "smooth free solution drift {}", v - first);
        }
        // At s = 0 the sup norm is the datum size times the polarization.
        let at0 = f.log_sup_norm(0) - f.log_amplitude;
        // sup_theta of |2 Re(h e^{i theta})| per component: max comp has
        // |h| = 1 (first component), so sup = 2... the coefficient is
        // h_{+1} = e_plus, |first comp| = 1 and both modes add: log(2).
        assert!((at0 - 2.0f64.ln()).abs() < 1e-9, "datum norm off: {at0}");
    }
}
