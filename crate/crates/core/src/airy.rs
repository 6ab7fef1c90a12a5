//! Scaled Airy functions on the real and j-rotated rays, their derivatives,
//! Wronskian and asymptotic envelopes, with a slow contour-integral
//! quadrature as an independent oracle.
//!
//! The scaled function is defined by the contour integral
//! `Ai_n(z) = (2 pi)^{-1} int_{Im w = a} exp(nu (i w^3/3 + i w z)) dw` with
//! `nu = |n| gamma0`, which reduces to the standard Airy function through
//! `Ai_n(z) = nu^{-1/3} Ai(mu z)` with `mu = nu^{2/3}`.
//!
//! Evaluation strategy for the standard function:
//! - Maclaurin series near the origin;
//! - asymptotic expansion far out (dominant branch: on growing rays the
//!   recessive exponential is dropped, which is accurate to `e^{-2|Re zeta|}`);
//! - across the middle band, high-order Taylor stepping of `y'' = z y` along
//!   the ray, anchored on the side where the value is known accurately and
//!   stepped in the direction in which `|Ai|` grows (the stable direction).
//!
//! Values are carried as (mantissa, log-scale) pairs so that growth like
//! `exp(|n| gamma0 (2/3) s^{3/2})` never overflows.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Ai(0) = 3^{-2/3} / Gamma(2/3).
pub const AI_ZERO: f64 = 0.355_028_053_887_817_24;
/// Ai'(0) = -3^{-1/3} / Gamma(1/3).
pub const AIP_ZERO: f64 = -0.258_819_403_792_806_8;

/// The rotation j = e^{2 i pi / 3}.
pub fn j_rotation() -> Complex64 {
    Complex64::new(-0.5, 0.5 * 3.0f64.sqrt())
}

/// Documented switch radius between the series and the asymptotic expansion
/// on growing rays (cross-validated in the module tests).
pub const SERIES_ASYMPTOTIC_SWITCH: f64 = 6.0;

/// Inner radius of the Maclaurin region on decaying rays, where leading-digit
/// cancellation limits the series.
const MACLAURIN_DECAY_RADIUS: f64 = 4.0;
/// Outer edge of the Taylor-stepping band on decaying rays.
const STEPPING_OUTER_RADIUS: f64 = 7.5;
/// Anchor radius for backward stepping (asymptotics are fully converged).
const STEPPING_ANCHOR_RADIUS: f64 = 12.0;

/// A complex value carried as `mantissa * exp(log)`; overflow is signalled,
/// never silently produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogComplex {
    pub mantissa: Complex64,
    pub log: f64,
}

impl LogComplex {
    pub fn zero() -> Self {
        LogComplex { mantissa: Complex64::new(0.0, 0.0), log: f64::NEG_INFINITY }
    }

    pub fn from_complex(v: Complex64) -> Self {
        LogComplex { mantissa: v, log: 0.0 }.normalized()
    }

    pub fn from_real(v: f64) -> Self {
        Self::from_complex(Complex64::new(v, 0.0))
    }

    pub fn normalized(self) -> Self {
        let m = self.mantissa.norm();
        if m == 0.0 || !m.is_finite() {
            if m == 0.0 {
                return Self::zero();
            }
            return self;
        }
        LogComplex { mantissa: self.mantissa / m, log: self.log + m.ln() }
    }

    pub fn mul(self, other: Self) -> Self {
        LogComplex {
            mantissa: self.mantissa * other.mantissa,
            log: self.log + other.log,
        }
        .normalized()
    }

    pub fn div(self, other: Self) -> Self {
        LogComplex {
            mantissa: self.mantissa / other.mantissa,
            log: self.log - other.log,
        }
        .normalized()
    }

    pub fn scale(self, c: Complex64) -> Self {
        LogComplex { mantissa: self.mantissa * c, log: self.log }.normalized()
    }

    pub fn add(self, other: Self) -> Self {
        if other.mantissa.norm() == 0.0 {
            return self;
        }
        if self.mantissa.norm() == 0.0 {
            return other;
        }
        let (hi, lo) = if self.log >= other.log { (self, other) } else { (other, self) };
        let d = lo.log - hi.log;
        if d < -745.0 {
            return hi;
        }
        LogComplex { mantissa: hi.mantissa + lo.mantissa * d.exp(), log: hi.log }.normalized()
    }

    pub fn neg(self) -> Self {
        LogComplex { mantissa: -self.mantissa, log: self.log }
    }

    pub fn abs_log(self) -> f64 {
        self.log + self.mantissa.norm().ln()
    }

    /// Materializes the value; errors when the magnitude overflows f64.
    pub fn to_complex(self) -> Result<Complex64> {
        if self.mantissa.norm() == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        if self.log > 700.0 {
            return Err(Error::InvalidArgument(format!(
                "value overflows f64 (log-scale {:.3})",
                self.log
            )));
        }
        Ok(self.mantissa * self.log.exp())
    }

    /// Materializes without the overflow guard (saturates to inf).
    pub fn to_complex_lossy(self) -> Complex64 {
        self.mantissa * self.log.exp()
    }
}

/// Value and derivative of the standard Airy function.
#[derive(Debug, Clone, Copy)]
pub struct AiryPair {
    pub ai: LogComplex,
    pub aip: LogComplex,
}

fn maclaurin(z: Complex64) -> AiryPair {
    // Ai = Ai(0) f + Ai'(0) g with f, g the standard ODE basis.
    let z3 = z * z * z;
    let safe_z = if z.norm() > 0.0 { z } else { Complex64::new(1.0, 0.0) };
    let mut f = Complex64::new(1.0, 0.0);
    let mut fp = Complex64::new(0.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    for k in 0..80 {
        let kf = k as f64;
        term *= z3 / ((3.0 * kf + 2.0) * (3.0 * kf + 3.0));
        f += term;
        // d/dz of z^{3k+3} contributes (3k+3) z^{3k+2}
        fp += term * (3.0 * kf + 3.0) / safe_z;
        if term.norm() < 1e-18 * f.norm() {
            break;
        }
    }
    let mut g = z;
    let mut gp = Complex64::new(1.0, 0.0);
    let mut termg = z;
    for k in 0..80 {
        let kf = k as f64;
        termg *= z3 / ((3.0 * kf + 3.0) * (3.0 * kf + 4.0));
        g += termg;
        gp += termg * (3.0 * kf + 4.0) / safe_z;
        if termg.norm() < 1e-18 * g.norm().max(1e-300) {
            break;
        }
    }
    AiryPair {
        ai: LogComplex::from_complex(AI_ZERO * f + AIP_ZERO * g),
        aip: LogComplex::from_complex(AI_ZERO * fp + AIP_ZERO * gp),
    }
}

fn asymptotic(z: Complex64) -> AiryPair {
    // Dominant-branch expansion: Ai(z) ~ e^{-zeta} / (2 sqrt(pi) z^{1/4})
    // * sum (-1)^k u_k zeta^{-k}, zeta = (2/3) z^{3/2}.
    let zeta = z.powf(1.5) * (2.0 / 3.0);
    let mut u = 1.0f64;
    let mut sum_ai = Complex64::new(1.0, 0.0);
    let mut sum_aip = Complex64::new(1.0, 0.0);
    let mut term_prev = 1.0f64;
    for k in 1..40 {
        let kf = k as f64;
        u *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0)
            / (216.0 * kf * (2.0 * kf - 1.0));
        let v = u * (6.0 * kf + 1.0) / (1.0 - 6.0 * kf);
        let zk = zeta.powi(k as i32);
        let mag = u / zk.norm();
        if mag > term_prev {
            break; // divergent tail reached
        }
        term_prev = mag;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum_ai += sign * u / zk;
        sum_aip += sign * v / zk;
        if mag < 1e-18 {
            break;
        }
    }
    let quarter = z.powf(0.25);
    let front = 1.0 / (2.0 * PI.sqrt());
    let phase = Complex64::new(0.0, -zeta.im).exp();
    let ai = LogComplex {
        mantissa: front * phase * sum_ai / quarter,
        log: -zeta.re,
    }
    .normalized();
    let aip = LogComplex {
        mantissa: -front * phase * sum_aip * quarter,
        log: -zeta.re,
    }
    .normalized();
    AiryPair { ai, aip }
}

/// One Taylor step of y'' = z y from center `a` by `h`, order 26.
fn taylor_step(y: Complex64, yp: Complex64, a: Complex64, h: Complex64) -> (Complex64, Complex64) {
    const ORDER: usize = 26;
    let mut c = [Complex64::new(0.0, 0.0); ORDER + 1];
    c[0] = y;
    c[1] = yp;
    for m in 0..ORDER - 1 {
        let prev = if m == 0 { Complex64::new(0.0, 0.0) } else { c[m - 1] };
        c[m + 2] = (a * c[m] + prev) / (((m + 1) * (m + 2)) as f64);
    }
    let mut val = Complex64::new(0.0, 0.0);
    let mut der = Complex64::new(0.0, 0.0);
    for m in (0..=ORDER).rev() {
        val = val * h + c[m];
        if m >= 1 {
            der = der * h + c[m] * m as f64;
        }
    }
    (val, der)
}

/// Taylor-steps an anchored pair from `|z| = r0` to `|z| = r1` along the ray
/// through `dir` (unit). Stable when |Ai| grows along the direction of
/// travel.
fn step_along_ray(anchor: AiryPair, dir: Complex64, r0: f64, r1: f64) -> AiryPair {
    let nsteps = ((r1 - r0).abs() / 0.4).ceil().max(1.0) as usize;
    let h = dir * ((r1 - r0) / nsteps as f64);
    let mut log = anchor.ai.log.max(anchor.aip.log);
    let mut y = anchor.ai.mantissa * (anchor.ai.log - log).exp();
    let mut yp = anchor.aip.mantissa * (anchor.aip.log - log).exp();
    let mut a = dir * r0;
    for _ in 0..nsteps {
        let (y2, yp2) = taylor_step(y, yp, a, h);
        y = y2;
        yp = yp2;
        a += h;
        let m = y.norm().max(yp.norm());
        if m > 0.0 {
            y /= m;
            yp /= m;
            log += m.ln();
        }
    }
    AiryPair {
        ai: LogComplex { mantissa: y, log }.normalized(),
        aip: LogComplex { mantissa: yp, log }.normalized(),
    }
}

/// Standard Airy function Ai and its derivative for complex argument.
///
/// Relative accuracy is about 1e-10 on the real axis and 1e-8 on the j-ray
/// within |z| <= 40; beyond the switch radius the asymptotics only get
/// better, so larger arguments are allowed (values are log-scaled).
pub fn airy_std(z: Complex64) -> AiryPair {
    let r = z.norm();
    if r == 0.0 {
        return AiryPair {
            ai: LogComplex::from_real(AI_ZERO),
            aip: LogComplex::from_real(AIP_ZERO),
        };
    }
    // Decay sector |arg z| < pi/3 (Re zeta > 0): the series loses leading
    // digits and forward continuation is unstable, so anchor far out and
    // step inward.
    let decaying = z.arg().abs() < PI / 3.0 - 1e-9;
    if decaying {
        if r <= MACLAURIN_DECAY_RADIUS {
            maclaurin(z)
        } else if r >= STEPPING_OUTER_RADIUS {
            asymptotic(z)
        } else {
            let dir = z / r;
            let anchor = asymptotic(dir * STEPPING_ANCHOR_RADIUS);
            step_along_ray(anchor, dir, STEPPING_ANCHOR_RADIUS, r)
        }
    } else if r <= SERIES_ASYMPTOTIC_SWITCH {
        maclaurin(z)
    } else {
        asymptotic(z)
    }
}

/// Mode index and growth rate defining the scaled Airy function.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AiryScale {
    pub n: i64,
    pub gamma0: f64,
}

impl AiryScale {
    pub fn new(n: i64, gamma0: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("mode index must be nonzero".into()));
        }
        if !(gamma0 > 0.0) {
            return Err(Error::InvalidArgument("growth rate must be positive".into()));
        }
        Ok(AiryScale { n, gamma0 })
    }

    /// nu = |n| gamma0.
    pub fn nu(&self) -> f64 {
        self.n.unsigned_abs() as f64 * self.gamma0
    }

    /// mu = nu^{2/3}: the argument scale.
    pub fn mu(&self) -> f64 {
        self.nu().powf(2.0 / 3.0)
    }
}

/// Scaled Airy function `Ai_n(z) = nu^{-1/3} Ai(mu z)`.
pub fn airy_n(scale: &AiryScale, z: Complex64) -> LogComplex {
    let pair = airy_std(scale.mu() * z);
    pair.ai.scale(Complex64::new(scale.nu().powf(-1.0 / 3.0), 0.0))
}

/// Derivative of the scaled Airy function: `nu^{1/3} Ai'(mu z)`.
pub fn airy_n_deriv(scale: &AiryScale, z: Complex64) -> LogComplex {
    let pair = airy_std(scale.mu() * z);
    pair.aip.scale(Complex64::new(scale.nu().powf(1.0 / 3.0), 0.0))
}

/// Both value and derivative (one evaluation of the standard pair).
pub fn airy_n_pair(scale: &AiryScale, z: Complex64) -> AiryPair {
    let pair = airy_std(scale.mu() * z);
    AiryPair {
        ai: pair.ai.scale(Complex64::new(scale.nu().powf(-1.0 / 3.0), 0.0)),
        aip: pair.aip.scale(Complex64::new(scale.nu().powf(1.0 / 3.0), 0.0)),
    }
}

/// `Ai_n(s) j Ai_n'(js) - Ai_n(js) Ai_n'(s)`; independent of s, equal to
/// `(j - 1) Ai_n(0) Ai_n'(0)`.
pub fn airy_wronskian(scale: &AiryScale, s: f64) -> Result<Complex64> {
    if s < 0.0 {
        return Err(Error::InvalidArgument("wronskian argument must be nonnegative".into()));
    }
    let j = j_rotation();
    let zs = Complex64::new(s, 0.0);
    let at_s = airy_n_pair(scale, zs);
    let at_js = airy_n_pair(scale, j * zs);
    let w = at_s
        .ai
        .mul(at_js.aip)
        .scale(j)
        .add(at_js.ai.mul(at_s.aip).neg());
    w.to_complex()
}

/// Reference value of the Wronskian: `(j - 1) Ai_n(0) Ai_n'(0)`.
pub fn airy_wronskian_reference(scale: &AiryScale) -> Complex64 {
    let nu = scale.nu();
    (j_rotation() - 1.0) * (nu.powf(-1.0 / 3.0) * AI_ZERO) * (nu.powf(1.0 / 3.0) * AIP_ZERO)
}

/// The four envelope ratios of the asymptotic estimates:
/// `|Ai_n(s)|  / (s^{-1/4} |n|^{-1/2} e^{-nu (2/3) s^{3/2}})`,
/// `|Ai_n(js)| / (s^{-1/4} |n|^{-1/2} e^{+nu (2/3) s^{3/2}})`,
/// and the derivative analogues with envelope `s^{1/4} |n|^{1/2}`.
/// Each converges to an s-independent constant as s grows.
pub fn airy_asymptotic_ratio(scale: &AiryScale, s: f64) -> Result<[f64; 4]> {
    if s < 1.0 {
        return Err(Error::InvalidArgument("envelope ratios need s >= 1".into()));
    }
    let j = j_rotation();
    let zs = Complex64::new(s, 0.0);
    let at_s = airy_n_pair(scale, zs);
    let at_js = airy_n_pair(scale, j * zs);
    let n_abs = scale.n.unsigned_abs() as f64;
    let phase = scale.nu() * (2.0 / 3.0) * s.powf(1.5);
    let log_env_val = -0.25 * s.ln() - 0.5 * n_abs.ln();
    let log_env_der = 0.25 * s.ln() + 0.5 * n_abs.ln();
    Ok([
        (at_s.ai.abs_log() - (log_env_val - phase)).exp(),
        (at_js.ai.abs_log() - (log_env_val + phase)).exp(),
        (at_s.aip.abs_log() - (log_env_der - phase)).exp(),
        (at_js.aip.abs_log() - (log_env_der + phase)).exp(),
    ])
}

/// Slow contour-integral oracle: trapezoid on the horizontal line
/// `Im w = a`, independent of the series/asymptotic evaluation path.
pub fn airy_n_quadrature(scale: &AiryScale, z: Complex64, a: f64, n_points: usize) -> LogComplex {
    let nu = scale.nu();
    let exponent = |w: Complex64| -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        nu * (i * w * w * w / 3.0 + i * w * z)
    };
    let e0 = exponent(Complex64::new(0.0, a));
    // Gaussian half-width from the xi^2 coefficient (nu a), padded for the
    // linear drift a general complex z introduces.
    let drift = z.norm() / (2.0 * a).max(1e-6);
    let half_width = (42.0 / (nu * a)).sqrt() + drift + 2.0;
    let h = 2.0 * half_width / n_points as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..=n_points {
        let xi = -half_width + k as f64 * h;
        let w = Complex64::new(xi, a);
        let weight = if k == 0 || k == n_points { 0.5 } else { 1.0 };
        let de = exponent(w) - e0;
        if de.re > 300.0 {
            // Integrand explodes for this contour; the caller picked a poor a.
            return LogComplex { mantissa: Complex64::new(f64::NAN, f64::NAN), log: 0.0 };
        }
        acc += weight * de.exp();
    }
    LogComplex {
        mantissa: acc * h / (2.0 * PI) * Complex64::new(0.0, e0.im).exp(),
        log: e0.re,
    }
    .normalized()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_origin() {
        let p = airy_std(Complex64::new(0.0, 0.0));
        assert!((p.ai.to_complex().unwrap().re - 0.3550280539).abs() < 1e-9);
        assert!((p.aip.to_complex().unwrap().re + 0.2588194038).abs() < 1e-9);
    }

    #[test]
    fn known_real_values() {
        // Reference values computed independently with mpmath at 20 digits.
        let p = airy_std(Complex64::new(1.0, 0.0));
        assert!((p.ai.to_complex().unwrap().re - 0.135_292_416_312_881_42).abs() < 1e-13);
        assert!((p.aip.to_complex().unwrap().re + 0.159_147_441_296_793_21).abs() < 1e-13);
        let p5 = airy_std(Complex64::new(5.0, 0.0));
        let v5 = p5.ai.to_complex().unwrap().re;
        assert!(
            (v5 - 1.083_444_281_360_744_2e-4).abs() / 1.08e-4 < 1e-10,
            "Ai(5) = {v5:e}"
        );
        let p10 = airy_std(Complex64::new(10.0, 0.0));
        let v10 = p10.ai.to_complex().unwrap().re;
        assert!(
            (v10 - 1.104_753_255_289_868_6e-10).abs() / 1.1e-10 < 1e-9,
            "Ai(10) = {v10:e}"
        );
    }

    #[test]
    fn switching_regions_consistent() {
        // Cross-validate the evaluation paths across their seams.
        for &r in &[3.9, 4.1, 7.4, 7.6] {
            let z = Complex64::new(r, 0.0);
            let direct = airy_std(z);
            let anchor = asymptotic(Complex64::new(STEPPING_ANCHOR_RADIUS, 0.0));
            let stepped =
                step_along_ray(anchor, Complex64::new(1.0, 0.0), STEPPING_ANCHOR_RADIUS, r);
            let rel = (direct.ai.abs_log() - stepped.ai.abs_log()).abs();
            assert!(rel < 1e-9, "seam mismatch at {r}: {rel:e}");
        }
        let j = j_rotation();
        for &r in &[5.8, 6.2] {
            let z = j * r;
            let series = maclaurin(z);
            let asym = asymptotic(z);
            let rel = (series.ai.abs_log() - asym.ai.abs_log())
                .abs()
                .max((series.aip.abs_log() - asym.aip.abs_log()).abs());
            assert!(rel < 1e-7, "j-ray seam at {r}: {rel:e}");
        }
    }

    #[test]
    fn ode_residual_by_finite_differences() {
        let scale = AiryScale::new(3, 1.0).unwrap();
        let z = Complex64::new(2.0, 0.0);
        let h = 1e-4;
        let yp_plus = airy_n_deriv(&scale, z + h).to_complex().unwrap();
        let yp_minus = airy_n_deriv(&scale, z - h).to_complex().unwrap();
        let ypp = (yp_plus - yp_minus) / (2.0 * h);
        let y = airy_n(&scale, z).to_complex().unwrap();
        let rhs = scale.nu().powi(2) * z * y;
        let rel = (ypp - rhs).norm() / rhs.norm().max(1e-300);
        assert!(rel < 1e-7, "ODE residual {rel:e}");
    }

    #[test]
    fn wronskian_constancy() {
        for &(n, gamma0) in &[(1i64, 1.0), (-2, 1.0), (4, 0.5), (-4, 2.0)] {
            let scale = AiryScale::new(n, gamma0).unwrap();
            let w0 = airy_wronskian_reference(&scale);
            for &s in &[0.0, 0.7, 1.0, 3.0, 7.0, 10.0] {
                let w = airy_wronskian(&scale, s).unwrap();
                let rel = (w - w0).norm() / w0.norm();
                assert!(
                    rel < 1e-8,
                    "wronskian drift {rel:e} at n={n}, gamma0={gamma0}, s={s}"
                );
            }
        }
    }

    #[test]
    fn quadrature_oracle_agrees() {
        // Standard function at z = 5 (n-scaling removed), steepest-descent
        // contour height sqrt(5).
        let scale = AiryScale::new(1, 1.0).unwrap();
        let q = airy_n_quadrature(&scale, Complex64::new(5.0, 0.0), 5.0f64.sqrt(), 6000);
        let direct = airy_n(&scale, Complex64::new(5.0, 0.0));
        let rel = (q.to_complex().unwrap() - direct.to_complex().unwrap()).norm()
            / direct.to_complex().unwrap().norm();
        assert!(rel < 1e-9, "quadrature mismatch {rel:e}");
    }

    #[test]
    fn quadrature_a_independence() {
        let scale = AiryScale::new(1, 1.0).unwrap();
        let z = Complex64::new(1.0, 0.0);
        let q1 = airy_n_quadrature(&scale, z, 1.0, 8000).to_complex().unwrap();
        let q2 = airy_n_quadrature(&scale, z, 2.0, 8000).to_complex().unwrap();
        assert!((q1 - q2).norm() / q1.norm() < 1e-9);
        let direct = airy_n(&scale, z).to_complex().unwrap();
        assert!((q1 - direct).norm() / direct.norm() < 1e-9);
    }

    #[test]
    fn scaling_at_origin() {
        let scale = AiryScale::new(1, 1.0).unwrap();
        let v = airy_n(&scale, Complex64::new(0.0, 0.0)).to_complex().unwrap();
        assert!((v.re - AI_ZERO).abs() < 1e-14);
    }

    #[test]
    fn envelope_ratios_settle() {
        let scale = AiryScale::new(1, 1.0).unwrap();
        let r20 = airy_asymptotic_ratio(&scale, 20.0).unwrap();
        let r30 = airy_asymptotic_ratio(&scale, 30.0).unwrap();
        for i in 0..4 {
            let drift = (r20[i] / r30[i] - 1.0).abs();
            assert!(drift < 0.05, "ratio {i} drifts by {drift}");
            assert!(r20[i].is_finite() && r20[i] > 0.0);
        }
    }

    #[test]
    fn growth_band_monotonicity() {
        // |Ai_n(s)| e^{+nu(2/3)s^{3/2}} s^{1/4} and the j-ray analogue stay
        // within a factor-2 band on [2, 30].
        let scale = AiryScale::new(2, 1.0).unwrap();
        let j = j_rotation();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut lo_j = f64::INFINITY;
        let mut hi_j = f64::NEG_INFINITY;
        let mut s: f64 = 2.0;
        while s <= 30.0 {
            let phase = scale.nu() * (2.0 / 3.0) * s.powf(1.5);
            let v = airy_n(&scale, Complex64::new(s, 0.0)).abs_log() + phase + 0.25 * s.ln();
            let vj = airy_n(&scale, j * s).abs_log() - phase + 0.25 * s.ln();
            lo = lo.min(v);
            hi = hi.max(v);
            lo_j = lo_j.min(vj);
            hi_j = hi_j.max(vj);
            s += 0.5;
        }
        assert!(hi - lo < 2.0f64.ln(), "real-ray band {:.3}", hi - lo);
        assert!(hi_j - lo_j < 2.0f64.ln(), "j-ray band {:.3}", hi_j - lo_j);
    }
}
