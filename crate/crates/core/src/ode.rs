//! Adaptive matrix ODE integration: the independent oracle cross-validating
//! the closed-form propagators.
//!
//! Embedded Dormand-Prince 5(4) on `M'(s) = B(s) M(s)` with complex 2x2
//! state, relative/absolute local error control and a PI-free step
//! controller (plain 0.9 safety with growth clamps).

use crate::error::{Error, Result};
use num_complex::Complex64;

pub type CMat2 = [[Complex64; 2]; 2];

pub fn cmat_zero() -> CMat2 {
    let z = Complex64::new(0.0, 0.0);
    [[z, z], [z, z]]
}

pub fn cmat_identity() -> CMat2 {
    let mut m = cmat_zero();
    m[0][0] = Complex64::new(1.0, 0.0);
    m[1][1] = Complex64::new(1.0, 0.0);
    m
}

pub fn cmat_mul(a: &CMat2, b: &CMat2) -> CMat2 {
    let mut out = cmat_zero();
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn cmat_mul_vec(a: &CMat2, v: &[Complex64; 2]) -> [Complex64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

pub fn cmat_scale(a: &CMat2, c: Complex64) -> CMat2 {
    let mut out = *a;
    for row in out.iter_mut() {
        for e in row.iter_mut() {
            *e *= c;
        }
    }
    out
}

pub fn cmat_add(a: &CMat2, b: &CMat2) -> CMat2 {
    let mut out = *a;
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] += b[i][j];
        }
    }
    out
}

pub fn cmat_sub(a: &CMat2, b: &CMat2) -> CMat2 {
    cmat_add(a, &cmat_scale(b, Complex64::new(-1.0, 0.0)))
}

/// Max-absolute-entry norm.
pub fn cmat_norm(a: &CMat2) -> f64 {
    let mut m = 0.0f64;
    for row in a {
        for e in row {
            m = m.max(e.norm());
        }
    }
    m
}

pub fn cmat_det(a: &CMat2) -> Complex64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

/// Relative difference of two matrices in the max-entry norm.
pub fn cmat_rel_diff(a: &CMat2, b: &CMat2) -> f64 {
    cmat_norm(&cmat_sub(a, b)) / cmat_norm(a).max(cmat_norm(b)).max(1e-300)
}

// Dormand-Prince coefficients.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `M' = B(s) M` from `s0` to `s1` with `M(s0) = Id`, local error
/// per step below `tol` relative to the current solution magnitude.
pub fn integrate_matrix_ode(
    rhs: &dyn Fn(f64) -> CMat2,
    s0: f64,
    s1: f64,
    tol: f64,
) -> Result<CMat2> {
    integrate_matrix_ode_sampled(rhs, s0, s1, tol, &mut |_, _| {})
}

/// As `integrate_matrix_ode`, invoking `observe(s, M)` after each accepted
/// step (used to compare against closed forms along the way).
pub fn integrate_matrix_ode_sampled(
    rhs: &dyn Fn(f64) -> CMat2,
    s0: f64,
    s1: f64,
    tol: f64,
    observe: &mut dyn FnMut(f64, &CMat2),
) -> Result<CMat2> {
    if s1 < s0 {
        return Err(Error::InvalidArgument(format!(
            "integration interval reversed: [{s0}, {s1}]"
        )));
    }
    let mut m = cmat_identity();
    if s1 == s0 {
        return Ok(m);
    }
    let span = s1 - s0;
    let mut s = s0;
    let mut h = (span / 100.0).min(0.1).max(1e-8);
    let min_step = span * 1e-14;
    let mut k = [cmat_zero(); 7];
    while s < s1 {
        if h < min_step {
            return Err(Error::Stiffness(s));
        }
        if s + h > s1 {
            h = s1 - s;
        }
        for i in 0..7 {
            let mut yi = m;
            for (l, klv) in k.iter().enumerate().take(i) {
                yi = cmat_add(&yi, &cmat_scale(klv, Complex64::new(h * A[i][l], 0.0)));
            }
            k[i] = cmat_mul(&rhs(s + C[i] * h), &yi);
        }
        let mut y5 = m;
        let mut y4 = m;
        for i in 0..7 {
            y5 = cmat_add(&y5, &cmat_scale(&k[i], Complex64::new(h * B5[i], 0.0)));
            y4 = cmat_add(&y4, &cmat_scale(&k[i], Complex64::new(h * B4[i], 0.0)));
        }
        let scale = cmat_norm(&m).max(cmat_norm(&y5)).max(1.0);
        let err = cmat_norm(&cmat_sub(&y5, &y4)) / scale;
        if err <= tol {
            s += h;
            m = y5;
            observe(s, &m);
            let grow = if err == 0.0 { 5.0 } else { 0.9 * (tol / err).powf(0.2) };
            h *= grow.clamp(0.2, 5.0);
        } else {
            h *= (0.9 * (tol / err).powf(0.2)).clamp(0.1, 0.9);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rhs_gives_identity() {
        let m = integrate_matrix_ode(&|_| cmat_zero(), 0.0, 3.0, 1e-12).unwrap();
        assert!(cmat_rel_diff(&m, &cmat_identity()) < 1e-14);
    }

    #[test]
    fn constant_rotation_matches_exponential() {
        // M' = [[0, 1], [-1, 0]] M: M(s) = rotation by s.
        let b: CMat2 = [
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            [Complex64::new(-1.0, 0.0), Complex64::new(0.0, 0.0)],
        ];
        let m = integrate_matrix_ode(&|_| b, 0.0, 2.0, 1e-12).unwrap();
        let expect: CMat2 = [
            [
                Complex64::new(2.0f64.cos(), 0.0),
                Complex64::new(2.0f64.sin(), 0.0),
            ],
            [
                Complex64::new(-(2.0f64.sin()), 0.0),
                Complex64::new(2.0f64.cos(), 0.0),
            ],
        ];
        assert!(cmat_rel_diff(&m, &expect) < 1e-10);
    }

    #[test]
    fn determinant_preserved_for_traceless_rhs() {
        // Liouville: traceless coefficient matrix keeps det = 1.
        let b = |s: f64| -> CMat2 {
            [
                [Complex64::new(0.0, 0.3 * s), Complex64::new(1.0, 0.2)],
                [Complex64::new(-0.7, 0.1 * s), Complex64::new(0.0, -0.3 * s)],
            ]
        };
        let m = integrate_matrix_ode(&b, 0.0, 2.5, 1e-11).unwrap();
        let det = cmat_det(&m);
        assert!((det - Complex64::new(1.0, 0.0)).norm() < 1e-8, "det = {det}");
    }
}
