//! Majoring-series machinery: the reference series Phi, its shifted
//! coefficients Phi_k(t), the coefficient-domination relation, and the
//! parameters of the weighted solution spaces.
//!
//! The reference series is `Phi(z) = sum_k c0 z^k / (k^2 + 1)` with c0 small
//! enough that `Phi^2` is dominated by `Phi` coefficient-wise. Fields are
//! measured against the profile
//! `c1/(n^2+1) * exp((M' - int_0^s gamma_eta) <n>) * Phi_k(eps^{1/(1+eta)} s)`
//! where `gamma_eta(tau) = gamma0 tau^eta + beta`.
//!
//! Here `<n>` is `|n|` (so the zero mode carries a time-constant allowance;
//! a nonzero bracket at n = 0 would make the identity flow of the zero mode
//! break the propagator action bound).

use crate::error::{Error, Result};
use crate::series::TaylorSeries;
use serde::{Deserialize, Serialize};

/// `<n>`: |n| with `<0>` = 0.
pub fn mode_bracket(n: i64) -> f64 {
    n.unsigned_abs() as f64
}

/// Largest c0 with `sum_{i+j=k} c0^2/((i^2+1)(j^2+1)) <= c0/(k^2+1)` for all
/// k <= K. Monotone non-increasing in K and convergent.
pub fn phi_constant(order: usize) -> f64 {
    assert!(order >= 1);
    let mut best = 1.0f64; // k = 0 gives c0 <= 1
    for k in 1..=order {
        let mut conv = 0.0;
        for i in 0..=k {
            let j = k - i;
            conv += 1.0 / (((i * i + 1) * (j * j + 1)) as f64);
        }
        let bound = 1.0 / ((k * k + 1) as f64 * conv);
        best = best.min(bound);
    }
    best
}

/// Coefficients of Phi up to order K (inclusive).
pub fn phi_series(c0: f64, order: usize) -> Vec<f64> {
    (0..=order).map(|k| c0 / ((k * k + 1) as f64)).collect()
}

/// Coefficient-wise `Phi^2 <= Phi` check up to the stored order.
pub fn phi_square_dominated(c0: f64, order: usize) -> bool {
    let phi = phi_series(c0, order);
    for k in 0..=order {
        let mut sq = 0.0;
        for i in 0..=k {
            sq += phi[i] * phi[k - i];
        }
        if sq > phi[k] * (1.0 + 1e-12) {
            return false;
        }
    }
    true
}

/// Parameters of the reference majorant.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhiParams {
    pub c0: f64,
    /// Free profile constant; cancels in norm ratios. Defaults to 1.
    pub c1: f64,
    /// Space scale of the conical domain (large).
    pub big_r: f64,
    /// Time scale of the conical domain (large).
    pub rho: f64,
    /// Order up to which the c0 domination is certified.
    pub trunc_order: usize,
}

impl PhiParams {
    pub fn new(big_r: f64, rho: f64) -> Self {
        let trunc_order = 200;
        PhiParams { c0: phi_constant(trunc_order), c1: 1.0, big_r, rho, trunc_order }
    }

    /// Checks the stored c0 against the domination property.
    pub fn validate(&self) -> Result<()> {
        if !(self.big_r > 0.0 && self.rho > 0.0) {
            return Err(Error::InvalidArgument("R and rho must be positive".into()));
        }
        if !phi_square_dominated(self.c0, self.trunc_order) {
            return Err(Error::InvalidArgument(format!(
                "Phi^2 is not dominated by Phi at c0 = {}",
                self.c0
            )));
        }
        Ok(())
    }

    /// `Phi_k(t) = R^{|k|} sum_p c0/((|k|+p)^2+1) multinomial(|k|+p; k, p)
    /// rho^p t^p`, truncated at 1e-16 relative. Diverges for rho t >= 1.
    pub fn phi_coeff(&self, k: &[u8], t: f64) -> Result<f64> {
        let rt = self.rho * t;
        if rt >= 1.0 {
            return Err(Error::PhiDivergence(rt));
        }
        let m: u32 = k.iter().map(|&e| e as u32).sum();
        // m! / prod(k_i!) once; the p-dependence is (m+p)!/(m! p!).
        let mut base = 1.0f64;
        {
            let mut num = 1.0f64;
            for i in 1..=m {
                num *= i as f64;
            }
            let mut den = 1.0f64;
            for &e in k {
                for i in 1..=e as u32 {
                    den *= i as f64;
                }
            }
            base *= num / den;
        }
        let mut term = base * self.c0 / ((m * m + 1) as f64); // p = 0
        let mut acc = term;
        let mut p = 0u32;
        loop {
            // ratio from p to p+1
            let mp = (m + p) as f64;
            let ratio = ((mp * mp + 1.0) / ((mp + 1.0) * (mp + 1.0) + 1.0))
                * ((mp + 1.0) / (p as f64 + 1.0))
                * rt;
            term *= ratio;
            acc += term;
            p += 1;
            if term.abs() < 1e-16 * acc.abs() || p > 100_000 {
                break;
            }
        }
        Ok(self.big_r.powi(m as i32) * acc)
    }
}

/// Coefficient-wise domination `|a_e| <= b_e` over the shared truncation.
pub fn majorizes(a: &TaylorSeries, b: &TaylorSeries) -> bool {
    for (e, c) in a.iter() {
        if c.abs() > b.get(e) + 1e-15 * c.abs() {
            return false;
        }
    }
    true
}

/// Parameters of the weighted spaces: growth budget M', mode damping beta,
/// the case exponent eta and the ambient scales.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpaceParams {
    pub m_prime: f64,
    pub beta: f64,
    pub gamma0: f64,
    pub eta: f64,
    pub delta_exp: f64,
    pub eps: f64,
}

impl SpaceParams {
    /// Gevrey weight of the datum: M(eps) = eps^{-delta}.
    pub fn m_of_eps(&self) -> f64 {
        self.eps.powf(-self.delta_exp)
    }

    /// `int_0^s (gamma0 tau^eta + beta) d tau`.
    pub fn gamma_integral(&self, s: f64) -> f64 {
        self.gamma0 * s.powf(1.0 + self.eta) / (1.0 + self.eta) + self.beta * s
    }

    /// Exponential weight `M' - int_0^s gamma_eta` of the mode profile.
    pub fn weight(&self, s: f64) -> f64 {
        self.m_prime - self.gamma_integral(s)
    }

    /// Growth time: the solution of `int_0^{s1} gamma_eta = M'` (closed form
    /// for eta = 1; monotone bisection otherwise).
    pub fn growth_time_s1(&self) -> Result<f64> {
        if !(self.m_prime > 0.0) {
            return Err(Error::Precondition(format!(
                "growth budget M' = {} must be positive",
                self.m_prime
            )));
        }
        if (self.eta - 1.0).abs() < 1e-14 {
            // gamma0 s^2/2 + beta s = M'
            let disc = self.beta * self.beta + 2.0 * self.gamma0 * self.m_prime;
            return Ok((disc.sqrt() - self.beta) / self.gamma0);
        }
        // Bisection on the increasing antiderivative.
        let mut hi = 1.0f64;
        while self.gamma_integral(hi) < self.m_prime {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::NoConvergence { steps: 0, residual: self.m_prime });
            }
        }
        let mut lo = 0.0f64;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.gamma_integral(mid) < self.m_prime {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Analyticity lifetime `(eps^{1/(1+eta)} rho)^{-1}` of the majorant.
    pub fn analyticity_time(&self, rho: f64) -> f64 {
        1.0 / (self.eps.powf(1.0 / (1.0 + self.eta)) * rho)
    }

    /// Final time: min of growth time and analyticity lifetime.
    pub fn final_time(&self, rho: f64) -> Result<f64> {
        Ok(self.growth_time_s1()?.min(self.analyticity_time(rho)))
    }

    /// Time rescaling between solver time s and symbol time t.
    pub fn time_scale(&self) -> f64 {
        self.eps.powf(1.0 / (1.0 + self.eta))
    }
}

/// Largest profile constant c1 for which the discrete mode convolution is
/// submultiplicative at weight exponent `w >= 0` and cutoff `n_max`:
/// `c1 * max_n (n^2+1) sum_{n1+n2=n} e^{w(<n1>+<n2>-<n>)} / ((n1^2+1)(n2^2+1))
/// <= 1`.
pub fn admissible_mode_constant(n_max: i64, w: f64) -> f64 {
    let mut worst = 0.0f64;
    for n in -n_max..=n_max {
        let mut conv = 0.0;
        for n1 in -n_max..=n_max {
            let n2 = n - n1;
            if n2.abs() > n_max {
                continue;
            }
            let excess = mode_bracket(n1) + mode_bracket(n2) - mode_bracket(n);
            conv += (w * excess).exp()
                / (((n1 * n1 + 1) * (n2 * n2 + 1)) as f64);
        }
        worst = worst.max((n * n + 1) as f64 * conv);
    }
    1.0 / worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{Caps, VarLayout};

    #[test]
    fn phi_constant_small_orders() {
        // k=1 binds at order 1: convolution 1, bound c0/2.
        assert!((phi_constant(1) - 0.5).abs() < 1e-15);
        // k=2 binds at order 2: c0 = (1/5)/(13/20) = 4/13.
        assert!((phi_constant(2) - 4.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn phi_constant_converges() {
        let c100 = phi_constant(100);
        let c200 = phi_constant(200);
        assert!(c200 <= c100);
        assert!((c100 - c200).abs() < 1e-6);
        assert!(phi_square_dominated(c200, 200));
    }

    #[test]
    fn phi_coeff_values() {
        let pp = PhiParams { c0: 0.3, c1: 1.0, big_r: 2.0, rho: 3.0, trunc_order: 200 };
        // k = 0, t = 0: single surviving term c0.
        assert!((pp.phi_coeff(&[0], 0.0).unwrap() - 0.3).abs() < 1e-15);
        // |k| = 1, t = 0: R c0 / 2.
        assert!((pp.phi_coeff(&[1], 0.0).unwrap() - 2.0 * 0.3 / 2.0).abs() < 1e-15);
        // k = 0, rho t = 0.5: direct summation oracle.
        let t = 0.5 / 3.0;
        let mut oracle = 0.0;
        for p in 0..200u32 {
            // multinomial(p; 0, p) = 1
            let mut rtp = 1.0f64;
            for _ in 0..p {
                rtp *= 0.5;
            }
            oracle += 0.3 / ((p * p + 1) as f64) * rtp;
        }
        assert!((pp.phi_coeff(&[0], t).unwrap() - oracle).abs() < 1e-12);
        // Divergence guard.
        assert!(pp.phi_coeff(&[0], 0.34).is_err());
    }

    #[test]
    fn phi_coeff_monotone_in_t() {
        let pp = PhiParams::new(2.0, 4.0);
        let mut prev = 0.0;
        for i in 0..20 {
            let t = i as f64 * 0.012;
            let v = pp.phi_coeff(&[2], t).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn majorizes_basics() {
        let l = VarLayout::new(1, 0);
        let c = Caps::uniform(4);
        let mut a = TaylorSeries::zero(l, c);
        a.set(&[1, 0, 0], 0.5);
        a.set(&[0, 2, 0], -0.25);
        let mut b = TaylorSeries::zero(l, c);
        b.set(&[1, 0, 0], 0.5);
        b.set(&[0, 2, 0], 0.25);
        assert!(majorizes(&a, &b)); // |a| <= b coefficient-wise
        assert!(majorizes(&b, &b)); // reflexive on nonnegative series
        let mut worse = b.clone();
        worse.set(&[1, 0, 0], 0.49);
        assert!(!majorizes(&a, &worse));
    }

    #[test]
    fn growth_time_closed_forms() {
        // eta=1, beta=0, gamma0=1, M'=2: s^2/2 = 2 -> s = 2.
        let sp = SpaceParams { m_prime: 2.0, beta: 0.0, gamma0: 1.0, eta: 1.0, delta_exp: 0.2, eps: 1e-4 };
        assert!((sp.growth_time_s1().unwrap() - 2.0).abs() < 1e-12);
        // eta=1/2, beta=0, gamma0=1, M'=2/3: (2/3)s^{3/2} = 2/3 -> s = 1.
        let sp = SpaceParams { m_prime: 2.0 / 3.0, beta: 0.0, gamma0: 1.0, eta: 0.5, delta_exp: 0.2, eps: 1e-4 };
        assert!((sp.growth_time_s1().unwrap() - 1.0).abs() < 1e-10);
        // Linear regime: beta >> gamma0 s^eta: s1 -> M'/beta.
        let sp = SpaceParams { m_prime: 1.0, beta: 100.0, gamma0: 1.0, eta: 1.0, delta_exp: 0.2, eps: 1e-4 };
        assert!((sp.growth_time_s1().unwrap() - 0.01).abs() < 1e-5);
        // Inversion identity.
        let sp = SpaceParams { m_prime: 3.7, beta: 0.4, gamma0: 1.3, eta: 0.5, delta_exp: 0.2, eps: 1e-4 };
        let s1 = sp.growth_time_s1().unwrap();
        assert!((sp.gamma_integral(s1) - 3.7).abs() < 1e-12);
    }

    #[test]
    fn admissible_constant_is_submultiplicative_bound() {
        let n_max = 8;
        let c1 = admissible_mode_constant(n_max, 0.0);
        assert!(c1 > 0.1 && c1 < 1.0, "c1 = {c1}");
        // Direct verification of the defining inequality.
        for n in -n_max..=n_max {
            let mut conv = 0.0;
            for n1 in -n_max..=n_max {
                let n2 = n - n1;
                if n2.abs() > n_max {
                    continue;
                }
                conv += c1 * c1 / (((n1 * n1 + 1) * (n2 * n2 + 1)) as f64);
            }
            assert!(conv <= c1 / ((n * n + 1) as f64) * (1.0 + 1e-12));
        }
    }
}
