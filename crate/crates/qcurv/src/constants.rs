//! Special functions and the named constants used by every other module.
//!
//! Gamma ratios always go through `log_gamma` so multipliers stay finite for
//! large degrees.

use std::f64::consts::PI;

use crate::error::{domain, Result};

/// Dimension `n` and fractional order `s`, with `0 < s < n`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DimensionContext {
    pub n: usize,
    pub s: f64,
}

impl DimensionContext {
    pub fn new(n: usize, s: f64) -> Result<Self> {
        if n < 2 {
            return Err(domain(format!("dimension n = {n} must be at least 2")));
        }
        if !(s > 0.0 && s < n as f64) {
            return Err(domain(format!("order s = {s} must lie in (0, {n})")));
        }
        Ok(Self { n, s })
    }

    /// The critical order `s = n/2`.
    pub fn critical(n: usize) -> Result<Self> {
        Self::new(n, n as f64 / 2.0)
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain(format!("log_gamma needs x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

fn lg(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Surface area of the unit sphere in `R^{d+1}`.
pub fn sphere_area(d: usize) -> f64 {
    assert!(d >= 1, "sphere_area needs d >= 1");
    let a = (d as f64 + 1.0) / 2.0;
    2.0 * (a * PI.ln() - lg(a)).exp()
}

/// `(n-1)!`, computed through `ln Γ(n)`.
pub fn factorial_nm1(n: usize) -> f64 {
    lg(n as f64).exp()
}

/// `γ_n = (n-1)! |S^n| / 2`.
pub fn gamma_n(n: usize) -> f64 {
    lambda_1(n) / 2.0
}

/// Total curvature of the round sphere, `Λ₁ = (n-1)! |S^n|`.
pub fn lambda_1(n: usize) -> f64 {
    factorial_nm1(n) * sphere_area(n)
}

/// Riesz potential constant `K_{n,s} = Γ((n-s)/2) / (Γ(s/2) 2^s π^{n/2})`.
pub fn k_ns(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    (lg((nf - s) / 2.0) - lg(s / 2.0) - s * 2f64.ln() - nf / 2.0 * PI.ln()).exp()
}

/// True when `x` is a non-positive integer up to `1e-12`.
fn at_gamma_pole(x: f64) -> bool {
    x <= 1e-12 && (x - x.round()).abs() <= 1e-12
}

/// `Γ(a + d) / Γ(a - d)` with the convention `1/Γ(pole) = 0`.
pub(crate) fn gamma_ratio(a: f64, d: f64) -> f64 {
    let lo = a - d;
    if at_gamma_pole(lo) {
        return 0.0;
    }
    let hi = a + d;
    let span = 2.0 * d;
    if lo > 0.0 && span >= 0.0 && span <= 64.0 && span.fract() == 0.0 {
        // Rising product lo (lo+1) ... (hi-1), exact for integer data.
        return (0..span as usize).map(|k| lo + k as f64).product();
    }
    if lo > 0.0 {
        return (lg(hi) - lg(lo)).exp();
    }
    // Negative non-integer lower argument: reflect to keep the sign.
    let g_lo = statrs::function::gamma::gamma(lo);
    statrs::function::gamma::gamma(hi) / g_lo
}

/// Spectral multiplier of `P_{2s}` on degree-`l` harmonics.
pub fn paneitz_multiplier(l: usize, ctx: &DimensionContext) -> f64 {
    gamma_ratio(l as f64 + ctx.nf() / 2.0, ctx.s)
}

/// Square root of [`paneitz_multiplier`], the multiplier of `P_{2s}^{1/2}`.
pub fn paneitz_sqrt_multiplier(l: usize, ctx: &DimensionContext) -> f64 {
    paneitz_multiplier(l, ctx).max(0.0).sqrt()
}

/// Multipliers for `l = 0..=l_max`.
pub fn multiplier_table(l_max: usize, ctx: &DimensionContext) -> Vec<f64> {
    (0..=l_max).map(|l| paneitz_multiplier(l, ctx)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_gamma_reference_values() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-15);
        assert_relative_eq!(log_gamma(5.0).unwrap(), 24f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(log_gamma(0.5).unwrap(), 0.5 * PI.ln(), max_relative = 1e-13);
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.5).is_err());
    }

    #[test]
    fn log_gamma_matches_stirling_series() {
        // Stirling with four correction terms is accurate to ~1e-15 at x >= 30.
        for &x in &[30.0, 47.25, 110.5, 1000.0] {
            let f: f64 = x;
            let st = (f - 0.5) * f.ln() - f + 0.5 * (2.0 * PI).ln() + 1.0 / (12.0 * f)
                - 1.0 / (360.0 * f.powi(3))
                + 1.0 / (1260.0 * f.powi(5))
                - 1.0 / (1680.0 * f.powi(7));
            assert_relative_eq!(log_gamma(x).unwrap(), st, max_relative = 1e-13);
        }
        // Recurrence Γ(x+1) = xΓ(x) carries the check down to small x.
        for &x in &[0.1, 0.73, 2.5, 7.9] {
            let lhs = log_gamma(x + 1.0).unwrap();
            assert_relative_eq!(lhs, log_gamma(x).unwrap() + f64::ln(x), epsilon = 1e-13);
        }
    }

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(sphere_area(1), 2.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(2), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(3), 2.0 * PI * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(4), 8.0 * PI * PI / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn named_constants() {
        let pi2 = PI * PI;
        assert_relative_eq!(gamma_n(4), 8.0 * pi2, max_relative = 1e-14);
        assert_relative_eq!(lambda_1(4), 16.0 * pi2, max_relative = 1e-14);
        assert_relative_eq!(lambda_1(3), 4.0 * pi2, max_relative = 1e-14);
        assert_relative_eq!(k_ns(4, 2.0), 1.0 / (4.0 * pi2), max_relative = 1e-14);
        assert_relative_eq!(k_ns(2, 1.0), 1.0 / (2.0 * PI), max_relative = 1e-14);
        for n in 2..8 {
            assert_eq!(lambda_1(n), 2.0 * gamma_n(n));
        }
    }

    #[test]
    fn multipliers_n4() {
        let ctx = DimensionContext::critical(4).unwrap();
        assert_eq!(paneitz_multiplier(0, &ctx), 0.0);
        assert_relative_eq!(paneitz_multiplier(1, &ctx), 24.0, max_relative = 1e-13);
        assert_relative_eq!(paneitz_multiplier(2, &ctx), 120.0, max_relative = 1e-13);
        for l in 0..=50usize {
            let lam = (l * (l + 3)) as f64;
            let exact = lam * (lam + 2.0);
            assert_eq!(paneitz_multiplier(l, &ctx).round(), exact, "l = {l}");
        }
    }

    #[test]
    fn multipliers_increase() {
        for n in 3..=5 {
            let ctx = DimensionContext::critical(n).unwrap();
            let t = multiplier_table(200, &ctx);
            assert!(t[1..].windows(2).all(|w| w[1] > w[0]), "n = {n}");
            assert!(t.iter().all(|m| m.is_finite()));
        }
    }

    #[test]
    fn sqrt_multiplier_squares_back() {
        let ctx = DimensionContext::new(5, 1.7).unwrap();
        for l in 0..30 {
            let m = paneitz_multiplier(l, &ctx);
            assert_relative_eq!(paneitz_sqrt_multiplier(l, &ctx).powi(2), m, max_relative = 1e-13);
        }
    }

    #[test]
    fn pole_convention_odd_dimension() {
        // n = 3, s = 3/2: l + 3/2 - 3/2 = l, so only l = 0 hits a pole.
        let ctx = DimensionContext::critical(3).unwrap();
        assert_eq!(paneitz_multiplier(0, &ctx), 0.0);
        assert!(paneitz_multiplier(1, &ctx) > 0.0);
    }

    #[test]
    fn context_validation() {
        assert!(DimensionContext::new(1, 0.5).is_err());
        assert!(DimensionContext::new(4, 4.0).is_err());
        assert!(DimensionContext::new(4, 0.0).is_err());
        assert!(k_ns(4, 0.3) > 0.0 && k_ns(4, 3.9) > 0.0);
    }

    proptest! {
        #[test]
        fn multiplier_recursion(n in 2usize..9, s_frac in 0.05f64..0.95, l in 1usize..40) {
            let ctx = DimensionContext::new(n, s_frac * n as f64).unwrap();
            let a = l as f64 + n as f64 / 2.0;
            let m0 = paneitz_multiplier(l, &ctx);
            let m1 = paneitz_multiplier(l + 1, &ctx);
            prop_assert!((m1 / m0 - (a + ctx.s) / (a - ctx.s)).abs() < 1e-10 * (m1 / m0).abs());
        }
    }
}
