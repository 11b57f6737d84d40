//! Integrability of `|x|^σ e^{q(x)}` outside the unit ball for polynomials
//! that depend on a block of `k` coordinates and tend to `-∞` there.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::sphere_area;
use crate::error::{domain, Result};
use crate::quadrature::{gauss_legendre, Rule};

/// `q(y) = Σ_j a_j |y|^{2j}` (`j >= 1`) in the first `k` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductPolynomial {
    pub k: usize,
    pub coeffs: Vec<f64>,
}

impl ProductPolynomial {
    pub fn new(k: usize, coeffs: Vec<f64>) -> Result<Self> {
        if k > 0 && coeffs.last().map_or(true, |&a| a >= 0.0) {
            return Err(domain("q must tend to -∞ on its block: leading coefficient must be negative"));
        }
        Ok(Self { k, coeffs })
    }

    /// `q = -|y|²` on `k` coordinates, or `q = 0` when `k = 0`.
    pub fn gaussian(k: usize) -> Self {
        Self { k, coeffs: if k == 0 { vec![] } else { vec![-1.0] } }
    }

    pub fn eval(&self, rho: f64) -> f64 {
        let r2 = rho * rho;
        let mut acc = 0.0;
        for a in self.coeffs.iter().rev() {
            acc = (acc + a) * r2;
        }
        acc
    }

    /// Radius beyond which `e^q` is below `e^{-745}`.
    fn cutoff(&self) -> f64 {
        let mut r = 1.0;
        while self.eval(r) > -745.0 && r < 1e6 {
            r *= 1.25;
        }
        r
    }
}

fn area(d: isize) -> f64 {
    match d {
        d if d < 0 => 1.0,
        0 => 2.0,
        d => sphere_area(d as usize),
    }
}

/// Result of [`weighted_exp_integral`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolyIntegral {
    /// Value over `B_{R_out} ∖ B_1` at the last radius, plus the
    /// extrapolated tail when convergence was declared from the tail rate.
    pub value: f64,
    pub converged: bool,
    /// Fitted power of `R` in the increments, `≈ σ + n - k` for a power tail.
    pub tail_exponent: f64,
    pub r_out: f64,
}

/// Radii `R_0 · 2^j`, `j = 0..=DOUBLINGS`.
pub const DOUBLINGS: usize = 8;
pub const R_START: f64 = 4.0;
pub const DOUBLING_TOL: f64 = 1e-6;

/// `∫_{1 <= |x| <= R} |x|^σ e^{q(y)} dx` in block coordinates `ρ = |y|`,
/// `ζ = |z|`.
fn block_integral(q: &ProductPolynomial, sigma: f64, n: usize, r: f64, rule: &Rule) -> f64 {
    let k = q.k;
    let m = n - k;
    let radial = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        // Geometric panels on [lo, hi], lo > 0.
        let mut acc = 0.0;
        let mut a = lo;
        while a < hi {
            let b = (a * 1.5).min(hi);
            acc += rule.integrate(a, b, |x| f(x));
            a = b;
        }
        acc
    };
    if k == 0 {
        return area(n as isize - 1) * radial(1.0, r, &|x| x.powf(sigma + n as f64 - 1.0));
    }
    if m == 0 {
        let hi = r.min(q.cutoff()).max(1.0);
        return area(n as isize - 1) * radial(1.0, hi, &|x| x.powf(sigma + n as f64 - 1.0) * q.eval(x).exp());
    }
    let inner = |rho: f64| -> f64 {
        let lo = (1.0 - rho * rho).max(0.0).sqrt();
        let hi = (r * r - rho * rho).max(0.0).sqrt();
        if hi <= lo {
            return 0.0;
        }
        let f = |z: f64| z.powi(m as i32 - 1) * (rho * rho + z * z).powf(0.5 * sigma);
        let scale = rho.max(0.05);
        if lo > 0.0 {
            radial(lo.max(1e-300), hi, &f)
        } else {
            let first = scale.min(hi);
            rule.integrate(0.0, first, f) + if hi > first { radial(first, hi, &f) } else { 0.0 }
        }
    };
    let rho_end = r.min(q.cutoff());
    // Outer panels: refined around ρ = 1 where the inner lower limit has a
    // square-root kink.
    let mut cuts: Vec<f64> = vec![0.0];
    let mut x = 0.25;
    while x < rho_end {
        if (x - 1.0).abs() > 1e-12 {
            cuts.push(x);
        }
        x += 0.25;
    }
    for d in [1e-1, 1e-2, 1e-3, 1e-4] {
        cuts.push(1.0 - d);
        cuts.push(1.0 + d);
    }
    cuts.push(1.0);
    cuts.push(rho_end);
    cuts.retain(|&c| c <= rho_end);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        acc += rule.integrate(w[0], w[1], |rho| rho.powi(k as i32 - 1) * q.eval(rho).exp() * inner(rho));
    }
    area(k as isize - 1) * area(m as isize - 1) * acc
}

/// Integral over `B_{R_out} ∖ B_1` with `R_out` doubled from `R_START` up to
/// `DOUBLINGS` times. Converged when a doubling changes the value by less
/// than `DOUBLING_TOL` relative, or when the increments shrink geometrically
/// (fitted tail exponent below zero), in which case the geometric tail is
/// added to the value.
pub fn weighted_exp_integral(q: &ProductPolynomial, sigma: f64, n: usize) -> Result<PolyIntegral> {
    if q.k > n {
        return Err(domain(format!("block size k = {} exceeds n = {n}", q.k)));
    }
    if sigma <= -(n as f64) {
        return Err(domain(format!("σ = {sigma} must exceed -n")));
    }
    let rule = gauss_legendre(16);
    let radii: Vec<f64> = (0..=DOUBLINGS).map(|j| R_START * 2f64.powi(j as i32)).collect();
    let vals: Vec<f64> = radii.iter().map(|&r| block_integral(q, sigma, n, r, &rule)).collect();
    let last = *vals.last().unwrap();
    for w in vals.windows(2) {
        if (w[1] - w[0]).abs() <= DOUBLING_TOL * w[1].abs() {
            return Ok(PolyIntegral { value: w[1], converged: true, tail_exponent: f64::NEG_INFINITY, r_out: *radii.last().unwrap() });
        }
    }
    let d: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
    let j = d.len() - 1;
    let e = (d[j] / d[j - 1]).log2();
    let (value, converged) = if e < 0.0 {
        let ratio = 2f64.powf(e);
        (last + d[j] * ratio / (1.0 - ratio), true)
    } else {
        (last, false)
    };
    Ok(PolyIntegral { value, converged, tail_exponent: e, r_out: *radii.last().unwrap() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Threshold {
    Estimate(f64),
    /// The grid never switched from convergence to divergence.
    Inconclusive,
}

/// Locate the convergence boundary in `σ`: find the first switch along the
/// increasing grid, then bisect the bracket. Grid points with `σ <= -n` are
/// skipped.
pub fn threshold_scan(q: &ProductPolynomial, n: usize, sigma_grid: &[f64]) -> Result<Threshold> {
    let sigma_grid: Vec<f64> = sigma_grid.iter().copied().filter(|&s| s > -(n as f64)).collect();
    let flags: Vec<bool> = sigma_grid
        .par_iter()
        .map(|&s| weighted_exp_integral(q, s, n).map(|r| r.converged))
        .collect::<Result<_>>()?;
    let Some(i) = flags.windows(2).position(|w| w[0] && !w[1]) else {
        return Ok(Threshold::Inconclusive);
    };
    let (mut lo, mut hi) = (sigma_grid[i], sigma_grid[i + 1]);
    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        if weighted_exp_integral(q, mid, n)?.converged {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Threshold::Estimate(0.5 * (lo + hi)))
}

/// Grid of `count` points spanning `center ± 1`.
pub fn sigma_window(center: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| center - 1.0 + 2.0 * i as f64 / (count - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::function::erf::erfc;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_full_block_converges() {
        let r = weighted_exp_integral(&ProductPolynomial::gaussian(3), 0.0, 3).unwrap();
        assert!(r.converged);
        // 4π ∫_1^∞ r² e^{-r²} dr.
        let exact = 4.0 * PI * ((-1f64).exp() / 2.0 + PI.sqrt() / 4.0 * erfc(1.0));
        assert_relative_eq!(r.value, exact, max_relative = 1e-6);
    }

    #[test]
    fn bracket_around_one_block() {
        let q = ProductPolynomial::gaussian(1);
        assert!(weighted_exp_integral(&q, -2.5, 3).unwrap().converged);
        let d = weighted_exp_integral(&q, -1.5, 3).unwrap();
        assert!(!d.converged);
        assert!((d.tail_exponent - 0.5).abs() < 0.05);
    }

    #[test]
    fn constant_polynomial_never_converges() {
        let q = ProductPolynomial::gaussian(0);
        for s in [-2.9, -2.0, 0.0, 1.0] {
            assert!(!weighted_exp_integral(&q, s, 3).unwrap().converged);
        }
        assert!(weighted_exp_integral(&q, -3.0, 3).is_err());
    }

    #[test]
    fn block_product_matches_closed_form() {
        // k = 0 is a pure power law; k = n = 2 with σ = 0 gives π e^{-1}.
        let q = ProductPolynomial::gaussian(0);
        let v = block_integral(&q, -4.0, 3, 8.0, &gauss_legendre(16));
        assert_relative_eq!(v, 4.0 * PI * (1.0 - 1.0 / 8.0), max_relative = 1e-12);
        let q2 = ProductPolynomial::gaussian(2);
        let v = block_integral(&q2, 0.0, 2, 50.0, &gauss_legendre(16));
        assert_relative_eq!(v, PI * (-1f64).exp(), max_relative = 1e-10);
    }

    #[test]
    fn thresholds() {
        for (n, k) in [(3usize, 1usize), (4, 2)] {
            let q = ProductPolynomial::gaussian(k);
            let expect = k as f64 - n as f64;
            match threshold_scan(&q, n, &sigma_window(expect, 9)).unwrap() {
                Threshold::Estimate(e) => assert!((e - expect).abs() < 0.2, "({n},{k}): {e}"),
                Threshold::Inconclusive => panic!("no bracket for ({n},{k})"),
            }
        }
        // Full block: integrable for every σ, so no switch exists.
        let q = ProductPolynomial::gaussian(3);
        assert_eq!(threshold_scan(&q, 3, &sigma_window(0.0, 9)).unwrap(), Threshold::Inconclusive);
    }

    #[test]
    fn epsilon_improvement() {
        for (n, k) in [(3usize, 1usize), (4, 2), (3, 3), (4, 1)] {
            let q = ProductPolynomial::gaussian(k);
            let edge = k as f64 - n as f64;
            for s in sigma_window(edge, 7) {
                if s <= -(n as f64) {
                    continue;
                }
                if weighted_exp_integral(&q, s, n).unwrap().converged {
                    let s2 = s + 0.1 * (edge - s);
                    assert!(weighted_exp_integral(&q, s2, n).unwrap().converged, "({n},{k}) σ = {s}");
                }
            }
        }
    }

    #[test]
    fn polynomial_validation() {
        assert!(ProductPolynomial::new(2, vec![1.0]).is_err());
        assert!(ProductPolynomial::new(2, vec![3.0, -0.5]).is_ok());
        assert!(ProductPolynomial::new(0, vec![]).is_ok());
        let q = ProductPolynomial::new(1, vec![2.0, -1.0]).unwrap();
        assert_relative_eq!(q.eval(2.0), 2.0 * 4.0 - 16.0);
    }
}
