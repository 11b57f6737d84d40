//! Singular radial kernels: angular averages of Riesz and logarithmic kernels,
//! the radial convolution `T`, the normalized potential, and spectral Green's
//! functions on the sphere.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{Chart, RadialField};
use crate::constants::{gamma_n, k_ns, sphere_area};
use crate::error::{domain, Error, Result};
use crate::quadrature::{gauss_legendre, Rule};
use crate::spectral::{variant_multiplier, zonal_scales, zonal_values_into, PaneitzVariant};

/// `|S^d|` including the two-point sphere `S^0`.
fn area(d: usize) -> f64 {
    if d == 0 {
        2.0
    } else {
        sphere_area(d)
    }
}

/// `|e₁ - Rω|²` written without cancellation near `R = 1`.
#[inline]
fn dist2(r: f64, phi: f64) -> f64 {
    let s = (0.5 * phi).sin();
    (1.0 - r) * (1.0 - r) + 4.0 * r * s * s
}

/// Integrate `k(φ) sin^{n-2} φ` over `[0, π]`, grading panels toward `φ = 0`
/// at the scale `d`.
fn polar_integral(n: usize, d: f64, rule: &Rule, k: impl Fn(f64) -> f64) -> f64 {
    let mut cuts = vec![0.0];
    let mut x = d.max(1e-15);
    while x < PI / 4.0 {
        cuts.push(x);
        x *= 3.0;
    }
    cuts.extend([PI / 4.0, PI / 2.0, 3.0 * PI / 4.0, PI]);
    let p = n as i32 - 2;
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        for (phi, wt) in rule.mapped(w[0], w[1]) {
            acc += wt * k(phi) * phi.sin().powi(p);
        }
    }
    acc * area(n - 2) / area(n - 1)
}

fn check_alpha(alpha: f64, n: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < n as f64) {
        return Err(domain(format!("α = {alpha} must lie in (0, {n})")));
    }
    Ok(())
}

/// Behavior of `g_α(R)` as `R → 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `α < n-1`.
    Bounded,
    /// `α = n-1`, growth like `ln(1/(1-R))`.
    Log,
    /// `α > n-1`, growth like `(1-R)^{n-1-α}`.
    Power,
}

pub fn regime(alpha: f64, n: usize) -> Regime {
    let e = alpha - (n as f64 - 1.0);
    if e.abs() < 1e-12 {
        Regime::Log
    } else if e < 0.0 {
        Regime::Bounded
    } else {
        Regime::Power
    }
}

/// `g_α(R)`, the mean of `|e₁ - Rω|^{-α}` over `ω ∈ S^{n-1}`, by direct
/// polar quadrature.
pub fn g_alpha(r: f64, alpha: f64, n: usize) -> Result<f64> {
    check_alpha(alpha, n)?;
    if !(0.0..1.0).contains(&r) {
        return Err(domain(format!("g_α needs 0 <= R < 1, got {r}")));
    }
    Ok(g_alpha_raw(r, alpha, n, &gauss_legendre(20)))
}

fn g_alpha_raw(r: f64, alpha: f64, n: usize, rule: &Rule) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let e = -0.5 * alpha;
    polar_integral(n, 1.0 - r, rule, |phi| dist2(r, phi).powf(e))
}

/// `g_α` tabulated on Chebyshev points in `z = -ln(1-R)` for `R <= 0.999`;
/// larger `R` falls back to direct quadrature.
#[derive(Debug, Clone)]
pub struct AngularKernelTable {
    pub n: usize,
    pub alpha: f64,
    pub regime: Regime,
    z_max: f64,
    xs: Vec<f64>,
    vals: Vec<f64>,
    bary: Vec<f64>,
    rule: Rule,
}

const TABLE_SPLIT: f64 = 0.999;
const TABLE_POINTS: usize = 96;

impl AngularKernelTable {
    pub fn new(alpha: f64, n: usize) -> Result<Self> {
        check_alpha(alpha, n)?;
        let rule = gauss_legendre(20);
        let z_max = -(1.0 - TABLE_SPLIT).ln();
        let m = TABLE_POINTS;
        let xs: Vec<f64> = (0..=m).map(|j| (PI * j as f64 / m as f64).cos()).collect();
        let vals = xs
            .iter()
            .map(|&x| {
                let z = 0.5 * (x + 1.0) * z_max;
                g_alpha_raw(-(-z).exp_m1(), alpha, n, &rule)
            })
            .collect();
        let bary = (0..=m)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == m {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { n, alpha, regime: regime(alpha, n), z_max, xs, vals, bary, rule })
    }

    /// `g_α(R)` for `0 <= R < 1`.
    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        if r > TABLE_SPLIT {
            return g_alpha_raw(r, self.alpha, self.n, &self.rule);
        }
        let z = -(-r).ln_1p();
        let x = (2.0 * z / self.z_max - 1.0).clamp(-1.0, 1.0);
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&xj, &fj), &bj) in self.xs.iter().zip(&self.vals).zip(&self.bary) {
            let d = x - xj;
            if d == 0.0 {
                return fj;
            }
            let c = bj / d;
            num += c * fj;
            den += c;
        }
        num / den
    }

    /// Write `R,value` rows at `samples` equispaced points on `[0, r_max]`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, r_max: f64, samples: usize) -> std::io::Result<()> {
        writeln!(out, "R,value")?;
        for i in 0..samples {
            let r = r_max * i as f64 / (samples.max(2) - 1) as f64;
            writeln!(out, "{r:e},{:e}", self.eval(r))?;
        }
        Ok(())
    }
}

/// Mean of `ln|r e₁ - ρω|` over `ω ∈ S^{n-1}`.
pub fn a_log(r: f64, rho: f64, n: usize) -> Result<f64> {
    if r < 0.0 || rho < 0.0 || (r == 0.0 && rho == 0.0) {
        return Err(domain("a_log needs r, ρ >= 0, not both zero"));
    }
    let (lo, hi) = if r <= rho { (r, rho) } else { (rho, r) };
    Ok(hi.ln() + log_profile(lo / hi, n, &gauss_legendre(20)))
}

/// `L_n(R) = mean of ln|e₁ - Rω|` for `0 <= R <= 1`.
fn log_profile(r: f64, n: usize, rule: &Rule) -> f64 {
    if r == 0.0 || n == 2 {
        return 0.0;
    }
    polar_integral(n, (1.0 - r).max(1e-15), rule, |phi| 0.5 * dist2(r, phi).ln())
}

/// Cubic-interpolated table of `L_n` on `[0, 1]`.
#[derive(Debug, Clone)]
struct LogTable {
    vals: Vec<f64>,
}

impl LogTable {
    const POINTS: usize = 4097;

    fn new(n: usize) -> Self {
        let rule = gauss_legendre(20);
        let m = Self::POINTS - 1;
        let vals = (0..=m).map(|i| log_profile(i as f64 / m as f64, n, &rule)).collect();
        Self { vals }
    }

    fn eval(&self, r: f64) -> f64 {
        let m = Self::POINTS - 1;
        let x = r * m as f64;
        let i = (x.floor() as usize).clamp(1, m - 2);
        let f = x - i as f64;
        let (p0, p1, p2, p3) = (self.vals[i - 1], self.vals[i], self.vals[i + 1], self.vals[i + 2]);
        // Lagrange cubic through i-1..i+2.
        p1 + 0.5 * f * (p2 - p0 + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + f * (3.0 * (p1 - p2) + p3 - p0)))
    }
}

/// Fraction of mass allowed beyond the grid ends in [`potential_v`].
pub const MASS_TAIL_TOL: f64 = 1e-8;

/// `v(r) = (1/γ_n) ∫ [ln(1+ρ) - A(r,ρ)] e^{nu(ρ)} dy` on the field's log grid.
pub fn potential_v(u: &RadialField) -> Result<RadialField> {
    if u.chart != Chart::LogRadial {
        return Err(domain("potential_v expects a log-radial field"));
    }
    let n = u.n;
    let nf = n as f64;
    let m = u.len();
    let h = (u.grid[1] - u.grid[0]).abs();
    let radii: Vec<f64> = u.grid.iter().map(|t| (-t).exp()).collect();
    let dens: Vec<f64> = (0..m)
        .map(|j| (nf * u.values[j]).exp() * radii[j].powi(n as i32))
        .collect();
    let mut weights: Vec<f64> = dens.iter().map(|d| d * h * area(n - 1)).collect();
    weights[0] *= 0.5;
    weights[m - 1] *= 0.5;
    let total: f64 = weights.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(domain("density e^{nu} has no finite positive mass on the grid"));
    }
    let tail = (dens[0] + dens[m - 1]) * area(n - 1);
    if tail > MASS_TAIL_TOL * total {
        return Err(domain(format!(
            "mass not converged on the grid: end contribution {:.3e} relative",
            tail / total
        )));
    }
    let table = LogTable::new(n);
    let g = gamma_n(n);
    let values: Vec<f64> = radii
        .par_iter()
        .map(|&r| {
            let mut acc = 0.0;
            for j in 0..m {
                let rho = radii[j];
                let (lo, hi) = if r <= rho { (r, rho) } else { (rho, r) };
                let a = hi.ln() + table.eval(lo / hi);
                acc += weights[j] * (rho.ln_1p() - a);
            }
            acc / g
        })
        .collect();
    RadialField::new(Chart::LogRadial, u.grid.clone(), values, n)
}

/// Weight between source and target radii in [`conv_t_radial`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConvMode {
    /// Plain Riesz kernel `|x-y|^{-n+s}`.
    Flat,
    /// Kernel pulled back from the sphere, with conformal weight
    /// `((1+r²)/(1+ρ²))^{(n-s)/2}` and an optional correction of order `s + α`.
    SphereConformal { c_corr: f64, alpha: f64 },
}

/// Output of [`conv_t_radial`].
#[derive(Debug, Clone)]
pub struct ConvOutput {
    pub field: RadialField,
    /// Largest relative change when the near-diagonal resolution is doubled.
    pub est_error: f64,
    pub warning: Option<String>,
}

struct ConvKernel {
    n: usize,
    s: f64,
    table: AngularKernelTable,
}

impl ConvKernel {
    fn new(n: usize, s: f64) -> Result<Self> {
        Ok(Self { n, s, table: AngularKernelTable::new(n as f64 - s, n)? })
    }

    /// Kernel per unit `dτ` with `ρ = e^{-τ}`.
    #[inline]
    fn k(&self, r: f64, rho: f64) -> f64 {
        let (lo, hi) = if rho <= r { (rho, r) } else { (r, rho) };
        let alpha = self.n as f64 - self.s;
        hi.powf(-alpha) * self.table.eval(lo / hi) * rho.powi(self.n as i32)
    }
}

/// Radial form of `∫ |x-y|^{-n+s} f(y) dy`, evaluated at `targets` (radii).
///
/// `f` lives on a log-radial grid, is treated as piecewise linear in `t`
/// between nodes and as zero outside its grid, so indicator functions are
/// exact when their edges are grid ends.
pub fn conv_t_radial(f: &RadialField, s: f64, mode: ConvMode, targets: &[f64]) -> Result<ConvOutput> {
    if f.chart != Chart::LogRadial {
        return Err(domain("conv_t_radial expects a log-radial density"));
    }
    let n = f.n;
    if !(s > 0.0 && s < n as f64) {
        return Err(domain(format!("s = {s} must lie in (0, {n})")));
    }
    let main = ConvKernel::new(n, s)?;
    let corr = match mode {
        ConvMode::SphereConformal { c_corr, alpha } if c_corr != 0.0 => {
            if !(alpha > 0.0 && s + alpha < n as f64) {
                return Err(domain("correction exponent needs 0 < α and s + α < n"));
            }
            Some((c_corr, ConvKernel::new(n, s + alpha)?))
        }
        _ => None,
    };
    // Work with increasing τ.
    let (tau, vals): (Vec<f64>, Vec<f64>) = if f.grid[1] > f.grid[0] {
        (f.grid.clone(), f.values.clone())
    } else {
        (f.grid.iter().rev().copied().collect(), f.values.iter().rev().copied().collect())
    };
    let sphere = !matches!(mode, ConvMode::Flat);
    let eval_at = |r: f64, q: usize| -> f64 {
        let kern = |rho: f64| -> f64 {
            let mut k = main.k(r, rho);
            if sphere {
                k *= ((1.0 + r * r) / (1.0 + rho * rho)).powf((n as f64 - s) / 2.0);
            }
            if let Some((c, ck)) = &corr {
                let we = ((1.0 + r * r) / (1.0 + rho * rho)).powf((n as f64 - ck.s) / 2.0);
                k += c * ck.k(r, rho) * we;
            }
            k
        };
        area(n - 1) * integrate_cells(&tau, &vals, -r.ln(), q, s, &kern)
    };
    let coarse: Vec<f64> = targets.par_iter().map(|&r| eval_at(r, 16)).collect();
    let fine: Vec<f64> = targets.par_iter().map(|&r| eval_at(r, 32)).collect();
    let mut est: f64 = 0.0;
    for (a, b) in coarse.iter().zip(&fine) {
        let scale = b.abs().max(1e-300);
        est = est.max((a - b).abs() / scale);
    }
    let warning = if s <= 1.0 && est > 1e-6 {
        Some(format!(
            "s = {s} <= 1: near-diagonal kernel blow-up resolved only to ~{est:.1e} relative"
        ))
    } else {
        None
    };
    let field = RadialField {
        chart: Chart::EuclideanRadius,
        grid: targets.to_vec(),
        values: fine,
        n,
    };
    Ok(ConvOutput { field, est_error: est, warning })
}

/// `∫ K(ρ(τ)) f(τ) dτ` with `f` linear on each cell. Cells touching the
/// singular point `τ_r` are split there and integrated with a power-law
/// substitution clustering nodes at `τ_r`.
fn integrate_cells(tau: &[f64], vals: &[f64], tau_r: f64, q: usize, s: f64, kern: &dyn Fn(f64) -> f64) -> f64 {
    let rule = gauss_legendre(q);
    let regular = gauss_legendre(8);
    let p = (1.0 / s).max(2.0);
    let lin = |a: f64, b: f64, fa: f64, fb: f64, t: f64| fa + (fb - fa) * (t - a) / (b - a);
    // Width around τ_r that receives the graded treatment.
    let h = (tau[1] - tau[0]).abs();
    let band = 2.0 * h;
    let mut acc = 0.0;
    for c in 0..tau.len() - 1 {
        let (a, b) = (tau[c], tau[c + 1]);
        let (fa, fb) = (vals[c], vals[c + 1]);
        if fa == 0.0 && fb == 0.0 {
            continue;
        }
        let near = tau_r > a - band && tau_r < b + band;
        if !near {
            for (t, w) in regular.mapped(a, b) {
                acc += w * kern((-t).exp()) * lin(a, b, fa, fb, t);
            }
            continue;
        }
        // Pieces [lo, hi] with one end at distance zero or more from τ_r.
        let mut pieces = Vec::new();
        if tau_r > a && tau_r < b {
            pieces.push((a, tau_r));
            pieces.push((tau_r, b));
        } else {
            pieces.push((a, b));
        }
        for (lo, hi) in pieces {
            // Distance to τ_r runs from d0 (near end) to d1 (far end).
            let (anchor, far) = if (lo - tau_r).abs() <= (hi - tau_r).abs() { (lo, hi) } else { (hi, lo) };
            let dir = if far > tau_r { 1.0 } else { -1.0 };
            let d0 = (anchor - tau_r).abs();
            let d1 = (far - tau_r).abs();
            for (v, w) in rule.mapped(0.0, 1.0) {
                let (d, jac) = if d0 == 0.0 {
                    (d1 * v.powf(p), d1 * p * v.powf(p - 1.0))
                } else {
                    let q = d1 / d0;
                    let d = d0 * q.powf(v);
                    (d, d * q.ln())
                };
                let t = tau_r + dir * d;
                acc += w * jac * kern((-t).exp()) * lin(a, b, fa, fb, t);
            }
        }
    }
    acc
}

/// Options for [`green_spectral`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenOptions {
    pub l_max: usize,
    /// Exponential filter `exp(-a (l/L)^8)` with this `a`; `None` gives the
    /// raw truncated sum.
    pub filter: Option<f64>,
}

impl Default for GreenOptions {
    fn default() -> Self {
        Self { l_max: 64, filter: Some(36.0) }
    }
}

/// Spectral Green's kernel value with a tail estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenValue {
    pub value: f64,
    /// Difference to the same sum at three quarters of the degree range.
    pub tail_estimate: f64,
}

/// `Σ_l m_l^{-1} Z_l(cos θ) Z_l(1)` over degrees with nonzero multiplier.
pub fn green_spectral(variant: PaneitzVariant, n: usize, s: f64, theta: f64, opts: GreenOptions) -> Result<GreenValue> {
    if variant == PaneitzVariant::P2s {
        return Err(Error::Unsupported("green_spectral supports P_s and P_2s^{1/2}".into()));
    }
    if theta <= 0.0 {
        return Err(Error::Singularity("Green's kernel is singular on the diagonal θ = 0".into()));
    }
    if theta > PI + 1e-15 {
        return Err(domain("θ must lie in (0, π]"));
    }
    let sum = |l_max: usize| -> f64 {
        let scales = zonal_scales(n, l_max);
        let mut zx = vec![0.0; l_max + 1];
        let mut z1 = vec![0.0; l_max + 1];
        zonal_values_into(theta.cos(), n, &scales, &mut zx);
        zonal_values_into(1.0, n, &scales, &mut z1);
        let mut acc = 0.0;
        for l in 0..=l_max {
            let m = variant_multiplier(variant, l, n, s);
            if m == 0.0 {
                continue;
            }
            let sigma = match opts.filter {
                Some(a) => (-a * (l as f64 / l_max as f64).powi(8)).exp(),
                None => 1.0,
            };
            acc += sigma * zx[l] * z1[l] / m;
        }
        acc
    };
    let value = sum(opts.l_max);
    let other = sum((3 * opts.l_max / 4).max(1));
    Ok(GreenValue { value, tail_estimate: (value - other).abs() })
}

/// `K_{n,s} |η-ξ|^{-n+s}` at geodesic angle `θ`, with `|η-ξ|² = 2 - 2cos θ`.
pub fn green_closed_form(n: usize, s: f64, theta: f64) -> f64 {
    let chord = (2.0 - 2.0 * theta.cos()).sqrt();
    k_ns(n, s) * chord.powf(-(n as f64) + s)
}

/// Fit `α` in `G θ^{n-s}/K_{n,s} = 1 + c θ^α` from the given angles.
pub fn fit_green_exponent(n: usize, s: f64, thetas: &[f64], opts_for: impl Fn(f64) -> GreenOptions) -> Result<f64> {
    let k = k_ns(n, s);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &th in thetas {
        let g = green_spectral(PaneitzVariant::P2sSqrt, n, s, th, opts_for(th))?.value;
        let dev = (g * th.powf(n as f64 - s) / k - 1.0).abs();
        if dev > 0.0 {
            xs.push(th.ln());
            ys.push(dev.ln());
        }
    }
    if xs.len() < 2 {
        return Err(domain("not enough nonzero deviations to fit an exponent"));
    }
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::{bubble, kelvin, mass, LogGrid};
    use crate::constants::lambda_1;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn g_alpha_basic() {
        assert_eq!(g_alpha(0.0, 1.3, 4).unwrap(), 1.0);
        for r in [0.0, 0.3, 0.6, 0.9, 0.99, 0.9999] {
            assert!((g_alpha(r, 2.0, 4).unwrap() - 1.0).abs() < 1e-12, "R = {r}");
        }
        // n = 3, α = 1 is again the harmonic case.
        assert!((g_alpha(0.7, 1.0, 3).unwrap() - 1.0).abs() < 1e-12);
        assert!(g_alpha(1.0, 2.0, 4).is_err());
        assert!(g_alpha(0.5, 4.0, 4).is_err());
        assert!(g_alpha(0.5, 0.0, 4).is_err());
    }

    #[test]
    fn g_alpha_closed_form_n3() {
        // n = 3: g_α(R) = ((1+R)^{2-α} - (1-R)^{2-α}) / (2R(2-α)).
        for &a in &[0.5f64, 1.5, 2.5] {
            for &r in &[0.1f64, 0.5, 0.95, 0.999] {
                let exact = ((1.0 + r).powf(2.0 - a) - (1.0 - r).powf(2.0 - a)) / (2.0 * r * (2.0 - a));
                assert_relative_eq!(g_alpha(r, a, 3).unwrap(), exact, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn g_alpha_bounds_and_monotonicity() {
        let g3 = |r| g_alpha(r, 3.0, 4).unwrap();
        assert!(g3(0.5) < g3(0.9) && g3(0.9) < g3(0.99));
        assert!(g3(0.999) < 10.0 * g3(0.9));
        let g1 = |r| g_alpha(r, 1.0, 4).unwrap();
        assert!(g1(0.5) > g1(0.9) && g1(0.9) > g1(0.99));
        assert_eq!(regime(3.0, 4), Regime::Log);
        assert_eq!(regime(3.5, 4), Regime::Power);
        assert_eq!(regime(1.0, 4), Regime::Bounded);
        // Power regime: (1-R)^{α-n+1} g stays bounded.
        let p = |r: f64| (1.0 - r).powf(0.5) * g_alpha(r, 3.5, 4).unwrap();
        assert!(p(0.9999) / p(0.99) < 2.0);
    }

    #[test]
    fn table_matches_direct() {
        for &a in &[1.0, 2.5, 3.0, 3.7] {
            let t = AngularKernelTable::new(a, 4).unwrap();
            for i in 0..200 {
                let r = 0.9995 * i as f64 / 199.0;
                let d = g_alpha(r, a, 4).unwrap();
                assert_relative_eq!(t.eval(r), d, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn a_log_identities() {
        assert_relative_eq!(a_log(2.0, 0.0, 4).unwrap(), 2f64.ln(), max_relative = 1e-15);
        assert!((a_log(2.0, 3.0, 4).unwrap() - a_log(3.0, 2.0, 4).unwrap()).abs() < 1e-12);
        for &(r, rho) in &[(0.5, 2.0), (3.0, 3.0), (1.0, 0.2)] {
            let exact: f64 = f64::max(r, rho).ln();
            assert!((a_log(r, rho, 2).unwrap() - exact).abs() < 1e-8);
        }
        // n = 4: mean of ln|e₁ - Rω| over S³ is R²/4 (Fourier series of the log kernel).
        for &(r, rho) in &[(0.5f64, 2.0f64), (3.0, 3.0), (1.0, 0.2), (7.0, 6.9)] {
            let (lo, hi) = if r < rho { (r, rho) } else { (rho, r) };
            let exact = hi.ln() + (lo / hi).powi(2) / 4.0;
            assert!((a_log(r, rho, 4).unwrap() - exact).abs() < 1e-10, "{r} {rho}");
        }
    }

    proptest! {
        #[test]
        fn a_log_symmetric(r in 0.01f64..50.0, rho in 0.01f64..50.0, n in 2usize..7) {
            let a = a_log(r, rho, n).unwrap();
            let b = a_log(rho, r, n).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn log_table_accuracy() {
        let t = LogTable::new(4);
        for i in 0..=100 {
            let r = i as f64 / 100.0;
            assert!((t.eval(r) - r * r / 4.0).abs() < 1e-10);
        }
    }

    fn slope(x: &[f64], y: &[f64]) -> f64 {
        let mx = x.iter().sum::<f64>() / x.len() as f64;
        let my = y.iter().sum::<f64>() / y.len() as f64;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        sxy / sxx
    }

    #[test]
    fn potential_of_bubble() {
        let g = LogGrid::new(18.0, 1025).unwrap();
        let u = bubble(4, 1.0, &g);
        let v = potential_v(&u).unwrap();
        let lam = mass(&u).unwrap();
        let ratio = lam / gamma_n(4);
        for (t, val) in v.grid.iter().zip(&v.values) {
            let lr = -t;
            if lr <= 0.0 {
                assert!(*val >= 0.0);
            } else {
                assert!(*val >= -ratio * lr - 1e-12);
            }
        }
        let win = g.ln_r_window(6.0, 12.0);
        let xs: Vec<f64> = win.clone().map(|i| -g.t(i)).collect();
        let ys: Vec<f64> = win.map(|i| v.values[i]).collect();
        assert!((slope(&xs, &ys) + lambda_1(4) / gamma_n(4)).abs() < 0.04);
    }

    #[test]
    fn potential_transform_law() {
        let g = LogGrid::new(18.0, 801).unwrap();
        let u = bubble(4, 2.0, &g);
        let ub = kelvin(&u).unwrap();
        let v = potential_v(&u).unwrap();
        let vb = potential_v(&ub).unwrap();
        let ratio = mass(&u).unwrap() / gamma_n(4);
        let m = g.nodes;
        for i in (0..m).step_by(37) {
            let t = g.t(i);
            let lr = -t;
            if lr.abs() > 10.0 {
                continue;
            }
            let expect = v.values[m - 1 - i] - ratio * lr;
            assert!((vb.values[i] - expect).abs() < 1e-3, "t = {t}: {} vs {expect}", vb.values[i]);
        }
    }

    #[test]
    fn potential_rejects_unconverged_mass() {
        let g = LogGrid::new(4.0, 101).unwrap();
        let u = g.field(4, |_| 0.0);
        assert!(potential_v(&u).is_err());
    }

    fn indicator(lo: f64, hi: f64, nodes: usize, n: usize, f: impl Fn(f64) -> f64) -> RadialField {
        let tmax = -lo.ln();
        let tmin = -hi.ln();
        let grid: Vec<f64> = (0..nodes).map(|i| tmin + (tmax - tmin) * i as f64 / (nodes - 1) as f64).collect();
        let values = grid.iter().map(|t| f((-t).exp())).collect();
        RadialField::new(Chart::LogRadial, grid, values, n).unwrap()
    }

    #[test]
    fn flat_indicator_closed_form() {
        let f = indicator(1e-8, 1.0, 400, 4, |_| 1.0);
        let targets = [1.5, 2.0, 5.0];
        let out = conv_t_radial(&f, 2.0, ConvMode::Flat, &targets).unwrap();
        for (r, v) in targets.iter().zip(&out.field.values) {
            let exact = sphere_area(3) / (4.0 * r * r);
            assert_relative_eq!(*v, exact, max_relative = 1e-8);
        }
        let zero = indicator(0.1, 1.0, 50, 4, |_| 0.0);
        let z = conv_t_radial(&zero, 2.0, ConvMode::Flat, &[0.5, 2.0]).unwrap();
        assert!(z.field.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_inside_support_closed_form() {
        // n = 4, s = 2, f = 1 on B₁: Tf(r) = |S³|(r²/4 + (1 - r²)/2).
        let f = indicator(1e-8, 1.0, 400, 4, |_| 1.0);
        let targets = [0.3, 0.5, 0.77];
        let out = conv_t_radial(&f, 2.0, ConvMode::Flat, &targets).unwrap();
        for (r, v) in targets.iter().zip(&out.field.values) {
            let exact = sphere_area(3) * (0.25 * r * r + 0.5 * (1.0 - r * r));
            assert_relative_eq!(*v, exact, max_relative = 1e-7);
        }
    }

    #[test]
    fn small_order_near_diagonal() {
        // n = 3, s = 0.5: compare against the closed-form g for n = 3 and a
        // fine independent product rule in ρ.
        let f = indicator(0.5, 1.0, 200, 3, |_| 1.0);
        let r = 0.75;
        let out = conv_t_radial(&f, 0.5, ConvMode::Flat, &[r]).unwrap();
        let a = 2.5;
        let g = |x: f64| ((1.0 + x).powf(2.0 - a) - (1.0 - x).powf(2.0 - a)) / (2.0 * x * (2.0 - a));
        // Substitution ρ = r ± d^{2} clusters nodes at the diagonal.
        let rule = gauss_legendre(60);
        let mut acc = 0.0;
        for (lo, hi, sign) in [(0.5f64, r, -1.0), (r, 1.0f64, 1.0)] {
            let dmax = ((hi - lo) as f64).powf(0.5);
            for (d, w) in rule.mapped(0.0, dmax) {
                let rho = r + sign * d * d;
                let jac = 2.0 * d;
                let k = if rho < r {
                    r.powf(-a) * g(rho / r) * rho * rho
                } else {
                    rho.powf(-a) * g(r / rho) * rho * rho
                };
                acc += w * jac * k;
            }
        }
        let exact = sphere_area(2) * acc;
        assert_relative_eq!(out.field.values[0], exact, max_relative = 1e-5);
    }

    #[test]
    fn oneil_bound_violation_witness() {
        let n = 4;
        let s = 0.5;
        let f = indicator(0.5, 1.0, 200, n, |_| 1.0);
        let r = 0.25;
        let tf = conv_t_radial(&f, s, ConvMode::Flat, &[r]).unwrap().field.values[0];
        // r < r₀, so only the outer integral contributes: |S³| ∫_{1/2}^1 ρ^{s-1} dρ.
        let bound = sphere_area(3) * (1.0 - 0.5f64.powf(s)) / s;
        assert!(tf > bound, "{tf} <= {bound}");
    }

    #[test]
    fn conformal_mode_with_correction() {
        let f = indicator(0.1, 1.0, 120, 4, |_| 1.0);
        let flat = conv_t_radial(&f, 2.0, ConvMode::Flat, &[0.05, 2.0]).unwrap();
        let sph = conv_t_radial(&f, 2.0, ConvMode::SphereConformal { c_corr: 0.0, alpha: 1.0 }, &[0.05, 2.0]).unwrap();
        let corr = conv_t_radial(&f, 2.0, ConvMode::SphereConformal { c_corr: 1.0, alpha: 1.0 }, &[0.05, 2.0]).unwrap();
        // Target outside the support: w = ((1+r²)/(1+ρ²)) enlarges values for r = 2.
        assert!(sph.field.values[1] > flat.field.values[1]);
        assert!(corr.field.values.iter().zip(&sph.field.values).all(|(a, b)| a > b));
    }

    #[test]
    fn green_ps_matches_closed_form() {
        let th = PI / 2.0;
        let g = green_spectral(PaneitzVariant::Ps, 4, 2.0, th, GreenOptions::default()).unwrap();
        let exact = green_closed_form(4, 2.0, th);
        assert_relative_eq!(exact, 1.0 / (8.0 * PI * PI), max_relative = 1e-14);
        assert!((g.value - exact).abs() / exact < 0.01);
        let raw = green_spectral(PaneitzVariant::Ps, 4, 2.0, th, GreenOptions { l_max: 64, filter: None }).unwrap();
        assert!(raw.tail_estimate > g.tail_estimate);
        assert!(green_spectral(PaneitzVariant::Ps, 4, 2.0, PI, GreenOptions::default()).unwrap().value.is_finite());
        assert!(matches!(
            green_spectral(PaneitzVariant::Ps, 4, 2.0, 0.0, GreenOptions::default()),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn green_sqrt_ratio_trend() {
        let k = k_ns(4, 2.0);
        let opts = |th: f64| GreenOptions { l_max: (200.0 / th) as usize, filter: Some(36.0) };
        let ratio = |th: f64| green_spectral(PaneitzVariant::P2sSqrt, 4, 2.0, th, opts(th)).unwrap().value * th * th / k;
        let r = [ratio(0.3), ratio(0.1), ratio(0.03)];
        assert!((r[2] - 1.0).abs() < (r[0] - 1.0).abs().max(1e-3) + 1e-3);
        assert!(r.iter().all(|x| (x - 1.0).abs() < 0.05));
        let alpha = fit_green_exponent(4, 2.0, &[0.4, 0.2, 0.1], opts).unwrap();
        assert!(alpha.is_finite());
    }
}
