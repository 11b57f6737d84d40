//! Weighted Moser–Trudinger experiments: weights, exponential integrals,
//! sharpness sequences, the one-dimensional Adams-type lemma, and the
//! failure of a global inequality on `R^n`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{Chart, RadialField};
use crate::constants::{k_ns, sphere_area};
use crate::error::{domain, Error, Result};
use crate::kernels::{conv_t_radial, ConvMode};
use crate::quadrature::{gauss_legendre, Rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightDomain {
    /// `Q(θ) = C θ^β exp(-(π-θ)^{-σ})` on the sphere, with `θ` the distance to
    /// the pole sent to the origin.
    Sphere,
    /// `|x|^β` on a ball.
    Ball,
    /// `C |x|^β exp(-|x|^σ)` on `R^n`.
    EuclideanDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub beta: f64,
    pub sigma: f64,
    pub c: f64,
    pub domain: WeightDomain,
}

impl WeightSpec {
    pub fn new(beta: f64, sigma: f64, c: f64, kind: WeightDomain) -> Result<Self> {
        if !(sigma > 0.0 && c > 0.0) {
            return Err(domain("weight needs σ > 0 and C > 0"));
        }
        Ok(Self { beta, sigma, c, domain: kind })
    }

    pub fn ball(beta: f64) -> Self {
        Self { beta, sigma: 1.0, c: 1.0, domain: WeightDomain::Ball }
    }

    /// Natural log of the weight at coordinate `x` (a polar angle on the
    /// sphere, a radius otherwise).
    pub fn ln_eval(&self, x: f64) -> f64 {
        let lnx = x.ln();
        match self.domain {
            WeightDomain::Ball => {
                if self.beta == 0.0 {
                    0.0
                } else {
                    self.beta * lnx
                }
            }
            WeightDomain::EuclideanDecay => self.c.ln() + self.beta * lnx - x.powf(self.sigma),
            WeightDomain::Sphere => {
                let south = PI - x;
                if south <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                self.c.ln() + self.beta * lnx - south.powf(-self.sigma)
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.ln_eval(x).exp()
    }
}

/// `(n+β)/|S^{n-1}| · K_{n,s}^{-n/(n-s)}`.
pub fn sharp_constant(n: usize, s: f64, beta: f64) -> Result<f64> {
    let nf = n as f64;
    if !(s > 0.0 && s < nf) {
        return Err(domain(format!("s = {s} must lie in (0, {n})")));
    }
    if beta <= -nf {
        return Err(domain(format!("β = {beta} <= -n: weight not integrable at the origin")));
    }
    Ok((nf + beta) / sphere_area(n - 1) * k_ns(n, s).powf(-nf / (nf - s)))
}

/// Result of [`exp_integral`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpIntegral {
    pub value: f64,
    pub ln_value: f64,
    /// First panel after which the running sum left the representable range.
    pub overflow_panel: Option<usize>,
}

impl ExpIntegral {
    pub fn diverged(&self) -> bool {
        self.overflow_panel.is_some()
    }
}

const PANEL: usize = 32;

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Trapezoid weights on a monotone, possibly nonuniform grid.
fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let mut w = vec![0.0; m];
    for i in 0..m - 1 {
        let h = 0.5 * (x[i + 1] - x[i]).abs();
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

/// `∫ exp(γ |u|^p) w dμ` by the trapezoid rule in the field's coordinate,
/// accumulated panel by panel in log space.
pub fn exp_integral(u: &RadialField, gamma: f64, p: f64, w: &WeightSpec) -> Result<ExpIntegral> {
    let n = u.n;
    let nf = n as f64;
    let area = sphere_area(n - 1);
    let sphere = w.domain == WeightDomain::Sphere;
    match (u.chart, sphere) {
        (Chart::SpherePolar, true) | (Chart::LogRadial, false) | (Chart::EuclideanRadius, false) => {}
        _ => return Err(domain("field chart and weight domain are incompatible")),
    }
    let tw = trapezoid_weights(&u.grid);
    let mut total = f64::NEG_INFINITY;
    let mut overflow = None;
    let limit = f64::MAX.ln();
    for (k, chunk) in (0..u.len()).collect::<Vec<_>>().chunks(PANEL).enumerate() {
        let mut panel = f64::NEG_INFINITY;
        for &i in chunk {
            let x = u.grid[i];
            // Coordinate of the weight and log of the measure density.
            let (wx, ln_meas) = match u.chart {
                Chart::LogRadial => ((-x).exp(), -nf * x),
                Chart::EuclideanRadius => (x, (nf - 1.0) * x.ln()),
                Chart::SpherePolar => (x, (nf - 1.0) * x.sin().ln()),
            };
            let term = tw[i].ln() + ln_meas + w.ln_eval(wx) + gamma * u.values[i].abs().powf(p);
            if term.is_nan() {
                continue;
            }
            panel = log_add(panel, term);
        }
        total = log_add(total, panel);
        if overflow.is_none() && total + area.ln() > limit {
            overflow = Some(k);
        }
    }
    let ln_value = total + area.ln();
    let value = if overflow.is_some() { f64::INFINITY } else { ln_value.exp() };
    Ok(ExpIntegral { value, ln_value, overflow_panel: overflow })
}

/// `∫ |f|^q dx` for a log-radial density, trapezoid in `t`.
pub fn lp_norm_pow(f: &RadialField, q: f64) -> Result<f64> {
    if f.chart != Chart::LogRadial {
        return Err(domain("lp_norm_pow expects a log-radial field"));
    }
    let nf = f.n as f64;
    let tw = trapezoid_weights(&f.grid);
    let acc: f64 = f
        .grid
        .iter()
        .zip(&f.values)
        .zip(&tw)
        .map(|((&t, &v), &w)| w * v.abs().powf(q) * (-nf * t).exp())
        .sum();
    Ok(sphere_area(f.n - 1) * acc)
}

fn log_radial_density(lo: f64, hi: f64, n: usize, nodes: usize, f: impl Fn(f64) -> f64) -> Result<RadialField> {
    let (t0, t1) = (-hi.ln(), -lo.ln());
    let grid: Vec<f64> = (0..nodes)
        .map(|i| t0 + (t1 - t0) * i as f64 / (nodes - 1) as f64)
        .collect();
    RadialField::from_fn(Chart::LogRadial, grid, n, |t| f((-t).exp()))
}

/// `|S^{n-1}|^{-1} ln(R/r)^{-1} |x|^{-s}` on `r <= |x| <= R`, sampled on a log
/// grid spanning exactly that annulus.
pub fn moser_sequence(r: f64, big_r: f64, n: usize, s: f64, nodes: usize) -> Result<RadialField> {
    if !(r > 0.0 && r < big_r) {
        return Err(domain(format!("Moser sequence needs 0 < r < R, got r = {r}, R = {big_r}")));
    }
    let c = 1.0 / (sphere_area(n - 1) * (big_r / r).ln());
    log_radial_density(r, big_r, n, nodes.max(2), |x| c * x.powf(-s))
}

/// Closed form of `∫ f_{r,R}^{n/s}`.
pub fn moser_norm_pow(r: f64, big_r: f64, n: usize, s: f64) -> f64 {
    let e = -(n as f64 - s) / s;
    sphere_area(n - 1).powf(e) * (big_r / r).ln().powf(e)
}

/// Uniform grid on `[t0, t1]`.
fn log_targets(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| t0 + (t1 - t0) * i as f64 / (count - 1) as f64).collect()
}

/// `K_{n,s} (I_{n-s} * f)` on the log grid `ts`, as a log-radial field.
fn riesz_potential(f: &RadialField, s: f64, ts: &[f64], scale: f64) -> Result<RadialField> {
    let radii: Vec<f64> = ts.iter().map(|t| (-t).exp()).collect();
    let out = conv_t_radial(f, s, ConvMode::Flat, &radii)?;
    let values = out.field.values.iter().map(|v| scale * v).collect();
    RadialField::new(Chart::LogRadial, ts.to_vec(), values, f.n)
}

/// One row of a sharpness or counterexample scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub parameter: f64,
    pub integral: f64,
    pub overflow: bool,
    /// Scan-specific side quantity: `min Tf` on `B_r` for the sharpness scan,
    /// `min u_R / (ln R)^{(n-s)/n}` on `B_1` for the counterexample.
    pub aux: f64,
}

/// Grid density (nodes per unit of `ln r`) for densities in the scans.
const SCAN_DENSITY: f64 = 48.0;

/// For each `r`, evaluate `∫_{B_1} exp(γ |K T(f/‖f‖)|^{n/(n-s)}) |x|^β` with
/// `f = f_{r,1}` and `γ = γ_factor · sharp_constant(n, s, β)`.
pub fn sharpness_scan(n: usize, s: f64, beta: f64, gamma_factor: f64, r_list: &[f64]) -> Result<Vec<ScanRow>> {
    if gamma_factor <= 0.0 {
        return Err(domain("γ factor must be positive"));
    }
    if r_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(domain("r_list must be decreasing"));
    }
    let nf = n as f64;
    let gamma = gamma_factor * sharp_constant(n, s, beta)?;
    let p = nf / (nf - s);
    let k = k_ns(n, s);
    let weight = WeightSpec::ball(beta);
    r_list
        .par_iter()
        .map(|&r| {
            let big_l = -r.ln();
            let nodes = (SCAN_DENSITY * big_l).ceil() as usize + 2;
            let f = moser_sequence(r, 1.0, n, s, nodes)?;
            let norm = moser_norm_pow(r, 1.0, n, s).powf(s / nf);
            // Inside B_r the potential is nearly flat; 12/(n+β) units of t
            // beyond ln(1/r) leave a tail below e^{-12} of the B_r share.
            let t1 = big_l + 12.0 / (nf + beta).max(0.5);
            let count = (SCAN_DENSITY * t1).ceil() as usize + 2;
            let ts = log_targets(0.0, t1, count);
            let u = riesz_potential(&f, s, &ts, k / norm)?;
            let inner = ts
                .iter()
                .zip(&u.values)
                .filter(|(t, _)| **t >= big_l)
                .map(|(_, v)| *v / k)
                .fold(f64::INFINITY, f64::min);
            let e = exp_integral(&u, gamma, p, &weight)?;
            Ok(ScanRow { parameter: r, integral: e.value, overflow: e.diverged(), aux: inner * norm })
        })
        .collect()
}

/// `f_R = (|S^{n-1}| ln R)^{-s/n} |y|^{-s}` on `1 <= |y| <= R`; for each `R`
/// evaluate `u_R = K_{n,s} I_{n-s} * f_R` on `B_1` and the `B_1` part of
/// `∫ exp(γ |u_R|^{n/(n-s)}) |x|^β e^{-|x|^σ}`, a lower bound for the
/// integral over `R^n`.
pub fn remark_counterexample(r_list: &[f64], n: usize, s: f64, sigma: f64, beta: f64, gamma: f64) -> Result<Vec<ScanRow>> {
    if r_list.iter().any(|&r| r <= std::f64::consts::E) || r_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("R_list must be increasing with every R > e"));
    }
    let nf = n as f64;
    let p = nf / (nf - s);
    let k = k_ns(n, s);
    let weight = WeightSpec::new(beta, sigma, 1.0, WeightDomain::EuclideanDecay)?;
    r_list
        .par_iter()
        .map(|&big_r| {
            let ln_r = big_r.ln();
            let c = (sphere_area(n - 1) * ln_r).powf(-s / nf);
            let nodes = (SCAN_DENSITY * ln_r).ceil() as usize + 2;
            let f = log_radial_density(1.0, big_r, n, nodes, |y| c * y.powf(-s))?;
            let t1 = 30.0 / (nf + beta).max(0.5) + 4.0;
            let ts = log_targets(0.0, t1, (SCAN_DENSITY * t1).ceil() as usize + 2);
            let u = riesz_potential(&f, s, &ts, k)?;
            let scale = ln_r.powf((nf - s) / nf);
            let aux = u.values.iter().fold(f64::INFINITY, |m, v| m.min(v / scale));
            let e = exp_integral(&u, gamma, p, &weight)?;
            Ok(ScanRow { parameter: big_r, integral: e.value, overflow: e.diverged(), aux })
        })
        .collect()
}

/// A nonnegative profile on `R`, linear between samples and zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub w: Vec<f64>,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn new(w: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if w.len() != values.len() || w.len() < 2 || w.windows(2).any(|x| x[1] <= x[0]) {
            return Err(domain("profile needs an increasing grid matching its values"));
        }
        Ok(Self { w, values })
    }

    /// `c` on `[a, b]` with `m` samples.
    pub fn constant(a: f64, b: f64, c: f64, m: usize) -> Result<Self> {
        let w: Vec<f64> = (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect();
        Self::new(w, vec![c; m])
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self { w: self.w.iter().map(|x| x + c).collect(), values: self.values.clone() }
    }

    /// `∫ φ^p`.
    pub fn lp_pow(&self, p: f64) -> f64 {
        let rule = gauss_legendre(8);
        let mut acc = 0.0;
        for i in 0..self.w.len() - 1 {
            let (a, b) = (self.w[i], self.w[i + 1]);
            let (fa, fb) = (self.values[i], self.values[i + 1]);
            acc += rule.integrate(a, b, |x| (fa + (fb - fa) * (x - a) / (b - a)).abs().powf(p));
        }
        acc
    }
}

/// Kernel shape in the Adams-type lemma.
pub enum KernelBase {
    /// `a = 1 + g` on `[0, t]` and `h` elsewhere.
    Indicator,
    /// `a(w, t)` given directly; `g` and `h` then only enter the hypothesis check.
    Custom(Box<dyn Fn(f64, f64) -> f64 + Sync>),
}

pub type Bivariate = Box<dyn Fn(f64, f64) -> f64 + Sync>;

pub struct AdamsKernel {
    pub base: KernelBase,
    pub g: Option<Bivariate>,
    pub h: Option<Bivariate>,
}

impl AdamsKernel {
    pub fn indicator() -> Self {
        Self { base: KernelBase::Indicator, g: None, h: None }
    }

    fn plain(&self) -> bool {
        matches!(self.base, KernelBase::Indicator) && self.g.is_none() && self.h.is_none()
    }

    fn eval(&self, w: f64, t: f64) -> f64 {
        match &self.base {
            KernelBase::Custom(a) => a(w, t),
            KernelBase::Indicator => {
                if (0.0..=t).contains(&w) {
                    1.0 + self.g.as_ref().map_or(0.0, |g| g(w, t))
                } else {
                    self.h.as_ref().map_or(0.0, |h| h(w, t))
                }
            }
        }
    }
}

fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// `∫ a(w, t) φ(w) dw`.
fn kernel_moment(phi: &Profile, a: &AdamsKernel, t: f64, rule: &Rule) -> f64 {
    let mut acc = 0.0;
    for i in 0..phi.w.len() - 1 {
        let (a0, b0) = (phi.w[i], phi.w[i + 1]);
        let (fa, fb) = (phi.values[i], phi.values[i + 1]);
        let lin = |x: f64| fa + (fb - fa) * (x - a0) / (b0 - a0);
        if a.plain() {
            let lo = a0.max(0.0);
            let hi = b0.min(t);
            if hi > lo {
                acc += 0.5 * (lin(lo) + lin(hi)) * (hi - lo);
            }
            continue;
        }
        // Split at the kinks of the indicator.
        let mut cuts = vec![a0];
        for c in [0.0, t] {
            if c > a0 && c < b0 {
                cuts.push(c);
            }
        }
        cuts.push(b0);
        for seg in cuts.windows(2) {
            acc += rule.integrate(seg[0], seg[1], |x| a.eval(x, t) * lin(x));
        }
    }
    acc
}

/// `F(t) = (∫ a(w,t) φ(w) dw)^{p'} - t`.
pub fn adams_f(phi: &Profile, a: &AdamsKernel, t: f64, p: f64) -> Result<f64> {
    check_profile(phi, p)?;
    Ok(kernel_moment(phi, a, t, &gauss_legendre(8)).powf(conjugate(p)) - t)
}

fn check_profile(phi: &Profile, p: f64) -> Result<()> {
    if p <= 1.0 {
        return Err(domain("Adams lemma needs p > 1"));
    }
    let m = phi.lp_pow(p);
    if m > 1.0 + 1e-9 {
        return Err(Error::Precondition(format!("∫φ^p = {m} exceeds 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdamsIntegral {
    pub value: f64,
    /// Upper end of the `t` range actually integrated.
    pub t_end: f64,
    pub infinite: bool,
}

/// Largest `t` explored before a non-decaying integrand is declared divergent.
pub const ADAMS_T_CAP: f64 = 2000.0;

/// `∫_0^∞ exp(α̃ F(t)) dt`, integrating past the support of `φ` in unit
/// chunks until a chunk adds less than `1e-12` of the total.
pub fn adams_integral(phi: &Profile, a: &AdamsKernel, alpha: f64, p: f64) -> Result<AdamsIntegral> {
    check_profile(phi, p)?;
    let pc = conjugate(p);
    let rule = gauss_legendre(8);
    let f = |t: f64| alpha * (kernel_moment(phi, a, t, &rule).powf(pc) - t);
    let mut cuts = vec![0.0];
    cuts.extend(phi.w.iter().copied().filter(|&x| x > 0.0));
    let mut total = 0.0;
    let overflow = f64::MAX.ln() - 1.0;
    let chunk = |lo: f64, hi: f64| -> Option<f64> {
        let mut acc = 0.0;
        for (t, wt) in rule.mapped(lo, hi) {
            let e = f(t);
            if e > overflow {
                return None;
            }
            acc += wt * e.exp();
        }
        Some(acc)
    };
    let pieces: Vec<Option<f64>> = cuts.par_windows(2).map(|c| chunk(c[0], c[1])).collect();
    for piece in pieces {
        match piece {
            Some(v) => total += v,
            None => return Ok(AdamsIntegral { value: f64::INFINITY, t_end: 0.0, infinite: true }),
        }
    }
    let mut t = *cuts.last().unwrap();
    loop {
        let Some(v) = chunk(t, t + 1.0) else {
            return Ok(AdamsIntegral { value: f64::INFINITY, t_end: t, infinite: true });
        };
        total += v;
        t += 1.0;
        if v <= 1e-12 * total {
            return Ok(AdamsIntegral { value: total, t_end: t, infinite: false });
        }
        if t >= ADAMS_T_CAP {
            return Ok(AdamsIntegral { value: f64::INFINITY, t_end: t, infinite: true });
        }
    }
}

/// Measured left side of the integral hypothesis on `g` and `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub b: f64,
    pub worst_t: f64,
}

/// `max_t ∫_0^t (g + g^{p'}) dw + ∫_{R∖[0,t]} h^{p'} dw` over `t_grid`, the
/// outer integral truncated to a window of width `h_window` on each side.
pub fn measure_b(g: Option<&Bivariate>, h: Option<&Bivariate>, p: f64, t_grid: &[f64], h_window: f64) -> HypothesisReport {
    let pc = conjugate(p);
    let rule = gauss_legendre(16);
    let panels = |len: f64| ((len * 4.0).ceil() as usize).max(1);
    let mut worst = HypothesisReport { b: 0.0, worst_t: 0.0 };
    for &t in t_grid {
        let mut acc = 0.0;
        if let Some(g) = g {
            let m = panels(t);
            let step = t / m as f64;
            for k in 0..m {
                let lo = k as f64 * step;
                acc += rule.integrate(lo, lo + step, |w| {
                    let v = g(w, t);
                    v + v.powf(pc)
                });
            }
        }
        if let Some(h) = h {
            let m = panels(h_window);
            let step = h_window / m as f64;
            for k in 0..m {
                let lo = k as f64 * step;
                acc += rule.integrate(-lo - step, -lo, |w| h(w, t).powf(pc));
                acc += rule.integrate(t + lo, t + lo + step, |w| h(w, t).powf(pc));
            }
        }
        if acc > worst.b {
            worst = HypothesisReport { b: acc, worst_t: t };
        }
    }
    worst
}

/// The normalized Moser density in log variables, `L^{-s/n}` on `[0, L]`
/// with `L = ln(1/r)`.
pub fn moser_profile(r: f64, n: usize, s: f64, m: usize) -> Result<Profile> {
    if !(r > 0.0 && r < 1.0) {
        return Err(domain("Moser profile needs 0 < r < 1"));
    }
    let big_l = -r.ln();
    Profile::constant(0.0, big_l, big_l.powf(-s / n as f64), m)
}
