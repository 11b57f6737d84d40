//! Variational construction of radial solutions of `(-Δ)^{n/2} u = e^{nu}`
//! with a point singularity at the origin.
//!
//! The solution is sought as
//! `u = w + p(r) + q(r^{-2}) + β ln r + (Λ/γ_n) u₀ + c_w`, where `w = v∘S`
//! and `v` minimizes
//! `I[v] = ½‖P_n^{1/2} v‖² + (Λ/γ_n) ∫ψ₀ v - (Λ/n) ln ∫ Q e^{nv}` over
//! zonal spectra on `S^n`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::conformal::{Chart, LogGrid, RadialField};
use crate::constants::{factorial_nm1, gamma_n, lambda_1, sphere_area};
use crate::error::{domain, Error, Result};
use crate::quadrature::{apply_stencil, central_stencil, gauss_legendre, trapezoid};
use crate::spectral::{synthesize_at, variant_multiplier, PaneitzVariant, ZonalBasis, ZonalSpectrum};

/// `Σ_k a_k r^{2k}` for `k = 1..=K`, no constant term.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RadialPolynomial {
    pub coeffs: Vec<f64>,
}

impl RadialPolynomial {
    /// Terms allowed in dimension `n`: the largest even degree not above `n - 1`.
    pub fn max_terms(n: usize) -> usize {
        (n - 1) / 2
    }

    pub fn new(coeffs: Vec<f64>, n: usize) -> Result<Self> {
        let p = Self { coeffs };
        p.validate(n)?;
        Ok(p)
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&a| a == 0.0)
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.coeffs.len() > Self::max_terms(n) {
            return Err(Error::Config(format!(
                "polynomial has degree {} but n = {n} allows at most {}",
                2 * self.coeffs.len(),
                2 * Self::max_terms(n)
            )));
        }
        if let Some(&a) = self.coeffs.last() {
            if a >= 0.0 {
                return Err(Error::Precondition(format!("leading coefficient {a} must be negative")));
            }
        }
        Ok(())
    }

    /// Value at `r² = r2`.
    pub fn eval_r2(&self, r2: f64) -> f64 {
        let mut acc = 0.0;
        for a in self.coeffs.iter().rev() {
            acc = (acc + a) * r2;
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    A,
    B,
}

/// Choice of the fixed profile `u₀`, equal to `-ln r` at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum U0Profile {
    /// `-½ ln(1 + r²)`; then `(-Δ)^{n/2} u₀ = ((n-1)!/2) J` and `ψ₀` is constant.
    #[default]
    LogBubble,
    /// `-χ(r) ln r` with a degree-7 `C³` cutoff on `[1/2, 1]` (`n = 4` only).
    Spline7,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "T")]
    pub t_max: f64,
    pub nodes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { t_max: 18.0, nodes: 4096 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptSpec {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial step of each backtracking search.
    pub step: f64,
}

impl Default for OptSpec {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 20000, step: 1.0 }
    }
}

fn default_l_max() -> usize {
    64
}

fn default_sphere_nodes() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    pub n: usize,
    pub lambda: f64,
    pub beta: f64,
    pub p: RadialPolynomial,
    #[serde(default)]
    pub q: RadialPolynomial,
    pub case: Case,
    #[serde(default = "default_l_max")]
    pub l_max: usize,
    #[serde(default = "default_sphere_nodes")]
    pub sphere_nodes: usize,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub opt: OptSpec,
    #[serde(default)]
    pub u0: U0Profile,
}

impl SolveRequest {
    /// Defaults with the given data.
    pub fn new(n: usize, lambda: f64, beta: f64, p: Vec<f64>, q: Vec<f64>, case: Case) -> Self {
        Self {
            n,
            lambda,
            beta,
            p: RadialPolynomial { coeffs: p },
            q: RadialPolynomial { coeffs: q },
            case,
            l_max: default_l_max(),
            sphere_nodes: default_sphere_nodes(),
            grid: GridSpec::default(),
            opt: OptSpec::default(),
            u0: U0Profile::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n < 3 {
            return Err(Error::Unsupported(format!("the solver needs n >= 3, got {n}")));
        }
        self.p.validate(n)?;
        self.q.validate(n)?;
        if self.p.is_zero() {
            return Err(Error::Precondition("p must tend to -∞ at infinity".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Precondition(format!("Λ = {} must be positive", self.lambda)));
        }
        match self.case {
            Case::B => {
                if !self.q.is_zero() {
                    return Err(Error::Precondition("case (b) requires q ≡ 0".into()));
                }
                if self.beta <= -1.0 {
                    return Err(Error::Precondition(format!("case (b) requires β > -1, got {}", self.beta)));
                }
                let cap = lambda_1(n) * (1.0 + self.beta);
                if self.lambda >= cap {
                    return Err(Error::Precondition(format!(
                        "case (b) requires Λ < Λ₁(1+β) = {cap}, got {}",
                        self.lambda
                    )));
                }
            }
            Case::A => {
                if self.q.is_zero() {
                    return Err(Error::Precondition("case (a) requires q with negative leading coefficient".into()));
                }
            }
        }
        if self.u0 == U0Profile::Spline7 && n != 4 {
            return Err(Error::Unsupported("the spline profile is built for n = 4".into()));
        }
        if !(self.grid.t_max > 0.0) || self.grid.nodes < 64 {
            return Err(Error::Config("grid needs T > 0 and at least 64 nodes".into()));
        }
        if !(self.opt.tol > 0.0 && self.opt.step > 0.0) {
            return Err(Error::Config("opt.tol and opt.step must be positive".into()));
        }
        Ok(())
    }

    fn kappa(&self) -> f64 {
        self.lambda / gamma_n(self.n)
    }

    /// `ln K(r)` with `q` clamped below `r = e^{-T}`.
    fn ln_k(&self, r: f64) -> f64 {
        let nf = self.n as f64;
        let rq = r.max((-self.grid.t_max).exp());
        let mut acc = self.p.eval_r2(r * r) + self.q.eval_r2(1.0 / (rq * rq)) + self.kappa() * u0_value(self.u0, r);
        if self.beta != 0.0 {
            acc += self.beta * r.ln();
        }
        nf * acc
    }
}

/// `S(x) = 35x⁴ - 84x⁵ + 70x⁶ - 20x⁷`, the `C³` step on `[0, 1]`.
const STEP: [f64; 8] = [0.0, 0.0, 0.0, 0.0, 35.0, -84.0, 70.0, -20.0];

/// Monomial coefficients in `r` of `S(2r - 1)`.
fn spline_monomials() -> [f64; 8] {
    let mut out = [0.0; 8];
    for (j, &s) in STEP.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        // (2r - 1)^j = Σ_i C(j,i) 2^i r^i (-1)^{j-i}
        let mut binom = 1.0;
        for i in 0..=j {
            let sign = if (j - i) % 2 == 0 { 1.0 } else { -1.0 };
            out[i] += s * binom * 2f64.powi(i as i32) * sign;
            binom = binom * (j - i) as f64 / (i + 1) as f64;
        }
    }
    out
}

/// `(r d/dr)^k χ(r)` on `[1/2, 1]`.
fn euler_derivative(c: &[f64; 8], k: u32, r: f64) -> f64 {
    let mut acc = 0.0;
    for i in (0..8).rev() {
        acc = acc * r + c[i] * (i as f64).powi(k as i32);
    }
    acc
}

fn chi(r: f64) -> f64 {
    if r <= 0.5 {
        0.0
    } else if r >= 1.0 {
        1.0
    } else {
        let x = 2.0 * r - 1.0;
        STEP.iter().rev().fold(0.0, |acc, s| acc * x + s)
    }
}

pub fn u0_value(profile: U0Profile, r: f64) -> f64 {
    match profile {
        U0Profile::LogBubble => -0.5 * (r * r).ln_1p(),
        U0Profile::Spline7 => -chi(r) * r.ln(),
    }
}

/// `φ₀ = (-Δ)^{n/2} u₀`.
pub fn phi0_value(profile: U0Profile, n: usize, r: f64) -> f64 {
    match profile {
        U0Profile::LogBubble => 0.5 * factorial_nm1(n) * (2.0 / (1.0 + r * r)).powi(n as i32),
        U0Profile::Spline7 => {
            if r <= 0.5 || r >= 1.0 {
                return 0.0;
            }
            // u₀ = t χ(e^{-t}) with t = -ln r, and r⁴Δ² = ∂_t⁴ - 4∂_t².
            let c = spline_monomials();
            let d = |k| euler_derivative(&c, k, r);
            let t = -r.ln();
            (8.0 * d(1) - 4.0 * d(3) - 4.0 * t * d(2) + t * d(4)) / r.powi(4)
        }
    }
}

/// `u₀`, `φ₀` on a log grid and the zonal spectrum of `ψ₀ = φ₀∘S / J`.
#[derive(Debug, Clone)]
pub struct U0Data {
    pub u0: RadialField,
    pub phi0: RadialField,
    pub psi0: ZonalSpectrum,
    /// `ψ₀` at the sphere nodes.
    pub psi0_samples: Vec<f64>,
    /// `∫ φ₀ dx`, checked against `γ_n`.
    pub phi0_integral: f64,
}

/// Relative tolerance on `∫ φ₀ = γ_n`.
pub const PHI0_MASS_TOL: f64 = 1e-6;

pub fn fix_u0(profile: U0Profile, n: usize, grid: &LogGrid, basis: &ZonalBasis) -> Result<U0Data> {
    if profile == U0Profile::Spline7 && n != 4 {
        return Err(Error::Unsupported("the spline profile is built for n = 4".into()));
    }
    let u0 = grid.field(n, |r| u0_value(profile, r));
    let phi0 = grid.field(n, |r| phi0_value(profile, n, r));
    let phi0_integral = match profile {
        U0Profile::Spline7 => {
            let rule = gauss_legendre(24);
            let area = sphere_area(n - 1);
            area * (0..8)
                .map(|k| {
                    let a = 0.5 + k as f64 / 16.0;
                    rule.integrate(a, a + 1.0 / 16.0, |r| phi0_value(profile, n, r) * r.powi(n as i32 - 1))
                })
                .sum::<f64>()
        }
        U0Profile::LogBubble => crate::conformal::radial_integral(&phi0, |_, v| v)?,
    };
    let g = gamma_n(n);
    if (phi0_integral - g).abs() > PHI0_MASS_TOL * g {
        return Err(Error::Construction(format!("∫φ₀ = {phi0_integral}, expected γ_n = {g}")));
    }
    let psi0_samples: Vec<f64> = basis
        .radii()
        .iter()
        .map(|&r| phi0_value(profile, n, r) / (2.0 / (1.0 + r * r)).powi(n as i32))
        .collect();
    let psi0 = basis.analyze(&psi0_samples);
    Ok(U0Data { u0, phi0, psi0, psi0_samples, phi0_integral })
}

/// `K(r) = r^{nβ} exp(n(p + q(r^{-2}) + (Λ/γ_n) u₀))` on the request's grid.
pub fn build_weight_k(req: &SolveRequest) -> Result<RadialField> {
    req.validate()?;
    let grid = LogGrid::new(req.grid.t_max, req.grid.nodes)?;
    let k = grid.field(req.n, |r| req.ln_k(r).exp());
    let alive = k.values.iter().filter(|&&v| v > 0.0).count();
    if alive * 10 < k.len() {
        return Err(Error::GridRange(format!(
            "K is representable on only {alive} of {} nodes; narrow T",
            k.len()
        )));
    }
    Ok(k)
}

/// The discretized sphere problem.
#[derive(Debug, Clone)]
pub struct SphereProblem {
    pub n: usize,
    pub lambda: f64,
    pub basis: ZonalBasis,
    /// `m_l` of `P_n`.
    pub mult: Vec<f64>,
    /// `ln Q` at the sphere nodes.
    pub ln_q: Vec<f64>,
    pub psi0: ZonalSpectrum,
    pub psi0_samples: Vec<f64>,
}

impl SphereProblem {
    pub fn new(req: &SolveRequest) -> Result<Self> {
        req.validate()?;
        let n = req.n;
        let basis = ZonalBasis::new(n, req.l_max, req.sphere_nodes)?;
        let grid = LogGrid::new(req.grid.t_max, req.grid.nodes)?;
        let u0 = fix_u0(req.u0, n, &grid, &basis)?;
        let nf = n as f64;
        let ln_q = basis
            .x
            .iter()
            .map(|&x| {
                let r = ((1.0 - x) / (1.0 + x)).sqrt();
                req.ln_k(r) - nf * (2.0 / (1.0 + r * r)).ln()
            })
            .collect();
        let mult = (0..=req.l_max).map(|l| variant_multiplier(PaneitzVariant::P2s, l, n, nf / 2.0)).collect();
        Ok(Self { n, lambda: req.lambda, basis, mult, ln_q, psi0: u0.psi0, psi0_samples: u0.psi0_samples })
    }

    fn kappa(&self) -> f64 {
        self.lambda / gamma_n(self.n)
    }

    /// Node samples, `ln ∫ Q e^{nv}` and the normalized density weights.
    fn state(&self, v: &ZonalSpectrum) -> State {
        let nf = self.n as f64;
        let samples = self.basis.synthesize_samples(v);
        let logs: Vec<f64> = samples
            .iter()
            .zip(&self.ln_q)
            .zip(&self.basis.w)
            .map(|((u, q), w)| w.ln() + q + nf * u)
            .collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|l| (l - m).exp()).sum();
        let lse = m + sum.ln();
        let pi = logs.iter().map(|l| (l - lse).exp()).collect();
        State { lse, pi }
    }
}

struct State {
    lse: f64,
    pi: Vec<f64>,
}

pub fn functional_i(v: &ZonalSpectrum, pr: &SphereProblem) -> f64 {
    let st = pr.state(v);
    functional_from(v, pr, &st)
}

fn functional_from(v: &ZonalSpectrum, pr: &SphereProblem, st: &State) -> f64 {
    let quad: f64 = v.coeffs.iter().zip(&pr.mult).map(|(c, m)| m * c * c).sum();
    0.5 * quad + pr.kappa() * pr.psi0.dot(v) - pr.lambda / pr.n as f64 * st.lse
}

pub fn gradient_i(v: &ZonalSpectrum, pr: &SphereProblem) -> ZonalSpectrum {
    gradient_from(v, pr, &pr.state(v))
}

fn gradient_from(v: &ZonalSpectrum, pr: &SphereProblem, st: &State) -> ZonalSpectrum {
    let dens: Vec<f64> = st.pi.iter().zip(&pr.basis.w).map(|(p, w)| p / w).collect();
    let proj = pr.basis.analyze(&dens);
    let kappa = pr.kappa();
    let mut g = ZonalSpectrum::zeros(pr.n, v.l_max());
    for l in 1..=v.l_max() {
        g.coeffs[l] = pr.mult[l] * v.coeffs[l] + kappa * pr.psi0.coeffs[l] - pr.lambda * proj.coeffs[l];
    }
    g
}

/// `I[v + a d] - I[v]` without subtracting large values.
fn delta_i(v: &ZonalSpectrum, d: &ZonalSpectrum, a: f64, d_samples: &[f64], pr: &SphereProblem, st: &State) -> f64 {
    let nf = pr.n as f64;
    let quad: f64 = (0..v.coeffs.len())
        .map(|l| 0.5 * pr.mult[l] * a * d.coeffs[l] * (2.0 * v.coeffs[l] + a * d.coeffs[l]))
        .sum();
    let lin = pr.kappa() * a * pr.psi0.dot(d);
    let excess: f64 = st.pi.iter().zip(d_samples).map(|(p, ds)| p * (nf * a * ds).exp_m1()).sum();
    quad + lin - pr.lambda / nf * excess.ln_1p()
}

/// Euler–Lagrange residual `max_j |B(v, φ_j)| / ‖φ_j‖`, where `B` is the
/// first variation evaluated directly from node quadrature.
pub fn euler_lagrange_residual(v: &ZonalSpectrum, pr: &SphereProblem, tests: &[ZonalSpectrum]) -> f64 {
    let nf = pr.n as f64;
    let samples = pr.basis.synthesize_samples(v);
    let dens: Vec<f64> = samples.iter().zip(&pr.ln_q).map(|(u, q)| (q + nf * u).exp()).collect();
    let total = pr.basis.integrate(&dens);
    tests
        .iter()
        .map(|phi| {
            let ps = pr.basis.synthesize_samples(phi);
            let quad: f64 = v.coeffs.iter().zip(&phi.coeffs).zip(&pr.mult).map(|((a, b), m)| m * a * b).sum();
            let lin: Vec<f64> = pr.psi0_samples.iter().zip(&ps).map(|(a, b)| a * b).collect();
            let nl: Vec<f64> = dens.iter().zip(&ps).map(|(a, b)| a * b).collect();
            let b = quad + pr.kappa() * pr.basis.integrate(&lin) - pr.lambda * pr.basis.integrate(&nl) / total;
            b.abs() / phi.l2_norm()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    /// Window in `ln r`.
    pub window: [f64; 2],
    pub points: usize,
}

/// Least-squares line through `(x, y)`.
pub fn fit_slope(x: &[f64], y: &[f64], window: [f64; 2]) -> SlopeFit {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let stderr = if x.len() > 2 { (sse / (m - 2.0) / sxx).sqrt() } else { f64::NAN };
    SlopeFit { slope, stderr, window, points: x.len() }
}

/// Assembled Euclidean solution on the log grid, component by component.
#[derive(Debug, Clone, Default)]
pub struct Profile {
    pub t: Vec<f64>,
    /// `w` including the zonal mean of the iterate.
    pub w: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub u0: Vec<f64>,
    pub beta: f64,
    pub kappa: f64,
    pub c_w: f64,
    pub ln_k: Vec<f64>,
}

impl Profile {
    pub fn u(&self, i: usize) -> f64 {
        self.w[i] + self.p[i] + self.q[i] - self.beta * self.t[i] + self.kappa * self.u0[i] + self.c_w
    }

    pub fn u_values(&self) -> Vec<f64> {
        (0..self.t.len()).map(|i| self.u(i)).collect()
    }

    /// Rows `t,r,u,w,K`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,r,u,w,K")?;
        for i in 0..self.t.len() {
            let t = self.t[i];
            writeln!(out, "{t:e},{:e},{:e},{:e},{:e}", (-t).exp(), self.u(i), self.w[i] + self.c_w, self.ln_k[i].exp())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    pub n: usize,
    pub lambda: f64,
    pub beta: f64,
    /// Minimizer in the mean-zero gauge.
    pub spectrum: ZonalSpectrum,
    pub c_w: f64,
    /// `∫ e^{nu}` by the Euclidean trapezoid rule.
    pub mass: f64,
    pub mass_rel_error: f64,
    /// Relative PDE residual for `n = 4`, Euler–Lagrange residual otherwise.
    pub residual_pde: f64,
    pub residual_kind: String,
    pub slope_origin: SlopeFit,
    pub slope_infinity: SlopeFit,
    pub i_value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: Vec<String>,
    pub u0_profile: U0Profile,
    pub phi0_convention: String,
    #[serde(skip)]
    pub profile: Profile,
}

fn gauge_norm(g: &ZonalSpectrum) -> f64 {
    g.coeffs[1..].iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Armijo constant and backtracking factor.
pub const ARMIJO_C: f64 = 1e-4;
pub const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-14;

/// Outcome of the descent loop.
struct Descent {
    v: ZonalSpectrum,
    iterations: usize,
    grad_norm: f64,
    converged: bool,
    diagnostics: Vec<String>,
}

fn descend(pr: &SphereProblem, req: &SolveRequest, init: ZonalSpectrum) -> Descent {
    let mut v = init;
    let mut diagnostics = Vec::new();
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    let mut it = 0;
    while it < req.opt.max_iter {
        let st = pr.state(&v);
        let g = gradient_from(&v, pr, &st);
        grad_norm = gauge_norm(&g);
        if grad_norm < req.opt.tol {
            converged = true;
            break;
        }
        let mut d = ZonalSpectrum::zeros(pr.n, v.l_max());
        for l in 1..=v.l_max() {
            d.coeffs[l] = -g.coeffs[l] / pr.mult[l];
        }
        let slope = g.dot(&d);
        let ds = pr.basis.synthesize_samples(&d);
        let mut a = req.opt.step;
        let accepted = loop {
            let di = delta_i(&v, &d, a, &ds, pr, &st);
            if di.is_finite() && di <= ARMIJO_C * a * slope {
                break Some(di);
            }
            a *= BACKTRACK;
            if a < MIN_STEP {
                break None;
            }
        };
        let Some(di) = accepted else {
            diagnostics.push(format!("line search failed at iteration {it} with gradient norm {grad_norm:.3e}"));
            break;
        };
        assert!(di <= 0.0, "descent step increased I by {di}");
        v.axpy(a, &d);
        it += 1;
    }
    if !converged && diagnostics.is_empty() {
        diagnostics.push(format!("stopped after {it} iterations with gradient norm {grad_norm:.3e}"));
    }
    Descent { v, iterations: it, grad_norm, converged, diagnostics }
}

/// Relative mass tolerance asserted at assembly.
pub const MASS_TOL: f64 = 1e-6;

pub fn minimize(req: &SolveRequest) -> Result<SolutionReport> {
    minimize_from(req, None)
}

/// Run the descent from `init` (zero by default); constants in `init` only
/// shift the gauge.
pub fn minimize_from(req: &SolveRequest, init: Option<ZonalSpectrum>) -> Result<SolutionReport> {
    let pr = SphereProblem::new(req)?;
    let init = init.unwrap_or_else(|| ZonalSpectrum::zeros(req.n, req.l_max));
    if init.n != req.n || init.l_max() != req.l_max {
        return Err(Error::Config("initial spectrum does not match n and l_max".into()));
    }
    let out = descend(&pr, req, init);
    let st = pr.state(&out.v);
    let i_value = functional_from(&out.v, &pr, &st);
    let profile = assemble(req, &out.v, st.lse)?;
    let n = req.n;
    let nf = n as f64;
    let h = 2.0 * req.grid.t_max / (req.grid.nodes - 1) as f64;
    let integrand: Vec<f64> = (0..profile.t.len())
        .map(|i| (profile.ln_k[i] + nf * (profile.w[i] + profile.c_w) - nf * profile.t[i]).exp())
        .collect();
    let mass = sphere_area(n - 1) * trapezoid(&integrand, h);
    let ends = sphere_area(n - 1) * (integrand[0] + integrand[integrand.len() - 1]);
    if !mass.is_finite() || ends > 1e-10 * mass {
        return Err(Error::GridRange(format!("mass integrand not resolved on the grid (end share {:.2e})", ends / mass)));
    }
    let mass_rel_error = (mass - req.lambda).abs() / req.lambda;
    let mut diagnostics = out.diagnostics;
    if mass_rel_error > MASS_TOL {
        diagnostics.push(format!("mass error {mass_rel_error:.2e} exceeds {MASS_TOL:.0e}"));
    }
    let (slope_origin, slope_infinity) = slopes(&profile, req.grid.t_max);
    let (residual_pde, residual_kind) = if n == 4 {
        (log_residual(&pde_fd_part(&profile), &profile.u_values(), &profile.t), "pde")
    } else {
        let tests: Vec<ZonalSpectrum> = (1..=req.l_max.min(20)).map(|l| ZonalSpectrum::unit(n, req.l_max, l)).collect();
        (euler_lagrange_residual(&out.v, &pr, &tests), "euler_lagrange")
    };
    let mut spectrum = out.v.clone();
    spectrum.coeffs[0] = 0.0;
    Ok(SolutionReport {
        n,
        lambda: req.lambda,
        beta: req.beta,
        spectrum,
        c_w: profile.c_w,
        mass,
        mass_rel_error,
        residual_pde,
        residual_kind: residual_kind.into(),
        slope_origin,
        slope_infinity,
        i_value,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
        converged: out.converged,
        diagnostics,
        u0_profile: req.u0,
        phi0_convention: "phi0 = (-Delta)^{n/2} u0".into(),
        profile,
    })
}

fn assemble(req: &SolveRequest, v: &ZonalSpectrum, lse: f64) -> Result<Profile> {
    let grid = LogGrid::new(req.grid.t_max, req.grid.nodes)?;
    let t = grid.ts();
    let xs: Vec<f64> = t.iter().map(|t| t.tanh()).collect();
    let w = synthesize_at(v, &xs);
    let rq_min = (-req.grid.t_max).exp();
    let p = t.iter().map(|t| req.p.eval_r2((-2.0 * t).exp())).collect();
    let q = t.iter().map(|t| req.q.eval_r2((2.0 * t).exp().min(1.0 / (rq_min * rq_min)))).collect();
    let u0 = t.iter().map(|t| u0_value(req.u0, (-t).exp())).collect();
    let ln_k = t.iter().map(|t| req.ln_k((-t).exp())).collect();
    let c_w = (req.lambda.ln() - lse) / req.n as f64;
    Ok(Profile { t, w, p, q, u0, beta: req.beta, kappa: req.kappa(), c_w, ln_k })
}

/// Fits of `u - q(r^{-2})` on `ln r ∈ [-0.9T, -0.6T]` and of `u - p` on
/// `ln r ∈ [0.6T, 0.9T]`.
pub fn slopes(pf: &Profile, t_max: f64) -> (SlopeFit, SlopeFit) {
    let fit = |lo: f64, hi: f64, drop: &dyn Fn(usize) -> f64| {
        let idx: Vec<usize> = (0..pf.t.len()).filter(|&i| (lo..=hi).contains(&-pf.t[i])).collect();
        let x: Vec<f64> = idx.iter().map(|&i| -pf.t[i]).collect();
        // Subtract the removed component exactly rather than computing u first.
        let y: Vec<f64> = idx.iter().map(|&i| pf.u(i) - drop(i)).collect();
        fit_slope(&x, &y, [lo, hi])
    };
    let inner = fit(-0.9 * t_max, -0.6 * t_max, &|i| pf.q[i]);
    let outer = fit(0.6 * t_max, 0.9 * t_max, &|i| pf.p[i]);
    (inner, outer)
}

/// Part of `u` not annihilated by `∂_t⁴ - 4∂_t²`: the kernel contains
/// `1, t, e^{±2t}`, so `r²`, `r^{-2}`, `ln r` and constants drop out.
fn pde_fd_part(pf: &Profile) -> Vec<f64> {
    if pf.p.len() != pf.t.len() {
        return Vec::new();
    }
    (0..pf.t.len()).map(|i| pf.w[i] + pf.kappa * pf.u0[i]).collect()
}

/// Annulus `|ln r| <= RESIDUAL_WINDOW` for the PDE residual.
pub const RESIDUAL_WINDOW: f64 = 6.0;
/// Node stride of the residual stencils.
pub const RESIDUAL_STRIDE: usize = 4;
const RESIDUAL_HALF: usize = 5;

/// `max |D_h f - e^{4u-4t}| / max e^{4u-4t}` over the annulus, with
/// `D = ∂_t⁴ - 4∂_t²` (`r⁴Δ²` in dimension four) applied to `f`, which must
/// differ from `u` by a function in the kernel of `D`.
pub fn log_residual(f: &[f64], u: &[f64], t: &[f64]) -> f64 {
    let h = (t[1] - t[0]).abs();
    let d4 = apply_stencil(f, &central_stencil(4, RESIDUAL_HALF), RESIDUAL_STRIDE, h, 4);
    let d2 = apply_stencil(f, &central_stencil(2, RESIDUAL_HALF), RESIDUAL_STRIDE, h, 2);
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for i in 0..t.len() {
        if t[i].abs() > RESIDUAL_WINDOW || d4[i].is_nan() {
            continue;
        }
        let rhs = (4.0 * u[i] - 4.0 * t[i]).exp();
        num = num.max((d4[i] - 4.0 * d2[i] - rhs).abs());
        den = den.max(rhs);
    }
    num / den
}

/// PDE residual of an assembled `n = 4` report.
pub fn verify_pde_residual(report: &SolutionReport) -> Result<f64> {
    if report.n != 4 {
        return Err(Error::Unsupported("the local PDE residual needs n = 4".into()));
    }
    let pf = &report.profile;
    if pf.t.is_empty() {
        return Err(domain("report carries no assembled profile"));
    }
    Ok(log_residual(&pde_fd_part(pf), &pf.u_values(), &pf.t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BubbleCheck {
    pub residual: f64,
    pub mass: f64,
    pub mass_expected: f64,
}

/// Residual and mass of the standard bubble with parameter `λ` in `n = 4`.
pub fn bubble_check(lambda: f64, grid: &LogGrid) -> Result<BubbleCheck> {
    if !(lambda > 0.0) {
        return Err(domain("bubble parameter must be positive"));
    }
    let u = crate::conformal::bubble(4, lambda, grid);
    let residual = log_residual(&u.values, &u.values, &u.grid);
    let mass = crate::conformal::mass(&u)?;
    Ok(BubbleCheck { residual, mass, mass_expected: lambda_1(4) })
}

impl SolutionReport {
    /// Field `u` on the log grid.
    pub fn u_field(&self) -> Result<RadialField> {
        RadialField::new(Chart::LogRadial, self.profile.t.clone(), self.profile.u_values(), self.n)
    }
}
